import math

import numpy as np
import pytest

from ruleplan.config import VehicleGeometry
from ruleplan.dynamics import (
    GlobalPose,
    ReferencePath,
    SingularityError,
    VehicleState,
    drift_f,
    estimate_path_geometry,
    frenet_to_global,
    project_to_path,
    rk4_step,
    update_reference_index,
)

GEOM = VehicleGeometry()


def straight_path(n=201, spacing=0.5, gamma=1.0):
    xs = np.arange(n) * spacing
    pts = np.stack([xs, np.zeros(n)], axis=1)
    return ReferencePath.from_points(pts, gamma=gamma)


class TestDrift:
    def test_straight_unit_speed(self):
        x = VehicleState(v=1.0).as_array()
        assert np.allclose(drift_f(x, 0.0, GEOM), [1, 0, 0, 0, 0, 0, 0], atol=1e-15)

    def test_zero_speed_freezes_pose_rates(self):
        x = VehicleState(v=0.0, delta=0.4).as_array()
        f = drift_f(x, 0.0, GEOM)
        assert np.allclose(f[:3], 0.0, atol=1e-15)

    def test_curvature_denominator(self):
        x = VehicleState(d=1.0, v=2.0).as_array()
        f = drift_f(x, 0.1, GEOM)
        assert f[0] == pytest.approx(2.0 / 0.9, abs=1e-12)

    def test_singularity_raises(self):
        x = VehicleState(d=10.0, v=1.0).as_array()
        with pytest.raises(SingularityError):
            drift_f(x, 0.1, GEOM)

    def test_beta_slip_angle(self):
        # d_dot = v sin(mu + beta), beta = atan(0.5 tan(delta)) for l_r = l_f
        x = VehicleState(v=3.0, delta=0.3).as_array()
        f = drift_f(x, 0.0, GEOM)
        beta = math.atan(0.5 * math.tan(0.3))
        assert f[1] == pytest.approx(3.0 * math.sin(beta), abs=1e-12)


class TestRk4:
    def test_straight_advance(self):
        x = VehicleState(v=2.0).as_array()
        x1 = rk4_step(x, np.zeros(2), 0.0, 0.1, GEOM)
        assert x1[0] == pytest.approx(0.2, abs=1e-15)
        assert np.allclose(x1[1:], x[1:], atol=1e-15)

    def test_double_integrator_subchain_exact(self):
        # v, a, u_jerk chain is polynomial of degree <= 2: RK4 is exact
        x = VehicleState(v=1.0, a=0.5).as_array()
        u = np.array([2.0, 0.0])
        dt = 0.37
        x1 = rk4_step(x, u, 0.0, dt, GEOM)
        assert x1[3] == pytest.approx(1.0 + 0.5 * dt + 2.0 * dt**2 / 2, abs=1e-12)
        assert x1[4] == pytest.approx(0.5 + 2.0 * dt, abs=1e-12)

    def test_local_order_five(self):
        # one big step vs two half steps, against a dt/10 reference
        x = VehicleState(d=0.2, mu=0.1, v=3.0, a=0.3, delta=0.1, omega=0.05).as_array()
        u = np.array([1.0, -0.5])
        kap = 0.02

        def integrate(steps, dt):
            y = x.copy()
            for _ in range(steps):
                y = rk4_step(y, u, kap, dt, GEOM)
            return y

        h = 0.2
        ref = integrate(100, h / 100)
        err_h = np.linalg.norm(integrate(1, h) - ref)
        err_h2 = np.linalg.norm(integrate(2, h / 2) - ref)
        # local truncation O(dt^5): halving dt gives ~2^4 global improvement
        assert err_h2 < err_h / 10


class TestReferenceIndex:
    def test_zero_distance_advances(self):
        path = straight_path(gamma=0.5)
        i = path.nearest_index((2.0, 0.0))
        assert update_reference_index((2.0, 0.0), path, i) == i + 1

    def test_far_point_resnaps_to_nearest(self):
        path = straight_path()
        # brute-force nearest oracle
        p = (33.3, 0.4)
        dists = np.linalg.norm(path.points - np.array(p), axis=1)
        assert update_reference_index(p, path, 0) == int(np.argmin(dists))

    def test_traversal_monotonic(self):
        # per-step motion >= point spacing: advances and resnaps only move forward
        path = straight_path(n=401, spacing=0.25, gamma=1.0)
        i = path.nearest_index((0.0, 0.0))
        xs = np.arange(0.0, 60.0, 0.4)
        prev = i
        for x in xs:
            i = update_reference_index((x, 0.0), path, i)
            assert i >= prev
            prev = i
        assert i > 200

    def test_never_far_from_global_nearest(self):
        path = straight_path(gamma=1.0)
        rng = np.random.default_rng(0)
        i = path.nearest_index((0.0, 0.0))
        x = 0.0
        for _ in range(300):
            x += rng.uniform(0.0, 0.45)
            p = (x, rng.uniform(-0.3, 0.3))
            i = update_reference_index(p, path, i)
            dists = np.linalg.norm(path.points - np.array(p), axis=1)
            assert dists[i] <= dists.min() + path.gamma + 1e-12


class TestFrenetGlobal:
    def test_on_path_point(self):
        path = straight_path()
        pose = frenet_to_global(VehicleState(s=5.0).as_array(), path, 10)
        assert (pose.x, pose.y) == (pytest.approx(5.0), pytest.approx(0.0))
        assert pose.theta == pytest.approx(0.0)

    def test_along_path_residual_carried(self):
        path = straight_path()
        pose = frenet_to_global(VehicleState(s=5.2).as_array(), path, 10)
        assert pose.x == pytest.approx(5.2)

    def test_unit_left_offset(self):
        path = straight_path()
        pose = frenet_to_global(VehicleState(d=1.0, mu=0.2).as_array(), path, 0)
        assert (pose.x, pose.y) == (pytest.approx(0.0), pytest.approx(1.0))
        assert pose.theta == pytest.approx(0.2)

    def test_round_trip_recovers_d(self):
        path = straight_path()
        for d in (-1.2, 0.0, 0.7):
            pose = frenet_to_global(VehicleState(s=20.0, d=d).as_array(), path, 40)
            _, _, d_back, mu_back = project_to_path(path, pose)
            assert d_back == pytest.approx(d, abs=1e-9)
            assert mu_back == pytest.approx(0.0, abs=1e-12)


class TestPathGeometry:
    def test_straight_line_zero_curvature(self):
        pts = np.stack([np.linspace(0, 10, 30), np.zeros(30)], axis=1)
        phi, kappa, arclen = estimate_path_geometry(pts)
        assert np.allclose(kappa, 0.0, atol=1e-12)
        assert np.allclose(phi, 0.0, atol=1e-12)
        assert arclen[-1] == pytest.approx(10.0)

    def test_circle_curvature(self):
        theta = np.linspace(0, np.pi, 200)
        pts = 10.0 * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        _, kappa, _ = estimate_path_geometry(pts, smooth=False)
        assert np.allclose(kappa[2:-2], 0.1, atol=1e-3)

    def test_reversed_order_flips_sign(self):
        theta = np.linspace(0, np.pi / 2, 60)
        pts = 5.0 * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        _, k_fwd, _ = estimate_path_geometry(pts, smooth=False)
        _, k_rev, _ = estimate_path_geometry(pts[::-1], smooth=False)
        assert np.allclose(k_fwd[5:-5], -k_rev[::-1][5:-5], atol=1e-9)

    def test_duplicate_points_rejected(self):
        with pytest.raises(ValueError):
            estimate_path_geometry(np.array([[0, 0], [0, 0], [1, 0]], dtype=float))


class TestInvariantsStraightRoad:
    def test_d_mu_constant_s_monotone(self):
        x = VehicleState(d=0.4, v=2.5).as_array()
        s_values = [x[0]]
        for _ in range(100):
            x = rk4_step(x, np.zeros(2), 0.0, 0.05, GEOM)
            s_values.append(x[0])
            assert x[1] == pytest.approx(0.4, abs=1e-12)
            assert x[2] == pytest.approx(0.0, abs=1e-12)
        assert all(b > a for a, b in zip(s_values, s_values[1:]))
