import numpy as np
import pytest

from helpers import make_cloud, random_pose
from scenecast import scenes
from scenecast.errors import DataError
from scenecast.geometry import CameraIntrinsics, apply_pose
from scenecast.layers import INPAINTED
from scenecast.metrics import ssim
from scenecast.render import (SOFT, ZBUFFER, ForecastConfig, RenderConfig, SplatBuffer,
                              displace_cloud, forecast_frame, pull_push, refine_fuse,
                              screen_radius, splat)
from scenecast.simulator import render_ground_truth


def buffer(features, weight=None, coverage=None):
    f = np.asarray(features, dtype=np.float64)
    h, w = f.shape[:2]
    cov = np.ones((h, w), bool) if coverage is None else np.asarray(coverage, bool)
    wt = np.ones((h, w)) if weight is None else np.asarray(weight, np.float64)
    return SplatBuffer(f, np.where(cov, wt, 0.0), np.where(cov, 1.0, np.inf), cov,
                       np.where(cov, 0, -1))


def random_cloud(rng, n=400, C=3):
    x = np.column_stack([rng.uniform(-2, 2, n), rng.uniform(-2, 2, n), rng.uniform(1, 8, n)])
    return make_cloud(x, features=rng.uniform(size=(n, C)))


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(base_radius=0.0), dict(k_top=0), dict(compositing="alpha"),
                                    dict(radius_mode="linear")])
    def test_invalid(self, k100, kw):
        with pytest.raises(ValueError):
            RenderConfig(k100, **kw)


class TestDisplace:
    def test_zero_and_constant(self, rng):
        P = random_cloud(rng)
        np.testing.assert_array_equal(displace_cloud(P, np.zeros((len(P), 3))).positions, P.positions)
        Q = displace_cloud(P, np.tile([1.0, 2.0, 3.0], (len(P), 1)))
        np.testing.assert_allclose(Q.positions - P.positions, np.tile([1, 2, 3], (len(P), 1)), atol=1e-12)
        assert Q.features is P.features and Q.provenance is P.provenance

    def test_linearity(self, rng):
        P = random_cloud(rng)
        u, w = rng.normal(size=(2, len(P), 3))
        a = displace_cloud(displace_cloud(P, u), w).positions
        assert np.abs(a - displace_cloud(P, u + w).positions).max() < 1e-9

    def test_length_mismatch(self, rng):
        with pytest.raises(ValueError):
            displace_cloud(random_cloud(rng), np.zeros((3, 3)))


class TestSplat:
    def test_single_point_disc(self, k100):
        rc = RenderConfig(k100, base_radius=0.05, compositing=ZBUFFER)
        buf = splat(make_cloud([[0.0, 0.0, 2.0]], features=[[1, 0, 0]]), rc)
        v, u = np.mgrid[:101, :101]
        disc = (u - 50) ** 2 + (v - 50) ** 2 <= 2.5 ** 2
        np.testing.assert_array_equal(buf.coverage, disc)
        assert np.all(buf.depth[disc] == 2.0)
        np.testing.assert_array_equal(buf.features[disc], np.tile([1, 0, 0], (disc.sum(), 1)))

    @pytest.mark.parametrize("order", [(0, 1), (1, 0)])
    def test_nearest_point_wins(self, k100, order):
        x = np.array([[0, 0, 2.0], [0, 0, 3.0]])[list(order)]
        f = np.array([[1.0, 0, 0], [0, 1.0, 0]])[list(order)]
        buf = splat(make_cloud(x, features=f), RenderConfig(k100, compositing=ZBUFFER))
        np.testing.assert_array_equal(buf.features[50, 50], [1, 0, 0])
        assert buf.depth[50, 50] == 2.0

    def test_zbuffer_against_brute_force(self, rng):
        k = CameraIntrinsics(20.0, 20.0, 15.5, 11.5, 32, 24)
        rc = RenderConfig(k, compositing=ZBUFFER, base_radius=0.1)
        for _ in range(5):
            P = random_cloud(rng, 200)
            buf = splat(P, rc)
            x = P.positions
            u = k.fx * x[:, 0] / x[:, 2] + k.cx
            v = k.fy * x[:, 1] / x[:, 2] + k.cy
            r = screen_radius(x[:, 2], rc)
            for row in range(k.height):
                for col in range(k.width):
                    hit = np.nonzero((u - col) ** 2 + (v - row) ** 2 <= r ** 2)[0]
                    if hit.size == 0:
                        assert not buf.coverage[row, col]
                        continue
                    best = hit[np.lexsort((hit, x[hit, 2]))[0]]
                    np.testing.assert_array_equal(buf.features[row, col], P.features[best])

    def test_radius_doubles_when_depth_halves(self, k100):
        rc = RenderConfig(k100, min_radius_px=0.0)
        assert screen_radius(1.0, rc) == 2 * screen_radius(2.0, rc)
        lit = RenderConfig(k100, radius_mode="proportional", min_radius_px=0.0)
        assert screen_radius(2.0, lit) == 2 * screen_radius(1.0, lit)

    def test_soft_weights_are_normalised(self, rng):
        k = CameraIntrinsics(40.0, 40.0, 31.5, 23.5, 64, 48)
        P = random_cloud(rng, 2000)
        ones = make_cloud(P.positions, features=np.ones((len(P), 3)))
        buf = splat(ones, RenderConfig(k, compositing=SOFT, depth_gate=None))
        assert np.abs(buf.features[buf.coverage] - 1.0).max() < 1e-6
        assert np.all(buf.weight[buf.coverage] > 0)

    def test_soft_blends_close_depths(self, k100):
        x = np.array([[0, 0, 2.0], [0.001, 0, 2.01]])
        buf = splat(make_cloud(x, features=[[1, 0, 0], [0, 1, 0]]), RenderConfig(k100, base_radius=0.1))
        assert 0 < buf.features[50, 50, 1] < buf.features[50, 50, 0]

    def test_view_equivariance(self, rng, k100):
        P = random_cloud(rng)
        for _ in range(3):
            V = random_pose(rng, max_angle=0.1, scale=0.3)
            for mode in (SOFT, ZBUFFER):
                a = splat(P, RenderConfig(k100, target_view=V, compositing=mode))
                b = splat(P.with_positions(apply_pose(V, P.positions)), RenderConfig(k100, compositing=mode))
                for f in ("features", "weight", "depth", "coverage", "index"):
                    np.testing.assert_array_equal(getattr(a, f), getattr(b, f))

    def test_behind_camera_and_offscreen_culled(self, k100):
        x = np.array([[0, 0, -1.0], [100, 0, 1.0], [0, 0, 5.0]])
        buf = splat(make_cloud(x), RenderConfig(k100))
        assert buf.culled == 2 and buf.coverage.any()

    def test_layered_inpainted_points_only_fill(self, k100):
        x = np.array([[0, 0, 5.0], [0, 0, 4.0], [0.5, 0, 4.0]])
        prov = [0, INPAINTED, INPAINTED]
        P = make_cloud(x, features=[[1, 0, 0], [0, 1, 0], [0, 0, 1]], provenance=prov)
        buf = splat(P, RenderConfig(k100, base_radius=0.1, compositing=ZBUFFER))
        np.testing.assert_array_equal(buf.features[50, 50], [1, 0, 0])
        np.testing.assert_array_equal(buf.features[50, 60], [0, 0, 1])
        flat = splat(P, RenderConfig(k100, base_radius=0.1, compositing=ZBUFFER, layered=False))
        np.testing.assert_array_equal(flat.features[50, 50], [0, 1, 0])

    def test_thread_count_bit_identical(self, rng, k100):
        P = random_cloud(rng, 3000)
        a = splat(P, RenderConfig(k100, threads=1))
        b = splat(P, RenderConfig(k100, threads=8))
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.index, b.index)


class TestFuse:
    def test_identical_buffers(self, rng):
        f = rng.uniform(size=(6, 7, 3))
        out = refine_fuse(buffer(f), buffer(f))
        np.testing.assert_allclose(out.rgb, f, atol=1e-12)
        assert out.covered.all()

    def test_curr_only_pixel(self):
        prev = buffer(np.zeros((3, 3, 3)), coverage=np.eye(3) == 0)
        curr = buffer(np.full((3, 3, 3), 0.8))
        out = refine_fuse(prev, curr)
        assert np.all(out.rgb[1, 1] == 0.8) and out.source[1, 1] == 1

    def test_alpha_blend(self):
        out = refine_fuse(buffer(np.zeros((2, 2, 3))), buffer(np.ones((2, 2, 3))))
        np.testing.assert_allclose(out.rgb, 0.7, atol=1e-12)

    def test_isolated_hole_uniform(self):
        cov = np.ones((9, 9), bool)
        cov[4, 4] = False
        out = refine_fuse(buffer(np.full((9, 9, 3), 0.3), coverage=cov),
                          buffer(np.full((9, 9, 3), 0.3), coverage=cov))
        np.testing.assert_allclose(out.rgb[4, 4], 0.3, atol=1e-12)
        assert out.source[4, 4] == -1

    def test_hole_fill_leaves_covered_pixels(self, rng):
        cov = rng.uniform(size=(16, 16)) > 0.4
        f = rng.uniform(size=(16, 16, 3))
        out = refine_fuse(buffer(np.zeros((16, 16, 3)), coverage=np.zeros((16, 16), bool)),
                          buffer(f, coverage=cov))
        np.testing.assert_allclose(out.rgb[cov], f[cov], atol=1e-12)

    def test_clamped(self):
        out = refine_fuse(buffer(np.full((2, 2, 3), 1.5)), buffer(np.full((2, 2, 3), -0.5)))
        assert out.rgb.min() >= 0 and out.rgb.max() <= 1

    def test_both_empty(self):
        empty = buffer(np.zeros((2, 2, 3)), coverage=np.zeros((2, 2), bool))
        with pytest.raises(DataError):
            refine_fuse(empty, empty)

    def test_pull_push_uniform(self, rng):
        valid = rng.uniform(size=(13, 11)) > 0.7
        np.testing.assert_allclose(pull_push(np.full((13, 11), 2.5), valid), 2.5, atol=1e-12)


class TestRollout:
    def test_static_camera_static_scene(self):
        spec = scenes.street_scene(speed=0.0, yaw_deg=0.0, frames=3)
        f = [render_ground_truth(spec, i) for i in range(3)]
        st = forecast_frame(f[0].as_frame(), f[1].as_frame(), ForecastConfig(spec.intrinsics), 1)
        assert ssim(st[0].rgb, f[1].rgb) >= 0.99

    def test_translating_camera_one_step(self, static_spec):
        f = [render_ground_truth(static_spec, i) for i in (3, 4, 5)]
        st = forecast_frame(f[0].as_frame(), f[1].as_frame(), ForecastConfig(static_spec.intrinsics), 1)
        assert ssim(st[0].rgb, f[2].rgb) >= 0.95

    def test_horizon_five_emits_five_frames(self, dynamic_frames, dynamic_spec):
        steps = forecast_frame(dynamic_frames[0].as_frame(), dynamic_frames[1].as_frame(),
                               ForecastConfig(dynamic_spec.intrinsics), 5)
        assert [s.step for s in steps] == [1, 2, 3, 4, 5]
        assert all(s.rgb.shape == dynamic_frames[0].rgb.shape for s in steps)

    def test_horizon_must_be_positive(self, dynamic_frames, dynamic_spec):
        with pytest.raises(ValueError):
            forecast_frame(dynamic_frames[0].as_frame(), dynamic_frames[1].as_frame(),
                           ForecastConfig(dynamic_spec.intrinsics), 0)
