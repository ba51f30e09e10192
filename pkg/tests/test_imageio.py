import numpy as np
import pytest

from helpers import random_pose
from scenecast import imageio
from scenecast.errors import DataError


class TestPPM:
    def test_round_trip_quantises_to_8_bits(self, tmp_path, rng):
        img = rng.uniform(size=(7, 5, 3)).astype(np.float32)
        imageio.write_ppm(tmp_path / "a.ppm", img)
        back = imageio.read_ppm(tmp_path / "a.ppm")
        assert back.shape == (7, 5, 3)
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-6

    def test_exact_for_8_bit_values(self, tmp_path, rng):
        img = (rng.integers(0, 256, size=(4, 6, 3)) / 255.0).astype(np.float32)
        imageio.write_ppm(tmp_path / "a.ppm", img)
        np.testing.assert_array_equal(imageio.read_ppm(tmp_path / "a.ppm"), img)

    def test_header_comments_are_skipped(self, tmp_path):
        path = tmp_path / "c.ppm"
        path.write_bytes(b"P6\n# made by hand\n2 1\n255\n" + bytes([255, 0, 0, 0, 0, 255]))
        img = imageio.read_ppm(path)
        np.testing.assert_array_equal(img[0, 0], [1, 0, 0])
        np.testing.assert_array_equal(img[0, 1], [0, 0, 1])

    def test_wrong_magic_and_truncation(self, tmp_path):
        (tmp_path / "x.ppm").write_bytes(b"P3\n1 1\n255\n0 0 0\n")
        with pytest.raises(DataError):
            imageio.read_ppm(tmp_path / "x.ppm")
        (tmp_path / "t.ppm").write_bytes(b"P6\n4 4\n255\n" + bytes(10))
        with pytest.raises(DataError):
            imageio.read_ppm(tmp_path / "t.ppm")

    def test_needs_three_channels(self, tmp_path):
        with pytest.raises(ValueError):
            imageio.write_ppm(tmp_path / "a.ppm", np.zeros((2, 2)))


class TestPGM:
    def test_round_trip_8_and_16_bit(self, tmp_path, rng):
        a = rng.integers(0, 256, size=(5, 9))
        imageio.write_pgm(tmp_path / "a.pgm", a)
        np.testing.assert_array_equal(imageio.read_pgm(tmp_path / "a.pgm"), a)
        b = rng.integers(0, 65536, size=(5, 9))
        imageio.write_pgm(tmp_path / "b.pgm", b)
        np.testing.assert_array_equal(imageio.read_pgm(tmp_path / "b.pgm"), b)

    def test_mask_round_trip(self, tmp_path, rng):
        m = (rng.uniform(size=(6, 4)) > 0.5).astype(np.float32)
        imageio.write_mask_pgm(tmp_path / "m.pgm", m)
        np.testing.assert_array_equal(imageio.read_mask_pgm(tmp_path / "m.pgm")[:, :, 0], m)


class TestPFM:
    @pytest.mark.parametrize("channels", [1, 3])
    def test_round_trip_is_bit_exact(self, tmp_path, rng, channels):
        img = rng.normal(size=(6, 4, channels)).astype(np.float32)
        imageio.write_pfm(tmp_path / "a.pfm", img)
        np.testing.assert_array_equal(imageio.read_pfm(tmp_path / "a.pfm"), img)

    def test_rows_stored_bottom_up(self, tmp_path):
        img = np.array([[1.0], [2.0]], dtype=np.float32)
        imageio.write_pfm(tmp_path / "a.pfm", img)
        raw = (tmp_path / "a.pfm").read_bytes()
        body = np.frombuffer(raw[-8:], dtype="<f4")
        np.testing.assert_array_equal(body, [2.0, 1.0])

    def test_big_endian_files_are_read(self, tmp_path):
        data = np.array([3.5, -1.0], dtype=">f4").tobytes()
        (tmp_path / "b.pfm").write_bytes(b"Pf\n2 1\n1.0\n" + data)
        np.testing.assert_array_equal(imageio.read_pfm(tmp_path / "b.pfm")[0, :, 0], [3.5, -1.0])

    def test_bad_tag(self, tmp_path):
        (tmp_path / "x.pfm").write_bytes(b"P6\n1 1\n255\n\0\0\0")
        with pytest.raises(DataError):
            imageio.read_pfm(tmp_path / "x.pfm")


class TestBinaryRecords:
    def test_corr_round_trip(self, tmp_path, rng):
        ids = rng.integers(0, 20, size=(3, 4))
        local = rng.normal(size=(3, 4, 3)).astype(np.float32)
        imageio.write_corr(tmp_path / "c.bin", ids, local)
        assert (tmp_path / "c.bin").stat().st_size == 12 * 14
        ids2, local2 = imageio.read_corr(tmp_path / "c.bin", 4, 3)
        np.testing.assert_array_equal(ids2, ids)
        np.testing.assert_array_equal(local2, local)

    def test_corr_size_mismatch(self, tmp_path):
        imageio.write_corr(tmp_path / "c.bin", np.zeros((2, 2), int), np.zeros((2, 2, 3)))
        with pytest.raises(DataError):
            imageio.read_corr(tmp_path / "c.bin", 3, 2)

    def test_flow_round_trip(self, tmp_path, rng):
        flow = rng.normal(size=(17, 3)).astype(np.float32)
        imageio.write_flow(tmp_path / "f.bin", flow)
        assert (tmp_path / "f.bin").stat().st_size == 4 + 17 * 12
        np.testing.assert_array_equal(imageio.read_flow(tmp_path / "f.bin"), flow)

    def test_flow_truncated(self, tmp_path):
        imageio.write_flow(tmp_path / "f.bin", np.zeros((4, 3)))
        data = (tmp_path / "f.bin").read_bytes()
        (tmp_path / "f.bin").write_bytes(data[:-4])
        with pytest.raises(DataError):
            imageio.read_flow(tmp_path / "f.bin")

    def test_poses_round_trip(self, tmp_path, rng):
        poses = [random_pose(rng) for _ in range(5)]
        imageio.write_poses(tmp_path / "p.txt", poses)
        back = imageio.read_poses(tmp_path / "p.txt")
        for a, b in zip(poses, back):
            np.testing.assert_array_equal(a.q, b.q)
            np.testing.assert_array_equal(a.t, b.t)


def test_natural_key_orders_numbers():
    names = ["frame_10.ppm", "frame_2.ppm", "frame_1.ppm"]
    assert sorted(names, key=imageio.natural_key) == ["frame_1.ppm", "frame_2.ppm", "frame_10.ppm"]
