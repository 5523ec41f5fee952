"""KITTI tracking ingestion against a hand-authored two-frame fixture.

The fixture calibration is a pure axis permutation (x_cam = -y_velo,
y_cam = -z_velo, z_cam = x_velo) with identity rectification, so expected
LiDAR-frame boxes can be written down by hand:

    velo_center = (z_cam, -x_cam, -y_cam) lifted by h/2 in z
    velo_yaw    = -rotation_y - pi/2
"""

import math

import numpy as np
import pytest

from memtrack3d.data.kitti import (
    LabelFormatError,
    MissingFrameError,
    UnknownTrackError,
    load_kitti_tracklet,
    parse_calib_file,
    parse_label_file,
    read_velodyne,
    write_velodyne,
)
from memtrack3d.geometry import Box3D

CALIB_TEXT = """P0: 700 0 600 0 0 700 200 0 0 0 1 0
P1: 700 0 600 0 0 700 200 0 0 0 1 0
P2: 700 0 600 0 0 700 200 0 0 0 1 0
P3: 700 0 600 0 0 700 200 0 0 0 1 0
R_rect 1 0 0 0 1 0 0 0 1
Tr_velo_cam 0 -1 0 0 0 0 -1 0 1 0 0 0
Tr_imu_velo 1 0 0 0 0 1 0 0 0 0 1 0
"""

LABEL_TEXT = (
    "0 1 Car 0 0 -1.2 500 150 560 190 2.0 1.5 4.0 2.0 1.0 10.0 "
    "-1.5707963267948966\n"
    "1 1 Car 0 0 -1.2 505 150 565 190 2.0 1.5 4.0 2.0 1.0 11.0 "
    "3.141592653589793\n"
    "0 2 Pedestrian 0 1 0.4 300 140 320 200 1.7 0.6 0.7 -3.0 1.2 8.0 0.0\n"
    "1 2 Pedestrian 0 1 0.4 300 140 320 200 1.7 0.6 0.7 -3.0 1.2 8.5 0.0\n"
    "3 2 Pedestrian 0 1 0.4 300 140 320 200 1.7 0.6 0.7 -3.0 1.2 9.5 0.0\n"
)


@pytest.fixture
def fixture_dir(tmp_path):
    velo = tmp_path / "velodyne"
    velo.mkdir()
    rng = np.random.default_rng(0)
    for frame in range(4):
        quads = rng.normal(size=(50, 4)).astype(np.float32)
        write_velodyne(velo / f"{frame:06d}.bin", quads)
    (tmp_path / "calib.txt").write_text(CALIB_TEXT)
    (tmp_path / "label.txt").write_text(LABEL_TEXT)
    return tmp_path


class TestVelodyneIO:
    def test_bytes_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        quads = rng.normal(size=(37, 4)).astype(np.float32)
        path = tmp_path / "scan.bin"
        write_velodyne(path, quads)
        source = path.read_bytes()
        parsed = read_velodyne(path)
        write_velodyne(path, parsed)
        assert path.read_bytes() == source
        np.testing.assert_array_equal(parsed, quads)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFrameError):
            read_velodyne(tmp_path / "000099.bin")

    def test_bad_size(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"\x00" * 10)
        with pytest.raises(Exception):
            read_velodyne(path)


class TestLabelParsing:
    def test_field_mapping(self, fixture_dir):
        labels = parse_label_file(fixture_dir / "label.txt")
        first = labels[0]
        assert (first.frame, first.track_id, first.type) == (0, 1, "Car")
        assert (first.h, first.w, first.l) == (2.0, 1.5, 4.0)
        assert (first.x, first.y, first.z) == (2.0, 1.0, 10.0)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "label.txt"
        path.write_text("0 1 Car 0 0\n")
        with pytest.raises(LabelFormatError):
            parse_label_file(path)

    def test_non_numeric_field(self, tmp_path):
        path = tmp_path / "label.txt"
        path.write_text(
            "0 1 Car 0 0 -1.2 500 150 560 190 2.0 1.5 4.0 2.0 abc 10.0 0.0\n"
        )
        with pytest.raises(LabelFormatError):
            parse_label_file(path)


class TestTrackletAssembly:
    def test_known_boxes_exact(self, fixture_dir):
        seq = load_kitti_tracklet(
            fixture_dir / "velodyne",
            fixture_dir / "label.txt",
            fixture_dir / "calib.txt",
            track_id=1,
        )
        assert len(seq.frames) == 2
        assert seq.category == "car"
        expect0 = Box3D((10.0, -2.0, 0.0), (1.5, 4.0, 2.0), 0.0)
        expect1 = Box3D((11.0, -2.0, 0.0), (1.5, 4.0, 2.0), math.pi / 2)
        got0, got1 = seq.gt_boxes
        np.testing.assert_allclose(got0.center, expect0.center, atol=1e-12)
        np.testing.assert_allclose(got0.heading, expect0.heading, atol=1e-12)
        assert got0.size == expect0.size
        np.testing.assert_allclose(got1.center, expect1.center, atol=1e-12)
        np.testing.assert_allclose(got1.heading, expect1.heading, atol=1e-12)

    def test_size_field_order(self, fixture_dir):
        # label order is h w l; the box stores (w, l, h)
        seq = load_kitti_tracklet(
            fixture_dir / "velodyne",
            fixture_dir / "label.txt",
            fixture_dir / "calib.txt",
            track_id=1,
        )
        assert seq.gt_boxes[0].size == (1.5, 4.0, 2.0)

    def test_bottom_center_lifted(self, fixture_dir):
        seq = load_kitti_tracklet(
            fixture_dir / "velodyne",
            fixture_dir / "label.txt",
            fixture_dir / "calib.txt",
            track_id=1,
        )
        # y_cam = 1.0 maps to z_velo = -1.0; plus h/2 = 1.0 gives 0.0
        assert seq.gt_boxes[0].center[2] == pytest.approx(0.0, abs=1e-12)

    def test_contiguous_run_stops_at_gap(self, fixture_dir):
        seq = load_kitti_tracklet(
            fixture_dir / "velodyne",
            fixture_dir / "label.txt",
            fixture_dir / "calib.txt",
            track_id=2,
        )
        assert len(seq.frames) == 2  # frames 0 and 1; frame 3 is beyond the gap

    def test_unknown_track(self, fixture_dir):
        with pytest.raises(UnknownTrackError):
            load_kitti_tracklet(
                fixture_dir / "velodyne",
                fixture_dir / "label.txt",
                fixture_dir / "calib.txt",
                track_id=99,
            )

    def test_missing_frame_file(self, fixture_dir):
        (fixture_dir / "velodyne" / "000001.bin").unlink()
        with pytest.raises(MissingFrameError):
            load_kitti_tracklet(
                fixture_dir / "velodyne",
                fixture_dir / "label.txt",
                fixture_dir / "calib.txt",
                track_id=1,
            )

    def test_points_drop_intensity(self, fixture_dir):
        seq = load_kitti_tracklet(
            fixture_dir / "velodyne",
            fixture_dir / "label.txt",
            fixture_dir / "calib.txt",
            track_id=1,
        )
        assert seq.frames[0].shape == (50, 3)


class TestCalibParsing:
    def test_permutation_matrices(self, fixture_dir):
        rect, velo_to_cam = parse_calib_file(fixture_dir / "calib.txt")
        np.testing.assert_array_equal(rect, np.eye(4))
        p_velo = np.array([1.0, 2.0, 3.0, 1.0])
        p_cam = velo_to_cam @ p_velo
        np.testing.assert_allclose(p_cam[:3], [-2.0, -3.0, 1.0])

    def test_colon_keys_accepted(self, tmp_path):
        text = CALIB_TEXT.replace("R_rect", "R_rect:").replace(
            "Tr_velo_cam", "Tr_velo_cam:"
        )
        path = tmp_path / "calib.txt"
        path.write_text(text)
        rect, _ = parse_calib_file(path)
        np.testing.assert_array_equal(rect, np.eye(4))

    def test_missing_entries(self, tmp_path):
        path = tmp_path / "calib.txt"
        path.write_text("P0: 1 0 0 0 0 1 0 0 0 0 1 0\n")
        with pytest.raises(Exception):
            parse_calib_file(path)
