"""Synthetic sequences, serialization, and training-window construction."""

import warnings

import numpy as np
import pytest

from memtrack3d.data.samples import is_rigid, make_training_samples
from memtrack3d.data.synthetic import (
    Sequence,
    SynthConfig,
    generate_sequence,
    load_dataset,
    load_sequence_dir,
    save_dataset,
    save_sequence_dir,
)
from memtrack3d.geometry import Box3D, points_in_box


class TestGenerate:
    def test_same_seed_bitwise_identical(self):
        cfg = SynthConfig(seed=7, distractors=2, occlusion=(0.0, 0.4))
        a = generate_sequence(cfg, 10)
        b = generate_sequence(cfg, 10)
        for fa, fb in zip(a.frames, b.frames):
            np.testing.assert_array_equal(fa, fb)
        assert a.gt_boxes == b.gt_boxes

    def test_different_seeds_differ(self):
        a = generate_sequence(SynthConfig(seed=1), 5)
        b = generate_sequence(SynthConfig(seed=2), 5)
        assert not np.array_equal(a.frames[0], b.frames[0])

    def test_clean_frames_have_exact_in_box_count(self):
        cfg = SynthConfig(
            seed=3, occlusion=(0.0,), noise_std=0.0, distractors=3, points_per_frame=150
        )
        seq = generate_sequence(cfg, 8)
        for frame, box in zip(seq.frames, seq.gt_boxes):
            inside = points_in_box(frame, box)
            assert int(inside.sum()) == 150

    def test_noisy_frames_keep_most_points_in_box(self):
        cfg = SynthConfig(seed=4, noise_std=0.01, distractors=0, points_per_frame=200)
        seq = generate_sequence(cfg, 6)
        for frame, box in zip(seq.frames, seq.gt_boxes):
            grown = Box3D(box.center, tuple(np.asarray(box.size) + 0.2), box.heading)
            assert points_in_box(frame, grown).mean() > 0.99

    def test_occlusion_drops_points(self):
        base = SynthConfig(seed=5, occlusion=(0.0,), distractors=0, noise_std=0.0)
        occluded = SynthConfig(seed=5, occlusion=(0.6,), distractors=0, noise_std=0.0)
        full = generate_sequence(base, 4)
        occ = generate_sequence(occluded, 4)
        for f_full, f_occ in zip(full.frames, occ.frames):
            assert f_occ.shape[0] < f_full.shape[0]

    def test_occlusion_schedule_cycles(self):
        cfg = SynthConfig(seed=6, occlusion=(0.0, 0.8), distractors=0, noise_std=0.0)
        seq = generate_sequence(cfg, 6)
        counts = [f.shape[0] for f in seq.frames]
        assert counts[0] > counts[1]
        assert counts[2] > counts[3]

    def test_boxes_contain_a_point_under_partial_occlusion(self):
        cfg = SynthConfig(seed=8, occlusion=(0.9,), distractors=1)
        seq = generate_sequence(cfg, 6)
        for frame, box in zip(seq.frames, seq.gt_boxes):
            grown = Box3D(box.center, tuple(np.asarray(box.size) + 0.2), box.heading)
            assert points_in_box(frame, grown).sum() >= 1

    def test_pedestrian_template(self):
        cfg = SynthConfig(template="pedestrian", seed=1, distractors=0, noise_std=0.0)
        seq = generate_sequence(cfg, 5)
        assert seq.category == "pedestrian"
        r = seq.gt_boxes[0].w / 2
        local = seq.frames[0] - seq.gt_boxes[0].center_array()
        rho = np.hypot(local[:, 0], local[:, 1])
        assert np.all(rho <= r + 1e-9)

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            generate_sequence(SynthConfig(), 1)
        with pytest.raises(ValueError):
            SynthConfig(template="boat")
        with pytest.raises(ValueError):
            SynthConfig(occlusion=(1.5,))


class TestSerialization:
    def test_directory_roundtrip(self, tmp_path):
        seq = generate_sequence(SynthConfig(seed=9, distractors=1), 6)
        save_sequence_dir(seq, tmp_path / "s0")
        loaded = load_sequence_dir(tmp_path / "s0")
        assert loaded.category == seq.category
        assert loaded.id == seq.id
        assert len(loaded.frames) == 6
        for fa, fb in zip(seq.frames, loaded.frames):
            np.testing.assert_allclose(fa, fb, atol=1e-6)  # float32 on disk
        for ba, bb in zip(seq.gt_boxes, loaded.gt_boxes):
            assert ba == bb  # text encoding is exact for float64

    def test_dataset_roundtrip_sorted(self, tmp_path):
        seqs = [
            generate_sequence(SynthConfig(seed=s, template=t), 5)
            for s, t in ((1, "car"), (2, "pedestrian"))
        ]
        save_dataset(seqs, tmp_path / "data")
        loaded = load_dataset(tmp_path / "data")
        assert [s.id for s in loaded] == sorted(s.id for s in seqs)

    def test_missing_dataset(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "empty")


class TestTrainingSamples:
    def seq(self, n):
        rng = np.random.default_rng(0)
        return Sequence(
            frames=[rng.normal(size=(20, 3)) for _ in range(n)],
            gt_boxes=[Box3D((i, 0, 0), (1, 2, 1), 0.0) for i in range(n)],
            category="car",
            id="test",
        )

    def test_exact_window(self):
        samples = make_training_samples(self.seq(8), sample_len=8)
        assert len(samples) == 1
        assert samples[0].start == 0

    def test_window_count_stride_one(self):
        samples = make_training_samples(self.seq(10), sample_len=8, stride=1)
        assert [s.start for s in samples] == [0, 1, 2]

    def test_supervised_frame_count(self):
        samples = make_training_samples(self.seq(9), sample_len=8)
        assert all(len(s.frames) - 1 == 7 for s in samples)

    def test_short_sequence_warns_and_skips(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            samples = make_training_samples(self.seq(5), sample_len=8)
        assert samples == []
        assert any("shorter" in str(w.message) for w in caught)

    def test_rigidity_classification(self):
        assert is_rigid("car")
        assert is_rigid("Van")
        assert not is_rigid("pedestrian")
        assert not is_rigid("Cyclist")
