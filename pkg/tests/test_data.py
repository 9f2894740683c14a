import numpy as np
import pytest

from nasforge.data import DataSettings, batches, frame_difference_direction, generate_dataset


def make(seed=0, **kw):
    return generate_dataset(DataSettings(**kw), np.random.default_rng(seed), seed=seed)


class TestGenerator:
    def test_noise_free_direction_oracle(self):
        task = make(num_clips=200, noise=0.0)
        predicted = [frame_difference_direction(c) for c in task.clips]
        assert np.array_equal(predicted, task.labels)

    def test_noise_free_two_classes(self):
        task = make(num_clips=50, noise=0.0, num_classes=2)
        assert np.array_equal([frame_difference_direction(c, 2) for c in task.clips], task.labels)

    def test_balanced(self):
        assert np.bincount(make(num_clips=400).labels).tolist() == [100, 100, 100, 100]
        counts = np.bincount(make(num_clips=403).labels)
        assert counts.max() - counts.min() <= 1

    def test_shape(self):
        task = make(num_clips=6, frames=5, spatial=9, channels=2)
        assert task.clips.shape == (6, 2, 5, 9, 9) and len(task) == 6

    def test_deterministic(self):
        a, b = make(seed=7), make(seed=7)
        assert a.clips.tobytes() == b.clips.tobytes() and np.array_equal(a.labels, b.labels)
        assert make(seed=8).clips.tobytes() != a.clips.tobytes()

    def test_single_frame_carries_no_label(self):
        # per-frame brightness is the same blob whatever the direction
        task = make(num_clips=400, noise=0.0)
        mass = task.clips[:, :, 0].sum(axis=(1, 2, 3)) / task.clips[:, :, 0].max(axis=(1, 2, 3))
        by_class = [mass[task.labels == k].mean() for k in range(4)]
        assert max(by_class) - min(by_class) < 0.05 * np.mean(by_class)

    @pytest.mark.parametrize("kw", [dict(num_classes=3), dict(frames=3), dict(spatial=7),
                                    dict(num_clips=0), dict(noise=-0.1)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            make(**kw)


class TestSplitAndBatches:
    def test_split_sizes(self):
        train, held = make(num_clips=96).split(0.25)
        assert (len(train), len(held)) == (72, 24)

    def test_split_empty(self):
        with pytest.raises(ValueError):
            make(num_clips=4).split(0.01)

    def test_batches_cover_each_pass(self):
        it = batches(12, 4, np.random.default_rng(0))
        first = np.concatenate([next(it) for _ in range(3)])
        assert sorted(first.tolist()) == list(range(12))

    def test_batch_too_large(self):
        with pytest.raises(ValueError):
            next(batches(3, 4, np.random.default_rng(0)))
