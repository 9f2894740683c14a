"""Synthetic moving-blob video clips for desk-scale search and training.

Each clip shows one bright Gaussian blob sliding in a straight line; the
class is the direction of motion.  A single frame carries no label
information, so only temporal kernels (or later mixing) can solve the task.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

GENERATOR_RULE = "moving-blob-v1"
# class index -> (dy, dx) per frame, in rows/columns
DIRECTIONS = ((0, 1), (0, -1), (1, 0), (-1, 0))   # right, left, down, up
DIRECTION_NAMES = ("right", "left", "down", "up")
BLOB_SIGMA = 1.2
MIN_SPATIAL = 8
MIN_FRAMES = 4


@dataclass(frozen=True)
class DataSettings:
    num_clips: int = 96
    frames: int = 8
    spatial: int = 16
    num_classes: int = 4
    noise: float = 0.1
    channels: int = 3

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticVideoTask:
    clips: np.ndarray      # N x C x T x S x S
    labels: np.ndarray     # N
    rule: str
    seed: int | None

    def __len__(self) -> int:
        return len(self.labels)

    def split(self, holdout: float) -> tuple["SyntheticVideoTask", "SyntheticVideoTask"]:
        """Leading/trailing split; clips are already shuffled at generation."""
        n_hold = int(round(len(self) * holdout))
        if not 0 < n_hold < len(self):
            raise ValueError(f"holdout fraction {holdout} leaves an empty split")
        cut = len(self) - n_hold
        return (SyntheticVideoTask(self.clips[:cut], self.labels[:cut], self.rule, self.seed),
                SyntheticVideoTask(self.clips[cut:], self.labels[cut:], self.rule, self.seed))


def _blob(spatial: int, cy: float, cx: float) -> np.ndarray:
    r = np.arange(spatial)
    return np.exp(-((r[:, None] - cy) ** 2 + (r[None, :] - cx) ** 2) / (2 * BLOB_SIGMA ** 2))


def generate_dataset(settings: DataSettings, rng: np.random.Generator, seed: int | None = None) -> SyntheticVideoTask:
    """Balanced clips (class counts differ by at most one) plus Gaussian noise."""
    s, t, k = settings.spatial, settings.frames, settings.num_classes
    if k not in (2, 4):
        raise ValueError(f"num_classes must be 2 or 4, got {k}")
    if t < MIN_FRAMES:
        raise ValueError(f"need at least {MIN_FRAMES} frames, got {t}")
    if s < MIN_SPATIAL:
        raise ValueError(f"spatial size {s} is too small for the blob (minimum {MIN_SPATIAL})")
    if settings.num_clips < 1 or settings.noise < 0:
        raise ValueError("num_clips must be positive and noise non-negative")
    margin = 2.0
    speed = min(1.0, (s - 1 - 2 * margin) / (t - 1))
    travel = speed * (t - 1)
    labels = rng.permutation(np.arange(settings.num_clips) % k)
    clips = np.zeros((settings.num_clips, settings.channels, t, s, s))
    tint = 0.6 + 0.4 * rng.random((settings.num_clips, settings.channels))
    for i, label in enumerate(labels):
        dy, dx = DIRECTIONS[label]
        # start so the whole path stays inside the margins
        lo_y = margin + (travel if dy < 0 else 0)
        hi_y = s - 1 - margin - (travel if dy > 0 else 0)
        lo_x = margin + (travel if dx < 0 else 0)
        hi_x = s - 1 - margin - (travel if dx > 0 else 0)
        y0, x0 = rng.uniform(lo_y, hi_y), rng.uniform(lo_x, hi_x)
        for f in range(t):
            frame = _blob(s, y0 + dy * speed * f, x0 + dx * speed * f)
            clips[i, :, f] = tint[i, :, None, None] * frame
    if settings.noise:
        clips += settings.noise * rng.standard_normal(clips.shape)
    return SyntheticVideoTask(clips, labels.astype(np.int64), GENERATOR_RULE, seed)


def frame_difference_direction(clip: np.ndarray, num_classes: int = 4) -> int:
    """Direction read off the first two frames: the blob moves toward the
    positive lobe of their difference."""
    d = clip[:, 1].sum(axis=0) - clip[:, 0].sum(axis=0)
    rows, cols = np.indices(d.shape)
    pos, neg = np.clip(d, 0, None), np.clip(-d, 0, None)
    dy = (rows * pos).sum() / pos.sum() - (rows * neg).sum() / neg.sum()
    dx = (cols * pos).sum() / pos.sum() - (cols * neg).sum() / neg.sum()
    if num_classes == 2 or abs(dx) >= abs(dy):
        return 0 if dx > 0 else 1
    return 2 if dy > 0 else 3


def batches(n: int, batch_size: int, rng: np.random.Generator):
    """Endless shuffled index batches, reshuffling each pass."""
    if batch_size > n:
        raise ValueError(f"batch size {batch_size} exceeds {n} clips")
    while True:
        order = rng.permutation(n)
        for i in range(0, n - batch_size + 1, batch_size):
            yield order[i:i + batch_size]
