"""Channel-candidate to super-kernel-part assignment schedules.

A super kernel is split into N equal parts, one per channel candidate.
Candidate i (1-based) activates exactly i parts.  The naive schedule stacks
parts bottom-up, so part 1 is active for every candidate and part N only for
the largest one.  The fair schedule spreads the parts so that, under uniform
candidate sampling, every part is updated (nearly) equally often:
(N+1)/2 of N candidates touch each part for odd N, and counts differ by at
most one for even N.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class FairPattern:
    n_candidates: int
    assignment: np.ndarray  # (N, N) bool, row i-1 = parts of candidate i
    initial_probs: np.ndarray
    mode: str = "fair"

    def __post_init__(self):
        self.assignment.setflags(write=False)
        self.initial_probs.setflags(write=False)

    def __eq__(self, other):
        return (isinstance(other, FairPattern) and self.mode == other.mode
                and np.array_equal(self.assignment, other.assignment))

    def rows(self) -> list[np.ndarray]:
        """0-based part indices per 0-based candidate."""
        return [np.flatnonzero(r) for r in self.assignment]

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "n_candidates": self.n_candidates,
            "assignment": self.assignment.astype(int).tolist(),
            "initial_probs": self.initial_probs.tolist(),
            "part_counts": part_counts(self).tolist(),
        }


def _check_n(n: int):
    if int(n) != n or n < 1:
        raise ValueError(f"number of candidates must be a positive integer, got {n!r}")


def _make(assignment: np.ndarray, mode: str) -> FairPattern:
    n = assignment.shape[0]
    return FairPattern(n, assignment, np.full(n, 1.0 / n), mode)


def fair_pattern(n: int) -> FairPattern:
    """Largest candidate takes every part; each smaller candidate, from N-1
    down to 1, takes its i least-covered parts (lowest index on ties)."""
    _check_n(n)
    a = np.zeros((n, n), dtype=bool)
    a[n - 1] = True
    counts = np.ones(n, dtype=np.int64)
    for i in range(n - 1, 0, -1):
        chosen = np.argsort(counts, kind="stable")[:i]
        a[i - 1, chosen] = True
        counts[chosen] += 1
    return _make(a, "fair")


def naive_pattern(n: int) -> FairPattern:
    _check_n(n)
    return _make(np.tril(np.ones((n, n), dtype=bool)), "naive")


def make_pattern(n: int, mode: str) -> FairPattern:
    if mode == "fair":
        return fair_pattern(n)
    if mode == "naive":
        return naive_pattern(n)
    raise ValueError(f"unknown pattern mode {mode!r}")


def part_counts(pattern: FairPattern) -> np.ndarray:
    return pattern.assignment.sum(axis=0).astype(np.int64)


def candidate_parts(pattern: FairPattern, i: int) -> frozenset[int]:
    """1-based part indices used by 1-based candidate i."""
    if not 1 <= i <= pattern.n_candidates:
        raise IndexError(f"candidate {i} outside 1..{pattern.n_candidates}")
    return frozenset(int(j) + 1 for j in np.flatnonzero(pattern.assignment[i - 1]))


def format_pattern(pattern: FairPattern) -> str:
    n = pattern.n_candidates
    width = max(2, len(str(n)))
    lines = [" " * 6 + "".join(f"{j:>{width + 1}}" for j in range(1, n + 1))]
    for i, row in enumerate(pattern.assignment, start=1):
        cells = "".join(f"{'#' if v else '.':>{width + 1}}" for v in row)
        lines.append(f"c{i:<4} " + cells)
    counts = part_counts(pattern)
    lines.append("count " + "".join(f"{c:>{width + 1}}" for c in counts))
    return "\n".join(lines)
