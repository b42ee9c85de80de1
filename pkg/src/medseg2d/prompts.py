"""Simulated user interaction: point/box prompts, correction clicks, schedules.

All sampling is driven by a caller-owned ``numpy.random.Generator`` so prompt
sequences are reproducible per seed.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, field

import numpy as np

FOREGROUND = "fg"
BACKGROUND = "bg"

NUM_ITERATIONS = 9
POINT_COUNT_CHOICES = (1, 3, 5, 9)


@dataclass(frozen=True)
class PointPrompt:
    x: int
    y: int
    label: str  # "fg" | "bg"

    def __post_init__(self):
        if self.label not in (FOREGROUND, BACKGROUND):
            raise ValueError(f"point label must be fg or bg, got {self.label!r}")


@dataclass(frozen=True)
class BoxPrompt:
    x0: int
    y0: int
    x1: int  # exclusive
    y1: int  # exclusive

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate box {(self.x0, self.y0, self.x1, self.y1)}")


@dataclass
class DensePrompt:
    logits: np.ndarray  # float, quarter of model input resolution

    def __post_init__(self):
        if not np.all(np.isfinite(self.logits)):
            raise ValueError("dense prompt contains non-finite values")


@dataclass
class PromptSet:
    """Cumulative prompt state for one interaction sequence."""
    points: list[PointPrompt] = field(default_factory=list)
    box: BoxPrompt | None = None
    dense: DensePrompt | None = None

    def to_json(self) -> dict:
        return {
            "points": [{"x": p.x, "y": p.y, "label": p.label} for p in self.points],
            "box": [self.box.x0, self.box.y0, self.box.x1, self.box.y1] if self.box else None,
            "dense": encode_dense_grid(self.dense.logits) if self.dense is not None else None,
        }

    @classmethod
    def from_json(cls, d: dict, dense_shape: tuple[int, int] | None = None) -> "PromptSet":
        points = [PointPrompt(int(p["x"]), int(p["y"]), p["label"]) for p in d.get("points", [])]
        box = BoxPrompt(*[int(v) for v in d["box"]]) if d.get("box") else None
        dense = None
        if d.get("dense"):
            if dense_shape is None:
                raise ValueError("dense grid present but no shape to decode it with")
            dense = DensePrompt(decode_dense_grid(d["dense"], dense_shape))
        return cls(points, box, dense)


def encode_dense_grid(logits: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(logits, dtype=np.float32).tobytes()).decode("ascii")


def decode_dense_grid(payload: str, shape: tuple[int, int]) -> np.ndarray:
    flat = np.frombuffer(base64.b64decode(payload), dtype=np.float32)
    if flat.size != shape[0] * shape[1]:
        raise ValueError(f"dense grid has {flat.size} values, expected {shape[0] * shape[1]}")
    return flat.reshape(shape).astype(np.float64)


@dataclass
class InteractionSchedule:
    num_iterations: int  # always 9
    point_counts: list[int]  # iterations 2..9, each in {1, 3, 5, 9}
    dense_only_iterations: tuple[int, int]  # (random intermediate in 2..8, 9)


def tight_bbox(mask: np.ndarray) -> BoxPrompt:
    """Smallest axis-aligned rectangle enclosing all foreground pixels (exclusive max)."""
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise ValueError("cannot build a box around an empty mask")
    return BoxPrompt(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def jitter_box(box: BoxPrompt, rng: np.random.Generator, max_offset: int = 5,
               bounds: tuple[int, int] | None = None, max_retries: int = 32) -> BoxPrompt:
    """Shift each coordinate by a uniform integer in [-max_offset, max_offset], clamped.

    Degenerate results are redrawn; after max_retries the unjittered box is returned.
    """
    if max_offset == 0:
        return box
    h = bounds[0] if bounds else None
    w = bounds[1] if bounds else None
    for _ in range(max_retries):
        dx0, dy0, dx1, dy1 = rng.integers(-max_offset, max_offset + 1, size=4)
        x0, y0, x1, y1 = box.x0 + dx0, box.y0 + dy0, box.x1 + dx1, box.y1 + dy1
        if w is not None:
            x0, x1 = int(np.clip(x0, 0, w)), int(np.clip(x1, 0, w))
            y0, y1 = int(np.clip(y0, 0, h)), int(np.clip(y1, 0, h))
        if x0 < x1 and y0 < y1:
            return BoxPrompt(int(x0), int(y0), int(x1), int(y1))
    return box


def _sample_pixel(mask: np.ndarray, rng: np.random.Generator) -> tuple[int, int]:
    ys, xs = np.nonzero(mask)
    i = int(rng.integers(ys.size))
    return int(xs[i]), int(ys[i])


def sample_initial_prompt(gt: np.ndarray, rng: np.random.Generator,
                          max_offset: int = 5) -> PointPrompt | BoxPrompt:
    """First-iteration prompt: a foreground point or a jittered tight box, 50/50."""
    if not gt.any():
        raise ValueError("ground truth mask is empty")
    if rng.random() < 0.5:
        x, y = _sample_pixel(gt, rng)
        return PointPrompt(x, y, FOREGROUND)
    return jitter_box(tight_bbox(gt), rng, max_offset=max_offset, bounds=gt.shape)


def sample_correction_points(pred: np.ndarray, gt: np.ndarray, k: int,
                             rng: np.random.Generator) -> list[PointPrompt]:
    """Draw up to k points without replacement from the error region pred XOR gt.

    False negatives (in gt, not pred) become foreground clicks; false positives
    become background clicks. Fewer than k error pixels means all are returned;
    an empty error region yields an empty list.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    error = np.logical_xor(pred.astype(bool), gt.astype(bool))
    ys, xs = np.nonzero(error)
    n = ys.size
    if n == 0:
        return []
    take = min(k, n)
    idx = rng.choice(n, size=take, replace=False)
    out = []
    for i in idx:
        x, y = int(xs[i]), int(ys[i])
        label = FOREGROUND if gt[y, x] else BACKGROUND
        out.append(PointPrompt(x, y, label))
    return out


def make_schedule(rng: np.random.Generator) -> InteractionSchedule:
    """Nine-iteration interaction plan: per-iteration click counts from {1,3,5,9},
    plus two dense-only iterations (one random intermediate, and the last)."""
    point_counts = [int(rng.choice(POINT_COUNT_CHOICES)) for _ in range(NUM_ITERATIONS - 1)]
    intermediate = int(rng.integers(2, NUM_ITERATIONS))  # uniform over {2..8}
    return InteractionSchedule(
        num_iterations=NUM_ITERATIONS,
        point_counts=point_counts,
        dense_only_iterations=(intermediate, NUM_ITERATIONS),
    )
