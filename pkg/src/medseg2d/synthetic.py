"""Synthetic volumes and 2D shape datasets for tests, demos, and overfit runs."""

from __future__ import annotations

import numpy as np

from .data_engine import Volume3D


def random_label_volume(rng: np.random.Generator, max_side: int = 64,
                        max_classes: int = 4, n_blobs: int = 6) -> np.ndarray:
    """Random 3D integer label map: axis-aligned boxes and balls of 1..max_classes."""
    shape = tuple(int(rng.integers(12, max_side + 1)) for _ in range(3))
    vol = np.zeros(shape, dtype=np.int32)
    for _ in range(int(rng.integers(1, n_blobs + 1))):
        cls = int(rng.integers(1, max_classes + 1))
        if rng.random() < 0.5:
            lo = [int(rng.integers(0, s)) for s in shape]
            hi = [min(int(l + rng.integers(2, s // 2 + 2)), s) for l, s in zip(lo, shape)]
            vol[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = cls
        else:
            c = [rng.uniform(0, s) for s in shape]
            r = rng.uniform(2, min(shape) / 3)
            zz, yy, xx = np.ogrid[:shape[0], :shape[1], :shape[2]]
            ball = ((zz - c[0]) ** 2 + (yy - c[1]) ** 2 + (xx - c[2]) ** 2) <= r * r
            vol[ball] = cls
    return vol


def random_intensity_volume(rng: np.random.Generator, labels: np.ndarray,
                            modality: str = "CT", volume_id: str = "synthetic") -> Volume3D:
    """Intensity volume loosely correlated with a label map, arbitrary units."""
    base = rng.normal(40.0, 15.0, labels.shape)
    voxels = base + 60.0 * labels + rng.normal(0, 5.0, labels.shape)
    return Volume3D(voxels, modality=modality, volume_id=volume_id)


def _ellipse_mask(size: int, cx: float, cy: float, rx: float, ry: float) -> np.ndarray:
    yy, xx = np.ogrid[:size, :size]
    return ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0


def _rect_mask(size: int, x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
    m = np.zeros((size, size), dtype=bool)
    m[y0:y1, x0:x1] = True
    return m


def shapes_dataset(rng: np.random.Generator, n_images: int = 20, size: int = 64,
                   max_masks: int = 3) -> list[tuple[np.ndarray, list[np.ndarray]]]:
    """Images of bright ellipses/rectangles on a dark noisy background, with the
    per-shape masks as ground truth. Each image has 1..max_masks masks."""
    out = []
    for _ in range(n_images):
        image = rng.normal(40.0, 10.0, (size, size))
        masks: list[np.ndarray] = []
        for _ in range(int(rng.integers(1, max_masks + 1))):
            for _attempt in range(20):
                if rng.random() < 0.5:
                    rx = rng.uniform(size * 0.08, size * 0.22)
                    ry = rng.uniform(size * 0.08, size * 0.22)
                    cx = rng.uniform(rx + 1, size - rx - 1)
                    cy = rng.uniform(ry + 1, size - ry - 1)
                    m = _ellipse_mask(size, cx, cy, rx, ry)
                else:
                    w = int(rng.integers(size // 8, size // 3))
                    h = int(rng.integers(size // 8, size // 3))
                    x0 = int(rng.integers(0, size - w))
                    y0 = int(rng.integers(0, size - h))
                    m = _rect_mask(size, x0, y0, x0 + w, y0 + h)
                overlap = any((m & prev).any() for prev in masks)
                if not overlap and m.sum() > 10:
                    break
            else:
                continue
            masks.append(m)
            image[m] += rng.uniform(100.0, 180.0)
        if not masks:  # extremely unlikely; keep the invariant of >= 1 mask
            m = _rect_mask(size, size // 4, size // 4, size // 2, size // 2)
            masks.append(m)
            image[m] += 120.0
        lo, hi = image.min(), image.max()
        image8 = np.floor(255.0 * (image - lo) / (hi - lo) + 0.5).astype(np.uint8)
        out.append((image8, masks))
    return out
