"""Curation of raw volumes and 2D images into a promptable-segmentation dataset.

Pure array-level operations: intensity normalization, axis slicing with an
aspect-ratio filter, per-class connected-component mask splitting, small-mask
filtering, resizing with recorded transforms, and the train/test split.
Disk I/O lives in :mod:`medseg2d.pipeline`.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import ndimage

logger = logging.getLogger(__name__)

MODALITIES = (
    "CT", "MR", "PET", "ultrasound", "X-ray",
    "endoscopy", "dermoscopy", "fundus", "histopathology", "microscopy",
)

ANATOMIES = ("head_and_neck", "thorax", "abdomen", "pelvis", "lesion", "other")

# Foreground-area threshold: a mask is kept only when area/(h*w) exceeds this.
MIN_AREA_RATIO = Fraction(100, 256 * 256)


class CurationError(ValueError):
    """Raised when an input volume or image violates curation preconditions."""


@dataclass
class Volume3D:
    voxels: np.ndarray  # indexed [x, y, z]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    modality: str = "CT"
    volume_id: str = ""

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels)
        if self.voxels.ndim != 3:
            raise CurationError(f"volume {self.volume_id!r}: expected 3 dims, got {self.voxels.ndim}")
        if min(self.voxels.shape) < 1:
            raise CurationError(f"volume {self.volume_id!r}: empty axis in shape {self.voxels.shape}")
        if any(s <= 0 for s in self.spacing):
            raise CurationError(f"volume {self.volume_id!r}: non-positive spacing {self.spacing}")


@dataclass
class Slice2D:
    pixels: np.ndarray  # uint8, shape (h, w)
    source_axis: str  # "x" | "y" | "z" | "native2D"
    source_index: int
    image_id: str


@dataclass
class MaskInstance:
    bitmap: np.ndarray  # bool, aligned to its Slice2D
    class_label: str
    component_index: int
    image_id: str
    mask_id: str
    is_union: bool = False  # multi-class union retained as one component


@dataclass
class CurationConfig:
    target_size: int = 256
    min_area_pixels: int = 100
    connectivity: int = 8  # 4 or 8
    axes: tuple[str, ...] = ("x", "y", "z")
    seed: int = 0

    def __post_init__(self):
        if self.target_size < 16:
            raise CurationError(f"target_size must be >= 16, got {self.target_size}")
        if self.min_area_pixels < 1:
            raise CurationError(f"min_area_pixels must be >= 1, got {self.min_area_pixels}")
        if self.connectivity not in (4, 8):
            raise CurationError(f"connectivity must be 4 or 8, got {self.connectivity}")
        bad = set(self.axes) - {"x", "y", "z"}
        if bad:
            raise CurationError(f"unknown axes: {sorted(bad)}")

    @property
    def structure(self) -> np.ndarray:
        """Binary structuring element for connected-component labeling."""
        if self.connectivity == 8:
            return np.ones((3, 3), dtype=bool)
        return ndimage.generate_binary_structure(2, 1)


@dataclass
class ManifestRecord:
    image_id: str
    image_path: str
    mask_ids: list[str]
    modality: str
    anatomy: str
    organ: str
    split: str = "train"  # train | test | holdout


@dataclass
class DatasetManifest:
    records: list[ManifestRecord] = field(default_factory=list)

    def counts(self) -> dict:
        by_modality: dict[str, int] = {}
        by_anatomy: dict[str, int] = {}
        for r in self.records:
            by_modality[r.modality] = by_modality.get(r.modality, 0) + 1
            by_anatomy[r.anatomy] = by_anatomy.get(r.anatomy, 0) + 1
        return {"modality": by_modality, "anatomy": by_anatomy}

    def split_records(self, split: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == split]


def normalize_volume(volume: Volume3D) -> Volume3D:
    """Min-max rescale voxel intensities to [0, 255] with half-away-from-zero rounding."""
    v = volume.voxels
    if not np.all(np.isfinite(v)):
        raise CurationError(f"volume {volume.volume_id!r}: non-finite voxel values")
    v = v.astype(np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        out = np.zeros(v.shape, dtype=np.uint8)
    else:
        scaled = 255.0 * (v - lo) / (hi - lo)
        # values are non-negative, so floor(x + 0.5) is half-away-from-zero
        out = np.floor(scaled + 0.5).astype(np.uint8)
    return Volume3D(out, volume.spacing, volume.modality, volume.volume_id)


def aspect_ok(h: int, w: int) -> bool:
    """Keep a slice only when its shortest edge is at least half its longest edge."""
    return min(h, w) >= max(h, w) / 2


def extract_slices(volume: Volume3D, config: CurationConfig) -> list[Slice2D]:
    """Slice a normalized volume along the enabled axes, dropping extreme aspect ratios."""
    v = volume.voxels
    if v.dtype != np.uint8:
        raise CurationError(f"volume {volume.volume_id!r}: expected uint8 voxels (normalize first)")
    out: list[Slice2D] = []
    axis_index = {"x": 0, "y": 1, "z": 2}
    for axis in ("x", "y", "z"):
        if axis not in config.axes:
            continue
        ax = axis_index[axis]
        n = v.shape[ax]
        sample = np.take(v, 0, axis=ax)
        if not aspect_ok(*sample.shape):
            continue
        for i in range(n):
            pixels = np.ascontiguousarray(np.take(v, i, axis=ax))
            out.append(Slice2D(
                pixels=pixels,
                source_axis=axis,
                source_index=i,
                image_id=f"{volume.volume_id}_{axis}{i:04d}",
            ))
    return out


def _component_key(bitmap: np.ndarray) -> tuple[int, int]:
    """Raster-order key: first foreground pixel in row-major scan."""
    ys, xs = np.nonzero(bitmap)
    i = np.lexsort((xs, ys))[0]
    return int(ys[i]), int(xs[i])


def split_mask(label_map: np.ndarray, config: CurationConfig,
               image_id: str = "", class_names: dict[int, str] | None = None) -> list[MaskInstance]:
    """Decompose a multi-class label map into single-component binary masks.

    One mask per connected component per class. When two or more classes are
    present and the union of all foreground pixels is itself a single
    component, an extra union mask is emitted on top of the per-class masks.
    """
    label_map = np.asarray(label_map)
    classes = sorted(int(c) for c in np.unique(label_map) if c != 0)
    structure = config.structure
    out: list[MaskInstance] = []
    for cls in classes:
        binary = label_map == cls
        labeled, n = ndimage.label(binary, structure=structure)
        comps = [labeled == k for k in range(1, n + 1)]
        comps.sort(key=_component_key)
        name = class_names.get(cls, str(cls)) if class_names else str(cls)
        for idx, comp in enumerate(comps):
            out.append(MaskInstance(
                bitmap=comp,
                class_label=name,
                component_index=idx,
                image_id=image_id,
                mask_id=f"{image_id}_{name}_c{idx}",
            ))
    if len(classes) >= 2:
        union = label_map != 0
        _, n_union = ndimage.label(union, structure=structure)
        if n_union == 1:
            names = [class_names.get(c, str(c)) if class_names else str(c) for c in classes]
            label = "+".join(names)
            out.append(MaskInstance(
                bitmap=union,
                class_label=label,
                component_index=0,
                image_id=image_id,
                mask_id=f"{image_id}_{label}_c0",
                is_union=True,
            ))
    return out


def filter_small(mask: MaskInstance, image_shape: tuple[int, int]) -> bool:
    """Keep a mask only when its foreground ratio strictly exceeds 100/65536 (exact rationals)."""
    h, w = image_shape
    area = int(np.count_nonzero(mask.bitmap))
    return Fraction(area, h * w) > MIN_AREA_RATIO


@dataclass
class ResizeTransform:
    """Geometric transform from original image space to model input space."""
    kind: str  # "pad" | "scale"
    original_shape: tuple[int, int]
    target: int
    offset: tuple[int, int] = (0, 0)  # (oy, ox), pad only

    def to_model(self, x: float, y: float) -> tuple[float, float]:
        if self.kind == "pad":
            oy, ox = self.offset
            return x + ox, y + oy
        h, w = self.original_shape
        return x * self.target / w, y * self.target / h

    def to_original(self, x: float, y: float) -> tuple[float, float]:
        if self.kind == "pad":
            oy, ox = self.offset
            return x - ox, y - oy
        h, w = self.original_shape
        return x * w / self.target, y * h / self.target

    def to_json(self) -> dict:
        return {"kind": self.kind, "original_shape": list(self.original_shape),
                "target": self.target, "offset": list(self.offset)}

    @classmethod
    def from_json(cls, d: dict) -> "ResizeTransform":
        return cls(d["kind"], tuple(d["original_shape"]), d["target"], tuple(d["offset"]))


def _bilinear_resize(img: np.ndarray, target: int) -> np.ndarray:
    """Bilinear resample to target x target using align-corners=False pixel centers."""
    h, w = img.shape
    sy, sx = h / target, w / target
    yc = (np.arange(target) + 0.5) * sy - 0.5
    xc = (np.arange(target) + 0.5) * sx - 0.5
    y0 = np.clip(np.floor(yc).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xc).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    fy = np.clip(yc - y0, 0.0, 1.0)[:, None]
    fx = np.clip(xc - x0, 0.0, 1.0)[None, :]
    img = img.astype(np.float64)
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def _nearest_resize(mask: np.ndarray, target: int) -> np.ndarray:
    h, w = mask.shape
    yi = np.clip(((np.arange(target) + 0.5) * h / target).astype(int), 0, h - 1)
    xi = np.clip(((np.arange(target) + 0.5) * w / target).astype(int), 0, w - 1)
    return mask[yi][:, xi]


def resize_sample(image: Slice2D, masks: list[MaskInstance], target: int,
                  ) -> tuple[Slice2D, list[MaskInstance], ResizeTransform]:
    """Bring a sample to target x target: zero-pad small images, bilinear-resize the rest.

    Masks follow the image transform with nearest-neighbor sampling; masks that
    come out empty are dropped with a warning. The returned transform maps
    coordinates between original and model input space.
    """
    if target < 16:
        raise CurationError(f"target must be >= 16, got {target}")
    h, w = image.pixels.shape
    if h < target and w < target:
        oy, ox = (target - h) // 2, (target - w) // 2
        canvas = np.zeros((target, target), dtype=np.uint8)
        canvas[oy:oy + h, ox:ox + w] = image.pixels
        transform = ResizeTransform("pad", (h, w), target, (oy, ox))
        new_masks = []
        for m in masks:
            mc = np.zeros((target, target), dtype=bool)
            mc[oy:oy + h, ox:ox + w] = m.bitmap
            new_masks.append(MaskInstance(mc, m.class_label, m.component_index,
                                          m.image_id, m.mask_id, m.is_union))
    else:
        canvas = np.floor(_bilinear_resize(image.pixels, target) + 0.5)
        canvas = np.clip(canvas, 0, 255).astype(np.uint8)
        transform = ResizeTransform("scale", (h, w), target)
        new_masks = []
        for m in masks:
            mb = _nearest_resize(m.bitmap, target)
            if not mb.any():
                logger.warning("mask %s empty after resize to %d, dropped", m.mask_id, target)
                continue
            new_masks.append(MaskInstance(mb, m.class_label, m.component_index,
                                          m.image_id, m.mask_id, m.is_union))
    out_image = Slice2D(canvas, image.source_axis, image.source_index, image.image_id)
    return out_image, new_masks, transform


def split_train_test(manifest: DatasetManifest, seed: int, ratio: float = 0.8) -> DatasetManifest:
    """Assign train/test splits per image_id, deterministically under the seed."""
    if not 0 < ratio < 1:
        raise CurationError(f"ratio must be in (0, 1), got {ratio}")
    image_ids = sorted({r.image_id for r in manifest.records})
    if len(image_ids) < 2:
        raise CurationError(f"need at least 2 images to split, got {len(image_ids)}")
    rng = random.Random(seed)
    rng.shuffle(image_ids)
    n_train = int(np.floor(ratio * len(image_ids) + 0.5))
    train_ids = set(image_ids[:n_train])
    records = [
        ManifestRecord(r.image_id, r.image_path, list(r.mask_ids), r.modality,
                       r.anatomy, r.organ, "train" if r.image_id in train_ids else "test")
        for r in manifest.records
    ]
    return DatasetManifest(records)


def compute_stats(manifest: DatasetManifest) -> dict:
    """Image and mask counts per modality and per anatomy, with totals."""
    if not manifest.records:
        raise CurationError("manifest is empty")
    stats = {
        "modality": {m: {"images": 0, "masks": 0} for m in MODALITIES},
        "anatomy": {a: {"images": 0, "masks": 0} for a in ANATOMIES},
        "total": {"images": 0, "masks": 0},
    }
    for r in manifest.records:
        n_masks = len(r.mask_ids)
        for key, value in (("modality", r.modality), ("anatomy", r.anatomy)):
            bucket = stats[key].setdefault(value, {"images": 0, "masks": 0})
            bucket["images"] += 1
            bucket["masks"] += n_masks
        stats["total"]["images"] += 1
        stats["total"]["masks"] += n_masks
    return stats
