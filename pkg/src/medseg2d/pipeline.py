"""Disk-level curation pipeline: raw-volume containers in, PNG dataset out.

Input layout: a directory of `<id>.raw` arrays, each with a `<id>.json`
sidecar carrying shape/dtype/spacing/modality/anatomy/organ, and/or 2D
grayscale PNGs with `<id>_label.png` label maps. Output layout:
`images/{image_id}.png`, `masks/{image_id}/{mask_id}.png`, `manifest.json`,
`stats.json`.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from PIL import Image

from . import data_engine as de

logger = logging.getLogger(__name__)


def write_volume(path_stem: str | Path, volume: de.Volume3D, labels: np.ndarray | None = None,
                 anatomy: str = "other", organ: str = "") -> None:
    """Write the simple raw-array container (.raw + .json sidecar, optional .labels.raw)."""
    stem = Path(path_stem)
    voxels = np.ascontiguousarray(volume.voxels)
    voxels.tofile(stem.with_suffix(".raw"))
    sidecar = {
        "shape": list(voxels.shape),
        "dtype": str(voxels.dtype),
        "spacing": list(volume.spacing),
        "modality": volume.modality,
        "anatomy": anatomy,
        "organ": organ,
    }
    if labels is not None:
        labels = np.ascontiguousarray(labels.astype(np.int32))
        labels.tofile(stem.parent / (stem.name + ".labels.raw"))
        sidecar["labels_dtype"] = "int32"
    with open(stem.with_suffix(".json"), "w") as f:
        json.dump(sidecar, f, indent=2)


def read_volume(path_stem: str | Path) -> tuple[de.Volume3D, np.ndarray | None, dict]:
    stem = Path(path_stem)
    with open(stem.with_suffix(".json")) as f:
        sidecar = json.load(f)
    shape = tuple(sidecar["shape"])
    voxels = np.fromfile(stem.with_suffix(".raw"), dtype=sidecar["dtype"]).reshape(shape)
    volume = de.Volume3D(voxels, tuple(sidecar["spacing"]), sidecar["modality"], stem.name)
    labels = None
    labels_path = stem.parent / (stem.name + ".labels.raw")
    if labels_path.exists():
        labels = np.fromfile(labels_path, dtype=sidecar.get("labels_dtype", "int32")).reshape(shape)
    return volume, labels, sidecar


def _save_png(path: Path, array: np.ndarray, binary: bool = False) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if binary:
        Image.fromarray(array.astype(bool)).save(path, bits=1)
    else:
        Image.fromarray(array.astype(np.uint8), mode="L").save(path)


def load_mask_png(path: str | Path) -> np.ndarray:
    return np.array(Image.open(path)).astype(bool)


def load_image_png(path: str | Path) -> np.ndarray:
    return np.array(Image.open(path).convert("L"))


def curate_volume(volume: de.Volume3D, labels: np.ndarray, config: de.CurationConfig,
                  out_dir: Path, modality: str, anatomy: str, organ: str,
                  class_names: dict[int, str] | None = None) -> list[de.ManifestRecord]:
    """Normalize, slice, split masks, filter, resize, and write one volume's samples."""
    normalized = de.normalize_volume(volume)
    label_volume = de.Volume3D(labels.astype(np.uint8), volume.spacing,
                               volume.modality, volume.volume_id + "_labels")
    slices = de.extract_slices(normalized, config)
    label_slices = {(s.source_axis, s.source_index): s
                    for s in de.extract_slices(label_volume, config)}
    records = []
    for sl in slices:
        key = (sl.source_axis, sl.source_index)
        label_map = label_slices[key].pixels
        record = curate_slice(sl, label_map, config, out_dir, modality, anatomy,
                              organ, class_names)
        if record is not None:
            records.append(record)
    return records


def curate_slice(sl: de.Slice2D, label_map: np.ndarray, config: de.CurationConfig,
                 out_dir: Path, modality: str, anatomy: str, organ: str,
                 class_names: dict[int, str] | None = None) -> de.ManifestRecord | None:
    masks = de.split_mask(label_map, config, image_id=sl.image_id, class_names=class_names)
    masks = [m for m in masks if de.filter_small(m, sl.pixels.shape)]
    if not masks:
        return None
    image, masks, transform = de.resize_sample(sl, masks, config.target_size)
    if not masks:
        return None
    image_path = out_dir / "images" / f"{image.image_id}.png"
    _save_png(image_path, image.pixels)
    for m in masks:
        _save_png(out_dir / "masks" / image.image_id / f"{m.mask_id}.png", m.bitmap, binary=True)
    record = de.ManifestRecord(
        image_id=image.image_id,
        image_path=str(image_path.relative_to(out_dir)),
        mask_ids=[m.mask_id for m in masks],
        modality=modality, anatomy=anatomy, organ=organ)
    return record


def curate_directory(in_dir: str | Path, out_dir: str | Path,
                     config: de.CurationConfig, ratio: float = 0.8) -> de.DatasetManifest:
    """Curate every raw-volume container and 2D image pair under in_dir."""
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records: list[de.ManifestRecord] = []

    for sidecar_path in sorted(in_dir.glob("*.json")):
        stem = sidecar_path.with_suffix("")
        if not stem.with_suffix(".raw").exists():
            continue
        volume, labels, sidecar = read_volume(stem)
        if labels is None:
            logger.warning("volume %s has no label map, skipped", stem.name)
            continue
        records.extend(curate_volume(
            volume, labels, config, out_dir,
            sidecar["modality"], sidecar.get("anatomy", "other"), sidecar.get("organ", "")))

    for image_path in sorted(in_dir.glob("*.png")):
        if image_path.stem.endswith("_label"):
            continue
        label_path = in_dir / f"{image_path.stem}_label.png"
        if not label_path.exists():
            continue
        pixels = np.array(Image.open(image_path))
        if pixels.ndim == 3:
            pixels = np.array(Image.open(image_path).convert("L"))
        if pixels.dtype != np.uint8:
            raise de.CurationError(
                f"2D image {image_path.name} has values outside [0, 255] (dtype {pixels.dtype})")
        meta_path = in_dir / f"{image_path.stem}.meta.json"
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        sl = de.Slice2D(pixels, "native2D", 0, image_path.stem)
        if not de.aspect_ok(*pixels.shape):
            continue
        label_map = np.array(Image.open(label_path))
        record = curate_slice(sl, label_map, config, out_dir,
                              meta.get("modality", "X-ray"),
                              meta.get("anatomy", "other"), meta.get("organ", ""))
        if record is not None:
            records.append(record)

    manifest = de.DatasetManifest(records)
    if len({r.image_id for r in manifest.records}) >= 2:
        manifest = de.split_train_test(manifest, config.seed, ratio)
    save_manifest(manifest, out_dir / "manifest.json")
    stats = de.compute_stats(manifest) if manifest.records else {}
    with open(out_dir / "stats.json", "w") as f:
        json.dump(stats, f, indent=2)
    return manifest


def save_manifest(manifest: de.DatasetManifest, path: str | Path) -> None:
    payload = {"records": [r.__dict__ for r in manifest.records],
               "counts": manifest.counts()}
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)


def load_manifest(path: str | Path) -> de.DatasetManifest:
    with open(path) as f:
        payload = json.load(f)
    return de.DatasetManifest([de.ManifestRecord(**r) for r in payload["records"]])


def load_split_samples(manifest: de.DatasetManifest, root: str | Path, split: str):
    """Materialize (image, [masks]) pairs for a split, for training or evaluation."""
    root = Path(root)
    out = []
    for r in manifest.split_records(split):
        image = load_image_png(root / r.image_path)
        masks = [load_mask_png(root / "masks" / r.image_id / f"{mid}.png")
                 for mid in r.mask_ids]
        out.append((r, image, masks))
    return out
