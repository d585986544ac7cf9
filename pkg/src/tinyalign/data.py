"""Dataset ingestion and augmentation.

Canonical on-disk form is a JSON-lines manifest, one object per sample:
    {"image_path": ..., "points": [[x, y], ...], "tags": [...], "source": ...}
with images stored as PNG or JPEG next to it. Standard landmark point files
(version/n_points header, brace-delimited "x y" lines, 1-based coordinates)
import into the same manifest.

Out-of-bounds landmarks are kept as-is (never clamped); boundary-adjacent
targets are exactly the case the coordinate-space auxiliary loss exists for.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .imageops import affine_about, to_uint8, transform_points, warp_affine
from .layout import LandmarkLayout


class DataError(ValueError):
    """Malformed annotation file or manifest."""


@dataclass
class AnnotatedSample:
    image: np.ndarray                 # (H, W, 3) uint8
    points: np.ndarray                # (L, 2) float64 pixel coords
    tags: tuple[str, ...]
    source: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise DataError(f"points must be (L, 2), got {self.points.shape}")
        if len(self.tags) != len(self.points):
            raise DataError("tags length must match point count")

    @property
    def num_points(self) -> int:
        return len(self.points)

    def out_of_bounds(self) -> np.ndarray:
        h, w = self.image.shape[:2]
        return ((self.points[:, 0] < 0) | (self.points[:, 0] > w - 1)
                | (self.points[:, 1] < 0) | (self.points[:, 1] > h - 1))


# -- point files ----------------------------------------------------------------


def parse_pts(data: bytes | str) -> np.ndarray:
    """Parse a landmark point file to 0-based pixel coordinates."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if len(lines) < 4 or not lines[0].replace(" ", "").startswith("version:"):
        raise DataError("missing version header")
    if not lines[1].replace(" ", "").startswith("n_points:"):
        raise DataError("missing n_points header")
    try:
        n = int(lines[1].split(":", 1)[1])
    except ValueError:
        raise DataError("bad n_points value") from None
    if lines[2] != "{":
        raise DataError("missing opening brace")
    body = lines[3:]
    if "}" not in body:
        raise DataError("missing closing brace")
    end = body.index("}")
    rows = body[:end]
    if len(rows) != n:
        raise DataError(f"expected {n} points, found {len(rows)}")
    points = np.empty((n, 2), dtype=np.float64)
    for i, row in enumerate(rows):
        parts = row.split()
        if len(parts) != 2:
            raise DataError(f"bad point line: {row!r}")
        points[i] = (float(parts[0]), float(parts[1]))
    return points - 1.0   # 1-based file convention -> 0-based pixels


def load_pts_file(path) -> np.ndarray:
    return parse_pts(Path(path).read_bytes())


# -- manifest -------------------------------------------------------------------


def write_manifest(path, samples: list[AnnotatedSample], image_dir=None) -> None:
    """Write manifest JSONL; saves each sample's image as PNG alongside."""
    path = Path(path)
    image_dir = Path(image_dir) if image_dir else path.parent
    image_dir.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for i, sample in enumerate(samples):
            name = f"img_{i:06d}.png"
            Image.fromarray(sample.image).save(image_dir / name)
            rel = (image_dir / name).relative_to(path.parent)
            fh.write(json.dumps({
                "image_path": str(rel),
                "points": sample.points.tolist(),
                "tags": list(sample.tags),
                "source": sample.source,
            }) + "\n")


def read_manifest(path) -> list[AnnotatedSample]:
    path = Path(path)
    samples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                img_path = path.parent / row["image_path"]
                with Image.open(img_path) as img:
                    image = np.asarray(img.convert("RGB"))
                samples.append(AnnotatedSample(
                    image=image,
                    points=np.asarray(row["points"], dtype=np.float64),
                    tags=tuple(row.get("tags") or ["inner"] * len(row["points"])),
                    source=row.get("source", ""),
                ))
            except (KeyError, json.JSONDecodeError) as err:
                raise DataError(f"bad manifest line {line_no}: {err}") from None
    return samples


def import_pts_directory(image_dir, layout: LandmarkLayout) -> list[AnnotatedSample]:
    """Pair image files with .pts annotations of the same stem."""
    image_dir = Path(image_dir)
    samples = []
    for img_path in sorted(image_dir.iterdir()):
        if img_path.suffix.lower() not in (".png", ".jpg", ".jpeg"):
            continue
        pts_path = img_path.with_suffix(".pts")
        if not pts_path.exists():
            continue
        points = load_pts_file(pts_path)
        if len(points) != layout.num_points:
            raise DataError(f"{pts_path}: {len(points)} points, layout wants "
                            f"{layout.num_points}")
        with Image.open(img_path) as img:
            image = np.asarray(img.convert("RGB"))
        samples.append(AnnotatedSample(image=image, points=points,
                                       tags=layout.tags, source=img_path.name))
    return samples


# -- augmentation ------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentRanges:
    rotation_deg: float = 20.0
    scale: tuple[float, float] = (0.9, 1.1)
    translate_frac: float = 0.05
    flip_prob: float = 0.5
    brightness: float = 0.15
    contrast: float = 0.15

    @staticmethod
    def none() -> "AugmentRanges":
        return AugmentRanges(0.0, (1.0, 1.0), 0.0, 0.0, 0.0, 0.0)

    @property
    def is_identity(self) -> bool:
        return (self.rotation_deg == 0 and self.scale == (1.0, 1.0)
                and self.translate_frac == 0 and self.flip_prob == 0
                and self.brightness == 0 and self.contrast == 0)


def augment(sample: AnnotatedSample, layout: LandmarkLayout,
            ranges: AugmentRanges, seed: int) -> AnnotatedSample:
    """Jittered copy; landmarks are transformed with the exact affine map."""
    rng = np.random.default_rng(seed)
    if ranges.is_identity:
        return replace(sample, image=sample.image.copy(),
                       points=sample.points.copy())
    rot = float(rng.uniform(-ranges.rotation_deg, ranges.rotation_deg))
    scale = float(rng.uniform(*ranges.scale))
    h, w = sample.image.shape[:2]
    tx = float(rng.uniform(-ranges.translate_frac, ranges.translate_frac)) * w
    ty = float(rng.uniform(-ranges.translate_frac, ranges.translate_frac)) * h
    do_flip = bool(rng.random() < ranges.flip_prob)
    brightness = float(rng.uniform(-ranges.brightness, ranges.brightness)) * 255.0
    contrast = 1.0 + float(rng.uniform(-ranges.contrast, ranges.contrast))

    image = sample.image.astype(np.float32)
    points = sample.points.copy()
    if do_flip:
        image = image[:, ::-1].copy()
        points[:, 0] = (w - 1) - points[:, 0]
        points = points[list(layout.flip_remap)]
    m = affine_about(((w - 1) / 2.0, (h - 1) / 2.0), rot, scale, (tx, ty))
    image = warp_affine(image, m)
    points = transform_points(points, m)
    image = (image - 127.5) * contrast + 127.5 + brightness
    return replace(sample, image=to_uint8(image), points=points)


def flip_sample(sample: AnnotatedSample, layout: LandmarkLayout) -> AnnotatedSample:
    w = sample.image.shape[1]
    points = sample.points.copy()
    points[:, 0] = (w - 1) - points[:, 0]
    return replace(sample, image=sample.image[:, ::-1].copy(),
                   points=points[list(layout.flip_remap)])


# -- split ----------------------------------------------------------------------


def split(items: list, ratios: tuple[float, ...], seed: int) -> list[list]:
    """Deterministic shuffled partition; ratios must sum to 1."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    order = np.random.default_rng(seed).permutation(len(items))
    counts = [int(round(r * len(items))) for r in ratios]
    counts[-1] = len(items) - sum(counts[:-1])
    parts = []
    start = 0
    for ratio, count in zip(ratios, counts):
        if ratio > 0 and count <= 0:
            raise ValueError(f"partition with ratio {ratio} is empty")
        parts.append([items[order[i]] for i in range(start, start + count)])
        start += count
    return parts
