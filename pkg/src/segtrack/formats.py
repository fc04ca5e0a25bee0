"""Annotation dataset I/O.

Parses labelme documents, converts them to COCO datasets, splits
train/validation sets, reads and writes COCO JSON and JSON-Lines
prediction streams, and samples frames for labeling.  Segmentations are
accepted in all three COCO forms wherever one is read: polygon
list-of-rings, uncompressed RLE ``{"size": [h, w], "counts": [..]}``,
and compressed RLE with a counts string.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import geometry
from .errors import (
    ConflictError,
    IntegrityError,
    OutOfRangeError,
    ParseError,
    SchemaError,
    SegtrackError,
)
from .geometry import BoundingBox, Point, Polygon, RleMask, Segmentation
from .tracking import DetectionRecord, Track, TrackState

SHAPE_TYPES = ("polygon", "point")


@dataclass(frozen=True)
class Shape:
    label: str
    points: tuple[Point, ...]
    shape_type: str = "polygon"
    group_id: int | None = None


@dataclass(frozen=True)
class LabelmeDocument:
    image_path: str
    image_height: int
    image_width: int
    shapes: tuple[Shape, ...]


@dataclass
class CocoImage:
    id: int
    file_name: str
    height: int
    width: int
    frame_index: int | None = None


@dataclass
class CocoAnnotation:
    id: int
    image_id: int
    category_id: int
    segmentation: Segmentation
    bbox: BoundingBox
    area: float
    iscrowd: int = 0


@dataclass
class CocoCategory:
    id: int
    name: str


@dataclass
class CocoDataset:
    images: list[CocoImage] = field(default_factory=list)
    annotations: list[CocoAnnotation] = field(default_factory=list)
    categories: list[CocoCategory] = field(default_factory=list)

    def category_name(self, category_id: int) -> str:
        for c in self.categories:
            if c.id == category_id:
                return c.name
        raise KeyError(category_id)


@dataclass
class SplitResult:
    train: CocoDataset
    val: CocoDataset
    seed: int
    ratio: float


# ---------------------------------------------------------------------------
# labelme ingestion


def parse_labelme(data: bytes | str) -> LabelmeDocument:
    """Parse one labelme JSON document; unknown top-level fields are ignored."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON: {e}") from e
    if not isinstance(doc, dict):
        raise SchemaError("top-level value must be an object")
    for key in ("imageHeight", "imageWidth"):
        if not isinstance(doc.get(key), (int, float)) or doc[key] <= 0:
            raise SchemaError(f"missing or invalid {key}")
    image_path = doc.get("imagePath")
    if not isinstance(image_path, str) or not image_path:
        raise SchemaError("missing or invalid imagePath")

    shapes = []
    for i, raw in enumerate(doc.get("shapes", [])):
        label = raw.get("label")
        if not isinstance(label, str) or not label:
            raise SchemaError(f"shape {i}: missing label")
        shape_type = raw.get("shape_type", "polygon")
        if shape_type not in SHAPE_TYPES:
            raise SchemaError(f"shape {i}: unsupported shape_type {shape_type!r}")
        points = raw.get("points")
        if not isinstance(points, list) or not all(
            isinstance(p, (list, tuple)) and len(p) == 2 for p in points
        ):
            raise SchemaError(f"shape {i}: invalid points")
        if shape_type == "polygon" and len(points) < 3:
            raise SchemaError(f"shape {i}: polygon needs >=3 points, got {len(points)}")
        if shape_type == "point" and len(points) != 1:
            raise SchemaError(f"shape {i}: point shape needs exactly 1 point, got {len(points)}")
        group_id = raw.get("group_id")
        if group_id is not None and not isinstance(group_id, int):
            raise SchemaError(f"shape {i}: group_id must be an integer or null")
        shapes.append(
            Shape(
                label=label,
                points=tuple(Point(float(x), float(y)) for x, y in points),
                shape_type=shape_type,
                group_id=group_id,
            )
        )
    return LabelmeDocument(
        image_path=image_path,
        image_height=int(doc["imageHeight"]),
        image_width=int(doc["imageWidth"]),
        shapes=tuple(shapes),
    )


def keypoint_to_region(pt: Point | Sequence[float], radius: float) -> Polygon:
    """Small circular stand-in mask for a keypoint: a regular 16-gon.

    The first vertex sits at angle 0 (due +x from the center) and the
    circumradius equals ``radius``.
    """
    if radius <= 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    cx, cy = float(pt[0]), float(pt[1])
    pts = [
        Point(cx + radius * math.cos(2 * math.pi * k / 16), cy + radius * math.sin(2 * math.pi * k / 16))
        for k in range(16)
    ]
    return Polygon(tuple(pts))


def labelme_to_coco(docs: Sequence[LabelmeDocument], keypoint_radius: float = 5.0) -> CocoDataset:
    """Convert labelme documents into one COCO dataset.

    Category ids are assigned 1..C over the sorted unique labels.  Point
    shapes become 16-gon regions.  Shapes sharing (label, group_id) with
    a non-null group_id within one document merge into a single
    multi-ring annotation.  Images keep their input position as
    ``frame_index``.
    """
    if not docs:
        raise ValueError("need at least one document")
    seen_names: set[str] = set()
    for doc in docs:
        if doc.image_path in seen_names:
            raise ConflictError(f"duplicate file name {doc.image_path!r}")
        seen_names.add(doc.image_path)

    labels = sorted({s.label for doc in docs for s in doc.shapes})
    cat_ids = {name: i + 1 for i, name in enumerate(labels)}
    ds = CocoDataset(categories=[CocoCategory(id=i, name=n) for n, i in sorted(cat_ids.items(), key=lambda kv: kv[1])])

    ann_id = 1
    for doc_idx, doc in enumerate(docs):
        image_id = doc_idx + 1
        ds.images.append(
            CocoImage(
                id=image_id,
                file_name=doc.image_path,
                height=doc.image_height,
                width=doc.image_width,
                frame_index=doc_idx,
            )
        )
        groups: dict[object, list[Polygon]] = {}
        order: list[object] = []
        for shape_idx, shape in enumerate(doc.shapes):
            if shape.shape_type == "point":
                ring = keypoint_to_region(shape.points[0], keypoint_radius)
            else:
                ring = Polygon(shape.points)
            key = (shape.label, shape.group_id) if shape.group_id is not None else (shape.label, None, shape_idx)
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(ring)
        for key in order:
            rings = groups[key]
            label = key[0]
            seg: Segmentation = rings[0] if len(rings) == 1 else tuple(rings)
            ds.annotations.append(
                CocoAnnotation(
                    id=ann_id,
                    image_id=image_id,
                    category_id=cat_ids[label],
                    segmentation=seg,
                    bbox=geometry.segmentation_bbox(seg),
                    area=geometry.segmentation_area(seg),
                    iscrowd=0,
                )
            )
            ann_id += 1
    return ds


# ---------------------------------------------------------------------------
# splitting and sampling


def split_dataset(ds: CocoDataset, ratio: float = 0.8, seed: int = 0) -> SplitResult:
    """Seeded train/validation split of a COCO dataset.

    Images are shuffled deterministically and the first
    ``ceil(ratio * N)`` go to the training part; annotations follow
    their image, ids are re-densified per part, and both parts keep the
    full category table.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be inside (0, 1), got {ratio}")
    n = len(ds.images)
    if n < 2:
        raise ValueError(f"need at least 2 images to split, got {n}")
    order = list(range(n))
    random.Random(seed).shuffle(order)
    n_train = math.ceil(ratio * n)
    train_pos = sorted(order[:n_train])
    val_pos = sorted(order[n_train:])

    def build(positions: list[int]) -> CocoDataset:
        part = CocoDataset(categories=[CocoCategory(c.id, c.name) for c in ds.categories])
        id_map = {}
        for new_id, pos in enumerate(positions, start=1):
            img = ds.images[pos]
            id_map[img.id] = new_id
            part.images.append(
                CocoImage(new_id, img.file_name, img.height, img.width, img.frame_index)
            )
        ann_id = 1
        for ann in ds.annotations:
            if ann.image_id in id_map:
                part.annotations.append(
                    CocoAnnotation(
                        id=ann_id,
                        image_id=id_map[ann.image_id],
                        category_id=ann.category_id,
                        segmentation=ann.segmentation,
                        bbox=ann.bbox,
                        area=ann.area,
                        iscrowd=ann.iscrowd,
                    )
                )
                ann_id += 1
        return part

    return SplitResult(train=build(train_pos), val=build(val_pos), seed=seed, ratio=ratio)


def sample_frames(n_total: int, k: int, strategy: str = "random", seed: int = 0) -> list[int]:
    """Pick k distinct frame indices from [0, n_total), ascending.

    ``uniform`` strides evenly; ``random`` samples without replacement
    from a seeded generator.
    """
    if n_total <= 0:
        raise ValueError(f"n_total must be > 0, got {n_total}")
    if not 0 < k <= n_total:
        raise ValueError(f"k must be in (0, {n_total}], got {k}")
    if strategy == "uniform":
        return [i * n_total // k for i in range(k)]
    if strategy == "random":
        return sorted(random.Random(seed).sample(range(n_total), k))
    raise ValueError(f"unknown strategy {strategy!r}")


# ---------------------------------------------------------------------------
# COCO JSON interchange


def encode_segmentation(seg: Segmentation):
    """Canonical JSON form: rings as flat coordinate lists, masks as compressed RLE."""
    if isinstance(seg, RleMask):
        return {"size": [seg.height, seg.width], "counts": geometry.rle_encode_string(seg)}
    rings = (seg,) if isinstance(seg, Polygon) else tuple(seg)
    return [[coord for p in ring.points for coord in p] for ring in rings]


def decode_segmentation(form) -> Segmentation:
    """Accept any of the three COCO segmentation forms."""
    if isinstance(form, list):
        if not form:
            raise SchemaError("empty polygon segmentation")
        rings = []
        for ring in form:
            if not isinstance(ring, list) or len(ring) < 6 or len(ring) % 2 != 0:
                raise SchemaError(f"polygon ring must hold >=3 coordinate pairs, got {ring!r}")
            rings.append(Polygon.from_xy(list(zip(ring[0::2], ring[1::2]))))
        return rings[0] if len(rings) == 1 else tuple(rings)
    if isinstance(form, dict):
        size = form.get("size")
        counts = form.get("counts")
        if not (isinstance(size, list) and len(size) == 2):
            raise SchemaError(f"RLE size must be [height, width], got {size!r}")
        h, w = int(size[0]), int(size[1])
        if isinstance(counts, str):
            return geometry.rle_decode_string(counts, h, w)
        if isinstance(counts, list):
            return RleMask(h, w, tuple(int(c) for c in counts))
        raise SchemaError(f"RLE counts must be a list or string, got {type(counts).__name__}")
    raise SchemaError(f"unsupported segmentation form: {type(form).__name__}")


def write_coco(ds: CocoDataset) -> bytes:
    """Serialize with a fixed key order so identical datasets yield identical bytes."""
    payload = {
        "images": [
            {
                "id": img.id,
                "file_name": img.file_name,
                "height": img.height,
                "width": img.width,
                **({"frame_index": img.frame_index} if img.frame_index is not None else {}),
            }
            for img in ds.images
        ],
        "annotations": [
            {
                "id": ann.id,
                "image_id": ann.image_id,
                "category_id": ann.category_id,
                "segmentation": encode_segmentation(ann.segmentation),
                "bbox": list(ann.bbox),
                "area": ann.area,
                "iscrowd": ann.iscrowd,
            }
            for ann in ds.annotations
        ],
        "categories": [{"id": c.id, "name": c.name} for c in ds.categories],
    }
    return (json.dumps(payload, indent=2) + "\n").encode("utf-8")


def read_coco(data: bytes | str) -> CocoDataset:
    """Parse and referentially validate a COCO dataset."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON: {e}") from e
    if not isinstance(doc, dict):
        raise SchemaError("top-level value must be an object")

    ds = CocoDataset()
    for raw in doc.get("categories", []):
        ds.categories.append(CocoCategory(id=int(raw["id"]), name=str(raw["name"])))
    for raw in doc.get("images", []):
        ds.images.append(
            CocoImage(
                id=int(raw["id"]),
                file_name=str(raw["file_name"]),
                height=int(raw["height"]),
                width=int(raw["width"]),
                frame_index=int(raw["frame_index"]) if raw.get("frame_index") is not None else None,
            )
        )
    for raw in doc.get("annotations", []):
        bbox = raw.get("bbox", [0, 0, 0, 0])
        ds.annotations.append(
            CocoAnnotation(
                id=int(raw["id"]),
                image_id=int(raw["image_id"]),
                category_id=int(raw["category_id"]),
                segmentation=decode_segmentation(raw["segmentation"]),
                bbox=BoundingBox(*(float(v) for v in bbox)),
                area=float(raw.get("area", 0.0)),
                iscrowd=int(raw.get("iscrowd", 0)),
            )
        )

    problems = []
    for name, items in (("image", ds.images), ("annotation", ds.annotations), ("category", ds.categories)):
        ids = [it.id for it in items]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            problems.append(f"duplicate {name} ids {dup}")
    image_ids = {img.id for img in ds.images}
    cat_ids = {c.id for c in ds.categories}
    bad_img = sorted(a.id for a in ds.annotations if a.image_id not in image_ids)
    bad_cat = sorted(a.id for a in ds.annotations if a.category_id not in cat_ids)
    if bad_img:
        problems.append(f"annotations {bad_img} reference missing images")
    if bad_cat:
        problems.append(f"annotations {bad_cat} reference missing categories")
    if problems:
        raise IntegrityError("; ".join(problems))
    return ds


# ---------------------------------------------------------------------------
# prediction streams (JSON-Lines)

_PREDICTION_KEYS = ("frame", "label", "score", "bbox", "segmentation")


def parse_predictions(stream: bytes | str | Iterable[str]) -> list[DetectionRecord]:
    """Parse a JSON-Lines prediction stream, one record per line.

    Errors carry the 1-based line number; blank lines are skipped.
    """
    if isinstance(stream, bytes):
        lines: Iterable[str] = stream.decode("utf-8").splitlines()
    elif isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = stream

    records = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"line {lineno}: malformed JSON: {e}") from e
        if not isinstance(raw, dict):
            raise SchemaError(f"line {lineno}: record must be an object")
        missing = [k for k in _PREDICTION_KEYS if k not in raw]
        if missing:
            raise SchemaError(f"line {lineno}: missing fields {missing}")
        if not isinstance(raw["frame"], int) or raw["frame"] < 0:
            raise SchemaError(f"line {lineno}: frame must be a non-negative integer")
        if not isinstance(raw["label"], str) or not raw["label"]:
            raise SchemaError(f"line {lineno}: label must be a non-empty string")
        score = raw["score"]
        if not isinstance(score, (int, float)):
            raise SchemaError(f"line {lineno}: score must be a number")
        if not 0.0 <= score <= 1.0:
            raise OutOfRangeError(f"line {lineno}: score {score} outside [0, 1]")
        bbox = raw["bbox"]
        if not (isinstance(bbox, list) and len(bbox) == 4):
            raise SchemaError(f"line {lineno}: bbox must be [x, y, w, h]")
        try:
            seg = decode_segmentation(raw["segmentation"])
        except SegtrackError as e:
            raise type(e)(f"line {lineno}: {e}") from e
        records.append(
            DetectionRecord(
                frame=raw["frame"],
                label=raw["label"],
                score=float(score),
                segmentation=seg,
                bbox=BoundingBox(*(float(v) for v in bbox)),
            )
        )
    return records


def write_predictions(records: Sequence[DetectionRecord]) -> bytes:
    lines = []
    for r in records:
        lines.append(
            json.dumps(
                {
                    "frame": r.frame,
                    "label": r.label,
                    "score": r.score,
                    "bbox": list(r.bbox),
                    "segmentation": encode_segmentation(r.segmentation),
                }
            )
        )
    return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")


# ---------------------------------------------------------------------------
# dataset -> tracks


def image_frame_map(ds: CocoDataset) -> dict[int, CocoImage]:
    """Map frame numbers to images.

    Uses the ``frame_index`` extension when every image carries it,
    otherwise frames follow ascending file name order.
    """
    if all(img.frame_index is not None for img in ds.images):
        mapping = {}
        for img in ds.images:
            if img.frame_index in mapping:
                raise IntegrityError(f"duplicate frame_index {img.frame_index}")
            mapping[img.frame_index] = img
        return mapping
    ordered = sorted(ds.images, key=lambda img: img.file_name)
    return {i: img for i, img in enumerate(ordered)}


def coco_to_tracks(ds: CocoDataset) -> list[Track]:
    """Ground-truth tracks from a COCO dataset: one per category with annotations."""
    frames = image_frame_map(ds)
    frame_of_image = {img.id: f for f, img in frames.items()}
    states: dict[str, list[TrackState]] = {}
    for ann in ds.annotations:
        label = ds.category_name(ann.category_id)
        frame = frame_of_image[ann.image_id]
        states.setdefault(label, []).append(
            TrackState(
                frame=frame,
                present=True,
                centroid=geometry.centroid(ann.segmentation),
                score=1.0,
                segmentation=ann.segmentation,
            )
        )
    tracks = []
    for label in sorted(states):
        try:
            tracks.append(Track(label, states[label]))
        except ValueError as e:
            raise SchemaError(str(e)) from e
    return tracks
