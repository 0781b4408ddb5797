"""Pose dataset model, skeleton definitions and JSON (de)serialization.

Two dataset flavours are supported:

- COCO person keypoints (17 joints), the usual ``images``/``annotations``
  document.
- A simplified MPII document (16 joints) with the same layout plus a
  ``head_box`` per annotation, used by the PCKh evaluator.

Prediction files follow the COCO results convention: a JSON array of
``{"image_id", "keypoints", "score"}`` records.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "COCO",
    "MPII",
    "ImageRecord",
    "ParseError",
    "PartMap",
    "PersonInstance",
    "PoseDataset",
    "PredictionRecord",
    "PredictionSet",
    "SkeletonSchema",
    "ValidationError",
    "canonical_json",
    "dataset_id",
    "parse_coco",
    "parse_dataset",
    "parse_mpii",
    "parse_predictions",
    "part_joints",
    "write_coco",
    "write_dataset",
    "write_mpii",
    "write_predictions",
]

# Labeled keypoints may overflow the image by at most this fraction of its extent.
KEYPOINT_MARGIN = 0.10


class ParseError(ValueError):
    """Malformed JSON input. ``offset`` is the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class ValidationError(ValueError):
    """Well-formed JSON that violates the dataset contract."""


@dataclass(frozen=True)
class PartMap:
    small_parts: Mapping[str, frozenset]
    large_parts: Mapping[str, frozenset]

    def all_parts(self) -> dict[str, frozenset]:
        return {**self.small_parts, **self.large_parts}


@dataclass(frozen=True)
class SkeletonSchema:
    name: str
    joint_names: tuple[str, ...]
    flip_pairs: tuple[tuple[int, int], ...]
    part_map: PartMap
    # Joints kept by the half-body transform when it picks the upper/lower half.
    upper_joints: frozenset
    lower_joints: frozenset

    def __post_init__(self):
        if len(set(self.joint_names)) != len(self.joint_names):
            raise ValueError("duplicate joint names")
        seen: set[int] = set()
        for left, right in self.flip_pairs:
            for j in (left, right):
                if not 0 <= j < self.num_joints:
                    raise ValueError(f"flip pair index {j} out of range")
                if j in seen:
                    raise ValueError(f"joint {j} appears in more than one flip pair")
                seen.add(j)
        for name, joints in self.part_map.all_parts().items():
            if any(not 0 <= j < self.num_joints for j in joints):
                raise ValueError(f"part {name!r} has out-of-range joints")

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)

    def joint_index(self, name: str | int) -> int:
        if isinstance(name, (int, np.integer)):
            if not 0 <= name < self.num_joints:
                raise KeyError(f"joint index {name} out of range")
            return int(name)
        key = str(name).strip().lower().replace(" ", "_").replace("-", "_")
        try:
            return self.joint_names.index(key)
        except ValueError:
            raise KeyError(
                f"unknown joint {name!r}; valid joints: {', '.join(self.joint_names)}"
            ) from None

    def flip_permutation(self) -> np.ndarray:
        perm = np.arange(self.num_joints)
        for left, right in self.flip_pairs:
            perm[left], perm[right] = right, left
        return perm


def _part_name(name: str) -> str:
    return name.strip().lower().replace(" ", "_").replace("-", "_")


def _fs(*joints: int) -> frozenset:
    return frozenset(joints)


COCO = SkeletonSchema(
    name="coco",
    joint_names=(
        "nose", "left_eye", "right_eye", "left_ear", "right_ear",
        "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
        "left_wrist", "right_wrist", "left_hip", "right_hip",
        "left_knee", "right_knee", "left_ankle", "right_ankle",
    ),
    flip_pairs=((1, 2), (3, 4), (5, 6), (7, 8), (9, 10), (11, 12), (13, 14), (15, 16)),
    part_map=PartMap(
        small_parts={
            "head": _fs(0, 1, 2, 3, 4),
            "left_arm": _fs(5, 7, 9),
            "right_arm": _fs(6, 8, 10),
            "left_leg": _fs(11, 13, 15),
            "right_leg": _fs(12, 14, 16),
            "corpus": _fs(5, 6, 11, 12),
        },
        large_parts={
            "upper_body": _fs(*range(11)),
            "lower_body": _fs(*range(11, 17)),
            "left_side": _fs(1, 3, 5, 7, 9, 11, 13, 15),
            "right_side": _fs(2, 4, 6, 8, 10, 12, 14, 16),
        },
    ),
    upper_joints=_fs(*range(11)),
    lower_joints=_fs(*range(11, 17)),
)

# MPII order: r_ankle r_knee r_hip l_hip l_knee l_ankle pelvis thorax
#             upper_neck head_top r_wrist r_elbow r_shoulder l_shoulder l_elbow l_wrist
MPII = SkeletonSchema(
    name="mpii",
    joint_names=(
        "right_ankle", "right_knee", "right_hip", "left_hip", "left_knee",
        "left_ankle", "pelvis", "thorax", "upper_neck", "head_top",
        "right_wrist", "right_elbow", "right_shoulder", "left_shoulder",
        "left_elbow", "left_wrist",
    ),
    flip_pairs=((0, 5), (1, 4), (2, 3), (10, 15), (11, 14), (12, 13)),
    part_map=PartMap(
        small_parts={
            "head": _fs(8, 9),
            "left_arm": _fs(13, 14, 15),
            "right_arm": _fs(10, 11, 12),
            "left_leg": _fs(3, 4, 5),
            "right_leg": _fs(0, 1, 2),
            "corpus": _fs(2, 3, 6, 7, 12, 13),
        },
        large_parts={
            "upper_body": _fs(7, 8, 9, 10, 11, 12, 13, 14, 15),
            "lower_body": _fs(0, 1, 2, 3, 4, 5, 6),
            "left_side": _fs(3, 4, 5, 13, 14, 15),
            "right_side": _fs(0, 1, 2, 10, 11, 12),
        },
    ),
    upper_joints=_fs(7, 8, 9, 10, 11, 12, 13, 14, 15),
    lower_joints=_fs(0, 1, 2, 3, 4, 5, 6),
)

SCHEMAS = {"coco": COCO, "mpii": MPII}


def part_joints(part: str, schema: SkeletonSchema = COCO) -> frozenset:
    """Joint indices making up a named body part.

    Names are case-insensitive and spaces/underscores are interchangeable,
    so ``"left arm"`` and ``"left_arm"`` resolve to the same part.
    """
    parts = schema.part_map.all_parts()
    key = _part_name(part)
    if key not in parts:
        raise KeyError(f"unknown part {part!r}; valid parts: {', '.join(parts)}")
    return parts[key]


def _frozen_array(values: Any, shape: tuple[int, ...]) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(shape)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ImageRecord:
    id: int
    file_name: str
    width: int
    height: int


@dataclass(frozen=True, eq=False)
class PersonInstance:
    """One annotated person.

    ``keypoints`` is a read-only ``(J, 3)`` float array of ``(x, y, v)``.
    ``removed`` lists joints whose labels were dropped by an occlusion
    augmentation; they keep ``v == 1`` but get zero target weight.
    """

    id: int
    image_id: int
    keypoints: np.ndarray
    bbox: tuple[float, float, float, float]
    area: float
    iscrowd: bool = False
    head_box: tuple[float, float, float, float] | None = None
    removed: tuple[int, ...] = ()

    def __post_init__(self):
        kps = np.array(self.keypoints, dtype=np.float64)
        if kps.ndim == 1:
            if kps.size % 3:
                raise ValidationError(f"annotation {self.id}: keypoint array length {kps.size} is not a multiple of 3")
            kps = kps.reshape(-1, 3)
        object.__setattr__(self, "keypoints", _frozen_array(kps, kps.shape))
        object.__setattr__(self, "bbox", tuple(float(b) for b in self.bbox))
        object.__setattr__(self, "area", float(self.area))
        object.__setattr__(self, "iscrowd", bool(self.iscrowd))
        if self.head_box is not None:
            object.__setattr__(self, "head_box", tuple(float(b) for b in self.head_box))
        object.__setattr__(self, "removed", tuple(sorted(int(j) for j in self.removed)))

    @property
    def visibility(self) -> np.ndarray:
        return self.keypoints[:, 2]

    @property
    def labeled(self) -> np.ndarray:
        """Boolean mask of joints with ``v > 0``."""
        return self.keypoints[:, 2] > 0

    @property
    def num_labeled(self) -> int:
        return int(np.count_nonzero(self.labeled))

    def target_weights(self) -> np.ndarray:
        """Per-joint heatmap target weight: labeled and not removed."""
        w = self.labeled.astype(np.float64)
        if self.removed:
            w[list(self.removed)] = 0.0
        return w

    def __eq__(self, other):
        if not isinstance(other, PersonInstance):
            return NotImplemented
        return (
            self.id == other.id
            and self.image_id == other.image_id
            and self.keypoints.shape == other.keypoints.shape
            and np.array_equal(self.keypoints, other.keypoints)
            and self.bbox == other.bbox
            and self.area == other.area
            and self.iscrowd == other.iscrowd
            and self.head_box == other.head_box
            and self.removed == other.removed
        )

    __hash__ = None


@dataclass(frozen=True)
class PoseDataset:
    schema: SkeletonSchema
    images: tuple[ImageRecord, ...] = ()
    instances: tuple[PersonInstance, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "instances", tuple(self.instances))

    def image(self, image_id: int) -> ImageRecord:
        for rec in self.images:
            if rec.id == image_id:
                return rec
        raise KeyError(f"no image with id {image_id}")

    def instances_of(self, image_id: int) -> list[PersonInstance]:
        return [inst for inst in self.instances if inst.image_id == image_id]

    def validate(self) -> "PoseDataset":
        """Check cross-record invariants; returns ``self`` for chaining."""
        by_id: dict[int, ImageRecord] = {}
        for rec in self.images:
            if rec.id in by_id:
                raise ValidationError(f"duplicate image id {rec.id}")
            if rec.width < 1 or rec.height < 1:
                raise ValidationError(f"image {rec.id}: non-positive size")
            by_id[rec.id] = rec
        seen_ann: set[int] = set()
        for inst in self.instances:
            if inst.id in seen_ann:
                raise ValidationError(f"duplicate annotation id {inst.id}")
            seen_ann.add(inst.id)
            _validate_instance(inst, self.schema)
            rec = by_id.get(inst.image_id)
            if rec is None:
                raise ValidationError(
                    f"annotation {inst.id} references missing image {inst.image_id}"
                )
            lab = inst.labeled
            if lab.any():
                xs, ys = inst.keypoints[lab, 0], inst.keypoints[lab, 1]
                mx, my = KEYPOINT_MARGIN * rec.width, KEYPOINT_MARGIN * rec.height
                if (
                    xs.min() < -mx or xs.max() > rec.width + mx
                    or ys.min() < -my or ys.max() > rec.height + my
                ):
                    raise ValidationError(
                        f"annotation {inst.id}: labeled keypoint outside image {rec.id} bounds"
                    )
        return self

    def __eq__(self, other):
        if not isinstance(other, PoseDataset):
            return NotImplemented
        return (
            self.schema.name == other.schema.name
            and self.images == other.images
            and len(self.instances) == len(other.instances)
            and all(a == b for a, b in zip(self.instances, other.instances))
        )

    __hash__ = None


def _validate_instance(inst: PersonInstance, schema: SkeletonSchema) -> None:
    if inst.keypoints.shape != (schema.num_joints, 3):
        raise ValidationError(
            f"annotation {inst.id}: expected {schema.num_joints} keypoints "
            f"({3 * schema.num_joints} values), got {inst.keypoints.size} values"
        )
    vis = inst.keypoints[:, 2]
    if not np.all(np.isin(vis, (0.0, 1.0, 2.0))):
        raise ValidationError(f"annotation {inst.id}: visibility flags must be 0, 1 or 2")
    if not np.all(np.isfinite(inst.keypoints)):
        raise ValidationError(f"annotation {inst.id}: non-finite keypoint coordinate")
    _, _, w, h = inst.bbox
    if not (w > 0 and h > 0):
        raise ValidationError(f"annotation {inst.id}: bbox width and height must be positive")
    if not inst.area > 0:
        raise ValidationError(f"annotation {inst.id}: area must be positive")
    if any(not 0 <= j < schema.num_joints for j in inst.removed):
        raise ValidationError(f"annotation {inst.id}: removed joint index out of range")


@dataclass(frozen=True, eq=False)
class PredictionRecord:
    image_id: int
    keypoints: np.ndarray  # (J, 3): x, y, per-joint confidence
    score: float
    instance_id: int | None = None

    def __post_init__(self):
        kps = np.array(self.keypoints, dtype=np.float64)
        if kps.ndim == 1:
            kps = kps.reshape(-1, 3)
        object.__setattr__(self, "keypoints", _frozen_array(kps, kps.shape))
        object.__setattr__(self, "score", float(self.score))

    def __eq__(self, other):
        if not isinstance(other, PredictionRecord):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.score == other.score
            and self.instance_id == other.instance_id
            and np.array_equal(self.keypoints, other.keypoints)
        )

    __hash__ = None


class PredictionSet(tuple):
    """Immutable sequence of :class:`PredictionRecord`, sorted stably by image id."""

    def __new__(cls, records: Iterable[PredictionRecord] = ()):
        return super().__new__(cls, sorted(records, key=lambda r: r.image_id))

    def by_image(self) -> dict[int, list[PredictionRecord]]:
        out: dict[int, list[PredictionRecord]] = {}
        for rec in self:
            out.setdefault(rec.image_id, []).append(rec)
        return out


# ---------------------------------------------------------------- parsing

def _load_json(data: bytes | str) -> Any:
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError("invalid UTF-8", exc.start) from exc
    else:
        text = data
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ParseError(f"malformed JSON: {exc.msg}", offset) from exc


def _require(obj: Mapping, key: str, where: str) -> Any:
    if not isinstance(obj, Mapping):
        raise ValidationError(f"{where}: expected an object")
    if key not in obj:
        raise ValidationError(f"{where}: missing field {key!r}")
    return obj[key]


def _box(values: Any, where: str) -> tuple[float, float, float, float]:
    if not isinstance(values, Sequence) or len(values) != 4:
        raise ValidationError(f"{where}: expected 4 numbers")
    try:
        box = tuple(float(v) for v in values)
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: expected 4 numbers") from None
    if not all(math.isfinite(v) for v in box):
        raise ValidationError(f"{where}: non-finite value")
    return box  # type: ignore[return-value]


def _keypoints(values: Any, schema: SkeletonSchema, where: str) -> np.ndarray:
    expected = 3 * schema.num_joints
    if not isinstance(values, Sequence) or isinstance(values, str):
        raise ValidationError(f"{where}: keypoints must be an array")
    if len(values) != expected:
        raise ValidationError(
            f"{where}: keypoints must have {expected} values, got {len(values)}"
        )
    try:
        return np.array([float(v) for v in values], dtype=np.float64).reshape(-1, 3)
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: keypoints must be numbers") from None


def _parse_images(doc: Mapping) -> list[ImageRecord]:
    images = _require(doc, "images", "document")
    if not isinstance(images, list):
        raise ValidationError("document: 'images' must be an array")
    out = []
    for i, img in enumerate(images):
        where = f"images[{i}]"
        out.append(
            ImageRecord(
                id=int(_require(img, "id", where)),
                file_name=str(_require(img, "file_name", where)),
                width=int(_require(img, "width", where)),
                height=int(_require(img, "height", where)),
            )
        )
    return out


def _parse_annotations(doc: Mapping, schema: SkeletonSchema, need_head_box: bool) -> list[PersonInstance]:
    anns = _require(doc, "annotations", "document")
    if not isinstance(anns, list):
        raise ValidationError("document: 'annotations' must be an array")
    out = []
    for i, ann in enumerate(anns):
        ann_id = _require(ann, "id", f"annotations[{i}]")
        where = f"annotation {ann_id}"
        bbox = _box(_require(ann, "bbox", where), f"{where} bbox")
        head_box = None
        if need_head_box:
            if ann.get("head_box") is None:
                raise ValidationError(f"{where}: missing head_box (required for PCKh)")
            head_box = _box(ann["head_box"], f"{where} head_box")
        if "area" in ann:
            area = float(ann["area"])
        elif need_head_box:
            area = bbox[2] * bbox[3]
        else:
            raise ValidationError(f"{where}: missing field 'area'")
        out.append(
            PersonInstance(
                id=int(ann_id),
                image_id=int(_require(ann, "image_id", where)),
                keypoints=_keypoints(_require(ann, "keypoints", where), schema, where),
                bbox=bbox,
                area=area,
                iscrowd=bool(ann.get("iscrowd", 0)),
                head_box=head_box,
                removed=tuple(ann.get("removed_joints", ())),
            )
        )
    return out


def parse_coco(data: bytes | str) -> PoseDataset:
    """Parse a COCO person-keypoints document into a validated dataset.

    Crowd annotations (``iscrowd == 1``) are kept; the evaluator skips them.
    """
    doc = _load_json(data)
    if not isinstance(doc, Mapping):
        raise ValidationError("document: expected a JSON object")
    ds = PoseDataset(COCO, _parse_images(doc), _parse_annotations(doc, COCO, need_head_box=False))
    return ds.validate()


def parse_mpii(data: bytes | str) -> PoseDataset:
    """Parse the simplified MPII document. Every annotation needs a ``head_box``."""
    doc = _load_json(data)
    if not isinstance(doc, Mapping):
        raise ValidationError("document: expected a JSON object")
    ds = PoseDataset(MPII, _parse_images(doc), _parse_annotations(doc, MPII, need_head_box=True))
    return ds.validate()


def parse_dataset(data: bytes | str) -> PoseDataset:
    """Parse either flavour, choosing MPII when annotations carry 48 keypoint values."""
    doc = _load_json(data)
    anns = doc.get("annotations") if isinstance(doc, Mapping) else None
    if anns and isinstance(anns[0], Mapping):
        kps = anns[0].get("keypoints")
        if isinstance(kps, list) and len(kps) == 3 * MPII.num_joints:
            return parse_mpii(data)
    return parse_coco(data)


def parse_predictions(data: bytes | str, schema: SkeletonSchema = COCO) -> PredictionSet:
    doc = _load_json(data)
    if not isinstance(doc, list):
        raise ValidationError("predictions: expected a JSON array")
    records = []
    for i, item in enumerate(doc):
        where = f"prediction {i}"
        score = float(_require(item, "score", where))
        if not math.isfinite(score):
            raise ValidationError(f"{where}: non-finite score")
        kps = _keypoints(_require(item, "keypoints", where), schema, where)
        inst = item.get("instance_id")
        records.append(
            PredictionRecord(
                image_id=int(_require(item, "image_id", where)),
                keypoints=kps,
                score=score,
                instance_id=None if inst is None else int(inst),
            )
        )
    return PredictionSet(records)


# ---------------------------------------------------------------- writing

def _num(x: float) -> int | float:
    """Integral values serialize as JSON integers, everything else as the
    shortest decimal that round-trips."""
    x = float(x)
    if x.is_integer() and abs(x) < 2**53:
        return int(x)
    return x


def canonical_json(obj: Any, indent: int | None = None) -> bytes:
    """Deterministic JSON encoding: sorted keys, shortest round-trip floats."""
    if indent is None:
        text = json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
    else:
        text = json.dumps(obj, sort_keys=True, indent=indent, allow_nan=False)
    return (text + "\n").encode("utf-8")


def _image_dict(rec: ImageRecord) -> dict:
    return {"id": rec.id, "file_name": rec.file_name, "width": rec.width, "height": rec.height}


def _instance_dict(inst: PersonInstance, mpii: bool) -> dict:
    out: dict[str, Any] = {
        "id": inst.id,
        "image_id": inst.image_id,
        "keypoints": [_num(v) for v in inst.keypoints.ravel()],
        "bbox": [_num(v) for v in inst.bbox],
        "area": _num(inst.area),
    }
    if mpii:
        out["head_box"] = [_num(v) for v in inst.head_box] if inst.head_box else None
    else:
        out["iscrowd"] = int(inst.iscrowd)
        if inst.head_box is not None:
            out["head_box"] = [_num(v) for v in inst.head_box]
    if inst.removed:
        out["removed_joints"] = list(inst.removed)
    return out


def write_coco(dataset: PoseDataset) -> bytes:
    return canonical_json(
        {
            "images": [_image_dict(r) for r in dataset.images],
            "annotations": [_instance_dict(i, mpii=False) for i in dataset.instances],
        }
    )


def write_mpii(dataset: PoseDataset) -> bytes:
    return canonical_json(
        {
            "images": [_image_dict(r) for r in dataset.images],
            "annotations": [_instance_dict(i, mpii=True) for i in dataset.instances],
        }
    )


def write_dataset(dataset: PoseDataset) -> bytes:
    return write_mpii(dataset) if dataset.schema.name == "mpii" else write_coco(dataset)


def write_predictions(preds: Iterable[PredictionRecord]) -> bytes:
    items = []
    for rec in preds:
        item: dict[str, Any] = {
            "image_id": rec.image_id,
            "keypoints": [_num(v) for v in rec.keypoints.ravel()],
            "score": _num(rec.score),
        }
        if rec.instance_id is not None:
            item["instance_id"] = rec.instance_id
        items.append(item)
    return canonical_json(items)


def dataset_id(dataset: PoseDataset) -> str:
    """Content hash identifying a ground-truth dataset across result files."""
    return hashlib.sha256(write_dataset(dataset)).hexdigest()[:16]
