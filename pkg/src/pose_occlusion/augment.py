"""Targeted occlusion augmentations and the standard top-down augmentations.

Every instance draws from its own random stream derived from
``(seed, image_id, instance_id)``, so results do not depend on processing
order, thread count, or which other instances are present.

Augmentations run on per-instance crops, after box handling; detector box
files are never read or modified here.
"""
from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, NamedTuple, Sequence

import numpy as np

from .imaging import (
    BlurParams,
    Circle,
    blur_region,
    crop_affine,
    fill_region,
    flip_horizontal,
    image_mean,
    min_rect,
    paste_resized,
    read_image,
    rotation_matrix,
    transform_keypoints,
    warp_affine,
    write_png,
)
from .occlusion import DEFAULT_RADIUS, KEYPOINT_BLUR, PART_BLUR, write_manifest
from .schema import (
    ImageRecord,
    PersonInstance,
    PoseDataset,
    SkeletonSchema,
    part_joints,
    write_dataset,
)

KINDS = ("tblur", "tcutout", "tblur_cutout", "multikeypoint", "partmix", "halfbody", "geometric")
OCCLUDING_KINDS = ("tblur", "tcutout", "tblur_cutout", "multikeypoint", "partmix")
_KIND_ALIASES = {
    "blur": "tblur",
    "blurring": "tblur",
    "cutout": "tcutout",
    "tblurpluscutout": "tblur_cutout",
    "blur_cutout": "tblur_cutout",
    "cutout_blur": "tblur_cutout",
    "multi_keypoint": "multikeypoint",
    "tpartmix": "partmix",
    "half_body": "halfbody",
}


class PolicyError(ValueError):
    pass


def instance_rng(seed: int, image_id: int, instance_id: int) -> np.random.Generator:
    """Independent random stream for one instance."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(image_id), int(instance_id)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class AugmentPolicy:
    kind: str
    level: str = "keypoint"
    p: float | None = None  # 0.3 for halfbody, 0.5 otherwise
    removal: bool = False
    max_keypoints: int = 5
    multi_mode: str = "cutout"
    radius: float = DEFAULT_RADIUS
    keypoint_blur: BlurParams = KEYPOINT_BLUR
    part_blur: BlurParams = PART_BLUR
    rotation: tuple[float, float] = (-45.0, 45.0)
    scale: tuple[float, float] = (0.65, 1.35)
    flip_p: float = 0.5
    partmix_same_part: bool = False
    halfbody_min_joints: int = 8
    halfbody_expand: float = 1.5

    def __post_init__(self):
        kind = _KIND_ALIASES.get(self.kind.lower(), self.kind.lower())
        if kind not in KINDS:
            raise PolicyError(f"unknown augmentation {self.kind!r}; valid kinds: {', '.join(KINDS)}")
        object.__setattr__(self, "kind", kind)
        level = {"k": "keypoint", "p": "part"}.get(self.level, self.level)
        if level not in ("keypoint", "part"):
            raise PolicyError(f"level must be 'keypoint' or 'part', got {self.level!r}")
        object.__setattr__(self, "level", level)
        if self.p is None:
            object.__setattr__(self, "p", 0.3 if kind == "halfbody" else 0.5)
        if not 0.0 <= self.p <= 1.0:
            raise PolicyError("probability must lie in [0, 1]")
        if self.max_keypoints < 1:
            raise PolicyError("max_keypoints must be at least 1")
        if self.multi_mode not in ("blur", "cutout"):
            raise PolicyError("multi_mode must be 'blur' or 'cutout'")
        if not self.radius > 0:
            raise PolicyError("radius must be positive")

    @property
    def name(self) -> str:
        parts = [self.kind]
        if self.kind in ("tblur", "tcutout", "tblur_cutout"):
            parts.append(self.level)
        if self.kind in OCCLUDING_KINDS:
            parts.append("removal" if self.removal else "keep")
        parts.append(f"p{self.p:g}")
        return "-".join(parts)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["keypoint_blur"] = {"kernel_size": self.keypoint_blur.kernel_size, "sigma": self.keypoint_blur.sigma}
        d["part_blur"] = {"kernel_size": self.part_blur.kernel_size, "sigma": self.part_blur.sigma}
        d["rotation"] = list(self.rotation)
        d["scale"] = list(self.scale)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AugmentPolicy":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise PolicyError(f"unknown policy fields: {', '.join(sorted(unknown))}")
        kw = dict(d)
        for key in ("keypoint_blur", "part_blur"):
            if isinstance(kw.get(key), dict):
                kw[key] = BlurParams(int(kw[key]["kernel_size"]), kw[key].get("sigma"))
        for key in ("rotation", "scale"):
            if key in kw:
                kw[key] = tuple(float(v) for v in kw[key])
        return cls(**kw)


@dataclass(frozen=True)
class Donor:
    """A PartMix donor: an instance crop another instance can borrow a part from."""

    image_id: int
    instance: PersonInstance
    image: np.ndarray


class AugmentResult(NamedTuple):
    image: np.ndarray
    instance: PersonInstance
    applied: bool
    regions: tuple  # occluded regions, in image coordinates


def _labeled(instance: PersonInstance) -> np.ndarray:
    return np.flatnonzero(instance.labeled)


def _eligible_parts(instance: PersonInstance, schema: SkeletonSchema) -> list[str]:
    lab = instance.labeled
    return [name for name, joints in schema.part_map.small_parts.items() if lab[sorted(joints)].any()]


def _occlude(img, region, how: str, policy: AugmentPolicy, blur: BlurParams, means) -> np.ndarray:
    if how in ("cutout", "both"):
        img = fill_region(img, region, "mean", means)
    if how in ("blur", "both"):
        img = blur_region(img, region, blur)
    return img


def _apply_removal(instance: PersonInstance, regions: Sequence) -> PersonInstance:
    kps = np.array(instance.keypoints, copy=True)
    removed = set(instance.removed)
    for j in _labeled(instance):
        x, y = kps[j, 0], kps[j, 1]
        if any(r.contains(x, y) for r in regions):
            kps[j, 2] = 1
            removed.add(int(j))
    return dataclasses.replace(instance, keypoints=kps, removed=tuple(removed))


def _box_corners(bbox) -> np.ndarray:
    x, y, w, h = bbox
    return np.array([[x, y, 2], [x + w, y, 2], [x, y + h, 2], [x + w, y + h, 2]], dtype=np.float64)


def _aabb(points: np.ndarray) -> tuple[float, float, float, float]:
    x0, y0 = points[:, 0].min(), points[:, 1].min()
    x1, y1 = points[:, 0].max(), points[:, 1].max()
    return float(x0), float(y0), float(x1 - x0), float(y1 - y0)


def _map_instance(instance: PersonInstance, m: np.ndarray, out_size: tuple[int, int], **changes) -> PersonInstance:
    kps = transform_keypoints(m, instance.keypoints, out_size)
    bbox = _aabb(transform_keypoints(m, _box_corners(instance.bbox)))
    area = instance.area * abs(np.linalg.det(m[:, :2]))
    return dataclasses.replace(instance, keypoints=kps, bbox=bbox, area=area, **changes)


def augment_instance(
    img: np.ndarray,
    instance: PersonInstance,
    policy: AugmentPolicy,
    rng: np.random.Generator,
    schema: SkeletonSchema,
    donors: Sequence[Donor] | None = None,
) -> AugmentResult:
    """Apply ``policy`` to one instance with probability ``policy.p``.

    Exactly one Bernoulli draw is taken first, whether or not it succeeds.
    Returns the (possibly) augmented image and instance, whether anything
    was applied, and the regions that were occluded.
    """
    unchanged = AugmentResult(np.array(img, copy=True), instance, False, ())
    if not rng.random() < policy.p:
        return unchanged
    labeled = _labeled(instance)
    if len(labeled) == 0:
        return unchanged
    height, width = np.asarray(img).shape[:2]
    kind = policy.kind

    if kind == "geometric":
        return _geometric(img, instance, policy, rng, schema)
    if kind == "halfbody":
        return _halfbody(img, instance, policy, rng, schema)

    means = image_mean(img)
    regions: list = []
    out = np.array(img, copy=True)
    if kind in ("tblur", "tcutout", "tblur_cutout"):
        how = {"tblur": "blur", "tcutout": "cutout", "tblur_cutout": "both"}[kind]
        if policy.level == "keypoint":
            j = labeled[rng.integers(len(labeled))]
            x, y = instance.keypoints[j, :2]
            region = Circle(float(x), float(y), policy.radius)
            blur = policy.keypoint_blur
        else:
            parts = _eligible_parts(instance, schema)
            part = parts[rng.integers(len(parts))]
            region = min_rect(instance.keypoints[sorted(part_joints(part, schema))], image_size=(width, height))
            blur = policy.part_blur
        out = _occlude(out, region, how, policy, blur, means)
        regions.append(region)
    elif kind == "multikeypoint":
        count = int(rng.integers(1, policy.max_keypoints + 1))
        count = min(count, len(labeled))
        chosen = rng.choice(labeled, size=count, replace=False)
        for j in chosen:
            x, y = instance.keypoints[j, :2]
            region = Circle(float(x), float(y), policy.radius)
            out = _occlude(out, region, policy.multi_mode, policy, policy.keypoint_blur, means)
            regions.append(region)
    elif kind == "partmix":
        out, region = _partmix(out, instance, policy, rng, schema, donors)
        regions.append(region)

    new_instance = _apply_removal(instance, regions) if policy.removal else instance
    return AugmentResult(out, new_instance, True, tuple(regions))


def _partmix(img, instance, policy, rng, schema, donors):
    height, width = img.shape[:2]
    parts = _eligible_parts(instance, schema)
    target = parts[rng.integers(len(parts))]
    dst_rect = min_rect(instance.keypoints[sorted(part_joints(target, schema))], image_size=(width, height))
    triples = []
    for d in donors or ():
        if d.image_id == instance.image_id:
            continue
        lab = d.instance.labeled
        for name, joints in schema.part_map.small_parts.items():
            if lab[sorted(joints)].all():
                triples.append((d, name))
    if policy.partmix_same_part:
        same = [t for t in triples if t[1] == target]
        triples = same or triples
    if not triples:
        raise PolicyError("PartMix needs a donor instance from another image with a fully labeled part")
    donor, part = triples[rng.integers(len(triples))]
    dh, dw = donor.image.shape[:2]
    src_rect = min_rect(donor.instance.keypoints[sorted(part_joints(part, schema))], image_size=(dw, dh))
    return paste_resized(img, donor.image, src_rect, dst_rect), dst_rect


def _halfbody(img, instance, policy, rng, schema) -> AugmentResult:
    unchanged = AugmentResult(np.array(img, copy=True), instance, False, ())
    labeled = set(_labeled(instance).tolist())
    if len(labeled) <= policy.halfbody_min_joints:
        return unchanged
    halves = [schema.upper_joints, schema.lower_joints]
    first = int(rng.integers(2))
    keep = labeled & halves[first]
    if len(keep) < 2:
        keep = labeled & halves[1 - first]
    if len(keep) < 2:
        return unchanged
    kps = np.array(instance.keypoints, copy=True)
    drop = [j for j in labeled if j not in keep]
    kps[drop, 2] = 0
    pts = kps[sorted(keep), :2]
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    w = max(x1 - x0, 1.0) * policy.halfbody_expand
    h = max(y1 - y0, 1.0) * policy.halfbody_expand
    bbox = (cx - w / 2, cy - h / 2, w, h)
    height, width = np.asarray(img).shape[:2]
    crop, m = crop_affine(img, bbox, out_w=width, out_h=height)
    reduced = dataclasses.replace(instance, keypoints=kps, bbox=bbox, area=w * h)
    removed = tuple(j for j in instance.removed if j in keep)
    return AugmentResult(crop, _map_instance(reduced, m, (width, height), removed=removed), True, ())


def _geometric(img, instance, policy, rng, schema) -> AugmentResult:
    angle = float(rng.uniform(*policy.rotation))
    scale = float(rng.uniform(*policy.scale))
    flip = bool(rng.random() < policy.flip_p)
    height, width = np.asarray(img).shape[:2]
    x, y, w, h = instance.bbox
    m = rotation_matrix(angle, (x + w / 2, y + h / 2), scale)
    out = warp_affine(img, m, (width, height))
    inst = _map_instance(instance, m, (width, height))
    if flip:
        out, kps = flip_horizontal(out, inst.keypoints, schema.flip_pairs)
        bx, by, bw, bh = inst.bbox
        perm = schema.flip_permutation()
        inst = dataclasses.replace(
            inst,
            keypoints=kps,
            bbox=(width - 1 - bx - bw, by, bw, bh),
            removed=tuple(int(perm[j]) for j in inst.removed),
        )
    return AugmentResult(out, inst, True, ())


# ------------------------------------------------------------- dataset level

def crop_instance(img: np.ndarray, instance: PersonInstance, out_size: tuple[int, int] = (192, 256)):
    """Top-down crop of one instance: returns the crop and the instance in crop coordinates."""
    out_w, out_h = out_size
    crop, m = crop_affine(img, instance.bbox, out_w, out_h)
    return crop, _map_instance(instance, m, (out_w, out_h))


def augment_dataset(
    dataset: PoseDataset,
    images_dir: str | Path,
    policy: AugmentPolicy,
    seed: int,
    out_dir: str | Path,
    threads: int = 1,
    crop_size: tuple[int, int] = (192, 256),
) -> tuple[PoseDataset, dict]:
    """Crop every instance, augment the crop, and write the results.

    Output layout under ``out_dir``: ``images/{image_id}_{instance_id}.png``
    crops, ``annotations.json`` with one image record per crop (its id is
    the instance id) and labels in crop coordinates, and ``manifest.json``
    with per-instance applied flags.
    """
    out_dir = Path(out_dir)
    images_dir = Path(images_dir)
    for rec in dataset.images:
        if not (images_dir / rec.file_name).is_file():
            raise FileNotFoundError(f"image not found: {images_dir / rec.file_name}")

    def crops_of(rec: ImageRecord):
        img = read_image(images_dir / rec.file_name)
        return [(inst, *crop_instance(img, inst, crop_size)) for inst in dataset.instances_of(rec.id)]

    def pmap(fn, items):
        if threads <= 1:
            return [fn(it) for it in items]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))

    cropped = [c for chunk in pmap(crops_of, dataset.images) for c in chunk]
    donors = None
    if policy.kind == "partmix":
        donors = [Donor(orig.image_id, inst, crop) for orig, crop, inst in cropped]

    def work(item):
        orig, crop, inst = item
        rng = instance_rng(seed, orig.image_id, orig.id)
        res = augment_instance(crop, inst, policy, rng, dataset.schema, donors)
        rel = f"images/{orig.image_id}_{orig.id}.png"
        write_png(out_dir / rel, res.image)
        return orig, res, rel

    results = pmap(work, cropped)
    images, instances, entries = [], [], []
    for orig, res, rel in results:
        images.append(ImageRecord(orig.id, rel, crop_size[0], crop_size[1]))
        instances.append(dataclasses.replace(res.instance, image_id=orig.id))
        entries.append({"image_id": orig.image_id, "instance_id": orig.id, "file": rel, "applied": bool(res.applied)})
    out = PoseDataset(dataset.schema, images, instances)
    manifest = {"variant": policy.name, "spec": policy.to_dict(), "seed": int(seed), "entries": entries}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "annotations.json").write_bytes(write_dataset(out))
    write_manifest(out_dir / "manifest.json", manifest)
    return out, manifest
