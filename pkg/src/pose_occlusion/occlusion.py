"""Keypoint and body-part occlusion attacks.

An attack perturbs pixels only: a disk centred on one joint, or the
tightest rectangle around the labeled joints of a body part, is blurred,
blacked out, or filled with the image mean. Labels are never touched.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .imaging import (
    BlurParams,
    Circle,
    EmptyTargetError,
    Rect,
    blur_region,
    fill_region,
    image_mean,
    min_rect,
    read_image,
    region_mask,
    write_png,
)
from .schema import PersonInstance, PoseDataset, SkeletonSchema, canonical_json, part_joints, write_dataset

MODES = ("blur", "blackout", "meanout")
_MODE_ALIASES = {"blurring": "blur", "black": "blackout", "mean": "meanout", "cutout": "meanout"}

DEFAULT_RADIUS = 6.0
KEYPOINT_BLUR = BlurParams(9)  # sigma (9 - 1) / 6
PART_BLUR = BlurParams(31, 5.0)


def normalize_mode(mode: str) -> str:
    m = mode.strip().lower()
    m = _MODE_ALIASES.get(m, m)
    if m not in MODES:
        raise ValueError(f"unknown occlusion mode {mode!r}; valid modes: {', '.join(MODES)}")
    return m


@dataclass(frozen=True)
class OcclusionSpec:
    """Declarative attack description.

    ``target`` is ``"keypoint"`` or ``"part"``; ``name`` is the joint or
    part name. ``radius`` only applies to keypoint targets. ``blur``
    defaults to a 9-tap kernel for keypoints and 31 taps, sigma 5, for parts.
    """

    target: str
    name: str
    mode: str
    radius: float = DEFAULT_RADIUS
    blur: BlurParams | None = None

    def __post_init__(self):
        if self.target not in ("keypoint", "part"):
            raise ValueError(f"target must be 'keypoint' or 'part', got {self.target!r}")
        object.__setattr__(self, "mode", normalize_mode(self.mode))
        object.__setattr__(self, "name", self.name.strip().lower().replace(" ", "_"))
        if self.target == "keypoint" and not self.radius > 0:
            raise ValueError("keypoint attacks need a positive radius")
        if self.blur is None:
            object.__setattr__(self, "blur", KEYPOINT_BLUR if self.target == "keypoint" else PART_BLUR)

    @property
    def variant(self) -> str:
        if self.target == "keypoint":
            return f"keypoint-{self.name}-{self.mode}-r{self.radius:g}"
        return f"part-{self.name}-{self.mode}"

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"target": self.target, "mode": self.mode}
        if self.target == "keypoint":
            d["joint"] = self.name
            d["radius"] = self.radius
        else:
            d["part"] = self.name
        if self.mode == "blur":
            d["blur"] = {"kernel_size": self.blur.kernel_size, "sigma": self.blur.sigma}
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "OcclusionSpec":
        target = str(d["target"])
        if ":" in target:
            target, name = target.split(":", 1)
        else:
            name = d.get("joint") if target == "keypoint" else d.get("part")
            if name is None:
                raise ValueError(f"{target} spec needs a {'joint' if target == 'keypoint' else 'part'} name")
        blur = d.get("blur")
        return cls(
            target=target,
            name=str(name),
            mode=str(d["mode"]),
            radius=float(d.get("radius", DEFAULT_RADIUS)),
            blur=BlurParams(int(blur["kernel_size"]), blur.get("sigma")) if blur else None,
        )


def perturb(
    img: np.ndarray,
    region,
    mode: str,
    blur: BlurParams | None = None,
    means: Sequence[float] | None = None,
) -> np.ndarray:
    """Apply one occlusion mode to one region."""
    mode = normalize_mode(mode)
    if mode == "blur":
        return blur_region(img, region, blur or KEYPOINT_BLUR)
    if mode == "blackout":
        return fill_region(img, region, "black")
    return fill_region(img, region, "mean", means)


def keypoint_region(instance: PersonInstance, joint: int, radius: float) -> Circle | None:
    x, y, v = instance.keypoints[joint]
    if v <= 0:
        return None
    return Circle(float(x), float(y), float(radius))


def part_region(
    instance: PersonInstance,
    part: str,
    schema: SkeletonSchema,
    image_size: tuple[int, int] | None = None,
) -> Rect | None:
    joints = sorted(part_joints(part, schema))
    try:
        return min_rect(instance.keypoints[joints], pad=0.0, image_size=image_size)
    except EmptyTargetError:
        return None


def occlude_keypoint(
    img: np.ndarray,
    instance: PersonInstance,
    joint: int,
    spec: OcclusionSpec,
    means: Sequence[float] | None = None,
) -> np.ndarray:
    """Occlude a disk of ``spec.radius`` around one joint; unlabeled joints are a no-op."""
    region = keypoint_region(instance, joint, spec.radius)
    if region is None:
        return np.array(img, copy=True)
    return perturb(img, region, spec.mode, spec.blur, means)


def occlude_part(
    img: np.ndarray,
    instance: PersonInstance,
    part: str,
    spec: OcclusionSpec,
    schema: SkeletonSchema,
    means: Sequence[float] | None = None,
) -> np.ndarray:
    height, width = np.asarray(img).shape[:2]
    region = part_region(instance, part, schema, (width, height))
    if region is None:
        return np.array(img, copy=True)
    return perturb(img, region, spec.mode, spec.blur, means)


def apply_spec(
    img: np.ndarray,
    instance: PersonInstance,
    spec: OcclusionSpec,
    schema: SkeletonSchema,
) -> np.ndarray:
    if spec.target == "keypoint":
        return occlude_keypoint(img, instance, schema.joint_index(spec.name), spec)
    return occlude_part(img, instance, spec.name, spec, schema)


# ------------------------------------------------------------- dataset level

def _map(fn, items: Iterable, threads: int) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _image_path(images_dir: Path, file_name: str) -> Path:
    path = Path(images_dir) / file_name
    if not path.is_file():
        raise FileNotFoundError(f"image not found: {path}")
    return path


def write_manifest(path: Path, manifest: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(canonical_json(manifest, indent=1))


def attack_dataset(
    dataset: PoseDataset,
    images_dir: str | Path,
    spec: OcclusionSpec,
    out_dir: str | Path,
    threads: int = 1,
    seed: int = 0,
) -> dict:
    """Attack every instance in its own copy of its image.

    Writes ``images/{image_id}_{instance_id}.png``, an unchanged copy of the
    annotations and ``manifest.json`` under ``out_dir``; returns the manifest.
    """
    out_dir = Path(out_dir)
    images_dir = Path(images_dir)
    for rec in dataset.images:
        _image_path(images_dir, rec.file_name)

    def work(rec):
        img = read_image(images_dir / rec.file_name)
        entries = []
        for inst in dataset.instances_of(rec.id):
            rel = f"images/{rec.id}_{inst.id}.png"
            write_png(out_dir / rel, apply_spec(img, inst, spec, dataset.schema))
            entries.append({"image_id": rec.id, "instance_id": inst.id, "file": rel})
        return entries

    entries = [e for chunk in _map(work, dataset.images, threads) for e in chunk]
    manifest = {"variant": spec.variant, "spec": spec.to_dict(), "seed": int(seed), "entries": entries}
    (out_dir / "annotations.json").write_bytes(write_dataset(dataset))
    write_manifest(out_dir / "manifest.json", manifest)
    return manifest


def sweep_variant_name(radius: float, mode: str) -> str:
    return f"sweep-r{radius:g}-{normalize_mode(mode)}"


def radius_sweep(
    dataset: PoseDataset,
    images_dir: str | Path,
    radii: Sequence[float],
    modes: Sequence[str],
    out_dir: str | Path,
    threads: int = 1,
    seed: int = 0,
) -> list[dict]:
    """One variant per ``(radius, mode)``; inside it every joint of every
    instance is occluded in its own image copy.

    Files land in ``{out_dir}/r{radius}_{mode}/images/{image_id}_{instance_id}_{joint}.png``
    and each variant directory gets its own manifest, whose entries carry
    the joint name.
    """
    radii = [float(r) for r in radii]
    if not radii or any(r <= 0 for r in radii) or any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be positive and strictly ascending")
    modes = [normalize_mode(m) for m in modes]
    out_dir = Path(out_dir)
    images_dir = Path(images_dir)
    for rec in dataset.images:
        _image_path(images_dir, rec.file_name)
    schema = dataset.schema
    manifests = []
    for radius in radii:
        for mode in modes:
            vdir = out_dir / f"r{radius:g}_{mode}"

            def work(rec, radius=radius, mode=mode, vdir=vdir):
                img = read_image(images_dir / rec.file_name)
                means = image_mean(img)
                entries = []
                for inst in dataset.instances_of(rec.id):
                    for j, jname in enumerate(schema.joint_names):
                        spec = OcclusionSpec("keypoint", jname, mode, radius)
                        rel = f"images/{rec.id}_{inst.id}_{jname}.png"
                        write_png(vdir / rel, occlude_keypoint(img, inst, j, spec, means))
                        entries.append({"image_id": rec.id, "instance_id": inst.id, "joint": jname, "file": rel})
                return entries

            entries = [e for chunk in _map(work, dataset.images, threads) for e in chunk]
            spec = OcclusionSpec("keypoint", schema.joint_names[0], mode, radius).to_dict()
            spec["joint"] = "*"
            manifest = {
                "variant": sweep_variant_name(radius, mode),
                "spec": spec,
                "seed": int(seed),
                "entries": entries,
            }
            (vdir / "annotations.json").parent.mkdir(parents=True, exist_ok=True)
            (vdir / "annotations.json").write_bytes(write_dataset(dataset))
            write_manifest(vdir / "manifest.json", manifest)
            manifests.append(manifest)
    return manifests


def occluded_pixel_count(instance: PersonInstance, joint: int, radius: float, shape: Sequence[int]) -> int:
    """Number of image pixels a keypoint disk of ``radius`` covers (0 if unlabeled)."""
    region = keypoint_region(instance, joint, radius)
    return 0 if region is None else int(region_mask(region, shape).sum())


def load_manifest(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
