"""Pixel-exact raster operations.

A raster is a ``uint8`` numpy array of shape ``(H, W)`` or ``(H, W, C)``
with ``C`` in ``{1, 3}``. Every operation returns a new array and leaves its
input untouched. Floating point intermediates are rounded half-up to
``uint8`` exactly once, at the end of each operation.

Regions come in two shapes:

``Circle(cx, cy, radius)``
    Integer pixel ``(x, y)`` is inside iff ``(x-cx)**2 + (y-cy)**2 <= radius**2``.
``Rect(x0, y0, x1, y1)``
    Covers pixel columns ``floor(x0) .. floor(x1)`` and rows
    ``floor(y0) .. floor(y1)`` inclusive, i.e. the half-open range
    ``[floor(x0), floor(x1) + 1)``. A rectangle around a single point
    therefore still covers one pixel.

Both are clamped to the image when rasterized.

Affine maps are plain ``(2, 3)`` float arrays taking source pixel
coordinates to destination coordinates. Pixel centres sit on integer
coordinates, matching keypoint annotations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from PIL import Image

__all__ = [
    "BlurParams",
    "Circle",
    "EmptyTargetError",
    "Rect",
    "blur_region",
    "compose_affine",
    "crop_affine",
    "extend_to_aspect",
    "fill_region",
    "flip_horizontal",
    "gaussian_kernel",
    "gaussian_kernel_1d",
    "image_mean",
    "invert_affine",
    "min_rect",
    "paste_resized",
    "read_image",
    "region_mask",
    "rotation_matrix",
    "transform_keypoints",
    "warp_affine",
    "write_png",
]


class EmptyTargetError(ValueError):
    """Raised when a region would have to be built from zero labeled keypoints."""


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if not self.radius >= 0:
            raise ValueError("circle radius must be non-negative")

    def bounds(self, height: int, width: int) -> tuple[int, int, int, int]:
        """Clamped half-open pixel bounds ``(r0, r1, c0, c1)`` of the disk."""
        r = self.radius
        c0 = max(math.ceil(self.cx - r), 0)
        c1 = min(math.floor(self.cx + r) + 1, width)
        r0 = max(math.ceil(self.cy - r), 0)
        r1 = min(math.floor(self.cy + r) + 1, height)
        return r0, max(r1, r0), c0, max(c1, c0)

    def local_mask(self, bounds: tuple[int, int, int, int]) -> np.ndarray:
        r0, r1, c0, c1 = bounds
        ys = np.arange(r0, r1, dtype=np.float64)[:, None]
        xs = np.arange(c0, c1, dtype=np.float64)[None, :]
        return (xs - self.cx) ** 2 + (ys - self.cy) ** 2 <= self.radius ** 2

    def contains(self, x: float, y: float) -> bool:
        return (x - self.cx) ** 2 + (y - self.cy) ** 2 <= self.radius ** 2


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def bounds(self, height: int, width: int) -> tuple[int, int, int, int]:
        c0 = max(math.floor(self.x0), 0)
        c1 = min(math.floor(self.x1) + 1, width)
        r0 = max(math.floor(self.y0), 0)
        r1 = min(math.floor(self.y1) + 1, height)
        return r0, max(r1, r0), c0, max(c1, c0)

    def local_mask(self, bounds: tuple[int, int, int, int]) -> np.ndarray:
        r0, r1, c0, c1 = bounds
        return np.ones((r1 - r0, c1 - c0), dtype=bool)

    def contains(self, x: float, y: float) -> bool:
        return (
            math.floor(self.x0) <= math.floor(x) <= math.floor(self.x1)
            and math.floor(self.y0) <= math.floor(y) <= math.floor(self.y1)
        )


Region = Union[Circle, Rect]


@dataclass(frozen=True)
class BlurParams:
    kernel_size: int
    sigma: float | None = None  # defaults to (kernel_size - 1) / 6

    def __post_init__(self):
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel size must be odd and >= 3, got {self.kernel_size}")
        if self.sigma is None:
            object.__setattr__(self, "sigma", (self.kernel_size - 1) / 6)
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def region_mask(region: Region, shape: Sequence[int]) -> np.ndarray:
    """Full-size boolean mask of the pixels covered by ``region``."""
    height, width = shape[:2]
    mask = np.zeros((height, width), dtype=bool)
    b = region.bounds(height, width)
    r0, r1, c0, c1 = b
    if r1 > r0 and c1 > c0:
        mask[r0:r1, c0:c1] = region.local_mask(b)
    return mask


def _as3d(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise TypeError(f"expected a uint8 raster, got {img.dtype}")
    if img.ndim == 2:
        return img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"raster must be (H, W), (H, W, 1) or (H, W, 3); got {img.shape}")
    return img


def _to_u8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


# ------------------------------------------------------------------ blur

def gaussian_kernel_1d(kernel_size: int, sigma: float) -> np.ndarray:
    params = BlurParams(kernel_size, sigma)
    half = params.kernel_size // 2
    d = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(d ** 2) / (2.0 * params.sigma ** 2))
    return g / g.sum()


def gaussian_kernel(params: BlurParams) -> np.ndarray:
    """Normalized 2D Gaussian kernel, built as the outer product of 1D taps."""
    g = gaussian_kernel_1d(params.kernel_size, params.sigma)
    return np.outer(g, g)


def _reflect_index(idx: np.ndarray, n: int) -> np.ndarray:
    # reflect-101 (``dcb|abcd|cba``), repeated for windows wider than the image
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    m = np.mod(idx, period)
    return np.where(m >= n, period - m, m)


def blur_region(img: np.ndarray, region: Region, params: BlurParams) -> np.ndarray:
    """Gaussian-blur the pixels inside ``region``.

    The blur sees the whole (unmodified) image through reflect-101 padding;
    pixels outside the region are copied through unchanged.
    """
    src = _as3d(img)
    out = np.array(img, copy=True)
    out3 = _as3d(out)
    height, width = src.shape[:2]
    b = region.bounds(height, width)
    r0, r1, c0, c1 = b
    if r1 <= r0 or c1 <= c0:
        return out
    g = gaussian_kernel_1d(params.kernel_size, params.sigma)
    half = params.kernel_size // 2
    rows = _reflect_index(np.arange(r0 - half, r1 + half), height)
    cols = _reflect_index(np.arange(c0 - half, c1 + half), width)
    window = src[np.ix_(rows, cols)].astype(np.float64)
    nr, nc = r1 - r0, c1 - c0
    vert = np.zeros((nr, window.shape[1], window.shape[2]))
    for t, w in enumerate(g):
        vert += w * window[t:t + nr]
    blurred = np.zeros((nr, nc, window.shape[2]))
    for t, w in enumerate(g):
        blurred += w * vert[:, t:t + nc]
    mask = region.local_mask(b)
    patch = out3[r0:r1, c0:c1]
    patch[mask] = _to_u8(blurred)[mask]
    return out


# ------------------------------------------------------------------ fills

def image_mean(img: np.ndarray) -> np.ndarray:
    """Per-channel mean over all pixels (exact integer sum, one division)."""
    src = _as3d(img)
    flat = src.reshape(-1, src.shape[2])
    return flat.sum(axis=0, dtype=np.int64) / flat.shape[0]


def fill_region(
    img: np.ndarray,
    region: Region,
    mode: str = "black",
    means: Sequence[float] | None = None,
) -> np.ndarray:
    """Fill ``region`` with zeros (``"black"``) or the rounded per-channel mean (``"mean"``).

    For ``"mean"`` pass the means of the *original* image when several
    regions are filled in sequence; they are computed from ``img`` otherwise.
    """
    out = np.array(img, copy=True)
    out3 = _as3d(out)
    height, width, channels = out3.shape
    if mode == "black":
        value = np.zeros(channels, dtype=np.uint8)
    elif mode == "mean":
        m = image_mean(img) if means is None else np.asarray(means, dtype=np.float64)
        value = _to_u8(np.broadcast_to(m, (channels,)))
    else:
        raise ValueError(f"unknown fill mode {mode!r}")
    b = region.bounds(height, width)
    r0, r1, c0, c1 = b
    if r1 > r0 and c1 > c0:
        patch = out3[r0:r1, c0:c1]
        patch[region.local_mask(b)] = value
    return out


def min_rect(
    keypoints: np.ndarray,
    pad: float = 0.0,
    image_size: tuple[int, int] | None = None,
) -> Rect:
    """Smallest axis-aligned rectangle around the labeled keypoints.

    Args:
        keypoints: ``(N, 2)`` points, or ``(N, 3)`` with a visibility column
            (only rows with ``v > 0`` count).
        pad: added on every side.
        image_size: ``(width, height)``; when given the result is clamped to
            the image.
    """
    kps = np.asarray(keypoints, dtype=np.float64)
    if kps.ndim == 1:
        kps = kps[None, :]
    if kps.shape[1] >= 3:
        kps = kps[kps[:, 2] > 0]
    if len(kps) == 0:
        raise EmptyTargetError("no labeled keypoints to build a rectangle from")
    x0, y0 = kps[:, 0].min() - pad, kps[:, 1].min() - pad
    x1, y1 = kps[:, 0].max() + pad, kps[:, 1].max() + pad
    if image_size is not None:
        width, height = image_size
        x0, y0 = max(x0, 0.0), max(y0, 0.0)
        x1, y1 = min(x1, width - 1.0), min(y1, height - 1.0)
    return Rect(float(x0), float(y0), float(x1), float(y1))


# -------------------------------------------------------------- resampling

def _bilinear(src: np.ndarray, xs: np.ndarray, ys: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Sample ``src`` (H, W, C) at real coordinates; out-of-image taps read ``fill``."""
    height, width = src.shape[:2]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    data = src.astype(np.float64)

    def tap(yy, xx):
        ok = (xx >= 0) & (xx < width) & (yy >= 0) & (yy < height)
        vals = data[np.clip(yy, 0, height - 1), np.clip(xx, 0, width - 1)]
        return np.where(ok[..., None], vals, fill)

    return (
        (1 - fy) * ((1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1))
        + fy * ((1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1))
    )


def paste_resized(dst: np.ndarray, src: np.ndarray, src_rect: Rect, dst_rect: Rect) -> np.ndarray:
    """Replace ``dst_rect`` of ``dst`` with ``src_rect`` of ``src`` stretched bilinearly.

    Sample positions use the half-pixel-centre convention, so equal sizes
    give an exact copy.
    """
    d3 = _as3d(dst)
    s3 = _as3d(src)
    if s3.shape[2] != d3.shape[2]:
        raise ValueError("source and destination channel counts differ")
    sr0, sr1, sc0, sc1 = src_rect.bounds(*s3.shape[:2])
    dr0, dr1, dc0, dc1 = dst_rect.bounds(*d3.shape[:2])
    if sr1 <= sr0 or sc1 <= sc0:
        raise ValueError("source rectangle is empty after clamping")
    if dr1 <= dr0 or dc1 <= dc0:
        raise ValueError("destination rectangle is empty after clamping")
    patch = s3[sr0:sr1, sc0:sc1]
    hs, ws = patch.shape[:2]
    hd, wd = dr1 - dr0, dc1 - dc0
    sy = np.clip((np.arange(hd) + 0.5) * hs / hd - 0.5, 0, hs - 1)
    sx = np.clip((np.arange(wd) + 0.5) * ws / wd - 0.5, 0, ws - 1)
    ys, xs = np.meshgrid(sy, sx, indexing="ij")
    out = np.array(dst, copy=True)
    _as3d(out)[dr0:dr1, dc0:dc1] = _to_u8(_bilinear(patch, xs, ys))
    return out


def invert_affine(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    a = m[:, :2]
    det = np.linalg.det(a)
    if abs(det) < 1e-12:
        raise ValueError("affine map is singular")
    ainv = np.linalg.inv(a)
    return np.hstack([ainv, -ainv @ m[:, 2:3]])


def compose_affine(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """Map equal to applying ``inner`` first, then ``outer``."""
    o = np.vstack([outer, [0.0, 0.0, 1.0]])
    i = np.vstack([inner, [0.0, 0.0, 1.0]])
    return (o @ i)[:2]


def rotation_matrix(angle_deg: float, center: tuple[float, float], scale: float = 1.0) -> np.ndarray:
    """Counter-clockwise rotation (in image coordinates, y down) plus scaling about ``center``."""
    a = math.radians(angle_deg)
    c, s = scale * math.cos(a), scale * math.sin(a)
    cx, cy = center
    return np.array([
        [c, s, (1 - c) * cx - s * cy],
        [-s, c, s * cx + (1 - c) * cy],
    ])


def warp_affine(img: np.ndarray, m: np.ndarray, out_size: tuple[int, int]) -> np.ndarray:
    """Resample ``img`` through forward map ``m`` onto an ``out_size=(w, h)`` canvas.

    Pixels that map outside the source are black.
    """
    src = _as3d(img)
    out_w, out_h = out_size
    inv = invert_affine(m)
    vv, uu = np.meshgrid(np.arange(out_h, dtype=np.float64), np.arange(out_w, dtype=np.float64), indexing="ij")
    xs = inv[0, 0] * uu + inv[0, 1] * vv + inv[0, 2]
    ys = inv[1, 0] * uu + inv[1, 1] * vv + inv[1, 2]
    out = _to_u8(_bilinear(src, xs, ys))
    return out[:, :, 0] if np.asarray(img).ndim == 2 else out


def extend_to_aspect(bbox: Sequence[float], aspect: float) -> tuple[float, float, float, float]:
    """Grow the short side of ``(x, y, w, h)`` about its centre until ``h / w == aspect``."""
    x, y, w, h = (float(v) for v in bbox)
    if not (w > 0 and h > 0):
        raise ValueError("bbox width and height must be positive")
    cx, cy = x + w / 2, y + h / 2
    if h / w < aspect:
        h = w * aspect
    else:
        w = h / aspect
    return cx - w / 2, cy - h / 2, w, h


def crop_affine(
    img: np.ndarray,
    bbox: Sequence[float],
    out_w: int = 192,
    out_h: int = 256,
) -> tuple[np.ndarray, np.ndarray]:
    """Top-down crop: extend ``bbox`` to the output aspect ratio and resample.

    Returns the crop and the forward map from image to crop coordinates. The
    extended box corners ``(x0, y0)`` and ``(x0 + w, y0 + h)`` land on
    ``(0, 0)`` and ``(out_w, out_h)``.
    """
    x0, y0, w, h = extend_to_aspect(bbox, out_h / out_w)
    sx, sy = out_w / w, out_h / h
    m = np.array([[sx, 0.0, -x0 * sx], [0.0, sy, -y0 * sy]])
    return warp_affine(img, m, (out_w, out_h)), m


def transform_keypoints(
    m: np.ndarray,
    keypoints: np.ndarray,
    out_size: tuple[int, int] | None = None,
) -> np.ndarray:
    """Apply an affine map to the labeled rows of a ``(J, 3)`` keypoint array.

    With ``out_size=(w, h)``, joints landing outside the output canvas are
    marked unlabeled (``v = 0``).
    """
    m = np.asarray(m, dtype=np.float64)
    if abs(np.linalg.det(m[:, :2])) < 1e-12:
        raise ValueError("affine map is singular")
    kps = np.array(keypoints, dtype=np.float64, copy=True)
    lab = kps[:, 2] > 0
    kps[lab, :2] = kps[lab, :2] @ m[:, :2].T + m[:, 2]
    if out_size is not None:
        w, h = out_size
        x, y = kps[:, 0], kps[:, 1]
        outside = lab & ((x < 0) | (x >= w) | (y < 0) | (y >= h))
        kps[outside, 2] = 0
    return kps


def flip_horizontal(
    img: np.ndarray,
    keypoints: np.ndarray,
    flip_pairs: Sequence[tuple[int, int]],
) -> tuple[np.ndarray, np.ndarray]:
    """Mirror the image and keypoints; left/right joints trade places."""
    width = np.asarray(img).shape[1]
    out = np.ascontiguousarray(np.asarray(img)[:, ::-1])
    kps = np.array(keypoints, dtype=np.float64, copy=True)
    lab = kps[:, 2] > 0
    kps[lab, 0] = width - 1 - kps[lab, 0]
    perm = np.arange(len(kps))
    for left, right in flip_pairs:
        perm[left], perm[right] = right, left
    return out, kps[perm]


# --------------------------------------------------------------------- I/O

def read_image(path: str | Path) -> np.ndarray:
    """Decode PNG/JPEG into ``(H, W, 3)``, or ``(H, W, 1)`` for grayscale files."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"image not found: {path}")
    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I", "1"):
            return np.asarray(im.convert("L"), dtype=np.uint8)[:, :, None].copy()
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def write_png(path: str | Path, img: np.ndarray) -> None:
    arr = _as3d(np.asarray(img))
    mode_arr = arr[:, :, 0] if arr.shape[2] == 1 else arr
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(mode_arr)).save(path, format="PNG")
