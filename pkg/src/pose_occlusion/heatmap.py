"""Gaussian heatmap targets and argmax decoding for top-down pose models."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

STAMP_SIZE = 13
SIGMA = 2.0


@dataclass(frozen=True)
class HeatmapStack:
    """``heatmaps`` is ``(J, H', W')`` float32; ``weights`` is ``(J,)`` in {0, 1}."""

    heatmaps: np.ndarray
    weights: np.ndarray
    stride: int = 4


def gaussian_stamp(size: int = STAMP_SIZE, sigma: float = SIGMA) -> np.ndarray:
    c = size // 2
    d = np.arange(size, dtype=np.float64) - c
    return np.exp(-(d[None, :] ** 2 + d[:, None] ** 2) / (2 * sigma ** 2))


def encode(
    keypoints: np.ndarray,
    input_size: tuple[int, int] = (192, 256),
    stride: int = 4,
    weights: np.ndarray | None = None,
    size: int = STAMP_SIZE,
    sigma: float = SIGMA,
) -> HeatmapStack:
    """Stamp a peak-1 Gaussian at each joint's nearest heatmap cell.

    Args:
        keypoints: ``(J, 3)`` in input-crop pixels; rows with ``v == 0`` are skipped.
        input_size: ``(w, h)`` of the crop; the heatmap is ``(h // stride, w // stride)``.
        weights: optional per-joint weights, multiplied with the labeled mask
            (pass ``instance.target_weights()`` to honour removed labels).

    The stamp is truncated at the map borders; a joint whose stamp misses the
    map entirely gets weight 0.
    """
    kps = np.asarray(keypoints, dtype=np.float64)
    num = len(kps)
    hm_w, hm_h = input_size[0] // stride, input_size[1] // stride
    target = np.zeros((num, hm_h, hm_w), dtype=np.float32)
    w = (kps[:, 2] > 0).astype(np.float32)
    if weights is not None:
        w = w * (np.asarray(weights, dtype=np.float32) > 0)
    stamp = gaussian_stamp(size, sigma).astype(np.float32)
    half = size // 2
    for j in range(num):
        if w[j] == 0:
            continue
        mx = int(np.floor(kps[j, 0] / stride + 0.5))
        my = int(np.floor(kps[j, 1] / stride + 0.5))
        x0, y0 = mx - half, my - half
        x1, y1 = mx + half + 1, my + half + 1
        if x0 >= hm_w or y0 >= hm_h or x1 <= 0 or y1 <= 0:
            w[j] = 0
            continue
        gx0, gy0 = max(0, -x0), max(0, -y0)
        gx1, gy1 = min(x1, hm_w) - x0, min(y1, hm_h) - y0
        target[j, max(0, y0):min(y1, hm_h), max(0, x0):min(x1, hm_w)] = stamp[gy0:gy1, gx0:gx1]
    return HeatmapStack(target, w, stride)


def decode(stack: HeatmapStack | np.ndarray, stride: int | None = None, quarter_offset: bool = True) -> np.ndarray:
    """Recover ``(J, 3)`` rows of ``(x, y, confidence)`` in input pixels.

    Takes the first maximum in row-major order, optionally nudges it a
    quarter cell toward the larger neighbour, and scales by ``stride``.
    Joints whose map is all zero come back as ``(0, 0, 0)``.
    """
    if isinstance(stack, HeatmapStack):
        maps = stack.heatmaps
        stride = stack.stride if stride is None else stride
    else:
        maps = np.asarray(stack)
        stride = 4 if stride is None else stride
    num, hm_h, hm_w = maps.shape
    out = np.zeros((num, 3), dtype=np.float64)
    for j in range(num):
        hm = maps[j]
        idx = int(np.argmax(hm))
        conf = float(hm.flat[idx])
        if conf <= 0:
            continue
        py, px = divmod(idx, hm_w)
        x, y = float(px), float(py)
        if quarter_offset:
            if 0 < px < hm_w - 1:
                x += 0.25 * np.sign(float(hm[py, px + 1]) - float(hm[py, px - 1]))
            if 0 < py < hm_h - 1:
                y += 0.25 * np.sign(float(hm[py + 1, px]) - float(hm[py - 1, px]))
        out[j] = (x * stride, y * stride, conf)
    return out


def dump_heatmaps(stack: HeatmapStack | np.ndarray, path: str | Path) -> None:
    """Write ``J, H', W'`` as little-endian uint32 followed by float32 map data."""
    maps = stack.heatmaps if isinstance(stack, HeatmapStack) else np.asarray(stack)
    header = np.array(maps.shape, dtype="<u4")
    Path(path).write_bytes(header.tobytes() + np.ascontiguousarray(maps, dtype="<f4").tobytes())


def load_heatmaps(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    j, h, w = np.frombuffer(raw[:12], dtype="<u4")
    data = np.frombuffer(raw[12:], dtype="<f4")
    if data.size != j * h * w:
        raise ValueError(f"heatmap file {path}: expected {j * h * w} values, found {data.size}")
    return data.reshape(int(j), int(h), int(w)).copy()
