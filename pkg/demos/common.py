"""Shared helpers for the demo scripts: a synthetic two-image COCO dataset."""
from pathlib import Path

import numpy as np
from PIL import Image

from pose_occlusion.schema import COCO, ImageRecord, PersonInstance, PoseDataset

# a standing person in unit box coordinates, COCO joint order
POSE = np.array([
    (.50, .08), (.55, .05), (.45, .05), (.62, .07), (.38, .07), (.70, .20), (.30, .20), (.82, .36),
    (.18, .36), (.86, .52), (.14, .52), (.62, .55), (.38, .55), (.64, .75), (.36, .75), (.65, .95), (.35, .95),
])


def person(inst_id, image_id, x, y, w, h, jitter=None):
    kps = np.zeros((17, 3))
    kps[:, 0] = x + POSE[:, 0] * w
    kps[:, 1] = y + POSE[:, 1] * h
    kps[:, 2] = 2
    if jitter is not None:
        kps[:, :2] += jitter.normal(0, 2, (17, 2))
    return PersonInstance(inst_id, image_id, kps, (x, y, w, h), 0.6 * w * h)


def synthetic_dataset(seed=0):
    rng = np.random.default_rng(seed)
    images = [ImageRecord(1, "street.png", 320, 240), ImageRecord(2, "park.png", 240, 320)]
    instances = [
        person(1, 1, 30, 20, 90, 200, rng),
        person(2, 1, 170, 30, 100, 190, rng),
        person(3, 2, 40, 40, 150, 260, rng),
    ]
    return PoseDataset(COCO, images, instances)


def write_images(dataset, directory, seed=0):
    """Textured stand-in photos so blur and mean fills have visible effect."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for rec in dataset.images:
        yy, xx = np.mgrid[0:rec.height, 0:rec.width]
        base = np.stack([xx * 255 // rec.width, yy * 255 // rec.height, (3 * xx + 2 * yy) % 256], axis=-1)
        arr = np.clip(base + rng.integers(-30, 31, base.shape), 0, 255).astype(np.uint8)
        Image.fromarray(arr).save(directory / rec.file_name)
    return directory
