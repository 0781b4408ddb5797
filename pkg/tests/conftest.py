from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from pose_occlusion.schema import PredictionRecord, parse_dataset

FIXTURES = Path(__file__).parent / "fixtures"
CONSTANT_RGB = (120, 61, 200)


def load_fixture(name):
    return parse_dataset((FIXTURES / name).read_bytes())


def perfect_predictions(dataset, with_ids=False):
    """One prediction per labeled, non-crowd instance, equal to its ground truth."""
    out = []
    for inst in dataset.instances:
        if inst.iscrowd or inst.num_labeled == 0:
            continue
        kps = np.array(inst.keypoints, copy=True)
        kps[:, 2] = 1.0
        out.append(PredictionRecord(inst.image_id, kps, 1.0, inst.id if with_ids else None))
    return out


def write_images(dataset, directory, constant=False, seed=0):
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for rec in dataset.images:
        if constant:
            arr = np.empty((rec.height, rec.width, 3), dtype=np.uint8)
            arr[:] = CONSTANT_RGB
        else:
            # smooth gradient plus noise so blur has something to do
            yy, xx = np.mgrid[0:rec.height, 0:rec.width]
            base = np.stack([xx * 255 // rec.width, yy * 255 // rec.height, (xx + yy) % 256], axis=-1)
            arr = np.clip(base + rng.integers(-40, 41, base.shape), 0, 255).astype(np.uint8)
        Image.fromarray(arr).save(directory / rec.file_name)
    return directory


@pytest.fixture(scope="session")
def coco_ds():
    return load_fixture("coco_tiny.json")


@pytest.fixture(scope="session")
def mpii_ds():
    return load_fixture("mpii_tiny.json")


@pytest.fixture(scope="session")
def coco_images(coco_ds, tmp_path_factory):
    return write_images(coco_ds, tmp_path_factory.mktemp("coco_images"))


@pytest.fixture(scope="session")
def coco_constant_images(coco_ds, tmp_path_factory):
    return write_images(coco_ds, tmp_path_factory.mktemp("coco_const"), constant=True)


@pytest.fixture(scope="session")
def mpii_images(mpii_ds, tmp_path_factory):
    return write_images(mpii_ds, tmp_path_factory.mktemp("mpii_images"), seed=1)


# ------------------------------------------------------------ acceptance log

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        _ACCEPTANCE[number] = (title, "FAIL" if call.excinfo is not None else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title}")
