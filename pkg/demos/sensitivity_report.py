"""The attack -> evaluate -> report loop through the ``pob`` command line.

Run: python demos/sensitivity_report.py [out_dir]

Pose-model inference is outside this toolkit, so a stand-in model is used:
it predicts ground truth, but loses a joint (predicts it far away) when the
pixels around that joint were blacked out. The resulting report shows the
attacked joint as the most affected one.
"""
import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from common import synthetic_dataset, write_images
from pose_occlusion import PredictionRecord, read_image
from pose_occlusion.cli import main as pob
from pose_occlusion.schema import write_dataset, write_predictions


def stand_in_model(ds, images_dir, entries=None):
    """Ground truth, except joints sitting on a black pixel are pushed 40 px away."""
    preds = []
    files = {(e["image_id"], e["instance_id"]): e["file"] for e in entries or []}
    for inst in ds.instances:
        rel = files.get((inst.image_id, inst.id), ds.image(inst.image_id).file_name)
        img = read_image(images_dir / rel)
        kps = np.array(inst.keypoints, copy=True)
        for j, (x, y, v) in enumerate(kps):
            if v > 0 and not img[int(y), int(x)].any():
                kps[j, :2] += 40
        preds.append(PredictionRecord(inst.image_id, kps, 1.0))
    return write_predictions(preds)


def main(out):
    ds = synthetic_dataset()
    out.mkdir(parents=True, exist_ok=True)
    (out / "gt.json").write_bytes(write_dataset(ds))
    images = write_images(ds, out / "images")
    (out / "base_preds.json").write_bytes(stand_in_model(ds, images))
    pob(["eval", "--dataset", str(out / "gt.json"), "--predictions", str(out / "base_preds.json"),
         "--out", str(out / "eval_base")])

    variants = []
    for joint in ("nose", "left_wrist", "right_knee"):
        attack = out / f"attack_{joint}"
        pob(["attack", "--dataset", str(out / "gt.json"), "--images", str(images),
             "--target", f"keypoint:{joint}", "--mode", "blackout", "--radius", "6", "--out", str(attack)])
        manifest = json.loads((attack / "manifest.json").read_text())
        (attack / "preds.json").write_bytes(stand_in_model(ds, attack, manifest["entries"]))
        pob(["eval", "--dataset", str(attack / "annotations.json"), "--predictions", str(attack / "preds.json"),
             "--manifest", str(attack / "manifest.json"), "--out", str(out / f"eval_{joint}")])
        variants += ["--variant", str(out / f"eval_{joint}" / "results.json")]

    pob(["report", "--baseline", str(out / "eval_base" / "results.json"), *variants,
         "--topk", "3", "--out", str(out / "report")])
    print((out / "report" / "summary.csv").read_text())
    for f in sorted((out / "report" / "topk").iterdir()):
        print(f.stem, [r["joint"] for r in json.loads(f.read_text())])


if __name__ == "__main__":
    if len(sys.argv) > 1:
        main(Path(sys.argv[1]))
    else:
        with tempfile.TemporaryDirectory() as tmp:
            main(Path(tmp))
