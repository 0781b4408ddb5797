"""Random micro-datasets for evaluator cross-checks."""
import numpy as np

from pose_occlusion.schema import COCO, ImageRecord, PersonInstance, PoseDataset, PredictionRecord


def random_micro(rng, max_images=5, max_gts=4, max_dts=6, num_joints=17):
    """Build (dataset, predictions) with every awkward case in reach:
    crowd gts, unlabeled joints, tied scores, areas on both sides of the
    medium/large split, and images with no gts or no predictions."""
    while True:
        images, instances, preds = [], [], []
        next_id = 1
        for img_id in range(1, rng.integers(1, max_images + 1) + 1):
            images.append(ImageRecord(img_id, f"{img_id}.png", 200, 200))
            gts = []
            for _ in range(rng.integers(0, max_gts + 1)):
                kps = np.zeros((num_joints, 3))
                kps[:, :2] = rng.uniform(10, 190, (num_joints, 2))
                kps[:, 2] = rng.choice([0, 1, 2], num_joints, p=[0.2, 0.2, 0.6])
                area = float(rng.choice([rng.uniform(400, 1024), rng.uniform(1024, 9216), rng.uniform(9216, 30000)]))
                inst = PersonInstance(next_id, img_id, kps, (0, 0, 100, 100), area, iscrowd=bool(rng.random() < 0.1))
                next_id += 1
                instances.append(inst)
                gts.append(inst)
            for _ in range(rng.integers(0, max_dts + 1)):
                if gts and rng.random() < 0.8:
                    g = gts[rng.integers(len(gts))]
                    noise = rng.uniform(0, 0.3) * np.sqrt(g.area)
                    kps = np.array(g.keypoints, copy=True)
                    kps[:, :2] += rng.normal(0, noise / 4 + 1e-3, (num_joints, 2))
                else:
                    kps = np.zeros((num_joints, 3))
                    kps[:, :2] = rng.uniform(0, 200, (num_joints, 2))
                kps[:, 2] = rng.uniform(0, 1, num_joints)
                score = float(rng.uniform()) if rng.random() < 0.7 else float(rng.integers(1, 4)) / 4
                preds.append(PredictionRecord(img_id, kps, score))
        ds = PoseDataset(COCO, images, instances)
        if any(not g.iscrowd and g.num_labeled for g in instances):
            return ds, preds


def as_oracle_input(dataset, preds):
    gts = [
        {"image_id": g.image_id, "kps": g.keypoints.tolist(), "area": g.area, "iscrowd": g.iscrowd}
        for g in dataset.instances
    ]
    dts = [{"image_id": p.image_id, "kps": p.keypoints.tolist(), "score": p.score} for p in preds]
    return gts, dts, [r.id for r in dataset.images]
