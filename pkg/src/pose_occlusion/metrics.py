"""Keypoint evaluation: OKS-based AP/AR (COCO protocol) and PCKh (MPII protocol).

The AP suite follows the COCO keypoint evaluator: per image, predictions
are ranked by score and greedily matched to ground truth by OKS at each
threshold; precision is read at 101 recall points from the monotone
precision envelope. Crowd annotations and annotations without labeled
joints take no part in matching.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .schema import MPII, SCHEMAS, PersonInstance, PoseDataset, PredictionRecord

COCO_SIGMAS = np.array(
    [0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072,
     0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089, 0.089]
)

AREA_RANGES = {
    "all": (0.0, 1e10),
    "medium": (32.0 ** 2, 96.0 ** 2),
    "large": (96.0 ** 2, 1e10),
}


class UndefinedOksError(ValueError):
    """OKS against a ground truth with no labeled joints."""


@dataclass(frozen=True)
class OksParams:
    """Evaluation constants.

    ``kappas`` are the per-joint falloff constants entering OKS as
    ``exp(-d**2 / (2 * area * kappa**2))``. The COCO evaluator stores
    per-joint sigmas and uses ``kappa = 2 * sigma``.
    """

    kappas: np.ndarray = field(default_factory=lambda: 2 * COCO_SIGMAS)
    thresholds: np.ndarray = field(default_factory=lambda: np.linspace(0.5, 0.95, 10))
    recall_points: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 1.0, 101))
    max_dets: int = 20
    area_ranges: Mapping[str, tuple[float, float]] = field(default_factory=lambda: dict(AREA_RANGES))

    def __post_init__(self):
        k = np.asarray(self.kappas, dtype=np.float64)
        if np.any(k <= 0):
            raise ValueError("OKS constants must be positive")
        t = np.asarray(self.thresholds, dtype=np.float64)
        if np.any(np.diff(t) <= 0):
            raise ValueError("thresholds must be strictly ascending")
        object.__setattr__(self, "kappas", k)
        object.__setattr__(self, "thresholds", t)

    @classmethod
    def from_sigmas(cls, sigmas: Sequence[float], **kw) -> "OksParams":
        return cls(kappas=2 * np.asarray(sigmas, dtype=np.float64), **kw)


@dataclass
class EvalResult:
    AP: float
    AP50: float | None
    AP75: float | None
    APM: float | None
    APL: float | None
    AR: float
    per_joint_ap: dict[str, float | None] = field(default_factory=dict)
    ap_per_threshold: list[float] = field(default_factory=list)
    recall_per_threshold: list[float] = field(default_factory=list)

    SUMMARY_KEYS = ("AP", "AP50", "AP75", "APM", "APL", "AR")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.SUMMARY_KEYS}
        d["per_joint_ap"] = dict(self.per_joint_ap)
        d["ap_per_threshold"] = list(self.ap_per_threshold)
        d["recall_per_threshold"] = list(self.recall_per_threshold)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvalResult":
        return cls(
            **{k: d.get(k) for k in cls.SUMMARY_KEYS},
            per_joint_ap=_skeleton_order(d.get("per_joint_ap", {})),
            ap_per_threshold=list(d.get("ap_per_threshold", [])),
            recall_per_threshold=list(d.get("recall_per_threshold", [])),
        )


def _skeleton_order(per_joint: Mapping) -> dict:
    """Put joints back in skeleton order (JSON output sorts keys by name)."""
    for schema in SCHEMAS.values():
        if set(per_joint) == set(schema.joint_names):
            return {name: per_joint[name] for name in schema.joint_names}
    return dict(per_joint)


# ------------------------------------------------------------------- OKS

def oks(
    pred: np.ndarray,
    gt: PersonInstance,
    params: OksParams | None = None,
    joints: Sequence[int] | None = None,
) -> float:
    """Object keypoint similarity between one prediction and one ground truth.

    ``joints`` restricts the average to a subset of joints (the per-joint
    AP uses a single joint).
    """
    kappas = (params or OksParams()).kappas
    return float(_oks_matrix(np.asarray(pred, dtype=np.float64)[None], [gt], kappas, joints)[0, 0])


def _labeled_mask(gt: PersonInstance, joints) -> np.ndarray:
    mask = gt.labeled.copy()
    if joints is not None:
        keep = np.zeros_like(mask)
        keep[list(joints)] = True
        mask &= keep
    return mask


def _oks_matrix(preds: np.ndarray, gts: Sequence[PersonInstance], kappas: np.ndarray, joints=None) -> np.ndarray:
    out = np.zeros((len(preds), len(gts)))
    for g, gt in enumerate(gts):
        mask = _labeled_mask(gt, joints)
        if not mask.any():
            raise UndefinedOksError(f"annotation {gt.id} has no labeled joints")
        d2 = (preds[:, mask, 0] - gt.keypoints[mask, 0]) ** 2 + (preds[:, mask, 1] - gt.keypoints[mask, 1]) ** 2
        e = d2 / (2.0 * gt.area * kappas[mask] ** 2)
        out[:, g] = np.exp(-e).mean(axis=1)
    return out


# -------------------------------------------------------------- matching

def greedy_match(
    oks_matrix: np.ndarray,
    threshold: float,
    gt_ignore: Sequence[bool] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Greedy score-order matching for one image at one threshold.

    ``oks_matrix`` is ``(D, G)`` with rows already in descending score
    order. Each prediction takes the still-unmatched ground truth with the
    highest OKS (ties go to the later column) provided it reaches
    ``threshold``; non-ignored ground truth is preferred over ignored.

    Returns ``(dt_match, dt_ignore)``: the matched gt column per prediction
    (-1 if none) and whether the match was to an ignored gt.
    """
    n_dt, n_gt = oks_matrix.shape
    ig = np.zeros(n_gt, dtype=bool) if gt_ignore is None else np.asarray(gt_ignore, dtype=bool)
    order = np.argsort(ig, kind="stable")
    gt_taken = np.zeros(n_gt, dtype=bool)
    dt_match = np.full(n_dt, -1, dtype=np.int64)
    dt_ignore = np.zeros(n_dt, dtype=bool)
    t = min(threshold, 1 - 1e-10)
    for d in range(n_dt):
        best, m = t, -1
        for g in order:
            if gt_taken[g]:
                continue
            if m > -1 and not ig[m] and ig[g]:
                break
            if oks_matrix[d, g] < best:
                continue
            best, m = oks_matrix[d, g], g
        if m == -1:
            continue
        gt_taken[m] = True
        dt_match[d] = m
        dt_ignore[d] = ig[m]
    return dt_match, dt_ignore


@dataclass
class _ImageEval:
    scores: np.ndarray
    dt_area: np.ndarray
    gt_area: np.ndarray
    oks: np.ndarray  # (D, G)


def _dt_area(kps: np.ndarray) -> float:
    x, y = kps[:, 0], kps[:, 1]
    return float((x.max() - x.min()) * (y.max() - y.min()))


def _prepare(
    predictions: Sequence[PredictionRecord],
    dataset: PoseDataset,
    params: OksParams,
    joints=None,
) -> list[_ImageEval]:
    by_image: dict[int, list[PredictionRecord]] = {}
    for rec in predictions:
        by_image.setdefault(rec.image_id, []).append(rec)
    num = dataset.schema.num_joints
    evals = []
    for img_id in sorted(r.id for r in dataset.images):
        people = [g for g in dataset.instances_of(img_id) if not g.iscrowd and g.num_labeled > 0]
        dts = by_image.get(img_id, [])
        order = sorted(range(len(dts)), key=lambda i: -dts[i].score)[: params.max_dets]
        dts = [dts[i] for i in order]
        kps = np.array([d.keypoints[:, :2] for d in dts]).reshape(len(dts), num, 2)
        gts = people
        if joints is not None:
            gts = [g for g in people if _labeled_mask(g, joints).any()]
            if people and dts:
                # skip predictions whose closest person lacks the joint(s)
                nearest = _oks_matrix(kps, people, params.kappas).argmax(axis=1)
                keep = [_labeled_mask(people[k], joints).any() for k in nearest]
                dts = [d for d, k in zip(dts, keep) if k]
                kps = kps[np.array(keep, dtype=bool)]
        if not gts and not dts:
            continue
        evals.append(
            _ImageEval(
                scores=np.array([d.score for d in dts], dtype=np.float64),
                dt_area=np.array([_dt_area(d.keypoints) for d in dts], dtype=np.float64),
                gt_area=np.array([g.area for g in gts], dtype=np.float64),
                oks=_oks_matrix(kps, gts, params.kappas, joints) if gts and dts else np.zeros((len(dts), len(gts))),
            )
        )
    return evals


def _accumulate(evals: list[_ImageEval], params: OksParams, area: tuple[float, float]):
    """Per threshold: (AP or None, recall or None)."""
    lo, hi = area
    n_pos = 0
    per_img = []
    for ev in evals:
        gt_ig = (ev.gt_area < lo) | (ev.gt_area > hi)
        n_pos += int(np.count_nonzero(~gt_ig))
        per_img.append(gt_ig)
    aps, recalls = [], []
    for t in params.thresholds:
        scores, tp, ignore = [], [], []
        for ev, gt_ig in zip(evals, per_img):
            match, dt_ig = greedy_match(ev.oks, t, gt_ig)
            out_of_range = (ev.dt_area < lo) | (ev.dt_area > hi)
            dt_ig = dt_ig | ((match == -1) & out_of_range)
            scores.append(ev.scores)
            tp.append(match >= 0)
            ignore.append(dt_ig)
        if n_pos == 0:
            aps.append(None)
            recalls.append(None)
            continue
        scores = np.concatenate(scores) if scores else np.zeros(0)
        tp = np.concatenate(tp) if tp else np.zeros(0, dtype=bool)
        ignore = np.concatenate(ignore) if ignore else np.zeros(0, dtype=bool)
        order = np.argsort(-scores, kind="mergesort")
        tp, ignore = tp[order], ignore[order]
        tps = np.cumsum(tp & ~ignore)
        fps = np.cumsum(~tp & ~ignore)
        if len(tps) == 0:
            aps.append(0.0)
            recalls.append(0.0)
            continue
        rc = tps / n_pos
        with np.errstate(invalid="ignore", divide="ignore"):
            pr = np.where(tps + fps > 0, tps / np.maximum(tps + fps, 1), 0.0)
        pr = np.maximum.accumulate(pr[::-1])[::-1]
        idx = np.searchsorted(rc, params.recall_points, side="left")
        q = np.where(idx < len(pr), pr[np.minimum(idx, len(pr) - 1)], 0.0)
        aps.append(float(q.mean()))
        recalls.append(float(rc[-1]))
    return aps, recalls


def _mean(values) -> float | None:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _at(thresholds: np.ndarray, values, t: float):
    hits = np.flatnonzero(np.isclose(thresholds, t))
    return values[hits[0]] if len(hits) else None


def ap_summary(
    predictions: Sequence[PredictionRecord],
    dataset: PoseDataset,
    params: OksParams | None = None,
    with_per_joint: bool = True,
) -> EvalResult:
    """AP, AP50, AP75, APM, APL and AR over the whole dataset."""
    params = params or OksParams()
    if len(params.kappas) != dataset.schema.num_joints:
        raise ValueError("OKS constants do not match the dataset skeleton")
    if not any(not g.iscrowd and g.num_labeled > 0 for g in dataset.instances):
        raise ValueError("ground truth has no evaluable instances")
    evals = _prepare(predictions, dataset, params)
    aps, recalls = _accumulate(evals, params, params.area_ranges["all"])
    apm, _ = _accumulate(evals, params, params.area_ranges["medium"])
    apl, _ = _accumulate(evals, params, params.area_ranges["large"])
    result = EvalResult(
        AP=_mean(aps),
        AP50=_at(params.thresholds, aps, 0.5),
        AP75=_at(params.thresholds, aps, 0.75),
        APM=_mean(apm),
        APL=_mean(apl),
        AR=_mean(recalls),
        ap_per_threshold=list(aps),
        recall_per_threshold=list(recalls),
    )
    if with_per_joint:
        result.per_joint_ap = per_joint_ap(predictions, dataset, params)
    return result


def per_joint_ap(
    predictions: Sequence[PredictionRecord],
    dataset: PoseDataset,
    params: OksParams | None = None,
) -> dict[str, float | None]:
    """AP per joint, with OKS restricted to that single joint.

    Only ground truth with the joint labeled takes part. A prediction whose
    closest person (highest full-skeleton OKS in its image) does not label
    the joint is skipped rather than counted as a false positive. A joint
    labeled nowhere maps to ``None``.
    """
    params = params or OksParams()
    out: dict[str, float | None] = {}
    for j, name in enumerate(dataset.schema.joint_names):
        evals = _prepare(predictions, dataset, params, joints=[j])
        aps, _ = _accumulate(evals, params, params.area_ranges["all"])
        out[name] = _mean(aps)
    return out


# ------------------------------------------------------------------ PCKh

PCKH_GROUPS = {
    "Head": (8, 9),
    "Shoulder": (12, 13),
    "Elbow": (11, 14),
    "Wrist": (10, 15),
    "Hip": (2, 3),
    "Knee": (1, 4),
    "Ankle": (0, 5),
}
PCKH_COLUMNS = (*PCKH_GROUPS, "Total")


@dataclass
class PckResult:
    scores: dict[str, float | None]
    per_joint: dict[str, float | None]
    alpha: float = 0.5

    def to_dict(self) -> dict:
        return {**self.scores, "alpha": self.alpha, "per_joint": dict(self.per_joint)}


def head_size(head_box: Sequence[float]) -> float:
    x0, y0, x1, y1 = head_box
    return 0.6 * float(np.hypot(x1 - x0, y1 - y0))


def _assign_predictions(predictions, dataset) -> dict[int, PredictionRecord]:
    by_inst = {p.instance_id: p for p in predictions if p.instance_id is not None}
    by_image: dict[int, list[PredictionRecord]] = {}
    for p in predictions:
        if p.instance_id is None:
            by_image.setdefault(p.image_id, []).append(p)
    out = {}
    for rec in dataset.images:
        pending = by_image.get(rec.id, [])
        k = 0
        for inst in dataset.instances_of(rec.id):
            if inst.id in by_inst:
                out[inst.id] = by_inst[inst.id]
            elif k < len(pending):
                out[inst.id] = pending[k]
                k += 1
    return out


def pckh(predictions: Sequence[PredictionRecord], dataset: PoseDataset, alpha: float = 0.5) -> PckResult:
    """PCKh@alpha under the single-person protocol.

    Predictions pair with ground truth by ``instance_id`` when present,
    otherwise by order within the image. A joint is correct iff its error
    is at most ``alpha`` times the head size (0.6 x head box diagonal).
    Group scores average their member joints; Total pools every joint of
    every group, weighting by labeled count.
    """
    if dataset.schema.num_joints != MPII.num_joints:
        raise ValueError("PCKh needs the 16-joint MPII skeleton")
    assigned = _assign_predictions(predictions, dataset)
    num = dataset.schema.num_joints
    correct = np.zeros(num, dtype=np.int64)
    labeled = np.zeros(num, dtype=np.int64)
    for inst in dataset.instances:
        if inst.head_box is None:
            raise ValueError(f"annotation {inst.id} has no head_box")
        lab = inst.labeled
        labeled += lab
        pred = assigned.get(inst.id)
        if pred is None:
            continue
        dist = np.hypot(pred.keypoints[:, 0] - inst.keypoints[:, 0], pred.keypoints[:, 1] - inst.keypoints[:, 1])
        correct += lab & (dist <= alpha * head_size(inst.head_box))
    per_joint = {
        name: (float(100.0 * correct[j] / labeled[j]) if labeled[j] else None)
        for j, name in enumerate(dataset.schema.joint_names)
    }
    scores: dict[str, float | None] = {}
    for group, members in PCKH_GROUPS.items():
        vals = [100.0 * correct[j] / labeled[j] for j in members if labeled[j]]
        scores[group] = float(np.mean(vals)) if vals else None
    members = [j for js in PCKH_GROUPS.values() for j in js]
    total_lab = labeled[members].sum()
    scores["Total"] = float(100.0 * correct[members].sum() / total_lab) if total_lab else None
    return PckResult(scores, per_joint, alpha)
