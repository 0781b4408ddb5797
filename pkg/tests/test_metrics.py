import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import perfect_predictions
from micro import as_oracle_input, random_micro
from oracles import enumerate_greedy, reference_coco_eval
from pose_occlusion.metrics import (
    COCO_SIGMAS,
    PCKH_COLUMNS,
    OksParams,
    UndefinedOksError,
    ap_summary,
    greedy_match,
    head_size,
    oks,
    per_joint_ap,
    pckh,
)
from pose_occlusion.schema import COCO, MPII, ImageRecord, PersonInstance, PoseDataset, PredictionRecord

SUMMARY = ("AP", "AP50", "AP75", "APM", "APL", "AR")


def _gt(kps, area=5000.0, inst_id=1, image_id=1, iscrowd=False):
    return PersonInstance(inst_id, image_id, kps, (0, 0, 50, 100), area, iscrowd=iscrowd)


def _one_joint(j, x=50.0, y=50.0):
    kps = np.zeros((17, 3))
    kps[j] = (x, y, 2)
    return kps


# ---------------------------------------------------------------------- OKS

def test_oks_identity(coco_ds):
    for g in coco_ds.instances:
        assert oks(g.keypoints, g) == 1.0


def test_oks_analytic_point():
    params = OksParams()
    for j in range(17):
        area = 3000.0
        d = math.sqrt(2 * area * params.kappas[j] ** 2)
        pred = _one_joint(j, 50 + d, 50)
        assert abs(oks(pred, _gt(_one_joint(j), area)) - math.exp(-1)) < 1e-9


def test_oks_constants_match_coco_tables():
    params = OksParams()
    assert np.allclose(params.kappas / 2, COCO_SIGMAS)
    assert COCO_SIGMAS[0] == 0.026 and COCO_SIGMAS[11] == 0.107


def test_oks_direct_formula():
    rng = np.random.default_rng(3)
    gk = np.column_stack([rng.uniform(0, 100, (17, 2)), rng.choice([0, 1, 2], 17)])
    gk[0, 2] = 2
    pk = gk.copy()
    pk[:, :2] += rng.normal(0, 5, (17, 2))
    gt = _gt(gk, 2345.0)
    terms = []
    for j in range(17):
        if gk[j, 2] > 0:
            d2 = (pk[j, 0] - gk[j, 0]) ** 2 + (pk[j, 1] - gk[j, 1]) ** 2
            terms.append(math.exp(-d2 / (2 * 2345.0 * (2 * COCO_SIGMAS[j]) ** 2)))
    assert abs(oks(pk, gt) - sum(terms) / len(terms)) < 1e-12


def test_oks_undefined():
    with pytest.raises(UndefinedOksError):
        oks(np.zeros((17, 3)), _gt(np.zeros((17, 3))))


# ----------------------------------------------------------------- matching

def test_match_simple():
    m, _ = greedy_match(np.array([[0.9]]), 0.75)
    assert m.tolist() == [0]
    m, _ = greedy_match(np.array([[0.9], [0.95]]), 0.5)
    assert m.tolist() == [0, -1]


def test_match_prefers_non_ignored():
    m, ig = greedy_match(np.array([[0.9, 0.6]]), 0.5, gt_ignore=[True, False])
    assert m.tolist() == [1] and ig.tolist() == [False]


def test_match_hand_grid_vs_enumeration():
    grid = np.array([[0.80, 0.92, 0.10], [0.85, 0.95, 0.55], [0.20, 0.60, 0.70]])
    for t in (0.5, 0.6, 0.75, 0.9):
        m, _ = greedy_match(grid, t)
        assert m.tolist() == enumerate_greedy(grid, t)
    m, _ = greedy_match(grid, 0.5)
    assert m.tolist() == [1, 0, 2]


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1), st.sampled_from([0.5, 0.7, 0.9]))
def test_match_random_vs_enumeration(n_dt, n_gt, seed, t):
    grid = np.random.default_rng(seed).uniform(0.3, 1.0, (n_dt, n_gt))
    m, _ = greedy_match(grid, t)
    assert m.tolist() == enumerate_greedy(grid, t)


# ------------------------------------------------------------------ summary

@pytest.mark.parametrize("with_ids", [False, True])
def test_perfect_predictions(coco_ds, with_ids):
    res = ap_summary(perfect_predictions(coco_ds, with_ids), coco_ds)
    assert res.AP == 1.0 and res.AR == 1.0 and res.AP50 == 1.0 and res.AP75 == 1.0
    assert all(v == 1.0 for v in res.per_joint_ap.values())
    assert res.APM == 1.0 and res.APL == 1.0


def test_empty_predictions(coco_ds):
    res = ap_summary([], coco_ds)
    assert res.AP == 0.0 and res.AR == 0.0


def test_empty_ground_truth():
    with pytest.raises(ValueError):
        ap_summary([], PoseDataset(COCO, [], []))


def test_crowd_excluded():
    kps = _one_joint(0)
    ds = PoseDataset(COCO, [ImageRecord(1, "a", 100, 100)],
                     [_gt(kps, inst_id=1), _gt(_one_joint(0, 20, 20), inst_id=2, iscrowd=True)])
    res = ap_summary([PredictionRecord(1, kps, 1.0)], ds)
    assert res.AP == 1.0 and res.AR == 1.0


def test_max_dets_truncates():
    kps = _one_joint(0)
    ds = PoseDataset(COCO, [ImageRecord(1, "a", 100, 100)], [_gt(kps)])
    junk = [PredictionRecord(1, _one_joint(0, 99, 99), 0.9) for _ in range(20)]
    res = ap_summary(junk + [PredictionRecord(1, kps, 0.1)], ds)
    assert res.AR == 0.0
    res = ap_summary(junk + [PredictionRecord(1, kps, 0.1)], ds, OksParams(max_dets=21))
    assert res.AR == 1.0


def test_per_joint_isolation(coco_ds):
    preds = perfect_predictions(coco_ds)
    for p in preds:
        k = np.array(p.keypoints, copy=True)
        k[0, :2] += 60
        object.__setattr__(p, "keypoints", k)
    res = per_joint_ap(preds, coco_ds)
    assert res["nose"] < 0.5
    assert all(v == 1.0 for j, v in res.items() if j != "nose")


def test_per_joint_absent_when_never_labeled():
    ds = PoseDataset(COCO, [ImageRecord(1, "a", 100, 100)], [_gt(_one_joint(0))])
    res = per_joint_ap([PredictionRecord(1, _one_joint(0), 1.0)], ds)
    assert res["nose"] == 1.0 and res["left_eye"] is None


def test_micro_vs_reference():
    rng = np.random.default_rng(2024)
    for _ in range(40):
        ds, preds = random_micro(rng)
        got = ap_summary(preds, ds, with_per_joint=False)
        ref = reference_coco_eval(*as_oracle_input(ds, preds), COCO_SIGMAS.tolist())
        for key in SUMMARY:
            assert (got.__dict__[key] is None) == (ref[key] is None)
            if ref[key] is not None:
                assert abs(got.__dict__[key] - ref[key]) < 1e-9


def test_micro_per_joint_vs_reference():
    rng = np.random.default_rng(99)
    for _ in range(10):
        ds, preds = random_micro(rng)
        got = per_joint_ap(preds, ds)
        for j, name in enumerate(COCO.joint_names):
            ref = reference_coco_eval(*as_oracle_input(ds, preds), COCO_SIGMAS.tolist(), joints=[j])["AP"]
            assert (got[name] is None) == (ref is None)
            if ref is not None:
                assert abs(got[name] - ref) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_score_scale_invariance(seed, factor):
    ds, preds = random_micro(np.random.default_rng(seed))
    scaled = [PredictionRecord(p.image_id, p.keypoints, p.score * factor) for p in preds]
    a = ap_summary(preds, ds, with_per_joint=False)
    b = ap_summary(scaled, ds, with_per_joint=False)
    assert a.ap_per_threshold == b.ap_per_threshold and a.AR == b.AR


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_threshold_monotone(seed):
    ds, preds = random_micro(np.random.default_rng(seed))
    aps = ap_summary(preds, ds, with_per_joint=False).ap_per_threshold
    assert all(b <= a + 1e-12 for a, b in zip(aps, aps[1:]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_removing_false_positive_never_hurts(seed):
    ds, preds = random_micro(np.random.default_rng(seed))
    params = OksParams()
    base = ap_summary(preds, ds, params, with_per_joint=False).ap_per_threshold
    # a prediction on an image without evaluable gt is a false positive at every threshold
    fp_images = {r.id for r in ds.images} - {g.image_id for g in ds.instances if not g.iscrowd and g.num_labeled}
    for i, p in enumerate(preds):
        if p.image_id in fp_images:
            rest = preds[:i] + preds[i + 1:]
            after = ap_summary(rest, ds, params, with_per_joint=False).ap_per_threshold
            assert all(b >= a - 1e-12 for a, b in zip(base, after))


def test_summary_ranges(coco_ds):
    res = ap_summary(perfect_predictions(coco_ds), coco_ds)
    for key in SUMMARY:
        assert 0.0 <= getattr(res, key) <= 1.0
    assert res.AP <= res.AP50


# --------------------------------------------------------------------- PCKh

def _mpii_pred(inst, shift=None):
    k = np.array(inst.keypoints, copy=True)
    if shift:
        for j, (dx, dy) in shift.items():
            k[j, :2] += (dx, dy)
    return PredictionRecord(inst.image_id, k, 1.0, inst.id)


def test_pckh_perfect(mpii_ds):
    res = pckh([_mpii_pred(i) for i in mpii_ds.instances], mpii_ds)
    assert res.scores["Total"] == 100.0
    assert list(res.scores) == list(PCKH_COLUMNS) and len(PCKH_COLUMNS) == 8
    assert all(v == 100.0 for v in res.scores.values())


def test_pckh_boundary_closed():
    hb = (0.0, 0.0, 30.0, 40.0)
    assert head_size(hb) == 0.6 * 50
    kps = np.tile([100.0, 100.0, 2.0], (16, 1))
    inst = PersonInstance(1, 1, kps, (0, 0, 200, 200), 4e4, head_box=hb)
    ds = PoseDataset(MPII, [ImageRecord(1, "a", 400, 400)], [inst])
    pred = _mpii_pred(inst, {10: (15.0, 0.0), 15: (15.0 + 1e-9, 0.0)})
    res = pckh([pred], ds)
    assert res.per_joint["right_wrist"] == 100.0 and res.per_joint["left_wrist"] == 0.0


def test_pckh_two_person_wrist_count():
    """Two people, four labeled wrists, one wrong: Wrist = 75."""
    insts = []
    for i in (1, 2):
        kps = np.tile([50.0 * i, 60.0, 2.0], (16, 1))
        insts.append(PersonInstance(i, 1, kps, (0, 0, 100, 100), 1e4, head_box=(0, 0, 10, 10)))
    ds = PoseDataset(MPII, [ImageRecord(1, "a", 200, 200)], insts)
    preds = [_mpii_pred(insts[0], {15: (50.0, 0.0)}), _mpii_pred(insts[1])]
    res = pckh(preds, ds)
    assert res.scores["Wrist"] == 75.0
    assert res.scores["Total"] == pytest.approx(100 * 27 / 28)


def test_pckh_order_pairing_without_ids(mpii_ds):
    preds = [PredictionRecord(i.image_id, i.keypoints, 1.0) for i in mpii_ds.instances]
    assert pckh(preds, mpii_ds).scores["Total"] == 100.0


def test_pckh_requires_mpii(coco_ds):
    with pytest.raises(ValueError):
        pckh([], coco_ds)
