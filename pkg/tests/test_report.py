import csv
import io
import json
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pose_occlusion.report import (
    JOINT_HEADER,
    SUMMARY_HEADER,
    build_report,
    group_sweep,
    joint_csv,
    summary_csv,
    sweep_csv,
    sweep_table,
    topk_affected,
)
from pose_occlusion.schema import COCO

JOINTS = COCO.joint_names


def _result(ap=0.8, joints=None, ds="ds1", **extra):
    per = {j: 0.7 for j in JOINTS}
    per.update(joints or {})
    doc = {"AP": ap, "AP50": 0.9, "AP75": 0.7, "APM": 0.6, "APL": 0.85, "AR": 0.82,
           "per_joint_ap": per, "ap_per_threshold": [ap] * 10, "recall_per_threshold": [0.82] * 10,
           "dataset_id": ds}
    doc.update(extra)
    return doc


def _man(name, **spec):
    return {"variant": name, "spec": spec}


def test_identity_variant_zero_deltas():
    base = _result()
    rep = build_report(base, [(base, _man("same"))])
    assert rep.delta_ap("same") == 0.0
    assert all(d == 0.0 for d in rep.joint_deltas("same").values())


def test_overall_delta():
    rep = build_report(_result(0.8), [(_result(0.75), _man("v"))])
    assert rep.delta_ap("v") == pytest.approx(-0.05)
    assert rep.delta_ap("v") == 0.75 - 0.8


def test_variant_order_preserved():
    names = ["c", "a", "b"]
    rep = build_report(_result(), [(_result(0.5 + 0.1 * i), _man(n)) for i, n in enumerate(names)])
    assert [v.name for v in rep.variants] == names
    rows = list(csv.reader(io.StringIO(summary_csv(rep).decode())))
    assert [r[0] for r in rows[1:]] == names


def test_mismatched_dataset_id():
    with pytest.raises(ValueError, match="dataset id"):
        build_report(_result(ds="a"), [(_result(ds="b"), _man("v"))])


def test_needs_a_variant():
    with pytest.raises(ValueError, match="at least one variant required"):
        build_report(_result(), [])


def test_paths_and_embedded_names(tmp_path):
    (tmp_path / "b.json").write_text(json.dumps(_result()))
    (tmp_path / "v.json").write_text(json.dumps(_result(0.6, variant="emb", spec={"mode": "blur"})))
    rep = build_report(tmp_path / "b.json", [(tmp_path / "v.json", None)])
    assert rep.variants[0].name == "emb" and rep.variants[0].mode == "blur"


def test_unknown_variant():
    rep = build_report(_result(), [(_result(), _man("v"))])
    with pytest.raises(KeyError):
        rep.delta_ap("nope")


# ---------------------------------------------------------------------- top-k

def test_topk_ranking():
    rep = build_report(_result(), [(_result(joints={"nose": 0.6, "left_eye": 0.65}), _man("v"))])
    assert [j for j, _ in topk_affected(rep, "v", 2)] == ["nose", "left_eye"]


def test_topk_all_zero_by_index():
    rep = build_report(_result(), [(_result(), _man("v"))])
    assert [j for j, _ in topk_affected(rep, "v", 3)] == list(JOINTS[:3])


def test_topk_zero():
    rep = build_report(_result(), [(_result(), _man("v"))])
    assert topk_affected(rep, "v", 0) == []


def test_topk_clamps_with_warning():
    rep = build_report(_result(), [(_result(), _man("v"))])
    with pytest.warns(UserWarning, match="clamping"):
        out = topk_affected(rep, "v", 40)
    assert len(out) == 17


def test_topk_default_five():
    rep = build_report(_result(), [(_result(), _man("v"))])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert len(topk_affected(rep, "v")) == 5


# ---------------------------------------------------------------------- sweep

def _sweep_report(radii, modes, ap_of):
    variants = [(_result(ap_of(r, m)), _man(f"r{r}-{m}", radius=r, mode=m)) for r in radii for m in modes]
    return build_report(_result(0.8), variants)


def test_sweep_single_row():
    table = sweep_table(group_sweep(_sweep_report([6], ["blur"], lambda r, m: 0.7)))
    assert len(table["rows"]) == 1
    assert table["rows"][0]["blur"] == pytest.approx(0.1)


def test_sweep_nine_cells():
    modes = ["blackout", "blur", "meanout"]
    table = sweep_table(group_sweep(_sweep_report([18, 6, 12], modes, lambda r, m: 0.8 - r / 100)))
    assert [row["radius"] for row in table["rows"]] == [6, 12, 18]
    cells = [row[m] for row in table["rows"] for m in table["modes"]]
    assert len(cells) == 9 and all(c is not None for c in cells)
    assert table["rows"][2]["blur"] == pytest.approx(0.18)


def test_sweep_constant_column():
    table = sweep_table(group_sweep(_sweep_report([6, 12, 18], ["blur"], lambda r, m: 0.75)))
    assert len({row["blur"] for row in table["rows"]}) == 1


def test_sweep_missing_cell_empty():
    rep = build_report(_result(), [(_result(0.7), _man("a", radius=6, mode="blur")),
                                   (_result(0.7), _man("b", radius=12, mode="blackout"))])
    table = sweep_table(group_sweep(rep))
    assert table["rows"][0]["blackout"] is None
    rows = list(csv.reader(io.StringIO(sweep_csv(table).decode())))
    assert rows[0] == ["radius", "blackout", "blur"]
    assert rows[1][1] == ""


# ------------------------------------------------------------------ CSV output

def test_csv_headers():
    rep = build_report(_result(), [(_result(0.7), _man("v", radius=6, mode="blur"))])
    summary = list(csv.reader(io.StringIO(summary_csv(rep).decode())))
    assert tuple(summary[0]) == SUMMARY_HEADER
    assert ",".join(SUMMARY_HEADER) == "variant,radius,mode,AP,AP50,AP75,APM,APL,AR,delta_AP"
    joints = list(csv.reader(io.StringIO(joint_csv(rep).decode())))
    assert tuple(joints[0]) == JOINT_HEADER
    assert len(joints) == 1 + 17


def test_two_variants_two_rows():
    rep = build_report(_result(), [(_result(0.7), _man("a")), (_result(0.6), _man("b"))])
    assert len(summary_csv(rep).decode().splitlines()) == 3


def test_purity():
    base, var = _result(), _result(0.61, joints={"nose": 0.1})
    out = [summary_csv(build_report(base, [(var, _man("v"))])) for _ in range(2)]
    assert out[0] == out[1]


ap_values = st.floats(0, 1, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(ap_values, ap_values, st.lists(ap_values, min_size=17, max_size=17), st.lists(ap_values, min_size=17, max_size=17))
def test_delta_antisymmetry(a, b, ja, jb):
    ra = _result(a, dict(zip(JOINTS, ja)))
    rb = _result(b, dict(zip(JOINTS, jb)))
    fwd = build_report(ra, [(rb, _man("v"))])
    back = build_report(rb, [(ra, _man("v"))])
    assert fwd.delta_ap("v") == -back.delta_ap("v")
    f, g = fwd.joint_deltas("v"), back.joint_deltas("v")
    assert all(f[j] == -g[j] for j in JOINTS)


def test_joint_order_survives_sorted_json():
    def sorted_doc(doc):
        doc["per_joint_ap"] = dict(sorted(doc["per_joint_ap"].items()))
        return json.loads(json.dumps(doc, sort_keys=True))

    base = sorted_doc(_result())
    var = sorted_doc(_result(joints={"right_ankle": 0.6, "left_ankle": 0.6}))
    rep = build_report(base, [(var, _man("v"))])
    assert list(rep.joint_deltas("v")) == list(JOINTS)
    assert [j for j, _ in topk_affected(rep, "v", 3)] == ["left_ankle", "right_ankle", "nose"]
