import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import stamp_mass
from pose_occlusion.heatmap import HeatmapStack, decode, dump_heatmaps, encode, gaussian_stamp, load_heatmaps


def _kps(*points):
    return np.array([(x, y, 2) for x, y in points], dtype=np.float64)


def test_stamp_shape_and_peak():
    s = gaussian_stamp()
    assert s.shape == (13, 13) and s[6, 6] == 1.0 and s.max() == 1.0


def test_peak_at_cell_centre():
    hm = encode(_kps((40, 60)))
    assert hm.heatmaps.shape == (1, 64, 48)
    assert hm.heatmaps[0, 15, 10] == 1.0
    assert hm.heatmaps.max() <= 1.0


def test_unlabeled_joint_zero():
    kps = _kps((40, 60), (80, 80))
    kps[1, 2] = 0
    hm = encode(kps)
    assert not hm.heatmaps[1].any() and hm.weights.tolist() == [1, 0]


def test_weight_zero_gives_zero_map():
    hm = encode(_kps((40, 60), (80, 80)), weights=[1, 0])
    assert not hm.heatmaps[1].any() and hm.weights[1] == 0


@pytest.mark.parametrize("x,y", [(1, 1), (190, 3), (0, 254), (100, 255), (5, 130)])
def test_border_mass_matches_stamp_oracle(x, y):
    hm = encode(_kps((x, y)))
    assert hm.heatmaps[0].sum() == pytest.approx(stamp_mass(x, y, 4, 48, 64), rel=1e-6)


def test_stamp_off_map_weight_zero():
    hm = encode(_kps((-60, 100)))
    assert hm.weights[0] == 0 and not hm.heatmaps[0].any()


def test_decode_tie_row_major():
    maps = np.zeros((1, 5, 5), dtype=np.float32)
    maps[0, 3, 1] = maps[0, 1, 4] = 0.8
    out = decode(HeatmapStack(maps, np.ones(1)), quarter_offset=False)
    assert out[0].tolist() == [16, 4, pytest.approx(0.8)]


def test_decode_all_zero():
    out = decode(np.zeros((3, 8, 8), dtype=np.float32))
    assert not out.any()


def test_decode_quarter_offset():
    maps = np.zeros((1, 8, 8), dtype=np.float32)
    maps[0, 4, 4], maps[0, 4, 5], maps[0, 3, 4] = 1.0, 0.5, 0.2
    assert decode(maps)[0, :2].tolist() == [4.25 * 4, 3.75 * 4]
    assert decode(maps, quarter_offset=False)[0, :2].tolist() == [16, 16]


def test_dump_round_trip(tmp_path):
    hm = encode(_kps((40, 60), (7, 9)))
    dump_heatmaps(hm, tmp_path / "h.bin")
    raw = (tmp_path / "h.bin").read_bytes()
    assert np.frombuffer(raw[:12], "<u4").tolist() == [2, 64, 48]
    assert np.array_equal(load_heatmaps(tmp_path / "h.bin"), hm.heatmaps)


@settings(max_examples=300, deadline=None)
@given(st.floats(7, 192 - 8), st.floats(7, 256 - 8))
def test_round_trip_bound(x, y):
    out = decode(encode(_kps((x, y))))
    assert np.max(np.abs(out[0, :2] - (x, y))) <= 0.5 * 4 + 1e-6
