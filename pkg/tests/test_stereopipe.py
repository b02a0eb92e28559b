import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssidepth import stereopipe as sp
from ssidepth.errors import DegenerateRangeError, DimensionError, EmptyMaskError
from ssidepth.grids import ScalarGrid, ValidityMask


def flow(u, v=None):
    u = np.asarray(u, float)
    return sp.FlowField(ScalarGrid(u, "flow_u"), ScalarGrid(np.zeros_like(u) if v is None else v, "flow_v"))


def clean_frame(rows=20, cols=200, span=20.0):
    """Rows of constant disparity from 0 to -span; the reverse flow undoes it exactly."""
    u = -np.linspace(0, span, rows)[:, None].repeat(cols, 1)
    # a constant-per-row field is its own warp partner: u_rl(x + u) = -u
    return flow(u), flow(-u)


def test_zero_flow_consistent():
    z = np.zeros((4, 6))
    assert sp.lr_consistency(flow(z), flow(z)).flags.all()


def test_inconsistent_flow_rejected():
    assert not sp.lr_consistency(flow(np.full((4, 30), 5.0)), flow(np.zeros((4, 30)))).flags.any()


def test_out_of_frame_warp_invalid():
    u = np.zeros((2, 5))
    u[:, 0] = -1.5
    u[:, 4] = 0.5
    ok = sp.lr_consistency(flow(u), flow(-u)).flags
    assert not ok[:, 0].any() and not ok[:, 4].any() and ok[:, 1:4].all()


def test_subpixel_warp_interpolates():
    # u_rl is a ramp, so linear sampling at x + 0.5 is exact
    cols = 8
    ramp = np.arange(cols, dtype=float)[None, :]
    u_lr = np.full((1, cols), 0.5)
    u_rl = -0.5 + 0.0 * ramp + 2.0 * (ramp - np.floor(ramp))  # constant -0.5
    ok = sp.lr_consistency(flow(u_lr), flow(u_rl), threshold=1e-12).flags
    assert ok[0, :-1].all() and not ok[0, -1]


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        sp.lr_consistency(flow(np.zeros((2, 3))), flow(np.zeros((3, 2))))


@settings(max_examples=60)
@given(st.integers(0, 2**31 - 1))
def test_mirror_symmetry(seed):
    # negating u on both flows and mirroring the frame horizontally maps the check onto itself
    rng = np.random.default_rng(seed)
    u_lr = rng.uniform(-4, 4, size=(5, 16))
    u_rl = rng.uniform(-4, 4, size=(5, 16))
    a = sp.lr_consistency(flow(u_lr), flow(u_rl)).flags
    b = sp.lr_consistency(flow(-u_lr[:, ::-1]), flow(-u_rl[:, ::-1])).flags
    assert np.array_equal(a, b[:, ::-1])


def test_clean_frame_accepted():
    rep = sp.frame_quality(*clean_frame())
    assert rep.accepted and rep.reject_reasons == ()
    assert rep.horizontal_range == pytest.approx(20)


def test_vertical_rule():
    fl, fr = clean_frame()
    v = np.zeros(fl.shape)
    v.flat[: int(0.15 * v.size)] = 3.0
    rep = sp.frame_quality(sp.FlowField(fl.u, ScalarGrid(v, "flow_v")), fr)
    assert rep.reject_reasons == ("vertical",)


def test_range_rule():
    rep = sp.frame_quality(*clean_frame(span=5.0))
    assert rep.reject_reasons == ("range",)


def test_pass_rate_rule():
    fl, fr = clean_frame()
    u_rl = fr.u.values.copy()
    u_rl[:8] += 5.0  # 8 of 20 rows inconsistent
    rep = sp.frame_quality(fl, flow(u_rl))
    assert rep.reject_reasons == ("pass_rate",)
    assert rep.lr_pass_rate < 0.70
    assert sp.frame_quality(*clean_frame()).lr_pass_rate > 0.9


def test_no_consistent_pixels():
    z = np.zeros((3, 20))
    rep = sp.frame_quality(flow(z + 5), flow(z))
    assert rep.horizontal_range == 0 and "pass_rate" in rep.reject_reasons


@settings(max_examples=30)
@given(st.floats(-3, 3))
def test_gates_invariant_to_opposite_shifts(c):
    # with u_rl constant along each row, shifting u_lr by c and u_rl by -c keeps warps consistent
    rows, cols = 10, 80
    u = -np.linspace(2, 22, rows)[:, None].repeat(cols, 1)
    a = sp.frame_quality(flow(u), flow(-u))
    b = sp.frame_quality(flow(u + c), flow(-u - c))
    assert a.reject_reasons == b.reject_reasons
    assert b.horizontal_range == pytest.approx(a.horizontal_range)


def test_report_json_stable():
    rep = sp.frame_quality(*clean_frame())
    assert json.dumps(rep.to_dict(), sort_keys=True) == json.dumps(sp.frame_quality(*clean_frame()).to_dict(), sort_keys=True)
    assert rep.to_dict()["accepted"] is True


def test_sky_mask():
    d = ScalarGrid(np.array([[0.5, 0.01, 0.3], [0.9, 0.4, 0.2]]))
    m = ValidityMask(np.array([[True, True, False], [True, True, True]]))
    none = ValidityMask.full(2, 3, False)
    same, same_mask = sp.apply_sky_mask(d, m, none)
    assert np.array_equal(same.values, d.values) and np.array_equal(same_mask.flags, m.flags)
    sky = ValidityMask(np.array([[False, False, True], [True, False, False]]))
    out, om = sp.apply_sky_mask(d, m, sky)
    assert out.values[0, 2] == 0.01 and out.values[1, 0] == 0.01
    assert om.flags[0, 2]
    with pytest.raises(EmptyMaskError):
        sp.apply_sky_mask(d, m, ValidityMask.full(2, 3))


def test_normalize_unit():
    d = ScalarGrid(np.array([[2.0, 4.0, 6.0]]))
    m = ValidityMask.like(d)
    out = sp.normalize_unit(d, m)
    assert out.values.tolist() == [[0.0, 0.5, 1.0]]
    assert np.array_equal(sp.normalize_unit(out, m).values, out.values)
    with pytest.raises(DegenerateRangeError):
        sp.normalize_unit(ScalarGrid(np.ones((2, 2))), ValidityMask.full(2, 2))


def test_normalize_unit_exact_span(rng):
    d = ScalarGrid(rng.normal(size=(7, 9)) * 37 + 5)
    m = ValidityMask(rng.random((7, 9)) < 0.6)
    out = sp.normalize_unit(d, m).values[m.flags]
    assert out.min() == 0.0 and out.max() == 1.0
