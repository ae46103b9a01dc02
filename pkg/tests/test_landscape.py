import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from fpcap import _backend, model as M
from fpcap.landscape import (
    DegenerateCriticalPointError, Lattice, classify, communication_height, find_critical_points, two_well,
)

BACKENDS = _backend.available()


def test_double_well_critical_points(dw1):
    cps = find_critical_points(dw1, [(-2, 2)], seeds_per_axis=9)
    np.testing.assert_allclose([c.location[0] for c in cps], [-1.0, 0.0, 1.0], atol=1e-10)
    assert [c.kind for c in cps] == ["minimum", "saddle_index_1", "minimum"]
    assert [c.index for c in cps] == [0, 1, 0]
    assert all(c.grad_norm <= 1e-10 for c in cps)


def test_convex_potential_has_one_minimum():
    cps = find_critical_points(M.quadratic(2), [(-2, 2), (-2, 2)])
    assert len(cps) == 1 and cps[0].kind == "minimum"
    np.testing.assert_allclose(cps[0].location, [0.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("gamma", [0.0, 1.0, 2.0])
def test_two_dimensional_family_critical_points(gamma):
    tw = two_well(M.double_well_2d(gamma), [(-2, 2), (-2, 2)])
    np.testing.assert_allclose(tw.m0.location, [-1, 0], atol=1e-10)
    np.testing.assert_allclose(tw.m1.location, [1, 0], atol=1e-10)
    np.testing.assert_allclose(tw.saddle.location, [0, 0], atol=1e-10)
    assert tw.H == pytest.approx(0.25, abs=1e-15)
    np.testing.assert_allclose(tw.saddle.hess_eigs, [-1.0, 1.0], atol=1e-12)


def test_start_well_left_swaps_minima(dw1):
    tw = two_well(dw1, start_well="left")
    assert tw.m1.location[0] == pytest.approx(-1.0)


def test_degenerate_critical_point_is_an_error():
    quartic = M.custom_polynomial([(1.0, [4])], 1)
    with pytest.raises(DegenerateCriticalPointError):
        classify(quartic, [0.0], 1e-8)
    with pytest.raises(DegenerateCriticalPointError):
        find_critical_points(quartic, [(-2, 2)], degeneracy_tol=1e-2)


def test_seed_count_and_box_are_checked(dw1):
    with pytest.raises(ValueError):
        find_critical_points(dw1, [(-2, 2)], seeds_per_axis=2)
    with pytest.raises(ValueError):
        find_critical_points(dw1, [(2, -2)])


@pytest.mark.parametrize("backend", BACKENDS)
def test_one_dimensional_height(dw1, backend):
    res = communication_height(dw1, [1.0], {"kind": "point", "at": [-1.0]},
                               {"box": [(-2, 2)], "step": 1e-3}, backend=backend)
    assert res.height == pytest.approx(0.25, abs=1e-12)
    assert abs(res.witness[0]) <= 1e-3
    np.testing.assert_allclose(res.path[0], [1.0])
    np.testing.assert_allclose(res.path[-1], [-1.0], atol=1e-12)


def test_start_inside_target_is_degenerate(dw1):
    res = communication_height(dw1, [-0.95], {"kind": "ball", "center": [-1.0], "radius": 0.1},
                               {"box": [(-2, 2)], "step": 1e-2})
    assert res.height == float(dw1.W(np.array([-0.95])))
    assert res.path.shape == (0, 1)


@pytest.mark.parametrize("gamma", [0.0, 1.0])
@pytest.mark.parametrize("backend", BACKENDS)
def test_two_dimensional_height_and_witness(gamma, backend):
    m = M.double_well_2d(gamma)
    step = 0.02
    grid = {"box": [(-2, 2), (-2, 2)], "step": step}
    res = communication_height(m, [1.0, 0.0], {"kind": "ball", "center": [-1.0, 0.0], "radius": 0.1},
                               grid, backend=backend)
    assert res.height == pytest.approx(0.25, abs=1e-12)
    assert np.linalg.norm(res.witness) <= 2 * step
    assert any(np.array_equal(res.witness, p) for p in res.path)


def test_height_is_symmetric_between_points():
    m = M.double_well_2d(1.0, ky=2.0)
    step = 0.05
    grid = {"box": [(-2.013, 2.0), (-1.5, 1.5)], "step": step}
    fwd = communication_height(m, [1.0, 0.0], {"kind": "point", "at": [-1.0, 0.0]}, grid).height
    back = communication_height(m, [-1.0, 0.0], {"kind": "point", "at": [1.0, 0.0]}, grid).height
    lip = float(np.max(np.linalg.norm(m.grad_W(M.default_probes(2, -2, 2, 41)), axis=1)))
    assert abs(fwd - back) <= 2 * step * lip


def test_refinement_changes_shrink():
    m = M.custom_polynomial([(0.25, [4, 0]), (-0.5, [2, 0]), (0.25, [0, 0]), (0.1, [1, 0]), (0.5, [0, 2])], 2)
    heights = []
    for step in (0.08, 0.04, 0.02, 0.01):
        grid = {"box": [(-2.0 + 0.013, 2.0 + 0.013), (-1.5 + 0.007, 1.5 + 0.007)], "step": step}
        heights.append(communication_height(m, [1.0, 0.0], {"kind": "ball", "center": [-1.0, 0.0],
                                                            "radius": 0.1}, grid).height)
    diffs = np.abs(np.diff(heights))
    assert np.all(diffs[1:] < diffs[:-1])


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-1.8, 1.8), y=st.floats(-1.8, 1.8))
@example(x=-1.0, y=0.0)
def test_height_bounds(x, y):
    m = M.double_well_2d(1.0)
    grid = {"box": [(-2, 2), (-2, 2)], "step": 0.1}
    target = {"kind": "ball", "center": [-1.0, 0.0], "radius": 0.15}
    res = communication_height(m, [x, y], target, grid)
    assert res.height >= 0.0
    if res.path.shape[0] == 0:
        # start inside the target: the height is W at the start
        assert res.height == float(m.W(np.array([x, y])))
        return
    lat = Lattice(np.array(grid["box"]), grid["step"])
    start_node = lat.coords([lat.nearest([x, y])])[0]
    assert res.height >= float(m.W(start_node)) - 1e-15
    assert res.height == pytest.approx(float(np.max(m.W(res.path))), abs=0)


@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_minimax_backends_agree(data):
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    shape = (data.draw(st.integers(2, 8)), data.draw(st.integers(2, 8)))
    n = shape[0] * shape[1]
    vals = np.array(data.draw(st.lists(st.integers(0, 5), min_size=n, max_size=n)), dtype=np.float64)
    mask = np.array(data.draw(st.lists(st.booleans(), min_size=n, max_size=n)), dtype=np.uint8)
    start = data.draw(st.integers(0, n - 1))
    offsets = np.array([(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1) if a or b], dtype=np.int64)
    sh = np.array(shape, dtype=np.int64)
    outs = [_backend.get(b).minimax_dijkstra(vals, sh, start, mask, offsets) for b in BACKENDS]
    (h0, e0, p0), (h1, e1, p1) = outs
    assert h0 == h1 and e0 == e1
    np.testing.assert_array_equal(p0, p1)
    if not mask.any():
        assert e0 < 0


def test_unreachable_target_is_reported():
    vals = np.zeros(4)
    offsets = np.array([[-1], [1]], dtype=np.int64)
    for b in BACKENDS:
        _, end, _ = _backend.get(b).minimax_dijkstra(vals, np.array([4], dtype=np.int64), 0,
                                                    np.zeros(4, dtype=np.uint8), offsets)
        assert end < 0
