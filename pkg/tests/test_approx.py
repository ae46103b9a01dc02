import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import ndtr

from fpcap import approx, fd, model as M
from fpcap.approx import O_LABEL, S_LABEL, V0, V1
from fpcap.pipeline import capacity_row, prepare
from fpcap.saddle import sharp_capacity

# Frozen values from tests/oracles/compute_oracles.py.
NCDF_1 = 0.84134474606854295
J_DW1_005 = 0.0222887709643052          # mollified profile, eps = 0.05, eta = eps^2
J_OVER_SHARP_DW1_005 = 30.92859089713383
K_DW1_005 = 1.4727816158949976


def geometry(setup, eps, K=None, h=None):
    tw = setup.wells
    dom = fd.build_domain(setup.model, eps, tw.m1, tw.m0, tw.saddle, h=h)
    geo = approx.build_geometry(setup.model, setup.analysis, eps, K, grid=dom.grid, m0=tw.m0, m1=tw.m1)
    return geo, dom


def solved(setup, eps):
    tw = setup.wells
    meas = setup.measure(eps)
    dom = fd.build_domain(setup.model, eps, tw.m1, tw.m0, tw.saddle)
    s = fd.assemble(setup.model, eps, dom)
    sd = fd.assemble(setup.model, eps, dom, adjoint=True)
    return meas, s, fd.solve_equilibrium(s), fd.solve_equilibrium(sd)


def test_delta_value():
    assert approx.delta_of(1.0, 0.1) == pytest.approx(math.sqrt(0.1 * math.log(10)), rel=1e-15)
    assert approx.delta_of(1.0, 0.1) == pytest.approx(0.4799, abs=1e-4)


@given(eps=st.floats(1e-4, 0.3), K=st.floats(0.1, 5))
def test_delta_shrinks_with_epsilon(eps, K):
    assert approx.delta_of(K, eps / 2) < approx.delta_of(K, eps)


def test_auto_K_matches_box_rule(setup1d):
    assert approx.auto_K(setup1d.analysis, 0.05, [[-1.0], [1.0]], 0.05) == pytest.approx(K_DW1_005, rel=1e-14)


def test_one_dimensional_geometry(setup1d):
    geo, _ = geometry(setup1d, 0.1, K=1.0)
    d = approx.delta_of(1.0, 0.1)
    assert geo.delta == d
    np.testing.assert_allclose(geo.half_widths, [d])
    assert geo.threshold == pytest.approx(0.25 + d ** 2 / 4, rel=1e-15)
    labels = geo.classify([[1.0], [-1.0], [0.0], [0.45], [-0.45], [1.6]])
    assert labels.tolist() == [V1, V0, S_LABEL, S_LABEL, S_LABEL, O_LABEL]


@pytest.mark.parametrize("gamma", [0.0, 1.0])
def test_two_dimensional_geometry(gamma, setup2d_rev, setup2d_rot):
    setup = setup2d_rot if gamma else setup2d_rev
    geo, _ = geometry(setup, 0.1)
    np.testing.assert_allclose(geo.half_widths, [geo.delta, math.sqrt(2) * geo.delta], rtol=1e-12)
    assert geo.classify([[1.0, 0.0], [-1.0, 0.0], [0.0, 0.0]]).tolist() == [V1, V0, S_LABEL]
    lab = geo.labels
    assert set(np.unique(lab).tolist()) <= {V0, V1, S_LABEL, O_LABEL}
    nodes = geo.grid.flat_nodes()
    assert np.all(geo.in_Q(nodes[lab == S_LABEL]))
    assert np.all(setup.model.W(nodes[lab == O_LABEL]) > geo.threshold)
    assert np.all(setup.model.W(nodes[lab != O_LABEL]) <= geo.threshold)


def test_oversized_box_is_a_geometry_error(setup1d):
    with pytest.raises(approx.GeometryError):
        geometry(setup1d, 0.1, K=5.0)


def test_epsilon_range_is_checked(setup1d):
    with pytest.raises(ValueError):
        geometry(setup1d, 0.5, K=1.0, h=0.1)


def test_profile_values(setup1d):
    grid = fd.Grid(np.array([-2.0]), 0.01, (401,))
    geo = approx.build_geometry(setup1d.model, setup1d.analysis, 0.01, 1.0, grid=grid, m0=[-1.0], m1=[1.0])
    p = approx.p_eps([[0.0], [0.1], [1.0], [-1.0], [2.0]], setup1d.analysis, geo, 0.01)
    assert p[0] == 0.5
    assert p[1] == pytest.approx(NCDF_1, abs=1e-12)
    assert p[2:].tolist() == [1.0, 0.0, 0.0]


def test_adjoint_profile_uses_adjoint_direction(setup2d_rot):
    an = setup2d_rot.analysis
    geo, _ = geometry(setup2d_rot, 0.1)
    z = np.array([[0.1, 0.2]])
    want = ndtr(float(z[0] @ an.v_dag) * math.sqrt(an.beta_dag / 0.1))
    assert approx.p_eps(z, an, geo, 0.1, adjoint=True)[0] == pytest.approx(want, rel=1e-14)
    assert approx.p_eps(z, an, geo, 0.1)[0] != pytest.approx(want, rel=1e-3)


@settings(max_examples=40, deadline=None)
@given(s=st.floats(-0.3, 0.3), t=st.floats(0.0, 0.2), u=st.floats(-0.3, 0.3))
def test_profile_monotone_along_v(setup2d_rot, s, t, u):
    an = setup2d_rot.analysis
    geo, _ = geometry(setup2d_rot, 0.1)
    perp = np.array([-an.v[1], an.v[0]])
    a = s * an.v + u * perp
    b = a + t * an.v
    la, lb = geo.classify([a, b])
    p = approx.p_eps([a, b], an, geo, 0.1)
    assert np.all((p >= 0) & (p <= 1))
    if la == lb == S_LABEL:
        assert p[1] >= p[0]


def test_mollify_constant_field_is_unchanged():
    grid = fd.Grid(np.zeros(2), 0.1, (20, 30))
    out = approx.mollify(np.full(grid.size, 0.7), grid, 0.35)
    np.testing.assert_allclose(out, 0.7, rtol=1e-15)


def test_mollify_step_gives_monotone_ramp():
    h = 0.01
    grid = fd.Grid(np.zeros(1), h, (101,))
    x = grid.flat_nodes()[:, 0]
    step = (x >= 0.5).astype(float)
    eta = 2 * h
    out = approx.mollify(step, grid, eta)
    assert np.all(np.diff(out) >= 0) and out.min() >= 0 and out.max() <= 1
    far = np.abs(x - 0.5) > eta + 1e-12
    np.testing.assert_array_equal(out[far], step[far])
    assert np.sum((out > 0) & (out < 1)) * h <= 2 * eta


def test_mollify_rejects_unresolved_radius():
    grid = fd.Grid(np.zeros(1), 0.01, (10,))
    with pytest.raises(ValueError):
        approx.mollify(np.zeros(10), grid, 0.005)


def test_mollified_profile_lipschitz_bound(setup1d):
    eps = 0.05
    eta = eps ** 2
    geo, _ = geometry(setup1d, eps, h=eta / 8)
    p = approx.p_eps_grid(setup1d.analysis, geo, eps)
    out = approx.mollify(p, geo.grid, eta)
    x = geo.grid.flat_nodes()[:, 0]
    inner = np.abs(x) < geo.delta - eta
    bound = math.sqrt(setup1d.analysis.beta / (2 * math.pi * eps)) * eta
    assert np.max(np.abs(out - p)[inner]) <= bound


def test_trivial_flow_reversible_and_constant(setup1d, setup2d_rev, setup2d_rot):
    meas, s, h, _ = solved(setup2d_rev, 0.15)
    assert np.all(approx.trivial_admissible_field(h, s) == 0)
    _, s, _, _ = solved(setup2d_rot, 0.15)
    c = np.full(s.n, 0.4)
    flow = approx.trivial_admissible_field(c, s)
    np.testing.assert_allclose(flow, 0.8 * s.Ga_l, rtol=1e-15)
    assert approx.admissibility_residual(c, flow, s) == 0.0


def test_trivial_flow_rejects_non_divergence_free_model():
    m = M.double_well_2d(1.0, perturbation="grad")
    rot = M.double_well_2d(1.0)
    dom = fd.build_domain(rot, 0.15, [1.0, 0.0], [-1.0, 0.0], [0.0, 0.0])
    s = fd.assemble(rot, 0.15, dom)
    s.model = m
    with pytest.raises(M.ModelError):
        approx.trivial_admissible_field(np.zeros(s.n), s)


def test_continuum_trivial_field_residual(setup2d_rot):
    an = setup2d_rot.analysis
    eps = 0.1
    geo, _ = geometry(setup2d_rot, eps)
    f = lambda z: ndtr(((np.atleast_2d(z) - an.location) @ an.v) * math.sqrt(an.beta / eps))
    g = approx.trivial_field_function(f, setup2d_rot.model, eps)
    nodes = geo.grid.flat_nodes()
    pts = nodes[geo.labels == S_LABEL][::7]
    assert pts.shape[0] > 20
    res = approx.continuum_admissibility_residual(f, g, setup2d_rot.model, eps, pts)
    assert np.max(res) <= 1e-6


def test_reversible_J_of_solution_is_dirichlet_form(setup2d_rev):
    meas, s, h, _ = solved(setup2d_rev, 0.15)
    pair = approx.make_pair(h, np.zeros(s.Gs.size), s)
    assert approx.evaluate_J(pair, s, meas) == pytest.approx(fd.capacity_dirichlet(h, meas), rel=1e-13)


@pytest.mark.parametrize("gamma", [0.0, 1.0])
def test_minimizer_pair_attains_capacity(gamma, setup2d_rev, setup2d_rot):
    setup = setup2d_rot if gamma else setup2d_rev
    meas, s, h, hd = solved(setup, 0.15)
    pair = approx.minimizer_pair(h, hd)
    assert pair.admissibility_residual <= 1e-12
    assert approx.evaluate_J(pair, s, meas) == pytest.approx(fd.capacity_dirichlet(h, meas), rel=1e-10)


@pytest.fixture(scope="module")
def rot_solution():
    return solved(prepare(M.double_well_2d(1.0)), 0.15)


@settings(max_examples=25, deadline=None)
@given(amp=st.floats(-0.5, 0.5), cx=st.floats(-0.6, 0.6), cy=st.floats(-0.4, 0.4), width=st.floats(0.05, 0.4))
def test_J_bounds_capacity_from_above(rot_solution, amp, cx, cy, width):
    meas, s, h, hd = rot_solution
    base = approx.minimizer_pair(h, hd)
    z = s.grid.flat_nodes()
    df = amp * np.exp(-((z[:, 0] - cx) ** 2 + (z[:, 1] - cy) ** 2) / width ** 2)
    df[s.domain.a_mask | s.domain.b_mask] = 0.0
    pair = approx.make_pair(base.f + df, base.flow + s.transport(df, "l"), s)
    cap = fd.capacity_dirichlet(h, meas)
    assert approx.evaluate_J(pair, s, meas) >= cap * (1 - 1e-12)


def test_J_rejects_inadmissible_flow_and_obstacle(rot_solution):
    meas, s, h, hd = rot_solution
    base = approx.minimizer_pair(h, hd)
    bad = approx.make_pair(base.f, base.flow * 1.5, s)
    with pytest.raises(approx.AdmissibilityError, match="residual"):
        approx.evaluate_J(bad, s, meas)
    f = base.f.copy()
    f[s.domain.a_mask] = 0.5
    with pytest.raises(approx.AdmissibilityError, match="obstacle"):
        approx.evaluate_J(approx.make_pair(f, approx.trivial_admissible_field(f, s), s), s, meas)


def test_J_invariant_under_zero_flow_shift(rot_solution):
    meas, s, h, hd = rot_solution
    base = approx.minimizer_pair(h, hd)
    shifted = approx.make_pair(base.f, base.flow + np.zeros_like(base.flow), s)
    assert approx.evaluate_J(shifted, s, meas) == approx.evaluate_J(base, s, meas)


@pytest.mark.parametrize("gamma", [0.0, 1.0])
def test_sandwich(gamma, setup2d_rev, setup2d_rot):
    row = capacity_row(setup2d_rot if gamma else setup2d_rev, 0.15)
    assert row["cap_dirichlet"] <= row["J_triv_upper"]
    assert row["cap_dirichlet"] <= row["J_poisson_upper"]
    assert row["J_minimizer"] == pytest.approx(row["cap_dirichlet"], rel=1e-10)


def test_mollified_profile_J_one_dimension(setup1d):
    eps = 0.05
    eta = eps ** 2
    geo, dom = geometry(setup1d, eps, h=eta / 8)
    assert geo.K == pytest.approx(K_DW1_005, rel=1e-14)
    s = fd.assemble(setup1d.model, eps, dom)
    meas = setup1d.measure(eps)
    f = approx.enforce_wells(approx.mollify(approx.p_eps_grid(setup1d.analysis, geo, eps), dom.grid, eta), s)
    J = approx.evaluate_J(approx.make_pair(f, approx.trivial_admissible_field(f, s), s), s, meas)
    assert J == pytest.approx(J_DW1_005, rel=0.02)
    ratio = J / sharp_capacity(setup1d.analysis, meas, setup1d.wells.H)
    assert ratio == pytest.approx(J_OVER_SHARP_DW1_005, rel=0.02)
