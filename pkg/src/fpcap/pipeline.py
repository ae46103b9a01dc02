"""End-to-end studies shared by the command line and the acceptance suite.

Each study returns plain dictionaries (one row per ``eps``) so the results
can be written as CSV/JSON without further conversion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import approx, fd
from .landscape import TwoWell, communication_height, two_well
from .mc import SimConfig, max_drift, sim_box, simulate_hitting_times
from .model import DiffusionModel, GibbsMeasure, partition_function
from .saddle import SaddleAnalysis, analyze_saddle, eyring_kramers_time, log_A_eps, sharp_capacity


@dataclass
class Setup:
    """Critical points, saddle data and quadrature box of a two-well model."""

    model: DiffusionModel
    wells: TwoWell
    analysis: SaddleAnalysis
    box: np.ndarray

    def measure(self, epsilon: float) -> GibbsMeasure:
        minima = [self.wells.m0.location, self.wells.m1.location]
        return partition_function(self.model, epsilon, self.box, minima=minima)


def prepare(model: DiffusionModel, box=None, start_well: str = "right") -> Setup:
    """Locate the wells and the saddle and analyze the saddle spectrum."""
    if box is None:
        box = [(-3.0, 3.0)] * model.dim
    box = np.asarray(box, dtype=np.float64).reshape(model.dim, 2)
    tw = two_well(model, box, start_well)
    return Setup(model, tw, analyze_saddle(model, tw.saddle, tw.m1), box)


# ---------------------------------------------------------------------------
# asymptotic predictions


def analyze_row(setup: Setup, epsilon: float) -> dict:
    """Saddle data, partition function, sharp capacity and EK time."""
    an = setup.analysis
    meas = setup.measure(epsilon)
    H = setup.wells.H
    return {
        "epsilon": epsilon,
        "mu": an.mu,
        "beta": an.beta,
        "omega0": an.omega0,
        "Z": meas.Z,
        "laplace_Z": meas.laplace_Z,
        "A_eps": math.exp(log_A_eps(setup.model.dim, epsilon, H, meas.log_Z)),
        "capacity": sharp_capacity(an, meas, H),
        "mean_time": eyring_kramers_time(an, setup.wells.m1, setup.wells.saddle, epsilon, setup.model),
    }


# ---------------------------------------------------------------------------
# PDE capacities


def default_eta(epsilon: float, h: float) -> float:
    """``eps^2`` when the grid resolves it (``eps^2 >= 2h``), else ``2h``."""
    return epsilon ** 2 if epsilon ** 2 >= 2 * h else 2 * h


@dataclass
class GridSolution:
    system: fd.LinearSystem
    adjoint: fd.LinearSystem
    h: fd.DiscreteField
    h_dag: fd.DiscreteField


def solve_pair(setup: Setup, epsilon: float, domain: fd.ComputationalDomain,
               scheme: str = "hybrid") -> GridSolution:
    s = fd.assemble(setup.model, epsilon, domain, scheme=scheme)
    sd = fd.assemble(setup.model, epsilon, domain, adjoint=True, scheme=scheme)
    return GridSolution(s, sd, fd.solve_equilibrium(s), fd.solve_equilibrium(sd))


def capacity_row(setup: Setup, epsilon: float, h: float | None = None, K: float | None = None,
                 eta: float | None = None, scheme: str = "hybrid", keep_fields: bool = False) -> dict:
    """Capacities by every route on grids ``h`` and ``h/2``.

    ``cap_dirichlet``, ``cap_flux``, ``cap_adjoint`` and the J values refer
    to the grid ``h`` (default ``sqrt(eps)/8``); ``richardson_err`` is the
    error estimate of the ``h/2`` value and ``cap_extrapolated`` the
    extrapolated capacity.
    """
    model, tw, an = setup.model, setup.wells, setup.analysis
    meas = setup.measure(epsilon)
    if h is None:
        h = math.sqrt(epsilon) / 8
    dom = fd.build_domain(model, epsilon, tw.m1, tw.m0, tw.saddle, h=h)
    sol = solve_pair(setup, epsilon, dom, scheme)
    s = sol.system
    cap = fd.capacity_dirichlet(sol.h, meas)
    cap_flux = fd.capacity_flux(sol.h, meas)
    cap_dag = fd.capacity_dirichlet(sol.h_dag, meas)

    geo = approx.build_geometry(model, an, epsilon, K, grid=dom.grid, m0=tw.m0, m1=tw.m1)
    if eta is None:
        eta = default_eta(epsilon, h)
    f = approx.enforce_wells(approx.mollify(approx.p_eps_grid(an, geo, epsilon), dom.grid, eta), s)
    j_triv = approx.evaluate_J(approx.make_pair(f, approx.trivial_admissible_field(f, s), s), s, meas)
    pois = fd.solve_poisson_admissible(f, s, meas)
    j_pois = approx.evaluate_J(approx.make_pair(f, pois.flow, s), s, meas)
    j_min = approx.evaluate_J(approx.minimizer_pair(sol.h, sol.h_dag), s, meas)

    fine = solve_pair(setup, epsilon, dom.refined(), scheme)
    cap_fine = fd.capacity_dirichlet(fine.h, meas)
    cap_x, err = fd.richardson(cap, cap_fine)
    sharp = sharp_capacity(an, meas, tw.H)
    row = {
        "epsilon": epsilon,
        "h": h,
        "cap_dirichlet": cap,
        "cap_flux": cap_flux,
        "cap_adjoint": cap_dag,
        "J_triv_upper": j_triv,
        "J_poisson_upper": j_pois,
        "J_minimizer": j_min,
        "sharp_formula": sharp,
        "cap_dirichlet_fine": cap_fine,
        "cap_extrapolated": cap_x,
        "richardson_err": err,
        "ratio_to_sharp": cap / sharp,
        "K": geo.K,
        "eta": eta,
        "peclet_max": s.peclet_max,
        "poisson_energy_ratio": pois.ratio,
    }
    if keep_fields:
        row["_fields"] = {"h": sol.h, "h_dag": sol.h_dag}
    return row


def landscape_value(setup: Setup, epsilon: float, h: float, scheme: str = "hybrid") -> tuple[float, fd.DiscreteField]:
    """``w(m1)`` from the landscape solve on grid ``h``."""
    tw = setup.wells
    dom = fd.build_domain(setup.model, epsilon, tw.m1, tw.m0, tw.saddle, h=h)
    s = fd.assemble(setup.model, epsilon, dom, scheme=scheme)
    w = fd.solve_landscape(s)
    return w.at(tw.m1.location), w


def landscape_row(setup: Setup, epsilon: float, h: float | None = None) -> dict:
    """Grid-converged ``w(m1)`` (Richardson from ``h`` and ``h/2``) against EK."""
    if h is None:
        h = math.sqrt(epsilon) / 8
    w1, _ = landscape_value(setup, epsilon, h)
    w2, _ = landscape_value(setup, epsilon, h / 2)
    wx, err = fd.richardson(w1, w2)
    ek = eyring_kramers_time(setup.analysis, setup.wells.m1, setup.wells.saddle, epsilon, setup.model)
    return {"epsilon": epsilon, "h": h, "w_m1": w1, "w_m1_fine": w2, "w_m1_extrapolated": wx,
            "richardson_err": err, "EK_time": ek, "ratio_w_ek": wx / ek}


# ---------------------------------------------------------------------------
# Monte Carlo


def default_dt(setup: Setup, epsilon: float, start, center) -> float:
    """Largest step of the form ``c * 10^k`` (c in 1, 2, 5) satisfying the step-size rules."""
    cfg = SimConfig(epsilon, 1.0, 1.0, start, center, 1.0, 1)
    md = max_drift(setup.model, sim_box(cfg))
    cap = min(epsilon / 10, 0.01 / md if md > 0 else math.inf)
    k = math.floor(math.log10(cap))
    for c in (5.0, 2.0, 1.0):
        if c * 10.0 ** k <= cap:
            return c * 10.0 ** k
    return 10.0 ** k


def mc_row(setup: Setup, epsilon: float, n_paths: int, seed: int, dt: float | None = None,
           radius: float | None = None, backend: str | None = None) -> tuple[dict, object]:
    """Hitting time of ``B_r(m0)`` from ``m1`` with ``t_max = 100 EK``."""
    tw = setup.wells
    start = tw.m1.location
    center = tw.m0.location
    if radius is None:
        radius = epsilon
    if dt is None:
        dt = default_dt(setup, epsilon, start, center)
    ek = eyring_kramers_time(setup.analysis, tw.m1, tw.saddle, epsilon, setup.model)
    cfg = SimConfig(epsilon, dt, 100 * ek, start, center, radius, n_paths, seed=seed, ek_time=ek)
    st = simulate_hitting_times(cfg, setup.model, backend=backend)
    row = {"epsilon": epsilon, "dt": dt, "EK_time": ek}
    row.update(st.as_dict())
    return row, st


# ---------------------------------------------------------------------------
# rough bounds


def height_to_target(setup: Setup, epsilon: float, step: float | None = None) -> float:
    """Communication height from ``m1`` to ``B_eps(m0)`` on a lattice."""
    tw = setup.wells
    if step is None:
        step = min(0.02, epsilon / 4)
    res = communication_height(setup.model, tw.m1.location,
                               {"kind": "ball", "center": tw.m0.location.tolist(), "radius": epsilon},
                               {"box": setup.box, "step": step})
    return res.height


def default_probes_v0(setup: Setup, n: int = 3) -> np.ndarray:
    """Points on the segment from ``m0`` to the saddle with ``W`` below ``H``."""
    m0 = setup.wells.m0.location
    s = setup.wells.saddle.location
    ts = np.linspace(0.3, 0.7, n)
    return m0 + ts[:, None] * (s - m0)


def rough_bound_rows(setup: Setup, epsilons, h_factor: float = 8, probes=None) -> list[dict]:
    """Fitted constants of the rough capacity and equilibrium bounds.

    ``c1 = cap / (eps^d e^{-W*/eps})``, ``c2 = cap / (eps^{d-4} e^{-W*/eps})``
    and ``C = max_z h(z) eps^4 e^{(H - W(z))/eps}`` over probes in the
    target valley.
    """
    model = setup.model
    d = model.dim
    H = setup.wells.H
    if probes is None:
        probes = default_probes_v0(setup)
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    rows = []
    for eps in epsilons:
        meas = setup.measure(eps)
        h = math.sqrt(eps) / h_factor
        dom = fd.build_domain(model, eps, setup.wells.m1, setup.wells.m0, setup.wells.saddle, h=h)
        sol = solve_pair(setup, eps, dom)
        cap = fd.capacity_dirichlet(sol.h, meas)
        wstar = height_to_target(setup, eps)
        base = math.exp(-wstar / eps)
        cs = []
        for z in probes:
            hz = max(sol.h.at(z), sol.h_dag.at(z))
            cs.append(hz * eps ** 4 * math.exp((H - float(model.W(z))) / eps))
        rows.append({
            "epsilon": eps, "cap_dirichlet": cap, "W_star": wstar,
            "c1": cap / (eps ** d * base), "c2": cap / (eps ** (d - 4) * base), "C": max(cs),
        })
    return rows


def spread(values) -> float:
    """``max / min`` of positive values."""
    v = np.asarray(values, dtype=np.float64)
    return float(v.max() / v.min())


def fitted_exponent(epsilons, values) -> float:
    """Least-squares slope of ``log value`` against ``log eps``."""
    x = np.log(np.asarray(epsilons, dtype=np.float64))
    y = np.log(np.asarray(values, dtype=np.float64))
    return float(np.polyfit(x, y, 1)[0])
