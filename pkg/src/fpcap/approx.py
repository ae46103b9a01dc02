"""Saddle geometry, approximate equilibrium potentials and the functional J.

Flows live on the edges of a :class:`~fpcap.fd.LinearSystem`.  For a node
function ``f`` and an edge flow ``gamma`` the functional is

    J(f, gamma) = (1/Z) sum_e (Gs grad f - T_J f - gamma)_e^2 / Gs_e,

where ``Gs grad f - T_J f`` is the flow of ``A grad f`` and ``T_J``, ``T_l``
are the transport flows of the skew part of ``A`` and of ``l``.  A flow
is admissible for ``f`` when ``div gamma = div(T_l f)`` at every node
outside the two wells; ``gamma = T_l f`` is the trivial choice.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.special import ndtr

from .fd import DiscreteField, Grid, LinearSystem
from .landscape import CriticalPoint
from .model import DiffusionModel, GibbsMeasure, ModelError, check_divergence_free
from .saddle import SaddleAnalysis, analyze_saddle

V0, V1, S_LABEL, O_LABEL = 0, 1, 2, 3
LABEL_NAMES = {V0: "V0", V1: "V1", S_LABEL: "S", O_LABEL: "O"}


class GeometryError(ValueError):
    """The saddle geometry does not split the domain into two valleys."""


class AdmissibilityError(ValueError):
    """A flow violates the admissibility constraint or ``f`` the obstacle."""


# ---------------------------------------------------------------------------
# geometry


def delta_of(K: float, epsilon: float) -> float:
    """``K sqrt(eps log(1/eps))``."""
    return K * math.sqrt(epsilon * math.log(1.0 / epsilon))


def auto_K(analysis: SaddleAnalysis, epsilon: float, minima, radius: float,
           fraction: float = 0.6, cap: float = 2.0) -> float:
    """Largest K (at most ``cap``) keeping the box a safe distance from the wells.

    The half-width ``delta`` is limited to ``fraction`` of the distance, along
    ``e1``, from the saddle to the nearest well ball.
    """
    dist = min(abs(float((np.asarray(m) - analysis.location) @ analysis.e1)) for m in minima) - radius
    return min(cap, fraction * dist / math.sqrt(epsilon * math.log(1.0 / epsilon)))


@dataclass
class SaddleGeometry:
    """Box ``Q`` in the Hessian eigenbasis, level set ``O`` and valley labels."""

    K: float
    delta: float
    center: np.ndarray
    basis: np.ndarray          # columns: Hessian eigenvectors, first = e1
    half_widths: np.ndarray
    threshold: float           # O = {W > threshold}
    grid: Grid
    labels: np.ndarray         # flat int8 labels on the grid
    model: DiffusionModel

    def in_Q(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        proj = (z - self.center) @ self.basis
        return np.all(np.abs(proj) <= self.half_widths * (1 + 1e-12), axis=1)

    def classify(self, z) -> np.ndarray:
        """Labels (V0=0, V1=1, S=2, O=3) of arbitrary points."""
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        out = np.empty(z.shape[0], dtype=np.int8)
        high = self.model.W(z) > self.threshold
        inq = self.in_Q(z)
        out[high] = O_LABEL
        out[~high & inq] = S_LABEL
        rest = np.nonzero(~high & ~inq)[0]
        for k in rest:
            lab = self.labels[self.grid.nearest(z[k])]
            if lab in (V0, V1):
                out[k] = lab
            else:
                out[k] = V1 if (z[k] - self.center) @ self.basis[:, 0] > 0 else V0
        return out

    def label_array(self) -> np.ndarray:
        return self.labels.reshape(self.grid.shape)


def build_geometry(model: DiffusionModel, saddle: CriticalPoint | SaddleAnalysis, epsilon: float,
                   K: float | None = None, *, grid: Grid, m0, m1, radius: float | None = None) -> SaddleGeometry:
    """Construct ``delta``, ``Q``, ``O``, ``S`` and flood-fill the valleys.

    Parameters
    ----------
    saddle : CriticalPoint or SaddleAnalysis
    K : float, optional
        Box constant; :func:`auto_K` when omitted.
    grid : Grid
        Evaluation grid (normally the PDE grid).
    m0, m1 : array-like
        Target and starting minima (``e1`` points toward ``m1``).
    """
    if not 0 < epsilon < 1 / math.e:
        raise ValueError("epsilon must lie in (0, 1/e)")
    m0 = np.asarray(getattr(m0, "location", m0), dtype=np.float64)
    m1 = np.asarray(getattr(m1, "location", m1), dtype=np.float64)
    an = saddle if isinstance(saddle, SaddleAnalysis) else analyze_saddle(model, saddle, m1)
    if radius is None:
        radius = epsilon
    if K is None:
        K = auto_K(an, epsilon, (m0, m1), radius)
    if K <= 0:
        raise ValueError("K must be positive")
    delta = delta_of(K, epsilon)
    lam = np.abs(an.hess_eigs)
    lam1 = lam[0]
    basis = an.hess_vecs.copy()
    basis[:, 0] = an.e1
    half = np.empty(model.dim)
    half[0] = delta
    half[1:] = np.sqrt(2 * lam1 / lam[1:]) * delta
    threshold = an.value + lam1 * delta ** 2 / 4

    z = grid.flat_nodes()
    w = model.W(z)
    proj = (z - an.location) @ basis
    inq = np.all(np.abs(proj) <= half * (1 + 1e-12), axis=1)
    high = w > threshold
    labels = np.full(grid.size, O_LABEL, dtype=np.int8)
    labels[~high & inq] = S_LABEL
    rest = (~high & ~inq).reshape(grid.shape)
    comp, ncomp = ndimage.label(rest)
    comp = comp.ravel()
    i0, i1 = grid.nearest(m0), grid.nearest(m1)
    c0, c1 = comp[i0], comp[i1]
    if ncomp != 2 or c0 == 0 or c1 == 0 or c0 == c1:
        raise GeometryError(
            f"sublevel set minus S has {ncomp} components (minima in components {c0}, {c1}); "
            "K too large or the model is not a two-well potential"
        )
    labels[comp == c0] = V0
    labels[comp == c1] = V1
    geo = SaddleGeometry(K, delta, an.location.copy(), basis, half, threshold, grid, labels, model)
    if geo.classify(an.location)[0] != S_LABEL:
        raise GeometryError("the saddle is not in S")
    return geo


# ---------------------------------------------------------------------------
# approximate potentials


def p_eps(z, analysis: SaddleAnalysis, geometry: SaddleGeometry, epsilon: float,
          adjoint: bool = False) -> np.ndarray:
    """Gaussian-profile approximation of the equilibrium potential.

    Inside ``S`` this is ``Phi((z - s) . v sqrt(beta/eps))``; it is 1 on V1
    and 0 on V0 and O.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    lab = geometry.classify(z)
    return _profile(z, lab, analysis, epsilon, adjoint)


def _profile(z, lab, analysis, epsilon, adjoint):
    v, beta = (analysis.v_dag, analysis.beta_dag) if adjoint else (analysis.v, analysis.beta)
    out = np.zeros(z.shape[0])
    out[lab == V1] = 1.0
    s = lab == S_LABEL
    out[s] = ndtr(((z[s] - analysis.location) @ v) * math.sqrt(beta / epsilon))
    return out


def p_eps_grid(analysis: SaddleAnalysis, geometry: SaddleGeometry, epsilon: float,
               adjoint: bool = False) -> np.ndarray:
    """``p_eps`` at the geometry's grid nodes (flat array)."""
    return _profile(geometry.grid.flat_nodes(), geometry.labels, analysis, epsilon, adjoint)


def bump_stencil(eta: float, h: float, dim: int) -> np.ndarray:
    """Normalized ``exp(-1/(1 - r^2/eta^2))`` weights on the grid offsets."""
    n = int(math.floor(eta / h))
    ax = np.arange(-n, n + 1) * h
    r2 = sum(np.meshgrid(*([ax ** 2] * dim), indexing="ij"))
    t = r2 / eta ** 2
    with np.errstate(divide="ignore", over="ignore"):
        wgt = np.where(t < 1, np.exp(-1.0 / (1.0 - np.minimum(t, 1 - 1e-300))), 0.0)
    return wgt / wgt.sum()


def mollify(values, grid: Grid, eta: float) -> np.ndarray:
    """Convolve a nodal field with a smooth bump of radius ``eta``.

    Raises
    ------
    ValueError
        If ``eta`` is below the grid spacing (the bump is unresolvable).
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    if eta < grid.h:
        raise ValueError(f"mollifier radius {eta:g} is below the grid spacing {grid.h:g}")
    arr = np.asarray(values, dtype=np.float64).reshape(grid.shape)
    out = ndimage.correlate(arr, bump_stencil(eta, grid.h, grid.dim), mode="nearest")
    return out.ravel()


# ---------------------------------------------------------------------------
# admissible fields and J


def trivial_admissible_field(f, system: LinearSystem, probes=None, tol: float = 1e-6) -> np.ndarray:
    """Flow of ``g = l f / eps``: the transport flow ``T_l f``.

    The model is first checked for the weighted divergence-free condition.
    """
    model = system.model
    if probes is None:
        probes = system.grid.flat_nodes()[:: max(1, system.n // 2000)]
    check_divergence_free(model, system.epsilon, probes, tol=tol)
    return system.transport(np.asarray(getattr(f, "values", f)), "l")


def trivial_field_function(f, model: DiffusionModel, epsilon: float):
    """Continuum trivial field ``g(z) = l(z) f(z) / eps`` for a callable ``f``."""
    return lambda z: model.l(z) * np.asarray(f(z))[..., None] / epsilon


def continuum_admissibility_residual(f, g, model: DiffusionModel, epsilon: float, points) -> np.ndarray:
    """``|eps e^{W/eps} div(e^{-W/eps} g) - l . grad f|`` by central differences.

    The weighted divergence is expanded as ``div g - g . grad W / eps``; all
    derivatives of ``f`` and ``g`` use the step ``1e-4 (1 + |z|)``.
    """
    z = np.atleast_2d(np.asarray(points, dtype=np.float64))
    step = 1e-4 * (1.0 + np.linalg.norm(z, axis=1))
    div = np.zeros(z.shape[0])
    grad_f = np.zeros_like(z)
    for k in range(model.dim):
        e = np.zeros(model.dim)
        e[k] = 1.0
        zp = z + step[:, None] * e
        zm = z - step[:, None] * e
        div += (g(zp)[:, k] - g(zm)[:, k]) / (2 * step)
        grad_f[:, k] = (np.asarray(f(zp)) - np.asarray(f(zm))) / (2 * step)
    gv = g(z)
    lhs = epsilon * div - np.einsum("ij,ij->i", gv, model.grad_W(z))
    return np.abs(lhs - np.einsum("ij,ij->i", model.l(z), grad_f))


@dataclass
class CandidatePair:
    """Node function ``f`` with an edge flow ``flow`` and its admissibility residual."""

    f: np.ndarray
    flow: np.ndarray
    admissibility_residual: float


def admissibility_residual(f, flow, system: LinearSystem, free=None) -> float:
    """Relative violation of ``div flow = div(T_l f)`` on the free nodes."""
    f = np.asarray(getattr(f, "values", f), dtype=np.float64).ravel()
    if free is None:
        free = ~(system.domain.a_mask | system.domain.b_mask)
    r = system.div(flow) - system.div(system.transport(f, "l"))
    scale = max(float(np.max(np.abs(system.Gs * system.grad(f)))),
                float(np.max(np.abs(system.transport(f, "l")))), 1e-300)
    return float(np.max(np.abs(r[free]))) / scale if np.any(free) else 0.0


def make_pair(f, flow, system: LinearSystem) -> CandidatePair:
    f = np.asarray(getattr(f, "values", f), dtype=np.float64).ravel()
    flow = np.asarray(flow, dtype=np.float64)
    return CandidatePair(f, flow, admissibility_residual(f, flow, system))


def minimizer_pair(h: DiscreteField, h_dag: DiscreteField) -> CandidatePair:
    """``f = (h + h_dag)/2`` with the flow of ``(A grad h - A^T grad h_dag)/2``."""
    s = h.system
    if s.adjoint or h.role != "h" or h_dag.role != "h_dag":
        raise ValueError("need the primal h on its own system and the adjoint h_dag")
    f = 0.5 * (h.values + h_dag.values)
    flow = 0.5 * s.Gs * (s.grad(h.values) - s.grad(h_dag.values)) - s.transport(f, "J")
    return make_pair(f, flow, s)


def evaluate_J(pair: CandidatePair, system: LinearSystem, measure: GibbsMeasure,
               tol: float = 1e-8, obstacle_tol: float = 1e-12) -> float:
    """Upper bound on the capacity from an admissible candidate pair.

    Raises
    ------
    AdmissibilityError
        If the flow is not admissible (residual above ``tol``) or ``f`` is
        not 1 on well A and 0 on well B.
    """
    res = admissibility_residual(pair.f, pair.flow, system)
    if res > tol:
        raise AdmissibilityError(f"flow is not admissible: residual {res:.3e} > {tol:.1e}")
    dom = system.domain
    f = pair.f
    if np.any(f[dom.a_mask] < 1 - obstacle_tol) or np.any(np.abs(f[dom.b_mask]) > obstacle_tol):
        raise AdmissibilityError("f violates the obstacle (needs f = 1 on A and f = 0 on B)")
    num = system.Gs * system.grad(f) - system.transport(f, "J") - pair.flow
    pos = system.Gs > 0
    if np.any(np.abs(num[~pos]) > 0):
        return math.inf
    terms = num[pos] ** 2 / system.Gs[pos]
    return math.fsum(terms.tolist()) * math.exp(-system.log_Z_tilde(measure))


def enforce_wells(f, system: LinearSystem) -> np.ndarray:
    """Copy of ``f`` set to 1 on well A and 0 on well B."""
    out = np.array(np.asarray(getattr(f, "values", f), dtype=np.float64).ravel())
    out[system.domain.a_mask] = 1.0
    out[system.domain.b_mask] = 0.0
    return out
