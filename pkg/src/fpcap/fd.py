"""Finite-volume discretization of the weighted divergence-form operator.

The scheme is written as a continuous-time Markov chain on the grid nodes.
Node ``i`` carries the Gibbs weight ``pi_i = exp(-(W_i - W_ref)/eps)`` and
each edge ``(i, j)`` carries a symmetric conductance ``Gs`` and an
antisymmetric transport part ``Ga``, giving rates

    R_ij = Gs + Ga,    R_ji = Gs - Ga,
    (L f)_i = (1 / (pi_i V)) sum_j R_ij (f_j - f_i).

* ``Gs`` is ``eps * S * rho`` at the edge midpoint (exponentially fitted
  face weight); a symmetric off-diagonal ``S_01`` is carried by diagonal
  edges, which needs a diagonally dominant ``S``.
* ``Ga`` is half the transport flux through the dual face, taken as the
  difference of a stream function at the face end points.  The transport
  is therefore exactly divergence free on the grid, which makes ``pi``
  exactly stationary, the adjoint chain equal to the transposed rates, and
  the flux and Dirichlet-form capacities equal by summation by parts.
* Where the cell Péclet number exceeds 2 the ``hybrid`` scheme adds the
  upwind artificial diffusion ``|F|/2 - c`` so all rates stay nonnegative
  (discrete maximum principle).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import splu

from .model import DiffusionModel, GibbsMeasure, ModelError


class GridError(ValueError):
    """Grid too coarse or domain inconsistent."""


class SchemeError(RuntimeError):
    """Monotonicity or Péclet violation in the discretization."""


class SolverError(RuntimeError):
    """Sparse factorization failed."""


MAX_UNKNOWNS = 1_500_000


# ---------------------------------------------------------------------------
# grids and domains


@dataclass
class Grid:
    """Isotropic tensor grid ``origin + h * index``."""

    origin: np.ndarray
    h: float
    shape: tuple

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(-1)
        self.shape = tuple(int(s) for s in self.shape)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def volume(self) -> float:
        return self.h ** self.dim

    def axes(self) -> list[np.ndarray]:
        return [o + self.h * np.arange(n) for o, n in zip(self.origin, self.shape)]

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (d,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def flat_nodes(self) -> np.ndarray:
        return self.nodes().reshape(-1, self.dim)

    def nearest(self, z) -> int:
        idx = np.rint((np.asarray(z, dtype=np.float64) - self.origin) / self.h).astype(int)
        idx = np.clip(idx, 0, np.array(self.shape) - 1)
        return int(np.ravel_multi_index(tuple(idx), self.shape))

    def refined(self) -> "Grid":
        """Grid with half the spacing on the same box (nodes nest)."""
        return Grid(self.origin, self.h / 2, tuple(2 * n - 1 for n in self.shape))

    def describe(self) -> dict:
        return {"origin": self.origin.tolist(), "h": self.h, "shape": list(self.shape)}


def ball_mask(grid: Grid, center, radius: float) -> np.ndarray:
    """Flat mask of nodes in the closed ball; the nearest node if none is.

    Nodes on the sphere up to a relative rounding of 1e-9 count as inside.
    """
    z = grid.flat_nodes()
    mask = np.linalg.norm(z - np.asarray(center, dtype=np.float64), axis=1) <= radius * (1 + 1e-9)
    if not mask.any():
        mask[grid.nearest(center)] = True
    return mask


@dataclass
class ComputationalDomain:
    """Grid with the Dirichlet wells ``A = B_r(m1)`` and ``B = B_r(m0)``.

    ``node_class`` is 0 (interior), 1 (dirichlet_A), 2 (dirichlet_B) or
    3 (outer_boundary, zero-flux closure).
    """

    grid: Grid
    a_mask: np.ndarray
    b_mask: np.ndarray
    m1: np.ndarray
    m0: np.ndarray
    radius: float
    saddle: np.ndarray | None = None
    node_class: np.ndarray = field(init=False)

    def __post_init__(self):
        if np.any(self.a_mask & self.b_mask):
            raise GridError("wells A and B overlap on the grid")
        cls = np.zeros(self.grid.size, dtype=np.int8)
        idx = np.indices(self.grid.shape).reshape(self.grid.dim, -1)
        rim = np.zeros(self.grid.size, dtype=bool)
        for k, n in enumerate(self.grid.shape):
            rim |= (idx[k] == 0) | (idx[k] == n - 1)
        cls[rim] = 3
        cls[self.a_mask] = 1
        cls[self.b_mask] = 2
        self.node_class = cls

    def refined(self) -> "ComputationalDomain":
        g = self.grid.refined()
        return ComputationalDomain(
            g, ball_mask(g, self.m1, self.radius), ball_mask(g, self.m0, self.radius),
            self.m1, self.m0, self.radius, self.saddle,
        )


def truncation_box(model: DiffusionModel, level: float, step: float, anchor,
                   search=3.0, must_contain=()) -> np.ndarray:
    """Bounding box of ``{W <= level}`` snapped to ``anchor + k * step``,
    padded by one cell."""
    anchor = np.asarray(anchor, dtype=np.float64)
    d = model.dim
    half = float(search)
    for _ in range(8):
        axes = [np.arange(a - half, a + half + step / 2, step) for a in anchor]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        inside = model.W(pts) <= level
        touches = False
        for k in range(d):
            first = np.take(inside, 0, axis=k)
            last = np.take(inside, -1, axis=k)
            touches |= bool(first.any() or last.any())
        if not touches:
            break
        half *= 1.5
    else:
        raise GridError("sublevel set does not fit in the search box; W may not be confining")
    sel = pts[inside]
    extra = [np.asarray(p, dtype=np.float64) for p in must_contain]
    if extra:
        sel = np.vstack([sel] + [e.reshape(1, d) for e in extra])
    lo = np.floor((sel.min(axis=0) - anchor) / step) - 1
    hi = np.ceil((sel.max(axis=0) - anchor) / step) + 1
    return np.stack([anchor + lo * step, anchor + hi * step], axis=1)


def build_domain(model: DiffusionModel, epsilon: float, m1, m0, saddle, h: float | None = None,
                 radius: float | None = None, box=None, level_mult: float = 10.0,
                 check_resolution: bool = True) -> ComputationalDomain:
    """Truncated computational domain for the two-well problem.

    The box is the bounding box of ``{W <= H + level_mult * eps log(1/eps)}``
    on a lattice anchored at the saddle; wells have radius ``eps`` by default.
    """
    if h is None:
        h = math.sqrt(epsilon) / 8
    if check_resolution and h > math.sqrt(epsilon) / 4 * (1 + 1e-12):
        raise GridError(f"grid spacing h={h:g} does not resolve sqrt(eps)/4={math.sqrt(epsilon) / 4:g}")
    if radius is None:
        radius = epsilon
    m1 = np.asarray(getattr(m1, "location", m1), dtype=np.float64)
    m0 = np.asarray(getattr(m0, "location", m0), dtype=np.float64)
    s = np.asarray(getattr(saddle, "location", saddle), dtype=np.float64)
    if box is None:
        H = float(model.W(s))
        level = H + level_mult * epsilon * math.log(1.0 / epsilon)
        pad = radius + h
        box = truncation_box(model, level, h, s, must_contain=(
            m1 - pad, m1 + pad, m0 - pad, m0 + pad))
    box = np.asarray(box, dtype=np.float64).reshape(model.dim, 2)
    shape = tuple(int(v) for v in np.rint((box[:, 1] - box[:, 0]) / h).astype(int) + 1)
    grid = Grid(box[:, 0], h, shape)
    if grid.size > MAX_UNKNOWNS:
        raise GridError(f"grid has {grid.size} nodes (cap {MAX_UNKNOWNS})")
    if np.linalg.norm(m1 - m0) <= 2 * radius:
        raise GridError("dist(A, B) must be positive")
    return ComputationalDomain(grid, ball_mask(grid, m1, radius), ball_mask(grid, m0, radius),
                               m1, m0, radius, s)


# ---------------------------------------------------------------------------
# assembly


@dataclass
class LinearSystem:
    """Assembled rates on one grid (see module docstring)."""

    model: DiffusionModel
    epsilon: float
    domain: ComputationalDomain
    adjoint: bool
    scheme: str
    w_ref: float
    pi: np.ndarray          # node weights exp(-(W - w_ref)/eps)
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_axis: np.ndarray   # 0..d-1 axis edges, -1 / -2 diagonal edges
    c: np.ndarray           # physical diffusive conductance
    Gs: np.ndarray          # symmetric conductance (with artificial diffusion)
    Ga_J: np.ndarray        # antisymmetric part from the skew part of A
    Ga_l: np.ndarray        # antisymmetric part from the perturbation l
    Gi: np.ndarray          # isotropic conductance eps*rho*h^{d-2} (axis edges)
    peclet_max: float

    @property
    def grid(self) -> Grid:
        return self.domain.grid

    @property
    def Ga(self) -> np.ndarray:
        return self.Ga_J + self.Ga_l

    @property
    def n(self) -> int:
        return self.grid.size

    def rate_matrix(self) -> sp.csr_matrix:
        """Sparse off-diagonal rates ``R``."""
        i, j = self.edge_i, self.edge_j
        rows = np.concatenate([i, j])
        cols = np.concatenate([j, i])
        vals = np.concatenate([self.Gs + self.Ga, self.Gs - self.Ga])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    def flux_matrix(self) -> sp.csr_matrix:
        """``M = R - diag(R 1)`` so that ``L = diag(1/(pi V)) M``."""
        r = self.rate_matrix()
        return (r - sp.diags(np.asarray(r.sum(axis=1)).ravel())).tocsr()

    def generator(self) -> sp.csr_matrix:
        """The discrete generator ``L`` (no boundary conditions applied)."""
        scale = 1.0 / (self.pi * self.grid.volume)
        return (sp.diags(scale) @ self.flux_matrix()).tocsr()

    def log_Z_tilde(self, measure: GibbsMeasure) -> float:
        """``log`` of the partition function in the node-weight scale."""
        return measure.log_Z + self.w_ref / self.epsilon

    # edge-flow helpers -----------------------------------------------------
    def grad(self, f) -> np.ndarray:
        """Edge differences ``f_i - f_j``."""
        f = np.asarray(f).ravel()
        return f[self.edge_i] - f[self.edge_j]

    def div(self, flow) -> np.ndarray:
        """Net outflow ``sum_j flow(i, j)`` at every node."""
        flow = np.asarray(flow, dtype=np.float64)
        return (np.bincount(self.edge_i, weights=flow, minlength=self.n)
                - np.bincount(self.edge_j, weights=flow, minlength=self.n))

    def transport(self, f, part: str = "l") -> np.ndarray:
        """Transport flow ``Ga (f_i + f_j)`` of the given part ("l", "J", "all")."""
        f = np.asarray(f).ravel()
        ga = {"l": self.Ga_l, "J": self.Ga_J, "all": self.Ga}[part]
        return ga * (f[self.edge_i] + f[self.edge_j])


def _rho(model: DiffusionModel, z: np.ndarray, eps: float, w_ref: float) -> np.ndarray:
    return np.exp(-(model.W(z) - w_ref) / eps)


def _axis_edges(shape: tuple, k: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    lo = [slice(None)] * len(shape)
    hi = [slice(None)] * len(shape)
    lo[k] = slice(0, shape[k] - 1)
    hi[k] = slice(1, shape[k])
    return idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()


def _stream_function(model: DiffusionModel, grid: Grid, eps: float, w_ref: float,
                     adjoint: bool) -> tuple[np.ndarray, np.ndarray]:
    """Corner stream functions of the J and l transport (2D), rim set to 0.

    Corner ``(a, b)`` sits at ``origin + (a - 1/2, b - 1/2) h``.
    """
    nx, ny = grid.shape
    xs = grid.origin[0] + grid.h * (np.arange(nx + 1) - 0.5)
    ys = grid.origin[1] + grid.h * (np.arange(ny + 1) - 0.5)
    corners = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
    rho = _rho(model, corners, eps, w_ref)
    sign = -1.0 if adjoint else 1.0
    a = model.A(corners)
    j = 0.5 * (a[..., 0, 1] - a[..., 1, 0])
    psi_j = sign * (-eps * j * rho)
    kind = model.stream_kind()
    if kind == "none":
        psi_l = np.zeros_like(rho)
    elif kind == "rot":
        gamma = model.l_matrix[1, 0]
        psi_l = sign * (-gamma * eps * rho)
    else:
        raise ModelError("the PDE solver supports perturbations l = gamma * rot grad W only")
    for psi in (psi_j, psi_l):
        psi[0, :] = psi[-1, :] = 0.0
        psi[:, 0] = psi[:, -1] = 0.0
    return psi_j, psi_l


def assemble(model: DiffusionModel, epsilon: float, domain: ComputationalDomain,
             adjoint: bool = False, scheme: str = "hybrid", w_ref: float | None = None) -> LinearSystem:
    """Assemble the rates of the primal (or adjoint) operator.

    Parameters
    ----------
    scheme : {"hybrid", "upwind", "central"}
        Treatment of the transport part.  ``central`` raises
        :class:`SchemeError` when a cell Péclet number exceeds 2.
    w_ref : float, optional
        Reference level of the node weights; defaults to ``W`` at the saddle
        (or the minimum of ``W`` on the grid).
    """
    if not model.is_elliptic:
        raise ModelError("the PDE solver needs an elliptic model (full-rank A, B = 0)")
    if scheme not in ("hybrid", "upwind", "central"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if model.dim > 2:
        raise GridError("the PDE solver supports 1D and 2D only")
    grid = domain.grid
    d = grid.dim
    h = grid.h
    z = grid.flat_nodes()
    if w_ref is None:
        w_ref = float(model.W(domain.saddle)) if domain.saddle is not None else float(np.min(model.W(z)))
    pi = _rho(model, z, epsilon, w_ref)

    ei, ej, ax, c, gi = [], [], [], [], []
    for k in range(d):
        i, j = _axis_edges(grid.shape, k)
        mid = 0.5 * (z[i] + z[j])
        s = model.S(mid)
        off = np.sum(np.abs(s[:, k, :]), axis=1) - np.abs(s[:, k, k])
        coef = s[:, k, k] - off
        if np.any(coef < -1e-14 * np.abs(s[:, k, k])):
            raise SchemeError("diffusion matrix is not diagonally dominant; monotone stencil unavailable")
        rho = _rho(model, mid, epsilon, w_ref)
        ei.append(i)
        ej.append(j)
        ax.append(np.full(i.size, k))
        c.append(epsilon * rho * np.maximum(coef, 0.0) * h ** (d - 2))
        gi.append(epsilon * rho * h ** (d - 2))
    if d == 2:
        idx = np.arange(grid.size).reshape(grid.shape)
        pairs = {-1: (idx[:-1, :-1].ravel(), idx[1:, 1:].ravel()),
                 -2: (idx[:-1, 1:].ravel(), idx[1:, :-1].ravel())}
        for tag, (i, j) in pairs.items():
            mid = 0.5 * (z[i] + z[j])
            s01 = model.S(mid)[:, 0, 1]
            want = s01 > 0 if tag == -1 else s01 < 0
            coef = np.where(want, np.abs(s01), 0.0)
            if not np.any(coef):
                continue
            rho = _rho(model, mid, epsilon, w_ref)
            ei.append(i)
            ej.append(j)
            ax.append(np.full(i.size, tag))
            c.append(epsilon * rho * coef)
            gi.append(np.zeros(i.size))
    edge_i = np.concatenate(ei)
    edge_j = np.concatenate(ej)
    edge_axis = np.concatenate(ax)
    c = np.concatenate(c)
    gi = np.concatenate(gi)

    ga_j = np.zeros(edge_i.size)
    ga_l = np.zeros(edge_i.size)
    if d == 2:
        psi_j, psi_l = _stream_function(model, grid, epsilon, w_ref, adjoint)
        nx, ny = grid.shape
        n_x = (nx - 1) * ny
        n_y = nx * (ny - 1)
        for psi, out in ((psi_j, ga_j), (psi_l, ga_l)):
            fx = psi[1:nx, 1:] - psi[1:nx, :-1]        # edges (a, b)-(a+1, b)
            fy = psi[:-1, 1:ny] - psi[1:, 1:ny]        # edges (a, b)-(a, b+1)
            out[:n_x] = 0.5 * fx.ravel()
            out[n_x:n_x + n_y] = 0.5 * fy.ravel()
    elif model.stream_kind() != "none":
        raise ModelError("a nonzero perturbation is impossible in 1D")

    half_flux = np.abs(ga_j + ga_l)
    with np.errstate(divide="ignore", invalid="ignore"):
        pe = np.where(c > 0, 2 * half_flux / np.where(c > 0, c, 1.0), np.where(half_flux > 0, np.inf, 0.0))
    peclet_max = float(pe.max()) if pe.size else 0.0
    if scheme == "central":
        if peclet_max > 2.0:
            raise SchemeError(
                f"cell Péclet number {peclet_max:.3g} > 2 with the central scheme; "
                "use scheme='upwind'/'hybrid' or a finer grid"
            )
        gs = c
    elif scheme == "hybrid":
        gs = np.maximum(c, half_flux)
    else:
        gs = c + half_flux

    return LinearSystem(model, epsilon, domain, adjoint, scheme, w_ref, pi, edge_i, edge_j,
                        edge_axis, c, gs, ga_j, ga_l, gi, peclet_max)


# ---------------------------------------------------------------------------
# fields and solves


ROLES = ("h", "h_dag", "w", "u_poisson", "candidate")


@dataclass
class DiscreteField:
    """Nodal values on a grid with a role tag."""

    system: LinearSystem
    values: np.ndarray
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        self.values = np.asarray(self.values, dtype=np.float64).ravel()

    @property
    def grid(self) -> Grid:
        return self.system.grid

    @property
    def domain(self) -> ComputationalDomain:
        return self.system.domain

    def array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def at(self, z) -> float:
        """Multilinear interpolation at a point."""
        interp = RegularGridInterpolator(self.grid.axes(), self.array())
        return float(interp(np.asarray(z, dtype=np.float64).reshape(1, -1))[0])


def _solve(mat: sp.spmatrix, rhs: np.ndarray, what: str) -> np.ndarray:
    mat = mat.tocsr()
    diag = np.abs(mat.diagonal())
    if np.any(diag == 0):
        raise SolverError(f"{what}: zero diagonal in {int(np.sum(diag == 0))} rows (isolated nodes)")
    scale = sp.diags(1.0 / diag)
    try:
        lu = splu((scale @ mat).tocsc(), permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SolverError(f"{what}: factorization failed ({exc}); unknowns={mat.shape[0]}") from exc
    x = lu.solve(rhs / diag)
    if not np.all(np.isfinite(x)):
        raise SolverError(f"{what}: non-finite solution; unknowns={mat.shape[0]}")
    return x


def solve_equilibrium(system: LinearSystem, a_mask=None, b_mask=None) -> DiscreteField:
    """Solve ``L h = 0`` off ``A u B`` with ``h = 1`` on A and 0 on B.

    Returns a field with role ``h`` (or ``h_dag`` for an adjoint system).
    """
    dom = system.domain
    a = dom.a_mask if a_mask is None else np.asarray(a_mask, dtype=bool)
    b = dom.b_mask if b_mask is None else np.asarray(b_mask, dtype=bool)
    free = ~(a | b)
    m = system.flux_matrix()
    mf = m[free]
    k = mf[:, free]
    rhs = -np.asarray(mf[:, a].sum(axis=1)).ravel()
    vals = np.zeros(system.n)
    vals[a] = 1.0
    vals[free] = _solve(k, rhs, "equilibrium solve")
    lo, hi = float(vals.min()), float(vals.max())
    if lo < -1e-8 or hi > 1 + 1e-8:
        raise SchemeError(f"maximum principle violated: h in [{lo:.3e}, {hi:.3e}]")
    return DiscreteField(system, vals, "h_dag" if system.adjoint else "h")


def _check_role(field: DiscreteField, roles=("h", "h_dag")):
    if field.role not in roles:
        raise ValueError(f"field role {field.role!r} not in {roles}")


def capacity_dirichlet(field: DiscreteField, measure: GibbsMeasure) -> float:
    """``(1/Z) sum_edges Gs (h_i - h_j)^2`` in the node-weight scale.

    This is ``eps * int grad h . S grad h rho`` with face-centred weights.
    """
    _check_role(field)
    s = field.system
    terms = s.Gs * s.grad(field.values) ** 2
    return math.fsum(terms.tolist()) * math.exp(-s.log_Z_tilde(measure))


def capacity_flux(field: DiscreteField, measure: GibbsMeasure, which_boundary: str = "A") -> float:
    """Net probability flux out of the staircase boundary of well A (or into B).

    Uses the assembled rates, i.e. the conormal flux plus the perturbation
    flux, whose net contribution through a closed surface vanishes.
    """
    _check_role(field)
    s = field.system
    dom = s.domain
    mask = dom.a_mask if which_boundary == "A" else dom.b_mask
    f = field.values
    i, j = s.edge_i, s.edge_j
    out = []
    # edges leaving the set, both orientations
    sel = mask[i] & ~mask[j]
    out.append(((s.Gs + s.Ga)[sel] * (f[i][sel] - f[j][sel])))
    sel = mask[j] & ~mask[i]
    out.append(((s.Gs - s.Ga)[sel] * (f[j][sel] - f[i][sel])))
    total = math.fsum(np.concatenate(out).tolist())
    if which_boundary == "B":
        total = -total
    return total * math.exp(-s.log_Z_tilde(measure))


def solve_landscape(system: LinearSystem, b_mask=None) -> DiscreteField:
    """Solve ``-L w = 1`` off B with ``w = 0`` on B (zero-flux outer boundary)."""
    b = system.domain.b_mask if b_mask is None else np.asarray(b_mask, dtype=bool)
    free = ~b
    m = system.flux_matrix()
    k = m[free][:, free]
    rhs = -(system.pi * system.grid.volume)[free]
    vals = np.zeros(system.n)
    vals[free] = _solve(k, rhs, "landscape solve")
    if vals.min() < -1e-10 * max(1.0, float(vals.max())):
        raise SchemeError(f"negative mean hitting time {vals.min():.3e}: monotonicity bug")
    return DiscreteField(system, vals, "w")


@dataclass
class PoissonResult:
    """Weighted Poisson solution with its flow and energy diagnostics."""

    field: DiscreteField
    flow: np.ndarray
    energy: float          # eps int |grad u|^2 rho
    source_norm: float     # (1/eps) int |l . grad f|^2 rho
    ratio: float           # energy / source_norm


def solve_poisson_admissible(f, system: LinearSystem, measure: GibbsMeasure,
                             a_mask=None) -> PoissonResult:
    """Solve ``eps e^{W/eps} div(e^{-W/eps} grad u) = l . grad f`` off A, ``u = 0`` on A.

    The flow ``Gi (u_i - u_j)`` satisfies the admissibility constraint for
    ``f`` at every node outside A.
    """
    f = np.asarray(getattr(f, "values", f), dtype=np.float64).ravel()
    a = system.domain.a_mask if a_mask is None else np.asarray(a_mask, dtype=bool)
    src = system.div(system.transport(f, "l"))
    vals = np.zeros(system.n)
    free = ~a
    if np.any(src != 0):
        i, j = system.edge_i, system.edge_j
        w = system.Gi
        lap = sp.csr_matrix((np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                            shape=(system.n, system.n))
        lap = (lap - sp.diags(np.asarray(lap.sum(axis=1)).ravel())).tocsr()
        # sum_j Gi (u_j - u_i) = -div(T_l f)
        vals[free] = _solve(lap[free][:, free], -src[free], "Poisson solve")
    flow = system.Gi * system.grad(vals)
    zt = math.exp(-system.log_Z_tilde(measure))
    energy = math.fsum((system.Gi * system.grad(vals) ** 2).tolist()) * zt
    vol = system.pi * system.grid.volume
    source = math.fsum((src ** 2 / vol).tolist()) * zt / system.epsilon
    ratio = energy / source if source > 0 else 0.0
    return PoissonResult(DiscreteField(system, vals, "u_poisson"), flow, energy, source, ratio)


def richardson(coarse: float, fine: float, order: int = 2) -> tuple[float, float]:
    """Richardson extrapolation from spacings ``h`` and ``h/2``.

    Returns ``(extrapolated, error_estimate)`` where the estimate bounds the
    error of the fine value.
    """
    err = (fine - coarse) / (2 ** order - 1)
    return fine + err, abs(err)
