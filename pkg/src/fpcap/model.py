"""Diffusion models: potential, diffusion matrix, perturbation and block data.

A model bundles everything needed to evaluate the generator

    L f = eps * e^{W/eps} div(e^{-W/eps} A grad f) + (b + B z) . grad f

at a point: the potential ``W`` with its gradient and Hessian, the diffusion
matrix ``A`` (full rank in the elliptic case, block-degenerate for the
underdamped demo), the perturbation ``l`` (elliptic case, ``b = -l``) and the
constant nilpotent matrix ``B``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp, roots_legendre

logger = logging.getLogger(__name__)

_ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


class ModelError(ValueError):
    """Raised when a model violates a structural assumption."""


class BoxTooSmallWarning(UserWarning):
    """The Gibbs weight on the quadrature box boundary is not negligible."""


# ---------------------------------------------------------------------------
# polynomial potentials


class Polynomial:
    """Multivariate polynomial ``sum_t c_t prod_k z_k^{p_tk}``.

    Parameters
    ----------
    coefs : sequence of float, shape (T,)
    powers : sequence of int sequences, shape (T, d)
    """

    def __init__(self, coefs: Sequence[float], powers: Sequence[Sequence[int]]):
        coefs = np.asarray(coefs, dtype=np.float64)
        powers = np.asarray(powers, dtype=np.int64)
        if powers.ndim != 2 or powers.shape[0] != coefs.shape[0]:
            raise ValueError("powers must have shape (n_terms, dim)")
        if np.any(powers < 0):
            raise ValueError("negative powers are not polynomial")
        # merge duplicate monomials so derivatives stay compact
        merged: dict[tuple[int, ...], float] = {}
        for c, p in zip(coefs, powers):
            key = tuple(int(x) for x in p)
            merged[key] = merged.get(key, 0.0) + float(c)
        keys = sorted(k for k, v in merged.items() if v != 0.0)
        self.dim = powers.shape[1]
        if keys:
            self.powers = np.array(keys, dtype=np.int64).reshape(-1, self.dim)
            self.coefs = np.array([merged[k] for k in keys])
        else:
            self.powers = np.zeros((0, self.dim), dtype=np.int64)
            self.coefs = np.zeros(0)

    def derivative(self, k: int) -> "Polynomial":
        """Partial derivative with respect to coordinate ``k``."""
        mask = self.powers[:, k] > 0
        p = self.powers[mask].copy()
        c = self.coefs[mask] * p[:, k]
        p[:, k] -= 1
        if c.size == 0:
            return Polynomial([0.0], [[0] * self.dim])
        return Polynomial(c, p)

    def _monomials(self, z: np.ndarray) -> np.ndarray:
        # z: (..., d) -> (..., T)
        out = np.ones(z.shape[:-1] + (self.coefs.size,))
        for k in range(self.dim):
            out = out * z[..., k : k + 1] ** self.powers[:, k]
        return out

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if self.coefs.size == 0:
            return np.zeros(z.shape[:-1])
        return self._monomials(z) @ self.coefs

    def grad_structure(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded gradient tables ``(gcoef (d, T), gpow (d, T, d))`` for kernels."""
        parts = [self.derivative(k) for k in range(self.dim)]
        t = max(1, max(p.coefs.size for p in parts))
        gcoef = np.zeros((self.dim, t))
        gpow = np.zeros((self.dim, t, self.dim), dtype=np.int64)
        for k, p in enumerate(parts):
            gcoef[k, : p.coefs.size] = p.coefs
            gpow[k, : p.coefs.size] = p.powers
        return gcoef, gpow


class PolynomialPotential:
    """Potential given by a polynomial with exact derivatives."""

    def __init__(self, poly: Polynomial):
        self.poly = poly
        self.dim = poly.dim
        self._grad = [poly.derivative(k) for k in range(self.dim)]
        self._hess = [[g.derivative(j) for j in range(self.dim)] for g in self._grad]

    def value(self, z) -> np.ndarray:
        return self.poly(z)

    def grad(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        return np.stack([g(z) for g in self._grad], axis=-1)

    def hess(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        rows = [np.stack([h(z) for h in row], axis=-1) for row in self._hess]
        return np.stack(rows, axis=-2)


# ---------------------------------------------------------------------------
# diffusion fields


class ConstantDiffusion:
    """Constant diffusion matrix."""

    def __init__(self, matrix):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        self.constant = True

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        return np.broadcast_to(self.matrix, z.shape[:-1] + self.matrix.shape).copy()


class PerturbedDiffusion:
    """``A(z) = A0 + amplitude * phi(z) * I`` with the Hölder bump
    ``phi(z) = mean_k |sin(pi z_k)|^alpha``.
    """

    def __init__(self, matrix, amplitude: float, alpha: float):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        self.amplitude = float(amplitude)
        self.alpha = float(alpha)
        self.constant = self.amplitude == 0.0

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        phi = np.mean(np.abs(np.sin(np.pi * z)) ** self.alpha, axis=-1)
        eye = np.eye(self.matrix.shape[0])
        return self.matrix + self.amplitude * phi[..., None, None] * eye


# ---------------------------------------------------------------------------
# the model


@dataclass
class DiffusionModel:
    """Drift-diffusion model in divergence form.

    Parameters
    ----------
    potential : object
        Provides ``value(z)``, ``grad(z)`` and ``hess(z)`` for arrays of
        points with trailing dimension ``dim``.
    diffusion : callable
        ``A(z)`` with shape ``(..., d, d)``; in the degenerate case only the
        block on ``noisy_dims`` is nonzero.
    l_matrix : ndarray, optional
        Constant matrix ``P`` with ``l(z) = P grad W(z)`` (elliptic case).
    l_func : callable, optional
        General perturbation ``l(z)``; used when ``l_matrix`` is None.
    b_matrix : ndarray, optional
        Degenerate case: ``b(z) = P_b grad W(z)``.  Defaults to ``-l_matrix``.
    B : ndarray, optional
        Constant linear drift (zero in the elliptic case).
    """

    potential: object
    diffusion: Callable
    dim: int
    l_matrix: np.ndarray | None = None
    l_func: Callable | None = None
    b_matrix: np.ndarray | None = None
    B: np.ndarray | None = None
    n0: int | None = None
    noisy_dims: tuple | None = None
    confining: tuple[float, float, float] = (2.0, 0.25, 1.0)
    holder_alpha: float = 0.5
    family: str = "custom"
    gamma: float = 0.0
    perturbation: str = "rot"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.dim
        if self.noisy_dims is None:
            self.noisy_dims = tuple(range(self.n0 if self.n0 is not None else d))
        self.noisy_dims = tuple(int(i) for i in self.noisy_dims)
        self.n0 = len(self.noisy_dims)
        if self.B is None:
            self.B = np.zeros((d, d))
        self.B = np.asarray(self.B, dtype=np.float64)
        if self.l_matrix is not None:
            self.l_matrix = np.asarray(self.l_matrix, dtype=np.float64)
        if self.b_matrix is None and self.l_matrix is not None:
            self.b_matrix = -self.l_matrix
        elif self.b_matrix is not None:
            self.b_matrix = np.asarray(self.b_matrix, dtype=np.float64)

    # -- basic evaluators -------------------------------------------------
    def W(self, z) -> np.ndarray:
        return self.potential.value(np.asarray(z, dtype=np.float64))

    def grad_W(self, z) -> np.ndarray:
        return self.potential.grad(np.asarray(z, dtype=np.float64))

    def hess_W(self, z) -> np.ndarray:
        return self.potential.hess(np.asarray(z, dtype=np.float64))

    def A(self, z) -> np.ndarray:
        return self.diffusion(np.asarray(z, dtype=np.float64))

    def S(self, z) -> np.ndarray:
        a = self.A(z)
        return 0.5 * (a + np.swapaxes(a, -1, -2))

    def l(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if self.l_matrix is not None:
            return self.grad_W(z) @ self.l_matrix.T
        if self.l_func is not None:
            return np.asarray(self.l_func(z), dtype=np.float64)
        return np.zeros(z.shape)

    def b(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if self.b_matrix is not None:
            return self.grad_W(z) @ self.b_matrix.T
        return -self.l(z)

    def l_jacobian(self, z) -> np.ndarray:
        """Jacobian ``L[i, j] = d l_i / d z_j`` at a single point."""
        z = np.asarray(z, dtype=np.float64)
        if self.l_matrix is not None:
            return self.l_matrix @ self.hess_W(z)
        jac = np.zeros((self.dim, self.dim))
        for j in range(self.dim):
            h = 1e-6 * (1.0 + abs(z[j]))
            e = np.zeros(self.dim)
            e[j] = h
            jac[:, j] = (self.l(z + e) - self.l(z - e)) / (2 * h)
        return jac

    @property
    def is_elliptic(self) -> bool:
        return self.n0 == self.dim and not np.any(self.B)

    @property
    def A_is_constant(self) -> bool:
        return bool(getattr(self.diffusion, "constant", False))

    @property
    def A_constant(self) -> np.ndarray:
        if not self.A_is_constant:
            raise ModelError("diffusion matrix is not constant")
        return self.A(np.zeros(self.dim))

    def drift_gradient_matrix(self) -> np.ndarray | None:
        """Matrix ``D`` with drift ``-A^T grad W + b = D grad W`` (constant A),
        or None when ``b`` is not linear in ``grad W``."""
        if not self.A_is_constant or self.b_matrix is None and self.l_func is not None:
            return None
        a = self.A(np.zeros(self.dim))
        pb = self.b_matrix if self.b_matrix is not None else np.zeros((self.dim, self.dim))
        return -a.T + pb

    def drift(self, z) -> np.ndarray:
        """Process drift ``-A^T grad W + b + B z`` (constant A only)."""
        z = np.asarray(z, dtype=np.float64)
        a = self.A(z)
        g = self.grad_W(z)
        return -np.einsum("...ji,...j->...i", a, g) + self.b(z) + z @ self.B.T

    def stream_kind(self) -> str:
        """How the perturbation flux is represented in 2D discretizations:
        "none", "rot" (``l = gamma * rot grad W``) or "numeric"."""
        if self.l_matrix is None and self.l_func is None:
            return "none"
        if self.l_matrix is not None:
            if not np.any(self.l_matrix):
                return "none"
            if self.dim == 2:
                g = self.l_matrix[1, 0]
                if np.allclose(self.l_matrix, g * _ROT, rtol=0, atol=1e-15):
                    return "rot"
        return "numeric"


def eval_model(model: DiffusionModel, z) -> tuple:
    """Evaluate ``(W, grad W, hess W, A, l)`` at one point.

    Raises
    ------
    ModelError
        If any returned quantity is non-finite; the message names the
        offending coordinate.
    """
    z = np.asarray(z, dtype=np.float64).reshape(model.dim)
    if not np.all(np.isfinite(z)):
        bad = int(np.nonzero(~np.isfinite(z))[0][0])
        raise ModelError(f"non-finite input coordinate z[{bad}]")
    w = float(model.W(z))
    g = np.asarray(model.grad_W(z), dtype=np.float64)
    hs = np.asarray(model.hess_W(z), dtype=np.float64)
    hs = 0.5 * (hs + hs.T)
    a = np.asarray(model.A(z), dtype=np.float64)
    lv = np.asarray(model.l(z), dtype=np.float64)
    for name, val in (("W", w), ("grad", g), ("hess", hs), ("A", a), ("l", lv)):
        if not np.all(np.isfinite(val)):
            raise ModelError(f"non-finite {name} at z={z.tolist()}")
    return w, g, hs, a, lv


# ---------------------------------------------------------------------------
# builtin families


def _dw1_poly() -> Polynomial:
    # (x^2 - 1)^2 / 4
    return Polynomial([0.25, -0.5, 0.25], [[4], [2], [0]])


def _perturbation_matrix(dim: int, gamma: float, kind: str) -> np.ndarray | None:
    if gamma == 0.0:
        return None
    if kind == "grad":
        return gamma * np.eye(dim)
    if dim < 2:
        raise ModelError("a rotational perturbation needs dim >= 2")
    m = np.zeros((dim, dim))
    m[:2, :2] = gamma * _ROT
    return m


def _diffusion_from_config(block: dict | None, n: int):
    if block is None:
        return ConstantDiffusion(np.eye(n))
    mat = np.asarray(block.get("matrix", np.eye(n)), dtype=np.float64)
    if mat.shape != (n, n):
        raise ModelError(f"A.matrix must be {n}x{n}, got {mat.shape}")
    if block.get("kind", "constant") == "constant":
        return ConstantDiffusion(mat)
    return PerturbedDiffusion(mat, block.get("amplitude", 0.0), block.get("alpha", 0.5))


def double_well_1d(A=None, **kw) -> DiffusionModel:
    """``W(x) = (x^2 - 1)^2 / 4`` with minima at -1, 1 and saddle at 0."""
    return DiffusionModel(
        PolynomialPotential(_dw1_poly()), _diffusion_from_config(A, 1), 1,
        family="double_well_1d", **kw,
    )


def double_well_2d(gamma: float = 0.0, ky: float = 1.0, perturbation: str = "rot",
                   A=None, **kw) -> DiffusionModel:
    """``W(x, y) = (x^2 - 1)^2 / 4 + ky y^2 / 2`` with ``l = gamma rot grad W``
    (``perturbation="grad"`` gives the non-admissible ``gamma grad W``)."""
    poly = Polynomial([0.25, -0.5, 0.25, 0.5 * ky], [[4, 0], [2, 0], [0, 0], [0, 2]])
    return DiffusionModel(
        PolynomialPotential(poly), _diffusion_from_config(A, 2), 2,
        l_matrix=_perturbation_matrix(2, gamma, perturbation),
        family="double_well_2d_rot", gamma=gamma, perturbation=perturbation,
        params={"ky": ky}, **kw,
    )


def custom_polynomial(terms, dim: int, gamma: float = 0.0, perturbation: str = "rot",
                      A=None, **kw) -> DiffusionModel:
    """Model with polynomial potential ``terms = [(coef, powers), ...]``."""
    coefs = [float(t[0]) for t in terms]
    powers = [list(t[1]) for t in terms]
    if any(len(p) != dim for p in powers):
        raise ModelError(f"every monomial needs {dim} powers")
    poly = Polynomial(coefs, powers)
    return DiffusionModel(
        PolynomialPotential(poly), _diffusion_from_config(A, dim), dim,
        l_matrix=_perturbation_matrix(dim, gamma, perturbation),
        family="custom_polynomial", gamma=gamma, perturbation=perturbation,
        params={"dim": dim, "terms": [[c, p] for c, p in zip(coefs, powers)]}, **kw,
    )


def quadratic(dim: int = 1, **kw) -> DiffusionModel:
    """``W(z) = |z|^2 / 2``."""
    terms = [(0.5, [2 if j == k else 0 for j in range(dim)]) for k in range(dim)]
    return custom_polynomial(terms, dim, **kw)


def underdamped(U_terms=None, A=None, **kw) -> DiffusionModel:
    """Kinetic Fokker-Planck model on (x, v) in one space dimension.

    ``W = U(x) + v^2/2``, ``A = diag(0, a)``, ``B = [[0, 1], [0, 0]]`` and
    ``b = (0, -U'(x))``.  ``U_terms`` lists ``(coef, power)`` pairs and
    defaults to the double well.
    """
    if U_terms is None:
        U_terms = [(0.25, 4), (-0.5, 2), (0.25, 0)]
    coefs = [float(c) for c, _ in U_terms] + [0.5]
    powers = [[int(p), 0] for _, p in U_terms] + [[0, 2]]
    pot = PolynomialPotential(Polynomial(coefs, powers))
    hat = _diffusion_from_config(A, 1)
    if not hat.constant:
        raise ModelError("the underdamped demo needs a constant diffusion block")
    full = np.zeros((2, 2))
    full[1, 1] = hat.matrix[0, 0]
    return DiffusionModel(
        pot, ConstantDiffusion(full), 2,
        b_matrix=np.array([[0.0, 0.0], [-1.0, 0.0]]),
        B=np.array([[0.0, 1.0], [0.0, 0.0]]),
        noisy_dims=(1,), family="underdamped",
        params={"U": [[c, p] for c, p in U_terms]}, **kw,
    )


# ---------------------------------------------------------------------------
# structural checks


def default_probes(dim: int, lo: float = -2.0, hi: float = 2.0, n: int = 21) -> np.ndarray:
    """Tensor probe grid with ``n`` points per axis on ``[lo, hi]^dim``."""
    axes = [np.linspace(lo, hi, n)] * dim
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)


def _linear_drift(model: DiffusionModel, z: np.ndarray) -> np.ndarray:
    return model.b(z) + z @ model.B.T


def divergence_residuals(model: DiffusionModel, epsilon: float, probes) -> np.ndarray:
    """Pointwise ``|e^{W/eps} div(e^{-W/eps} c)|`` with ``c = b + B z``.

    The weighted divergence is expanded as ``div c - c . grad W / eps``;
    ``div c`` uses central differences with step ``1e-4 (1 + |z|)``.
    """
    z = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    c = _linear_drift(model, z)
    step = 1e-4 * (1.0 + np.linalg.norm(z, axis=1))
    div = np.zeros(z.shape[0])
    for k in range(model.dim):
        e = np.zeros(model.dim)
        e[k] = 1.0
        zp = z + step[:, None] * e
        zm = z - step[:, None] * e
        div += (_linear_drift(model, zp)[:, k] - _linear_drift(model, zm)[:, k]) / (2 * step)
    cdotg = np.einsum("ij,ij->i", c, model.grad_W(z))
    return np.abs(div - cdotg / epsilon)


def check_divergence_free(model: DiffusionModel, epsilon: float, probes,
                          tol: float | None = None) -> float:
    """Maximum weighted-divergence residual over the probes.

    With ``tol`` given, a residual above it raises :class:`ModelError`
    naming the worst probe.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    z = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    if z.size == 0:
        raise ValueError("probes must be nonempty")
    res = divergence_residuals(model, epsilon, z)
    worst = int(np.argmax(res))
    r = float(res[worst])
    if tol is not None and r > tol:
        raise ModelError(
            f"weighted divergence residual {r:.3e} exceeds {tol:.1e} at z={z[worst].tolist()}"
        )
    return r


@dataclass
class ModelReport:
    """Outcome of :func:`check_model`."""

    divergence_residual: float
    divergence_worst_probe: list
    ellipticity_margin: float
    confining_margin: float
    confining_worst_probe: list
    hessian_asymmetry: float
    elliptic_structure: bool
    gradient_error_ratio: float
    tol: float
    passed: bool = False

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def gradient_richardson(model: DiffusionModel, probes, steps=(1e-3, 5e-4)) -> tuple[float, float]:
    """Max deviation of central-difference gradients from ``grad W`` at two steps."""
    z = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    g = model.grad_W(z)
    errs = []
    for h in steps:
        fd = np.empty_like(z)
        for k in range(model.dim):
            e = np.zeros(model.dim)
            e[k] = h
            fd[:, k] = (model.W(z + e) - model.W(z - e)) / (2 * h)
        errs.append(float(np.max(np.abs(fd - g))))
    return errs[0], errs[1]


def check_model(model: DiffusionModel, epsilon: float = 0.1, probes=None,
                tol: float = 1e-6) -> ModelReport:
    """Probe-based check of ellipticity, confinement, Hessian symmetry and the
    weighted divergence-free condition."""
    if probes is None:
        probes = default_probes(model.dim)
    z = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    res = divergence_residuals(model, epsilon, z)
    iw = int(np.argmax(res))

    nd = list(model.noisy_dims)
    s = model.S(z)[:, nd][:, :, nd]
    ell = float(np.min(np.linalg.eigvalsh(s)))

    q, c1, c2 = model.confining
    conf = model.W(z) - (c1 * np.linalg.norm(z, axis=1) ** q - c2)
    ic = int(np.argmin(conf))

    hs = model.hess_W(z)
    asym = float(np.max(np.abs(hs - np.swapaxes(hs, -1, -2)))) if z.size else 0.0

    if model.is_elliptic:
        structure = bool(np.allclose(model.b(z), -model.l(z), rtol=0, atol=0))
    else:
        structure = True
    e1, e2 = gradient_richardson(model, z)
    ratio = e1 / e2 if e2 > 1e-13 else 4.0

    rep = ModelReport(
        divergence_residual=float(res[iw]),
        divergence_worst_probe=z[iw].tolist(),
        ellipticity_margin=ell,
        confining_margin=float(conf[ic]),
        confining_worst_probe=z[ic].tolist(),
        hessian_asymmetry=asym,
        elliptic_structure=structure,
        gradient_error_ratio=float(ratio),
        tol=tol,
    )
    rep.passed = bool(
        rep.divergence_residual <= tol
        and ell > 0
        and rep.confining_margin >= 0
        and asym <= 1e-12
        and structure
    )
    return rep


# ---------------------------------------------------------------------------
# Gibbs measure


@dataclass
class GibbsMeasure:
    """Stationary measure ``rho = e^{-W/eps} / Z`` on a quadrature box."""

    model: DiffusionModel
    epsilon: float
    log_Z: float
    log_laplace_Z: float
    box: np.ndarray
    boundary_weight: float = 0.0

    @property
    def Z(self) -> float:
        return math.exp(self.log_Z)

    @property
    def laplace_Z(self) -> float:
        return math.exp(self.log_laplace_Z)

    @property
    def relative_gap(self) -> float:
        return abs(1.0 - math.exp(self.log_laplace_Z - self.log_Z))

    def density(self, z) -> np.ndarray:
        return np.exp(-self.model.W(z) / self.epsilon - self.log_Z)


def _gauss_nodes(lo: float, hi: float, width: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    n_panels = max(1, int(math.ceil((hi - lo) / width)))
    x, w = roots_legendre(order)
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def log_laplace_Z(model: DiffusionModel, epsilon: float, minima) -> float:
    """``log sum_m (2 pi eps)^{d/2} det(hess W(m))^{-1/2} e^{-W(m)/eps}``."""
    terms = []
    for m in minima:
        m = np.asarray(m, dtype=np.float64)
        det = float(np.linalg.det(model.hess_W(m)))
        if det <= 0:
            raise ModelError(f"Hessian at minimum {m.tolist()} is not positive definite")
        terms.append(0.5 * model.dim * math.log(2 * math.pi * epsilon)
                     - 0.5 * math.log(det) - float(model.W(m)) / epsilon)
    return float(logsumexp(terms))


def partition_function(model: DiffusionModel, epsilon: float, box, quadrature_order: int = 8,
                       minima=None, panel_width: float | None = None) -> GibbsMeasure:
    """Partition function by composite Gauss-Legendre quadrature.

    Parameters
    ----------
    box : sequence of (lo, hi)
        Integration box, one pair per axis.
    quadrature_order : int
        Gauss-Legendre nodes per panel (>= 2).
    minima : sequence of points, optional
        Minima for the Laplace approximation; found automatically if None.
    panel_width : float, optional
        Panel width; defaults to ``sqrt(eps) / 2``.
    """
    if quadrature_order < 2:
        raise ValueError("quadrature_order must be >= 2")
    box = np.asarray(box, dtype=np.float64).reshape(model.dim, 2)
    if panel_width is None:
        panel_width = 0.5 * math.sqrt(epsilon)
    axes = [_gauss_nodes(lo, hi, panel_width, quadrature_order) for lo, hi in box]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    z = np.stack(grids, axis=-1)
    logw = sum(np.log(w).reshape([-1 if k == j else 1 for k in range(model.dim)])
               for j, (_, w) in enumerate(axes))
    expo = -model.W(z) / epsilon
    log_z = float(logsumexp(expo + logw))

    # boundary weight relative to the maximum of the integrand
    face_max = -np.inf
    for k in range(model.dim):
        for side in (0, 1):
            pts = z.copy()
            pts[..., k] = box[k, side]
            face_max = max(face_max, float(np.max(-model.W(pts) / epsilon)))
    bw = math.exp(face_max - float(np.max(expo)))
    if bw > 1e-10:
        warnings.warn(
            f"Gibbs weight on the box boundary is {bw:.2e} of the maximum; "
            "enlarge the box by a factor of about 1.5",
            BoxTooSmallWarning, stacklevel=2,
        )

    if minima is None:
        from .landscape import find_critical_points

        cps = find_critical_points(model, box, seeds_per_axis=9)
        minima = [c.location for c in cps if c.kind == "minimum"]
    log_lap = log_laplace_Z(model, epsilon, minima)
    return GibbsMeasure(model, epsilon, log_z, log_lap, box, bw)
