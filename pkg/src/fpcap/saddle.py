"""Saddle spectral data, sharp capacity asymptotic and Eyring-Kramers time."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .landscape import CriticalPoint
from .model import DiffusionModel, GibbsMeasure, ModelError


class StructureError(ModelError):
    """The saddle matrices violate the unique-negative-eigenvalue structure."""


@dataclass
class SaddleAnalysis:
    """Spectral data at an index-1 saddle.

    ``-mu`` is the unique negative eigenvalue of ``H0 A0 + L0^T`` (right
    eigenvector ``v``) and of ``H0 A0^T - L0^T`` (eigenvector ``v_dag``);
    ``beta = mu / (v . A0 v)``.  ``e1`` is the unstable Hessian direction,
    oriented toward the starting well.
    """

    location: np.ndarray
    H0: np.ndarray
    L0: np.ndarray
    A0: np.ndarray
    mu: float
    v: np.ndarray
    mu_dag: float
    v_dag: np.ndarray
    beta: float
    beta_dag: float
    omega0: float
    e1: np.ndarray
    hess_eigs: np.ndarray
    hess_vecs: np.ndarray
    spectrum: np.ndarray
    spectrum_dag: np.ndarray
    value: float

    def evector_residual(self, adjoint: bool = False) -> float:
        """``|v . H0^{-1} v + 1/beta|``."""
        v, b = (self.v_dag, self.beta_dag) if adjoint else (self.v, self.beta)
        return abs(float(v @ np.linalg.solve(self.H0, v)) + 1.0 / b)

    def skew_residual(self) -> float:
        """``max |H0 L0 + (H0 L0)^T|``."""
        m = self.H0 @ self.L0
        return float(np.max(np.abs(m + m.T)))

    def as_dict(self) -> dict:
        return {
            "location": self.location.tolist(),
            "mu": self.mu,
            "mu_dag": self.mu_dag,
            "v": self.v.tolist(),
            "v_dag": self.v_dag.tolist(),
            "beta": self.beta,
            "beta_dag": self.beta_dag,
            "omega0": self.omega0,
        }


def _clean_spectrum(vals: np.ndarray) -> np.ndarray:
    radius = float(np.max(np.abs(vals))) if vals.size else 0.0
    vals = vals.copy()
    small = np.abs(vals.imag) <= 1e-9 * radius
    vals[small] = vals[small].real
    return vals


def _negative_mode(m: np.ndarray, e1: np.ndarray, label: str) -> tuple[float, np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eig(m)
    vals = _clean_spectrum(vals)
    neg = np.nonzero(vals.real < 0)[0]
    if neg.size != 1:
        raise StructureError(
            f"{label} has {neg.size} eigenvalues with negative real part (expected exactly one)"
        )
    i = int(neg[0])
    if vals[i].imag != 0:
        raise StructureError(f"{label} has a complex negative eigenvalue {vals[i]}")
    offdiag = m - np.diag(np.diag(m))
    if not np.any(offdiag):
        v = e1.copy()
    else:
        v = np.real(vecs[:, i])
        v = v / np.linalg.norm(v)
    if v @ e1 < 0:
        v = -v
    return -float(vals[i].real), v, vals


def analyze_saddle(model: DiffusionModel, saddle: CriticalPoint,
                   m1: CriticalPoint | np.ndarray | None = None) -> SaddleAnalysis:
    """Spectral analysis of the saddle.

    Parameters
    ----------
    m1 : CriticalPoint or array, optional
        Starting well; ``e1`` (and hence ``v``) is oriented toward it.  If
        omitted, ``e1`` has a positive first nonzero component.
    """
    if saddle.kind != "saddle_index_1":
        raise StructureError(f"critical point of kind {saddle.kind!r} is not an index-1 saddle")
    z = np.asarray(saddle.location, dtype=np.float64)
    h0 = model.hess_W(z)
    h0 = 0.5 * (h0 + h0.T)
    a0 = model.A(z)
    l0 = model.l_jacobian(z)
    eigs, vecs = np.linalg.eigh(h0)
    e1 = vecs[:, 0].copy()
    if m1 is not None:
        loc = m1.location if isinstance(m1, CriticalPoint) else np.asarray(m1, dtype=np.float64)
        if e1 @ (loc - z) < 0:
            e1 = -e1
    else:
        nz = np.nonzero(np.abs(e1) > 1e-12)[0][0]
        if e1[nz] < 0:
            e1 = -e1
    det = float(np.linalg.det(h0))
    if det >= 0 or eigs[0] >= 0:
        raise StructureError("Hessian at the saddle does not have exactly one negative eigenvalue")

    mu, v, spec = _negative_mode(h0 @ a0 + l0.T, e1, "H0 A0 + L0^T")
    mu_d, v_d, spec_d = _negative_mode(h0 @ a0.T - l0.T, e1, "H0 A0^T - L0^T")
    beta = mu / float(v @ a0 @ v)
    beta_d = mu_d / float(v_d @ a0 @ v_d)
    omega0 = mu / (2 * math.pi * math.sqrt(abs(det)))
    out = SaddleAnalysis(
        location=z, H0=h0, L0=l0, A0=a0, mu=mu, v=v, mu_dag=mu_d, v_dag=v_d,
        beta=beta, beta_dag=beta_d, omega0=omega0, e1=e1, hess_eigs=eigs,
        hess_vecs=vecs, spectrum=spec, spectrum_dag=spec_d, value=saddle.value,
    )
    return out


@dataclass
class EKPrediction:
    """Sharp capacity and Eyring-Kramers mean transition time at one ``eps``."""

    epsilon: float
    capacity: float
    mean_time: float
    A_eps: float
    prefactor_time: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def log_A_eps(dim: int, epsilon: float, H: float, log_Z: float) -> float:
    """``log((2 pi eps)^{d/2} e^{-H/eps} / Z)``."""
    return 0.5 * dim * math.log(2 * math.pi * epsilon) - H / epsilon - log_Z


def sharp_capacity(analysis: SaddleAnalysis, measure: GibbsMeasure, H: float,
                   use_laplace_Z: bool = False) -> float:
    """``A_eps * omega0`` with ``A_eps = (2 pi eps)^{d/2} e^{-H/eps} / Z``."""
    det = float(np.linalg.det(analysis.H0))
    d = analysis.H0.shape[0]
    if det >= 0:
        raise StructureError("det H0 has the wrong sign for an index-1 saddle")
    log_z = measure.log_laplace_Z if use_laplace_Z else measure.log_Z
    return math.exp(log_A_eps(d, measure.epsilon, H, log_z)) * analysis.omega0


def eyring_kramers_prefactor(analysis: SaddleAnalysis, m1: CriticalPoint, model: DiffusionModel) -> float:
    """``(2 pi / mu) sqrt(-det H0 / det H_{m1})``."""
    hm = model.hess_W(np.asarray(m1.location, dtype=np.float64))
    det_m = float(np.linalg.det(0.5 * (hm + hm.T)))
    if det_m <= 0 or m1.kind != "minimum":
        raise StructureError("starting point is not a nondegenerate minimum")
    return 2 * math.pi / analysis.mu * math.sqrt(abs(float(np.linalg.det(analysis.H0))) / det_m)


def eyring_kramers_time(analysis: SaddleAnalysis, m1: CriticalPoint, saddle: CriticalPoint,
                        epsilon: float, model: DiffusionModel) -> float:
    """``(2 pi / mu) sqrt(-det H0 / det H_{m1}) e^{(H - h1)/eps}``."""
    if saddle.kind != "saddle_index_1":
        raise StructureError("saddle is not an index-1 saddle")
    pre = eyring_kramers_prefactor(analysis, m1, model)
    return pre * math.exp((saddle.value - m1.value) / epsilon)


def ek_prediction(model: DiffusionModel, analysis: SaddleAnalysis, measure: GibbsMeasure,
                  m1: CriticalPoint, saddle: CriticalPoint) -> EKPrediction:
    """Bundle the sharp capacity and EK time at ``measure.epsilon``."""
    eps = measure.epsilon
    H = saddle.value
    return EKPrediction(
        epsilon=eps,
        capacity=sharp_capacity(analysis, measure, H),
        mean_time=eyring_kramers_time(analysis, m1, saddle, eps, model),
        A_eps=math.exp(log_A_eps(model.dim, eps, H, measure.log_Z)),
        prefactor_time=eyring_kramers_prefactor(analysis, m1, model),
    )
