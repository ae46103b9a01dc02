"""Euler-Maruyama first-passage simulation of the diffusion.

Paths follow

    Z_{k+1} = Z_k + (D grad W(Z_k) + B Z_k) dt + sqrt(2 eps dt) Sigma xi_k,

with ``D = -A^T + P_b`` (constant ``A``), ``Sigma`` the symmetric square
root of ``S = (A + A^T)/2`` and one random stream per path, so results do
not depend on the number of workers or the chunking.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .model import DiffusionModel, ModelError, PolynomialPotential, check_divergence_free

CHUNK = 256
STATUS_HIT, STATUS_CENSORED, STATUS_DIVERGED = 0, 1, 2


class SimulationError(RuntimeError):
    """Invalid simulation settings or too many diverged paths."""


@dataclass
class SimConfig:
    """Settings of one hitting-time experiment.

    ``target_dims`` selects the coordinates on which the target ball lives
    (all coordinates by default).  ``bridge`` enables the Brownian-bridge
    correction for crossings between steps; ``refine`` sums ``refine``
    normals per step (used for coupled step-size comparisons).
    """

    epsilon: float
    dt: float
    t_max: float
    start: np.ndarray
    target_center: np.ndarray
    target_radius: float
    n_paths: int
    seed: int = 0
    scheme: str = "euler_maruyama"
    model_kind: str = "overdamped_elliptic"
    target_dims: tuple | None = None
    bridge: bool = True
    refine: int = 1
    abort_factor: float = 10.0
    ek_time: float | None = None

    def __post_init__(self):
        self.start = np.atleast_1d(np.asarray(self.start, dtype=np.float64))
        self.target_center = np.atleast_1d(np.asarray(self.target_center, dtype=np.float64))
        if self.target_dims is None:
            self.target_dims = tuple(range(self.start.size))
        self.target_dims = tuple(int(i) for i in self.target_dims)

    def halved(self) -> "SimConfig":
        """Same experiment with ``dt / 2`` driven by the same Brownian increments."""
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw.update(dt=self.dt / 2, refine=self.refine * 2)
        return SimConfig(**kw)


@dataclass
class HittingTimeStats:
    """Summary of a hitting-time sample.

    Diverged paths are counted among the censored ones (``n_diverged`` of
    them), so ``n_hit + n_censored == n_paths``.
    """

    n_hit: int
    n_censored: int
    n_diverged: int
    mean: float
    stderr: float
    ci95: tuple
    samples: np.ndarray = field(repr=False)
    status: np.ndarray = field(repr=False)
    final_states: np.ndarray = field(repr=False)

    @property
    def n_paths(self) -> int:
        return self.n_hit + self.n_censored

    @property
    def censored_fraction(self) -> float:
        return self.n_censored / self.n_paths if self.n_paths else 0.0

    @property
    def biased_low(self) -> bool:
        return self.censored_fraction > 0.01

    def as_dict(self) -> dict:
        return {
            "n_paths": self.n_paths, "n_hit": self.n_hit, "n_censored": self.n_censored,
            "n_diverged": self.n_diverged, "mean": self.mean, "stderr": self.stderr,
            "ci_lo": self.ci95[0], "ci_hi": self.ci95[1],
            "censored_fraction": self.censored_fraction, "biased_low": self.biased_low,
        }

    def to_csv(self) -> str:
        """Raw samples as ``path_index,hit_time,censored`` rows."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["path_index", "hit_time", "censored"])
        for i, (t, s) in enumerate(zip(self.samples, self.status)):
            w.writerow([i, repr(float(t)), int(s != STATUS_HIT)])
        return buf.getvalue()


def summarize(times, status, final_states=None) -> HittingTimeStats:
    """Order-independent statistics of the hit paths (exactly rounded sums)."""
    times = np.asarray(times, dtype=np.float64)
    status = np.asarray(status, dtype=np.int8)
    hit = times[status == STATUS_HIT]
    n = hit.size
    if n:
        mean = math.fsum(hit.tolist()) / n
        var = math.fsum(((hit - mean) ** 2).tolist()) / (n - 1) if n > 1 else 0.0
        se = math.sqrt(var / n)
    else:
        mean, se = math.nan, math.nan
    if final_states is None:
        final_states = np.zeros((times.size, 0))
    return HittingTimeStats(
        n_hit=int(n), n_censored=int(times.size - n), n_diverged=int(np.sum(status == STATUS_DIVERGED)),
        mean=mean, stderr=se, ci95=(mean - 1.96 * se, mean + 1.96 * se),
        samples=times, status=status, final_states=final_states,
    )


def workers_from_env() -> int:
    """Worker count from ``FPCAP_WORKERS`` (default: CPU count)."""
    val = os.environ.get("FPCAP_WORKERS")
    if val:
        n = int(val)
        if n < 1:
            raise ValueError("FPCAP_WORKERS must be >= 1")
        return n
    return os.cpu_count() or 1


def noise_factor(model: DiffusionModel) -> np.ndarray:
    """Symmetric square root of ``S`` (semidefinite in the degenerate case)."""
    s = 0.5 * (model.A_constant + model.A_constant.T)
    vals, vecs = np.linalg.eigh(s)
    if vals.min() < -1e-12 * max(1.0, abs(vals).max()):
        raise ModelError("symmetric part of A is not positive semidefinite")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def sim_box(config: SimConfig) -> np.ndarray:
    """Box spanned by the start and the target centre, padded by 1."""
    c = np.zeros_like(config.start)
    c[list(config.target_dims)] = config.target_center
    lo = np.minimum(config.start, c) - 1.0
    hi = np.maximum(config.start, c) + 1.0
    return np.stack([lo, hi], axis=1)


def max_drift(model: DiffusionModel, box, n: int = 21) -> float:
    axes = [np.linspace(lo, hi, n) for lo, hi in np.asarray(box)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.dim)
    return float(np.max(np.linalg.norm(model.drift(pts), axis=1)))


def validate(config: SimConfig, model: DiffusionModel) -> None:
    """Check the step size, horizon and model preconditions.

    Raises
    ------
    SimulationError
        For ``dt > eps/10``, ``dt > 0.01 / max drift``, a horizon shorter
        than 100 EK times, or a malformed target.
    ModelError
        If ``A`` is not constant or the model is not polynomial.
    """
    if config.scheme != "euler_maruyama":
        raise SimulationError(f"unknown scheme {config.scheme!r}")
    if config.model_kind not in ("overdamped_elliptic", "underdamped_demo"):
        raise SimulationError(f"unknown model kind {config.model_kind!r}")
    if config.start.size != model.dim:
        raise SimulationError(f"start has {config.start.size} coordinates, model dim is {model.dim}")
    if config.target_center.size != len(config.target_dims) or config.target_radius <= 0:
        raise SimulationError("target ball must have positive radius and match target_dims")
    if not model.A_is_constant:
        raise ModelError("Monte Carlo needs a constant diffusion matrix")
    if not isinstance(model.potential, PolynomialPotential):
        raise ModelError("Monte Carlo kernels need a polynomial potential")
    if model.drift_gradient_matrix() is None:
        raise ModelError("drift must be linear in grad W")
    if config.n_paths < 1 or config.dt <= 0 or config.t_max <= 0 or config.refine < 1:
        raise SimulationError("n_paths, dt, t_max and refine must be positive")
    if config.dt > config.epsilon / 10 * (1 + 1e-12):
        raise SimulationError(f"dt={config.dt:g} exceeds eps/10={config.epsilon / 10:g}")
    md = max_drift(model, sim_box(config))
    if md > 0 and config.dt > 0.01 / md * (1 + 1e-12):
        raise SimulationError(f"dt={config.dt:g} exceeds 0.01/max drift={0.01 / md:g}")
    if config.ek_time is not None and config.t_max < 100 * config.ek_time:
        raise SimulationError(f"t_max={config.t_max:g} is below 100 EK times ({100 * config.ek_time:g})")


def run_paths(config: SimConfig, model: DiffusionModel, n_steps: int | None = None,
              backend: str | None = None, workers: int | None = None,
              target: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Simulate all paths; returns ``(times, status, final_states)``.

    With ``target=False`` no path is stopped and ``final_states`` holds the
    positions after ``n_steps`` steps.
    """
    k = _backend.get(backend)
    d = model.dim
    dmat = np.ascontiguousarray(model.drift_gradient_matrix(), dtype=np.float64)
    bmat = np.ascontiguousarray(model.B, dtype=np.float64)
    sigma = np.ascontiguousarray(noise_factor(model))
    gcoef, gpow = model.potential.poly.grad_structure()
    gcoef = np.ascontiguousarray(gcoef, dtype=np.float64)
    gpow = np.ascontiguousarray(gpow, dtype=np.int64)
    tdims = np.array(config.target_dims, dtype=np.int64)
    s_full = 0.5 * (model.A_constant + model.A_constant.T)
    s_target = np.ascontiguousarray(s_full[np.ix_(tdims, tdims)])
    if n_steps is None:
        n_steps = int(math.ceil(config.t_max / config.dt - 1e-9))
    box = sim_box(config)
    abort = config.abort_factor * float(np.max(np.abs(box)))
    center = np.ascontiguousarray(config.target_center, dtype=np.float64)
    radius = float(config.target_radius)
    if not target:
        center = np.full(tdims.size, 1e300)
        radius = 1.0
        abort = math.inf
    n = config.n_paths
    out_t = np.empty(n)
    out_s = np.empty(n, dtype=np.int8)
    out_z = np.empty((n, d))
    start = np.ascontiguousarray(config.start, dtype=np.float64)

    def job(lo):
        hi = min(n, lo + CHUNK)
        k.em_hitting_chunk(start, dmat, bmat, sigma, gcoef, gpow, float(config.epsilon), float(config.dt),
                           int(n_steps), center, radius, tdims, s_target, float(abort),
                           int(config.seed) % 2**64, int(lo), int(hi), int(config.refine),
                           bool(config.bridge and target), out_t[lo:hi], out_s[lo:hi], out_z[lo:hi])

    starts = list(range(0, n, CHUNK))
    nw = workers if workers is not None else workers_from_env()
    if nw <= 1 or len(starts) == 1:
        for lo in starts:
            job(lo)
    else:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            list(pool.map(job, starts))
    return out_t, out_s, out_z


def simulate_hitting_times(config: SimConfig, model: DiffusionModel, backend: str | None = None,
                           workers: int | None = None, check: bool = True) -> HittingTimeStats:
    """Mean first-passage time into the target ball.

    Raises
    ------
    SimulationError
        On invalid settings or if more than 0.1 % of the paths diverge.
    """
    validate(config, model)
    if check and config.model_kind == "overdamped_elliptic":
        if not model.is_elliptic:
            raise ModelError("overdamped runs need an elliptic model")
        probes = np.asarray(sim_box(config)).mean(axis=1) + np.linspace(-1, 1, 5)[:, None]
        check_divergence_free(model, config.epsilon, probes)
    t, s, z = run_paths(config, model, backend=backend, workers=workers)
    stats = summarize(t, s, z)
    if stats.n_diverged > 1e-3 * config.n_paths:
        raise SimulationError(
            f"{stats.n_diverged} of {config.n_paths} paths diverged; reduce dt={config.dt:g}"
        )
    return stats


def simulate_underdamped_demo(config: SimConfig, model: DiffusionModel, backend: str | None = None,
                              workers: int | None = None) -> HittingTimeStats:
    """Hitting time of the position marginal for the kinetic model.

    Noise enters only through the noisy block of ``A``; the target is a
    ball in the coordinates ``config.target_dims`` (position by default).
    """
    if config.model_kind != "underdamped_demo" or model.is_elliptic:
        raise SimulationError("simulate_underdamped_demo needs a degenerate model and model_kind underdamped_demo")
    return simulate_hitting_times(config, model, backend=backend, workers=workers, check=False)


def terminal_states(config: SimConfig, model: DiffusionModel, horizon: float,
                    backend: str | None = None, workers: int | None = None) -> np.ndarray:
    """Positions of all paths after ``round(horizon / dt)`` steps (no target)."""
    validate(config, model)
    n_steps = int(round(horizon / config.dt))
    _, _, z = run_paths(config, model, n_steps=n_steps, backend=backend, workers=workers, target=False)
    return z

