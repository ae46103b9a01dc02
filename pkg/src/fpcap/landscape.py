"""Critical points of the potential and communication heights between sets."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .model import DiffusionModel, ModelError


class DegenerateCriticalPointError(ModelError):
    """A critical point has a (numerically) zero Hessian eigenvalue."""


class UnreachableTargetError(RuntimeError):
    """No lattice path joins the start node to the target set."""


@dataclass
class CriticalPoint:
    """A nondegenerate critical point of ``W``."""

    location: np.ndarray
    value: float
    grad_norm: float
    hess_eigs: np.ndarray
    index: int
    kind: str  # "minimum", "saddle_index_1" or "other"

    def as_dict(self) -> dict:
        return {
            "location": self.location.tolist(),
            "value": self.value,
            "grad_norm": self.grad_norm,
            "hess_eigs": self.hess_eigs.tolist(),
            "index": self.index,
            "kind": self.kind,
        }


def classify(model: DiffusionModel, z, degeneracy_tol: float) -> CriticalPoint:
    """Build a :class:`CriticalPoint` at ``z`` from the Hessian spectrum."""
    z = np.asarray(z, dtype=np.float64)
    h = model.hess_W(z)
    eigs = np.sort(np.linalg.eigvalsh(0.5 * (h + h.T)))
    if np.any(np.abs(eigs) <= degeneracy_tol):
        raise DegenerateCriticalPointError(
            f"degenerate critical point at {z.tolist()} (Hessian eigenvalues {eigs.tolist()})"
        )
    index = int(np.sum(eigs < 0))
    kind = {0: "minimum", 1: "saddle_index_1"}.get(index, "other")
    return CriticalPoint(
        location=z,
        value=float(model.W(z)),
        grad_norm=float(np.linalg.norm(model.grad_W(z))),
        hess_eigs=eigs,
        index=index,
        kind=kind,
    )


def find_critical_points(model: DiffusionModel, box, seeds_per_axis: int = 9,
                         newton_tol: float = 1e-10, max_iter: int = 100,
                         degeneracy_tol: float | None = None) -> list[CriticalPoint]:
    """Newton iteration on ``grad W`` from a tensor grid of seeds.

    Seeds whose iteration diverges, stalls on a singular Hessian or leaves
    the (10 % enlarged) box are discarded silently.  Converged points closer
    than 1e-6 are merged.  The degeneracy tolerance defaults to ``1e-8``
    times the largest Hessian eigenvalue magnitude over the seed grid.

    Returns
    -------
    list of CriticalPoint
        Sorted lexicographically by location.
    """
    if seeds_per_axis < 3:
        raise ValueError("seeds_per_axis must be >= 3")
    box = np.asarray(box, dtype=np.float64).reshape(model.dim, 2)
    if not np.all(np.isfinite(box)) or np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("box must be bounded with lo < hi")
    axes = [np.linspace(lo, hi, seeds_per_axis) for lo, hi in box]
    seeds = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.dim)
    pad = 0.1 * (box[:, 1] - box[:, 0])
    lo, hi = box[:, 0] - pad, box[:, 1] + pad

    if degeneracy_tol is None:
        hs = model.hess_W(seeds)
        scale = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (hs + np.swapaxes(hs, -1, -2))))))
        degeneracy_tol = 1e-8 * max(scale, 1e-300)

    found: list[np.ndarray] = []
    for z in seeds:
        z = z.copy()
        ok = False
        for _ in range(max_iter):
            g = model.grad_W(z)
            if not np.all(np.isfinite(g)):
                break
            if np.linalg.norm(g) <= newton_tol:
                ok = True
                break
            try:
                step = np.linalg.solve(model.hess_W(z), g)
            except np.linalg.LinAlgError:
                break
            z = z - step
            if not np.all(np.isfinite(z)) or np.any(z < lo) or np.any(z > hi):
                break
        if ok and not any(np.max(np.abs(z - f)) <= 1e-6 for f in found):
            found.append(z)
    found.sort(key=lambda p: tuple(p))
    return [classify(model, z, degeneracy_tol) for z in found]


@dataclass
class TwoWell:
    """Minima ``m0`` (target well), ``m1`` (starting well) and the saddle."""

    m0: CriticalPoint
    m1: CriticalPoint
    saddle: CriticalPoint

    @property
    def H(self) -> float:
        return self.saddle.value


def two_well(model: DiffusionModel, box=None, start_well: str = "right",
             seeds_per_axis: int = 9) -> TwoWell:
    """Locate the two minima and the index-1 saddle of a two-well potential.

    ``m1`` is the minimum with the larger (``"right"``) or smaller
    (``"left"``) first coordinate.  With several index-1 saddles the lowest
    one is taken.
    """
    if box is None:
        box = [(-3.0, 3.0)] * model.dim
    cps = find_critical_points(model, box, seeds_per_axis)
    minima = [c for c in cps if c.kind == "minimum"]
    saddles = [c for c in cps if c.kind == "saddle_index_1"]
    if len(minima) != 2 or not saddles:
        raise ModelError(
            f"expected two minima and an index-1 saddle, found {len(minima)} minima "
            f"and {len(saddles)} saddles"
        )
    minima.sort(key=lambda c: c.location[0])
    m0, m1 = (minima[0], minima[1]) if start_well == "right" else (minima[1], minima[0])
    saddle = min(saddles, key=lambda c: (c.value, tuple(c.location)))
    return TwoWell(m0, m1, saddle)


# ---------------------------------------------------------------------------
# communication height


@dataclass
class Lattice:
    """Regular lattice ``lo + i * step`` on a box."""

    box: np.ndarray
    step: float
    shape: tuple = field(init=False)

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=np.float64).reshape(-1, 2)
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        n = np.rint((self.box[:, 1] - self.box[:, 0]) / self.step).astype(int) + 1
        self.shape = tuple(int(v) for v in n)

    @property
    def dim(self) -> int:
        return self.box.shape[0]

    def nodes(self) -> np.ndarray:
        axes = [lo + self.step * np.arange(n) for (lo, _), n in zip(self.box, self.shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def nearest(self, z) -> int:
        z = np.asarray(z, dtype=np.float64)
        idx = np.rint((z - self.box[:, 0]) / self.step).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.shape)):
            raise ValueError(f"point {z.tolist()} lies outside the grid")
        return int(np.ravel_multi_index(tuple(idx), self.shape))

    def coords(self, flat) -> np.ndarray:
        idx = np.array(np.unravel_index(np.asarray(flat), self.shape))
        return (self.box[:, 0][:, None] + self.step * idx).T


@dataclass
class MinimaxResult:
    """Communication height ``W(z*)`` with the witness ``z*`` and the path."""

    height: float
    witness: np.ndarray
    path: np.ndarray  # (n_nodes, d), empty when start lies in the target


def _as_lattice(grid) -> Lattice:
    if isinstance(grid, Lattice):
        return grid
    return Lattice(np.asarray(grid["box"], dtype=np.float64), float(grid["step"]))


def _target_mask(lat: Lattice, target: dict, nodes: np.ndarray) -> tuple[np.ndarray, bool]:
    kind = target.get("kind")
    mask = np.zeros(nodes.shape[:-1], dtype=bool).ravel()
    if kind == "point":
        mask[lat.nearest(target["at"])] = True
    elif kind == "ball":
        c = np.asarray(target["center"], dtype=np.float64)
        r = float(target["radius"])
        inside = (np.linalg.norm(nodes - c, axis=-1) <= r).ravel()
        if inside.any():
            mask |= inside
        else:
            mask[lat.nearest(c)] = True
    else:
        raise ValueError(f"unknown target kind {kind!r}")
    return mask, True


def _start_in_target(start: np.ndarray, target: dict, lat: Lattice) -> bool:
    if target["kind"] == "ball":
        c = np.asarray(target["center"], dtype=np.float64)
        return bool(np.linalg.norm(start - c) <= float(target["radius"]))
    return lat.nearest(start) == lat.nearest(target["at"])


def communication_height(model: DiffusionModel, start, target: dict, grid,
                         backend: str | None = None) -> MinimaxResult:
    """Minimax of ``W`` over lattice paths from ``start`` to ``target``.

    Parameters
    ----------
    target : dict
        ``{"kind": "ball", "center": [...], "radius": r}`` or
        ``{"kind": "point", "at": [...]}``.
    grid : Lattice or dict
        ``{"box": [[lo, hi], ...], "step": h}``.

    Notes
    -----
    All ``3^d - 1`` neighbours are linked.  Heap ties are broken by the lower
    key, then the lower flat (lexicographic) node index.
    """
    lat = _as_lattice(grid)
    start = np.asarray(start, dtype=np.float64).reshape(model.dim)
    if _start_in_target(start, target, lat):
        return MinimaxResult(float(model.W(start)), start.copy(), np.zeros((0, model.dim)))
    nodes = lat.nodes()
    values = np.ascontiguousarray(model.W(nodes).ravel(), dtype=np.float64)
    mask, _ = _target_mask(lat, target, nodes)
    s = lat.nearest(start)
    offsets = np.array([o for o in itertools.product((-1, 0, 1), repeat=lat.dim) if any(o)],
                       dtype=np.int64)
    k = _backend.get(backend)
    height, end, pred = k.minimax_dijkstra(
        values, np.array(lat.shape, dtype=np.int64), s, mask.astype(np.uint8), offsets
    )
    if end < 0:
        raise UnreachableTargetError("target is not reachable within the grid")
    chain = [int(end)]
    while chain[-1] != s:
        chain.append(int(pred[chain[-1]]))
    chain.reverse()
    path = lat.coords(chain)
    vals = values[chain]
    witness = path[int(np.argmax(vals))]
    return MinimaxResult(float(height), witness, path)
