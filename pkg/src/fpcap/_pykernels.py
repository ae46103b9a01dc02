"""NumPy implementations of the compiled kernels.

These mirror ``_ckernels`` function for function and reproduce the same
per-path random streams (xoshiro256** seeded through splitmix64), so the
two backends agree path by path up to floating point rounding in the
transcendental functions.
"""
from __future__ import annotations

import heapq

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
SEED_SALT = 0x6A09E667F3BCC909
STREAM_SALT = 0xD1B54A32D192ED03
TWO_M53 = 1.0 / 9007199254740992.0
TWO_PI = 6.283185307179586
BRIDGE_CUTOFF = 40.0

_U64 = np.uint64


def _mix64(z):
    z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    return z ^ (z >> _U64(31))


def _rotl(x, k):
    return (x << _U64(k)) | (x >> _U64(64 - k))


class RngVec:
    """A batch of independent xoshiro256** streams, one per path."""

    def __init__(self, seed, paths, stream):
        paths = np.asarray(paths, dtype=np.uint64)
        with np.errstate(over="ignore"):
            k = _mix64(np.full(paths.shape, seed, dtype=np.uint64) ^ _U64(SEED_SALT))
            k = _mix64(k + (paths + _U64(1)) * _U64(GOLDEN))
            k = _mix64(k ^ _U64(((stream + 1) * STREAM_SALT) % 2**64))
            s = []
            for _ in range(4):
                k = k + _U64(GOLDEN)
                s.append(_mix64(k))
        self.s = np.stack(s)  # shape (4, n)
        self.has_spare = False
        self.spare = np.zeros(paths.shape)

    def next(self, idx=None):
        s = self.s if idx is None else self.s[:, idx]
        s0, s1, s2, s3 = s[0].copy(), s[1].copy(), s[2].copy(), s[3].copy()
        result = _rotl(s1 * _U64(5), 7) * _U64(9)
        t = s1 << _U64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        new = np.stack([s0, s1, s2, s3])
        if idx is None:
            self.s = new
        else:
            self.s[:, idx] = new
        return result

    def uniform(self, idx=None):
        return (self.next(idx) >> _U64(11)).astype(np.float64) * TWO_M53

    def normal(self):
        if self.has_spare:
            self.has_spare = False
            return self.spare.copy()
        u1 = ((self.next() >> _U64(11)) + _U64(1)).astype(np.float64) * TWO_M53
        u2 = (self.next() >> _U64(11)).astype(np.float64) * TWO_M53
        rad = np.sqrt(-2.0 * np.log(u1))
        th = TWO_PI * u2
        self.spare = rad * np.sin(th)
        self.has_spare = True
        return rad * np.cos(th)

    def compress(self, keep):
        self.s = self.s[:, keep]
        self.spare = self.spare[keep]


def rng_raw(seed, path, stream, n):
    """Return the first ``n`` raw 64-bit outputs of one stream."""
    r = RngVec(seed, [path], stream)
    return np.array([r.next()[0] for _ in range(n)], dtype=np.uint64)


def rng_normals(seed, path, stream, n):
    """Return the first ``n`` standard normals of one stream."""
    r = RngVec(seed, [path], stream)
    return np.array([r.normal()[0] for _ in range(n)], dtype=np.float64)


def _poly_grad(z, gcoef, gpow):
    # z: (n, d); gcoef: (d, T); gpow: (d, T, d)
    d = z.shape[1]
    out = np.empty_like(z)
    for i in range(d):
        mono = np.ones((z.shape[0], gcoef.shape[1]))
        for m in range(d):
            mono *= z[:, m : m + 1] ** gpow[i, :, m][None, :]
        out[:, i] = mono @ gcoef[i]
    return out


def em_hitting_chunk(
    start,
    dmat,
    bmat,
    sigma,
    gcoef,
    gpow,
    eps,
    dt,
    n_steps_max,
    center,
    radius,
    tdims,
    s_target,
    abort_radius,
    seed,
    path_lo,
    path_hi,
    refine,
    bridge,
    out_t,
    out_status,
    out_z,
):
    """Vectorized twin of the compiled Euler-Maruyama hitting-time kernel."""
    start = np.asarray(start, dtype=np.float64)
    d = start.shape[0]
    n = int(path_hi - path_lo)
    if n <= 0:
        return
    tdims = np.asarray(tdims, dtype=np.int64)
    center = np.asarray(center, dtype=np.float64)
    amp = np.sqrt(2.0 * eps * dt)
    inv_sqrt_r = 1.0 / np.sqrt(float(refine))
    r2 = radius * radius

    paths = np.arange(path_lo, path_hi)
    rn = RngVec(seed, paths, 0)
    ru = RngVec(seed, paths, 1)
    z = np.tile(start, (n, 1))
    ids = np.arange(n)

    diff = z[:, tdims] - center
    dist2 = np.einsum("ij,ij->i", diff, diff)
    inside = dist2 <= r2
    out_t[:] = n_steps_max * dt
    out_status[:] = 1
    out_t[inside] = 0.0
    out_status[inside] = 0
    out_z[:] = z
    dist_old = np.sqrt(dist2)

    keep = ~inside
    z, ids, dist_old = z[keep], ids[keep], dist_old[keep]
    rn.compress(keep)
    ru.compress(keep)

    k = 0
    while ids.size and k < n_steps_max:
        g = _poly_grad(z, gcoef, gpow)
        xi = np.zeros_like(z)
        for _ in range(refine):
            for i in range(d):
                xi[:, i] += rn.normal()
        zn = z + (g @ dmat.T + z @ bmat.T) * dt + (amp * inv_sqrt_r) * (xi @ sigma.T)
        k += 1
        done = np.zeros(ids.size, dtype=bool)

        diverged = np.any(np.abs(zn) > abort_radius, axis=1)
        if diverged.any():
            out_t[ids[diverged]] = k * dt
            out_status[ids[diverged]] = 2
            out_z[ids[diverged]] = zn[diverged]
            done |= diverged

        diff = zn[:, tdims] - center
        dist2 = np.einsum("ij,ij->i", diff, diff)
        dist_new = np.sqrt(dist2)
        hit = (dist2 <= r2) & ~done
        if bridge:
            cand = ~hit & ~done
            nvec = 0.5 * (z[:, tdims] + zn[:, tdims]) - center
            nn = np.einsum("ij,ij->i", nvec, nvec)
            quad = np.einsum("ij,jk,ik->i", nvec, s_target, nvec)
            with np.errstate(divide="ignore", invalid="ignore"):
                var = np.where(nn > 0.0, 2.0 * eps * quad / np.where(nn > 0, nn, 1.0), 0.0)
                expo = 2.0 * (dist_old - radius) * (dist_new - radius) / (var * dt)
            cand &= (var > 0.0) & (expo <= BRIDGE_CUTOFF)
            if cand.any():
                idx = np.nonzero(cand)[0]
                u = ru.uniform(idx)
                crossed = u < np.exp(-expo[idx])
                hit[idx[crossed]] = True
        if hit.any():
            out_t[ids[hit]] = k * dt
            out_status[ids[hit]] = 0
            out_z[ids[hit]] = zn[hit]
            done |= hit

        z = zn
        dist_old = dist_new
        if done.any():
            keep = ~done
            z, ids, dist_old = z[keep], ids[keep], dist_old[keep]
            rn.compress(keep)
            ru.compress(keep)
    if ids.size:
        out_z[ids] = z


def minimax_dijkstra(values, shape, start, target, offsets):
    """Bottleneck shortest path on a lattice (heap ordered by key, then index).

    Returns ``(height, end_node, pred)``; ``end_node`` is -1 when no target
    node is reachable.
    """
    values = np.asarray(values, dtype=np.float64)
    shape = tuple(int(s) for s in shape)
    n = values.size
    best = np.full(n, np.inf)
    pred = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    offsets = [tuple(int(c) for c in o) for o in np.asarray(offsets)]
    start = int(start)
    best[start] = values[start]
    heap = [(values[start], start)]
    while heap:
        key, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if target[u]:
            return key, u, pred
        coord = np.unravel_index(u, shape)
        for off in offsets:
            c = [coord[a] + off[a] for a in range(len(shape))]
            if any(ci < 0 or ci >= si for ci, si in zip(c, shape)):
                continue
            v = int(np.ravel_multi_index(c, shape))
            if done[v]:
                continue
            nk = key if key >= values[v] else values[v]
            if nk < best[v]:
                best[v] = nk
                pred[v] = u
                heapq.heappush(heap, (nk, v))
    return np.inf, -1, pred
