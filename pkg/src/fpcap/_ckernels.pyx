# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: per-path RNG streams, Euler-Maruyama hitting times and
the bottleneck (minimax) Dijkstra search.

Every function here has a NumPy twin in ``_pykernels`` with the same
signature and the same random streams.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, cos, sin, exp, fabs
from libc.stdint cimport uint64_t, int64_t
from libcpp.queue cimport priority_queue
from libcpp.pair cimport pair

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t SEED_SALT = 0x6A09E667F3BCC909ULL
cdef uint64_t STREAM_SALT = 0xD1B54A32D192ED03ULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0
cdef double TWO_PI = 6.283185307179586
cdef double BRIDGE_CUTOFF = 40.0

cdef struct Rng:
    uint64_t s0
    uint64_t s1
    uint64_t s2
    uint64_t s3
    int has_spare
    double spare


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t rotl(uint64_t x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef inline void rng_init(Rng* r, uint64_t seed, uint64_t path, uint64_t stream) nogil:
    cdef uint64_t k = mix64(seed ^ SEED_SALT)
    k = mix64(k + (path + 1) * GOLDEN)
    k = mix64(k ^ ((stream + 1) * STREAM_SALT))
    k += GOLDEN
    r.s0 = mix64(k)
    k += GOLDEN
    r.s1 = mix64(k)
    k += GOLDEN
    r.s2 = mix64(k)
    k += GOLDEN
    r.s3 = mix64(k)
    r.has_spare = 0
    r.spare = 0.0


cdef inline uint64_t rng_next(Rng* r) nogil:
    cdef uint64_t result = rotl(r.s1 * 5, 7) * 9
    cdef uint64_t t = r.s1 << 17
    r.s2 ^= r.s0
    r.s3 ^= r.s1
    r.s1 ^= r.s2
    r.s0 ^= r.s3
    r.s2 ^= t
    r.s3 = rotl(r.s3, 45)
    return result


cdef inline double rng_uniform(Rng* r) nogil:
    # [0, 1)
    return <double>(rng_next(r) >> 11) * TWO_M53


cdef inline double rng_normal(Rng* r) nogil:
    cdef double u1, u2, rad, th
    if r.has_spare:
        r.has_spare = 0
        return r.spare
    u1 = <double>((rng_next(r) >> 11) + 1) * TWO_M53
    u2 = <double>(rng_next(r) >> 11) * TWO_M53
    rad = sqrt(-2.0 * log(u1))
    th = TWO_PI * u2
    r.spare = rad * sin(th)
    r.has_spare = 1
    return rad * cos(th)


def rng_raw(uint64_t seed, uint64_t path, uint64_t stream, Py_ssize_t n):
    """Return the first ``n`` raw 64-bit outputs of one stream."""
    cdef Rng r
    cdef Py_ssize_t i
    out = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    rng_init(&r, seed, path, stream)
    for i in range(n):
        o[i] = rng_next(&r)
    return out


def rng_normals(uint64_t seed, uint64_t path, uint64_t stream, Py_ssize_t n):
    """Return the first ``n`` standard normals of one stream."""
    cdef Rng r
    cdef Py_ssize_t i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    rng_init(&r, seed, path, stream)
    for i in range(n):
        o[i] = rng_normal(&r)
    return out


cdef inline double ipow(double x, int64_t p) nogil:
    cdef double y = 1.0
    while p > 0:
        y *= x
        p -= 1
    return y


def em_hitting_chunk(
    const double[::1] start,
    const double[:, ::1] dmat,
    const double[:, ::1] bmat,
    const double[:, ::1] sigma,
    const double[:, ::1] gcoef,
    const int64_t[:, :, ::1] gpow,
    double eps,
    double dt,
    int64_t n_steps_max,
    const double[::1] center,
    double radius,
    const int64_t[::1] tdims,
    const double[:, ::1] s_target,
    double abort_radius,
    uint64_t seed,
    int64_t path_lo,
    int64_t path_hi,
    int refine,
    int bridge,
    double[::1] out_t,
    signed char[::1] out_status,
    double[:, ::1] out_z,
):
    """Simulate paths ``path_lo..path_hi-1`` and write hit times, status
    (0 hit, 1 censored, 2 diverged) and final states into the outputs."""
    cdef Py_ssize_t d = start.shape[0]
    cdef Py_ssize_t nt = gcoef.shape[1]
    cdef Py_ssize_t kd = tdims.shape[0]
    cdef Py_ssize_t i, j, m, t, s
    cdef int64_t p, k
    cdef double amp = sqrt(2.0 * eps * dt)
    cdef double inv_sqrt_r = 1.0 / sqrt(<double>refine)
    cdef double acc, term, dist_old, dist_new, d1, d2, nn, var, expo
    cdef double r2 = radius * radius
    cdef Rng rn, ru
    cdef double[::1] z = np.empty(d)
    cdef double[::1] zn = np.empty(d)
    cdef double[::1] g = np.empty(d)
    cdef double[::1] xi = np.empty(d)
    cdef double[::1] nvec = np.empty(kd)
    cdef int status
    cdef int64_t hit_step

    with nogil:
        for p in range(path_lo, path_hi):
            rng_init(&rn, seed, <uint64_t>p, 0)
            rng_init(&ru, seed, <uint64_t>p, 1)
            for i in range(d):
                z[i] = start[i]
            status = 1
            hit_step = n_steps_max
            acc = 0.0
            for m in range(kd):
                term = z[tdims[m]] - center[m]
                acc += term * term
            dist_old = sqrt(acc)
            if acc <= r2:
                status = 0
                hit_step = 0
            k = 0
            while status == 1 and k < n_steps_max:
                # gradient of the polynomial potential
                for i in range(d):
                    acc = 0.0
                    for t in range(nt):
                        if gcoef[i, t] != 0.0:
                            term = gcoef[i, t]
                            for m in range(d):
                                term *= ipow(z[m], gpow[i, t, m])
                            acc += term
                    g[i] = acc
                for i in range(d):
                    xi[i] = 0.0
                for s in range(refine):
                    for i in range(d):
                        xi[i] += rng_normal(&rn)
                for i in range(d):
                    acc = 0.0
                    for j in range(d):
                        acc += dmat[i, j] * g[j] + bmat[i, j] * z[j]
                    term = 0.0
                    for j in range(d):
                        term += sigma[i, j] * xi[j]
                    zn[i] = z[i] + acc * dt + amp * inv_sqrt_r * term
                k += 1
                for i in range(d):
                    if fabs(zn[i]) > abort_radius:
                        status = 2
                if status == 2:
                    hit_step = k
                    for i in range(d):
                        z[i] = zn[i]
                    break
                acc = 0.0
                for m in range(kd):
                    term = zn[tdims[m]] - center[m]
                    acc += term * term
                dist_new = sqrt(acc)
                if acc <= r2:
                    status = 0
                    hit_step = k
                elif bridge:
                    d1 = dist_old - radius
                    d2 = dist_new - radius
                    nn = 0.0
                    for m in range(kd):
                        nvec[m] = 0.5 * (z[tdims[m]] + zn[tdims[m]]) - center[m]
                        nn += nvec[m] * nvec[m]
                    var = 0.0
                    if nn > 0.0:
                        for m in range(kd):
                            for j in range(kd):
                                var += nvec[m] * s_target[m, j] * nvec[j]
                        var = 2.0 * eps * var / nn
                    if var > 0.0:
                        expo = 2.0 * d1 * d2 / (var * dt)
                        if expo <= BRIDGE_CUTOFF:
                            if rng_uniform(&ru) < exp(-expo):
                                status = 0
                                hit_step = k
                for i in range(d):
                    z[i] = zn[i]
                dist_old = dist_new
            out_t[p - path_lo] = <double>hit_step * dt
            out_status[p - path_lo] = <signed char>status
            for i in range(d):
                out_z[p - path_lo, i] = z[i]


def minimax_dijkstra(
    const double[::1] values,
    const int64_t[::1] shape,
    int64_t start,
    const unsigned char[::1] target,
    const int64_t[:, ::1] offsets,
):
    """Bottleneck shortest path on a lattice.

    Returns ``(height, end_node, pred)``; ``end_node`` is -1 when no target
    node is reachable.
    """
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t nd = shape.shape[0]
    cdef Py_ssize_t no = offsets.shape[0]
    cdef Py_ssize_t a, q
    cdef int64_t u, v, rem, c, stride
    cdef double key, nk
    cdef int ok
    best_arr = np.full(n, np.inf)
    pred_arr = np.full(n, -1, dtype=np.int64)
    done_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] best = best_arr
    cdef int64_t[::1] pred = pred_arr
    cdef unsigned char[::1] done = done_arr
    cdef int64_t[::1] strides = np.empty(nd, dtype=np.int64)
    cdef int64_t[::1] coord = np.empty(nd, dtype=np.int64)
    cdef priority_queue[pair[double, int64_t]] heap
    cdef int64_t end_node = -1
    cdef double height = np.inf

    stride = 1
    for a in range(nd - 1, -1, -1):
        strides[a] = stride
        stride *= shape[a]

    with nogil:
        best[start] = values[start]
        heap.push(pair[double, int64_t](-values[start], -start))
        while not heap.empty():
            key = -heap.top().first
            u = -heap.top().second
            heap.pop()
            if done[u]:
                continue
            done[u] = 1
            if target[u]:
                end_node = u
                height = key
                break
            rem = u
            for a in range(nd):
                coord[a] = rem // strides[a]
                rem = rem - coord[a] * strides[a]
            for q in range(no):
                ok = 1
                v = 0
                for a in range(nd):
                    c = coord[a] + offsets[q, a]
                    if c < 0 or c >= shape[a]:
                        ok = 0
                        break
                    v += c * strides[a]
                if not ok or done[v]:
                    continue
                nk = key if key >= values[v] else values[v]
                if nk < best[v]:
                    best[v] = nk
                    pred[v] = u
                    heap.push(pair[double, int64_t](-nk, -v))
    return height, end_node, pred_arr
