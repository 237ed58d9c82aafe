# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled hot-loop kernels.

Semantics (including float bit patterns) must match _pure exactly; the pure
module is the reference.  Compiled with -ffp-contract=off so the HMM update
rounds identically to numpy's separate multiply/add.
"""

import numpy as np

cimport numpy as cnp
from cython.operator cimport dereference as deref
from libc.math cimport ceil, sqrt
from libc.stdint cimport int64_t
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector

cnp.import_array()

cdef int64_t KEY_BIAS = 1 << 20
cdef int64_t MUL_Y = 1 << 21
cdef int64_t MUL_X = MUL_Y * MUL_Y
cdef double LIK_EPS = 1e-9


cdef inline int64_t c_pack(int64_t x, int64_t y, int64_t z) noexcept nogil:
    return (x + KEY_BIAS) * MUL_X + (y + KEY_BIAS) * MUL_Y + (z + KEY_BIAS)


cdef inline int64_t c_abs(int64_t v) noexcept nogil:
    return v if v >= 0 else -v


def raycast_line(start, end):
    """Classic integer-error 3D Bresenham walk, endpoints included."""
    cdef int64_t sx, sy, sz, ex, ey, ez
    sx, sy, sz = int(start[0]), int(start[1]), int(start[2])
    ex, ey, ez = int(end[0]), int(end[1]), int(end[2])
    cdef int64_t dx = c_abs(ex - sx), dy = c_abs(ey - sy), dz = c_abs(ez - sz)
    cdef int64_t xs = 1 if ex > sx else -1
    cdef int64_t ys = 1 if ey > sy else -1
    cdef int64_t zs = 1 if ez > sz else -1
    cdef int64_t n = dx if (dx >= dy and dx >= dz) else (dy if dy >= dz else dz)
    out = np.empty((n + 1, 3), dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    cdef int64_t x = sx, y = sy, z = sz, p1, p2, i
    o[0, 0] = x
    o[0, 1] = y
    o[0, 2] = z
    if n == 0:
        return out
    if dx >= dy and dx >= dz:
        p1 = 2 * dy - dx
        p2 = 2 * dz - dx
        for i in range(1, n + 1):
            x += xs
            if p1 >= 0:
                y += ys
                p1 -= 2 * dx
            if p2 >= 0:
                z += zs
                p2 -= 2 * dx
            p1 += 2 * dy
            p2 += 2 * dz
            o[i, 0] = x
            o[i, 1] = y
            o[i, 2] = z
    elif dy >= dz:
        p1 = 2 * dx - dy
        p2 = 2 * dz - dy
        for i in range(1, n + 1):
            y += ys
            if p1 >= 0:
                x += xs
                p1 -= 2 * dy
            if p2 >= 0:
                z += zs
                p2 -= 2 * dy
            p1 += 2 * dx
            p2 += 2 * dz
            o[i, 0] = x
            o[i, 1] = y
            o[i, 2] = z
    else:
        p1 = 2 * dy - dz
        p2 = 2 * dx - dz
        for i in range(1, n + 1):
            z += zs
            if p1 >= 0:
                y += ys
                p1 -= 2 * dz
            if p2 >= 0:
                x += xs
                p2 -= 2 * dz
            p1 += 2 * dy
            p2 += 2 * dx
            o[i, 0] = x
            o[i, 1] = y
            o[i, 2] = z
    return out


cdef int64_t _walk(int64_t sx, int64_t sy, int64_t sz,
                   int64_t ex, int64_t ey, int64_t ez,
                   int64_t cap, int64_t* buf, int64_t pos) noexcept nogil:
    # Emits packed cells for Bresenham steps 1..min(length, cap); start cell
    # excluded.  Must visit the identical cells as raycast_line.
    cdef int64_t dx = c_abs(ex - sx), dy = c_abs(ey - sy), dz = c_abs(ez - sz)
    cdef int64_t xs = 1 if ex > sx else -1
    cdef int64_t ys = 1 if ey > sy else -1
    cdef int64_t zs = 1 if ez > sz else -1
    cdef int64_t x = sx, y = sy, z = sz, p1, p2, i, n
    if dx >= dy and dx >= dz:
        n = dx if dx < cap else cap
        p1 = 2 * dy - dx
        p2 = 2 * dz - dx
        for i in range(n):
            x += xs
            if p1 >= 0:
                y += ys
                p1 -= 2 * dx
            if p2 >= 0:
                z += zs
                p2 -= 2 * dx
            p1 += 2 * dy
            p2 += 2 * dz
            buf[pos] = c_pack(x, y, z)
            pos += 1
    elif dy >= dz:
        n = dy if dy < cap else cap
        p1 = 2 * dx - dy
        p2 = 2 * dz - dy
        for i in range(n):
            y += ys
            if p1 >= 0:
                x += xs
                p1 -= 2 * dy
            if p2 >= 0:
                z += zs
                p2 -= 2 * dy
            p1 += 2 * dx
            p2 += 2 * dz
            buf[pos] = c_pack(x, y, z)
            pos += 1
    else:
        n = dz if dz < cap else cap
        p1 = 2 * dy - dz
        p2 = 2 * dx - dz
        for i in range(n):
            z += zs
            if p1 >= 0:
                y += ys
                p1 -= 2 * dz
            if p2 >= 0:
                x += xs
                p2 -= 2 * dz
            p1 += 2 * dy
            p2 += 2 * dx
            buf[pos] = c_pack(x, y, z)
            pos += 1
    return pos


def trace_rays(sensor_key, hit_keys, cap):
    """Union of truncated rays from the sensor cell to every hit cell,
    sensor cell excluded; sorted unique packed keys."""
    s = np.ascontiguousarray(np.asarray(sensor_key, dtype=np.int64).reshape(3))
    hits = np.ascontiguousarray(np.asarray(hit_keys, dtype=np.int64).reshape(-1, 3))
    cdef int64_t[:, ::1] hv = hits
    cdef int64_t h = hv.shape[0]
    if h == 0:
        return np.empty(0, dtype=np.int64)
    cdef int64_t ccap = <int64_t> cap
    cdef int64_t total = 0, i, dx, dy, dz, n
    cdef int64_t sx = s[0], sy = s[1], sz = s[2]
    with nogil:
        for i in range(h):
            dx = c_abs(hv[i, 0] - sx)
            dy = c_abs(hv[i, 1] - sy)
            dz = c_abs(hv[i, 2] - sz)
            n = dx if (dx >= dy and dx >= dz) else (dy if dy >= dz else dz)
            total += n if n < ccap else ccap
    if total == 0:
        return np.empty(0, dtype=np.int64)
    buf = np.empty(total, dtype=np.int64)
    cdef int64_t[::1] bv = buf
    cdef int64_t pos = 0
    with nogil:
        for i in range(h):
            pos = _walk(sx, sy, sz, hv[i, 0], hv[i, 1], hv[i, 2], ccap, &bv[0], pos)
    return np.unique(buf)


def hmm_batch(double[:, ::1] belief, double[::1] likelihood, cnp.int8_t[::1] latched,
              double[:, ::1] a, double p_min, int64_t k,
              int64_t[::1] last_observed, int64_t[::1] last_change,
              cnp.int8_t[::1] change_kind):
    """In-place HMM filter step over contiguous row arrays; see _pure."""
    cdef int64_t n = belief.shape[0], i
    changed = np.zeros(n, dtype=bool)
    cdef cnp.uint8_t[::1] ch = changed.view(np.uint8)
    cdef double a10 = a[1, 0], a11 = a[1, 1], a12 = a[1, 2]
    cdef double a20 = a[2, 0], a21 = a[2, 1], a22 = a[2, 2]
    cdef double x0, x1, x2, y1, y2, lik, z1, z2, s, b1, b2
    cdef cnp.int8_t old, new
    with nogil:
        for i in range(n):
            x0 = belief[i, 0]
            x1 = belief[i, 1]
            x2 = belief[i, 2]
            y1 = a10 * x0 + a11 * x1 + a12 * x2
            y2 = a20 * x0 + a21 * x1 + a22 * x2
            lik = likelihood[i]
            z1 = lik * y1
            z2 = (1.0 - lik) * y2
            s = z1 + z2
            if s <= 0.0:
                lik = LIK_EPS if lik < LIK_EPS else (1.0 - LIK_EPS if lik > 1.0 - LIK_EPS else lik)
                z1 = lik * y1
                z2 = (1.0 - lik) * y2
                s = z1 + z2
            b1 = z1 / s
            b2 = z2 / s
            belief[i, 0] = 0.0
            belief[i, 1] = b1
            belief[i, 2] = b2
            old = latched[i]
            if b1 > p_min and old != 1:
                new = 1
            elif b2 > p_min and old != 2:
                new = 2
            else:
                new = old
            if new != old:
                if old == 2 and new == 1:
                    change_kind[i] = 1
                elif old == 1 and new == 2:
                    change_kind[i] = 2
                else:
                    change_kind[i] = 0
                last_change[i] = k
                latched[i] = new
                ch[i] = 1
            last_observed[i] = k
    return changed


def neighbor_counts(query_packed, seed_packed, int radius):
    """Seed count within Chebyshev ``radius`` of each unique query key."""
    q = np.ascontiguousarray(query_packed, dtype=np.int64)
    seeds = np.ascontiguousarray(seed_packed, dtype=np.int64)
    cdef int64_t[::1] qv = q
    cdef int64_t[::1] sv = seeds
    cdef int64_t nq = qv.shape[0], ns = sv.shape[0]
    counts = np.zeros(nq, dtype=np.int32)
    if nq == 0 or ns == 0:
        return counts
    cdef cnp.int32_t[::1] cv = counts
    cdef unordered_map[int64_t, int64_t] idx
    cdef vector[int64_t] offs
    cdef int64_t i, dx, dy, dz, key
    cdef int r = radius
    for dx in range(-r, r + 1):
        for dy in range(-r, r + 1):
            for dz in range(-r, r + 1):
                offs.push_back(dx * MUL_X + dy * MUL_Y + dz)
    cdef size_t j, noffs = offs.size()
    cdef unordered_map[int64_t, int64_t].iterator it
    with nogil:
        idx.reserve(<size_t> (2 * nq))
        for i in range(nq):
            idx[qv[i]] = i
        for i in range(ns):
            key = sv[i]
            for j in range(noffs):
                it = idx.find(key + offs[j])
                if it != idx.end():
                    cv[deref(it).second] += 1
    return counts


def edf_distances(query_keys, hit_keys, double delta, double truncation):
    """Truncated EDF over voxel keys via neighbourhood splatting from hits."""
    q = np.ascontiguousarray(np.asarray(query_keys, dtype=np.int64).reshape(-1, 3))
    hits = np.ascontiguousarray(np.asarray(hit_keys, dtype=np.int64).reshape(-1, 3))
    cdef int64_t[:, ::1] query = q
    cdef int64_t[:, ::1] hv = hits
    cdef int64_t m = query.shape[0], h = hv.shape[0]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] ov = out
    if m == 0:
        return out
    cdef int64_t i
    if h == 0:
        out[:] = truncation
        return out
    cdef int64_t d2max = <int64_t> ceil((truncation / delta) * (truncation / delta))
    cdef int rr = <int> ceil(truncation / delta)
    cdef vector[int64_t] off_packed
    cdef vector[int64_t] off_d2
    cdef int64_t dx, dy, dz, d2
    for dx in range(-rr, rr + 1):
        for dy in range(-rr, rr + 1):
            for dz in range(-rr, rr + 1):
                d2 = dx * dx + dy * dy + dz * dz
                if d2 <= d2max:
                    off_packed.push_back(dx * MUL_X + dy * MUL_Y + dz)
                    off_d2.push_back(d2)
    cdef unordered_map[int64_t, int64_t] idx
    best_arr = np.full(m, -1, dtype=np.int64)
    cdef int64_t[::1] best = best_arr
    cdef size_t j, noffs = off_packed.size()
    cdef int64_t key, row
    cdef double v
    cdef unordered_map[int64_t, int64_t].iterator it
    with nogil:
        idx.reserve(<size_t> (2 * m))
        for i in range(m):
            idx[c_pack(query[i, 0], query[i, 1], query[i, 2])] = i
        for i in range(h):
            key = c_pack(hv[i, 0], hv[i, 1], hv[i, 2])
            for j in range(noffs):
                it = idx.find(key + off_packed[j])
                if it != idx.end():
                    row = deref(it).second
                    if best[row] < 0 or off_d2[j] < best[row]:
                        best[row] = off_d2[j]
        for i in range(m):
            if best[i] < 0:
                ov[i] = truncation
            else:
                v = delta * sqrt(<double> best[i])
                ov[i] = v if v < truncation else truncation
    return out


cdef class PackedIndex:
    """Packed voxel key -> row number, backed by a C++ hash map."""

    cdef unordered_map[int64_t, int64_t] _m

    def __len__(self):
        return self._m.size()

    def lookup(self, keys):
        q = np.ascontiguousarray(keys, dtype=np.int64)
        cdef int64_t[::1] qv = q
        cdef int64_t n = qv.shape[0]
        rows = np.full(n, -1, dtype=np.int64)
        cdef int64_t[::1] rv = rows
        cdef int64_t i
        cdef unordered_map[int64_t, int64_t].iterator it
        with nogil:
            for i in range(n):
                it = self._m.find(qv[i])
                if it != self._m.end():
                    rv[i] = deref(it).second
        return rows

    def lookup_or_insert(self, keys, next_row):
        q = np.ascontiguousarray(keys, dtype=np.int64)
        cdef int64_t[::1] qv = q
        cdef int64_t n = qv.shape[0]
        rows = np.empty(n, dtype=np.int64)
        cdef int64_t[::1] rv = rows
        cdef int64_t i, fresh = next_row, n_new = 0
        cdef unordered_map[int64_t, int64_t].iterator it
        with nogil:
            for i in range(n):
                it = self._m.find(qv[i])
                if it != self._m.end():
                    rv[i] = deref(it).second
                else:
                    self._m[qv[i]] = fresh
                    rv[i] = fresh
                    fresh += 1
                    n_new += 1
        return rows, int(n_new)

    def remove(self, keys):
        q = np.ascontiguousarray(keys, dtype=np.int64)
        cdef int64_t[::1] qv = q
        cdef int64_t n = qv.shape[0]
        cdef int64_t i
        with nogil:
            for i in range(n):
                self._m.erase(qv[i])

    def rebuild(self, keys):
        q = np.ascontiguousarray(keys, dtype=np.int64)
        cdef int64_t[::1] qv = q
        cdef int64_t n = qv.shape[0]
        cdef int64_t i
        self._m.clear()
        with nogil:
            self._m.reserve(<size_t> (2 * n))
            for i in range(n):
                self._m[qv[i]] = i
