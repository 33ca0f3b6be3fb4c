# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_kernels_py``.

Same signatures and the same floating point evaluation order, so the two
backends return bit-identical results on identical count tables.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"

ctypedef cnp.int64_t i64


cdef inline double _term(double nl, double sl, double nb, double sb) nogil:
    cdef double ybar = sb / nb
    cdef double v = ybar * (1.0 - ybar)
    cdef double d = sl - nl * ybar
    cdef double num = d * d
    cdef double den = v * nl * (nb - nl) / (nb - 1.0)
    if den > 0.0:
        return num / den
    return 0.0


def best_ordered_cut(n_in, s_in, Py_ssize_t min_leaf):
    cdef i64[:, ::1] n = np.ascontiguousarray(n_in, dtype=np.int64)
    cdef i64[:, ::1] s = np.ascontiguousarray(s_in, dtype=np.int64)
    cdef Py_ssize_t g = n.shape[0], nblk = n.shape[1], k, b
    if g < 2:
        return -1, 0.0
    cdef i64[::1] nb = np.zeros(nblk, dtype=np.int64)
    cdef i64[::1] sb = np.zeros(nblk, dtype=np.int64)
    cdef i64[::1] cn = np.zeros(nblk, dtype=np.int64)
    cdef i64[::1] cs = np.zeros(nblk, dtype=np.int64)
    cdef i64 total = 0, left
    for k in range(g):
        for b in range(nblk):
            nb[b] += n[k, b]
            sb[b] += s[k, b]
    for b in range(nblk):
        total += nb[b]
    cdef Py_ssize_t best_k = -1
    cdef double best = -1.0, stat
    for k in range(g - 1):
        left = 0
        for b in range(nblk):
            cn[b] += n[k, b]
            cs[b] += s[k, b]
            left += cn[b]
        if left < min_leaf or total - left < min_leaf:
            continue
        stat = _term(<double>cn[0], <double>cs[0], <double>nb[0], <double>sb[0])
        for b in range(1, nblk):
            stat = stat + _term(<double>cn[b], <double>cs[b], <double>nb[b], <double>sb[b])
        if stat > best:
            best = stat
            best_k = k
    if best_k < 0:
        return -1, 0.0
    return best_k, best


cdef inline int _popcount(long long x) nogil:
    cdef int c = 0
    while x:
        c += x & 1
        x >>= 1
    return c


cdef inline bint _key_less(long long a, long long b, int g) nogil:
    """Lexicographic comparison of the group index lists of masks a and b,
    after the group counts (compared by the caller) are equal."""
    cdef int i
    cdef long long ba, bb
    ba = a
    bb = b
    # walk the set bits of both masks in increasing order
    cdef int ia = 0, ib = 0
    while True:
        while ia < g and not ((ba >> ia) & 1):
            ia += 1
        while ib < g and not ((bb >> ib) & 1):
            ib += 1
        if ia >= g or ib >= g:
            return ia >= g and ib < g
        if ia != ib:
            return ia < ib
        ia += 1
        ib += 1


def best_subset(n_in, s_in, Py_ssize_t min_leaf):
    cdef i64[:, ::1] n = np.ascontiguousarray(n_in, dtype=np.int64)
    cdef i64[:, ::1] s = np.ascontiguousarray(s_in, dtype=np.int64)
    cdef Py_ssize_t g = n.shape[0], nblk = n.shape[1], i, b
    if g < 2:
        return 0, 0.0
    cdef i64[::1] nb = np.zeros(nblk, dtype=np.int64)
    cdef i64[::1] sb = np.zeros(nblk, dtype=np.int64)
    cdef i64[::1] nl = np.zeros(nblk, dtype=np.int64)
    cdef i64[::1] sl = np.zeros(nblk, dtype=np.int64)
    cdef i64 total = 0, left
    for i in range(g):
        for b in range(nblk):
            nb[b] += n[i, b]
            sb[b] += s[i, b]
    for b in range(nblk):
        total += nb[b]
    cdef long long full = (1 << g) - 1, raw, mask, other
    cdef long long best_mask = 0
    cdef int cm, co, best_count = 0
    cdef bint found = False
    cdef double best = -1.0, stat
    for raw in range(1, 1 << (g - 1)):
        mask = raw
        other = full ^ raw
        cm = _popcount(mask)
        co = g - cm
        if co < cm or (co == cm and (other & 1)):
            mask = other
            cm = co
        left = 0
        for b in range(nblk):
            nl[b] = 0
            sl[b] = 0
        for i in range(g):
            if (mask >> i) & 1:
                for b in range(nblk):
                    nl[b] += n[i, b]
                    sl[b] += s[i, b]
        for b in range(nblk):
            left += nl[b]
        if left < min_leaf or total - left < min_leaf:
            continue
        stat = _term(<double>nl[0], <double>sl[0], <double>nb[0], <double>sb[0])
        for b in range(1, nblk):
            stat = stat + _term(<double>nl[b], <double>sl[b], <double>nb[b], <double>sb[b])
        if (not found) or stat > best or (stat == best and (
                cm < best_count or (cm == best_count and _key_less(mask, best_mask, g)))):
            found = True
            best = stat
            best_mask = mask
            best_count = cm
    if not found:
        return 0, 0.0
    return int(best_mask), best


def quadratic_stat(n_in, s_in):
    cdef i64[:, ::1] n = np.ascontiguousarray(n_in, dtype=np.int64)
    cdef i64[:, ::1] s = np.ascontiguousarray(s_in, dtype=np.int64)
    cdef Py_ssize_t g = n.shape[0], nblk = n.shape[1], i, b
    cdef double stat = 0.0, x2, ybar, v, d, ng
    cdef long df = 0
    cdef i64 nbk, sbk
    cdef int k
    for b in range(nblk):
        nbk = 0
        sbk = 0
        k = 0
        for i in range(g):
            nbk += n[i, b]
            sbk += s[i, b]
            if n[i, b] > 0:
                k += 1
        if nbk < 2 or sbk == 0 or sbk == nbk or k < 2:
            continue
        ybar = <double>sbk / <double>nbk
        v = ybar * (1.0 - ybar)
        x2 = 0.0
        for i in range(g):
            if n[i, b] == 0:
                continue
            ng = <double>n[i, b]
            d = <double>s[i, b] - ng * ybar
            x2 += d * d / (ng * v)
        stat += (nbk - 1.0) / nbk * x2
        df += k - 1
    return stat, int(df)


ctypedef unsigned long long u64


cdef inline u64 _splitmix64(u64 x) nogil:
    cdef u64 z = x + <u64>0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * <u64>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <u64>0x94D049BB133111EBULL
    return z ^ (z >> 31)


def block_permutations(y_in, block_in, Py_ssize_t n_blocks, Py_ssize_t n_perm, u64 seed):
    cdef i64[::1] y = np.ascontiguousarray(y_in, dtype=np.int64)
    cdef i64[::1] block = np.ascontiguousarray(block_in, dtype=np.int64)
    cdef Py_ssize_t rows = y.shape[0]
    out_arr = np.empty((n_perm, rows), dtype=np.int64)
    cdef i64[:, ::1] out = out_arr
    cdef i64[::1] idx = np.empty(rows, dtype=np.int64)
    cdef Py_ssize_t r, i, b, m, j, a, c
    cdef i64 tmp
    cdef u64 base
    with nogil:
        for r in range(n_perm):
            for i in range(rows):
                out[r, i] = y[i]
            base = seed + <u64>r * <u64>rows
            for b in range(n_blocks):
                m = 0
                for i in range(rows):
                    if block[i] == b:
                        idx[m] = i
                        m += 1
                for i in range(m - 1, 0, -1):
                    j = <Py_ssize_t>(_splitmix64(base + <u64>idx[i]) % <u64>(i + 1))
                    a = idx[i]
                    c = idx[j]
                    tmp = out[r, a]
                    out[r, a] = out[r, c]
                    out[r, c] = tmp
    return out_arr


def mc_exceed(codes_in, Py_ssize_t n_groups, block_in, Py_ssize_t n_blocks, y_in,
              Py_ssize_t n_perm, u64 seed, double observed):
    cdef i64[::1] codes = np.ascontiguousarray(codes_in, dtype=np.int64)
    cdef i64[::1] block = np.ascontiguousarray(block_in, dtype=np.int64)
    cdef i64[::1] y = np.ascontiguousarray(y_in, dtype=np.int64)
    cdef Py_ssize_t rows = codes.shape[0], r, i, g, b, cell, m, j, a, c
    cdef Py_ssize_t ncell = n_groups * n_blocks
    cdef i64[::1] n = np.zeros(ncell, dtype=np.int64)
    cdef i64[::1] sums = np.zeros(ncell, dtype=np.int64)
    cdef i64[::1] nb = np.zeros(n_blocks, dtype=np.int64)
    cdef i64[::1] sb = np.zeros(n_blocks, dtype=np.int64)
    cdef i64[::1] kb = np.zeros(n_blocks, dtype=np.int64)
    cdef i64[::1] work = np.empty(rows, dtype=np.int64)
    # positions of each block, concatenated; starts[b]..starts[b+1]
    cdef i64[::1] order = np.empty(rows, dtype=np.int64)
    cdef i64[::1] starts = np.zeros(n_blocks + 1, dtype=np.int64)
    cdef i64 tmp
    cdef u64 base
    for i in range(rows):
        n[block[i] * n_groups + codes[i]] += 1
        nb[block[i]] += 1
        sb[block[i]] += y[i]
    for b in range(n_blocks):
        starts[b + 1] = starts[b] + nb[b]
        for g in range(n_groups):
            if n[b * n_groups + g] > 0:
                kb[b] += 1
    m = 0
    for b in range(n_blocks):
        for i in range(rows):
            if block[i] == b:
                order[m] = i
                m += 1
    cdef double tol = observed * (1.0 - 1e-10)
    cdef double stat, x2, ybar, v, d, ng
    cdef long count = 0
    with nogil:
        for r in range(n_perm):
            for i in range(rows):
                work[i] = y[i]
            base = seed + <u64>r * <u64>rows
            for b in range(n_blocks):
                for i in range(starts[b + 1] - starts[b] - 1, 0, -1):
                    j = <Py_ssize_t>(_splitmix64(base + <u64>order[starts[b] + i]) % <u64>(i + 1))
                    a = order[starts[b] + i]
                    c = order[starts[b] + j]
                    tmp = work[a]
                    work[a] = work[c]
                    work[c] = tmp
            for cell in range(ncell):
                sums[cell] = 0
            for i in range(rows):
                sums[block[i] * n_groups + codes[i]] += work[i]
            stat = 0.0
            for b in range(n_blocks):
                if nb[b] < 2 or sb[b] == 0 or sb[b] == nb[b] or kb[b] < 2:
                    continue
                ybar = <double>sb[b] / <double>nb[b]
                v = ybar * (1.0 - ybar)
                x2 = 0.0
                for g in range(n_groups):
                    cell = b * n_groups + g
                    if n[cell] == 0:
                        continue
                    ng = <double>n[cell]
                    d = <double>sums[cell] - ng * ybar
                    x2 = x2 + d * d / (ng * v)
                stat = stat + (nb[b] - 1.0) / nb[b] * x2
            if stat >= tol:
                count += 1
    return int(count)
