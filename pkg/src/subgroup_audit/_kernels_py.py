"""Pure numpy implementations of the hot kernels.

Every kernel works on per-group count tables: ``n[g, b]`` rows and ``s[g, b]``
positive outcomes for group ``g`` (a level, a quantile bin or a distinct
value) inside permutation block ``b``.  Counts are integers, so both backends
see exactly the same inputs; floating point expressions are written in the
same order as in ``_kernels.pyx`` to keep results bit-identical.
"""

import numpy as np

BACKEND = "python"


def _block_totals(n, s):
    nb = n.sum(axis=0)
    sb = s.sum(axis=0)
    return nb, sb


def split_stat(nl, sl, nb, sb):
    """Sum over blocks of squared standardized two-sample statistics.

    ``nl``/``sl`` hold left-side counts with shape (..., B).
    """
    nl = np.asarray(nl, dtype=np.float64)
    sl = np.asarray(sl, dtype=np.float64)
    nbf = nb.astype(np.float64)
    ybar = sb / nbf
    v = ybar * (1.0 - ybar)
    d = sl - nl * ybar
    num = d * d
    with np.errstate(divide="ignore", invalid="ignore"):
        den = v * nl * (nbf - nl) / (nbf - 1.0)
        term = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 0.0)
    out = term[..., 0].copy()
    for b in range(1, term.shape[-1]):
        out = out + term[..., b]
    return out


def best_ordered_cut(n, s, min_leaf):
    """Best cut between consecutive ordered groups.

    Returns ``(k, stat)`` where groups ``0..k`` go left, or ``(-1, 0.0)`` when
    no cut leaves ``min_leaf`` rows on both sides.  Ties keep the smallest k.
    """
    n = np.asarray(n, dtype=np.int64)
    s = np.asarray(s, dtype=np.int64)
    g = n.shape[0]
    if g < 2:
        return -1, 0.0
    nb, sb = _block_totals(n, s)
    total = int(nb.sum())
    cn = np.cumsum(n, axis=0)[:-1]
    cs = np.cumsum(s, axis=0)[:-1]
    left = cn.sum(axis=1)
    valid = (left >= min_leaf) & (total - left >= min_leaf)
    if not valid.any():
        return -1, 0.0
    stat = split_stat(cn, cs, nb, sb)
    best_k, best = -1, -1.0
    for k in np.flatnonzero(valid):
        if stat[k] > best:
            best_k, best = int(k), float(stat[k])
    return best_k, best


def best_subset(n, s, min_leaf):
    """Best two-way partition of ``G`` unordered groups by exhaustive search.

    Returns ``(mask, stat)`` where bit ``g`` of ``mask`` marks group ``g`` on
    the left.  The left side is the one with fewer groups (on equal counts, the
    side holding group 0).  Ties in the statistic prefer fewer groups on the
    left, then the lexicographically smallest left group list.  ``(0, 0.0)``
    when no partition respects ``min_leaf``.
    """
    n = np.asarray(n, dtype=np.int64)
    s = np.asarray(s, dtype=np.int64)
    g = n.shape[0]
    if g < 2:
        return 0, 0.0
    nb, sb = _block_totals(n, s)
    total = int(nb.sum())
    full = (1 << g) - 1
    best_mask, best, best_key = 0, -1.0, None
    for raw in range(1, 1 << (g - 1)):
        mask = _orient(raw, g, full)
        bits = [(mask >> i) & 1 for i in range(g)]
        sel = np.array(bits, dtype=bool)
        nl = n[sel].sum(axis=0)
        left_total = int(nl.sum())
        if left_total < min_leaf or total - left_total < min_leaf:
            continue
        sl = s[sel].sum(axis=0)
        stat = float(split_stat(nl[None, :], sl[None, :], nb, sb)[0])
        key = (sum(bits), [i for i in range(g) if bits[i]])
        if stat > best or (stat == best and key < best_key):
            best_mask, best, best_key = mask, stat, key
    if best_key is None:
        return 0, 0.0
    return best_mask, best


def _orient(mask, g, full):
    other = full ^ mask
    cm = bin(mask).count("1")
    co = g - cm
    if co < cm or (co == cm and (other & 1)):
        return other
    return mask


def quadratic_stat(n, s):
    """Permutation quadratic form of the one-hot linear statistic.

    Returns ``(stat, df)``; a block contributes ``(N_b - 1)/N_b`` times its
    Pearson statistic with ``df = groups present - 1``.
    """
    n = np.asarray(n, dtype=np.int64)
    s = np.asarray(s, dtype=np.int64)
    stat = 0.0
    df = 0
    for b in range(n.shape[1]):
        nb = int(n[:, b].sum())
        sb = int(s[:, b].sum())
        if nb < 2 or sb == 0 or sb == nb:
            continue
        present = n[:, b] > 0
        k = int(present.sum())
        if k < 2:
            continue
        ybar = sb / float(nb)
        v = ybar * (1.0 - ybar)
        ng = n[present, b].astype(np.float64)
        d = s[present, b] - ng * ybar
        x2 = 0.0
        for term in (d * d) / (ng * v):
            x2 += term
        stat += (nb - 1.0) / nb * x2
        df += k - 1
    return stat, df


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(x):
    """SplitMix64 finalizer on uint64 arrays (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def block_permutations(y, block, n_blocks, n_perm, seed):
    """``n_perm`` within-block shuffles of ``y`` as rows of an int64 array.

    Fisher-Yates driven by SplitMix64 of ``seed + r * rows + position``;
    the compiled kernel draws the identical stream.
    """
    y = np.asarray(y, dtype=np.int64)
    block = np.asarray(block, dtype=np.int64)
    rows = y.size
    out = np.tile(y, (n_perm, 1))
    r = np.arange(n_perm, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = np.uint64(seed) + r * np.uint64(rows)
    ar = np.arange(n_perm)
    for b in range(n_blocks):
        idx = np.flatnonzero(block == b)
        for i in range(idx.size - 1, 0, -1):
            with np.errstate(over="ignore"):
                u = splitmix64(base + np.uint64(idx[i]))
            j = (u % np.uint64(i + 1)).astype(np.int64)
            src = idx[j]
            a = out[:, idx[i]].copy()
            out[:, idx[i]] = out[ar, src]
            out[ar, src] = a
    return out


def mc_exceed(codes, n_groups, block, n_blocks, y, n_perm, seed, observed):
    """Count within-block permutations of ``y`` whose quadratic statistic
    reaches ``observed`` (relative slack 1e-10 for float noise)."""
    codes = np.asarray(codes, dtype=np.int64)
    block = np.asarray(block, dtype=np.int64)
    y_perms = block_permutations(y, block, n_blocks, n_perm, seed)
    n = np.zeros((n_groups, n_blocks), dtype=np.int64)
    np.add.at(n, (codes, block), 1)
    r = y_perms.shape[0]
    stat = np.zeros(r)
    for b in range(n_blocks):
        nb = int(n[:, b].sum())
        in_b = block == b
        sb = int(y_perms[0, in_b].sum()) if nb else 0
        if nb < 2 or sb == 0 or sb == nb:
            continue
        ybar = sb / float(nb)
        v = ybar * (1.0 - ybar)
        x2 = np.zeros(r)
        k = 0
        for g in range(n_groups):
            if n[g, b] == 0:
                continue
            k += 1
            sg = y_perms[:, in_b & (codes == g)].sum(axis=1)
            ng = float(n[g, b])
            d = sg - ng * ybar
            x2 = x2 + d * d / (ng * v)
        if k < 2:
            continue
        stat = stat + (nb - 1.0) / nb * x2
    tol = observed * (1.0 - 1e-10)
    return int(np.count_nonzero(stat >= tol))
