"""Compiled inner loops for isolation trees."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def grow_tree(X, uniforms):
    """Grow one isolation tree to full depth on the rows of ``X``.

    Splits pick a dimension uniformly among those with nonzero spread in the
    node, then a cut uniformly in [min, max) of that dimension; rows with
    value <= cut go left. Nodes stop at one row or zero spread. ``uniforms``
    supplies the random draws, two per internal node, consumed in depth-first
    order.
    """
    m, d = X.shape
    cap = 2 * m - 1
    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    depth = np.zeros(cap, np.int32)
    size = np.zeros(cap, np.int32)

    order = np.arange(m)
    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    lo = np.empty(d)
    hi = np.empty(d)

    size[0] = m
    n_nodes = 1
    sp = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = m
    sp = 1
    ui = 0
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        a = st_lo[sp]
        b = st_hi[sp]
        if b - a <= 1:
            continue
        for j in range(d):
            lo[j] = X[order[a], j]
            hi[j] = lo[j]
        for i in range(a + 1, b):
            r = order[i]
            for j in range(d):
                v = X[r, j]
                if v < lo[j]:
                    lo[j] = v
                elif v > hi[j]:
                    hi[j] = v
        n_spread = 0
        for j in range(d):
            if hi[j] > lo[j]:
                n_spread += 1
        if n_spread == 0:
            continue

        k = int(uniforms[ui] * n_spread)
        ui += 1
        if k >= n_spread:
            k = n_spread - 1
        f = -1
        for j in range(d):
            if hi[j] > lo[j]:
                if k == 0:
                    f = j
                    break
                k -= 1
        cut = lo[f] + uniforms[ui] * (hi[f] - lo[f])
        ui += 1
        if cut >= hi[f]:
            cut = np.nextafter(hi[f], lo[f])

        i = a
        e = b - 1
        while i <= e:
            if X[order[i], f] <= cut:
                i += 1
            else:
                tmp = order[i]
                order[i] = order[e]
                order[e] = tmp
                e -= 1
        mid = i

        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[node] = f
        threshold[node] = cut
        left[node] = lc
        right[node] = rc
        depth[lc] = depth[node] + 1
        depth[rc] = depth[node] + 1
        size[lc] = mid - a
        size[rc] = b - mid

        st_node[sp] = rc
        st_lo[sp] = mid
        st_hi[sp] = b
        sp += 1
        st_node[sp] = lc
        st_lo[sp] = a
        st_hi[sp] = mid
        sp += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        depth[:n_nodes].copy(),
        size[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def path_sums(X, feature, threshold, left, right, depth, roots, skip, use_mask):
    """Sum of leaf depths over trees for each row of ``X``.

    With ``use_mask`` set, tree ``t`` is skipped for row ``i`` when
    ``skip[t, i]`` is true. Returns (sum of depths, number of trees used).
    """
    n = X.shape[0]
    n_trees = roots.shape[0]
    total = np.zeros(n, np.float64)
    used = np.zeros(n, np.int64)
    # Tree-major order keeps one tree's nodes hot in cache across all rows.
    for t in range(n_trees):
        root = roots[t]
        for i in range(n):
            if use_mask and skip[t, i]:
                continue
            node = root
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            total[i] += depth[node]
            used[i] += 1
    return total, used
