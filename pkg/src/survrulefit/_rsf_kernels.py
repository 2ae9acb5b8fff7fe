"""Compiled kernels for survival-tree growth (log-rank splitting) and ensemble lookup."""

import numpy as np
from numba import njit


@njit(cache=True)
def _logrank(t_sorted, e_sorted, in_left):
    """Two-sample log-rank chi-square; inputs sorted by ascending time."""
    m = t_sorted.shape[0]
    Y = 0.0
    YL = 0.0
    num = 0.0
    var = 0.0
    i = m - 1
    while i >= 0:
        t = t_sorted[i]
        g = 0.0
        gL = 0.0
        d = 0.0
        dL = 0.0
        j = i
        while j >= 0 and t_sorted[j] == t:
            g += 1.0
            if in_left[j]:
                gL += 1.0
            if e_sorted[j]:
                d += 1.0
                if in_left[j]:
                    dL += 1.0
            j -= 1
        Y += g
        YL += gL
        if d > 0.0 and Y > 1.0:
            frac = YL / Y
            num += dL - frac * d
            var += frac * (1.0 - frac) * (Y - d) / (Y - 1.0) * d
        i = j
    if var <= 1e-300:
        return 0.0
    return num * num / var


@njit(cache=True)
def _choose(rng, n, k):
    """k distinct integers from range(n) by partial Fisher-Yates."""
    pool = np.arange(n)
    k = min(k, n)
    for i in range(k):
        j = i + int(rng.random() * (n - i))
        if j >= n:
            j = n - 1
        tmp = pool[i]
        pool[i] = pool[j]
        pool[j] = tmp
    return pool[:k]


@njit(cache=True)
def grow_tree(X, time, event, boot, mtry, min_node, nsplit, rng):
    """Grow one survival tree on the bootstrap rows ``boot``.

    Returns node arrays (feature, threshold, left, right, leaf) with ``leaf[k] >= 0``
    marking terminal nodes, plus per-leaf Nelson-Aalen cumulative hazards packed as
    (leaf_ptr, leaf_times, leaf_chf).
    """
    n = boot.shape[0]
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    leaf = np.full(cap, -1, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    stop = np.zeros(cap, dtype=np.int64)

    order = boot.copy()
    n_nodes = 1
    start[0] = 0
    stop[0] = n
    stack = np.zeros(cap, dtype=np.int64)
    top = 1
    stack[0] = 0
    n_leaves = 0
    leaf_nodes = np.zeros(cap, dtype=np.int64)

    while top > 0:
        top -= 1
        node = stack[top]
        s = start[node]
        e = stop[node]
        m = e - s
        rows = order[s:e]

        best_stat = 0.0
        best_f = -1
        best_thr = 0.0
        n_ev = 0
        for r in rows:
            n_ev += event[r]
        if m >= 2 * min_node and n_ev > 0:
            tord = np.argsort(time[rows], kind="mergesort")
            srows = rows[tord]
            t_sorted = time[srows]
            e_sorted = event[srows]
            feats = _choose(rng, p, mtry)
            in_left = np.zeros(m, dtype=np.bool_)
            for f in feats:
                v = X[rows, f]
                uniq = np.unique(v)
                nu = uniq.shape[0]
                if nu < 2:
                    continue
                vs = np.sort(v)
                # cum[k]: rows with value <= uniq[k]
                cum = np.searchsorted(vs, uniq, side="right")
                admissible = np.zeros(nu - 1, dtype=np.int64)
                na = 0
                for k in range(nu - 1):
                    if cum[k] >= min_node and m - cum[k] >= min_node:
                        admissible[na] = k
                        na += 1
                if na == 0:
                    continue
                picks = _choose(rng, na, nsplit)
                vsorted_time = X[srows, f]
                for q in picks:
                    k = admissible[q]
                    thr = 0.5 * (uniq[k] + uniq[k + 1])
                    for i in range(m):
                        in_left[i] = vsorted_time[i] <= thr
                    stat = _logrank(t_sorted, e_sorted, in_left)
                    if stat > best_stat:
                        best_stat = stat
                        best_f = f
                        best_thr = thr

        if best_f < 0:
            leaf[node] = n_leaves
            leaf_nodes[n_leaves] = node
            n_leaves += 1
            continue

        # partition rows in place: left block first
        i = s
        j = e - 1
        while i <= j:
            if X[order[i], best_f] <= best_thr:
                i += 1
            else:
                tmp = order[i]
                order[i] = order[j]
                order[j] = tmp
                j -= 1
        feature[node] = best_f
        threshold[node] = best_thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        start[lc] = s
        stop[lc] = i
        start[rc] = i
        stop[rc] = e
        stack[top] = rc
        top += 1
        stack[top] = lc
        top += 1

    # Nelson-Aalen per leaf
    leaf_ptr = np.zeros(n_leaves + 1, dtype=np.int64)
    leaf_times = np.zeros(n)
    leaf_chf = np.zeros(n)
    pos = 0
    for lf in range(n_leaves):
        node = leaf_nodes[lf]
        rows = order[start[node]:stop[node]]
        tord = np.argsort(time[rows], kind="mergesort")
        t_s = time[rows][tord]
        e_s = event[rows][tord]
        m = t_s.shape[0]
        H = 0.0
        i = 0
        while i < m:
            t = t_s[i]
            d = 0.0
            j = i
            while j < m and t_s[j] == t:
                d += e_s[j]
                j += 1
            if d > 0.0:
                H += d / (m - i)
                leaf_times[pos] = t
                leaf_chf[pos] = H
                pos += 1
            i = j
        leaf_ptr[lf + 1] = pos

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        leaf[:n_nodes].copy(),
        leaf_ptr,
        leaf_times[:pos].copy(),
        leaf_chf[:pos].copy(),
    )


@njit(cache=True)
def _lookup(times, chf, lo, hi, t, left_limit):
    # number of jump times <= t (or < t for the left limit) within [lo, hi)
    a = lo
    b = hi
    while a < b:
        mid = (a + b) // 2
        if times[mid] < t or (not left_limit and times[mid] == t):
            a = mid + 1
        else:
            b = mid
    if a == lo:
        return 0.0
    return chf[a - 1]


@njit(cache=True)
def forest_chf(
    node_ptr, feature, threshold, left, right, leaf,
    leaf_base, leaf_ptr, leaf_times, leaf_chf,
    X, t, left_limit, inbag, oob,
):
    """Summed cumulative hazard at per-row times ``t`` and the number of trees used.

    With ``oob`` set, tree b is skipped for row i whenever ``inbag[b, i] > 0``.
    """
    n = X.shape[0]
    n_trees = node_ptr.shape[0] - 1
    total = np.zeros(n)
    used = np.zeros(n, dtype=np.int64)
    for b in range(n_trees):
        base = node_ptr[b]
        lbase = leaf_base[b]
        for i in range(n):
            if oob and inbag[b, i] > 0:
                continue
            k = 0
            while leaf[base + k] < 0:
                if X[i, feature[base + k]] <= threshold[base + k]:
                    k = left[base + k]
                else:
                    k = right[base + k]
            lf = lbase + leaf[base + k]
            total[i] += _lookup(leaf_times, leaf_chf, leaf_ptr[lf], leaf_ptr[lf + 1], t[i], left_limit)
            used[i] += 1
    return total, used
