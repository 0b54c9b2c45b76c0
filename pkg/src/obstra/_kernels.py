"""Compiled hot loops: DTW, nDTW, and layered-graph beam search.

Everything here operates on flat numpy arrays owned by the index; no Python
objects cross the boundary.  All accumulation is strict IEEE float64 (no
fast-math), so distances are bit-reproducible across runs and match scalar
oracles exactly.
"""

import math

import numpy as np
from numba import njit

jitkw = dict(cache=True, nogil=True)


@njit(**jitkw)
def _dtw_core(a, b, prev, curr):
    """Rolling two-row DTW DP; prev/curr are caller-owned scratch rows.

    The cumulative base row/column is the l=1 / h=1 base case of the
    recurrence.  Scratch rows avoid per-call allocation in search loops.
    """
    la = a.shape[0]
    lb = b.shape[0]
    run = 0.0
    for j in range(lb):
        dx = a[0, 0] - b[j, 0]
        dy = a[0, 1] - b[j, 1]
        d = math.sqrt(dx * dx + dy * dy)
        if j == 0:
            run = d
        else:
            run = prev[j - 1] + d
        prev[j] = run
    for i in range(1, la):
        for j in range(lb):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            d = math.sqrt(dx * dx + dy * dy)
            if j == 0:
                best = prev[0]
            else:
                best = prev[j]
                if prev[j - 1] < best:
                    best = prev[j - 1]
                if curr[j - 1] < best:
                    best = curr[j - 1]
            curr[j] = d + best
        prev, curr = curr, prev
    return prev[lb - 1]


@njit(**jitkw)
def dtw_pair(a, b):
    """Dynamic-time-warping cost between two (l, 2) point sequences."""
    lb = b.shape[0]
    prev = np.empty(lb, np.float64)
    curr = np.empty(lb, np.float64)
    return _dtw_core(a, b, prev, curr)


@njit(**jitkw)
def path_len(a):
    """Sum of consecutive segment lengths of an (l, 2) point sequence."""
    s = 0.0
    for i in range(a.shape[0] - 1):
        dx = a[i + 1, 0] - a[i, 0]
        dy = a[i + 1, 1] - a[i, 1]
        s += math.sqrt(dx * dx + dy * dy)
    return s


@njit(**jitkw)
def _ndtw_core(a, pa, b, pb, prev, curr):
    if pa <= 0.0 or pb <= 0.0:
        return np.inf
    return _dtw_core(a, b, prev, curr) / (math.sqrt(pa) * math.sqrt(pb))


@njit(**jitkw)
def ndtw_pair(a, pa, b, pb):
    """Normalized DTW; +inf when either window is stationary (zero path)."""
    if pa <= 0.0 or pb <= 0.0:
        return np.inf
    return dtw_pair(a, b) / (math.sqrt(pa) * math.sqrt(pb))


@njit(**jitkw)
def ndtw_to_all(q, qp, data, plens, out):
    """nDTW from one window to every stored window (exact-scan oracle)."""
    w = data.shape[1]
    prev = np.empty(w, np.float64)
    curr = np.empty(w, np.float64)
    for i in range(data.shape[0]):
        out[i] = _ndtw_core(q, qp, data[i], plens[i], prev, curr)


# ---------------------------------------------------------------------------
# array heaps (parallel dist/id arrays, size returned to the caller)

@njit(**jitkw)
def _min_push(hd, hi, size, d, idx):
    pos = size
    hd[pos] = d
    hi[pos] = idx
    while pos > 0:
        par = (pos - 1) >> 1
        if hd[par] > hd[pos]:
            hd[par], hd[pos] = hd[pos], hd[par]
            hi[par], hi[pos] = hi[pos], hi[par]
            pos = par
        else:
            break
    return size + 1


@njit(**jitkw)
def _min_pop(hd, hi, size):
    d = hd[0]
    idx = hi[0]
    size -= 1
    hd[0] = hd[size]
    hi[0] = hi[size]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        child = left
        right = left + 1
        if right < size and hd[right] < hd[left]:
            child = right
        if hd[child] < hd[pos]:
            hd[child], hd[pos] = hd[pos], hd[child]
            hi[child], hi[pos] = hi[pos], hi[child]
            pos = child
        else:
            break
    return d, idx, size


@njit(**jitkw)
def _max_push(hd, hi, size, d, idx):
    pos = size
    hd[pos] = d
    hi[pos] = idx
    while pos > 0:
        par = (pos - 1) >> 1
        if hd[par] < hd[pos]:
            hd[par], hd[pos] = hd[pos], hd[par]
            hi[par], hi[pos] = hi[pos], hi[par]
            pos = par
        else:
            break
    return size + 1


@njit(**jitkw)
def _max_replace_root(hd, hi, size, d, idx):
    hd[0] = d
    hi[0] = idx
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        child = left
        right = left + 1
        if right < size and hd[right] > hd[left]:
            child = right
        if hd[child] > hd[pos]:
            hd[child], hd[pos] = hd[pos], hd[child]
            hi[child], hi[pos] = hi[pos], hi[child]
            pos = child
        else:
            break


@njit(**jitkw)
def _arg_max(a, n):
    best = 0
    for j in range(1, n):
        if a[j] > a[best]:
            best = j
    return best


# ---------------------------------------------------------------------------
# graph traversal

@njit(**jitkw)
def greedy_layer(q, qp, data, plens, adj, deg, start_id, start_d,
                 dp_a, dp_b, evals):
    """Hill-descend one layer: hop to the closest neighbor until a local min."""
    cur = start_id
    curd = start_d
    n_eval = 0
    while True:
        improved = False
        for jj in range(deg[cur]):
            e = adj[cur, jj]
            de = _ndtw_core(q, qp, data[e], plens[e], dp_a, dp_b)
            n_eval += 1
            if de < curd:
                curd = de
                cur = e
                improved = True
        if not improved:
            evals[0] += n_eval
            return cur, curd


@njit(**jitkw)
def search_plain(q, qp, data, plens, adj, deg, entry_id, entry_d, ef,
                 visited, epoch, cd, ci, rd, ri, dp_a, dp_b, evals):
    """Beam search over one layer; keeps the ef closest nodes found.

    Results land in rd/ri[:rsize] in max-heap order (unsorted).  cd/ci are
    min-heap scratch sized >= node count; visited is an epoch-stamp array.
    """
    visited[entry_id] = epoch
    csize = _min_push(cd, ci, 0, entry_d, entry_id)
    rsize = _max_push(rd, ri, 0, entry_d, entry_id)
    n_eval = 0
    while csize > 0:
        d, c, csize = _min_pop(cd, ci, csize)
        if rsize == ef and d > rd[0]:
            break
        for jj in range(deg[c]):
            e = adj[c, jj]
            if visited[e] == epoch:
                continue
            visited[e] = epoch
            de = _ndtw_core(q, qp, data[e], plens[e], dp_a, dp_b)
            n_eval += 1
            if rsize < ef:
                csize = _min_push(cd, ci, csize, de, e)
                rsize = _max_push(rd, ri, rsize, de, e)
            elif de < rd[0]:
                csize = _min_push(cd, ci, csize, de, e)
                _max_replace_root(rd, ri, rsize, de, e)
    evals[0] += n_eval
    return rsize


@njit(**jitkw)
def search_distinct(q, qp, data, plens, parents, exclude_parent,
                    adj, deg, entry_id, entry_d, ef,
                    visited, epoch, cd, ci, rd, ri, dp_a, dp_b, evals):
    """Beam search whose result set keeps at most one window per parent.

    The per-parent filter applies only to the result set: traversal still
    expands through filtered nodes, so reachability matches search_plain.
    A node whose parent is exclude_parent is never admitted.  The stop
    bound uses the filtered set's worst distance once it holds ef distinct
    parents; callers must cap ef at the number of admissible parents.
    """
    visited[entry_id] = epoch
    csize = _min_push(cd, ci, 0, entry_d, entry_id)
    rsize = 0
    worst = np.inf
    if parents[entry_id] != exclude_parent:
        rd[0] = entry_d
        ri[0] = entry_id
        rsize = 1
        if rsize == ef:
            worst = entry_d
    n_eval = 0
    while csize > 0:
        d, c, csize = _min_pop(cd, ci, csize)
        if rsize == ef and d > worst:
            break
        for jj in range(deg[c]):
            e = adj[c, jj]
            if visited[e] == epoch:
                continue
            visited[e] = epoch
            de = _ndtw_core(q, qp, data[e], plens[e], dp_a, dp_b)
            n_eval += 1
            if rsize == ef and de >= worst:
                continue
            csize = _min_push(cd, ci, csize, de, e)
            pe = parents[e]
            if pe == exclude_parent:
                continue
            slot = -1
            for j in range(rsize):
                if parents[ri[j]] == pe:
                    slot = j
                    break
            if slot >= 0:
                if de < rd[slot]:
                    old = rd[slot]
                    rd[slot] = de
                    ri[slot] = e
                    if rsize == ef and old == worst:
                        worst = rd[_arg_max(rd, rsize)]
            elif rsize < ef:
                rd[rsize] = de
                ri[rsize] = e
                rsize += 1
                if rsize == ef:
                    worst = rd[_arg_max(rd, rsize)]
            else:
                wslot = _arg_max(rd, rsize)
                rd[wslot] = de
                ri[wslot] = e
                worst = rd[_arg_max(rd, rsize)]
    evals[0] += n_eval
    return rsize


# ---------------------------------------------------------------------------
# construction

@njit(**jitkw)
def select_heuristic(data, plens, cand_ids, cand_dists, n_cand, m,
                     out_ids, dp_a, dp_b, evals):
    """Diversity-pruning neighbor selection.

    Walk candidates by ascending distance to the new node; keep c unless
    some already-kept r is closer to c than c is to the new node.  Pruned
    candidates backfill remaining slots in ascending order.
    """
    order = np.argsort(cand_dists[:n_cand])
    pruned = np.empty(n_cand, np.int64)
    n_pruned = 0
    kept = 0
    n_eval = 0
    for oi in range(n_cand):
        c = cand_ids[order[oi]]
        dq = cand_dists[order[oi]]
        good = True
        for r in range(kept):
            o = out_ids[r]
            dr = _ndtw_core(data[c], plens[c], data[o], plens[o], dp_a, dp_b)
            n_eval += 1
            if dr < dq:
                good = False
                break
        if good:
            out_ids[kept] = c
            kept += 1
            if kept == m:
                break
        else:
            pruned[n_pruned] = c
            n_pruned += 1
    j = 0
    while kept < m and j < n_pruned:
        out_ids[kept] = pruned[j]
        kept += 1
        j += 1
    evals[0] += n_eval
    return kept


@njit(**jitkw)
def shrink_neighbors(data, plens, node, adj, deg, cap, dp_a, dp_b, evals):
    """Re-select node's over-full adjacency down to cap with the heuristic."""
    n = deg[node]
    ids = np.empty(n, np.int64)
    ds = np.empty(n, np.float64)
    for j in range(n):
        e = adj[node, j]
        ids[j] = e
        ds[j] = _ndtw_core(data[node], plens[node], data[e], plens[e],
                           dp_a, dp_b)
    evals[0] += n
    out = np.empty(cap, np.int64)
    kept = select_heuristic(data, plens, ids, ds, n, cap, out, dp_a, dp_b,
                            evals)
    for j in range(kept):
        adj[node, j] = out[j]
    deg[node] = kept


@njit(**jitkw)
def connect_node(data, plens, node, sel_ids, n_sel, adj, deg, cap,
                 dp_a, dp_b, evals):
    """Wire a fresh node to its selected neighbors with reverse links.

    Reverse lists may temporarily exceed cap by one slot and are shrunk
    back with the selection heuristic (adjacency rows are cap+1 wide).
    """
    for j in range(n_sel):
        adj[node, j] = sel_ids[j]
    deg[node] = n_sel
    for j in range(n_sel):
        nb = sel_ids[j]
        dn = deg[nb]
        adj[nb, dn] = node
        deg[nb] = dn + 1
        if deg[nb] > cap:
            shrink_neighbors(data, plens, nb, adj, deg, cap, dp_a, dp_b,
                             evals)
