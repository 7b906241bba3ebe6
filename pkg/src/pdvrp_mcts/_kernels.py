"""Compiled greedy routing kernels used for bulk pricing of assignments."""

import numpy as np
from numba import njit

INF = np.inf


@njit(cache=True)
def nnh_local(dist, nodes, is_pick, pair, mass, capacity, best_order):
    """Multi-start nearest feasible neighbour over one agent's nodes.

    ``nodes`` must be sorted ascending so that a lower local index means a
    lower node id (the tie-break). ``pair[j]`` is the local index of the
    partner node. Writes the best visiting order (local indices) into
    ``best_order`` and returns its cost, or inf if every start dead-ends.
    """
    m = nodes.shape[0]
    # local distances; row/column m is the depot
    dl = np.empty((m + 1, m + 1), np.float64)
    for a in range(m):
        for b in range(m):
            dl[a, b] = dist[nodes[a], nodes[b]]
        dl[a, m] = dist[nodes[a], 0]
        dl[m, a] = dist[0, nodes[a]]
    dl[m, m] = 0.0
    best = INF
    order = np.empty(m, np.int64)
    visited = np.empty(m, np.bool_)
    rem = np.empty(m, np.int64)
    for s in range(m):
        if not is_pick[s] or mass[s] > capacity:
            continue
        visited[:] = False
        visited[s] = True
        order[0] = s
        n_rem = 0
        for j in range(m):
            if j != s:
                rem[n_rem] = j
                n_rem += 1
        load = mass[s]
        cur = s
        cost = dl[m, s]
        ok = True
        for step in range(1, m):
            bk = -1
            bi = m
            bd = INF
            for k in range(n_rem):
                j = rem[k]
                if is_pick[j]:
                    if load + mass[j] > capacity:
                        continue
                elif not visited[pair[j]]:
                    continue
                dj = dl[cur, j]
                if dj < bd or (dj == bd and j < bi):
                    bd = dj
                    bi = j
                    bk = k
            if bk < 0:
                ok = False
                break
            n_rem -= 1
            rem[bk] = rem[n_rem]
            visited[bi] = True
            order[step] = bi
            cost += bd
            cur = bi
            if is_pick[bi]:
                load += mass[bi]
            else:
                load -= mass[bi]
        if not ok:
            continue
        cost += dl[cur, m]
        if cost < best:
            best = cost
            best_order[:] = order
    return best


@njit(cache=True)
def build_local(task_idx, pick, drop, mass):
    """Local arrays for a task subset, nodes sorted ascending."""
    k = task_idx.shape[0]
    raw = np.empty(2 * k, np.int64)
    for i in range(k):
        raw[2 * i] = pick[task_idx[i]]
        raw[2 * i + 1] = drop[task_idx[i]]
    perm = np.argsort(raw, kind="mergesort")
    nodes = raw[perm]
    where = np.empty(2 * k, np.int64)
    for j in range(2 * k):
        where[perm[j]] = j
    is_pick = np.empty(2 * k, np.bool_)
    pair = np.empty(2 * k, np.int64)
    lmass = np.empty(2 * k, np.float64)
    for i in range(k):
        a = where[2 * i]
        b = where[2 * i + 1]
        is_pick[a] = True
        is_pick[b] = False
        pair[a] = b
        pair[b] = a
        lmass[a] = mass[task_idx[i]]
        lmass[b] = mass[task_idx[i]]
    return nodes, is_pick, pair, lmass


@njit(cache=True)
def price_batch(dist, pick, drop, mass, caps, assignments):
    """Total greedy cost of each assignment row; inf where any agent dead-ends."""
    r, n = assignments.shape
    n_agents = caps.shape[0]
    out = np.empty(r, np.float64)
    idx = np.empty(n, np.int64)
    for row in range(r):
        total = 0.0
        for a in range(n_agents):
            k = 0
            for i in range(n):
                if assignments[row, i] == a:
                    idx[k] = i
                    k += 1
            if k == 0:
                continue
            nodes, is_pick, pair, lmass = build_local(idx[:k].copy(), pick, drop, mass)
            order = np.empty(2 * k, np.int64)
            c = nnh_local(dist, nodes, is_pick, pair, lmass, caps[a], order)
            total += c
            if c == INF:
                break
        out[row] = total
    return out
