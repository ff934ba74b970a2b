"""Exact Wasserstein-1 distance between uniform empirical distributions.

Equal-size sets reduce to a min-cost perfect matching divided by the size.
Unequal sizes are solved by a transportation simplex on integer flows:
marginals are scaled by lcm(|A|, |B|) so every basic solution is integral,
and a Charnes-style perturbation (one extra unit per row, absorbed by the
last column) makes every basic solution non-degenerate, which guarantees
termination of Dantzig pivoting without cycling.  The optimal basis of the
perturbed problem is optimal for the original one, whose flows are then
recovered exactly on the basis tree.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist


@njit(cache=True)
def _tree_flows(bi, bj, a0, b0, m, n):
    """Solve the (possibly degenerate) original flows on a basis tree."""
    nb = bi.shape[0]
    deg = np.zeros(m + n, np.int64)
    for t in range(nb):
        deg[bi[t]] += 1
        deg[m + bj[t]] += 1
    rem_r = a0.copy()
    rem_c = b0.copy()
    flows = np.zeros(nb, np.int64)
    done = np.zeros(nb, np.bool_)
    for _ in range(nb):
        for t in range(nb):
            if done[t]:
                continue
            r = bi[t]
            c = bj[t]
            if deg[r] == 1:
                flows[t] = rem_r[r]
                rem_r[r] = 0
                rem_c[c] -= flows[t]
                deg[r] -= 1
                deg[m + c] -= 1
                done[t] = True
            elif deg[m + c] == 1:
                flows[t] = rem_c[c]
                rem_c[c] = 0
                rem_r[r] -= flows[t]
                deg[r] -= 1
                deg[m + c] -= 1
                done[t] = True
    return flows


@njit(cache=True)
def _simplex(D, a, b, a0, b0, max_pivots):
    m, n = D.shape
    nb = m + n - 1
    bi = np.empty(nb, np.int64)
    bj = np.empty(nb, np.int64)
    bf = np.empty(nb, np.int64)

    # northwest-corner start; non-degenerate marginals fill exactly nb cells
    ar = a.copy()
    bc = b.copy()
    i = 0
    j = 0
    k = 0
    while True:
        f = min(ar[i], bc[j])
        bi[k] = i
        bj[k] = j
        bf[k] = f
        ar[i] -= f
        bc[j] -= f
        k += 1
        if i == m - 1 and j == n - 1:
            break
        if ar[i] == 0 and i < m - 1:
            i += 1
        else:
            j += 1

    u = np.zeros(m)
    v = np.zeros(n)
    row_off = np.zeros(m + 1, np.int64)
    col_off = np.zeros(n + 1, np.int64)
    row_cells = np.empty(nb, np.int64)
    col_cells = np.empty(nb, np.int64)
    stack = np.empty(m + n, np.int64)
    parent = np.empty(m + n, np.int64)
    pedge = np.empty(m + n, np.int64)
    cyc = np.empty(2 * (m + n), np.int64)

    pivots = 0
    while pivots < max_pivots:
        pivots += 1
        # adjacency of the basis tree, CSR per row node and per column node
        for r in range(m + 1):
            row_off[r] = 0
        for c in range(n + 1):
            col_off[c] = 0
        for t in range(nb):
            row_off[bi[t] + 1] += 1
            col_off[bj[t] + 1] += 1
        for r in range(m):
            row_off[r + 1] += row_off[r]
        for c in range(n):
            col_off[c + 1] += col_off[c]
        rfill = row_off[:m].copy()
        cfill = col_off[:n].copy()
        for t in range(nb):
            row_cells[rfill[bi[t]]] = t
            rfill[bi[t]] += 1
            col_cells[cfill[bj[t]]] = t
            cfill[bj[t]] += 1

        # duals on the tree, rooted at row 0
        useen = np.zeros(m, np.bool_)
        vseen = np.zeros(n, np.bool_)
        useen[0] = True
        u[0] = 0.0
        sp = 0
        stack[sp] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            nd = stack[sp]
            if nd < m:
                for q in range(row_off[nd], row_off[nd + 1]):
                    t = row_cells[q]
                    c = bj[t]
                    if not vseen[c]:
                        v[c] = D[nd, c] - u[nd]
                        vseen[c] = True
                        stack[sp] = m + c
                        sp += 1
            else:
                c = nd - m
                for q in range(col_off[c], col_off[c + 1]):
                    t = col_cells[q]
                    r = bi[t]
                    if not useen[r]:
                        u[r] = D[r, c] - v[c]
                        useen[r] = True
                        stack[sp] = r
                        sp += 1

        # entering cell: most negative reduced cost, first occurrence
        best = -1e-10
        ei = -1
        ej = -1
        for r in range(m):
            ur = u[r]
            for c in range(n):
                red = D[r, c] - ur - v[c]
                if red < best:
                    best = red
                    ei = r
                    ej = c
        if ei < 0:
            break

        # path from row ei to column ej through the basis tree
        for nd in range(m + n):
            parent[nd] = -2
        parent[ei] = -1
        sp = 0
        stack[sp] = ei
        sp = 1
        target = m + ej
        while sp > 0:
            sp -= 1
            nd = stack[sp]
            if nd == target:
                break
            if nd < m:
                for q in range(row_off[nd], row_off[nd + 1]):
                    t = row_cells[q]
                    nxt = m + bj[t]
                    if parent[nxt] == -2:
                        parent[nxt] = nd
                        pedge[nxt] = t
                        stack[sp] = nxt
                        sp += 1
            else:
                c = nd - m
                for q in range(col_off[c], col_off[c + 1]):
                    t = col_cells[q]
                    nxt = bi[t]
                    if parent[nxt] == -2:
                        parent[nxt] = nd
                        pedge[nxt] = t
                        stack[sp] = nxt
                        sp += 1

        # cycle edges walking back from the column end; odd-numbered edges
        # (0-based even positions) lose theta, the entering cell gains it
        ncyc = 0
        nd = target
        while parent[nd] != -1:
            cyc[ncyc] = pedge[nd]
            ncyc += 1
            nd = parent[nd]

        theta = np.int64(0)
        leave_pos = -1
        first = True
        for q in range(0, ncyc, 2):
            t = cyc[q]
            if first or bf[t] < theta:
                theta = bf[t]
                leave_pos = q
                first = False
        for q in range(ncyc):
            t = cyc[q]
            if q % 2 == 0:
                bf[t] -= theta
            else:
                bf[t] += theta
        tl = cyc[leave_pos]
        bi[tl] = ei
        bj[tl] = ej
        bf[tl] = theta

    if pivots >= max_pivots:
        return -1.0

    flows = _tree_flows(bi, bj, a0, b0, m, n)
    cost = 0.0
    for t in range(nb):
        cost += flows[t] * D[bi[t], bj[t]]
    return cost


def transport_cost_uniform(dist: np.ndarray) -> float:
    """Exact transport cost between uniform marginals for a cost matrix."""
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    m, n = dist.shape
    if m == 0 or n == 0:
        raise ValueError("transport between empty sets is undefined")
    if m == 1 or n == 1:
        return float(dist.mean())
    if m == n:
        rows, cols = linear_sum_assignment(dist)
        return float(dist[rows, cols].sum() / m)
    lcm = int(np.lcm(m, n))
    scale = np.int64(1) << 20
    a0 = np.full(m, lcm // m, np.int64)
    b0 = np.full(n, lcm // n, np.int64)
    a = a0 * scale + 1
    b = b0 * scale
    b[-1] += m
    cost = _simplex(dist, a, b, a0, b0, 400 * (m + n))
    if cost < 0:  # pivot cap; fall back to the LP solver
        from scipy.optimize import linprog
        import scipy.sparse as sp

        rows = np.repeat(np.arange(m), n)
        cols = np.tile(np.arange(n), m) + m
        idx = np.arange(m * n)
        mat = sp.csr_matrix(
            (np.ones(2 * m * n), (np.concatenate([rows, cols]), np.concatenate([idx, idx]))),
            shape=(m + n, m * n),
        )
        beq = np.concatenate([np.full(m, 1.0 / m), np.full(n, 1.0 / n)])
        res = linprog(dist.ravel(), A_eq=mat, b_eq=beq, bounds=(0, None), method="highs")
        return float(res.fun)
    return float(cost / lcm)


def wasserstein1(set_a: np.ndarray, set_b: np.ndarray) -> float:
    """Wasserstein-1 distance between two feature sets.

    Sets are treated as uniform empirical distributions with Euclidean
    ground cost; the optimum is exact.
    """
    a = np.atleast_2d(np.asarray(set_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(set_b, dtype=np.float64))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("wasserstein1 needs two non-empty sets")
    return transport_cost_uniform(cdist(a, b))
