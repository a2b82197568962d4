"""Exact transportation solver: successive shortest paths with potentials.

Dense complete-bipartite formulation. Supplies and demands are real-valued;
arcs are uncapacitated forward plus flow-backed reverse arcs. Dijkstra runs
on reduced costs with an indexed binary heap and stops at the first active
sink; Johnson potential updates keep reduced costs nonnegative.

Resolution: supplies and demands below 1e-12 * total mass are treated as
exhausted (subtraction drift across ~10^3 augmentations can strand residues
near 1e-14 relative, which must not read as live nodes), and a terminal
audit accepts any leftover supply below 0.5e-9 * total, half the marginal
validation budget. Costs must be nonnegative. Returns -1.0 on failure
(iteration budget or a leftover above the audit tolerance); callers
translate that into an error.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True)
def _sift_up(heap, pos, dist, i):
    node = heap[i]
    dn = dist[node]
    while i > 0:
        parent = (i - 1) >> 1
        pn = heap[parent]
        if dist[pn] <= dn:
            break
        heap[i] = pn
        pos[pn] = i
        i = parent
    heap[i] = node
    pos[node] = i


@njit(cache=True)
def _sift_down(heap, pos, dist, size, i):
    node = heap[i]
    dn = dist[node]
    while True:
        child = 2 * i + 1
        if child >= size:
            break
        right = child + 1
        if right < size and dist[heap[right]] < dist[heap[child]]:
            child = right
        cn = heap[child]
        if dn <= dist[cn]:
            break
        heap[i] = cn
        pos[cn] = i
        i = child
    heap[i] = node
    pos[node] = i


@njit(cache=True)
def _ssp(a, b, C, F, max_aug):
    n = a.shape[0]
    m = b.shape[0]
    V = n + m
    ra = a.copy()
    rb = b.copy()
    pot = np.zeros(V)
    dist = np.empty(V)
    prev = np.empty(V, np.int64)
    heap = np.empty(V, np.int64)
    pos = np.empty(V, np.int64)

    total = 0.0
    for i in range(n):
        total += a[i]
    eps = 1e-14 * max(total, 1e-300)
    eps_live = 1e-12 * max(total, 1e-300)

    aug = 0
    while True:
        any_active = False
        for i in range(n):
            if ra[i] > eps_live:
                any_active = True
                break
        if not any_active:
            break
        if aug >= max_aug:
            return -1.0

        for v in range(V):
            dist[v] = np.inf
            prev[v] = -1
            pos[v] = -1
        size = 0
        for i in range(n):
            if ra[i] > eps_live:
                dist[i] = 0.0
                heap[size] = i
                pos[i] = size
                size += 1

        target = -1
        while size > 0:
            u = heap[0]
            size -= 1
            last = heap[size]
            heap[0] = last
            pos[last] = 0
            if size > 0:
                _sift_down(heap, pos, dist, size, 0)
            pos[u] = -2
            if u >= n and rb[u - n] > eps_live:
                target = u
                break
            du = dist[u]
            if u < n:
                for j in range(m):
                    v = n + j
                    if pos[v] == -2:
                        continue
                    rc = C[u, j] + pot[u] - pot[v]
                    if rc < 0.0:
                        rc = 0.0
                    nd = du + rc
                    if nd < dist[v]:
                        dist[v] = nd
                        prev[v] = u
                        if pos[v] == -1:
                            heap[size] = v
                            pos[v] = size
                            size += 1
                            _sift_up(heap, pos, dist, size - 1)
                        else:
                            _sift_up(heap, pos, dist, pos[v])
            else:
                j = u - n
                for i in range(n):
                    if F[i, j] <= 0.0 or pos[i] == -2:
                        continue
                    rc = -C[i, j] + pot[u] - pot[i]
                    if rc < 0.0:
                        rc = 0.0
                    nd = du + rc
                    if nd < dist[i]:
                        dist[i] = nd
                        prev[i] = u
                        if pos[i] == -1:
                            heap[size] = i
                            pos[i] = size
                            size += 1
                            _sift_up(heap, pos, dist, size - 1)
                        else:
                            _sift_up(heap, pos, dist, pos[i])

        if target < 0:
            # All sinks drained to within eps_live. The run is good if the
            # stranded supply stays under half the marginal audit budget.
            remaining = 0.0
            for i in range(n):
                remaining += ra[i]
            if remaining <= 0.5e-9 * max(total, 1e-300):
                break
            return -1.0

        dt = dist[target]
        for v in range(V):
            if dist[v] < dt:
                pot[v] += dist[v]
            else:
                pot[v] += dt

        # bottleneck along the augmenting path
        delta = rb[target - n]
        v = target
        while prev[v] >= 0:
            u = prev[v]
            if v < n:
                f = F[v, u - n]  # reverse arc rides existing flow
                if f < delta:
                    delta = f
            v = u
        if ra[v] < delta:
            delta = ra[v]

        w = target
        while prev[w] >= 0:
            u = prev[w]
            if w >= n:
                F[u, w - n] += delta
            else:
                nf = F[w, u - n] - delta
                if nf < eps:
                    nf = 0.0
                F[w, u - n] = nf
            w = u
        ra[w] -= delta
        if ra[w] < 0.0:
            ra[w] = 0.0
        rb[target - n] -= delta
        if rb[target - n] < 0.0:
            rb[target - n] = 0.0
        aug += 1

    cost = 0.0
    for i in range(n):
        for j in range(m):
            if F[i, j] > 0.0:
                cost += F[i, j] * C[i, j]
    return cost


@njit(cache=True)
def solve_transport(a, b, C):
    """Optimal flow and cost for supplies a, demands b, cost matrix C.

    Returns (F, cost); cost is -1.0 when the solver failed.
    """
    n = a.shape[0]
    m = b.shape[0]
    F = np.zeros((n, m))
    cost = _ssp(a, b, C, F, 16 * (n + m) + 256)
    return F, cost


@njit(cache=True, parallel=True)
def batched_transport_costs(A, B, C):
    """Costs for many small instances sharing one cost matrix.

    A: (k, n) supplies, B: (k, m) demands, C: (n, m). Rows are independent,
    so the parallel loop is deterministic. Failed rows come back as -1.0.

    Also returns the diagonal plan mass sum_i F[i, i] per instance; it is
    only meaningful when rows of A and B index the same support points.
    """
    k = A.shape[0]
    n = A.shape[1]
    m = B.shape[1]
    out = np.empty(k)
    diag = np.zeros(k)
    nd = min(n, m)
    for t in prange(k):
        F = np.zeros((n, m))
        out[t] = _ssp(A[t], B[t], C, F, 16 * (n + m) + 256)
        s = 0.0
        for i in range(nd):
            s += F[i, i]
        diag[t] = s
    return out, diag
