"""Slow, independent solvers used only to cross-check the production metrics.

Nothing here calls scipy.optimize or POT: the point is to share no logic with
the code paths being checked.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InputError, OracleRefused

MAX_ENUM = 8
MAX_HUNGARIAN = 256
# exhaustive basis enumeration while C(m*n, m+n-1) stays below this
_MAX_BASES = 20_000


@dataclass(frozen=True)
class CostMatrix:
    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise InputError("cost matrix must be a non-empty 2-D array")
        if not np.all(np.isfinite(arr)):
            raise InputError("cost matrix entries must be finite")
        object.__setattr__(self, "entries", arr)

    @property
    def shape(self):
        return self.entries.shape


def _cost(cost) -> np.ndarray:
    return cost.entries if isinstance(cost, CostMatrix) else CostMatrix(cost).entries


# ---------------------------------------------------------------------------
# transport polytope


def _tree_flows(cells, a, b):
    """Flows on a spanning tree of the bipartite row/column graph (leaf peeling).

    Returns None when ``cells`` is not a spanning tree.
    """
    m, n = len(a), len(b)
    adj = [set() for _ in range(m + n)]
    for i, j in cells:
        adj[i].add(m + j)
        adj[m + j].add(i)
    if any(not nb for nb in adj):
        return None
    resid = np.concatenate([a, b]).astype(float)
    flows = {}
    alive = set(range(m + n))
    leaves = [v for v in alive if len(adj[v]) == 1]
    while leaves:
        v = leaves.pop()
        if v not in alive or len(adj[v]) != 1:
            continue
        (u,) = adj[v]
        q = resid[v]
        cell = (v, u - m) if v < m else (u, v - m)
        flows[cell] = q
        resid[u] -= q
        resid[v] = 0.0
        adj[u].discard(v)
        adj[v].clear()
        alive.discard(v)
        if len(adj[u]) == 1:
            leaves.append(u)
        elif len(adj[u]) == 0:
            alive.discard(u)
    if len(flows) != len(cells) or alive:
        return None
    return flows


def _enumerate_bases(c, a, b):
    m, n = c.shape
    cells = [(i, j) for i in range(m) for j in range(n)]
    best = np.inf
    for basis in itertools.combinations(cells, m + n - 1):
        flows = _tree_flows(basis, a, b)
        if flows is None:
            continue
        if min(flows.values()) < -1e-12:
            continue
        best = min(best, sum(c[i, j] * q for (i, j), q in flows.items()))
    return best


def _northwest_corner(a, b):
    """Initial basic feasible solution with exactly m+n-1 basic cells."""
    m, n = len(a), len(b)
    ra, rb = a.astype(float).copy(), b.astype(float).copy()
    x = np.zeros((m, n))
    basis = []
    i = j = 0
    while i < m and j < n:
        q = min(ra[i], rb[j])
        x[i, j] = q
        basis.append((i, j))
        ra[i] -= q
        rb[j] -= q
        if i == m - 1 and j == n - 1:
            break
        # close one line per step so the basis stays a spanning tree
        if (ra[i] <= rb[j] and i < m - 1) or j == n - 1:
            i += 1
        else:
            j += 1
    return x, basis


def _potentials(c, basis, m, n):
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    u[0] = 0.0
    by_row = [[] for _ in range(m)]
    by_col = [[] for _ in range(n)]
    for i, j in basis:
        by_row[i].append(j)
        by_col[j].append(i)
    stack = [("r", 0)]
    while stack:
        kind, k = stack.pop()
        if kind == "r":
            for j in by_row[k]:
                if np.isnan(v[j]):
                    v[j] = c[k, j] - u[k]
                    stack.append(("c", j))
        else:
            for i in by_col[k]:
                if np.isnan(u[i]):
                    u[i] = c[i, k] - v[k]
                    stack.append(("r", i))
    return u, v


def _cycle(basis, m, enter):
    """Alternating cycle through the entering cell and the basis tree."""
    ei, ej = enter
    adj = {}
    for i, j in basis:
        adj.setdefault(("r", i), []).append(("c", j))
        adj.setdefault(("c", j), []).append(("r", i))
    # tree path from column ej to row ei
    start, goal = ("c", ej), ("r", ei)
    parent = {start: None}
    stack = [start]
    while stack:
        node = stack.pop()
        if node == goal:
            break
        for nb in adj.get(node, []):
            if nb not in parent:
                parent[nb] = node
                stack.append(nb)
    path = []
    node = goal
    while node is not None:
        path.append(node)
        node = parent[node]
    # path runs row ei -> ... -> column ej; consecutive pairs are basic cells
    cells = [enter]
    for k in range(len(path) - 1):
        p, q = path[k], path[k + 1]
        cells.append((p[1], q[1]) if p[0] == "r" else (q[1], p[1]))
    return cells


def _transport_simplex(c, a, b):
    """Transportation simplex (MODI) from the north-west corner, Bland's rule."""
    m, n = c.shape
    x, basis = _northwest_corner(a, b)
    for _ in range(10_000):
        u, v = _potentials(c, basis, m, n)
        reduced = c - u[:, None] - v[None, :]
        in_basis = set(basis)
        enter = None
        for i in range(m):
            for j in range(n):
                if (i, j) not in in_basis and reduced[i, j] < -1e-12:
                    enter = (i, j)
                    break
            if enter is not None:
                break
        if enter is None:
            return float(np.sum(c * x))
        cycle = _cycle(basis, m, enter)
        minus = cycle[1::2]
        step = min(x[cell] for cell in minus)
        leave = min((cell for cell in minus if x[cell] == step))
        for k, cell in enumerate(cycle):
            x[cell] += step if k % 2 == 0 else -step
        x[leave] = 0.0
        basis.remove(leave)
        basis.append(enter)
    raise RuntimeError("transportation simplex did not terminate")


def transport_lp_bruteforce(cost, a, b) -> float:
    """Optimal transport value over the polytope of plans between ``a`` and ``b``.

    Small instances enumerate every spanning-tree basis; larger ones (up to
    8x8) pivot between adjacent bases from the north-west corner.
    """
    c = _cost(cost)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, n = c.shape
    if m > MAX_ENUM or n > MAX_ENUM:
        raise OracleRefused(f"enumeration oracle is capped at {MAX_ENUM}x{MAX_ENUM}", shape=[m, n])
    if a.shape != (m,) or b.shape != (n,):
        raise InputError("weight vectors do not match the cost matrix")
    if abs(a.sum() - 1) > 1e-9 or abs(b.sum() - 1) > 1e-9 or np.any(a < 0) or np.any(b < 0):
        raise InputError("weights must be probability vectors")
    if m == 1 or n == 1:
        # the only plan is the product measure
        return float(a @ c @ b)
    from math import comb

    if comb(m * n, m + n - 1) <= _MAX_BASES:
        return float(_enumerate_bases(c, a, b))
    return _transport_simplex(c, a, b)


# ---------------------------------------------------------------------------
# assignment


def hungarian(cost):
    """Minimum-cost perfect matching (Kuhn-Munkres with potentials).

    Returns ``(value, perm)`` with ``value = sum_i cost[i, perm[i]]``.
    """
    c = _cost(cost)
    n, k = c.shape
    if n != k:
        raise InputError("hungarian needs a square cost matrix", shape=[n, k])
    if n > MAX_HUNGARIAN:
        raise OracleRefused(f"hungarian oracle is capped at {MAX_HUNGARIAN}")
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=int)  # match[col] = row, 1-based, 0 = free
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used[1:]
            cur = c[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            used_idx = np.nonzero(used)[0]
            u[match[used_idx]] += delta
            v[used_idx] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    perm = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        perm[match[j] - 1] = j - 1
    value = float(sum(c[i, perm[i]] for i in range(n)))
    return value, perm


# ---------------------------------------------------------------------------
# bounded-Lipschitz dual ball


def dual_ball_vertices_bruteforce(dist) -> np.ndarray:
    """Vertices of {phi : max|phi| + Lip(phi) <= 1} by trying every active set."""
    dist = np.asarray(dist, dtype=np.float64)
    m = dist.shape[0]
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m > 4:
        raise OracleRefused("active-set enumeration is capped at M = 4", M=m)
    eye = np.eye(m)
    rows = []
    for i, j in itertools.permutations(range(m), 2):
        for k in range(m):
            for sign in (1.0, -1.0):
                rows.append((eye[i] - eye[j]) / dist[i, j] + sign * eye[k])
    a = np.array(rows)
    found = []
    combos = np.array(list(itertools.combinations(range(len(a)), m)))
    for chunk in np.array_split(combos, max(1, len(combos) // 50_000)):
        mats = a[chunk]
        det = np.linalg.det(mats)
        ok = np.abs(det) > 1e-10
        if not np.any(ok):
            continue
        sols = np.linalg.solve(mats[ok], np.ones((ok.sum(), m, 1)))[..., 0]
        feas = np.all(sols @ a.T <= 1 + 1e-9, axis=1)
        found.append(sols[feas])
    verts = np.concatenate(found)
    # deduplicate on rounded keys but keep the unrounded solutions
    _, first = np.unique(np.round(verts, 9), axis=0, return_index=True)
    return verts[np.sort(first)]


def bl_norm_bruteforce(dist, mu) -> float:
    """BL norm as the support function of the brute-force dual-ball vertices."""
    verts = dual_ball_vertices_bruteforce(dist)
    return max(0.0, float(np.max(verts @ np.asarray(mu, dtype=np.float64))))
