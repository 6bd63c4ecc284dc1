"""Hot loops of the package with two interchangeable backends.

Each kernel exists as a numba ``@njit`` function and as a pure-numpy
function with the same signature.  The numba path is used when numba imports
and the environment variable ``MADSSE_DISABLE_NUMBA`` is unset (or ``0``).
"""

import os

import numpy as np

SWEEP_OK = 0
SWEEP_MAXITER = 1
SWEEP_COLLAPSE = 2

COLLAPSE_LIMIT = 0.5


def _numba_requested():
    flag = os.environ.get("MADSSE_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no")


# --------------------------------------------------------------------------
# pure numpy


def lca_matrix_numpy(parent, preorder, tin, tout):
    """Lowest common ancestor of every node pair (positions, slack = 0)."""
    n = parent.shape[0]
    lca = np.zeros((n, n), dtype=np.int64)
    for node in preorder[1:]:
        lca[node, :] = lca[parent[node], :]
        lca[node, preorder[tin[node]:tout[node]]] = node
    return lca


def sweep_numpy(levels, parent, z, mask, s, v_slack, v_init, tol, max_iter):
    """Backward/forward sweep with every depth level updated as one batch.

    ``levels`` is a list of position arrays, ``levels[d]`` holding the nodes
    at depth ``d`` (``levels[0] == [0]``).
    """
    v = v_init.copy()
    v[0] = v_slack
    n = v.shape[0]
    cur = np.zeros((n, 3), dtype=np.complex128)
    dv = np.inf
    it = 0
    status = SWEEP_MAXITER
    safe = np.where(mask, v, 1.0)
    for it in range(1, max_iter + 1):
        inj = np.where(mask, np.conj(s / safe), 0.0)
        cur[:] = -inj
        cur[0] = 0.0
        for lvl in levels[:0:-1]:
            np.add.at(cur, parent[lvl], cur[lvl])
        new = v.copy()
        for lvl in levels[1:]:
            drop = np.einsum("nij,nj->ni", z[lvl], cur[lvl])
            new[lvl] = np.where(mask[lvl], new[parent[lvl]] - drop, 0.0)
        dv = np.max(np.abs(new - v))
        v = new
        safe = np.where(mask, v, 1.0)
        if np.any(np.abs(safe[mask]) < COLLAPSE_LIMIT):
            status = SWEEP_COLLAPSE
            break
        if dv <= tol:
            status = SWEEP_OK
            break
    # currents consistent with the returned voltages
    inj = np.where(mask, np.conj(s / safe), 0.0)
    cur[:] = -inj
    cur[0] = 0.0
    for lvl in levels[:0:-1]:
        np.add.at(cur, parent[lvl], cur[lvl])
    return v, cur, it, dv, status


# --------------------------------------------------------------------------
# numba

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

if HAS_NUMBA:

    @numba.njit(cache=True)
    def lca_matrix_numba(parent, preorder, tin, tout):
        n = parent.shape[0]
        lca = np.zeros((n, n), dtype=np.int64)
        for k in range(1, n):
            node = preorder[k]
            par = parent[node]
            for j in range(n):
                lca[node, j] = lca[par, j]
            for t in range(tin[node], tout[node]):
                lca[node, preorder[t]] = node
        return lca

    @numba.njit(cache=True)
    def _currents(order, parent, mask, s, v, cur):
        n = v.shape[0]
        for i in range(n):
            for ph in range(3):
                if i > 0 and mask[i, ph]:
                    cur[i, ph] = -np.conj(s[i, ph] / v[i, ph])
                else:
                    cur[i, ph] = 0.0
        for k in range(n - 1, 0, -1):
            node = order[k]
            par = parent[node]
            for ph in range(3):
                cur[par, ph] += cur[node, ph]

    @numba.njit(cache=True)
    def sweep_numba(order, parent, z, mask, s, v_slack, v_init, tol, max_iter):
        n = v_init.shape[0]
        v = v_init.copy()
        for ph in range(3):
            v[0, ph] = v_slack[ph]
        cur = np.zeros((n, 3), dtype=np.complex128)
        dv = np.inf
        it = 0
        status = SWEEP_MAXITER
        for it in range(1, max_iter + 1):
            _currents(order, parent, mask, s, v, cur)
            dv = 0.0
            collapsed = False
            for k in range(1, n):
                node = order[k]
                par = parent[node]
                for a in range(3):
                    if not mask[node, a]:
                        continue
                    acc = v[par, a]
                    for b in range(3):
                        acc -= z[node, a, b] * cur[node, b]
                    diff = abs(acc - v[node, a])
                    if diff > dv:
                        dv = diff
                    v[node, a] = acc
                    if abs(acc) < COLLAPSE_LIMIT:
                        collapsed = True
            if collapsed:
                status = SWEEP_COLLAPSE
                break
            if dv <= tol:
                status = SWEEP_OK
                break
        _currents(order, parent, mask, s, v, cur)
        return v, cur, it, dv, status


USE_NUMBA = HAS_NUMBA and _numba_requested()
# the LCA table is row copies; past this size numpy's memcpy wins (see benchmarks/)
LCA_NUMBA_MAX = 1000


def lca_matrix(parent, preorder, tin, tout):
    if USE_NUMBA and parent.shape[0] <= LCA_NUMBA_MAX:
        return lca_matrix_numba(parent, preorder, tin, tout)
    return lca_matrix_numpy(parent, preorder, tin, tout)


def sweep(topo, z, mask, s, v_slack, v_init, tol, max_iter):
    """Dispatch the sweep.  ``topo`` supplies ``order``, ``parent``, ``levels``."""
    if USE_NUMBA:
        return sweep_numba(topo.order, topo.parent, z, mask, s, v_slack,
                           v_init, tol, max_iter)
    return sweep_numpy(topo.levels, topo.parent, z, mask, s, v_slack,
                       v_init, tol, max_iter)
