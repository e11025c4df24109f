"""Scalar and grid kernels shared by the utility, protocol and oracle layers.

Every kernel is written once in the numba-compatible subset of Python and
built twice: jitted with ``numba.njit`` and as plain interpreted Python.
The grid scan additionally has a numpy-vectorised fallback, because the
interpreted scalar loop is far too slow for it.

Set ``JOINTCA_DISABLE_NUMBA=1`` to force the pure-Python/numpy path.

Utility functions are passed to kernels as ``(kind, p0, p1)``:

* ``kind == SIGMOIDAL``: ``p0 = a`` (steepness), ``p1 = b`` (inflection rate)
* ``kind == LOGARITHMIC``: ``p0 = k`` (growth rate), ``p1 = r_max``
"""

import math
import os
from types import SimpleNamespace

import numpy as np

SIGMOIDAL = 0
LOGARITHMIC = 1

_FLOOR_EPS = 1e-9

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def numba_disabled():
    return os.environ.get("JOINTCA_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


def _build(jit):
    @jit
    def softplus(x):
        # log(1 + e^x) without overflow
        if x > 0.0:
            return x + math.log1p(math.exp(-x))
        return math.log1p(math.exp(x))

    @jit
    def sigmoid(x):
        if x >= 0.0:
            return 1.0 / (1.0 + math.exp(-x))
        e = math.exp(x)
        return e / (1.0 + e)

    @jit
    def log_utility(kind, p0, p1, r):
        if r <= 0.0:
            return -math.inf
        if kind == 0:
            # U = (1 - e^{-ar}) / (1 + e^{-a(r-b)}), the closed form of c(sigma - d)
            return math.log(-math.expm1(-p0 * r)) - softplus(-p0 * (r - p1))
        return math.log(math.log1p(p0 * r)) - math.log(math.log1p(p0 * p1))

    @jit
    def utility(kind, p0, p1, r):
        if r <= 0.0:
            return 0.0
        if kind == 0:
            z = -p0 * (r - p1)
            if z < 700.0:
                return -math.expm1(-p0 * r) / (1.0 + math.exp(z))
            return math.exp(log_utility(kind, p0, p1, r))
        return math.log1p(p0 * r) / math.log1p(p0 * p1)

    @jit
    def slope(kind, p0, p1, r):
        if kind == 0:
            a = p0
            ar = a * r
            if ar > 700.0:
                head = 0.0
            else:
                head = a * math.exp(-ar) / (-math.expm1(-ar))
            return head + a * sigmoid(-a * (r - p1))
        g = 1.0 + p0 * r
        return p0 / (g * math.log1p(p0 * r))

    @jit
    def slope_derivs(kind, p0, p1, r):
        if kind == 0:
            a = p0
            ar = a * r
            if ar > 700.0:
                d1_head = 0.0
                d2_head = 0.0
            else:
                q = math.exp(-ar)
                om = -math.expm1(-ar)
                d1_head = -a * a * q / (om * om)
                d2_head = a * a * a * q * (1.0 + q) / (om * om * om)
            z = -a * (r - p1)
            s = sigmoid(z)
            sc = sigmoid(-z)
            # 1 - 2*sigmoid(z) == -tanh(z/2)
            d1_tail = -a * a * s * sc
            d2_tail = a * a * a * s * sc * (-math.tanh(0.5 * z))
            return d1_head + d1_tail, d2_head + d2_tail
        k = p0
        L = math.log1p(k * r)
        f = (1.0 + k * r) * L
        d1 = -k * k * (L + 1.0) / (f * f)
        d2 = k * k * k * (2.0 * (L + 1.0) * (L + 1.0) - L) / (f * f * f)
        return d1, d2

    @jit
    def inverse_slope(kind, p0, p1, price, lo, hi, tol):
        if price >= slope(kind, p0, p1, lo):
            return lo
        if price <= slope(kind, p0, p1, hi):
            return hi
        ptol = tol * max(1.0, price)
        for _ in range(400):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            s = slope(kind, p0, p1, mid)
            if s > price:
                lo = mid
            else:
                hi = mid
            if hi - lo <= tol and abs(s - price) <= ptol:
                return mid
        return 0.5 * (lo + hi)

    @jit
    def utility_table(kinds, p0s, p1s, nmax, resolution):
        """Row i holds log U_i at idx * resolution for idx = 0..nmax[i]."""
        m = kinds.shape[0]
        width = 0
        for i in range(m):
            if nmax[i] + 1 > width:
                width = nmax[i] + 1
        table = np.full((m, width), -np.inf)
        for i in range(m):
            for idx in range(1, nmax[i] + 1):
                table[i, idx] = log_utility(kinds[i], p0s[i], p1s[i], idx * resolution)
        return table

    @jit
    def _last_user_max(resid, member, last, cap_last):
        best = cap_last
        for s in range(member.shape[0]):
            if member[s, last]:
                v = math.floor(resid[s] + _FLOOR_EPS)
                if v < best:
                    best = v
        return int(best)

    @jit
    def grid_scan(table, member, cap, nmax, need_after):
        """Exhaustive scan over per-user grid totals.

        ``member[s, i]`` is 1 when user i's coverage lies inside carrier subset
        s; ``cap[s]`` is that subset's capacity in grid units. Users 0..M-2 are
        enumerated lexicographically; the last user takes the largest feasible
        total (the objective is increasing in every total).
        Returns (best_idx, best_obj, leaves).
        """
        m = table.shape[0]
        n_sets = member.shape[0]
        best_idx = np.zeros(m, dtype=np.int64)
        best_obj = -np.inf
        leaves = 0
        if m == 1:
            last = _last_user_max(cap, member, 0, nmax[0])
            if last >= 1:
                best_idx[0] = last
                best_obj = table[0, last]
                leaves = 1
            return best_idx, best_obj, leaves

        idx = np.zeros(m, dtype=np.int64)
        upper = np.zeros(m, dtype=np.int64)
        resid = np.zeros((m, n_sets))
        prefix = np.zeros(m)
        for s in range(n_sets):
            resid[0, s] = cap[s]

        def _upper(j):
            u = nmax[j]
            for s in range(n_sets):
                if member[s, j]:
                    v = math.floor(resid[j, s] - need_after[s, j] + _FLOOR_EPS)
                    if v < u:
                        u = v
            return u

        j = 0
        idx[0] = 0
        upper[0] = _upper(0)
        tail = m - 2
        while j >= 0:
            idx[j] += 1
            if idx[j] > upper[j]:
                j -= 1
                continue
            acc = prefix[j] + table[j, idx[j]]
            if j < tail:
                for s in range(n_sets):
                    resid[j + 1, s] = resid[j, s] - idx[j] * member[s, j]
                prefix[j + 1] = acc
                j += 1
                idx[j] = 0
                upper[j] = _upper(j)
                continue
            for s in range(n_sets):
                resid[m - 1, s] = resid[j, s] - idx[j] * member[s, j]
            last = _last_user_max(resid[m - 1], member, m - 1, nmax[m - 1])
            if last < 1:
                continue
            leaves += 1
            obj = acc + table[m - 1, last]
            if obj > best_obj:
                best_obj = obj
                for i in range(m - 1):
                    best_idx[i] = idx[i]
                best_idx[m - 1] = last
        return best_idx, best_obj, leaves

    return SimpleNamespace(
        softplus=softplus,
        sigmoid=sigmoid,
        log_utility=log_utility,
        utility=utility,
        slope=slope,
        slope_derivs=slope_derivs,
        inverse_slope=inverse_slope,
        utility_table=utility_table,
        grid_scan=grid_scan,
    )


def _grid_scan_numpy(table, member, cap, nmax, need_after):
    """Vectorised twin of the jitted ``grid_scan``; same visit order and tie-break."""
    m = table.shape[0]
    member = np.asarray(member, dtype=np.int64)
    best_idx = np.zeros(m, dtype=np.int64)
    best_obj = -np.inf
    leaves = 0
    last_sets = member[:, m - 1].astype(bool)

    def last_max(resid):
        # resid: (n_sets,) or (n, n_sets)
        lim = np.floor(resid[..., last_sets] + _FLOOR_EPS).min(axis=-1)
        return np.minimum(lim, nmax[m - 1]).astype(np.int64)

    if m == 1:
        last = int(last_max(np.asarray(cap, dtype=float)))
        if last >= 1:
            best_idx[0] = last
            return best_idx, float(table[0, last]), 1
        return best_idx, best_obj, 0

    def upper(j, resid):
        sets = member[:, j].astype(bool)
        u = nmax[j]
        if sets.any():
            u = min(u, int(np.floor(resid[sets] - need_after[sets, j] + _FLOOR_EPS).min()))
        return u

    tail = m - 2
    prefix_idx = np.zeros(m, dtype=np.int64)

    def visit(j, resid, acc):
        nonlocal best_obj, leaves
        u = upper(j, resid)
        if u < 1:
            return
        if j < tail:
            for v in range(1, u + 1):
                prefix_idx[j] = v
                visit(j + 1, resid - v * member[:, j], acc + table[j, v])
            return
        vals = np.arange(1, u + 1)
        res_after = resid[None, :] - vals[:, None] * member[None, :, j]
        last = last_max(res_after)
        ok = last >= 1
        if not ok.any():
            return
        leaves += int(ok.sum())
        obj = np.where(ok, (acc + table[j, vals]) + table[m - 1, np.maximum(last, 0)], -np.inf)
        k = int(np.argmax(obj))
        if obj[k] > best_obj:
            best_obj = float(obj[k])
            best_idx[:j] = prefix_idx[:j]
            best_idx[j] = vals[k]
            best_idx[m - 1] = last[k]

    visit(0, np.asarray(cap, dtype=float), 0.0)
    return best_idx, best_obj, leaves


PY = _build(lambda fn: fn)
PY.grid_scan_loop = PY.grid_scan
PY.grid_scan = _grid_scan_numpy

if HAVE_NUMBA:
    JIT = _build(numba.njit(cache=False))
else:  # pragma: no cover
    JIT = None


def active():
    """Kernel namespace honouring ``JOINTCA_DISABLE_NUMBA`` at call time."""
    if JIT is None or numba_disabled():
        return PY
    return JIT


def backend_name():
    return "python" if active() is PY else "numba"
