"""Linear programming: a dense revised simplex and a HiGHS backend."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, NumericalFailure

FEAS_TOL = 1e-7


@dataclass
class LinearProgram:
    """minimize c.v  s.t.  G v <= h,  E v = f,  lb <= v <= ub (None = free)."""

    c: np.ndarray
    G: np.ndarray | sp.spmatrix | None = None
    h: np.ndarray | None = None
    E: np.ndarray | sp.spmatrix | None = None
    f: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.G, self.h = _rows(self.G, self.h, n, "G")
        self.E, self.f = _rows(self.E, self.f, n, "E")
        self.lb = np.full(n, -np.inf) if self.lb is None else _bounds(self.lb, n, -np.inf)
        self.ub = np.full(n, np.inf) if self.ub is None else _bounds(self.ub, n, np.inf)
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound exceeds upper bound")
        for name in ("c", "h", "f"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")

    @property
    def n(self) -> int:
        return self.c.size

    def residual(self, v: np.ndarray) -> float:
        r = 0.0
        if self.G.shape[0]:
            r = max(r, float(np.max(self.G @ v - self.h, initial=0.0)))
        if self.E.shape[0]:
            r = max(r, float(np.max(np.abs(self.E @ v - self.f))))
        r = max(r, float(np.max(self.lb - v, initial=0.0)), float(np.max(v - self.ub, initial=0.0)))
        return r


def _rows(m, rhs, n, name):
    if m is None:
        return np.zeros((0, n)), np.zeros(0)
    if not sp.issparse(m):
        m = np.atleast_2d(np.asarray(m, dtype=float))
        if m.size == 0:
            m = m.reshape(0, n)
    rhs = np.asarray(rhs, dtype=float).ravel()
    if m.shape[1] != n or m.shape[0] != rhs.size:
        raise DimensionMismatch(f"{name} has shape {m.shape}, expected (k, {n}) with k = {rhs.size}")
    return m, rhs


def _bounds(v, n, fill):
    arr = np.array([fill if x is None else x for x in np.atleast_1d(v)], dtype=float)
    if arr.size == 1 and n != 1:
        arr = np.full(n, arr[0])
    if arr.size != n:
        raise DimensionMismatch("bounds length does not match the number of variables")
    return arr


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None
    objective: float
    ineq_duals: np.ndarray | None = None
    eq_duals: np.ndarray | None = None
    iterations: int = 0
    method: str = ""
    info: dict = field(default_factory=dict)


def solve_lp(prog: LinearProgram, method: str = "simplex", max_iter: int = 50_000) -> LPResult:
    """Solve ``prog``; status is one of optimal, infeasible, unbounded."""
    if method == "simplex":
        res = _solve_simplex(prog, max_iter)
    elif method == "highs":
        res = _solve_highs(prog)
    else:
        raise ValueError(f"unknown LP method {method!r}")
    if res.status == "optimal":
        scale = 1.0 + float(np.max(np.abs(np.concatenate([prog.h, prog.f])), initial=0.0))
        if prog.residual(res.x) > FEAS_TOL * scale:
            raise NumericalFailure(f"primal residual {prog.residual(res.x):.3e} after {method}")
    return res


# HiGHS backend ------------------------------------------------------------

def _solve_highs(prog: LinearProgram) -> LPResult:
    from scipy.optimize import linprog

    bounds = [(None if np.isinf(lo) else lo, None if np.isinf(hi) else hi) for lo, hi in zip(prog.lb, prog.ub)]
    kw = {}
    if prog.G.shape[0]:
        kw.update(A_ub=prog.G, b_ub=prog.h)
    if prog.E.shape[0]:
        kw.update(A_eq=prog.E, b_eq=prog.f)
    r = linprog(prog.c, bounds=bounds, method="highs", **kw)
    if r.status == 2:
        return LPResult("infeasible", None, np.nan, method="highs")
    if r.status == 3:
        return LPResult("unbounded", None, -np.inf, method="highs")
    if r.status != 0:
        raise NumericalFailure(f"HiGHS: {r.message}")
    ineq = np.asarray(r.ineqlin.marginals) if prog.G.shape[0] else np.zeros(0)
    eq = np.asarray(r.eqlin.marginals) if prog.E.shape[0] else np.zeros(0)
    return LPResult("optimal", np.asarray(r.x), float(r.fun), ineq, eq, int(r.nit), "highs")


# dense revised simplex ----------------------------------------------------

@dataclass
class _Standard:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    recover: np.ndarray      # v = recover @ z + shift
    shift: np.ndarray
    n_g: int
    n_e: int
    row_sign: np.ndarray


def _standardize(prog: LinearProgram) -> _Standard:
    n = prog.n
    G = prog.G.toarray() if sp.issparse(prog.G) else prog.G
    E = prog.E.toarray() if sp.issparse(prog.E) else prog.E
    cols = []        # column of recover per standard variable
    shift = np.zeros(n)
    extra_rows = []  # (column index in z, upper bound) rows z_k <= width
    for i in range(n):
        lo, hi = prog.lb[i], prog.ub[i]
        e = np.zeros(n)
        e[i] = 1.0
        if np.isfinite(lo):
            shift[i] = lo
            cols.append(e)
            if np.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[i] = hi
            cols.append(-e)
        else:
            cols.append(e)
            cols.append(-e)
    R = np.array(cols).T if cols else np.zeros((n, 0))
    nz = R.shape[1]
    g_rows = G @ R if G.shape[0] else np.zeros((0, nz))
    g_rhs = prog.h - (G @ shift if G.shape[0] else 0.0)
    if extra_rows:
        ub_rows = np.zeros((len(extra_rows), nz))
        for r, (k, w) in enumerate(extra_rows):
            ub_rows[r, k] = 1.0
        g_rows = np.vstack([g_rows, ub_rows])
        g_rhs = np.concatenate([g_rhs, [w for _, w in extra_rows]])
    e_rows = E @ R if E.shape[0] else np.zeros((0, nz))
    e_rhs = prog.f - (E @ shift if E.shape[0] else 0.0)
    mg, me = g_rows.shape[0], e_rows.shape[0]
    A = np.zeros((mg + me, nz + mg))
    A[:mg, :nz] = g_rows
    A[:mg, nz:] = np.eye(mg)
    A[mg:, :nz] = e_rows
    b = np.concatenate([g_rhs, e_rhs])
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b *= sign
    c = np.concatenate([prog.c @ R, np.zeros(mg)])
    recover = np.hstack([R, np.zeros((n, mg))])
    return _Standard(A, b, c, recover, shift, prog.G.shape[0], me, sign)


class _Tableau:
    """Revised simplex state: basis list with an explicitly maintained inverse."""

    def __init__(self, A, b, basis):
        self.A = A
        self.b = b
        self.basis = list(basis)
        self.refactor()

    def refactor(self):
        self.Binv = np.linalg.inv(self.A[:, self.basis])
        self.since = 0

    def pivot(self, r: int, q: int, d: np.ndarray):
        piv = d[r]
        row = self.Binv[r] / piv
        self.Binv -= np.outer(d, row)
        self.Binv[r] = row
        self.basis[r] = q
        self.since += 1
        if self.since >= 64:
            self.refactor()


def _run(tab: _Tableau, c: np.ndarray, allowed: np.ndarray, max_iter: int, it0: int) -> tuple[str, int]:
    tol = 1e-9
    it = it0
    degenerate = 0
    while True:
        if it >= max_iter:
            raise NumericalFailure(f"simplex did not finish within {max_iter} pivots")
        xb = tab.Binv @ tab.b
        y = c[tab.basis] @ tab.Binv
        red = c - y @ tab.A
        red[tab.basis] = 0.0
        red[~allowed] = 0.0
        scale = 1.0 + float(np.max(np.abs(c)))
        neg = np.flatnonzero(red < -tol * scale)
        if neg.size == 0:
            return "optimal", it
        # Dantzig pricing; Bland's rule after a run of degenerate pivots
        q = int(neg[0]) if degenerate > 50 else int(neg[np.argmin(red[neg])])
        d = tab.Binv @ tab.A[:, q]
        pos = np.flatnonzero(d > tol)
        if pos.size == 0:
            return "unbounded", it
        ratios = xb[pos] / d[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12 * (1.0 + abs(best))]
        r = int(min(ties, key=lambda k: tab.basis[k]))
        degenerate = degenerate + 1 if best <= 1e-12 else 0
        tab.pivot(r, q, d)
        it += 1


def _solve_simplex(prog: LinearProgram, max_iter: int) -> LPResult:
    st = _standardize(prog)
    m, nz = st.A.shape
    if m == 0:
        if np.any(st.c < 0):
            return LPResult("unbounded", None, -np.inf, method="simplex")
        v = st.shift.copy()
        return LPResult("optimal", v, float(prog.c @ v), np.zeros(prog.G.shape[0]), np.zeros(st.n_e), 0, "simplex")
    # phase 1 on [A | I] with artificial basis
    A1 = np.hstack([st.A, np.eye(m)])
    c1 = np.concatenate([np.zeros(nz), np.ones(m)])
    tab = _Tableau(A1, st.b, range(nz, nz + m))
    allowed = np.ones(nz + m, dtype=bool)
    _, it = _run(tab, c1, allowed, max_iter, 0)
    xb = tab.Binv @ st.b
    if float(c1[tab.basis] @ xb) > 1e-8 * (1.0 + float(np.max(np.abs(st.b)))):
        return LPResult("infeasible", None, np.nan, iterations=it, method="simplex")
    # drive zero-level artificials out of the basis; drop redundant rows
    keep_rows = np.ones(m, dtype=bool)
    for r in range(m):
        if tab.basis[r] < nz:
            continue
        row = tab.Binv[r] @ st.A
        cand = [j for j in np.flatnonzero(np.abs(row) > 1e-9) if j not in tab.basis]
        if cand:
            q = int(cand[0])
            tab.pivot(r, q, tab.Binv @ A1[:, q])
        else:
            keep_rows[r] = False
    if not keep_rows.all():
        basis = [bv for r, bv in enumerate(tab.basis) if keep_rows[r]]
        A1 = A1[keep_rows]
        tab = _Tableau(A1, st.b[keep_rows], basis)
    # phase 2 with artificials frozen out
    c2 = np.concatenate([st.c, np.zeros(m)])
    allowed = np.concatenate([np.ones(nz, dtype=bool), np.zeros(m, dtype=bool)])
    status, it = _run(tab, c2, allowed, max_iter, it)
    if status == "unbounded":
        return LPResult("unbounded", None, -np.inf, iterations=it, method="simplex")
    tab.refactor()
    z = np.zeros(nz + m)
    z[tab.basis] = tab.Binv @ tab.b
    z = np.maximum(z[:nz], 0.0)
    v = st.recover[:, :nz] @ z + st.shift
    y_kept = c2[tab.basis] @ tab.Binv
    y = np.zeros(m)
    y[keep_rows] = y_kept
    y *= st.row_sign
    ineq = y[:st.n_g]
    mg_total = m - st.n_e
    eq = y[mg_total:]
    return LPResult("optimal", v, float(prog.c @ v), ineq, eq, it, "simplex")


# 1-norm objective ---------------------------------------------------------

@dataclass(frozen=True)
class Norm1Objective:
    """Cost over split variables [u+ ; u-] laid out step-major per sign block."""

    weights: np.ndarray
    n_steps: int
    dt: float
    unpenalized: tuple[int, ...]

    @property
    def n_vars(self) -> int:
        return 2 * self.n_steps * len(self.weights)

    @property
    def cost(self) -> np.ndarray:
        per = np.tile(self.weights * self.dt, self.n_steps)
        return np.concatenate([per, per])

    def split_map(self) -> sp.csr_matrix:
        """Sparse S with u.ravel() = S @ v."""
        k = self.n_steps * len(self.weights)
        eye = sp.identity(k, format="csr")
        return sp.hstack([eye, -eye], format="csr")

    def to_inputs(self, v: np.ndarray) -> np.ndarray:
        k = self.n_steps * len(self.weights)
        return (v[:k] - v[k:2 * k]).reshape(self.n_steps, len(self.weights))


def norm1_objective(weights, n_steps: int, dt: float) -> Norm1Objective:
    """Weighted 1-norm of a sampled input signal via u = u+ - u-, u+- >= 0."""
    w = np.asarray(weights, dtype=float).ravel()
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    zero = tuple(int(i) for i in np.flatnonzero(w == 0.0))
    if zero:
        warnings.warn(
            f"input channels {zero} carry no cost; the optimum is unbounded in them "
            "unless constraints pin them down",
            stacklevel=2,
        )
    return Norm1Objective(w, int(n_steps), float(dt), zero)
