"""Feedforward synthesis: minimum-effort inputs meeting a fragment formula on the nominal trace."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .bisim import BisimCertificate, delta_offsets
from .errors import FragmentViolation, Infeasible, NumericalFailure
from .lp import LinearProgram, LPResult, Norm1Objective, norm1_objective, solve_lp
from .mtl.ast import Formula
from .mtl.fragment import FragmentTerm, build_fragment, fragment_terms, robustify
from .mtl.semantics import robustness
from .sysmodel import ModeSchedule, SwitchedLinearSystem, discretize, integrate_nominal, steps_for
from .trace import SignalTrace

REVALIDATE_TOL = 1e-6
# dense simplex below this many (rows x columns); HiGHS above
SIMPLEX_LIMIT = 40_000


@dataclass
class SynthesisProblem:
    system: SwitchedLinearSystem
    schedule: ModeSchedule
    formula: Formula                     # already robust-modified
    dt: float = 0.01
    x0: np.ndarray | None = None
    weights: tuple[float, ...] | None = None
    input_bounds: tuple[tuple[float, float], ...] | None = None
    margin: float = 0.0
    certificate: BisimCertificate | None = None
    solver: str = "auto"

    def __post_init__(self):
        self.x0 = np.zeros(self.system.n) if self.x0 is None else np.asarray(self.x0, dtype=float)
        if self.weights is None:
            self.weights = (1.0,) * self.system.p
        if len(self.weights) != self.system.p:
            raise ValueError("one weight per input channel is required")
        if self.input_bounds is not None and len(self.input_bounds) != self.system.p:
            raise ValueError("one (lo, hi) bound pair per input channel is required")
        if self.certificate is not None:
            for p in _all_preds(fragment_terms(self.formula)):
                if tuple(p.a) not in set(self.certificate.normals.values()):
                    raise FragmentViolation(f"certificate has no normal for {p.label or p.a}")


def _all_preds(terms: list[FragmentTerm]):
    for t in terms:
        yield from t.preds


@dataclass
class Encoding:
    program: LinearProgram
    objective: Norm1Objective
    row_keys: list[tuple[int, int, int]]   # (k, nu, sample) per constraint row
    n_steps: int


@dataclass
class SynthesisResult:
    inputs: np.ndarray
    trace: SignalTrace
    robustness: float
    objective: float
    active: list[tuple[int, int, int]]
    lp: LPResult | None = None
    log: list[dict] = field(default_factory=list)
    formula: Formula | None = None


def robust_formula(formula: Formula, cert: BisimCertificate) -> Formula:
    """Tighten each predicate of a fragment formula by the certificate offsets."""
    return robustify(formula, delta_offsets(cert, _keys(formula)))


def _keys(formula: Formula) -> list[tuple[int, int]]:
    return [(k, nu) for k, t in enumerate(fragment_terms(formula)) for nu in range(len(t.preds))]


def _state_maps(prob: SynthesisProblem):
    """Free response and input-to-state maps x[j] = f[j] + X[j] @ u.ravel()."""
    disc = discretize(prob.system, prob.schedule, prob.dt)
    N, n, p = disc.n_steps, prob.system.n, prob.system.p
    free = np.empty((N + 1, n))
    X = np.zeros((N + 1, n, N * p))
    free[0] = prob.x0
    for j in range(N):
        free[j + 1] = disc.Ad[j] @ free[j] + disc.dd[j]
        X[j + 1] = disc.Ad[j] @ X[j]
        X[j + 1][:, j * p:(j + 1) * p] += disc.Bd[j]
    return free, X, N


def encode(prob: SynthesisProblem) -> Encoding:
    """One inequality per (k, nu, sample in [tau_k, T_end]) over split inputs."""
    terms = fragment_terms(prob.formula)
    free, X, N = _state_maps(prob)
    p = prob.system.p
    times = prob.dt * np.arange(N + 1)
    rows, rhs, keys = [], [], []
    for k, term in enumerate(terms):
        lo = steps_for(term.tau, prob.dt) if term.tau > 0 else 0
        hi = steps_for(term.t_end, prob.dt)
        if hi > N:
            raise FragmentViolation(f"term {k} ends after the schedule horizon")
        js = np.arange(lo, hi + 1)
        for nu, pr in enumerate(term.preds):
            a, c = pr.a_vec, pr.c_vec
            R = np.einsum("i,jik->jk", a, X[js])
            if np.any(c):
                for r, j in enumerate(js):
                    col = min(j, N - 1) * p
                    R[r, col:col + p] += c
            rows.append(R)
            rhs.append(pr.bound(times[js]) - free[js] @ a - prob.margin)
            keys.extend((k, nu, int(j)) for j in js)
    obj = norm1_objective(prob.weights, N, prob.dt)
    S = obj.split_map()
    G = sp.csr_matrix(np.vstack(rows)) @ S
    h = np.concatenate(rhs)
    if prob.input_bounds is not None:
        lo_b = np.tile([b[0] for b in prob.input_bounds], N)
        hi_b = np.tile([b[1] for b in prob.input_bounds], N)
        fin_hi = np.isfinite(hi_b)
        fin_lo = np.isfinite(lo_b)
        G = sp.vstack([G, S[fin_hi], -S[fin_lo]], format="csr")
        h = np.concatenate([h, hi_b[fin_hi], -lo_b[fin_lo]])
        keys.extend([(-1, -1, -1)] * int(fin_hi.sum() + fin_lo.sum()))
    prog = LinearProgram(c=obj.cost, G=G, h=h, lb=np.zeros(obj.n_vars))
    return Encoding(prog, obj, keys, N)


def _pick_solver(prob: SynthesisProblem, prog: LinearProgram) -> str:
    if prob.solver != "auto":
        return prob.solver
    return "simplex" if prog.G.shape[0] * prog.n <= SIMPLEX_LIMIT else "highs"


def _violation_report(enc: Encoding, terms: list[FragmentTerm], method: str) -> list[dict]:
    """Elastic relaxation: one slack per predicate, reported largest first."""
    prog = enc.program
    pkeys = sorted({(k, nu) for k, nu, _ in enc.row_keys if k >= 0})
    col = {key: i for i, key in enumerate(pkeys)}
    m, n = prog.G.shape
    Sl = sp.lil_matrix((m, len(pkeys)))
    for r, (k, nu, _) in enumerate(enc.row_keys):
        if k >= 0:
            Sl[r, col[(k, nu)]] = -1.0
    G = sp.hstack([sp.csr_matrix(prog.G), Sl.tocsr()], format="csr")
    c = np.concatenate([np.zeros(n), np.ones(len(pkeys))])
    relaxed = LinearProgram(c=c, G=G, h=prog.h, lb=np.zeros(n + len(pkeys)))
    res = solve_lp(relaxed, "highs" if method == "highs" else "simplex")
    if res.status != "optimal":
        return []
    slack = res.x[n:]
    report = [
        {"k": k, "nu": nu, "label": terms[k].preds[nu].label, "violation": float(slack[i])}
        for (k, nu), i in col.items() if slack[i] > 1e-9
    ]
    return sorted(report, key=lambda d: -d["violation"])


def synthesize(prob: SynthesisProblem) -> SynthesisResult:
    enc = encode(prob)
    method = _pick_solver(prob, enc.program)
    res = solve_lp(enc.program, method)
    terms = fragment_terms(prob.formula)
    if res.status == "infeasible":
        raise Infeasible("no input meets the robust formula", _violation_report(enc, terms, method))
    if res.status != "optimal":
        raise NumericalFailure(f"LP returned {res.status}")
    u = enc.objective.to_inputs(res.x)
    trace = integrate_nominal(prob.system, prob.schedule, prob.x0, u, prob.dt)
    rho = robustness(prob.formula, trace, 0.0)
    if rho < -REVALIDATE_TOL:
        raise NumericalFailure(f"re-validated robustness {rho:.3e} is negative")
    duals = res.ineq_duals if res.ineq_duals is not None else np.zeros(len(enc.row_keys))
    active = [key for key, d in zip(enc.row_keys, duals) if abs(d) > 1e-9 and key[0] >= 0]
    return SynthesisResult(u, trace, rho, res.objective, active, res, formula=prob.formula)


def _subformula(terms: list[FragmentTerm], keep: set[tuple[int, int]]) -> Formula:
    out = []
    for k, t in enumerate(terms):
        preds = tuple(p for nu, p in enumerate(t.preds) if (k, nu) in keep)
        if preds:
            out.append(FragmentTerm(t.tau, t.t_end, preds))
    if not out:
        raise FragmentViolation("the reduced formula has no predicates")
    return build_fragment(out)


def synthesize_iterative(prob: SynthesisProblem, pool: set[tuple[int, int]] | list) -> SynthesisResult:
    """Solve without the pool predicates, then add every violated one until none is.

    ``prob.formula`` is the full robust formula; ``pool`` holds (k, nu) keys
    of its predicates that start out withheld.
    """
    terms = fragment_terms(prob.formula)
    all_keys = {(k, nu) for k, t in enumerate(terms) for nu in range(len(t.preds))}
    pending = [key for key in _keys(prob.formula) if key in set(map(tuple, pool))]
    unknown = set(map(tuple, pool)) - all_keys
    if unknown:
        raise ValueError(f"pool keys not in the formula: {sorted(unknown)}")
    active = all_keys - set(pending)
    log: list[dict] = []
    for it in range(len(pending) + 1):
        sub = _subformula(terms, active)
        step = SynthesisProblem(prob.system, prob.schedule, sub, prob.dt, prob.x0, prob.weights,
                                prob.input_bounds, prob.margin, None, prob.solver)
        try:
            result = synthesize(step)
        except Infeasible as exc:
            log.append({"iteration": it, "status": "infeasible", "added": []})
            exc.report = {"violations": exc.report, "log": log}
            raise
        violated = []
        for key in pending:
            k, nu = key
            single = _subformula(terms, {key})
            if robustness(single, result.trace, 0.0) < 0.0:
                violated.append(key)
        log.append({
            "iteration": it,
            "status": "optimal",
            "objective": result.objective,
            "added": [terms[k].preds[nu].label for k, nu in violated],
        })
        if not violated:
            result.log = log
            result.formula = sub
            return result
        active |= set(violated)
        pending = [key for key in pending if key not in violated]
    raise NumericalFailure("iteration did not settle after exhausting the pool")
