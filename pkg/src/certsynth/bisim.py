"""Quadratic stochastic bisimulation certificates for switched linear systems.

A certificate holds, per mode q, a matrix M_q with
A_q^T M_q + M_q A_q + mu M_q < 0 and alpha_q = trace(Sigma_q^T M_q Sigma_q).
From these follow the excursion level gamma_hat, per-segment ball radii,
the tightening scalars z and the predicate offsets delta_hat.

Certificates live on a subset of state coordinates (``coords``): states
whose dynamics rows are identically zero in every mode carry no error and
would make the decay condition unsatisfiable, so they are left out.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_continuous_lyapunov
from scipy.optimize import minimize

from .errors import CertificateCheckFailed, MissingZ, NotHurwitz, SingularM
from .mtl.fragment import FragmentTerm, RobustModification, fragment_terms
from .numkernel import gen_eig_max, is_pd, lyapunov_solve, max_real_eig, sym_eig
from .sysmodel import ModeSchedule, SwitchedLinearSystem

CHECK_TOL = 1e-10


def _lmi_matrix(A: np.ndarray, M: np.ndarray, mu: float) -> np.ndarray:
    L = A.T @ M + M @ A + mu * M
    return 0.5 * (L + L.T)


def certify_mode(A, Sigma, mu: float, Q=None) -> tuple[np.ndarray, float]:
    """M from the Lyapunov equation with weight Q, and alpha = tr(Sigma^T M Sigma)."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    Q = np.eye(n) if Q is None else np.asarray(Q, dtype=float)
    M = lyapunov_solve(A, Q, mu)
    S = np.asarray(Sigma, dtype=float).reshape(n, -1)
    alpha = float(np.trace(S.T @ M @ S))
    if not is_pd(M, 0.0):
        raise CertificateCheckFailed("Lyapunov solution is not positive definite")
    if sym_eig(_lmi_matrix(A, M, mu)).eigenvalues[-1] >= 0.0:
        raise CertificateCheckFailed("decay condition fails on the Lyapunov solution")
    return M, alpha


def _quad_inv(M: np.ndarray, a: np.ndarray) -> float:
    try:
        c = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise SingularM("metric is not positive definite") from None
    y = np.linalg.solve(c, a)
    return float(y @ y)


def max_z(M, a) -> float:
    """Largest z with z^2 a a^T <= M, i.e. 1 / sqrt(a^T M^-1 a)."""
    M = np.asarray(M, dtype=float)
    a = np.asarray(a, dtype=float).ravel()
    if abs(np.linalg.norm(a) - 1.0) > 1e-9:
        raise ValueError("normal must have unit length")
    if np.linalg.cond(M) > 1e14:
        raise SingularM("metric is numerically singular")
    return 1.0 / math.sqrt(_quad_inv(M, a))


def _z_general(M: np.ndarray, a: np.ndarray) -> float:
    if not np.any(a):
        return math.inf
    return 1.0 / math.sqrt(_quad_inv(M, a))


# metric search --------------------------------------------------------------

def _log_objective(M: np.ndarray, s: int, a: np.ndarray) -> float:
    return math.log(M[s, s]) + math.log(_quad_inv(M, a))


def _diag_search(A, mu, s, a, max_iter=200) -> np.ndarray:
    """Multiplicative coordinate search over diagonal Lyapunov weights."""
    n = A.shape[0]
    w = np.ones(n)
    best = _log_objective(lyapunov_solve(A, np.diag(w), mu), s, a)
    for _ in range(max_iter):
        improved = False
        for i in range(n):
            for factor in (2.0, 0.5):
                trial = w.copy()
                trial[i] *= factor
                val = _log_objective(lyapunov_solve(A, np.diag(trial), mu), s, a)
                if val < best - 1e-12:
                    w, best, improved = trial, val, True
        if not improved:
            break
    return w


def _full_search(A, mu, s, a, w0, max_iter=5000, reg=1e-6) -> np.ndarray:
    """Gradient search over Q = L L^T + reg tr(L L^T)/n I, adjoint gradients."""
    n = A.shape[0]
    Ah = A + 0.5 * mu * np.eye(n)
    tril = np.tril_indices(n)

    def weight(L):
        Q = L @ L.T
        return Q + reg * np.trace(Q) / n * np.eye(n)

    def fg(p):
        L = np.zeros((n, n))
        L[tril] = p
        Q = weight(L)
        M = solve_continuous_lyapunov(Ah.T, -Q)
        M = 0.5 * (M + M.T)
        v = np.linalg.solve(M, a)
        q = float(a @ v)
        val = math.log(M[s, s]) + math.log(q)
        P = -np.outer(v, v) / q
        P[s, s] += 1.0 / M[s, s]
        Y = solve_continuous_lyapunov(Ah, -P)
        Y = 0.5 * (Y + Y.T)
        # d val / d Q = Y; Q depends on L through L L^T and the trace term
        G = 2.0 * (Y + reg * np.trace(Y) / n * np.eye(n)) @ L
        return val, G[tril]

    p0 = np.diag(np.sqrt(w0))[tril]
    res = minimize(fg, p0, jac=True, method="L-BFGS-B",
                   options=dict(maxiter=max_iter, gtol=1e-12, ftol=1e-15))
    L = np.zeros((n, n))
    L[tril] = res.x
    return weight(L)


def optimize_metric(A, mu: float, shape_index: int, normal, zeta: float = 1.0,
                    method: str = "full", max_iter: int | None = None) -> np.ndarray:
    """Metric maximising z for ``normal`` subject to M[shape, shape] <= zeta.

    The objective z^2 / M[shape, shape] is scale free, so the search runs on
    the ratio and the result is scaled so the shape entry equals zeta.
    """
    A = np.asarray(A, dtype=float)
    a = np.asarray(normal, dtype=float).ravel()
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    lead = max_real_eig(A + 0.5 * mu * np.eye(A.shape[0]))
    if lead >= -1e-10:
        raise NotHurwitz(f"A + (mu/2)I has eigenvalue with real part {lead:.3e}")
    if method == "identity":
        Q = np.eye(A.shape[0])
    elif method == "diagonal":
        Q = np.diag(_diag_search(A, mu, shape_index, a, max_iter or 200))
    elif method == "full":
        w = _diag_search(A, mu, shape_index, a, 20)
        Q = _full_search(A, mu, shape_index, a, w, max_iter or 5000)
    else:
        raise ValueError(f"unknown metric search {method!r}")
    M = lyapunov_solve(A, Q, mu)
    return M * (zeta / M[shape_index, shape_index])


# certificate ---------------------------------------------------------------

@dataclass
class CertificateOptions:
    mu: float = 0.1
    epsilon: float = 0.05
    zeta: float = 1.0
    shape_index: int = 0          # full-state index bounded by zeta
    objective: tuple[int, int] = (0, 0)   # (k, nu) of the normal to tighten
    r0: float | None = None       # initial ball radius; default r0_factor * gamma_hat
    r0_factor: float = 4.0
    method: str = "full"
    max_iter: int | None = None
    coords: tuple[int, ...] | None = None


@dataclass
class ModeCertificate:
    M: np.ndarray
    mu: float
    alpha: float


@dataclass
class BisimCertificate:
    coords: tuple[int, ...]
    n_full: int
    modes: dict
    segments: tuple
    radii: tuple
    gamma_hat: float
    epsilon: float
    t_end: float
    normals: dict
    z: dict
    delta_hat: dict
    labels: dict = field(default_factory=dict)

    # helpers
    def project(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[..., list(self.coords)]

    def metric(self, q: int) -> np.ndarray:
        return self.modes[q].M

    @property
    def starts(self) -> tuple[float, ...]:
        return ModeSchedule(self.segments).starts

    def z_for(self, k: int, nu: int, i: int) -> float:
        if (k, nu, i) not in self.z:
            raise MissingZ(f"no z for ({k}, {nu}, {i})")
        return self.z[(k, nu, i)]

    def check(self, tol: float = CHECK_TOL, systems: dict | None = None) -> dict:
        """Verify the certificate invariants; raise on failure, return margins."""
        report = {}
        for q, mc in self.modes.items():
            M = mc.M
            scale = max(1.0, float(np.max(np.abs(M))))
            lam_min = sym_eig(M).eigenvalues[0]
            if lam_min <= 0:
                raise CertificateCheckFailed(f"M_{q} is not positive definite ({lam_min:.3e})")
            entry = {"min_eig_M": float(lam_min)}
            if systems is not None:
                A = systems[q]["A"]
                S = systems[q]["Sigma"]
                lmi = sym_eig(_lmi_matrix(A, M, mc.mu)).eigenvalues[-1]
                if lmi >= -tol:
                    raise CertificateCheckFailed(f"decay condition fails in mode {q} ({lmi:.3e})")
                alpha = float(np.trace(S.T @ M @ S))
                if abs(alpha - mc.alpha) > tol * max(1.0, abs(alpha)):
                    raise CertificateCheckFailed(f"alpha mismatch in mode {q}")
                entry["max_eig_lmi"] = float(lmi)
            report[q] = entry
            for (k, nu, i), z in self.z.items():
                if self.segments[i][0] != q or not math.isfinite(z):
                    continue
                a = self._normal_c(k, nu)
                gap = sym_eig(M - z * z * np.outer(a, a)).eigenvalues[0]
                if gap < -tol * scale:
                    raise CertificateCheckFailed(f"z({k},{nu},{i}) violates z^2 a a^T <= M")
        g = max(mc.alpha for mc in self.modes.values()) * self.t_end / self.epsilon
        if abs(g - self.gamma_hat) > tol * max(1.0, g):
            raise CertificateCheckFailed("gamma_hat does not match alpha T_end / epsilon")
        for (k, nu, i), d in self.delta_hat.items():
            want = (math.sqrt(self.radii[i]) + math.sqrt(self.gamma_hat)) / self.z[(k, nu, i)]
            if abs(d - want) > tol * max(1.0, abs(want)):
                raise CertificateCheckFailed(f"delta_hat({k},{nu},{i}) inconsistent")
        return report

    def _normal_c(self, k, nu) -> np.ndarray:
        return np.asarray(self.normals[(k, nu)])[list(self.coords)]

    # serialization
    def to_dict(self) -> dict:
        key = lambda t: ",".join(str(v) for v in t)  # noqa: E731
        return {
            "coords": list(self.coords),
            "n_full": self.n_full,
            "modes": {str(q): {"M": mc.M.tolist(), "mu": mc.mu, "alpha": mc.alpha}
                      for q, mc in self.modes.items()},
            "segments": [[q, T] for q, T in self.segments],
            "radii": list(self.radii),
            "gamma_hat": self.gamma_hat,
            "epsilon": self.epsilon,
            "t_end": self.t_end,
            "normals": {key(k): list(v) for k, v in self.normals.items()},
            "z": {key(k): v for k, v in self.z.items()},
            "delta_hat": {key(k): v for k, v in self.delta_hat.items()},
            "labels": {key(k): v for k, v in self.labels.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BisimCertificate":
        unkey = lambda s: tuple(int(v) for v in s.split(","))  # noqa: E731
        return cls(
            coords=tuple(d["coords"]),
            n_full=int(d["n_full"]),
            modes={int(q): ModeCertificate(np.array(v["M"]), float(v["mu"]), float(v["alpha"]))
                   for q, v in d["modes"].items()},
            segments=tuple((int(q), float(T)) for q, T in d["segments"]),
            radii=tuple(float(r) for r in d["radii"]),
            gamma_hat=float(d["gamma_hat"]),
            epsilon=float(d["epsilon"]),
            t_end=float(d["t_end"]),
            normals={unkey(k): tuple(v) for k, v in d["normals"].items()},
            z={unkey(k): float(v) for k, v in d["z"].items()},
            delta_hat={unkey(k): float(v) for k, v in d["delta_hat"].items()},
            labels={unkey(k): v for k, v in d.get("labels", {}).items()},
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "BisimCertificate":
        return cls.from_dict(json.loads(text))


def certified_coords(sys: SwitchedLinearSystem) -> tuple[int, ...]:
    inert = set(sys.inert_states())
    return tuple(i for i in range(sys.n) if i not in inert)


def chain_radii(mode_certs: dict, segments, r0: float) -> tuple[float, ...]:
    """Smallest radii keeping each decayed ball inside the next mode's ball."""
    radii = [float(r0)]
    for (q_prev, T_prev), (q, _) in zip(segments, segments[1:]):
        mc_prev = mode_certs[q_prev]
        rho1 = radii[-1] * math.exp(-mc_prev.mu * T_prev / 2.0)
        lam = gen_eig_max(mode_certs[q].M, mc_prev.M)
        radii.append(lam * rho1)
    return tuple(radii)


def optimize_certificate(sys: SwitchedLinearSystem, sched: ModeSchedule, formula,
                         opts: CertificateOptions | None = None,
                         t_end: float | None = None) -> BisimCertificate:
    """Build a complete certificate for a fragment formula over a schedule."""
    opts = opts or CertificateOptions()
    terms: list[FragmentTerm] = formula if isinstance(formula, list) else fragment_terms(formula)
    t_end = float(t_end if t_end is not None else terms[0].t_end)
    sched.validate(sys)
    coords = tuple(opts.coords) if opts.coords is not None else certified_coords(sys)
    if opts.shape_index not in coords:
        raise ValueError("shape_index must be a certified coordinate")
    s = coords.index(opts.shape_index)
    normals = {}
    labels = {}
    for k, t in enumerate(terms):
        for nu, p in enumerate(t.preds):
            normals[(k, nu)] = tuple(p.a)
            labels[(k, nu)] = p.label
    a_obj = np.asarray(normals[tuple(opts.objective)])[list(coords)]
    mode_certs = {}
    for q in sorted(set(sched.modes)):
        md = sys.modes[q]
        A = md.A[np.ix_(coords, coords)]
        S = md.Sigma[list(coords)]
        M = optimize_metric(A, opts.mu, s, a_obj, opts.zeta, opts.method, opts.max_iter)
        alpha = float(np.trace(S.T @ M @ S))
        mode_certs[q] = ModeCertificate(M, float(opts.mu), alpha)
    gamma_hat = max(mc.alpha for mc in mode_certs.values()) * t_end / opts.epsilon
    r0 = opts.r0 if opts.r0 is not None else opts.r0_factor * gamma_hat
    radii = chain_radii(mode_certs, sched.segments, r0)
    z, delta = {}, {}
    for (k, nu), a in normals.items():
        ac = np.asarray(a)[list(coords)]
        for i, (q, _) in enumerate(sched.segments):
            zz = _z_general(mode_certs[q].M, ac)
            z[(k, nu, i)] = zz
            delta[(k, nu, i)] = (math.sqrt(radii[i]) + math.sqrt(gamma_hat)) / zz
    cert = BisimCertificate(coords, sys.n, mode_certs, sched.segments, radii, gamma_hat,
                            opts.epsilon, t_end, normals, z, delta, labels)
    cert.check(systems=mode_systems(sys, coords, mode_certs))
    return cert


def mode_systems(sys: SwitchedLinearSystem, coords, modes) -> dict:
    idx = list(coords)
    return {q: {"A": sys.modes[q].A[np.ix_(idx, idx)], "Sigma": sys.modes[q].Sigma[idx]}
            for q in modes}


def prob_bound(cert: BisimCertificate, q: int, T: float, gamma: float) -> float:
    """Lower bound on P{sup_[0,T] phi < gamma}."""
    if gamma <= 0 or T <= 0:
        raise ValueError("gamma and T must be positive")
    return max(0.0, 1.0 - cert.modes[q].alpha * T / gamma)


def containment_chain_check(cert: BisimCertificate) -> tuple[bool, list[float]]:
    """Per switch margin r_i - lambda_max(M_i, M_i-1) rho_1; ok when all >= 0."""
    margins = []
    segs = cert.segments
    for i in range(1, len(segs)):
        (q_prev, T_prev), (q, _) = segs[i - 1], segs[i]
        mc_prev = cert.modes[q_prev]
        rho1 = cert.radii[i - 1] * math.exp(-mc_prev.mu * T_prev / 2.0)
        lam = gen_eig_max(cert.modes[q].M, mc_prev.M)
        margins.append(cert.radii[i] - lam * rho1)
    tol = 1e-12 * max([1.0] + list(cert.radii))
    return all(m >= -tol for m in margins), margins


def delta_offsets(cert: BisimCertificate, keys=None) -> RobustModification:
    """Package delta_hat per (k, nu) and segment for robustify."""
    keys = keys if keys is not None else sorted(cert.normals)
    n_seg = len(cert.segments)
    deltas = {}
    for k, nu in keys:
        vals = []
        for i in range(n_seg):
            if (k, nu, i) not in cert.delta_hat:
                raise MissingZ(f"no offset for ({k}, {nu}, {i})")
            vals.append(cert.delta_hat[(k, nu, i)])
        deltas[(k, nu)] = tuple(vals)
    mus = tuple(cert.modes[q].mu for q, _ in cert.segments)
    return RobustModification(deltas, mus, cert.starts)
