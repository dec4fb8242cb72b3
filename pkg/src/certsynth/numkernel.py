"""Dense linear-algebra helpers: eigen checks, Lyapunov solves, ZOH discretization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, NoConvergence, NonSymmetric, NotHurwitz

SYM_TOL = 1e-10


@dataclass(frozen=True)
class SymEig:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2 or m.size == 0:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D array")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def _check_square(m: np.ndarray, name: str) -> None:
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got {m.shape}")


def _check_symmetric(s: np.ndarray, tol: float = SYM_TOL) -> None:
    scale = max(1.0, float(np.max(np.abs(s))))
    if np.max(np.abs(s - s.T)) > tol * scale:
        raise NonSymmetric(f"asymmetry {np.max(np.abs(s - s.T)):.3e} exceeds tolerance")


def sym_eig(S) -> SymEig:
    """Eigen-decomposition of a symmetric matrix, eigenvalues ascending."""
    s = as_matrix(S, "S")
    _check_square(s, "S")
    _check_symmetric(s)
    sym = 0.5 * (s + s.T)
    try:
        w, v = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NoConvergence(str(exc)) from exc
    return SymEig(w, v)


def is_pd(S, tol: float = 0.0) -> bool:
    return bool(sym_eig(S).eigenvalues[0] > tol)


def max_real_eig(A) -> float:
    a = as_matrix(A, "A")
    _check_square(a, "A")
    return float(np.max(np.linalg.eigvals(a).real))


def is_hurwitz(A, margin: float = 1e-10) -> bool:
    return max_real_eig(A) < -margin


def lyapunov_solve(A, Q, mu: float = 0.0) -> np.ndarray:
    """Solve (A + mu/2 I)^T M + M (A + mu/2 I) = -Q for symmetric M."""
    a = as_matrix(A, "A")
    q = as_matrix(Q, "Q")
    _check_square(a, "A")
    if q.shape != a.shape:
        raise DimensionMismatch(f"Q shape {q.shape} does not match A {a.shape}")
    _check_symmetric(q)
    if mu < 0:
        raise ValueError("mu must be non-negative")
    shifted = a + 0.5 * mu * np.eye(a.shape[0])
    lead = max_real_eig(shifted)
    if lead >= -1e-10:
        raise NotHurwitz(f"A + (mu/2)I has eigenvalue with real part {lead:.3e}")
    m = sla.solve_continuous_lyapunov(shifted.T, -q)
    m = 0.5 * (m + m.T)
    resid = a.T @ m + m @ a + mu * m + q
    if np.linalg.norm(resid) > 1e-8 * max(1.0, np.linalg.norm(q)):
        raise NoConvergence(f"Lyapunov residual {np.linalg.norm(resid):.3e}")
    return m


def expm_with_input(A, B, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization via one augmented exponential."""
    a = as_matrix(A, "A")
    _check_square(a, "A")
    b = np.asarray(B, dtype=float)
    if b.ndim == 1:
        b = b.reshape(-1, 1)
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"B has {b.shape[0]} rows, A is {a.shape[0]}x{a.shape[0]}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    n, p = a.shape[0], b.shape[1]
    aug = np.zeros((n + p, n + p))
    aug[:n, :n] = a
    aug[:n, n:] = b
    e = sla.expm(aug * dt)
    return e[:n, :n], e[:n, n:]


def noise_covariance(A, Sigma, dt: float) -> np.ndarray:
    """Covariance of int_0^dt exp(A s) Sigma dw over one step.

    Van Loan's block exponential on a sub-step short enough that exp(-A h)
    stays well conditioned, then doubled back up with
    Q(2h) = Q(h) + exp(A h) Q(h) exp(A h)^T.
    """
    a = as_matrix(A, "A")
    sig = np.asarray(Sigma, dtype=float).reshape(a.shape[0], -1)
    n = a.shape[0]
    norm = float(np.linalg.norm(a, 1)) * dt
    k = max(0, int(math.ceil(math.log2(norm / 0.25)))) if norm > 0.25 else 0
    h = dt / 2 ** k
    blk = np.zeros((2 * n, 2 * n))
    blk[:n, :n] = -a
    blk[:n, n:] = sig @ sig.T
    blk[n:, n:] = a.T
    e = sla.expm(blk * h)
    phi = e[n:, n:].T
    q = phi @ e[:n, n:]
    q = 0.5 * (q + q.T)
    for _ in range(k):
        q = q + phi @ q @ phi.T
        phi = phi @ phi
        q = 0.5 * (q + q.T)
    return q


def psd_sqrt_factor(C) -> np.ndarray:
    """Return L with L L^T = C for a symmetric PSD matrix (eigen-based)."""
    c = as_matrix(C, "C")
    w, v = np.linalg.eigh(0.5 * (c + c.T))
    w = np.clip(w, 0.0, None)
    return v * np.sqrt(w)


def gen_eig_max(M_new, M_old) -> float:
    """Largest lambda with det(M_new - lambda M_old) = 0, M_old PD."""
    w = sla.eigh(as_matrix(M_new), as_matrix(M_old), eigvals_only=True)
    return float(w[-1])


def solve(A, b) -> np.ndarray:
    return np.linalg.solve(as_matrix(A, "A"), np.asarray(b, dtype=float))
