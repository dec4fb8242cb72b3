"""Type-C (doubly fed) wind turbine: differential-algebraic model and linearization.

States x = [E'q, E'd, wr, x1, x2, x3, x4]; algebraic variables
y = [Pgen, Qgen, Vdr, Vqr, Idr, Iqr, Ids, Iqs, VD, thetaD].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, NoConvergence, SingularDs
from .params import WtgParams

STATE_NAMES = ("dEq", "dEd", "dwr", "dx1", "dx2", "dx3", "dx4")
ALG_NAMES = ("Pgen", "Qgen", "Vdr", "Vqr", "Idr", "Iqr", "Ids", "Iqs", "VD", "thetaD")
WR = 2  # rotor speed index


def mech_torque(wr: float, pitch: float, prm: WtgParams) -> float:
    lam = 2.0 * prm.k * wr * prm.Rt / (prm.p * prm.v_wind)
    d1 = lam + 0.08 * pitch
    d2 = pitch ** 3 + 1.0
    if abs(d1) < 1e-12 or abs(d2) < 1e-12:
        raise DomainError("tip-speed ratio denominator vanishes")
    inv_li = 1.0 / d1 - 0.035 / d2
    if abs(inv_li) < 1e-12:
        raise DomainError("lambda_i is unbounded")
    li = 1.0 / inv_li
    cp = 0.22 * (116.0 / li - 0.4 * pitch - 5.0) * math.exp(-12.5 / li)
    return 0.5 * prm.rho * math.pi * prm.Rt ** 2 * prm.wb * cp * prm.v_wind ** 3 / (prm.Sb * wr)


def wtg_residual(x, y, uw: float, prm: WtgParams, pitch: float | None = None) -> np.ndarray:
    """Stacked [f(x, y, u) (7); g(x, y, u) (10)]; g = 0 on the constraint manifold."""
    pitch = prm.pitch if pitch is None else pitch
    if pitch is None:
        raise ValueError("pitch angle is required")
    Eq, Ed, wr, x1, x2, x3, x4 = (float(v) for v in x)
    Pg, Qg, Vdr, Vqr, Idr, Iqr, Ids, Iqs, VD, thD = (float(v) for v in y)
    if VD <= 0:
        raise DomainError("terminal voltage magnitude must be positive")
    ws, Xs, Xr, Xm = prm.ws, prm.Xs, prm.Xr, prm.Xm
    Xsp, T0p = prm.Xs_p, prm.T0_p
    Pref = prm.C_opt * wr ** 3 + uw
    Qref = prm.Q_set
    Tm = mech_torque(wr, pitch, prm)
    f = [
        -(Eq + (Xs - Xsp) * Ids) / T0p + ws * Xm / Xr * Vdr - (ws - wr) * Ed,
        -(Ed - (Xs - Xsp) * Iqs) / T0p - ws * Xm / Xr * Vqr + (ws - wr) * Eq,
        ws / (2.0 * prm.HD) * (Tm - Ed * Ids - Eq * Iqs),
        prm.KI1 * (Pref - Pg),
        prm.KI2 * (prm.KP1 * (Pref - Pg) + x1 - Iqr),
        prm.KI3 * (Qref - Qg),
        prm.KI4 * (prm.KP3 * (Qref - Qg) + x3 - Idr),
    ]
    igc = (Vqr * Iqr + Vdr * Idr) / VD
    dth = prm.theta_grid - thD
    g = [
        prm.KP2 * (prm.KP1 * (Pref - Pg) + x1 - Iqr) + x2 - Vqr,
        prm.KP4 * (prm.KP3 * (Qref - Qg) + x3 - Idr) + x4 - Vdr,
        -Pg + Ed * Ids + Eq * Iqs - prm.Rs * (Ids ** 2 + Iqs ** 2) - (Vqr * Iqr + Vdr * Idr),
        -Qg + Eq * Ids - Ed * Iqs - Xsp * (Ids ** 2 + Iqs ** 2),
        -Idr + Eq / Xm + Xm / Xr * Ids,
        -Iqr - Ed / Xm + Xm / Xr * Iqs,
        # stator: E'q - j E'd = (Rs + j Xs')(Iqs - j Ids) + VD
        Eq - (prm.Rs * Iqs + Xsp * Ids + VD),
        -Ed - (-prm.Rs * Ids + Xsp * Iqs),
        # terminal: VD = j Xt (Iqs - j Ids - Igc) + V e^{j(theta - thetaD)}
        VD - (prm.Xt * Ids + prm.V_grid * math.cos(dth)),
        -(prm.Xt * (Iqs - igc) + prm.V_grid * math.sin(dth)),
    ]
    return np.array(f + g)


@dataclass
class Equilibrium:
    x: np.ndarray
    y: np.ndarray
    pitch: float
    iterations: int
    residual: float
    history: list = field(default_factory=list)


def initial_guess(prm: WtgParams) -> np.ndarray:
    """Flat voltage, currents from the power set point, speed from the MPPT curve."""
    wr = (prm.P_gen / prm.C_opt) ** (1.0 / 3.0)
    x = np.array([1.0, 0.0, wr, 0.0, 0.0, 0.0, 0.0])
    y = np.array([prm.P_gen, 0.0, 0.0, 0.0, prm.P_gen, prm.P_gen, 0.0, prm.P_gen, 1.0, 0.0])
    z = np.concatenate([x, y])
    if prm.pitch is None:
        z = np.append(z, 3.0)
    return z


def _fd_jacobian(fun, v: np.ndarray, rel: float = 1e-6) -> np.ndarray:
    f0 = fun(v)
    J = np.empty((f0.size, v.size))
    for i in range(v.size):
        h = rel * (1.0 + abs(v[i]))
        e = np.zeros_like(v)
        e[i] = h
        J[:, i] = (fun(v + e) - fun(v - e)) / (2.0 * h)
    return J


def find_equilibrium(prm: WtgParams, z0=None, tol: float = 1e-9, max_iter: int = 100) -> Equilibrium:
    """Damped Newton on f = 0, g = 0 (and Pgen = target when the pitch is free)."""
    free_pitch = prm.pitch is None

    def F(z):
        pitch = z[17] if free_pitch else prm.pitch
        r = wtg_residual(z[:7], z[7:17], 0.0, prm, pitch)
        if free_pitch:
            r = np.append(r, z[7] - prm.P_gen)
        return r

    z = initial_guess(prm) if z0 is None else np.asarray(z0, dtype=float).copy()
    try:
        r = F(z)
    except DomainError:
        raise
    best = float(np.max(np.abs(r)))
    history = [best]
    it = 0
    while best > tol:
        if it >= max_iter:
            raise NoConvergence(f"equilibrium solve stalled; best residual {best:.3e}")
        try:
            J = _fd_jacobian(F, z)
            step = np.linalg.solve(J, -r)
        except (np.linalg.LinAlgError, DomainError):
            raise NoConvergence(f"singular Newton system; best residual {best:.3e}") from None
        lam = 1.0
        while lam > 1e-6:
            trial = z + lam * step
            try:
                rt = F(trial)
                val = float(np.max(np.abs(rt)))
            except (DomainError, OverflowError, ValueError):
                val = math.inf
            if np.isfinite(val) and val < (1.0 - 1e-4 * lam) * best:
                break
            lam *= 0.5
        else:
            raise NoConvergence(f"line search failed; best residual {best:.3e}")
        z, r, best = trial, rt, val
        history.append(best)
        it += 1
    pitch = float(z[17]) if free_pitch else float(prm.pitch)
    return Equilibrium(z[:7].copy(), z[7:17].copy(), pitch, it, best, history)


@dataclass
class DaeBlocks:
    """Linearized DAE: dx = (As x + Bs y + Ms u) dt + S1 dw, 0 = Cs x + Ds y + Ns u + S2 w'."""

    As: np.ndarray
    Bs: np.ndarray
    Cs: np.ndarray
    Ds: np.ndarray
    Ms: np.ndarray
    Ns: np.ndarray
    Es: np.ndarray
    Fs: np.ndarray
    S1: np.ndarray
    S2: np.ndarray


def linearize(prm: WtgParams, eq: Equilibrium, rel: float = 1e-6) -> DaeBlocks:
    """Central finite-difference Jacobians at the equilibrium."""
    x0, y0 = eq.x, eq.y

    def fx(v):
        return wtg_residual(v, y0, 0.0, prm, eq.pitch)

    def fy(v):
        return wtg_residual(x0, v, 0.0, prm, eq.pitch)

    def fu(v):
        return wtg_residual(x0, y0, float(v[0]), prm, eq.pitch)

    Jx = _fd_jacobian(fx, x0, rel)
    Jy = _fd_jacobian(fy, y0, rel)
    Ju = _fd_jacobian(fu, np.zeros(1), rel)
    Ds = Jy[7:]
    s = np.linalg.svd(Ds, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise SingularDs(f"algebraic Jacobian is singular (rank {int(np.sum(s > 1e-12 * s[0]))} of 10)")
    S1 = np.zeros((7, 1))
    S1[WR, 0] = prm.k_w
    Es = np.zeros((1, 7))
    Fs = np.zeros((1, 10))
    Fs[0, 0] = 1.0
    return DaeBlocks(Jx[:7], Jy[:7], Jx[7:], Ds, Ju[:7], Ju[7:], Es, Fs, S1, np.zeros((10, 1)))
