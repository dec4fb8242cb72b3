"""Switched frequency-response model of a thermal plant with a wind farm and storage."""

from __future__ import annotations

import numpy as np

from ..sysmodel import Mode, ModeSchedule, SwitchedLinearSystem
from .kron import KronModel
from .params import GridParams, wtg_to_system_pu
from .wtg import STATE_NAMES

SFR_NAMES = ("dw", "dPs", "dPm", "dPv")
DW, DPS, DPM, DPV = 7, 8, 9, 10


def assemble_switched(kron: KronModel, grid: GridParams) -> tuple[SwitchedLinearSystem, ModeSchedule]:
    """Eleven-state system [wind turbine (7), dw, dPs, dPm, dPv] with inputs [uw, us...].

    Mode 0 holds the storage ramp at zero; mode 1 ramps dPs at
    ``grid.storage_ramp``.  The generation loss enters as a constant drift.
    """
    n = 11
    ns = grid.n_storage
    p = 1 + ns
    kw = wtg_to_system_pu(1.0, grid.n_wtg, grid.wtg_mva, grid.base_mva)
    kf = grid.ws / (2.0 * grid.H)
    A = np.zeros((n, n))
    B = np.zeros((n, p))
    S = np.zeros((n, kron.Sigma.shape[1]))
    A[:7, :7] = kron.A
    B[:7, 0] = kron.B[:, 0]
    S[:7] = kron.Sigma
    A[DW, :7] = kf * kw * kron.C[0]
    A[DW, DW] = -grid.D / (2.0 * grid.H)
    A[DW, DPS] = kf
    A[DW, DPM] = kf
    B[DW, 0] = kf * kw * kron.D[0, 0]
    B[DW, 1:] = kf
    S[DW] = kf * kw * kron.E[0]
    A[DPM, DPM] = -1.0 / grid.tau_ch
    A[DPM, DPV] = 1.0 / grid.tau_ch
    A[DPV, DPV] = -1.0 / grid.tau_g
    A[DPV, DW] = -grid.droop_gain / grid.tau_g
    d0 = np.zeros(n)
    d0[DW] = -kf * grid.dPd
    d1 = d0.copy()
    d1[DPS] = grid.storage_ramp
    modes = (
        Mode(0, A, B, S, "balanced", d0),
        Mode(1, A, B, S, "storage_ramp", d1),
    )
    unit = np.zeros(n)
    unit[DW] = -kf
    inputs = ("uw",) + (("us",) if ns == 1 else tuple(f"us{i + 1}" for i in range(ns)))
    sys = SwitchedLinearSystem(
        modes=modes,
        edges=frozenset({(0, 1), (1, 0)}),
        min_dwell=grid.min_dwell,
        state_names=STATE_NAMES + SFR_NAMES,
        input_names=inputs,
        disturbance_channels={"dPd": unit},
    )
    sched = frequency_schedule(grid)
    sched.validate(sys)
    return sys, sched


def frequency_schedule(grid: GridParams) -> ModeSchedule:
    t1, t2 = grid.switch_times
    segs = [(0, t1), (1, t2 - t1)]
    if grid.horizon > t2:
        segs.append((0, grid.horizon - t2))
    return ModeSchedule(tuple(segs)).truncate(grid.horizon)
