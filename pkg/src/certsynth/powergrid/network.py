"""DC power flow on the transmission network and line-flow output functionals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from ..errors import IslandedNetwork
from ..sysmodel import SwitchedLinearSystem
from .kron import KronModel
from .params import GridParams, NetworkData, wtg_to_system_pu


@dataclass(frozen=True)
class DcFlowModel:
    """Flows = PTDF @ injections, with injections in system pu per bus."""

    buses: tuple[int, ...]
    branch_names: tuple[str, ...]
    susceptance: np.ndarray   # per branch, 1/x
    incidence: np.ndarray     # branch x bus, +1 at from, -1 at to
    ptdf: np.ndarray          # branch x bus; slack column is zero
    slack: int

    def flows(self, injections: np.ndarray) -> np.ndarray:
        return self.ptdf @ np.asarray(injections, dtype=float)

    def column(self, bus: int) -> np.ndarray:
        return self.ptdf[:, self.buses.index(bus)]


def dc_model(net: NetworkData) -> DcFlowModel:
    buses = tuple(net.buses)
    idx = {b: i for i, b in enumerate(buses)}
    branches = net.branches
    nb, nl = len(buses), len(branches)
    inc = np.zeros((nl, nb))
    bsus = np.empty(nl)
    for k, br in enumerate(branches):
        if br.x <= 0:
            raise ValueError(f"branch {br.name} needs a positive reactance")
        inc[k, idx[br.a]] = 1.0
        inc[k, idx[br.b]] = -1.0
        bsus[k] = 1.0 / br.x
    adj = (np.abs(inc.T) @ np.abs(inc)) > 0
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise IslandedNetwork(f"susceptance graph has {ncomp} islands")
    Bbus = inc.T @ (bsus[:, None] * inc)
    keep = [i for i, b in enumerate(buses) if b != net.slack]
    theta = np.zeros((nb, nb))
    theta[np.ix_(keep, keep)] = np.linalg.inv(Bbus[np.ix_(keep, keep)])
    ptdf = (bsus[:, None] * inc) @ theta
    return DcFlowModel(buses, tuple(br.name for br in branches), bsus, inc, ptdf, net.slack)


def base_injections(net: NetworkData) -> np.ndarray:
    """Wind at its scheduled output, loads withdrawn, slack balancing."""
    inj = np.zeros(len(net.buses))
    pos = {b: i for i, b in enumerate(net.buses)}
    inj[pos[net.wind_bus]] += net.wind_base
    for bus, load in net.loads.items():
        inj[pos[bus]] -= load
    inj[pos[net.slack]] -= inj.sum()
    return inj


def dc_flows(net: NetworkData, injections=None) -> dict[str, float]:
    model = dc_model(net)
    inj = base_injections(net) if injections is None else np.asarray(injections, dtype=float)
    return dict(zip(model.branch_names, model.flows(inj)))


@dataclass(frozen=True)
class LineFlowOutput:
    """P_line = a @ x + c @ u + base."""

    name: str
    a: np.ndarray
    c: np.ndarray
    base: float


def line_flow_outputs(net: NetworkData, kron: KronModel, grid: GridParams,
                      sys: SwitchedLinearSystem) -> dict[str, LineFlowOutput]:
    """Flow deviation on each monitored line as a functional of (x, u).

    The wind farm injects kw (C x + D u_w) at its bus; each storage unit's
    input injects at its own bus.  The slack bus absorbs the balance, so
    injections there move no flow.
    """
    model = dc_model(net)
    base = model.flows(base_injections(net))
    kw = wtg_to_system_pu(1.0, grid.n_wtg, grid.wtg_mva, grid.base_mva)
    wind_col = model.column(net.wind_bus)
    storage_inputs = [i for i, nm in enumerate(sys.input_names) if nm.startswith("us")]
    if net.storage_buses and len(net.storage_buses) != len(storage_inputs):
        raise ValueError("one storage bus is needed per storage input")
    out = {}
    monitored = net.monitored or model.branch_names
    for name in monitored:
        k = model.branch_names.index(name)
        a = np.zeros(sys.n)
        c = np.zeros(sys.p)
        a[:7] = wind_col[k] * kw * kron.C[0]
        c[0] = wind_col[k] * kw * kron.D[0, 0]
        for j, bus in zip(storage_inputs, net.storage_buses):
            c[j] = model.column(bus)[k]
        out[name] = LineFlowOutput(name, a, c, float(base[k]))
    return out
