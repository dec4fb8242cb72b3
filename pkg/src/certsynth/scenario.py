"""Scenario files: one TOML document describing a full certify/synthesize/verify run.

Top-level tables (all optional except ``scenario``):

    [scenario]     name, builder = "fourbus" | "ninebus" | "matrices", formula (text)
    [wtg]          WtgParams overrides
    [grid]         GridParams overrides
    [certificate]  mu, epsilon, zeta, r0, r0_factor, method, max_iter, shape (state name),
                   objective = [k, nu]
    [synthesis]    dt, weights, input_bounds, margin, solver, pool, rho, centers, strategy
    [simulation]   dt, horizon, paths, seed, scheme, initial, noise
    [[simulation.disturbance]]  t0, t1, channel, magnitude
    [system]       for builder = "matrices": state_names, input_names, min_dwell, edges,
                   schedule = [[mode, duration], ...], x0, and [[system.mode]] tables with
                   A, B, Sigma, d (and optional name)
    [[variable]]   derived variables: name, a (state coefficients), c, offset
"""

from __future__ import annotations

import sys
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .bisim import CertificateOptions
from .errors import ConfigError
from .mcsim import Disturbance, SimConfig
from .mtl.ast import Formula
from .mtl.parser import VariableTable, parse_formula
from .powergrid.params import GridParams, WtgParams, params_from_mapping
from .powergrid.scenarios import CaseStudy, build_fourbus, build_ninebus
from .sysmodel import InitialBall, Mode, ModeSchedule, SwitchedLinearSystem

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass
class SynthOptions:
    dt: float = 0.01
    weights: tuple[float, ...] | None = None
    input_bounds: tuple[tuple[float, float], ...] | None = None
    margin: float = 0.0
    solver: str = "auto"
    pool: bool = False
    rho: float = 0.5
    centers: int = 5
    strategy: str = "support"


@dataclass
class Scenario:
    """A loaded scenario with its system, formula and options resolved."""

    name: str
    system: SwitchedLinearSystem
    schedule: ModeSchedule            # full simulation schedule
    t_end: float                      # formula horizon
    table: VariableTable
    formula_text: str
    cert_options: CertificateOptions
    synth: SynthOptions
    sim: SimConfig
    x0: np.ndarray
    pool_variables: tuple[str, ...] = ()
    case: CaseStudy | None = None
    columns: dict[str, str] = field(default_factory=dict)   # export column -> variable

    def formula(self) -> Formula:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            return parse_formula(self.formula_text, self.table)

    def synthesis_schedule(self) -> ModeSchedule:
        return self.schedule.truncate(self.t_end)

    def pool_keys(self) -> tuple[tuple[int, int], ...]:
        from .mtl.fragment import fragment_terms
        from .powergrid.scenarios import mentions

        keys = []
        for k, term in enumerate(fragment_terms(self.formula())):
            for nu, p in enumerate(term.preds):
                if any(mentions(p.label, v) for v in self.pool_variables):
                    keys.append((k, nu))
        return tuple(keys)

    def initial_ball(self, cert) -> InitialBall:
        q0 = cert.segments[0][0]
        return InitialBall(self.x0, cert.radii[0], cert.metric(q0), cert.coords)


def _table(doc: dict, name: str) -> dict:
    val = doc.get(name, {})
    if not isinstance(val, dict):
        raise ConfigError(f"[{name}] must be a table")
    return val


def _dataclass_from(cls, data: dict, where: str, **extra):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")
    kw = {}
    for k, v in data.items():
        if isinstance(v, list):
            v = tuple(tuple(x) if isinstance(x, list) else x for x in v)
        kw[k] = v
    kw.update(extra)
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from None


def load_scenario(path, overrides: dict | None = None) -> Scenario:
    """Read a scenario file; ``overrides`` maps "table.key" to values and wins over the file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"scenario file not found: {path}")
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        tbl, _, k = key.partition(".")
        doc.setdefault(tbl, {})[k] = val
    return scenario_from_dict(doc, base=path.parent)


def scenario_from_dict(doc: dict, base: Path | None = None) -> Scenario:
    head = _table(doc, "scenario")
    builder = head.get("builder", "matrices")
    name = head.get("name", builder)
    cert_raw = dict(_table(doc, "certificate"))
    synth = _dataclass_from(SynthOptions, _table(doc, "synthesis"), "synthesis")
    sim_raw = dict(_table(doc, "simulation"))
    dist = tuple(_dataclass_from(Disturbance, d, "simulation.disturbance")
                 for d in sim_raw.pop("disturbance", []))
    case = None
    pool: tuple[str, ...] = ()
    columns: dict[str, str] = {}
    if builder in ("fourbus", "ninebus"):
        try:
            wtg = params_from_mapping(WtgParams, _table(doc, "wtg"))
            grid_raw = dict(_table(doc, "grid"))
            if builder == "ninebus":
                grid_raw.setdefault("n_storage", 2)
            grid = params_from_mapping(GridParams, grid_raw)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        kw = {"weights": synth.weights} if synth.weights is not None else {}
        case = build_fourbus(wtg, grid, **kw) if builder == "fourbus" else build_ninebus(wtg, grid, **kw)
        system, schedule, table = case.system, case.schedule, case.table
        formula_text = head.get("formula", case.formula_text)
        t_end = float(case.t_end)
        x0 = np.zeros(system.n)
        pool = case.pool_variables
        if synth.weights is None:
            synth.weights = case.weights
        columns = {"df_Hz": "df", "dfr_Hz": "dfr"}
        columns.update({f"P_line_{v[2:]}": v for v in pool})
        cert_raw.setdefault("shape", system.state_names[case.cert_options.shape_index])
    elif builder == "matrices":
        system, schedule, x0 = _matrices_system(_table(doc, "system"))
        table = VariableTable(system.state_names, system.input_names)
        if "formula" not in head:
            raise ConfigError("[scenario] needs a formula for the matrices builder")
        formula_text = head["formula"]
        t_end = float(head.get("t_end", schedule.t_end))
        columns = {nm: nm for nm in system.state_names}
    else:
        raise ConfigError(f"unknown builder {builder!r}")
    for var in doc.get("variable", []):
        try:
            table.add(var["name"], var.get("a"), var.get("c"), var.get("offset", 0.0))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"[[variable]]: {exc}") from None
        columns.setdefault(var["name"], var["name"])
    if "pool" in head:
        pool = tuple(head["pool"])
    shape = cert_raw.pop("shape", system.state_names[0])
    if shape not in system.state_names:
        raise ConfigError(f"certificate shape {shape!r} is not a state name")
    cert_opts = _dataclass_from(CertificateOptions, cert_raw, "certificate",
                                shape_index=system.state_names.index(shape))
    sim_raw.setdefault("horizon", t_end)
    sim = _dataclass_from(SimConfig, sim_raw, "simulation", disturbances=dist)
    sc = Scenario(name, system, schedule, t_end, table, formula_text, cert_opts, synth, sim,
                  x0, pool, case, columns)
    try:
        sc.formula()
    except Exception as exc:  # surface formula problems as configuration errors
        raise ConfigError(f"formula: {exc}") from None
    return sc


def _matrices_system(spec: dict) -> tuple[SwitchedLinearSystem, ModeSchedule, np.ndarray]:
    try:
        states = tuple(spec["state_names"])
        inputs = tuple(spec.get("input_names", ()))
        modes = []
        for q, m in enumerate(spec["mode"]):
            A = np.array(m["A"], dtype=float)
            n = A.shape[0]
            B = np.array(m.get("B", np.zeros((n, len(inputs)))), dtype=float).reshape(n, len(inputs))
            S = np.array(m.get("Sigma", np.zeros((n, 1))), dtype=float).reshape(n, -1)
            d = np.array(m.get("d", np.zeros(n)), dtype=float)
            modes.append(Mode(q, A, B, S, m.get("name", f"mode{q}"), d))
        edges = frozenset(tuple(e) for e in spec.get("edges", []))
        sys_ = SwitchedLinearSystem(tuple(modes), edges, float(spec.get("min_dwell", 0.0)),
                                    states, inputs)
        sched = ModeSchedule(tuple((int(q), float(T)) for q, T in spec["schedule"]))
        sched.validate(sys_)
        x0 = np.array(spec.get("x0", np.zeros(len(states))), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"[system]: {exc}") from None
    return sys_, sched, x0
