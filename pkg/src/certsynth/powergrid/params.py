"""Parameter sets for the wind-turbine, frequency-response and network models.

The doubly-fed wind turbine defaults are representative 1.5 MW Type-C
machine constants, PI gains and rotor geometry; any of them can be
overridden from a scenario.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

WS = 2.0 * math.pi * 60.0


@dataclass(frozen=True)
class WtgParams:
    # machine (pu on the turbine base)
    Xs: float = 4.0452
    Xr: float = 4.05234
    Xm: float = 3.95279
    Rs: float = 0.00488
    Rr: float = 0.00549
    Xt: float = 0.05
    HD: float = 3.5
    ws: float = WS
    # rotor-side converter PI gains
    KP1: float = 1.0
    KI1: float = 5.0
    KP2: float = 0.5
    KI2: float = 5.0
    KP3: float = 1.0
    KI3: float = 5.0
    KP4: float = 0.5
    KI4: float = 5.0
    # turbine
    Rt: float = 38.5
    rho: float = 1.225
    k: float = 1.0 / 72.0
    p: float = 6.0
    pitch: float | None = None     # degrees; None solves for it from P_gen
    wb: float = WS
    Sb: float = 1.0e6
    # operating point
    P_gen: float = 1.5
    v_wind: float = 12.0
    Q_set: float = 0.0
    C_opt: float = 16.1985e-9
    k_w: float = 1.0
    V_grid: float = 1.0
    theta_grid: float = 0.0

    def __post_init__(self):
        for name in ("Xs", "Xr", "Xm", "Xt", "HD", "Rt", "rho", "Sb", "C_opt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def Xs_p(self) -> float:
        return self.Xs - self.Xm ** 2 / self.Xr

    @property
    def T0_p(self) -> float:
        return self.Xr / (self.ws * self.Rr)

    def updated(self, **kw) -> "WtgParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class GridParams:
    base_mva: float = 1000.0
    H: float = 4.0
    D: float = 1.0
    tau_ch: float = 0.3
    tau_g: float = 0.1
    R: float = 0.05
    ws: float = WS
    dPd: float = 0.15
    switch_times: tuple[float, ...] = (5.0, 8.75)
    storage_ramp: float = 0.04
    n_wtg: int = 200
    wtg_mva: float = 1.0
    horizon: float = 10.0
    min_dwell: float = 1.0
    # "per_unit": valve responds to dw/(ws R); "hertz": dw/(2 pi R)
    droop_form: str = "per_unit"
    n_storage: int = 1

    def __post_init__(self):
        if self.droop_form not in ("per_unit", "hertz"):
            raise ValueError("droop_form must be 'per_unit' or 'hertz'")
        if self.n_storage < 1:
            raise ValueError("at least one storage unit is required")

    @property
    def droop_gain(self) -> float:
        if self.droop_form == "per_unit":
            return 1.0 / (self.ws * self.R)
        return 1.0 / (2.0 * math.pi * self.R)


def wtg_to_system_pu(p_unit: float, n_units: int = 200, unit_mva: float = 1.0,
                     base_mva: float = 1000.0) -> float:
    """Aggregate per-turbine power (pu on unit_mva) into system pu on base_mva."""
    return p_unit * n_units * unit_mva / base_mva


@dataclass(frozen=True)
class Line:
    a: int
    b: int
    x: float
    charging: float = 0.0

    @property
    def name(self) -> str:
        return f"{self.a}_{self.b}"


@dataclass(frozen=True)
class NetworkData:
    buses: tuple[int, ...]
    lines: tuple[Line, ...]
    transformers: tuple[Line, ...] = ()
    loads: dict = field(default_factory=dict, hash=False)
    slack: int = 1
    wind_bus: int = 3
    storage_buses: tuple[int, ...] = ()
    wind_base: float = 0.3
    monitored: tuple[str, ...] = ()

    @property
    def branches(self) -> tuple[Line, ...]:
        return tuple(self.lines) + tuple(self.transformers)


def ninebus_network() -> NetworkData:
    """Nine-bus test grid with its line and load data.

    The thermal plant sits behind bus 7 and the wind farm behind bus 2.
    Bus 9 carries most of the load.
    """
    lines = (
        Line(2, 8, 0.01, 0.0006625),
        Line(2, 9, 0.01, 0.0006625),
        Line(7, 8, 0.04, 0.0023),
        Line(7, 9, 0.04, 0.0023),
        Line(4, 8, 0.03, 0.0031),
        Line(4, 9, 0.03, 0.0031),
        Line(4, 5, 0.03, 0.0034),
        Line(5, 6, 0.03, 0.0094),
        Line(6, 7, 0.02, 0.0258),
    )
    transformers = (Line(1, 7, 1.8868), Line(3, 2, 0.618))
    loads = {9: 0.4, 8: 0.1, 5: 0.05, 6: 0.05}
    return NetworkData(
        buses=tuple(range(1, 10)),
        lines=lines,
        transformers=transformers,
        loads=loads,
        slack=1,
        wind_bus=3,
        storage_buses=(1, 3),
        wind_base=0.3,
        monitored=tuple(l.name for l in lines),
    )


def params_from_mapping(cls, data: dict | None):
    """Instantiate a parameter dataclass from a config table, rejecting unknown keys."""
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise KeyError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    for key, val in list(data.items()):
        if isinstance(val, list):
            data[key] = tuple(val)
    return cls(**data)
