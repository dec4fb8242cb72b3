"""Four-bus and nine-bus wind/storage frequency-regulation case studies."""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field

from ..bisim import CertificateOptions
from ..mtl.fragment import fragment_terms
from ..mtl.parser import VariableTable, parse_formula
from ..sysmodel import ModeSchedule, SwitchedLinearSystem
from .kron import KronModel, kron_reduce
from .network import LineFlowOutput, line_flow_outputs
from .params import GridParams, NetworkData, WtgParams, ninebus_network
from .sfr import DW, assemble_switched
from .wtg import WR, Equilibrium, find_equilibrium, linearize

FREQUENCY_SPEC = (
    "G[0,5] (df <= 0.5 & df >= -0.5 & dfr <= 10 & dfr >= -10)"
    " & G[2,5] (df <= 0.4 & df >= -0.4{lines})"
)
LINE_LIMIT = 0.25
# reference offsets shown next to ours; they rest on a metric that is not available here
REFERENCE_OFFSETS = {"df": 0.217, "dfr": 6.08, "line": 0.0258}


@dataclass
class CaseStudy:
    name: str
    wtg: WtgParams
    grid: GridParams
    equilibrium: Equilibrium
    kron: KronModel
    system: SwitchedLinearSystem
    schedule: ModeSchedule
    table: VariableTable
    formula_text: str
    cert_options: CertificateOptions
    weights: tuple[float, ...]
    t_end: float = 5.0
    network: NetworkData | None = None
    lines: dict[str, LineFlowOutput] = field(default_factory=dict)
    pool_variables: tuple[str, ...] = ()

    def formula(self):
        # normalization notices for the scaled frequency variables are expected here
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            return parse_formula(self.formula_text, self.table)

    def synthesis_schedule(self) -> ModeSchedule:
        return self.schedule.truncate(self.t_end)

    def pool_keys(self) -> tuple[tuple[int, int], ...]:
        """(k, nu) of the predicates on pool variables, in formula order."""
        keys = []
        for k, term in enumerate(fragment_terms(self.formula())):
            for nu, p in enumerate(term.preds):
                if any(mentions(p.label, v) for v in self.pool_variables):
                    keys.append((k, nu))
        return tuple(keys)


def mentions(label: str, name: str) -> bool:
    return re.search(rf"(?<![A-Za-z0-9_]){re.escape(name)}(?![A-Za-z0-9_])", label) is not None


def frequency_table(sys: SwitchedLinearSystem) -> VariableTable:
    table = VariableTable(sys.state_names, sys.input_names)
    table.add_scaled("df", sys.state_names[DW], 1.0 / (2.0 * math.pi))
    table.add_scaled("dfr", sys.state_names[WR], 1.0 / (2.0 * math.pi))
    return table


def _wtg_pipeline(wtg: WtgParams) -> tuple[Equilibrium, KronModel]:
    eq = find_equilibrium(wtg)
    return eq, kron_reduce(linearize(wtg, eq))


def build_fourbus(wtg: WtgParams | None = None, grid: GridParams | None = None,
                  cert_options: CertificateOptions | None = None,
                  weights: tuple[float, ...] = (1.0, 1.0)) -> CaseStudy:
    wtg = wtg or WtgParams()
    grid = grid or GridParams()
    eq, kron = _wtg_pipeline(wtg)
    sys, sched = assemble_switched(kron, grid)
    opts = cert_options or CertificateOptions(shape_index=WR, objective=(0, 0))
    return CaseStudy(
        name="fourbus", wtg=wtg, grid=grid, equilibrium=eq, kron=kron, system=sys,
        schedule=sched, table=frequency_table(sys), formula_text=FREQUENCY_SPEC.format(lines=""),
        cert_options=opts, weights=tuple(weights),
    )


def build_ninebus(wtg: WtgParams | None = None, grid: GridParams | None = None,
                  network: NetworkData | None = None,
                  cert_options: CertificateOptions | None = None,
                  weights: tuple[float, ...] = (1.0, 100.0, 100.0),
                  line_limit: float = LINE_LIMIT) -> CaseStudy:
    wtg = wtg or WtgParams()
    grid = grid or GridParams(n_storage=2)
    network = network or ninebus_network()
    eq, kron = _wtg_pipeline(wtg)
    sys, sched = assemble_switched(kron, grid)
    table = frequency_table(sys)
    lines = line_flow_outputs(network, kron, grid, sys)
    names = []
    clauses = ""
    for name, out in lines.items():
        var = f"P_{name}"
        table.add(var, out.a, out.c, out.base)
        names.append(var)
        clauses += f" & {var} <= {line_limit!r} & {var} >= {-line_limit!r}"
    opts = cert_options or CertificateOptions(shape_index=WR, objective=(0, 0))
    return CaseStudy(
        name="ninebus", wtg=wtg, grid=grid, equilibrium=eq, kron=kron, system=sys,
        schedule=sched, table=table, formula_text=FREQUENCY_SPEC.format(lines=clauses),
        cert_options=opts, weights=tuple(weights), network=network, lines=lines,
        pool_variables=tuple(names),
    )
