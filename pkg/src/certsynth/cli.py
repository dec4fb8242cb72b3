"""certsynth command line: certify, synth, feedback, verify, simulate.

Outputs go to $CERTSYNTH_OUT/<scenario name>/ (default ./out). Every data file
is a pure function of the scenario and flags; wall-clock details go only to
meta.json.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import functools
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .bisim import BisimCertificate, containment_chain_check, mode_systems, optimize_certificate
from .errors import (
    CertificateCheckFailed, CertSynthError, ConfigError, Infeasible, NoConvergence,
    NumericalFailure, SingularDs, SingularM,
)
from .feedback import NominalLibrary, build_library, initial_centers
from .mcsim import (
    Disturbance, Feedforward, FeedbackLaw, ZeroInput, excursion_stats, prop_bound, run_batch,
    simulate_sde,
)
from .mtl.fragment import fragment_terms
from .scenario import Scenario, load_scenario
from .synth import SynthesisProblem, robust_formula, synthesize, synthesize_iterative
from .trace import SignalTrace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3
OUT_ENV = "CERTSYNTH_OUT"


# io helpers -----------------------------------------------------------------

def out_dir(sc: Scenario, root: str | None) -> Path:
    base = Path(root or os.environ.get(OUT_ENV, "out"))
    d = base / sc.name
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def write_csv(path: Path, header: list[str], cols: list[np.ndarray]) -> None:
    """Shortest round-trip float text, so files reload bit-exactly and diff cleanly."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in cols])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([repr(float(v)) for v in row] for row in data)


def record_meta(d: Path, command: str, argv: list[str]) -> None:
    path = d / "meta.json"
    meta = json.loads(path.read_text()) if path.exists() else {}
    meta[command] = {
        "argv": argv,
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    write_json(path, meta)


def trace_columns(sc: Scenario, tr: SignalTrace) -> tuple[list[str], list[np.ndarray]]:
    """t, the scenario's named outputs (df_Hz, dfr_Hz, P_line_*), inputs, then states."""
    header, cols = ["t"], [tr.times]
    for col, var in sc.columns.items():
        v = sc.table.lookup(var)
        header.append(col)
        cols.append(tr.states @ v.a + tr.inputs @ v.c + v.offset)
    for i, nm in enumerate(sc.system.input_names):
        header.append(nm)
        cols.append(tr.inputs[:, i])
    for i, nm in enumerate(sc.system.state_names):
        header.append(nm)
        cols.append(tr.states[:, i])
    return header, cols


def read_inputs(path: Path, p: int) -> np.ndarray:
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != p + 1:
        raise ConfigError(f"{path}: expected t plus {p} input columns")
    return data[:, 1:]


# pipeline stages ------------------------------------------------------------

def stage_certificate(sc: Scenario, path: str | None) -> BisimCertificate:
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"certificate file not found: {p}")
        cert = BisimCertificate.loads(p.read_text())
        cert.check(systems=mode_systems(sc.system, cert.coords, cert.modes))
        return cert
    return optimize_certificate(sc.system, sc.synthesis_schedule(), sc.formula(), sc.cert_options,
                                t_end=sc.t_end)


def base_problem(sc: Scenario, cert: BisimCertificate) -> SynthesisProblem:
    s = sc.synth
    return SynthesisProblem(
        sc.system, sc.synthesis_schedule(), robust_formula(sc.formula(), cert), s.dt, sc.x0,
        s.weights, s.input_bounds, s.margin, cert, s.solver,
    )


def stage_synth(sc: Scenario, cert: BisimCertificate, pool: bool):
    prob = base_problem(sc, cert)
    keys = sc.pool_keys() if pool else ()
    if keys:
        return synthesize_iterative(prob, keys)
    return synthesize(prob)


def stage_library(sc: Scenario, cert: BisimCertificate, n: int, rho: float, strategy: str,
                  seed: int) -> NominalLibrary:
    base = base_problem(sc, cert)
    normal = cert.normals.get(tuple(sc.cert_options.objective))
    centers = initial_centers(cert, sc.system.n, n, strategy, sc.x0, seed, normal)
    return build_library(base, centers, rho)


def _physical_offset(sc: Scenario, label: str, delta: float) -> float | None:
    """Offset in the units of the variable named in the predicate label."""
    from .powergrid.scenarios import mentions

    for var in sorted(sc.table.derived, key=len, reverse=True):
        if mentions(label, var):
            v = sc.table.lookup(var)
            return delta * float(np.linalg.norm(np.concatenate([v.a, v.c])))
    return None


def certify_report(sc: Scenario, cert: BisimCertificate) -> dict:
    ok, margins = containment_chain_check(cert)
    checks = cert.check(systems=mode_systems(sc.system, cert.coords, cert.modes))
    rows = []
    for (k, nu, i), d in sorted(cert.delta_hat.items()):
        label = cert.labels.get((k, nu), "")
        rows.append({"k": k, "nu": nu, "segment": i, "label": label, "z": cert.z[(k, nu, i)],
                     "delta_hat": d, "delta_hat_variable_units": _physical_offset(sc, label, d)})
    rep = {
        "scenario": sc.name,
        "epsilon": cert.epsilon,
        "t_end": cert.t_end,
        "gamma_hat": cert.gamma_hat,
        "radii": list(cert.radii),
        "alpha": {str(q): mc.alpha for q, mc in cert.modes.items()},
        "mu": {str(q): mc.mu for q, mc in cert.modes.items()},
        "checks": {str(q): v for q, v in checks.items()},
        "containment_ok": ok,
        "containment_margins": margins,
        "offsets": rows,
    }
    if sc.case is not None:
        from .powergrid.scenarios import REFERENCE_OFFSETS
        rep["reference_offsets"] = REFERENCE_OFFSETS
    return rep


# commands -------------------------------------------------------------------

def zeta_search(sc: Scenario, steps: int) -> tuple[BisimCertificate, list[dict]]:
    """Halve zeta from its configured value while synthesis stays feasible; keep the last feasible."""
    from dataclasses import replace

    best, log = None, []
    zeta = sc.cert_options.zeta
    for _ in range(steps):
        opts = replace(sc.cert_options, zeta=zeta)
        trial = Scenario(**{**vars(sc), "cert_options": opts})
        try:
            cert = stage_certificate(trial, None)
            stage_synth(trial, cert, sc.synth.pool)
        except Infeasible:
            log.append({"zeta": zeta, "feasible": False})
            break
        log.append({"zeta": zeta, "feasible": True})
        best = cert
        zeta /= 2.0
    if best is None:
        raise Infeasible(f"synthesis is infeasible already at zeta = {sc.cert_options.zeta}")
    return best, log


def cmd_certify(sc: Scenario, args) -> int:
    d = out_dir(sc, args.out)
    if args.zeta_search:
        cert, zlog = zeta_search(sc, args.zeta_search)
        for row in zlog:
            print(f"  zeta = {row['zeta']:.6g}: {'feasible' if row['feasible'] else 'infeasible'}")
    else:
        cert, zlog = stage_certificate(sc, None), []
    (d / "certificate.json").write_text(cert.dumps() + "\n")
    rep = certify_report(sc, cert)
    if zlog:
        rep["zeta_search"] = zlog
    write_json(d / "certify_report.json", rep)
    print(f"gamma_hat = {cert.gamma_hat:.6g}, r = {cert.radii[0]:.6g}, "
          f"containment {'ok' if rep['containment_ok'] else 'FAILED'}")
    seen = set()
    for row in rep["offsets"]:
        if row["segment"] == 0 and row["label"] not in seen:
            seen.add(row["label"])
            phys = row["delta_hat_variable_units"]
            extra = f" ({phys:.4g} in variable units)" if phys is not None else ""
            print(f"  delta_hat[{row['label']}] = {row['delta_hat']:.4g}{extra}")
    if not rep["containment_ok"]:
        raise CertificateCheckFailed("containment chain margins are negative")
    return EXIT_OK


def cmd_synth(sc: Scenario, args) -> int:
    d = out_dir(sc, args.out)
    cert = stage_certificate(sc, args.cert)
    try:
        res = stage_synth(sc, cert, args.pool if args.pool is not None else sc.synth.pool)
    except Infeasible as exc:
        write_json(d / "synth.json", {"status": "infeasible", "report": _jsonable(exc.report)})
        raise
    K = res.inputs.shape[0]
    write_csv(d / "inputs.csv", ["t", *sc.system.input_names],
              [res.trace.times[:K], *res.inputs.T])
    header, cols = trace_columns(sc, res.trace)
    legend = {}
    for k, term in enumerate(fragment_terms(res.formula)):
        for nu, pr in enumerate(term.preds):
            name = f"margin_{k}_{nu}"
            legend[name] = pr.label
            header.append(name)
            cols.append(pr.margins(res.trace.times, res.trace.states, res.trace.inputs))
    write_csv(d / "nominal.csv", header, cols)
    write_json(d / "synth.json", {
        "margin_columns": legend,
        "status": "optimal",
        "objective": res.objective,
        "robustness": res.robustness,
        "robustness_original": _rob(sc.formula(), res.trace),
        "active_constraints": len(res.active),
        "log": res.log,
    })
    print(f"objective = {res.objective:.6g}, robust-formula robustness = {res.robustness:.4g}")
    for entry in res.log:
        if entry.get("added"):
            print(f"  iteration {entry['iteration']}: added {', '.join(entry['added'])}")
    return EXIT_OK


def cmd_feedback(sc: Scenario, args) -> int:
    d = out_dir(sc, args.out)
    cert = stage_certificate(sc, args.cert)
    s = sc.synth
    lib = stage_library(sc, cert, _pick(args.centers, s.centers), _pick(args.rho, s.rho),
                        _pick(args.strategy, s.strategy), sc.sim.seed)
    lib.save(d / "library.npz")
    write_json(d / "feedback.json", {
        "size": lib.size, "rho": lib.rho, "window": lib.window,
        "centers": lib.centers.tolist(), "robustness": lib.robustness.tolist(),
    })
    print(f"library of {lib.size} traces, rho = {lib.rho}, min robustness "
          f"{float(np.min(lib.robustness)):.4g}")
    return EXIT_OK


def _controller(sc: Scenario, args, cert: BisimCertificate | None):
    """(factory, nominal trace or None) for the requested controller."""
    kind = args.controller
    if kind == "zero":
        return functools.partial(ZeroInput, sc.system.p), None
    if kind == "feedforward":
        if args.inputs:
            u = read_inputs(Path(args.inputs), sc.system.p)
            return functools.partial(Feedforward, u), None
        res = stage_synth(sc, cert, sc.synth.pool)
        return functools.partial(Feedforward, res.inputs), res.trace
    if args.library:
        if not Path(args.library).is_file():
            raise ConfigError(f"library file not found: {args.library}")
        lib = NominalLibrary.load(args.library)
    else:
        s = sc.synth
        lib = stage_library(sc, cert, s.centers, s.rho, s.strategy, sc.sim.seed)
    nominal = SignalTrace.from_arrays(lib.dt, lib.states[0], np.vstack([lib.inputs[0], lib.inputs[0][-1:]]))
    return functools.partial(FeedbackLaw, lib), nominal


def cmd_verify(sc: Scenario, args) -> int:
    d = out_dir(sc, args.out)
    needs_cert = args.controller != "zero" or sc.sim.initial == "uniform"
    cert = stage_certificate(sc, args.cert) if needs_cert else None
    factory, nominal = _controller(sc, args, cert)
    ball = sc.initial_ball(cert) if cert is not None else None
    rep = run_batch(sc.system, sc.schedule, sc.formula(), factory, sc.sim, sc.x0, ball,
                    nominal, cert, workers=args.workers)
    out = rep.to_dict()
    out["controller"] = args.controller
    out["disturbances"] = [vars(x) for x in sc.sim.disturbances]
    # the excursion bound assumes the modelled noise only
    if rep.excursion is not None and cert is not None and not sc.sim.disturbances:
        alpha = max(mc.alpha for mc in cert.modes.values())
        grid = cert.gamma_hat * np.array([0.25, 0.5, 1.0, 2.0, 4.0])
        table = excursion_stats(rep.excursion, grid)
        for row in table:
            row["bound"] = prop_bound(alpha, cert.t_end, row["gamma"])
        out["excursion_table"] = table
    stem = f"verify_{args.controller}"
    write_json(d / f"{stem}.json", out)
    cols = [np.arange(rep.paths), rep.robustness, (rep.robustness >= 0).astype(float)]
    header = ["path", "robustness", "satisfied"]
    if rep.excursion is not None:
        header.append("sup_excursion")
        cols.append(rep.excursion)
    write_csv(d / f"{stem}.csv", header, cols)
    print(f"{args.controller}: {rep.satisfied}/{rep.paths} satisfied "
          f"({100 * rep.rate:.1f}%), min robustness {rep.min_robustness:.4g}")
    for row in out.get("excursion_table", []):
        print(f"  P(sup phi >= {row['gamma']:.4g}) = {row['exceedance']:.3f} "
              f"(bound {row['bound']:.3f})")
    if args.require_rate is not None and rep.rate < args.require_rate:
        print(f"rate below the required {args.require_rate}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_simulate(sc: Scenario, args) -> int:
    d = out_dir(sc, args.out)
    needs_cert = args.controller != "zero"
    cert = stage_certificate(sc, args.cert) if needs_cert else None
    factory, _ = _controller(sc, args, cert)
    tr = simulate_sde(sc.system, sc.schedule, sc.x0, factory(), sc.sim, args.path)
    write_csv(d / f"trace_{args.controller}_{args.path}.csv", *trace_columns(sc, tr))
    print(f"robustness {_rob(sc.formula(), tr):.4g}")
    return EXIT_OK


def _rob(formula, tr) -> float:
    from .mtl.semantics import robustness

    return float(robustness(formula, tr, 0.0))


def _pick(flag, default):
    return default if flag is None else flag


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))


# argument parsing -----------------------------------------------------------

def _toml_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _set_pair(text: str) -> tuple[str, object]:
    key, sep, val = text.partition("=")
    if not sep or "." not in key:
        raise argparse.ArgumentTypeError("expected table.key=value")
    return key.strip(), _toml_value(val.strip())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="certsynth", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario file (TOML)")
        p.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./out)")
        p.add_argument("--set", action="append", type=_set_pair, default=[], metavar="T.K=V",
                       help="override any scenario entry, e.g. --set certificate.mu=0.2")
        p.add_argument("--seed", type=int, help="simulation seed")
        p.add_argument("--dt", type=float, help="synthesis step")

    p = sub.add_parser("certify", help="optimize and check the bisimulation certificate")
    common(p)
    p.add_argument("--mu", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--zeta", type=float)
    p.add_argument("--zeta-search", type=int, default=0, metavar="STEPS",
                   help="halve zeta up to STEPS times while synthesis stays feasible")

    p = sub.add_parser("synth", help="synthesize feedforward inputs")
    common(p)
    p.add_argument("--cert", help="certificate file (default: recompute)")
    p.add_argument("--pool", action=argparse.BooleanOptionalAction, default=None,
                   help="add pooled constraints iteratively")

    p = sub.add_parser("feedback", help="build the feedback library")
    common(p)
    p.add_argument("--cert")
    p.add_argument("-N", "--centers", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--strategy", choices=["support", "random"])

    for name, hlp in (("verify", "Monte Carlo batch"), ("simulate", "single sample path")):
        p = sub.add_parser(name, help=hlp)
        common(p)
        p.add_argument("--cert")
        p.add_argument("--controller", choices=["feedforward", "feedback", "zero"],
                       default="feedforward")
        p.add_argument("--inputs", help="feedforward input CSV (default: re-synthesize)")
        p.add_argument("--library", help="feedback library file (default: rebuild)")
        p.add_argument("--disturb", nargs=4, action="append", default=[],
                       metavar=("T1", "T2", "CHANNEL", "MAG"))
        p.add_argument("--initial", choices=["center", "uniform"])
        p.add_argument("--no-noise", action="store_true")
        if name == "verify":
            p.add_argument("--paths", type=int)
            p.add_argument("--workers", type=int, default=1)
            p.add_argument("--require-rate", type=float,
                           help="exit 2 when the satisfaction rate is lower")
        else:
            p.add_argument("--path", type=int, default=0, help="path index (noise stream)")
    return ap


def overrides(args) -> dict:
    o = dict(args.set)
    o["simulation.seed"] = args.seed
    o["synthesis.dt"] = args.dt
    for flag in ("mu", "epsilon", "zeta"):
        if getattr(args, flag, None) is not None:
            o[f"certificate.{flag}"] = getattr(args, flag)
    if getattr(args, "paths", None) is not None:
        o["simulation.paths"] = args.paths
    if getattr(args, "initial", None) is not None:
        o["simulation.initial"] = args.initial
    if getattr(args, "no_noise", False):
        o["simulation.noise"] = False
    return o


def _disturbances(args) -> tuple[Disturbance, ...]:
    out = []
    for t1, t2, ch, mag in getattr(args, "disturb", []):
        try:
            out.append(Disturbance(float(t1), float(t2), ch, float(mag)))
        except ValueError:
            raise ConfigError(f"bad --disturb values: {t1} {t2} {ch} {mag}") from None
    return tuple(out)


COMMANDS = {
    "certify": cmd_certify, "synth": cmd_synth, "feedback": cmd_feedback,
    "verify": cmd_verify, "simulate": cmd_simulate,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    warnings.formatwarning = lambda msg, *a, **k: f"certsynth: warning: {msg}\n"
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        sc = load_scenario(args.scenario, overrides(args))
        extra = _disturbances(args)
        if extra:
            from dataclasses import replace
            sc.sim = replace(sc.sim, disturbances=sc.sim.disturbances + extra)
        for ch in {x.channel for x in sc.sim.disturbances}:
            try:
                sc.system.disturbance_vector(ch)
            except KeyError:
                raise ConfigError(f"unknown disturbance channel {ch!r}") from None
        code = COMMANDS[args.command](sc, args)
        record_meta(out_dir(sc, args.out), args.command, argv)
        return code
    except (Infeasible, CertificateCheckFailed) as exc:
        print(f"certsynth: {exc}", file=sys.stderr)
        report = getattr(exc, "report", None)
        if report:
            viol = report.get("violations", report) if isinstance(report, dict) else report
            for row in list(viol)[:5]:
                print(f"  violated: {row.get('label')} by {row.get('violation'):.4g}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericalFailure, NoConvergence, SingularM, SingularDs) as exc:
        print(f"certsynth: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, CertSynthError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"certsynth: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except np.linalg.LinAlgError as exc:
        print(f"certsynth: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
