"""Monte Carlo simulation of switched linear SDEs under open- or closed-loop inputs."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .bisim import BisimCertificate
from .feedback import NominalLibrary, initial_state, law_eval
from .mtl.ast import Formula
from .mtl.semantics import robustness
from .numkernel import expm_with_input, noise_covariance, psd_sqrt_factor
from .sysmodel import InitialBall, ModeSchedule, SwitchedLinearSystem, steps_for
from .trace import SignalTrace


@dataclass(frozen=True)
class Disturbance:
    """Extra drift magnitude * channel vector on [t0, t1)."""

    t0: float
    t1: float
    channel: str
    magnitude: float

    def active(self, t: float) -> bool:
        return self.t0 - 1e-9 <= t < self.t1 - 1e-9


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    horizon: float = 5.0
    paths: int = 100
    seed: int = 0
    scheme: str = "exact"                 # or "euler_maruyama"
    disturbances: tuple[Disturbance, ...] = ()
    initial: str = "center"               # or "uniform"
    noise: bool = True

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.paths < 1:
            raise ValueError("at least one path is required")
        if self.scheme not in ("exact", "euler_maruyama"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.initial not in ("center", "uniform"):
            raise ValueError(f"unknown initial sampler {self.initial!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        steps_for(self.horizon, self.dt)


class Controller(Protocol):
    def reset(self, x0: np.ndarray) -> None: ...
    def __call__(self, x: np.ndarray, j: int) -> np.ndarray: ...


@dataclass
class ZeroInput:
    p: int

    def reset(self, x0) -> None:
        pass

    def __call__(self, x, j) -> np.ndarray:
        return np.zeros(self.p)


@dataclass
class Feedforward:
    """Open-loop samples; zero input once they run out."""

    u: np.ndarray

    def reset(self, x0) -> None:
        pass

    def __call__(self, x, j) -> np.ndarray:
        if j < len(self.u):
            return self.u[j]
        return np.zeros(self.u.shape[1])


@dataclass
class FeedbackLaw:
    library: NominalLibrary
    state: object = None

    def reset(self, x0) -> None:
        self.state = initial_state(self.library, x0)

    def __call__(self, x, j) -> np.ndarray:
        if j >= self.library.n_steps + self.library.window:
            return np.zeros(self.library.inputs.shape[2])
        u, self.state = law_eval(self.library, self.state, x, j)
        return u


def path_rng(seed: int, path: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, path); streams never overlap."""
    return np.random.Generator(np.random.Philox(key=[seed & (2 ** 64 - 1), path]))


class _Stepper:
    """Per-mode one-step maps, cached; disturbance columns follow ``channels``."""

    def __init__(self, sys: SwitchedLinearSystem, cfg: SimConfig, channels: list[str]):
        self.sys, self.cfg = sys, cfg
        self.dvec = np.column_stack([sys.disturbance_vector(c) for c in channels]) \
            if channels else np.zeros((sys.n, 0))
        self._cache: dict = {}

    def maps(self, q: int):
        if q not in self._cache:
            md, dt = self.sys.modes[q], self.cfg.dt
            p = md.B.shape[1]
            if self.cfg.scheme == "exact":
                Ad, Bx = expm_with_input(md.A, np.column_stack([md.B, md.d, self.dvec]), dt)
                Bd, dd, Dd = Bx[:, :p], Bx[:, p], Bx[:, p + 1:]
                S = psd_sqrt_factor(noise_covariance(md.A, md.Sigma, dt))
            else:
                Ad = np.eye(md.A.shape[0]) + dt * md.A
                Bd, dd, Dd = dt * md.B, dt * md.d, dt * self.dvec
                S = math.sqrt(dt) * md.Sigma
            self._cache[q] = (Ad, Bd, dd, Dd, S)
        return self._cache[q]


def simulate_sde(sys: SwitchedLinearSystem, sched: ModeSchedule, x0, controller: Controller,
                 cfg: SimConfig, path: int = 0) -> SignalTrace:
    sched = _cover(sched, cfg.horizon)
    N = steps_for(cfg.horizon, cfg.dt)
    modes = sched.mode_per_step(cfg.dt)[:N]
    channels = list(dict.fromkeys(d.channel for d in cfg.disturbances))
    stepper = _Stepper(sys, cfg, channels)
    rng = path_rng(cfg.seed, path)
    x = np.empty((N + 1, sys.n))
    u = np.zeros((N + 1, sys.p))
    x[0] = np.asarray(x0, dtype=float)
    controller.reset(x[0])
    for j in range(N):
        Ad, Bd, dd, Dd, S = stepper.maps(int(modes[j]))
        t = j * cfg.dt
        u[j] = controller(x[j], j)
        nxt = Ad @ x[j] + Bd @ u[j] + dd
        for dist in cfg.disturbances:
            if dist.active(t):
                nxt += dist.magnitude * Dd[:, channels.index(dist.channel)]
        if cfg.noise and S.size:
            nxt += S @ rng.standard_normal(S.shape[1])
        x[j + 1] = nxt
    u[N] = u[N - 1] if N else u[N]
    m = np.concatenate([modes, modes[-1:]])
    return SignalTrace(cfg.dt * np.arange(N + 1), x, u, m, cfg.dt)


def _cover(sched: ModeSchedule, horizon: float) -> ModeSchedule:
    """Hold the last mode if the schedule ends before the horizon."""
    if sched.t_end + 1e-9 >= horizon:
        return sched.truncate(horizon)
    segs = list(sched.segments)
    q, T = segs[-1]
    segs[-1] = (q, T + horizon - sched.t_end)
    return ModeSchedule(tuple(segs))


def sample_initial(ball: InitialBall, rng: np.random.Generator) -> np.ndarray:
    """Uniform point in the metric ball."""
    coords = list(ball.coords) if ball.coords is not None else list(range(len(ball.center)))
    k = len(coords)
    g = rng.standard_normal(k)
    g *= rng.uniform() ** (1.0 / k) / np.linalg.norm(g)
    L = np.linalg.cholesky(ball.metric)
    x = np.array(ball.center, dtype=float)
    x[coords] += math.sqrt(ball.radius) * np.linalg.solve(L.T, g)
    return x


@dataclass
class BatchReport:
    robustness: np.ndarray
    satisfied: int
    paths: int
    seed: int
    excursion: np.ndarray | None = None
    switches: list = field(default_factory=list)

    @property
    def rate(self) -> float:
        return self.satisfied / self.paths

    @property
    def min_robustness(self) -> float:
        return float(np.min(self.robustness))

    @property
    def mean_robustness(self) -> float:
        return float(np.mean(self.robustness))

    def to_dict(self) -> dict:
        return {
            "paths": self.paths, "seed": self.seed, "satisfied": self.satisfied,
            "rate": self.rate, "min_robustness": self.min_robustness,
            "mean_robustness": self.mean_robustness,
            "robustness": self.robustness.tolist(),
            "excursion": None if self.excursion is None else self.excursion.tolist(),
        }


def _paths(sys, sched, formula, factory, cfg, x0, ball, nominal, cert, keep, idx):
    out = []
    for k in idx:
        start = x0
        if cfg.initial == "uniform":
            start = sample_initial(ball, path_rng(cfg.seed ^ 0x5EED, k))
        ctrl = factory()
        tr = simulate_sde(sys, sched, start, ctrl, cfg, k)
        rob = robustness(formula, tr, 0.0)
        exc = float(np.max(excursion(tr, nominal, cert))) if nominal is not None and cert is not None else None
        sw = list(ctrl.state.switches) if isinstance(ctrl, FeedbackLaw) else None
        out.append((rob, exc, sw, tr if keep else None))
    return out


def run_batch(sys: SwitchedLinearSystem, sched: ModeSchedule, formula: Formula,
              controller_factory: Callable[[], Controller], cfg: SimConfig, x0=None,
              ball: InitialBall | None = None, nominal: SignalTrace | None = None,
              cert: BisimCertificate | None = None, keep_traces: bool = False,
              workers: int = 1):
    """Simulate cfg.paths independent paths; returns the report (and traces if asked).

    Paths are keyed by index, so any ``workers`` count gives identical results;
    with workers > 1 the factory must be picklable (e.g. functools.partial).
    """
    x0 = np.zeros(sys.n) if x0 is None else np.asarray(x0, dtype=float)
    if cfg.initial == "uniform" and ball is None:
        raise ValueError("uniform initial sampling needs a ball")
    args = (sys, sched, formula, controller_factory, cfg, x0, ball, nominal, cert, keep_traces)
    if workers > 1 and cfg.paths > 1:
        chunks = [list(c) for c in np.array_split(np.arange(cfg.paths), min(workers, cfg.paths))]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_paths, *zip(*[args + (c,) for c in chunks])))
        rows = [r for part in parts for r in part]
    else:
        rows = _paths(*args, range(cfg.paths))
    rob = np.array([r[0] for r in rows])
    exc = np.array([r[1] for r in rows]) if nominal is not None and cert is not None else None
    switches = [r[2] for r in rows if r[2] is not None]
    report = BatchReport(rob, int(np.sum(rob >= 0.0)), cfg.paths, cfg.seed, exc, switches)
    return (report, [r[3] for r in rows]) if keep_traces else report


def excursion(trace: SignalTrace, nominal: SignalTrace, cert: BisimCertificate) -> np.ndarray:
    """phi_q(nominal, trace) at every common sample, with the metric of the active segment."""
    n = min(len(trace), len(nominal))
    co = list(cert.coords)
    d = trace.states[:n, co] - nominal.states[:n, co]
    starts = np.asarray(cert.starts)
    t = trace.times[:n]
    seg = np.clip(np.searchsorted(starts, t + 1e-9, side="right") - 1, 0, len(starts) - 1)
    out = np.empty(n)
    for i, (q, _) in enumerate(cert.segments):
        sel = seg == i
        M = cert.metric(q)
        out[sel] = np.einsum("ij,jk,ik->i", d[sel], M, d[sel])
    return out


def excursion_stats(sups, gammas) -> list[dict]:
    """Empirical P{sup phi >= gamma} with the binomial standard error."""
    sups = np.asarray(sups, dtype=float)
    n = sups.size
    out = []
    for g in np.atleast_1d(gammas):
        p = float(np.mean(sups >= g))
        out.append({"gamma": float(g), "exceedance": p, "stderr": math.sqrt(max(p * (1 - p), 0.0) / n)})
    return out


def prop_bound(alpha: float, T: float, gamma: float) -> float:
    return alpha * T / gamma
