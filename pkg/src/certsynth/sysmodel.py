"""Switched linear systems, time-triggered mode schedules and their discretization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidSchedule, ScheduleMisaligned
from .numkernel import as_matrix, expm_with_input, is_pd
from .trace import SignalTrace

_ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class Mode:
    """dx = (A x + B u + d) dt + Sigma dw."""

    index: int
    A: np.ndarray
    B: np.ndarray
    Sigma: np.ndarray
    name: str = ""
    d: np.ndarray | None = None

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch("A must be square")
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        Sigma = np.asarray(self.Sigma, dtype=float).reshape(n, -1)
        d = np.zeros(n) if self.d is None else np.asarray(self.d, dtype=float).ravel()
        if d.shape != (n,):
            raise DimensionMismatch("drift vector has the wrong length")
        for arr in (A, B, Sigma, d):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "d", d)


@dataclass(frozen=True)
class SwitchedLinearSystem:
    modes: tuple[Mode, ...]
    edges: frozenset = frozenset()
    min_dwell: float = 1.0
    state_names: tuple[str, ...] = ()
    input_names: tuple[str, ...] = ()
    # named unit drift directions that scripted disturbances scale
    disturbance_channels: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise ValueError("system needs at least one mode")
        n, p, m = modes[0].A.shape[0], modes[0].B.shape[1], modes[0].Sigma.shape[1]
        for q, md in enumerate(modes):
            if md.index != q:
                raise ValueError("mode indices must be 0..len(modes)-1 in order")
            if md.A.shape[0] != n or md.B.shape[1] != p or md.Sigma.shape[1] != m:
                raise DimensionMismatch(f"mode {q} dimensions differ from mode 0")
        edges = frozenset((int(a), int(b)) for a, b in self.edges)
        for a, b in edges:
            if not (0 <= a < len(modes) and 0 <= b < len(modes)):
                raise ValueError(f"edge ({a}, {b}) references a missing mode")
        if not self.min_dwell > 0:
            raise ValueError("min_dwell must be positive")
        names = tuple(self.state_names) or tuple(f"x{i + 1}" for i in range(n))
        inames = tuple(self.input_names) or tuple(f"u{i + 1}" for i in range(p))
        if len(names) != n or len(inames) != p:
            raise DimensionMismatch("variable names do not match system dimensions")
        chans = {}
        for k, v in dict(self.disturbance_channels).items():
            v = np.asarray(v, dtype=float).ravel()
            if v.shape != (n,):
                raise DimensionMismatch(f"disturbance channel {k!r} has the wrong length")
            chans[k] = v
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "state_names", names)
        object.__setattr__(self, "input_names", inames)
        object.__setattr__(self, "disturbance_channels", chans)

    @property
    def n(self) -> int:
        return self.modes[0].A.shape[0]

    @property
    def p(self) -> int:
        return self.modes[0].B.shape[1]

    @property
    def m(self) -> int:
        return self.modes[0].Sigma.shape[1]

    def disturbance_vector(self, channel: str) -> np.ndarray:
        if channel in self.disturbance_channels:
            return self.disturbance_channels[channel]
        if channel in self.input_names:
            return self.modes[0].B[:, self.input_names.index(channel)].copy()
        if channel in self.state_names:
            e = np.zeros(self.n)
            e[self.state_names.index(channel)] = 1.0
            return e
        raise KeyError(f"unknown disturbance channel {channel!r}")

    def inert_states(self) -> tuple[int, ...]:
        """States whose rows of A, B and Sigma vanish in every mode."""
        out = []
        for i in range(self.n):
            if all(
                not md.A[i].any() and not md.B[i].any() and not md.Sigma[i].any()
                for md in self.modes
            ):
                out.append(i)
        return tuple(out)


@dataclass(frozen=True)
class ModeSchedule:
    """Segments (q_i, T_i); the last segment may be cut short by the horizon."""

    segments: tuple[tuple[int, float], ...]

    def __post_init__(self):
        segs = tuple((int(q), float(T)) for q, T in self.segments)
        if not segs:
            raise InvalidSchedule("schedule needs at least one segment")
        if any(T <= 0 for _, T in segs):
            raise InvalidSchedule("segment durations must be positive")
        object.__setattr__(self, "segments", segs)

    @property
    def t_end(self) -> float:
        return float(sum(T for _, T in self.segments))

    @property
    def starts(self) -> tuple[float, ...]:
        out, acc = [], 0.0
        for _, T in self.segments:
            out.append(acc)
            acc += T
        return tuple(out)

    @property
    def switch_times(self) -> tuple[float, ...]:
        return self.starts[1:]

    @property
    def modes(self) -> tuple[int, ...]:
        return tuple(q for q, _ in self.segments)

    def validate(self, sys: SwitchedLinearSystem) -> None:
        for q, _ in self.segments:
            if not 0 <= q < len(sys.modes):
                raise InvalidSchedule(f"schedule references missing mode {q}")
        for (a, _), (b, _) in zip(self.segments, self.segments[1:]):
            if (a, b) not in sys.edges:
                raise InvalidSchedule(f"transition {a} -> {b} is not an edge")
        for _, T in self.segments[:-1]:
            if T < sys.min_dwell - 1e-12:
                raise InvalidSchedule(f"dwell {T} below minimum {sys.min_dwell}")

    def segment_at(self, t: float) -> int:
        starts = np.asarray(self.starts)
        return int(np.clip(np.searchsorted(starts, t + 1e-9, side="right") - 1, 0, len(starts) - 1))

    def truncate(self, horizon: float) -> "ModeSchedule":
        out, acc = [], 0.0
        for q, T in self.segments:
            if acc >= horizon - 1e-12:
                break
            out.append((q, min(T, horizon - acc)))
            acc += T
        if acc < horizon - 1e-12:
            q, T = out[-1]
            out[-1] = (q, T + horizon - acc)
        return ModeSchedule(tuple(out))

    def step_counts(self, dt: float) -> list[int]:
        out = []
        for _, T in self.segments:
            k = T / dt
            if abs(k - round(k)) > _ALIGN_TOL * max(1.0, k):
                raise ScheduleMisaligned(f"dt = {dt} does not divide dwell {T}")
            out.append(int(round(k)))
        return out

    def mode_per_step(self, dt: float) -> np.ndarray:
        counts = self.step_counts(dt)
        return np.concatenate([np.full(k, q, dtype=int) for (q, _), k in zip(self.segments, counts)])


def steps_for(duration: float, dt: float) -> int:
    k = duration / dt
    if abs(k - round(k)) > _ALIGN_TOL * max(1.0, k):
        raise ScheduleMisaligned(f"dt = {dt} does not divide {duration}")
    return int(round(k))


@dataclass(frozen=True)
class Discretization:
    """Per-step maps x[j+1] = Ad[j] x[j] + Bd[j] u[j] + dd[j]."""

    Ad: np.ndarray
    Bd: np.ndarray
    dd: np.ndarray
    modes: np.ndarray
    dt: float

    @property
    def n_steps(self) -> int:
        return self.Ad.shape[0]


def discretize_mode(mode: Mode, dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ZOH maps with the drift folded in as a constant-one input column."""
    Bext = np.hstack([mode.B, mode.d.reshape(-1, 1)])
    Ad, Bd_ext = expm_with_input(mode.A, Bext, dt)
    return Ad, Bd_ext[:, :-1], Bd_ext[:, -1]


def discretize(sys: SwitchedLinearSystem, sched: ModeSchedule, dt: float) -> Discretization:
    modes = sched.mode_per_step(dt)
    cache = {q: discretize_mode(sys.modes[q], dt) for q in set(modes.tolist())}
    Ad = np.stack([cache[q][0] for q in modes])
    Bd = np.stack([cache[q][1] for q in modes])
    dd = np.stack([cache[q][2] for q in modes])
    return Discretization(Ad, Bd, dd, modes, dt)


def integrate_nominal(sys: SwitchedLinearSystem, sched: ModeSchedule, x0, u, dt: float) -> SignalTrace:
    """Exact ZOH propagation of the noise-free system over the schedule."""
    disc = discretize(sys, sched, dt)
    N = disc.n_steps
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u.reshape(N, -1) if sys.p else np.zeros((N, 0))
    if u.shape != (N, sys.p):
        raise DimensionMismatch(f"input array has shape {u.shape}, expected {(N, sys.p)}")
    x = np.empty((N + 1, sys.n))
    x[0] = np.asarray(x0, dtype=float)
    for j in range(N):
        x[j + 1] = disc.Ad[j] @ x[j] + disc.Bd[j] @ u[j] + disc.dd[j]
    modes = np.concatenate([disc.modes, disc.modes[-1:]])
    inputs = np.vstack([u, u[-1:]]) if N else np.zeros((1, sys.p))
    return SignalTrace(dt * np.arange(N + 1), x, inputs, modes, dt)


@dataclass(frozen=True)
class InitialBall:
    """{x : (x - center)_c^T M (x - center)_c <= r} on the coordinates c."""

    center: np.ndarray
    radius: float
    metric: np.ndarray
    coords: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be non-negative")
        if not is_pd(self.metric, 0.0):
            raise ValueError("ball metric must be positive definite")

    def _delta(self, x) -> np.ndarray:
        d = np.asarray(x, dtype=float) - np.asarray(self.center, dtype=float)
        return d if self.coords is None else d[..., list(self.coords)]

    def quad(self, x) -> float:
        d = self._delta(x)
        return float(d @ np.asarray(self.metric) @ d)


def ball_contains_point(ball: InitialBall, x) -> bool:
    return ball.quad(x) <= ball.radius
