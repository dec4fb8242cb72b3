"""Lookup feedback law over a library of certified nominal trajectories."""

from __future__ import annotations

import io
import json
import math
import warnings
import zipfile
from dataclasses import dataclass, field, replace

import numpy as np

from .bisim import BisimCertificate
from .errors import Infeasible
from .mtl.fragment import FragmentTerm, build_fragment, fragment_terms
from .mtl.semantics import robustness
from .sysmodel import ModeSchedule, steps_for
from .synth import SynthesisProblem, synthesize


@dataclass(frozen=True)
class NominalLibrary:
    """Nominal traces with their inputs and per-segment extensions, bundled with the certificate."""

    centers: np.ndarray            # (N, n)
    states: np.ndarray             # (N, K+1, n)
    inputs: np.ndarray             # (N, K, p)
    extensions: np.ndarray         # (N, segments, w, p)
    robustness: np.ndarray         # (N,)
    certificate: BisimCertificate
    segments: tuple
    dt: float
    rho: float

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    @property
    def n_steps(self) -> int:
        return self.inputs.shape[1]

    @property
    def window(self) -> int:
        return self.extensions.shape[2]

    def segment_bounds(self) -> list[tuple[int, int]]:
        """(first, end) global sample indices of each schedule segment."""
        out, j = [], 0
        for _, T in self.segments:
            k = steps_for(T, self.dt)
            out.append((j, j + k))
            j += k
        return out

    def save(self, path) -> None:
        """npz archive with fixed member timestamps, so equal libraries give equal bytes."""
        arrays = {
            "centers": self.centers, "states": self.states, "inputs": self.inputs,
            "extensions": self.extensions, "robustness": self.robustness,
            "certificate": np.array(self.certificate.dumps()),
            "segments": np.array(json.dumps([list(s) for s in self.segments])),
            "dt": np.array(self.dt), "rho": np.array(self.rho),
        }
        with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
            for name, arr in arrays.items():
                buf = io.BytesIO()
                np.save(buf, arr, allow_pickle=False)
                zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)),
                            buf.getvalue(), compress_type=zipfile.ZIP_DEFLATED)

    @classmethod
    def load(cls, path) -> "NominalLibrary":
        with np.load(path, allow_pickle=False) as z:
            return cls(
                centers=z["centers"], states=z["states"], inputs=z["inputs"],
                extensions=z["extensions"], robustness=z["robustness"],
                certificate=BisimCertificate.loads(str(z["certificate"])),
                segments=tuple((int(q), float(T)) for q, T in json.loads(str(z["segments"]))),
                dt=float(z["dt"]), rho=float(z["rho"]),
            )


def initial_centers(cert: BisimCertificate, n_full: int, N: int = 5, strategy: str = "support",
                    x0=None, seed: int = 0, normal=None) -> np.ndarray:
    """The ball center plus N-1 points on the boundary of the initial ball.

    ``support`` places boundary points at the extreme points of the ball along
    the certificate's predicate normals (objective normal first); ``random``
    draws directions uniformly in the metric.
    """
    if N < 1:
        raise ValueError("at least one center is required")
    x0 = np.zeros(n_full) if x0 is None else np.asarray(x0, dtype=float)
    q0 = cert.segments[0][0]
    M = cert.metric(q0)
    r = cert.radii[0]
    co = list(cert.coords)
    dirs = []
    if strategy == "support":
        normals = [normal] if normal is not None else []
        normals += [cert.normals[k] for k in sorted(cert.normals)]
        Minv = np.linalg.inv(M)
        seen = []
        for a in normals:
            ac = np.asarray(a, dtype=float)[co]
            if not np.any(ac):
                continue
            v = Minv @ ac / math.sqrt(ac @ Minv @ ac)
            for s in (1.0, -1.0):
                if not any(np.allclose(s * v, w) for w in seen):
                    seen.append(s * v)
                    dirs.append(s * v)
    elif strategy == "random":
        rng = np.random.Generator(np.random.Philox(key=seed))
        L = np.linalg.cholesky(M)
        for _ in range(N - 1):
            g = rng.standard_normal(len(co))
            v = np.linalg.solve(L.T, g / np.linalg.norm(g))
            dirs.append(v)
    else:
        raise ValueError(f"unknown center strategy {strategy!r}")
    out = [x0.copy()]
    for v in dirs[:N - 1]:
        x = x0.copy()
        x[co] += math.sqrt(r) * v
        out.append(x)
    if len(out) < N:
        raise ValueError(f"only {len(out)} distinct centers are available for this strategy")
    return np.array(out)


def build_library(base: SynthesisProblem, centers, rho: float) -> NominalLibrary:
    """Synthesize from each center, plus per-segment extensions by rho."""
    cert = base.certificate
    if cert is None:
        raise ValueError("the base problem must carry its certificate")
    segs = base.schedule.segments
    dwell = min(T for _, T in segs)
    if not 0.0 < rho < dwell:
        raise ValueError(f"rho must lie in (0, {dwell}) s")
    w = steps_for(rho, base.dt)
    states, inputs, exts, rhos, kept = [], [], [], [], []
    for ell, c in enumerate(np.atleast_2d(np.asarray(centers, dtype=float))):
        prob = replace(base, x0=c)
        try:
            res = synthesize(prob)
            ext = _extensions(prob, segs, rho, w)
        except Infeasible as exc:
            warnings.warn(f"center {ell} is infeasible and is left out: {exc}", stacklevel=2)
            continue
        if robustness(base.formula, res.trace, 0.0) < -1e-6:
            raise Infeasible(f"library trace {ell} fails the robust formula")
        states.append(res.trace.states)
        inputs.append(res.inputs)
        exts.append(ext)
        rhos.append(res.robustness)
        kept.append(c)
    if not kept:
        raise Infeasible("every library center is infeasible")
    return NominalLibrary(np.array(kept), np.array(states), np.array(inputs), np.array(exts),
                          np.array(rhos), cert, tuple(segs), base.dt, float(rho))


def _extensions(prob: SynthesisProblem, segs, rho: float, w: int) -> np.ndarray:
    """Inputs over [T^q, T^q + rho] when segment q is held rho longer."""
    out = np.zeros((len(segs), w, prob.system.p))
    for i in range(len(segs)):
        longer = tuple((q, T + rho) if k == i else (q, T) for k, (q, T) in enumerate(segs))
        sched = ModeSchedule(longer)
        res = synthesize(replace(prob, schedule=sched, certificate=None,
                                 formula=_stretched(prob.formula, sched.t_end)))
        end = sum(steps_for(T, prob.dt) for _, T in segs[:i + 1])
        out[i] = res.inputs[end:end + w]
    return out


def _stretched(formula, t_end: float):
    """Same predicates, horizon extended so the longer schedule is fully constrained."""
    terms = fragment_terms(formula)
    return build_fragment([FragmentTerm(t.tau, t_end, t.preds) for t in terms])


# the law --------------------------------------------------------------------

@dataclass
class LawState:
    ell: int
    j_hat: int
    switches: list = field(default_factory=list)


def _whitened(lib: NominalLibrary, q: int) -> tuple[np.ndarray, np.ndarray]:
    """(L, states @ L) with M_q = L L^T, so metric distances become Euclidean."""
    cache = lib.__dict__.setdefault("_white", {})
    if q not in cache:
        L = np.linalg.cholesky(lib.certificate.metric(q))
        cache[q] = (L, lib.states[:, :, list(lib.certificate.coords)] @ L)
    return cache[q]


def _dists(lib: NominalLibrary, x, q: int, idx) -> np.ndarray:
    """Metric distance from x to every trace at the sample indices idx, shape (N, len(idx))."""
    L, Y = _whitened(lib, q)
    xw = np.asarray(x, dtype=float)[list(lib.certificate.coords)] @ L
    return np.linalg.norm(Y[:, idx, :] - xw, axis=2)


def initial_state(lib: NominalLibrary, x0) -> LawState:
    """Active trace: the center closest in the initial metric."""
    d = _dists(lib, x0, lib.segments[0][0], [0])[:, 0]
    return LawState(int(np.argmin(d)), 0)


def _r_hat(lib: NominalLibrary, seg: int, j: int) -> float:
    first, _ = lib.segment_bounds()[seg]
    q = lib.segments[seg][0]
    mu = lib.certificate.modes[q].mu
    return lib.certificate.radii[seg] * math.exp(-mu * (j - first) * lib.dt / 2.0)


def region_membership(lib: NominalLibrary, st: LawState, x, seg: int, j: int):
    """Matched (i, ell) per the ordered exclusion test, or None.

    The active trace's robust neighbourhoods win first; otherwise other traces
    are scanned from the highest index down, and times from the latest allowed
    sample down to j.  Past the segment end a trace is held at its last
    in-segment sample.
    """
    q = lib.segments[seg][0]
    _, end = lib.segment_bounds()[seg]
    w = lib.window
    rad = math.sqrt(_r_hat(lib, seg, j))
    inflated = rad + math.sqrt(lib.certificate.gamma_hat)
    last = min(max(j + w, st.j_hat), end + w)
    own = np.unique(np.minimum([st.j_hat] + list(range(j, last + 1)), end))
    if np.any(_dists(lib, x, q, own)[st.ell] <= inflated):
        return st.j_hat, st.ell
    span = np.arange(j, min(j + w, end + w) + 1)
    hits = _dists(lib, x, q, np.minimum(span, end)) <= rad
    hits[st.ell] = False
    for ell in range(lib.size - 1, -1, -1):
        if hits[ell].any():
            return int(span[np.flatnonzero(hits[ell])[-1]]), ell
    return None


def _input(lib: NominalLibrary, ell: int, i: int, seg: int) -> np.ndarray:
    _, end = lib.segment_bounds()[seg]
    if i < end:
        return lib.inputs[ell, i]
    k = min(i - end, lib.window - 1)
    return lib.extensions[ell, seg, k]


def law_eval(lib: NominalLibrary, st: LawState, x, j: int) -> tuple[np.ndarray, LawState]:
    """Input at global sample j for state x; advances the law state by one step."""
    seg = _segment_of(lib, j)
    hit = region_membership(lib, st, x, seg, j)
    if hit is not None and hit[1] != st.ell:
        i, ell = hit
        st.switches.append((j, st.ell, ell, i))
        st.ell, st.j_hat = ell, i
    u = _input(lib, st.ell, st.j_hat, seg)
    st.j_hat += 1
    return np.array(u, dtype=float), st


def _segment_of(lib: NominalLibrary, j: int) -> int:
    for k, (first, end) in enumerate(lib.segment_bounds()):
        if j < end:
            return k
    return len(lib.segments) - 1
