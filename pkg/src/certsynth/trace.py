"""Uniformly sampled (state, input, mode) trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SignalTrace:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    modes: np.ndarray
    dt: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        inputs = np.asarray(self.inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs.reshape(len(times), -1)
        modes = np.asarray(self.modes, dtype=int)
        k = len(times)
        if k == 0:
            raise ValueError("trace must contain at least one sample")
        if states.shape[0] != k or inputs.shape[0] != k or modes.shape[0] != k:
            raise ValueError("states, inputs and modes must match the number of times")
        if k > 1 and np.max(np.abs(np.diff(times) - self.dt)) > 1e-9 * max(1.0, abs(times[-1])):
            raise ValueError("trace sampling is not uniform with step dt")
        for arr in (times, states, inputs, modes):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "dt", float(self.dt))

    def __len__(self) -> int:
        return len(self.times)

    @property
    def horizon(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def index_of(self, t: float) -> int:
        j = int(round((t - self.times[0]) / self.dt))
        if j < 0 or j >= len(self.times) or abs(self.times[j] - t) > 1e-6 * self.dt:
            raise ValueError(f"time {t} is not a sample of this trace")
        return j

    @classmethod
    def from_arrays(cls, dt: float, states, inputs=None, modes=None, t0: float = 0.0) -> "SignalTrace":
        states = np.atleast_2d(np.asarray(states, dtype=float))
        k = states.shape[0]
        times = t0 + dt * np.arange(k)
        if inputs is None:
            inputs = np.zeros((k, 0))
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs.reshape(-1, 1) if inputs.size == k else inputs.reshape(1, -1)
        if inputs.shape[0] == k - 1:
            # inputs act on [t_j, t_j+1); the last sample holds the final input
            last = inputs[-1:] if len(inputs) else np.zeros((1, inputs.shape[1]))
            inputs = np.vstack([inputs, last])
        if modes is None:
            modes = np.zeros(k, dtype=int)
        return cls(times, states, inputs, np.asarray(modes, dtype=int), dt)
