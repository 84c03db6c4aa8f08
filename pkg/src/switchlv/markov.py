"""Exact sampling of the two-state telegraph process driving the environment.

Randomness comes from numpy's counter-based ``Philox`` bit generator keyed by the
64-bit seed, so a (seed, environment, horizon) triple yields the same path on
every platform.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .model import SwitchingEnvironment, validate


class ZeroHorizon(ValueError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def derive_seeds(seed: int, n: int) -> list[int]:
    """Independent 64-bit child seeds; identical for a given (seed, n) regardless of worker layout."""
    ss = np.random.SeedSequence(int(seed))
    return [int(s) for s in ss.generate_state(n, dtype=np.uint64)]


def other(state: str) -> str:
    return "-" if state == "+" else "+"


@dataclass(frozen=True, eq=False)
class MarkovPath:
    """One realization of xi(t) on [0, horizon].

    ``jump_times`` is a read-only increasing array; the state on [tau_k, tau_{k+1})
    is ``initial_state`` for even k and the opposite state for odd k (tau_0 = 0).
    """

    initial_state: str
    jump_times: np.ndarray
    horizon: float

    def __post_init__(self):
        if self.initial_state not in ("+", "-"):
            raise ValueError(f"initial_state must be '+' or '-', got {self.initial_state!r}")
        jt = np.array(self.jump_times, dtype=float).reshape(-1)
        if jt.size:
            if jt[0] <= 0 or jt[-1] > self.horizon or np.any(np.diff(jt) <= 0):
                raise ValueError("jump times must be strictly increasing inside (0, horizon]")
        jt.setflags(write=False)
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "horizon", float(self.horizon))

    def __eq__(self, other_):
        if not isinstance(other_, MarkovPath):
            return NotImplemented
        return (self.initial_state == other_.initial_state and self.horizon == other_.horizon
                and np.array_equal(self.jump_times, other_.jump_times))

    __hash__ = None

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    def state_after(self, k: int) -> str:
        """State after the k-th jump (k = 0 gives the initial state)."""
        return self.initial_state if k % 2 == 0 else other(self.initial_state)

    def state_at(self, t) -> str | np.ndarray:
        """Right-continuous state lookup; accepts a scalar or an array of times."""
        k = np.searchsorted(self.jump_times, t, side="right")
        flip = k % 2 == 1
        if np.ndim(t) == 0:
            return other(self.initial_state) if flip else self.initial_state
        first = np.array(self.initial_state)
        return np.where(flip, other(self.initial_state), first)

    def holding_times(self) -> np.ndarray:
        """sigma_k = tau_k - tau_{k-1} for the completed sojourns."""
        return np.diff(self.jump_times, prepend=0.0)

    def segments(self):
        """``(starts, ends, plus_mask)`` of the constant-regime pieces covering [0, horizon]."""
        bounds = np.concatenate(([0.0], self.jump_times, [self.horizon]))
        starts, ends = bounds[:-1], bounds[1:]
        k = np.arange(starts.size)
        plus = (k % 2 == 0) == (self.initial_state == "+")
        keep = ends > starts
        return starts[keep], ends[keep], plus[keep]

    def restrict(self, horizon: float) -> "MarkovPath":
        jt = self.jump_times[self.jump_times <= horizon]
        return MarkovPath(self.initial_state, jt, horizon)

    def to_dict(self) -> dict:
        return {
            "initial_state": self.initial_state,
            "jump_times": [float(t) for t in self.jump_times],
            "horizon": self.horizon,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "MarkovPath":
        return cls(data["initial_state"], np.asarray(data["jump_times"], dtype=float),
                   float(data["horizon"]))

    @classmethod
    def from_json(cls, text: str) -> "MarkovPath":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "tau_k", "state_after_jump"])
        for k, tau in enumerate(self.jump_times, start=1):
            w.writerow([k, repr(float(tau)), self.state_after(k)])
        return buf.getvalue()

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.initial_state.encode())
        h.update(np.float64(self.horizon).tobytes())
        h.update(np.ascontiguousarray(self.jump_times, dtype="<f8").tobytes())
        return h.hexdigest()


def sample_path(env: SwitchingEnvironment, initial_state: str, horizon: float,
                seed: int) -> MarkovPath:
    """Sample xi on [0, horizon] with exponential holding times of the current state's exit rate.

    Holding times are drawn by inverse CDF, -ln(U)/q with U in (0, 1]. A jump landing
    exactly on ``horizon`` is kept.
    """
    validate(env)
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if initial_state not in ("+", "-"):
        raise ValueError(f"initial_state must be '+' or '-', got {initial_state!r}")
    if horizon == 0:
        return MarkovPath(initial_state, np.empty(0), 0.0)

    rng = make_rng(seed)
    first, second = env.rate(initial_state), env.rate(other(initial_state))
    mean_cycle = 1.0 / first + 1.0 / second
    chunk = max(64, int(math.ceil(2.2 * horizon / mean_cycle)) + 16)

    pieces = []
    t_end = 0.0
    n_done = 0
    while t_end <= horizon:
        u = 1.0 - rng.random(chunk)  # (0, 1]
        rates = np.where((np.arange(n_done, n_done + chunk) % 2) == 0, first, second)
        hold = -np.log(u) / rates
        taus = t_end + np.cumsum(hold)
        pieces.append(taus)
        t_end = taus[-1]
        n_done += chunk
    taus = np.concatenate(pieces)
    taus = taus[taus <= horizon]
    # zero holding time (U == 1) would duplicate a jump; merge it out
    if taus.size > 1 and np.any(np.diff(taus) <= 0):
        taus = _drop_null_sojourns(taus)
    if taus.size and taus[0] <= 0.0:
        initial_state, taus = other(initial_state), taus[1:]
    return MarkovPath(initial_state, taus, horizon)


def _drop_null_sojourns(taus):
    keep = []
    for t in taus:
        if keep and t <= keep[-1]:
            keep.pop()  # two instantaneous jumps cancel
            continue
        keep.append(t)
    return np.asarray(keep)


def stationary_distribution(env: SwitchingEnvironment) -> tuple[float, float]:
    total = env.q_plus + env.q_minus
    return env.q_minus / total, env.q_plus / total


def occupation_fractions(path: MarkovPath) -> tuple[float, float]:
    if path.horizon <= 0:
        raise ZeroHorizon("occupation fractions need a positive horizon")
    starts, ends, plus = path.segments()
    lengths = ends - starts
    frac_plus = float(np.sum(lengths[plus]) / path.horizon)
    return frac_plus, 1.0 - frac_plus
