"""Firing rates, state decoding, monotonicity checks and power estimates."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .engine import SpikeRecord
from .network import ConnectivityMatrix


def _n_windows(duration: float, window: float) -> int:
    return max(1, int(math.ceil(duration / window - 1e-9)))


def firing_rate(rec: SpikeRecord, population: str, window: float = 0.1) -> np.ndarray:
    """Per-neuron rate (Hz) of ``population`` in consecutive windows."""
    if not window > 0:
        raise ValueError("window must be > 0")
    idx = rec.pop_index(population)
    n = _n_windows(rec.duration, window)
    t = rec.times[rec.population == idx]
    # a spike stamped exactly at a window end belongs to that window
    bins = np.clip(np.ceil(t / window - 1e-9).astype(np.int64) - 1, 0, n - 1)
    counts = np.bincount(bins, minlength=n)
    return counts / (window * rec.sizes[idx])


@dataclass(frozen=True)
class StateTimeline:
    starts: np.ndarray
    ends: np.ndarray
    states: np.ndarray  # -1 marks NONE

    NONE = -1

    def __len__(self) -> int:
        return len(self.states)

    def at(self, t: float) -> int:
        i = int(np.searchsorted(self.ends, t, side="right"))
        return int(self.states[min(i, len(self.states) - 1)])

    def between(self, t0: float, t1: float) -> np.ndarray:
        mask = (self.starts >= t0 - 1e-9) & (self.ends <= t1 + 1e-9)
        return self.states[mask]

    def visited(self) -> List[int]:
        """Distinct non-NONE states in order of first (re)entry."""
        out: List[int] = []
        for s in self.states:
            if s != self.NONE and (not out or out[-1] != s):
                out.append(int(s))
        return out

    @property
    def final(self) -> Optional[int]:
        known = self.states[self.states != self.NONE]
        return int(known[-1]) if len(known) else None

    def rows(self) -> List[Tuple[float, float, Optional[int]]]:
        return [(float(a), float(b), None if s == self.NONE else int(s))
                for a, b, s in zip(self.starts, self.ends, self.states)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t_start", "t_end", "state"])
            for a, b, s in self.rows():
                out.writerow([f"{a:.6f}", f"{b:.6f}", "NONE" if s is None else s])

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump([{"t_start": a, "t_end": b, "state": s} for a, b, s in self.rows()], fh, indent=1)


def decode_state(rec: SpikeRecord, window: float = 0.1, active_threshold: float = 10.0,
                 states: Optional[Sequence[str]] = None) -> StateTimeline:
    """Most active state population per window, or NONE below threshold.

    ``states`` lists the state populations in index order; by default every
    recorded population named ``state<k>``.
    """
    if not window > 0:
        raise ValueError("window must be > 0")
    if states is None:
        named = [p for p in rec.populations if p.startswith("state") and p[5:].isdigit()]
        states = sorted(named, key=lambda p: int(p[5:]))
    n = _n_windows(rec.duration, window)
    starts = np.arange(n) * window
    ends = np.minimum(starts + window, rec.duration)
    if not states:
        return StateTimeline(starts, ends, np.full(n, StateTimeline.NONE))
    rates = np.vstack([firing_rate(rec, p, window) for p in states])
    best = np.argmax(rates, axis=0)  # argmax keeps the lowest index on ties
    active = rates[best, np.arange(n)] >= active_threshold
    return StateTimeline(starts, ends, np.where(active, best, StateTimeline.NONE))


@dataclass(frozen=True)
class Violation:
    time: float
    from_state: int
    to_state: int

    def to_dict(self) -> dict:
        return {"time_s": self.time, "from": self.from_state, "to": self.to_state}


def is_legal_transition(s: int, s_next: int) -> bool:
    return s_next > s or s_next == 0


def check_monotonic(t: StateTimeline) -> List[Violation]:
    """Transitions that are neither upward nor a reset to state 0.

    NONE windows are skipped: the comparison is with the last decoded state.
    """
    out = []
    last = None
    for start, s in zip(t.starts, t.states):
        if s == StateTimeline.NONE:
            continue
        s = int(s)
        if last is not None and s != last and not is_legal_transition(last, s):
            out.append(Violation(float(start), last, s))
        last = s
    return out


def timeline_from_states(states: Sequence[Optional[int]], window: float = 0.1) -> StateTimeline:
    n = len(states)
    starts = np.arange(n) * window
    arr = np.array([StateTimeline.NONE if s is None else s for s in states], dtype=np.int64)
    return StateTimeline(starts, starts + window, arr)


@dataclass(frozen=True)
class PowerModel:
    """Per-event energy budget. Defaults reproduce the reported ~90 uW at 50 Hz x 176 neurons."""

    E_spike: float = 10.2e-9
    E_route: float = 0.0
    P_static: float = 0.0

    def __post_init__(self):
        if min(self.E_spike, self.E_route, self.P_static) < 0:
            raise ValueError("power model constants must be >= 0")


def estimate_power(rec: SpikeRecord, edges: Optional[ConnectivityMatrix], m: PowerModel = PowerModel(),
                   exclude: Sequence[str] = ()) -> float:
    """Average power in watts over the record.

    Each spike costs ``E_spike`` plus ``E_route`` per outgoing synapse.
    Populations in ``exclude`` (e.g. off-chip encoders) are not charged.
    """
    if not rec.duration > 0:
        raise ValueError("record duration must be > 0")
    mask = np.ones(len(rec), dtype=bool)
    for pop in exclude:
        if pop in rec.populations:
            mask &= rec.population != rec.pop_index(pop)
    n_spikes = int(mask.sum())
    routed = 0
    if edges is not None and m.E_route > 0:
        if rec.global_index is None:
            raise ValueError("routing energy needs global neuron indices in the record")
        routed = int(edges.out_degree()[rec.global_index[mask]].sum())
    return m.P_static + (n_spikes * m.E_spike + routed * m.E_route) / rec.duration


def power_report(rec: SpikeRecord, edges: Optional[ConnectivityMatrix], m: PowerModel,
                 exclude: Sequence[str] = ()) -> dict:
    counted = [p for p in rec.populations if p not in exclude]
    n_neurons = sum(rec.size_of(p) for p in counted)
    n_spikes = sum(rec.counts()[p] for p in counted)
    return {
        "power_w": estimate_power(rec, edges, m, exclude),
        "duration_s": rec.duration,
        "neurons": n_neurons,
        "spikes": n_spikes,
        "mean_rate_hz": n_spikes / (rec.duration * n_neurons) if n_neurons else 0.0,
        "model": {"E_spike_j": m.E_spike, "E_route_j": m.E_route, "P_static_w": m.P_static},
    }
