"""Deterministic clock-driven simulation of a sampled network."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernel
from .core_dynamics import DEFAULT_TAU_SYN, AdExParams, LIFParams, NumericalOverflowError, SynapseKind
from .network import ConnectivityMatrix, Model, NetworkSpec, validate_connectivity


class DriveError(ValueError):
    pass


@dataclass(frozen=True)
class SimulationConfig:
    dt: float = 1e-4
    duration: float = 1.0
    seed: int = 0
    record: Optional[Tuple[str, ...]] = None  # None records every population
    chunk: float = 1.0  # seconds per compiled call

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if self.record is not None:
            object.__setattr__(self, "record", tuple(self.record))

    @property
    def n_steps(self) -> int:
        # guard against 0.3/0.1 = 2.9999999
        return int(math.ceil(self.duration / self.dt - 1e-9))


@dataclass
class ExternalDrive:
    """External input: synaptic spike events and sampled current waveforms.

    Spike events are delivered onto a target neuron as if arriving through a
    synapse of ``kind`` with the given weight. Currents are sample-and-hold.
    """

    spike_times: List[np.ndarray] = field(default_factory=list)
    spike_targets: List[Tuple[str, np.ndarray]] = field(default_factory=list)
    spike_weights: List[float] = field(default_factory=list)
    spike_kinds: List[SynapseKind] = field(default_factory=list)
    currents: List[Tuple[str, int, np.ndarray, float]] = field(default_factory=list)

    def add_spikes(self, times, population: str, neurons=None, weight: float = 0.0,
                   kind: SynapseKind = SynapseKind.FAST_EXC) -> "ExternalDrive":
        """Deliver the spike train ``times`` to ``neurons`` (all when ``None``)."""
        times = np.asarray(times, dtype=float)
        idx = None if neurons is None else np.atleast_1d(np.asarray(neurons, dtype=np.int64))
        self.spike_times.append(times)
        self.spike_targets.append((population, idx))
        self.spike_weights.append(float(weight))
        self.spike_kinds.append(SynapseKind.parse(kind))
        return self

    def add_current(self, population: str, neuron: int, samples, fs: float) -> "ExternalDrive":
        samples = np.asarray(samples, dtype=float)
        if not fs > 0:
            raise DriveError("current drive needs fs > 0")
        if not np.all(np.isfinite(samples)):
            raise DriveError("current drive contains non-finite samples")
        self.currents.append((population, int(neuron), samples, float(fs)))
        return self

    @property
    def empty(self) -> bool:
        return not any(len(t) for t in self.spike_times) and not self.currents


@dataclass(frozen=True)
class SpikeRecord:
    times: np.ndarray  # seconds, non-decreasing
    population: np.ndarray  # index into populations
    neuron: np.ndarray  # index within population
    populations: Tuple[str, ...]
    sizes: Tuple[int, ...]
    duration: float
    dt: float = 1e-4
    global_index: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.times)

    def pop_index(self, pop_id: str) -> int:
        try:
            return self.populations.index(pop_id)
        except ValueError:
            raise KeyError(f"population {pop_id!r} not in record") from None

    def size_of(self, pop_id: str) -> int:
        return self.sizes[self.pop_index(pop_id)]

    def times_of(self, pop_id: str, neuron: Optional[int] = None) -> np.ndarray:
        mask = self.population == self.pop_index(pop_id)
        if neuron is not None:
            mask &= self.neuron == neuron
        return self.times[mask]

    def counts(self) -> Dict[str, int]:
        c = np.bincount(self.population, minlength=len(self.populations))
        return {p: int(n) for p, n in zip(self.populations, c)}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["time_s", "population", "neuron"])
            for t, p, n in zip(self.times, self.population, self.neuron):
                out.writerow([f"{t:.6f}", self.populations[p], int(n)])

    def summary(self, window: float = 0.5) -> dict:
        n_win = max(1, int(math.ceil(self.duration / window - 1e-9)))
        rates = {}
        for i, (pop, size) in enumerate(zip(self.populations, self.sizes)):
            t = self.times[self.population == i]
            hist = np.bincount(np.minimum((t / window).astype(np.int64), n_win - 1), minlength=n_win)
            rates[pop] = [round(float(x), 6) for x in hist / (window * size)]
        return {
            "duration_s": self.duration,
            "counts": self.counts(),
            "window_s": window,
            "rates_hz": rates,
        }

    def to_json(self, path, window: float = 0.5) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(window), fh, indent=2, sort_keys=True)


def _param_arrays(spec: NetworkSpec, dt: float) -> Dict[str, np.ndarray]:
    n = spec.n_neurons
    keys = ("C", "g_L", "E_L", "V_T", "Delta_T", "V_cut", "V_r", "a", "b", "tau_w", "tau_m", "R", "V0")
    arr = {k: np.zeros(n) for k in keys}
    arr["tau_w"][:] = 1.0
    arr["tau_m"][:] = 1.0
    arr["C"][:] = 1.0
    arr["model"] = np.zeros(n, dtype=np.int8)
    arr["ref_steps"] = np.zeros(n, dtype=np.int64)
    start = 0
    for pop in spec.populations:
        sl = slice(start, start + pop.size)
        p = pop.params
        if pop.model is Model.ADEX:
            arr["model"][sl] = _kernel.MODEL_ADEX
            for k in ("C", "g_L", "E_L", "V_T", "Delta_T", "V_cut", "V_r", "a", "b", "tau_w"):
                arr[k][sl] = getattr(p, k)
            arr["V0"][sl] = p.E_L
        else:
            arr["model"][sl] = _kernel.MODEL_LIF
            arr["E_L"][sl] = p.V_rest
            arr["V_cut"][sl] = p.V_th
            arr["V_r"][sl] = p.V_r
            arr["tau_m"][sl] = p.tau_m
            arr["R"][sl] = p.R
            arr["V0"][sl] = p.V_rest
        arr["ref_steps"][sl] = int(math.ceil(p.t_ref / dt - 1e-9)) if p.t_ref > 0 else 0
        start += pop.size
    return arr


def _compile_events(spec: NetworkSpec, drive: ExternalDrive, cfg: SimulationConfig):
    offsets = spec.offsets()
    steps, neurons, kinds, weights = [], [], [], []
    for times, (pop_id, idx), weight, kind in zip(
        drive.spike_times, drive.spike_targets, drive.spike_weights, drive.spike_kinds
    ):
        if pop_id not in offsets:
            raise DriveError(f"drive targets unknown population {pop_id!r}")
        size = spec.population(pop_id).size
        if idx is None:
            idx = np.arange(size)
        if len(idx) and (idx.min() < 0 or idx.max() >= size):
            raise DriveError(f"drive targets neuron outside population {pop_id!r}")
        if len(times) and (times.min() < 0 or times.max() > cfg.duration):
            raise DriveError("drive event times must lie within [0, duration]")
        st = np.floor(times / cfg.dt + 1e-9).astype(np.int64)
        st = np.minimum(st, cfg.n_steps - 1)
        steps.append(np.repeat(st, len(idx)))
        neurons.append(np.tile(idx + offsets[pop_id], len(st)))
        kinds.append(np.full(len(st) * len(idx), int(kind), dtype=np.int64))
        weights.append(np.full(len(st) * len(idx), weight))
    if not steps:
        return (np.zeros(0, np.int64),) * 3 + (np.zeros(0),)
    steps = np.concatenate(steps)
    neurons = np.concatenate(neurons)
    kinds = np.concatenate(kinds)
    weights = np.concatenate(weights)
    order = np.lexsort((neurons, steps))  # stable, deterministic
    return steps[order], neurons[order], kinds[order], weights[order]


def _current_block(spec: NetworkSpec, drive: ExternalDrive, cfg: SimulationConfig):
    offsets = spec.offsets()
    targets = []
    for pop_id, neuron, _, _ in drive.currents:
        if pop_id not in offsets:
            raise DriveError(f"current drive targets unknown population {pop_id!r}")
        if not 0 <= neuron < spec.population(pop_id).size:
            raise DriveError(f"current drive targets neuron outside population {pop_id!r}")
        targets.append(offsets[pop_id] + neuron)

    def block(s0: int, n: int) -> np.ndarray:
        out = np.zeros((n, len(targets)))
        t = (s0 + np.arange(n)) * cfg.dt
        for c, (_, _, samples, fs) in enumerate(drive.currents):
            k = np.floor(t * fs + 1e-9).astype(np.int64)
            valid = k < len(samples)
            out[valid, c] = samples[k[valid]]
        return out

    return np.asarray(targets, dtype=np.int64), block


def simulate(
    spec: NetworkSpec,
    matrix: ConnectivityMatrix,
    drive: Optional[ExternalDrive],
    cfg: SimulationConfig,
    tau_syn: Optional[Dict[SynapseKind, float]] = None,
    progress=None,
) -> SpikeRecord:
    """Run the network and return the spikes of the monitored populations.

    Spikes emitted during a step reach their targets at the start of the
    next step (one-step synaptic delay).
    """
    validate_connectivity(spec, matrix)
    drive = drive if drive is not None else ExternalDrive()
    taus = dict(DEFAULT_TAU_SYN)
    if tau_syn:
        taus.update({SynapseKind.parse(k): v for k, v in tau_syn.items()})
    decay = np.array([math.exp(-cfg.dt / taus[SynapseKind(k)]) for k in range(4)])

    n = spec.n_neurons
    prm = _param_arrays(spec, cfg.dt)
    order = np.lexsort((matrix.dst, matrix.src))
    out_dst = matrix.dst[order].astype(np.int64)
    out_kind = matrix.kind[order].astype(np.int64)
    out_w = matrix.weight[order].astype(np.float64)
    out_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(matrix.src, minlength=n), out=out_ptr[1:])

    ev_step, ev_neuron, ev_kind, ev_w = _compile_events(spec, drive, cfg)
    cur_targets, cur_block = _current_block(spec, drive, cfg)

    record_ids = set(cfg.record) if cfg.record is not None else {p.id for p in spec.populations}
    unknown = record_ids - {p.id for p in spec.populations}
    if unknown:
        raise KeyError(f"cannot record unknown populations {sorted(unknown)}")
    record = np.zeros(n, dtype=np.bool_)
    pop_of = np.zeros(n, dtype=np.int64)
    local = np.zeros(n, dtype=np.int64)
    rec_pops = [p for p in spec.populations if p.id in record_ids]
    rec_pos = {p.id: i for i, p in enumerate(rec_pops)}
    for pop_id, start in spec.offsets().items():
        size = spec.population(pop_id).size
        if pop_id in record_ids:
            record[start:start + size] = True
            pop_of[start:start + size] = rec_pos[pop_id]
        local[start:start + size] = np.arange(size)

    V = prm["V0"].copy()
    w = np.zeros(n)
    ref_left = np.zeros(n, dtype=np.int64)
    syn = np.zeros((4, n))
    pending = np.zeros((4, n))

    chunk_steps = max(1, int(round(cfg.chunk / cfg.dt)))
    cap = max(4 * n, chunk_steps * int(record.sum()) // (int(prm["ref_steps"].min()) + 1) + n)
    cap = min(cap, 4_000_000)
    rec_step = np.zeros(cap, dtype=np.int64)
    rec_neuron = np.zeros(cap, dtype=np.int64)
    all_steps, all_neurons = [], []
    ev_pos = 0
    s = 0
    total = cfg.n_steps
    while s < total:
        todo = min(chunk_steps, total - s)
        status, done, n_rec, ev_pos, bad = _kernel.run_chunk(
            s, todo, cfg.dt,
            prm["model"], prm["C"], prm["g_L"], prm["E_L"], prm["V_T"], prm["Delta_T"], prm["V_cut"],
            prm["V_r"], prm["a"], prm["b"], prm["tau_w"], prm["ref_steps"], prm["tau_m"], prm["R"],
            V, w, ref_left, syn, pending, decay,
            out_ptr, out_dst, out_kind, out_w,
            ev_step, ev_neuron, ev_kind, ev_w, ev_pos,
            cur_targets, cur_block(s, todo),
            record, rec_step, rec_neuron,
        )
        all_steps.append(rec_step[:n_rec].copy())
        all_neurons.append(rec_neuron[:n_rec].copy())
        if status == _kernel.OVERFLOW:
            pop_id = next(p for p, o in reversed(list(spec.offsets().items())) if o <= bad)
            raise NumericalOverflowError(
                "non-finite membrane state; dt too large or parameters pathological",
                neuron=f"{pop_id}:{local[bad]}", time=(s + done + 1) * cfg.dt,
            )
        s += done
        if progress is not None:
            progress(s, total)

    steps = np.concatenate(all_steps) if all_steps else np.zeros(0, np.int64)
    neurons = np.concatenate(all_neurons) if all_neurons else np.zeros(0, np.int64)
    return SpikeRecord(
        times=(steps + 1) * cfg.dt,
        population=pop_of[neurons],
        neuron=local[neurons],
        populations=tuple(p.id for p in rec_pops),
        sizes=tuple(p.size for p in rec_pops),
        duration=total * cfg.dt,
        dt=cfg.dt,
        global_index=neurons,
    )
