"""Point-neuron and synapse dynamics (AdEx, LIF, exponential current synapses).

All quantities are SI: volts, amperes, siemens, farads, seconds.
These functions are the scalar reference; the engine runs the same
equations in a compiled loop over whole populations.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple


class NumericalOverflowError(ArithmeticError):
    """Raised when a state variable becomes non-finite."""

    def __init__(self, message: str, neuron: Optional[str] = None, time: Optional[float] = None):
        self.neuron = neuron
        self.time = time
        where = []
        if neuron is not None:
            where.append(f"neuron {neuron}")
        if time is not None:
            where.append(f"t={time:.6f}s")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class SynapseKind(enum.IntEnum):
    FAST_EXC = 0  # AMPA
    SLOW_EXC = 1  # NMDA
    FAST_INH = 2  # GABA_A
    SLOW_INH = 3  # GABA_B

    @property
    def inhibitory(self) -> bool:
        return self in (SynapseKind.FAST_INH, SynapseKind.SLOW_INH)

    @property
    def sign(self) -> float:
        return -1.0 if self.inhibitory else 1.0

    @property
    def receptor(self) -> str:
        return _RECEPTORS[self]

    @classmethod
    def parse(cls, name: "str | SynapseKind") -> "SynapseKind":
        if isinstance(name, SynapseKind):
            return name
        key = str(name).strip().upper().replace(" ", "_")
        if key in cls.__members__:
            return cls[key]
        for kind, receptor in _RECEPTORS.items():
            if key == receptor:
                return kind
        raise ValueError(f"unknown synapse kind {name!r}")


_RECEPTORS = {
    SynapseKind.FAST_EXC: "AMPA",
    SynapseKind.SLOW_EXC: "NMDA",
    SynapseKind.FAST_INH: "GABA_A",
    SynapseKind.SLOW_INH: "GABA_B",
}

# Decay constants per kind; fast vs slow mirrors the hardware synapse classes.
DEFAULT_TAU_SYN = {
    SynapseKind.FAST_EXC: 5e-3,
    SynapseKind.SLOW_EXC: 100e-3,
    SynapseKind.FAST_INH: 10e-3,
    SynapseKind.SLOW_INH: 100e-3,
}


@dataclass(frozen=True)
class AdExParams:
    C: float = 200e-12
    g_L: float = 10e-9
    E_L: float = -70e-3
    V_T: float = -50e-3
    Delta_T: float = 2e-3
    V_cut: float = 0.0
    V_r: float = -58e-3
    a: float = 2e-9
    b: float = 0.0
    tau_w: float = 100e-3
    t_ref: float = 2e-3

    def __post_init__(self):
        if not (self.C > 0 and self.g_L > 0 and self.tau_w > 0):
            raise ValueError("AdEx requires C > 0, g_L > 0, tau_w > 0")
        if self.Delta_T < 0 or self.t_ref < 0:
            raise ValueError("AdEx requires Delta_T >= 0 and t_ref >= 0")
        if not self.V_r < self.V_cut:
            raise ValueError("AdEx requires V_r < V_cut")
        if not (self.E_L <= self.V_T < self.V_cut):
            raise ValueError("AdEx requires E_L <= V_T < V_cut")

    @property
    def rest(self) -> float:
        return self.E_L

    @property
    def threshold(self) -> float:
        return self.V_cut


@dataclass(frozen=True)
class LIFParams:
    tau_m: float = 20e-3
    R: float = 100e6
    V_rest: float = -70e-3
    V_th: float = -50e-3
    V_r: float = -70e-3
    t_ref: float = 0.0

    def __post_init__(self):
        if not (self.tau_m > 0 and self.R > 0):
            raise ValueError("LIF requires tau_m > 0 and R > 0")
        if not self.V_r < self.V_th:
            raise ValueError("LIF requires V_r < V_th")
        if self.t_ref < 0:
            raise ValueError("LIF requires t_ref >= 0")

    @property
    def rest(self) -> float:
        return self.V_rest

    @property
    def threshold(self) -> float:
        return self.V_th

    @property
    def rheobase(self) -> float:
        """Smallest constant current that eventually fires the neuron."""
        return (self.V_th - self.V_rest) / self.R

    def rate(self, current: float) -> float:
        """Closed-form steady firing rate under constant current."""
        drive = self.R * current
        gap = self.V_th - self.V_rest
        if drive <= gap:
            return 0.0
        # reset below rest shifts the starting point of each interval
        start = self.V_r - self.V_rest
        isi = self.tau_m * math.log((drive - start) / (drive - gap))
        return 1.0 / (isi + self.t_ref)


@dataclass(frozen=True)
class NeuronState:
    V: float
    w: float = 0.0
    refractory: float = 0.0
    last_spike: Optional[float] = None

    @classmethod
    def at_rest(cls, params: "AdExParams | LIFParams") -> "NeuronState":
        return cls(V=params.rest)


@dataclass(frozen=True)
class SynapseParams:
    kind: SynapseKind
    w_syn: float
    tau_syn: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SynapseKind.parse(self.kind))
        if self.tau_syn is None:
            object.__setattr__(self, "tau_syn", DEFAULT_TAU_SYN[self.kind])
        if self.w_syn < 0:
            raise ValueError("w_syn must be >= 0; the kind carries the sign")
        if not self.tau_syn > 0:
            raise ValueError("tau_syn must be > 0")


def _in_refractory(remaining: float, dt: float) -> bool:
    # tolerance absorbs float residue of repeated dt subtraction
    return remaining > 1e-9 * dt


def _check_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise NumericalOverflowError("non-finite state after update", neuron=name)


def adex_step(
    state: NeuronState,
    p: AdExParams,
    I_in: float,
    dt: float,
    t: float = 0.0,
    name: str = "?",
) -> Tuple[NeuronState, bool]:
    """Advance one AdEx neuron by a forward-Euler step.

    ``t`` is the step start time; a spike is stamped at ``t + dt``.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    V, w = state.V, state.w
    if _in_refractory(state.refractory, dt):
        w = w + dt * (p.a * (p.V_r - p.E_L) - w) / p.tau_w
        _check_finite(name, w)
        return replace(state, V=p.V_r, w=w, refractory=max(0.0, state.refractory - dt)), False

    if p.Delta_T > 0:
        # cap the exponent; above V_cut the spike fires regardless
        arg = min((V - p.V_T) / p.Delta_T, 50.0)
        spike_current = p.g_L * p.Delta_T * math.exp(arg)
    else:
        spike_current = 0.0
    dV = (-p.g_L * (V - p.E_L) + spike_current - w + I_in) / p.C
    dw = (p.a * (V - p.E_L) - w) / p.tau_w
    V = V + dt * dV
    w = w + dt * dw
    _check_finite(name, V, w)
    if V >= p.V_cut:
        return NeuronState(V=p.V_r, w=w + p.b, refractory=p.t_ref, last_spike=t + dt), True
    return replace(state, V=V, w=w), False


def lif_step(
    state: NeuronState,
    p: LIFParams,
    I_in: float,
    dt: float,
    t: float = 0.0,
    name: str = "?",
) -> Tuple[NeuronState, bool]:
    """Advance one LIF neuron by a forward-Euler step."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if _in_refractory(state.refractory, dt):
        return replace(state, V=p.V_r, refractory=max(0.0, state.refractory - dt)), False
    V = state.V + dt * (-(state.V - p.V_rest) + p.R * I_in) / p.tau_m
    _check_finite(name, V)
    if V >= p.V_th:
        return NeuronState(V=p.V_r, w=0.0, refractory=p.t_ref, last_spike=t + dt), True
    return replace(state, V=V, w=0.0), False


def synapse_step(current: float, p: SynapseParams, n_presyn_spikes: int, dt: float) -> Tuple[float, float]:
    """Decay the synaptic current and add this step's arrivals.

    Returns ``(signed contribution, next unsigned state)``.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if n_presyn_spikes < 0:
        raise ValueError("spike count must be >= 0")
    nxt = current * math.exp(-dt / p.tau_syn) + n_presyn_spikes * p.w_syn
    if not math.isfinite(nxt):
        raise NumericalOverflowError("non-finite synaptic current")
    return p.kind.sign * nxt, nxt
