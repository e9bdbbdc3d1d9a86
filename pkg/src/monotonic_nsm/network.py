"""Population/projection topology of the monotonic state machine.

Connection probabilities follow the published connectivity table; weights
are software calibrations (the hardware biases were never reported).
"""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np

from .core_dynamics import AdExParams, LIFParams, SynapseKind
from .dsp import DEFAULT_ENCODER_LIF

log = logging.getLogger(__name__)

CAM_FAN_IN = 64
_cam_warned: List[bool] = []  # warn once per process


class InvalidTopologyError(ValueError):
    pass


class Model(str, enum.Enum):
    ADEX = "ADEX"
    LIF = "LIF"


class Role(str, enum.Enum):
    STATE = "STATE"
    WTA_INH = "WTA_INH"
    GATE = "GATE"
    GATE_INH = "GATE_INH"
    INPUT_ENCODER = "INPUT_ENCODER"


@dataclass(frozen=True)
class PopulationSpec:
    id: str
    size: int
    model: Model
    params: Union[AdExParams, LIFParams]
    role: Role
    index: Optional[int] = None  # state/gate/channel number where meaningful

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        object.__setattr__(self, "role", Role(self.role))
        if self.size < 1:
            raise InvalidTopologyError(f"population {self.id!r} must have size >= 1")
        expected = AdExParams if self.model is Model.ADEX else LIFParams
        if not isinstance(self.params, expected):
            raise InvalidTopologyError(f"population {self.id!r}: params do not match model {self.model.value}")


@dataclass(frozen=True)
class ProjectionSpec:
    source: str
    target: str
    kind: SynapseKind
    p: float
    weight: float
    family: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", SynapseKind.parse(self.kind))
        if not 0.0 <= self.p <= 1.0:
            raise InvalidTopologyError(f"projection {self.source}->{self.target}: p={self.p} outside [0, 1]")
        if self.weight < 0:
            raise InvalidTopologyError(f"projection {self.source}->{self.target}: negative weight")


@dataclass(frozen=True)
class NetworkSpec:
    populations: tuple
    projections: tuple
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "populations", tuple(self.populations))
        object.__setattr__(self, "projections", tuple(self.projections))
        ids = [pop.id for pop in self.populations]
        if len(set(ids)) != len(ids):
            raise InvalidTopologyError("population ids must be unique")
        known = set(ids)
        for proj in self.projections:
            if proj.source not in known or proj.target not in known:
                raise InvalidTopologyError(f"projection {proj.source}->{proj.target} references unknown population")

    def population(self, pop_id: str) -> PopulationSpec:
        for pop in self.populations:
            if pop.id == pop_id:
                return pop
        raise KeyError(pop_id)

    @property
    def n_neurons(self) -> int:
        return sum(pop.size for pop in self.populations)

    def offsets(self) -> Dict[str, int]:
        """Global index of the first neuron of each population."""
        out, start = {}, 0
        for pop in self.populations:
            out[pop.id] = start
            start += pop.size
        return out

    def by_role(self, role: Role) -> List[PopulationSpec]:
        role = Role(role)
        found = [pop for pop in self.populations if pop.role is role]
        return sorted(found, key=lambda pop: (pop.index if pop.index is not None else -1, pop.id))

    def state_ids(self) -> List[str]:
        return [pop.id for pop in self.by_role(Role.STATE)]

    def encoder_ids(self) -> List[str]:
        return [pop.id for pop in self.by_role(Role.INPUT_ENCODER)]

    def core_neuron_count(self) -> int:
        """Neurons excluding input encoders."""
        return sum(pop.size for pop in self.populations if pop.role is not Role.INPUT_ENCODER)


# Connectivity table: (group, source class, target class, receptor, probability).
# Keys in DEFAULT_WEIGHTS match the family names below.
TABLE_FAMILIES = {
    "wta_state_inh": ("WTA", "state", "inh", SynapseKind.SLOW_EXC, 0.60),
    "wta_inh_state": ("WTA", "inh", "state", SynapseKind.SLOW_INH, 0.60),
    "wta_state_state": ("WTA", "state", "state", SynapseKind.SLOW_EXC, 0.83),
    "wta_inh_inh": ("WTA", "inh", "inh", SynapseKind.SLOW_INH, 0.20),
    "gating_gate_inh": ("GATING", "gate", "inh", SynapseKind.SLOW_EXC, 0.30),
    "gating_inh_gate": ("GATING", "inh", "gate", SynapseKind.SLOW_INH, 0.30),
    "gating_gate_gate": ("GATING", "gate", "gate", SynapseKind.SLOW_EXC, 0.50),
    "gating_inh_inh": ("GATING", "inh", "inh", SynapseKind.SLOW_INH, 0.50),
    "monotonic_gate_state": ("MONOTONIC", "gate", "state", SynapseKind.SLOW_INH, 1.00),
    "monotonic_state_gate_off": ("MONOTONIC", "state", "gate", SynapseKind.SLOW_INH, 1.00),
    "monotonic_state_gate_on": ("MONOTONIC", "state", "gate", SynapseKind.FAST_EXC, 1.00),
    "input_lif_state": ("INPUT", "lif", "state", SynapseKind.FAST_EXC, 1.00),
}

# Amperes per spike, calibrated once against the behavioural acceptance suite.
DEFAULT_WEIGHTS: Dict[str, float] = {
    "wta_state_inh": 4.2e-12,
    "wta_inh_state": 68e-12,
    "wta_state_state": 17.5e-12,
    "wta_inh_inh": 13e-12,
    "gating_gate_inh": 8e-12,
    "gating_inh_gate": 30e-12,
    "gating_gate_gate": 30e-12,
    "gating_inh_inh": 8e-12,
    "monotonic_gate_state": 30e-12,
    "monotonic_state_gate_off": 30e-12,
    "monotonic_state_gate_on": 100e-12,
    "input_lif_state": 3.3e-9,
}

# Excitatory (state and gate) neurons use a long refractory period: it caps
# the attractor rate near 50-60 Hz so persistent activity neither dies nor
# runs away. Inhibitory pools keep the standard 2 ms.
DEFAULT_EXC_PARAMS = AdExParams(t_ref=15e-3)
DEFAULT_INH_PARAMS = AdExParams()
DEFAULT_ENCODER_PARAMS = DEFAULT_ENCODER_LIF


def _weights(overrides: Optional[Mapping[str, float]]) -> Dict[str, float]:
    table = dict(DEFAULT_WEIGHTS)
    if overrides:
        unknown = set(overrides) - set(table)
        if unknown:
            raise InvalidTopologyError(f"unknown weight keys: {sorted(unknown)}")
        table.update({k: float(v) for k, v in overrides.items()})
    return table


def _proj(family: str, source: str, target: str, weights: Mapping[str, float]) -> ProjectionSpec:
    _, _, _, kind, p = TABLE_FAMILIES[family]
    return ProjectionSpec(source, target, kind, p, weights[family], family)


def state_id(k: int) -> str:
    return f"state{k}"


def gate_id(k: int) -> str:
    return f"gate{k}"


def gate_inh_id(k: int) -> str:
    return f"gate{k}_inh"


def encoder_id(k: int) -> str:
    return f"input{k}"


WTA_INH_ID = "wta_inh"
SHARED_GATE_INH_ID = "gate_inh"


def build_nsm_topology(
    n_states: int = 4,
    pop_size: int = 16,
    weights: Optional[Mapping[str, float]] = None,
    *,
    seed: int = 0,
    gating: bool = True,
    shared_gate_inh: bool = False,
    encoder_size: int = 1,
    encoder_model: Model = Model.LIF,
    exc_params: AdExParams = DEFAULT_EXC_PARAMS,
    inh_params: AdExParams = DEFAULT_INH_PARAMS,
    encoder_params: Optional[Union[LIFParams, AdExParams]] = None,
) -> NetworkSpec:
    """Build the monotonic neural state machine.

    With ``gating=False`` only the winner-take-all core and its inputs are
    built, which gives the non-monotonic reference network.
    """
    if n_states < 2:
        raise InvalidTopologyError("a state machine needs at least 2 states")
    if pop_size < 1:
        raise InvalidTopologyError("pop_size must be >= 1")
    w = _weights(weights)
    encoder_model = Model(encoder_model)
    if encoder_params is None:
        encoder_params = DEFAULT_ENCODER_PARAMS if encoder_model is Model.LIF else exc_params

    pops: List[PopulationSpec] = []
    projs: List[ProjectionSpec] = []

    for k in range(n_states):
        pops.append(PopulationSpec(state_id(k), pop_size, Model.ADEX, exc_params, Role.STATE, k))
    pops.append(PopulationSpec(WTA_INH_ID, pop_size, Model.ADEX, inh_params, Role.WTA_INH))

    for k in range(n_states):
        s = state_id(k)
        projs.append(_proj("wta_state_state", s, s, w))
        projs.append(_proj("wta_state_inh", s, WTA_INH_ID, w))
        projs.append(_proj("wta_inh_state", WTA_INH_ID, s, w))
    projs.append(_proj("wta_inh_inh", WTA_INH_ID, WTA_INH_ID, w))

    if gating:
        if shared_gate_inh:
            pops.append(PopulationSpec(SHARED_GATE_INH_ID, pop_size, Model.ADEX, inh_params, Role.GATE_INH))
        for k in range(1, n_states):
            g = gate_id(k)
            gi = SHARED_GATE_INH_ID if shared_gate_inh else gate_inh_id(k)
            pops.append(PopulationSpec(g, pop_size, Model.ADEX, exc_params, Role.GATE, k))
            if not shared_gate_inh:
                pops.append(PopulationSpec(gi, pop_size, Model.ADEX, inh_params, Role.GATE_INH, k))
                projs.append(_proj("gating_inh_inh", gi, gi, w))
            projs.append(_proj("gating_gate_gate", g, g, w))
            projs.append(_proj("gating_gate_inh", g, gi, w))
            projs.append(_proj("gating_inh_gate", gi, g, w))
            projs.append(_proj("monotonic_gate_state", g, state_id(k), w))
        if shared_gate_inh:
            projs.append(_proj("gating_inh_inh", SHARED_GATE_INH_ID, SHARED_GATE_INH_ID, w))
        for k in range(n_states):
            s = state_id(k)
            if k + 1 < n_states:
                projs.append(_proj("monotonic_state_gate_off", s, gate_id(k + 1), w))
            for j in range(1, n_states):
                # re-arm gates of lower states and of states beyond the next one
                if j < k or j >= k + 2:
                    projs.append(_proj("monotonic_state_gate_on", s, gate_id(j), w))

    for k in range(n_states):
        e = encoder_id(k)
        pops.append(PopulationSpec(e, encoder_size, encoder_model, encoder_params, Role.INPUT_ENCODER, k))
        projs.append(_proj("input_lif_state", e, state_id(k), w))

    return NetworkSpec(tuple(pops), tuple(projs), seed)


def build_ei_primitive(
    pop_size: int = 16,
    weights: Optional[Mapping[str, float]] = None,
    *,
    seed: int = 0,
    exc_params: AdExParams = DEFAULT_EXC_PARAMS,
    inh_params: AdExParams = DEFAULT_INH_PARAMS,
) -> NetworkSpec:
    """A single excitatory state population with its shared inhibitor and input."""
    w = _weights(weights)
    s, e = state_id(0), encoder_id(0)
    pops = (
        PopulationSpec(s, pop_size, Model.ADEX, exc_params, Role.STATE, 0),
        PopulationSpec(WTA_INH_ID, pop_size, Model.ADEX, inh_params, Role.WTA_INH),
        PopulationSpec(e, 1, Model.LIF, DEFAULT_ENCODER_PARAMS, Role.INPUT_ENCODER, 0),
    )
    projs = (
        _proj("wta_state_state", s, s, w),
        _proj("wta_state_inh", s, WTA_INH_ID, w),
        _proj("wta_inh_state", WTA_INH_ID, s, w),
        _proj("wta_inh_inh", WTA_INH_ID, WTA_INH_ID, w),
        _proj("input_lif_state", e, s, w),
    )
    return NetworkSpec(pops, projs, seed)


@dataclass(frozen=True)
class ConnectivityMatrix:
    """Materialised edges, indexed globally (see ``NetworkSpec.offsets``)."""

    src: np.ndarray
    dst: np.ndarray
    kind: np.ndarray
    weight: np.ndarray
    projection: np.ndarray  # index into spec.projections
    n_neurons: int

    def __len__(self) -> int:
        return len(self.src)

    def out_degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n_neurons)

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.n_neurons)

    def edges_of(self, projection_index: int) -> np.ndarray:
        mask = self.projection == projection_index
        return np.column_stack([self.src[mask], self.dst[mask]])

    def to_csv(self, path, spec: NetworkSpec) -> None:
        names = _neuron_names(spec)
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["src", "dst", "kind", "weight"])
            for s, d, k, w in zip(self.src, self.dst, self.kind, self.weight):
                out.writerow([names[s], names[d], SynapseKind(int(k)).receptor, repr(float(w))])


def _neuron_names(spec: NetworkSpec) -> List[str]:
    return [f"{pop.id}:{i}" for pop in spec.populations for i in range(pop.size)]


def sample_connectivity(spec: NetworkSpec) -> ConnectivityMatrix:
    """Draw every candidate pair independently with its projection's probability."""
    rng = np.random.default_rng(spec.seed)
    offsets = spec.offsets()
    sizes = {pop.id: pop.size for pop in spec.populations}
    src, dst, kind, weight, proj_idx = [], [], [], [], []
    for i, proj in enumerate(spec.projections):
        n_src, n_dst = sizes[proj.source], sizes[proj.target]
        # always draw, so adding a p=0/1 projection never shifts later streams
        mask = rng.random((n_src, n_dst)) < proj.p
        if proj.source == proj.target:
            np.fill_diagonal(mask, False)
        s, d = np.nonzero(mask)
        src.append(s + offsets[proj.source])
        dst.append(d + offsets[proj.target])
        kind.append(np.full(len(s), int(proj.kind), dtype=np.int8))
        weight.append(np.full(len(s), proj.weight))
        proj_idx.append(np.full(len(s), i, dtype=np.int32))
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dtype=dt)  # noqa: E731
    matrix = ConnectivityMatrix(
        src=cat(src, np.int64),
        dst=cat(dst, np.int64),
        kind=cat(kind, np.int8),
        weight=cat(weight, np.float64),
        projection=cat(proj_idx, np.int32),
        n_neurons=spec.n_neurons,
    )
    fan_in = matrix.in_degree()
    if len(fan_in) and fan_in.max() > CAM_FAN_IN and not _cam_warned:
        _cam_warned.append(True)
        log.warning("max fan-in %d exceeds the %d-entry CAM of the reference chip", fan_in.max(), CAM_FAN_IN)
    return matrix


def validate_connectivity(spec: NetworkSpec, matrix: ConnectivityMatrix) -> None:
    """Check that every edge lies inside its projection's endpoint populations."""
    if matrix.n_neurons != spec.n_neurons:
        raise InvalidTopologyError("connectivity was sampled for a different network size")
    offsets = spec.offsets()
    for i, proj in enumerate(spec.projections):
        mask = matrix.projection == i
        s0, d0 = offsets[proj.source], offsets[proj.target]
        s_ok = (matrix.src[mask] >= s0) & (matrix.src[mask] < s0 + spec.population(proj.source).size)
        d_ok = (matrix.dst[mask] >= d0) & (matrix.dst[mask] < d0 + spec.population(proj.target).size)
        k_ok = matrix.kind[mask] == int(proj.kind)
        if not (s_ok.all() and d_ok.all() and k_ok.all()):
            raise InvalidTopologyError(f"edges of projection {proj.source}->{proj.target} violate its endpoints or kind")
    if len(matrix.projection) and (matrix.projection.min() < 0 or matrix.projection.max() >= len(spec.projections)):
        raise InvalidTopologyError("edge refers to a non-existent projection")
