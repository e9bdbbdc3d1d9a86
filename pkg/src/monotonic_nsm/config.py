"""Run configuration: a YAML document with network/frontend/engine/analysis/input sections."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import yaml

from .analysis import PowerModel
from .core_dynamics import DEFAULT_TAU_SYN, AdExParams, LIFParams, SynapseKind
from .dsp import (DEFAULT_BANDS, DEFAULT_ENCODER_LIF, ENCODER_THRESHOLD_FRACTION, BandSpec, EncoderParams, Frontend,
                  check_bands, default_encoders)
from .network import DEFAULT_EXC_PARAMS, DEFAULT_INH_PARAMS, DEFAULT_WEIGHTS, Model, NetworkSpec, build_nsm_topology
from .stimuli import HRProfile


class ConfigError(ValueError):
    pass


def _params_from(cls, data: Optional[dict], default):
    if not data:
        return default
    unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    try:
        return dataclasses.replace(default, **{k: float(v) for k, v in data.items()})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _as_dict(obj) -> dict:
    return {k: float(v) for k, v in dataclasses.asdict(obj).items()}


@dataclass(frozen=True)
class NetworkSection:
    n_states: int = 4
    pop_size: int = 16
    seed: int = 0
    gating: bool = True
    shared_gate_inh: bool = False
    encoder_size: int = 1
    encoder_model: str = "LIF"
    weights: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    exc_params: AdExParams = DEFAULT_EXC_PARAMS
    inh_params: AdExParams = DEFAULT_INH_PARAMS
    tau_syn: Dict[str, float] = field(default_factory=lambda: {k.receptor: v for k, v in DEFAULT_TAU_SYN.items()})

    def build(self, encoder_lif: LIFParams = DEFAULT_ENCODER_LIF) -> NetworkSpec:
        model = Model(self.encoder_model.upper())
        return build_nsm_topology(
            self.n_states, self.pop_size, self.weights, seed=self.seed, gating=self.gating,
            shared_gate_inh=self.shared_gate_inh, encoder_size=self.encoder_size, encoder_model=model,
            exc_params=self.exc_params, inh_params=self.inh_params,
            encoder_params=encoder_lif if model is Model.LIF else self.exc_params,
        )

    def tau_by_kind(self) -> Dict[SynapseKind, float]:
        return {SynapseKind.parse(k): float(v) for k, v in self.tau_syn.items()}


@dataclass(frozen=True)
class FrontendSection:
    bands: Tuple[Tuple[float, float], ...] = tuple((b.low_bpm, b.high_bpm) for b in DEFAULT_BANDS)
    order: int = 4
    prestage: Union[bool, str] = "auto"  # auto: on for recorded ECG, off for synthetic
    threshold_fraction: float = ENCODER_THRESHOLD_FRACTION
    gains: Optional[Tuple[float, ...]] = None
    encoder_lif: LIFParams = DEFAULT_ENCODER_LIF

    def band_specs(self) -> Tuple[BandSpec, ...]:
        return tuple(BandSpec(i, float(lo), float(hi)) for i, (lo, hi) in enumerate(self.bands))

    def build(self, recorded: bool = False) -> Frontend:
        bands = self.band_specs()
        if self.prestage not in (True, False, "auto"):
            raise ConfigError("frontend.prestage must be true, false or auto")
        prestage = recorded if self.prestage == "auto" else bool(self.prestage)
        if self.gains is None:
            encoders = default_encoders(bands, self.encoder_lif, self.threshold_fraction)
        else:
            if len(self.gains) != len(bands):
                raise ConfigError("frontend.gains needs one value per band")
            encoders = tuple(EncoderParams(float(g), self.encoder_lif) for g in self.gains)
        return Frontend(bands, encoders, self.order, prestage)


@dataclass(frozen=True)
class EngineSection:
    dt: float = 1e-4
    seed: int = 0
    duration: Optional[float] = None  # defaults to the input length
    chunk: float = 1.0


@dataclass(frozen=True)
class AnalysisSection:
    window: float = 0.1
    threshold: float = 10.0
    power: PowerModel = PowerModel()


@dataclass(frozen=True)
class SyntheticInput:
    profile: HRProfile = HRProfile.constant(60.0, 120.0)
    fs: float = 256.0
    width: float = 0.01
    snr_db: Optional[float] = None
    seed: int = 0


@dataclass(frozen=True)
class InputSection:
    path: Optional[str] = None
    fs_hz: Optional[float] = None
    synthetic: Optional[SyntheticInput] = None


@dataclass(frozen=True)
class StimulusSection:
    """Poisson drive used by the protocol subcommand."""

    rate: float = 50.0
    segment: float = 3.0
    gap: float = 2.0
    lead: float = 0.5
    weight: float = DEFAULT_WEIGHTS["input_lif_state"]


@dataclass(frozen=True)
class RunConfig:
    network: NetworkSection = NetworkSection()
    frontend: FrontendSection = FrontendSection()
    engine: EngineSection = EngineSection()
    analysis: AnalysisSection = AnalysisSection()
    input: InputSection = InputSection()
    stimulus: StimulusSection = StimulusSection()

    def validate(self) -> "RunConfig":
        """Raise ``ConfigError`` unless every section is usable."""
        try:
            check_bands(self.frontend.band_specs())
            if len(self.frontend.bands) != self.network.n_states:
                raise ConfigError("need one frontend band per network state")
            self.network.build(self.frontend.encoder_lif)
            self.frontend.build()
            self.network.tau_by_kind()
        except ConfigError:
            raise
        except (ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        if not self.engine.dt > 0:
            raise ConfigError("engine.dt must be > 0")
        if self.engine.duration is not None and not self.engine.duration > 0:
            raise ConfigError("engine.duration must be > 0")
        if not (self.analysis.window > 0 and self.analysis.threshold >= 0):
            raise ConfigError("analysis.window must be > 0 and threshold >= 0")
        if self.input.fs_hz is not None and not self.input.fs_hz > 0:
            raise ConfigError("input.fs_hz must be > 0")
        return self

    def to_dict(self) -> dict:
        n, f, e, a, i, s = self.network, self.frontend, self.engine, self.analysis, self.input, self.stimulus
        out = {
            "network": {
                "n_states": n.n_states, "pop_size": n.pop_size, "seed": n.seed, "gating": n.gating,
                "shared_gate_inh": n.shared_gate_inh, "encoder_size": n.encoder_size,
                "encoder_model": n.encoder_model,
                "weights": {k: float(v) for k, v in sorted(n.weights.items())},
                "exc_params": _as_dict(n.exc_params), "inh_params": _as_dict(n.inh_params),
                "tau_syn": {k: float(v) for k, v in sorted(n.tau_syn.items())},
            },
            "frontend": {
                "bands": [[float(lo), float(hi)] for lo, hi in f.bands], "order": f.order, "prestage": f.prestage,
                "threshold_fraction": f.threshold_fraction,
                "gains": None if f.gains is None else [float(g) for g in f.gains],
                "encoder_lif": _as_dict(f.encoder_lif),
            },
            "engine": {"dt": e.dt, "seed": e.seed, "duration": e.duration, "chunk": e.chunk},
            "analysis": {"window": a.window, "threshold": a.threshold, "power": _as_dict(a.power)},
            "input": {"path": i.path, "fs_hz": i.fs_hz, "synthetic": None},
            "stimulus": dataclasses.asdict(s),
        }
        if i.synthetic is not None:
            syn = i.synthetic
            out["input"]["synthetic"] = {
                "knots": [list(k) for k in syn.profile.knots], "fs": syn.fs, "width": syn.width,
                "snr_db": syn.snr_db, "seed": syn.seed,
            }
        return out

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "RunConfig":
        d = d or {}
        unknown = set(d) - {"network", "frontend", "engine", "analysis", "input", "stimulus"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        try:
            return cls(
                network=_network(d.get("network") or {}),
                frontend=_frontend(d.get("frontend") or {}),
                engine=_simple(EngineSection, d.get("engine")),
                analysis=_analysis(d.get("analysis") or {}),
                input=_input(d.get("input") or {}),
                stimulus=_simple(StimulusSection, d.get("stimulus")),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc


def _simple(cls, data: Optional[dict]):
    data = dict(data or {})
    unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


def _network(d: dict) -> NetworkSection:
    d = dict(d)
    base = NetworkSection()
    weights = dict(DEFAULT_WEIGHTS)
    extra = d.pop("weights", None) or {}
    unknown = set(extra) - set(weights)
    if unknown:
        raise ConfigError(f"unknown weight keys: {sorted(unknown)}")
    weights.update({k: float(v) for k, v in extra.items()})
    tau = dict(base.tau_syn)
    tau.update({SynapseKind.parse(k).receptor: float(v) for k, v in (d.pop("tau_syn", None) or {}).items()})
    exc = _params_from(AdExParams, d.pop("exc_params", None), base.exc_params)
    inh = _params_from(AdExParams, d.pop("inh_params", None), base.inh_params)
    sec = _simple(NetworkSection, d)
    return dataclasses.replace(sec, weights=weights, tau_syn=tau, exc_params=exc, inh_params=inh)


def _frontend(d: dict) -> FrontendSection:
    d = dict(d)
    lif = _params_from(LIFParams, d.pop("encoder_lif", None), DEFAULT_ENCODER_LIF)
    if "bands" in d:
        d["bands"] = tuple(tuple(float(x) for x in b) for b in d["bands"])
    if d.get("gains") is not None:
        d["gains"] = tuple(float(g) for g in d["gains"])
    return dataclasses.replace(_simple(FrontendSection, d), encoder_lif=lif)


def _analysis(d: dict) -> AnalysisSection:
    d = dict(d)
    power = _params_from(PowerModel, d.pop("power", None), PowerModel())
    return dataclasses.replace(_simple(AnalysisSection, d), power=power)


def _input(d: dict) -> InputSection:
    d = dict(d)
    syn = d.pop("synthetic", None)
    sec = _simple(InputSection, d)
    if syn:
        syn = dict(syn)
        knots = syn.pop("knots", None)
        if knots is None:
            raise ConfigError("input.synthetic needs knots")
        profile = HRProfile(tuple(tuple(k) for k in knots))
        sec = dataclasses.replace(sec, synthetic=SyntheticInput(profile=profile, **_simple(_SynKeys, syn).__dict__))
    return sec


@dataclass
class _SynKeys:
    fs: float = 256.0
    width: float = 0.01
    snr_db: Optional[float] = None
    seed: int = 0


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError:
        raise
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return RunConfig.from_dict(data).validate()


def dump_config(cfg: RunConfig, path=None) -> str:
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text


def load_profile(path) -> HRProfile:
    """An HR profile file: YAML/JSON with a ``knots`` list of ``[time_s, bpm]``."""
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if isinstance(data, list):
        data = {"knots": data}
    try:
        return HRProfile.from_dict(data)
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"invalid profile {path}: {exc}") from exc
