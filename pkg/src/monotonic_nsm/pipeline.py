"""End-to-end runs: ECG -> frontend -> network -> decoded states, plus the stimulus protocol."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .analysis import StateTimeline, Violation, check_monotonic, decode_state, power_report
from .config import ConfigError, RunConfig, dump_config
from .core_dynamics import NumericalOverflowError, SynapseKind
from .engine import ExternalDrive, SimulationConfig, SpikeRecord, simulate
from .io import EcgRecording, emit_plot_data, read_ecg_csv, violations_report, write_json
from .network import ConnectivityMatrix, NetworkSpec, Role, encoder_id, sample_connectivity, state_id
from .stimuli import StimulusProgram, all_transitions_protocol, program_trains, synthetic_ecg

log = logging.getLogger(__name__)

OUTPUT_FILES = ("raster.csv", "rates.csv", "timeline.csv", "power.json", "violations.json", "manifest.json")


class PipelineError(RuntimeError):
    """A stage failure; ``module`` names the stage that raised."""

    def __init__(self, module: str, cause: BaseException):
        super().__init__(f"[{module}] {type(cause).__name__}: {cause}")
        self.module, self.cause = module, cause


@dataclass
class RunArtifacts:
    spec: NetworkSpec
    matrix: ConnectivityMatrix
    record: SpikeRecord
    timeline: StateTimeline
    violations: List[Violation]
    power: dict
    program: Optional[StimulusProgram] = None

    @property
    def ok(self) -> bool:
        return not self.violations


def _stage(module: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(module, exc) from exc


def load_input(cfg: RunConfig) -> EcgRecording:
    if cfg.input.path is not None:
        return read_ecg_csv(cfg.input.path, cfg.input.fs_hz)
    syn = cfg.input.synthetic
    if syn is None:
        raise ConfigError("input needs a path or a synthetic profile")
    x = synthetic_ecg(syn.profile, syn.fs, seed=syn.seed, width=syn.width, snr_db=syn.snr_db)
    return EcgRecording(x.fs, x.samples, {"source": "synthetic"})


def _sim_config(cfg: RunConfig, duration: float) -> SimulationConfig:
    return SimulationConfig(dt=cfg.engine.dt, duration=duration, seed=cfg.engine.seed, chunk=cfg.engine.chunk)


def _analyse(cfg: RunConfig, spec, matrix, rec, program=None) -> RunArtifacts:
    tl = decode_state(rec, cfg.analysis.window, cfg.analysis.threshold,
                      [state_id(k) for k in range(cfg.network.n_states)])
    off_chip = [p.id for p in spec.by_role(Role.INPUT_ENCODER)]
    power = power_report(rec, matrix, cfg.analysis.power, exclude=off_chip)
    return RunArtifacts(spec, matrix, rec, tl, check_monotonic(tl), power, program)


def run_detection(cfg: RunConfig, ecg: Optional[EcgRecording] = None, progress=None) -> RunArtifacts:
    """Frontend -> network -> analysis for one ECG recording."""
    _stage("io_cli", cfg.validate)
    if ecg is None:
        ecg = _stage("io_cli", load_input, cfg)
    spec = _stage("network", cfg.network.build, cfg.frontend.encoder_lif)
    matrix = _stage("network", sample_connectivity, spec)
    recorded = ecg.metadata.get("source") != "synthetic"
    frontend = _stage("dsp_frontend", cfg.frontend.build, recorded)
    currents = _stage("dsp_frontend", frontend.band_currents, ecg.signal())
    drive = ExternalDrive()
    for k, cur in enumerate(currents):
        for i in range(cfg.network.encoder_size):
            drive.add_current(encoder_id(k), i, cur, ecg.fs)
    duration = cfg.engine.duration or ecg.duration
    rec = _stage("engine", simulate, spec, matrix, drive, _sim_config(cfg, duration),
                 cfg.network.tau_by_kind(), progress)
    return _stage("analysis", _analyse, cfg, spec, matrix, rec)


def protocol_program(cfg: RunConfig) -> StimulusProgram:
    s = cfg.stimulus
    return all_transitions_protocol(cfg.network.n_states, s.rate, s.segment, s.gap, s.lead)


def run_program(cfg: RunConfig, program: StimulusProgram, progress=None) -> RunArtifacts:
    """Poisson drive on the state populations following ``program``.

    Each channel's train is broadcast to every neuron of the matching state
    population as fast excitatory synaptic input.
    """
    _stage("io_cli", cfg.validate)
    spec = _stage("network", cfg.network.build, cfg.frontend.encoder_lif)
    matrix = _stage("network", sample_connectivity, spec)
    drive = ExternalDrive()
    for ch, train in enumerate(_stage("stimuli", program_trains, program, cfg.engine.seed)):
        drive.add_spikes(train, state_id(ch), weight=cfg.stimulus.weight, kind=SynapseKind.FAST_EXC)
    duration = cfg.engine.duration or program.duration
    rec = _stage("engine", simulate, spec, matrix, drive, _sim_config(cfg, duration),
                 cfg.network.tau_by_kind(), progress)
    return _stage("analysis", _analyse, cfg, spec, matrix, rec, program)


def run_protocol(cfg: RunConfig, wta_only: bool = False, progress=None) -> RunArtifacts:
    if wta_only:
        cfg = dataclasses.replace(cfg, network=dataclasses.replace(cfg.network, gating=False))
    return run_program(cfg, protocol_program(cfg), progress)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_outputs(art: RunArtifacts, cfg: RunConfig, out_dir, command: str = "detect",
                  input_digest: Optional[str] = None) -> Path:
    """Write the fixed-name output bundle and a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_plot_data(art.record, art.timeline, out, cfg.analysis.window, art.spec.offsets())
    write_json(out / "power.json", art.power)
    write_json(out / "violations.json", violations_report(art.violations))
    (out / "config.yaml").write_text(dump_config(cfg))
    if art.program is not None:
        write_json(out / "program.json", art.program.to_dict())
    return write_manifest(out, cfg, command, "ok" if art.ok else "violation", input_digest, art=art)


def write_manifest(out: Path, cfg: Optional[RunConfig], command: str, status: str,
                   input_digest: Optional[str] = None, error: Optional[str] = None,
                   art: Optional[RunArtifacts] = None) -> Path:
    files = sorted(p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    manifest = {
        "command": command,
        "status": status,
        "version": __version__,
        "config_sha256": None if cfg is None else hashlib.sha256(dump_config(cfg).encode()).hexdigest(),
        "input_sha256": input_digest,
        "files": {name: _sha256(out / name) for name in files},
    }
    if error is not None:
        manifest["error"] = error
    if art is not None:
        manifest["summary"] = {
            "duration_s": art.record.duration,
            "spikes": len(art.record),
            "visited_states": art.timeline.visited()[:1000],
            "final_state": art.timeline.final,
            "violations": len(art.violations),
        }
    path = out / "manifest.json"
    write_json(path, manifest)
    return path


def file_digest(path) -> str:
    return _sha256(Path(path))


def ecg_digest(ecg: EcgRecording) -> str:
    h = hashlib.sha256(np.float64(ecg.fs).tobytes())
    h.update(np.ascontiguousarray(ecg.samples, dtype=np.float64).tobytes())
    return h.hexdigest()
