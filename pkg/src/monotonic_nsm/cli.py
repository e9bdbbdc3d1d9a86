"""Command line: detect, simulate, protocol, design-filters, synth.

Exit codes: 0 ok, 1 monotonicity violation, 2 configuration error,
3 I/O error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import ConfigError, RunConfig, load_config, load_profile
from .core_dynamics import NumericalOverflowError, SynapseKind
from .dsp import InvalidBandError
from .engine import DriveError, ExternalDrive
from .io import EcgParseError, MissingSampleRateError, read_ecg_csv, write_ecg_csv
from .network import InvalidTopologyError
from .pipeline import (PipelineError, RunArtifacts, ecg_digest, file_digest, run_detection, run_program,
                       run_protocol, write_manifest, write_outputs)
from .stimuli import HRProfile, InvalidProfileError, StimulusProgram, synthetic_ecg

log = logging.getLogger("monotonic_nsm")

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3, 4

_CONFIG_ERRORS = (ConfigError, MissingSampleRateError, InvalidBandError, InvalidTopologyError, InvalidProfileError,
                  DriveError)


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, PipelineError):
        exc = exc.cause
    if isinstance(exc, (NumericalOverflowError, FloatingPointError)):
        return EXIT_NUMERIC
    if isinstance(exc, _CONFIG_ERRORS):
        return EXIT_CONFIG
    if isinstance(exc, (OSError, EcgParseError)):
        return EXIT_IO
    if isinstance(exc, (ValueError, KeyError, TypeError)):
        return EXIT_CONFIG
    raise exc


def _base_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(
            cfg,
            network=dataclasses.replace(cfg.network, seed=args.seed),
            engine=dataclasses.replace(cfg.engine, seed=args.seed),
        )
    if getattr(args, "dt", None) is not None:
        cfg = dataclasses.replace(cfg, engine=dataclasses.replace(cfg.engine, dt=args.dt))
    return cfg.validate()


def _report(art: RunArtifacts) -> int:
    tl = art.timeline
    print(f"duration {art.record.duration:.3f} s, {len(art.record)} spikes, "
          f"final state {tl.final if tl.final is not None else 'NONE'}, "
          f"power {art.power['power_w'] * 1e6:.2f} uW, violations {len(art.violations)}")
    return EXIT_OK if art.ok else EXIT_VIOLATION


def _finish(art: RunArtifacts, cfg: RunConfig, args, command: str, digest=None) -> int:
    if args.out:
        write_outputs(art, cfg, args.out, command, digest)
    return _report(art)


def cmd_detect(args) -> int:
    cfg = _base_config(args)
    if args.input:
        cfg = dataclasses.replace(cfg, input=dataclasses.replace(cfg.input, path=args.input, synthetic=None))
    if args.fs is not None:
        cfg = dataclasses.replace(cfg, input=dataclasses.replace(cfg.input, fs_hz=args.fs))
    if args.synthetic:
        from .config import SyntheticInput
        syn = cfg.input.synthetic or SyntheticInput()
        syn = dataclasses.replace(syn, profile=load_profile(args.synthetic))
        cfg = dataclasses.replace(cfg, input=dataclasses.replace(cfg.input, path=None, synthetic=syn))
    if cfg.input.path is None and cfg.input.synthetic is None:
        raise ConfigError("detect needs --input, --synthetic, or an input section in the config")
    ecg = None
    digest = None
    if cfg.input.path is not None:
        ecg = read_ecg_csv(cfg.input.path, cfg.input.fs_hz)
        digest = ecg_digest(ecg)
    art = run_detection(cfg, ecg)
    return _finish(art, cfg, args, "detect", digest)


def _read_events(path, n_states: int):
    """Spike CSV ``time_s,channel`` (or ``time_s,population``) -> trains per channel."""
    trains = [[] for _ in range(n_states)]
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or header[0].strip() != "time_s":
            raise EcgParseError(path, 1, "expected header 'time_s,channel'")
        for lineno, row in enumerate(rows, 2):
            if not row:
                continue
            try:
                t = float(row[0])
                ch = row[1].strip()
                ch = int(ch[5:]) if ch.startswith("state") else int(ch)
            except (ValueError, IndexError):
                raise EcgParseError(path, lineno, f"bad event row {row!r}") from None
            if not 0 <= ch < n_states:
                raise EcgParseError(path, lineno, f"channel {ch} outside 0..{n_states - 1}")
            trains[ch].append(t)
    return trains


def cmd_simulate(args) -> int:
    """Spikes in, spikes out: drive the state populations from an event file."""
    from .pipeline import _analyse, _sim_config, _stage
    from .network import sample_connectivity, state_id
    from .engine import simulate

    cfg = _base_config(args)
    if args.wta_only:
        cfg = dataclasses.replace(cfg, network=dataclasses.replace(cfg.network, gating=False))
    if not args.input:
        raise ConfigError("simulate needs --input <events.csv>")
    trains = _read_events(args.input, cfg.network.n_states)
    last = max((max(t) for t in trains if t), default=0.0)
    duration = args.duration or cfg.engine.duration or last + 1.0
    spec = _stage("network", cfg.network.build, cfg.frontend.encoder_lif)
    matrix = _stage("network", sample_connectivity, spec)
    drive = ExternalDrive()
    for ch, t in enumerate(trains):
        drive.add_spikes(sorted(t), state_id(ch), weight=cfg.stimulus.weight, kind=SynapseKind.FAST_EXC)
    rec = _stage("engine", simulate, spec, matrix, drive, _sim_config(cfg, duration), cfg.network.tau_by_kind())
    art = _stage("analysis", _analyse, cfg, spec, matrix, rec)
    return _finish(art, cfg, args, "simulate", file_digest(args.input))


def cmd_protocol(args) -> int:
    cfg = _base_config(args)
    if args.program:
        import json
        with open(args.program) as fh:
            program = StimulusProgram.from_dict(json.load(fh))
        if args.wta_only:
            cfg = dataclasses.replace(cfg, network=dataclasses.replace(cfg.network, gating=False))
        art = run_program(cfg, program)
    else:
        art = run_protocol(cfg, wta_only=args.wta_only)
    return _finish(art, cfg, args, "protocol")


def cmd_design_filters(args) -> int:
    cfg = _base_config(args)
    fe = cfg.frontend.build()
    if args.order is not None:
        fe = dataclasses.replace(fe, order=args.order)
    filters = fe.filters(args.fs)
    out = Path(args.out) if args.out else None
    rows = []
    for band, f in zip(fe.bands, filters):
        for i, (b0, b1, b2, _, a1, a2) in enumerate(f.sos):
            rows.append([band.index, i] + [repr(float(v)) for v in (b0, b1, b2, a1, a2)])
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["band", "section", "b0", "b1", "b2", "a1", "a2"])
        w.writerows(rows)
    finally:
        if out:
            fh.close()
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.synthetic:
        profile = load_profile(args.synthetic)
    elif args.ramp:
        start, end, dur = args.ramp
        profile = HRProfile.ramp(start, end, dur, args.hold)
    else:
        profile = HRProfile.constant(args.bpm, args.duration)
    x = synthetic_ecg(profile, args.fs, seed=args.seed, width=args.width, snr_db=args.snr_db)
    if not args.out:
        raise ConfigError("synth needs --out <file.csv>")
    write_ecg_csv(args.out, x, metadata={"source": "synthetic"})
    print(f"wrote {len(x)} samples at {x.fs:g} Hz to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="monotonic-nsm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help="output directory"):
        sp.add_argument("--config", help="YAML run configuration")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--seed", type=int, help="network and stimulus seed")
        sp.add_argument("--dt", type=float, help="integration step (s)")

    d = sub.add_parser("detect", help="ECG -> frontend -> network -> decoded states")
    common(d)
    d.add_argument("--input", help="ECG CSV")
    d.add_argument("--fs", type=float, help="sample rate when the CSV has no fs_hz header")
    d.add_argument("--synthetic", metavar="PROFILE", help="HR profile file for a synthetic ECG")
    d.set_defaults(func=cmd_detect)

    s = sub.add_parser("simulate", help="state-channel spike events in, raster out")
    common(s)
    s.add_argument("--input", help="event CSV with header time_s,channel")
    s.add_argument("--duration", type=float)
    s.add_argument("--wta-only", action="store_true", help="disable the gating populations")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("protocol", help="drive every ordered pair of channels")
    common(r)
    r.add_argument("--wta-only", action="store_true", help="disable the gating populations")
    r.add_argument("--program", help="JSON stimulus program instead of the all-pairs protocol")
    r.set_defaults(func=cmd_protocol)

    f = sub.add_parser("design-filters", help="write the filterbank sections as CSV")
    common(f, "CSV path (stdout if omitted)")
    f.add_argument("--fs", type=float, default=256.0)
    f.add_argument("--order", type=int)
    f.set_defaults(func=cmd_design_filters)

    y = sub.add_parser("synth", help="write a synthetic ECG CSV")
    y.add_argument("--out", help="CSV path")
    y.add_argument("--synthetic", metavar="PROFILE", help="HR profile file")
    y.add_argument("--bpm", type=float, default=60.0)
    y.add_argument("--duration", type=float, default=120.0)
    y.add_argument("--ramp", type=float, nargs=3, metavar=("START", "END", "SECONDS"))
    y.add_argument("--hold", type=float, default=0.0)
    y.add_argument("--fs", type=float, default=256.0)
    y.add_argument("--width", type=float, default=0.01)
    y.add_argument("--snr-db", type=float)
    y.add_argument("--seed", type=int, default=0)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        code = exit_code_for(exc)
        print(f"error: {exc}", file=sys.stderr)
        out = getattr(args, "out", None)
        if out and args.command in ("detect", "simulate", "protocol"):
            try:
                Path(out).mkdir(parents=True, exist_ok=True)
                write_manifest(Path(out), None, args.command, "failed", error=str(exc))
            except OSError:
                pass
        return code


if __name__ == "__main__":
    sys.exit(main())
