"""ECG CSV ingestion and the plot-data / result writers."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .analysis import StateTimeline, Violation, firing_rate
from .dsp import SampledSignal
from .engine import SpikeRecord


class EcgParseError(ValueError):
    """Malformed ECG file; ``line`` is 1-based."""

    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path, self.line = str(path), line


class MissingSampleRateError(ValueError):
    pass


@dataclass(frozen=True)
class EcgRecording:
    fs: float
    samples: np.ndarray  # mV
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if not self.fs > 0:
            raise ValueError("sample rate must be > 0")
        if not np.all(np.isfinite(samples)):
            raise ValueError("recording contains non-finite samples")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.fs

    def signal(self) -> SampledSignal:
        return SampledSignal(self.fs, self.samples, "mV")


def _parse_float(tok: str, path, line: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise EcgParseError(path, line, f"not a number: {tok!r}") from None
    if not math.isfinite(v):
        raise EcgParseError(path, line, f"non-finite sample {tok!r}")
    return v


def read_ecg_csv(path, fs_hz: Optional[float] = None) -> EcgRecording:
    """Read an ECG CSV.

    Accepted layouts: an ``fs_hz=<rate>`` first line followed by one sample
    per row, or a two-column ``t,mv`` table (the rate then comes from the
    time column unless ``fs_hz`` is given). Extra ``key=value`` lines before
    the data are kept as metadata. ``fs_hz`` overrides the header.
    """
    header_fs = None
    meta: Dict[str, str] = {}
    times: List[float] = []
    values: List[float] = []
    two_col = None
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" in line and not values:
                key, _, val = line.partition("=")
                key = key.strip()
                if key == "fs_hz":
                    header_fs = _parse_float(val.strip(), path, lineno)
                    if header_fs <= 0:
                        raise EcgParseError(path, lineno, "fs_hz must be > 0")
                else:
                    meta[key] = val.strip()
                continue
            cols = [c.strip() for c in line.split(",")]
            if not values and two_col is None and not _numeric(cols[0]):
                # column header such as "t,mv" or "mv"
                two_col = len(cols) == 2
                continue
            if two_col is None:
                two_col = len(cols) == 2
            if len(cols) != (2 if two_col else 1):
                raise EcgParseError(path, lineno, f"expected {2 if two_col else 1} column(s), got {len(cols)}")
            if two_col:
                times.append(_parse_float(cols[0], path, lineno))
            values.append(_parse_float(cols[-1], path, lineno))
    fs = fs_hz if fs_hz is not None else header_fs
    if fs is None and two_col and len(times) >= 2:
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise EcgParseError(path, 0, "time column must be strictly increasing")
        fs = 1.0 / float(np.median(steps))
    if fs is None:
        raise MissingSampleRateError(f"{path}: no sample rate (add an fs_hz= header or pass --fs)")
    return EcgRecording(float(fs), np.asarray(values), meta)


def _numeric(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def write_ecg_csv(path, x, fs: Optional[float] = None, with_time: bool = False,
                  metadata: Optional[Dict[str, str]] = None) -> None:
    """Write a recording or signal in the format ``read_ecg_csv`` reads."""
    if metadata is None and isinstance(x, EcgRecording):
        metadata = x.metadata
    if isinstance(x, (EcgRecording, SampledSignal)):
        fs, samples = x.fs, x.samples
    else:
        samples = np.asarray(x, dtype=float)
    if fs is None:
        raise MissingSampleRateError("write_ecg_csv needs a sample rate")
    with open(path, "w", newline="") as fh:
        fh.write(f"fs_hz={fs!r}\n")
        for key, val in sorted((metadata or {}).items()):
            fh.write(f"{key}={val}\n")
        if with_time:
            fh.write("t,mv\n")
            for i, v in enumerate(samples):
                fh.write(f"{i / fs!r},{float(v)!r}\n")
        else:
            fh.write("mv\n")
            for v in samples:
                fh.write(f"{float(v)!r}\n")


def convert_two_column(src, dst, fs_hz: Optional[float] = None, delimiter: Optional[str] = None,
                       time_scale: float = 1.0, value_scale: float = 1.0) -> EcgRecording:
    """Converter stub for generic two-column exports (time, value).

    Handles whitespace, tab, semicolon or comma separated files with an
    optional text header; ``time_scale`` converts the time column to seconds
    (e.g. 1e-3 for ms) and ``value_scale`` the values to mV.
    """
    t, v = [], []
    with open(src) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            cols = line.split(delimiter) if delimiter else line.replace(";", " ").replace(",", " ").split()
            if len(cols) < 2:
                raise EcgParseError(src, lineno, "expected two columns")
            if not t and not _numeric(cols[0]):
                continue
            t.append(_parse_float(cols[0], src, lineno) * time_scale)
            v.append(_parse_float(cols[1], src, lineno) * value_scale)
    if fs_hz is None:
        if len(t) < 2:
            raise MissingSampleRateError(f"{src}: cannot infer sample rate")
        fs_hz = 1.0 / float(np.median(np.diff(t)))
    rec = EcgRecording(fs_hz, np.asarray(v))
    write_ecg_csv(dst, rec)
    return rec


def write_rates_csv(rec: SpikeRecord, path, window: float = 0.1) -> None:
    pops = list(rec.populations)
    rates = [firing_rate(rec, p, window) for p in pops]
    n = len(rates[0]) if rates else 0
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t_start", "t_end"] + pops)
        for i in range(n):
            t0 = i * window
            t1 = min(t0 + window, rec.duration)
            out.writerow([f"{t0:.6f}", f"{t1:.6f}"] + [f"{r[i]:.6f}" for r in rates])


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def plot_bundle(rec: SpikeRecord, timeline: StateTimeline, window: float = 0.1,
                offsets: Optional[Dict[str, int]] = None) -> dict:
    """Column-oriented data for gnuplot/vega: raster, rates and states."""
    offsets = offsets or {}
    raster_y = [int(offsets.get(rec.populations[p], 0) + n) for p, n in zip(rec.population, rec.neuron)]
    return {
        "raster": {
            "time_s": [round(float(t), 6) for t in rec.times],
            "population": [rec.populations[p] for p in rec.population],
            "neuron": [int(n) for n in rec.neuron],
            "row": raster_y,
        },
        "rates": {
            "window_s": window,
            "t_start": [round(i * window, 6) for i in range(len(timeline))],
            "hz": {p: [round(float(r), 6) for r in firing_rate(rec, p, window)] for p in rec.populations},
        },
        "timeline": {
            "t_start": [round(float(a), 6) for a in timeline.starts],
            "t_end": [round(float(b), 6) for b in timeline.ends],
            "state": [None if s is None else s for _, _, s in timeline.rows()],
        },
    }


def emit_plot_data(rec: SpikeRecord, timeline: StateTimeline, out_dir, window: float = 0.1,
                   offsets: Optional[Dict[str, int]] = None) -> List[Path]:
    """Write raster.csv, rates.csv, timeline.csv and plot.json; return the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "raster.csv", out / "rates.csv", out / "timeline.csv", out / "plot.json"]
    rec.to_csv(paths[0])
    write_rates_csv(rec, paths[1], window)
    timeline.to_csv(paths[2])
    write_json(paths[3], plot_bundle(rec, timeline, window, offsets))
    return paths


def violations_report(violations: Sequence[Violation]) -> dict:
    return {"count": len(violations), "violations": [v.to_dict() for v in violations]}
