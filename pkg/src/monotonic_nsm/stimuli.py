"""Stimulus generators: Poisson trains, transition protocols, synthetic ECG."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dsp import SampledSignal


class InvalidProfileError(ValueError):
    pass


BPM_MIN, BPM_MAX = 30.0, 220.0


@dataclass(frozen=True)
class Segment:
    channel: int
    rate: float
    start: float
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class StimulusProgram:
    """Timed stimulation segments on input channels (gaps are implicit)."""

    segments: Tuple[Segment, ...]
    n_channels: int
    duration: float

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        for seg in self.segments:
            if seg.duration <= 0:
                raise ValueError("segment durations must be > 0")
            if not 0 <= seg.channel < self.n_channels:
                raise ValueError(f"segment channel {seg.channel} outside 0..{self.n_channels - 1}")
            if seg.rate < 0:
                raise ValueError("segment rates must be >= 0")

    @property
    def channels(self) -> List[int]:
        return [seg.channel for seg in self.segments]

    @classmethod
    def sequence(cls, steps: Sequence[Tuple[int, float, float]], n_channels: int, gap: float = 0.0,
                 lead: float = 0.0) -> "StimulusProgram":
        """Build a program from ``(channel, rate, duration)`` steps separated by ``gap``."""
        t, segs = lead, []
        for ch, rate, dur in steps:
            segs.append(Segment(int(ch), float(rate), t, float(dur)))
            t += dur + gap
        return cls(tuple(segs), n_channels, t)

    def to_dict(self) -> dict:
        return {
            "n_channels": self.n_channels,
            "duration": self.duration,
            "segments": [
                {"channel": s.channel, "rate": s.rate, "start": s.start, "duration": s.duration} for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StimulusProgram":
        segs = tuple(Segment(int(s["channel"]), float(s["rate"]), float(s["start"]), float(s["duration"]))
                     for s in d["segments"])
        return cls(segs, int(d["n_channels"]), float(d["duration"]))


def poisson_train(rate: float, duration: float, seed=None, start: float = 0.0) -> np.ndarray:
    """Homogeneous Poisson spike times in ``[start, start + duration)``."""
    if rate < 0:
        raise ValueError("rate must be >= 0")
    if rate == 0 or duration <= 0:
        return np.zeros(0)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    # draw a safe surplus of intervals, extend in the rare case it falls short
    n = int(rate * duration + 6 * np.sqrt(rate * duration) + 10)
    t = np.cumsum(rng.exponential(1.0 / rate, n))
    while t[-1] < duration:
        t = np.concatenate([t, t[-1] + np.cumsum(rng.exponential(1.0 / rate, n))])
    return start + t[t < duration]


def all_transitions_protocol(n_states: int = 4, rate: float = 50.0, segment: float = 3.0, gap: float = 2.0,
                             lead: float = 0.0) -> StimulusProgram:
    """Visit every ordered channel pair ``(i, j)``, ``i != j``, in lexicographic order."""
    if n_states < 2:
        raise ValueError("protocol needs at least 2 channels")
    steps = []
    for i, j in itertools.permutations(range(n_states), 2):
        steps += [(i, rate, segment), (j, rate, segment)]
    return StimulusProgram.sequence(steps, n_states, gap=gap, lead=lead)


def program_trains(program: StimulusProgram, seed=None) -> List[np.ndarray]:
    """Realise the program as one Poisson train per channel."""
    rng = np.random.default_rng(seed)
    trains: List[List[np.ndarray]] = [[] for _ in range(program.n_channels)]
    for seg in program.segments:
        trains[seg.channel].append(poisson_train(seg.rate, seg.duration, rng, start=seg.start))
    return [np.sort(np.concatenate(t)) if t else np.zeros(0) for t in trains]


@dataclass(frozen=True)
class HRProfile:
    """Piecewise-linear heart rate: ``knots`` of ``(time_s, bpm)``."""

    knots: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        knots = tuple((float(t), float(b)) for t, b in self.knots)
        object.__setattr__(self, "knots", knots)
        if not knots:
            raise InvalidProfileError("profile needs at least one knot")
        times = [t for t, _ in knots]
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise InvalidProfileError("profile times must be strictly increasing")
        for _, b in knots:
            if not BPM_MIN <= b <= BPM_MAX:
                raise InvalidProfileError(f"bpm {b} outside [{BPM_MIN}, {BPM_MAX}]")

    @classmethod
    def constant(cls, bpm: float, duration: float) -> "HRProfile":
        return cls(((0.0, bpm), (duration, bpm)))

    @classmethod
    def ramp(cls, start_bpm: float, end_bpm: float, ramp_duration: float, hold: float = 0.0) -> "HRProfile":
        knots = [(0.0, start_bpm), (ramp_duration, end_bpm)]
        if hold > 0:
            knots.append((ramp_duration + hold, end_bpm))
        return cls(tuple(knots))

    @property
    def duration(self) -> float:
        return self.knots[-1][0]

    def bpm(self, t) -> np.ndarray:
        times, values = zip(*self.knots)
        return np.interp(t, times, values)

    def to_dict(self) -> dict:
        return {"knots": [list(k) for k in self.knots]}

    @classmethod
    def from_dict(cls, d: dict) -> "HRProfile":
        return cls(tuple(tuple(k) for k in d["knots"]))


def beat_times(profile: HRProfile, duration: Optional[float] = None) -> np.ndarray:
    """Pulse times with each interval equal to 60/bpm at the pulse that opens it."""
    end = profile.duration if duration is None else duration
    out = []
    t = 0.0
    while t < end:
        out.append(t)
        t += 60.0 / float(profile.bpm(t))
    return np.asarray(out)


def synthetic_ecg(profile: HRProfile, fs: float = 256.0, seed=None, width: float = 0.01,
                  snr_db: Optional[float] = None, duration: Optional[float] = None) -> SampledSignal:
    """Train of unit Gaussian QRS surrogates following ``profile``.

    ``width`` is the Gaussian standard deviation (0.01 s gives ~24 ms FWHM).
    With ``snr_db`` set, white noise is added at that pulse-power ratio.
    """
    if fs < 128:
        raise ValueError("synthetic ECG needs fs >= 128 Hz")
    end = profile.duration if duration is None else duration
    n = int(round(end * fs))
    t = np.arange(n) / fs
    x = np.zeros(n)
    half = int(np.ceil(6 * width * fs))
    for tb in beat_times(profile, end):
        c = int(round(tb * fs))
        lo, hi = max(0, c - half), min(n, c + half + 1)
        x[lo:hi] += np.exp(-0.5 * ((t[lo:hi] - tb) / width) ** 2)
    if snr_db is not None:
        rng = np.random.default_rng(seed)
        power = np.mean(x ** 2) if n else 0.0
        x = x + rng.normal(0.0, np.sqrt(power / 10 ** (snr_db / 10)), n)
    return SampledSignal(fs, x, "a.u.")
