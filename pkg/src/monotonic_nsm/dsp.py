"""ECG-to-spike frontend: bpm-band Butterworth filterbank, rectifier, LIF encoders."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal as sps

from .core_dynamics import LIFParams, NeuronState, lif_step


class InvalidBandError(ValueError):
    pass


@dataclass(frozen=True)
class SampledSignal:
    fs: float
    samples: np.ndarray
    units: str = "a.u."

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if not self.fs > 0:
            raise ValueError("fs must be > 0")
        if not np.all(np.isfinite(samples)):
            raise ValueError("signal contains non-finite samples")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.fs

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.fs


@dataclass(frozen=True)
class BandSpec:
    index: int
    low_bpm: float
    high_bpm: float

    def __post_init__(self):
        if not 0 < self.low_bpm < self.high_bpm:
            raise InvalidBandError(f"band {self.index}: need 0 < low < high")

    @property
    def low_hz(self) -> float:
        return bpm_to_hz(self.low_bpm)

    @property
    def high_hz(self) -> float:
        return bpm_to_hz(self.high_bpm)

    @property
    def center_bpm(self) -> float:
        return math.sqrt(self.low_bpm * self.high_bpm)

    def contains(self, bpm: float) -> bool:
        return self.low_bpm <= bpm < self.high_bpm


DEFAULT_BANDS: Tuple[BandSpec, ...] = (
    BandSpec(0, 60.0, 82.0),
    BandSpec(1, 82.0, 105.0),
    BandSpec(2, 105.0, 128.0),
    BandSpec(3, 128.0, 150.0),
)


def check_bands(bands: Sequence[BandSpec]) -> None:
    for prev, nxt in zip(bands, bands[1:]):
        if nxt.low_bpm < prev.high_bpm:
            raise InvalidBandError(f"bands {prev.index} and {nxt.index} overlap")


def bpm_to_hz(bpm: float) -> float:
    if not bpm > 0:
        raise ValueError("bpm must be > 0")
    return bpm / 60.0


@dataclass
class BiquadCoeffs:
    """Cascade of second-order sections, rows ``[b0, b1, b2, 1, a1, a2]``."""

    sos: np.ndarray
    state: np.ndarray = field(default=None)

    def __post_init__(self):
        self.sos = np.atleast_2d(np.asarray(self.sos, dtype=float))
        if self.sos.shape[1] != 6:
            raise ValueError("sections must have 6 coefficients")
        if self.state is None:
            self.reset()

    def reset(self) -> None:
        self.state = np.zeros((len(self.sos), 2))

    @property
    def order(self) -> int:
        return 2 * len(self.sos)

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots(row[3:]) for row in self.sos])

    def is_stable(self, margin: float = 1e-6) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1 - margin))

    def response(self, freqs_hz, fs: float) -> np.ndarray:
        """Complex frequency response evaluated directly from the sections."""
        z = np.exp(1j * 2 * np.pi * np.asarray(freqs_hz, dtype=float) / fs)
        h = np.ones_like(z)
        for b0, b1, b2, a0, a1, a2 in self.sos:
            h *= (b0 + b1 / z + b2 / z ** 2) / (a0 + a1 / z + a2 / z ** 2)
        return h

    def to_csv(self, path, band: Optional[int] = None) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["band", "section", "b0", "b1", "b2", "a1", "a2"])
            for i, (b0, b1, b2, _, a1, a2) in enumerate(self.sos):
                out.writerow(["" if band is None else band, i] + [repr(float(v)) for v in (b0, b1, b2, a1, a2)])


def design_butterworth_bandpass(band: BandSpec, fs: float, order: int = 4) -> BiquadCoeffs:
    """Digital Butterworth bandpass of total ``order`` (4 -> two sections).

    Bilinear transform with pre-warped edges, so -3 dB lands on both edges.
    """
    lo, hi = band.low_hz, band.high_hz
    if hi >= fs / 2:
        raise InvalidBandError(f"band {band.index} edge {hi:.3f} Hz at or above Nyquist ({fs / 2} Hz)")
    if order % 2 or order < 2:
        raise InvalidBandError("bandpass order must be a positive even number")
    sos = sps.butter(order // 2, [lo, hi], btype="bandpass", output="sos", fs=fs)
    return BiquadCoeffs(sos)


def filter_signal(x: SampledSignal, f: BiquadCoeffs, stateful: bool = False) -> SampledSignal:
    """Causal cascade filtering. With ``stateful`` the delay line carries over."""
    if stateful:
        y, zf = sps.sosfilt(f.sos, x.samples, zi=f.state)
        f.state = zf
    else:
        y = sps.sosfilt(f.sos, x.samples)
    return SampledSignal(x.fs, y, x.units)


def full_wave_rectify(x: SampledSignal) -> SampledSignal:
    return SampledSignal(x.fs, np.abs(x.samples), x.units)


@dataclass(frozen=True)
class EncoderParams:
    gain: float  # amperes per input unit
    lif: LIFParams = LIFParams()

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError("encoder gain must be > 0")


def encode_to_spikes(x: SampledSignal, e: EncoderParams, dt: float = 1e-4) -> np.ndarray:
    """Drive an LIF neuron with ``gain * x`` (sample-and-hold); return spike times."""
    from .engine import ExternalDrive, SimulationConfig, simulate
    from .network import ConnectivityMatrix, Model, NetworkSpec, PopulationSpec, Role

    if len(x) == 0:
        return np.zeros(0)
    spec = NetworkSpec((PopulationSpec("encoder", 1, Model.LIF, e.lif, Role.INPUT_ENCODER, 0),), (), 0)
    empty = ConnectivityMatrix(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int8),
                               np.zeros(0), np.zeros(0, np.int32), 1)
    drive = ExternalDrive().add_current("encoder", 0, e.gain * x.samples, x.fs)
    rec = simulate(spec, empty, drive, SimulationConfig(dt=dt, duration=x.duration))
    return rec.times


def encode_reference(x: SampledSignal, e: EncoderParams, dt: float = 1e-4) -> np.ndarray:
    """Scalar-loop encoder used to cross-check the compiled path."""
    state = NeuronState.at_rest(e.lif)
    n_steps = int(math.ceil(x.duration / dt - 1e-9))
    out = []
    for s in range(n_steps):
        k = min(int(math.floor(s * dt * x.fs + 1e-9)), len(x) - 1)
        state, spiked = lif_step(state, e.lif, e.gain * x.samples[k], dt, t=s * dt)
        if spiked:
            out.append((s + 1) * dt)
    return np.asarray(out)


def qrs_envelope(x: SampledSignal, band=(5.0, 40.0), smooth_hz: float = 5.0, normalize: bool = True) -> SampledSignal:
    """Energy pre-stage for raw ECG: QRS-band bandpass, rectify, lowpass.

    With ``normalize`` the envelope is scaled so its 99th percentile is 1.
    """
    hi = min(band[1], 0.45 * x.fs)
    bp = sps.butter(2, [band[0], hi], btype="bandpass", output="sos", fs=x.fs)
    lp = sps.butter(2, smooth_hz, btype="lowpass", output="sos", fs=x.fs)
    env = sps.sosfilt(lp, np.abs(sps.sosfilt(bp, x.samples)))
    if normalize and len(env):
        scale = np.percentile(env, 99)
        if scale > 0:
            env = env / scale
    return SampledSignal(x.fs, env, x.units)


@dataclass(frozen=True)
class Frontend:
    """Filterbank + rectifier + encoders, one channel per band."""

    bands: Tuple[BandSpec, ...] = DEFAULT_BANDS
    encoders: Tuple[EncoderParams, ...] = ()
    order: int = 4
    prestage: bool = False

    def __post_init__(self):
        object.__setattr__(self, "bands", tuple(self.bands))
        check_bands(self.bands)
        if not self.encoders:
            object.__setattr__(self, "encoders", default_encoders(self.bands))
        if len(self.encoders) != len(self.bands):
            raise ValueError("need one encoder per band")

    def filters(self, fs: float) -> List[BiquadCoeffs]:
        return [design_butterworth_bandpass(b, fs, self.order) for b in self.bands]

    def band_signals(self, x: SampledSignal) -> List[SampledSignal]:
        """Rectified filterbank outputs."""
        if self.prestage:
            env = qrs_envelope(x)
            x = SampledSignal(env.fs, PRESTAGE_SCALE * env.samples, env.units)
        return [full_wave_rectify(filter_signal(x, f)) for f in self.filters(x.fs)]

    def band_currents(self, x: SampledSignal) -> List[np.ndarray]:
        return [e.gain * y.samples for e, y in zip(self.encoders, self.band_signals(x))]

    def encode(self, x: SampledSignal, dt: float = 1e-4) -> List[np.ndarray]:
        return [encode_to_spikes(y, e, dt) for y, e in zip(self.band_signals(x), self.encoders)]


# Encoder neuron: fast membrane so the bursts follow the rectified ripple.
DEFAULT_ENCODER_LIF = LIFParams(tau_m=10e-3, R=100e6, V_rest=-70e-3, V_th=-50e-3, V_r=-70e-3, t_ref=2e-3)

# Threshold as a fraction of the in-band reference amplitude; sits between
# the weakest in-band fundamental and the strongest second harmonic.
ENCODER_THRESHOLD_FRACTION = 0.56
REFERENCE_PULSE_AREA = 0.01 * math.sqrt(2 * math.pi)
# A unit-peak envelope pulse out of the pre-stage has ~0.113 s of area; this
# brings it back to the reference pulse area so the same gains apply.
PRESTAGE_SCALE = REFERENCE_PULSE_AREA / 0.07


def reference_amplitude(band: BandSpec, pulse_area: float = REFERENCE_PULSE_AREA) -> float:
    """Fundamental amplitude of a unit-pulse train at the band centre."""
    f0 = bpm_to_hz(band.center_bpm)
    return 2.0 * f0 * pulse_area


def default_encoders(bands: Sequence[BandSpec] = DEFAULT_BANDS, lif: LIFParams = DEFAULT_ENCODER_LIF,
                     threshold_fraction: float = ENCODER_THRESHOLD_FRACTION) -> Tuple[EncoderParams, ...]:
    """Per-band gains placing the encoder rheobase at a fixed fraction of the reference amplitude."""
    rheobase = (lif.V_th - lif.V_rest) / lif.R
    return tuple(EncoderParams(rheobase / (threshold_fraction * reference_amplitude(b)), lif) for b in bands)
