import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monotonic_nsm.stimuli import (HRProfile, InvalidProfileError, StimulusProgram, all_transitions_protocol,
                                   beat_times, poisson_train, program_trains, synthetic_ecg)


def test_zero_rate():
    assert len(poisson_train(0.0, 10.0, seed=1)) == 0


def test_poisson_count_statistics():
    lo, hi = 500 - 3 * np.sqrt(500), 500 + 3 * np.sqrt(500)
    inside = sum(lo <= len(poisson_train(50.0, 10.0, seed=s)) <= hi for s in range(1000))
    assert inside >= 990


def test_poisson_isi_cv():
    t = poisson_train(50.0, 100.0, seed=7)
    isi = np.diff(t)
    assert 0.9 <= isi.std() / isi.mean() <= 1.1


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 200), st.floats(0.01, 20), st.integers(0, 2 ** 32 - 1), st.floats(0, 5))
def test_poisson_bounds_sorted_deterministic(rate, duration, seed, start):
    t = poisson_train(rate, duration, seed, start)
    assert np.all(np.diff(t) > 0)
    assert np.all((t >= start) & (t < start + duration))
    assert np.array_equal(t, poisson_train(rate, duration, seed, start))


def test_protocol_four_states():
    prog = all_transitions_protocol(4)
    assert len(prog.segments) == 24
    pairs = list(zip(prog.channels[::2], prog.channels[1::2]))
    assert len(set(pairs)) == 12 and all(a != b for a, b in pairs)
    firsts = [a for a, _ in pairs]
    assert all(firsts.count(c) == 3 for c in range(4))


def test_protocol_two_states():
    assert all_transitions_protocol(2).channels == [0, 1, 1, 0]


def test_protocol_timing():
    prog = all_transitions_protocol(3, rate=40, segment=2.0, gap=1.0, lead=0.5)
    starts = [s.start for s in prog.segments]
    assert starts[0] == 0.5
    assert np.allclose(np.diff(starts), 3.0)
    assert prog.duration == pytest.approx(0.5 + 12 * 3.0)
    assert StimulusProgram.from_dict(prog.to_dict()) == prog


def test_program_trains_confined_to_segments():
    prog = all_transitions_protocol(3, rate=50, segment=1.0, gap=1.0)
    trains = program_trains(prog, seed=3)
    for ch, t in enumerate(trains):
        segs = [s for s in prog.segments if s.channel == ch]
        ok = np.zeros(len(t), dtype=bool)
        for s in segs:
            ok |= (t >= s.start) & (t < s.end)
        assert ok.all()
    again = program_trains(prog, seed=3)
    assert all(np.array_equal(a, b) for a, b in zip(trains, again))


def test_constant_60bpm_ecg():
    x = synthetic_ecg(HRProfile.constant(60, 60))
    beats = beat_times(HRProfile.constant(60, 60))
    assert abs(len(beats) - 60) <= 1
    assert np.allclose(np.diff(beats), 1.0, atol=0.005)
    # peaks in the sampled trace sit one second apart as well
    peaks = np.nonzero((x.samples[1:-1] > x.samples[:-2]) & (x.samples[1:-1] >= x.samples[2:]) &
                       (x.samples[1:-1] > 0.5))[0] + 1
    assert np.allclose(np.diff(peaks) / x.fs, 1.0, atol=0.005)


def test_ramp_beat_count_integral():
    prof = HRProfile.ramp(60, 150, 600)
    expected = (60 + 150) / 2 / 60 * 600
    assert abs(len(beat_times(prof)) - expected) <= 2


def test_noise_free_is_deterministic_with_zero_baseline():
    prof = HRProfile.constant(75, 20)
    a, b = synthetic_ecg(prof, seed=1), synthetic_ecg(prof, seed=2)
    assert np.array_equal(a.samples, b.samples)
    assert a.samples.min() >= 0 and a.samples.max() == pytest.approx(1.0, abs=0.05)
    assert np.median(a.samples) < 1e-6


def test_noise_is_seeded():
    prof = HRProfile.constant(75, 20)
    a = synthetic_ecg(prof, seed=1, snr_db=10)
    assert np.array_equal(a.samples, synthetic_ecg(prof, seed=1, snr_db=10).samples)
    assert not np.array_equal(a.samples, synthetic_ecg(prof, seed=2, snr_db=10).samples)


@pytest.mark.parametrize("bpm", [65, 90, 120, 145])
def test_fundamental_frequency(bpm):
    x = synthetic_ecg(HRProfile.constant(bpm, 60))
    n = 2 ** 20
    spec = np.abs(np.fft.rfft(x.samples - x.samples.mean(), n))
    freqs = np.fft.rfftfreq(n, 1 / x.fs)
    band = (freqs > 0.5) & (freqs < 3.0)
    peak = freqs[band][np.argmax(spec[band])]
    assert abs(peak * 60 - bpm) <= 2


def test_profile_validation():
    with pytest.raises(InvalidProfileError):
        HRProfile(((0, 60), (0, 70)))
    with pytest.raises(InvalidProfileError):
        HRProfile(((0, 20), (1, 70)))
    with pytest.raises(InvalidProfileError):
        HRProfile(())
    with pytest.raises(ValueError):
        synthetic_ecg(HRProfile.constant(60, 10), fs=100)
    p = HRProfile.ramp(65, 95, 400, 100)
    assert p.duration == 500 and p.bpm(450) == 95 and p.bpm(200) == pytest.approx(80)
    assert HRProfile.from_dict(p.to_dict()) == p
