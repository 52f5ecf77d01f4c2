import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvnmr import spectral as spc
from nvnmr.signal import ProtocolParams, weak_coupling_probability
from nvnmr.trace import ProbabilityTrace


def trace_of(values, tau=1.0):
    return ProbabilityTrace.from_shots(values, tau)


def on_bin(k, n, tau=1.0):
    return 2 * np.pi * k / (n * tau)


def test_trace_validation():
    with pytest.raises(ValueError):
        ProbabilityTrace([1, 2], [0.5, 1.5], 1.0)
    with pytest.raises(ValueError):
        ProbabilityTrace([1, 2, 3], [0.5, 0.5], 1.0)
    with pytest.raises(ValueError, match="at least"):
        spc.compute_spectrum(trace_of(np.full(8, 0.5)))
    with pytest.raises(ValueError, match="uniformly"):
        spc.compute_spectrum(ProbabilityTrace(np.r_[np.arange(20), 30.0], np.full(21, 0.5), 1.0))


def test_constant_trace_detrended_is_zero():
    spec = spc.compute_spectrum(trace_of(np.full(256, 0.37)))
    assert spec.mags.max() < 1e-12
    raw = spc.compute_spectrum(trace_of(np.full(256, 0.37)), detrend=False)
    assert raw.mags[0] == pytest.approx(0.37)


def test_frequency_axis():
    spec = spc.compute_spectrum(trace_of(np.full(100, 0.5), tau=0.1))
    assert spec.freqs[0] == 0
    assert spec.freqs[-1] == pytest.approx(np.pi / 0.1)
    assert spec.bin_width == pytest.approx(2 * np.pi / 10)


def test_pure_sinusoid_peak():
    n = 1024
    w = on_bin(37, n)
    t = np.arange(1, n + 1)
    spec = spc.compute_spectrum(trace_of(np.cos(0.5 * w * t) ** 2))
    peaks = spc.find_peaks(spec)
    assert peaks[0].index == 37
    assert peaks[0].magnitude == pytest.approx(0.5)
    assert spc.peak_frequency(spec, 37) == pytest.approx(w)
    report = spc.detect_harmonics(spec, w, 4)
    assert report.harmonic(1).present
    for k in (2, 3, 4):
        assert report.harmonic(k).magnitude < 0.01 * report.harmonic(1).magnitude
    assert report.peaks == sorted(report.peaks, key=lambda pk: pk.magnitude, reverse=True)


def test_harmonics_validation():
    spec = spc.compute_spectrum(trace_of(np.full(128, 0.5)))
    with pytest.raises(ValueError):
        spc.detect_harmonics(spec, 0.0)
    with pytest.raises(ValueError, match="resolvable"):
        spc.detect_harmonics(spec, 2 * spec.bin_width)


@pytest.mark.parametrize("window", ["boxcar", "hann"])
def test_off_bin_frequency_error(window):
    n = 2048
    rng = np.random.default_rng(1)
    t = np.arange(1, n + 1)
    for _ in range(20):
        k = rng.uniform(20, 400)
        w = on_bin(k, n)
        x = 0.5 + 0.4 * np.cos(w * t + rng.uniform(0, 2 * np.pi))
        spec = spc.compute_spectrum(trace_of(x), window=window)
        i = spc.find_peaks(spec, 1)[0].index
        assert abs(spc.peak_frequency(spec, i, interpolate=False) - w) <= spec.bin_width
        assert abs(spc.peak_frequency(spec, i) - w) <= 0.1 * spec.bin_width


def test_window_changes_magnitude_only_by_gain():
    n = 1024
    t = np.arange(1, n + 1)
    x = 0.5 + 0.3 * np.cos(on_bin(100, n) * t)
    box = spc.compute_spectrum(trace_of(x))
    hann = spc.compute_spectrum(trace_of(x), window="hann")
    assert box.mags[100] == pytest.approx(0.3)
    assert hann.mags[100] == pytest.approx(0.3)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(16, 600), seed=st.integers(0, 2**31))
def test_parseval(n, seed):
    x = np.random.default_rng(seed).uniform(0, 1, n)
    spec = spc.compute_spectrum(trace_of(x))
    d = x - x.mean()
    assert spc.spectral_power(spec) == pytest.approx(np.sum(d**2), rel=1e-9)
    raw = spc.compute_spectrum(trace_of(x), detrend=False)
    assert spc.spectral_power(raw) == pytest.approx(np.sum(x**2), rel=1e-9)


def test_beat_amplitude_normalisation():
    n = 2000
    t = np.arange(1, n + 1)
    w = on_bin(50, n)
    traces = [trace_of(0.5 + 0.2 * np.cos(w * t)) for _ in range(3)]
    assert spc.beat_amplitude(traces, w) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        spc.average_traces([traces[0], trace_of(np.full(n + 1, 0.5))])
    with pytest.raises(ValueError):
        spc.average_traces([])


def test_beat_amplitude_of_weak_trace():
    # cosine coefficient of the beat term in the weak-coupling trace is (g tau)^2
    g, tau = 1e-2, 5e-3
    n = 20_000
    w = on_bin(40, n, tau)
    p = ProtocolParams(g, tau, 100.0, 100.0 - w, n_shots=n)
    tr = ProbabilityTrace.from_shots(weak_coupling_probability(p.shot_times(), p), tau)
    assert spc.beat_amplitude(tr, w) == pytest.approx((g * tau) ** 2, rel=1e-9)


def test_half_beat_reported():
    n = 4096
    t = np.arange(1, n + 1)
    w = on_bin(100, n)
    x = 0.5 + 0.1 * np.cos(w * t) + 0.05 * np.cos(0.5 * w * t)
    report = spc.detect_harmonics(spc.compute_spectrum(trace_of(x)), w, 2)
    assert report.harmonic(0.5).magnitude == pytest.approx(0.05)
    assert report.harmonic(0.5).present
    d = report.to_dict()
    assert d["expected_beat"] == w and len(d["harmonics"]) == 3
