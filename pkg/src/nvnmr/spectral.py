"""FFT spectra of probability traces and peak bookkeeping.

Magnitudes use the one-sided ``2/N`` amplitude convention: a component
``A cos(w t)`` that falls on a bin shows up with magnitude ``A``. The DC bin
(and the Nyquist bin for even ``N``) is scaled by ``1/N`` so that it reads
the mean directly. Frequencies are angular, ``2 pi k / (N dt)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window

from .trace import ProbabilityTrace

MIN_SAMPLES = 16
PRESENCE_QUALITY = 5.0


@dataclass
class Spectrum:
    freqs: np.ndarray
    mags: np.ndarray
    window: str = "boxcar"
    detrended: bool = True
    n_samples: int = 0
    padded: bool = False
    coeffs: np.ndarray | None = field(default=None, repr=False)

    @property
    def bin_width(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def background(self) -> float:
        """Median magnitude, excluding DC."""
        return float(np.median(self.mags[1:]))

    def quality(self, index) -> np.ndarray:
        bg = self.background()
        if bg <= 0:
            return np.full(np.shape(index), np.inf)
        return self.mags[index] / bg

    def is_local_max(self, index: int) -> bool:
        m = self.mags
        left = m[index - 1] if index > 0 else -np.inf
        right = m[index + 1] if index + 1 < m.size else -np.inf
        return bool(m[index] > left and m[index] > right)


@dataclass
class Peak:
    frequency: float
    magnitude: float
    quality: float
    index: int
    harmonic: float | None = None
    local_max: bool = True

    @property
    def present(self) -> bool:
        return self.local_max and self.quality >= PRESENCE_QUALITY

    def to_dict(self) -> dict:
        out = {"frequency": self.frequency, "magnitude": self.magnitude,
               "quality": self.quality, "local_max": self.local_max,
               "present": self.present}
        if self.harmonic is not None:
            out["harmonic"] = self.harmonic
        return out


@dataclass
class PeakReport:
    peaks: list[Peak]
    expected_beat: float | None = None
    harmonics: list[Peak] = field(default_factory=list)

    def __post_init__(self):
        self.peaks = sorted(self.peaks, key=lambda pk: pk.magnitude, reverse=True)

    def harmonic(self, k: float) -> Peak:
        for pk in self.harmonics:
            if pk.harmonic == k:
                return pk
        raise KeyError(k)

    def to_dict(self) -> dict:
        return {"expected_beat": self.expected_beat,
                "peaks": [pk.to_dict() for pk in self.peaks],
                "harmonics": [pk.to_dict() for pk in self.harmonics]}


def _window_gain(name, n):
    w = get_window(name, n, fftbins=True)
    return w, float(w.mean())


def compute_spectrum(trace: ProbabilityTrace, window: str = "boxcar",
                     detrend: bool = True) -> Spectrum:
    """One-sided magnitude spectrum.

    Non-boxcar windows are gain-corrected so an on-bin sinusoid keeps its
    amplitude; only the leakage shape changes.
    """
    n = len(trace)
    if n < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {n}")
    if not trace.is_uniform():
        raise ValueError("trace must be uniformly sampled")
    x = trace.values - trace.values.mean() if detrend else trace.values.copy()
    if window in ("boxcar", "rect", "rectangular", None):
        window = "boxcar"
        gain = 1.0
    else:
        w, gain = _window_gain(window, n)
        x = x * w
    coeffs = np.fft.rfft(x) * (2.0 / (n * gain))
    coeffs[0] /= 2.0
    if n % 2 == 0:
        coeffs[-1] /= 2.0
    freqs = 2.0 * np.pi * np.fft.rfftfreq(n, d=trace.dt)
    return Spectrum(freqs, np.abs(coeffs), window=window, detrended=detrend,
                    n_samples=n, coeffs=coeffs)


def spectral_power(spec: Spectrum) -> float:
    """``sum(x**2)`` implied by a boxcar spectrum (Parseval in this normalisation)."""
    n = spec.n_samples
    m = spec.mags
    inner = m[1:-1] if n % 2 == 0 else m[1:]
    total = n * m[0] ** 2 + 0.5 * n * np.sum(inner**2)
    if n % 2 == 0:
        total += n * m[-1] ** 2
    return float(total)


def _nearest_index(spec, freq):
    return int(np.clip(np.rint(freq / spec.bin_width), 0, spec.mags.size - 1))


def refine_index(spec: Spectrum, index: int) -> int:
    """Largest of the bins ``index - 1 .. index + 1``."""
    lo = max(index - 1, 0)
    return lo + int(np.argmax(spec.mags[lo:index + 2]))


def peak_frequency(spec: Spectrum, index: int, interpolate: bool = True) -> float:
    """Frequency of the peak at ``index``, optionally refined from 3 bins.

    Boxcar spectra use the complex three-point estimator
    ``-Re[(X+ - X-) / (2 X0 - X- - X+)]``; tapered windows fit a parabola to
    the log magnitude.
    """
    if not interpolate or index <= 0 or index >= spec.mags.size - 1:
        return float(spec.freqs[index])
    if spec.window == "boxcar" and spec.coeffs is not None:
        xm, x0, xp = spec.coeffs[index - 1:index + 2]
        denom = 2 * x0 - xm - xp
        shift = 0.0 if denom == 0 else -float(np.real((xp - xm) / denom))
    else:
        a, b, c = np.log(np.maximum(spec.mags[index - 1:index + 2], 1e-300))
        denom = a - 2 * b + c
        shift = 0.0 if denom == 0 else 0.5 * (a - c) / denom
    return float(spec.freqs[index] + np.clip(shift, -0.5, 0.5) * spec.bin_width)


def find_peaks(spec: Spectrum, n_peaks: int = 10, include_dc: bool = False) -> list[Peak]:
    m = spec.mags
    interior = np.flatnonzero((m[1:-1] > m[:-2]) & (m[1:-1] > m[2:])) + 1
    if include_dc and m.size > 1 and m[0] > m[1]:
        interior = np.concatenate([[0], interior])
    top = interior[np.argsort(m[interior])[::-1][:n_peaks]]
    q = spec.quality(top)
    return [Peak(float(spec.freqs[i]), float(m[i]), float(qi), int(i)) for i, qi in zip(top, q)]


def _peak_at(spec, freq, label):
    i = refine_index(spec, _nearest_index(spec, freq))
    return Peak(float(spec.freqs[i]), float(spec.mags[i]), float(spec.quality(i)), i,
                harmonic=label, local_max=spec.is_local_max(i))


def detect_harmonics(spec: Spectrum, beat: float, max_harmonic: int = 4,
                     n_peaks: int = 10) -> PeakReport:
    """Magnitude and local-maximum status at ``k * beat`` (k = 1..max_harmonic)
    and at ``beat / 2``."""
    if not beat > 0:
        raise ValueError("beat must be positive")
    if beat < 4 * spec.bin_width:
        raise ValueError(f"beat {beat} is not resolvable (bin width {spec.bin_width})")
    labels = [0.5] + list(range(1, max_harmonic + 1))
    harmonics = [_peak_at(spec, k * beat, k) for k in labels if k * beat <= spec.freqs[-1]]
    return PeakReport(find_peaks(spec, n_peaks), expected_beat=beat, harmonics=harmonics)


def average_traces(traces) -> ProbabilityTrace:
    traces = list(traces)
    if not traces:
        raise ValueError("need at least one trace")
    first = traces[0]
    for tr in traces[1:]:
        if tr.times.shape != first.times.shape or not np.array_equal(tr.times, first.times):
            raise ValueError("traces must share one time grid")
    if len(traces) == 1:
        return first
    values = np.mean([tr.values for tr in traces], axis=0)
    flags = tuple(f for tr in traces for f in tr.flags)
    return ProbabilityTrace(first.times, values, first.tau, flags=flags)


def beat_amplitude(traces, beat: float, window: str = "boxcar") -> float:
    """Spectral magnitude of the averaged trace at ``beat``.

    Takes the largest of the three bins around the nearest one; with the
    ``2/N`` convention this is the cosine amplitude for an on-bin beat.
    """
    if isinstance(traces, ProbabilityTrace):
        traces = [traces]
    spec = compute_spectrum(average_traces(traces), window=window)
    return float(spec.mags[refine_index(spec, _nearest_index(spec, beat))])
