"""scikit-learn style wrappers around the averaging and spectral pipeline.

Rows of ``X`` are traces (uniformly sampled with spacing ``tau``), columns
are shots. These are thin adapters; the physics lives in the modules they
call.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import noise as nz
from . import spectral as spc
from .signal import MicroNoise, ProtocolParams, accumulated_phase, measurement_probability
from .trace import ProbabilityTrace


def _phase_probability(t, p, m):
    return measurement_probability(accumulated_phase(t, p, m), p.phi_m)


class MacroscopicAverager(BaseEstimator, TransformerMixin):
    """Map shot times to the offset-averaged readout probability.

    ``X`` is a column of times, shape ``(n, 1)``; ``transform`` returns
    shape ``(n, 1)``.
    """

    def __init__(self, g=1.0, tau=5e-3, delta1=100.0, delta2=100.01, phi_m=0.0, alpha=0.0,
                 delta_width=0.0, sigma=1.0, distribution="gaussian", method="quadrature",
                 order=64, n_samples=10_000, seed=0):
        self.g = g
        self.tau = tau
        self.delta1 = delta1
        self.delta2 = delta2
        self.phi_m = phi_m
        self.alpha = alpha
        self.delta_width = delta_width
        self.sigma = sigma
        self.distribution = distribution
        self.method = method
        self.order = order
        self.n_samples = n_samples
        self.seed = seed

    def fit(self, X=None, y=None):
        self.params_ = ProtocolParams(self.g, self.tau, self.delta1, self.delta2, self.phi_m, self.alpha)
        self.micro_ = MicroNoise(self.delta_width)
        if self.distribution == "gaussian":
            self.noise_ = nz.GaussianMacroscopic(self.sigma)
        elif self.distribution == "uniform":
            self.noise_ = nz.UniformMacroscopic(self.sigma)
        elif self.distribution == "none":
            self.noise_ = nz.NoNoise()
        else:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        nz.check_noise(self.noise_)
        self.ensemble_ = nz.EnsembleSpec(self.method, self.order, self.n_samples, self.seed)
        if X is not None:
            self.n_features_in_ = check_array(X).shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        t = check_array(X)
        if t.shape[1] != 1:
            raise ValueError("X must be a single column of times")
        trace = nz.average_over_macroscopic(_phase_probability, self.noise_, self.ensemble_,
                                            t[:, 0], self.params_, self.micro_)
        return trace.values[:, None]


class SpectrumTransformer(BaseEstimator, TransformerMixin):
    """Rows of probabilities to rows of one-sided ``2/N`` magnitudes."""

    def __init__(self, tau=1.0, window="boxcar", detrend=True):
        self.tau = tau
        self.window = window
        self.detrend = detrend

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_features=spc.MIN_SAMPLES)
        self.n_features_in_ = X.shape[1]
        self.freqs_ = 2.0 * np.pi * np.fft.rfftfreq(X.shape[1], d=self.tau)
        return self

    def _spectrum(self, row):
        return spc.compute_spectrum(ProbabilityTrace.from_shots(row, self.tau), self.window, self.detrend)

    def transform(self, X):
        check_is_fitted(self, "freqs_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} samples per trace, got {X.shape[1]}")
        return np.stack([self._spectrum(row).mags for row in X])


class BeatNoteEstimator(BaseEstimator):
    """Locate the dominant non-DC line of the averaged trace.

    ``fit`` averages the rows of ``X`` and stores ``beat_frequency_`` and
    ``quality_``; ``predict`` returns the per-row peak frequency.
    """

    def __init__(self, tau=1.0, window="boxcar", interpolate=True):
        self.tau = tau
        self.window = window
        self.interpolate = interpolate

    def _peak(self, row):
        spec = spc.compute_spectrum(ProbabilityTrace.from_shots(row, self.tau), self.window)
        peaks = spc.find_peaks(spec, 1)
        if not peaks:
            return float("nan"), 0.0
        pk = peaks[0]
        return spc.peak_frequency(spec, pk.index, self.interpolate), pk.quality

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_features=spc.MIN_SAMPLES)
        self.n_features_in_ = X.shape[1]
        self.beat_frequency_, self.quality_ = self._peak(X.mean(axis=0))
        return self

    def predict(self, X):
        check_is_fitted(self, "beat_frequency_")
        X = check_array(X)
        return np.array([self._peak(row)[0] for row in X])
