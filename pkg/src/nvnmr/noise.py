"""Noise models and ensemble averaging.

Static offsets (a frequency shift common to both lines, fixed over the
record) are averaged either by Gaussian quadrature or by seeded Monte Carlo.
Time-dependent offsets follow an Ornstein-Uhlenbeck process whose integral
is the accumulated noise phase ``theta``.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.signal import lfilter

from .seeding import derive_rng
from .signal import (
    MicroNoise,
    ProtocolParams,
    RegimeWarning,
    regime_flags,
    sinc,
)
from .trace import ProbabilityTrace

# C in  amplitude ~ C * 4 g^2 tau / (sqrt(2 pi) sigma).  The large
# sigma*tau limit of the static Gaussian ensemble gives sqrt(2 pi) g^2 tau / sigma.
DECAY_PREFACTOR = np.pi / 2


@dataclass(frozen=True)
class NoNoise:
    pass


@dataclass(frozen=True)
class UniformOffset:
    half_width: float
    center: float = 0.0


@dataclass(frozen=True)
class GaussianMacroscopic:
    sigma: float


@dataclass(frozen=True)
class UniformMacroscopic:
    half_width: float


@dataclass(frozen=True)
class OrnsteinUhlenbeck:
    correlation_time: float
    diffusion: float
    seed: int = 0

    @property
    def stationary_variance(self) -> float:
        return self.diffusion**2 * self.correlation_time / 2.0


NoiseModel = Union[NoNoise, UniformOffset, GaussianMacroscopic, UniformMacroscopic, OrnsteinUhlenbeck]


def check_noise(noise: NoiseModel) -> None:
    for f in dataclasses.fields(noise):
        if f.name in ("seed", "center"):
            continue
        if getattr(noise, f.name) < 0:
            raise ValueError(f"{type(noise).__name__}.{f.name} must be non-negative")
    if isinstance(noise, OrnsteinUhlenbeck) and not noise.correlation_time > 0:
        raise ValueError("OrnsteinUhlenbeck.correlation_time must be positive")


@dataclass(frozen=True)
class EnsembleSpec:
    """How a static-offset average is computed.

    ``method`` is ``"quadrature"`` (Gauss-Hermite for Gaussian offsets,
    Gauss-Legendre for uniform ones) or ``"monte_carlo"``.
    """

    method: str = "quadrature"
    order: int = 64
    n_samples: int = 10_000
    seed: int = 0
    target: str = "epsilon0"

    def __post_init__(self):
        if self.method not in ("quadrature", "monte_carlo"):
            raise ValueError(f"unknown ensemble method {self.method!r}")
        if self.method == "quadrature" and self.order < 8:
            raise ValueError("quadrature order must be >= 8")
        if self.method == "monte_carlo" and self.n_samples < 1000:
            raise ValueError("n_samples must be >= 1000")
        if self.target not in ("epsilon0", "path"):
            raise ValueError(f"unknown ensemble target {self.target!r}")


def _nodes(noise, spec):
    if isinstance(noise, GaussianMacroscopic):
        x, w = hermegauss(spec.order)
        return noise.sigma * x, w / np.sqrt(2.0 * np.pi)
    x, w = leggauss(spec.order)
    return noise.half_width * x, 0.5 * w


def _samples(noise, spec, n):
    rng = derive_rng(spec.seed, "macroscopic-offsets")
    if isinstance(noise, GaussianMacroscopic):
        return noise.sigma * rng.standard_normal(n)
    return rng.uniform(-noise.half_width, noise.half_width, n)


def average_over_macroscopic(probability_fn: Callable, noise: NoiseModel, spec: EnsembleSpec,
                             t_grid, p: ProtocolParams, m: MicroNoise = MicroNoise(),
                             chunk_size: int = 4_000_000) -> ProbabilityTrace:
    """Average ``probability_fn(t, p, m)`` over a static offset added to ``epsilon0``.

    Monte Carlo results carry the per-point standard error in ``stderr``.
    Quadrature flags ``quadrature_underresolved`` when the offset phase
    ``2 * sigma * t`` outruns what ``order`` nodes can integrate.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("t_grid must be a non-empty 1-D array")
    if isinstance(noise, OrnsteinUhlenbeck):
        raise ValueError("time-dependent noise: use evolve_time_dependent")
    if isinstance(noise, UniformOffset):
        raise ValueError("microscopic offsets are averaged at the phase level; pass them as MicroNoise")
    check_noise(noise)
    flags = regime_flags(p, m)

    if isinstance(noise, NoNoise):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RegimeWarning)
            values = np.asarray(probability_fn(t, p, m), dtype=float)
        return ProbabilityTrace(t, values, p.tau, flags=tuple(flags))

    width = noise.sigma if isinstance(noise, GaussianMacroscopic) else noise.half_width
    if spec.method == "quadrature":
        offsets, weights = _nodes(noise, spec)
        if 2.0 * width * np.abs(t).max() > np.sqrt(spec.order):
            flags.append("quadrature_underresolved")
    else:
        offsets = _samples(noise, spec, spec.n_samples)
        weights = np.full(offsets.size, 1.0 / offsets.size)

    rows = max(1, chunk_size // t.size)
    total = np.zeros_like(t)
    total_sq = np.zeros_like(t)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        for start in range(0, offsets.size, rows):
            block = offsets[start:start + rows]
            w = weights[start:start + rows]
            vals = np.asarray(probability_fn(t[None, :], p,
                                             dataclasses.replace(m, epsilon0=m.epsilon0 + block[:, None])))
            total += w @ vals
            if spec.method == "monte_carlo":
                total_sq += w @ vals**2
    stderr = None
    if spec.method == "monte_carlo":
        n = offsets.size
        var = np.maximum(total_sq - total**2, 0.0) * n / (n - 1)
        stderr = np.sqrt(var / n)
    return ProbabilityTrace(t, np.clip(total, 0.0, 1.0), p.tau, stderr=stderr, flags=tuple(flags))


@dataclass
class NoisePath:
    """Offset ``epsilon`` and accumulated phase ``theta`` on a time grid.

    Arrays are 1-D for one path or ``(n_paths, n_times)`` for a batch.
    """

    times: np.ndarray
    epsilon: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.epsilon = np.asarray(self.epsilon, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        if self.epsilon.shape != self.theta.shape or self.epsilon.shape[-1] != self.times.size:
            raise ValueError("epsilon, theta and times must have matching lengths")

    @classmethod
    def constant(cls, epsilon, times) -> "NoisePath":
        """Static offset(s): ``theta = epsilon * t``."""
        times = np.asarray(times, dtype=float)
        eps = np.asarray(epsilon, dtype=float)
        eps_grid = np.broadcast_to(eps[..., None], eps.shape + times.shape)
        return cls(times, eps_grid.copy(), eps[..., None] * times)

    @property
    def n_paths(self) -> int:
        return 1 if self.epsilon.ndim == 1 else self.epsilon.shape[0]

    def path(self, i: int) -> "NoisePath":
        if self.epsilon.ndim == 1:
            return self
        return NoisePath(self.times, self.epsilon[i], self.theta[i])


def _check_grid(t):
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("time grid must be a 1-D array with at least two points")
    if np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return t


def _cumtrapz(eps, t, step=None):
    theta = np.zeros_like(eps)
    if step is None:
        theta[..., 1:] = np.cumsum(0.5 * (eps[..., 1:] + eps[..., :-1]) * np.diff(t), axis=-1)
    else:
        theta[..., 1:] = step * np.cumsum(0.5 * (eps[..., 1:] + eps[..., :-1]), axis=-1)
    return theta


def _uniform_step(t):
    """Step of ``t`` if it is uniform up to rounding of the grid values, else None."""
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) <= 16 * np.finfo(float).eps * np.max(np.abs(t)):
        return (t[-1] - t[0]) / (t.size - 1)
    return None


def _ou_filter(eta, t, step, tau_t, var, eps0):
    """Exact AR(1) recursion driven by standard normals ``eta``."""
    dt = np.diff(t) if step is None else np.array([step])
    decay = np.exp(-dt / tau_t)
    kick = np.sqrt(var * (1.0 - decay**2))
    if step is not None:
        drive = eta * kick[0]
        drive[:, 0] = eps0
        return lfilter([1.0], [1.0, -decay[0]], drive, axis=1)
    eps = np.empty_like(eta)
    eps[:, 0] = eps0
    for k in range(1, t.size):
        eps[:, k] = eps[:, k - 1] * decay[k - 1] + kick[k - 1] * eta[:, k]
    return eps


def sample_ou_path(tau_t: float, sigma_t: float, t_grid, seed: int = 0,
                   n_paths: int | None = None, initial=None) -> NoisePath:
    """Sample Ornstein-Uhlenbeck offsets ``d eps = -eps/tau_t dt + sigma_t dW``.

    The update is the exact conditional Gaussian, so any step size is
    admissible. ``epsilon(t0)`` comes from the stationary law with variance
    ``sigma_t**2 * tau_t / 2`` unless ``initial`` is given. Path ``i`` of a
    batch uses its own derived stream, so results do not depend on batching.
    """
    if not tau_t > 0:
        raise ValueError("tau_t must be positive")
    if sigma_t < 0:
        raise ValueError("sigma_t must be non-negative")
    t = _check_grid(t_grid)
    count = 1 if n_paths is None else int(n_paths)
    var = sigma_t**2 * tau_t / 2.0
    step = _uniform_step(t)

    eta = np.empty((count, t.size))
    for i in range(count):
        eta[i] = derive_rng(seed, "ou-path", i).standard_normal(t.size)
    if initial is None:
        eps0 = np.sqrt(var) * eta[:, 0]
    else:
        eps0 = np.broadcast_to(np.asarray(initial, dtype=float), (count,))

    eps = _ou_filter(eta, t, step, tau_t, var, eps0)
    theta = _cumtrapz(eps, t, step)
    if n_paths is None:
        return NoisePath(t, eps[0], theta[0])
    return NoisePath(t, eps, theta)


def noise_grid(t_grid, tau: float, substeps: int = 64) -> np.ndarray:
    """Fine grid from 0 that contains every shot-window node of ``t_grid``.

    Aligned exactly when the shot times are multiples of ``tau`` and
    ``substeps`` is even.
    """
    t = np.asarray(t_grid, dtype=float)
    h = tau / substeps
    n = int(np.ceil((t.max() + 0.5 * tau) / h - 1e-9)) + 1
    return h * np.arange(n)


def _pieces(psi, h, method):
    """Integral of ``sin(psi)`` over each sub-interval of width ``h``."""
    if method == "exact":
        # exact for a phase that is linear on each sub-interval
        mid = psi[..., 1:] + psi[..., :-1]
        mid *= 0.5
        half = psi[..., 1:] - psi[..., :-1]
        half *= 0.5
        return h * np.sin(mid) * _sinc_inplace(half)
    s = np.sin(psi)
    return 0.5 * h * (s[..., 1:] + s[..., :-1])


def _sinc_inplace(x):
    zero = x == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.sin(x)
        out /= x
    out[zero] = 1.0
    return out


def _window_integral(psi, h, method):
    return np.sum(_pieces(psi, h, method), axis=-1)


def _aligned_starts(times, step, t, tau, substeps):
    """Grid index of each window start when windows sit on the path grid."""
    h = tau / substeps
    if step is None or abs(step - h) > 1e-9 * h:
        return None
    start = (t - 0.5 * tau - times[0]) / h
    k = np.rint(start)
    if np.max(np.abs(start - k)) > 1e-6 or k.min() < 0 or k.max() + substeps >= times.size:
        return None
    return k.astype(int)


def _shot_integrals(path, p, t, substeps, method, starts):
    h = p.tau / substeps
    if starts is None:
        nodes = t[:, None] - 0.5 * p.tau + h * np.arange(substeps + 1)
        theta = np.interp(nodes, path.times, path.theta)
        return sum(_window_integral(d * nodes + theta, h, method) for d in (p.delta1, p.delta2))
    # every sub-interval once, then each window as a cumulative-sum difference
    lo_k, hi_k = starts.min(), starts.max() + substeps
    grid, theta = path.times[lo_k:hi_k + 1], path.theta[lo_k:hi_k + 1]
    pieces = _pieces(p.delta1 * grid + theta, h, method)
    pieces += _pieces(p.delta2 * grid + theta, h, method)
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    return cum[starts - lo_k + substeps] - cum[starts - lo_k]


def evolve_time_dependent(path: NoisePath, p: ProtocolParams, t_grid, substeps: int = 64,
                          method: str = "exact") -> ProbabilityTrace:
    """x-basis probability of one noise realisation.

    Each shot integrates ``sin(delta_i t' + theta(t'))`` over
    ``[t - tau/2, t + tau/2]`` with ``theta`` linearly interpolated.
    ``method="exact"`` integrates every linear-phase sub-interval in closed
    form (robust when ``theta`` winds quickly); ``"trapezoid"`` is plain
    trapezoidal quadrature on the same nodes.
    """
    if path.n_paths != 1:
        raise ValueError("evolve_time_dependent takes a single path; see ou_ensemble_trace")
    if method not in ("exact", "trapezoid"):
        raise ValueError(f"unknown method {method!r}")
    t = np.asarray(t_grid, dtype=float)
    lo, hi = t.min() - 0.5 * p.tau, t.max() + 0.5 * p.tau
    span = 1e-9 * max(1.0, abs(hi))
    if path.times[0] > lo + span or path.times[-1] < hi - span:
        raise ValueError("noise path does not cover the shot windows")

    starts = _aligned_starts(path.times, _uniform_step(path.times), t, p.tau, substeps)
    values = np.sin(p.g * _shot_integrals(path, p, t, substeps, method, starts)) ** 2
    return ProbabilityTrace(t, values, p.tau, flags=tuple(regime_flags(p)))


def ou_ensemble_trace(p: ProtocolParams, noise: OrnsteinUhlenbeck, n_paths: int, t_grid=None,
                      substeps: int | None = None, batch: int = 16) -> ProbabilityTrace:
    """Average :func:`evolve_time_dependent` over ``n_paths`` OU realisations.

    ``substeps`` defaults to ``max(64, 8 tau / tau_t)`` rounded up to even,
    keeping several noise samples per correlation time.
    """
    check_noise(noise)
    t = p.shot_times() if t_grid is None else np.asarray(t_grid, dtype=float)
    if substeps is None:
        substeps = max(64, int(np.ceil(8 * p.tau / noise.correlation_time)))
    substeps += substeps % 2
    grid = noise_grid(t, p.tau, substeps)
    step = _uniform_step(grid)
    starts = _aligned_starts(grid, step, t, p.tau, substeps)
    total = np.zeros_like(t)
    for start in range(0, n_paths, batch):
        count = min(batch, n_paths - start)
        paths = _ou_batch(noise, grid, step, start, count)
        for i in range(count):
            total += np.sin(p.g * _shot_integrals(paths.path(i), p, t, substeps, "exact", starts)) ** 2
    trace = ProbabilityTrace(t, total / n_paths, p.tau, flags=tuple(regime_flags(p)))
    return trace


def _ou_batch(noise, grid, step, start, count):
    # members keyed by their global index so batching never changes a path;
    # each draws the same stream sample_ou_path(seed=member_seed) would
    var = noise.stationary_variance
    eta = np.stack([derive_rng(_member_seed(noise.seed, start + i), "ou-path", 0).standard_normal(grid.size)
                    for i in range(count)])
    eps = _ou_filter(eta, grid, step, noise.correlation_time, var, np.sqrt(var) * eta[:, 0])
    return NoisePath(grid, eps, _cumtrapz(eps, grid, step))


def _member_seed(master, index):
    return int(derive_rng(master, "ou-member", index).integers(2**63))


def static_ensemble_beat_amplitude(g: float, tau: float, delta1: float, delta2: float,
                                   sigma: float) -> float:
    """Beat-note amplitude of the static Gaussian ensemble at weak coupling.

    The cosine coefficient of ``(delta1 - delta2) t`` in the averaged
    probability is ``g^2 tau^2 E[sinc((delta1+e) tau/2) sinc((delta2+e) tau/2)]``
    once ``sigma * t >> 1`` has washed out the carrier.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    step = min(sigma / 50.0, 0.2 / tau)
    eps = np.arange(-9.0 * sigma, 9.0 * sigma + step, step)
    dens = np.exp(-0.5 * (eps / sigma) ** 2) / (np.sqrt(2 * np.pi) * sigma)
    f = dens * sinc(0.5 * (delta1 + eps) * tau) * sinc(0.5 * (delta2 + eps) * tau)
    return float(g**2 * tau**2 * abs(integrate.simpson(f, x=eps)))


def beat_amplitude_decay_prediction(g: float, tau: float, sigma: float) -> float:
    """Beat-note amplitude under strong offset noise, ``~ g^2 tau / sigma``."""
    if sigma == 0:
        raise ValueError("sigma must be non-zero")
    if abs(sigma) * tau < 5.0:
        warnings.warn("sigma_tau_not_large", RegimeWarning, stacklevel=2)
    return DECAY_PREFACTOR * 4.0 * g**2 * tau / (np.sqrt(2.0 * np.pi) * abs(sigma))
