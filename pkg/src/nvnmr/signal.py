"""Closed-form signal and readout-probability models.

All frequencies are angular and in dimensionless simulation units. Every
function is vectorised over the time argument and is pure.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import j0

WEAK_COUPLING_LIMIT = 0.1


class RegimeWarning(UserWarning):
    """An asymptotic assumption behind a closed form is not satisfied."""


def sinc(x):
    """Unnormalised sinc, ``sin(x)/x`` with ``sinc(0) == 1``."""
    x = np.asarray(x, dtype=float)
    return np.sinc(x / np.pi)


@dataclass(frozen=True)
class ProtocolParams:
    """Physics knobs of one sensing experiment.

    Parameters
    ----------
    g : float
        Coupling strength (angular frequency).
    tau : float
        Interaction time per shot.
    delta1, delta2 : float
        Sample frequencies after the control offset.
    phi_m : float
        Measurement basis angle; 0 is the x basis, pi/2 the y basis.
    alpha : float
        Central-frequency amplification strength.
    n_shots : int
        Number of consecutive measurements.
    """

    g: float
    tau: float
    delta1: float
    delta2: float
    phi_m: float = 0.0
    alpha: float = 0.0
    n_shots: int = 1

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if int(self.n_shots) != self.n_shots or self.n_shots < 1:
            raise ValueError("n_shots must be a positive integer")

    @property
    def omega_r(self) -> float:
        """Beat frequency ``delta1 - delta2``."""
        return self.delta1 - self.delta2

    @property
    def omega_s(self) -> float:
        return 0.5 * (self.delta1 + self.delta2)

    def shot_times(self) -> np.ndarray:
        """``t_n = n * tau`` for ``n = 1..n_shots``."""
        return self.tau * np.arange(1, int(self.n_shots) + 1, dtype=float)


@dataclass(frozen=True)
class MicroNoise:
    """Uniform inhomogeneity inside the region seen by one sensor.

    ``delta_width`` is the half-width of the uniform offset distribution and
    ``epsilon0`` its centre.
    """

    delta_width: float = 0.0
    epsilon0: float = 0.0

    def __post_init__(self):
        if self.delta_width < 0:
            raise ValueError("delta_width must be non-negative")


@dataclass(frozen=True)
class PhaseValue:
    phi: np.ndarray
    t: np.ndarray
    flags: tuple[str, ...] = field(default=())


def short_interaction_ok(p: ProtocolParams, m: MicroNoise | None = None) -> bool:
    width = 0.0 if m is None else m.delta_width
    return p.tau * (max(abs(p.delta1), abs(p.delta2)) + width) < np.pi


def regime_flags(p: ProtocolParams, m: MicroNoise | None = None, *,
                 weak: bool = False, sigma: float | None = None,
                 t_min: float | None = None) -> list[str]:
    """Names of the regime assumptions violated by ``p`` (and ``m``).

    ``weak`` adds the weak-coupling check; ``sigma`` together with ``t_min``
    adds the macroscopic-averaging check ``sigma * t >> 1``.
    """
    flags = []
    if not short_interaction_ok(p, m):
        flags.append("short_interaction_violated")
    if weak and 2.0 * abs(p.g) * p.tau > WEAK_COUPLING_LIMIT:
        flags.append("weak_coupling_violated")
    if sigma is not None and t_min is not None and sigma * t_min < 1.0:
        flags.append("incomplete_macroscopic_averaging")
    return flags


def _warn(flags):
    for flag in flags:
        warnings.warn(flag, RegimeWarning, stacklevel=3)


def classical_coil_signal(t, g, delta1, delta2, sigma):
    """Coil current after averaging a common offset uniformly over ``±sigma``.

    The ``g (delta2 - delta1) cos(delta2 t)`` remainder is dropped, which
    assumes ``|delta2 - delta1| << delta1``.
    """
    t = np.asarray(t, dtype=float)
    return (2.0 * g * delta1 * np.cos(0.5 * (delta1 + delta2) * t)
            * np.cos(0.5 * (delta1 - delta2) * t) * sinc(sigma * t))


def _beat_factor(t, p):
    return np.cos(0.5 * p.omega_r * t) + 0.5 * p.alpha


def accumulated_phase(t, p: ProtocolParams, m: MicroNoise = MicroNoise(),
                      window: str = "short") -> PhaseValue:
    """Sensor phase of the shot centred at ``t``.

    ``window="short"`` is the product form that assumes the phase integrand
    is constant over a shot. ``window="finite"`` keeps the exact
    ``tau * sinc(omega * tau / 2)`` factor of each frequency component, which
    is the exact shot integral for ``delta_width == 0`` and accurate to
    ``O((delta_width * tau)**2)`` otherwise.
    """
    t = np.asarray(t, dtype=float)
    flags = tuple(regime_flags(p, m))
    decay = sinc(m.delta_width * t)
    if window == "short":
        phi = (2.0 * p.g * p.tau * decay
               * np.sin((p.omega_s + m.epsilon0) * t) * _beat_factor(t, p))
    elif window == "finite":
        phi = np.zeros_like(t)
        for d in (p.delta1, p.delta2):
            w = d + m.epsilon0
            phi = phi + sinc(0.5 * w * p.tau) * np.sin(w * t)
        if p.alpha:
            w = p.omega_s + m.epsilon0
            phi = phi + p.alpha * sinc(0.5 * w * p.tau) * np.sin(w * t)
        phi = p.g * p.tau * decay * phi
    else:
        raise ValueError(f"unknown window {window!r}")
    return PhaseValue(phi=phi, t=t, flags=flags)


def measurement_probability(phi, phi_m=0.0):
    """Probability of the ``down`` outcome in the basis at angle ``phi_m``."""
    if isinstance(phi, PhaseValue):
        phi = phi.phi
    return np.sin(np.asarray(phi, dtype=float) + 0.5 * phi_m) ** 2


def weak_coupling_probability(t, p: ProtocolParams, m: MicroNoise = MicroNoise()):
    """Macroscopically averaged x-basis probability for ``g tau << 1``.

    With ``alpha != 0`` the beat factor carries the same ``alpha / 2`` shift
    as :func:`accumulated_phase`.
    """
    _warn(regime_flags(p, m, weak=True))
    t = np.asarray(t, dtype=float)
    amp = p.g * p.tau * sinc(m.delta_width * t)
    return 2.0 * amp**2 * _beat_factor(t, p) ** 2


def strong_coupling_probability(t, p: ProtocolParams, m: MicroNoise = MicroNoise()):
    """Macroscopically averaged probability for arbitrary coupling.

    Averaging ``sin^2(A sin(theta) + phi_m / 2)`` over a uniformly random
    carrier phase ``theta`` gives the zeroth Bessel function.
    """
    _warn(regime_flags(p, m))
    t = np.asarray(t, dtype=float)
    arg = 4.0 * p.g * p.tau * sinc(m.delta_width * t) * _beat_factor(t, p)
    return 0.5 * (1.0 - np.cos(p.phi_m) * j0(arg))


def hartmann_hahn_probability(t, p: ProtocolParams):
    """Survival probability of ``up_z`` under the spin-locked flip-flop drive.

    Only the beat frequency enters, so common frequency shifts cancel.
    """
    _warn(regime_flags(p))
    t = np.asarray(t, dtype=float)
    return np.cos(p.g * p.tau * np.cos(0.5 * p.omega_r * t)) ** 2
