"""Fisher information about the beat frequency ``omega_r = delta1 - delta2``.

Every readout model here is one of three shapes, each with an analytic
per-shot information that needs no numerical guard at ``P in {0, 1}``:

* phase form ``P = sin^2(psi + c)``:  per-shot FI ``4 (d psi)^2``;
* averaged-carrier form ``P = (1 -+ J0(x)) / 2``:
  per-shot FI ``(d x)^2 J1(x)^2 / (1 - J0(x)^2)``, which tends to
  ``(d x)^2 / 2`` as ``x -> 0``;
* constant ``P = 1/2`` (y readout after carrier averaging): zero.

Derivatives are taken at fixed ``omega_s = (delta1 + delta2) / 2``. The
Hartmann-Hahn model uses the flip-flop normalisation
``H = g / sqrt(2) (sx Ix + sy Iy)``, i.e. ``P = cos^2(sqrt(2) g tau cos(omega_r t / 2))``,
which makes its information directly comparable with the sensing readouts.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import integrate
from scipy.special import j0, j1

from .signal import ProtocolParams, sinc

_SMALL_X = 1e-3
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class Readout(str, Enum):
    SENSING_X = "SensingX"
    SENSING_Y = "SensingY"
    HARTMANN_HAHN_Z = "HartmannHahnZ"
    MULTI_NUCLEUS_X = "MultiNucleusX"
    MULTI_NUCLEUS_Y = "MultiNucleusY"


@dataclass(frozen=True)
class FisherScenario:
    """A readout protocol plus the parameters it is evaluated at.

    ``amplitudes`` overrides ``params.g`` with per-line couplings
    ``(g1, g2)``. ``noisy_omega_s`` selects the carrier-averaged model.
    """

    readout: Readout
    params: ProtocolParams
    amplitudes: tuple[float, float] | None = None
    noisy_omega_s: bool = True
    delta_width: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "readout", Readout(self.readout))
        g1, g2 = self.couplings
        if g1 < 0 or g2 < 0:
            raise ValueError("couplings must be non-negative")
        if self.omega_r < 0:
            raise ValueError("omega_r = delta1 - delta2 must be non-negative")

    @property
    def couplings(self) -> tuple[float, float]:
        if self.amplitudes is None:
            return (self.params.g, self.params.g)
        return tuple(float(a) for a in self.amplitudes)

    @property
    def omega_r(self) -> float:
        return self.params.omega_r

    @property
    def omega_s(self) -> float:
        return self.params.omega_s

    def with_frequencies(self, omega_r: float, omega_s: float | None = None) -> "FisherScenario":
        ws = self.omega_s if omega_s is None else omega_s
        p = replace(self.params, delta1=ws + 0.5 * omega_r, delta2=ws - 0.5 * omega_r)
        return replace(self, params=p)


@dataclass
class ScalingFit:
    n_exponent: float
    tau_exponent: float
    prefactor: float
    nominal: tuple[int, int]


@dataclass
class FisherResult:
    total: float
    per_shot: np.ndarray
    times: np.ndarray
    scaling_fit: ScalingFit | None = None
    degenerate_shots: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {"total": self.total, "n_shots": int(self.per_shot.size),
               "degenerate_shots": self.degenerate_shots, "notes": list(self.notes)}
        if self.scaling_fit is not None:
            sf = self.scaling_fit
            out["scaling_fit"] = {"n_exponent": sf.n_exponent, "tau_exponent": sf.tau_exponent,
                                  "prefactor": sf.prefactor, "nominal": list(sf.nominal)}
        return out


def _kind(sc: FisherScenario) -> str:
    r = sc.readout
    if r is Readout.HARTMANN_HAHN_Z or not sc.noisy_omega_s:
        return "phase"
    if r in (Readout.SENSING_X, Readout.MULTI_NUCLEUS_X):
        return "bessel"
    return "constant"


def _model(sc: FisherScenario, t):
    """Return ``(P, dP, info)`` at times ``t`` (analytic, vectorised)."""
    t = np.asarray(t, dtype=float)
    g1, g2 = sc.couplings
    tau = sc.params.tau
    wr, ws = sc.omega_r, sc.omega_s
    w1, w2 = ws + 0.5 * wr, ws - 0.5 * wr
    decay = sinc(sc.delta_width * t)
    kind = _kind(sc)
    r = sc.readout

    if kind == "constant":
        zero = np.zeros_like(t)
        return zero + 0.5, zero, zero

    if kind == "bessel":
        if g1 == g2:
            x = 4.0 * g1 * tau * decay * np.cos(0.5 * wr * t)
            dx = -2.0 * g1 * tau * decay * t * np.sin(0.5 * wr * t)
        else:
            big_r = np.sqrt(g1**2 + g2**2 + 2 * g1 * g2 * np.cos(wr * t))
            x = 2.0 * tau * decay * big_r
            dx = -2.0 * tau * decay * g1 * g2 * t * np.sin(wr * t) / big_r
        sign = -1.0 if r is Readout.SENSING_X else 1.0
        prob = 0.5 * (1.0 + sign * j0(x))
        dprob = -0.5 * sign * j1(x) * dx
        return prob, dprob, dx**2 * bessel_ratio(x)

    # phase form: P = sin^2(psi + offset)
    if r is Readout.HARTMANN_HAHN_Z:
        if g1 == g2:
            psi = np.sqrt(2.0) * g1 * tau * decay * np.cos(0.5 * wr * t)
            dpsi = -np.sqrt(2.0) * g1 * tau * decay * 0.5 * t * np.sin(0.5 * wr * t)
        else:
            big_r = np.sqrt(g1**2 + g2**2 + 2 * g1 * g2 * np.cos(wr * t))
            psi = tau * decay * big_r / np.sqrt(2.0)
            dpsi = -tau * decay * g1 * g2 * t * np.sin(wr * t) / (np.sqrt(2.0) * big_r)
        offset = 0.5 * np.pi  # survival of up_z is cos^2
    elif r in (Readout.SENSING_X, Readout.SENSING_Y):
        psi = tau * decay * (g1 * np.sin(w1 * t) + g2 * np.sin(w2 * t))
        dpsi = tau * decay * 0.5 * t * (g1 * np.cos(w1 * t) - g2 * np.cos(w2 * t))
        offset = 0.0 if r is Readout.SENSING_X else 0.25 * np.pi
    else:
        psi = tau * decay * (g1 * np.cos(w1 * t) + g2 * np.cos(w2 * t))
        dpsi = -tau * decay * 0.5 * t * (g1 * np.sin(w1 * t) - g2 * np.sin(w2 * t))
        offset = 0.5 * np.pi if r is Readout.MULTI_NUCLEUS_X else 0.25 * np.pi
    arg = psi + offset
    return np.sin(arg) ** 2, np.sin(2 * arg) * dpsi, 4.0 * dpsi**2


def bessel_ratio(x):
    """``J1(x)^2 / (1 - J0(x)^2)`` with its ``x -> 0`` limit ``1/2``."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SMALL_X
    safe = np.where(small, 1.0, x)
    out = j1(safe) ** 2 / (1.0 - j0(safe) ** 2)
    return np.where(small, 0.5 * (1.0 - x**2 / 16.0), out)


def scenario_probability(sc: FisherScenario, t):
    return _model(sc, t)[0]


def probability_derivative(sc: FisherScenario, t):
    """Analytic ``dP / d omega_r`` at fixed ``omega_s``."""
    return _model(sc, t)[1]


def fisher_information_sum(sc: FisherScenario, n_shots: int) -> FisherResult:
    """Total Bernoulli Fisher information of shots at ``t_n = n tau``."""
    if n_shots < 0:
        raise ValueError("n_shots must be non-negative")
    times = sc.params.tau * np.arange(1, int(n_shots) + 1, dtype=float)
    prob, _, info = _model(sc, times)
    degenerate = int(np.sum(prob * (1 - prob) < 1e-300))
    notes = []
    if degenerate:
        notes.append(f"{degenerate} shot(s) with P in {{0, 1}} contribute their analytic limit")
    if _kind(sc) == "constant":
        notes.append("carrier averaging removes every odd moment: the y readout carries no information")
    return FisherResult(float(np.sum(info)), info, times, degenerate_shots=degenerate, notes=notes)


def _phase_average(sc, n_shots, n_phases):
    period = 2.0 * np.pi / sc.params.tau
    acc = 0.0
    for j in range(n_phases):
        wr = period * (((j + 1) * _GOLDEN) % 1.0)
        ws = sc.omega_s + period * (((j + 1) * np.sqrt(2.0)) % 1.0)
        acc += fisher_information_sum(sc.with_frequencies(wr, ws), n_shots).total
    return acc / n_phases


def fit_scaling(sc: FisherScenario, n_values, tau_values, n_phases: int = 64) -> ScalingFit:
    """Log-log exponents of the total information in ``N`` and in ``tau``.

    Each point is averaged over ``n_phases`` low-discrepancy draws of
    ``(omega_r, omega_s)`` across one aliasing period ``2 pi / tau`` so the
    fit follows the envelope instead of individual fringes. The prefactor is
    the geometric mean of ``I / (N^a tau^b)`` with ``(a, b)`` the fitted
    exponents rounded to integers.
    """
    n_values = np.asarray(n_values, dtype=float)
    tau_values = np.asarray(tau_values, dtype=float)
    for name, vals in (("N", n_values), ("tau", tau_values)):
        if vals.size < 2 or vals.min() <= 0 or vals.max() / vals.min() < 10 * (1 - 1e-9):
            raise ValueError(f"{name} sweep must have positive values spanning at least a decade")
    tau0, n0 = sc.params.tau, int(sc.params.n_shots)
    fi_n = np.array([_phase_average(sc, int(n), n_phases) for n in n_values])
    fi_tau = np.array([_phase_average(replace(sc, params=replace(sc.params, tau=float(tau))), n0, n_phases)
                       for tau in tau_values])
    a = np.polyfit(np.log(n_values), np.log(fi_n), 1)[0]
    b = np.polyfit(np.log(tau_values), np.log(fi_tau), 1)[0]
    na, nb = int(round(a)), int(round(b))
    ratios = np.concatenate([fi_n / (n_values**na * tau0**nb), fi_tau / (n0**na * tau_values**nb)])
    return ScalingFit(float(a), float(b), float(np.exp(np.mean(np.log(ratios)))), (na, nb))


def fisher_matrix_two_params(g1: float, g2: float, tau: float, n_shots: int):
    """Asymptotic information matrix over ``(omega_r, omega_s)`` for the
    noiseless sensing readout with unequal couplings.

    Returns ``(matrix, I_r)`` where ``I_r = 1 / (matrix^-1)[0, 0]`` is the
    information left about ``omega_r`` once ``omega_s`` is also unknown.
    """
    a, b = g1**2 + g2**2, g1**2 - g2**2
    if not (g1 > 0 and g2 > 0):
        raise ValueError("singular information matrix: both couplings must be positive")
    scale = tau**4 * float(n_shots) ** 3 / 6.0
    matrix = scale * np.array([[a, 2 * b], [2 * b, 4 * a]])
    # closed form of 1 / inv(matrix)[0, 0]
    i_r = (2.0 / 3.0) * g1**2 * g2**2 / a * tau**4 * float(n_shots) ** 3
    return matrix, i_r


def fisher_matrix_numeric(prob_fn, theta, times, rel_step: float = 1e-6) -> np.ndarray:
    """Bernoulli information matrix ``sum_n dP_i dP_j / (P (1 - P))`` with
    central-difference derivatives of ``prob_fn(theta, times)``."""
    theta = np.asarray(theta, dtype=float)
    prob = prob_fn(theta, times)
    grads = []
    for i in range(theta.size):
        h = rel_step * max(abs(theta[i]), 1.0)
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        grads.append((prob_fn(up, times) - prob_fn(down, times)) / (2 * h))
    grads = np.array(grads)
    w = 1.0 / (prob * (1.0 - prob))
    return (grads * w) @ grads.T


def f_c_integral(c: float) -> float:
    """``(1/2pi) int_0^{2pi} sin^2 x / (1 + c^2 + 2 c cos x)^{3/2} dx`` for ``0 < c < 1``."""
    if not 0.0 < c < 1.0:
        raise ValueError("c must lie in (0, 1)")
    val, _ = integrate.quad(lambda x: np.sin(x) ** 2 / (1 + c * c + 2 * c * np.cos(x)) ** 1.5,
                            0.0, 2.0 * np.pi, epsabs=1e-12, epsrel=1e-12, limit=200)
    return val / (2.0 * np.pi)
