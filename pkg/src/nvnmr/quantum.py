"""Exact small-system spin dynamics and the two-spin closed forms.

Conventions (all operators are Pauli matrices):

* the sensor is the most significant qubit, nuclei follow in order;
* a nucleus with Larmor frequency ``delta`` evolves under ``(delta / 2) Z``,
  starting from ``+x`` unless configured otherwise;
* ``H_sensing = g sum_m X_s X_m`` and
  ``H_flipflop = (g / sqrt 2) sum_m (X_s X_m + Y_s Y_m)``;
* the sensor starts every shot in ``+z``. The ``Z`` readout is ``P(+z)``;
  the ``X`` readout is the probability after the closing ``pi/2`` pulse,
  which is the sensor population along ``-y`` before it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .seeding import derive_rng
from .trace import ProbabilityTrace

MAX_NUCLEI = 12
MAX_DENSITY_NUCLEI = 8
NORM_TOL = 1e-8
_DENSE_LIMIT = 2048

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_AXES = {
    "+z": np.array([1, 0], dtype=complex),
    "-z": np.array([0, 1], dtype=complex),
    "+x": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "-x": np.array([1, -1], dtype=complex) / np.sqrt(2),
    "+y": np.array([1, 1j], dtype=complex) / np.sqrt(2),
    "-y": np.array([1, -1j], dtype=complex) / np.sqrt(2),
}
HAMILTONIANS = ("Sensing", "FlipFlop")


# -- closed forms -----------------------------------------------------------

def coherence_closed_form(n: int, g, tau, delta, t):
    """``<up|rho_sensor|down> = (cos 2g tau - i sin 2g tau cos(delta t))^N / 2``
    for a sensor prepared along ``+x`` and ``N`` nuclei along ``+x``."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    gt = np.asarray(g) * tau
    return 0.5 * (np.cos(2 * gt) - 1j * np.sin(2 * gt) * np.cos(np.asarray(delta) * t)) ** int(n)


def semiclassical_coherence(n: int, g, tau, delta, t):
    """Large-``N`` limit ``exp(-2i N g tau cos(delta t)) / 2``."""
    return 0.5 * np.exp(-2j * n * np.asarray(g) * tau * np.cos(np.asarray(delta) * t))


def twospin_probabilities(g, tau, delta1, delta2, t, hamiltonian: str = "FlipFlop",
                          basis: str = "Z"):
    """Sensor readout after one interaction window with two nuclei."""
    gt = np.asarray(g, dtype=float) * tau
    c1 = np.cos(np.asarray(delta1) * t)
    c2 = np.cos(np.asarray(delta2) * t)
    key = (hamiltonian, basis.upper())
    if key == ("FlipFlop", "Z"):
        return 0.25 * (3 + np.cos(4 * gt) - np.sin(2 * gt) ** 2
                       * np.cos((np.asarray(delta1) - np.asarray(delta2)) * t))
    if key == ("FlipFlop", "X"):
        return 0.5 + np.sin(gt) * np.cos(gt) ** 3 * (c1 + c2) / np.sqrt(2)
    if key == ("Sensing", "Z"):
        return (3 + np.cos(4 * gt)) / 4 - 0.5 * np.sin(2 * gt) ** 2 * c1 * c2
    if key == ("Sensing", "X"):
        return 0.5 + 0.25 * np.sin(4 * gt) * (c1 + c2)
    raise ValueError(f"unknown hamiltonian/basis {key}")


def selective_probability(g, tau, delta1, delta2, t):
    """Readout under ``g / sqrt 2 (X_s (X_1 + X_2) + Y_s (Y_1 - Y_2))``.

    Sensor prepared along ``+x`` and read along ``-y``, as the X readout.
    Only the difference frequency appears:
    ``1/2 - (1 - cos 4g tau) sin((delta1 - delta2) t) / 16``.
    """
    gt = np.asarray(g, dtype=float) * tau
    return 0.5 - (1 - np.cos(4 * gt)) * np.sin((np.asarray(delta1) - np.asarray(delta2)) * t) / 16


@dataclass(frozen=True)
class NucleusSpec:
    """Per-nucleus couplings and Larmor frequencies, plus the initial axis."""

    couplings: tuple
    larmor: tuple
    axis: str = "+x"

    def __post_init__(self):
        object.__setattr__(self, "couplings", tuple(float(c) for c in np.atleast_1d(self.couplings)))
        object.__setattr__(self, "larmor", tuple(float(d) for d in np.atleast_1d(self.larmor)))
        if len(self.couplings) != len(self.larmor):
            raise ValueError("couplings and larmor must have one entry per nucleus")
        if not 1 <= len(self.couplings) <= MAX_NUCLEI:
            raise ValueError(f"need 1..{MAX_NUCLEI} nuclei, got {len(self.couplings)}")
        if self.axis not in _AXES:
            raise ValueError(f"axis must be one of {sorted(_AXES)}")

    @property
    def n_nuclei(self) -> int:
        return len(self.couplings)


def collective_phase(spec: NucleusSpec, tau, t):
    t = np.asarray(t, dtype=float)
    return sum(g * tau * np.cos(d * t) for g, d in zip(spec.couplings, spec.larmor))


def multinucleus_readout(spec: NucleusSpec, tau, t, basis: str = "X"):
    """Back-action-free readout of many nuclei.

    ``Y``: ``1/2 + sin(2 Phi) / 2``; ``X``: ``1/2 + cos(2 Phi) / 2`` with
    ``Phi = sum_m g_m tau cos(delta_m t)``. X keeps only even powers of the
    collective phase.
    """
    phase = collective_phase(spec, tau, t)
    basis = basis.upper()
    if basis == "X":
        return 0.5 + 0.5 * np.cos(2 * phase)
    if basis == "Y":
        return 0.5 + 0.5 * np.sin(2 * phase)
    raise ValueError("basis must be 'X' or 'Y'")


# -- exact evolution ---------------------------------------------------------

def _embed(op, site, n_qubits):
    """Sparse ``op`` acting on qubit ``site`` of ``n_qubits``."""
    left = sp.identity(2**site, format="csr", dtype=complex)
    right = sp.identity(2 ** (n_qubits - site - 1), format="csr", dtype=complex)
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")


def interaction_hamiltonian(couplings, hamiltonian: str) -> sp.csr_matrix:
    """Sensor-nuclei coupling on ``1 + M`` qubits."""
    if hamiltonian not in HAMILTONIANS:
        raise ValueError(f"hamiltonian must be one of {HAMILTONIANS}")
    nq = len(couplings) + 1
    h = sp.csr_matrix((2**nq, 2**nq), dtype=complex)
    sx, sy = _embed(_PAULI["X"], 0, nq), _embed(_PAULI["Y"], 0, nq)
    for m, g in enumerate(couplings, start=1):
        if g == 0:
            continue
        if hamiltonian == "Sensing":
            h = h + g * (sx @ _embed(_PAULI["X"], m, nq))
        else:
            h = h + (g / np.sqrt(2)) * (sx @ _embed(_PAULI["X"], m, nq) + sy @ _embed(_PAULI["Y"], m, nq))
    return h.tocsr()


def _z_diagonal(larmor, n_qubits):
    """Diagonal of ``sum_m (delta_m / 2) Z_m`` on the full register."""
    idx = np.arange(2**n_qubits)
    diag = np.zeros(idx.size)
    for m, d in enumerate(larmor, start=1):
        bit = (idx >> (n_qubits - 1 - m)) & 1
        diag += 0.5 * d * (1 - 2 * bit)
    return diag


@dataclass
class SpinEnsembleState:
    """Sensor plus ``n_nuclei`` nuclei, as a pure vector or a density matrix."""

    n_nuclei: int
    amplitudes: np.ndarray | None = None
    density: np.ndarray | None = None
    time: float = 0.0

    def __post_init__(self):
        if not 1 <= self.n_nuclei <= MAX_NUCLEI:
            raise ValueError(f"dimension overflow: at most {MAX_NUCLEI} nuclei")
        dim = 2 ** (self.n_nuclei + 1)
        if (self.amplitudes is None) == (self.density is None):
            raise ValueError("give exactly one of amplitudes or density")
        if self.amplitudes is not None:
            self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
            if self.amplitudes.shape != (dim,):
                raise ValueError(f"amplitudes must have shape ({dim},)")
            if abs(np.linalg.norm(self.amplitudes) - 1) > 1e-10:
                raise ValueError("state must have unit norm")
        else:
            self.density = np.asarray(self.density, dtype=complex)
            if self.density.shape != (dim, dim):
                raise ValueError(f"density must have shape ({dim}, {dim})")
            if abs(np.trace(self.density).real - 1) > 1e-10:
                raise ValueError("density must have unit trace")

    @classmethod
    def initial(cls, spec: NucleusSpec, sensor: str = "+z") -> "SpinEnsembleState":
        vec = _AXES[sensor]
        nuc = _AXES[spec.axis]
        for _ in range(spec.n_nuclei):
            vec = np.kron(vec, nuc)
        return cls(spec.n_nuclei, amplitudes=vec)

    @property
    def dim(self) -> int:
        return 2 ** (self.n_nuclei + 1)

    def is_pure(self) -> bool:
        return self.amplitudes is not None

    def sensor_density(self) -> np.ndarray:
        if self.is_pure():
            psi = self.amplitudes.reshape(2, -1)
            return psi @ psi.conj().T
        r = self.density.reshape(2, self.dim // 2, 2, self.dim // 2)
        return np.einsum("ajbj->ab", r)

    def nuclear_density(self) -> np.ndarray:
        if self.is_pure():
            psi = self.amplitudes.reshape(2, -1)
            return psi.T @ psi.conj()
        r = self.density.reshape(2, self.dim // 2, 2, self.dim // 2)
        return np.einsum("aiaj->ij", r)


@dataclass
class EvolutionResult:
    state: SpinEnsembleState
    times: np.ndarray
    prob_z: np.ndarray
    prob_x: np.ndarray
    sensor_purity: np.ndarray
    nuclear_purity: np.ndarray
    polarization: np.ndarray  # (shots, M) nuclear <Z> after each shot
    outcomes: np.ndarray | None = None
    tau: float = 1.0
    flags: list = field(default_factory=list)

    def trace(self, basis: str = "X") -> ProbabilityTrace:
        values = self.prob_x if basis.upper() == "X" else self.prob_z
        return ProbabilityTrace(self.times, np.clip(values, 0.0, 1.0), self.tau)


class _Propagator:
    """``exp(-i H tau)`` applied to vectors or density matrices."""

    def __init__(self, h: sp.csr_matrix, tau: float):
        self.tau = tau
        if h.shape[0] <= _DENSE_LIMIT:
            w, v = np.linalg.eigh(h.toarray())
            self.u = (v * np.exp(-1j * w * tau)) @ v.conj().T
            self.h = None
        else:
            self.u = None
            self.h = (-1j * tau) * h

    def apply(self, x):
        if self.u is not None:
            return self.u @ x
        return expm_multiply(self.h, x)

    def conjugate(self, rho):
        y = self.apply(rho)
        return self.apply(y.conj().T).conj().T


def _sensor_probs(rho_s):
    p_z = float(np.real(rho_s[0, 0]))
    minus_y = _AXES["-y"]
    p_x = float(np.real(minus_y.conj() @ rho_s @ minus_y))
    return p_z, p_x


def _check_norm(value):
    if abs(value - 1.0) > NORM_TOL:
        raise FloatingPointError(f"norm drift {abs(value - 1.0):.3e} exceeds {NORM_TOL}")


def evolve_exact(state: SpinEnsembleState, spec: NucleusSpec, hamiltonian: str,
                 g_global: float, tau: float, steps: int, *, shot_times=None,
                 reset: str = "expectation", co_evolve: bool = False,
                 detuning_shifts=None, measure_basis: str = "Z",
                 seed: int = 0) -> EvolutionResult:
    """Repeated interaction windows with an exact propagator.

    Coupling ``m`` is ``g_global * spec.couplings[m]``. Shot ``n`` is centred
    at ``shot_times[n]`` (default ``n * tau``). Between shots the nuclei
    precess freely; with ``co_evolve=False`` the precession is frozen during
    the window, otherwise the window evolves under coupling plus precession.
    ``detuning_shifts[n]`` adds a common offset to every Larmor frequency
    for the interval ending with shot ``n``.

    ``reset`` controls what happens to the sensor after a shot:
    ``"expectation"`` traces it out and re-prepares ``+z`` (density matrix,
    ``M <= 8``), ``"trajectory"`` samples a ``measure_basis`` outcome, keeps
    the conditional nuclear state and re-prepares ``+z``, and ``"none"``
    leaves the joint state untouched.
    """
    if state.n_nuclei != spec.n_nuclei:
        raise ValueError("state and spec disagree on the number of nuclei")
    if reset not in ("expectation", "trajectory", "none"):
        raise ValueError("reset must be 'expectation', 'trajectory' or 'none'")
    if not tau > 0:
        raise ValueError("tau must be positive")
    m = spec.n_nuclei
    nq = m + 1
    if shot_times is None:
        shot_times = tau * np.arange(1, int(steps) + 1, dtype=float)
    shot_times = np.asarray(shot_times, dtype=float)
    steps = shot_times.size
    shifts = np.zeros(steps) if detuning_shifts is None else np.asarray(detuning_shifts, dtype=float)
    if shifts.shape != (steps,):
        raise ValueError("detuning_shifts needs one entry per shot")
    if np.any(np.diff(shot_times) < (tau if co_evolve else 0.0) - 1e-12):
        raise ValueError("shot windows must not overlap")
    if reset == "expectation" and m > MAX_DENSITY_NUCLEI:
        raise ValueError(f"expectation reset keeps a density matrix: at most {MAX_DENSITY_NUCLEI} nuclei")

    couplings = [g_global * g for g in spec.couplings]
    h_int = interaction_hamiltonian(couplings, hamiltonian)
    larmor = np.array(spec.larmor)
    zdiag = _z_diagonal(np.ones(m), nq)  # per unit common frequency
    zdiags = [_z_diagonal(np.eye(m)[k], nq) for k in range(m)]
    base_diag = sum(d * z for d, z in zip(larmor, zdiags))
    cache = {}

    def window(shift):
        key = shift if co_evolve else 0.0
        if key not in cache:
            h = h_int
            if co_evolve:
                h = h + sp.diags(base_diag + shift * zdiag)
            cache[key] = _Propagator(h.tocsr(), tau)
        return cache[key]

    def free(dt, shift):
        return np.exp(-1j * dt * (base_diag + shift * zdiag))

    plus_z = np.outer(_AXES["+z"], _AXES["+z"].conj())
    mixed = reset == "expectation"
    if mixed:
        rho = state.density if state.density is not None else np.outer(state.amplitudes, state.amplitudes.conj())
        rho = rho.copy()
    else:
        if state.amplitudes is None:
            raise ValueError("pure-state modes need a state vector")
        psi = state.amplitudes.copy()
    rng = derive_rng(seed, "trajectory-outcomes", 0) if reset == "trajectory" else None

    p_z = np.empty(steps)
    p_x = np.empty(steps)
    s_pur = np.empty(steps)
    n_pur = np.empty(steps)
    pol = np.empty((steps, m))
    outcomes = np.empty(steps, dtype=int) if reset == "trajectory" else None
    now = state.time
    for n in range(steps):
        start = shot_times[n] - 0.5 * tau if co_evolve else shot_times[n]
        phase = free(start - now, shifts[n])
        prop = window(shifts[n])
        if mixed:
            rho = phase[:, None] * rho * phase.conj()[None, :]
            rho = prop.conjugate(rho)
            _check_norm(np.trace(rho).real)
            cur = SpinEnsembleState(m, density=rho)
        else:
            psi = prop.apply(phase * psi)
            _check_norm(np.linalg.norm(psi))
            cur = SpinEnsembleState(m, amplitudes=psi / np.linalg.norm(psi))
        now = start + tau if co_evolve else start
        rho_s = cur.sensor_density()
        rho_n = cur.nuclear_density()
        p_z[n], p_x[n] = _sensor_probs(rho_s)
        s_pur[n] = float(np.real(np.trace(rho_s @ rho_s)))
        n_pur[n] = float(np.real(np.trace(rho_n @ rho_n)))
        pol[n] = [_nuclear_z(rho_n, k, m) for k in range(m)]

        if reset == "expectation":
            rho = np.kron(plus_z, rho_n)
        elif reset == "trajectory":
            proj = _AXES["+z"] if measure_basis.upper() == "Z" else _AXES["-y"]
            amp = psi.reshape(2, -1)
            kept = proj.conj() @ amp
            p_plus = float(np.real(np.vdot(kept, kept)))
            if rng.random() < p_plus:
                outcomes[n] = 1
            else:
                outcomes[n] = 0
                perp = np.array([-proj[1].conj(), proj[0].conj()])
                kept = perp.conj() @ amp
            kept = kept / np.linalg.norm(kept)
            psi = np.kron(_AXES["+z"], kept)
    final = SpinEnsembleState(m, density=rho, time=now) if mixed else SpinEnsembleState(m, amplitudes=psi / np.linalg.norm(psi), time=now)
    return EvolutionResult(final, shot_times, p_z, p_x, s_pur, n_pur, pol, outcomes, tau)


def _nuclear_z(rho_n, k, m):
    """``<Z_k>`` from the nuclear density matrix."""
    idx = np.arange(2**m)
    sign = 1 - 2 * ((idx >> (m - 1 - k)) & 1)
    return float(np.real(np.sum(sign * np.diag(rho_n))))
