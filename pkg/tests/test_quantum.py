from functools import reduce

import numpy as np
import pytest
from scipy.linalg import expm

from nvnmr import quantum as q

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
KET = {"+z": np.array([1, 0], dtype=complex), "+x": np.array([1, 1], dtype=complex) / np.sqrt(2)}


def kron(*ops):
    return reduce(np.kron, ops)


def site(op, k, n):
    return kron(*[op if j == k else I2 for j in range(n)])


def precessed_plus_x(delta, t):
    return expm(-0.5j * delta * t * Z) @ KET["+x"]


# -- coherence ---------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_coherence_against_kron_oracle(n):
    rng = np.random.default_rng(n)
    g, tau, delta = rng.uniform(0.5, 2), rng.uniform(0.05, 0.3), rng.uniform(1, 5)
    nq = n + 1
    coupling = sum(site(Z, 0, nq) @ site(X, m, nq) for m in range(1, nq))
    u = expm(-1j * tau * g * coupling)
    for t in rng.uniform(0, 10, 5):
        psi = kron(KET["+x"], *[precessed_plus_x(delta, t)] * n)
        out = (u @ psi).reshape(2, -1)
        rho_s = out @ out.conj().T
        assert abs(rho_s[0, 1] - q.coherence_closed_form(n, g, tau, delta, t)) < 1e-8


def test_coherence_trivial_and_large_n():
    assert q.coherence_closed_form(5, 0.0, 0.1, 3.0, 1.7) == pytest.approx(0.5)
    n = 1000
    g = 1e-2 / (n * 0.1)
    t = np.linspace(0, 20, 50)
    diff = np.abs(q.coherence_closed_form(n, g, 0.1, 1.3, t) - q.semiclassical_coherence(n, g, 0.1, 1.3, t))
    assert diff.max() < 1e-3
    with pytest.raises(ValueError):
        q.coherence_closed_form(0, 1.0, 0.1, 1.0, 1.0)


def test_semiclassical_convergence():
    ngt, tau, delta = 0.3, 0.1, 1.1
    t = np.linspace(0, 10, 200)
    errs = []
    for n in (50, 100, 200, 400):
        g = ngt / (n * tau)
        errs.append(np.max(np.abs(q.coherence_closed_form(n, g, tau, delta, t)
                                  - q.semiclassical_coherence(n, g, tau, delta, t))))
    for a, b in zip(errs, errs[1:]):
        assert a / b >= 1.8


# -- two-spin forms --------------------------------------------------------------

def two_spin_oracle(g, tau, d1, d2, t, hamiltonian, basis):
    if hamiltonian == "Sensing":
        h = g * (kron(X, X, I2) + kron(X, I2, X))
    else:
        h = g / np.sqrt(2) * (kron(X, X, I2) + kron(Y, Y, I2) + kron(X, I2, X) + kron(Y, I2, Y))
    psi = kron(KET["+z"], precessed_plus_x(d1, t), precessed_plus_x(d2, t))
    out = (expm(-1j * tau * h) @ psi).reshape(2, -1)
    rho_s = out @ out.conj().T
    if basis == "Z":
        return rho_s[0, 0].real
    minus_y = np.array([1, -1j]) / np.sqrt(2)
    return (minus_y.conj() @ rho_s @ minus_y).real


@pytest.mark.parametrize("hamiltonian", ["Sensing", "FlipFlop"])
@pytest.mark.parametrize("basis", ["Z", "X"])
def test_twospin_against_oracle(hamiltonian, basis):
    rng = np.random.default_rng(7)
    for _ in range(10):
        g, tau, d1, d2, t = rng.uniform(0.1, 3), rng.uniform(0.01, 0.5), *rng.uniform(-5, 5, 2), rng.uniform(0, 20)
        got = q.twospin_probabilities(g, tau, d1, d2, t, hamiltonian, basis)
        assert got == pytest.approx(two_spin_oracle(g, tau, d1, d2, t, hamiltonian, basis), abs=1e-8)


def test_flipflop_z_only_sees_difference():
    rng = np.random.default_rng(3)
    for _ in range(50):
        t, eps = rng.uniform(0, 50), rng.normal(0, 20)
        d1, d2 = 4.0, 2.5
        if (d1 + eps) - (d2 + eps) != d1 - d2:
            continue
        assert (q.twospin_probabilities(0.7, 0.1, d1 + eps, d2 + eps, t)
                == q.twospin_probabilities(0.7, 0.1, d1, d2, t))


def test_twospin_unknown_combination():
    with pytest.raises(ValueError):
        q.twospin_probabilities(1, 0.1, 1, 2, 0.0, "Selective", "Z")


def test_selective_probability():
    assert q.selective_probability(0.0, 0.1, 3.0, 1.0, 2.3) == 0.5
    g, tau, d1, d2 = 0.8, 0.2, 3.0, 1.0
    h = g / np.sqrt(2) * (kron(X, X, I2) + kron(X, I2, X) + kron(Y, Y, I2) - kron(Y, I2, Y))
    minus_y = np.array([1, -1j]) / np.sqrt(2)
    for t in (0.3, 1.1, 2.9):
        psi = kron(KET["+x"], precessed_plus_x(d1, t), precessed_plus_x(d2, t))
        out = (expm(-1j * tau * h) @ psi).reshape(2, -1)
        rho_s = out @ out.conj().T
        oracle = (minus_y.conj() @ rho_s @ minus_y).real
        assert q.selective_probability(g, tau, d1, d2, t) == pytest.approx(oracle, abs=1e-8)


# -- many nuclei ---------------------------------------------------------------

def test_multinucleus_trivial():
    spec = q.NucleusSpec([0.0, 0.0], [1.0, 2.0])
    t = np.linspace(0, 5, 9)
    np.testing.assert_allclose(q.multinucleus_readout(spec, 0.1, t, "X"), 1.0)
    np.testing.assert_allclose(q.multinucleus_readout(spec, 0.1, t, "Y"), 0.5)
    with pytest.raises(ValueError):
        q.multinucleus_readout(spec, 0.1, t, "Z")


def test_multinucleus_two_spin_identity():
    # X readout of two nuclei expands into cosines of sums and differences
    g1, g2, tau, d1, d2 = 0.7, 0.4, 0.1, 3.0, 2.2
    spec = q.NucleusSpec([g1, g2], [d1, d2])
    t = np.linspace(0, 30, 301)
    phi = g1 * tau * np.cos(d1 * t) + g2 * tau * np.cos(d2 * t)
    expected = np.cos(phi) ** 2
    np.testing.assert_allclose(q.multinucleus_readout(spec, tau, t, "X"), expected, atol=1e-12)


def test_multinucleus_xy_symmetry():
    spec = q.NucleusSpec([0.5, 0.9, 0.2], [1.0, 2.0, 3.5])
    neg = q.NucleusSpec([-0.5, -0.9, -0.2], [1.0, 2.0, 3.5])
    t = np.linspace(0, 10, 57)
    np.testing.assert_allclose(q.multinucleus_readout(spec, 0.1, t, "X"),
                               q.multinucleus_readout(neg, 0.1, t, "X"), atol=1e-15)
    np.testing.assert_allclose(q.multinucleus_readout(spec, 0.1, t, "Y") - 0.5,
                               0.5 - q.multinucleus_readout(neg, 0.1, t, "Y"), atol=1e-15)


# -- exact evolution -------------------------------------------------------------

def test_nucleus_spec_limits():
    with pytest.raises(ValueError):
        q.NucleusSpec([1.0] * 13, [1.0] * 13)
    with pytest.raises(ValueError):
        q.NucleusSpec([1.0, 2.0], [1.0])
    with pytest.raises(ValueError, match="overflow"):
        q.SpinEnsembleState(13, amplitudes=np.ones(2**14) / 2**7)


def test_expectation_mode_nucleus_limit():
    spec = q.NucleusSpec([1.0] * 9, np.linspace(1, 2, 9))
    state = q.SpinEnsembleState.initial(spec)
    with pytest.raises(ValueError, match="at most"):
        q.evolve_exact(state, spec, "FlipFlop", 0.1, 0.1, 2)


def test_zero_coupling_is_static():
    spec = q.NucleusSpec([1.0, 1.0], [2.0, 3.0])
    res = q.evolve_exact(q.SpinEnsembleState.initial(spec), spec, "FlipFlop", 0.0, 0.1, 50)
    np.testing.assert_allclose(res.prob_z, 1.0, atol=1e-14)
    np.testing.assert_allclose(res.prob_x, 0.5, atol=1e-14)
    np.testing.assert_allclose(res.sensor_purity, 1.0, atol=1e-14)


@pytest.mark.parametrize("hamiltonian", ["Sensing", "FlipFlop"])
def test_single_shot_matches_closed_forms(hamiltonian):
    g, tau, d1, d2 = 1.3, 0.2, 2.7, 1.9
    spec = q.NucleusSpec([1.0, 1.0], [d1, d2])
    for t in (0.4, 3.3, 7.1):
        res = q.evolve_exact(q.SpinEnsembleState.initial(spec), spec, hamiltonian, g, tau, 1,
                             shot_times=[t], reset="none")
        assert res.prob_z[0] == pytest.approx(q.twospin_probabilities(g, tau, d1, d2, t, hamiltonian, "Z"), abs=1e-8)
        assert res.prob_x[0] == pytest.approx(q.twospin_probabilities(g, tau, d1, d2, t, hamiltonian, "X"), abs=1e-8)


def test_large_register_uses_sparse_path():
    # 12 qubits exceed the dense eigendecomposition limit
    spec = q.NucleusSpec(np.ones(11), np.linspace(1, 2, 11))
    res = q.evolve_exact(q.SpinEnsembleState.initial(spec), spec, "Sensing", 0.1, 0.1, 2, reset="none")
    assert np.all((res.prob_z >= 0) & (res.prob_z <= 1))


@pytest.fixture(scope="module")
def purity_runs():
    spec = q.NucleusSpec([1.0, 1.0], [2.0, 3.1])
    out = {}
    for h in ("FlipFlop", "Sensing"):
        out[h] = q.evolve_exact(q.SpinEnsembleState.initial(spec), spec, h, 0.5, 0.1, 3000)
    return out


def test_flipflop_polarises_nuclei(purity_runs):
    res = purity_runs["FlipFlop"]
    pol = res.polarization.mean(axis=1)
    assert np.all(np.diff(pol) >= -1e-12)
    assert pol[-1] > 0.999
    assert res.sensor_purity[-1] > 1 - 1e-6


def test_sensing_hamiltonian_loses_purity(purity_runs):
    res = purity_runs["Sensing"]
    assert res.sensor_purity[-1] < 1 - 1e-3
    assert np.abs(res.polarization[-1]).max() < 1e-6


def test_trajectory_mode_reproducible():
    spec = q.NucleusSpec([1.0, 0.5], [2.0, 3.0])
    runs = [q.evolve_exact(q.SpinEnsembleState.initial(spec), spec, "FlipFlop", 1.0, 0.2, 40,
                           reset="trajectory", measure_basis=b, seed=5) for b in ("Z", "X", "X")]
    for r in runs:
        assert set(np.unique(r.outcomes)) <= {0, 1}
        assert r.state.is_pure()
    np.testing.assert_array_equal(runs[1].outcomes, runs[2].outcomes)


def test_co_evolve_and_detuning_shifts():
    spec = q.NucleusSpec([1.0, 1.0], [2.0, 1.0])
    state = q.SpinEnsembleState.initial(spec)
    base = q.evolve_exact(state, spec, "FlipFlop", 0.3, 0.05, 30, reset="none")
    co = q.evolve_exact(state, spec, "FlipFlop", 0.3, 0.05, 30, reset="none", co_evolve=True)
    # precession during a short window is a small correction
    assert np.max(np.abs(co.prob_z - base.prob_z)) < 1e-2
    shifted = q.evolve_exact(state, spec, "FlipFlop", 0.3, 0.05, 30, reset="none",
                             detuning_shifts=np.full(30, 0.0))
    np.testing.assert_allclose(shifted.prob_z, base.prob_z, atol=1e-14)
    with pytest.raises(ValueError):
        q.evolve_exact(state, spec, "FlipFlop", 0.3, 0.05, 30, detuning_shifts=np.zeros(3))
    tr = base.trace("Z")
    assert tr.values.size == 30
