import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import j0, j1

from nvnmr import fisher as fi
from nvnmr.signal import ProtocolParams

GOLDEN = (np.sqrt(5) - 1) / 2


def scenario(readout, g=1.0, tau=0.05, d1=3.3, d2=2.1, n=200, amps=None, noisy=True, width=0.0):
    return fi.FisherScenario(readout, ProtocolParams(g, tau, d1, d2, n_shots=n), amplitudes=amps,
                             noisy_omega_s=noisy, delta_width=width)


ALL = [(r, noisy, amps) for r in fi.Readout for noisy in (True, False) for amps in (None, (1.0, 0.6))]


def test_bessel_reference_values():
    # tabulated J0, J1
    assert j0(1.0) == pytest.approx(0.7651976865579666, abs=1e-15)
    assert j1(1.0) == pytest.approx(0.4400505857449335, abs=1e-15)
    assert j0(2.404825557695773) == pytest.approx(0.0, abs=1e-15)
    assert j1(3.831705970207512) == pytest.approx(0.0, abs=1e-15)
    assert j0(10.0) == pytest.approx(-0.2459357644513483, abs=1e-15)


def test_bessel_ratio_continuity():
    x = np.array([1e-3 * (1 - 1e-9), 1e-3 * (1 + 1e-9)])
    r = fi.bessel_ratio(x)
    assert r[0] == pytest.approx(r[1], rel=1e-9)
    assert fi.bessel_ratio(0.0) == pytest.approx(0.5)


def test_scenario_validation():
    with pytest.raises(ValueError):
        scenario("Nope")
    with pytest.raises(ValueError):
        scenario("SensingX", amps=(-1.0, 1.0))
    with pytest.raises(ValueError):
        scenario("SensingX", d1=1.0, d2=2.0)


def test_zero_shots():
    res = fi.fisher_information_sum(scenario("SensingX"), 0)
    assert res.total == 0 and res.per_shot.size == 0


@pytest.mark.parametrize("readout", ["SensingX", "HartmannHahnZ"])
@pytest.mark.parametrize("noisy", [True, False])
def test_zero_beat_gives_zero(readout, noisy):
    sc = scenario(readout, d1=2.0, d2=2.0, noisy=noisy)
    assert fi.fisher_information_sum(sc, 300).total == 0.0


@pytest.mark.parametrize("readout,noisy,amps", ALL)
def test_analytic_derivative_vs_finite_difference(readout, noisy, amps):
    rng = np.random.default_rng(hash((readout, noisy, amps)) % 2**32)
    sc = scenario(readout, g=rng.uniform(0.5, 3), tau=rng.uniform(0.02, 0.1),
                  d1=rng.uniform(3, 6), d2=rng.uniform(0.5, 2.5), amps=amps, noisy=noisy)
    t = np.sort(rng.uniform(0, 100 * sc.params.tau, 100))
    h = 1e-6 * sc.omega_r
    fd = (fi.scenario_probability(sc.with_frequencies(sc.omega_r + h), t)
          - fi.scenario_probability(sc.with_frequencies(sc.omega_r - h), t)) / (2 * h)
    an = fi.probability_derivative(sc, t)
    scale = np.max(np.abs(an)) if np.any(an) else 1.0
    np.testing.assert_allclose(an, fd, rtol=1e-5, atol=1e-5 * scale)


@pytest.mark.parametrize("readout,noisy,amps", ALL)
def test_total_is_bernoulli_sum(readout, noisy, amps):
    sc = scenario(readout, amps=amps, noisy=noisy)
    res = fi.fisher_information_sum(sc, 200)
    p, dp = fi.scenario_probability(sc, res.times), fi.probability_derivative(sc, res.times)
    mask = p * (1 - p) > 1e-9
    direct = np.zeros_like(p)
    direct[mask] = dp[mask] ** 2 / (p[mask] * (1 - p[mask]))
    np.testing.assert_allclose(res.per_shot[mask], direct[mask], rtol=1e-8, atol=1e-14)
    assert res.total == pytest.approx(res.per_shot.sum())
    assert np.all(res.per_shot >= 0)


def test_additivity_over_shots():
    sc = scenario("SensingX", noisy=False)
    a = fi.fisher_information_sum(sc, 150)
    b = fi.fisher_information_sum(sc, 300)
    np.testing.assert_array_equal(b.per_shot[:150], a.per_shot)


def test_degenerate_shots_contribute_limit():
    # P = 0 exactly at t with cos(omega_r t / 2) = 0 for the noisy sensing model
    sc = scenario("SensingX", tau=0.25, d1=2 * np.pi + 1.0, d2=1.0)
    res = fi.fisher_information_sum(sc, 8)
    assert res.degenerate_shots >= 1
    assert np.all(np.isfinite(res.per_shot))


def test_y_readout_carries_nothing_when_noisy():
    for r in ("SensingY", "MultiNucleusY"):
        res = fi.fisher_information_sum(scenario(r), 100)
        assert res.total == 0 and res.notes


@pytest.mark.parametrize("amps", [None, (0.02, 0.013)])
def test_hh_equals_sensing_at_small_phase(amps):
    sc_s = scenario("SensingX", g=0.02, tau=0.05, amps=amps)
    sc_h = scenario("HartmannHahnZ", g=0.02, tau=0.05, amps=amps)
    a = fi.fisher_information_sum(sc_s, 500).total
    b = fi.fisher_information_sum(sc_h, 500).total
    assert a == pytest.approx(b, rel=0.01)


def _phase_avg_total(sc, n, draws=64):
    period = 2 * np.pi / sc.params.tau
    return np.mean([fi.fisher_information_sum(
        sc.with_frequencies(period * ((j + 1) * GOLDEN % 1), sc.omega_s + period * ((j + 1) * np.sqrt(2) % 1)), n).total
        for j in range(draws)])


def test_noisy_penalty_grows_with_coupling():
    ratios = []
    for gt in (1.0, 3.0, 10.0, 30.0):
        noisy = scenario("SensingX", g=gt / 0.05, noisy=True)
        clean = scenario("SensingX", g=gt / 0.05, noisy=False)
        ratios.append(_phase_avg_total(clean, 400) / _phase_avg_total(noisy, 400))
    assert all(b > a for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] > 5


def test_fit_scaling_weak():
    sc = scenario("SensingX", g=0.1, tau=0.01, n=1000)
    fit = fi.fit_scaling(sc, [100, 300, 1000, 3000, 10000], [0.003, 0.01, 0.03])
    assert fit.n_exponent == pytest.approx(3.0, abs=0.1)
    assert fit.tau_exponent == pytest.approx(4.0, abs=0.15)
    assert fit.prefactor == pytest.approx(0.1**2 / 3, rel=0.2)


@pytest.mark.parametrize("g", [0.1, 1000.0])
def test_fit_scaling_hartmann_hahn_any_coupling(g):
    sc = scenario("HartmannHahnZ", g=g, tau=0.01, n=1000)
    fit = fi.fit_scaling(sc, [100, 1000, 10000], [0.01, 0.0316, 0.1])
    assert fit.n_exponent == pytest.approx(3.0, abs=0.1)
    assert fit.tau_exponent == pytest.approx(4.0, abs=0.15)


def test_multinucleus_reads_k_as_g():
    sc = scenario("MultiNucleusX", g=0.1, tau=0.01, n=1000, noisy=False)
    fit = fi.fit_scaling(sc, [100, 1000, 10000], [0.003, 0.03])
    assert fit.prefactor == pytest.approx(0.1**2 / 3, rel=0.2)


def test_fit_scaling_degenerate_sweep():
    sc = scenario("SensingX")
    with pytest.raises(ValueError):
        fi.fit_scaling(sc, [100, 200], [0.01, 0.1])
    with pytest.raises(ValueError):
        fi.fit_scaling(sc, [100], [0.01, 0.1])


def test_fisher_matrix_closed_form():
    g1, g2, tau, n = 1.3, 0.4, 0.02, 500
    m, i_r = fi.fisher_matrix_two_params(g1, g2, tau, n)
    assert i_r == pytest.approx(1 / np.linalg.inv(m)[0, 0], rel=1e-12)
    assert i_r == pytest.approx((2 / 3) * g1**2 * g2**2 / (g1**2 + g2**2) * tau**4 * n**3, rel=1e-12)
    _, i_eq = fi.fisher_matrix_two_params(0.7, 0.7, tau, n)
    assert i_eq == pytest.approx(0.7**2 * tau**4 * n**3 / 3, rel=1e-12)
    _, i_min = fi.fisher_matrix_two_params(1e-4, 1.0, tau, n)
    assert i_min == pytest.approx((2 / 3) * 1e-8 * tau**4 * n**3, rel=1e-6)
    with pytest.raises(ValueError, match="singular"):
        fi.fisher_matrix_two_params(0.0, 0.0, tau, n)


def sensing_two_param(g1, g2, tau):
    def prob(theta, t):
        wr, ws = theta
        return np.sin(tau * (g1 * np.sin((ws + wr / 2) * t) + g2 * np.sin((ws - wr / 2) * t))) ** 2
    return prob


def test_fisher_matrix_numeric_oracle():
    g1, g2, tau, n = 1.0, 0.6, 0.05, 100
    t = tau * np.arange(1, n + 1)
    prob = sensing_two_param(g1, g2, tau)
    draws = 256
    acc = np.zeros((2, 2))
    for j in range(draws):
        theta = (np.pi / tau * ((j + 1) * GOLDEN % 1), np.pi / tau * ((j + 1) * np.sqrt(2) % 1))
        acc += fi.fisher_matrix_numeric(prob, theta, t)
    acc /= draws
    m, i_r = fi.fisher_matrix_two_params(g1, g2, tau, n)
    assert 1 / np.linalg.inv(acc)[0, 0] == pytest.approx(i_r, rel=0.02)
    np.testing.assert_allclose(acc, m, rtol=0.05, atol=0.05 * m[0, 0])


def simpson_f(c, n=20_001):
    x = np.linspace(0, 2 * np.pi, n)
    return integrate.simpson(np.sin(x) ** 2 / (1 + c * c + 2 * c * np.cos(x)) ** 1.5, x=x) / (2 * np.pi)


def test_f_c_values():
    assert fi.f_c_integral(1e-8) == pytest.approx(0.5, abs=1e-8)
    assert fi.f_c_integral(0.5) == pytest.approx(simpson_f(0.5), abs=1e-7)
    for c in (0.1, 0.3, 0.5, 0.7, 0.9):
        assert 0.5 < fi.f_c_integral(c) < 2
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            fi.f_c_integral(bad)


@settings(max_examples=30, deadline=None)
@given(c1=st.floats(0.01, 0.98), c2=st.floats(0.01, 0.98))
def test_f_c_monotone(c1, c2):
    if abs(c1 - c2) < 1e-6:
        return
    lo, hi = sorted((c1, c2))
    assert fi.f_c_integral(lo) < fi.f_c_integral(hi)
