import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from postselect.efficiency import (
    ETA_CRIT,
    Z0,
    CurvePoint,
    apply_efficiency,
    apply_efficiency_array,
    chsh_efficiency_bound,
    chsh_power,
    chsh_quartic,
    crossing,
    hardy_family_analytic,
    hardy_family_power,
    largest_real_root,
    power_curves,
    scaling_fit,
    scaling_fit_points,
    write_two_column,
    z_of_eta,
)
from postselect.errors import ParameterError, ShapeError
from postselect.quantum import (
    OptimizerOptions,
    behaviour_from_strategy,
    chart_size,
    hardy_measurement_family,
    nelder_mead,
    parameterize,
)
from postselect.scenario import Behaviour, Scenario, chsh_game, gamma, hardy_game, omega

from conftest import CHSH_SC, random_behaviour


def test_map_examples():
    p = np.array([1.0, 0, 0, 0])
    assert np.allclose(apply_efficiency_array(p, 0.5, 1), [0.25, 0.25, 0.25, 0.25])
    assert np.allclose(apply_efficiency_array(p, 0.0, 1), [0, 0, 0, 1])
    q = np.array([0.1, 0.2, 0.3, 0.4])
    assert np.array_equal(apply_efficiency_array(q, 1.0, 1), q)


def test_map_requires_binary_outcomes():
    P = Behaviour(Scenario(2, 2, 3, 2), np.full(24, 1 / 6))
    with pytest.raises(ShapeError):
        apply_efficiency(P, 0.9)
    with pytest.raises(ParameterError):
        apply_efficiency(random_behaviour(np.random.default_rng(0)), 1.5)


def test_map_properties_on_random_behaviours():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        P, Q = random_behaviour(rng), random_behaviour(rng)
        e1, e2, lam = rng.random(3)
        EP = apply_efficiency(P, e1).p
        # normalisation per input pair
        assert np.allclose(EP.reshape(4, 4).sum(axis=1), 1.0, atol=1e-12)
        # affinity
        mix = Behaviour(CHSH_SC, lam * P.p + (1 - lam) * Q.p)
        assert np.allclose(apply_efficiency(mix, e1).p, lam * EP + (1 - lam) * apply_efficiency(Q, e1).p, atol=1e-12)
        # composition
        assert np.allclose(apply_efficiency(apply_efficiency(P, e2), e1).p, apply_efficiency(P, e1 * e2).p, atol=1e-12)


def test_quartic_examples():
    assert largest_real_root([1, 0, 0, 0, -1]) == pytest.approx(1.0, abs=1e-12)
    # (l - 3)^2 (l^2 + 1) has a double root at 3
    assert largest_real_root(np.polymul([1, -6, 9], [1, 0, 1])) == pytest.approx(3.0, abs=1e-7)
    # at detuning 0 the quartic factors as (l^2 - 8)(l + 2)^2
    assert np.allclose(chsh_quartic(0.0), np.polymul([1, 0, -8], [1, 4, 4]))
    with pytest.raises(ParameterError):
        largest_real_root([1, 0, 1])


def quartic_residual(eta):
    s = 2 * (1 - eta) / eta
    r = chsh_efficiency_bound(eta).root
    return abs(np.polyval(chsh_quartic(s), r)), r


def test_chsh_bound_endpoints():
    res, r = quartic_residual(1.0)
    assert r == pytest.approx(2 * math.sqrt(2), abs=1e-12) and res <= 1e-9
    res, r = quartic_residual(ETA_CRIT + 1e-9)
    assert r == pytest.approx(4.0, abs=1e-6) and res <= 1e-9
    assert chsh_efficiency_bound(1.0).value == pytest.approx((2 + math.sqrt(2)) / 4, abs=1e-9)
    b = chsh_efficiency_bound(ETA_CRIT, allow_boundary=True)
    assert b.value == 0.75 and b.at_boundary
    for bad in (ETA_CRIT, 0.5, 1.01):
        with pytest.raises(ParameterError):
            chsh_efficiency_bound(bad)


def test_chsh_bound_is_increasing():
    etas = np.linspace(ETA_CRIT + 1e-6, 1.0, 100)
    vals = [chsh_efficiency_bound(e).value for e in etas]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[0] >= 0.75


def best_lossy_chsh(eta, restarts=4):
    game = chsh_game()
    n = chart_size(2, 2, 2)
    rng = np.random.default_rng(1)

    def objective(x):
        P = apply_efficiency(behaviour_from_strategy(parameterize(x, 2, 2, 2)), eta)
        return -omega(game, P)

    return max(-nelder_mead(objective, rng.uniform(-np.pi, np.pi, n), OptimizerOptions(max_evals=4000)).fun
               for _ in range(restarts))


@pytest.mark.parametrize("eta", [0.7, 0.8, 0.9, 1.0])
def test_chsh_bound_dominates_optimised_qubits(eta):
    bound = chsh_efficiency_bound(eta).value
    found = best_lossy_chsh(eta)
    assert bound >= found - 1e-4
    assert found >= bound - 1e-3


def test_hardy_family_examples():
    v = hardy_family_analytic(1.0, Z0)
    assert v.omega == pytest.approx(1.0, abs=1e-12)
    assert v.gamma == pytest.approx((5 * math.sqrt(5) - 11) / 8, abs=1e-12)
    assert hardy_family_analytic(0.9, 0.0).gamma == 0.0
    assert not hardy_family_analytic(0.5, 0.3).nonlocal_
    with pytest.raises(ParameterError):
        hardy_family_analytic(0.9, 1.0)


def test_analytic_matches_composition():
    game = hardy_game()
    for eta in np.linspace(0.05, 1.0, 20):
        for z in np.linspace(0.02, 0.98, 20):
            P = apply_efficiency(behaviour_from_strategy(hardy_measurement_family(z)), eta)
            v = hardy_family_analytic(eta, z)
            # gamma of the game averages over the four input pairs
            assert abs(gamma(game, P) - v.gamma) <= 1e-10
            assert abs(omega(game, P) - v.omega) <= 1e-10


def test_z_of_eta():
    assert z_of_eta(1.0) == pytest.approx(Z0, abs=1e-15)
    assert z_of_eta(ETA_CRIT) == 0.0
    assert z_of_eta(5 / 6) == pytest.approx(Z0 / 2, abs=1e-15)
    with pytest.raises(ParameterError):
        z_of_eta(0.5)


def test_family_powers_vanish_at_threshold():
    assert hardy_family_power(ETA_CRIT + 1e-12) < 1e-40
    assert chsh_power(ETA_CRIT + 1e-9) < 1e-40
    assert hardy_family_power(1.0) == pytest.approx((5 * math.sqrt(5) - 11) / 8, abs=1e-12)


def test_curves_and_crossing():
    etas = np.linspace(0.7, 1.0, 61)
    pts = power_curves(etas)
    assert all(p.w_chsh > 0 for p in pts)
    assert pts[0].ratio > 1 > pts[-1].ratio
    x = crossing(pts)
    assert 0.7 < x < 1.0
    assert crossing([CurvePoint(0.8, 0.0, 1.0), CurvePoint(0.9, 0.0, 1.0)]) is None


def test_power_curve_errors():
    with pytest.raises(ParameterError):
        power_curves([])
    with pytest.raises(ParameterError):
        power_curves([0.6])
    with pytest.raises(ParameterError):
        power_curves([0.8], mode="other")


def test_scaling_fits():
    fh = scaling_fit(hardy_family_power)
    assert fh.exponent == pytest.approx(4.0, abs=0.1)
    # closed forms are the 4th and 6th derivatives at the threshold
    assert fh.coefficient == pytest.approx((2781 - 1215 * math.sqrt(5)) / (4 * math.log(2)) / math.factorial(4), rel=0.05)
    fc = scaling_fit(chsh_power)
    assert fc.exponent == pytest.approx(6.0, abs=0.2)
    assert fc.coefficient == pytest.approx(87480 / math.log(2) / math.factorial(6), rel=0.1)
    fr = scaling_fit(lambda e: hardy_family_power(e) / chsh_power(e))
    assert fr.exponent == pytest.approx(-2.0, abs=0.3)


def test_scaling_fit_exact_power_law():
    d = np.geomspace(1e-3, 1e-1, 30)
    f = scaling_fit_points(d, 2.5 * d**3)
    assert f.exponent == pytest.approx(3.0, abs=1e-12)
    assert f.coefficient == pytest.approx(2.5, rel=1e-12)
    assert f.derivative_constant() == pytest.approx(15.0, rel=1e-12)


def test_scaling_fit_rejects_bad_input():
    with pytest.raises(ParameterError):
        scaling_fit_points([1e-3], [1.0])
    with pytest.raises(ParameterError):
        scaling_fit_points([1e-3, 1e-2], [0.0, 1.0])
    with pytest.raises(ParameterError):
        scaling_fit_points(np.geomspace(1e-3, 1e-1, 20), np.exp(np.sin(np.arange(20.0)) * 5))


def test_optimised_ratio_decreases_below_095():
    etas = np.linspace(0.72, 0.95, 12)
    pts = power_curves(etas, mode="optimized", options=OptimizerOptions(restarts=2))
    ratios = [p.ratio for p in pts]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    # the optimiser never does worse than the analytic family
    assert all(p.w_hardy >= hardy_family_power(p.eta) - 1e-9 for p in pts)


def test_write_two_column(tmp_path):
    path = tmp_path / "c.dat"
    write_two_column(path, [0.7, 0.8], [1e-5, 2e-5])
    rows = [tuple(map(float, line.split())) for line in path.read_text().splitlines()]
    assert rows == [(0.7, 1e-5), (0.8, 2e-5)]


@settings(max_examples=100)
@given(eta=st.floats(0.0, 1.0), seed=st.integers(0, 2**32 - 1))
def test_map_keeps_entries_in_unit_interval(eta, seed):
    P = random_behaviour(np.random.default_rng(seed))
    q = apply_efficiency(P, eta).p
    assert np.all(q >= -1e-15) and np.all(q <= 1 + 1e-15)
