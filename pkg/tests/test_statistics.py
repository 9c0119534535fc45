import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from postselect.errors import ParameterError, ShapeError
from postselect.io import shalm_counts
from postselect.scenario import Scenario, chsh_game, hardy_game
from postselect.statistics import (
    CountsTable,
    NoPostSelectedDataError,
    analyze_counts,
    bayes_factor,
    binomial_tail,
    chernoff_p_bound,
    expected_bayes_exponent,
    kl_divergence,
    log2_bayes_factor,
    statistical_power,
)

from conftest import CHSH_SC

mpmath.mp.dps = 40


def kl_oracle(p, q):
    p, q = mpmath.mpf(p), mpmath.mpf(q)
    t1 = p * mpmath.log(p / q, 2) if p > 0 else 0
    t2 = (1 - p) * mpmath.log((1 - p) / (1 - q), 2) if p < 1 else 0
    return float(t1 + t2)


def test_kl_examples():
    assert kl_divergence(0.5, 0.5) == 0.0
    assert kl_divergence(1.0, 0.5) == pytest.approx(1.0, abs=1e-15)
    assert kl_divergence((2 + math.sqrt(2)) / 4, 0.75) == pytest.approx(0.0462738468534, abs=1e-12)
    assert kl_divergence(1.0, 0.0) == math.inf
    assert kl_divergence(0.0, 0.0) == 0.0


def test_kl_rejects_out_of_range():
    with pytest.raises(ParameterError):
        kl_divergence(1.2, 0.5)
    with pytest.raises(ParameterError):
        kl_divergence(0.5, -0.1)


@settings(max_examples=300)
@given(p=st.floats(0, 1), q=st.floats(1e-6, 1 - 1e-6))
def test_kl_matches_high_precision(p, q):
    ref = kl_oracle(p, q)
    assert kl_divergence(p, q) == pytest.approx(ref, rel=1e-9, abs=1e-15)


@settings(max_examples=200)
@given(q=st.floats(0.01, 0.99), a=st.floats(0, 1), b=st.floats(0, 1))
def test_kl_monotone_away_from_q(q, a, b):
    # D(p||q) grows as p moves away from q on either side
    lo, hi = sorted((a, b))
    if lo >= q:
        assert kl_divergence(lo, q) <= kl_divergence(hi, q) + 1e-15
    if hi <= q:
        assert kl_divergence(hi, q) <= kl_divergence(lo, q) + 1e-15


def test_ideal_hardy_power():
    g, w = (5 * math.sqrt(5) - 11) / 2, 1.0
    assert statistical_power(g / 4, w, 0.5).value == pytest.approx((5 * math.sqrt(5) - 11) / 8, abs=1e-12)


def test_power_below_local_is_flagged_zero():
    p = statistical_power(0.3, 0.6, 0.75)
    assert p.value == 0.0 and p.below_local
    assert statistical_power(0.0, None, 0.75).value == 0.0
    with pytest.raises(ParameterError):
        statistical_power(1.5, 0.9, 0.75)
    with pytest.raises(ParameterError):
        statistical_power(0.5, 0.9, 1.0)


def test_bayes_log_matches_direct_product():
    rng = np.random.default_rng(7)
    for _ in range(200):
        t = int(rng.integers(1, 61))
        k = int(rng.integers(0, t + 1))
        wl, wa = rng.uniform(0.05, 0.95, 2)
        direct = (wl**k * (1 - wl) ** (t - k)) / (wa**k * (1 - wa) ** (t - k))
        assert bayes_factor(k, t, wl, wa) == pytest.approx(direct, rel=1e-10)


def test_bayes_edge_alternatives():
    assert log2_bayes_factor(0, 10, 0.5, 0.0) == pytest.approx(-10.0)
    assert log2_bayes_factor(3, 10, 0.5, 0.0) == math.inf
    assert bayes_factor(10, 10, 0.5, 1.0) == pytest.approx(2.0**-10)
    with pytest.raises(ParameterError):
        log2_bayes_factor(11, 10, 0.5, 0.6)


def test_expected_exponent():
    assert expected_bayes_exponent(100, 0.5, 1.0, 0.5) == pytest.approx(50.0)


def test_chernoff_dominates_exact_tail():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        t = int(rng.integers(1, 2001))
        wl = float(rng.uniform(0.05, 0.95))
        k = int(rng.integers(math.ceil(wl * t), t + 1))
        assert chernoff_p_bound(k, t, wl) >= binomial_tail(k, t, wl) * (1 - 1e-12)


def test_chernoff_rejects_low_rate():
    with pytest.raises(ParameterError):
        chernoff_p_bound(1, 10, 0.5)
    with pytest.raises(ParameterError):
        chernoff_p_bound(1, 0, 0.5)


def test_shalm_statistics():
    counts = shalm_counts()
    assert counts.n == 177358351
    h = analyze_counts(hardy_game(), counts)
    c = analyze_counts(chsh_game(), counts)
    assert (h.t, h.k) == (12127, 6378)
    assert (c.t, c.k) == (177358351, 133027048)
    assert h.bayes_factor == pytest.approx(8.174e-8, rel=1e-2)
    assert c.bayes_factor == pytest.approx(0.3563, rel=1e-3)
    assert h.per_round_exponent == pytest.approx(1.327e-7, rel=5e-3)
    assert c.per_round_exponent == pytest.approx(8.399e-9, rel=5e-3)
    assert 15.5 <= h.per_round_exponent / c.per_round_exponent <= 16.3


def test_doubling_counts_squares_bayes_factor():
    counts = shalm_counts()
    for game in (hardy_game(), chsh_game()):
        k1 = analyze_counts(game, counts).log2_bayes_factor
        k2 = analyze_counts(game, counts.scaled(2)).log2_bayes_factor
        assert k2 == pytest.approx(2 * k1, rel=1e-12)


def test_report_as_dict_fields():
    d = analyze_counts(hardy_game(), shalm_counts()).as_dict()
    assert {"n", "t", "k", "bayes_factor", "chernoff_p_bound", "per_round_exponent"} <= set(d)


def test_no_post_selected_rounds():
    c = np.zeros(16, dtype=int)
    c[3] = 10  # (x, y) = (0, 0) with outcome (1, 1): never post-selected by Hardy
    with pytest.raises(NoPostSelectedDataError):
        analyze_counts(hardy_game(), CountsTable(CHSH_SC, c))


def test_below_local_has_no_p_bound():
    c = np.zeros(16, dtype=int)
    c[[0, 1, 2, 3]] = 25  # uniform outcomes on (0, 0)
    rep = analyze_counts(chsh_game(), CountsTable(CHSH_SC, c))
    assert rep.below_local and rep.chernoff_p_bound is None


def test_counts_validation():
    with pytest.raises(ShapeError):
        CountsTable(CHSH_SC, np.ones(15))
    with pytest.raises(ParameterError):
        CountsTable(CHSH_SC, -np.ones(16))
    with pytest.raises(ParameterError):
        CountsTable(CHSH_SC, np.zeros(16))
    with pytest.raises(ShapeError):
        analyze_counts(hardy_game(), CountsTable(Scenario(2, 2, 3, 2), np.ones(24)))
