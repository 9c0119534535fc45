import logging

import numpy as np
import pytest

from postselect import npa, sdp
from postselect.errors import ParameterError
from postselect.npa import build_moment_structure, max_linear, tsirelson_bisection, tsirelson_conic
from postselect.quantum import OptimizerOptions, nelder_mead, parameterize, behaviour_from_strategy, chart_size
from postselect.scenario import GameSpec, Scenario, chsh_game, hardy_game, omega

from conftest import CHSH_SC, random_game

cp = pytest.importorskip("cvxpy")

TSIRELSON_CHSH = (2 + np.sqrt(2)) / 4


@pytest.fixture(autouse=True)
def kkt_checked(monkeypatch):
    """Every optimal SDP solved in this module must pass the KKT check."""
    original = sdp.solve
    calls = []

    def checked(problem, tol=None):
        sol = original(problem, tol)
        if sol.optimal:
            assert sdp.check_kkt(problem, sol) == []
        calls.append(sol.status)
        return sol

    monkeypatch.setattr(sdp, "solve", checked)
    return calls


def selective_game(rng):
    """Random game whose post-selection probability is bounded away from zero."""
    return GameSpec(CHSH_SC, rng.dirichlet(np.ones(4)), 0.2 + 0.8 * rng.random(16), rng.random(16))


def cvxpy_level1(game):
    """Independent level-1 relaxation for binary scenarios in the homogenised form."""
    G = cp.Variable((5, 5), symmetric=True)  # rows: 1, A0, A1, B0, B1 (outcome-0 projectors)
    cons = [G >> 0]
    for i in range(1, 5):
        cons.append(G[i, i] == G[0, i])
    P = []
    for x in range(2):
        for y in range(2):
            a, b, ab, th = G[0, 1 + x], G[0, 3 + y], G[1 + x, 3 + y], G[0, 0]
            P += [ab, a - ab, b - ab, th - a - b + ab]
    P = cp.hstack(P)
    cons += [P >= 0, game.s_mu @ P == 1]
    prob = cp.Problem(cp.Maximize(game.v_mu @ P), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value


@pytest.mark.parametrize("sc,level,n", [(CHSH_SC, "1", 5), (CHSH_SC, "1+AB", 9), (Scenario(2, 2, 3, 2), "1", 7)])
def test_monomial_counts(sc, level, n):
    assert build_moment_structure(sc, level).n == n


def test_unsupported_level():
    with pytest.raises(ParameterError):
        build_moment_structure(CHSH_SC, "2")
    with pytest.raises(ParameterError):
        tsirelson_conic(chsh_game(), level="3")


def test_behaviour_map_is_normalised():
    ms = build_moment_structure(Scenario(2, 3, 3, 2), "1+ab")
    # the identity moment alone gives uniform weight 1 to each (x, y) block
    e = np.zeros(ms.n_vars)
    e[ms.identity_var] = 1.0
    p = (ms.behaviour_map @ e).reshape(2, 3, 3, 2)
    assert np.allclose(p.sum(axis=(2, 3)), 1.0)


def test_chsh_level1():
    res = tsirelson_conic(chsh_game(), level="1")
    assert res.upper_bound == pytest.approx(TSIRELSON_CHSH, abs=1e-6)
    assert res.attained_flag
    assert res.upper_bound >= TSIRELSON_CHSH - 1e-9


def test_chsh_bisection():
    res = tsirelson_bisection(chsh_game(), level="1", tol=1e-7)
    assert res.upper_bound == pytest.approx(TSIRELSON_CHSH, abs=1e-6)
    assert res.method == "bisection"
    assert res.solves > 10


def test_hardy_level_1ab_is_trivial():
    res = tsirelson_conic(hardy_game(), level="1+AB")
    assert 1 - 1e-6 <= res.upper_bound <= 1 + 1e-9


def test_selection_equals_win_gives_one():
    S = np.zeros(16)
    S[[0, 5, 10, 15]] = 1.0
    g = GameSpec(CHSH_SC, np.full(4, 0.25), S, S)
    assert tsirelson_conic(g, level="1").upper_bound == pytest.approx(1.0, abs=1e-6)


def test_conic_and_bisection_agree(rng):
    for _ in range(20):
        g = random_game(rng)
        level = "1" if rng.integers(2) else "1+ab"
        c = tsirelson_conic(g, level=level).upper_bound
        b = tsirelson_bisection(g, level=level, tol=1e-7).upper_bound
        assert abs(c - b) <= 2e-6


def test_level_1ab_is_tighter(rng):
    for _ in range(10):
        g = random_game(rng)
        assert tsirelson_conic(g, "1+ab").upper_bound <= tsirelson_conic(g, "1").upper_bound + 1e-7


def test_against_cvxpy_oracle(rng):
    for _ in range(8):
        g = selective_game(rng)
        ours = tsirelson_conic(g, level="1").upper_bound
        assert ours == pytest.approx(cvxpy_level1(g), abs=1e-6)


def best_qubit_value(game, seed, restarts=4):
    d = 2
    n = chart_size(d, 2, 2)
    rng = np.random.default_rng(seed)

    def objective(x):
        w = omega(game, behaviour_from_strategy(parameterize(x, d, 2, 2), game.scenario))
        return -(w if w is not None else 0.0)

    best = -1.0
    for _ in range(restarts):
        r = nelder_mead(objective, rng.uniform(-np.pi, np.pi, n), OptimizerOptions(max_evals=3000))
        best = max(best, -r.fun)
    return best


def test_relaxation_sandwiches_quantum_values(rng):
    for i in range(6):
        g = random_game(rng)
        upper = tsirelson_conic(g, "1+ab").upper_bound
        lower = best_qubit_value(g, seed=i)
        assert lower <= upper + 1e-6


def test_max_linear_chsh_correlator():
    g = chsh_game()
    sol = max_linear(g, g.v_mu, level="1")
    assert sol.value == pytest.approx(TSIRELSON_CHSH, abs=1e-7)


def test_theta_cap_warning(caplog):
    # Hardy's supremum is approached only as the post-selection probability vanishes
    with caplog.at_level(logging.WARNING, logger=npa.__name__):
        res = tsirelson_conic(hardy_game(), level="1", theta_cap=10.0)
    assert not res.attained_flag
    assert any("cap" in r.message for r in caplog.records)


def test_invalid_theta_cap():
    with pytest.raises(ParameterError):
        tsirelson_conic(chsh_game(), theta_cap=0.0)


def test_kkt_fixture_saw_solves(kkt_checked):
    tsirelson_conic(chsh_game(), level="1")
    assert kkt_checked == [sdp.Status.OPTIMAL]
