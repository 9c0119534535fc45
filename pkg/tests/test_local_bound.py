import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from postselect.errors import CapacityError, DegenerateGameError
from postselect.local_bound import (
    DeterministicStrategy,
    enumerate_vertices,
    local_bound,
    local_bound_dinkelbach,
    local_bound_naive,
)
from postselect.scenario import (
    Behaviour,
    GameSpec,
    Scenario,
    ch_game,
    chsh_game,
    gamma,
    generalized_hardy_game,
    hardy_game,
    omega,
)

from conftest import CHSH_SC, deterministic_behaviour, random_game


def brute_force(game):
    """Independent oracle: evaluate omega on every deterministic behaviour."""
    sc = game.scenario
    best = None
    for alice in itertools.product(range(sc.oa), repeat=sc.ma):
        for bob in itertools.product(range(sc.ob), repeat=sc.mb):
            E = deterministic_behaviour(sc, alice, bob)
            w = omega(game, E)
            if w is not None and (best is None or w > best):
                best = w
    return best


def test_enumerate_vertices_counts_and_order():
    verts = list(enumerate_vertices(CHSH_SC))
    assert len(verts) == 16
    assert verts[0] == DeterministicStrategy((0, 0), (0, 0))
    assert len(set(verts)) == 16
    assert sum(1 for _ in enumerate_vertices(Scenario(3, 3, 3, 3))) == 729
    assert verts == sorted(verts, key=lambda v: (v.alice, v.bob))


def test_deterministic_behaviour_is_vertex():
    E = DeterministicStrategy((1, 0), (0, 1)).behaviour(CHSH_SC)
    assert set(np.unique(E.p)) == {0.0, 1.0}
    assert E[1, 1, 0, 1] == 1.0


@pytest.mark.parametrize("game,expected", [(hardy_game(), 0.5), (chsh_game(), 0.75),
                                           (generalized_hardy_game(3, 2), 0.5)], ids=["hardy", "chsh", "ghardy32"])
def test_naive_examples(game, expected):
    res = local_bound_naive(game)
    assert res.value == expected
    assert res.method == "naive"


def test_ch_game_matches_brute_force():
    assert local_bound_naive(ch_game()).value == brute_force(ch_game())


@pytest.mark.parametrize("s,k", [(2, 2), (3, 2), (3, 3), (4, 2), (5, 3)])
def test_dinkelbach_ladder_games(s, k):
    assert local_bound_dinkelbach(generalized_hardy_game(s, k)).value == pytest.approx(0.5, abs=1e-12)


def test_dinkelbach_6_6():
    res = local_bound(generalized_hardy_game(6, 6))
    assert res.method == "dinkelbach"
    assert res.value == pytest.approx(0.5, abs=1e-12)


def test_witness_reproduces_value():
    for game in (hardy_game(), chsh_game(), ch_game(), generalized_hardy_game(3, 3)):
        for method in (local_bound_naive, local_bound_dinkelbach):
            res = method(game)
            E = res.witness.behaviour(game.scenario)
            assert abs(omega(game, E) - res.value) <= 1e-12
            assert gamma(game, E) > 0
            assert gamma(game, E) == pytest.approx(res.gamma_at_witness, abs=1e-15)


def test_ties_break_lexicographically():
    # constant V: every vertex wins with certainty, so the all-zero strategy is reported
    g = GameSpec(CHSH_SC, np.full(4, 0.25), np.ones(16), np.ones(16))
    res = local_bound_naive(g)
    assert res.witness == DeterministicStrategy((0, 0), (0, 0))


def test_capacity_error_mentions_dinkelbach():
    with pytest.raises(CapacityError, match="dinkelbach"):
        local_bound_naive(generalized_hardy_game(3, 3), cap=100)


def test_degenerate_game():
    S = np.zeros(16)
    S[1] = 1.0  # only (01|00) is selected; zero mu on (0, 0) makes every gamma vanish
    g = GameSpec(CHSH_SC, np.array([0.0, 0.5, 0.5, 0.0]), S, np.ones(16))
    with pytest.raises(DegenerateGameError):
        local_bound_naive(g)
    with pytest.raises(DegenerateGameError):
        local_bound_dinkelbach(g)


def test_dispatch_uses_dinkelbach_above_cap():
    assert local_bound(hardy_game(), cap=1).method == "dinkelbach"
    assert local_bound(hardy_game()).method == "naive"


def test_dinkelbach_agrees_with_naive_on_random_games(rng):
    for _ in range(100):
        g = random_game(rng)
        assert abs(local_bound_dinkelbach(g).value - local_bound_naive(g).value) <= 1e-10


@pytest.mark.parametrize("sc", [Scenario(3, 3, 2, 2), Scenario(2, 2, 3, 3), Scenario(3, 2, 2, 4),
                                Scenario(2, 3, 4, 2), Scenario(4, 4, 2, 2)], ids=str)
def test_dinkelbach_agrees_with_naive_on_larger_scenarios(sc, rng):
    assert sc.n_vertices <= 4096
    for _ in range(10):
        g = random_game(rng, sc, binary=bool(rng.integers(2)))
        assert abs(local_bound_dinkelbach(g).value - local_bound_naive(g).value) <= 1e-10


def test_naive_matches_brute_force_random(rng):
    for _ in range(30):
        g = random_game(rng, binary=True)
        assert local_bound_naive(g).value == pytest.approx(brute_force(g), abs=1e-15)


def test_regular_game_equals_linear_maximum(rng):
    for _ in range(20):
        g = GameSpec(CHSH_SC, rng.dirichlet(np.ones(4)), np.ones(16), rng.random(16))
        best = max(float(g.v_mu @ v.behaviour(CHSH_SC).p) for v in enumerate_vertices(CHSH_SC))
        assert local_bound(g).value == pytest.approx(best, abs=1e-14)


@settings(max_examples=50)
@given(seed=st.integers(0, 2**32 - 1))
def test_mixture_value_is_weighted_over_selected_vertices(seed):
    rng = np.random.default_rng(seed)
    g = random_game(rng, binary=True)
    verts = [v.behaviour(CHSH_SC) for v in enumerate_vertices(CHSH_SC)]
    lam = rng.dirichlet(np.ones(16) * 0.5)
    P = Behaviour(CHSH_SC, sum(l * E.p for l, E in zip(lam, verts)))
    gam = np.array([gamma(g, E) for E in verts])
    sel = gam > 0
    num = sum(l * gamma(g, E) * omega(g, E) for l, E, s in zip(lam, verts, sel) if s)
    den = sum(l * gamma(g, E) for l, E, s in zip(lam, verts, sel) if s)
    assert abs(omega(g, P) - num / den) <= 1e-12


@settings(max_examples=200)
@given(seed=st.integers(0, 2**32 - 1))
def test_local_mixtures_never_beat_local_bound(seed):
    rng = np.random.default_rng(seed)
    g = random_game(rng)
    bound = local_bound(g).value
    verts = [v.behaviour(CHSH_SC).p for v in enumerate_vertices(CHSH_SC)]
    lam = rng.dirichlet(np.ones(16) * 0.3)
    P = Behaviour(CHSH_SC, np.clip(sum(l * p for l, p in zip(lam, verts)), 0, 1))
    w = omega(g, P)
    assert w is None or w <= bound + 1e-10
