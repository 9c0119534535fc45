"""Local bound of post-selection games.

The maximum of the post-selected win probability over local behaviours is
attained at a deterministic vertex with nonzero post-selection probability,
so the bound is found by scanning vertices. ``local_bound_naive`` scores
every (Alice, Bob) pair; ``local_bound_dinkelbach`` enumerates only Alice
strategies and solves Bob's side exactly with Dinkelbach's ratio iteration,
which decouples over Bob's inputs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import CapacityError, DegenerateGameError, NumericalError
from .scenario import Behaviour, GameSpec, Scenario

DEFAULT_CAP = 10**7
DINKELBACH_TOL = 1e-12
DINKELBACH_MAX_ITER = 100
_CHUNK = 1 << 14


@dataclass(frozen=True)
class DeterministicStrategy:
    alice: tuple[int, ...]
    bob: tuple[int, ...]

    def behaviour(self, scenario: Scenario) -> Behaviour:
        if len(self.alice) != scenario.ma or len(self.bob) != scenario.mb:
            raise ValueError("strategy does not match scenario inputs")
        t = np.zeros(scenario.shape)
        for x, a in enumerate(self.alice):
            for y, b in enumerate(self.bob):
                t[x, y, a, b] = 1.0
        return Behaviour(scenario, t.reshape(-1))


@dataclass(frozen=True)
class LocalBoundResult:
    value: float
    witness: DeterministicStrategy
    gamma_at_witness: float
    method: str


def enumerate_vertices(scenario: Scenario) -> Iterator[DeterministicStrategy]:
    """All deterministic strategies, Alice's map varying slowest."""
    bobs = list(itertools.product(range(scenario.ob), repeat=scenario.mb))
    for alice in itertools.product(range(scenario.oa), repeat=scenario.ma):
        for bob in bobs:
            yield DeterministicStrategy(alice, bob)


def _strategy_table(n_inputs: int, n_outputs: int) -> np.ndarray:
    """Rows are strategies in lexicographic order, columns inputs."""
    if n_inputs == 0:
        return np.zeros((1, 0), dtype=np.intp)
    grids = np.indices((n_outputs,) * n_inputs).reshape(n_inputs, -1).T
    return np.ascontiguousarray(grids, dtype=np.intp)


def _per_party_scores(vec: np.ndarray, scenario: Scenario, alice: np.ndarray) -> np.ndarray:
    """For each Alice strategy row: array [y, b] of sum_x T[x, y, a(x), b]."""
    t = vec.reshape(scenario.shape)
    xs = np.arange(scenario.ma)
    # t[x, :, alice[:, x], :] -> (n_alice, ma, mb, ob)
    picked = t[xs[None, :], :, alice, :]
    return picked.sum(axis=1)


def _bob_totals(scores: np.ndarray, bob: np.ndarray) -> np.ndarray:
    """scores: (n_alice, mb, ob); bob: (n_bob, mb) -> (n_alice, n_bob)."""
    ys = np.arange(scores.shape[1])
    return scores[:, ys[None, :], bob].sum(axis=2)


def _check_cap(scenario: Scenario, cap: int):
    if scenario.n_vertices > cap:
        raise CapacityError(
            f"{scenario.n_vertices} vertex pairs exceed the naive cap {cap}; "
            "use local_bound_dinkelbach (or local_bound, which dispatches to it)"
        )


def local_bound_naive(game: GameSpec, cap: int = DEFAULT_CAP) -> LocalBoundResult:
    """Exact local bound by scoring every deterministic vertex."""
    sc = game.scenario
    _check_cap(sc, cap)
    alice = _strategy_table(sc.ma, sc.oa)
    bob = _strategy_table(sc.mb, sc.ob)
    best = -np.inf
    best_idx = None
    best_gamma = 0.0
    for start in range(0, alice.shape[0], max(1, _CHUNK // max(1, bob.shape[0]))):
        block = alice[start : start + max(1, _CHUNK // max(1, bob.shape[0]))]
        num = _bob_totals(_per_party_scores(game.v_mu, sc, block), bob)
        den = _bob_totals(_per_party_scores(game.s_mu, sc, block), bob)
        ok = den > 0
        if not ok.any():
            continue
        ratio = np.full(num.shape, -np.inf)
        ratio[ok] = num[ok] / den[ok]
        flat = int(np.argmax(ratio))
        val = ratio.flat[flat]
        if val > best:
            best = float(val)
            i, j = divmod(flat, bob.shape[0])
            best_idx = (start + i, j)
            best_gamma = float(den.flat[flat])
    if best_idx is None:
        raise DegenerateGameError("every deterministic strategy has zero post-selection probability")
    witness = DeterministicStrategy(tuple(int(v) for v in alice[best_idx[0]]), tuple(int(v) for v in bob[best_idx[1]]))
    return LocalBoundResult(best, witness, best_gamma, "naive")


def _dinkelbach_block(num: np.ndarray, den: np.ndarray):
    """Best ratio over Bob strategies for a batch of Alice strategies.

    ``num``/``den`` have shape (n, mb, ob) and hold per-input contributions
    of Bob's answer. Returns (ratio, gamma, bob_choice); ratio is -inf where
    no Bob strategy gives a positive denominator.
    """
    n, mb, ob = num.shape
    rows = np.arange(n)[:, None]
    cols = np.arange(mb)[None, :]
    feasible = den.max(axis=2).max(axis=1) > 0
    # start from the Bob strategy maximizing post-selection; its ratio is a valid iterate
    choice = np.argmax(den, axis=2)
    alpha = np.zeros(n)
    d0 = den[rows, cols, choice].sum(axis=1)
    n0 = num[rows, cols, choice].sum(axis=1)
    alpha[feasible] = n0[feasible] / d0[feasible]
    active = feasible.copy()
    for _ in range(DINKELBACH_MAX_ITER):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        lin = num[idx] - alpha[idx, None, None] * den[idx]
        pick = np.argmax(lin, axis=2)
        r = np.arange(idx.size)[:, None]
        gain = lin[r, cols, pick].sum(axis=1)
        improve = gain > DINKELBACH_TOL
        upd = idx[improve]
        if upd.size:
            p = pick[improve]
            rr = np.arange(upd.size)[:, None]
            nn = num[upd][rr, cols, p].sum(axis=1)
            dd = den[upd][rr, cols, p].sum(axis=1)
            new_alpha = nn / dd
            # ratio iterates increase strictly; a stall means rounding noise
            stalled = new_alpha <= alpha[upd]
            alpha[upd] = np.maximum(alpha[upd], new_alpha)
            choice[upd[~stalled]] = p[~stalled]
            active[upd[stalled]] = False
        active[idx[~improve]] = False
    else:
        if active.any():
            raise NumericalError("Dinkelbach iteration did not converge in 100 steps")
    gam = den[rows, cols, choice].sum(axis=1)
    ratio = np.where(feasible, alpha, -np.inf)
    return ratio, gam, choice


def local_bound_dinkelbach(game: GameSpec) -> LocalBoundResult:
    """Exact local bound enumerating only Alice's deterministic strategies."""
    sc = game.scenario
    alice = _strategy_table(sc.ma, sc.oa)
    best = -np.inf
    best_info = None
    for start in range(0, alice.shape[0], _CHUNK):
        block = alice[start : start + _CHUNK]
        num = _per_party_scores(game.v_mu, sc, block)
        den = _per_party_scores(game.s_mu, sc, block)
        ratio, gam, choice = _dinkelbach_block(num, den)
        i = int(np.argmax(ratio))
        if ratio[i] > best:
            best = float(ratio[i])
            best_info = (start + i, tuple(int(v) for v in choice[i]), float(gam[i]))
    if best_info is None or not np.isfinite(best):
        raise DegenerateGameError("every deterministic strategy has zero post-selection probability")
    ai, bob, gam = best_info
    witness = DeterministicStrategy(tuple(int(v) for v in alice[ai]), bob)
    # report the witness's own ratio so value and witness agree bit for bit
    value = _vertex_ratio(game, witness)
    return LocalBoundResult(value, witness, gam, "dinkelbach")


def _vertex_ratio(game: GameSpec, strat: DeterministicStrategy) -> float:
    sc = game.scenario
    alice = np.array([strat.alice], dtype=np.intp)
    bob = np.array([strat.bob], dtype=np.intp)
    num = _bob_totals(_per_party_scores(game.v_mu, sc, alice), bob)[0, 0]
    den = _bob_totals(_per_party_scores(game.s_mu, sc, alice), bob)[0, 0]
    return float(num / den)


def local_bound(game: GameSpec, cap: int = DEFAULT_CAP) -> LocalBoundResult:
    """Naive enumeration below ``cap`` vertex pairs, Dinkelbach above."""
    if game.scenario.n_vertices <= cap:
        return local_bound_naive(game, cap)
    return local_bound_dinkelbach(game)
