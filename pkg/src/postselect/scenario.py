"""Scenarios, behaviours and post-selection games.

Every probability table in the package is a flat vector in row-major
``(x, y, a, b)`` order, i.e. ``P(ab|xy)`` lives at
``((x * mb + y) * oa + a) * ob + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Optional, Union

import numpy as np

from .errors import ParameterError, ShapeError, ValidationError

NORMALIZATION_TOL = 1e-9
MU_TOL = 1e-12


@dataclass(frozen=True)
class Scenario:
    """Bipartite scenario with ``ma``/``mb`` inputs and ``oa``/``ob`` outputs."""

    ma: int
    mb: int
    oa: int
    ob: int

    def __post_init__(self):
        for name in ("ma", "mb", "oa", "ob"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ParameterError(f"{name} must be a positive integer, got {value!r}")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.ma, self.mb, self.oa, self.ob)

    @property
    def size(self) -> int:
        return self.ma * self.mb * self.oa * self.ob

    @property
    def n_vertices(self) -> int:
        return self.oa**self.ma * self.ob**self.mb


def flat_index(scenario: Scenario, x: int, y: int, a: int, b: int) -> int:
    for name, value, bound in (
        ("x", x, scenario.ma),
        ("y", y, scenario.mb),
        ("a", a, scenario.oa),
        ("b", b, scenario.ob),
    ):
        if not 0 <= value < bound:
            raise IndexError(f"{name}={value} out of range [0, {bound})")
    return ((x * scenario.mb + y) * scenario.oa + a) * scenario.ob + b


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Behaviour:
    """Conditional distribution ``P(ab|xy)`` over a scenario.

    With ``unnormalized=True`` the object represents a cone element
    ``theta * P``; only nonnegativity is checked then.
    """

    scenario: Scenario
    p: np.ndarray
    unnormalized: bool = False

    def __post_init__(self):
        p = _frozen(self.p).reshape(-1)
        if p.size != self.scenario.size:
            raise ShapeError(f"behaviour has {p.size} entries, scenario needs {self.scenario.size}")
        if not np.all(np.isfinite(p)):
            raise ValidationError("behaviour contains non-finite entries")
        if np.any(p < 0):
            raise ValidationError("behaviour has negative entries")
        if not self.unnormalized:
            if np.any(p > 1):
                raise ValidationError("behaviour has entries above 1")
            sums = p.reshape(self.scenario.ma * self.scenario.mb, -1).sum(axis=1)
            worst = float(np.max(np.abs(sums - 1.0)))
            if worst > NORMALIZATION_TOL:
                raise ValidationError(f"behaviour not normalized (max deviation {worst:.3g})")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @classmethod
    def from_tensor(cls, tensor, unnormalized: bool = False) -> "Behaviour":
        t = np.asarray(tensor, dtype=float)
        if t.ndim != 4:
            raise ShapeError("tensor must be indexed [x, y, a, b]")
        return cls(Scenario(*t.shape), t.reshape(-1), unnormalized)

    @classmethod
    def uniform(cls, scenario: Scenario) -> "Behaviour":
        p = np.full(scenario.size, 1.0 / (scenario.oa * scenario.ob))
        return cls(scenario, p)

    @classmethod
    def from_frequencies(cls, scenario: Scenario, values, renormalize: bool = True) -> "Behaviour":
        """Build a behaviour from raw (possibly unnormalized) frequencies.

        Each ``(x, y)`` block is rescaled to sum to one; blocks with no data
        become uniform.
        """
        t = np.array(values, dtype=float).reshape(scenario.ma * scenario.mb, -1)
        if renormalize:
            sums = t.sum(axis=1)
            full = sums > 0
            t[full] /= sums[full, None]
            t[~full] = 1.0 / t.shape[1]
        return cls(scenario, t.reshape(-1))

    @property
    def tensor(self) -> np.ndarray:
        return self.p.reshape(self.scenario.shape)

    def scaled(self, theta: float) -> "Behaviour":
        if theta <= 0:
            raise ParameterError("theta must be positive")
        return Behaviour(self.scenario, theta * self.p, unnormalized=True)

    def __getitem__(self, event: tuple[int, int, int, int]) -> float:
        """``P[a, b, x, y]`` in the usual ``(ab|xy)`` reading order."""
        a, b, x, y = event
        return float(self.p[flat_index(self.scenario, x, y, a, b)])


BehaviourLike = Union[Behaviour, np.ndarray]


@dataclass(frozen=True)
class GameSpec:
    """Post-selection game defined by ``mu``, ``S`` and ``V``.

    ``mu`` is flat over ``(x, y)``; ``s_tensor`` and ``v_tensor`` are flat
    over the behaviour index. A regular nonlocal game has ``S == 1``.
    """

    scenario: Scenario
    mu: np.ndarray
    s_tensor: np.ndarray
    v_tensor: np.ndarray
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        sc = self.scenario
        mu = _frozen(self.mu).reshape(-1)
        s = _frozen(self.s_tensor).reshape(-1)
        v = _frozen(self.v_tensor).reshape(-1)
        if mu.size != sc.ma * sc.mb:
            raise ShapeError(f"mu has {mu.size} entries, expected {sc.ma * sc.mb}")
        if s.size != sc.size or v.size != sc.size:
            raise ShapeError(f"S and V need {sc.size} entries")
        if np.any(mu < 0) or abs(mu.sum() - 1.0) > MU_TOL:
            raise ValidationError("mu must be a probability distribution over (x, y)")
        for label, arr in (("S", s), ("V", v)):
            if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
                raise ValidationError(f"{label} entries must lie in [0, 1]")
        for name, arr in (("mu", mu), ("s_tensor", s), ("v_tensor", v)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @cached_property
    def _mu_expanded(self) -> np.ndarray:
        sc = self.scenario
        return np.repeat(self.mu, sc.oa * sc.ob)

    @cached_property
    def s_mu(self) -> np.ndarray:
        out = self.s_tensor * self._mu_expanded
        out.setflags(write=False)
        return out

    @cached_property
    def v_mu(self) -> np.ndarray:
        out = self.s_tensor * self.v_tensor * self._mu_expanded
        out.setflags(write=False)
        return out

    @property
    def is_regular(self) -> bool:
        return bool(np.all(self.s_tensor == 1.0))


@dataclass(frozen=True)
class GameValue:
    omega: Optional[float]
    gamma: float

    @property
    def defined(self) -> bool:
        return self.omega is not None


def _vector(game: GameSpec, P: BehaviourLike) -> np.ndarray:
    if isinstance(P, Behaviour):
        if P.scenario != game.scenario:
            raise ShapeError(f"behaviour scenario {P.scenario} does not match game {game.scenario}")
        return P.p
    p = np.asarray(P, dtype=float).reshape(-1)
    if p.size != game.scenario.size:
        raise ShapeError(f"behaviour vector has {p.size} entries, game needs {game.scenario.size}")
    return p


def gamma(game: GameSpec, P: BehaviourLike) -> float:
    """Post-selection probability ``<S_mu, P>``."""
    return float(game.s_mu @ _vector(game, P))


def omega(game: GameSpec, P: BehaviourLike) -> Optional[float]:
    """Win probability conditioned on post-selection, or ``None`` when ``gamma == 0``."""
    p = _vector(game, P)
    den = float(game.s_mu @ p)
    if den <= 0.0:
        return None
    return float(game.v_mu @ p) / den


def evaluate(game: GameSpec, P: BehaviourLike) -> GameValue:
    p = _vector(game, P)
    return GameValue(omega(game, p), gamma(game, p))


def less_than_aggregate(P: Behaviour, x: int, y: int, mode: Literal["lt", "gt"] = "lt") -> float:
    """``P(a<b|xy)`` (``mode="lt"``) or ``P(a>b|xy)`` (``mode="gt"``)."""
    if mode not in ("lt", "gt"):
        raise ParameterError(f"mode must be 'lt' or 'gt', got {mode!r}")
    block = P.tensor[x, y]
    a, b = np.indices(block.shape)
    mask = a < b if mode == "lt" else a > b
    return float(block[mask].sum())


# -- constructors ------------------------------------------------------------

_QUADRANT_ORDER = [(x, a) for x in range(2) for a in range(2)]


def quadrant_to_flat(matrix) -> np.ndarray:
    """Convert the 4x4 quadrant layout (rows ``x,a``; columns ``y,b``) to flat order."""
    m = np.asarray(matrix, dtype=float)
    if m.shape != (4, 4):
        raise ShapeError("quadrant layout must be 4x4")
    return m.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(-1)


def flat_to_quadrant(vec) -> np.ndarray:
    v = np.asarray(vec).reshape(2, 2, 2, 2)
    return v.transpose(0, 2, 1, 3).reshape(4, 4)


CHSH_SCENARIO = Scenario(2, 2, 2, 2)


def chsh_game() -> GameSpec:
    t = np.zeros(CHSH_SCENARIO.shape)
    for x, y, a, b in np.ndindex(*CHSH_SCENARIO.shape):
        t[x, y, a, b] = float((a ^ b) == (x & y))
    return GameSpec(CHSH_SCENARIO, np.full(4, 0.25), np.ones(16), t.reshape(-1), name="chsh")


CH_MATRIX = np.array(
    [
        [1, 0, 1, 0],
        [0, 0, 1, 1],
        [1, 1, 0, 1],
        [0, 1, 1, 1],
    ],
    dtype=float,
)


def ch_game() -> GameSpec:
    """CH inequality written as an ordinary nonlocal game."""
    return GameSpec(CHSH_SCENARIO, np.full(4, 0.25), np.ones(16), quadrant_to_flat(CH_MATRIX), name="ch")


# (a, b, x, y)
HARDY_EVENTS = ((0, 0, 0, 0), (0, 1, 0, 1), (1, 0, 1, 0), (0, 0, 1, 1))


def hardy_game() -> GameSpec:
    s = np.zeros(16)
    v = np.zeros(16)
    for a, b, x, y in HARDY_EVENTS:
        s[flat_index(CHSH_SCENARIO, x, y, a, b)] = 1.0
    v[flat_index(CHSH_SCENARIO, 0, 0, 0, 0)] = 1.0
    return GameSpec(CHSH_SCENARIO, np.full(4, 0.25), s, v, name="hardy")


def hardy_conditions(s: int) -> list[tuple[int, int, str]]:
    """Zero conditions of the ladder paradox as ``(x, y, mode)`` triples."""
    conds = [(0, s - 1, "lt")]
    conds += [(i, i - 1, "lt") for i in range(1, s)]
    conds += [(i - 1, i - 1, "gt") for i in range(1, s)]
    return conds


def generalized_hardy_game(s: int, k: int) -> GameSpec:
    """Ladder Hardy game with ``s`` inputs and ``k`` outputs per party.

    Post-selects on the events of every zero condition plus the
    ``a<b`` events at input ``(s-1, s-1)``, which are the winning ones.
    ``mu`` is uniform over the ``2s`` input pairs involved.
    """
    if int(s) != s or int(k) != k or s < 2 or k < 2:
        raise ParameterError(f"generalized Hardy game needs s >= 2 and k >= 2, got s={s}, k={k}")
    sc = Scenario(s, s, k, k)
    a, b = np.indices((k, k))
    lt = (a < b).astype(float)
    gt = (a > b).astype(float)
    S = np.zeros(sc.shape)
    V = np.zeros(sc.shape)
    mu = np.zeros((s, s))
    for x, y, mode in hardy_conditions(s):
        S[x, y] += lt if mode == "lt" else gt
        mu[x, y] = 1.0
    S[s - 1, s - 1] += lt
    V[s - 1, s - 1] = lt
    mu[s - 1, s - 1] = 1.0
    if mu.sum() != 2 * s or S.max() > 1:
        raise AssertionError("condition inputs overlap")  # cannot happen for s >= 2
    mu /= mu.sum()
    return GameSpec(sc, mu.reshape(-1), S.reshape(-1), V.reshape(-1), name=f"ghardy-{s}-{k}")


def builtin_game(name: str, s: int = 2, k: int = 2) -> GameSpec:
    name = name.lower()
    if name == "chsh":
        return chsh_game()
    if name == "ch":
        return ch_game()
    if name == "hardy":
        return hardy_game()
    if name in ("ghardy", "generalized-hardy"):
        return generalized_hardy_game(s, k)
    raise ParameterError(f"unknown builtin game {name!r}")
