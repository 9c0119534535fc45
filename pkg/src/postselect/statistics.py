"""Hypothesis tests of local hidden-variable models from game data.

All exponentials are handled in base-2 logs; Bayes factors and p-value
bounds are only exponentiated at the very end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import ParameterError, PostSelectError, ShapeError
from .scenario import GameSpec, Scenario


class NoPostSelectedDataError(PostSelectError):
    """The counts contain no post-selected rounds."""


def _xlog2y(x: float, y: float) -> float:
    if x == 0:
        return 0.0
    return x * math.log2(y)


def kl_divergence(p: float, q: float) -> float:
    """Binary relative entropy ``D(p||q)`` in bits.

    Returns ``math.inf`` when ``q`` is 0 or 1 and ``p`` differs from it.
    """
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ParameterError(f"probabilities must lie in [0, 1], got p={p}, q={q}")
    if q in (0.0, 1.0):
        return 0.0 if p == q else math.inf
    if p == q:
        return 0.0
    t1 = 0.0 if p == 0 else p * _log_ratio(p, q)
    t2 = 0.0 if p == 1 else (1 - p) * _log_ratio(1 - p, 1 - q, q - p)
    return max(0.0, (t1 + t2) / math.log(2))


def _log_ratio(u: float, v: float, diff: Optional[float] = None) -> float:
    """``ln(u / v)``, via log1p when ``u`` is close to ``v``."""
    diff = u - v if diff is None else diff
    if abs(diff) < 0.5 * v:
        return math.log1p(diff / v)
    return math.log(u) - math.log(v)


@dataclass(frozen=True)
class Power:
    value: float
    below_local: bool = False

    def __float__(self) -> float:
        return self.value


def statistical_power(gamma: float, omega: Optional[float], omega_l: float) -> Power:
    """``gamma * D(omega || omega_l)``; zero (flagged) when omega < omega_l."""
    if not 0.0 <= gamma <= 1.0 + 1e-12:
        raise ParameterError(f"gamma must lie in [0, 1], got {gamma}")
    if not 0.0 < omega_l < 1.0:
        raise ParameterError(f"omega_l must lie in (0, 1), got {omega_l}")
    if omega is None or gamma == 0.0:
        return Power(0.0, below_local=omega is not None and omega < omega_l)
    if omega < omega_l:
        return Power(0.0, below_local=True)
    return Power(gamma * kl_divergence(omega, omega_l))


def log2_bayes_factor(k: float, t: float, omega_l: float, omega_alt: float) -> float:
    if not 0 <= k <= t:
        raise ParameterError(f"need 0 <= k <= t, got k={k}, t={t}")
    if not 0.0 < omega_l < 1.0:
        raise ParameterError(f"omega_l must lie in (0, 1), got {omega_l}")
    if not 0.0 <= omega_alt <= 1.0:
        raise ParameterError(f"omega_alt must lie in [0, 1], got {omega_alt}")
    # x*log2(y) with 0*log 0 = 0: a zero-probability alternative that fits the data is fine
    if (omega_alt == 0.0 and k > 0) or (omega_alt == 1.0 and t - k > 0):
        return math.inf
    return (_xlog2y(k, omega_l) - _xlog2y(k, omega_alt)
            + _xlog2y(t - k, 1 - omega_l) - _xlog2y(t - k, 1 - omega_alt))


def bayes_factor(k: float, t: float, omega_l: float, omega_alt: float) -> float:
    """Likelihood ratio of the local model against the alternative."""
    lg = log2_bayes_factor(k, t, omega_l, omega_alt)
    if lg == math.inf:
        return math.inf
    return 2.0**lg


def expected_bayes_exponent(n: float, gamma: float, omega: float, omega_l: float) -> float:
    """``n * gamma * D(omega || omega_l)``; the expected K is ``2**-result``."""
    return n * statistical_power(gamma, omega, omega_l).value


def chernoff_p_bound(k: float, t: float, omega_l: float) -> float:
    """Upper bound ``2**(-t D(k/t || omega_l))`` on the binomial tail p-value."""
    if t <= 0 or not 0 <= k <= t:
        raise ParameterError(f"need 0 <= k <= t and t > 0, got k={k}, t={t}")
    if k / t < omega_l:
        raise ParameterError("the Chernoff bound assumes an observed win rate k/t >= omega_l")
    return 2.0 ** (-t * kl_divergence(k / t, omega_l))


def binomial_tail(k: int, t: int, q: float) -> float:
    """Exact ``P[Bin(t, q) >= k]``, used as the reference for the Chernoff bound."""
    from scipy.stats import binom

    return float(binom.sf(k - 1, t, q))


# -- count tables -------------------------------------------------------------


@dataclass(frozen=True)
class CountsTable:
    scenario: Scenario
    counts: np.ndarray

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64).reshape(-1)
        if c.size != self.scenario.size:
            raise ShapeError(f"counts need {self.scenario.size} entries, got {c.size}")
        if np.any(c < 0):
            raise ParameterError("counts must be nonnegative")
        if c.sum() < 1:
            raise ParameterError("counts table is empty")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def scaled(self, factor: int) -> "CountsTable":
        return CountsTable(self.scenario, self.counts * factor)


@dataclass(frozen=True)
class TestReport:
    n: int
    t: float
    k: float
    omega_hat: float
    omega_l: float
    omega_alt: float
    log2_bayes_factor: float
    chernoff_p_bound: Optional[float]
    below_local: bool = False
    notes: tuple[str, ...] = field(default=())

    __test__ = False  # not a pytest class

    @property
    def bayes_factor(self) -> float:
        return 2.0**self.log2_bayes_factor

    @property
    def per_round_exponent(self) -> float:
        return -self.log2_bayes_factor / self.n

    def as_dict(self) -> dict:
        return dict(n=self.n, t=self.t, k=self.k, omega_hat=self.omega_hat, omega_l=self.omega_l,
                    omega_alt=self.omega_alt, bayes_factor=self.bayes_factor,
                    log2_bayes_factor=self.log2_bayes_factor, chernoff_p_bound=self.chernoff_p_bound,
                    per_round_exponent=self.per_round_exponent, below_local=self.below_local)


def _integral(value: float) -> Union[int, float]:
    r = round(value)
    return int(r) if abs(value - r) < 1e-9 * max(1.0, abs(value)) else value


def analyze_counts(game: GameSpec, counts: CountsTable, omega_alt: Optional[float] = None,
                   omega_l: Optional[float] = None) -> TestReport:
    """Bayes factor and Chernoff bound for observed counts.

    ``t`` and ``k`` are the post-selected and winning round counts. With 0/1
    valued ``S`` and ``V`` they are integers; fractional games give real
    sufficient statistics which are used as they are. The alternative win
    probability defaults to the empirical frequency ``k / t``. The input
    distribution ``mu`` does not enter: the counts already reflect it.
    """
    if counts.scenario != game.scenario:
        raise ShapeError(f"counts scenario {counts.scenario} does not match game {game.scenario}")
    if omega_l is None:
        from .local_bound import local_bound

        omega_l = local_bound(game).value
    c = counts.counts.astype(float)
    t = _integral(float(game.s_tensor @ c))
    k = _integral(float((game.s_tensor * game.v_tensor) @ c))
    if t == 0:
        raise NoPostSelectedDataError("no post-selected rounds in the counts")
    omega_hat = k / t
    alt = omega_hat if omega_alt is None else float(omega_alt)
    lg = log2_bayes_factor(k, t, omega_l, alt)
    below = omega_hat < omega_l
    notes = ()
    p_bound = None
    if below:
        notes = ("observed win rate is below the local bound; no p-value bound",)
    else:
        p_bound = chernoff_p_bound(k, t, omega_l)
    return TestReport(counts.n, t, k, omega_hat, omega_l, alt, lg, p_bound, below, notes)
