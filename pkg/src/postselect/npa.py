"""Upper bounds on the Tsirelson bound of post-selection games.

The quantum set is relaxed with a real NPA moment matrix built from
projectors for the first ``o - 1`` outcomes of every measurement (the last
outcome is recovered by completion). Two routes are provided:

* ``tsirelson_conic`` drops the normalisation of the moment matrix,
  fixes ``<S_mu, P'> = 1`` and maximises ``<V_mu, P'>`` in one SDP; the
  identity moment plays the role of the scale ``theta``.
* ``tsirelson_bisection`` bisects on the ratio and decides each step from
  the sign of ``max <V_mu - alpha S_mu, P>`` over normalised moment matrices.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import sdp
from .errors import DegenerateGameError, NumericalError, ParameterError
from .local_bound import local_bound
from .scenario import GameSpec, Scenario

log = logging.getLogger(__name__)

DEFAULT_THETA_CAP = 1e8
LEVELS = ("1", "1+ab")

# an operator is (party, input, outcome); party 0 = Alice, 1 = Bob
Op = tuple[int, int, int]
Word = tuple[tuple[Op, ...], tuple[Op, ...]]


def normalize_level(level) -> str:
    text = str(level).lower().replace(" ", "")
    if text in ("1", "l1"):
        return "1"
    if text in ("1ab", "1+ab", "1.5"):
        return "1+ab"
    raise ParameterError(f"unsupported NPA level {level!r}; choose 1 or 1+AB")


def _reduce_party(ops: tuple[Op, ...]) -> Optional[tuple[Op, ...]]:
    """Apply idempotence and orthogonality of projectors; None means zero."""
    out: list[Op] = []
    for op in ops:
        if out and out[-1][1] == op[1]:
            if out[-1][2] == op[2]:
                continue
            return None
        out.append(op)
    return tuple(out)


def _canonical(word: Word) -> Optional[Word]:
    a = _reduce_party(word[0])
    b = _reduce_party(word[1])
    if a is None or b is None:
        return None
    # real relaxation: a moment equals the moment of its adjoint
    return min((a, b), (a[::-1], b[::-1]))


@dataclass(frozen=True)
class MomentStructure:
    """Moment matrix layout for one scenario and relaxation level.

    ``cell_var[i, j]`` is the moment variable of cell ``(i, j)`` (-1 for a
    structurally zero cell). ``behaviour_map`` is a ``(size, n_vars)``
    matrix turning the moment vector into the unnormalised behaviour.
    """

    scenario: Scenario
    level: str
    monomials: tuple[Word, ...]
    words: tuple[Word, ...]
    cell_var: np.ndarray
    behaviour_map: np.ndarray

    @property
    def n(self) -> int:
        return len(self.monomials)

    @property
    def n_vars(self) -> int:
        return len(self.words)

    @property
    def identity_var(self) -> int:
        return self.words.index(((), ()))


def build_moment_structure(scenario: Scenario, level="1+ab") -> MomentStructure:
    level = normalize_level(level)
    sc = scenario
    a_ops = [((0, x, a),) for x in range(sc.ma) for a in range(sc.oa - 1)]
    b_ops = [((1, y, b),) for y in range(sc.mb) for b in range(sc.ob - 1)]
    monomials: list[Word] = [((), ())]
    monomials += [(op, ()) for op in a_ops]
    monomials += [((), op) for op in b_ops]
    if level == "1+ab":
        monomials += [(ao, bo) for ao in a_ops for bo in b_ops]
    n = len(monomials)

    index: dict[Word, int] = {}
    words: list[Word] = []
    cell_var = np.full((n, n), -1, dtype=int)
    for i, j in itertools.combinations_with_replacement(range(n), 2):
        u, v = monomials[i], monomials[j]
        # u^dagger v with Alice and Bob operators commuting
        w = _canonical((u[0][::-1] + v[0], u[1][::-1] + v[1]))
        if w is None:
            continue
        if w not in index:
            index[w] = len(words)
            words.append(w)
        cell_var[i, j] = cell_var[j, i] = index[w]

    def var(word: Word) -> int:
        w = _canonical(word)
        if w is None or w not in index:
            raise AssertionError(f"moment {word} missing from level-{level} matrix")
        return index[w]

    bmap = np.zeros((sc.size, len(words)))
    one = var(((), ()))
    for x, y in itertools.product(range(sc.ma), range(sc.mb)):
        la, lb = sc.oa - 1, sc.ob - 1
        for a, b in itertools.product(range(sc.oa), range(sc.ob)):
            row = ((x * sc.mb + y) * sc.oa + a) * sc.ob + b
            # inclusion-exclusion over "last outcome = 1 - sum of the others"
            a_terms = [((0, x, a),)] if a < la else [()] + [((0, x, i),) for i in range(la)]
            b_terms = [((1, y, b),)] if b < lb else [()] + [((1, y, j),) for j in range(lb)]
            for ia, at in enumerate(a_terms):
                sa = 1.0 if (a < la or ia == 0) else -1.0
                for ib, bt in enumerate(b_terms):
                    sb = 1.0 if (b < lb or ib == 0) else -1.0
                    bmap[row, var((at, bt))] += sa * sb
    del one
    bmap.setflags(write=False)
    cell_var.setflags(write=False)
    return MomentStructure(sc, level, tuple(monomials), tuple(words), cell_var, bmap)


@dataclass
class _Layout:
    """Linear maps between the moment-variable vector and the SDP blocks."""

    ms: MomentStructure
    rep_cells: list[tuple[int, int]]
    tie_constraints: list[tuple[tuple[int, int], tuple[int, int]]]
    zero_cells: list[tuple[int, int]]

    @classmethod
    def of(cls, ms: MomentStructure) -> "_Layout":
        rep: dict[int, tuple[int, int]] = {}
        ties, zeros = [], []
        for i, j in itertools.combinations_with_replacement(range(ms.n), 2):
            v = ms.cell_var[i, j]
            if v < 0:
                zeros.append((i, j))
            elif v in rep:
                ties.append((rep[v], (i, j)))
            else:
                rep[v] = (i, j)
        return cls(ms, [rep[v] for v in range(ms.n_vars)], ties, zeros)

    def functional(self, coeffs: np.ndarray) -> np.ndarray:
        """Symmetric matrix F with <F, Gamma> = sum_v coeffs[v] * moment_v."""
        F = np.zeros((self.ms.n, self.ms.n))
        for v, c in enumerate(coeffs):
            if c == 0:
                continue
            i, j = self.rep_cells[v]
            if i == j:
                F[i, i] += c
            else:
                F[i, j] += c / 2
                F[j, i] += c / 2
        return F

    def moments(self, gamma_matrix: np.ndarray) -> np.ndarray:
        return np.array([gamma_matrix[i, j] for i, j in self.rep_cells])


def _cell_matrix(n: int, cell: tuple[int, int]) -> np.ndarray:
    i, j = cell
    E = np.zeros((n, n))
    if i == j:
        E[i, i] = 1.0
    else:
        E[i, j] = E[j, i] = 0.5
    return E


def _build_problem(game: GameSpec, ms: MomentStructure, objective: np.ndarray,
                   mode: str, theta_cap: Optional[float] = None) -> tuple[sdp.SDPProblem, _Layout]:
    """Assemble the SDP.

    ``objective`` is a vector over behaviour entries. ``mode`` is
    ``"conic"`` (``<S_mu, P'> = 1``, identity moment free up to the cap) or
    ``"normalized"`` (identity moment fixed to one).
    """
    lay = _Layout.of(ms)
    n = ms.n
    size = game.scenario.size
    rows_A: list[np.ndarray] = []
    rows_L: list[np.ndarray] = []
    b: list[float] = []
    # diagonal block: one slack per behaviour entry (P' >= 0) plus the theta-cap slack
    n_lp = size + (1 if mode == "conic" else 0)

    def add(A_mat, lp_vec, rhs):
        rows_A.append(A_mat)
        rows_L.append(lp_vec)
        b.append(rhs)

    zero_lp = np.zeros(n_lp)
    for c1, c2 in lay.tie_constraints:
        add(_cell_matrix(n, c1) - _cell_matrix(n, c2), zero_lp, 0.0)
    for c in lay.zero_cells:
        add(_cell_matrix(n, c), zero_lp, 0.0)
    bmap = ms.behaviour_map
    for e in range(size):
        lp = np.zeros(n_lp)
        lp[e] = -1.0
        add(lay.functional(bmap[e]), lp, 0.0)
    one = ms.identity_var
    if mode == "conic":
        add(lay.functional(game.s_mu @ bmap), zero_lp, 1.0)
        lp = np.zeros(n_lp)
        lp[size] = 1.0
        # theta / cap + slack = 1 keeps this row on the scale of the others
        add(_cell_matrix(n, lay.rep_cells[one]) / float(theta_cap), lp, 1.0)
    elif mode == "normalized":
        add(_cell_matrix(n, lay.rep_cells[one]), zero_lp, 1.0)
    else:
        raise ParameterError(mode)
    C = lay.functional(objective @ bmap)
    problem = sdp.SDPProblem(
        [sdp.Block(n), sdp.Block(n_lp, diagonal=True)],
        [C, np.zeros(n_lp)],
        [np.array(rows_A), np.array(rows_L)],
        np.array(b),
    )
    return problem, lay


@dataclass(frozen=True)
class TsirelsonResult:
    upper_bound: float
    theta: float
    attained_flag: bool
    level: str
    method: str
    certificate: Optional[sdp.SDPSolution] = None
    behaviour: Optional[np.ndarray] = None
    solves: int = 1


def _check(sol: sdp.SDPSolution, what: str):
    if sol.status is sdp.Status.INFEASIBLE:
        raise DegenerateGameError(f"{what}: relaxation has no point with positive post-selection")
    if sol.status is not sdp.Status.OPTIMAL:
        raise NumericalError(f"{what}: SDP solver returned {sol.status.value} ({sol.residuals})")


def tsirelson_conic(game: GameSpec, level="1+ab", theta_cap: float = DEFAULT_THETA_CAP,
                    tol: Optional[sdp.Tolerances] = None) -> TsirelsonResult:
    """One-shot upper bound via the homogenised (linear-fractional) program."""
    if theta_cap <= 0:
        raise ParameterError("theta_cap must be positive")
    ms = build_moment_structure(game.scenario, level)
    problem, lay = _build_problem(game, ms, game.v_mu, "conic", theta_cap)
    sol = sdp.solve(problem, tol)
    _check(sol, "conic Tsirelson program")
    moments = lay.moments(sol.X[0])
    theta = float(moments[ms.identity_var])
    attained = theta < 0.99 * theta_cap
    if not attained:
        log.warning("theta=%.3g is within 1%% of the cap %.3g: the supremum may only be "
                    "approached as the post-selection probability vanishes", theta, theta_cap)
    # the dual objective is a certified upper bound up to dual residuals
    return TsirelsonResult(float(sol.dual_objective), theta, attained, ms.level, "conic",
                           sol, ms.behaviour_map @ moments)


def max_linear(game: GameSpec, weights: np.ndarray, level="1+ab",
               tol: Optional[sdp.Tolerances] = None) -> sdp.SDPSolution:
    """Maximise ``<weights, P>`` over normalised behaviours of the relaxation."""
    ms = build_moment_structure(game.scenario, level)
    problem, _ = _build_problem(game, ms, np.asarray(weights, dtype=float), "normalized")
    sol = sdp.solve(problem, tol)
    _check(sol, "normalised NPA program")
    return sol


FEASIBILITY_MARGIN = 1e-9


def tsirelson_bisection(game: GameSpec, level="1+ab", tol: float = 1e-6,
                        lower: Optional[float] = None,
                        sdp_tol: Optional[sdp.Tolerances] = None) -> TsirelsonResult:
    """Bisect on ``alpha`` in ``[omega_l, 1]``.

    ``alpha`` is below the bound iff some relaxed behaviour has
    ``<V_mu - alpha S_mu, P> > 0``, decided with a fixed margin.
    """
    ms = build_moment_structure(game.scenario, level)
    lo = local_bound(game).value if lower is None else float(lower)
    hi = 1.0
    # upper end first: V <= S entrywise so alpha = 1 is never strictly beaten
    solves = 0
    last = None
    while hi - lo > tol:
        alpha = 0.5 * (lo + hi)
        problem, lay = _build_problem(game, ms, game.v_mu - alpha * game.s_mu, "normalized")
        sol = sdp.solve(problem, sdp_tol)
        solves += 1
        _check(sol, f"bisection step alpha={alpha:.9f}")
        if sol.dual_objective > FEASIBILITY_MARGIN:
            lo = alpha
            last = (sol, lay)
        else:
            hi = alpha
    behaviour = None
    if last is not None:
        behaviour = ms.behaviour_map @ last[1].moments(last[0].X[0])
    return TsirelsonResult(hi, 1.0, True, ms.level, "bisection",
                           last[0] if last else None, behaviour, solves)
