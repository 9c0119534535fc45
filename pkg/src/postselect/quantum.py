"""Quantum strategies: pure bipartite states with rank-1 projective measurements.

A strategy stores the state as a vector of length d*d (index ``i*d + j``
for ``|i>|j>``) and, per input, a d x d matrix whose columns are the
measurement vectors. Scenarios with fewer outcomes than ``d`` coarse-grain
the extra basis vectors into the last outcome.

Optimisation runs over real charts (hyperspherical state angles and
ordered Givens rotations for bases) with Nelder-Mead restarts.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .efficiency import apply_efficiency_array
from .errors import NumericalError, ParameterError, ShapeError, ValidationError
from .scenario import Behaviour, GameSpec, Scenario, hardy_conditions
from .statistics import kl_divergence

STATE_TOL = 1e-12
BASIS_TOL = 1e-10


@dataclass(frozen=True)
class QuantumStrategy:
    dim: int
    state: np.ndarray
    alice_bases: tuple[np.ndarray, ...]
    bob_bases: tuple[np.ndarray, ...]

    def __post_init__(self):
        d = self.dim
        if d < 1:
            raise ParameterError("dimension must be positive")
        psi = np.asarray(self.state)
        if psi.shape != (d * d,):
            raise ShapeError(f"state must have length {d * d}, got shape {psi.shape}")
        if abs(np.vdot(psi, psi).real - 1.0) > STATE_TOL:
            raise ValidationError(f"state norm^2 is {np.vdot(psi, psi).real!r}, expected 1")
        for party, bases in (("alice", self.alice_bases), ("bob", self.bob_bases)):
            if len(bases) < 1:
                raise ShapeError(f"{party} needs at least one input")
            for x, B in enumerate(bases):
                B = np.asarray(B)
                if B.shape != (d, d):
                    raise ShapeError(f"{party} basis {x} must be {d}x{d}")
                if np.max(np.abs(B.conj().T @ B - np.eye(d))) > BASIS_TOL:
                    raise ValidationError(f"{party} basis {x} is not orthonormal")
        object.__setattr__(self, "state", psi)
        object.__setattr__(self, "alice_bases", tuple(np.asarray(b) for b in self.alice_bases))
        object.__setattr__(self, "bob_bases", tuple(np.asarray(b) for b in self.bob_bases))

    @property
    def ma(self) -> int:
        return len(self.alice_bases)

    @property
    def mb(self) -> int:
        return len(self.bob_bases)


def _coarse_grain(probs: np.ndarray, oa: int, ob: int) -> np.ndarray:
    """probs has shape (ma, mb, d, d); merge outcomes >= o-1 into o-1."""
    d = probs.shape[-1]
    if oa > d or ob > d:
        raise ShapeError(f"scenario needs {max(oa, ob)} outcomes but the local dimension is {d}")
    if oa < d:
        probs = np.concatenate([probs[:, :, : oa - 1], probs[:, :, oa - 1 :].sum(axis=2, keepdims=True)], axis=2)
    if ob < d:
        probs = np.concatenate([probs[..., : ob - 1], probs[..., ob - 1 :].sum(axis=3, keepdims=True)], axis=3)
    return probs


def _behaviour_array(psi: np.ndarray, A: np.ndarray, B: np.ndarray, oa: int, ob: int) -> np.ndarray:
    d = A.shape[-1]
    M = psi.reshape(d, d)
    # amp[x, y, a, b] = <A_x^a B_y^b | psi>
    amp = np.einsum("xia,ij,yjb->xyab", A.conj(), M, B.conj(), optimize=True)
    probs = (amp * amp.conj()).real if np.iscomplexobj(amp) else amp * amp
    return _coarse_grain(probs, oa, ob).reshape(-1)


def behaviour_from_strategy(strategy: QuantumStrategy, scenario: Optional[Scenario] = None) -> Behaviour:
    """Born-rule behaviour of a strategy, on ``scenario`` (default: d outcomes)."""
    sc = scenario or Scenario(strategy.ma, strategy.mb, strategy.dim, strategy.dim)
    if (sc.ma, sc.mb) != (strategy.ma, strategy.mb):
        raise ShapeError("scenario inputs do not match the strategy")
    p = _behaviour_array(strategy.state, np.stack(strategy.alice_bases), np.stack(strategy.bob_bases), sc.oa, sc.ob)
    p = np.clip(p, 0.0, 1.0)
    return Behaviour(sc, p)


def hardy_measurement_family(z: float) -> QuantumStrategy:
    """Two-qubit family with ``z = alpha**2`` giving a Hardy behaviour for 0 < z < 1."""
    if not 0.0 <= z < 1.0:
        raise ParameterError(f"z must lie in [0, 1), got {z}")
    al, be = math.sqrt(z), math.sqrt(1.0 - z)
    n = 1.0 / math.sqrt(1.0 - z * z)
    state = n * np.array([0.0, al * be, al * be, be * be])
    rotated = np.array([[be, al], [-al, be]])  # columns: beta|0> - alpha|1>, alpha|0> + beta|1>
    comp = np.eye(2)
    return QuantumStrategy(2, state, (rotated, comp), (rotated.copy(), comp.copy()))


# -- real charts ----------------------------------------------------------------


def chart_size(d: int, ma: int, mb: int) -> int:
    return d * d - 1 + (ma + mb) * (d * (d - 1) // 2)


def _sphere(angles: np.ndarray) -> np.ndarray:
    """Unit vector from hyperspherical angles; all-zero angles give e_0."""
    n = angles.size + 1
    v = np.empty(n)
    s = 1.0
    for i, t in enumerate(angles):
        v[i] = s * math.cos(t)
        s *= math.sin(t)
    v[n - 1] = s
    return v


def _rotations(params: np.ndarray, d: int) -> np.ndarray:
    """Stack of rotations from rows of ``d(d-1)/2`` Givens angles.

    Row ``r`` gives the product of plane rotations over pairs ``(i, j)``,
    ``i < j``, in lexicographic order; zero angles give the identity. The
    ordered product of all plane rotations covers SO(d).
    """
    params = np.atleast_2d(params)
    n = params.shape[0]
    R = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    for col, (i, j) in enumerate(zip(*np.triu_indices(d, 1))):
        c = np.cos(params[:, col])[:, None]
        s = np.sin(params[:, col])[:, None]
        ri, rj = R[:, i, :].copy(), R[:, j, :]
        R[:, i, :] = c * ri - s * rj
        R[:, j, :] = s * ri + c * rj
    return R


def _rotation(params: np.ndarray, d: int) -> np.ndarray:
    return _rotations(np.asarray(params, dtype=float)[None, :], d)[0]


def _split(params: np.ndarray, d: int, ma: int, mb: int):
    params = np.asarray(params, dtype=float)
    if params.shape != (chart_size(d, ma, mb),):
        raise ShapeError(f"chart for d={d}, ma={ma}, mb={mb} needs {chart_size(d, ma, mb)} parameters, got {params.size}")
    ns, nb = d * d - 1, d * (d - 1) // 2
    rots = params[ns:].reshape(ma + mb, nb)
    return params[:ns], rots


def _chart_arrays(params: np.ndarray, d: int, ma: int, mb: int):
    state_p, rots = _split(params, d, ma, mb)
    bases = _rotations(rots, d)
    return _sphere(state_p), bases[:ma], bases[ma:]


def parameterize(params: Sequence[float], d: int, ma: int, mb: int) -> QuantumStrategy:
    """Strategy from a real chart: ``d*d - 1`` state angles, then
    ``d(d-1)/2`` Givens angles per basis (Alice's inputs first).

    Rotations reach every rank-1 projective measurement since flipping the
    sign of a basis vector leaves its projector unchanged.
    """
    psi, A, B = _chart_arrays(np.asarray(params, dtype=float), d, ma, mb)
    return QuantumStrategy(d, psi, tuple(A), tuple(B))


# -- optimiser --------------------------------------------------------------------


@dataclass(frozen=True)
class OptimizerOptions:
    restarts: int = 20
    max_evals: int = 20000
    tol: float = 1e-10
    seed: int = 0
    step: float = 0.5

    def __post_init__(self):
        if self.restarts < 1 or self.max_evals < 1 or self.tol <= 0 or self.step <= 0:
            raise ParameterError("optimizer options must be positive")


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    n_evals: int
    history: list = field(default_factory=list)


def nelder_mead(objective: Callable[[np.ndarray], float], x0: Sequence[float],
                options: OptimizerOptions = OptimizerOptions()) -> MinimizeResult:
    """Minimise ``objective`` from ``x0`` with a standard Nelder-Mead simplex.

    Coefficients are 1, 2, 0.5 and shrink 0.5; the run stops once the
    spread of simplex values drops below ``options.tol``. ``history`` is
    the nonincreasing sequence of best values seen.
    """
    x0 = np.asarray(x0, dtype=float)
    best = [math.inf, x0.copy()]
    history: list[float] = []
    count = [0]

    def wrapped(x):
        v = float(objective(x))
        count[0] += 1
        if not math.isfinite(v):
            raise NumericalError(f"objective returned {v} at evaluation {count[0]}, x={x.tolist()}")
        if v < best[0]:
            best[0] = v
            best[1] = np.array(x, dtype=float)
            history.append(v)
        return v

    wrapped(x0)
    n = x0.size
    simplex = np.vstack([x0, x0 + options.step * np.eye(n)]) if n else x0[None, :]
    if n:
        minimize(wrapped, x0, method="Nelder-Mead",
                 options=dict(initial_simplex=simplex, fatol=options.tol, xatol=np.inf,
                              maxfev=options.max_evals, adaptive=False))
    return MinimizeResult(best[1], best[0], count[0], history)


# -- power maximisation ---------------------------------------------------------


@dataclass(frozen=True)
class PowerResult:
    strategy: QuantumStrategy
    params: np.ndarray
    power: float
    omega: Optional[float]
    gamma: float
    eta: float
    restart: int

    @property
    def below_local(self) -> bool:
        return self.omega is None or self.power == 0.0


def _score(game: GameSpec, p: np.ndarray, omega_l: float):
    gamma = float(game.s_mu @ p)
    if gamma <= 0:
        return 0.0, None, 0.0
    omega = min(1.0, max(0.0, float(game.v_mu @ p) / gamma))
    d = gamma * kl_divergence(omega, omega_l)
    return (d if omega >= omega_l else -d), omega, gamma


def _power_objective(game: GameSpec, d: int, eta: float, omega_l: float):
    sc = game.scenario
    pairs = sc.ma * sc.mb

    def behaviour(params):
        psi, A, B = _chart_arrays(params, d, sc.ma, sc.mb)
        p = _behaviour_array(psi, A, B, sc.oa, sc.ob)
        return apply_efficiency_array(p, eta, pairs) if eta != 1.0 else p

    def objective(params):
        # signed surrogate: continuous through omega = omega_l so the simplex can climb
        return -_score(game, behaviour(params), omega_l)[0]

    return objective, behaviour


def _random_starts(n_params: int, options: OptimizerOptions, x0):
    rng = np.random.default_rng(options.seed)
    starts = []
    for r in range(options.restarts):
        point = rng.uniform(-math.pi, math.pi, n_params)
        if r == 0 and x0 is not None:
            point = np.asarray(x0, dtype=float)
        starts.append(point)
    return starts


def maximize_power(game: GameSpec, d: int = 2, eta: float = 1.0,
                   options: OptimizerOptions = OptimizerOptions(), x0=None,
                   omega_l: Optional[float] = None) -> PowerResult:
    """Best statistical power ``gamma * D(omega || omega_l)`` over real d-dimensional strategies.

    With ``eta < 1`` the efficiency map is applied before scoring. The first
    restart starts from ``x0`` when given. A restart ending below the local
    bound scores 0; ties between restarts go to the lowest restart index.
    """
    if d < 2:
        raise ParameterError("dimension must be at least 2")
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"eta must lie in [0, 1], got {eta}")
    sc = game.scenario
    if eta != 1.0 and (sc.oa != 2 or sc.ob != 2):
        raise ShapeError("the efficiency model is defined for two outcomes per party")
    if omega_l is None:
        from .local_bound import local_bound

        omega_l = local_bound(game).value
    objective, behaviour = _power_objective(game, d, eta, omega_l)
    n_params = chart_size(d, sc.ma, sc.mb)
    best = None
    for r, start in enumerate(_random_starts(n_params, options, x0)):
        res = nelder_mead(objective, start, options)
        score, omega, gamma = _score(game, behaviour(res.x), omega_l)
        power = max(0.0, score)
        if best is None or power > best[0]:
            best = (power, r, res.x, omega, gamma)
    power, r, x, omega, gamma = best
    return PowerResult(parameterize(x, d, sc.ma, sc.mb), x, power, omega, gamma, eta, r)


def scan_power(game: GameSpec, etas: Sequence[float], dim: int = 2,
               options: OptimizerOptions = OptimizerOptions(restarts=3),
               omega_l: Optional[float] = None) -> list[PowerResult]:
    """``maximize_power`` over an efficiency grid with continuation.

    Points are visited from the highest efficiency down; each point starts
    one restart from the previous optimum. Results follow the input order.
    """
    if omega_l is None:
        from .local_bound import local_bound

        omega_l = local_bound(game).value
    order = sorted(range(len(etas)), key=lambda i: -etas[i])
    out: list[Optional[PowerResult]] = [None] * len(etas)
    warm = None
    for j, i in enumerate(order):
        opts = options if j == 0 else OptimizerOptions(
            restarts=max(1, options.restarts), max_evals=options.max_evals,
            tol=options.tol, seed=options.seed + j, step=options.step)
        res = maximize_power(game, dim, float(etas[i]), opts, x0=warm, omega_l=omega_l)
        out[i] = res
        if res.power > 0:
            warm = res.params
    return out


# -- generalised Hardy probability ------------------------------------------------


@dataclass(frozen=True)
class HardyProbabilityResult:
    s: int
    k: int
    strategy: QuantumStrategy
    p_hardy: float
    violation: float

    @property
    def power(self) -> float:
        return self.p_hardy / (2 * self.s)


@functools.lru_cache(maxsize=None)
def _pair_masks(k: int) -> dict:
    a, b = np.indices((k, k))
    return {"lt": (a < b).astype(float), "gt": (a > b).astype(float)}


def _pair_operator(A: np.ndarray, B: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Sum of |A^a B^b><A^a B^b| over the outcome pairs selected by ``mask``."""
    k = A.shape[1]
    pa = np.einsum("ia,ja->aij", A, A).reshape(k, k * k)
    # gb[a] = sum_b mask[a, b] |B^b><B^b|
    gb = np.einsum("kb,ab,lb->akl", B, mask, B).reshape(k, k * k)
    op = (pa.T @ gb).reshape(k, k, k, k)
    return op.transpose(0, 2, 1, 3).reshape(k * k, k * k)


def _hardy_operators(s: int, A: np.ndarray, B: np.ndarray):
    masks = _pair_masks(A.shape[1])
    target = _pair_operator(A[s - 1], B[s - 1], masks["lt"])
    cond = sum(_pair_operator(A[x], B[y], masks[m]) for x, y, m in hardy_conditions(s))
    return target, cond


# the search climbs through light penalties, settles at 1e3, then polishes feasibility
PENALTY_SCHEDULE = (1.0, 10.0, 1e2, 1e3, 1e5, 1e7)
SEARCH_PENALTY = 1e3
_MAX_SIMPLEX_RESTARTS = 6


def maximize_hardy_probability(s: int, k: int, options: OptimizerOptions = OptimizerOptions(restarts=5),
                               penalties: Sequence[float] = PENALTY_SCHEDULE) -> HardyProbabilityResult:
    """Largest ``P(a<b | s-1, s-1)`` subject to the generalised Hardy conditions.

    Uses two k-dimensional real qudits. For fixed measurements the objective
    ``<psi|T - w C|psi>`` is maximised by the top eigenvector, so only the
    bases are searched. ``w`` follows ``penalties``; each stage reruns the
    simplex from its last point until it stops improving. Restarts are
    compared on the final target probability minus ``1e3`` times the
    remaining violation.
    """
    if s < 2 or k < 2:
        raise ParameterError(f"need s >= 2 and k >= 2, got s={s}, k={k}")
    nb = k * (k - 1) // 2
    n_params = 2 * s * nb

    def bases(params):
        rots = np.asarray(params).reshape(2 * s, nb)
        R = _rotations(rots, k)
        return R[:s], R[s:]

    def top(params, w):
        A, B = bases(params)
        T, C = _hardy_operators(s, A, B)
        vals, vecs = np.linalg.eigh(T - w * C)
        return vals[-1], vecs[:, -1], T, C

    best = None
    rng = np.random.default_rng(options.seed)
    for _ in range(options.restarts):
        x = rng.uniform(-math.pi, math.pi, n_params)
        for w in penalties:
            f = math.inf
            for _ in range(_MAX_SIMPLEX_RESTARTS):
                res = nelder_mead(lambda p, w=w: -top(p, w)[0], x, options)
                x = res.x
                if res.fun > f - options.tol:
                    break
                f = res.fun
        _, psi, T, C = top(x, penalties[-1])
        p = float(psi @ T @ psi)
        viol = float(psi @ C @ psi)
        merit = p - SEARCH_PENALTY * viol
        if best is None or merit > best[0]:
            best = (merit, x, psi, p, viol)
    _, x, psi, p, viol = best
    A, B = bases(x)
    if psi[np.argmax(np.abs(psi))] < 0:
        psi = -psi
    strat = QuantumStrategy(k, psi / np.linalg.norm(psi), tuple(A), tuple(B))
    return HardyProbabilityResult(s, k, strat, p, viol)


def hardy_probability_of(strategy: QuantumStrategy, s: int) -> tuple[float, float]:
    """(target probability, summed condition probability) recomputed from the behaviour."""
    from .scenario import less_than_aggregate

    P = behaviour_from_strategy(strategy)
    target = less_than_aggregate(P, s - 1, s - 1, "lt")
    viol = sum(less_than_aggregate(P, x, y, m) for x, y, m in hardy_conditions(s))
    return target, viol
