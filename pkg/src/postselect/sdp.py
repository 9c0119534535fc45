"""Small dense semidefinite programming solver.

Solves

    maximize    <C, X>
    subject to  <A_i, X> = b_i,   i = 1..m
                X = diag(X_1, ..., X_k) PSD

where each block is either a dense symmetric matrix or a nonnegative
vector (a diagonal block). The dual is

    minimize    b^T y
    subject to  Z = sum_i y_i A_i - C  PSD.

The method is an infeasible primal-dual path-following interior point
method with the HKM search direction and Mehrotra predictor-corrector
steps. It is meant for the tens-of-rows moment matrices produced by the
NPA relaxations in this package, not for large sparse problems.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import ShapeError

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_LIMIT = "numerical-limit"


@dataclass(frozen=True)
class Block:
    size: int
    diagonal: bool = False

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.size,) if self.diagonal else (self.size, self.size)


@dataclass
class SDPProblem:
    """Equality-form SDP.

    ``C[k]`` is the objective part on block ``k``; ``A[k]`` stacks the
    constraint matrices on block ``k`` with shape ``(m, n, n)`` for dense
    blocks and ``(m, n)`` for diagonal ones.
    """

    blocks: list[Block]
    C: list[np.ndarray]
    A: list[np.ndarray]
    b: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        m = self.b.size
        if not (len(self.blocks) == len(self.C) == len(self.A)):
            raise ShapeError("blocks, C and A must have one entry per block")
        for k, blk in enumerate(self.blocks):
            self.C[k] = np.asarray(self.C[k], dtype=float)
            self.A[k] = np.asarray(self.A[k], dtype=float)
            if self.C[k].shape != blk.shape:
                raise ShapeError(f"C block {k} has shape {self.C[k].shape}, expected {blk.shape}")
            if self.A[k].shape != (m, *blk.shape):
                raise ShapeError(f"A block {k} has shape {self.A[k].shape}, expected {(m, *blk.shape)}")
            if not blk.diagonal:
                if not np.allclose(self.C[k], self.C[k].T, atol=1e-14):
                    raise ShapeError(f"C block {k} is not symmetric")
                if not np.allclose(self.A[k], self.A[k].transpose(0, 2, 1), atol=1e-14):
                    raise ShapeError(f"A block {k} is not symmetric")

    @property
    def m(self) -> int:
        return self.b.size

    def apply_A(self, X: Sequence[np.ndarray]) -> np.ndarray:
        out = np.zeros(self.m)
        for blk, Ak, Xk in zip(self.blocks, self.A, X):
            out += Ak @ Xk if blk.diagonal else np.einsum("mij,ij->m", Ak, Xk)
        return out

    def apply_At(self, y: np.ndarray) -> list[np.ndarray]:
        return [np.tensordot(y, Ak, axes=1) for Ak in self.A]

    def objective(self, X: Sequence[np.ndarray]) -> float:
        return float(sum(_inner(Ck, Xk) for Ck, Xk in zip(self.C, X)))

    def write_sdpa(self, path) -> None:
        """Dump in SDPA sparse format (one entry per line: matrix block row col value).

        Matrix 0 is the objective. SDPA's dual form coincides with the
        maximization solved here, so external solvers read it unchanged.
        """
        lines = [f"{self.m}", f"{len(self.blocks)}"]
        lines.append(" ".join(str(-b.size if b.diagonal else b.size) for b in self.blocks))
        lines.append(" ".join(repr(float(v)) for v in self.b))
        mats = [self.C] + [[Ak[i] for Ak in self.A] for i in range(self.m)]
        for idx, per_block in enumerate(mats):
            for k, (blk, M) in enumerate(zip(self.blocks, per_block)):
                if blk.diagonal:
                    for r in np.flatnonzero(M):
                        lines.append(f"{idx} {k + 1} {r + 1} {r + 1} {float(M[r])!r}")
                else:
                    rows, cols = np.nonzero(np.triu(M))
                    for r, c in zip(rows, cols):
                        lines.append(f"{idx} {k + 1} {r + 1} {c + 1} {float(M[r, c])!r}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read_sdpa(cls, path) -> "SDPProblem":
        rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip() and ln[0] not in "*\""]
        m = int(rows[0][0])
        sizes = [int(v) for v in rows[2]]
        blocks = [Block(abs(s), diagonal=s < 0) for s in sizes]
        b = np.array([float(v) for v in rows[3]])
        C = [np.zeros(blk.shape) for blk in blocks]
        A = [np.zeros((m, *blk.shape)) for blk in blocks]
        for row in rows[4:]:
            idx, k, r, c = (int(v) for v in row[:4])
            val = float(row[4])
            k -= 1
            r -= 1
            c -= 1
            target = C[k] if idx == 0 else A[k][idx - 1]
            if blocks[k].diagonal:
                target[r] = val
            else:
                target[r, c] = val
                target[c, r] = val
        return cls(blocks, C, A, b)


@dataclass(frozen=True)
class Tolerances:
    gap: float = 1e-10
    feasibility: float = 1e-10
    max_iter: int = 200
    step_fraction: float = 0.98
    infeasibility: float = 1e-8
    # acceptance thresholds used when progress stalls before the tight targets
    accept_gap: float = 1e-7
    accept_feasibility: float = 1e-8


@dataclass
class SDPSolution:
    status: Status
    X: list[np.ndarray]
    y: np.ndarray
    Z: list[np.ndarray]
    primal_objective: float
    dual_objective: float
    iterations: int
    residuals: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    @property
    def value(self) -> float:
        return 0.5 * (self.primal_objective + self.dual_objective)


def _inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.vdot(a, b))


def _max_step(X: np.ndarray, dX: np.ndarray, diagonal: bool) -> float:
    if diagonal:
        neg = dX < 0
        if not neg.any():
            return np.inf
        return float(np.min(-X[neg] / dX[neg]))
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Linv_dX = sla.solve_triangular(L, dX, lower=True)
    W = sla.solve_triangular(L, Linv_dX.T, lower=True)
    lam = np.linalg.eigvalsh(0.5 * (W + W.T))[0]
    return np.inf if lam >= 0 else float(-1.0 / lam)


def _min_eig(M: np.ndarray, diagonal: bool) -> float:
    if diagonal:
        return float(M.min()) if M.size else 0.0
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def _sym(M):
    return 0.5 * (M + M.T)


def _is_pd(M: np.ndarray, diagonal: bool) -> bool:
    if diagonal:
        return bool(np.all(M > 0))
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True


def _safe_update(V, dV, alpha, blocks):
    """Step ``V + alpha dV``, shrinking alpha until every block stays definite."""
    for _ in range(60):
        new = [v + alpha * d if b.diagonal else _sym(v + alpha * d) for v, d, b in zip(V, dV, blocks)]
        if all(_is_pd(n, b.diagonal) for n, b in zip(new, blocks)):
            return new, alpha
        alpha *= 0.8
    return V, 0.0


def solve(problem: SDPProblem, tol: Optional[Tolerances] = None) -> SDPSolution:
    """Solve ``problem``; deterministic for a given input."""
    tol = tol or Tolerances()
    blocks = problem.blocks
    # row equilibration: unit Frobenius norm per constraint
    row_norm = np.sqrt(sum((Ak.reshape(problem.m, -1) ** 2).sum(axis=1) for Ak in problem.A)) if problem.m else np.zeros(0)
    row_norm = np.where(row_norm > 0, row_norm, 1.0)
    P = SDPProblem(list(blocks), [c.copy() for c in problem.C],
                   [Ak / row_norm.reshape((-1,) + (1,) * (Ak.ndim - 1)) for Ak in problem.A],
                   problem.b / row_norm)
    # internal minimization form: min <-C, X>
    Cm = [-Ck for Ck in P.C]
    nu = sum(b.size for b in blocks)

    norm_b = float(np.linalg.norm(P.b))
    norm_C = float(np.sqrt(sum(_inner(c, c) for c in Cm)))

    X, Z = [], []
    for blk, Ak, Ck in zip(blocks, P.A, Cm):
        n = blk.size
        scale_a = np.sqrt((Ak.reshape(P.m, -1) ** 2).sum(axis=1)) if P.m else np.zeros(0)
        xi = max(10.0, np.sqrt(n), n * float(np.max((1 + np.abs(P.b)) / (1 + scale_a))) if P.m else 10.0)
        eta = max(10.0, np.sqrt(n), float(np.max(scale_a)) if P.m else 0.0, float(np.linalg.norm(Ck)))
        if blk.diagonal:
            X.append(np.full(n, xi))
            Z.append(np.full(n, eta))
        else:
            X.append(xi * np.eye(n))
            Z.append(eta * np.eye(n))
    y = np.zeros(P.m)
    # Gram matrix of the (equilibrated) constraints, used to project out the primal
    # residual that an ill-conditioned Schur solve leaves in dX
    flat_A = np.hstack([Ak.reshape(P.m, -1) for Ak in P.A]) if P.m else np.zeros((0, 0))
    gram_pinv = np.linalg.pinv(flat_A @ flat_A.T) if P.m else np.zeros((0, 0))

    def residuals(X, y, Z):
        rp = P.b - P.apply_A(X)
        Aty = P.apply_At(y)
        Rd = [Ck - Zk - Ak_y for Ck, Zk, Ak_y in zip(Cm, Z, Aty)]
        return rp, Rd

    def direction(X, Z, Zinv, rp, Rd, rc_terms):
        """rc_terms(k) returns R_c Z^{-1} for block k (HKM)."""
        M = np.zeros((P.m, P.m))
        rhs = rp.copy()
        for k, blk in enumerate(blocks):
            Ak = P.A[k]
            if blk.diagonal:
                d = X[k] / Z[k]
                M += (Ak * d) @ Ak.T
                rhs -= Ak @ (rc_terms(k) - X[k] * Rd[k] / Z[k])
            else:
                G = X[k] @ Ak @ Zinv[k]
                M += np.einsum("ikl,jlk->ij", Ak, G)
                T = rc_terms(k) - X[k] @ Rd[k] @ Zinv[k]
                rhs -= np.einsum("mij,ji->m", Ak, T)
        M = _sym(M)
        try:
            cf = sla.cho_factor(M)
            dy = sla.cho_solve(cf, rhs)
        except np.linalg.LinAlgError:
            dy = np.linalg.lstsq(M, rhs, rcond=None)[0]
        Atdy = P.apply_At(dy)
        dZ = [Rdk - Ak_dy for Rdk, Ak_dy in zip(Rd, Atdy)]
        dX = []
        for k, blk in enumerate(blocks):
            if blk.diagonal:
                dX.append(rc_terms(k) - X[k] * dZ[k] / Z[k])
            else:
                dX.append(_sym(rc_terms(k) - X[k] @ dZ[k] @ Zinv[k]))
        if P.m:
            fix = P.apply_At(gram_pinv @ (rp - P.apply_A(dX)))
            dX = [dx + f for dx, f in zip(dX, fix)]
        return dX, dy, dZ

    def steps(X, Z, dX, dZ):
        ap = min(_max_step(Xk, dXk, b.diagonal) for Xk, dXk, b in zip(X, dX, blocks))
        ad = min(_max_step(Zk, dZk, b.diagonal) for Zk, dZk, b in zip(Z, dZ, blocks))
        return ap, ad

    status = Status.NUMERICAL_LIMIT
    best = (np.inf, X, y, Z, {}, 0)
    it = 0
    stall = 0
    info = {}
    for it in range(1, tol.max_iter + 1):
        rp, Rd = residuals(X, y, Z)
        pobj = -sum(_inner(c, x) for c, x in zip(Cm, X))
        dobj = -float(P.b @ y)
        gap_abs = sum(_inner(x, z) for x, z in zip(X, Z))
        mu = gap_abs / nu
        pinf = float(np.linalg.norm(rp)) / (1 + norm_b)
        dinf = float(np.sqrt(sum(_inner(r, r) for r in Rd))) / (1 + norm_C)
        relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        info = dict(primal_infeasibility=pinf, dual_infeasibility=dinf, relative_gap=relgap, mu=mu,
                    max_constraint_violation=float(np.max(np.abs(rp))) if P.m else 0.0)
        if pinf <= tol.feasibility and dinf <= tol.feasibility and relgap <= tol.gap:
            status = Status.OPTIMAL
            break
        merit = max(pinf, dinf, relgap)
        if merit < best[0]:
            best = (merit, X, y, Z, info, it)
        elif merit > 100 * best[0] and best[0] < tol.accept_gap:
            # late-stage breakdown of the Schur system: keep the best iterate
            break
        # primal infeasibility certificate: -A^T y PSD, b^T y > 0 (min form)
        by = float(P.b @ y)
        if by > 0:
            Aty = P.apply_At(y)
            worst = min(_min_eig(-a, b.diagonal) for a, b in zip(Aty, blocks))
            if worst / by >= -tol.infeasibility and by > 1e6 * (1 + norm_C):
                status = Status.INFEASIBLE
                break
        # dual infeasibility certificate: X PSD, A(X) ~ 0, <C, X> < 0 (min form)
        cx = sum(_inner(c, x) for c, x in zip(Cm, X))
        if cx < 0:
            ax = float(np.linalg.norm(P.apply_A(X)))
            if ax / -cx <= tol.infeasibility and -cx > 1e6 * (1 + norm_b):
                status = Status.UNBOUNDED
                break

        Zinv = [None if b.diagonal else np.linalg.inv(Zk) for Zk, b in zip(Z, blocks)]
        for k, b in enumerate(blocks):
            if not b.diagonal:
                Zinv[k] = _sym(Zinv[k])

        # predictor: R_c = -XZ  ->  R_c Z^{-1} = -X
        dXp, dyp, dZp = direction(X, Z, Zinv, rp, Rd, lambda k: -X[k])
        ap, ad = steps(X, Z, dXp, dZp)
        ap, ad = min(1.0, ap), min(1.0, ad)
        new_gap = sum(_inner(x + ap * dx, z + ad * dz) for x, dx, z, dz in zip(X, dXp, Z, dZp))
        sigma = min(1.0, max(0.0, new_gap / gap_abs)) ** 3 if gap_abs > 0 else 0.0

        def corrector(k):
            b = blocks[k]
            if b.diagonal:
                return (sigma * mu - X[k] * Z[k] - dXp[k] * dZp[k]) / Z[k]
            return sigma * mu * Zinv[k] - X[k] - dXp[k] @ dZp[k] @ Zinv[k]

        dX, dy, dZ = direction(X, Z, Zinv, rp, Rd, corrector)
        if not (np.all(np.isfinite(dy)) and all(np.all(np.isfinite(d)) for d in dX + dZ)):
            break
        ap, ad = steps(X, Z, dX, dZ)
        ap = min(1.0, tol.step_fraction * ap)
        ad = min(1.0, tol.step_fraction * ad)
        X, ap = _safe_update(X, dX, ap, blocks)
        Z, ad = _safe_update(Z, dZ, ad, blocks)
        y = y + ad * dy
        log.debug("it=%d ap=%.3g ad=%.3g pinf=%.3g dinf=%.3g gap=%.3g mu=%.3g sigma=%.3g", it, ap, ad, pinf, dinf, relgap, mu, sigma)
        stall = stall + 1 if max(ap, ad) < 1e-9 else 0
        if stall >= 5:
            break

    if status is Status.NUMERICAL_LIMIT and best[4]:
        _, X, y, Z, info, it = best
        if (info["max_constraint_violation"] <= tol.accept_feasibility
                and info["dual_infeasibility"] <= tol.accept_feasibility
                and info["relative_gap"] <= tol.accept_gap):
            status = Status.OPTIMAL
    if status is Status.NUMERICAL_LIMIT:
        log.warning("SDP stopped at the numerical limit after %d iterations: %s", it, info)

    X_out = [x.copy() for x in X]
    y_out = -y / row_norm
    pobj = problem.objective(X_out)
    dobj = float(problem.b @ y_out)
    info["max_constraint_violation"] = float(np.max(np.abs(problem.apply_A(X_out) - problem.b))) if problem.m else 0.0
    return SDPSolution(status, X_out, y_out, [z.copy() for z in Z], pobj, dobj, it, info)


def kkt_report(problem: SDPProblem, sol: SDPSolution) -> dict:
    """Residuals of a returned solution, recomputed from scratch."""
    viol = np.abs(problem.apply_A(sol.X) - problem.b)
    Aty = problem.apply_At(sol.y)
    dual_res = max(float(np.max(np.abs(a - c - z))) for a, c, z in zip(Aty, problem.C, sol.Z))
    min_eig_x = min(_min_eig(x, b.diagonal) for x, b in zip(sol.X, problem.blocks))
    norm_x = max(float(np.max(np.abs(x))) for x in sol.X)
    min_eig_z = min(_min_eig(z, b.diagonal) for z, b in zip(sol.Z, problem.blocks))
    pobj = problem.objective(sol.X)
    dobj = float(problem.b @ sol.y)
    return dict(
        max_constraint_violation=float(viol.max()) if viol.size else 0.0,
        dual_residual=dual_res,
        min_eig_X=min_eig_x,
        norm_X=norm_x,
        min_eig_Z=min_eig_z,
        primal_objective=pobj,
        dual_objective=dobj,
        duality_gap=abs(dobj - pobj),
    )


def check_kkt(problem: SDPProblem, sol: SDPSolution) -> list[str]:
    """Violations of the optimality invariants (empty when all hold)."""
    r = kkt_report(problem, sol)
    bad = []
    if r["min_eig_X"] < -1e-9 * max(1.0, r["norm_X"]):
        bad.append(f"X not PSD: min eigenvalue {r['min_eig_X']:.3g}")
    if r["max_constraint_violation"] > 1e-8:
        bad.append(f"constraint violation {r['max_constraint_violation']:.3g}")
    if r["duality_gap"] > 1e-7 * (1 + abs(r["primal_objective"])):
        bad.append(f"duality gap {r['duality_gap']:.3g}")
    return bad
