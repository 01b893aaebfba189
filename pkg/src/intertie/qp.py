"""Convex quadratic programming with exact dual recovery.

Canonical form:

    minimize    0.5 x'Qx + c'x
    subject to  A x = b          (duals y)
                G x <= h         (duals z >= 0)

Sign convention: multipliers enter stationarity as ``Qx + c + A'y + G'z = 0``,
so perturbing ``b`` by delta changes the optimal value by ``-y'delta`` (and
likewise ``-z'delta`` for ``h``). Equality duals on power-balance rows are
therefore locational marginal prices directly.

The backend is cvxopt's interior-point cone QP run at moderate tolerance,
followed by an active-set refinement ("polish") that re-solves the KKT
system restricted to the active set the IPM identified. Polishing brings
KKT residuals to machine precision on non-degenerate problems, which the
pricing and settlement layers rely on; when it fails the solver falls back
to a tight interior-point pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from cvxopt import matrix as cvxmat
from cvxopt import solvers as cvxsolvers

__all__ = [
    "QpProblem",
    "QpSolution",
    "QpError",
    "QpInfeasible",
    "QpMaxIterations",
    "PreparedQp",
    "solve",
    "feasibility_solve",
]

DEFAULT_TOL = 1e-8

_FAST_OPTIONS = {
    "show_progress": False,
    "abstol": 1e-9,
    "reltol": 1e-9,
    "feastol": 1e-8,
    "maxiters": 60,
    "refinement": 1,
}
_TIGHT_OPTIONS = {
    "show_progress": False,
    "abstol": 1e-11,
    "reltol": 1e-11,
    "feastol": 1e-9,
    "maxiters": 150,
    "refinement": 2,
}


class QpError(Exception):
    pass


class QpInfeasible(QpError):
    """No point satisfies the constraints (beyond tolerance)."""


class QpMaxIterations(QpError):
    """No iterate reached the requested KKT tolerance."""


@dataclass
class QpProblem:
    Q: np.ndarray  # (n, n) symmetric PSD
    c: np.ndarray  # (n,)
    A: np.ndarray | None = None  # (me, n)
    b: np.ndarray | None = None
    G: np.ndarray | None = None  # (mi, n), rows of G x <= h
    h: np.ndarray | None = None
    var_names: tuple[str, ...] | None = None
    eq_names: tuple[str, ...] | None = None
    ineq_names: tuple[str, ...] | None = None

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def n_eq(self) -> int:
        return 0 if self.A is None else self.A.shape[0]

    @property
    def n_ineq(self) -> int:
        return 0 if self.G is None else self.G.shape[0]

    def check_shapes(self) -> None:
        n = self.n
        if self.Q.shape != (n, n):
            raise ValueError("Q must be square")
        if not np.allclose(self.Q, self.Q.T, atol=1e-10):
            raise ValueError("Q must be symmetric")
        if self.c.shape != (n,):
            raise ValueError("c has wrong length")
        if (self.A is None) != (self.b is None):
            raise ValueError("A and b must be given together")
        if (self.G is None) != (self.h is None):
            raise ValueError("G and h must be given together")
        if self.A is not None and (
            self.A.shape[1] != n or self.A.shape[0] != len(self.b)
        ):
            raise ValueError("equality system has inconsistent shape")
        if self.G is not None and (
            self.G.shape[1] != n or self.G.shape[0] != len(self.h)
        ):
            raise ValueError("inequality system has inconsistent shape")


@dataclass
class QpSolution:
    x: np.ndarray
    y: np.ndarray  # equality duals
    z: np.ndarray  # inequality duals, >= 0
    objective: float
    status: str  # "optimal" | "polished"
    iterations: int
    degenerate: tuple[int, ...] = ()  # active inequalities carrying a ~zero dual

    def kkt_residuals(self, p: QpProblem) -> dict[str, float]:
        """Max-norm stationarity / feasibility / complementarity residuals."""
        r = p.Q @ self.x + p.c
        if p.A is not None:
            r = r + p.A.T @ self.y
        if p.G is not None:
            r = r + p.G.T @ self.z
        out = {"stationarity": float(np.max(np.abs(r))) if len(r) else 0.0}
        out["eq"] = (
            float(np.max(np.abs(p.A @ self.x - p.b)))
            if p.A is not None and p.n_eq
            else 0.0
        )
        if p.G is not None and p.n_ineq:
            slack = p.h - p.G @ self.x
            out["ineq"] = float(max(0.0, -slack.min()))
            out["comp"] = float(np.max(np.abs(self.z * slack)))
            out["dual_sign"] = float(max(0.0, -self.z.min()))
        else:
            out["ineq"] = out["comp"] = out["dual_sign"] = 0.0
        return out


class PreparedQp:
    """A QP whose matrices are fixed; only ``c`` and ``b`` vary per solve.

    Prepares the cvxopt copies of Q, A, G, h once. This is the hot path of
    the coupling loop, which re-solves each area's problem a few hundred
    times with fresh prices.
    """

    def __init__(
        self,
        Q: np.ndarray,
        A: np.ndarray | None,
        G: np.ndarray | None,
        h: np.ndarray | None,
    ):
        self.Q = np.ascontiguousarray(Q, dtype=float)
        self.A = None if A is None else np.ascontiguousarray(A, dtype=float)
        self.G = None if G is None else np.ascontiguousarray(G, dtype=float)
        self.h = None if h is None else np.ascontiguousarray(h, dtype=float)
        self._P_cvx = cvxmat(self.Q)
        self._A_cvx = None if self.A is None else cvxmat(self.A)
        self._G_cvx = None if self.G is None else cvxmat(self.G)
        self._h_cvx = None if self.h is None else cvxmat(self.h)

    def problem(self, c: np.ndarray, b: np.ndarray | None) -> QpProblem:
        return QpProblem(self.Q, np.asarray(c, float), self.A, b, self.G, self.h)

    def solve(
        self,
        c: np.ndarray,
        b: np.ndarray | None = None,
        warm_start: np.ndarray | None = None,
        tol: float = DEFAULT_TOL,
    ) -> QpSolution:
        p = self.problem(c, None if b is None else np.asarray(b, float))
        if p.n_ineq == 0:
            sol = _solve_eq_kkt(p)
            _require_tol(sol, p, tol)
            return sol

        ipm, err = self._ipm(p, _FAST_OPTIONS, warm_start)
        best: QpSolution | None = None
        if ipm is not None:
            pol = _polish(p, ipm.x, ipm.z)
            for cand in (pol, ipm):
                if cand is not None and _within_tol(cand, p, tol):
                    cand.iterations = ipm.iterations
                    _flag_degenerate(cand, p)
                    return cand
            best = pol or ipm

        ipm2, err2 = self._ipm(p, _TIGHT_OPTIONS, warm_start, try_ldl=True)
        if ipm2 is not None:
            pol2 = _polish(p, ipm2.x, ipm2.z)
            for cand in (pol2, ipm2):
                if cand is not None and _within_tol(cand, p, tol):
                    cand.iterations = ipm2.iterations
                    _flag_degenerate(cand, p)
                    return cand
            best = best or pol2 or ipm2

        feasible, worst = feasibility_solve(p)
        if not feasible:
            raise QpInfeasible(f"worst constraint violation {worst:.3e}")
        if best is not None:
            res = max(best.kkt_residuals(p).values())
            raise QpMaxIterations(
                f"KKT residual {res:.2e} above tolerance (status {best.status})"
            )
        raise QpMaxIterations(err2 or err or "interior point method failed")

    def _ipm(self, p, options, warm_start, try_ldl=False):
        initvals = None
        if warm_start is not None and len(warm_start) == p.n:
            initvals = {"x": cvxmat(np.asarray(warm_start, dtype=float))}
        kkts = (None, "ldl") if try_ldl else (None,)
        raw = None
        err = None
        for kkt in kkts:
            try:
                raw = cvxsolvers.qp(
                    self._P_cvx,
                    cvxmat(np.ascontiguousarray(p.c, dtype=float)),
                    self._G_cvx,
                    self._h_cvx,
                    self._A_cvx,
                    None if p.b is None else cvxmat(np.ascontiguousarray(p.b, dtype=float)),
                    initvals=initvals,
                    kktsolver=kkt,
                    options=options,
                )
            except (ValueError, ArithmeticError, ZeroDivisionError) as exc:
                err = str(exc)
                continue
            if raw["status"] == "optimal":
                break
        if raw is None or raw["x"] is None:
            return None, err
        x = np.array(raw["x"]).ravel()
        y = np.array(raw["y"]).ravel() if p.n_eq else np.zeros(0)
        z = np.maximum(np.array(raw["z"]).ravel(), 0.0)
        obj = 0.5 * x @ p.Q @ x + p.c @ x
        return (
            QpSolution(x, y, z, float(obj), raw["status"], int(raw["iterations"])),
            err,
        )


def _tol_scale(p: QpProblem) -> float:
    scale = 1.0 + (float(np.max(np.abs(p.c))) if p.n else 0.0)
    if p.b is not None and len(p.b):
        scale = max(scale, 1.0 + float(np.max(np.abs(p.b))))
    return scale


def _within_tol(sol: QpSolution, p: QpProblem, tol: float) -> bool:
    return max(sol.kkt_residuals(p).values()) <= tol * _tol_scale(p)


def _require_tol(sol: QpSolution, p: QpProblem, tol: float) -> None:
    if not _within_tol(sol, p, tol):
        res = max(sol.kkt_residuals(p).values())
        raise QpMaxIterations(f"KKT residual {res:.2e} above tolerance")


def _flag_degenerate(sol: QpSolution, p: QpProblem) -> None:
    if p.n_ineq:
        slack = p.h - p.G @ sol.x
        sol.degenerate = tuple(
            int(i) for i in np.flatnonzero((slack < 1e-7) & (sol.z < 1e-10))
        )


def _solve_eq_kkt(p: QpProblem) -> QpSolution:
    """Direct KKT solve when there are no inequality constraints."""
    n, me = p.n, p.n_eq
    K = np.zeros((n + me, n + me))
    K[:n, :n] = p.Q
    rhs = np.concatenate([-p.c, p.b if me else np.zeros(0)])
    if me:
        K[:n, n:] = p.A.T
        K[n:, :n] = p.A
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    x, y = sol[:n], sol[n:]
    if me and np.max(np.abs(p.A @ x - p.b)) > 1e-6:
        raise QpInfeasible("equality system is inconsistent")
    obj = 0.5 * x @ p.Q @ x + p.c @ x
    return QpSolution(x, y, np.zeros(0), float(obj), "optimal", 0)


def _polish(p: QpProblem, x: np.ndarray, z: np.ndarray) -> QpSolution | None:
    """Equality-constrained re-solve on the IPM's active set.

    Drops wrongly-included rows (negative multiplier) and retries a few
    times; returns None when no clean KKT point emerges.
    """
    n, me = p.n, p.n_eq
    slack = p.h - p.G @ x
    active = np.flatnonzero(z > np.maximum(slack, 1e-9))
    for _ in range(4):
        na = len(active)
        K = np.zeros((n + me + na, n + me + na))
        K[:n, :n] = p.Q
        rhs = np.concatenate(
            [-p.c, p.b if me else np.zeros(0), p.h[active] if na else np.zeros(0)]
        )
        if me:
            K[:n, n : n + me] = p.A.T
            K[n : n + me, :n] = p.A
        if na:
            Ga = p.G[active]
            K[:n, n + me :] = Ga.T
            K[n + me :, :n] = Ga
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        xs, ys = sol[:n], sol[n : n + me]
        za = sol[n + me :]
        if na and za.min() < -1e-9:
            active = active[za > -1e-9]
            continue
        zs = np.zeros(p.n_ineq)
        if na:
            zs[active] = np.maximum(za, 0.0)
        return QpSolution(
            xs, ys, zs, float(0.5 * xs @ p.Q @ xs + p.c @ xs), "polished", 0
        )
    return None


def solve(
    problem: QpProblem,
    warm_start: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
) -> QpSolution:
    """One-shot solve; see :class:`PreparedQp` for repeated solves."""
    problem.check_shapes()
    prepared = PreparedQp(problem.Q, problem.A, problem.G, problem.h)
    return prepared.solve(problem.c, problem.b, warm_start=warm_start, tol=tol)


def feasibility_solve(problem: QpProblem, tol: float = 1e-6) -> tuple[bool, float]:
    """Decide feasibility of the constraint set, ignoring the objective.

    Solves the elastic phase-1 LP  min sum(u) + sum(v)  with
    ``|Ax - b| <= u`` and ``Gx - h <= v``, ``u, v >= 0``; the constraint
    set is feasible iff the optimal violation is ~0. Returns (feasible,
    worst_violation).
    """
    problem.check_shapes()
    n, me, mi = problem.n, problem.n_eq, problem.n_ineq
    if me == 0 and mi == 0:
        return True, 0.0
    cost = np.concatenate([np.zeros(n), np.ones(me + mi)])
    rows: list[np.ndarray] = []
    rhs: list[np.ndarray] = []
    if me:
        Iu = np.zeros((me, me + mi))
        Iu[:, :me] = np.eye(me)
        rows.append(np.hstack([problem.A, -Iu]))
        rhs.append(problem.b)
        rows.append(np.hstack([-problem.A, -Iu]))
        rhs.append(-problem.b)
    if mi:
        Iv = np.zeros((mi, me + mi))
        Iv[:, me:] = np.eye(mi)
        rows.append(np.hstack([problem.G, -Iv]))
        rhs.append(problem.h)
    rows.append(np.hstack([np.zeros((me + mi, n)), -np.eye(me + mi)]))
    rhs.append(np.zeros(me + mi))
    G = np.vstack(rows)
    h = np.concatenate(rhs)
    raw = cvxsolvers.lp(cvxmat(cost), cvxmat(G), cvxmat(h), options=_FAST_OPTIONS)
    if raw["x"] is None:
        raise QpError("phase-1 LP failed")
    elastics = np.array(raw["x"]).ravel()[n:]
    worst = float(elastics.max(initial=0.0))
    return worst <= tol, worst
