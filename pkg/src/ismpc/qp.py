"""Dense convex QP solver.

Solves::

    min  1/2 x' H x + g' x
    s.t. A_eq x = b_eq
         lower <= A_in x <= upper

with a dual active-set method (Goldfarb-Idnani). The method starts from the
unconstrained minimizer, so no feasible initial point is needed, and when a
violated constraint cannot be added it yields a Farkas certificate of
infeasibility. The working-set matrix ``N' H^-1 N`` is kept as a Cholesky
factor updated on every add/drop, which keeps an iteration at O(n m).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

DEFAULT_TOL = 1e-8
HESSIAN_REGULARIZATION = 1e-10
# relative size below which a new constraint counts as linearly dependent on the working set;
# about sqrt(machine eps), since cancellation in the Schur complement grows with the working-set size
DEPENDENCE_TOL = 1e-8


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"


@dataclass(frozen=True, eq=False)
class QpProblem:
    hessian: np.ndarray
    linear_cost: np.ndarray
    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    ineq_matrix: np.ndarray | None = None
    ineq_lower: np.ndarray | None = None
    ineq_upper: np.ndarray | None = None

    def __post_init__(self) -> None:
        H = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        g = np.asarray(self.linear_cost, dtype=float).ravel()
        n = g.size
        if H.shape != (n, n):
            raise ValueError(f"hessian shape {H.shape} does not match cost size {n}")
        if not np.array_equal(H, H.T) and np.abs(H - H.T).max() > 1e-12 * max(1.0, np.abs(H).max()):
            raise ValueError("hessian is not symmetric")
        A_eq, b_eq = _rows(self.eq_matrix, n), _vec(self.eq_rhs)
        if A_eq.shape[0] != b_eq.size:
            raise ValueError("equality rows and rhs differ in length")
        A_in = _rows(self.ineq_matrix, n)
        m = A_in.shape[0]
        lo = np.full(m, -np.inf) if self.ineq_lower is None else _vec(self.ineq_lower)
        hi = np.full(m, np.inf) if self.ineq_upper is None else _vec(self.ineq_upper)
        if lo.size != m or hi.size != m:
            raise ValueError("inequality bounds do not match the number of rows")
        if np.any(lo > hi):
            raise ValueError("inequality lower bound exceeds upper bound")
        for name, value in (
            ("hessian", H),
            ("linear_cost", g),
            ("eq_matrix", A_eq),
            ("eq_rhs", b_eq),
            ("ineq_matrix", A_in),
            ("ineq_lower", lo),
            ("ineq_upper", hi),
        ):
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.linear_cost.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.hessian @ x + self.linear_cost @ x)


def _rows(A, n: int) -> np.ndarray:
    if A is None:
        return np.zeros((0, n))
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1) if A.size else np.zeros((0, n))
    if A.shape[1] != n:
        raise ValueError(f"constraint matrix has {A.shape[1]} columns, expected {n}")
    return A


def _vec(v) -> np.ndarray:
    return np.zeros(0) if v is None else np.asarray(v, dtype=float).ravel()


@dataclass
class QpSolution:
    primal: np.ndarray
    objective: float
    status: QpStatus
    kkt_residual: float
    eq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # positive: lower bound active, negative: upper bound active
    ineq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    active_set: tuple[tuple[int, int], ...] = ()
    iterations: int = 0
    farkas_gap: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def check_feasible(p: QpProblem, point: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    x = np.asarray(point, dtype=float).ravel()
    if x.size != p.n:
        raise ValueError("point dimension mismatch")
    if p.eq_matrix.shape[0] and np.max(np.abs(p.eq_matrix @ x - p.eq_rhs)) > tol:
        return False
    if p.ineq_matrix.shape[0]:
        ax = p.ineq_matrix @ x
        if np.any(ax < p.ineq_lower - tol) or np.any(ax > p.ineq_upper + tol):
            return False
    return True


class ActiveSetSolver:
    """Reusable solver; caches the inverse Hessian between calls with the same matrix."""

    def __init__(self, tol: float = DEFAULT_TOL, max_iter: int | None = None):
        self.tol = tol
        self.max_iter = max_iter
        self._hessian: np.ndarray | None = None
        self._hinv: np.ndarray | None = None

    def _inverse_hessian(self, H: np.ndarray) -> np.ndarray:
        if self._hessian is not None and self._hessian.shape == H.shape and np.array_equal(self._hessian, H):
            return self._hinv
        try:
            factor = cho_factor(H, lower=True)
        except np.linalg.LinAlgError:
            factor = cho_factor(H + HESSIAN_REGULARIZATION * np.eye(H.shape[0]), lower=True)
        hinv = cho_solve(factor, np.eye(H.shape[0]))
        hinv = 0.5 * (hinv + hinv.T)
        self._hessian, self._hinv = H.copy(), hinv
        return hinv

    def solve(self, p: QpProblem, warm_start: tuple[tuple[int, int], ...] | None = None) -> QpSolution:
        hinv = self._inverse_hessian(p.hessian)
        max_iter = self.max_iter if self.max_iter is not None else 10 * (p.n + p.ineq_matrix.shape[0]) + 10
        return _GoldfarbIdnani(p, hinv, self.tol, max_iter).run(warm_start or ())


def solve(
    p: QpProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    warm_start: tuple[tuple[int, int], ...] | None = None,
) -> QpSolution:
    return ActiveSetSolver(tol, max_iter).solve(p, warm_start)


# Working-set ids are (row, side): side -1 for an equality row, 0 for the lower
# and 1 for the upper bound of an inequality row. Internally every constraint
# is written as  n' x >= b  (equalities as n' x == b).


class _GoldfarbIdnani:
    def __init__(self, p: QpProblem, hinv: np.ndarray, tol: float, max_iter: int):
        self.p = p
        self.hinv = hinv
        self.tol = tol
        self.max_iter = max_iter
        n = p.n
        self.n = n
        cap = n + 1
        self.L = np.zeros((cap, cap))
        self.HN = np.zeros((n, cap))
        self.Nmat = np.zeros((n, cap))
        self.b = np.zeros(cap)
        self.ids: list[tuple[int, int]] = []  # (row, side); side -1 marks an equality
        self.u = np.zeros(cap)
        self.iterations = 0
        self.farkas_gap = 0.0

    # -- working set bookkeeping ------------------------------------------------
    @property
    def m(self) -> int:
        return len(self.ids)

    def normal(self, cid: tuple[int, int]) -> tuple[np.ndarray, float]:
        row, side = cid
        p = self.p
        if side < 0:
            return p.eq_matrix[row], float(p.eq_rhs[row])
        a = p.ineq_matrix[row]
        if side == 0:
            return a, float(p.ineq_lower[row])
        return -a, -float(p.ineq_upper[row])

    def _append(self, cid: tuple[int, int], a: np.ndarray, bval: float, h: np.ndarray) -> bool:
        m = self.m
        if m >= self.n:
            return False
        diag = float(a @ h)
        if m:
            mvec = self.HN[:, :m].T @ a
            ell = solve_triangular(self.L[:m, :m], mvec, lower=True, check_finite=False)
            d = diag - float(ell @ ell)
        else:
            ell, d = None, diag
        if d <= DEPENDENCE_TOL * max(diag, 1e-300):
            return False
        if m:
            self.L[m, :m] = ell
        self.L[m, m] = math.sqrt(d)
        self.HN[:, m] = h
        self.Nmat[:, m] = a
        self.b[m] = bval
        self.ids.append(cid)
        return True

    def _append_block(self, cids: list[tuple[int, int]]) -> bool:
        """Add several constraints with one block Cholesky step; False if they are dependent."""
        m, q = self.m, len(cids)
        if m + q > self.n:
            return False
        normals = [self.normal(cid) for cid in cids]
        Nc = np.column_stack([a for a, _ in normals])
        HNc = self.hinv @ Nc
        S = Nc.T @ HNc
        if m:
            E = solve_triangular(self.L[:m, :m], self.HN[:, :m].T @ Nc, lower=True, check_finite=False)
            S = S - E.T @ E
        try:
            Ls = np.linalg.cholesky(0.5 * (S + S.T))
        except np.linalg.LinAlgError:
            return False
        diag = np.diag(S)
        if np.any(np.diag(Ls) ** 2 <= DEPENDENCE_TOL * np.maximum(np.einsum("ij,ij->j", Nc, HNc), 1e-300)) or np.any(diag <= 0):
            return False
        if m:
            self.L[m : m + q, :m] = E.T
        self.L[m : m + q, m : m + q] = Ls
        self.HN[:, m : m + q] = HNc
        self.Nmat[:, m : m + q] = Nc
        self.b[m : m + q] = [b for _, b in normals]
        self.ids.extend(cids)
        return True

    def _drop(self, k: int) -> None:
        m = self.m
        L = self.L
        T = L[k + 1 : m, k + 1 : m].copy()
        w = L[k + 1 : m, k].copy()
        # rank-one update: T T' + w w'
        for i in range(T.shape[0]):
            tii = T[i, i]
            r = math.hypot(tii, w[i])
            c, s = r / tii, w[i] / tii
            T[i, i] = r
            if i + 1 < T.shape[0]:
                T[i + 1 :, i] = (T[i + 1 :, i] + s * w[i + 1 :]) / c
                w[i + 1 :] = c * w[i + 1 :] - s * T[i + 1 :, i]
        L[k : m - 1, :k] = L[k + 1 : m, :k].copy()
        L[k : m - 1, k : m - 1] = T
        L[m - 1, :m] = 0.0
        L[:m, m - 1] = 0.0
        for arr in (self.HN, self.Nmat):
            arr[:, k : m - 1] = arr[:, k + 1 : m].copy()
            arr[:, m - 1] = 0.0
        self.b[k : m - 1] = self.b[k + 1 : m].copy()
        self.u[k : m - 1] = self.u[k + 1 : m].copy()
        self.u[m - 1] = 0.0
        del self.ids[k]

    def _msolve(self, rhs: np.ndarray) -> np.ndarray:
        m = self.m
        y = solve_triangular(self.L[:m, :m], rhs, lower=True, check_finite=False)
        return solve_triangular(self.L[:m, :m], y, lower=True, trans="T", check_finite=False)

    def _eqp(self) -> np.ndarray:
        """Minimizer with the working set held as equalities; updates multipliers."""
        m = self.m
        g = self.p.linear_cost
        hg = self.hinv @ g
        if m == 0:
            return -hg
        lam = self._msolve(self.b[:m] + self.Nmat[:, :m].T @ hg)
        self.u[:m] = lam
        return self.HN[:, :m] @ lam - hg

    def _directions(self, a: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        m = self.m
        if m == 0:
            return h, np.zeros(0)
        r = self._msolve(self.HN[:, :m].T @ a)
        if m >= self.n:
            # a full working set spans every direction; anything left is round-off
            return np.zeros(self.n), r
        return h - self.HN[:, :m] @ r, r

    # -- main loop --------------------------------------------------------------
    def run(self, warm_start) -> QpSolution:
        p = self.p
        x = -self.hinv @ p.linear_cost
        for e in range(p.eq_matrix.shape[0]):
            if not self._add_equality(e):
                return self._finish(x, QpStatus.INFEASIBLE)
        if self.m:
            x = self._eqp()
        if warm_start:
            x = self._warm(x, warm_start)

        A = p.ineq_matrix
        lo, hi = p.ineq_lower, p.ineq_upper
        norms = np.linalg.norm(A, axis=1) if A.shape[0] else np.zeros(0)
        norms[norms == 0] = 1.0
        skipped: set[tuple[int, int]] = set()
        while True:
            if self.iterations >= self.max_iter:
                return self._finish(x, QpStatus.MAX_ITER)
            cid = self._most_violated(x, A, lo, hi, norms, skipped)
            if cid is None:
                return self._finish(x, QpStatus.OPTIMAL)
            a, bval = self.normal(cid)
            h = self.hinv @ a
            up = 0.0
            while True:
                self.iterations += 1
                if self.iterations > self.max_iter:
                    return self._finish(x, QpStatus.MAX_ITER)
                z, r = self._directions(a, h)
                m = self.m
                t1, k = math.inf, -1
                for j in range(m):
                    if self.ids[j][1] >= 0 and r[j] > 1e-14:
                        ratio = self.u[j] / r[j]
                        if ratio < t1:
                            t1, k = ratio, j
                zn = float(z @ a)
                slack = float(a @ x) - bval
                t2 = -slack / zn if zn > DEPENDENCE_TOL * max(float(a @ h), 1e-300) else math.inf
                if math.isinf(t1) and math.isinf(t2):
                    gap = bval - float(r @ self.b[:m]) if m else bval
                    if gap > self.tol:
                        self.farkas_gap = gap
                        return self._finish(x, QpStatus.INFEASIBLE)
                    skipped.add(cid)
                    break
                if math.isinf(t2):
                    self.u[:m] -= t1 * r
                    up += t1
                    self._drop(k)
                    continue
                t = min(t1, t2)
                x = x + t * z
                self.u[:m] -= t * r
                up += t
                if t2 <= t1:
                    if not self._append(cid, a, bval, h):
                        skipped.add(cid)
                        break
                    self.u[self.m - 1] = up
                    break
                self._drop(k)

    def _add_equality(self, e: int) -> bool:
        """False when the row is inconsistent with the equalities already held."""
        a, bval = self.normal((e, -1))
        h = self.hinv @ a
        if self._append((e, -1), a, bval, h):
            return True
        # linearly dependent on previous equalities: redundant or inconsistent
        _, r = self._directions(a, h)
        gap = abs(bval - float(r @ self.b[: self.m]))
        if gap > self.tol:
            self.farkas_gap = gap
            return False
        return True

    def _warm(self, x: np.ndarray, guess) -> np.ndarray:
        p = self.p
        picked: list[tuple[int, int]] = []
        seen: set[int] = {row for row, side in self.ids if side >= 0}
        for row, side in guess:
            if not (0 <= row < p.ineq_matrix.shape[0]) or side not in (0, 1) or row in seen:
                continue
            bound = p.ineq_lower[row] if side == 0 else p.ineq_upper[row]
            if not math.isfinite(bound):
                continue
            seen.add(row)
            picked.append((row, side))
        if picked and not self._append_block(picked):
            for cid in picked:
                a, bval = self.normal(cid)
                self._append(cid, a, bval, self.hinv @ a)
        x = self._eqp()
        while True:
            worst, k = -1e-14, -1
            for j, (row, side) in enumerate(self.ids):
                if side >= 0 and self.u[j] < worst:
                    worst, k = self.u[j], j
            if k < 0:
                return x
            self._drop(k)
            self.iterations += 1
            x = self._eqp()

    def _most_violated(self, x, A, lo, hi, norms, skipped):
        if A.shape[0] == 0:
            return None
        ax = A @ x
        viol_lo = (lo - ax) / norms
        viol_hi = (ax - hi) / norms
        viol = np.maximum(viol_lo, viol_hi)
        raw = np.maximum(lo - ax, ax - hi)
        candidates = np.flatnonzero(raw > self.tol)
        if candidates.size == 0:
            return None
        order = candidates[np.argsort(-viol[candidates], kind="stable")]
        for row in order:
            cid = (int(row), 0 if viol_lo[row] >= viol_hi[row] else 1)
            if cid in skipped or cid in self.ids:
                continue
            return cid
        return None

    def _finish(self, x: np.ndarray, status: QpStatus) -> QpSolution:
        p = self.p
        if status is QpStatus.OPTIMAL and self.m:
            x = self._eqp()
            m = self.m
            for _ in range(2):
                # iterative refinement of the working-set equalities
                res = self.b[:m] - self.Nmat[:, :m].T @ x
                x = x + self.HN[:, :m] @ self._msolve(res)
        lam_eq = np.zeros(p.eq_matrix.shape[0])
        mu = np.zeros(p.ineq_matrix.shape[0])
        for j, (row, side) in enumerate(self.ids):
            if side < 0:
                lam_eq[row] = self.u[j]
            elif side == 0:
                mu[row] = self.u[j]
            else:
                mu[row] = -self.u[j]
        residual = kkt_residual(p, x, lam_eq, mu) if status is QpStatus.OPTIMAL else math.inf
        return QpSolution(
            primal=x,
            objective=p.objective(x),
            status=status,
            kkt_residual=residual,
            eq_multipliers=lam_eq,
            ineq_multipliers=mu,
            active_set=tuple(cid for cid in self.ids if cid[1] >= 0),
            iterations=self.iterations,
            farkas_gap=self.farkas_gap,
        )


def kkt_residual(p: QpProblem, x: np.ndarray, lam_eq: np.ndarray, mu: np.ndarray) -> float:
    """Scaled max of stationarity, primal, dual and complementarity violations.

    ``mu`` follows the QpSolution sign convention (positive on an active lower bound).
    """
    Hx = p.hessian @ x
    grad = Hx + p.linear_cost - p.eq_matrix.T @ lam_eq - p.ineq_matrix.T @ mu
    scale = max(1.0, float(np.max(np.abs(Hx), initial=0.0)), float(np.max(np.abs(p.linear_cost), initial=0.0)))
    stationarity = float(np.max(np.abs(grad), initial=0.0)) / scale
    primal = 0.0
    if p.eq_matrix.shape[0]:
        primal = float(np.max(np.abs(p.eq_matrix @ x - p.eq_rhs)))
    comp = 0.0
    if p.ineq_matrix.shape[0]:
        ax = p.ineq_matrix @ x
        primal = max(primal, float(np.max(np.maximum(p.ineq_lower - ax, ax - p.ineq_upper))))
        with np.errstate(invalid="ignore"):
            comp_lo = np.where(mu > 0, mu * (ax - p.ineq_lower), 0.0)
            comp_hi = np.where(mu < 0, -mu * (p.ineq_upper - ax), 0.0)
        comp = float(np.max(np.abs(np.concatenate([comp_lo, comp_hi])))) / scale
    return max(stationarity, primal, comp, 0.0)
