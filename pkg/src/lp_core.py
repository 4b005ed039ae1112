"""Bounded-variable linear programs: a revised simplex solver and an independent
optimality certificate.

Problems are stated as

    maximize    c @ x
    subject to  row_lower <= A @ x <= row_upper
                var_lower <= x <= var_upper

Internally every row gets a logical variable ``r = A @ x`` carrying the row
bounds, so the working system is ``[A, -I] z = 0`` with every column boxed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

import numpy as np

from exceptions import ContractError, NumericError, StructuralError

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9
OPTIMALITY_TOL = 1e-9
CERTIFICATE_TOL = 1e-7
PIVOT_TOL = 1e-11
STALL_THRESHOLD = 50  # degenerate pivots in a row before switching to Bland's rule
REINVERT_EVERY = 64


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


def _as_vector(values: Any, length: int | None = None) -> np.ndarray:
    return np.array(values, dtype=float).reshape(-1 if length is None else length)


@dataclass
class LpProblem:
    objective_coeffs: np.ndarray
    constraint_matrix: np.ndarray
    row_upper_bounds: np.ndarray
    row_lower_bounds: np.ndarray
    var_lower_bounds: np.ndarray
    var_upper_bounds: np.ndarray
    row_names: list[str] | None = None
    col_names: list[str] | None = None

    def __post_init__(self) -> None:
        self.objective_coeffs = _as_vector(self.objective_coeffs)

        matrix = self.constraint_matrix
        if hasattr(matrix, "toarray"):
            matrix = matrix.toarray()
        matrix = np.array(matrix, dtype=float)
        if matrix.size == 0:
            matrix = matrix.reshape(-1, self.objective_coeffs.size)
        self.constraint_matrix = np.atleast_2d(matrix)

        self.row_upper_bounds = _as_vector(self.row_upper_bounds)
        self.row_lower_bounds = _as_vector(self.row_lower_bounds)
        self.var_lower_bounds = _as_vector(self.var_lower_bounds)
        self.var_upper_bounds = _as_vector(self.var_upper_bounds)

    @property
    def num_rows(self) -> int:
        return int(self.constraint_matrix.shape[0])

    @property
    def num_cols(self) -> int:
        return int(self.constraint_matrix.shape[1])

    def check(self) -> None:
        m, n = self.constraint_matrix.shape

        for name in ("row_upper_bounds", "row_lower_bounds"):
            if getattr(self, name).size != m:
                raise StructuralError(
                    f"{name} has {getattr(self, name).size} entries, "
                    f"constraint matrix has {m} rows"
                )
        for name in ("objective_coeffs", "var_lower_bounds", "var_upper_bounds"):
            if getattr(self, name).size != n:
                raise StructuralError(
                    f"{name} has {getattr(self, name).size} entries, "
                    f"constraint matrix has {n} columns"
                )
        if self.row_names is not None and len(self.row_names) != m:
            raise StructuralError("row_names length does not match the row count")
        if self.col_names is not None and len(self.col_names) != n:
            raise StructuralError("col_names length does not match the column count")

        for name in (
            "objective_coeffs",
            "constraint_matrix",
            "row_upper_bounds",
            "row_lower_bounds",
            "var_lower_bounds",
            "var_upper_bounds",
        ):
            if np.isnan(getattr(self, name)).any():
                raise StructuralError(f"{name} contains NaN")

        if not np.isfinite(self.objective_coeffs).all():
            raise StructuralError("objective_coeffs must be finite")
        if not np.isfinite(self.constraint_matrix).all():
            raise StructuralError("constraint_matrix must be finite")

        bad = np.flatnonzero(self.var_lower_bounds > self.var_upper_bounds)
        if bad.size:
            raise StructuralError(
                f"var_lower > var_upper for column(s) {bad.tolist()}"
            )

    def row_label(self, i: int) -> str:
        return self.row_names[i] if self.row_names else f"r{i}"

    def col_label(self, j: int) -> str:
        return self.col_names[j] if self.col_names else f"x{j}"


@dataclass
class LpSolution:
    status: LpStatus
    primal_values: np.ndarray = field(repr=False)
    objective_value: float
    dual_values: np.ndarray = field(repr=False)
    reduced_costs: np.ndarray = field(repr=False)
    iterations: int

    @property
    def optimal(self) -> bool:
        return self.status == LpStatus.OPTIMAL


@dataclass
class CertificateReport:
    primal_violation: float
    dual_violation: float
    complementarity: float
    duality_gap: float
    passed: bool
    details: list[str] = field(default_factory=list)


def bound_scale(problem: LpProblem) -> float:
    bounds = np.concatenate(
        [
            problem.row_lower_bounds,
            problem.row_upper_bounds,
            problem.var_lower_bounds,
            problem.var_upper_bounds,
        ]
    )
    finite = bounds[np.isfinite(bounds)]
    return float(np.abs(finite).max()) if finite.size else 0.0


class _Phase(Enum):
    FEASIBILITY = 1
    OPTIMALITY = 2


class RevisedSimplex:
    """Primal revised simplex over boxed columns.

    Dantzig pricing (lowest index among ties) switching to Bland's rule after
    ``STALL_THRESHOLD`` consecutive degenerate pivots. The basis inverse is
    kept explicitly with product-form updates and refactored every
    ``REINVERT_EVERY`` pivots.
    """

    def __init__(self, problem: LpProblem) -> None:
        problem.check()
        self.problem = problem
        self.iterations = 0

        m, n = problem.num_rows, problem.num_cols
        self.m, self.n = m, n
        self.max_iterations = 50 * (2 * m + n) + 1000

    def solve(self) -> LpSolution:
        p = self.problem
        m, n = self.m, self.n

        if (p.row_lower_bounds > p.row_upper_bounds + FEASIBILITY_TOL).any():
            logger.debug("Row bounds cross, problem is trivially infeasible")
            return self._result(LpStatus.INFEASIBLE, np.zeros(n), np.zeros(m))

        self._setup()

        if self.num_artificial:
            logger.debug("Phase 1 with %d artificial column(s)", self.num_artificial)
            cost = np.zeros(self.total)
            cost[n + m :] = -1.0
            self._iterate(cost, _Phase.FEASIBILITY)

            infeasibility = float(self.x[n + m :].sum())
            if infeasibility > FEASIBILITY_TOL * (1.0 + bound_scale(p)):
                logger.debug("Phase 1 ended with infeasibility %g", infeasibility)
                return self._result(LpStatus.INFEASIBLE, self.x[:n], np.zeros(m))

            self.upper[n + m :] = 0.0
            self.x[n + m :] = np.clip(self.x[n + m :], 0.0, 0.0)

        cost = np.zeros(self.total)
        cost[:n] = p.objective_coeffs
        status = self._iterate(cost, _Phase.OPTIMALITY)

        self._reinvert()
        y = cost[self.basis] @ self.binv
        if status == LpStatus.UNBOUNDED:
            return self._result(status, self.x[:n], y)

        x = self.x[:n].copy()
        lo, hi = p.var_lower_bounds, p.var_upper_bounds
        # snap rounding noise onto the box
        near = (x < lo) & (x > lo - FEASIBILITY_TOL)
        x[near] = lo[near]
        near = (x > hi) & (x < hi + FEASIBILITY_TOL)
        x[near] = hi[near]

        return self._result(LpStatus.OPTIMAL, x, y)

    def _result(self, status: LpStatus, x: np.ndarray, y: np.ndarray) -> LpSolution:
        p = self.problem
        x = np.array(x, dtype=float)
        y = np.array(y, dtype=float)

        if status == LpStatus.OPTIMAL:
            objective = float(p.objective_coeffs @ x)
            reduced = p.objective_coeffs - y @ p.constraint_matrix
        elif status == LpStatus.UNBOUNDED:
            objective = float("inf")
            reduced = p.objective_coeffs - y @ p.constraint_matrix
        else:
            objective = float("-inf")
            reduced = np.zeros(self.n)

        logger.debug(
            "LP %dx%d: %s after %d iteration(s), objective %s",
            self.m,
            self.n,
            status.value,
            self.iterations,
            objective,
        )
        return LpSolution(status, x, objective, y, reduced, self.iterations)

    def _setup(self) -> None:
        p = self.problem
        m, n = self.m, self.n

        lower = p.var_lower_bounds
        upper = p.var_upper_bounds
        x_struct = np.where(
            np.isfinite(lower), lower, np.where(np.isfinite(upper), upper, 0.0)
        )
        activity = p.constraint_matrix @ x_struct

        rl, ru = p.row_lower_bounds, p.row_upper_bounds
        below = activity < rl - FEASIBILITY_TOL
        above = activity > ru + FEASIBILITY_TOL
        infeasible_rows = np.flatnonzero(below | above)
        k = infeasible_rows.size
        self.num_artificial = k
        self.total = n + m + k

        art = np.zeros((m, k))
        row_values = np.clip(activity, rl, ru)
        for a, i in enumerate(infeasible_rows):
            # logical sits at the violated bound, artificial absorbs the rest
            art[i, a] = 1.0 if row_values[i] > activity[i] else -1.0

        self.matrix = np.hstack([p.constraint_matrix, -np.eye(m), art])
        self.lower = np.concatenate([lower, rl, np.zeros(k)])
        self.upper = np.concatenate([upper, ru, np.full(k, np.inf)])

        self.x = np.concatenate(
            [x_struct, row_values, np.abs(row_values - activity)[infeasible_rows]]
        )
        self.at_upper = np.zeros(self.total, dtype=bool)
        self.at_upper[:n] = ~np.isfinite(lower) & np.isfinite(upper)
        self.at_upper[n : n + m] = above

        basis = np.arange(n, n + m)
        basis[infeasible_rows] = n + m + np.arange(k)
        self.basis = basis
        self.is_basic = np.zeros(self.total, dtype=bool)
        self.is_basic[basis] = True

        self._reinvert()

    def _reinvert(self) -> None:
        if self.m == 0:
            self.binv = np.zeros((0, 0))
            return
        try:
            self.binv = np.linalg.inv(self.matrix[:, self.basis])
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"singular basis matrix: {exc}")

        nonbasic = ~self.is_basic
        self.x[self.basis] = -self.binv @ (
            self.matrix[:, nonbasic] @ self.x[nonbasic]
        )
        self._check_finite()

    def _check_finite(self) -> None:
        if not np.isfinite(self.x).all() or not np.isfinite(self.binv).all():
            raise NumericError("numeric overflow in simplex iterate")

    def _entering(
        self, reduced: np.ndarray, use_bland: bool
    ) -> tuple[int, float] | None:
        nonbasic = ~self.is_basic
        fixed = self.lower == self.upper
        free = ~np.isfinite(self.lower) & ~np.isfinite(self.upper)

        can_increase = nonbasic & ~fixed & ~self.at_upper & (reduced > OPTIMALITY_TOL)
        can_decrease = nonbasic & ~fixed & (self.at_upper | free) & (
            reduced < -OPTIMALITY_TOL
        )
        eligible = can_increase | can_decrease
        if not eligible.any():
            return None

        if use_bland:
            j = int(np.flatnonzero(eligible)[0])
        else:
            # argmax returns the lowest index among equal scores
            j = int(np.argmax(np.where(eligible, np.abs(reduced), -1.0)))

        return j, (1.0 if can_increase[j] else -1.0)

    def _ratio_test(
        self, j: int, direction: float, use_bland: bool
    ) -> tuple[float, int, np.ndarray]:
        alpha = self.binv @ self.matrix[:, j]
        change = -direction * alpha

        x_b = self.x[self.basis]
        lower_b = self.lower[self.basis]
        upper_b = self.upper[self.basis]

        ratios = np.full(self.m, np.inf)
        dec = (change < -PIVOT_TOL) & np.isfinite(lower_b)
        inc = (change > PIVOT_TOL) & np.isfinite(upper_b)
        ratios[dec] = (x_b[dec] - lower_b[dec]) / -change[dec]
        ratios[inc] = (upper_b[inc] - x_b[inc]) / change[inc]
        ratios = np.maximum(ratios, 0.0)

        flip = self.upper[j] - self.lower[j]
        if not np.isfinite(flip):
            flip = np.inf

        leave = -1
        step = flip
        if self.m and np.isfinite(ratios).any():
            best = float(ratios.min())
            if best < flip:
                ties = np.flatnonzero(ratios <= best + PIVOT_TOL)
                if use_bland:
                    leave = int(ties[np.argmin(self.basis[ties])])
                else:
                    leave = int(ties[np.argmax(np.abs(alpha[ties]))])
                step = best

        return step, leave, alpha

    def _iterate(self, cost: np.ndarray, phase: _Phase) -> LpStatus:
        use_bland = False
        stall = 0
        since_reinvert = 0

        while True:
            if self.iterations >= self.max_iterations:
                raise NumericError(
                    f"iteration limit {self.max_iterations} reached in phase "
                    f"{phase.value}"
                )

            y = cost[self.basis] @ self.binv
            reduced = cost - y @ self.matrix

            entering = self._entering(reduced, use_bland)
            if entering is None:
                return LpStatus.OPTIMAL
            j, direction = entering

            step, leave, alpha = self._ratio_test(j, direction, use_bland)
            if not np.isfinite(step):
                return LpStatus.UNBOUNDED

            self.iterations += 1
            change = -direction * alpha

            self.x[self.basis] += change * step
            if leave < 0:
                self.at_upper[j] = direction > 0
                self.x[j] = self.upper[j] if self.at_upper[j] else self.lower[j]
            else:
                self.x[j] += direction * step
                self._pivot(leave, j, alpha, change[leave] > 0)
                since_reinvert += 1

            if since_reinvert >= REINVERT_EVERY:
                self._reinvert()
                since_reinvert = 0
            else:
                self._check_finite()

            if step <= FEASIBILITY_TOL:
                stall += 1
                if stall > STALL_THRESHOLD and not use_bland:
                    logger.debug(
                        "Phase %d stalled after %d degenerate pivots, "
                        "switching to Bland's rule",
                        phase.value,
                        stall,
                    )
                    use_bland = True
            else:
                stall = 0

    def _pivot(self, r: int, j: int, alpha: np.ndarray, to_upper: bool) -> None:
        leaving = int(self.basis[r])
        self.at_upper[leaving] = to_upper
        self.x[leaving] = self.upper[leaving] if to_upper else self.lower[leaving]
        self.is_basic[leaving] = False

        self.basis[r] = j
        self.is_basic[j] = True
        self.at_upper[j] = False

        pivot_row = self.binv[r, :] / alpha[r]
        self.binv -= np.outer(alpha, pivot_row)
        self.binv[r, :] = pivot_row


def solve(problem: LpProblem) -> LpSolution:
    return RevisedSimplex(problem).solve()


def _split(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.maximum(values, 0.0), np.maximum(-values, 0.0)


def _bound_terms(
    multipliers: np.ndarray,
    activity: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
) -> tuple[float, float, float]:
    """Dual-objective contribution, sign violation and largest slackness product
    for one block of boxed quantities."""
    plus, minus = _split(multipliers)

    sign_violation = 0.0
    infinite_upper = ~np.isfinite(upper)
    infinite_lower = ~np.isfinite(lower)
    if infinite_upper.any():
        sign_violation = max(sign_violation, float(plus[infinite_upper].max()))
    if infinite_lower.any():
        sign_violation = max(sign_violation, float(minus[infinite_lower].max()))

    safe_upper = np.where(infinite_upper, 0.0, upper)
    safe_lower = np.where(infinite_lower, 0.0, lower)
    dual_objective = float(plus @ safe_upper - minus @ safe_lower)

    slack = np.concatenate(
        [
            plus * np.where(infinite_upper, 0.0, upper - activity),
            minus * np.where(infinite_lower, 0.0, activity - lower),
        ]
    )
    complementarity = float(np.abs(slack).max()) if slack.size else 0.0
    return dual_objective, sign_violation, complementarity


def verify_certificate(problem: LpProblem, solution: LpSolution) -> CertificateReport:
    """Check an optimal solution against the problem data alone: primal
    feasibility, dual feasibility, complementary slackness and the duality gap,
    each relative to the problem's magnitude."""
    if solution.status != LpStatus.OPTIMAL:
        raise ContractError(
            f"certificate requires an optimal solution, got {solution.status.value}",
            module="lp_core",
        )
    problem.check()

    c = problem.objective_coeffs
    a = problem.constraint_matrix
    x = np.asarray(solution.primal_values, dtype=float)
    y = np.asarray(solution.dual_values, dtype=float)
    d = np.asarray(solution.reduced_costs, dtype=float)
    if x.size != problem.num_cols or y.size != problem.num_rows or d.size != x.size:
        raise ContractError(
            "solution vectors do not match the problem dimensions",
            module="lp_core",
        )

    activity = a @ x
    details = []

    violations = np.concatenate(
        [
            problem.var_lower_bounds - x,
            x - problem.var_upper_bounds,
            problem.row_lower_bounds - activity,
            activity - problem.row_upper_bounds,
        ]
    )
    violations = violations[np.isfinite(violations)]
    primal_violation = float(max(violations.max(initial=0.0), 0.0))

    stationarity = c - a.T @ y - d
    col_dual, col_sign, col_slack = _bound_terms(
        d, x, problem.var_lower_bounds, problem.var_upper_bounds
    )
    row_dual, row_sign, row_slack = _bound_terms(
        y, activity, problem.row_lower_bounds, problem.row_upper_bounds
    )
    dual_violation = max(
        float(np.abs(stationarity).max(initial=0.0)), col_sign, row_sign
    )
    complementarity = max(col_slack, row_slack)

    primal_objective = float(c @ x)
    duality_gap = abs(col_dual + row_dual - primal_objective)

    primal_scale = 1.0 + bound_scale(problem)
    dual_scale = 1.0 + float(np.abs(c).max(initial=0.0))
    gap_scale = 1.0 + abs(primal_objective)

    if primal_violation > CERTIFICATE_TOL * primal_scale:
        details.append(f"primal violation {primal_violation:.3g}")
    if dual_violation > CERTIFICATE_TOL * dual_scale:
        details.append(f"dual violation {dual_violation:.3g}")
    if complementarity > CERTIFICATE_TOL * gap_scale:
        details.append(f"complementary slackness residual {complementarity:.3g}")
    if duality_gap > CERTIFICATE_TOL * gap_scale:
        details.append(f"duality gap {duality_gap:.3g}")

    return CertificateReport(
        primal_violation=primal_violation,
        dual_violation=dual_violation,
        complementarity=complementarity,
        duality_gap=duality_gap,
        passed=not details,
        details=details,
    )


def _format_number(value: float) -> str:
    if np.isposinf(value):
        return "+inf"
    if np.isneginf(value):
        return "-inf"
    return f"{value:.12g}"


def dump_problem(problem: LpProblem) -> str:
    """Fixed-format listing, one constraint per line, for bug reports."""
    lines = [f"LP {problem.num_rows} rows x {problem.num_cols} columns", "MAXIMIZE"]

    def terms(coeffs: Sequence[float]) -> str:
        parts = [
            f"{_format_number(v):>16} {problem.col_label(j)}"
            for j, v in enumerate(coeffs)
            if v != 0.0
        ]
        return " ".join(parts) if parts else "0"

    lines.append(f"  obj: {terms(problem.objective_coeffs)}")
    lines.append("ROWS")
    for i in range(problem.num_rows):
        lines.append(
            f"  {problem.row_label(i):<20} "
            f"{_format_number(problem.row_lower_bounds[i]):>16} <= "
            f"{terms(problem.constraint_matrix[i])} <= "
            f"{_format_number(problem.row_upper_bounds[i])}"
        )
    lines.append("BOUNDS")
    for j in range(problem.num_cols):
        lines.append(
            f"  {problem.col_label(j):<20} "
            f"{_format_number(problem.var_lower_bounds[j]):>16} .. "
            f"{_format_number(problem.var_upper_bounds[j])}"
        )
    lines.append("END")
    return "\n".join(lines) + "\n"
