import numpy as np
import pytest

from exceptions import ContractError, StructuralError
from lp_core import (
    LpProblem,
    LpSolution,
    LpStatus,
    dump_problem,
    solve,
    verify_certificate,
)
from oracles import vertex_enumeration

INF = np.inf


def make_problem(c, a, row_upper, row_lower=None, var_lower=None, var_upper=None, **kwargs):
    c = np.asarray(c, dtype=float)
    a = np.asarray(a, dtype=float).reshape(-1, c.size)
    m = a.shape[0]
    return LpProblem(
        objective_coeffs=c,
        constraint_matrix=a,
        row_upper_bounds=row_upper,
        row_lower_bounds=np.full(m, -INF) if row_lower is None else row_lower,
        var_lower_bounds=np.zeros(c.size) if var_lower is None else var_lower,
        var_upper_bounds=np.full(c.size, INF) if var_upper is None else var_upper,
        **kwargs,
    )


def random_problem(rng, max_cols=12, max_rows=8):
    """Feasible and bounded by construction: rows are built around a point
    inside the variable box."""
    n = int(rng.integers(1, max_cols + 1))
    m = int(rng.integers(0, max_rows + 1))

    var_lower = rng.uniform(-5, 0, n)
    var_upper = var_lower + rng.uniform(0, 6, n)
    fixed = rng.random(n) < 0.05
    var_upper[fixed] = var_lower[fixed]

    x0 = rng.uniform(var_lower, var_upper)
    a = rng.normal(size=(m, n))
    a[rng.random((m, n)) < 0.3] = 0.0
    activity = a @ x0

    row_lower = activity - rng.uniform(0, 3, m)
    row_upper = activity + rng.uniform(0, 3, m)
    kind = rng.random(m)
    row_lower[kind < 0.3] = -INF
    row_upper[(kind >= 0.3) & (kind < 0.6)] = INF
    equality = kind > 0.9
    row_lower[equality] = row_upper[equality] = activity[equality]

    return LpProblem(
        objective_coeffs=rng.normal(size=n),
        constraint_matrix=a,
        row_upper_bounds=row_upper,
        row_lower_bounds=row_lower,
        var_lower_bounds=var_lower,
        var_upper_bounds=var_upper,
    )


@pytest.fixture
def single_var():
    # maximize x, s.t. x <= 5, 0 <= x <= 10
    return make_problem([1.0], [[1.0]], [5.0], var_upper=[10.0])


@pytest.fixture
def two_var():
    # maximize 3x + 2y s.t. x + y <= 4, x <= 2
    return make_problem([3.0, 2.0], [[1.0, 1.0], [1.0, 0.0]], [4.0, 2.0])


class TestSolve:
    def test_single_active_constraint(self, single_var):
        solution = solve(single_var)

        assert solution.status == LpStatus.OPTIMAL
        assert solution.primal_values == pytest.approx([5.0], abs=1e-9)
        assert solution.objective_value == pytest.approx(5.0, abs=1e-9)

    def test_empty_feasible_set(self):
        problem = make_problem([1.0], [[1.0]], [-1.0], var_upper=[10.0])

        solution = solve(problem)

        assert solution.status == LpStatus.INFEASIBLE
        assert not solution.optimal

    def test_crossing_row_bounds(self):
        problem = make_problem([1.0], [[1.0]], [1.0], row_lower=[2.0], var_upper=[10.0])

        assert solve(problem).status == LpStatus.INFEASIBLE

    def test_two_var_vertex(self, two_var):
        solution = solve(two_var)

        assert solution.status == LpStatus.OPTIMAL
        assert solution.primal_values == pytest.approx([2.0, 2.0], abs=1e-9)
        assert solution.objective_value == pytest.approx(10.0, abs=1e-9)
        assert solution.objective_value == pytest.approx(vertex_enumeration(two_var))

    def test_unbounded(self):
        problem = make_problem([1.0, 1.0], [[1.0, -1.0]], [1.0])

        assert solve(problem).status == LpStatus.UNBOUNDED

    def test_equality_rows_and_negative_bounds(self):
        # maximize x - y s.t. x + y = 1, -2 <= x, y <= 3
        problem = make_problem(
            [1.0, -1.0],
            [[1.0, 1.0]],
            [1.0],
            row_lower=[1.0],
            var_lower=[-2.0, -2.0],
            var_upper=[3.0, 3.0],
        )

        solution = solve(problem)

        assert solution.primal_values == pytest.approx([3.0, -2.0], abs=1e-9)
        assert solution.objective_value == pytest.approx(5.0, abs=1e-9)

    def test_free_variable(self):
        # maximize -x s.t. x >= -4 as a row, x free
        problem = make_problem(
            [-1.0], [[1.0]], [INF], row_lower=[-4.0], var_lower=[-INF], var_upper=[INF]
        )

        solution = solve(problem)

        assert solution.status == LpStatus.OPTIMAL
        assert solution.primal_values == pytest.approx([-4.0], abs=1e-9)

    def test_no_rows(self):
        problem = make_problem([1.0, -2.0], np.zeros((0, 2)), [], var_upper=[3.0, 3.0])

        solution = solve(problem)

        assert solution.primal_values == pytest.approx([3.0, 0.0])
        assert solution.iterations == 1

    def test_degenerate_cycling_example(self):
        # classic instance on which textbook Dantzig pivoting cycles
        problem = make_problem(
            [10.0, -57.0, -9.0, -24.0],
            [
                [0.5, -5.5, -2.5, 9.0],
                [0.5, -1.5, -0.5, 1.0],
                [1.0, 0.0, 0.0, 0.0],
            ],
            [0.0, 0.0, 1.0],
        )

        solution = solve(problem)

        assert solution.status == LpStatus.OPTIMAL
        assert solution.objective_value == pytest.approx(1.0, abs=1e-9)
        assert solution.objective_value == pytest.approx(vertex_enumeration(problem))
        assert verify_certificate(problem, solution).passed

    @pytest.mark.parametrize(
        "changes, message",
        [
            ({"row_upper_bounds": [1.0, 2.0, 3.0]}, "row_upper_bounds"),
            ({"var_lower_bounds": [0.0]}, "var_lower_bounds"),
            ({"objective_coeffs": [np.nan, 1.0]}, "NaN"),
            ({"var_lower_bounds": [3.0, 0.0], "var_upper_bounds": [1.0, 1.0]}, "var_lower > var_upper"),
            ({"objective_coeffs": [INF, 1.0]}, "finite"),
        ],
    )
    def test_structural_errors(self, two_var, changes, message):
        for name, value in changes.items():
            setattr(two_var, name, np.asarray(value, dtype=float))

        with pytest.raises(StructuralError, match=message):
            solve(two_var)

    def test_determinism(self):
        rng = np.random.default_rng(11)
        problem = random_problem(rng, max_cols=30, max_rows=20)

        first, second = solve(problem), solve(problem)

        assert np.array_equal(first.primal_values, second.primal_values)
        assert first.iterations == second.iterations

    @pytest.mark.parametrize("k", [0.5, 2.0, 8.0])
    def test_objective_scaling(self, k):
        rng = np.random.default_rng(5)
        problem = random_problem(rng, max_cols=10, max_rows=6)
        base = solve(problem)

        problem.objective_coeffs = problem.objective_coeffs * k
        scaled = solve(problem)

        assert scaled.objective_value == pytest.approx(k * base.objective_value, rel=1e-12, abs=1e-12)
        assert np.allclose(scaled.primal_values, base.primal_values, atol=1e-12)

    def test_duals_are_shadow_prices(self, two_var):
        solution = solve(two_var)

        # both rows bind: y = (2, 1)
        assert solution.dual_values == pytest.approx([2.0, 1.0], abs=1e-9)
        assert solution.reduced_costs == pytest.approx([0.0, 0.0], abs=1e-9)


class TestCertificate:
    def test_trivial_problem_passes(self, single_var):
        report = verify_certificate(single_var, solve(single_var))

        assert report.passed
        assert report.duality_gap == pytest.approx(0.0, abs=1e-12)

    def test_perturbed_solution_fails(self, single_var):
        solution = solve(single_var)
        solution.primal_values = solution.primal_values + 1.0

        report = verify_certificate(single_var, solution)

        assert not report.passed
        assert report.primal_violation == pytest.approx(1.0, abs=1e-9)
        assert any("primal violation" in detail for detail in report.details)

    def test_two_var_passes(self, two_var):
        assert verify_certificate(two_var, solve(two_var)).passed

    def test_wrong_duals_fail(self, two_var):
        solution = solve(two_var)
        solution.dual_values = np.zeros(2)

        report = verify_certificate(two_var, solution)

        assert not report.passed
        assert report.dual_violation > 0

    def test_requires_optimal_solution(self):
        problem = make_problem([1.0], [[1.0]], [-1.0], var_upper=[10.0])

        with pytest.raises(ContractError, match="optimal"):
            verify_certificate(problem, solve(problem))

    def test_dimension_mismatch(self, two_var):
        solution = LpSolution(
            LpStatus.OPTIMAL, np.zeros(3), 0.0, np.zeros(2), np.zeros(3), 0
        )

        with pytest.raises(ContractError, match="dimensions"):
            verify_certificate(two_var, solution)


def check_random_instances(count, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        problem = random_problem(rng)
        solution = solve(problem)

        assert solution.status == LpStatus.OPTIMAL
        x = solution.primal_values
        assert (x >= problem.var_lower_bounds - 1e-9).all()
        assert (x <= problem.var_upper_bounds + 1e-9).all()

        report = verify_certificate(problem, solution)
        assert report.passed, report.details

        if problem.num_cols <= 4:
            expected = vertex_enumeration(problem)
            assert solution.objective_value == pytest.approx(expected, rel=1e-8, abs=1e-8)


class TestRandomInstances:
    def test_random_bounded_instances(self):
        check_random_instances(200, seed=2021)

    @pytest.mark.slow
    def test_thousand_instances(self):
        check_random_instances(1000, seed=7)

    def test_small_instances_match_vertex_enumeration(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            problem = random_problem(rng, max_cols=4, max_rows=4)
            solution = solve(problem)

            assert solution.objective_value == pytest.approx(
                vertex_enumeration(problem), rel=1e-8, abs=1e-8
            )

    def test_infeasible_instances_detected(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            problem = random_problem(rng, max_cols=6, max_rows=4)
            if not problem.num_rows:
                continue
            # push one row's range beyond anything the box can reach
            row = problem.constraint_matrix[0]
            reach = np.abs(row) @ np.maximum(
                np.abs(problem.var_lower_bounds), np.abs(problem.var_upper_bounds)
            )
            problem.row_lower_bounds[0] = reach + 1.0
            problem.row_upper_bounds[0] = reach + 2.0

            assert solve(problem).status == LpStatus.INFEASIBLE


class TestDump:
    def test_listing(self, two_var):
        two_var.row_names = ["total", "cap_x"]
        two_var.col_names = ["x", "y"]

        listing = dump_problem(two_var)

        assert listing.startswith("LP 2 rows x 2 columns\nMAXIMIZE\n")
        assert "total" in listing and "cap_x" in listing
        assert "-inf <=" in listing
        assert listing.rstrip().endswith("END")
        assert listing.count("\n  ") == 1 + 2 + 2
