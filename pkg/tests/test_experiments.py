from dataclasses import replace

import numpy as np
import pytest

from console import is_quiet, set_quiet
from experiments import (
    SUITES,
    BenchmarkRunner,
    Cell,
    CheckResult,
    ReplicateRow,
    check_projections,
    check_rounding_bound,
    generate_verify_markdown,
    read_rows_csv,
    run_replicate,
    run_suite,
    suite_with_overrides,
    write_long_csv,
    write_rows_csv,
)
from model_core import RobustRegressionError, SolverControls

TINY_CTRL = SolverControls(max_outer_iters=15, max_inner_iters=30, warm_inner_iters=5, huber_max_iters=500)


def _tiny_breakdown(**overrides):
    values = dict(n_values=(60,), o_values=(0, 5), d=4, s=1, replicates=2, ctrl=TINY_CTRL)
    values.update(overrides)
    return suite_with_overrides("breakdown", **values)


def _row(suite, cell, estimator, l2_error, seed=0, **changes):
    row = ReplicateRow(suite=suite, cell=cell.label, seed=seed, covariate_law=cell.covariate_law, n=cell.n,
                       d=100, s=5, o=cell.o, estimator=estimator, l2_error=l2_error, success_flag=True,
                       wall_time=0.0)
    return replace(row, **changes)


class TestSuites:
    def test_registered_suites(self):
        assert set(SUITES) == {"n_scaling", "o_scaling", "breakdown", "baselines"}
        assert len(SUITES["n_scaling"].cells()) == 8
        assert len(SUITES["breakdown"].cells()) == 6

    def test_cell_label(self):
        assert Cell("student_t", 9.0, 1000, 0).label == "student_t(9)/n=1000/o=0"
        assert Cell("gaussian", None, 2000, 50).label == "gaussian/n=2000/o=50"

    def test_overrides(self):
        spec = _tiny_breakdown()
        assert spec.name == "breakdown"
        assert spec.n_values == (60,)
        assert SUITES["breakdown"].n_values == (1000,)

    def test_unknown_suite_or_field(self):
        with pytest.raises(RobustRegressionError, match="unknown suite"):
            suite_with_overrides("speed")
        with pytest.raises(RobustRegressionError, match="colour"):
            suite_with_overrides("breakdown", colour="red")

    def test_invalid_threads(self):
        with pytest.raises(RobustRegressionError):
            BenchmarkRunner(_tiny_breakdown(), threads=0)


class TestReplicate:
    def test_rows_per_estimator(self):
        spec = _tiny_breakdown(estimators=("robust", "lasso"))
        rows = run_replicate(spec, Cell("gaussian", None, 60, 5), seed=3)
        assert [r.estimator for r in rows] == ["robust", "lasso"]
        assert all(r.error == "" and r.l2_error is not None for r in rows)

    def test_invalid_cell_recorded_not_raised(self):
        spec = _tiny_breakdown()
        rows = run_replicate(spec, Cell("gaussian", None, 60, 100), seed=0)
        assert len(rows) == 1
        assert rows[0].l2_error is None
        assert "o must lie" in rows[0].error


class TestRunSuite:
    def test_row_count_and_checks(self):
        runner = run_suite(_tiny_breakdown())
        assert len(runner.rows) == 4
        assert runner.output_data["checks"] == {"row count = 4": True}
        assert runner.passed
        assert runner.output_data["statistics"]["total_rows"] == 4
        assert set(runner.output_data["cells"]) == {"gaussian/n=60/o=0", "gaussian/n=60/o=5"}

    def test_independent_of_thread_count(self):
        one = run_suite(_tiny_breakdown(), threads=1).rows
        two = run_suite(_tiny_breakdown(), threads=2).rows
        assert [replace(r, wall_time=0.0) for r in one] == [replace(r, wall_time=0.0) for r in two]

    def test_rows_sorted(self):
        rows = run_suite(_tiny_breakdown()).rows
        assert rows == sorted(rows, key=ReplicateRow.sort_key)

    def test_markdown(self):
        markdown = run_suite(_tiny_breakdown()).generate_markdown()
        assert markdown.startswith("# Benchmark: breakdown")
        assert "| gaussian/n=60/o=5 | robust |" in markdown
        assert "- [x] row count = 4" in markdown

    @pytest.mark.parametrize("quiet", [False, True])
    def test_progress_silenced_only_inside_pool(self, capsys, quiet):
        set_quiet(quiet)
        try:
            run_suite(_tiny_breakdown(), threads=2)
            assert is_quiet() is quiet
        finally:
            set_quiet(False)
        err = capsys.readouterr().err
        assert "Generated n=" not in err
        assert "ROUNDING" not in err
        assert ("Running suite breakdown" in err) is not quiet


class TestChecksFromRows:
    def _o_scaling(self, robust, lasso, unweighted):
        spec = suite_with_overrides("o_scaling", replicates=1)
        runner = BenchmarkRunner(spec)
        rows = []
        for o, r, l, u in zip(spec.o_values, robust, lasso, unweighted):
            cell = Cell("gaussian", None, 2000, o)
            rows += [_row("o_scaling", cell, "robust", r), _row("o_scaling", cell, "lasso", l),
                     _row("o_scaling", cell, "huber_lasso_unweighted", u)]
        runner.rows = sorted(rows, key=ReplicateRow.sort_key)
        runner.organize_data()
        return runner

    def test_o_scaling_passes(self):
        robust = [0.1 + 0.45 * np.sqrt(o / 2000) for o in (0, 20, 50, 100)]
        runner = self._o_scaling(robust, [10.0] * 4, [0.11] * 4)
        checks = runner.output_data["checks"]
        assert len(checks) == 5
        assert runner.passed, checks
        assert runner.output_data["scaling"]["o_fit"]["gaussian/n=2000/robust"]["r_squared"] == pytest.approx(1.0)

    def test_lasso_not_worse_fails(self):
        robust = [0.1 + 0.45 * np.sqrt(o / 2000) for o in (0, 20, 50, 100)]
        runner = self._o_scaling(robust, [0.3] * 4, [0.11] * 4)
        assert not runner.output_data["checks"]["gaussian/n=2000/o=100: lasso error >= 3x robust error"]
        assert not runner.passed

    def test_n_scaling_slope(self):
        spec = suite_with_overrides("n_scaling", replicates=1, covariate_laws=(("gaussian", None),))
        runner = BenchmarkRunner(spec)
        runner.rows = [
            _row("n_scaling", Cell("gaussian", None, n, 0), "robust", 3.0 / np.sqrt(n)) for n in spec.n_values
        ]
        runner.organize_data()
        fit = runner.output_data["scaling"]["n_slope"]["gaussian/o=0/robust"]
        assert fit["slope"] == pytest.approx(-0.5)
        assert runner.output_data["checks"]["slope gaussian/o=0/robust in [-0.65, -0.35]"]


class TestFiles:
    def test_rows_round_trip(self, tmp_path):
        cell = Cell("student_t", 9.0, 1000, 50)
        rows = [
            _row("baselines", cell, "robust", 0.1234567890123, wall_time=1.5),
            _row("baselines", cell, "lasso", None, seed=1, success_flag=False, error="bad, \"quoted\" value"),
        ]
        path = tmp_path / "rows.csv"
        write_rows_csv(rows, path)
        assert read_rows_csv(path) == rows

    def test_long_format(self, tmp_path):
        cell = Cell("gaussian", None, 1000, 0)
        rows = [_row("baselines", cell, "robust", 0.5), _row("baselines", cell, "lasso", None)]
        path = tmp_path / "long.csv"
        write_long_csv(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "suite,cell,estimator,metric,value"
        assert len(lines) == 1 + 3 + 2
        assert lines[1] == "baselines,gaussian/n=1000/o=0,robust,l2_error,0.5"


class TestChecks:
    def test_rounding_bound_holds(self):
        result = check_rounding_bound(np.random.default_rng(0), points=600)
        assert result.passed
        assert result.trials >= 600

    def test_raised_threshold_detected(self):
        result = check_rounding_bound(np.random.default_rng(0), threshold_scale=2.0, points=600)
        assert not result.passed
        assert result.failures > 0

    def test_projections(self):
        assert check_projections(np.random.default_rng(1), trials=50).passed

    def test_verify_markdown(self):
        results = [CheckResult("a", True, 3, 0), CheckResult("b", False, 2, 1, "detail")]
        markdown = generate_verify_markdown(results)
        assert "Checks: 2, failed: 1" in markdown
        assert "| b | FAIL | 2 | 1 | detail |" in markdown
        assert results[1].to_dict()["failures"] == 1
