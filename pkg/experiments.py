"""
Benchmark suites and invariant checks.

Suites (synthetic data only, every row carries a truth-based l2 error):
- n_scaling: error against n for gaussian and student_t(9) covariates
- o_scaling: error against the outlier count under a leverage adversary
- breakdown: robust estimator across a growing contamination fraction
- baselines: robust estimator against lasso and unweighted Huber-lasso

Replicates run in a thread pool driven by asyncio; rows are collected and
sorted by (cell, seed, estimator) so the output does not depend on the
number of threads.

Output files (written by the CLI):
- bench_<suite>.csv: one row per replicate and estimator
- bench_<suite>_long.csv: plot-ready suite,cell,estimator,metric,value
- bench_<suite>.json: metadata, statistics, per-cell summary and checks
- bench_<suite>.md: markdown summary
"""

import asyncio
import csv
import datetime
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from console import is_quiet, log_message, set_quiet
from datagen import GeneratorSpec, draw_clean, generate, true_moment_profile
from huber_lasso import HuberObjective, solve
from model_core import RobustRegressionError, SolverControls, compute_rates
from oracle_verify import brute_inner_max, finite_diff, grid_resolution, quadratic_branch_1d
from pipeline import estimate
from pruning import prune_matrix
from rounding import RoundedWeights, round_weights
from tuning import closed_form_tau_x, default_config, lambda_star_prime
from weight_solver import (
    compute_weight,
    dual_certificate_bound,
    inner_max,
    oracle_weights,
    project_spectrahedron,
    project_truncated_simplex,
    saddle_value,
)

BENCH_CONTROLS = SolverControls(
    max_outer_iters=200,
    max_inner_iters=200,
    warm_inner_iters=10,
    huber_max_iters=3000,
    huber_tolerance=1e-7,
)

ROW_FIELDS = (
    "suite", "cell", "seed", "covariate_law", "n", "d", "s", "o",
    "estimator", "l2_error", "success_flag", "wall_time", "error",
)
LONG_FIELDS = ("suite", "cell", "estimator", "metric", "value")


@dataclass(frozen=True)
class Cell:
    covariate_law: str
    law_param: Optional[float]
    n: int
    o: int

    @property
    def label(self) -> str:
        law = self.covariate_law if self.law_param is None else f"{self.covariate_law}({self.law_param:g})"
        return f"{law}/n={self.n}/o={self.o}"


@dataclass(frozen=True)
class SuiteSpec:
    name: str
    covariate_laws: Tuple[Tuple[str, Optional[float]], ...]
    n_values: Tuple[int, ...]
    o_values: Tuple[int, ...]
    d: int
    s: int
    replicates: int
    contamination: str = "none"
    magnitude: float = 0.0
    estimators: Tuple[str, ...] = ("robust",)
    calibration: str = "practical"
    delta: float = 0.1
    noise_law: str = "gaussian"
    correlation: float = 0.0
    seed: int = 0
    ctrl: SolverControls = BENCH_CONTROLS

    def cells(self) -> List[Cell]:
        return [
            Cell(law, param, n, o)
            for law, param in self.covariate_laws
            for n in self.n_values
            for o in self.o_values
        ]


SUITES: Dict[str, SuiteSpec] = {
    "n_scaling": SuiteSpec(
        name="n_scaling",
        covariate_laws=(("gaussian", None), ("student_t", 9.0)),
        n_values=(1000, 2000, 4000, 8000),
        o_values=(0,),
        d=200,
        s=5,
        replicates=30,
    ),
    "o_scaling": SuiteSpec(
        name="o_scaling",
        covariate_laws=(("gaussian", None),),
        n_values=(2000,),
        o_values=(0, 20, 50, 100),
        d=100,
        s=5,
        replicates=30,
        contamination="leverage",
        magnitude=1e3,
        estimators=("robust", "lasso", "huber_lasso_unweighted"),
    ),
    "breakdown": SuiteSpec(
        name="breakdown",
        covariate_laws=(("gaussian", None),),
        n_values=(1000,),
        o_values=(0, 50, 100, 200, 300, 400),
        d=50,
        s=5,
        replicates=10,
        contamination="oblivious",
        magnitude=100.0,
    ),
    "baselines": SuiteSpec(
        name="baselines",
        covariate_laws=(("gaussian", None), ("student_t", 9.0)),
        n_values=(1000,),
        o_values=(0, 50),
        d=100,
        s=5,
        replicates=10,
        contamination="oblivious",
        magnitude=100.0,
        estimators=("robust", "lasso", "huber_lasso_unweighted"),
    ),
}


@dataclass(frozen=True)
class ReplicateRow:
    suite: str
    cell: str
    seed: int
    covariate_law: str
    n: int
    d: int
    s: int
    o: int
    estimator: str
    l2_error: Optional[float]
    success_flag: bool
    wall_time: float
    error: str = ""

    def sort_key(self) -> Tuple[str, int, str]:
        return self.cell, self.seed, self.estimator

    def to_record(self) -> List[str]:
        return [
            self.suite, self.cell, str(self.seed), self.covariate_law,
            str(self.n), str(self.d), str(self.s), str(self.o), self.estimator,
            "" if self.l2_error is None else repr(self.l2_error),
            "1" if self.success_flag else "0",
            repr(self.wall_time),
            self.error,
        ]

    @classmethod
    def from_record(cls, record: Dict[str, str]) -> "ReplicateRow":
        return cls(
            suite=record["suite"],
            cell=record["cell"],
            seed=int(record["seed"]),
            covariate_law=record["covariate_law"],
            n=int(record["n"]),
            d=int(record["d"]),
            s=int(record["s"]),
            o=int(record["o"]),
            estimator=record["estimator"],
            l2_error=None if record["l2_error"] == "" else float(record["l2_error"]),
            success_flag=record["success_flag"] == "1",
            wall_time=float(record["wall_time"]),
            error=record["error"],
        )


def suite_with_overrides(name: str, **overrides: Any) -> SuiteSpec:
    """A registered suite with some fields replaced (for small runs)."""
    if name not in SUITES:
        raise RobustRegressionError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    known = {f.name for f in fields(SuiteSpec)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise RobustRegressionError(f"unknown suite field(s): {', '.join(unknown)}")
    return replace(SUITES[name], **overrides)


def run_replicate(spec: SuiteSpec, cell: Cell, seed: int) -> List[ReplicateRow]:
    """Generate one instance for a cell and run every estimator of the suite on it."""

    def row(estimator: str, l2_error: Optional[float], success: bool, wall: float, error: str = "") -> ReplicateRow:
        return ReplicateRow(
            suite=spec.name, cell=cell.label, seed=seed, covariate_law=cell.covariate_law,
            n=cell.n, d=spec.d, s=spec.s, o=cell.o, estimator=estimator,
            l2_error=l2_error, success_flag=success, wall_time=wall, error=error,
        )

    start = time.perf_counter()
    try:
        gen = GeneratorSpec(
            n=cell.n, d=spec.d, s=spec.s,
            covariate_law=cell.covariate_law, law_param=cell.law_param,
            correlation=spec.correlation, noise_law=spec.noise_law,
            contamination=spec.contamination if cell.o > 0 else "none",
            o=cell.o, magnitude=spec.magnitude, seed=seed,
        )
        instance = generate(gen)
        profile = true_moment_profile(gen)
        config = default_config(
            profile, cell.n, spec.d, spec.s, cell.o, spec.delta,
            beta_star_l1=float(np.sum(np.abs(instance.truth.beta_star))),
            calibration=spec.calibration,
        )
    except RobustRegressionError as e:
        wall = time.perf_counter() - start
        return [row(estimator, None, False, wall, str(e)) for estimator in spec.estimators]

    rows = []
    for estimator in spec.estimators:
        start = time.perf_counter()
        try:
            result = estimate(instance, config, spec.ctrl, estimator=estimator)
            rows.append(row(estimator, result.l2_error, not result.failed, time.perf_counter() - start))
        except RobustRegressionError as e:
            rows.append(row(estimator, None, False, time.perf_counter() - start, str(e)))
    return rows


def _median(values: Sequence[Optional[float]]) -> Optional[float]:
    finite = [v for v in values if v is not None]
    return float(np.median(finite)) if finite else None


def _fit(x: Sequence[float], y: Sequence[float]) -> Dict[str, float]:
    fit = stats.linregress(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return {"slope": float(fit.slope), "intercept": float(fit.intercept), "r_squared": float(fit.rvalue ** 2)}


class BenchmarkRunner:
    """Runs one suite and organizes its rows into summary statistics."""

    def __init__(self, spec: SuiteSpec, threads: int = 1):
        if threads < 1:
            raise RobustRegressionError(f"threads must be at least 1, got {threads}")
        self.spec = spec
        self.threads = threads
        self.rows: List[ReplicateRow] = []
        self.output_data: Dict[str, Any] = {
            "metadata": {
                "suite": spec.name,
                "started": "",
                "finished": "",
                "threads": threads,
                "seed": spec.seed,
                "calibration": spec.calibration,
                "delta": spec.delta,
                "d": spec.d,
                "s": spec.s,
                "contamination": spec.contamination,
                "magnitude": spec.magnitude,
                "solver": spec.ctrl.to_dict(),
            },
            "statistics": {
                "total_rows": 0,
                "failed_rows": 0,
                "weight_failures": 0,
                "cells": 0,
            },
            "cells": {},
            "scaling": {},
            "checks": {},
        }

    async def run(self) -> List[ReplicateRow]:
        """Execute every (cell, replicate) job in the thread pool."""
        self.output_data["metadata"]["started"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
        cells = self.spec.cells()
        seeds = [self.spec.seed + k for k in range(self.spec.replicates)]
        log_message(
            f"Running suite {self.spec.name}: {len(cells)} cells x {len(seeds)} replicates "
            f"on {self.threads} thread(s)"
        )
        was_quiet = is_quiet()
        set_quiet(True)
        try:
            loop = asyncio.get_running_loop()
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                jobs = [
                    loop.run_in_executor(pool, run_replicate, self.spec, cell, seed)
                    for cell in cells
                    for seed in seeds
                ]
                results = await asyncio.gather(*jobs)
        finally:
            set_quiet(was_quiet)
        self.rows = sorted((r for rows in results for r in rows), key=ReplicateRow.sort_key)
        self.output_data["metadata"]["finished"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
        return self.rows

    def organize_data(self) -> Dict[str, Any]:
        """Per-cell medians, scaling fits and the acceptance checks of the suite."""
        cells: Dict[str, Dict[str, Any]] = {}
        groups: Dict[Tuple[str, str], List[ReplicateRow]] = {}
        for r in self.rows:
            groups.setdefault((r.cell, r.estimator), []).append(r)
        for (cell, estimator), rows in groups.items():
            errors = [r.l2_error for r in rows]
            cells.setdefault(cell, {})[estimator] = {
                "median_error": _median(errors),
                "replicates": len(rows),
                "errors": sum(1 for r in rows if r.error),
                "success_rate": sum(1 for r in rows if r.success_flag) / len(rows),
            }
            log_message(f"  {cell} [{estimator}]: median error {cells[cell][estimator]['median_error']}")

        scaling = self._scaling_fits()
        self.output_data["cells"] = cells
        self.output_data["scaling"] = scaling
        self.output_data["checks"] = self._acceptance_checks(scaling)
        self.output_data["statistics"] = {
            "total_rows": len(self.rows),
            "failed_rows": sum(1 for r in self.rows if r.error),
            "weight_failures": sum(1 for r in self.rows if not r.success_flag and not r.error),
            "cells": len(cells),
        }
        return self.output_data

    def _median_for(self, cell: Cell, estimator: str) -> Optional[float]:
        return _median([r.l2_error for r in self.rows if r.cell == cell.label and r.estimator == estimator])

    def _scaling_fits(self) -> Dict[str, Any]:
        spec = self.spec
        fits: Dict[str, Any] = {"n_slope": {}, "o_fit": {}}
        for law, param in spec.covariate_laws:
            for estimator in spec.estimators:
                for o in spec.o_values:
                    points = [(n, self._median_for(Cell(law, param, n, o), estimator)) for n in spec.n_values]
                    points = [(n, m) for n, m in points if m is not None and m > 0]
                    if len(points) >= 4:
                        key = f"{Cell(law, param, 0, o).label.split('/')[0]}/o={o}/{estimator}"
                        fits["n_slope"][key] = _fit([math.log(n) for n, _ in points], [math.log(m) for _, m in points])
                for n in spec.n_values:
                    points = [(o, self._median_for(Cell(law, param, n, o), estimator)) for o in spec.o_values]
                    points = [(o, m) for o, m in points if m is not None]
                    if len(points) >= 4:
                        key = f"{Cell(law, param, n, 0).label.rsplit('/', 1)[0]}/{estimator}"
                        fits["o_fit"][key] = _fit([math.sqrt(o / n) for o, _ in points], [m for _, m in points])
        return fits

    def _acceptance_checks(self, scaling: Dict[str, Any]) -> Dict[str, Optional[bool]]:
        spec = self.spec
        checks: Dict[str, Optional[bool]] = {}
        if spec.name == "n_scaling":
            for key, fit in scaling["n_slope"].items():
                if key.endswith("/robust"):
                    checks[f"slope {key} in [-0.65, -0.35]"] = -0.65 <= fit["slope"] <= -0.35
        elif spec.name == "o_scaling" and 0 in spec.o_values and len(spec.o_values) >= 4:
            top = max(spec.o_values)
            for law, param in spec.covariate_laws:
                for n in spec.n_values:
                    clean = self._median_for(Cell(law, param, n, 0), "robust")
                    dirty = self._median_for(Cell(law, param, n, top), "robust")
                    prefix = Cell(law, param, n, top).label
                    if clean is not None and dirty is not None:
                        checks[f"{prefix}: robust error <= 3x clean error"] = dirty <= 3.0 * clean
                    lasso = self._median_for(Cell(law, param, n, top), "lasso")
                    if lasso is not None and dirty is not None:
                        checks[f"{prefix}: lasso error >= 3x robust error"] = lasso >= 3.0 * dirty
                    fit = scaling["o_fit"].get(f"{Cell(law, param, n, 0).label.rsplit('/', 1)[0]}/robust")
                    if fit is not None:
                        checks[f"{prefix}: robust error linear in sqrt(o/n), R^2 >= 0.7"] = fit["r_squared"] >= 0.7
        if spec.name in ("o_scaling", "baselines") and 0 in spec.o_values:
            for law, param in spec.covariate_laws:
                for n in spec.n_values:
                    robust = self._median_for(Cell(law, param, n, 0), "robust")
                    unweighted = self._median_for(Cell(law, param, n, 0), "huber_lasso_unweighted")
                    if robust is not None and unweighted is not None:
                        label = Cell(law, param, n, 0).label
                        checks[f"{label}: robust within 25% of unweighted Huber"] = (
                            abs(robust - unweighted) <= 0.25 * max(robust, unweighted)
                        )
        expected = spec.replicates * len(spec.cells()) * len(spec.estimators)
        checks[f"row count = {expected}"] = len(self.rows) == expected
        return checks

    @property
    def passed(self) -> bool:
        return all(value is not False for value in self.output_data["checks"].values())

    def generate_markdown(self) -> str:
        """Generate markdown summary."""
        meta = self.output_data["metadata"]
        statistics = self.output_data["statistics"]
        markdown = f"# Benchmark: {meta['suite']}\n\n"

        markdown += "## Setup\n\n"
        markdown += f"- d = {meta['d']}, s = {meta['s']}, delta = {meta['delta']}\n"
        markdown += f"- Contamination: {meta['contamination']} (magnitude {meta['magnitude']:g})\n"
        markdown += f"- Calibration: {meta['calibration']}\n"
        markdown += f"- Seed: {meta['seed']}, threads: {meta['threads']}\n"
        markdown += f"- Started: {meta['started']}\n"
        markdown += f"- Finished: {meta['finished']}\n\n"

        markdown += "## Statistics\n\n"
        markdown += f"Total Rows: {statistics['total_rows']}\n"
        markdown += f"Rows With Errors: {statistics['failed_rows']}\n"
        markdown += f"Weight Program Failures: {statistics['weight_failures']}\n\n"

        markdown += "## Median l2 error\n\n"
        markdown += "| cell | estimator | median error | success rate |\n"
        markdown += "|------|-----------|--------------|--------------|\n"
        for cell, by_estimator in self.output_data["cells"].items():
            for estimator, summary in by_estimator.items():
                markdown += self._format_cell_markdown(cell, estimator, summary)
        markdown += "\n"

        scaling = self.output_data["scaling"]
        if scaling["n_slope"] or scaling["o_fit"]:
            markdown += "## Scaling fits\n\n"
            for key, fit in scaling["n_slope"].items():
                markdown += f"- log error vs log n, {key}: slope {fit['slope']:.3f} (R^2 {fit['r_squared']:.3f})\n"
            for key, fit in scaling["o_fit"].items():
                markdown += f"- error vs sqrt(o/n), {key}: slope {fit['slope']:.3f} (R^2 {fit['r_squared']:.3f})\n"
            markdown += "\n"

        if self.output_data["checks"]:
            markdown += "## Checks\n\n"
            for name, passed in self.output_data["checks"].items():
                markdown += f"- [{'x' if passed else ' '}] {name}\n"
        return markdown

    def _format_cell_markdown(self, cell: str, estimator: str, summary: Dict[str, Any]) -> str:
        median = summary["median_error"]
        shown = "n/a" if median is None else f"{median:.4g}"
        return f"| {cell} | {estimator} | {shown} | {summary['success_rate']:.2f} |\n"


def run_suite(spec: SuiteSpec, threads: int = 1) -> BenchmarkRunner:
    runner = BenchmarkRunner(spec, threads)
    asyncio.run(runner.run())
    runner.organize_data()
    return runner


def write_rows_csv(rows: Sequence[ReplicateRow], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(ROW_FIELDS)
        for r in rows:
            writer.writerow(r.to_record())


def read_rows_csv(path: Path) -> List[ReplicateRow]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return [ReplicateRow.from_record(record) for record in csv.DictReader(f)]


def write_long_csv(rows: Sequence[ReplicateRow], path: Path) -> None:
    """Plot-ready long format: one (metric, value) pair per line."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(LONG_FIELDS)
        for r in rows:
            if r.l2_error is not None:
                writer.writerow([r.suite, r.cell, r.estimator, "l2_error", repr(r.l2_error)])
            writer.writerow([r.suite, r.cell, r.estimator, "success", "1" if r.success_flag else "0"])
            writer.writerow([r.suite, r.cell, r.estimator, "wall_time", repr(r.wall_time)])


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    trials: int
    failures: int
    detail: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def check_rounding_bound(rng: np.random.Generator, threshold_scale: float = 0.5,
                         points: int = 10_000) -> CheckResult:
    """At most 2 eps n weights are zeroed, and every kept weight satisfies 1/n <= 2 w_i."""
    combos = [(n, eps) for n in (5, 50, 500) for eps in (1.0 / n, 0.1, 0.3, 0.49)]
    per_combo = -(-points // len(combos))
    failures = 0
    trials = 0
    for n, eps in combos:
        for k in range(per_combo):
            if k % 2 == 0:
                v = rng.dirichlet(np.full(n, rng.choice([0.3, 1.0, 5.0])))
            else:
                v = 1.0 / n + rng.standard_normal(n) * rng.choice([0.1, 1.0, 10.0]) / n
            w = project_truncated_simplex(v, eps)
            rounded = round_weights(w, threshold_scale=threshold_scale)
            kept = rounded.retained
            trials += 1
            if rounded.zeroed_count > 2.0 * eps * n + 1e-9 or np.any(rounded.w_prime[kept] > 2.0 * w.w[kept] + 1e-15):
                failures += 1
    return CheckResult("rounding zeroes at most 2*eps*n samples", failures == 0, trials, failures,
                       f"threshold {threshold_scale:g}/n")


def _random_symmetric(rng: np.random.Generator, d: int) -> np.ndarray:
    A = rng.standard_normal((d, d))
    return 0.5 * (A + A.T)


def check_inner_oracle(rng: np.random.Generator, count_2: int = 20, count_3: int = 4,
                       duals: int = 20) -> List[CheckResult]:
    """Inner maximum against the brute-force grid, and weak duality at random feasible U."""
    ctrl = SolverControls(max_inner_iters=3000, gap_tolerance=1e-6)
    agreement_failures = duality_failures = 0
    trials = 0
    worst = 0.0
    for d, count in ((2, count_2), (3, count_3)):
        for _ in range(count):
            S = _random_symmetric(rng, d)
            top = float(np.linalg.eigvalsh(S)[-1])
            lam = float(rng.choice([0.0, 0.1, 1.0, abs(top) + 1.0]))
            r_bound = float(rng.choice([0.5, 1.0])) ** 2
            solved = inner_max(S, lam, r_bound, ctrl)
            brute = brute_inner_max(S, lam, r_bound)
            allowed = max(1e-3, grid_resolution(S, lam, r_bound) + solved.gap)
            worst = max(worst, abs(solved.value - brute))
            trials += 1
            if abs(solved.value - brute) > allowed:
                agreement_failures += 1
            for _ in range(duals):
                U = np.clip(_random_symmetric(rng, d) * lam, -lam, lam)
                if solved.value > dual_certificate_bound(S, U, r_bound, lam) + 1e-9:
                    duality_failures += 1
    return [
        CheckResult("inner maximum agrees with brute force", agreement_failures == 0, trials,
                    agreement_failures, f"largest difference {worst:.2e}"),
        CheckResult("weak duality", duality_failures == 0, trials * duals, duality_failures),
    ]


def _huber_problem(rng: np.random.Generator, n: int, d: int, lambda_o: float, lambda_s: float,
                   drop: float = 0.2) -> HuberObjective:
    X = rng.uniform(-1.0, 1.0, size=(n, d))
    y = X @ rng.standard_normal(d) + 0.1 * rng.standard_normal(n)
    keep = rng.random(n) >= drop
    keep[0] = True
    weights = RoundedWeights(w_prime=np.where(keep, 1.0 / n, 0.0), zeroed_count=int(n - keep.sum()))
    return HuberObjective(lambda_o=lambda_o, lambda_s=lambda_s, weights=weights, y=y, X_tilde=X)


def check_huber(rng: np.random.Generator, problems: int = 20) -> List[CheckResult]:
    """One-dimensional closed form, noiseless recovery and the analytic gradient."""
    ctrl = SolverControls(huber_max_iters=20000, huber_tolerance=1e-10)
    closed_failures = 0
    for _ in range(problems):
        n = 40
        obj = _huber_problem(rng, n, 1, lambda_o=1.0, lambda_s=float(rng.uniform(0.0, 0.2)))
        # every residual lies well inside the quadratic branch
        obj = replace(obj, lambda_o=100.0 * (1.0 + float(np.max(np.abs(obj.y)))) / math.sqrt(n))
        beta, _ = solve(obj, ctrl)
        expected = quadratic_branch_1d(obj.y, obj.X_tilde[:, 0], obj.weights.multipliers, obj.lambda_s)
        if abs(beta[0] - expected) > 1e-6:
            closed_failures += 1

    n, d = 50, 2
    X = rng.standard_normal((n, d))
    beta_star = rng.standard_normal(d)
    y = X @ beta_star
    uniform = RoundedWeights(w_prime=np.full(n, 1.0 / n), zeroed_count=0)
    obj = HuberObjective(lambda_o=10.0 * (1.0 + float(np.max(np.abs(y)))), lambda_s=1e-8,
                         weights=uniform, y=y, X_tilde=X)
    beta, _ = solve(obj, ctrl)
    least_squares = np.linalg.lstsq(X, y, rcond=None)[0]
    recovery_gap = float(np.max(np.abs(beta - least_squares)))

    gradient_failures = 0
    obj = _huber_problem(rng, 30, 4, lambda_o=0.05, lambda_s=0.0)
    checked = 0
    while checked < problems:
        beta = rng.standard_normal(4)
        if np.any(np.abs(np.abs(obj.arguments(beta)) - 1.0) < 1e-3):
            continue
        checked += 1
        analytic = obj.smooth_gradient(beta)
        numeric = finite_diff(obj.smooth_value, beta, h=1e-6)
        scale = max(1.0, float(np.max(np.abs(analytic))))
        if float(np.max(np.abs(analytic - numeric))) > 1e-5 * scale:
            gradient_failures += 1

    return [
        CheckResult("Huber solver matches the 1-D closed form", closed_failures == 0, problems, closed_failures),
        CheckResult("Huber solver recovers noiseless least squares", recovery_gap <= 1e-4, 1,
                    int(recovery_gap > 1e-4), f"max deviation {recovery_gap:.2e}"),
        CheckResult("Huber gradient matches central differences", gradient_failures == 0, problems,
                    gradient_failures),
    ]


def check_projections(rng: np.random.Generator, trials: int = 200) -> CheckResult:
    failures = 0
    for _ in range(trials):
        n = int(rng.integers(2, 40))
        eps = float(rng.uniform(0.0, 0.49))
        try:
            project_truncated_simplex(rng.standard_normal(n) * 3.0, eps)
            d = int(rng.integers(2, 6))
            project_spectrahedron(_random_symmetric(rng, d) * 3.0, float(rng.uniform(0.1, 4.0)))
        except RobustRegressionError:
            failures += 1
    return CheckResult("projections are feasible", failures == 0, trials, failures)


def _small_instance(seed: int, n: int = 80, d: int = 6, o: int = 6) -> Tuple[Any, Any]:
    gen = GeneratorSpec(n=n, d=d, s=2, contamination="oblivious", o=o, magnitude=20.0, seed=seed)
    instance = generate(gen)
    config = default_config(true_moment_profile(gen), n, d, 2, o, 0.1, calibration="practical")
    return instance, config


def check_pipeline_symmetry(rng: np.random.Generator, instances: int = 3) -> CheckResult:
    """Identical inputs give identical reports; permuting samples leaves beta_hat unchanged."""
    ctrl = SolverControls(max_outer_iters=40, warm_inner_iters=5, huber_tolerance=1e-9)
    failures = 0
    for k in range(instances):
        instance, config = _small_instance(int(rng.integers(0, 2 ** 31)) + k)
        first = estimate(instance, config, ctrl)
        second = estimate(instance, config, ctrl)
        order = rng.permutation(instance.n)
        permuted = estimate(instance.permuted(order), config, ctrl)
        same = first.to_dict(include_timings=False) == second.to_dict(include_timings=False)
        equivariant = (
            float(np.max(np.abs(first.beta_hat - permuted.beta_hat))) <= 1e-8
            and np.array_equal(first.rounded.w_prime[order], permuted.rounded.w_prime)
        )
        if not (same and equivariant):
            failures += 1
    return CheckResult("pipeline is deterministic and permutation-equivariant", failures == 0, instances, failures)


def check_oracle_chain(rng: np.random.Generator, instances: int = 3) -> CheckResult:
    """The weight program's value at w_hat is at most its value at the (normalized) oracle weights."""
    ctrl = SolverControls(max_outer_iters=150, warm_inner_iters=10)
    failures = 0
    for _ in range(instances):
        instance, config = _small_instance(int(rng.integers(0, 2 ** 31)))
        pruned = prune_matrix(instance.X, config.tau_x)
        r_bound = config.r ** 2
        solution = compute_weight(pruned, config.lambda_star, config.tau_suc, config.epsilon, r_bound, ctrl)
        w_oracle = oracle_weights(instance.n, instance.truth.outlier_set, config.epsilon, normalize=True)
        oracle = saddle_value(pruned, w_oracle, config.lambda_star, r_bound, ctrl)
        slack = max(solution.gap_tolerance, 1e-2 * max(1.0, oracle.dual_bound))
        if solution.value > oracle.dual_bound + slack:
            failures += 1
    return CheckResult("value at w_hat <= value at oracle weights", failures == 0, instances, failures)


def concentration_holds(spec: GeneratorSpec, M: np.ndarray, delta: float) -> bool:
    """
    One clean draw of the pruned second-moment bound for a fixed M in the spectrahedron.

    (1/n) sum_i <x_i x_i^T, M> on clean pruned covariates against
    lambda_*' ||M||_1 + ||Sigma||_op Tr(M) at o = 0, with tau_x at its closed-form value.
    """
    x, _, _, _ = draw_clean(spec)
    profile = true_moment_profile(spec)
    tau_x = closed_form_tau_x(spec.n, spec.d, delta)
    rates = compute_rates(spec.n, spec.d, 0, delta, tau_x, profile.sigma_x2)
    x_tilde = prune_matrix(x, tau_x).X_tilde
    lhs = float(np.mean(np.sum((x_tilde @ M) * x_tilde, axis=1)))
    bracket = lambda_star_prime(profile, rates, tau_x, 0.0)
    rhs = bracket * float(np.sum(np.abs(M))) + profile.sigma_op_squared * float(np.trace(M))
    return lhs <= rhs


def check_concentration(rng: np.random.Generator, replicates: int = 40, delta: float = 0.1) -> CheckResult:
    d = 10
    v = rng.standard_normal(d)
    M = np.outer(v, v) / float(v @ v)
    base = int(rng.integers(0, 2 ** 31))
    holds = sum(
        concentration_holds(GeneratorSpec(n=400, d=d, s=1, covariate_law="student_t", law_param=9.0, seed=base + k),
                            M, delta)
        for k in range(replicates)
    )
    required = math.floor(0.85 * replicates)
    return CheckResult("pruned second moments concentrate", holds >= required, replicates, replicates - holds,
                       f"{holds}/{replicates} held, need {required}")


def oracle_feasibility_trial(seed: int, n: int = 1000, d: int = 50, delta: float = 0.1,
                             ctrl: Optional[SolverControls] = None) -> bool:
    """COMPUTE-WEIGHT on clean student_t(9) data with lambda_* = lambda_*' and tau_suc = tau_suc'."""
    gen = GeneratorSpec(n=n, d=d, s=1, covariate_law="student_t", law_param=9.0, seed=seed)
    instance = generate(gen)
    config = default_config(true_moment_profile(gen), n, d, 1, 0, delta, calibration="practical")
    pruned = prune_matrix(instance.X, config.tau_x)
    solution = compute_weight(pruned, config.lambda_star_prime, config.tau_suc_prime, config.epsilon,
                              config.r ** 2, ctrl or BENCH_CONTROLS)
    return solution.success


def check_oracle_feasibility(rng: np.random.Generator, replicates: int = 10) -> CheckResult:
    ctrl = SolverControls(max_outer_iters=30, max_inner_iters=200, warm_inner_iters=5)
    base = int(rng.integers(0, 2 ** 31))
    successes = sum(oracle_feasibility_trial(base + k, n=300, d=10, ctrl=ctrl) for k in range(replicates))
    required = math.floor(0.8 * replicates)
    return CheckResult("weight program succeeds on clean data", successes >= required, replicates,
                       replicates - successes, f"{successes}/{replicates} succeeded, need {required}")


def run_verify(seed: int = 0, threshold_scale: float = 0.5) -> List[CheckResult]:
    """Run every invariant check on self-generated data."""
    rng = np.random.default_rng(seed)
    was_quiet = is_quiet()
    set_quiet(True)
    try:
        results = [check_rounding_bound(rng, threshold_scale)]
        results += check_inner_oracle(rng)
        results += check_huber(rng)
        results.append(check_projections(rng))
        results.append(check_pipeline_symmetry(rng))
        results.append(check_oracle_chain(rng))
        results.append(check_concentration(rng))
        results.append(check_oracle_feasibility(rng))
    finally:
        set_quiet(was_quiet)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        log_message(f"[{status}] {result.name}: {result.failures}/{result.trials} failures {result.detail}".rstrip())
    return results


def generate_verify_markdown(results: Sequence[CheckResult]) -> str:
    markdown = "# Verify\n\n"
    markdown += f"Checks: {len(results)}, failed: {sum(1 for r in results if not r.passed)}\n\n"
    markdown += "| check | result | trials | failures | detail |\n"
    markdown += "|-------|--------|--------|----------|--------|\n"
    for r in results:
        markdown += f"| {r.name} | {'pass' if r.passed else 'FAIL'} | {r.trials} | {r.failures} | {r.detail} |\n"
    return markdown
