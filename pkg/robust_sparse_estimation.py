"""
Command-line entry point.

Subcommands:
- generate: draw a synthetic instance from the [generate] section and write
  instance.csv plus instance.csv.meta.json
- estimate: run an estimator on an instance file and write <name>.result.json
- bench: run a benchmark suite and write bench_<suite>.{csv,_long.csv,json,md}
- verify: run the invariant checks on self-generated data and write
  verify.json and verify.md

Exit codes: 0 success, 1 invalid input (validation or parse error), 2 a
benchmark or verify check failed.
"""

import argparse
import configparser
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from console import log_error, log_message
from datagen import GeneratorSpec, generate, read_instance, true_moment_profile, write_instance
from experiments import (
    BENCH_CONTROLS,
    SUITES,
    generate_verify_markdown,
    run_suite,
    run_verify,
    suite_with_overrides,
    write_long_csv,
    write_rows_csv,
)
from model_core import ParseError, RobustRegressionError, SolverControls, ValidationError, estimate_moment_profile
from pipeline import ESTIMATORS, estimate
from pruning import prune_matrix
from tuning import OVERRIDABLE, closed_form_tau_x, default_config, predicted_error_radius

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_SUITE_FAILED = 2


def _optional_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "none") else float(text)


def _int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _str_list(text: str) -> Tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _law_list(text: str) -> Tuple[Tuple[str, Optional[float]], ...]:
    """'gaussian, student_t:9' -> (('gaussian', None), ('student_t', 9.0))."""
    laws = []
    for part in _str_list(text):
        name, _, param = part.partition(":")
        laws.append((name.strip(), float(param) if param.strip() else None))
    return tuple(laws)


SECTIONS: Dict[str, Dict[str, Callable[[str], Any]]] = {
    "generate": {
        "n": int, "d": int, "s": int, "covariate_law": str, "law_param": _optional_float,
        "correlation": float, "noise_law": str, "noise_param": _optional_float,
        "noise_scale": float, "beta_scale": float, "contamination": str, "o": int,
        "magnitude": float, "seed": int,
    },
    "tuning": {
        "calibration": str, "delta": float, "s": int, "o": int, "c_s": float, "C_s": float,
        "c_suc": float, "profile": str, "estimator": str,
        **{name: float for name in OVERRIDABLE},
    },
    "solver": {
        "max_outer_iters": int, "max_inner_iters": int, "warm_inner_iters": int,
        "gap_tolerance": _optional_float, "huber_max_iters": int, "huber_tolerance": float,
        "seed": int,
    },
    "bench": {
        "replicates": int, "d": int, "s": int, "n_values": _int_list, "o_values": _int_list,
        "covariate_laws": _law_list, "contamination": str, "magnitude": float,
        "estimators": _str_list, "calibration": str, "delta": float, "noise_law": str,
        "correlation": float, "seed": int,
    },
}


def load_config(path: Optional[str]) -> Dict[str, Dict[str, Any]]:
    """
    Read an INI run configuration.

    Every section and key is optional; values are converted to their types here
    so that a bad value is reported with its section and key.

    Raises:
        ParseError: unreadable or malformed file
        ValidationError: unknown section or key, or a value of the wrong type
    """
    config: Dict[str, Dict[str, Any]] = {name: {} for name in SECTIONS}
    if path is None:
        return config
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        with open(path, "r", encoding="utf-8") as f:
            parser.read_file(f)
    except FileNotFoundError:
        raise ParseError("config file not found", path)
    except configparser.MissingSectionHeaderError as e:
        raise ParseError("missing section header", path, e.lineno)
    except configparser.ParsingError as e:
        line = e.errors[0][0] if e.errors else None
        raise ParseError("malformed line", path, line)
    except configparser.Error as e:
        raise ParseError(str(e), path)

    for section in parser.sections():
        if section not in SECTIONS:
            raise ValidationError(f"unknown config section [{section}]; expected one of {', '.join(SECTIONS)}")
        schema = SECTIONS[section]
        for key, raw in parser.items(section):
            if key not in schema:
                raise ValidationError(f"unknown config key {section}.{key}")
            try:
                config[section][key] = schema[key](raw)
            except ValueError:
                raise ValidationError(f"invalid value for {section}.{key}: {raw!r}")
    return config


def resolve_threads(value: Optional[int]) -> int:
    """--threads, then ROBREG_THREADS, then 1."""
    if value is None:
        env = os.environ.get("ROBREG_THREADS")
        if env is None or not env.strip():
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ValidationError(f"ROBREG_THREADS must be an integer, got {env!r}")
    if value < 1:
        raise ValidationError(f"threads must be at least 1, got {value}")
    return value


def solver_controls(config: Dict[str, Dict[str, Any]], base: SolverControls,
                    seed: Optional[int] = None) -> SolverControls:
    values = dict(config["solver"])
    if seed is not None:
        values["seed"] = seed
    return replace(base, **values)


def save_json(data: Dict[str, Any], path: Path, label: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, ensure_ascii=False)
    log_message(f"Successfully saved {label} to {path}")


def save_markdown(markdown: str, path: Path, label: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(markdown)
    log_message(f"Successfully saved {label} to {path}")


def cmd_generate(args: argparse.Namespace, config: Dict[str, Dict[str, Any]]) -> int:
    values = dict(config["generate"])
    if args.seed is not None:
        values["seed"] = args.seed
    for required in ("n", "d", "s"):
        if required not in values:
            raise ValidationError(f"generate.{required} is required")
    spec = GeneratorSpec.from_dict(values)
    log_message(f"Generating n={spec.n}, d={spec.d}, s={spec.s}, {spec.contamination} contamination (o={spec.o})")
    instance = generate(spec)
    out = Path(args.out)
    try:
        csv_path, meta_path = write_instance(instance, out / "instance.csv", spec, force=args.force)
    except FileExistsError as e:
        raise ValidationError(str(e))
    log_message(f"Successfully saved instance to {csv_path} and metadata to {meta_path}")
    return EXIT_OK


def _instance_sizes(instance, tuning: Dict[str, Any]) -> Tuple[int, int, str]:
    if instance.truth is not None:
        return instance.truth.s, instance.truth.o, "ground truth"
    if "s" in tuning:
        return int(tuning["s"]), int(tuning.get("o", 0)), "config"
    return 1, int(tuning.get("o", 0)), "default"


def cmd_estimate(args: argparse.Namespace, config: Dict[str, Dict[str, Any]]) -> int:
    tuning = dict(config["tuning"])
    estimator = tuning.pop("estimator", args.estimator)
    if estimator not in ESTIMATORS:
        raise ValidationError(f"tuning.estimator must be one of {ESTIMATORS}, got {estimator!r}")
    profile_source = tuning.pop("profile", "estimated")
    if profile_source not in ("estimated", "oracle"):
        raise ValidationError(f"tuning.profile must be 'estimated' or 'oracle', got {profile_source!r}")

    log_message(f"Reading instance from {args.instance}")
    instance, meta = read_instance(Path(args.instance))
    ctrl = solver_controls(config, SolverControls(), args.seed)
    s, o, size_source = _instance_sizes(instance, tuning)
    delta = float(tuning.get("delta", 0.1))

    if profile_source == "oracle":
        if not meta.get("spec"):
            raise ValidationError("tuning.profile = oracle needs the generator spec in the metadata sidecar")
        profile = true_moment_profile(GeneratorSpec.from_dict(meta["spec"]))
    else:
        tau_x = float(tuning.get("tau_x", closed_form_tau_x(instance.n, instance.d, delta)))
        profile = estimate_moment_profile(prune_matrix(instance.X, tau_x), seed=ctrl.seed)

    beta_star_l1 = None
    if instance.truth is not None:
        beta_star_l1 = float(abs(instance.truth.beta_star).sum())
    est_config = default_config(
        profile, instance.n, instance.d, s, o, delta,
        beta_star_l1=beta_star_l1,
        calibration=tuning.get("calibration", "theorem"),
        c_s=tuning.get("c_s", 6.0),
        C_s=tuning.get("C_s", 300.0),
        c_suc=tuning.get("c_suc", 1.0),
        overrides={name: tuning[name] for name in OVERRIDABLE if name in tuning},
    )
    if not est_config.theorem_conditions_met:
        failing = [name for name, value in est_config.flags.items() if not value]
        log_message(f"Theorem side conditions not met: {', '.join(failing)}")

    log_message(f"Running {estimator} estimator on n={instance.n}, d={instance.d}")
    result = estimate(instance, est_config, ctrl, estimator=estimator)

    document = result.to_dict()
    document["instance"] = str(args.instance)
    document["sizes"] = {"s": s, "o": o, "source": size_source}
    document["profile"] = {"source": profile_source, **profile.to_dict()}
    document["predicted_error_radius"] = predicted_error_radius(est_config, profile, s)
    document["solver_controls"] = ctrl.to_dict()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"{Path(args.instance).stem}.result.json"
    if target.exists() and not args.force:
        raise ValidationError(f"{target} already exists (use --force to overwrite)")
    save_json(document, target, "estimation result")
    if result.l2_error is not None:
        log_message(f"l2 error against the ground truth: {result.l2_error:.6g}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace, config: Dict[str, Dict[str, Any]]) -> int:
    overrides = dict(config["bench"])
    if args.seed is not None:
        overrides["seed"] = args.seed
    overrides["ctrl"] = solver_controls(config, BENCH_CONTROLS)
    spec = suite_with_overrides(args.suite, **overrides)
    runner = run_suite(spec, resolve_threads(args.threads))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"bench_{spec.name}"
    targets = [out / f"{stem}{suffix}" for suffix in (".csv", "_long.csv", ".json", ".md")]
    if not args.force:
        for target in targets:
            if target.exists():
                raise ValidationError(f"{target} already exists (use --force to overwrite)")
    write_rows_csv(runner.rows, targets[0])
    log_message(f"Successfully saved replicate rows to {targets[0]}")
    write_long_csv(runner.rows, targets[1])
    log_message(f"Successfully saved long-format rows to {targets[1]}")
    save_json(runner.output_data, targets[2], "summary")
    save_markdown(runner.generate_markdown(), targets[3], "markdown summary")

    for name, passed in runner.output_data["checks"].items():
        log_message(f"[{'PASS' if passed else 'FAIL'}] {name}")
    return EXIT_OK if runner.passed else EXIT_SUITE_FAILED


def cmd_verify(args: argparse.Namespace, config: Dict[str, Dict[str, Any]]) -> int:
    seed = 0 if args.seed is None else args.seed
    threshold = args.fault_rounding_threshold
    log_message(f"Running invariant checks (seed {seed})")
    results = run_verify(seed=seed, threshold_scale=threshold)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "seed": seed,
        "rounding_threshold_scale": threshold,
        "passed": all(r.passed for r in results),
        "checks": [r.to_dict() for r in results],
    }
    save_json(report, out / "verify.json", "verify report")
    save_markdown(generate_verify_markdown(results), out / "verify.md", "verify summary")
    return EXIT_OK if report["passed"] else EXIT_SUITE_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Robust sparse linear regression under heavy tails and adversarial outliers"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", default=None, help="INI run configuration")
    common.add_argument("-o", "--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed")
    common.add_argument("--force", action="store_true", help="overwrite existing output files")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write a synthetic instance")

    p_estimate = sub.add_parser("estimate", parents=[common], help="run an estimator on an instance file")
    p_estimate.add_argument("instance", help="instance CSV written by generate")
    p_estimate.add_argument("-e", "--estimator", choices=ESTIMATORS, default="robust", help="estimator to run")

    p_bench = sub.add_parser("bench", parents=[common], help="run a benchmark suite")
    p_bench.add_argument("suite", choices=sorted(SUITES), help="suite name")
    p_bench.add_argument("-t", "--threads", type=int, default=None,
                         help="worker threads for the replicates (default: $ROBREG_THREADS or 1); "
                              "bench is the only command that runs in parallel")

    p_verify = sub.add_parser("verify", parents=[common], help="run the invariant checks (single-threaded)",
                              description="Run the invariant checks. They run on one thread and take no --threads.")
    p_verify.add_argument("--fault-rounding-threshold", type=float, default=0.5, help=argparse.SUPPRESS)
    return parser


COMMANDS = {
    "generate": cmd_generate,
    "estimate": cmd_estimate,
    "bench": cmd_bench,
    "verify": cmd_verify,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {args.seed}")
        config = load_config(args.config)
        return COMMANDS[args.command](args, config)
    except RobustRegressionError as e:
        log_error(str(e))
        return EXIT_INVALID
    except OSError as e:
        log_error(f"I/O failure: {e}")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
