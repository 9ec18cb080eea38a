"""
Synthetic instances of the contaminated sparse linear model.

Clean covariates have independent standardized coordinates (unit variance)
mixed by Sigma^(1/2) of a Toeplitz correlation rho^|j-k|. Supported laws:
- gaussian
- student_t(df), df > 8, rescaled to unit variance
- symmetric_pareto(tail), tail > 8: random sign times a classical Pareto(tail)
  variable with scale 1, rescaled to unit variance

Noise laws: gaussian, student_t(df >= 2, not rescaled), laplace; noise_scale
multiplies the standard law.

Adversaries (strong contamination, chosen after seeing the clean draw):
- oblivious(o, magnitude): random outlier indices, covariate shift of norm
  magnitude along a random direction, response shift of +/- magnitude
- leverage(o, magnitude): covariates shifted by magnitude along the clean OLS
  direction u, responses replaced by -X_i^T beta_OLS
- adaptive_response(o): the o samples with the largest clean OLS residual |r_i|
  get response shifts of -3 max|r| sgn(x_i^T u), u the clean OLS direction

Randomness comes from Philox counter-based streams keyed by (seed, block);
samples are drawn in blocks of BLOCK_SIZE so the draw of a block does not
depend on how many blocks exist or in which order they are generated.

Files:
- <name>.csv: header y,x_1,...,x_d,is_outlier; floats written with repr
- <name>.csv.meta.json: generator spec and ground truth
"""

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg, stats
from scipy.special import gammaln

from console import log_message
from model_core import GroundTruth, MomentProfile, ParseError, RegressionInstance, ValidationError

BLOCK_SIZE = 512
BETA_STREAM = 2 ** 32
CONTAMINATION_STREAM = 2 ** 32 + 1

COVARIATE_LAWS = ("gaussian", "student_t", "symmetric_pareto")
NOISE_LAWS = ("gaussian", "student_t", "laplace")
CONTAMINATIONS = ("none", "oblivious", "leverage", "adaptive_response")


@dataclass(frozen=True)
class GeneratorSpec:
    n: int
    d: int
    s: int
    covariate_law: str = "gaussian"
    # df for student_t, tail index for symmetric_pareto
    law_param: Optional[float] = None
    correlation: float = 0.0
    noise_law: str = "gaussian"
    noise_param: Optional[float] = None
    noise_scale: float = 1.0
    beta_scale: float = 1.0
    contamination: str = "none"
    o: int = 0
    magnitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"n must be at least 1, got {self.n}")
        if self.d < 3:
            raise ValidationError(f"d must be at least 3, got {self.d}")
        if not 1 <= self.s <= self.d:
            raise ValidationError(f"s must lie in [1, d], got {self.s}")
        if self.covariate_law not in COVARIATE_LAWS:
            raise ValidationError(f"covariate_law must be one of {COVARIATE_LAWS}, got {self.covariate_law!r}")
        if self.covariate_law != "gaussian":
            if self.law_param is None or not self.law_param > 8:
                raise ValidationError(
                    f"law_param of {self.covariate_law} must exceed 8 (finite 8th moments), got {self.law_param}"
                )
        if not 0.0 <= self.correlation < 1.0:
            raise ValidationError(f"correlation must lie in [0, 1), got {self.correlation}")
        if self.noise_law not in NOISE_LAWS:
            raise ValidationError(f"noise_law must be one of {NOISE_LAWS}, got {self.noise_law!r}")
        if self.noise_law == "student_t" and (self.noise_param is None or self.noise_param < 2):
            raise ValidationError(f"noise_param (df) of student_t noise must be at least 2, got {self.noise_param}")
        if not (self.noise_scale > 0 and math.isfinite(self.noise_scale)):
            raise ValidationError(f"noise_scale must be positive and finite, got {self.noise_scale}")
        if not math.isfinite(self.beta_scale):
            raise ValidationError("beta_scale must be finite")
        if self.contamination not in CONTAMINATIONS:
            raise ValidationError(f"contamination must be one of {CONTAMINATIONS}, got {self.contamination!r}")
        if not 0 <= self.o <= self.n:
            raise ValidationError(f"o must lie in [0, n], got o={self.o} with n={self.n}")
        if self.contamination == "none" and self.o != 0:
            raise ValidationError(f"o must be 0 when contamination is none, got {self.o}")
        if not (self.magnitude >= 0 and math.isfinite(self.magnitude)):
            raise ValidationError(f"magnitude must be finite and nonnegative, got {self.magnitude}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GeneratorSpec":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"unknown generator field(s): {', '.join(unknown)}")
        return cls(**data)


def _stream(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, block], dtype=np.uint64)))


def toeplitz_correlation(d: int, rho: float) -> np.ndarray:
    return linalg.toeplitz(rho ** np.arange(d))


def _sqrt_psd(A: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh(A)
    root = (vectors * np.sqrt(np.maximum(values, 0.0))) @ vectors.T
    return 0.5 * (root + root.T)


def _standard_coordinates(rng: np.random.Generator, spec: GeneratorSpec, rows: int) -> np.ndarray:
    shape = (rows, spec.d)
    if spec.covariate_law == "gaussian":
        return rng.standard_normal(shape)
    if spec.covariate_law == "student_t":
        df = spec.law_param
        return rng.standard_t(df, size=shape) * math.sqrt((df - 2.0) / df)
    tail = spec.law_param
    magnitude = 1.0 + rng.pareto(tail, size=shape)
    sign = np.where(rng.integers(0, 2, size=shape) == 1, 1.0, -1.0)
    return sign * magnitude / math.sqrt(tail / (tail - 2.0))


def _noise(rng: np.random.Generator, spec: GeneratorSpec, rows: int) -> np.ndarray:
    if spec.noise_law == "gaussian":
        base = rng.standard_normal(rows)
    elif spec.noise_law == "student_t":
        base = rng.standard_t(spec.noise_param, size=rows)
    else:
        base = rng.laplace(0.0, 1.0, size=rows)
    return spec.noise_scale * base


def _clean_block(spec: GeneratorSpec, block: int, mix: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    rows = min(BLOCK_SIZE, spec.n - block * BLOCK_SIZE)
    rng = _stream(spec.seed, block)
    z = _standard_coordinates(rng, spec, rows)
    xi = _noise(rng, spec, rows)
    x = z if mix is None else z @ mix
    return x, xi


def draw_beta(spec: GeneratorSpec) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """s-sparse beta* with entries +/- beta_scale on a uniformly random support."""
    rng = _stream(spec.seed, BETA_STREAM)
    support = tuple(sorted(int(j) for j in rng.choice(spec.d, size=spec.s, replace=False)))
    beta = np.zeros(spec.d)
    signs = np.where(rng.integers(0, 2, size=spec.s) == 1, 1.0, -1.0)
    beta[list(support)] = spec.beta_scale * signs
    return beta, support


def draw_clean(spec: GeneratorSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray, Tuple[int, ...]]:
    """Clean covariates x, noise xi, beta* and its support."""
    mix = None if spec.correlation == 0.0 else _sqrt_psd(toeplitz_correlation(spec.d, spec.correlation))
    n_blocks = -(-spec.n // BLOCK_SIZE)
    parts = [_clean_block(spec, b, mix) for b in range(n_blocks)]
    x = np.vstack([p[0] for p in parts])
    xi = np.concatenate([p[1] for p in parts])
    beta, support = draw_beta(spec)
    return x, xi, beta, support


def _unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        out = np.zeros_like(v)
        out[0] = 1.0
        return out
    return v / norm


def generate(spec: GeneratorSpec) -> RegressionInstance:
    """
    Draw one instance y_i = x_i^T beta* + xi_i + corruption_i with X_i = x_i + rho_i.

    Inlier rows are bit-identical to the clean draw; theta_i = corruption_i / sqrt(n)
    is stored in the ground truth.
    """
    x, xi, beta, support = draw_clean(spec)
    n = spec.n
    y_clean = x @ beta + xi
    X = x.copy()
    y = y_clean.copy()
    outliers: List[int] = []

    if spec.contamination != "none" and spec.o > 0:
        rng = _stream(spec.seed, CONTAMINATION_STREAM)
        if spec.contamination == "oblivious":
            outliers = sorted(int(i) for i in rng.choice(n, size=spec.o, replace=False))
            directions = rng.standard_normal((spec.o, spec.d))
            directions /= np.linalg.norm(directions, axis=1, keepdims=True)
            X[outliers] += spec.magnitude * directions
            y[outliers] += spec.magnitude * np.where(rng.integers(0, 2, size=spec.o) == 1, 1.0, -1.0)
        elif spec.contamination == "leverage":
            beta_ols = linalg.lstsq(x, y_clean)[0]
            u = _unit(beta_ols)
            outliers = sorted(int(i) for i in rng.choice(n, size=spec.o, replace=False))
            X[outliers] += spec.magnitude * u
            y[outliers] = -(X[outliers] @ beta_ols)
        else:
            beta_ols = linalg.lstsq(x, y_clean)[0]
            residual = y_clean - x @ beta_ols
            ranked = np.argsort(-np.abs(residual), kind="stable")
            outliers = sorted(int(i) for i in ranked[: spec.o])
            score = x[outliers] @ _unit(beta_ols)
            shift = 3.0 * float(np.max(np.abs(residual)))
            y[outliers] -= shift * np.where(score >= 0.0, 1.0, -1.0)

    outlier_set = set(outliers)
    truth = GroundTruth(
        beta_star=beta,
        support=support,
        outlier_set=outliers,
        inlier_set=[i for i in range(n) if i not in outlier_set],
        theta=(y - y_clean) / math.sqrt(n),
    )
    log_message(
        f"Generated n={n}, d={spec.d}, s={spec.s}, {spec.covariate_law} covariates, "
        f"{spec.contamination} contamination with o={len(outliers)}"
    )
    return RegressionInstance(y=y, X=X, truth=truth)


def _standardized_moments(spec: GeneratorSpec) -> Tuple[float, float]:
    """(E z^4, E z^8) of one standardized coordinate."""
    if spec.covariate_law == "gaussian":
        law, variance = stats.norm(), 1.0
    elif spec.covariate_law == "student_t":
        law = stats.t(spec.law_param)
        variance = spec.law_param / (spec.law_param - 2.0)
    else:
        # even moments do not see the random sign
        law = stats.pareto(spec.law_param)
        variance = float(law.moment(2))
    return float(law.moment(4)) / variance ** 2, float(law.moment(8)) / variance ** 4


def mean_absolute_noise(spec: GeneratorSpec) -> float:
    """E|xi|."""
    if spec.noise_law == "gaussian":
        base = math.sqrt(2.0 / math.pi)
    elif spec.noise_law == "student_t":
        df = spec.noise_param
        base = 2.0 * math.sqrt(df) * math.exp(gammaln((df + 1.0) / 2.0) - gammaln(df / 2.0)) / (
            math.sqrt(math.pi) * (df - 1.0)
        )
    else:
        base = 1.0
    return spec.noise_scale * base


def true_moment_profile(spec: GeneratorSpec) -> MomentProfile:
    """
    Population moment constants of the clean covariates and noise.

    With mixing matrix A = Sigma^(1/2) (rows of unit norm) and independent
    standardized z: E x_j^4 = 3 + (m4 - 3) sum_k A_jk^4, and
    E(v^T x)^4 <= max(m4, 3) (E(v^T x)^2)^2, so K^4 = max(m4, 3).
    sigma_x8 is m8^(1/8) for independent coordinates and for gaussian laws;
    otherwise it uses the Minkowski bound max_j (sum_k |A_jk|) m8^(1/8).
    """
    m4, m8 = _standardized_moments(spec)
    if spec.correlation == 0.0:
        A = np.eye(spec.d)
        eigenvalues = np.ones(spec.d)
    else:
        T = toeplitz_correlation(spec.d, spec.correlation)
        A = _sqrt_psd(T)
        eigenvalues = np.linalg.eigvalsh(T)
    fourth = 3.0 + (m4 - 3.0) * np.sum(A ** 4, axis=1)
    if spec.correlation == 0.0 or spec.covariate_law == "gaussian":
        sigma_x8 = m8 ** 0.125
    else:
        sigma_x8 = float(np.max(np.sum(np.abs(A), axis=1))) * m8 ** 0.125
    sigma_op = math.sqrt(float(eigenvalues[-1]))
    lambda_sigma = min(math.sqrt(max(float(eigenvalues[0]), 0.0)), sigma_op)
    return MomentProfile(
        sigma_x2=1.0,
        sigma_x4=float(np.max(fourth)) ** 0.25,
        sigma_x8=sigma_x8,
        kurtosis_K=max(m4, 3.0) ** 0.25,
        sigma_noise=mean_absolute_noise(spec),
        sigma_op=sigma_op,
        lambda_Sigma=lambda_sigma,
    )


def write_instance(instance: RegressionInstance, path: Path, spec: Optional[GeneratorSpec] = None,
                   force: bool = False) -> Tuple[Path, Path]:
    """
    Write the CSV file and its metadata sidecar.

    Raises:
        FileExistsError: if either file exists and force is False
    """
    path = Path(path)
    meta_path = path.with_name(path.name + ".meta.json")
    if not force:
        for target in (path, meta_path):
            if target.exists():
                raise FileExistsError(f"{target} already exists (use --force to overwrite)")
    path.parent.mkdir(parents=True, exist_ok=True)

    outliers = set() if instance.truth is None else set(instance.truth.outlier_set)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["y"] + [f"x_{j + 1}" for j in range(instance.d)] + ["is_outlier"])
        for i in range(instance.n):
            row = [repr(float(instance.y[i]))] + [repr(float(v)) for v in instance.X[i]]
            writer.writerow(row + ["1" if i in outliers else "0"])

    meta: Dict[str, Any] = {"spec": None if spec is None else spec.to_dict(), "truth": None}
    if instance.truth is not None:
        truth = instance.truth
        meta["truth"] = {
            "beta_star": [float(v) for v in truth.beta_star],
            "support": list(truth.support),
            "outlier_set": list(truth.outlier_set),
            "inlier_set": list(truth.inlier_set),
            "theta": None if truth.theta is None else [float(v) for v in truth.theta],
        }
    with open(meta_path, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, ensure_ascii=False)
    return path, meta_path


def _parse_float(text: str, path: Path, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"column {column}: {text!r} is not a number", str(path), line)
    if not math.isfinite(value):
        raise ParseError(f"column {column}: non-finite value {text!r}", str(path), line)
    return value


def read_instance(path: Path) -> Tuple[RegressionInstance, Dict[str, Any]]:
    """
    Read an instance file and, when present, its metadata sidecar.

    Returns:
        (instance, metadata); instance.truth is filled from the sidecar

    Raises:
        ParseError: with the 1-based line number of the offending row
    """
    path = Path(path)
    if not path.exists():
        raise ParseError("file not found", str(path))
    ys: List[float] = []
    rows: List[List[float]] = []
    flags: List[bool] = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", str(path), 1)
        if len(header) < 5 or header[0] != "y" or header[-1] != "is_outlier":
            raise ParseError("header must be y,x_1,...,x_d,is_outlier", str(path), 1)
        expected = [f"x_{j + 1}" for j in range(len(header) - 2)]
        if header[1:-1] != expected:
            raise ParseError("covariate columns must be named x_1..x_d in order", str(path), 1)
        for record in reader:
            line = reader.line_num
            if not record:
                continue
            if len(record) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(record)}", str(path), line)
            ys.append(_parse_float(record[0], path, line, "y"))
            rows.append([_parse_float(v, path, line, name) for v, name in zip(record[1:-1], header[1:-1])])
            if record[-1] not in ("0", "1"):
                raise ParseError(f"is_outlier must be 0 or 1, got {record[-1]!r}", str(path), line)
            flags.append(record[-1] == "1")
    if not ys:
        raise ParseError("no data rows", str(path), 2)

    meta: Dict[str, Any] = {"spec": None, "truth": None}
    meta_path = path.with_name(path.name + ".meta.json")
    if meta_path.exists():
        try:
            with open(meta_path, "r", encoding="utf-8") as f:
                meta = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e.msg}", str(meta_path), e.lineno)

    truth = None
    if meta.get("truth"):
        t = meta["truth"]
        if sorted(t["outlier_set"]) != [i for i, flag in enumerate(flags) if flag]:
            raise ParseError("is_outlier column disagrees with the metadata outlier_set", str(path))
        truth = GroundTruth(
            beta_star=np.array(t["beta_star"], dtype=float),
            support=t["support"],
            outlier_set=t["outlier_set"],
            inlier_set=t["inlier_set"],
            theta=None if t.get("theta") is None else np.array(t["theta"], dtype=float),
        )
    return RegressionInstance(y=np.array(ys), X=np.array(rows), truth=truth), meta
