"""
Tuning parameters of the estimator.

Two calibrations are available:
- "theorem": every parameter at the lower bound of the sufficient conditions
  of the main error theorem, tau_x from the closed-form choice
  1/(r_d^2 + r_delta^2)^(1/4), constants at their stated minima
  (c_s = 6, C_s = 300, c_suc = 1).
- "practical": same tau_x, epsilon, lambda_* and tau_suc, with r = 1, Huber
  scale lambda_o sqrt(n) = 4 sigma and l1 penalty 2 sigma sigma_x2 (r_d + r_delta).
  sigma is the mean absolute noise, so clean gaussian residuals up to about
  3.2 standard deviations stay in the quadratic branch. The penalty does not
  depend on the Huber scale. The weight program's minimiser and its success
  test do not depend on r, because both the saddle value and tau_suc' scale
  with r^2.

Each side condition of the theorem is evaluated and reported as a flag, and
every parameter carries a provenance string saying how it was obtained.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from model_core import (
    MomentProfile,
    Rates,
    SingularDesignError,
    ValidationError,
    compute_rates,
)

CALIBRATIONS = ("theorem", "practical")
INFORMATIONAL_FLAGS = ("tau_x_uses_beta_l1", "profile_is_population")
OVERRIDABLE = ("tau_x", "epsilon", "lambda_star", "lambda_o", "lambda_s", "r", "tau_suc")

C_S_MIN = 6.0
CAPITAL_C_S_MIN = 300.0
C_SUC_MIN = 1.0
PRACTICAL_HUBER_SCALE = 4.0
PRACTICAL_LASSO_SCALE = 2.0


@dataclass(frozen=True)
class EstimatorConfig:
    tau_x: float
    lambda_star: float
    lambda_star_prime: float
    tau_suc: float
    tau_suc_prime: float
    epsilon: float
    lambda_o: float
    lambda_s: float
    r: float
    n: int
    delta: float
    c_s: float = C_S_MIN
    C_s: float = CAPITAL_C_S_MIN
    c_suc: float = C_SUC_MIN
    calibration: str = "theorem"
    rates: Optional[Rates] = None
    flags: Dict[str, bool] = field(default_factory=dict)
    provenance: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("tau_x", "lambda_o", "r", "epsilon"):
            value = getattr(self, name)
            if not value > 0:
                raise ValidationError(f"{name} must be strictly positive, got {value}")
        for name in ("lambda_star", "lambda_star_prime", "tau_suc", "tau_suc_prime", "lambda_s"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValidationError(f"{name} must be finite and nonnegative, got {value}")
        if not self.epsilon < 1.0:
            raise ValidationError(f"epsilon must be below 1, got {self.epsilon}")
        if self.n < 1:
            raise ValidationError(f"n must be at least 1, got {self.n}")
        if self.c_s < C_S_MIN or self.C_s < CAPITAL_C_S_MIN or self.c_suc < C_SUC_MIN * (1.0 - 1e-12):
            raise ValidationError(
                f"constants must satisfy c_s >= {C_S_MIN:g}, C_s >= {CAPITAL_C_S_MIN:g} and c_suc >= {C_SUC_MIN:g}"
            )
        if self.calibration not in CALIBRATIONS:
            raise ValidationError(f"unknown calibration {self.calibration!r}; choose from {CALIBRATIONS}")
        if not math.isclose(self.tau_suc, self.c_suc * self.tau_suc_prime, rel_tol=1e-12, abs_tol=1e-300):
            raise ValidationError("tau_suc must equal c_suc * tau_suc_prime")

    @property
    def lambda_o_sqrt_n(self) -> float:
        return self.lambda_o * math.sqrt(self.n)

    @property
    def theorem_conditions_met(self) -> bool:
        return all(value for name, value in self.flags.items() if name not in INFORMATIONAL_FLAGS)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "calibration": self.calibration,
            "tau_x": self.tau_x,
            "lambda_star": self.lambda_star,
            "lambda_star_prime": self.lambda_star_prime,
            "tau_suc": self.tau_suc,
            "tau_suc_prime": self.tau_suc_prime,
            "epsilon": self.epsilon,
            "lambda_o": self.lambda_o,
            "lambda_o_sqrt_n": self.lambda_o_sqrt_n,
            "lambda_s": self.lambda_s,
            "r": self.r,
            "n": self.n,
            "delta": self.delta,
            "constants": {"c_s": self.c_s, "C_s": self.C_s, "c_suc": self.c_suc},
            "rates": None if self.rates is None else self.rates.to_dict(),
            "flags": dict(self.flags),
            "provenance": dict(self.provenance),
        }


def closed_form_tau_x(n: int, d: int, delta: float) -> float:
    """tau_x = 1/(r_d^2 + r_delta^2)^(1/4)."""
    if n < 1 or d < 3 or not 0.0 < delta < 1.0:
        raise ValidationError("need n >= 1, d >= 3 and delta in (0, 1)")
    return (math.log(d) / n + math.log(1.0 / delta) / n) ** -0.25


def lambda_star_prime(profile: MomentProfile, rates: Rates, tau_x: float, epsilon: float) -> float:
    """(1/(1-eps)) {sqrt(2) s4^2 (r_d + r_delta) + tau_x^2 (r_d^2 + r_delta^2) + 2 s4^4 / tau_x^2}."""
    if not tau_x > 0:
        raise ValidationError(f"tau_x must be positive, got {tau_x}")
    if not epsilon < 1.0:
        raise ValidationError(f"epsilon must be below 1, got {epsilon}")
    s4 = profile.sigma_x4
    bracket = (
        math.sqrt(2.0) * s4 ** 2 * (rates.r_d + rates.r_delta)
        + tau_x ** 2 * (rates.r_d ** 2 + rates.r_delta ** 2)
        + 2.0 * s4 ** 4 / tau_x ** 2
    )
    return bracket / (1.0 - epsilon)


def lambda_o_sqrt_n_lower_bound(profile: MomentProfile) -> float:
    """max{16 K ||S||/l^2, 300 K^4 ||S||^4 (sigma+1)/l^4, 4 K^2 ||S||^2} with ||S|| = ||Sigma^(1/2)||_op, l = lambda_Sigma."""
    _require_nonsingular(profile)
    K, op, lam = profile.kurtosis_K, profile.sigma_op, profile.lambda_Sigma
    return max(
        16.0 * K * op / lam ** 2,
        300.0 * K ** 4 * op ** 4 * (profile.sigma_noise + 1.0) / lam ** 4,
        4.0 * K ** 2 * op ** 2,
    )


def _bias_bracket(profile: MomentProfile, rates: Rates, tau_x: float,
                  lambda_star: float, lambda_star_p: float, epsilon: float) -> float:
    return (
        rates.r_ddelta
        + (profile.sigma_x2 * profile.sigma_x4 ** 2 + profile.sigma_x8 ** 8) / tau_x ** 2
        + (math.sqrt(lambda_star) + math.sqrt(lambda_star_p)) * rates.r_o
        + math.sqrt(lambda_star_p * epsilon)
    )


def lambda_s_lower_bound(
    lambda_o_sqrt_n: float,
    profile: MomentProfile,
    rates: Rates,
    tau_x: float,
    lambda_star: float,
    lambda_star_p: float,
    epsilon: float,
    s: int,
    c_s: float = C_S_MIN,
    c_suc: float = C_SUC_MIN,
) -> float:
    """Lower bound of the l1 penalty condition; nondecreasing in r_o and epsilon."""
    bracket = (
        _bias_bracket(profile, rates, tau_x, lambda_star, lambda_star_p, epsilon)
        + profile.sigma_op * (math.sqrt(c_suc) * rates.r_o + math.sqrt(epsilon)) / math.sqrt(s)
        + 1.0 / tau_x ** 2
    )
    return c_s * lambda_o_sqrt_n * bracket


def radius_lower_bound(
    lambda_o_sqrt_n: float,
    lambda_s: float,
    profile: MomentProfile,
    rates: Rates,
    tau_x: float,
    lambda_star: float,
    lambda_star_p: float,
    epsilon: float,
    s: int,
    C_s: float = CAPITAL_C_S_MIN,
    c_suc: float = C_SUC_MIN,
) -> float:
    """Smallest admissible error radius r."""
    _require_nonsingular(profile)
    lam2 = profile.lambda_Sigma ** 2
    root_s = math.sqrt(s)
    bracket = (
        root_s * _bias_bracket(profile, rates, tau_x, lambda_star, lambda_star_p, epsilon)
        + profile.sigma_op * (math.sqrt(c_suc) * rates.r_o + math.sqrt(epsilon))
        + root_s / tau_x ** 2
    )
    return C_s * root_s * lambda_s / lam2 + C_s * lambda_o_sqrt_n / lam2 * bracket


def tau_suc_prime(profile: MomentProfile, r: float, epsilon: float) -> float:
    """||Sigma||_op r^2 / (1 - epsilon)."""
    return profile.sigma_op_squared * r ** 2 / (1.0 - epsilon)


def predicted_error_radius(config: EstimatorConfig, profile: MomentProfile, s: int,
                           constant: float = 1.0) -> float:
    """
    Closed-form error bound of order sqrt(s log(d/delta)/n) + sqrt(o/n).

    C (lambda_o sqrt(n) / lambda_Sigma^2) [{(s2 s4^2 + s8^8 + 1)(r_d + r_delta)
    + s4^4 (r_d^2 + r_delta^2)} sqrt(s) + ||Sigma^(1/2)||_op r_o], with C = constant.
    """
    _require_nonsingular(profile)
    rates = config.rates
    if rates is None:
        raise ValidationError("config carries no rates")
    p = profile
    inner = (
        (p.sigma_x2 * p.sigma_x4 ** 2 + p.sigma_x8 ** 8 + 1.0) * (rates.r_d + rates.r_delta)
        + p.sigma_x4 ** 4 * (rates.r_d ** 2 + rates.r_delta ** 2)
    ) * math.sqrt(s) + p.sigma_op * rates.r_o
    return constant * config.lambda_o_sqrt_n / p.lambda_Sigma ** 2 * inner


def _require_nonsingular(profile: MomentProfile) -> None:
    if profile.singular:
        raise SingularDesignError(
            "lambda_Sigma = 0: the design is singular and the tuning conditions are undefined"
        )


def _side_conditions(
    profile: MomentProfile,
    rates: Rates,
    n: int,
    d: int,
    s: int,
    o: int,
    delta: float,
    tau_x: float,
    epsilon: float,
    lambda_o_sqrt_n: float,
    r: float,
    lambda_star: float,
    lambda_star_p: float,
    c_suc: float,
    beta_star_l1: Optional[float],
) -> Dict[str, bool]:
    p = profile
    s8_4 = p.sigma_x8 ** 4
    tau_terms = [108.0 * p.sigma_x4 ** 4 * s / p.lambda_Sigma ** 2, 9.0 * s8_4 * s / p.kurtosis_K ** 2]
    sample_terms = list(tau_terms) + [1.0]
    if beta_star_l1 is not None:
        b = beta_star_l1
        first = b ** 2 * p.sigma_x8 ** 8 * p.sigma_op ** 2 / (s * lambda_o_sqrt_n ** 2)
        tau_terms += [first, math.sqrt(b / lambda_o_sqrt_n), (b * s8_4) ** (2.0 / 3.0)]
        sample_terms += [first, b / lambda_o_sqrt_n, b * s8_4]
    premise_lhs = (math.sqrt(2.0) * p.sigma_x4 ** 2 + 1.0 + 2.0 * p.sigma_x4 ** 4) * (
        rates.r_d + rates.r_delta
    ) * math.sqrt(s)
    return {
        "tau_x_large_enough": tau_x ** 2 >= max(tau_terms),
        "tau_x_uses_beta_l1": beta_star_l1 is not None,
        "epsilon_range": max(o / n, 1.0 / n) <= epsilon < 0.5,
        "lambda_star_at_least_prime": lambda_star >= lambda_star_p,
        "c_suc_at_least_one": c_suc >= C_SUC_MIN,
        "r_at_most_one": r <= 1.0,
        "sample_size": max(sample_terms) * math.sqrt(math.log(d / delta)) <= math.sqrt(n),
        "radius_premise": premise_lhs < (1.0 - epsilon) * p.sigma_op,
        "lambda_sigma_at_most_one": p.lambda_sigma_at_most_one,
        "profile_is_population": not p.estimated,
    }


def default_config(
    profile: MomentProfile,
    n: int,
    d: int,
    s: int,
    o: int,
    delta: float,
    beta_star_l1: Optional[float] = None,
    calibration: str = "theorem",
    c_s: float = C_S_MIN,
    C_s: float = CAPITAL_C_S_MIN,
    c_suc: float = C_SUC_MIN,
    overrides: Optional[Dict[str, float]] = None,
) -> EstimatorConfig:
    """
    Derive every tuning parameter from the moment profile and the problem sizes.

    Parameters are derived in the order tau_x, epsilon, lambda_*', lambda_*,
    lambda_o, lambda_s, r, tau_suc', tau_suc; a value in overrides replaces the
    derived one and later parameters are computed from it.

    Args:
        profile: population (or estimated) moment constants
        n, d, s, o: sample count, dimension, sparsity, outlier count
        delta: failure probability in (0, 1)
        beta_star_l1: ||beta*||_1 when known; the tau_x side conditions that
            need it are skipped otherwise
        calibration: "theorem" or "practical"
        c_s, C_s, c_suc: numerical constants (at least 6, 300 and 1)
        overrides: user values for any of OVERRIDABLE

    Returns:
        EstimatorConfig with flags and provenance

    Raises:
        SingularDesignError: if lambda_Sigma = 0
        ValidationError: on invalid sizes or an unknown override key
    """
    if calibration not in CALIBRATIONS:
        raise ValidationError(f"unknown calibration {calibration!r}; choose from {CALIBRATIONS}")
    if c_suc < C_SUC_MIN:
        raise ValidationError(f"c_suc must be at least {C_SUC_MIN:g}, got {c_suc:g}")
    if n < 1 or s < 1 or d < 3:
        raise ValidationError(f"need n >= 1, s >= 1 and d >= 3, got n={n}, s={s}, d={d}")
    if s > d:
        raise ValidationError(f"s = {s} exceeds d = {d}")
    if not 0 <= o <= n:
        raise ValidationError(f"o must lie in [0, n], got {o}")
    _require_nonsingular(profile)
    overrides = dict(overrides or {})
    unknown = sorted(set(overrides) - set(OVERRIDABLE))
    if unknown:
        raise ValidationError(f"unknown tuning override(s): {', '.join(unknown)}")
    provenance: Dict[str, str] = {}

    def _pick(name: str, computed: float, source: str) -> float:
        if name in overrides:
            provenance[name] = "user"
            return float(overrides[name])
        provenance[name] = source
        return computed

    def _pick_scale(computed_root_n: float, source: str) -> float:
        # overrides give lambda_o itself, the derivation works with lambda_o sqrt(n)
        if "lambda_o" in overrides:
            provenance["lambda_o"] = "user"
            return float(overrides["lambda_o"]) * math.sqrt(n)
        provenance["lambda_o"] = source
        return computed_root_n

    tau_x = _pick("tau_x", closed_form_tau_x(n, d, delta), "closed-form 1/(r_d^2+r_delta^2)^(1/4)")
    rates = compute_rates(n, d, o, delta, tau_x, profile.sigma_x2)
    epsilon = _pick("epsilon", max(o / n, 1.0 / n), "max(o/n, 1/n)")
    lam_p = lambda_star_prime(profile, rates, tau_x, epsilon)
    provenance["lambda_star_prime"] = "formula"
    lambda_star = _pick("lambda_star", lam_p, "lambda_star_prime")

    if calibration == "theorem":
        lo_root_n = _pick_scale(lambda_o_sqrt_n_lower_bound(profile), "lower bound of the Huber-scale condition")
        lambda_s = _pick(
            "lambda_s",
            lambda_s_lower_bound(lo_root_n, profile, rates, tau_x, lambda_star, lam_p, epsilon, s, c_s, c_suc),
            f"lower bound of the penalty condition, c_s={c_s:g}",
        )
        r = _pick(
            "r",
            radius_lower_bound(lo_root_n, lambda_s, profile, rates, tau_x, lambda_star, lam_p, epsilon, s, C_s, c_suc),
            f"lower bound of the radius condition, C_s={C_s:g}",
        )
    else:
        lo_root_n = _pick_scale(PRACTICAL_HUBER_SCALE * profile.sigma_noise, f"practical {PRACTICAL_HUBER_SCALE:g} * sigma")
        lambda_s = _pick(
            "lambda_s",
            PRACTICAL_LASSO_SCALE * profile.sigma_noise * profile.sigma_x2 * (rates.r_d + rates.r_delta),
            f"practical {PRACTICAL_LASSO_SCALE:g} * sigma * sigma_x2 * (r_d + r_delta)",
        )
        r = _pick("r", 1.0, "practical r = 1")

    ts_prime = tau_suc_prime(profile, r, epsilon)
    provenance["tau_suc_prime"] = "formula"
    tau_suc = _pick("tau_suc", c_suc * ts_prime, f"c_suc * tau_suc_prime, c_suc={c_suc:g}")
    effective_c_suc = c_suc if "tau_suc" not in overrides else (tau_suc / ts_prime if ts_prime > 0 else c_suc)
    if effective_c_suc < C_SUC_MIN * (1.0 - 1e-12):
        raise ValidationError(
            f"tau_suc = {tau_suc:g} is below tau_suc_prime = {ts_prime:g}; c_suc must be at least {C_SUC_MIN:g}"
        )

    flags = _side_conditions(
        profile, rates, n, d, s, o, delta, tau_x, epsilon, lo_root_n, r,
        lambda_star, lam_p, effective_c_suc, beta_star_l1,
    )
    return EstimatorConfig(
        tau_x=tau_x,
        lambda_star=lambda_star,
        lambda_star_prime=lam_p,
        tau_suc=tau_suc,
        tau_suc_prime=ts_prime,
        epsilon=epsilon,
        lambda_o=lo_root_n / math.sqrt(n),
        lambda_s=lambda_s,
        r=r,
        n=n,
        delta=delta,
        c_s=c_s,
        C_s=C_s,
        c_suc=effective_c_suc,
        calibration=calibration,
        rates=rates,
        flags=flags,
        provenance=provenance,
    )
