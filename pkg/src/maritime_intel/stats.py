"""Proportion statistics and deployment-cost projections.

Implements the two-proportion pooled z-test and Wilson score intervals used
to compare evaluation accuracies, plus a parameterized annual-cost model for
API-priced versus self-hosted inference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist


def normal_cdf(z: float) -> float:
    """Standard normal CDF via the complementary error function.

    Absolute error is far below 1e-10 across the double range.
    """
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def normal_ppf(q: float) -> float:
    """Inverse standard normal CDF (quantile function)."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile must lie in (0, 1), got {q}")
    return NormalDist().inv_cdf(q)


@dataclass(frozen=True)
class ProportionTest:
    """Result of a two-sided, pooled two-proportion z-test."""

    x1: int
    n1: int
    x2: int
    n2: int
    p1: float
    p2: float
    p_pool: float
    se: float
    z: float
    p_value: float

    def to_dict(self) -> dict:
        return {
            "x1": self.x1, "n1": self.n1, "x2": self.x2, "n2": self.n2,
            "p1": self.p1, "p2": self.p2, "p_pool": self.p_pool,
            "se": self.se, "z": self.z, "p_value": self.p_value,
        }


@dataclass(frozen=True)
class ConfidenceInterval:
    """A binomial-proportion confidence interval, clamped to [0, 1]."""

    point: float
    low: float
    high: float
    confidence: float
    n: int

    def to_dict(self) -> dict:
        return {
            "point": self.point, "low": self.low, "high": self.high,
            "confidence": self.confidence, "n": self.n,
        }


def _check_counts(x: int, n: int, label: str) -> None:
    if n < 1:
        raise ValueError(f"{label}: sample size must be >= 1, got {n}")
    if not 0 <= x <= n:
        raise ValueError(f"{label}: successes must satisfy 0 <= x <= n, got x={x}, n={n}")


def pooled_proportion(x1: int, n1: int, x2: int, n2: int) -> float:
    """Pooled success proportion (x1 + x2) / (n1 + n2)."""
    _check_counts(x1, n1, "sample 1")
    _check_counts(x2, n2, "sample 2")
    return (x1 + x2) / (n1 + n2)


def two_proportion_z(x1: int, n1: int, x2: int, n2: int) -> ProportionTest:
    """Two-sided z-test for the difference between two proportions.

    Uses the pooled standard error and keeps full floating-point precision
    in every intermediate; the p-value comes from the unrounded z.
    Degenerate pooled proportions (0 or 1) have zero standard error and are
    rejected.
    """
    p_pool = pooled_proportion(x1, n1, x2, n2)
    if p_pool in (0.0, 1.0):
        raise ValueError(f"degenerate pooled proportion {p_pool}: z-test undefined")
    p1 = x1 / n1
    p2 = x2 / n2
    se = math.sqrt(p_pool * (1.0 - p_pool) * (1.0 / n1 + 1.0 / n2))
    z = (p1 - p2) / se
    p_value = 2.0 * (1.0 - normal_cdf(abs(z)))
    return ProportionTest(x1=x1, n1=n1, x2=x2, n2=n2, p1=p1, p2=p2,
                          p_pool=p_pool, se=se, z=z, p_value=p_value)


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> ConfidenceInterval:
    """Wilson score confidence interval for a binomial proportion.

    Args:
        successes: number of successes observed.
        n: number of trials (>= 1).
        confidence: two-sided confidence level, e.g. 0.95.

    Returns:
        ConfidenceInterval with bounds clamped to [0, 1]. The critical value
        is computed from the normal quantile, not hardcoded, so any
        confidence level works.
    """
    _check_counts(successes, n, "wilson")
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    z = normal_ppf(1.0 - (1.0 - confidence) / 2.0)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2.0 * n)) / denom
    halfwidth = (z / denom) * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n))
    low = max(0.0, center - halfwidth)
    high = min(1.0, center + halfwidth)
    # at the extremes the interval touches the boundary exactly; drop fp dust
    if successes == 0:
        low = 0.0
    if successes == n:
        high = 1.0
    return ConfidenceInterval(point=p, low=low, high=high, confidence=confidence, n=n)


@dataclass(frozen=True)
class CostScenario:
    """Annual inference-cost inputs for one deployment option.

    API-style deployments set the per-token prices and leave fixed_annual at
    zero; self-hosted deployments do the reverse. Mixed scenarios simply sum.
    """

    name: str = "scenario"
    queries_per_day: float = 0.0
    tokens_in_per_query: float = 0.0
    tokens_out_per_query: float = 0.0
    price_in_per_mtok: float = 0.0
    price_out_per_mtok: float = 0.0
    fixed_annual: float = 0.0
    days_per_year: int = 365

    def __post_init__(self) -> None:
        for field_name in ("queries_per_day", "tokens_in_per_query", "tokens_out_per_query",
                           "price_in_per_mtok", "price_out_per_mtok", "fixed_annual",
                           "days_per_year"):
            if getattr(self, field_name) < 0:
                raise ValueError(f"{field_name} must be non-negative")


def cost_projection(scenario: CostScenario) -> float:
    """Projected annual cost in currency units for one scenario."""
    per_query = (scenario.tokens_in_per_query * scenario.price_in_per_mtok
                 + scenario.tokens_out_per_query * scenario.price_out_per_mtok) / 1e6
    api_annual = scenario.days_per_year * scenario.queries_per_day * per_query
    return api_annual + scenario.fixed_annual


def cost_ratio(a: float, b: float) -> float:
    """Ratio of annual cost a over annual cost b (b must be positive)."""
    if b <= 0:
        raise ValueError("denominator cost must be > 0")
    return a / b


def scenario_from_dict(name: str, spec: dict) -> CostScenario:
    """Build a CostScenario from a plain config mapping."""
    return CostScenario(
        name=name,
        queries_per_day=float(spec.get("queries_per_day", 0.0)),
        tokens_in_per_query=float(spec.get("tokens_in_per_query", 0.0)),
        tokens_out_per_query=float(spec.get("tokens_out_per_query", 0.0)),
        price_in_per_mtok=float(spec.get("price_in_per_mtok", 0.0)),
        price_out_per_mtok=float(spec.get("price_out_per_mtok", 0.0)),
        fixed_annual=float(spec.get("fixed_annual", 0.0)),
        days_per_year=int(spec.get("days_per_year", 365)),
    )
