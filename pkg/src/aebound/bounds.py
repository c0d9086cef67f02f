"""Closed-form bound computations for trained autoencoders.

Covers the spectral/Frobenius complexity term and the margin generalization
bound built from it, the conversion from margin loss to squared-error and mean
L2 bounds, the Markov bound on the measure outside the low-deviation set, the
encoded cluster-margin formula, and the dimension-reduction improvement factor
for the semi-supervised sample-size term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .linalg import frobenius_norm, power_iteration, spectral_norm
from .losses import MarginConfig
from .network import NetworkParams

__all__ = [
    "BoundInputs", "BoundReport", "spectral_norm", "frobenius_norm",
    "power_iteration", "complexity_term", "generalization_bound", "GenBound",
    "r_to_se_bound", "mu_bound_worst", "mu_bound_symmetric",
    "markov_geps_bound", "eta_prime_theoretical", "ssl_term",
    "improvement_factor",
]


@dataclass(frozen=True)
class BoundInputs:
    """Everything the generalization bound needs besides the weights themselves."""

    B: float                 # max input L2 norm; at most sqrt(M) for binary data
    m: int                   # training sample size
    delta: float             # failure probability
    margins: MarginConfig
    d: int                   # depth
    h: int                   # max layer width
    M: int                   # input dimension

    def __post_init__(self):
        if self.B <= 0:
            raise ValueError(f"B must be positive, got {self.B}")
        if self.B > math.sqrt(self.M) * (1 + 1e-12):
            raise ValueError(f"B={self.B} exceeds sqrt(M)={math.sqrt(self.M)} for binary data")
        if self.m < 2:
            raise ValueError(f"need m >= 2, got {self.m}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.d < 1 or self.h < 1 or self.M < 1:
            raise ValueError("d, h, M must be positive")


def complexity_term(params: NetworkParams, B: float,
                    norms: Sequence[float] | None = None,
                    tol: float = 1e-9) -> float:
    """B^2 d^2 h ln(dh) * prod ||W_i||_2^2 * sum ||W_i||_F^2 / ||W_i||_2^2.

    Invariant under the spectral rebalancing of `normalize_weights`: the product
    of spectral norms and every Frobenius-to-spectral ratio are unchanged.
    Precomputed spectral `norms` may be passed to control their accuracy.
    """
    d = params.depth
    h = params.max_width
    if d * h <= 1:
        raise ValueError("complexity term needs d*h > 1 so that ln(dh) > 0")
    if norms is None:
        norms = [spectral_norm(w, tol=tol) for w in params.weights]
    if any(s <= 0.0 for s in norms):
        raise ValueError("zero spectral norm: degenerate network")
    prod_sq = 1.0
    ratio_sum = 0.0
    for w, s in zip(params.weights, norms):
        prod_sq *= s * s
        f = frobenius_norm(w)
        ratio_sum += (f * f) / (s * s)
    return float(B * B * d * d * h * math.log(d * h) * prod_sq * ratio_sum)


class GenBound(NamedTuple):
    delta_term: float             # generalization gap with unit leading constant
    margin_bound_g1: float        # empirical gamma2 loss + gap
    delta_term_normalized: float  # gap divided by sqrt(complexity)
    complexity: float


def generalization_bound(params: NetworkParams, inputs: BoundInputs,
                         margin_loss_hat_g2: float,
                         norms: Sequence[float] | None = None,
                         tol: float = 1e-9) -> GenBound:
    """Bound on the expected gamma1 margin loss from the empirical gamma2 loss.

    delta_term = sqrt((complexity + ln(d m / delta)) / ((gamma2 - gamma1)^2 m)),
    with the unobservable leading constant set to 1. The normalized variant
    (divided by sqrt complexity) is what sample-size trend plots use.
    """
    if not 0.0 <= margin_loss_hat_g2 <= 1.0:
        raise ValueError(f"margin loss must lie in [0, 1], got {margin_loss_hat_g2}")
    gap = inputs.margins.gamma2 - inputs.margins.gamma1
    comp = complexity_term(params, inputs.B, norms=norms, tol=tol)
    log_term = math.log(inputs.d * inputs.m / inputs.delta)
    delta_term = math.sqrt((comp + log_term) / (gap * gap * inputs.m))
    return GenBound(
        delta_term=delta_term,
        margin_bound_g1=margin_loss_hat_g2 + delta_term,
        delta_term_normalized=delta_term / math.sqrt(comp),
        complexity=comp,
    )


def r_to_se_bound(r: float, gamma: float, M: int) -> float:
    """Worst-case squared-error bound given a margin loss of r: rM + (1/2-gamma)^2 (1-r) M."""
    _check_r_gamma(r, gamma)
    t = 0.5 - gamma
    return r * M + t * t * (1.0 - r) * M


def mu_bound_worst(r: float, gamma: float, M: int) -> float:
    """Worst-case bound on the mean L2 error: sqrt of the squared-error bound."""
    return math.sqrt(r_to_se_bound(r, gamma, M))


def mu_bound_symmetric(r: float, gamma: float, M: int) -> float:
    """Mean L2 bound assuming per-entry deviations sit at the midpoint of their range.

    Badly reconstructed entries then average ((1/2-gamma)^2 + 1)/2 in squared
    deviation and the rest (1/2-gamma)^2 / 2; never exceeds the worst-case bound.
    """
    _check_r_gamma(r, gamma)
    t2 = (0.5 - gamma) ** 2
    return math.sqrt((t2 + 1.0) / 2.0 * r * M + t2 / 2.0 * (1.0 - r) * M)


def _check_r_gamma(r: float, gamma: float):
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"r must lie in [0, 1], got {r}")
    if not 0.0 < gamma < 0.5:
        raise ValueError(f"gamma must lie in (0, 1/2), got {gamma}")


def markov_geps_bound(mu: float, epsilon: float) -> float:
    """Markov bound on the measure outside the low-deviation set: min(1, mu/epsilon)."""
    if mu < 0:
        raise ValueError(f"mu must be non-negative, got {mu}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return min(1.0, mu / epsilon)


def eta_prime_theoretical(eta: float, mu: float, epsilon: float, C: float) -> float:
    """Guaranteed cluster-margin after encoding: (eta - 2 (mu + epsilon)) / C.

    May be non-positive, in which case the guarantee is vacuous; callers report
    the raw value together with that flag.
    """
    if C <= 0:
        raise ValueError(f"decoder Lipschitz constant must be positive, got {C}")
    return (eta - 2.0 * (mu + epsilon)) / C


def ssl_term(m: int, N: int) -> float:
    """Sample-size term ((ln m)^2 / m)^(1/N) of the semi-supervised excess-loss bound."""
    if m < 3:
        raise ValueError(f"need m >= 3, got {m}")
    if N < 1:
        raise ValueError(f"dimension must be positive, got {N}")
    base = math.log(m) ** 2 / m
    if base >= 1.0:
        raise ValueError(f"(ln m)^2 / m = {base} >= 1: outside the bound's regime")
    return base ** (1.0 / N)


def improvement_factor(m: int, N: int, N_b: int) -> float:
    """How much the sample-size term improves when dimension drops from N to N_b."""
    if N_b > N:
        raise ValueError(f"bottleneck dim {N_b} exceeds input dim {N}")
    return ssl_term(m, N) / ssl_term(m, N_b)


@dataclass
class BoundReport:
    """All bound quantities for one trained model on one training fraction.

    Geometry fields stay None until the margin/Lipschitz pass fills them in.
    """

    spectral_norms: list[float]
    frobenius_norms: list[float]
    complexity: float
    delta_term: float
    delta_term_normalized: float
    margin_loss_hat_g2: float
    margin_bound_g1: float
    R_worst: float
    mu_bound_worst: float
    mu_bound_symmetric: float
    mu_hat: float
    sample_frac: float
    m: int
    test_margin_loss_g1: float
    se_mean: float | None = None
    outside_theorem_assumptions: bool = False  # set for biased networks
    eta: float | None = None
    eta_prime_empirical: float | None = None
    eta_prime_theoretical: float | None = None
    eta_prime_vacuous: bool | None = None
    lipschitz_upper: float | None = None
    lipschitz_empirical: float | None = None
    improvement_factor: float | None = None

    def __post_init__(self):
        if abs(self.margin_bound_g1 - (self.margin_loss_hat_g2 + self.delta_term)) > 1e-9:
            raise ValueError("margin_bound_g1 must equal margin_loss_hat_g2 + delta_term")
        if abs(self.mu_bound_worst - math.sqrt(self.R_worst)) > 1e-9:
            raise ValueError("mu_bound_worst must equal sqrt(R_worst)")
        for name in ("complexity", "delta_term", "margin_loss_hat_g2", "R_worst",
                     "mu_bound_worst", "mu_bound_symmetric", "mu_hat"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")

    def to_dict(self) -> dict:
        keys = [
            "sample_frac", "m", "spectral_norms", "frobenius_norms", "complexity",
            "delta_term", "delta_term_normalized", "margin_loss_hat_g2",
            "margin_bound_g1", "test_margin_loss_g1", "R_worst", "mu_bound_worst",
            "mu_bound_symmetric", "mu_hat", "se_mean", "outside_theorem_assumptions",
            "eta", "eta_prime_empirical", "eta_prime_theoretical",
            "eta_prime_vacuous", "lipschitz_upper", "lipschitz_empirical",
            "improvement_factor",
        ]
        return {k: getattr(self, k) for k in keys}
