"""Reconstruction-quality measures for binary inputs.

The central quantity is the margin reconstruction loss: the fraction of entries
whose deviation from the binary input exceeds 1/2 - gamma. An entry deviating by
exactly the threshold counts as reconstructed (the indicator is strict). The
definitions extend to inputs on a finer grid {0, 1/s, ..., 1} by replacing the
1/2 with s/2; only the binary case is implemented here.

All functions are pure and safe to call concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .network import NetworkParams, forward


@dataclass(frozen=True)
class MarginConfig:
    gamma1: float = 0.45
    gamma2: float = 0.49

    def __post_init__(self):
        if not 0.0 < self.gamma1 < self.gamma2 < 0.5:
            raise ValueError(
                f"margins must satisfy 0 < gamma1 < gamma2 < 1/2, got "
                f"({self.gamma1}, {self.gamma2})")


@dataclass(frozen=True)
class ReconMetrics:
    margin_loss_hat: float
    se_loss_mean: float
    mu_hat: float
    per_sample_l2: np.ndarray


def _check_gamma(gamma: float):
    if not 0.0 < gamma < 0.5:
        raise ValueError(f"gamma must lie in (0, 1/2), got {gamma}")


def _as_samples(data) -> np.ndarray:
    samples = getattr(data, "samples", data)
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[None, :]
    if samples.shape[0] == 0:
        raise ValueError("dataset must be non-empty")
    return samples


def margin_loss(x: np.ndarray, xhat: np.ndarray, gamma: float) -> float:
    """Fraction of entries with |x - xhat| strictly above 1/2 - gamma."""
    _check_gamma(gamma)
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape:
        raise ValueError(f"length mismatch: x has shape {x.shape}, xhat {xhat.shape}")
    if not np.all((x == 0.0) | (x == 1.0)):
        raise ValueError("x must be binary")
    return float(np.mean(np.abs(x - xhat) > 0.5 - gamma, axis=-1).mean())


def empirical_margin_loss(params: NetworkParams, data, gamma: float) -> float:
    """Mean margin loss of the reconstructions over a dataset."""
    samples = _as_samples(data)
    return margin_loss(samples, forward(params, samples), gamma)


def se_loss(x: np.ndarray, xhat: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape:
        raise ValueError(f"length mismatch: x has shape {x.shape}, xhat {xhat.shape}")
    return float(np.sum((x - xhat) ** 2))


def l2_error(x: np.ndarray, xhat: np.ndarray) -> float:
    return float(np.sqrt(se_loss(x, xhat)))


def per_sample_l2(params: NetworkParams, data) -> np.ndarray:
    samples = _as_samples(data)
    recon = forward(params, samples)
    return np.sqrt(np.sum((recon - samples) ** 2, axis=1))


def mu_hat(params: NetworkParams, data) -> float:
    """Empirical mean L2 reconstruction error."""
    return float(np.mean(per_sample_l2(params, data)))


def recon_metrics(params: NetworkParams, data, gamma: float) -> ReconMetrics:
    samples = _as_samples(data)
    recon = forward(params, samples)
    l2 = np.sqrt(np.sum((recon - samples) ** 2, axis=1))
    return ReconMetrics(
        margin_loss_hat=margin_loss(samples, recon, gamma),
        se_loss_mean=float(np.mean(np.sum((recon - samples) ** 2, axis=1))),
        mu_hat=float(np.mean(l2)),
        per_sample_l2=l2,
    )


class GEpsResult(NamedTuple):
    mask: np.ndarray
    fraction: float


def g_epsilon(params: NetworkParams, data, epsilon: float, mu_ref: float) -> GEpsResult:
    """Membership mask of the low-deviation set: l2_error - mu_ref < epsilon.

    `mu_ref` is whatever reference the caller trusts, usually the empirical mean
    L2 error on the same split, sometimes a theoretical bound on it.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if mu_ref < 0:
        raise ValueError(f"mu_ref must be non-negative, got {mu_ref}")
    errors = per_sample_l2(params, data)
    mask = errors - mu_ref < epsilon
    return GEpsResult(mask, float(np.mean(mask)))
