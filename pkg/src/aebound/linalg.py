"""Matrix norms used throughout: power-iteration spectral norm and Frobenius norm."""
from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np


class PowerIterationResult(NamedTuple):
    value: float
    iterations: int
    converged: bool


def power_iteration(mat: np.ndarray, tol: float = 1e-9, max_iter: int = 10000,
                    seed: int = 0) -> PowerIterationResult:
    """Largest singular value of `mat` by power iteration on the Gram matrix.

    Iterates on the smaller of W^T W / W W^T from a seeded uniform start and
    stops when the relative change of the Rayleigh quotient drops below `tol`.
    Returns the best estimate with `converged=False` if `max_iter` is hit.
    """
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.size == 0:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {mat.shape}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")

    # Gram matrix on the smaller side; its top eigenvalue is sigma_max^2.
    gram = mat.T @ mat if mat.shape[1] <= mat.shape[0] else mat @ mat.T
    n = gram.shape[0]

    rng = np.random.default_rng(seed)
    v = rng.uniform(-1.0, 1.0, size=n)
    v /= np.linalg.norm(v)

    rayleigh = 0.0
    for it in range(1, max_iter + 1):
        w = gram @ v
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            # v is in the nullspace; for a nonzero matrix re-randomize, else sigma = 0.
            if not np.any(gram):
                return PowerIterationResult(0.0, it, True)
            v = rng.uniform(-1.0, 1.0, size=n)
            v /= np.linalg.norm(v)
            continue
        new_rayleigh = float(v @ w)
        v = w / norm_w
        if it > 1 and abs(new_rayleigh - rayleigh) <= tol * abs(new_rayleigh):
            return PowerIterationResult(float(np.sqrt(new_rayleigh)), it, True)
        rayleigh = new_rayleigh
    return PowerIterationResult(float(np.sqrt(max(rayleigh, 0.0))), max_iter, False)


def spectral_norm(mat: np.ndarray, tol: float = 1e-9, max_iter: int = 10000,
                  seed: int = 0) -> float:
    """sigma_max(mat); warns and returns the best estimate on non-convergence."""
    result = power_iteration(mat, tol=tol, max_iter=max_iter, seed=seed)
    if not result.converged:
        warnings.warn(
            f"power iteration unconverged after {result.iterations} iterations "
            f"(estimate {result.value:.6g})",
            RuntimeWarning,
            stacklevel=2,
        )
    return result.value


def frobenius_norm(mat: np.ndarray) -> float:
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.size == 0:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {mat.shape}")
    return float(np.sqrt(np.sum(mat * mat)))
