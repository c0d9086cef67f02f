"""Empirical cluster-margin and decoder-Lipschitz estimation, plus the
triangle-inequality audit tying input distances to encoded distances.

The cluster-margin of a labeled point set is the minimum L2 distance between
points of distinct clusters. It is computed exactly: blocked pairwise scans up
to 20k points, KD-tree nearest-neighbor queries (also exact) beyond that.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.spatial import cKDTree

from .linalg import spectral_norm
from .network import NetworkParams, decode, encode, forward

PAIRWISE_LIMIT = 20000
_BLOCK = 512


@dataclass
class ClusteredSample:
    """Point set with integer cluster ids and an optional low-deviation mask."""

    points: np.ndarray                  # (n, dim) float
    cluster_ids: np.ndarray             # (n,) int
    in_geps: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.cluster_ids = np.asarray(self.cluster_ids, dtype=np.int64)
        if self.points.ndim != 2:
            raise ValueError(f"points must be (n, dim), got shape {self.points.shape}")
        if self.cluster_ids.shape != (self.points.shape[0],):
            raise ValueError("one cluster id per point required")
        if self.in_geps is not None:
            self.in_geps = np.asarray(self.in_geps, dtype=bool)
            if self.in_geps.shape != (self.points.shape[0],):
                raise ValueError("one mask entry per point required")


@dataclass
class MarginEstimate:
    eta_hat: float
    witness_pair: tuple[int, int]
    n_pairs_checked: int
    excluded_clusters: list[int] = field(default_factory=list)


def empirical_cluster_margin(sample: ClusteredSample) -> MarginEstimate:
    """Exact minimum inter-cluster L2 distance with its witnessing pair."""
    points, ids = sample.points, sample.cluster_ids
    labels = np.unique(ids)
    if labels.size < 2:
        raise ValueError(f"margin needs >= 2 clusters, got {labels.size}")
    counts = {int(c): int(np.sum(ids == c)) for c in labels}
    n_pairs = 0
    total = points.shape[0]
    for c, k in counts.items():
        n_pairs += k * (total - k)
    n_pairs //= 2

    if total <= PAIRWISE_LIMIT:
        best, pair = _margin_blocked(points, ids)
    else:
        best, pair = _margin_kdtree(points, ids, labels)
    return MarginEstimate(float(best), pair, n_pairs)


def _margin_blocked(points: np.ndarray, ids: np.ndarray) -> tuple[float, tuple[int, int]]:
    # Difference-based distances, tiled over both axes: exact, so the result
    # matches a naive all-pairs scan to the last bit.
    n = points.shape[0]
    best = math.inf
    pair = (-1, -1)
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        for start2 in range(start, n, _BLOCK):
            stop2 = min(start2 + _BLOCK, n)
            d = _block_dists(points[start:stop], points[start2:stop2])
            cross = ids[start:stop, None] != ids[None, start2:stop2]
            valid = cross & _upper_pair_mask(start, stop, start2, stop2)
            if not np.any(valid):
                continue
            d = np.where(valid, d, math.inf)
            flat = int(np.argmin(d))
            i_local, j_local = divmod(flat, d.shape[1])
            if d[i_local, j_local] < best:
                best = float(d[i_local, j_local])
                pair = (start + i_local, start2 + j_local)
    return best, (min(pair), max(pair))


def _margin_kdtree(points: np.ndarray, ids: np.ndarray,
                   labels: np.ndarray) -> tuple[float, tuple[int, int]]:
    best = math.inf
    pair = (-1, -1)
    all_idx = np.arange(points.shape[0])
    for c in labels:
        inside = ids == c
        others = all_idx[~inside]
        tree = cKDTree(points[others])
        dist, nearest = tree.query(points[inside], k=1)
        k = int(np.argmin(dist))
        if dist[k] < best:
            best = float(dist[k])
            i = int(all_idx[inside][k])
            j = int(others[nearest[k]])
            pair = (min(i, j), max(i, j))
    return best, pair


def encoded_cluster_margin(params: NetworkParams, sample: ClusteredSample,
                           restrict_geps: bool = False) -> MarginEstimate:
    """Cluster-margin measured at the encoder output instead of the input.

    With `restrict_geps` only points flagged in-geps participate; clusters that
    the restriction empties are dropped with a warning and recorded.
    """
    points, ids = sample.points, sample.cluster_ids
    excluded: list[int] = []
    if restrict_geps:
        if sample.in_geps is None:
            raise ValueError("restrict_geps requires an in_geps mask")
        before = set(int(c) for c in np.unique(ids))
        keep = sample.in_geps
        points, ids = points[keep], ids[keep]
        after = set(int(c) for c in np.unique(ids))
        excluded = sorted(before - after)
        if excluded:
            warnings.warn(f"low-deviation restriction emptied clusters {excluded}",
                          RuntimeWarning, stacklevel=2)
    codes = encode(params, points)
    est = empirical_cluster_margin(ClusteredSample(codes, ids))
    est.excluded_clusters = excluded
    return est


def lipschitz_upper(params: NetworkParams) -> float:
    """Product of decoder spectral norms, times 1/4 per sigmoid activation.

    Biases shift layer outputs without stretching them, so the bound is valid
    for biased networks too.
    """
    weights, acts, _ = params.decoder_layers()
    if not weights:
        raise ValueError("decoder is empty")
    c = 1.0
    for w, act in zip(weights, acts):
        c *= spectral_norm(w)
        if act == "sigmoid":
            c *= 0.25
    return c


def lipschitz_empirical(params: NetworkParams, codes: np.ndarray,
                        max_pairs: int = 100_000, perturb_delta: float = 1e-3,
                        seed: int = 0) -> float:
    """Sampled lower bound on the decoder's Lipschitz constant.

    Takes ratios ||dec(z1) - dec(z2)|| / ||z1 - z2|| over up to `max_pairs`
    pairs of the given codes plus one random small perturbation per code, which
    captures local stretching the code-to-code pairs miss.
    """
    codes = np.asarray(codes, dtype=np.float64)
    if codes.ndim != 2 or codes.shape[0] < 1:
        raise ValueError(f"codes must be (n, dim) with n >= 1, got shape {codes.shape}")
    if codes.shape[1] != params.bottleneck_dim:
        raise ValueError(
            f"codes have dim {codes.shape[1]}, decoder expects {params.bottleneck_dim}")
    n = codes.shape[0]
    rng = np.random.default_rng(seed)

    pairs_i: list[np.ndarray] = []
    pairs_j: list[np.ndarray] = []
    n_all = n * (n - 1) // 2
    if n_all <= max_pairs:
        iu = np.triu_indices(n, k=1)
        pairs_i.append(iu[0])
        pairs_j.append(iu[1])
    else:
        i = rng.integers(0, n, size=max_pairs)
        j = rng.integers(0, n, size=max_pairs)
        keep = i != j
        pairs_i.append(i[keep])
        pairs_j.append(j[keep])

    best = 0.0
    dec_codes = decode(params, codes)
    for bi, bj in zip(pairs_i, pairs_j):
        for start in range(0, bi.shape[0], 100_000):
            ii = bi[start:start + 100_000]
            jj = bj[start:start + 100_000]
            dz = np.linalg.norm(codes[ii] - codes[jj], axis=1)
            ok = dz > 0
            if not np.any(ok):
                continue
            dx = np.linalg.norm(dec_codes[ii[ok]] - dec_codes[jj[ok]], axis=1)
            ratio = np.max(dx / dz[ok])
            best = max(best, float(ratio))

    # local probes: z vs z + delta * random unit direction
    u = rng.normal(size=codes.shape)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    shifted = codes + perturb_delta * u
    dz = np.linalg.norm(shifted - codes, axis=1)
    dx = np.linalg.norm(decode(params, shifted) - dec_codes, axis=1)
    ok = dz > 0
    if np.any(ok):
        best = max(best, float(np.max(dx[ok] / dz[ok])))
    return best


class AuditResult(NamedTuple):
    n_pairs: int
    violations_decoded: int
    violations_encoded: int
    max_slack_decoded: float
    max_slack_encoded: float


def three_eps_audit(params: NetworkParams, points: np.ndarray, mu: float,
                    epsilon: float, lipschitz: float | None = None,
                    tol: float = 1e-9) -> AuditResult:
    """Pairwise audit of the margin-preservation inequalities on low-deviation points.

    For every pair of the given points (callers pass members of the
    low-deviation set at this mu and epsilon) checks
      decoded form:  ||x - y||  <=  ||f(x) - f(y)|| + 2 (mu + epsilon)
      encoded form:  ||enc(x) - enc(y)||  >=  (||x - y|| - 2 (mu + epsilon)) / C
    with C defaulting to the spectral upper bound. Slack is lhs - rhs of the
    rearranged inequality, so positive slack beyond `tol` is a violation; both
    counts must be zero when mu and the mask are computed on the same split.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 2:
        raise ValueError(f"need at least two points, got shape {points.shape}")
    if lipschitz is None:
        lipschitz = lipschitz_upper(params)
    recon = forward(params, points)
    codes = encode(params, points)
    slack = 2.0 * (mu + epsilon)

    n = points.shape[0]
    viol_dec = 0
    viol_enc = 0
    max_dec = -math.inf
    max_enc = -math.inf
    pairs = 0
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        for start2 in range(start, n, _BLOCK):
            stop2 = min(start2 + _BLOCK, n)
            dx = _block_dists(points[start:stop], points[start2:stop2])
            df = _block_dists(recon[start:stop], recon[start2:stop2])
            dz = _block_dists(codes[start:stop], codes[start2:stop2])
            mask = _upper_pair_mask(start, stop, start2, stop2)
            pairs += int(mask.sum())
            dec_slack = dx - (df + slack)
            enc_slack = (dx - slack) / lipschitz - dz
            viol_dec += int(np.sum((dec_slack > tol) & mask))
            viol_enc += int(np.sum((enc_slack > tol) & mask))
            if np.any(mask):
                max_dec = max(max_dec, float(np.max(dec_slack[mask])))
                max_enc = max(max_enc, float(np.max(enc_slack[mask])))
    return AuditResult(pairs, viol_dec, viol_enc, max_dec, max_enc)


def _block_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def _upper_pair_mask(start: int, stop: int, start2: int, stop2: int) -> np.ndarray:
    rows = np.arange(start, stop)[:, None]
    cols = np.arange(start2, stop2)[None, :]
    return rows < cols
