"""Cluster-then-label semi-supervised learning on encoder outputs.

The learner recovers decision sets by single-linkage clustering of the encoded
unlabeled-plus-labeled pool, transfers the few labels to whole clusters, and is
compared against a plain k-NN baseline that sees only the labeled encodings.
Both operate in the same encoded space so the comparison isolates the benefit
of the unlabeled structure itself.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .data import Dataset, SplitSpec, Splits, split
from .geometry import ClusteredSample, empirical_cluster_margin
from .network import NetworkParams, encode

_BLOCK = 512


@dataclass(frozen=True)
class SSLConfig:
    cutoff: Optional[float] = None   # None: half the measured encoded cluster-margin
    k_baseline: int = 1
    seeds: tuple[int, ...] = tuple(range(20))

    def __post_init__(self):
        if self.cutoff is not None and self.cutoff <= 0:
            raise ValueError(f"cutoff must be positive, got {self.cutoff}")
        if self.k_baseline < 1:
            raise ValueError(f"k_baseline must be >= 1, got {self.k_baseline}")
        if not self.seeds:
            raise ValueError("at least one seed required")


@dataclass
class SSLResult:
    seed: int
    cutoff: float
    ssl_error: float
    supervised_error: float
    n_clusters_found: int
    n_unmatched_clusters: int
    m: int
    n: int
    degenerate: bool = False

    def __post_init__(self):
        if not (0.0 <= self.ssl_error <= 1.0 and 0.0 <= self.supervised_error <= 1.0):
            raise ValueError("error rates must lie in [0, 1]")
        if self.n_clusters_found < 1:
            raise ValueError("clustering must produce at least one cluster")


@dataclass
class SSLCompareResult:
    runs: list[SSLResult]

    @property
    def mean_ssl_error(self) -> float:
        return float(np.mean([r.ssl_error for r in self.runs]))

    @property
    def mean_supervised_error(self) -> float:
        return float(np.mean([r.supervised_error for r in self.runs]))

    @property
    def std_ssl_error(self) -> float:
        return float(np.std([r.ssl_error for r in self.runs]))

    @property
    def std_supervised_error(self) -> float:
        return float(np.std([r.supervised_error for r in self.runs]))


def single_linkage_clusters(points: np.ndarray, cutoff: float) -> np.ndarray:
    """Connected components of the graph linking pairs at distance < cutoff.

    Component ids are canonical: the component containing the lowest point index
    gets id 0, the next unseen one id 1, and so on, which makes the labeling
    equivariant under permutations of the input order.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError(f"points must be a non-empty (n, dim) array, got {points.shape}")
    if cutoff <= 0:
        raise ValueError(f"cutoff must be positive, got {cutoff}")
    n = points.shape[0]
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        diff = points[start:stop, None, :] - points[None, :, :]
        d = np.sqrt(np.sum(diff * diff, axis=2))
        i_local, j = np.nonzero(d < cutoff)
        rows.append(i_local + start)
        cols.append(j)
    adj = coo_matrix(
        (np.ones(sum(r.size for r in rows), dtype=np.int8),
         (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n))
    _, raw = connected_components(adj, directed=False)
    # relabel so ids appear in order of each component's lowest point index
    remap = np.full(int(raw.max()) + 1, -1, dtype=np.int64)
    next_id = 0
    ids = np.empty(n, dtype=np.int64)
    for i in range(n):
        if remap[raw[i]] == -1:
            remap[raw[i]] = next_id
            next_id += 1
        ids[i] = remap[raw[i]]
    return ids


@dataclass
class ClusterClassifier:
    """Labels every cluster, then classifies new points via their nearest member.

    Clusters holding at least one labeled point take the majority label (ties to
    the smallest label). A cluster with no labeled member inherits the label of
    the labeled point nearest to its medoid.
    """

    points: np.ndarray
    cluster_ids: np.ndarray
    cluster_labels: np.ndarray  # label per cluster id
    n_unmatched: int

    def predict(self, queries: np.ndarray) -> np.ndarray:
        queries = np.asarray(queries, dtype=np.float64)
        nearest = _nearest_index(queries, self.points)
        return self.cluster_labels[self.cluster_ids[nearest]]


def label_clusters(points: np.ndarray, cluster_ids: np.ndarray,
                   labeled_idx: np.ndarray, labeled_labels: np.ndarray) -> ClusterClassifier:
    points = np.asarray(points, dtype=np.float64)
    cluster_ids = np.asarray(cluster_ids, dtype=np.int64)
    labeled_idx = np.asarray(labeled_idx, dtype=np.int64)
    labeled_labels = np.asarray(labeled_labels, dtype=np.int64)
    if labeled_idx.size == 0:
        raise ValueError("labeled subset must be non-empty")
    n_clusters = int(cluster_ids.max()) + 1
    cluster_labels = np.full(n_clusters, -1, dtype=np.int64)
    unmatched = []
    for c in range(n_clusters):
        members = labeled_labels[cluster_ids[labeled_idx] == c]
        if members.size:
            # unique() sorts, so argmax on counts resolves ties to the smallest label
            values, counts = np.unique(members, return_counts=True)
            cluster_labels[c] = values[np.argmax(counts)]
        else:
            unmatched.append(c)
    for c in unmatched:
        medoid = _medoid(points[cluster_ids == c])
        j = _nearest_index(medoid[None, :], points[labeled_idx])[0]
        cluster_labels[c] = labeled_labels[j]
    return ClusterClassifier(points, cluster_ids, cluster_labels, len(unmatched))


def _medoid(points: np.ndarray) -> np.ndarray:
    """Member minimizing the summed distance to the rest; ties to the lowest index."""
    if points.shape[0] == 1:
        return points[0]
    diff = points[:, None, :] - points[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=2))
    return points[int(np.argmin(d.sum(axis=1)))]


def _nearest_index(queries: np.ndarray, pool: np.ndarray) -> np.ndarray:
    """Index of the nearest pool point per query; ties to the lowest index."""
    out = np.empty(queries.shape[0], dtype=np.int64)
    for start in range(0, queries.shape[0], _BLOCK):
        stop = min(start + _BLOCK, queries.shape[0])
        diff = queries[start:stop, None, :] - pool[None, :, :]
        d2 = np.sum(diff * diff, axis=2)
        out[start:stop] = np.argmin(d2, axis=1)
    return out


@dataclass
class KnnClassifier:
    points: np.ndarray
    labels: np.ndarray
    k: int

    def predict(self, queries: np.ndarray) -> np.ndarray:
        queries = np.asarray(queries, dtype=np.float64)
        out = np.empty(queries.shape[0], dtype=np.int64)
        for start in range(0, queries.shape[0], _BLOCK):
            stop = min(start + _BLOCK, queries.shape[0])
            diff = queries[start:stop, None, :] - self.points[None, :, :]
            d2 = np.sum(diff * diff, axis=2)
            # stable argsort keeps the lowest index among equidistant neighbors
            order = np.argsort(d2, axis=1, kind="stable")[:, :self.k]
            for row, neighbors in enumerate(order):
                votes = self.labels[neighbors]
                values, counts = np.unique(votes, return_counts=True)
                out[start + row] = values[np.argmax(counts)]
        return out


def knn_baseline(labeled_points: np.ndarray, labeled_labels: np.ndarray,
                 k: int) -> KnnClassifier:
    labeled_points = np.asarray(labeled_points, dtype=np.float64)
    labeled_labels = np.asarray(labeled_labels, dtype=np.int64)
    if k > labeled_points.shape[0]:
        raise ValueError(f"k={k} exceeds the {labeled_points.shape[0]} labeled points")
    return KnnClassifier(labeled_points, labeled_labels, k)


def ssl_compare(encoder: Optional[NetworkParams], data: Dataset,
                n_labeled: int, m_unlabeled: int, n_test: int,
                cfg: SSLConfig) -> SSLCompareResult:
    """Run the cluster-then-label learner against the k-NN baseline per seed.

    Each seed draws a fresh disjoint labeled/unlabeled/test split. `encoder`
    None means work in the raw input space. A cutoff of None is resolved per
    seed to half the measured encoded cluster-margin on the clustered pool.
    """
    if data.labels is None:
        raise ValueError("ssl comparison needs ground-truth labels")
    runs = []
    for seed in cfg.seeds:
        splits = split(data, SplitSpec(n_labeled, m_unlabeled, n_test, seed=seed))
        runs.append(_run_one(encoder, splits, cfg, seed))
    return SSLCompareResult(runs)


def _encode_or_identity(encoder: Optional[NetworkParams], samples: np.ndarray) -> np.ndarray:
    x = samples.astype(np.float64)
    return x if encoder is None else encode(encoder, x)


def _run_one(encoder: Optional[NetworkParams], splits: Splits, cfg: SSLConfig,
             seed: int) -> SSLResult:
    z_lab = _encode_or_identity(encoder, splits.labeled.samples)
    z_unl = _encode_or_identity(encoder, splits.unlabeled.samples)
    z_test = _encode_or_identity(encoder, splits.test.samples)
    pool = np.vstack([z_unl, z_lab])
    pool_true = np.concatenate([splits.unlabeled.labels, splits.labeled.labels])
    labeled_idx = np.arange(z_unl.shape[0], pool.shape[0])

    cutoff = cfg.cutoff
    if cutoff is None:
        est = empirical_cluster_margin(ClusteredSample(pool, pool_true))
        if est.eta_hat <= 0:
            raise ValueError("measured encoded margin is zero; pass an explicit cutoff")
        cutoff = est.eta_hat / 2.0

    ids = single_linkage_clusters(pool, cutoff)
    classifier = label_clusters(pool, ids, labeled_idx, splits.labeled.labels)
    ssl_pred = classifier.predict(z_test)
    baseline = knn_baseline(z_lab, splits.labeled.labels, cfg.k_baseline)
    sup_pred = baseline.predict(z_test)

    truth = splits.test.labels
    n_clusters = int(ids.max()) + 1
    return SSLResult(
        seed=seed,
        cutoff=float(cutoff),
        ssl_error=float(np.mean(ssl_pred != truth)),
        supervised_error=float(np.mean(sup_pred != truth)),
        n_clusters_found=n_clusters,
        n_unmatched_clusters=classifier.n_unmatched,
        m=z_unl.shape[0],
        n=z_lab.shape[0],
        degenerate=n_clusters == pool.shape[0],
    )
