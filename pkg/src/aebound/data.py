"""Dataset ingestion and generation.

Handles the IDX container (MNIST's format), a minimal raw planar-byte container
for offline-converted RGB data, binarization to {0,1} vectors, and a synthetic
clustered generator whose inter-cluster margin is known by construction.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
RAW_MAGIC = b"AEB1"


class IdxFormatError(ValueError):
    """Container parse failure; `code` is one of bad-magic, truncated, count-mismatch."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class IdxImages:
    data: np.ndarray      # (count, rows*cols) uint8
    rows: int
    cols: int


@dataclass
class Dataset:
    """Binary sample matrix with optional integer labels.

    samples is (n, M) uint8 with entries in {0, 1}; B is the max sample L2 norm.
    """

    samples: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.uint8)
        if self.samples.ndim != 2:
            raise ValueError(f"samples must be (n, M), got shape {self.samples.shape}")
        if not np.all((self.samples == 0) | (self.samples == 1)):
            raise ValueError("samples must be binary")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.samples.shape[0],):
                raise ValueError(
                    f"{self.samples.shape[0]} samples but {self.labels.shape[0]} labels")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def M(self) -> int:
        return self.samples.shape[1]

    @property
    def B(self) -> float:
        # Entries are 0/1 so the squared norm is the row sum.
        if len(self) == 0:
            return 0.0
        return float(np.sqrt(self.samples.sum(axis=1, dtype=np.int64).max()))

    def floats(self) -> np.ndarray:
        return self.samples.astype(np.float64)

    def subset(self, idx: np.ndarray) -> "Dataset":
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.samples[idx], labels)


def parse_idx(blob: bytes):
    """Parse an IDX blob into IdxImages or a label vector, depending on its magic."""
    if len(blob) < 4:
        raise IdxFormatError("truncated", f"blob of {len(blob)} bytes has no magic")
    (magic,) = struct.unpack(">I", blob[:4])
    if magic == IDX_IMAGE_MAGIC:
        if len(blob) < 16:
            raise IdxFormatError("truncated", "image header needs 16 bytes")
        count, rows, cols = struct.unpack(">III", blob[4:16])
        payload = blob[16:]
        expected = count * rows * cols
        if len(payload) < expected:
            raise IdxFormatError(
                "truncated", f"payload has {len(payload)} bytes, header promises {expected}")
        if len(payload) > expected:
            raise IdxFormatError(
                "count-mismatch",
                f"payload has {len(payload)} bytes but header declares {count} images "
                f"of {rows}x{cols}")
        data = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols).copy()
        return IdxImages(data, rows, cols)
    if magic == IDX_LABEL_MAGIC:
        if len(blob) < 8:
            raise IdxFormatError("truncated", "label header needs 8 bytes")
        (count,) = struct.unpack(">I", blob[4:8])
        payload = blob[8:]
        if len(payload) < count:
            raise IdxFormatError(
                "truncated", f"payload has {len(payload)} bytes, header promises {count}")
        if len(payload) > count:
            raise IdxFormatError(
                "count-mismatch",
                f"payload has {len(payload)} bytes but header declares {count} labels")
        return np.frombuffer(payload, dtype=np.uint8).copy()
    raise IdxFormatError("bad-magic", f"unknown IDX magic 0x{magic:08x}")


def write_idx_images(images: IdxImages) -> bytes:
    count = images.data.shape[0]
    header = struct.pack(">IIII", IDX_IMAGE_MAGIC, count, images.rows, images.cols)
    return header + np.ascontiguousarray(images.data, dtype=np.uint8).tobytes()


def write_idx_labels(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
        raise ValueError("IDX labels must fit in a byte")
    header = struct.pack(">II", IDX_LABEL_MAGIC, labels.shape[0])
    return header + labels.astype(np.uint8).tobytes()


def load_idx_pair(image_path, label_path) -> tuple[IdxImages, np.ndarray]:
    with open(image_path, "rb") as fh:
        images = parse_idx(fh.read())
    with open(label_path, "rb") as fh:
        labels = parse_idx(fh.read())
    if not isinstance(images, IdxImages) or isinstance(labels, IdxImages):
        raise IdxFormatError("bad-magic", "image/label files swapped or mistyped")
    if images.data.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            "count-mismatch",
            f"{images.data.shape[0]} images but {labels.shape[0]} labels")
    return images, labels


def parse_raw_planar(blob: bytes) -> tuple[np.ndarray, int, int]:
    """Parse the AEB1 container: per image, one rows*cols plane per channel.

    Returns (count, channels, rows*cols) uint8 plus rows and cols.
    """
    if len(blob) < 4 or blob[:4] != RAW_MAGIC:
        raise IdxFormatError("bad-magic", "missing AEB1 magic")
    if len(blob) < 20:
        raise IdxFormatError("truncated", "AEB1 header needs 20 bytes")
    count, rows, cols, channels = struct.unpack(">IIII", blob[4:20])
    payload = blob[20:]
    expected = count * rows * cols * channels
    if len(payload) < expected:
        raise IdxFormatError(
            "truncated", f"payload has {len(payload)} bytes, header promises {expected}")
    if len(payload) > expected:
        raise IdxFormatError("count-mismatch", "payload longer than header declares")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(count, channels, rows * cols).copy()
    return data, rows, cols


def write_raw_planar(data: np.ndarray, rows: int, cols: int) -> bytes:
    data = np.ascontiguousarray(data, dtype=np.uint8)
    count, channels, _ = data.shape
    header = RAW_MAGIC + struct.pack(">IIII", count, rows, cols, channels)
    return header + data.tobytes()


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma of (n, 3, M) byte planes, rounded to the nearest integer."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[1] != 3:
        raise ValueError(f"expected (n, 3, M) RGB planes, got shape {rgb.shape}")
    lum = 0.299 * rgb[:, 0] + 0.587 * rgb[:, 1] + 0.114 * rgb[:, 2]
    return np.clip(np.rint(lum), 0, 255).astype(np.uint8)


def binarize(images, threshold: float = 0.5, labels: Optional[np.ndarray] = None) -> Dataset:
    """Threshold byte images into a binary Dataset: entry 1 iff pixel/255 >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    pixels = images.data if isinstance(images, IdxImages) else np.asarray(images)
    if pixels.ndim != 2:
        raise ValueError(f"expected a (n, M) byte matrix, got shape {pixels.shape}")
    binary = (pixels.astype(np.float64) / 255.0 >= threshold).astype(np.uint8)
    return Dataset(binary, labels)


@dataclass
class SyntheticClusters:
    dataset: Dataset
    prototypes: np.ndarray     # (K, M) uint8
    guaranteed_margin: float   # L2 lower bound on inter-cluster distances
    hamming_floor: int         # min pairwise prototype Hamming distance enforced


def gen_clustered(n_clusters: int, dim: int, flips: int, per_cluster: int,
                  seed: int, max_tries: int = 2000) -> SyntheticClusters:
    """Clustered binary data with a margin that is guaranteed, not just likely.

    Prototypes are drawn at pairwise Hamming distance >= 4*flips + 2, and each
    sample flips exactly `flips` bits of its prototype, so samples from distinct
    clusters stay >= floor - 2*flips bits apart and the L2 margin is at least
    sqrt(floor - 2*flips). Labels are the cluster indices.
    """
    if n_clusters < 2:
        raise ValueError(f"need at least 2 clusters, got {n_clusters}")
    if flips < 0 or per_cluster < 1:
        raise ValueError("flips must be >= 0 and per_cluster >= 1")
    floor = 4 * flips + 2
    if floor > dim:
        raise ValueError(
            f"infeasible: Hamming floor {floor} exceeds dimension {dim}")
    rng = np.random.default_rng(seed)

    prototypes: list[np.ndarray] = []
    tries = 0
    while len(prototypes) < n_clusters:
        tries += 1
        if tries > max_tries:
            raise ValueError(
                f"infeasible: could not place {n_clusters} prototypes at Hamming "
                f"distance {floor} in {dim} bits after {max_tries} draws")
        cand = rng.integers(0, 2, size=dim, dtype=np.uint8)
        if all(int(np.sum(cand != p)) >= floor for p in prototypes):
            prototypes.append(cand)
    protos = np.stack(prototypes)

    min_hamming = min(
        int(np.sum(protos[i] != protos[j]))
        for i in range(n_clusters) for j in range(i + 1, n_clusters))

    n = n_clusters * per_cluster
    samples = np.empty((n, dim), dtype=np.uint8)
    labels = np.empty(n, dtype=np.int64)
    row = 0
    for k in range(n_clusters):
        for _ in range(per_cluster):
            x = protos[k].copy()
            if flips > 0:
                pos = rng.choice(dim, size=flips, replace=False)
                x[pos] ^= 1
            samples[row] = x
            labels[row] = k
            row += 1

    margin = float(np.sqrt(min_hamming - 2 * flips))
    return SyntheticClusters(Dataset(samples, labels), protos, margin, floor)


@dataclass(frozen=True)
class SplitSpec:
    n_labeled: int
    m_unlabeled: int
    n_test: int
    seed: int = 0

    def __post_init__(self):
        if min(self.n_labeled, self.m_unlabeled, self.n_test) < 0:
            raise ValueError("split sizes must be non-negative")

    @property
    def total(self) -> int:
        return self.n_labeled + self.m_unlabeled + self.n_test


@dataclass
class Splits:
    labeled: Dataset
    unlabeled: Dataset
    test: Dataset


def split(data: Dataset, spec: SplitSpec) -> Splits:
    """Seeded disjoint partition; the labeled part is stratified when labels exist.

    Stratification takes one random sample per class round-robin until the
    labeled budget is exhausted, so every class appears whenever
    n_labeled >= number of classes.
    """
    n = len(data)
    if spec.total > n:
        raise ValueError(f"split sizes sum to {spec.total} but dataset has {n} samples")
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(n)

    if data.labels is not None and spec.n_labeled > 0:
        by_class: dict[int, list[int]] = {}
        for idx in order:
            by_class.setdefault(int(data.labels[idx]), []).append(int(idx))
        classes = sorted(by_class)
        picked: list[int] = []
        while len(picked) < spec.n_labeled:
            progressed = False
            for c in classes:
                if by_class[c] and len(picked) < spec.n_labeled:
                    picked.append(by_class[c].pop(0))
                    progressed = True
            if not progressed:
                break
        labeled_idx = np.array(picked, dtype=np.int64)
    else:
        labeled_idx = order[:spec.n_labeled]

    taken = set(labeled_idx.tolist())
    rest = np.array([i for i in order if int(i) not in taken], dtype=np.int64)
    unlabeled_idx = rest[:spec.m_unlabeled]
    test_idx = rest[spec.m_unlabeled:spec.m_unlabeled + spec.n_test]
    return Splits(data.subset(labeled_idx), data.subset(unlabeled_idx), data.subset(test_idx))
