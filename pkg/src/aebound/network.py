"""Fully-connected autoencoders: construction, forward/backward passes, SGD training.

Weight matrices are dense float64 numpy arrays of shape (out_dim, in_dim) acting on
column vectors, so a batch stored as rows (n, in_dim) passes through a layer as
``batch @ W.T``. Networks are bias-free by default; the output head is usually a
sigmoid so reconstructions land in [0, 1]. Everything is deterministic for a
fixed seed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import spectral_norm

ACTIVATIONS = ("relu", "sigmoid", "identity")

# Predicted probabilities are clamped to [BCE_CLAMP, 1 - BCE_CLAMP] before the log
# so saturated sigmoids cannot produce infinities.
BCE_CLAMP = 1e-7

SURROGATES = ("mse", "bce")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError(f"layer dims must be positive, got {self.in_dim}x{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}, expected one of {ACTIVATIONS}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int
    seed: int = 0
    surrogate_loss: str = "bce"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.surrogate_loss not in SURROGATES:
            raise ValueError(f"surrogate_loss must be one of {SURROGATES}, got {self.surrogate_loss!r}")


@dataclass
class NetworkParams:
    """Ordered weight matrices plus activation tags, split into encoder/decoder.

    Layers ``[0, bottleneck_index)`` form the encoder, the rest the decoder. The
    bottleneck width is the out_dim of layer ``bottleneck_index - 1``. Networks
    are bias-free unless `biases` is given; the bound theory assumes bias-free,
    so reports on biased networks are flagged accordingly downstream. Instances
    are treated as immutable once trained; forward/encode/decode are pure.
    """

    weights: list[np.ndarray]
    activations: list[str]
    bottleneck_index: int
    biases: list[np.ndarray] | None = None

    def __post_init__(self):
        if not self.weights:
            raise ValueError("network needs at least one weight matrix")
        if len(self.weights) != len(self.activations):
            raise ValueError("one activation tag per weight matrix required")
        self.weights = [np.ascontiguousarray(w, dtype=np.float64) for w in self.weights]
        for i, w in enumerate(self.weights):
            if w.ndim != 2:
                raise ValueError(f"weight {i} must be 2-D, got shape {w.shape}")
            if not np.all(np.isfinite(w)):
                raise ValueError(f"weight {i} contains non-finite entries")
        for i in range(1, len(self.weights)):
            if self.weights[i].shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(
                    f"layer {i} expects input dim {self.weights[i].shape[1]} but layer "
                    f"{i - 1} outputs {self.weights[i - 1].shape[0]}"
                )
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        if self.biases is not None:
            if len(self.biases) != len(self.weights):
                raise ValueError("one bias vector per layer required")
            self.biases = [np.ascontiguousarray(b, dtype=np.float64) for b in self.biases]
            for i, (w, b) in enumerate(zip(self.weights, self.biases)):
                if b.shape != (w.shape[0],):
                    raise ValueError(
                        f"bias {i} has shape {b.shape}, layer outputs {w.shape[0]}")
                if not np.all(np.isfinite(b)):
                    raise ValueError(f"bias {i} contains non-finite entries")
        # 0 or depth leaves one side empty; plain feedforward stacks are allowed,
        # encode/decode then refuse to run on the empty side.
        if not 0 <= self.bottleneck_index <= len(self.weights):
            raise ValueError(
                f"bottleneck_index {self.bottleneck_index} out of range for "
                f"{len(self.weights)} layers"
            )

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def max_width(self) -> int:
        return max(w.shape[0] for w in self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def bottleneck_dim(self) -> int:
        if self.bottleneck_index == 0:
            raise ValueError("network has no encoder (bottleneck_index is 0)")
        return self.weights[self.bottleneck_index - 1].shape[0]

    def layer_dims(self) -> list[int]:
        return [self.input_dim] + [w.shape[0] for w in self.weights]

    def encoder_layers(self) -> tuple[list[np.ndarray], list[str], list[np.ndarray] | None]:
        k = self.bottleneck_index
        biases = None if self.biases is None else self.biases[:k]
        return self.weights[:k], self.activations[:k], biases

    def decoder_layers(self) -> tuple[list[np.ndarray], list[str], list[np.ndarray] | None]:
        k = self.bottleneck_index
        biases = None if self.biases is None else self.biases[k:]
        return self.weights[k:], self.activations[k:], biases

    def copy(self) -> "NetworkParams":
        biases = None if self.biases is None else [b.copy() for b in self.biases]
        return NetworkParams([w.copy() for w in self.weights], list(self.activations),
                             self.bottleneck_index, biases)


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    return z


def _activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


def _run_layers(weights: Sequence[np.ndarray], activations: Sequence[str],
                biases: Sequence[np.ndarray] | None, x: np.ndarray) -> np.ndarray:
    a = x
    for i, (w, act) in enumerate(zip(weights, activations)):
        z = a @ w.T
        if biases is not None:
            z = z + biases[i]
        a = _activate(act, z)
    return a


def _as_batch(x: np.ndarray, expected_dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != expected_dim:
        raise ValueError(f"{what} has dim {x.shape[-1] if x.ndim else 0}, expected {expected_dim}")
    return batch, single


def forward(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Apply the whole network to a vector or a batch of row vectors."""
    batch, single = _as_batch(x, params.input_dim, "input")
    out = _run_layers(params.weights, params.activations, params.biases, batch)
    return out[0] if single else out


def encode(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    weights, acts, biases = params.encoder_layers()
    if not weights:
        raise ValueError("network has no encoder (bottleneck_index is 0)")
    batch, single = _as_batch(x, params.input_dim, "input")
    out = _run_layers(weights, acts, biases, batch)
    return out[0] if single else out


def decode(params: NetworkParams, z: np.ndarray) -> np.ndarray:
    weights, acts, biases = params.decoder_layers()
    if not weights:
        raise ValueError("network has no decoder (bottleneck_index is depth)")
    batch, single = _as_batch(z, params.bottleneck_dim, "code")
    out = _run_layers(weights, acts, biases, batch)
    return out[0] if single else out


def surrogate_loss(params: NetworkParams, batch: np.ndarray, kind: str) -> float:
    """Mean surrogate reconstruction loss (sum over entries, mean over samples)."""
    if kind not in SURROGATES:
        raise ValueError(f"surrogate must be one of {SURROGATES}, got {kind!r}")
    batch, _ = _as_batch(batch, params.input_dim, "batch")
    if batch.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    out = forward(params, batch)
    if kind == "mse":
        return float(np.mean(np.sum((out - batch) ** 2, axis=1)))
    p = np.clip(out, BCE_CLAMP, 1.0 - BCE_CLAMP)
    ll = batch * np.log(p) + (1.0 - batch) * np.log(1.0 - p)
    return float(np.mean(-np.sum(ll, axis=1)))


def gradient(params: NetworkParams, batch: np.ndarray, kind: str) -> list[np.ndarray]:
    """d(mean surrogate loss)/dW_i for every layer, by reverse-mode accumulation."""
    return _backprop(params, batch, kind)[0]


def gradient_with_biases(params: NetworkParams, batch: np.ndarray,
                         kind: str) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Weight and bias gradients together; requires a biased network."""
    if params.biases is None:
        raise ValueError("network has no biases")
    w_grads, b_grads = _backprop(params, batch, kind)
    return w_grads, b_grads


def _backprop(params: NetworkParams, batch: np.ndarray,
              kind: str) -> tuple[list[np.ndarray], list[np.ndarray] | None]:
    if kind not in SURROGATES:
        raise ValueError(f"surrogate must be one of {SURROGATES}, got {kind!r}")
    batch, _ = _as_batch(batch, params.input_dim, "batch")
    n = batch.shape[0]
    if n == 0:
        raise ValueError("batch must be non-empty")

    # Forward, caching pre-activations and activations per layer.
    acts = [batch]
    pre = []
    a = batch
    for i, (w, act) in enumerate(zip(params.weights, params.activations)):
        z = a @ w.T
        if params.biases is not None:
            z = z + params.biases[i]
        a = _activate(act, z)
        pre.append(z)
        acts.append(a)

    out = acts[-1]
    if kind == "mse":
        d_out = 2.0 * (out - batch) / n
    else:
        # Clamped bce: entries pushed outside the clamp range contribute a
        # constant to the loss, hence zero gradient there.
        p = np.clip(out, BCE_CLAMP, 1.0 - BCE_CLAMP)
        inside = (out > BCE_CLAMP) & (out < 1.0 - BCE_CLAMP)
        d_out = np.where(inside, (p - batch) / (p * (1.0 - p)), 0.0) / n

    w_grads: list[np.ndarray] = [np.empty(0)] * params.depth
    b_grads = None if params.biases is None else [np.empty(0)] * params.depth
    delta = d_out
    for i in range(params.depth - 1, -1, -1):
        dz = delta * _activation_grad(params.activations[i], pre[i], acts[i + 1])
        w_grads[i] = dz.T @ acts[i]
        if b_grads is not None:
            b_grads[i] = dz.sum(axis=0)
        if i > 0:
            delta = dz @ params.weights[i]
    return w_grads, b_grads


def init_params(arch: Sequence[LayerSpec], bottleneck_index: int, seed: int,
                use_bias: bool = False) -> NetworkParams:
    """Seeded uniform fan-based initialization in +-sqrt(6 / (in + out)); zero biases."""
    _check_arch(arch)
    rng = np.random.default_rng(seed)
    weights = []
    for spec in arch:
        bound = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        weights.append(rng.uniform(-bound, bound, size=(spec.out_dim, spec.in_dim)))
    biases = [np.zeros(s.out_dim) for s in arch] if use_bias else None
    return NetworkParams(weights, [s.activation for s in arch], bottleneck_index, biases)


def _check_arch(arch: Sequence[LayerSpec]):
    if not arch:
        raise ValueError("architecture must have at least one layer")
    for prev, cur in zip(arch, arch[1:]):
        if cur.in_dim != prev.out_dim:
            raise ValueError(
                f"consecutive layers disagree: {prev.out_dim} -> {cur.in_dim}")


def autoencoder_arch(dims: Sequence[int], hidden_activation: str = "relu",
                     output_activation: str = "sigmoid") -> list[LayerSpec]:
    """LayerSpecs for the dimension chain `dims` (input dim first, output dim last)."""
    if len(dims) < 3:
        raise ValueError("an autoencoder needs at least two layers (dims chain of >= 3)")
    specs = []
    for i in range(len(dims) - 1):
        act = output_activation if i == len(dims) - 2 else hidden_activation
        specs.append(LayerSpec(dims[i], dims[i + 1], act))
    return specs


def train(arch: Sequence[LayerSpec], samples: np.ndarray, cfg: TrainConfig,
          bottleneck_index: int | None = None,
          use_bias: bool = False) -> tuple[NetworkParams, list[float]]:
    """Mini-batch SGD on the surrogate loss.

    Returns the trained parameters and the loss history: entry 0 is the loss at
    initialization, entry e the full-training-set loss after epoch e. The same
    (arch, samples, cfg) always yields bit-identical weights. Biased networks
    (use_bias) fall outside the bound theory's assumptions and are flagged as
    such in bound reports.
    """
    _check_arch(arch)
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError(f"samples must be a non-empty (n, dim) array, got shape {samples.shape}")
    m_dim = samples.shape[1]
    if arch[0].in_dim != m_dim or arch[-1].out_dim != m_dim:
        raise ValueError(
            f"autoencoder must map dim {m_dim} to itself, arch maps "
            f"{arch[0].in_dim} -> {arch[-1].out_dim}")
    widths = [s.out_dim for s in arch]
    if min(widths[:-1]) >= m_dim:
        raise ValueError("no bottleneck: some hidden layer must be narrower than the input")
    if cfg.surrogate_loss == "bce" and not np.all((samples == 0.0) | (samples == 1.0)):
        raise ValueError("bce surrogate requires binary inputs in {0, 1}")

    if bottleneck_index is None:
        bottleneck_index = int(np.argmin(widths[:-1])) + 1

    rng = np.random.default_rng(cfg.seed)
    params = init_params(arch, bottleneck_index, cfg.seed, use_bias=use_bias)

    n = samples.shape[0]
    history = [surrogate_loss(params, samples, cfg.surrogate_loss)]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = samples[order[start:start + cfg.batch_size]]
            w_grads, b_grads = _backprop(params, batch, cfg.surrogate_loss)
            for w, g in zip(params.weights, w_grads):
                w -= cfg.learning_rate * g
            if b_grads is not None:
                for b, g in zip(params.biases, b_grads):
                    b -= cfg.learning_rate * g
        history.append(surrogate_loss(params, samples, cfg.surrogate_loss))
    for i, w in enumerate(params.weights):
        if not np.all(np.isfinite(w)):
            raise FloatingPointError(f"training diverged: weight {i} has non-finite entries")
    return params, history


def normalize_weights(params: NetworkParams, tol: float = 1e-12) -> NetworkParams:
    """Rebalance layers so every weight matrix has spectral norm (prod ||W_i||)^(1/d).

    ReLU's positive homogeneity makes the network function invariant under
    per-layer rescalings with product one; the sigmoid head is untouched because
    the rescaling of the final matrix cancels against the earlier layers before
    the sigmoid is applied. Hidden sigmoids would break this and are rejected.
    """
    for act in params.activations[:-1]:
        if act == "sigmoid":
            raise ValueError("rebalancing requires positively homogeneous hidden activations")
    if params.biases is not None:
        raise ValueError("rebalancing assumes bias-free layers")
    norms = [spectral_norm(w, tol=tol) for w in params.weights]
    if any(s == 0.0 for s in norms):
        raise ValueError("degenerate network: a weight matrix has spectral norm 0")
    log_beta = np.mean([np.log(s) for s in norms])
    beta = float(np.exp(log_beta))
    weights = [(beta / s) * w for w, s in zip(params.weights, norms)]
    return NetworkParams(weights, list(params.activations), params.bottleneck_index)


def _format_real(x: float) -> str:
    # 17 significant digits round-trip any float64 exactly.
    return format(float(x), ".17g")


def checkpoint_dict(params: NetworkParams) -> dict:
    d = {
        "dims": params.layer_dims(),
        "bottleneck_index": params.bottleneck_index,
        "activations": list(params.activations),
        "weights": [w.ravel().tolist() for w in params.weights],
    }
    if params.biases is not None:
        d["biases"] = [b.tolist() for b in params.biases]
    return d


def _real_rows(matrices: list[list[float]], indent: str) -> list[str]:
    rows = []
    for i, flat in enumerate(matrices):
        comma = "," if i < len(matrices) - 1 else ""
        rows.append(indent + "[" + ", ".join(_format_real(v) for v in flat) + f"]{comma}")
    return rows


def save_checkpoint(params: NetworkParams, path, config_hash: str | None = None) -> None:
    """Write the checkpoint JSON with 17-significant-digit reals."""
    d = checkpoint_dict(params)
    rows = ["{"]
    if config_hash is not None:
        rows.append(f'  "config_hash": {json.dumps(config_hash)},')
    rows.append(f'  "dims": {json.dumps(d["dims"])},')
    rows.append(f'  "bottleneck_index": {d["bottleneck_index"]},')
    rows.append(f'  "activations": {json.dumps(d["activations"])},')
    tail = "," if "biases" in d else ""
    rows.append('  "weights": [')
    rows.extend(_real_rows(d["weights"], "    "))
    rows.append(f"  ]{tail}")
    if "biases" in d:
        rows.append('  "biases": [')
        rows.extend(_real_rows(d["biases"], "    "))
        rows.append("  ]")
    rows.append("}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(rows) + "\n")


def load_checkpoint(path) -> NetworkParams:
    with open(path, "r", encoding="ascii") as fh:
        d = json.load(fh)
    dims = d["dims"]
    weights = []
    for i, flat in enumerate(d["weights"]):
        out_dim, in_dim = dims[i + 1], dims[i]
        if len(flat) != out_dim * in_dim:
            raise ValueError(
                f"weight {i} has {len(flat)} entries, expected {out_dim}x{in_dim}")
        weights.append(np.array(flat, dtype=np.float64).reshape(out_dim, in_dim))
    biases = None
    if "biases" in d:
        biases = [np.array(b, dtype=np.float64) for b in d["biases"]]
    return NetworkParams(weights, list(d["activations"]), int(d["bottleneck_index"]),
                         biases)
