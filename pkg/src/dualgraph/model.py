"""Dual-branch graph network: two GCNs, flatten pooling, MLP classifier.

Each subject yields two graphs over the same correlation-row node
features. Both run through their own two-layer graph convolution with
symmetric degree normalization (self-loops added once here, which is
why the adjacencies arrive with zero diagonals), node embeddings are
flattened in node order, and the concatenated branch vectors feed a
two-layer classifier ending in a single logit.

Ablation modes rewire the forward pass: ``no_corr`` keeps only the
sampled-graph branch, ``no_optim`` only the thresholded branch, and
``no_gconv`` skips graph convolution entirely, pooling the raw features
through both branch slots. The classifier input width follows the mode.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from dualgraph import autodiff as ad
from dualgraph.autodiff import Tensor
from dualgraph.graphgen import (
    EdgeScorer,
    build_filtered,
    edge_probabilities,
    gumbel_sample,
    harden,
)

MODES = ("full", "no_corr", "no_optim", "no_gconv")

_MAGIC = b"DGBC"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Geometry and hyperparameters that pin every parameter shape."""

    n_rois: int
    t_steps: int
    extractor_dim: int
    gcn_hidden_dim: int
    gcn_out_dim: int
    classifier_hidden_dim: int
    corr_threshold: float
    temperature: float
    mode: str
    seed: int

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 < self.corr_threshold < 1.0:
            raise ValueError(f"corr_threshold must be in (0, 1), got {self.corr_threshold}")
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        for name in (
            "n_rois",
            "t_steps",
            "extractor_dim",
            "gcn_hidden_dim",
            "gcn_out_dim",
            "classifier_hidden_dim",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class GcnStack:
    """Weights of one two-layer graph convolution branch (no biases)."""

    w0: Tensor  # n_features x hidden
    w1: Tensor  # hidden x out

    def parameters(self) -> list:
        return [self.w0, self.w1]


@dataclass
class ClassifierHead:
    """Two fully connected layers with a ReLU between, ending in one logit."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def parameters(self) -> list:
        return [self.w1, self.b1, self.w2, self.b2]


@dataclass
class ModelState:
    """All learnable parameters plus the configuration that shaped them."""

    config: ModelConfig
    scorer: EdgeScorer
    filtered_gcn: GcnStack
    optimal_gcn: GcnStack
    classifier: ClassifierHead

    def parameters(self) -> list:
        return (
            self.scorer.parameters()
            + self.filtered_gcn.parameters()
            + self.optimal_gcn.parameters()
            + self.classifier.parameters()
        )

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())


def classifier_input_dim(config: ModelConfig) -> int:
    n, f = config.n_rois, config.gcn_out_dim
    if config.mode == "full":
        return 2 * n * f
    if config.mode in ("no_corr", "no_optim"):
        return n * f
    return 2 * n * n  # no_gconv pools the raw n x n features in both slots


def parameter_shapes(config: ModelConfig) -> list:
    """Canonical (name, shape) list: declaration, init, and file order."""
    n = config.n_rois
    t = config.t_steps
    d = config.extractor_dim
    h = config.gcn_hidden_dim
    f = config.gcn_out_dim
    hc = config.classifier_hidden_dim
    return [
        ("scorer.extract_w", (t, d)),
        ("scorer.extract_b", (d,)),
        ("scorer.pair_w1", (2 * d, d)),
        ("scorer.pair_b1", (d,)),
        ("scorer.pair_w2", (d, 1)),
        ("scorer.pair_b2", (1,)),
        ("filtered_gcn.w0", (n, h)),
        ("filtered_gcn.w1", (h, f)),
        ("optimal_gcn.w0", (n, h)),
        ("optimal_gcn.w1", (h, f)),
        ("classifier.w1", (classifier_input_dim(config), hc)),
        ("classifier.b1", (hc,)),
        ("classifier.w2", (hc, 1)),
        ("classifier.b2", (1,)),
    ]


def parameter_count(config: ModelConfig) -> int:
    """Closed-form parameter total for the configuration."""
    return sum(int(np.prod(shape)) for _, shape in parameter_shapes(config))


def _assemble(config: ModelConfig, arrays: list) -> ModelState:
    params = [Tensor(a, requires_grad=True) for a in arrays]
    return ModelState(
        config=config,
        scorer=EdgeScorer(*params[0:6]),
        filtered_gcn=GcnStack(*params[6:8]),
        optimal_gcn=GcnStack(*params[8:10]),
        classifier=ClassifierHead(*params[10:14]),
    )


def init_model(config: ModelConfig) -> ModelState:
    """Fresh parameters: Glorot-uniform weights, zero biases, seeded PCG64."""
    rng = np.random.default_rng(config.seed)
    arrays = []
    for _, shape in parameter_shapes(config):
        if len(shape) == 2:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            arrays.append(rng.uniform(-limit, limit, size=shape))
        else:
            arrays.append(np.zeros(shape))
    return _assemble(config, arrays)


def normalize_adjacency(adjacency) -> Tensor:
    """Symmetrically degree-normalized adjacency with self-loops added.

    Adds the identity, then scales entry (i, j) by the inverse square
    roots of row sums i and j. Row sums stay >= 1 thanks to the added
    self-loops, so this never divides by zero. Accepts a constant array
    or a gradient-carrying tensor; gradients flow through both the
    entries and the degrees.
    """
    if not isinstance(adjacency, Tensor):
        adjacency = Tensor(np.asarray(adjacency, dtype=np.float64))
    n = adjacency.shape[0]
    if adjacency.shape != (n, n):
        raise ValueError(f"adjacency must be square, got {adjacency.shape}")
    if np.any(adjacency.data < 0):
        raise ValueError("adjacency entries must be non-negative")
    with_loops = ad.add(adjacency, Tensor(np.eye(n)))
    inv_sqrt_deg = ad.power(ad.row_sum(with_loops), -0.5)  # (n, 1)
    scaling = ad.matmul(inv_sqrt_deg, ad.transpose(inv_sqrt_deg))
    return ad.mul(with_loops, scaling)


def gcn_forward(features, norm_adjacency: Tensor, stack: GcnStack) -> Tensor:
    """Two-layer graph convolution: ReLU(A (ReLU(A X W0)) W1)."""
    if not isinstance(features, Tensor):
        features = Tensor(np.asarray(features, dtype=np.float64))
    n = norm_adjacency.shape[0]
    if features.shape[0] != n:
        raise ValueError(
            f"features have {features.shape[0]} rows but adjacency is {n}x{n}"
        )
    if features.shape[1] != stack.w0.shape[0]:
        raise ValueError(
            f"features width {features.shape[1]} does not match weight "
            f"input {stack.w0.shape[0]}"
        )
    hidden = ad.relu(ad.matmul(ad.matmul(norm_adjacency, features), stack.w0))
    return ad.relu(ad.matmul(ad.matmul(norm_adjacency, hidden), stack.w1))


def concat_pool(node_embeddings: Tensor) -> Tensor:
    """Flatten node embeddings row-major (node 0 first) into one vector."""
    n, f = node_embeddings.shape
    return ad.reshape(node_embeddings, (n * f,))


def forward(series: np.ndarray, corr: np.ndarray, state: ModelState, noise=None) -> Tensor:
    """Scalar logit for one subject.

    ``noise`` is a pair of standard-Gumbel matrices for the training
    path; ``None`` selects the deterministic evaluation path, where the
    sampled graph is the noise-free relaxation thresholded at one half.
    """
    config = state.config
    series = np.asarray(series, dtype=np.float64)
    corr = np.asarray(corr, dtype=np.float64)
    n = config.n_rois
    if series.shape != (n, config.t_steps):
        raise ValueError(
            f"series shape {series.shape} does not match configured "
            f"({n}, {config.t_steps})"
        )
    if corr.shape != (n, n):
        raise ValueError(f"corr shape {corr.shape} does not match {n} ROIs")

    pooled = []
    if config.mode == "no_gconv":
        flat = concat_pool(Tensor(corr))
        pooled = [flat, flat]
    else:
        if config.mode in ("full", "no_optim"):
            filtered = build_filtered(corr, config.corr_threshold)
            norm_f = normalize_adjacency(Tensor(filtered))
            pooled.append(concat_pool(gcn_forward(corr, norm_f, state.filtered_gcn)))
        if config.mode in ("full", "no_corr"):
            theta = edge_probabilities(series, state.scorer)
            if noise is None:
                zero = (np.zeros((n, n)), np.zeros((n, n)))
                soft = gumbel_sample(Tensor(theta.data), config.temperature, zero)
                optimal = Tensor(harden(soft.data))
            else:
                optimal = gumbel_sample(theta, config.temperature, noise)
            norm_o = normalize_adjacency(optimal)
            pooled.append(concat_pool(gcn_forward(corr, norm_o, state.optimal_gcn)))

    vector = pooled[0] if len(pooled) == 1 else ad.concat(pooled[0], pooled[1], axis=0)
    row = ad.reshape(vector, (1, vector.size))
    head = state.classifier
    hidden = ad.relu(ad.add(ad.matmul(row, head.w1), head.b1))
    logit = ad.add(ad.matmul(hidden, head.w2), head.b2)
    return ad.reshape(logit, ())


def subject_graphs(series: np.ndarray, corr: np.ndarray, state: ModelState) -> tuple:
    """Deterministic graphs for one subject, as used at evaluation time.

    Returns (filtered 0/1 adjacency, edge-probability matrix, hardened
    0/1 adjacency of the noise-free sampled graph).
    """
    config = state.config
    filtered = build_filtered(corr, config.corr_threshold)
    theta = edge_probabilities(series, state.scorer)
    n = config.n_rois
    zero = (np.zeros((n, n)), np.zeros((n, n)))
    soft = gumbel_sample(Tensor(theta.data), config.temperature, zero)
    return filtered, theta.data.copy(), harden(soft.data)


def save_checkpoint(state: ModelState, path: str) -> None:
    """Single-file checkpoint: magic, version, JSON header, raw float64 LE."""
    config = state.config
    header = {
        "format_version": _FORMAT_VERSION,
        "config": asdict(config),
        "params": [
            {"name": name, "shape": list(shape)}
            for name, shape in parameter_shapes(config)
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQ", _FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for tensor, (name, shape) in zip(state.parameters(), parameter_shapes(config)):
            if tensor.data.shape != shape:
                raise ValueError(f"parameter {name} has drifted to {tensor.data.shape}")
            fh.write(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> ModelState:
    """Read a checkpoint, rejecting version or dimension mismatches."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a model checkpoint (bad magic)")
    version, header_len = struct.unpack_from("<IQ", raw, 4)
    if version != _FORMAT_VERSION:
        raise ValueError(
            f"{path}: unsupported checkpoint version {version}, "
            f"expected {_FORMAT_VERSION}"
        )
    offset = 4 + 12
    if offset + header_len > len(raw):
        raise ValueError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
        if header.get("format_version") != _FORMAT_VERSION:
            raise ValueError(f"{path}: header/container version mismatch")
        config = ModelConfig(**header["config"])
    except (KeyError, TypeError, UnicodeDecodeError) as exc:
        raise ValueError(f"{path}: malformed checkpoint header: {exc}") from None

    expected = parameter_shapes(config)
    listed = [(p["name"], tuple(p["shape"])) for p in header["params"]]
    if listed != expected:
        raise ValueError(f"{path}: parameter table does not match configuration")

    offset += header_len
    arrays = []
    for name, shape in expected:
        count = int(np.prod(shape))
        end = offset + count * 8
        if end > len(raw):
            raise ValueError(f"{path}: truncated while reading {name}")
        arrays.append(
            np.frombuffer(raw[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        )
        offset = end
    if offset != len(raw):
        raise ValueError(f"{path}: trailing bytes after parameters")
    return _assemble(config, arrays)
