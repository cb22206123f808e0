"""Training protocol: splits, Adam, metrics, model selection, ablations.

Subjects split 80/20 into train+validation/test, then 85/15 into
train/validation, stratified by label. Training minimizes mean binary
cross-entropy over mini-batches with Adam; after each epoch the model
is scored on the validation set through the deterministic evaluation
path, and the parameters with the best validation F1 (ties broken by
lower validation loss, then earlier epoch) are the ones kept. The whole
run is a pure function of the dataset and configuration.
"""

from __future__ import annotations

import json
import typing
from dataclasses import dataclass, asdict, replace

import numpy as np

from dualgraph import autodiff as ad
from dualgraph.autodiff import logistic
from dualgraph.graphgen import sample_gumbel_noise
from dualgraph.model import MODES, ModelConfig, ModelState, forward, init_model
from dualgraph.preprocess import Dataset, pearson_correlation


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    extractor_dim: int = 32
    gcn_hidden_dim: int = 64
    gcn_out_dim: int = 32
    classifier_hidden_dim: int = 64
    corr_threshold: float = 0.6
    temperature: float = 1.0
    epochs: int = 200
    patience: int = 30
    batch_size: int = 16
    seed: int = 0
    mode: str = "full"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        for name in (
            "extractor_dim",
            "gcn_hidden_dim",
            "gcn_out_dim",
            "classifier_hidden_dim",
            "epochs",
            "patience",
            "batch_size",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.corr_threshold < 1.0:
            raise ValueError("corr_threshold must be in (0, 1)")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")


_CONFIG_FIELDS = typing.get_type_hints(TrainConfig)


def load_train_config(path: str) -> TrainConfig:
    """Read a flat JSON object mirroring TrainConfig; unknown keys rejected."""
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a JSON object")
    unknown = sorted(set(data) - set(_CONFIG_FIELDS))
    if unknown:
        raise ValueError(f"{path}: unknown config keys: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        kind = _CONFIG_FIELDS[key]
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"{path}: {key} must be a number")
            kwargs[key] = float(value)
        elif kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError(f"{path}: {key} must be an integer")
            kwargs[key] = value
        else:
            if not isinstance(value, str):
                raise ValueError(f"{path}: {key} must be a string")
            kwargs[key] = value.replace("-", "_")
    return TrainConfig(**kwargs)


@dataclass
class SplitIndices:
    train: list
    val: list
    test: list


def _apportion(total: int, counts: list) -> list:
    """Largest-remainder split of ``total`` across groups sized ``counts``."""
    pool = sum(counts)
    quotas = [total * c / pool for c in counts]
    shares = [int(q) for q in quotas]
    leftovers = total - sum(shares)
    by_fraction = sorted(
        range(len(counts)), key=lambda i: (-(quotas[i] - shares[i]), i)
    )
    for i in by_fraction[:leftovers]:
        shares[i] += 1
    return shares


def split(dataset: Dataset, seed: int) -> SplitIndices:
    """Stratified, seeded 80/20 test split then 85/15 train/validation."""
    n = len(dataset)
    if n < 5:
        raise ValueError(f"need at least 5 subjects to split, got {n}")
    labels = dataset.labels
    class_indices = [np.flatnonzero(labels == c) for c in (0, 1)]
    if any(len(ci) == 0 for ci in class_indices):
        raise ValueError("both classes must be present to split")

    rng = np.random.default_rng(seed)
    shuffled = [rng.permutation(ci).tolist() for ci in class_indices]

    n_test = round(0.20 * n)
    test_shares = _apportion(n_test, [len(s) for s in shuffled])
    test, remaining = [], []
    for share, ids in zip(test_shares, shuffled):
        test.extend(ids[:share])
        remaining.append(ids[share:])

    n_val = round(0.15 * (n - n_test))
    val_shares = _apportion(n_val, [len(r) for r in remaining])
    val, train = [], []
    for share, ids in zip(val_shares, remaining):
        val.extend(ids[:share])
        train.extend(ids[share:])

    return SplitIndices(train=sorted(train), val=sorted(val), test=sorted(test))


class Adam:
    """Adaptive-moment optimizer, bias-corrected, epsilon outside the root."""

    def __init__(
        self,
        params: list,
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / (1.0 - self.beta1**self.t)
            v_hat = self.v[i] / (1.0 - self.beta2**self.t)
            p.data = p.data - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


@dataclass
class Metrics:
    f1: float
    sensitivity: float
    specificity: float
    auc: float
    tp: int
    fp: int
    tn: int
    fn: int

    def to_dict(self) -> dict:
        return asdict(self)


def _confusion(probs: np.ndarray, labels: np.ndarray) -> tuple:
    preds = probs >= 0.5
    pos = labels == 1
    tp = int(np.sum(preds & pos))
    fp = int(np.sum(preds & ~pos))
    tn = int(np.sum(~preds & ~pos))
    fn = int(np.sum(~preds & pos))
    return tp, fp, tn, fn


def _safe_ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def roc_auc(probs: np.ndarray, labels: np.ndarray) -> float:
    """Rank-based AUC with midrank tie handling (Mann-Whitney form)."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: both classes must be present")
    order = np.argsort(probs, kind="mergesort")
    ranks = np.empty(len(probs), dtype=np.float64)
    i = 0
    while i < len(probs):
        j = i
        while j + 1 < len(probs) and probs[order[j + 1]] == probs[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # 1-based midrank
        i = j + 1
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def binary_metrics(probs: np.ndarray, labels: np.ndarray) -> Metrics:
    """Confusion-based scores plus AUC; positives predicted at prob >= 0.5."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    tp, fp, tn, fn = _confusion(probs, labels)
    return Metrics(
        f1=_safe_ratio(2.0 * tp, 2.0 * tp + fp + fn),
        sensitivity=_safe_ratio(tp, tp + fn),
        specificity=_safe_ratio(tn, tn + fp),
        auc=roc_auc(probs, labels),
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
    )


def _bce_value(logit: float, label: int) -> float:
    return max(logit, 0.0) - logit * label + float(np.log1p(np.exp(-abs(logit))))


def _predict_logits(
    state: ModelState, dataset: Dataset, indices: list, corrs: list = None
) -> np.ndarray:
    if len(indices) == 0:
        raise ValueError("cannot evaluate an empty index list")
    logits = []
    for idx in indices:
        subject = dataset.subjects[idx]
        corr = corrs[idx] if corrs is not None else pearson_correlation(subject.series)
        logits.append(float(forward(subject.series, corr, state, noise=None).data))
    return np.asarray(logits)


def predict_probabilities(
    state: ModelState, dataset: Dataset, indices: list, corrs: list = None
) -> np.ndarray:
    """Deterministic disease probabilities via the noise-free path."""
    return logistic(_predict_logits(state, dataset, indices, corrs))


def evaluate(state: ModelState, dataset: Dataset, indices: list) -> Metrics:
    """Score the deterministic predictions of ``state`` on the given subjects."""
    probs = predict_probabilities(state, dataset, indices)
    labels = dataset.labels[np.asarray(indices, dtype=np.int64)]
    return binary_metrics(probs, labels)


def _model_config(dataset: Dataset, config: TrainConfig) -> ModelConfig:
    return ModelConfig(
        n_rois=dataset.n_rois,
        t_steps=dataset.t_steps,
        extractor_dim=config.extractor_dim,
        gcn_hidden_dim=config.gcn_hidden_dim,
        gcn_out_dim=config.gcn_out_dim,
        classifier_hidden_dim=config.classifier_hidden_dim,
        corr_threshold=config.corr_threshold,
        temperature=config.temperature,
        mode=config.mode,
        seed=config.seed,
    )


def _epoch_pass(
    state: ModelState,
    dataset: Dataset,
    corrs: list,
    train_indices: list,
    optimizer: Adam,
    rng: np.random.Generator,
    config: TrainConfig,
    epoch: int,
) -> float:
    """One shuffled pass of mini-batch updates; returns mean train loss."""
    order = [train_indices[i] for i in rng.permutation(len(train_indices))]
    n = dataset.n_rois
    total = 0.0
    for start in range(0, len(order), config.batch_size):
        batch = order[start : start + config.batch_size]
        optimizer.zero_grad()
        batch_loss = None
        for idx in batch:
            subject = dataset.subjects[idx]
            noise = sample_gumbel_noise(rng, n)
            logit = forward(subject.series, corrs[idx], state, noise=noise)
            loss = ad.bce_with_logits(logit, subject.label)
            batch_loss = loss if batch_loss is None else ad.add(batch_loss, loss)
        mean_loss = ad.scale(batch_loss, 1.0 / len(batch))
        value = float(mean_loss.data)
        if not np.isfinite(value):
            raise TrainingDiverged(f"non-finite training loss at epoch {epoch}")
        mean_loss.backward()
        optimizer.step()
        total += value * len(batch)
    return total / len(order)


def fit(dataset: Dataset, indices: list, config: TrainConfig) -> tuple:
    """Train on exactly ``indices`` with no validation or early stopping.

    Returns (state, per-epoch mean train losses). Mostly useful for
    capacity checks and experiments on tiny cohorts.
    """
    if not indices:
        raise ValueError("cannot train on an empty index list")
    state = init_model(_model_config(dataset, config))
    corrs = [pearson_correlation(s.series) for s in dataset.subjects]
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
    optimizer = Adam(state.parameters(), config.learning_rate)
    losses = []
    for epoch in range(1, config.epochs + 1):
        losses.append(
            _epoch_pass(state, dataset, corrs, indices, optimizer, rng, config, epoch)
        )
    return state, losses


def train_model(dataset: Dataset, config: TrainConfig) -> tuple:
    """Full protocol: split, train, select on validation F1, score on test.

    Returns (state, test Metrics, log) where log is one dict per epoch
    with keys epoch, train_loss, val_f1, val_loss. The retained
    parameters are those of the best validation epoch, not the last.
    """
    indices = split(dataset, config.seed)
    state = init_model(_model_config(dataset, config))
    corrs = [pearson_correlation(s.series) for s in dataset.subjects]
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
    optimizer = Adam(state.parameters(), config.learning_rate)
    val_labels = dataset.labels[np.asarray(indices.val, dtype=np.int64)]

    log = []
    best_key = None
    best_params = None
    stall = 0
    for epoch in range(1, config.epochs + 1):
        train_loss = _epoch_pass(
            state, dataset, corrs, indices.train, optimizer, rng, config, epoch
        )

        val_logits = _predict_logits(state, dataset, indices.val, corrs)
        tp, fp, tn, fn = _confusion(logistic(val_logits), val_labels)
        val_f1 = _safe_ratio(2.0 * tp, 2.0 * tp + fp + fn)
        val_loss = float(
            np.mean([_bce_value(z, y) for z, y in zip(val_logits, val_labels)])
        )
        log.append(
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "val_f1": val_f1,
                "val_loss": val_loss,
            }
        )

        key = (-val_f1, val_loss, epoch)
        if best_key is None or key < best_key:
            best_key = key
            best_params = [p.data.copy() for p in state.parameters()]
            stall = 0
        else:
            stall += 1
            if stall >= config.patience:
                break

    for p, saved in zip(state.parameters(), best_params):
        p.data = saved
    test_metrics = evaluate(state, dataset, indices.test)
    return state, test_metrics, log


def run_ablation(dataset: Dataset, config: TrainConfig) -> list:
    """Train every ablation mode with the same seed (hence same splits).

    Returns [(mode, Metrics), ...] in fixed mode order.
    """
    table = []
    for mode in MODES:
        _, metrics, _ = train_model(dataset, replace(config, mode=mode))
        table.append((mode, metrics))
    return table
