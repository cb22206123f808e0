"""The two adjacency structures: thresholded correlation and sampled edges.

The thresholded graph keeps correlation pairs above a cutoff and is a
fixed, undirected input. The sampled graph is learned: a per-node signal
embedding feeds a pair MLP producing edge probabilities, which a
logistic-Gumbel relaxation turns into a differentiable soft adjacency
during training and a thresholded 0/1 matrix at evaluation time.
Both graphs keep a zero diagonal; self-loops are added once during
normalization in the model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dualgraph import autodiff as ad
from dualgraph.autodiff import Tensor


def build_filtered(corr: np.ndarray, threshold: float) -> np.ndarray:
    """0/1 adjacency keeping strictly super-threshold correlations, zero diagonal."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    corr = np.asarray(corr, dtype=np.float64)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise ValueError(f"correlation matrix must be square, got {corr.shape}")
    adjacency = (corr > threshold).astype(np.float64)
    np.fill_diagonal(adjacency, 0.0)
    return adjacency


@dataclass
class EdgeScorer:
    """Learnable edge-probability head: signal embedding + pair MLP.

    Each node's length-T signal maps to an embedding through one
    ReLU layer; ordered pair embeddings are concatenated and squashed
    to a probability by a two-layer MLP, so the resulting matrix is
    generally asymmetric (directed edges).
    """

    extract_w: Tensor  # T x d
    extract_b: Tensor  # d
    pair_w1: Tensor  # 2d x d
    pair_b1: Tensor  # d
    pair_w2: Tensor  # d x 1
    pair_b2: Tensor  # 1

    def parameters(self) -> list:
        return [
            self.extract_w,
            self.extract_b,
            self.pair_w1,
            self.pair_b1,
            self.pair_w2,
            self.pair_b2,
        ]

    @property
    def t_steps(self) -> int:
        return self.extract_w.shape[0]


def edge_probabilities(series: np.ndarray, scorer: EdgeScorer) -> Tensor:
    """Matrix of edge probabilities in (0, 1) for every ordered ROI pair.

    Entry (i, j) scores the directed pair (node i's embedding first),
    differentiable with respect to all scorer parameters.
    """
    series = np.asarray(series, dtype=np.float64)
    n, t = series.shape
    if t != scorer.t_steps:
        raise ValueError(
            f"series has {t} time steps but the scorer expects {scorer.t_steps}"
        )
    signals = Tensor(series)
    embed = ad.relu(ad.add(ad.matmul(signals, scorer.extract_w), scorer.extract_b))
    left = ad.repeat_rows(embed, n)  # row i*n + j holds node i
    right = ad.tile_rows(embed, n)  # row i*n + j holds node j
    pairs = ad.concat(left, right, axis=1)
    hidden = ad.relu(ad.add(ad.matmul(pairs, scorer.pair_w1), scorer.pair_b1))
    raw = ad.add(ad.matmul(hidden, scorer.pair_w2), scorer.pair_b2)
    return ad.reshape(ad.sigmoid(raw), (n, n))


def sample_gumbel_noise(rng: np.random.Generator, n: int) -> tuple:
    """Two independent n-by-n standard Gumbel draws for one forward pass."""
    return rng.gumbel(size=(n, n)), rng.gumbel(size=(n, n))


def gumbel_sample(theta: Tensor, tau: float, noise: tuple) -> Tensor:
    """Relaxed edge sample: sigmoid((log-odds(theta) + g1 - g2) / tau).

    The noise pair is injected explicitly so training can resample per
    pass while tests freeze it; zero noise at tau=1 reproduces theta up
    to float rounding. The diagonal is forced to zero. Gradients flow
    to theta only; the noise enters as a constant.
    """
    if tau <= 0.0:
        raise ValueError(f"temperature must be positive, got {tau}")
    g1, g2 = noise
    n = theta.shape[0]
    if theta.shape != (n, n) or np.shape(g1) != (n, n) or np.shape(g2) != (n, n):
        raise ValueError(
            f"theta and noise must all be ({n}, {n}); got {theta.shape}, "
            f"{np.shape(g1)}, {np.shape(g2)}"
        )
    ones = Tensor(np.ones((n, n)))
    delta = Tensor(np.asarray(g1, dtype=np.float64) - np.asarray(g2, dtype=np.float64))
    log_odds = ad.sub(ad.log(theta), ad.log(ad.sub(ones, theta)))
    relaxed = ad.sigmoid(ad.scale(ad.add(log_odds, delta), 1.0 / tau))
    off_diagonal = Tensor(1.0 - np.eye(n))
    return ad.mul(relaxed, off_diagonal)


def harden(soft: np.ndarray) -> np.ndarray:
    """0/1 adjacency: entries at or above one half become edges. Idempotent."""
    soft = np.asarray(soft, dtype=np.float64)
    return (soft >= 0.5).astype(np.float64)
