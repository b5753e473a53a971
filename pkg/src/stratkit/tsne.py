"""Exact (dense) t-SNE for reducing embeddings before clustering.

Plain O(N^2) formulation: per-row precision calibrated by binary search on
the conditional entropy, symmetrized joint P floored at 1e-12, Student-t Q,
and momentum gradient descent with early exaggeration and the usual
per-coordinate adaptive gains (reset, like the velocity, when exaggeration
lifts; without them the fixed step size rings around the optimum in the
late phase). No tree approximation; intended for desk-scale N.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRow, PerplexityTooLarge
from .seeding import rng_for

P_FLOOR = 1e-12
GAIN_FLOOR = 0.01
GAIN_CAP = 4.0


@dataclass
class TsneConfig:
    out_dims: int = 2
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    momentum_switch_iter: int = 250
    seed: int = 0


@dataclass
class TsneResult:
    layout: np.ndarray  # (N, out_dims)
    kl_curve: list = field(default_factory=list)  # KL(P||Q) per iteration, true P

    @property
    def kl_initial(self):
        return self.kl_curve[0]

    @property
    def kl_final(self):
        return self.kl_curve[-1]


def _entropy_and_probs(d_row, beta):
    shifted = d_row - d_row.min()  # invariant shift for exp stability
    p = np.exp(-shifted * beta)
    total = p.sum()
    h = np.log(total) + beta * float((shifted * p).sum()) / total
    return h, p / total


def perplexity_calibrate(distances_row, perplexity, tol=1e-5, max_steps=50):
    """Binary-search the precision beta so the conditional distribution's
    entropy matches log(perplexity). distances_row holds squared distances
    to every other point."""
    d_row = np.asarray(distances_row, dtype=float)
    if np.all(d_row == 0.0):
        raise DegenerateRow("all pairwise distances are zero")
    target = np.log(perplexity)
    beta = 1.0
    beta_min, beta_max = -np.inf, np.inf
    h, _ = _entropy_and_probs(d_row, beta)
    for _ in range(max_steps):
        if abs(h - target) <= tol:
            break
        if h > target:  # distribution too flat: sharpen
            beta_min = beta
            beta = beta * 2.0 if beta_max == np.inf else 0.5 * (beta + beta_max)
        else:
            beta_max = beta
            beta = beta / 2.0 if beta_min == -np.inf else 0.5 * (beta + beta_min)
        h, _ = _entropy_and_probs(d_row, beta)
    return beta


def _joint_probabilities(x, perplexity):
    n = x.shape[0]
    sq = (x * x).sum(axis=1)
    d2 = np.maximum(sq[:, None] - 2.0 * x @ x.T + sq[None, :], 0.0)
    cond = np.zeros((n, n))
    for i in range(n):
        row = np.delete(d2[i], i)
        beta = perplexity_calibrate(row, perplexity)
        _, p = _entropy_and_probs(row, beta)
        cond[i, np.arange(n) != i] = p
    p_joint = (cond + cond.T) / (2.0 * n)
    return np.maximum(p_joint, P_FLOOR)


def _q_matrix(y):
    sq = (y * y).sum(axis=1)
    num = 1.0 / (1.0 + np.maximum(sq[:, None] - 2.0 * y @ y.T + sq[None, :], 0.0))
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    return np.maximum(q, P_FLOOR), num


def kl_divergence(p, q):
    mask = ~np.eye(p.shape[0], dtype=bool)
    return float((p[mask] * np.log(p[mask] / q[mask])).sum())


def tsne_fit(embeddings, config: TsneConfig | None = None) -> TsneResult:
    """Gradient descent on KL(P||Q) with momentum and early exaggeration.

    The KL curve is tracked against the un-exaggerated P at every iteration.
    """
    config = config or TsneConfig()
    x = np.asarray(embeddings, dtype=float)
    n = x.shape[0]
    if n < 4:
        raise PerplexityTooLarge(f"need at least 4 points, got {n}")
    if not 1 <= config.perplexity < (n - 1) / 3:
        raise PerplexityTooLarge(
            f"perplexity {config.perplexity} outside [1, {(n - 1) / 3}) for N={n}"
        )

    p = _joint_probabilities(x, config.perplexity)
    rng = rng_for(config.seed, "tsne-init")
    y = rng.normal(0.0, 1e-4, size=(n, config.out_dims))
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)
    kl_curve = []

    for it in range(config.iterations):
        if it == config.exaggeration_iters:
            # fresh optimizer state for the un-exaggerated objective
            velocity = np.zeros_like(y)
            gains = np.ones_like(y)
        exaggerate = it < config.exaggeration_iters
        q, num = _q_matrix(y)
        kl_curve.append(kl_divergence(p, q))

        p_eff = p * config.early_exaggeration if exaggerate else p
        pq = (p_eff - q) * num
        grad = 4.0 * (pq.sum(axis=1)[:, None] * y - pq @ y)

        gains = np.clip(
            np.where(np.sign(grad) != np.sign(velocity), gains + 0.2, gains * 0.8),
            GAIN_FLOOR,
            GAIN_CAP,
        )
        momentum = (
            config.momentum_early if it < config.momentum_switch_iter else config.momentum_late
        )
        velocity = momentum * velocity - config.learning_rate * (gains * grad)
        y = y + velocity
        y = y - y.mean(axis=0)

    q, _ = _q_matrix(y)
    kl_curve.append(kl_divergence(p, q))
    if not np.isfinite(y).all():
        raise DegenerateRow("non-finite t-SNE layout")
    return TsneResult(layout=y, kl_curve=kl_curve)
