"""Central finite-difference verification of the analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .neural import Example, ModelParams, gradients, init_params, joint_loss


@dataclass
class GradCheckResult:
    seed: int
    checked: int = 0
    worst_rel: float = 0.0
    failures: list = field(default_factory=list)  # (name, index, analytic, numeric)

    @property
    def ok(self) -> bool:
        return not self.failures


def numeric_gradient(loss_fn, arr: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central differences of ``loss_fn()`` w.r.t. every entry of ``arr`` (perturbed in place)."""
    out = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + step
        up = loss_fn()
        arr[idx] = orig - step
        down = loss_fn()
        arr[idx] = orig
        out[idx] = (up - down) / (2 * step)
    return out


def random_batches(rng: np.random.Generator, vocab_size: int, k_gold: int, k_proj: int,
                   n_gold: int = 3, n_proj: int = 3, max_len: int = 6):
    """Random gold examples plus projected examples mixing hard and soft labels."""
    gold, proj = [], []
    for _ in range(n_gold):
        T = int(rng.integers(1, max_len + 1))
        Y = np.zeros((T, k_gold))
        Y[np.arange(T), rng.integers(0, k_gold, T)] = 1.0
        gold.append(Example(rng.integers(0, vocab_size, T), Y, "gold"))
    for _ in range(n_proj):
        T = int(rng.integers(1, max_len + 1))
        Y = np.zeros((T, k_proj))
        for t in range(T):
            if rng.random() < 0.5:
                Y[t, rng.integers(0, k_proj)] = 1.0
            else:
                Y[t] = rng.dirichlet(np.ones(k_proj))
        proj.append(Example(rng.integers(0, vocab_size, T), Y, "bias"))
    return gold, proj


def check_gradients(params: ModelParams, gold_batch, proj_batch, step: float = 1e-4,
                    rtol: float = 1e-4, atol: float = 1e-7, seed: int = -1) -> GradCheckResult:
    grads = gradients(params, gold_batch, proj_batch)
    result = GradCheckResult(seed)

    def loss():
        return joint_loss(params, gold_batch, proj_batch)

    for name, arr in params.named_arrays():
        analytic = grads.dense(name)
        numeric = numeric_gradient(loss, arr, step)
        diff = np.abs(analytic - numeric)
        scale = np.maximum(np.abs(analytic), np.abs(numeric))
        rel = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), 0.0)
        bad = (diff > atol) & (rel > rtol)
        result.checked += arr.size
        considered = rel[scale > atol]
        if considered.size:
            result.worst_rel = max(result.worst_rel, float(considered.max()))
        for idx in zip(*np.nonzero(bad)):
            result.failures.append((name, idx, float(analytic[idx]), float(numeric[idx])))
    return result


def run_gradcheck(seeds=range(10), k_gold: int = 3, k_proj: int = 3, emb_dim: int = 4,
                  hidden_dim: int = 4, vocab_size: int = 8, step: float = 1e-4,
                  rtol: float = 1e-4, atol: float = 1e-7) -> list[GradCheckResult]:
    """Check gradients on one small random model and batch per seed.

    Weights are drawn wider than the training initialisation and ``A`` gets a
    random perturbation so that every gate and both heads are exercised away
    from their symmetric starting point.
    """
    results = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        params = init_params(emb_dim, hidden_dim, vocab_size, k_gold, k_proj,
                             seed=seed, init_range=0.5)
        params.A += rng.normal(scale=0.5, size=params.A.shape)
        gold, proj = random_batches(rng, vocab_size, k_gold, k_proj)
        results.append(check_gradients(params, gold, proj, step, rtol, atol, seed))
    return results
