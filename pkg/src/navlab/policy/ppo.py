"""Clipped-surrogate policy optimization on flat-parameter nets.

Losses and every gradient here are written out by hand against the
analytic backward pass in net.py; the test suite checks them against
central finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import PolicyNet, log_softmax


class NonFiniteGradient(FloatingPointError):
    """Backward pass produced NaN or inf."""


@dataclass(frozen=True)
class TrainConfig:
    total_env_steps: int = 200_000
    rollout_len: int = 64
    n_workers: int = 8
    discount: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    learning_rate: float = 7e-4
    epochs: int = 2
    minibatches: int = 2
    max_grad_norm: float = 0.5
    wsp_warmup_fraction: float = 0.5
    probe_every: int = 10
    seed: int = 0

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def gae_advantages(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                   discount: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation by the reversed recursion.

    rewards and dones have shape (T,) or (T, B); values carries one extra
    bootstrap row (T+1, ...). dones[t] masks the bootstrap after terminal
    steps. Returns (advantages, returns) with returns = adv + values[:T].
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    T = rewards.shape[0]
    if values.shape[0] != T + 1:
        raise ValueError(f"values must have {T + 1} rows, got {values.shape[0]}")
    adv = np.zeros_like(rewards)
    lastgaelam = np.zeros_like(rewards[0]) if rewards.ndim > 1 else 0.0
    for t in reversed(range(T)):
        nextnonterminal = 1.0 - dones[t]
        delta = rewards[t] + discount * values[t + 1] * nextnonterminal - values[t]
        lastgaelam = delta + discount * lam * nextnonterminal * lastgaelam
        adv[t] = lastgaelam
    return adv, adv + values[:T]


def normalize_advantages(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + eps)


def ppo_loss_and_grad(net: PolicyNet, batch: dict, cfg: TrainConfig):
    """Total loss, flat parameter gradient, and update statistics.

    batch: X (T,B,I), h0 (L,B,H), resets (T,B), actions (T,B) int,
    logp_old (T,B), adv (T,B), returns (T,B). Advantages are consumed as
    constants, so any normalization happens before this call.
    """
    X, h0, resets = batch["X"], batch["h0"], batch["resets"]
    actions, logp_old = batch["actions"], batch["logp_old"]
    adv, returns = batch["adv"], batch["returns"]
    T, B, _ = X.shape
    N = T * B
    logits, values, fwd = net.forward_sequence(X, h0, resets)

    logp = log_softmax(logits)
    probs = np.exp(logp)
    lp_a = np.take_along_axis(logp, actions[..., None], axis=-1)[..., 0]
    ratio = np.exp(lp_a - logp_old)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv
    policy_loss = -np.minimum(surr1, surr2).mean()
    value_err = values - returns
    value_loss = 0.5 * np.mean(value_err ** 2)
    entropy_t = -(probs * logp).sum(axis=-1)
    entropy = entropy_t.mean()
    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy

    # d loss / d logp(a): unclipped branch active iff surr1 <= surr2.
    use_unclipped = (surr1 <= surr2).astype(np.float64)
    g_lp = -(adv * ratio * use_unclipped) / N
    dlogits = g_lp[..., None] * (np.eye(net.cfg.num_actions)[actions] - probs)
    # entropy term: d(-H)/d logits_k = p_k * (log p_k + H)
    dlogits += cfg.entropy_coef * probs * (logp + entropy_t[..., None]) / N
    dvalues = cfg.value_coef * value_err / N

    grad = net.backward_sequence(fwd, dlogits, dvalues)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("non-finite entries in policy gradient")
    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip)),
    }
    return float(loss), grad, stats


class Adam:
    """First-order adaptive update on a flat parameter vector."""

    def __init__(self, num_params: int, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(num_params)
        self.v = np.zeros(num_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def clip_grad_norm(grad: np.ndarray, max_norm: float | None) -> np.ndarray:
    if max_norm is None:
        return grad
    norm = float(np.linalg.norm(grad))
    if norm > max_norm and norm > 0.0:
        grad = grad * (max_norm / norm)
    return grad


def ppo_update(net: PolicyNet, batch: dict, cfg: TrainConfig, adam: Adam,
               rng: np.random.Generator) -> dict:
    """cfg.epochs passes over cfg.minibatches sequence groups; returns mean
    statistics across minibatch updates."""
    B = batch["X"].shape[1]
    n_mb = max(1, min(cfg.minibatches, B))
    agg: dict[str, float] = {}
    count = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(B)
        for chunk in np.array_split(order, n_mb):
            sub = {
                "X": batch["X"][:, chunk],
                "h0": batch["h0"][:, chunk],
                "resets": batch["resets"][:, chunk],
                "actions": batch["actions"][:, chunk],
                "logp_old": batch["logp_old"][:, chunk],
                "adv": batch["adv"][:, chunk],
                "returns": batch["returns"][:, chunk],
            }
            _, grad, stats = ppo_loss_and_grad(net, sub, cfg)
            adam.step(net.params, clip_grad_norm(grad, cfg.max_grad_norm))
            for k, val in stats.items():
                agg[k] = agg.get(k, 0.0) + val
            count += 1
    return {k: val / count for k, val in agg.items()}
