"""Recurrent actor-critic with hand-written analytic gradients.

Architecture: affine encoder + tanh, a stack of GRU layers, linear actor
and critic heads. Per layer, with sigma the logistic function and gate
pre-activations split [r | z | n]:

    r = sigma(W_ir x + b_ir + W_hr h + b_hr)
    z = sigma(W_iz x + b_iz + W_hz h + b_hz)
    n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
    h' = (1 - z) * n + z * h

All parameters live in one flat float64 vector; forward passes cache the
intermediates needed for exact backpropagation through time, which the
finite-difference suite checks end to end. No autodiff anywhere.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeMismatch(ValueError):
    """Input does not match the configured feature width."""


class NonFiniteActivation(FloatingPointError):
    """Forward pass produced NaN or inf."""


@dataclass(frozen=True)
class PolicyNetConfig:
    input_dim: int = 138
    encoder_dim: int = 64
    hidden_dim: int = 128
    num_layers: int = 2
    num_actions: int = 4

    def to_json(self) -> dict:
        return {"input_dim": self.input_dim, "encoder_dim": self.encoder_dim,
                "hidden_dim": self.hidden_dim, "num_layers": self.num_layers,
                "num_actions": self.num_actions}

    @classmethod
    def from_json(cls, obj: dict) -> "PolicyNetConfig":
        return cls(**{k: int(v) for k, v in obj.items()})


def _param_shapes(cfg: PolicyNetConfig) -> list[tuple[str, tuple[int, ...]]]:
    shapes = [("enc_W", (cfg.encoder_dim, cfg.input_dim)), ("enc_b", (cfg.encoder_dim,))]
    in_dim = cfg.encoder_dim
    for layer in range(cfg.num_layers):
        h = cfg.hidden_dim
        shapes += [
            (f"Wi{layer}", (3 * h, in_dim)),
            (f"Wh{layer}", (3 * h, h)),
            (f"bi{layer}", (3 * h,)),
            (f"bh{layer}", (3 * h,)),
        ]
        in_dim = h
    shapes += [
        ("actor_W", (cfg.num_actions, cfg.hidden_dim)),
        ("actor_b", (cfg.num_actions,)),
        ("critic_W", (cfg.hidden_dim,)),
        ("critic_b", (1,)),
    ]
    return shapes


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class PolicyNet:
    def __init__(self, cfg: PolicyNetConfig, params: np.ndarray):
        self.cfg = cfg
        self.shapes = _param_shapes(cfg)
        expected = sum(int(np.prod(s)) for _, s in self.shapes)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (expected,):
            raise ShapeMismatch(f"flat params {params.shape}, want ({expected},)")
        self.params = params
        self.views: dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in self.shapes:
            size = int(np.prod(shape))
            self.views[name] = self.params[offset:offset + size].reshape(shape)
            offset += size

    @property
    def num_params(self) -> int:
        return self.params.size

    @classmethod
    def init(cls, cfg: PolicyNetConfig, seed: int) -> "PolicyNet":
        """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) per tensor."""
        rng = np.random.default_rng(seed)
        chunks = []
        for name, shape in _param_shapes(cfg):
            if name.startswith("enc"):
                fan = cfg.input_dim
            elif name.startswith(("Wi", "Wh", "bi", "bh")):
                fan = cfg.hidden_dim
            else:
                fan = cfg.hidden_dim
            bound = 1.0 / np.sqrt(fan)
            chunks.append(rng.uniform(-bound, bound, size=int(np.prod(shape))))
        return cls(cfg, np.concatenate(chunks))

    def set_params(self, flat: np.ndarray) -> None:
        self.params[:] = np.asarray(flat, dtype=np.float64)

    def zero_hidden(self, batch: int) -> np.ndarray:
        return np.zeros((self.cfg.num_layers, batch, self.cfg.hidden_dim))

    def _grad_template(self) -> dict[str, np.ndarray]:
        return {name: np.zeros(shape) for name, shape in self.shapes}

    def _flatten_grads(self, grads: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([grads[name].reshape(-1) for name, _ in self.shapes])

    def _cell_forward(self, layer: int, x: np.ndarray, h: np.ndarray):
        v = self.views
        hdim = self.cfg.hidden_dim
        gi = x @ v[f"Wi{layer}"].T + v[f"bi{layer}"]
        gh = h @ v[f"Wh{layer}"].T + v[f"bh{layer}"]
        r = _sigmoid(gi[:, :hdim] + gh[:, :hdim])
        z = _sigmoid(gi[:, hdim:2 * hdim] + gh[:, hdim:2 * hdim])
        q = gh[:, 2 * hdim:]
        n = np.tanh(gi[:, 2 * hdim:] + r * q)
        h_new = (1.0 - z) * n + z * h
        return h_new, (x, h, r, z, n, q)

    def _cell_backward(self, layer: int, cache, dh: np.ndarray,
                       grads: dict[str, np.ndarray]):
        x, h_prev, r, z, n, q = cache
        v = self.views
        dn = dh * (1.0 - z)
        dz = dh * (h_prev - n)
        dh_prev = dh * z
        da_n = dn * (1.0 - n * n)
        dr = da_n * q
        da_r = dr * r * (1.0 - r)
        da_z = dz * z * (1.0 - z)
        dgi = np.concatenate([da_r, da_z, da_n], axis=1)
        dgh = np.concatenate([da_r, da_z, da_n * r], axis=1)
        grads[f"Wi{layer}"] += dgi.T @ x
        grads[f"Wh{layer}"] += dgh.T @ h_prev
        grads[f"bi{layer}"] += dgi.sum(axis=0)
        grads[f"bh{layer}"] += dgh.sum(axis=0)
        dx = dgi @ v[f"Wi{layer}"]
        dh_prev = dh_prev + dgh @ v[f"Wh{layer}"]
        return dx, dh_prev

    def step(self, x: np.ndarray, hidden: np.ndarray):
        """Single acting step; batch of rows in x, no cache kept."""
        v = self.views
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.cfg.input_dim:
            raise ShapeMismatch(f"input width {x.shape[1]}, want {self.cfg.input_dim}")
        e = np.tanh(x @ v["enc_W"].T + v["enc_b"])
        h_new = np.empty_like(hidden)
        layer_in = e
        for layer in range(self.cfg.num_layers):
            layer_out, _ = self._cell_forward(layer, layer_in, hidden[layer])
            h_new[layer] = layer_out
            layer_in = layer_out
        logits = layer_in @ v["actor_W"].T + v["actor_b"]
        value = layer_in @ v["critic_W"] + v["critic_b"][0]
        if not (np.all(np.isfinite(logits)) and np.all(np.isfinite(value))):
            raise NonFiniteActivation("non-finite logits or value")
        return logits, value, h_new

    def forward_sequence(self, X: np.ndarray, h0: np.ndarray, resets: np.ndarray):
        """Forward a (T, B, input_dim) segment.

        resets[t] == 1 zeroes the hidden state before consuming step t,
        which truncates gradient flow across episode boundaries.
        """
        v = self.views
        T, B, width = X.shape
        if width != self.cfg.input_dim:
            raise ShapeMismatch(f"input width {width}, want {self.cfg.input_dim}")
        E = np.tanh(X @ v["enc_W"].T + v["enc_b"])
        h = h0.copy()
        caches = []
        logits = np.empty((T, B, self.cfg.num_actions))
        values = np.empty((T, B))
        outs = np.empty((T, B, self.cfg.hidden_dim))
        for t in range(T):
            keep = (1.0 - resets[t])[:, None]
            layer_in = E[t]
            step_cache = []
            for layer in range(self.cfg.num_layers):
                h_in = h[layer] * keep
                h_out, cache = self._cell_forward(layer, layer_in, h_in)
                step_cache.append(cache)
                h[layer] = h_out
                layer_in = h_out
            caches.append(step_cache)
            outs[t] = layer_in
            logits[t] = layer_in @ v["actor_W"].T + v["actor_b"]
            values[t] = layer_in @ v["critic_W"] + v["critic_b"][0]
        if not (np.all(np.isfinite(logits)) and np.all(np.isfinite(values))):
            raise NonFiniteActivation("non-finite activations in sequence forward")
        return logits, values, {"X": X, "E": E, "caches": caches, "outs": outs,
                                "resets": resets, "h_last": h}

    def backward_sequence(self, fwd: dict, dlogits: np.ndarray,
                          dvalues: np.ndarray) -> np.ndarray:
        """Exact BPTT for the cached segment; returns the flat gradient."""
        v = self.views
        X, E, caches, outs, resets = (fwd["X"], fwd["E"], fwd["caches"],
                                      fwd["outs"], fwd["resets"])
        T, B, _ = X.shape
        grads = self._grad_template()
        dh_carry = [np.zeros((B, self.cfg.hidden_dim))
                    for _ in range(self.cfg.num_layers)]
        dE = np.zeros_like(E)
        for t in reversed(range(T)):
            top = outs[t]
            grads["actor_W"] += dlogits[t].T @ top
            grads["actor_b"] += dlogits[t].sum(axis=0)
            grads["critic_W"] += dvalues[t] @ top
            grads["critic_b"][0] += dvalues[t].sum()
            d_from_heads = dlogits[t] @ v["actor_W"] + dvalues[t][:, None] * v["critic_W"][None, :]
            d_above = d_from_heads
            keep = (1.0 - resets[t])[:, None]
            for layer in reversed(range(self.cfg.num_layers)):
                dh = d_above + dh_carry[layer]
                dx, dh_prev = self._cell_backward(layer, caches[t][layer], dh, grads)
                dh_carry[layer] = dh_prev * keep
                d_above = dx
            dE[t] = d_above
        dE_pre = dE * (1.0 - E * E)
        flatE = dE_pre.reshape(-1, self.cfg.encoder_dim)
        flatX = X.reshape(-1, self.cfg.input_dim)
        grads["enc_W"] += flatE.T @ flatX
        grads["enc_b"] += flatE.sum(axis=0)
        return self._flatten_grads(grads)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def policy_step(net: PolicyNet, feats, hidden: np.ndarray):
    """One executor step: action distribution, value, new hidden state."""
    x = feats.fused() if hasattr(feats, "fused") else np.asarray(feats, dtype=float)
    logits, value, h_new = net.step(x[None, :] if x.ndim == 1 else x, hidden)
    probs = softmax(logits[0])
    return probs, float(value[0]), h_new
