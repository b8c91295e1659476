"""Trainable scorers mapping sparse sample features to per-item logits.

Three architectures, each with exact hand-derived backprop:

* :class:`FreeParamModel` - one free parameter per item, features ignored
  (stateless estimation of PL utilities).
* :class:`LinearModel`   - a single sparse-input linear layer.
* :class:`MlpModel`      - two fully connected layers with ReLU in between
  (subgradient 0 at the kink).

A model exposes ``params()`` (the arrays an optimizer updates in place),
``forward(feat_idx, feat_val)`` returning logits, and
``backward(feat_idx, feat_val, upstream)`` returning gradients aligned with
``params()``.  Checkpoints are ``.npz`` archives carrying the arrays plus a
JSON metadata blob (model kind, shapes, seed, config).
"""

from __future__ import annotations

import json

import numpy as np

_EMPTY_IDX = np.empty(0, dtype=np.int64)
_EMPTY_VAL = np.empty(0, dtype=np.float64)


class IndexOutOfRangeError(IndexError):
    """A feature index is outside the model's input dimension."""


def _check_features(feat_idx: np.ndarray, d_in: int):
    if feat_idx.size and (feat_idx.min() < 0 or feat_idx.max() >= d_in):
        raise IndexOutOfRangeError(f"feature index outside [0, {d_in})")


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class FreeParamModel:
    """One logit per item; the forward pass ignores features."""

    kind = "free"

    def __init__(self, n_items: int, init: np.ndarray | None = None):
        self.n_items = n_items
        self.theta = np.zeros(n_items) if init is None else np.asarray(init, float).copy()

    def params(self):
        return [self.theta]

    def forward(self, feat_idx=_EMPTY_IDX, feat_val=_EMPTY_VAL) -> np.ndarray:
        return self.theta

    def backward(self, feat_idx, feat_val, upstream: np.ndarray):
        return [np.asarray(upstream, float)]

    def clone(self):
        return FreeParamModel(self.n_items, init=self.theta)

    def meta(self):
        return {"n_items": self.n_items}


class LinearModel:
    """logits = x @ W + b over sparse features x."""

    kind = "linear"

    def __init__(self, d_in: int, n_items: int, rng: np.random.Generator | None = None):
        self.d_in = d_in
        self.n_items = n_items
        rng = rng or np.random.default_rng(0)
        self.weight = glorot_uniform(rng, d_in, n_items)
        self.bias = np.zeros(n_items)

    def params(self):
        return [self.weight, self.bias]

    def forward(self, feat_idx, feat_val) -> np.ndarray:
        _check_features(feat_idx, self.d_in)
        return feat_val @ self.weight[feat_idx] + self.bias

    def backward(self, feat_idx, feat_val, upstream: np.ndarray):
        g_w = np.zeros_like(self.weight)
        g_w[feat_idx] = np.outer(feat_val, upstream)
        return [g_w, np.asarray(upstream, float)]

    def clone(self):
        other = LinearModel.__new__(LinearModel)
        other.d_in, other.n_items = self.d_in, self.n_items
        other.weight = self.weight.copy()
        other.bias = self.bias.copy()
        return other

    def meta(self):
        return {"d_in": self.d_in, "n_items": self.n_items}


class MlpModel:
    """Two dense layers with ReLU, hidden width 256 by default."""

    kind = "mlp"

    def __init__(self, d_in: int, n_items: int, hidden: int = 256,
                 rng: np.random.Generator | None = None):
        self.d_in, self.n_items, self.hidden = d_in, n_items, hidden
        rng = rng or np.random.default_rng(0)
        self.w1 = glorot_uniform(rng, d_in, hidden)
        self.b1 = np.zeros(hidden)
        self.w2 = glorot_uniform(rng, hidden, n_items)
        self.b2 = np.zeros(n_items)

    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def _hidden_pre(self, feat_idx, feat_val):
        _check_features(feat_idx, self.d_in)
        return feat_val @ self.w1[feat_idx] + self.b1

    def forward(self, feat_idx, feat_val) -> np.ndarray:
        return np.maximum(self._hidden_pre(feat_idx, feat_val), 0.0) @ self.w2 + self.b2

    def backward(self, feat_idx, feat_val, upstream: np.ndarray):
        z1 = self._hidden_pre(feat_idx, feat_val)
        h = np.maximum(z1, 0.0)
        g_w2 = np.outer(h, upstream)
        g_b2 = np.asarray(upstream, float)
        g_h = self.w2 @ upstream
        g_z1 = np.where(z1 > 0.0, g_h, 0.0)
        g_w1 = np.zeros_like(self.w1)
        g_w1[feat_idx] = np.outer(feat_val, g_z1)
        return [g_w1, g_z1, g_w2, g_b2]

    def clone(self):
        other = MlpModel.__new__(MlpModel)
        other.d_in, other.n_items, other.hidden = self.d_in, self.n_items, self.hidden
        other.w1, other.b1 = self.w1.copy(), self.b1.copy()
        other.w2, other.b2 = self.w2.copy(), self.b2.copy()
        return other

    def meta(self):
        return {"d_in": self.d_in, "n_items": self.n_items, "hidden": self.hidden}


def accumulate_backward(model, feat_idx, feat_val, upstream, grads: list[np.ndarray]):
    """Add one sample's parameter gradients into pre-allocated buffers.

    Touches only the feature rows the sample activates, so a minibatch over a
    wide sparse input never materializes per-sample dense weight gradients.
    """
    upstream = np.asarray(upstream, float)
    if isinstance(model, FreeParamModel):
        grads[0] += upstream
    elif isinstance(model, LinearModel):
        _check_features(feat_idx, model.d_in)
        grads[0][feat_idx] += np.outer(feat_val, upstream)
        grads[1] += upstream
    elif isinstance(model, MlpModel):
        z1 = model._hidden_pre(feat_idx, feat_val)
        h = np.maximum(z1, 0.0)
        grads[2] += np.outer(h, upstream)
        grads[3] += upstream
        g_z1 = np.where(z1 > 0.0, model.w2 @ upstream, 0.0)
        grads[0][feat_idx] += np.outer(feat_val, g_z1)
        grads[1] += g_z1
    else:
        for buf, g in zip(grads, model.backward(feat_idx, feat_val, upstream)):
            buf += g


def forward(model, feat_idx=_EMPTY_IDX, feat_val=_EMPTY_VAL) -> np.ndarray:
    """Per-item logits for one sample's sparse features."""
    return model.forward(np.asarray(feat_idx, np.int64), np.asarray(feat_val, float))


def backward(model, feat_idx, feat_val, upstream) -> list[np.ndarray]:
    """Parameter gradients for one sample, aligned with ``model.params()``."""
    return model.backward(np.asarray(feat_idx, np.int64), np.asarray(feat_val, float),
                          np.asarray(upstream, float))


_MODEL_KINDS = {cls.kind: cls for cls in (FreeParamModel, LinearModel, MlpModel)}


def save_checkpoint(path, model, config: dict | None = None, seed: int | None = None):
    """Write a self-describing .npz checkpoint (arrays + JSON metadata)."""
    meta = {"kind": model.kind, "meta": model.meta(),
            "config": config or {}, "seed": seed}
    arrays = {f"param_{k}": p for k, p in enumerate(model.params())}
    np.savez(path, _meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
             **arrays)


def load_checkpoint(path):
    """Recreate (model, metadata) from :func:`save_checkpoint` output."""
    with np.load(path) as archive:
        meta = json.loads(bytes(archive["_meta"]).decode())
        arrays = [archive[f"param_{k}"] for k in range(len(archive.files) - 1)]
    kind = meta["kind"]
    if kind not in _MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    info = meta["meta"]
    if kind == "free":
        model = FreeParamModel(info["n_items"])
    elif kind == "linear":
        model = LinearModel(info["d_in"], info["n_items"])
    else:
        model = MlpModel(info["d_in"], info["n_items"], hidden=info["hidden"])
    for target, loaded in zip(model.params(), arrays):
        if target.shape != loaded.shape:
            raise ValueError("checkpoint shapes do not match the declared model")
        target[...] = loaded
    return model, meta
