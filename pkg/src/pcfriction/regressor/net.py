"""PointNet-style regressor: shared per-point MLP, max-pool, dense head.

All parameters live in one flat vector. The layout, in order, is::

    for each encoder layer i (in_i -> out_i):
        W  (in_i * out_i, row-major [in, out])
        b  (out_i)
        gamma, beta (out_i each)      # only when batch_norm is on
    for each head layer j (in_j -> out_j):
        W  (in_j * out_j)
        b  (out_j)

Running batch-norm statistics are kept outside the parameter vector, one
``(mean, var)`` pair per encoder layer.

A batch is a list of clouds of varying length. Points of all clouds are
stacked into one ``(P, 3)`` array and each cloud is pooled over its own
row segment, so a batch of B clouds yields B predictions.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence, Tuple

import numpy as np

from ..errors import ArgumentError, ContractError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
NORMALIZED_TOL = 1e-9


@dataclass(frozen=True)
class NetConfig:
    encoder_widths: Tuple[int, ...] = (3, 64, 128, 1024)
    head_widths: Tuple[int, ...] = (1024, 512, 256, 1)
    target_scale: float = 1e5
    threshold: Tuple[float, float] = (0.025, 0.25)
    batch_norm: bool = True
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        object.__setattr__(self, "head_widths", tuple(int(w) for w in self.head_widths))
        object.__setattr__(self, "threshold", tuple(float(t) for t in self.threshold))
        enc, head = self.encoder_widths, self.head_widths
        if len(enc) < 2 or enc[0] != 3:
            raise ArgumentError("encoder must start at width 3 and have at least one layer")
        if len(head) < 2 or head[-1] != 1:
            raise ArgumentError("head must end at width 1 and have at least one layer")
        if head[0] != enc[-1]:
            raise ArgumentError("head input width must equal encoder output width")
        if min(enc + head) < 1:
            raise ArgumentError("all widths must be >= 1")
        lo, hi = self.threshold
        if not lo < hi:
            raise ArgumentError("threshold lo must be below hi")
        if not self.target_scale > 0:
            raise ArgumentError("target_scale must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ArgumentError("dtype must be float32 or float64")

    def to_dict(self):
        d = asdict(self)
        d["encoder_widths"] = list(self.encoder_widths)
        d["head_widths"] = list(self.head_widths)
        d["threshold"] = list(self.threshold)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _layout(config: NetConfig):
    """Return a list of ``(kind, layer, name, offset, shape)`` slots."""
    slots = []
    off = 0

    def add(kind, layer, name, shape):
        nonlocal off
        size = int(np.prod(shape))
        slots.append((kind, layer, name, off, shape))
        off += size

    enc = config.encoder_widths
    for i in range(len(enc) - 1):
        add("enc", i, "W", (enc[i], enc[i + 1]))
        add("enc", i, "b", (enc[i + 1],))
        if config.batch_norm:
            add("enc", i, "gamma", (enc[i + 1],))
            add("enc", i, "beta", (enc[i + 1],))
    head = config.head_widths
    for j in range(len(head) - 1):
        add("head", j, "W", (head[j], head[j + 1]))
        add("head", j, "b", (head[j + 1],))
    return slots, off


def parameter_count(config: NetConfig) -> int:
    return _layout(config)[1]


class RegressionNet:
    """Weights, normalization statistics and optimizer state of one network."""

    def __init__(self, config: NetConfig, params=None, norm_stats=None,
                 step_count=0, adam_m=None, adam_v=None):
        self.config = config
        self.dtype = np.dtype(config.dtype)
        self._slots, self.n_params = _layout(config)
        if params is None:
            params = self._initial_params()
        params = np.ascontiguousarray(params, dtype=self.dtype)
        if params.shape != (self.n_params,):
            raise ContractError(
                f"parameter vector has {params.size} entries, config needs {self.n_params}")
        self.params = params
        if norm_stats is None:
            norm_stats = [(np.zeros(w, self.dtype), np.ones(w, self.dtype))
                          for w in config.encoder_widths[1:]]
        self.norm_stats = [(np.asarray(m, self.dtype).copy(), np.asarray(v, self.dtype).copy())
                           for m, v in norm_stats]
        self.step_count = int(step_count)
        self.adam_m = np.zeros_like(params) if adam_m is None else np.asarray(adam_m, self.dtype).copy()
        self.adam_v = np.zeros_like(params) if adam_v is None else np.asarray(adam_v, self.dtype).copy()

    def _initial_params(self):
        # He-normal weights, zero biases, unit gamma, zero beta
        rng = np.random.default_rng(self.config.seed)
        p = np.zeros(self.n_params, dtype=np.float64)
        for kind, layer, name, off, shape in self._slots:
            size = int(np.prod(shape))
            if name == "W":
                p[off:off + size] = rng.normal(0.0, np.sqrt(2.0 / shape[0]), size)
            elif name == "gamma":
                p[off:off + size] = 1.0
        return p.astype(self.dtype)

    def views(self, vector=None):
        """Named views into ``vector`` (default: the parameters).

        Returns ``(encoder, head)``: lists of dicts keyed by W, b and, for
        the encoder with batch norm on, gamma and beta.
        """
        vector = self.params if vector is None else vector
        enc = [dict() for _ in range(len(self.config.encoder_widths) - 1)]
        head = [dict() for _ in range(len(self.config.head_widths) - 1)]
        for kind, layer, name, off, shape in self._slots:
            size = int(np.prod(shape))
            target = enc if kind == "enc" else head
            target[layer][name] = vector[off:off + size].reshape(shape)
        return enc, head

    def copy(self):
        return RegressionNet(self.config, self.params.copy(), self.norm_stats,
                             self.step_count, self.adam_m, self.adam_v)


def _segments(clouds):
    lengths = np.array([len(c) for c in clouds], dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    return lengths, starts


def stack_batch(clouds: Sequence, check_normalized=True):
    """Stack a list of clouds (arrays or PointClouds) into one point array."""
    if len(clouds) == 0:
        raise ArgumentError("empty batch")
    arrays = []
    for c in clouds:
        xyz = np.asarray(getattr(c, "xyz", c), dtype=np.float64).reshape(-1, 3)
        if xyz.shape[0] == 0:
            raise ArgumentError("cannot run the network on an empty cloud")
        if check_normalized and np.max(np.abs(xyz.min(axis=0))) > NORMALIZED_TOL:
            raise ContractError("cloud is not zero-origin normalized")
        arrays.append(xyz)
    lengths, starts = _segments(arrays)
    return np.concatenate(arrays, axis=0), lengths, starts


def forward_batch(net: RegressionNet, clouds, mode="eval", params=None,
                  return_cache=False):
    """Run the network over a batch of clouds.

    Returns an array of B scaled outputs. In ``train`` mode batch norm
    uses statistics over all points in the batch; the running statistics
    are *not* updated here (see :func:`batch_statistics`).
    """
    if mode not in ("train", "eval"):
        raise ArgumentError(f"unknown mode {mode!r}")
    X, lengths, starts = stack_batch(clouds)
    dt = net.dtype
    enc, head = net.views(net.params if params is None else params)
    cache = {"lengths": lengths, "starts": starts, "enc": [], "head": []}
    h = X.astype(dt)
    for i, layer in enumerate(enc):
        z = h @ layer["W"] + layer["b"]
        entry = {"in": h}
        if net.config.batch_norm:
            if mode == "train":
                mu = z.mean(axis=0)
                var = z.var(axis=0)
            else:
                mu, var = net.norm_stats[i]
            inv_std = 1.0 / np.sqrt(var + dt.type(BN_EPS))
            zhat = (z - mu) * inv_std
            y = zhat * layer["gamma"] + layer["beta"]
            entry.update(zhat=zhat, inv_std=inv_std, mu=mu, var=var)
        else:
            y = z
        h = np.maximum(y, 0)
        entry["out"] = h
        cache["enc"].append(entry)
    g = np.maximum.reduceat(h, starts, axis=0)
    cache["pooled"] = g
    a = g
    for j, layer in enumerate(head):
        entry = {"in": a}
        a = a @ layer["W"] + layer["b"]
        if j < len(head) - 1:
            a = np.maximum(a, 0)
        entry["out"] = a
        cache["head"].append(entry)
    out = a[:, 0]
    if return_cache:
        return out, cache
    return out


def forward(net: RegressionNet, cloud, mode="eval"):
    """Scaled output for a single normalized cloud."""
    return float(forward_batch(net, [cloud], mode=mode)[0])


def loss_l1(pred, target_n, scale):
    """Mean absolute error between scaled predictions and ``target_n * scale``."""
    if not scale > 0:
        raise ArgumentError("scale must be positive")
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target_n, dtype=np.float64) * scale
    return float(np.mean(np.abs(pred - target)))


def backward(net: RegressionNet, clouds, targets_n, params=None, return_stats=False):
    """Gradient of the mean L1 loss with respect to every parameter.

    Uses train-mode batch statistics. The L1 kink gets subgradient 0, so
    a sample predicted exactly contributes nothing. Returns
    ``(loss, grad)`` with ``grad`` laid out like ``net.params``; with
    ``return_stats`` the batch-norm statistics of the pass are appended.
    """
    targets = np.asarray(targets_n, dtype=np.float64) * net.config.target_scale
    pred, cache = forward_batch(net, clouds, mode="train", params=params, return_cache=True)
    B = pred.shape[0]
    diff = pred.astype(np.float64) - targets
    loss = float(np.mean(np.abs(diff)))
    dt = net.dtype

    grad = np.zeros(net.n_params, dtype=dt)
    genc, ghead = net.views(grad)
    enc, head = net.views(net.params if params is None else params)

    da = (np.sign(diff) / B).astype(dt)[:, None]
    for j in range(len(head) - 1, -1, -1):
        entry = cache["head"][j]
        if j < len(head) - 1:
            da = da * (entry["out"] > 0)
        ghead[j]["W"][...] = entry["in"].T @ da
        ghead[j]["b"][...] = da.sum(axis=0)
        da = da @ head[j]["W"].T

    # route pooled gradient to the first point attaining each maximum
    h_last = cache["enc"][-1]["out"]
    dh = np.zeros_like(h_last)
    cols = np.arange(h_last.shape[1])
    for s, (start, length) in enumerate(zip(cache["starts"], cache["lengths"])):
        seg = h_last[start:start + length]
        arg = np.argmax(seg, axis=0)
        dh[start + arg, cols] += da[s]

    for i in range(len(enc) - 1, -1, -1):
        entry = cache["enc"][i]
        dy = dh * (entry["out"] > 0)
        if net.config.batch_norm:
            genc[i]["gamma"][...] = (dy * entry["zhat"]).sum(axis=0)
            genc[i]["beta"][...] = dy.sum(axis=0)
            dzhat = dy * enc[i]["gamma"]
            P = dzhat.shape[0]
            dz = (entry["inv_std"] / P) * (
                P * dzhat - dzhat.sum(axis=0) - entry["zhat"] * (dzhat * entry["zhat"]).sum(axis=0))
        else:
            dz = dy
        genc[i]["W"][...] = entry["in"].T @ dz
        # batch normalization subtracts the batch mean, so a preceding bias
        # has no effect in train mode; its sum here would only be roundoff
        genc[i]["b"][...] = 0.0 if net.config.batch_norm else dz.sum(axis=0)
        if i > 0:
            dh = dz @ enc[i]["W"].T
    if return_stats:
        return loss, grad, _stats_from_cache(cache)
    return loss, grad


def _stats_from_cache(cache):
    P = cache["enc"][0]["in"].shape[0]
    stats = []
    for entry in cache.get("enc", []):
        if "mu" not in entry:
            return None
        var = entry["var"] * (P / (P - 1)) if P > 1 else entry["var"]
        stats.append((entry["mu"], var))
    return stats


def batch_statistics(net: RegressionNet, clouds):
    """Per-layer ``(mean, unbiased var)`` of pre-normalization activations."""
    _, cache = forward_batch(net, clouds, mode="train", return_cache=True)
    return _stats_from_cache(cache)


def update_running_stats(net: RegressionNet, batch_stats):
    if batch_stats is None:
        return
    m = net.dtype.type(BN_MOMENTUM)
    net.norm_stats = [((1 - m) * rm + m * bm, (1 - m) * rv + m * bv)
                      for (rm, rv), (bm, bv) in zip(net.norm_stats, batch_stats)]


def predict_batch(net: RegressionNet, clouds) -> np.ndarray:
    """Manning's n for each cloud: normalize, run in eval mode, unscale, clamp."""
    from ..pointcloud import zero_origin

    normalized = [zero_origin(getattr(c, "xyz", c)) for c in clouds]
    raw = forward_batch(net, normalized, mode="eval").astype(np.float64)
    return clamp_n(raw / net.config.target_scale, net.config.threshold)


def predict_n(net: RegressionNet, cloud) -> float:
    return float(predict_batch(net, [cloud])[0])


def clamp_n(values, threshold=(0.025, 0.25)):
    lo, hi = threshold
    return np.clip(values, lo, hi)
