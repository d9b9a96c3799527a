"""Two-layer GCN, GraphSAGE and GIN node classifiers trained with SpMM.

Backward passes follow ``C = spmm(M, H)  =>  dH = spmm(M^T, dC)``. The
transposed propagation matrix is epoch-invariant, so :class:`TrainingCache`
builds it at most once per run (or not at all when the matrix is
symmetric) and counts how often it had to.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dispatch import tuned
from .errors import ConfigError, DimensionError, TapeError
from .kernels import spmm
from .sparse import CsrMatrix, ReduceOp, csr_from_arrays, is_symmetric, normalize_adjacency, row_degrees, scale_rows, transpose


class ModelKind(enum.Enum):
    GCN = "gcn"
    SAGE_SUM = "sage-sum"
    SAGE_MEAN = "sage-mean"
    GIN = "gin"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("_", "-"))
        except ValueError:
            raise ConfigError(f"unknown model {value!r}; expected one of {[m.value for m in cls]}") from None

    @property
    def is_sage(self) -> bool:
        return self in (ModelKind.SAGE_SUM, ModelKind.SAGE_MEAN)


def _glorot(rng, fan_in, fan_out, dtype):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


@dataclass
class GnnModel:
    """Weights of a two-layer model.

    ``params`` holds ``w1``/``w2`` (neighbour weights), ``s1``/``s2`` (SAGE
    self weights) and ``eps`` (GIN, a 0-d array shared by both layers).
    """

    kind: ModelKind
    params: dict[str, np.ndarray]

    @classmethod
    def init(cls, kind, in_features: int, hidden: int, classes: int, seed: int = 0, dtype=np.float32) -> "GnnModel":
        kind = ModelKind.parse(kind)
        rng = np.random.default_rng(seed)
        params = {"w1": _glorot(rng, in_features, hidden, dtype), "w2": _glorot(rng, hidden, classes, dtype)}
        if kind.is_sage:
            params["s1"] = _glorot(rng, in_features, hidden, dtype)
            params["s2"] = _glorot(rng, hidden, classes, dtype)
        if kind is ModelKind.GIN:
            params["eps"] = np.zeros((), dtype=dtype)
        return cls(kind, params)

    @property
    def layer1(self) -> np.ndarray:
        return self.params["w1"]

    @property
    def layer2(self) -> np.ndarray:
        return self.params["w2"]

    @property
    def in_features(self) -> int:
        return self.params["w1"].shape[0]

    @property
    def hidden(self) -> int:
        return self.params["w1"].shape[1]

    @property
    def classes(self) -> int:
        return self.params["w2"].shape[1]

    @property
    def dtype(self) -> np.dtype:
        return self.params["w1"].dtype

    def copy(self) -> "GnnModel":
        return GnnModel(self.kind, {k: v.copy() for k, v in self.params.items()})

    def astype(self, dtype) -> "GnnModel":
        return GnnModel(self.kind, {k: v.astype(dtype) for k, v in self.params.items()})


@dataclass
class TrainingCache:
    """Epoch-invariant matrices for one training run, plus build counters.

    ``a_hat`` is the forward propagation matrix: normalised adjacency for
    GCN, the raw adjacency otherwise. ``a_hat_t`` is what backward multiplies
    by: the transpose of ``a_hat`` (row-scaled by 1/degree first for mean
    aggregation). With ``use_cache`` off it is rebuilt every epoch.
    """

    kind: ModelKind
    a_hat: CsrMatrix
    degrees: np.ndarray
    use_cache: bool = True
    symmetric: bool = False
    a_hat_t: CsrMatrix | None = None
    transpose_builds: int = 0
    normalize_builds: int = 0
    cache_hits: int = 0
    _epoch_t: CsrMatrix | None = field(default=None, repr=False)

    @classmethod
    def build(cls, kind, adjacency: CsrMatrix, use_cache: bool = True, add_self_loops: bool = True, dtype=None):
        kind = ModelKind.parse(kind)
        if adjacency.n_rows != adjacency.n_cols:
            raise DimensionError(f"adjacency must be square, got {adjacency.shape}")
        if dtype is not None:
            adjacency = adjacency.astype(dtype)
        normalize_builds = 0
        if kind is ModelKind.GCN:
            a_hat = normalize_adjacency(adjacency, add_self_loops=add_self_loops)
            normalize_builds = 1
        else:
            a_hat = adjacency
        cache = cls(kind, a_hat, row_degrees(adjacency), use_cache, normalize_builds=normalize_builds)
        if use_cache and kind is not ModelKind.SAGE_MEAN:
            cache.symmetric = is_symmetric(a_hat)
        return cache

    @property
    def n_nodes(self) -> int:
        return self.a_hat.n_rows

    @property
    def reduce(self) -> ReduceOp:
        return ReduceOp.MEAN if self.kind is ModelKind.SAGE_MEAN else ReduceOp.SUM

    def propagation(self) -> CsrMatrix:
        self.cache_hits += 1
        return self.a_hat

    def begin_epoch(self) -> None:
        self._epoch_t = None

    def _build_transpose(self) -> CsrMatrix:
        self.transpose_builds += 1
        m = self.a_hat
        if self.kind is ModelKind.SAGE_MEAN:
            inv = np.zeros(m.n_rows, dtype=np.float64)
            np.divide(1.0, self.degrees, out=inv, where=self.degrees > 0)
            m = scale_rows(m, inv)
        return transpose(m)

    def backward_operand(self) -> CsrMatrix:
        if not self.use_cache:
            if self._epoch_t is None:
                self._epoch_t = self._build_transpose()
            return self._epoch_t
        if self.a_hat_t is not None:
            self.cache_hits += 1
            return self.a_hat_t
        if self.symmetric:
            self.cache_hits += 1
            return self.a_hat
        self.a_hat_t = self._build_transpose()
        return self.a_hat_t

    def counters(self) -> dict[str, int]:
        return {
            "transpose_builds": self.transpose_builds,
            "normalize_builds": self.normalize_builds,
            "cache_hits": self.cache_hits,
        }


@dataclass
class Tape:
    """Activations saved by :func:`forward` for :func:`backward`."""

    kind: ModelKind
    n_nodes: int
    saved: dict[str, np.ndarray]


def _relu(x):
    return np.maximum(x, 0)


def forward(model: GnnModel, cache: TrainingCache, x, *, threads: int | None = None):
    """Return ``(logits, tape)``."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != cache.n_nodes or x.shape[1] != model.in_features:
        raise DimensionError(
            f"features {x.shape} do not match {cache.n_nodes} nodes x {model.in_features} inputs"
        )
    if model.kind is not cache.kind:
        raise ConfigError(f"model is {model.kind.value} but cache was built for {cache.kind.value}")
    x = x.astype(model.dtype, copy=False)
    p = model.params
    a = cache.propagation()
    kind = model.kind
    if kind is ModelKind.GCN:
        # project, then propagate
        p1 = spmm(a, x @ p["w1"], threads=threads)
        h1 = _relu(p1)
        logits = spmm(a, h1 @ p["w2"], threads=threads)
        saved = {"x": x, "p1": p1, "h1": h1}
    elif kind.is_sage:
        r = cache.reduce
        agg1 = spmm(a, x, r, threads=threads)
        pre1 = agg1 @ p["w1"] + x @ p["s1"]
        h1 = _relu(pre1)
        agg2 = spmm(a, h1, r, threads=threads)
        logits = agg2 @ p["w2"] + h1 @ p["s2"]
        saved = {"x": x, "agg1": agg1, "pre1": pre1, "h1": h1, "agg2": agg2}
    else:
        scale = 1 + p["eps"]
        s1 = scale * x + spmm(a, x, threads=threads)
        pre1 = s1 @ p["w1"]
        h1 = _relu(pre1)
        s2 = scale * h1 + spmm(a, h1, threads=threads)
        logits = s2 @ p["w2"]
        saved = {"x": x, "s1": s1, "pre1": pre1, "h1": h1, "s2": s2}
    return logits, Tape(kind, cache.n_nodes, saved)


def backward(model: GnnModel, cache: TrainingCache, tape: Tape, grad_logits, *, threads: int | None = None):
    """Parameter gradients as a dict keyed like ``model.params``."""
    g = np.asarray(grad_logits)
    if tape.n_nodes != cache.n_nodes or g.shape[0] != tape.n_nodes or tape.kind is not model.kind:
        raise TapeError(
            f"tape for {tape.n_nodes} nodes ({tape.kind.value}) used with {cache.n_nodes}-node cache, "
            f"{g.shape[0]}-row gradient, {model.kind.value} model"
        )
    if g.shape[1] != model.classes:
        raise DimensionError(f"grad_logits has {g.shape[1]} columns, model has {model.classes} classes")
    g = g.astype(model.dtype, copy=False)
    p, s = model.params, tape.saved
    at = cache.backward_operand()
    grads = {}
    if model.kind is ModelKind.GCN:
        dz2 = spmm(at, g, threads=threads)
        grads["w2"] = s["h1"].T @ dz2
        dp1 = (dz2 @ p["w2"].T) * (s["p1"] > 0)
        dz1 = spmm(at, dp1, threads=threads)
        grads["w1"] = s["x"].T @ dz1
    elif model.kind.is_sage:
        grads["w2"] = s["agg2"].T @ g
        grads["s2"] = s["h1"].T @ g
        dh1 = spmm(at, g @ p["w2"].T, threads=threads) + g @ p["s2"].T
        dpre1 = dh1 * (s["pre1"] > 0)
        grads["w1"] = s["agg1"].T @ dpre1
        grads["s1"] = s["x"].T @ dpre1
    else:
        scale = 1 + p["eps"]
        grads["w2"] = s["s2"].T @ g
        ds2 = g @ p["w2"].T
        dh1 = scale * ds2 + spmm(at, ds2, threads=threads)
        dpre1 = dh1 * (s["pre1"] > 0)
        grads["w1"] = s["s1"].T @ dpre1
        ds1 = dpre1 @ p["w1"].T
        grads["eps"] = np.asarray(np.sum(ds2 * s["h1"]) + np.sum(ds1 * s["x"]), dtype=model.dtype)
    return grads


def softmax_xent(logits, labels, mask):
    """Mean cross-entropy over masked rows and its gradient w.r.t. ``logits``."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    n, c = logits.shape
    if labels.shape != (n,) or mask.shape != (n,):
        raise DimensionError(f"labels {labels.shape} and mask {mask.shape} must both have length {n}")
    count = int(mask.sum())
    if count == 0:
        raise ConfigError("loss mask selects no nodes")
    if labels[mask].size and (labels[mask].min() < 0 or labels[mask].max() >= c):
        raise ConfigError(f"labels must lie in [0, {c})")
    z = logits[mask].astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    picked = z[np.arange(count), labels[mask]]
    loss = float(np.mean(logsum - picked))
    prob = np.exp(z - logsum[:, None])
    prob[np.arange(count), labels[mask]] -= 1.0
    grad = np.zeros_like(logits)
    grad[mask] = (prob / count).astype(logits.dtype)
    return loss, grad


def sgd_step(model: GnnModel, grads: dict[str, np.ndarray], lr: float) -> GnnModel:
    params = {}
    for name, w in model.params.items():
        g = np.asarray(grads[name])
        if g.shape != w.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter has {w.shape}")
        params[name] = w - w.dtype.type(lr) * g.astype(w.dtype, copy=False)
    return GnnModel(model.kind, params)


def accuracy(logits, labels, mask) -> float:
    mask = np.asarray(mask, dtype=bool)
    pred = np.argmax(logits[mask], axis=1)
    return float(np.mean(pred == np.asarray(labels)[mask])) if mask.any() else 0.0


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    train_accuracy: float
    epoch_time: float  # seconds


def warm_up(model: GnnModel, threads: int | None = None) -> None:
    """One throwaway step on a two-node graph so kernel compilation is not timed."""
    tiny = csr_from_arrays(2, 2, [0, 1], [1, 0], [1.0, 1.0], model.dtype)
    for use_cache in (True, False):
        cache = TrainingCache.build(model.kind, tiny, use_cache=use_cache, dtype=model.dtype)
        cache.begin_epoch()
        logits, tape = forward(model, cache, np.ones((2, model.in_features), model.dtype), threads=threads)
        backward(model, cache, tape, np.ones_like(logits), threads=threads)


def train(
    model: GnnModel,
    a: CsrMatrix,
    x,
    labels,
    mask,
    epochs: int,
    lr: float,
    threads: int | None = None,
    use_tuned: bool = True,
    use_cache: bool = True,
    *,
    add_self_loops: bool = True,
    callback=None,
):
    """Full-batch SGD. Returns ``(model, stats, cache)``.

    The propagation matrix is built and the kernels are compiled before the
    first epoch. The epoch
    timer covers forward, loss, backward and the update, including any
    transpose rebuilt when caching is off.
    """
    if epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {epochs}")
    x = np.asarray(x).astype(model.dtype, copy=False)
    if x.shape[0] != a.n_rows:
        raise DimensionError(f"features have {x.shape[0]} rows, graph has {a.n_rows} nodes")
    cache = TrainingCache.build(model.kind, a, use_cache=use_cache, add_self_loops=add_self_loops, dtype=model.dtype)
    stats = []
    with tuned(use_tuned):
        warm_up(model, threads)
        for epoch in range(1, epochs + 1):
            t0 = time.perf_counter()
            cache.begin_epoch()
            logits, tape = forward(model, cache, x, threads=threads)
            loss, grad = softmax_xent(logits, labels, mask)
            grads = backward(model, cache, tape, grad, threads=threads)
            model = sgd_step(model, grads, lr)
            elapsed = time.perf_counter() - t0
            if not math.isfinite(loss):
                raise FloatingPointError(f"loss became {loss} at epoch {epoch}")
            stats.append(EpochStats(epoch, loss, accuracy(logits, labels, mask), elapsed))
            if callback is not None:
                callback(stats[-1])
    return model, stats, cache
