"""Miniature three-stream graph-convolutional classifier with exact gradients.

Each block is graph conv (normalized adjacency, channel mixing) followed by a
depthwise temporal conv and a nonlinearity. The position, velocity and bone
branches are concatenated channel-wise, run through a fused trunk, globally
average pooled over (time, joints) and fed to a linear classifier.

Arrays cross the public boundary as (batch, channels, frames, joints); inside,
the channel axis is moved last so the graph conv becomes a single matmul.
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from scipy.special import expit

from .errors import DivergedLoss, EmptyEnsemble, ShapeMismatch
from .skeleton import JointRegistry, StreamTensor

FORMAT_VERSION = 1
STREAMS = ("position", "velocity", "bone")
STREAM_CHANNELS = (2, 2, 1)


@dataclass(frozen=True)
class MiniGcnConfig:
    branch_width: int = 4
    n_branch_blocks: int = 1
    main_width: int = 8
    n_main_blocks: int = 2
    temporal_kernel: int = 5
    nonlinearity: str = "relu"
    rng_seed: int = 0
    n_classes: int = 2

    def __post_init__(self):
        if min(self.branch_width, self.main_width) < 1:
            raise ValueError("widths must be >= 1")
        if self.temporal_kernel < 1 or self.temporal_kernel % 2 == 0:
            raise ValueError("temporal_kernel must be a positive odd integer")
        if self.nonlinearity not in ("relu", "swish", "identity"):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.n_branch_blocks < 0 or self.n_main_blocks < 0:
            raise ValueError("block counts must be >= 0")

    @property
    def feature_channels(self) -> int:
        if self.n_main_blocks:
            return self.main_width
        return self.fused_channels

    @property
    def fused_channels(self) -> int:
        if self.n_branch_blocks:
            return 3 * self.branch_width
        return sum(STREAM_CHANNELS)


def normalized_adjacency(reg: JointRegistry) -> np.ndarray:
    """Symmetric degree normalization of the bone graph with self-loops."""
    a = reg.adjacency() + np.eye(reg.count)
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d[:, None] * d[None, :]


@dataclass
class ModelInstance:
    config: MiniGcnConfig
    params: dict[str, np.ndarray]
    adjacency: np.ndarray
    input_scale: np.ndarray | None = None  # per input channel, fixed before training; None means 1

    @property
    def scale_vector(self) -> np.ndarray:
        if self.input_scale is None:
            return np.ones(sum(STREAM_CHANNELS))
        return self.input_scale

    @property
    def n_joints(self) -> int:
        return self.adjacency.shape[0]

    @property
    def sparse_adjacency(self):
        cached = self.__dict__.get("_sparse")
        if cached is None or cached[0] is not self.adjacency:
            cached = (self.adjacency, _neighbours(self.adjacency))
            self.__dict__["_sparse"] = cached
        return cached[1]

    def copy(self) -> ModelInstance:
        scale = None if self.input_scale is None else self.input_scale.copy()
        return ModelInstance(self.config, {k: v.copy() for k, v in self.params.items()}, self.adjacency.copy(), scale)


def _block_names(cfg: MiniGcnConfig):
    """(prefix, in_channels, out_channels) for every block, in execution order."""
    out = []
    for s, cin in zip(STREAMS, STREAM_CHANNELS):
        for i in range(cfg.n_branch_blocks):
            out.append((f"{s}.{i}", cin if i == 0 else cfg.branch_width, cfg.branch_width))
    for i in range(cfg.n_main_blocks):
        out.append((f"main.{i}", cfg.fused_channels if i == 0 else cfg.main_width, cfg.main_width))
    return out


def init_model(cfg: MiniGcnConfig, reg: JointRegistry | None = None, adjacency=None) -> ModelInstance:
    if adjacency is None:
        adjacency = normalized_adjacency(reg)
    rng = np.random.default_rng(cfg.rng_seed)
    k = cfg.temporal_kernel
    params = {}
    for prefix, cin, cout in _block_names(cfg):
        params[f"{prefix}.gw"] = rng.normal(0.0, np.sqrt(2.0 / cin), size=(cin, cout))
        params[f"{prefix}.gb"] = np.zeros(cout)
        tw = rng.normal(0.0, 0.5 / np.sqrt(k), size=(k, cout))
        tw[k // 2] += 1.0
        params[f"{prefix}.tw"] = tw
        params[f"{prefix}.tb"] = np.zeros(cout)
    c = cfg.feature_channels
    params["fc.w"] = rng.normal(0.0, 1.0 / np.sqrt(c), size=(cfg.n_classes, c))
    params["fc.b"] = np.zeros(cfg.n_classes)
    return ModelInstance(cfg, params, np.asarray(adjacency, dtype=float))


# -- primitives ---------------------------------------------------------------

_CHUNK = 64
_ACT_CODE = {"relu": 0, "swish": 1, "identity": 2}


@njit(cache=True)
def _block_one(x, nbr, nbw, deg, gw, gb, tw, tb, act, hp, z, y):
    """One sample through graph conv, depthwise temporal conv and activation.

    ``hp`` must arrive with its temporal padding rows zeroed.
    """
    n_t, n_v, cin = x.shape
    cout = gw.shape[1]
    k = tw.shape[0]
    pad = k // 2
    agg = np.empty(cin)
    for t in range(n_t):
        for v in range(n_v):
            agg[:] = 0.0
            for n in range(deg[v]):
                w = nbr[v, n]
                a = nbw[v, n]
                for c in range(cin):
                    agg[c] += a * x[t, w, c]
            for o in range(cout):
                hp[t + pad, v, o] = gb[o]
            for c in range(cin):
                ac = agg[c]
                for o in range(cout):
                    hp[t + pad, v, o] += ac * gw[c, o]
    for t in range(n_t):
        for v in range(n_v):
            for o in range(cout):
                z[t, v, o] = tb[o]
            for j in range(k):
                for o in range(cout):
                    z[t, v, o] += tw[j, o] * hp[t + j, v, o]
            for o in range(cout):
                s = z[t, v, o]
                if act == 0:
                    y[t, v, o] = s if s > 0.0 else 0.0
                elif act == 1:
                    y[t, v, o] = s / (1.0 + np.exp(-s))
                else:
                    y[t, v, o] = s


@njit(cache=True)
def _block_batch(x, nbr, nbw, deg, gw, gb, tw, tb, act, keep):
    n_b, n_t, n_v, _ = x.shape
    cout = gw.shape[1]
    pad = tw.shape[0] // 2
    y = np.empty((n_b, n_t, n_v, cout))
    if keep:
        hp = np.zeros((n_b, n_t + 2 * pad, n_v, cout))
        z = np.empty((n_b, n_t, n_v, cout))
        for b in range(n_b):
            _block_one(x[b], nbr, nbw, deg, gw, gb, tw, tb, act, hp[b], z[b], y[b])
    else:
        hp = np.zeros((1, n_t + 2 * pad, n_v, cout))
        z = np.empty((1, n_t, n_v, cout))
        for b in range(n_b):
            _block_one(x[b], nbr, nbw, deg, gw, gb, tw, tb, act, hp[0], z[0], y[b])
    return y, hp, z


@njit(cache=True)
def _block_lanes(x, nbr, nbw, deg, gw, gb, tw, tb, act):
    """Inference-only block with the batch as the innermost (vectorized) axis.

    ``x`` is (frames, joints, channels, batch); returns the same layout.
    """
    n_t, n_v, cin, n_b = x.shape
    cout = gw.shape[1]
    k = tw.shape[0]
    pad = k // 2
    hp = np.zeros((n_t + 2 * pad, n_v, cout, n_b))
    agg = np.empty((cin, n_b))
    for t in range(n_t):
        for v in range(n_v):
            agg[:, :] = 0.0
            for n in range(deg[v]):
                w = nbr[v, n]
                a = nbw[v, n]
                for c in range(cin):
                    for b in range(n_b):
                        agg[c, b] += a * x[t, w, c, b]
            for o in range(cout):
                for b in range(n_b):
                    hp[t + pad, v, o, b] = gb[o]
                for c in range(cin):
                    wco = gw[c, o]
                    for b in range(n_b):
                        hp[t + pad, v, o, b] += wco * agg[c, b]
    y = np.empty((n_t, n_v, cout, n_b))
    for t in range(n_t):
        for v in range(n_v):
            for o in range(cout):
                for b in range(n_b):
                    y[t, v, o, b] = tb[o]
                for j in range(k):
                    twj = tw[j, o]
                    for b in range(n_b):
                        y[t, v, o, b] += twj * hp[t + j, v, o, b]
                if act == 0:
                    for b in range(n_b):
                        if y[t, v, o, b] < 0.0:
                            y[t, v, o, b] = 0.0
                elif act == 1:
                    for b in range(n_b):
                        s = y[t, v, o, b]
                        y[t, v, o, b] = s / (1.0 + np.exp(-s))
    return y


def _neighbours(adjacency: np.ndarray):
    """Sparse row form of the adjacency: (indices, weights, degree) per joint."""
    nz = adjacency != 0
    deg = nz.sum(axis=1).astype(np.int64)
    width = max(int(deg.max()), 1)
    nbr = np.zeros((adjacency.shape[0], width), dtype=np.int64)
    nbw = np.zeros((adjacency.shape[0], width))
    for v in range(adjacency.shape[0]):
        cols = np.flatnonzero(nz[v])
        nbr[v, :cols.size] = cols
        nbw[v, :cols.size] = adjacency[v, cols]
    return nbr, nbw, deg


def _act_backward(z, dy, kind):
    if kind == "relu":
        return dy * (z > 0)
    if kind == "swish":
        s = expit(z)
        return dy * (s + z * s * (1.0 - s))
    return dy


def _block_forward(x, m: ModelInstance, prefix: str, keep=False):
    p = m.params
    nbr, nbw, deg = m.sparse_adjacency
    y, hp, z = _block_batch(
        np.ascontiguousarray(x), nbr, nbw, deg,
        p[f"{prefix}.gw"], p[f"{prefix}.gb"], p[f"{prefix}.tw"], p[f"{prefix}.tb"],
        _ACT_CODE[m.config.nonlinearity], keep,
    )
    return y, ((x, hp, z) if keep else None)


def _block_backward(dy, cache, m: ModelInstance, prefix: str, grads: dict, need_input=True):
    x, hp, z = cache
    p = m.params
    tw = p[f"{prefix}.tw"]
    gw = p[f"{prefix}.gw"]
    b, t, v, cin = x.shape
    cout = gw.shape[1]
    k = tw.shape[0]
    pad = k // 2
    kron = np.kron(m.adjacency.T, gw)
    dz = _act_backward(z, dy, m.config.nonlinearity)
    grads[f"{prefix}.tb"] = dz.sum(axis=(0, 1, 2))
    dtw = np.empty_like(tw)
    dhp = np.zeros_like(hp)
    for j in range(k):
        dtw[j] = (hp[:, j:j + t] * dz).sum(axis=(0, 1, 2))
        dhp[:, j:j + t] += tw[j] * dz
    grads[f"{prefix}.tw"] = dtw
    dh = dhp[:, pad:pad + t] if pad else dhp
    grads[f"{prefix}.gb"] = dh.sum(axis=(0, 1, 2))
    dhf = dh.reshape(b * t, v * cout)
    dkron = x.reshape(b * t, v * cin).T @ dhf
    grads[f"{prefix}.gw"] = np.einsum("wcvo,wv->co", dkron.reshape(v, cin, v, cout), m.adjacency.T)
    if need_input:
        return (dhf @ kron.T).reshape(b, t, v, cin)
    return None


# -- forward / backward --------------------------------------------------------

@dataclass
class BatchForward:
    logits: np.ndarray  # (B, classes)
    probs: np.ndarray
    pooled: np.ndarray  # (B, channels)
    taps: list  # channel-last activations of the fused trunk, final one last
    caches: dict = field(default_factory=dict, repr=False)


def _as_batch(streams):
    arrays = []
    for s, c in zip(streams, STREAM_CHANNELS):
        a = s.data if isinstance(s, StreamTensor) else np.asarray(s, dtype=float)
        if a.ndim == 3:
            a = a[None]
        if a.ndim != 4 or a.shape[1] != c:
            raise ShapeMismatch(f"stream expected (B, {c}, T, V), got {a.shape}")
        arrays.append(a)
    if len({a.shape[0] for a in arrays}) != 1 or len({a.shape[2:] for a in arrays}) != 1:
        raise ShapeMismatch("streams disagree on batch, frames or joints")
    return arrays


def _split_channels(vec):
    return np.split(np.asarray(vec, dtype=float), np.cumsum(STREAM_CHANNELS)[:-1])


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward_batch(m: ModelInstance, streams, keep_cache=False, keep_taps=True) -> BatchForward:
    """Forward pass over a batch; ``streams`` holds position, velocity, bone arrays.

    ``keep_cache`` stores what :func:`backward` needs. Without it the batch
    runs through the faster inference kernel, and ``keep_taps=False`` skips
    returning the intermediate activations.
    """
    arrays = _as_batch(streams)
    if arrays[0].shape[3] != m.n_joints:
        raise ShapeMismatch(f"model expects {m.n_joints} joints, got {arrays[0].shape[3]}")
    if m.input_scale is not None:
        arrays = [a * s[None, :, None, None] for a, s in zip(arrays, _split_channels(m.input_scale))]
    if not keep_cache:
        return _forward_lanes(m, arrays, keep_taps)
    cfg = m.config
    caches = {}
    outs = []
    for s, a in zip(STREAMS, arrays):
        x = np.ascontiguousarray(np.moveaxis(a, 1, -1))
        for i in range(cfg.n_branch_blocks):
            x, c = _block_forward(x, m, f"{s}.{i}", keep_cache)
            if keep_cache:
                caches[f"{s}.{i}"] = c
        outs.append(x)
    f = np.concatenate(outs, axis=-1)
    taps = [f]
    for i in range(cfg.n_main_blocks):
        f, c = _block_forward(f, m, f"main.{i}", keep_cache)
        if keep_cache:
            caches[f"main.{i}"] = c
        taps.append(f)
    pooled = f.mean(axis=(1, 2))
    logits = pooled @ m.params["fc.w"].T + m.params["fc.b"]
    return BatchForward(logits, softmax(logits), pooled, taps, caches)


def _forward_lanes(m: ModelInstance, arrays, keep_taps: bool) -> BatchForward:
    cfg = m.config
    nbr, nbw, deg = m.sparse_adjacency
    p = m.params
    act = _ACT_CODE[cfg.nonlinearity]

    def block(x, prefix):
        return _block_lanes(x, nbr, nbw, deg, p[f"{prefix}.gw"], p[f"{prefix}.gb"], p[f"{prefix}.tw"], p[f"{prefix}.tb"], act)

    n = arrays[0].shape[0]
    pooled, taps = [], []
    for i in range(0, n, _CHUNK):
        outs = []
        for s, a in zip(STREAMS, arrays):
            x = np.ascontiguousarray(np.transpose(a[i:i + _CHUNK], (2, 3, 1, 0)))
            for j in range(cfg.n_branch_blocks):
                x = block(x, f"{s}.{j}")
            outs.append(x)
        f = np.concatenate(outs, axis=2)
        chunk_taps = [f]
        for j in range(cfg.n_main_blocks):
            f = block(f, f"main.{j}")
            chunk_taps.append(f)
        pooled.append(f.mean(axis=(0, 1)).T)
        if keep_taps:
            taps.append([np.transpose(t, (3, 0, 1, 2)) for t in chunk_taps])
    pooled = np.concatenate(pooled) if pooled else np.zeros((0, cfg.feature_channels))
    if keep_taps and taps:
        taps = [np.concatenate([c[j] for c in taps]) for j in range(len(taps[0]))]
    logits = pooled @ p["fc.w"].T + p["fc.b"]
    return BatchForward(logits, softmax(logits), pooled, taps if keep_taps else [])


def backward(m: ModelInstance, fw: BatchForward, dlogits: np.ndarray, *, stop_at_tap=None, need_inputs=False):
    """Reverse-mode pass from d(objective)/d(logits).

    Returns ``(param_grads, tap_grads, input_grads)``. With ``stop_at_tap`` set,
    propagation halts once that trunk tap's gradient is known and parameter
    gradients are partial.
    """
    cfg = m.config
    grads = {}
    n_taps = len(fw.taps)
    stop = None if stop_at_tap is None else stop_at_tap % n_taps
    grads["fc.w"] = dlogits.T @ fw.pooled
    grads["fc.b"] = dlogits.sum(axis=0)
    f = fw.taps[-1]
    _, t, v, _ = f.shape
    df = np.broadcast_to((dlogits @ m.params["fc.w"])[:, None, None, :] / (t * v), f.shape).copy()
    tap_grads = [None] * n_taps
    tap_grads[-1] = df
    for i in reversed(range(cfg.n_main_blocks)):
        if stop is not None and stop >= i + 1:
            return grads, tap_grads, None
        df = _block_backward(df, fw.caches[f"main.{i}"], m, f"main.{i}", grads)
        tap_grads[i] = df
    if stop is not None:
        return grads, tap_grads, None
    widths = [cfg.branch_width if cfg.n_branch_blocks else c for c in STREAM_CHANNELS]
    splits = np.split(df, np.cumsum(widths)[:-1], axis=-1)
    input_grads = []
    for s, dx in zip(STREAMS, splits):
        for i in reversed(range(cfg.n_branch_blocks)):
            need = need_inputs or i > 0
            dx = _block_backward(dx, fw.caches[f"{s}.{i}"], m, f"{s}.{i}", grads, need_input=need)
        input_grads.append(None if dx is None else np.moveaxis(dx, -1, 1))
    if need_inputs and m.input_scale is not None:
        input_grads = [g * s[None, :, None, None] for g, s in zip(input_grads, _split_channels(m.input_scale))]
    return grads, tap_grads, input_grads


@dataclass
class ForwardTrace:
    feature_maps: np.ndarray  # (channels, frames, joints), final conv layer
    pooled: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    predicted_class: int


def _trace_at(fw: BatchForward, i: int) -> ForwardTrace:
    return ForwardTrace(
        feature_maps=np.moveaxis(fw.taps[-1][i], -1, 0),
        pooled=fw.pooled[i],
        logits=fw.logits[i],
        probs=fw.probs[i],
        predicted_class=int(np.argmax(fw.logits[i])),
    )


def forward(m: ModelInstance, streams) -> ForwardTrace:
    return _trace_at(forward_batch(m, streams), 0)


def forward_traces(m: ModelInstance, streams) -> list[ForwardTrace]:
    fw = forward_batch(m, streams)
    return [_trace_at(fw, i) for i in range(fw.logits.shape[0])]


def tap_features(fw: BatchForward, tap: int = -1) -> np.ndarray:
    """Activations at a trunk tap in public layout (B, channels, frames, joints)."""
    return np.moveaxis(fw.taps[tap], -1, 1)


def grad_feature_maps_batch(m: ModelInstance, streams, class_idx, tap: int = -1):
    """Gradient of logits[class_idx] w.r.t. the activations at ``tap``.

    ``class_idx`` may be a scalar or one index per batch element. Returns the
    forward result and the gradient, both in (B, channels, frames, joints).
    """
    fw = forward_batch(m, streams, keep_cache=True)
    b = fw.logits.shape[0]
    dlogits = np.zeros_like(fw.logits)
    dlogits[np.arange(b), np.broadcast_to(np.asarray(class_idx), (b,))] = 1.0
    _, tap_grads, _ = backward(m, fw, dlogits, stop_at_tap=tap)
    return fw, np.moveaxis(tap_grads[tap], -1, 1)


def grad_feature_maps(m: ModelInstance, streams, class_idx: int, tap: int = -1) -> np.ndarray:
    if not 0 <= class_idx < m.config.n_classes:
        raise ValueError(f"class_idx {class_idx} out of range")
    return grad_feature_maps_batch(m, streams, class_idx, tap)[1][0]


# -- ensemble -----------------------------------------------------------------

@dataclass
class Ensemble:
    members: list

    def __post_init__(self):
        if not self.members:
            raise EmptyEnsemble("ensemble needs at least one member")
        n = {(mm.n_joints, mm.config.n_classes) for mm in self.members}
        if len(n) != 1:
            raise ShapeMismatch("ensemble members disagree on joints or classes")

    def __len__(self):
        return len(self.members)


def ensemble_predict(e: Ensemble, streams):
    """Median class-1 probability across members, plus each member's trace."""
    if not e.members:
        raise EmptyEnsemble("ensemble needs at least one member")
    traces = [forward(m, streams) for m in e.members]
    prob = float(np.median([tr.probs[1] for tr in traces]))
    return prob, traces


def ensemble_representation(traces) -> np.ndarray:
    """Members' pre-softmax logits flattened in member order."""
    if not traces:
        raise EmptyEnsemble("no traces")
    return np.concatenate([np.asarray(tr.logits, dtype=float).ravel() for tr in traces])


# -- training -----------------------------------------------------------------

def stack_examples(data):
    pos = np.stack([np.asarray(s[0].data if isinstance(s[0], StreamTensor) else s[0]) for s, _ in data])
    vel = np.stack([np.asarray(s[1].data if isinstance(s[1], StreamTensor) else s[1]) for s, _ in data])
    bone = np.stack([np.asarray(s[2].data if isinstance(s[2], StreamTensor) else s[2]) for s, _ in data])
    y = np.array([int(lbl) for _, lbl in data])
    return (pos, vel, bone), y


def fold_assignment(n_samples: int, n_members: int) -> np.ndarray:
    """Round-robin portion index of every sample."""
    return np.arange(n_samples) % n_members


def fit_input_scale(m: ModelInstance, streams) -> ModelInstance:
    """Copy of ``m`` whose inputs are divided by the RMS of all channels over ``streams``.

    One shared factor keeps the relative magnitude of the streams intact, and no
    centering is applied, so a motionless skeleton still has zero velocity.
    """
    arrays = _as_batch(streams)
    total = sum(float(np.sum(a * a)) for a in arrays)
    count = sum(a.size for a in arrays)
    rms = np.sqrt(total / count) if count else 0.0
    out = m.copy()
    out.input_scale = np.full(sum(STREAM_CHANNELS), 1.0 / rms if rms > 0 else 1.0)
    return out


def train_member(m: ModelInstance, streams, y, epochs, lr, rng, batch_size=32, betas=(0.9, 0.999), weight_decay=1e-4):
    """Minibatch Adam on the cross-entropy loss; returns a trained copy of ``m``."""
    m = m.copy()
    n = len(y)
    b1, b2 = betas
    mom = {k: np.zeros_like(v) for k, v in m.params.items()}
    sq = {k: np.zeros_like(v) for k, v in m.params.items()}
    step = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            batch = [a[idx] for a in streams]
            fw = forward_batch(m, batch, keep_cache=True)
            p = fw.probs
            loss = -np.log(np.clip(p[np.arange(len(idx)), y[idx]], 1e-300, None)).mean()
            if not np.isfinite(loss):
                raise DivergedLoss("training loss became non-finite")
            dlogits = p.copy()
            dlogits[np.arange(len(idx)), y[idx]] -= 1.0
            dlogits /= len(idx)
            grads, _, _ = backward(m, fw, dlogits)
            step += 1
            for k, g in grads.items():
                if not np.all(np.isfinite(g)):
                    raise DivergedLoss("non-finite gradient")
                g = g + weight_decay * m.params[k]
                mom[k] = b1 * mom[k] + (1 - b1) * g
                sq[k] = b2 * sq[k] + (1 - b2) * g * g
                mhat = mom[k] / (1 - b1 ** step)
                vhat = sq[k] / (1 - b2 ** step)
                m.params[k] = m.params[k] - lr * mhat / (np.sqrt(vhat) + 1e-8)
    return m


def accuracy(m: ModelInstance, streams, y) -> float:
    return float((np.argmax(forward_batch(m, streams).logits, axis=1) == y).mean())


def train_toy(e: Ensemble, data, epochs: int, lr: float, rng_seed: int, **kwargs):
    """Train each member on every portion except its own (round-robin folds).

    Returns the trained ensemble and a per-member report. A single-member
    ensemble trains on all data. Members without an input scale get one
    fitted on their own training portion first.
    """
    if not data:
        raise ValueError("training data is empty")
    streams, y = stack_examples(data)
    if not set(np.unique(y)) <= {0, 1}:
        raise ValueError("labels must be 0 or 1")
    folds = fold_assignment(len(y), len(e.members))
    members, report = [], []
    for i, m in enumerate(e.members):
        train_idx = np.flatnonzero(folds != i) if len(e.members) > 1 else np.arange(len(y))
        sub = [a[train_idx] for a in streams]
        rng = np.random.default_rng([rng_seed, i])
        if m.input_scale is None:
            m = fit_input_scale(m, sub)
        try:
            trained = train_member(m, sub, y[train_idx], epochs, lr, rng, **kwargs)
        except DivergedLoss as exc:
            raise DivergedLoss(f"member {i}: {exc}", member=i) from exc
        members.append(trained)
        report.append({
            "member": i,
            "portion": i,
            "n_train": int(len(train_idx)),
            "train_accuracy": accuracy(trained, sub, y[train_idx]),
        })
    return Ensemble(members), report


# -- serialization --------------------------------------------------------------

def model_to_dict(m: ModelInstance) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "config": asdict(m.config),
        "adjacency": {"shape": list(m.adjacency.shape), "data": m.adjacency.tolist()},
        "params": {k: {"shape": list(v.shape), "data": v.tolist()} for k, v in sorted(m.params.items())},
        "input_scale": None if m.input_scale is None else m.input_scale.tolist(),
    }


def model_from_dict(d: dict) -> ModelInstance:
    if d.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format {d.get('format_version')!r}")
    cfg = MiniGcnConfig(**d["config"])

    def arr(entry):
        return np.asarray(entry["data"], dtype=float).reshape(entry["shape"])

    scale = d.get("input_scale")
    scale = None if scale is None else np.asarray(scale, dtype=float)
    return ModelInstance(cfg, {k: arr(v) for k, v in d["params"].items()}, arr(d["adjacency"]), scale)


def save_model(m: ModelInstance, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(m)))


def load_model(path) -> ModelInstance:
    return model_from_dict(json.loads(Path(path).read_text()))


def default_roster(seed: int = 0) -> list[MiniGcnConfig]:
    """Ten small architecture variants, loosely spanning width, kernel and activation axes."""
    variants = [
        (4, 1, 8, 2, 5, "relu"),
        (4, 1, 8, 2, 3, "swish"),
        (6, 1, 8, 1, 5, "relu"),
        (4, 1, 6, 2, 3, "swish"),
        (3, 1, 8, 2, 5, "swish"),
        (3, 1, 6, 2, 3, "relu"),
        (4, 1, 6, 1, 5, "relu"),
        (3, 1, 8, 1, 3, "swish"),
        (6, 1, 6, 2, 5, "relu"),
        (6, 1, 8, 1, 3, "swish"),
    ]
    return [
        MiniGcnConfig(bw, nb, mw, nm, k, act, rng_seed=seed * 1000 + i)
        for i, (bw, nb, mw, nm, k, act) in enumerate(variants)
    ]


def clone(e: Ensemble) -> Ensemble:
    return Ensemble([copy.deepcopy(m) for m in e.members])
