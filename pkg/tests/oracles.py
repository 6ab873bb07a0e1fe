"""Independent reference computations shared by unit and acceptance tests.

Everything here is written as plainly as possible (explicit loops, central
differences, sorted lists) and never calls the code path it checks.
"""
from __future__ import annotations

import numpy as np

from skelxai.model import STREAM_CHANNELS, MiniGcnConfig, backward, forward_batch, init_model
from skelxai.skeleton import default_registry


def random_streams(rng, batch=2, frames=6, joints=19):
    return [rng.normal(0.0, 1.0, size=(batch, c, frames, joints)) for c in STREAM_CHANNELS]


def small_model(seed=0, nonlinearity="swish", **kw):
    cfg = MiniGcnConfig(branch_width=3, n_branch_blocks=1, main_width=4, n_main_blocks=2,
                        temporal_kernel=3, nonlinearity=nonlinearity, rng_seed=seed, **kw)
    m = init_model(cfg, default_registry())
    rng = np.random.default_rng(seed + 100)
    for k in m.params:  # move biases off zero so every term is exercised
        m.params[k] = m.params[k] + rng.normal(0.0, 0.1, size=m.params[k].shape)
    return m


def objective(m, streams, weights):
    """Scalar sum(weights * logits) used for gradient probes."""
    return float((forward_batch(m, streams, keep_cache=True).logits * weights).sum())


def gradient_probes(m, streams, rng, n_probes=20, step=1e-4):
    """(analytic, numeric) pairs for random parameter entries and input entries."""
    weights = rng.normal(size=(streams[0].shape[0], m.config.n_classes))
    fw = forward_batch(m, streams, keep_cache=True)
    grads, _, input_grads = backward(m, fw, weights, need_inputs=True)
    names = sorted(m.params)
    out = []
    for i in range(n_probes):
        if i % 4 == 3:  # input probe
            s = int(rng.integers(len(streams)))
            idx = tuple(int(rng.integers(d)) for d in streams[s].shape)
            orig = streams[s][idx]
            streams[s][idx] = orig + step
            up = objective(m, streams, weights)
            streams[s][idx] = orig - step
            down = objective(m, streams, weights)
            streams[s][idx] = orig
            out.append((("input", s, idx), input_grads[s][idx], (up - down) / (2 * step)))
        else:
            name = names[int(rng.integers(len(names)))]
            p = m.params[name]
            idx = tuple(int(rng.integers(d)) for d in p.shape)
            orig = p[idx]
            p[idx] = orig + step
            up = objective(m, streams, weights)
            p[idx] = orig - step
            down = objective(m, streams, weights)
            p[idx] = orig
            out.append(((name, idx), grads[name][idx], (up - down) / (2 * step)))
    return out


def rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-6)


def cam_loop(features, weights):
    """s[v] = mean_t sum_n w[n] F[n, t, v] by explicit loops."""
    c, t, v = features.shape
    out = np.zeros(v)
    for j in range(v):
        total = 0.0
        for tt in range(t):
            for n in range(c):
                total += weights[n] * features[n, tt, j]
        out[j] = total / t
    return out


def minmax_loop(raw):
    lo, hi = min(raw), max(raw)
    if hi == lo:
        return [0.0] * len(raw)
    return [(x - lo) / (hi - lo) for x in raw]


def median_sorted(values):
    s = sorted(values)
    n = len(s)
    return s[n // 2] if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2


def mean_abs_gap_loop(f0, family):
    total = 0.0
    for f in family:
        total += abs(f0 - f)
    return total / len(family)


def relative_change_loop(a, b, guard, p=2.0):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    acc = 0.0
    for x, y in zip(a, b):
        d = abs(x) if abs(x) >= guard else guard
        d = -d if x < 0 else d
        acc += abs((x - y) / d) ** p
    return acc ** (1.0 / p)


def trapezoid_loop(values):
    if len(values) == 1:
        return values[0]
    area = 0.0
    for i in range(len(values) - 1):
        area += (values[i] + values[i + 1]) / 2
    return area / (len(values) - 1)


def mean_std_two_pass(x):
    n = len(x)
    mean = sum(x) / n
    if n == 1:
        return mean, 0.0
    return mean, (sum((v - mean) ** 2 for v in x) / (n - 1)) ** 0.5


class PlantedPredictor:
    """Toy predictor whose class-1 logit reads only the position of one joint.

    ``method="oracle"`` explains with the ground-truth indicator of that joint;
    ``method="random"`` uses the package's random baseline keyed the same way
    as the real predictor.
    """

    def __init__(self, reg, joint, gain=5.0, bias=0.0, random_seed=0):
        self.reg = reg
        self.joint = joint
        self.gain = gain
        self.bias = bias
        self.random_seed = random_seed

    def run(self, streams, method=None, class_idx=None, ids=None):
        from skelxai.attribution import minmax, random_raw
        from skelxai.evaluation import Prediction

        pos = streams[0]  # (B, 2, T, V)
        z = self.bias + self.gain * pos[:, 0, :, self.joint].mean(axis=1) + self.gain * pos[:, 1, :, self.joint].mean(axis=1)
        logits = np.stack([np.zeros_like(z), z], axis=1)
        p1 = 1.0 / (1.0 + np.exp(-z))
        scores = None
        v = pos.shape[-1]
        if method == "oracle":
            scores = np.zeros((len(z), v))
            scores[:, self.joint] = 1.0
        elif method == "random":
            scores = minmax(np.stack([random_raw(v, self.random_seed, i) for i in ids]))
        return Prediction(p1, (p1 > 0.5).astype(int), logits, scores)
