"""Faithfulness and stability scores, the AUC over k and cross-window aggregation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyFamily, MissingK, NoConsistentPerturbation, ShapeMismatch

METRICS = ("pgi", "pgu", "risp", "risv", "risb", "ros", "rrs")
STABILITY_METRICS = ("risp", "risv", "risb", "ros", "rrs")


@dataclass(frozen=True)
class MetricConfig:
    p_norm: float = 2.0
    epsilon_min: float = 1e-6
    denom_guard: float = 1e-8
    k_range: tuple = (1, 19)

    def __post_init__(self):
        if self.p_norm < 1:
            raise ConfigError("p_norm must be >= 1")
        if not (self.epsilon_min > 0 and self.denom_guard > 0):
            raise ConfigError("epsilon_min and denom_guard must be > 0")
        lo, hi = self.k_range
        if not 1 <= lo <= hi:
            raise ConfigError(f"bad k_range {self.k_range}")

    @property
    def ks(self) -> list[int]:
        return list(range(self.k_range[0], self.k_range[1] + 1))


@dataclass(frozen=True)
class MetricRecord:
    metric: str
    method: str
    window_id: str
    k: int
    value: float
    n_valid: int


@dataclass(frozen=True)
class AggregateRecord:
    metric: str
    method: str
    auc_mean: float
    auc_std: float
    n_windows: int


def prediction_gap(f_orig: float, f_perturbed) -> float:
    f = np.asarray(f_perturbed, dtype=float)
    if f.size == 0:
        raise EmptyFamily("perturbation family is empty")
    return float(np.abs(f_orig - f).mean())


def pgi(f_orig: float, f_perturbed) -> float:
    """Mean absolute prediction change when the top-k joints are perturbed."""
    return prediction_gap(f_orig, f_perturbed)


def pgu(f_orig: float, f_perturbed_non_topk) -> float:
    """Mean absolute prediction change when the remaining joints are perturbed."""
    return prediction_gap(f_orig, f_perturbed_non_topk)


def relative_change(a, b, guard: float = 1e-8, p: float = 2.0) -> float:
    """p-norm of (a - b) / a, with |a| floored at ``guard`` element-wise."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    denom = np.where(a < 0, -1.0, 1.0) * np.maximum(np.abs(a), guard)
    return float(np.linalg.norm(((a - b) / denom).ravel(), ord=p))


def stability(e_orig, e_family, denom_family, cfg: MetricConfig, pred_consistent):
    """Worst-case ratio of explanation change to input/output/representation change.

    ``denom_family[i]`` is the (original, perturbed) pair feeding the
    denominator for perturbation i. Perturbations that flipped the predicted
    class are ignored. Returns ``(value, n_valid)``.
    """
    ratios = []
    for e_p, (d0, d1), ok in zip(e_family, denom_family, pred_consistent):
        if not ok:
            continue
        num = relative_change(e_orig, e_p, cfg.denom_guard, cfg.p_norm)
        den = relative_change(d0, d1, cfg.denom_guard, cfg.p_norm)
        ratios.append(num / max(den, cfg.epsilon_min))
    if not ratios:
        raise NoConsistentPerturbation("every perturbation changed the predicted class")
    return float(max(ratios)), len(ratios)


def auc_over_k(records) -> float:
    """Trapezoid area over k divided by the k span, i.e. the mean curve height.

    Accepts MetricRecords or (k, value) pairs; k must be contiguous.
    """
    pairs = sorted((r.k, r.value) if isinstance(r, MetricRecord) else (int(r[0]), float(r[1])) for r in records)
    if not pairs:
        raise MissingK("no records")
    ks = np.array([k for k, _ in pairs])
    if np.any(np.diff(ks) != 1):
        raise MissingK(f"k values not contiguous: {ks.tolist()}")
    vals = np.array([v for _, v in pairs])
    if len(vals) == 1:
        return float(vals[0])
    area = float(np.sum((vals[1:] + vals[:-1]) / 2.0))
    return area / float(ks[-1] - ks[0])


def aggregate(aucs, metric: str = "", method: str = "") -> AggregateRecord:
    x = np.asarray(list(aucs), dtype=float)
    if x.size == 0:
        raise ValueError("aggregate needs at least one window")
    std = float(x.std(ddof=1)) if x.size > 1 else 0.0
    return AggregateRecord(metric, method, float(x.mean()), std, int(x.size))
