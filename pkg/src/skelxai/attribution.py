"""Per-joint attribution maps: CAM, Grad-CAM, a random baseline and median fusion."""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .errors import KOutOfRange, MixedMethods
from .model import ForwardTrace, ModelInstance, grad_feature_maps_batch

METHODS = ("cam", "gradcam", "random")


@dataclass(frozen=True)
class AttributionMap:
    method: str
    scores: np.ndarray  # (joints,), min-max normalized
    raw: np.ndarray
    class_idx: int
    window_id: str = ""

    def to_dict(self) -> dict:
        return {"window_id": self.window_id, "method": self.method, "scores": [float(s) for s in self.scores]}


@dataclass(frozen=True)
class JointRanking:
    order: np.ndarray  # joint indices, most important first
    k: int

    @property
    def top(self) -> np.ndarray:
        return self.order[: self.k]

    @property
    def rest(self) -> np.ndarray:
        return self.order[self.k:]


def minmax(raw: np.ndarray) -> np.ndarray:
    """Scale the last axis to [0, 1]; constant rows map to all zeros."""
    raw = np.asarray(raw, dtype=float)
    lo = raw.min(axis=-1, keepdims=True)
    span = raw.max(axis=-1, keepdims=True) - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (raw - lo) / safe, 0.0)


def cam_raw(features: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Time-averaged class activation per joint.

    ``features`` is (..., channels, frames, joints) and ``weights`` is either
    (channels,) or broadcastable to (..., channels).
    """
    w = np.asarray(weights, dtype=float)
    weighted = np.einsum("...ctv,...c->...tv", features, w)
    return weighted.mean(axis=-2)


def cam(trace: ForwardTrace, m: ModelInstance, class_idx: int, window_id: str = "") -> AttributionMap:
    raw = cam_raw(trace.feature_maps, m.params["fc.w"][class_idx])
    return AttributionMap("cam", minmax(raw), raw, int(class_idx), window_id)


def gradcam_weights(grads: np.ndarray) -> np.ndarray:
    """Channel weights: gradients averaged over frames and joints."""
    return grads.mean(axis=(-2, -1))


def gradcam_batch(m: ModelInstance, streams, class_idx, tap: int = -1, rectify: bool = False):
    """Raw Grad-CAM scores for a batch, plus the forward result reused by callers."""
    fw, grads = grad_feature_maps_batch(m, streams, class_idx, tap)
    feats = np.moveaxis(fw.taps[tap], -1, 1)
    raw = cam_raw(feats, gradcam_weights(grads))
    if rectify:
        raw = np.maximum(raw, 0.0)
    return raw, fw


def gradcam(m: ModelInstance, streams, class_idx: int, tap: int = -1, rectify: bool = False,
            window_id: str = "") -> AttributionMap:
    raw = gradcam_batch(m, streams, class_idx, tap, rectify)[0][0]
    return AttributionMap("gradcam", minmax(raw), raw, int(class_idx), window_id)


def random_raw(joints: int, rng_seed: int, window_id: str = "") -> np.ndarray:
    rng = np.random.default_rng([int(rng_seed), zlib.crc32(window_id.encode("utf-8"))])
    return rng.uniform(0.0, 1.0, size=joints)


def random_attribution(joints: int, rng_seed: int, window_id: str = "", class_idx: int = 0) -> AttributionMap:
    if joints < 1:
        raise ValueError("joints must be >= 1")
    raw = random_raw(joints, rng_seed, window_id)
    return AttributionMap("random", minmax(raw), raw, class_idx, window_id)


def fuse_scores(member_scores: np.ndarray) -> np.ndarray:
    """Per-joint median over members (axis -2), renormalized to [0, 1]."""
    return minmax(np.median(member_scores, axis=-2))


def ensemble_attribution(maps) -> AttributionMap:
    maps = list(maps)
    if not maps:
        raise ValueError("no attribution maps to fuse")
    if len({m.method for m in maps}) != 1 or len({m.window_id for m in maps}) != 1:
        raise MixedMethods("maps must share method and window")
    stacked = np.stack([m.scores for m in maps])
    raw = np.median(stacked, axis=0)
    return AttributionMap(maps[0].method, minmax(raw), raw, maps[0].class_idx, maps[0].window_id)


def ranking_order(scores: np.ndarray) -> np.ndarray:
    """Joint indices by descending score, ties broken by ascending index."""
    scores = np.asarray(scores, dtype=float)
    return np.lexsort((np.arange(scores.size), -scores))


def rank(amap: AttributionMap | np.ndarray, k: int) -> JointRanking:
    scores = amap.scores if isinstance(amap, AttributionMap) else np.asarray(amap)
    if not 1 <= k <= scores.size:
        raise KOutOfRange(f"k={k} outside 1..{scores.size}")
    return JointRanking(ranking_order(scores), int(k))
