"""Per-window evaluation: attribution, perturbation families and all seven metrics.

A :class:`Predictor` wraps either the whole ensemble (median-fused
predictions and attributions) or a single member, so the same sweep serves
both scopes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attribution import AttributionMap, fuse_scores, gradcam_batch, minmax, random_raw, ranking_order
from .errors import NoConsistentPerturbation
from .metrics import STABILITY_METRICS, MetricConfig, MetricRecord, pgi, pgu, stability
from .model import Ensemble, ModelInstance, forward_batch, softmax
from .perturb import PerturbationSpec, family_offsets
from .skeleton import CenterScale, JointRegistry, Window, coords_to_streams, median_height


@dataclass
class Prediction:
    prob1: np.ndarray  # (B,) class-1 probability (median across members for an ensemble)
    pred: np.ndarray  # (B,) predicted class
    logits: np.ndarray  # (B, members * classes), flattened in member order
    scores: np.ndarray | None = None  # (B, joints) attribution for the requested class

    def prob_of(self, cls) -> np.ndarray:
        return np.where(np.asarray(cls) == 1, self.prob1, 1.0 - self.prob1)


@dataclass
class Predictor:
    members: list
    reg: JointRegistry
    name: str = "ensemble"
    fused: bool = True
    gradcam_tap: int = -1
    random_seed: int = 0

    @classmethod
    def for_ensemble(cls, e: Ensemble, reg, **kw) -> Predictor:
        return cls(list(e.members), reg, "ensemble", True, **kw)

    @classmethod
    def for_member(cls, m: ModelInstance, reg, name: str, **kw) -> Predictor:
        return cls([m], reg, name, False, **kw)

    def run(self, streams, method: str | None = None, class_idx=None, ids=None) -> Prediction:
        """Predict, and when ``method`` is given also explain ``class_idx``."""
        logits, member_scores = [], []
        v = streams[0].shape[-1]
        for j, m in enumerate(self.members):
            if method == "gradcam":
                raw, fw = gradcam_batch(m, streams, class_idx, self.gradcam_tap)
            else:
                fw = forward_batch(m, streams, keep_taps=method == "cam")
                raw = None
                if method == "cam":
                    w = m.params["fc.w"][np.broadcast_to(np.asarray(class_idx), fw.logits.shape[:1])]
                    raw = np.einsum("btvc,bc->bv", fw.taps[-1], w) / fw.taps[-1].shape[1]
                elif method == "random":
                    suffix = f"/m{j}" if self.fused else ""
                    raw = np.stack([random_raw(v, self.random_seed, f"{i}{suffix}") for i in ids])
            logits.append(fw.logits)
            if raw is not None:
                member_scores.append(minmax(raw))
        logits = np.stack(logits, axis=1)  # (B, M, classes)
        p1 = softmax(logits)[..., 1]
        if self.fused:
            prob1 = np.median(p1, axis=1)
            pred = (prob1 > 0.5).astype(int)
        else:
            prob1 = p1[:, 0]
            pred = np.argmax(logits[:, 0], axis=1)
        scores = None
        if member_scores:
            stacked = np.stack(member_scores, axis=1)
            scores = fuse_scores(stacked) if self.fused else stacked[:, 0]
        return Prediction(prob1, pred, logits.reshape(len(prob1), -1), scores)


@dataclass
class WindowResult:
    window_id: str
    method: str
    records: list
    attribution: AttributionMap | None
    skipped: list = field(default_factory=list)  # (metric, reason)


def _streams(coords, reg, prep):
    return coords_to_streams(coords, reg, prep)


def base_prediction(window: Window, predictor: Predictor):
    prep = CenterScale.fit(window.coords, predictor.reg)
    streams = _streams(window.coords[None], predictor.reg, prep)
    return predictor.run(streams), streams, prep


def evaluate_window(window: Window, predictor: Predictor, method: str, cfg: MetricConfig,
                    spec: PerturbationSpec, cache: dict | None = None) -> WindowResult:
    """Sweep k over the configured range and score one attribution method on one window.

    ``cache`` maps a perturbed joint set to the class-1 probabilities of its
    family; it may be shared between methods evaluated on the same window and
    predictor because the offsets do not depend on the method.
    """
    reg = predictor.reg
    n_joints = reg.count
    wid = window.id
    cache = {} if cache is None else cache
    base, streams, prep = base_prediction(window, predictor)
    c = int(base.pred[0])
    explained = predictor.run(streams, method, c, [wid])
    e_x = explained.scores[0]
    amap = AttributionMap(method, e_x, e_x, c, wid)
    order = ranking_order(e_x)

    height = median_height(window, reg)
    offsets = family_offsets(spec.rng_seed, wid, spec.n, n_joints, spec.r_fraction * height)

    def family_coords(joints):
        mask = np.zeros(n_joints)
        mask[list(joints)] = 1.0
        return window.coords[None] + (offsets * mask[None, :, None])[:, None]

    # stability family: every joint displaced, explanations recomputed
    all_key = tuple(range(n_joints))
    fam = _streams(family_coords(all_key), reg, prep)
    ids = [f"{wid}/draw{i}" for i in range(spec.n)]
    pert = predictor.run(fam, method, c, ids)
    cache.setdefault(all_key, pert.prob1)

    # faithfulness families for every k, batched over the uncached joint sets
    sets = {}
    for k in cfg.ks:
        sets[("top", k)] = tuple(sorted(order[:k].tolist()))
        rest = order[k:]
        if rest.size:
            sets[("rest", k)] = tuple(sorted(rest.tolist()))
    todo = sorted({s for s in sets.values() if s not in cache})
    if todo:
        coords = np.concatenate([family_coords(s) for s in todo])
        probs = predictor.run(_streams(coords, reg, prep)).prob1.reshape(len(todo), spec.n)
        for s, p in zip(todo, probs):
            cache[s] = p

    f0 = float(base.prob1[0])
    records, skipped = [], []
    for k in cfg.ks:
        records.append(MetricRecord("pgi", method, wid, k, pgi(f0, cache[sets[("top", k)]]), spec.n))
        key = ("rest", k)
        value = pgu(f0, cache[sets[key]]) if key in sets else 0.0
        records.append(MetricRecord("pgu", method, wid, k, value, spec.n))

    consistent = pert.pred == c
    denominators = {
        "risp": (streams[0][0], fam[0]),
        "risv": (streams[1][0], fam[1]),
        "risb": (streams[2][0], fam[2]),
        "ros": (np.atleast_1d(base.prob_of(c)), pert.prob_of(c)[:, None]),
        "rrs": (base.logits[0], pert.logits),
    }
    for metric in STABILITY_METRICS:
        orig, family = denominators[metric]
        try:
            value, n_valid = stability(e_x, pert.scores, [(orig, f) for f in family], cfg, consistent)
        except NoConsistentPerturbation as exc:
            skipped.append((metric, str(exc)))
            continue
        records.extend(MetricRecord(metric, method, wid, k, value, n_valid) for k in cfg.ks)
    return WindowResult(wid, method, records, amap, skipped)
