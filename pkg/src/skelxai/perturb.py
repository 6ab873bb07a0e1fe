"""Rigid per-joint displacement of skeleton windows.

Every targeted joint moves by a fixed distance ``r`` along a random direction;
the same offset is applied in every frame, so joint trajectories keep their
shape and only shift.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, replace

import numpy as np

from .attribution import JointRanking
from .errors import ConfigError, NonPositiveHeight
from .skeleton import Window


@dataclass(frozen=True)
class PerturbationSpec:
    r_fraction: float = 0.01
    n: int = 50
    target: str = "all"  # topk | non_topk | all
    ranking: JointRanking | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if not self.r_fraction > 0:
            raise ConfigError("r_fraction must be > 0")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.target not in ("topk", "non_topk", "all"):
            raise ConfigError(f"unknown target {self.target!r}")
        if self.target != "all" and self.ranking is None:
            raise ConfigError(f"target {self.target!r} needs a ranking")

    def with_target(self, target: str, ranking: JointRanking | None = None) -> PerturbationSpec:
        return replace(self, target=target, ranking=ranking)


@dataclass(frozen=True)
class PerturbedWindow:
    base: Window
    offsets: np.ndarray  # (joints, 2), zero rows for untouched joints
    coords: np.ndarray


def target_mask(spec: PerturbationSpec, n_joints: int) -> np.ndarray:
    mask = np.zeros(n_joints, dtype=bool)
    if spec.target == "all":
        mask[:] = True
    elif spec.target == "topk":
        mask[spec.ranking.top] = True
    else:
        mask[spec.ranking.rest] = True
    return mask


def draw_angles(rng_seed: int, window_id: str, draw_idx: int, n_joints: int) -> np.ndarray:
    """Azimuth per joint for one draw; joint j always takes the j-th variate of its stream."""
    rng = np.random.default_rng([int(rng_seed), zlib.crc32(window_id.encode("utf-8")), int(draw_idx)])
    return rng.uniform(0.0, 2.0 * np.pi, size=n_joints)


def family_offsets(rng_seed: int, window_id: str, n: int, n_joints: int, r: float) -> np.ndarray:
    """Offsets for draws 0..n-1 at every joint, shape (n, joints, 2)."""
    theta = np.stack([draw_angles(rng_seed, window_id, i, n_joints) for i in range(n)])
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


def perturb(w: Window, spec: PerturbationSpec, height: float, draw_idx: int, theta=None) -> PerturbedWindow:
    """Displace the targeted joints of ``w`` by ``spec.r_fraction * height`` pixels.

    ``theta`` overrides the random azimuths (scalar or one per joint).
    """
    if not height > 0:
        raise NonPositiveHeight(f"height must be positive, got {height}")
    n_joints = w.coords.shape[1]
    r = spec.r_fraction * height
    if theta is None:
        theta = draw_angles(spec.rng_seed, w.id, draw_idx, n_joints)
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (n_joints,))
    mask = target_mask(spec, n_joints)
    offsets = np.where(mask[:, None], np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1), 0.0)
    return PerturbedWindow(w, offsets, w.coords + offsets[None])


def perturbation_family(w: Window, spec: PerturbationSpec, height: float) -> list[PerturbedWindow]:
    return [perturb(w, spec, height, i) for i in range(spec.n)]


def offsets_to_json(family) -> str:
    """Debug dump of a family's offsets."""
    return json.dumps([
        {"window_id": p.base.id, "draw": i, "offsets": p.offsets.tolist()}
        for i, p in enumerate(family)
    ])
