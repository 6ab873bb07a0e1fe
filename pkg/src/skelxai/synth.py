"""Synthetic labelled skeleton sequences with a planted class signal.

Limbs move by forward kinematics over the bone tree, so bone lengths are
preserved up to the additive pixel noise. Label-1 sequences oscillate the
bones that end in ``signal_joints`` with extra amplitude; everything else is
drawn from the same distribution for both classes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .skeleton import JointRegistry, SkeletonSequence

# Supine infant rest pose in pixels, relative to the pelvis (y points down).
_REST_POSE = {
    "mid_pelvis": (0, 0), "upper_chest": (0, -110), "upper_neck": (0, -150),
    "nose": (0, -180), "head": (0, -215), "right_ear": (-22, -185), "left_ear": (22, -185),
    "right_shoulder": (-45, -120), "right_elbow": (-75, -70), "right_wrist": (-90, -20),
    "left_shoulder": (45, -120), "left_elbow": (75, -70), "left_wrist": (90, -20),
    "right_hip": (-25, 5), "right_knee": (-35, 95), "right_ankle": (-40, 180),
    "left_hip": (25, 5), "left_knee": (35, 95), "left_ankle": (40, 180),
}
DEFAULT_SIGNAL_JOINTS = ("right_elbow", "right_wrist", "left_elbow", "left_wrist")


@dataclass(frozen=True)
class SynthConfig:
    n_sequences: int = 160
    fps: float = 4.0
    duration_s: float = 15.0
    signal_joints: tuple = DEFAULT_SIGNAL_JOINTS  # names or indices
    noise_sigma: float = 0.25
    rng_seed: int = 0
    class_balance: float = 0.15
    signal_amplitude: float = 0.45  # extra radians of oscillation on signal bones
    base_amplitude: float = 0.05
    freq_range: tuple = (0.3, 1.2)

    def validate(self, reg: JointRegistry) -> tuple[int, ...]:
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not 0 < self.class_balance < 1:
            raise ConfigError("class_balance must lie in (0, 1)")
        if self.n_sequences < 0 or self.fps <= 0 or self.duration_s <= 0:
            raise ConfigError("n_sequences, fps and duration_s must be positive")
        idx = []
        for j in self.signal_joints:
            i = reg.index(j) if isinstance(j, str) else int(j)
            if not 0 <= i < reg.count:
                raise ConfigError(f"signal joint {j!r} outside the registry")
            idx.append(i)
        return tuple(sorted(set(idx)))

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["signal_joints"] = list(self.signal_joints)
        d["freq_range"] = list(self.freq_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SynthConfig:
        d = dict(d)
        for key in ("signal_joints", "freq_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def rest_pose(reg: JointRegistry) -> np.ndarray:
    """Rest coordinates for the registry; unknown joints sit at their parent."""
    pose = np.zeros((reg.count, 2))
    par = reg.parents
    for v in _topological(reg):
        name = reg.names[v]
        if name in _REST_POSE:
            pose[v] = _REST_POSE[name]
        elif par[v] >= 0:
            pose[v] = pose[par[v]] + (0.0, 10.0)
    return pose


def _topological(reg: JointRegistry) -> list[int]:
    children = {i: [] for i in range(reg.count)}
    for p, c in reg.bones:
        children[p].append(c)
    order, stack = [], [reg.root]
    while stack:
        v = stack.pop()
        order.append(v)
        stack.extend(reversed(children[v]))
    return order


def label_assignment(cfg: SynthConfig) -> np.ndarray:
    n1 = int(round(cfg.n_sequences * cfg.class_balance))
    labels = np.zeros(cfg.n_sequences, dtype=int)
    labels[:n1] = 1
    rng = np.random.default_rng([cfg.rng_seed, 7919])
    return rng.permutation(labels)


def generate(cfg: SynthConfig, reg: JointRegistry) -> list[SkeletonSequence]:
    signal = set(cfg.validate(reg))
    labels = label_assignment(cfg)
    n_frames = int(round(cfg.duration_s * cfg.fps))
    t = np.arange(n_frames) / cfg.fps
    rest = rest_pose(reg)
    par = reg.parents
    order = _topological(reg)
    lo, hi = cfg.freq_range
    out = []
    for i, label in enumerate(labels):
        rng = np.random.default_rng([cfg.rng_seed, i])
        body_scale = rng.uniform(0.9, 1.1)
        origin = np.array([320.0, 260.0]) + rng.uniform(-30, 30, size=2)
        # every bone gets the same number of draws regardless of label
        freqs = rng.uniform(lo, hi, size=(reg.count, 2))
        phases = rng.uniform(0, 2 * np.pi, size=(reg.count, 2))
        amp_jitter = rng.uniform(0.6, 1.4, size=reg.count)
        sway_f = rng.uniform(0.05, 0.2, size=2)
        sway_p = rng.uniform(0, 2 * np.pi, size=2)
        noise = rng.normal(0.0, 1.0, size=(n_frames, reg.count, 2))

        amp = cfg.base_amplitude * amp_jitter
        if label == 1:
            amp = amp + np.array([cfg.signal_amplitude if v in signal else 0.0 for v in range(reg.count)])
        # local bone angle per (frame, child joint)
        local = (amp[None, :, None] * np.sin(2 * np.pi * freqs[None] * t[:, None, None] + phases[None])).sum(-1) / 2
        coords = np.zeros((n_frames, reg.count, 2))
        absolute = np.zeros((n_frames, reg.count))
        for v in order:
            p = par[v]
            if p < 0:
                continue
            absolute[:, v] = absolute[:, p] + local[:, v]
            vec = (rest[v] - rest[p]) * body_scale
            c, s = np.cos(absolute[:, v]), np.sin(absolute[:, v])
            coords[:, v, 0] = coords[:, p, 0] + c * vec[0] - s * vec[1]
            coords[:, v, 1] = coords[:, p, 1] + s * vec[0] + c * vec[1]
        sway = 4.0 * np.sin(2 * np.pi * sway_f[None] * t[:, None] + sway_p[None])
        coords = coords + origin + sway[:, None, :] + cfg.noise_sigma * noise
        out.append(SkeletonSequence(coords=coords, fps=cfg.fps, label=int(label), id=f"synth_{cfg.rng_seed}_{i:04d}"))
    return out


def mean_signal_speed(seq: SkeletonSequence, joints) -> float:
    """Mean per-frame displacement of the given joints, in pixels per frame."""
    c = seq.coords[:, list(joints), :]
    return float(np.linalg.norm(np.diff(c, axis=0), axis=-1).mean())
