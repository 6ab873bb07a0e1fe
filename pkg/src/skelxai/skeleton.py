"""Skeleton sequences, the joint/bone graph, windowing and model input streams."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, SequenceTooShort, ShapeMismatch

# 19-point infant layout, parent before child.
DEFAULT_JOINTS = (
    "head", "nose", "right_ear", "left_ear", "upper_neck",
    "right_shoulder", "right_elbow", "right_wrist", "upper_chest",
    "left_shoulder", "left_elbow", "left_wrist", "mid_pelvis",
    "right_hip", "right_knee", "right_ankle", "left_hip", "left_knee", "left_ankle",
)
DEFAULT_BONES = (
    ("mid_pelvis", "upper_chest"),
    ("upper_chest", "upper_neck"),
    ("upper_neck", "nose"),
    ("nose", "head"),
    ("nose", "right_ear"),
    ("nose", "left_ear"),
    ("upper_chest", "right_shoulder"),
    ("right_shoulder", "right_elbow"),
    ("right_elbow", "right_wrist"),
    ("upper_chest", "left_shoulder"),
    ("left_shoulder", "left_elbow"),
    ("left_elbow", "left_wrist"),
    ("mid_pelvis", "right_hip"),
    ("right_hip", "right_knee"),
    ("right_knee", "right_ankle"),
    ("mid_pelvis", "left_hip"),
    ("left_hip", "left_knee"),
    ("left_knee", "left_ankle"),
)
DEFAULT_CENTER = ("mid_pelvis", "right_hip", "left_hip")


@dataclass(frozen=True)
class JointRegistry:
    """Ordered joint names plus a bone tree given as (parent, child) index pairs."""

    names: tuple[str, ...]
    bones: tuple[tuple[int, int], ...]
    center_joints: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "bones", tuple((int(p), int(c)) for p, c in self.bones))
        object.__setattr__(self, "center_joints", tuple(int(i) for i in self.center_joints))
        n = len(self.names)
        if len(set(self.names)) != n:
            raise ConfigError("joint names must be unique")
        for required in ("head", "left_ankle"):
            if required not in self.names:
                raise ConfigError(f"registry must contain {required!r}")
        if len(self.bones) != n - 1:
            raise ConfigError("bone graph must be a tree (count - 1 edges)")
        parent = [-1] * n
        for p, c in self.bones:
            if not (0 <= p < n and 0 <= c < n) or p == c:
                raise ConfigError(f"bad bone ({p}, {c})")
            if parent[c] != -1:
                raise ConfigError(f"joint {c} has two parents")
            parent[c] = p
        roots = [i for i in range(n) if parent[i] == -1]
        if len(roots) != 1:
            raise ConfigError("bone graph must have exactly one root")
        for v in range(n):
            seen, u = set(), v
            while parent[u] != -1:
                if u in seen:
                    raise ConfigError("bone graph contains a cycle")
                seen.add(u)
                u = parent[u]
        if any(not 0 <= i < n for i in self.center_joints):
            raise ConfigError("center joint index out of range")

    @property
    def count(self) -> int:
        return len(self.names)

    @property
    def parents(self) -> np.ndarray:
        par = np.full(self.count, -1, dtype=int)
        for p, c in self.bones:
            par[c] = p
        return par

    @property
    def root(self) -> int:
        return int(np.flatnonzero(self.parents == -1)[0])

    def index(self, name: str) -> int:
        return self.names.index(name)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.count, self.count))
        for p, c in self.bones:
            a[p, c] = a[c, p] = 1.0
        return a

    def permuted(self, perm) -> JointRegistry:
        """Registry with joints relabelled so that new joint i is old joint perm[i]."""
        perm = list(perm)
        inv = {old: new for new, old in enumerate(perm)}
        return JointRegistry(
            names=[self.names[o] for o in perm],
            bones=[(inv[p], inv[c]) for p, c in self.bones],
            center_joints=[inv[i] for i in self.center_joints],
        )

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "bones": [list(b) for b in self.bones],
            "center_joints": list(self.center_joints),
        }

    @classmethod
    def from_dict(cls, d: dict) -> JointRegistry:
        names = list(d["names"])

        def idx(x):
            return names.index(x) if isinstance(x, str) else int(x)

        return cls(
            names=names,
            bones=[(idx(p), idx(c)) for p, c in d["bones"]],
            center_joints=[idx(c) for c in d.get("center_joints", [])],
        )

    @classmethod
    def load(cls, path) -> JointRegistry:
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_registry() -> JointRegistry:
    names = DEFAULT_JOINTS
    return JointRegistry(
        names=names,
        bones=[(names.index(p), names.index(c)) for p, c in DEFAULT_BONES],
        center_joints=[names.index(c) for c in DEFAULT_CENTER],
    )


@dataclass(frozen=True)
class SkeletonSequence:
    coords: np.ndarray  # (frames, joints, 2), pixels
    fps: float
    label: int
    id: str

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim != 3 or coords.shape[2] != 2:
            raise ShapeMismatch(f"coords must be (frames, joints, 2), got {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise DataError(f"sequence {self.id}: non-finite coordinates")
        if not self.fps > 0:
            raise DataError(f"sequence {self.id}: fps must be positive")
        if self.label not in (0, 1):
            raise DataError(f"sequence {self.id}: label must be 0 or 1")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @property
    def n_frames(self) -> int:
        return self.coords.shape[0]

    def check(self, reg: JointRegistry) -> None:
        if self.n_frames < 2:
            raise DataError(f"sequence {self.id}: needs at least 2 frames")
        if self.coords.shape[1] != reg.count:
            raise ShapeMismatch(
                f"sequence {self.id}: {self.coords.shape[1]} joints, registry has {reg.count}"
            )


@dataclass(frozen=True)
class Window:
    source_id: str
    start_frame: int
    end_frame: int
    coords: np.ndarray  # (win_frames, joints, 2)
    label: int = 0

    @property
    def id(self) -> str:
        return f"{self.source_id}@{self.start_frame}"


@dataclass(frozen=True)
class WindowPolicy:
    seconds: float = 5.0
    guard_frames: int | None = None  # None: one window length at each end
    max_per_sequence: int | None = None

    def win_frames(self, fps: float) -> int:
        return int(round(self.seconds * fps))


def extract_windows(seq: SkeletonSequence, policy: WindowPolicy, rng_seed: int) -> list[Window]:
    """Sample non-overlapping windows away from both ends of a sequence.

    The usable region is cut into ``floor(usable / win)`` back-to-back slots
    (shifted by a random offset into the leftover frames); a random subset of
    at most ``policy.max_per_sequence`` slots is returned in time order.
    """
    win = policy.win_frames(seq.fps)
    guard = win if policy.guard_frames is None else int(policy.guard_frames)
    usable = seq.n_frames - 2 * guard
    if win < 2 or usable < win:
        raise SequenceTooShort(
            f"sequence {seq.id}: {seq.n_frames} frames cannot hold a {win}-frame window "
            f"after {guard}-frame guards"
        )
    n_slots = usable // win
    n_take = n_slots if policy.max_per_sequence is None else min(n_slots, policy.max_per_sequence)
    rng = np.random.default_rng([int(rng_seed), _stable_hash(seq.id)])
    offset = int(rng.integers(0, usable - n_slots * win + 1))
    slots = np.sort(rng.choice(n_slots, size=n_take, replace=False))
    out = []
    for s in slots:
        start = guard + offset + int(s) * win
        out.append(Window(seq.id, start, start + win, seq.coords[start:start + win], seq.label))
    return out


def _stable_hash(text: str) -> int:
    import zlib

    return zlib.crc32(text.encode("utf-8"))


def frame_heights(coords: np.ndarray, reg: JointRegistry) -> np.ndarray:
    c = np.asarray(coords)
    return np.linalg.norm(c[..., reg.index("head"), :] - c[..., reg.index("left_ankle"), :], axis=-1)


def median_height(w: Window | np.ndarray, reg: JointRegistry) -> float:
    """Median over frames of the head to left-ankle distance, in pixels."""
    coords = w.coords if isinstance(w, Window) else w
    return float(np.median(frame_heights(coords, reg)))


@dataclass(frozen=True)
class CenterScale:
    """Affine preprocessing fitted once per window: subtract a pelvis centre, divide by height."""

    center: np.ndarray = field(default_factory=lambda: np.zeros(2))
    scale: float = 1.0

    @classmethod
    def fit(cls, coords: np.ndarray, reg: JointRegistry) -> CenterScale:
        joints = list(reg.center_joints) or [reg.root]
        center = coords[:, joints, :].mean(axis=(0, 1))
        scale = median_height(coords, reg)
        if not scale > 0:
            scale = 1.0
        return cls(center=center, scale=float(scale))

    def apply(self, coords: np.ndarray) -> np.ndarray:
        return (coords - self.center) / self.scale

    def invert(self, normed: np.ndarray) -> np.ndarray:
        return normed * self.scale + self.center


@dataclass(frozen=True)
class StreamTensor:
    kind: str  # position | velocity | bone
    data: np.ndarray  # (channels, win_frames, joints)


def coords_to_streams(coords: np.ndarray, reg: JointRegistry, prep: CenterScale):
    """Position, velocity and bone arrays for one or many windows.

    ``coords`` has shape (..., frames, joints, 2); each returned array has shape
    (..., channels, frames, joints).
    """
    pos = prep.apply(np.asarray(coords, dtype=float))
    vel = np.empty_like(pos)
    vel[..., :-1, :, :] = pos[..., 1:, :, :] - pos[..., :-1, :, :]
    vel[..., -1, :, :] = vel[..., -2, :, :]
    par = reg.parents
    has_parent = par >= 0
    bone = np.zeros(pos.shape[:-1])
    diff = pos[..., has_parent, :] - pos[..., par[has_parent], :]
    bone[..., has_parent] = np.sqrt((diff**2).sum(axis=-1))
    return (
        np.moveaxis(pos, -1, -3),
        np.moveaxis(vel, -1, -3),
        bone[..., None, :, :],
    )


def derive_streams(w: Window, reg: JointRegistry, prep: CenterScale | None = None):
    """The three model input streams of a window, after center-scale preprocessing."""
    if w.coords.shape[1] != reg.count:
        raise ShapeMismatch(f"window has {w.coords.shape[1]} joints, registry has {reg.count}")
    if w.coords.shape[0] < 2:
        raise DataError("window needs at least 2 frames for the velocity stream")
    if prep is None:
        prep = CenterScale.fit(w.coords, reg)
    pos, vel, bone = coords_to_streams(w.coords, reg, prep)
    return (
        StreamTensor("position", pos),
        StreamTensor("velocity", vel),
        StreamTensor("bone", bone),
    )


def position_to_coords(position: StreamTensor, prep: CenterScale) -> np.ndarray:
    return prep.invert(np.moveaxis(position.data, 0, -1))


# -- ingestion ---------------------------------------------------------------

def sequence_to_dict(seq: SkeletonSequence, reg: JointRegistry) -> dict:
    return {
        "id": seq.id,
        "fps": seq.fps,
        "label": int(seq.label),
        "joints": list(reg.names),
        "frames": seq.coords.tolist(),
    }


def sequence_from_dict(d: dict, reg: JointRegistry | None = None) -> SkeletonSequence:
    coords = np.asarray(d["frames"], dtype=float).reshape(len(d["frames"]), -1, 2)
    if reg is not None:
        names = list(d.get("joints", reg.names))
        if names != list(reg.names):
            try:
                order = [names.index(n) for n in reg.names]
            except ValueError as exc:
                raise DataError(f"sequence {d.get('id')}: joint set differs from registry") from exc
            coords = coords[:, order, :]
    seq = SkeletonSequence(coords=coords, fps=float(d["fps"]), label=int(d["label"]), id=str(d["id"]))
    if reg is not None:
        seq.check(reg)
    return seq


def save_sequence(seq: SkeletonSequence, reg: JointRegistry, path) -> None:
    Path(path).write_text(json.dumps(sequence_to_dict(seq, reg)))


def load_sequence(path, reg: JointRegistry | None = None) -> SkeletonSequence:
    return sequence_from_dict(json.loads(Path(path).read_text()), reg)


def load_sequence_csv(csv_path, meta_path, reg: JointRegistry) -> SkeletonSequence:
    """Read the long CSV form (frame, joint, x, y) with a sidecar metadata JSON.

    ``joint`` may be a name or an integer index into the registry.
    """
    meta = json.loads(Path(meta_path).read_text())
    rows = []
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            j = row["joint"]
            v = int(j) if j.strip().lstrip("-").isdigit() else reg.index(j)
            rows.append((int(row["frame"]), v, float(row["x"]), float(row["y"])))
    if not rows:
        raise DataError(f"{csv_path}: no rows")
    n_frames = max(r[0] for r in rows) + 1
    coords = np.full((n_frames, reg.count, 2), np.nan)
    for f, v, x, y in rows:
        coords[f, v] = (x, y)
    seq = SkeletonSequence(coords=coords, fps=float(meta["fps"]), label=int(meta["label"]), id=str(meta["id"]))
    seq.check(reg)
    return seq
