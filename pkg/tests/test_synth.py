from __future__ import annotations

import numpy as np
import pytest

from skelxai.errors import ConfigError
from skelxai.skeleton import default_registry, frame_heights
from skelxai.synth import SynthConfig, generate, label_assignment, mean_signal_speed

REG = default_registry()


@pytest.fixture(scope="module")
def default_run():
    cfg = SynthConfig()
    return cfg, generate(cfg, REG)


def test_class_ratio_mirrors_24_of_160(default_run):
    _, seqs = default_run
    assert len(seqs) == 160
    assert sum(s.label for s in seqs) == 24


def test_label_count_is_exact_for_any_size():
    for n in (1, 7, 33):
        labels = label_assignment(SynthConfig(n_sequences=n, class_balance=0.3))
        assert labels.sum() == round(n * 0.3)


def test_height_within_ten_percent_of_median(default_run):
    _, seqs = default_run
    for s in seqs:
        h = frame_heights(s.coords, REG)
        med = np.median(h)
        assert np.all(np.abs(h - med) <= 0.1 * med)


def test_bone_length_drift_below_one_percent():
    seqs = generate(SynthConfig(n_sequences=12, noise_sigma=0.0, class_balance=0.5), REG)
    for s in seqs:
        for p, c in REG.bones:
            length = np.linalg.norm(s.coords[:, c] - s.coords[:, p], axis=-1)
            assert np.ptp(length) < 0.01 * np.median(length)


def test_generation_is_bit_reproducible():
    cfg = SynthConfig(n_sequences=5, rng_seed=9)
    a, b = generate(cfg, REG), generate(cfg, REG)
    for x, y in zip(a, b):
        assert x.id == y.id and x.label == y.label
        assert np.array_equal(x.coords, y.coords)


def test_signal_speed_threshold_classifier(default_run):
    cfg, seqs = default_run
    joints = cfg.validate(REG)
    speed = np.array([mean_signal_speed(s, joints) for s in seqs])
    labels = np.array([s.label for s in seqs])
    best = max(np.mean((speed > t) == labels) for t in np.unique(speed))
    assert best >= 0.95


def test_zero_signal_amplitude_makes_label_irrelevant():
    base = dict(n_sequences=8, noise_sigma=0.0, signal_amplitude=0.0)
    a = generate(SynthConfig(class_balance=0.25, **base), REG)
    b = generate(SynthConfig(class_balance=0.75, **base), REG)
    assert [s.label for s in a] != [s.label for s in b]
    for x, y in zip(a, b):
        assert np.array_equal(x.coords, y.coords)


@pytest.mark.parametrize("kwargs", [
    {"noise_sigma": -1.0}, {"class_balance": 0.0}, {"class_balance": 1.0},
    {"signal_joints": ("no_such_joint",)}, {"signal_joints": (40,)},
])
def test_invalid_configs(kwargs):
    with pytest.raises((ConfigError, ValueError)):
        SynthConfig(**kwargs).validate(REG)


def test_config_dict_roundtrip():
    cfg = SynthConfig(signal_joints=("right_wrist", 3), freq_range=(0.2, 0.4))
    assert SynthConfig.from_dict(cfg.to_dict()) == cfg
