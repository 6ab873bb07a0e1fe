"""End-to-end pipeline: generate, train, evaluate, ttest and report.

Every command takes a :class:`RunConfig` and works inside ``cfg.out``:

    out/data/{train,test}/*.json   synthetic sequences + data/manifest.json
    out/models/member_XX.json      ensemble members + models/training_report.json
    out/results/*.csv              per-window records, AUCs, aggregates, t-tests
    out/report/                    figures and Markdown tables

Output files carry the config hash and format version in a leading comment
(CSV) or top-level field (JSON) so stale artifacts are easy to spot.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import combinations
from pathlib import Path

import numpy as np

from .attribution import METHODS
from .errors import ConfigError, InsufficientSamples, MissingInput, SequenceTooShort
from .evaluation import Predictor, base_prediction, evaluate_window
from .metrics import METRICS, MetricConfig, aggregate, auc_over_k
from .model import (Ensemble, MiniGcnConfig, stack_examples, default_roster, fit_input_scale, fold_assignment, init_model,
                    load_model, save_model, train_toy)
from .perturb import PerturbationSpec
from .skeleton import JointRegistry, WindowPolicy, default_registry, derive_streams, extract_windows, load_sequence, save_sequence
from .stats import unpaired_ttest
from .synth import SynthConfig, generate

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
SCOPES = ("ensemble", "per_model", "both")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    lr: float = 0.01
    batch_size: int = 32
    weight_decay: float = 1e-4


@dataclass(frozen=True)
class RunConfig:
    out: str = "run"
    data_dir: str | None = None  # default: <out>/data
    model_dir: str | None = None  # default: <out>/models
    output_dir: str | None = None  # default: <out>/results
    registry_file: str | None = None
    synth: SynthConfig = field(default_factory=SynthConfig)
    train_synth: SynthConfig = field(default_factory=lambda: SynthConfig(n_sequences=200, class_balance=0.5, rng_seed=1))
    window: WindowPolicy = field(default_factory=lambda: WindowPolicy(max_per_sequence=1))
    roster: tuple = field(default_factory=lambda: tuple(default_roster(0)))
    train: TrainConfig = field(default_factory=TrainConfig)
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    metrics: MetricConfig = field(default_factory=MetricConfig)
    methods: tuple = METHODS
    scope: str = "ensemble"
    gradcam_tap: int = -1
    rng_seed: int = 0
    workers: int = 1
    report_windows: int = 4  # skeleton figures per method

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {list(METHODS)}")
        if self.scope not in SCOPES:
            raise ConfigError(f"scope must be one of {SCOPES}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.roster:
            raise ConfigError("roster must list at least one model")

    # -- paths ---------------------------------------------------------------
    @property
    def data_path(self) -> Path:
        return Path(self.data_dir or Path(self.out) / "data")

    @property
    def model_path(self) -> Path:
        return Path(self.model_dir or Path(self.out) / "models")

    @property
    def results_path(self) -> Path:
        return Path(self.output_dir or Path(self.out) / "results")

    @property
    def report_path(self) -> Path:
        return Path(self.out) / "report"

    def registry(self) -> JointRegistry:
        if self.registry_file is None:
            return default_registry()
        path = Path(self.registry_file)
        if not path.exists():
            raise MissingInput(f"registry file {path} not found")
        return JointRegistry.load(path)

    def scopes(self) -> tuple:
        return ("ensemble", "per_model") if self.scope == "both" else (self.scope,)

    # -- serialization ---------------------------------------------------------
    def to_dict(self) -> dict:
        d = {
            "out": self.out, "data_dir": self.data_dir, "model_dir": self.model_dir,
            "output_dir": self.output_dir, "registry_file": self.registry_file,
            "synth": self.synth.to_dict(), "train_synth": self.train_synth.to_dict(),
            "window": asdict(self.window), "roster": [asdict(c) for c in self.roster],
            "train": asdict(self.train),
            "perturbation": {"r_fraction": self.perturbation.r_fraction, "n": self.perturbation.n,
                             "rng_seed": self.perturbation.rng_seed},
            "metrics": {**asdict(self.metrics), "k_range": list(self.metrics.k_range)},
            "methods": list(self.methods), "scope": self.scope, "gradcam_tap": self.gradcam_tap,
            "rng_seed": self.rng_seed, "workers": self.workers, "report_windows": self.report_windows,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            for key in ("synth", "train_synth"):
                if key in d:
                    d[key] = SynthConfig.from_dict(d[key])
            if "window" in d:
                d["window"] = WindowPolicy(**d["window"])
            if "roster" in d:
                d["roster"] = tuple(MiniGcnConfig(**c) for c in d["roster"])
            if "train" in d:
                d["train"] = TrainConfig(**d["train"])
            if "perturbation" in d:
                d["perturbation"] = PerturbationSpec(**d["perturbation"])
            if "metrics" in d:
                m = dict(d["metrics"])
                if "k_range" in m:
                    m["k_range"] = tuple(m["k_range"])
                d["metrics"] = MetricConfig(**m)
            if "methods" in d:
                d["methods"] = tuple(d["methods"])
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def load(cls, path) -> RunConfig:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def with_seed(self, seed: int) -> RunConfig:
        """Re-derive every seed in the config from one global seed."""
        return replace(
            self,
            rng_seed=seed,
            synth=replace(self.synth, rng_seed=seed),
            train_synth=replace(self.train_synth, rng_seed=seed + 1),
            roster=tuple(replace(c, rng_seed=seed * 1000 + i) for i, c in enumerate(self.roster)),
            perturbation=replace(self.perturbation, rng_seed=seed),
        )

    def hash(self) -> str:
        """Digest of the settings that shape outputs (paths and worker count excluded)."""
        d = self.to_dict()
        for key in ("out", "data_dir", "model_dir", "output_dir", "workers"):
            d.pop(key)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- small I/O helpers ---------------------------------------------------------

def _header(cfg: RunConfig, **extra) -> str:
    items = {"format_version": FORMAT_VERSION, "config_hash": cfg.hash(), **extra}
    return "# " + " ".join(f"{k}={v}" for k, v in items.items()) + "\n"


def write_csv(path: Path, cfg: RunConfig, columns, rows, **extra) -> None:
    buf = io.StringIO()
    buf.write(_header(cfg, **extra))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


def read_csv(path: Path) -> list[dict]:
    if not path.exists():
        raise MissingInput(f"{path} not found; run the previous pipeline step first")
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_json(path: Path, cfg: RunConfig, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"format_version": FORMAT_VERSION, "config_hash": cfg.hash(), **payload}
    path.write_text(json.dumps(body, indent=1, sort_keys=True))


def read_json(path: Path) -> dict:
    if not path.exists():
        raise MissingInput(f"{path} not found; run the previous pipeline step first")
    return json.loads(path.read_text())


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- generate --------------------------------------------------------------------

def cmd_generate(cfg: RunConfig) -> Path:
    reg = cfg.registry()
    root = cfg.data_path
    entries = []
    for split, sc in (("train", cfg.train_synth), ("test", cfg.synth)):
        folder = root / split
        folder.mkdir(parents=True, exist_ok=True)
        for old in folder.glob("*.json"):
            old.unlink()
        for seq in generate(sc, reg):
            name = f"{split}/{seq.id}.json"
            save_sequence(seq, reg, root / name)
            entries.append({"id": seq.id, "label": seq.label, "split": split, "file": name,
                            "sha256": file_hash(root / name)})
    manifest = root / "manifest.json"
    write_json(manifest, cfg, {
        "seeds": {"train": cfg.train_synth.rng_seed, "test": cfg.synth.rng_seed},
        "synth": {"train": cfg.train_synth.to_dict(), "test": cfg.synth.to_dict()},
        "sequences": entries,
    })
    log.info("generated %d sequences into %s", len(entries), root)
    return manifest


def load_split(cfg: RunConfig, split: str, reg: JointRegistry):
    manifest = read_json(cfg.data_path / "manifest.json")
    return [load_sequence(cfg.data_path / e["file"], reg) for e in manifest["sequences"] if e["split"] == split]


def split_windows(cfg: RunConfig, split: str, reg: JointRegistry):
    windows, skipped = [], []
    for seq in load_split(cfg, split, reg):
        try:
            windows.extend(extract_windows(seq, cfg.window, cfg.rng_seed))
        except SequenceTooShort as exc:
            skipped.append((seq.id, str(exc)))
    return windows, skipped


# -- train -----------------------------------------------------------------------

def member_file(cfg: RunConfig, i: int) -> Path:
    return cfg.model_path / f"member_{i:02d}.json"


def cmd_train(cfg: RunConfig) -> Path:
    reg = cfg.registry()
    windows, _ = split_windows(cfg, "train", reg)
    if not windows:
        raise MissingInput("no training windows; run generate first")
    data = [(derive_streams(w, reg), w.label) for w in windows]
    streams, _ = stack_examples(data)
    folds = fold_assignment(len(data), len(cfg.roster))
    members = []
    for i, c in enumerate(cfg.roster):
        keep = folds != i if len(cfg.roster) > 1 else np.ones(len(data), dtype=bool)
        members.append(fit_input_scale(init_model(c, reg), [a[keep] for a in streams]))
    ens = Ensemble(members)
    cfg.model_path.mkdir(parents=True, exist_ok=True)
    for i, m in enumerate(ens.members):
        save_model(m, cfg.model_path / f"init_{i:02d}.json")
    t = cfg.train
    trained, report = train_toy(ens, data, t.epochs, t.lr, cfg.rng_seed,
                                batch_size=t.batch_size, weight_decay=t.weight_decay)
    for i, m in enumerate(trained.members):
        save_model(m, member_file(cfg, i))
        report[i]["file"] = member_file(cfg, i).name
        report[i]["config"] = asdict(m.config)
    path = cfg.model_path / "training_report.json"
    write_json(path, cfg, {
        "n_windows": len(data),
        "fold_of_window": {w.id: int(f) for w, f in zip(windows, folds)},
        "members": report,
        "epochs": t.epochs,
    })
    log.info("trained %d members; accuracies %s", len(report), [round(r["train_accuracy"], 3) for r in report])
    return path


def load_ensemble(cfg: RunConfig) -> Ensemble:
    files = [member_file(cfg, i) for i in range(len(cfg.roster))]
    missing = [f for f in files if not f.exists()]
    if missing:
        raise MissingInput(f"model files missing ({missing[0]} ...); run train first")
    return Ensemble([load_model(f) for f in files])


def representatives(cfg: RunConfig) -> dict:
    """One member index per distinct architecture variant (seed ignored), first wins."""
    out = {}
    for i, c in enumerate(cfg.roster):
        key = json.dumps({k: v for k, v in asdict(c).items() if k != "rng_seed"}, sort_keys=True)
        out.setdefault(key, i)
    return {f"model_{i}": i for i in sorted(out.values())}


# -- evaluate --------------------------------------------------------------------

_STATE: dict = {}


def _init_worker(state):
    _STATE.clear()
    _STATE.update(state)


def _evaluate_task(task):
    """Evaluate one window under one scope for every configured method."""
    scope, w = task
    cfg = _STATE["cfg"]
    predictor = _STATE["predictors"][scope]
    base, _, _ = base_prediction(w, predictor)
    pred = int(base.pred[0])
    if pred != w.label:
        return scope, w.id, [], [(w.id, "*", "*", f"misclassified: label {w.label}, predicted {pred}")], {}
    rows, skips, maps = [], [], {}
    cache = {}
    for method in cfg.methods:
        res = evaluate_window(w, predictor, method, cfg.metrics, cfg.perturbation, cache)
        rows.extend((r.metric, r.method, scope, r.window_id, r.k, r.value, r.n_valid) for r in res.records)
        skips.extend((w.id, method, metric, reason) for metric, reason in res.skipped)
        maps[method] = [float(s) for s in res.attribution.scores]
    return scope, w.id, rows, skips, maps


def build_predictors(cfg: RunConfig, ens: Ensemble, reg: JointRegistry) -> dict:
    kw = {"gradcam_tap": cfg.gradcam_tap, "random_seed": cfg.rng_seed}
    out = {}
    if "ensemble" in cfg.scopes():
        out["ensemble"] = Predictor.for_ensemble(ens, reg, **kw)
    if "per_model" in cfg.scopes():
        for name, i in representatives(cfg).items():
            out[name] = Predictor.for_member(ens.members[i], reg, name, **kw)
    return out


def cmd_evaluate(cfg: RunConfig) -> Path:
    reg = cfg.registry()
    ens = load_ensemble(cfg)
    windows, short = split_windows(cfg, "test", reg)
    predictors = build_predictors(cfg, ens, reg)
    tasks = [(scope, w) for scope in predictors for w in windows]
    state = {"cfg": cfg, "predictors": predictors}
    if cfg.workers == 1 or len(tasks) <= 1:
        _init_worker(state)
        results = [_evaluate_task(t) for t in tasks]
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(cfg.workers, mp_context=ctx, initializer=_init_worker, initargs=(state,)) as pool:
            results = list(pool.map(_evaluate_task, tasks, chunksize=1))
    return write_results(cfg, windows, short, predictors, results)


def write_results(cfg: RunConfig, windows, short, predictors, results) -> Path:
    out = cfg.results_path
    out.mkdir(parents=True, exist_ok=True)
    rows, skips, maps = [], [], {}
    evaluated = {scope: 0 for scope in predictors}
    for scope, wid, r, s, m in results:
        rows.extend(r)
        skips.extend((scope,) + tuple(x) for x in s)
        if r:
            evaluated[scope] += 1
            maps.setdefault(scope, {})[wid] = m
    skips.extend(("*", sid, "*", "*", reason) for sid, reason in short)
    rows.sort(key=lambda r: (r[2], r[0], r[1], r[3], r[4]))
    skips.sort()
    write_csv(out / "metrics.csv", cfg, ["metric", "method", "scope", "window_id", "k", "value", "n_valid"], rows)

    curves = {}
    for metric, method, scope, wid, k, value, _ in rows:
        curves.setdefault((metric, method, scope, wid), []).append((k, value))
    auc_rows = [key + (auc_over_k(pairs),) for key, pairs in sorted(curves.items())]
    auc_note = "trapezoid_over_k_divided_by_k_span"
    write_csv(out / "auc.csv", cfg, ["metric", "method", "scope", "window_id", "auc"], auc_rows, auc=auc_note)

    groups = {}
    for metric, method, scope, _, auc in auc_rows:
        groups.setdefault((metric, method, scope), []).append(auc)
    agg_rows = []
    for (metric, method, scope), aucs in sorted(groups.items()):
        a = aggregate(aucs, metric, method)
        agg_rows.append((metric, method, scope, a.auc_mean, a.auc_std, a.n_windows))
    write_csv(out / "aggregate.csv", cfg, ["metric", "method", "scope", "auc_mean", "auc_std", "n_windows"],
              agg_rows, auc=auc_note, std="ddof1")
    write_csv(out / "skips.csv", cfg, ["scope", "window_id", "method", "metric", "reason"], skips)
    write_json(out / "attributions.json", cfg, {"scores": maps})

    summary = {"windows_in": len(windows) + len(short), "scopes": {}}
    for scope in predictors:
        n_eval = evaluated[scope]
        summary["scopes"][scope] = {
            "windows_evaluated": n_eval,
            "windows_skipped": len(windows) + len(short) - n_eval,
        }
    if predictors:
        summary["representatives"] = {n: p.name for n, p in predictors.items()}
    write_json(out / "summary.json", cfg, summary)
    return out


# -- ttest -----------------------------------------------------------------------

def auc_samples(cfg: RunConfig) -> dict:
    samples = {}
    for row in read_csv(cfg.results_path / "auc.csv"):
        samples.setdefault((row["scope"], row["metric"], row["method"]), []).append(float(row["auc"]))
    return samples


def ttest_rows(cfg: RunConfig, samples: dict) -> list:
    scopes = sorted({s for s, _, _ in samples})
    present = [m for m in cfg.methods if any(k[2] == m for k in samples)]
    if len(present) < 2:
        raise InsufficientSamples(f"t-tests need >= 2 evaluated methods, found {present}")
    rows = []
    for scope in scopes:
        for metric in METRICS:
            for a, b in combinations(present, 2):
                sa, sb = samples.get((scope, metric, a), []), samples.get((scope, metric, b), [])
                if len(sa) < 2 or len(sb) < 2:
                    raise InsufficientSamples(f"{scope}/{metric}: {a} has {len(sa)} windows, {b} has {len(sb)}")
                r = unpaired_ttest(sa, sb)
                rows.append((f"{a}_vs_{b}", metric, scope, r.t_statistic, r.p_value, r.dof, int(r.degenerate)))
    return rows


def cmd_ttest(cfg: RunConfig) -> Path:
    rows = ttest_rows(cfg, auc_samples(cfg))
    path = cfg.results_path / "ttest.csv"
    write_csv(path, cfg, ["comparison", "metric", "scope", "t_statistic", "p_value", "dof", "degenerate"], rows,
              test="welch_two_sided")
    return path


# -- report ----------------------------------------------------------------------

def cmd_report(cfg: RunConfig) -> Path:
    from . import report

    return report.write_report(cfg)
