"""Experiment orchestration: manifest -> inputs -> training -> best checkpoint -> report.

A config is a flat ``key = value`` text file::

    kernel = gaussian          # linear | gaussian | normalized | raw
    model.kind = 3convnn       # 3convnn | alexnet | avg | rf
    model.input_hw = 64
    epochs = 100
    paths.train = train.jsonl
    paths.out_dir = runs/gauss

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import contextlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import heatmap, imageproc
from .baselines import ForestSpec, averaging_predict, feature_matrix, mean_feature, rf_train
from .dataset import DatasetManifest, ImageRecord, SplitSpec, load_manifest, stratified_split
from .emotion import LABELS, label_index
from .models import ModelKind, build
from .nn import AdamSpec, Network, Optimizer, SGDSpec, save_checkpoint, softmax_cross_entropy

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
RAW = "raw"
BASELINE_KINDS = ("avg", "rf")

# Published reference accuracies (train %, validation %); None where none was reported.
PUBLISHED_RESULTS: list[tuple[str, tuple[str, str | None], float | None, float]] = [
    ("Baseline", ("centrist-svr", None), None, 52.79),
    ("Averaging", ("avg", None), 44.37, 42.38),
    ("Random Forest", ("rf", None), 99.08, 48.13),
    ("Linear Distribution Heatmaps (3-ConvNN)", ("3convnn", "linear"), 35.59, 38.62),
    ("Gaussian Heatmaps (3-ConvNN)", ("3convnn", "gaussian"), 56.73, 51.49),
    ("Gaussian Heatmaps (AlexNet)", ("alexnet", "gaussian"), 57.81, 55.23),
    ("Normalized Gaussians (3-ConvNN)", ("3convnn", "normalized"), 56.89, 54.67),
    ("Normalized Gaussians (AlexNet)", ("alexnet", "normalized"), 54.51, 52.15),
    ("Raw Images (3-ConvNN)", ("3convnn", "raw"), 54.68, 50.27),
    ("Raw Images (AlexNet)", ("alexnet", "raw"), 49.57, 44.98),
]


class TrainingLeakError(RuntimeError):
    """A hold-out-tagged record reached the training set."""


@dataclass
class ExperimentConfig:
    kernel: str = "gaussian"
    model_kind: str = "3convnn"
    input_hw: int | None = None
    width_mult: float = 1.0
    optimizer: str | None = None  # None -> adam for 3convnn, sgd for alexnet
    lr: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 100
    batch_size: int = 32
    holdout_fraction: float = 0.10
    seed_data: int = 0
    seed_init: int = 0
    seed_augment: int = 0
    augment: bool = True
    rotation_range: float = imageproc.ROTATION_RANGE
    dtype: str = "float32"
    rf_trees: int = 15
    rf_max_depth: int | None = None
    fallback_label: str = "Positive"
    train_path: str | None = None
    holdout_path: str | None = None
    eval_path: str | None = None
    out_dir: str | None = None
    name: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kernel not in [k.value for k in heatmap.KernelKind] + [RAW]:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.model_kind not in [m.value for m in ModelKind] + list(BASELINE_KINDS):
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in (None, "adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        label_index(self.fallback_label)
        SplitSpec(self.holdout_fraction, self.seed_data)

    @property
    def is_baseline(self) -> bool:
        return self.model_kind in BASELINE_KINDS

    @property
    def resolved_input_hw(self) -> int:
        if self.input_hw is not None:
            return self.input_hw
        return ModelKind(self.model_kind).default_input_hw

    def optimizer_spec(self) -> AdamSpec | SGDSpec:
        kind = self.optimizer or ("sgd" if self.model_kind == ModelKind.ALEXNET.value else "adam")
        if kind == "adam":
            return AdamSpec(lr=self.lr or 1e-3, beta1=self.beta1, beta2=self.beta2, eps=self.eps)
        return SGDSpec(lr=self.lr or 0.01, momentum=self.momentum, weight_decay=self.weight_decay)

    def row_key(self) -> tuple[str, str | None]:
        return (self.model_kind, None if self.is_baseline else self.kernel)


# flat config key -> ExperimentConfig attribute
CONFIG_KEYS = {
    "kernel": "kernel",
    "model.kind": "model_kind",
    "model.input_hw": "input_hw",
    "model.width_mult": "width_mult",
    "optimizer.kind": "optimizer",
    "optimizer.lr": "lr",
    "optimizer.beta1": "beta1",
    "optimizer.beta2": "beta2",
    "optimizer.eps": "eps",
    "optimizer.momentum": "momentum",
    "optimizer.weight_decay": "weight_decay",
    "epochs": "epochs",
    "batch_size": "batch_size",
    "split.holdout": "holdout_fraction",
    "seed.data": "seed_data",
    "seed.init": "seed_init",
    "seed.augment": "seed_augment",
    "augment": "augment",
    "augment.rotation_range": "rotation_range",
    "dtype": "dtype",
    "rf.trees": "rf_trees",
    "rf.max_depth": "rf_max_depth",
    "baseline.fallback": "fallback_label",
    "paths.train": "train_path",
    "paths.holdout": "holdout_path",
    "paths.eval": "eval_path",
    "paths.out_dir": "out_dir",
    "name": "name",
}
_PATH_ATTRS = ("train_path", "holdout_path", "eval_path", "out_dir")


def _coerce(attr: str, raw: str):
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    t = str(types[attr])
    if raw.lower() in ("none", "null", ""):
        return None
    if t.startswith("bool"):
        if raw.lower() in ("true", "yes", "1", "on"):
            return True
        if raw.lower() in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"{attr}: expected a boolean, got {raw!r}")
    if t.startswith("int"):
        return int(raw)
    if t.startswith("float"):
        return float(raw)
    return raw


def parse_config(text: str, base_dir: str | Path | None = None) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        attr = CONFIG_KEYS[key]
        try:
            values[attr] = _coerce(attr, raw)
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: {exc}") from None
    if base_dir is not None:
        for attr in _PATH_ATTRS:
            if values.get(attr) is not None and not Path(values[attr]).is_absolute():
                values[attr] = str(Path(base_dir) / values[attr])
    return ExperimentConfig(**values)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def config_to_text(cfg: ExperimentConfig) -> str:
    inverse = {v: k for k, v in CONFIG_KEYS.items()}
    lines = []
    for attr, value in asdict(cfg).items():
        if value is not None:
            lines.append(f"{inverse[attr]} = {value}")
    return "\n".join(lines) + "\n"


# -- evaluation -------------------------------------------------------------

def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int], n_classes: int = len(LABELS)) -> np.ndarray:
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return m


def evaluate(predictor: Callable[[Sequence[ImageRecord]], np.ndarray], manifest: DatasetManifest | Sequence[ImageRecord]):
    """(accuracy, confusion matrix indexed [true, predicted])."""
    records = manifest.records if isinstance(manifest, DatasetManifest) else list(manifest)
    if not records:
        raise ValueError("cannot evaluate on an empty manifest")
    y_true = np.array([label_index(r.label) for r in records])
    y_pred = np.asarray(predictor(records))
    cm = confusion_matrix(y_true, y_pred)
    return float(np.trace(cm) / len(records)), cm


def averaging_predictor(fallback: str = "Positive"):
    fb = label_index(fallback)

    def predict(records):
        out = []
        for r in records:
            if r.faces:
                out.append(label_index(averaging_predict(r)))
            else:
                log.info("record %s has no faces; predicting %s", r.id, fallback)
                out.append(fb)
        return np.array(out, dtype=np.int64)

    return predict


def forest_predictor(forest, fallback: int):
    def predict(records):
        out = np.full(len(records), fallback, dtype=np.int64)
        idx = [i for i, r in enumerate(records) if r.faces]
        if idx:
            out[idx] = forest.predict(np.array([mean_feature(records[i]) for i in idx]))
        return out

    return predict


# -- inputs -----------------------------------------------------------------

def prepare_inputs(records: Sequence[ImageRecord], kernel: str, input_hw: int) -> np.ndarray:
    """Fixed-size 0..255-scaled tensors, before augmentation and rescale."""
    out = np.empty((len(records), input_hw, input_hw, 3), dtype=np.float64)
    for i, r in enumerate(records):
        if kernel == RAW:
            img = r.image() * 255.0
        else:
            img = heatmap.to_display(heatmap.record_heatmap(r, heatmap.KernelKind(kernel)))
        out[i] = imageproc.resize(img, input_hw, input_hw)
    return out


def network_predictor(net: Network, kernel: str, input_hw: int):
    def predict(records):
        x = prepare_inputs(records, kernel, input_hw) * imageproc.RESCALE
        return net.predict(x)

    return predict


def _batches(n: int, batch_size: int, order: np.ndarray, min_batch: int) -> list[np.ndarray]:
    out = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(out) > 1 and len(out[-1]) < min_batch:
        out[-2] = np.concatenate([out[-2], out.pop()])
    return out


# -- reports ----------------------------------------------------------------

@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    holdout_accuracy: float


@dataclass
class RunReport:
    config: dict
    row_key: list
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int | None = None
    best_holdout_accuracy: float | None = None
    train_accuracy: float | None = None
    holdout_accuracy: float | None = None
    holdout_confusion: list | None = None
    eval_accuracy: float | None = None
    eval_confusion: list | None = None
    class_counts: dict = field(default_factory=dict)
    wall_clock_s: float | None = None
    schema_version: int = SCHEMA_VERSION
    class_labels: list = field(default_factory=lambda: list(LABELS))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        d = json.loads(text)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')!r}")
        d["epochs"] = [EpochStats(**e) for e in d.get("epochs", [])]
        return cls(**d)


def load_report(path: str | Path) -> RunReport:
    return RunReport.from_json(Path(path).read_text(encoding="utf-8"))


# -- running ----------------------------------------------------------------

def _check_no_holdout(records: Sequence[ImageRecord]) -> None:
    tagged = [r.id for r in records if r.split == "holdout"]
    if tagged:
        raise TrainingLeakError(f"{len(tagged)} hold-out records in training data, e.g. {tagged[0]!r}")


def _splits(cfg: ExperimentConfig, train: DatasetManifest | None, holdout: DatasetManifest | None):
    if train is None:
        if cfg.train_path is None:
            raise ValueError("config has no paths.train and no manifest was given")
        train = load_manifest(cfg.train_path)
    if holdout is None and cfg.holdout_path is not None:
        holdout = load_manifest(cfg.holdout_path)
    _check_no_holdout(train.records)
    if holdout is None:
        train, holdout = stratified_split(train, SplitSpec(cfg.holdout_fraction, cfg.seed_data))
    if not train.records or not holdout.records:
        raise ValueError("empty train or hold-out split")
    return train, holdout


def _train_network(cfg, train_records, holdout_records, report):
    hw = cfg.resolved_input_hw
    specs = build(cfg.model_kind, hw, cfg.width_mult) if cfg.model_kind == ModelKind.THREE_CONV.value else build(cfg.model_kind, hw)
    dtype = np.dtype(cfg.dtype)
    net = Network(specs, (hw, hw, 3), seed=cfg.seed_init, dtype=dtype)
    opt = Optimizer(cfg.optimizer_spec(), net.params())
    has_bn = any(s.kind == "batchnorm" for s in specs)

    _check_no_holdout(train_records)
    x_train = prepare_inputs(train_records, cfg.kernel, hw).astype(dtype)
    y_train = np.array([label_index(r.label) for r in train_records])
    x_hold = (prepare_inputs(holdout_records, cfg.kernel, hw) * imageproc.RESCALE).astype(dtype)
    y_hold = np.array([label_index(r.label) for r in holdout_records])

    best_acc, best_state = -1.0, None
    for epoch in range(1, cfg.epochs + 1):
        rng = np.random.default_rng([cfg.seed_augment, epoch])
        order = rng.permutation(len(y_train))
        loss_sum = correct = 0.0
        for idx in _batches(len(order), cfg.batch_size, order, 2 if has_bn else 1):
            if cfg.augment:
                xb = np.stack([
                    imageproc.apply_augment(x_train[i], imageproc.sample_augment(rng, cfg.rotation_range))
                    for i in idx
                ]).astype(dtype)
            else:
                xb = x_train[idx] * dtype.type(imageproc.RESCALE)
            net.zero_grad()
            logits = net.forward(xb, train=True)
            loss, dlogits = softmax_cross_entropy(logits, y_train[idx])
            net.backward(dlogits.astype(dtype))
            opt.step()
            loss_sum += loss * len(idx)
            correct += int((logits.argmax(axis=1) == y_train[idx]).sum())
        if not np.isfinite(loss_sum):
            raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
        hold_acc = float((net.predict(x_hold) == y_hold).mean())
        report.epochs.append(EpochStats(epoch, loss_sum / len(order), correct / len(order), hold_acc))
        log.info("epoch %d loss %.4f train %.3f hold-out %.3f", epoch, loss_sum / len(order), correct / len(order), hold_acc)
        # strict > keeps the earlier epoch on ties
        if hold_acc > best_acc:
            best_acc, best_state = hold_acc, net.snapshot()
            report.best_epoch = epoch
    net.restore(best_state)
    report.best_holdout_accuracy = best_acc
    return net, best_state


def run_experiment(
    cfg: ExperimentConfig,
    train: DatasetManifest | None = None,
    holdout: DatasetManifest | None = None,
    eval_manifest: DatasetManifest | None = None,
    deterministic: bool = False,
) -> RunReport:
    start = time.perf_counter()
    limiter = threadpool_limits(limits=1) if deterministic else contextlib.nullcontext()
    with limiter:
        train, holdout = _splits(cfg, train, holdout)
        if eval_manifest is None and cfg.eval_path is not None:
            eval_manifest = load_manifest(cfg.eval_path)
        # echo inputs by file name only; the output location is not part of the run
        cfg_dict = asdict(cfg)
        cfg_dict.pop("out_dir")
        for attr in _PATH_ATTRS[:-1]:
            if cfg_dict[attr] is not None:
                cfg_dict[attr] = Path(cfg_dict[attr]).name
        report = RunReport(config=cfg_dict, row_key=list(cfg.row_key()), class_counts=train.class_counts)

        net = None
        if cfg.model_kind == "avg":
            predictor = averaging_predictor(cfg.fallback_label)
        elif cfg.model_kind == "rf":
            _check_no_holdout(train.records)
            x, y, _ = feature_matrix(train.records)
            forest = rf_train(x, y, ForestSpec(n_trees=cfg.rf_trees, max_depth=cfg.rf_max_depth, seed=cfg.seed_init))
            majority = int(np.bincount(y, minlength=len(LABELS)).argmax()) if len(y) else label_index(cfg.fallback_label)
            predictor = forest_predictor(forest, majority)
        else:
            net, best_state = _train_network(cfg, train.records, holdout.records, report)
            predictor = network_predictor(net, cfg.kernel, cfg.resolved_input_hw)

        report.train_accuracy, _ = evaluate(predictor, train)
        report.holdout_accuracy, cm = evaluate(predictor, holdout)
        report.holdout_confusion = cm.tolist()
        if cfg.is_baseline:
            report.best_holdout_accuracy = report.holdout_accuracy
        if eval_manifest is not None and eval_manifest.records:
            report.eval_accuracy, cm = evaluate(predictor, eval_manifest)
            report.eval_confusion = cm.tolist()

    elapsed = time.perf_counter() - start
    if not deterministic:
        report.wall_clock_s = elapsed
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out / "timing.json").write_text(json.dumps({"wall_clock_s": elapsed}) + "\n", encoding="utf-8")
        if net is not None:
            save_checkpoint(net, out / "best.nnck", best_state)
    return report


# -- comparison -------------------------------------------------------------

def _pct(v: float | None) -> str:
    return "-" if v is None else f"{100.0 * v:.2f}%"


def _ref_pct(v: float | None) -> str:
    return "-" if v is None else f"{v:.2f}%"


def compare_table(reports: Sequence[RunReport]) -> str:
    """Aligned text table of our accuracies beside the published ones."""
    if not reports:
        raise ValueError("compare_table needs at least one report")
    order = {tuple(key): i for i, (_, key, _, _) in enumerate(PUBLISHED_RESULTS)}
    published = {tuple(key): (name, tr, va) for name, key, tr, va in PUBLISHED_RESULTS}

    def sort_key(item):
        i, r = item
        return (order.get(tuple(r.row_key), len(order)), i)

    header = ["model", "train", "hold-out", "validation", "published train (not reproducible)", "published validation (not reproducible)"]
    rows = []
    for _, r in sorted(enumerate(reports), key=sort_key):
        key = tuple(r.row_key)
        name, ptr, pva = published.get(key, (f"{key[1]} ({key[0]})", None, None))
        if r.config.get("name"):
            name = f"{name} [{r.config['name']}]"
        rows.append([name, _pct(r.train_accuracy), _pct(r.holdout_accuracy), _pct(r.eval_accuracy), _ref_pct(ptr), _ref_pct(pva)])
    widths = [max(len(h), *(len(row[c]) for row in rows)) for c, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows]
    baseline = PUBLISHED_RESULTS[0]
    lines.append("")
    lines.append(f"challenge baseline (CENTRIST + SVR, published, not reproducible): validation {_ref_pct(baseline[3])}")
    return "\n".join(lines) + "\n"
