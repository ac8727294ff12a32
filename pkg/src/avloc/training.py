"""Training loop, evaluation metric, checkpointing, and the ablation runner.

Single-threaded execution is bitwise reproducible for a fixed (seed, config,
dataset): shuffling is keyed by (seed, epoch), every video owns its own tape,
and batch gradients are reduced in a fixed index order. The optional
data-parallel mode farms videos of a batch out to threads but keeps the same
fixed-order reduction, so it produces the same floats.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import heads
from .data import (DatasetManifest, LabelRecord, load_entry, read_block,
                   write_block)
from .errors import ConfigError, ConsistencyError, ContractError, FormatError, TrainingDiverged
from .model import (ForwardPass, ModelConfig, ModelParams, init_params,
                    predict, run_forward)

CHECKPOINT_VERSION = "avloc-checkpoint-1"


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0   # epochs between checkpoints; 0 = final only
    workers: int = 1

    def validate(self) -> None:
        self.model.validate()
        if self.epochs < 1 or self.batch_size < 1 or self.workers < 1:
            raise ConfigError("epochs, batch_size and workers must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MetricsReport:
    losses: list[float]
    accuracy: float
    per_class: dict[str, float | None]
    config: dict
    wall_time_s: float

    def to_dict(self) -> dict:
        return {"losses": self.losses, "accuracy": self.accuracy,
                "per_class": self.per_class, "config": self.config,
                "wall_time_s": self.wall_time_s}

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricsReport":
        return cls(losses=list(doc["losses"]), accuracy=doc["accuracy"],
                   per_class=dict(doc["per_class"]), config=dict(doc["config"]),
                   wall_time_s=doc["wall_time_s"])


class Adam:
    """Per-parameter adaptive moments (decay 0.9/0.999, epsilon 1e-8)."""

    def __init__(self, names: list[str], shapes: dict[str, tuple[int, ...]],
                 lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8):
        self.names = names
        self.lr = lr
        self.beta1, self.beta2, self.epsilon = beta1, beta2, epsilon
        self.step_count = 0
        self.m = {n: np.zeros(shapes[n], dtype=np.float32) for n in names}
        self.v = {n: np.zeros(shapes[n], dtype=np.float32) for n in names}

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1 ** t
        bias2 = 1.0 - self.beta2 ** t
        for name, current in params.items():
            g = grads[name].astype(np.float32)
            m = self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            update = (self.lr * (m / bias1)
                      / (np.sqrt(v / bias2) + np.float32(self.epsilon)))
            params.set_array(name, current - update)


# ---------------------------------------------------------------------------
# loss per video


def _video_loss(params: ModelParams, cfg: ModelConfig, audio: np.ndarray,
                visual: np.ndarray, label: LabelRecord
                ) -> tuple[float, dict[str, np.ndarray], ForwardPass]:
    tape = ad.Tape()
    fwd = run_forward(tape, params, audio, visual, cfg)
    if cfg.mode == "weak":
        loss = heads.weak_aggregate_loss(fwd.segment_logits, label.video_class)
    else:
        loss = heads.supervised_loss(fwd.class_probs, fwd.event_scores,
                                     label.video_class, label.segment_relevance)
    names = list(fwd.leaves.keys())
    grads = tape.backward(loss, fwd.leaf_list())
    return loss.item(), dict(zip(names, grads)), fwd


def _first_nonfinite_stage(fwd: ForwardPass) -> str:
    for name, tensor in fwd.stages.items():
        if not np.isfinite(tensor.data).all():
            return name
    return "loss"


# ---------------------------------------------------------------------------
# training


def train(cfg: TrainConfig, manifest: DatasetManifest, base_dir: str,
          out_dir: str | None = None) -> tuple[ModelParams, MetricsReport]:
    """Mini-batch Adam over the manifest; deterministic given cfg.seed."""
    cfg.validate()
    started = time.perf_counter()
    bundles = [load_entry(manifest, e, base_dir) for e in manifest.entries]
    labels = [e.label for e in manifest.entries]
    _check_dims(cfg.model, manifest)

    params = init_params(cfg.model, cfg.seed)
    shapes = {n: a.shape for n, a in params.items()}
    names = [n for n, _ in params.items()]
    opt = Adam(names, shapes, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None

    losses: list[float] = []
    try:
        for epoch in range(cfg.epochs):
            order = np.random.default_rng([cfg.seed, epoch]).permutation(len(bundles))
            epoch_loss = 0.0
            for lo in range(0, len(order), cfg.batch_size):
                batch = order[lo:lo + cfg.batch_size]
                jobs = [(bundles[i], labels[i]) for i in batch]
                if pool is not None:
                    results = list(pool.map(
                        lambda job: _video_loss(params, cfg.model, job[0].audio,
                                                job[0].visual, job[1]), jobs))
                else:
                    results = [_video_loss(params, cfg.model, b.audio, b.visual, lab)
                               for b, lab in jobs]
                grad_sum = {n: np.zeros(shapes[n], dtype=np.float64) for n in names}
                for loss_value, grads, fwd in results:  # fixed index order
                    if not np.isfinite(loss_value):
                        raise TrainingDiverged(
                            f"non-finite loss at epoch {epoch}; first non-finite "
                            f"values appear in module '{_first_nonfinite_stage(fwd)}'")
                    epoch_loss += loss_value
                    for n in names:
                        grad_sum[n] += grads[n]
                mean = {n: (grad_sum[n] / len(batch)).astype(np.float32) for n in names}
                opt.step(params, mean)
            losses.append(epoch_loss / len(bundles))
            if out_dir and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(os.path.join(out_dir, f"epoch_{epoch + 1:04d}"),
                                params, cfg.model)
    finally:
        if pool is not None:
            pool.shutdown()

    accuracy, per_class, _ = evaluate(params, cfg.model, manifest, base_dir)
    report = MetricsReport(losses=losses, accuracy=accuracy, per_class=per_class,
                           config=cfg.to_dict(),
                           wall_time_s=time.perf_counter() - started)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(os.path.join(out_dir, "checkpoint"), params, cfg.model)
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as f:
            json.dump(report.to_dict(), f, indent=1)
    return params, report


def _check_dims(cfg: ModelConfig, manifest: DatasetManifest) -> None:
    d = cfg.dims
    got = (manifest.T, manifest.d_a, manifest.d_v, manifest.h, manifest.w,
           manifest.classes)
    want = (d.T, d.d_a, d.d_v, d.h, d.w, d.classes)
    if got != want:
        raise ConsistencyError(f"dataset dims {got} do not match config dims {want}")


# ---------------------------------------------------------------------------
# evaluation


def evaluate(params: ModelParams, cfg: ModelConfig, manifest: DatasetManifest,
             base_dir: str) -> tuple[float, dict[str, float | None], list[heads.Prediction]]:
    """Segment accuracy: decoded label (background included) vs ground truth,
    pooled over every segment of every video. Also returns accuracy per
    ground-truth label and the raw predictions."""
    _check_dims(cfg, manifest)
    background = manifest.classes
    hits = total = 0
    class_hits = np.zeros(background + 1, dtype=np.int64)
    class_total = np.zeros(background + 1, dtype=np.int64)
    predictions = []
    for entry in manifest.entries:
        bundle = load_entry(manifest, entry, base_dir)
        pred = predict(params, cfg, bundle)
        predictions.append(pred)
        truth = entry.label.segment_class
        match = pred.decoded == truth
        hits += int(match.sum())
        total += len(truth)
        for cls in range(background + 1):
            sel = truth == cls
            class_hits[cls] += int(match[sel].sum())
            class_total[cls] += int(sel.sum())
    per_class: dict[str, float | None] = {}
    for cls in range(background + 1):
        key = "background" if cls == background else str(cls)
        per_class[key] = (float(class_hits[cls] / class_total[cls])
                          if class_total[cls] else None)
    return float(hits / total) if total else 0.0, per_class, predictions


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(ckpt_dir: str, params: ModelParams, cfg: ModelConfig) -> None:
    """One binary container of consecutive tensor blocks plus a JSON index."""
    os.makedirs(ckpt_dir, exist_ok=True)
    items = params.items()
    with open(os.path.join(ckpt_dir, "params.bin"), "wb") as f:
        for _, arr in items:
            write_block(f, arr)
        f.flush()
        os.fsync(f.fileno())
    index = {
        "format": CHECKPOINT_VERSION,
        "seed": params.seed,
        "config": cfg.to_dict(),
        "params": [{"name": n, "shape": list(a.shape)} for n, a in items],
    }
    with open(os.path.join(ckpt_dir, "index.json"), "w", encoding="utf-8") as f:
        json.dump(index, f, indent=1)
        f.flush()
        os.fsync(f.fileno())


def load_checkpoint(ckpt_dir: str) -> tuple[ModelParams, ModelConfig]:
    index_path = os.path.join(ckpt_dir, "index.json")
    try:
        with open(index_path, "r", encoding="utf-8") as f:
            index = json.load(f)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{index_path}: not valid JSON ({exc})") from exc
    if index.get("format") != CHECKPOINT_VERSION:
        raise FormatError(f"{index_path}: unknown checkpoint format "
                          f"{index.get('format')!r}")
    cfg = ModelConfig.from_dict(index["config"])
    params = init_params(cfg, index["seed"])
    bin_path = os.path.join(ckpt_dir, "params.bin")
    expected = [(p["name"], tuple(p["shape"])) for p in index["params"]]
    if [n for n, _ in expected] != [n for n, _ in params.items()]:
        raise ConsistencyError(f"{index_path}: parameter list does not match "
                               "this configuration")
    with open(bin_path, "rb") as f:
        for name, shape in expected:
            params.set_array(name, read_block(f, bin_path, shape))
        if f.read(1):
            raise FormatError(f"{bin_path}: trailing bytes after the last block")
    return params, cfg


# ---------------------------------------------------------------------------
# ablation


ABLATION_VARIANTS: list[tuple[str, str, bool]] = [
    # (variant name, motion mode, temporal attention)
    ("no_motion", "off", False),
    ("future_only", "future_only", False),
    ("pfme_wo_temporal_attention", "pfme", False),
    ("pfme_w_temporal_attention", "pfme", True),
]


@dataclass
class AblationRow:
    variant: str
    seed: int
    accuracy: float


@dataclass
class AblationTable:
    rows: list[AblationRow]

    def summary(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for variant, _, _ in ABLATION_VARIANTS:
            acc = np.array([r.accuracy for r in self.rows if r.variant == variant])
            out[variant] = {"mean": float(acc.mean()),
                            "sd": float(acc.std(ddof=1)) if len(acc) > 1 else 0.0}
        return out

    def to_json(self) -> str:
        return json.dumps({
            "rows": [asdict(r) for r in self.rows],
            "summary": self.summary(),
        }, indent=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["variant", "seed", "accuracy"])
        for r in self.rows:
            writer.writerow([r.variant, r.seed, repr(r.accuracy)])
        return buf.getvalue()

    @classmethod
    def from_json(cls, text: str) -> "AblationTable":
        doc = json.loads(text)
        return cls(rows=[AblationRow(**r) for r in doc["rows"]])

    @classmethod
    def from_csv(cls, text: str) -> "AblationTable":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if header != ["variant", "seed", "accuracy"]:
            raise FormatError(f"unexpected ablation CSV header {header}")
        return cls(rows=[AblationRow(variant=v, seed=int(s), accuracy=float(a))
                         for v, s, a in reader])


def split_manifest(manifest: DatasetManifest, holdout_every: int = 4
                   ) -> tuple[DatasetManifest, DatasetManifest]:
    """Deterministic split: every `holdout_every`-th entry is held out."""
    train = DatasetManifest(version=manifest.version, classes=manifest.classes,
                            T=manifest.T, d_a=manifest.d_a, d_v=manifest.d_v,
                            h=manifest.h, w=manifest.w)
    held = DatasetManifest(version=manifest.version, classes=manifest.classes,
                           T=manifest.T, d_a=manifest.d_a, d_v=manifest.d_v,
                           h=manifest.h, w=manifest.w)
    for i, entry in enumerate(manifest.entries):
        (held if i % holdout_every == holdout_every - 1 else train).entries.append(entry)
    return train, held


def ablate(base: TrainConfig, manifest: DatasetManifest, base_dir: str,
           seeds: list[int]) -> AblationTable:
    """Run every motion/temporal-attention variant across seeds and report
    held-out segment accuracy per run."""
    if len(seeds) < 2:
        raise ContractError("ablation needs at least 2 seeds")
    train_manifest, held_manifest = split_manifest(manifest)
    rows = []
    for variant, motion_mode, temporal in ABLATION_VARIANTS:
        for seed in seeds:
            cfg = replace(base, seed=seed,
                          model=ModelConfig.from_dict(base.model.to_dict()))
            cfg.model.motion = motion_mode
            cfg.model.temporal_attention = temporal
            params, _ = train(cfg, train_manifest, base_dir)
            accuracy, _, _ = evaluate(params, cfg.model, held_manifest, base_dir)
            rows.append(AblationRow(variant=variant, seed=seed, accuracy=accuracy))
    return AblationTable(rows=rows)
