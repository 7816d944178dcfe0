"""Training/evaluation orchestration.

Per epoch, per training sequence: hand inversion with probability
``hi_prob`` (reflection line fitted once per sequence and cached), then
world-frame rotation with probability ``wfr_prob``, then velocities and
per-procedure standardization, forward, multi-head loss, backward, Adam.
Augmentation draws are independent per sequence per epoch and are never
applied during evaluation.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import geometry, metrics
from .autodiff import Adam
from .data import DatasetManifest, Split, load_dataset, make_folds, split_sequences
from .loss import LossConfig, model_loss
from .model import ModelConfig, MsTcrNet
from .preprocess import fir_lowpass_resample, standardize, velocities
from .sequence import SensorSequence

DEFAULT_LR = {"L": 0.001035, "G": 0.001779}
DEFAULT_EPOCHS = 40
DEFAULT_EPOCHS_HI = 80  # hand inversion slows convergence


class TrainingDiverged(RuntimeError):
    def __init__(self, sequence: str, epoch: int, value: float):
        super().__init__(f"non-finite loss ({value}) on sequence {sequence!r} "
                         f"at epoch {epoch}")
        self.sequence = sequence
        self.epoch = epoch


@dataclass
class AugConfig:
    wfr_prob: float = 0.0
    theta_max: float = 7.0
    hi_prob: float = 0.0

    def __post_init__(self):
        for p in (self.wfr_prob, self.hi_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError("augmentation probabilities must be in [0, 1]")
        if self.theta_max < 0:
            raise ValueError("theta_max must be >= 0")


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig.g_variant)
    loss: LossConfig = None
    aug: AugConfig = field(default_factory=AugConfig)
    lr: float = None
    epochs: int = None
    scheduler: str = "none"  # or "halve_on_plateau"
    plateau_patience: int = 3
    seeds: tuple[int, ...] = (0,)
    fold_strategy: str = "participant_kfold(5)"
    checkpoint_selection: str = "best_val_edit"  # or "final_epoch"
    macro_exclude_background: bool = False

    def __post_init__(self):
        if self.loss is None:
            self.loss = LossConfig.for_variant(self.model.variant)
        if self.lr is None:
            self.lr = DEFAULT_LR[self.model.variant]
        if self.epochs is None:
            self.epochs = DEFAULT_EPOCHS_HI if self.aug.hi_prob > 0 else DEFAULT_EPOCHS
        if self.scheduler not in ("none", "halve_on_plateau"):
            raise ValueError(f"unknown scheduler {self.scheduler!r}")
        if self.checkpoint_selection not in ("best_val_edit", "final_epoch"):
            raise ValueError("checkpoint_selection must be best_val_edit or final_epoch")

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "loss": asdict(self.loss),
                "aug": asdict(self.aug), "lr": self.lr, "epochs": self.epochs,
                "scheduler": self.scheduler,
                "plateau_patience": self.plateau_patience,
                "seeds": list(self.seeds),
                "fold_strategy": self.fold_strategy,
                "checkpoint_selection": self.checkpoint_selection,
                "macro_exclude_background": self.macro_exclude_background}


# ---------------------------------------------------------------------------
# Config files: flat namespaced key = value lines
# ---------------------------------------------------------------------------

def parse_kv_file(path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


_MODEL_KEYS = {"num_layers_pg": int, "feature_maps": int, "pg_dropout": float,
               "num_refinements": int, "rnn_layers": int, "rnn_hidden": int,
               "rnn_dropout": float, "num_classes": int, "input_dim": int,
               "primary_sampling": int, "secondary_sampling": int}


def run_config_from_kv(kv: dict[str, str]) -> RunConfig:
    """Build a RunConfig from namespaced keys; per-variant defaults apply to
    anything not overridden."""
    kv = dict(kv)
    variant = kv.pop("model.variant", "G").upper()
    base = ModelConfig.l_variant() if variant == "L" else ModelConfig.g_variant()
    for name, conv in _MODEL_KEYS.items():
        key = f"model.{name}"
        if key in kv:
            setattr(base, name, conv(kv.pop(key)))
    loss = LossConfig.for_variant(variant)
    if "loss.lambda" in kv:
        loss.smoothing_weight = float(kv.pop("loss.lambda"))
    if "loss.tau" in kv:
        loss.tau = float(kv.pop("loss.tau"))
    if "loss.detach_prev_frame" in kv:
        loss.detach_prev_frame = kv.pop("loss.detach_prev_frame").lower() in ("1", "true", "yes")
    aug = AugConfig(
        wfr_prob=float(kv.pop("aug.wfr_prob", 0.0)),
        theta_max=float(kv.pop("aug.theta_max", 7.0)),
        hi_prob=float(kv.pop("aug.hi_prob", 0.0)))
    cfg = RunConfig(
        model=base, loss=loss, aug=aug,
        lr=float(kv.pop("train.lr")) if "train.lr" in kv else None,
        epochs=int(kv.pop("train.epochs")) if "train.epochs" in kv else None,
        scheduler=kv.pop("train.scheduler", "none"),
        plateau_patience=int(kv.pop("train.plateau_patience", 3)),
        seeds=tuple(int(s) for s in kv.pop("train.seeds", "0").split(",")),
        fold_strategy=kv.pop("data.fold_strategy", "participant_kfold(5)"),
        checkpoint_selection=kv.pop("train.checkpoint_selection", "best_val_edit"),
        macro_exclude_background=kv.pop(
            "eval.exclude_background", "false").lower() in ("1", "true", "yes"))
    if kv:
        raise ValueError(f"unknown config keys: {sorted(kv)}")
    return cfg


# ---------------------------------------------------------------------------
# Pieces of the loop
# ---------------------------------------------------------------------------

class PlateauScheduler:
    """Halve the rate after `patience` consecutive epochs without improvement
    (non-positive loss decrease); reset the streak after each halving."""

    def __init__(self, lr: float, patience: int = 3, enabled: bool = True):
        self.lr = lr
        self.patience = patience
        self.enabled = enabled
        self.best = np.inf
        self.streak = 0

    def update(self, epoch_loss: float) -> float:
        if not self.enabled:
            return self.lr
        if epoch_loss < self.best:
            self.best = epoch_loss
            self.streak = 0
        else:
            self.streak += 1
            if self.streak >= self.patience:
                self.lr /= 2.0
                self.streak = 0
        return self.lr


@dataclass
class AugmentationStats:
    hi_draws: int = 0
    hi_applied: int = 0
    wfr_draws: int = 0
    wfr_applied: int = 0
    hi_skipped: int = 0  # vertical-boundary sequences


class Augmenter:
    """Per-(sequence, epoch) independent augmentation draws; the hand
    reflection line is fitted once per sequence on its un-augmented data."""

    def __init__(self, aug: AugConfig, rng: np.random.Generator):
        self.aug = aug
        self.rng = rng
        self.stats = AugmentationStats()
        self._lines: dict[int, geometry.ReflectionLine | None] = {}

    def _line_for(self, index: int, seq: SensorSequence):
        if index not in self._lines:
            try:
                self._lines[index] = geometry.fit_hand_reflection(seq)
            except geometry.VerticalBoundaryError:
                self._lines[index] = None
                self.stats.hi_skipped += 1
        return self._lines[index]

    def __call__(self, index: int, seq: SensorSequence) -> SensorSequence:
        out = seq
        if self.aug.hi_prob > 0:
            self.stats.hi_draws += 1
            if self.rng.random() < self.aug.hi_prob:
                line = self._line_for(index, seq)
                if line is not None:
                    out = geometry.hand_inversion(out, line=line)
                    self.stats.hi_applied += 1
        if self.aug.wfr_prob > 0:
            self.stats.wfr_draws += 1
            if self.rng.random() < self.aug.wfr_prob:
                out = geometry.world_frame_rotation(out, self.aug.theta_max,
                                                    self.rng)
                self.stats.wfr_applied += 1
        return out


def features_for(seq: SensorSequence):
    fs = standardize(velocities(seq))
    return fs.features, fs.labels


# ---------------------------------------------------------------------------
# Train / evaluate
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: MsTcrNet
    history: list[dict]
    best_state: dict
    best_epoch: int
    aug_stats: AugmentationStats
    wall_clock: float


def train_on_sequences(cfg: RunConfig, train_seqs: list[SensorSequence],
                       val_seqs: list[SensorSequence] | None = None,
                       seed: int = 0, log=None) -> TrainResult:
    """Train one model on in-memory sequences; deterministic under `seed`."""
    t0 = time.time()
    rng = np.random.default_rng(seed)
    model = MsTcrNet(cfg.model, seed=seed)
    opt = Adam(model.parameters(), lr=cfg.lr)
    sched = PlateauScheduler(cfg.lr, cfg.plateau_patience,
                             enabled=cfg.scheduler == "halve_on_plateau")
    augment = Augmenter(cfg.aug, rng)
    r = cfg.model.primary_sampling
    history = []
    best_edit = -np.inf
    best_state = None
    best_epoch = -1
    order = np.arange(len(train_seqs))
    for epoch in range(cfg.epochs):
        rng.shuffle(order)
        losses = []
        for idx in order:
            seq = augment(int(idx), train_seqs[idx])
            feats, labels = features_for(seq)
            out = model.forward(feats, training=True)
            loss = model_loss(out, labels[::r], cfg.loss)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDiverged(train_seqs[idx].name or str(idx),
                                       epoch, value)
            loss.backward()
            opt.step()
            opt.zero_grad()
            losses.append(value)
        epoch_loss = float(np.mean(losses))
        opt.lr = sched.update(epoch_loss)
        record = {"epoch": epoch, "loss": epoch_loss, "lr": opt.lr}
        if val_seqs:
            val_rows = evaluate_model(model, val_seqs, cfg)
            record["val_edit"] = float(np.mean([m["edit"] for m in val_rows]))
            if record["val_edit"] > best_edit:
                best_edit = record["val_edit"]
                best_state = model.state_dict()
                best_epoch = epoch
        history.append(record)
        if log:
            log(json.dumps(record))
    if cfg.checkpoint_selection == "final_epoch" or best_state is None:
        best_state = model.state_dict()
        best_epoch = cfg.epochs - 1
    return TrainResult(model=model, history=history, best_state=best_state,
                       best_epoch=best_epoch, aug_stats=augment.stats,
                       wall_clock=time.time() - t0)


def evaluate_model(model: MsTcrNet, seqs: list[SensorSequence],
                   cfg: RunConfig, with_pg: bool = False) -> list[dict]:
    """All six metrics per sequence at full resolution; no augmentation."""
    if not seqs:
        raise ValueError("empty evaluation split")
    exclude = (0,) if cfg.macro_exclude_background else ()
    rows = []
    for seq in seqs:
        feats, labels = features_for(seq)
        out = model.forward(feats, training=False)
        pred = np.argmax(out.final_fullres.data, axis=0)
        row = metrics.evaluate_frames(pred, labels, cfg.model.num_classes,
                                      macro_exclude=exclude)
        if with_pg:
            pg_pred = np.argmax(out.pg_fullres(cfg.model.primary_sampling,
                                               seq.n_frames), axis=0)
            pg_row = metrics.evaluate_frames(pg_pred, labels,
                                             cfg.model.num_classes,
                                             macro_exclude=exclude)
            row.update({f"pg_{k}": v for k, v in pg_row.items()})
        row["sequence"] = seq.name
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Reports and full experiments
# ---------------------------------------------------------------------------

def summarize(records: list[dict]) -> dict:
    """mean +- std per numeric metric, recomputable from the records."""
    summary = {}
    if not records:
        return summary
    for key in records[0]:
        values = [r[key] for r in records if isinstance(r.get(key), (int, float))]
        if len(values) == len(records):
            summary[key] = {"mean": float(np.mean(values)),
                            "std": float(np.std(values))}
    return summary


@dataclass
class RunReport:
    config: dict
    records: list[dict]
    wall_clock: float = 0.0

    @property
    def summary(self) -> dict:
        return summarize(self.records)

    def to_dict(self) -> dict:
        return {"config": self.config, "records": self.records,
                "summary": self.summary, "wall_clock": self.wall_clock}

    def save(self, json_path, csv_path=None) -> None:
        Path(json_path).write_text(json.dumps(self.to_dict(), indent=2,
                                              sort_keys=True) + "\n")
        if csv_path and self.records:
            keys = list(self.records[0])
            with open(csv_path, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=keys)
                writer.writeheader()
                writer.writerows(self.records)


def prepare_sequences(manifest: DatasetManifest, root=None,
                      target_hz: float = 30.0) -> list[SensorSequence]:
    """Load and, when necessary, low-pass + resample every sequence."""
    seqs = load_dataset(manifest, root=root)
    return [fir_lowpass_resample(s, target_hz) if s.rate_hz > target_hz else s
            for s in seqs]


def run_experiment(cfg: RunConfig, manifest: DatasetManifest, out_dir,
                   root=None, log=print) -> RunReport:
    """Cross-validated training per (fold, seed); writes results.csv,
    summary.json and one checkpoint per trainer under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seqs = prepare_sequences(manifest, root=root)
    splits = make_folds(manifest, cfg.fold_strategy)
    t0 = time.time()
    records = []
    for fold, split in enumerate(splits):
        train, val, test = split_sequences(seqs, split)
        if not train or not test:
            raise ValueError(f"fold {fold}: empty train or test split")
        for seed in cfg.seeds:
            result = train_on_sequences(cfg, train, val or None, seed=seed,
                                        log=None)
            model = result.model
            model.load_state_dict(result.best_state)
            ckpt_path = out_dir / f"fold{fold}_seed{seed}.ckpt"
            model.save_checkpoint(ckpt_path, extra_config={"run": cfg.to_dict()})
            for row in evaluate_model(model, test, cfg):
                row.update({"fold": fold, "seed": seed, "split": "test",
                            "best_epoch": result.best_epoch})
                records.append(row)
            if log:
                log(f"fold {fold} seed {seed}: "
                    f"{len(test)} test sequence(s), "
                    f"best epoch {result.best_epoch}, "
                    f"{result.wall_clock:.1f}s")
    report = RunReport(config=cfg.to_dict(), records=records,
                       wall_clock=time.time() - t0)
    report.save(out_dir / "summary.json", out_dir / "results.csv")
    return report
