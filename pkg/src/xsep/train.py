"""Training loop, evaluation, checkpoint capture/restore and ablation runs."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .arch import ArchSpec
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import MULTI, Dataset, epoch_permutation
from .errors import ConfigError, DataError, NonFiniteLossError
from .metrics import MetricReport, evaluate_scores, topk_accuracy
from .model import Model, build_model
from .optim import OptimConfig, Optimizer

PROFILE_COLUMNS = ("step", "epoch", "lr", "train_loss", "train_top1",
                   "val_top1", "val_top5", "val_wmap100", "wallclock_s")
EVAL_BATCH = 250


def check_compatible(spec: ArchSpec, dataset: Dataset) -> None:
    if spec.num_classes != dataset.num_classes:
        raise DataError(f"model head has {spec.num_classes} classes, "
                        f"dataset has {dataset.num_classes}")
    if tuple(dataset.images.shape[1:]) != tuple(spec.input_shape):
        raise DataError(f"model input {tuple(spec.input_shape)} does not match "
                        f"images {tuple(dataset.images.shape[1:])}")
    if (spec.task == MULTI) != (dataset.task == MULTI):
        raise DataError(f"{spec.task} model cannot train on {dataset.task} labels")


def predict(model: Model, images: np.ndarray, batch_size: int = EVAL_BATCH) -> np.ndarray:
    outs = [model.forward(images[i:i + batch_size], train=False)
            for i in range(0, len(images), batch_size)]
    return np.concatenate(outs) if outs else np.zeros((0, model.spec.num_classes))


def evaluate(model: Model, dataset: Dataset, optimizer: Optimizer | None = None,
             batch_size: int = EVAL_BATCH) -> MetricReport:
    """Inference-mode metrics over a whole split, on Polyak weights if enabled."""
    if optimizer is not None:
        with optimizer.polyak_weights():
            scores = predict(model, dataset.images, batch_size)
    else:
        scores = predict(model, dataset.images, batch_size)
    loss, _ = model.loss(scores, dataset.labels)
    rep = evaluate_scores(scores, dataset.labels, dataset.class_weights)
    return MetricReport(rep.top1, rep.top5, rep.wmap100, float(loss))


@dataclass
class TrainRun:
    model: Model
    optimizer: Optimizer
    train_set: Dataset
    val_set: Dataset | None = None
    steps: int = 0
    batch_size: int = 64
    eval_every: int = 100
    shuffle_seed: int = 0
    profile_path: str | None = None
    checkpoint_path: str | None = None
    record_wallclock: bool = True
    step: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.eval_every < 1 or self.steps < 0:
            raise ConfigError("batch_size and eval_every must be >= 1, steps >= 0")
        check_compatible(self.model.spec, self.train_set)
        if self.val_set is not None:
            check_compatible(self.model.spec, self.val_set)

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(len(self.train_set) / self.batch_size)


@dataclass
class TrainResult:
    report: MetricReport
    rows: list = field(default_factory=list)
    epoch_loss: list = field(default_factory=list)
    epoch_top1: list = field(default_factory=list)


def capture(run: TrainRun) -> Checkpoint:
    ckpt = Checkpoint().with_spec(run.model.spec)
    for name, value in run.model.store.items():
        ckpt.tensors[f"param.{name}"] = value
    for name, value in run.optimizer.state_tensors().items():
        ckpt.tensors[name] = value
    ckpt.meta["step"] = run.step
    ckpt.meta["epoch"] = run.step // run.steps_per_epoch
    ckpt.meta["samples_seen"] = run.optimizer.samples_seen
    ckpt.meta["optim_steps"] = run.optimizer.step_count
    ckpt.meta["rng_seed"] = run.model.rng.seed
    ckpt.meta["rng_counter"] = run.model.rng.counter
    return ckpt


def restore(ckpt: Checkpoint, model: Model, optimizer: Optimizer | None = None) -> int:
    """Load tensors and counters into ``model``/``optimizer``; returns the step."""
    optim_state = {}
    for key, value in ckpt.tensors.items():
        group, _, name = key.partition(".")
        if group == "param":
            model.store[name] = value.copy()
        elif group in ("optim", "polyak"):
            optim_state[key] = value
    if optimizer is not None:
        optimizer.load_state_tensors(optim_state)
        optimizer.samples_seen = ckpt.meta.get("samples_seen", 0)
        optimizer.step_count = ckpt.meta.get("optim_steps", 0)
    # dropout layers hold a reference to model.rng, so restore it in place
    model.rng.seed = ckpt.meta.get("rng_seed", model.rng.seed)
    model.rng.counter = ckpt.meta.get("rng_counter", 0)
    return ckpt.meta.get("step", 0)


def model_from_checkpoint(path) -> tuple[Model, Optimizer | None, Checkpoint]:
    """Rebuild a model for evaluation; the optimizer only carries Polyak weights."""
    ckpt = load_checkpoint(path)
    model = build_model(ckpt.spec, seed=0)
    restore(ckpt, model)
    shadow = {k: v for k, v in ckpt.tensors.items() if k.startswith("polyak.")}
    opt = None
    if shadow:
        opt = Optimizer(OptimConfig(polyak=True), model.store)
        opt.load_state_tensors(shadow)
    return model, opt, ckpt


def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def _save(run: TrainRun) -> None:
    if run.checkpoint_path:
        save_checkpoint(run.checkpoint_path, capture(run))


def train(run: TrainRun, log=None) -> TrainResult:
    """Run ``run.steps`` optimisation steps from ``run.step``.

    A CSV row is written every ``eval_every`` steps and after the last
    step; each row carries the mean training loss/top-1 since the previous
    row and validation metrics on the Polyak weights.  A non-finite loss
    raises ``NonFiniteLossError`` before any update, leaving the last
    checkpoint on disk untouched.
    """
    model, opt, ds = run.model, run.optimizer, run.train_set
    spe = run.steps_per_epoch
    single = ds.task != MULTI
    result = TrainResult(MetricReport())
    start = time.perf_counter()
    fh = open(run.profile_path, "w", newline="") if run.profile_path else None
    writer = csv.writer(fh, lineterminator="\n") if fh else None
    if writer:
        writer.writerow(PROFILE_COLUMNS)
        fh.flush()
    try:
        if run.step == 0:
            _save(run)
        window_loss = window_hits = window_n = 0.0
        ep_loss = ep_hits = ep_n = 0.0
        order_epoch, order = -1, None
        end = run.steps
        while run.step < end:
            epoch, pos = divmod(run.step, spe)
            if epoch != order_epoch:
                order, order_epoch = epoch_permutation(len(ds), run.shuffle_seed, epoch), epoch
            idx = order[pos * run.batch_size:(pos + 1) * run.batch_size]
            x, y = ds.images[idx], ds.labels[idx]
            lr = opt.lr(epoch)
            loss, logits = model.train_step_grads(x, y)
            if not np.isfinite(loss):
                raise NonFiniteLossError(f"loss became {loss} at step {run.step} "
                                         f"(epoch {epoch}, lr {lr:g})")
            opt.step(lr, len(idx))
            run.step += 1
            n = len(idx)
            hits = topk_accuracy(logits, y, 1) * n if single else 0.0
            window_loss += loss * n
            window_hits += hits
            window_n += n
            ep_loss += loss * n
            ep_hits += hits
            ep_n += n
            if run.step % spe == 0:
                result.epoch_loss.append(ep_loss / ep_n)
                result.epoch_top1.append(ep_hits / ep_n if single else float("nan"))
                ep_loss = ep_hits = ep_n = 0.0
            if run.step % run.eval_every == 0 or run.step == end:
                rep = evaluate(model, run.val_set, opt) if run.val_set is not None else MetricReport()
                row = {
                    "step": run.step,
                    "epoch": run.step / spe,
                    "lr": lr,
                    "train_loss": window_loss / window_n,
                    "train_top1": window_hits / window_n if single else None,
                    "val_top1": rep.top1,
                    "val_top5": rep.top5,
                    "val_wmap100": rep.wmap100,
                    "wallclock_s": time.perf_counter() - start if run.record_wallclock else None,
                }
                result.rows.append(row)
                result.report = rep
                window_loss = window_hits = window_n = 0.0
                if writer:
                    writer.writerow([_fmt(row[c]) for c in PROFILE_COLUMNS])
                    fh.flush()
                if log:
                    log(" ".join(f"{c}={_fmt(row[c])}" for c in PROFILE_COLUMNS if row[c] is not None))
                _save(run)
        if ep_n:
            result.epoch_loss.append(ep_loss / ep_n)
            result.epoch_top1.append(ep_hits / ep_n if single else float("nan"))
        _save(run)
    finally:
        if fh:
            fh.close()
    return result


def make_run(spec: ArchSpec, optim: OptimConfig, train_set: Dataset, val_set: Dataset | None,
             *, seed: int, **kw) -> TrainRun:
    model = build_model(spec, seed=seed)
    return TrainRun(model, Optimizer(optim, model.store), train_set, val_set, **kw)


# ---------------------------------------------------------------------------
# ablations

ABLATIONS = ("baseline", "residuals-off", "relu", "elu")


def ablation_arch_options(variant: str) -> dict:
    """Architecture switches for one variant; everything else stays fixed."""
    if variant not in ABLATIONS:
        raise ConfigError(f"unknown ablation {variant!r}; choose from {ABLATIONS}")
    return {
        "baseline": {},
        "residuals-off": {"residuals": False},
        "relu": {"intermediate_activation": "relu"},
        "elu": {"intermediate_activation": "elu"},
    }[variant]
