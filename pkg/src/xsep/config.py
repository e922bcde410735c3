"""Strict ``key = value`` run configuration and the runners built on it.

Sections are ``[arch]``, ``[optim]``, ``[data]`` and ``[run]``.  Unknown
sections or keys are errors, as are values that fail validation.
Defaults reproduce the ImageNet optimisation setup.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field, fields, replace

from .arch import ArchSpec, build_named, load as load_arch
from .data import Dataset, load_dataset, synth_dataset
from .errors import ConfigError
from .optim import OptimConfig, Schedule
from .train import ABLATIONS, TrainResult, ablation_arch_options, make_run, train


@dataclass
class ArchSection:
    preset: str = "toy_xception"
    classes: int = 10
    fc: tuple = ()
    residuals: bool = True
    intermediate_activation: str = "none"
    dropout: float = 0.5
    task: str = "single-label"


@dataclass
class OptimSection:
    optimizer: str = "sgd"
    momentum: float = 0.9
    learning_rate: float = 0.045
    decay_factor: float = 0.94
    decay_every: float = 2
    decay_unit: str = "epochs"
    weight_decay: float = 1e-5
    polyak: bool = True
    polyak_decay: float = 0.999
    rmsprop_rho: float = 0.9
    rmsprop_epsilon: float = 1e-7


@dataclass
class DataSection:
    source: str = "synthetic"
    train_images: str = ""
    train_labels: str = ""
    val_images: str = ""
    val_labels: str = ""
    class_weights: str = ""
    synth_train: int = 12800
    synth_val: int = 1000
    synth_seed: int = 7
    synth_noise: float = 3.0


@dataclass
class RunSection:
    seed: int = 7
    steps: int = 3000
    batch_size: int = 64
    eval_every: int = 200
    shuffle_seed: int = 7
    profile: str = "profile.csv"
    checkpoint: str = "model.ckpt"
    wallclock: bool = True


@dataclass
class Config:
    arch: ArchSection = field(default_factory=ArchSection)
    optim: OptimSection = field(default_factory=OptimSection)
    data: DataSection = field(default_factory=DataSection)
    run: RunSection = field(default_factory=RunSection)


_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _coerce(section: str, key: str, raw: str, default):
    where = f"[{section}] {key}"
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in _TRUE | _FALSE:
                raise ValueError(raw)
            return low in _TRUE
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(p) for p in raw.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


def parse_config(text: str, source: str = "<config>") -> Config:
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#",),
                                       inline_comment_prefixes=("#",), interpolation=None,
                                       strict=True, empty_lines_in_values=False)
    parser.optionxform = str
    try:
        parser.read_string(text, source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    cfg = Config()
    sections = {f.name: f for f in fields(Config)}
    for name in parser.sections():
        if name not in sections:
            raise ConfigError(f"{source}: unknown section [{name}]")
        target = getattr(cfg, name)
        known = {f.name: f for f in fields(target)}
        for key, raw in parser.items(name):
            if key not in known:
                raise ConfigError(f"{source}: unknown key {key!r} in [{name}]")
            default = known[key].default if known[key].default is not dataclasses.MISSING else ()
            setattr(target, key, _coerce(name, key, raw.strip(), default))
    validate_config(cfg)
    return cfg


def load_config(path) -> Config:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def validate_config(cfg: Config) -> None:
    if cfg.arch.classes < 1:
        raise ConfigError("[arch] classes must be >= 1")
    if not 0 <= cfg.arch.dropout < 1:
        raise ConfigError("[arch] dropout must be in [0, 1)")
    if cfg.arch.intermediate_activation not in ("none", "relu", "elu"):
        raise ConfigError("[arch] intermediate_activation must be none, relu or elu")
    if cfg.arch.task not in ("single-label", "multi-label"):
        raise ConfigError("[arch] task must be single-label or multi-label")
    if cfg.data.source not in ("synthetic", "files"):
        raise ConfigError("[data] source must be synthetic or files")
    if cfg.data.source == "files" and not (cfg.data.train_images and cfg.data.train_labels):
        raise ConfigError("[data] source = files needs train_images and train_labels")
    if cfg.data.synth_train < 1 or cfg.data.synth_val < 0 or cfg.data.synth_noise < 0:
        raise ConfigError("[data] synthetic sizes and noise must be non-negative")
    r = cfg.run
    if r.steps < 0 or r.batch_size < 1 or r.eval_every < 1:
        raise ConfigError("[run] steps >= 0, batch_size >= 1 and eval_every >= 1 required")
    optim_config(cfg)


def optim_config(cfg: Config) -> OptimConfig:
    o = cfg.optim
    try:
        return OptimConfig(kind=o.optimizer, momentum=o.momentum, lr0=o.learning_rate,
                           schedule=Schedule(o.decay_factor, o.decay_every, o.decay_unit),
                           weight_decay=o.weight_decay, polyak=o.polyak,
                           polyak_decay=o.polyak_decay, rho=o.rmsprop_rho,
                           epsilon=o.rmsprop_epsilon)
    except ConfigError as exc:
        raise ConfigError(f"[optim] {exc}") from None


def arch_spec(cfg: Config) -> ArchSpec:
    a = cfg.arch
    if os.path.isfile(a.preset):
        return load_arch(a.preset)
    return build_named(a.preset, a.classes, a.fc, a.residuals, a.intermediate_activation,
                       task=a.task, dropout=a.dropout)


def datasets(cfg: Config, spec: ArchSpec) -> tuple[Dataset, Dataset | None]:
    d = cfg.data
    if d.source == "files":
        for p in (d.train_images, d.train_labels, d.val_images, d.val_labels, d.class_weights):
            if p and not os.path.exists(p):
                raise ConfigError(f"[data] file not found: {p}")
        weights = d.class_weights or None
        tr = load_dataset(d.train_images, d.train_labels, "train", weights)
        va = (load_dataset(d.val_images, d.val_labels, "val", weights)
              if d.val_images and d.val_labels else None)
        return tr, va
    hw = spec.input_shape[1]
    multi = spec.task == "multi-label"
    tr = synth_dataset(spec.num_classes, d.synth_train, hw, d.synth_seed, noise=d.synth_noise,
                       multi_label=multi)
    va = (synth_dataset(spec.num_classes, d.synth_val, hw, d.synth_seed + 1, noise=d.synth_noise,
                        multi_label=multi, split="val") if d.synth_val else None)
    return tr, va


def run_config(cfg: Config, log=None, train_set=None, val_set=None) -> TrainResult:
    """Build everything ``cfg`` describes and train it.

    Pre-built datasets may be passed in to avoid regenerating them.
    """
    spec = arch_spec(cfg)
    if train_set is None:
        train_set, val_set = datasets(cfg, spec)
    r = cfg.run
    run = make_run(spec, optim_config(cfg), train_set, val_set, seed=r.seed, steps=r.steps,
                   batch_size=r.batch_size, eval_every=r.eval_every, shuffle_seed=r.shuffle_seed,
                   profile_path=r.profile or None, checkpoint_path=r.checkpoint or None,
                   record_wallclock=r.wallclock)
    return train(run, log=log)


def ablation_config(cfg: Config, variant: str, out_dir) -> Config:
    """Copy of ``cfg`` with one architecture switch flipped and per-variant outputs.

    Wall-clock is dropped from the profile so repeated runs compare bit for bit.
    """
    arch = replace(cfg.arch, **ablation_arch_options(variant))
    run = replace(cfg.run, profile=os.path.join(out_dir, f"{variant}.csv"),
                  checkpoint=os.path.join(out_dir, f"{variant}.ckpt"), wallclock=False)
    return Config(arch, replace(cfg.optim), replace(cfg.data), run)


def ablation_run(cfg: Config, variant: str, out_dir, log=None, train_set=None,
                 val_set=None) -> TrainResult:
    return run_config(ablation_config(cfg, variant, out_dir), log, train_set, val_set)


__all__ = ["ABLATIONS", "Config", "ablation_config", "ablation_run", "arch_spec", "datasets",
           "load_config", "optim_config", "parse_config", "run_config"]
