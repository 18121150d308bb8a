"""Two-stage SGD training: pretrain on gold data, then train jointly with projected data."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import GoldCorpus, build_vocab
from .model import Tagger
from .neural import (Example, Gradients, ModelParams, NumericError, init_params,
                     loss_and_gradients, make_gold_examples, make_projected_examples,
                     tag_distributions)
from .projection import ProjectedCorpus

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    emb_dim: int = 128
    hidden_dim: int = 128
    lr: float = 1.0
    stage1_epochs: int = 20
    stage2_epochs: int = 20
    patience: int = 5
    clip_norm: float = 5.0
    seed: int = 0
    proj_per_gold: int = 1
    min_count: int = 1

    def __post_init__(self):
        if self.emb_dim <= 0 or self.hidden_dim <= 0:
            raise ConfigError("dimensions must be positive")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.patience < 0 or self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise ConfigError("epoch counts and patience must be non-negative")
        if self.proj_per_gold < 0:
            raise ConfigError("proj_per_gold must be non-negative")
        if not self.clip_norm > 0:
            raise ConfigError("clip_norm must be positive")
        if self.min_count < 1:
            raise ConfigError("min_count must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def parse_key_values(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def coerce_fields(cls, values: dict, base=None):
    """Build a dataclass from string values, converting by the field defaults' types."""
    base = base if base is not None else cls()
    kinds = {f.name: type(getattr(base, f.name)) for f in dataclasses.fields(cls)}
    changes = {}
    for key, raw in values.items():
        if key not in kinds:
            raise ConfigError(f"unknown config key {key!r}")
        kind = kinds[key]
        try:
            if kind is bool:
                if str(raw).lower() not in ("1", "0", "true", "false", "yes", "no"):
                    raise ValueError(raw)
                changes[key] = str(raw).lower() in ("1", "true", "yes")
            else:
                changes[key] = kind(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"bad value {raw!r} for config key {key!r}") from None
    return dataclasses.replace(base, **changes)


def load_config(path=None, overrides: dict | None = None) -> TrainConfig:
    values = {}
    if path is not None:
        with open(path, encoding="utf-8") as f:
            values.update(parse_key_values(f.read(), str(path)))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return coerce_fields(TrainConfig, values)


@dataclass
class EpochRecord:
    stage: str
    epoch: int
    train_loss: float
    dev_accuracy: float | None
    seconds: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    chosen: int | None = None
    config: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def chosen_record(self) -> EpochRecord | None:
        return None if self.chosen is None else self.epochs[self.chosen]

    def extend(self, other: "TrainReport") -> None:
        offset = len(self.epochs)
        self.epochs.extend(other.epochs)
        self.wall_clock += other.wall_clock
        self.chosen = best_epoch(self.epochs)
        if self.chosen is None and other.chosen is not None:
            self.chosen = other.chosen + offset

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2)


def best_epoch(records: Sequence[EpochRecord]) -> int | None:
    """Index of the highest dev accuracy, earliest on ties."""
    best = None
    for i, r in enumerate(records):
        if r.dev_accuracy is None:
            continue
        if best is None or r.dev_accuracy > records[best].dev_accuracy:
            best = i
    return best


def sgd_update(params: ModelParams, grads: Gradients, lr: float,
               clip_norm: float | None = None) -> ModelParams:
    """In-place SGD step with global-norm clipping; returns ``params``."""
    if not grads.all_finite():
        raise NumericError("non-finite gradient")
    scale = lr
    if clip_norm is not None:
        norm = grads.global_norm()
        if norm > clip_norm:
            scale = lr * clip_norm / norm
    if len(grads.emb_rows):
        params.E[grads.emb_rows] -= scale * grads.emb_grad
    for name, arr in params.named_arrays():
        if name != "E":
            arr -= scale * grads.arrays[name]
    return params


def sgd_step(params: ModelParams, ex: Example, config: TrainConfig) -> float:
    if ex.head == "gold":
        loss, grads = loss_and_gradients(params, [ex], [])
    else:
        loss, grads = loss_and_gradients(params, [], [ex])
    if not np.isfinite(loss):
        raise NumericError("non-finite training loss")
    sgd_update(params, grads, config.lr, config.clip_norm)
    return loss


def accuracy(params: ModelParams, examples: Sequence[Example]) -> float | None:
    """Token accuracy of the gold head against one-hot targets; ``None`` when empty."""
    correct = total = 0
    for ex in examples:
        pred = np.argmax(tag_distributions(params, ex.ids), axis=1)
        correct += int(np.sum(pred == np.argmax(ex.targets, axis=1)))
        total += len(ex)
    return correct / total if total else None


class _Stopper:
    """Tracks the best dev epoch and decides when patience is exhausted."""

    def __init__(self, params, patience, baseline=None):
        self.patience = patience
        self.best_acc = baseline
        self.best_params = params.copy() if baseline is not None else None
        self.bad = 0

    def update(self, params, acc) -> bool:
        """Record an epoch; return True when training should stop."""
        if acc is None:
            return False
        if self.best_acc is None or acc > self.best_acc:
            self.best_acc = acc
            self.best_params = params.copy()
            self.bad = 0
            return False
        self.bad += 1
        return self.bad > self.patience


def _train_loop(params, stage, epochs, run_epoch, dev, config, baseline=None):
    report = TrainReport(config=config.to_dict())
    start = time.perf_counter()
    stopper = _Stopper(params, config.patience, baseline)
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        losses = run_epoch()
        acc = accuracy(params, dev)
        rec = EpochRecord(stage, epoch, float(np.mean(losses)) if losses else 0.0, acc,
                          time.perf_counter() - t0)
        report.epochs.append(rec)
        log.info("%s epoch %d loss %.4f dev %s", stage, epoch, rec.train_loss,
                 "n/a" if acc is None else f"{acc:.4f}")
        if stopper.update(params, acc):
            break
    report.chosen = best_epoch(report.epochs)
    if stopper.best_params is not None:
        params = stopper.best_params
    report.wall_clock = time.perf_counter() - start
    return params, report


def _shuffle_rng(config: TrainConfig, stage: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, stage])


def pretrain(params: ModelParams, gold_train: Sequence[Example], dev: Sequence[Example],
             config: TrainConfig, stage: str = "pretrain") -> tuple[ModelParams, TrainReport]:
    """Per-sentence SGD on one stream of examples, keeping the best dev epoch.

    Also serves the single-corpus baselines: pass projected examples built
    with ``head="gold"`` to train directly on projected labels.
    """
    if config.stage1_epochs and not gold_train:
        raise ValueError("pretraining needs at least one training sentence")
    params = params.copy()
    rng = _shuffle_rng(config, 1)

    def run_epoch():
        return [sgd_step(params, gold_train[i], config) for i in rng.permutation(len(gold_train))]

    return _train_loop(params, stage, config.stage1_epochs, run_epoch, dev, config)


class _CyclingStream:
    """Endless shuffled pass over a list; reshuffles at each wrap-around."""

    def __init__(self, items, rng):
        self.items = items
        self.rng = rng
        self.order = []
        self.pos = 0

    def next(self):
        if self.pos >= len(self.order):
            self.order = self.rng.permutation(len(self.items))
            self.pos = 0
        item = self.items[self.order[self.pos]]
        self.pos += 1
        return item


def joint_train(params: ModelParams, gold_train: Sequence[Example], projected: Sequence[Example],
                dev: Sequence[Example], config: TrainConfig,
                baseline: float | None = None) -> tuple[ModelParams, TrainReport]:
    """Interleave gold steps with ``proj_per_gold`` projected steps per gold sentence.

    ``baseline`` is the dev accuracy of the incoming parameters; when given,
    the incoming parameters are kept unless some epoch beats it.
    """
    if not gold_train or not projected:
        raise ValueError("joint training needs both gold and projected sentences")
    params = params.copy()
    rng = _shuffle_rng(config, 2)
    stream = _CyclingStream(projected, _shuffle_rng(config, 3))

    def run_epoch():
        losses = []
        for i in rng.permutation(len(gold_train)):
            losses.append(sgd_step(params, gold_train[i], config))
            for _ in range(config.proj_per_gold):
                losses.append(sgd_step(params, stream.next(), config))
        return losses

    return _train_loop(params, "joint", config.stage2_epochs, run_epoch, dev, config, baseline)


def train_pipeline(gold_train: GoldCorpus, projected: ProjectedCorpus | None, dev: GoldCorpus,
                   config: TrainConfig) -> tuple[Tagger, TrainReport]:
    """Initialise, pretrain on gold, then jointly train when projected data is given."""
    corpora = list(gold_train.token_sequences())
    if projected is not None:
        corpora += projected.token_sequences()
    vocab = build_vocab(corpora, config.min_count)
    proj_tagset = projected.tagset if projected is not None else gold_train.tagset
    params = init_params(config.emb_dim, config.hidden_dim, len(vocab), gold_train.tagset.size,
                         proj_tagset.size, seed=config.seed)

    gold_ex = make_gold_examples(gold_train, vocab)
    dev_ex = make_gold_examples(dev, vocab)
    params, report = pretrain(params, gold_ex, dev_ex, config)
    if projected is not None and len(projected) and config.stage2_epochs:
        baseline = report.chosen_record.dev_accuracy if report.chosen is not None else None
        proj_ex = make_projected_examples(projected, vocab, head="bias")
        params, joint_report = joint_train(params, gold_ex, proj_ex, dev_ex, config, baseline)
        report.extend(joint_report)
    return Tagger(params, vocab, gold_train.tagset, proj_tagset), report
