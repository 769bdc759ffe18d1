"""Training orchestration: joint transfer objective, epochs, selection.

The transfer objective is the target-language log-likelihood plus mu
times each source-language log-likelihood.  One epoch is one shuffled
pass over the union of target and source sentences; source sentences
carry weight mu in both the loss and the gradient.  When mu is exactly
zero, source sentences are dropped from the stream entirely, which
makes a joint run bit-identical to a run with the sources detached
(same shuffles, same accumulator trajectory).

Model selection tracks dev entity F1 after every epoch and keeps the
earliest checkpoint among ties; ``select="final"`` disables selection
for strict last-epoch reporting.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import LabeledSentence, TagSet
from .evaluation import EvalReport, entity_f1
from .neural import NeuralModel, loss_and_gradients
from .optim import AdaDeltaState, adadelta_step
from .rng import SplitMix64


@dataclass
class TransferTask:
    target_language: str
    target_train: list[LabeledSentence]
    dev: list[LabeledSentence]
    sources: list[tuple[str, list[LabeledSentence]]] = field(default_factory=list)
    mu: float = 1.0

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        for s in self.target_train:
            if s.language != self.target_language:
                raise ValueError(
                    f"target train sentence in {s.language!r}, task is {self.target_language!r}"
                )
        for s in self.dev:
            if s.language != self.target_language:
                raise ValueError("dev corpus must be in the target language")
        for lang, corpus in self.sources:
            for s in corpus:
                if s.language != lang:
                    raise ValueError(f"source corpus for {lang!r} contains {s.language!r}")


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    learning_rate: float = 1.0
    rho: float = 0.95
    eps: float = 1e-6
    checkpoint_dir: str | None = None
    checkpoint_every: int = 1
    select: str = "dev"  # "dev" (best dev F1) or "final" (last epoch)
    timing: bool = False  # real wall_ms in history breaks byte-reproducibility

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.select not in ("dev", "final"):
            raise ValueError(f"unknown selection rule {self.select!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_p: float
    dev_r: float
    dev_f1: float
    wall_ms: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "epoch": self.epoch,
                "train_loss": self.train_loss,
                "dev_p": self.dev_p,
                "dev_r": self.dev_r,
                "dev_f1": self.dev_f1,
                "wall_ms": self.wall_ms,
            },
            sort_keys=True,
        )


@dataclass
class TrainResult:
    best_model: NeuralModel
    best_epoch: int
    best_dev_f1: float
    history: list[EpochRecord]


def joint_loss(
    model: NeuralModel,
    target_batch: Sequence[LabeledSentence],
    source_batches: Sequence[Sequence[LabeledSentence]],
    mu: float,
) -> tuple[float, np.ndarray]:
    """Weighted negative log-likelihood over target plus sources."""
    if mu < 0:
        raise ValueError("mu must be >= 0")
    grad = model.zero_grad()
    total = 0.0
    if target_batch:
        loss, _ = loss_and_gradients(model, target_batch, grad=grad)
        total += loss
    if mu > 0:
        for batch in source_batches:
            if batch:
                loss, _ = loss_and_gradients(model, batch, grad=grad, weight=mu)
                total += loss
    return total, grad


def evaluate(model, corpus: Sequence[LabeledSentence], tagset: TagSet) -> EvalReport:
    """Decode ``corpus`` with ``model`` and score against its gold tags."""
    pred = [model.decode(s.sentence) for s in corpus]
    return entity_f1(corpus, pred, tagset)


def train(task: TransferTask, config: TrainConfig, model: NeuralModel) -> TrainResult:
    """AdaDelta over shuffled union epochs with dev-F1 selection."""
    if not task.dev:
        raise ValueError("dev corpus is empty; model selection is impossible")
    if not task.target_train:
        raise ValueError("target training corpus is empty")

    stream: list[tuple[LabeledSentence, float]] = [
        (s, 1.0) for s in task.target_train
    ]
    if task.mu > 0:
        for _, corpus in task.sources:
            stream.extend((s, task.mu) for s in corpus)

    state = AdaDeltaState.zeros(model.n_params, rho=config.rho, eps=config.eps)
    shuffler = SplitMix64(config.seed)
    order = np.arange(len(stream))
    history: list[EpochRecord] = []
    best_f1 = -1.0
    best_epoch = -1
    best_params = model.params.copy()
    t0 = time.monotonic()

    for epoch in range(1, config.epochs + 1):
        shuffler.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            grad = model.zero_grad()
            for idx in order[start : start + config.batch_size]:
                sent, weight = stream[idx]
                loss, _ = loss_and_gradients(model, [sent], grad=grad, weight=weight)
                epoch_loss += loss
            adadelta_step(model.params, grad, state, config.learning_rate)
        report = evaluate(model, task.dev, model.tagset)
        wall_ms = int((time.monotonic() - t0) * 1000) if config.timing else 0
        history.append(
            EpochRecord(
                epoch=epoch,
                train_loss=epoch_loss,
                dev_p=report.precision,
                dev_r=report.recall,
                dev_f1=report.f1,
                wall_ms=wall_ms,
            )
        )
        if report.f1 > best_f1:
            best_f1 = report.f1
            best_epoch = epoch
            best_params = model.params.copy()
        if config.checkpoint_dir and epoch % config.checkpoint_every == 0:
            from .serialize import save_model

            save_model(
                model, os.path.join(config.checkpoint_dir, f"epoch_{epoch}.model")
            )

    if config.select == "final":
        best_epoch = config.epochs
        best_f1 = history[-1].dev_f1
    else:
        model.params[:] = best_params

    if config.checkpoint_dir:
        from .serialize import write_atomic

        lines = "".join(rec.to_json() + "\n" for rec in history)
        write_atomic(
            os.path.join(config.checkpoint_dir, "history.jsonl"),
            lines.encode("utf-8"),
        )
    return TrainResult(model, best_epoch, best_f1, history)
