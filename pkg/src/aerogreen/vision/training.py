"""Training loop, evaluation report, and capture-session planning."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..simcore import HEALTH_CLASSES
from .dataset import DatasetSplit
from .images import LabeledImage
from .net import ConvNet, to_input

log = logging.getLogger(__name__)

_TRAIN_STREAM = 0x7472616E


class TrainingError(RuntimeError):
    """Raised when optimization diverges; carries where it happened."""

    def __init__(self, message: str, epoch: int, batch: int,
                 grad_norm: float) -> None:
        super().__init__(
            f"{message} (epoch {epoch}, batch {batch}, "
            f"grad norm {grad_norm:.3e})"
        )
        self.epoch = epoch
        self.batch = batch
        self.grad_norm = grad_norm


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 12
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    freeze_backbone_epochs: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.freeze_backbone_epochs < 0:
            raise ValueError("freeze_backbone_epochs must be non-negative")


def batch_arrays(images: list[LabeledImage],
                 classes: tuple[str, ...]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([to_input(img.pixels) for img in images])
    y = np.array([classes.index(img.label) for img in images], dtype=int)
    return x, y


def _accuracy(model: ConvNet, x: np.ndarray, y: np.ndarray,
              chunk: int = 256) -> float:
    if len(y) == 0:
        return 0.0
    hits = 0
    for start in range(0, len(y), chunk):
        logits = model.forward(x[start : start + chunk])
        hits += int((logits.argmax(axis=1) == y[start : start + chunk]).sum())
    return hits / len(y)


def _grad_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def train(
    model: ConvNet, data: DatasetSplit, cfg: TrainConfig
) -> tuple[ConvNet, list[float], list[float]]:
    """Minibatch SGD with momentum; returns per-epoch accuracy curves.

    While the first freeze_backbone_epochs run, only head weights move;
    the conv stack stays bit-identical, mirroring a staged fine-tune.
    """
    if not data.train:
        raise ValueError("training partition is empty")
    x_train, y_train = batch_arrays(data.train, model.classes)
    x_val, y_val = (
        batch_arrays(data.val, model.classes) if data.val
        else (np.empty((0,) + model.input_shape), np.empty(0, dtype=int))
    )
    rng = np.random.default_rng(np.random.SeedSequence([_TRAIN_STREAM, cfg.seed]))
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    train_curve: list[float] = []
    val_curve: list[float] = []
    for epoch in range(cfg.epochs):
        frozen = epoch < cfg.freeze_backbone_epochs
        order = rng.permutation(len(y_train))
        for batch_no, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            loss, grads = model.loss_and_grads(x_train[idx], y_train[idx])
            if not np.isfinite(loss):
                raise TrainingError(
                    "loss is not finite", epoch, batch_no, _grad_norm(grads)
                )
            for name, grad in grads.items():
                if frozen and name.startswith("conv"):
                    continue
                vel = velocity[name]
                vel *= cfg.momentum
                vel -= cfg.learning_rate * grad
                model.params[name] += vel
        train_curve.append(_accuracy(model, x_train, y_train))
        val_curve.append(_accuracy(model, x_val, y_val))
    return model, train_curve, val_curve


@dataclass(frozen=True)
class EvalReport:
    confusion: tuple[tuple[int, ...], ...]
    per_class_recall: tuple[float, ...]
    total_accuracy: float
    train_curve: tuple[float, ...] = ()
    val_curve: tuple[float, ...] = ()
    classes: tuple[str, ...] = HEALTH_CLASSES

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "confusion": [list(row) for row in self.confusion],
            "per_class_recall": list(self.per_class_recall),
            "total_accuracy": self.total_accuracy,
            "train_curve": list(self.train_curve),
            "val_curve": list(self.val_curve),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def evaluate(
    model: ConvNet,
    images: list[LabeledImage],
    train_curve: list[float] | None = None,
    val_curve: list[float] | None = None,
) -> EvalReport:
    """Confusion counts over a labeled set; recall of an absent class is 0."""
    if not images:
        raise ValueError("evaluation set is empty")
    x, y = batch_arrays(images, model.classes)
    k = len(model.classes)
    confusion = np.zeros((k, k), dtype=int)
    for start in range(0, len(y), 256):
        logits = model.forward(x[start : start + 256])
        for true, pred in zip(y[start : start + 256], logits.argmax(axis=1)):
            confusion[true, pred] += 1
    row_sums = confusion.sum(axis=1)
    recalls = tuple(
        float(confusion[i, i] / row_sums[i]) if row_sums[i] else 0.0
        for i in range(k)
    )
    return EvalReport(
        confusion=tuple(tuple(int(v) for v in row) for row in confusion),
        per_class_recall=recalls,
        total_accuracy=float(np.trace(confusion) / confusion.sum()),
        train_curve=tuple(train_curve or ()),
        val_curve=tuple(val_curve or ()),
        classes=model.classes,
    )


def render_report(report: EvalReport) -> str:
    width = max(len(c) for c in report.classes) + 2
    head = "true \\ predicted".ljust(18)
    head += "".join(c.rjust(width) for c in report.classes) + "   recall"
    lines = [head]
    for i, cls in enumerate(report.classes):
        row = cls.ljust(18)
        row += "".join(str(v).rjust(width) for v in report.confusion[i])
        row += f"   {report.per_class_recall[i] * 100:6.2f}%"
        lines.append(row)
    n = sum(sum(row) for row in report.confusion)
    lines.append(f"total accuracy {report.total_accuracy * 100:.2f}%  (n = {n})")
    return "\n".join(lines)


@dataclass(frozen=True)
class CapturePlan:
    days: tuple[int, ...]
    n_plants: int

    @property
    def total_images(self) -> int:
        return len(self.days) * self.n_plants


def plan_capture_sessions(
    start_day: int, end_day: int, interval_days: int, n_plants: int
) -> CapturePlan:
    """Capture days from start to end inclusive, stepping by the interval."""
    if start_day > end_day:
        raise ValueError("start_day must not exceed end_day")
    if interval_days < 1:
        raise ValueError("interval_days must be at least 1")
    if n_plants < 0:
        raise ValueError("n_plants must be non-negative")
    days = tuple(range(start_day, end_day + 1, interval_days))
    return CapturePlan(days=days, n_plants=n_plants)


@dataclass(frozen=True)
class DiseaseCall:
    plant: int
    label: str
    probability: float
    alerted: bool
    delivered: bool = True


def classify_and_publish(
    model: ConvNet,
    images: list[LabeledImage],
    broker,
    sim_time: float,
    threshold: float = 0.8,
    alert_sink=None,
) -> list[DiseaseCall]:
    """Score one image per plant and push the verdicts to telemetry.

    A non-healthy label at or above the probability threshold raises an
    alert through alert_sink. Publish failures are kept locally and
    retried once so a telemetry hiccup cannot lose a diagnosis.
    """
    calls: list[DiseaseCall] = []
    pending: list[tuple[int, str]] = []
    for plant, img in enumerate(images):
        label, probs = model.predict(img.pixels)
        prob = float(probs.max())
        alerted = label != "healthy" and prob >= threshold
        value = json.dumps({"label": label, "p": round(prob, 4)})
        delivered = True
        try:
            broker.publish(f"gh/plant{plant}/disease", sim_time, value, "json")
        except Exception:
            log.warning("disease frame for plant%d not delivered, will retry",
                        plant)
            pending.append((plant, value))
            delivered = False
        if alerted and alert_sink is not None:
            alert_sink(f"plant{plant}", label, prob)
        calls.append(DiseaseCall(plant, label, prob, alerted, delivered))
    for plant, value in pending:
        try:
            broker.publish(f"gh/plant{plant}/disease", sim_time, value, "json")
            calls[plant] = DiseaseCall(
                plant, calls[plant].label, calls[plant].probability,
                calls[plant].alerted, True,
            )
        except Exception:
            log.warning("disease frame for plant%d still undelivered", plant)
    return calls
