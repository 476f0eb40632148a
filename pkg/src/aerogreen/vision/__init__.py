"""Leaf-image pipeline: synthesis, augmentation, a small conv net, training."""
from .images import LabeledImage, load_dataset, read_image, save_dataset, write_image
from .synthetic import generate_synthetic_leaf, synthetic_dataset
from .transforms import augment, hflip, rotate, vflip, zoom
from .dataset import DatasetSplit, split
from .net import ConvNet, gradient_check, load_model, save_model
from .training import (
    CapturePlan,
    EvalReport,
    TrainConfig,
    TrainingError,
    classify_and_publish,
    evaluate,
    plan_capture_sessions,
    render_report,
    train,
)

__all__ = [
    "LabeledImage", "load_dataset", "read_image", "save_dataset", "write_image",
    "generate_synthetic_leaf", "synthetic_dataset",
    "augment", "hflip", "rotate", "vflip", "zoom",
    "DatasetSplit", "split",
    "ConvNet", "gradient_check", "load_model", "save_model",
    "CapturePlan", "EvalReport", "TrainConfig", "TrainingError",
    "classify_and_publish", "evaluate", "plan_capture_sessions",
    "render_report", "train",
]
