"""From-scratch shallow models for age-group classification and age regression."""

from .curves import CurveCheck, check_curve, smooth
from .gradcheck import GradCheckResult, grad_check
from .labels import CLASS_NAMES, make_labels
from .metrics import Metrics, accuracy, confusion_percent, macro_ovr_auc, mae, roc_auc
from .models import KINDS, TASKS, ModelConfig, build_network, normalize_task
from .serialize import load_model, save_model
from .split import split
from .train import Adam, TrainedModel, evaluate, init_model, train

__all__ = [
    "Adam", "CLASS_NAMES", "CurveCheck", "GradCheckResult", "KINDS", "Metrics", "ModelConfig", "TASKS",
    "TrainedModel", "accuracy", "build_network", "check_curve", "confusion_percent", "evaluate", "grad_check",
    "init_model", "load_model", "macro_ovr_auc", "mae", "make_labels", "normalize_task",
    "roc_auc", "save_model", "smooth", "split", "train",
]
