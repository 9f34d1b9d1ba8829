from ..losses import bce_loss
from .metrics import ClassMetrics, ConfusionCounts, Metrics, auc, confusion, metrics

__all__ = ["ClassMetrics", "ConfusionCounts", "Metrics", "auc", "bce_loss", "confusion", "metrics"]
