"""Desk-scale temporal action detection on video snippet graphs.

Videos are graphs of snippet features with fixed temporal edges and
dynamic semantic k-NN edges; stacked aggregation blocks enrich the
features, candidate segments are scored as sub-graphs through an
interpolation-rescaling alignment, and detections come out of score
fusion plus Soft-NMS.
"""

from .autodiff import Tensor, grad_check, no_grad, zero_grad
from .model import Detector, ModelConfig
from .training import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "Tensor", "grad_check", "no_grad", "zero_grad",
    "Detector", "ModelConfig", "TrainConfig",
    "__version__",
]
