"""Full detector: backbone, sub-graph alignment, and both scoring heads."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .align import SubgraphAligner, enumerate_anchors
from .autodiff import Tensor
from .backbone import BackboneParams, backbone_forward
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import FormatError
from .heads import LocalizationParams, NodeParams, localization_forward, node_branch_forward


@dataclass
class ModelConfig:
    """Architecture settings; defaults target the desk-scale synthetic setup."""

    c_raw: int = 32
    width: int = 32
    blocks: int = 3
    cardinality: int = 8
    bottleneck_ratio: int = 2
    k_neighbors: int = 4
    tau1: int = 32
    tau2: int = 4
    window_length: int = 100
    max_duration: int = 64
    head_hidden: tuple[int, int] = (512, 128)

    def to_json_dict(self) -> dict:
        return {
            "c_raw": self.c_raw, "width": self.width, "blocks": self.blocks,
            "cardinality": self.cardinality, "bottleneck_ratio": self.bottleneck_ratio,
            "k_neighbors": self.k_neighbors, "tau1": self.tau1, "tau2": self.tau2,
            "window_length": self.window_length, "max_duration": self.max_duration,
            "head_hidden": list(self.head_hidden),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ModelConfig":
        kwargs = dict(data)
        kwargs["head_hidden"] = tuple(kwargs.get("head_hidden", (512, 128)))
        return cls(**kwargs)


class Detector:
    """Parameter container plus the forward passes used in training and inference."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        self.backbone = BackboneParams.create(
            config.c_raw, config.width, config.blocks, config.cardinality,
            config.bottleneck_ratio, rng)
        self.anchors = enumerate_anchors(config.window_length, config.max_duration)
        self.aligner = SubgraphAligner(self.anchors, config.window_length,
                                       config.tau1, config.tau2)
        feature_width = self.aligner.feature_width(config.width)
        self.loc_head = LocalizationParams.create(feature_width, config.head_hidden, rng)
        self.node_head = NodeParams.create(config.width, rng)

    # -- parameters ----------------------------------------------------------

    def named_params(self) -> dict[str, Tensor]:
        out = self.backbone.named()
        out.update(self.loc_head.named())
        out.update(self.node_head.named())
        return out

    def params(self) -> list[Tensor]:
        return list(self.named_params().values())

    def save(self, path) -> None:
        save_checkpoint(path, {name: t.data for name, t in self.named_params().items()})

    def load(self, path) -> None:
        stored = load_checkpoint(path)
        for name, tensor in self.named_params().items():
            if name not in stored:
                raise FormatError(f"checkpoint missing parameter '{name}'")
            if stored[name].shape != tensor.data.shape:
                raise FormatError(
                    f"checkpoint parameter '{name}' has shape {stored[name].shape}, "
                    f"model expects {tensor.data.shape}")
            tensor.data = stored[name]

    # -- forward passes --------------------------------------------------------

    def forward_features(self, features: np.ndarray):
        """(C_raw, L) window features -> (block-1 tensor, final tensor, graph)."""
        return backbone_forward(Tensor(features), self.backbone, self.config.k_neighbors)

    def forward_scores(self, final: Tensor, edges: np.ndarray,
                       subset: np.ndarray | None = None) -> Tensor:
        """Anchor scores (rows follow the anchor set or the given subset)."""
        aligned = self.aligner(final, edges, subset)
        return localization_forward(aligned, self.loc_head)

    def forward_nodes(self, block1: Tensor) -> Tensor:
        return node_branch_forward(block1, self.node_head)
