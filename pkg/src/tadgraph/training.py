"""End-to-end optimization: batching, multi-task loss, adaptive-moment steps.

One training example is a window. Per window the backbone runs, the node
branch reads the first block's features, the localization head scores a
random anchor subset through sub-graph alignment, and the combined loss is
backpropagated; gradients accumulate across the windows of a batch before
a single optimizer step. The learning rate drops once between the two
epoch phases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data import Window
from .errors import NumericError
from .heads import (DEFAULT_LAMBDA1, DEFAULT_LAMBDA2, assign_anchor_labels,
                    assign_node_labels, node_loss, subgraph_loss, total_loss)
from .model import Detector, ModelConfig


@dataclass
class TrainConfig:
    """Optimization settings; defaults follow the reference recipe."""

    model: ModelConfig = field(default_factory=ModelConfig)
    batch_size: int = 16
    epochs_phase1: int = 5
    epochs_phase2: int = 5
    lr_phase1: float = 4e-3
    lr_phase2: float = 4e-4
    lambda1: float = DEFAULT_LAMBDA1
    lambda2: float = DEFAULT_LAMBDA2
    anchors_per_window: int = 256
    seed: int = 0

    @property
    def epochs(self) -> int:
        return self.epochs_phase1 + self.epochs_phase2

    def lr_for_epoch(self, epoch: int) -> float:
        return self.lr_phase1 if epoch < self.epochs_phase1 else self.lr_phase2


class Adam:
    """Adaptive moment estimation (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params: list[ad.Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def init_params(config: TrainConfig) -> Detector:
    """Deterministic model construction from the config seed."""
    return Detector(config.model, np.random.default_rng(config.seed))


@dataclass
class WindowExample:
    """A window with its precomputed training targets."""

    window: Window
    anchor_labels: np.ndarray    # (J,) max IoU per anchor
    node_labels: np.ndarray      # (L, 2) start/end flags


def build_examples(model: Detector, windows: list[Window]) -> list[WindowExample]:
    examples = []
    for window in windows:
        segments = [(s, e) for s, e, _ in window.segments]
        examples.append(WindowExample(
            window=window,
            anchor_labels=assign_anchor_labels(model.anchors, segments),
            node_labels=assign_node_labels(model.config.window_length, segments),
        ))
    return examples


def window_loss(model: Detector, example: WindowExample, config: TrainConfig,
                subset: np.ndarray | None):
    """Forward one window; returns (total, loss_g, loss_n) tensors."""
    block1, final, graph = model.forward_features(example.window.features)
    scores = model.forward_scores(final, graph.semantic_layers[-1], subset)
    labels = example.anchor_labels if subset is None else example.anchor_labels[subset]
    loss_g = subgraph_loss(scores[:, 0], scores[:, 1], labels, config.lambda1)
    node_probs = model.forward_nodes(block1)
    loss_n = node_loss(node_probs, example.node_labels)
    loss = total_loss(loss_g, loss_n, model.params(), config.lambda2)
    return loss, loss_g, loss_n


def sample_anchor_subset(labels: np.ndarray, count: int,
                         rng: np.random.Generator) -> np.ndarray | None:
    """Positive-balanced anchor sample for one training step.

    Anchors with label >= 0.9 are always included so the regressor keeps
    its top calibrated; further positives (label > 0.5) fill up to half
    the sample and the rest is drawn from the remainder. Returns None
    when no subsampling is needed.
    """
    total = len(labels)
    if not 0 < count < total:
        return None
    near_exact = np.where(labels >= 0.9)[0]
    if len(near_exact) > count // 2:
        near_exact = rng.choice(near_exact, size=count // 2, replace=False)
    positive = np.setdiff1d(np.where(labels > 0.5)[0], near_exact)
    take_pos = min(len(positive), max(0, count // 2 - len(near_exact)))
    chosen_pos = rng.choice(positive, size=take_pos, replace=False) \
        if take_pos else np.zeros(0, dtype=np.int64)
    head = np.concatenate([near_exact, chosen_pos])
    rest = np.setdiff1d(np.arange(total), head)
    chosen_rest = rng.choice(rest, size=min(len(rest), count - len(head)), replace=False)
    return np.sort(np.concatenate([head, chosen_rest]).astype(np.int64))


def train_epoch(model: Detector, examples: list[WindowExample], optimizer: Adam,
                config: TrainConfig, lr: float, rng: np.random.Generator) -> dict:
    """One pass over the shuffled examples; returns mean loss components."""
    order = rng.permutation(len(examples))
    params = model.params()
    totals = np.zeros(3)
    pending = 0
    for pos, ei in enumerate(order):
        example = examples[int(ei)]
        subset = sample_anchor_subset(example.anchor_labels,
                                      config.anchors_per_window, rng)
        loss, loss_g, loss_n = window_loss(model, example, config, subset)
        values = (loss.item(), loss_g.item(), loss_n.item())
        if not all(np.isfinite(values)):
            raise NumericError(
                f"non-finite loss {values[0]} on window {pos} (video {example.window.video_id})")
        totals += values
        batch_here = min(config.batch_size, len(order) - (pos - pending))
        ad.mul(loss, 1.0 / batch_here).backward()
        pending += 1
        if pending == batch_here:
            optimizer.step(lr)
            ad.zero_grad(params)
            pending = 0
    if pending:
        optimizer.step(lr)
        ad.zero_grad(params)
    n = max(1, len(order))
    return {"loss_total": totals[0] / n, "loss_g": totals[1] / n, "loss_n": totals[2] / n}


def train(model: Detector, windows: list[Window], config: TrainConfig,
          out_dir=None, log=print) -> list[dict]:
    """Full two-phase run; writes checkpoint + JSONL metrics when out_dir given."""
    examples = build_examples(model, windows)
    optimizer = Adam(model.params())
    rng = np.random.default_rng(config.seed + 1)
    history = []
    metrics_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = out_dir / "metrics.jsonl"
        metrics_path.write_text("")
    for epoch in range(config.epochs):
        lr = config.lr_for_epoch(epoch)
        metrics = train_epoch(model, examples, optimizer, config, lr, rng)
        record = {"epoch": epoch, **{k: round(v, 6) for k, v in metrics.items()}, "lr": lr}
        history.append(record)
        if log is not None:
            log(f"epoch {epoch}: total={metrics['loss_total']:.4f} "
                f"g={metrics['loss_g']:.4f} n={metrics['loss_n']:.4f} lr={lr:g}")
        if metrics_path is not None:
            with open(metrics_path, "a") as fh:
                fh.write(json.dumps(record) + "\n")
    if out_dir is not None:
        model.save(out_dir / "checkpoint.tgck")
        (out_dir / "config.json").write_text(json.dumps({
            "model": config.model.to_json_dict(),
            "batch_size": config.batch_size,
            "epochs_phase1": config.epochs_phase1,
            "epochs_phase2": config.epochs_phase2,
            "lr_phase1": config.lr_phase1,
            "lr_phase2": config.lr_phase2,
            "lambda1": config.lambda1,
            "lambda2": config.lambda2,
            "anchors_per_window": config.anchors_per_window,
            "seed": config.seed,
        }, indent=1))
    return history
