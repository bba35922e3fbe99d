"""Shared test utilities."""

import numpy as np

from tadgraph import autodiff as ad


def relu_margin(loss: ad.Tensor) -> float:
    """Smallest |pre-activation| over every relu in the recorded graph.

    Finite-difference checks are only trustworthy away from relu kinks, so
    tests resample their seed until this margin clears a threshold.
    """
    margin = np.inf
    for node in ad.graph_nodes(loss):
        if node.op == "relu":
            margin = min(margin, float(np.min(np.abs(node._parents[0].data))))
    return margin


def zero_block(params) -> None:
    """Zero every stream weight of a block (residual-only behaviour)."""
    for name in ("t_in", "t_conv", "t_out", "s_in", "s_self", "s_neigh", "s_out"):
        getattr(params, name).data[...] = 0.0


def expand_grouped_taps(w: np.ndarray, groups: int) -> np.ndarray:
    """Embed grouped (k, C/g, C) taps into dense block-diagonal (k, C, C) taps."""
    k, c_g, c_out = w.shape
    c_in = c_g * groups
    c_out_g = c_out // groups
    dense = np.zeros((k, c_in, c_out))
    for g in range(groups):
        rows = slice(g * c_g, (g + 1) * c_g)
        cols = slice(g * c_out_g, (g + 1) * c_out_g)
        dense[:, rows, cols] = w[:, :, cols]
    return dense
