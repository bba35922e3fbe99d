"""Checkpoint-driven scoring of datasets (no gradient recording)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data import Window
from .errors import DataError
from .model import Detector
from .postprocess import WindowScores


def score_windows(model: Detector, windows: list[Window]) -> list[WindowScores]:
    """Score every anchor of every window; node branch is not evaluated."""
    out = []
    with ad.no_grad():
        for window in windows:
            _, final, graph = model.forward_features(window.features)
            scores = model.forward_scores(final, graph.semantic_layers[-1])
            out.append(WindowScores(
                video_id=window.video_id,
                anchors=model.anchors,
                p_cls=scores.data[:, 0].copy(),
                p_reg=scores.data[:, 1].copy(),
                offset=window.offset,
                scale=window.scale,
                valid_length=window.valid_length,
            ))
    return out


RAW_VERSION = "tadgraph-raw-scores-1"


def write_raw_scores(path, window_scores: list[WindowScores]) -> None:
    """Per-anchor scores before fusion/suppression, for score-fusion sweeps."""
    payload = {
        "version": RAW_VERSION,
        "windows": [{
            "video_id": ws.video_id,
            "offset": ws.offset,
            "scale": ws.scale,
            "valid_length": ws.valid_length,
            "anchors": ws.anchors.tolist(),
            "p_cls": np.round(ws.p_cls, 6).tolist(),
            "p_reg": np.round(ws.p_reg, 6).tolist(),
        } for ws in window_scores],
    }
    Path(path).write_text(json.dumps(payload))


def read_raw_scores(path) -> list[WindowScores]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
        if payload.get("version") != RAW_VERSION:
            raise KeyError("version")
        windows = payload["windows"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"{path}: not a raw score file") from exc
    return [WindowScores(
        video_id=str(w["video_id"]),
        anchors=np.asarray(w["anchors"], dtype=np.int64),
        p_cls=np.asarray(w["p_cls"], dtype=np.float64),
        p_reg=np.asarray(w["p_reg"], dtype=np.float64),
        offset=int(w["offset"]),
        scale=float(w["scale"]),
        valid_length=int(w["valid_length"]),
    ) for w in windows]
