"""From per-anchor scores to final detections.

Scores are fused geometrically, anchor coordinates are mapped into video
seconds, overlapping detections are suppressed by score decay (Soft-NMS)
per video across all of its windows, and the top-M survivors are kept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

OUTPUT_VERSION = "tadgraph-detections-1"


@dataclass
class Detection:
    start: float
    end: float
    label: str
    score: float


def fuse_scores(p_cls: np.ndarray, p_reg: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Geometric interpolation ``p_cls**alpha * p_reg**(1 - alpha)``."""
    p_cls = np.asarray(p_cls, dtype=np.float64)
    p_reg = np.asarray(p_reg, dtype=np.float64)
    return p_cls ** alpha * p_reg ** (1.0 - alpha)


def _iou_against(segments: np.ndarray, segment: np.ndarray) -> np.ndarray:
    inter = np.maximum(0.0, np.minimum(segments[:, 1], segment[1])
                       - np.maximum(segments[:, 0], segment[0]))
    union = np.maximum(segments[:, 1], segment[1]) - np.minimum(segments[:, 0], segment[0])
    return np.where(union > 0, inter / union, 0.0)


def soft_nms(segments: np.ndarray, scores: np.ndarray, method: str = "linear",
             threshold: float = 0.84, sigma: float = 0.4,
             top_m: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Score-decay suppression; returns (kept indices, decayed scores).

    Linear decay multiplies by ``1 - IoU`` when IoU with the already
    selected detection exceeds ``threshold``; Gaussian decay multiplies by
    ``exp(-IoU^2 / sigma)``. Because each selection takes the current
    maximum and scores only ever shrink, the first ``top_m`` selections
    are exactly the top-M detections by final decayed score, so the loop
    stops there. Output is ordered by decayed score, ties by earlier start.
    """
    segments = np.asarray(segments, dtype=np.float64).reshape(-1, 2)
    scores = np.asarray(scores, dtype=np.float64).copy()
    if method not in ("linear", "gaussian"):
        raise DataError(f"soft_nms: unknown method '{method}'")
    n = len(scores)
    keep: list[int] = []
    kept_scores: list[float] = []
    alive = np.ones(n, dtype=bool)
    while len(keep) < min(top_m, n) and alive.any():
        candidates = np.where(alive)[0]
        best = candidates[np.argmax(scores[candidates])]
        keep.append(int(best))
        kept_scores.append(float(scores[best]))
        alive[best] = False
        rest = np.where(alive)[0]
        if rest.size == 0:
            break
        ious = _iou_against(segments[rest], segments[best])
        if method == "linear":
            decay = np.where(ious > threshold, 1.0 - ious, 1.0)
        else:
            decay = np.exp(-(ious ** 2) / sigma)
        scores[rest] *= decay
    order = sorted(range(len(keep)),
                   key=lambda i: (-kept_scores[i], segments[keep[i], 0]))
    return (np.asarray([keep[i] for i in order], dtype=np.int64),
            np.asarray([kept_scores[i] for i in order]))


@dataclass
class WindowScores:
    """Inference output of one window, still in snippet coordinates."""

    video_id: str
    anchors: np.ndarray          # (J, 2) int snippet pairs
    p_cls: np.ndarray
    p_reg: np.ndarray
    offset: int
    scale: float                 # seconds per index unit
    valid_length: int


def finalize_detections(window_scores: list[WindowScores], alpha: float = 0.5,
                        method: str = "linear", threshold: float = 0.84,
                        sigma: float = 0.4, top_m: int = 100,
                        label: str = "action") -> dict[str, list[Detection]]:
    """Map anchors to seconds, merge windows per video, suppress, keep top-M.

    Anchors that overlap only zero padding are dropped. The class label is
    a passthrough (classification happens outside this model).
    """
    per_video: dict[str, list[np.ndarray]] = {}
    for ws in window_scores:
        if ws.scale <= 0:
            raise DataError(f"window of '{ws.video_id}' has non-positive scale")
        inside = ws.anchors[:, 0] < ws.valid_length
        starts = (ws.anchors[inside, 0] + ws.offset) * ws.scale
        ends = (np.minimum(ws.anchors[inside, 1], ws.valid_length - 1) + ws.offset) * ws.scale
        fused = fuse_scores(ws.p_cls[inside], ws.p_reg[inside], alpha)
        rows = np.column_stack([starts, ends, fused])
        per_video.setdefault(ws.video_id, []).append(rows[rows[:, 1] > rows[:, 0]])

    results: dict[str, list[Detection]] = {}
    for video_id in sorted(per_video):
        rows = np.concatenate(per_video[video_id], axis=0)
        kept, decayed = soft_nms(rows[:, :2], rows[:, 2], method=method,
                                 threshold=threshold, sigma=sigma, top_m=top_m)
        results[video_id] = [
            Detection(start=float(rows[i, 0]), end=float(rows[i, 1]),
                      label=label, score=float(s))
            for i, s in zip(kept, decayed)]
    return results


def write_detections(path, detections: dict[str, list[Detection]]) -> None:
    payload = {
        "version": OUTPUT_VERSION,
        "results": {
            video_id: [{"segment": [d.start, d.end], "score": d.score, "label": d.label}
                       for d in dets]
            for video_id, dets in detections.items()
        },
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def read_detections(path) -> dict[str, list[Detection]]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
        results = payload["results"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"{path}: not a detection file") from exc
    out = {}
    for video_id, items in results.items():
        out[video_id] = [Detection(start=float(i["segment"][0]), end=float(i["segment"][1]),
                                   label=str(i.get("label", "action")),
                                   score=float(i["score"])) for i in items]
    return out
