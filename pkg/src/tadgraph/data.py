"""Dataset ingestion, rescaling, windowing, and synthetic data generation.

On-disk layout: a manifest (JSON list of video entries with paths relative
to the manifest), one binary feature file per video (``FSEQ`` header then
row-major float32), and an annotation JSON shaped like the ActivityNet
database schema so real extracted features can be dropped in unchanged.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError

FEATURE_MAGIC = b"FSEQ"
FEATURE_VERSION = 1


@dataclass
class FeatureSequence:
    """One video's snippet features plus timing metadata."""

    video_id: str
    features: np.ndarray        # (L_raw, C_raw) float64
    duration_seconds: float
    sampling_rate: float        # seconds covered by one snippet

    @property
    def length(self) -> int:
        return self.features.shape[0]

    @property
    def c_raw(self) -> int:
        return self.features.shape[1]


@dataclass
class AnnotationSet:
    """Per-video (start_seconds, end_seconds, label) segments."""

    by_video: dict[str, list[tuple[float, float, str]]] = field(default_factory=dict)
    durations: dict[str, float] = field(default_factory=dict)

    def segments(self, video_id: str) -> list[tuple[float, float, str]]:
        return self.by_video.get(video_id, [])

    def labels(self) -> list[str]:
        seen = sorted({label for segs in self.by_video.values() for _, _, label in segs})
        return seen


# ---------------------------------------------------------------------------
# binary feature files
# ---------------------------------------------------------------------------

def write_feature_file(path, features: np.ndarray) -> None:
    features = np.ascontiguousarray(features, dtype="<f4")
    if features.ndim != 2:
        raise DataError(f"feature matrix must be 2-D, got shape {features.shape}")
    length, channels = features.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<III", FEATURE_VERSION, channels, length))
        fh.write(features.tobytes())


def read_feature_file(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != FEATURE_MAGIC:
        raise FormatError(f"{path}: not a feature file (bad magic)")
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header")
    version, channels, length = struct.unpack_from("<III", raw, 4)
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported feature file version {version}")
    expected = 16 + 4 * channels * length
    if len(raw) != expected:
        raise FormatError(f"{path}: payload has {len(raw) - 16} bytes, header implies {expected - 16}")
    data = np.frombuffer(raw, dtype="<f4", offset=16).reshape(length, channels)
    return data.astype(np.float64)


# ---------------------------------------------------------------------------
# manifest + annotations
# ---------------------------------------------------------------------------

def load_annotations(path) -> AnnotationSet:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
        database = payload["database"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise FormatError(f"{path}: not an annotation database") from exc
    out = AnnotationSet()
    for video_id, entry in database.items():
        duration = float(entry["duration"])
        out.durations[video_id] = duration
        segments = []
        for ann in entry.get("annotations", []):
            start, end = (float(v) for v in ann["segment"])
            if not (0.0 <= start < end <= duration + 1e-9):
                raise DataError(
                    f"{path}: segment [{start}, {end}] outside video '{video_id}' "
                    f"of duration {duration}")
            segments.append((start, end, str(ann["label"])))
        out.by_video[video_id] = segments
    return out


def load_dataset(manifest_path, annotations_path=None) -> tuple[list[FeatureSequence], AnnotationSet]:
    """Read the manifest's feature files and, when given, the annotations."""
    manifest_path = Path(manifest_path)
    try:
        entries = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: invalid manifest JSON") from exc
    if not isinstance(entries, list):
        raise FormatError(f"{manifest_path}: manifest must be a JSON list")
    sequences = []
    for entry in entries:
        feature_path = manifest_path.parent / entry["feature_file"]
        if not feature_path.exists():
            raise FormatError(f"{manifest_path}: missing feature file {feature_path}")
        features = read_feature_file(feature_path)
        sequences.append(FeatureSequence(
            video_id=str(entry["video_id"]),
            features=features,
            duration_seconds=float(entry["duration_seconds"]),
            sampling_rate=float(entry["sampling_rate"]),
        ))
    annotations = load_annotations(annotations_path) if annotations_path else AnnotationSet()
    for seq in sequences:
        for start, end, _ in annotations.segments(seq.video_id):
            if end > seq.duration_seconds + 1e-9:
                raise DataError(
                    f"annotation [{start}, {end}] outside video '{seq.video_id}' "
                    f"of duration {seq.duration_seconds}")
    return sequences, annotations


# ---------------------------------------------------------------------------
# rescaling and windowing
# ---------------------------------------------------------------------------

def rescale_sequence(seq: FeatureSequence, target_length: int) -> FeatureSequence:
    """Linear interpolation along time to exactly ``target_length`` rows."""
    if seq.length == target_length:
        return seq
    src = np.arange(seq.length, dtype=np.float64)
    dst = np.linspace(0.0, seq.length - 1.0, target_length)
    out = np.empty((target_length, seq.c_raw))
    for c in range(seq.c_raw):
        out[:, c] = np.interp(dst, src, seq.features[:, c])
    return FeatureSequence(seq.video_id, out, seq.duration_seconds, seq.sampling_rate)


@dataclass
class Window:
    """One model input: a fixed-length crop plus coordinate metadata."""

    video_id: str
    features: np.ndarray           # (C_raw, L_win), zero padded past valid_length
    offset: int                    # window start in sequence index coordinates
    valid_length: int
    scale: float                   # seconds per index unit
    segments: list[tuple[float, float, str]] = field(default_factory=list)


def window_sequence(seq: FeatureSequence, window_length: int, stride: int,
                    training: bool,
                    segments_idx: list[tuple[float, float, str]] | None = None) -> list[Window]:
    """Crop a sequence into strided windows, zero-padding the final one.

    ``segments_idx`` holds annotations in sequence index coordinates; they
    are clipped into each window, and in training mode windows without any
    action are dropped.
    """
    if not (window_length > stride > 0):
        raise ConfigError(f"window_sequence: need window length {window_length} > stride {stride} > 0")
    segments_idx = segments_idx or []
    starts = []
    start = 0
    while True:
        starts.append(start)
        if start + window_length >= seq.length:
            break
        start += stride

    windows = []
    for start in starts:
        valid = min(window_length, seq.length - start)
        padded = np.zeros((seq.c_raw, window_length))
        padded[:, :valid] = seq.features[start:start + valid].T
        local = []
        for s, e, label in segments_idx:
            ls, le = max(s - start, 0.0), min(e - start, valid - 1.0)
            if le - ls >= 1.0:
                local.append((ls, le, label))
        if training and not local:
            continue
        windows.append(Window(video_id=seq.video_id, features=padded, offset=start,
                              valid_length=valid, scale=seq.sampling_rate, segments=local))
    return windows


def prepare_windows(sequences: list[FeatureSequence], annotations: AnnotationSet,
                    rescale_length: int = 100, window_length: int = 0,
                    stride: int = 0, training: bool = False) -> list[Window]:
    """Turn sequences into model windows.

    Default mode rescales every sequence to a fixed length (one window per
    video, index i maps to ``i / L * duration`` seconds). Setting
    ``window_length`` > 0 switches to strided cropping at the native
    sampling rate.
    """
    windows = []
    for seq in sequences:
        segs = annotations.segments(seq.video_id)
        if window_length > 0:
            idx_segs = [(s / seq.sampling_rate, e / seq.sampling_rate, label)
                        for s, e, label in segs]
            windows.extend(window_sequence(seq, window_length, stride, training, idx_segs))
        else:
            scaled = rescale_sequence(seq, rescale_length)
            scale = seq.duration_seconds / rescale_length
            local = [(s / scale, min(e / scale, rescale_length - 1.0), label)
                     for s, e, label in segs]
            if training and not local:
                continue
            windows.append(Window(video_id=seq.video_id, features=scaled.features.T,
                                  offset=0, valid_length=rescale_length, scale=scale,
                                  segments=local))
    return windows


# ---------------------------------------------------------------------------
# synthetic dataset
# ---------------------------------------------------------------------------

@dataclass
class SynthConfig:
    num_videos: int = 200
    length: int = 100
    c_raw: int = 32
    num_classes: int = 3
    actions_min: int = 1
    actions_max: int = 3
    duration_min: int = 6
    duration_max: int = 30
    noise: float = 0.5
    seconds_per_snippet: float = 1.0
    seed: int = 0


def synth_dataset(config: SynthConfig, out_dir) -> tuple[Path, Path]:
    """Write a manifest + feature files + annotations with planted actions.

    Background snippets are N(0, noise^2); each action adds a per-class
    signature vector over a segment whose endpoints stay inside the anchor
    range. Returns (manifest_path, annotations_path).
    """
    out_dir = Path(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    signatures = rng.normal(0.0, 1.0, size=(config.num_classes, config.c_raw))

    manifest = []
    database = {}
    spp = config.seconds_per_snippet
    for vi in range(config.num_videos):
        video_id = f"synth_{vi:04d}"
        feats = rng.normal(0.0, config.noise, size=(config.length, config.c_raw))
        count = int(rng.integers(config.actions_min, config.actions_max + 1))
        # cap durations so `count` actions plus margins always fit the video
        cap = max(config.duration_min,
                  min(config.duration_max, (config.length - 2) // count - 2))
        placed: list[tuple[int, int, int]] = []
        for _ in range(count):
            for attempt in range(200):
                duration = int(rng.integers(config.duration_min, cap + 1))
                if config.length - 1 - duration <= 1:
                    continue
                start = int(rng.integers(1, config.length - 1 - duration))
                end = start + duration
                if all(end + 2 <= s or e + 2 <= start for s, e, _ in placed):
                    placed.append((start, end, int(rng.integers(0, config.num_classes))))
                    break
            else:
                raise DataError(f"could not place non-overlapping action in '{video_id}'")
        annotations = []
        for start, end, cls in sorted(placed):
            feats[start:end + 1] += signatures[cls]
            annotations.append({"segment": [start * spp, end * spp],
                                "label": f"class_{cls:02d}"})
        feature_file = f"features/{video_id}.fseq"
        write_feature_file(out_dir / feature_file, feats)
        manifest.append({
            "video_id": video_id,
            "feature_file": feature_file,
            "duration_seconds": config.length * spp,
            "sampling_rate": spp,
        })
        database[video_id] = {
            "duration": config.length * spp,
            "subset": "training",
            "annotations": annotations,
        }

    manifest_path = out_dir / "manifest.json"
    annotations_path = out_dir / "annotations.json"
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    annotations_path.write_text(json.dumps({"database": database}, indent=1, sort_keys=True))
    return manifest_path, annotations_path
