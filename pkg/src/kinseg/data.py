"""Dataset manifests, file readers, fold handling, and the synthetic
kinematic-procedure generator.

File formats
------------
* sequence CSV: UTF-8, header row with channel names, one row per frame,
  ``%.17g`` floats (lossless float64 round trip).
* label file: lines ``start end name`` with 0-based inclusive frame spans;
  frames outside every span get the background class (id 0).
* robotic kinematics: whitespace-delimited 76-column rows plus a
  transcription file ``start end gesture`` with 1-based inclusive frames
  (the convention of the published robotic benchmark).
* manifest: JSON listing layout, class names, rate and sequence entries
  (path, labels, participant, fold).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import geometry
from .preprocess import jigsaws_extract
from .sequence import SensorSequence, get_layout

BACKGROUND_CLASS = 0


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass
class SequenceEntry:
    path: str
    labels: str
    participant: str
    fold: int = 0


@dataclass
class DatasetManifest:
    name: str
    layout: str
    class_names: list[str]
    rate_hz: float
    sequences: list[SequenceEntry] = field(default_factory=list)

    def save(self, path) -> None:
        doc = {"name": self.name, "layout": self.layout,
               "classes": self.class_names, "rate_hz": self.rate_hz,
               "sequences": [asdict(e) for e in self.sequences]}
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        doc = json.loads(Path(path).read_text())
        return cls(name=doc["name"], layout=doc["layout"],
                   class_names=list(doc["classes"]), rate_hz=doc["rate_hz"],
                   sequences=[SequenceEntry(**e) for e in doc["sequences"]])

    def participants(self) -> list[str]:
        return sorted({e.participant for e in self.sequences})


# ---------------------------------------------------------------------------
# Readers / writers
# ---------------------------------------------------------------------------

def parse_label_file(path, class_names: list[str], n_frames: int,
                     one_based: bool = False) -> np.ndarray:
    """Span file -> per-frame labels; gaps become the background class."""
    name_to_id = {n: i for i, n in enumerate(class_names)}
    labels = np.full(n_frames, BACKGROUND_CLASS, dtype=np.int64)
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'start end name'")
        try:
            start, end = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: bad frame numbers") from exc
        if parts[2] not in name_to_id:
            raise ValueError(f"{path}:{lineno}: unknown label {parts[2]!r}")
        if one_based:
            start, end = start - 1, end - 1
        if not (0 <= start <= end < n_frames):
            raise ValueError(
                f"{path}:{lineno}: span [{start}, {end}] outside [0, {n_frames})")
        labels[start:end + 1] = name_to_id[parts[2]]
    return labels


def labels_to_spans(labels: np.ndarray, class_names: list[str],
                    skip_background: bool = False) -> list[str]:
    from .metrics import run_length
    lines = []
    for seg in run_length(labels):
        if skip_background and seg.label == BACKGROUND_CLASS:
            continue
        lines.append(f"{seg.start} {seg.end} {class_names[seg.label]}")
    return lines


def write_sequence(path, labels_path, seq: SensorSequence,
                   class_names: list[str]) -> None:
    lay = seq.layout_info
    header = ",".join(lay.channel_names())
    np.savetxt(path, seq.channels, fmt="%.17g", delimiter=",",
               header=header, comments="")
    Path(labels_path).write_text(
        "\n".join(labels_to_spans(seq.labels, class_names)) + "\n")


def load_sequence(path, layout: str, class_names: list[str], rate_hz: float,
                  labels_path=None, name: str = "",
                  participant: str = "") -> SensorSequence:
    """Read one CSV sequence (or whitespace 76-column robotic kinematics)."""
    path = Path(path)
    lay = get_layout(layout)
    text = path.read_text().splitlines()
    if not text:
        raise ValueError(f"{path}: empty file")
    first = text[0]
    if "," in first and not _is_number(first.split(",")[0]):
        rows, start = text[1:], 2
        delim = ","
    else:
        rows, start = text, 1
        delim = None
    data = np.empty((len(rows), 0))
    parsed = []
    width = None
    for lineno, line in enumerate(rows, start=start):
        line = line.strip()
        if not line:
            continue
        vals = line.split(delim) if delim else line.split()
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise ValueError(f"{path}:{lineno}: expected {width} columns, "
                             f"got {len(vals)}")
        try:
            parsed.append([float(v) for v in vals])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: malformed number") from exc
    data = np.asarray(parsed, dtype=np.float64)
    if layout == "robotic_2psm" and data.shape[1] == 76:
        labels = None
        if labels_path is not None:
            labels = parse_label_file(labels_path, class_names, len(data),
                                      one_based=True)
        seq = jigsaws_extract(data, labels=labels, rate_hz=rate_hz, name=name)
        seq.participant = participant
        return seq
    if data.shape[1] != lay.n_channels:
        raise ValueError(f"{path}: layout {layout!r} expects {lay.n_channels} "
                         f"channels, got {data.shape[1]}")
    if labels_path is not None:
        labels = parse_label_file(labels_path, class_names, len(data))
    else:
        labels = np.zeros(len(data), dtype=np.int64)
    return SensorSequence(channels=data, labels=labels, rate_hz=rate_hz,
                          layout=layout, name=name, participant=participant)


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def load_dataset(manifest: DatasetManifest, root=None) -> list[SensorSequence]:
    root = Path(root) if root is not None else Path(".")
    out = []
    for entry in manifest.sequences:
        seq = load_sequence(root / entry.path, manifest.layout,
                            manifest.class_names, manifest.rate_hz,
                            labels_path=root / entry.labels,
                            name=Path(entry.path).stem,
                            participant=entry.participant)
        seq.validate()
        out.append(seq)
    return out


def write_dataset(out_dir, seqs: list[SensorSequence], class_names: list[str],
                  name: str, n_folds: int = 5) -> Path:
    """Write sequences + manifest; folds assigned per participant round-robin."""
    out_dir = Path(out_dir)
    (out_dir / "sequences").mkdir(parents=True, exist_ok=True)
    participants = sorted({s.participant or s.name for s in seqs})
    fold_of = {p: i % n_folds for i, p in enumerate(participants)}
    manifest = DatasetManifest(name=name, layout=seqs[0].layout,
                               class_names=class_names, rate_hz=seqs[0].rate_hz)
    for i, seq in enumerate(seqs):
        stem = seq.name or f"seq_{i:03d}"
        rel = f"sequences/{stem}.csv"
        rel_lab = f"sequences/{stem}_labels.txt"
        write_sequence(out_dir / rel, out_dir / rel_lab, seq, class_names)
        pid = seq.participant or stem
        manifest.sequences.append(SequenceEntry(
            path=rel, labels=rel_lab, participant=pid, fold=fold_of[pid]))
    path = out_dir / "manifest.json"
    manifest.save(path)
    return path


# ---------------------------------------------------------------------------
# Folds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Split:
    train: frozenset
    val: frozenset
    test: frozenset


def make_folds(manifest: DatasetManifest, strategy: str) -> list[Split]:
    """Participant-level cross-validation splits.

    ``participant_kfold(n)``: test = fold i, validation = fold (i+1) mod n,
    train = the rest.  ``leave_one_user_out``: one split per participant
    with an empty validation set.
    """
    part_folds: dict[str, int] = {}
    for e in manifest.sequences:
        if e.participant in part_folds and part_folds[e.participant] != e.fold:
            raise ValueError(f"participant {e.participant!r} assigned to "
                             f"multiple folds")
        part_folds[e.participant] = e.fold
    participants = sorted(part_folds)
    if strategy == "leave_one_user_out":
        return [Split(train=frozenset(p for p in participants if p != u),
                      val=frozenset(), test=frozenset({u}))
                for u in participants]
    if strategy.startswith("participant_kfold"):
        n = int(strategy.partition("(")[2].rstrip(")")) if "(" in strategy else 5
        splits = []
        for i in range(n):
            test = frozenset(p for p, f in part_folds.items() if f == i)
            val = frozenset(p for p, f in part_folds.items() if f == (i + 1) % n)
            train = frozenset(participants) - test - val
            splits.append(Split(train=train, val=val, test=test))
        return splits
    raise ValueError(f"unknown fold strategy {strategy!r}")


def split_sequences(seqs: list[SensorSequence], split: Split):
    train = [s for s in seqs if s.participant in split.train]
    val = [s for s in seqs if s.participant in split.val]
    test = [s for s in seqs if s.participant in split.test]
    return train, val, test


# ---------------------------------------------------------------------------
# Synthetic procedures
# ---------------------------------------------------------------------------

@dataclass
class ClassMotion:
    """Motion signature of one action class (dominant hand)."""
    freq_hz: float
    amp_mm: float
    axis: int  # 0=x, 1=y, 2=z
    euler_axis: int
    euler_amp_deg: float
    angular_rate_hz: float
    mean_duration: float  # frames at 30 Hz
    std_duration: float
    plane_angle_deg: float | None = None  # when set: oscillate along this
    # direction in the xy plane instead of a coordinate axis


DEFAULT_CLASSES = [
    ClassMotion(freq_hz=1.2, amp_mm=6.0, axis=2, euler_axis=2,
                euler_amp_deg=4.0, angular_rate_hz=1.2,
                mean_duration=75.0, std_duration=20.0),  # background: low energy
    ClassMotion(freq_hz=1.2, amp_mm=22.0, axis=0, euler_axis=0,
                euler_amp_deg=18.0, angular_rate_hz=1.2,
                mean_duration=90.0, std_duration=25.0),
    ClassMotion(freq_hz=1.2, amp_mm=22.0, axis=1, euler_axis=1,
                euler_amp_deg=18.0, angular_rate_hz=1.2,
                mean_duration=105.0, std_duration=25.0),
]

DEFAULT_CLASS_NAMES = ["background", "gesture_a", "gesture_b"]

# local sensor placements around the hand centre, mm, and how strongly each
# sensor follows the hand's signature motion (index, thumb, wrist)
_SENSOR_OFFSETS = np.array([[18.0, 8.0, 4.0],
                            [14.0, -9.0, -2.0],
                            [-28.0, 0.0, 6.0]])
_SENSOR_GAIN = np.array([1.0, 0.85, 0.35])


@dataclass
class SynthSpec:
    num_classes: int = 3
    layout: str = "open_surgery_6sensor"
    classes: list[ClassMotion] = field(default_factory=lambda: list(DEFAULT_CLASSES))
    class_names: list[str] = field(default_factory=lambda: list(DEFAULT_CLASS_NAMES))
    num_sequences: int = 10
    frames_min: int = 500
    frames_max: int = 700
    rate_hz: float = 30.0
    hand_gap_mm: float = 160.0
    drift_mm: float = 9.0
    noise_pos_mm: float = 1.5
    noise_euler_deg: float = 0.8
    min_segment: int = 20
    seed: int = 0
    mirrored: bool = False  # emit left-handed (mirrored + hand-swapped) data

    def __post_init__(self):
        if len(self.classes) != self.num_classes:
            raise ValueError("one ClassMotion per class required")
        for c in self.classes:
            if c.mean_duration <= 0:
                raise ValueError("durations must be positive")
            if c.freq_hz >= 15.0 or c.angular_rate_hz >= 15.0:
                raise ValueError("signature frequencies must stay below the "
                                 "15 Hz preprocessing stop band")


def _segment_timeline(spec: SynthSpec, rng, n_frames: int) -> np.ndarray:
    labels = np.empty(n_frames, dtype=np.int64)
    t = 0
    current = int(rng.integers(spec.num_classes))
    while t < n_frames:
        motion = spec.classes[current]
        dur = int(round(rng.normal(motion.mean_duration, motion.std_duration)))
        dur = max(spec.min_segment, dur)
        labels[t:t + dur] = current
        t += dur
        if spec.num_classes > 1:
            step = int(rng.integers(spec.num_classes - 1))
            current = (current + 1 + step) % spec.num_classes  # no self loop
    return labels


def _smooth_walk(rng, n_frames: int, scale: float, window: int = 31) -> np.ndarray:
    steps = rng.normal(size=(n_frames + window, 3))
    walk = np.cumsum(steps, axis=0)
    kernel = np.ones(window) / window
    sm = np.stack([np.convolve(walk[:, i], kernel, mode="same")
                   for i in range(3)], axis=1)[window // 2:window // 2 + n_frames]
    sm -= sm.mean(axis=0)
    rms = np.sqrt((sm ** 2).mean()) or 1.0
    return sm * (scale / rms)


def _signature(spec: SynthSpec, rng, labels: np.ndarray):
    """Per-frame signature displacement (mm) and orientation offset (deg) of
    the dominant hand; phase restarts per segment."""
    from .metrics import run_length
    n = len(labels)
    pos = np.zeros((n, 3))
    eul = np.zeros((n, 3))
    for seg in run_length(labels):
        motion = spec.classes[seg.label]
        t = np.arange(seg.length) / spec.rate_hz
        phase = rng.uniform(0, 2 * math.pi)
        wave = motion.amp_mm * np.sin(2 * math.pi * motion.freq_hz * t + phase)
        if motion.plane_angle_deg is None:
            pos[seg.start:seg.end + 1, motion.axis] = wave
        else:
            a = math.radians(motion.plane_angle_deg)
            pos[seg.start:seg.end + 1, 0] = wave * math.cos(a)
            pos[seg.start:seg.end + 1, 1] = wave * math.sin(a)
        ewave = motion.euler_amp_deg * np.sin(
            2 * math.pi * motion.angular_rate_hz * t + phase)
        eul[seg.start:seg.end + 1, motion.euler_axis] = ewave
    return pos, eul


def _generate_one(spec: SynthSpec, rng, index: int) -> SensorSequence:
    lay = get_layout(spec.layout)
    n_frames = int(rng.integers(spec.frames_min, spec.frames_max + 1))
    labels = _segment_timeline(spec, rng, n_frames)
    sig_pos, sig_eul = _signature(spec, rng, labels)

    half = spec.hand_gap_mm / 2.0
    centers = {"left": np.array([0.0, half, 55.0]),
               "right": np.array([0.0, -half, 45.0])}
    channels = np.zeros((n_frames, lay.n_channels))
    for hand, sensors in (("left", lay.left), ("right", lay.right)):
        drift = _smooth_walk(rng, n_frames, spec.drift_mm)
        base_eul = rng.uniform(-25.0, 25.0, size=3)
        idle = 3.0 * np.sin(2 * math.pi * 0.6 * np.arange(n_frames)
                            / spec.rate_hz + rng.uniform(0, 2 * math.pi))
        for slot, s in enumerate(sensors):
            gain = _SENSOR_GAIN[slot % len(_SENSOR_GAIN)]
            offset = _SENSOR_OFFSETS[slot % len(_SENSOR_OFFSETS)]
            pos = centers[hand] + offset + drift
            eul = np.tile(base_eul, (n_frames, 1))
            if hand == "right":  # dominant hand carries the class signature
                pos = pos + gain * sig_pos
                eul = eul + gain * sig_eul
            else:
                pos = pos.copy()
                pos[:, 0] += idle
            pos = pos + rng.normal(scale=spec.noise_pos_mm,
                                   size=(n_frames, 3))
            eul = eul + rng.normal(scale=spec.noise_euler_deg,
                                   size=(n_frames, 3))
            channels[:, lay.position_cols(s)] = pos
            channels[:, lay.euler_cols(s)] = eul
    seq = SensorSequence(channels=channels, labels=labels,
                         rate_hz=spec.rate_hz, layout=spec.layout,
                         name=f"synth_{index:03d}",
                         participant=f"p{index:02d}")
    if spec.mirrored:
        mirrored = geometry.hand_inversion(
            seq, line=geometry.ReflectionLine(m=0.0, b=0.0))
        mirrored.name, mirrored.participant = seq.name, seq.participant
        return mirrored
    return seq


def synth_generate(spec: SynthSpec) -> list[SensorSequence]:
    """Deterministic synthetic dataset: a Markov chain over classes drives
    per-segment sinusoid signatures on the dominant hand, plus smooth drift
    and white noise; labels match the generating segments exactly."""
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.num_sequences)
    return [_generate_one(spec, np.random.default_rng(s), i)
            for i, s in enumerate(seeds)]
