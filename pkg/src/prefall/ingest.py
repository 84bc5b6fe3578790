"""Keypoint and manifest readers, and the seven-joint projection used by the features.

Keypoint CSV layout (one row per frame and joint, joints 0-indexed)::

    frame,joint,x,y,conf
    0,0,312.5,101.25,0.98
    0,1,313.0,160.0,

``conf`` may be empty, which means "no confidence reported" and is treated as
1.0.  An optional first line ``# prefall-keypoints <version>`` pins the format
version; files without it are read as version 1.

Manifest CSV layout::

    file,subject,activity,trial,label,fps,impact_frame

``file`` is resolved relative to the manifest's directory, ``label`` is
``fall``/``nonfall`` (or empty, in which case the activity mapping decides),
``fps`` defaults to 18 when empty, and ``impact_frame`` must be given exactly
for fall entries.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    AnnotationError,
    ConfigError,
    FormatVersionError,
    MappingError,
    ParseError,
    StructureError,
)

logger = logging.getLogger(__name__)

KEYPOINT_HEADER = ("frame", "joint", "x", "y", "conf")
MANIFEST_HEADER = ("file", "subject", "activity", "trial", "label", "fps", "impact_frame")
KEYPOINT_FORMAT_VERSION = 1
MANIFEST_FORMAT_VERSION = 1
DEFAULT_FPS = 18.0

SEVEN_JOINT_ORDER = (
    "head",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
)


class Label(enum.Enum):
    """Binary class.  The value is the class index used by the network."""

    NONFALL = 0
    FALL = 1

    @property
    def text(self) -> str:
        return "fall" if self is Label.FALL else "nonfall"

    @classmethod
    def parse(cls, text: str) -> "Label":
        t = text.strip().lower().replace("-", "").replace("_", "")
        if t == "fall":
            return cls.FALL
        if t == "nonfall":
            return cls.NONFALL
        raise ValueError(f"unknown label {text!r} (expected 'fall' or 'nonfall')")


# --------------------------------------------------------------------------
# Versioned text files
# --------------------------------------------------------------------------


def read_version_line(first_line: str, kind: str, supported: int, path=None) -> int | None:
    """Parse ``# prefall-<kind> <n>``; return the version, or None if the line is not one."""
    s = first_line.strip()
    if not s.startswith("#"):
        return None
    parts = s.lstrip("#").split()
    if len(parts) != 2 or parts[0] != f"prefall-{kind}":
        return None
    try:
        version = int(parts[1])
    except ValueError:
        raise ParseError(f"bad format version {parts[1]!r}", path, 1) from None
    if version > supported:
        raise FormatVersionError(
            f"{path}: {kind} format version {version} is newer than supported ({supported})"
        )
    return version


def _open_versioned(path: Path, kind: str, supported: int) -> tuple[list[str], int]:
    """Return (lines, line-number offset) with any version line stripped."""
    lines = path.read_text(encoding="utf-8").splitlines()
    if lines and read_version_line(lines[0], kind, supported, path) is not None:
        return lines[1:], 1
    return lines, 0


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    confidence: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("keypoint coordinates must be finite")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def effective_confidence(self) -> float:
        return 1.0 if self.confidence is None else self.confidence


@dataclass(frozen=True)
class SkeletonFrame:
    frame_index: int
    keypoints: tuple[Keypoint, ...]


@dataclass(frozen=True, eq=False)
class SkeletonSequence:
    """One recorded action.

    Coordinates are stored as arrays for speed: ``frame_index`` is ``(F,)``,
    ``xy`` is ``(F, J, 2)`` and ``conf`` is ``(F, J)`` with NaN where the file
    gave no confidence.  All three are read-only.
    """

    sequence_id: str
    frame_index: np.ndarray
    xy: np.ndarray
    conf: np.ndarray
    label: Label = Label.NONFALL
    impact_frame: int | None = None
    fps: float = DEFAULT_FPS
    subject_id: str = ""
    activity_id: str = ""
    trial_id: str = ""

    def __post_init__(self):
        fi = np.array(self.frame_index, dtype=np.int64)
        xy = np.array(self.xy, dtype=np.float64)
        conf = np.array(self.conf, dtype=np.float64)
        if fi.ndim != 1 or fi.size == 0:
            raise StructureError(f"{self.sequence_id}: sequence has no frames")
        if xy.shape != (fi.size, xy.shape[1], 2) or conf.shape != xy.shape[:2]:
            raise StructureError(f"{self.sequence_id}: inconsistent keypoint array shapes")
        if fi[0] < 0 or np.any(np.diff(fi) <= 0):
            raise StructureError(f"{self.sequence_id}: frame indices must be >= 0 and strictly increasing")
        if not np.all(np.isfinite(xy)):
            raise StructureError(f"{self.sequence_id}: non-finite keypoint coordinates")
        c = conf[~np.isnan(conf)]
        if np.any((c < 0) | (c > 1)):
            raise StructureError(f"{self.sequence_id}: confidence outside [0, 1]")
        if not self.fps > 0:
            raise StructureError(f"{self.sequence_id}: fps must be positive")
        _check_impact(self.sequence_id, self.label, self.impact_frame, int(fi[-1]))
        for name, arr in (("frame_index", fi), ("xy", xy), ("conf", conf)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_frames(self) -> int:
        return int(self.frame_index.size)

    @property
    def n_joints(self) -> int:
        return int(self.xy.shape[1])

    def frame(self, i: int) -> SkeletonFrame:
        """The ``i``-th stored frame (by position, not frame index)."""
        kps = tuple(
            Keypoint(float(x), float(y), None if np.isnan(c) else float(c))
            for (x, y), c in zip(self.xy[i], self.conf[i])
        )
        return SkeletonFrame(int(self.frame_index[i]), kps)

    @property
    def frames(self) -> list[SkeletonFrame]:
        return [self.frame(i) for i in range(self.n_frames)]

    def __eq__(self, other):
        if not isinstance(other, SkeletonSequence):
            return NotImplemented
        meta = ("sequence_id", "label", "impact_frame", "fps", "subject_id", "activity_id", "trial_id")
        return (
            all(getattr(self, k) == getattr(other, k) for k in meta)
            and np.array_equal(self.frame_index, other.frame_index)
            and np.array_equal(self.xy, other.xy)
            and np.array_equal(self.conf, other.conf, equal_nan=True)
        )

    __hash__ = None


def _check_impact(seq_id: str, label: Label, impact: int | None, last_frame: int | None) -> None:
    if label is Label.FALL and impact is None:
        raise AnnotationError(f"{seq_id}: fall sequence has no impact_frame")
    if label is Label.NONFALL and impact is not None:
        raise AnnotationError(f"{seq_id}: non-fall sequence must not carry an impact_frame")
    if impact is not None and last_frame is not None and not 0 <= impact <= last_frame:
        raise AnnotationError(f"{seq_id}: impact_frame {impact} outside [0, {last_frame}]")


# --------------------------------------------------------------------------
# Joint mapping
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class JointMap:
    """Indices of the seven joints the features need, inside a full skeleton."""

    head: int
    left_hip: int
    right_hip: int
    left_knee: int
    right_knee: int
    left_ankle: int
    right_ankle: int

    def __post_init__(self):
        idx = self.indices
        if any(i < 0 for i in idx):
            raise ConfigError(f"joint map has negative index: {idx}")
        if len(set(idx)) != 7:
            raise ConfigError(f"joint map indices must be distinct: {idx}")

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(getattr(self, name) for name in SEVEN_JOINT_ORDER)

    def check(self, n_joints: int) -> None:
        bad = [i for i in self.indices if i >= n_joints]
        if bad:
            raise ConfigError(f"joint map index {bad[0]} out of range for a {n_joints}-joint skeleton")

    @classmethod
    def preset(cls, name: str) -> "JointMap":
        try:
            return JOINT_MAP_PRESETS[name.lower()]
        except KeyError:
            raise ConfigError(f"unknown joint map preset {name!r}; known: {sorted(JOINT_MAP_PRESETS)}") from None

    @classmethod
    def for_skeleton(cls, n_joints: int) -> "JointMap":
        """Default map by skeleton size: BODY_25 (25), COCO (17) or identity (7)."""
        by_size = {25: "body25", 17: "coco17", 7: "identity"}
        if n_joints not in by_size:
            raise ConfigError(f"no default joint map for a {n_joints}-joint skeleton; pass one explicitly")
        return cls.preset(by_size[n_joints])

    @classmethod
    def load(cls, spec: str | Path) -> "JointMap":
        """Preset name, or a key-value file with one ``name = index`` per joint."""
        if str(spec).lower() in JOINT_MAP_PRESETS:
            return cls.preset(str(spec))
        kv = read_key_values(Path(spec))
        missing = [n for n in SEVEN_JOINT_ORDER if n not in kv]
        if missing:
            raise ConfigError(f"{spec}: joint map missing {missing}")
        try:
            return cls(**{n: int(kv[n]) for n in SEVEN_JOINT_ORDER})
        except ValueError as exc:
            raise ConfigError(f"{spec}: {exc}") from None

    def to_text(self) -> str:
        return "".join(f"{n} = {getattr(self, n)}\n" for n in SEVEN_JOINT_ORDER)


# BODY_25 puts the nose at 0; no top-of-head keypoint exists in either layout.
JOINT_MAP_PRESETS = {
    "body25": JointMap(head=0, left_hip=12, right_hip=9, left_knee=13, right_knee=10, left_ankle=14, right_ankle=11),
    "coco17": JointMap(head=0, left_hip=11, right_hip=12, left_knee=13, right_knee=14, left_ankle=15, right_ankle=16),
    "identity": JointMap(0, 1, 2, 3, 4, 5, 6),
}


@dataclass(frozen=True)
class SevenJointFrame:
    """Head plus six lower-limb keypoints in ``SEVEN_JOINT_ORDER``."""

    keypoints: tuple[Keypoint, ...]
    validity: tuple[bool, ...]

    def __post_init__(self):
        if len(self.keypoints) != 7 or len(self.validity) != 7:
            raise StructureError("a seven-joint frame needs exactly 7 keypoints")

    @property
    def head(self) -> Keypoint:
        return self.keypoints[0]


def map_joints(frame: SkeletonFrame, jm: JointMap, conf_threshold: float = 0.0) -> SevenJointFrame:
    jm.check(len(frame.keypoints))
    kps = tuple(frame.keypoints[i] for i in jm.indices)
    return SevenJointFrame(kps, tuple(k.effective_confidence >= conf_threshold for k in kps))


def seven_joint_arrays(
    seq: SkeletonSequence, jm: JointMap, conf_threshold: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``map_joints`` over a sequence: ``(F, 7, 2)`` coordinates, ``(F, 7)`` validity."""
    jm.check(seq.n_joints)
    idx = list(jm.indices)
    conf = np.where(np.isnan(seq.conf[:, idx]), 1.0, seq.conf[:, idx])
    return seq.xy[:, idx, :], conf >= conf_threshold


# --------------------------------------------------------------------------
# Activity mapping and manifest
# --------------------------------------------------------------------------


def read_key_values(path: Path | str) -> dict[str, str]:
    """``key = value`` (or ``key: value``) lines; ``#`` starts a comment."""
    path = Path(path)
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, value = line.split(sep, 1)
                break
        else:
            raise ParseError(f"expected 'key = value', got {raw!r}", path, lineno)
        out[key.strip()] = value.strip()
    return out


def load_activity_map(path: Path | str | None = None) -> dict[str, Label]:
    """Activity id -> label.  ``None`` loads the bundled UP-Fall mapping (5 fall, 6 non-fall)."""
    if path is None:
        ref = resources.files("prefall") / "data" / "activities_upfall.txt"
        with resources.as_file(ref) as p:
            kv = read_key_values(p)
        path = p
    else:
        kv = read_key_values(path)
    out = {}
    for key, value in kv.items():
        try:
            out[key] = Label.parse(value)
        except ValueError as exc:
            raise ParseError(str(exc), path) from None
    return out


@dataclass(frozen=True)
class ManifestEntry:
    file: Path
    subject_id: str
    activity_id: str
    trial_id: str
    label: Label
    fps: float = DEFAULT_FPS
    impact_frame: int | None = None
    sequence_id: str = field(default="")

    def __post_init__(self):
        if not self.sequence_id:
            object.__setattr__(self, "sequence_id", Path(self.file).stem)
        _check_impact(self.sequence_id, self.label, self.impact_frame, None)


def load_manifest(path: Path | str, activity_map: Mapping[str, Label] | None = None) -> list[ManifestEntry]:
    path = Path(path)
    if activity_map is None:
        activity_map = load_activity_map()
    lines, offset = _open_versioned(path, "manifest", MANIFEST_FORMAT_VERSION)
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != MANIFEST_HEADER:
        raise ParseError(f"manifest header must be {','.join(MANIFEST_HEADER)}", path, 1 + offset)
    entries = []
    base = path.parent
    for lineno, row in enumerate(reader, 2 + offset):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(MANIFEST_HEADER):
            raise ParseError(f"expected {len(MANIFEST_HEADER)} fields, got {len(row)}", path, lineno)
        file, subject, activity, trial, label_text, fps_text, impact_text = (c.strip() for c in row)
        if activity not in activity_map:
            raise MappingError(f"{path}:{lineno}: activity id {activity!r} not in the activity mapping")
        label = activity_map[activity]
        if label_text:
            try:
                stated = Label.parse(label_text)
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
            if stated is not label:
                raise MappingError(
                    f"{path}:{lineno}: label {label_text!r} disagrees with activity {activity!r} ({label.text})"
                )
        try:
            fps = float(fps_text) if fps_text else DEFAULT_FPS
            impact = int(impact_text) if impact_text else None
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
        if not (math.isfinite(fps) and fps > 0):
            raise ParseError(f"fps must be positive, got {fps_text!r}", path, lineno)
        if label is Label.FALL and impact is None:
            raise AnnotationError(f"{path}:{lineno}: fall entry {file!r} has no impact_frame")
        if label is Label.NONFALL and impact is not None:
            raise AnnotationError(f"{path}:{lineno}: non-fall entry {file!r} has an impact_frame")
        entries.append(
            ManifestEntry(
                file=base / file,
                subject_id=subject,
                activity_id=activity,
                trial_id=trial,
                label=label,
                fps=fps,
                impact_frame=impact,
                sequence_id=Path(file).stem,
            )
        )
    return entries


def write_manifest(path: Path | str, entries: Iterable[ManifestEntry]) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# prefall-manifest {MANIFEST_FORMAT_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for e in entries:
            rel = Path(e.file)
            try:
                rel = rel.resolve().relative_to(path.parent.resolve())
            except ValueError:
                pass
            w.writerow(
                [
                    rel.as_posix(),
                    e.subject_id,
                    e.activity_id,
                    e.trial_id,
                    e.label.text,
                    repr(float(e.fps)),
                    "" if e.impact_frame is None else e.impact_frame,
                ]
            )


# --------------------------------------------------------------------------
# Keypoint files
# --------------------------------------------------------------------------


def _float_field(text: str, name: str, path, lineno: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"{name} is not a number: {text!r}", path, lineno) from None
    if not math.isfinite(v):
        raise ParseError(f"{name} is not finite: {text!r}", path, lineno)
    return v


def _int_field(text: str, name: str, path, lineno: int) -> int:
    try:
        v = int(text)
    except ValueError:
        raise ParseError(f"{name} is not an integer: {text!r}", path, lineno) from None
    if v < 0:
        raise ParseError(f"{name} must be >= 0, got {v}", path, lineno)
    return v


def _iter_keypoint_rows(path: Path) -> Iterator[tuple[int, int, int, float, float, float]]:
    lines, offset = _open_versioned(path, "keypoints", KEYPOINT_FORMAT_VERSION)
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != KEYPOINT_HEADER:
        raise ParseError(f"keypoint header must be {','.join(KEYPOINT_HEADER)}", path, 1 + offset)
    for lineno, row in enumerate(reader, 2 + offset):
        if not row:
            continue
        if len(row) != 5:
            raise ParseError(f"expected 5 fields, got {len(row)}", path, lineno)
        frame = _int_field(row[0], "frame", path, lineno)
        joint = _int_field(row[1], "joint", path, lineno)
        x = _float_field(row[2], "x", path, lineno)
        y = _float_field(row[3], "y", path, lineno)
        if row[4].strip():
            conf = _float_field(row[4], "conf", path, lineno)
            if not 0.0 <= conf <= 1.0:
                raise ParseError(f"conf {conf} outside [0, 1]", path, lineno)
        else:
            conf = math.nan
        yield lineno, frame, joint, x, y, conf


def parse_keypoint_file(path: Path | str, entry: ManifestEntry | None = None) -> SkeletonSequence:
    """Read one keypoint CSV.

    Rows of a frame must be contiguous, frames must appear in strictly
    increasing order, and every frame must list joints ``0..J-1`` exactly once
    with the same ``J`` throughout.  ``entry`` supplies label, fps and impact
    frame; without it the sequence is an unlabelled (non-fall) recording.
    """
    path = Path(path)
    frames: list[int] = []
    xy: list[np.ndarray] = []
    conf: list[np.ndarray] = []
    n_joints: int | None = None
    cur: int | None = None
    cur_rows: dict[int, tuple[float, float, float]] = {}
    cur_line = 0

    def close_frame():
        nonlocal n_joints
        j = len(cur_rows)
        if sorted(cur_rows) != list(range(j)):
            raise StructureError(f"{path}:{cur_line}: frame {cur} joints must be 0..{j - 1} exactly once")
        if n_joints is None:
            n_joints = j
        elif j != n_joints:
            raise StructureError(f"{path}:{cur_line}: frame {cur} has {j} joints, expected {n_joints}")
        rows = [cur_rows[k] for k in range(j)]
        frames.append(cur)
        xy.append(np.array([(r[0], r[1]) for r in rows]))
        conf.append(np.array([r[2] for r in rows]))

    for lineno, frame, joint, x, y, c in _iter_keypoint_rows(path):
        if cur is None or frame != cur:
            if cur is not None:
                if frame < cur:
                    raise StructureError(
                        f"{path}:{lineno}: frame index {frame} after {cur}; frames must be strictly increasing"
                    )
                close_frame()
            cur, cur_rows = frame, {}
        if joint in cur_rows:
            raise StructureError(f"{path}:{lineno}: duplicate joint {joint} in frame {frame}")
        cur_rows[joint] = (x, y, c)
        cur_line = lineno
    if cur is None:
        raise StructureError(f"{path}: no keypoint rows")
    close_frame()

    if entry is None:
        meta = dict(sequence_id=path.stem)
    else:
        meta = dict(
            sequence_id=entry.sequence_id,
            label=entry.label,
            impact_frame=entry.impact_frame,
            fps=entry.fps,
            subject_id=entry.subject_id,
            activity_id=entry.activity_id,
            trial_id=entry.trial_id,
        )
    return SkeletonSequence(
        frame_index=np.array(frames, dtype=np.int64), xy=np.stack(xy), conf=np.stack(conf), **meta
    )


def write_keypoint_file(path: Path | str, seq: SkeletonSequence) -> None:
    """Inverse of :func:`parse_keypoint_file`; floats use shortest round-trip repr."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# prefall-keypoints {KEYPOINT_FORMAT_VERSION}\n")
        fh.write(",".join(KEYPOINT_HEADER) + "\n")
        for f, pts, cs in zip(seq.frame_index.tolist(), seq.xy.tolist(), seq.conf.tolist()):
            for j, ((x, y), c) in enumerate(zip(pts, cs)):
                fh.write(f"{f},{j},{x!r},{y!r},{'' if math.isnan(c) else repr(c)}\n")


def load_sequences(entries: Sequence[ManifestEntry]) -> list[SkeletonSequence]:
    return [parse_keypoint_file(e.file, e) for e in entries]
