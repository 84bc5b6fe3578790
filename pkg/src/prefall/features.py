"""The six head-to-lower-limb angle features.

For each lower-limb joint P (hips, knees, ankles) the feature is the signed
angle, in degrees, between the downward image vertical through the head P0
and the segment P0 -> P::

    dx = x_P - x_P0,  dy = y_P - y_P0   (image coords, y grows downward)
    theta = atan2(dx, dy)

For joints below the head this is exactly ``asin(dx / |P - P0|)``; the two
argument form keeps it continuous once a joint rises above the head.
Positive angles put the joint to the image-right of the head.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .ingest import (
    DEFAULT_FPS,
    JointMap,
    Label,
    SevenJointFrame,
    SkeletonSequence,
    seven_joint_arrays,
)

FEATURE_NAMES = ("left_hip", "right_hip", "left_knee", "right_knee", "left_ankle", "right_ankle")
N_FEATURES = len(FEATURE_NAMES)
FEATURE_CSV_HEADER = ("sequence", "frame", *(f"theta{i}" for i in range(1, 7)), "valid_mask")


@dataclass(frozen=True)
class FallFeatureVector:
    theta: tuple[float, ...]
    valid: tuple[bool, ...]


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """Per-frame features of one sequence, aligned with its frame indices.

    ``theta`` is ``(F, 6)`` degrees with invalid entries set to 0, ``valid``
    is the matching boolean mask.
    """

    sequence_id: str
    frame_index: np.ndarray
    theta: np.ndarray
    valid: np.ndarray
    label: Label = Label.NONFALL
    impact_frame: int | None = None
    fps: float = DEFAULT_FPS
    subject_id: str = ""

    def __post_init__(self):
        for name in ("frame_index", "theta", "valid"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return int(self.frame_index.size)

    @property
    def rows(self) -> list[FallFeatureVector]:
        return [
            FallFeatureVector(tuple(t.tolist()), tuple(v.tolist())) for t, v in zip(self.theta, self.valid)
        ]


def joint_angles(head: np.ndarray, joints: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Angles for ``head (..., 2)`` against ``joints (..., 6, 2)``.

    Returns ``(theta, ok)`` where ``ok`` is False wherever the joint
    coincides with the head (zero distance, angle undefined).
    """
    head = np.asarray(head, dtype=np.float64)
    joints = np.asarray(joints, dtype=np.float64)
    d = joints - head[..., None, :]
    dx, dy = d[..., 0], d[..., 1]
    ok = np.hypot(dx, dy) > 0
    theta = np.where(ok, np.degrees(np.arctan2(dx, dy)), 0.0)
    return theta, ok


def frame_features(sjf: SevenJointFrame) -> FallFeatureVector:
    pts = np.array([(k.x, k.y) for k in sjf.keypoints])
    theta, ok = joint_angles(pts[0], pts[1:])
    valid = ok & np.array(sjf.validity[1:]) & sjf.validity[0]
    theta = np.where(valid, theta, 0.0)
    return FallFeatureVector(tuple(theta.tolist()), tuple(valid.tolist()))


def sequence_features(
    seq: SkeletonSequence, jm: JointMap | None = None, conf_threshold: float = 0.0
) -> FeatureSequence:
    if jm is None:
        jm = JointMap.for_skeleton(seq.n_joints)
    pts, joint_ok = seven_joint_arrays(seq, jm, conf_threshold)
    theta, ok = joint_angles(pts[:, 0, :], pts[:, 1:, :])
    valid = ok & joint_ok[:, 1:] & joint_ok[:, :1]
    return FeatureSequence(
        sequence_id=seq.sequence_id,
        frame_index=seq.frame_index,
        theta=np.where(valid, theta, 0.0),
        valid=valid,
        label=seq.label,
        impact_frame=seq.impact_frame,
        fps=seq.fps,
        subject_id=seq.subject_id,
    )


def write_feature_csv(path: Path | str, sequences: Iterable[FeatureSequence]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FEATURE_CSV_HEADER)
        for fs in sequences:
            for f, th, v in zip(fs.frame_index.tolist(), fs.theta, fs.valid):
                w.writerow([fs.sequence_id, f, *(f"{t:.6f}" for t in th), "".join("1" if b else "0" for b in v)])
