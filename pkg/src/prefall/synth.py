"""Synthetic skeletal sequences with known angle trajectories.

Trajectories are defined in feature space and converted to 25-joint (BODY_25
layout) keypoints at fixed distances from a fixed head, so the feature
extractor recovers the generating angles exactly (up to float rounding).

Non-fall: per-joint baseline standing angles plus optional sinusoidal sway
and Gaussian angle noise.  Fall: the same, plus a linear deviation that starts
``onset_lead_s`` before impact and reaches ``deviation_amplitude`` (with a
per-sequence sign) at the impact frame, holding there afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .ingest import (
    JOINT_MAP_PRESETS,
    Label,
    ManifestEntry,
    SkeletonSequence,
    write_keypoint_file,
    write_manifest,
)

N_JOINTS = 25
HEAD_XY = (320.0, 80.0)
# Standing posture, subject facing the camera: their left side is image-right.
BASE_ANGLES = np.array([8.0, -8.0, 5.0, -5.0, 4.0, -4.0])
# head -> hips, knees, ankles (pixels)
LIMB_LENGTHS = np.array([260.0, 260.0, 390.0, 390.0, 520.0, 520.0])

_BODY25 = JOINT_MAP_PRESETS["body25"]
_MAPPED = [i for i in _BODY25.indices[1:]]

# Upper body and face joints, fixed offsets from the head.
_UPPER = {
    1: (0.0, 40.0),      # neck
    2: (-45.0, 50.0),    # right shoulder
    3: (-55.0, 110.0),   # right elbow
    4: (-60.0, 170.0),   # right wrist
    5: (45.0, 50.0),     # left shoulder
    6: (55.0, 110.0),    # left elbow
    7: (60.0, 170.0),    # left wrist
    15: (-8.0, -6.0),    # right eye
    16: (8.0, -6.0),     # left eye
    17: (-16.0, -2.0),   # right ear
    18: (16.0, -2.0),    # left ear
}
# Feet, offsets from the ankle they belong to.
_FEET = {19: (14, (12.0, 18.0)), 20: (14, (20.0, 16.0)), 21: (14, (-4.0, 10.0)),
         22: (11, (-12.0, 18.0)), 23: (11, (-20.0, 16.0)), 24: (11, (4.0, 10.0))}


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    label: Label = Label.NONFALL
    fps: float = 18.0
    duration_s: float = 4.0
    impact_time_s: float = 3.0
    deviation_amplitude: float = 40.0
    onset_lead_s: float = 1.0
    noise_stddev: float = 2.0
    base_jitter: float = 3.0
    sway_amplitude: float = 0.0
    # False puts every generating angle at 0 before jitter, sway and ramp
    standing_pose: bool = True
    sequence_id: str = "synth"
    subject_id: str = "1"
    activity_id: str = ""
    trial_id: str = "1"

    def validate(self) -> None:
        if not self.fps > 0 or not self.duration_s > 0:
            raise ConfigError("fps and duration_s must be positive")
        for name in ("deviation_amplitude", "noise_stddev", "base_jitter", "sway_amplitude"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.label is Label.FALL and not 0 < self.onset_lead_s < self.impact_time_s <= self.duration_s:
            raise ConfigError(
                "fall spec needs 0 < onset_lead_s < impact_time_s <= duration_s, got "
                f"{self.onset_lead_s}, {self.impact_time_s}, {self.duration_s}"
            )

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s * self.fps)) + 1

    @property
    def impact_frame(self) -> int | None:
        if self.label is not Label.FALL:
            return None
        return min(int(round(self.impact_time_s * self.fps)), self.n_frames - 1)


def angle_trajectories(spec: SynthSpec) -> np.ndarray:
    """Generating angles ``(n_frames, 6)`` in degrees."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.n_frames
    jitter = rng.uniform(-spec.base_jitter, spec.base_jitter, 6) if spec.base_jitter else np.zeros(6)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    phase = rng.uniform(0, 2 * math.pi)
    freq = rng.uniform(0.5, 1.5)
    noise = rng.normal(0.0, spec.noise_stddev, (n, 6)) if spec.noise_stddev else np.zeros((n, 6))

    t = np.arange(n) / spec.fps
    base = BASE_ANGLES if spec.standing_pose else np.zeros(6)
    theta = np.broadcast_to(base + jitter, (n, 6)).copy()
    if spec.sway_amplitude:
        theta += spec.sway_amplitude * np.sin(2 * math.pi * freq * t + phase)[:, None]
    if spec.label is Label.FALL:
        F = spec.impact_frame
        ramp = np.clip(1.0 - (F - np.arange(n)) / (spec.onset_lead_s * spec.fps), 0.0, 1.0)
        theta += sign * spec.deviation_amplitude * ramp[:, None]
    return theta + noise


def keypoints_from_angles(theta: np.ndarray) -> np.ndarray:
    """``(F, 25, 2)`` BODY_25 keypoints realising the given ``(F, 6)`` angles."""
    F = theta.shape[0]
    xy = np.zeros((F, N_JOINTS, 2))
    head = np.array(HEAD_XY)
    xy[:, 0] = head
    rad = np.radians(theta)
    for j, idx in enumerate(_MAPPED):
        xy[:, idx, 0] = head[0] + LIMB_LENGTHS[j] * np.sin(rad[:, j])
        xy[:, idx, 1] = head[1] + LIMB_LENGTHS[j] * np.cos(rad[:, j])
    for idx, off in _UPPER.items():
        xy[:, idx] = head + off
    xy[:, 8] = 0.5 * (xy[:, _BODY25.left_hip] + xy[:, _BODY25.right_hip])
    for idx, (ankle, off) in _FEET.items():
        xy[:, idx] = xy[:, ankle] + off
    return xy


def gen_sequence(spec: SynthSpec) -> tuple[SkeletonSequence, ManifestEntry]:
    theta = angle_trajectories(spec)
    xy = keypoints_from_angles(theta)
    activity = spec.activity_id or ("1" if spec.label is Label.FALL else "6")
    seq = SkeletonSequence(
        sequence_id=spec.sequence_id,
        frame_index=np.arange(spec.n_frames),
        xy=xy,
        conf=np.full(xy.shape[:2], np.nan),
        label=spec.label,
        impact_frame=spec.impact_frame,
        fps=spec.fps,
        subject_id=spec.subject_id,
        activity_id=activity,
        trial_id=spec.trial_id,
    )
    entry = ManifestEntry(
        file=Path(f"{spec.sequence_id}.csv"),
        subject_id=spec.subject_id,
        activity_id=activity,
        trial_id=spec.trial_id,
        label=spec.label,
        fps=spec.fps,
        impact_frame=spec.impact_frame,
        sequence_id=spec.sequence_id,
    )
    return seq, entry


def sequence_seed(base_seed: int, k: int) -> int:
    return int(np.random.SeedSequence([base_seed, k]).generate_state(1)[0])


def corpus_specs(n_fall: int, n_nonfall: int, base_seed: int = 0, template: SynthSpec | None = None) -> list[SynthSpec]:
    """Per-sequence specs; subjects, activities and trials cycle like UP-Fall (17 x 5|6 x 3)."""
    if n_fall < 0 or n_nonfall < 0:
        raise ConfigError("sequence counts must be nonnegative")
    template = template or SynthSpec()
    specs = []
    for k in range(n_fall + n_nonfall):
        fall = k < n_fall
        j = k if fall else k - n_fall
        n_act = 5 if fall else 6
        specs.append(
            replace(
                template,
                seed=sequence_seed(base_seed, k),
                label=Label.FALL if fall else Label.NONFALL,
                sequence_id=f"{'fall' if fall else 'nonfall'}_{j:04d}",
                subject_id=str(j % 17 + 1),
                activity_id=str((j // 17) % n_act + (1 if fall else 6)),
                trial_id=str((j // (17 * n_act)) % 3 + 1),
            )
        )
    return specs


def corpus_sequences(n_fall: int, n_nonfall: int, base_seed: int = 0, template: SynthSpec | None = None) -> list[SkeletonSequence]:
    return [gen_sequence(s)[0] for s in corpus_specs(n_fall, n_nonfall, base_seed, template)]


def gen_corpus(
    out_dir: Path | str, n_fall: int, n_nonfall: int, base_seed: int = 0, template: SynthSpec | None = None
) -> tuple[Path, list[ManifestEntry]]:
    """Write keypoint CSVs under ``out_dir/keypoints`` and ``out_dir/manifest.csv``."""
    out_dir = Path(out_dir)
    kp_dir = out_dir / "keypoints"
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for spec in corpus_specs(n_fall, n_nonfall, base_seed, template):
        seq, entry = gen_sequence(spec)
        kp_dir.mkdir(exist_ok=True)
        path = kp_dir / entry.file
        write_keypoint_file(path, seq)
        entries.append(replace(entry, file=path))
    manifest = out_dir / "manifest.csv"
    write_manifest(manifest, entries)
    return manifest, entries
