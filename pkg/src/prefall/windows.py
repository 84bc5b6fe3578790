"""Window extraction, train/test collation and feature distribution statistics."""

from __future__ import annotations

import csv
import logging
import math
import warnings
import zlib
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ExtractionError, FormatVersionError, MaskedDataError, ParseError
from .features import FEATURE_NAMES, N_FEATURES, FeatureSequence
from .ingest import Label, read_version_line

logger = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1
DATASET_BASE_HEADER = ("sequence", "label", "window_start", "lead_ms", "K")
STATS_HEADER = ("group", "feature", "min", "q1", "median", "q3", "max", "mean", "stddev")


class StratificationWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class WindowSample:
    features: np.ndarray
    label: Label
    sequence_id: str
    window_start: int
    lead_time_s: float | None = None
    subject_id: str = ""

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] != N_FEATURES:
            raise ValueError(f"window features must be K x {N_FEATURES}, got {feats.shape}")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)

    @property
    def K(self) -> int:
        return int(self.features.shape[0])

    @property
    def key(self) -> tuple:
        """Identity of the window inside its source corpus."""
        return (self.sequence_id, self.window_start, self.K, self.label.value)


@dataclass(frozen=True)
class DatasetSplit:
    train: list[WindowSample]
    test: list[WindowSample]
    seed: int
    ratio: float


def lead_frames(lead_time_s: float, fps: float) -> int:
    """``round(lead_time_s * fps)`` with halves rounded up, computed on exact decimals."""
    prod = Fraction(str(lead_time_s)) * Fraction(str(fps))
    return math.floor(prod + Fraction(1, 2))


def _round_half_up(x: float) -> int:
    return math.floor(Fraction(str(x)) + Fraction(1, 2))


def derive_seed(seed: int, name: str) -> int:
    """Stable per-item seed from a base seed and a string id."""
    return int(np.random.SeedSequence([seed, zlib.crc32(name.encode())]).generate_state(1)[0])


def _window_at(fs: FeatureSequence, pos: int, K: int, label: Label, lead: float | None) -> WindowSample:
    return WindowSample(
        features=fs.theta[pos : pos + K],
        label=label,
        sequence_id=fs.sequence_id,
        window_start=int(fs.frame_index[pos]),
        lead_time_s=lead,
        subject_id=fs.subject_id,
    )


def extract_fall_window(fs: FeatureSequence, lead_time_s: float, K: int) -> WindowSample:
    """The K frames ending ``lead_frames(lead_time_s, fps)`` before the impact frame."""
    if fs.label is not Label.FALL or fs.impact_frame is None:
        raise ExtractionError(f"{fs.sequence_id}: fall window requested from a non-fall sequence")
    if K < 1 or lead_time_s < 0:
        raise ConfigError(f"need K >= 1 and lead >= 0, got K={K}, lead={lead_time_s}")
    end = fs.impact_frame - lead_frames(lead_time_s, fs.fps)
    start = end - K + 1
    fi = fs.frame_index
    pos = int(np.searchsorted(fi, start))
    if start < fi[0] or end > fi[-1] or pos + K > fi.size or fi[pos + K - 1] != end or fi[pos] != start:
        raise ExtractionError(
            f"{fs.sequence_id}: window [{start}, {end}] (lead {lead_time_s}s, K {K}) "
            f"does not fit in frames [{fi[0]}, {fi[-1]}]"
        )
    if not fs.valid[pos : pos + K].all():
        raise MaskedDataError(f"{fs.sequence_id}: window [{start}, {end}] contains invalid features")
    return _window_at(fs, pos, K, Label.FALL, lead_time_s)


def valid_starts(fs: FeatureSequence, K: int) -> np.ndarray:
    """Positions where K contiguous, fully valid frames begin."""
    n = len(fs)
    if n < K:
        return np.empty(0, dtype=np.int64)
    fi = fs.frame_index
    contiguous = fi[K - 1 :] - fi[: n - K + 1] == K - 1
    bad = np.concatenate([[0], np.cumsum(~fs.valid.all(axis=1))])
    clean = bad[K:] - bad[: n - K + 1] == 0
    return np.flatnonzero(contiguous & clean)


def extract_nonfall_window(fs: FeatureSequence, K: int, rng_seed: int) -> WindowSample:
    """A K-frame window whose start is drawn uniformly from the valid starts."""
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    if len(fs) < K:
        raise ExtractionError(f"{fs.sequence_id}: {len(fs)} frames is shorter than K={K}")
    starts = valid_starts(fs, K)
    if starts.size == 0:
        raise MaskedDataError(f"{fs.sequence_id}: no fully valid contiguous {K}-frame window")
    pos = int(starts[np.random.default_rng(rng_seed).integers(starts.size)])
    return _window_at(fs, pos, K, Label.NONFALL, None)


def build_windows(
    sequences: Iterable[FeatureSequence], lead_time_s: float, K: int, seed: int
) -> tuple[list[WindowSample], list[tuple[str, str]]]:
    """One window per sequence; returns (samples, [(sequence_id, reason) for skipped])."""
    samples, skipped = [], []
    for fs in sequences:
        try:
            if fs.label is Label.FALL:
                samples.append(extract_fall_window(fs, lead_time_s, K))
            else:
                samples.append(extract_nonfall_window(fs, K, derive_seed(seed, fs.sequence_id)))
        except ExtractionError as exc:
            skipped.append((fs.sequence_id, str(exc)))
    if skipped:
        logger.info("skipped %d sequences at lead %.3fs K %d", len(skipped), lead_time_s, K)
    return samples, skipped


# --------------------------------------------------------------------------
# Train / test collation
# --------------------------------------------------------------------------


def _largest_remainder(sizes: Sequence[int], ratio: float, total: int) -> list[int]:
    exact = [Fraction(str(ratio)) * n for n in sizes]
    quota = [math.floor(e) for e in exact]
    order = sorted(range(len(sizes)), key=lambda i: (-(exact[i] - quota[i]), i))
    for i in order[: max(0, total - sum(quota))]:
        quota[i] += 1
    return quota


def collate_split(
    samples: Sequence[WindowSample], ratio: float = 0.8, seed: int = 0, by_subject: bool = False
) -> DatasetSplit:
    """Seeded shuffle-and-split, stratified by label.

    Each class contributes ``ratio`` of its windows to ``train`` (largest
    remainder rounding, at least one window on each side when the class has
    two or more).  With ``by_subject`` whole subjects are assigned instead.
    """
    if not samples:
        raise ConfigError("cannot split an empty sample list")
    if not 0 < ratio <= 1:
        raise ConfigError(f"split ratio must be in (0, 1], got {ratio}")
    rng = np.random.default_rng(seed)
    samples = list(samples)

    if by_subject:
        subjects = sorted({s.subject_id for s in samples})
        order = rng.permutation(len(subjects))
        n = len(subjects)
        n_train = _round_half_up(ratio * n)
        if n >= 2 and ratio < 1:
            n_train = min(max(n_train, 1), n - 1)
        train_subj = {subjects[i] for i in order[:n_train]}
        train = [s for s in samples if s.subject_id in train_subj]
        test = [s for s in samples if s.subject_id not in train_subj]
        return DatasetSplit(train, test, seed, ratio)

    groups = [[s for s in samples if s.label is lab] for lab in Label]
    groups = [g for g in groups if g]
    total = _round_half_up(ratio * len(samples))
    if any(len(g) < 2 for g in groups):
        if len(groups) > 1:
            warnings.warn("a class has fewer than 2 windows; splitting without stratification", StratificationWarning)
        perm = rng.permutation(len(samples))
        return DatasetSplit(
            [samples[i] for i in perm[:total]], [samples[i] for i in perm[total:]], seed, ratio
        )

    quotas = _largest_remainder([len(g) for g in groups], ratio, total)
    train, test = [], []
    for g, q in zip(groups, quotas):
        if ratio < 1:
            q = min(max(q, 1), len(g) - 1)
        perm = rng.permutation(len(g))
        train.extend(g[i] for i in perm[:q])
        test.extend(g[i] for i in perm[q:])
    train = [train[i] for i in rng.permutation(len(train))]
    test = [test[i] for i in rng.permutation(len(test))]
    return DatasetSplit(train, test, seed, ratio)


# --------------------------------------------------------------------------
# Distribution statistics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxStats:
    """Per-feature summary (each field has one entry per feature).

    Quartiles interpolate linearly between order statistics; ``stddev`` is
    the population standard deviation.
    """

    min: np.ndarray
    q1: np.ndarray
    median: np.ndarray
    q3: np.ndarray
    max: np.ndarray
    mean: np.ndarray
    stddev: np.ndarray
    n: int = 0

    @property
    def iqr(self) -> np.ndarray:
        return self.q3 - self.q1

    @property
    def variance(self) -> np.ndarray:
        return self.stddev**2


def feature_stats(samples: Sequence[WindowSample]) -> BoxStats:
    if not samples:
        raise ConfigError("feature_stats needs at least one window")
    pooled = np.concatenate([s.features for s in samples], axis=0)
    q = np.percentile(pooled, [0, 25, 50, 75, 100], axis=0, method="linear")
    return BoxStats(
        min=q[0], q1=q[1], median=q[2], q3=q[3], max=q[4],
        mean=pooled.mean(axis=0), stddev=pooled.std(axis=0), n=pooled.shape[0],
    )


def write_stats_csv(path: Path | str, groups: dict[str, BoxStats]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_HEADER)
        for group, st in groups.items():
            for j, name in enumerate(FEATURE_NAMES):
                w.writerow(
                    [group, name]
                    + [f"{getattr(st, k)[j]:.6f}" for k in ("min", "q1", "median", "q3", "max", "mean", "stddev")]
                )


# --------------------------------------------------------------------------
# Dataset files
# --------------------------------------------------------------------------


def write_dataset(path: Path | str, samples: Sequence[WindowSample]) -> None:
    """One record per window; feature values follow the base fields row-major (frame, feature)."""
    Ks = {s.K for s in samples}
    if len(Ks) > 1:
        raise ConfigError(f"dataset windows must share K, got {sorted(Ks)}")
    K = Ks.pop() if Ks else 0
    header = list(DATASET_BASE_HEADER) + [f"f{t}_{j}" for t in range(K) for j in range(N_FEATURES)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# prefall-dataset {DATASET_FORMAT_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for s in samples:
            lead = "" if s.lead_time_s is None else _round_half_up(s.lead_time_s * 1000)
            w.writerow(
                [s.sequence_id, s.label.text, s.window_start, lead, s.K]
                + [repr(v) for v in s.features.ravel().tolist()]
            )


def read_dataset(path: Path | str) -> list[WindowSample]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    offset = 0
    if lines and read_version_line(lines[0], "dataset", DATASET_FORMAT_VERSION, path) is not None:
        lines, offset = lines[1:], 1
    elif lines and lines[0].startswith("#"):
        raise FormatVersionError(f"{path}: unrecognised format line {lines[0]!r}")
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or tuple(header[:5]) != DATASET_BASE_HEADER:
        raise ParseError(f"dataset header must start with {','.join(DATASET_BASE_HEADER)}", path, 1 + offset)
    out = []
    for lineno, row in enumerate(reader, 2 + offset):
        if not row:
            continue
        try:
            K = int(row[4])
            vals = np.array([float(v) for v in row[5:]])
            if vals.size != K * N_FEATURES:
                raise ValueError(f"expected {K * N_FEATURES} feature values, got {vals.size}")
            out.append(
                WindowSample(
                    features=vals.reshape(K, N_FEATURES),
                    label=Label.parse(row[1]),
                    sequence_id=row[0],
                    window_start=int(row[2]),
                    lead_time_s=int(row[3]) / 1000 if row[3] else None,
                )
            )
        except (ValueError, IndexError) as exc:
            raise ParseError(str(exc), path, lineno) from None
    return out
