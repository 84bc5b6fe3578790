"""Training, evaluation, lead-time / window-size sweeps and streaming inference."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .features import FeatureSequence, sequence_features
from .ingest import JointMap, Label, load_manifest, parse_keypoint_file
from .net import (
    AdamState,
    LstmParams,
    NetConfig,
    adam_step,
    forward_batch,
    init_params,
    loss_and_grad,
    stack_windows,
)
from .windows import WindowSample, build_windows, collate_split, valid_starts

logger = logging.getLogger(__name__)

SWEEP_CSV_HEADER = ("lead_ms", "K", "seed", "fall_p", "fall_r", "fall_f1", "macro_f1", "weighted_f1")
DEFAULT_LEADS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
DEFAULT_KS = (5, 10, 15, 20)
OPERATING_POINT = (0.5, 15)


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    """Precision / recall / F1 per class plus macro and support-weighted averages.

    ``confusion[t, p]`` counts windows of true class ``t`` predicted as ``p``
    (indices are ``Label`` values).  Undefined ratios (zero denominators) are 0.
    """

    confusion: np.ndarray
    per_class: dict
    macro: tuple[float, float, float]
    weighted: tuple[float, float, float]
    accuracy: float

    @property
    def fall(self) -> ClassMetrics:
        return self.per_class[Label.FALL]

    @property
    def nonfall(self) -> ClassMetrics:
        return self.per_class[Label.NONFALL]

    @property
    def macro_f1(self) -> float:
        return self.macro[2]

    @property
    def weighted_f1(self) -> float:
        return self.weighted[2]

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    def to_text(self) -> str:
        rows = [
            ("Pre-Impact Fall", self.fall.precision, self.fall.recall, self.fall.f1, self.fall.support),
            ("Non-Fall", self.nonfall.precision, self.nonfall.recall, self.nonfall.f1, self.nonfall.support),
            ("Macro Average", *self.macro, self.n),
            ("Weighted Average", *self.weighted, self.n),
        ]
        out = [f"{'':<18}{'Precision':>10}{'Recall':>10}{'F1-Score':>10}{'Support':>9}"]
        out += [f"{name:<18}{p:>10.4f}{r:>10.4f}{f:>10.4f}{s:>9d}" for name, p, r, f, s in rows]
        tn, fp, fn, tp = self.confusion.ravel()
        out.append("")
        out.append(f"accuracy {self.accuracy:.4f}  confusion (fall positive): TP={tp} FP={fp} FN={fn} TN={tn}")
        return "\n".join(out) + "\n"

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "per_class": {lab.text: asdict(m) for lab, m in self.per_class.items()},
            "macro": list(self.macro),
            "weighted": list(self.weighted),
            "accuracy": self.accuracy,
        }


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def metrics_from_predictions(y_true: Sequence[int], y_pred: Sequence[int]) -> MetricsReport:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    conf = np.zeros((2, 2), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    per_class = {}
    for lab in Label:
        k = lab.value
        tp = conf[k, k]
        p = _ratio(tp, conf[:, k].sum())
        r = _ratio(tp, conf[k, :].sum())
        per_class[lab] = ClassMetrics(p, r, _ratio(2 * p * r, p + r), int(conf[k, :].sum()))
    ms = list(per_class.values())
    macro = tuple(sum(getattr(m, a) for m in ms) / 2 for a in ("precision", "recall", "f1"))
    total = conf.sum()
    weighted = tuple(_ratio(sum(getattr(m, a) * m.support for m in ms), total) for a in ("precision", "recall", "f1"))
    return MetricsReport(conf, per_class, macro, weighted, _ratio(np.trace(conf), total))


def predict_log_probs(params: LstmParams, windows: Sequence[WindowSample]) -> np.ndarray:
    return forward_batch(params, stack_windows(windows, params.input_scale))


def predict_labels(log_probs: np.ndarray) -> np.ndarray:
    """Argmax with ties resolved to NonFall."""
    return (log_probs[:, Label.FALL.value] > log_probs[:, Label.NONFALL.value]).astype(np.int64)


def evaluate(params: LstmParams, cfg: NetConfig, test: Sequence[WindowSample]) -> MetricsReport:
    if not test:
        raise ConfigError("evaluate needs at least one test window")
    bad = {w.K for w in test} - {cfg.K}
    if bad:
        raise ConfigError(f"test windows have K={sorted(bad)}, model expects K={cfg.K}")
    pred = predict_labels(predict_log_probs(params, test))
    return metrics_from_predictions([w.label.value for w in test], pred)


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainOptions:
    batch_size: int = 8
    epochs: int = 100
    patience: int = 20
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0


@dataclass
class TrainRun:
    cfg: NetConfig
    options: TrainOptions
    params: LstmParams
    initial_params: LstmParams
    loss_history: list[float] = field(default_factory=list)

    @property
    def seed(self) -> int:
        return self.options.seed

    @property
    def epochs(self) -> int:
        return len(self.loss_history)


def train(split, cfg: NetConfig, options: TrainOptions = TrainOptions()) -> TrainRun:
    """Mini-batch Adam on ``split.train`` (or a plain window list).

    Each epoch reshuffles with seed ``options.seed + epoch``.  Training stops
    early once the epoch mean loss has not improved for ``options.patience``
    epochs.
    """
    windows = list(getattr(split, "train", split))
    if not windows:
        raise ConfigError("training set is empty")
    labels = {w.label for w in windows}
    if len(labels) < 2:
        raise ConfigError(f"training set holds a single class ({labels.pop().text})")
    bad = {w.K for w in windows} - {cfg.K}
    if bad:
        raise ConfigError(f"training windows have K={sorted(bad)}, config says K={cfg.K}")
    if options.batch_size < 1 or options.epochs < 0:
        raise ConfigError("batch_size must be >= 1 and epochs >= 0")

    params = init_params(cfg, options.seed)
    run = TrainRun(cfg, options, params, params.copy())
    X = stack_windows(windows, params.input_scale)
    y = np.array([w.label.value for w in windows], dtype=np.int64)
    n = len(windows)
    state = AdamState.fresh(params, lr=options.lr, beta1=options.beta1, beta2=options.beta2, eps=options.eps)
    best, best_epoch = np.inf, 0
    for epoch in range(options.epochs):
        order = np.random.default_rng(options.seed + epoch).permutation(n)
        total = 0.0
        for start in range(0, n, options.batch_size):
            idx = order[start : start + options.batch_size]
            loss, grads = loss_and_grad(params, X[idx], y[idx])
            params, state = adam_step(params, grads, state)
            total += loss * idx.size
        epoch_loss = total / n
        run.loss_history.append(epoch_loss)
        if epoch_loss < best:
            best, best_epoch = epoch_loss, epoch
        elif epoch - best_epoch >= options.patience:
            logger.debug("early stop at epoch %d (best %.5f at %d)", epoch, best, best_epoch)
            break
    run.params = params
    return run


# --------------------------------------------------------------------------
# Sweeps
# --------------------------------------------------------------------------


@dataclass
class SweepRow:
    lead_time_s: float
    K: int
    seed: int
    report: MetricsReport | None
    n_train: int = 0
    n_test: int = 0
    note: str = ""

    @property
    def feasible(self) -> bool:
        return self.report is not None

    @property
    def lead_ms(self) -> int:
        return int(round(self.lead_time_s * 1000))


@dataclass
class SweepResult:
    rows: list[SweepRow]

    @property
    def mode(self) -> str:
        seeds = {r.seed for r in self.rows}
        return "single-run" if len(seeds) <= 1 else f"mean over {len(seeds)} seeds"

    def cells(self) -> list[tuple[float, int]]:
        seen = []
        for r in self.rows:
            if (r.lead_time_s, r.K) not in seen:
                seen.append((r.lead_time_s, r.K))
        return seen

    def macro_f1(self, lead_time_s: float, K: int) -> list[float]:
        return [r.report.macro_f1 for r in self.rows if r.lead_time_s == lead_time_s and r.K == K and r.feasible]

    def summary(self) -> list[dict]:
        out = []
        for lead, K in self.cells():
            f1 = self.macro_f1(lead, K)
            out.append(
                {
                    "lead_ms": int(round(lead * 1000)),
                    "K": K,
                    "n_seeds": len(f1),
                    "macro_f1_mean": float(np.mean(f1)) if f1 else float("nan"),
                    "macro_f1_min": float(min(f1)) if f1 else float("nan"),
                    "macro_f1_max": float(max(f1)) if f1 else float("nan"),
                }
            )
        return out

    def write_csv(self, path: Path | str) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_CSV_HEADER)
            for r in self.rows:
                if r.feasible:
                    m = r.report
                    vals = [m.fall.precision, m.fall.recall, m.fall.f1, m.macro_f1, m.weighted_f1]
                    w.writerow([r.lead_ms, r.K, r.seed, *(f"{v:.6f}" for v in vals)])
                else:
                    w.writerow([r.lead_ms, r.K, r.seed, "", "", "", "", ""])

    def write_summary_csv(self, path: Path | str) -> None:
        rows = self.summary()
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            fh.write(f"# mode: {self.mode}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lead_ms", "K", "n_seeds", "macro_f1_mean", "macro_f1_min", "macro_f1_max"])
            for s in rows:
                w.writerow([s["lead_ms"], s["K"], s["n_seeds"]] + [f"{s[k]:.6f}" for k in ("macro_f1_mean", "macro_f1_min", "macro_f1_max")])


def run_cell(
    sequences: Sequence[FeatureSequence],
    lead_time_s: float,
    K: int,
    seed: int,
    hidden_units: int = 5,
    options: TrainOptions = TrainOptions(),
    ratio: float = 0.8,
    by_subject: bool = False,
) -> SweepRow:
    """Extract -> split -> train -> evaluate for one (lead, K, seed)."""
    samples, skipped = build_windows(sequences, lead_time_s, K, seed)
    n_fall = sum(s.label is Label.FALL for s in samples)
    if n_fall == 0:
        return SweepRow(lead_time_s, K, seed, None, note=f"infeasible: no fall window fits ({len(skipped)} skipped)")
    split = collate_split(samples, ratio, seed, by_subject=by_subject)
    if len({w.label for w in split.train}) < 2 or not split.test:
        return SweepRow(lead_time_s, K, seed, None, note="infeasible: split lacks a class or a test set")
    cfg = NetConfig(hidden_units=hidden_units, K=K)
    run = train(split, cfg, TrainOptions(**{**asdict(options), "seed": seed}))
    report = evaluate(run.params, cfg, split.test)
    return SweepRow(lead_time_s, K, seed, report, len(split.train), len(split.test))


def _run_cell_args(args):
    return run_cell(*args)


def sweep(
    sequences: Sequence[FeatureSequence],
    cells: Iterable[tuple[float, int]],
    seeds: Sequence[int] = (0,),
    hidden_units: int = 5,
    options: TrainOptions = TrainOptions(),
    ratio: float = 0.8,
    by_subject: bool = False,
    jobs: int = 1,
) -> SweepResult:
    tasks = [
        (sequences, lead, K, seed, hidden_units, options, ratio, by_subject)
        for lead, K in cells
        for seed in seeds
    ]
    if not tasks:
        raise ConfigError("sweep needs at least one (lead, K) cell and one seed")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell_args, tasks))
    else:
        rows = [_run_cell_args(t) for t in tasks]
    return SweepResult(rows)


def sweep_lead_time(sequences, leads=DEFAULT_LEADS, K: int = 15, seeds=(0,), **kw) -> SweepResult:
    return sweep(sequences, [(lead, K) for lead in leads], seeds, **kw)


def sweep_window(sequences, lead: float = 0.5, Ks=DEFAULT_KS, seeds=(0,), **kw) -> SweepResult:
    return sweep(sequences, [(lead, K) for K in Ks], seeds, **kw)


# --------------------------------------------------------------------------
# Streaming inference
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Emission:
    window_end_frame: int
    label: Label
    logprob_fall: float


@dataclass
class StreamResult:
    emissions: list[Emission]
    skipped: list[int]

    def __len__(self) -> int:
        return len(self.emissions)

    def __iter__(self):
        return iter(self.emissions)

    def first_fall(self) -> Emission | None:
        return next((e for e in self.emissions if e.label is Label.FALL), None)


def infer_stream(params: LstmParams, cfg: NetConfig, fs: FeatureSequence, stride: int = 1) -> StreamResult:
    """Slide a K-frame window by ``stride``; placements with invalid or missing frames are skipped."""
    K = cfg.K
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    n = len(fs)
    placements = list(range(0, n - K + 1, stride))
    ok = set(valid_starts(fs, K).tolist())
    keep = [p for p in placements if p in ok]
    skipped = [int(fs.frame_index[p + K - 1]) for p in placements if p not in ok]
    if not keep:
        return StreamResult([], skipped)
    X = np.stack([fs.theta[p : p + K] for p in keep]) / params.input_scale
    lp = forward_batch(params, X)
    pred = predict_labels(lp)
    emissions = [
        Emission(int(fs.frame_index[p + K - 1]), Label(int(c)), float(l[Label.FALL.value]))
        for p, c, l in zip(keep, pred, lp)
    ]
    return StreamResult(emissions, skipped)


# --------------------------------------------------------------------------
# Manifest -> features
# --------------------------------------------------------------------------


def featurize_manifest(
    manifest: Path | str,
    joint_map: JointMap | None = None,
    conf_threshold: float = 0.0,
    activity_map=None,
    fps: float | None = None,
) -> list[FeatureSequence]:
    out = []
    for entry in load_manifest(manifest, activity_map):
        if fps is not None:
            entry = replace(entry, fps=fps)
        seq = parse_keypoint_file(entry.file, entry)
        out.append(sequence_features(seq, joint_map, conf_threshold))
    return out
