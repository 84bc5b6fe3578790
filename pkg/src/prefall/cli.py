"""Command-line entry point: ``prefall <subcommand> [flags]``.

Every flag can also come from a key-value config file (``--config``) or an
environment variable ``PREFALL_<FLAG>`` (dashes become underscores, e.g.
``PREFALL_LEAD_MS=300``).  Precedence: command line, environment, config
file, built-in default.  Each run writes ``run.json`` next to its outputs
with the resolved configuration, seeds and format versions.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .errors import (
    AnnotationError,
    ConfigError,
    ExtractionError,
    FormatVersionError,
    MappingError,
    ModelFormatError,
    ParseError,
    PrefallError,
    StructureError,
)
from .features import sequence_features, write_feature_csv
from .harness import (
    TrainOptions,
    evaluate,
    featurize_manifest,
    infer_stream,
    sweep,
    train,
)
from .ingest import (
    KEYPOINT_FORMAT_VERSION,
    MANIFEST_FORMAT_VERSION,
    JointMap,
    Label,
    parse_keypoint_file,
    read_key_values,
)
from .net import BACKEND, MODEL_FORMAT_VERSION, NetConfig, load_model, param_count, save_model
from .synth import SynthSpec, gen_corpus
from .windows import (
    DATASET_FORMAT_VERSION,
    build_windows,
    collate_split,
    feature_stats,
    read_dataset,
    write_dataset,
    write_stats_csv,
)

logger = logging.getLogger("prefall")

ENV_PREFIX = "PREFALL_"
PUBLISHED_BYTES = 3136
SMALLEST_BASELINE_BYTES = 59557

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3
EXIT_FORMAT_VERSION = 4
EXIT_DATA = 5
EXIT_CONFIG = 6
EXIT_EXTRACTION = 7

FORMAT_VERSIONS = {
    "keypoints": KEYPOINT_FORMAT_VERSION,
    "manifest": MANIFEST_FORMAT_VERSION,
    "dataset": DATASET_FORMAT_VERSION,
    "model": MODEL_FORMAT_VERSION,
}

# flag -> (type, default); shared by every subcommand that accepts it
FLAGS = {
    "manifest": (Path, None),
    "out": (Path, None),
    "seed": (int, 0),
    "fps": (float, None),
    "lead_ms": (int, 500),
    "k": (int, 15),
    "hidden": (int, 5),
    "batch": (int, 8),
    "epochs": (int, 100),
    "patience": (int, 20),
    "lr": (float, 1e-3),
    "ratio": (float, 0.8),
    "jobs": (int, 1),
    "joint_map": (str, None),
    "conf_threshold": (float, 0.0),
    "stride": (int, 1),
    "model": (Path, None),
    "dataset": (Path, None),
    "keypoints": (Path, None),
    "activity_map": (Path, None),
    "leads": (str, "100..800"),
    "ks": (str, "15"),
    "seeds": (int, 5),
    "n_fall": (int, 30),
    "n_nonfall": (int, 30),
    "amplitude": (float, 40.0),
    "noise": (float, 2.0),
    "onset_ms": (int, 1000),
    "impact_ms": (int, 3000),
    "duration_ms": (int, 4000),
    "sway": (float, 0.0),
}

SUBCOMMANDS = {
    "synth": ("write a synthetic keypoint corpus and manifest",
              ["out", "seed", "fps", "n_fall", "n_nonfall", "amplitude", "noise", "onset_ms", "impact_ms", "duration_ms", "sway"]),
    "extract": ("dump per-frame angle features",
                ["manifest", "out", "fps", "joint_map", "conf_threshold", "activity_map"]),
    "stats": ("box-plot statistics of fall vs non-fall windows",
              ["manifest", "out", "seed", "fps", "lead_ms", "k", "joint_map", "conf_threshold", "activity_map"]),
    "dataset": ("extract windows and write a train/test split",
                ["manifest", "out", "seed", "fps", "lead_ms", "k", "ratio", "joint_map", "conf_threshold", "activity_map"]),
    "train": ("train the LSTM and report test metrics",
              ["manifest", "dataset", "out", "seed", "fps", "lead_ms", "k", "hidden", "batch", "epochs", "patience",
               "lr", "ratio", "joint_map", "conf_threshold", "activity_map"]),
    "eval": ("evaluate a saved model on a test set",
             ["model", "manifest", "dataset", "out", "seed", "fps", "lead_ms", "ratio", "joint_map", "conf_threshold",
              "activity_map"]),
    "sweep": ("lead-time / window-size sweep",
              ["manifest", "out", "seed", "seeds", "fps", "leads", "ks", "hidden", "batch", "epochs",
               "patience", "lr", "ratio", "jobs", "joint_map", "conf_threshold", "activity_map"]),
    "infer": ("streaming inference; writes frame,label,logprob_fall lines",
              ["model", "manifest", "keypoints", "out", "stride", "fps", "joint_map", "conf_threshold", "activity_map"]),
    "info": ("print network configuration and parameter footprint", ["model", "hidden", "k"]),
}


class MissingInput(PrefallError):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prefall", description="Pre-impact fall detection pipeline")
    p.add_argument("--version", action="version", version=f"prefall {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (help_text, flags) in SUBCOMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", type=Path, help="key-value config file")
        sp.add_argument("-v", "--verbose", action="store_true")
        for flag in flags:
            typ, default = FLAGS[flag]
            dash = "--" + flag.replace("_", "-")
            names = {"ks": ["--k", "--ks"], "leads": ["--leads", "--lead-ms"]}.get(flag, [dash])
            sp.add_argument(*names, dest=flag, type=str, default=None,
                            help=f"default: {default}" if default is not None else None)
        if name in ("dataset", "train", "eval", "sweep"):
            sp.add_argument("--by-subject", action="store_true", help="split whole subjects instead of windows")
    return p


def _coerce(flag: str, value):
    typ = FLAGS[flag][0]
    if value is None:
        return None
    try:
        return typ(value)
    except (TypeError, ValueError):
        raise ConfigError(f"--{flag.replace('_', '-')}: cannot parse {value!r} as {typ.__name__}") from None


def resolve(ns: argparse.Namespace) -> dict:
    """Merge command line, environment, config file and defaults into one flat dict."""
    flags = SUBCOMMANDS[ns.command][1]
    file_values = {}
    if ns.config is not None:
        if not ns.config.exists():
            raise MissingInput(f"config file not found: {ns.config}")
        file_values = {k.replace("-", "_"): v for k, v in read_key_values(ns.config).items()}
    cfg = {}
    for flag in flags:
        value = getattr(ns, flag)
        if value is None:
            value = os.environ.get(ENV_PREFIX + flag.upper())
        if value is None:
            value = file_values.get(flag)
        value = _coerce(flag, value)
        cfg[flag] = FLAGS[flag][1] if value is None else value
    cfg["by_subject"] = bool(getattr(ns, "by_subject", False))
    return cfg


def _int_list(text: str, what: str) -> list[int]:
    """``"100..800"`` (step 100), ``"100..800:50"`` or ``"100,200,300"``."""
    try:
        if ".." in text:
            rng, _, step = text.partition(":")
            lo, hi = (int(v) for v in rng.split(".."))
            step = int(step) if step else 100
            return list(range(lo, hi + 1, step))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse {what} list {text!r}") from None


def _require(cfg: dict, *names: str) -> None:
    for n in names:
        if cfg.get(n) is None:
            raise ConfigError(f"--{n.replace('_', '-')} is required")


def _require_file(path: Path | None, what: str) -> Path:
    if path is None:
        raise ConfigError(f"--{what} is required")
    if not Path(path).exists():
        raise MissingInput(f"{what} not found: {path}")
    return Path(path)


def _joint_map(cfg: dict) -> JointMap | None:
    return JointMap.load(cfg["joint_map"]) if cfg.get("joint_map") else None


def _featurize(cfg: dict):
    manifest = _require_file(cfg["manifest"], "manifest")
    activity_map = None
    if cfg.get("activity_map") is not None:
        from .ingest import load_activity_map

        activity_map = load_activity_map(_require_file(cfg["activity_map"], "activity-map"))
    try:
        return featurize_manifest(manifest, _joint_map(cfg), cfg["conf_threshold"], activity_map, cfg["fps"])
    except FileNotFoundError as exc:
        raise MissingInput(f"keypoint file not found: {exc.filename}") from None


def _out_dir(cfg: dict) -> Path:
    _require(cfg, "out")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_run_record(out: Path, command: str, cfg: dict, extra: dict | None = None) -> None:
    record = {
        "command": command,
        "prefall_version": __version__,
        "kernel_backend": BACKEND,
        "format_versions": FORMAT_VERSIONS,
        "seed": cfg.get("seed"),
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(cfg.items())},
    }
    if extra:
        record.update(extra)
    (out / "run.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _options(cfg: dict) -> TrainOptions:
    return TrainOptions(
        batch_size=cfg["batch"], epochs=cfg["epochs"], patience=cfg["patience"], lr=cfg["lr"], seed=cfg["seed"]
    )


def _windows_split(cfg: dict):
    seqs = _featurize(cfg)
    samples, skipped = build_windows(seqs, cfg["lead_ms"] / 1000, cfg["k"], cfg["seed"])
    for sid, why in skipped:
        logger.warning("skipped %s: %s", sid, why)
    if not samples:
        raise ExtractionError("no window could be extracted from any sequence")
    return samples, collate_split(samples, cfg["ratio"], cfg["seed"], by_subject=cfg["by_subject"])


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_synth(cfg: dict) -> int:
    out = _out_dir(cfg)
    template = SynthSpec(
        fps=cfg["fps"] or 18.0,
        duration_s=cfg["duration_ms"] / 1000,
        impact_time_s=cfg["impact_ms"] / 1000,
        deviation_amplitude=cfg["amplitude"],
        onset_lead_s=cfg["onset_ms"] / 1000,
        noise_stddev=cfg["noise"],
        sway_amplitude=cfg["sway"],
    )
    manifest, entries = gen_corpus(out, cfg["n_fall"], cfg["n_nonfall"], cfg["seed"], template)
    write_run_record(out, "synth", cfg)
    print(f"wrote {len(entries)} sequences, manifest {manifest}")
    return EXIT_OK


def cmd_extract(cfg: dict) -> int:
    seqs = _featurize(cfg)
    out = _out_dir(cfg)
    write_feature_csv(out / "features.csv", seqs)
    write_run_record(out, "extract", cfg)
    print(f"wrote features for {len(seqs)} sequences to {out / 'features.csv'}")
    return EXIT_OK


def cmd_stats(cfg: dict) -> int:
    seqs = _featurize(cfg)
    samples, skipped = build_windows(seqs, cfg["lead_ms"] / 1000, cfg["k"], cfg["seed"])
    groups = {}
    for lab in (Label.FALL, Label.NONFALL):
        sel = [s for s in samples if s.label is lab]
        if sel:
            groups[lab.text] = feature_stats(sel)
    if not groups:
        raise ExtractionError("no window could be extracted from any sequence")
    out = _out_dir(cfg)
    write_stats_csv(out / "stats.csv", groups)
    write_run_record(out, "stats", cfg, {"skipped": [s for s, _ in skipped]})
    for name, st in groups.items():
        print(f"{name}: IQR per feature (deg) " + " ".join(f"{v:.2f}" for v in st.iqr))
    return EXIT_OK


def cmd_dataset(cfg: dict) -> int:
    samples, split = _windows_split(cfg)
    out = _out_dir(cfg)
    write_dataset(out / "train.csv", split.train)
    write_dataset(out / "test.csv", split.test)
    write_run_record(out, "dataset", cfg, {"n_train": len(split.train), "n_test": len(split.test)})
    print(f"split: {len(split.train)} train / {len(split.test)} test")
    return EXIT_OK


def _dataset_files(path: Path) -> tuple[Path, Path]:
    path = _require_file(path, "dataset")
    if path.is_dir():
        return path / "train.csv", path / "test.csv"
    return path, path.with_name("test.csv")


def cmd_train(cfg: dict) -> int:
    if cfg["dataset"] is not None:
        train_path, test_path = _dataset_files(cfg["dataset"])
        train_set = read_dataset(_require_file(train_path, "dataset"))
        test_set = read_dataset(test_path) if test_path.exists() and test_path != train_path else []
        if train_set:
            cfg["k"] = train_set[0].K
    else:
        _, split = _windows_split(cfg)
        train_set, test_set = split.train, split.test
    net_cfg = NetConfig(hidden_units=cfg["hidden"], K=cfg["k"])
    run = train(train_set, net_cfg, _options(cfg))
    out = _out_dir(cfg)
    save_model(run.params, net_cfg, out / "model.bin")
    with (out / "loss.csv").open("w", encoding="utf-8") as fh:
        fh.write("epoch,mean_nll\n")
        fh.writelines(f"{i},{v:.10f}\n" for i, v in enumerate(run.loss_history))
    extra = {"epochs_run": run.epochs, "n_train": len(train_set), "n_test": len(test_set)}
    if test_set:
        report = evaluate(run.params, net_cfg, test_set)
        (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
        (out / "metrics.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        print(report.to_text(), end="")
    write_run_record(out, "train", cfg, extra)
    print(f"trained {run.epochs} epochs; model written to {out / 'model.bin'}")
    return EXIT_OK


def cmd_eval(cfg: dict) -> int:
    params, net_cfg = load_model(_require_file(cfg["model"], "model"))
    if cfg["dataset"] is not None:
        path = _require_file(cfg["dataset"], "dataset")
        test_set = read_dataset(path / "test.csv" if path.is_dir() else path)
    else:
        cfg["k"] = net_cfg.K
        _, split = _windows_split(cfg)
        test_set = split.test
    report = evaluate(params, net_cfg, test_set)
    text = report.to_text()
    if cfg["out"] is not None:
        out = _out_dir(cfg)
        (out / "report.txt").write_text(text, encoding="utf-8")
        (out / "metrics.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        write_run_record(out, "eval", cfg)
    print(text, end="")
    return EXIT_OK


def cmd_sweep(cfg: dict) -> int:
    leads = [ms / 1000 for ms in _int_list(cfg["leads"], "lead")]
    ks = _int_list(cfg["ks"], "K")
    if not leads or not ks:
        raise ConfigError("sweep needs at least one lead and one K")
    if cfg["seeds"] < 1:
        raise ConfigError("--seeds must be >= 1")
    seeds = list(range(cfg["seed"], cfg["seed"] + cfg["seeds"]))
    seqs = _featurize(cfg)
    result = sweep(
        seqs, [(lead, K) for lead in leads for K in ks], seeds,
        hidden_units=cfg["hidden"], options=_options(cfg), ratio=cfg["ratio"],
        by_subject=cfg["by_subject"], jobs=cfg["jobs"],
    )
    out = _out_dir(cfg)
    result.write_csv(out / "sweep.csv")
    result.write_summary_csv(out / "summary.csv")
    write_run_record(out, "sweep", cfg, {"seeds": seeds, "mode": result.mode,
                                         "infeasible": [[r.lead_ms, r.K, r.seed, r.note] for r in result.rows if not r.feasible]})
    print(f"{result.mode}")
    for s in result.summary():
        print(f"lead {s['lead_ms']:>4d} ms  K {s['K']:>3d}  macro F1 {s['macro_f1_mean']:.4f} "
              f"[{s['macro_f1_min']:.4f}, {s['macro_f1_max']:.4f}]  n={s['n_seeds']}")
    return EXIT_OK


def _write_alerts(path: Path, result) -> None:
    with path.open("w", encoding="utf-8") as fh:
        fh.write("frame,label,logprob_fall\n")
        for e in result.emissions:
            fh.write(f"{e.window_end_frame},{e.label.text},{e.logprob_fall:.6f}\n")


def cmd_infer(cfg: dict) -> int:
    params, net_cfg = load_model(_require_file(cfg["model"], "model"))
    if cfg["keypoints"] is not None:
        seq = parse_keypoint_file(_require_file(cfg["keypoints"], "keypoints"))
        if cfg["fps"] is not None:
            from dataclasses import replace

            seq = replace(seq, fps=cfg["fps"])
        seqs = [sequence_features(seq, _joint_map(cfg), cfg["conf_threshold"])]
    else:
        seqs = _featurize(cfg)
    out = _out_dir(cfg)
    summary = {}
    for fs in seqs:
        result = infer_stream(params, net_cfg, fs, cfg["stride"])
        name = "alerts.csv" if len(seqs) == 1 else f"alerts_{fs.sequence_id}.csv"
        _write_alerts(out / name, result)
        first = result.first_fall()
        summary[fs.sequence_id] = {
            "emissions": len(result.emissions),
            "skipped": len(result.skipped),
            "first_fall_frame": None if first is None else first.window_end_frame,
        }
        print(f"{fs.sequence_id}: {len(result.emissions)} windows, {len(result.skipped)} skipped, "
              f"first fall alert at frame {summary[fs.sequence_id]['first_fall_frame']}")
    write_run_record(out, "infer", cfg, {"sequences": summary})
    return EXIT_OK


def cmd_info(cfg: dict) -> int:
    if cfg["model"] is not None:
        params, net_cfg = load_model(_require_file(cfg["model"], "model"))
        scale = params.input_scale
    else:
        net_cfg = NetConfig(hidden_units=cfg["hidden"], K=cfg["k"])
        scale = None
    count, nbytes = param_count(net_cfg)
    print(f"input_dim     {net_cfg.input_dim}")
    print(f"hidden_units  {net_cfg.hidden_units}")
    print(f"num_classes   {net_cfg.num_classes}")
    print(f"window K      {net_cfg.K}")
    if scale is not None:
        print(f"input_scale   {scale} deg/unit")
    print(f"parameters    {count}")
    print(f"bytes (f32)   {nbytes}")
    print(f"published bytes (not asserted)       {PUBLISHED_BYTES}")
    print(f"smallest baseline bytes              {SMALLEST_BASELINE_BYTES} ({SMALLEST_BASELINE_BYTES / nbytes:.1f}x larger)")
    print(f"kernel backend {BACKEND}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth, "extract": cmd_extract, "stats": cmd_stats, "dataset": cmd_dataset,
    "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep, "infer": cmd_infer, "info": cmd_info,
}


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, FormatVersionError):
        return EXIT_FORMAT_VERSION
    if isinstance(exc, (MissingInput, FileNotFoundError)):
        return EXIT_MISSING_INPUT
    if isinstance(exc, (ParseError, StructureError, AnnotationError, MappingError, ModelFormatError)):
        return EXIT_DATA
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, ExtractionError):
        return EXIT_EXTRACTION
    return EXIT_ERROR


def run(argv: list[str] | None = None) -> int:
    ns = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(ns)
        code = COMMANDS[ns.command]({**cfg})
    except (PrefallError, FileNotFoundError) as exc:
        code = exit_code_for(exc)
        kind = type(exc).__name__
        print(f"prefall {ns.command}: error [{kind}]: {exc}", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
