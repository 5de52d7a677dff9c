"""Command-line entry point tying the pipeline together.

Subcommands: preprocess, cmc, classify, sweep, synth-validate,
synth-dataset, validate-dataset. Every run resolves its configuration from
defaults, an optional JSON config file and command-line overrides (in that
order), writes the resolved snapshot as ``config.json`` next to its outputs,
and writes all outputs atomically so a re-run from the snapshot reproduces
them byte for byte.
"""

import argparse
import concurrent.futures
import csv
import io
import json
import sys
from dataclasses import dataclass, asdict, fields
from pathlib import Path

import numpy as np

from . import experiment, ingest
from .experiment import (PipelineConfig, TaskSpec, atomic_write_text,
                         compute_feature_table, emit_report, render_cell_rows,
                         render_sweep_rows, run_cell_from_table, run_sweep,
                         InsufficientDataError)
from .ingest import DatasetValidationError, load_dataset, validate_against_paper
from .segmentation import (Condition, NoActivationError, OutOfBoundsError,
                           compute_threshold, extract_segment, find_activation,
                           reject_artifacts)
from .sigcore import BandPassSpec, bandpass, moving_average, rectify
from .spectral import cmc, render_stats_csv, trial_stats, welch_spectra
from .svm import KernelSpec
from .synth import (CouplingModel, estimate_mean_cmc, noise_var_for_coherence,
                    theoretical_coherence, two_class_weight_dataset)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run settings; serializable so a run can be replayed."""

    dataset: str | None = None
    out: str | None = None
    task: str = "light_vs_heavy"
    eeg_channel: str = "C3"
    durations: tuple[float, ...] = (1.0, 2.0, 4.0)
    kernels: tuple[str, ...] = ("linear", "rbf")
    c: float = 1.0
    gamma: float | None = None
    cv_folds: int = 5
    cv_reps: int = 10
    seed: int = 12345
    z_max: float = 5.0
    band_stat: str = "mean"
    band_lo: float = 3.0
    band_hi: float = 80.0
    filter_order: int = 4
    envelope_window_s: float = 0.4
    win_s: float = 0.5
    overlap: float = 0.5
    jobs: int = 1
    # Synthetic-data settings (synth-validate and synth-dataset).
    synth_band: tuple[float, float] = (15.0, 35.0)
    synth_target: float = 0.8
    synth_trials: int = 200
    synth_dur_s: float = 4.0
    synth_noise_scales: tuple[float, ...] = (0.25, 1.0, 4.0)
    synth_gamma2_light: float = 0.7
    synth_gamma2_heavy: float = 0.2
    synth_trials_per_class: int = 60
    synth_trial_len_s: float = 7.0
    synth_muscles: tuple[str, ...] = ("BR", "FDI")

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            band=BandPassSpec(self.band_lo, self.band_hi, self.filter_order),
            envelope_window_s=self.envelope_window_s,
            win_s=self.win_s, overlap=self.overlap,
            band_stat=self.band_stat, z_max=self.z_max,
            c=self.c, gamma=self.gamma,
            cv_folds=self.cv_folds, cv_reps=self.cv_reps,
            master_seed=self.seed)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


_LIST_FIELDS = {"durations", "kernels", "synth_noise_scales", "synth_muscles",
                "synth_band"}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {f.name: f.default for f in fields(RunConfig)}
    if getattr(args, "config", None):
        loaded = json.loads(Path(args.config).read_text())
        unknown = set(loaded) - set(values)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for name in values:
        given = getattr(args, name, None)
        if given is not None:
            values[name] = given
    for name in _LIST_FIELDS:
        if isinstance(values[name], (list, tuple)):
            values[name] = tuple(values[name])
    return RunConfig(**values)


def atomic_write_bytes(path, payload: bytes) -> None:
    import os
    import tempfile
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _save_npy(path, array: np.ndarray) -> None:
    buf = io.BytesIO()
    np.save(buf, array)
    atomic_write_bytes(path, buf.getvalue())


def _write_json(path, payload) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _out_dir(cfg: RunConfig, required: bool = True) -> Path | None:
    if cfg.out is None:
        if required:
            raise ValueError("an output directory is required (--out)")
        return None
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot(cfg: RunConfig, out: Path) -> None:
    atomic_write_text(out / "config.json", cfg.to_json())


def _load(cfg: RunConfig) -> ingest.Dataset:
    if cfg.dataset is None:
        raise ValueError("a dataset directory is required (--dataset)")
    if not Path(cfg.dataset).exists():
        raise FileNotFoundError(f"dataset path does not exist: {cfg.dataset}")
    return load_dataset(cfg.dataset)


def _kernel(cfg: RunConfig, kind: str) -> KernelSpec:
    return KernelSpec(kind, cfg.gamma if kind == "rbf" else None)


# ---------------------------------------------------------------------------
# Subcommands.

def cmd_validate_dataset(cfg: RunConfig) -> int:
    try:
        dataset = _load(cfg)
    except DatasetValidationError as exc:
        for line in exc.errors:
            print(f"invalid: {line}")
        return 1
    report = validate_against_paper(dataset.manifest)
    print(f"dataset ok: {len(dataset.manifest.trials)} trials, "
          f"{len(dataset.manifest.eeg_channels)} EEG + "
          f"{len(dataset.manifest.emg_channels)} EMG channels "
          f"at {dataset.manifest.fs:g} Hz")
    for name in ("light", "heavy", "sandpaper", "silk"):
        entry = report[name]
        status = "match" if entry["match"] else "DEVIATION"
        print(f"  {name}: expected {entry['expected']}, "
              f"found {entry['actual']} ({status})")
    if cfg.out is not None:
        out = _out_dir(cfg)
        _write_json(out / "validation.json", report)
    return 0


def _segment_trial(dataset, trial, muscle, dur_s, cfg: RunConfig, pipe):
    eeg = bandpass(dataset.trial_channel(trial, cfg.eeg_channel), pipe.band)
    emg = bandpass(dataset.trial_channel(trial, muscle), pipe.band)
    envelope = moving_average(rectify(emg), pipe.envelope_window_s)
    interval = find_activation(envelope, compute_threshold(envelope))
    return extract_segment(eeg, emg, interval.t0, dur_s,
                           Condition(trial.weight_g, trial.surface),
                           trial.trial_id)


def cmd_preprocess(cfg: RunConfig) -> int:
    dataset = _load(cfg)
    out = _out_dir(cfg)
    _snapshot(cfg, out)
    pipe = cfg.pipeline()
    index = []
    rejections = []
    for dur_s in cfg.durations:
        for muscle in dataset.manifest.emg_channels:
            segments = []
            for trial in dataset.trials:
                try:
                    segments.append(_segment_trial(dataset, trial, muscle,
                                                   dur_s, cfg, pipe))
                except (NoActivationError, OutOfBoundsError) as exc:
                    rejections.append((trial.trial_id, muscle, dur_s, str(exc)))
            if not segments:
                continue
            kept = reject_artifacts(segments, cfg.z_max)
            kept_ids = {s.trial_id for s in kept}
            rejections.extend((s.trial_id, muscle, dur_s, "artifact amplitude")
                              for s in segments if s.trial_id not in kept_ids)
            subdir = out / "segments" / f"{muscle}_d{dur_s:g}s"
            for seg in kept:
                stem = f"trial{seg.trial_id:04d}"
                _save_npy(subdir / f"{stem}_eeg.npy", seg.eeg.samples)
                _save_npy(subdir / f"{stem}_emg.npy", seg.emg.samples)
                index.append({
                    "trial_id": seg.trial_id, "muscle": muscle,
                    "dur_s": dur_s, "weight_g": seg.condition.weight_g,
                    "surface": seg.condition.surface,
                    "n_samples": len(seg.eeg),
                    "eeg_file": str(Path("segments") / subdir.name / f"{stem}_eeg.npy"),
                    "emg_file": str(Path("segments") / subdir.name / f"{stem}_emg.npy"),
                })
    index.sort(key=lambda e: (e["dur_s"], e["muscle"], e["trial_id"]))
    _write_json(out / "segments" / "index.json", index)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["trial_id", "muscle", "dur_s", "reason"])
    for trial_id, muscle, dur_s, reason in sorted(
            rejections, key=lambda r: (r[2], r[1], r[0])):
        writer.writerow([trial_id, muscle, f"{dur_s:g}", reason])
    atomic_write_text(out / "rejection_log.csv", buf.getvalue())
    print(f"kept {len(index)} segments, rejected {len(rejections)}")
    _write_json(out / "run_status.json", {"status": "ok", "command": "preprocess"})
    return 0


def cmd_cmc(cfg: RunConfig) -> int:
    dataset = _load(cfg)
    out = _out_dir(cfg)
    _snapshot(cfg, out)
    pipe = cfg.pipeline()
    (attr_neg, val_neg, name_neg), (attr_pos, val_pos, name_pos) = \
        experiment.TASK_CLASSES[cfg.task]
    written = 0
    for dur_s in cfg.durations:
        for muscle in dataset.manifest.emg_channels:
            per_class = {name_neg: [], name_pos: []}
            psd = {name_neg: ([], []), name_pos: ([], [])}
            for trial, label in experiment.label_trials(dataset, cfg.task):
                try:
                    seg = _segment_trial(dataset, trial, muscle, dur_s, cfg, pipe)
                except (NoActivationError, OutOfBoundsError):
                    continue
                sx, sy, sxy = welch_spectra(seg.eeg, seg.emg, cfg.win_s,
                                            cfg.overlap)
                name = name_neg if label < 0 else name_pos
                per_class[name].append(cmc(sx, sy, sxy))
                psd[name][0].append(sx)
                psd[name][1].append(sy)
            for name, spectra in per_class.items():
                if not spectra:
                    continue
                base = f"{cfg.task}_{name}_{muscle}_d{dur_s:g}s"
                _write_stats(out / "cmc" / f"cmc_{base}.csv", trial_stats(spectra))
                _write_stats(out / "cmc" / f"psd_eeg_{base}.csv",
                             trial_stats(psd[name][0]))
                _write_stats(out / "cmc" / f"psd_emg_{base}.csv",
                             trial_stats(psd[name][1]))
                written += 3
    print(f"wrote {written} spectra files to {out / 'cmc'}")
    _write_json(out / "run_status.json", {"status": "ok", "command": "cmc"})
    return 0


def _write_stats(path, stats) -> None:
    atomic_write_text(path, render_stats_csv(stats))


def _classify_duration(dataset_root: str, cfg_dict: dict, dur_s: float):
    """One duration's worth of classification cells (parallelizable unit)."""
    cfg = RunConfig(**cfg_dict)
    dataset = load_dataset(dataset_root)
    pipe = cfg.pipeline()
    muscles = tuple(dataset.manifest.emg_channels)
    table = compute_feature_table(dataset, cfg.task, dur_s, muscles, pipe,
                                  cfg.eeg_channel)
    subsets = [(m,) for m in muscles]
    if len(muscles) > 1:
        subsets.append(muscles)
    results, statuses = [], []
    for kind in cfg.kernels:
        for subset in subsets:
            spec = TaskSpec(cfg.task, subset, dur_s, _kernel(cfg, kind),
                            cfg.eeg_channel)
            try:
                results.append((spec, run_cell_from_table(table, spec, pipe)))
            except InsufficientDataError as exc:
                statuses.append({"task": spec.task, "muscles": spec.muscles_label,
                                 "dur_s": dur_s, "kernel": kind,
                                 "status": f"insufficient data: {exc}"})
    return results, statuses


def _cell_sort_key(item):
    spec, _ = item
    return (spec.task, spec.muscles_label, spec.dur_s, spec.kernel.kind)


def cmd_classify(cfg: RunConfig) -> int:
    _load(cfg)   # fail early with validation context
    out = _out_dir(cfg)
    _snapshot(cfg, out)
    cfg_dict = asdict(cfg)
    jobs = [(cfg.dataset, cfg_dict, d) for d in cfg.durations]
    if cfg.jobs > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            outputs = list(ex.map(_classify_duration_star, jobs))
    else:
        outputs = [_classify_duration(*j) for j in jobs]
    results = sorted((r for o in outputs for r in o[0]), key=_cell_sort_key)
    statuses = [s for o in outputs for s in o[1]]
    emit_report(render_cell_rows(results), out / "report.csv")
    summary = {
        "cells": [{
            "task": spec.task, "muscles": spec.muscles_label,
            "dur_s": spec.dur_s, "kernel": spec.kernel.kind,
            "mean_accuracy": report.mean, "std_accuracy": report.std,
            "balanced_accuracy": report.balanced_mean,
            "folds": report.k, "reps": report.reps, "seed": report.seed,
        } for spec, report in results],
        "insufficient": statuses,
    }
    _write_json(out / "summary.json", summary)
    for cell in summary["cells"]:
        print(f"{cell['task']} {cell['muscles']:>18} {cell['dur_s']:g}s "
              f"{cell['kernel']:>6}: accuracy {cell['mean_accuracy']:.4f} "
              f"+/- {cell['std_accuracy']:.4f}")
    for status in statuses:
        print(f"{status['task']} {status['muscles']} {status['dur_s']:g}s "
              f"{status['kernel']}: {status['status']}")
    _write_json(out / "run_status.json", {"status": "ok", "command": "classify"})
    return 0


def _classify_duration_star(args):
    return _classify_duration(*args)


def _sweep_one(dataset_root: str, cfg_dict: dict, dur_s: float, kind: str):
    cfg = RunConfig(**cfg_dict)
    dataset = load_dataset(dataset_root)
    return run_sweep(dataset, cfg.task, dur_s, _kernel(cfg, kind),
                     cfg.pipeline(), eeg_channel=cfg.eeg_channel)


def _sweep_one_star(args):
    return _sweep_one(*args)


def cmd_sweep(cfg: RunConfig) -> int:
    _load(cfg)
    out = _out_dir(cfg)
    _snapshot(cfg, out)
    cfg_dict = asdict(cfg)
    jobs = [(cfg.dataset, cfg_dict, d, k)
            for d in cfg.durations for k in cfg.kernels]
    if cfg.jobs > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            reports = list(ex.map(_sweep_one_star, jobs))
    else:
        reports = [_sweep_one(*j) for j in jobs]
    summary = []
    for report in reports:
        base = f"{report.task}_d{report.dur_s:g}s_{report.kernel.kind}"
        emit_report(render_sweep_rows(report), out / f"sweep_{base}.csv")
        cells = [(TaskSpec(report.task, e.muscles, report.dur_s, report.kernel),
                  e.report) for e in report.entries]
        emit_report(render_cell_rows(sorted(cells, key=_cell_sort_key)),
                    out / f"sweep_cells_{base}.csv")
        for row in report.aggregate():
            summary.append({"task": report.task, "dur_s": report.dur_s,
                            "kernel": report.kernel.kind, **row})
            print(f"{report.task} {report.dur_s:g}s {report.kernel.kind} "
                  f"size {row['size']}: mean {row['mean']:.4f} "
                  f"+/- {row['std']:.4f}, best {row['best_subset']} "
                  f"at {row['best_accuracy']:.4f}")
    _write_json(out / "summary.json", summary)
    _write_json(out / "run_status.json", {"status": "ok", "command": "sweep"})
    return 0


def cmd_synth_validate(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    _snapshot(cfg, out)
    band = cfg.synth_band
    f0 = (band[0] + band[1]) / 2.0
    fs = 500.0
    base_nv = noise_var_for_coherence(1.0, band, fs, f0, cfg.synth_target,
                                      cfg.filter_order)
    model = CouplingModel(gain=1.0, coupling_band=band, noise_var=base_nv,
                          fs=fs, seed=cfg.seed, filter_order=cfg.filter_order)
    freqs, est, n_sub = estimate_mean_cmc(model, cfg.synth_trials,
                                          cfg.synth_dur_s, cfg.win_s,
                                          cfg.overlap)
    theo = theoretical_coherence(model, freqs)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["freq_hz", "estimated_mean_cmc", "theoretical", "abs_error"])
    for f, e, t in zip(freqs, est, theo):
        writer.writerow([repr(float(f)), repr(float(e)), repr(float(t)),
                         repr(abs(float(e) - float(t)))])
    atomic_write_text(out / "oracle_comparison.csv", buf.getvalue())

    f0_bin = int(np.argmin(np.abs(freqs - f0)))
    err_f0 = abs(float(est[f0_bin] - theo[f0_bin]))
    grid_means = []
    for scale in cfg.synth_noise_scales:
        noisier = CouplingModel(gain=1.0, coupling_band=band,
                                noise_var=base_nv * scale, fs=fs,
                                seed=cfg.seed + 1,
                                filter_order=cfg.filter_order)
        _, est_i, _ = estimate_mean_cmc(noisier, max(cfg.synth_trials // 4, 20),
                                        cfg.synth_dur_s, cfg.win_s, cfg.overlap)
        grid_means.append(float(est_i[f0_bin]))
    monotone = all(a > b for a, b in zip(grid_means, grid_means[1:]))
    ok = err_f0 <= 0.05 and monotone
    _write_json(out / "synth_validation.json", {
        "target_coherence": cfg.synth_target,
        "f0_hz": float(freqs[f0_bin]),
        "subwindows": n_sub,
        "trials": cfg.synth_trials,
        "error_at_f0": err_f0,
        "noise_scales": list(cfg.synth_noise_scales),
        "grid_means_at_f0": grid_means,
        "monotone_decreasing": monotone,
        "pass": ok,
    })
    print(f"estimated {est[f0_bin]:.4f} vs theoretical {theo[f0_bin]:.4f} "
          f"at {freqs[f0_bin]:.2f} Hz (error {err_f0:.4f}, "
          f"{'ok' if err_f0 <= 0.05 else 'FAIL'})")
    print(f"noise grid means at f0: "
          + ", ".join(f"{m:.4f}" for m in grid_means)
          + (" (monotone ok)" if monotone else " (NOT monotone)"))
    _write_json(out / "run_status.json",
                {"status": "ok" if ok else "failed", "command": "synth-validate"})
    return 0 if ok else 1


def cmd_synth_dataset(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    manifest = two_class_weight_dataset(
        out, cfg.synth_gamma2_light, cfg.synth_gamma2_heavy,
        cfg.synth_trials_per_class, emg_channels=cfg.synth_muscles,
        band=cfg.synth_band, seed=cfg.seed,
        trial_len_s=cfg.synth_trial_len_s)
    print(f"wrote synthetic dataset with {len(manifest.trials)} trials "
          f"({len(manifest.emg_channels)} EMG channels) to {out}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing.

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--dataset", help="dataset directory")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--jobs", type=int, help="max parallel workers")
    parser.add_argument("--task", choices=experiment.TASKS)
    parser.add_argument("--eeg-channel", dest="eeg_channel")
    parser.add_argument("--durations", type=_float_list,
                        help="comma-separated durations in seconds, e.g. 1,2,4")
    parser.add_argument("--kernels", type=_str_list,
                        help="comma-separated kernel kinds, e.g. linear,rbf")
    parser.add_argument("--c", type=float, help="SVM regularization C")
    parser.add_argument("--gamma", type=float, help="RBF gamma (default: auto)")
    parser.add_argument("--cv-folds", dest="cv_folds", type=int)
    parser.add_argument("--cv-reps", dest="cv_reps", type=int)
    parser.add_argument("--z-max", dest="z_max", type=float,
                        help="artifact rejection threshold (robust sigmas)")
    parser.add_argument("--band-stat", dest="band_stat",
                        choices=["mean", "max"])
    parser.add_argument("--band-lo", dest="band_lo", type=float)
    parser.add_argument("--band-hi", dest="band_hi", type=float)
    parser.add_argument("--filter-order", dest="filter_order", type=int)
    parser.add_argument("--envelope-window", dest="envelope_window_s", type=float)
    parser.add_argument("--win-s", dest="win_s", type=float)
    parser.add_argument("--overlap", type=float)


def _add_synth(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--synth-band", dest="synth_band", type=_float_list)
    parser.add_argument("--synth-target", dest="synth_target", type=float)
    parser.add_argument("--synth-trials", dest="synth_trials", type=int)
    parser.add_argument("--synth-dur", dest="synth_dur_s", type=float)
    parser.add_argument("--synth-gamma2-light", dest="synth_gamma2_light",
                        type=float)
    parser.add_argument("--synth-gamma2-heavy", dest="synth_gamma2_heavy",
                        type=float)
    parser.add_argument("--synth-trials-per-class",
                        dest="synth_trials_per_class", type=int)
    parser.add_argument("--synth-trial-len", dest="synth_trial_len_s",
                        type=float)
    parser.add_argument("--synth-muscles", dest="synth_muscles",
                        type=_str_list)


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v)


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


_COMMANDS = {
    "validate-dataset": cmd_validate_dataset,
    "preprocess": cmd_preprocess,
    "cmc": cmd_cmc,
    "classify": cmd_classify,
    "sweep": cmd_sweep,
    "synth-validate": cmd_synth_validate,
    "synth-dataset": cmd_synth_dataset,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmcgrasp",
        description="EEG/EMG coherence features and grasp-condition "
                    "classification")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "validate-dataset": "validate a canonical dataset directory",
        "preprocess": "extract per-(trial, muscle, duration) segments",
        "cmc": "export mean/std CMC and power spectra as CSV",
        "classify": "cross-validated accuracy per muscle and kernel",
        "sweep": "exhaustive muscle-combination sweep",
        "synth-validate": "compare the estimator against the synthetic oracle",
        "synth-dataset": "emit a labeled synthetic dataset",
    }
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=helps[name])
        _add_common(p)
        _add_synth(p)
        p.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return 2
    try:
        return args.handler(cfg)
    except DatasetValidationError as exc:
        print(f"error [dataset]: {exc}", file=sys.stderr)
    except (ValueError, OSError) as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
    if cfg.out is not None and Path(cfg.out).is_dir():
        _write_json(Path(cfg.out) / "run_status.json",
                    {"status": "failed", "stage": args.command})
    return 1


if __name__ == "__main__":
    sys.exit(main())
