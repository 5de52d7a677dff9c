"""Study orchestration: per-muscle accuracy cells and muscle-combination sweeps.

A "cell" is one (task, muscle subset, duration, kernel) combination. Cells
share the per-muscle feature extraction, so the sweep computes every
muscle's 8 band features once per (task, duration) and assembles the 31
subsets from that table.
"""

import csv
import hashlib
import io
import itertools
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import Dataset, TrialInfo
from .segmentation import (Condition, NoActivationError, OutOfBoundsError,
                           compute_threshold, extract_segment,
                           find_activation, reject_artifacts, ENVELOPE_WINDOW_S)
from .sigcore import BandPassSpec, DEFAULT_BAND, bandpass, moving_average, rectify
from .spectral import (BandDef, DEFAULT_BANDS, DEFAULT_OVERLAP, DEFAULT_WIN_S,
                       band_features, cmc, welch_spectra)
from .svm import CvReport, KernelSpec, Sample, cross_validate

# Canonical muscle order for feature concatenation (alphabetical).
MUSCLES = ("AD", "BR", "CED", "FD", "FDI")

TASKS = ("light_vs_heavy", "sandpaper_vs_silk")

# Class label conventions per task: (negative class, positive class).
TASK_CLASSES = {
    "light_vs_heavy": (("weight_g", 165, "light"), ("weight_g", 660, "heavy")),
    "sandpaper_vs_silk": (("surface", "sandpaper", "sandpaper"),
                          ("surface", "silk", "silk")),
}

CELL_CSV_HEADER = ["task", "muscles", "dur_s", "kernel", "fold", "accuracy"]
SWEEP_CSV_HEADER = ["size", "mean", "std", "best_subset", "best_accuracy"]


class InsufficientDataError(ValueError):
    """Too few trials per class for the cross-validation protocol."""


@dataclass(frozen=True)
class PipelineConfig:
    """Processing knobs shared by every cell of a run."""

    band: BandPassSpec = DEFAULT_BAND
    envelope_window_s: float = ENVELOPE_WINDOW_S
    win_s: float = DEFAULT_WIN_S
    overlap: float = DEFAULT_OVERLAP
    bands: tuple[BandDef, ...] = DEFAULT_BANDS
    band_stat: str = "mean"
    z_max: float = 5.0
    c: float = 1.0
    gamma: float | None = None
    cv_folds: int = 5
    cv_reps: int = 10
    master_seed: int = 12345


@dataclass(frozen=True)
class TaskSpec:
    """One classification cell."""

    task: str
    muscles: tuple[str, ...]
    dur_s: float
    kernel: KernelSpec
    eeg_channel: str = "C3"

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if not self.muscles:
            raise ValueError("muscle subset must be non-empty")
        ordered = tuple(sorted(set(self.muscles), key=_muscle_key))
        object.__setattr__(self, "muscles", ordered)

    @property
    def muscles_label(self) -> str:
        return "+".join(self.muscles)


def _muscle_key(name: str):
    # Canonical muscles sort by the fixed order; anything else alphabetically
    # after them (synthetic datasets may carry arbitrary channel names).
    return (MUSCLES.index(name), "") if name in MUSCLES else (len(MUSCLES), name)


def cell_seed(master_seed: int, task: str, muscles: Sequence[str],
              dur_s: float, kernel_kind: str) -> int:
    """Stable per-cell seed; adding cells never perturbs existing ones."""
    key = f"{master_seed}|{task}|{'+'.join(muscles)}|{dur_s:g}|{kernel_kind}"
    digest = hashlib.sha256(key.encode()).digest()
    return int.from_bytes(digest[:8], "little") & (2 ** 63 - 1)


def label_trials(dataset: Dataset, task: str) -> list[tuple[TrialInfo, int]]:
    """Trials relevant to the task with -1/+1 labels; others are excluded."""
    if task not in TASK_CLASSES:
        raise ValueError(f"unknown task {task!r}")
    (attr, neg_val, neg_name), (_, pos_val, pos_name) = TASK_CLASSES[task]
    labeled = []
    for trial in dataset.trials:
        value = getattr(trial, attr)
        if value == neg_val:
            labeled.append((trial, -1))
        elif value == pos_val:
            labeled.append((trial, +1))
    for want, name in ((-1, neg_name), (+1, pos_name)):
        if not any(lbl == want for _, lbl in labeled):
            raise ValueError(f"task {task}: no trials for class {name!r}")
    return labeled


@dataclass
class FeatureTable:
    """Per-muscle band features keyed by trial, plus the trial labels."""

    task: str
    dur_s: float
    muscles: tuple[str, ...]
    features: dict            # trial_id -> {muscle: np.ndarray of 8}
    labels: dict              # trial_id -> -1/+1
    dropped: list             # (trial_id, muscle, reason) diagnostics

    def samples_for(self, subset: Sequence[str]) -> list[Sample]:
        subset = tuple(sorted(subset, key=_muscle_key))
        samples = []
        for trial_id in sorted(self.features):
            per_muscle = self.features[trial_id]
            if all(m in per_muscle for m in subset):
                vec = np.concatenate([per_muscle[m] for m in subset])
                samples.append(Sample(vec, self.labels[trial_id]))
        return samples


def compute_feature_table(dataset: Dataset, task: str, dur_s: float,
                          muscles: Sequence[str], cfg: PipelineConfig,
                          eeg_channel: str = "C3") -> FeatureTable:
    """Run the signal pipeline and extract 8 band features per (trial, muscle).

    Per muscle: band-pass both channels inside the trial window, detect the
    activation interval on the smoothed rectified EMG, cut the duration
    window around its midpoint, reject artifact segments against the pooled
    population, then average the per-trial CMC over the eight bands.
    """
    muscles = tuple(sorted(set(muscles), key=_muscle_key))
    labeled = label_trials(dataset, task)
    features: dict[int, dict] = {}
    labels = {t.trial_id: lbl for t, lbl in labeled}
    dropped: list[tuple[int, str, str]] = []

    for muscle in muscles:
        segments = []
        for trial, _ in labeled:
            eeg = bandpass(dataset.trial_channel(trial, eeg_channel), cfg.band)
            emg = bandpass(dataset.trial_channel(trial, muscle), cfg.band)
            envelope = moving_average(rectify(emg), cfg.envelope_window_s)
            try:
                interval = find_activation(envelope, compute_threshold(envelope))
                segment = extract_segment(
                    eeg, emg, interval.t0, dur_s,
                    Condition(trial.weight_g, trial.surface), trial.trial_id)
            except (NoActivationError, OutOfBoundsError) as exc:
                dropped.append((trial.trial_id, muscle, str(exc)))
                continue
            segments.append(segment)
        if not segments:
            continue
        kept = reject_artifacts(segments, cfg.z_max)
        kept_ids = {s.trial_id for s in kept}
        dropped.extend((s.trial_id, muscle, "artifact amplitude")
                       for s in segments if s.trial_id not in kept_ids)
        for segment in kept:
            sx, sy, sxy = welch_spectra(segment.eeg, segment.emg,
                                        cfg.win_s, cfg.overlap)
            feats = band_features(cmc(sx, sy, sxy), cfg.bands, cfg.band_stat)
            features.setdefault(segment.trial_id, {})[muscle] = feats
    return FeatureTable(task=task, dur_s=dur_s, muscles=muscles,
                        features=features, labels=labels, dropped=dropped)


def run_cell_from_table(table: FeatureTable, spec: TaskSpec,
                        cfg: PipelineConfig) -> CvReport:
    samples = table.samples_for(spec.muscles)
    labels = [s.label for s in samples]
    for cls in (-1, 1):
        if labels.count(cls) < cfg.cv_folds:
            raise InsufficientDataError(
                f"cell ({spec.task}, {spec.muscles_label}, {spec.dur_s:g} s, "
                f"{spec.kernel.kind}): class {cls:+d} has {labels.count(cls)} "
                f"trials, fewer than {cfg.cv_folds} folds")
    seed = cell_seed(cfg.master_seed, spec.task, spec.muscles, spec.dur_s,
                     spec.kernel.kind)
    return cross_validate(samples, spec.kernel, c=cfg.c, k=cfg.cv_folds,
                          reps=cfg.cv_reps, seed=seed)


def run_cell(dataset: Dataset, spec: TaskSpec,
             cfg: PipelineConfig = PipelineConfig()) -> CvReport:
    """Full pipeline for one cell: features, then cross-validated accuracy."""
    kernel = spec.kernel if spec.kernel.gamma is not None else \
        KernelSpec(spec.kernel.kind, cfg.gamma)
    spec = TaskSpec(spec.task, spec.muscles, spec.dur_s, kernel,
                    spec.eeg_channel)
    table = compute_feature_table(dataset, spec.task, spec.dur_s, spec.muscles,
                                  cfg, spec.eeg_channel)
    return run_cell_from_table(table, spec, cfg)


@dataclass(frozen=True)
class SweepEntry:
    muscles: tuple[str, ...]
    report: CvReport

    @property
    def mean(self) -> float:
        return self.report.mean


@dataclass
class SweepReport:
    """Exhaustive muscle-combination sweep for one (task, duration, kernel)."""

    task: str
    dur_s: float
    kernel: KernelSpec
    entries: list        # SweepEntry, all non-empty subsets

    def by_size(self, size: int) -> list[SweepEntry]:
        return [e for e in self.entries if len(e.muscles) == size]

    def aggregate(self) -> list[dict]:
        """Per-size rows: mean/std over subsets plus the best subset."""
        rows = []
        sizes = sorted({len(e.muscles) for e in self.entries})
        for size in sizes:
            entries = self.by_size(size)
            means = np.array([e.mean for e in entries])
            best = max(entries, key=lambda e: (e.mean, tuple(e.muscles)))
            rows.append({
                "size": size,
                "mean": float(means.mean()),
                "std": float(means.std(ddof=0)),
                "best_subset": "+".join(best.muscles),
                "best_accuracy": float(best.mean),
            })
        return rows


def run_sweep(dataset: Dataset, task: str, dur_s: float, kernel: KernelSpec,
              cfg: PipelineConfig = PipelineConfig(),
              muscles: Sequence[str] | None = None,
              eeg_channel: str = "C3") -> SweepReport:
    """Evaluate every non-empty muscle subset (exhaustive enumeration).

    With the full five muscles that is 31 subsets, (5, 10, 10, 5, 1) per
    size. Features are computed once per muscle and reused by all subsets.
    """
    if muscles is None:
        muscles = [m for m in dataset.manifest.emg_channels]
    muscles = tuple(sorted(set(muscles), key=_muscle_key))
    kernel = kernel if kernel.gamma is not None or kernel.kind != "rbf" else \
        KernelSpec(kernel.kind, cfg.gamma)
    table = compute_feature_table(dataset, task, dur_s, muscles, cfg,
                                  eeg_channel)
    entries = []
    for size in range(1, len(muscles) + 1):
        for subset in itertools.combinations(muscles, size):
            spec = TaskSpec(task, subset, dur_s, kernel, eeg_channel)
            entries.append(SweepEntry(muscles=spec.muscles,
                                      report=run_cell_from_table(table, spec, cfg)))
    return SweepReport(task=task, dur_s=dur_s, kernel=kernel, entries=entries)


# ---------------------------------------------------------------------------
# Report emission. Files are written deterministically: identical inputs
# produce byte-identical output.

def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_cell_rows(cells: Sequence[tuple[TaskSpec, CvReport]]) -> str:
    """CSV text for per-fold accuracies of many cells."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CELL_CSV_HEADER)
    for spec, report in cells:
        for fold, acc in enumerate(report.fold_accuracies):
            writer.writerow([spec.task, spec.muscles_label,
                             _fmt(float(spec.dur_s)), spec.kernel.kind,
                             fold, _fmt(float(acc))])
    return buf.getvalue()


def render_sweep_rows(report: SweepReport) -> str:
    """CSV text of the per-size aggregate curve of a sweep."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_CSV_HEADER)
    for row in report.aggregate():
        writer.writerow([row["size"], _fmt(row["mean"]), _fmt(row["std"]),
                         row["best_subset"], _fmt(row["best_accuracy"])])
    return buf.getvalue()


def atomic_write_text(path, text: str) -> None:
    """Write text via a temp file and rename, so readers never see a torn file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_report(text: str, path) -> None:
    """Write report text atomically (temp file + rename)."""
    atomic_write_text(path, text)
