"""Canonical on-disk dataset format: JSON manifest + raw binary recordings.

A dataset directory holds ``manifest.json`` plus one binary file per
recording. The binary layout (all little-endian) is:

====== ======= =====================================
offset type    field
====== ======= =====================================
0      4 bytes magic ``b"CMCB"``
4      uint32  format version (currently 1)
8      uint32  channel count
12     uint64  sample count per channel
20     float32 data, channel-major (each channel's
               samples contiguous, channels in
               manifest order: EEG then EMG)
====== ======= =====================================

Labels live only in the manifest and are never inferred from the data.
"""

import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .sigcore import TimeSeries

MAGIC = b"CMCB"
BINARY_VERSION = 1
MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "cmcgrasp-dataset"
MANIFEST_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")

VALID_WEIGHTS = (165, 330, 660)
VALID_SURFACES = ("sandpaper", "suede", "silk")

# Channel-count contract of converted WAY-EEG-GAL data.
WAYGAL_EEG_COUNT = 32
WAYGAL_EMG_COUNT = 5
WAYGAL_FS = 500.0

PAPER_TRIAL_COUNTS = {"light": 84, "heavy": 57, "sandpaper": 51, "silk": 221}


class DatasetValidationError(Exception):
    """Validation failed; ``errors`` lists every problem found."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("dataset validation failed:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class RecordingInfo:
    id: str
    file: str
    n_samples: int


@dataclass(frozen=True)
class TrialInfo:
    trial_id: int
    recording: str
    start_s: float
    end_s: float
    weight_g: int
    surface: str


@dataclass
class DatasetManifest:
    kind: str
    subject: int
    fs: float
    eeg_channels: list[str]
    emg_channels: list[str]
    recordings: list[RecordingInfo]
    trials: list[TrialInfo]
    source_channel_names: dict | None = None

    @property
    def channels(self) -> list[str]:
        return list(self.eeg_channels) + list(self.emg_channels)

    def to_dict(self) -> dict:
        d = {
            "format": MANIFEST_FORMAT,
            "version": MANIFEST_VERSION,
            "kind": self.kind,
            "subject": self.subject,
            "fs": self.fs,
            "eeg_channels": list(self.eeg_channels),
            "emg_channels": list(self.emg_channels),
            "recordings": [asdict(r) for r in self.recordings],
            "trials": [asdict(t) for t in self.trials],
        }
        if self.source_channel_names is not None:
            d["source_channel_names"] = self.source_channel_names
        return d


def write_recording(path, data: np.ndarray) -> None:
    """Write one (n_channels, n_samples) array as a binary recording file."""
    data = np.asarray(data)
    if data.ndim != 2:
        raise ValueError("recording data must be 2-D (channels x samples)")
    payload = np.ascontiguousarray(data, dtype="<f4")
    header = _HEADER.pack(MAGIC, BINARY_VERSION, data.shape[0], data.shape[1])
    Path(path).write_bytes(header + payload.tobytes())


def read_recording_header(path) -> tuple[int, int]:
    """Return (n_channels, n_samples) after checking magic and version."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, n_channels, n_samples = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != BINARY_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    return n_channels, n_samples


def read_recording(path, lazy: bool = True) -> np.ndarray:
    """Load recording samples as an (n_channels, n_samples) float32 array.

    Lazy loads return a read-only memory map; both paths yield identical
    bytes.
    """
    n_channels, n_samples = read_recording_header(path)
    if lazy:
        return np.memmap(path, dtype="<f4", mode="r", offset=_HEADER.size,
                         shape=(n_channels, n_samples))
    data = np.fromfile(path, dtype="<f4", offset=_HEADER.size)
    if data.size != n_channels * n_samples:
        raise ValueError(f"{path}: payload size does not match header")
    return data.reshape(n_channels, n_samples)


def write_dataset(root, manifest: DatasetManifest,
                  recordings: dict[str, np.ndarray]) -> None:
    """Write manifest plus all recording binaries into a directory."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    by_id = {r.id: r for r in manifest.recordings}
    if set(by_id) != set(recordings):
        raise ValueError("recording ids in manifest and data do not match")
    for rec_id, data in recordings.items():
        write_recording(root / by_id[rec_id].file, data)
    text = json.dumps(manifest.to_dict(), indent=2, sort_keys=True)
    (root / MANIFEST_NAME).write_text(text + "\n")


@dataclass(frozen=True)
class TrialRecord:
    """All channels of one trial window plus its condition labels."""

    trial_id: int
    weight_g: int
    surface: str
    channels: dict

    def channel(self, name: str) -> TimeSeries:
        return self.channels[name]


def _parse_manifest(raw: dict, errors: list[str]) -> DatasetManifest | None:
    required = ["format", "version", "kind", "subject", "fs",
                "eeg_channels", "emg_channels", "recordings", "trials"]
    missing = [k for k in required if k not in raw]
    if missing:
        errors.append(f"manifest missing keys: {', '.join(missing)}")
        return None
    if raw["format"] != MANIFEST_FORMAT:
        errors.append(f"unknown manifest format {raw['format']!r}")
        return None
    if raw["version"] != MANIFEST_VERSION:
        errors.append(f"unsupported manifest version {raw['version']}")
        return None
    try:
        recordings = [RecordingInfo(**r) for r in raw["recordings"]]
        trials = [TrialInfo(**t) for t in raw["trials"]]
    except TypeError as exc:
        errors.append(f"malformed recording or trial entry: {exc}")
        return None
    return DatasetManifest(
        kind=raw["kind"], subject=raw["subject"], fs=raw["fs"],
        eeg_channels=list(raw["eeg_channels"]),
        emg_channels=list(raw["emg_channels"]),
        recordings=recordings, trials=trials,
        source_channel_names=raw.get("source_channel_names"))


def _validate(root: Path, m: DatasetManifest, errors: list[str]) -> None:
    if not m.fs > 0:
        errors.append(f"sampling rate must be positive, got {m.fs}")
    if m.kind not in ("waygal", "synthetic"):
        errors.append(f"unknown dataset kind {m.kind!r}")
    if m.kind == "waygal":
        if len(m.eeg_channels) != WAYGAL_EEG_COUNT:
            errors.append(f"expected {WAYGAL_EEG_COUNT} EEG channels, "
                          f"manifest declares {len(m.eeg_channels)}")
        if len(m.emg_channels) != WAYGAL_EMG_COUNT:
            errors.append(f"expected {WAYGAL_EMG_COUNT} EMG channels, "
                          f"manifest declares {len(m.emg_channels)}")
        if m.fs != WAYGAL_FS:
            errors.append(f"expected fs {WAYGAL_FS} Hz, manifest declares {m.fs}")
    names = m.channels
    if len(set(names)) != len(names):
        errors.append("duplicate channel names in manifest")

    n_by_rec = {}
    for rec in m.recordings:
        path = root / rec.file
        if not path.is_file():
            errors.append(f"recording {rec.id}: missing file {rec.file}")
            continue
        try:
            n_channels, n_samples = read_recording_header(path)
        except ValueError as exc:
            errors.append(f"recording {rec.id}: {exc}")
            continue
        if n_channels != len(names):
            errors.append(f"recording {rec.id}: file has {n_channels} channels, "
                          f"manifest declares {len(names)}")
        if n_samples != rec.n_samples:
            errors.append(f"recording {rec.id}: file has {n_samples} samples, "
                          f"manifest declares {rec.n_samples}")
        n_by_rec[rec.id] = rec.n_samples

    seen_ids = set()
    windows: dict[str, list[tuple[float, float, int]]] = {}
    for t in m.trials:
        if t.trial_id in seen_ids:
            errors.append(f"trial {t.trial_id}: duplicate trial_id")
        seen_ids.add(t.trial_id)
        if t.recording not in n_by_rec:
            if all(r.id != t.recording for r in m.recordings):
                errors.append(f"trial {t.trial_id}: unknown recording "
                              f"{t.recording!r}")
            continue
        if not t.start_s < t.end_s:
            errors.append(f"trial {t.trial_id}: window end {t.end_s} s not "
                          f"after start {t.start_s} s")
            continue
        dur_limit = n_by_rec[t.recording] / m.fs
        if t.start_s < 0 or t.end_s > dur_limit + 1e-9:
            errors.append(f"trial {t.trial_id}: window [{t.start_s}, {t.end_s}] s "
                          f"outside recording of {dur_limit:.3f} s")
        if t.weight_g not in VALID_WEIGHTS:
            errors.append(f"trial {t.trial_id}: unknown weight {t.weight_g} g")
        if t.surface not in VALID_SURFACES:
            errors.append(f"trial {t.trial_id}: unknown surface {t.surface!r}")
        windows.setdefault(t.recording, []).append((t.start_s, t.end_s, t.trial_id))
    for rec_id, spans in windows.items():
        spans.sort()
        for (s0, e0, id0), (s1, e1, id1) in zip(spans, spans[1:]):
            if s1 < e0:
                errors.append(f"trials {id0} and {id1} overlap in recording "
                              f"{rec_id}")


class Dataset:
    """Loaded dataset with per-trial channel access.

    Recordings are memory-mapped on first use unless the dataset was opened
    with ``eager=True``.
    """

    def __init__(self, root, manifest: DatasetManifest, eager: bool = False):
        self.root = Path(root)
        self.manifest = manifest
        self._eager = eager
        self._cache: dict[str, np.ndarray] = {}
        self._rec_by_id = {r.id: r for r in manifest.recordings}
        self._trial_by_id = {t.trial_id: t for t in manifest.trials}
        self._row = {name: i for i, name in enumerate(manifest.channels)}

    @property
    def trials(self) -> list[TrialInfo]:
        return list(self.manifest.trials)

    def _recording(self, rec_id: str) -> np.ndarray:
        if rec_id not in self._cache:
            rec = self._rec_by_id[rec_id]
            self._cache[rec_id] = read_recording(self.root / rec.file,
                                                 lazy=not self._eager)
        return self._cache[rec_id]

    def channel(self, rec_id: str, name: str) -> TimeSeries:
        """Full-recording series for one channel."""
        data = self._recording(rec_id)
        return TimeSeries(np.asarray(data[self._row[name]], dtype=np.float64),
                          self.manifest.fs, name)

    def trial_channel(self, trial: TrialInfo, name: str) -> TimeSeries:
        """One channel sliced to the trial window."""
        fs = self.manifest.fs
        data = self._recording(trial.recording)
        i0 = int(round(trial.start_s * fs))
        i1 = int(round(trial.end_s * fs))
        row = data[self._row[name]][i0:i1]
        return TimeSeries(np.asarray(row, dtype=np.float64), fs, name)

    def trial(self, trial_id: int) -> TrialRecord:
        info = self._trial_by_id[trial_id]
        channels = {name: self.trial_channel(info, name)
                    for name in self.manifest.channels}
        return TrialRecord(trial_id=info.trial_id, weight_g=info.weight_g,
                           surface=info.surface, channels=channels)


def load_dataset(root, eager: bool = False) -> Dataset:
    """Load and validate a dataset directory.

    Every validation failure is collected and reported together in a single
    :class:`DatasetValidationError`.
    """
    root = Path(root)
    errors: list[str] = []
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DatasetValidationError([f"missing {MANIFEST_NAME} in {root}"])
    try:
        raw = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetValidationError([f"manifest is not valid JSON: {exc}"])
    manifest = _parse_manifest(raw, errors)
    if manifest is not None:
        _validate(root, manifest, errors)
    if errors:
        raise DatasetValidationError(errors)
    return Dataset(root, manifest, eager=eager)


def validate_against_paper(manifest: DatasetManifest) -> dict:
    """Compare trial counts per condition against the reference values.

    Informational only: deviations are reported, never raised.
    """
    actual = {
        "light": sum(1 for t in manifest.trials if t.weight_g == 165),
        "heavy": sum(1 for t in manifest.trials if t.weight_g == 660),
        "sandpaper": sum(1 for t in manifest.trials if t.surface == "sandpaper"),
        "silk": sum(1 for t in manifest.trials if t.surface == "silk"),
    }
    report = {
        name: {"expected": PAPER_TRIAL_COUNTS[name], "actual": actual[name],
               "match": actual[name] == PAPER_TRIAL_COUNTS[name]}
        for name in PAPER_TRIAL_COUNTS
    }
    report["all_match"] = all(report[name]["match"] for name in PAPER_TRIAL_COUNTS)
    return report
