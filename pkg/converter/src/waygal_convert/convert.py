"""Conversion from WAY-EEG-GAL windowed-series files to the dataset format.

Output layout (documented bit-exactly in the analysis package's
``docs/formats.md``): a ``manifest.json`` plus one binary per lift window,
header ``"CMCB" | uint32 version | uint32 channels | uint64 samples``
followed by float32 channel-major samples, all little-endian.

Numeric content is transferred losslessly up to the format's float32
rounding: no filtering, no interpolation. EMG recorded at an integer
multiple of the EEG rate is brought to the common 500 Hz grid by stride
subsampling (every k-th raw sample, values untouched).
"""

import json
import struct
from pathlib import Path

import numpy as np

from .matio import read_all_lifts, read_ws

TARGET_FS = 500.0

# Condition encodings of the source trial table.
WEIGHT_CODES = {1: 165, 2: 330, 4: 660}
SURFACE_CODES = {1: "sandpaper", 2: "suede", 3: "silk"}

# The five recorded muscles in the distribution's electrode order.
CANONICAL_EMG = ("AD", "BR", "FD", "CED", "FDI")

_HEADER = struct.Struct("<4sIIQ")
_MAGIC = b"CMCB"
_BINARY_VERSION = 1
_MANIFEST_FORMAT = "cmcgrasp-dataset"
_MANIFEST_VERSION = 1


class ConversionError(ValueError):
    pass


def _write_recording(path, data: np.ndarray) -> None:
    payload = np.ascontiguousarray(data, dtype="<f4")
    header = _HEADER.pack(_MAGIC, _BINARY_VERSION,
                          data.shape[0], data.shape[1])
    Path(path).write_bytes(header + payload.tobytes())


def _to_target_rate(samples: np.ndarray, fs: float, what: str) -> np.ndarray:
    """Bring (n, channels) samples at fs to TARGET_FS by stride subsampling."""
    if fs == TARGET_FS:
        return samples
    ratio = fs / TARGET_FS
    stride = int(round(ratio))
    if stride < 1 or abs(ratio - stride) > 1e-9:
        raise ConversionError(
            f"{what}: rate {fs} Hz is not an integer multiple of "
            f"{TARGET_FS:g} Hz; refusing to resample")
    return samples[::stride]


def _find_lift(lifts: list[dict], participant: int, series: int,
               lift_no: int) -> dict:
    for row in lifts:
        if (int(row.get("Part", -1)) == participant
                and int(row.get("Run", -1)) == series
                and int(row.get("Lift", -1)) == lift_no):
            return row
    raise ConversionError(
        f"no AllLifts row for participant {participant}, series {series}, "
        f"lift {lift_no}")


def _decode_condition(row: dict, context: str) -> tuple[int, str]:
    for key in ("CurW", "CurS"):
        if key not in row:
            raise ConversionError(f"{context}: trial table lacks column {key}")
    w_code = int(row["CurW"])
    s_code = int(row["CurS"])
    if w_code not in WEIGHT_CODES:
        raise ConversionError(f"{context}: unknown weight code {w_code}")
    if s_code not in SURFACE_CODES:
        raise ConversionError(f"{context}: unknown surface code {s_code}")
    return WEIGHT_CODES[w_code], SURFACE_CODES[s_code]


def convert(participant: int, src_dir, dst_dir) -> dict:
    """Convert one participant's series files; returns the manifest dict."""
    src = Path(src_dir)
    dst = Path(dst_dir)
    lifts_path = src / f"P{participant}_AllLifts.mat"
    if not lifts_path.is_file():
        raise ConversionError(f"missing trial table {lifts_path}")
    lifts = read_all_lifts(lifts_path)

    ws_paths = sorted(src.glob(f"WS_P{participant}_S*.mat"),
                      key=lambda p: int(p.stem.rsplit("S", 1)[1]))
    if not ws_paths:
        raise ConversionError(
            f"no WS_P{participant}_S*.mat files under {src}")

    dst.mkdir(parents=True, exist_ok=True)
    eeg_names = None
    emg_source_names = None
    recordings = []
    trials = []
    trial_id = 0
    for ws_path in ws_paths:
        data = read_ws(ws_path)
        if data.participant != participant:
            raise ConversionError(
                f"{ws_path}: file is for participant {data.participant}")
        if eeg_names is None:
            eeg_names = data.eeg_names
            emg_source_names = data.emg_names
        elif data.eeg_names != eeg_names or data.emg_names != emg_source_names:
            raise ConversionError(f"{ws_path}: channel names differ between "
                                  f"series files")
        if len(data.emg_names) != len(CANONICAL_EMG):
            raise ConversionError(
                f"{ws_path}: expected {len(CANONICAL_EMG)} EMG channels, "
                f"found {len(data.emg_names)}")
        for lift_idx, win in enumerate(data.windows):
            context = f"{ws_path.name} lift {lift_idx + 1}"
            if win.eeg_fs != TARGET_FS:
                raise ConversionError(
                    f"{context}: EEG rate {win.eeg_fs} Hz, expected "
                    f"{TARGET_FS:g}")
            if win.eeg.shape[1] != len(eeg_names):
                raise ConversionError(
                    f"{context}: EEG has {win.eeg.shape[1]} channels, "
                    f"names list has {len(eeg_names)}")
            emg = _to_target_rate(win.emg, win.emg_fs, context)
            n = min(win.eeg.shape[0], emg.shape[0])
            if n < 1 or abs(win.eeg.shape[0] - emg.shape[0]) > 1:
                raise ConversionError(
                    f"{context}: EEG spans {win.eeg.shape[0]} samples but "
                    f"EMG spans {emg.shape[0]} at {TARGET_FS:g} Hz")
            block = np.vstack([win.eeg[:n].T, emg[:n].T])
            row = _find_lift(lifts, participant, data.series, lift_idx + 1)
            weight_g, surface = _decode_condition(row, context)
            rec_id = f"s{data.series:02d}_t{lift_idx + 1:03d}"
            filename = f"{rec_id}.bin"
            _write_recording(dst / filename, block)
            recordings.append({"id": rec_id, "file": filename,
                               "n_samples": int(n)})
            trials.append({"trial_id": trial_id, "recording": rec_id,
                           "start_s": 0.0, "end_s": n / TARGET_FS,
                           "weight_g": weight_g, "surface": surface})
            trial_id += 1

    manifest = {
        "format": _MANIFEST_FORMAT,
        "version": _MANIFEST_VERSION,
        "kind": "waygal",
        "subject": participant,
        "fs": TARGET_FS,
        "eeg_channels": list(eeg_names),
        "emg_channels": list(CANONICAL_EMG),
        "recordings": recordings,
        "trials": trials,
        "source_channel_names": {"eeg": list(eeg_names),
                                 "emg": list(emg_source_names)},
    }
    text = json.dumps(manifest, indent=2, sort_keys=True)
    (dst / "manifest.json").write_text(text + "\n")
    return manifest
