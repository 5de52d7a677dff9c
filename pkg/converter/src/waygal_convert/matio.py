"""Readers for the WAY-EEG-GAL distribution containers.

The distribution ships MATLAB files in both the classic v5 layout (readable
by scipy) and the v7.3 layout (HDF5). Both are normalized here into plain
Python structures:

- ``read_ws(path)``: one windowed-series file ``WS_P<p>_S<s>.mat`` with the
  ``ws`` struct: participant, series, channel name lists, and per-lift
  windows carrying the EEG/EMG sample matrices and their time vectors.
- ``read_all_lifts(path)``: the ``P<p>_AllLifts.mat`` trial table as a list
  of per-lift dicts keyed by column name.

Only EEG, EMG and the trial metadata are read; kinematics and force
channels are ignored.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class LiftWindow:
    eeg: np.ndarray          # (n_eeg_samples, n_eeg_channels)
    emg: np.ndarray          # (n_emg_samples, n_emg_channels)
    eeg_fs: float
    emg_fs: float


@dataclass
class SeriesData:
    participant: int
    series: int
    eeg_names: list[str]
    emg_names: list[str]
    windows: list[LiftWindow]


def _fs_from_time(t: np.ndarray, what: str) -> float:
    t = np.asarray(t, dtype=float).ravel()
    if t.size < 2:
        raise ValueError(f"{what}: time vector too short to derive a rate")
    dt = np.median(np.diff(t))
    if dt <= 0:
        raise ValueError(f"{what}: non-increasing time vector")
    return float(round(1.0 / dt, 6))


# ---------------------------------------------------------------------------
# scipy (MATLAB v5) path

def _scipy_struct(obj):
    from scipy.io.matlab import mat_struct
    if isinstance(obj, mat_struct):
        return obj
    arr = np.asarray(obj)
    if arr.dtype == object and arr.size == 1:
        return _scipy_struct(arr.ravel()[0])
    return obj


def _scipy_str_list(obj) -> list[str]:
    arr = np.asarray(obj)
    if arr.dtype.kind in ("U", "S"):
        if arr.ndim == 0:
            return [str(arr)]
        return [str(v) for v in arr.ravel()]
    return [str(np.asarray(v).ravel()[0]) if np.asarray(v).ndim else str(v)
            for v in arr.ravel()]


def _read_ws_scipy(path) -> SeriesData:
    from scipy.io import loadmat
    raw = loadmat(path, squeeze_me=True, struct_as_record=False)
    if "ws" not in raw:
        raise ValueError(f"{path}: no 'ws' struct")
    ws = _scipy_struct(raw["ws"])
    names = _scipy_struct(ws.names)
    wins = np.atleast_1d(ws.win)
    windows = []
    for i, win in enumerate(wins):
        win = _scipy_struct(win)
        eeg = np.atleast_2d(np.asarray(win.eeg, dtype=float))
        emg = np.atleast_2d(np.asarray(win.emg, dtype=float))
        windows.append(LiftWindow(
            eeg=eeg, emg=emg,
            eeg_fs=_fs_from_time(win.eeg_t, f"{path} win {i} eeg_t"),
            emg_fs=_fs_from_time(win.emg_t, f"{path} win {i} emg_t")))
    return SeriesData(
        participant=int(ws.participant), series=int(ws.series),
        eeg_names=_scipy_str_list(names.eeg),
        emg_names=_scipy_str_list(names.emg),
        windows=windows)


def _read_all_lifts_scipy(path) -> list[dict]:
    from scipy.io import loadmat
    raw = loadmat(path, squeeze_me=True, struct_as_record=False)
    if "P" not in raw:
        raise ValueError(f"{path}: no 'P' struct")
    p = _scipy_struct(raw["P"])
    table = np.atleast_2d(np.asarray(p.AllLifts, dtype=float))
    cols = _scipy_str_list(p.ColNames)
    if table.shape[1] != len(cols):
        raise ValueError(f"{path}: {table.shape[1]} columns but "
                         f"{len(cols)} column names")
    return [dict(zip(cols, row)) for row in table]


# ---------------------------------------------------------------------------
# h5py (MATLAB v7.3) path. MATLAB stores arrays transposed in HDF5 and
# encodes strings as uint16 code units; cell and struct arrays hold object
# references.

def _h5_chars(arr) -> str:
    return "".join(chr(int(c)) for c in np.asarray(arr).ravel(order="F"))

def _h5_deref(f, ref):
    return f[ref]


def _h5_cell_strings(f, ds) -> list[str]:
    import h5py
    if ds.dtype.kind == "O":
        return [_h5_chars(_h5_deref(f, r)[()]) for r in np.asarray(ds).ravel()]
    return [_h5_chars(ds[()])]


def _h5_field_arrays(f, group, field: str) -> list[np.ndarray]:
    """All instances of one struct-array field, MATLAB orientation restored."""
    ds = group[field]
    if ds.dtype.kind == "O":
        return [np.asarray(_h5_deref(f, r)[()], dtype=float).T
                for r in np.asarray(ds).ravel()]
    return [np.asarray(ds[()], dtype=float).T]


def _h5_scalar(group, field: str) -> float:
    return float(np.asarray(group[field][()]).ravel()[0])


def _read_ws_h5(path) -> SeriesData:
    import h5py
    with h5py.File(path, "r") as f:
        if "ws" not in f:
            raise ValueError(f"{path}: no 'ws' struct")
        ws = f["ws"]
        names = ws["names"]
        eeg_names = _h5_cell_strings(f, names["eeg"])
        emg_names = _h5_cell_strings(f, names["emg"])
        win = ws["win"]
        eegs = _h5_field_arrays(f, win, "eeg")
        emgs = _h5_field_arrays(f, win, "emg")
        eeg_ts = _h5_field_arrays(f, win, "eeg_t")
        emg_ts = _h5_field_arrays(f, win, "emg_t")
        if not len(eegs) == len(emgs) == len(eeg_ts) == len(emg_ts):
            raise ValueError(f"{path}: inconsistent win field lengths")
        windows = [LiftWindow(
            eeg=np.atleast_2d(eeg), emg=np.atleast_2d(emg),
            eeg_fs=_fs_from_time(eeg_t, f"{path} win {i} eeg_t"),
            emg_fs=_fs_from_time(emg_t, f"{path} win {i} emg_t"))
            for i, (eeg, emg, eeg_t, emg_t)
            in enumerate(zip(eegs, emgs, eeg_ts, emg_ts))]
        return SeriesData(
            participant=int(_h5_scalar(ws, "participant")),
            series=int(_h5_scalar(ws, "series")),
            eeg_names=eeg_names, emg_names=emg_names, windows=windows)


def _read_all_lifts_h5(path) -> list[dict]:
    import h5py
    with h5py.File(path, "r") as f:
        if "P" not in f:
            raise ValueError(f"{path}: no 'P' struct")
        p = f["P"]
        table = np.asarray(p["AllLifts"][()], dtype=float).T
        table = np.atleast_2d(table)
        cols = _h5_cell_strings(f, p["ColNames"])
        if table.shape[1] != len(cols):
            raise ValueError(f"{path}: {table.shape[1]} columns but "
                             f"{len(cols)} column names")
        return [dict(zip(cols, row)) for row in table]


# ---------------------------------------------------------------------------

_HDF5_SIGNATURE = b"\x89HDF\r\n\x1a\n"


def _is_hdf5(path) -> bool:
    # MATLAB v7.3 files are HDF5 with a 512-byte userblock, so the signature
    # sits at offset 512; bare HDF5 files carry it at offset 0.
    with open(path, "rb") as fh:
        head = fh.read(8)
        if head == _HDF5_SIGNATURE:
            return True
        fh.seek(512)
        return fh.read(8) == _HDF5_SIGNATURE


def read_ws(path) -> SeriesData:
    """Read one WS_P<p>_S<s>.mat file, either container version."""
    if _is_hdf5(path):
        return _read_ws_h5(path)
    return _read_ws_scipy(path)


def read_all_lifts(path) -> list[dict]:
    """Read the P<p>_AllLifts.mat trial table, either container version."""
    if _is_hdf5(path):
        return _read_all_lifts_h5(path)
    return _read_all_lifts_scipy(path)
