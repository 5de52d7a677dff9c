"""Channel-level signal primitives: band-pass filtering, rectification, smoothing.

All operations are pure: they take a :class:`TimeSeries` and return a new one
of the same length and sampling rate. Nothing here mutates its input, so the
functions are safe to call concurrently on shared series.
"""

from dataclasses import dataclass

import numpy as np
from scipy import signal


@dataclass(frozen=True)
class TimeSeries:
    """One channel of uniformly sampled signal.

    Parameters
    ----------
    samples : array
        Signal values (arbitrary units). Stored as float64.
    fs : float
        Sampling rate (Hz), > 0.
    label : str
        Channel name, e.g. "C3" or "BR".
    """

    samples: np.ndarray
    fs: float
    label: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 1:
            raise ValueError("samples must be a non-empty 1-D array")
        if not self.fs > 0:
            raise ValueError(f"sampling rate must be positive, got {self.fs}")
        if not np.all(np.isfinite(samples)):
            raise ValueError(f"non-finite samples in channel {self.label!r}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "fs", float(self.fs))

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.fs

    def replace_samples(self, samples: np.ndarray) -> "TimeSeries":
        return TimeSeries(samples, self.fs, self.label)


@dataclass(frozen=True)
class BandPassSpec:
    """Band edges and design order of the recursive band-pass filter.

    ``order`` is the order handed to the Butterworth design (the resulting
    band-pass has twice that many poles, as usual).
    """

    lo: float
    hi: float
    order: int = 4

    def __post_init__(self):
        if not self.order >= 1 or int(self.order) != self.order:
            raise ValueError(f"order must be a positive integer, got {self.order}")
        if not (self.lo > 0 and self.hi > self.lo):
            raise ValueError(f"invalid band edges: lo={self.lo}, hi={self.hi}")

    def validate_against(self, fs: float) -> None:
        """Raise if the band does not fit below the Nyquist rate of ``fs``."""
        if not (0 < self.lo < self.hi < fs / 2):
            raise ValueError(
                f"band edges ({self.lo}, {self.hi}) Hz invalid for fs={fs} Hz: "
                f"need 0 < lo < hi < fs/2"
            )


# Default analysis band used throughout the pipeline (3-80 Hz).
DEFAULT_BAND = BandPassSpec(lo=3.0, hi=80.0, order=4)

# Reflect padding length used by the forward-backward filter, in multiples
# of the design order.
_PAD_FACTOR = 3


def _design_sos(spec: BandPassSpec, fs: float) -> np.ndarray:
    spec.validate_against(fs)
    return signal.butter(spec.order, [spec.lo, spec.hi], btype="bandpass",
                         fs=fs, output="sos")


def bandpass(ts: TimeSeries, spec: BandPassSpec = DEFAULT_BAND) -> TimeSeries:
    """Zero-phase band-pass filter.

    A Butterworth band-pass (bilinear transform of the analog prototype) is
    applied forward then backward, so the output has no group delay and the
    amplitude response is the squared magnitude of the one-pass filter.
    Each end is reflect-padded by ``3 * spec.order`` samples to suppress
    startup transients, then the padding is trimmed.

    Raises
    ------
    ValueError
        If the band edges are invalid for ``ts.fs``, or the series is
        shorter than 3x the filter order.
    """
    sos = _design_sos(spec, ts.fs)
    padlen = _PAD_FACTOR * spec.order
    if len(ts) <= padlen:
        raise ValueError(
            f"series of {len(ts)} samples is too short for forward-backward "
            f"filtering (need more than {padlen} samples)"
        )
    out = signal.sosfiltfilt(sos, ts.samples, padtype="even", padlen=padlen)
    return ts.replace_samples(out)


def bandpass_power_response(spec: BandPassSpec, fs: float,
                            freqs: np.ndarray) -> np.ndarray:
    """|H(f)|^2 of the one-pass band-pass design at the given frequencies.

    The zero-phase filter applied by :func:`bandpass` runs the design twice,
    so its amplitude gain at frequency f is this value itself and its power
    gain is this value squared.
    """
    freqs = np.asarray(freqs, dtype=np.float64)
    sos = _design_sos(spec, fs)
    _, h = signal.sosfreqz(sos, worN=2.0 * np.pi * freqs / fs)
    return np.abs(h) ** 2


def rectify(ts: TimeSeries) -> TimeSeries:
    """Full-wave rectification: output[i] = |input[i]|."""
    return ts.replace_samples(np.abs(ts.samples))


def moving_average(ts: TimeSeries, window_s: float) -> TimeSeries:
    """Centered moving average with the window truncated at the boundaries.

    output[i] is the mean of the input over a window of ``window_s`` seconds
    centered on sample i; near the edges the window shrinks to whatever part
    of it lies inside the series. Output length equals input length.
    """
    if not window_s > 0:
        raise ValueError(f"window must be positive, got {window_s} s")
    w = int(round(window_s * ts.fs))
    if w < 1:
        raise ValueError(
            f"window of {window_s} s spans no samples at fs={ts.fs} Hz"
        )
    x = ts.samples
    n = x.size
    # Centered span: `left` samples before i, `right` after (w total incl. i).
    left = (w - 1) // 2
    right = w // 2
    csum = np.concatenate(([0.0], np.cumsum(x)))
    hi = np.minimum(np.arange(n) + right + 1, n)
    lo = np.maximum(np.arange(n) - left, 0)
    out = (csum[hi] - csum[lo]) / (hi - lo)
    return ts.replace_samples(out)
