"""Per-trial spectra, magnitude-squared coherence, trial statistics, band features.

The per-trial coherence is estimated with Welch averaging inside the trial:
Hann-tapered sub-windows (0.5 s, 50% overlap by default) are periodogram-
averaged and the coherence is formed from the averaged auto/cross spectra.
Applied to a single raw periodogram the coherence is identically 1, so a
sub-window count of at least 2 is enforced.
"""

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .sigcore import TimeSeries

# Numerical slack allowed above the exact Cauchy-Schwarz bound.
CMC_BOUND_SLACK = 1e-12

DEFAULT_WIN_S = 0.5
DEFAULT_OVERLAP = 0.5


@dataclass(frozen=True)
class Spectrum:
    """Real, non-negative power spectrum on a uniform frequency grid.

    ``n_avg`` records how many sub-window periodograms were averaged.
    """

    freqs: np.ndarray
    values: np.ndarray
    n_avg: int = 1

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if freqs.shape != values.shape or freqs.ndim != 1:
            raise ValueError("freqs and values must be 1-D arrays of equal length")
        if np.any(np.diff(freqs) <= 0):
            raise ValueError("freqs must be strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("power spectrum values must be finite and >= 0")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class CrossSpectrum:
    """Complex cross-power spectrum on the same grid as its auto spectra."""

    freqs: np.ndarray
    values: np.ndarray
    n_avg: int = 1

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.complex128)
        if freqs.shape != values.shape or freqs.ndim != 1:
            raise ValueError("freqs and values must be 1-D arrays of equal length")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class CmcSpectrum:
    """Magnitude-squared coherence per frequency bin, in [0, 1].

    Bins where the auto-spectra product is zero are defined as 0, so the
    values are never NaN.
    """

    freqs: np.ndarray
    values: np.ndarray
    n_avg: int = 1

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if freqs.shape != values.shape or freqs.ndim != 1:
            raise ValueError("freqs and values must be 1-D arrays of equal length")
        if np.any(np.isnan(values)):
            raise ValueError("coherence values must not be NaN")
        if np.any(values < 0) or np.any(values > 1.0 + CMC_BOUND_SLACK):
            raise ValueError("coherence values must lie in [0, 1] (+1e-12 slack)")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class SpectrumStats:
    """Per-bin mean and population standard deviation over N trials."""

    freqs: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one trial")
        if np.any(self.std < 0):
            raise ValueError("std must be >= 0")


@dataclass(frozen=True)
class BandDef:
    """Named frequency band; bins are collected over [lo, hi)."""

    name: str
    lo: float
    hi: float

    def __post_init__(self):
        if not (0 <= self.lo < self.hi):
            raise ValueError(f"invalid band {self.name}: [{self.lo}, {self.hi})")


# The eight sub-bands of interest, in the fixed feature order.
DEFAULT_BANDS = (
    BandDef("low_alpha", 6.0, 8.0),
    BandDef("alpha", 8.0, 12.0),
    BandDef("low_beta", 13.0, 20.0),
    BandDef("high_beta", 20.0, 30.0),
    BandDef("beta", 13.0, 30.0),
    BandDef("low_gamma", 30.0, 60.0),
    BandDef("high_gamma", 60.0, 80.0),
    BandDef("gamma", 30.0, 80.0),
)


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def _subwindows(x: np.ndarray, nwin: int, hop: int, count: int) -> np.ndarray:
    return sliding_window_view(x, nwin)[:: hop][:count]


def subwindow_count(n_samples: int, nwin: int, hop: int) -> int:
    """Number of full sub-windows: floor((n - w) / hop) + 1."""
    return (n_samples - nwin) // hop + 1


def welch_spectra(x: TimeSeries, y: TimeSeries,
                  win_s: float = DEFAULT_WIN_S,
                  overlap: float = DEFAULT_OVERLAP,
                  taper: str = "hann",
                  detrend: bool = True):
    """Averaged auto and cross spectra of two equal-length segments.

    Each segment is cut into sub-windows of ``win_s`` seconds advancing by
    ``win_s * (1 - overlap)``; every sub-window is mean-subtracted (when
    ``detrend``), tapered, zero-padded to the next power of two and
    transformed; the single-sided periodograms are averaged across
    sub-windows. The scaling makes the boxcar, non-detrended periodogram
    satisfy Parseval exactly: its sum equals the sub-window sample energy.

    Returns
    -------
    (Spectrum, Spectrum, CrossSpectrum)
        Sx, Sy, Sxy on a common grid from 0 to fs/2; each carries the
        sub-window count in ``n_avg``.

    Notes
    -----
    ``taper="boxcar"`` and ``detrend=False`` exist for verification
    (Parseval checks); analysis code uses the defaults.
    """
    if x.fs != y.fs:
        raise ValueError(f"sampling rates differ: {x.fs} vs {y.fs}")
    if len(x) != len(y):
        raise ValueError(f"segment lengths differ: {len(x)} vs {len(y)}")
    if not 0 <= overlap < 1:
        raise ValueError(f"overlap must be in [0, 1), got {overlap}")
    fs = x.fs
    nwin = int(round(win_s * fs))
    if nwin < 2:
        raise ValueError(f"sub-window of {win_s} s spans {nwin} < 2 samples")
    if len(x) < nwin:
        raise ValueError(
            f"segment of {len(x)} samples shorter than one {nwin}-sample sub-window"
        )
    hop = max(1, int(round(nwin * (1.0 - overlap))))
    count = subwindow_count(len(x), nwin, hop)

    if taper == "hann":
        w = np.hanning(nwin)
    elif taper == "boxcar":
        w = np.ones(nwin)
    else:
        raise ValueError(f"unknown taper {taper!r}")

    xs = np.array(_subwindows(x.samples, nwin, hop, count))
    ys = np.array(_subwindows(y.samples, nwin, hop, count))
    if detrend:
        xs -= xs.mean(axis=1, keepdims=True)
        ys -= ys.mean(axis=1, keepdims=True)

    nfft = _next_pow2(nwin)
    fx = np.fft.rfft(xs * w, nfft, axis=1)
    fy = np.fft.rfft(ys * w, nfft, axis=1)

    # Single-sided scaling; DC and Nyquist bins are not doubled.
    scale = np.full(nfft // 2 + 1, 2.0)
    scale[0] = 1.0
    scale[-1] = 1.0
    scale /= np.mean(w ** 2) * nfft

    sx = (np.abs(fx) ** 2).mean(axis=0) * scale
    sy = (np.abs(fy) ** 2).mean(axis=0) * scale
    sxy = (fx * np.conj(fy)).mean(axis=0) * scale
    freqs = np.fft.rfftfreq(nfft, 1.0 / fs)
    return (Spectrum(freqs, sx, count), Spectrum(freqs, sy, count),
            CrossSpectrum(freqs, sxy, count))


def _check_grid(*spectra) -> np.ndarray:
    freqs = spectra[0].freqs
    for s in spectra[1:]:
        if s.freqs.shape != freqs.shape or not np.array_equal(s.freqs, freqs):
            raise ValueError("spectra are not on a common frequency grid")
    return freqs


def cmc(sx: Spectrum, sy: Spectrum, sxy: CrossSpectrum) -> CmcSpectrum:
    """Magnitude-squared coherence |Sxy|^2 / (Sx * Sy) per bin.

    The inputs must come from one :func:`welch_spectra` call with at least
    two sub-windows; bins where Sx * Sy is zero yield 0.
    """
    freqs = _check_grid(sx, sy, sxy)
    if not (sx.n_avg == sy.n_avg == sxy.n_avg):
        raise ValueError("spectra were not produced by one welch_spectra call")
    if sxy.n_avg < 2:
        raise ValueError(
            f"coherence needs >= 2 averaged sub-windows, got {sxy.n_avg} "
            "(a single periodogram is identically 1)"
        )
    den = sx.values * sy.values
    num = np.abs(sxy.values) ** 2
    values = np.zeros_like(num)
    ok = den > 0
    values[ok] = num[ok] / den[ok]
    return CmcSpectrum(freqs, values, sxy.n_avg)


def trial_stats(spectra: Sequence) -> SpectrumStats:
    """Per-bin mean and population std over a list of same-grid spectra."""
    if len(spectra) == 0:
        raise ValueError("empty spectra list")
    freqs = _check_grid(*spectra)
    stack = np.stack([s.values for s in spectra])
    return SpectrumStats(freqs=freqs, mean=stack.mean(axis=0),
                         std=stack.std(axis=0, ddof=0), n=len(spectra))


def band_bins(freqs: np.ndarray, band: BandDef) -> np.ndarray:
    """Boolean mask of grid bins with band.lo <= f < band.hi."""
    return (freqs >= band.lo) & (freqs < band.hi)


def band_features(c: CmcSpectrum, bands: Sequence[BandDef] = DEFAULT_BANDS,
                  stat: str = "mean") -> np.ndarray:
    """One scalar per band summarizing the coherence inside it.

    ``stat`` is "mean" (contract default) or "max". An empty band (no grid
    bins) is an error naming the band; widen the FFT grid if it happens.
    """
    if stat not in ("mean", "max"):
        raise ValueError(f"unknown band statistic {stat!r}")
    out = np.empty(len(bands))
    for i, band in enumerate(bands):
        mask = band_bins(c.freqs, band)
        if not mask.any():
            raise ValueError(
                f"band {band.name} [{band.lo}, {band.hi}) Hz contains no "
                f"frequency bins on a grid with spacing "
                f"{c.freqs[1] - c.freqs[0]:.4f} Hz"
            )
        vals = c.values[mask]
        out[i] = vals.mean() if stat == "mean" else vals.max()
    return out


def confidence_level(l: int, alpha: float) -> float:
    """Coherence significance threshold 1 - alpha^(1/(l-1)) for l averages."""
    if l < 2:
        raise ValueError(f"need at least 2 sub-windows, got {l}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    return 1.0 - alpha ** (1.0 / (l - 1))


def render_stats_csv(stats: SpectrumStats) -> str:
    """CSV text with (freq_hz, mean, std) rows; deterministic for identical
    inputs."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["freq_hz", "mean", "std"])
    for f, m, s in zip(stats.freqs, stats.mean, stats.std):
        writer.writerow([repr(float(f)), repr(float(m)), repr(float(s))])
    return buf.getvalue()


def write_stats_csv(stats: SpectrumStats, path) -> None:
    """Write the (freq_hz, mean, std) rows of :func:`render_stats_csv`."""
    with open(path, "w", newline="") as fh:
        fh.write(render_stats_csv(stats))
