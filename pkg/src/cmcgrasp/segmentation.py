"""Muscle-activation detection on EMG envelopes and trial segment extraction.

The envelope convention used by the pipeline is
``moving_average(rectify(bandpass(emg)), 0.4 s)``; the threshold and interval
search below operate on that smoothed envelope.
"""

from dataclasses import dataclass

import numpy as np

from .sigcore import TimeSeries, bandpass, moving_average, rectify, BandPassSpec, DEFAULT_BAND

# MAD-to-sigma factor for a normal distribution.
_MAD_SCALE = 1.4826

ENVELOPE_WINDOW_S = 0.4


class NoActivationError(ValueError):
    """No sample of the envelope exceeds the threshold."""


class OutOfBoundsError(ValueError):
    """Requested segment window falls outside the recording."""


class RateMismatchError(ValueError):
    """EEG and EMG sampling rates differ."""


@dataclass(frozen=True)
class ActivationInterval:
    """Longest above-threshold run of an envelope, with its midpoint t0.

    The run spans the half-open time window [t_start, t_end): t_start is the
    time of its first sample and t_end the end of its last sample's period,
    so a single-sample run still has t_end > t_start.
    """

    t_start: float
    t_end: float
    t0: float
    threshold: float

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError("t_start must precede t_end")


@dataclass(frozen=True)
class Condition:
    """Grasp condition labels attached to a trial."""

    weight_g: int
    surface: str

    WEIGHTS = (165, 330, 660)
    SURFACES = ("sandpaper", "suede", "silk")

    def __post_init__(self):
        if self.weight_g not in self.WEIGHTS:
            raise ValueError(f"unknown weight {self.weight_g} g")
        if self.surface not in self.SURFACES:
            raise ValueError(f"unknown surface {self.surface!r}")


DURATIONS_S = (1.0, 2.0, 4.0)


@dataclass(frozen=True)
class TrialSegment:
    """Time-aligned EEG/EMG slices of one trial for one muscle."""

    eeg: TimeSeries
    emg: TimeSeries
    dur_s: float
    condition: Condition
    trial_id: int

    def __post_init__(self):
        if self.dur_s not in DURATIONS_S:
            raise ValueError(f"duration must be one of {DURATIONS_S}, got {self.dur_s}")
        if len(self.eeg) != len(self.emg):
            raise ValueError("EEG and EMG slices must have identical length")


def emg_envelope(emg: TimeSeries, band: BandPassSpec = DEFAULT_BAND,
                 window_s: float = ENVELOPE_WINDOW_S) -> TimeSeries:
    """Smoothed activation profile of a raw EMG channel."""
    return moving_average(rectify(bandpass(emg, band)), window_s)


def compute_threshold(envelope: TimeSeries) -> float:
    """Activation threshold (max - min)/3 + min over the whole envelope."""
    x = envelope.samples
    mn = float(np.min(x))
    mx = float(np.max(x))
    return (mx - mn) / 3.0 + mn


def _runs_above(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as (first, last) inclusive sample indices."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks, [idx.size - 1]))
    return [(int(idx[s]), int(idx[e])) for s, e in zip(starts, ends)]


def find_activation(envelope: TimeSeries, th: float) -> ActivationInterval:
    """Locate the single longest run of envelope samples strictly above th.

    Ties are broken by earliest start. Raises :class:`NoActivationError`
    when no sample exceeds the threshold (e.g. a constant envelope whose
    threshold equals the constant).
    """
    if not np.isfinite(th):
        raise ValueError(f"threshold must be finite, got {th}")
    runs = _runs_above(envelope.samples > th)
    if not runs:
        raise NoActivationError(
            f"no sample of {envelope.label!r} exceeds threshold {th}"
        )
    first, last = max(runs, key=lambda r: (r[1] - r[0], -r[0]))
    fs = envelope.fs
    t_start = first / fs
    t_end = (last + 1) / fs
    return ActivationInterval(t_start=t_start, t_end=t_end,
                              t0=(t_start + t_end) / 2.0, threshold=float(th))


def extract_segment(eeg: TimeSeries, emg: TimeSeries, t0: float, dur_s: float,
                    condition: Condition, trial_id: int) -> TrialSegment:
    """Cut the [t0 - dur/2, t0 + dur/2) window out of both channels.

    Both slices contain exactly round(dur_s * fs) samples and start at the
    same sample index.
    """
    if eeg.fs != emg.fs:
        raise RateMismatchError(f"eeg fs {eeg.fs} != emg fs {emg.fs}")
    fs = eeg.fs
    n = int(round(dur_s * fs))
    start = int(round((t0 - dur_s / 2.0) * fs))
    stop = start + n
    if start < 0 or stop > len(eeg) or stop > len(emg):
        raise OutOfBoundsError(
            f"window [{t0 - dur_s / 2:.3f}, {t0 + dur_s / 2:.3f}] s exceeds "
            f"recording of {min(len(eeg), len(emg)) / fs:.3f} s"
        )
    return TrialSegment(
        eeg=TimeSeries(eeg.samples[start:stop], fs, eeg.label),
        emg=TimeSeries(emg.samples[start:stop], fs, emg.label),
        dur_s=float(dur_s),
        condition=condition,
        trial_id=trial_id,
    )


def reject_artifacts(segments: list[TrialSegment],
                     z_max: float = 5.0) -> list[TrialSegment]:
    """Drop segments with outlying EEG peak amplitude.

    All EEG samples of all segments are pooled; a segment is rejected when
    its peak |EEG - pooled median| exceeds ``z_max`` robust standard
    deviations (MAD * 1.4826) of the pool. A pool with zero dispersion
    rejects nothing.
    """
    if not segments:
        raise ValueError("need at least one segment")
    if np.isinf(z_max):
        return list(segments)
    pooled = np.concatenate([s.eeg.samples for s in segments])
    center = np.median(pooled)
    sigma = _MAD_SCALE * np.median(np.abs(pooled - center))
    if sigma == 0.0:
        return list(segments)
    limit = z_max * sigma
    return [s for s in segments
            if np.max(np.abs(s.eeg.samples - center)) <= limit]
