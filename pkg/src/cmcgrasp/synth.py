"""Synthetic coupled signal pairs with a closed-form coherence oracle.

The generator produces an "EEG" channel x of unit-variance white Gaussian
noise and an "EMG" channel y = gain * (H @ x) + w, where H is the zero-phase
band-pass of :mod:`cmcgrasp.sigcore` restricted to the coupling band and w is
independent white Gaussian noise. Because every piece is linear the
magnitude-squared coherence of the pair is known exactly, which makes the
model a validation oracle for the Welch/CMC estimator and a source of
labeled datasets with controllable class separation.
"""

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import ingest
from .sigcore import BandPassSpec, TimeSeries, bandpass, bandpass_power_response
from .spectral import welch_spectra, cmc, DEFAULT_WIN_S, DEFAULT_OVERLAP


@dataclass(frozen=True)
class CouplingModel:
    """Linear coupling of a white 'cortical' source into a noisy 'muscle'."""

    gain: float
    coupling_band: tuple[float, float]
    noise_var: float
    fs: float
    seed: int
    filter_order: int = 4

    def __post_init__(self):
        if self.noise_var < 0:
            raise ValueError(f"noise variance must be >= 0, got {self.noise_var}")
        self.band_spec().validate_against(self.fs)

    def band_spec(self) -> BandPassSpec:
        lo, hi = self.coupling_band
        return BandPassSpec(lo=lo, hi=hi, order=self.filter_order)


def trial_model(m: CouplingModel, trial_index: int) -> CouplingModel:
    """Copy of the model with a per-trial derived seed."""
    derived = np.random.SeedSequence((m.seed, trial_index)).generate_state(1, np.uint64)[0]
    return dataclasses.replace(m, seed=int(derived))


def generate_pair(m: CouplingModel, n: int) -> tuple[TimeSeries, TimeSeries]:
    """Generate one (x, y) pair of n samples; bit-identical given the seed.

    x and the additive noise w come from two independent streams spawned
    from the model seed.
    """
    if n < m.fs:
        raise ValueError(f"need at least 1 s of data ({int(m.fs)} samples), got {n}")
    ss_x, ss_w = np.random.SeedSequence(m.seed).spawn(2)
    x = np.random.default_rng(ss_x).standard_normal(int(n))
    xs = TimeSeries(x, m.fs, "x")
    coupled = m.gain * bandpass(xs, m.band_spec()).samples
    w = np.random.default_rng(ss_w).standard_normal(int(n))
    y = coupled + np.sqrt(m.noise_var) * w
    return xs, TimeSeries(y, m.fs, "y")


def theoretical_coherence(m: CouplingModel, freqs: np.ndarray) -> np.ndarray:
    """Exact magnitude-squared coherence of the model at the given frequencies.

    With h2(f) = |H(f)|^2 the one-pass power response of the coupling
    filter, the zero-phase filtering applied by the generator has power
    gain h2(f)^2, and both white processes have flat spectra proportional
    to their variances, so

        coh2(f) = gain^2 h2(f)^2 / (gain^2 h2(f)^2 + noise_var)

    with 0/0 bins defined as 0.
    """
    freqs = np.asarray(freqs, dtype=np.float64)
    if np.any(freqs < 0) or np.any(freqs > m.fs / 2):
        raise ValueError("frequencies must lie in [0, fs/2]")
    h2 = bandpass_power_response(m.band_spec(), m.fs, freqs)
    num = m.gain ** 2 * h2 ** 2
    den = num + m.noise_var
    out = np.zeros_like(num)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def noise_var_for_coherence(gain: float, band: tuple[float, float], fs: float,
                            f0: float, target: float,
                            filter_order: int = 4) -> float:
    """Noise variance giving theoretical coherence ``target`` at f0."""
    if not 0 < target < 1:
        raise ValueError(f"target coherence must be in (0, 1), got {target}")
    h2 = bandpass_power_response(BandPassSpec(band[0], band[1], filter_order),
                                 fs, np.array([f0]))[0]
    return gain ** 2 * h2 ** 2 * (1.0 - target) / target


def estimate_mean_cmc(m: CouplingModel, trials: int, dur_s: float,
                      win_s: float = DEFAULT_WIN_S,
                      overlap: float = DEFAULT_OVERLAP):
    """Mean estimated CMC over independently seeded trials of the model.

    Returns (freqs, mean_cmc, n_subwindows).
    """
    n = int(round(dur_s * m.fs))
    acc = None
    count = 0
    for i in range(trials):
        x, y = generate_pair(trial_model(m, i), n)
        sx, sy, sxy = welch_spectra(x, y, win_s, overlap)
        c = cmc(sx, sy, sxy)
        acc = c.values.copy() if acc is None else acc + c.values
        count = c.n_avg
        freqs = c.freqs
    return freqs, acc / trials, count


# ---------------------------------------------------------------------------
# Labeled synthetic datasets in the canonical on-disk format.

@dataclass(frozen=True)
class SynthClass:
    """One condition class: its labels and the coupling model behind it."""

    weight_g: int
    surface: str
    model: CouplingModel


def _activation_gate(n: int, fs: float, burst: tuple[float, float],
                     baseline: float, ramp_s: float = 0.25) -> np.ndarray:
    """Amplitude envelope: quiet baseline, smooth ramp up, plateau, ramp down."""
    t = np.arange(n) / fs
    t_on, t_off = burst
    up = np.clip((t - t_on) / ramp_s, 0.0, 1.0)
    down = np.clip((t_off - t) / ramp_s, 0.0, 1.0)
    plateau = np.minimum(up, down)
    return baseline + (1.0 - baseline) * plateau * plateau * (3 - 2 * plateau)


def emit_dataset(root, classes: Sequence[SynthClass], trials_per_class: int,
                 emg_channels: Sequence[str] = ("BR",),
                 eeg_channel: str = "C3",
                 trial_len_s: float = 7.0,
                 burst: tuple[float, float] = (1.5, 5.5),
                 baseline_gain: float = 0.05,
                 subject: int = 0) -> ingest.DatasetManifest:
    """Write a canonical synthetic dataset: one recording per trial.

    Every trial shares one EEG source x across the EMG channels; each EMG
    channel gets its own independent additive-noise stream. The EMG is
    amplitude-gated so the activation detector finds a burst centered in
    the trial; gating scales signal and noise together, which leaves the
    coherence inside the burst untouched.
    """
    if not classes:
        raise ValueError("need at least one class")
    fs = classes[0].model.fs
    if any(c.model.fs != fs for c in classes):
        raise ValueError("all class models must share one sampling rate")
    n = int(round(trial_len_s * fs))
    gate = None
    recordings = {}
    rec_infos = []
    trial_infos = []
    trial_id = 0
    for cls in classes:
        for t in range(trials_per_class):
            tm = trial_model(cls.model, trial_id)
            streams = np.random.SeedSequence(tm.seed).spawn(1 + len(emg_channels))
            x = np.random.default_rng(streams[0]).standard_normal(n)
            xs = TimeSeries(x, fs, eeg_channel)
            coupled = tm.gain * bandpass(xs, tm.band_spec()).samples
            if gate is None:
                gate = _activation_gate(n, fs, burst, baseline_gain)
            rows = [x]
            for j, _ in enumerate(emg_channels):
                w = np.random.default_rng(streams[1 + j]).standard_normal(n)
                y = (coupled + np.sqrt(tm.noise_var) * w) * gate
                rows.append(y)
            rec_id = f"trial{trial_id:04d}"
            recordings[rec_id] = np.asarray(rows)
            rec_infos.append(ingest.RecordingInfo(id=rec_id,
                                                  file=f"{rec_id}.bin",
                                                  n_samples=n))
            trial_infos.append(ingest.TrialInfo(
                trial_id=trial_id, recording=rec_id,
                start_s=0.0, end_s=n / fs,
                weight_g=cls.weight_g, surface=cls.surface))
            trial_id += 1
    manifest = ingest.DatasetManifest(
        kind="synthetic", subject=subject, fs=fs,
        eeg_channels=[eeg_channel], emg_channels=list(emg_channels),
        recordings=rec_infos, trials=trial_infos)
    ingest.write_dataset(root, manifest, recordings)
    return manifest


def two_class_weight_dataset(root, gamma2_a: float, gamma2_b: float,
                             trials_per_class: int,
                             emg_channels: Sequence[str] = ("BR", "FDI"),
                             band: tuple[float, float] = (15.0, 30.0),
                             fs: float = 500.0, seed: int = 2024,
                             trial_len_s: float = 7.0) -> ingest.DatasetManifest:
    """Light/heavy synthetic dataset with class coherences set in one band.

    Class "light" (165 g) has coherence ``gamma2_a`` at the band center,
    class "heavy" (660 g) has ``gamma2_b``. A gamma2 of 0 maps to zero
    coupling gain.
    """
    f0 = (band[0] + band[1]) / 2.0

    def model_for(target: float, sub_seed: int) -> CouplingModel:
        if target <= 0:
            return CouplingModel(gain=0.0, coupling_band=band, noise_var=1.0,
                                 fs=fs, seed=sub_seed)
        nv = noise_var_for_coherence(1.0, band, fs, f0, target)
        return CouplingModel(gain=1.0, coupling_band=band, noise_var=nv,
                             fs=fs, seed=sub_seed)

    classes = [
        SynthClass(weight_g=165, surface="silk", model=model_for(gamma2_a, seed)),
        SynthClass(weight_g=660, surface="silk", model=model_for(gamma2_b, seed + 1)),
    ]
    return emit_dataset(root, classes, trials_per_class,
                        emg_channels=emg_channels, trial_len_s=trial_len_s)
