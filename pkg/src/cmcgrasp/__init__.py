"""Cortico-muscular coherence features and grasp-condition classification."""

__version__ = "0.1.0"

from .sigcore import BandPassSpec, TimeSeries, bandpass, moving_average, rectify
from .segmentation import (ActivationInterval, Condition, TrialSegment,
                           compute_threshold, extract_segment, find_activation,
                           reject_artifacts)
from .spectral import (BandDef, CmcSpectrum, CrossSpectrum, Spectrum,
                       SpectrumStats, band_features, cmc, confidence_level,
                       trial_stats, welch_spectra, DEFAULT_BANDS)
from .synth import CouplingModel, generate_pair, theoretical_coherence
from .svm import (CvReport, KernelSpec, Sample, SvmModel, cross_validate,
                  standardize_apply, standardize_fit, train_smo)
from .experiment import (MUSCLES, SweepReport, TaskSpec, label_trials,
                         run_cell, run_sweep)
from .ingest import (Dataset, DatasetManifest, load_dataset,
                     validate_against_paper)
