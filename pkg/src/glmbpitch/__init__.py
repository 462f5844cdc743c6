"""Subband pitch estimation and labeled multi-pitch tracking.

Pipeline: a coverage-designed gammatone filterbank feeds a correlogram
pitch estimator whose per-frame candidates are tracked by a labeled
multi-Bernoulli particle filter.
"""
from .estimator import FrameParams, PitchFrameMeasurements, SubbandPitchEstimator
from .evaluation import GroundTruth, ScoreReport, mix_at_snr, score, synth_harmonic
from .filterbank import FilterbankSpec, GammatoneFilterbank, design_filterbank
from .tracker import GlmbPitchTracker, TrackerParams, track

__version__ = "0.1.0"

__all__ = [
    "FilterbankSpec",
    "FrameParams",
    "GammatoneFilterbank",
    "GlmbPitchTracker",
    "GroundTruth",
    "PitchFrameMeasurements",
    "ScoreReport",
    "SubbandPitchEstimator",
    "TrackerParams",
    "design_filterbank",
    "mix_at_snr",
    "score",
    "synth_harmonic",
    "track",
]
