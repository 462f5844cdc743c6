"""Labeled multi-target pitch tracking with measurement-driven births."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .._validation import check_fitted
from .dynamics import (
    PitchGrid,
    detection_prob,
    likelihood,
    nearest_grid_index,
    ou_mean,
    ou_propagate,
    ou_transition,
    pitch_grid,
)
from .extract import (
    TrackOutput,
    TrackRecord,
    TrackRegistry,
    TrackRow,
    extract_multi,
    extract_single,
)
from .glmb import (
    BirthCandidate,
    GlmbDensity,
    Hypothesis,
    Label,
    LabeledTargetDensity,
    make_births,
    newborn_likelihood,
    predict,
    prune,
    update,
)
from .params import TrackerParams

__all__ = [
    "BirthCandidate",
    "GlmbDensity",
    "GlmbPitchTracker",
    "Hypothesis",
    "Label",
    "LabeledTargetDensity",
    "PitchGrid",
    "TrackOutput",
    "TrackRecord",
    "TrackRegistry",
    "TrackRow",
    "TrackerParams",
    "detection_prob",
    "extract_multi",
    "extract_single",
    "likelihood",
    "make_births",
    "nearest_grid_index",
    "newborn_likelihood",
    "ou_mean",
    "ou_propagate",
    "ou_transition",
    "pitch_grid",
    "predict",
    "prune",
    "track",
    "update",
]


def _estimates(frame):
    return tuple(frame.estimates) if hasattr(frame, "estimates") else tuple(frame)


def track(stream, params=None, mode="single", seed=None, times=None, callback=None):
    """Run the filter over a sequence of per-frame pitch measurements.

    Parameters
    ----------
    stream : sequence
        One entry per frame: a :class:`PitchFrameMeasurements` or a sequence
        of pitches in Hz (possibly empty).
    params : TrackerParams, optional
    mode : {"single", "multi"}
        ``single`` reports at most one pitch per frame (the label with the
        largest accumulated weight); ``multi`` reports every confirmed label
        and bridges pauses by re-using the label of a close earlier track.
    seed : int or numpy Generator, optional
    times : sequence of float, optional
        Frame times; defaults to ``frame * t_step``.
    callback : callable, optional
        Called as ``callback(frame, posterior)`` after each update.
    """
    params = params or TrackerParams()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    grid = pitch_grid(params)
    out = TrackOutput(registry=TrackRegistry(tolerance=params.relabel_tolerance))
    predicted = GlmbDensity.empty()
    for k, frame in enumerate(stream):
        z = _estimates(frame)
        t = times[k] if times is not None else getattr(frame, "time", k * params.t_step)
        posterior = update(predicted, z, params, frame=k, rng=rng)
        if callback is not None:
            callback(k, posterior)
        if mode == "single":
            best = extract_single(posterior, k, params.confirm_threshold)
            if best is not None:
                label, pitch, w = best
                tid = out.registry.resolve(label, pitch, k)
                out.registry.tracks[tid].add(k, pitch)
                out.rows.append(TrackRow(k, float(t), tid, pitch, w))
        else:
            out.rows.extend(extract_multi(posterior, out.registry, k, float(t)))
        r_n = newborn_likelihood(z, posterior)
        births = make_births(z, r_n, grid, params, frame=k + 1, rng=rng)
        predicted = predict(posterior, births, params, grid, rng)
        out.n_frames = k + 1
    return out


class GlmbPitchTracker(BaseEstimator):
    """Scikit-learn style wrapper around :func:`track`.

    ``fit`` validates the parameters and builds the pitch grid; ``predict``
    takes a measurement stream and returns a :class:`TrackOutput`.
    Every :class:`TrackerParams` field is a constructor parameter.
    """

    def __init__(self, mode="single", seed=None, alpha=0.1, t_step=0.01, mu_step=40.0,
                 kappa_mu=0.1, f0_min=60.0, f0_max=500.0, m_birth=1000, lambda_birth=0.3,
                 r_birth_max=0.15, p_survive=0.8, p_detect_max=0.98, f_mid=280.0,
                 detect_spread=100.0, meas_std=5.0, clutter_intensity=1e-4,
                 max_hypotheses=300, hypothesis_weight_floor=1e-6,
                 resample_ess_fraction=0.5, confirm_threshold=0.5, relabel_tolerance=0.2,
                 sample_rate=16000.0, transition_noise="sqrt_dt"):
        self.mode = mode
        self.seed = seed
        self.alpha = alpha
        self.t_step = t_step
        self.mu_step = mu_step
        self.kappa_mu = kappa_mu
        self.f0_min = f0_min
        self.f0_max = f0_max
        self.m_birth = m_birth
        self.lambda_birth = lambda_birth
        self.r_birth_max = r_birth_max
        self.p_survive = p_survive
        self.p_detect_max = p_detect_max
        self.f_mid = f_mid
        self.detect_spread = detect_spread
        self.meas_std = meas_std
        self.clutter_intensity = clutter_intensity
        self.max_hypotheses = max_hypotheses
        self.hypothesis_weight_floor = hypothesis_weight_floor
        self.resample_ess_fraction = resample_ess_fraction
        self.confirm_threshold = confirm_threshold
        self.relabel_tolerance = relabel_tolerance
        self.sample_rate = sample_rate
        self.transition_noise = transition_noise

    def fit(self, X=None, y=None):
        if self.mode not in ("single", "multi"):
            raise ValueError(f"mode must be 'single' or 'multi', got {self.mode!r}")
        self.params_ = TrackerParams(
            **{name: getattr(self, name) for name in TrackerParams.field_names()}
        )
        self.grid_ = pitch_grid(self.params_)
        return self

    def predict(self, X, times=None):
        check_fitted(self, "params_")
        return track(X, self.params_, self.mode, self.seed, times=times)

    def fit_predict(self, X, y=None, times=None):
        return self.fit(X).predict(X, times=times)
