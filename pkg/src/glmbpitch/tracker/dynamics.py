"""Pitch grid, mean-reverting transition and detection model."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PitchGrid:
    means: np.ndarray
    stds: np.ndarray
    f0_min: float = 0.0
    f0_max: float = math.inf

    def __len__(self):
        return self.means.size


def pitch_grid(params):
    """Reversion levels ``mu_q = f0_min + mu_step (q - 1/2)`` and ``sigma_q = kappa_mu mu_q``."""
    span = params.f0_max - params.f0_min
    if params.mu_step >= span:
        raise ValueError(f"mu_step={params.mu_step} must be smaller than the pitch range {span}")
    q_m = int(math.floor(span / params.mu_step))
    q = np.arange(1, q_m + 1)
    means = params.f0_min + params.mu_step * (q - 0.5)
    return PitchGrid(means=means, stds=params.kappa_mu * means,
                     f0_min=params.f0_min, f0_max=params.f0_max)


def nearest_grid_index(grid, f):
    """1-based index of the grid mean nearest to ``f``; ties go to the lower index.

    Frequencies outside the grid are clamped to the nearest end.
    """
    f = float(f)
    if not grid.f0_min <= f <= grid.f0_max:
        log.warning("pitch %.2f Hz outside [%g, %g] Hz, clamped to the grid",
                    f, grid.f0_min, grid.f0_max)
    return int(_nearest_indices(grid, np.array([f]))[0]) + 1


def _nearest_indices(grid, f):
    """0-based nearest indices for an array of frequencies (lower index on ties)."""
    means = grid.means
    if means.size > 1:
        step = np.diff(means)
        if np.allclose(step, step[0]):
            # uniform grid: rounding with halves sent down
            q = np.ceil((f - means[0]) / step[0] - 0.5)
            return np.clip(q, 0, means.size - 1).astype(np.intp)
    idx = np.clip(np.searchsorted(means, f, side="left"), 1, means.size - 1)
    left = means[idx - 1]
    right = means[idx]
    choose_left = np.abs(f - left) <= np.abs(right - f)
    out = np.where(choose_left, idx - 1, idx)
    if means.size == 1:
        out = np.zeros_like(out)
    return out


def ou_mean(f, grid, params):
    """Deterministic part of the transition for an array of pitches."""
    f = np.asarray(f, dtype=float)
    q = _nearest_indices(grid, f)
    return f + params.alpha * (grid.means[q] - f) * params.t_step, grid.stds[q]


def ou_propagate(particles, grid, params, rng):
    """Draw next-frame pitches for an array of particles.

    Draws outside ``(0, fs/2)`` are redrawn once, then clamped.
    """
    mean, std = ou_mean(particles, grid, params)
    if params.transition_noise == "sqrt_dt":
        std = std * math.sqrt(params.t_step)
    x = mean + std * rng.standard_normal(mean.shape)
    nyq = params.sample_rate / 2.0
    bad = (x <= 0) | (x >= nyq)
    if np.any(bad):
        x[bad] = mean[bad] + std[bad] * rng.standard_normal(int(bad.sum()))
        x = np.clip(x, 1e-3, nyq - 1e-3)
    return x


def ou_transition(f, grid, params, rng):
    """Next pitch for a single current pitch ``f``."""
    return float(ou_propagate(np.array([float(f)]), grid, params, rng)[0])


def detection_prob(x, params):
    """Peak-normalized Gaussian detection profile centred on ``f_mid``."""
    x = np.asarray(x, dtype=float)
    out = params.p_detect_max * np.exp(
        -((x - params.f_mid) ** 2) / (2.0 * params.detect_spread ** 2)
    )
    return float(out) if out.ndim == 0 else out


def likelihood(z, x, params):
    """Gaussian measurement likelihood ``N(z; x, meas_std^2)``."""
    s = params.meas_std
    return np.exp(-0.5 * ((z - x) / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
