"""Gammatone filterbank designed from a frequency-coverage target.

The number of subbands follows from requiring that adjacent passbands
overlap by a prescribed amount on the ERB-rate scale:

    N_b = round(1 + ln(erb(f_max) / erb(f_min)) / ln((2 eta + E K) / (2 eta - E K)))

where ``erb(f) = D + E f`` and ``K`` is the ratio of the -3 dB bandwidth to
the bandwidth parameter of an order-``n`` gammatone filter. Center
frequencies are equidistant in ERB-rate between ``f_min`` and ``f_max``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_fitted, check_signal

__all__ = [
    "ErbScale",
    "FilterbankSpec",
    "GammatoneFilter",
    "SubbandFrame",
    "GammatoneFilterbank",
    "GLASBERG_MOORE",
    "erb",
    "erbs",
    "erbs_inverse",
    "k_theta",
    "num_subbands",
    "center_frequencies",
    "coverage",
    "closed_form_coverage",
    "gammatone_filter",
    "design_filterbank",
    "decompose",
]


@dataclass(frozen=True)
class ErbScale:
    """Linear ERB model ``erb(f) = D + E * f``."""

    D: float = 24.7
    E: float = 0.108

    def __post_init__(self):
        if not (self.D > 0 and self.E > 0):
            raise ValueError(f"ERB constants must be positive, got D={self.D}, E={self.E}")

    @property
    def d_prime(self):
        return self.E / self.D

    @property
    def e_prime(self):
        return 1.0 / (self.E * math.log10(math.e))


GLASBERG_MOORE = ErbScale()


def erb(scale, f):
    """Equivalent rectangular bandwidth in Hz at frequency ``f``."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("frequency must be non-negative")
    out = scale.D + scale.E * f
    return float(out) if out.ndim == 0 else out


def erbs(scale, f):
    """ERB-rate of ``f``: the integral of ``1 / erb`` from 0 to ``f``."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("frequency must be non-negative")
    out = scale.e_prime * np.log10(1.0 + scale.d_prime * f)
    return float(out) if out.ndim == 0 else out


def erbs_inverse(scale, u):
    """Frequency in Hz whose ERB-rate is ``u``."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("ERB-rate must be non-negative")
    out = (10.0 ** (u / scale.e_prime) - 1.0) / scale.d_prime
    return float(out) if out.ndim == 0 else out


def k_theta(order):
    """Ratio of -3 dB bandwidth to the ERB of an order-``order`` gammatone.

    >>> round(k_theta(4), 3)
    0.886
    """
    if int(order) != order or order < 1:
        raise ValueError(f"filter order must be a positive integer, got {order}")
    order = int(order)
    half_power = 2.0 * math.sqrt(2.0 ** (1.0 / order) - 1.0)
    erb_factor = (
        math.pi
        * math.factorial(2 * order - 2)
        * 2.0 ** (-(2 * order - 2))
        / math.factorial(order - 1) ** 2
    )
    return half_power / erb_factor


def _round_half_away(x):
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def num_subbands(f_min, f_max, eta_c, scale=GLASBERG_MOORE, k=None, order=4):
    """Number of subbands that realizes coverage ``eta_c`` over ``[f_min, f_max]``."""
    if not 0 < f_min < f_max:
        raise ValueError(f"need 0 < f_min < f_max, got [{f_min}, {f_max}]")
    if k is None:
        k = k_theta(order)
    ek = scale.E * k
    if not 2.0 * eta_c > ek:
        raise ValueError(
            f"invalid coverage target eta_c={eta_c}: must exceed E*K/2={ek / 2:.6g}"
        )
    span = math.log((scale.D + scale.E * f_max) / (scale.D + scale.E * f_min))
    step = math.log((2.0 * eta_c + ek) / (2.0 * eta_c - ek))
    return max(2, _round_half_away(1.0 + span / step))


def center_frequencies(n_subbands, f_min, f_max, scale=GLASBERG_MOORE):
    """Center frequencies equally spaced in ERB-rate, endpoints included."""
    if n_subbands < 2:
        raise ValueError(f"need at least 2 subbands, got {n_subbands}")
    u = np.linspace(erbs(scale, f_min), erbs(scale, f_max), int(n_subbands))
    fc = erbs_inverse(scale, u)
    # pin the endpoints so inversion round-off never moves them
    fc[0], fc[-1] = f_min, f_max
    return fc


def coverage(center_freqs, bandwidths):
    """Frequency coverage of each adjacent pair of bands."""
    fc = np.asarray(center_freqs, dtype=float)
    fb = np.asarray(bandwidths, dtype=float)
    return 0.5 * (fb[1:] + fb[:-1]) / np.diff(fc)


def closed_form_coverage(n_subbands, f_min, f_max, scale=GLASBERG_MOORE, k=None, order=4):
    """Coverage implied by ``n_subbands`` equidistant bands (same for every pair)."""
    if k is None:
        k = k_theta(order)
    ratio = ((scale.D + scale.E * f_max) / (scale.D + scale.E * f_min)) ** (
        1.0 / (n_subbands - 1)
    )
    return 0.5 * scale.E * k * (ratio + 1.0) / (ratio - 1.0)


@dataclass(frozen=True)
class FilterbankSpec:
    f_min: float
    f_max: float
    eta_c: float
    order: int
    k_theta: float
    n_subbands: int
    center_freqs: np.ndarray
    bandwidths: np.ndarray
    scale: ErbScale = GLASBERG_MOORE

    @property
    def eta_realized(self):
        """Coverage of adjacent designed bands; identical for every pair."""
        return coverage(self.center_freqs, self.bandwidths)

    def to_rows(self):
        eta = self.eta_realized
        eta = np.append(eta, eta[-1]) if eta.size else np.array([np.nan])
        return [
            (b + 1, float(fc), float(fb), float(e))
            for b, (fc, fb, e) in enumerate(zip(self.center_freqs, self.bandwidths, eta))
        ]


@dataclass(frozen=True)
class GammatoneFilter:
    """Sampled gammatone impulse response, aligned so its envelope peaks at ``origin``.

    ``impulse_response[origin]`` corresponds to ``t = 0``; samples before
    ``origin`` hold the attack of the filter (``-t_d <= t < 0``).
    """

    center_freq: float
    bandwidth_param: float
    order: int
    align_delay: float
    sample_rate: float
    origin: int
    impulse_response: np.ndarray = field(repr=False)

    @property
    def aligned_response(self):
        return self.impulse_response[self.origin:]

    def frequency_response(self, freqs):
        """Complex response at ``freqs`` (Hz), referenced to the aligned origin."""
        n = np.arange(self.impulse_response.size) - self.origin
        w = 2.0 * np.pi * np.asarray(freqs, dtype=float)[..., None] / self.sample_rate
        return np.exp(-1j * w * n) @ self.impulse_response


@dataclass(frozen=True)
class SubbandFrame:
    band_index: int
    samples: np.ndarray = field(repr=False)
    start_sample: int = 0


def gammatone_filter(center_freq, bandwidth_param, order, sample_rate,
                     floor_db=-60.0, max_len=None):
    """Sample a gammatone impulse response with envelope peak at ``t = 0``.

    The envelope ``(t + t_d)**(order-1) * exp(-2 pi f_b (t + t_d))`` is
    maximal at ``t = 0`` for ``t_d = (order - 1) / (2 pi f_b)``. Samples
    whose envelope lies below ``floor_db`` relative to the peak are dropped
    and the total length is capped at ``max_len`` (2048 at 16 kHz by
    default). Gain is normalized to unity at ``center_freq``.
    """
    if max_len is None:
        max_len = int(round(2048 * sample_rate / 16000.0))
    two_pi_fb = 2.0 * np.pi * bandwidth_param
    t_d = (order - 1) / two_pi_fb
    n_pre = int(math.ceil(t_d * sample_rate))
    # length by which the envelope has certainly decayed below the floor
    floor = 10.0 ** (floor_db / 20.0)
    n_post = n_pre + 1
    while True:
        tau = n_post / sample_rate + t_d
        if order == 1:
            env_end = math.exp(-two_pi_fb * n_post / sample_rate)
        else:
            env_end = (tau / t_d) ** (order - 1) * math.exp(-two_pi_fb * (tau - t_d))
        if env_end < floor or n_pre + n_post >= 4 * max_len:
            break
        n_post *= 2
    n = np.arange(-n_pre, n_post + 1)
    t = n / sample_rate
    tau = np.clip(t + t_d, 0.0, None)
    if order == 1:
        env = np.where(t + t_d >= 0, np.exp(-two_pi_fb * t), 0.0)
    else:
        env = (tau / t_d) ** (order - 1) * np.exp(-two_pi_fb * (tau - t_d))
    keep = np.flatnonzero(env >= floor)
    lo, hi = keep[0], keep[-1] + 1
    origin = n_pre - lo
    hi = min(hi, lo + max_len)
    if origin >= hi - lo:
        raise ValueError("impulse response cap is shorter than the alignment delay")
    t, env = t[lo:hi], env[lo:hi]
    h = env * np.cos(2.0 * np.pi * center_freq * t)
    gain = np.abs(np.exp(-2j * np.pi * center_freq * t) @ h)
    h = h / gain
    return GammatoneFilter(
        center_freq=float(center_freq),
        bandwidth_param=float(bandwidth_param),
        order=int(order),
        align_delay=float(t_d),
        sample_rate=float(sample_rate),
        origin=int(origin),
        impulse_response=h,
    )


def design_filterbank(f_min=60.0, f_max=1270.0, eta_c=1.0, order=4,
                      sample_rate=16000.0, scale=GLASBERG_MOORE):
    """Design the subband layout and the matching gammatone filters.

    Returns
    -------
    spec : FilterbankSpec
    filters : list of GammatoneFilter
    """
    if not f_max < sample_rate / 2.0:
        raise ValueError(
            f"f_max={f_max} Hz must be below the Nyquist frequency {sample_rate / 2.0} Hz"
        )
    k = k_theta(order)
    n_b = num_subbands(f_min, f_max, eta_c, scale=scale, k=k)
    fc = center_frequencies(n_b, f_min, f_max, scale=scale)
    erb_c = erb(scale, fc)
    spec = FilterbankSpec(
        f_min=float(f_min),
        f_max=float(f_max),
        eta_c=float(eta_c),
        order=int(order),
        k_theta=k,
        n_subbands=n_b,
        center_freqs=fc,
        bandwidths=k * erb_c,
        scale=scale,
    )
    filters = [gammatone_filter(f, b, order, sample_rate) for f, b in zip(fc, erb_c)]
    return spec, filters


def decompose(signal, filters):
    """Filter ``signal`` through every band, time-aligned to the input.

    Returns one :class:`SubbandFrame` per filter, each as long as the input.
    """
    x = check_signal(signal)
    frames = []
    for b, filt in enumerate(filters, start=1):
        if x.size == 0:
            y = np.zeros(0)
        else:
            y = fftconvolve(x, filt.impulse_response)[filt.origin:filt.origin + x.size]
        frames.append(SubbandFrame(band_index=b, samples=y, start_sample=0))
    return frames


class GammatoneFilterbank(TransformerMixin, BaseEstimator):
    """Coverage-designed gammatone filterbank as a scikit-learn transformer.

    Parameters
    ----------
    f_min, f_max : float
        Center frequencies of the lowest and highest band in Hz.
    eta_c : float
        Target frequency coverage of adjacent bands; 1 tiles the range
        with -3 dB passbands that just touch.
    order : int
        Gammatone filter order.
    sample_rate : float
        Sampling rate of the signals passed to :meth:`transform`.

    Attributes
    ----------
    spec_ : FilterbankSpec
    filters_ : list of GammatoneFilter
    """

    def __init__(self, f_min=60.0, f_max=1270.0, eta_c=1.0, order=4, sample_rate=16000.0):
        self.f_min = f_min
        self.f_max = f_max
        self.eta_c = eta_c
        self.order = order
        self.sample_rate = sample_rate

    def fit(self, X=None, y=None):
        self.spec_, self.filters_ = design_filterbank(
            self.f_min, self.f_max, self.eta_c, self.order, self.sample_rate
        )
        self.n_subbands_ = self.spec_.n_subbands
        return self

    def transform(self, X):
        """Return an ``(n_subbands, n_samples)`` array of subband signals."""
        check_fitted(self, "filters_")
        frames = decompose(X, self.filters_)
        if not frames:
            return np.zeros((0, 0))
        return np.vstack([f.samples for f in frames])
