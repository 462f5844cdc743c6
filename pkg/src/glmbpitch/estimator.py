"""Subband pitch estimator: rectify, encode peaks, autocorrelate, pick peaks.

Each subband is half-wave rectified, its positive lobes are reduced to one
impulse per lobe (at the lobe maximum) and re-spread with a short symmetric
exponential template. The normalized autocorrelation of the encoded bands
is averaged into a correlogram whose peaks above a threshold give the pitch
candidates of a frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_fitted, check_signal
from .filterbank import decompose, design_filterbank

__all__ = [
    "EncodingTemplate",
    "FrameParams",
    "Correlogram",
    "PitchFrameMeasurements",
    "SubbandPitchEstimator",
    "half_wave_rectify",
    "find_local_peaks",
    "encode",
    "frame_count",
    "nac",
    "nac_frames",
    "correlogram",
    "correlogram_frames",
    "extract_pitches",
    "estimate_file",
    "is_harmonic_related",
]

DEFAULT_THRESHOLD = 0.125
# mean-square level below which a frame is silent: FFT filtering leaves
# ~1e-17 residue in digital silence, which NAC would otherwise normalize up
SILENCE_FLOOR = 1e-20
HARMONIC_TOLERANCE = 0.05


@dataclass(frozen=True)
class EncodingTemplate:
    """Symmetric spike template ``exp(-|k|)`` for ``k = -half_width..half_width``."""

    half_width: int = 5
    decay: float = 1.0

    @property
    def taps(self):
        k = np.arange(-self.half_width, self.half_width + 1)
        return np.exp(-self.decay * np.abs(k))


@dataclass(frozen=True)
class FrameParams:
    n_corr: int
    n_step: int
    d_min: int
    d_max: int
    threshold: float = DEFAULT_THRESHOLD
    mode: str = "single"

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.mode not in ("single", "multi"):
            raise ValueError(f"mode must be 'single' or 'multi', got {self.mode!r}")
        if not 0 < self.d_min < self.d_max < self.n_corr:
            raise ValueError("need 0 < d_min < d_max < n_corr")
        if self.n_step < 1:
            raise ValueError("n_step must be positive")

    @classmethod
    def from_pitch_range(cls, sample_rate=16000, f0_min=60.0, f0_max=500.0,
                         hop_ms=10.0, threshold=DEFAULT_THRESHOLD, mode="single"):
        return cls(
            n_corr=int(math.ceil(2.0 * sample_rate / f0_min)),
            n_step=int(round(hop_ms * 1e-3 * sample_rate)),
            d_min=int(math.floor(sample_rate / f0_max)),
            d_max=int(math.ceil(sample_rate / f0_min)),
            threshold=threshold,
            mode=mode,
        )

    @property
    def delays(self):
        return np.arange(self.d_min, self.d_max + 1)


@dataclass(frozen=True)
class Correlogram:
    frame_index: int
    values: np.ndarray = field(repr=False)
    d_min: int = 0

    @property
    def delays(self):
        return np.arange(self.d_min, self.d_min + self.values.size)


@dataclass(frozen=True)
class PitchFrameMeasurements:
    frame_index: int
    estimates: tuple = ()
    peak_strengths: tuple = ()
    time: float = 0.0

    def __len__(self):
        return len(self.estimates)


def half_wave_rectify(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * (x + np.abs(x))


def find_local_peaks(rectified):
    """One ``(index, amplitude)`` per run of strictly positive samples.

    The peak of a run is its first maximal sample.
    """
    x = np.asarray(rectified, dtype=float)
    if np.any(x < 0):
        raise ValueError("input must be non-negative (rectify first)")
    pos = np.concatenate(([False], x > 0, [False]))
    edges = np.flatnonzero(np.diff(pos.astype(np.int8)))
    starts, stops = edges[0::2], edges[1::2]
    if starts.size == 0:
        return []
    # argmax per run via a segmented maximum
    run_max = np.maximum.reduceat(x, starts)
    idx = np.arange(x.size)
    run_id = np.searchsorted(starts, idx, side="right") - 1
    in_run = (run_id >= 0) & (idx < stops[np.clip(run_id, 0, None)])
    hits = in_run & (x == run_max[np.clip(run_id, 0, None)])
    first = np.full(starts.size, -1)
    hit_idx = np.flatnonzero(hits)
    hit_runs = run_id[hit_idx]
    # first occurrence per run: iterate in reverse so earliest write wins
    first[hit_runs[::-1]] = hit_idx[::-1]
    return [(int(i), float(x[i])) for i in first]


def encode(rectified, template=EncodingTemplate()):
    """Replace each positive lobe by the template scaled by the lobe peak."""
    x = np.asarray(rectified, dtype=float)
    impulses = np.zeros_like(x)
    for i, a in find_local_peaks(x):
        impulses[i] = a
    if x.size == 0:
        return impulses
    hw = template.half_width
    return np.convolve(impulses, template.taps)[hw:hw + x.size]


def frame_count(n_samples, frame):
    if n_samples < frame.n_corr:
        return 0
    return (n_samples - frame.n_corr) // frame.n_step + 1


def _frames(x, frame):
    n = frame_count(x.size, frame)
    if n == 0:
        return np.zeros((0, frame.n_corr))
    starts = np.arange(n) * frame.n_step
    return x[starts[:, None] + np.arange(frame.n_corr)]


def _nac_matrix(frames, max_delay):
    """NAC of each row for delays ``0..max_delay``; silent rows give zeros."""
    frames = frames - frames.mean(axis=1, keepdims=True)
    n = frames.shape[1]
    nfft = 1 << int(math.ceil(math.log2(2 * n)))
    spec = np.fft.rfft(frames, nfft, axis=1)
    acf = np.fft.irfft(spec * np.conj(spec), nfft, axis=1)[:, :max_delay + 1]
    energy = np.sum(frames * frames, axis=1)
    acf[:, 0] = energy
    out = np.zeros_like(acf)
    ok = energy > SILENCE_FLOOR * n
    out[ok] = acf[ok] / energy[ok, None]
    return out


def nac(encoded, frame, j):
    """Normalized autocorrelation of frame ``j`` (0-based) for ``d = 0..d_max``.

    The frame mean is removed first; the numerator for delay ``d`` sums the
    ``n_corr - d`` products inside the frame while the denominator is the
    full-frame energy, so the envelope decays with ``d``.
    """
    x = check_signal(encoded, "encoded")
    start = j * frame.n_step
    if j < 0 or start + frame.n_corr > x.size:
        raise ValueError(f"frame {j} does not fit in a signal of {x.size} samples")
    seg = x[start:start + frame.n_corr][None, :]
    return _nac_matrix(seg, frame.d_max)[0]


def nac_frames(encoded, frame):
    """NAC for every complete frame, shape ``(n_frames, d_max + 1)``."""
    x = check_signal(encoded, "encoded")
    return _nac_matrix(_frames(x, frame), frame.d_max)


def correlogram(per_band_nac, frame_index=0, d_min=0):
    """Average NAC vectors over subbands."""
    stacked = np.asarray(per_band_nac, dtype=float)
    return Correlogram(frame_index=frame_index, values=stacked.mean(axis=0), d_min=d_min)


def correlogram_frames(subbands, frame, template=EncodingTemplate()):
    """Band-averaged NAC for all frames, shape ``(n_frames, d_max + 1)``."""
    total = None
    for band in subbands:
        x = band.samples if hasattr(band, "samples") else band
        a = nac_frames(encode(half_wave_rectify(x), template), frame)
        total = a if total is None else total + a
    if total is None:
        return np.zeros((0, frame.d_max + 1))
    return total / len(subbands)


def _local_maxima(values):
    """Indices of interior local maxima; plateaus resolve to their first index."""
    v = np.asarray(values, dtype=float)
    peaks = []
    i = 1
    n = v.size
    while i < n - 1:
        if v[i] > v[i - 1]:
            j = i
            while j + 1 < n and v[j + 1] == v[i]:
                j += 1
            if j + 1 < n and v[j + 1] < v[i]:
                peaks.append(i)
            i = j + 1
        else:
            i += 1
    return peaks


def is_harmonic_related(d_a, d_b, tol=HARMONIC_TOLERANCE):
    """True if one delay is within ``tol`` of an integer multiple (>= 2) of the other."""
    r = max(d_a, d_b) / min(d_a, d_b)
    m = round(r)
    return m >= 2 and abs(r / m - 1.0) <= tol


def extract_pitches(c, frame, fs, time=None):
    """Pitch candidates from one correlogram frame.

    ``c`` may be a :class:`Correlogram` or an array of values indexed by
    delay starting at 0. Peaks are local maxima inside ``[d_min, d_max]``
    whose value reaches ``frame.threshold``; the endpoints count only if the
    correlogram extends one delay past them.
    """
    if isinstance(c, Correlogram):
        values, offset, j = c.values, c.d_min, c.frame_index
    else:
        values, offset, j = np.asarray(c, dtype=float), 0, 0
    lo = max(frame.d_min - 1, offset)
    hi = min(frame.d_max + 1, offset + values.size - 1)
    window = values[lo - offset:hi - offset + 1]
    found = []
    for i in _local_maxima(window):
        d = lo + i
        if frame.d_min <= d <= frame.d_max and window[i] >= frame.threshold:
            found.append((float(window[i]), d))
    found.sort(key=lambda p: (-p[0], p[1]))
    if time is None:
        time = j * frame.n_step / fs
    if not found:
        return PitchFrameMeasurements(frame_index=j, time=time)
    if frame.mode == "single":
        keep = found[:1]
    else:
        keep = []
        discarded = set()
        for i, (_, d_i) in enumerate(found):
            if i in discarded:
                continue
            keep.append(found[i])
            for rho in range(i + 1, len(found)):
                if rho not in discarded and is_harmonic_related(d_i, found[rho][1]):
                    discarded.add(rho)
    return PitchFrameMeasurements(
        frame_index=j,
        estimates=tuple(fs / d for _, d in keep),
        peak_strengths=tuple(s for s, _ in keep),
        time=time,
    )


def estimate_file(signal, bank, frame, fs=16000, template=EncodingTemplate()):
    """Run the full estimator over ``signal`` and return per-frame measurements."""
    if fs != 16000:
        raise ValueError("the encoding template is defined for 16 kHz input; resample first")
    x = check_signal(signal)
    if frame_count(x.size, frame) == 0:
        return []
    acs = correlogram_frames(decompose(x, bank), frame, template)
    return [
        extract_pitches(Correlogram(j, row, 0), frame, fs, time=j * frame.n_step / fs)
        for j, row in enumerate(acs)
    ]


class SubbandPitchEstimator(TransformerMixin, BaseEstimator):
    """Frame-wise pitch candidates from a coverage-designed gammatone filterbank.

    ``transform`` returns the correlogram (frames x delays) and ``predict``
    the list of :class:`PitchFrameMeasurements`.

    Parameters
    ----------
    f0_min, f0_max : float
        Pitch search range in Hz; sets frame length and delay range.
    f_min, f_max, eta_c, order :
        Filterbank design, see :class:`~glmbpitch.filterbank.GammatoneFilterbank`.
    hop_ms : float
        Frame step in milliseconds.
    threshold : float
        Minimum correlogram peak height.
    multi : bool
        Keep all non-harmonically related peaks instead of only the strongest.
    """

    sample_rate = 16000

    def __init__(self, f0_min=60.0, f0_max=500.0, f_min=60.0, f_max=1270.0, eta_c=1.0,
                 order=4, hop_ms=10.0, threshold=DEFAULT_THRESHOLD, multi=False):
        self.f0_min = f0_min
        self.f0_max = f0_max
        self.f_min = f_min
        self.f_max = f_max
        self.eta_c = eta_c
        self.order = order
        self.hop_ms = hop_ms
        self.threshold = threshold
        self.multi = multi

    def fit(self, X=None, y=None):
        self.spec_, self.filters_ = design_filterbank(
            self.f_min, self.f_max, self.eta_c, self.order, self.sample_rate
        )
        self.frame_ = FrameParams.from_pitch_range(
            self.sample_rate, self.f0_min, self.f0_max, self.hop_ms, self.threshold,
            "multi" if self.multi else "single",
        )
        return self

    def transform(self, X):
        check_fitted(self, "frame_")
        x = check_signal(X)
        if frame_count(x.size, self.frame_) == 0:
            return np.zeros((0, self.frame_.d_max + 1))
        return correlogram_frames(decompose(x, self.filters_), self.frame_)

    def predict(self, X):
        check_fitted(self, "frame_")
        return estimate_file(X, self.filters_, self.frame_, self.sample_rate)

    def frame_times(self, n_frames):
        check_fitted(self, "frame_")
        return np.arange(n_frames) * self.frame_.n_step / self.sample_rate
