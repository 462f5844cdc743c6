"""Scoring (GPE, VDE, SIE), noise mixing and synthetic harmonic signals."""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_signal

__all__ = [
    "GroundTruth",
    "ScoreReport",
    "align_to_truth",
    "gpe",
    "vde",
    "sie",
    "assign_labels",
    "score",
    "mix_at_snr",
    "measure_snr",
    "synth_harmonic",
    "GPE_TOLERANCE",
]

GPE_TOLERANCE = 0.05


@dataclass(frozen=True)
class GroundTruth:
    """Reference pitch per frame; 0 marks an unvoiced frame."""

    times: np.ndarray
    f0: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        f = np.asarray(self.f0, dtype=float)
        if t.shape != f.shape or t.ndim != 1:
            raise ValueError("times and f0 must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("ground-truth times must be strictly increasing")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise ValueError("ground-truth pitch must be finite and non-negative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "f0", f)

    @classmethod
    def from_frames(cls, f0, hop_s, offset_s=0.0):
        f0 = np.asarray(f0, dtype=float)
        return cls(offset_s + hop_s * np.arange(f0.size), f0)

    @property
    def voiced(self):
        return self.f0 > 0

    @property
    def hop(self):
        return float(np.median(np.diff(self.times))) if self.times.size > 1 else 0.0


@dataclass
class ScoreReport:
    gpe: float | None = None
    vde: float | None = None
    sie: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    def to_dict(self):
        return {"gpe": self.gpe, "vde": self.vde, "sie": self.sie, "counts": self.counts}


def align_to_truth(est_times, est_f0, truth):
    """Map estimates onto the truth frame grid.

    Each estimate goes to the nearest truth frame if it lies within half a
    hop of it. Returns an array over truth frames with 0 where no estimate
    landed; when several land on one frame the nearest in time wins.
    """
    est_times = np.asarray(est_times, dtype=float)
    est_f0 = np.asarray(est_f0, dtype=float)
    out = np.zeros(truth.times.size)
    if est_times.size == 0 or truth.times.size == 0:
        return out
    half = 0.5 * truth.hop if truth.times.size > 1 else np.inf
    idx = np.clip(np.searchsorted(truth.times, est_times), 1, truth.times.size - 1)
    left = truth.times[idx - 1]
    right = truth.times[np.minimum(idx, truth.times.size - 1)]
    nearest = np.where(np.abs(est_times - left) <= np.abs(right - est_times), idx - 1, idx)
    if truth.times.size == 1:
        nearest = np.zeros_like(nearest)
    dist = np.abs(truth.times[nearest] - est_times)
    best = np.full(truth.times.size, np.inf)
    for k in np.argsort(dist, kind="stable"):
        if dist[k] <= half + 1e-9 and dist[k] < best[nearest[k]] and est_f0[k] > 0:
            best[nearest[k]] = dist[k]
            out[nearest[k]] = est_f0[k]
    return out


def _as_frames(est, truth):
    est = np.asarray(est, dtype=float)
    if est.shape != truth.f0.shape:
        raise ValueError(
            f"estimate has {est.size} frames but truth has {truth.f0.size}; align first"
        )
    return est


def gpe(est, truth, tol=GPE_TOLERANCE):
    """Gross pitch error on frames voiced in both estimate and truth.

    Returns ``(ratio, counts)``; ``ratio`` is None when no frame is voiced in both.
    """
    est = _as_frames(est, truth)
    both = (est > 0) & truth.voiced
    n_v = int(both.sum())
    rel = np.abs(est[both] - truth.f0[both]) / truth.f0[both]
    n_err = int(np.sum(rel > tol))
    return (n_err / n_v if n_v else None), {"N_v": n_v, "N_err": n_err}


def vde(est, truth):
    """Voicing decision error over all frames."""
    est = _as_frames(est, truth)
    n_f = int(est.size)
    n_ue = int(np.sum((est > 0) & ~truth.voiced))
    n_ve = int(np.sum((est <= 0) & truth.voiced))
    ratio = (n_ue + n_ve) / n_f if n_f else None
    return ratio, {"N_ue": n_ue, "N_ve": n_ve, "N_f": n_f}


def _match(f, ref, tol):
    return ref > 0 and abs(f - ref) / ref <= tol


def assign_labels(label_f0, truths, tol=GPE_TOLERANCE):
    """Assign each label to the speaker its estimates match most often.

    ``label_f0`` maps label -> per-truth-frame pitch array (0 where absent).
    Labels matching no speaker on any frame stay unassigned.
    """
    mapping = {}
    for label, f in label_f0.items():
        votes = Counter()
        for i, truth in enumerate(truths):
            both = (f > 0) & truth.voiced
            rel = np.abs(f[both] - truth.f0[both]) / truth.f0[both]
            votes[i] = int(np.sum(rel <= tol))
        if votes and max(votes.values()) > 0:
            top = max(votes.values())
            mapping[label] = min(i for i, v in votes.items() if v == top)
    return mapping


def sie(label_f0, truths, mapping=None, tol=GPE_TOLERANCE):
    """Speaker identity error per speaker.

    ``SIE_i = E_ij / N_vi`` where ``N_vi`` counts voiced (in truth ``i``)
    estimates carried by labels assigned to speaker ``i`` and ``E_ij`` those
    among them that match another speaker's truth but not speaker ``i``'s.

    Returns ``(ratios, counts)`` keyed by speaker index (0-based).
    """
    if mapping is None:
        mapping = assign_labels(label_f0, truths, tol)
    n_v = defaultdict(int)
    e = defaultdict(int)
    for label, f in label_f0.items():
        if label not in mapping:
            continue
        i = mapping[label]
        own = truths[i]
        for k in np.flatnonzero((f > 0) & own.voiced):
            n_v[i] += 1
            if not _match(f[k], own.f0[k], tol) and any(
                _match(f[k], other.f0[k], tol)
                for j, other in enumerate(truths) if j != i
            ):
                e[i] += 1
    ratios = {i: (e[i] / n_v[i] if n_v[i] else None) for i in range(len(truths))}
    counts = {i: {"N_v": n_v[i], "E": e[i]} for i in range(len(truths))}
    return ratios, counts


def score(est_times, est_f0, truth, labels=None, truth2=None):
    """Score an estimate table against one or two reference tracks.

    With a single truth, each frame's first estimate is scored. With two
    truths, estimates are split by label, labels are mapped to speakers and
    GPE/VDE are reported per speaker along with SIE.
    """
    est_times = np.asarray(est_times, dtype=float)
    est_f0 = np.asarray(est_f0, dtype=float)
    report = ScoreReport()
    if truth2 is None:
        order = np.argsort(est_times, kind="stable")
        t, first = np.unique(est_times[order], return_index=True)
        aligned = align_to_truth(t, est_f0[order][first], truth)
        report.gpe, c1 = gpe(aligned, truth)
        report.vde, c2 = vde(aligned, truth)
        report.counts = {**c1, **c2}
        return report
    truths = [truth, truth2]
    if labels is None:
        labels = np.zeros(est_times.size, dtype=int)
    labels = np.asarray(labels)
    label_f0 = {
        lab: align_to_truth(est_times[labels == lab], est_f0[labels == lab], truth)
        for lab in np.unique(labels).tolist()
    }
    mapping = assign_labels(label_f0, truths)
    report.sie, sie_counts = sie(label_f0, truths, mapping)
    gpes, vdes, counts = {}, {}, {"SIE": sie_counts, "label_to_speaker": mapping}
    for i, tr in enumerate(truths):
        merged = np.zeros(tr.f0.size)
        for lab, f in label_f0.items():
            if mapping.get(lab) == i:
                fill = (merged == 0) & (f > 0)
                merged[fill] = f[fill]
        gpes[i], c1 = gpe(merged, tr)
        vdes[i], c2 = vde(merged, tr)
        counts[i] = {**c1, **c2}
    report.gpe, report.vde, report.counts = gpes, vdes, counts
    return report


def _power(x):
    return float(np.mean(np.asarray(x, dtype=float) ** 2))


def measure_snr(speech, noise):
    return 10.0 * np.log10(_power(speech) / _power(noise))


def mix_at_snr(speech, noise, snr_db):
    """Add ``noise`` to ``speech`` scaled to the requested SNR.

    Noise shorter than the speech is tiled from its start.

    Returns
    -------
    mixture, scaled_noise : ndarray
    """
    s = check_signal(speech, "speech", allow_empty=False)
    n = check_signal(noise, "noise", allow_empty=False)
    if n.size < s.size:
        n = np.tile(n, int(np.ceil(s.size / n.size)))
    n = n[:s.size]
    ps, pn = _power(s), _power(n)
    if ps == 0:
        raise ValueError("speech has zero power")
    if pn == 0:
        raise ValueError("noise has zero power")
    gain = np.sqrt(ps / (pn * 10.0 ** (snr_db / 10.0)))
    scaled = gain * n
    return s + scaled, scaled


def synth_harmonic(f0_track, n_harmonics=8, amplitudes=None, fs=16000, hop_s=0.01,
                   phases=None):
    """Harmonic signal following a per-frame pitch track.

    Pitch is held constant within each frame of ``hop_s`` seconds and the
    phase is integrated continuously across frames. Frames with ``f0 <= 0``
    are silent.

    Parameters
    ----------
    f0_track : array_like
        Pitch per frame in Hz.
    n_harmonics : int
    amplitudes : array_like, optional
        Per-harmonic amplitudes, shape ``(n_harmonics,)`` or
        ``(n_frames, n_harmonics)``. Defaults to all ones.
    phases : array_like, optional
        Constant phase offset per harmonic.
    """
    f0 = np.asarray(f0_track, dtype=float)
    if np.any(f0 * n_harmonics >= fs / 2.0):
        raise ValueError("highest harmonic exceeds the Nyquist frequency")
    hop = int(round(hop_s * fs))
    n = f0.size * hop
    if amplitudes is None:
        amplitudes = np.ones(n_harmonics)
    amps = np.asarray(amplitudes, dtype=float)
    if amps.ndim == 1:
        amps = np.broadcast_to(amps, (f0.size, n_harmonics))
    if phases is None:
        phases = np.zeros(n_harmonics)
    per_sample = np.repeat(f0, hop)
    voiced = per_sample > 0
    phase = 2.0 * np.pi * np.cumsum(np.concatenate(([0.0], per_sample[:-1]))) / fs
    env = np.repeat(amps, hop, axis=0)
    h = np.arange(1, n_harmonics + 1)
    out = np.sum(env * np.cos(phase[:, None] * h + np.asarray(phases)), axis=1)
    out[~voiced] = 0.0
    return out[:n]
