"""Track extraction from the posterior and the pause-bridging label registry."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TrackRecord:
    track_id: int
    first_frame: int
    pitches: list = field(default_factory=list)
    frames: list = field(default_factory=list)
    missed_frames: list = field(default_factory=list)

    @property
    def mean_pitch(self):
        return sum(self.pitches) / len(self.pitches) if self.pitches else float("nan")

    def add(self, frame, pitch):
        if self.frames and frame > self.frames[-1] + 1:
            self.missed_frames.extend(range(self.frames[-1] + 1, frame))
        self.frames.append(frame)
        self.pitches.append(pitch)


@dataclass
class TrackRegistry:
    """Confirmed tracks and the mapping from filter labels to track ids."""

    tolerance: float = 0.2
    tracks: dict = field(default_factory=dict)
    label_to_track: dict = field(default_factory=dict)

    def _new(self, frame):
        tid = len(self.tracks) + 1
        self.tracks[tid] = TrackRecord(track_id=tid, first_frame=frame)
        return tid

    def match(self, pitch):
        """Closest registered track within the relative tolerance, or None.

        Ties in relative difference go to the older track.
        """
        best = None
        for tid, rec in self.tracks.items():
            mean = rec.mean_pitch
            if not mean > 0:
                continue
            rel = abs(pitch - mean) / mean
            if rel < self.tolerance and (best is None or rel < best[0]):
                best = (rel, tid)
        return None if best is None else best[1]

    def resolve(self, label, pitch, frame, adapt=True):
        """Track id for ``label``, assigning one on first confirmation."""
        tid = self.label_to_track.get(label)
        if tid is None:
            tid = self.match(pitch) if adapt else None
            if tid is None:
                tid = self._new(frame)
            self.label_to_track[label] = tid
        return tid


@dataclass(frozen=True)
class TrackRow:
    frame: int
    time: float
    label: int
    f0: float
    weight: float


@dataclass
class TrackOutput:
    rows: list = field(default_factory=list)
    registry: TrackRegistry = field(default_factory=TrackRegistry)
    n_frames: int = 0

    @property
    def labels(self):
        return sorted({r.label for r in self.rows})

    def frame_rows(self, frame):
        return [r for r in self.rows if r.frame == frame]

    def by_label(self):
        out = {}
        for r in self.rows:
            out.setdefault(r.label, []).append(r)
        return out


def _eligible(labels, frame):
    """Labels that have survived at least one update before ``frame``."""
    if frame is None:
        return list(labels)
    return [l for l in labels if l.birth_frame < frame]


def extract_single(density, frame=None, threshold=0.5):
    """Label with the largest accumulated weight and its pitch, or None.

    Nothing is returned when the empty hypothesis carries more than
    ``1 - threshold`` of the mass. Labels in their first update (born at
    ``frame``) are not reported yet.
    """
    if 1.0 - density.empty_weight() < threshold:
        return None
    weights = density.label_weights()
    candidates = sorted(_eligible(weights, frame))
    if not candidates:
        return None
    label = max(candidates, key=lambda l: weights[l])
    return label, density.best_density(label).mean, weights[label]


def extract_multi(density, registry, frame, time=0.0, adapt=True):
    """Rows for the labels of the most probable hypothesis of the most probable size.

    Each reported label is resolved to a registry track; a label seen for
    the first time joins the closest registered track within the relative
    tolerance (bridging pauses), otherwise it opens a new track. When two
    labels resolve to the same track only the heavier one is reported.
    """
    card = density.cardinality()
    n_hat = int(np.argmax(card))
    if n_hat == 0:
        return []
    best = max((h for h in density.hypotheses if len(h.labels) == n_hat),
               key=lambda h: h.weight)
    weights = density.label_weights()
    ranked = sorted(_eligible(best.labels, frame), key=lambda l: (-weights[l], l))
    rows = {}
    for label in ranked:
        pitch = density.density(best, label).mean
        tid = registry.resolve(label, pitch, frame, adapt=adapt)
        if tid not in rows:
            rows[tid] = TrackRow(frame, time, tid, pitch, weights[label])
    for tid, row in rows.items():
        registry.tracks[tid].add(frame, row.f0)
    return sorted(rows.values(), key=lambda r: r.label)
