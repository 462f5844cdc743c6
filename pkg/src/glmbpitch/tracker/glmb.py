"""Delta-GLMB density with particle target densities.

A density is a list of hypotheses, each a set of labels with one
particle density per label and a probability weight. Particle densities
are shared between hypotheses through integer keys: a key stands for one
label together with the association history that produced its density.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dynamics import detection_prob, likelihood, nearest_grid_index, ou_propagate

log = logging.getLogger(__name__)

MISSED = 0


class Label(NamedTuple):
    birth_frame: int
    birth_index: int

    def __str__(self):
        return f"{self.birth_frame}.{self.birth_index}"


@dataclass(frozen=True)
class LabeledTargetDensity:
    """Weighted particle cloud over pitch for one label.

    ``history`` is a linked tuple ``(frame, measurement_index, parent)``
    recording every association this density has absorbed; measurement
    index 0 marks a missed detection.
    """

    label: Label
    particles: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    history: tuple | None = None

    @property
    def mean(self):
        return float(self.weights @ self.particles)

    @property
    def ess(self):
        return 1.0 / float(self.weights @ self.weights)

    def assoc_history(self):
        """Associations as a list of ``(frame, measurement_index)``, oldest first."""
        out = []
        node = self.history
        while node is not None:
            frame, idx, node = node
            out.append((frame, idx))
        return out[::-1]


@dataclass(frozen=True)
class Hypothesis:
    """Label set with per-label density keys and probability ``weight``.

    ``assoc`` is the association map of the latest update (label ->
    1-based measurement index, 0 for missed); empty after a prediction.
    """

    labels: tuple
    keys: tuple
    weight: float
    assoc: tuple = ()

    @property
    def label_set(self):
        return frozenset(self.labels)

    def assoc_map(self):
        return dict(zip(self.labels, self.assoc))


@dataclass
class BirthCandidate:
    label: Label
    r: float
    density: LabeledTargetDensity


@dataclass
class GlmbDensity:
    hypotheses: list
    densities: dict
    next_key: int = 0

    @classmethod
    def empty(cls):
        return cls(hypotheses=[Hypothesis((), (), 1.0)], densities={}, next_key=0)

    @classmethod
    def from_components(cls, label_sets, targets):
        """Build a density from ``[(labels, weight), ...]`` and ``{label: density}``.

        Each label uses the same density in every hypothesis.
        """
        keys = {}
        densities = {}
        for k, (label, dens) in enumerate(sorted(targets.items())):
            keys[label] = k
            densities[k] = dens
        hyps = []
        for labels, w in label_sets:
            labels = tuple(sorted(labels))
            hyps.append(Hypothesis(labels, tuple(keys[l] for l in labels), float(w)))
        out = cls(hypotheses=hyps, densities=densities, next_key=len(densities))
        out.normalize()
        return out

    def add_density(self, dens):
        key = self.next_key
        self.next_key += 1
        self.densities[key] = dens
        return key

    @property
    def total_weight(self):
        return float(sum(h.weight for h in self.hypotheses))

    def normalize(self):
        total = self.total_weight
        if total <= 0:
            raise ValueError("density has zero total weight")
        self.hypotheses = [
            Hypothesis(h.labels, h.keys, h.weight / total, h.assoc) for h in self.hypotheses
        ]

    def density(self, hypothesis, label):
        return self.densities[hypothesis.keys[hypothesis.labels.index(label)]]

    def label_weights(self):
        """Accumulated weight of every label over the hypotheses containing it."""
        acc = {}
        for h in self.hypotheses:
            for l in h.labels:
                acc[l] = acc.get(l, 0.0) + h.weight
        return acc

    def empty_weight(self):
        return float(sum(h.weight for h in self.hypotheses if not h.labels))

    def best_density(self, label):
        """Density of ``label`` in the highest-weight hypothesis containing it."""
        best = max((h for h in self.hypotheses if label in h.labels), key=lambda h: h.weight)
        return self.density(best, label)

    def cardinality(self):
        n = max((len(h.labels) for h in self.hypotheses), default=0)
        out = np.zeros(n + 1)
        for h in self.hypotheses:
            out[len(h.labels)] += h.weight
        return out

    def collect_garbage(self):
        used = {k for h in self.hypotheses for k in h.keys}
        self.densities = {k: v for k, v in self.densities.items() if k in used}

    def check(self, atol=1e-9):
        """Raise if weights are not normalized or a hypothesis repeats a label."""
        if abs(self.total_weight - 1.0) > atol:
            raise AssertionError(f"weights sum to {self.total_weight}")
        for h in self.hypotheses:
            if len(set(h.labels)) != len(h.labels):
                raise AssertionError(f"duplicate label in hypothesis {h.labels}")
            used = [a for a in h.assoc if a > 0]
            if len(used) != len(set(used)):
                raise AssertionError(f"measurement assigned twice in {h.assoc}")


def prune(hyps, params):
    """Drop hypotheses below the weight floor, keep the heaviest, renormalize."""
    total = sum(h.weight for h in hyps)
    if total <= 0:
        return []
    floor = params.hypothesis_weight_floor * total
    kept = [h for h in hyps if h.weight >= floor]
    if len(kept) > params.max_hypotheses:
        kept.sort(key=lambda h: -h.weight)
        kept = kept[:params.max_hypotheses]
    total = sum(h.weight for h in kept)
    return [Hypothesis(h.labels, h.keys, h.weight / total, h.assoc) for h in kept]


def _merge(weighted):
    """Sum weights of hypotheses sharing the same label/density keys."""
    merged = {}
    for labels, keys, w in weighted:
        k = (labels, keys)
        merged[k] = merged.get(k, 0.0) + w
    return [Hypothesis(labels, keys, w) for (labels, keys), w in merged.items()]


def _subset_weights(n, p):
    """All survival patterns of ``n`` targets with probability ``p`` each."""
    for mask in itertools.product((True, False), repeat=n):
        k = sum(mask)
        yield mask, p ** k * (1.0 - p) ** (n - k)


def predict(prior, births, params, grid, rng):
    """Propagate a posterior density one frame ahead and add births.

    Every label survives independently with probability ``p_survive``;
    surviving particle clouds move through the mean-reverting transition.
    Births form a labeled multi-Bernoulli density that multiplies every
    surviving hypothesis.
    """
    out = GlmbDensity(hypotheses=[], densities={}, next_key=prior.next_key)
    order = list(dict.fromkeys(k for h in prior.hypotheses for k in h.keys))
    moved = {}
    if order:
        # one batched draw for every live particle cloud
        clouds = [prior.densities[k].particles for k in order]
        x_all = ou_propagate(np.concatenate(clouds), grid, params, rng)
        bounds = np.cumsum([c.size for c in clouds])[:-1]
        for key, x in zip(order, np.split(x_all, bounds)):
            d = prior.densities[key]
            moved[key] = out.add_density(
                LabeledTargetDensity(d.label, x, d.weights, d.history)
            )

    p_s = params.p_survive
    floor = params.hypothesis_weight_floor
    survivors = []
    for h in prior.hypotheses:
        for mask, w in _subset_weights(len(h.labels), p_s):
            w *= h.weight
            if w <= 0 or w < floor * 1e-3:
                continue
            labels = tuple(l for l, m in zip(h.labels, mask) if m)
            keys = tuple(moved[k] for k, m in zip(h.keys, mask) if m)
            survivors.append((labels, keys, w))
    surv = prune(_merge(survivors), params)

    birth_keys = [out.add_density(b.density) for b in births]
    combined = []
    for mask in itertools.product((False, True), repeat=len(births)):
        wb = 1.0
        for b, m in zip(births, mask):
            wb *= b.r if m else 1.0 - b.r
        if wb <= 0:
            continue
        new_labels = [b.label for b, m in zip(births, mask) if m]
        new_keys = [k for k, m in zip(birth_keys, mask) if m]
        for h in surv:
            pairs = sorted(zip(h.labels + tuple(new_labels), h.keys + tuple(new_keys)))
            labels = tuple(p[0] for p in pairs)
            keys = tuple(p[1] for p in pairs)
            combined.append(Hypothesis(labels, keys, h.weight * wb))
    out.hypotheses = prune(combined, params)
    out.collect_garbage()
    return out


def _injective_maps(n_labels, options):
    """Association maps: each label gets 0 (missed) or a distinct measurement.

    ``options[i]`` lists the measurement indices label ``i`` may take.
    """
    def rec(i, used):
        if i == n_labels:
            yield ()
            return
        for tail in rec(i + 1, used):
            yield (MISSED,) + tail
        for j in options[i]:
            if j not in used:
                for tail in rec(i + 1, used | {j}):
                    yield (j,) + tail
    yield from rec(0, frozenset())


def _systematic_resample(weights, rng):
    n = weights.size
    positions = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, positions)


def update(pred, measurements, params, frame=0, rng=None):
    """Bayes update of a predicted density with one frame of pitch estimates.

    For every hypothesis all injective association maps are enumerated.
    A label assigned measurement ``z`` is weighted by
    ``p_D(x) g(z | x) / kappa``; a missed label by ``1 - p_D(x)``.
    Returns a new normalized and pruned density; each hypothesis records its
    association map in ``assoc`` (1-based measurement indices).
    """
    z = np.asarray(
        measurements.estimates if hasattr(measurements, "estimates") else measurements,
        dtype=float,
    )
    m = z.size
    kappa = params.clutter_intensity
    # per-density scores: eta[key][0] missed, eta[key][i] measurement i
    eta = {}
    psi = {}
    keys = list(pred.densities)
    if keys:
        clouds = [pred.densities[k].particles for k in keys]
        x_all = np.concatenate(clouds)
        pd = detection_prob(x_all, params)
        p_all = np.empty((m + 1, x_all.size))
        p_all[0] = 1.0 - pd
        if m:
            p_all[1:] = pd * likelihood(z[:, None], x_all[None, :], params) / kappa
        start = 0
        for key, c in zip(keys, clouds):
            p = p_all[:, start:start + c.size]
            start += c.size
            psi[key] = p
            eta[key] = p @ pred.densities[key].weights

    candidates = []
    for h in pred.hypotheses:
        n = len(h.labels)
        options = [[i for i in range(1, m + 1) if eta[k][i] > 0] for k in h.keys]
        for theta in _injective_maps(n, options):
            w = h.weight
            for k, t in zip(h.keys, theta):
                w *= eta[k][t]
            if w > 0:
                candidates.append((h, theta, w))

    if not candidates or sum(c[2] for c in candidates) <= 0:
        log.warning("frame %d: no plausible association, falling back to all-missed", frame)
        candidates = [(h, (MISSED,) * len(h.labels), h.weight) for h in pred.hypotheses]

    total = sum(c[2] for c in candidates)
    hyps = [Hypothesis(h.labels, h.keys, w / total, theta) for h, theta, w in candidates]
    hyps = prune(hyps, params)

    out = GlmbDensity(hypotheses=[], densities={}, next_key=pred.next_key)
    made = {}
    final = []
    for h in hyps:
        new_keys = []
        for label, key, t in zip(h.labels, h.keys, h.assoc):
            nk = made.get((key, t))
            if nk is None:
                d = pred.densities[key]
                w = d.weights * psi[key][t]
                s = w.sum()
                w = w / s if s > 0 else np.full_like(w, 1.0 / w.size)
                x = d.particles
                if rng is not None and 1.0 / float(w @ w) < params.resample_ess_fraction * w.size:
                    idx = _systematic_resample(w, rng)
                    x = x[idx]
                    w = np.full(w.size, 1.0 / w.size)
                nk = out.add_density(
                    LabeledTargetDensity(label, x, w, (frame, int(t), d.history))
                )
                made[(key, t)] = nk
            new_keys.append(nk)
        final.append(Hypothesis(h.labels, tuple(new_keys), h.weight, h.assoc))
    out.hypotheses = final
    return out


def newborn_likelihood(measurements, updated):
    """Probability that each measurement was not used by any existing target."""
    n = len(measurements.estimates if hasattr(measurements, "estimates") else measurements)
    used = np.zeros(n)
    for h in updated.hypotheses:
        for t in h.assoc:
            if t > 0:
                used[t - 1] += h.weight
    return np.clip(1.0 - used, 0.0, 1.0)


def make_births(measurements, r_n, grid, params, frame, rng):
    """Bernoulli birth candidates driven by poorly explained measurements.

    Each measurement with ``r_N > 0`` spawns ``m_birth`` particles drawn
    around the grid level nearest to it, with existence
    ``min(r_birth_max, lambda_birth * r_N / sum(r_N))``.
    """
    z = np.asarray(
        measurements.estimates if hasattr(measurements, "estimates") else measurements,
        dtype=float,
    )
    r_n = np.asarray(r_n, dtype=float)
    total = float(r_n.sum())
    if total <= 0:
        return []
    births = []
    for i, (f, r) in enumerate(zip(z, r_n)):
        r_b = min(params.r_birth_max, params.lambda_birth * (r / total))
        if r_b <= 0:
            continue
        q = nearest_grid_index(grid, f) - 1
        x = grid.means[q] + grid.stds[q] * rng.standard_normal(params.m_birth)
        x = np.clip(x, 1e-3, params.sample_rate / 2.0 - 1e-3)
        label = Label(frame, i)
        dens = LabeledTargetDensity(label, x, np.full(params.m_birth, 1.0 / params.m_birth))
        births.append(BirthCandidate(label=label, r=r_b, density=dens))
    return births
