"""Run configuration: defaults, TOML file values and command-line overrides."""
from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass, fields

from .estimator import DEFAULT_THRESHOLD, FrameParams
from .tracker.params import TrackerParams

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

SEED_ENV = "PITCHTRACK_SEED"

_TRACKER_OWN = [f.name for f in fields(TrackerParams)
                if f.name not in ("f0_min", "f0_max", "sample_rate", "t_step")]


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of the pipeline in one flat record.

    The tracker's frame step follows ``hop_ms``; the pitch range and sample
    rate are shared between estimator and tracker.
    """

    # signal and filterbank
    sample_rate: int = 16000
    f_min: float = 60.0
    f_max: float = 1270.0
    eta_c: float = 1.0
    order: int = 4
    # framing and peak picking
    f0_min: float = 60.0
    f0_max: float = 500.0
    hop_ms: float = 10.0
    threshold: float = DEFAULT_THRESHOLD
    multi: bool = False
    # tracker
    alpha: float = 0.1
    mu_step: float = 40.0
    kappa_mu: float = 0.1
    m_birth: int = 1000
    lambda_birth: float = 0.3
    r_birth_max: float = 0.15
    p_survive: float = 0.8
    p_detect_max: float = 0.98
    f_mid: float = 280.0
    detect_spread: float = 100.0
    meas_std: float = 5.0
    clutter_intensity: float = 1e-4
    max_hypotheses: int = 300
    hypothesis_weight_floor: float = 1e-6
    resample_ess_fraction: float = 0.5
    confirm_threshold: float = 0.5
    relabel_tolerance: float = 0.2
    transition_noise: str = "sqrt_dt"
    seed: int = 0

    def __post_init__(self):
        if self.sample_rate != 16000:
            raise ValueError("the pipeline runs at 16000 Hz; input is resampled on load")
        # build the derived records once so bad values fail early
        self.tracker_params()
        self.frame_params()

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    @property
    def mode(self):
        return "multi" if self.multi else "single"

    def tracker_params(self):
        own = {k: getattr(self, k) for k in _TRACKER_OWN}
        return TrackerParams(t_step=self.hop_ms * 1e-3, f0_min=self.f0_min,
                             f0_max=self.f0_max, sample_rate=float(self.sample_rate), **own)

    def frame_params(self):
        return FrameParams.from_pitch_range(self.sample_rate, self.f0_min, self.f0_max,
                                            self.hop_ms, self.threshold, self.mode)

    def estimator_kwargs(self):
        return dict(f0_min=self.f0_min, f0_max=self.f0_max, f_min=self.f_min,
                    f_max=self.f_max, eta_c=self.eta_c, order=self.order,
                    hop_ms=self.hop_ms, threshold=self.threshold, multi=self.multi)

    def as_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **changes):
        return dataclasses.replace(self, **_coerce(changes))


def _coerce(values):
    """Cast values to the declared field types; rejects unknown keys."""
    types = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for key, value in values.items():
        if key not in types:
            raise KeyError(f"unknown configuration key {key!r}")
        kind = types[key]
        if kind == "bool":
            if isinstance(value, str):
                low = value.strip().lower()
                if low not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(f"{key}: expected a boolean, got {value!r}")
                value = low in ("true", "1", "yes")
            elif not isinstance(value, bool):
                raise ValueError(f"{key}: expected a boolean, got {value!r}")
        elif kind == "int":
            if isinstance(value, bool):
                raise ValueError(f"{key}: expected an integer, got {value!r}")
            as_float = float(value)
            if not as_float.is_integer():
                raise ValueError(f"{key}: expected an integer, got {value!r}")
            value = int(as_float)
        elif kind == "float":
            if isinstance(value, bool):
                raise ValueError(f"{key}: expected a number, got {value!r}")
            value = float(value)
        else:
            value = str(value)
        out[key] = value
    return out


def load_config_file(path):
    """Flat key/value TOML file as a dict."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ValueError(f"{path}: tables are not supported ({', '.join(nested)}); use flat keys")
    return data


def resolve(file_path=None, overrides=None, environ=None):
    """Defaults, then file values, then ``overrides``.

    The seed falls back to ``PITCHTRACK_SEED`` when neither the file nor the
    overrides set it.
    """
    environ = os.environ if environ is None else environ
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    merged = {}
    if file_path is not None:
        merged.update(load_config_file(file_path))
    if "seed" not in merged and "seed" not in overrides and environ.get(SEED_ENV):
        merged["seed"] = environ[SEED_ENV]
    merged.update(overrides)
    return RunConfig(**_coerce(merged))
