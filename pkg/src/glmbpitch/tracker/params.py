from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .._validation import check_positive, check_probability


@dataclass(frozen=True)
class TrackerParams:
    """Model constants of the pitch tracker.

    Defaults reproduce the published experimental setup with a 10 ms frame
    step. ``clutter_intensity`` is a Poisson intensity per Hz and
    ``meas_std`` the standard deviation (Hz) of the pitch likelihood.
    """

    alpha: float = 0.1
    t_step: float = 0.01
    mu_step: float = 40.0
    kappa_mu: float = 0.1
    f0_min: float = 60.0
    f0_max: float = 500.0
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
    sample_rate: float = 16000.0
    transition_noise: str = "sqrt_dt"

    def __post_init__(self):
        for name in ("r_birth_max", "p_survive", "p_detect_max", "hypothesis_weight_floor",
                     "resample_ess_fraction", "confirm_threshold"):
            check_probability(getattr(self, name), name)
        if not 0 < self.alpha * self.t_step < 1:
            raise ValueError("alpha * t_step must lie in (0, 1)")
        if not 0 <= self.kappa_mu < 1:
            raise ValueError("kappa_mu must lie in [0, 1)")
        for name in ("mu_step", "meas_std", "clutter_intensity", "detect_spread",
                     "lambda_birth", "m_birth", "max_hypotheses", "sample_rate"):
            check_positive(getattr(self, name), name)
        if self.transition_noise not in ("per_step", "sqrt_dt"):
            raise ValueError("transition_noise must be 'per_step' or 'sqrt_dt'")
        if not 0 < self.f0_min < self.f0_max:
            raise ValueError("need 0 < f0_min < f0_max")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def as_dict(self):
        return asdict(self)
