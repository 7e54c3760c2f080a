"""Spin, drive, noise and fitted-observable value types."""

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from dualloop.middleware.error_handler import InvalidParameterError
from dualloop.models.fields import SinusoidFit

PHASE_POLICIES = ("fixed", "uniform")


@dataclass(frozen=True)
class SpinParams:
    resonance_hz: float = 3.14e9
    zero_field_splitting_hz: float = 2.87e9  # informational
    gyromagnetic_ratio: float = 2.80e10  # Hz/T
    t_base: float = 761e-9
    contrast_max: float = 0.3
    shots: int = 2000
    seed: int = 0
    photons_per_shot: float = 0.0  # 0 disables readout jitter
    t2: float = 1e-6

    def __post_init__(self):
        if not self.t_base > 0:
            raise InvalidParameterError(f"t_base must be > 0, got {self.t_base}")
        if not self.resonance_hz > 0:
            raise InvalidParameterError(f"resonance must be > 0, got {self.resonance_hz}")
        if not self.gyromagnetic_ratio > 0:
            raise InvalidParameterError("gyromagnetic ratio must be > 0")
        if not 0 < self.contrast_max <= 1:
            raise InvalidParameterError(f"contrast_max must be in (0, 1], got {self.contrast_max}")
        if self.shots < 1:
            raise InvalidParameterError(f"shots must be positive, got {self.shots}")


@dataclass(frozen=True)
class DriveTone:
    """Rabi amplitude Ω/2π (Hz), drive phase (rad) and detuning Δ (Hz)."""

    rabi_hz: float
    phase: float = 0.0
    detuning_hz: float = 0.0

    def __post_init__(self):
        if not self.rabi_hz >= 0:
            raise InvalidParameterError(f"Rabi amplitude must be >= 0, got {self.rabi_hz}")

    @property
    def phasor(self) -> complex:
        return self.rabi_hz * complex(math.cos(self.phase), math.sin(self.phase))


@dataclass(frozen=True)
class NoiseModel:
    rabi_hz: float = 0.0
    phase_policy: str = "uniform"
    suppression: float = 1.0  # applied to noise power
    phase: float = 0.0  # used by the fixed policy
    aggressors: int = 1  # in-phase aggressor tones sharing the per-shot phase

    def __post_init__(self):
        if self.phase_policy not in PHASE_POLICIES:
            raise InvalidParameterError(
                f"phase policy must be one of {PHASE_POLICIES}, got '{self.phase_policy}'"
            )
        if not 0 <= self.suppression <= 1:
            raise InvalidParameterError(f"suppression must be in [0, 1], got {self.suppression}")
        if not self.rabi_hz >= 0:
            raise InvalidParameterError(f"noise amplitude must be >= 0, got {self.rabi_hz}")
        if self.aggressors < 1:
            raise InvalidParameterError(f"aggressor count must be >= 1, got {self.aggressors}")

    @property
    def effective_rabi_hz(self) -> float:
        return self.aggressors * self.rabi_hz * math.sqrt(self.suppression)


@dataclass(frozen=True)
class OdmrParams:
    """Dip linewidth, saturation drive and photon budget of a CW ODMR sweep."""

    sigma_hz: float = 2.5e6
    saturation_rabi_hz: float = 2.0e6
    photons_per_point: float = 1e6

    def __post_init__(self):
        if not (self.sigma_hz > 0 and self.saturation_rabi_hz > 0):
            raise InvalidParameterError("ODMR linewidth and saturation drive must be > 0")
        if not self.photons_per_point > 0:
            raise InvalidParameterError(
                f"photons per point must be > 0, got {self.photons_per_point}"
            )


@dataclass(frozen=True)
class ToneInterval:
    duration: float
    tones: Tuple[DriveTone, ...] = ()


@dataclass(frozen=True)
class DecayingSinusoidFit:
    """``amplitude * cos(2π f τ + phase) * exp(-τ / t_rabi) + offset``."""

    frequency_hz: float
    t_rabi: float
    amplitude: float
    offset: float
    phase: float
    frequency_err: float
    t_rabi_err: float
    amplitude_err: float
    offset_err: float
    phase_err: float
    residual: float
    restarts: int = 0

    def evaluate(self, tau: np.ndarray) -> np.ndarray:
        return (
            self.amplitude
            * np.cos(2 * np.pi * self.frequency_hz * tau + self.phase)
            * np.exp(-tau / self.t_rabi)
            + self.offset
        )

    def summary(self, seed: Optional[int] = None) -> dict:
        return {
            "frequency_hz": self.frequency_hz,
            "t_rabi_ns": self.t_rabi * 1e9,
            "t_rabi_err_ns": self.t_rabi_err * 1e9,
            "amplitude": self.amplitude,
            "offset": self.offset,
            "seed": seed,
        }


@dataclass(frozen=True)
class GaussianDipFit:
    """``baseline * (1 - contrast * exp(-(f - centre)^2 / (2 sigma^2)))``.

    ``contrast`` is kept inside the physical range; ``contrast_raw`` is the
    unconstrained estimate, which noise can push below zero.
    """

    centre_hz: float
    sigma_hz: float
    contrast: float
    baseline: float
    centre_err: float
    sigma_err: float
    contrast_err: float
    baseline_err: float
    residual: float
    shape_fixed: bool = False
    contrast_raw: float = math.nan

    def clipped(self, upper: float) -> "GaussianDipFit":
        return replace(self, contrast=float(min(max(self.contrast, 0.0), upper)))

    def summary(self) -> dict:
        return {
            "centre_hz": self.centre_hz,
            "sigma_hz": self.sigma_hz,
            "contrast": self.contrast,
            "contrast_err": self.contrast_err,
        }


@dataclass(frozen=True, eq=False)
class RabiTrace:
    tau: np.ndarray
    population: np.ndarray
    fit: Optional[DecayingSinusoidFit] = None
    seed: int = 0

    @property
    def signal(self) -> np.ndarray:
        """Normalised PL-like signal 1 - 2P in [-1, 1]."""
        return 1.0 - 2.0 * self.population

    @property
    def fit_values(self) -> np.ndarray:
        if self.fit is None:
            return np.full_like(self.tau, np.nan)
        return (1.0 - self.fit.evaluate(self.tau)) / 2.0


@dataclass(frozen=True, eq=False)
class OdmrSpectrum:
    freq: np.ndarray
    pl: np.ndarray
    fit: GaussianDipFit
    power: float = 0.0  # normalised to saturation power
    true_contrast: float = 0.0


@dataclass(frozen=True, eq=False)
class PhaseContrast:
    phases: np.ndarray
    contrast: np.ndarray
    contrast_err: np.ndarray
    fit: SinusoidFit
    contrast_raw: Optional[np.ndarray] = None  # unclipped, what the sinusoid is fitted to

    @property
    def min_phase_deg(self) -> float:
        return float(np.degrees(self.fit.phase_min) % 360.0)

    @property
    def normalized_min_power(self) -> float:
        return self.fit.normalized_minimum


@dataclass(frozen=True)
class PenaltyResult:
    reduction: float
    error: float
    t_clean: float
    t_noisy: float
    noise_rabi_hz: float


@dataclass(frozen=True)
class RabiSchedule:
    """Pulse timing of one Rabi shot (seconds)."""

    polarize: float
    microwave: float
    readout: float
    signal_window: float
    reference_window: float
    segments: Tuple[Tuple[str, float, float], ...] = field(default_factory=tuple)

    @property
    def duration(self) -> float:
        return self.polarize + self.microwave + self.readout
