"""
Pydantic schema of a run configuration.

Lengths are plain numbers in ``*_um`` keys, times in ``*_ns`` keys, phases in
``*_deg`` keys. Frequencies are strings carrying an explicit unit suffix
(``"7 MHz"``, ``"3.14 GHz"``); a bare number is rejected.
"""

import hashlib
import json
import math
import re
from typing import Annotated, List, Literal, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    model_validator,
)

from dualloop.models.geometry import LoopSpec
from dualloop.models.spin import DriveTone, NoiseModel, OdmrParams, SpinParams

FREQ_UNITS = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9}
_FREQ_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(Hz|kHz|MHz|GHz)\s*$")


def parse_frequency(value) -> float:
    """``"7 MHz"`` -> 7e6. Numbers without a unit are refused."""
    if isinstance(value, bool) or not isinstance(value, str):
        raise ValueError(
            f"frequency {value!r} needs an explicit unit suffix ({', '.join(FREQ_UNITS)})"
        )
    match = _FREQ_RE.match(value)
    if not match:
        raise ValueError(
            f"cannot read frequency {value!r}; expected a number followed by "
            f"one of {', '.join(FREQ_UNITS)}"
        )
    return float(match.group(1)) * FREQ_UNITS[match.group(2)]


Frequency = Annotated[float, BeforeValidator(parse_frequency)]
Window = Tuple[float, float]


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _ordered(window: Window, name: str) -> None:
    if not window[1] > window[0]:
        raise ValueError(f"{name} must be an increasing pair, got {list(window)}")


class ScenarioBlock(_Block):
    name: str
    seed: NonNegativeInt = 0
    workers: PositiveInt = 1


class GeometryConfig(_Block):
    shape: Literal["circle", "rectangle"] = "circle"
    inner_diameter_um: PositiveFloat
    outer_diameter_um: PositiveFloat
    spacing_um: PositiveFloat
    ring_count: NonNegativeInt = 2
    z_um: float = 1.0
    segments: int = Field(1024, ge=16)
    winding: Literal[1, -1] = 1

    def loop(self, diameter_um: float, amplitude: float = 1.0, phase: float = 0.0) -> LoopSpec:
        # rectangles are squares with the diameter as side length
        if self.shape == "rectangle":
            return LoopSpec.rectangle(
                diameter_um, diameter_um, winding=self.winding, amplitude=amplitude, phase=phase
            )
        return LoopSpec.circle(
            diameter_um,
            winding=self.winding,
            amplitude=amplitude,
            phase=phase,
            segment_count=self.segments,
        )

    def inner_loop(self, amplitude: float = 1.0, phase: float = 0.0) -> LoopSpec:
        return self.loop(self.inner_diameter_um, amplitude, phase)

    def outer_loop(self, amplitude: float = 1.0, phase: float = 0.0) -> LoopSpec:
        return self.loop(self.outer_diameter_um, amplitude, phase)


class DriveConfig(_Block):
    inner_current_a: NonNegativeFloat = 1.0
    rabi: Frequency
    phase_deg: float = 0.0
    detuning: Frequency
    reference_power_mw: PositiveFloat = 50.0
    reference_rabi: Frequency
    antenna_coupling_ratio: PositiveFloat = 200.0

    def tone(self) -> DriveTone:
        return DriveTone(self.rabi, math.radians(self.phase_deg), self.detuning)


class SpinConfig(_Block):
    resonance: Frequency
    zero_field_splitting: Frequency
    gyromagnetic_ratio_hz_per_t: PositiveFloat = 2.80e10
    t_base_ns: PositiveFloat = 761.0
    contrast_max: float = Field(0.3, gt=0, le=1)
    shots: int = Field(2000, ge=100)
    photons_per_shot: NonNegativeFloat = 0.0
    t2_ns: PositiveFloat = 1000.0


class NoiseConfig(_Block):
    rabi: Optional[Frequency] = None  # null: calibrate against calibrate_target_ns
    calibrate_target_ns: PositiveFloat = 249.0
    phase_policy: Literal["uniform", "fixed"] = "uniform"
    suppression: float = Field(0.03, ge=0, le=1)
    phase_deg: float = 0.0


class OdmrConfig(_Block):
    linewidth: Frequency
    saturation_rabi: Frequency
    photons_per_point: PositiveFloat = 1e6
    inner_rabi: Frequency
    outer_rabi: Frequency
    static_offset_deg: float = 135.0
    points: int = Field(81, ge=5)
    power_rabi: List[Frequency] = Field(default_factory=list)

    def params(self) -> OdmrParams:
        return OdmrParams(self.linewidth, self.saturation_rabi, self.photons_per_point)


class SweepConfig(_Block):
    scan_start_um: NonNegativeFloat = 0.0
    scan_stop_um: PositiveFloat = 200.0
    scan_step_um: PositiveFloat = 0.5
    single_fit_window_um: Window = (80.0, 200.0)
    dual_fit_window_um: Window = (22.0, 50.0)
    dual_beyond_null_window_um: Window = (80.0, 200.0)
    axial_scan_um: Window = (0.1, 500.0)
    axial_points: int = Field(241, ge=5)
    axial_fit_window_um: Window = (100.0, 500.0)
    ratio_factors: List[NonNegativeFloat] = Field(default_factory=list)
    ratio_scan_um: Window = (21.0, 200.0)
    phase_step_deg: PositiveFloat = 10.0
    tau_stop_ns: PositiveFloat = 1000.0
    tau_points: int = Field(201, ge=20)
    power_mw: List[PositiveFloat] = Field(default_factory=list)
    suppressions: List[float] = Field(default_factory=list)
    penalty_db: List[float] = Field(default_factory=list)
    imbalance_db: List[float] = Field(default_factory=list)
    field_map_half_um: PositiveFloat = 90.0
    field_map_step_um: PositiveFloat = 2.0

    @model_validator(mode="after")
    def _check_ranges(self):
        if not self.scan_stop_um > self.scan_start_um:
            raise ValueError("scan_stop_um must exceed scan_start_um")
        for name in (
            "single_fit_window_um",
            "dual_fit_window_um",
            "dual_beyond_null_window_um",
            "axial_scan_um",
            "axial_fit_window_um",
            "ratio_scan_um",
        ):
            _ordered(getattr(self, name), name)
        if self.axial_scan_um[0] <= 0:
            raise ValueError("axial_scan_um must start above the loop plane (> 0)")
        if any(not 0 < s <= 1 for s in self.suppressions):
            raise ValueError("suppressions must lie in (0, 1]")
        if any(db > 0 for db in self.imbalance_db):
            raise ValueError("imbalance_db entries must be <= 0")
        return self


class ReferenceConfig(_Block):
    table: Optional[str] = None


class ScenarioConfig(_Block):
    scenario: ScenarioBlock
    geometry: GeometryConfig
    drive: DriveConfig
    spin: SpinConfig
    noise: NoiseConfig
    odmr: OdmrConfig
    sweep: SweepConfig
    reference: ReferenceConfig = ReferenceConfig()

    @property
    def name(self) -> str:
        return self.scenario.name

    @property
    def seed(self) -> int:
        return self.scenario.seed

    def config_hash(self) -> str:
        """First 8 hex digits of the SHA-256 of the canonical JSON form.

        The worker count is left out: it never changes results.
        """
        data = self.model_dump(mode="json", exclude={"scenario": {"workers"}})
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:8]

    def with_overrides(
        self,
        name: Optional[str] = None,
        seed: Optional[int] = None,
        workers: Optional[int] = None,
    ) -> "ScenarioConfig":
        block = self.scenario.model_copy(
            update={
                k: v
                for k, v in (("name", name), ("seed", seed), ("workers", workers))
                if v is not None
            }
        )
        return self.model_copy(update={"scenario": block})

    def spin_params(self) -> SpinParams:
        s = self.spin
        return SpinParams(
            resonance_hz=s.resonance,
            zero_field_splitting_hz=s.zero_field_splitting,
            gyromagnetic_ratio=s.gyromagnetic_ratio_hz_per_t,
            t_base=s.t_base_ns * 1e-9,
            contrast_max=s.contrast_max,
            shots=s.shots,
            seed=self.seed,
            photons_per_shot=s.photons_per_shot,
            t2=s.t2_ns * 1e-9,
        )

    def noise_model(
        self, rabi_hz: float, suppression: float = 1.0, aggressors: int = 1
    ) -> NoiseModel:
        return NoiseModel(
            rabi_hz=rabi_hz,
            phase_policy=self.noise.phase_policy,
            suppression=suppression,
            phase=math.radians(self.noise.phase_deg),
            aggressors=aggressors,
        )

    def tau_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.sweep.tau_stop_ns * 1e-9, self.sweep.tau_points)
