from dualloop.models.experiments import ComparisonReport, MetricCheck, ScenarioResult
from dualloop.models.fields import (
    POWER_FLOOR_T2,
    PowerLawFit,
    CancellationSolution,
    FieldPhasor,
    LineScan,
    PhaseSweep,
    RatioSweepPoint,
    SinusoidFit,
)
from dualloop.models.geometry import (
    UM,
    Circle,
    LoopSpec,
    Phasor,
    Point3,
    Rectangle,
    Segment,
    Site,
    SiteLayout,
)
from dualloop.models.spin import (
    DecayingSinusoidFit,
    DriveTone,
    GaussianDipFit,
    NoiseModel,
    OdmrParams,
    OdmrSpectrum,
    PenaltyResult,
    PhaseContrast,
    RabiSchedule,
    RabiTrace,
    SpinParams,
    ToneInterval,
)

__all__ = [
    "POWER_FLOOR_T2",
    "UM",
    "CancellationSolution",
    "Circle",
    "ComparisonReport",
    "DecayingSinusoidFit",
    "DriveTone",
    "FieldPhasor",
    "GaussianDipFit",
    "LineScan",
    "LoopSpec",
    "MetricCheck",
    "NoiseModel",
    "OdmrParams",
    "OdmrSpectrum",
    "PenaltyResult",
    "PhaseContrast",
    "PhaseSweep",
    "PowerLawFit",
    "Phasor",
    "Point3",
    "RabiSchedule",
    "RabiTrace",
    "RatioSweepPoint",
    "Rectangle",
    "ScenarioResult",
    "Segment",
    "SinusoidFit",
    "Site",
    "SiteLayout",
    "SpinParams",
    "ToneInterval",
]
