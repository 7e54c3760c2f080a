"""
Two-level spin dynamics: closed-form Rabi populations, rotating-frame
propagation of piecewise tone schedules, Monte-Carlo Rabi traces with a
random-phase crosstalk tone, and the metrics derived from fitted decay times.

Rabi amplitudes are Ω/2π in Hz throughout. The rotating-frame Hamiltonian of a
constant drive is H = π (Δ σz + Re Ω σx + Im Ω σy), so a resonant tone gives
P(τ) = sin²(π Ω τ).
"""

import cmath
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from dualloop.middleware.error_handler import (
    ContractViolationError,
    InfeasibleTargetError,
    InvalidParameterError,
)
from dualloop.models.spin import (
    DriveTone,
    NoiseModel,
    PenaltyResult,
    RabiSchedule,
    RabiTrace,
    SpinParams,
    ToneInterval,
)
from dualloop.services.fitting import fit_decaying_sinusoid

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 2.80e10  # Hz/T
MIN_SHOTS = 100
MIN_DRIVE_PERIODS = 3
SHOT_CHUNK = 250
STEPS_PER_CYCLE = 64
JITTER_KEY = 1

POLARIZE_S = 3e-6
READOUT_S = 3e-6
SIGNAL_WINDOW_S = 0.5e-6
REFERENCE_WINDOW_S = 1.5e-6


def rabi_frequency(b_perp, gamma: float = DEFAULT_GAMMA):
    """Rabi frequency f = γ B⊥ / 2 for a linearly polarised drive of amplitude B⊥."""
    b = np.asarray(b_perp, dtype=float)
    if np.any(b < 0):
        raise InvalidParameterError(f"drive field must be >= 0, got {b_perp}")
    if not gamma > 0:
        raise InvalidParameterError(f"gyromagnetic ratio must be > 0, got {gamma}")
    f = gamma * b / 2.0
    return float(f) if f.ndim == 0 else f


def required_field(rabi_hz: float, gamma: float = DEFAULT_GAMMA) -> float:
    """Drive field amplitude (tesla) that produces ``rabi_hz``."""
    if rabi_hz < 0:
        raise InvalidParameterError(f"Rabi frequency must be >= 0, got {rabi_hz}")
    return 2.0 * rabi_hz / gamma


def total_rabi_hz(tones: Sequence[DriveTone]) -> float:
    return abs(sum((t.phasor for t in tones), 0j))


def shot_population(tau, tones: Sequence[DriveTone]):
    """sin²(π f τ) with f the magnitude of the coherent phasor sum of resonant tones."""
    tones = list(tones)
    if any(t.detuning_hz != 0 for t in tones):
        raise ContractViolationError(
            "closed-form population needs resonant tones; use bloch_evolve for detuned drives"
        )
    p = np.sin(np.pi * total_rabi_hz(tones) * np.asarray(tau, dtype=float)) ** 2
    return float(p) if p.ndim == 0 else p


def _propagators(omega: complex, delta: float, durations) -> np.ndarray:
    """(n, 2, 2) propagators exp(-i H t) of a constant drive."""
    t = np.atleast_1d(np.asarray(durations, dtype=float))
    h = math.sqrt(abs(omega) ** 2 + delta**2)
    u = np.zeros((len(t), 2, 2), dtype=complex)
    if h == 0:
        u[:, 0, 0] = u[:, 1, 1] = 1.0
        return u
    nx, ny, nz = omega.real / h, omega.imag / h, delta / h
    c = np.cos(np.pi * h * t)
    s = np.sin(np.pi * h * t)
    u[:, 0, 0] = c - 1j * s * nz
    u[:, 1, 1] = c + 1j * s * nz
    u[:, 0, 1] = -1j * s * (nx - 1j * ny)
    u[:, 1, 0] = -1j * s * (nx + 1j * ny)
    return u


def _interval_propagators(interval: ToneInterval, t_start: float, durations) -> np.ndarray:
    tones = interval.tones
    detunings = {t.detuning_hz for t in tones}
    if len(detunings) <= 1:
        delta = detunings.pop() if detunings else 0.0
        return _propagators(sum((t.phasor for t in tones), 0j), delta, durations)

    # mixed detunings: midpoint slices in the frame of the qubit resonance
    fastest = max(abs(t.detuning_hz) for t in tones) + sum(t.rabi_hz for t in tones)
    out = []
    for d in np.atleast_1d(durations):
        steps = max(1, math.ceil(d * fastest * STEPS_PER_CYCLE))
        dt = d / steps
        u = np.eye(2, dtype=complex)
        for j in range(steps):
            tm = t_start + (j + 0.5) * dt
            omega = sum(
                t.rabi_hz * cmath.exp(1j * (t.phase + 2 * np.pi * t.detuning_hz * tm))
                for t in tones
            )
            u = _propagators(omega, 0.0, dt)[0] @ u
        out.append(u)
    return np.array(out)


def bloch_evolve(intervals: Sequence[ToneInterval], tau=None) -> np.ndarray:
    """Excited-state population of a spin starting in |0⟩ under a piecewise tone schedule.

    Populations are sampled at the times ``tau`` (seconds from the schedule
    start), or at the end of every interval when ``tau`` is omitted.
    """
    intervals = list(intervals)
    if any(iv.duration < 0 for iv in intervals):
        raise InvalidParameterError("interval durations must be >= 0")
    ends = np.cumsum([iv.duration for iv in intervals])
    total = float(ends[-1]) if len(ends) else 0.0
    samples = ends if tau is None else np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(samples < 0) or np.any(samples > total * (1 + 1e-12)):
        raise InvalidParameterError(f"sample times must lie within [0, {total:.6g}] s")

    pops = np.zeros(len(samples))
    done = samples <= 0
    state = np.array([1.0, 0.0], dtype=complex)
    t0 = 0.0
    for iv in intervals:
        t1 = t0 + iv.duration
        inside = ~done & (samples <= t1 * (1 + 1e-12))
        if inside.any():
            psi = _interval_propagators(iv, t0, samples[inside] - t0) @ state
            pops[inside] = np.abs(psi[:, 1]) ** 2
            done |= inside
        state = _interval_propagators(iv, t0, iv.duration)[0] @ state
        t0 = t1
    return np.clip(pops, 0.0, 1.0)


def _check_tau(tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if tau.ndim != 1 or len(tau) == 0:
        raise InvalidParameterError("tau grid must be a non-empty 1-D sequence")
    if np.any(tau < 0) or np.any(np.diff(tau) <= 0):
        raise InvalidParameterError("tau grid must be non-negative and strictly increasing")
    return tau


def _shot_rng(seed: int, stream: int, shot: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream, shot]))


def _noise_phases(params: SpinParams, noise: NoiseModel, stream: int, lo: int, hi: int):
    if noise.phase_policy == "fixed":
        return np.full(hi - lo, noise.phase)
    return np.array(
        [_shot_rng(params.seed, stream, shot).uniform(0.0, 2 * np.pi) for shot in range(lo, hi)]
    )


def _shot_block(
    params: SpinParams,
    drive: DriveTone,
    noise: NoiseModel,
    tau: np.ndarray,
    stream: int,
    lo: int,
    hi: int,
) -> np.ndarray:
    """Populations of shots [lo, hi) as a (hi - lo, len(tau)) array."""
    amplitude = noise.effective_rabi_hz
    phases = _noise_phases(params, noise, stream, lo, hi)
    if drive.detuning_hz == 0:
        freqs = np.abs(drive.phasor + amplitude * np.exp(1j * phases))
        return np.sin(np.pi * np.outer(freqs, tau)) ** 2
    rows = []
    for phase in phases:
        tones = (drive, DriveTone(amplitude, phase, drive.detuning_hz))
        rows.append(bloch_evolve([ToneInterval(float(tau[-1]), tones)], tau))
    return np.array(rows)


def rabi_trace(
    params: SpinParams,
    drive: DriveTone,
    noise: Optional[NoiseModel] = None,
    tau=None,
    workers: int = 1,
    stream: int = 0,
    fit: bool = True,
) -> RabiTrace:
    """Shot-averaged Rabi trace under a crosstalk tone, with its decaying-sinusoid fit.

    Every shot draws its noise phase from its own (seed, stream, shot) RNG and
    the per-shot populations are averaged in shot order, so the trace does not
    depend on ``workers``. The averaged signal ⟨1 - 2P⟩ is damped by
    exp(-τ / T_base) and stored back as a population.
    """
    noise = noise or NoiseModel()
    tau = _check_tau(np.linspace(0.0, 1e-6, 201) if tau is None else tau)
    if params.shots < MIN_SHOTS:
        raise InvalidParameterError(f"need >= {MIN_SHOTS} shots, got {params.shots}")
    if drive.rabi_hz * tau[-1] < MIN_DRIVE_PERIODS:
        logger.warning(
            "tau grid covers %.2f drive periods, fewer than %d",
            drive.rabi_hz * tau[-1],
            MIN_DRIVE_PERIODS,
        )

    bounds = [(lo, min(lo + SHOT_CHUNK, params.shots)) for lo in range(0, params.shots, SHOT_CHUNK)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks: List[np.ndarray] = list(
                pool.map(
                    lambda b: _shot_block(params, drive, noise, tau, stream, *b), bounds
                )
            )
    else:
        blocks = [_shot_block(params, drive, noise, tau, stream, *b) for b in bounds]
    populations = np.vstack(blocks)

    signal = (1.0 - 2.0 * populations.mean(axis=0)) * np.exp(-tau / params.t_base)
    if params.photons_per_shot > 0:
        rng = np.random.default_rng(
            np.random.SeedSequence([params.seed, stream], spawn_key=(JITTER_KEY,))
        )
        sigma = 1.0 / math.sqrt(params.photons_per_shot * params.shots)
        signal = signal + rng.normal(0.0, sigma, size=signal.shape)

    fitted = fit_decaying_sinusoid(tau, signal, seed=params.seed) if fit else None
    if fitted is not None:
        logger.debug(
            "Rabi trace (noise %.4g Hz): T_Rabi %.1f ns",
            noise.effective_rabi_hz,
            fitted.t_rabi * 1e9,
        )
    return RabiTrace(tau=tau, population=(1.0 - signal) / 2.0, fit=fitted, seed=params.seed)


def calibrate_noise(
    params: SpinParams,
    drive: DriveTone,
    target_t: float,
    tau=None,
    tol: float = 0.02,
    max_iter: int = 40,
    workers: int = 1,
) -> float:
    """Noise amplitude (Hz) whose fitted T_Rabi matches ``target_t`` within ``tol``.

    Fitted T_Rabi falls monotonically with the noise amplitude; the same seed
    is reused at every step so the bisection sees a smooth curve.
    """
    if not target_t > 0:
        raise InvalidParameterError(f"target T_Rabi must be > 0, got {target_t}")
    if target_t >= params.t_base:
        raise InfeasibleTargetError(
            f"target T_Rabi {target_t * 1e9:.1f} ns is not below the baseline decay "
            f"{params.t_base * 1e9:.1f} ns"
        )

    def fitted(omega: float) -> float:
        return rabi_trace(params, drive, NoiseModel(omega), tau, workers=workers).fit.t_rabi

    lo, hi = 0.0, max(0.25 * drive.rabi_hz, 1e5)
    for _ in range(10):
        if fitted(hi) <= target_t:
            break
        lo, hi = hi, 2 * hi
    else:
        raise InfeasibleTargetError(
            f"no noise amplitude up to {hi:.3g} Hz shortens T_Rabi to {target_t * 1e9:.1f} ns"
        )

    for i in range(max_iter):
        mid = 0.5 * (lo + hi)
        t = fitted(mid)
        if abs(t - target_t) <= tol * target_t:
            logger.info(
                "Calibrated noise amplitude %.4g Hz -> T_Rabi %.1f ns after %d steps",
                mid,
                t * 1e9,
                i + 1,
            )
            return mid
        if t > target_t:
            lo = mid
        else:
            hi = mid
    raise InfeasibleTargetError(
        f"calibration did not reach {target_t * 1e9:.1f} ns within {tol:.0%} "
        f"after {max_iter} steps"
    )


def equivalent_detuning(noise_rabi_hz: float, suppression: float) -> float:
    """Detuning whose off-resonant excitation Ω²/(Ω² + Δ²) equals ``suppression``."""
    if not 0 < suppression <= 1:
        raise InvalidParameterError(f"suppression must be in (0, 1], got {suppression}")
    if noise_rabi_hz < 0:
        raise InvalidParameterError(f"noise amplitude must be >= 0, got {noise_rabi_hz}")
    return noise_rabi_hz * math.sqrt(1.0 / suppression - 1.0)


def noise_rabi_for_power(drive: DriveTone, noise_power_db: float) -> float:
    if math.isinf(noise_power_db) and noise_power_db < 0:
        return 0.0
    return drive.rabi_hz * 10 ** (noise_power_db / 20)


def coherence_penalty(
    params: SpinParams,
    drive: DriveTone,
    noise_power_db: float,
    tau=None,
    workers: int = 1,
) -> PenaltyResult:
    """Fractional T_Rabi reduction from a random-phase tone ``noise_power_db`` below the drive."""
    omega = noise_rabi_for_power(drive, noise_power_db)
    clean = rabi_trace(params, drive, NoiseModel(0.0), tau, workers=workers).fit
    noisy = rabi_trace(params, drive, NoiseModel(omega), tau, workers=workers).fit
    ratio = noisy.t_rabi / clean.t_rabi
    error = ratio * math.hypot(noisy.t_rabi_err / noisy.t_rabi, clean.t_rabi_err / clean.t_rabi)
    return PenaltyResult(
        reduction=1.0 - ratio,
        error=float(error),
        t_clean=clean.t_rabi,
        t_noisy=noisy.t_rabi,
        noise_rabi_hz=omega,
    )


def drive_quality_ok(rabi_hz: float, t2: float = 1e-6) -> bool:
    """1/f_Rabi < T2/10."""
    return rabi_hz > 0 and 1.0 / rabi_hz < t2 / 10.0


def rabi_sequence(
    tau: float,
    polarize: float = POLARIZE_S,
    readout: float = READOUT_S,
    signal_window: float = SIGNAL_WINDOW_S,
    reference_window: float = REFERENCE_WINDOW_S,
) -> RabiSchedule:
    if tau < 0:
        raise InvalidParameterError(f"microwave pulse length must be >= 0, got {tau}")
    if signal_window + reference_window > readout:
        raise InvalidParameterError("signal and reference windows must fit inside the readout")
    mw_end = polarize + tau
    end = mw_end + readout
    return RabiSchedule(
        polarize=polarize,
        microwave=tau,
        readout=readout,
        signal_window=signal_window,
        reference_window=reference_window,
        segments=(
            ("laser", 0.0, polarize),
            ("microwave", polarize, mw_end),
            ("laser", mw_end, end),
            ("signal", mw_end, mw_end + signal_window),
            ("reference", end - reference_window, end),
        ),
    )
