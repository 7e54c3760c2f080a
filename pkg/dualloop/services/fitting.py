"""
Curve fits for Rabi traces, ODMR dips and phase sweeps.

Nonlinear fits run in dimensionless coordinates (time over the trace span,
frequency over the sweep span) and are converted back to SI units on return.
"""

import logging
import math
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import fft, optimize, signal, stats

from dualloop.middleware.error_handler import FitDomainError, FitError, InvalidParameterError
from dualloop.models.fields import SinusoidFit
from dualloop.models.spin import DecayingSinusoidFit, GaussianDipFit
from dualloop.utils.restart import RestartPolicy

logger = logging.getLogger(__name__)

MIN_TRACE_SAMPLES = 20
MIN_PERIODS = 2.0
FLAT_TOL = 1e-12
ZERO_PAD = 8
T_BOUNDS = (1e-3, 1e3)  # in units of the trace span


class _Attempt(NamedTuple):
    popt: np.ndarray
    pcov: np.ndarray
    residual: float


def _damped_cos(x, amplitude, freq, decay, offset, phase):
    return amplitude * np.cos(2 * np.pi * freq * x + phase) * np.exp(-x / decay) + offset


def _dominant_frequency(x: np.ndarray, y: np.ndarray) -> float:
    """Peak of the zero-padded real spectrum, DC excluded."""
    grid = np.linspace(x[0], x[-1], len(x))
    yi = np.interp(grid, x, y)
    n = ZERO_PAD * len(grid)
    spectrum = np.abs(fft.rfft(yi - yi.mean(), n=n))
    freqs = fft.rfftfreq(n, d=grid[1] - grid[0])
    k = 1 + int(np.argmax(spectrum[1:]))
    return float(freqs[k])


def _envelope_decay(x: np.ndarray, y: np.ndarray) -> float:
    """Decay constant from a linear fit to the log of the oscillation peaks."""
    mag = np.abs(y)
    peaks, _ = signal.find_peaks(mag)
    peaks = peaks[mag[peaks] > 0]
    if len(peaks) >= 3:
        reg = stats.linregress(x[peaks], np.log(mag[peaks]))
        if reg.slope < 0:
            return float(np.clip(-1.0 / reg.slope, *T_BOUNDS))
    return 1.0


def fit_decaying_sinusoid(
    tau: Sequence[float],
    values: Sequence[float],
    max_restarts: int = 5,
    seed: int = 0,
) -> DecayingSinusoidFit:
    """Least-squares fit of ``A cos(2π f τ + φ) exp(-τ / T) + c``.

    The start point takes f from the dominant spectral peak and T from the
    log-envelope slope. Perturbed restarts run until an attempt converges with
    a finite covariance and T off its bounds.
    """
    tau = np.asarray(tau, dtype=float)
    y = np.asarray(values, dtype=float)
    if tau.ndim != 1 or tau.shape != y.shape:
        raise InvalidParameterError("tau and values must be 1-D arrays of equal length")
    if len(tau) < MIN_TRACE_SAMPLES:
        raise FitDomainError(f"need >= {MIN_TRACE_SAMPLES} samples, got {len(tau)}")
    if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(y))):
        raise FitDomainError("trace contains non-finite values")
    if np.any(np.diff(tau) <= 0):
        raise InvalidParameterError("tau must be strictly increasing")

    c0 = float(np.mean(y))
    if np.ptp(y) <= FLAT_TOL * max(1.0, abs(c0)):
        raise FitError("trace shows no oscillation", float(np.sum((y - c0) ** 2)))

    span = float(tau[-1])
    if not span > 0:
        raise InvalidParameterError("trace must extend to positive tau")
    x = tau / span
    f0 = _dominant_frequency(x, y - c0)
    if f0 * (x[-1] - x[0]) < MIN_PERIODS:
        raise FitDomainError(f"only {f0 * (x[-1] - x[0]):.2f} oscillation periods in the trace")

    t0 = _envelope_decay(x, y - c0)
    a0 = abs(y[0] - c0) or np.ptp(y) / 2
    phase0 = 0.0 if y[0] >= c0 else np.pi
    lower = np.array([0.0, 0.5 * f0, T_BOUNDS[0], -np.inf, -2 * np.pi])
    upper = np.array([np.inf, 2.0 * f0, T_BOUNDS[1], np.inf, 2 * np.pi])
    spread = float(np.ptp(y))

    def perturb(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        q = p.copy()
        q[0] = abs(p[0] * (1 + 0.1 * rng.standard_normal()))
        q[1] = p[1] * (1 + 0.05 * rng.standard_normal())
        q[2] = p[2] * math.exp(0.5 * rng.standard_normal())
        q[3] = p[3] + 0.05 * spread * rng.standard_normal()
        q[4] = rng.uniform(-np.pi, np.pi)
        margin = 1e-9 * (upper[:3] - lower[:3])
        q[:3] = np.clip(q[:3], lower[:3] + margin, upper[:3] - margin)
        return q

    def accept(result: _Attempt) -> bool:
        decay = result.popt[2]
        pinned = decay <= T_BOUNDS[0] * (1 + 1e-6) or decay >= T_BOUNDS[1] * (1 - 1e-6)
        return bool(np.all(np.isfinite(np.diag(result.pcov)))) and not pinned

    policy = RestartPolicy(max_restarts=max_restarts, seed=seed, perturb=perturb, accept=accept)

    @policy
    def attempt(p0: np.ndarray) -> _Attempt:
        popt, pcov = optimize.curve_fit(
            _damped_cos, x, y, p0=p0, bounds=(lower, upper), max_nfev=20000
        )
        res = y - _damped_cos(x, *popt)
        return _Attempt(popt, pcov, float(np.sqrt(np.mean(res**2))))

    best = attempt([a0, f0, t0, c0, phase0])
    amplitude, freq, decay, offset, phase = best.popt
    with np.errstate(invalid="ignore"):
        err = np.sqrt(np.diag(best.pcov))
    fit = DecayingSinusoidFit(
        frequency_hz=float(freq / span),
        t_rabi=float(decay * span),
        amplitude=float(amplitude),
        offset=float(offset),
        phase=float(math.remainder(phase, 2 * np.pi)),
        frequency_err=float(err[1] / span),
        t_rabi_err=float(err[2] * span),
        amplitude_err=float(err[0]),
        offset_err=float(err[3]),
        phase_err=float(err[4]),
        residual=best.residual,
        restarts=policy.restarts,
    )
    logger.debug(
        "Decaying sinusoid: f=%.4g Hz, T=%.4g s after %d restarts",
        fit.frequency_hz,
        fit.t_rabi,
        fit.restarts,
    )
    return fit


def _gaussian(freq: np.ndarray, centre: float, sigma: float) -> np.ndarray:
    return np.exp(-((freq - centre) ** 2) / (2 * sigma**2))


def _weighted_lstsq(
    design: np.ndarray, y: np.ndarray, errors: Optional[np.ndarray]
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coefficients, covariance and residuals of a (weighted) linear model."""
    w = np.ones_like(y) if errors is None else 1.0 / np.asarray(errors, dtype=float)
    coef, *_ = np.linalg.lstsq(design * w[:, None], y * w, rcond=None)
    res = y - design @ coef
    cov = np.linalg.pinv((design * w[:, None]).T @ (design * w[:, None]))
    if errors is None:
        dof = max(len(y) - design.shape[1], 1)
        cov = cov * float(np.sum(res**2)) / dof
    return coef, cov, res


def _fixed_shape_dip(
    freq: np.ndarray, pl: np.ndarray, errors: Optional[np.ndarray], centre: float, sigma: float
) -> GaussianDipFit:
    g = _gaussian(freq, centre, sigma)
    design = np.column_stack([np.ones_like(g), -g])
    (baseline, depth), cov, res = _weighted_lstsq(design, pl, errors)
    contrast = depth / baseline
    var = (
        cov[1, 1] / baseline**2
        + depth**2 * cov[0, 0] / baseline**4
        - 2 * depth * cov[0, 1] / baseline**3
    )
    return GaussianDipFit(
        centre_hz=centre,
        sigma_hz=sigma,
        contrast=float(np.clip(contrast, 0.0, 1.0)),
        baseline=float(baseline),
        centre_err=0.0,
        sigma_err=0.0,
        contrast_err=float(np.sqrt(max(var, 0.0))),
        baseline_err=float(np.sqrt(cov[0, 0])),
        residual=float(np.sqrt(np.mean(res**2))),
        shape_fixed=True,
        contrast_raw=float(contrast),
    )


def fit_gaussian_dip(
    freq: Sequence[float],
    pl: Sequence[float],
    pl_err: Optional[Sequence[float]] = None,
    shape: Optional[Tuple[float, float]] = None,
    fallback_shape: Optional[Tuple[float, float]] = None,
) -> GaussianDipFit:
    """Fit ``baseline * (1 - C exp(-(f - f0)² / 2σ²))`` to a PL spectrum.

    With ``shape=(f0, σ)`` only baseline and contrast are fitted (a linear
    problem). Otherwise all four parameters are fitted, and a spectrum whose
    dip shape cannot be resolved falls back to the fixed-shape fit using
    ``fallback_shape`` or the free fit's start point.
    """
    freq = np.asarray(freq, dtype=float)
    pl = np.asarray(pl, dtype=float)
    errors = None if pl_err is None else np.asarray(pl_err, dtype=float)
    if freq.shape != pl.shape or len(freq) < 5:
        raise FitDomainError("need >= 5 spectrum points with matching frequencies")
    if shape is not None:
        return _fixed_shape_dip(freq, pl, errors, *shape)

    mid = 0.5 * (freq[0] + freq[-1])
    scale = float(np.ptp(freq))
    x = (freq - mid) / scale
    baseline0 = float(np.percentile(pl, 90))
    centre0 = float(x[np.argmin(pl)])
    sigma0 = 0.1
    contrast0 = float(np.clip(1 - pl.min() / baseline0, 1e-3, 0.99))
    dx = float(np.min(np.diff(np.sort(x))))

    def model(xx, baseline, contrast, centre, sigma):
        return baseline * (1 - contrast * _gaussian(xx, centre, sigma))

    guess = fallback_shape or (mid + centre0 * scale, sigma0 * scale)
    try:
        popt, pcov = optimize.curve_fit(
            model,
            x,
            pl,
            p0=[baseline0, contrast0, centre0, sigma0],
            sigma=errors,
            absolute_sigma=errors is not None,
            bounds=([0.0, 0.0, x.min(), dx / 2], [np.inf, 1.0, x.max(), 1.0]),
        )
    except (RuntimeError, ValueError) as e:
        logger.debug("Free dip fit failed (%s); fixing the dip shape", e)
        return _fixed_shape_dip(freq, pl, errors, *guess)
    if not np.all(np.isfinite(pcov)):
        logger.debug("Dip shape unresolved; fixing it at %.6g Hz, %.4g Hz", *guess)
        return _fixed_shape_dip(freq, pl, errors, *guess)

    err = np.sqrt(np.diag(pcov))
    res = pl - model(x, *popt)
    return GaussianDipFit(
        centre_hz=float(mid + popt[2] * scale),
        sigma_hz=float(popt[3] * scale),
        contrast=float(popt[1]),
        baseline=float(popt[0]),
        centre_err=float(err[2] * scale),
        sigma_err=float(err[3] * scale),
        contrast_err=float(err[1]),
        baseline_err=float(err[0]),
        residual=float(np.sqrt(np.mean(res**2))),
        contrast_raw=float(popt[1]),
    )


def fit_phase_sinusoid(
    phases: Sequence[float],
    values: Sequence[float],
    errors: Optional[Sequence[float]] = None,
) -> SinusoidFit:
    """Linear least-squares fit of ``a - b cos(φ - φ_min)`` with b >= 0."""
    phases = np.asarray(phases, dtype=float)
    y = np.asarray(values, dtype=float)
    if phases.shape != y.shape or len(y) < 3:
        raise FitDomainError("need >= 3 phase samples with matching values")
    design = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    (a, c, d), cov, res = _weighted_lstsq(
        design, y, None if errors is None else np.asarray(errors, dtype=float)
    )

    amp2 = c * c + d * d
    amplitude = math.sqrt(amp2)
    phase_min = math.atan2(-d, -c) % (2 * np.pi)
    if amp2 > 0:
        amp_var = (c * c * cov[1, 1] + d * d * cov[2, 2] + 2 * c * d * cov[1, 2]) / amp2
        phase_var = (c * c * cov[2, 2] + d * d * cov[1, 1] - 2 * c * d * cov[1, 2]) / amp2**2
    else:
        amp_var = 0.5 * (cov[1, 1] + cov[2, 2])
        phase_var = float("inf")

    ss_res = float(np.sum(res**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot > 0:
        r_squared = 1.0 - ss_res / ss_tot
    else:
        r_squared = 1.0 if ss_res == 0 else 0.0
    scale = float(np.max(np.abs(y)))
    return SinusoidFit(
        offset=float(a),
        amplitude=amplitude,
        phase_min=phase_min,
        offset_err=float(np.sqrt(cov[0, 0])),
        amplitude_err=float(np.sqrt(max(amp_var, 0.0))),
        phase_min_err=float(np.sqrt(max(phase_var, 0.0))),
        r_squared=r_squared,
        max_relative_residual=float(np.max(np.abs(res)) / scale) if scale > 0 else 0.0,
    )
