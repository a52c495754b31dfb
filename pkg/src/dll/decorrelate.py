"""Decorrelated local-regression weights.

The raw weight of an observation is its window offset ``x1 - x0`` minus a
shift equal to (an estimate of) the conditional mean of that offset given
the nuisance covariates, restricted to the kernel window. Subtracting the
kernel-weighted average then centers the weights empirically, so they
annihilate constants exactly and are nearly uncorrelated with any
function of the nuisance covariates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .errors import InsufficientLocalDataError, ZeroMassError
from .kernel import KernelSpec, kernel_weight

UNDERFLOW_MASS = 1e-300
SIMPSON_TOL = 1e-10
SIMPSON_DEPTH = 20

WEIGHT_MODES = ("linear", "exact_gaussian", "general_density", "oracle_known")


@dataclass(frozen=True)
class SwapPlan:
    """Random two-fold partition used to cross-apply nuisance estimates."""

    fold_a: np.ndarray
    fold_b: np.ndarray
    seed: int


def swap_split(n: int, seed: int) -> SwapPlan:
    """Uniformly random partition into two near-equal folds.

    Deterministic given the seed; for odd ``n`` the first fold gets the
    extra element.
    """
    if n < 4:
        raise ValueError(f"need n >= 4 to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    half = (n + 1) // 2
    return SwapPlan(
        fold_a=np.sort(perm[:half]),
        fold_b=np.sort(perm[half:]),
        seed=seed,
    )


@dataclass(frozen=True)
class GaussianWindow:
    """Kernel window on the standardized projection-residual scale.

    ``center`` is (x0 - projection) / sigma2 and ``half_width`` is
    h / sigma2.
    """

    center: float
    half_width: float

    def __post_init__(self) -> None:
        if not (self.half_width > 0):
            raise ValueError("half_width must be > 0")


def _phi(t: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)


def shift_linear(x2_dot_gamma: float, sigma2: float, spec: KernelSpec) -> float:
    """Small-bandwidth linearization of the conditional window shift."""
    return spec.h**2 * (x2_dot_gamma - spec.x0) / (3 * sigma2**2)


def _exact_gaussian_shifts(
    mu: np.ndarray, half_width: float, sigma2: float
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized exact shift under Gaussian projection errors.

    Returns (shifts, underflow_mask); where the window mass underflows,
    the linearized shift is substituted.
    """
    mu = np.asarray(mu, dtype=float)
    # Work on |mu| and restore the sign afterwards so the map is exactly
    # odd in the window center.
    amu = np.abs(mu)
    lo, hi = amu - half_width, amu + half_width
    mass = ndtr(hi) - ndtr(lo)
    underflow = mass < UNDERFLOW_MASS
    numer = _phi(lo) - _phi(hi) - amu * mass
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = sigma2 * numer / mass
    linear = -sigma2 * amu * half_width**2 / 3
    signed = np.sign(mu) * np.where(underflow, linear, exact)
    return signed, underflow


def shift_exact_gaussian(window: GaussianWindow, sigma2: float) -> float:
    """Exact conditional window shift for Gaussian projection errors.

    Closed form of the truncated-normal mean offset
    ``sigma2 * int (t - mu) phi(t) dt / int phi(t) dt`` over
    ``[mu - L, mu + L]``. Falls back to the linearization when the window
    mass underflows (such points carry no kernel weight anyway).
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be > 0")
    val, _ = _exact_gaussian_shifts(
        np.array(window.center), window.half_width, sigma2
    )
    return float(val)


def _adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, depth):
    m = (a + b) / 2
    lm, rm = (a + m) / 2, (m + b) / 2
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6 * (fa + 4 * flm + fm)
    right = (b - m) / 6 * (fm + 4 * frm + fb)
    if depth <= 0 or abs(left + right - whole) <= 15 * tol:
        return left + right + (left + right - whole) / 15
    return _adaptive_simpson(
        f, a, m, fa, flm, fm, left, tol / 2, depth - 1
    ) + _adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float) -> float:
    """Adaptive Simpson quadrature, absolute tolerance 1e-10."""
    fa, fb, fm = f(a), f(b), f((a + b) / 2)
    whole = (b - a) / 6 * (fa + 4 * fm + fb)
    return _adaptive_simpson(f, a, b, fa, fm, fb, whole, SIMPSON_TOL, SIMPSON_DEPTH)


def shift_general(
    density: Callable[[float], float], window: GaussianWindow, sigma2: float
) -> float:
    """Conditional window shift under a user-supplied standardized density."""
    mu, half = window.center, window.half_width
    mass = adaptive_simpson(density, mu - half, mu + half)
    if mass <= UNDERFLOW_MASS:
        raise ZeroMassError("density places no mass on the window")
    moment = adaptive_simpson(lambda t: (t - mu) * density(t), mu - half, mu + half)
    return sigma2 * moment / mass


@dataclass(frozen=True)
class DecorrelationWeights:
    """Raw and centered decorrelation weights with the centering shift."""

    raw: np.ndarray
    centered: np.ndarray
    centering_shift: float
    mode: str


def build_weights(
    x1: np.ndarray, shifts: np.ndarray, spec: KernelSpec, mode: str = "linear"
) -> DecorrelationWeights:
    """Assemble decorrelated weights and center them on the kernel window."""
    if mode not in WEIGHT_MODES:
        raise ValueError(f"unknown weight mode {mode!r}")
    x1 = np.asarray(x1, dtype=float)
    shifts = np.asarray(shifts, dtype=float)
    if x1.shape != shifts.shape:
        raise ValueError("x1 and shifts must have equal length")
    kh = kernel_weight(x1, spec)
    total = float(np.sum(kh))
    if total == 0.0:
        raise InsufficientLocalDataError("no observations inside the kernel window")
    raw = (x1 - spec.x0) - shifts
    centering = float(np.sum(raw * kh) / total)
    return DecorrelationWeights(
        raw=raw, centered=raw - centering, centering_shift=centering, mode=mode
    )


def weight_estimation_error(
    weights: DecorrelationWeights,
    oracle: DecorrelationWeights,
    x1: np.ndarray,
    spec: KernelSpec,
) -> float:
    """Kernel-weighted RMS distance from the oracle centered weights."""
    kh = kernel_weight(np.asarray(x1, dtype=float), spec)
    diff = weights.centered - oracle.centered
    return float(np.sqrt(np.mean(diff**2 * kh)))


def window_tail_ratio(
    x0: float, h: float, gamma: np.ndarray, sigma2: float, n: int
) -> float:
    """Diagnostic: standardized upper reach of the window.

    ``(x0 + h + ||gamma||_2 sqrt(log n)) / sigma2``; the estimator is
    reliable when this times h is small.
    """
    gnorm = float(np.linalg.norm(np.asarray(gamma, dtype=float))) if np.size(gamma) else 0.0
    return (x0 + h + gnorm * math.sqrt(math.log(max(n, 2)))) / sigma2
