"""Closed-form phases and dephasing rates for the driven qubit.

Conventions (B0-units, hbar = 1):

* kappa = B0/omega_B is the adiabaticity; the loop time is T = 4 pi kappa
  for every built-in scheme (two net windings at rate omega_B = 1/kappa).
* beta = gamma3 * T and eta = alpha3 * gamma3 * T^3 are the dimensionless
  noise parameters, so alpha3 * T^2 = eta / beta.
* The random relative phase is linear in the noise to first order,
  phi = -sum_k c_k * int_k K3 dt, with the piecewise-constant weights
  c_k = s_k (cos theta_k - sgn(l_k) sin^2(theta_k)/kappa).  For Gaussian
  noise the coherence is then W = exp(-chi) with chi = <phi^2>/2.

``chi_from_piecewise`` evaluates chi exactly (analytic double integral of
the exponential kernel over every rectangle pair) and is the master
oracle behind all the specific closed forms here.  ``chi_spectral``
computes the same quantity for the standard switching patterns through
the spectral overlap integral

    chi = int_0^inf (dw/pi) S3(w) F(w T) / w^2,

by adaptive quadrature; ``chi_closed`` gives its exact elementary form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

from .noise import NoiseModel
from .schedule import (
    Schedule,
    linear_coefficients,
    solve_theta_c_exact,
)

__all__ = [
    "DrivenParams",
    "DephasingPrediction",
    "SwitchingFunction",
    "omega_splitting",
    "phase_terms",
    "tilt_angle",
    "chi_fid",
    "chi_se",
    "chi_cpmg",
    "chi_balanced",
    "chi_mirror",
    "chi_from_piecewise",
    "linear_response_chi",
    "filter_function",
    "switching_function",
    "chi_spectral",
    "chi_closed",
    "depolarization_lambda",
    "transverse_coefficients",
    "solve_theta_c_transverse",
    "crossover_theta",
    "prediction_for_scheme",
]

_FOUR_PI = 4.0 * math.pi


# -- stable special functions -------------------------------------------------


def _em1px(x: float) -> float:
    """exp(-x) - 1 + x without cancellation (series below x = 0.5)."""
    if x > 0.5:
        return math.expm1(-x) + x
    term = x * x / 2.0
    total = term
    n = 2
    while n < 40:
        n += 1
        term *= -x / n
        total += term
        if abs(term) < 1e-20 * abs(total):
            break
    return total


def _atan_deficit(y: float) -> float:
    """y - atan(y) without cancellation (series below y = 0.1)."""
    if y > 0.1:
        return y - math.atan(y)
    total = 0.0
    term = y**3
    k = 1
    while True:
        total += (-1) ** (k + 1) * term / (2 * k + 1)
        k += 1
        term *= y * y
        if term / (2 * k + 1) < 1e-25 * max(abs(total), 1e-300):
            break
    return total


# time-domain kernels of the three standard switching patterns, in units of
# alpha/gamma^2 as functions of beta = gamma*T
def _kernel_fid(beta):
    return _em1px(beta)


def _kernel_se(beta):
    return 4.0 * _em1px(beta / 2) - _em1px(beta)


def _kernel_cpmg2(beta):
    return (
        4.0 * _em1px(beta / 4)
        + 4.0 * _em1px(beta / 2)
        - 4.0 * _em1px(3 * beta / 4)
        + _em1px(beta)
    )


_KERNELS = {"fid": _kernel_fid, "se": _kernel_se, "cpmg2": _kernel_cpmg2}


# -- parameter containers ------------------------------------------------------


@dataclass(frozen=True)
class DrivenParams:
    """Dimensionless drive/noise parameters of one experiment point."""

    kappa: float
    theta: float
    beta: float
    eta: float
    theta_c: Optional[float] = None

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.eta < 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if self.kappa <= 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")

    @property
    def total_time(self) -> float:
        """Loop time T = 4 pi kappa in B0-units (omega_B T = 4 pi)."""
        return _FOUR_PI * self.kappa

    @property
    def alpha_t2(self) -> float:
        """alpha3 * T^2 = eta / beta."""
        return self.eta / self.beta

    def noise_model(self) -> NoiseModel:
        t = self.total_time
        return NoiseModel(alpha=self.eta / (self.beta * t * t), gamma=self.beta / t)


@dataclass(frozen=True)
class DephasingPrediction:
    """Closed-form dephasing exponent with the expected loop phase."""

    chi: float
    gamma_expected: float
    lam: float = 0.0

    def __post_init__(self):
        if self.chi < 0:
            raise ValueError(f"chi must be >= 0, got {self.chi}")

    @property
    def w(self) -> float:
        return math.exp(-self.chi)

    @property
    def w_with_depolarization(self) -> float:
        return math.exp(-self.lam / 2.0 - self.chi)


# -- phases --------------------------------------------------------------------


def omega_splitting(kappa: float, theta: float):
    """Co-rotating eigen-splitting: (exact, three-term expansion) over B0.

    Exact: sqrt((1 - cos(theta)/kappa)^2 + sin^2(theta)/kappa^2) for the
    anticlockwise sense; the expansion keeps terms through 1/kappa^2.
    """
    w = 1.0 / kappa
    exact = math.sqrt((1.0 - w * math.cos(theta)) ** 2 + (w * math.sin(theta)) ** 2)
    expansion = 1.0 - w * math.cos(theta) + 0.5 * w * w * math.sin(theta) ** 2
    return exact, expansion


def phase_terms(kappa: float, theta: float, m: float, s: int = 1):
    """(dynamic, geometric, non-adiabatic) phase of the branch with eigenvalue s
    after m anticlockwise windings on the theta cone."""
    if s not in (-1, 1):
        raise ValueError("s must be +1 or -1")
    dynamic = -s * math.pi * m * kappa
    geometric = m * math.pi * (1.0 + s * math.cos(theta))
    nonadiabatic = -s * (m * math.pi / (2.0 * kappa)) * math.sin(theta) ** 2
    return dynamic, geometric, nonadiabatic


def tilt_angle(kappa: float, theta: float) -> float:
    """Angle between the bare axis and the co-rotating effective axis."""
    w = 1.0 / kappa
    return math.atan2(w * math.sin(theta), 1.0 - w * math.cos(theta))


# -- scheme dephasing rates (low-frequency closed forms + exact kernels) -------


def _warn_lowfreq(beta: float) -> None:
    if beta > 0.1:
        warnings.warn(
            f"beta = {beta} > 0.1: the low-frequency closed form is out of its "
            "validity range",
            stacklevel=3,
        )


def chi_fid(params: DrivenParams) -> DephasingPrediction:
    """Free-evolution dephasing: chi = (cos t - sin^2 t / kappa)^2 eta/(2 beta).

    The bracket is the square of the constant noise weight; its cross term
    is the drive-induced reduction of the plain quadratic-in-cos rate.
    """
    _warn_lowfreq(params.beta)
    c = math.cos(params.theta) - math.sin(params.theta) ** 2 / params.kappa
    chi = c * c * params.alpha_t2 / 2.0
    return DephasingPrediction(
        chi=chi, gamma_expected=-_FOUR_PI * math.cos(params.theta),
        lam=depolarization_lambda(params),
    )


def chi_se(params: DrivenParams, mode: str = "lowfreq") -> DephasingPrediction:
    """Spin-echo dephasing.

    mode="full": exact kernel expression, valid at any beta; the reversed
    winding keeps the geometric weight un-echoed, so that term carries the
    free-evolution kernel.  mode="lowfreq": chi = cos^2 * eta/12 +
    (sin^4/kappa^2) * eta/(2 beta).
    """
    ct2 = math.cos(params.theta) ** 2
    st4 = math.sin(params.theta) ** 4
    k2 = params.kappa**2
    if mode == "full":
        pref = params.eta / params.beta**3
        chi = pref * (ct2 * _kernel_se(params.beta) + (st4 / k2) * _kernel_fid(params.beta))
    elif mode == "lowfreq":
        _warn_lowfreq(params.beta)
        chi = ct2 * params.eta / 12.0 + (st4 / k2) * params.alpha_t2 / 2.0
    else:
        raise ValueError(f"mode must be 'full' or 'lowfreq', got {mode!r}")
    return DephasingPrediction(
        chi=chi, gamma_expected=-_FOUR_PI * math.cos(params.theta),
        lam=depolarization_lambda(params),
    )


def chi_cpmg(params: DrivenParams, mode: str = "lowfreq") -> DephasingPrediction:
    """Two-pulse echo dephasing: dynamic term 4x smaller than spin echo,
    geometric term identical (the geometric weight never switches sign)."""
    ct2 = math.cos(params.theta) ** 2
    st4 = math.sin(params.theta) ** 4
    k2 = params.kappa**2
    if mode == "full":
        pref = params.eta / params.beta**3
        chi = pref * (ct2 * _kernel_cpmg2(params.beta) + (st4 / k2) * _kernel_fid(params.beta))
    elif mode == "lowfreq":
        _warn_lowfreq(params.beta)
        chi = ct2 * params.eta / 48.0 + (st4 / k2) * params.alpha_t2 / 2.0
    else:
        raise ValueError(f"mode must be 'full' or 'lowfreq', got {mode!r}")
    return DephasingPrediction(
        chi=chi, gamma_expected=-_FOUR_PI * math.cos(params.theta),
        lam=depolarization_lambda(params),
    )


def chi_balanced(params: DrivenParams, base: str = "cpmg", mode: str = "lowfreq") -> DephasingPrediction:
    """Companion-angle echo: the balanced weight is a pure echo pattern.

    chi = (cos ta - sin^2 ta / kappa)^2 * eta/12 * {1 for the spin-echo
    base, 1/4 for the two-pulse base}; with mode="full" the corresponding
    exact echo kernel is used instead of its beta^3 leading term.
    """
    theta_c = params.theta_c
    if theta_c is None:
        theta_c = solve_theta_c_exact(params.theta, params.kappa)
    c = math.cos(params.theta) - math.sin(params.theta) ** 2 / params.kappa
    if base == "se":
        kern, factor = _kernel_se, 1.0
    elif base == "cpmg":
        kern, factor = _kernel_cpmg2, 0.25
    else:
        raise ValueError(f"base must be 'se' or 'cpmg', got {base!r}")
    if mode == "full":
        chi = c * c * (params.eta / params.beta**3) * kern(params.beta)
    elif mode == "lowfreq":
        _warn_lowfreq(params.beta)
        chi = c * c * params.eta / 12.0 * factor
    else:
        raise ValueError(f"mode must be 'full' or 'lowfreq', got {mode!r}")
    return DephasingPrediction(
        chi=chi,
        gamma_expected=-2.0 * math.pi * (math.cos(params.theta) + math.cos(theta_c)),
        lam=depolarization_lambda(params),
    )


def chi_mirror(params: DrivenParams, mode: str = "lowfreq") -> DephasingPrediction:
    """Cone-mirror sequence: chi = cos^2 * eta/48 + (sin^4/kappa^2) * eta/12.

    The dynamic weight follows the two-pulse echo pattern and the
    geometric weight the spin-echo pattern, so the geometric term gains a
    factor beta/6 over the plain echoes.
    """
    ct2 = math.cos(params.theta) ** 2
    st4 = math.sin(params.theta) ** 4
    k2 = params.kappa**2
    if mode == "full":
        pref = params.eta / params.beta**3
        chi = pref * (ct2 * _kernel_cpmg2(params.beta) + (st4 / k2) * _kernel_se(params.beta))
    elif mode == "lowfreq":
        _warn_lowfreq(params.beta)
        chi = ct2 * params.eta / 48.0 + (st4 / k2) * params.eta / 12.0
    else:
        raise ValueError(f"mode must be 'full' or 'lowfreq', got {mode!r}")
    return DephasingPrediction(
        chi=chi, gamma_expected=-_FOUR_PI * math.cos(params.theta),
        lam=depolarization_lambda(params),
    )


# -- the kernel oracle ---------------------------------------------------------


def chi_from_piecewise(coefficients, model: NoiseModel) -> float:
    """Exact chi = (1/2) iint c(t) c(t') alpha e^{-gamma|t-t'|} dt dt'.

    ``coefficients`` is a sequence of (weight, duration) pairs describing
    the piecewise-constant c(t).  Every rectangle pair integrates in
    closed form; the assembly is stable down to gamma*T ~ 1e-12.
    """
    coefficients = list(coefficients)
    g = model.gamma
    starts = np.concatenate([[0.0], np.cumsum([d for _, d in coefficients])])
    chi = 0.0
    # diagonal blocks: square double integral = 2(g d - 1 + e^{-g d})/g^2
    for c, d in coefficients:
        chi += c * c * _em1px(g * d)
    # off-diagonal blocks factorize: e^{-g gap} (1-e^{-g di})(1-e^{-g dj})/g^2
    expm = [-math.expm1(-g * d) for _, d in coefficients]
    for i, (ci, di) in enumerate(coefficients):
        for j in range(i + 1, len(coefficients)):
            cj, dj = coefficients[j]
            gap = starts[j] - (starts[i] + di)
            chi += ci * cj * math.exp(-g * gap) * expm[i] * expm[j]
    return chi * model.alpha / (g * g)


def linear_response_chi(
    schedule: Schedule, kappa: float, noise: NoiseModel, total_time: Optional[float] = None
) -> float:
    """Exact Gaussian dephasing exponent of a schedule's noise weights.

    Reproduces every low-frequency closed form in its beta -> 0 limit and
    the full echo expression at any beta.  ``total_time`` rescales the
    segment durations when the schedule time differs from the target T.
    """
    coeffs = linear_coefficients(schedule, kappa)
    if total_time is not None:
        t_sched = sum(d for _, d in coeffs)
        scale = total_time / t_sched
        coeffs = [(c, d * scale) for c, d in coeffs]
    return chi_from_piecewise(coeffs, noise)


# -- filter-function route -----------------------------------------------------

# cosine form F(z) = a0 + sum a_j cos(c_j z); used for the oscillatory tail
_COSINE_FORM = {
    "fid": (1.0, ((-1.0, 1.0),)),
    "se": (3.0, ((-4.0, 0.5), (1.0, 1.0))),
    "cpmg2": (5.0, ((-4.0, 0.25), (-4.0, 0.5), (4.0, 0.75), (-1.0, 1.0))),
}


def filter_function(sequence: str, z):
    """Spectral weight F(z) of the switching pattern, z = omega*T.

    The two-pulse pattern is evaluated in the product form
    32 sin^4(z/8) sin^2(z/4), identical to the tangent-free ratio
    8 sin^4(z/8) sin^2(z/2) / cos^2(z/4) but regular at its removable
    singularities.
    """
    z = np.asarray(z, dtype=float)
    if sequence == "fid":
        out = 2.0 * np.sin(z / 2) ** 2
    elif sequence == "se":
        out = 8.0 * np.sin(z / 4) ** 4
    elif sequence == "cpmg2":
        out = 32.0 * np.sin(z / 8) ** 4 * np.sin(z / 4) ** 2
    else:
        raise ValueError(f"sequence must be 'fid', 'se' or 'cpmg2', got {sequence!r}")
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SwitchingFunction:
    """Sign-switching weight h(t) in {+1,-1}: +1 on [t0,t1), -1 on [t1,t2), ..."""

    times: tuple  # t0 = 0 < t1 < ... < t_{m+1} = T

    def __post_init__(self):
        t = tuple(float(x) for x in self.times)
        object.__setattr__(self, "times", t)
        if len(t) < 2 or t[0] != 0.0 or any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("switch times must be strictly increasing from 0 to T")

    @property
    def total_time(self) -> float:
        return self.times[-1]

    def h(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0,
                      len(self.times) - 2)
        out = np.where(idx % 2 == 0, 1.0, -1.0)
        return out if out.ndim else float(out)

    def integral(self) -> float:
        """int_0^T h(t) dt."""
        total = 0.0
        for k, (a, b) in enumerate(zip(self.times, self.times[1:])):
            total += (b - a) * (1.0 if k % 2 == 0 else -1.0)
        return total


def switching_function(sequence: str, total_time: float = 1.0) -> SwitchingFunction:
    """Switching pattern of the standard sequences over [0, T]."""
    t = total_time
    if sequence == "fid":
        return SwitchingFunction((0.0, t))
    if sequence == "se":
        return SwitchingFunction((0.0, t / 2, t))
    if sequence == "cpmg2":
        return SwitchingFunction((0.0, t / 4, 3 * t / 4, t))
    raise ValueError(f"sequence must be 'fid', 'se' or 'cpmg2', got {sequence!r}")


def chi_spectral(sequence: str, noise: NoiseModel, total_time: float) -> float:
    """Dephasing exponent by quadrature of the spectral overlap integral.

    In z = omega*T the integral becomes
    (2 eta / pi) int_0^inf F(z) / (z^2 (z^2 + beta^2)) dz with
    eta = alpha gamma T^3 and beta = gamma T.  The head [0, Z0] is done by
    adaptive quadrature with breakpoints at the Lorentzian knee and the
    filter oscillations; the tail splits into an elementary monotone part
    and Fourier-weighted integrals handled by the oscillatory rule.
    """
    if sequence not in _COSINE_FORM:
        raise ValueError(f"sequence must be 'fid', 'se' or 'cpmg2', got {sequence!r}")
    beta = noise.gamma * total_time
    eta = noise.alpha * noise.gamma * total_time**3
    z0 = max(16.0 * math.pi, 4.0 * beta)

    def g(z):
        return 1.0 / (z * z * (z * z + beta * beta))

    def head(z):
        return filter_function(sequence, z) * g(z)

    pts = sorted({beta, 2.0 * beta, 0.5, 1.0} | {k * math.pi for k in range(1, 16)})
    pts = [p for p in pts if 0.0 < p < z0]
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            i_head, err_head = quad(head, 0.0, z0, points=pts, limit=400,
                                    epsabs=0.0, epsrel=1e-11)
            a0, cos_terms = _COSINE_FORM[sequence]
            total = i_head + a0 * _atan_deficit(beta / z0) / beta**3
            for aj, cj in cos_terms:
                val, _ = quad(g, z0, np.inf, weight="cos", wvar=cj, limit=400,
                              epsabs=1e-16, epsrel=1e-13)
                total += aj * val
        except IntegrationWarning as exc:
            raise RuntimeError(
                f"spectral quadrature did not converge for {sequence} at "
                f"beta={beta}: {exc}"
            ) from exc
    return (2.0 * eta / math.pi) * total


def chi_closed(sequence: str, noise: NoiseModel, total_time: float) -> float:
    """Exact elementary form of the spectral overlap for the standard patterns."""
    if sequence not in _KERNELS:
        raise ValueError(f"sequence must be 'fid', 'se' or 'cpmg2', got {sequence!r}")
    beta = noise.gamma * total_time
    return (noise.alpha / noise.gamma**2) * _KERNELS[sequence](beta)


# -- transverse noise and depolarization ----------------------------------------


def depolarization_lambda(params: DrivenParams) -> float:
    """Incoherent eigenstate-transition exponent, lambda in W = e^{-lam/2 - chi}.

    lambda = alpha3 T sin^2(theta) gamma3 / (gamma3^2 + B0^2); negligible
    for gamma3 << B0 and maximal at gamma3 = B0.
    """
    t = params.total_time
    model = params.noise_model()
    return (
        model.alpha * t * math.sin(params.theta) ** 2
        * model.gamma / (model.gamma**2 + 1.0)
    )


def transverse_coefficients(schedule: Schedule, kappa: float) -> list:
    """Per-segment weight of radial (drive-amplitude) noise in the random phase.

    c_k = s_k (sin theta_k - sgn(l_k) cos(theta_k) sin(theta_k) / kappa).
    Unlike the longitudinal case, the mirror sequence does NOT null the
    sum of these weights: the radial geometric weight keeps the same sign
    on both cones.
    """
    out = []
    for seg in schedule.segments:
        c = seg.s * (
            math.sin(seg.theta)
            - seg.winding_sign * math.cos(seg.theta) * math.sin(seg.theta) / kappa
        )
        out.append((c, 2.0 * math.pi * float(abs(seg.l)) * kappa))
    return out


def solve_theta_c_transverse(theta_a: float, kappa: float) -> float:
    """Companion angle balancing radial noise:
    sin(tc)(1 + cos(tc)/kappa) = sin(ta)(1 - cos(ta)/kappa).

    Returns the perturbative branch continuous with theta_c = theta_a at
    kappa -> inf (the equation also has the geometric-phase-destroying
    mirror root pi - theta_a, which is rejected).
    """
    if not 0.0 < theta_a < math.pi:
        raise ValueError(f"theta_a must lie in (0, pi), got {theta_a}")
    target = math.sin(theta_a) * (1.0 - math.cos(theta_a) / kappa)

    def balance(t):
        return math.sin(t) * (1.0 + math.cos(t) / kappa) - target

    # continuation from the first-order estimate theta_a - 2 sin(ta)/kappa
    t = theta_a - 2.0 * math.sin(theta_a) / kappa
    t = min(max(t, 1e-12), math.pi - 1e-12)
    for _ in range(100):
        f = balance(t)
        df = math.cos(t) + math.cos(2.0 * t) / kappa
        if df == 0.0:
            break
        step = f / df
        t = min(max(t - step, 1e-12), math.pi - 1e-12)
        if abs(step) < 1e-15:
            break
    if abs(balance(t)) > 1e-12:
        # fall back to a bracketed solve around the estimate
        lo = max(1e-9, theta_a - 4.0 * math.sin(theta_a) / kappa - 0.2)
        hi = theta_a + 0.05
        try:
            t = brentq(balance, lo, hi, xtol=1e-15, rtol=8.9e-16)
        except ValueError as exc:
            raise ValueError(
                f"no transverse balance root near theta_a={theta_a}, kappa={kappa}"
            ) from exc
    if abs(balance(t)) > 1e-12:
        raise ValueError(
            f"transverse balance residual {balance(t):.2e} too large at "
            f"theta_a={theta_a}, kappa={kappa}"
        )
    return t


def crossover_theta(beta: float, kappa: float) -> float:
    """Angle where the spin echo's geometric and dynamic terms are equal.

    Solves cos^2/sin^4 = 6/(beta kappa^2), a quadratic in u = cos^2(theta).
    """
    a = 6.0 / (beta * kappa * kappa)
    u = ((2.0 * a + 1.0) - math.sqrt(4.0 * a + 1.0)) / (2.0 * a)
    return math.acos(math.sqrt(u))


# -- scheme dispatch -------------------------------------------------------------


def prediction_for_scheme(
    scheme: str, params: DrivenParams, mode: str = "lowfreq"
) -> DephasingPrediction:
    """Closed-form prediction for a named scheme id."""
    if scheme == "fid":
        if mode == "full":
            c = math.cos(params.theta) - math.sin(params.theta) ** 2 / params.kappa
            chi = c * c * (params.eta / params.beta**3) * _kernel_fid(params.beta)
            return DephasingPrediction(
                chi=chi, gamma_expected=-_FOUR_PI * math.cos(params.theta),
                lam=depolarization_lambda(params),
            )
        return chi_fid(params)
    if scheme == "se":
        return chi_se(params, mode=mode)
    if scheme == "cpmg":
        return chi_cpmg(params, mode=mode)
    if scheme == "se_balanced":
        return chi_balanced(params, base="se", mode=mode)
    if scheme == "cpmg_balanced":
        return chi_balanced(params, base="cpmg", mode=mode)
    if scheme == "mirror":
        return chi_mirror(params, mode=mode)
    raise ValueError(f"unknown scheme id {scheme!r}")
