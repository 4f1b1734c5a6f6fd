"""Waveform engineering for single-loop holonomic gates.

Two drive families for the target-atom loop are provided:

* ``nhqc_waveform`` -- rectangular resonant pulse, total area 2*pi (a pi pulse
  per half segment), zero detuning.
* ``ohqc_waveform`` -- shaped amplitude/detuning pair built from the loop
  angle ``alpha(t)`` (a cubic running 0 -> pi per half segment) and the shape
  factor ``lambda(alpha) = 2 + 2 a1 cos(2 alpha) + 4 a2 cos(4 alpha)``:

      omega(t) = alpha_dot * sqrt(1 + lambda^2 sin^2(alpha))
      delta(t) = -lambda alpha_dot cos(alpha)
                 - (lambda_dot sin(alpha) + lambda alpha_dot cos(alpha))
                   / (1 + lambda^2 sin^2(alpha))

  The pair drives an exact cyclic transfer bright -> auxiliary -> bright with
  vanishing dynamical phase per half loop; (a1, a2) tune the second-order
  sensitivity of the transfer to a static Rabi-amplitude offset.

All singular-looking expressions (cot(alpha) cot(beta), 1/sin(beta)) are
evaluated through the algebraic identities cot(beta) = lambda sin(alpha) and
sin(beta) = 1/sqrt(1 + lambda^2 sin^2 alpha), so no special-casing of the
segment endpoints is needed.

Times are in microseconds, amplitudes in angular MHz (rad/us).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

TWO_PI = 2.0 * math.pi

#: dimensionless pulse area T * max(omega) at the default shape coefficients
DEFAULT_A1 = 0.28
DEFAULT_A2 = -0.12


class QuadratureError(RuntimeError):
    """Raised when adaptive quadrature fails to converge."""


# ---------------------------------------------------------------------------
# loop angle and shape factor


def pulse_angle(t, gate_time: float):
    """Loop angle alpha(t): cubic 0 -> pi on each half of the gate.

    Defined piecewise with t' = t on [0, T/2] and t' = t - T/2 afterwards;
    values beyond t = T continue the second-segment polynomial (used when a
    timing error stretches the run past the design duration).
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("pulse_angle: t must be >= 0")
    tp = np.where(t <= gate_time / 2, t, t - gate_time / 2)
    return 12 * np.pi * tp**2 / gate_time**2 - 16 * np.pi * tp**3 / gate_time**3


def pulse_angle_rate(t, gate_time: float):
    """d alpha / dt, piecewise like ``pulse_angle``."""
    t = np.asarray(t, dtype=float)
    tp = np.where(t <= gate_time / 2, t, t - gate_time / 2)
    return 24 * np.pi * tp / gate_time**2 - 48 * np.pi * tp**2 / gate_time**3


def shape_factor(angle, a1: float, a2: float):
    """lambda(alpha) = 2 + 2 a1 cos(2 alpha) + 4 a2 cos(4 alpha)."""
    angle = np.asarray(angle, dtype=float)
    return 2 + 2 * a1 * np.cos(2 * angle) + 4 * a2 * np.cos(4 * angle)


def shape_factor_slope(angle, a1: float, a2: float):
    """d lambda / d alpha."""
    angle = np.asarray(angle, dtype=float)
    return -4 * a1 * np.sin(2 * angle) - 16 * a2 * np.sin(4 * angle)


def phase_ansatz(angle, a1: float, a2: float):
    """Accumulated loop phase eta(alpha) = 2 alpha + a1 sin(2a) + a2 sin(4a)."""
    angle = np.asarray(angle, dtype=float)
    return 2 * angle + a1 * np.sin(2 * angle) + a2 * np.sin(4 * angle)


def pulse_area_product(a1: float, a2: float, n_grid: int = 20001) -> float:
    """Dimensionless T * max(omega) of the shaped waveform (T-independent)."""
    s = np.linspace(0.0, 1.0, n_grid)
    a = 3 * np.pi * s**2 - 2 * np.pi * s**3
    lam = shape_factor(a, a1, a2)
    # d alpha/ds * 2 because s = 2 t' / T covers the half segment
    omega_t = 2 * (6 * np.pi * s * (1 - s)) * np.sqrt(1 + lam**2 * np.sin(a) ** 2)
    return float(omega_t.max())


# ---------------------------------------------------------------------------
# parameter containers


@dataclass(frozen=True)
class PhaseSchedule:
    """Two-segment drive phases implementing the loop phase jump.

    Segment 1 (t <= T/2): (phi0, phi1) = (0, pi + phi)
    Segment 2 (t >  T/2): (phi0, phi1) = (pi + gamma, gamma + phi)

    so that phi = phi1 - phi0 - pi holds on both segments and the bright
    state picks up the geometric phase gamma over the closed loop.
    """

    gate_time: float
    gamma: float
    phi: float

    def phi0(self, t: float) -> float:
        return 0.0 if t <= self.gate_time / 2 else math.pi + self.gamma

    def phi1(self, t: float) -> float:
        return math.pi + self.phi if t <= self.gate_time / 2 else self.gamma + self.phi

    def segments(self):
        T = self.gate_time
        return [
            ((0.0, T / 2), 0.0, math.pi + self.phi),
            ((T / 2, T), math.pi + self.gamma, self.gamma + self.phi),
        ]

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (self.gate_time / 2, self.gate_time)


@dataclass(frozen=True)
class OhqcParams:
    """Shape coefficients plus the (gate_time, peak_amp) scale pair.

    The waveform family is invariant under simultaneous rescaling of time
    and amplitude, so ``gate_time * peak_amp`` is fixed by (a1, a2) alone.
    Exactly one of the two scales is free; the dataclass stores both,
    consistent by construction.
    """

    a1: float
    a2: float
    gate_time: float
    peak_amp: float

    def __init__(self, a1: float, a2: float, gate_time: float | None = None,
                 peak_amp: float | None = None):
        if (gate_time is None) == (peak_amp is None):
            raise ValueError("specify exactly one of gate_time / peak_amp")
        product = pulse_area_product(a1, a2)
        if gate_time is None:
            if peak_amp <= 0:
                raise ValueError("peak_amp must be > 0")
            gate_time = product / peak_amp
        else:
            if gate_time <= 0:
                raise ValueError("gate_time must be > 0")
            peak_amp = product / gate_time
        object.__setattr__(self, "a1", float(a1))
        object.__setattr__(self, "a2", float(a2))
        object.__setattr__(self, "gate_time", float(gate_time))
        object.__setattr__(self, "peak_amp", float(peak_amp))

    @staticmethod
    def from_peak(a1: float, a2: float, peak_amp: float) -> "OhqcParams":
        return OhqcParams(a1, a2, peak_amp=peak_amp)


# ---------------------------------------------------------------------------
# waveforms


def ohqc_waveform(params: OhqcParams) -> tuple[Callable, Callable]:
    """Shaped (omega(t), delta(t)) callables for the optimized loop.

    Both accept scalars or arrays; omega vanishes at the segment boundaries
    (soft switching) and max omega equals ``params.peak_amp``.
    """
    a1, a2, T = params.a1, params.a2, params.gate_time

    def omega(t):
        a = pulse_angle(t, T)
        ad = pulse_angle_rate(t, T)
        lam = shape_factor(a, a1, a2)
        return ad * np.sqrt(1 + lam**2 * np.sin(a) ** 2)

    def delta(t):
        a = pulse_angle(t, T)
        ad = pulse_angle_rate(t, T)
        lam = shape_factor(a, a1, a2)
        lam_dot = shape_factor_slope(a, a1, a2) * ad
        one = 1 + lam**2 * np.sin(a) ** 2
        return -lam * ad * np.cos(a) - (lam_dot * np.sin(a) + lam * ad * np.cos(a)) / one

    return omega, delta


def nhqc_waveform(rabi_amp: float, gamma: float, phi: float
                  ) -> tuple[Callable, Callable, PhaseSchedule]:
    """Rectangular loop drive: constant omega, zero detuning, area 2*pi.

    The gate time is fixed by the pi-pulse-per-half condition T = 2*pi/omega.
    """
    if rabi_amp <= 0:
        raise ValueError("rabi_amp must be > 0")
    gate_time = TWO_PI / rabi_amp

    def omega(t):
        return np.full_like(np.asarray(t, dtype=float), rabi_amp, dtype=float)

    def delta(t):
        return np.zeros_like(np.asarray(t, dtype=float))

    return omega, delta, PhaseSchedule(gate_time, gamma, phi)


# ---------------------------------------------------------------------------
# diagnostics


def waveform_consistency_check(params: OhqcParams, n_grid: int = 10001) -> float:
    """Max deviation between the closed-form waveform and its (alpha, beta) form.

    The second route evaluates beta = arccos(lambda sin a / sqrt(1 + ...))
    in floating point and rebuilds omega = alpha_dot / sin(beta) and
    delta = beta_dot - alpha_dot * (lambda cos alpha), with beta_dot from the
    analytic derivative of the arccos argument.  Returned deviation is
    normalized by the peak amplitude.
    """
    a1, a2, T = params.a1, params.a2, params.gate_time
    omega_fn, delta_fn = ohqc_waveform(params)
    t = np.linspace(0.0, T / 2, n_grid)
    a = pulse_angle(t, T)
    ad = pulse_angle_rate(t, T)
    lam = shape_factor(a, a1, a2)
    u = lam * np.sin(a)
    beta = np.arccos(u / np.sqrt(1 + u**2))
    sin_beta = np.sin(beta)
    # endpoints have sin(beta) = 1 exactly; no guard needed
    omega_alt = ad / sin_beta
    u_dot = shape_factor_slope(a, a1, a2) * ad * np.sin(a) + lam * ad * np.cos(a)
    beta_dot = -u_dot / (1 + u**2)
    # cot(alpha) cot(beta) evaluated through the removable-singularity identity
    delta_alt = beta_dot - ad * (lam * np.cos(a))
    dev_omega = np.max(np.abs(omega_alt - omega_fn(t)))
    dev_delta = np.max(np.abs(delta_alt - delta_fn(t)))
    return float(max(dev_omega, dev_delta) / params.peak_amp)


def dynamical_phase(params: OhqcParams, t: float | None = None,
                    rel_tol: float = 1e-10) -> float:
    """Accumulated loop phase eta(t) by quadrature of alpha_dot * lambda.

    The integrand alpha_dot * cot(beta)/sin(alpha) reduces to
    alpha_dot * lambda(alpha), which is bounded, so the endpoint
    singularities are removable.  Over a full half segment the result is
    2*pi, i.e. zero dynamical phase modulo 2*pi.
    """
    T = params.gate_time
    upper = T / 2 if t is None else float(t)
    if not 0 <= upper <= T:
        raise ValueError("t outside the gate window")

    def integrand(tt):
        a = pulse_angle(tt, T)
        return pulse_angle_rate(tt, T) * shape_factor(a, params.a1, params.a2)

    val, err = quad(integrand, 0.0, upper, epsabs=1e-12, epsrel=rel_tol, limit=400)
    if err > max(1e-8, 10 * rel_tol * max(1.0, abs(val))):
        raise QuadratureError(f"dynamical phase quadrature error {err:g}")
    return float(val)


# ---------------------------------------------------------------------------
# systematic-error sensitivity


def _sensitivity_integrand(s, a1: float, a2: float):
    """Integrand of the transfer-error functional in reduced time s = 2t/T."""
    a = 3 * np.pi * s**2 - 2 * np.pi * s**3
    lam = shape_factor(a, a1, a2)
    u = lam * np.sin(a)
    den = np.sqrt(1 + u**2)
    cos_beta = u / den
    sin_beta = 1.0 / den
    eta = phase_ansatz(a, a1, a2)
    return np.exp(-1j * eta) * (np.cos(a) * cos_beta + 1j * sin_beta)


def sensitivity(a1: float, a2: float, method: str = "simpson",
                rel_tol: float = 1e-6, n_base: int = 2048) -> float:
    """Second-order sensitivity of the half-loop transfer to a static Rabi offset.

    S = (1/4) |integral_0^1 ds exp(-i eta) (cos a cos b + i sin b)|^2 in the
    dimensionless time s = 2t/T, so the value is scale-free.  A perturbation
    omega -> omega + d costs transfer population S * (d T/2)^2 at second
    order; the optimized coefficients drive S to (numerically) zero, which is
    what makes the shaped loop flat against amplitude errors.

    method 'simpson' uses a composite rule refined until the relative change
    is below ``rel_tol``; 'adaptive' uses Gauss-Kronrod quadrature.
    """
    if method == "adaptive":
        re = quad(lambda s: _sensitivity_integrand(s, a1, a2).real, 0, 1,
                  epsabs=1e-13, epsrel=rel_tol * 1e-2, limit=400)[0]
        im = quad(lambda s: _sensitivity_integrand(s, a1, a2).imag, 0, 1,
                  epsabs=1e-13, epsrel=rel_tol * 1e-2, limit=400)[0]
        return float(0.25 * abs(re + 1j * im) ** 2)
    if method != "simpson":
        raise ValueError(f"unknown quadrature method {method!r}")

    def simpson_value(n):
        s = np.linspace(0.0, 1.0, n + 1)
        f = _sensitivity_integrand(s, a1, a2)
        h = 1.0 / n
        integral = h / 3 * (f[0] + f[-1] + 4 * f[1:-1:2].sum() + 2 * f[2:-2:2].sum())
        return 0.25 * abs(integral) ** 2

    n = n_base
    prev = simpson_value(n)
    for _ in range(12):
        n *= 2
        cur = simpson_value(n)
        if abs(cur - prev) <= rel_tol * max(abs(cur), 1e-12) + 1e-14:
            return float(cur)
        prev = cur
    raise QuadratureError("sensitivity quadrature did not converge")


def scan_landscape(a1_range, a2_range, grid: tuple[int, int],
                   sensitivity_cut: float = 0.5, area_cut: float = 10.0):
    """Tabulate sensitivity and half pulse area over an (a1, a2) grid.

    Returns a list of rows (a1, a2, S, T*max_omega/2, flag_S, flag_area)
    in row-major a1-then-a2 order.  Flags mark the low-sensitivity
    (S < sensitivity_cut) and short-gate (T*max_omega/2 < area_cut) regions.
    """
    n1, n2 = grid
    if n1 < 2 or n2 < 2:
        raise ValueError("landscape grid must be at least 2x2")
    a1s = np.linspace(a1_range[0], a1_range[1], n1)
    a2s = np.linspace(a2_range[0], a2_range[1], n2)
    rows = []
    for a1 in a1s:
        for a2 in a2s:
            s_val = sensitivity(float(a1), float(a2))
            half_area = 0.5 * pulse_area_product(float(a1), float(a2))
            rows.append((
                float(a1), float(a2), s_val, half_area,
                bool(s_val < sensitivity_cut), bool(half_area < area_cut),
            ))
    return rows


# ---------------------------------------------------------------------------
# sampling / export


@dataclass(frozen=True)
class PulseSampleTable:
    """Densely sampled (t, omega, delta) table, safe for linear interpolation.

    Sampling density is validated against midpoint evaluation so that linear
    interpolation stays within 1e-4 of the peak amplitude.
    """

    times: np.ndarray
    omega: np.ndarray
    delta: np.ndarray

    @staticmethod
    def sample(omega_fn, delta_fn, gate_time: float, n_points: int = 1001,
               interp_tol: float = 1e-4) -> "PulseSampleTable":
        n = max(int(n_points), 9)
        peak = None
        for _ in range(10):
            t = np.linspace(0.0, gate_time, n)
            om, de = omega_fn(t), delta_fn(t)
            peak = max(np.max(np.abs(om)), np.max(np.abs(de)), 1e-30)
            mid = 0.5 * (t[:-1] + t[1:])
            # skip midpoints straddling the segment switch: the waveform is
            # only piecewise smooth there
            keep = np.abs(mid - gate_time / 2) > (t[1] - t[0])
            err_om = np.abs(0.5 * (om[:-1] + om[1:]) - omega_fn(mid))[keep].max()
            err_de = np.abs(0.5 * (de[:-1] + de[1:]) - delta_fn(mid))[keep].max()
            if max(err_om, err_de) <= interp_tol * peak:
                return PulseSampleTable(_ro(t), _ro(np.asarray(om)), _ro(np.asarray(de)))
            n = 2 * n - 1
        raise ValueError("could not reach the requested interpolation accuracy")

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t_us,omega_MHz,delta_MHz\n")
            for t, om, de in zip(self.times, self.omega, self.delta):
                fh.write(f"{t!r},{om / TWO_PI!r},{de / TWO_PI!r}\n")


def _ro(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a
