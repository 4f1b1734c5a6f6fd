"""Time evolution and error-model sampling.

Propagation uses classic fourth-order Runge-Kutta with step-doubling error
control: each step is taken once at h and twice at h/2, the max-norm
difference drives acceptance and the next step size, and the accepted state
is the locally extrapolated combination.  The controller never steps across
waveform breakpoints (segment phase switches), where coefficients jump.

Schroedinger evolution tracks the norm drift as an accuracy diagnostic; it is
logged, never corrected.  Lindblad evolution propagates the full master
equation right-hand side

    d rho/dt = -i[H, rho] + sum_k ( L_k rho L_k^+ - {L_k^+ L_k, rho}/2 )

and accepts arbitrary (also traceless, non-positive) Hermitian initial
matrices so process evaluation can push Pauli strings through by linearity.

The error model is declarative (NoiseSpec) and sampled into concrete
NoiseRealization values by a counter-based seeded generator: realization i of
a spec is a pure function of (spec.seed, i).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .hilbert import (
    DensityMatrix,
    Operator,
    SiteDims,
    StateVector,
    TimeDependentOperator,
    apply_site_matrix_left,
    apply_site_matrix_right,
    embed_site_operator,
    site_transition,
)
from .model import LevelScheme, SystemModel, bright_ket

TWO_PI = 2.0 * math.pi

#: Boltzmann constant in (um/us)^2 kg / uK  == J/K * 1e-6
_KB_UK = 1.380649e-29

#: effective two-photon wavevector, rad/um (counter-propagating 420/1013 nm)
K_EFF_DEFAULT = TWO_PI * (1 / 0.420 - 1 / 1.013)

#: mass of an Rb-87 atom, kg
RB87_MASS = 1.4431606e-25


class IntegrationError(RuntimeError):
    """Step size underflow: unresolved fast scales (stiff detunings) or a
    tolerance too tight for the requested span."""


@dataclass(frozen=True)
class IntegratorSettings:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = math.inf
    min_step: float = 1e-12
    initial_step: float = 1e-4

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not self.min_step <= self.initial_step <= self.max_step:
            raise ValueError("need min_step <= initial_step <= max_step")

    def scaled(self, factor: float) -> "IntegratorSettings":
        return replace(self, rel_tol=self.rel_tol * factor, abs_tol=self.abs_tol * factor)


@dataclass
class Trajectory:
    """Sampled evolution: states[i] is the state at times[i]."""

    times: np.ndarray
    states: list
    n_steps: int
    n_rejected: int
    norm_drift: float

    @property
    def final(self):
        return self.states[-1]


class _RK4Stepper:
    """Classic RK4 double step (one h step and two h/2 steps)."""

    def __init__(self, rhs):
        self.rhs = rhs
        self._k1_key = None
        self._k1 = None

    def _k1_at(self, t, y):
        # the (t, y) stage repeats across retries of the same step
        if self._k1_key != t:
            self._k1 = self.rhs(t, y)
            self._k1_key = t
        return self._k1

    def _step(self, t, y, h, k1):
        rhs = self.rhs
        k2 = rhs(t + h / 2, y + (h / 2) * k1)
        k3 = rhs(t + h / 2, y + (h / 2) * k2)
        k4 = rhs(t + h, y + h * k3)
        return y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)

    def double_step(self, t, y, h):
        k1 = self._k1_at(t, y)
        coarse = self._step(t, y, h, k1)
        half = self._step(t, y, h / 2, k1)
        fine = self._step(t + h / 2, half, h / 2, self.rhs(t + h / 2, half))
        return coarse, fine

    def advanced(self):
        self._k1_key = None


class _LawsonRK4Stepper:
    """RK4 with an exact integrating factor for a static diagonal.

    For y' = -i (diag(d) + A(t)) y the substitution z = exp(i d t) y removes
    the diagonal exactly; RK4 acts on the transformed system.  The stiff
    interaction energies (GHz-scale level shifts) then cost nothing: the step
    size is set by the drive terms alone.
    """

    def __init__(self, diag: np.ndarray, apply_off):
        if np.max(np.abs(diag.imag)) > 0:
            raise ValueError("integrating factor requires a real diagonal")
        self.diag = diag.real
        self.apply_off = apply_off
        self._a1_key = None
        self._a1 = None

    def _a1_at(self, t, y):
        if self._a1_key != t:
            self._a1 = self.apply_off(t, y)
            self._a1_key = t
        return self._a1

    def _step(self, t, y, h, e_half, e_full, a1):
        # Lawson-RK4 stages; e_half = exp(-i d h/2), e_full = e_half**2
        apply_off = self.apply_off
        g1 = -1j * a1
        u = e_half * (y + (h / 2) * g1)
        g2 = -1j * np.conj(e_half) * apply_off(t + h / 2, u)
        u = e_half * (y + (h / 2) * g2)
        g3 = -1j * np.conj(e_half) * apply_off(t + h / 2, u)
        u = e_full * (y + h * g3)
        g4 = -1j * np.conj(e_full) * apply_off(t + h, u)
        return e_full * (y + (h / 6) * (g1 + 2 * g2 + 2 * g3 + g4))

    def double_step(self, t, y, h):
        e_quarter = np.exp(self.diag * (-1j * h / 4))
        e_half = e_quarter * e_quarter
        e_full = e_half * e_half
        a1 = self._a1_at(t, y)
        coarse = self._step(t, y, h, e_half, e_full, a1)
        fine = self._step(t, y, h / 2, e_quarter, e_half, a1)
        fine = self._step(t + h / 2, fine, h / 2, e_quarter, e_half,
                          self.apply_off(t + h / 2, fine))
        return coarse, fine

    def advanced(self):
        self._a1_key = None


def _integrate(stepper, y0: np.ndarray, t_span, settings: IntegratorSettings,
               sample_times: Sequence[float], breakpoints: Sequence[float],
               observer: Optional[Callable] = None):
    """Step-doubling driver: accept when the coarse/fine max-norm difference
    is within tolerance, advance with the locally extrapolated state.

    sample_times must include both span endpoints; breakpoints inside the
    span are hit exactly.  Returns (samples, n_steps, n_rejected).
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    stops = sorted({t0, t1, *[s for s in sample_times if t0 < s < t1],
                    *[b for b in breakpoints if t0 < b < t1]})
    sample_set = set(float(s) for s in sample_times)
    samples = []
    if t0 in sample_set:
        samples.append((t0, y0.copy()))

    y = y0.astype(complex).copy()
    t = t0
    h = min(settings.initial_step, settings.max_step)
    n_steps = n_rejected = 0
    for stop in stops:
        if stop <= t0:
            continue
        while t < stop - 1e-15 * max(1.0, abs(stop)):
            h_try = min(h, stop - t, settings.max_step)
            coarse, fine = stepper.double_step(t, y, h_try)
            err = float(np.max(np.abs(fine - coarse)))
            scale = settings.abs_tol + settings.rel_tol * float(np.max(np.abs(y)))
            if err <= scale:
                t = t + h_try
                y = fine + (fine - coarse) / 15.0
                n_steps += 1
                stepper.advanced()
                if observer is not None:
                    observer(t, y)
                grow = 0.9 * (scale / err) ** 0.2 if err > 0 else 5.0
                h = h_try * min(5.0, max(1.0, grow))
            else:
                n_rejected += 1
                h = h_try * max(0.2, 0.9 * (scale / err) ** 0.25)
                if h < settings.min_step:
                    raise IntegrationError(
                        f"step underflow at t={t:.6g} (needed h={h:.3g} < "
                        f"min_step={settings.min_step:g}); the dynamics has "
                        "unresolved fast scales for this tolerance"
                    )
        if stop in sample_set:
            samples.append((stop, y.copy()))
    return samples, n_steps, n_rejected


def _resolve_sample_times(t_span, sample_times) -> list[float]:
    t0, t1 = float(t_span[0]), float(t_span[1])
    if sample_times is None:
        return [t0, t1]
    out = sorted({t0, t1, *(float(s) for s in sample_times)})
    if out[0] < t0 - 1e-15 or out[-1] > t1 + 1e-12:
        raise ValueError("sample times outside the integration span")
    return out


def _hamiltonian_hooks(hamiltonian, dims_hint=None):
    """Normalize the Hamiltonian argument to (apply_fn, dense_fn, breakpoints,
    suggested_max_step, dims)."""
    if isinstance(hamiltonian, TimeDependentOperator):
        return (hamiltonian.apply, hamiltonian.dense, hamiltonian.breakpoints,
                hamiltonian.suggested_max_step(exact_diagonal=False),
                hamiltonian.dims)

    def dense(t):
        h = hamiltonian(t)
        return h.matrix if isinstance(h, Operator) else np.asarray(h, dtype=complex)

    def apply(t, v):
        return dense(t) @ v

    return apply, dense, (), math.inf, dims_hint


def evolve_schrodinger(hamiltonian, psi0: StateVector, t_span,
                       settings: IntegratorSettings | None = None,
                       sample_times: Sequence[float] | None = None) -> Trajectory:
    """Integrate -i H(t) |psi> over t_span, sampling at the requested times.

    For a structured TimeDependentOperator the static diagonal (interaction
    energies, detunings) is handled by an exact integrating factor, so the
    step size follows the drive terms rather than the stiff level shifts.
    Plain callables t -> Operator use classic RK4 throughout.  Norm drift is
    recorded on every accepted step.
    """
    settings = settings or IntegratorSettings()
    if isinstance(hamiltonian, TimeDependentOperator):
        stepper = _LawsonRK4Stepper(hamiltonian.static_diag,
                                    hamiltonian.apply_terms)
        breaks = hamiltonian.breakpoints
        h_cap = hamiltonian.suggested_max_step()
    else:
        apply_h, _, breaks, h_cap, _ = _hamiltonian_hooks(hamiltonian)
        stepper = _RK4Stepper(lambda t, y: -1j * apply_h(t, y))
    if math.isfinite(h_cap):
        settings = replace(settings, max_step=min(settings.max_step, h_cap),
                           initial_step=min(settings.initial_step, h_cap))

    drift = 0.0

    def observer(t, y):
        nonlocal drift
        drift = max(drift, abs(float(np.linalg.norm(y)) - 1.0))

    times = _resolve_sample_times(t_span, sample_times)
    samples, n_steps, n_rej = _integrate(
        stepper, np.asarray(psi0.amps, dtype=complex), t_span, settings, times,
        breaks, observer=observer,
    )
    states = [StateVector(psi0.dims, y) for _, y in samples]
    return Trajectory(np.array([t for t, _ in samples]), states, n_steps, n_rej, drift)


# ---------------------------------------------------------------------------
# Lindblad channels


@dataclass(frozen=True)
class LindbladChannel:
    """Jump operator with the rate already folded in (operator = sqrt(rate) * jump).

    ``site``/``site_matrix`` mark single-atom channels so the propagator can
    apply them without full-size matrix products.
    """

    operator: Operator
    site: Optional[int] = None
    site_matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.operator.matrix)):
            raise ValueError("channel operator must be finite")


def site_channel(dims: SiteDims, site: int, matrix: np.ndarray) -> LindbladChannel:
    op = embed_site_operator(matrix, site, dims)
    return LindbladChannel(Operator(dims, op.matrix), site=site,
                           site_matrix=np.asarray(matrix, dtype=complex))


def rydberg_decay_channels(dims: SiteDims, scheme: LevelScheme, site: int,
                           lifetime: float) -> list[LindbladChannel]:
    """Radiative decay of |r> with branching 1/8, 1/8 into the qubit levels
    and 3/4 into the out-of-computational sink |2>."""
    if lifetime <= 0 or not math.isfinite(lifetime):
        return []
    gamma = 1.0 / lifetime
    r = scheme.index("r")
    branches = [("0", gamma / 8), ("1", gamma / 8), ("2", 3 * gamma / 4)]
    out = []
    for label, rate in branches:
        m = math.sqrt(rate) * site_transition(scheme.dim, scheme.index(label), r)
        out.append(site_channel(dims, site, m))
    return out


def dephasing_channel(dims: SiteDims, scheme: LevelScheme, site: int,
                      rate: float, theta: float, phi: float) -> LindbladChannel | None:
    """sqrt(rate) (|r><r| - |B><B|) on one atom; |B> is the bright state."""
    if rate <= 0:
        return None
    r = scheme.index("r")
    b = bright_ket(theta, phi, scheme)
    m = math.sqrt(rate) * (site_transition(scheme.dim, r, r) - np.outer(b, b.conj()))
    return site_channel(dims, site, m)


def channels_for_model(model: SystemModel, lifetime: float,
                       gamma_phi: float) -> list[LindbladChannel]:
    """Decay plus dephasing channels for every atom of the model.

    Control atoms use the bright state |B> = |0> (theta = pi); the target
    uses the drive's (theta, phi).
    """
    dims = model.dims
    out: list[LindbladChannel] = []
    for site in range(model.n_atoms):
        out.extend(rydberg_decay_channels(dims, model.scheme, site, lifetime))
        if site == model.n_atoms - 1:
            th, ph = model.drive.theta, model.drive.phi
        else:
            th, ph = math.pi, 0.0
        ch = dephasing_channel(dims, model.scheme, site, gamma_phi, th, ph)
        if ch is not None:
            out.append(ch)
    return out


def evolve_lindblad(hamiltonian, channels: Iterable[LindbladChannel], rho0,
                    t_span, settings: IntegratorSettings | None = None,
                    sample_times: Sequence[float] | None = None) -> Trajectory:
    """Integrate the master equation; rho0 may be a DensityMatrix or any
    square matrix (Pauli-string process inputs are traceless and non-positive).

    Returned states are raw matrices; trace drift (for trace-class inputs)
    is recorded in ``norm_drift``.
    """
    settings = settings or IntegratorSettings()
    apply_h, dense_h, breaks, h_cap, dims = _hamiltonian_hooks(hamiltonian)
    if math.isfinite(h_cap):
        settings = replace(settings, max_step=min(settings.max_step, h_cap),
                           initial_step=min(settings.initial_step, h_cap))
    channels = list(channels)
    if isinstance(rho0, DensityMatrix):
        dims = rho0.dims
        rho_start = np.asarray(rho0.matrix, dtype=complex)
    else:
        rho_start = np.asarray(rho0, dtype=complex)
    n = rho_start.shape[0]

    # anticommutator part is static: K = 1/2 sum L^+ L
    if channels:
        k_sum = sum(ch.operator.matrix.conj().T @ ch.operator.matrix for ch in channels)
        k_half = 0.5 * np.asarray(k_sum, dtype=complex)
    else:
        k_half = None

    site_chs = [(ch.site, ch.site_matrix) for ch in channels
                if ch.site is not None and dims is not None]
    dense_chs = [ch.operator.matrix for ch in channels
                 if ch.site is None or dims is None]

    def rhs(t, rho):
        h = dense_h(t)
        out = -1j * (h @ rho - rho @ h)
        if k_half is not None:
            out -= k_half @ rho + rho @ k_half
        for site, m in site_chs:
            tmp = apply_site_matrix_left(rho, dims, site, m)
            out += apply_site_matrix_right(tmp, dims, site, m)
        for full in dense_chs:
            out += full @ rho @ full.conj().T
        return out

    trace0 = complex(np.trace(rho_start))
    drift = 0.0
    track_trace = abs(trace0) > 1e-12

    def observer(t, rho):
        nonlocal drift
        if track_trace:
            drift = max(drift, abs(complex(np.trace(rho)) - trace0))

    times = _resolve_sample_times(t_span, sample_times)
    samples, n_steps, n_rej = _integrate(
        _RK4Stepper(rhs), rho_start, t_span, settings, times, breaks,
        observer=observer)
    states = [y for _, y in samples]
    return Trajectory(np.array([t for t, _ in samples]), states, n_steps, n_rej, drift)


# ---------------------------------------------------------------------------
# noise model


@dataclass(frozen=True)
class NoiseSpec:
    """Declarative error model; angular-MHz offsets, temperatures in uK.

    Systematic knobs (timing, amplitudes, detuning scale, modulation offset)
    are applied verbatim to every realization; interaction jitter and thermal
    Doppler detunings are drawn per realization from the seeded generator.
    """

    delta_T_rel: float = 0.0
    delta_omega_t_rel: float = 0.0
    delta_omega_t_abs: float = 0.0
    delta_omega0_abs: float = 0.0
    delta_Delta_rel: float = 0.0
    delta_omega_mod: float = 0.0
    delta_V_bound: float = 0.0
    temperature: float = 0.0
    k_eff: float = K_EFF_DEFAULT
    atom_mass: float = RB87_MASS
    tau_rydberg: float = math.inf
    gamma_phi: float = 0.0
    spin_echo: bool = False
    realizations: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        for name in ("delta_V_bound", "temperature", "k_eff", "atom_mass", "gamma_phi"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.delta_omega_t_rel and self.delta_omega_t_abs:
            raise ValueError("set only one of delta_omega_t_rel / delta_omega_t_abs")


@dataclass(frozen=True)
class NoiseRealization:
    """One concrete sample of a NoiseSpec for an (N+1)-atom model."""

    delta_T_rel: float
    delta_omega_t_rel: float
    delta_omega_t_abs: float
    delta_omega0_abs: float
    delta_Delta_rel: float
    delta_omega_mod: float
    interaction_scale: np.ndarray  # (n_atoms, n_atoms), entries 1 + u_jk
    doppler: np.ndarray            # per-atom |r> detuning, rad/us
    spin_echo: bool


def doppler_sigma(spec: NoiseSpec) -> float:
    """RMS Doppler detuning k_eff * sqrt(kB T / m) in rad/us."""
    if spec.temperature <= 0:
        return 0.0
    v_rms = math.sqrt(_KB_UK * spec.temperature / spec.atom_mass)
    return spec.k_eff * v_rms


def sample_noise(spec: NoiseSpec, realization_index: int, n_atoms: int) -> NoiseRealization:
    """Deterministic realization: a pure function of (spec.seed, index)."""
    ss = np.random.SeedSequence(entropy=spec.seed,
                                spawn_key=(int(realization_index),))
    rng = np.random.Generator(np.random.PCG64(ss))
    scale = np.ones((n_atoms, n_atoms))
    if spec.delta_V_bound > 0:
        u = rng.uniform(-spec.delta_V_bound, spec.delta_V_bound,
                        size=n_atoms * (n_atoms - 1) // 2)
        iu = np.triu_indices(n_atoms, k=1)
        scale[iu] = 1.0 + u
        scale[(iu[1], iu[0])] = scale[iu]
    sigma = doppler_sigma(spec)
    doppler = rng.normal(0.0, sigma, size=n_atoms) if sigma > 0 else np.zeros(n_atoms)
    scale.setflags(write=False)
    doppler.setflags(write=False)
    return NoiseRealization(
        delta_T_rel=spec.delta_T_rel,
        delta_omega_t_rel=spec.delta_omega_t_rel,
        delta_omega_t_abs=spec.delta_omega_t_abs,
        delta_omega0_abs=spec.delta_omega0_abs,
        delta_Delta_rel=spec.delta_Delta_rel,
        delta_omega_mod=spec.delta_omega_mod,
        interaction_scale=scale,
        doppler=doppler,
        spin_echo=spec.spin_echo,
    )


def apply_noise(model: SystemModel, real: NoiseRealization) -> SystemModel:
    """Perturbed copy of the model: amplitude/detuning/timing offsets folded
    into the drive, interaction jitter into the couplings, Doppler offsets
    onto |r>.  A zero realization returns an equivalent model."""
    drive = model.drive
    d_amp = real.delta_omega_t_abs + real.delta_omega_t_rel * drive.peak_amp
    if d_amp:
        base_amp = drive.target_amp
        drive = replace(drive, target_amp=(lambda t, _f=base_amp, _d=d_amp: _f(t) + _d))
    if real.delta_omega0_abs:
        drive = replace(drive, omega0_offset=drive.omega0_offset + real.delta_omega0_abs)
    if real.delta_omega_mod:
        drive = replace(drive, modulation=drive.modulation + real.delta_omega_mod)

    interactions = model.interactions
    if np.any(real.interaction_scale != 1.0):
        n = interactions.n_controls
        scale = real.interaction_scale
        v_ct = interactions.v_ct * np.array([scale[j, n] for j in range(n)])
        v_cc = interactions.v_cc * scale[:n, :n]
        interactions = replace(interactions, v_ct=v_ct, v_cc=v_cc)

    run_time = model.gate_time * (1.0 + real.delta_T_rel)
    doppler = real.doppler if np.any(real.doppler) else model.doppler_detunings
    return replace(
        model,
        drive=drive,
        interactions=interactions,
        doppler_detunings=doppler,
        delta_rel_offset=model.delta_rel_offset + real.delta_Delta_rel,
        spin_echo=real.spin_echo,
        run_time=run_time,
    )


def spin_echo_transform(model: SystemModel, t: float) -> SystemModel:
    """Model as seen at time t under the echo convention: past the midpoint
    the quasi-static detuning errors (Doppler offsets and the relative
    detuning error) change sign.  No-op when echo is off or t <= T/2."""
    if not model.spin_echo or t <= model.gate_time / 2:
        return model
    doppler = None if model.doppler_detunings is None else -model.doppler_detunings
    return replace(model, doppler_detunings=doppler,
                   delta_rel_offset=-model.delta_rel_offset, spin_echo=False)
