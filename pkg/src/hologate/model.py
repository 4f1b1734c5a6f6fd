"""Physical model: level schemes, ring geometry, couplings, Hamiltonian builders.

The arrangement is a target atom at the origin with N control atoms on a ring
of radius ``d_i`` around it, so every control couples to the target with the
same van-der-Waals strength v = c6 / d_i**6.  Each atom carries qubit levels
|0>, |1> plus a strongly interacting auxiliary level |r>; optional fourth
levels model either a leakage sink |2> (for open-system runs) or an
intermediate pumping level |p> (for the two-photon drive chain).

Drives, in the rotating frame of the lasers:

* controls: amplitude-modulated coupling |0> <-> |r> at
  (control_amp * cos(modulation * t)) / 2 on every control;
* target: coupling of the bright superposition
  |B> = sin(theta/2)|0> - cos(theta/2) e^{i phi} |1> to |r> with amplitude
  omega_t(t)/2 and segment phase phi0(t), plus the shaped detuning term
  delta(t)/2 * (|r><r| - |B><B|);
* interactions: static v_jk n_j n_k over all atom pairs, n = |r><r|.

Choosing modulation = v(control, target) makes the drive sideband cancel the
control-target shift, and for strong control dressing the dynamics reduces to
an effective Hamiltonian acting only on the all-controls-|1> block -- the
basis of the multiqubit controlled holonomy.

All frequencies are angular (rad/us), lengths in um, times in us.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from math import comb
from typing import Callable, Optional

import numpy as np

from .hilbert import (
    DimensionError,
    Operator,
    SiteDims,
    Term,
    TermPiece,
    TimeDependentOperator,
    embed_site_operator,
    site_ket,
    site_transition,
)
from .pulse import PhaseSchedule

TWO_PI = 2.0 * math.pi

#: angular dispersion coefficient of the default Rydberg level, rad/us * um^6
C6_DEFAULT = TWO_PI * 858.4e3


# ---------------------------------------------------------------------------
# level schemes


@dataclass(frozen=True)
class LevelScheme:
    """Named per-atom level layout; label 'r' (the interacting level) is mandatory."""

    name: str
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("level labels must be unique")
        if "r" not in self.labels:
            raise ValueError("scheme must contain the interacting level 'r'")

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"level {label!r} not in scheme {self.name}") from None

    @staticmethod
    def three_level() -> "LevelScheme":
        return LevelScheme("three_level", ("0", "1", "r"))

    @staticmethod
    def four_level_loss() -> "LevelScheme":
        """Qubit + auxiliary + out-of-computational decay sink |2>."""
        return LevelScheme("four_level_loss", ("0", "1", "2", "r"))

    @staticmethod
    def four_level_pump() -> "LevelScheme":
        """Qubit + intermediate pumping level |p> + auxiliary |r>."""
        return LevelScheme("four_level_pump", ("0", "1", "p", "r"))


# ---------------------------------------------------------------------------
# geometry and interactions


class Placement(enum.Enum):
    UNIFORM_RING = "uniform_ring"
    ADJACENT_CHORD = "adjacent_chord"


@dataclass(frozen=True)
class AtomGeometry:
    """Control atoms on a ring around the target at the origin.

    ``positions[j]`` is the 2D coordinate of site j (controls first, target
    last, matching the Hilbert-space site order).
    """

    n_controls: int
    ring_radius: float
    placement: Placement
    chord_spacing: Optional[float]
    positions: np.ndarray

    @property
    def n_atoms(self) -> int:
        return self.n_controls + 1


def build_geometry(n_controls: int, ring_radius: float,
                   placement: Placement = Placement.UNIFORM_RING,
                   chord_spacing: Optional[float] = None) -> AtomGeometry:
    """Place N controls on the ring; target at the origin.

    UNIFORM_RING spreads controls at angles 2*pi*j/N.  ADJACENT_CHORD packs
    them with a fixed nearest-neighbour chord length starting at angle 0.
    """
    if n_controls < 1:
        raise ValueError("need at least one control atom")
    if ring_radius <= 0:
        raise ValueError("ring_radius must be > 0")
    if placement is Placement.UNIFORM_RING:
        angles = TWO_PI * np.arange(n_controls) / n_controls
    elif placement is Placement.ADJACENT_CHORD:
        if chord_spacing is None:
            raise ValueError("ADJACENT_CHORD requires chord_spacing")
        if chord_spacing > 2 * ring_radius:
            raise ValueError(
                f"chord {chord_spacing} um impossible on a ring of radius {ring_radius} um"
            )
        step = 2 * math.asin(chord_spacing / (2 * ring_radius))
        if (n_controls - 1) * step >= TWO_PI:
            raise ValueError("controls do not fit on the ring with this chord")
        angles = step * np.arange(n_controls)
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown placement {placement}")
    pos = np.zeros((n_controls + 1, 2))
    pos[:n_controls, 0] = ring_radius * np.cos(angles)
    pos[:n_controls, 1] = ring_radius * np.sin(angles)
    pos.setflags(write=False)
    return AtomGeometry(n_controls, float(ring_radius), placement,
                        chord_spacing, pos)


@dataclass(frozen=True)
class InteractionGraph:
    """Pairwise density-density couplings, angular MHz.

    ``v_ct[j]`` couples control j to the target; ``v_cc[j, k]`` couples
    control pairs (symmetric, zero diagonal).  Built from geometry the
    control-target couplings are all equal; noise-perturbed copies may break
    that equality.
    """

    v_ct: np.ndarray
    v_cc: np.ndarray
    c6: float

    @property
    def n_controls(self) -> int:
        return len(self.v_ct)

    def pair_coupling(self, j: int, k: int) -> float:
        """Coupling between sites j and k (target = last site)."""
        n = self.n_controls
        if j == k:
            raise DimensionError("no self-coupling")
        if j > k:
            j, k = k, j
        return float(self.v_ct[j]) if k == n else float(self.v_cc[j, k])


def build_interactions(geometry: AtomGeometry, c6: float = C6_DEFAULT) -> InteractionGraph:
    """v = c6 / R**6 for every atom pair of the geometry."""
    n = geometry.n_controls
    pos = geometry.positions
    v_ct = np.empty(n)
    v_cc = np.zeros((n, n))
    for j in range(n):
        r = np.linalg.norm(pos[j] - pos[n])
        if r <= 0:
            raise ValueError(f"control {j} coincides with the target")
        v_ct[j] = c6 / r**6
    for j in range(n):
        for k in range(j + 1, n):
            r = np.linalg.norm(pos[j] - pos[k])
            if r <= 0:
                raise ValueError(f"controls {j} and {k} coincide")
            v_cc[j, k] = v_cc[k, j] = c6 / r**6
    spread = v_ct.max() - v_ct.min()
    if spread > 1e-9 * v_ct.max():
        raise ValueError("control-target couplings unequal; geometry is broken")
    v_ct.setflags(write=False)
    v_cc.setflags(write=False)
    return InteractionGraph(v_ct, v_cc, float(c6))


# ---------------------------------------------------------------------------
# gate and drive specifications


@dataclass(frozen=True)
class GateSpec:
    """Target rotation axis/angle of the controlled gate: (theta, phi, gamma)."""

    n_controls: int
    theta: float
    phi: float
    gamma: float

    def __post_init__(self):
        if self.n_controls < 0:
            raise ValueError("n_controls must be >= 0")

    @staticmethod
    def cn_not(n_controls: int) -> "GateSpec":
        return GateSpec(n_controls, math.pi / 2, 0.0, math.pi)


@dataclass(frozen=True)
class DriveSpec:
    """Laser drive parameters in the rotating frame.

    control_amp and modulation define the amplitude-modulated control
    coupling; target_amp/target_detuning are the loop waveform callables;
    the schedule carries the two-segment phase jump, and (theta, phi) fix
    the bright/dark decomposition of the target qubit.
    peak_amp records max|target_amp| for relative-error bookkeeping.
    omega0_offset is a static offset applied to the |0> <-> |r> leg only.
    """

    control_amp: float
    modulation: float
    target_amp: Callable[[float], float]
    target_detuning: Callable[[float], float]
    schedule: PhaseSchedule
    theta: float
    phi: float
    peak_amp: float
    omega0_offset: float = 0.0

    def __post_init__(self):
        # phase convention phi = phi1 - phi0 - pi must hold on both segments
        for (_, p0, p1) in self.schedule.segments():
            mismatch = (p1 - p0 - math.pi - self.phi) % TWO_PI
            if min(mismatch, TWO_PI - mismatch) > 1e-9:
                raise ValueError("phase schedule inconsistent with phi")


@dataclass(frozen=True)
class TwoPhotonParams:
    """Four-level pumping-chain parameters (angular MHz).

    Control chain: |0> -(omega_cp, intermediate offset -delta_c)-> |p>
    -(omega_cr_bar * cos(modulation t))-> |r>.  Target chains couple both
    qubit levels through |p> with opposite intermediate detunings so the two
    ground states acquire no effective mutual coupling.

    ``stark_shifts_enabled=False`` models ideal compensation of the five
    light-shift terms generated by the always-on chains (they are subtracted
    from the assembled Hamiltonian); ``True`` leaves the physical shifts in.
    """

    omega_cp: float
    omega_cr_bar: float
    omega_0p: Callable[[float], float]
    omega_1p: Callable[[float], float]
    omega_0r: float
    omega_1r: float
    delta_c: float
    delta_0: float
    delta_1: float
    stark_shifts_enabled: bool = False
    peak_0p: float = 0.0
    peak_1p: float = 0.0

    def __post_init__(self):
        amps = [self.omega_cp, self.omega_cr_bar, self.omega_0r, self.omega_1r,
                self.peak_0p, self.peak_1p]
        ratio = min(abs(self.delta_c), abs(self.delta_0), abs(self.delta_1)) / max(
            max(abs(a) for a in amps), 1e-30
        )
        if ratio < 4:
            warnings.warn(
                f"intermediate detunings only {ratio:.2f}x the Rabi amplitudes; "
                "adiabatic elimination of |p> is marginal",
                stacklevel=2,
            )

    @property
    def effective_control_amp(self) -> float:
        return self.omega_cr_bar * self.omega_cp / (2 * self.delta_c)

    def effective_target_amps(self, t: float) -> tuple[float, float]:
        return (
            self.omega_0r * self.omega_0p(t) / (2 * self.delta_0),
            self.omega_1r * self.omega_1p(t) / (2 * self.delta_1),
        )


@dataclass(frozen=True)
class SystemModel:
    """Level scheme + geometry + couplings + drives: the Hamiltonian source.

    Noise-adjusted copies carry per-atom static |r> detunings (thermal
    Doppler offsets), a relative detuning-waveform error, a spin-echo flag
    (flips the sign of quasi-static detuning errors after T/2) and the actual
    run duration (timing errors stretch or truncate it).
    """

    scheme: LevelScheme
    geometry: AtomGeometry
    interactions: InteractionGraph
    drive: DriveSpec
    gate: GateSpec
    two_photon: Optional[TwoPhotonParams] = None
    doppler_detunings: Optional[np.ndarray] = None
    delta_rel_offset: float = 0.0
    spin_echo: bool = False
    run_time: Optional[float] = None

    @property
    def n_controls(self) -> int:
        return self.geometry.n_controls

    @property
    def n_atoms(self) -> int:
        return self.geometry.n_atoms

    @property
    def dims(self) -> SiteDims:
        return SiteDims([self.scheme.dim] * self.n_atoms)

    @property
    def gate_time(self) -> float:
        return self.drive.schedule.gate_time

    @property
    def total_time(self) -> float:
        return self.gate_time if self.run_time is None else self.run_time

    def echo_sign(self, t: float) -> float:
        return -1.0 if (self.spin_echo and t > self.gate_time / 2) else 1.0


def bright_ket(theta: float, phi: float, scheme: LevelScheme) -> np.ndarray:
    """|B> = sin(theta/2)|0> - cos(theta/2) e^{i phi} |1> in the site basis."""
    v = np.zeros(scheme.dim, dtype=complex)
    v[scheme.index("0")] = math.sin(theta / 2)
    v[scheme.index("1")] = -math.cos(theta / 2) * np.exp(1j * phi)
    return v


def dark_ket(theta: float, phi: float, scheme: LevelScheme) -> np.ndarray:
    v = np.zeros(scheme.dim, dtype=complex)
    v[scheme.index("0")] = math.cos(theta / 2)
    v[scheme.index("1")] = math.sin(theta / 2) * np.exp(1j * phi)
    return v


def dressed_basis_unitary(theta: float, phi: float,
                          scheme: LevelScheme | None = None) -> Operator:
    """Single-site unitary sending |0> -> |D>, |1> -> |B>, identity elsewhere."""
    scheme = scheme or LevelScheme.three_level()
    d = scheme.dim
    u = np.eye(d, dtype=complex)
    i0, i1 = scheme.index("0"), scheme.index("1")
    dk, bk = dark_ket(theta, phi, scheme), bright_ket(theta, phi, scheme)
    u[:, i0] = dk
    u[:, i1] = bk
    return Operator(SiteDims([d]), u)


# ---------------------------------------------------------------------------
# model construction helpers


def make_gate_model(
    gate: GateSpec,
    omega_fn: Callable[[float], float],
    delta_fn: Callable[[float], float],
    schedule: PhaseSchedule,
    peak_amp: float,
    control_amp: float,
    scheme: LevelScheme | None = None,
    ring_radius: float = 3.8,
    placement: Placement = Placement.UNIFORM_RING,
    chord_spacing: Optional[float] = None,
    c6: float = C6_DEFAULT,
    modulation: Optional[float] = None,
) -> SystemModel:
    """Assemble a SystemModel; modulation defaults to the control-target coupling."""
    scheme = scheme or LevelScheme.three_level()
    geometry = build_geometry(gate.n_controls, ring_radius, placement, chord_spacing)
    interactions = build_interactions(geometry, c6)
    if modulation is None:
        modulation = float(interactions.v_ct[0])
    drive = DriveSpec(
        control_amp=control_amp,
        modulation=modulation,
        target_amp=omega_fn,
        target_detuning=delta_fn,
        schedule=schedule,
        theta=gate.theta,
        phi=gate.phi,
        peak_amp=peak_amp,
    )
    return SystemModel(scheme, geometry, interactions, drive, gate)


# ---------------------------------------------------------------------------
# Hamiltonian builders


def _interaction_diag(model: SystemModel) -> np.ndarray:
    """Static diagonal sum of v_jk n_j n_k over the product basis."""
    dims = model.dims
    r_idx = model.scheme.index("r")
    table = dims.digit_table() == r_idx  # (n, n_atoms) bool
    n_atoms = model.n_atoms
    diag = np.zeros(dims.total_dim)
    for j in range(n_atoms):
        for k in range(j + 1, n_atoms):
            v = model.interactions.pair_coupling(j, k)
            diag += v * (table[:, j] & table[:, k])
    return diag


def _doppler_terms(model: SystemModel, n_r_mat: np.ndarray) -> list[Term]:
    if model.doppler_detunings is None or not np.any(model.doppler_detunings):
        return []
    dims = model.dims
    r_idx = model.scheme.index("r")
    table = dims.digit_table() == r_idx
    diag = (table * np.asarray(model.doppler_detunings)).sum(axis=1)
    return [Term(model.echo_sign, (TermPiece("diag", diag),))]


def _target_drive_terms(model: SystemModel) -> list[Term]:
    """Bright-state coupling, optional |0>-leg offset and shaped detuning."""
    scheme, drive = model.scheme, model.drive
    target = model.n_atoms - 1
    r = scheme.index("r")
    b = bright_ket(drive.theta, drive.phi, scheme)
    br = np.outer(b, site_ket(scheme.dim, r).conj())  # |B><r|
    zbr = site_transition(scheme.dim, r, r) - np.outer(b, b.conj())
    sched = drive.schedule
    amp, det = drive.target_amp, drive.target_detuning
    d_rel = model.delta_rel_offset
    echo = model.echo_sign

    def c_br(t):
        return 0.5 * amp(t) * np.exp(1j * sched.phi0(t))

    def c_rb(t):
        return np.conj(c_br(t))

    def c_z(t):
        return 0.5 * det(t) * (1.0 + echo(t) * d_rel)

    terms = [
        Term(c_br, (TermPiece("site", (target, br)),)),
        Term(c_rb, (TermPiece("site", (target, br.conj().T)),)),
        Term(c_z, (TermPiece("site", (target, zbr)),)),
    ]
    if drive.omega0_offset:
        leg0 = site_transition(scheme.dim, scheme.index("0"), r)
        off = drive.omega0_offset

        def c_0r(t):
            return 0.5 * off * np.exp(1j * sched.phi0(t))

        def c_r0(t):
            return np.conj(c_0r(t))

        terms.append(Term(c_0r, (TermPiece("site", (target, leg0)),)))
        terms.append(Term(c_r0, (TermPiece("site", (target, leg0.conj().T)),)))
    return terms


def full_hamiltonian_terms(model: SystemModel) -> TimeDependentOperator:
    """Full rotating-frame Hamiltonian: modulated control drive + target loop
    drive + static interactions (+ noise detunings)."""
    scheme = model.scheme
    dims = model.dims
    r = scheme.index("r")
    x0r = site_transition(scheme.dim, scheme.index("0"), r)
    x0r = x0r + x0r.conj().T
    amp_c, mod = model.drive.control_amp, model.drive.modulation

    def c_control(t):
        return 0.5 * amp_c * math.cos(mod * t)

    terms = [
        Term(c_control, tuple(TermPiece("site", (j, x0r)) for j in range(model.n_controls))),
    ]
    terms += _target_drive_terms(model)
    n_r = site_transition(scheme.dim, r, r)
    terms += _doppler_terms(model, n_r)
    diag = _interaction_diag(model)
    max_freq = abs(mod) + float(np.max(np.abs(diag))) if dims.total_dim > 1 else abs(mod)
    return TimeDependentOperator(
        dims,
        static_diag=diag,
        terms=terms,
        breakpoints=(model.gate_time / 2, model.total_time),
        max_frequency=max_freq,
        coeff_frequency=abs(mod),
    )


def build_full_hamiltonian(model: SystemModel, t: float) -> Operator:
    """Dense snapshot of the full Hamiltonian at time t (must lie in the run)."""
    if not 0.0 <= t <= model.total_time + 1e-12:
        raise ValueError(f"t={t} outside the gate window [0, {model.total_time}]")
    return full_hamiltonian_terms(model).as_operator(t)


def effective_hamiltonian_terms(model: SystemModel) -> TimeDependentOperator:
    """Target loop drive gated by the all-controls-|1> projector.

    Exactly zero on any state with a control outside |1>; on the active block
    it reproduces the target drive including the shaped detuning, Doppler
    offset of the target and the phase schedule.
    """
    scheme = model.scheme
    dims = model.dims
    target = model.n_atoms - 1
    p1 = site_transition(scheme.dim, scheme.index("1"), scheme.index("1"))
    gate_pieces = tuple((j, p1) for j in range(model.n_controls))

    def gated(piece: TermPiece) -> TermPiece:
        site, m = piece.payload
        return TermPiece("product", gate_pieces + ((site, m),))

    terms = []
    for term in _target_drive_terms(model):
        terms.append(Term(term.coeff, tuple(gated(p) for p in term.pieces)))
    if model.doppler_detunings is not None and model.doppler_detunings[target]:
        n_r = site_transition(scheme.dim, scheme.index("r"), scheme.index("r"))
        d = float(model.doppler_detunings[target])

        def c_dop(t):
            return d * model.echo_sign(t)

        terms.append(Term(c_dop, (TermPiece("product", gate_pieces + ((target, n_r),)),)))
    return TimeDependentOperator(
        dims,
        static_diag=None,
        terms=terms,
        breakpoints=(model.gate_time / 2, model.total_time),
        max_frequency=0.0,
    )


def build_effective_hamiltonian(model: SystemModel, t: float) -> Operator:
    return effective_hamiltonian_terms(model).as_operator(t)


# ---------------------------------------------------------------------------
# collective (permutation-symmetric) form


def collective_ising_energy(m: int, k: int, target_excited: bool,
                            j_cc: float, j_ct: float) -> float:
    """Interaction energy of the collective state with k of m actives bright
    and the rest auxiliary-excited, optionally with the target excited."""
    n_aux = m - k
    e = j_cc * comb(n_aux, 2)
    if target_excited:
        e += j_ct * n_aux
    return e


def collective_basis(n_controls: int, truncated: bool = False):
    """Ordered labels (m, k, s) of the collective basis; s=1 means target in |r>.

    m = number of controls participating in the |0>/|r> manifold, k of which
    are still in |0>.  ``truncated=True`` keeps only k in {m, m-1}, the
    blockade-dominated subspace.
    """
    labels = []
    for m in range(n_controls + 1):
        ks = range(m, max(m - 2, -1), -1) if truncated else range(m, -1, -1)
        for k in ks:
            for s in (0, 1):
                labels.append((m, k, s))
    return labels


def dicke_hamiltonian_terms(
    n_controls: int,
    j_cc: float,
    j_ct: float,
    control_amp: float,
    modulation: float,
    target_amp: Callable[[float], float],
    target_detuning: Callable[[float], float],
    schedule: PhaseSchedule,
    truncated: bool = False,
) -> tuple[TimeDependentOperator, list]:
    """Hamiltonian in the collective basis (equal control-control couplings).

    Couplings between (m, k, s) and (m, k-1, s) carry the enhanced amplitude
    sqrt(k (m - k + 1)) * control_amp/2 * cos(modulation t); target terms act
    within (m, k): |B>-like <-> |r>-like with the segment phase.  Returns the
    operator and the basis labels.
    """
    labels = collective_basis(n_controls, truncated)
    index = {lab: i for i, lab in enumerate(labels)}
    n = len(labels)
    diag = np.array([
        collective_ising_energy(m, k, bool(s), j_cc, j_ct) for (m, k, s) in labels
    ])
    ctrl = np.zeros((n, n))
    for (m, k, s) in labels:
        if k >= 1 and (m, k - 1, s) in index:
            f = math.sqrt(k * (m - k + 1))
            a, b = index[(m, k, s)], index[(m, k - 1, s)]
            ctrl[a, b] = ctrl[b, a] = f
    raise_t = np.zeros((n, n))  # |target B><target r| analogue
    for (m, k, s) in labels:
        if s == 1 and (m, k, 0) in index:
            raise_t[index[(m, k, 0)], index[(m, k, 1)]] = 1.0
    z_t = np.diag(np.array([1.0 if s else -1.0 for (_, _, s) in labels]))

    def c_control(t):
        return 0.5 * control_amp * math.cos(modulation * t)

    def c_br(t):
        return 0.5 * target_amp(t) * np.exp(1j * schedule.phi0(t))

    def c_rb(t):
        return np.conj(c_br(t))

    def c_z(t):
        return 0.5 * target_detuning(t)

    dims = SiteDims([n]) if n >= 2 else SiteDims([2])
    op = TimeDependentOperator(
        dims,
        static_diag=diag.astype(complex),
        terms=[
            Term(c_control, (TermPiece("dense", ctrl),)),
            Term(c_br, (TermPiece("dense", raise_t),)),
            Term(c_rb, (TermPiece("dense", raise_t.conj().T),)),
            Term(c_z, (TermPiece("dense", z_t),)),
        ],
        breakpoints=schedule.breakpoints,
        max_frequency=abs(modulation) + float(np.max(np.abs(diag))),
        coeff_frequency=abs(modulation),
    )
    return op, labels


def build_dicke_hamiltonian(n_controls, j_cc, j_ct, control_amp, modulation,
                            target_amp, target_detuning, schedule, t,
                            truncated: bool = False) -> Operator:
    op, _ = dicke_hamiltonian_terms(
        n_controls, j_cc, j_ct, control_amp, modulation,
        target_amp, target_detuning, schedule, truncated,
    )
    return op.as_operator(t)


def collective_isometry(model: SystemModel, m_active: int) -> tuple[np.ndarray, list]:
    """Map the collective basis of one m-sector into the product basis.

    The first ``m_active`` controls form the symmetric manifold (the rest sit
    frozen in |1>); column (k, s) is the normalized symmetric combination of
    the product states with k actives in |0>, m-k in |r>, spectators in |1>,
    and the target in |B>/(|r>) for s=0/1.
    """
    from itertools import combinations

    scheme = model.scheme
    dims = model.dims
    n_ctrl = model.n_controls
    if not 0 <= m_active <= n_ctrl:
        raise ValueError("m_active out of range")
    i0, i1, ir = scheme.index("0"), scheme.index("1"), scheme.index("r")
    b_t = bright_ket(model.drive.theta, model.drive.phi, scheme)
    labels = [(m_active, k, s) for k in range(m_active, -1, -1) for s in (0, 1)]
    cols = np.zeros((dims.total_dim, len(labels)), dtype=complex)
    for col, (m, k, s) in enumerate(labels):
        weight = 1.0 / math.sqrt(comb(m, k))
        for bright_sites in combinations(range(m), k):
            digits = [i1] * model.n_atoms
            for j in range(m):
                digits[j] = i0 if j in bright_sites else ir
            # target amplitude pattern
            base = list(digits)
            if s == 1:
                base[-1] = ir
                cols[dims.flat_index(base), col] += weight
            else:
                for lvl, amp in enumerate(b_t):
                    if amp != 0:
                        base[-1] = lvl
                        cols[dims.flat_index(base), col] += weight * amp
    return cols, labels


# ---------------------------------------------------------------------------
# two-photon (four-level) realization


def two_photon_terms(model: SystemModel) -> TimeDependentOperator:
    """Four-level pumping-chain Hamiltonian in a single rotating frame.

    Frame anchored on the |0>-chain of each atom: |p> sits at -delta
    (so the always-on chain produces the standard light shifts with the
    signs of the effective model), |r> of the target carries the shaped
    detuning delta(t).  The |1>-chain legs rotate at +-(delta_0 + delta_1),
    keeping both two-photon resonances while detuning the cross couplings.
    """
    params = model.two_photon
    if params is None or model.scheme.name != "four_level_pump":
        raise ValueError("two-photon terms need a four_level_pump model")
    scheme = model.scheme
    dims = model.dims
    n_ctrl = model.n_controls
    target = model.n_atoms - 1
    i0, i1 = scheme.index("0"), scheme.index("1")
    ip, ir = scheme.index("p"), scheme.index("r")
    d = scheme.dim
    sched = model.drive.schedule
    mod = model.drive.modulation

    n_p = site_transition(d, ip, ip)
    n_r = site_transition(d, ir, ir)
    n_0 = site_transition(d, i0, i0)
    n_1 = site_transition(d, i1, i1)
    p0 = site_transition(d, ip, i0)   # |p><0|
    p1 = site_transition(d, ip, i1)
    rp = site_transition(d, ir, ip)   # |r><p|

    table = dims.digit_table()
    diag = _interaction_diag(model)
    # intermediate-level offsets: -delta_c on controls, -delta_0 on target
    diag = diag.astype(float)
    for j in range(n_ctrl):
        diag -= params.delta_c * (table[:, j] == ip)
    diag -= params.delta_0 * (table[:, target] == ip)

    delta_fn = model.drive.target_detuning
    dsum = params.delta_0 + params.delta_1

    terms: list[Term] = []

    # control chains: static optical leg, modulated auxiliary leg
    x_cp = p0 + p0.conj().T
    x_cr = rp + rp.conj().T
    terms.append(Term(lambda t: 0.5 * params.omega_cp,
                      tuple(TermPiece("site", (j, x_cp)) for j in range(n_ctrl))))
    terms.append(Term(lambda t: 0.5 * params.omega_cr_bar * math.cos(mod * t),
                      tuple(TermPiece("site", (j, x_cr)) for j in range(n_ctrl))))

    # target |0>-chain (frame anchor): gate phase on the optical leg
    def c_0p(t):
        return 0.5 * params.omega_0p(t) * np.exp(-1j * sched.phi0(t))

    terms.append(Term(c_0p, (TermPiece("site", (target, p0)),)))
    terms.append(Term(lambda t: np.conj(c_0p(t)), (TermPiece("site", (target, p0.conj().T)),)))
    terms.append(Term(lambda t: 0.5 * params.omega_0r,
                      (TermPiece("site", (target, rp + rp.conj().T)),)))

    # target |1>-chain: rotates at the detuning split
    def c_1p(t):
        return 0.5 * params.omega_1p(t) * np.exp(1j * (dsum * t - sched.phi1(t)))

    def c_1r(t):
        return 0.5 * params.omega_1r * np.exp(-1j * dsum * t)

    terms.append(Term(c_1p, (TermPiece("site", (target, p1)),)))
    terms.append(Term(lambda t: np.conj(c_1p(t)), (TermPiece("site", (target, p1.conj().T)),)))
    terms.append(Term(c_1r, (TermPiece("site", (target, rp)),)))
    terms.append(Term(lambda t: np.conj(c_1r(t)), (TermPiece("site", (target, rp.conj().T)),)))

    # shaped detuning rides on the target auxiliary level
    terms.append(Term(lambda t: delta_fn(t), (TermPiece("site", (target, n_r)),)))

    if not params.stark_shifts_enabled:
        # ideal compensation: subtract the chain-induced light shifts
        s_c0 = params.omega_cp**2 / (4 * params.delta_c)
        terms.append(Term(lambda t: -s_c0,
                          tuple(TermPiece("site", (j, n_0)) for j in range(n_ctrl))))

        def c_cr_shift(t):
            return -(params.omega_cr_bar * math.cos(mod * t)) ** 2 / (4 * params.delta_c)

        terms.append(Term(c_cr_shift,
                          tuple(TermPiece("site", (j, n_r)) for j in range(n_ctrl))))
        terms.append(Term(lambda t: -params.omega_0p(t) ** 2 / (4 * params.delta_0),
                          (TermPiece("site", (target, n_0)),)))
        terms.append(Term(lambda t: +params.omega_1p(t) ** 2 / (4 * params.delta_1),
                          (TermPiece("site", (target, n_1)),)))
        s_r = params.omega_0r**2 / (4 * params.delta_0) - params.omega_1r**2 / (4 * params.delta_1)
        terms.append(Term(lambda t: -s_r, (TermPiece("site", (target, n_r)),)))

    max_freq = abs(dsum) + abs(params.delta_c) + abs(mod) + float(np.max(np.abs(diag)))
    return TimeDependentOperator(
        dims,
        static_diag=diag,
        terms=terms,
        breakpoints=(model.gate_time / 2, model.total_time),
        max_frequency=max_freq,
        coeff_frequency=abs(dsum) + abs(mod),
    )


def build_two_photon_hamiltonian(model: SystemModel, t: float) -> Operator:
    return two_photon_terms(model).as_operator(t)


# ---------------------------------------------------------------------------
# ideal gate


def ideal_gate_unitary(gate: GateSpec) -> np.ndarray:
    """Ideal (N+1)-qubit controlled rotation on the computational subspace.

    Identity except on the all-controls-|1> block, where the target receives
    exp(i gamma/2) exp(-i gamma/2 n.sigma) with axis
    n = (sin theta cos phi, sin theta sin phi, cos theta).
    """
    th, ph, ga = gate.theta, gate.phi, gate.gamma
    nx, ny, nz = math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)
    n_sigma = np.array([[nz, nx - 1j * ny], [nx + 1j * ny, -nz]], dtype=complex)
    u_t = np.exp(1j * ga / 2) * (
        math.cos(ga / 2) * np.eye(2) - 1j * math.sin(ga / 2) * n_sigma
    )
    dim = 2 ** (gate.n_controls + 1)
    u = np.eye(dim, dtype=complex)
    u[dim - 2 :, dim - 2 :] = u_t
    return u
