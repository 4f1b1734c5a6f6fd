"""Gate-quality measures: overlap fidelity, excitation-number populations and
the Pauli-string average gate fidelity of a trace-preserving channel.

The average fidelity of a channel E against an ideal unitary U on n qubits is

    F_avg = ( sum_v tr[ U u_v^+ U^+ E(u_v) ] + l^2 ) / ( l^2 (l + 1) ),

with l = 2^n and u_v running over all l^2 Pauli strings.  Each atom's qubit
is embedded in its physical level scheme: the string acts on the {|0>, |1>}
block and as zero on every other level, so amplitude left outside the
computational subspace at the end of the gate contributes nothing to the
projected trace and is penalized as leakage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable, Mapping, Sequence

import numpy as np

from .hilbert import DensityMatrix, DimensionError, Operator, SiteDims, StateVector
from .model import GateSpec, LevelScheme, ideal_gate_unitary

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_LABELS = ("I", "X", "Y", "Z")


@dataclass(frozen=True)
class FidelityCurve:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.min() < -1e-9 or v.max() > 1 + 1e-9:
            raise ValueError("fidelity values must lie in [0, 1]")

    @property
    def final(self) -> float:
        return float(self.values[-1])


def overlap_fidelity(psi_ideal: StateVector, psi: StateVector) -> float:
    """|<ideal|psi>|^2."""
    if psi_ideal.dims.dims != psi.dims.dims:
        raise DimensionError("states live on different spaces")
    return float(abs(np.vdot(psi_ideal.amps, psi.amps)) ** 2)


def state_fidelity(psi_ideal: StateVector, rho) -> float:
    """<ideal| rho |ideal> for a density matrix (or DensityMatrix)."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    v = psi_ideal.amps
    return float(np.real(np.vdot(v, m @ v)))


def benchmark_initial_state(n_controls: int,
                            scheme: LevelScheme | None = None) -> StateVector:
    """Uniform product superposition (|0> - |1>)/sqrt(2) on every atom."""
    scheme = scheme or LevelScheme.three_level()
    dims = SiteDims([scheme.dim] * (n_controls + 1))
    single = np.zeros(scheme.dim, dtype=complex)
    single[scheme.index("0")] = 1 / math.sqrt(2)
    single[scheme.index("1")] = -1 / math.sqrt(2)
    amps = single
    for _ in range(n_controls):
        amps = np.kron(amps, single)
    return StateVector(dims, amps)


def excitation_populations(state, scheme: LevelScheme, level: str = "r") -> np.ndarray:
    """[p_k] for k = 0..n_atoms sites in ``level``; sums to one."""
    dims = state.dims
    occupancy = (dims.digit_table() == scheme.index(level)).sum(axis=1)
    if isinstance(state, StateVector):
        weights = np.abs(state.amps) ** 2
    elif isinstance(state, DensityMatrix):
        weights = np.real(np.diag(state.matrix))
    else:
        raise TypeError(f"unsupported state type {type(state)!r}")
    pops = np.zeros(dims.n_sites + 1)
    np.add.at(pops, occupancy, weights)
    return pops


def level_population(state, scheme: LevelScheme, site: int, level: str = "r") -> float:
    """Population of one site's level."""
    dims = state.dims
    mask = dims.digit_table()[:, site] == scheme.index(level)
    if isinstance(state, StateVector):
        return float(np.sum(np.abs(state.amps[mask]) ** 2))
    return float(np.real(np.diag(state.matrix)[mask].sum()))


# ---------------------------------------------------------------------------
# Pauli strings


@dataclass(frozen=True)
class PauliString:
    """Per-qubit labels, embedded into the physical level schemes on demand.

    The embedding acts on the computational {|0>, |1>} block of each atom
    and is zero on all other levels.
    """

    labels: tuple[str, ...]

    def __post_init__(self):
        if any(l not in _LABELS for l in self.labels):
            raise ValueError(f"bad Pauli labels {self.labels}")

    @property
    def index(self) -> int:
        idx = 0
        for l in self.labels:
            idx = 4 * idx + _LABELS.index(l)
        return idx

    def embed(self, dims: SiteDims, scheme: LevelScheme) -> np.ndarray:
        if dims.n_sites != len(self.labels):
            raise DimensionError("one label per atom required")
        i0, i1 = scheme.index("0"), scheme.index("1")
        out = None
        for label in self.labels:
            site = np.zeros((scheme.dim, scheme.dim), dtype=complex)
            p = _PAULI[label]
            site[i0, i0], site[i0, i1] = p[0, 0], p[0, 1]
            site[i1, i0], site[i1, i1] = p[1, 0], p[1, 1]
            out = site if out is None else np.kron(out, site)
        return out


def pauli_strings(n_qubits: int):
    """All 4**n strings in index order (site 0 most significant)."""
    for labels in product(_LABELS, repeat=n_qubits):
        yield PauliString(labels)


def computational_indices(dims: SiteDims, scheme: LevelScheme) -> np.ndarray:
    """Flat indices of the 2^n computational product states, bitstring order."""
    i01 = (scheme.index("0"), scheme.index("1"))
    idx = []
    for bits in product((0, 1), repeat=dims.n_sites):
        idx.append(dims.flat_index([i01[b] for b in bits]))
    return np.array(idx)


def average_gate_fidelity(channel: Callable[[np.ndarray], np.ndarray],
                          u_ideal: np.ndarray, dims: SiteDims,
                          scheme: LevelScheme) -> float:
    """Pauli-transfer average fidelity of ``channel`` against ``u_ideal``.

    ``channel`` maps an initial full-space matrix (an embedded Pauli string,
    generally traceless) to the evolved full-space matrix; it must be linear.
    ``u_ideal`` is the ideal unitary on the 2^n computational subspace.
    """
    n_qubits = dims.n_sites
    l = 2**n_qubits
    if u_ideal.shape != (l, l):
        raise DimensionError(f"ideal unitary must be {l}x{l}")
    comp = computational_indices(dims, scheme)
    total = 0.0
    for string in pauli_strings(n_qubits):
        u_v = string.embed(dims, scheme)
        evolved = channel(u_v)
        evolved_comp = evolved[np.ix_(comp, comp)]
        target = u_ideal @ u_v[np.ix_(comp, comp)].conj().T @ u_ideal.conj().T
        total += float(np.real(np.sum(target * evolved_comp.T)))
    value = (total + l * l) / (l * l * (l + 1))
    if not -1e-6 <= value <= 1 + 1e-6:
        raise ValueError(f"average fidelity {value} outside [0, 1]")
    return value


def monte_carlo_average_fidelity(channel: Callable[[np.ndarray], np.ndarray],
                                 u_ideal: np.ndarray, dims: SiteDims,
                                 scheme: LevelScheme, n_samples: int = 2000,
                                 seed: int = 0) -> float:
    """Haar-random state-fidelity average; independent check of the
    Pauli-string formula for trace-preserving channels."""
    rng = np.random.default_rng(seed)
    comp = computational_indices(dims, scheme)
    l = len(comp)
    n = dims.total_dim
    acc = 0.0
    for _ in range(n_samples):
        z = rng.normal(size=l) + 1j * rng.normal(size=l)
        z /= np.linalg.norm(z)
        psi = np.zeros(n, dtype=complex)
        psi[comp] = z
        rho_out = channel(np.outer(psi, psi.conj()))
        ideal = np.zeros(n, dtype=complex)
        ideal[comp] = u_ideal @ z
        acc += float(np.real(np.vdot(ideal, rho_out @ ideal)))
    return acc / n_samples


def truth_table_check(final_states: Mapping[int, StateVector] | Sequence[StateVector],
                      gate: GateSpec, scheme: LevelScheme) -> float:
    """Worst-case overlap of evolved computational basis states with the ideal
    gate columns, after fitting one global phase common to all columns."""
    u = ideal_gate_unitary(gate)
    l = u.shape[0]
    if not isinstance(final_states, Mapping):
        final_states = dict(enumerate(final_states))
    if len(final_states) != l:
        raise DimensionError(f"need all {l} basis images")
    dims = next(iter(final_states.values())).dims
    comp = computational_indices(dims, scheme)
    overlaps = []
    for b in range(l):
        amps = final_states[b].amps[comp]
        overlaps.append(complex(np.vdot(u[:, b], amps)))
    overlaps = np.array(overlaps)
    phase = np.angle(overlaps.sum())
    aligned = overlaps * np.exp(-1j * phase)
    return float(np.min(np.real(aligned)) ** 2)
