"""Tensor-product linear algebra for multi-atom systems with per-site level counts.

States and operators live on a product Hilbert space of ``n_sites`` atoms,
each with its own (small) number of levels.  Basis ordering is fixed once and
for all: site 0 is the first control atom, site ``n_sites - 1`` is the target
atom, and site 0 varies *slowest* in the flattened index, i.e. the flat index
of the product basis state ``|i_0 i_1 ... i_{n-1}>`` is

    index = i_0 * (d_1 * ... * d_{n-1}) + i_1 * (d_2 * ... * d_{n-1}) + ...

which is exactly the ordering produced by ``numpy.kron`` applied left to
right.  Projectors, Pauli-string embeddings and population bookkeeping all
rely on this convention.

Everything is dense: the spaces used here top out at a few thousand basis
states, where dense matvecs are simpler and faster than sparse machinery.
All container types are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

#: Maximum allowed total dimension of a product space (guards desk-scale use).
DEFAULT_DIM_CAP = 4**7

#: Absolute max-norm tolerance used when verifying a Hermiticity hint.
HERMITIAN_ATOL = 1e-12


class DimensionError(ValueError):
    """Raised for mismatched or over-cap Hilbert space dimensions."""


def _as_complex_matrix(m) -> np.ndarray:
    out = np.asarray(m, dtype=complex)
    if out.ndim != 2 or out.shape[0] != out.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {out.shape}")
    return out


def is_hermitian(matrix: np.ndarray, atol: float = HERMITIAN_ATOL) -> bool:
    return bool(np.max(np.abs(matrix - matrix.conj().T)) <= atol)


@dataclass(frozen=True)
class SiteDims:
    """Ordered per-atom level counts of a product Hilbert space.

    Parameters
    ----------
    dims : sequence of int
        Levels per site, e.g. ``(3, 3, 3)`` for three three-level atoms.
    cap : int
        Upper bound on the total dimension.
    """

    dims: tuple[int, ...]
    cap: int = DEFAULT_DIM_CAP

    def __init__(self, dims: Sequence[int], cap: int = DEFAULT_DIM_CAP):
        dims = tuple(int(d) for d in dims)
        if not dims or any(d < 2 for d in dims):
            raise DimensionError(f"every site needs >= 2 levels, got {dims}")
        total = int(np.prod(dims, dtype=np.int64))
        if total > cap:
            raise DimensionError(f"total dimension {total} exceeds cap {cap}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "cap", cap)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    def __len__(self) -> int:
        return len(self.dims)

    def __iter__(self):
        return iter(self.dims)

    def __getitem__(self, i) -> int:
        return self.dims[i]

    def flat_index(self, digits: Sequence[int]) -> int:
        """Flat basis index of the product state with the given per-site levels."""
        if len(digits) != self.n_sites:
            raise DimensionError("one digit per site required")
        idx = 0
        for d, n in zip(digits, self.dims):
            if not 0 <= d < n:
                raise DimensionError(f"digit {d} out of range for a {n}-level site")
            idx = idx * n + d
        return idx

    def digits(self, index: int) -> tuple[int, ...]:
        """Per-site levels of a flat basis index (site 0 first)."""
        out = []
        for n in reversed(self.dims):
            out.append(index % n)
            index //= n
        return tuple(reversed(out))

    def digit_table(self) -> np.ndarray:
        """(total_dim, n_sites) array of per-site levels for every basis index."""
        n = self.total_dim
        table = np.empty((n, self.n_sites), dtype=np.int64)
        idx = np.arange(n)
        for s in range(self.n_sites - 1, -1, -1):
            table[:, s] = idx % self.dims[s]
            idx //= self.dims[s]
        return table


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Operator:
    """Dense complex square matrix on a product space, with Hermiticity metadata.

    ``hermitian_hint=True`` is verified at construction to ``HERMITIAN_ATOL``.
    """

    dims: SiteDims
    matrix: np.ndarray
    hermitian_hint: bool = False

    def __init__(self, dims: SiteDims, matrix, hermitian_hint: bool = False):
        m = _as_complex_matrix(matrix)
        if m.shape[0] != dims.total_dim:
            raise DimensionError(
                f"matrix dimension {m.shape[0]} != product dimension {dims.total_dim}"
            )
        if hermitian_hint and not is_hermitian(m):
            raise ValueError("hermitian_hint set but matrix is not Hermitian")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "matrix", _frozen(m))
        object.__setattr__(self, "hermitian_hint", bool(hermitian_hint))

    @property
    def total_dim(self) -> int:
        return self.dims.total_dim

    def dagger(self) -> "Operator":
        return Operator(self.dims, self.matrix.conj().T, self.hermitian_hint)


@dataclass(frozen=True)
class StateVector:
    """Complex amplitudes over the product basis."""

    dims: SiteDims
    amps: np.ndarray

    def __init__(self, dims: SiteDims, amps):
        a = np.asarray(amps, dtype=complex).reshape(-1)
        if a.shape[0] != dims.total_dim:
            raise DimensionError(
                f"state length {a.shape[0]} != product dimension {dims.total_dim}"
            )
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "amps", _frozen(a))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalized(self) -> "StateVector":
        return StateVector(self.dims, self.amps / self.norm())


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian matrix over the product basis.

    Positivity is *not* enforced: process evaluation feeds traceless
    Pauli-string initial conditions through the evolution by linearity.
    """

    dims: SiteDims
    matrix: np.ndarray

    def __init__(self, dims: SiteDims, matrix):
        m = _as_complex_matrix(matrix)
        if m.shape[0] != dims.total_dim:
            raise DimensionError(
                f"matrix dimension {m.shape[0]} != product dimension {dims.total_dim}"
            )
        if np.max(np.abs(m - m.conj().T)) > 1e-10:
            raise ValueError("density matrix must be Hermitian within 1e-10")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "matrix", _frozen(m))

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    @staticmethod
    def from_state(state: StateVector) -> "DensityMatrix":
        return DensityMatrix(state.dims, np.outer(state.amps, state.amps.conj()))


# ---------------------------------------------------------------------------
# construction helpers


def identity(dims: SiteDims) -> Operator:
    return Operator(dims, np.eye(dims.total_dim), hermitian_hint=True)


def basis_state(dims: SiteDims, digits: Sequence[int]) -> StateVector:
    amps = np.zeros(dims.total_dim, dtype=complex)
    amps[dims.flat_index(digits)] = 1.0
    return StateVector(dims, amps)


def site_ket(dim: int, level: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[level] = 1.0
    return v


def site_transition(dim: int, i: int, j: int) -> np.ndarray:
    """Single-site |i><j| as a dense (dim, dim) matrix."""
    m = np.zeros((dim, dim), dtype=complex)
    m[i, j] = 1.0
    return m


# ---------------------------------------------------------------------------
# algebra


def tensor_product(a: Operator, b: Operator) -> Operator:
    """Kronecker product; dims concatenate (left factor varies slowest)."""
    dims = SiteDims(a.dims.dims + b.dims.dims, cap=max(a.dims.cap, b.dims.cap))
    return Operator(
        dims, np.kron(a.matrix, b.matrix), a.hermitian_hint and b.hermitian_hint
    )


def _site_matrix(op) -> np.ndarray:
    if isinstance(op, Operator):
        return np.asarray(op.matrix)
    return _as_complex_matrix(op)


def embed_site_operator(op, site: int, dims: SiteDims) -> Operator:
    """Embed a single-site operator at ``site``, identity elsewhere."""
    m = _site_matrix(op)
    if not 0 <= site < dims.n_sites:
        raise DimensionError(f"site {site} out of range for {dims.n_sites} sites")
    if m.shape[0] != dims[site]:
        raise DimensionError(
            f"operator dimension {m.shape[0]} != site dimension {dims[site]}"
        )
    pre = int(np.prod(dims.dims[:site], dtype=np.int64))
    post = int(np.prod(dims.dims[site + 1 :], dtype=np.int64))
    full = np.kron(np.kron(np.eye(pre), m), np.eye(post))
    return Operator(dims, full, hermitian_hint=is_hermitian(m))


def embed_pair_operator(op_a, op_b, sites: tuple[int, int], dims: SiteDims) -> Operator:
    """Embed ``op_a`` at site j and ``op_b`` at site k, identity elsewhere."""
    j, k = sites
    if j == k:
        raise DimensionError("pair operator requires two distinct sites")
    a = embed_site_operator(op_a, j, dims)
    b = embed_site_operator(op_b, k, dims)
    herm = a.hermitian_hint and b.hermitian_hint
    return Operator(dims, a.matrix @ b.matrix, hermitian_hint=herm)


def excitation_number_projector(dims: SiteDims, level: int, count: int) -> Operator:
    """Projector onto basis states with exactly ``count`` sites in ``level``."""
    if not 0 <= count <= dims.n_sites:
        raise DimensionError(f"count {count} outside 0..{dims.n_sites}")
    occupancy = (dims.digit_table() == level).sum(axis=1)
    diag = (occupancy == count).astype(complex)
    return Operator(dims, np.diag(diag), hermitian_hint=True)


def expectation(state, op: Operator) -> complex:
    """<psi|A|psi> for states, Tr(rho A) for density matrices."""
    if isinstance(state, StateVector):
        if state.dims.dims != op.dims.dims:
            raise DimensionError("state and operator dimensions differ")
        val = complex(np.vdot(state.amps, op.matrix @ state.amps))
    elif isinstance(state, DensityMatrix):
        if state.dims.dims != op.dims.dims:
            raise DimensionError("state and operator dimensions differ")
        val = complex(np.sum(state.matrix * op.matrix.T))
    else:
        raise TypeError(f"unsupported state type {type(state)!r}")
    if op.hermitian_hint and abs(val.imag) > 1e-10 * max(1.0, abs(val)):
        raise ValueError(
            f"expectation of Hermitian operator came out non-real: {val!r}"
        )
    return val


# ---------------------------------------------------------------------------
# time-dependent operators with tensor structure
#
# A Hamiltonian is represented as
#
#     H(t) = diag(static) + sum_k  c_k(t) * P_k
#
# where each piece P_k is a diagonal vector, a sum of single-site embeddings,
# a product of single-site embeddings, or a general dense matrix.  The
# factored forms let the propagator apply H(t) in O(total_dim * site_dim)
# per site instead of O(total_dim^2), which is what makes the larger arrays
# (five controls and a target) tractable.


def apply_site_matrix(vec: np.ndarray, dims: SiteDims, site: int, m: np.ndarray) -> np.ndarray:
    """Apply a single-site matrix to a state vector without forming the embedding."""
    pre = int(np.prod(dims.dims[:site], dtype=np.int64))
    d = dims[site]
    post = int(np.prod(dims.dims[site + 1 :], dtype=np.int64))
    if post == 1:
        return (vec.reshape(pre, d) @ m.T).reshape(-1)
    if pre == 1:
        return (m @ vec.reshape(d, post)).reshape(-1)
    v = vec.reshape(pre, d, post)
    return np.einsum("ab,xbz->xaz", m, v).reshape(-1)


def apply_site_matrix_left(mat: np.ndarray, dims: SiteDims, site: int, m: np.ndarray) -> np.ndarray:
    """(L_site x I) @ mat for a square matrix ``mat``."""
    n = dims.total_dim
    pre = int(np.prod(dims.dims[:site], dtype=np.int64))
    d = dims[site]
    post = int(np.prod(dims.dims[site + 1 :], dtype=np.int64))
    v = mat.reshape(pre, d, post * n)
    return np.einsum("ab,xbz->xaz", m, v).reshape(n, n)


def apply_site_matrix_right(mat: np.ndarray, dims: SiteDims, site: int, m: np.ndarray) -> np.ndarray:
    """mat @ (R_site x I)^dagger ... here: mat @ embed(m)^H for site-local m."""
    n = dims.total_dim
    pre = int(np.prod(dims.dims[:site], dtype=np.int64))
    d = dims[site]
    post = int(np.prod(dims.dims[site + 1 :], dtype=np.int64))
    v = mat.reshape(n * pre, d, post)
    return np.einsum("cbz,ab->caz", v, m.conj()).reshape(n, n)


@dataclass(frozen=True)
class TermPiece:
    """One structural piece of a Hamiltonian term.

    kind is one of 'diag' (payload: vector), 'site' (payload: (site, matrix)),
    'product' (payload: tuple of (site, matrix) on distinct sites) or
    'dense' (payload: full matrix).
    """

    kind: str
    payload: object


@dataclass(frozen=True)
class Term:
    coeff: Callable[[float], complex]
    pieces: tuple[TermPiece, ...]


class TimeDependentOperator:
    """H(t) = diag(static) + sum_k c_k(t) * piece_k with tensor-structured pieces.

    Parameters
    ----------
    dims : SiteDims
    static_diag : array or None
        Time-independent diagonal part (interaction energies).
    terms : iterable of Term
    breakpoints : sorted times at which coefficients are discontinuous
        (segment phase switches); the integrator never steps across them.
    max_frequency : fastest angular frequency present anywhere (rad/us),
        including static level shifts; caps the step of plain steppers.
    coeff_frequency : fastest oscillation of the coefficients c_k(t) alone;
        caps the step when the static diagonal is handled exactly by an
        integrating factor.  Defaults to max_frequency.
    """

    DENSE_APPLY_LIMIT = 160  # below this total dim, per-term dense matvec wins

    def __init__(
        self,
        dims: SiteDims,
        static_diag=None,
        terms: Iterable[Term] = (),
        breakpoints: Sequence[float] = (),
        max_frequency: float = 0.0,
        coeff_frequency: float | None = None,
    ):
        self.dims = dims
        n = dims.total_dim
        self.static_diag = (
            np.zeros(n, dtype=complex)
            if static_diag is None
            else np.asarray(static_diag, dtype=complex).reshape(n)
        )
        self.terms = tuple(terms)
        self.breakpoints = tuple(sorted(set(float(b) for b in breakpoints)))
        self.max_frequency = float(max_frequency)
        self.coeff_frequency = float(
            max_frequency if coeff_frequency is None else coeff_frequency)
        self._dense_pieces = [self._materialize(t) for t in self.terms]
        self._use_dense_apply = n <= self.DENSE_APPLY_LIMIT

    # -- materialization ----------------------------------------------------

    def _materialize(self, term: Term) -> np.ndarray:
        n = self.dims.total_dim
        out = np.zeros((n, n), dtype=complex)
        for piece in term.pieces:
            if piece.kind == "diag":
                out[np.diag_indices(n)] += np.asarray(piece.payload, dtype=complex)
            elif piece.kind == "site":
                site, m = piece.payload
                out += embed_site_operator(m, site, self.dims).matrix
            elif piece.kind == "product":
                acc = np.eye(n, dtype=complex)
                for site, m in piece.payload:
                    acc = acc @ embed_site_operator(m, site, self.dims).matrix
                out += acc
            elif piece.kind == "dense":
                out += np.asarray(piece.payload, dtype=complex)
            else:
                raise ValueError(f"unknown piece kind {piece.kind!r}")
        return out

    def dense(self, t: float) -> np.ndarray:
        """Materialize H(t) as a dense matrix."""
        n = self.dims.total_dim
        out = np.diag(self.static_diag.astype(complex))
        for term, mat in zip(self.terms, self._dense_pieces):
            c = term.coeff(t)
            if c != 0.0:
                out += c * mat
        return out

    def as_operator(self, t: float, check_hermitian: bool = True) -> Operator:
        m = self.dense(t)
        if check_hermitian and not is_hermitian(m):
            raise ValueError(f"assembled operator is not Hermitian at t={t}")
        return Operator(self.dims, m, hermitian_hint=check_hermitian)

    # -- fast application ---------------------------------------------------

    def apply_terms(self, t: float, vec: np.ndarray) -> np.ndarray:
        """sum_k c_k(t) P_k @ vec -- the Hamiltonian without its static diagonal."""
        out = np.zeros_like(vec)
        if self._use_dense_apply:
            for term, mat in zip(self.terms, self._dense_pieces):
                c = term.coeff(t)
                if c != 0.0:
                    out += c * (mat @ vec)
            return out
        for term in self.terms:
            c = term.coeff(t)
            if c == 0.0:
                continue
            for piece in term.pieces:
                if piece.kind == "diag":
                    out += c * (np.asarray(piece.payload) * vec)
                elif piece.kind == "site":
                    site, m = piece.payload
                    out += c * apply_site_matrix(vec, self.dims, site, m)
                elif piece.kind == "product":
                    acc = vec
                    for site, m in piece.payload:
                        acc = apply_site_matrix(acc, self.dims, site, m)
                    out += c * acc
                else:
                    out += c * (np.asarray(piece.payload) @ vec)
        return out

    def apply(self, t: float, vec: np.ndarray) -> np.ndarray:
        """H(t) @ vec without materializing H."""
        return self.static_diag * vec + self.apply_terms(t, vec)

    def suggested_max_step(self, exact_diagonal: bool = True) -> float:
        freq = self.coeff_frequency if exact_diagonal else self.max_frequency
        if freq <= 0.0:
            return np.inf
        return (2.0 * np.pi / freq) / 8.0
