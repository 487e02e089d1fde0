"""Composite pure states, reduced density matrices and spectra.

A composite state of an ``N``-level system and an ``M``-level bath is stored
as a unit vector of length ``N*M`` in the product basis ``|i>|j>`` with the
system index running slowest, so that reshaping to ``(N, M)`` yields the
coefficient matrix ``X`` with ``X[i, j] = c_ij``.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, UnsupportedDimensionError

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
TRACE_TOL = 1e-10
DEGENERACY_RTOL = 1e-9

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class CompositeState:
    """Unit-norm system-bath pure state.

    Attributes:
        amplitudes: complex vector of length ``N*M``.
        dims: ``(N, M)``.
    """

    amplitudes: np.ndarray
    dims: tuple

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex).ravel()
        n, m = (int(d) for d in self.dims)
        if n < 1 or m < 1:
            raise InvalidInputError(f"dimensions must be positive, got {self.dims}")
        if amp.size != n * m:
            raise InvalidInputError(
                f"amplitude length {amp.size} does not match N*M = {n * m}")
        norm2 = float(np.vdot(amp, amp).real)
        if abs(norm2 - 1.0) > NORM_TOL:
            raise InvalidInputError(f"state is not normalized: |psi|^2 = {norm2!r}")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "dims", (n, m))

    @classmethod
    def from_vector(cls, vec, dims, normalize=False):
        vec = np.asarray(vec, dtype=complex).ravel()
        if normalize:
            vec = vec / np.linalg.norm(vec)
        return cls(vec, tuple(dims))

    @property
    def matrix(self):
        """Coefficient matrix ``X`` of shape ``(N, M)``."""
        return self.amplitudes.reshape(self.dims)


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues with their degeneracy partition.

    Two values belong to the same group when
    ``|a - b| <= rtol * max(1, |a|, |b|)``; groups are built by chaining
    neighbours in sorted order.
    """

    eigenvalues: np.ndarray
    rtol: float = DEGENERACY_RTOL
    groups: tuple = field(init=False)

    def __post_init__(self):
        ev = np.sort(np.asarray(self.eigenvalues, dtype=float).ravel())
        if ev.size == 0:
            raise InvalidInputError("spectrum must be nonempty")
        if not np.all(np.isfinite(ev)):
            raise InvalidInputError("spectrum contains non-finite values")
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)
        groups, start = [], 0
        for i in range(1, ev.size):
            a, b = ev[i - 1], ev[i]
            if abs(b - a) > self.rtol * max(1.0, abs(a), abs(b)):
                groups.append(tuple(range(start, i)))
                start = i
        groups.append(tuple(range(start, ev.size)))
        object.__setattr__(self, "groups", tuple(groups))

    def __len__(self):
        return self.eigenvalues.size

    @property
    def is_distinct(self):
        return len(self.groups) == self.eigenvalues.size

    @property
    def is_fully_degenerate(self):
        return len(self.groups) == 1

    def group_values(self):
        """Representative (mean) value and multiplicity of each group."""
        vals = np.array([self.eigenvalues[list(g)].mean() for g in self.groups])
        mult = np.array([len(g) for g in self.groups], dtype=int)
        return vals, mult


def check_hermitian(op, name="operator"):
    op = np.asarray(op, dtype=complex)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise InvalidInputError(f"{name} must be a square matrix, got shape {op.shape}")
    scale = max(1.0, float(np.max(np.abs(op))) if op.size else 1.0)
    if np.max(np.abs(op - op.conj().T)) > HERMITIAN_TOL * scale:
        raise InvalidInputError(f"{name} is not Hermitian")
    return op


def check_density_matrix(sigma):
    """Validate a density matrix and return it as a complex array."""
    sigma = check_hermitian(sigma, "density matrix")
    tr = np.trace(sigma).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvalidInputError(f"density matrix trace is {tr!r}, expected 1")
    if np.linalg.eigvalsh(sigma).min() < -PSD_TOL:
        raise InvalidInputError("density matrix has negative eigenvalues")
    return sigma


def partial_trace_bath(state):
    """Reduced system state ``sigma = X X^dagger``."""
    x = state.matrix
    sigma = x @ x.conj().T
    return 0.5 * (sigma + sigma.conj().T)


def partial_trace_system(state):
    """Reduced bath state ``gamma = X^T conj(X)`` (an ``M x M`` matrix).

    ``gamma[j, k] = sum_i c_ij conj(c_ik)``, which is the bath density matrix in
    the ``|j>`` basis, so that ``Tr{H_B gamma}`` equals the bath energy.
    """
    x = state.matrix
    gamma = x.T @ x.conj()
    return 0.5 * (gamma + gamma.conj().T)


def expectation(state, op):
    """``<psi|op|psi>`` as a real number."""
    op = np.asarray(op) if not hasattr(op, "dot") else op
    n = state.amplitudes.size
    if op.shape != (n, n):
        raise InvalidInputError(f"operator shape {op.shape} does not match state dimension {n}")
    psi = state.amplitudes
    val = np.vdot(psi, op @ psi)
    return float(val.real)


def bloch_vector(sigma):
    """Pauli expectations ``(x, y, z)`` of a qubit density matrix."""
    sigma = np.asarray(sigma, dtype=complex)
    if sigma.shape != (2, 2):
        raise UnsupportedDimensionError(f"Bloch vector needs a 2x2 state, got {sigma.shape}")
    return (float(np.trace(PAULI_X @ sigma).real),
            float(np.trace(PAULI_Y @ sigma).real),
            float(np.trace(PAULI_Z @ sigma).real))


def qubit_state(x=0.0, y=0.0, z=0.0):
    """Density matrix ``(1 + x sx + y sy + z sz) / 2``."""
    return 0.5 * (np.eye(2) + x * PAULI_X + y * PAULI_Y + z * PAULI_Z)


def state_eigenvalues(sigma):
    """Ascending eigenvalues, with round-off negatives clamped to zero."""
    ev = np.linalg.eigvalsh(np.asarray(sigma, dtype=complex))
    if ev.min() < -PSD_TOL:
        raise InvalidInputError("density matrix has negative eigenvalues")
    return np.clip(ev, 0.0, None)


def purity(sigma):
    sigma = np.asarray(sigma, dtype=complex)
    return float(np.einsum("ij,ji->", sigma, sigma).real)


def det_sigma(sigma):
    return float(np.prod(state_eigenvalues(sigma)))


def von_neumann_entropy(sigma):
    """``-sum eta ln eta`` in units of k_B, with ``0 ln 0 = 0``."""
    ev = state_eigenvalues(sigma)
    ev = ev[ev > 0]
    return float(-np.sum(ev * np.log(ev)))
