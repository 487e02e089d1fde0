"""Benchmark system-bath models, Gibbs states and the statistical temperature.

The statistical inverse temperature ``beta_prime`` of the pure-state ensemble
is fixed by requiring its mean energy to equal the thermal (Gibbs) energy at
the physical ``beta``.  Under the uniform sphere measure the populations of a
random composite state are flat-Dirichlet distributed, so the ensemble mean
energy is a one-dimensional tilted simplex average evaluated exactly by
:func:`pensemble.divdiff.simplex_moments`.
"""
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
from scipy import optimize, sparse

from .divdiff import simplex_moments
from .errors import InvalidInputError, SolverError
from .quantum import PAULI_X, Spectrum, check_hermitian

TRUNCATION_TAIL = 1e-4
WEAK_COUPLING_RATIO = 1e-3

DEGENERATE_SPIN_BATH = "degenerate-spin-bath"
TRUNCATED_OSCILLATOR = "truncated-oscillator"


@dataclass(frozen=True)
class ModelSpec:
    """A system coupled to a bath, ``H = H_S x 1 + 1 x H_B + V``.

    Attributes:
        h_system: ``N x N`` system Hamiltonian (eV).
        h_bath: ``M x M`` bath Hamiltonian (eV).
        coupling: ``NM x NM`` coupling operator including ``lam`` (eV).
        lam: coupling strength (eV).
        kind: model tag.
        params: construction parameters, echoed into run manifests.
    """

    h_system: np.ndarray
    h_bath: np.ndarray
    coupling: object
    lam: float
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        hs = check_hermitian(self.h_system, "system Hamiltonian").real.copy()
        hb = check_hermitian(self.h_bath, "bath Hamiltonian").real.copy()
        v = sparse.csr_matrix(self.coupling)
        n, m = hs.shape[0], hb.shape[0]
        if v.shape != (n * m, n * m):
            raise InvalidInputError(f"coupling shape {v.shape} does not match N*M = {n * m}")
        if abs(v - v.conj().T).max() > 1e-12 * max(1.0, abs(v).max()):
            raise InvalidInputError("coupling operator is not Hermitian")
        object.__setattr__(self, "h_system", hs)
        object.__setattr__(self, "h_bath", hb)
        object.__setattr__(self, "coupling", v)

    @property
    def dims(self):
        return self.h_system.shape[0], self.h_bath.shape[0]

    def hamiltonian_sparse(self):
        n, m = self.dims
        hs = sparse.kron(sparse.csr_matrix(self.h_system), sparse.identity(m))
        hb = sparse.kron(sparse.identity(n), sparse.csr_matrix(self.h_bath))
        return (hs + hb + self.coupling).tocsr()

    def hamiltonian(self):
        return self.hamiltonian_sparse().toarray()

    def composite_spectrum(self):
        return Spectrum(np.linalg.eigvalsh(self.hamiltonian()))

    def bath_spectrum(self):
        return Spectrum(np.linalg.eigvalsh(self.h_bath))

    def system_spectrum(self):
        return Spectrum(np.linalg.eigvalsh(self.h_system))

    @property
    def weak_coupling(self):
        gaps = []
        for h in (self.h_system, self.h_bath):
            d = np.diff(np.linalg.eigvalsh(h))
            gaps.extend(d[d > 1e-12].tolist())
        if not gaps:
            return True
        return self.lam < WEAK_COUPLING_RATIO * min(gaps)


@dataclass(frozen=True)
class ThermalContext:
    """Physical and statistical inverse temperatures (1/eV).

    Attributes:
        beta: ``1 / k_B T``.
        beta_prime: ``1 / k_B Theta``.
        solve_residual: relative Park-Band residual (0 when overridden).
        vacuous: the constraint holds for any beta_prime (degenerate spectrum).
        overridden: beta_prime was supplied rather than solved.
    """

    beta: float
    beta_prime: float
    solve_residual: float = 0.0
    vacuous: bool = False
    overridden: bool = False

    def __post_init__(self):
        if not self.beta >= 0 or not np.isfinite(self.beta):
            raise InvalidInputError(f"beta must be finite and nonnegative, got {self.beta}")
        if not self.beta_prime >= 0 or not np.isfinite(self.beta_prime):
            raise InvalidInputError(
                f"beta_prime must be finite and nonnegative, got {self.beta_prime}")

    @property
    def k_theta(self):
        """``k_B Theta`` in eV."""
        return 1.0 / self.beta_prime

    @property
    def k_t(self):
        return 1.0 / self.beta


def build_qubit_system(hbar_omega0):
    """``-hbar omega0 / 2 * sigma_z`` in the ``{|0>, |1>}`` basis."""
    if not hbar_omega0 > 0:
        raise InvalidInputError(f"hbar_omega0 must be positive, got {hbar_omega0}")
    return np.diag([-0.5 * hbar_omega0, 0.5 * hbar_omega0])


def build_degenerate_spin_bath(D, E0=0.0, lam=1e-6, hbar_omega0=0.30):
    """Qubit in a bath of ``D`` unbiased qubits at energy ``E0``.

    The coupling is ``lam`` times the ``(D+1)``-fold tensor power of
    ``sigma_x``, with the system qubit as the leading factor.
    """
    if int(D) != D or D < 1:
        raise InvalidInputError(f"D must be a positive integer, got {D}")
    D = int(D)
    m = 2 ** D
    sx = sparse.csr_matrix(PAULI_X.real)
    v = lam * reduce(lambda a, b: sparse.kron(a, b, format="csr"), [sx] * (D + 1))
    return ModelSpec(build_qubit_system(hbar_omega0), E0 * np.eye(m), v, lam,
                     DEGENERATE_SPIN_BATH,
                     {"D": D, "E0": E0, "lambda": lam, "hbar_omega0": hbar_omega0})


def displacement_operator(M):
    """Truncated ``x`` with ``<i|x|j> = sqrt(i) d_{i,j+1} + sqrt(j) d_{j,i+1}``."""
    off = np.sqrt(np.arange(1, M, dtype=float))
    return np.diag(off, 1) + np.diag(off, -1)


def build_truncated_oscillator_bath(M, hbar_omega=0.06, lam=1e-6, hbar_omega0=0.30):
    """Qubit coupled through ``sigma_x x`` to an ``M``-level harmonic ladder."""
    if int(M) != M or M < 2:
        raise InvalidInputError(f"M must be an integer >= 2, got {M}")
    if not hbar_omega > 0:
        raise InvalidInputError(f"hbar_omega must be positive, got {hbar_omega}")
    M = int(M)
    hb = np.diag(hbar_omega * (np.arange(M) + 0.5))
    v = lam * sparse.kron(sparse.csr_matrix(PAULI_X.real),
                          sparse.csr_matrix(displacement_operator(M)), format="csr")
    return ModelSpec(build_qubit_system(hbar_omega0), hb, v, lam, TRUNCATED_OSCILLATOR,
                     {"M": M, "hbar_omega": hbar_omega, "lambda": lam,
                      "hbar_omega0": hbar_omega0})


def truncation_size(beta, hbar_omega, tail=TRUNCATION_TAIL):
    """Smallest ``M`` with Boltzmann tail ``exp(-beta hbar_omega M) < tail``."""
    if not beta > 0 or not hbar_omega > 0:
        raise InvalidInputError("beta and hbar_omega must be positive")
    m = max(2, int(np.floor(-np.log(tail) / (beta * hbar_omega))))
    while np.exp(-beta * hbar_omega * m) >= tail:
        m += 1
    while m > 2 and np.exp(-beta * hbar_omega * (m - 1)) < tail:
        m -= 1
    return m


def _energies(spectrum):
    if isinstance(spectrum, Spectrum):
        return spectrum.eigenvalues
    return np.sort(np.asarray(spectrum, dtype=float).ravel())


def gibbs_state(H, beta, allow_infinite_temperature=False):
    """``exp(-beta H) / Tr exp(-beta H)``, built in the eigenbasis of ``H``."""
    H = check_hermitian(H, "Hamiltonian")
    if beta == 0 and allow_infinite_temperature:
        return np.eye(H.shape[0]) / H.shape[0]
    if not beta > 0:
        raise InvalidInputError(f"beta must be positive, got {beta}")
    e, u = np.linalg.eigh(H)
    w = np.exp(-beta * (e - e.min()))
    w /= w.sum()
    rho = (u * w) @ u.conj().T
    return 0.5 * (rho + rho.conj().T)


def gibbs_energy(spectrum, beta):
    """``Tr{H rho_G(beta)}`` from the spectrum of ``H``."""
    e = _energies(spectrum)
    if beta == 0:
        return float(e.mean())
    w = np.exp(-beta * (e - e.min()))
    return float(np.dot(w, e) / w.sum())


def p_ensemble_log_partition(spectrum, beta_prime):
    """Log of the uniform-sphere average of ``exp(-beta_prime <H>)``."""
    log_z, _ = simplex_moments(_energies(spectrum), beta_prime, order=1)
    return log_z


def p_ensemble_mean_energy(spectrum, beta_prime):
    """Mean of ``<psi|H|psi>`` over the ensemble ``exp(-beta_prime <H>)``.

    Equals ``-d ln Z / d beta_prime`` for the sphere partition function; exact
    up to rounding for any spectrum, including repeated levels.
    """
    e = _energies(spectrum)
    _, m = simplex_moments(e, beta_prime, order=1)
    return float(e[0] + m[0])


def solve_statistical_temperature(model, beta, beta_prime=None, rtol=1e-10):
    """Solve the mean-energy consistency condition for ``beta_prime``.

    Args:
        model: a :class:`ModelSpec` or a composite :class:`Spectrum`.
        beta: physical inverse temperature (1/eV).
        beta_prime: optional override; skips the solve.
        rtol: relative energy tolerance for the residual.

    Returns:
        A :class:`ThermalContext`.

    Raises:
        SolverError: no sign change found or the residual check failed.
    """
    if not beta >= 0 or not np.isfinite(beta):
        raise InvalidInputError(f"beta must be finite and nonnegative, got {beta}")
    if beta_prime is not None:
        return ThermalContext(beta, float(beta_prime), overridden=True)
    spec = model if isinstance(model, Spectrum) else model.composite_spectrum()
    if spec.is_fully_degenerate:
        return ThermalContext(beta, beta, vacuous=True)
    e = spec.eigenvalues
    target = gibbs_energy(spec, beta)
    if beta == 0:
        return ThermalContext(0.0, 0.0)
    scale = max(abs(target), float(e[-1] - e[0]))

    def resid(bp):
        return p_ensemble_mean_energy(spec, bp) - target

    hi = max(1.0, beta)
    f_hi = resid(hi)
    doublings = 0
    while f_hi > 0:
        hi *= 2.0
        doublings += 1
        if doublings > 60:
            raise SolverError("no bracket for beta_prime", {"target": target, "hi": hi})
        f_hi = resid(hi)
    lo = 0.0 if doublings == 0 else hi / 2.0
    bp = optimize.brentq(resid, lo, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps,
                         maxiter=500)
    res = abs(resid(bp)) / scale
    if res > rtol:
        raise SolverError("beta_prime residual above tolerance",
                          {"beta_prime": bp, "residual": res, "target": target})
    return ThermalContext(beta, float(bp), solve_residual=float(res))
