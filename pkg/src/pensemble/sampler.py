"""Metropolis sampling of composite pure states.

Proposals are fresh uniform draws on the unit sphere of ``C^(NM)`` (a
Gaussian vector, normalized), so the proposal density is constant and the
acceptance probability reduces to ``min(1, exp(-beta' (E_new - E_old)))``
with ``E = <psi|H|psi>``.  Proposals and their energies are generated in
vectorized blocks; the inherently sequential accept/reject scan runs in
:mod:`pensemble.kernels`.
"""
import csv
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import kernels
from .errors import InvalidInputError
from .quantum import CompositeState

ACCEPTANCE_FLOOR = 1e-3
BLOCK_SIZE = 1 << 15


class LowAcceptanceWarning(RuntimeWarning):
    """Independence proposals are accepted too rarely for reliable statistics."""


@dataclass(frozen=True)
class ChainConfig:
    """Chain length and seeding.

    Attributes:
        n_samples: post-burn-in samples kept per chain (before thinning).
        burn_in: discarded leading steps; default 10% of ``n_samples``.
        thinning: keep every ``thinning``-th post-burn-in sample.
        seed: base seed; chain ``k`` uses ``seed + k``.
        n_chains: number of independent chains.
        keep_sigma: also store the reduced states of kept samples.
    """

    n_samples: int
    burn_in: int = None
    thinning: int = 1
    seed: int = 0
    n_chains: int = 1
    keep_sigma: bool = False

    def __post_init__(self):
        if int(self.n_samples) <= 0:
            raise InvalidInputError("n_samples must be positive")
        if int(self.thinning) < 1:
            raise InvalidInputError("thinning must be >= 1")
        if int(self.n_chains) < 1:
            raise InvalidInputError("n_chains must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", int(self.n_samples) // 10)
        if int(self.burn_in) < 0:
            raise InvalidInputError("burn_in must be >= 0")


@dataclass
class SampleSet:
    """Kept samples of one or more chains.

    Attributes:
        z_values: ``Tr{sigma_z sigma}`` per kept sample.
        energies: ``<psi|H|psi>`` per kept sample (eV).
        accepted: accept flag of the step that produced each kept sample.
        acceptance_rate: accepted / attempted over all steps incl. burn-in.
        chain_ids: chain index of each kept sample.
        sigma_samples: optional ``(n, N, N)`` reduced states.
    """

    z_values: np.ndarray
    energies: np.ndarray
    accepted: np.ndarray
    acceptance_rate: float
    chain_ids: np.ndarray
    n_accepted: int = 0
    n_steps: int = 0
    sigma_samples: np.ndarray = None
    per_chain_rates: list = field(default_factory=list)

    def chain(self, k):
        sel = self.chain_ids == k
        return SampleSet(self.z_values[sel], self.energies[sel], self.accepted[sel],
                         self.per_chain_rates[k] if self.per_chain_rates else self.acceptance_rate,
                         self.chain_ids[sel],
                         sigma_samples=None if self.sigma_samples is None
                         else self.sigma_samples[sel])

    @property
    def n_chains(self):
        return int(self.chain_ids.max()) + 1 if self.chain_ids.size else 0

    def write_csv(self, path):
        """Raw chain dump: ``index, z, energy, accepted``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "z", "energy", "accepted"])
            for i, (z, e, a) in enumerate(zip(self.z_values, self.energies, self.accepted)):
                w.writerow([i, f"{z:.17g}", f"{e:.17g}", int(a)])


def sample_uniform_sphere(dim, rng, size=None):
    """Uniform unit vector(s) in ``C^dim`` from normalized Gaussians.

    Args:
        dim: complex dimension ``N*M`` (``2*dim`` real degrees of freedom).
        rng: ``numpy.random.Generator``.
        size: number of vectors; ``None`` for a single vector.

    Returns:
        Array of shape ``(dim,)`` or ``(size, dim)``.
    """
    n = 1 if size is None else int(size)
    out = np.empty((n, dim), dtype=complex)
    todo = np.arange(n)
    while todo.size:
        g = rng.standard_normal((todo.size, 2 * dim))
        v = g[:, :dim] + 1j * g[:, dim:]
        norm = np.linalg.norm(v, axis=1)
        ok = norm > 0
        out[todo[ok]] = v[ok] / norm[ok, None]
        todo = todo[~ok]
    return out[0] if size is None else out


def sample_uniform_state(dims, rng):
    n, m = dims
    return CompositeState(sample_uniform_sphere(n * m, rng), (n, m))


def metropolis_step(current, proposal, beta_prime, H, rng):
    """One accept/reject decision.

    Returns:
        ``(state, accepted)``; on rejection ``state`` is ``current``.
    """
    e_old = float(np.vdot(current.amplitudes, H @ current.amplitudes).real)
    e_new = float(np.vdot(proposal.amplitudes, H @ proposal.amplitudes).real)
    de = e_new - e_old
    if de <= 0 or beta_prime == 0:
        return proposal, True
    if np.log1p(-rng.random()) < -beta_prime * de:
        return proposal, True
    return current, False


def _energies(h, psi):
    hp = (h @ psi.T).T
    return np.ascontiguousarray(np.einsum("ij,ij->i", psi.conj(), hp).real)


def _z_of(psi, n, m):
    if n != 2:
        return np.full(psi.shape[0], np.nan)
    a = np.abs(psi.reshape(-1, n, m)) ** 2
    return a[:, 0, :].sum(axis=1) - a[:, 1, :].sum(axis=1)


def _sigma_of(psi, n, m):
    x = psi.reshape(-1, n, m)
    return np.einsum("kij,klj->kil", x, x.conj())


def _kept_positions(done, b, cfg):
    lo = max(0, int(cfg.burn_in) - done)
    keep = np.arange(lo, b)
    return keep[(done + keep - int(cfg.burn_in)) % int(cfg.thinning) == 0]


def _run_product(h, dims, beta_prime, cfg, chain, block):
    """Proposals as normalized Gaussian vectors in the product basis."""
    n, m = dims
    rng = np.random.default_rng(int(cfg.seed) + chain)
    total = int(cfg.burn_in) + int(cfg.n_samples)
    zs, es, acc, sig = [], [], [], []
    first = sample_uniform_sphere(n * m, rng, 1)
    held_e = float(_energies(h, first)[0])
    held_z = float(_z_of(first, n, m)[0])
    held_s = _sigma_of(first, n, m)[0]
    n_acc = 0
    done = 0
    while done < total:
        b = min(block, total - done)
        psi = sample_uniform_sphere(n * m, rng, b)
        e = _energies(h, psi)
        log_u = np.log1p(-rng.random(b))
        index, a, e_last = kernels.metropolis_scan(e, log_u, float(beta_prime), held_e)
        hold = index < 0
        safe = np.where(hold, 0, index)
        z_chain = np.where(hold, held_z, _z_of(psi, n, m)[safe])
        e_chain = np.where(hold, held_e, e[safe])
        keep = _kept_positions(done, b, cfg)
        zs.append(z_chain[keep])
        es.append(e_chain[keep])
        acc.append(a[keep])
        if cfg.keep_sigma:
            s_chain = np.where(hold[:, None, None], held_s, _sigma_of(psi, n, m)[safe])
            sig.append(s_chain[keep])
            held_s = s_chain[-1]
        n_acc += int(a.sum())
        held_e, held_z = float(e_last), float(z_chain[-1])
        done += b
    return (np.concatenate(zs), np.concatenate(es), np.concatenate(acc).astype(bool),
            n_acc, total, np.concatenate(sig) if cfg.keep_sigma else None)


def _run_eigenbasis(h, dims, beta_prime, cfg, chain, block):
    """Proposals drawn in the eigenbasis of ``H``.

    A uniform unit vector in any orthonormal basis has flat-Dirichlet
    populations and independent uniform phases.  Drawing the populations as
    normalized exponentials in the eigenbasis gives each proposal energy as a
    single dot product; phases and the rotation back to the product basis are
    only needed for accepted proposals.  The chain has exactly the same law as
    with product-basis Gaussian proposals.
    """
    n, m = dims
    p = n * m
    energies, vecs = np.linalg.eigh(h.toarray())
    rng = np.random.default_rng(int(cfg.seed) + chain)
    total = int(cfg.burn_in) + int(cfg.n_samples)

    def states(pop):
        phase = rng.random(pop.shape) * (2.0 * np.pi)
        amp = np.sqrt(pop) * np.exp(1j * phase)
        return amp @ vecs.T

    zs, es, acc, sig = [], [], [], []
    x = rng.standard_exponential((1, p))
    pop0 = x / x.sum()
    held_e = float(pop0[0] @ energies)
    psi0 = states(pop0)
    held_z = float(_z_of(psi0, n, m)[0])
    held_s = _sigma_of(psi0, n, m)[0]
    n_acc = 0
    done = 0
    while done < total:
        b = min(block, total - done)
        x = rng.standard_exponential((b, p))
        norm = x.sum(axis=1)
        e = np.ascontiguousarray((x @ energies) / norm)
        log_u = np.log1p(-rng.random(b))
        index, a, e_last = kernels.metropolis_scan(e, log_u, float(beta_prime), held_e)
        hits = np.flatnonzero(a)
        psi = states(x[hits] / norm[hits, None])
        zp = np.empty(b)
        zp[hits] = _z_of(psi, n, m)
        hold = index < 0
        safe = np.where(hold, 0, index)
        z_chain = np.where(hold, held_z, zp[safe])
        e_chain = np.where(hold, held_e, e[safe])
        keep = _kept_positions(done, b, cfg)
        zs.append(z_chain[keep])
        es.append(e_chain[keep])
        acc.append(a[keep])
        if cfg.keep_sigma:
            sp = np.empty((b, n, n), dtype=complex)
            sp[hits] = _sigma_of(psi, n, m)
            s_chain = np.where(hold[:, None, None], held_s, sp[safe])
            sig.append(s_chain[keep])
            held_s = s_chain[-1]
        n_acc += int(a.sum())
        held_e, held_z = float(e_last), float(z_chain[-1])
        done += b
    return (np.concatenate(zs), np.concatenate(es), np.concatenate(acc).astype(bool),
            n_acc, total, np.concatenate(sig) if cfg.keep_sigma else None)


PROPOSALS = {"eigenbasis": _run_eigenbasis, "product": _run_product}


def _run_single(h, dims, beta_prime, cfg, chain, proposal="eigenbasis"):
    block = max(1024, min(BLOCK_SIZE, 4_000_000 // (dims[0] * dims[1])))
    return PROPOSALS[proposal](h, dims, beta_prime, cfg, chain, block)


def _worker(args):
    return _run_single(*args)


def run_chain(model, ctx, cfg, workers=1, proposal="eigenbasis"):
    """Run ``cfg.n_chains`` independent chains.

    Args:
        model: :class:`pensemble.models.ModelSpec`.
        ctx: thermal context providing ``beta_prime``.
        cfg: :class:`ChainConfig`.
        workers: process count for parallel chains (results do not depend on it).
        proposal: ``"eigenbasis"`` (fast, default) or ``"product"`` (literal
            Gaussian vectors in the product basis); both draw uniform states.

    Returns:
        :class:`SampleSet` with all chains concatenated in chain order.
    """
    h = model.hamiltonian_sparse()
    if np.iscomplexobj(h.data) and not np.any(h.data.imag):
        h = sparse.csr_matrix(h.real)
    if proposal not in PROPOSALS:
        raise InvalidInputError(f"unknown proposal scheme {proposal!r}")
    jobs = [(h, model.dims, ctx.beta_prime, cfg, k, proposal) for k in range(int(cfg.n_chains))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_worker, jobs))
    else:
        results = [_worker(j) for j in jobs]
    z = np.concatenate([r[0] for r in results])
    e = np.concatenate([r[1] for r in results])
    a = np.concatenate([r[2] for r in results])
    ids = np.concatenate([np.full(r[0].size, k, dtype=int) for k, r in enumerate(results)])
    n_acc = sum(r[3] for r in results)
    n_steps = sum(r[4] for r in results)
    rates = [r[3] / r[4] for r in results]
    sig = None
    if cfg.keep_sigma:
        sig = np.concatenate([r[5] for r in results])
    rate = n_acc / n_steps
    if rate < ACCEPTANCE_FLOOR:
        warnings.warn(f"acceptance rate {rate:.2e} below {ACCEPTANCE_FLOOR:g}; "
                      "statistics may be undersampled", LowAcceptanceWarning, stacklevel=2)
    return SampleSet(z, e, a, rate, ids, n_acc, n_steps, sig, rates)


def run_discrete_chain(state_energies, beta_prime, n_steps, seed=0):
    """Independence Metropolis chain over a finite state set.

    Proposals pick a state uniformly; the same kernel as :func:`run_chain`
    decides acceptance.  Useful for checking the stationary distribution
    against exact enumeration.

    Returns:
        ``(states, acceptance_rate)`` with the held state index per step.
    """
    energies = np.asarray(state_energies, dtype=float)
    rng = np.random.default_rng(seed)
    prop = rng.integers(0, energies.size, size=n_steps + 1)
    log_u = np.log1p(-rng.random(n_steps))
    proposed = np.ascontiguousarray(energies[prop[1:]])
    index, acc, _ = kernels.metropolis_scan(proposed, log_u, float(beta_prime),
                                            float(energies[prop[0]]))
    states = np.where(index < 0, prop[0], prop[1:][np.maximum(index, 0)])
    return states, float(acc.mean())


def integrated_autocorrelation_time(x, c=5.0):
    """Integrated autocorrelation time with Sokal's automatic window.

    Returns 1 for constant series; clamped below at 1 (negative correlations
    are not credited).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    d = x - x.mean()
    var = np.dot(d, d) / n
    if var == 0 or n < 2:
        return 1.0
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(d, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n] / (var * n)
    taus = 2.0 * np.cumsum(acf) - 1.0
    w = np.arange(n) >= c * taus
    win = int(np.argmax(w)) if np.any(w) else n - 1
    return float(max(1.0, taus[win]))


def chain_statistics(samples):
    """Mean and variance of ``z`` with autocorrelation-aware standard errors.

    Returns:
        dict with ``mean_z``, ``var_z`` (unbiased), ``var_z_population``,
        ``se_mean``, ``se_var``, ``tau``, ``tau_var`` and ``n``.
    """
    z = np.asarray(samples.z_values if hasattr(samples, "z_values") else samples, dtype=float)
    n = z.size
    if n < 100:
        raise InvalidInputError(f"chain_statistics needs >= 100 samples, got {n}")
    shifted = z - z[0]
    mean = float(z[0] + shifted.mean())
    d = shifted - shifted.mean()
    var_pop = float(np.dot(d, d) / n)
    var = var_pop * n / (n - 1)
    tau = integrated_autocorrelation_time(z)
    sq = d * d
    tau2 = integrated_autocorrelation_time(sq)
    se_mean = float(np.sqrt(var * tau / n))
    se_var = float(np.sqrt(sq.var() * tau2 / n))
    return {"mean_z": mean, "var_z": var, "var_z_population": var_pop,
            "se_mean": se_mean, "se_var": se_var, "tau": tau, "tau_var": tau2, "n": n}


def histogram_z(samples, bins=40, n_batches=50):
    """Binned density of ``z`` on ``[-1, 1]`` with batch-means standard errors.

    Standard errors come from the spread of per-batch bin frequencies over
    contiguous batches of each chain, which absorbs autocorrelation.

    Returns:
        ``(centers, density, stderr, edges)``.
    """
    if int(bins) < 2:
        raise InvalidInputError("bins must be >= 2")
    z = np.asarray(samples.z_values if hasattr(samples, "z_values") else samples, dtype=float)
    if z.size == 0:
        raise InvalidInputError("empty sample set")
    edges = np.linspace(-1.0, 1.0, int(bins) + 1)
    width = np.diff(edges)
    counts, _ = np.histogram(np.clip(z, -1.0, 1.0), edges)
    density = counts / (z.size * width)
    nb = max(2, min(int(n_batches), z.size // 2))
    batch = np.minimum((np.arange(z.size) * nb) // z.size, nb - 1)
    freq, _, _ = np.histogram2d(batch, np.clip(z, -1.0, 1.0), bins=[np.arange(nb + 1) - 0.5, edges])
    freq /= freq.sum(axis=1, keepdims=True)
    stderr = freq.std(axis=0, ddof=1) / np.sqrt(nb) / width
    centers = 0.5 * (edges[1:] + edges[:-1])
    return centers, density, stderr, edges


def total_variation(p, q):
    """``0.5 * sum |p - q|`` for probability vectors."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(0.5 * np.abs(p - q).sum())
