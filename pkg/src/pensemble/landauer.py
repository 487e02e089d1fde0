"""Heat-dissipation bounds for state changes ``sigma_i -> sigma_f``.

Both bounds are differences of the state-dependent entropy term
``T S[sigma]``: the heat released into the bath obeys
``Q >= T S[sigma_i] - T S[sigma_f]``.

* Degenerate bath: ``T S = k Theta (M - N) ln det sigma``, so the bound in
  units of ``k_B Theta`` is ``(M - N) ln(det sigma_i / det sigma_f)``.
* Thermal bath: ``T S`` comes from :func:`pensemble.analytic.entropy_thermal`;
  the bound splits into a log-determinant part and a ``beta'``-derivative
  part, both reported.

``heat_bound`` is always in units of ``k_B Theta``; ``delta_entropy`` is its
negative (the change of ``T S / k_B Theta``).  ``components["bound_kT"]``
rescales the heat to units of ``k_B T``, the scale on which it is compared
with von Neumann entropy changes.
"""
from dataclasses import dataclass, field

import numpy as np

from .analytic import thermal_entropy_parts
from .errors import InvalidInputError
from .models import (build_truncated_oscillator_bath, gibbs_state, solve_statistical_temperature,
                     truncation_size)
from .quantum import check_density_matrix, state_eigenvalues, von_neumann_entropy

PURE_DET_CUTOFF = 1e-300
SCENARIOS = ("bell-fidelity", "thermal-erasure")


@dataclass(frozen=True)
class BoundResult:
    """A heat bound for one state change.

    Attributes:
        delta_entropy: change of ``T S / k_B Theta`` from ``sigma_i`` to ``sigma_f``.
        heat_bound: lower bound on the released heat, units of ``k_B Theta``.
        components: per-term breakdown and unit conversions.
    """

    delta_entropy: float
    heat_bound: float
    components: dict = field(default_factory=dict)


def _log_det(sigma):
    det = float(np.prod(state_eigenvalues(sigma)))
    return np.log(det) if det >= PURE_DET_CUTOFF else -np.inf


def bound_degenerate(sigma_i, sigma_f, M, N, ctx=None):
    """Degenerate-bath bound ``(M - N) ln(det sigma_i / det sigma_f)``.

    Args:
        sigma_i: initial ``N x N`` density matrix.
        sigma_f: final ``N x N`` density matrix.
        M: bath dimension.
        N: system dimension.
        ctx: optional :class:`pensemble.models.ThermalContext` for eV units.

    Returns:
        :class:`BoundResult`; ``+inf`` when ``sigma_f`` is singular and
        ``sigma_i`` is not.

    Raises:
        InvalidInputError: ``M < N`` or mismatched states.
    """
    if M < N:
        raise InvalidInputError(f"need M >= N, got M={M}, N={N}")
    sigma_i = check_density_matrix(sigma_i)
    sigma_f = check_density_matrix(sigma_f)
    if sigma_i.shape != (N, N) or sigma_f.shape != (N, N):
        raise InvalidInputError(f"states must be {N} x {N}")
    li, lf = _log_det(sigma_i), _log_det(sigma_f)
    if M == N or li == lf:
        bound = 0.0
    elif np.isinf(li) and np.isinf(lf):
        raise InvalidInputError("both states are singular; the bound is undefined")
    else:
        bound = (M - N) * (li - lf)
    comps = {"log_det_i": li, "log_det_f": lf, "M_minus_N": M - N}
    if ctx is not None and ctx.beta_prime > 0:
        comps["bound_eV"] = bound * ctx.k_theta
        if ctx.beta > 0:
            comps["bound_kT"] = bound * ctx.k_theta * ctx.beta
    return BoundResult(-bound, float(bound), comps)


def bell_restoration_target(f):
    """``2 (1 - f) / 4 + (2 f - 1) sigma_B`` with ``sigma_B = diag(1/2, 0, 0, 1/2)``."""
    if not 0.5 <= f <= 1.0:
        raise InvalidInputError(f"fidelity must lie in [1/2, 1], got {f}")
    sigma_b = np.diag([0.5, 0.0, 0.0, 0.5])
    return 2.0 * (1.0 - f) * np.eye(4) / 4.0 + (2.0 * f - 1.0) * sigma_b


def bound_thermal(sigma_i, sigma_f, bath_spectrum, ctx, method="newton"):
    """Thermal-bath bound ``(T S[sigma_i] - T S[sigma_f]) / k_B Theta``.

    Args:
        sigma_i: initial density matrix (degenerate spectra allowed).
        sigma_f: final density matrix.
        bath_spectrum: distinct bath levels (eV).
        ctx: thermal context with ``beta_prime > 0``.
        method: evaluation route passed to the analytic module.

    Returns:
        :class:`BoundResult` with components ``log_term`` (the
        ``ln(|det I| / Delta)`` difference), ``derivative_term`` (the
        ``beta'`` times derivative difference), ``bound_eV`` and ``bound_kT``.
    """
    log_i, der_i = thermal_entropy_parts(sigma_i, bath_spectrum, ctx, method)
    log_f, der_f = thermal_entropy_parts(sigma_f, bath_spectrum, ctx, method)
    bp = ctx.beta_prime
    if not np.isfinite(log_f) and np.isfinite(log_i):
        bound, log_term, der_term = np.inf, np.inf, np.nan
    elif not np.isfinite(log_i):
        raise InvalidInputError("the initial state must be interior")
    else:
        log_term = bp * (log_i - log_f)
        der_term = -bp * (der_i - der_f)
        bound = log_term + der_term
    comps = {"log_term": float(log_term), "derivative_term": float(der_term),
             "bound_eV": float(bound / bp)}
    if ctx.beta > 0:
        comps["bound_kT"] = float(bound * ctx.beta / bp)
    return BoundResult(float(-bound), float(bound), comps)


def _bell_rows(grid, sizes):
    sigma_i = np.eye(4) / 4.0
    rows = []
    for M in sizes:
        for f in grid:
            res = bound_degenerate(sigma_i, bell_restoration_target(f), int(M), 4)
            rows.append({"fidelity": float(f), "M": int(M), "bound_kBTheta": res.heat_bound})
    return rows


def _thermal_row(kt, hbar_omega, lam, hbar_omega0, method):
    beta = 1.0 / kt
    M = truncation_size(beta, hbar_omega)
    model = build_truncated_oscillator_bath(M, hbar_omega, lam, hbar_omega0)
    ctx = solve_statistical_temperature(model, beta)
    sigma_g = gibbs_state(model.h_system, beta)
    sigma_i = np.eye(2) / 2.0
    res = bound_thermal(sigma_i, sigma_g, model.bath_spectrum(), ctx, method)
    d_svn = von_neumann_entropy(sigma_i) - von_neumann_entropy(sigma_g)
    return {"kT": float(kt), "M": M, "beta_prime": ctx.beta_prime,
            "bound_kBTheta": res.heat_bound, "bound_kT": res.components["bound_kT"],
            "delta_s_vn": float(d_svn), "log_term": res.components["log_term"],
            "derivative_term": res.components["derivative_term"]}


def erasure_sweep(scenario, grid, model=None, ctx=None, sizes=(8, 16, 32), workers=1,
                  method="newton"):
    """Tabulate a bound over a parameter grid.

    Args:
        scenario: ``"bell-fidelity"`` (grid of fidelities, one block per bath
            size in ``sizes``) or ``"thermal-erasure"`` (grid of ``k_B T`` in
            eV; maximally mixed qubit to its Gibbs state in an oscillator bath
            truncated per temperature).
        grid: parameter values.
        model: for the thermal scenario, a template oscillator model whose
            ``hbar_omega``, ``lambda`` and ``hbar_omega0`` are reused.
        ctx: unused; each grid point solves its own ``beta_prime``.
        sizes: bath dimensions for the Bell scenario.
        workers: process count for the thermal scenario.
        method: evaluation route for the thermal scenario.

    Returns:
        A list of row dicts.
    """
    del ctx
    grid = list(np.atleast_1d(np.asarray(grid, dtype=float)))
    if scenario == "bell-fidelity":
        return _bell_rows(grid, sizes)
    if scenario != "thermal-erasure":
        raise InvalidInputError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    params = dict(model.params) if model is not None else {}
    args = (params.get("hbar_omega", 0.06), params.get("lambda", 1e-6),
            params.get("hbar_omega0", 0.30), method)
    if any(not kt > 0 for kt in grid):
        raise InvalidInputError("temperatures must be positive")
    if workers > 1 and len(grid) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_thermal_row, grid, *[[a] * len(grid) for a in args]))
    return [_thermal_row(kt, *args) for kt in grid]
