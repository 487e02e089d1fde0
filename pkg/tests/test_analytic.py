import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, sparse
from scipy.special import gammaln

from pensemble.analytic import (build_marginal, confluent_determinant_check, entropy_degenerate,
                                entropy_thermal, free_energy_degenerate, free_energy_thermal,
                                interaction_matrix, log_abs_det_scaled, log_delta_sigma,
                                marginal_pz, mean_force_energy, sigma_log_term,
                                stiefel_log_volume)
from pensemble.errors import DiagnosticError, InvalidInputError, UnsupportedDimensionError
from pensemble.models import (DEGENERATE_SPIN_BATH, TRUNCATED_OSCILLATOR, ModelSpec,
                              ThermalContext, build_degenerate_spin_bath,
                              build_truncated_oscillator_bath, p_ensemble_log_partition,
                              solve_statistical_temperature)
from pensemble.quantum import Spectrum, qubit_state

from conftest import random_density_matrix, random_unitary

HS = np.diag([-0.15, 0.15])


def oscillator_levels(M, hw=0.06):
    return hw * (np.arange(M) + 0.5)


def sphere_area_log(k):
    """Log area of the unit sphere in C^k, 2 pi^k / (k-1)!."""
    return np.log(2.0) + k * np.log(np.pi) - gammaln(k)


# Stiefel volume

def test_stiefel_examples():
    assert stiefel_log_volume(1, 1) == pytest.approx(np.log(2 * np.pi), abs=1e-14)
    assert stiefel_log_volume(1, 2) == pytest.approx(np.log(2 * np.pi ** 2), abs=1e-14)
    assert stiefel_log_volume(2, 2) == pytest.approx(np.log(4 * np.pi ** 3), abs=1e-14)
    with pytest.raises(InvalidInputError):
        stiefel_log_volume(3, 2)


def test_stiefel_sphere_product_recursion():
    for M in range(1, 40):
        for N in range(1, M + 1):
            rec = sum(sphere_area_log(k) for k in range(M - N + 1, M + 1))
            assert abs(stiefel_log_volume(N, M) - rec) < 1e-12 * max(1.0, abs(rec))


# Interaction matrix and determinants

def test_interaction_matrix_two_by_two():
    im = interaction_matrix(Spectrum([1.0]), [0.0, 1.0], 1.0)
    assert np.allclose(im.entries, [[1, 1], [1, np.exp(-1)]], atol=1e-15)
    logdet, sign = log_abs_det_scaled(im)
    assert sign == -1
    assert logdet == pytest.approx(np.log(1 - np.exp(-1)), abs=1e-14)


def test_interaction_matrix_layout_counts():
    lam = np.array([0.1, 0.4, 0.9, 1.3])
    im = interaction_matrix(Spectrum([0.3, 0.7]), lam, 2.0)
    kinds = [c[0] for c in im.column_layout]
    assert kinds == ["poly", "poly", "exp", "exp"]
    assert np.allclose(im.entries[:, 0], 1.0)
    assert np.allclose(im.entries[:, 1], 2.0 * lam)
    assert np.allclose(im.entries[:, 2], np.exp(-0.6 * lam))
    assert np.allclose(im.entries[:, 3], np.exp(-1.4 * lam))
    assert all(c[2] == 0 for c in im.column_layout)


def test_interaction_matrix_confluent_columns():
    lam = oscillator_levels(5)
    bp = 10.0
    im = interaction_matrix(np.eye(2) / 2, lam, bp)
    ex = np.exp(-bp * lam / 2)
    assert np.allclose(im.entries[:, -2], ex)
    assert np.allclose(im.entries[:, -1], -bp * lam * ex)
    assert im.confluent_groups == ((0.5, 2),)


def test_interaction_matrix_derivative_columns():
    lam = oscillator_levels(6)
    sig = Spectrum([0.2, 0.8])
    bp, h = 7.0, 1e-6
    im = interaction_matrix(sig, lam, bp)
    fd = (interaction_matrix(sig, lam, bp + h).entries
          - interaction_matrix(sig, lam, bp - h).entries) / (2 * h)
    assert np.allclose(im.derivative, fd, rtol=1e-7, atol=1e-9)


def test_bath_must_be_distinct():
    with pytest.raises(InvalidInputError):
        interaction_matrix(Spectrum([0.5, 0.5]), [0.1, 0.1, 0.2], 1.0)
    with pytest.raises(InvalidInputError):
        interaction_matrix(Spectrum([0.5, 0.5]), [0.1, 0.2], 1.0)


def test_log_abs_det_examples(rng):
    assert log_abs_det_scaled(np.eye(6)) == (0.0, 1)
    logdet, sign = log_abs_det_scaled(np.diag([1e-200, 1e200]))
    assert abs(logdet) < 1e-12 and sign == 1
    assert log_abs_det_scaled(np.zeros((3, 3))) == (-np.inf, 0)
    assert log_abs_det_scaled(np.ones((3, 3)))[1] in (0, 1, -1)
    for _ in range(5):
        a = rng.standard_normal((8, 8))
        ref = mpmath.det(mpmath.matrix(a.tolist()))
        logdet, sign = log_abs_det_scaled(a)
        assert abs(logdet - float(mpmath.log(abs(ref)))) < 1e-9 * max(1, abs(logdet))
        assert sign == (1 if ref > 0 else -1)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 1), min_size=2, max_size=6, unique=True))
def test_log_delta_sigma_distinct(values):
    eta = np.sort(values)
    if np.min(np.diff(eta)) < 1e-6:
        return
    ref = sum(np.log(eta[b] - eta[a]) for a in range(eta.size) for b in range(a + 1, eta.size))
    assert log_delta_sigma(eta, np.ones(eta.size, int)) == pytest.approx(ref, abs=1e-12)


# Degenerate bath

def test_free_energy_degenerate_examples():
    ctx = ThermalContext(2.0, 5.0)
    m1 = build_degenerate_spin_bath(1)
    assert free_energy_degenerate(qubit_state(z=0.3), m1, ctx).entropic_term == 0.0
    m2 = build_degenerate_spin_bath(2)
    assert free_energy_degenerate(np.diag([1.0, 0.0]), m2, ctx).entropic_term == np.inf
    half = free_energy_degenerate(np.eye(2) / 2, m2, ctx)
    r05 = free_energy_degenerate(qubit_state(z=0.5), m2, ctx)
    expect = -2 * ctx.k_theta * np.log(4 / 3) + (0.0 - (-0.15 * 0.5))
    assert half.total - r05.total == pytest.approx(expect, rel=1e-13)


def test_degenerate_requires_m_at_least_n():
    model = ModelSpec(np.zeros((4, 4)), np.zeros((2, 2)), sparse.csr_matrix((8, 8)), 0.0,
                      DEGENERATE_SPIN_BATH)
    with pytest.raises(InvalidInputError):
        free_energy_degenerate(np.eye(4) / 4, model, ThermalContext(1.0, 1.0))
    with pytest.raises(InvalidInputError):
        entropy_degenerate(np.eye(4) / 4, model, ThermalContext(1.0, 1.0))


def test_entropy_degenerate_examples():
    ctx = ThermalContext(2.0, 4.0)
    m = build_degenerate_spin_bath(3)
    M = 8
    assert entropy_degenerate(np.eye(2) / 2, m, ctx) == pytest.approx(
        ctx.k_theta * (M - 2) * np.log(0.25), rel=1e-14)
    assert entropy_degenerate(np.eye(2) / 2, build_degenerate_spin_bath(1), ctx) == 0.0
    a, b = np.eye(2) / 2, qubit_state(z=0.5)
    dF = free_energy_degenerate(a, m, ctx).total - free_energy_degenerate(b, m, ctx).total
    dE = np.trace(HS @ (a - b)).real
    dTS = entropy_degenerate(a, m, ctx) - entropy_degenerate(b, m, ctx)
    assert dF == pytest.approx(dE - dTS, rel=1e-13)


# Thermal bath

def mp_log_abs_det(eta, lam, bp, dps=60):
    with mpmath.workdps(dps):
        m = len(lam) - len(eta)
        b = mpmath.mpf(bp)
        rows = [[(b * mpmath.mpf(l)) ** k for k in range(m)]
                + [mpmath.exp(-b * mpmath.mpf(float(e)) * mpmath.mpf(l)) for e in eta]
                for l in lam]
        return float(mpmath.log(abs(mpmath.det(mpmath.matrix(rows)))))


def test_newton_route_against_extended_precision(rng):
    ctx = ThermalContext(1.0, 30.0)
    for n, M in ((2, 9), (2, 30), (3, 7), (4, 12)):
        lam = oscillator_levels(M)
        s = random_density_matrix(rng, n)
        got = free_energy_thermal(s, lam, ctx).log_abs_det_I
        ref = mp_log_abs_det(np.linalg.eigvalsh(s), lam, ctx.beta_prime)
        assert abs(got - ref) < 1e-12 * max(1.0, abs(ref))


def test_newton_and_direct_routes_agree(rng):
    ctx = ThermalContext(1.0, 30.0)
    lam = oscillator_levels(9)
    for _ in range(5):
        s = random_density_matrix(rng, 2)
        a = free_energy_thermal(s, lam, ctx, HS, method="newton")
        b = free_energy_thermal(s, lam, ctx, HS, method="direct")
        assert a.log_abs_det_I == pytest.approx(b.log_abs_det_I, rel=1e-8)
        assert mean_force_energy(s, lam, ctx, HS) == pytest.approx(
            mean_force_energy(s, lam, ctx, HS, method="direct"), rel=1e-7)
    with pytest.raises(InvalidInputError):
        free_energy_thermal(np.eye(2) / 2, lam, ctx, method="cholesky")


def test_single_level_system_reduces_to_simplex_partition():
    lam = oscillator_levels(12)
    ctx = ThermalContext(1.0, 9.0)
    M = lam.size
    fe = free_energy_thermal(np.eye(1), lam, ctx)
    ref = -ctx.k_theta * (stiefel_log_volume(1, M) - np.log(2.0)
                          + p_ensemble_log_partition(lam, ctx.beta_prime))
    assert fe.total == pytest.approx(ref, rel=1e-11)


def test_single_level_mean_force_energy_limit():
    lam = oscillator_levels(8)
    e = mean_force_energy(np.eye(1), lam, ThermalContext(1.0, 1e-5))
    assert e == pytest.approx(lam.mean(), rel=1e-4)


def test_near_degenerate_bath_collapses_to_degenerate_formula():
    delta = 1e-6
    lam = 0.5 + delta * np.arange(4)
    ctx = ThermalContext(1.0, 12.0)
    model = build_degenerate_spin_bath(2)
    a, b = qubit_state(x=0.2, z=0.3), qubit_state(z=-0.6)
    dth = (free_energy_thermal(a, lam, ctx, HS).total - free_energy_thermal(b, lam, ctx, HS).total)
    ddg = (free_energy_degenerate(a, model, ctx).total
           - free_energy_degenerate(b, model, ctx).total)
    assert dth == pytest.approx(ddg, rel=1e-3)


def test_small_beta_prime_difference_is_geometric():
    lam = oscillator_levels(6)
    ctx = ThermalContext(1.0, 1e-8)
    a, b = qubit_state(x=0.3, z=0.2), qubit_state(x=0.6, z=0.2)
    dth = (free_energy_thermal(a, lam, ctx, HS).total - free_energy_thermal(b, lam, ctx, HS).total)
    det_a, det_b = (1 - 0.13) / 4, (1 - 0.40) / 4
    geom = -ctx.k_theta * (lam.size - 2) * np.log(det_a / det_b)
    assert dth == pytest.approx(geom, rel=1e-3)


def test_mean_force_energy_finite_difference(rng):
    lam = oscillator_levels(10)
    ctx = ThermalContext(1.0, 40.0)
    bp, h = ctx.beta_prime, 1e-5 * ctx.beta_prime
    for _ in range(5):
        s = random_density_matrix(rng, 2)

        def log_z(b):
            return -b * free_energy_thermal(s, lam, ThermalContext(1.0, b), HS).total

        fd = -(log_z(bp + h) - log_z(bp - h)) / (2 * h)
        assert mean_force_energy(s, lam, ctx, HS) == pytest.approx(fd, rel=1e-6)


def test_free_energy_decomposition_identity(rng):
    lam = oscillator_levels(15)
    ctx = ThermalContext(1.0, 50.0)
    a, b = random_density_matrix(rng, 2), random_density_matrix(rng, 2)

    def parts(s):
        return (free_energy_thermal(s, lam, ctx, HS).total, mean_force_energy(s, lam, ctx, HS),
                entropy_thermal(s, lam, ctx))

    fa, ea, ta = parts(a)
    fb, eb, tb = parts(b)
    assert abs((fa - fb) - ((ea - ta) - (eb - tb))) < 1e-10 * max(1.0, abs(fa - fb))


def test_pure_state_free_energy_is_infinite():
    lam = oscillator_levels(6)
    ctx = ThermalContext(1.0, 10.0)
    assert free_energy_thermal(np.diag([1.0, 0.0]), lam, ctx).entropic_term == np.inf
    assert entropy_thermal(np.diag([1.0, 0.0]), lam, ctx) == -np.inf
    with pytest.raises(InvalidInputError):
        mean_force_energy(np.diag([1.0, 0.0]), lam, ctx)


def test_rotation_invariance(rng):
    lam = oscillator_levels(8)
    ctx = ThermalContext(1.0, 20.0)
    model = build_degenerate_spin_bath(3)
    for n in (2, 3):
        s = random_density_matrix(rng, n)
        u = random_unitary(rng, n)
        r = u @ s @ u.conj().T
        assert sigma_log_term(s, lam, 20.0) == pytest.approx(sigma_log_term(r, lam, 20.0),
                                                             rel=1e-10)
    s = random_density_matrix(rng, 2)
    u = random_unitary(rng, 2)
    r = u @ s @ u.conj().T
    assert free_energy_degenerate(s, model, ctx).solvation == pytest.approx(
        free_energy_degenerate(r, model, ctx).solvation, rel=1e-12)


def test_confluent_check_qubit():
    model = build_truncated_oscillator_bath(6)
    ctx = solve_statistical_temperature(model, 1 / 0.45)
    err = confluent_determinant_check(Spectrum([0.5, 0.5]), model.bath_spectrum(), ctx)
    assert err < 1e-6


def test_confluent_check_two_qubits():
    lam = oscillator_levels(16)
    ctx = ThermalContext(1.0, 20.0)
    assert confluent_determinant_check(Spectrum([0.25] * 4), lam, ctx) < 1e-5


def test_confluent_check_partial_degeneracy():
    lam = oscillator_levels(10)
    ctx = ThermalContext(1.0, 15.0)
    assert confluent_determinant_check(Spectrum([0.2, 0.4, 0.4]), lam, ctx) < 1e-5


def test_distinct_spectrum_has_no_confluent_columns():
    im = interaction_matrix(Spectrum([0.3, 0.7]), oscillator_levels(5), 4.0)
    assert all(order == 0 for _, _, order in im.column_layout)


def test_unsettled_extrapolation_raises():
    lam = oscillator_levels(6)
    with pytest.raises(DiagnosticError):
        confluent_determinant_check(Spectrum([0.5, 0.5]), lam, ThermalContext(1.0, 10.0),
                                    epsilons=(0.4, 0.2, 0.1))


# Marginal P(z)

def test_degenerate_marginal_closed_form():
    for D in (1, 2, 3, 4):
        model = build_degenerate_spin_bath(D)
        ctx = solve_statistical_temperature(model, 1 / 0.45)
        M, bp = 2 ** D, ctx.beta_prime
        marg = build_marginal(model, ctx)
        f = lambda z: np.exp(bp * 0.30 * z / 2) * (1 - z * z) ** (M - 1)
        norm = integrate.quad(f, -1, 1, epsabs=0, epsrel=1e-13)[0]
        z = np.linspace(-0.999, 0.999, 67)
        assert np.allclose(marg.density(z), f(z) / norm, rtol=1e-8, atol=0)


def test_marginal_mirror_symmetry():
    model = build_degenerate_spin_bath(2)
    flipped = ModelSpec(np.diag([0.15, -0.15]), model.h_bath, model.coupling, model.lam,
                        DEGENERATE_SPIN_BATH)
    ctx = ThermalContext(2.0, 30.0)
    z = np.linspace(-0.95, 0.95, 39)
    assert np.allclose(marginal_pz(model, ctx, z), marginal_pz(flipped, ctx, z)[::-1], rtol=1e-12)
    osc = build_truncated_oscillator_bath(8)
    oflip = ModelSpec(-osc.h_system, osc.h_bath, osc.coupling, osc.lam, TRUNCATED_OSCILLATOR)
    assert np.allclose(marginal_pz(osc, ctx, z), marginal_pz(oflip, ctx, z)[::-1], rtol=1e-10)


def test_infinite_statistical_temperature_marginal():
    marg = build_marginal(build_degenerate_spin_bath(1), ThermalContext(1.0, 0.0))
    assert marg.density(0.0) == pytest.approx(0.75, rel=1e-12)
    assert marg.density(0.5) == pytest.approx(0.75 * 0.75, rel=1e-12)


def test_marginal_normalization_and_positivity():
    model = build_truncated_oscillator_bath(20)
    ctx = solve_statistical_temperature(model, 1 / 0.3)
    marg = build_marginal(model, ctx)
    z = np.linspace(-0.999, 0.999, 2001)
    p = marginal_pz(model, ctx, z)
    assert integrate.trapezoid(p, z) == pytest.approx(1.0, abs=1e-12)
    assert np.all(p >= 0)
    edges = np.linspace(-1, 1, 41)
    assert marg.bin_probabilities(edges).sum() == pytest.approx(1.0, abs=1e-8)
    assert integrate.quad(marg.density, -1, 1, epsrel=1e-12, limit=200)[0] == pytest.approx(
        1.0, abs=1e-8)


def test_degenerate_marginal_variance_decreases_with_bath_size():
    var = []
    for D in (1, 2, 3, 4):
        model = build_degenerate_spin_bath(D)
        ctx = solve_statistical_temperature(model, 1 / 0.45)
        var.append(build_marginal(model, ctx).moments()[1])
    assert np.all(np.diff(var) < 0)


def test_marginal_errors():
    model = build_truncated_oscillator_bath(8)
    ctx = ThermalContext(1.0, 30.0)
    with pytest.raises(InvalidInputError):
        marginal_pz(model, ctx, [-1.0, 0.0])
    big = ModelSpec(np.diag([0.0, 0.1, 0.2]), np.diag([0.0, 1.0]), sparse.csr_matrix((6, 6)),
                    0.0, TRUNCATED_OSCILLATOR)
    with pytest.raises(UnsupportedDimensionError):
        build_marginal(big, ctx)
    with pytest.raises(DiagnosticError):
        build_marginal(build_truncated_oscillator_bath(70), ThermalContext(1.0, 266.0),
                       quadrature_order=2)
