import csv

import numpy as np
import pytest
from scipy import sparse

from pensemble.analytic import build_marginal
from pensemble.errors import InvalidInputError
from pensemble.models import (DEGENERATE_SPIN_BATH, ModelSpec, ThermalContext,
                              build_degenerate_spin_bath, build_truncated_oscillator_bath,
                              p_ensemble_mean_energy, solve_statistical_temperature)
from pensemble.quantum import CompositeState, PAULI_Z
from pensemble.sampler import (ChainConfig, LowAcceptanceWarning, chain_statistics, histogram_z,
                               integrated_autocorrelation_time, metropolis_step,
                               run_chain, run_discrete_chain, sample_uniform_sphere,
                               total_variation)


def flat_model(D=2):
    m = 2 ** D
    return ModelSpec(np.zeros((2, 2)), np.zeros((m, m)), sparse.csr_matrix((2 * m, 2 * m)),
                     0.0, DEGENERATE_SPIN_BATH, {"D": D})


def test_sphere_draws_are_unit_norm(rng):
    v = sample_uniform_sphere(8, rng, 10_000)
    assert np.max(np.abs(np.linalg.norm(v, axis=1) - 1)) < 1e-12
    assert sample_uniform_sphere(8, rng).shape == (8,)


def test_sphere_population_means(rng):
    n = 200_000
    q = np.abs(sample_uniform_sphere(8, rng, n)) ** 2
    se = q.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(q.mean(axis=0) - 1 / 8) < 3 * se)


def test_sphere_covariance_isotropic(rng):
    n = 200_000
    v = sample_uniform_sphere(3, rng, n)
    r = np.concatenate([v.real, v.imag], axis=1)
    prod = r[:, :, None] * r[:, None, :]
    cov = prod.mean(axis=0)
    se = prod.std(axis=0) / np.sqrt(n)
    target = np.eye(6) / 6
    assert np.all(np.abs(cov - target) < 3.5 * se + 1e-15)


def test_metropolis_step_rules(rng):
    h = np.diag([0.0, 1.0])
    low = CompositeState(np.array([1.0, 0.0]), (1, 2))
    high = CompositeState(np.array([0.0, 1.0]), (1, 2))
    for _ in range(50):
        assert metropolis_step(high, low, 10.0, h, rng) == (low, True)
        assert metropolis_step(low, high, 0.0, h, rng) == (high, True)
    acc = np.mean([metropolis_step(low, high, 1.0, h, rng)[1] for _ in range(20_000)])
    assert abs(acc - np.exp(-1.0)) < 0.02


def test_detailed_balance_ratio(rng):
    e = rng.uniform(0, 1, 200)
    bp = 3.0
    for a, b in rng.integers(0, 200, (100, 2)):
        fwd = np.exp(-bp * e[a]) * min(1.0, np.exp(-bp * (e[b] - e[a])))
        bwd = np.exp(-bp * e[b]) * min(1.0, np.exp(-bp * (e[a] - e[b])))
        assert fwd == pytest.approx(bwd, rel=1e-12)


def test_discrete_chain_stationary_distribution():
    e = np.array([0.0, 0.5, 1.2])
    bp = 2.0
    states, rate = run_discrete_chain(e, bp, 600_000, seed=11)
    exact = np.exp(-bp * e) / np.exp(-bp * e).sum()
    for k in range(3):
        ind = (states == k).astype(float)
        tau = integrated_autocorrelation_time(ind)
        se = np.sqrt(ind.var() * tau / ind.size)
        assert abs(ind.mean() - exact[k]) < 3 * se
    assert 0 < rate < 1


def test_flat_hamiltonian_accepts_everything_and_matches_marginal():
    model = flat_model(2)
    ctx = solve_statistical_temperature(model, 1.0)
    assert ctx.vacuous
    s = run_chain(model, ctx, ChainConfig(100_000, seed=1))
    assert s.acceptance_rate == 1.0
    _, dens, _, edges = histogram_z(s, 40)
    prob = build_marginal(model, ctx).bin_probabilities(edges)
    anti = edges - edges ** 3 + 0.6 * edges ** 5 - edges ** 7 / 7
    closed = np.diff(anti) / (32 / 35)
    assert np.allclose(prob, closed, rtol=1e-10, atol=1e-15)
    assert total_variation(dens * np.diff(edges), prob) < 0.05


def test_large_beta_prime_concentrates_near_ground_state():
    model = build_truncated_oscillator_bath(2)
    ctx = ThermalContext(1.0, 60.0)
    s = run_chain(model, ctx, ChainConfig(200_000, seed=5))
    spec = model.composite_spectrum().eigenvalues
    exact = p_ensemble_mean_energy(spec, 60.0)
    tau = integrated_autocorrelation_time(s.energies)
    se = s.energies.std() * np.sqrt(tau / s.energies.size)
    assert abs(s.energies.mean() - exact) < 3 * se
    assert s.energies.mean() - spec[0] < 0.15 * (spec[-1] - spec[0])


def test_seed_determinism():
    model = build_degenerate_spin_bath(2)
    ctx = solve_statistical_temperature(model, 1 / 0.45)
    a = run_chain(model, ctx, ChainConfig(20_000, seed=9))
    b = run_chain(model, ctx, ChainConfig(20_000, seed=9))
    c = run_chain(model, ctx, ChainConfig(20_000, seed=10))
    assert a.z_values.tobytes() == b.z_values.tobytes()
    assert a.energies.tobytes() == b.energies.tobytes()
    assert a.z_values.tobytes() != c.z_values.tobytes()


def test_parallel_workers_do_not_change_results():
    model = build_degenerate_spin_bath(1)
    ctx = solve_statistical_temperature(model, 1 / 0.45)
    cfg = ChainConfig(20_000, seed=2, n_chains=3)
    serial = run_chain(model, ctx, cfg, workers=1)
    par = run_chain(model, ctx, cfg, workers=3)
    assert serial.z_values.tobytes() == par.z_values.tobytes()
    assert serial.n_chains == 3 and len(serial.per_chain_rates) == 3


def test_proposal_schemes_agree():
    model = build_degenerate_spin_bath(1)
    ctx = solve_statistical_temperature(model, 1 / 0.45)
    cfg = ChainConfig(100_000, seed=4)
    a = chain_statistics(run_chain(model, ctx, cfg, proposal="eigenbasis"))
    b = chain_statistics(run_chain(model, ctx, cfg, proposal="product"))
    assert abs(a["mean_z"] - b["mean_z"]) < 3 * np.hypot(a["se_mean"], b["se_mean"])
    with pytest.raises(InvalidInputError):
        run_chain(model, ctx, cfg, proposal="walk")


def test_burn_in_thinning_and_sigma_samples():
    model = build_degenerate_spin_bath(1)
    ctx = solve_statistical_temperature(model, 1 / 0.45)
    cfg = ChainConfig(10_000, thinning=4, seed=0, keep_sigma=True)
    assert cfg.burn_in == 1000
    s = run_chain(model, ctx, cfg)
    assert s.z_values.size == 2500 and s.n_steps == 11_000
    z = np.einsum("ij,kji->k", PAULI_Z, s.sigma_samples).real
    assert np.allclose(z, s.z_values, atol=1e-12)
    assert np.all(np.abs(s.z_values) <= 1 + 1e-10)
    assert s.n_accepted / s.n_steps == pytest.approx(s.acceptance_rate)


def test_product_proposal_sigma_samples():
    model = build_degenerate_spin_bath(1)
    ctx = solve_statistical_temperature(model, 1 / 0.45)
    s = run_chain(model, ctx, ChainConfig(2_000, seed=0, keep_sigma=True), proposal="product")
    z = np.einsum("ij,kji->k", PAULI_Z, s.sigma_samples).real
    assert np.allclose(z, s.z_values, atol=1e-12)


def test_low_acceptance_warning():
    model = build_truncated_oscillator_bath(40)
    with pytest.warns(LowAcceptanceWarning):
        run_chain(model, ThermalContext(1.0, 2000.0), ChainConfig(50_000, seed=0))


def test_raw_chain_csv(tmp_path):
    model = build_degenerate_spin_bath(1)
    ctx = solve_statistical_temperature(model, 1 / 0.45)
    s = run_chain(model, ctx, ChainConfig(500, seed=0))
    path = tmp_path / "chain.csv"
    s.write_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["index", "z", "energy", "accepted"]
    assert len(rows) == 501
    assert float(rows[1][1]) == s.z_values[0]


def test_histogram_examples(rng):
    z = rng.uniform(-1, 1, 400_000)
    centers, dens, se, edges = histogram_z(z, 40)
    assert np.all(np.abs(dens - 0.5) < 4 * se)
    assert np.sum(dens * np.diff(edges)) == pytest.approx(1.0)
    _, dens0, _, _ = histogram_z(np.zeros(1000), 40)
    assert np.count_nonzero(dens0) == 1
    with pytest.raises(InvalidInputError):
        histogram_z(np.array([]), 40)
    with pytest.raises(InvalidInputError):
        histogram_z(z, 1)


def test_chain_statistics_examples(rng):
    st = chain_statistics(rng.standard_normal(100_000))
    assert st["tau"] == pytest.approx(1.0, rel=0.2)
    assert chain_statistics(np.full(500, 0.3))["var_z"] == 0.0
    alt = np.tile([1.0, -1.0], 500)
    st = chain_statistics(alt)
    assert st["mean_z"] == 0.0
    assert st["var_z_population"] == 1.0
    assert st["var_z"] == pytest.approx(1000 / 999)
    with pytest.raises(InvalidInputError):
        chain_statistics(np.zeros(99))


def test_chain_config_validation():
    with pytest.raises(InvalidInputError):
        ChainConfig(0)
    with pytest.raises(InvalidInputError):
        ChainConfig(10, thinning=0)
    with pytest.raises(InvalidInputError):
        ChainConfig(10, seed=2 ** 64)


def test_total_variation_extremes():
    assert total_variation([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert total_variation([1, 0], [0, 1]) == 1.0
