import math

import numpy as np
import pytest

from bogoliubov.functional import energy, evaluate, pure_state, save_state, vacuum
from bogoliubov.grid import build_grid, build_kernel
from bogoliubov.potential import PotentialSpec
from bogoliubov.solver import (
    SolverConfig,
    fixed_point_step,
    gradient_step,
    init_trial,
    kappa_sweep,
    minimize,
    minimize_fixed_density,
    minimize_restricted,
    mu_sweep,
    residuals,
)
from conftest import REFERENCE_ENERGY, random_state


def test_config_validation():
    for bad in (dict(damping=0.0), dict(damping=1.5), dict(tol_grad=0.0), dict(kappa=-1.0),
                dict(backtrack=1.0), dict(max_iter=0), dict(engine="newton"), dict(init="random"),
                dict(init="file")):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


def test_init_trial_density(ref_kernel):
    s = init_trial(ref_kernel, 1.0, 10.0, 0.1)
    expected = 1.0 - 10.0 / (6 * math.pi**2) * 0.001
    assert s.rho0 == pytest.approx(expected, rel=1e-15)
    assert s.rho0 == pytest.approx(0.999831, abs=5e-7)
    inside = ref_kernel.grid.nodes <= 0.1
    assert np.all(s.gamma[inside] == 10.0) and not np.any(s.gamma[~inside])
    assert np.all(s.alpha[inside] == -math.sqrt(110.0))


def test_init_trial_rejects_negative_condensate(ref_kernel):
    with pytest.raises(ValueError, match="smaller"):
        init_trial(ref_kernel, 1.0, 1e6, 0.5)


def test_best_trial_state_beats_condensate(ref_kernel):
    energies = []
    for g0 in (1.0, 10.0, 100.0):
        for eps in (0.05, 0.1, 0.2):
            energies.append(energy(init_trial(ref_kernel, 1.0, g0, eps), ref_kernel, 1.0).total)
    assert min(energies) < -0.5


def test_fixed_point_vacuum_for_nonpositive_mu(small_kernel):
    for mu in (-1.0, 0.0):
        out = fixed_point_step(vacuum(small_kernel.grid.n), small_kernel, mu, SolverConfig(), 1.0)
        assert out.rho0 == 0.0 and not np.any(out.alpha) and not np.any(out.gamma)


def test_fixed_point_is_stationary_at_minimizer(ref_kernel):
    # converge to machine precision so the state satisfies the stationarity system exactly
    rep = minimize(ref_kernel, 1.0, SolverConfig(tol_grad=1e-14, tol_energy=1e-15))
    assert rep.converged
    out = fixed_point_step(rep.state, ref_kernel, 1.0, SolverConfig(), 1.0)
    np.testing.assert_allclose(out.alpha, rep.state.alpha, rtol=0, atol=1e-12)
    assert out.rho0 == pytest.approx(rep.state.rho0, abs=1e-12)


def test_gradient_step_zero_at_stationary_point(small_kernel):
    # the vacuum is stationary for mu < 0: no admissible descent direction
    vac = vacuum(small_kernel.grid.n)
    cand, _, step = gradient_step(vac, small_kernel, -1.0, SolverConfig())
    assert cand is vac and step == 0.0
    rep = minimize(small_kernel, 1.0, SolverConfig(tol_grad=1e-14, tol_energy=1e-15))
    cand, _, _ = gradient_step(rep.state, small_kernel, 1.0, SolverConfig())
    assert cand is None or np.max(np.abs(cand.alpha - rep.state.alpha)) < 1e-11


def test_gradient_step_from_vacuum(small_kernel):
    vac = vacuum(small_kernel.grid.n)
    cand, ev, step = gradient_step(vac, small_kernel, 1.0, SolverConfig())
    assert cand.rho0 > 0
    assert ev.energy.total < 0.0


def test_gradient_step_never_increases_energy():
    kernel = build_kernel(build_grid(64, 8.0), PotentialSpec.gaussian())
    rng = np.random.default_rng(20)
    cfg = SolverConfig()
    for _ in range(100):
        s = random_state(rng, kernel.grid, pure=True)
        mu = rng.uniform(-0.5, 3.0)
        before = evaluate(s, kernel, mu).energy.total
        cand, ev, _ = gradient_step(s, kernel, mu, cfg)
        if cand is not None:
            assert ev.energy.total <= before + 1e-14 * max(1.0, abs(before))


@pytest.mark.parametrize("mu", [-1.0, -0.1, 0.0])
def test_vacuum_for_nonpositive_mu(small_kernel, mu):
    rep = minimize(small_kernel, mu)
    assert rep.converged and rep.energy.total == 0.0 and rep.state.rho0 == 0.0
    assert not np.any(rep.state.gamma) and not np.any(rep.state.alpha)


def test_reference_minimizer(ref_report):
    assert ref_report.converged
    assert ref_report.energy.total == pytest.approx(REFERENCE_ENERGY, rel=1e-10)
    assert ref_report.energy.total < -0.5
    assert ref_report.state.rho0 > ref_report.rho_gamma
    assert ref_report.residuals["grad"] < 1e-9 and ref_report.residuals["drho0"] < 1e-9
    assert abs(ref_report.extra["trace_drift"]) < 1e-13


def test_trace_is_non_increasing(ref_report):
    energies = [e for e, _ in ref_report.trace]
    assert all(b <= a for a, b in zip(energies, energies[1:]))


def test_inits_agree(ref_kernel):
    cfg = SolverConfig()
    rng = np.random.default_rng(21)
    perturbed = pure_state(-0.01 * rng.uniform(size=ref_kernel.grid.n), 0.0)
    a = minimize(ref_kernel, 1.0, cfg, init=perturbed)
    b = minimize(ref_kernel, 1.0, SolverConfig(init="trial"))
    assert a.converged and b.converged
    assert abs(a.energy.total - b.energy.total) <= 10 * cfg.tol_energy


def test_init_from_file(tmp_path, small_kernel):
    rep = minimize(small_kernel, 1.0)
    path = tmp_path / "s.txt"
    save_state(path, rep.state, small_kernel.grid, 1.0)
    again = minimize(small_kernel, 1.0, SolverConfig(init="file", init_file=str(path)))
    assert again.converged and again.iterations <= 3
    other = build_kernel(build_grid(128, 12.0), small_kernel.spec)
    with pytest.raises(ValueError, match="grid"):
        minimize(other, 1.0, SolverConfig(init="file", init_file=str(path)))


def test_engines_agree(small_kernel):
    a = minimize(small_kernel, 1.0)
    b = minimize(small_kernel, 1.0, SolverConfig(engine="gradient"))
    assert a.converged and b.converged
    assert b.energy.total == pytest.approx(a.energy.total, rel=1e-6)


def test_restricted_minimization(ref_kernel, ref_report):
    big = minimize_restricted(1e6, ref_kernel, 1.0)
    assert big.energy.total == pytest.approx(ref_report.energy.total, abs=1e-11)
    assert big.active_clamp == 0
    gmax = float(ref_report.state.gamma.max())
    low = minimize_restricted(0.5 * gmax, ref_kernel, 1.0)
    assert low.converged and low.active_clamp > 0
    assert low.energy.total > ref_report.energy.total
    assert low.residuals["domain_violations"] == 0
    assert np.all(low.state.gamma <= 0.5 * gmax * (1 + 1e-12))
    with pytest.raises(ValueError):
        minimize_restricted(0.0, ref_kernel, 1.0)


def test_kappa_sweep(ref_kernel, ref_report):
    sweep = kappa_sweep([0.5, 1, 2, 4, 8, 16, 32], ref_kernel, 1.0)
    assert sweep.monotone
    assert all(r.converged for r in sweep.reports)
    assert sweep.kappa_star == 4.0
    assert sweep.path_energies[-1] == pytest.approx(ref_report.energy.total, abs=1e-12)
    # fresh totals agree with the chained path energies to roundoff
    np.testing.assert_allclose(sweep.energies, sweep.path_energies, rtol=1e-14)


def test_kappa_sweep_degenerate_cases(small_kernel):
    single = kappa_sweep([3.0], small_kernel, 1.0)
    alone = minimize_restricted(3.0, small_kernel, 1.0)
    assert single.energies[0] == alone.energy.total
    low = kappa_sweep([0.25, 0.5, 1.0], small_kernel, 1.0)
    assert low.monotone and low.kappa_star is None
    for bad in ([], [2.0, 1.0], [-1.0, 1.0]):
        with pytest.raises(ValueError):
            kappa_sweep(bad, small_kernel, 1.0)


def test_fixed_density_zero_lambda(small_kernel):
    for rho0 in (0.0, 0.4, 1.0):
        rep = minimize_fixed_density(0.0, rho0, small_kernel, 1.0)
        assert rep.energy.total == -1.0 * rho0 + 0.5 * rho0**2
    with pytest.raises(ValueError):
        minimize_fixed_density(-1.0, 1.0, small_kernel, 1.0)


def test_fixed_density_slice_and_minimum(ref_kernel, ref_report):
    lam0, rho0 = ref_report.rho_gamma, ref_report.state.rho0
    lams = lam0 * np.linspace(0.5, 1.5, 9)
    reps = [minimize_fixed_density(lam, rho0, ref_kernel, 1.0) for lam in lams]
    assert all(r.converged for r in reps)
    for lam, r in zip(lams, reps):
        assert r.rho_gamma == pytest.approx(lam, rel=1e-12)
        assert r.state.rho0 == rho0
    f = np.array([r.energy.total for r in reps])
    assert np.all(f[2:] - 2 * f[1:-1] + f[:-2] >= -1e-8)
    assert abs(f.min() - ref_report.energy.total) <= 10 * SolverConfig().tol_energy


def test_fixed_density_large_lambda_fills_lowest_node(ref_kernel, ref_report):
    # beyond the unconstrained rho_gamma the extra mass sits at the smallest momentum
    rep = minimize_fixed_density(2 * ref_report.rho_gamma, ref_report.state.rho0, ref_kernel, 1.0)
    assert rep.converged
    assert int(np.argmax(rep.state.gamma)) == 0
    assert rep.extra["multiplier"] < 0


def test_mu_sweep(ref_kernel):
    mus = [-0.5, 0.0, 0.5, 1.0, 2.0]
    rows = mu_sweep(mus, ref_kernel)
    assert [r["mu"] for r in rows] == mus
    for r in rows:
        assert r["converged"]
        if r["mu"] <= 0:
            assert r["rho"] == 0 and r["energy"] == 0
        else:
            assert r["condensate_fraction"] > 0.5
            assert r["energy"] <= -r["mu"] ** 2 / 2
    cold = mu_sweep(mus, ref_kernel, warm_start=False)
    tol = 10 * SolverConfig().tol_energy
    for a, b in zip(rows, cold):
        assert abs(a["energy"] - b["energy"]) <= tol


def test_residuals_of_vacuum(small_kernel):
    ev = evaluate(vacuum(small_kernel.grid.n), small_kernel, 1.0)
    res = residuals(vacuum(small_kernel.grid.n), ev)
    assert res["drho0"] == 1.0 and res["grad"] == 0.0 and res["purity"] == 0.0


def test_report_json(ref_report):
    doc = ref_report.to_json()
    assert doc["converged"] is True
    assert set(doc["energy"]) == {"kinetic", "chemical", "hartree", "linear", "quad_gamma", "quad_alpha", "total"}
    assert len(doc["trace"]) == ref_report.iterations + 1
