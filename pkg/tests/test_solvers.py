import math

import numpy as np
import pytest

from hpmcs.problems import SignalKind, assemble, make_instance
from hpmcs.rip import RipConstants, compute_rip_constants
from hpmcs.solvers import (
    LAMBDA_FLOOR,
    Algorithm,
    ContractError,
    SolverConfig,
    Termination,
    power_iteration_lmax,
    prox_gradient_step,
    run_hpm1,
    run_hpm2,
    run_hpm_oracle_noiseless,
    run_hpm_oracle_noisy,
    run_iht,
    run_ista,
    run_pgh,
    solve,
)

from conftest import grid_prox

SQRT2 = math.sqrt(2.0)


def sparse_identity_instance(d=8, s=2, e=None):
    x = np.zeros(d)
    x[[1, 5][:s]] = [0.8, -0.6][:s]
    return assemble(np.eye(d), x, np.zeros(d) if e is None else e, s_true=s)


def kkt_residual(U, y, x, lam):
    g = U.T @ (U @ x - y)
    on = x != 0
    on_res = np.abs(g[on] + lam * np.sign(x[on]))
    off_res = np.abs(g[~on]) - lam
    return (float(on_res.max()) if on.any() else 0.0), float(off_res.max()) if (~on).any() else -1.0


class TestProxStep:
    def test_identity_plumbing(self):
        inst = sparse_identity_instance()
        out = prox_gradient_step(inst.U, inst.y, np.zeros(8), 0.1)
        np.testing.assert_allclose(out, np.sign(inst.x_star) * np.maximum(np.abs(inst.x_star) - 0.1, 0))

    def test_large_lambda_gives_zero(self, rng):
        U = rng.standard_normal((5, 9))
        y = rng.standard_normal(5)
        x = rng.standard_normal(9)
        xhat = x - U.T @ (U @ x - y)
        assert not np.any(prox_gradient_step(U, y, x, float(np.abs(xhat).max())))

    def test_against_grid_oracle(self, rng):
        U = rng.standard_normal((4, 6)) / 2
        y = rng.standard_normal(4)
        x = rng.standard_normal(6)
        lam = 0.3
        xhat = x - U.T @ (U @ x - y)
        oracle = np.array([grid_prox(v, lam) for v in xhat])
        np.testing.assert_allclose(prox_gradient_step(U, y, x, lam), oracle, atol=1e-6)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            prox_gradient_step(np.eye(3), np.ones(3), np.ones(3), 0.0)
        with pytest.raises(ValueError):
            prox_gradient_step(np.eye(3), np.ones(3), np.ones(4), 1.0)


def test_power_iteration(rng):
    U = rng.standard_normal((30, 50))
    exact = np.linalg.eigvalsh(U.T @ U)[-1]
    assert abs(power_iteration_lmax(U, iters=500, rtol=1e-12) - exact) <= 1e-6 * exact


class TestOracleSchedules:
    def test_identity_recovers_with_lambda_floor(self):
        inst = sparse_identity_instance()
        cfg = SolverConfig(algorithm="hpm-oracle", s=2, rip=compute_rip_constants(inst.U, 2))
        tr = run_hpm_oracle_noiseless(inst, cfg)
        assert tr.records[0].lam == LAMBDA_FLOOR
        assert np.linalg.norm(tr.final_x - inst.x_star) <= 1e-12
        assert tr.termination is Termination.PLATEAU

    def test_refuses_gamma_at_least_one(self):
        inst = sparse_identity_instance()
        bad = RipConstants({2: 0.5, 6: 0.5}, 0.3, 2)
        with pytest.raises(ContractError, match="gamma"):
            run_hpm_oracle_noiseless(inst, SolverConfig(algorithm="hpm-oracle", s=2, rip=bad))

    def test_refuses_missing_rip(self):
        inst = sparse_identity_instance()
        with pytest.raises(ContractError):
            run_hpm_oracle_noiseless(inst, SolverConfig(algorithm="hpm-oracle", s=2))
        with pytest.raises(ContractError):
            run_hpm_oracle_noiseless(inst, SolverConfig(algorithm="hpm-oracle", s=2,
                                                        rip=RipConstants({2: 0.1}, 0.1, 2)))

    def test_noiseless_refuses_noise(self):
        inst = sparse_identity_instance(e=np.full(8, 1e-3))
        cfg = SolverConfig(algorithm="hpm-oracle", s=2, rip=compute_rip_constants(inst.U, 2))
        with pytest.raises(ContractError):
            run_hpm_oracle_noiseless(inst, cfg)

    def test_delta1_below_truth_refused(self):
        inst = sparse_identity_instance()
        cfg = SolverConfig(algorithm="hpm-oracle", s=2, rip=compute_rip_constants(inst.U, 2), delta1=0.5)
        with pytest.raises(ContractError):
            run_hpm_oracle_noiseless(inst, cfg)

    def test_noisy_with_zero_noise_matches_noiseless(self):
        inst = make_instance(25, 30, SignalKind.exact_sparse(2), 0.0, 4, matrix="frame")
        rip = compute_rip_constants(inst.U, 2)
        cfg = SolverConfig(s=2, rip=rip, max_iters=40)
        a = run_hpm_oracle_noiseless(inst, cfg)
        b = run_hpm_oracle_noisy(inst, cfg)
        assert len(a) == len(b)
        for ra, rb in zip(a.records, b.records):
            assert ra.lam == rb.lam and ra.delta_bound == rb.delta_bound
            np.testing.assert_array_equal(ra.vals, rb.vals)

    def test_noisy_delta_fixed_point(self):
        inst = make_instance(25, 30, SignalKind.exact_sparse(2), 0.01, 4, matrix="frame")
        rip = compute_rip_constants(inst.U, 2)
        tr = run_hpm_oracle_noisy(inst, SolverConfig(s=2, rip=rip, max_iters=400, error_floor=0.0))
        g = tr.params["gamma"]
        fixed = (1 + SQRT2) * math.sqrt(2) * tr.params["ut_e_inf"] / (1 - g)
        assert abs(tr.records[-1].delta_bound - fixed) <= 1e-9 * fixed


class TestHpm1:
    def test_eta_bound(self):
        inst = sparse_identity_instance()
        with pytest.raises(ContractError):
            run_hpm1(inst, SolverConfig(s=2, eta=SQRT2 - 1))

    def test_schedule(self):
        inst = make_instance(60, 120, SignalKind.exact_sparse(3), 0.0, 1)
        tr = run_hpm1(inst, SolverConfig(s=3, eta=0.3, lambda_cap=0.01, max_iters=5))
        g = (1 + SQRT2) * 0.3
        delta = tr.params["delta1"]
        for rec in tr.records:
            assert abs(rec.lam - (0.01 + 0.3 * delta) / math.sqrt(3)) <= 1e-15
            delta = g * delta + (1 + SQRT2) * 0.01
            assert abs(rec.delta_bound - delta) <= 1e-15

    def test_default_delta1(self):
        inst = make_instance(60, 120, SignalKind.exact_sparse(3), 0.0, 1)
        tr = run_hpm1(inst, SolverConfig(s=3, eta=0.3, lambda_cap=2.0, max_iters=1))
        assert tr.params["delta1"] == 2.0
        blind = assemble(inst.U, inst.x_star, inst.e)
        blind = type(blind)(U=blind.U, y=blind.y)
        tr = run_hpm1(blind, SolverConfig(s=3, eta=0.3, max_iters=1))
        assert tr.params["delta1"] == pytest.approx(math.sqrt(3) * np.abs(inst.U.T @ inst.y).max())


class TestHpm2:
    def test_lambda1_from_remark_gives_zero_first_iterate(self):
        inst = make_instance(100, 400, SignalKind.exact_sparse(5), 0.0, 1)
        tr = run_hpm2(inst, SolverConfig(s=5, eta=0.15))
        assert tr.records[0].lam == pytest.approx(np.abs(inst.U.T @ inst.y).max())
        assert tr.records[0].nnz == 0

    def test_eta_bound(self):
        with pytest.raises(ContractError):
            run_hpm2(sparse_identity_instance(), SolverConfig(s=2, eta=0.21))

    def test_geometric_decay(self):
        inst = make_instance(100, 400, SignalKind.exact_sparse(5), 0.0, 1)
        tr = run_hpm2(inst, SolverConfig(s=5, eta=0.15, max_iters=8))
        g = 2 * (1 + SQRT2) * 0.15
        lams = [r.lam for r in tr.records]
        for a, b in zip(lams, lams[1:]):
            assert b == pytest.approx(g * a, rel=1e-15)

    def test_sparsity_stop_returns_previous_iterate(self):
        inst = make_instance(60, 300, SignalKind.power_law(), 0.0, 2)
        s = 3
        cfg = SolverConfig(s=s, eta=0.2)
        tr = run_hpm2(inst, cfg)
        assert tr.termination is Termination.SPARSITY_STOP
        np.testing.assert_array_equal(tr.final_x, tr.iterate(len(tr) - 1))
        assert np.count_nonzero(tr.final_x) <= 2 * s
        # replay: the step after the returned iterate breaks the 2s budget
        nxt = prox_gradient_step(inst.U, inst.y, tr.final_x,
                                 tr.params["gamma"] * tr.records[-1].lam)
        assert np.count_nonzero(nxt) > 2 * s
        assert tr.prox_updates == len(tr) + 1

    def test_recovers_exact_sparse(self):
        inst = make_instance(200, 800, SignalKind.exact_sparse(5), 0.0, 3)
        tr = run_hpm2(inst, SolverConfig(s=5, eta=0.15, max_iters=500))
        assert np.linalg.norm(tr.final_x - inst.x_star) < 1e-6
        assert all(r.nnz <= 10 for r in tr.records)


class TestIsta:
    def test_objective_non_increasing(self):
        inst = make_instance(80, 200, SignalKind.exact_sparse(4), 0.01, 5)
        lam = 0.01
        tr = run_ista(inst, SolverConfig(algorithm="ista", ista_lambda=lam, max_iters=300))
        obj = [0.5 * np.sum((inst.U @ x - inst.y) ** 2) + lam * np.abs(x).sum() for x in tr.iterates()]
        assert all(b <= a + 1e-12 for a, b in zip(obj, obj[1:]))

    def test_identity_small_lambda(self, rng):
        y = rng.standard_normal(6)
        inst = assemble(np.eye(6), y, np.zeros(6))
        tr = run_ista(inst, SolverConfig(algorithm="ista", ista_lambda=1e-9))
        np.testing.assert_allclose(tr.final_x, y, atol=1e-8)

    def test_kkt_at_fixed_point(self):
        inst = make_instance(60, 100, SignalKind.exact_sparse(4), 0.01, 6)
        lam = 0.02
        tr = run_ista(inst, SolverConfig(algorithm="ista", ista_lambda=lam, max_iters=20000, error_floor=1e-14))
        on, off = kkt_residual(inst.U, inst.y, tr.final_x, lam)
        assert on <= 1e-6 and off <= 1e-6

    def test_rejects_nonpositive_lambda(self):
        with pytest.raises(ContractError):
            run_ista(sparse_identity_instance(), SolverConfig(ista_lambda=0.0))


class TestIht:
    def test_identity_one_step(self):
        inst = sparse_identity_instance()
        tr = run_iht(inst, SolverConfig(algorithm="iht", s=2, iht_gamma=1.0))
        np.testing.assert_array_equal(tr.iterate(0), inst.x_star)

    def test_gaussian_recovery_and_sparsity(self):
        inst = make_instance(500, 2500, SignalKind.exact_sparse(10), 0.0, 7)
        tr = run_iht(inst, SolverConfig(algorithm="iht", s=10, iht_gamma=1.0, max_iters=500))
        assert all(r.nnz <= 10 for r in tr.records)
        assert np.linalg.norm(tr.final_x - inst.x_star) < 1e-6

    def test_divergence_is_reported(self):
        inst = make_instance(20, 60, SignalKind.exact_sparse(3), 0.0, 1)
        tr = run_iht(inst, SolverConfig(algorithm="iht", s=20, iht_gamma=1e-3, max_iters=500))
        assert tr.termination is Termination.DIVERGED
        assert np.all(np.isfinite(tr.final_x))


class TestPgh:
    def test_target_above_start_collapses(self):
        inst = make_instance(50, 100, SignalKind.exact_sparse(3), 0.01, 1)
        big = 2 * float(np.abs(inst.U.T @ inst.y).max())
        tr = run_pgh(inst, SolverConfig(algorithm="pgh", pgh_lambda_target=big))
        assert tr.termination is Termination.CONVERGED
        assert not np.any(tr.final_x)
        assert {r.lam for r in tr.records} == {big}

    def test_tight_tolerance_reaches_stage_solution(self):
        inst = make_instance(60, 100, SignalKind.exact_sparse(4), 0.01, 6)
        lam = 0.02
        tr = run_pgh(inst, SolverConfig(algorithm="pgh", pgh_lambda_target=lam,
                                        pgh_inner_tol_factor=1e-9, max_iters=100000))
        assert tr.termination is Termination.CONVERGED
        on, off = kkt_residual(inst.U, inst.y, tr.final_x, lam)
        assert on <= 1e-6 and off <= 1e-6

    def test_lambda_schedule_decreasing(self):
        inst = make_instance(60, 100, SignalKind.exact_sparse(4), 0.01, 6)
        tr = run_pgh(inst, SolverConfig(algorithm="pgh", pgh_lambda_target=0.05, max_iters=5000))
        lams = [r.lam for r in tr.records]
        assert all(b <= a for a, b in zip(lams, lams[1:]))
        assert lams[-1] == 0.05

    def test_budget(self):
        inst = make_instance(60, 100, SignalKind.exact_sparse(4), 0.01, 6)
        tr = run_pgh(inst, SolverConfig(algorithm="pgh", pgh_lambda_target=1e-6, max_iters=7))
        assert tr.prox_updates == 7 and tr.termination is Termination.MAX_ITERS

    def test_bad_factors(self):
        with pytest.raises(ContractError):
            run_pgh(sparse_identity_instance(), SolverConfig(pgh_dec_factor=1.0))


@pytest.mark.parametrize("algo", [a for a in Algorithm if not a.value.startswith("hpm-oracle")])
def test_determinism(algo):
    inst = make_instance(40, 120, SignalKind.exact_sparse(3), 0.01, 9)
    cfg = SolverConfig(algorithm=algo, s=3, eta=0.15 if algo is Algorithm.HPM2 else 0.3,
                       ista_lambda=0.01, iht_gamma=2.0, pgh_lambda_target=0.01, max_iters=50)
    a, b = solve(inst, cfg), solve(inst, cfg)
    assert a.termination == b.termination and len(a) == len(b)
    np.testing.assert_array_equal(a.final_x, b.final_x)


def test_dense_fallback_round_trip():
    inst = make_instance(30, 40, SignalKind.exact_sparse(3), 0.01, 9)
    tr = run_ista(inst, SolverConfig(algorithm="ista", ista_lambda=1e-6, max_iters=5))
    dense = [r for r in tr.records if r.idx is None]
    assert dense, "expected dense snapshots for a nearly full iterate"
    x = dense[-1].x(40)
    assert np.count_nonzero(x) == dense[-1].nnz
