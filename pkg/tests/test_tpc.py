"""Power-control algorithms: feasibility engine, solvers, oracle, invariants."""

import numpy as np
import pytest

from cellfreesim.combining import mr_weights
from cellfreesim.errors import Infeasible, MaxIterationsExceeded, TooManyUEs
from cellfreesim.metrics import SystemConfig, sinr_and_se
from cellfreesim.tpc import (
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    TpcOptions,
    brute_force_oracle,
    feasible_powers,
    grid_sinr,
    max_min_ee,
    max_min_se,
    max_power,
    max_power_result,
    min_max_power,
    solve,
)

CFG = SystemConfig()
RHO = CFG.rho


def rng(seed=0):
    return np.random.default_rng(seed)


def random_instance(K=2, M=8, seed=0, snr_lo=5.0, snr_hi=50.0):
    """Perfect-CSI instance whose full-power single-UE SNRs span [snr_lo, snr_hi]."""
    r = rng(seed)
    snr_full = 10.0 ** r.uniform(np.log10(snr_lo), np.log10(snr_hi), size=K)
    beta = snr_full / (M * RHO)
    H = np.sqrt(beta) * (r.standard_normal((M, K)) + 1j * r.standard_normal((M, K))) / np.sqrt(2.0)
    return H, np.zeros((M, K))


def decoupled_instance(gains):
    """Orthogonal single-antenna-per-UE channels: no cross interference."""
    K = len(gains)
    H = np.zeros((K, K), dtype=complex)
    for k, g in enumerate(gains):
        H[k, k] = np.sqrt(g)
    W = np.eye(K, dtype=complex)  # unit-norm weights
    return H, np.zeros((K, K)), W


class TestMaxPower:
    def test_single(self):
        assert np.array_equal(max_power(1), np.ones(1))

    def test_eight(self):
        assert np.array_equal(max_power(8), np.ones(8))

    def test_idempotent(self):
        assert np.array_equal(max_power(3), max_power(3))

    def test_invalid(self):
        with pytest.raises(ValueError):
            max_power(0)


class TestOptions:
    def test_defaults(self):
        opts = TpcOptions()
        assert opts.hill_step_init == 0.1
        assert opts.hill_step_min == 1e-4

    @pytest.mark.parametrize("kwargs", [
        {"bisection_tol": 0.0},
        {"fixed_point_tol": -1.0},
        {"alternations": 0},
        {"target_se": -1.0},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            TpcOptions(**kwargs)


class TestFeasiblePowers:
    def test_decoupled_exact_solution(self):
        a1, a2 = 20.0 / RHO, 40.0 / RHO
        H, err, W = decoupled_instance([a1, a2])
        t = 5.0
        q = feasible_powers(W, H, err, RHO, t, cap=1.0)
        assert q is not None
        assert np.allclose(q, [t / (RHO * a1), t / (RHO * a2)], rtol=1e-9)

    def test_decoupled_feasibility_threshold(self):
        a = 20.0 / RHO
        H, err, W = decoupled_instance([a, a])
        cap = 0.5
        assert feasible_powers(W, H, err, RHO, 9.9, cap=cap) is not None
        assert feasible_powers(W, H, err, RHO, 10.1, cap=cap) is None

    def test_zero_target_zero_powers(self):
        H, err = random_instance(seed=1)
        W = mr_weights(H).W
        q = feasible_powers(W, H, err, RHO, 0.0)
        assert np.array_equal(q, np.zeros(2))

    def test_achieves_target_exactly(self):
        H, err = random_instance(K=3, seed=2)
        W = mr_weights(H).W
        sinr1, _ = sinr_and_se(W, H, err, np.ones(3), RHO)
        t = 0.5 * float(sinr1.min())  # comfortably feasible
        q = feasible_powers(W, H, err, RHO, t)
        sinr, _ = sinr_and_se(W, H, err, q, RHO)
        assert np.all(sinr >= t * (1 - 1e-6))
        assert np.max(np.abs(sinr - t)) / t < 1e-9  # no capped coordinates here

    def test_matches_fine_grid_minimal_profile(self):
        # the fixed point is the componentwise-minimal feasible allocation
        H, err = random_instance(seed=3)
        W = mr_weights(H).W
        sinr1, _ = sinr_and_se(W, H, err, np.ones(2), RHO)
        t = 0.6 * float(sinr1.min())
        q_star = feasible_powers(W, H, err, RHO, t)
        grid = np.linspace(0.0, 1.0, 2001)
        mins = np.full(2, np.inf)
        for v in grid:
            Q = np.column_stack([np.full(2001, v), grid])
            s = grid_sinr(W, H, err, RHO, Q)
            feas = np.all(s >= t, axis=1)
            if feas.any():
                mins[0] = min(mins[0], v)
                mins[1] = min(mins[1], grid[feas].min())
        assert np.all(np.abs(mins - q_star) <= 1e-3)

    def test_trace_monotone_nondecreasing(self):
        H, err = random_instance(K=3, seed=4)
        W = mr_weights(H).W
        sinr1, _ = sinr_and_se(W, H, err, np.ones(3), RHO)
        t = 0.7 * float(sinr1.min())
        q, trace = feasible_powers(W, H, err, RHO, t, return_trace=True)
        assert q is not None
        assert len(trace) >= 2
        for a, b in zip(trace, trace[1:]):
            assert np.all(b >= a - 1e-15)
        assert np.array_equal(trace[-1], q)

    def test_infeasible_returns_none(self):
        H, err = random_instance(seed=5)
        W = mr_weights(H).W
        sinr1, _ = sinr_and_se(W, H, err, np.ones(2), RHO)
        assert feasible_powers(W, H, err, RHO, 10.0 * float(sinr1.max())) is None

    def test_zero_gain_ue_infeasible_for_positive_target(self):
        H, err = random_instance(seed=6)
        H[:, 0] = 0
        W = mr_weights(H).W
        assert feasible_powers(W, H, err, RHO, 0.5) is None

    def test_max_iterations_raises(self):
        H, err = random_instance(seed=7)
        W = mr_weights(H).W
        sinr1, _ = sinr_and_se(W, H, err, np.ones(2), RHO)
        opts = TpcOptions(max_fixed_point_iters=2)
        with pytest.raises(MaxIterationsExceeded):
            feasible_powers(W, H, err, RHO, 0.9 * float(sinr1.min()), opts=opts)

    def test_argument_validation(self):
        H, err = random_instance(seed=8)
        W = mr_weights(H).W
        with pytest.raises(ValueError):
            feasible_powers(W, H, err, RHO, -1.0)
        with pytest.raises(ValueError):
            feasible_powers(W, H, err, RHO, 1.0, cap=0.0)


class TestMaxMinSe:
    def test_single_ue_full_power(self):
        H, err = random_instance(K=1, seed=10)
        res = max_min_se(H, err, RHO, "mr", CFG)
        assert res.q[0] == pytest.approx(1.0, abs=1e-3)
        baseline = max_power_result(H, err, RHO, "mr", CFG)
        assert res.metrics.se[0] == pytest.approx(baseline.metrics.se[0], rel=1e-3)

    def test_symmetric_decoupled_full_power(self):
        a = 30.0 / RHO
        H, err, W = decoupled_instance([a, a])
        res = max_min_se(H, err, RHO, "mr", CFG)
        # MR weights equal the channel columns; the decoupled optimum is full power
        assert np.allclose(res.q, 1.0, atol=2e-4)
        assert np.allclose(res.metrics.sinr, 30.0, rtol=1e-3)

    @pytest.mark.parametrize("seed", range(5))
    def test_equalizes_sinr_with_cap_binding(self, seed):
        H, err = random_instance(K=3, seed=20 + seed)
        res = max_min_se(H, err, RHO, "mr", CFG)
        sinr = res.metrics.sinr
        assert sinr.max() / sinr.min() - 1 < 1e-3
        assert res.q.max() >= 1 - TpcOptions().bisection_tol
        assert np.all(res.q >= 0) and np.all(res.q <= 1)

    def test_beats_max_power_min_se(self):
        for seed in range(5):
            H, err = random_instance(K=3, seed=40 + seed)
            res = max_min_se(H, err, RHO, "mr", CFG)
            base = max_power_result(H, err, RHO, "mr", CFG)
            assert res.metrics.se.min() >= base.metrics.se.min() * (1 - 1e-9)

    def test_zero_gain_ue_yields_zero_allocation(self):
        H, err = random_instance(seed=50)
        H[:, 1] = 0
        res = max_min_se(H, err, RHO, "mr", CFG)
        assert res.status == STATUS_OPTIMAL
        assert np.array_equal(res.q, np.zeros(2))
        assert np.all(res.metrics.se == 0)

    def test_mmse_combiner_alternation(self):
        r = rng(60)
        beta = 10.0 ** r.uniform(-11, -10, size=(16, 4))
        H = np.sqrt(beta) * (r.standard_normal((16, 4)) + 1j * r.standard_normal((16, 4))) / np.sqrt(2)
        err = beta * 0.05
        res = max_min_se(H, err, RHO, "mmse", CFG)
        assert res.status == STATUS_OPTIMAL
        assert res.diagnostics["rounds"] >= 1
        base = max_power_result(H, err, RHO, "mmse", CFG)
        assert res.metrics.se.min() >= base.metrics.se.min() * (1 - 1e-6)


class TestMinMaxPower:
    def test_zero_target_vanishing_cap(self):
        H, err = random_instance(seed=70)
        nu, q = min_max_power(H, err, RHO, "mr", 0.0)
        assert nu <= TpcOptions().bisection_tol
        assert np.allclose(q, 0.0, atol=1e-6)

    def test_decoupled_weak_ue_binds(self):
        a1, a2 = 10.0 / RHO, 40.0 / RHO
        H, err, W = decoupled_instance([a1, a2])
        target = 2.0
        t_r = 2.0**target - 1.0
        nu, q = min_max_power(H, err, RHO, "mr", target)
        assert nu == pytest.approx(t_r / (RHO * a1), abs=2e-4)
        assert q[0] == pytest.approx(t_r / (RHO * a1), abs=1e-6)
        assert q[1] == pytest.approx(t_r / (RHO * a2), abs=1e-6)

    def test_deep_shadow_infeasible(self):
        H, err = random_instance(seed=71)
        H *= 1e-6  # push every gain far below the target requirement
        with pytest.raises(Infeasible):
            min_max_power(H, err, RHO, "mr", 20.0)

    def test_allocation_meets_target(self):
        H, err = random_instance(K=3, seed=72)
        target = 1.5
        nu, q = min_max_power(H, err, RHO, "mr", target)
        W = mr_weights(H).W
        sinr, se = sinr_and_se(W, H, err, q, RHO)
        assert np.all(se >= target - 1e-4)
        assert q.max() <= nu + 1e-12


class TestMaxMinEe:
    def test_scalar_oracle_single_ue(self):
        # 1-D problem: compare against a dense sweep of the only power knob
        H, err = random_instance(K=1, M=8, seed=80)
        opts = TpcOptions(target_se=1.0)
        res = max_min_ee(H, err, RHO, "mr", CFG, opts)
        W = mr_weights(H).W
        qs = np.linspace(1e-6, 1.0, 10_000)
        sinr = grid_sinr(W, H, err, RHO, qs[:, None]).ravel()
        se = np.log2(1 + sinr)
        ee = CFG.bandwidth * se / (CFG.p_max * qs + CFG.p_circuit)
        ee[se < 1.0] = -np.inf
        best = float(ee.max())
        assert float(res.metrics.ee[0]) == pytest.approx(best, rel=5e-3)
        assert res.status == STATUS_OPTIMAL

    def test_degenerate_interval_equals_min_max_power(self):
        # a target just under the max-min SE value leaves no room to climb
        H, err = random_instance(seed=81)
        se_best = max_min_se(H, err, RHO, "mr", CFG).metrics.se.min()
        target = float(se_best) - 1e-3
        opts = TpcOptions(target_se=target)
        res = max_min_ee(H, err, RHO, "mr", CFG, opts)
        nu, q = min_max_power(H, err, RHO, "mr", target)
        assert res.status == STATUS_OPTIMAL
        assert res.diagnostics["nu_star"] >= 1 - 5e-3
        assert np.allclose(res.q, q, atol=5e-3)

    def test_high_floor_collapses_onto_max_power(self):
        # when the floor binds every UE at (nearly) full power the EE solution
        # and the max-power baseline coincide
        a = 25.0 / RHO
        H, err, _ = decoupled_instance([a, a, a])
        base = max_power_result(H, err, RHO, "mr", CFG)
        target = float(base.metrics.se.min()) - 1e-3
        res = max_min_ee(H, err, RHO, "mr", CFG, TpcOptions(target_se=target))
        assert res.status == STATUS_OPTIMAL
        assert np.all(res.q >= 0.99)
        med_res = float(np.median(res.metrics.se))
        med_base = float(np.median(base.metrics.se))
        assert abs(med_res - med_base) / med_base < 0.05

    def test_infeasible_status_with_zero_metrics(self):
        H, err = random_instance(seed=83)
        res = max_min_ee(H, err, RHO, "mr", CFG, TpcOptions(target_se=25.0))
        assert res.status == STATUS_INFEASIBLE
        assert np.all(res.q == 0)
        assert np.all(res.metrics.se == 0) and np.all(res.metrics.ee == 0)
        assert not res.allocation.feasible

    def test_zero_gain_ue_infeasible(self):
        H, err = random_instance(seed=84)
        H[:, 0] = 0
        res = max_min_ee(H, err, RHO, "mr", CFG, TpcOptions(target_se=1.0))
        assert res.status == STATUS_INFEASIBLE

    def test_se_floor_honored(self):
        for seed in range(5):
            H, err = random_instance(K=3, seed=90 + seed)
            opts = TpcOptions(target_se=1.0)
            res = max_min_ee(H, err, RHO, "mr", CFG, opts)
            if res.status == STATUS_OPTIMAL:
                assert res.metrics.se.min() >= opts.target_se - 1e-6

    def test_evaluation_budget_bounded(self):
        for seed in range(5):
            H, err = random_instance(K=3, seed=100 + seed)
            res = max_min_ee(H, err, RHO, "mr", CFG, TpcOptions(target_se=0.5))
            assert res.diagnostics["objective_evals"] <= 500

    @pytest.mark.parametrize("seed", range(20))
    def test_monotone_in_target(self, seed):
        # raising the floor never raises the best min-EE and never lowers
        # min-SE. Two floors below the unconstrained optimum's SE return the
        # same point up to solver resolution, so the sweep anchors the later
        # targets above it, where the floor actively drives the trade-off.
        H, err = random_instance(seed=200 + seed)
        se_cap = float(max_min_se(H, err, RHO, "mr", CFG).metrics.se.min())
        loose = max_min_ee(H, err, RHO, "mr", CFG, TpcOptions(target_se=0.05 * se_cap))
        assert loose.status == STATUS_OPTIMAL
        s0 = float(loose.metrics.se.min())
        if s0 >= 0.95 * se_cap:
            pytest.skip("unconstrained optimum already sits at the SE cap")
        prev_ee, prev_se = float(loose.metrics.ee.min()), s0
        for lift in (0.4, 0.8):
            target = s0 + lift * (se_cap - s0)
            res = max_min_ee(H, err, RHO, "mr", CFG, TpcOptions(target_se=target))
            assert res.status == STATUS_OPTIMAL  # targets stay below the SE cap
            ee = float(res.metrics.ee.min())
            se = float(res.metrics.se.min())
            assert se >= target - 1e-6
            assert ee <= prev_ee * (1 + 1e-3)
            assert se >= prev_se * (1 - 1e-6)
            prev_ee, prev_se = ee, se

    @pytest.mark.parametrize("seed", range(8))
    def test_binding_floor_trades_ee_for_se(self, seed):
        # a floor strictly above the unconstrained optimum's SE must raise the
        # achieved min-SE to the floor and strictly cost min-EE
        H, err = random_instance(seed=240 + seed)
        se_cap = float(max_min_se(H, err, RHO, "mr", CFG).metrics.se.min())
        loose = max_min_ee(H, err, RHO, "mr", CFG, TpcOptions(target_se=0.05 * se_cap))
        s0 = float(loose.metrics.se.min())
        if s0 >= 0.97 * se_cap:
            pytest.skip("unconstrained optimum already sits at the SE cap")
        t_hi = 0.5 * (s0 + se_cap)
        tight = max_min_ee(H, err, RHO, "mr", CFG, TpcOptions(target_se=t_hi))
        assert tight.status == STATUS_OPTIMAL
        assert float(tight.metrics.se.min()) >= t_hi - 1e-6
        assert float(tight.metrics.ee.min()) < float(loose.metrics.ee.min())

    @pytest.mark.parametrize("seed", range(10))
    def test_algorithm_ordering(self, seed):
        # fixed (MR) weights: min-EE orders ee >= se >= max-power, and
        # min-SE orders se >= max-power
        H, err = random_instance(K=3, seed=300 + seed)
        mp = max_power_result(H, err, RHO, "mr", CFG)
        se = max_min_se(H, err, RHO, "mr", CFG)
        ee = max_min_ee(H, err, RHO, "mr", CFG, TpcOptions(target_se=0.25))
        assert ee.metrics.ee.min() >= se.metrics.ee.min() * (1 - 1e-9)
        assert se.metrics.ee.min() >= mp.metrics.ee.min() * (1 - 1e-9)
        assert se.metrics.se.min() >= mp.metrics.se.min() * (1 - 1e-9)

    def test_box_constraints_exact(self):
        for seed in range(5):
            H, err = random_instance(K=3, seed=400 + seed)
            for res in (
                max_power_result(H, err, RHO, "mr", CFG),
                max_min_se(H, err, RHO, "mr", CFG),
                max_min_ee(H, err, RHO, "mr", CFG, TpcOptions(target_se=0.5)),
            ):
                assert np.all(res.q >= 0.0) and np.all(res.q <= 1.0)


class TestBruteForceOracle:
    def test_two_point_grid_single_ue(self):
        H, err = random_instance(K=1, seed=500)
        q = brute_force_oracle(H, err, RHO, "mr", "min_se", grid_points=2)
        assert q[0] == 1.0

    def test_decoupled_symmetric_full_power(self):
        a = 30.0 / RHO
        H, err, _ = decoupled_instance([a, a])
        q = brute_force_oracle(H, err, RHO, "mr", "min_se", grid_points=51)
        assert np.array_equal(q, np.ones(2))

    def test_grid_refinement_consistency(self):
        H, err = random_instance(seed=501)
        vals = {}
        for g in (101, 201):
            q = brute_force_oracle(H, err, RHO, "mr", "min_se", grid_points=g)
            s = grid_sinr(mr_weights(H).W, H, err, RHO, q)
            vals[g] = float(np.min(np.log2(1 + s)))
        assert abs(vals[201] - vals[101]) / vals[101] < 0.005

    def test_too_many_ues(self):
        H, err = random_instance(K=4, M=8, seed=502)
        with pytest.raises(TooManyUEs):
            brute_force_oracle(H, err, RHO, "mr", "min_se")

    def test_min_ee_requires_config(self):
        H, err = random_instance(seed=503)
        with pytest.raises(ValueError):
            brute_force_oracle(H, err, RHO, "mr", "min_ee")

    def test_three_ue_chunked_path(self):
        H, err = random_instance(K=3, seed=504)
        q = brute_force_oracle(H, err, RHO, "mr", "min_se", grid_points=21)
        assert q.shape == (3,)
        assert np.all((q >= 0) & (q <= 1))

    def test_se_floor_excludes_points(self):
        H, err = random_instance(seed=505)
        q = brute_force_oracle(
            H, err, RHO, "mr", "min_ee", target_se=1.0, grid_points=101, config=CFG
        )
        s = grid_sinr(mr_weights(H).W, H, err, RHO, q)
        assert np.all(np.log2(1 + s) >= 1.0 - 1e-9)

    def test_impossible_floor_raises(self):
        H, err = random_instance(seed=506)
        with pytest.raises(Infeasible):
            brute_force_oracle(
                H, err, RHO, "mr", "min_ee", target_se=30.0, grid_points=11, config=CFG
            )


class TestSolveDispatch:
    def test_all_algorithms(self):
        H, err = random_instance(K=2, seed=600)
        for name in ("max_power", "max_min_se", "max_min_ee"):
            res = solve(name, H, err, RHO, "mr", CFG, TpcOptions(target_se=0.5))
            assert res.allocation.algorithm == name

    def test_unknown_algorithm(self):
        H, err = random_instance(seed=601)
        with pytest.raises(ValueError):
            solve("waterfilling", H, err, RHO, "mr", CFG)
