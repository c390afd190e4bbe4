"""Uplink transmit power control: max-power, max-min SE, and max-min EE.

The max-min problems are solved by bisection over the common SINR target.
Each feasibility probe runs the standard-interference-function fixed point

    q_k <- min(cap, t * D_k(q) / (rho * |w_k^H hhat_k|^2))

starting from q = 0, where D_k is the SINR denominator at q. The iteration is
elementwise nondecreasing and bounded, hence convergent; because the update is
affine in q, the limit can also be pinned exactly by solving the linear system
restricted to the uncapped coordinates, which this module uses to accelerate
convergence near the feasibility boundary. A returned allocation is always
certified by direct SINR evaluation, never by trusting the iteration.

The max-min EE method follows the two-step scheme: first minimize the maximum
power coefficient subject to the target SE (bisection on the cap), then hill
climb the cap from that point toward 1, scoring each cap by the worst-UE EE
with the cap in the power denominator, and finally report energy efficiency
at the optimized per-UE powers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .combining import build_weights
from .errors import Infeasible, MaxIterationsExceeded, TooManyUEs
from .metrics import LinkMetrics, SystemConfig, link_metrics

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_MAX_ITERS = "max_iters"

ALGORITHMS = ("max_power", "max_min_se", "max_min_ee")

_ALTERNATION_TOL = 1e-4
_MAX_BISECTION_STEPS = 300


@dataclass
class TpcOptions:
    """Solver knobs shared by the power-control algorithms."""

    bisection_tol: float = 1e-4
    fixed_point_tol: float = 1e-7
    max_fixed_point_iters: int = 20_000
    alternations: int = 5  # weight/power rounds for MMSE combining
    hill_step_init: float = 0.1
    hill_step_min: float = 1e-4
    target_se: float = 1.0  # bits/s/Hz floor for max-min EE
    max_objective_evals: int = 500

    def __post_init__(self) -> None:
        for name in ("bisection_tol", "fixed_point_tol", "hill_step_init", "hill_step_min"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if min(self.alternations, self.max_fixed_point_iters, self.max_objective_evals) < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.target_se < 0:
            raise ValueError("target_se must be nonnegative")


@dataclass
class PowerAllocation:
    """A power coefficient vector with its provenance."""

    q: np.ndarray
    algorithm: str
    iterations: int = 0
    feasible: bool = True


@dataclass
class TpcResult:
    """Allocation, per-UE metrics, and solver diagnostics for one channel state."""

    allocation: PowerAllocation
    metrics: LinkMetrics
    status: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def q(self) -> np.ndarray:
        return self.allocation.q


class LinkGains:
    """Fixed-weight SINR coefficients: sinr_k(q) = rho*a_k*q_k / D_k(q) with
    D_k(q) = rho * (coupling @ q)_k + noise_k."""

    def __init__(self, W: np.ndarray, H_hat: np.ndarray, err_var: np.ndarray):
        G = W.conj().T @ H_hat
        A2 = np.abs(G) ** 2
        self.a = A2.diagonal().copy()
        wsq = np.abs(W) ** 2
        z = wsq.T @ err_var  # z[k, i] = sum_m |w_k(m)|^2 err_var(m, i)
        coupling = A2 + z
        np.fill_diagonal(coupling, z.diagonal())  # own-signal term is not interference
        self.coupling = coupling
        self.noise = wsq.sum(axis=0)

    def sinr(self, q: np.ndarray, rho: float) -> np.ndarray:
        denom = rho * (self.coupling @ q) + self.noise
        num = rho * self.a * q
        return np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)


def max_power(K: int) -> np.ndarray:
    """Everyone transmits at full power."""
    if K < 1:
        raise ValueError("K must be >= 1")
    return np.ones(K)


# ---------------------------------------------------------------------------
# Feasibility engine
# ---------------------------------------------------------------------------


def _active_set_solve(Tmat: np.ndarray, c: np.ndarray, cap: float) -> np.ndarray | None:
    """Exact fixed point of q = min(cap, c + T q) via active-set elimination.

    Returns None when the system is beyond its interference limit (negative or
    non-finite solution), in which case the caller falls back to iterating.
    """
    K = len(c)
    capped = np.zeros(K, dtype=bool)
    for _ in range(K + 1):
        free = ~capped
        if not free.any():
            return np.full(K, cap)
        idx = np.where(free)[0]
        A = np.eye(len(idx)) - Tmat[np.ix_(idx, idx)]
        b = c[idx] + Tmat[np.ix_(idx, np.where(capped)[0])].sum(axis=1) * cap
        try:
            qf = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(qf)) or np.any(qf < -1e-9):
            return None
        over = qf > cap * (1.0 + 1e-12)
        if over.any():
            capped[idx[over]] = True
            continue
        q = np.full(K, cap)
        q[idx] = np.clip(qf, 0.0, cap)
        return q
    return None


def _fixed_point(
    gains: LinkGains,
    rho: float,
    t: float,
    cap: float,
    opts: TpcOptions,
    collect_trace: bool = False,
):
    """Run the capped interference-function iteration for SINR target t.

    Returns (q, trace) when the target is certified feasible at the returned
    allocation, (None, trace) when it is not, and raises
    MaxIterationsExceeded when the iteration fails to converge.
    """
    K = len(gains.a)
    if t < 0:
        raise ValueError("SINR target must be nonnegative")
    if not 0.0 < cap <= 1.0:
        raise ValueError("cap must lie in (0, 1]")
    zero = np.zeros(K)
    if t == 0.0:
        return zero, [zero.copy()]
    if np.any(gains.a <= 0):
        # a UE with zero effective gain can never reach a positive target
        return None, [zero.copy()]

    Tmat = t * gains.coupling / gains.a[:, None]
    c = t * gains.noise / (rho * gains.a)

    q = zero
    trace = [q.copy()] if collect_trace else None
    tol = opts.fixed_point_tol
    converged = False
    for it in range(1, opts.max_fixed_point_iters + 1):
        q_next = np.minimum(cap, c + Tmat @ q)
        delta = float(np.max(np.abs(q_next - q)))
        q = q_next
        if collect_trace:
            trace.append(q.copy())
        plain_converged = delta < tol
        if plain_converged or it % 8 == 0:
            # land exactly on the limit of the iteration: the update is affine
            # in q, so the fixed point solves a linear system on the uncapped
            # coordinates; the iterates only ever approach it from below
            q_exact = _active_set_solve(Tmat, c, cap)
            if q_exact is not None and np.all(q_exact >= q - 1e-12):
                resid = float(
                    np.max(np.abs(np.minimum(cap, c + Tmat @ q_exact) - q_exact))
                )
                if resid <= max(1e-12, 0.01 * tol):
                    q = np.maximum(q, np.minimum(q_exact, cap))
                    if collect_trace:
                        trace.append(q.copy())
                    converged = True
                    break
        if plain_converged:
            converged = True
            break
    if not converged:
        raise MaxIterationsExceeded(
            f"power fixed point did not converge in {opts.max_fixed_point_iters} iterations"
        )

    sinr = gains.sinr(q, rho)
    if np.all(sinr >= t * (1.0 - 10.0 * tol)):
        return q, trace
    return None, trace


def feasible_powers(
    W: np.ndarray,
    H_hat: np.ndarray,
    err_var: np.ndarray,
    rho: float,
    t: float,
    cap: float = 1.0,
    opts: TpcOptions | None = None,
    return_trace: bool = False,
):
    """Minimal power profile meeting SINR target t under a common cap, or None.

    The returned q is certified: every UE's SINR at q is at least
    t * (1 - 10 * fixed_point_tol). With return_trace=True the (monotone)
    iterate sequence is returned alongside.
    """
    opts = opts or TpcOptions()
    gains = LinkGains(W, H_hat, err_var)
    q, trace = _fixed_point(gains, rho, t, cap, opts, collect_trace=return_trace)
    if return_trace:
        return q, trace
    return q


def _probe(gains, rho, t, cap, opts):
    """Feasibility probe that treats iteration-budget exhaustion as 'not certified'."""
    try:
        q, _ = _fixed_point(gains, rho, t, cap, opts)
    except MaxIterationsExceeded:
        return None
    return q


def _bisect_max_min(
    gains: LinkGains,
    rho: float,
    opts: TpcOptions,
    t_floor: float = 0.0,
    cap: float = 1.0,
):
    """Maximize the common SINR target t >= t_floor under the power cap.

    Returns (t, q, probes) for the largest certified-feasible target, or None
    when even the floor is infeasible. Stops once the feasible allocation's
    largest coordinate is within bisection_tol of the cap (at the optimum the
    binding UE sits at the cap) or the target interval has collapsed.
    """
    q_floor = _probe(gains, rho, t_floor, cap, opts)
    if q_floor is None:
        return None
    probes = 1
    if np.any(gains.a <= 0):
        # some UE is stuck at zero SINR: the max-min value is the floor itself
        return t_floor, q_floor, probes

    lo, q_lo = t_floor, q_floor
    hi = max(float(np.max(gains.sinr(np.full(len(gains.a), cap), rho))), t_floor, 1e-12)
    for _ in range(200):
        q_hi = _probe(gains, rho, hi, cap, opts)
        probes += 1
        if q_hi is None:
            break
        lo, q_lo = hi, q_hi
        hi *= 2.0
    else:  # pragma: no cover - doubling always terminates at finite SINR
        raise MaxIterationsExceeded("could not bracket the max-min SINR target")

    for _ in range(_MAX_BISECTION_STEPS):
        if float(np.max(q_lo)) >= cap - opts.bisection_tol and lo > t_floor:
            break
        if hi - lo <= 1e-12 * max(hi, 1.0):
            break
        mid = 0.5 * (lo + hi)
        q_mid = _probe(gains, rho, mid, cap, opts)
        probes += 1
        if q_mid is None:
            hi = mid
        else:
            lo, q_lo = mid, q_mid
    return lo, q_lo, probes


# ---------------------------------------------------------------------------
# Algorithms
# ---------------------------------------------------------------------------


def _zero_metrics(K: int, config: SystemConfig) -> LinkMetrics:
    zeros = np.zeros(K)
    return LinkMetrics(sinr=zeros.copy(), se=zeros.copy(), power=np.full(K, config.p_circuit), ee=zeros.copy())


def max_power_result(
    H_hat: np.ndarray,
    err_var: np.ndarray,
    rho: float,
    combiner_kind: str,
    config: SystemConfig,
) -> TpcResult:
    """Evaluate the all-ones baseline allocation."""
    K = H_hat.shape[1]
    q = max_power(K)
    bank = build_weights(combiner_kind, H_hat, err_var, q, rho)
    m = link_metrics(bank.W, H_hat, err_var, q, rho, config)
    return TpcResult(
        allocation=PowerAllocation(q=q, algorithm="max_power"),
        metrics=m,
        status=STATUS_OPTIMAL,
    )


def max_min_se(
    H_hat: np.ndarray,
    err_var: np.ndarray,
    rho: float,
    combiner_kind: str,
    config: SystemConfig,
    opts: TpcOptions | None = None,
) -> TpcResult:
    """Maximize the minimum spectral efficiency over the box [0, 1]^K.

    MR weights do not depend on q, so a single bisection suffices; MMSE
    weights do, so weight computation and bisection alternate (q starts at
    all-ones) until the allocation settles or the round budget is spent.
    Reported metrics use weights rebuilt at the returned allocation.
    """
    opts = opts or TpcOptions()
    K = H_hat.shape[1]
    rounds = opts.alternations if combiner_kind == "mmse" else 1
    q = np.ones(K)
    t = 0.0
    probes = 0
    rounds_used = 0
    for _ in range(rounds):
        rounds_used += 1
        bank = build_weights(combiner_kind, H_hat, err_var, q, rho)
        gains = LinkGains(bank.W, H_hat, err_var)
        t, q_new, p = _bisect_max_min(gains, rho, opts)
        probes += p
        delta = float(np.max(np.abs(q_new - q)))
        q = q_new
        if delta < _ALTERNATION_TOL:
            break
    bank = build_weights(combiner_kind, H_hat, err_var, q, rho)
    m = link_metrics(bank.W, H_hat, err_var, q, rho, config)
    return TpcResult(
        allocation=PowerAllocation(q=q, algorithm="max_min_se", iterations=probes),
        metrics=m,
        status=STATUS_OPTIMAL,
        diagnostics={"sinr_target": t, "rounds": rounds_used, "min_se": float(np.min(m.se))},
    )


def min_max_power(
    H_hat: np.ndarray,
    err_var: np.ndarray,
    rho: float,
    combiner_kind: str,
    target_se: float,
    opts: TpcOptions | None = None,
) -> tuple[float, np.ndarray]:
    """Smallest common power cap nu* under which every UE reaches target_se.

    Returns (nu_star, q) where q is the minimal profile meeting the target
    under that cap. Raises Infeasible when the target cannot be met even at
    full power.
    """
    opts = opts or TpcOptions()
    if target_se < 0:
        raise ValueError("target_se must be nonnegative")
    t_r = 2.0**target_se - 1.0
    K = H_hat.shape[1]
    rounds = opts.alternations if combiner_kind == "mmse" else 1
    q = np.ones(K)
    nu_star = 1.0
    for _ in range(rounds):
        bank = build_weights(combiner_kind, H_hat, err_var, q, rho)
        gains = LinkGains(bank.W, H_hat, err_var)
        q_full = _probe(gains, rho, t_r, 1.0, opts)
        if q_full is None:
            raise Infeasible(
                f"target SE {target_se} bits/s/Hz is unreachable even at full power"
            )
        lo, hi, q_hi = 0.0, 1.0, q_full
        while hi - lo > opts.bisection_tol:
            mid = 0.5 * (lo + hi)
            q_mid = _probe(gains, rho, t_r, mid, opts)
            if q_mid is None:
                lo = mid
            else:
                hi, q_hi = mid, q_mid
        nu_star = hi
        delta = float(np.max(np.abs(q_hi - q)))
        q = q_hi
        if delta < _ALTERNATION_TOL:
            break
    return nu_star, q


def max_min_ee(
    H_hat: np.ndarray,
    err_var: np.ndarray,
    rho: float,
    combiner_kind: str,
    config: SystemConfig,
    opts: TpcOptions | None = None,
) -> TpcResult:
    """Maximize the minimum energy efficiency subject to an SE floor.

    Step 1 finds the smallest cap nu* meeting the floor; step 2 hill climbs
    the cap nu in [nu*, 1] (step 0.1, halved and reversed on a decrease,
    stopping below 1e-4), scoring each cap by bandwidth * min_k SE_k /
    (p_max * nu + p_circuit) with SE from the floor-constrained max-min SE
    solve at that cap. The reported metrics use the actual per-UE powers,
    whose EE is at least the search objective.
    """
    opts = opts or TpcOptions()
    K = H_hat.shape[1]
    t_r = 2.0**opts.target_se - 1.0
    try:
        nu_star, _ = min_max_power(H_hat, err_var, rho, combiner_kind, opts.target_se, opts)
    except Infeasible as exc:
        return TpcResult(
            allocation=PowerAllocation(np.zeros(K), "max_min_ee", feasible=False),
            metrics=_zero_metrics(K, config),
            status=STATUS_INFEASIBLE,
            diagnostics={"target_se": opts.target_se, "reason": str(exc)},
        )

    rounds = opts.alternations if combiner_kind == "mmse" else 1
    cache: dict[float, tuple] = {}
    evals = 0

    def objective(nu: float):
        nonlocal evals
        key = round(nu, 12)
        if key in cache:
            return cache[key]
        evals += 1
        q_cur = np.ones(K)
        solved = None
        for _ in range(rounds):
            bank = build_weights(combiner_kind, H_hat, err_var, q_cur, rho)
            gains = LinkGains(bank.W, H_hat, err_var)
            res = _bisect_max_min(gains, rho, opts, t_floor=t_r, cap=nu)
            if res is None:
                break
            _, q_new, _ = res
            delta = float(np.max(np.abs(q_new - q_cur)))
            q_cur = q_new
            solved = q_cur
            if delta < _ALTERNATION_TOL:
                break
        if solved is None:
            entry = (-math.inf, None, None)
        else:
            bank = build_weights(combiner_kind, H_hat, err_var, solved, rho)
            m = link_metrics(bank.W, H_hat, err_var, solved, rho, config)
            value = config.bandwidth * float(np.min(m.se)) / (config.p_max * nu + config.p_circuit)
            entry = (value, solved, m)
        cache[key] = entry
        return entry

    status = STATUS_OPTIMAL
    nu = nu_star
    f_cur, _, _ = objective(nu)
    best_f, best_nu = f_cur, nu
    step = opts.hill_step_init
    for _ in range(100 * opts.max_objective_evals):  # belt and braces; evals is the real budget
        if abs(step) < opts.hill_step_min:
            break
        if evals >= opts.max_objective_evals:
            status = STATUS_MAX_ITERS
            break
        nu_next = min(1.0, max(nu_star, nu + step))
        if nu_next == nu:
            step = -0.5 * step
            continue
        f_next, _, _ = objective(nu_next)
        if f_next < f_cur:
            step = -0.5 * step
        else:
            nu, f_cur = nu_next, f_next
            if f_cur > best_f:
                best_f, best_nu = f_cur, nu
    # the cap=1 endpoint dominates the plain max-min SE allocation; checking it
    # guards the min-EE ordering against a non-unimodal search landscape
    if evals < opts.max_objective_evals:
        f_one, _, _ = objective(1.0)
        if f_one > best_f:
            best_f, best_nu = f_one, 1.0

    value, q_best, m_best = cache[round(best_nu, 12)]
    if q_best is None:  # pragma: no cover - nu_star itself was solvable above
        return TpcResult(
            allocation=PowerAllocation(np.zeros(K), "max_min_ee", feasible=False),
            metrics=_zero_metrics(K, config),
            status=STATUS_INFEASIBLE,
            diagnostics={"target_se": opts.target_se, "nu_star": nu_star},
        )
    return TpcResult(
        allocation=PowerAllocation(q_best, "max_min_ee", iterations=evals),
        metrics=m_best,
        status=status,
        diagnostics={
            "target_se": opts.target_se,
            "nu_star": nu_star,
            "nu": best_nu,
            "objective": value,
            "objective_evals": evals,
            "min_se": float(np.min(m_best.se)),
            "min_ee": float(np.min(m_best.ee)),
        },
    )


def solve(
    algorithm: str,
    H_hat: np.ndarray,
    err_var: np.ndarray,
    rho: float,
    combiner_kind: str,
    config: SystemConfig,
    opts: TpcOptions | None = None,
) -> TpcResult:
    """Run one of the named power-control algorithms."""
    if algorithm == "max_power":
        return max_power_result(H_hat, err_var, rho, combiner_kind, config)
    if algorithm == "max_min_se":
        return max_min_se(H_hat, err_var, rho, combiner_kind, config, opts)
    if algorithm == "max_min_ee":
        return max_min_ee(H_hat, err_var, rho, combiner_kind, config, opts)
    raise ValueError(f"unknown TPC algorithm: {algorithm!r}")


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------


def _direct_sinr_coefficients(W, H_hat, err_var):
    """Per-UE SINR coefficients computed straight from the definition, kept
    separate from the production metric path so the two can cross-check."""
    K = H_hat.shape[1]
    sig = np.empty(K)
    cross = np.empty((K, K))
    zcoef = np.empty((K, K))
    noise = np.empty(K)
    for k in range(K):
        wk = W[:, k]
        wk_pow = np.abs(wk) ** 2
        for i in range(K):
            cross[k, i] = np.abs(np.vdot(wk, H_hat[:, i])) ** 2
            zcoef[k, i] = float(np.sum(wk_pow * err_var[:, i]))
        sig[k] = cross[k, k]
        noise[k] = float(np.sum(wk_pow))
    return sig, cross, zcoef, noise


def grid_sinr(W, H_hat, err_var, rho, Q):
    """SINR of every UE at every allocation in Q (rows), by direct evaluation."""
    sig, cross, zcoef, noise = _direct_sinr_coefficients(W, H_hat, err_var)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    interference = Q @ cross.T - Q * sig
    z_term = Q @ zcoef.T
    denom = rho * (interference + z_term) + noise
    num = rho * Q * sig
    return np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)


def brute_force_oracle(
    H_hat: np.ndarray,
    err_var: np.ndarray,
    rho: float,
    combiner_kind: str,
    objective: str = "min_se",
    target_se: float = 0.0,
    grid_points: int = 201,
    config: SystemConfig | None = None,
) -> np.ndarray:
    """Exhaustive search over the uniform power grid {0, ..., 1}^K.

    Weights are fixed at the q = 1 point. Objective "min_se" scores a point
    by its worst-UE spectral efficiency. Objective "min_ee" scores it by the
    worst-UE energy efficiency with every UE charged the allocation's largest
    power coefficient (the common-cap accounting the cap-parameterized
    max-min EE search optimizes; the per-UE power draw is never below it),
    restricted to points meeting the SE floor; `config` supplies the power
    constants. Ties resolve to the lexicographically smallest allocation.
    """
    K = H_hat.shape[1]
    if K > 3:
        raise TooManyUEs("grid search supports at most 3 UEs")
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    if objective not in ("min_se", "min_ee"):
        raise ValueError(f"unknown objective: {objective!r}")
    if objective == "min_ee" and config is None:
        raise ValueError("objective 'min_ee' requires a SystemConfig")

    bank = build_weights(combiner_kind, H_hat, err_var, np.ones(K), rho)
    grid = np.linspace(0.0, 1.0, grid_points)

    if K == 1:
        chunks = [grid[:, None]]
    elif K == 2:
        g0, g1 = np.meshgrid(grid, grid, indexing="ij")
        chunks = [np.column_stack([g0.ravel(), g1.ravel()])]
    else:
        tail0, tail1 = np.meshgrid(grid, grid, indexing="ij")
        tail = np.column_stack([tail0.ravel(), tail1.ravel()])
        chunks = (
            np.column_stack([np.full(len(tail), v), tail]) for v in grid
        )

    best_val = -math.inf
    best_q = None
    for Q in chunks:
        sinr = grid_sinr(bank.W, H_hat, err_var, rho, Q)
        se = np.log2(1.0 + sinr)
        se_min = se.min(axis=1)
        if objective == "min_se":
            vals = se_min
        else:
            power = config.p_max * Q.max(axis=1, keepdims=True) + config.p_circuit
            vals = (config.bandwidth * se / power).min(axis=1)
            vals = np.where(se_min >= target_se - 1e-12, vals, -math.inf)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val = float(vals[i])
            best_q = Q[i].copy()
    if best_q is None or best_val == -math.inf:
        raise Infeasible("no grid point satisfies the SE floor")
    return best_q
