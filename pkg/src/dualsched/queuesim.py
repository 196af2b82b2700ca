"""Integer-queue network simulation driven by scheduled discrete actions.

The scaled queue occupancies alpha * Q_k of the real network serve as
the multiplier estimate: every slot solves the inner problem at
alpha * Q_k, decomposes the resulting point over the discrete action
hull, lets a scheduling policy pick one action, and advances the
integer queues with that action plus the drawn arrivals.  A reference
multiplier driven by the continuous points (with the same arrival
draws) is advanced alongside, so the gap between the two trajectories
can be checked against the continuity certificate 2 alpha ||A||_2 psi
and the whole run can be consumed by the same bound machinery as a
plain dual-ascent run.
"""

from __future__ import annotations

import collections
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .dual import (DiagnosticLedger, DualAscentResult, PerturbationStream,
                   Trajectory, default_checkpoints)
from .inner import solve_inner
from .problem import (ActionSet, ConfigError, ContractViolation, ProblemSpec,
                      operator_norm, subgradient_norm_bound)
from .scheduling import (AdmissibilityRule, BlockBuffer, SchedulerState,
                         amortized_select, block_select, decompose_to_simplex,
                         divergence_bound, myopic_select, reorder_block)

INTEGER_TOL = 1e-9
STABILITY_SLOPE_TOL = 0.05


@dataclass(frozen=True)
class QueueState:
    """Nonnegative integer queue occupancies."""

    Q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.Q)
        if q.ndim != 1:
            raise ContractViolation("queue vector must be one-dimensional")
        if np.issubdtype(q.dtype, np.integer):
            q = q.astype(np.int64)
        else:
            rounded = np.rint(q)
            if float(np.max(np.abs(q - rounded))) > INTEGER_TOL:
                raise ContractViolation("queue occupancies must be integers")
            q = rounded.astype(np.int64)
        if np.any(q < 0):
            raise ContractViolation("queue occupancies must be nonnegative")
        object.__setattr__(self, "Q", q)

    @classmethod
    def empty(cls, m: int) -> "QueueState":
        return cls(np.zeros(m, dtype=np.int64))


def _advance(Q: np.ndarray, A: np.ndarray, y, B) -> np.ndarray:
    incr = A @ np.asarray(y, dtype=float) + np.asarray(B, dtype=float)
    rounded = np.rint(incr)
    if float(np.max(np.abs(incr - rounded))) > INTEGER_TOL:
        raise ContractViolation(f"non-integer queue increment {incr}")
    return np.maximum(Q + rounded.astype(np.int64), 0)


def queue_step(state: QueueState, A, y, B_k) -> QueueState:
    """Advance the queues one slot: componentwise max(Q + A y + B, 0)."""
    return QueueState(_advance(state.Q, np.asarray(A, dtype=float), y, B_k))


class ArrivalProcess:
    """Integer arrival stream built on a perturbation stream.

    Every coordinate must emit integers each slot (Bernoulli draws and
    integer constants qualify); the declared mean, variance bound, and
    support bound carry over to the guarantees downstream.  Custom
    streams are checked draw by draw.
    """

    def __init__(self, stream: PerturbationStream):
        if stream.kinds is not None:
            for kind, value in stream.kinds:
                if kind == "constant" and abs(value - round(value)) > INTEGER_TOL:
                    raise ContractViolation(
                        f"constant arrival {value} is not an integer")
        self.stream = stream

    @property
    def dim(self) -> int:
        return self.stream.dim

    @property
    def mean(self) -> np.ndarray:
        return self.stream.mean

    def variance_bound(self) -> float:
        return self.stream.variance_bound()

    def support_bound(self) -> np.ndarray:
        return self.stream.support_bound()

    def sample(self, rng: np.random.Generator, k: int = 0) -> np.ndarray:
        raw = self.stream.sample(rng, k)
        rounded = np.rint(raw)
        if float(np.max(np.abs(raw - rounded))) > INTEGER_TOL:
            raise ContractViolation(f"non-integer arrival draw {raw}")
        return rounded.astype(np.int64)


class MyopicPolicy:
    """Every slot, play the action the running divergence most underserves."""

    kind = "myopic"

    def divergence_bound_u(self, V: int) -> float:
        return divergence_bound(V)

    def start(self, actions: ActionSet) -> "_MyopicRunner":
        return _MyopicRunner(actions.size)


class _MyopicRunner:
    def __init__(self, V: int):
        self.state = SchedulerState.initial(V)

    def select(self, u) -> int:
        j, self.state = myopic_select(self.state, u)
        return j


class AmortizedPolicy:
    """Recompute the selection only every tau_bar slots, hold in between."""

    kind = "amortized"

    def __init__(self, tau_bar: int):
        if int(tau_bar) != tau_bar or tau_bar < 1:
            raise ContractViolation("tau_bar must be a positive integer")
        self.tau_bar = int(tau_bar)

    def divergence_bound_u(self, V: int) -> float:
        return self.tau_bar * divergence_bound(V)

    def start(self, actions: ActionSet) -> "_AmortizedRunner":
        return _AmortizedRunner(actions.size, self.tau_bar)


class _AmortizedRunner:
    def __init__(self, V: int, tau_bar: int):
        self.state = SchedulerState.initial(V, tau_bar)
        self.tau_bar = tau_bar
        self.count = 0

    def select(self, u) -> int:
        do_update = self.count % self.tau_bar == 0
        self.count += 1
        j, self.state = amortized_select(self.state, u, do_update)
        return j


class BlockPolicy:
    """Greedy per-block quotas with a carried residual, reordered per rule.

    A block's quota needs all of its T*V weight vectors, so play lags
    the weight stream by one block: the very first block is primed by
    repeating the first weight vector, and each finished block is
    reordered (with the previously emitted action as boundary context)
    at the moment it is loaded for play.
    """

    kind = "block"

    def __init__(self, T: int, rule: Optional[AdmissibilityRule] = None):
        if int(T) != T or T < 1:
            raise ContractViolation("T must be a positive integer")
        self.T = int(T)
        self.rule = rule

    def divergence_bound_u(self, V: int) -> float:
        # One full block can be in flight on top of the carried unit
        # residual, so each component of sum(u_i - e_i) stays within
        # 2 T V + 2; the 2-norm certificate is sqrt(V) times that.
        return math.sqrt(V) * (2.0 * self.T * V + 2.0)

    def start(self, actions: ActionSet) -> "_BlockRunner":
        rule = self.rule
        if rule is None:
            rule = AdmissibilityRule.all_pairs(actions.size)
        elif rule.size != actions.size:
            raise ContractViolation(
                "admissibility rule size does not match the action set")
        return _BlockRunner(actions.size, self.T, rule)


class _BlockRunner:
    def __init__(self, V: int, T: int, rule: AdmissibilityRule):
        self.rule = rule
        self.buffer = BlockBuffer(T=T, V=V)
        self.queue = collections.deque()
        self.pending = None
        self.prev = None

    def select(self, u) -> int:
        self.buffer.push(u)
        if self.buffer.full:
            self.pending = block_select(self.buffer)
        if not self.queue:
            if self.pending is not None:
                order = reorder_block(self.pending, self.rule, prev=self.prev)
                self.pending = None
            else:
                # First slot ever: no finished block to play, so prime
                # one from this weight vector alone.
                quota = self.buffer.length * np.asarray(u, dtype=float)
                picks = _kernels.block_greedy(quota, self.buffer.length)
                order = reorder_block([int(i) for i in picks], self.rule,
                                      prev=None)
            self.queue.extend(order)
        j = self.queue.popleft()
        self.prev = j
        return j


class ConstantPolicy:
    """Always play one fixed action.  Certifies no divergence bound."""

    kind = "constant"

    def __init__(self, index: int):
        if int(index) != index or index < 0:
            raise ContractViolation("action index must be a nonnegative integer")
        self.index = int(index)

    def divergence_bound_u(self, V: int) -> float:
        return math.inf

    def start(self, actions: ActionSet) -> "_ConstantRunner":
        if self.index >= actions.size:
            raise ContractViolation(
                f"action index {self.index} out of range for {actions.size}")
        return _ConstantRunner(self.index)


class _ConstantRunner:
    def __init__(self, j: int):
        self.j = j

    def select(self, u) -> int:
        return self.j


@dataclass
class NetworkSimResult:
    """Everything one closed-loop run produced.

    `queues` has iters+1 rows starting at the initial occupancy;
    `lambdas` is the reference multiplier driven by the continuous
    points with the same arrival draws; `deltas` holds those draws.
    `certified_psi_u` is the policy's a-priori bound on
    ||sum(u_i - e_i)||_2 and `certified_psi_x` its image bound
    ||W||_2 * psi_u on ||sum(x_i - y_i)||_2.
    """

    spec: ProblemSpec
    alpha: float
    seed: Optional[int]
    policy_kind: str
    queues: np.ndarray
    actions: np.ndarray
    xs: np.ndarray
    lambdas: np.ndarray
    deltas: np.ndarray
    eps_norms: np.ndarray
    f_xbar: np.ndarray
    divs: np.ndarray
    div_norms: np.ndarray
    certified_psi_u: float
    certified_psi_x: float
    a_norm: float
    w_norm: float
    ledger: DiagnosticLedger

    @property
    def gammas(self) -> np.ndarray:
        """gamma_k = -min_j s_k(j), the care monitor of the divergence."""
        return 0.0 - self.divs.min(axis=1)

    @property
    def iters(self) -> int:
        return self.xs.shape[0]

    @property
    def mus(self) -> np.ndarray:
        """Scaled queue occupancies alpha * Q_k, the multiplier estimate."""
        return self.alpha * self.queues

    @property
    def reference(self) -> Trajectory:
        return Trajectory(alpha=self.alpha, lambdas=self.lambdas, xs=self.xs,
                          deltas=self.deltas, eps_norms=self.eps_norms,
                          f_xbar=self.f_xbar, seed=self.seed)

    def as_dual_result(self) -> DualAscentResult:
        return DualAscentResult(spec=self.spec, trajectory=self.reference,
                                ledger=self.ledger)


def run_network_sim(spec: ProblemSpec, arrivals, alpha: float, iters: int,
                    policy, seed: Optional[int] = None,
                    inner_tol: Optional[float] = None,
                    q0=None) -> NetworkSimResult:
    """Run the closed queue/scheduler loop for `iters` slots.

    Each slot: form mu_k = alpha * Q_k, solve the inner problem there,
    rewrite x_k as a point of the unscaled action hull (the duty slack
    1 - scale goes onto a zero action when the set has one, otherwise a
    fresh decomposition is solved), let the policy pick the discrete
    action, then advance the integer queues with that action plus the
    drawn arrivals and the reference multiplier with the continuous x_k
    and the same draw.  Deterministic per seed.
    """
    if isinstance(arrivals, PerturbationStream):
        arrivals = ArrivalProcess(arrivals)
    m, n = spec.num_constraints, spec.dim
    V = spec.actions.size
    if arrivals.dim != m:
        raise ContractViolation("arrival dimension mismatch")
    if not np.array_equal(arrivals.mean, spec.delta):
        raise ContractViolation(
            "arrival mean must equal the spec's mean perturbation")
    if alpha <= 0:
        raise ContractViolation("alpha must be positive")
    if iters < 1:
        raise ContractViolation("iters must be at least 1")
    pts = spec.actions.points
    if float(np.max(np.abs(pts - np.rint(pts)))) > INTEGER_TOL:
        raise ContractViolation(
            "queue simulation requires integer action points")
    if isinstance(policy, BlockPolicy) and policy.rule is not None \
            and not policy.rule.is_unrestricted():
        cap = 1.0 - 2.0 / (policy.T * V)
        if spec.scale > cap + 1e-12:
            raise ConfigError(
                f"scale {spec.scale} exceeds the reordering capacity "
                f"limit {cap} for block length {policy.T * V}")

    runner = policy.start(spec.actions)
    zero_rows = np.where(~np.any(pts != 0.0, axis=1))[0]
    zero_index = int(zero_rows[0]) if zero_rows.size else None

    rng = np.random.default_rng(seed)
    ledger = DiagnosticLedger(
        m=m, n=n,
        sigma_g=subgradient_norm_bound(spec, arrivals.support_bound()),
        sigma_delta_sq=arrivals.variance_bound())
    if q0 is None:
        Q = np.zeros(m, dtype=np.int64)
    else:
        Q = QueueState(q0).Q.copy()
    lam = alpha * Q.astype(float)
    A = spec.A

    queues = np.empty((iters + 1, m), dtype=np.int64)
    lambdas = np.empty((iters + 1, m))
    xs = np.empty((iters, n))
    deltas = np.empty((iters, m))
    actions_out = np.empty(iters, dtype=np.int64)
    eps_norms = np.empty(iters)
    f_xbar = np.empty(iters)
    divs = np.empty((iters, V))
    div_norms = np.empty(iters)
    queues[0] = Q
    lambdas[0] = lam

    div = np.zeros(V)
    xsum = np.zeros(n)
    for k in range(iters):
        mu = alpha * Q
        sol = solve_inner(spec, mu, tol=inner_tol)
        x = sol.x
        if spec.scale == 1.0:
            u_t = sol.u
        elif zero_index is not None:
            u_t = spec.scale * sol.u
            u_t[zero_index] += 1.0 - spec.scale
        else:
            u_t = decompose_to_simplex(spec.actions, 1.0, x)
        j = runner.select(u_t)
        y = pts[j]
        B = arrivals.sample(rng, k)
        g_k = A @ x + B
        eps = float(np.linalg.norm(mu - lam))
        ledger.record(lam, eps, x, g_k, B - spec.delta)

        actions_out[k] = j
        xs[k] = x
        deltas[k] = B
        eps_norms[k] = eps
        xsum += x
        f_xbar[k] = spec.objective.value(xsum / (k + 1))
        div += u_t
        div[j] -= 1.0
        divs[k] = div
        div_norms[k] = float(np.linalg.norm(div))

        Q = _advance(Q, A, y, B)
        lam = np.maximum(lam + alpha * g_k, 0.0)
        queues[k + 1] = Q
        lambdas[k + 1] = lam

    psi_u = float(policy.divergence_bound_u(V))
    w_norm = operator_norm(spec.actions.W)
    psi_x = psi_u * w_norm if math.isfinite(psi_u) else math.inf
    return NetworkSimResult(
        spec=spec, alpha=alpha, seed=seed, policy_kind=policy.kind,
        queues=queues, actions=actions_out, xs=xs, lambdas=lambdas,
        deltas=deltas, eps_norms=eps_norms, f_xbar=f_xbar, divs=divs,
        div_norms=div_norms, certified_psi_u=psi_u, certified_psi_x=psi_x,
        a_norm=operator_norm(A), w_norm=w_norm, ledger=ledger)


@dataclass(frozen=True)
class ContinuityReport:
    """Outcome of the multiplier/queue continuity check."""

    psi_x: float
    bound: float
    max_gap: float
    max_gap_slot: int
    max_ratio: float
    violations: int
    first_violation: Optional[int]
    growth_ratio: float
    ok: bool


def queue_continuity_check(result: NetworkSimResult,
                           psi: Optional[float] = None) -> ContinuityReport:
    """Check ||lambda_k - alpha Q_k||_2 <= 2 alpha ||A||_2 psi per slot.

    `psi` bounds the running ||sum(x_i - y_i)||_2 and defaults to the
    run's certified value.  A non-finite psi certifies nothing, so the
    report fails and carries the observed gap growth instead (the ratio
    of the worst gap in the second half of the run to the first half).
    """
    psi = result.certified_psi_x if psi is None else float(psi)
    gaps = np.linalg.norm(result.lambdas - result.alpha * result.queues,
                          axis=1)
    bound = 2.0 * result.alpha * result.a_norm * psi
    worst = int(np.argmax(gaps))
    max_gap = float(gaps[worst])
    half = gaps.shape[0] // 2
    first_half = float(np.max(gaps[:half])) if half > 0 else 0.0
    second_half = float(np.max(gaps[half:]))
    if second_half == 0.0:
        growth = 0.0
    elif first_half == 0.0:
        growth = math.inf
    else:
        growth = second_half / first_half
    if math.isfinite(bound):
        bad = np.flatnonzero(gaps > bound * (1.0 + 1e-12) + 1e-12)
        ok = bad.size == 0
    else:
        bad = np.array([], dtype=np.int64)
        ok = False
    if bound > 0 and math.isfinite(bound):
        max_ratio = max_gap / bound
    else:
        max_ratio = 0.0 if max_gap == 0.0 else math.inf
    return ContinuityReport(
        psi_x=psi, bound=bound, max_gap=max_gap, max_gap_slot=worst,
        max_ratio=max_ratio, violations=int(bad.size),
        first_violation=int(bad[0]) if bad.size else None,
        growth_ratio=growth, ok=ok)


@dataclass(frozen=True)
class StabilityReport:
    """Time-averaged queue occupancy and its growth trend."""

    checkpoints: tuple
    averages: np.ndarray
    slope: float
    slope_tol: float
    stable: bool


def stability_metric(result: NetworkSimResult, checkpoints=None,
                     slope_tol: float = STABILITY_SLOPE_TOL) -> StabilityReport:
    """Running averages (1/k) sum_{i<=k} Q_i and their trend.

    The averaged queue vector is reported at each checkpoint; the trend
    is the least-squares slope of the running average of the total
    occupancy over the final half of the run.  Stable means that slope
    does not exceed the tolerance (an emptying system, negative slope,
    is stable).
    """
    csum = np.cumsum(result.queues, axis=0, dtype=float)
    counts = np.arange(1, csum.shape[0] + 1, dtype=float)
    running = csum / counts[:, None]
    if checkpoints is None:
        checkpoints = default_checkpoints(result.iters)
    idx = np.minimum(np.asarray(checkpoints, dtype=np.int64),
                     running.shape[0] - 1)
    averages = running[idx]
    total = running.sum(axis=1)
    half = total.shape[0] // 2
    tail = total[half:]
    if tail.shape[0] < 2:
        slope = 0.0
    else:
        t = np.arange(tail.shape[0], dtype=float)
        slope = float(np.polyfit(t, tail, 1)[0])
    return StabilityReport(checkpoints=tuple(int(c) for c in checkpoints),
                           averages=averages, slope=slope,
                           slope_tol=slope_tol, stable=slope <= slope_tol)
