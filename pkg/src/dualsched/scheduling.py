"""Discrete action scheduling against a fractional target stream.

The continuous iterates live in X = c * conv(Y); a physical system can
only play one action y(j) per slot.  The selectors here keep the running
divergence s_k = sum_i (u_i - e_i) between the simplex weights u_i and
the chosen basis vectors e_i uniformly bounded:

  * myopic: pick every slot; -1 <= s_k <= V-1 and ||s_k||_2 <= C with
    C = sqrt(V) (V-1).
  * amortized: re-pick at most every tau slots, repeat in between; the
    same bounds scaled by tau.
  * block: collect T*V weights, emit a whole block chosen greedily so the
    carried residual stays in D = {1'd = 0, ||d||_inf <= 1}.

Every selection decrements a largest component of the working vector
(ties to the lowest index).  In every state these rules can reach, that
choice is also an argmin of ||w - e||_inf over the basis, and it is the
choice that provably preserves the bounds above.
"""

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import nnls

from . import _kernels
from .problem import (ActionSet, ContractViolation, DecompositionError,
                      DECOMPOSE_RESIDUAL_TOL, ScheduleInfeasibleError)


def divergence_bound(V: int) -> float:
    """C = sqrt(V) (V-1), the myopic bound on ||s_k||_2."""
    return float(np.sqrt(V) * (V - 1))


class AdmissibilityRule:
    """Pairwise predicate on consecutive actions.

    `allowed[i, j]` says action j may directly follow action i.  Rules
    should be reflexive on every action that is expected to repeat within
    a block; the reorderer treats a missing self-pair as "may not run".
    """

    def __init__(self, allowed: np.ndarray):
        allowed = np.asarray(allowed, dtype=bool)
        if allowed.ndim != 2 or allowed.shape[0] != allowed.shape[1]:
            raise ContractViolation("allowed must be a square boolean matrix")
        self.allowed = allowed

    @classmethod
    def all_pairs(cls, V: int) -> "AdmissibilityRule":
        return cls(np.ones((V, V), dtype=bool))

    @classmethod
    def from_pairs(cls, V: int, pairs: Sequence[tuple]) -> "AdmissibilityRule":
        """Build from an explicit allowed-pairs list [(i, j), ...]."""
        m = np.zeros((V, V), dtype=bool)
        for i, j in pairs:
            if not (0 <= i < V and 0 <= j < V):
                raise ContractViolation(f"pair ({i}, {j}) out of range")
            m[i, j] = True
        return cls(m)

    @property
    def size(self) -> int:
        return self.allowed.shape[0]

    def ok(self, i: int, j: int) -> bool:
        return bool(self.allowed[i, j])

    def is_unrestricted(self) -> bool:
        return bool(self.allowed.all())


@dataclass(frozen=True)
class SchedulerState:
    """Running state of the per-slot selectors.

    s is the divergence sum so far, last the most recent action index
    (None before the first pick).  For the amortized rule, tau_bar is the
    declared maximum re-pick period and since_update counts slots since
    the last actual update.
    """

    V: int
    s: np.ndarray
    steps: int = 0
    last: Optional[int] = None
    tau_bar: int = 1
    since_update: int = 0

    @classmethod
    def initial(cls, V: int, tau_bar: int = 1) -> "SchedulerState":
        if V < 1:
            raise ContractViolation("V must be at least 1")
        if tau_bar < 1:
            raise ContractViolation("tau_bar must be at least 1")
        return cls(V=V, s=np.zeros(V), tau_bar=tau_bar)


def _check_simplex_input(V: int, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (V,):
        raise ContractViolation(f"u must have {V} components")
    if abs(float(np.sum(u)) - 1.0) > 1e-9 or float(np.min(u)) < -1e-12:
        raise ContractViolation("u is not a point of the standard simplex")
    return u


def myopic_select(state: SchedulerState, u) -> tuple:
    """One myopic pick: decrement the largest component of s + u.

    Returns (action index, updated state).
    """
    u = _check_simplex_input(state.V, u)
    w = state.s + u
    j = int(_kernels.largest_component(w))
    w[j] -= 1.0
    new = replace(state, s=w, steps=state.steps + 1, last=j, since_update=0)
    return j, new


def amortized_select(state: SchedulerState, u, do_update: bool) -> tuple:
    """Myopic pick on update slots, repeat the last action otherwise.

    The gap between consecutive update slots must never exceed the
    declared tau_bar; the violation is raised at the first slot where
    that has provably happened.
    """
    u = _check_simplex_input(state.V, u)
    if state.last is None and not do_update:
        raise ContractViolation("first step must be an update step")
    if not do_update and state.since_update + 1 >= state.tau_bar:
        raise ContractViolation(
            f"update gap exceeds declared tau_bar={state.tau_bar} "
            f"at step {state.steps + 1}")
    w = state.s + u
    if do_update:
        j = int(_kernels.largest_component(w))
        since = 0
    else:
        j = state.last
        since = state.since_update + 1
    w[j] -= 1.0
    new = replace(state, s=w, steps=state.steps + 1, last=j,
                  since_update=since)
    return j, new


def gamma_monitor(state: SchedulerState) -> tuple:
    """(gamma_k, bound): backlog gamma_k = -min(s_k) and its divergence bound.

    The bound gamma_k * C with C = sqrt(V)(V-1) always dominates
    ||s_k||_2 (given 1's_k = 0); a violation can only mean the state was
    corrupted, so it raises.
    """
    gamma = float(-np.min(state.s))
    bound = gamma * divergence_bound(state.V)
    n2 = float(np.linalg.norm(state.s))
    if n2 > bound + 1e-9:
        raise ContractViolation(
            f"divergence {n2} exceeds gamma-derived bound {bound}")
    return gamma, bound


@dataclass
class BlockBuffer:
    """Accumulates T*V simplex weights and the carried residual.

    The carried residual starts at 0 (a point of D) and stays in D across
    block selections.
    """

    T: int
    V: int
    pending: list = field(default_factory=list)
    carried: np.ndarray = None

    def __post_init__(self):
        if self.T < 1 or self.V < 1:
            raise ContractViolation("T and V must be at least 1")
        if self.carried is None:
            self.carried = np.zeros(self.V)
        self.carried = np.asarray(self.carried, dtype=float)

    @property
    def length(self) -> int:
        return self.T * self.V

    def push(self, u) -> None:
        u = _check_simplex_input(self.V, u)
        if len(self.pending) >= self.length:
            raise ContractViolation("block buffer is already full")
        self.pending.append(u)

    @property
    def full(self) -> bool:
        return len(self.pending) == self.length


def block_select(buffer: BlockBuffer) -> list:
    """Empty a full buffer into T*V action indices.

    Greedy construction seeded with the carried residual: each pick
    decrements a largest component of carried + sum(u) - sum(picked).
    The updated carried residual is checked against D membership (sum
    zero, inf-norm at most one, up to float tolerance).
    """
    if not buffer.full:
        raise ContractViolation(
            f"buffer holds {len(buffer.pending)} of {buffer.length} weights")
    z = np.sum(buffer.pending, axis=0)
    r = buffer.carried + z
    idx = _kernels.block_greedy(r, buffer.length)
    if (abs(float(np.sum(r))) > buffer.length * 1e-12 + 1e-12
            or float(np.max(np.abs(r))) > 1.0 + 1e-9):
        raise ContractViolation(
            f"carried residual left D: {r}")
    buffer.carried = r
    buffer.pending = []
    return [int(j) for j in idx]


def reorder_block(actions: Sequence[int], rule: AdmissibilityRule,
                  prev: Optional[int] = None) -> list:
    """Reorder a block so every adjacent pair satisfies the rule.

    The first element must also be admissible after `prev` (the last
    action actually emitted before this block) when given.  The search
    is exhaustive with memoized dead ends, preferring lower action
    indices, so it is deterministic and raises ScheduleInfeasibleError
    exactly when no admissible permutation exists.
    """
    V = rule.size
    counts = [0] * V
    seq = []
    for a in actions:
        a = int(a)
        if not 0 <= a < V:
            raise ContractViolation(f"action index {a} out of range")
        counts[a] += 1
        seq.append(a)
    chain = seq if prev is None else [prev] + seq
    if all(rule.ok(i, j) for i, j in zip(chain, chain[1:])):
        return seq
    total = len(actions)
    dead = set()
    out = []

    def extend(counts_t, last, remaining):
        if remaining == 0:
            return True
        key = (counts_t, last)
        if key in dead:
            return False
        cs = list(counts_t)
        for j in range(V):
            if cs[j] == 0:
                continue
            if last is not None and not rule.ok(last, j):
                continue
            cs[j] -= 1
            out.append(j)
            if extend(tuple(cs), j, remaining - 1):
                return True
            out.pop()
            cs[j] += 1
        dead.add(key)
        return False

    if not extend(tuple(counts), prev, total):
        raise ScheduleInfeasibleError(
            f"no admissible ordering of counts {counts} after {prev}")
    return out


def _nnls_simplex(actions: ActionSet, scale: float, x) -> np.ndarray:
    """Least-squares simplex weights for x via augmented NNLS."""
    B = scale * actions.W
    rho = 1e6 * (1.0 + float(np.abs(B).max()))
    aug = np.vstack([B, np.full((1, actions.size), rho)])
    rhs = np.concatenate([np.asarray(x, dtype=float), [rho]])
    u, _ = nnls(aug, rhs)
    total = float(u.sum())
    if total <= 0.0:
        u = np.zeros(actions.size)
        u[0] = 1.0
        return u
    return u / total


def decompose_to_simplex(actions: ActionSet, scale: float, x,
                         tol: float = DECOMPOSE_RESIDUAL_TOL) -> np.ndarray:
    """Write x = scale * W u with u in the simplex, to residual <= tol.

    Solves the least-squares problem min_u ||x - scale W u||_2 over the
    simplex with the same away-step FW kernel as the inner solver.
    Raises DecompositionError (carrying the achieved residual) when x is
    certifiably outside the set or the residual tolerance was unmet.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (actions.dim,):
        raise ContractViolation(f"x must have {actions.dim} components")
    if not scale > 0:
        raise ContractViolation("scale must be positive")
    W = actions.W
    P = np.ascontiguousarray((scale * scale) * (W.T @ W))
    q = -2.0 * scale * (W.T @ x)
    const = float(x @ x)
    target = tol * tol - const
    cap = min(10 * actions.size * int(np.ceil(1.0 / tol)), 10 ** 6)
    u, phi, gap, _, code = _kernels.fw_quadratic(
        P, q, 1e-18, target, cap)
    residual = float(np.linalg.norm(x - actions.combine(scale, u)))
    lower = float(np.sqrt(max(phi - gap + const, 0.0)))
    if residual > tol and lower <= 10.0 * tol:
        # The quadratic-form stopping values are unreliable once tol^2
        # sits below the cancellation noise of phi + ||x||^2 (points of
        # norm around 1 or larger), so neither the success nor the
        # infeasibility branch can be trusted here.  Keep iterating from
        # the current point in short batches and judge by the directly
        # evaluated residual, which carries no cancellation.
        for _ in range(8):
            u = _kernels.fw_quadratic(P, q, 1e-18, -np.inf, 4096, u)[0]
            residual = float(np.linalg.norm(x - actions.combine(scale, u)))
            if residual <= tol:
                break
    if residual > tol:
        # FW can also stall outright on rank-deficient W'W (more actions
        # than dimensions).  Polish with an exact active-set solve of the
        # sum-to-one-augmented nonnegative least squares and keep
        # whichever point reconstructs better.
        u2 = _nnls_simplex(actions, scale, x)
        r2 = float(np.linalg.norm(x - actions.combine(scale, u2)))
        if r2 < residual:
            u, residual = u2, r2
    if residual > tol:
        if code == _kernels.FW_TARGET_UNREACHABLE and lower > tol:
            raise DecompositionError(
                f"point is outside the scaled hull "
                f"(distance at least {lower:.3e})", residual)
        raise DecompositionError(
            f"residual {residual:.3e} above tolerance {tol:.1e}", residual)
    return u


# ---------------------------------------------------------------------------
# Batch drivers.  These wrap the jitted kernels for the bulk invariant
# checks (millions of steps) where per-step Python objects would dominate.

@dataclass(frozen=True)
class RunStats:
    """Extremes of the running divergence over a batch run."""

    final_s: np.ndarray
    min_component: float
    max_component: float
    max_norm2: float


def run_myopic_random(V: int, steps: int, seed: int) -> RunStats:
    """Myopic rule over uniformly random simplex inputs."""
    s, mn, mx, n2 = _kernels.myopic_run_random(V, steps, seed)
    return RunStats(s, float(mn), float(mx), float(n2))


def run_myopic(u_stream: np.ndarray, s0=None) -> tuple:
    """Replay the myopic rule over the rows of u_stream.

    Returns (indices, RunStats)."""
    U = np.ascontiguousarray(np.asarray(u_stream, dtype=float))
    if U.ndim != 2:
        raise ContractViolation("u_stream must be (steps, V)")
    s0 = np.zeros(U.shape[1]) if s0 is None else np.asarray(s0, dtype=float)
    idx, s, mn, mx, n2 = _kernels.myopic_run(U, s0)
    return idx, RunStats(s, float(mn), float(mx), float(n2))


def run_amortized_random(V: int, steps: int, tau: int, seed: int) -> RunStats:
    """Amortized rule (update every tau slots) over random inputs."""
    if tau < 1:
        raise ContractViolation("tau must be at least 1")
    s, mn, mx, n2 = _kernels.amortized_run_random(V, steps, tau, seed)
    return RunStats(s, float(mn), float(mx), float(n2))


@dataclass(frozen=True)
class BlockChainStats:
    """Extremes over a chained sequence of block selections."""

    carried: np.ndarray
    max_carried_inf: float
    max_carried_sum_abs: float
    max_intra_inf: float


def run_block_chain_random(V: int, T: int, blocks: int,
                           seed: int) -> BlockChainStats:
    """Chain `blocks` random block selections, tracking worst residuals."""
    carried, ci, cs, ii = _kernels.block_chain_random(V, T, blocks, seed)
    return BlockChainStats(carried, float(ci), float(cs), float(ii))


def multiset_preserved(before: Sequence[int], after: Sequence[int]) -> bool:
    """True when two action lists contain the same indices with multiplicity."""
    return Counter(before) == Counter(after)
