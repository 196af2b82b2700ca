"""Inner Lagrangian minimization over the scaled action simplex.

For a multiplier mu >= 0 the inner problem is

    min_{x in X} f(x) + mu'(A x + delta),   X = c * conv(Y),

solved in simplex coordinates u (x = c W u) by Frank-Wolfe with away
steps: vertex LMO with lowest-index ties, exact line search for the
built-in quadratic family, Armijo backtracking for black-box objectives.
The returned duality-gap certificate bounds the suboptimality of the
returned point, which is what the epsilon accounting downstream consumes.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .problem import ContractViolation, DiagonalQuadratic, ProblemSpec

DEFAULT_TOL_SCALE = 1e-8   # default gap tolerance: scale * (1 + ||mu||_2)
ITER_CAP = 10 ** 6


@dataclass(frozen=True)
class InnerSolution:
    """Result of one inner solve.

    gap_certificate is the FW duality gap at x, an upper bound on
    f-suboptimality of the Lagrangian value; converged is False when the
    iteration cap was hit first (the certificate is still valid, just
    larger than requested).
    """

    x: np.ndarray
    u: np.ndarray
    gap_certificate: float
    converged: bool
    iterations: int


def default_tol(mu) -> float:
    return DEFAULT_TOL_SCALE * (1.0 + float(np.linalg.norm(mu)))


def iteration_cap(actions_count: int, tol: float) -> int:
    return min(10 * actions_count * math.ceil(1.0 / tol), ITER_CAP)


def quadratic_coefficients(spec: ProblemSpec, mu: np.ndarray):
    """(P, q) with phi(u) = u'Pu + q'u + const for diagonal quadratics."""
    W = spec.actions.W
    w2 = spec.objective.weights ** 2
    P = (spec.scale ** 2) * (W.T * w2) @ W
    q = spec.scale * (W.T @ (spec.A.T @ mu))
    return np.ascontiguousarray(P), q


def solve_inner(spec: ProblemSpec, mu, tol: float = None) -> InnerSolution:
    """Minimize L(., mu, spec.delta) over X to a certified duality gap.

    Deterministic for fixed (spec, mu, tol): fixed start at the first
    vertex, lowest-index tie-breaking throughout.  If the gap tolerance
    is not reached within the iteration cap the best iterate found is
    returned with converged=False and its achieved certificate.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (spec.num_constraints,):
        raise ContractViolation(
            f"mu must have {spec.num_constraints} components")
    if np.any(mu < 0):
        j = int(np.argmin(mu))
        raise ContractViolation(
            f"multiplier component {j} is negative ({mu[j]})")
    if tol is None:
        tol = default_tol(mu)
    if not tol > 0:
        raise ContractViolation("tol must be positive")
    cap = iteration_cap(spec.actions.size, tol)

    if isinstance(spec.objective, DiagonalQuadratic):
        P, q = quadratic_coefficients(spec, mu)
        u, _, gap, its, code = _kernels.fw_quadratic(P, q, tol, -np.inf, cap)
    else:
        u, gap, its, code = _generic_fw(spec, mu, tol, cap)

    x = spec.actions.combine(spec.scale, u)
    return InnerSolution(x=x, u=u, gap_certificate=float(gap),
                         converged=(code == _kernels.FW_GAP_OK),
                         iterations=int(its))


def epsilon_from_gap(xi: float, sigma_g: float) -> float:
    """Multiplier-error magnitude equivalent to an inner-solve gap xi.

    A point whose Lagrangian value is within xi of the exact minimum is
    indistinguishable (for the convergence ledger) from an exact solve at
    a multiplier perturbed by xi / (2 sigma_g) in norm.
    """
    if xi < 0:
        raise ContractViolation("gap must be nonnegative")
    if sigma_g <= 0:
        if xi == 0:
            return 0.0
        raise ContractViolation(
            "sigma_g must be positive when the gap is nonzero")
    return xi / (2.0 * sigma_g)


def hvalue(spec: ProblemSpec, lam, delta=None, tol: float = 1e-10):
    """Dual function h(lam, delta) = min_x L(x, lam, delta), with certificate.

    Returns (value, gap) where the exact h lies in [value - gap, value].
    delta defaults to the spec's mean perturbation.
    """
    sol = solve_inner(spec, lam, tol=tol)
    d = spec.delta if delta is None else np.asarray(delta, dtype=float)
    lam = np.asarray(lam, dtype=float)
    val = float(spec.objective.value(sol.x) + lam @ (spec.A @ sol.x + d))
    return val, sol.gap_certificate


def _generic_fw(spec: ProblemSpec, mu, tol, cap):
    """Away-step FW with Armijo backtracking for black-box objectives."""
    W = spec.actions.W
    c = spec.scale
    V = spec.actions.size
    Atmu = spec.A.T @ mu

    def phi(u):
        x = c * (W @ u)
        return spec.objective.value(x) + float(Atmu @ x)

    def grad_phi(u):
        x = c * (W @ u)
        return c * (W.T @ (spec.objective.gradient(x) + Atmu))

    u = np.zeros(V)
    u[0] = 1.0
    fu = phi(u)
    best = (u.copy(), np.inf)
    code = _kernels.FW_CAP
    it = 0
    while True:
        g = grad_phi(u)
        j_fw = int(np.argmin(g))
        gap = float(g @ u - g[j_fw])
        if gap < best[1]:
            best = (u.copy(), gap)
        if gap <= tol:
            code = _kernels.FW_GAP_OK
            break
        if it >= cap:
            break
        support = np.flatnonzero(u > 0)
        j_aw = support[int(np.argmax(g[support]))]
        gap_aw = float(g[j_aw] - g @ u)
        if gap_aw > gap and u[j_aw] < 1.0:
            d = u.copy()
            d[j_aw] -= 1.0
            gdir = gap_aw
            gamma_max = u[j_aw] / (1.0 - u[j_aw])
        else:
            d = -u.copy()
            d[j_fw] += 1.0
            gdir = gap
            gamma_max = 1.0
        gamma = min(gamma_max, 1.0)
        # Backtrack until sufficient decrease.
        accepted = False
        for _ in range(60):
            cand = u + gamma * d
            fc = phi(cand)
            if fc <= fu - 0.25 * gamma * gdir:
                accepted = True
                break
            gamma *= 0.5
        if not accepted:
            break
        u = cand
        u[u < 0] = 0.0
        fu = fc
        it += 1
    if best[1] <= gap:
        u = best[0]
        gap = best[1]
    return u, gap, it, code
