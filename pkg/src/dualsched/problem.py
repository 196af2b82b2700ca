"""Problem data: action sets, constraint structure, objectives.

The optimization domain is X = c * conv(Y) for a finite list of action
points Y = {y(0), ..., y(V-1)} in R^n.  Everything downstream (inner
solves, dual ascent, discrete scheduling, queue simulation) works against
the `ProblemSpec` container defined here.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# Membership tolerances, shared across the package.
SIMPLEX_SUM_TOL = 1e-9       # |1'u - 1| for points of the simplex U
SIMPLEX_NONNEG_TOL = 1e-12   # u >= -tol componentwise
DIFFERENCE_INF_TOL = 1e-9    # ||d||_inf <= 1 + tol for the difference set D
DIFFERENCE_SUM_TOL = 1e-9    # |1'd| for the difference set D
DECOMPOSE_RESIDUAL_TOL = 1e-8  # ||x - c W u||_2 for domain membership


class ContractViolation(ValueError):
    """An operation was called outside its stated contract."""


class DecompositionError(RuntimeError):
    """A point could not be written as c * W u with u in the simplex."""

    def __init__(self, msg: str, residual: float):
        super().__init__(msg)
        self.residual = residual


class ScheduleInfeasibleError(RuntimeError):
    """No admissible ordering of a block exists under the given rule."""


class ConfigError(ValueError):
    """A scenario configuration failed validation."""


class DiagonalQuadratic:
    """f(x) = ||diag(weights) x||^2 = sum_j (weights_j * x_j)^2."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1:
            raise ContractViolation("diagonal weights must be a vector")
        self.weights = w
        self._w2 = w * w

    def value(self, x) -> float:
        return float(np.dot(self._w2, np.asarray(x, dtype=float) ** 2))

    def gradient(self, x) -> np.ndarray:
        return 2.0 * self._w2 * np.asarray(x, dtype=float)


class ActionSet:
    """Finite set of action points y(j) in R^n.

    Exposes the induced geometry used everywhere else: the point matrix W
    (n x V, one column per action), the standard simplex U, the basis E,
    and the bounded difference set D = {d : 1'd = 0, ||d||_inf <= 1}.
    """

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ContractViolation("points must be a nonempty (V, n) array")
        if not np.all(np.isfinite(pts)):
            raise ContractViolation("action points must be finite")
        for a in range(pts.shape[0]):
            for b in range(a + 1, pts.shape[0]):
                if np.array_equal(pts[a], pts[b]):
                    raise ContractViolation(
                        f"action points {a} and {b} are identical")
        self.points = pts
        self.W = np.ascontiguousarray(pts.T)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def vertex(self, j: int) -> np.ndarray:
        """Basis vector e_j of the simplex (a point of E)."""
        if not 0 <= j < self.size:
            raise ContractViolation(f"action index {j} out of range")
        e = np.zeros(self.size)
        e[j] = 1.0
        return e

    def in_simplex(self, u) -> bool:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.size,):
            return False
        return (abs(float(np.sum(u)) - 1.0) <= SIMPLEX_SUM_TOL
                and float(np.min(u)) >= -SIMPLEX_NONNEG_TOL)

    def in_difference_set(self, d) -> bool:
        d = np.asarray(d, dtype=float)
        if d.shape != (self.size,):
            return False
        return (abs(float(np.sum(d))) <= DIFFERENCE_SUM_TOL
                and float(np.max(np.abs(d))) <= 1.0 + DIFFERENCE_INF_TOL)

    def basis_index(self, u) -> Optional[int]:
        """Index j if u equals the basis vector e_j, else None."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.size,):
            return None
        j = int(np.argmax(u))
        e = np.zeros(self.size)
        e[j] = 1.0
        return j if np.allclose(u, e, atol=1e-12, rtol=0.0) else None

    def combine(self, scale: float, u) -> np.ndarray:
        """Map a simplex point to the domain: x = scale * W u."""
        return scale * (self.W @ np.asarray(u, dtype=float))


@dataclass
class ProblemSpec:
    """Constrained problem: min f(x) s.t. A x + delta <= 0, x in X.

    `delta` is the mean perturbation (the arrival-rate vector b in the
    queueing reading).  `slater_point`, when given, must satisfy every
    inequality strictly; only that margin is validated here, full domain
    membership of the point is checked on the scenario-loading path.
    Problems without one (an overload configuration, say) still run,
    but the multiplier-boundedness certificate is unavailable.
    """

    objective: object
    A: np.ndarray
    delta: np.ndarray
    actions: ActionSet
    scale: float
    slater_point: Optional[np.ndarray]
    name: str = field(default="")

    def __post_init__(self):
        self.A = np.ascontiguousarray(np.asarray(self.A, dtype=float))
        self.delta = np.asarray(self.delta, dtype=float)
        if self.A.ndim != 2:
            raise ContractViolation("A must be a matrix")
        m, n = self.A.shape
        if self.actions.dim != n:
            raise ContractViolation(
                f"A has {n} columns but actions live in R^{self.actions.dim}")
        if self.delta.shape != (m,):
            raise ContractViolation(
                f"delta must have {m} components, got {self.delta.shape}")
        if not self.scale > 0:
            raise ContractViolation("scale must be positive")
        if self.slater_point is not None:
            self.slater_point = np.asarray(self.slater_point, dtype=float)
            if self.slater_point.shape != (n,):
                raise ContractViolation("slater_point dimension mismatch")
            margin = slater_margin(self)
            if not margin > 0:
                raise ContractViolation(
                    f"slater point is not strictly feasible (margin {margin})")

    @property
    def num_constraints(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]


def eval_constraints(spec: ProblemSpec, x, delta=None) -> np.ndarray:
    """g(x) + delta = A x + delta, with dimension checking."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.dim,):
        raise ContractViolation(
            f"x must have {spec.dim} components, got shape {x.shape}")
    d = spec.delta if delta is None else np.asarray(delta, dtype=float)
    if d.shape != (spec.num_constraints,):
        raise ContractViolation(
            f"delta must have {spec.num_constraints} components")
    return spec.A @ x + d


def eval_lagrangian(spec: ProblemSpec, x, mu, delta=None) -> float:
    """L(x, mu, delta) = f(x) + mu'(A x + delta).

    mu must be componentwise nonnegative; a negative component is a
    contract violation (the dual iterates are projected, so a negative
    multiplier always indicates a caller bug).
    """
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (spec.num_constraints,):
        raise ContractViolation(
            f"mu must have {spec.num_constraints} components")
    if np.any(mu < 0):
        j = int(np.argmin(mu))
        raise ContractViolation(
            f"multiplier component {j} is negative ({mu[j]})")
    g = eval_constraints(spec, x, delta)
    return float(spec.objective.value(np.asarray(x, dtype=float)) + mu @ g)


def subgradient_norm_bound(spec: ProblemSpec, delta_support_bound) -> float:
    """Uniform bound on ||A x + delta_k||_2 over x in X and the stream.

    The linear map attains its maximum norm at a vertex of X, so the
    first term is max_j ||A (c y(j)) + delta||_2; the second adds the
    declared support radius of the perturbation around its mean.
    """
    b = np.asarray(delta_support_bound, dtype=float)
    if b.shape != (spec.num_constraints,):
        raise ContractViolation(
            f"support bound must have {spec.num_constraints} components")
    if np.any(b < 0):
        raise ContractViolation("support bound must be nonnegative")
    verts = spec.scale * spec.actions.points  # (V, n)
    vals = np.linalg.norm(verts @ spec.A.T + spec.delta, axis=1)
    return float(np.max(vals) + np.linalg.norm(b))


def slater_margin(spec: ProblemSpec) -> float:
    """min_j -(A xhat + delta)_j for the stored Slater point (must be > 0)."""
    if spec.slater_point is None:
        raise ContractViolation("the problem declares no Slater point")
    g = spec.A @ spec.slater_point + spec.delta
    return float(np.min(-g))


def operator_norm(A, tol: float = 1e-10, max_iter: int = 100000) -> float:
    """Spectral norm ||A||_2 by power iteration on A'A.

    Deterministic start (normalized row-sum direction with a fallback),
    stops when the Rayleigh estimate is stable to `tol` relative.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ContractViolation("operator_norm expects a matrix")
    if not np.any(A):
        return 0.0
    M = A.T @ A
    v = np.abs(A).sum(axis=0)
    if not np.any(v):
        v = np.ones(M.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = M @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = float(np.sqrt(nw))
        if abs(new - est) <= tol * max(new, 1.0):
            return new
        est = new
    return est
