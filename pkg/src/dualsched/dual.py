"""Perturbed dual subgradient ascent and its convergence ledger.

The iteration, for step size alpha > 0:

    x_k  minimizes L(., mu_k, delta) over X with mu_k = lam_k + eps_k
    lam_{k+1} = [lam_k + alpha (A x_k + delta_k)]+

where delta_k is a random perturbation with mean delta and eps_k is a
multiplier error (zero, injected, or identified from a queue process).
The ledger accumulates every quantity the convergence statements need,
so the telescoping inequality and the four closed-form bounds can be
checked, not assumed, on any run.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .inner import hvalue, solve_inner
from .problem import ContractViolation, ProblemSpec, subgradient_norm_bound

EPS_SOURCES = ("none", "injected-sequence", "from-queue-identification")


@dataclass(frozen=True)
class DualState:
    """One point of the dual trajectory."""

    lam: np.ndarray
    eps: np.ndarray
    alpha: float
    k: int = 1

    def __post_init__(self):
        if self.alpha <= 0:
            raise ContractViolation("alpha must be positive")
        if np.any(np.asarray(self.lam) < 0):
            raise ContractViolation("lam must be componentwise nonnegative")
        if np.any(np.asarray(self.lam) + np.asarray(self.eps) < 0):
            raise ContractViolation(
                "mu = lam + eps has a negative component")

    @property
    def mu(self) -> np.ndarray:
        return self.lam + self.eps


def dual_step(state: DualState, subgrad) -> DualState:
    """lam <- [lam + alpha * subgrad]+, step counter advanced.

    eps is carried unchanged; the caller sets it separately before the
    next inner solve.
    """
    g = np.asarray(subgrad, dtype=float)
    if g.shape != state.lam.shape:
        raise ContractViolation("subgradient dimension mismatch")
    lam = np.maximum(state.lam + state.alpha * g, 0.0)
    return DualState(lam=lam, eps=state.eps, alpha=state.alpha, k=state.k + 1)


class PerturbationStream:
    """Per-coordinate random perturbation around a fixed mean.

    Coordinates are independent; each is either a constant or a
    Bernoulli draw (value in {0, 1} with the given success probability).
    A custom generator can be supplied, but then the mean, a variance
    bound, and a support bound must be declared up front: streams with
    undeclared (possibly unbounded) support are rejected because every
    guarantee downstream consumes those bounds.
    """

    def __init__(self, kinds: Sequence[tuple],
                 custom: Optional[Callable] = None,
                 custom_mean=None, custom_variance: float = None,
                 custom_support=None):
        if custom is not None:
            self._custom = custom
            self.mean = np.asarray(custom_mean, dtype=float)
            if custom_variance is None or custom_support is None:
                raise ContractViolation(
                    "custom streams must declare variance and support bounds")
            self._var = float(custom_variance)
            self._support = np.asarray(custom_support, dtype=float)
            self.kinds = None
            return
        self._custom = None
        self.kinds = []
        means = []
        var = 0.0
        support = []
        for kind, value in kinds:
            value = float(value)
            if kind == "constant":
                means.append(value)
                support.append(0.0)
            elif kind == "bernoulli":
                if not 0.0 <= value <= 1.0:
                    raise ContractViolation(
                        f"bernoulli mean {value} outside [0, 1]")
                means.append(value)
                var += value * (1.0 - value)
                support.append(max(value, 1.0 - value))
            else:
                raise ContractViolation(f"unknown stream kind '{kind}'")
            self.kinds.append((kind, value))
        self.mean = np.array(means)
        self._var = var
        self._support = np.array(support)

    @classmethod
    def constant(cls, delta) -> "PerturbationStream":
        return cls([("constant", v) for v in np.asarray(delta, dtype=float)])

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def variance_bound(self) -> float:
        """sigma_delta^2: bound on E||delta_k - delta||^2."""
        return self._var

    def support_bound(self) -> np.ndarray:
        """Componentwise bound on |delta_k - delta|."""
        return self._support.copy()

    def is_deterministic(self) -> bool:
        if self._custom is not None:
            return self._var == 0.0 and not np.any(self._support)
        return all(k == "constant" for k, _ in self.kinds)

    def sample(self, rng: np.random.Generator, k: int = 0) -> np.ndarray:
        if self._custom is not None:
            d = np.asarray(self._custom(k, rng), dtype=float)
            if d.shape != self.mean.shape:
                raise ContractViolation("custom stream dimension mismatch")
            return d
        out = np.empty(self.dim)
        for i, (kind, value) in enumerate(self.kinds):
            if kind == "constant":
                out[i] = value
            else:
                out[i] = 1.0 if rng.random() < value else 0.0
        return out


@dataclass
class DiagnosticLedger:
    """Running sums behind the telescoping inequality and the bounds.

    With g_i = A x_i + delta (mean perturbation!), d_i = delta_i - delta:

      gamma_a = (1/2k) sum ||g_i + d_i||^2    (subgradient energy)
      gamma_b = (1/2k) sum ||d_i||^2
      gamma_c = (1/k)  sum d_i'(g_i + d_i)
      gamma_d = (2/k)  sum ||eps_i|| ||g_i + d_i||
      gamma_e(theta) = (1/k) sum (lam_i - theta)' d_i

    The theta-dependent term is kept as two sums so any reference point
    can be queried after the fact.
    """

    m: int
    n: int
    sigma_g: float
    sigma_delta_sq: float
    k: int = 0
    sum_g2: float = 0.0
    sum_d2: float = 0.0
    sum_dg: float = 0.0
    sum_eg: float = 0.0
    sum_eps: float = 0.0
    sum_ld: float = 0.0
    sum_d: np.ndarray = None
    sum_x: np.ndarray = None
    sum_lam: np.ndarray = None

    def __post_init__(self):
        if self.sum_d is None:
            self.sum_d = np.zeros(self.m)
        if self.sum_x is None:
            self.sum_x = np.zeros(self.n)
        if self.sum_lam is None:
            self.sum_lam = np.zeros(self.m)

    def record(self, lam, eps_norm, x, g_plus_delta_k, delta_dev):
        """Account one iteration; g_plus_delta_k = A x_k + delta_k."""
        self.k += 1
        g2 = float(g_plus_delta_k @ g_plus_delta_k)
        self.sum_g2 += g2
        d2 = float(delta_dev @ delta_dev)
        self.sum_d2 += d2
        self.sum_dg += float(delta_dev @ g_plus_delta_k)
        self.sum_eg += eps_norm * math.sqrt(g2)
        self.sum_eps += eps_norm
        self.sum_ld += float(lam @ delta_dev)
        self.sum_d += delta_dev
        self.sum_x += x
        self.sum_lam += lam

    @property
    def gamma_a(self) -> float:
        return self.sum_g2 / (2.0 * self.k)

    @property
    def gamma_b(self) -> float:
        return self.sum_d2 / (2.0 * self.k)

    @property
    def gamma_c(self) -> float:
        return self.sum_dg / self.k

    @property
    def gamma_d(self) -> float:
        return 2.0 * self.sum_eg / self.k

    def gamma_e(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return (self.sum_ld - float(theta @ self.sum_d)) / self.k

    def gamma_total(self, alpha: float, theta) -> float:
        return (alpha * (self.gamma_a + self.gamma_b + self.gamma_c)
                + self.gamma_d + self.gamma_e(theta))

    @property
    def x_bar(self) -> np.ndarray:
        return self.sum_x / self.k

    @property
    def lam_bar(self) -> np.ndarray:
        return self.sum_lam / self.k

    @property
    def mean_eps(self) -> float:
        return self.sum_eps / self.k


@dataclass
class Trajectory:
    """Arrays of one dual-ascent run (lambdas has iters+1 rows)."""

    alpha: float
    lambdas: np.ndarray
    xs: np.ndarray
    deltas: np.ndarray
    eps_norms: np.ndarray
    f_xbar: np.ndarray
    seed: Optional[int]

    @property
    def iters(self) -> int:
        return self.xs.shape[0]

    def x_bar(self, k: Optional[int] = None) -> np.ndarray:
        k = self.iters if k is None else k
        return self.xs[:k].mean(axis=0)

    def lam_bar(self, k: Optional[int] = None) -> np.ndarray:
        k = self.iters if k is None else k
        return self.lambdas[:k].mean(axis=0)


@dataclass
class DualAscentResult:
    spec: ProblemSpec
    trajectory: Trajectory
    ledger: DiagnosticLedger


def run_dual_ascent(spec: ProblemSpec, stream: PerturbationStream,
                    alpha: float, iters: int,
                    eps_source: str = "none",
                    eps_fn: Optional[Callable] = None,
                    lam0=None, seed: Optional[int] = 0,
                    inner_tol: Optional[float] = None,
                    policy=None) -> DualAscentResult:
    """Run the perturbed dual ascent for `iters` iterations.

    eps_source selects how the multiplier error arises:
      * "none": eps_k = 0;
      * "injected-sequence": eps_fn(k, lam_k, rng) supplies eps_k (1-based
        k); mu_k = lam_k + eps_k must stay nonnegative or the run aborts;
      * "from-queue-identification": the error is alpha Q_k - lam_k for
        the integer queue process driven by the discrete actions of
        `policy`; delegated to the queue simulator, which requires an
        integer-valued stream.

    Fully deterministic given the seed.
    """
    if eps_source not in EPS_SOURCES:
        raise ContractViolation(
            f"eps_source must be one of {EPS_SOURCES}, got '{eps_source}'")
    if iters < 1:
        raise ContractViolation("iters must be at least 1")
    if alpha <= 0:
        raise ContractViolation("alpha must be positive")
    if stream.dim != spec.num_constraints:
        raise ContractViolation("stream dimension mismatch")
    if not np.allclose(stream.mean, spec.delta, atol=0.0, rtol=0.0):
        raise ContractViolation(
            "stream mean must equal the spec's mean perturbation")

    if eps_source == "from-queue-identification":
        from . import queuesim  # deferred: the coupling lives there
        if policy is None:
            raise ContractViolation(
                "queue identification requires an action policy")
        sim = queuesim.run_network_sim(
            spec, queuesim.ArrivalProcess(stream), alpha, iters,
            policy=policy, seed=seed, inner_tol=inner_tol)
        return DualAscentResult(spec=spec, trajectory=sim.reference,
                                ledger=sim.ledger)

    m, n = spec.num_constraints, spec.dim
    lam = np.zeros(m) if lam0 is None else np.asarray(lam0, dtype=float)
    if lam.shape != (m,) or np.any(lam < 0):
        raise ContractViolation("lam0 must be a nonnegative m-vector")
    rng = np.random.default_rng(seed)
    sigma_g = subgradient_norm_bound(spec, stream.support_bound())
    ledger = DiagnosticLedger(m=m, n=n, sigma_g=sigma_g,
                              sigma_delta_sq=stream.variance_bound())

    lambdas = np.empty((iters + 1, m))
    xs = np.empty((iters, n))
    deltas = np.empty((iters, m))
    eps_norms = np.empty(iters)
    f_xbar = np.empty(iters)
    lambdas[0] = lam
    xbar = np.zeros(n)

    for k in range(1, iters + 1):
        if eps_source == "injected-sequence":
            if eps_fn is None:
                raise ContractViolation("injected-sequence needs eps_fn")
            eps = np.asarray(eps_fn(k, lam, rng), dtype=float)
            if eps.shape != (m,):
                raise ContractViolation("eps dimension mismatch")
        else:
            eps = np.zeros(m)
        mu = lam + eps
        if np.any(mu < 0):
            j = int(np.argmin(mu))
            raise ContractViolation(
                f"mu component {j} negative ({mu[j]}) at iteration {k}")
        sol = solve_inner(spec, mu, tol=inner_tol)
        delta_k = stream.sample(rng, k)
        subgrad = spec.A @ sol.x + delta_k
        eps_norm = float(np.linalg.norm(eps))
        ledger.record(lam, eps_norm, sol.x, subgrad, delta_k - spec.delta)

        xs[k - 1] = sol.x
        deltas[k - 1] = delta_k
        eps_norms[k - 1] = eps_norm
        xbar += (sol.x - xbar) / k
        f_xbar[k - 1] = spec.objective.value(xbar)
        lam = np.maximum(lam + alpha * subgrad, 0.0)
        lambdas[k] = lam

    traj = Trajectory(alpha=alpha, lambdas=lambdas, xs=xs, deltas=deltas,
                      eps_norms=eps_norms, f_xbar=f_xbar, seed=seed)
    return DualAscentResult(spec=spec, trajectory=traj, ledger=ledger)


def default_checkpoints(iters: int) -> list:
    """Powers of ten up to the run length, always including the end."""
    pts = [10 ** p for p in range(2, 10) if 10 ** p <= iters]
    if not pts or pts[-1] != iters:
        pts.append(iters)
    return pts


@dataclass(frozen=True)
class LedgerCheckRow:
    k: int
    lhs: float
    rhs: float
    slack: float
    ok: bool


@dataclass(frozen=True)
class LedgerCheckReport:
    theta: np.ndarray
    rows: list

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    @property
    def violations(self) -> list:
        return [r.k for r in self.rows if not r.ok]


def lemma1_ledger_check(result: DualAscentResult, theta,
                        checkpoints: Optional[Sequence[int]] = None,
                        inner_tol: float = 1e-10) -> LedgerCheckReport:
    """Check the telescoping dual inequality at the given checkpoints.

    For any theta >= 0, the running dual average must satisfy

      -||lam_1 - theta||^2 / (2 alpha k) - Gamma(theta, k)
          <= (1/k) sum_{i<=k} h(lam_i, delta) - h(theta, delta),

    where Gamma collects the ledger terms.  Both h sums are evaluated by
    high-accuracy inner solves whose certificates widen the allowed slack
    (1e-6 relative plus the certificate total), so an honest float
    comparison is possible.
    """
    return lemma1_ledger_reports(result, [theta], checkpoints, inner_tol)[0]


def lemma1_ledger_reports(result: DualAscentResult, thetas,
                          checkpoints: Optional[Sequence[int]] = None,
                          inner_tol: float = 1e-10) -> list:
    """lemma1_ledger_check for several reference points at once.

    The per-iterate dual evaluations dominate the cost and do not depend
    on theta, so they are computed once and shared.
    """
    spec = result.spec
    traj = result.trajectory
    thetas = [np.asarray(t, dtype=float) for t in thetas]
    for theta in thetas:
        if theta.shape != (spec.num_constraints,) or np.any(theta < 0):
            raise ContractViolation("theta must be a nonnegative m-vector")
    if checkpoints is None:
        checkpoints = default_checkpoints(traj.iters)
    checkpoints = sorted(set(int(k) for k in checkpoints))
    if checkpoints[0] < 1 or checkpoints[-1] > traj.iters:
        raise ContractViolation("checkpoints out of range")

    alpha = traj.alpha
    kmax = checkpoints[-1]
    hvals = np.empty(kmax)
    hgaps = np.empty(kmax)
    for i in range(kmax):
        hvals[i], hgaps[i] = hvalue(spec, traj.lambdas[i], tol=inner_tol)

    # Recompute the Gamma pieces cumulatively from the stored arrays so a
    # single pass serves every checkpoint.
    subg = traj.xs[:kmax] @ spec.A.T + traj.deltas[:kmax]
    dev = traj.deltas[:kmax] - spec.delta
    g2 = np.einsum("ij,ij->i", subg, subg)
    d2 = np.einsum("ij,ij->i", dev, dev)
    dg = np.einsum("ij,ij->i", dev, subg)
    eg = traj.eps_norms[:kmax] * np.sqrt(g2)
    ld = np.einsum("ij,ij->i", traj.lambdas[:kmax], dev)

    cumsum = np.cumsum
    c_g2, c_d2, c_dg = cumsum(g2), cumsum(d2), cumsum(dg)
    c_eg, c_ld = cumsum(eg), cumsum(ld)
    c_dev = cumsum(dev, axis=0)
    c_h, c_hgap = cumsum(hvals), cumsum(hgaps)
    lam1 = traj.lambdas[0]

    reports = []
    for theta in thetas:
        h_theta, gap_theta = hvalue(spec, theta, tol=inner_tol)
        rows = []
        for k in checkpoints:
            gamma = (alpha * (c_g2[k - 1] / (2 * k) + c_d2[k - 1] / (2 * k)
                              + c_dg[k - 1] / k)
                     + 2.0 * c_eg[k - 1] / k
                     + (c_ld[k - 1] - float(theta @ c_dev[k - 1])) / k)
            lhs = -float(np.sum((lam1 - theta) ** 2)) / (2 * alpha * k) - gamma
            rhs = c_h[k - 1] / k - h_theta
            slack = c_hgap[k - 1] / k + gap_theta + 1e-6 * (1.0 + abs(rhs))
            rows.append(LedgerCheckRow(k=k, lhs=lhs, rhs=rhs, slack=slack,
                                       ok=lhs <= rhs + slack))
        reports.append(LedgerCheckReport(theta=theta, rows=rows))
    return reports


@dataclass(frozen=True)
class ClaimCheck:
    bound: float
    empirical: float
    slack: float
    ok: bool


@dataclass(frozen=True)
class BoundCertificate:
    """The four closed-form guarantees against their empirical values.

    upper_gap:      E f(x_bar_k) - f*  <=  bound         (claim i)
    lower_gap:      E f(x_bar_k) - f*  >=  bound         (claim ii)
    violation:      ||[E(A x_bar_k + delta)]+||_2 <= bound  (claim iii)
    multiplier:     ||E lam_bar_k||_2 <= bound           (claim iv)

    Empirical sides average R independent runs; each check carries a
    Monte-Carlo slack of 3 sigma_hat / sqrt(R).  The multiplier check
    needs a Slater point and is None when the problem declares none.
    """

    k: int
    runs: int
    alpha: float
    theta_const: float
    omega: float
    upper_gap: ClaimCheck
    lower_gap: ClaimCheck
    violation: ClaimCheck
    multiplier: Optional[ClaimCheck]

    @property
    def ok(self) -> bool:
        return (self.upper_gap.ok and self.lower_gap.ok
                and self.violation.ok
                and (self.multiplier is None or self.multiplier.ok))

    def to_dict(self) -> dict:
        def cc(c):
            return {"bound": c.bound, "empirical": c.empirical,
                    "slack": c.slack, "ok": bool(c.ok)}
        return {"k": self.k, "runs": self.runs, "alpha": self.alpha,
                "theta_const": self.theta_const, "omega": self.omega,
                "upper_gap": cc(self.upper_gap),
                "lower_gap": cc(self.lower_gap),
                "violation": cc(self.violation),
                "multiplier": None if self.multiplier is None
                else cc(self.multiplier)}


def theorem2_bounds(results: Sequence[DualAscentResult], lambda_star,
                    f_star: float, k: Optional[int] = None,
                    h_star: Optional[float] = None) -> BoundCertificate:
    """Evaluate the four closed-form bounds on R seeded runs.

    lambda_star and f_star come from the fluid oracle.  h_star defaults
    to f_star (strong duality); passing a looser dual value is allowed
    and simply loosens the multiplier bound.  All runs must share the
    problem, step size, and starting multiplier.
    """
    if not results:
        raise ContractViolation("need at least one run")
    spec = results[0].spec
    alpha = results[0].trajectory.alpha
    lam1 = results[0].trajectory.lambdas[0]
    for r in results[1:]:
        if r.trajectory.alpha != alpha:
            raise ContractViolation("runs mix step sizes")
        if not np.array_equal(r.trajectory.lambdas[0], lam1):
            raise ContractViolation("runs mix starting multipliers")
    k = results[0].trajectory.iters if k is None else int(k)
    lambda_star = np.asarray(lambda_star, dtype=float)
    h_star = f_star if h_star is None else float(h_star)
    R = len(results)

    sigma_g = results[0].ledger.sigma_g
    sigma_d2 = results[0].ledger.sigma_delta_sq
    theta_const = sigma_g ** 2 + sigma_d2

    # Per-run samples at horizon k.
    f_samples = np.array([r.trajectory.f_xbar[k - 1] for r in results])
    xbars = np.array([r.trajectory.x_bar(k) for r in results])
    lambars = np.array([r.trajectory.lam_bar(k) for r in results])
    eps_sums = np.array([float(np.sum(r.trajectory.eps_norms[:k]))
                         for r in results])

    eps_term = 2.0 * float(np.mean(eps_sums)) * sigma_g / k
    lam1_n2 = float(np.sum(lam1 ** 2))
    omega = (float(np.sum((lam1 - lambda_star) ** 2))
             + alpha ** 2 * theta_const * k
             + 2.0 * alpha * float(np.mean(eps_sums)) * sigma_g)
    sqrt_omega = math.sqrt(max(omega, 0.0))
    lam_star_n = float(np.linalg.norm(lambda_star))

    mean_gap = float(np.mean(f_samples)) - f_star
    sd = float(np.std(f_samples, ddof=1)) if R > 1 else 0.0
    mc_f = 3.0 * sd / math.sqrt(R)

    bound_i = alpha * theta_const / 2.0 + lam1_n2 / (2 * alpha * k) + eps_term
    upper = ClaimCheck(bound=bound_i, empirical=mean_gap, slack=mc_f,
                       ok=mean_gap <= bound_i + mc_f)

    mean_lambar = lambars.mean(axis=0)
    lambar_n = float(np.linalg.norm(mean_lambar))
    bound_ii = -(omega + lambar_n * (lam_star_n + sqrt_omega)) / (alpha * k)
    lower = ClaimCheck(bound=bound_ii, empirical=mean_gap, slack=mc_f,
                       ok=mean_gap >= bound_ii - mc_f)

    mean_viol = np.maximum(xbars.mean(axis=0) @ spec.A.T + spec.delta, 0.0)
    viol_n = float(np.linalg.norm(mean_viol))
    comp_sd = (xbars @ spec.A.T + spec.delta).std(axis=0, ddof=1) \
        if R > 1 else np.zeros(spec.num_constraints)
    mc_v = 3.0 * float(np.linalg.norm(comp_sd)) / math.sqrt(R)
    bound_iii = (lam_star_n + sqrt_omega) / (alpha * k)
    violation = ClaimCheck(bound=bound_iii, empirical=viol_n, slack=mc_v,
                           ok=viol_n <= bound_iii + mc_v)

    if spec.slater_point is not None:
        from .problem import slater_margin
        upsilon = slater_margin(spec)
        f_hat = float(spec.objective.value(spec.slater_point))
        bound_iv = (f_hat - h_star + omega / (alpha * k)) / upsilon
        lam_sd = (np.linalg.norm(lambars, axis=1).std(ddof=1)
                  if R > 1 else 0.0)
        mc_l = 3.0 * float(lam_sd) / math.sqrt(R)
        multiplier = ClaimCheck(bound=bound_iv, empirical=lambar_n,
                                slack=mc_l, ok=lambar_n <= bound_iv + mc_l)
    else:
        multiplier = None

    return BoundCertificate(k=k, runs=R, alpha=alpha,
                            theta_const=theta_const, omega=omega,
                            upper_gap=upper, lower_gap=lower,
                            violation=violation, multiplier=multiplier)
