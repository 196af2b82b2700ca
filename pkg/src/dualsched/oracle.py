"""Brute-force fluid optimum with KKT and duality-gap certificates.

Gap metrics everywhere else reference the values produced here, so this
module favors transparency over speed: a barycentric grid over the
domain simplex is refined until the hull diameter in x-space drops
below the requested tolerance, the incumbent is polished by solving the
active-set KKT system exactly, multipliers come from nonnegative least
squares on the stationarity condition, and the final certificate is the
duality gap against the dual value at those multipliers.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from .inner import hvalue
from .problem import (ContractViolation, DecompositionError, ProblemSpec,
                      eval_constraints, operator_norm)
from .scheduling import decompose_to_simplex

GRID_DIVISIONS = 12
FEASIBILITY_TOL = 1e-9
ACTIVE_TOL = 1e-7
MAX_LEVELS = 200


@dataclass
class OracleResult:
    """Certified fluid optimum of min f(x) s.t. A x + delta <= 0, x in X."""

    x_star: np.ndarray
    f_star: float
    lambda_star: np.ndarray
    h_star: float
    duality_gap: float
    stationarity: float
    complementarity: float
    feasibility: float
    active: tuple
    levels: int
    hull_diameter: float
    polished: bool
    reference_dual: Optional[np.ndarray] = None
    reference_gap: Optional[float] = None
    notes: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        """All first-order certificates within tolerance."""
        return (self.feasibility <= FEASIBILITY_TOL
                and self.duality_gap <= 1e-6
                and self.stationarity <= 1e-6
                and self.complementarity <= 1e-6)

    def to_dict(self) -> dict:
        out = {
            "x_star": [float(v) for v in self.x_star],
            "f_star": float(self.f_star),
            "lambda_star": [float(v) for v in self.lambda_star],
            "h_star": float(self.h_star),
            "duality_gap": float(self.duality_gap),
            "stationarity": float(self.stationarity),
            "complementarity": float(self.complementarity),
            "feasibility": float(self.feasibility),
            "active": list(self.active),
            "levels": int(self.levels),
            "hull_diameter": float(self.hull_diameter),
            "polished": bool(self.polished),
            "certified": bool(self.certified),
            "notes": list(self.notes),
        }
        if self.reference_dual is not None:
            out["reference_dual"] = [float(v) for v in self.reference_dual]
            out["reference_gap"] = float(self.reference_gap)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "OracleResult":
        ref = data.get("reference_dual")
        return cls(
            x_star=np.asarray(data["x_star"], dtype=float),
            f_star=float(data["f_star"]),
            lambda_star=np.asarray(data["lambda_star"], dtype=float),
            h_star=float(data["h_star"]),
            duality_gap=float(data["duality_gap"]),
            stationarity=float(data["stationarity"]),
            complementarity=float(data["complementarity"]),
            feasibility=float(data["feasibility"]),
            active=tuple(data["active"]),
            levels=int(data["levels"]),
            hull_diameter=float(data["hull_diameter"]),
            polished=bool(data["polished"]),
            reference_dual=None if ref is None else np.asarray(ref, float),
            reference_gap=data.get("reference_gap"),
            notes=list(data.get("notes", [])),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "OracleResult":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _compositions(total: int, parts: int):
    """All nonnegative integer vectors of the given length summing to total."""
    for cuts in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        comp = []
        for c in cuts:
            comp.append(c - prev - 1)
            prev = c
        comp.append(total + parts - 2 - prev)
        yield comp


def _grid_best(spec: ProblemSpec, hull: np.ndarray, divisions: int):
    """Scan the barycentric grid of the hull; prefer feasible points.

    Returns (best weights, best objective, least-violating weights),
    all in hull-barycentric coordinates.
    """
    weights = np.array(list(_compositions(divisions, hull.shape[0])),
                       dtype=float) / divisions
    us = weights @ hull
    best_w, best_f = None, math.inf
    back_w, back_v = None, math.inf
    for w, u in zip(weights, us):
        x = spec.actions.combine(spec.scale, u)
        g = spec.A @ x + spec.delta
        worst = float(np.max(g))
        if worst <= FEASIBILITY_TOL:
            f = spec.objective.value(x)
            if f < best_f:
                best_w, best_f = w, f
        elif worst < back_v:
            back_w, back_v = w, worst
    return best_w, best_f, back_w


def _window(hull: np.ndarray, center_w: np.ndarray, pad: float) -> np.ndarray:
    """Sub-simplex of the hull covering a padded cell around the center.

    The window floors each barycentric coordinate at center - pad, which
    keeps every grid neighbor of the center inside while shrinking the
    span, and stays valid arbitrarily close to the hull boundary (where
    a plain contraction toward the center would exclude the optimum).
    """
    floor = np.maximum(center_w - pad, 0.0)
    span = 1.0 - float(np.sum(floor))
    return floor @ hull + span * hull


def _hull_diameter_x(spec: ProblemSpec, hull: np.ndarray) -> float:
    xs = np.array([spec.actions.combine(spec.scale, v) for v in hull])
    d = 0.0
    for i in range(xs.shape[0]):
        for j in range(i + 1, xs.shape[0]):
            d = max(d, float(np.linalg.norm(xs[i] - xs[j])))
    return d


def _multipliers(spec: ProblemSpec, x: np.ndarray, active: list):
    """Nonnegative least-squares fit of the stationarity condition."""
    grad = spec.objective.gradient(x)
    lam = np.zeros(spec.num_constraints)
    if active:
        sub = spec.A[active]
        coef, _ = nnls(sub.T, -grad)
        lam[active] = coef
    residual = float(np.linalg.norm(spec.A.T @ lam + grad))
    return lam, residual


def _polish(spec: ProblemSpec, x0: np.ndarray, active: list):
    """Solve the active-set KKT system exactly and vet the solution.

    Returns (x, lam, True) when the polished point is feasible, inside
    the domain, not worse than the incumbent, and has nonnegative
    multipliers; otherwise (x0, None, False).  Drops active rows with
    negative multipliers and retries, since the grid's active-set guess
    can overshoot.
    """
    n = spec.dim
    act = list(active)
    w2 = getattr(spec.objective, "weights", None)
    if w2 is None:
        return x0, None, False
    d = 2.0 * np.asarray(w2, dtype=float) ** 2
    for _ in range(len(act) + 1):
        size = n + len(act)
        kkt = np.zeros((size, size))
        kkt[:n, :n] = np.diag(d)
        rhs = np.zeros(size)
        if act:
            sub = spec.A[act]
            kkt[:n, n:] = sub.T
            kkt[n:, :n] = sub
            rhs[n:] = -spec.delta[act]
        try:
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        except np.linalg.LinAlgError:
            return x0, None, False
        x = sol[:n]
        mult = sol[n:]
        if mult.size and float(np.min(mult)) < -1e-9:
            act.pop(int(np.argmin(mult)))
            continue
        g = eval_constraints(spec, x)
        if float(np.max(g, initial=-math.inf)) > FEASIBILITY_TOL:
            return x0, None, False
        try:
            decompose_to_simplex(spec.actions, spec.scale, x, tol=1e-8)
        except (DecompositionError, ContractViolation):
            return x0, None, False
        if spec.objective.value(x) > spec.objective.value(x0) + 1e-9:
            return x0, None, False
        lam = np.zeros(spec.num_constraints)
        lam[act] = np.maximum(mult, 0.0)
        return x, lam, True
    return x0, None, False


def fluid_oracle(spec: ProblemSpec, x_tol: float = 1e-6,
                 reference_dual=None) -> OracleResult:
    """Certified solve of the fluid problem by grid refinement.

    The returned multipliers minimize the stationarity residual over
    the nonnegative orthant (restricted to the detected active set),
    and `duality_gap` is f(x*) - h(lambda*) with the dual value solved
    to an explicit certificate, so a near-zero gap certifies both
    points regardless of how they were found.  `reference_dual`
    (optionally shorter than the full multiplier vector) is compared
    against the leading multipliers and any disagreement is recorded in
    the notes, never suppressed.
    """
    V = spec.actions.size
    hull = np.eye(V)
    pad = 2.0 / GRID_DIVISIONS
    notes = []
    incumbent = None
    levels = 0
    for levels in range(1, MAX_LEVELS + 1):
        best_w, _, back_w = _grid_best(spec, hull, GRID_DIVISIONS)
        if best_w is None:
            center_w = back_w
            if levels == 1:
                notes.append("no feasible grid point at the coarse level; "
                             "refining around the least-violating point")
        else:
            incumbent = best_w @ hull
            center_w = best_w
        hull = _window(hull, center_w, pad)
        if _hull_diameter_x(spec, hull) <= x_tol:
            break
    else:
        notes.append(f"refinement stopped at hull diameter "
                     f"{_hull_diameter_x(spec, hull):.3g} after "
                     f"{MAX_LEVELS} levels")
    if incumbent is None:
        raise ContractViolation(
            "grid refinement found no feasible point; the constraint set "
            "may not intersect the domain")

    x = spec.actions.combine(spec.scale, incumbent)
    g = eval_constraints(spec, x)
    active = [j for j in range(spec.num_constraints)
              if g[j] >= -max(ACTIVE_TOL, 10.0 * x_tol)]
    x_polished, lam_polished, polished = _polish(spec, x, active)
    if polished:
        x = x_polished
        g = eval_constraints(spec, x)
        active = [j for j in range(spec.num_constraints)
                  if g[j] >= -ACTIVE_TOL]
    lam, stationarity = _multipliers(spec, x, active)
    if polished and lam_polished is not None:
        alt = float(np.linalg.norm(spec.A.T @ lam_polished
                                   + spec.objective.gradient(x)))
        if alt < stationarity:
            lam, stationarity = lam_polished, alt

    f_star = float(spec.objective.value(x))
    h_star, h_gap = hvalue(spec, lam, tol=1e-10)
    duality_gap = f_star - h_star + h_gap
    complementarity = float(np.max(np.abs(lam * g), initial=0.0))
    feasibility = float(np.max(g, initial=-math.inf))

    reference_gap = None
    ref = None
    if reference_dual is not None:
        ref = np.asarray(reference_dual, dtype=float)
        if ref.shape[0] > lam.shape[0]:
            raise ContractViolation("reference dual has too many components")
        reference_gap = float(np.linalg.norm(lam[:ref.shape[0]] - ref))
        if reference_gap > 1e-3:
            notes.append(
                f"reference dual {ref.tolist()} disagrees with the oracle "
                f"multipliers {lam[:ref.shape[0]].tolist()} "
                f"(distance {reference_gap:.6g}); trust the certified values")

    return OracleResult(
        x_star=x, f_star=f_star, lambda_star=lam, h_star=h_star,
        duality_gap=float(duality_gap), stationarity=stationarity,
        complementarity=complementarity, feasibility=feasibility,
        active=tuple(active), levels=levels,
        hull_diameter=_hull_diameter_x(spec, hull), polished=polished,
        reference_dual=ref, reference_gap=reference_gap, notes=notes)


def oracle_norm_bound(spec: ProblemSpec) -> dict:
    """Operator norms used by the continuity and subgradient bounds."""
    return {"A": operator_norm(spec.A), "W": operator_norm(spec.actions.W)}
