"""Scenario files: parsing, validation, and canonical hashing.

A scenario is one INI file with every numeric value written as a
decimal string, explicit seeds, and no wall-clock entropy, so a stored
config plus the code version pins a run bitwise.  Sections:

  [scenario]      name, regime, alphas, iters, seeds, policy (+ params),
                  optional checkpoints and inner_tol
  [problem]       objective_weights, constraint_rows, mean_perturbation,
                  action_points, scale, optional slater_point
  [perturbation]  per-coordinate kinds ("bernoulli p" or "constant v");
                  [arrivals] is accepted as an alias
  [admissibility] optional allowed index pairs for the block policy
  [epsilon]       multiplier-error source and its parameters
  [reference]     optional externally reported values to cross-check
                  (never trusted, only compared against the oracle)

The regime tag must match what the streams can actually produce:
"deterministic" forbids random coordinates, the stochastic tags require
one, and the epsilon tags pin the error source.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dual import EPS_SOURCES, PerturbationStream
from .inner import epsilon_from_gap
from .problem import (ActionSet, ConfigError, DiagonalQuadratic, ProblemSpec,
                      subgradient_norm_bound)
from .queuesim import (AmortizedPolicy, BlockPolicy, ConstantPolicy,
                       MyopicPolicy)
from .scheduling import AdmissibilityRule

REGIMES = ("deterministic", "bounded-eps", "stochastic-delta",
           "stochastic-both", "heavy-eps")
POLICIES = ("myopic", "amortized", "block", "constant")
EPS_KINDS = ("decaying", "constant-norm", "from-gap")


def _floats(text: str) -> np.ndarray:
    parts = [p for p in text.replace(",", " ").split() if p]
    return np.array([float(p) for p in parts])


def _ints(text: str) -> list:
    out = []
    for p in [p for p in text.replace(",", " ").split() if p]:
        if ".." in p:
            lo, hi = p.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(p))
    return out


def _rows(text: str) -> np.ndarray:
    rows = [r for r in text.split(";") if r.strip()]
    return np.array([[float(v) for v in r.split()] for r in rows])


def _kinds(text: str) -> list:
    kinds = []
    for item in [i.strip() for i in text.split(",") if i.strip()]:
        parts = item.split()
        if len(parts) != 2:
            raise ConfigError(
                f"perturbation kind '{item}' must be 'kind value'")
        kinds.append((parts[0], float(parts[1])))
    return kinds


@dataclass
class ScenarioConfig:
    """One validated scenario, ready to run."""

    name: str
    regime: str
    alphas: tuple
    iters: int
    seeds: tuple
    policy_kind: str
    spec: ProblemSpec
    stream: PerturbationStream
    rule: Optional[AdmissibilityRule] = None
    policy_tau: Optional[int] = None
    policy_T: Optional[int] = None
    policy_index: Optional[int] = None
    checkpoints: Optional[tuple] = None
    inner_tol: Optional[float] = None
    eps_source: str = "none"
    eps_kind: Optional[str] = None
    eps_amplitude: Optional[float] = None
    eps_decay: Optional[float] = None
    eps_direction: Optional[np.ndarray] = None
    xi: Optional[float] = None
    reference_dual: Optional[np.ndarray] = None
    kinds: list = field(default_factory=list)

    def make_policy(self):
        """Fresh policy object (policies carry run state via start())."""
        if self.policy_kind == "myopic":
            return MyopicPolicy()
        if self.policy_kind == "amortized":
            return AmortizedPolicy(self.policy_tau)
        if self.policy_kind == "block":
            return BlockPolicy(self.policy_T, self.rule)
        return ConstantPolicy(self.policy_index)

    def make_eps_fn(self):
        """Injected multiplier-error sequence, or None."""
        if self.eps_source != "injected-sequence":
            return None
        m = self.spec.num_constraints
        direction = self.eps_direction
        if direction is None:
            direction = np.ones(m)
        direction = direction / float(np.linalg.norm(direction))
        if self.eps_kind == "from-gap":
            sigma = subgradient_norm_bound(
                self.spec, self.stream.support_bound())
            amplitude = epsilon_from_gap(self.xi, sigma)
        else:
            amplitude = self.eps_amplitude
        decay = self.eps_decay if self.eps_kind == "decaying" else 0.0

        def eps_fn(k, lam, rng):
            return amplitude * (float(k) ** -decay) * direction

        return eps_fn

    def canonical(self) -> dict:
        """Order-stable plain-types view used for hashing and equality."""
        out = {
            "name": self.name,
            "regime": self.regime,
            "alphas": [repr(a) for a in self.alphas],
            "iters": self.iters,
            "seeds": list(self.seeds),
            "policy": self.policy_kind,
            "objective_weights": [repr(float(w))
                                  for w in self.spec.objective.weights],
            "constraint_rows": [[repr(float(v)) for v in row]
                                for row in self.spec.A],
            "mean_perturbation": [repr(float(v)) for v in self.spec.delta],
            "action_points": [[repr(float(v)) for v in row]
                              for row in self.spec.actions.points],
            "scale": repr(float(self.spec.scale)),
            "kinds": [[k, repr(float(v))] for k, v in self.kinds],
            "eps_source": self.eps_source,
        }
        if self.spec.slater_point is not None:
            out["slater_point"] = [repr(float(v))
                                   for v in self.spec.slater_point]
        if self.rule is not None:
            out["admissible_pairs"] = sorted(
                [int(i), int(j)]
                for i, j in np.argwhere(self.rule.allowed))
        for key in ("policy_tau", "policy_T", "policy_index", "inner_tol",
                    "eps_kind", "eps_amplitude", "eps_decay", "xi"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value if isinstance(value, (int, str)) \
                    else repr(float(value))
        if self.checkpoints is not None:
            out["checkpoints"] = list(self.checkpoints)
        if self.eps_direction is not None:
            out["eps_direction"] = [repr(float(v))
                                    for v in self.eps_direction]
        if self.reference_dual is not None:
            out["reference_dual"] = [repr(float(v))
                                     for v in self.reference_dual]
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


def _validate_regime(regime: str, kinds: list, eps_source: str,
                     eps_kind: Optional[str]) -> None:
    random_coords = [i for i, (k, _) in enumerate(kinds) if k != "constant"]
    if regime == "deterministic":
        if random_coords:
            raise ConfigError(
                f"regime 'deterministic' forbids random perturbation "
                f"coordinates (found kind '{kinds[random_coords[0]][0]}' "
                f"at index {random_coords[0]})")
        if eps_source != "none":
            raise ConfigError(
                "regime 'deterministic' requires epsilon source 'none'")
    elif regime == "bounded-eps":
        if random_coords:
            raise ConfigError(
                "regime 'bounded-eps' keeps the perturbation deterministic; "
                f"coordinate {random_coords[0]} is random")
        if eps_source != "injected-sequence":
            raise ConfigError(
                "regime 'bounded-eps' requires an injected epsilon sequence")
    elif regime == "stochastic-delta":
        if not random_coords:
            raise ConfigError(
                "regime 'stochastic-delta' needs at least one random "
                "perturbation coordinate")
        if eps_source != "none":
            raise ConfigError(
                "regime 'stochastic-delta' requires epsilon source 'none'")
    elif regime == "stochastic-both":
        if not random_coords:
            raise ConfigError(
                "regime 'stochastic-both' needs at least one random "
                "perturbation coordinate")
        if eps_source == "none":
            raise ConfigError(
                "regime 'stochastic-both' needs a nonzero epsilon source")
    elif regime == "heavy-eps":
        if eps_source != "injected-sequence" or eps_kind != "constant-norm":
            raise ConfigError(
                "regime 'heavy-eps' requires an injected constant-norm "
                "epsilon sequence (the error average must not vanish)")
    else:
        raise ConfigError(f"regime must be one of {REGIMES}, got '{regime}'")


def parse_scenario(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.read_string(text)

    for section in ("scenario", "problem"):
        if section not in parser:
            raise ConfigError(f"missing [{section}] section")
    if "perturbation" in parser and "arrivals" in parser:
        raise ConfigError("give [perturbation] or [arrivals], not both")
    pert_name = "perturbation" if "perturbation" in parser else "arrivals"
    if pert_name not in parser:
        raise ConfigError("missing [perturbation] (or [arrivals]) section")

    sc = parser["scenario"]
    pb = parser["problem"]

    try:
        weights = _floats(pb["objective_weights"])
        A = _rows(pb["constraint_rows"])
        delta = _floats(pb["mean_perturbation"])
        points = _rows(pb["action_points"])
        scale = float(pb["scale"])
    except KeyError as exc:
        raise ConfigError(f"[problem] is missing field {exc}") from None
    slater = _floats(pb["slater_point"]) if "slater_point" in pb else None

    kinds = _kinds(parser[pert_name].get("kinds", ""))
    if not kinds:
        raise ConfigError(f"[{pert_name}] must list per-coordinate kinds")

    eps = parser["epsilon"] if "epsilon" in parser else {}
    eps_source = eps.get("source", "none")
    if eps_source not in EPS_SOURCES:
        raise ConfigError(
            f"[epsilon] source must be one of {EPS_SOURCES}")
    eps_kind = eps.get("kind")
    eps_amplitude = eps.get("amplitude")
    eps_decay = eps.get("decay")
    eps_direction = eps.get("direction")
    xi = eps.get("xi")
    if eps_source == "injected-sequence":
        if eps_kind not in EPS_KINDS:
            raise ConfigError(
                f"[epsilon] kind must be one of {EPS_KINDS} for an "
                f"injected sequence")
        if eps_kind == "from-gap":
            if xi is None:
                raise ConfigError("[epsilon] kind 'from-gap' needs xi")
            xi = float(xi)
        else:
            if eps_amplitude is None:
                raise ConfigError(f"[epsilon] kind '{eps_kind}' needs an "
                                  f"amplitude")
            eps_amplitude = float(eps_amplitude)
        eps_decay = float(eps_decay) if eps_decay is not None else 1.0
        if eps_kind == "decaying" and eps_decay <= 0:
            raise ConfigError("[epsilon] decay must be positive")
        if eps_direction is not None:
            eps_direction = _floats(eps_direction)
            if np.any(eps_direction < 0) or not np.any(eps_direction):
                raise ConfigError(
                    "[epsilon] direction must be nonnegative and nonzero "
                    "(the shifted multiplier must stay in the orthant)")
    else:
        if any(v is not None
               for v in (eps_kind, eps_amplitude, eps_decay, xi)):
            raise ConfigError(
                f"[epsilon] parameters given but source is '{eps_source}'")
        eps_kind = eps_amplitude = eps_decay = eps_direction = xi = None

    regime = sc.get("regime", "")
    _validate_regime(regime, kinds, eps_source, eps_kind)

    try:
        alphas = tuple(float(a) for a in
                       sc["alphas"].replace(",", " ").split())
        iters = int(sc["iters"])
        seeds = tuple(_ints(sc["seeds"]))
        policy_kind = sc["policy"].strip()
    except KeyError as exc:
        raise ConfigError(f"[scenario] is missing field {exc}") from None
    if not alphas or any(a <= 0 for a in alphas):
        raise ConfigError("[scenario] alphas must be positive")
    if iters < 1:
        raise ConfigError("[scenario] iters must be at least 1")
    if not seeds:
        raise ConfigError("[scenario] seeds must not be empty")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("[scenario] seeds must be distinct")
    if policy_kind not in POLICIES:
        raise ConfigError(f"[scenario] policy must be one of {POLICIES}")

    policy_tau = policy_T = policy_index = None
    if policy_kind == "amortized":
        if "policy_tau" not in sc:
            raise ConfigError("[scenario] amortized policy needs policy_tau")
        policy_tau = int(sc["policy_tau"])
    elif policy_kind == "block":
        if "policy_T" not in sc:
            raise ConfigError("[scenario] block policy needs policy_T")
        policy_T = int(sc["policy_T"])
    elif policy_kind == "constant":
        if "policy_index" not in sc:
            raise ConfigError("[scenario] constant policy needs policy_index")
        policy_index = int(sc["policy_index"])

    checkpoints = None
    if "checkpoints" in sc:
        checkpoints = tuple(_ints(sc["checkpoints"]))
        if any(c < 1 or c > iters for c in checkpoints):
            raise ConfigError("[scenario] checkpoints must lie in [1, iters]")
    inner_tol = float(sc["inner_tol"]) if "inner_tol" in sc else None

    try:
        actions = ActionSet(points)
        spec = ProblemSpec(objective=DiagonalQuadratic(weights), A=A,
                           delta=delta, actions=actions, scale=scale,
                           slater_point=slater,
                           name=sc.get("name", "scenario"))
    except Exception as exc:
        raise ConfigError(f"[problem] rejected: {exc}") from None
    if len(kinds) != spec.num_constraints:
        raise ConfigError(
            f"[{pert_name}] lists {len(kinds)} coordinates but the problem "
            f"has {spec.num_constraints} constraints")
    stream = PerturbationStream(kinds)
    if not np.array_equal(stream.mean, spec.delta):
        raise ConfigError(
            f"[{pert_name}] mean {stream.mean.tolist()} must equal "
            f"mean_perturbation {spec.delta.tolist()}")
    if eps_direction is not None and eps_direction.shape[0] != \
            spec.num_constraints:
        raise ConfigError("[epsilon] direction dimension mismatch")

    rule = None
    if "admissibility" in parser and "pairs" in parser["admissibility"]:
        pair_rows = _rows(parser["admissibility"]["pairs"])
        pairs = [(int(i), int(j)) for i, j in pair_rows]
        rule = AdmissibilityRule.from_pairs(actions.size, pairs)
    if policy_kind == "block" and rule is not None:
        cap = 1.0 - 2.0 / (policy_T * actions.size)
        if scale > cap + 1e-12:
            raise ConfigError(
                f"[problem] scale {scale} exceeds the reordering capacity "
                f"limit {cap} for block length {policy_T * actions.size}")
    if eps_source == "from-queue-identification":
        bad = [i for i, (_, v) in enumerate(kinds)
               if kinds[i][0] == "constant" and v != round(v)]
        if bad:
            raise ConfigError(
                f"[{pert_name}] coordinate {bad[0]} is not integer-valued; "
                f"queue identification needs integer arrivals")

    reference_dual = None
    if "reference" in parser and "dual" in parser["reference"]:
        reference_dual = _floats(parser["reference"]["dual"])

    return ScenarioConfig(
        name=sc.get("name", "scenario"), regime=regime, alphas=alphas,
        iters=iters, seeds=seeds, policy_kind=policy_kind, spec=spec,
        stream=stream, rule=rule, policy_tau=policy_tau, policy_T=policy_T,
        policy_index=policy_index, checkpoints=checkpoints,
        inner_tol=inner_tol, eps_source=eps_source, eps_kind=eps_kind,
        eps_amplitude=eps_amplitude, eps_decay=eps_decay,
        eps_direction=eps_direction, xi=xi, reference_dual=reference_dual,
        kinds=kinds)


def load_scenario(path) -> ScenarioConfig:
    with open(path) as fh:
        return parse_scenario(fh.read())
