"""Scenario parsing: the bundled example, validation, and hashing."""

import pathlib

import numpy as np
import pytest

from dualsched import (ConfigError, ap_example_scenario, epsilon_from_gap,
                       load_scenario, parse_scenario, subgradient_norm_bound)
from dualsched.experiment import AP_EXAMPLE_INI

SCENARIO_DIR = pathlib.Path(__file__).resolve().parents[1] / "scenarios"

MINIMAL_INI = """\
[scenario]
name = minimal
regime = deterministic
alphas = 0.5
iters = 10
seeds = 0
policy = myopic

[problem]
objective_weights = 1, 3
constraint_rows = -1 0; 0 -1; 1 0; 0 1
mean_perturbation = 0.25, 0.5, -1, -1
action_points = 0 0; 1 0; 0 1
scale = 0.7777777777777778
slater_point = 0.26, 0.51

[perturbation]
kinds = constant 0.25, constant 0.5, constant -1, constant -1
"""


def edited(base: str, old: str, new: str) -> str:
    assert base.count(old) == 1, old
    return base.replace(old, new)


class TestApExample:
    def test_scale_is_seven_ninths(self):
        config = ap_example_scenario()
        assert config.spec.scale == pytest.approx(7.0 / 9.0, abs=1e-15)

    def test_rule_forbids_cross_transmission(self):
        rule = ap_example_scenario().rule
        assert not rule.ok(1, 2)
        assert not rule.ok(2, 1)
        assert rule.ok(1, 1)
        assert rule.ok(2, 2)
        assert rule.ok(0, 1) and rule.ok(1, 0)

    def test_objective_weights(self):
        config = ap_example_scenario()
        np.testing.assert_array_equal(config.spec.objective.weights,
                                      [1.0, 3.0])

    def test_grid_and_policy(self):
        config = ap_example_scenario()
        assert config.alphas == (0.01, 0.001)
        assert config.iters == 50_000
        assert config.seeds == tuple(range(1, 21))
        assert config.policy_kind == "block"
        assert config.policy_T == 3
        assert config.checkpoints == (100, 1000, 10_000, 20_000, 50_000)

    def test_regime_and_epsilon_source(self):
        config = ap_example_scenario()
        assert config.regime == "stochastic-both"
        assert config.eps_source == "from-queue-identification"
        assert config.make_eps_fn() is None

    def test_stream_mean_matches_problem(self):
        config = ap_example_scenario()
        np.testing.assert_array_equal(config.stream.mean,
                                      [0.25, 0.5, -1.0, -1.0])
        assert not config.stream.is_deterministic()

    def test_reference_dual_recorded(self):
        config = ap_example_scenario()
        np.testing.assert_array_equal(config.reference_dual, [2.0, 1.0])

    def test_block_policy_is_fresh_per_call(self):
        config = ap_example_scenario()
        first, second = config.make_policy(), config.make_policy()
        assert first is not second
        assert first.T == 3


class TestValidation:
    def test_empty_seeds_rejected(self):
        text = edited(MINIMAL_INI, "seeds = 0", "seeds =")
        with pytest.raises(ConfigError, match="seeds"):
            parse_scenario(text)

    def test_duplicate_seeds_rejected(self):
        text = edited(MINIMAL_INI, "seeds = 0", "seeds = 3, 3")
        with pytest.raises(ConfigError, match="distinct"):
            parse_scenario(text)

    def test_deterministic_regime_forbids_bernoulli(self):
        text = edited(MINIMAL_INI, "constant 0.25", "bernoulli 0.25")
        with pytest.raises(ConfigError, match="deterministic"):
            parse_scenario(text)

    def test_stochastic_regime_needs_random_coordinate(self):
        text = edited(MINIMAL_INI, "regime = deterministic",
                      "regime = stochastic-delta")
        with pytest.raises(ConfigError, match="random"):
            parse_scenario(text)

    def test_block_capacity_rejected_for_short_blocks(self):
        text = AP_EXAMPLE_INI.replace("policy_T = 3", "policy_T = 1")
        with pytest.raises(ConfigError, match="capacity"):
            parse_scenario(text)

    def test_fractional_arrivals_rejected_for_queue_source(self):
        text = AP_EXAMPLE_INI.replace("constant -1, constant -1",
                                      "constant -1, constant -1.5")
        text = text.replace("-1, -1", "-1, -1.5")
        with pytest.raises(ConfigError, match="integer"):
            parse_scenario(text)

    def test_stream_mean_must_match_problem(self):
        text = edited(MINIMAL_INI, "constant 0.25", "constant 0.35")
        with pytest.raises(ConfigError, match="mean"):
            parse_scenario(text)

    def test_kind_count_must_match_constraints(self):
        text = edited(MINIMAL_INI,
                      "kinds = constant 0.25, constant 0.5, constant -1, "
                      "constant -1",
                      "kinds = constant 0.25, constant 0.5")
        with pytest.raises(ConfigError, match="coordinates"):
            parse_scenario(text)

    def test_unknown_regime_rejected(self):
        text = edited(MINIMAL_INI, "regime = deterministic",
                      "regime = adversarial")
        with pytest.raises(ConfigError, match="regime"):
            parse_scenario(text)

    def test_unknown_policy_rejected(self):
        text = edited(MINIMAL_INI, "policy = myopic", "policy = roundrobin")
        with pytest.raises(ConfigError, match="policy"):
            parse_scenario(text)

    def test_amortized_policy_needs_tau(self):
        text = edited(MINIMAL_INI, "policy = myopic", "policy = amortized")
        with pytest.raises(ConfigError, match="policy_tau"):
            parse_scenario(text)

    def test_nonpositive_alpha_rejected(self):
        text = edited(MINIMAL_INI, "alphas = 0.5", "alphas = 0.5, -0.1")
        with pytest.raises(ConfigError, match="positive"):
            parse_scenario(text)

    def test_checkpoints_must_lie_inside_horizon(self):
        text = edited(MINIMAL_INI, "policy = myopic",
                      "policy = myopic\ncheckpoints = 5, 100")
        with pytest.raises(ConfigError, match="checkpoints"):
            parse_scenario(text)

    def test_missing_problem_section_rejected(self):
        text = MINIMAL_INI.replace("[problem]", "[trouble]")
        with pytest.raises(ConfigError, match="problem"):
            parse_scenario(text)

    def test_perturbation_and_arrivals_exclusive(self):
        text = MINIMAL_INI + "\n[arrivals]\nkinds = constant 0\n"
        with pytest.raises(ConfigError, match="not both"):
            parse_scenario(text)

    def test_epsilon_parameters_need_injected_source(self):
        text = MINIMAL_INI + "\n[epsilon]\nsource = none\namplitude = 0.1\n"
        with pytest.raises(ConfigError, match="source"):
            parse_scenario(text)

    def test_negative_epsilon_direction_rejected(self):
        text = edited(MINIMAL_INI, "regime = deterministic",
                      "regime = bounded-eps")
        text += ("\n[epsilon]\nsource = injected-sequence\nkind = decaying\n"
                 "amplitude = 0.1\ndirection = 1, -1, 0, 0\n")
        with pytest.raises(ConfigError, match="direction"):
            parse_scenario(text)

    def test_bounded_eps_regime_needs_injection(self):
        text = edited(MINIMAL_INI, "regime = deterministic",
                      "regime = bounded-eps")
        with pytest.raises(ConfigError, match="injected"):
            parse_scenario(text)

    def test_heavy_eps_regime_needs_constant_norm(self):
        text = edited(MINIMAL_INI, "regime = deterministic",
                      "regime = heavy-eps")
        text += ("\n[epsilon]\nsource = injected-sequence\nkind = decaying\n"
                 "amplitude = 0.1\n")
        with pytest.raises(ConfigError, match="constant-norm"):
            parse_scenario(text)


class TestEpsilonSequences:
    def test_decaying_sequence_values(self):
        text = edited(MINIMAL_INI, "regime = deterministic",
                      "regime = bounded-eps")
        text += ("\n[epsilon]\nsource = injected-sequence\nkind = decaying\n"
                 "amplitude = 0.2\ndecay = 1.0\n")
        eps_fn = parse_scenario(text).make_eps_fn()
        m = 4
        expected_direction = np.ones(m) / np.sqrt(m)
        np.testing.assert_allclose(eps_fn(1, None, None),
                                   0.2 * expected_direction)
        np.testing.assert_allclose(eps_fn(4, None, None),
                                   0.05 * expected_direction)

    def test_constant_norm_sequence_does_not_decay(self):
        text = edited(MINIMAL_INI, "regime = deterministic",
                      "regime = heavy-eps")
        text += ("\n[epsilon]\nsource = injected-sequence\n"
                 "kind = constant-norm\namplitude = 0.3\n"
                 "direction = 1, 0, 0, 0\n")
        eps_fn = parse_scenario(text).make_eps_fn()
        np.testing.assert_allclose(eps_fn(1, None, None), [0.3, 0, 0, 0])
        np.testing.assert_allclose(eps_fn(1000, None, None), [0.3, 0, 0, 0])

    def test_from_gap_amplitude_uses_certificate_conversion(self):
        text = edited(MINIMAL_INI, "regime = deterministic",
                      "regime = bounded-eps")
        text += ("\n[epsilon]\nsource = injected-sequence\nkind = from-gap\n"
                 "xi = 0.3\n")
        config = parse_scenario(text)
        eps_fn = config.make_eps_fn()
        sigma = subgradient_norm_bound(config.spec,
                                       config.stream.support_bound())
        expected = epsilon_from_gap(0.3, sigma)
        assert np.linalg.norm(eps_fn(1, None, None)) == pytest.approx(
            expected, rel=1e-12)


class TestHashing:
    def test_reparse_gives_identical_hash(self):
        assert (ap_example_scenario().config_hash()
                == ap_example_scenario().config_hash())

    def test_hash_changes_with_any_field(self):
        base = parse_scenario(MINIMAL_INI).config_hash()
        bumped = parse_scenario(
            edited(MINIMAL_INI, "iters = 10", "iters = 11")).config_hash()
        assert base != bumped

    def test_canonical_is_json_plain(self):
        import json

        doc = ap_example_scenario().canonical()
        restored = json.loads(json.dumps(doc, sort_keys=True))
        assert restored == doc

    def test_canonical_floats_round_trip(self):
        doc = ap_example_scenario().canonical()
        assert doc["scale"] == "0.7777777777777778"
        assert float(doc["scale"]) == 7.0 / 9.0
        assert doc["alphas"] == ["0.01", "0.001"]


class TestBundledScenarioFiles:
    def test_all_files_parse(self):
        paths = sorted(SCENARIO_DIR.glob("*.ini"))
        assert len(paths) == 6
        names = {load_scenario(p).name for p in paths}
        assert names == {"ap-example", "bounded-eps", "deterministic",
                         "heavy-eps", "overload", "stochastic-delta"}

    def test_bundled_example_file_matches_embedded_text(self):
        config = load_scenario(SCENARIO_DIR / "ap_example.ini")
        assert config.config_hash() == ap_example_scenario().config_hash()

    def test_overload_has_no_interior_point(self):
        config = load_scenario(SCENARIO_DIR / "overload.ini")
        assert config.spec.slater_point is None
        np.testing.assert_array_equal(config.spec.delta[:2], [0.9, 0.9])

    def test_deterministic_scenario_is_single_seed(self):
        config = load_scenario(SCENARIO_DIR / "deterministic.ini")
        assert config.regime == "deterministic"
        assert config.seeds == (1,)
        assert config.stream.is_deterministic()
