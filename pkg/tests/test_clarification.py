from __future__ import annotations

import math

import numpy as np
import pytest

from cqsim.clarification import (SILENT, DecideContext, DeciderParams, DeciderPolicy,
                                 HumanPositionsPolicy, RandomPolicy, ThresholdPolicy,
                                 decide, parse_answer_sizes, parse_policy_spec,
                                 render_answer, render_question, train_decider)
from cqsim.uncertainty import ClipartUncertainty, TurnUncertainty
from cqsim.world import Flip, Placement, Scene, Size

LOG2_3 = math.log2(3.0)


def tu_from_entropies(entropies: dict[int, float]) -> TurnUncertainty:
    details = tuple(
        ClipartUncertainty(clipart=cid, u_select=-1.0, h_size=h, h_flip=0.0)
        for cid, h in sorted(entropies.items())
    )
    if not details:
        return TurnUncertainty((), None, None, None, None)
    return TurnUncertainty(details, -1.0, max(entropies.values()), 0.0, None)


class TestDecide:
    def test_threshold_picks_top_two_by_entropy(self, gallery):
        tree, sun, boy = gallery.id_of("tree"), gallery.id_of("sun"), gallery.id_of("boy")
        tu = tu_from_entropies({tree: 1.2, sun: 0.4, boy: 1.5})
        assert decide(ThresholdPolicy(theta=1.1), tu) == [boy, tree]

    def test_threshold_above_log2_3_never_fires(self):
        tu = tu_from_entropies({0: LOG2_3, 1: 1.2})
        assert decide(ThresholdPolicy(theta=LOG2_3), tu) == []

    def test_threshold_is_strict(self):
        tu = tu_from_entropies({0: 0.7})
        assert decide(ThresholdPolicy(theta=0.7), tu) == []

    def test_ties_break_by_ascending_id(self):
        tu = tu_from_entropies({5: 1.0, 2: 1.0, 9: 1.0})
        assert decide(ThresholdPolicy(theta=0.5), tu) == [2, 5]

    def test_random_rate_zero_never_fires(self):
        tu = tu_from_entropies({0: 1.5})
        ctx = DecideContext(rng=np.random.default_rng(0))
        assert all(decide(RandomPolicy(rate=0.0), tu, ctx) == [] for _ in range(50))

    def test_random_rate_one_with_zero_entropy_is_empty(self):
        tu = tu_from_entropies({0: 0.0, 1: 0.0})
        ctx = DecideContext(rng=np.random.default_rng(0))
        assert decide(RandomPolicy(rate=1.0), tu, ctx) == []

    def test_random_requires_rng(self):
        with pytest.raises(ValueError, match="rng"):
            decide(RandomPolicy(rate=0.5), tu_from_entropies({0: 1.0}))

    def test_human_positions_fire_only_on_listed_turns(self):
        policy = HumanPositionsPolicy(positions=frozenset({("d1", 2)}))
        tu = tu_from_entropies({0: 1.0})
        assert decide(policy, tu, DecideContext(dialogue_id="d1", turn_index=2)) == [0]
        assert decide(policy, tu, DecideContext(dialogue_id="d1", turn_index=3)) == []

    def test_decider_requires_features(self):
        policy = DeciderPolicy(params=DeciderParams(weights=np.zeros(3), bias=1.0))
        with pytest.raises(ValueError, match="features"):
            decide(policy, tu_from_entropies({0: 1.0}))

    def test_decider_fires_above_half(self):
        tu = tu_from_entropies({0: 1.0})
        yes = DeciderPolicy(params=DeciderParams(weights=np.zeros(2), bias=2.0))
        no = DeciderPolicy(params=DeciderParams(weights=np.zeros(2), bias=-2.0))
        ctx = DecideContext(features=np.zeros(2))
        assert decide(yes, tu, ctx) == [0]
        assert decide(no, tu, ctx) == []

    def test_threshold_monotonicity_property(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            entropies = {int(i): float(h) for i, h in
                         enumerate(rng.random(int(rng.integers(1, 6))) * LOG2_3)}
            tu = tu_from_entropies(entropies)
            t1, t2 = sorted(rng.random(2) * LOG2_3)
            assert set(decide(ThresholdPolicy(theta=t2), tu)) <= set(
                decide(ThresholdPolicy(theta=t1), tu))

    def test_empty_turn_yields_no_targets(self):
        assert decide(ThresholdPolicy(theta=0.0), tu_from_entropies({})) == []


class TestTemplates:
    def test_single_target_question(self, gallery):
        assert render_question([gallery.id_of("tree")], gallery) == "what size is the tree?"

    def test_two_target_question(self, gallery):
        tree, sun = gallery.id_of("tree"), gallery.id_of("sun")
        assert render_question([tree, sun], gallery) == "what size are the tree and the sun?"

    def test_no_targets_rejected(self, gallery):
        with pytest.raises(ValueError):
            render_question([], gallery)
        with pytest.raises(ValueError):
            render_question([0, 1, 2], gallery)

    def test_single_answer(self, gallery):
        tree = gallery.id_of("tree")
        scene = Scene.of(Placement(tree, Size.SMALL, Flip.FACING_LEFT, 0.1, 0.1))
        text, answered, fallback = render_answer([tree], scene, gallery)
        assert text == "the tree is small"
        assert answered == [(tree, Size.SMALL)]
        assert not fallback

    def test_two_answers(self, gallery):
        tree, sun = gallery.id_of("tree"), gallery.id_of("sun")
        scene = Scene.of(
            Placement(tree, Size.SMALL, Flip.FACING_LEFT, 0.1, 0.1),
            Placement(sun, Size.LARGE, Flip.FACING_LEFT, 0.9, 0.1),
        )
        text, _, _ = render_answer([tree, sun], scene, gallery)
        assert text == "the tree is small and the sun is large"

    def test_absent_target_uses_fallback(self, gallery):
        tree = gallery.id_of("tree")
        text, answered, fallback = render_answer([tree], Scene(), gallery)
        assert text == "the tree is not in the scene"
        assert answered == [(tree, None)]
        assert fallback

    def test_question_answer_roundtrip(self, gallery):
        # answers rendered from our own questions parse back to the asked targets
        tree, sun = gallery.id_of("tree"), gallery.id_of("sun")
        scene = Scene.of(
            Placement(tree, Size.MEDIUM, Flip.FACING_LEFT, 0.1, 0.1),
            Placement(sun, Size.LARGE, Flip.FACING_LEFT, 0.9, 0.1),
        )
        targets = [tree, sun]
        text, _, _ = render_answer(targets, scene, gallery)
        parsed = parse_answer_sizes(text, targets, gallery)
        assert parsed == [(tree, Size.MEDIUM), (sun, Size.LARGE)]


class TestAnswerParsing:
    def test_by_name_mention(self, gallery):
        tree, sun = gallery.id_of("tree"), gallery.id_of("sun")
        parsed = parse_answer_sizes("the sun is large and the tree is small",
                                    [tree, sun], gallery)
        assert parsed == [(tree, Size.SMALL), (sun, Size.LARGE)]

    def test_by_question_order_when_no_names(self, gallery):
        tree, sun = gallery.id_of("tree"), gallery.id_of("sun")
        parsed = parse_answer_sizes("small and large", [tree, sun], gallery)
        assert parsed == [(tree, Size.SMALL), (sun, Size.LARGE)]

    def test_no_size_word_returns_none(self, gallery):
        assert parse_answer_sizes("banana", [2], gallery) is None


class TestDecider:
    def test_separable_features_reach_99_pct(self):
        rng = np.random.default_rng(0)
        samples = []
        for _ in range(400):
            label = bool(rng.integers(2))
            center = 1.0 if label else -1.0
            samples.append((rng.normal(center, 0.1, size=4), label))
        params = train_decider(samples, seed=0)
        hits = sum((params.ask_probability(f) > 0.5) == lab for f, lab in samples)
        assert hits / len(samples) >= 0.99

    def test_single_class_rejected(self):
        samples = [(np.zeros(3), False), (np.ones(3), False)]
        with pytest.raises(ValueError, match="single-class"):
            train_decider(samples)

    def test_json_roundtrip(self):
        params = DeciderParams(weights=np.array([0.5, -0.25]), bias=0.125, seed=3)
        loaded = DeciderParams.from_json(params.to_json())
        np.testing.assert_array_equal(loaded.weights, params.weights)
        assert loaded.bias == params.bias


class TestPolicySpecs:
    def test_threshold_spec(self):
        policy = parse_policy_spec("threshold:0.7")
        assert isinstance(policy, ThresholdPolicy) and policy.theta == 0.7

    def test_random_spec(self):
        policy = parse_policy_spec("random:0.3")
        assert isinstance(policy, RandomPolicy) and policy.rate == 0.3

    def test_human_spec(self):
        policy = parse_policy_spec("human", human_positions=frozenset({("d", 1)}))
        assert isinstance(policy, HumanPositionsPolicy)
        assert ("d", 1) in policy.positions

    def test_silent_spec(self):
        assert parse_policy_spec("silent") == SILENT

    def test_garbage_rejected(self):
        with pytest.raises(ValueError):
            parse_policy_spec("sometimes:maybe")

    def test_negative_theta_rejected(self):
        with pytest.raises(ValueError):
            ThresholdPolicy(theta=-1.0)
