"""Loop controller semantics, checked against a step-through oracle."""

import random

import pytest

from stylist.domain import NegativePromptSet
from stylist.errors import GeneratorFailedError
from stylist.feedback import LoopConfig, LoopOutcome, merge_negatives, run_feedback_loop


class ScriptedLoop:
    """Drives run_feedback_loop from a score list, recording everything."""

    def __init__(self, scores, diagnoses=None):
        self.scores = list(scores)
        self.diagnoses = diagnoses
        self.generate_calls = 0
        self.diagnose_calls = 0
        self.negatives_seen = []

    def generate(self, negatives):
        self.negatives_seen.append(negatives)
        score = self.scores[self.generate_calls]
        self.generate_calls += 1
        return f"value-{self.generate_calls}", score

    def diagnose(self, value):
        self.diagnose_calls += 1
        if self.diagnoses is not None:
            return self.diagnoses[self.diagnose_calls - 1]
        return NegativePromptSet.from_pairs([("", f"flaw {self.diagnose_calls}")])


def oracle(scores, threshold, max_iterations):
    """Independent walk over the same rules: stop at the gate or budget,
    keep the earliest maximum."""
    used = 0
    best_idx, best = None, float("-inf")
    for i, score in enumerate(scores[:max_iterations], start=1):
        used = i
        if score > best:
            best_idx, best = i, score
        if score >= threshold:
            break
    return {
        "iterations": used,
        "best_value": f"value-{best_idx}",
        "best_score": best,
        "satisfied": best >= threshold,
        "diagnose_calls": used - 1,
    }


def test_scripted_sequences_match_oracle():
    rng = random.Random(20250823)
    for _ in range(1000):
        max_iterations = rng.randint(1, 5)
        threshold = rng.choice([0.3, 0.5, 0.7, 0.9])
        scores = [round(rng.random(), 3) or 0.001 for _ in range(max_iterations)]
        script = ScriptedLoop(scores)
        outcome = run_feedback_loop(
            script.generate, script.diagnose, LoopConfig(threshold, max_iterations)
        )
        want = oracle(scores, threshold, max_iterations)
        assert outcome.iterations_used == want["iterations"]
        assert outcome.best_value == want["best_value"]
        assert outcome.best_score == want["best_score"]
        assert outcome.satisfied == want["satisfied"]
        assert script.generate_calls == want["iterations"]
        assert script.diagnose_calls == want["diagnose_calls"]
        # one unique phrase per diagnosis, all retained
        assert len(outcome.negatives) == want["diagnose_calls"]


def test_negative_sets_grow_monotonically():
    script = ScriptedLoop([0.1, 0.2, 0.3, 0.4])
    run_feedback_loop(script.generate, script.diagnose, LoopConfig(0.9, 4))
    seen = [set(n.negatives) for n in script.negatives_seen]
    assert seen[0] == set()
    for earlier, later in zip(seen, seen[1:]):
        assert earlier <= later
        assert len(later) == len(earlier) + 1


def test_first_iteration_runs_without_negatives():
    script = ScriptedLoop([0.95])
    outcome = run_feedback_loop(script.generate, script.diagnose, LoopConfig(0.9, 3))
    assert script.negatives_seen[0] == NegativePromptSet()
    assert outcome.iterations_used == 1
    assert outcome.satisfied
    assert script.diagnose_calls == 0


def test_ties_keep_the_earliest_attempt():
    script = ScriptedLoop([0.5, 0.5, 0.4])
    outcome = run_feedback_loop(script.generate, script.diagnose, LoopConfig(0.9, 3))
    assert outcome.best_value == "value-1"
    assert outcome.best_score == 0.5
    assert not outcome.satisfied


def test_exhaustion_returns_best_so_far_unsatisfied():
    script = ScriptedLoop([0.2, 0.6, 0.3])
    outcome = run_feedback_loop(script.generate, script.diagnose, LoopConfig(0.7, 3))
    assert outcome == LoopOutcome(
        best_value="value-2",
        best_score=0.6,
        iterations_used=3,
        satisfied=False,
        negatives=outcome.negatives,
    )
    assert len(outcome.negatives) == 2


def test_duplicate_diagnoses_do_not_accumulate():
    same = NegativePromptSet.from_pairs([("", "shiny fabric")])
    script = ScriptedLoop([0.1, 0.1, 0.1], diagnoses=[same, same])
    outcome = run_feedback_loop(script.generate, script.diagnose, LoopConfig(0.9, 3))
    assert outcome.negatives.negatives == ("shiny fabric",)


def test_generator_failure_aborts_with_partial():
    calls = {"n": 0}

    def generate(negatives):
        calls["n"] += 1
        if calls["n"] == 2:
            raise RuntimeError("backend fell over")
        return "v", 0.4

    def diagnose(value):
        return NegativePromptSet()

    with pytest.raises(GeneratorFailedError) as err:
        run_feedback_loop(generate, diagnose, LoopConfig(0.9, 3))
    assert err.value.iteration == 2
    assert err.value.partial is not None
    assert err.value.partial.iterations_used == 1
    assert err.value.partial.best_score == 0.4
    assert not err.value.partial.satisfied
    assert isinstance(err.value.__cause__, RuntimeError)


def test_generator_failure_on_first_iteration_has_no_partial():
    def generate(negatives):
        raise RuntimeError("nothing works")

    with pytest.raises(GeneratorFailedError) as err:
        run_feedback_loop(generate, lambda v: NegativePromptSet(), LoopConfig(0.5, 3))
    assert err.value.iteration == 1
    assert err.value.partial is None


def test_diagnoser_failure_is_logged_and_skipped():
    script = ScriptedLoop([0.1, 0.95])
    bad_then_unused = [RuntimeError("diagnoser broke")]

    def diagnose(value):
        raise bad_then_unused[0]

    outcome = run_feedback_loop(script.generate, diagnose, LoopConfig(0.9, 3))
    assert outcome.satisfied
    assert outcome.iterations_used == 2
    assert len(outcome.negatives) == 0


def test_no_diagnosis_after_the_final_allowed_iteration():
    script = ScriptedLoop([0.1, 0.1])
    run_feedback_loop(script.generate, script.diagnose, LoopConfig(0.9, 2))
    assert script.diagnose_calls == 1


def test_loop_config_validation():
    with pytest.raises(ValueError):
        LoopConfig(0.0, 3)
    with pytest.raises(ValueError):
        LoopConfig(1.1, 3)
    with pytest.raises(ValueError):
        LoopConfig(0.5, 0)
    assert LoopConfig(0.5, 3).with_threshold(0.8).threshold == 0.8


def test_merge_negatives_is_an_ordered_union():
    a = NegativePromptSet.from_pairs([("p", "loud print")])
    b = NegativePromptSet.from_pairs([("q", "LOUD print"), ("r", "neon trim")])
    merged = merge_negatives(a, b)
    assert merged.negatives == ("loud print", "neon trim")
