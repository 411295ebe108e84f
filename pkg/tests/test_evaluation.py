from __future__ import annotations

import csv
import io

import numpy as np
import pytest

from spanmatch.corpus import build_support_set
from spanmatch.encoders import EncoderConfig, StaticHashEncoder
from spanmatch.evaluation import (
    EvalProtocol,
    exact_match_counts,
    exact_match_prf,
    run_protocol,
    sample_support,
)
from spanmatch.scoring import Prediction, ScoredSpan, ScoringConfig
from spanmatch.synth import default_spec, generate

from conftest import labeled, support


def prediction(tokens, triples):
    return Prediction(
        query_tokens=tokens,
        spans=[ScoredSpan(s, e, 0.5, 0.5, 1.0, t) for s, e, t in triples],
    )


class TestSampleSupport:
    def make_pool(self, counts):
        examples = []
        for entity_type, n in counts.items():
            for i in range(n):
                examples.append(support([entity_type.lower(), f"v{i}"], 1, 1, entity_type))
        return build_support_set(examples)

    def test_small_type_contributes_all_examples(self, rng):
        pool = self.make_pool({"A": 30, "B": 150})
        sample = sample_support(pool, budget=100, rng=rng)
        assert sample.count("A") == 30
        assert sample.count("B") == 100

    def test_budget_above_every_type_returns_whole_pool(self, rng):
        pool = self.make_pool({"A": 3, "B": 5})
        sample = sample_support(pool, budget=10, rng=rng)
        assert sample.count("A") == 3 and sample.count("B") == 5

    def test_sampling_without_replacement(self, rng):
        pool = self.make_pool({"A": 20})
        sample = sample_support(pool, budget=10, rng=rng)
        ids = [id(ex) for ex in sample.examples_for("A")]
        assert len(set(ids)) == 10

    def test_same_seed_same_sample(self):
        pool = self.make_pool({"A": 20})
        a = sample_support(pool, 5, np.random.default_rng(3))
        b = sample_support(pool, 5, np.random.default_rng(3))
        assert [e.texts for e in a.examples_for("A")] == [e.texts for e in b.examples_for("A")]

    def test_bad_budget_rejected(self, rng):
        with pytest.raises(ValueError):
            sample_support(self.make_pool({"A": 2}), 0, rng)


class TestExactMatch:
    def test_tp_fp_counts(self):
        gold = [labeled(["a", "b"], [(0, 0, "X")])]
        preds = [prediction(["a", "b"], [(0, 0, "X"), (1, 1, "X")])]
        p, r, f1 = exact_match_prf(gold, preds)
        assert (p, r) == (0.5, 1.0)
        assert f1 == pytest.approx(2 / 3)

    def test_empty_predictions(self):
        gold = [labeled(["a"], [(0, 0, "X")])]
        preds = [prediction(["a"], [])]
        assert exact_match_prf(gold, preds) == (0.0, 0.0, 0.0)

    def test_right_span_wrong_type_counts_fp_and_fn(self):
        gold = [
            labeled(["a", "b"], [(0, 0, "X")]),
            labeled(["c"], [(0, 0, "Y")]),
            labeled(["d"], []),
        ]
        preds = [
            prediction(["a", "b"], [(0, 0, "WRONG")]),
            prediction(["c"], [(0, 0, "Y")]),
            prediction(["d"], []),
        ]
        micro, per_type = exact_match_counts(gold, preds)
        assert micro.tp == 1 and micro.fp == 1 and micro.fn == 1
        assert per_type["WRONG"].fp == 1
        assert per_type["X"].fn == 1
        assert per_type["Y"].tp == 1

    def test_misaligned_lists_rejected(self):
        with pytest.raises(ValueError):
            exact_match_prf([labeled(["a"], [])], [])

    def test_permutation_invariance(self, rng):
        gold = [labeled([f"w{i}"], [(0, 0, "T")]) for i in range(6)]
        preds = [
            prediction([f"w{i}"], [(0, 0, "T")] if i % 2 == 0 else []) for i in range(6)
        ]
        base = exact_match_prf(gold, preds)
        order = rng.permutation(6)
        shuffled = exact_match_prf([gold[i] for i in order], [preds[i] for i in order])
        assert base == shuffled


@pytest.fixture(scope="module")
def tiny_eval_setup():
    result = generate(default_spec(seed=5, train_size=10, test_size=12, pool_per_type=8))
    encoder = StaticHashEncoder(
        EncoderConfig(kind="static-hash", dim=16, heads=2, vocab_hash_buckets=512, seed=2)
    )
    return result, encoder


class TestRunProtocol:
    def test_single_trial_has_zero_std(self, tiny_eval_setup):
        result, encoder = tiny_eval_setup
        protocol = EvalProtocol(budgets=(2,), trials=1, seed=1)
        report = run_protocol(result.test, result.target_pool, encoder, ScoringConfig(), protocol)
        summary = report.summary()
        assert summary[2]["f1"][1] == 0.0

    def test_degenerate_sampling_gives_zero_std(self, tiny_eval_setup):
        result, encoder = tiny_eval_setup
        # budget covers the whole pool, so every trial scores the same sample
        protocol = EvalProtocol(budgets=(50,), trials=3, seed=1)
        report = run_protocol(result.test, result.target_pool, encoder, ScoringConfig(), protocol)
        for metric in ("precision", "recall", "f1"):
            assert report.summary()[50][metric][1] == 0.0

    def test_summary_replays_from_trial_rows(self, tiny_eval_setup):
        result, encoder = tiny_eval_setup
        protocol = EvalProtocol(budgets=(2, 4), trials=3, seed=7)
        report = run_protocol(result.test, result.target_pool, encoder, ScoringConfig(), protocol)
        parsed = list(csv.reader(io.StringIO(report.to_csv())))
        header, rows = parsed[0], parsed[1:]
        trial_rows = [r for r in rows if r[0] == "trial"]
        mean_rows = {int(r[1]): r for r in rows if r[0] == "mean"}
        std_rows = {int(r[1]): r for r in rows if r[0] == "std"}
        for budget in (2, 4):
            f1s = [float(r[5]) for r in trial_rows if int(r[1]) == budget]
            assert float(mean_rows[budget][5]) == float(np.mean(f1s))
            assert float(std_rows[budget][5]) == float(np.std(f1s))

    def test_deterministic_given_seed(self, tiny_eval_setup):
        result, encoder = tiny_eval_setup
        protocol = EvalProtocol(budgets=(3,), trials=2, seed=11)
        a = run_protocol(result.test, result.target_pool, encoder, ScoringConfig(), protocol)
        b = run_protocol(result.test, result.target_pool, encoder, ScoringConfig(), protocol)
        assert a.to_csv() == b.to_csv()

    def test_report_files(self, tiny_eval_setup, tmp_path):
        result, encoder = tiny_eval_setup
        protocol = EvalProtocol(budgets=(2,), trials=2, seed=3)
        report = run_protocol(result.test, result.target_pool, encoder, ScoringConfig(), protocol)
        report.save(tmp_path / "r.csv", tmp_path / "r.json")
        assert (tmp_path / "r.csv").exists()
        assert (tmp_path / "r.json").exists()


class TestProtocolValidation:
    def test_empty_budgets_rejected(self):
        with pytest.raises(ValueError):
            EvalProtocol(budgets=())

    def test_descending_budgets_rejected(self):
        with pytest.raises(ValueError):
            EvalProtocol(budgets=(10, 5))

    def test_zero_trials_rejected(self):
        with pytest.raises(ValueError):
            EvalProtocol(trials=0)
