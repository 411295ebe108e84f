"""Evaluation protocol: budgeted support sampling, repeated trials, exact-match PRF.

A predicted span counts only when start, end, and entity type all equal a gold
span.  Metrics are micro-averaged over all entities; per-type counts are kept
for diagnostics.  Summaries use the population standard deviation (divisor N)
and are recomputed verbatim from the per-trial rows, so logs replay exactly.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import LabeledSentence, SupportSet
from .encoders import Encoder, encode_support_set
from .scoring import Prediction, ScoringConfig, predict

log = logging.getLogger(__name__)

METRICS = ("precision", "recall", "f1")


@dataclass
class EvalProtocol:
    budgets: tuple[int, ...] = (10, 20, 50, 100, 200, 500)
    trials: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.budgets:
            raise ValueError("budgets must be non-empty")
        if any(b < 1 for b in self.budgets):
            raise ValueError("budgets must be positive")
        if list(self.budgets) != sorted(self.budgets):
            raise ValueError("budgets must be ascending")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass
class PRF:
    precision: float
    recall: float
    f1: float
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class TrialResult:
    budget: int
    trial: int
    micro: PRF
    per_type: dict[str, PRF] = field(default_factory=dict)


@dataclass
class EvalReport:
    rows: list[TrialResult]

    def summary(self) -> dict[int, dict[str, tuple[float, float]]]:
        """Per budget: (mean, population std) of each micro metric across trials."""
        out: dict[int, dict[str, tuple[float, float]]] = {}
        budgets = sorted({r.budget for r in self.rows})
        for budget in budgets:
            values = {m: [] for m in METRICS}
            for row in self.rows:
                if row.budget == budget:
                    values["precision"].append(row.micro.precision)
                    values["recall"].append(row.micro.recall)
                    values["f1"].append(row.micro.f1)
            out[budget] = {
                m: (float(np.mean(v)), float(np.std(v))) for m, v in values.items()
            }
        return out

    def to_csv(self) -> str:
        """Trial rows then summary rows; floats use repr so replay is bit-exact."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["kind", "budget", "trial", "precision", "recall", "f1"])
        for row in self.rows:
            writer.writerow(
                ["trial", row.budget, row.trial]
                + [repr(v) for v in (row.micro.precision, row.micro.recall, row.micro.f1)]
            )
        for budget, stats in self.summary().items():
            writer.writerow(
                ["mean", budget, ""] + [repr(stats[m][0]) for m in METRICS]
            )
            writer.writerow(
                ["std", budget, ""] + [repr(stats[m][1]) for m in METRICS]
            )
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "budget": r.budget,
                    "trial": r.trial,
                    "precision": r.micro.precision,
                    "recall": r.micro.recall,
                    "f1": r.micro.f1,
                    "tp": r.micro.tp,
                    "fp": r.micro.fp,
                    "fn": r.micro.fn,
                    "per_type": {
                        t: {
                            "precision": p.precision,
                            "recall": p.recall,
                            "f1": p.f1,
                            "tp": p.tp,
                            "fp": p.fp,
                            "fn": p.fn,
                        }
                        for t, p in r.per_type.items()
                    },
                }
                for r in self.rows
            ],
            "summary": {
                str(budget): {m: {"mean": s[m][0], "std": s[m][1]} for m in METRICS}
                for budget, s in self.summary().items()
            },
        }

    def save(self, csv_path: str | Path, json_path: str | Path) -> None:
        Path(csv_path).write_text(self.to_csv(), encoding="utf-8")
        Path(json_path).write_text(
            json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2),
            encoding="utf-8",
        )


def sample_support(pool: SupportSet, budget: int, rng: np.random.Generator) -> SupportSet:
    """Per type, draw min(budget, available) examples without replacement.

    A type with fewer examples than the budget contributes all of them.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    sample = SupportSet()
    for entity_type, group in pool:
        if len(group) <= budget:
            chosen = list(group)
        else:
            idx = rng.choice(len(group), size=budget, replace=False)
            chosen = [group[int(i)] for i in idx]
        for ex in chosen:
            sample.add(ex)
    return sample


def _prf(tp: int, fp: int, fn: int) -> PRF:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF(precision, recall, f1, tp, fp, fn)


def exact_match_counts(
    gold: Sequence[LabeledSentence], preds: Sequence[Prediction]
) -> tuple[PRF, dict[str, PRF]]:
    """Micro counts plus per-entity-type counts over aligned sentence lists."""
    if len(gold) != len(preds):
        raise ValueError(f"gold has {len(gold)} sentences, predictions {len(preds)}")
    tp = fp = fn = 0
    by_type: dict[str, list[int]] = {}

    def bucket(entity_type: str) -> list[int]:
        return by_type.setdefault(entity_type, [0, 0, 0])

    for ls, pred in zip(gold, preds):
        gold_spans = {(s.start, s.end, s.entity_type) for s in ls.spans}
        span_list = [(s.start, s.end, s.entity_type) for s in pred.spans]
        pred_spans = set(span_list)
        if len(pred_spans) != len(span_list):
            raise ValueError("prediction contains duplicate spans")
        for span in pred_spans:
            if span in gold_spans:
                tp += 1
                bucket(span[2])[0] += 1
            else:
                fp += 1
                bucket(span[2])[1] += 1
        for span in gold_spans - pred_spans:
            fn += 1
            bucket(span[2])[2] += 1
    per_type = {t: _prf(*counts) for t, counts in sorted(by_type.items())}
    return _prf(tp, fp, fn), per_type


def exact_match_prf(
    gold: Sequence[LabeledSentence], preds: Sequence[Prediction]
) -> tuple[float, float, float]:
    micro, _ = exact_match_counts(gold, preds)
    return micro.precision, micro.recall, micro.f1


def run_protocol(
    test_corpus: Sequence[LabeledSentence],
    pool: SupportSet,
    encoder: Encoder,
    scoring_cfg: ScoringConfig,
    protocol: EvalProtocol,
) -> EvalReport:
    """Repeated budgeted evaluation; each (budget, trial) has its own derived seed.

    The sampled support set for a given (seed, budget, trial) is independent of
    the scoring configuration, so algorithm comparisons are paired.
    """
    rows: list[TrialResult] = []
    for budget in protocol.budgets:
        for trial in range(protocol.trials):
            rng = np.random.default_rng(
                np.random.SeedSequence([protocol.seed, budget, trial])
            )
            sample = sample_support(pool, budget, rng)
            encoded = encode_support_set(sample, encoder)
            preds = [
                predict(ls.sentence, encoded, encoder, scoring_cfg) for ls in test_corpus
            ]
            micro, per_type = exact_match_counts(test_corpus, preds)
            rows.append(TrialResult(budget=budget, trial=trial, micro=micro, per_type=per_type))
            log.info(
                "budget %d trial %d: P=%.4f R=%.4f F1=%.4f",
                budget, trial, micro.precision, micro.recall, micro.f1,
            )
    return EvalReport(rows=rows)
