"""Entity-level scoring: exact-span micro-averaged precision/recall/F1.

A predicted span is correct iff its (start, end, type) triple matches a
gold span.  Predictions are BIO-repaired before span extraction, since
unconstrained Viterbi may emit I-x after O; gold is required to be
consistent.  All math runs in full precision; rounding (half-up, two
decimals) happens only when rendering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence

from .corpus import LabeledSentence, TagSet, bio_repair, bio_spans


class EvalError(ValueError):
    pass


def _prf(matched: int, n_pred: int, n_gold: int) -> tuple[float, float, float]:
    p = 100.0 * matched / n_pred if n_pred else 0.0
    r = 100.0 * matched / n_gold if n_gold else 0.0
    f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


@dataclass(frozen=True)
class TypeScore:
    precision: float
    recall: float
    f1: float
    gold_count: int
    pred_count: int
    match_count: int


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    token_accuracy: float
    gold_count: int
    pred_count: int
    match_count: int
    per_type: dict[str, TypeScore]


def entity_f1(
    gold: Sequence[LabeledSentence],
    pred: Sequence[Sequence[int]],
    tagset: TagSet,
) -> EvalReport:
    """Score predicted tag sequences against gold annotation.

    ``pred[i]`` must align with ``gold[i]`` token for token.  Token
    accuracy is measured after BIO repair, i.e. on the tags that span
    extraction actually sees.
    """
    if len(gold) != len(pred):
        raise EvalError(
            f"{len(gold)} gold sentences but {len(pred)} predictions"
        )
    types = list(tagset.entity_types)
    gold_n = {t: 0 for t in types}
    pred_n = {t: 0 for t in types}
    match_n = {t: 0 for t in types}
    correct_tokens = 0
    total_tokens = 0
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g.tags) != len(p):
            raise EvalError(
                f"sentence {i}: {len(g.tags)} gold tags but {len(p)} predicted"
            )
        repaired, _ = bio_repair(p, tagset)
        total_tokens += len(repaired)
        correct_tokens += sum(a == b for a, b in zip(repaired, g.tags))
        g_spans = set(bio_spans(g.tags, tagset))
        p_spans = set(bio_spans(repaired, tagset))
        for span in g_spans:
            gold_n[span[2]] += 1
        for span in p_spans:
            pred_n[span[2]] += 1
        for span in g_spans & p_spans:
            match_n[span[2]] += 1
    per_type = {}
    for t in types:
        p, r, f1 = _prf(match_n[t], pred_n[t], gold_n[t])
        per_type[t] = TypeScore(p, r, f1, gold_n[t], pred_n[t], match_n[t])
    matched = sum(match_n.values())
    n_pred = sum(pred_n.values())
    n_gold = sum(gold_n.values())
    p, r, f1 = _prf(matched, n_pred, n_gold)
    acc = 100.0 * correct_tokens / total_tokens if total_tokens else 0.0
    return EvalReport(p, r, f1, acc, n_gold, n_pred, matched, per_type)


def round2(value: float) -> float:
    """Half-up rounding to two decimals, for rendering only."""
    return float(Decimal(repr(value)).quantize(Decimal("0.01"), ROUND_HALF_UP))


def _fmt(value: float) -> str:
    return f"{round2(value):.2f}"


def render_text(report: EvalReport) -> str:
    lines = [
        f"{'type':<8} {'P':>7} {'R':>7} {'F1':>7} {'gold':>6} {'pred':>6}",
        f"{'ALL':<8} {_fmt(report.precision):>7} {_fmt(report.recall):>7} "
        f"{_fmt(report.f1):>7} {report.gold_count:>6} {report.pred_count:>6}",
    ]
    for t, s in report.per_type.items():
        lines.append(
            f"{t.upper():<8} {_fmt(s.precision):>7} {_fmt(s.recall):>7} "
            f"{_fmt(s.f1):>7} {s.gold_count:>6} {s.pred_count:>6}"
        )
    lines.append(f"token accuracy {_fmt(report.token_accuracy)}")
    return "\n".join(lines)


def report_dict(report: EvalReport) -> dict:
    return {
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "token_accuracy": report.token_accuracy,
        "gold_count": report.gold_count,
        "pred_count": report.pred_count,
        "match_count": report.match_count,
        "per_type": {
            t: {
                "precision": s.precision,
                "recall": s.recall,
                "f1": s.f1,
                "gold_count": s.gold_count,
                "pred_count": s.pred_count,
                "match_count": s.match_count,
            }
            for t, s in report.per_type.items()
        },
    }


def report_json(report: EvalReport) -> str:
    return json.dumps(report_dict(report), indent=2, sort_keys=True)


@dataclass(frozen=True)
class DeltaRow:
    target: str
    source: str | None
    baseline_f1: float
    system_f1: float

    @property
    def delta(self) -> float:
        return self.system_f1 - self.baseline_f1


def delta_table(rows: Sequence[DeltaRow | dict]) -> str:
    """Paired-system comparison with signed two-decimal deltas."""
    parsed = [
        row if isinstance(row, DeltaRow) else DeltaRow(
            row["target"], row.get("source"), row["baseline_f1"], row["system_f1"]
        )
        for row in rows
    ]
    out = [f"{'target':<8} {'source':<8} {'baseline':>9} {'system':>9} {'delta':>8}"]
    for row in parsed:
        d = round2(row.delta)
        sign = "+" if d >= 0 else "-"
        cell = f"{sign}{abs(d):.2f}"
        out.append(
            f"{row.target:<8} {(row.source or '-'):<8} "
            f"{_fmt(row.baseline_f1):>9} {_fmt(row.system_f1):>9} {cell:>8}"
        )
    return "\n".join(out)
