"""Exact-span scoring, rounding, and the paired-system delta table."""

import json

import pytest

from crosstag.corpus import LabeledSentence, Sentence, TagSet
from crosstag.evaluation import (
    DeltaRow,
    EvalError,
    delta_table,
    entity_f1,
    render_text,
    report_dict,
    report_json,
    round2,
)

# 10-sentence fixture: 7 gold spans, 6 predicted spans, 4 exact matches.
FIXTURE = [
    # (gold tags, predicted tags)
    (["B-PER", "I-PER", "O"], ["B-PER", "I-PER", "O"]),   # match
    (["B-LOC", "O"], ["B-LOC", "O"]),                     # match
    (["O", "B-ORG"], ["O", "B-LOC"]),                     # type error
    (["B-PER", "O", "B-LOC"], ["B-PER", "O", "O"]),       # match + miss
    (["O", "O"], ["O", "O"]),
    (["B-MISC", "I-MISC"], ["B-MISC", "I-MISC"]),         # match
    (["O", "B-PER", "O"], ["B-PER", "O", "O"]),           # boundary error
    (["O"], ["O"]),
    (["O", "O", "O"], ["O", "O", "O"]),
    (["O", "O"], ["O", "O"]),
]


def to_ids(tagset, names):
    return [tagset.index(t) for t in names]


def fixture_pair(tagset):
    gold, pred = [], []
    for i, (g, p) in enumerate(FIXTURE):
        tokens = tuple(f"w{i}_{j}" for j in range(len(g)))
        gold.append(LabeledSentence(Sentence(tokens, "xx"), tuple(to_ids(tagset, g))))
        pred.append(to_ids(tagset, p))
    return gold, pred


class TestEntityF1:
    def test_identity_is_perfect(self, tagset, mk):
        gold = [mk(["Ana", "runs"], ["B-PER", "O"])]
        report = entity_f1(gold, [list(gold[0].tags)], tagset)
        assert (report.precision, report.recall, report.f1) == (100.0, 100.0, 100.0)
        assert report.token_accuracy == 100.0

    def test_boundary_mismatch_scores_zero(self, tagset, mk):
        gold = [mk(["Ana", "Lima", "runs"], ["B-PER", "I-PER", "O"])]
        pred = [to_ids(tagset, ["B-PER", "O", "O"])]
        report = entity_f1(gold, pred, tagset)
        assert (report.precision, report.recall, report.f1) == (0.0, 0.0, 0.0)

    def test_empty_intersection_of_no_spans(self, tagset, mk):
        gold = [mk(["a", "b"], ["O", "O"])]
        report = entity_f1(gold, [to_ids(tagset, ["O", "O"])], tagset)
        assert (report.precision, report.recall, report.f1) == (0.0, 0.0, 0.0)
        assert report.token_accuracy == 100.0

    def test_fixture_counts_and_scores(self, tagset):
        gold, pred = fixture_pair(tagset)
        report = entity_f1(gold, pred, tagset)
        assert (report.gold_count, report.pred_count, report.match_count) == (7, 6, 4)
        assert round2(report.precision) == 66.67
        assert round2(report.recall) == 57.14
        assert round2(report.f1) == 61.54

    def test_swapping_gold_and_pred_swaps_p_and_r(self, tagset):
        gold, pred = fixture_pair(tagset)
        forward = entity_f1(gold, pred, tagset)
        flipped_gold = [
            LabeledSentence(g.sentence, tuple(p)) for g, p in zip(gold, pred)
        ]
        flipped_pred = [list(g.tags) for g in gold]
        backward = entity_f1(flipped_gold, flipped_pred, tagset)
        assert backward.precision == forward.recall
        assert backward.recall == forward.precision
        assert backward.f1 == forward.f1
        assert backward.gold_count == forward.pred_count
        assert backward.pred_count == forward.gold_count

    def test_sentence_reordering_is_invariant(self, tagset):
        gold, pred = fixture_pair(tagset)
        report = entity_f1(gold, pred, tagset)
        order = [7, 2, 9, 0, 5, 3, 8, 1, 6, 4]
        shuffled = entity_f1([gold[i] for i in order], [pred[i] for i in order], tagset)
        assert report == shuffled

    def test_per_type_recomposition(self, tagset):
        gold, pred = fixture_pair(tagset)
        report = entity_f1(gold, pred, tagset)
        assert sum(s.gold_count for s in report.per_type.values()) == report.gold_count
        assert sum(s.pred_count for s in report.per_type.values()) == report.pred_count
        assert sum(s.match_count for s in report.per_type.values()) == report.match_count
        assert set(report.per_type) == set(tagset.entity_types)

    def test_per_type_scores(self, tagset):
        gold, pred = fixture_pair(tagset)
        report = entity_f1(gold, pred, tagset)
        per = report.per_type["per"]
        assert (per.gold_count, per.pred_count, per.match_count) == (3, 3, 2)
        org = report.per_type["org"]
        assert (org.gold_count, org.pred_count, org.match_count) == (1, 0, 0)
        assert (org.precision, org.recall, org.f1) == (0.0, 0.0, 0.0)

    def test_predictions_are_repaired_before_scoring(self, tagset, mk):
        gold = [mk(["Ana", "Lima"], ["B-PER", "I-PER"])]
        dangling = [to_ids(tagset, ["I-PER", "I-PER"])]  # repairs to B-PER I-PER
        report = entity_f1(gold, dangling, tagset)
        assert report.f1 == 100.0
        assert report.token_accuracy == 100.0

    def test_token_accuracy_counts_after_repair(self, tagset, mk):
        gold = [mk(["a", "b", "c", "d"], ["B-PER", "O", "O", "O"])]
        pred = [to_ids(tagset, ["B-PER", "O", "O", "B-LOC"])]
        report = entity_f1(gold, pred, tagset)
        assert report.token_accuracy == 75.0

    def test_sentence_count_mismatch(self, tagset, mk):
        gold = [mk(["a"], ["O"]), mk(["b"], ["O"])]
        with pytest.raises(EvalError, match="2 gold"):
            entity_f1(gold, [[0]], tagset)

    def test_tag_length_mismatch_names_sentence(self, tagset, mk):
        gold = [mk(["a"], ["O"]), mk(["b", "c"], ["O", "O"])]
        with pytest.raises(EvalError, match="sentence 1"):
            entity_f1(gold, [[0], [0]], tagset)


class TestRounding:
    @pytest.mark.parametrize(
        "raw,rounded",
        [
            (66.66666666666667, 66.67),
            (57.142857142857146, 57.14),
            (61.53846153846154, 61.54),
            (0.005, 0.01),     # half goes up
            (2.675, 2.68),
            (-8.450000000000003, -8.45),
            (100.0, 100.0),
        ],
    )
    def test_half_up(self, raw, rounded):
        assert round2(raw) == rounded


class TestRendering:
    def test_text_table(self, tagset):
        gold, pred = fixture_pair(tagset)
        text = render_text(entity_f1(gold, pred, tagset))
        assert "ALL" in text
        assert "66.67" in text and "57.14" in text and "61.54" in text
        for t in tagset.entity_types:
            assert t.upper() in text
        assert "token accuracy" in text

    def test_json_report_round_trips(self, tagset):
        gold, pred = fixture_pair(tagset)
        report = entity_f1(gold, pred, tagset)
        data = json.loads(report_json(report))
        assert data == report_dict(report)
        assert data["gold_count"] == 7
        assert data["per_type"]["per"]["match_count"] == 2
        # full-precision values in the machine-readable form
        assert data["precision"] == report.precision


class TestDeltaTable:
    def test_reference_rows(self):
        table = delta_table(
            [
                DeltaRow("gl", None, 57.64, 49.19),
                DeltaRow("gl", "es", 71.46, 76.40),
                DeltaRow("eu", "es", 60.0, 60.0),
            ]
        )
        lines = table.splitlines()
        assert lines[1].endswith("-8.45")
        assert lines[2].endswith("+4.94")
        assert lines[3].endswith("+0.00")

    def test_delta_property(self):
        row = DeltaRow("gl", "es", 71.46, 76.40)
        assert row.delta == pytest.approx(4.94)

    def test_dict_rows_accepted(self):
        table = delta_table(
            [{"target": "gl", "baseline_f1": 50.0, "system_f1": 51.5}]
        )
        assert "+1.50" in table
        assert " - " in table or "-  " in table  # missing source placeholder

    def test_header_and_alignment(self):
        table = delta_table([DeltaRow("gl", "es", 1.0, 2.0)])
        header, row = table.splitlines()
        assert header.split() == ["target", "source", "baseline", "system", "delta"]
        assert len(header) == len(row)
