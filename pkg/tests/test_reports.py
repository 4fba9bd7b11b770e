"""Tests for report documents and their renderings."""
import csv
import io
import json
from decimal import Decimal

import pytest

from costing import audit_costs
from errors import RenderError
from irmetrics import EvalReport
from reports import (FORMATS, cost_document, eval_document, leaderboard_document,
                     pareto_document, render, sweep_document)
from scoring import (RankedLeaderboard, pareto_frontier, rank_by_accuracy_under_budget,
                     rank_dynascore, weight_sweep)


@pytest.fixture(scope="module")
def msmarco_document(msmarco_records, catalog):
    board = rank_dynascore(msmarco_records)
    return leaderboard_document(board, "msmarco-dev leaderboard", catalog.snapshot_date)


class TestMarkdown:

    def test_top_row(self, msmarco_document):
        lines = render(msmarco_document, "markdown").splitlines()
        assert lines[0] == "# msmarco-dev leaderboard"
        assert lines[4] == "| Rank | System | Hardware | Dynascore |"
        assert lines[6] == "| 1 | ColBERTv2-M | 16 CPU, 32 GB memory | 19.502 |"

    def test_footnotes(self, msmarco_document):
        text = render(msmarco_document, "markdown")
        assert "- Catalog snapshot: 2022-11-01" in text
        assert "- AMRS convention: merge" in text
        assert "- AMRS[latency_ms] = " in text
        assert "- AMRS[cost_usd_per_1m] = " in text

    def test_convention_footnote_only_on_dynascore_boards(self, table1_records):
        board = rank_by_accuracy_under_budget(table1_records, "cost_usd_per_1m",
                                              Decimal("Infinity"))
        document = leaderboard_document(board, "budget board")
        assert not any(note.startswith("AMRS") for note in document.footnotes)
        assert document.footnotes == ["Catalog snapshot: none supplied"]

    def test_missing_snapshot_noted(self, msmarco_records):
        document = leaderboard_document(rank_dynascore(msmarco_records), "board")
        assert "Catalog snapshot: none supplied" in document.footnotes

    def test_empty_board_renders_header_only(self):
        document = leaderboard_document(RankedLeaderboard("dynascore", {}, []), "empty")
        lines = render(document, "markdown").splitlines()
        assert lines[4] == "| Rank | System | Hardware | Dynascore |"
        assert lines[5] == "|---|---|---|---|"
        assert not any(line.startswith("| 1 ") for line in lines)
        assert render(document, "csv") == "rank,system,hardware,score\n"

    def test_metric_columns_and_money_rounding(self, msmarco_records, catalog):
        board = rank_dynascore(msmarco_records)
        document = leaderboard_document(board, "board", catalog.snapshot_date,
                                        metric_columns=["mrr_at_10", "cost_usd_per_1m"])
        row = render(document, "markdown").splitlines()[6]
        assert row == "| 1 | ColBERTv2-M | 16 CPU, 32 GB memory | 19.502 | 39.7 | 10.09 |"


class TestMachineFormats:

    def test_csv_and_json_carry_the_same_rows(self, msmarco_document):
        csv_rows = list(csv.DictReader(io.StringIO(render(msmarco_document, "csv"))))
        payload = json.loads(render(msmarco_document, "json"))
        assert len(csv_rows) == len(payload["rows"]) == 28
        for csv_row, json_row in zip(csv_rows, payload["rows"]):
            assert int(csv_row["rank"]) == json_row["rank"]
            assert csv_row["system"] == json_row["system"]
            assert csv_row["hardware"] == json_row["hardware"]
            assert float(csv_row["score"]) == json_row["score"]

    def test_json_keeps_full_precision(self, msmarco_document):
        payload = json.loads(render(msmarco_document, "json"))
        assert payload["columns"] == ["rank", "system", "hardware", "score"]
        assert payload["rows"][0]["score"] == pytest.approx(19.5022, abs=1e-4)
        assert payload["rows"][0]["score"] != round(payload["rows"][0]["score"], 3)
        assert payload["footnotes"] == msmarco_document.footnotes

    def test_csv_and_json_keep_exact_decimals(self, msmarco_records):
        board = rank_dynascore(msmarco_records)
        document = leaderboard_document(board, "board")
        exact = [entry.score for entry in board.entries]
        csv_rows = list(csv.DictReader(io.StringIO(render(document, "csv"))))
        assert [Decimal(row["score"]) for row in csv_rows] == exact
        payload = json.loads(render(document, "json"), parse_float=Decimal)
        assert [row["score"] for row in payload["rows"]] == exact
        # more digits than a double can hold
        assert len(format(exact[0], "f").split(".")[1]) > 17

    def test_json_integers_and_nulls_stay_native(self):
        board = RankedLeaderboard("dynascore", {}, [])
        document = leaderboard_document(board, "t", metric_columns=["latency_ms"])
        document.rows.append({"rank": 1, "system": "A", "hardware": "h",
                              "score": Decimal("28"), "latency_ms": None})
        row = json.loads(render(document, "json"))["rows"][0]
        assert row == {"rank": 1, "system": "A", "hardware": "h", "score": 28,
                       "latency_ms": None}

    def test_unknown_format_rejected(self, msmarco_document):
        with pytest.raises(RenderError) as info:
            render(msmarco_document, "yaml")
        assert info.value.field == "format"
        assert set(FORMATS) == {"markdown", "csv", "json"}

    @pytest.mark.parametrize("fmt", FORMATS)
    def test_byte_stable(self, msmarco_records, catalog, fmt):
        first = leaderboard_document(rank_dynascore(msmarco_records), "b", catalog.snapshot_date)
        second = leaderboard_document(rank_dynascore(list(reversed(msmarco_records))), "b",
                                      catalog.snapshot_date)
        assert render(first, fmt) == render(second, fmt)


class TestOtherDocuments:

    def test_pareto_flags(self, table1_records):
        document = pareto_document(pareto_frontier(table1_records), "cost_usd_per_1m",
                                  "mrr_at_10")
        rows = list(csv.DictReader(io.StringIO(render(document, "csv"))))
        assert {row["dominated"] for row in rows} == {"true", "false"}
        assert any(note.startswith("Frontier: ") for note in document.footnotes)

    def test_sweep_rows(self, msmarco_records):
        cells = weight_sweep(msmarco_records, "0.5")
        document = sweep_document(cells, "merge")
        rows = list(csv.DictReader(io.StringIO(render(document, "csv"))))
        assert len(rows) == 6
        assert rows[-1]["w_acc"] == "1.0"
        assert rows[-1]["winner_system"] == "ColBERTv2-M"

    def test_cost_mismatch_footnote(self, msmarco_records, catalog):
        document = cost_document(audit_costs(msmarco_records, catalog), catalog.snapshot_date)
        assert ("Mismatch: BM25, 1 CPU, 32 GB memory reported 0.48 vs model 0.46"
                in document.footnotes)
        assert "Query count: 1000000" in document.footnotes

    def test_eval_document(self):
        report = EvalReport(k=10, query_count=2, mrr_at_k=75.0, success_at_k=100.0,
                            per_query={}, boundary_ties=["q3"], dataset="unit")
        text = render(eval_document(report), "markdown")
        assert "| mrr_at_10 | 75.0 |" in text
        assert "- Score ties at rank 10 decided by file order: q3" in text
