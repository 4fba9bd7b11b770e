"""End-to-end tests for the irledger command line."""
import csv
import io
import json

import pytest

from cli import main
from config import Config
from conftest import CATALOG_FILE, MSMARCO_FILE, TABLE1_FILE, XOR_FILE


@pytest.fixture
def store(tmp_path, capsys):
    path = tmp_path / "store.jsonl"
    for source in (MSMARCO_FILE, XOR_FILE):
        assert main(["ingest", "--input", str(source), "--store", str(path),
                     "--catalog", str(CATALOG_FILE)]) == 0
    capsys.readouterr()
    return path


def _run(capsys, *argv):
    code = main([str(arg) for arg in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestUsage:

    def test_no_command(self, capsys):
        assert _run(capsys)[0] == 2

    def test_unknown_command(self, capsys):
        assert _run(capsys, "bogus")[0] == 2

    def test_missing_required_argument(self, capsys):
        assert _run(capsys, "rank")[0] == 2

    def test_bad_number(self, capsys):
        assert _run(capsys, "sweep", "--dataset", "x", "--step", "abc")[0] == 2

    def test_version(self, capsys):
        code, out, _ = _run(capsys, "--version")
        assert code == 0
        assert "irledger v1.0.0" in out


class TestIngest:

    def test_reports_appended_count(self, tmp_path, capsys):
        path = tmp_path / "s.jsonl"
        code, out, _ = _run(capsys, "ingest", "--input", MSMARCO_FILE, "--store", path,
                            "--catalog", CATALOG_FILE)
        assert code == 0
        assert json.loads(out) == {"appended": 28, "store": str(path)}
        assert len(path.read_text(encoding="utf-8").splitlines()) == 28

    def test_duplicate_batch_rejected(self, store, capsys):
        code, _, err = _run(capsys, "ingest", "--input", MSMARCO_FILE, "--store", store,
                            "--catalog", CATALOG_FILE)
        assert code == 1
        assert "error: Duplicate submission" in err
        assert len(store.read_text(encoding="utf-8").splitlines()) == 52

    def test_bounds_check_can_be_skipped(self, tmp_path, capsys):
        path = tmp_path / "t1.jsonl"
        assert _run(capsys, "ingest", "--input", TABLE1_FILE, "--store", path,
                    "--catalog", CATALOG_FILE)[0] == 1
        assert _run(capsys, "ingest", "--input", TABLE1_FILE, "--store", path,
                    "--no-bounds-check")[0] == 0

    def test_missing_input(self, tmp_path, capsys):
        assert _run(capsys, "ingest", "--input", tmp_path / "nope.jsonl",
                    "--store", tmp_path / "s.jsonl")[0] == 1


class TestRank:

    def test_default_board(self, store, capsys):
        code, out, _ = _run(capsys, "rank", "--store", store, "--dataset", "msmarco-dev",
                            "--catalog", CATALOG_FILE)
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "# msmarco-dev leaderboard"
        assert lines[6].startswith("| 1 | ColBERTv2-M | 16 CPU, 32 GB memory | 19.502 |")
        assert "- Catalog snapshot: 2022-11-01" in lines

    def test_xor_board(self, store, capsys):
        code, out, _ = _run(capsys, "rank", "--store", store, "--dataset", "xor-tydi",
                            "--format", "json")
        assert code == 0
        top = json.loads(out)["rows"][0]
        assert (top["system"], top["hardware"]) == ("ColBERTv2-L", "16 CPU, 64 GB memory")

    def test_weights_must_sum_to_one(self, store, capsys):
        code, _, err = _run(capsys, "rank", "--store", store, "--dataset", "msmarco-dev",
                            "--weights", "mrr_at_10=0.5,latency_ms=0.4")
        assert code == 1
        assert "weights sum to 0.9" in err

    def test_budget_needs_threshold(self, store, capsys):
        assert _run(capsys, "rank", "--store", store, "--dataset", "msmarco-dev",
                    "--strategy", "budget")[0] == 1

    def test_filter_that_removes_everything(self, store, capsys):
        code, _, err = _run(capsys, "rank", "--store", store, "--dataset", "msmarco-dev",
                            "--filter", "latency_ms<=0.5")
        assert code == 1
        assert "No entries left" in err

    def test_output_is_deterministic(self, store, capsys):
        argv = ["rank", "--store", store, "--dataset", "msmarco-dev", "--catalog", CATALOG_FILE]
        first = _run(capsys, *argv)[1]
        assert _run(capsys, *argv)[1] == first

    def test_config_file_supplies_weights(self, store, tmp_path, capsys, monkeypatch):
        monkeypatch.setattr(Config, "DEFAULT_WEIGHTS", Config.DEFAULT_WEIGHTS)
        config = tmp_path / "irledger.env"
        config.write_text("IRLEDGER_WEIGHTS=mrr_at_10=0.9,latency_ms=0.05,cost_usd_per_1m=0.05\n",
                          encoding="utf-8")
        code, out, _ = _run(capsys, "--config", config, "rank", "--store", store,
                            "--dataset", "msmarco-dev")
        assert code == 0
        assert out.splitlines()[6].startswith("| 1 | ColBERTv2-M | 16 CPU, 32 GB memory | 35.660 |")

    def test_missing_config_file(self, store, tmp_path, capsys):
        assert _run(capsys, "--config", tmp_path / "absent.env", "rank", "--store", store,
                    "--dataset", "msmarco-dev")[0] == 1


class TestOtherCommands:

    def test_sweep_csv(self, store, capsys):
        code, out, _ = _run(capsys, "sweep", "--store", store, "--dataset", "msmarco-dev",
                            "--step", "0.05")
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert len(out.splitlines()) == 232
        assert rows[-1]["winner_system"] == "ColBERTv2-M"

    def test_pareto_csv(self, tmp_path, capsys):
        path = tmp_path / "t1.jsonl"
        _run(capsys, "ingest", "--input", TABLE1_FILE, "--store", path, "--no-bounds-check")
        code, out, _ = _run(capsys, "pareto", "--store", path)
        assert code == 0
        assert out.splitlines()[0] == "system,hardware,instance,cost_usd_per_1m,mrr_at_10,dominated"
        assert len(out.splitlines()) == 11

    def test_cost_csv(self, store, capsys):
        code, out, _ = _run(capsys, "cost", "--store", store, "--dataset", "msmarco-dev",
                            "--catalog", CATALOG_FILE)
        assert code == 0
        assert out.splitlines()[0] == "system,hardware,latency_ms,hourly_usd,usd_per_1m"
        assert len(out.splitlines()) == 29

    def test_cost_needs_catalog(self, store, capsys, monkeypatch):
        monkeypatch.setattr(Config, "CATALOG_PATH", "")
        assert _run(capsys, "cost", "--store", store)[0] == 1

    def test_eval_json(self, tmp_path, capsys):
        qrels = tmp_path / "qrels"
        qrels.write_text("q1 0 a 1\nq2 0 z 1\n", encoding="utf-8")
        run = tmp_path / "run"
        run.write_text("q1 Q0 x 1 9.0 t\nq1 Q0 a 2 8.0 t\nq2 Q0 z 1 5.0 t\n", encoding="utf-8")
        code, out, _ = _run(capsys, "eval", "--qrels", qrels, "--run", run)
        assert code == 0
        report = json.loads(out)
        assert report["mrr_at_10"] == 75.0
        assert report["success_at_10"] == 100.0
        assert "per_query" not in report

    def test_min_instance(self, capsys):
        code, out, _ = _run(capsys, "min-instance", "--catalog", CATALOG_FILE,
                            "--cpus", 8, "--ram", 32, "--arch", "x86_64")
        assert code == 0
        payload = json.loads(out)
        assert payload["name"] == "r6a.2xlarge"
        assert payload["snapshot_date"] == "2022-11-01"

    def test_min_instance_infeasible(self, capsys):
        assert _run(capsys, "min-instance", "--catalog", CATALOG_FILE,
                    "--gpus", 16, "--cpus", 1, "--ram", 1)[0] == 1

    @pytest.mark.timeout(60)
    def test_probe_emits_record(self, stub_server, query_file, tmp_path, capsys):
        stub = stub_server()
        qrels = tmp_path / "qrels"
        qrels.write_text("q1 0 d0 1\n", encoding="utf-8")
        run = tmp_path / "run"
        run.write_text("q1 Q0 d0 1 9.0 t\n", encoding="utf-8")
        store = tmp_path / "probe.jsonl"
        code, out, _ = _run(capsys, "probe", "--endpoint", stub.url, "--queries", query_file,
                            "--sample", 5, "--trials", 1, "--warmup", 1, "--system", "BM25",
                            "--dataset", "unit", "--instance", "m6g.medium", "--ram", 4,
                            "--qrels", qrels, "--run", run, "--store", store)
        assert code == 0
        record = json.loads(out.strip().splitlines()[-1])
        assert record["metrics"]["mrr_at_10"] == 100.0
        assert record["provenance"] == "measured"
        assert len(store.read_text(encoding="utf-8").splitlines()) == 1

    @pytest.mark.timeout(30)
    def test_probe_unreachable(self, closed_port, query_file, capsys):
        assert _run(capsys, "probe", "--endpoint", f"http://127.0.0.1:{closed_port}",
                    "--queries", query_file, "--sample", 2, "--trials", 1)[0] == 1
