"""Tests for the latency x rate cost model."""
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catalog import find_instance
from costing import (annotate_costs, audit_costs, back_solve_hourly, cost_for_queries,
                     format_usd)
from errors import CostError, InstanceNotFoundError
from submissions import HardwareConfig, Provenance, SubmissionRecord

latencies = st.decimals(min_value=Decimal("0.1"), max_value=Decimal(5000), places=1)
rates = st.decimals(min_value=Decimal("0.001"), max_value=Decimal(50), places=4)


def _record(latency, instance="x2gd.large", cost=None, system="ColBERTv2-S"):
    metrics = {"mrr_at_10": Decimal("39.4"), "latency_ms": Decimal(latency)}
    if cost is not None:
        metrics["cost_usd_per_1m"] = Decimal(cost)
    return SubmissionRecord(system, "msmarco-dev", HardwareConfig(instance, 0, 1, Decimal(32)),
                            metrics, Provenance.REPORTED, "unit")


class TestCostForQueries:

    @pytest.mark.parametrize("latency,rate,expected", [
        ("54", "12.24", "183.60"),
        ("12", "3.06", "10.20"),
        ("32", "0.4536", "4.03"),
        ("16", "0.308", "1.37"),
        ("4", "0.0385", "0.04"),
    ])
    def test_exact_rows(self, latency, rate, expected):
        assert format_usd(cost_for_queries(latency, rate).usd) == Decimal(expected)

    def test_exact_amounts_stay_exact(self):
        assert cost_for_queries(54, Decimal("12.24")).usd == Decimal("183.6")
        assert cost_for_queries(12, Decimal("3.06")).usd == Decimal("10.2")
        assert cost_for_queries(32, Decimal("0.4536")).usd == Decimal("4.032")

    def test_zero_latency_costs_nothing(self):
        assert cost_for_queries(0, Decimal("3.06")).usd == 0

    def test_rejects_bad_inputs(self):
        with pytest.raises(CostError):
            cost_for_queries(-1, Decimal("1"))
        with pytest.raises(CostError):
            cost_for_queries(10, Decimal("-1"))
        with pytest.raises(CostError):
            cost_for_queries(10, Decimal("1"), query_count=0)
        with pytest.raises(CostError):
            cost_for_queries(True, Decimal("1"))

    def test_quote_echoes_inputs(self, catalog):
        quote = cost_for_queries(32, Decimal("0.4536"), instance_name="r6a.2xlarge",
                                 snapshot_date=catalog.snapshot_date)
        data = quote.to_dict()
        assert data["instance_name"] == "r6a.2xlarge"
        assert data["snapshot_date"] == "2022-11-01"
        assert quote.usd_cents == Decimal("4.03")

    @settings(max_examples=100, deadline=None)
    @given(latency=latencies, rate=rates, factor=st.integers(2, 10))
    def test_linear_in_latency_and_count(self, latency, rate, factor):
        base = cost_for_queries(latency, rate).usd
        tolerance = base * factor * Decimal("1e-24")
        assert abs(cost_for_queries(latency * factor, rate).usd - base * factor) <= tolerance
        assert abs(cost_for_queries(latency, rate, 1_000_000 * factor).usd
                   - base * factor) <= tolerance

    @settings(max_examples=100, deadline=None)
    @given(latency=latencies, rate=rates)
    def test_back_solve_inverts(self, latency, rate):
        usd = cost_for_queries(latency, rate).usd
        assert abs(back_solve_hourly(usd, latency) - rate) < Decimal("1e-20")

    def test_format_usd_rounds_half_up(self):
        assert format_usd(Decimal("0.125")) == Decimal("0.13")
        assert format_usd(Decimal("0.1249")) == Decimal("0.12")


class TestTableRows:

    def test_priced_table1_rows_to_the_cent(self, catalog, table1_records):
        for record in table1_records:
            rate = find_instance(catalog, record.hardware.instance_name).hourly_usd
            computed = format_usd(cost_for_queries(record.metrics["latency_ms"], rate).usd)
            assert computed == record.metrics["cost_usd_per_1m"], record.system

    def test_table2_rows_within_five_percent(self, catalog, msmarco_records, xor_records):
        lines = audit_costs(msmarco_records + xor_records, catalog, tolerance=Decimal("0.05"))
        assert len(lines) == 52
        assert all(line.within_tolerance for line in lines)

    def test_audit_flags_mismatch_beyond_two_percent(self, catalog, msmarco_records):
        lines = audit_costs(msmarco_records, catalog)
        flagged = {(line.system, line.instance_name) for line in lines
                   if line.within_tolerance is False}
        assert ("BM25", "x2gd.large") in flagged
        assert ("ColBERTv2-S", "x2gd.large") not in flagged

    def test_audit_requires_known_instance(self, catalog):
        with pytest.raises(InstanceNotFoundError):
            audit_costs([_record(10, instance="x9.huge")], catalog)


class TestAnnotate:

    def test_fills_missing_cost_unrounded(self, catalog):
        [record] = annotate_costs([_record(206)], catalog)
        assert record.metrics["cost_usd_per_1m"] == Decimal("9.567555555555555555555555555555556")
        assert format_usd(record.metrics["cost_usd_per_1m"]) == Decimal("9.57")

    def test_reported_cost_within_tolerance_kept(self, catalog):
        original = _record(206, cost="9.58")
        [record] = annotate_costs([original], catalog)
        assert record is original
        assert record.metrics["cost_usd_per_1m"] == Decimal("9.58")

    def test_reported_cost_outside_tolerance_kept_with_warning(self, catalog):
        original = _record(206, cost="12.00")
        [record] = annotate_costs([original], catalog)
        assert record.metrics["cost_usd_per_1m"] == Decimal("12.00")

    def test_missing_latency_rejected(self, catalog):
        record = SubmissionRecord("BM25", "msmarco-dev",
                                  HardwareConfig("m6g.medium", 0, 1, Decimal(4)),
                                  {"mrr_at_10": Decimal("19.7")}, Provenance.REPORTED, "unit")
        with pytest.raises(CostError):
            annotate_costs([record], catalog)

    def test_order_preserved(self, catalog):
        records = [_record(10, system="A"), _record(20, system="B", cost="0.93"),
                   _record(30, system="C")]
        assert [r.system for r in annotate_costs(records, catalog)] == ["A", "B", "C"]
