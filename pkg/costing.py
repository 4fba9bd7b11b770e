"""Dollar cost of serving a fixed query volume on a rented instance.

The instance is billed for latency x query_count with one query in flight:

    usd = latency_ms * query_count * hourly_usd / 3,600,000

All arithmetic is Decimal; rounding to cents (half-up) happens only when a
value is displayed.
"""
from dataclasses import dataclass
from datetime import date
from decimal import ROUND_HALF_UP, Decimal, localcontext
from typing import Any, Dict, List, Optional

from catalog import PricingCatalog, find_instance
from config import Config
from errors import CostError
from logger import logger
from metrics import COST_USD_PER_1M, LATENCY_MS
from submissions import SubmissionRecord
from utils import to_decimal

MS_PER_HOUR = Decimal(3_600_000)
CENT = Decimal("0.01")
PRECISION = 34
DEFAULT_QUERY_COUNT = 1_000_000


@dataclass(frozen=True)
class CostQuote:
    """A cost with every input echoed for auditing."""
    usd: Decimal
    query_count: int
    latency_ms: Decimal
    hourly_usd: Decimal
    instance_name: str = ""
    snapshot_date: Optional[date] = None

    @property
    def usd_cents(self) -> Decimal:
        return format_usd(self.usd)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "usd": self.usd,
            "query_count": self.query_count,
            "instance_name": self.instance_name,
            "latency_ms": self.latency_ms,
            "hourly_usd": self.hourly_usd,
            "snapshot_date": self.snapshot_date.isoformat() if self.snapshot_date else None,
        }


def format_usd(value) -> Decimal:
    """Round to cents, half-up."""
    return to_decimal(value, "usd").quantize(CENT, rounding=ROUND_HALF_UP)


def cost_for_queries(latency_ms, hourly_usd, query_count: int = DEFAULT_QUERY_COUNT,
                     instance_name: str = "",
                     snapshot_date: Optional[date] = None) -> CostQuote:
    """Cost of running query_count sequential queries.

    Args:
        latency_ms: Mean per-query latency in milliseconds
        hourly_usd: Instance rental rate
        query_count: Number of queries billed

    Returns:
        CostQuote with the unrounded amount

    Raises:
        CostError: on negative inputs or a query count below 1
    """
    try:
        latency = to_decimal(latency_ms, "latency_ms")
        rate = to_decimal(hourly_usd, "hourly_usd")
    except ValueError as e:
        raise CostError(str(e)) from e
    if latency < 0:
        raise CostError(f"latency_ms must be >= 0, got {latency}", field="latency_ms")
    if rate < 0:
        raise CostError(f"hourly_usd must be >= 0, got {rate}", field="hourly_usd")
    if isinstance(query_count, bool) or not isinstance(query_count, int) or query_count < 1:
        raise CostError(f"query_count must be an integer >= 1, got {query_count!r}",
                        field="query_count")

    # multiply before dividing so exact rows stay exact
    with localcontext() as ctx:
        ctx.prec = PRECISION
        usd = latency * query_count * rate / MS_PER_HOUR

    return CostQuote(usd=usd, query_count=query_count, latency_ms=latency,
                     hourly_usd=rate, instance_name=instance_name,
                     snapshot_date=snapshot_date)


def back_solve_hourly(usd, latency_ms, query_count: int = DEFAULT_QUERY_COUNT) -> Decimal:
    """Hourly rate implied by a published cost; inverse of cost_for_queries."""
    amount = to_decimal(usd, "usd")
    latency = to_decimal(latency_ms, "latency_ms")
    if latency <= 0 or query_count < 1:
        raise CostError("Back-solving needs latency_ms > 0 and query_count >= 1",
                        field="latency_ms")
    with localcontext() as ctx:
        ctx.prec = PRECISION
        return amount * MS_PER_HOUR / (latency * query_count)


@dataclass(frozen=True)
class CostAuditLine:
    system: str
    hardware: str
    instance_name: str
    latency_ms: Decimal
    hourly_usd: Decimal
    usd_per_1m: Decimal
    reported_usd: Optional[Decimal] = None
    within_tolerance: Optional[bool] = None

    def to_row(self) -> Dict[str, Any]:
        return {
            "system": self.system,
            "hardware": self.hardware,
            "latency_ms": self.latency_ms,
            "hourly_usd": self.hourly_usd,
            "usd_per_1m": format_usd(self.usd_per_1m),
        }


def _relative_gap(reported: Decimal, computed: Decimal) -> Decimal:
    if computed == 0:
        return Decimal(0) if reported == 0 else Decimal("Infinity")
    return abs(reported - computed) / computed


def audit_costs(records: List[SubmissionRecord], catalog: PricingCatalog,
                query_count: int = DEFAULT_QUERY_COUNT,
                tolerance: Optional[Decimal] = None) -> List[CostAuditLine]:
    """Compute the cost of every record and compare with any reported cost."""
    limit = to_decimal(tolerance if tolerance is not None else Config.COST_TOLERANCE, "tolerance")
    lines = []
    for record in records:
        latency = record.metric(LATENCY_MS.key)
        if latency is None:
            raise CostError(f"{record.system} on {record.hardware.describe()} has no latency_ms",
                            field="metrics.latency_ms")
        instance = find_instance(catalog, record.hardware.instance_name)
        quote = cost_for_queries(latency, instance.hourly_usd, query_count,
                                 instance_name=instance.name,
                                 snapshot_date=catalog.snapshot_date)
        reported = record.metric(COST_USD_PER_1M.key)
        within = None
        if reported is not None:
            within = _relative_gap(reported, quote.usd) <= limit
        lines.append(CostAuditLine(
            system=record.system,
            hardware=record.hardware.describe(),
            instance_name=instance.name,
            latency_ms=quote.latency_ms,
            hourly_usd=quote.hourly_usd,
            usd_per_1m=quote.usd,
            reported_usd=reported,
            within_tolerance=within,
        ))
    return lines


def annotate_costs(records: List[SubmissionRecord], catalog: PricingCatalog,
                   query_count: int = DEFAULT_QUERY_COUNT,
                   tolerance: Optional[Decimal] = None) -> List[SubmissionRecord]:
    """Fill cost_usd_per_1m from latency and the instance rate.

    Records that already carry a cost keep it; the value is checked against
    the model and a warning is logged when it is off by more than the
    tolerance (2% unless configured otherwise).

    Returns:
        New records, input order preserved
    """
    annotated = []
    mismatches = 0
    for record, line in zip(records, audit_costs(records, catalog, query_count, tolerance)):
        if line.reported_usd is None:
            annotated.append(record.with_metric(COST_USD_PER_1M.key, line.usd_per_1m))
            continue
        if not line.within_tolerance:
            mismatches += 1
            logger.warning("⚠ Reported cost disagrees with cost model",
                           system=record.system, hardware=line.hardware,
                           instance=line.instance_name,
                           reported=str(line.reported_usd),
                           computed=str(format_usd(line.usd_per_1m)))
        annotated.append(record)

    logger.info("✓ Costs annotated", records=len(annotated), mismatches=mismatches,
                snapshot_date=catalog.snapshot_date.isoformat(), query_count=query_count)
    return annotated
