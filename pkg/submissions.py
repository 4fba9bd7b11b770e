"""Submission records: the measurement rows every leaderboard is built from.

One JSONL line per (system, dataset, hardware) measurement::

    {"system": "ColBERTv2-M", "dataset": "msmarco-dev",
     "hardware": {"instance": "c7g.4xlarge", "gpus_used": 0,
                  "cpu_threads_used": 16, "ram_gib_available": 32},
     "metrics": {"mrr_at_10": 39.7, "success_at_10": 69.6, "latency_ms": 63.0},
     "provenance": "reported", "source": "results-2022-11"}

Accuracy metrics are percentage points. A metric that was not measured is
left out of ``metrics``; it is never written as 0.
"""
import json
import os
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

from jsonschema import Draft7Validator

from catalog import PricingCatalog, find_instance
from errors import DuplicateSubmissionError, IRLedgerError, SubmissionError
from logger import logger
from metrics import LATENCY_MS, get_metric
from utils import canonical_json, format_decimal, to_decimal

ACCURACY_RANGE = (Decimal(0), Decimal(100))

SUBMISSION_SCHEMA = {
    "type": "object",
    "required": ["system", "dataset", "hardware", "metrics", "provenance", "source"],
    "additionalProperties": False,
    "properties": {
        "system": {"type": "string", "minLength": 1},
        "dataset": {"type": "string", "minLength": 1},
        "hardware": {
            "type": "object",
            "required": ["instance", "gpus_used", "cpu_threads_used", "ram_gib_available"],
            "additionalProperties": False,
            "properties": {
                "instance": {"type": "string", "minLength": 1},
                "gpus_used": {"type": "integer", "minimum": 0},
                "cpu_threads_used": {"type": "integer", "minimum": 1},
                "ram_gib_available": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "metrics": {
            "type": "object",
            "minProperties": 1,
            "additionalProperties": {"type": "number"},
        },
        "provenance": {"enum": ["reported", "measured"]},
        "source": {"type": "string"},
    },
}

_VALIDATOR = Draft7Validator(SUBMISSION_SCHEMA)


class Provenance(str, Enum):
    REPORTED = "reported"
    MEASURED = "measured"


@dataclass(frozen=True)
class HardwareConfig:
    """Instance plus the share of it a measurement actually used."""
    instance_name: str
    gpus_used: int
    cpu_threads_used: int
    ram_gib_available: Decimal

    def describe(self) -> str:
        """Leaderboard label, e.g. '1 GPU, 16 CPU, 32 GB memory'."""
        parts = []
        if self.gpus_used:
            parts.append(f"{self.gpus_used} GPU")
        parts.append(f"{self.cpu_threads_used} CPU")
        parts.append(f"{format_decimal(self.ram_gib_available)} GB memory")
        return ", ".join(parts)

    def key(self) -> Tuple[str, int, int, Decimal]:
        return (self.instance_name, self.gpus_used, self.cpu_threads_used, self.ram_gib_available)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "instance": self.instance_name,
            "gpus_used": self.gpus_used,
            "cpu_threads_used": self.cpu_threads_used,
            "ram_gib_available": self.ram_gib_available,
        }


@dataclass(frozen=True)
class SubmissionRecord:
    system: str
    dataset: str
    hardware: HardwareConfig
    metrics: Dict[str, Decimal] = field(hash=False)
    provenance: Provenance
    source: str

    @property
    def entry_id(self) -> str:
        """Stable leaderboard identifier: system plus hardware label."""
        return f"{self.system} | {self.hardware.describe()} | {self.hardware.instance_name}"

    def key(self) -> Tuple[str, str, Tuple]:
        return (self.system, self.dataset, self.hardware.key())

    def metric(self, name: str) -> Optional[Decimal]:
        return self.metrics.get(name)

    def with_metric(self, name: str, value: Decimal) -> "SubmissionRecord":
        """Copy of this record with one metric set."""
        metrics = dict(self.metrics)
        metrics[name] = value
        return SubmissionRecord(self.system, self.dataset, self.hardware, metrics,
                                self.provenance, self.source)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "system": self.system,
            "dataset": self.dataset,
            "hardware": self.hardware.to_dict(),
            "metrics": dict(self.metrics),
            "provenance": self.provenance.value,
            "source": self.source,
        }

    def to_json_line(self) -> str:
        return canonical_json(self.to_dict())


def validate_metrics(metrics: Dict[str, Any], where: str = "") -> Dict[str, Decimal]:
    """Check metric names and ranges, returning Decimal values in input order.

    Args:
        metrics: Raw metric mapping
        where: Location prefix for error messages (e.g. 'line 3: ')

    Returns:
        Validated mapping
    """
    validated: Dict[str, Decimal] = {}
    has_accuracy = False
    for name, raw in metrics.items():
        try:
            metric = get_metric(name)
        except SubmissionError as e:
            raise SubmissionError(f"{where}{e.message}", field=e.field) from e
        try:
            value = to_decimal(raw, name)
        except ValueError as e:
            raise SubmissionError(f"{where}{e}", field=f"metrics.{name}") from e

        if metric.is_accuracy:
            has_accuracy = True
            low, high = ACCURACY_RANGE
            if not low <= value <= high:
                raise SubmissionError(
                    f"{where}{name} must be within [0, 100] percentage points, got {value}",
                    field=f"metrics.{name}",
                )
        elif name == LATENCY_MS.key:
            if value <= 0:
                raise SubmissionError(f"{where}latency_ms must be > 0, got {value}",
                                      field="metrics.latency_ms")
        elif value < 0:
            raise SubmissionError(f"{where}{name} must be non-negative, got {value}",
                                  field=f"metrics.{name}")
        validated[name] = value

    if not has_accuracy:
        raise SubmissionError(f"{where}metrics need at least one accuracy metric",
                              field="metrics")
    return validated


def check_hardware(hardware: HardwareConfig, catalog: PricingCatalog, where: str = "") -> None:
    """Resolve the instance and check the used resources fit inside it."""
    instance = find_instance(catalog, hardware.instance_name)
    limits = (
        ("gpus_used", hardware.gpus_used, instance.gpu_count),
        ("cpu_threads_used", hardware.cpu_threads_used, instance.vcpu),
        ("ram_gib_available", hardware.ram_gib_available, instance.ram_gib),
    )
    for name, used, available in limits:
        if used > available:
            raise SubmissionError(
                f"{where}{name}={format_decimal(used)} exceeds {instance.name} "
                f"shape ({available})",
                field=f"hardware.{name}",
            )


def record_from_dict(data: Dict[str, Any], where: str = "",
                     catalog: Optional[PricingCatalog] = None) -> SubmissionRecord:
    """Validate one decoded submission object and build the record."""
    errors = sorted(_VALIDATOR.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        first = errors[0]
        path = ".".join(str(part) for part in first.absolute_path) or "<record>"
        raise SubmissionError(f"{where}schema violation at {path}: {first.message}", field=path)

    raw_hw = data["hardware"]
    hardware = HardwareConfig(
        instance_name=raw_hw["instance"],
        gpus_used=raw_hw["gpus_used"],
        cpu_threads_used=raw_hw["cpu_threads_used"],
        ram_gib_available=to_decimal(raw_hw["ram_gib_available"], "ram_gib_available"),
    )
    if catalog is not None:
        check_hardware(hardware, catalog, where)

    return SubmissionRecord(
        system=data["system"],
        dataset=data["dataset"],
        hardware=hardware,
        metrics=validate_metrics(data["metrics"], where),
        provenance=Provenance(data["provenance"]),
        source=data["source"],
    )


def _read_lines(path: Path, catalog: Optional[PricingCatalog]) -> List[SubmissionRecord]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            where = f"{path.name}:{line_number}: "
            try:
                data = json.loads(line, parse_float=Decimal)
            except json.JSONDecodeError as e:
                raise SubmissionError(f"{where}invalid JSON: {e.msg}",
                                      field=f"line {line_number}") from e
            try:
                records.append(record_from_dict(data, where, catalog))
            except IRLedgerError as e:
                e.details.setdefault("line", line_number)
                raise
    return records


def _check_unique(records: Iterable[SubmissionRecord],
                  existing: Iterable[SubmissionRecord] = ()) -> None:
    seen = {record.key() for record in existing}
    for record in records:
        if record.key() in seen:
            raise DuplicateSubmissionError(
                f"Duplicate submission for {record.system} on {record.dataset} "
                f"({record.hardware.describe()}, {record.hardware.instance_name})",
                field="system/dataset/hardware",
                details={"system": record.system, "dataset": record.dataset},
            )
        seen.add(record.key())


def ingest(path, catalog: Optional[PricingCatalog] = None) -> List[SubmissionRecord]:
    """Parse and validate a submission JSONL file.

    Args:
        path: JSONL file
        catalog: When given, instance names are resolved and bounds-checked

    Returns:
        Records in file order
    """
    source = Path(path)
    if not source.exists():
        raise SubmissionError(f"Submission file not found: {source}", field="path")
    records = _read_lines(source, catalog)
    _check_unique(records)
    logger.info("✓ Submissions ingested", path=str(source), records=len(records),
                bounds_checked=catalog is not None)
    return records


class SubmissionStore:
    """Append-only JSONL store with a single writer."""

    def __init__(self, path):
        self.path = Path(path)

    def load(self) -> List[SubmissionRecord]:
        if not self.path.exists():
            return []
        try:
            return _read_lines(self.path, None)
        except OSError as e:
            raise SubmissionError(f"Cannot read store {self.path}: {e}", field="store") from e

    def append(self, records: Iterable[SubmissionRecord]) -> int:
        """Append records; the whole batch is rejected on any duplicate.

        Each record is written with one write call and fsynced before the
        next, so a crash leaves only whole lines behind.
        """
        batch = list(records)
        _check_unique(batch, self.load())
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as handle:
                for record in batch:
                    handle.write(record.to_json_line() + "\n")
                    handle.flush()
                    os.fsync(handle.fileno())
        except OSError as e:
            raise SubmissionError(f"Cannot write store {self.path}: {e}", field="store") from e
        logger.info("✓ Records appended", store=str(self.path), count=len(batch))
        return len(batch)

    def query(self, dataset: Optional[str] = None,
              system: Optional[str] = None) -> List[SubmissionRecord]:
        """Records matching every supplied filter, in insertion order."""
        return [
            record for record in self.load()
            if (dataset is None or record.dataset == dataset)
            and (system is None or record.system == system)
        ]


StoreLike = Union[str, Path, SubmissionStore]


def _as_store(store: StoreLike) -> SubmissionStore:
    return store if isinstance(store, SubmissionStore) else SubmissionStore(store)


def store_append(store: StoreLike, records: Iterable[SubmissionRecord]) -> int:
    return _as_store(store).append(records)


def query(store: StoreLike, dataset: Optional[str] = None,
          system: Optional[str] = None) -> List[SubmissionRecord]:
    return _as_store(store).query(dataset=dataset, system=system)
