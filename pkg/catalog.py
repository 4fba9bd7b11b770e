"""Pricing catalog: dated snapshots of cloud instance shapes and hourly rates.

A catalog file is UTF-8 JSON with exactly three top-level keys::

    {"snapshot_date": "2022-11-01", "currency": "USD",
     "instances": [{"name": "m6g.medium", "vcpu": 1, "gpu_count": 0,
                    "gpu_model": null, "ram_gib": 4, "hourly_usd": 0.0385,
                    "arch": "arm64"}, ...]}

Rates are parsed as Decimal so cost arithmetic never sees binary floats.
Catalog objects are frozen after load.
"""
import json
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from jsonschema import Draft7Validator

from errors import CatalogError, InfeasibleRequirementError, InstanceNotFoundError
from logger import logger
from utils import canonical_json, decimal_places, nearest_names

MAX_RATE_DIGITS = 6

CATALOG_SCHEMA = {
    "type": "object",
    "required": ["snapshot_date", "currency", "instances"],
    "additionalProperties": False,
    "properties": {
        "snapshot_date": {"type": "string", "pattern": r"^\d{4}-\d{2}-\d{2}$"},
        "currency": {"const": "USD"},
        "instances": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "vcpu", "gpu_count", "gpu_model",
                             "ram_gib", "hourly_usd", "arch"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "vcpu": {"type": "integer", "minimum": 1},
                    "gpu_count": {"type": "integer", "minimum": 0},
                    "gpu_model": {"type": ["string", "null"]},
                    "ram_gib": {"type": "integer", "exclusiveMinimum": 0},
                    "hourly_usd": {"type": "number", "minimum": 0},
                    "arch": {"type": ["string", "null"]},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class InstanceType:
    """A priced machine shape."""
    name: str
    vcpu: int
    gpu_count: int
    ram_gib: int
    hourly_usd: Decimal
    gpu_model: Optional[str] = None
    arch: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "vcpu": self.vcpu,
            "gpu_count": self.gpu_count,
            "gpu_model": self.gpu_model,
            "ram_gib": self.ram_gib,
            "hourly_usd": self.hourly_usd,
            "arch": self.arch,
        }


@dataclass(frozen=True)
class PricingCatalog:
    snapshot_date: date
    instances: Tuple[InstanceType, ...]
    currency: str = "USD"
    _by_name: Dict[str, InstanceType] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.instances:
            raise CatalogError("Catalog has no instances", field="instances")
        index: Dict[str, InstanceType] = {}
        for position, instance in enumerate(self.instances):
            if instance.name in index:
                raise CatalogError(
                    f"Duplicate instance name '{instance.name}'",
                    field=f"instances/{position}/name",
                )
            index[instance.name] = instance
        object.__setattr__(self, "_by_name", index)

    def __len__(self) -> int:
        return len(self.instances)

    @property
    def names(self) -> List[str]:
        return [instance.name for instance in self.instances]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "snapshot_date": self.snapshot_date.isoformat(),
            "currency": self.currency,
            "instances": [instance.to_dict() for instance in self.instances],
        }


@dataclass(frozen=True)
class ResourceRequirement:
    """Minimum resources a system needs; arch optionally pins the CPU family."""
    gpu_count: int
    cpu_threads: int
    ram_gib: int
    arch: Optional[str] = None

    def __post_init__(self):
        if self.gpu_count < 0 or self.ram_gib < 0:
            raise InfeasibleRequirementError(
                "Resource requirement fields must be non-negative",
                details=self.to_dict(),
            )
        if self.cpu_threads < 1:
            raise InfeasibleRequirementError(
                "Resource requirement needs at least one CPU thread",
                field="cpu_threads",
                details=self.to_dict(),
            )

    def satisfied_by(self, instance: InstanceType) -> bool:
        if self.arch is not None and instance.arch != self.arch:
            return False
        return (
            instance.vcpu >= self.cpu_threads
            and instance.gpu_count >= self.gpu_count
            and instance.ram_gib >= self.ram_gib
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "gpu_count": self.gpu_count,
            "cpu_threads": self.cpu_threads,
            "ram_gib": self.ram_gib,
            "arch": self.arch,
        }


def _error_path(error) -> str:
    parts = [str(part) for part in error.absolute_path]
    if error.validator == "required":
        missing = error.message.split("'")[1] if "'" in error.message else ""
        parts.append(missing)
    elif error.validator == "additionalProperties":
        extra = error.message.split("'")[1] if "'" in error.message else ""
        parts.append(extra)
    return "/".join(part for part in parts if part) or "<root>"


def parse_catalog(document: Dict[str, Any], source: str = "<memory>") -> PricingCatalog:
    """Validate a decoded catalog document and build the catalog.

    Args:
        document: JSON object, numbers already decoded (floats as Decimal)
        source: Origin used in log messages

    Returns:
        Validated PricingCatalog
    """
    validator = Draft7Validator(CATALOG_SCHEMA)
    errors = sorted(validator.iter_errors(document), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        first = errors[0]
        raise CatalogError(f"Invalid catalog: {first.message}", field=_error_path(first))

    try:
        snapshot = date.fromisoformat(document["snapshot_date"])
    except ValueError as e:
        raise CatalogError(f"Invalid snapshot date: {e}", field="snapshot_date") from e

    instances = []
    for position, raw in enumerate(document["instances"]):
        rate = Decimal(raw["hourly_usd"]) if not isinstance(raw["hourly_usd"], Decimal) else raw["hourly_usd"]
        if decimal_places(rate) > MAX_RATE_DIGITS:
            raise CatalogError(
                f"hourly_usd has more than {MAX_RATE_DIGITS} fractional digits",
                field=f"instances/{position}/hourly_usd",
            )
        instances.append(InstanceType(
            name=raw["name"],
            vcpu=raw["vcpu"],
            gpu_count=raw["gpu_count"],
            ram_gib=raw["ram_gib"],
            hourly_usd=rate,
            gpu_model=raw["gpu_model"],
            arch=raw["arch"],
        ))

    catalog = PricingCatalog(snapshot_date=snapshot, instances=tuple(instances),
                             currency=document["currency"])
    logger.debug("Catalog parsed", source=source, instances=len(catalog),
                 snapshot_date=catalog.snapshot_date.isoformat())
    return catalog


def load_catalog(path) -> PricingCatalog:
    """Load and validate a catalog snapshot file.

    Args:
        path: Path to the catalog JSON

    Returns:
        Validated PricingCatalog
    """
    catalog_path = Path(path)
    if not catalog_path.exists():
        raise CatalogError(f"Catalog file not found: {catalog_path}", field="path")
    try:
        document = json.loads(catalog_path.read_text(encoding="utf-8"), parse_float=Decimal)
    except UnicodeDecodeError as e:
        raise CatalogError(f"Catalog is not valid UTF-8: {e.reason} at byte {e.start}",
                           field="path") from e
    except json.JSONDecodeError as e:
        raise CatalogError(f"Catalog is not valid JSON: {e.msg} at line {e.lineno}",
                           field=f"line {e.lineno}") from e

    catalog = parse_catalog(document, source=str(catalog_path))
    logger.info("✓ Catalog loaded", path=str(catalog_path), instances=len(catalog),
                snapshot_date=catalog.snapshot_date.isoformat())
    return catalog


def save_catalog(catalog: PricingCatalog, path) -> None:
    Path(path).write_text(canonical_json(catalog.to_dict()) + "\n", encoding="utf-8")


def find_instance(catalog: PricingCatalog, name: str) -> InstanceType:
    """Exact-name lookup; unknown names list the closest known names."""
    instance = catalog._by_name.get(name)
    if instance is None:
        raise InstanceNotFoundError(name, nearest_names(name, catalog.names))
    return instance


def select_min_viable(catalog: PricingCatalog, req: ResourceRequirement) -> InstanceType:
    """Cheapest instance satisfying every requirement field.

    Equal prices resolve to the lexicographically smallest name. GPU model is
    not matched, only the GPU count.

    Args:
        catalog: Pricing snapshot
        req: Minimum GPU count, CPU threads, RAM (and optionally arch)

    Returns:
        Selected InstanceType

    Raises:
        InfeasibleRequirementError: if nothing qualifies
    """
    candidates = [instance for instance in catalog.instances if req.satisfied_by(instance)]
    if not candidates:
        raise InfeasibleRequirementError(
            f"No instance in the {catalog.snapshot_date.isoformat()} catalog satisfies "
            f"{req.gpu_count} GPU, {req.cpu_threads} CPU, {req.ram_gib} GiB"
            + (f", arch {req.arch}" if req.arch else ""),
            field="requirement",
            details={"requirement": req.to_dict()},
        )
    selected = min(candidates, key=lambda instance: (instance.hourly_usd, instance.name))
    logger.debug("Min-viable instance selected", instance=selected.name,
                 hourly_usd=str(selected.hourly_usd), candidates=len(candidates))
    return selected
