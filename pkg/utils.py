"""Utility functions for irledger."""
import hashlib
import json
import math
import re
from datetime import datetime, timezone
from decimal import Decimal, InvalidOperation
from typing import Any, Iterable, List

import Levenshtein


def generate_run_id(prefix: str = "probe") -> str:
    """Generate unique run ID with timestamp.

    Returns:
        Run ID string like 'probe_20221101_143022_abc123'
    """
    now = datetime.now(timezone.utc)
    random_suffix = hashlib.md5(now.isoformat().encode()).hexdigest()[:6]
    return f"{prefix}_{now.strftime('%Y%m%d_%H%M%S')}_{random_suffix}"


def utc_timestamp() -> str:
    """Current UTC time as ISO-8601."""
    return datetime.now(timezone.utc).isoformat()


def to_decimal(value: Any, field: str = "value") -> Decimal:
    """Convert a parsed JSON number (or numeric string) to a finite Decimal.

    Floats go through repr so 0.0385 stays 0.0385 rather than its binary
    expansion.

    Args:
        value: int, float, str or Decimal
        field: Name used in the error message

    Returns:
        Finite Decimal

    Raises:
        ValueError: if the value is not a finite number
    """
    if isinstance(value, bool):
        raise ValueError(f"{field} must be a number, got boolean")
    try:
        if isinstance(value, float):
            result = Decimal(repr(value))
        else:
            result = Decimal(value)
    except (InvalidOperation, TypeError) as e:
        raise ValueError(f"{field} must be a number, got {value!r}") from e
    if not result.is_finite():
        raise ValueError(f"{field} must be finite, got {value!r}")
    return result


def decimal_places(value: Decimal) -> int:
    """Count fractional digits of a Decimal (0 for integers)."""
    exponent = value.as_tuple().exponent
    return max(0, -exponent) if isinstance(exponent, int) else 0


def json_number(value: Any) -> Any:
    """Map Decimals to JSON-native numbers; ints stay ints."""
    if isinstance(value, Decimal):
        if value == value.to_integral_value() and decimal_places(value) == 0:
            return int(value)
        return float(value)
    return value


def canonical_json(data: Any) -> str:
    """Compact, key-order preserving JSON with Decimals as numbers."""
    return json.dumps(data, separators=(",", ":"), ensure_ascii=False,
                      default=_json_default)


def _json_default(value: Any) -> Any:
    if isinstance(value, Decimal):
        return json_number(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


_DECIMAL_MARK = "\x00decimal:"
_DECIMAL_TOKEN = re.compile(r'"\\u0000decimal:([^"]+)"')


class DecimalEncoder(json.JSONEncoder):
    """Writes finite Decimals as exact JSON number literals.

    The json module has no hook for raw number text, so Decimals are
    emitted as marked strings and unquoted after encoding.
    """

    def default(self, obj: Any) -> Any:
        if isinstance(obj, Decimal):
            if not obj.is_finite():
                return float(obj)
            return _DECIMAL_MARK + format(obj, "f")
        return super().default(obj)

    def encode(self, obj: Any) -> str:
        return _DECIMAL_TOKEN.sub(r"\1", super().encode(obj))


def format_decimal(value: Any) -> str:
    """Plain decimal text without exponent, trailing zeros kept as given."""
    if isinstance(value, Decimal):
        return format(value, "f")
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def nearest_names(name: str, candidates: Iterable[str], limit: int = 3) -> List[str]:
    """Rank candidate identifiers by edit distance to name.

    Args:
        name: Identifier that failed to resolve
        candidates: Known identifiers
        limit: Maximum suggestions

    Returns:
        Up to `limit` names, closest first, ties in lexicographic order
    """
    scored = sorted(
        (Levenshtein.distance(name.lower(), candidate.lower()), candidate)
        for candidate in candidates
    )
    return [candidate for _, candidate in scored[:limit]]

