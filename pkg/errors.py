"""Exception hierarchy for irledger.

Every failure a user can cause (bad file, bad weights, unreachable
endpoint) raises a subclass of IRLedgerError; the CLI turns those into
exit status 1. Anything else is a bug and propagates.
"""
from typing import Any, Dict, List, Optional


class IRLedgerError(Exception):
    """Base error carrying the offending field and structured details."""

    def __init__(self, message: str, field: Optional[str] = None,
                 details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.field = field
        self.details = details or {}

    def __str__(self) -> str:
        if self.field:
            return f"{self.message} (field: {self.field})"
        return self.message

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "field": self.field,
            **self.details,
        }


class CatalogError(IRLedgerError):
    """Catalog file unreadable or violating an invariant."""


class InstanceNotFoundError(IRLedgerError):
    def __init__(self, name: str, nearest: List[str]):
        hint = ", ".join(nearest) if nearest else "none"
        super().__init__(
            f"Unknown instance type '{name}'; nearest names: {hint}",
            field="instance",
            details={"name": name, "nearest": nearest},
        )
        self.nearest = nearest


class InfeasibleRequirementError(IRLedgerError):
    """No catalog instance satisfies a resource requirement."""


class SubmissionError(IRLedgerError):
    """Submission line failed schema or invariant checks."""


class DuplicateSubmissionError(SubmissionError):
    """(system, dataset, hardware) triple already present."""


class CostError(IRLedgerError):
    """Cost model input rejected."""


class EvalFormatError(IRLedgerError):
    """Malformed qrels or run file."""

    def __init__(self, message: str, path: str, line: Optional[int] = None):
        location = f"{path}:{line}" if line is not None else path
        super().__init__(f"{location}: {message}", field=location,
                         details={"path": path, "line": line})
        self.line = line


class ScoringError(IRLedgerError):
    """Scoring precondition violated."""


class ZeroAMRSError(ScoringError):
    """A weighted metric does not vary, so its AMRS is zero."""


class EmptyLeaderboardError(ScoringError):
    """Every entry was filtered out."""


class WeightError(ScoringError):
    """Weight vector malformed or not summing to 1."""


class ProbeError(IRLedgerError):
    """Probe misconfiguration or protocol failure."""


class ProbeConnectionError(ProbeError):
    """Endpoint unreachable."""


class UnusableReportError(ProbeError):
    """Probe report recorded failures, so its mean is invalid."""


class RenderError(IRLedgerError):
    """Unknown output format."""
