"""Report documents and their markdown / csv / json renderings."""
import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Any, Dict, List, Optional, Sequence

from config import Config
from costing import CostAuditLine, format_usd
from errors import RenderError
from irmetrics import EvalReport
from scoring import ParetoPoint, RankedLeaderboard, SweepCell
from utils import DecimalEncoder, format_decimal

FORMATS = ("markdown", "csv", "json")
SCORE_PLACES = Decimal("0.001")
MONEY_COLUMNS = {"cost_usd_per_1m", "usd_per_1m"}
CONVENTION_NOTES = {
    "skip": "AMRS convention: skip (equal-accuracy neighbour pairs are dropped)",
    "merge": "AMRS convention: merge (equal-accuracy rows averaged before pairing)",
}


@dataclass
class LeaderboardDocument:
    title: str
    descriptor: str
    columns: List[str]
    rows: List[Dict[str, Any]]
    footnotes: List[str] = field(default_factory=list)
    labels: Dict[str, str] = field(default_factory=dict)

    def header(self) -> List[str]:
        return [self.labels.get(column, column) for column in self.columns]


def _snapshot_note(snapshot_date: Optional[str]) -> str:
    return f"Catalog snapshot: {snapshot_date or 'none supplied'}"


def _convention_note(convention: Optional[str]) -> str:
    key = convention or Config.AMRS_CONVENTION
    return CONVENTION_NOTES.get(key, f"AMRS convention: {key}")


def leaderboard_document(board: RankedLeaderboard, title: str,
                         snapshot_date: Optional[str] = None,
                         metric_columns: Sequence[str] = ()) -> LeaderboardDocument:
    """Ranked board: rank, system, hardware, score, then raw metrics."""
    columns = ["rank", "system", "hardware", "score", *metric_columns]
    rows = []
    for entry in board.entries:
        row: Dict[str, Any] = {
            "rank": entry.rank,
            "system": entry.system,
            "hardware": entry.hardware,
            "score": entry.score,
        }
        for metric in metric_columns:
            row[metric] = entry.metrics.get(metric)
        rows.append(row)

    descriptor = board.strategy
    details = board.descriptor
    if "weights" in details:
        descriptor += f" ({details['weights']})"
    for key in ("budget", "floor"):
        if key in details:
            descriptor += f" ({details[key]})"

    footnotes = [_snapshot_note(snapshot_date)]
    if "amrs_convention" in details:
        footnotes.append(_convention_note(details["amrs_convention"]))
    for metric, value in details.get("amrs", {}).items():
        footnotes.append(f"AMRS[{metric}] = {format_decimal(value.normalize())}")
    for threshold in details.get("filters", []):
        footnotes.append(f"Filter: {threshold}")
    for item in board.excluded:
        footnotes.append(f"Excluded: {item.entry.label} ({item.reason})")

    labels = {"rank": "Rank", "system": "System", "hardware": "Hardware",
              "score": "Dynascore" if board.strategy == "dynascore" else "Score"}
    return LeaderboardDocument(title, descriptor, columns, rows, footnotes, labels)


def pareto_document(points: Sequence[ParetoPoint], x: str, y: str,
                    snapshot_date: Optional[str] = None) -> LeaderboardDocument:
    """All points with dominance flags, ready for plotting."""
    rows = [
        {"system": p.entry.system, "hardware": p.entry.hardware, "instance": p.entry.instance,
         x: p.x, y: p.y, "dominated": p.dominated}
        for p in points
    ]
    frontier = [p.entry.label for p in points if not p.dominated]
    footnotes = [_snapshot_note(snapshot_date), f"Frontier: {'; '.join(frontier) or 'empty'}"]
    return LeaderboardDocument(f"Pareto frontier ({x} vs {y})", f"pareto ({x} lower, {y} higher)",
                               ["system", "hardware", "instance", x, y, "dominated"],
                               rows, footnotes)


def sweep_document(cells: Sequence[SweepCell], convention: Optional[str] = None,
                   snapshot_date: Optional[str] = None) -> LeaderboardDocument:
    rows = [
        {"w_acc": cell.w_acc, "w_latency": cell.w_latency, "w_cost": cell.w_cost,
         "winner_system": cell.winner.system if cell.winner else None,
         "winner_hardware": cell.winner.hardware if cell.winner else None,
         "score": cell.score}
        for cell in cells
    ]
    footnotes = [_snapshot_note(snapshot_date), _convention_note(convention)]
    unscorable = [cell for cell in cells if not cell.scorable]
    if unscorable:
        footnotes.append(f"Unscorable cells: {len(unscorable)} ({unscorable[0].unscorable_reason})")
    return LeaderboardDocument("Weight sweep winners", "weight_sweep",
                               ["w_acc", "w_latency", "w_cost", "winner_system",
                                "winner_hardware", "score"], rows, footnotes)


def cost_document(lines: Sequence[CostAuditLine], snapshot_date: Optional[str] = None,
                  query_count: int = 1_000_000) -> LeaderboardDocument:
    rows = [line.to_row() for line in lines]
    footnotes = [_snapshot_note(snapshot_date), f"Query count: {query_count}"]
    for line in lines:
        if line.within_tolerance is False:
            footnotes.append(f"Mismatch: {line.system}, {line.hardware} reported "
                             f"{format_decimal(line.reported_usd)} vs model "
                             f"{format_decimal(format_usd(line.usd_per_1m))}")
    return LeaderboardDocument("Cost audit", "sequential cost model",
                               ["system", "hardware", "latency_ms", "hourly_usd", "usd_per_1m"],
                               rows, footnotes)


def eval_document(report: EvalReport) -> LeaderboardDocument:
    metrics = report.metrics
    rows = [{"metric": name, "value": value} for name, value in metrics.items()]
    footnotes = [f"Queries: {report.query_count}"]
    if report.boundary_ties:
        footnotes.append(f"Score ties at rank {report.k} decided by file order: "
                         f"{', '.join(report.boundary_ties[:10])}")
    return LeaderboardDocument(f"Evaluation at k={report.k}", report.dataset or "run",
                               ["metric", "value"], rows, footnotes)


def _markdown_cell(column: str, value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if column == "score" and isinstance(value, (Decimal, float, int)):
        return format_decimal(Decimal(str(value)).quantize(SCORE_PLACES, rounding=ROUND_HALF_UP))
    if column in MONEY_COLUMNS and isinstance(value, (Decimal, float, int)):
        return format_decimal(format_usd(value))
    return format_decimal(value)


def _plain_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return format_decimal(value)


def _render_markdown(document: LeaderboardDocument) -> str:
    lines = [f"# {document.title}", "", f"_{document.descriptor}_", ""]
    lines.append("| " + " | ".join(document.header()) + " |")
    lines.append("|" + "|".join("---" for _ in document.columns) + "|")
    for row in document.rows:
        cells = [_markdown_cell(column, row.get(column)) for column in document.columns]
        lines.append("| " + " | ".join(cells) + " |")
    if document.footnotes:
        lines.append("")
        lines.extend(f"- {note}" for note in document.footnotes)
    return "\n".join(lines) + "\n"


def _render_csv(document: LeaderboardDocument) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(document.columns)
    for row in document.rows:
        writer.writerow([_plain_cell(row.get(column)) for column in document.columns])
    return buffer.getvalue()


def _render_json(document: LeaderboardDocument) -> str:
    payload = {
        "title": document.title,
        "descriptor": document.descriptor,
        "columns": document.columns,
        "rows": [
            {column: row.get(column) for column in document.columns}
            for row in document.rows
        ],
        "footnotes": document.footnotes,
    }
    return json.dumps(payload, indent=2, ensure_ascii=False, cls=DecimalEncoder) + "\n"


_RENDERERS = {
    "markdown": _render_markdown,
    "csv": _render_csv,
    "json": _render_json,
}


def render(document: LeaderboardDocument, fmt: str = "markdown") -> str:
    """Serialize a document; identical input always yields identical text.

    Markdown rounds scores to three decimals and money to cents; csv and
    json carry every Decimal exactly as computed.
    """
    renderer = _RENDERERS.get(fmt)
    if renderer is None:
        raise RenderError(f"Unknown format '{fmt}'; choose one of {', '.join(FORMATS)}",
                          field="format")
    return renderer(document)
