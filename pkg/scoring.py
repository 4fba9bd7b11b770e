"""Leaderboard scoring: AMRS normalization, Dynascore, threshold rankings,
Pareto frontiers and weight-simplex sweeps.

Every metric enters in its oriented form (lower-is-better values negated),
so a larger Dynascore is always better:

    score(M) = sum_j  w_j * mu_j(M) / AMRS(mu_j)

AMRS(mu) is the mean of |d mu / d acc| over consecutive rows sorted by the
anchor accuracy. Rows sharing one accuracy value (same model, different
hardware) make d acc zero; the default ``merge`` convention collapses
equal-accuracy rows to their mean before pairing, while ``skip`` drops those
pairs and keeps the rest of the sorted sequence.

Scores are Decimal, so rescaling a metric by a power of ten leaves every
score bit-for-bit unchanged.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from enum import Enum
from itertools import groupby
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from config import Config
from errors import (EmptyLeaderboardError, ScoringError, SubmissionError, WeightError,
                    ZeroAMRSError)
from logger import logger
from metrics import COST_USD_PER_1M, LATENCY_MS, MRR_AT_10, MetricName, get_metric
from submissions import SubmissionRecord
from utils import format_decimal, to_decimal

PRECISION = 34
INFINITY = Decimal("Infinity")
DEFAULT_ANCHOR = MRR_AT_10.key


class AMRSConvention(str, Enum):
    SKIP = "skip"
    MERGE = "merge"


def convention_from(value: Any) -> AMRSConvention:
    try:
        return AMRSConvention(value or Config.AMRS_CONVENTION)
    except ValueError:
        raise ScoringError(f"Unknown AMRS convention '{value}'; use 'skip' or 'merge'",
                           field="convention")


@dataclass(frozen=True)
class EntryId:
    """A leaderboard row identity: one system on one hardware configuration."""
    system: str
    hardware: str
    instance: str

    @classmethod
    def of(cls, record: SubmissionRecord) -> "EntryId":
        return cls(record.system, record.hardware.describe(), record.hardware.instance_name)

    @property
    def label(self) -> str:
        return f"{self.system}, {self.hardware}"

    def sort_key(self) -> Tuple[str, str, str]:
        return (self.system, self.hardware, self.instance)


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightVector:
    """Ordered metric weights on the simplex with one accuracy anchor."""
    items: Tuple[Tuple[str, Decimal], ...]

    @classmethod
    def from_mapping(cls, weights: Mapping[str, Any],
                     require_anchor_weight: bool = True) -> "WeightVector":
        """Validate and build a weight vector.

        Args:
            weights: metric key -> weight
            require_anchor_weight: Dynascore ranking needs a positive anchor
                weight; sweeps allow zero

        Raises:
            WeightError: unknown metric, weight outside [0, 1], anchor count
                other than one, or a sum away from 1 by more than 1e-9
        """
        if not weights:
            raise WeightError("Weight vector is empty", field="weights")
        items = []
        for key, raw in weights.items():
            try:
                metric = get_metric(key)
                weight = to_decimal(raw, key)
            except (ValueError, SubmissionError) as e:
                raise WeightError(str(e), field=f"weights.{key}") from e
            if not Decimal(0) <= weight <= Decimal(1):
                raise WeightError(f"weight for {metric.key} must be within [0, 1], got {weight}",
                                  field=f"weights.{key}")
            items.append((metric.key, weight))

        anchors = [key for key, _ in items if get_metric(key).is_accuracy]
        if len(anchors) != 1:
            raise WeightError(
                f"weights need exactly one accuracy anchor metric, got {len(anchors)}",
                field="weights",
            )
        total = sum(weight for _, weight in items)
        if abs(total - 1) > Decimal(str(Config.WEIGHT_SUM_TOLERANCE)):
            raise WeightError(f"weights sum to {format_decimal(total)}, expected 1",
                              field="weights")
        vector = cls(tuple(items))
        if require_anchor_weight and vector.weight(vector.anchor) <= 0:
            raise WeightError(f"anchor weight for {vector.anchor} must be > 0", field="weights")
        return vector

    @property
    def anchor(self) -> str:
        return next(key for key, _ in self.items if get_metric(key).is_accuracy)

    @property
    def metrics(self) -> List[str]:
        return [key for key, _ in self.items]

    def weight(self, key: str) -> Decimal:
        return dict(self.items).get(key, Decimal(0))

    def active(self) -> List[Tuple[str, Decimal]]:
        return [(key, weight) for key, weight in self.items if weight > 0]

    def describe(self) -> str:
        return ",".join(f"{key}={format_decimal(weight)}" for key, weight in self.items)


def parse_weights(text: str, require_anchor_weight: bool = True) -> WeightVector:
    """Parse 'mrr_at_10=0.5,cost_usd_per_1m=0.25,latency_ms=0.25'."""
    weights: Dict[str, str] = {}
    for part in filter(None, (chunk.strip() for chunk in text.split(","))):
        key, sep, value = part.partition("=")
        if not sep or not key.strip() or not value.strip():
            raise WeightError(f"malformed weight '{part}', expected metric=value", field="weights")
        if key.strip() in weights:
            raise WeightError(f"weight for {key.strip()} given twice", field="weights")
        weights[key.strip()] = value.strip()
    return WeightVector.from_mapping(weights, require_anchor_weight)


DEFAULT_WEIGHTS = WeightVector.from_mapping(
    {MRR_AT_10.key: "0.5", COST_USD_PER_1M.key: "0.25", LATENCY_MS.key: "0.25"}
)


# ---------------------------------------------------------------------------
# Filters and the metric matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Threshold:
    """Keep entries whose metric is no worse than limit (direction from orientation)."""
    metric: str
    limit: Decimal

    @classmethod
    def parse(cls, text: str) -> "Threshold":
        """'latency_ms<=50' or 'mrr_at_10>=39'; the operator must match the orientation."""
        for operator in ("<=", ">="):
            if operator in text:
                key, _, value = text.partition(operator)
                metric = get_metric(key.strip())
                expected = "<=" if metric.lower_better else ">="
                if operator != expected:
                    raise ScoringError(f"{metric.key} is {metric.orientation.value}; "
                                       f"use '{expected}'", field="threshold")
                try:
                    return cls(metric.key, to_decimal(value.strip(), metric.key))
                except ValueError as e:
                    raise ScoringError(str(e), field="threshold") from e
        raise ScoringError(f"threshold '{text}' needs '<=' or '>='", field="threshold")

    def admits(self, value: Decimal) -> bool:
        if get_metric(self.metric).lower_better:
            return value <= self.limit
        return value >= self.limit

    def describe(self) -> str:
        operator = "<=" if get_metric(self.metric).lower_better else ">="
        return f"{self.metric}{operator}{format_decimal(self.limit)}"


@dataclass(frozen=True)
class ExcludedEntry:
    entry: EntryId
    reason: str

    def to_dict(self) -> Dict[str, str]:
        return {"system": self.entry.system, "hardware": self.entry.hardware,
                "instance": self.entry.instance, "reason": self.reason}


def apply_thresholds(records: Iterable[SubmissionRecord], thresholds: Sequence[Threshold]
                     ) -> Tuple[List[SubmissionRecord], List[ExcludedEntry]]:
    kept, excluded = [], []
    for record in records:
        reason = None
        for threshold in thresholds:
            value = record.metric(threshold.metric)
            if value is None:
                reason = f"missing_metric:{threshold.metric}"
            elif not threshold.admits(value):
                reason = f"threshold:{threshold.describe()}"
            if reason:
                break
        if reason:
            excluded.append(ExcludedEntry(EntryId.of(record), reason))
        else:
            kept.append(record)
    return kept, excluded


@dataclass
class MetricMatrix:
    """Oriented metric values, one row per entry, columns in weight order."""
    rows: List[SubmissionRecord]
    columns: List[str]
    anchor: str
    values: Dict[str, List[Decimal]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, metric: str) -> List[Decimal]:
        if metric not in self.values:
            raise ScoringError(f"metric {metric} is not a column of this matrix", field=metric)
        return self.values[metric]


def build_matrix(records: Iterable[SubmissionRecord], metrics: Sequence[str],
                 anchor: str = DEFAULT_ANCHOR
                 ) -> Tuple[MetricMatrix, List[ExcludedEntry]]:
    """Keep records carrying every requested metric and orient their values.

    Returns:
        (matrix, excluded) where each exclusion names the first missing metric
    """
    columns = [anchor] + [metric for metric in metrics if metric != anchor]
    specs = [get_metric(metric) for metric in columns]
    if not specs[0].is_accuracy:
        raise ScoringError(f"anchor {anchor} is not an accuracy metric", field="anchor")

    rows, excluded = [], []
    for record in records:
        missing = next((metric for metric in columns if record.metric(metric) is None), None)
        if missing:
            excluded.append(ExcludedEntry(EntryId.of(record), f"missing_metric:{missing}"))
        else:
            rows.append(record)

    values = {
        spec.key: [spec.orient(record.metrics[spec.key]) for record in rows]
        for spec in specs
    }
    return MetricMatrix(rows, columns, anchor, values), excluded


# ---------------------------------------------------------------------------
# AMRS and Dynascore
# ---------------------------------------------------------------------------

def _anchor_order(matrix: MetricMatrix) -> List[int]:
    anchor = matrix.column(matrix.anchor)
    return sorted(range(len(matrix)),
                  key=lambda i: (anchor[i], EntryId.of(matrix.rows[i]).sort_key()))


def amrs(matrix: MetricMatrix, metric: str,
         convention: Optional[AMRSConvention] = None) -> Decimal:
    """Average marginal rate of substitution of metric for the anchor.

    Raises:
        ScoringError: fewer than two distinct anchor values
        ZeroAMRSError: metric does not change between accuracy levels
    """
    column = matrix.column(metric)
    anchor = matrix.column(matrix.anchor)
    if len(set(anchor)) < 2:
        raise ScoringError(
            f"AMRS needs at least two distinct {matrix.anchor} values, got {len(set(anchor))}",
            field=matrix.anchor,
        )

    order = _anchor_order(matrix)
    with localcontext() as ctx:
        ctx.prec = PRECISION
        if convention_from(convention) is AMRSConvention.MERGE:
            points = []
            for level, group in groupby(order, key=lambda i: anchor[i]):
                members = [column[i] for i in group]
                points.append((level, sum(members) / len(members)))
        else:
            points = [(anchor[i], column[i]) for i in order]

        ratios = [
            abs((mu_next - mu) / (acc_next - acc))
            for (acc, mu), (acc_next, mu_next) in zip(points, points[1:])
            if acc_next != acc
        ]
        result = sum(ratios) / len(ratios)

    if result == 0:
        raise ZeroAMRSError(f"{metric} does not vary with {matrix.anchor}; AMRS is zero",
                            field=metric)
    return result


def amrs_normalizers(matrix: MetricMatrix, weights: WeightVector,
                     convention: Optional[AMRSConvention] = None) -> Dict[str, Decimal]:
    """AMRS of every metric carrying non-zero weight.

    Zero-weight metrics are ignored, so they need not vary.
    """
    normalizers = {}
    for metric, _ in weights.active():
        if metric not in matrix.values:
            raise ScoringError(f"weighted metric {metric} missing from matrix", field=metric)
        normalizers[metric] = amrs(matrix, metric, convention)
    return normalizers


def dynascore(matrix: MetricMatrix, weights: WeightVector,
              convention: Optional[AMRSConvention] = None,
              normalizers: Optional[Mapping[str, Decimal]] = None) -> Dict[EntryId, Decimal]:
    """Dynascore of every matrix row.

    Precomputed normalizers from amrs_normalizers are used as given.
    """
    if normalizers is None:
        normalizers = amrs_normalizers(matrix, weights, convention)

    scores = {}
    with localcontext() as ctx:
        ctx.prec = PRECISION
        for i, record in enumerate(matrix.rows):
            scores[EntryId.of(record)] = sum(
                (weight * matrix.values[metric][i] / normalizers[metric]
                 for metric, weight in weights.active()),
                Decimal(0),
            )
    return scores


# ---------------------------------------------------------------------------
# Leaderboards
# ---------------------------------------------------------------------------

@dataclass
class LeaderboardEntry:
    rank: int
    entry: EntryId
    score: Decimal
    metrics: Dict[str, Decimal]

    @property
    def system(self) -> str:
        return self.entry.system

    @property
    def hardware(self) -> str:
        return self.entry.hardware


@dataclass
class RankedLeaderboard:
    strategy: str
    descriptor: Dict[str, Any]
    entries: List[LeaderboardEntry]
    excluded: List[ExcludedEntry] = field(default_factory=list)

    def top(self, n: int = 1) -> List[LeaderboardEntry]:
        return self.entries[:n]


def _tie_key(record: SubmissionRecord, score: Decimal, anchor: str) -> Tuple:
    cost = record.metric(COST_USD_PER_1M.key)
    return (-score, -record.metrics[anchor], cost if cost is not None else INFINITY,
            EntryId.of(record).sort_key())


def _board(strategy: str, descriptor: Dict[str, Any],
           scored: List[Tuple[SubmissionRecord, Decimal]],
           sort_key: Callable[[Tuple[SubmissionRecord, Decimal]], Tuple],
           excluded: List[ExcludedEntry]) -> RankedLeaderboard:
    ordered = sorted(scored, key=sort_key)
    entries = [
        LeaderboardEntry(rank, EntryId.of(record), score, dict(record.metrics))
        for rank, (record, score) in enumerate(ordered, start=1)
    ]
    board = RankedLeaderboard(strategy, descriptor, entries, excluded)
    logger.info("✓ Leaderboard ranked", strategy=strategy, entries=len(entries),
                excluded=len(excluded),
                top=entries[0].entry.label if entries else None)
    return board


def _require_survivors(records: List[SubmissionRecord], excluded: List[ExcludedEntry],
                       strategy: str) -> None:
    if not records:
        raise EmptyLeaderboardError(
            f"No entries left to rank for {strategy} ({len(excluded)} excluded)",
            details={"excluded": [item.to_dict() for item in excluded]},
        )


def rank_dynascore(records: Iterable[SubmissionRecord], weights: WeightVector = DEFAULT_WEIGHTS,
                   filters: Optional[Sequence[Threshold]] = None,
                   convention: Optional[AMRSConvention] = None) -> RankedLeaderboard:
    """Filter, then rank by descending Dynascore.

    Ties go to higher anchor accuracy, then lower cost, then name.
    """
    convention = convention_from(convention)
    survivors, excluded = apply_thresholds(records, filters or [])
    columns = [metric for metric, _ in weights.active()]
    matrix, missing = build_matrix(survivors, columns, weights.anchor)
    excluded.extend(missing)
    _require_survivors(matrix.rows, excluded, "dynascore")

    normalizers = amrs_normalizers(matrix, weights, convention)
    scores = dynascore(matrix, weights, normalizers=normalizers)
    descriptor = {
        "weights": weights.describe(),
        "anchor": weights.anchor,
        "amrs_convention": convention.value,
        "amrs": normalizers,
        "filters": [threshold.describe() for threshold in filters or []],
    }
    anchor = weights.anchor
    return _board(
        "dynascore", descriptor,
        [(record, scores[EntryId.of(record)]) for record in matrix.rows],
        lambda pair: _tie_key(pair[0], pair[1], anchor),
        excluded,
    )


def _bound(value, name: str) -> Decimal:
    """Like to_decimal, but an infinite bound is a valid vacuous filter."""
    if isinstance(value, (Decimal, float)) and not isinstance(value, bool):
        if Decimal(value).is_infinite():
            return Decimal(value)
    try:
        return to_decimal(value, name)
    except ValueError as e:
        raise ScoringError(str(e), field=name) from e


def _efficiency_metric(metric: str) -> MetricName:
    spec = get_metric(metric)
    if spec.is_accuracy:
        raise ScoringError(f"{metric} is an accuracy metric; an efficiency metric is required",
                           field="metric")
    return spec


def rank_by_accuracy_under_budget(records: Iterable[SubmissionRecord], metric: str,
                                  threshold, anchor: str = DEFAULT_ANCHOR) -> RankedLeaderboard:
    """Keep entries within an efficiency budget, then rank by accuracy."""
    spec = _efficiency_metric(metric)
    budget = Threshold(spec.key, _bound(threshold, "threshold"))
    candidates, excluded = apply_thresholds(records, [budget])
    survivors = []
    for record in candidates:
        if record.metric(anchor) is None:
            excluded.append(ExcludedEntry(EntryId.of(record), f"missing_metric:{anchor}"))
        else:
            survivors.append(record)
    _require_survivors(survivors, excluded, "accuracy under budget")

    descriptor = {"anchor": anchor, "budget": budget.describe()}
    return _board(
        "accuracy_under_budget", descriptor,
        [(record, record.metrics[anchor]) for record in survivors],
        lambda pair: (-pair[1], -spec.orient(pair[0].metrics[spec.key]),
                      EntryId.of(pair[0]).sort_key()),
        excluded,
    )


def rank_by_efficiency_over_floor(records: Iterable[SubmissionRecord], accuracy_floor,
                                  metric: str, anchor: str = DEFAULT_ANCHOR) -> RankedLeaderboard:
    """Keep entries at or above an accuracy floor, then rank by efficiency.

    The score column holds the oriented efficiency value (cost and latency
    negated), so scores still fall down the board.
    """
    spec = _efficiency_metric(metric)
    floor = Threshold(anchor, _bound(accuracy_floor, "accuracy_floor"))
    candidates, excluded = apply_thresholds(records, [floor])
    survivors = []
    for record in candidates:
        if record.metric(spec.key) is None:
            excluded.append(ExcludedEntry(EntryId.of(record), f"missing_metric:{spec.key}"))
        else:
            survivors.append(record)
    _require_survivors(survivors, excluded, "efficiency over floor")

    descriptor = {"anchor": anchor, "floor": floor.describe(), "metric": spec.key}
    return _board(
        "efficiency_over_floor", descriptor,
        [(record, spec.orient(record.metrics[spec.key])) for record in survivors],
        lambda pair: (-pair[1], -pair[0].metrics[anchor], EntryId.of(pair[0]).sort_key()),
        excluded,
    )


# ---------------------------------------------------------------------------
# Pareto frontier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParetoPoint:
    entry: EntryId
    x: Decimal
    y: Decimal
    dominated: bool


def non_dominated_mask(xs: Sequence[float], ys: Sequence[float]) -> np.ndarray:
    """Flag points no other point beats (x lower-better, y higher-better).

    Sort by x, then walk groups of equal x: a point is dominated when a
    strictly smaller x already reached its y, or its own x group holds a
    larger y.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    mask = np.zeros(len(x), dtype=bool)
    if len(x) == 0:
        return mask

    order = np.lexsort((-y, x))
    best_y = -np.inf
    start = 0
    while start < len(order):
        stop = start
        while stop < len(order) and x[order[stop]] == x[order[start]]:
            stop += 1
        group = order[start:stop]
        group_best = y[group].max()
        mask[group] = (y[group] > best_y) & (y[group] == group_best)
        best_y = max(best_y, group_best)
        start = stop
    return mask


def pareto_frontier(records: Iterable[SubmissionRecord], x: str = COST_USD_PER_1M.key,
                    y: str = DEFAULT_ANCHOR) -> List[ParetoPoint]:
    """Every point with its dominance flag, sorted by x ascending then y descending."""
    x_spec, y_spec = get_metric(x), get_metric(y)
    if not x_spec.lower_better or y_spec.lower_better:
        raise ScoringError(f"pareto needs a lower-better x and a higher-better y, "
                           f"got {x} / {y}", field="axes")

    usable = []
    for record in records:
        if record.metric(x) is None or record.metric(y) is None:
            logger.warning("Skipping entry without both pareto metrics",
                           entry=EntryId.of(record).label, x=x, y=y)
            continue
        usable.append(record)

    mask = non_dominated_mask([float(r.metrics[x]) for r in usable],
                              [float(r.metrics[y]) for r in usable])
    points = [
        ParetoPoint(EntryId.of(record), record.metrics[x], record.metrics[y], not bool(keep))
        for record, keep in zip(usable, mask)
    ]
    points.sort(key=lambda p: (p.x, -p.y, p.entry.sort_key()))
    logger.info("✓ Pareto frontier computed", points=len(points),
                frontier=sum(1 for p in points if not p.dominated))
    return points


# ---------------------------------------------------------------------------
# Weight sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepCell:
    w_acc: Decimal
    w_latency: Decimal
    w_cost: Decimal
    winner: Optional[EntryId]
    score: Optional[Decimal]
    unscorable_reason: Optional[str] = None

    @property
    def scorable(self) -> bool:
        return self.winner is not None


def simplex_grid(step) -> List[Tuple[Decimal, Decimal, Decimal]]:
    """(w_acc, w_latency, w_cost) on multiples of step, ordered by (w_acc, w_latency)."""
    step = to_decimal(step, "grid_step")
    if not Decimal(0) < step <= Decimal("0.5"):
        raise ScoringError(f"grid_step must be in (0, 0.5], got {step}", field="grid_step")
    levels = int(Decimal(1) / step)
    grid = []
    for i in range(levels + 1):
        for j in range(levels + 1):
            w_acc, w_lat = step * i, step * j
            if w_acc + w_lat <= 1:
                grid.append((w_acc, w_lat, 1 - w_acc - w_lat))
    return grid


def weight_sweep(records: Iterable[SubmissionRecord], grid_step="0.05",
                 anchor: str = DEFAULT_ANCHOR, latency: str = LATENCY_MS.key,
                 cost: str = COST_USD_PER_1M.key,
                 convention: Optional[AMRSConvention] = None, workers: int = 1) -> List[SweepCell]:
    """Dynascore winner for every weight vector on the simplex grid.

    AMRS does not depend on the weights, so it is computed once. A cell that
    puts weight on a metric with zero AMRS is returned unscorable.
    """
    convention = convention_from(convention)
    grid = simplex_grid(grid_step)
    matrix, excluded = build_matrix(records, [latency, cost], anchor)
    if excluded:
        logger.warning("Entries excluded from sweep", count=len(excluded),
                       reasons=sorted({item.reason for item in excluded}))
    if len(matrix) == 0:
        raise EmptyLeaderboardError("No entries carry the anchor, latency and cost metrics")

    normalizers: Dict[str, Optional[Decimal]] = {anchor: amrs(matrix, anchor, convention)}
    for metric in (latency, cost):
        try:
            normalizers[metric] = amrs(matrix, metric, convention)
        except ZeroAMRSError:
            normalizers[metric] = None

    def evaluate(cell: Tuple[Decimal, Decimal, Decimal]) -> SweepCell:
        w_acc, w_lat, w_cost = cell
        weighted = [(anchor, w_acc), (latency, w_lat), (cost, w_cost)]
        for metric, weight in weighted:
            if weight > 0 and normalizers[metric] is None:
                return SweepCell(w_acc, w_lat, w_cost, None, None, f"zero_amrs:{metric}")
        best = None
        with localcontext() as ctx:
            ctx.prec = PRECISION
            for i, record in enumerate(matrix.rows):
                score = sum(
                    (weight * matrix.values[metric][i] / normalizers[metric]
                     for metric, weight in weighted if weight > 0),
                    Decimal(0),
                )
                key = _tie_key(record, score, anchor)
                if best is None or key < best[0]:
                    best = (key, record, score)
        return SweepCell(w_acc, w_lat, w_cost, EntryId.of(best[1]), best[2])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(evaluate, grid))
    else:
        cells = [evaluate(cell) for cell in grid]

    logger.info("✓ Weight sweep finished", cells=len(cells), step=str(grid_step),
                winners=len({cell.winner for cell in cells if cell.winner}),
                unscorable=sum(1 for cell in cells if not cell.scorable))
    return cells
