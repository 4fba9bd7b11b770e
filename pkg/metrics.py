"""Metric registry: canonical names, orientation and class for leaderboard metrics."""
import re
from dataclasses import asdict, dataclass
from decimal import Decimal
from enum import Enum
from typing import Any, Dict

from errors import SubmissionError


class Orientation(str, Enum):
    HIGHER_BETTER = "higher_better"
    LOWER_BETTER = "lower_better"


class MetricClass(str, Enum):
    ACCURACY = "accuracy"
    EFFICIENCY = "efficiency"


@dataclass(frozen=True)
class MetricName:
    """A metric key plus the sign convention used when aggregating it."""
    key: str
    orientation: Orientation
    metric_class: MetricClass
    unit: str = ""

    @property
    def is_accuracy(self) -> bool:
        return self.metric_class is MetricClass.ACCURACY

    @property
    def lower_better(self) -> bool:
        return self.orientation is Orientation.LOWER_BETTER

    def orient(self, value: Decimal) -> Decimal:
        """Negate lower-is-better values so larger is always better."""
        return -value if self.lower_better else value

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["orientation"] = self.orientation.value
        data["metric_class"] = self.metric_class.value
        return data


MRR_AT_10 = MetricName("mrr_at_10", Orientation.HIGHER_BETTER, MetricClass.ACCURACY, "points")
SUCCESS_AT_10 = MetricName("success_at_10", Orientation.HIGHER_BETTER, MetricClass.ACCURACY, "points")
LATENCY_MS = MetricName("latency_ms", Orientation.LOWER_BETTER, MetricClass.EFFICIENCY, "ms")
COST_USD_PER_1M = MetricName("cost_usd_per_1m", Orientation.LOWER_BETTER, MetricClass.EFFICIENCY, "USD")
INDEX_SIZE_GIB = MetricName("index_size_gib", Orientation.LOWER_BETTER, MetricClass.EFFICIENCY, "GiB")
THROUGHPUT_QPS = MetricName("throughput_qps", Orientation.HIGHER_BETTER, MetricClass.EFFICIENCY, "q/s")

REGISTRY: Dict[str, MetricName] = {
    metric.key: metric
    for metric in (MRR_AT_10, SUCCESS_AT_10, LATENCY_MS, COST_USD_PER_1M,
                   INDEX_SIZE_GIB, THROUGHPUT_QPS)
}

# mrr_at_5, success_at_100, ...
_CUTOFF_PATTERN = re.compile(r"^(mrr|success)_at_([1-9][0-9]*)$")


def get_metric(key: str) -> MetricName:
    """Resolve a metric key, including accuracy metrics at any cutoff.

    Raises:
        SubmissionError: for keys outside the registry
    """
    if key in REGISTRY:
        return REGISTRY[key]
    match = _CUTOFF_PATTERN.match(key)
    if match:
        return MetricName(key, Orientation.HIGHER_BETTER, MetricClass.ACCURACY, "points")
    raise SubmissionError(
        f"Unknown metric '{key}'; known metrics: {', '.join(sorted(REGISTRY))}",
        field=f"metrics.{key}",
    )


def accuracy_key(kind: str, k: int) -> str:
    """Metric key for an accuracy measure at cutoff k, e.g. ('mrr', 10) -> 'mrr_at_10'."""
    return f"{kind}_at_{k}"
