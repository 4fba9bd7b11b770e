"""Latency probe for a live search endpoint.

Protocol: ``warmup`` untimed requests, then ``trials`` passes over the same
fixed sample of queries, strictly one request in flight. Each timed span
runs from encoding the request body to decoding and checking the response.

Endpoint contract::

    POST <endpoint>/search   {"query": "<text>", "k": 10}
    200                      {"results": [{"docid": "<id>", "score": <number>}, ...]}
"""
import json
import math
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from itertools import cycle, islice
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import requests
from jsonschema import Draft7Validator
from tqdm import tqdm

from catalog import PricingCatalog
from config import Config
from errors import ProbeConnectionError, ProbeError, UnusableReportError
from irmetrics import EvalReport
from logger import logger
from metrics import LATENCY_MS, THROUGHPUT_QPS, accuracy_key
from submissions import HardwareConfig, SubmissionRecord, record_from_dict
from utils import generate_run_id, json_number, to_decimal, utc_timestamp

RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["results"],
    "properties": {
        "results": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["docid", "score"],
                "properties": {
                    "docid": {"type": "string"},
                    "score": {"type": "number"},
                },
            },
        },
    },
}
_RESPONSE_VALIDATOR = Draft7Validator(RESPONSE_SCHEMA)
PERCENTILES = (50, 95, 99)


@dataclass
class ProbeConfig:
    endpoint: str
    queries: Path
    hardware: HardwareConfig
    system: str = ""
    dataset: str = ""
    sample_size: int = Config.PROBE_SAMPLE_SIZE
    trials: int = Config.PROBE_TRIALS
    warmup: int = Config.PROBE_WARMUP
    k: int = Config.PROBE_K
    timeout_ms: int = Config.PROBE_TIMEOUT_MS
    progress: bool = False

    def validate(self) -> None:
        checks = (
            ("sample_size", self.sample_size >= 1),
            ("trials", self.trials >= 1),
            ("warmup", self.warmup >= 0),
            ("k", self.k >= 1),
            ("timeout_ms", self.timeout_ms > 0),
        )
        for name, ok in checks:
            if not ok:
                raise ProbeError(f"invalid probe setting {name}={getattr(self, name)}", field=name)
        if not self.endpoint.startswith(("http://", "https://")):
            raise ProbeError(f"endpoint must be an http(s) URL, got '{self.endpoint}'",
                             field="endpoint")

    @property
    def search_url(self) -> str:
        base = self.endpoint.rstrip("/")
        return base if base.endswith("/search") else f"{base}/search"

    @property
    def timeout_s(self) -> float:
        return self.timeout_ms / 1000.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "endpoint": self.endpoint,
            "queries": str(self.queries),
            "system": self.system,
            "dataset": self.dataset,
            "sample_size": self.sample_size,
            "trials": self.trials,
            "warmup": self.warmup,
            "k": self.k,
            "timeout_ms": self.timeout_ms,
            "hardware": {key: json_number(value) for key, value in self.hardware.to_dict().items()},
        }


@dataclass
class ProbeFailure:
    phase: str
    query_index: int
    reason: str


def _finite_or_none(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


@dataclass
class ProbeReport:
    run_id: str
    started_at: str
    finished_at: str
    trial_means_ms: List[float]
    mean_ms: float
    p50_ms: float
    p95_ms: float
    p99_ms: float
    query_count: int
    failures: List[ProbeFailure]
    warmup_failures: int
    config: Dict[str, Any]

    @property
    def usable(self) -> bool:
        return not self.failures and self.query_count > 0

    def to_dict(self) -> Dict[str, Any]:
        """Report fields with undefined statistics (no successful query) as None."""
        data = asdict(self)
        for key in ("mean_ms", "p50_ms", "p95_ms", "p99_ms"):
            data[key] = _finite_or_none(data[key])
        data["trial_means_ms"] = [_finite_or_none(value) for value in data["trial_means_ms"]]
        data["failure_count"] = len(self.failures)
        data["usable"] = self.usable
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False)


@dataclass
class ThroughputReport:
    batch_size: int
    completed: int
    failures: List[ProbeFailure]
    wall_seconds: float
    queries_per_second: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class _RequestFailed(Exception):
    pass


def load_queries(path, sample_size: int) -> List[str]:
    """First sample_size non-blank lines, reused in order if the file is shorter."""
    source = Path(path)
    if not source.exists():
        raise ProbeError(f"query file not found: {source}", field="queries")
    lines = [line.strip() for line in source.read_text(encoding="utf-8").splitlines()]
    queries = [line for line in lines if line]
    if not queries:
        raise ProbeError(f"query file {source} is empty", field="queries")
    if len(queries) < sample_size:
        logger.warning("Query file shorter than sample; reusing queries in order",
                       available=len(queries), sample_size=sample_size)
    return list(islice(cycle(queries), sample_size))


def _timed_search(session: requests.Session, config: ProbeConfig, query: str) -> float:
    """One request; returns elapsed milliseconds or raises _RequestFailed."""
    try:
        started = time.perf_counter()
        body = json.dumps({"query": query, "k": config.k}).encode("utf-8")
        response = session.post(config.search_url, data=body,
                                headers={"Content-Type": "application/json"},
                                timeout=config.timeout_s)
        if response.status_code != 200:
            raise _RequestFailed(f"http {response.status_code}")
        payload = response.json()
        elapsed = (time.perf_counter() - started) * 1000.0
    except requests.exceptions.ConnectTimeout as e:
        raise ProbeConnectionError(f"cannot connect to {config.search_url}: {e}",
                                   field="endpoint") from e
    except requests.exceptions.Timeout:
        raise _RequestFailed(f"timeout after {config.timeout_ms} ms")
    except requests.exceptions.ConnectionError as e:
        raise ProbeConnectionError(f"cannot connect to {config.search_url}: {e}",
                                   field="endpoint") from e
    except ValueError as e:
        raise _RequestFailed(f"malformed response: {e}")

    problem = next(iter(_RESPONSE_VALIDATOR.iter_errors(payload)), None)
    if problem is not None:
        raise _RequestFailed(f"malformed response: {problem.message}")
    if len(payload["results"]) > config.k:
        raise _RequestFailed(f"malformed response: {len(payload['results'])} results for k={config.k}")
    return elapsed


def summarize(latencies_by_trial: Sequence[Sequence[float]]) -> Dict[str, Any]:
    """Pooled mean, per-trial means and percentiles of raw latencies."""
    pooled = [value for trial in latencies_by_trial for value in trial]
    if not pooled:
        return {"trial_means_ms": [], "mean_ms": math.nan, "p50_ms": math.nan,
                "p95_ms": math.nan, "p99_ms": math.nan, "query_count": 0}
    p50, p95, p99 = np.percentile(np.asarray(pooled, dtype=float), PERCENTILES)
    return {
        "trial_means_ms": [math.fsum(trial) / len(trial) if trial else math.nan
                           for trial in latencies_by_trial],
        "mean_ms": math.fsum(pooled) / len(pooled),
        "p50_ms": float(p50),
        "p95_ms": float(p95),
        "p99_ms": float(p99),
        "query_count": len(pooled),
    }


def run_probe(config: ProbeConfig) -> ProbeReport:
    """Measure closed-loop per-query latency.

    Raises:
        ProbeConnectionError: the endpoint refuses connections
        ProbeError: invalid configuration or empty query file
    """
    config.validate()
    queries = load_queries(config.queries, config.sample_size)
    run_id = generate_run_id("probe")
    started_at = utc_timestamp()
    failures: List[ProbeFailure] = []
    warmup_failures = 0
    latencies: List[List[float]] = []

    logger.info("Probe starting", run_id=run_id, endpoint=config.search_url,
                sample_size=config.sample_size, trials=config.trials, warmup=config.warmup)

    with requests.Session() as session:
        for index, query in enumerate(islice(cycle(queries), config.warmup)):
            try:
                _timed_search(session, config, query)
            except _RequestFailed as e:
                warmup_failures += 1
                logger.warning("Warm-up request failed", index=index, reason=str(e))

        progress = tqdm(total=config.trials * len(queries), desc="probe", unit="q",
                        file=sys.stderr, disable=not config.progress)
        with progress:
            for trial in range(config.trials):
                measured = []
                for index, query in enumerate(queries):
                    try:
                        measured.append(_timed_search(session, config, query))
                    except _RequestFailed as e:
                        failures.append(ProbeFailure(f"trial-{trial + 1}", index, str(e)))
                    progress.update(1)
                latencies.append(measured)
                logger.debug("Trial finished", trial=trial + 1, measured=len(measured))

    stats = summarize(latencies)
    report = ProbeReport(
        run_id=run_id,
        started_at=started_at,
        finished_at=utc_timestamp(),
        failures=failures,
        warmup_failures=warmup_failures,
        config=config.to_dict(),
        **stats,
    )
    if report.usable:
        logger.info("✓ Probe finished", run_id=run_id, mean_ms=round(report.mean_ms, 3),
                    p99_ms=round(report.p99_ms, 3), queries=report.query_count)
    else:
        logger.warning("✗ Probe finished with failures; mean is unusable", run_id=run_id,
                       failures=len(failures))
    return report


def measure_throughput(config: ProbeConfig,
                       batch_size: int = Config.PROBE_BATCH_SIZE) -> ThroughputReport:
    """Queries per second with batch_size requests kept in flight.

    Runs the configured warm-ups sequentially first, then one pass over the
    query sample. Never touches the latency statistics.
    """
    if batch_size < 1:
        raise ProbeError(f"batch_size must be >= 1, got {batch_size}", field="batch_size")
    config.validate()
    queries = load_queries(config.queries, config.sample_size)

    with requests.Session() as session:
        for query in islice(cycle(queries), config.warmup):
            try:
                _timed_search(session, config, query)
            except _RequestFailed:
                pass

    local = threading.local()
    sessions: List[requests.Session] = []
    lock = threading.Lock()

    def issue(item):
        index, query = item
        session = getattr(local, "session", None)
        if session is None:
            session = local.session = requests.Session()
            with lock:
                sessions.append(session)
        try:
            _timed_search(session, config, query)
            return None
        except _RequestFailed as e:
            return ProbeFailure("throughput", index, str(e))

    started = time.perf_counter()
    try:
        with ThreadPoolExecutor(max_workers=batch_size) as pool:
            outcomes = list(pool.map(issue, enumerate(queries)))
    finally:
        for session in sessions:
            session.close()
    wall = time.perf_counter() - started

    failures = [outcome for outcome in outcomes if outcome is not None]
    completed = len(outcomes) - len(failures)
    report = ThroughputReport(batch_size, completed, failures, wall,
                              completed / wall if wall > 0 else 0.0)
    logger.info("✓ Throughput measured", batch_size=batch_size, completed=completed,
                qps=round(report.queries_per_second, 2))
    return report


def emit_submission(report: ProbeReport, accuracy: EvalReport, config: ProbeConfig,
                    throughput: Optional[ThroughputReport] = None,
                    catalog: Optional[PricingCatalog] = None) -> SubmissionRecord:
    """Turn a clean probe run plus its accuracy evaluation into a submission.

    Raises:
        UnusableReportError: the probe recorded failures
        ProbeError: missing system/dataset tags, or the evaluation belongs to
            another dataset
    """
    if not report.usable:
        raise UnusableReportError(
            f"probe run {report.run_id} has {len(report.failures)} failures; latency is unusable",
            details={"run_id": report.run_id},
        )
    if not config.system or not config.dataset:
        raise ProbeError("probe config needs system and dataset tags", field="system/dataset")
    if accuracy.dataset is not None and accuracy.dataset != config.dataset:
        raise ProbeError(
            f"evaluation is for '{accuracy.dataset}' but the probe ran '{config.dataset}'",
            field="dataset",
        )

    metrics = {
        accuracy_key("mrr", accuracy.k): to_decimal(accuracy.mrr_at_k),
        accuracy_key("success", accuracy.k): to_decimal(accuracy.success_at_k),
        LATENCY_MS.key: to_decimal(report.mean_ms),
    }
    if throughput is not None and throughput.completed:
        metrics[THROUGHPUT_QPS.key] = to_decimal(throughput.queries_per_second)

    record = record_from_dict({
        "system": config.system,
        "dataset": config.dataset,
        "hardware": config.hardware.to_dict(),
        "metrics": metrics,
        "provenance": "measured",
        "source": report.run_id,
    }, catalog=catalog)
    logger.info("✓ Submission emitted", system=record.system, dataset=record.dataset,
                source=record.source)
    return record
