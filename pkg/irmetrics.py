"""MRR@k and Success@k over TREC-style qrels and run files.

Qrels lines:  ``qid 0 docid rel``            (rel > 0 counts as relevant)
Run lines:    ``qid Q0 docid rank score tag`` (ordered by score, ties by file order)

Corpus means are taken over every query in the qrels; a query the run
never answered scores 0. Results are percentage points.
"""
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Set, Tuple

from errors import EvalFormatError, ScoringError
from logger import logger
from metrics import accuracy_key

QRELS_COLUMNS = 4
RUN_COLUMNS = 6


@dataclass
class Qrels:
    """query id -> relevant doc ids (queries judged only non-relevant map to an empty set)."""
    relevant: Dict[str, Set[str]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.relevant)

    @property
    def queries(self) -> List[str]:
        return list(self.relevant)


@dataclass
class RankedRun:
    """query id -> [(doc id, score)] sorted by descending score."""
    rankings: Dict[str, List[Tuple[str, float]]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rankings)

    @classmethod
    def from_lists(cls, rankings: Dict[str, Sequence[Tuple[str, float]]]) -> "RankedRun":
        """Build from unsorted (doc, score) lists; equal scores keep list order."""
        ordered = {}
        for qid, entries in rankings.items():
            seen: Set[str] = set()
            for docid, _ in entries:
                if docid in seen:
                    raise EvalFormatError(f"duplicate doc '{docid}' for query '{qid}'", "<memory>")
                seen.add(docid)
            ordered[qid] = sorted(entries, key=lambda entry: -entry[1])
        return cls(ordered)


@dataclass
class QueryResult:
    reciprocal_rank: float
    success: float


@dataclass
class MetricFragment:
    """One corpus-level metric plus its per-query values."""
    name: str
    k: int
    value: float
    per_query: Dict[str, float]
    query_count: int


@dataclass
class EvalReport:
    k: int
    query_count: int
    mrr_at_k: float
    success_at_k: float
    per_query: Dict[str, QueryResult]
    boundary_ties: List[str] = field(default_factory=list)
    dataset: Optional[str] = None

    @property
    def metrics(self) -> Dict[str, float]:
        return {
            accuracy_key("mrr", self.k): self.mrr_at_k,
            accuracy_key("success", self.k): self.success_at_k,
        }

    def to_dict(self, include_queries: bool = False) -> Dict[str, Any]:
        data = {
            "dataset": self.dataset,
            "k": self.k,
            "query_count": self.query_count,
            accuracy_key("mrr", self.k): self.mrr_at_k,
            accuracy_key("success", self.k): self.success_at_k,
            "boundary_ties": list(self.boundary_ties),
        }
        if include_queries:
            data["per_query"] = {qid: asdict(result) for qid, result in self.per_query.items()}
        return data


def _lines(path: Path) -> Iterable[Tuple[int, List[str]]]:
    line_number = 0
    try:
        with open(path, encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                columns = line.split()
                if columns:
                    yield line_number, columns
    except UnicodeDecodeError as e:
        raise EvalFormatError(f"file is not valid UTF-8 after line {line_number}: {e.reason}",
                              str(path)) from e


def parse_qrels(path) -> Qrels:
    """Read a qrels file.

    Raises:
        EvalFormatError: wrong column count, non-integer label, or a repeated
            (query, doc) pair; the message carries the line number
    """
    source = Path(path)
    relevant: Dict[str, Set[str]] = {}
    judged: Set[Tuple[str, str]] = set()
    for line_number, columns in _lines(source):
        if len(columns) != QRELS_COLUMNS:
            raise EvalFormatError(f"expected {QRELS_COLUMNS} columns, got {len(columns)}",
                                  str(source), line_number)
        qid, _, docid, label = columns
        try:
            grade = int(label)
        except ValueError:
            raise EvalFormatError(f"relevance label '{label}' is not an integer",
                                  str(source), line_number)
        if (qid, docid) in judged:
            raise EvalFormatError(f"duplicate judgment for query '{qid}', doc '{docid}'",
                                  str(source), line_number)
        judged.add((qid, docid))
        docs = relevant.setdefault(qid, set())
        if grade > 0:
            docs.add(docid)

    logger.debug("Qrels parsed", path=str(source), queries=len(relevant), judgments=len(judged))
    return Qrels(relevant)


def parse_run(path) -> RankedRun:
    """Read a run file and order each query's results by descending score.

    The rank column is only cross-checked; a query whose file ranks disagree
    with the score order is reported once in the log.
    """
    source = Path(path)
    entries: Dict[str, List[Tuple[str, int, float]]] = defaultdict(list)
    seen: Dict[str, Set[str]] = defaultdict(set)
    for line_number, columns in _lines(source):
        if len(columns) != RUN_COLUMNS:
            raise EvalFormatError(f"expected {RUN_COLUMNS} columns, got {len(columns)}",
                                  str(source), line_number)
        qid, _, docid, rank_text, score_text, _ = columns
        try:
            rank = int(rank_text)
            score = float(score_text)
        except ValueError:
            raise EvalFormatError(f"bad rank/score '{rank_text} {score_text}'",
                                  str(source), line_number)
        if not math.isfinite(score):
            raise EvalFormatError(f"score must be finite, got '{score_text}'",
                                  str(source), line_number)
        if docid in seen[qid]:
            raise EvalFormatError(f"duplicate doc '{docid}' for query '{qid}'",
                                  str(source), line_number)
        seen[qid].add(docid)
        entries[qid].append((docid, rank, score))

    rankings: Dict[str, List[Tuple[str, float]]] = {}
    mismatched = []
    for qid, rows in entries.items():
        ordered = sorted(rows, key=lambda row: -row[2])
        if any(row[1] != position for position, row in enumerate(ordered, start=1)):
            mismatched.append(qid)
        rankings[qid] = [(docid, score) for docid, _, score in ordered]

    if mismatched:
        logger.warning("⚠ Rank column disagrees with score order; using scores",
                       path=str(source), queries=len(mismatched), first=mismatched[0])
    logger.debug("Run parsed", path=str(source), queries=len(rankings))
    return RankedRun(rankings)


def _first_relevant_rank(ranking: Sequence[Tuple[str, float]], relevant: Set[str], k: int) -> int:
    for position, (docid, _) in enumerate(ranking[:k], start=1):
        if docid in relevant:
            return position
    return 0


def _corpus_mean(values: Iterable[float], count: int) -> float:
    if count == 0:
        return 0.0
    return 100.0 * math.fsum(values) / count


def _check_cutoff(k: int) -> None:
    if k < 1:
        raise ScoringError(f"cutoff k must be >= 1, got {k}", field="k")


def mrr_at_k(run: RankedRun, qrels: Qrels, k: int = 10) -> MetricFragment:
    """Mean reciprocal rank of the first relevant doc within the top k, x100."""
    _check_cutoff(k)
    per_query = {}
    for qid, relevant in qrels.relevant.items():
        rank = _first_relevant_rank(run.rankings.get(qid, ()), relevant, k)
        per_query[qid] = 1.0 / rank if rank else 0.0
    return MetricFragment(accuracy_key("mrr", k), k,
                          _corpus_mean(per_query.values(), len(qrels)), per_query, len(qrels))


def success_at_k(run: RankedRun, qrels: Qrels, k: int = 10) -> MetricFragment:
    """Share of queries with a relevant doc in the top k, x100."""
    _check_cutoff(k)
    per_query = {}
    for qid, relevant in qrels.relevant.items():
        rank = _first_relevant_rank(run.rankings.get(qid, ()), relevant, k)
        per_query[qid] = 1.0 if rank else 0.0
    return MetricFragment(accuracy_key("success", k), k,
                          _corpus_mean(per_query.values(), len(qrels)), per_query, len(qrels))


def boundary_ties(run: RankedRun, qrels: Qrels, k: int) -> List[str]:
    """Queries where a score tie straddles rank k and involves a relevant doc.

    For those queries file order decided which doc made the cutoff, so a
    different tie-break could change the metric.
    """
    flagged = []
    for qid, relevant in qrels.relevant.items():
        ranking = run.rankings.get(qid, [])
        if len(ranking) <= k or not relevant:
            continue
        boundary_score = ranking[k - 1][1]
        if ranking[k][1] != boundary_score:
            continue
        tied = [docid for docid, score in ranking if score == boundary_score]
        if any(docid in relevant for docid in tied):
            flagged.append(qid)
    return flagged


def evaluate(run: RankedRun, qrels: Qrels, k: int = 10,
             dataset: Optional[str] = None) -> EvalReport:
    """Compute both metrics at cutoff k and flag boundary ties."""
    mrr = mrr_at_k(run, qrels, k)
    success = success_at_k(run, qrels, k)
    unjudged = sum(1 for qid in run.rankings if qid not in qrels.relevant)
    ties = boundary_ties(run, qrels, k)

    report = EvalReport(
        k=k,
        query_count=len(qrels),
        mrr_at_k=mrr.value,
        success_at_k=success.value,
        per_query={
            qid: QueryResult(mrr.per_query[qid], success.per_query[qid])
            for qid in qrels.relevant
        },
        boundary_ties=ties,
        dataset=dataset,
    )
    logger.info("✓ Run evaluated", k=k, queries=report.query_count,
                mrr=round(report.mrr_at_k, 3), success=round(report.success_at_k, 3),
                unjudged_run_queries=unjudged, boundary_ties=len(ties))
    return report
