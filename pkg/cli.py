"""CLI Orchestration Layer - main entry point for irledger.

Data goes to stdout, diagnostics to stderr. Exit status: 0 success,
1 validation error, 2 usage error, 130 interrupted.
"""
import argparse
import json
import sys
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import List, Optional, Sequence, TextIO

from catalog import PricingCatalog, ResourceRequirement, load_catalog, select_min_viable
from config import Config
from costing import annotate_costs, audit_costs
from errors import IRLedgerError
from irmetrics import evaluate, parse_qrels, parse_run
from logger import logger
from metrics import COST_USD_PER_1M, LATENCY_MS, MRR_AT_10
from probe import ProbeConfig, emit_submission, measure_throughput, run_probe
from reports import (FORMATS, cost_document, eval_document, leaderboard_document,
                     pareto_document, render, sweep_document)
from scoring import (Threshold, pareto_frontier, parse_weights, rank_by_accuracy_under_budget,
                     rank_by_efficiency_over_floor, rank_dynascore, weight_sweep)
from submissions import HardwareConfig, SubmissionRecord, ingest, query, store_append
from utils import canonical_json

__version__ = "1.0.0"

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_USAGE = 2
EXIT_INTERRUPTED = 130


class LeaderboardCLI:
    """Runs one subcommand against the configured store and catalog."""

    def __init__(self, args: argparse.Namespace, stdout: TextIO = None):
        self.args = args
        self.stdout = stdout or sys.stdout

    def run(self) -> int:
        """Dispatch the parsed subcommand.

        Returns:
            Exit code
        """
        handler = getattr(self, f"_cmd_{self.args.command.replace('-', '_')}")
        try:
            handler()
            return EXIT_OK
        except KeyboardInterrupt:
            logger.warning("Interrupted by user")
            return EXIT_INTERRUPTED
        except IRLedgerError as e:
            logger.error(f"✗ {type(e).__name__}", details=e.to_dict())
            print(f"error: {e}", file=sys.stderr)
            return EXIT_INVALID
        except FileNotFoundError as e:
            logger.error("✗ File not found", error=str(e))
            print(f"error: {e}", file=sys.stderr)
            return EXIT_INVALID

    # -- helpers ---------------------------------------------------------

    def _emit(self, text: str) -> None:
        self.stdout.write(text if text.endswith("\n") else text + "\n")

    def _catalog(self, required: bool = False) -> Optional[PricingCatalog]:
        path = getattr(self.args, "catalog", None) or Config.CATALOG_PATH
        if not path:
            if required:
                raise IRLedgerError("a pricing catalog is required: pass --catalog or set "
                                    "IRLEDGER_CATALOG", field="catalog")
            return None
        return load_catalog(path)

    def _store(self) -> str:
        return getattr(self.args, "store", None) or Config.STORE_PATH

    def _records(self) -> List[SubmissionRecord]:
        return query(self._store(), dataset=getattr(self.args, "dataset", None),
                     system=getattr(self.args, "system", None))

    @staticmethod
    def _with_costs(records: List[SubmissionRecord],
                    catalog: Optional[PricingCatalog]) -> List[SubmissionRecord]:
        """Fill in missing costs where latency and a catalog are available."""
        if catalog is None:
            return records
        pending = [index for index, record in enumerate(records)
                   if record.metric(COST_USD_PER_1M.key) is None
                   and record.metric(LATENCY_MS.key) is not None]
        if not pending:
            return records
        filled = annotate_costs([records[index] for index in pending], catalog, Config.QUERY_COUNT)
        result = list(records)
        for index, record in zip(pending, filled):
            result[index] = record
        return result

    @staticmethod
    def _snapshot(catalog: Optional[PricingCatalog]) -> Optional[str]:
        return catalog.snapshot_date.isoformat() if catalog else None

    # -- subcommands -----------------------------------------------------

    def _cmd_ingest(self):
        catalog = None if self.args.no_bounds_check else self._catalog()
        records = ingest(self.args.input, catalog)
        appended = store_append(self._store(), records)
        self._emit(canonical_json({"appended": appended, "store": str(self._store())}))

    def _cmd_cost(self):
        catalog = self._catalog(required=True)
        records = [r for r in self._records() if r.metric(LATENCY_MS.key) is not None]
        queries = self.args.queries or Config.QUERY_COUNT
        lines = audit_costs(records, catalog, queries)
        document = cost_document(lines, self._snapshot(catalog), queries)
        self._emit(render(document, self.args.format))

    def _cmd_eval(self):
        report = evaluate(parse_run(self.args.run), parse_qrels(self.args.qrels),
                          self.args.k, dataset=self.args.dataset)
        if self.args.format == "json":
            self._emit(json.dumps(report.to_dict(include_queries=self.args.per_query), indent=2))
        else:
            self._emit(render(eval_document(report), self.args.format))

    def _cmd_rank(self):
        catalog = self._catalog()
        records = self._with_costs(self._records(), catalog)
        strategy = self.args.strategy

        if strategy == "dynascore":
            weights = parse_weights(self.args.weights or Config.DEFAULT_WEIGHTS)
            filters = [Threshold.parse(text) for text in self.args.filter or []]
            board = rank_dynascore(records, weights, filters, self.args.convention)
            columns = weights.metrics
        elif strategy == "budget":
            if self.args.threshold is None:
                raise IRLedgerError("--threshold is required for the budget strategy",
                                    field="threshold")
            board = rank_by_accuracy_under_budget(records, self.args.metric,
                                                  self.args.threshold, self.args.anchor)
            columns = [self.args.anchor, self.args.metric]
        else:
            if self.args.floor is None:
                raise IRLedgerError("--floor is required for the floor strategy", field="floor")
            board = rank_by_efficiency_over_floor(records, self.args.floor,
                                                  self.args.metric, self.args.anchor)
            columns = [self.args.anchor, self.args.metric]

        title = self.args.title or f"{self.args.dataset} leaderboard"
        document = leaderboard_document(board, title, self._snapshot(catalog), columns)
        self._emit(render(document, self.args.format))

    def _cmd_pareto(self):
        catalog = self._catalog()
        records = self._with_costs(self._records(), catalog)
        points = pareto_frontier(records, self.args.x, self.args.y)
        document = pareto_document(points, self.args.x, self.args.y, self._snapshot(catalog))
        self._emit(render(document, self.args.format))

    def _cmd_sweep(self):
        catalog = self._catalog()
        records = self._with_costs(self._records(), catalog)
        cells = weight_sweep(records, self.args.step or Config.SWEEP_STEP, anchor=self.args.anchor,
                             convention=self.args.convention, workers=self.args.workers)
        document = sweep_document(cells, self.args.convention or Config.AMRS_CONVENTION,
                                  self._snapshot(catalog))
        self._emit(render(document, self.args.format))

    def _cmd_probe(self):
        hardware = HardwareConfig(self.args.instance, self.args.gpus, self.args.cpus,
                                  self.args.ram)
        config = ProbeConfig(
            endpoint=self.args.endpoint,
            queries=Path(self.args.queries),
            hardware=hardware,
            system=self.args.system or "",
            dataset=self.args.dataset or "",
            sample_size=_pick(self.args.sample, Config.PROBE_SAMPLE_SIZE),
            trials=_pick(self.args.trials, Config.PROBE_TRIALS),
            warmup=_pick(self.args.warmup, Config.PROBE_WARMUP),
            k=_pick(self.args.k, Config.PROBE_K),
            timeout_ms=_pick(self.args.timeout_ms, Config.PROBE_TIMEOUT_MS),
            progress=self.args.progress,
        )
        report = run_probe(config)
        throughput = None
        if self.args.throughput_batch:
            throughput = measure_throughput(config, self.args.throughput_batch)

        output = report.to_dict()
        if throughput is not None:
            output["throughput"] = throughput.to_dict()
        self._emit(json.dumps(output, indent=2))

        if self.args.qrels and self.args.run:
            accuracy = evaluate(parse_run(self.args.run), parse_qrels(self.args.qrels),
                                config.k, dataset=config.dataset)
            record = emit_submission(report, accuracy, config, throughput, self._catalog())
            if self.args.store:
                store_append(self.args.store, [record])
            self._emit(record.to_json_line())
        elif not report.usable:
            raise IRLedgerError(f"probe run {report.run_id} recorded "
                                f"{len(report.failures)} failures", field="failures")

    def _cmd_min_instance(self):
        catalog = self._catalog(required=True)
        requirement = ResourceRequirement(self.args.gpus, self.args.cpus, self.args.ram,
                                          self.args.arch)
        instance = select_min_viable(catalog, requirement)
        payload = instance.to_dict()
        payload["snapshot_date"] = catalog.snapshot_date.isoformat()
        self._emit(canonical_json(payload))


def _pick(value, default):
    return default if value is None else value


def _decimal_arg(text: str) -> Decimal:
    try:
        return Decimal(text)
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"invalid number: '{text}'")


class _ArgumentParser(argparse.ArgumentParser):
    """Prints the (sub)command help on usage errors before exiting with 2."""

    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_format(parser, default: str):
    parser.add_argument('--format', choices=FORMATS, default=default,
                        help=f'Output format (default: {default})')


def _add_store(parser, dataset_required: bool = False):
    parser.add_argument('--store', type=str, help='Submission store (JSONL)')
    parser.add_argument('--dataset', type=str, required=dataset_required,
                        help='Dataset tag, e.g. msmarco-dev')
    parser.add_argument('--system', type=str, help='Restrict to one system')


def _add_catalog(parser):
    parser.add_argument('--catalog', type=str,
                        help='Pricing catalog JSON (default: $IRLEDGER_CATALOG)')


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="irledger",
        description="irledger: multi-metric leaderboards for retrieval benchmarks",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Load transcribed measurements into a store
  python cli.py ingest --input fixtures/msmarco_tables2.jsonl --store s.jsonl \\
      --catalog fixtures/catalog_2022-11-01.json

  # Default-weight Dynascore board
  python cli.py rank --store s.jsonl --dataset msmarco-dev \\
      --weights mrr_at_10=0.5,cost_usd_per_1m=0.25,latency_ms=0.25 --format markdown

  # Frontier points for plotting
  python cli.py pareto --store s.jsonl --x cost_usd_per_1m --y mrr_at_10 --format csv

  # Measure a live endpoint
  python cli.py probe --endpoint http://localhost:8080 --queries queries.txt \\
      --sample 1000 --trials 5 --warmup 10 --k 10 --timeout-ms 30000
        """
    )
    parser.add_argument('--config', type=str, help='key=value file with IRLEDGER_* defaults')
    parser.add_argument('--verbose', action='store_true', help='Enable debug logging')
    parser.add_argument('--quiet', action='store_true', help='Only log errors')
    parser.add_argument('--version', action='version', version=f'irledger v{__version__}')

    commands = parser.add_subparsers(dest='command', metavar='command')

    ingest_cmd = commands.add_parser('ingest', help='Validate a JSONL file and append it to the store')
    ingest_cmd.add_argument('--input', required=True, help='Submission JSONL file')
    ingest_cmd.add_argument('--store', type=str, help='Submission store (JSONL)')
    _add_catalog(ingest_cmd)
    ingest_cmd.add_argument('--no-bounds-check', action='store_true',
                            help='Skip instance resolution and shape checks')

    cost_cmd = commands.add_parser('cost', help='Print cost audit lines for stored records')
    _add_store(cost_cmd)
    _add_catalog(cost_cmd)
    cost_cmd.add_argument('--queries', type=int,
                          help='Query volume billed (default: $IRLEDGER_QUERY_COUNT or 1000000)')
    _add_format(cost_cmd, 'csv')

    eval_cmd = commands.add_parser('eval', help='MRR@k and Success@k of a run file')
    eval_cmd.add_argument('--qrels', required=True, help='qrels file (qid 0 docid rel)')
    eval_cmd.add_argument('--run', required=True, help='run file (qid Q0 docid rank score tag)')
    eval_cmd.add_argument('--k', type=int, default=10, help='Cutoff (default: 10)')
    eval_cmd.add_argument('--dataset', type=str, help='Dataset tag echoed into the report')
    eval_cmd.add_argument('--per-query', action='store_true', help='Include per-query values')
    _add_format(eval_cmd, 'json')

    rank_cmd = commands.add_parser('rank', help='Ranked leaderboard for one dataset')
    _add_store(rank_cmd, dataset_required=True)
    _add_catalog(rank_cmd)
    rank_cmd.add_argument('--strategy', choices=['dynascore', 'budget', 'floor'],
                          default='dynascore', help='Ranking strategy (default: dynascore)')
    rank_cmd.add_argument('--weights', type=str,
                          help='metric=weight list (default: $IRLEDGER_WEIGHTS)')
    rank_cmd.add_argument('--filter', action='append',
                          help="Threshold such as 'latency_ms<=100' (repeatable)")
    rank_cmd.add_argument('--metric', default=COST_USD_PER_1M.key,
                          help='Efficiency metric for budget/floor strategies')
    rank_cmd.add_argument('--threshold', type=_decimal_arg, help='Budget for the budget strategy')
    rank_cmd.add_argument('--floor', type=_decimal_arg, help='Accuracy floor for the floor strategy')
    rank_cmd.add_argument('--anchor', default=MRR_AT_10.key, help='Accuracy anchor metric')
    rank_cmd.add_argument('--convention', choices=['skip', 'merge'],
                          help='AMRS equal-accuracy convention (default: $IRLEDGER_AMRS_CONVENTION)')
    rank_cmd.add_argument('--title', type=str, help='Board title')
    _add_format(rank_cmd, 'markdown')

    pareto_cmd = commands.add_parser('pareto', help='Dominance flags in a cost/accuracy plane')
    _add_store(pareto_cmd)
    _add_catalog(pareto_cmd)
    pareto_cmd.add_argument('--x', default=COST_USD_PER_1M.key, help='Lower-better axis')
    pareto_cmd.add_argument('--y', default=MRR_AT_10.key, help='Higher-better axis')
    _add_format(pareto_cmd, 'csv')

    sweep_cmd = commands.add_parser('sweep', help='Dynascore winner over the weight simplex')
    _add_store(sweep_cmd, dataset_required=True)
    _add_catalog(sweep_cmd)
    sweep_cmd.add_argument('--step', type=_decimal_arg,
                           help='Grid step (default: $IRLEDGER_SWEEP_STEP or 0.05)')
    sweep_cmd.add_argument('--anchor', default=MRR_AT_10.key, help='Accuracy anchor metric')
    sweep_cmd.add_argument('--convention', choices=['skip', 'merge'],
                           help='AMRS equal-accuracy convention')
    sweep_cmd.add_argument('--workers', type=int, default=1, help='Parallel cell workers')
    _add_format(sweep_cmd, 'csv')

    probe_cmd = commands.add_parser('probe', help='Measure latency of a live search endpoint')
    probe_cmd.add_argument('--endpoint', required=True, help='Base URL serving POST /search')
    probe_cmd.add_argument('--queries', required=True, help='One query per line')
    probe_cmd.add_argument('--sample', type=int, help='Queries per trial (default: 1000)')
    probe_cmd.add_argument('--trials', type=int, help='Timed passes (default: 5)')
    probe_cmd.add_argument('--warmup', type=int, help='Untimed requests first (default: 10)')
    probe_cmd.add_argument('--k', type=int, help='Results requested per query (default: 10)')
    probe_cmd.add_argument('--timeout-ms', type=int, help='Per-request timeout (default: 30000)')
    probe_cmd.add_argument('--throughput-batch', type=int, default=0,
                           help='Also measure throughput with this many requests in flight')
    probe_cmd.add_argument('--system', type=str, help='System tag for the emitted record')
    probe_cmd.add_argument('--dataset', type=str, help='Dataset tag for the emitted record')
    probe_cmd.add_argument('--instance', default='unknown', help='Declared instance type')
    probe_cmd.add_argument('--gpus', type=int, default=0, help='Declared GPUs used')
    probe_cmd.add_argument('--cpus', type=int, default=1, help='Declared CPU threads used')
    probe_cmd.add_argument('--ram', type=_decimal_arg, default=Decimal(1), help='Declared RAM available (GB)')
    probe_cmd.add_argument('--qrels', type=str, help='qrels for emitting a submission')
    probe_cmd.add_argument('--run', type=str, help='run file produced by the same system')
    probe_cmd.add_argument('--store', type=str, help='Append the emitted submission here')
    _add_catalog(probe_cmd)
    probe_cmd.add_argument('--progress', action='store_true', help='Show a progress bar')

    min_cmd = commands.add_parser('min-instance', help='Cheapest instance meeting a requirement')
    _add_catalog(min_cmd)
    min_cmd.add_argument('--gpus', type=int, default=0)
    min_cmd.add_argument('--cpus', type=int, required=True)
    min_cmd.add_argument('--ram', type=int, required=True, help='RAM in GiB')
    min_cmd.add_argument('--arch', type=str, help='Restrict to an architecture tag')

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE

    if args.verbose:
        logger.set_level("DEBUG")
    elif args.quiet:
        logger.set_level("ERROR")

    try:
        Config.load_file(args.config)
    except (FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID

    return LeaderboardCLI(args).run()


if __name__ == "__main__":
    sys.exit(main())
