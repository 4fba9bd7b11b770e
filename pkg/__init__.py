"""
irledger - Multi-Metric IR Leaderboards
=======================================

Leaderboards for retrieval systems that weigh accuracy against latency
and dollar cost on declared hardware.

SYSTEM COMPONENTS:
├── catalog.py      - Pinned cloud pricing snapshot and min-viable instances
├── submissions.py  - Validated submission records and the JSONL store
├── costing.py      - Latency x hourly rate cost model and audits
├── irmetrics.py    - MRR@k / Success@k over qrels and run files
├── scoring.py      - AMRS, Dynascore, threshold rankings, Pareto, sweeps
├── probe.py        - Closed-loop latency probe for live endpoints
├── reports.py      - Markdown / CSV / JSON renderings
└── cli.py          - Command-line orchestration

QUICK START:
1. Install dependencies: pip install -r requirements.txt
2. Ingest: python cli.py ingest --input fixtures/msmarco_tables2.jsonl --store s.jsonl
3. Rank:   python cli.py rank --store s.jsonl --dataset msmarco-dev

For fixture provenance, see fixtures/README.md
"""

__version__ = "1.0.0"
__author__ = "irledger Project"
__license__ = "MIT"

__all__ = [
    'PricingCatalog',
    'SubmissionRecord',
    'SubmissionStore',
    'cost_for_queries',
    'evaluate',
    'rank_dynascore',
    'pareto_frontier',
    'weight_sweep',
    'run_probe',
    'render',
    'Config',
    'logger',
]

# Import main classes for convenient access
try:
    from catalog import PricingCatalog
    from submissions import SubmissionRecord, SubmissionStore
    from costing import cost_for_queries
    from irmetrics import evaluate
    from scoring import pareto_frontier, rank_dynascore, weight_sweep
    from probe import run_probe
    from reports import render
    from config import Config
    from logger import logger
except ImportError as e:
    print(f"Warning: Could not import all modules: {e}")
    print("Please run: pip install -r requirements.txt")
