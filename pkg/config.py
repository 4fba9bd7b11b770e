"""Configuration management for the irledger leaderboard engine."""
import os
from pathlib import Path
from typing import Dict, Optional

from dotenv import dotenv_values, load_dotenv

# Load environment variables
load_dotenv()

class Config:
    """Central configuration class."""

    # Data locations
    # IRLEDGER_CATALOG: pinned pricing snapshot used for costing and min-viable lookups
    # IRLEDGER_STORE: JSONL submission store shared by ingest/rank/pareto/sweep
    CATALOG_PATH = os.getenv("IRLEDGER_CATALOG", "")
    STORE_PATH = os.getenv("IRLEDGER_STORE", "submissions.jsonl")

    # Scoring Settings
    DEFAULT_WEIGHTS = os.getenv(
        "IRLEDGER_WEIGHTS",
        "mrr_at_10=0.5,cost_usd_per_1m=0.25,latency_ms=0.25"
    )
    AMRS_CONVENTION = os.getenv("IRLEDGER_AMRS_CONVENTION", "merge")  # merge or skip
    WEIGHT_SUM_TOLERANCE = 1e-9
    SWEEP_STEP = os.getenv("IRLEDGER_SWEEP_STEP", "0.05")

    # Costing Settings
    QUERY_COUNT = int(os.getenv("IRLEDGER_QUERY_COUNT", "1000000"))
    COST_TOLERANCE = os.getenv("IRLEDGER_COST_TOLERANCE", "0.02")

    # Probe Settings
    PROBE_SAMPLE_SIZE = int(os.getenv("PROBE_SAMPLE_SIZE", "1000"))
    PROBE_TRIALS = int(os.getenv("PROBE_TRIALS", "5"))
    PROBE_WARMUP = int(os.getenv("PROBE_WARMUP", "10"))
    PROBE_K = int(os.getenv("PROBE_K", "10"))
    PROBE_TIMEOUT_MS = int(os.getenv("PROBE_TIMEOUT_MS", "30000"))
    PROBE_BATCH_SIZE = int(os.getenv("PROBE_BATCH_SIZE", "16"))

    # Logging
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
    LOG_FORMAT = os.getenv("LOG_FORMAT", "json")
    LOG_FILE = os.getenv("LOG_FILE", "")
    LOGS_DIR = Path(os.getenv("LOGS_DIR", "./logs"))

    # Keys a --config file may set (key=value lines)
    FILE_KEYS = {
        "IRLEDGER_CATALOG": "CATALOG_PATH",
        "IRLEDGER_STORE": "STORE_PATH",
        "IRLEDGER_WEIGHTS": "DEFAULT_WEIGHTS",
        "IRLEDGER_AMRS_CONVENTION": "AMRS_CONVENTION",
        "IRLEDGER_QUERY_COUNT": "QUERY_COUNT",
        "IRLEDGER_SWEEP_STEP": "SWEEP_STEP",
        "IRLEDGER_COST_TOLERANCE": "COST_TOLERANCE",
        "PROBE_SAMPLE_SIZE": "PROBE_SAMPLE_SIZE",
        "PROBE_TRIALS": "PROBE_TRIALS",
        "PROBE_WARMUP": "PROBE_WARMUP",
        "PROBE_K": "PROBE_K",
        "PROBE_TIMEOUT_MS": "PROBE_TIMEOUT_MS",
        "PROBE_BATCH_SIZE": "PROBE_BATCH_SIZE",
    }
    INT_KEYS = {"QUERY_COUNT", "PROBE_SAMPLE_SIZE", "PROBE_TRIALS", "PROBE_WARMUP", "PROBE_K",
                "PROBE_TIMEOUT_MS", "PROBE_BATCH_SIZE"}

    @classmethod
    def load_file(cls, path: Optional[str]) -> Dict[str, str]:
        """Apply a key=value config file on top of environment defaults.

        Args:
            path: Config file path, or None to leave defaults untouched

        Returns:
            Mapping of attribute name to the value applied
        """
        if not path:
            return {}

        config_path = Path(path)
        if not config_path.exists():
            raise FileNotFoundError(f"Config file not found: {config_path}")

        applied = {}
        for key, value in dotenv_values(config_path).items():
            attribute = cls.FILE_KEYS.get(key)
            if attribute is None or value is None:
                continue
            if attribute in cls.INT_KEYS:
                setattr(cls, attribute, int(value))
            else:
                setattr(cls, attribute, value)
            applied[attribute] = value
        return applied

    @classmethod
    def ensure_directories(cls):
        """Create necessary directories if they don't exist."""
        cls.LOGS_DIR.mkdir(parents=True, exist_ok=True)
