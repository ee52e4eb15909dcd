import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

from dotenv import load_dotenv

from core.active_loop import ExperimentConfig, ExperimentData
from core.synthetic_data import GaussianBenchSpec, TextureBenchSpec, make_gaussian_bench, make_texture_bench
from utils.data_io import read_feature_file
from utils.errors import ConfigError, MalformedInputError

DEFAULT_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
BENCH_KINDS = ("gaussian", "texture")
DATA_KEYS = ("source", "target_pool", "target_test")


@dataclass
class Settings:
    """Process-level settings from the environment (optionally a .env file)"""
    log_level: str = "INFO"
    query_workers: Optional[int] = None
    output_dir: str = "output"


def load_settings(env_file: Optional[str] = None) -> Settings:
    """
    Read SDM_LOG_LEVEL, SDM_QUERY_WORKERS and SDM_OUTPUT_DIR.

    Variables already set in the environment win over the .env file.
    """
    load_dotenv(env_file)
    settings = Settings()
    settings.log_level = os.environ.get("SDM_LOG_LEVEL", settings.log_level).upper()
    settings.output_dir = os.environ.get("SDM_OUTPUT_DIR", settings.output_dir)
    workers = os.environ.get("SDM_QUERY_WORKERS")
    if workers:
        try:
            settings.query_workers = int(workers)
        except ValueError as e:
            raise ConfigError(f"SDM_QUERY_WORKERS must be an integer, got '{workers}'") from e
        if settings.query_workers < 1:
            raise ConfigError(f"SDM_QUERY_WORKERS must be positive, got {settings.query_workers}")
    return settings


def configure_logging(level: Optional[str] = None) -> None:
    """Configure the root logger once; the level falls back to SDM_LOG_LEVEL, then INFO."""
    if level is None:
        level = load_settings().log_level
    numeric = logging.getLevelName(str(level).upper())
    if not isinstance(numeric, int):
        raise ConfigError(f"Unknown log level '{level}'")
    logging.basicConfig(level=numeric, format=DEFAULT_LOG_FORMAT)
    logging.getLogger().setLevel(numeric)


@dataclass
class ExperimentSetup:
    """A parsed experiment document: run config plus where its data comes from"""
    config: ExperimentConfig
    bench_kind: Optional[str] = None
    bench_spec: Dict[str, Any] = field(default_factory=dict)
    data_paths: Dict[str, str] = field(default_factory=dict)

    def build_data(self, seed: Optional[int] = None) -> ExperimentData:
        """Generate the bench (re-seeded when `seed` is given) or read the feature files."""
        if self.bench_kind is not None:
            spec_values = dict(self.bench_spec)
            if seed is not None:
                spec_values["seed"] = seed
            return ExperimentData(*make_bench(self.bench_kind, spec_values))
        return ExperimentData(*(read_feature_file(self.data_paths[key]) for key in DATA_KEYS))


def make_bench(kind: str, spec_values: Dict[str, Any]) -> Tuple:
    """Build a bench from its spec fields; returns (source, target pool, target test)."""
    try:
        if kind == "gaussian":
            return make_gaussian_bench(GaussianBenchSpec(**spec_values))
        if kind == "texture":
            return make_texture_bench(TextureBenchSpec(**spec_values))
    except TypeError as e:
        raise ConfigError(f"Invalid {kind} bench spec: {e}") from e
    raise ConfigError(f"Unknown bench kind '{kind}', expected one of {BENCH_KINDS}")


def load_json_document(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except FileNotFoundError as e:
        raise MalformedInputError(f"Config file not found: {path}") from e
    except (OSError, json.JSONDecodeError) as e:
        raise MalformedInputError(f"Failed to parse config {path}: {e}") from e
    if not isinstance(document, dict):
        raise MalformedInputError(f"Config {path} must hold a JSON object")
    return document


def parse_experiment_document(document: Dict[str, Any]) -> ExperimentSetup:
    values = dict(document)
    bench = values.pop("bench", None)
    data = values.pop("data", None)
    if bench is not None and data is not None:
        raise ConfigError("Config may define either 'bench' or 'data', not both")

    try:
        config = ExperimentConfig.from_dict(values)
    except TypeError as e:
        raise ConfigError(f"Invalid experiment config: {e}") from e
    setup = ExperimentSetup(config=config)

    if bench is not None:
        if not isinstance(bench, dict) or set(bench) - {"kind", "spec"}:
            raise ConfigError("'bench' must be an object with 'kind' and optional 'spec'")
        kind = bench.get("kind")
        if kind not in BENCH_KINDS:
            raise ConfigError(f"Unknown bench kind '{kind}', expected one of {BENCH_KINDS}")
        setup.bench_kind = kind
        setup.bench_spec = dict(bench.get("spec") or {})
        setup.bench_spec.setdefault("seed", config.seed)
    elif data is not None:
        if not isinstance(data, dict) or set(data) != set(DATA_KEYS):
            raise ConfigError(f"'data' must name exactly the feature files {list(DATA_KEYS)}")
        setup.data_paths = {key: str(data[key]) for key in DATA_KEYS}
    else:
        raise ConfigError("Config needs a 'bench' or a 'data' section")
    return setup


def load_experiment(path: str, settings: Optional[Settings] = None) -> ExperimentSetup:
    """Load and validate an experiment document; SDM_QUERY_WORKERS overrides query_workers."""
    setup = parse_experiment_document(load_json_document(path))
    settings = settings or load_settings()
    if settings.query_workers is not None:
        setup.config = setup.config.with_overrides({"query_workers": settings.query_workers})
    return setup


def parse_override(text: str) -> Tuple[str, Any]:
    """Parse a key=value override; the value is read as JSON, falling back to a plain string."""
    if "=" not in text:
        raise ConfigError(f"Override '{text}' must look like key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"Override '{text}' has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def parse_overrides(items) -> Dict[str, Any]:
    overrides = {}
    for item in items or []:
        key, value = parse_override(item)
        overrides[key] = value
    return overrides
