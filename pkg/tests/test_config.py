import json
import logging
import os
import sys
from unittest.mock import patch

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from core.datasets import FeatureSet
from utils.config import (
    Settings,
    configure_logging,
    load_experiment,
    load_json_document,
    load_settings,
    make_bench,
    parse_experiment_document,
    parse_override,
    parse_overrides,
)
from utils.data_io import write_feature_file
from utils.errors import ConfigError, MalformedInputError

SDM_VARIABLES = ("SDM_LOG_LEVEL", "SDM_QUERY_WORKERS", "SDM_OUTPUT_DIR")


@pytest.fixture
def clean_environment():
    with patch.dict(os.environ, {}, clear=False):
        for name in SDM_VARIABLES:
            os.environ.pop(name, None)
        yield


def test_settings_defaults(clean_environment, tmp_path):
    settings = load_settings(str(tmp_path / 'missing.env'))
    assert settings == Settings()


def test_settings_from_environment(clean_environment, tmp_path):
    os.environ.update({"SDM_LOG_LEVEL": "debug", "SDM_QUERY_WORKERS": "4", "SDM_OUTPUT_DIR": "runs"})
    settings = load_settings(str(tmp_path / 'missing.env'))
    assert settings.log_level == "DEBUG"
    assert settings.query_workers == 4
    assert settings.output_dir == "runs"


def test_settings_from_env_file(clean_environment, tmp_path):
    env_file = tmp_path / '.env'
    env_file.write_text("SDM_OUTPUT_DIR=from_file\nSDM_QUERY_WORKERS=2\n")
    settings = load_settings(str(env_file))
    assert settings.output_dir == "from_file"
    assert settings.query_workers == 2


def test_invalid_worker_count(clean_environment, tmp_path):
    for value in ("many", "0"):
        os.environ["SDM_QUERY_WORKERS"] = value
        with pytest.raises(ConfigError):
            load_settings(str(tmp_path / 'missing.env'))


def test_configure_logging_levels():
    root = logging.getLogger()
    previous = root.level
    try:
        configure_logging("warning")
        assert root.level == logging.WARNING
        with pytest.raises(ConfigError):
            configure_logging("chatty")
    finally:
        root.setLevel(previous)


def test_bench_document():
    setup = parse_experiment_document({"seed": 7, "bench": {"kind": "gaussian", "spec": {"samples_per_class": 5}}})
    assert setup.bench_kind == "gaussian"
    assert setup.bench_spec == {"samples_per_class": 5, "seed": 7}
    data = setup.build_data()
    assert len(data.source) == 15
    reseeded = setup.build_data(seed=8)
    assert not (reseeded.source.features == data.source.features).all()


def test_document_sections_are_exclusive():
    with pytest.raises(ConfigError):
        parse_experiment_document({})
    with pytest.raises(ConfigError):
        parse_experiment_document({"bench": {"kind": "gaussian"}, "data": {}})
    with pytest.raises(ConfigError):
        parse_experiment_document({"bench": {"kind": "mnist"}})
    with pytest.raises(ConfigError):
        parse_experiment_document({"bench": {"kind": "gaussian", "size": 3}})
    with pytest.raises(ConfigError):
        parse_experiment_document({"data": {"source": "a.feat"}})
    with pytest.raises(ConfigError):
        parse_experiment_document({"rounds": 1, "bench": {"kind": "gaussian"}})


def test_data_document_reads_feature_files(tmp_path):
    paths = {}
    for i, name in enumerate(("source", "target_pool", "target_test")):
        path = str(tmp_path / f"{name}.feat")
        write_feature_file(FeatureSet([[float(i), 1.0], [0.0, -1.0]], [0, 1]), path)
        paths[name] = path
    setup = parse_experiment_document({"data": paths})
    data = setup.build_data()
    assert data.num_classes == 2
    assert data.target_test.features[0, 0] == 2.0


def test_load_experiment_applies_worker_setting(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({"bench": {"kind": "gaussian"}}))
    setup = load_experiment(str(path), Settings(query_workers=3))
    assert setup.config.query_workers == 3
    assert load_experiment(str(path), Settings()).config.query_workers == 1


def test_bad_json_documents(tmp_path):
    with pytest.raises(MalformedInputError):
        load_json_document(str(tmp_path / 'absent.json'))
    broken = tmp_path / 'broken.json'
    broken.write_text("{not json")
    with pytest.raises(MalformedInputError):
        load_json_document(str(broken))
    listing = tmp_path / 'list.json'
    listing.write_text("[1, 2]")
    with pytest.raises(MalformedInputError):
        load_json_document(str(listing))


def test_make_bench_rejects_unknown_fields():
    with pytest.raises(ConfigError):
        make_bench("gaussian", {"radius": 2.0})
    with pytest.raises(ConfigError):
        make_bench("voxels", {})


def test_overrides():
    assert parse_override("rounds=2") == ("rounds", 2)
    assert parse_override("strategy=random") == ("strategy", "random")
    assert parse_override("selection_epochs=[5, 7]") == ("selection_epochs", [5, 7])
    assert parse_overrides(["use_fda=true", "lambda=0.5"]) == {"use_fda": True, "lambda": 0.5}
    assert parse_overrides(None) == {}
    with pytest.raises(ConfigError):
        parse_override("rounds")
    with pytest.raises(ConfigError):
        parse_override("=3")
