import json

import pytest
import toml

from discredibility.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, SUBCOMMANDS, build_parser, main, run
from discredibility.config import OUTPUT_ROOT_ENV, ExperimentConfig, load_config

TINY_CONFIG = {
    "data": {
        "classes": 2,
        "subpops_per_class": 2,
        "dim": 8,
        "samples_per_subpop": 40,
        "label_noise": 0.1,
    },
    "model": {
        "hidden_widths": [8],
        "decay_epochs": [20],
        "epochs": 30,
        "batch_size": 16,
        "generator_hidden": [8],
        "generator_epochs": 20,
        "generator_batch_size": 16,
    },
    "attack": {"attacks": ["gap", "yeom", "watson", "carlini"], "n_shadows": 4},
    "discredit": {
        "n_c": 5,
        "n_n": 3,
        "nc_sweep": [2, 4],
        "nn_sweep": [1, 2],
        "noise_mix": [0.1, 0.5],
        "hypothesis_members": 8,
    },
    "run": {"workers": 1, "quiet": True},
}


@pytest.fixture
def output_root(monkeypatch, tmp_path):
    root = tmp_path / "out"
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(root))
    return root


@pytest.fixture
def tiny_config(tmp_path):
    config_file = tmp_path / "tiny.toml"
    with open(config_file, "w") as fh:
        toml.dump(TINY_CONFIG, fh)
    return config_file


def test_parser_knows_every_subcommand():
    parser = build_parser()
    args = parser.parse_args(["attack", "attack.n_shadows=4", "--workers", "2", "--plots"])
    assert args.subcommand == "attack" and args.overrides == ["attack.n_shadows=4"]
    assert args.workers == 2 and args.plots
    assert set(SUBCOMMANDS) >= {"gen-data", "train", "attack", "discredit", "fprfpr", "audit"}
    with pytest.raises(SystemExit):
        parser.parse_args(["explode"])


def test_init_writes_the_template(tmp_path, output_root):
    config_file = tmp_path / "experiment.toml"
    assert run("init", str(config_file)) == EXIT_OK
    assert load_config(config_file).discredit == ExperimentConfig().discredit
    config_file.write_text("[attack]\nn_shadows = 4\n")
    assert run("init", str(config_file)) == EXIT_OK
    assert "n_shadows = 4" in config_file.read_text()


def test_missing_config_is_created_and_nothing_runs(tmp_path, output_root):
    config_file = tmp_path / "experiment.toml"
    assert run("train", str(config_file)) == EXIT_OK
    assert config_file.exists()
    assert not output_root.exists()


def test_bad_override_exits_with_config_status(tiny_config, output_root):
    assert run("gen-data", str(tiny_config), ["attack.n_shadows=1"]) == EXIT_CONFIG
    error = json.loads((output_root / "error.json").read_text())
    assert error["error"] == "ConfigError"
    assert error["subcommand"] == "gen-data"


def test_runtime_failures_exit_with_runtime_status(tiny_config, output_root):
    assert run("train", str(tiny_config)) == EXIT_RUNTIME
    error = json.loads((output_root / "error.json").read_text())
    assert error["error"] == "DiscredibilityError"
    log = toml.load(output_root / "DOCUMENTATION" / "run_log.toml")
    assert log["runs"][-1]["status"] == "failed"


def test_main_exits_with_the_run_status(tmp_path, output_root):
    with pytest.raises(SystemExit) as exit_info:
        main(["init", "--config", str(tmp_path / "new.toml"), "--quiet"])
    assert exit_info.value.code == EXIT_OK


def _run_everything(config_file, monkeypatch, root):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(root))
    for subcommand in SUBCOMMANDS[1:]:
        assert run(subcommand, str(config_file)) == EXIT_OK, subcommand
    return json.loads((root / "DOCUMENTATION" / "manifest.json").read_text())


@pytest.mark.slow
def test_full_pipeline_is_reproducible(tiny_config, monkeypatch, tmp_path):
    first = _run_everything(tiny_config, monkeypatch, tmp_path / "first")
    second = _run_everything(tiny_config, monkeypatch, tmp_path / "second")
    assert first == second
    reproduced = {entry["reproduces"] for entry in first.values()}
    assert {"table1", "table3", "table4", "figure2", "figure5", "figure14", "section3"} <= reproduced
    for relative in first:
        a = (tmp_path / "first" / relative).read_bytes()
        b = (tmp_path / "second" / relative).read_bytes()
        assert a == b, relative

    summary = json.loads((tmp_path / "first" / "SCORES" / "summary.json").read_text())
    assert set(summary) == {"gap", "yeom", "watson", "carlini"}
    case = json.loads((tmp_path / "first" / "AUDIT" / "watson_search_report.json").read_text())
    assert case["state"] in ("Rejected", "Adjudicated")
