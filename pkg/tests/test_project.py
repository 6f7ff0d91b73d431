import io
import json

import emoji
import numpy as np
import pytest
from colorama import Fore

from discredibility import DiscredibilityError, DiscredibilityWarning
from discredibility.components.storyteller import RULE, PrettyPrinter, emoji_prefix
from discredibility.config import OUTPUT_ROOT_ENV, load_config
from discredibility.project import Project


@pytest.fixture
def project(monkeypatch, tmp_path):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "out"))
    config = load_config(
        None,
        ["data.subpops_per_class=2", "data.samples_per_subpop=20", "data.dim=4", "run.quiet=true"],
    )
    return Project(config)


def test_artifact_tree_is_created(project):
    paths = project.paths
    for directory in (paths.data_dir, paths.score_dir, paths.audit_dir, paths.doc_dir):
        assert directory.is_dir()
    assert paths.resolved_config.exists()


def test_stages_need_their_inputs(project):
    with pytest.raises(DiscredibilityError):
        project.sample_db.dataset
    with pytest.raises(DiscredibilityError):
        project.model_zoo.victim


def test_split_registry(project):
    data = project.sample_db.create()
    split = project.sample_db.split
    assert len(data) == 80
    assert project.sample_db.is_member(split.member_ids).all()
    assert not project.sample_db.is_member(split.public_pool_ids).any()
    # a fresh project reads everything back from disk
    again = Project(project.config)
    np.testing.assert_array_equal(again.sample_db.split.member_ids, split.member_ids)
    np.testing.assert_array_equal(again.sample_db.dataset.samples, data.samples)


def test_crafted_ids_are_stable_across_reruns(project):
    project.sample_db.create()
    first = project.sample_db.reserve_ids(5, "adversarial_yeom")
    other = project.sample_db.reserve_ids(3, "generate_yeom")
    assert first.min() >= 80 and not set(first) & set(other)
    np.testing.assert_array_equal(project.sample_db.reserve_ids(4, "adversarial_yeom"), first[:4])
    # outgrowing the old block moves the tag to a new one
    grown = project.sample_db.reserve_ids(6, "adversarial_yeom")
    assert grown.min() > other.max()
    registry = json.loads(project.paths.sample_registry.read_text())
    assert registry["split_of"][str(int(grown[0]))] == "crafted:adversarial_yeom"
    assert str(int(first[0])) not in registry["split_of"]
    reloaded = Project(project.config)
    np.testing.assert_array_equal(reloaded.sample_db.reserve_ids(6, "adversarial_yeom"), grown)


def test_manifest_holds_relative_paths(project):
    project.sample_db.create()
    project.storyteller.record_artifact(project.paths.split_json, "gen-data", "setup")
    manifest = json.loads(project.paths.manifest_json.read_text())
    assert manifest == {"DATA/split.json": {"subcommand": "gen-data", "reproduces": "setup"}}


def test_second_emitter_is_reported(project):
    project.sample_db.create()
    project.storyteller.record_artifact(project.paths.split_json, "gen-data", "setup")
    with pytest.warns(DiscredibilityWarning):
        project.storyteller.record_artifact(project.paths.split_json, "train", "setup")


def test_printer_lines():
    out = io.StringIO()
    printer = PrettyPrinter(stream=out)
    printer.print("training", emoji_alias=["rocket", "tada"], color="Green", line_below=True)
    rocket = emoji.emojize(":rocket:", language="alias")
    tada = emoji.emojize(":tada:", language="alias")
    assert out.getvalue() == f"{Fore.GREEN} {rocket} {tada} | training{RULE}\n"
    # the color sticks until another one is asked for
    assert printer.format("next", line_above=True).startswith(f"{Fore.GREEN} {RULE}next")
    assert emoji_prefix(":rocket:") == emoji_prefix("rocket") == f"{rocket} | "
    assert emoji_prefix(None) == ""
    with pytest.raises(ValueError):
        printer.set_color("mauve")


def test_quiet_printer_writes_nothing(capsys):
    out = io.StringIO()
    PrettyPrinter(quiet=True, stream=out).print("hidden", color="red")
    PrettyPrinter(quiet=True).print("hidden")
    assert out.getvalue() == ""
    assert capsys.readouterr().out == ""
