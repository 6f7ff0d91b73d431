from __future__ import annotations

from pathlib import Path
from typing import List, Optional, Union

from discredibility.config import ExperimentConfig


class ProjectPaths:
    def __init__(self, project: Project):
        self.project = project
        self.root = self.project.config.output_dir
        self.root.mkdir(parents=True, exist_ok=True)

        self.data_dir = self.root / "DATA"
        self.dataset_mids = self.data_dir / "dataset.mids"
        self.dataset_csv = self.data_dir / "dataset.csv"
        self.split_json = self.data_dir / "split.json"

        self.model_dir = self.root / "MODELS"
        self.victim_dir = self.model_dir / "VICTIM"
        self.victim_file = self.victim_dir / "victim.tnn"
        self.victim_report = self.victim_dir / "accuracy.toml"
        self.shadow_dir = self.model_dir / "SHADOWS"
        self.shadow_manifest = self.shadow_dir / "ensemble.json"
        self.generator_dir = self.model_dir / "GENERATOR"
        self.generator_file = self.generator_dir / "generator.tnn"
        self.generator_report = self.generator_dir / "reconstruction.toml"
        self.attack_model_dir = self.model_dir / "ATTACK"

        self.score_dir = self.root / "SCORES"
        self.discredit_dir = self.root / "DISCREDIT"
        self.curve_dir = self.root / "CURVES"
        self.hypothesis_dir = self.root / "HYPOTHESES"
        self.audit_dir = self.root / "AUDIT"
        self.doc_dir = self.root / "DOCUMENTATION"
        self.manifest_json = self.doc_dir / "manifest.json"
        self.run_log_toml = self.doc_dir / "run_log.toml"
        self.sample_registry = self.doc_dir / "sample_registry.json"
        self.resolved_config = self.doc_dir / "config_resolved.toml"
        self._initialize_dirs()

    def _initialize_dirs(self):
        all_directories = [
            self.data_dir,
            self.model_dir,
            self.victim_dir,
            self.shadow_dir,
            self.generator_dir,
            self.attack_model_dir,
            self.score_dir,
            self.discredit_dir,
            self.curve_dir,
            self.hypothesis_dir,
            self.audit_dir,
            self.doc_dir,
        ]
        for directory in all_directories:
            if not directory.is_dir():
                directory.mkdir(parents=True)

    def shadow_file(self, index: int) -> Path:
        return self.shadow_dir / f"shadow_{index:03d}.tnn"

    def score_csv(self, attack_id: str, tag: str = "evaluation") -> Path:
        return self.score_dir / f"{attack_id}_{tag}.csv"

    def discredit_mids(self, method: str, tag: Optional[str] = None) -> Path:
        name = f"{method}_{tag}" if tag else method
        return self.discredit_dir / f"{name}.mids"

    def provenance_csv(self, method: str, tag: Optional[str] = None) -> Path:
        name = f"{method}_{tag}" if tag else method
        return self.discredit_dir / f"{name}_provenance.csv"

    def case_toml(self, case_name: str) -> Path:
        return self.audit_dir / f"{case_name}.toml"

    def case_report(self, case_name: str) -> Path:
        return self.audit_dir / f"{case_name}_report.json"


class Project(object):
    """
    Communicator that owns the config, the artifact tree and the components.
    Every subcommand builds one and hands it to the experiment recipes.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.paths = ProjectPaths(self)
        self._initialize_components()
        self.config.dump(self.paths.resolved_config)

    def _initialize_components(self):
        from discredibility.components.storyteller import StoryTeller
        from discredibility.components.sample_db import SampleDataBase
        from discredibility.components.model_zoo import ModelZoo
        from discredibility.components.attack_bench import AttackBench

        # Project acts as a communicator that contains a bunch of components.
        self.storyteller = StoryTeller(project=self)
        self.sample_db = SampleDataBase(project=self)
        self.model_zoo = ModelZoo(project=self)
        self.attack_bench = AttackBench(project=self)

    def print(
        self,
        message: str,
        color: Optional[str] = None,
        line_above: bool = False,
        line_below: bool = False,
        emoji_alias: Optional[Union[str, List[str]]] = None,
    ):
        self.storyteller.printer.print(
            message=message,
            color=color,
            line_above=line_above,
            line_below=line_below,
            emoji_alias=emoji_alias,
        )

    @property
    def n_workers(self) -> int:
        return self.config.run.workers or -1
