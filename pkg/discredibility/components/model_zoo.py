from __future__ import annotations

from typing import TYPE_CHECKING, Optional

import toml

from discredibility import AttackContextError, DiscredibilityError
from discredibility.modelzoo import (
    GeneratorModel,
    ShadowEnsemble,
    load_ensemble,
    train_generator,
    train_shadows,
    train_victim,
)
from discredibility.tinynn import DenseNet, load_net, save_net
from .component import Component

if TYPE_CHECKING:
    from discredibility.project import Project


class ModelZoo(Component):
    """
    Trains, stores and hands out the victim, the shadow ensemble and the
    generator. Models are read from disk lazily and cached.
    """

    print_color = "green"
    print_emoji = "brain"

    def __init__(self, project: Project):
        super().__init__(project=project)
        self._victim: Optional[DenseNet] = None
        self._shadows: Optional[ShadowEnsemble] = None
        self._generator: Optional[GeneratorModel] = None

    @property
    def widths(self):
        cfg = self.project.config
        return cfg.model.widths_for(cfg.data.source)

    def train_victim(self) -> DenseNet:
        cfg = self.project.config
        data = self.project.sample_db.dataset
        split = self.project.sample_db.split
        self.print(f"Training victim with hidden widths {self.widths} on {len(split.member_ids)} members")
        net, report = train_victim(data, split, self.widths, cfg.model.train_config(cfg.seed_for("victim")))
        save_net(net, self.project.paths.victim_file)
        with open(self.project.paths.victim_report, "w") as fh:
            toml.dump(report.to_dict(), fh)
        self.print(
            f"Victim train accuracy {report.train_accuracy:.4f}, "
            f"test accuracy {report.test_accuracy:.4f}"
        )
        self._victim = net
        return net

    def train_shadows(self) -> ShadowEnsemble:
        cfg = self.project.config
        pool_ids = self.project.sample_db.shadow_pool_ids
        self.print(
            f"Training {cfg.attack.n_shadows} shadow models on halves of "
            f"{len(pool_ids)} samples",
            emoji_alias=["brain", "busts_in_silhouette"],
        )
        ensemble = train_shadows(
            self.project.sample_db.dataset,
            pool_ids,
            cfg.attack.n_shadows,
            self.widths,
            cfg.model.train_config(cfg.seed_for("shadows")),
            mode="paired",
            n_jobs=self.project.n_workers,
        )
        ensemble.save(
            self.project.paths.shadow_manifest,
            [self.project.paths.shadow_file(i) for i in range(len(ensemble))],
        )
        self._shadows = ensemble
        return ensemble

    def train_generator(self) -> GeneratorModel:
        cfg = self.project.config
        data = self.project.sample_db.dataset
        public = data.subset(self.project.sample_db.split.public_pool_ids)
        self.print(f"Training generator on {len(public)} public samples")
        generator = train_generator(
            public,
            self.victim,
            cfg.model.generator_hidden,
            cfg.model.generator_train_config(cfg.seed_for("generator")),
        )
        save_net(generator.net, self.project.paths.generator_file)
        with open(self.project.paths.generator_report, "w") as fh:
            toml.dump(
                {
                    "final_mse": generator.final_mse,
                    "mse_history": generator.reconstruction_history,
                },
                fh,
            )
        self.print(f"Generator reconstruction MSE {generator.final_mse}")
        self._generator = generator
        return generator

    def train_all(self) -> None:
        attack = self.project.config.attack
        self.train_victim()
        if attack.needs_shadows:
            self.train_shadows()
        if attack.needs_generator or self.project.config.discredit.method == "generate":
            self.train_generator()

    @property
    def victim(self) -> DenseNet:
        if self._victim is None:
            if not self.project.paths.victim_file.exists():
                raise DiscredibilityError("No victim model found. Run train first.")
            self._victim = load_net(self.project.paths.victim_file)
        return self._victim

    @property
    def shadows(self) -> ShadowEnsemble:
        if self._shadows is None:
            if not self.project.paths.shadow_manifest.exists():
                raise AttackContextError("No shadow ensemble found. Run train first.")
            self._shadows = load_ensemble(self.project.paths.shadow_manifest)
        return self._shadows

    @property
    def generator(self) -> GeneratorModel:
        if self._generator is None:
            if not self.project.paths.generator_file.exists():
                raise AttackContextError("No generator found. Run train first.")
            self._generator = GeneratorModel(load_net(self.project.paths.generator_file, output_clamp=True))
        return self._generator

    def has_shadows(self) -> bool:
        return self._shadows is not None or self.project.paths.shadow_manifest.exists()

    def has_generator(self) -> bool:
        return self._generator is not None or self.project.paths.generator_file.exists()
