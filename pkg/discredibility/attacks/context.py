from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from discredibility import AttackContextError
from discredibility.data import LabeledDataset
from discredibility.modelzoo import GeneratorModel, ShadowEnsemble
from discredibility.tinynn import DenseNet, encode


@dataclass
class AttackContext:
    """
    Everything an attack may look at besides the samples it scores.

    ``neighbor_pool`` is the public pool: Rezaei's pool mode searches it and
    its latent norms set the scale of the generator probes.

    ``attack_model_cache`` holds models an attack trains for itself, keyed by
    the settings they were trained with. Copies made from ``__dict__`` share it.
    """

    victim: DenseNet
    shadows: Optional[ShadowEnsemble] = None
    generator: Optional[GeneratorModel] = None
    neighbor_pool: Optional[LabeledDataset] = None
    shadow_data: Optional[LabeledDataset] = None
    carlini_variant: str = "offline"
    shokri_hidden: tuple = (64,)
    shokri_epochs: int = 40
    shokri_per_class: bool = False
    rezaei_neighbor_source: str = "generator"
    rezaei_probes: int = 16
    rezaei_min_probes: int = 4
    rezaei_sigma_factor: float = 0.1
    seed: int = 0
    attack_model_cache: Dict[tuple, object] = field(default_factory=dict, repr=False, compare=False)

    def require_shadows(self, attack_id: str) -> ShadowEnsemble:
        if self.shadows is None:
            raise AttackContextError(f"The {attack_id} attack needs a shadow ensemble.")
        return self.shadows

    def require_generator(self, attack_id: str) -> GeneratorModel:
        if self.generator is None:
            raise AttackContextError(f"The {attack_id} attack needs a generator.")
        return self.generator

    def require_pool(self, attack_id: str) -> LabeledDataset:
        if self.neighbor_pool is None or len(self.neighbor_pool) == 0:
            raise AttackContextError(f"The {attack_id} attack needs a neighbour pool.")
        return self.neighbor_pool

    def latent_scale(self) -> float:
        """Median latent norm of the neighbour pool under the victim encoder."""
        pool = self.require_pool("rezaei")
        return float(np.median(np.linalg.norm(encode(self.victim, pool.samples), axis=1)))
