from __future__ import annotations

import warnings
from typing import List, Optional, Tuple

import numpy as np

from discredibility import DiscredibilityWarning
from discredibility.discredit.dataset import ClaimedMemberList, DiscreditingDataset, ProvenanceRecord, assemble
from discredibility.discredit.latent import latent_distance
from discredibility.modelzoo import GeneratorModel
from discredibility.tinynn import DenseNet, encode, predict


def probe_seed(seed: int, source_id: int, index: int) -> int:
    """Seed of the noise draw for one generated sample, recorded in its provenance."""
    return int(np.random.SeedSequence([seed, int(source_id), index]).generate_state(1)[0])


def member_noise_scale(encoder: DenseNet, member_samples: np.ndarray, factor: float) -> float:
    """``factor`` times the median latent norm of the members."""
    return factor * float(np.median(np.linalg.norm(encode(encoder, member_samples), axis=1)))


def discredit_generate(
    victim: DenseNet,
    generator: GeneratorModel,
    claimed: ClaimedMemberList,
    n_c: int,
    n_n: int,
    sigma: float,
    seed: int = 0,
    metric: str = "cosine",
    member_samples: Optional[np.ndarray] = None,
    n_classes: Optional[int] = None,
) -> DiscreditingDataset:
    """
    Decode ``n_n`` noisy copies ``G(E(x) + eps)`` of each of the ``n_c`` top
    claimed members, ``eps ~ N(0, sigma^2 I)``, and keep those the victim
    assigns to the member's label.

    The victim is its own encoder. Crafted samples carry provisional ids
    ``0, 1, ...``; callers renumber them.
    """
    top = claimed.top(n_c)
    member_latent = encode(victim, top.samples)
    candidates: List[Tuple[np.ndarray, int, ProvenanceRecord]] = []
    for source_id, label, latent in zip(top.sample_ids, top.labels, member_latent):
        seeds = [probe_seed(seed, source_id, j) for j in range(n_n)]
        eps = np.stack([np.random.default_rng(s).normal(0.0, sigma, size=latent.size) for s in seeds])
        probes = generator.generate(latent + eps)
        accepted = np.flatnonzero(predict(victim, probes) == label)
        if len(accepted) == 0:
            warnings.warn(
                f"No generated sample of member {int(source_id)} kept its label; member skipped.",
                DiscredibilityWarning,
            )
            continue
        probe_latent = encode(victim, probes[accepted])
        for j, z in zip(accepted, probe_latent):
            distance = latent_distance(latent, z, metric) if np.any(z) and np.any(latent) else float("nan")
            record = ProvenanceRecord(
                sample_id=len(candidates),
                method="generate",
                source_member_id=int(source_id),
                latent_distance=distance,
                seed=seeds[j],
            )
            candidates.append((probes[j], int(label), record))
    dataset = assemble(candidates, member_samples, n_classes or victim.n_outputs)
    return dataset.with_sample_ids(np.arange(len(dataset)))
