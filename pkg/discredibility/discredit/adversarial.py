from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np

from discredibility.data import LabeledDataset
from discredibility.discredit.dataset import (
    ClaimedMemberList,
    DiscreditingDataset,
    ProvenanceRecord,
    assemble,
    member_fingerprints,
)
from discredibility.discredit.latent import latent_distance, latent_knn, pgd_latent_match
from discredibility.tinynn import DenseNet, encode


def discredit_adversarial(
    encoder: DenseNet,
    claimed: ClaimedMemberList,
    nonmember_pool: LabeledDataset,
    n_c: int,
    n_n: int,
    step: float,
    iters: int,
    epsilon: float,
    metric: str = "cosine",
    member_samples: Optional[np.ndarray] = None,
) -> DiscreditingDataset:
    """
    Perturb nonmembers so that their latents approach those of the claimed
    members.

    Starting points for a member are its ``n_n`` nearest same-class
    nonmembers in latent space. Each start is moved by
    :func:`pgd_latent_match` within an l-infinity ball of radius ``epsilon``
    around itself. Iterates bitwise equal to a member are never returned.
    Crafted samples carry provisional ids ``0, 1, ...``.
    """
    top = claimed.top(n_c)
    pool_latent = encode(encoder, nonmember_pool.samples)
    member_latent = encode(encoder, top.samples)
    forbidden = member_fingerprints(member_samples if member_samples is not None else top.samples)
    candidates: List[Tuple[np.ndarray, int, ProvenanceRecord]] = []
    for source_id, label, latent in zip(top.sample_ids, top.labels, member_latent):
        if not np.any(latent):
            continue
        starts = latent_knn(encoder, latent, nonmember_pool, int(label), n_n, metric, pool_latent)
        for start_id in starts.sample_ids:
            start = nonmember_pool.samples[nonmember_pool.positions([start_id])[0]]
            result = pgd_latent_match(encoder, latent, start, step, iters, epsilon, anchor=start, forbidden=forbidden)
            z = encode(encoder, result.sample)[0]
            record = ProvenanceRecord(
                sample_id=len(candidates),
                method="adversarial",
                source_member_id=int(source_id),
                latent_distance=latent_distance(latent, z, metric) if np.any(z) else float("nan"),
                initial_mse=result.initial_mse,
                final_mse=result.final_mse,
            )
            candidates.append((result.sample, int(label), record))
    dataset = assemble(candidates, member_samples, nonmember_pool.n_classes)
    return dataset.with_sample_ids(np.arange(len(dataset)))
