"""
Population-level views used by the hypothesis experiments and the
domain-shift control.
"""
from __future__ import annotations

import numpy as np
import pandas as pd

from discredibility.data import LabeledDataset
from discredibility.discredit.dataset import ClaimedMemberList, DiscreditingDataset, ProvenanceRecord
from discredibility.discredit.latent import latent_knn
from discredibility.tinynn import DenseNet, encode


def neighbor_census(
    encoder: DenseNet,
    claimed: ClaimedMemberList,
    pool: LabeledDataset,
    n_c: int,
    n_n: int,
    metric: str = "cosine",
) -> pd.DataFrame:
    """
    The ``n_n`` nearest pool samples of each top claimed member without any
    class filter.

    :return: one row per (member, neighbour) with columns ``source_member_id``,
        ``neighbor_id``, ``rank``, ``latent_distance`` and ``same_class``
    """
    top = claimed.top(n_c)
    pool_latent = encode(encoder, pool.samples)
    rows = []
    for source_id, label, latent in zip(top.sample_ids, top.labels, encode(encoder, top.samples)):
        if not np.any(latent):
            continue
        neighbors = latent_knn(encoder, latent, pool, None, n_n, metric, pool_latent)
        labels = pool.labels[pool.positions(neighbors.sample_ids)]
        for rank, (nid, dist, nlabel) in enumerate(zip(neighbors.sample_ids, neighbors.distances, labels)):
            rows.append(
                {
                    "source_member_id": int(source_id),
                    "neighbor_id": int(nid),
                    "rank": rank,
                    "latent_distance": float(dist),
                    "same_class": bool(nlabel == label),
                }
            )
    return pd.DataFrame(rows, columns=["source_member_id", "neighbor_id", "rank", "latent_distance", "same_class"])


def unfiltered_pool(pool: LabeledDataset, contrast: float = 1.0) -> DiscreditingDataset:
    """
    The whole public pool as a discrediting set, without any selection.

    ``contrast < 1`` pulls every feature towards 0.5, a stand-in for data
    drawn from a shifted distribution.
    """
    samples = 0.5 + contrast * (pool.samples - 0.5)
    records = [
        ProvenanceRecord(sample_id=int(i), method="domain_shift", source_member_id=-1, latent_distance=float("nan"))
        for i in pool.sample_ids
    ]
    return DiscreditingDataset(samples, pool.labels, records, pool.n_classes)
