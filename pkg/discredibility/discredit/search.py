from __future__ import annotations

from typing import Dict, Optional, Tuple

import numpy as np

from discredibility import DiscreditError
from discredibility.data import LabeledDataset
from discredibility.discredit.dataset import ClaimedMemberList, DiscreditingDataset, ProvenanceRecord, assemble
from discredibility.discredit.latent import latent_knn
from discredibility.tinynn import DenseNet, encode


def discredit_search(
    encoder: DenseNet,
    claimed: ClaimedMemberList,
    public_pool: LabeledDataset,
    n_c: int,
    n_n: int,
    metric: str = "cosine",
    member_samples: Optional[np.ndarray] = None,
) -> DiscreditingDataset:
    """
    Collect the ``n_n`` nearest same-class public samples of each of the
    ``n_c`` top claimed members.

    A public sample reached from several members is kept once, attributed to
    the member it is closest to. Output order follows the claim rank of that
    member, then the neighbour rank.
    """
    top = claimed.top(n_c)
    pool_latent = encode(encoder, public_pool.samples)
    member_latent = encode(encoder, top.samples)
    # neighbour id -> (distance, rank of source, neighbour rank, source id)
    best: Dict[int, Tuple[float, int, int, int]] = {}
    for rank, (source_id, label, latent) in enumerate(zip(top.sample_ids, top.labels, member_latent)):
        if not np.any(latent):
            continue
        neighbors = latent_knn(encoder, latent, public_pool, int(label), n_n, metric, pool_latent)
        for j, (nid, dist) in enumerate(zip(neighbors.sample_ids, neighbors.distances)):
            entry = (float(dist), rank, j, int(source_id))
            if int(nid) not in best or entry < best[int(nid)]:
                best[int(nid)] = entry
    if not best:
        raise DiscreditError("Search found no public neighbours for any claimed member.")

    ordered = sorted(best.items(), key=lambda item: (item[1][1], item[1][2], item[0]))
    positions = public_pool.positions([nid for nid, _ in ordered])
    candidates = (
        (
            public_pool.samples[pos],
            int(public_pool.labels[pos]),
            ProvenanceRecord(sample_id=nid, method="search", source_member_id=src, latent_distance=dist),
        )
        for (nid, (dist, _, _, src)), pos in zip(ordered, positions)
    )
    return assemble(candidates, member_samples, public_pool.n_classes)
