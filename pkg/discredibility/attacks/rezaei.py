from __future__ import annotations

import warnings

import numpy as np

from discredibility import DiscredibilityWarning
from discredibility.attacks.context import AttackContext
from discredibility.attacks.score_vector import ScoreVector
from discredibility.attacks.yeom import sample_losses
from discredibility.discredit.latent import latent_knn
from discredibility.tinynn import encode, predict

VERBOSE_NAME = "Subpopulation Comparison Attack"

DESCRIPTION = r"""
Compares the victim's loss on a sample with its loss on the sample's
subpopulation: ``score = mean probe loss - sample loss``. Probes come either
from the generator, ``G(E(x) + eps)`` with ``eps ~ N(0, sigma^2)`` and only
probes the victim assigns to the sample's label kept, or from the public pool,
as the nearest same-class samples in latent cosine distance, the sample
itself excluded. Scores built on
fewer than ``rezaei_min_probes`` probes are flagged.
"""


def _probe_stream(seed: int, sample_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, int(sample_id)])


def generator_probes(
    context: AttackContext, sample: np.ndarray, label: int, sample_id: int, sigma: float
) -> np.ndarray:
    generator = context.require_generator("rezaei")
    latent = encode(context.victim, sample)[0]
    eps = _probe_stream(context.seed, sample_id).normal(
        0.0, sigma, size=(context.rezaei_probes, latent.size)
    )
    probes = generator.generate(latent + eps)
    return probes[predict(context.victim, probes) == label]


def pool_probes(
    context: AttackContext, sample: np.ndarray, label: int, sample_id: int, pool_latent: np.ndarray
) -> np.ndarray:
    """Nearest same-class pool samples, never the sample itself."""
    pool = context.require_pool("rezaei")
    latent = encode(context.victim, sample)[0]
    if not np.any(latent):
        return np.empty((0, pool.dim))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DiscredibilityWarning)
        neighbors = latent_knn(
            context.victim, latent, pool, label, context.rezaei_probes + 1, pool_latent=pool_latent
        )
    ids = neighbors.sample_ids[neighbors.sample_ids != sample_id][: context.rezaei_probes]
    return pool.samples[pool.positions(ids)]


def calculate_scores(
    context: AttackContext, samples: np.ndarray, labels: np.ndarray, sample_ids: np.ndarray
) -> ScoreVector:
    labels = np.asarray(labels)
    own_losses = sample_losses(context.victim, samples, labels)
    use_generator = context.rezaei_neighbor_source == "generator"
    if use_generator:
        context.require_generator("rezaei")
        sigma = context.rezaei_sigma_factor * context.latent_scale()
    else:
        pool = context.require_pool("rezaei")
        pool_latent = encode(context.victim, pool.samples)

    scores = np.zeros(len(labels))
    flagged = np.zeros(len(labels), dtype=bool)
    for i, (sample, label, sample_id) in enumerate(zip(samples, labels, sample_ids)):
        if use_generator:
            probes = generator_probes(context, sample, int(label), int(sample_id), sigma)
        else:
            probes = pool_probes(context, sample, int(label), int(sample_id), pool_latent)
        flagged[i] = len(probes) < context.rezaei_min_probes
        if len(probes) == 0:
            continue
        probe_losses = sample_losses(context.victim, probes, np.full(len(probes), label))
        scores[i] = probe_losses.mean() - own_losses[i]
    if flagged.any():
        warnings.warn(
            f"{int(flagged.sum())} of {len(labels)} samples have fewer than "
            f"{context.rezaei_min_probes} valid probes; their scores are flagged "
            f"(samples with no probe at all score 0).",
            DiscredibilityWarning,
        )
    return ScoreVector("rezaei", sample_ids, scores, flagged=flagged)
