from __future__ import annotations

import numpy as np

from discredibility import AttackContextError
from discredibility.attacks.context import AttackContext
from discredibility.attacks.score_vector import ScoreVector
from discredibility.attacks.yeom import sample_losses

VERBOSE_NAME = "Difficulty Calibrated Loss Attack"

DESCRIPTION = r"""
The victim's loss calibrated by the sample's difficulty. Difficulty is the
mean loss over the shadow models that did not train on the sample:

    score(x) = -loss_victim(x) + mean_OUT loss_shadow(x)

Easy nonmembers, on which every model is confident, score close to zero even
though their raw loss is small.
"""


def calibrated_scores(victim_losses: np.ndarray, shadow_losses: np.ndarray, out_mask: np.ndarray) -> np.ndarray:
    """
    :param shadow_losses: ``(n_models, n_samples)``
    :param out_mask: ``(n_models, n_samples)``, True where the shadow did not
        train on the sample
    """
    n_out = out_mask.sum(axis=0)
    return -victim_losses + (shadow_losses * out_mask).sum(axis=0) / n_out


def calculate_scores(
    context: AttackContext, samples: np.ndarray, labels: np.ndarray, sample_ids: np.ndarray
) -> ScoreVector:
    shadows = context.require_shadows("watson")
    out_mask = ~shadows.in_mask(sample_ids)
    lacking = np.asarray(sample_ids)[out_mask.sum(axis=0) == 0]
    if len(lacking):
        raise AttackContextError(
            f"Samples without any OUT shadow model: {lacking.tolist()[:20]}"
            + (" ..." if len(lacking) > 20 else "")
        )
    shadow_losses = np.stack([sample_losses(m, samples, labels) for m in shadows.models])
    scores = calibrated_scores(sample_losses(context.victim, samples, labels), shadow_losses, out_mask)
    return ScoreVector("watson", sample_ids, scores)
