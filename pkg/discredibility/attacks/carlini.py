"""
Likelihood ratio attack on the logit-scaled confidence of the true class.
"""
from __future__ import annotations

import warnings
from typing import Tuple

import numpy as np
from scipy.stats import norm

from discredibility import AttackContextError, DiscredibilityWarning
from discredibility.attacks.context import AttackContext
from discredibility.attacks.score_vector import ScoreVector
from discredibility.tinynn import forward

VERBOSE_NAME = "Likelihood Ratio Attack"

DESCRIPTION = r"""
For every sample the confidence on the true class is mapped through
``phi(p) = log(p / (1 - p))``. Gaussians are fitted per sample to the values of
the shadows that trained on it (IN) and of those that did not (OUT).

* online:  ``log N(phi_v; mu_in, sd_in) - log N(phi_v; mu_out, sd_out)``
* offline: ``-log(1 - Phi((phi_v - mu_out) / sd_out))``, the one sided tail
  against the OUT population only.

The OUT fit needs two OUT shadows per sample. In the online variant a sample
with fewer than two IN shadows, such as one from the public pool that no
shadow trained on, keeps its offline score.
"""

P_CLIP = 1e-9
SIGMA_FLOOR = 1e-3


def logit_confidence(net, samples: np.ndarray, labels: np.ndarray) -> np.ndarray:
    probs = forward(net, samples)[2]
    p = np.clip(probs[np.arange(len(labels)), np.asarray(labels)], P_CLIP, 1.0 - P_CLIP)
    return np.log(p) - np.log1p(-p)


def fit_gaussians(phi: np.ndarray, mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-column mean and floored standard deviation over the rows where
    ``mask`` is True.
    """
    count = mask.sum(axis=0)
    mean = (phi * mask).sum(axis=0) / count
    var = (((phi - mean) ** 2) * mask).sum(axis=0) / count
    return mean, np.maximum(np.sqrt(var), SIGMA_FLOOR)


def online_score(phi_victim, mu_in, sd_in, mu_out, sd_out) -> np.ndarray:
    """
    >>> round(float(online_score(2.0, 2.0, 1.0, 0.0, 1.0)), 12)
    2.0
    """
    return norm.logpdf(phi_victim, mu_in, sd_in) - norm.logpdf(phi_victim, mu_out, sd_out)


def offline_score(phi_victim, mu_out, sd_out) -> np.ndarray:
    return -norm.logsf(phi_victim, mu_out, sd_out)


def calculate_scores(
    context: AttackContext, samples: np.ndarray, labels: np.ndarray, sample_ids: np.ndarray
) -> ScoreVector:
    shadows = context.require_shadows("carlini")
    in_mask = shadows.in_mask(sample_ids)
    out_mask = ~in_mask
    lacking = np.asarray(sample_ids)[out_mask.sum(axis=0) < 2]
    if len(lacking):
        raise AttackContextError(
            f"The likelihood ratio attack needs two OUT shadows per sample; "
            f"{len(lacking)} samples have fewer, e.g. {lacking.tolist()[:10]}"
        )

    phi = np.stack([logit_confidence(m, samples, labels) for m in shadows.models])
    phi_victim = logit_confidence(context.victim, samples, labels)
    mu_out, sd_out = fit_gaussians(phi, out_mask)
    scores = np.asarray(offline_score(phi_victim, mu_out, sd_out), dtype=np.float64)
    if context.carlini_variant == "online":
        covered = in_mask.sum(axis=0) >= 2
        if covered.any():
            mu_in, sd_in = fit_gaussians(phi[:, covered], in_mask[:, covered])
            scores[covered] = online_score(
                phi_victim[covered], mu_in, sd_in, mu_out[covered], sd_out[covered]
            )
        if not covered.all():
            warnings.warn(
                f"{int((~covered).sum())} samples have fewer than two IN shadows "
                f"and were scored offline.",
                DiscredibilityWarning,
            )
    return ScoreVector("carlini", sample_ids, scores)
