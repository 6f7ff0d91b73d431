from __future__ import annotations

import numpy as np

from discredibility.attacks.context import AttackContext
from discredibility.attacks.score_vector import ScoreVector
from discredibility.tinynn import cross_entropy, forward

VERBOSE_NAME = "Loss Threshold Attack"

DESCRIPTION = r"""
The negated cross-entropy of the victim on the sample. Members were fit
during training and tend to have a lower loss.
"""


def sample_losses(net, samples: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return cross_entropy(forward(net, samples)[2], labels)


def calculate_scores(
    context: AttackContext, samples: np.ndarray, labels: np.ndarray, sample_ids: np.ndarray
) -> ScoreVector:
    return ScoreVector("yeom", sample_ids, -sample_losses(context.victim, samples, labels))
