"""
Gap attack: a sample is called a member iff the victim classifies it
correctly.
"""
from __future__ import annotations

import numpy as np

from discredibility.attacks.context import AttackContext
from discredibility.attacks.score_vector import ScoreVector
from discredibility.tinynn import predict

VERBOSE_NAME = "Gap Attack"

DESCRIPTION = r"""
Baseline attack exploiting only the generalization gap. The score is 1 when
``argmax Y(x)`` equals the label and 0 otherwise, so its balanced accuracy on
members versus nonmembers is ``(train_acc + 1 - test_acc) / 2``.
"""


def calculate_scores(
    context: AttackContext, samples: np.ndarray, labels: np.ndarray, sample_ids: np.ndarray
) -> ScoreVector:
    correct = predict(context.victim, samples) == np.asarray(labels)
    return ScoreVector("gap", sample_ids, correct.astype(np.float64))
