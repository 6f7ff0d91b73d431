from __future__ import annotations

import importlib
from typing import Dict

import numpy as np

from discredibility.attacks.context import AttackContext
from discredibility.attacks.score_vector import ScoreVector
from discredibility.data import LabeledDataset
from discredibility.metrics import LOW_FPR_BANDS, roc, tpr_at_fpr_range


def score_attack(attack_id: str, context: AttackContext, data: LabeledDataset) -> ScoreVector:
    """
    Computes raw membership scores of one attack on a dataset.

    :param attack_id: One of gap, shokri, yeom, watson, carlini, rezaei
    :type attack_id: str
    :param context: victim and whatever else the attack needs
    :type context: AttackContext
    :param data: samples to score; their ids key the shadow IN/OUT lookup
    :type data: LabeledDataset
    """
    if attack_id == "gap":
        from discredibility.attacks.gap import calculate_scores as fct
    elif attack_id == "yeom":
        from discredibility.attacks.yeom import calculate_scores as fct
    elif attack_id == "shokri":
        from discredibility.attacks.shokri import calculate_scores as fct
    elif attack_id == "watson":
        from discredibility.attacks.watson import calculate_scores as fct
    elif attack_id == "carlini":
        from discredibility.attacks.carlini import calculate_scores as fct
    elif attack_id == "rezaei":
        from discredibility.attacks.rezaei import calculate_scores as fct
    else:
        raise ValueError(f"Unknown attack {attack_id!r}")
    return fct(context, data.samples, data.labels, data.sample_ids)


def verbose_name(attack_id: str) -> str:
    return importlib.import_module(f"discredibility.attacks.{attack_id}").VERBOSE_NAME


def summarize(sv: ScoreVector, is_member: np.ndarray) -> Dict:
    """AUC and TPR in both low-FPR reporting bands."""
    curve = roc(sv.scores, is_member)
    return {
        "attack_id": sv.attack_id,
        "name": verbose_name(sv.attack_id),
        "auc": curve.auc,
        "n_members": curve.n_members,
        "n_nonmembers": curve.n_nonmembers,
        "tpr_at_fpr": [tpr_at_fpr_range(curve, band).to_dict() for band in LOW_FPR_BANDS],
        "n_flagged": int(sv.flagged.sum()),
    }
