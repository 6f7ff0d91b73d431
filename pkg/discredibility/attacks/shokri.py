from __future__ import annotations

from typing import Dict, Optional

import numpy as np

from discredibility import AttackContextError
from discredibility.attacks.context import AttackContext
from discredibility.attacks.score_vector import ScoreVector
from discredibility.data import LabeledDataset
from discredibility.tinynn import DenseNet, TrainConfig, forward, train_sgd

VERBOSE_NAME = "Shadow Model Attack"

DESCRIPTION = r"""
A classifier trained on the confidence outputs of shadow models. Every
(shadow, pool sample) pair is one training row: the shadow's confidence vector
sorted in descending order, followed by the one-hot label; the target is
whether the sample was in that shadow's training set. By default one attack
network serves all classes, with ``shokri_per_class`` one network per class is
trained instead. The score is the attack network's member probability on the
victim's confidence vector.
"""


def attack_features(probs: np.ndarray, labels: np.ndarray, n_classes: int) -> np.ndarray:
    onehot = np.zeros((len(labels), n_classes))
    onehot[np.arange(len(labels)), np.asarray(labels)] = 1.0
    return np.hstack([-np.sort(-probs, axis=1), onehot])


def _attack_dataset(features: np.ndarray, targets: np.ndarray) -> LabeledDataset:
    return LabeledDataset(
        samples=np.clip(features, 0.0, 1.0),
        labels=targets.astype(np.int64),
        subpop_ids=np.zeros(len(targets), dtype=np.int64),
        sample_ids=np.arange(len(targets)),
        n_classes=2,
    )


def train_attack_models(context: AttackContext) -> Dict[Optional[int], DenseNet]:
    """
    :return: attack networks keyed by class, or a single one under ``None``
    """
    shadows = context.require_shadows("shokri")
    pool = context.shadow_data
    if pool is None:
        raise AttackContextError("The shokri attack needs the shadow training pool.")
    pool = pool.subset(shadows.pool_ids)
    features, targets, row_labels = [], [], []
    for i, model in enumerate(shadows.models):
        probs = forward(model, pool.samples)[2]
        features.append(attack_features(probs, pool.labels, pool.n_classes))
        targets.append(shadows.membership_mask[i])
        row_labels.append(pool.labels)
    features = np.vstack(features)
    targets = np.concatenate(targets)
    row_labels = np.concatenate(row_labels)

    cfg = TrainConfig(
        learning_rate=0.1,
        decay_factor=1.0,
        decay_epochs=(),
        epochs=context.shokri_epochs,
        batch_size=64,
        seed=context.seed,
    )
    dims = [features.shape[1]] + list(context.shokri_hidden) + [2]
    groups = range(pool.n_classes) if context.shokri_per_class else [None]
    models: Dict[Optional[int], DenseNet] = {}
    for group in groups:
        rows = np.ones(len(targets), dtype=bool) if group is None else row_labels == group
        if not rows.any():
            continue
        net = DenseNet.initialize(dims, seed=context.seed if group is None else context.seed + group + 1)
        models[group], _ = train_sgd(net, _attack_dataset(features[rows], targets[rows]), cfg)
    return models


def attack_models(context: AttackContext) -> Dict[Optional[int], DenseNet]:
    """The attack networks for this context, trained on first use."""
    key = (
        "shokri",
        tuple(context.shokri_hidden),
        context.shokri_epochs,
        context.shokri_per_class,
        context.seed,
        id(context.shadows),
        id(context.shadow_data),
    )
    if key not in context.attack_model_cache:
        context.attack_model_cache[key] = train_attack_models(context)
    return context.attack_model_cache[key]


def calculate_scores(
    context: AttackContext, samples: np.ndarray, labels: np.ndarray, sample_ids: np.ndarray
) -> ScoreVector:
    models = attack_models(context)
    labels = np.asarray(labels)
    probs = forward(context.victim, samples)[2]
    features = attack_features(probs, labels, probs.shape[1])
    scores = np.zeros(len(labels))
    if None in models:
        scores = forward(models[None], features)[2][:, 1]
    else:
        for group, net in models.items():
            rows = labels == group
            if rows.any():
                scores[rows] = forward(net, features[rows])[2][:, 1]
    return ScoreVector("shokri", sample_ids, scores)
