"""
Distances, neighbour search and gradient-based matching in the latent space
of a victim encoder.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Set

import numpy as np

from discredibility import DiscredibilityWarning, ShapeError
from discredibility.data import LabeledDataset
from discredibility.tinynn import DenseNet, encode, grad_wrt_input

LATENT_METRICS = ("cosine", "euclidean")


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """
    ``1 - cos(u, v)``, in ``[0, 2]``.

    >>> cosine_distance(np.array([1.0, 0.0]), np.array([0.0, 3.0]))
    1.0
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ShapeError("Cosine distance is undefined for a zero vector.")
    return float(np.clip(1.0 - np.dot(u, v) / (nu * nv), 0.0, 2.0))


def latent_distance(u: np.ndarray, v: np.ndarray, metric: str = "cosine") -> float:
    if metric == "cosine":
        return cosine_distance(u, v)
    if metric == "euclidean":
        return float(np.linalg.norm(np.asarray(u, dtype=np.float64) - np.asarray(v, dtype=np.float64)))
    raise ValueError(f"Unknown latent metric {metric!r}")


def distances_to(query: np.ndarray, pool_latent: np.ndarray, metric: str = "cosine") -> np.ndarray:
    """
    Distance of one query latent to every row of ``pool_latent``.

    Pool rows with a zero latent (every rectifier dead) are treated as
    orthogonal to the query.
    """
    query = np.asarray(query, dtype=np.float64)
    if metric == "euclidean":
        return np.linalg.norm(pool_latent - query, axis=1)
    if metric != "cosine":
        raise ValueError(f"Unknown latent metric {metric!r}")
    q_norm = np.linalg.norm(query)
    if q_norm == 0.0:
        raise ShapeError("Cosine distance is undefined for a zero query latent.")
    norms = np.linalg.norm(pool_latent, axis=1)
    cos = np.zeros(len(pool_latent))
    alive = norms > 0.0
    cos[alive] = pool_latent[alive] @ query / (norms[alive] * q_norm)
    return np.clip(1.0 - cos, 0.0, 2.0)


@dataclass
class Neighbors:
    sample_ids: np.ndarray
    distances: np.ndarray
    short: bool = False

    def __len__(self) -> int:
        return len(self.sample_ids)


def latent_knn(
    encoder: DenseNet,
    query_latent: np.ndarray,
    pool: LabeledDataset,
    label: Optional[int],
    k: int,
    metric: str = "cosine",
    pool_latent: Optional[np.ndarray] = None,
) -> Neighbors:
    """
    The ``k`` pool samples closest to ``query_latent``, ascending by distance
    with ties broken by ascending sample id.

    :param label: only pool samples of this class are considered; ``None``
        searches the whole pool
    :param pool_latent: precomputed ``encode(encoder, pool.samples)``
    """
    if pool_latent is None:
        pool_latent = encode(encoder, pool.samples)
    candidates = np.arange(len(pool)) if label is None else np.flatnonzero(pool.labels == label)
    if len(candidates) == 0:
        raise ShapeError(f"No pool samples of class {label} to search.")
    dist = distances_to(query_latent, pool_latent[candidates], metric)
    ids = pool.sample_ids[candidates]
    order = np.lexsort((ids, dist))[:k]
    short = len(order) < k
    if short:
        warnings.warn(
            f"Only {len(order)} pool samples of class {label} available, {k} requested.",
            DiscredibilityWarning,
        )
    return Neighbors(sample_ids=ids[order], distances=dist[order], short=short)


@dataclass
class PgdResult:
    sample: np.ndarray
    mse_trace: np.ndarray
    best_iteration: int

    @property
    def initial_mse(self) -> float:
        return float(self.mse_trace[0])

    @property
    def final_mse(self) -> float:
        return float(self.mse_trace[self.best_iteration])


def pgd_latent_match(
    encoder: DenseNet,
    target_latent: np.ndarray,
    start: np.ndarray,
    step: float,
    iters: int,
    epsilon: float,
    anchor: Optional[np.ndarray] = None,
    forbidden: Optional[Set[bytes]] = None,
) -> PgdResult:
    """
    Move an input so that its latent approaches ``target_latent``.

    Plain gradient steps on ``||E(x) - z||^2 / dim(z)``; after every step the
    iterate is projected into the l-infinity ball of radius ``epsilon`` around
    ``anchor`` (default: ``start``) and clipped to ``[0, 1]``. The returned
    sample is the iterate with the smallest objective.

    :param forbidden: ``tobytes()`` of inputs the result must not equal
        bitwise; such iterates are never selected
    :return: best iterate and the objective of every iterate, the start
        included at index 0
    """
    if step <= 0.0:
        raise ValueError("PGD step must be positive.")
    x = np.array(start, dtype=np.float64)
    anchor = x.copy() if anchor is None else np.asarray(anchor, dtype=np.float64)
    lower = np.clip(anchor - epsilon, 0.0, 1.0)
    upper = np.clip(anchor + epsilon, 0.0, 1.0)
    forbidden = forbidden or set()

    grad, objective = grad_wrt_input(encoder, x, target_latent)
    trace = [float(objective[0])]
    best, best_it = x.copy(), 0
    best_ok = x.tobytes() not in forbidden
    for it in range(1, iters + 1):
        x = np.clip(x - step * grad, lower, upper)
        grad, objective = grad_wrt_input(encoder, x, target_latent)
        trace.append(float(objective[0]))
        if x.tobytes() in forbidden:
            continue
        if not best_ok or trace[-1] < trace[best_it]:
            best, best_it, best_ok = x.copy(), it, True
    return PgdResult(sample=best, mse_trace=np.array(trace), best_iteration=best_it)
