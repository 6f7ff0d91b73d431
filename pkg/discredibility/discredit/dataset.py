from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
import pandas as pd

from discredibility import DiscreditError, ShapeError
from discredibility.data import LabeledDataset, save_mids

METHODS = ("search", "generate", "adversarial", "domain_shift")


@dataclass(frozen=True, eq=False)
class ClaimedMemberList:
    """
    The auditor's claim: samples with their raw scores, highest score first.
    Ties are ordered by ascending sample id.
    """

    attack_id: str
    sample_ids: np.ndarray
    scores: np.ndarray
    labels: np.ndarray
    samples: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.sample_ids, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if not (len(ids) == len(scores) == len(labels) == len(samples)):
            raise ShapeError("Claimed member fields differ in length.")
        if len(np.unique(ids)) != len(ids):
            raise ShapeError("Claimed member ids are not unique.")
        order = np.lexsort((ids, -scores))
        object.__setattr__(self, "sample_ids", ids[order])
        object.__setattr__(self, "scores", scores[order])
        object.__setattr__(self, "labels", labels[order])
        object.__setattr__(self, "samples", samples[order])

    def __len__(self) -> int:
        return len(self.sample_ids)

    @classmethod
    def from_scores(cls, attack_id: str, scores: np.ndarray, data: LabeledDataset, n_c: int) -> ClaimedMemberList:
        """The ``n_c`` top-scored samples of ``data``; ``scores`` follows ``data``'s row order."""
        if n_c > len(data):
            raise ShapeError(f"Cannot claim {n_c} members out of {len(data)} candidates.")
        scores = np.asarray(scores, dtype=np.float64)
        top = np.lexsort((data.sample_ids, -scores))[:n_c]
        return cls(attack_id, data.sample_ids[top], scores[top], data.labels[top], data.samples[top])

    def top(self, n: int) -> ClaimedMemberList:
        return ClaimedMemberList(
            self.attack_id, self.sample_ids[:n], self.scores[:n], self.labels[:n], self.samples[:n]
        )

    @property
    def threshold(self) -> float:
        """Lowest claimed score; the auditor calls everything at or above it a member."""
        return float(self.scores[-1])


@dataclass(frozen=True)
class ProvenanceRecord:
    sample_id: int
    method: str
    source_member_id: int
    latent_distance: float
    initial_mse: float = float("nan")
    final_mse: float = float("nan")
    seed: int = -1


@dataclass(eq=False)
class DiscreditingDataset:
    samples: np.ndarray
    labels: np.ndarray
    provenance: List[ProvenanceRecord]
    n_classes: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(len(self.provenance), -1)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.labels) != len(self.provenance):
            raise ShapeError("Every discrediting sample needs a label and a provenance record.")

    def __len__(self) -> int:
        return len(self.provenance)

    @property
    def sample_ids(self) -> np.ndarray:
        return np.array([p.sample_id for p in self.provenance], dtype=np.int64)

    def with_sample_ids(self, ids: Sequence[int]) -> DiscreditingDataset:
        if len(ids) != len(self):
            raise ShapeError(f"{len(ids)} ids for {len(self)} discrediting samples")
        records = [
            ProvenanceRecord(**{**asdict(p), "sample_id": int(i)}) for p, i in zip(self.provenance, ids)
        ]
        return DiscreditingDataset(self.samples, self.labels, records, self.n_classes)

    def as_labeled(self) -> LabeledDataset:
        return LabeledDataset(
            samples=self.samples,
            labels=self.labels,
            subpop_ids=np.full(len(self), -1, dtype=np.int64),
            sample_ids=self.sample_ids,
            n_classes=self.n_classes,
        )

    def provenance_frame(self) -> pd.DataFrame:
        columns = ["sample_id", "method", "source_member_id", "latent_distance", "initial_mse", "final_mse", "seed"]
        return pd.DataFrame([asdict(p) for p in self.provenance], columns=columns)

    def save(self, mids_file: Union[str, Path], provenance_csv: Union[str, Path]) -> None:
        save_mids(self.as_labeled(), mids_file)
        self.provenance_frame().to_csv(provenance_csv, index=False, float_format="%.17g")


def member_fingerprints(members: np.ndarray) -> Set[bytes]:
    return {np.ascontiguousarray(row, dtype=np.float64).tobytes() for row in np.atleast_2d(members)}


def assemble(
    candidates: Iterable[Tuple[np.ndarray, int, ProvenanceRecord]],
    member_samples: Optional[np.ndarray],
    n_classes: int,
) -> DiscreditingDataset:
    """
    Build a discrediting set from ``(sample, label, provenance)`` candidates in
    the given order, dropping bitwise duplicates (first occurrence wins) and
    anything bitwise equal to a member sample.
    """
    forbidden = member_fingerprints(member_samples) if member_samples is not None and len(member_samples) else set()
    seen: Set[bytes] = set()
    samples, labels, records = [], [], []
    for sample, label, record in candidates:
        key = np.ascontiguousarray(sample, dtype=np.float64).tobytes()
        if key in seen or key in forbidden:
            continue
        seen.add(key)
        samples.append(sample)
        labels.append(label)
        records.append(record)
    if not records:
        raise DiscreditError("The discrediting set is empty.")
    return DiscreditingDataset(np.array(samples), np.array(labels), records, n_classes)
