from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from discredibility import DatasetFormatError, ShapeError


@dataclass(frozen=True, eq=False)
class ScoreVector:
    """
    Per-sample membership scores of one attack. Higher means "more likely a
    member". ``flagged`` marks samples whose score rests on too little
    evidence (Rezaei probes).
    """

    attack_id: str
    sample_ids: np.ndarray
    scores: np.ndarray
    normalized: bool = False
    flagged: Optional[np.ndarray] = None

    def __post_init__(self):
        ids = np.asarray(self.sample_ids, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=np.float64)
        if ids.shape != scores.shape or scores.ndim != 1:
            raise ShapeError(f"{ids.shape[0]} ids but scores of shape {scores.shape}")
        if not np.all(np.isfinite(scores)):
            raise ShapeError(f"Non-finite {self.attack_id} scores")
        flagged = np.zeros(len(ids), dtype=bool) if self.flagged is None else np.asarray(self.flagged, dtype=bool)
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "flagged", flagged)

    def __len__(self) -> int:
        return len(self.scores)

    def subset(self, ids: Sequence[int]) -> ScoreVector:
        lookup = {int(s): i for i, s in enumerate(self.sample_ids)}
        pos = np.array([lookup[int(i)] for i in ids], dtype=np.int64)
        return ScoreVector(
            self.attack_id, self.sample_ids[pos], self.scores[pos], self.normalized, self.flagged[pos]
        )


def normalize_scores(sv: ScoreVector, reference: ScoreVector) -> ScoreVector:
    """
    Min-max normalisation against the range of ``reference``, clamped to
    ``[0, 1]``. A degenerate reference maps everything to 0.5.
    """
    if len(reference) == 0:
        raise ShapeError("Cannot normalise against an empty reference.")
    lo, hi = reference.scores.min(), reference.scores.max()
    if hi == lo:
        scores = np.full(len(sv), 0.5)
    else:
        scores = np.clip((sv.scores - lo) / (hi - lo), 0.0, 1.0)
    return ScoreVector(sv.attack_id, sv.sample_ids, scores, normalized=True, flagged=sv.flagged)


def write_scores_csv(
    sv: ScoreVector, is_member: np.ndarray, filename: Union[str, Path]
) -> None:
    frame = pd.DataFrame(
        {
            "attack_id": sv.attack_id,
            "sample_id": sv.sample_ids,
            "raw_score": sv.scores,
            "is_member": np.asarray(is_member, dtype=int),
        }
    )
    if sv.flagged.any():
        frame["flagged"] = sv.flagged.astype(int)
    frame.to_csv(filename, index=False, float_format="%.17g")


def read_scores_csv(filename: Union[str, Path]):
    """
    :return: the score vector and the ground-truth membership column
    """
    frame = pd.read_csv(filename)
    missing = {"attack_id", "sample_id", "raw_score", "is_member"} - set(frame.columns)
    if missing:
        raise DatasetFormatError(f"{filename} lacks columns {sorted(missing)}")
    attack_ids = frame["attack_id"].unique()
    if len(attack_ids) > 1:
        raise DatasetFormatError(f"{filename} mixes attacks {list(attack_ids)}")
    flagged = frame["flagged"].to_numpy(dtype=bool) if "flagged" in frame else None
    sv = ScoreVector(
        attack_id=str(attack_ids[0]) if len(attack_ids) else "",
        sample_ids=frame["sample_id"].to_numpy(),
        scores=frame["raw_score"].to_numpy(dtype=np.float64),
        flagged=flagged,
    )
    return sv, frame["is_member"].to_numpy(dtype=bool)
