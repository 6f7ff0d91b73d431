"""
Threshold-swept evaluation of membership scores.

Every rate uses the ``score >= threshold`` convention on raw scores.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.metrics import auc as trapezoid_auc
from sklearn.metrics import roc_curve

from discredibility import DiscredibilityError, ShapeError

LOW_FPR_BANDS: Tuple[Tuple[float, float], ...] = ((0.0001, 0.0003), (0.01, 0.03))


@dataclass
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    n_members: int = 0
    n_nonmembers: int = 0


@dataclass
class FprFprCurve:
    thresholds: np.ndarray
    fpr_auditor: np.ndarray
    fpr_discredit: np.ndarray
    n_auditor: int = 0
    n_discredit: int = 0


@dataclass
class RatioReport:
    threshold: float
    auditor_min_fpr: float
    discredit_fpr: float
    ratio: float

    def to_dict(self) -> Dict[str, Union[float, bool, None]]:
        """
        Strict-JSON form. An unbounded ratio, a discrediting FPR over an
        auditor FPR of zero, is written as ``null`` with ``ratio_unbounded``
        set.
        """
        out: Dict[str, Union[float, bool, None]] = asdict(self)
        out["ratio_unbounded"] = math.isinf(self.ratio)
        if out["ratio_unbounded"]:
            out["ratio"] = None
        return out

    @classmethod
    def from_dict(cls, d: Dict) -> RatioReport:
        ratio = math.inf if d.get("ratio_unbounded") else float(d["ratio"])
        return cls(
            threshold=float(d["threshold"]),
            auditor_min_fpr=float(d["auditor_min_fpr"]),
            discredit_fpr=float(d["discredit_fpr"]),
            ratio=ratio,
        )


def ratio_text(ratio: Optional[float]) -> str:
    return "unbounded" if ratio is None or math.isinf(ratio) else f"{ratio:.4g}"


@dataclass
class BandResult:
    band: Tuple[float, float]
    attainable: bool
    tpr: Optional[float] = None
    fpr: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            "band": list(self.band),
            "attainable": self.attainable,
            "tpr": self.tpr,
            "fpr": self.fpr,
        }


def roc(scores: np.ndarray, is_member: np.ndarray) -> RocCurve:
    """
    Exact step ROC over every distinct score, starting at ``(0, 0)`` with an
    infinite threshold. The area counts tied member/nonmember pairs as one
    half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    is_member = np.asarray(is_member, dtype=bool)
    if is_member.all() or not is_member.any():
        raise ShapeError("A ROC curve needs both members and nonmembers.")
    fpr, tpr, thresholds = roc_curve(is_member, scores, drop_intermediate=False)
    thresholds = thresholds.astype(np.float64)
    thresholds[0] = np.inf
    return RocCurve(
        thresholds=thresholds,
        fpr=fpr,
        tpr=tpr,
        auc=float(trapezoid_auc(fpr, tpr)),
        n_members=int(is_member.sum()),
        n_nonmembers=int((~is_member).sum()),
    )


def tpr_at_fpr_range(curve: RocCurve, band: Tuple[float, float]) -> BandResult:
    """
    Among sweep points with FPR in ``[lo, hi]`` the one with the lowest FPR,
    ties going to the highest TPR.
    """
    lo, hi = band
    if not lo < hi:
        raise ValueError(f"Empty FPR band {band}")
    inside = np.flatnonzero((curve.fpr >= lo) & (curve.fpr <= hi))
    if len(inside) == 0:
        return BandResult(band=(lo, hi), attainable=False)
    best = inside[np.lexsort((-curve.tpr[inside], curve.fpr[inside]))[0]]
    return BandResult(band=(lo, hi), attainable=True, tpr=float(curve.tpr[best]), fpr=float(curve.fpr[best]))


def fpr_at_threshold(scores: np.ndarray, threshold: float) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    if len(scores) == 0:
        raise ShapeError("FPR of an empty score set is undefined.")
    return float(np.mean(scores >= threshold))


def _rates(scores: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    ordered = np.sort(scores)
    return (len(ordered) - np.searchsorted(ordered, thresholds, side="left")) / len(ordered)


def fpr_fpr(
    scores_auditor: np.ndarray,
    scores_discredit: np.ndarray,
    thresholds: Optional[np.ndarray] = None,
) -> FprFprCurve:
    """
    FPR of the auditor's nonmembers against FPR of the discrediting set at
    shared thresholds.

    :param thresholds: descending thresholds, default every distinct score of
        both sets
    """
    scores_auditor = np.asarray(scores_auditor, dtype=np.float64)
    scores_discredit = np.asarray(scores_discredit, dtype=np.float64)
    if len(scores_discredit) == 0:
        raise ShapeError("The discrediting set is empty.")
    if len(scores_auditor) == 0:
        raise ShapeError("The auditor nonmember set is empty.")
    if thresholds is None:
        thresholds = np.unique(np.concatenate([scores_auditor, scores_discredit]))[::-1]
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if np.any(np.diff(thresholds) > 0):
        raise ValueError("Thresholds must be in descending order.")
    return FprFprCurve(
        thresholds=thresholds,
        fpr_auditor=_rates(scores_auditor, thresholds),
        fpr_discredit=_rates(scores_discredit, thresholds),
        n_auditor=len(scores_auditor),
        n_discredit=len(scores_discredit),
    )


def ratio_at_min_fpr(
    scores_auditor: np.ndarray,
    scores_discredit: np.ndarray,
    member_scores: np.ndarray,
) -> RatioReport:
    """
    Compare both FPRs at the auditor's lowest nonzero FPR.

    Thresholds are the member scores: ``t*`` is the highest member score at
    which at least one auditor nonmember is a false positive. If every
    nonmember lies below every member score, the report is taken at the top
    member score, where the auditor has no false positive.
    """
    scores_auditor = np.asarray(scores_auditor, dtype=np.float64)
    scores_discredit = np.asarray(scores_discredit, dtype=np.float64)
    member_scores = np.asarray(member_scores, dtype=np.float64)
    if len(scores_auditor) == 0 or len(scores_discredit) == 0 or len(member_scores) == 0:
        raise ShapeError("ratio_at_min_fpr needs nonempty score sets.")
    top_nonmember = scores_auditor.max()
    eligible = member_scores[member_scores <= top_nonmember]
    threshold = float(eligible.max()) if len(eligible) else float(member_scores.max())
    return ratio_at_threshold(scores_auditor, scores_discredit, threshold)


def ratio_at_threshold(
    scores_auditor: np.ndarray, scores_discredit: np.ndarray, threshold: float
) -> RatioReport:
    auditor_fpr = fpr_at_threshold(scores_auditor, threshold)
    discredit_fpr = fpr_at_threshold(scores_discredit, threshold)
    if auditor_fpr > 0.0:
        ratio = discredit_fpr / auditor_fpr
    else:
        ratio = math.inf if discredit_fpr > 0.0 else 0.0
    return RatioReport(threshold=float(threshold), auditor_min_fpr=auditor_fpr, discredit_fpr=discredit_fpr, ratio=ratio)


def threshold_at_fpr(nonmember_scores: np.ndarray, target_fpr: float) -> float:
    """
    Lowest threshold whose FPR does not exceed ``target_fpr``. When even the
    top nonmember score gives a larger FPR, that score is returned: the
    smallest attainable nonzero FPR.

    >>> threshold_at_fpr(np.array([0.1, 0.2, 0.3, 0.4]), 0.25)
    0.4
    """
    scores = np.asarray(nonmember_scores, dtype=np.float64)
    if len(scores) == 0:
        raise ShapeError("No nonmember scores to place a threshold on.")
    thresholds = np.unique(scores)[::-1]
    rates = _rates(scores, thresholds)
    admissible = thresholds[rates <= target_fpr]
    return float(admissible[-1] if len(admissible) else thresholds[0])


def _check_pair(x: Sequence[float], y: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 3:
        raise ShapeError("Correlations need two equally long series of at least 3 values.")
    return x, y


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x, y = _check_pair(x, y)
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise DiscredibilityError("Pearson correlation is undefined for a constant series.")
    return float(stats.pearsonr(x, y)[0])


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """
    Rank correlation, ties get average ranks.

    >>> round(spearman([1, 2, 3], [1, 3, 2]), 12)
    0.5
    """
    x, y = _check_pair(x, y)
    return float(stats.spearmanr(x, y)[0])


def histogram(values: Sequence[float], bins: Union[int, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Counts over ``bins`` equal bins spanning the values, or over given bin edges."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 0:
        n_bins = bins if np.isscalar(bins) else len(bins) - 1
        return np.zeros(n_bins, dtype=np.int64), np.zeros(n_bins + 1)
    if not np.isscalar(bins):
        return np.histogram(values, bins=np.asarray(bins, dtype=np.float64))
    return np.histogram(values, bins=bins, range=(values.min(), values.max()))


def _log_floor(rates: np.ndarray, n: int) -> np.ndarray:
    return np.maximum(rates, 1.0 / (2 * n))


def roc_csv(curve: RocCurve, filename: Union[str, Path]) -> None:
    pd.DataFrame(
        {
            "threshold": curve.thresholds,
            "fpr": curve.fpr,
            "tpr": curve.tpr,
            "fpr_log": _log_floor(curve.fpr, curve.n_nonmembers),
            "tpr_log": _log_floor(curve.tpr, curve.n_members),
        }
    ).to_csv(filename, index=False, float_format="%.17g")


def fprfpr_csv(curve: FprFprCurve, filename: Union[str, Path]) -> None:
    pd.DataFrame(
        {
            "threshold": curve.thresholds,
            "fpr_auditor": curve.fpr_auditor,
            "fpr_discredit": curve.fpr_discredit,
            "fpr_auditor_log": _log_floor(curve.fpr_auditor, curve.n_auditor),
            "fpr_discredit_log": _log_floor(curve.fpr_discredit, curve.n_discredit),
        }
    ).to_csv(filename, index=False, float_format="%.17g")


def json_safe(value):
    """Replace NaN and infinite floats, at any depth, by ``None``."""
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, (float, np.floating)) and not math.isfinite(value):
        return None
    return value


def write_summary(summary: Dict, filename: Union[str, Path]) -> None:
    with open(filename, "w") as fh:
        json.dump(json_safe(summary), fh, indent=1, sort_keys=True, allow_nan=False)
