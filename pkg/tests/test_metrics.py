import json
import math

import numpy as np
import pandas as pd
import pytest
import toml

from discredibility import DiscredibilityError, ShapeError
from discredibility.metrics import (
    fpr_at_threshold,
    fpr_fpr,
    fprfpr_csv,
    histogram,
    pearson,
    ratio_at_min_fpr,
    RatioReport,
    ratio_at_threshold,
    ratio_text,
    roc,
    roc_csv,
    spearman,
    threshold_at_fpr,
    tpr_at_fpr_range,
    write_summary,
)


def _mann_whitney(scores, is_member):
    members = scores[is_member]
    nonmembers = scores[~is_member]
    wins = (members[:, None] > nonmembers[None, :]).sum()
    ties = (members[:, None] == nonmembers[None, :]).sum()
    return (wins + 0.5 * ties) / (len(members) * len(nonmembers))


@pytest.mark.parametrize("seed", range(200))
def test_auc_equals_pair_counting(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 1001))
    is_member = rng.random(n) < 0.5
    is_member[:2] = [True, False]
    # coarse rounding produces many ties
    scores = np.round(rng.normal(size=n) + 0.5 * is_member, 1)
    assert roc(scores, is_member).auc == pytest.approx(_mann_whitney(scores, is_member), abs=1e-12)


def test_roc_shape():
    scores = np.array([0.1, 0.4, 0.35, 0.8, 0.8])
    is_member = np.array([False, False, True, True, False])
    curve = roc(scores, is_member)
    assert (curve.fpr[0], curve.tpr[0]) == (0.0, 0.0)
    assert (curve.fpr[-1], curve.tpr[-1]) == (1.0, 1.0)
    assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)
    assert math.isinf(curve.thresholds[0])
    assert (curve.n_members, curve.n_nonmembers) == (2, 3)


def test_roc_needs_both_classes():
    with pytest.raises(ShapeError):
        roc(np.array([0.1, 0.2]), np.array([True, True]))


def test_tpr_at_fpr_band():
    scores = np.concatenate([np.arange(100.0), np.arange(50.0, 150.0)])
    is_member = np.concatenate([np.zeros(100, bool), np.ones(100, bool)])
    curve = roc(scores, is_member)
    band = tpr_at_fpr_range(curve, (0.01, 0.03))
    assert band.attainable
    assert band.fpr == pytest.approx(0.01)
    assert band.tpr == pytest.approx(0.51)
    assert not tpr_at_fpr_range(curve, (0.0001, 0.0003)).attainable
    with pytest.raises(ValueError):
        tpr_at_fpr_range(curve, (0.1, 0.1))


def test_fpr_fpr_curve():
    curve = fpr_fpr(np.array([0.1, 0.5, 0.9]), np.array([0.5, 0.6]))
    np.testing.assert_array_equal(curve.thresholds, [0.9, 0.6, 0.5, 0.1])
    np.testing.assert_allclose(curve.fpr_auditor, [1 / 3, 1 / 3, 2 / 3, 1.0])
    np.testing.assert_allclose(curve.fpr_discredit, [0.0, 0.5, 1.0, 1.0])
    with pytest.raises(ShapeError):
        fpr_fpr(np.array([0.1]), np.array([]))
    with pytest.raises(ValueError):
        fpr_fpr(np.array([0.1]), np.array([0.2]), thresholds=np.array([0.1, 0.5]))


def test_ratio_at_lowest_nonzero_auditor_fpr():
    report = ratio_at_min_fpr(
        np.array([0.1, 0.2, 0.9]),
        np.array([0.85, 0.95, 0.3, 0.2]),
        np.array([0.5, 0.8, 1.0]),
    )
    assert report.threshold == 0.8
    assert report.auditor_min_fpr == pytest.approx(1 / 3)
    assert report.discredit_fpr == 0.5
    assert report.ratio == pytest.approx(1.5)


def test_ratio_without_auditor_false_positives():
    report = ratio_at_min_fpr(np.array([0.1, 0.2]), np.array([0.95, 0.1]), np.array([0.5, 0.9]))
    assert report.threshold == 0.9
    assert report.auditor_min_fpr == 0.0
    assert math.isinf(report.ratio)
    assert ratio_at_threshold(np.array([0.1]), np.array([0.2]), 0.5).ratio == 0.0


def test_unbounded_ratio_is_written_as_strict_json(tmp_path):
    report = ratio_at_threshold(np.array([0.1, 0.2]), np.array([0.95, 0.1]), 0.9)
    assert math.isinf(report.ratio)
    d = report.to_dict()
    assert d["ratio"] is None and d["ratio_unbounded"] is True
    text = json.dumps(d, allow_nan=False)
    assert "Infinity" not in text
    restored = RatioReport.from_dict(json.loads(text))
    assert math.isinf(restored.ratio) and restored.discredit_fpr == 0.5
    assert math.isinf(RatioReport.from_dict(toml.loads(toml.dumps(d))).ratio)
    assert ratio_text(d["ratio"]) == "unbounded"

    finite = ratio_at_threshold(np.array([0.1, 0.95]), np.array([0.95, 0.96]), 0.9).to_dict()
    assert finite["ratio"] == 2.0 and finite["ratio_unbounded"] is False
    assert RatioReport.from_dict(finite).ratio == 2.0

    filename = tmp_path / "ratios.json"
    write_summary({"search": d, "spread": {"pearson": math.nan, "values": [1.0, -math.inf]}}, filename)
    text = filename.read_text()
    assert "NaN" not in text and "Infinity" not in text
    summary = json.loads(text)
    assert summary["search"]["ratio"] is None
    assert summary["spread"] == {"pearson": None, "values": [1.0, None]}


def test_threshold_at_fpr():
    nonmembers = np.arange(1.0, 11.0)
    assert threshold_at_fpr(nonmembers, 0.2) == 9.0
    assert fpr_at_threshold(nonmembers, 9.0) == 0.2
    # smaller than one false positive in ten: the top score is the best we can do
    assert threshold_at_fpr(nonmembers, 0.0001) == 10.0


def test_correlations():
    x = np.arange(10.0)
    assert pearson(x, 2 * x + 1) == pytest.approx(1.0)
    assert spearman(x, -(x**3)) == pytest.approx(-1.0)
    with pytest.raises(DiscredibilityError):
        pearson(x, np.ones(10))
    with pytest.raises(ShapeError):
        pearson([1.0, 2.0], [1.0, 2.0])


def test_histogram_with_shared_edges():
    counts, edges = histogram([0.1, 0.2, 0.9], np.array([0.0, 0.5, 1.0]))
    assert counts.tolist() == [2, 1]
    counts, edges = histogram([], 4)
    assert counts.tolist() == [0, 0, 0, 0] and len(edges) == 5


def test_fpr_fpr_of_a_set_against_itself():
    rng = np.random.default_rng(4)
    scores = np.round(rng.normal(size=300), 1)
    curve = fpr_fpr(scores, scores.copy())
    np.testing.assert_array_equal(curve.fpr_auditor, curve.fpr_discredit)
    assert curve.n_auditor == curve.n_discredit == 300


def test_curve_files(tmp_path):
    curve = fpr_fpr(np.array([0.1, 0.5, 0.9, 0.95]), np.array([0.5, 0.6]))
    filename = tmp_path / "fprfpr.csv"
    fprfpr_csv(curve, filename)
    frame = pd.read_csv(filename)
    assert list(frame.columns) == [
        "threshold",
        "fpr_auditor",
        "fpr_discredit",
        "fpr_auditor_log",
        "fpr_discredit_log",
    ]
    # zero rates are floored at half a sample for log axes
    assert frame["fpr_discredit_log"].iloc[0] == pytest.approx(0.25)
    roc_file = tmp_path / "roc.csv"
    roc_csv(roc(np.array([0.1, 0.2, 0.3]), np.array([False, True, True])), roc_file)
    assert pd.read_csv(roc_file)["tpr"].iloc[-1] == 1.0
