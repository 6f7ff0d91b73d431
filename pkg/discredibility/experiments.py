"""
End-to-end recipes, one per subcommand. Every recipe takes a
:class:`~discredibility.project.Project`, reuses whatever earlier
subcommands left on disk and registers each file it writes in the manifest.
"""
from __future__ import annotations

import dataclasses
import warnings
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from discredibility import DiscredibilityError, DiscredibilityWarning, DiscreditError
from discredibility.audit import AuditCase, AuditeeView, build_discrediting_set
from discredibility.discredit.census import neighbor_census, unfiltered_pool
from discredibility.discredit.dataset import ClaimedMemberList, DiscreditingDataset
from discredibility.discredit.generate import discredit_generate, member_noise_scale
from discredibility.helpers.audit_listener import AuditListener
from discredibility.metrics import (
    fpr_at_threshold,
    fpr_fpr,
    fprfpr_csv,
    histogram,
    pearson,
    ratio_at_min_fpr,
    ratio_text,
    roc,
    roc_csv,
    spearman,
    threshold_at_fpr,
    write_summary,
)
from discredibility.project import Project

# Discrediting method -> table reporting its FPR inflation.
RATIO_TABLES = {"search": "table4", "generate": "table5", "adversarial": "table6"}

_NEIGHBOR_COLUMNS = [
    "sample_id",
    "method",
    "source_member_id",
    "latent_distance",
    "initial_mse",
    "final_mse",
    "seed",
    "neighbor_score",
    "member_score",
    "noise_factor",
]


def _render(project: Project, csv_file, x: str, ys: List[str], log: bool = False) -> None:
    if not project.config.run.render_plots:
        return
    from discredibility.helpers.plotting import render_curve

    render_curve(csv_file, x, ys, log=log)


def _epsilon_tag(epsilon: Optional[float]) -> str:
    return f"eps{epsilon:g}" if epsilon is not None else ""


def gen_data(project: Project) -> None:
    project.sample_db.create()
    for path in (
        project.paths.dataset_mids,
        project.paths.dataset_csv,
        project.paths.split_json,
    ):
        project.storyteller.record_artifact(path, "gen-data", "setup")


def train(project: Project) -> None:
    zoo = project.model_zoo
    zoo.train_all()
    project.storyteller.record_artifact(project.paths.victim_report, "train", "table1")
    if zoo.has_generator():
        project.storyteller.record_artifact(project.paths.generator_report, "train", "setup")


def attack(project: Project) -> Dict[str, Dict]:
    """
    Score the evaluation split with every configured attack and write the
    ROC curves and the low-FPR summary.
    """
    bench = project.attack_bench
    sample_db = project.sample_db
    summaries = {}
    for attack_id in project.config.attack.attacks:
        sv = bench.evaluation_scores(attack_id, recompute=True)
        summaries[attack_id] = bench.summary(attack_id, sv)
        curve_file = project.paths.curve_dir / f"roc_{attack_id}.csv"
        roc_csv(roc(sv.scores, sample_db.is_member(sv.sample_ids)), curve_file)
        project.storyteller.record_artifact(curve_file, "attack", "table3")
        _render(project, curve_file, "fpr", ["tpr"])
        _render(project, curve_file, "fpr_log", ["tpr_log"], log=True)
    summary_file = project.paths.score_dir / "summary.json"
    write_summary(summaries, summary_file)
    project.storyteller.record_artifact(summary_file, "attack", "table3")
    return summaries


def _claim(project: Project, attack_id: str, n_c: int) -> ClaimedMemberList:
    """The auditor's top ``n_c`` evaluation samples under ``attack_id``."""
    sv = project.attack_bench.evaluation_scores(attack_id)
    candidates = project.sample_db.dataset.subset(sv.sample_ids)
    return ClaimedMemberList.from_scores(attack_id, sv.scores, candidates, n_c)


def _member_claim(project: Project, attack_id: str, n: int) -> ClaimedMemberList:
    """The ``n`` true members the attack scores highest."""
    bench = project.attack_bench
    split = project.sample_db.split
    sv = bench.evaluation_scores(attack_id).subset(split.member_ids)
    members = project.sample_db.dataset.subset(sv.sample_ids)
    return ClaimedMemberList.from_scores(attack_id, sv.scores, members, min(n, len(members)))


def _auditee_view(project: Project, claimed: ClaimedMemberList, with_generator: bool) -> AuditeeView:
    sample_db = project.sample_db
    data = sample_db.dataset
    return AuditeeView(
        claimed=claimed,
        victim=project.model_zoo.victim,
        training_samples=data.subset(sample_db.split.member_ids).samples,
        nonmember_pool=data.subset(sample_db.split.public_pool_ids),
        generator=project.model_zoo.generator if with_generator else None,
    )


def _renumber(project: Project, dataset: DiscreditingDataset, method: str, tag: str) -> DiscreditingDataset:
    if method in ("generate", "adversarial"):
        return dataset.with_sample_ids(project.sample_db.reserve_ids(len(dataset), tag))
    return dataset


def craft(
    project: Project,
    attack_id: str,
    method: str,
    epsilon: Optional[float] = None,
    n_c: Optional[int] = None,
    n_n: Optional[int] = None,
    save: bool = True,
) -> DiscreditingDataset:
    """
    Build a discrediting set against the claim of ``attack_id``.

    :param epsilon: perturbation budget of the adversarial method, defaults
        to ``discredit.pgd_epsilon``
    :param save: write the set and its provenance to the DISCREDIT folder
    """
    cfg = project.config
    params = cfg.discredit
    if n_c is not None or n_n is not None:
        params = dataclasses.replace(params, n_c=n_c or params.n_c, n_n=n_n or params.n_n)
    claimed = _claim(project, attack_id, params.n_c)
    view = _auditee_view(project, claimed, with_generator=method == "generate")
    dataset = build_discrediting_set(view, method, params, cfg.seed_for("discredit"), epsilon)
    tag = "_".join(t for t in (attack_id, _epsilon_tag(epsilon)) if t)
    if n_c is not None or n_n is not None:
        tag = f"{tag}_nc{params.n_c}_nn{params.n_n}"
    dataset = _renumber(project, dataset, method, f"{method}_{tag}")
    if save:
        mids_file = project.paths.discredit_mids(method, tag)
        provenance_file = project.paths.provenance_csv(method, tag)
        dataset.save(mids_file, provenance_file)
        project.storyteller.record_artifact(mids_file, "discredit", RATIO_TABLES.get(method, "setup"))
        project.storyteller.record_artifact(provenance_file, "discredit", RATIO_TABLES.get(method, "setup"))
    return dataset


def _epsilons(project: Project, method: str) -> List[Optional[float]]:
    if method == "adversarial":
        return list(project.config.discredit.epsilon_sweep)
    return [None]


def discredit(project: Project) -> None:
    method = project.config.discredit.method
    for attack_id in project.config.attack.attacks:
        for epsilon in _epsilons(project, method):
            dataset = craft(project, attack_id, method, epsilon)
            project.print(
                f"{attack_id}: {len(dataset)} discrediting samples by {method}"
                + (f" (epsilon {epsilon:g})" if epsilon is not None else ""),
                emoji_alias="dart",
            )


def _compare(
    project: Project,
    attack_id: str,
    dataset: DiscreditingDataset,
    name: str,
    subcommand: str,
    reproduces: str,
) -> Dict:
    """FPR-FPR curve and ratio report of one discrediting set."""
    bench = project.attack_bench
    sv = bench.evaluation_scores(attack_id)
    member_scores, nonmember_scores = bench.split_scores(sv)
    discredit_scores = bench.score(attack_id, dataset.as_labeled()).scores
    curve_file = project.paths.curve_dir / f"fprfpr_{name}.csv"
    fprfpr_csv(fpr_fpr(nonmember_scores, discredit_scores), curve_file)
    project.storyteller.record_artifact(curve_file, subcommand, reproduces)
    _render(project, curve_file, "fpr_auditor", ["fpr_discredit"])
    _render(project, curve_file, "fpr_auditor_log", ["fpr_discredit_log"], log=True)
    report = ratio_at_min_fpr(nonmember_scores, discredit_scores, member_scores).to_dict()
    report["n_discredit"] = len(dataset)
    return report


def fprfpr(project: Project) -> Dict[str, Dict]:
    """
    For each attack, compare the FPR on the auditor's nonmembers with the FPR
    on the discrediting set, as curves and as the ratio at the auditor's
    lowest nonzero FPR.
    """
    method = project.config.discredit.method
    ratios: Dict[str, Dict] = {}
    for attack_id in project.config.attack.attacks:
        for epsilon in _epsilons(project, method):
            dataset = craft(project, attack_id, method, epsilon, save=False)
            name = "_".join(t for t in (attack_id, method, _epsilon_tag(epsilon)) if t)
            report = _compare(project, attack_id, dataset, name, "fprfpr", "figure2")
            if epsilon is not None:
                report["epsilon"] = epsilon
            ratios[name] = report
            project.print(
                f"{name}: FPR x{ratio_text(report['ratio'])} at auditor FPR {report['auditor_min_fpr']:.4g}",
                emoji_alias="chart_with_upwards_trend",
            )
    ratio_file = project.paths.curve_dir / f"ratios_{method}.json"
    write_summary(ratios, ratio_file)
    project.storyteller.record_artifact(ratio_file, "fprfpr", RATIO_TABLES[method])
    return ratios


def audit(project: Project) -> AuditCase:
    cfg = project.config
    epsilon = cfg.discredit.pgd_epsilon if cfg.discredit.method == "adversarial" else None
    return AuditListener(project, cfg.judge.attack, cfg.discredit.method, epsilon=epsilon).listen()


def _scored_neighbors(
    project: Project,
    attack_id: str,
    claimed: ClaimedMemberList,
    dataset: DiscreditingDataset,
) -> pd.DataFrame:
    """Provenance of a discrediting set joined with member and neighbour scores."""
    frame = dataset.provenance_frame()
    frame["neighbor_score"] = project.attack_bench.score(attack_id, dataset.as_labeled()).scores
    member_score = dict(zip(claimed.sample_ids.tolist(), claimed.scores.tolist()))
    frame["member_score"] = frame["source_member_id"].map(member_score)
    return frame


def _generated_neighbors(
    project: Project, attack_id: str, claimed: ClaimedMemberList, noise_factor: float, tag: str
) -> pd.DataFrame:
    cfg = project.config
    sample_db = project.sample_db
    victim = project.model_zoo.victim
    members = sample_db.dataset.subset(sample_db.split.member_ids)
    sigma = member_noise_scale(victim, members.samples, noise_factor)
    try:
        dataset = discredit_generate(
            victim,
            project.model_zoo.generator,
            claimed,
            len(claimed),
            cfg.discredit.n_n,
            sigma,
            cfg.seed_for("discredit"),
            cfg.discredit.distance,
            member_samples=members.samples,
            n_classes=members.n_classes,
        )
    except DiscreditError as e:
        warnings.warn(f"No generated neighbours at noise factor {noise_factor:g}: {e}", DiscredibilityWarning)
        return pd.DataFrame(columns=_NEIGHBOR_COLUMNS)
    dataset = _renumber(project, dataset, "generate", tag)
    frame = _scored_neighbors(project, attack_id, claimed, dataset)
    frame["noise_factor"] = noise_factor
    return frame


def _histograms(project: Project, attack_id: str, claimed: ClaimedMemberList, bins: int = 30) -> pd.DataFrame:
    """
    Score histograms of members, evaluation nonmembers and the same-class and
    different-class public neighbours of the claimed members, on shared bins.
    """
    cfg = project.config
    bench = project.attack_bench
    sample_db = project.sample_db
    member_scores, nonmember_scores = bench.split_scores(bench.evaluation_scores(attack_id))
    public = sample_db.dataset.subset(sample_db.split.public_pool_ids)
    census = neighbor_census(
        project.model_zoo.victim, claimed, public, len(claimed), cfg.discredit.n_n, cfg.discredit.distance
    )
    public_scores = bench.score(attack_id, public).scores
    score_of = dict(zip(public.sample_ids.tolist(), public_scores.tolist()))
    census["score"] = census["neighbor_id"].map(score_of)
    groups = {
        "member": member_scores,
        "nonmember": nonmember_scores,
        "same_class_neighbor": census.loc[census["same_class"], "score"].to_numpy(),
        "different_class_neighbor": census.loc[~census["same_class"], "score"].to_numpy(),
    }
    edges = np.histogram_bin_edges(np.concatenate(list(groups.values())), bins=bins)
    rows = []
    for group, values in groups.items():
        if len(values) == 0:
            continue
        counts, _ = histogram(values, edges)
        for left, right, count in zip(edges[:-1], edges[1:], counts):
            rows.append({"group": group, "bin_left": left, "bin_right": right, "count": int(count)})
    return pd.DataFrame(rows, columns=["group", "bin_left", "bin_right", "count"])


def _correlations(x: Sequence[float], y: Sequence[float]) -> Dict:
    """Pearson and Spearman correlation, ``None`` where they are undefined."""
    result: Dict = {"n": len(x), "pearson": None, "spearman": None}
    try:
        result["spearman"] = spearman(x, y)
        result["pearson"] = pearson(x, y)
    except DiscredibilityError as e:
        warnings.warn(f"Correlation over {len(x)} pairs skipped: {e}", DiscredibilityWarning)
    return result


def _sweep(project: Project, attack_id: str, threshold: float, values: List[int], key: str) -> pd.DataFrame:
    """FPR on the discrediting set at a fixed threshold while ``n_c`` or ``n_n`` varies."""
    cfg = project.config
    method = cfg.discredit.method
    epsilon = cfg.discredit.pgd_epsilon if method == "adversarial" else None
    rows = []
    for value in values:
        dataset = craft(project, attack_id, method, epsilon, save=False, **{key: value})
        scores = project.attack_bench.score(attack_id, dataset.as_labeled()).scores
        rows.append(
            {
                key: value,
                "n_discredit": len(dataset),
                "threshold": threshold,
                "fpr_discredit": fpr_at_threshold(scores, threshold),
            }
        )
        project.print(f"{key} = {value}: FPR on the discrediting set {rows[-1]['fpr_discredit']:.4g}")
    return pd.DataFrame(rows)


def hypotheses(project: Project) -> Dict:
    """
    Data behind the two neighbourhood hypotheses: member and neighbour scores
    move together, and neighbours closer to a member score closer to it.
    """
    cfg = project.config
    attack_id = cfg.judge.attack
    hyp_dir = project.paths.hypothesis_dir
    storyteller = project.storyteller
    if not project.model_zoo.has_generator():
        project.model_zoo.train_generator()
    claimed = _member_claim(project, attack_id, cfg.discredit.hypothesis_members)
    summary: Dict = {"attack_id": attack_id, "n_members": len(claimed)}

    project.print("Score transfer between members and generated neighbours", line_above=True)
    scatter = _generated_neighbors(project, attack_id, claimed, cfg.discredit.noise_factor, f"hyp_score_{attack_id}")
    scatter_file = hyp_dir / "score_score.csv"
    scatter.to_csv(scatter_file, index=False, float_format="%.17g")
    storyteller.record_artifact(scatter_file, "hypotheses", "figure5")
    summary["score_score"] = _correlations(scatter["member_score"], scatter["neighbor_score"])

    project.print("Score difference against latent distance")
    mixed = pd.concat(
        [
            _generated_neighbors(project, attack_id, claimed, factor, f"hyp_distance_{attack_id}_{i}")
            for i, factor in enumerate(cfg.discredit.noise_mix)
        ],
        ignore_index=True,
    )
    difference = mixed["member_score"].astype(float) - mixed["neighbor_score"].astype(float)
    mixed["abs_score_difference"] = difference.abs()
    mixed = mixed[mixed["latent_distance"].astype(float).notna()]
    distance_file = hyp_dir / "distance_score.csv"
    mixed.to_csv(distance_file, index=False, float_format="%.17g")
    storyteller.record_artifact(distance_file, "hypotheses", "figure7")
    summary["distance_score"] = _correlations(mixed["latent_distance"], mixed["abs_score_difference"])

    histogram_file = hyp_dir / "score_histograms.csv"
    _histograms(project, attack_id, claimed).to_csv(histogram_file, index=False, float_format="%.17g")
    storyteller.record_artifact(histogram_file, "hypotheses", "figure6")
    if cfg.run.render_plots:
        from discredibility.helpers.plotting import render_histogram

        render_histogram(histogram_file)

    bench = project.attack_bench
    _, nonmember_scores = bench.split_scores(bench.evaluation_scores(attack_id))
    threshold = threshold_at_fpr(nonmember_scores, cfg.discredit.target_fpr)
    summary["sweep_threshold"] = threshold
    summary["sweep_auditor_fpr"] = fpr_at_threshold(nonmember_scores, threshold)

    project.print(f"Sweeping n_c at threshold {threshold:.6g}")
    nc_file = hyp_dir / "nc_sweep.csv"
    _sweep(project, attack_id, threshold, list(cfg.discredit.nc_sweep), "n_c").to_csv(
        nc_file, index=False, float_format="%.17g"
    )
    storyteller.record_artifact(nc_file, "hypotheses", "figure8")
    _render(project, nc_file, "n_c", ["fpr_discredit"])

    project.print(f"Sweeping n_n at threshold {threshold:.6g}")
    nn_file = hyp_dir / "nn_sweep.csv"
    _sweep(project, attack_id, threshold, list(cfg.discredit.nn_sweep), "n_n").to_csv(
        nn_file, index=False, float_format="%.17g"
    )
    storyteller.record_artifact(nn_file, "hypotheses", "figure9")
    _render(project, nn_file, "n_n", ["fpr_discredit"])

    summary_file = hyp_dir / "summary.json"
    write_summary(summary, summary_file)
    storyteller.record_artifact(summary_file, "hypotheses", "figure5")
    project.print(
        f"Score-score correlation {summary['score_score']['pearson']}, "
        f"distance-difference correlation {summary['distance_score']['pearson']}",
        line_below=True,
    )
    return summary


def domain_shift(project: Project) -> Dict[str, Dict]:
    """
    Use the whole public pool, without any selection around the claimed
    members, as the discrediting set.
    """
    cfg = project.config
    sample_db = project.sample_db
    public = sample_db.dataset.subset(sample_db.split.public_pool_ids)
    dataset = unfiltered_pool(public, cfg.discredit.shift_contrast)
    ratios = {}
    for attack_id in cfg.attack.attacks:
        ratios[attack_id] = _compare(
            project, attack_id, dataset, f"{attack_id}_domain_shift", "domain-shift", "figure14"
        )
        project.print(f"{attack_id}: unfiltered pool FPR x{ratio_text(ratios[attack_id]['ratio'])}")
    ratio_file = project.paths.curve_dir / "ratios_domain_shift.json"
    write_summary(ratios, ratio_file)
    project.storyteller.record_artifact(ratio_file, "domain-shift", "figure15")
    AuditListener(project, cfg.judge.attack, "domain_shift").listen()
    return ratios


RECIPES: Dict[str, Callable[[Project], object]] = {
    "gen-data": gen_data,
    "train": train,
    "attack": attack,
    "discredit": discredit,
    "fprfpr": fprfpr,
    "audit": audit,
    "hypotheses": hypotheses,
    "domain-shift": domain_shift,
}
