import numpy as np
import pytest

from discredibility import AttackContextError, DatasetFormatError, DiscredibilityWarning, ShapeError
from discredibility.attacks.carlini import fit_gaussians, offline_score, online_score, SIGMA_FLOOR
from discredibility.attacks.context import AttackContext
from discredibility.attacks.membership_scores import score_attack, summarize, verbose_name
from discredibility.attacks.score_vector import ScoreVector, normalize_scores, read_scores_csv, write_scores_csv
from discredibility.attacks import shokri
from discredibility.attacks.rezaei import pool_probes
from discredibility.attacks.shokri import attack_features
from discredibility.attacks.watson import calibrated_scores
from discredibility.attacks.yeom import sample_losses
from discredibility.discredit.latent import latent_knn
from discredibility.modelzoo import ShadowEnsemble
from discredibility.tinynn import encode


@pytest.fixture(scope="module")
def evaluation(tiny_data, tiny_split):
    return tiny_data.subset(tiny_split.evaluation_ids)


@pytest.fixture(scope="module")
def is_member(evaluation, tiny_split):
    return np.isin(evaluation.sample_ids, tiny_split.member_ids)


@pytest.fixture(scope="module")
def context(tiny_victim, tiny_shadows, tiny_generator, tiny_data, tiny_split):
    return AttackContext(
        victim=tiny_victim[0],
        shadows=tiny_shadows,
        generator=tiny_generator,
        neighbor_pool=tiny_data.subset(tiny_split.public_pool_ids),
        shadow_data=tiny_data,
        shokri_hidden=(8,),
        shokri_epochs=5,
        rezaei_probes=8,
        rezaei_min_probes=2,
        seed=11,
    )


def test_gap_balanced_accuracy_identity(context, evaluation, is_member, tiny_victim):
    report = tiny_victim[1]
    sv = score_attack("gap", context, evaluation)
    tpr = np.mean(sv.scores[is_member])
    fpr = np.mean(sv.scores[~is_member])
    balanced = (tpr + 1.0 - fpr) / 2.0
    assert abs(balanced - (report.train_accuracy + 1.0 - report.test_accuracy) / 2.0) < 1e-12


def test_yeom_is_negated_loss(context, evaluation):
    sv = score_attack("yeom", context, evaluation)
    np.testing.assert_array_equal(sv.scores, -sample_losses(context.victim, evaluation.samples, evaluation.labels))
    np.testing.assert_array_equal(sv.sample_ids, evaluation.sample_ids)


def test_calibrated_scores():
    victim_losses = np.array([0.1, 2.0])
    shadow_losses = np.array([[0.5, 1.0], [1.5, 3.0], [9.0, 9.0]])
    out_mask = np.array([[True, True], [True, False], [False, True]])
    np.testing.assert_allclose(calibrated_scores(victim_losses, shadow_losses, out_mask), [0.9, 3.0])


def test_watson_needs_out_shadows(tiny_victim, tiny_data):
    net = tiny_victim[0]
    all_in = ShadowEnsemble(
        models=[net, net],
        membership_mask=np.array([[True], [True]]),
        pool_ids=np.array([0]),
        seeds=[1, 2],
        mask_seed=0,
    )
    ctx = AttackContext(victim=net, shadows=all_in)
    with pytest.raises(AttackContextError):
        score_attack("watson", ctx, tiny_data.subset([0, 1]))
    with pytest.raises(AttackContextError):
        score_attack("watson", AttackContext(victim=net), tiny_data.subset([0, 1]))


def test_carlini_analytic_values():
    assert abs(float(online_score(2.0, 2.0, 1.0, 0.0, 1.0)) - 2.0) < 1e-12
    phi = np.linspace(-3.0, 3.0, 7)
    np.testing.assert_allclose(online_score(phi, 0.5, 1.3, 0.5, 1.3), 0.0, atol=1e-12)
    assert np.all(np.diff(offline_score(phi, 0.0, 1.0)) > 0.0)


def test_online_score_flips_sign_when_in_and_out_swap():
    phi = np.linspace(-4.0, 4.0, 17)
    np.testing.assert_allclose(
        online_score(phi, 1.5, 0.7, -0.5, 2.0), -online_score(phi, -0.5, 2.0, 1.5, 0.7), atol=1e-12
    )


def test_offline_score_at_the_out_median():
    assert float(offline_score(0.0, 0.0, 1.0)) == pytest.approx(np.log(2.0), abs=1e-12)
    assert float(offline_score(-1.25, -1.25, 3.0)) == pytest.approx(-np.log(0.5), abs=1e-12)


def test_fit_gaussians_floors_the_spread():
    phi = np.array([[1.0, 0.0], [1.0, 2.0], [5.0, 4.0]])
    mask = np.array([[True, True], [True, True], [False, True]])
    mean, sd = fit_gaussians(phi, mask)
    np.testing.assert_allclose(mean, [1.0, 2.0])
    assert sd[0] == SIGMA_FLOOR
    np.testing.assert_allclose(sd[1], np.sqrt(8.0 / 3.0))


@pytest.mark.parametrize("variant", ["offline", "online"])
def test_carlini_scores(context, evaluation, variant):
    n_in = context.shadows.in_mask(evaluation.sample_ids).sum(axis=0)
    enough = (n_in >= 2) & (len(context.shadows) - n_in >= 2)
    covered = evaluation.subset(evaluation.sample_ids[enough])
    ctx = AttackContext(**{**context.__dict__, "carlini_variant": variant})
    sv = score_attack("carlini", ctx, covered)
    assert len(sv) == len(covered)
    assert np.all(np.isfinite(sv.scores))


def test_online_carlini_scores_public_samples_offline(context, tiny_data, tiny_split):
    public = tiny_data.subset(tiny_split.public_pool_ids)
    assert not context.shadows.in_mask(public.sample_ids).any()
    online = AttackContext(**{**context.__dict__, "carlini_variant": "online"})
    offline = AttackContext(**{**context.__dict__, "carlini_variant": "offline"})
    with pytest.warns(DiscredibilityWarning, match="fewer than two IN shadows"):
        sv = score_attack("carlini", online, public)
    assert np.all(np.isfinite(sv.scores))
    np.testing.assert_array_equal(sv.scores, score_attack("carlini", offline, public).scores)


def test_online_carlini_mixes_covered_and_public_samples(context, evaluation, tiny_data, tiny_split):
    n_in = context.shadows.in_mask(evaluation.sample_ids).sum(axis=0)
    covered_ids = evaluation.sample_ids[(n_in >= 2) & (len(context.shadows) - n_in >= 2)][:5]
    public_ids = tiny_split.public_pool_ids[:5]
    mixed = tiny_data.subset(np.concatenate([covered_ids, public_ids]))
    online = AttackContext(**{**context.__dict__, "carlini_variant": "online"})
    with pytest.warns(DiscredibilityWarning):
        together = score_attack("carlini", online, mixed).scores
    alone = score_attack("carlini", online, tiny_data.subset(covered_ids)).scores
    np.testing.assert_allclose(together[: len(covered_ids)], alone)


def test_shokri_features_and_scores(context, evaluation):
    features = attack_features(np.array([[0.2, 0.7, 0.1]]), np.array([2]), 3)
    np.testing.assert_allclose(features, [[0.7, 0.2, 0.1, 0.0, 0.0, 1.0]])
    sv = score_attack("shokri", context, evaluation)
    assert sv.scores.min() >= 0.0 and sv.scores.max() <= 1.0


@pytest.mark.parametrize("source", ["generator", "pool"])
def test_rezaei_is_seeded(context, evaluation, source):
    ctx = AttackContext(**{**context.__dict__, "rezaei_neighbor_source": source})
    first = score_attack("rezaei", ctx, evaluation)
    second = score_attack("rezaei", ctx, evaluation)
    np.testing.assert_array_equal(first.scores, second.scores)
    assert first.flagged.shape == first.scores.shape


def test_shokri_trains_its_attack_networks_once(context, evaluation, monkeypatch):
    calls = []
    train = shokri.train_attack_models

    def counting(ctx):
        calls.append(ctx.shokri_epochs)
        return train(ctx)

    monkeypatch.setattr(shokri, "train_attack_models", counting)
    ctx = AttackContext(**{**context.__dict__, "attack_model_cache": {}})
    first = score_attack("shokri", ctx, evaluation)
    second = score_attack("shokri", ctx, evaluation)
    assert calls == [5]
    np.testing.assert_array_equal(first.scores, second.scores)

    longer = AttackContext(**{**ctx.__dict__, "shokri_epochs": 6})
    score_attack("shokri", longer, evaluation)
    assert calls == [5, 6]
    score_attack("shokri", ctx, evaluation)
    assert calls == [5, 6]


def test_pool_neighbours_leave_out_the_sample(context):
    pool = context.neighbor_pool
    pool_latent = encode(context.victim, pool.samples)
    checked = 0
    for sample, label, sample_id in zip(pool.samples, pool.labels, pool.sample_ids):
        latent = encode(context.victim, sample)[0]
        if not np.any(latent):
            continue
        probes = pool_probes(context, sample, int(label), int(sample_id), pool_latent)
        assert len(probes) == context.rezaei_probes
        assert not np.any(np.all(probes == sample, axis=1))
        nearest = latent_knn(
            context.victim, latent, pool, int(label), context.rezaei_probes + 1, pool_latent=pool_latent
        ).sample_ids
        expected = nearest[nearest != sample_id][: context.rezaei_probes]
        np.testing.assert_array_equal(probes, pool.samples[pool.positions(expected)])
        checked += 1
    assert checked > 0


def test_rezaei_needs_a_generator(context, evaluation):
    ctx = AttackContext(**{**context.__dict__, "generator": None})
    with pytest.raises(AttackContextError):
        score_attack("rezaei", ctx, evaluation)


def test_unknown_attack(context, evaluation):
    with pytest.raises(ValueError):
        score_attack("oracle", context, evaluation)


def test_verbose_names():
    assert verbose_name("carlini") == "Likelihood Ratio Attack"
    assert verbose_name("gap") == "Gap Attack"


def test_summary(context, evaluation, is_member):
    info = summarize(score_attack("yeom", context, evaluation), is_member)
    assert 0.0 <= info["auc"] <= 1.0
    assert info["n_members"] == int(is_member.sum())
    assert [b["band"] for b in info["tpr_at_fpr"]] == [[0.0001, 0.0003], [0.01, 0.03]]
    assert info["n_flagged"] == 0


def test_score_vector_validation():
    with pytest.raises(ShapeError):
        ScoreVector("yeom", np.arange(3), np.zeros(2))
    with pytest.raises(ShapeError):
        ScoreVector("yeom", np.arange(2), np.array([0.0, np.nan]))


def test_normalize_scores():
    reference = ScoreVector("x", np.arange(3), np.array([1.0, 2.0, 3.0]))
    sv = ScoreVector("x", np.arange(3), np.array([0.0, 2.0, 5.0]))
    np.testing.assert_allclose(normalize_scores(sv, reference).scores, [0.0, 0.5, 1.0])
    flat = ScoreVector("x", np.arange(2), np.array([4.0, 4.0]))
    np.testing.assert_allclose(normalize_scores(sv, flat).scores, 0.5)


def test_score_csv(tmp_path):
    sv = ScoreVector("rezaei", np.array([4, 7]), np.array([0.25, -1.5]), flagged=np.array([False, True]))
    filename = tmp_path / "scores.csv"
    write_scores_csv(sv, np.array([True, False]), filename)
    restored, is_member = read_scores_csv(filename)
    assert restored.attack_id == "rezaei"
    np.testing.assert_array_equal(restored.scores, sv.scores)
    np.testing.assert_array_equal(restored.flagged, sv.flagged)
    np.testing.assert_array_equal(is_member, [True, False])

    (tmp_path / "broken.csv").write_text("sample_id,raw_score\n1,0.5\n")
    with pytest.raises(DatasetFormatError):
        read_scores_csv(tmp_path / "broken.csv")


def test_carlini_needs_two_out_shadows(tiny_victim, tiny_data):
    net = tiny_victim[0]
    one_out = ShadowEnsemble(
        models=[net, net, net],
        membership_mask=np.array([[True], [True], [False]]),
        pool_ids=np.array([0]),
        seeds=[1, 2, 3],
        mask_seed=0,
    )
    with pytest.raises(AttackContextError):
        score_attack("carlini", AttackContext(victim=net, shadows=one_out), tiny_data.subset([0]))
