import numpy as np
import pytest

from discredibility import AttackContextError, DatasetFormatError, ShapeError
from discredibility.data import SplitPlan
from discredibility.modelzoo import (
    GeneratorModel,
    draw_membership_mask,
    load_ensemble,
    train_shadows,
    train_victim,
    untrained_generator,
)
from discredibility.tinynn import encode
from tests.conftest import quick_train_config


def test_victim_report(tiny_victim, tiny_data, tiny_split):
    net, report = tiny_victim
    assert net.layer_dims == [6, 8, 2]
    assert 0.0 <= report.test_accuracy <= 1.0
    assert report.train_accuracy > 0.75
    assert report.gap == pytest.approx(report.train_accuracy - report.test_accuracy)
    assert set(report.to_dict()) >= {"train_accuracy", "test_accuracy", "generalization_gap"}


def test_victim_needs_members(tiny_data, tiny_split):
    empty = SplitPlan(
        np.array([], dtype=np.int64),
        tiny_split.auditor_train_ids,
        tiny_split.nonmember_eval_ids,
        tiny_split.public_pool_ids,
    )
    with pytest.raises(ShapeError):
        train_victim(tiny_data, empty, [4], quick_train_config(epochs=1))


def test_membership_mask_is_a_function_of_its_seed():
    a = draw_membership_mask(6, 50, seed=3)
    np.testing.assert_array_equal(a, draw_membership_mask(6, 50, seed=3))
    assert not np.array_equal(a, draw_membership_mask(6, 50, seed=4))


@pytest.mark.parametrize("n_models", [2, 3])
def test_paired_mask_has_in_and_out_everywhere(n_models):
    mask = draw_membership_mask(n_models, 500, seed=0, mode="paired")
    assert np.all(mask.any(axis=0))
    assert np.all((~mask).any(axis=0))


def test_out_only_mask():
    mask = draw_membership_mask(1, 200, seed=0, mode="out_only")
    assert not mask.any()


def test_mask_arguments():
    with pytest.raises(AttackContextError):
        draw_membership_mask(1, 10, seed=0, mode="paired")
    with pytest.raises(ValueError):
        draw_membership_mask(4, 10, seed=0, mode="sometimes")


def test_shadow_ensemble(tiny_shadows, tiny_split):
    assert len(tiny_shadows) == 4
    assert tiny_shadows.membership_mask.shape == (4, 120)
    for i in range(4):
        ids = tiny_shadows.train_ids(i)
        assert set(ids.tolist()) <= set(tiny_shadows.pool_ids.tolist())
    outside = tiny_split.public_pool_ids[:3]
    assert not tiny_shadows.in_mask(outside).any()
    inside = tiny_shadows.pool_ids[:5]
    np.testing.assert_array_equal(tiny_shadows.in_mask(inside), tiny_shadows.membership_mask[:, :5])


def test_shadows_do_not_depend_on_worker_count(tiny_data, tiny_split):
    pool_ids = np.concatenate([tiny_split.member_ids, tiny_split.auditor_train_ids])
    cfg = quick_train_config(epochs=2, seed=9)
    serial = train_shadows(tiny_data, pool_ids, 2, [4], cfg, n_jobs=1)
    parallel = train_shadows(tiny_data, pool_ids, 2, [4], cfg, n_jobs=2)
    np.testing.assert_array_equal(serial.membership_mask, parallel.membership_mask)
    for a, b in zip(serial.models, parallel.models):
        np.testing.assert_array_equal(a.weights[0], b.weights[0])


def test_ensemble_files(tmp_path, tiny_shadows):
    manifest = tmp_path / "ensemble.json"
    files = [tmp_path / f"shadow_{i}.tnn" for i in range(len(tiny_shadows))]
    tiny_shadows.save(manifest, files)
    restored = load_ensemble(manifest)
    np.testing.assert_array_equal(restored.membership_mask, tiny_shadows.membership_mask)
    np.testing.assert_array_equal(restored.pool_ids, tiny_shadows.pool_ids)
    np.testing.assert_array_equal(restored.models[2].weights[1], tiny_shadows.models[2].weights[1])

    mask_file = manifest.with_suffix(".mask")
    raw = bytearray(mask_file.read_bytes())
    raw[0] ^= 0xFF
    mask_file.write_bytes(bytes(raw))
    with pytest.raises(DatasetFormatError):
        load_ensemble(manifest)


def test_generator_learns_to_reconstruct(tiny_generator, tiny_victim, tiny_data, tiny_split):
    encoder = tiny_victim[0]
    public = tiny_data.subset(tiny_split.public_pool_ids)
    untrained = untrained_generator(encoder, tiny_data.dim, [16], seed=4)
    assert tiny_generator.reconstruction_mse(encoder, public.samples) < untrained.reconstruction_mse(
        encoder, public.samples
    )
    assert tiny_generator.final_mse == tiny_generator.reconstruction_history[-1]
    out = tiny_generator.generate(encode(encoder, public.samples) + 10.0)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_generator_always_clamps(tiny_generator):
    wrapped = GeneratorModel(tiny_generator.net.copy())
    wrapped.net.output_clamp = False
    assert GeneratorModel(wrapped.net).net.output_clamp
