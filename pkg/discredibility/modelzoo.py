"""
Training of every model an experiment needs: the victim (auditee), the shadow
ensemble of the auditor and the decoder used to generate neighbours in latent
space.

Shadow membership is drawn per ensemble, not per model: a column of the mask
that ends all-IN (or all-OUT in paired mode) is redrawn from a stream keyed on
the ensemble seed and the column index. The mask is therefore a pure function
of ``(n_models, n_pool, seed, mode)`` and can be re-derived at load time.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from discredibility import AttackContextError, DatasetFormatError, ShapeError
from discredibility.data import LabeledDataset, SplitPlan
from discredibility.tinynn import (
    DenseNet,
    TrainConfig,
    TrainingLog,
    accuracy,
    decode,
    encode,
    load_net,
    save_net,
    train_reconstruction,
    train_sgd,
)

SHADOW_MODES = ("paired", "out_only")
MAX_COLUMN_REDRAWS = 1000


@dataclass
class VictimReport:
    train_accuracy: float
    test_accuracy: float
    log: TrainingLog = field(default_factory=TrainingLog)

    @property
    def gap(self) -> float:
        return self.train_accuracy - self.test_accuracy

    def to_dict(self) -> Dict:
        return {
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
            "generalization_gap": self.gap,
            "training": self.log.to_dict(),
        }


def train_victim(
    data: LabeledDataset,
    split: SplitPlan,
    hidden_widths: Sequence[int],
    cfg: TrainConfig,
) -> Tuple[DenseNet, VictimReport]:
    """
    Train the auditee's classifier on the member split only.

    Test accuracy is measured on the nonmember evaluation split, which is the
    population the auditor's attack has to tell apart from the members.
    """
    if len(split.member_ids) == 0:
        raise ShapeError("The member split is empty; there is nothing to train on.")
    members = data.subset(split.member_ids)
    test = data.subset(split.nonmember_eval_ids)
    dims = [data.dim] + list(hidden_widths) + [data.n_classes]
    net = DenseNet.initialize(dims, seed=cfg.seed)
    net, log = train_sgd(net, members, cfg, test_data=test)
    report = VictimReport(
        train_accuracy=accuracy(net, members.samples, members.labels),
        test_accuracy=accuracy(net, test.samples, test.labels),
        log=log,
    )
    return net, report


def draw_membership_mask(n_models: int, n_pool: int, seed: int, mode: str = "paired") -> np.ndarray:
    """
    Boolean ``(n_models, n_pool)`` matrix, True where a pool sample is in the
    training set of a shadow.

    Each entry is Bernoulli(1/2). In paired mode every column holds at least one
    IN and one OUT model; in out_only mode at least one OUT model.
    """
    if mode not in SHADOW_MODES:
        raise ValueError(f"Unknown shadow mode {mode!r}")
    if mode == "paired" and n_models < 2:
        raise AttackContextError("A paired shadow ensemble needs at least two models.")
    if n_models < 1:
        raise AttackContextError("A shadow ensemble needs at least one model.")
    rng = np.random.default_rng(seed)
    mask = rng.random((n_models, n_pool)) < 0.5
    for j in range(n_pool):
        attempt = 0
        while not _column_ok(mask[:, j], mode):
            if attempt == MAX_COLUMN_REDRAWS:
                raise AttackContextError(f"Could not draw a valid mask column {j}")
            col_rng = np.random.default_rng([seed, j, attempt])
            mask[:, j] = col_rng.random(n_models) < 0.5
            attempt += 1
    return mask


def _column_ok(column: np.ndarray, mode: str) -> bool:
    n_in = int(column.sum())
    if mode == "paired":
        return 0 < n_in < column.size
    return n_in < column.size


@dataclass
class ShadowEnsemble:
    models: List[DenseNet]
    membership_mask: np.ndarray
    pool_ids: np.ndarray
    seeds: List[int]
    mask_seed: int
    mode: str = "paired"

    def __post_init__(self):
        self.pool_ids = np.asarray(self.pool_ids, dtype=np.int64)
        self.membership_mask = np.asarray(self.membership_mask, dtype=bool)
        if self.membership_mask.shape != (len(self.models), len(self.pool_ids)):
            raise ShapeError(
                f"Mask of shape {self.membership_mask.shape} does not match "
                f"{len(self.models)} models and {len(self.pool_ids)} pool samples"
            )
        self._column = {int(s): j for j, s in enumerate(self.pool_ids)}

    def __len__(self) -> int:
        return len(self.models)

    def in_mask(self, sample_ids: Sequence[int]) -> np.ndarray:
        """
        ``(n_models, n_samples)`` IN-indicator for arbitrary sample ids.
        Samples outside the shadow pool were never trained on: all OUT.
        """
        out = np.zeros((len(self.models), len(sample_ids)), dtype=bool)
        for k, sample_id in enumerate(sample_ids):
            j = self._column.get(int(sample_id))
            if j is not None:
                out[:, k] = self.membership_mask[:, j]
        return out

    def train_ids(self, index: int) -> np.ndarray:
        return self.pool_ids[self.membership_mask[index]]

    def save(self, manifest: Union[str, Path], model_files: Sequence[Union[str, Path]]) -> None:
        """
        Write every shadow as TNN1, the bit-packed mask next to the manifest and
        the json manifest itself.
        """
        manifest = Path(manifest)
        mask_file = manifest.with_suffix(".mask")
        for net, filename in zip(self.models, model_files):
            save_net(net, filename)
        with open(mask_file, "wb") as fh:
            fh.write(np.packbits(self.membership_mask, axis=1).tobytes())
        info = {
            "mode": self.mode,
            "mask_seed": self.mask_seed,
            "n_models": len(self.models),
            "pool_ids": self.pool_ids.tolist(),
            "seeds": list(self.seeds),
            "model_files": [Path(f).name for f in model_files],
            "mask_file": mask_file.name,
        }
        with open(manifest, "w") as fh:
            json.dump(info, fh, indent=1)


def load_ensemble(manifest: Union[str, Path]) -> ShadowEnsemble:
    """
    Restore an ensemble from its manifest and check the stored mask against
    the one re-derived from the recorded seed.
    """
    manifest = Path(manifest)
    with open(manifest, "r") as fh:
        info = json.load(fh)
    n_models = info["n_models"]
    n_pool = len(info["pool_ids"])
    with open(manifest.parent / info["mask_file"], "rb") as fh:
        packed = np.frombuffer(fh.read(), dtype=np.uint8)
    row_bytes = (n_pool + 7) // 8
    if packed.size != n_models * row_bytes:
        raise DatasetFormatError(f"Mask file of {manifest} has the wrong size.")
    mask = np.unpackbits(packed.reshape(n_models, row_bytes), axis=1, count=n_pool).astype(bool)
    expected = draw_membership_mask(n_models, n_pool, info["mask_seed"], info["mode"])
    if not np.array_equal(mask, expected):
        raise DatasetFormatError(
            f"Stored mask of {manifest} does not match the mask derived from its seed."
        )
    models = [load_net(manifest.parent / f) for f in info["model_files"]]
    return ShadowEnsemble(
        models=models,
        membership_mask=mask,
        pool_ids=np.array(info["pool_ids"]),
        seeds=info["seeds"],
        mask_seed=info["mask_seed"],
        mode=info["mode"],
    )


def _train_one_shadow(
    data: LabeledDataset,
    train_ids: np.ndarray,
    dims: List[int],
    cfg: TrainConfig,
) -> DenseNet:
    net = DenseNet.initialize(dims, seed=cfg.seed)
    net, _ = train_sgd(net, data.subset(train_ids), cfg)
    return net


def train_shadows(
    data: LabeledDataset,
    pool_ids: Sequence[int],
    n_models: int,
    hidden_widths: Sequence[int],
    cfg: TrainConfig,
    mode: str = "paired",
    n_jobs: int = 1,
) -> ShadowEnsemble:
    """
    Train ``n_models`` shadows, each on a seeded random half of the pool.

    :param cfg: training config; its seed keys the mask and, offset by the
        model index, every shadow's initialisation and shuffling
    :param n_jobs: joblib worker count, ``-1`` for all cores. Results are merged
        in model-index order and do not depend on it.
    """
    pool_ids = np.sort(np.asarray(pool_ids, dtype=np.int64))
    if len(pool_ids) < 2:
        raise AttackContextError("The shadow pool needs at least two samples.")
    mask = draw_membership_mask(n_models, len(pool_ids), cfg.seed, mode)
    seeds = [cfg.seed * 1000 + i + 1 for i in range(n_models)]
    dims = [data.dim] + list(hidden_widths) + [data.n_classes]
    models = Parallel(n_jobs=n_jobs)(
        delayed(_train_one_shadow)(
            data,
            pool_ids[mask[i]],
            dims,
            TrainConfig(
                learning_rate=cfg.learning_rate,
                decay_factor=cfg.decay_factor,
                decay_epochs=cfg.decay_epochs,
                epochs=cfg.epochs,
                batch_size=cfg.batch_size,
                seed=seeds[i],
            ),
        )
        for i in range(n_models)
    )
    return ShadowEnsemble(
        models=list(models),
        membership_mask=mask,
        pool_ids=pool_ids,
        seeds=seeds,
        mask_seed=cfg.seed,
        mode=mode,
    )


@dataclass
class GeneratorModel:
    """Decoder from the victim's latent space back to inputs, outputs in [0, 1]."""

    net: DenseNet
    reconstruction_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.net.output_clamp = True

    @property
    def latent_dim(self) -> int:
        return self.net.input_dim

    @property
    def output_dim(self) -> int:
        return self.net.n_outputs

    def generate(self, latent: np.ndarray) -> np.ndarray:
        return decode(self.net, latent)

    def reconstruction_mse(self, encoder: DenseNet, samples: np.ndarray) -> float:
        return float(np.mean((self.generate(encode(encoder, samples)) - samples) ** 2))

    @property
    def final_mse(self) -> Optional[float]:
        return self.reconstruction_history[-1] if self.reconstruction_history else None


def untrained_generator(encoder: DenseNet, output_dim: int, hidden_widths: Sequence[int], seed: int) -> GeneratorModel:
    dims = [encoder.latent_dim] + list(hidden_widths) + [output_dim]
    return GeneratorModel(DenseNet.initialize(dims, seed=seed, output_clamp=True, output_bias=0.5))


def train_generator(
    data: LabeledDataset,
    encoder: DenseNet,
    hidden_widths: Sequence[int],
    cfg: TrainConfig,
) -> GeneratorModel:
    """
    Fit ``G`` so that ``G(E(x))`` reconstructs ``x`` over ``data`` (the public
    pool) by minimising the mean squared error.
    """
    if len(data) == 0:
        raise ShapeError("Cannot train a generator on an empty dataset.")
    generator = untrained_generator(encoder, data.dim, hidden_widths, cfg.seed)
    latent = encode(encoder, data.samples)
    net, history = train_reconstruction(generator.net, latent, data.samples, cfg)
    return GeneratorModel(net, reconstruction_history=history)
