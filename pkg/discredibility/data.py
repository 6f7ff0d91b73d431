"""
Datasets, splits and the file formats they travel in.

A :class:`LabeledDataset` carries features in ``[0, 1]``, class labels, the id
of the subpopulation each sample was drawn from and a stable sample id. The
audit setting is defined by a :class:`SplitPlan` over sample ids.
"""
from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from sklearn.cluster import KMeans

from discredibility import ConfigError, DatasetFormatError, ShapeError, SplitError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
MIDS_MAGIC = b"MIDS"

SPLIT_NAMES = ("member", "auditor_train", "nonmember_eval", "public_pool")


@dataclass(frozen=True)
class LabeledDataset:
    samples: np.ndarray
    labels: np.ndarray
    subpop_ids: np.ndarray
    sample_ids: np.ndarray
    n_classes: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2:
            raise ShapeError(f"Samples must be a matrix, got shape {samples.shape}")
        n = samples.shape[0]
        labels = np.asarray(self.labels, dtype=np.int64)
        subpop_ids = np.asarray(self.subpop_ids, dtype=np.int64)
        sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        for name, arr in (("labels", labels), ("subpop_ids", subpop_ids), ("sample_ids", sample_ids)):
            if arr.shape != (n,):
                raise ShapeError(f"{name} has shape {arr.shape}, expected ({n},)")
        if n and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ShapeError(f"Labels out of range for {self.n_classes} classes")
        if not np.all(np.isfinite(samples)) or (n and (samples.min() < 0.0 or samples.max() > 1.0)):
            raise ShapeError("Features must be finite and in [0, 1]")
        if len(np.unique(sample_ids)) != n:
            raise ShapeError("Sample ids are not unique")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "subpop_ids", subpop_ids)
        object.__setattr__(self, "sample_ids", sample_ids)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def positions(self, ids: Iterable[int]) -> np.ndarray:
        """Row positions of the given sample ids, in the given order."""
        lookup = {int(s): i for i, s in enumerate(self.sample_ids)}
        try:
            return np.array([lookup[int(i)] for i in ids], dtype=np.int64)
        except KeyError as e:
            raise ShapeError(f"Sample id {e.args[0]} is not in the dataset") from e

    def subset(self, ids: Iterable[int]) -> LabeledDataset:
        pos = self.positions(ids)
        return LabeledDataset(
            samples=self.samples[pos],
            labels=self.labels[pos],
            subpop_ids=self.subpop_ids[pos],
            sample_ids=self.sample_ids[pos],
            n_classes=self.n_classes,
        )

    def with_samples(self, samples: np.ndarray) -> LabeledDataset:
        return LabeledDataset(
            samples=samples,
            labels=self.labels,
            subpop_ids=self.subpop_ids,
            sample_ids=self.sample_ids,
            n_classes=self.n_classes,
        )


@dataclass(frozen=True)
class SynthConfig:
    classes: int = 2
    subpops_per_class: int = 8
    dim: int = 64
    cluster_spread: float = 0.1
    center_spread: float = 0.15
    samples_per_subpop: int = 625
    seed: int = 0
    label_noise: float = 0.0

    def __post_init__(self):
        if min(self.classes, self.subpops_per_class, self.dim, self.samples_per_subpop) < 1:
            raise ConfigError("All counts of a SynthConfig must be >= 1")
        if self.cluster_spread <= 0.0 or self.center_spread <= 0.0:
            raise ConfigError("Spreads must be positive")
        if self.cluster_spread >= self.center_spread:
            raise ConfigError(
                f"cluster_spread ({self.cluster_spread}) must be smaller than "
                f"center_spread ({self.center_spread})"
            )
        if not 0.0 <= self.label_noise < 1.0:
            raise ConfigError("label_noise must be in [0, 1)")


def gen_synthetic(cfg: SynthConfig) -> LabeledDataset:
    """
    Gaussian clusters per class, one cluster per subpopulation.

    Subpopulation ``s`` of class ``c`` gets id ``c * subpops_per_class + s``.
    With ``label_noise`` the same number of samples of every class is moved to
    the next class id, so class counts stay balanced.
    """
    rng = np.random.default_rng(cfg.seed)
    blocks, labels, subpops = [], [], []
    for c in range(cfg.classes):
        for s in range(cfg.subpops_per_class):
            center = rng.normal(0.5, cfg.center_spread, size=cfg.dim)
            points = rng.normal(center, cfg.cluster_spread, size=(cfg.samples_per_subpop, cfg.dim))
            blocks.append(np.clip(points, 0.0, 1.0))
            labels.append(np.full(cfg.samples_per_subpop, c))
            subpops.append(np.full(cfg.samples_per_subpop, c * cfg.subpops_per_class + s))
    samples = np.vstack(blocks)
    clean = np.concatenate(labels)
    noisy = clean.copy()
    if cfg.label_noise > 0.0 and cfg.classes > 1:
        per_class = int(round(cfg.label_noise * cfg.subpops_per_class * cfg.samples_per_subpop))
        for c in range(cfg.classes):
            members = np.flatnonzero(clean == c)
            flipped = rng.choice(members, size=per_class, replace=False)
            noisy[flipped] = (c + 1) % cfg.classes
    return LabeledDataset(
        samples=samples,
        labels=noisy,
        subpop_ids=np.concatenate(subpops),
        sample_ids=np.arange(samples.shape[0]),
        n_classes=cfg.classes,
    )


@dataclass(frozen=True)
class SplitPlan:
    member_ids: np.ndarray
    auditor_train_ids: np.ndarray
    nonmember_eval_ids: np.ndarray
    public_pool_ids: np.ndarray
    seed: int = 0
    fractions: tuple = field(default=(0.25, 0.25, 0.25, 0.25))

    def __post_init__(self):
        for name in SPLIT_NAMES:
            ids = np.sort(np.asarray(getattr(self, f"{name}_ids"), dtype=np.int64))
            object.__setattr__(self, f"{name}_ids", ids)
        seen: set = set()
        for name in SPLIT_NAMES:
            ids = set(getattr(self, f"{name}_ids").tolist())
            overlap = seen & ids
            if overlap:
                raise SplitError(f"Split '{name}' overlaps earlier splits in {len(overlap)} ids")
            seen |= ids

    @property
    def evaluation_ids(self) -> np.ndarray:
        return np.sort(np.concatenate([self.member_ids, self.nonmember_eval_ids]))

    def split_of(self) -> Dict[int, str]:
        out = {}
        for name in SPLIT_NAMES:
            for i in getattr(self, f"{name}_ids"):
                out[int(i)] = name
        return out

    def to_json(self, filename: Union[str, Path]) -> None:
        info = {f"{name}_ids": getattr(self, f"{name}_ids").tolist() for name in SPLIT_NAMES}
        info["seed"] = self.seed
        info["fractions"] = list(self.fractions)
        with open(filename, "w") as fh:
            json.dump(info, fh)

    @classmethod
    def from_json(cls, filename: Union[str, Path]) -> SplitPlan:
        with open(filename, "r") as fh:
            info = json.load(fh)
        return cls(
            member_ids=np.array(info["member_ids"]),
            auditor_train_ids=np.array(info["auditor_train_ids"]),
            nonmember_eval_ids=np.array(info["nonmember_eval_ids"]),
            public_pool_ids=np.array(info["public_pool_ids"]),
            seed=info["seed"],
            fractions=tuple(info["fractions"]),
        )


def make_splits(data: LabeledDataset, fractions: Sequence[float], seed: int) -> SplitPlan:
    """
    Seeded partition into member / auditor-train / nonmember-eval / public
    pools, stratified by subpopulation.

    :param fractions: four fractions in the order of ``SPLIT_NAMES``, summing
        to at most one. Samples beyond the sum stay unassigned.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 4 or min(fractions) < 0.0 or sum(fractions) > 1.0 + 1e-12:
        raise ConfigError(f"Need four non-negative fractions summing to <= 1, got {fractions}")
    rng = np.random.default_rng(seed)
    parts: List[List[np.ndarray]] = [[] for _ in SPLIT_NAMES]
    bounds_frac = np.concatenate([[0.0], np.cumsum(fractions)])
    for subpop in np.unique(data.subpop_ids):
        ids = data.sample_ids[data.subpop_ids == subpop]
        ids = ids[rng.permutation(len(ids))]
        bounds = np.round(bounds_frac * len(ids)).astype(int)
        for k in range(4):
            chunk = ids[bounds[k] : bounds[k + 1]]
            if fractions[k] > 0.0 and SPLIT_NAMES[k] in ("member", "public_pool") and len(chunk) == 0:
                raise SplitError(
                    f"Subpopulation {int(subpop)} with {len(ids)} samples is too small "
                    f"to stratify into the {SPLIT_NAMES[k]} split"
                )
            parts[k].append(chunk)
    arrays = [np.concatenate(p) if p else np.array([], dtype=np.int64) for p in parts]
    return SplitPlan(*arrays, seed=seed, fractions=fractions)


def _open_maybe_gzip(filename: Union[str, Path]) -> bytes:
    filename = Path(filename)
    opener = gzip.open if filename.suffix == ".gz" else open
    with opener(filename, "rb") as fh:
        return fh.read()


def _parse_idx(raw: bytes, magic: int, filename: Union[str, Path]) -> np.ndarray:
    if len(raw) < 8:
        raise DatasetFormatError(f"{filename} is truncated.")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise DatasetFormatError(f"{filename} has magic {found:#010x}, expected {magic:#010x}")
    n_dims = found & 0xFF
    header = 4 + 4 * n_dims
    if len(raw) < header:
        raise DatasetFormatError(f"{filename} is truncated.")
    dims = struct.unpack(f">{n_dims}I", raw[4:header])
    expected = int(np.prod(dims))
    if len(raw) - header < expected:
        raise DatasetFormatError(
            f"{filename} is truncated: {len(raw) - header} of {expected} bytes present"
        )
    return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=header).reshape(dims)


def kmeans_subpops(
    samples: np.ndarray, labels: np.ndarray, k: int = 10, iters: int = 20, seed: int = 0
) -> np.ndarray:
    """Subpopulation ids from per-class k-means (k-means++ init) in pixel space."""
    subpops = np.zeros(len(labels), dtype=np.int64)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        n_clusters = min(k, len(idx))
        km = KMeans(
            n_clusters=n_clusters, init="k-means++", n_init=1, max_iter=iters, random_state=seed
        )
        subpops[idx] = int(c) * k + km.fit_predict(samples[idx])
    return subpops


def load_idx(
    images_path: Union[str, Path],
    labels_path: Union[str, Path],
    k_per_class: int = 10,
    kmeans_iters: int = 20,
    seed: int = 0,
) -> LabeledDataset:
    """
    Read an MNIST-style IDX pair (optionally gzipped).

    Pixels are scaled by 1/255 and flattened; subpopulation ids come from
    :func:`kmeans_subpops`.
    """
    images = _parse_idx(_open_maybe_gzip(images_path), IDX_IMAGES_MAGIC, images_path)
    labels = _parse_idx(_open_maybe_gzip(labels_path), IDX_LABELS_MAGIC, labels_path)
    if images.shape[0] != labels.shape[0]:
        raise DatasetFormatError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    samples = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    labels = labels.astype(np.int64)
    n_classes = int(labels.max()) + 1 if len(labels) else 1
    return LabeledDataset(
        samples=samples,
        labels=labels,
        subpop_ids=kmeans_subpops(samples, labels, k_per_class, kmeans_iters, seed),
        sample_ids=np.arange(len(labels)),
        n_classes=n_classes,
    )


def save_mids(data: LabeledDataset, filename: Union[str, Path]) -> None:
    with open(filename, "wb") as fh:
        fh.write(MIDS_MAGIC)
        fh.write(struct.pack("<III", len(data), data.dim, data.n_classes))
        fh.write(np.ascontiguousarray(data.samples, dtype="<f8").tobytes())
        for arr in (data.labels, data.subpop_ids, data.sample_ids):
            fh.write(np.ascontiguousarray(arr, dtype="<i4").tobytes())


def load_mids(filename: Union[str, Path]) -> LabeledDataset:
    with open(filename, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MIDS_MAGIC:
        raise DatasetFormatError(f"{filename} is not a MIDS file.")
    if len(raw) < 16:
        raise DatasetFormatError(f"{filename} is truncated.")
    n, dim, n_classes = struct.unpack_from("<III", raw, 4)
    expected = 16 + 8 * n * dim + 3 * 4 * n
    if len(raw) != expected:
        raise DatasetFormatError(f"{filename} has {len(raw)} bytes, expected {expected}")
    offset = 16
    samples = np.frombuffer(raw, dtype="<f8", count=n * dim, offset=offset).reshape(n, dim)
    offset += 8 * n * dim
    columns = []
    for _ in range(3):
        columns.append(np.frombuffer(raw, dtype="<i4", count=n, offset=offset).astype(np.int64))
        offset += 4 * n
    return LabeledDataset(
        samples=samples.astype(np.float64),
        labels=columns[0],
        subpop_ids=columns[1],
        sample_ids=columns[2],
        n_classes=n_classes,
    )


def export_csv(data: LabeledDataset, filename: Union[str, Path]) -> None:
    frame = pd.DataFrame(
        data.samples, columns=[f"f{i}" for i in range(data.dim)]
    )
    frame.insert(0, "subpop", data.subpop_ids)
    frame.insert(0, "label", data.labels)
    frame.insert(0, "id", data.sample_ids)
    frame.to_csv(filename, index=False, float_format="%.17g")


def concatenate(datasets: List[LabeledDataset], n_classes: Optional[int] = None) -> LabeledDataset:
    return LabeledDataset(
        samples=np.vstack([d.samples for d in datasets]),
        labels=np.concatenate([d.labels for d in datasets]),
        subpop_ids=np.concatenate([d.subpop_ids for d in datasets]),
        sample_ids=np.concatenate([d.sample_ids for d in datasets]),
        n_classes=n_classes or max(d.n_classes for d in datasets),
    )
