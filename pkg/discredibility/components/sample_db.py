from __future__ import annotations

import json
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence

import numpy as np

from discredibility import DiscredibilityError
from discredibility.data import (
    LabeledDataset,
    SplitPlan,
    export_csv,
    gen_synthetic,
    load_idx,
    load_mids,
    make_splits,
    save_mids,
)
from .component import Component

if TYPE_CHECKING:
    from discredibility.project import Project


class SampleDataBase(Component):
    """
    Owns the experiment's dataset and split, and numbers every sample the
    experiment knows about. Crafted discrediting samples get fresh ids,
    numbered upwards from the largest id handed out so far, so ids never
    collide across stages.
    """

    print_color = "cyan"
    print_emoji = "card_index"

    def __init__(self, project: Project):
        super().__init__(project=project)
        self.registry_file = self.project.paths.sample_registry
        self.split_of: Dict[int, str] = {}
        self.next_id = 0
        self.tag_blocks: Dict[str, List[int]] = {}
        self._dataset: Optional[LabeledDataset] = None
        self._split: Optional[SplitPlan] = None
        if self.registry_file.exists():
            self._load()

    def _load(self) -> None:
        with open(self.registry_file, "r") as fh:
            info = json.load(fh)
        self.split_of = {int(k): v for k, v in info["split_of"].items()}
        self.next_id = int(info["next_id"])
        self.tag_blocks = info.get("tag_blocks", {})

    def _write(self) -> None:
        info = {
            "next_id": self.next_id,
            "tag_blocks": dict(sorted(self.tag_blocks.items())),
            "split_of": {str(k): v for k, v in sorted(self.split_of.items())},
        }
        with open(self.registry_file, "w") as fh:
            json.dump(info, fh)

    def create(self) -> LabeledDataset:
        """
        Generate or ingest the dataset described by the config, split it and
        write the dataset, its CSV export and the split to disk.
        """
        cfg = self.project.config
        if cfg.data.source == "synthetic":
            data = gen_synthetic(cfg.data.synth_config(seed=cfg.seed_for("data")))
        else:
            data = load_idx(
                cfg.data.images_path,
                cfg.data.labels_path,
                k_per_class=cfg.data.k_per_class,
                kmeans_iters=cfg.data.kmeans_iters,
                seed=cfg.seed_for("data"),
            )
        split = make_splits(data, cfg.data.split_fractions, seed=cfg.seed_for("split"))
        save_mids(data, self.project.paths.dataset_mids)
        export_csv(data, self.project.paths.dataset_csv)
        split.to_json(self.project.paths.split_json)
        self.register_split(split, len(data))
        self._dataset, self._split = data, split
        self.print(
            f"Dataset with {len(data)} samples of dim {data.dim}: "
            f"{len(split.member_ids)} members, {len(split.auditor_train_ids)} auditor, "
            f"{len(split.nonmember_eval_ids)} evaluation nonmembers, "
            f"{len(split.public_pool_ids)} public."
        )
        return data

    @property
    def dataset(self) -> LabeledDataset:
        if self._dataset is None:
            if not self.project.paths.dataset_mids.exists():
                raise DiscredibilityError(
                    f"No dataset at {self.project.paths.dataset_mids}. Run gen-data first."
                )
            self._dataset = load_mids(self.project.paths.dataset_mids)
        return self._dataset

    @property
    def split(self) -> SplitPlan:
        if self._split is None:
            if not self.project.paths.split_json.exists():
                raise DiscredibilityError(
                    f"No split at {self.project.paths.split_json}. Run gen-data first."
                )
            self._split = SplitPlan.from_json(self.project.paths.split_json)
        return self._split

    @property
    def shadow_pool_ids(self) -> np.ndarray:
        """Samples the auditor trains shadows on: its own data plus the candidates."""
        split = self.split
        return np.sort(
            np.concatenate([split.auditor_train_ids, split.member_ids, split.nonmember_eval_ids])
        )

    def register_split(self, split: SplitPlan, n_total: int) -> None:
        split_of = {i: "unassigned" for i in range(n_total)}
        split_of.update(split.split_of())
        self.split_of = split_of
        self.next_id = n_total
        self.tag_blocks = {}
        self._write()

    def reserve_ids(self, count: int, tag: str) -> np.ndarray:
        """
        Hand out ``count`` ids for crafted samples tagged ``tag``. A tag seen
        before gets its old block back when it still fits, so reruns number
        their samples identically.
        """
        for k in [k for k, v in self.split_of.items() if v == f"crafted:{tag}"]:
            del self.split_of[k]
        start, size = self.tag_blocks.get(tag, (-1, -1))
        if count > size:
            start, size = self.next_id, count
            self.next_id += count
        self.tag_blocks[tag] = [start, size]
        ids = np.arange(start, start + count, dtype=np.int64)
        for i in ids:
            self.split_of[int(i)] = f"crafted:{tag}"
        self._write()
        return ids

    def is_member(self, ids: Sequence[int]) -> np.ndarray:
        return np.array([self.split_of.get(int(i)) == "member" for i in ids], dtype=bool)
