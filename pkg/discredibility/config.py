from __future__ import annotations

import dataclasses
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import toml

from discredibility import ConfigError
from discredibility.data import SynthConfig
from discredibility.tinynn import TrainConfig

CONFIG_TEMPLATE = Path(__file__).parent / "file_templates" / "experiment_config.toml"
OUTPUT_ROOT_ENV = "DISCREDIBILITY_OUTPUT_ROOT"

ATTACK_IDS = ("gap", "shokri", "yeom", "watson", "carlini", "rezaei")
DISCREDIT_METHODS = ("search", "generate", "adversarial")


@dataclass(frozen=True)
class DataSettings:
    source: str = "synthetic"  # synthetic or idx
    classes: int = 2
    subpops_per_class: int = 8
    dim: int = 64
    cluster_spread: float = 0.1
    center_spread: float = 0.15
    samples_per_subpop: int = 625
    label_noise: float = 0.2

    images_path: str = ""
    labels_path: str = ""
    k_per_class: int = 10
    kmeans_iters: int = 20

    # member, auditor_train, nonmember_eval, public_pool
    split_fractions: List[float] = field(default_factory=lambda: [0.2, 0.3, 0.2, 0.3])

    def __post_init__(self):
        if self.source not in ("synthetic", "idx"):
            raise ConfigError(f"data.source must be 'synthetic' or 'idx', got {self.source!r}")
        if self.source == "idx" and not (self.images_path and self.labels_path):
            raise ConfigError("data.images_path and data.labels_path are required for idx data")

    def synth_config(self, seed: int) -> SynthConfig:
        return SynthConfig(
            classes=self.classes,
            subpops_per_class=self.subpops_per_class,
            dim=self.dim,
            cluster_spread=self.cluster_spread,
            center_spread=self.center_spread,
            samples_per_subpop=self.samples_per_subpop,
            seed=seed,
            label_noise=self.label_noise,
        )


@dataclass(frozen=True)
class ModelSettings:
    # Empty means: [64, 32] for synthetic data, [256, 128, 64, 32] for idx data.
    hidden_widths: List[int] = field(default_factory=list)
    learning_rate: float = 0.1
    decay_factor: float = 0.1
    decay_epochs: List[int] = field(default_factory=lambda: [200, 260])
    epochs: int = 300
    batch_size: int = 32

    generator_hidden: List[int] = field(default_factory=lambda: [128])
    generator_learning_rate: float = 0.05
    generator_epochs: int = 150
    generator_batch_size: int = 32

    def __post_init__(self):
        self.train_config(seed=0)
        self.generator_train_config(seed=0)

    def widths_for(self, source: str) -> List[int]:
        if self.hidden_widths:
            return list(self.hidden_widths)
        return [64, 32] if source == "synthetic" else [256, 128, 64, 32]

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            decay_factor=self.decay_factor,
            decay_epochs=tuple(self.decay_epochs),
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=seed,
        )

    def generator_train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.generator_learning_rate,
            decay_factor=1.0,
            decay_epochs=(),
            epochs=self.generator_epochs,
            batch_size=self.generator_batch_size,
            seed=seed,
        )


@dataclass(frozen=True)
class AttackSettings:
    attacks: List[str] = field(default_factory=lambda: ["gap", "yeom", "watson", "carlini"])
    n_shadows: int = 32
    carlini_variant: str = "offline"

    shokri_hidden: List[int] = field(default_factory=lambda: [64])
    shokri_epochs: int = 40
    shokri_per_class: bool = False

    rezaei_neighbor_source: str = "generator"  # generator or pool
    rezaei_probes: int = 16
    rezaei_min_probes: int = 4
    rezaei_sigma_factor: float = 0.1

    def __post_init__(self):
        unknown = set(self.attacks) - set(ATTACK_IDS)
        if unknown:
            raise ConfigError(f"Unknown attacks {sorted(unknown)}; choose from {ATTACK_IDS}")
        if self.carlini_variant not in ("online", "offline"):
            raise ConfigError("attack.carlini_variant must be 'online' or 'offline'")
        if self.rezaei_neighbor_source not in ("generator", "pool"):
            raise ConfigError("attack.rezaei_neighbor_source must be 'generator' or 'pool'")
        if self.n_shadows < 2:
            raise ConfigError("attack.n_shadows must be at least 2")

    @property
    def needs_shadows(self) -> bool:
        return bool({"shokri", "watson", "carlini"} & set(self.attacks))

    @property
    def needs_generator(self) -> bool:
        return "rezaei" in self.attacks and self.rezaei_neighbor_source == "generator"


@dataclass(frozen=True)
class DiscreditSettings:
    method: str = "search"
    n_c: int = 25
    n_n: int = 3
    distance: str = "cosine"

    noise_factor: float = 0.1  # sigma = noise_factor * median member latent norm

    pgd_step: float = 0.001
    pgd_iters: int = 100
    pgd_epsilon: float = 0.05
    epsilon_sweep: List[float] = field(default_factory=lambda: [0.01, 0.05])

    nc_sweep: List[int] = field(default_factory=lambda: [10, 25, 50, 100])
    nn_sweep: List[int] = field(default_factory=lambda: [1, 2, 3, 5])
    noise_mix: List[float] = field(default_factory=lambda: [0.02, 0.05, 0.1, 0.2, 0.5])
    hypothesis_members: int = 50
    target_fpr: float = 0.0001

    shift_contrast: float = 1.0

    def __post_init__(self):
        if self.method not in DISCREDIT_METHODS:
            raise ConfigError(f"discredit.method must be one of {DISCREDIT_METHODS}")
        if self.distance not in ("cosine", "euclidean"):
            raise ConfigError("discredit.distance must be 'cosine' or 'euclidean'")
        if self.n_c < 1 or self.n_n < 1:
            raise ConfigError("discredit.n_c and discredit.n_n must be >= 1")
        if self.pgd_step <= 0.0 or self.pgd_epsilon < 0.0:
            raise ConfigError("discredit.pgd_step must be > 0 and pgd_epsilon >= 0")
        if not 0.0 < self.shift_contrast <= 1.0:
            raise ConfigError("discredit.shift_contrast must be in (0, 1]")


@dataclass(frozen=True)
class JudgeSettings:
    attack: str = "watson"
    required_max_fpr: float = 0.01
    dismissal_ratio: float = 10.0

    def __post_init__(self):
        if self.attack not in ATTACK_IDS:
            raise ConfigError(f"judge.attack must be one of {ATTACK_IDS}")
        if self.required_max_fpr <= 0.0 or self.dismissal_ratio <= 0.0:
            raise ConfigError("judge.required_max_fpr and judge.dismissal_ratio must be > 0")


@dataclass(frozen=True)
class RunSettings:
    output_dir: str = "./discredibility_output"
    seed: int = 0
    workers: int = 0  # 0 uses every core
    render_plots: bool = False
    quiet: bool = False

    def __post_init__(self):
        if self.seed < 0:
            raise ConfigError("run.seed must be non-negative")


_SECTIONS = {
    "data": DataSettings,
    "model": ModelSettings,
    "attack": AttackSettings,
    "discredit": DiscreditSettings,
    "judge": JudgeSettings,
    "run": RunSettings,
}


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataSettings = field(default_factory=DataSettings)
    model: ModelSettings = field(default_factory=ModelSettings)
    attack: AttackSettings = field(default_factory=AttackSettings)
    discredit: DiscreditSettings = field(default_factory=DiscreditSettings)
    judge: JudgeSettings = field(default_factory=JudgeSettings)
    run: RunSettings = field(default_factory=RunSettings)

    @property
    def output_dir(self) -> Path:
        return Path(self.run.output_dir)

    def seed_for(self, purpose: str) -> int:
        """
        Stable sub-seed of the global seed, one per purpose.

        >>> ExperimentConfig().seed_for("victim") == ExperimentConfig().seed_for("victim")
        True
        """
        offsets = {
            "data": 0,
            "split": 1,
            "victim": 2,
            "shadows": 3,
            "generator": 4,
            "shokri": 5,
            "rezaei": 6,
            "discredit": 7,
            "judge": 8,
        }
        return self.run.seed * 1000 + offsets[purpose]

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {name: dataclasses.asdict(getattr(self, name)) for name in _SECTIONS}

    def dump(self, filename: Union[str, Path]) -> None:
        with open(filename, "w") as fh:
            toml.dump(self.to_dict(), fh)

    def replace(self, section: str, **changes) -> ExperimentConfig:
        return dataclasses.replace(
            self, **{section: dataclasses.replace(getattr(self, section), **changes)}
        )


def _parse_value(raw: str) -> Any:
    try:
        return toml.loads(f"value = {raw}")["value"]
    except toml.TomlDecodeError:
        return raw


def apply_overrides(raw: Dict[str, Dict[str, Any]], overrides: Sequence[str]) -> None:
    for override in overrides:
        if "=" not in override:
            raise ConfigError(f"Override {override!r} is not of the form key.sub=value")
        key, value = override.split("=", 1)
        path = key.strip().split(".")
        if len(path) != 2:
            raise ConfigError(f"Override key {key!r} must be section.field")
        raw.setdefault(path[0], {})[path[1]] = _parse_value(value.strip())


def build_config(raw: Dict[str, Dict[str, Any]]) -> ExperimentConfig:
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"Unknown config sections {sorted(unknown)}")
    sections = {}
    for name, cls in _SECTIONS.items():
        values = dict(raw.get(name, {}))
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(values) - known
        if extra:
            raise ConfigError(f"Unknown keys {sorted(extra)} in section [{name}]")
        try:
            sections[name] = cls(**values)
        except TypeError as e:
            raise ConfigError(f"Invalid section [{name}]: {e}") from e
    return ExperimentConfig(**sections)


def write_config_template(config_path: Union[str, Path]) -> None:
    shutil.copy(CONFIG_TEMPLATE, config_path)


def load_config(
    config_path: Optional[Union[str, Path]] = None,
    overrides: Sequence[str] = (),
) -> ExperimentConfig:
    """
    Read an experiment config toml, apply ``section.key=value`` overrides and
    the output root environment variable.

    :param config_path: path to the toml file. ``None`` uses defaults only.
    """
    raw: Dict[str, Dict[str, Any]] = {}
    if config_path is not None:
        config_path = Path(config_path)
        if not config_path.is_file():
            raise ConfigError(f"Config file {config_path} does not exist")
        try:
            raw = toml.load(config_path)
        except toml.TomlDecodeError as e:
            raise ConfigError(f"Could not parse {config_path}: {e}") from e
    apply_overrides(raw, overrides)
    if os.environ.get(OUTPUT_ROOT_ENV):
        raw.setdefault("run", {})["output_dir"] = os.environ[OUTPUT_ROOT_ENV]
    return build_config(raw)
