"""Experiment configuration, read from JSON.

Schema (every key optional; defaults shown)::

    {
      "nfp": {"kind": "robot_arm", "segment_lengths": [0.5, 0.5, 1.0],
              "base_std": 0.25, "angle_std": 0.5,
              "box": [[-1, -3.14159, -3.14159, -3.14159], [1, 3.14159, 3.14159, 3.14159]]},
      "corruption": {"noise_regions": [[[[dim, [lo, hi]], ...], std], ...],
                     "sparse_regions": [[[dim, [lo, hi]], ...], ...]},
      "n_samples": 5000,
      "surrogate": {"hidden": [128, 128, 128], "activation": "relu",
                    "train": {"learning_rate": 0.003, "epochs": 150, "batch_size": 128}},
      "ensemble": {"n_members": 10, "mean_hidden": [64, 64], "var_hidden": [32, 32],
                   "var_activation": "tanh", "roster": null,
                   "stage1": {"learning_rate": 0.003, "epochs": 150},
                   "stage2": {"learning_rate": 0.003, "epochs": 60},
                   "finetune_lr_factor": 0.1},
      "inversion": {"step_size": 0.01, "max_iters": 500, "restarts": 10,
                    "optimizer": "adam", "init": "uniform",
                    "boundary_weight": 0.0, "select": "surrogate_error"},
      "tandem": {"hidden": [64, 64], "activation": "relu",
                 "train": {"learning_rate": 0.001, "epochs": 50, "batch_size": 128}},
      "sweep": {"coarse": [[0.1, 1], [1, 10], [10, 100]], "refine_steps": 2,
                "validation_fraction": 0.1},
      "weights": null,
      "methods": ["na", "na-ensemble", "uana", "tandem", "ua-tandem"],
      "method_seeds": 5,
      "target_count": 112,
      "repeat_count": 3,
      "seed": 0,
      "output": {"dir": "results"}
    }

Region intervals use ``null`` for an open end. ``weights`` fixes the
``[alpha, beta]`` pair for the uncertainty-aware methods and skips the sweep.
``init`` is ``"uniform"`` (training-data box), ``"gaussian"`` (data mean and
spread) or a list giving a fixed raw design.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..ensemble import EnsembleTrainConfig, UncertaintyWeights
from ..nfp import NO_CORRUPTION, CorruptionSpec, RobotArm, nfp_from_dict, nfp_to_dict
from ..nn import TrainConfig

METHODS = ("na", "na-ensemble", "uana", "tandem", "ua-tandem")
UNCERTAINTY_METHODS = ("uana", "ua-tandem")


def _train(d, base):
    if d is None:
        return base
    if isinstance(d, TrainConfig):
        return d
    return replace(base, **d)


@dataclass(frozen=True)
class SurrogateSpec:
    hidden: tuple = (128, 128, 128)
    activation: str = "relu"
    train: TrainConfig = field(default_factory=lambda: TrainConfig(3e-3, 150, 128))

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "train", _train(self.train, TrainConfig(3e-3, 150, 128)))


@dataclass(frozen=True)
class InversionSpec:
    step_size: float = 0.01
    max_iters: int = 500
    restarts: int = 10
    optimizer: str = "adam"
    init: object = "uniform"
    boundary_weight: float = 0.0
    select: str = "surrogate_error"

    def __post_init__(self):
        if isinstance(self.init, list):
            object.__setattr__(self, "init", tuple(float(v) for v in self.init))
        elif self.init not in ("uniform", "gaussian") and not isinstance(self.init, tuple):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class TandemSpec:
    hidden: tuple = (64, 64)
    activation: str = "relu"
    train: TrainConfig = field(default_factory=lambda: TrainConfig(1e-3, 50, 128))

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "train", _train(self.train, TrainConfig(1e-3, 50, 128)))


@dataclass(frozen=True)
class SweepGrid:
    coarse: tuple = ((0.1, 1.0), (1.0, 10.0), (10.0, 100.0))
    refine_steps: int = 2
    validation_fraction: float = 0.1

    def __post_init__(self):
        pairs = tuple(UncertaintyWeights(*p) for p in self.coarse)  # validates
        if not pairs:
            raise ValueError("sweep needs at least one coarse pair")
        object.__setattr__(self, "coarse", tuple((w.alpha, w.beta) for w in pairs))
        if self.refine_steps < 0:
            raise ValueError("refine_steps must be >= 0")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")

    @property
    def budget(self):
        return len(self.coarse) + self.refine_steps


def _ensemble_spec(d):
    if isinstance(d, EnsembleTrainConfig):
        return d, None
    d = dict(d or {})
    roster = d.pop("roster", None)
    base = EnsembleTrainConfig(stage2=TrainConfig(3e-3, 60))
    for key in ("stage1", "stage2"):
        if key in d:
            d[key] = _train(d[key], getattr(base, key))
    return replace(base, **d), (tuple(roster) if roster else None)


@dataclass(frozen=True)
class ExperimentConfig:
    nfp: object = field(default_factory=lambda: RobotArm(angle_std=0.5))
    corruption: CorruptionSpec = NO_CORRUPTION
    n_samples: int = 5000
    surrogate: SurrogateSpec = field(default_factory=SurrogateSpec)
    ensemble: EnsembleTrainConfig = field(default_factory=lambda: EnsembleTrainConfig(stage2=TrainConfig(3e-3, 60)))
    roster: tuple | None = None
    inversion: InversionSpec = field(default_factory=InversionSpec)
    tandem: TandemSpec = field(default_factory=TandemSpec)
    sweep: SweepGrid = field(default_factory=SweepGrid)
    weights: tuple | None = None
    methods: tuple = METHODS
    method_seeds: int = 5
    target_count: int = 112
    repeat_count: int = 3
    seed: int = 0
    output: dict = field(default_factory=lambda: {"dir": "results"})

    def __post_init__(self):
        if self.repeat_count < 1:
            raise ValueError("repeat_count must be >= 1")
        if self.target_count < 1:
            raise ValueError("target_count must be >= 1")
        if self.method_seeds < 1:
            raise ValueError("method_seeds must be >= 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        methods = tuple(self.methods)
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {METHODS}")
        object.__setattr__(self, "methods", methods)
        if self.weights is not None:
            w = UncertaintyWeights(*self.weights)
            object.__setattr__(self, "weights", (w.alpha, w.beta))

    @property
    def validation_count(self):
        """Targets held out for tuning: ``max(1, floor(fraction * target_count))``."""
        if self.target_count < 2:
            return 0
        return max(1, math.floor(self.sweep.validation_fraction * self.target_count))

    @property
    def test_count(self):
        return self.target_count - self.validation_count

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        kw = {}
        if "nfp" in d:
            nfp = dict(d["nfp"])
            nfp.setdefault("kind", "robot_arm")
            if nfp["kind"] == "robot_arm":
                nfp.setdefault("angle_std", 0.5)
            kw["nfp"] = nfp_from_dict(nfp)
        if "corruption" in d:
            kw["corruption"] = CorruptionSpec.from_dict(d["corruption"] or {})
        if "ensemble" in d:
            kw["ensemble"], roster = _ensemble_spec(d["ensemble"])
            if roster is not None:
                kw["roster"] = roster
        for key, typ in (("surrogate", SurrogateSpec), ("inversion", InversionSpec), ("tandem", TandemSpec), ("sweep", SweepGrid)):
            if key in d:
                kw[key] = typ(**d[key])
        for key in ("n_samples", "method_seeds", "target_count", "repeat_count", "seed"):
            if key in d:
                kw[key] = int(d[key])
        if d.get("weights") is not None:
            kw["weights"] = tuple(d["weights"])
        if "methods" in d:
            kw["methods"] = tuple(d["methods"])
        if "output" in d:
            kw["output"] = dict(d["output"])
        if "roster" in d and d["roster"] is not None:
            kw["roster"] = tuple(d["roster"])
        return cls(**kw)

    def to_dict(self):
        ens = asdict(self.ensemble)
        ens["roster"] = list(self.roster) if self.roster else None
        ens.pop("seed", None)
        return {
            "nfp": nfp_to_dict(self.nfp),
            "corruption": self.corruption.to_dict(),
            "n_samples": self.n_samples,
            "surrogate": asdict(self.surrogate),
            "ensemble": ens,
            "inversion": asdict(self.inversion),
            "tandem": asdict(self.tandem),
            "sweep": asdict(self.sweep),
            "weights": list(self.weights) if self.weights else None,
            "methods": list(self.methods),
            "method_seeds": self.method_seeds,
            "target_count": self.target_count,
            "repeat_count": self.repeat_count,
            "seed": self.seed,
            "output": dict(self.output),
        }


def load_config(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(doc)
