"""Declarative experiment configs: one YAML tree, validated in a single pass.

The schema mirrors the experiment structure section by section (model, data,
partition, attack, optim, fusion, schedule, run). Any subset may be given;
missing keys take the defaults below. Validation is total: every bad field in
the file is reported together, and no compute starts on an invalid config.

Numeric fields accept exact fraction strings such as "8/255" so attack radii
can be written the way they are usually quoted.
"""

import os
from dataclasses import dataclass, replace
from fractions import Fraction

import yaml

from .attack import AttackConfig
from .nn import ACTIVATIONS
from .optim import OPTIMIZER_KINDS, OptimizerConfig
from .schedule import EpochSchedule

DATA_SOURCES = ("synthetic", "csv")
PARTITION_KINDS = ("non_iid", "iid")
FUSION_KINDS = ("fedavg", "fedcurv")
ADV_EVAL_MODES = ("auto", "always", "zero", "off")

DEFAULTS: dict = {
    "model": {"hidden": [24, 16], "activation": "relu"},
    "data": {
        "source": "synthetic",
        "classes": 5,
        "per_class": 100,
        "input_dim": 10,
        "separation": 2.0,
        "noise": 0.1,
        "test_per_class": 40,
        "csv_path": None,
        "rescale": False,
        "holdout": 0.2,
    },
    "partition": {"kind": "non_iid", "clients": 5, "skew": 2.0},
    "attack": {"t_steps": 5, "epsilon": 0.1, "alpha": 0.03, "random_start": False},
    "optim": {
        "kind": "sgd_momentum",
        "learning_rate": 0.01,
        "momentum": 0.9,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps_hat": 1.0e-8,
        "batch_size": 32,
        "reset_per_round": True,
    },
    "fusion": {"kind": "fedavg", "lambda": 0.0},
    "schedule": {"fixed_e": 1, "e0": None, "gamma_e": None, "freq_e": None},
    "run": {
        "rounds": 10,
        "seed": 0,
        "natural_training": False,
        "eval_every": 1,
        "adv_eval": "auto",
        "svcca_every": 0,
        "svcca_layers": None,
        "checkpoint_every": 0,
    },
}


class ConfigError(ValueError):
    """One or more invalid config fields, all collected before raising."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid config: " + "; ".join(self.problems))


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple[int, ...]
    activation: str


@dataclass(frozen=True)
class DataConfig:
    source: str
    classes: int
    per_class: int
    input_dim: int
    separation: float
    noise: float
    test_per_class: int
    csv_path: str | None
    rescale: bool
    holdout: float


@dataclass(frozen=True)
class PartitionConfig:
    kind: str
    clients: int
    skew: float


@dataclass(frozen=True)
class FusionConfig:
    kind: str
    lam: float


@dataclass(frozen=True)
class RunConfig:
    rounds: int
    seed: int
    natural_training: bool
    eval_every: int
    adv_eval: str
    svcca_every: int
    svcca_layers: tuple[int, ...] | None
    checkpoint_every: int


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    data: DataConfig
    partition: PartitionConfig
    attack: AttackConfig
    optim: OptimizerConfig
    fusion: FusionConfig
    schedule: EpochSchedule
    run: RunConfig


def parse_number(value) -> float:
    """Float from a number or an exact fraction string like '8/255'."""
    if isinstance(value, bool):
        raise ValueError("expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return float(Fraction(value))
    raise ValueError(f"expected a number, got {value!r}")


class _Fields:
    """Typed accessors over one merged section, appending problems as it goes."""

    def __init__(self, section: str, values: dict, problems: list[str]):
        self.section = section
        self.values = values
        self.problems = problems

    def _fail(self, key: str, message: str):
        self.problems.append(f"{self.section}.{key}: {message}")

    def number(self, key: str, lo=None, hi=None, default=0.0) -> float:
        try:
            value = parse_number(self.values[key])
        except (ValueError, ZeroDivisionError) as exc:
            self._fail(key, str(exc))
            return default
        if lo is not None and value < lo:
            self._fail(key, f"must be >= {lo}, got {value}")
            return default
        if hi is not None and value > hi:
            self._fail(key, f"must be <= {hi}, got {value}")
            return default
        return value

    def integer(self, key: str, lo=None, default=1) -> int:
        value = self.values[key]
        if isinstance(value, bool) or not isinstance(value, int):
            self._fail(key, f"expected an integer, got {value!r}")
            return default
        if lo is not None and value < lo:
            self._fail(key, f"must be >= {lo}, got {value}")
            return default
        return value

    def flag(self, key: str, default=False) -> bool:
        value = self.values[key]
        if not isinstance(value, bool):
            self._fail(key, f"expected true/false, got {value!r}")
            return default
        return value

    def choice(self, key: str, options: tuple[str, ...]) -> str:
        value = self.values[key]
        if value not in options:
            self._fail(key, f"must be one of {', '.join(options)}, got {value!r}")
            return options[0]
        return value

    def text(self, key: str) -> str | None:
        value = self.values[key]
        if value is not None and not isinstance(value, str):
            self._fail(key, f"expected a string, got {value!r}")
            return None
        return value

    def int_list(self, key: str, lo=1, optional=False) -> tuple[int, ...] | None:
        value = self.values[key]
        if value is None and optional:
            return None
        if not isinstance(value, (list, tuple)) or any(
            isinstance(v, bool) or not isinstance(v, int) or (lo is not None and v < lo)
            for v in value
        ):
            self._fail(key, f"expected a list of integers >= {lo}, got {value!r}")
            return () if not optional else None
        return tuple(value)


def _merge(defaults: dict, user: dict, prefix: str, problems: list[str]) -> dict:
    out = {}
    for key, dval in defaults.items():
        if isinstance(dval, dict):
            sub = user.get(key) or {}
            if not isinstance(sub, dict):
                problems.append(f"{prefix}{key}: expected a mapping, got {sub!r}")
                sub = {}
            out[key] = _merge(dval, sub, f"{prefix}{key}.", problems)
        else:
            out[key] = user.get(key, dval)
    for key in user:
        if key not in defaults:
            problems.append(f"{prefix}{key}: unknown key")
    return out


def set_dotted(tree: dict, key: str, value) -> None:
    """Assign tree['a']['b'] = value for key 'a.b', creating mappings as needed."""
    parts = key.split(".")
    node = tree
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ValueError(f"{key}: {part} is not a mapping")
    node[parts[-1]] = value


def apply_overrides(tree: dict, pairs) -> None:
    """Apply KEY=VALUE override strings; values are parsed as YAML scalars."""
    problems = []
    for pair in pairs:
        key, sep, text = pair.partition("=")
        if not sep or not key:
            problems.append(f"override {pair!r}: expected KEY=VALUE")
            continue
        try:
            value = yaml.safe_load(text) if text else None
        except yaml.YAMLError:
            value = text
        try:
            set_dotted(tree, key.strip(), value)
        except ValueError as exc:
            problems.append(str(exc))
    if problems:
        raise ConfigError(problems)


def build_config(tree: dict, seed: int | None = None) -> ExperimentConfig:
    """Validate a raw config tree against the schema; raises ConfigError."""
    problems: list[str] = []
    merged = _merge(DEFAULTS, tree or {}, "", problems)

    f = _Fields("model", merged["model"], problems)
    model = ModelConfig(
        hidden=f.int_list("hidden") or (),
        activation=f.choice("activation", ACTIVATIONS),
    )

    f = _Fields("data", merged["data"], problems)
    source = f.choice("source", DATA_SOURCES)
    data = DataConfig(
        source=source,
        classes=f.integer("classes", lo=2),
        per_class=f.integer("per_class", lo=1),
        input_dim=f.integer("input_dim", lo=2),
        separation=f.number("separation", lo=0.0),
        noise=f.number("noise", lo=0.0),
        test_per_class=f.integer("test_per_class", lo=1),
        csv_path=f.text("csv_path"),
        rescale=f.flag("rescale"),
        holdout=f.number("holdout", lo=0.0, hi=1.0, default=0.2),
    )
    if source == "csv" and not data.csv_path:
        problems.append("data.csv_path: required when data.source is csv")
    if source == "csv" and not 0.0 < data.holdout < 1.0:
        problems.append(f"data.holdout: must be in (0, 1), got {data.holdout}")

    f = _Fields("partition", merged["partition"], problems)
    partition = PartitionConfig(
        kind=f.choice("kind", PARTITION_KINDS),
        clients=f.integer("clients", lo=1),
        skew=f.number("skew", lo=0.0),
    )
    if partition.kind == "non_iid":
        majority = 100.0 - (partition.clients - 1) * partition.skew
        if majority < partition.skew:
            problems.append(
                f"partition.skew: majority share {majority}% falls below the "
                f"minority share {partition.skew}%"
            )
        if source == "synthetic" and data.classes % partition.clients != 0:
            problems.append(
                f"partition.clients: class count {data.classes} must be divisible "
                f"by client count {partition.clients} for the non-iid split"
            )

    f = _Fields("attack", merged["attack"], problems)
    try:
        attack = AttackConfig(
            t_steps=f.integer("t_steps", lo=0, default=0),
            epsilon=f.number("epsilon", default=0.1),
            alpha=f.number("alpha", default=0.03),
            random_start=f.flag("random_start"),
        )
    except ValueError as exc:
        problems.append(f"attack: {exc}")
        attack = AttackConfig()

    f = _Fields("optim", merged["optim"], problems)
    try:
        optim = OptimizerConfig(
            kind=f.choice("kind", OPTIMIZER_KINDS),
            learning_rate=f.number("learning_rate", default=0.01),
            momentum=f.number("momentum", default=0.9),
            beta1=f.number("beta1", default=0.9),
            beta2=f.number("beta2", default=0.999),
            eps_hat=f.number("eps_hat", default=1e-8),
            batch_size=f.integer("batch_size", lo=1, default=32),
            reset_per_round=f.flag("reset_per_round", default=True),
        )
    except ValueError as exc:
        problems.append(f"optim: {exc}")
        optim = OptimizerConfig()

    f = _Fields("fusion", merged["fusion"], problems)
    fusion = FusionConfig(
        kind=f.choice("kind", FUSION_KINDS),
        lam=f.number("lambda", lo=0.0),
    )

    schedule = _build_schedule(merged["schedule"], problems)

    f = _Fields("run", merged["run"], problems)
    run = RunConfig(
        rounds=f.integer("rounds", lo=1),
        seed=f.integer("seed", lo=0, default=0),
        natural_training=f.flag("natural_training"),
        eval_every=f.integer("eval_every", lo=0, default=1),
        adv_eval=f.choice("adv_eval", ADV_EVAL_MODES),
        svcca_every=f.integer("svcca_every", lo=0, default=0),
        svcca_layers=f.int_list("svcca_layers", optional=True),
        checkpoint_every=f.integer("checkpoint_every", lo=0, default=0),
    )
    if seed is not None:
        if seed < 0:
            problems.append(f"run.seed: must be >= 0, got {seed}")
        else:
            run = replace(run, seed=int(seed))

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(
        model=model, data=data, partition=partition, attack=attack,
        optim=optim, fusion=fusion, schedule=schedule, run=run,
    )


def _build_schedule(values: dict, problems: list[str]) -> EpochSchedule:
    # A partially given decay triple is a config mistake, not a fallback case.
    triple = {k: values[k] for k in ("e0", "gamma_e", "freq_e")}
    given = [k for k, v in triple.items() if v is not None]
    f = _Fields("schedule", values, problems)
    if given and len(given) < 3:
        missing = [k for k in triple if triple[k] is None]
        problems.append(f"schedule: decay schedule needs {', '.join(missing)} as well")
        return EpochSchedule.fixed(1)
    try:
        if given:
            return EpochSchedule(
                e0=f.integer("e0", lo=1, default=1),
                gamma=f.number("gamma_e", default=1.0),
                freq=f.integer("freq_e", lo=1, default=1),
            )
        return EpochSchedule.fixed(f.integer("fixed_e", lo=1, default=1))
    except ValueError as exc:
        problems.append(f"schedule: {exc}")
        return EpochSchedule.fixed(1)


def load_config(path, overrides=(), seed: int | None = None) -> ExperimentConfig:
    """Read, override and validate a YAML config file."""
    if not os.path.isfile(path):
        raise ConfigError([f"config file not found: {path}"])
    with open(path) as fh:
        try:
            tree = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError([f"{path}: not valid YAML ({exc})"]) from exc
    if tree is None:
        tree = {}
    if not isinstance(tree, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    if overrides:
        apply_overrides(tree, overrides)
    return build_config(tree, seed=seed)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Resolved config as a plain tree, suitable for echoing next to results."""
    sched = cfg.schedule
    if sched.is_fixed and sched.freq == 1:
        schedule = {"fixed_e": sched.e0, "e0": None, "gamma_e": None, "freq_e": None}
    else:
        schedule = {"fixed_e": None, "e0": sched.e0, "gamma_e": sched.gamma, "freq_e": sched.freq}
    return {
        "model": {"hidden": list(cfg.model.hidden), "activation": cfg.model.activation},
        "data": {
            "source": cfg.data.source,
            "classes": cfg.data.classes,
            "per_class": cfg.data.per_class,
            "input_dim": cfg.data.input_dim,
            "separation": cfg.data.separation,
            "noise": cfg.data.noise,
            "test_per_class": cfg.data.test_per_class,
            "csv_path": cfg.data.csv_path,
            "rescale": cfg.data.rescale,
            "holdout": cfg.data.holdout,
        },
        "partition": {
            "kind": cfg.partition.kind,
            "clients": cfg.partition.clients,
            "skew": cfg.partition.skew,
        },
        "attack": {
            "t_steps": cfg.attack.t_steps,
            "epsilon": cfg.attack.epsilon,
            "alpha": cfg.attack.alpha,
            "random_start": cfg.attack.random_start,
        },
        "optim": {
            "kind": cfg.optim.kind,
            "learning_rate": cfg.optim.learning_rate,
            "momentum": cfg.optim.momentum,
            "beta1": cfg.optim.beta1,
            "beta2": cfg.optim.beta2,
            "eps_hat": cfg.optim.eps_hat,
            "batch_size": cfg.optim.batch_size,
            "reset_per_round": cfg.optim.reset_per_round,
        },
        "fusion": {"kind": cfg.fusion.kind, "lambda": cfg.fusion.lam},
        "schedule": schedule,
        "run": {
            "rounds": cfg.run.rounds,
            "seed": cfg.run.seed,
            "natural_training": cfg.run.natural_training,
            "eval_every": cfg.run.eval_every,
            "adv_eval": cfg.run.adv_eval,
            "svcca_every": cfg.run.svcca_every,
            "svcca_layers": list(cfg.run.svcca_layers) if cfg.run.svcca_layers else None,
            "checkpoint_every": cfg.run.checkpoint_every,
        },
    }
