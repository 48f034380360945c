"""Run configuration: flat dotted-key text files plus command-line overrides.

Format: one `key = value` per line, `#` starts a comment, keys are flat (no
sections). Every key has a default, so the empty file is a valid desk-scale
configuration. Unknown keys are rejected; validation collects every problem
before raising, so a bad file reports all of its issues at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .demand import DemandParams
from .errors import ConfigError
from .world import EnvParams

# combo code: first letter = assignment policy, second = routing policy
# (h = heuristic, l = learned, p = pretrained/frozen)
VALID_COMBOS = ("hh", "lh", "hl", "ll", "pl")

COMBO_LABELS = {
    "hh": "heuristic assignment + heuristic routing",
    "lh": "learned assignment + heuristic routing",
    "hl": "heuristic assignment + learned routing",
    "ll": "learned assignment + learned routing",
    "pl": "frozen pretrained assignment + learned routing",
}


@dataclass
class EpsilonSchedule:
    start: float = 1.0
    decay: float = 0.999  # multiplicative, per episode
    floor: float = 0.01

    def value(self, episode: int) -> float:
        return max(self.floor, self.start * self.decay**episode)


@dataclass
class NetParams:
    learning_rate: float = 0.001
    batch_size: int = 512
    buffer_capacity: int = 100_000
    steps_per_wave: int = 4
    c2s_hidden: tuple[int, ...] = (76, 38)
    vrp_hidden: tuple[int, ...] = (128, 64, 32, 8)


@dataclass
class GaeParams:
    hidden: int = 16
    graphs: int = 100      # rollout graphs in the offline buffer
    epochs: int = 60
    learning_rate: float = 0.01


@dataclass
class RunConfig:
    combo: str = "hh"
    discount: float = 0.9
    transport_weight: float = 1.0
    utilization_weight: float = 1.0
    train_episodes: int = 200
    train_seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    eval_episodes: int = 20
    eval_seeds: tuple[int, ...] = (100, 101, 102)
    eval_quadrant_weights: tuple[float, ...] = (0.4, 0.4, 0.1, 0.1)
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    env: EnvParams = field(default_factory=EnvParams)
    demand: DemandParams = field(default_factory=DemandParams)
    net: NetParams = field(default_factory=NetParams)
    gae: GaeParams = field(default_factory=GaeParams)
    output_dir: str = "runs"
    figures: bool = True

    def eval_demand(self) -> DemandParams:
        return replace(self.demand, quadrant_weights=self.eval_quadrant_weights)


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(p.strip()) for p in text.split(",") if p.strip())


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(p.strip()) for p in text.split(",") if p.strip())


# key -> (setter path, parser); paths address RunConfig attributes
SCHEMA: dict[str, tuple[tuple[str, ...], object]] = {
    "combo": (("combo",), str),
    "discount": (("discount",), float),
    "transport_weight": (("transport_weight",), float),
    "utilization_weight": (("utilization_weight",), float),
    "train.episodes": (("train_episodes",), int),
    "train.seeds": (("train_seeds",), _parse_int_list),
    "eval.episodes": (("eval_episodes",), int),
    "eval.seeds": (("eval_seeds",), _parse_int_list),
    "eval.quadrant_weights": (("eval_quadrant_weights",), _parse_float_list),
    "epsilon.start": (("epsilon", "start"), float),
    "epsilon.decay": (("epsilon", "decay"), float),
    "epsilon.floor": (("epsilon", "floor"), float),
    "env.warehouse_count": (("env", "warehouse_count"), int),
    "env.episode_length": (("env", "episode_length"), float),
    "env.wave_period": (("env", "wave_period"), float),
    "env.restock_halves": (("env", "restock_halves"), _parse_bool),
    "env.vehicle_capacity": (("env", "vehicle_capacity"), int),
    "env.vehicle_speed": (("env", "vehicle_speed"), float),
    "env.service_time": (("env", "service_time"), float),
    "env.max_inventory": (("env", "max_inventory"), int),
    "demand.count_low": (("demand", "count_low"), int),
    "demand.count_high": (("demand", "count_high"), int),
    "demand.quantity_low": (("demand", "quantity_low"), int),
    "demand.quantity_high": (("demand", "quantity_high"), int),
    "demand.open_frac_low": (("demand", "open_frac_low"), float),
    "demand.open_frac_high": (("demand", "open_frac_high"), float),
    "demand.width_frac_low": (("demand", "width_frac_low"), float),
    "demand.width_frac_high": (("demand", "width_frac_high"), float),
    "demand.quadrant_weights": (("demand", "quadrant_weights"), _parse_float_list),
    "net.learning_rate": (("net", "learning_rate"), float),
    "net.batch_size": (("net", "batch_size"), int),
    "net.buffer_capacity": (("net", "buffer_capacity"), int),
    "net.steps_per_wave": (("net", "steps_per_wave"), int),
    "net.c2s_hidden": (("net", "c2s_hidden"), _parse_int_list),
    "net.vrp_hidden": (("net", "vrp_hidden"), _parse_int_list),
    "gae.hidden": (("gae", "hidden"), int),
    "gae.graphs": (("gae", "graphs"), int),
    "gae.epochs": (("gae", "epochs"), int),
    "gae.learning_rate": (("gae", "learning_rate"), float),
    "output.dir": (("output_dir",), str),
    "output.figures": (("figures",), _parse_bool),
}


def _assign(cfg: RunConfig, path: tuple[str, ...], value) -> None:
    target = cfg
    for attr in path[:-1]:
        target = getattr(target, attr)
    setattr(target, path[-1], value)


def _read_pairs(path: str) -> list[tuple[int, str, str]]:
    pairs = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError([f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}"])
            key, value = line.split("=", 1)
            pairs.append((lineno, key.strip(), value.strip()))
    return pairs


def parse_config(path: str | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Build a RunConfig from an optional file plus key=value overrides."""
    cfg = RunConfig()
    problems: list[str] = []
    entries: list[tuple[str, str, str]] = []
    if path is not None:
        entries.extend((f"{path}:{n}", k, v) for n, k, v in _read_pairs(path))
    for key, value in (overrides or {}).items():
        entries.append(("override", key, value))

    for where, key, value in entries:
        spec = SCHEMA.get(key)
        if spec is None:
            problems.append(f"{where}: unknown key {key!r}")
            continue
        target_path, parser = spec
        try:
            _assign(cfg, target_path, parser(value))
        except (ValueError, TypeError) as exc:
            problems.append(f"{where}: bad value for {key}: {exc}")

    problems.extend(validate(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def validate(cfg: RunConfig) -> list[str]:
    problems = []
    if cfg.combo not in VALID_COMBOS:
        problems.append(f"combo must be one of {VALID_COMBOS}, got {cfg.combo!r}")
    if not 0.0 <= cfg.discount <= 1.0:
        problems.append(f"discount must be in [0, 1], got {cfg.discount}")
    if cfg.train_episodes < 1:
        problems.append(f"train.episodes must be >= 1, got {cfg.train_episodes}")
    if cfg.eval_episodes < 1:
        problems.append(f"eval.episodes must be >= 1, got {cfg.eval_episodes}")
    if not cfg.train_seeds:
        problems.append("train.seeds must not be empty")
    if not cfg.eval_seeds:
        problems.append("eval.seeds must not be empty")
    if any(s < 0 for s in cfg.train_seeds + cfg.eval_seeds):
        problems.append("seeds must be non-negative")
    if not 0.0 <= cfg.epsilon.floor <= cfg.epsilon.start <= 1.0:
        problems.append("epsilon must satisfy 0 <= floor <= start <= 1")
    if not 0.0 < cfg.epsilon.decay <= 1.0:
        problems.append(f"epsilon.decay must be in (0, 1], got {cfg.epsilon.decay}")
    if cfg.net.batch_size < 1 or cfg.net.buffer_capacity < cfg.net.batch_size:
        problems.append("net buffer must hold at least one batch")
    if cfg.net.learning_rate <= 0 or cfg.gae.learning_rate <= 0:
        problems.append("learning rates must be positive")
    if cfg.net.steps_per_wave < 0:
        problems.append("net.steps_per_wave must be >= 0")
    if any(h < 1 for h in cfg.net.c2s_hidden + cfg.net.vrp_hidden) or cfg.gae.hidden < 1:
        problems.append("hidden layer sizes must be positive")
    if cfg.gae.graphs < 1 or cfg.gae.epochs < 1:
        problems.append("gae.graphs and gae.epochs must be >= 1")
    problems.extend(cfg.env.validate())
    problems.extend(cfg.demand.validate())
    if len(cfg.eval_quadrant_weights) != 4:
        problems.append("eval.quadrant_weights needs 4 entries")
    elif abs(sum(cfg.eval_quadrant_weights) - 1.0) > 1e-9 or any(w < 0 for w in cfg.eval_quadrant_weights):
        problems.append("eval.quadrant_weights must be non-negative and sum to 1")
    return problems


def config_keys_doc() -> str:
    """Key listing for the CLI help path."""
    return "\n".join(sorted(SCHEMA))
