"""Training and evaluation pipelines over the five policy combos.

Artifacts land in the configured output directory:
  curves_<combo>_<seed>.csv   per-episode training metrics, one file per seed
  eval_<combo>.csv            per-episode greedy evaluation metrics
  world_dump_<episode>.csv    final order table of one episode
  c2s_<combo>_<seed>.tensors  assignment-net checkpoint
  vrp_<combo>_<seed>.tensors  routing-net checkpoint
  gae.tensors                 graph-encoder checkpoint (combo independent)
plus rendered figures next to the CSVs when figures are enabled.

Everything is seed-deterministic: rerunning any pipeline with the same config
reproduces the artifact bytes.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import figures
from .config import RunConfig
from .demand import DemandParams
from .episode import AgentBundle, make_agents, run_episode
from .errors import ConfigError, InvariantViolation
from .gae import GraphEncoder, GraphSnapshot, edge_auc, train_encoder
from .metrics import CURVE_COLUMNS, TRIP_COLUMNS, export_csv, trip_rows
from .nets import DenseNet
from .oracle import heuristic_solution, random_instance, brute_force, total_cost, validate
from .rng import substream
from .world import DUMP_COLUMNS, dump_orders

# dedicated seeds for the offline graph buffer, away from the default
# train (0..4) and eval (100..102) ranges
GAE_TRAIN_SEED = 900
GAE_HOLDOUT_SEED = 901


def _outdir(cfg: RunConfig) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def curves_path(cfg: RunConfig, combo: str, seed: int) -> Path:
    return _outdir(cfg) / f"curves_{combo}_{seed}.csv"


def eval_path(cfg: RunConfig, combo: str) -> Path:
    return _outdir(cfg) / f"eval_{combo}.csv"


def checkpoint_path(cfg: RunConfig, kind: str, combo: str, seed: int) -> Path:
    return _outdir(cfg) / f"{kind}_{combo}_{seed}.tensors"


def gae_path(cfg: RunConfig) -> Path:
    return _outdir(cfg) / "gae.tensors"


# ----- graph encoder -----

@dataclass
class GaeResult:
    path: Path
    history: list[float]      # per-epoch mean reconstruction loss
    holdout_auc: float
    encoder: GraphEncoder


def collect_graph_buffer(cfg: RunConfig, count: int, seed: int,
                         demand: DemandParams | None = None) -> list[GraphSnapshot]:
    """Wave graphs harvested from heuristic-only rollouts (one per decide step)."""
    graphs: list[GraphSnapshot] = []
    episode = 0
    while len(graphs) < count:
        agents = AgentBundle(c2s_kind="h", vrp_kind="h")
        result = run_episode(cfg, agents, seed, episode, mode="eval",
                             demand_params=demand, collect_graphs=True)
        graphs.extend(result.graphs)
        episode += 1
    return graphs[:count]


def train_gae(cfg: RunConfig) -> GaeResult:
    """Train the graph encoder offline on a frozen rollout buffer, then save it."""
    buffer = collect_graph_buffer(cfg, cfg.gae.graphs, GAE_TRAIN_SEED)
    encoder = GraphEncoder(cfg.gae.hidden, rng=substream(GAE_TRAIN_SEED, "init", "gae"))
    history = train_encoder(encoder, buffer, cfg.gae.epochs, cfg.gae.learning_rate,
                            rng=substream(GAE_TRAIN_SEED, "gae.pairs"))
    holdout = collect_graph_buffer(cfg, max(10, cfg.gae.graphs // 5), GAE_HOLDOUT_SEED)
    auc = edge_auc(encoder, holdout, rng=substream(GAE_HOLDOUT_SEED, "gae.pairs"))

    path = gae_path(cfg)
    encoder.save(str(path))
    rows = [{"epoch": i, "loss": loss} for i, loss in enumerate(history)]
    export_csv(rows, str(_outdir(cfg) / "gae_history.csv"), ["epoch", "loss"])
    if cfg.figures:
        figures.gae_history(history, auc, str(_outdir(cfg) / "gae_history.png"))
    return GaeResult(path=path, history=history, holdout_auc=auc, encoder=encoder)


def ensure_encoder(cfg: RunConfig) -> GraphEncoder:
    """Load the saved graph encoder, training one first when none exists."""
    path = gae_path(cfg)
    if path.exists():
        return GraphEncoder.load(str(path))
    return train_gae(cfg).encoder


# ----- training -----

@dataclass
class TrainedSeed:
    seed: int
    curves_path: Path
    rows: list[dict]
    c2s_path: Path | None = None
    vrp_path: Path | None = None
    c2s_digest: str | None = None
    vrp_digest: str | None = None
    frozen_c2s_before: str | None = None  # pl only: digest entering phase 2


@dataclass
class TrainResult:
    combo: str
    seeds: list[TrainedSeed] = field(default_factory=list)
    encoder_path: Path | None = None
    phase_one: "TrainResult | None" = None  # pl only


def _train_seed(cfg: RunConfig, combo: str, agents: AgentBundle, seed: int) -> TrainedSeed:
    rows = []
    for episode in range(cfg.train_episodes):
        epsilon = cfg.epsilon.value(episode)
        result = run_episode(cfg, agents, seed, episode, mode="train", epsilon=epsilon)
        rows.append(result.metrics.to_row())
    path = curves_path(cfg, combo, seed)
    export_csv(rows, str(path), CURVE_COLUMNS)

    trained = TrainedSeed(seed=seed, curves_path=path, rows=rows)
    if agents.trains_c2s():
        trained.c2s_path = checkpoint_path(cfg, "c2s", combo, seed)
        agents.c2s_net.save(str(trained.c2s_path))
        trained.c2s_digest = agents.c2s_net.params_digest()
    if agents.trains_vrp():
        trained.vrp_path = checkpoint_path(cfg, "vrp", combo, seed)
        agents.vrp_net.save(str(trained.vrp_path))
        trained.vrp_digest = agents.vrp_net.params_digest()
    return trained


def train(cfg: RunConfig) -> TrainResult:
    """Train the configured combo across all train seeds; returns artifact paths."""
    combo = cfg.combo
    if combo == "hh":
        raise ConfigError(["combo hh has no learnable component; nothing to train"])
    if combo == "pl":
        return train_two_phase(cfg)

    encoder = ensure_encoder(cfg) if combo[0] == "l" else None
    result = TrainResult(combo=combo, encoder_path=gae_path(cfg) if encoder else None)
    for seed in cfg.train_seeds:
        agents = make_agents(cfg, combo, seed, encoder)
        result.seeds.append(_train_seed(cfg, combo, agents, seed))
    if cfg.figures:
        rows = [row for trained in result.seeds for row in trained.rows]
        figures.learning_curves(rows, combo, str(_outdir(cfg) / f"curves_{combo}.png"))
    return result


def train_two_phase(cfg: RunConfig) -> TrainResult:
    """Phase 1 trains assignment with heuristic routing; phase 2 freezes it and
    trains routing. The frozen net must come out of phase 2 bit-identical."""
    phase_one = train(replace(cfg, combo="lh"))
    encoder = ensure_encoder(cfg)

    result = TrainResult(combo="pl", encoder_path=gae_path(cfg), phase_one=phase_one)
    for trained_lh in phase_one.seeds:
        seed = trained_lh.seed
        agents = make_agents(cfg, "pl", seed, encoder)
        agents.c2s_net = DenseNet.load(str(trained_lh.c2s_path))
        before = agents.c2s_net.params_digest()

        trained = _train_seed(cfg, "pl", agents, seed)
        trained.frozen_c2s_before = before
        trained.c2s_digest = agents.c2s_net.params_digest()
        if trained.c2s_digest != before:
            raise InvariantViolation(f"frozen assignment net changed during phase 2 (seed {seed})")
        trained.c2s_path = checkpoint_path(cfg, "c2s", "pl", seed)
        agents.c2s_net.save(str(trained.c2s_path))
        result.seeds.append(trained)
    if cfg.figures:
        rows = [row for trained in result.seeds for row in trained.rows]
        figures.learning_curves(rows, "pl", str(_outdir(cfg) / "curves_pl.png"))
    return result


# ----- evaluation -----

@dataclass
class EvalResult:
    combo: str
    path: Path
    rows: list[dict]
    means: dict[str, float]


def load_agents(cfg: RunConfig, combo: str, checkpoint_seed: int | None = None) -> AgentBundle:
    """Agent bundle with trained components loaded from checkpoints."""
    seed = cfg.train_seeds[0] if checkpoint_seed is None else checkpoint_seed
    bundle = AgentBundle(c2s_kind=combo[0], vrp_kind=combo[1])
    missing: list[str] = []

    if combo[0] in ("l", "p"):
        path = gae_path(cfg)
        if path.exists():
            bundle.encoder = GraphEncoder.load(str(path))
        else:
            missing.append(str(path))
        c2s = checkpoint_path(cfg, "c2s", combo, seed)
        if c2s.exists():
            bundle.c2s_net = DenseNet.load(str(c2s))
        else:
            missing.append(str(c2s))
    if combo[1] == "l":
        vrp = checkpoint_path(cfg, "vrp", combo, seed)
        if vrp.exists():
            bundle.vrp_net = DenseNet.load(str(vrp))
        else:
            missing.append(str(vrp))
    if missing:
        raise ConfigError([f"missing checkpoint {p} (train combo {combo} first)" for p in missing])
    return bundle


def evaluate(cfg: RunConfig, checkpoint_seed: int | None = None) -> EvalResult:
    """Greedy evaluation on the skewed demand profile; writes eval_<combo>.csv."""
    combo = cfg.combo
    agents = load_agents(cfg, combo, checkpoint_seed)
    demand = cfg.eval_demand()
    rows = []
    for seed in cfg.eval_seeds:
        for episode in range(cfg.eval_episodes):
            result = run_episode(cfg, agents, seed, episode, mode="eval",
                                 demand_params=demand)
            rows.append(result.metrics.to_row())
    path = eval_path(cfg, combo)
    export_csv(rows, str(path), CURVE_COLUMNS)
    if cfg.figures:
        figures.eval_summary(rows, combo, str(_outdir(cfg) / f"eval_{combo}.png"))

    numeric = [c for c in CURVE_COLUMNS if c not in ("episode", "seed")]
    means = {c: float(np.mean([row[c] for row in rows])) for c in numeric}
    return EvalResult(combo=combo, path=path, rows=rows, means=means)


# ----- one-off inspection paths -----

def dump_world(cfg: RunConfig, episode_index: int) -> Path:
    """Run one greedy episode and dump its final order table (plus trip log)."""
    agents = load_agents(cfg, cfg.combo)
    result = run_episode(cfg, agents, cfg.eval_seeds[0], episode_index, mode="eval",
                         demand_params=cfg.eval_demand(), keep_world=True)
    out = _outdir(cfg)
    rows = dump_orders(result.world)
    path = out / f"world_dump_{episode_index}.csv"
    export_csv(rows, str(path), DUMP_COLUMNS)
    export_csv(trip_rows(result.trips, cfg.env.vehicle_capacity),
               str(out / f"world_trips_{episode_index}.csv"), TRIP_COLUMNS)
    if cfg.figures:
        depots = [(w.location.x, w.location.y) for w in result.world.warehouses]
        figures.world_scatter(rows, depots, str(out / f"world_{episode_index}.png"))
    return path


def oracle_check(cfg: RunConfig, instances: int = 200, max_orders: int = 7,
                 seed: int = 0) -> dict:
    """Compare the routing heuristic against exact enumeration on micro-instances.

    Hard-fails (InvariantViolation) if the heuristic ever beats the optimum or
    emits an invalid route; those are bugs, not statistics.
    """
    rng = substream(seed, "oracle")
    rows = []
    gaps = []
    optimal_hits = 0
    for i in range(instances):
        n = int(rng.integers(1, max_orders + 1))
        instance = random_instance(rng, n)
        solution = brute_force(instance)
        if solution is None:
            raise InvariantViolation(f"instance {i}: generator produced an infeasible instance")
        h_cost, h_routes, dropped = heuristic_solution(instance)
        if dropped:
            raise InvariantViolation(f"instance {i}: heuristic dropped orders {dropped}")
        problems = validate(instance, h_routes)
        if problems:
            raise InvariantViolation(f"instance {i}: invalid heuristic routes: {problems}")
        if abs(total_cost(instance, h_routes) - h_cost) > 1e-9:
            raise InvariantViolation(f"instance {i}: heuristic cost does not match its routes")
        if h_cost < solution.cost - 1e-9:
            raise InvariantViolation(
                f"instance {i}: heuristic {h_cost:.6f} beats oracle {solution.cost:.6f}"
            )
        gap = h_cost - solution.cost
        gaps.append(gap)
        optimal_hits += gap <= 1e-9
        rows.append({
            "instance": i,
            "orders": n,
            "oracle_cost": solution.cost,
            "heuristic_cost": h_cost,
            "gap": gap,
            "oracle_trips": len(solution.routes),
            "heuristic_trips": len(h_routes),
        })
    path = _outdir(cfg) / "oracle_check.csv"
    export_csv(rows, str(path), list(rows[0].keys()))
    return {
        "instances": instances,
        "mean_gap": float(np.mean(gaps)),
        "max_gap": float(np.max(gaps)),
        "optimal_fraction": optimal_hits / instances,
        "path": path,
    }
