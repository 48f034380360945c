"""Episode orchestration: the wave loop tying demand, assignment and routing.

Each wave runs a fixed event sequence (asserted by tests via the event log):
restock -> spawn -> expire -> decide -> route -> settle, then gradient steps
in train mode. Assignment decisions are taken one order at a time in
first-come-first-served order, so inventory consumed by an early order is
visible to later ones in the same wave. Routing settles every order assigned
in the wave: it ends the wave Served or Dropped, never carried over. Deferred
orders stay open and are re-decided next wave; a defer whose next decision
epoch lies past the window close (or past the horizon) becomes a drop.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import fulfillment, routing
from .config import RunConfig
from .demand import DemandParams, DemandStreams, sample_wave
from .errors import ConfigError
from .fulfillment import DecisionLedger, SettledOrder
from .gae import GraphEncoder, GraphSnapshot, build_graph
from .metrics import EpisodeMetrics
from .nets import DenseNet, ReplayBuffer
from .rng import substream
from .world import Trip, WorldState, new_world


@dataclass
class AgentBundle:
    """Everything learnable (or frozen) a combo needs to act."""

    c2s_kind: str  # "h" | "l" | "p"
    vrp_kind: str  # "h" | "l"
    c2s_net: DenseNet | None = None
    vrp_net: DenseNet | None = None
    encoder: GraphEncoder | None = None
    c2s_replay: ReplayBuffer | None = None
    vrp_replay: ReplayBuffer | None = None

    @property
    def needs_embeddings(self) -> bool:
        return self.c2s_kind in ("l", "p")

    def trains_c2s(self) -> bool:
        return self.c2s_kind == "l"

    def trains_vrp(self) -> bool:
        return self.vrp_kind == "l"


def make_agents(cfg: RunConfig, combo: str, seed: int, encoder: GraphEncoder | None = None) -> AgentBundle:
    """Fresh nets/replays for a combo; heuristic slots stay None."""
    c2s_kind, vrp_kind = combo[0], combo[1]
    bundle = AgentBundle(c2s_kind=c2s_kind, vrp_kind=vrp_kind, encoder=encoder)
    if c2s_kind in ("l", "p"):
        if encoder is None:
            raise ConfigError([f"combo {combo} needs a trained graph encoder"])
        sizes = [fulfillment.state_size(cfg.env.warehouse_count), *cfg.net.c2s_hidden,
                 cfg.env.warehouse_count + 1]
        bundle.c2s_net = DenseNet(sizes, activation="tanh", rng=substream(seed, "init", "c2s"))
        bundle.c2s_replay = ReplayBuffer(cfg.net.buffer_capacity)
    if vrp_kind == "l":
        sizes = [len(routing.FEATURE_NAMES), *cfg.net.vrp_hidden, 1]
        bundle.vrp_net = DenseNet(sizes, activation="tanh", rng=substream(seed, "init", "vrp"))
        bundle.vrp_replay = ReplayBuffer(cfg.net.buffer_capacity)
    return bundle


@dataclass
class EpisodeResult:
    metrics: EpisodeMetrics
    events: list[str]
    trips: list[Trip]
    settled: list[SettledOrder]
    graphs: list[GraphSnapshot] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)
    world: WorldState | None = None


def _state_hash(state: np.ndarray | None) -> str:
    if state is None:
        return "-"
    return hashlib.sha256(np.asarray(state, dtype=np.float64).tobytes()).hexdigest()[:12]


def _vrp_train_step(net: DenseNet, buffer: ReplayBuffer, rng: np.random.Generator,
                    batch_size: int, lr: float) -> float | None:
    """Monte-Carlo value regression on (features, realized reward) pairs."""
    if len(buffer) < batch_size:
        return None
    batch = buffer.sample(rng, batch_size)
    inputs = np.stack([features for features, _ in batch])
    targets = np.array([[reward] for _, reward in batch])
    return net.train_batch(inputs, targets, lr)


def run_episode(
    cfg: RunConfig,
    agents: AgentBundle,
    seed: int,
    episode_index: int,
    mode: str = "train",
    epsilon: float = 0.0,
    demand_params: DemandParams | None = None,
    collect_graphs: bool = False,
    record_trace: bool = False,
    keep_world: bool = False,
) -> EpisodeResult:
    """One full episode; `mode` is "train" (explore + learn) or "eval" (greedy)."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    training = mode == "train"
    greedy = not training
    greedy_c2s = True if agents.c2s_kind == "p" else greedy  # frozen policy is always greedy

    demand_params = demand_params or cfg.demand
    world = new_world(cfg.env)
    ledger = DecisionLedger(cfg.transport_weight, cfg.utilization_weight, cfg.discount)

    explore_c2s = substream(seed, "explore.c2s", episode_index)
    explore_vrp = substream(seed, "explore.vrp", episode_index)
    replay_rng = substream(seed, "replay", episode_index)

    events: list[str] = []
    trace_decisions: dict[int, tuple[str, int]] = {}
    graphs: list[GraphSnapshot] = []
    settled: list[SettledOrder] = []
    trips: list[Trip] = []
    c2s_losses: list[float] = []
    vrp_losses: list[float] = []
    defer_action = cfg.env.warehouse_count

    wave_times = cfg.env.wave_times()
    next_order_id = 0
    for w, now in enumerate(wave_times):
        world.clock = now
        final_wave = w == len(wave_times) - 1
        wave_settled: list[SettledOrder] = []

        world.restock()
        events.append(f"{now:g}:restock")

        fresh = sample_wave(DemandStreams(seed, episode_index, w), now, demand_params,
                            cfg.env.wave_period, next_order_id, cfg.env.vehicle_capacity)
        next_order_id += len(fresh)
        world.add_orders(fresh)
        events.append(f"{now:g}:spawn:{len(fresh)}")

        expired = world.drop_expired(now)
        for oid in expired:
            wave_settled.append(ledger.settle_dropped(oid))
        events.append(f"{now:g}:expire:{len(expired)}")

        # decide: one pass over open orders, oldest first
        pending = world.open_orders()
        embeddings: dict[int, np.ndarray] = {}
        if pending and (collect_graphs or agents.needs_embeddings):
            graph = build_graph(pending, world.warehouses)
            if collect_graphs:
                graphs.append(graph)
            if agents.needs_embeddings:
                emb = agents.encoder.encode(graph)
                embeddings = {oid: emb[i] for i, oid in enumerate(graph.order_ids)}

        assigned_by_depot: dict[int, list[int]] = {i: [] for i in range(cfg.env.warehouse_count)}
        for order in pending:
            defer_allowed = (not final_wave) and order.window_close >= now + cfg.env.wave_period - 1e-9
            state = None
            if agents.c2s_kind == "h":
                action = fulfillment.heuristic_action(world, order)
            else:
                if order.id not in embeddings:
                    raise KeyError(f"order {order.id} has no embedding")
                state = fulfillment.assemble_state(world, order, embeddings[order.id], now)
                mask = fulfillment.feasibility_mask(world, order, defer_allowed)
                if not mask.any():
                    action = defer_action  # forced drop path; not a recorded decision
                    state = None
                else:
                    eps = 0.0 if greedy_c2s else epsilon
                    action = fulfillment.q_action(agents.c2s_net, state, eps, mask, explore_c2s)
            record_state = state if (training and agents.trains_c2s()) else None
            if record_trace and state is not None:
                trace_decisions[order.id] = (_state_hash(state), action)

            if action == defer_action:
                outcome = world.defer_order(order.id, now) if defer_allowed else "dropped"
                if outcome == "deferred":
                    ledger.record_defer(order.id, record_state, action)
                else:
                    if defer_allowed:
                        pass  # defer_order already dropped it (window rule)
                    else:
                        world.drop_order(order.id)
                    wave_settled.append(ledger.settle_dropped(order.id))
            else:
                world.assign_order(order.id, action)
                ledger.record_assign(order.id, record_state, action)
                assigned_by_depot[action].append(order.id)
        events.append(f"{now:g}:decide:{len(pending)}")

        # route each depot in id order
        wave_trips: list[Trip] = []
        routing_dropped: list[int] = []
        for depot_id in range(cfg.env.warehouse_count):
            order_ids = assigned_by_depot[depot_id]
            if not order_ids:
                continue
            ctx = routing.build_context(world, depot_id, order_ids, now)
            if agents.vrp_kind == "h":
                outcome = routing.route_heuristic(world, ctx)
            else:
                outcome = routing.route_learned(
                    world, ctx, agents.vrp_net, epsilon, explore_vrp, cfg.discount, greedy=greedy,
                )
                if training and agents.trains_vrp():
                    for features, reward in outcome.experiences:
                        agents.vrp_replay.push((features, reward))
            wave_trips.extend(outcome.trips)
            for oid in outcome.dropped:
                world.drop_order(oid)
                routing_dropped.append(oid)
        events.append(f"{now:g}:route:{len(wave_trips)}")

        # settle: served per trip, then the routing drops
        for trip in wave_trips:
            for visit in trip.visits:
                order = world.orders[visit.order_id]
                components = fulfillment.reward_components(world, order, trip)
                wave_settled.append(ledger.settle_served(order.id, components))
        for oid in routing_dropped:
            wave_settled.append(ledger.settle_dropped(oid))
        trips.extend(wave_trips)
        settled.extend(wave_settled)
        events.append(f"{now:g}:settle:{len(wave_settled)}")

        world.check_conservation()

        if training:
            if agents.trains_c2s():
                for record in wave_settled:
                    for exp in record.experiences:
                        agents.c2s_replay.push(exp)
                for _ in range(cfg.net.steps_per_wave):
                    loss = fulfillment.train_step(agents.c2s_net, agents.c2s_replay, replay_rng,
                                                  cfg.net.batch_size, cfg.net.learning_rate, cfg.discount)
                    if loss is not None:
                        c2s_losses.append(loss)
            if agents.trains_vrp():
                for _ in range(cfg.net.steps_per_wave):
                    loss = _vrp_train_step(agents.vrp_net, agents.vrp_replay, replay_rng,
                                           cfg.net.batch_size, cfg.net.learning_rate)
                    if loss is not None:
                        vrp_losses.append(loss)
            events.append(f"{now:g}:train")

        if cfg.env.restock_halves:
            world.restock()
            events.append(f"{now + cfg.env.wave_period / 2:g}:restock")

    if ledger.pending_count() != 0:
        raise ConfigError([f"{ledger.pending_count()} orders left with unsettled rewards"])

    counts = world.state_counts()
    served_records = [r for r in settled if r.components is not None]
    metrics = EpisodeMetrics(
        episode=episode_index,
        seed=seed,
        epsilon=epsilon,
        sum_reward=float(sum(r.order_reward for r in settled)),
        mean_distance_reward=_mean([r.components.distance for r in served_records]),
        mean_trip_reward=_mean([r.components.trip for r in served_records]),
        mean_utilization_reward=_mean([r.components.utilization for r in served_records]),
        trips=len(trips),
        served_per_trip=counts["served"] / len(trips) if trips else 0.0,
        served=counts["served"],
        dropped=counts["dropped"],
        deferred=ledger.defer_events,
        open_end=counts["open"],
        mean_utilization=_mean([t.total_load / cfg.env.vehicle_capacity for t in trips]),
        c2s_loss=_mean(c2s_losses),
        vrp_loss=_mean(vrp_losses),
    )

    trace = []
    if record_trace:
        for record in settled:
            state_hash, action = trace_decisions.get(record.order_id, ("-", -1))
            trace.append({
                "order_id": record.order_id,
                "state_hash": state_hash,
                "action": action,
                "settled_reward": record.order_reward,
            })

    return EpisodeResult(
        metrics=metrics,
        events=events,
        trips=trips,
        settled=settled,
        graphs=graphs,
        trace=trace,
        world=world if keep_world else None,
    )


def _mean(values: list[float]) -> float:
    return float(np.mean(values)) if values else 0.0
