"""Release gate: nine checks, each printing one [PASS]/[FAIL] verdict line.

Checks 1, 3, 4 and 6 run on the capacity-bound benchmark profile: a single
depot, vehicle speed 0.03, capacity 80, exactly thirty customers per wave.
On the default four-depot grid each depot sees only a handful of customers
per wave, so any reasonable router fills one vehicle per wave and trip counts
cannot separate good routing from bad. The benchmark profile keeps the wave
structure but makes vehicle capacity the binding resource, which is what the
trip-count and utilization comparisons are about. Library defaults are
unchanged; the profile lives only in this module and the README.
"""
from __future__ import annotations

import time
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from lastmile import routing
from lastmile.config import RunConfig
from lastmile.demand import DemandParams, DemandStreams, sample_wave
from lastmile.episode import make_agents, run_episode
from lastmile.errors import InvariantViolation
from lastmile.experiments import evaluate, load_agents, oracle_check, train, train_gae
from lastmile.fulfillment import DROP_PENALTY, state_size
from lastmile.gae import (
    GraphEncoder,
    build_graph,
    decode_similarity,
    max_embedding_distance,
    normalized_adjacency,
)
from lastmile.nets import DenseNet, gradient_check
from lastmile.rng import substream
from lastmile.world import EnvParams, distance, new_world

from conftest import small_config

TRIP_RATIO_BOUND = 0.85        # learned routing must need at most this trip share
UTILIZATION_GAIN = 1.3         # and load vehicles at least this much fuller
GRADIENT_TOLERANCE = 1e-4
AUC_FLOOR = 0.8
REWARD_SAMPLE = 100_000
DISTANCE_FLOOR = -2.1214       # one depot-to-corner distance, rounded out


def report(capsys, number: int, label: str, passed: bool, detail: str = "") -> None:
    with capsys.disabled():
        verdict = "PASS" if passed else "FAIL"
        suffix = f" ({detail})" if detail else ""
        print(f"[{verdict}] criterion {number}: {label}{suffix}")


def benchmark_config(output_dir: str, combo: str = "hl") -> RunConfig:
    cfg = RunConfig()
    cfg.combo = combo
    cfg.env = EnvParams(warehouse_count=1, episode_length=300.0, wave_period=100.0,
                        vehicle_capacity=80, vehicle_speed=0.03)
    cfg.demand = DemandParams(count_low=30, count_high=30)
    cfg.train_episodes = 200
    cfg.train_seeds = (0,)
    cfg.figures = False
    cfg.output_dir = output_dir
    return cfg


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    """Trained benchmark combo plus paired evaluations of both routers."""
    cfg = benchmark_config(str(tmp_path_factory.mktemp("acceptance")))
    train_result = train(cfg)
    eval_hl = evaluate(cfg)
    eval_hh = evaluate(replace(cfg, combo="hh"))
    return SimpleNamespace(
        cfg=cfg,
        train_result=train_result,
        eval_hl=eval_hl,
        eval_hh=eval_hh,
        hl_bytes=eval_hl.path.read_bytes(),
        hh_bytes=eval_hh.path.read_bytes(),
    )


# ----- criterion 1: every emitted trip is physically valid -----

def audit_trip(world, trip, env) -> list[str]:
    """Recompute the trip timeline from scratch; return violation strings."""
    problems = []
    depot = world.warehouses[trip.depot_id].location
    if len({v.order_id for v in trip.visits}) != len(trip.visits):
        problems.append(f"trip {trip.id}: repeated order")
    load = sum(world.orders[v.order_id].quantity for v in trip.visits)
    if load > env.vehicle_capacity:
        problems.append(f"trip {trip.id}: load {load} over capacity {env.vehicle_capacity}")

    pos, clock = depot, trip.start_time
    for visit, leg in zip(trip.visits, trip.leg_distances):
        order = world.orders[visit.order_id]
        hop = distance(pos, order.location)
        if abs(hop - leg) > 1e-9:
            problems.append(f"trip {trip.id}: recorded leg {leg} != {hop}")
        clock += hop / env.vehicle_speed
        if abs(clock - visit.arrival) > 1e-9:
            problems.append(f"trip {trip.id}: arrival {visit.arrival} != {clock}")
        service = max(clock, order.window_open)
        if abs(service - visit.service_start) > 1e-9:
            problems.append(f"trip {trip.id}: service {visit.service_start} != {service}")
        if service > order.window_close + 1e-9:
            problems.append(f"order {order.id}: served {service} after close {order.window_close}")
        clock = service + env.service_time
        pos = order.location
    if abs(distance(pos, depot) - trip.return_distance) > 1e-9:
        problems.append(f"trip {trip.id}: bad return distance")
    if abs(clock + trip.return_distance / env.vehicle_speed - trip.end_time) > 1e-9:
        problems.append(f"trip {trip.id}: bad end time")
    return problems


def single_depot_instance(cfg: RunConfig, seed: int):
    world = new_world(cfg.env)
    orders = sample_wave(DemandStreams(seed, 0, 0), 0.0, cfg.demand,
                         cfg.env.wave_period, 0, cfg.env.vehicle_capacity)
    world.add_orders(orders)
    for order in orders:
        world.assign_order(order.id, 0)
    ctx = routing.build_context(world, 0, [o.id for o in orders], 0.0)
    return world, ctx


def test_criterion_1_trip_validity(bench, capsys):
    cfg = bench.cfg
    vrp_net = load_agents(cfg, "hl").vrp_net
    violations: list[str] = []
    checked = 0
    start = time.perf_counter()
    for i in range(1000):
        seed = 3000 + i
        for policy in ("heuristic", "learned"):
            world, ctx = single_depot_instance(cfg, seed)
            if policy == "heuristic":
                outcome = routing.route_heuristic(world, ctx)
            else:
                outcome = routing.route_learned(world, ctx, vrp_net, 0.0,
                                                substream(seed, "probe"), cfg.discount,
                                                greedy=True)
            for trip in outcome.trips:
                checked += 1
                violations.extend(audit_trip(world, trip, cfg.env))
    elapsed = time.perf_counter() - start

    passed = not violations and checked >= 1000 and elapsed < 120.0
    report(capsys, 1, "all heuristic and learned trips satisfy windows, capacity and timing",
           passed, f"{checked} trips audited, {len(violations)} violations, {elapsed:.1f}s")
    assert passed, violations[:5]


# ----- criterion 2: exact enumeration never loses to the heuristic -----

def test_criterion_2_heuristic_never_beats_the_oracle(tmp_path, capsys):
    cfg = small_config(tmp_path)
    failure = None
    summary = {}
    start = time.perf_counter()
    try:
        summary = oracle_check(cfg, instances=200, max_orders=7, seed=0)
    except InvariantViolation as exc:
        failure = str(exc)
    elapsed = time.perf_counter() - start

    passed = failure is None and summary.get("instances") == 200 and elapsed < 300.0
    detail = failure or (f"mean gap {summary['mean_gap']:.4f}, "
                         f"optimal on {summary['optimal_fraction']:.0%}, {elapsed:.1f}s")
    report(capsys, 2, "routing heuristic stays within the exact optimum on 200 micro-instances",
           passed, detail)
    assert passed, failure


# ----- criteria 3 and 4: learned routing consolidates trips -----

def test_criterion_3_learned_routing_cuts_trip_count(bench, capsys):
    rows = len(bench.eval_hl.rows)
    ratio = bench.eval_hl.means["trips"] / bench.eval_hh.means["trips"]
    passed = rows == 60 and ratio <= TRIP_RATIO_BOUND
    report(capsys, 3, "trained routing needs at most 0.85x the heuristic's trips",
           passed, f"trip ratio {ratio:.3f} over {rows} paired episodes")
    assert passed


def test_criterion_4_learned_routing_loads_vehicles_fuller(bench, capsys):
    gain = bench.eval_hl.means["mean_utilization"] / bench.eval_hh.means["mean_utilization"]
    passed = gain >= UTILIZATION_GAIN
    report(capsys, 4, "trained routing raises mean vehicle utilization at least 1.3x",
           passed, f"utilization gain {gain:.3f}")
    assert passed


# ----- criterion 5: settled rewards stay inside their contracts -----

def audit_settlements(settled, discount: float) -> list[str]:
    problems = []
    for r in settled:
        if r.components is None:
            if r.base != DROP_PENALTY:
                problems.append(f"order {r.order_id}: drop base {r.base} != {DROP_PENALTY}")
        else:
            c = r.components
            if not DISTANCE_FLOOR <= c.distance <= 0.0:
                problems.append(f"order {r.order_id}: distance {c.distance} out of range")
            if not -1.0 <= c.trip <= 0.0:
                problems.append(f"order {r.order_id}: trip share {c.trip} out of range")
            if c.fulfilled not in (0.0, 1.0):
                problems.append(f"order {r.order_id}: fulfilled {c.fulfilled} not boolean")
            if not -1.0 <= c.utilization <= 0.0:
                problems.append(f"order {r.order_id}: utilization {c.utilization} out of range")
            base = (c.distance + c.trip) + c.fulfilled + c.utilization
            if abs(base - r.base) > 1e-9:
                problems.append(f"order {r.order_id}: base {r.base} != recomputed {base}")
        if r.holds < 0:
            problems.append(f"order {r.order_id}: negative hold count")
        if abs(r.order_reward - discount**r.holds * r.base) > 1e-9:
            problems.append(f"order {r.order_id}: reward not discounted {r.holds} times")
        for i, value in enumerate(r.decision_rewards):
            if abs(value - discount ** (r.holds - i) * r.base) > 1e-9:
                problems.append(f"order {r.order_id}: decision reward {i} mispriced")
    return problems


def test_criterion_5_settled_reward_audit(capsys):
    cfg = RunConfig()
    cfg.env = replace(cfg.env, episode_length=1000.0)
    cfg.figures = False
    agents = make_agents(cfg, "hh", 0)
    settled = []
    episode = 0
    while len(settled) < REWARD_SAMPLE:
        result = run_episode(cfg, agents, 5000 + episode, episode, mode="eval")
        settled.extend(result.settled)
        episode += 1

    # starved inventory guarantees the drop-penalty path is in the sample
    starved = replace(cfg, env=replace(cfg.env, max_inventory=1),
                      demand=replace(cfg.demand, quantity_low=2, quantity_high=3))
    drops = run_episode(starved, make_agents(starved, "hh", 0), 5999, 0, mode="eval")
    assert all(r.components is None for r in drops.settled)
    settled.extend(drops.settled)

    problems = audit_settlements(settled, cfg.discount)
    held = sum(1 for r in settled if r.holds > 0)
    dropped = sum(1 for r in settled if r.components is None)
    passed = (len(settled) >= REWARD_SAMPLE and not problems
              and held > 0 and dropped > 0)
    report(capsys, 5, "every settled reward respects its bounds and discounting",
           passed, f"{len(settled)} settlements, {dropped} drops, "
                   f"{held} held orders, {len(problems)} violations")
    assert passed, problems[:5]


# ----- criterion 6: bookkeeping identity and bitwise reproducibility -----

def test_criterion_6_conservation_and_reproducibility(bench, capsys):
    cfg = bench.cfg
    agents = make_agents(cfg, "hh", 0)
    conserved = True
    for seed in range(6000, 6020):
        result = run_episode(cfg, agents, seed, 0, mode="eval")
        generated = sum(int(e.split(":")[2]) for e in result.events if ":spawn:" in e)
        m = result.metrics
        conserved &= generated == m.served + m.dropped + m.open_end

    hl_again = evaluate(cfg).path.read_bytes()
    hh_again = evaluate(replace(cfg, combo="hh")).path.read_bytes()
    identical = hl_again == bench.hl_bytes and hh_again == bench.hh_bytes

    passed = conserved and identical
    report(capsys, 6, "orders are conserved and repeated evaluations are byte-identical",
           passed, f"conserved={conserved}, identical={identical}")
    assert passed


# ----- criterion 7: analytic gradients match central differences -----

def test_criterion_7_gradient_checks(capsys):
    rng = np.random.default_rng(7)
    worst = 0.0

    assignment = DenseNet([state_size(4), 76, 38, 5], activation="tanh", rng=rng)
    worst = max(worst, gradient_check(assignment, rng.normal(size=(6, state_size(4))),
                                      rng.normal(size=(6, 5))))

    router = DenseNet([len(routing.FEATURE_NAMES), 128, 64, 32, 8, 1],
                      activation="tanh", rng=rng)
    worst = max(worst, gradient_check(router, rng.normal(size=(4, 17)),
                                      rng.normal(size=(4, 1))))

    # graph encoder: quadratic surrogate loss through both convolution layers
    orders = sample_wave(DemandStreams(70, 0, 0), 0.0,
                         DemandParams(count_low=10, count_high=10), 100.0, 0, 40)
    world = new_world(EnvParams())
    graph = build_graph(orders, world.warehouses)
    encoder = GraphEncoder(hidden=16, rng=np.random.default_rng(8))
    a_hat = normalized_adjacency(graph.adjacency)
    target = rng.normal(size=(len(orders), 2))

    def surrogate():
        emb = encoder._forward(a_hat, graph.features)[0]
        return float(np.mean((emb - target) ** 2))

    emb = encoder._forward(a_hat, graph.features)[0]
    g_w1, g_w2 = encoder.gradients(a_hat, graph.features, 2.0 * (emb - target) / emb.size)
    step = 1e-6
    for param, grad in ((encoder.w1, g_w1), (encoder.w2, g_w2)):
        flat, gflat = param.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = surrogate()
            flat[i] = keep - step
            down = surrogate()
            flat[i] = keep
            fd = (up - down) / (2 * step)
            worst = max(worst, abs(gflat[i] - fd) / max(abs(gflat[i]) + abs(fd), 1e-8))

    passed = worst <= GRADIENT_TOLERANCE
    report(capsys, 7, "assignment, routing and encoder gradients match finite differences",
           passed, f"worst relative error {worst:.2e}")
    assert passed


# ----- criterion 8: graph encoder ranks edges on held-out graphs -----

def test_criterion_8_graph_encoder_quality(tmp_path, capsys):
    cfg = RunConfig()
    cfg.figures = False
    cfg.output_dir = str(tmp_path)
    result = train_gae(cfg)

    orders = sample_wave(DemandStreams(9090, 0, 0), 0.0, cfg.demand, 100.0, 0,
                         cfg.env.vehicle_capacity)
    graph = build_graph(orders, new_world(cfg.env).warehouses)
    emb = result.encoder.encode(graph)
    max_dist = max_embedding_distance(emb)
    self_sims = [decode_similarity(e, e, max_dist) for e in emb]
    pair_sims = [decode_similarity(emb[i], emb[j], max_dist)
                 for i in range(len(emb)) for j in range(len(emb))]

    in_range = all(0.0 <= s <= 1.0 for s in pair_sims)
    self_ones = all(s == 1.0 for s in self_sims)
    passed = (result.holdout_auc >= AUC_FLOOR and in_range and self_ones
              and len(result.history) == cfg.gae.epochs)
    report(capsys, 8, "graph encoder reaches 0.8 held-out AUC with unit self-similarity",
           passed, f"AUC {result.holdout_auc:.3f} on {cfg.gae.graphs}-graph buffer")
    assert passed


# ----- criterion 9: every policy combination runs end to end -----

def test_criterion_9_all_combos_run(tmp_path_factory, capsys):
    outcomes = []
    frozen_ok = True
    for combo in ("hh", "lh", "hl", "ll", "pl"):
        cfg = small_config(tmp_path_factory.mktemp(f"combo-{combo}"), combo=combo)
        if combo != "hh":
            train_result = train(cfg)
            if combo == "pl":
                seed = train_result.seeds[0]
                frozen_ok = (train_result.phase_one is not None
                             and seed.frozen_c2s_before == seed.c2s_digest)
        result = evaluate(cfg)
        outcomes.append(result.path.exists() and len(result.rows) == 2)

    passed = all(outcomes) and frozen_ok
    report(capsys, 9, "all five policy combinations train and evaluate end to end",
           passed, f"combos ok={sum(outcomes)}/5, frozen assignment intact={frozen_ok}")
    assert passed
