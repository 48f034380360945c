"""Exhaustive routing oracle for micro instances (at most 8 orders).

Enumerates every partition of the orders into routes via a subset DP: the best
feasible visiting order of each subset is found by depth-first permutation
search with capacity/window/cost pruning, then the cheapest exact cover is
assembled from those subset costs. All routes depart the depot at time zero,
matching the per-wave parallel dispatch of the simulator. The objective is the
total distance driven: for every route, depot-to-first leg, the inter-customer
legs, and the last-customer-to-depot leg.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import routing
from .world import EnvParams, Order, Point, WorldState, distance, new_world

ENUMERATION_BOUND = 8


@dataclass
class MicroInstance:
    depot: Point
    orders: list[Order]
    capacity: int = 40
    speed: float = 0.1
    service_time: float = 1.0


@dataclass
class OracleSolution:
    cost: float
    routes: list[list[int]]  # order ids in visiting sequence, one list per vehicle


def brute_force(instance: MicroInstance) -> OracleSolution | None:
    """Minimum total distance over all feasible route partitions, or None.

    None means no partition serves every order within its window and the
    capacity bound; singleton routes are part of the search, so None implies
    at least one order is unreachable on its own.
    """
    n = len(instance.orders)
    if n == 0:
        return OracleSolution(0.0, [])
    if n > ENUMERATION_BOUND:
        raise ValueError(f"instance has {n} orders, oracle bound is {ENUMERATION_BOUND}")

    orders = instance.orders
    depot = instance.depot
    dist = np.zeros((n + 1, n + 1))
    points = [o.location for o in orders] + [depot]
    for i in range(n + 1):
        for j in range(i + 1, n + 1):
            dist[i, j] = dist[j, i] = distance(points[i], points[j])

    quantities = [o.quantity for o in orders]
    opens = [o.window_open for o in orders]
    closes = [o.window_close for o in orders]
    speed = instance.speed
    service_time = instance.service_time

    route_cost: dict[int, tuple[float, tuple[int, ...]]] = {}

    def best_route(subset: int) -> tuple[float, tuple[int, ...]] | None:
        """Cheapest feasible visiting order of the subset (depot start at t=0)."""
        cached = route_cost.get(subset)
        if cached is not None:
            return cached if cached[0] < math.inf else None
        members = [i for i in range(n) if subset >> i & 1]
        if sum(quantities[i] for i in members) > instance.capacity:
            route_cost[subset] = (math.inf, ())
            return None

        best: list = [math.inf, ()]

        def extend(position: int, t: float, remaining: list[int], acc: float, seq: tuple[int, ...]):
            if acc + dist[position, n] >= best[0]:
                return  # even returning straight home cannot beat the incumbent
            if not remaining:
                best[0] = acc + dist[position, n]
                best[1] = seq
                return
            for idx, nxt in enumerate(remaining):
                service = max(t + dist[position, nxt] / speed, opens[nxt])
                if service > closes[nxt] + 1e-9:
                    continue
                extend(nxt, service + service_time, remaining[:idx] + remaining[idx + 1:],
                       acc + dist[position, nxt], seq + (nxt,))

        extend(n, 0.0, members, 0.0, ())
        route_cost[subset] = (best[0], tuple(best[1]))
        return route_cost[subset] if best[0] < math.inf else None

    full = (1 << n) - 1
    best_cost = [math.inf] * (full + 1)
    best_split: list[tuple[int, int] | None] = [None] * (full + 1)
    best_cost[0] = 0.0
    for s in range(1, full + 1):
        lowest = s & -s
        block = s
        # iterate non-empty subsets of s containing its lowest set bit
        while block:
            if block & lowest:
                route = best_route(block)
                if route is not None and route[0] + best_cost[s ^ block] < best_cost[s]:
                    best_cost[s] = route[0] + best_cost[s ^ block]
                    best_split[s] = (block, s ^ block)
            block = (block - 1) & s
    if best_cost[full] == math.inf:
        return None

    routes = []
    s = full
    while s:
        block, rest = best_split[s]
        seq = route_cost[block][1]
        routes.append([orders[i].id for i in seq])
        s = rest
    routes.reverse()
    return OracleSolution(float(best_cost[full]), routes)


def validate(instance: MicroInstance, routes: list[list[int]]) -> list[str]:
    """Constraint audit of a route set; empty list means fully feasible."""
    violations = []
    by_id = {o.id: o for o in instance.orders}
    seen: list[int] = []
    for r, route in enumerate(routes):
        load = 0
        position = instance.depot
        t = 0.0
        for oid in route:
            order = by_id.get(oid)
            if order is None:
                violations.append(f"route {r}: unknown order {oid}")
                continue
            seen.append(oid)
            load += order.quantity
            service = max(t + distance(position, order.location) / instance.speed, order.window_open)
            if service > order.window_close + 1e-9:
                violations.append(f"route {r}: order {oid} served at {service:.6f} after close {order.window_close:.6f}")
            t = service + instance.service_time
            position = order.location
        if load > instance.capacity:
            violations.append(f"route {r}: load {load} > capacity {instance.capacity}")
    if sorted(seen) != sorted(by_id):
        violations.append(f"coverage: expected each of {sorted(by_id)} exactly once, got {sorted(seen)}")
    return violations


def total_cost(instance: MicroInstance, routes: list[list[int]]) -> float:
    by_id = {o.id: o for o in instance.orders}
    cost = 0.0
    for route in routes:
        position = instance.depot
        for oid in route:
            cost += distance(position, by_id[oid].location)
            position = by_id[oid].location
        cost += distance(position, instance.depot)
    return cost


def heuristic_solution(instance: MicroInstance) -> tuple[float, list[list[int]], list[int]]:
    """Run the window-ordered routing heuristic on the instance.

    Returns (total distance, routes, dropped order ids). Uses a single-depot
    throwaway world so the exact production dispatch loop is exercised.
    """
    horizon = max(o.window_close for o in instance.orders) + 1.0 if instance.orders else 2.0
    params = EnvParams(
        warehouse_count=1,
        episode_length=2 * horizon,
        wave_period=horizon,
        vehicle_capacity=instance.capacity,
        vehicle_speed=instance.speed,
        service_time=instance.service_time,
        max_inventory=max(1, sum(o.quantity for o in instance.orders)),
    )
    world = new_world(params)
    world.warehouses[0].location = instance.depot
    clones = [
        Order(id=o.id, location=o.location, quantity=o.quantity, created_at=0.0,
              window_open=o.window_open, window_close=o.window_close)
        for o in instance.orders
    ]
    world.add_orders(clones)
    for o in clones:
        world.assign_order(o.id, 0)
    ctx = routing.build_context(world, 0, [o.id for o in clones], now=0.0)
    outcome = routing.route_heuristic(world, ctx)
    routes = [[v.order_id for v in trip.visits] for trip in outcome.trips]
    cost = sum(trip.round_trip_distance for trip in outcome.trips)
    return cost, routes, outcome.dropped


def random_instance(rng: np.random.Generator, n_orders: int,
                    capacity: int = 40, speed: float = 0.1, service_time: float = 1.0) -> MicroInstance:
    """Random micro instance around one depot, reachable by construction.

    Windows are sampled wide enough that a fresh vehicle leaving at time zero
    reaches every order before its window closes, so the heuristic never drops
    and the oracle always has at least the all-singletons partition.
    """
    depot = Point(float(rng.uniform(-0.6, 0.6)), float(rng.uniform(-0.6, 0.6)))
    orders = []
    for i in range(n_orders):
        loc = Point(float(rng.uniform(-1.0, 1.0)), float(rng.uniform(-1.0, 1.0)))
        direct = distance(depot, loc) / speed
        opens = float(rng.uniform(0.0, 40.0))
        width = float(rng.uniform(10.0, 200.0))
        closes = max(opens + width, direct + float(rng.uniform(1.0, 20.0)))
        orders.append(Order(
            id=i,
            location=loc,
            quantity=int(rng.integers(1, 11)),
            created_at=0.0,
            window_open=opens,
            window_close=closes,
        ))
    return MicroInstance(depot=depot, orders=orders, capacity=capacity,
                         speed=speed, service_time=service_time)
