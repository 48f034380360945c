"""Per-depot trip construction over the orders assigned in a wave.

Both policies share the same dispatch loop: all trips of a wave leave the
depot at the wave clock, an idle vehicle is reused before a new one is
spawned, and a vehicle keeps serving feasible customers until none remain,
then returns. Customers no fresh vehicle could still reach in time are
dropped. The heuristic always serves the feasible customer whose window
opens first; the learned policy scores each feasible candidate with a value
net over 17 cluster/geometry/timing features and picks by epsilon-greedy
(uniform exploration, softmax exploitation) or argmax in eval mode.

Value targets are Monte-Carlo: decision p of a P-stop trip realizes
(rho - d_p) / d_max + (tau_thresh - t_p) / t_max plus discount**(P - p) times
the terminal 2 * rho - (sum of legs + return leg) / (P + 1).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation
from .nets import DenseNet
from .world import Order, TripPlan, Warehouse, WorldState, distance

MIN_CLUSTER_RADIUS = 1e-3  # floor for the neighbourhood radius rho
FEATURE_NAMES = [
    "leg_distance",      # d(pos, c) / d_max
    "leg_short",         # d(pos, c) <= rho
    "time_gap",          # (service start - now) / t_max
    "gap_short",         # time gap <= tau_thresh
    "same_cluster",      # candidate shares the vehicle's current cluster
    "exit_distance",     # same cluster: candidate's nearest outsider / d_max
    "leaves_unserved",   # leaving current cluster with members unserved
    "left_farther",      # left-behind members sit farther from the depot than pos
    "left_close",        # left-behind members are within rho of pos on average
    "left_detour",       # leaving now beats serving them later, distance-wise
    "cluster_served",    # members of c's cluster already served by this vehicle
    "cluster_fits",      # remaining capacity covers c's whole unserved cluster
    "cluster_before",    # members servable before c (pairwise), / cluster size
    "cluster_after_ok",  # every unserved member still feasible right after c
    "urgency",           # (window close - arrival) / t_max
    "time_per_load",     # time share spent on c per unit of demand share
    "remoteness",        # mean leader distance to other clusters / d_max
]


def cluster_orders(orders: list[Order]) -> tuple[list[list[int]], float]:
    """Greedy leader clustering; returns member-index lists and the radius rho.

    Orders are visited by window opening; each joins the first cluster whose
    leader is within half the median pairwise distance, else founds a new
    cluster. rho is the largest member-to-leader distance across clusters,
    floored at MIN_CLUSTER_RADIUS.
    """
    n = len(orders)
    if n == 0:
        return [], MIN_CLUSTER_RADIUS
    pair_dists = [
        distance(orders[i].location, orders[j].location)
        for i in range(n) for j in range(i + 1, n)
    ]
    join_radius = 0.5 * float(np.median(pair_dists)) if pair_dists else 0.0

    order_idx = sorted(range(n), key=lambda i: (orders[i].window_open, orders[i].id))
    clusters: list[list[int]] = []
    for i in order_idx:
        for members in clusters:
            if distance(orders[members[0]].location, orders[i].location) <= join_radius:
                members.append(i)
                break
        else:
            clusters.append([i])

    rho = MIN_CLUSTER_RADIUS
    for members in clusters:
        leader = orders[members[0]].location
        for m in members[1:]:
            rho = max(rho, distance(leader, orders[m].location))
    return clusters, rho


@dataclass
class RoutingContext:
    """Precomputed arrays for one depot-wave instance; index n is the depot."""

    depot: Warehouse
    now: float
    speed: float
    service_time: float
    capacity: int
    order_ids: list[int]
    quantities: np.ndarray
    window_open: np.ndarray
    window_close: np.ndarray
    dist: np.ndarray                # (n+1, n+1), row/col n = depot
    clusters: list[np.ndarray]
    cluster_of: np.ndarray
    neighborhood_radius: float      # rho
    max_pair_distance: float        # d_max over orders + depot
    max_leg_time: float             # t_max = d_max / speed + service_time
    time_threshold: float           # median customer-to-customer travel time
    nearest_outsider: np.ndarray    # per order: distance to closest non-member
    cluster_remoteness: np.ndarray  # per cluster: mean leader-to-leader distance / d_max

    @property
    def size(self) -> int:
        return len(self.order_ids)

    @property
    def depot_index(self) -> int:
        return self.size


def build_context(world: WorldState, depot_id: int, order_ids: list[int], now: float) -> RoutingContext:
    depot = world.warehouses[depot_id]
    orders = [world.orders[oid] for oid in sorted(order_ids)]
    n = len(orders)
    points = [o.location for o in orders] + [depot.location]
    dist = np.zeros((n + 1, n + 1))
    for i in range(n + 1):
        for j in range(i + 1, n + 1):
            dist[i, j] = dist[j, i] = distance(points[i], points[j])

    clusters_raw, rho = cluster_orders(orders)
    clusters = [np.array(c, dtype=int) for c in clusters_raw]
    cluster_of = np.zeros(n, dtype=int)
    for ci, members in enumerate(clusters):
        cluster_of[members] = ci

    d_max = max(float(dist.max()), 1e-9)
    if n >= 2:
        iu, ju = np.triu_indices(n, k=1)
        time_threshold = float(np.median(dist[iu, ju])) / world.params.vehicle_speed
    else:
        time_threshold = d_max / world.params.vehicle_speed

    nearest_outsider = np.zeros(n)
    for i in range(n):
        outside = np.flatnonzero(cluster_of != cluster_of[i])
        nearest_outsider[i] = dist[i, outside].min() if len(outside) else 0.0

    k = len(clusters)
    cluster_remoteness = np.zeros(k)
    if k > 1:
        leaders = [members[0] for members in clusters]
        for ci, leader in enumerate(leaders):
            others = [dist[leader, lj] for cj, lj in enumerate(leaders) if cj != ci]
            cluster_remoteness[ci] = float(np.mean(others)) / d_max

    return RoutingContext(
        depot=depot,
        now=now,
        speed=world.params.vehicle_speed,
        service_time=world.params.service_time,
        capacity=world.params.vehicle_capacity,
        order_ids=[o.id for o in orders],
        quantities=np.array([o.quantity for o in orders], dtype=float),
        window_open=np.array([o.window_open for o in orders]),
        window_close=np.array([o.window_close for o in orders]),
        dist=dist,
        clusters=clusters,
        cluster_of=cluster_of,
        neighborhood_radius=rho,
        max_pair_distance=d_max,
        max_leg_time=d_max / world.params.vehicle_speed + world.params.service_time,
        time_threshold=time_threshold,
        nearest_outsider=nearest_outsider,
        cluster_remoteness=cluster_remoteness,
    )


@dataclass
class VehicleProgress:
    position: int          # context index; depot_index at the start
    time: float
    remaining: int
    current_cluster: int   # -1 while at the depot
    served_in_cluster: np.ndarray


def fresh_progress(ctx: RoutingContext) -> VehicleProgress:
    return VehicleProgress(
        position=ctx.depot_index,
        time=ctx.now,
        remaining=ctx.capacity,
        current_cluster=-1,
        served_in_cluster=np.zeros(len(ctx.clusters), dtype=int),
    )


def feasible_candidates(ctx: RoutingContext, progress: VehicleProgress, unserved: np.ndarray) -> np.ndarray:
    """Indices the vehicle could serve next (window and capacity), ascending."""
    cand = np.flatnonzero(unserved)
    if len(cand) == 0:
        return cand
    travel = ctx.dist[progress.position, cand] / ctx.speed
    service = np.maximum(progress.time + travel, ctx.window_open[cand])
    ok = (service <= ctx.window_close[cand] + 1e-9) & (ctx.quantities[cand] <= progress.remaining)
    return cand[ok]


def candidate_features(ctx: RoutingContext, progress: VehicleProgress, unserved: np.ndarray,
                       candidate: int) -> np.ndarray:
    """The 17 features of FEATURE_NAMES for one feasible candidate."""
    d_max = ctx.max_pair_distance
    t_max = ctx.max_leg_time
    leg = ctx.dist[progress.position, candidate]
    arrival = progress.time + leg / ctx.speed
    service = max(arrival, ctx.window_open[candidate])
    gap = service - progress.time

    cand_cluster = int(ctx.cluster_of[candidate])
    members = ctx.clusters[cand_cluster]
    unserved_members = members[unserved[members]]
    same = progress.current_cluster == cand_cluster

    # left-behind members of the cluster the vehicle would be abandoning
    left_far = left_close = left_detour = 0.0
    leaves = 0.0
    if not same and progress.current_cluster >= 0:
        old = ctx.clusters[progress.current_cluster]
        left = old[unserved[old]]
        if len(left):
            leaves = 1.0
            depot_i = ctx.depot_index
            left_far = float(np.mean(ctx.dist[depot_i, left]) > ctx.dist[depot_i, progress.position])
            mean_to_left = float(np.mean(ctx.dist[progress.position, left]))
            left_close = float(mean_to_left <= ctx.neighborhood_radius)
            outsider = ctx.nearest_outsider[left]
            left_detour = float(np.mean(outsider) > mean_to_left) if outsider.size else 0.0

    if same and len(ctx.clusters) > 1:
        exit_distance = ctx.nearest_outsider[candidate] / d_max
    else:
        exit_distance = 0.0

    cluster_size = len(members)
    served_frac = progress.served_in_cluster[cand_cluster] / cluster_size
    fits = float(ctx.quantities[unserved_members].sum() <= progress.remaining)

    before = 0
    others = unserved_members[unserved_members != candidate]
    if len(others):
        s_m = np.maximum(progress.time + ctx.dist[progress.position, others] / ctx.speed,
                         ctx.window_open[others])
        ok_m = s_m <= ctx.window_close[others] + 1e-9
        s_c = np.maximum(s_m + ctx.service_time + ctx.dist[others, candidate] / ctx.speed,
                         ctx.window_open[candidate])
        before = int(np.sum(ok_m & (s_c <= ctx.window_close[candidate] + 1e-9)))
        after_start = np.maximum(service + ctx.service_time + ctx.dist[candidate, others] / ctx.speed,
                                 ctx.window_open[others])
        after_ok = float(np.all(after_start <= ctx.window_close[others] + 1e-9))
    else:
        after_ok = 1.0

    demand_share = max(ctx.quantities[candidate] / ctx.capacity, 1.0 / ctx.capacity)
    return np.array([
        leg / d_max,
        float(leg <= ctx.neighborhood_radius),
        gap / t_max,
        float(gap <= ctx.time_threshold + 1e-9),
        float(same),
        exit_distance,
        leaves,
        left_far,
        left_close,
        left_detour,
        served_frac,
        fits,
        before / cluster_size,
        after_ok,
        (ctx.window_close[candidate] - arrival) / t_max,
        ((gap + ctx.service_time) / t_max) / demand_share,
        ctx.cluster_remoteness[cand_cluster],
    ])


# ----- rewards -----

def step_partial_reward(ctx: RoutingContext, leg_distance: float, time_gap: float) -> float:
    """(rho - d_p) / d_max + (tau_thresh - t_p) / t_max; positive for tight hops."""
    return ((ctx.neighborhood_radius - leg_distance) / ctx.max_pair_distance
            + (ctx.time_threshold - time_gap) / ctx.max_leg_time)


def terminal_reward(rho: float, leg_distances: list[float], return_distance: float) -> float:
    """2 * rho - mean leg length over the closed tour (stops + return)."""
    p = len(leg_distances)
    if p == 0:
        raise ValueError("terminal reward needs at least one served customer")
    return 2.0 * rho - (sum(leg_distances) + return_distance) / (p + 1)


def settle_trip(partials: list[float], r_term: float, discount: float) -> list[float]:
    """Realized per-decision rewards: partial_p + discount**(P - p) * R_term."""
    p_total = len(partials)
    return [partial + discount ** (p_total - (p + 1)) * r_term for p, partial in enumerate(partials)]


# ----- trip construction -----

@dataclass
class RoutingOutcome:
    trips: list            # executed world.Trip objects
    dropped: list[int]     # order ids no fresh vehicle could reach in time
    experiences: list[tuple[np.ndarray, float]]  # (features, realized reward)


def _close_loop(world: WorldState, ctx: RoutingContext, choose, discount: float) -> RoutingOutcome:
    """Shared dispatch loop; `choose(candidates, progress)` returns (index, features)."""
    unserved = np.ones(ctx.size, dtype=bool)
    trips = []
    experiences: list[tuple[np.ndarray, float]] = []

    while unserved.any():
        probe = fresh_progress(ctx)
        if len(feasible_candidates(ctx, probe, unserved)) == 0:
            break  # remainder unreachable even by a fresh vehicle
        vehicle = world.acquire_vehicle(ctx.depot.id, ctx.now)
        progress = probe
        stops: list[int] = []
        partials: list[float] = []
        legs: list[float] = []
        chosen_features: list[np.ndarray] = []
        while True:
            candidates = feasible_candidates(ctx, progress, unserved)
            if len(candidates) == 0:
                break  # close the trip
            pick, features = choose(candidates, progress, unserved)
            leg = float(ctx.dist[progress.position, pick])
            arrival = progress.time + leg / ctx.speed
            service = max(arrival, float(ctx.window_open[pick]))
            partials.append(step_partial_reward(ctx, leg, service - progress.time))
            legs.append(leg)
            if features is not None:
                chosen_features.append(features)
            cluster = int(ctx.cluster_of[pick])
            progress.served_in_cluster[cluster] += 1
            progress.current_cluster = cluster
            progress.remaining -= int(ctx.quantities[pick])
            progress.time = service + ctx.service_time
            progress.position = pick
            unserved[pick] = False
            stops.append(pick)

        return_leg = float(ctx.dist[progress.position, ctx.depot_index])
        plan = TripPlan(
            depot_id=ctx.depot.id,
            vehicle_id=vehicle.id,
            order_ids=[ctx.order_ids[i] for i in stops],
            start_time=ctx.now,
        )
        trip = world.execute_trip(plan)  # raises TripRejected on any bug
        trips.append(trip)
        if abs(trip.return_distance - return_leg) > 1e-9 or len(trip.leg_distances) != len(legs):
            raise InvariantViolation("trip geometry diverged from the planned route")
        r_term = terminal_reward(ctx.neighborhood_radius, legs, return_leg)
        rewards = settle_trip(partials, r_term, discount)
        if chosen_features:
            experiences.extend(zip(chosen_features, rewards))

    dropped = [ctx.order_ids[i] for i in np.flatnonzero(unserved)]
    return RoutingOutcome(trips=trips, dropped=dropped, experiences=experiences)


def route_heuristic(world: WorldState, ctx: RoutingContext) -> RoutingOutcome:
    """Serve the feasible customer whose window opens first, until none are left."""

    def choose(candidates, progress, unserved):
        opens = ctx.window_open[candidates]
        pick = candidates[int(np.lexsort((candidates, opens))[0])]
        return int(pick), None

    return _close_loop(world, ctx, choose, discount=0.9)


def route_learned(
    world: WorldState,
    ctx: RoutingContext,
    net: DenseNet,
    epsilon: float,
    rng: np.random.Generator,
    discount: float,
    greedy: bool = False,
) -> RoutingOutcome:
    """Value-net candidate selection; uniform explore / softmax exploit / argmax eval."""

    def choose(candidates, progress, unserved):
        features = np.stack([candidate_features(ctx, progress, unserved, c) for c in candidates])
        if not greedy and epsilon > 0.0 and rng.random() < epsilon:
            i = int(rng.integers(len(candidates)))
            return int(candidates[i]), features[i]
        values = net.forward(features).reshape(-1)
        if greedy:
            i = int(np.argmax(values))
        else:
            logits = values - values.max()
            probs = np.exp(logits)
            probs /= probs.sum()
            i = int(rng.choice(len(candidates), p=probs))
        return int(candidates[i]), features[i]

    return _close_loop(world, ctx, choose, discount)
