"""Order-assignment policies: per-order warehouse choice or deferral.

Actions 0..N-1 assign the order to that warehouse, action N holds it for the
next wave. The heuristic picks the nearest warehouse with enough stock; the
learned policy is a DQN over a 19-feature state (embedding, geometry,
inventory, demand, window, clock, holding age, fleet idleness).

Rewards settle only once an order reaches a terminal state: a served order's
assign decision earns transport_weight * (D + L) + F + utilization_weight * U
where D is minus the depot distance, L minus the per-customer share of the
round trip (scaled to [-1, 0]), F the fulfillment indicator, and U minus the
empty fraction of the vehicle; a dropped order earns -10. Earlier hold
decisions of the same order receive the base discounted by how many waves
before settlement they were taken.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation, OrderStateError
from .nets import DenseNet, ReplayBuffer, Transition, td_targets
from .world import MAX_WAREHOUSE_DISTANCE, Order, Trip, WorldState, distance

DROP_PENALTY = -10.0
WORST_ROUND_TRIP = 2.0 * MAX_WAREHOUSE_DISTANCE  # out-and-back to a far corner
DEMAND_SCALE = 10.0   # demand is drawn from U{1..10}
HOLDING_SCALE = 10.0  # defer counts beyond 10 saturate past 1.0


def state_size(warehouse_count: int) -> int:
    """2 embedding + N distances + N stocks + demand + 2 window + clock + holding + N fleet."""
    return 7 + 3 * warehouse_count


def assemble_state(world: WorldState, order: Order, embedding: np.ndarray, now: float) -> np.ndarray:
    """Feature vector in the fixed order documented in `state_size`."""
    if len(embedding) != 2:
        raise ValueError(f"embedding must have 2 entries, got {len(embedding)}")
    tau = world.params.episode_length
    features = [float(embedding[0]), float(embedding[1])]
    features += [distance(w.location, order.location) for w in world.warehouses]
    features += [w.inventory / w.max_inventory for w in world.warehouses]
    features.append(order.quantity / DEMAND_SCALE)
    features.append(order.window_open / tau)
    features.append(order.window_close / tau)
    features.append(now / tau)
    features.append(order.defer_count / HOLDING_SCALE)
    features += [1.0 if world.idle_vehicles(w.id, now) else 0.0 for w in world.warehouses]
    return np.array(features)


def feasibility_mask(world: WorldState, order: Order, defer_allowed: bool) -> np.ndarray:
    """Boolean legality per action; warehouses need stock, defer must not imply a drop."""
    mask = np.array([w.inventory >= order.quantity for w in world.warehouses] + [defer_allowed])
    return mask


def heuristic_action(world: WorldState, order: Order) -> int:
    """Nearest warehouse with enough stock; defer when none qualifies.

    Ties on distance break toward the lower warehouse id.
    """
    best = None
    best_dist = None
    for w in world.warehouses:
        if w.inventory < order.quantity:
            continue
        d = distance(w.location, order.location)
        if best_dist is None or d < best_dist:
            best, best_dist = w.id, d
    return len(world.warehouses) if best is None else best


def q_action(net: DenseNet, state: np.ndarray, epsilon: float, mask: np.ndarray,
             rng: np.random.Generator) -> int:
    """Epsilon-greedy action over the legal set (greedy ties -> lowest index)."""
    legal = np.flatnonzero(mask)
    if len(legal) == 0:
        raise InvariantViolation("q_action called with an empty feasibility mask")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(legal[rng.integers(len(legal))])
    values = net.forward(state)
    masked = np.where(mask, values, -np.inf)
    return int(np.argmax(masked))


# ----- rewards -----

@dataclass(frozen=True)
class RewardComponents:
    distance: float     # D: minus depot-to-customer distance, in [-2.1214, 0]
    trip: float         # L: minus this customer's share of the round trip, in [-1, 0]
    fulfilled: float    # F: 1 when the order was served
    utilization: float  # U: minus the empty capacity fraction, in [-1, 0]


def reward_components(world: WorldState, order: Order, trip: Trip) -> RewardComponents:
    depot = world.warehouses[trip.depot_id]
    d = -distance(depot.location, order.location)
    share = trip.round_trip_distance / trip.customers
    trip_term = max(-1.0, -share / WORST_ROUND_TRIP)
    empty = (world.params.vehicle_capacity - trip.total_load) / world.params.vehicle_capacity
    return RewardComponents(distance=d, trip=trip_term, fulfilled=1.0, utilization=-empty)


def step_reward(components: RewardComponents, transport_weight: float, utilization_weight: float) -> float:
    """Weighted per-order reward; bounds are asserted as a bug trap."""
    c = components
    if not -MAX_WAREHOUSE_DISTANCE - 1e-9 <= c.distance <= 0.0:
        raise InvariantViolation(f"distance component {c.distance} out of range")
    if not -1.0 - 1e-9 <= c.trip <= 0.0:
        raise InvariantViolation(f"trip component {c.trip} out of range")
    if c.fulfilled not in (0.0, 1.0):
        raise InvariantViolation(f"fulfilled component {c.fulfilled} not boolean")
    if not -1.0 - 1e-9 <= c.utilization <= 0.0:
        raise InvariantViolation(f"utilization component {c.utilization} out of range")
    return transport_weight * (c.distance + c.trip) + c.fulfilled + utilization_weight * c.utilization


# ----- pending-reward ledger -----

@dataclass
class _Decision:
    state: np.ndarray | None  # None for heuristic/frozen policies (no experience)
    action: int
    kind: str  # "defer" | "assign"


@dataclass
class SettledOrder:
    order_id: int
    holds: int              # defer decisions before settlement (h)
    base: float             # undiscounted settlement value: served reward or drop penalty
    order_reward: float     # discount**holds * base; counts the order exactly once
    components: RewardComponents | None
    experiences: list[Transition]
    decision_rewards: list[float] = field(default_factory=list)


class DecisionLedger:
    """Tracks per-order decisions until the order reaches a terminal state.

    Every tracked order is settled exactly once; earlier holds receive
    discount**(h - k + 1) * base (k is the 1-based hold index), the final
    assign (when present) receives the base directly.
    """

    def __init__(self, transport_weight: float, utilization_weight: float, discount: float):
        self.transport_weight = transport_weight
        self.utilization_weight = utilization_weight
        self.discount = discount
        self._pending: dict[int, list[_Decision]] = {}
        self._settled: set[int] = set()
        self.defer_events = 0

    def record_defer(self, order_id: int, state: np.ndarray | None, action: int) -> None:
        self._check_unsettled(order_id)
        self._pending.setdefault(order_id, []).append(_Decision(state, action, "defer"))
        self.defer_events += 1

    def record_assign(self, order_id: int, state: np.ndarray | None, action: int) -> None:
        self._check_unsettled(order_id)
        self._pending.setdefault(order_id, []).append(_Decision(state, action, "assign"))

    def settle_served(self, order_id: int, components: RewardComponents) -> SettledOrder:
        base = step_reward(components, self.transport_weight, self.utilization_weight)
        return self._settle(order_id, base, components)

    def settle_dropped(self, order_id: int) -> SettledOrder:
        return self._settle(order_id, DROP_PENALTY, None)

    def _settle(self, order_id: int, base: float, components: RewardComponents | None) -> SettledOrder:
        self._check_unsettled(order_id)
        decisions = self._pending.pop(order_id, [])
        holds = sum(1 for d in decisions if d.kind == "defer")
        rewards: list[float] = []
        experiences: list[Transition] = []
        k = 0
        for decision in decisions:
            if decision.kind == "defer":
                k += 1
                reward = self.discount ** (holds - k + 1) * base
            else:
                reward = base
            rewards.append(reward)
            if decision.state is not None:
                experiences.append(Transition(decision.state, decision.action, reward))
        self._settled.add(order_id)
        return SettledOrder(
            order_id=order_id,
            holds=holds,
            base=base,
            order_reward=self.discount**holds * base,
            components=components,
            experiences=experiences,
            decision_rewards=rewards,
        )

    def _check_unsettled(self, order_id: int) -> None:
        if order_id in self._settled:
            raise OrderStateError(f"order {order_id} already settled")

    def pending_count(self) -> int:
        return len(self._pending)

    def settled_count(self) -> int:
        return len(self._settled)


def train_step(net: DenseNet, buffer: ReplayBuffer, rng: np.random.Generator,
               batch_size: int, lr: float, discount: float) -> float | None:
    """One Adam step on a uniform replay batch; None while the buffer is warm."""
    if len(buffer) < batch_size:
        return None
    batch = buffer.sample(rng, batch_size)
    states, targets = td_targets(net, batch, discount)
    return net.train_batch(states, targets, lr)
