"""Assignment policy, reward identities, and the decision-settlement ledger."""
from __future__ import annotations

import numpy as np
import pytest

from lastmile.errors import InvariantViolation, OrderStateError
from lastmile.fulfillment import (
    DROP_PENALTY,
    WORST_ROUND_TRIP,
    DecisionLedger,
    RewardComponents,
    assemble_state,
    feasibility_mask,
    heuristic_action,
    q_action,
    reward_components,
    state_size,
    step_reward,
    train_step,
)
from lastmile.nets import DenseNet, ReplayBuffer, Transition
from lastmile.world import EnvParams, Order, Point, TripPlan, distance, new_world


def make_order(oid=0, x=0.7, y=0.5, qty=5, opens=0.0, closes=100.0, defers=0):
    return Order(id=oid, location=Point(x, y), quantity=qty, created_at=0.0,
                 window_open=opens, window_close=closes, defer_count=defers)


def two_depot_world():
    return new_world(EnvParams(warehouse_count=2, episode_length=30.0, wave_period=10.0,
                               vehicle_capacity=40, vehicle_speed=0.1, max_inventory=100))


# ----- state assembly -----

def test_state_size_grows_with_warehouses():
    assert state_size(1) == 10
    assert state_size(2) == 13
    assert state_size(4) == 19


def test_state_layout_slot_by_slot():
    world = two_depot_world()
    world.warehouses[0].inventory = 50
    order = make_order(0, x=0.7, y=0.5, qty=5, opens=6.0, closes=21.0, defers=2)
    world.add_orders([order])
    state = assemble_state(world, order, np.array([0.1, -0.2]), now=10.0)

    tau = 30.0
    assert state.shape == (13,)
    assert state[0] == pytest.approx(0.1)   # embedding
    assert state[1] == pytest.approx(-0.2)
    assert state[2] == pytest.approx(0.2)   # distance to depot 0 at (0.5, 0.5)
    assert state[3] == pytest.approx(1.2)   # distance to depot 1 at (-0.5, 0.5)
    assert state[4] == pytest.approx(0.5)   # depot 0 inventory fraction
    assert state[5] == pytest.approx(1.0)
    assert state[6] == pytest.approx(0.5)   # quantity / 10
    assert state[7] == pytest.approx(6.0 / tau)
    assert state[8] == pytest.approx(21.0 / tau)
    assert state[9] == pytest.approx(10.0 / tau)
    assert state[10] == pytest.approx(0.2)  # defer count / 10
    assert state[11] == 0.0                 # no fleet yet at either depot
    assert state[12] == 0.0

    world.acquire_vehicle(0, now=10.0)  # idle vehicle appears
    state = assemble_state(world, order, np.array([0.1, -0.2]), now=10.0)
    assert state[11] == 1.0
    assert state[12] == 0.0


def test_state_rejects_bad_embedding():
    world = two_depot_world()
    order = make_order()
    world.add_orders([order])
    with pytest.raises(ValueError):
        assemble_state(world, order, np.array([1.0, 2.0, 3.0]), now=0.0)


# ----- action selection -----

def test_feasibility_mask_tracks_stock_and_defer():
    world = two_depot_world()
    order = make_order(qty=5)
    world.add_orders([order])
    world.warehouses[0].inventory = 4
    mask = feasibility_mask(world, order, defer_allowed=True)
    np.testing.assert_array_equal(mask, [False, True, True])
    mask = feasibility_mask(world, order, defer_allowed=False)
    np.testing.assert_array_equal(mask, [False, True, False])


def test_heuristic_prefers_nearest_stocked_depot():
    world = two_depot_world()
    order = make_order(x=-0.4, y=0.5, qty=5)  # closer to depot 1
    world.add_orders([order])
    assert heuristic_action(world, order) == 1
    world.warehouses[1].inventory = 4
    assert heuristic_action(world, order) == 0
    world.warehouses[0].inventory = 4
    assert heuristic_action(world, order) == 2  # defer when nothing is stocked


def test_heuristic_breaks_distance_ties_toward_lower_id():
    world = two_depot_world()
    order = make_order(x=0.0, y=0.5)  # equidistant to both depots
    world.add_orders([order])
    assert heuristic_action(world, order) == 0


def test_q_action_explores_only_legal_actions():
    net = DenseNet([3, 4, 3], rng=np.random.default_rng(0))
    state = np.array([0.1, 0.2, 0.3])
    mask = np.array([False, True, False])
    rng = np.random.default_rng(1)
    picks = {q_action(net, state, epsilon=1.0, mask=mask, rng=rng) for _ in range(25)}
    assert picks == {1}


def test_q_action_greedy_respects_the_mask():
    net = DenseNet([2, 3], rng=np.random.default_rng(2))
    state = np.array([1.0, -1.0])
    values = net.forward(state)
    best = int(np.argmax(values))
    mask = np.ones(3, dtype=bool)
    mask[best] = False
    rng = np.random.default_rng(3)
    pick = q_action(net, state, epsilon=0.0, mask=mask, rng=rng)
    assert pick != best
    assert values[pick] == max(values[i] for i in range(3) if mask[i])


def test_q_action_requires_a_legal_action():
    net = DenseNet([2, 3], rng=np.random.default_rng(4))
    with pytest.raises(InvariantViolation):
        q_action(net, np.zeros(2), 0.0, np.zeros(3, dtype=bool), np.random.default_rng(0))


# ----- reward identities -----

def served_trip(world, order_id=0):
    vehicle = world.acquire_vehicle(0, now=0.0)
    return world.execute_trip(TripPlan(0, vehicle.id, [order_id], 0.0))


def test_reward_components_hand_computed():
    world = two_depot_world()
    order = make_order(0, x=0.7, y=0.5, qty=5)
    world.add_orders([order])
    world.assign_order(0, 0)
    trip = served_trip(world)
    c = reward_components(world, order, trip)
    assert c.distance == pytest.approx(-0.2)
    assert c.trip == pytest.approx(-0.4 / WORST_ROUND_TRIP)
    assert c.fulfilled == 1.0
    assert c.utilization == pytest.approx(-35.0 / 40.0)
    total = step_reward(c, transport_weight=1.0, utilization_weight=1.0)
    assert total == pytest.approx(-0.2 - 0.4 / WORST_ROUND_TRIP + 1.0 - 0.875)


def test_trip_share_saturates_at_minus_one():
    # a fabricated pathological trip: enormous round trip for one customer
    c = RewardComponents(distance=-0.5, trip=max(-1.0, -50.0 / WORST_ROUND_TRIP),
                         fulfilled=1.0, utilization=-0.5)
    assert c.trip == -1.0
    assert step_reward(c, 1.0, 1.0) == pytest.approx(-0.5 - 1.0 + 1.0 - 0.5)


def test_reward_weights_scale_their_terms():
    c = RewardComponents(distance=-0.4, trip=-0.1, fulfilled=1.0, utilization=-0.6)
    assert step_reward(c, 2.0, 0.5) == pytest.approx(2.0 * (-0.5) + 1.0 + 0.5 * (-0.6))


def test_reward_range_traps_fire():
    good = RewardComponents(distance=-0.1, trip=-0.1, fulfilled=1.0, utilization=-0.1)
    step_reward(good, 1.0, 1.0)
    for bad in (
        RewardComponents(distance=-3.0, trip=-0.1, fulfilled=1.0, utilization=-0.1),
        RewardComponents(distance=0.1, trip=-0.1, fulfilled=1.0, utilization=-0.1),
        RewardComponents(distance=-0.1, trip=-1.5, fulfilled=1.0, utilization=-0.1),
        RewardComponents(distance=-0.1, trip=-0.1, fulfilled=0.5, utilization=-0.1),
        RewardComponents(distance=-0.1, trip=-0.1, fulfilled=1.0, utilization=0.2),
    ):
        with pytest.raises(InvariantViolation):
            step_reward(bad, 1.0, 1.0)


# ----- ledger -----

UNIT_COMPONENTS = RewardComponents(distance=0.0, trip=0.0, fulfilled=1.0, utilization=0.0)


def test_hold_chain_discounts_backwards_from_settlement():
    ledger = DecisionLedger(1.0, 1.0, discount=0.9)
    state = np.zeros(3)
    ledger.record_defer(7, state, 2)
    ledger.record_defer(7, state, 2)
    ledger.record_assign(7, state, 0)
    settled = ledger.settle_served(7, UNIT_COMPONENTS)  # base reward 1.0

    assert settled.holds == 2
    assert settled.base == pytest.approx(1.0)
    assert settled.decision_rewards == [pytest.approx(0.9**2), pytest.approx(0.9), pytest.approx(1.0)]
    assert settled.order_reward == pytest.approx(0.9**2)
    assert [t.reward for t in settled.experiences] == settled.decision_rewards
    assert [t.action for t in settled.experiences] == [2, 2, 0]
    assert ledger.defer_events == 2
    assert ledger.pending_count() == 0
    assert ledger.settled_count() == 1


def test_defer_then_drop_earns_discounted_penalty():
    ledger = DecisionLedger(1.0, 1.0, discount=0.9)
    ledger.record_defer(3, np.zeros(2), 1)
    settled = ledger.settle_dropped(3)
    assert settled.base == DROP_PENALTY
    assert settled.holds == 1
    assert settled.decision_rewards == [pytest.approx(-9.0)]
    assert settled.order_reward == pytest.approx(-9.0)


def test_untracked_orders_settle_cleanly():
    ledger = DecisionLedger(1.0, 1.0, discount=0.9)
    settled = ledger.settle_dropped(99)  # e.g. expired before any decision
    assert settled.holds == 0
    assert settled.experiences == []
    assert settled.order_reward == DROP_PENALTY


def test_settling_twice_is_an_error():
    ledger = DecisionLedger(1.0, 1.0, discount=0.9)
    ledger.record_assign(1, None, 0)
    ledger.settle_served(1, UNIT_COMPONENTS)
    with pytest.raises(OrderStateError):
        ledger.settle_dropped(1)
    with pytest.raises(OrderStateError):
        ledger.record_defer(1, None, 0)


def test_stateless_decisions_produce_no_experiences():
    ledger = DecisionLedger(1.0, 1.0, discount=0.9)
    ledger.record_defer(5, None, 2)
    ledger.record_assign(5, None, 0)
    settled = ledger.settle_served(5, UNIT_COMPONENTS)
    assert settled.experiences == []
    assert len(settled.decision_rewards) == 2


def test_weights_reach_the_settled_base():
    ledger = DecisionLedger(2.0, 0.5, discount=0.9)
    ledger.record_assign(1, None, 0)
    c = RewardComponents(distance=-0.3, trip=-0.2, fulfilled=1.0, utilization=-0.4)
    settled = ledger.settle_served(1, c)
    assert settled.base == pytest.approx(2.0 * (-0.5) + 1.0 + 0.5 * (-0.4))


# ----- replay training -----

def test_train_step_waits_for_a_full_batch():
    net = DenseNet([3, 4, 2], rng=np.random.default_rng(5))
    buf = ReplayBuffer(100)
    rng = np.random.default_rng(6)
    for i in range(3):
        buf.push(Transition(np.ones(3) * i, action=i % 2, reward=float(i)))
    assert train_step(net, buf, rng, batch_size=4, lr=0.01, discount=0.9) is None
    buf.push(Transition(np.ones(3) * 3, action=1, reward=3.0))
    digest = net.params_digest()
    loss = train_step(net, buf, rng, batch_size=4, lr=0.01, discount=0.9)
    assert loss is not None and loss >= 0.0
    assert net.params_digest() != digest


def test_nearest_depot_distance_is_consistent_with_geometry():
    world = two_depot_world()
    rng = np.random.default_rng(8)
    for _ in range(50):
        order = make_order(0, x=float(rng.uniform(-1, 1)), y=float(rng.uniform(-1, 1)))
        choice = heuristic_action(world, order)
        dists = [distance(w.location, order.location) for w in world.warehouses]
        assert choice == int(np.argmin(dists))
