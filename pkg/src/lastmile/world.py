"""World model: grid, warehouses, inventory, vehicles, orders, clock.

Coordinates are normalized: raw positions live on the [-100, 100]^2 grid and
are divided by 100 on ingestion, so every distance in the package is measured
in normalized grid units (two points are never more than 2*sqrt(2) ~ 2.83
apart, and a depot is never more than 1.5*sqrt(2) ~ 2.12 from a customer in
its service area).

Order lifecycle: Open -> {Open (defer), Assigned, Dropped};
Assigned -> {Served, Dropped}. Served and Dropped are terminal. Assigning
consumes warehouse inventory immediately; dropping an assigned order returns
it. The identity generated = open + assigned + served + dropped holds after
every operation and is asserted by `check_conservation`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .errors import ConfigError, InfeasibleActionError, InvariantViolation, OrderStateError, TripRejected

COORD_SCALE = 100.0  # raw grid half-width; divide raw coordinates by this
MAX_WAREHOUSE_DISTANCE = 1.5 * math.sqrt(2.0)  # depot to farthest grid corner
MAX_PAIR_DISTANCE = 2.0 * math.sqrt(2.0)  # two opposite grid corners
TIME_EPS = 1e-9  # tolerance for window-boundary comparisons

# Quadrant centers in normalized units; warehouse i serves quadrant i.
_QUADRANT_CENTERS = ((0.5, 0.5), (-0.5, 0.5), (-0.5, -0.5), (0.5, -0.5))


@dataclass(frozen=True)
class Point:
    x: float
    y: float


def distance(a: Point, b: Point) -> float:
    """Euclidean distance in normalized grid units."""
    return math.hypot(a.x - b.x, a.y - b.y)


def normalize_point(raw_x: float, raw_y: float) -> Point:
    """Map a raw [-100, 100] coordinate pair onto the normalized grid."""
    return Point(raw_x / COORD_SCALE, raw_y / COORD_SCALE)


class OrderState(enum.Enum):
    OPEN = "open"
    ASSIGNED = "assigned"
    SERVED = "served"
    DROPPED = "dropped"


@dataclass
class Order:
    id: int
    location: Point
    quantity: int
    created_at: float
    window_open: float   # earliest allowed service start
    window_close: float  # latest allowed service start, inclusive
    state: OrderState = OrderState.OPEN
    warehouse_id: int | None = None
    served_at: float | None = None
    trip_id: int | None = None
    defer_count: int = 0


@dataclass
class Warehouse:
    id: int
    location: Point
    inventory: int
    max_inventory: int


@dataclass
class Vehicle:
    id: int
    depot_id: int
    capacity: int
    speed: float
    available_at: float  # idle at the depot from this time on
    position: Point      # depot location whenever idle


@dataclass(frozen=True)
class Visit:
    order_id: int
    arrival: float
    service_start: float  # max(arrival, window_open); service takes service_time


@dataclass
class Trip:
    id: int
    depot_id: int
    vehicle_id: int
    start_time: float
    visits: list[Visit]
    leg_distances: list[float]  # depot->first, then customer->customer legs
    return_distance: float
    total_load: int
    end_time: float  # back at the depot

    @property
    def round_trip_distance(self) -> float:
        return sum(self.leg_distances) + self.return_distance

    @property
    def customers(self) -> int:
        return len(self.visits)


@dataclass(frozen=True)
class TripPlan:
    depot_id: int
    vehicle_id: int
    order_ids: list[int]
    start_time: float


@dataclass
class EnvParams:
    """Environment constants; see config.py for the file-level schema."""

    warehouse_count: int = 4
    episode_length: float = 300.0  # tau
    wave_period: float = 100.0     # T; decision epochs at 0, T, ..., tau - T
    restock_halves: bool = False   # extra restock halfway through each wave
    vehicle_capacity: int = 40
    vehicle_speed: float = 0.1     # normalized units per time unit
    service_time: float = 1.0      # on-site time per customer
    max_inventory: int = 500

    def validate(self) -> list[str]:
        problems = []
        if not 1 <= self.warehouse_count <= len(_QUADRANT_CENTERS):
            problems.append(f"env.warehouse_count must be in 1..4, got {self.warehouse_count}")
        if self.wave_period <= 0:
            problems.append(f"env.wave_period must be positive, got {self.wave_period}")
        elif self.episode_length <= self.wave_period:
            problems.append(
                f"env.episode_length ({self.episode_length}) must exceed env.wave_period ({self.wave_period})"
            )
        elif abs(self.episode_length / self.wave_period - round(self.episode_length / self.wave_period)) > 1e-9:
            problems.append("env.wave_period must divide env.episode_length")
        if self.vehicle_capacity <= 0:
            problems.append(f"env.vehicle_capacity must be positive, got {self.vehicle_capacity}")
        if self.vehicle_speed <= 0:
            problems.append(f"env.vehicle_speed must be positive, got {self.vehicle_speed}")
        if self.service_time < 0:
            problems.append(f"env.service_time must be non-negative, got {self.service_time}")
        if self.max_inventory <= 0:
            problems.append(f"env.max_inventory must be positive, got {self.max_inventory}")
        return problems

    def wave_count(self) -> int:
        return int(round(self.episode_length / self.wave_period))

    def wave_times(self) -> list[float]:
        return [w * self.wave_period for w in range(self.wave_count())]


class WorldState:
    """Mutable simulation state for one episode."""

    def __init__(self, params: EnvParams):
        problems = params.validate()
        if problems:
            raise ConfigError(problems)
        self.params = params
        self.clock = 0.0
        self.warehouses = [
            Warehouse(i, Point(*_QUADRANT_CENTERS[i]), params.max_inventory, params.max_inventory)
            for i in range(params.warehouse_count)
        ]
        self.fleets: dict[int, list[Vehicle]] = {w.id: [] for w in self.warehouses}
        self.orders: dict[int, Order] = {}
        self.trips: list[Trip] = []

    # ----- inventory -----

    def restock(self) -> None:
        """Reset every warehouse to its maximum inventory (idempotent)."""
        for w in self.warehouses:
            w.inventory = w.max_inventory

    # ----- orders -----

    def add_orders(self, orders: list[Order]) -> None:
        for order in orders:
            if order.id in self.orders:
                raise InvariantViolation(f"duplicate order id {order.id}")
            self.orders[order.id] = order

    def open_orders(self) -> list[Order]:
        """Open orders in first-come-first-served decision order."""
        pending = [o for o in self.orders.values() if o.state is OrderState.OPEN]
        pending.sort(key=lambda o: (o.created_at, o.id))
        return pending

    def assign_order(self, order_id: int, warehouse_id: int) -> None:
        """Commit an open order to a warehouse, consuming inventory."""
        order = self._get_order(order_id)
        if order.state is not OrderState.OPEN:
            raise OrderStateError(f"order {order_id} is {order.state.value}, not open")
        warehouse = self.warehouses[warehouse_id]
        if warehouse.inventory < order.quantity:
            raise InfeasibleActionError(
                f"warehouse {warehouse_id} holds {warehouse.inventory} < demand {order.quantity}"
            )
        warehouse.inventory -= order.quantity
        order.state = OrderState.ASSIGNED
        order.warehouse_id = warehouse_id

    def defer_order(self, order_id: int, now: float) -> str:
        """Hold an open order for the next wave, or drop it if that wave is too late.

        Returns "deferred" or "dropped". A defer whose next decision epoch
        (now + wave_period) falls beyond the order's window close can never be
        served, so it converts to an immediate drop without counting as a hold.
        """
        order = self._get_order(order_id)
        if order.state is not OrderState.OPEN:
            raise OrderStateError(f"order {order_id} is {order.state.value}, not open")
        if order.window_close >= now + self.params.wave_period - TIME_EPS:
            order.defer_count += 1
            return "deferred"
        self.drop_order(order_id)
        return "dropped"

    def drop_order(self, order_id: int) -> None:
        """Terminal drop; returns inventory if the order had been assigned."""
        order = self._get_order(order_id)
        if order.state is OrderState.SERVED or order.state is OrderState.DROPPED:
            raise OrderStateError(f"order {order_id} is already {order.state.value}")
        if order.state is OrderState.ASSIGNED:
            self.warehouses[order.warehouse_id].inventory += order.quantity
            order.warehouse_id = None
        order.state = OrderState.DROPPED

    def drop_expired(self, now: float) -> list[int]:
        """Drop every non-terminal order whose service window has passed."""
        expired = []
        for order in self.orders.values():
            if order.state in (OrderState.OPEN, OrderState.ASSIGNED) and order.window_close < now - TIME_EPS:
                self.drop_order(order.id)
                expired.append(order.id)
        return sorted(expired)

    def _get_order(self, order_id: int) -> Order:
        try:
            return self.orders[order_id]
        except KeyError:
            raise OrderStateError(f"unknown order {order_id}") from None

    # ----- vehicles -----

    def idle_vehicles(self, depot_id: int, now: float) -> list[Vehicle]:
        pool = [v for v in self.fleets[depot_id] if v.available_at <= now + TIME_EPS]
        pool.sort(key=lambda v: (v.available_at, v.id))
        return pool

    def acquire_vehicle(self, depot_id: int, now: float) -> Vehicle:
        """Reuse the longest-idle vehicle at the depot, or spawn a fresh one."""
        pool = self.idle_vehicles(depot_id, now)
        if pool:
            return pool[0]
        fleet = self.fleets[depot_id]
        vehicle = Vehicle(
            id=len(fleet),
            depot_id=depot_id,
            capacity=self.params.vehicle_capacity,
            speed=self.params.vehicle_speed,
            available_at=now,
            position=self.warehouses[depot_id].location,
        )
        fleet.append(vehicle)
        return vehicle

    # ----- trips -----

    def execute_trip(self, plan: TripPlan) -> Trip:
        """Validate and run a trip; no state changes if any check fails.

        Service at each stop starts at max(arrival, window_open) and must not
        start after window_close; waiting before a window opens is allowed.
        On success the visited orders become Served and the vehicle is busy
        until it is back at the depot.
        """
        violations: list[str] = []
        depot = self.warehouses[plan.depot_id]
        fleet = self.fleets[plan.depot_id]
        vehicle = fleet[plan.vehicle_id] if 0 <= plan.vehicle_id < len(fleet) else None
        if vehicle is None:
            violations.append(f"unknown vehicle {plan.vehicle_id} at depot {plan.depot_id}")
        elif vehicle.available_at > plan.start_time + TIME_EPS:
            violations.append(
                f"vehicle {plan.vehicle_id} busy until {vehicle.available_at}, trip starts {plan.start_time}"
            )
        if not plan.order_ids:
            violations.append("trip plan has no orders")
        if len(set(plan.order_ids)) != len(plan.order_ids):
            violations.append("trip plan repeats an order")

        orders = []
        for oid in plan.order_ids:
            order = self.orders.get(oid)
            if order is None:
                violations.append(f"unknown order {oid}")
            elif order.state is not OrderState.ASSIGNED or order.warehouse_id != plan.depot_id:
                violations.append(f"order {oid} not assigned to depot {plan.depot_id}")
            else:
                orders.append(order)
        if violations:
            raise TripRejected(violations)

        load = sum(o.quantity for o in orders)
        if load > self.params.vehicle_capacity:
            violations.append(f"capacity: load {load} > {self.params.vehicle_capacity}")

        speed = self.params.vehicle_speed
        position = depot.location
        t = plan.start_time
        visits: list[Visit] = []
        legs: list[float] = []
        for order in orders:
            leg = distance(position, order.location)
            legs.append(leg)
            arrival = t + leg / speed
            service = max(arrival, order.window_open)
            if service > order.window_close + TIME_EPS:
                violations.append(
                    f"window: order {order.id} service {service:.6f} > close {order.window_close:.6f}"
                )
            visits.append(Visit(order.id, arrival, service))
            t = service + self.params.service_time
            position = order.location
        if violations:
            raise TripRejected(violations)

        return_distance = distance(position, depot.location)
        end_time = t + return_distance / speed

        trip = Trip(
            id=len(self.trips),
            depot_id=plan.depot_id,
            vehicle_id=plan.vehicle_id,
            start_time=plan.start_time,
            visits=visits,
            leg_distances=legs,
            return_distance=return_distance,
            total_load=load,
            end_time=end_time,
        )
        for order, visit in zip(orders, visits):
            order.state = OrderState.SERVED
            order.served_at = visit.service_start
            order.trip_id = trip.id
        vehicle.available_at = end_time
        self.trips.append(trip)
        return trip

    # ----- bookkeeping -----

    def state_counts(self) -> dict[str, int]:
        counts = {s.value: 0 for s in OrderState}
        for order in self.orders.values():
            counts[order.state.value] += 1
        return counts

    def check_conservation(self) -> None:
        counts = self.state_counts()
        total = sum(counts.values())
        if total != len(self.orders):
            raise InvariantViolation(f"order conservation broken: {counts} vs {len(self.orders)} generated")
        for w in self.warehouses:
            if not 0 <= w.inventory <= w.max_inventory:
                raise InvariantViolation(f"warehouse {w.id} inventory {w.inventory} out of [0, {w.max_inventory}]")


def capacity_utilization(trip: Trip, capacity: int) -> float:
    """Fraction of vehicle capacity used by the trip's load."""
    return trip.total_load / capacity


def new_world(params: EnvParams | None = None) -> WorldState:
    return WorldState(params or EnvParams())


# ----- snapshots -----

DUMP_COLUMNS = [
    "order_id", "x", "y", "quantity", "created_at", "window_open", "window_close",
    "state", "warehouse_id", "served_at",
]


def dump_orders(world: WorldState) -> list[dict]:
    """Order table as plain records (see DUMP_COLUMNS for the schema)."""
    rows = []
    for order in sorted(world.orders.values(), key=lambda o: o.id):
        rows.append({
            "order_id": order.id,
            "x": order.location.x,
            "y": order.location.y,
            "quantity": order.quantity,
            "created_at": order.created_at,
            "window_open": order.window_open,
            "window_close": order.window_close,
            "state": order.state.value,
            "warehouse_id": -1 if order.warehouse_id is None else order.warehouse_id,
            "served_at": -1.0 if order.served_at is None else order.served_at,
        })
    return rows


def orders_from_rows(rows: list[dict]) -> list[Order]:
    """Rebuild Order objects from dump records (fixture import path)."""
    orders = []
    for row in rows:
        wid = int(row["warehouse_id"])
        served = float(row["served_at"])
        orders.append(Order(
            id=int(row["order_id"]),
            location=Point(float(row["x"]), float(row["y"])),
            quantity=int(row["quantity"]),
            created_at=float(row["created_at"]),
            window_open=float(row["window_open"]),
            window_close=float(row["window_close"]),
            state=OrderState(str(row["state"])),
            warehouse_id=None if wid < 0 else wid,
            served_at=None if served < 0 else served,
        ))
    return orders
