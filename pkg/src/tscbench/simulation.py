"""Deterministic point-queue traffic microsimulator.

Vehicles enter on demand-profile entry lanes, travel at free-flow speed,
stack vertically at stop lines (one jam-spacing slot per vehicle) and
discharge across the stop line at saturation headway during green.
The simulator is a pure function of (network, demand, controllers, seed).
"""

from __future__ import annotations

import math
import statistics

import numpy as np

from .network import NetworkModel

GREEN = "green"
YELLOW = "yellow"
ALLRED = "allred"

DEFAULT_SATURATION_FLOW = 1800.0  # veh/h/lane -> 2 s discharge headway
DEFAULT_DRAIN_CAP = 600.0         # extra seconds after demand end

_EPS = 1e-9


class DemandProfile:
    """Piecewise-linear arrival rates (veh/h) per entry lane."""

    def __init__(self, rates: dict, horizon: float | None = None):
        if not rates:
            raise ValueError("demand profile has no entry lanes")
        self.breakpoints = {}
        max_t = 0.0
        for lane, pts in rates.items():
            pts = sorted((float(t), float(r)) for t, r in pts)
            if any(r < 0 for _, r in pts):
                raise ValueError(f"negative rate for lane {lane!r}")
            self.breakpoints[lane] = pts
            max_t = max(max_t, pts[-1][0])
        self.horizon = float(horizon) if horizon is not None else max_t
        if self.horizon <= 0:
            raise ValueError("demand horizon must be > 0")
        # per-second lookup tables, cheap enough for desk-scale horizons
        n = int(math.ceil(self.horizon)) + 1
        ts = np.arange(n, dtype=float)
        self._table = {}
        for lane, pts in self.breakpoints.items():
            xp = [t for t, _ in pts]
            fp = [r for _, r in pts]
            self._table[lane] = np.interp(ts, xp, fp)

    def rate(self, lane: str, t: float) -> float:
        tab = self._table.get(lane)
        if tab is None:
            return 0.0
        i = int(t)
        if i < 0 or i >= len(tab):
            return 0.0
        return float(tab[i])

    @property
    def entry_lanes(self):
        return tuple(self.breakpoints)


def load_demand(path) -> DemandProfile:
    import json
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return DemandProfile(data)


class Vehicle:
    __slots__ = ("id", "route", "leg", "position", "queued", "entry_time",
                 "exit_time", "free_flow_time", "ff_completed")

    def __init__(self, vid: int, route: tuple, entry_time: float,
                 free_flow_time: float):
        self.id = vid
        self.route = route
        self.leg = 0
        self.position = 0.0
        self.queued = False
        self.entry_time = entry_time
        self.exit_time = None
        self.free_flow_time = free_flow_time
        self.ff_completed = 0.0  # free-flow seconds for completed legs


def vehicle_delay(veh: Vehicle, now: float, lane_speed: float) -> float:
    """Elapsed time minus free-flow time for the distance covered so far."""
    if veh.exit_time is not None:
        elapsed = veh.exit_time - veh.entry_time
        return max(0.0, elapsed - veh.free_flow_time)
    elapsed = now - veh.entry_time
    ff = veh.ff_completed + veh.position / lane_speed
    return max(0.0, elapsed - ff)


class MoELog:
    """Per-episode measures of effectiveness."""

    def __init__(self, intersection_ids):
        self.travel_times = []          # (exit time, travel time) pairs
        self.times = []
        self.queue = {iid: [] for iid in intersection_ids}
        self.delay = {iid: [] for iid in intersection_ids}
        self.unfinished = 0
        self.injected = 0
        self.exited = 0
        self.blocked = 0

    @property
    def travel_time_values(self):
        return [tt for _, tt in self.travel_times]

    def summary(self) -> dict:
        tts = self.travel_time_values
        return {
            "samples": len(tts),
            "mean_travel_time": statistics.fmean(tts) if tts else None,
            "std_travel_time": statistics.pstdev(tts) if tts else None,
            "median_travel_time": statistics.median(tts) if tts else None,
            "unfinished": self.unfinished,
            "injected": self.injected,
            "exited": self.exited,
            "blocked": self.blocked,
        }

    def csv_rows(self):
        rows = [("kind", "intersection_id", "time_s", "value")]
        for t, tt in self.travel_times:
            rows.append(("travel_time", "network", repr(t), repr(tt)))
        for iid in self.queue:
            for t, q, d in zip(self.times, self.queue[iid], self.delay[iid]):
                rows.append(("queue", iid, repr(t), repr(q)))
                rows.append(("delay", iid, repr(t), repr(d)))
        return rows


class Simulation:
    """Mutable per-episode simulator state. Strictly single-threaded."""

    def __init__(self, net: NetworkModel, demand: DemandProfile, seed: int,
                 saturation_flow: float = DEFAULT_SATURATION_FLOW,
                 inject_until: float | None = None):
        self.net = net
        self.demand = demand
        self.rng = np.random.default_rng(seed)
        self.t = 0.0
        self.headway = math.ceil(3600.0 / saturation_flow)
        self.inject_until = (demand.horizon if inject_until is None
                             else min(inject_until, demand.horizon))

        self.lane_vehicles = {lid: [] for lid in net.lanes}
        self.green_elapsed = {lid: 0.0 for lid in net.lanes}
        self._next_vid = 0

        # conservation ledger
        self.injected = 0
        self.exited = 0
        self.blocked = 0
        self.exited_this_step = []       # Vehicle objects that left this step
        self.crossings_this_step = {}    # (iid, lane id) -> count
        self.nongreen_crossings = 0      # safety audit, must stay 0

        self._expected_cmd_keys = frozenset(ix.id for ix in net.intersections)
        self._incoming_of = {ix.id: ix.incoming for ix in net.intersections}
        self._phase_inc = {(ix.id, p.id): p.incoming
                           for ix in net.intersections for p in ix.phases}
        controlled = {lid for ix in net.intersections for lid in ix.incoming}
        self._sink_lanes = frozenset(lid for lid in net.lanes
                                     if lid not in controlled)
        self._entry_routes = {lane: net.routes_from(lane)
                              for lane in demand.entry_lanes}
        self._route_ff = {r: sum(net.lanes[l].free_flow_time for l in r)
                          for r in net.routes}

    # -- queries used by controllers -------------------------------------

    def count_within(self, lane_id: str, bound: float) -> int:
        lane = self.net.lanes[lane_id]
        cut = lane.length - bound
        if cut <= 0:
            return len(self.lane_vehicles[lane_id])
        return sum(1 for v in self.lane_vehicles[lane_id] if v.position >= cut)

    def queued_within(self, lane_id: str, bound: float) -> int:
        lane = self.net.lanes[lane_id]
        cut = lane.length - bound
        return sum(1 for v in self.lane_vehicles[lane_id]
                   if v.queued and v.position >= cut)

    def capacity_within(self, lane_id: str, bound: float) -> int:
        lane = self.net.lanes[lane_id]
        if bound >= lane.length:
            return lane.jam_capacity
        return max(1, math.floor(bound / lane.spacing))

    def vehicles_on(self, lane_id: str):
        return self.lane_vehicles[lane_id]

    def total_vehicles(self) -> int:
        return sum(len(vs) for vs in self.lane_vehicles.values())

    def delay_sum(self, lane_ids, bound: float | None = None) -> float:
        total = 0.0
        now = self.t
        for lid in lane_ids:
            lane = self.net.lanes[lid]
            cut = -1.0 if bound is None else lane.length - bound
            speed = lane.speed_limit
            for v in self.lane_vehicles[lid]:
                if v.position >= cut:
                    total += vehicle_delay(v, now, speed)
        return total

    # -- dynamics ---------------------------------------------------------

    def step(self, commands: dict, dt: float = 1.0) -> None:
        unknown = set(commands) - self._expected_cmd_keys
        if unknown:
            raise KeyError(f"command for unknown intersection(s) {sorted(unknown)}")
        missing = self._expected_cmd_keys - set(commands)
        if missing:
            raise KeyError(f"missing command for intersection(s) {sorted(missing)}")

        t = self.t
        lanes = self.net.lanes
        lane_vehicles = self.lane_vehicles
        self.exited_this_step = []
        self.crossings_this_step = {}

        # (a) arrivals
        if t < self.inject_until:
            for entry, routes in self._entry_routes.items():
                rate = self.demand.rate(entry, t)
                draw = self.rng.random()
                if rate <= 0.0 or draw >= rate * dt / 3600.0:
                    continue
                if len(lane_vehicles[entry]) >= lanes[entry].jam_capacity:
                    self.blocked += 1
                    continue
                route = routes[int(self.rng.integers(len(routes)))] \
                    if len(routes) > 1 else routes[0]
                veh = Vehicle(self._next_vid, route, t, self._route_ff[route])
                self._next_vid += 1
                self.injected += 1
                lane_vehicles[entry].append(veh)

        # (b) advance free vehicles / join queues
        for lid, vehs in lane_vehicles.items():
            if not vehs:
                continue
            lane = lanes[lid]
            length = lane.length
            move = lane.speed_limit * dt
            if lid in self._sink_lanes:
                n_exit = 0
                for v in vehs:
                    v.position += move
                    v.queued = False
                    if v.position >= length - _EPS:
                        if v.leg == len(v.route) - 1:
                            self._exit_vehicle(v)
                            n_exit += 1
                        else:
                            v.position = length  # malformed route; pin at end
                if n_exit:
                    del vehs[:n_exit]
            else:
                spacing = lane.spacing
                for i, v in enumerate(vehs):
                    limit = length - spacing * i
                    if v.position < limit - _EPS:
                        v.position = min(v.position + move, limit)
                    v.queued = v.position >= limit - _EPS

        # (c) saturation-headway discharge on green
        headway = self.headway
        for iid, indication in commands.items():
            kind = indication[0]
            if kind == GREEN:
                green_inc = self._phase_inc[(iid, indication[1])]
                for lid in self._incoming_of[iid]:
                    if lid in green_inc:
                        self.green_elapsed[lid] += dt
                    else:
                        self.green_elapsed[lid] = 0.0
                for lid in green_inc:
                    if self.green_elapsed[lid] < headway:
                        continue
                    vehs = lane_vehicles[lid]
                    if not vehs:
                        continue
                    head = vehs[0]
                    if not (head.queued and
                            head.position >= lanes[lid].length - 1e-6):
                        continue
                    if head.leg == len(head.route) - 1:
                        vehs.pop(0)
                        self._complete_leg(head, lanes[lid])
                        self._exit_vehicle(head)
                    else:
                        target = head.route[head.leg + 1]
                        if len(lane_vehicles[target]) >= lanes[target].jam_capacity:
                            continue
                        vehs.pop(0)
                        self._complete_leg(head, lanes[lid])
                        head.leg += 1
                        head.position = 0.0
                        head.queued = False
                        lane_vehicles[target].append(head)
                    self.green_elapsed[lid] = 0.0
                    key = (iid, lid)
                    self.crossings_this_step[key] = \
                        self.crossings_this_step.get(key, 0) + 1
            else:
                for lid in self._incoming_of[iid]:
                    self.green_elapsed[lid] = 0.0

        # (e) clock
        self.t = t + dt

    def _complete_leg(self, veh: Vehicle, lane) -> None:
        veh.ff_completed += lane.free_flow_time

    def _exit_vehicle(self, veh: Vehicle) -> None:
        veh.exit_time = self.t + 1.0  # leaves during this step
        veh.position = self.net.lanes[veh.route[veh.leg]].length
        self.exited += 1
        self.exited_this_step.append(veh)

    def conservation_ok(self) -> bool:
        return self.injected == self.exited + self.total_vehicles()


def collect_moe(sim: Simulation, log: MoELog) -> None:
    """Append one step's MoE increment; call once per step after step()."""
    now = sim.t
    log.times.append(now)
    for ix in sim.net.intersections:
        q = 0
        d = 0.0
        for lid in ix.incoming:
            speed = sim.net.lanes[lid].speed_limit
            for v in sim.lane_vehicles[lid]:
                if v.queued:
                    q += 1
                d += vehicle_delay(v, now, speed)
        log.queue[ix.id].append(q)
        log.delay[ix.id].append(d)
    for v in sim.exited_this_step:
        log.travel_times.append((v.exit_time, v.exit_time - v.entry_time))
    log.injected = sim.injected
    log.exited = sim.exited
    log.blocked = sim.blocked


def run_episode(net: NetworkModel, demand: DemandProfile, controllers: dict,
                seed: int, horizon: float | None = None,
                drain: float = DEFAULT_DRAIN_CAP,
                saturation_flow: float = DEFAULT_SATURATION_FLOW) -> MoELog:
    """Full observe -> decide -> sequence -> step -> collect loop.

    `controllers` maps intersection id -> controller instance. Vehicles
    still in the network after the drain window are reported as unfinished
    and excluded from travel-time statistics.
    """
    from .control import SignalUnit

    if horizon is None:
        horizon = demand.horizon
    if horizon > demand.horizon + drain:
        raise ValueError("horizon exceeds demand horizon plus drain allowance")
    missing = [ix.id for ix in net.intersections if ix.id not in controllers]
    if missing:
        raise ValueError(f"no controller for intersection(s) {missing}")

    sim = Simulation(net, demand, seed, saturation_flow=saturation_flow,
                     inject_until=horizon)
    units = {ix.id: SignalUnit(net, ix.id, controllers[ix.id], sim)
             for ix in net.intersections}
    for ctrl in controllers.values():
        ctrl.begin_episode()

    log = MoELog([ix.id for ix in net.intersections])

    def one_second():
        commands = {iid: unit.advance() for iid, unit in units.items()}
        sim.step(commands)
        for unit in units.values():
            unit.after_step()
        collect_moe(sim, log)

    while sim.t < horizon:
        one_second()
    deadline = horizon + drain
    while sim.t < deadline and sim.total_vehicles() > 0:
        one_second()

    log.unfinished = sim.total_vehicles()
    for ctrl in controllers.values():
        ctrl.end_episode()
    return log
