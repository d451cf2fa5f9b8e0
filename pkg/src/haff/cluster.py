"""Deterministic discrete-event simulation of a failover cluster.

Application servers host services; an observer polls the servers and the
administration registry reacts to declared failures by moving sessions to
surviving servers, where their interrupted calls resume from the failover
management store. Everything runs on a logical clock, one tick at a time:

1. invocations due at this tick complete,
2. the observer polls (ticks divisible by ``poll_interval``),
3. scenario events for this tick run in file order.

An invocation of ``n`` interpreter steps occupies its server for
``ceil(n / steps_per_tick)`` ticks. Crashing a server kills its in-flight calls
after the steps they managed to run; the records they stored survive because
the failover store is shared by all servers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

from haff.aslt import AsltTree
from haff.errors import DeployError, HaffError, NoServerError, UnknownPairError
from haff.fom import FailoverManagement, FomConfig, MemoryFom, fom_for_service
from haff.runtime import CrashPlan, Returned, Value, invoke
from haff.scenario import Scenario, ScenarioEvent, SimConfig
from haff.transform import MethodRegistry

UP, DOWN, OVERLOAD = "UP", "DOWN", "OVERLOAD"

ServiceUnit = tuple[AsltTree, MethodRegistry]


@dataclass
class AvailabilityHistory:
    # [start, end or None while open, state]
    intervals: list[list] = field(default_factory=list)

    @property
    def state(self) -> Optional[str]:
        return self.intervals[-1][2] if self.intervals else None

    def transition(self, state: str, tick: int) -> bool:
        """Move to ``state`` at ``tick``; returns False when nothing changed."""
        if self.state == state:
            return False
        if self.intervals and self.intervals[-1][0] == tick:
            # zero-length interval: overwrite instead of leaving a gap-free stub
            self.intervals.pop()
            if self.intervals and self.intervals[-1][2] == state:
                self.intervals[-1][1] = None
                return True
            if self.intervals:
                self.intervals[-1][1] = tick
        elif self.intervals:
            self.intervals[-1][1] = tick
        self.intervals.append([tick, None, state])
        return True


@dataclass
class AppServer:
    name: str
    capacity: int
    load_threshold: int
    status: str = "Up"  # Up | Down
    deployed: set[str] = field(default_factory=set)
    load: int = 0
    declared_failed: bool = False

    @property
    def usable(self) -> bool:
        return self.status == "Up" and not self.declared_failed and self.load < self.capacity


@dataclass
class ObserverState:
    poll_interval: int = 5
    miss_threshold: int = 2
    misses: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.poll_interval < 1 or self.miss_threshold < 1:
            raise ValueError("poll_interval and miss_threshold must be >= 1")


@dataclass
class AdminRegistry:
    servers: dict[str, AppServer] = field(default_factory=dict)
    services: dict[str, set[str]] = field(default_factory=dict)
    assignments: dict[str, str] = field(default_factory=dict)
    histories: dict[tuple[str, str], AvailabilityHistory] = field(default_factory=dict)

    def host(self, service: str, server: str, tick: int) -> None:
        srv = self.servers[server]
        srv.deployed.add(service)
        self.services.setdefault(service, set()).add(server)
        hist = self.histories.setdefault((service, server), AvailabilityHistory())
        hist.transition(UP, tick)


def assign_client(registry: AdminRegistry, session_id: str, service: str, tick: int = 0) -> str:
    """Least-loaded usable host of ``service``, ties to the smallest name.

    When no usable server hosts the service it is started on the least-loaded
    usable server. Raises :class:`NoServerError` when no server is usable.
    """
    usable = [s for s in registry.servers.values() if s.usable]
    if not usable:
        raise NoServerError(f"no running server can host {service!r} for session {session_id!r}")
    hosts = [s for s in usable if service in s.deployed]
    chosen = min(hosts or usable, key=lambda s: (s.load, s.name))
    if not hosts:
        registry.host(service, chosen.name, tick)
    registry.assignments[session_id] = chosen.name
    return chosen.name


def record_overload(registry: AdminRegistry, service: str, server: str, load: int,
                    threshold: int, tick: int) -> None:
    hist = registry.histories.get((service, server))
    if hist is None or hist.state == DOWN:
        return
    if load > threshold:
        hist.transition(OVERLOAD, tick)
    else:
        hist.transition(UP, tick)


def export_history(registry: AdminRegistry, service: str, server: str, fmt: str = "csv") -> str:
    hist = registry.histories.get((service, server))
    if hist is None:
        raise UnknownPairError(f"no history for service {service!r} on server {server!r}")
    rows = [(start, "" if end is None else end, state) for start, end, state in hist.intervals]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("start", "end", "state"))
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "jsonl":
        return "".join(json.dumps({"start": s, "end": None if e == "" else e, "state": st}) + "\n"
                       for s, e, st in rows)
    raise ValueError(f"unknown history format {fmt!r}; expected csv or jsonl")


def export_all_histories(registry: AdminRegistry) -> str:
    """Every (service, server) history as ``service,server,start,end,state`` CSV."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("service", "server", "start", "end", "state"))
    for (service, server), hist in sorted(registry.histories.items()):
        for start, end, state in hist.intervals:
            writer.writerow((service, server, start, "" if end is None else end, state))
    return buf.getvalue()


@dataclass
class Call:
    method: str
    args: list[Value]


@dataclass
class InFlight:
    session: str
    service: str
    server: str
    call: Call
    start: int
    end: int
    resumed: bool


@dataclass
class SimSession:
    session_id: str
    service: str
    pending: Optional[Call] = None
    inflight: Optional[InFlight] = None
    interrupted: bool = False
    outcomes: list[Value] = field(default_factory=list)


@dataclass
class SimulationTrace:
    events: list[dict]
    registry: AdminRegistry
    sessions: dict[str, SimSession]
    last_tick: int

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e) + "\n" for e in self.events)


class Simulator:
    def __init__(self, units: dict[str, ServiceUnit], config: Optional[FomConfig] = None,
                 sim_config: SimConfig = SimConfig()):
        self.units = units
        self.config = config
        self.settings = sim_config
        self.registry = AdminRegistry()
        self.observer = ObserverState(sim_config.poll_interval, sim_config.miss_threshold)
        self.default_threshold = sim_config.overload_threshold
        self.sessions: dict[str, SimSession] = {}
        self.foms: dict[str, FailoverManagement] = {}
        self.events: list[dict] = []
        self.tick = 0

    # --- plumbing ----------------------------------------------------------

    def emit(self, event: str, **fields) -> None:
        self.events.append({"tick": self.tick, "event": event, **fields})

    def fom(self, service: str) -> FailoverManagement:
        if service not in self.foms:
            self.foms[service] = MemoryFom() if self.config is None else fom_for_service(self.config, service)
        return self.foms[service]

    def _set_load(self, server: AppServer, delta: int) -> None:
        server.load += delta
        self._check_overload(server)

    def _check_overload(self, server: AppServer) -> None:
        for service in sorted(server.deployed):
            hist = self.registry.histories[(service, server.name)]
            before = hist.state
            record_overload(self.registry, service, server.name, server.load,
                            server.load_threshold, self.tick)
            if hist.state != before:
                name = "overload" if hist.state == OVERLOAD else "overload_cleared"
                self.emit(name, service=service, server=server.name, load=server.load)

    # --- invocations ---------------------------------------------------------

    def _dispatch(self, sess: SimSession, server_name: str, resumed: bool) -> Optional[InFlight]:
        server = self.registry.servers[server_name]
        call = sess.pending
        assert call is not None
        if server.status == "Down":
            # crashed but not yet detected: the request is lost with the server
            self.emit("invoke_lost", session=sess.session_id, server=server_name)
            return None
        tree, reg = self.units[sess.service]
        fom = self.fom(sess.service)
        probe = MemoryFom()
        probe.seed(sess.session_id, fom.records(sess.session_id))
        try:
            outcome = invoke(tree, reg, probe, sess.session_id, call.method, call.args)
        except HaffError as e:
            sess.pending = None
            self.emit("error", session=sess.session_id, service=sess.service, message=str(e))
            return None
        duration = max(1, math.ceil(outcome.steps / self.settings.steps_per_tick))
        flight = InFlight(sess.session_id, sess.service, server_name, call, self.tick,
                          self.tick + duration, resumed)
        sess.inflight, sess.pending = flight, None
        self._set_load(server, +1)
        self.emit("resume" if resumed else "invoke", session=sess.session_id, service=sess.service,
                  server=server_name, method=call.method, args=call.args, until=flight.end)
        return flight

    def _complete(self, flight: InFlight) -> None:
        sess = self.sessions[flight.session]
        tree, reg = self.units[flight.service]
        sess.inflight = None
        self._set_load(self.registry.servers[flight.server], -1)
        try:
            outcome = invoke(tree, reg, self.fom(flight.service), flight.session,
                             flight.call.method, flight.call.args)
        except HaffError as e:
            self.emit("error", session=flight.session, service=flight.service, message=str(e))
            return
        assert isinstance(outcome, Returned)
        sess.outcomes.append(outcome.value)
        sess.interrupted = False
        self.emit("complete", session=flight.session, service=flight.service, server=flight.server,
                  value=outcome.value, transcript=outcome.transcript,
                  recovered=[list(r) for r in outcome.recovered])

    def _kill(self, flight: InFlight) -> None:
        """Run the call up to the crash instant against the shared store."""
        sess = self.sessions[flight.session]
        tree, reg = self.units[flight.service]
        budget = (self.tick - flight.start) * self.settings.steps_per_tick
        outcome = invoke(tree, reg, self.fom(flight.service), flight.session,
                         flight.call.method, flight.call.args, CrashPlan(max_steps=budget))
        assert outcome.crashed, "a call due later than the crash cannot finish before it"
        sess.inflight = None
        sess.pending = flight.call
        sess.interrupted = True
        stored = sorted((self.registry_method(flight.service, mid), level, rec.fop_index)
                        for (mid, level), rec in self.fom(flight.service).records(flight.session).items())
        self.emit("interrupted", session=flight.session, service=flight.service, server=flight.server,
                  steps=outcome.steps, transcript=outcome.transcript, stored=[list(s) for s in stored])

    def registry_method(self, service: str, method_id: int) -> str:
        return self.units[service][1].name_of(method_id)

    def failover_session(self, session_id: str) -> Optional[InFlight]:
        """Move a session off its failed server; re-invoke its pending call there."""
        sess = self.sessions[session_id]
        old = self.registry.assignments.pop(session_id, None)
        hosts_before = set(self.registry.services.get(sess.service, ()))
        try:
            new = assign_client(self.registry, session_id, sess.service, self.tick)
        except NoServerError:
            self.emit("availability_gap", session=session_id, service=sess.service)
            return None
        if new not in hosts_before:
            self.emit("service_restarted", service=sess.service, server=new)
        self.emit("reassigned", session=session_id, service=sess.service, **{"from": old, "to": new})
        if sess.pending is None:
            return None
        return self._dispatch(sess, new, resumed=sess.interrupted)

    # --- scenario events -------------------------------------------------------

    def _server(self, ev: ScenarioEvent) -> AppServer:
        server = self.registry.servers.get(ev.server)
        if server is None:
            raise DeployError(f"unknown server {ev.server!r}", ev.line)
        return server

    def apply(self, ev: ScenarioEvent) -> None:
        reg = self.registry
        if ev.action == "start_server":
            if ev.server in reg.servers:
                raise DeployError(f"server {ev.server!r} already started", ev.line)
            capacity = ev.value if ev.value is not None else self.settings.capacity
            reg.servers[ev.server] = AppServer(ev.server, capacity, self.default_threshold)
            self.observer.misses[ev.server] = 0
            self.emit("server_started", server=ev.server, capacity=capacity)
        elif ev.action == "deploy":
            server = self._server(ev)
            if ev.service not in self.units:
                raise DeployError(f"unknown service {ev.service!r}", ev.line)
            if server.status == "Down" or server.declared_failed:
                raise DeployError(f"cannot deploy on down server {ev.server!r}", ev.line)
            if ev.service in server.deployed:
                raise DeployError(f"{ev.service!r} already deployed on {ev.server!r}", ev.line)
            reg.host(ev.service, ev.server, self.tick)
            self.emit("deployed", service=ev.service, server=ev.server)
            self._check_overload(server)
        elif ev.action == "invoke":
            self._client_invoke(ev)
        elif ev.action == "crash_server":
            server = self._server(ev)
            if server.status == "Down":
                raise DeployError(f"server {ev.server!r} is already down", ev.line)
            server.status = "Down"
            flights = sorted((s.inflight for s in self.sessions.values()
                              if s.inflight and s.inflight.server == ev.server),
                             key=lambda f: f.session)
            self.emit("server_crashed", server=ev.server, killed=[f.session for f in flights])
            for flight in flights:
                self._kill(flight)
            server.load = 0
        elif ev.action == "recover_server":
            server = self._server(ev)
            if server.status == "Up":
                raise DeployError(f"server {ev.server!r} is not down", ev.line)
            server.status = "Up"
            self.emit("server_recovered", server=ev.server)
        elif ev.action == "set_load_threshold":
            assert ev.value is not None
            targets = [self._server(ev)] if ev.server else list(reg.servers.values())
            if not ev.server:
                self.default_threshold = ev.value
            self.emit("threshold_set", server=ev.server or "*", threshold=ev.value)
            for server in sorted(targets, key=lambda s: s.name):
                server.load_threshold = ev.value
                if server.status == "Up" and not server.declared_failed:
                    self._check_overload(server)

    def _client_invoke(self, ev: ScenarioEvent) -> None:
        reg = self.registry
        if ev.service not in self.units:
            raise DeployError(f"unknown service {ev.service!r}", ev.line)
        if ev.service not in reg.services:
            raise DeployError(f"service {ev.service!r} is not deployed anywhere", ev.line)
        sess = self.sessions.get(ev.session)
        if sess is not None and (sess.inflight or sess.pending):
            self.emit("invoke_rejected", session=ev.session, reason="session busy")
            return
        if sess is None or sess.service != ev.service:
            sess = self.sessions[ev.session] = SimSession(ev.session, ev.service)
            reg.assignments.pop(ev.session, None)
        current = reg.assignments.get(ev.session)
        server = reg.servers.get(current) if current else None
        if server is None or server.declared_failed or server.load >= server.capacity \
                or ev.service not in server.deployed:
            hosts_before = set(reg.services.get(ev.service, ()))
            try:
                name = assign_client(reg, ev.session, ev.service, self.tick)
            except NoServerError:
                self.emit("availability_gap", session=ev.session, service=ev.service)
                return
            if name not in hosts_before:
                self.emit("service_restarted", service=ev.service, server=name)
            self.emit("assigned", session=ev.session, service=ev.service, server=name)
            current = name
        sess.pending = Call(ev.method, list(ev.args))
        sess.interrupted = False
        self._dispatch(sess, current, resumed=False)

    # --- observer --------------------------------------------------------------

    def poll(self) -> None:
        reg = self.registry
        for name in sorted(reg.servers):
            server = reg.servers[name]
            if server.status == "Down":
                self.observer.misses[name] += 1
                misses = self.observer.misses[name]
                self.emit("poll_miss", server=name, misses=misses)
                if misses >= self.observer.miss_threshold and not server.declared_failed:
                    server.declared_failed = True
                    for service in sorted(server.deployed):
                        reg.histories[(service, name)].transition(DOWN, self.tick)
                    self.emit("failure_detected", server=name)
            elif self.observer.misses[name] or server.declared_failed:
                self.observer.misses[name] = 0
                if server.declared_failed:
                    server.declared_failed = False
                    for service in sorted(server.deployed):
                        reg.histories[(service, name)].transition(UP, self.tick)
                    self.emit("recovery_detected", server=name)
                    self._check_overload(server)
        for sid in sorted(self.sessions):
            sess = self.sessions[sid]
            if sess.inflight is not None:
                continue
            current = reg.assignments.get(sid)
            server = reg.servers.get(current) if current else None
            if server is None or server.declared_failed:
                if current is not None or sess.pending is not None:
                    self.failover_session(sid)
            elif sess.pending is not None and server.status == "Up" and server.load < server.capacity:
                # recovered before the observer noticed: resume where it was
                self._dispatch(sess, current, resumed=sess.interrupted)

    # --- main loop ---------------------------------------------------------------

    def _unsettled(self) -> bool:
        if any(s.inflight for s in self.sessions.values()):
            return True
        for server in self.registry.servers.values():
            if server.status == "Down" and not server.declared_failed:
                return True
            if server.status == "Up" and (server.declared_failed or self.observer.misses[server.name]):
                return True
        if any(s.usable for s in self.registry.servers.values()):
            for sid, sess in self.sessions.items():
                if sess.pending is not None:
                    return True
                current = self.registry.assignments.get(sid)
                if current is not None and self.registry.servers[current].declared_failed:
                    return True
        return False

    def run(self, scenario: Scenario) -> SimulationTrace:
        events = scenario.ordered()
        if not events:
            return SimulationTrace([], self.registry, self.sessions, 0)
        self.tick = events[0].tick
        i = 0
        while True:
            for flight in sorted((s.inflight for s in self.sessions.values()
                                  if s.inflight and s.inflight.end == self.tick),
                                 key=lambda f: f.session):
                self._complete(flight)
            if self.tick % self.observer.poll_interval == 0:
                self.poll()
            while i < len(events) and events[i].tick == self.tick:
                self.apply(events[i])
                i += 1
            if i == len(events) and not self._unsettled():
                break
            self.tick += 1
        return SimulationTrace(self.events, self.registry, self.sessions, self.tick)


def run_scenario(scenario: Scenario, units: dict[str, ServiceUnit],
                 config: Optional[FomConfig] = None) -> SimulationTrace:
    return Simulator(units, config, scenario.config).run(scenario)
