"""Virtual substation LAN: event loop, SDN-style switches and flow tables.

All mutable simulation state lives behind one :class:`Simulator`, which
processes callbacks in strict ``(time, seq)`` order.  Times are integer
nanoseconds of virtual time.
"""

from __future__ import annotations

import heapq
import itertools
import json
import logging
import random
from dataclasses import dataclass, field
from typing import NamedTuple

from scsim import codec
from scsim.codec import ETHERTYPE_GOOSE, MacAddress
from scsim.errors import DecodeError

log = logging.getLogger(__name__)

FRAME_TX = "frame_tx"
FRAME_RX = "frame_rx"
TIMER = "timer"
ALERT = "alert"
RULE_UPDATE = "rule_update"
PORT_CHANGE = "port_change"
DEVICE_ACTION = "device_action"
EVENT_KINDS = (FRAME_TX, FRAME_RX, TIMER, ALERT, RULE_UPDATE, PORT_CHANGE, DEVICE_ACTION)

US = 1_000
MS = 1_000_000
SECOND = 1_000_000_000


@dataclass(frozen=True)
class EventRecord:
    time: int
    seq: int
    kind: str
    detail: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps({"t": self.time, "seq": self.seq, "kind": self.kind, **self.detail},
                          separators=(",", ":"))


class Simulator:
    """Deterministic discrete-event loop with a structured event log.

    ``trace="all"`` logs every frame transmission, delivery and drop.  The
    default ``"control"`` keeps GOOSE transmissions, rule drops, and the
    deliveries and admin-down drops of GOOSE or watched (attacker) frames.
    """

    def __init__(self, seed=0, trace="control"):
        self.now = 0
        self.seed = seed
        self.rng = random.Random(seed)
        self.trace_all = trace == "all"
        self.records = []
        self._queue = []
        self._counter = itertools.count()

    def schedule(self, at, fn, *args):
        if at < self.now:
            raise ValueError(f"cannot schedule at {at} before now={self.now}")
        heapq.heappush(self._queue, (at, next(self._counter), fn, args))

    def run(self, until):
        """Process every event with time <= ``until``."""
        queue = self._queue
        pop = heapq.heappop
        while queue and queue[0][0] <= until:
            at, _, fn, args = pop(queue)
            self.now = at
            fn(*args)
        self.now = max(self.now, until)

    def record(self, kind, **detail):
        rec = EventRecord(self.now, len(self.records), kind, detail)
        self.records.append(rec)
        return rec

    def records_of(self, kind, **where):
        out = []
        for r in self.records:
            if r.kind != kind:
                continue
            if all(r.detail.get(k) == v for k, v in where.items()):
                out.append(r)
        return out


class PortId(NamedTuple):
    switch: str
    index: int

    def __str__(self):
        return f"{self.switch}:{self.index}"

    @classmethod
    def parse(cls, text):
        name, _, idx = str(text).rpartition(":")
        if not name or not idx.isdigit():
            raise ValueError(f"bad port reference {text!r}, expected SWITCH:INDEX")
        return cls(name, int(idx))


def _mac_or_none(value):
    return None if value is None else MacAddress(value)


@dataclass(frozen=True)
class Match:
    """Exact-match fields; ``None`` is a wildcard."""

    ingress_port: int | None = None
    src_mac: MacAddress | None = None
    dst_mac: MacAddress | None = None
    ethertype: int | None = None
    appid: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "src_mac", _mac_or_none(self.src_mac))
        object.__setattr__(self, "dst_mac", _mac_or_none(self.dst_mac))

    def matches(self, ingress, pkt):
        return ((self.ingress_port is None or self.ingress_port == ingress)
                and (self.src_mac is None or self.src_mac == pkt.src)
                and (self.dst_mac is None or self.dst_mac == pkt.dst)
                and (self.ethertype is None or self.ethertype == pkt.ethertype)
                and (self.appid is None or self.appid == pkt.appid))

    def to_dict(self):
        out = {}
        if self.ingress_port is not None:
            out["ingress_port"] = self.ingress_port
        if self.src_mac is not None:
            out["src_mac"] = str(self.src_mac)
        if self.dst_mac is not None:
            out["dst_mac"] = str(self.dst_mac)
        if self.ethertype is not None:
            out["ethertype"] = self.ethertype
        if self.appid is not None:
            out["appid"] = self.appid
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class Action:
    """Primary disposition plus an optional mirror port.

    ``kind`` is ``forward`` (to ``ports``), ``flood`` or ``drop``.  A mirror
    copy goes to ``mirror`` whatever the primary disposition.
    """

    kind: str = "flood"
    ports: tuple = ()
    mirror: int | None = None

    def __post_init__(self):
        if self.kind not in ("forward", "flood", "drop"):
            raise ValueError(f"unknown action {self.kind!r}")
        object.__setattr__(self, "ports", tuple(self.ports))

    def to_dict(self):
        out = {"type": self.kind}
        if self.kind == "forward":
            out["ports"] = list(self.ports)
        if self.mirror is not None:
            out["mirror"] = self.mirror
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(d["type"], tuple(d.get("ports", ())), d.get("mirror"))


FLOOD = Action("flood")


@dataclass(frozen=True)
class FlowRule:
    cookie: int
    priority: int
    match: Match = Match()
    action: Action = FLOOD

    def __post_init__(self):
        if not 0 <= self.priority <= 0xFFFF:
            raise ValueError("priority must fit in 16 bits")
        if not 0 <= self.cookie < 1 << 64:
            raise ValueError("cookie must fit in 64 bits")

    def to_dict(self):
        return {"cookie": self.cookie, "priority": self.priority,
                "match": self.match.to_dict(), "action": self.action.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["cookie"], d["priority"], Match.from_dict(d.get("match", {})),
                   Action.from_dict(d.get("action", {"type": "flood"})))


class FlowTable:
    """Rules ordered by descending priority, ties by ascending cookie."""

    def __init__(self, rules=()):
        self._rules = []
        for r in rules:
            self.install(r)

    @property
    def rules(self):
        return tuple(self._rules)

    def __len__(self):
        return len(self._rules)

    def __eq__(self, other):
        return isinstance(other, FlowTable) and self._rules == other._rules

    def install(self, rule):
        if any(r.cookie == rule.cookie for r in self._rules):
            raise KeyError(f"cookie {rule.cookie} already installed")
        rules = self._rules + [rule]
        rules.sort(key=lambda r: (-r.priority, r.cookie))
        self._rules = rules

    def remove(self, cookie):
        for r in self._rules:
            if r.cookie == cookie:
                self._rules = [x for x in self._rules if x.cookie != cookie]
                return r
        return None

    def match(self, ingress, pkt):
        """Winning rule, or ``None`` for the default flood."""
        for r in self._rules:
            if r.match.matches(ingress, pkt):
                return r
        return None


def match_frame(table, ingress, pkt):
    return table.match(ingress, pkt)


class Packet:
    """A frame in flight.  ``origin`` names the transmitting host."""

    __slots__ = ("uid", "data", "origin", "dst", "src", "ethertype", "appid", "_decoded")

    def __init__(self, uid, data, origin):
        self.uid = uid
        self.data = data
        self.origin = origin
        self.dst = data[0:6]
        self.src = data[6:12]
        self.ethertype = (data[12] << 8) | data[13] if len(data) >= 14 else None
        if self.ethertype in codec.IEC61850_ETHERTYPES and len(data) >= 16:
            self.appid = (data[14] << 8) | data[15]
        else:
            self.appid = None
        self._decoded = None

    def decoded(self):
        """``(header, pdu)`` or the DecodeError raised while decoding; cached."""
        if self._decoded is None:
            try:
                self._decoded = codec.decode(self.data)
            except DecodeError as exc:
                self._decoded = exc
        return self._decoded


class Port:
    __slots__ = ("id", "enabled", "host", "host_port", "peer", "monitor")

    def __init__(self, port_id, enabled=True):
        self.id = port_id
        self.enabled = enabled
        self.host = None
        self.host_port = None
        self.peer = None
        self.monitor = False


class Switch:
    def __init__(self, name, indices, disabled=()):
        self.name = name
        self.ports = {i: Port(PortId(name, i), i not in disabled) for i in sorted(indices)}
        self.table = FlowTable()
        self.capture = []
        self._egress_cache = {}

    def port(self, index):
        try:
            return self.ports[index]
        except KeyError:
            raise KeyError(f"switch {self.name} has no port {index}") from None

    def egress(self, ingress, rule):
        key = (None if rule is None else rule.cookie, ingress)
        hit = self._egress_cache.get(key)
        if hit is None:
            action = FLOOD if rule is None else rule.action
            if action.kind == "flood":
                ports = tuple(i for i, p in self.ports.items()
                              if i != ingress and i != action.mirror and not p.monitor)
            elif action.kind == "forward":
                ports = tuple(i for i in action.ports if i != ingress and i in self.ports)
            else:
                ports = ()
            hit = self._egress_cache[key] = (ports, action.mirror)
        return hit

    def table_changed(self):
        self._egress_cache.clear()


class Host:
    """Anything with a MAC address attached to one or more switch ports."""

    role = "host"

    def __init__(self, host_id, mac):
        self.id = host_id
        self.mac = MacAddress(mac)
        self.ports = {}
        self.fabric = None

    @property
    def sim(self):
        return self.fabric.sim

    def send(self, port_name, data):
        return self.fabric.transmit(self, port_name, data)

    def receive(self, pkt, port_name):
        pass

    def receive_mirror(self, pkt, ingress, capture_ref):
        pass

    def start(self):
        pass


class Fabric:
    def __init__(self, sim, latency_us=(20, 80)):
        lo, hi = latency_us
        if not 0 <= lo <= hi:
            raise ValueError("latency bounds must satisfy 0 <= min <= max")
        self.sim = sim
        self.latency_ns = (int(lo * US), int(hi * US))
        self.switches = {}
        self.hosts = {}
        self.watched = set()
        self.watch_log = []
        self._uids = itertools.count()

    # -- topology --------------------------------------------------------
    def add_switch(self, name, indices, disabled=()):
        if name in self.switches:
            raise ValueError(f"duplicate switch {name}")
        sw = self.switches[name] = Switch(name, indices, disabled)
        return sw

    def port(self, port_id):
        port_id = PortId(*port_id)
        return self.switches[port_id.switch].port(port_id.index)

    def attach(self, host, port_name, port_id, monitor=False):
        port = self.port(port_id)
        if port.host is not None or port.peer is not None:
            raise ValueError(f"port {port.id} already connected")
        port.host = host
        port.host_port = port_name
        port.monitor = monitor
        host.ports[port_name] = port.id
        host.fabric = self
        self.hosts[host.id] = host
        for sw in self.switches.values():
            sw.table_changed()

    def link(self, a, b):
        pa, pb = self.port(a), self.port(b)
        for p in (pa, pb):
            if p.host is not None or p.peer is not None:
                raise ValueError(f"port {p.id} already connected")
        pa.peer, pb.peer = pb.id, pa.id

    def watch(self, origin):
        self.watched.add(origin)

    # -- data plane ------------------------------------------------------
    def transmit(self, host, port_name, data):
        pkt = Packet(next(self._uids), data, host.id)
        sim = self.sim
        if sim.trace_all or pkt.ethertype == ETHERTYPE_GOOSE:
            sim.record(FRAME_TX, host=host.id, port=str(host.ports[port_name]), uid=pkt.uid,
                       ethertype=pkt.ethertype, length=len(data))
        self.submit_frame(host.ports[port_name], pkt, sim.now)
        return pkt

    def submit_frame(self, ingress, pkt, at=None):
        """Schedule switching of ``pkt`` arriving on ``ingress`` at virtual time ``at``."""
        if not isinstance(pkt, Packet):
            pkt = Packet(next(self._uids), bytes(pkt), None)
        ingress = PortId(*ingress)
        sw = self.switches[ingress.switch]
        sw.port(ingress.index)
        self.sim.schedule(self.sim.now if at is None else at, self._ingress, sw, ingress.index, pkt)
        return pkt

    def _traced(self, pkt):
        return (self.sim.trace_all or pkt.ethertype == ETHERTYPE_GOOSE
                or pkt.origin in self.watched)

    def _ingress(self, sw, index, pkt):
        sim = self.sim
        port = sw.ports[index]
        if not port.enabled:
            if self._traced(pkt):
                sim.record(FRAME_RX, switch=sw.name, port=index, uid=pkt.uid, origin=pkt.origin,
                           disposition="dropped_admin_down")
            return
        cap = len(sw.capture)
        sw.capture.append((sim.now, pkt.data))
        rule = sw.table.match(index, pkt)
        egress, mirror = sw.egress(index, rule)
        if rule is not None and rule.action.kind == "drop":
            sim.record(FRAME_RX, switch=sw.name, port=index, uid=pkt.uid, origin=pkt.origin,
                       disposition="rule_drop", cookie=rule.cookie)
        if not egress and mirror is None:
            return
        lo, hi = self.latency_ns
        sim.schedule(sim.now + sim.rng.randint(lo, hi), self._deliver, sw, index, cap, egress, mirror, pkt)

    def _deliver(self, sw, ingress, cap, egress, mirror, pkt):
        sim = self.sim
        watched = pkt.origin in self.watched
        for i in egress:
            port = sw.ports[i]
            if not port.enabled:
                if watched or self._traced(pkt):
                    sim.record(FRAME_RX, switch=sw.name, port=i, uid=pkt.uid, origin=pkt.origin,
                               disposition="dropped_admin_down")
                continue
            if port.peer is not None:
                peer = self.switches[port.peer.switch]
                self._ingress(peer, port.peer.index, pkt)
            elif port.host is not None:
                if watched:
                    self.watch_log.append((sim.now, port.host.id, port.id, False, pkt.uid))
                if watched or sim.trace_all:
                    sim.record(FRAME_RX, switch=sw.name, port=i, uid=pkt.uid, origin=pkt.origin,
                               host=port.host.id, disposition="delivered")
                port.host.receive(pkt, port.host_port)
        if mirror is not None:
            port = sw.ports.get(mirror)
            if port is not None and port.enabled and port.host is not None:
                if watched:
                    self.watch_log.append((sim.now, port.host.id, port.id, True, pkt.uid))
                port.host.receive_mirror(pkt, PortId(sw.name, ingress), (sw.name, cap))

    # -- control plane ---------------------------------------------------
    def install_rule(self, switch, rule):
        sw = self.switches[switch]
        try:
            sw.table.install(rule)
        except KeyError:
            self.sim.record(RULE_UPDATE, op="install", switch=switch, status="duplicate_cookie",
                            rule=rule.to_dict())
            log.warning("rule install on %s rejected: duplicate cookie %d", switch, rule.cookie)
            return None
        sw.table_changed()
        self.sim.record(RULE_UPDATE, op="install", switch=switch, status="ok", rule=rule.to_dict())
        return rule.cookie

    def remove_rule(self, switch, cookie):
        sw = self.switches[switch]
        rule = sw.table.remove(cookie)
        if rule is None:
            self.sim.record(RULE_UPDATE, op="remove", switch=switch, status="unknown_cookie", cookie=cookie)
            log.warning("rule remove on %s ignored: unknown cookie %d", switch, cookie)
            return
        sw.table_changed()
        self.sim.record(RULE_UPDATE, op="remove", switch=switch, status="ok", cookie=cookie,
                        rule=rule.to_dict())

    def set_port_state(self, port_id, enabled):
        port = self.port(port_id)
        changed = port.enabled != bool(enabled)
        port.enabled = bool(enabled)
        self.sim.record(PORT_CHANGE, switch=port.id.switch, port=port.id.index,
                        state="enabled" if enabled else "disabled", changed=changed)

    def port_enabled(self, port_id):
        return self.port(port_id).enabled
