"""Scenario files: JSON schema as dataclasses, loading, dumping and validation.

Port references are ``"SWITCH:INDEX"`` strings and MAC addresses are
colon-separated hex, so a scenario file stays readable and diffable.
"""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from scsim.attacks import AttackSpec
from scsim.codec import MacAddress
from scsim.errors import ScenarioError
from scsim.fabric import FlowRule, PortId
from scsim.ids import RULE_ORDER

DEFAULT_EPOCH_NS = 1_704_067_200 * 1_000_000_000  # 2024-01-01T00:00:00Z
FUNCTIONS = ("oc", "diff")


@dataclass(frozen=True)
class SwitchSpec:
    name: str
    ports: tuple[int, ...]
    disabled: tuple[int, ...] = ()


@dataclass(frozen=True)
class Topology:
    switches: tuple[SwitchSpec, ...]
    links: tuple[tuple[str, ...], ...] = ()
    latency_us: tuple[float, ...] = (20.0, 80.0)


@dataclass(frozen=True)
class StreamSpec:
    sv_id: str
    appid: int
    dst: str
    conf_rev: int = 1
    sign: int = 1


@dataclass(frozen=True)
class MergingUnitSpec:
    id: str
    mac: str
    port: str
    streams: tuple[StreamSpec, ...]


@dataclass(frozen=True)
class GooseSpec:
    gocb_ref: str
    go_id: str
    dat_set: str
    appid: int
    dst: str
    conf_rev: int = 1


@dataclass(frozen=True)
class PiedSpec:
    id: str
    mac: str
    function: str
    sv_port: str
    goose_port: str
    goose: GooseSpec
    sv_subscriptions: tuple[str, ...]
    weight: float
    disableable: bool = True


@dataclass(frozen=True)
class CiedFunctionSpec:
    port: str
    goose: GooseSpec
    sv_subscriptions: tuple[str, ...]


@dataclass(frozen=True)
class CiedSpec:
    id: str
    mac: str
    sv_port: str
    functions: dict[str, CiedFunctionSpec]


@dataclass(frozen=True)
class BreakerSpec:
    id: str
    mac: str
    port: str
    subscriptions: tuple[str, ...]


@dataclass(frozen=True)
class IdsSpec:
    id: str
    mac: str
    ports: tuple[str, ...]
    enabled: bool = True
    rules: dict[str, bool] = field(default_factory=dict)
    goose_max_jump: int = 10
    goose_max_changes_per_s: int = 10
    sv_bound_factor: float = 40.0
    sv_rate_tolerance: float = 0.05
    sv_rate_window_ms: int = 100
    suppression_ms: int = 100


@dataclass(frozen=True)
class AttackerSpec:
    id: str
    mac: str
    ports: tuple[str, ...]


@dataclass(frozen=True)
class FaultSpec:
    start: float
    end: float
    multiplier: float
    stream: str
    polarity: int = 1


@dataclass(frozen=True)
class WaveformSpec:
    frequency: float = 60.0
    current_rms: tuple[tuple[float, ...], ...] = ((0.0, 1000.0),)
    voltage_rms: float = 7967.0
    faults: tuple[FaultSpec, ...] = ()


@dataclass(frozen=True)
class ProtectionSpec:
    oc_pickup: float = 2000.0
    oc_delay: float = 100.0
    diff_min_operate: float = 200.0
    diff_slope: float = 0.3


@dataclass(frozen=True)
class Assertions:
    """Expected outcome; ``None`` fields are not checked."""

    objective: float | None = None
    max_alerts: int | None = None
    min_alerts: int | None = None
    banners: tuple[str, ...] | None = None
    failed_over: tuple[str, ...] | None = None
    breakers: dict[str, str] | None = None
    ports_disabled: tuple[str, ...] | None = None
    ports_enabled: tuple[str, ...] | None = None
    attacker_drop_rule: bool | None = None
    attacker_isolated: bool | None = None
    cied_goose_in_pcap: bool | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    seed: int
    topology: Topology
    merging_units: tuple[MergingUnitSpec, ...]
    pieds: tuple[PiedSpec, ...]
    cied: CiedSpec
    breakers: tuple[BreakerSpec, ...]
    ids: IdsSpec
    attackers: tuple[AttackerSpec, ...] = ()
    flows: dict[str, tuple[dict, ...]] = field(default_factory=dict)
    waveform: WaveformSpec = WaveformSpec()
    protection: ProtectionSpec = ProtectionSpec()
    gamma: float = 5.0
    attacks: tuple[AttackSpec, ...] = ()
    assertions: Assertions = Assertions()
    description: str = ""
    epoch_ns: int = DEFAULT_EPOCH_NS
    trace: str = "control"

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


# -- generic (de)serialisation ---------------------------------------------

def _convert(tp, value, path, problems):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None:
            return None
        inner = [a for a in args if a is not type(None)][0]
        return _convert(inner, value, path, problems)
    if dataclasses.is_dataclass(tp):
        return _from_dict(tp, value, path, problems)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            problems.append(f"{path}: expected a list")
            return ()
        return tuple(_convert(args[0], v, f"{path}[{i}]", problems) for i, v in enumerate(value))
    if origin is dict:
        if not isinstance(value, dict):
            problems.append(f"{path}: expected an object")
            return {}
        return {str(k): _convert(args[1], v, f"{path}.{k}", problems) for k, v in value.items()}
    if tp is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if tp in (int, float, str, bool) and not isinstance(value, tp):
        problems.append(f"{path}: expected {tp.__name__}, got {type(value).__name__}")
    if tp is int and isinstance(value, bool):
        problems.append(f"{path}: expected int, got bool")
    return value


def _from_dict(cls, data, path, problems):
    if not isinstance(data, dict):
        problems.append(f"{path}: expected an object")
        return None
    before = len(problems)
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            problems.append(f"{path}.{key}: unknown field")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _convert(hints[f.name], data[f.name], f"{path}.{f.name}", problems)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            problems.append(f"{path}.{f.name}: required field missing")
    if len(problems) > before:
        return None
    return cls(**kwargs)


def to_json_obj(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_json_obj(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_json_obj(v) for v in obj]
    if isinstance(obj, dict):
        return {k: to_json_obj(v) for k, v in obj.items()}
    return obj


def from_dict(data):
    """Build a :class:`Scenario`; raises ScenarioError on schema or reference problems."""
    problems = []
    scenario = _from_dict(Scenario, data, "scenario", problems)
    if scenario is not None:
        problems.extend(validate(scenario))
    if problems:
        raise ScenarioError(problems)
    return scenario


def loads(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"invalid JSON: {exc}"]) from None
    return from_dict(data)


def load(path):
    return loads(Path(path).read_text(encoding="utf-8"))


def dumps(scenario):
    return json.dumps(to_json_obj(scenario), indent=2) + "\n"


def dump(scenario, path):
    Path(path).write_text(dumps(scenario), encoding="utf-8")


# -- referential integrity -------------------------------------------------

class _Checker:
    def __init__(self, scenario):
        self.s = scenario
        self.problems = []
        self.ports = {}
        self.used = {}
        for sw in scenario.topology.switches:
            if sw.name in self.ports:
                self.err(f"duplicate switch {sw.name}")
            if len(set(sw.ports)) != len(sw.ports):
                self.err(f"switch {sw.name} lists a port twice")
            if any(p < 0 for p in sw.ports):
                self.err(f"switch {sw.name} has a negative port index")
            self.ports[sw.name] = set(sw.ports)
            for d in sw.disabled:
                if d not in sw.ports:
                    self.err(f"switch {sw.name}: disabled port {d} does not exist")

    def err(self, msg):
        self.problems.append(msg)

    def port(self, ref, owner):
        try:
            pid = PortId.parse(ref)
        except ValueError as exc:
            self.err(f"{owner}: {exc}")
            return None
        if pid.index not in self.ports.get(pid.switch, ()):
            self.err(f"{owner}: port {ref} does not exist")
            return None
        if pid in self.used:
            self.err(f"{owner}: port {ref} already used by {self.used[pid]}")
            return None
        self.used[pid] = owner
        return pid

    def mac(self, text, owner):
        try:
            return MacAddress.parse(text)
        except ValueError as exc:
            self.err(f"{owner}: {exc}")
            return None


def validate(s):
    """List of human-readable problems; empty when the scenario is runnable."""
    c = _Checker(s)
    err = c.err
    if not s.duration > 0:
        err("duration must be positive")
    if not 0 <= s.seed < 1 << 64:
        err("seed must be an unsigned 64-bit integer")
    if s.trace not in ("control", "all"):
        err("trace must be 'control' or 'all'")
    if s.gamma < 0:
        err("gamma must be >= 0")
    lat = s.topology.latency_us
    if len(lat) != 2 or not 0 <= lat[0] <= lat[1]:
        err("latency_us must be [min, max] with 0 <= min <= max")
    for i, link in enumerate(s.topology.links):
        if len(link) != 2:
            err(f"link {i}: expected two port references")
            continue
        for ref in link:
            c.port(ref, f"link {i}")

    ids_seen, macs = set(), {}

    def host(hid, mac, what):
        if hid in ids_seen:
            err(f"duplicate host id {hid}")
        ids_seen.add(hid)
        m = c.mac(mac, hid)
        if m is not None:
            if m[0] & 1:
                err(f"{hid}: host MAC must be unicast")
            if m in macs:
                err(f"{hid}: MAC {mac} already used by {macs[m]}")
            macs[m] = hid

    sv_ids = {}
    for mu in s.merging_units:
        host(mu.id, mu.mac, "merging unit")
        c.port(mu.port, mu.id)
        for st in mu.streams:
            if st.sv_id in sv_ids:
                err(f"{mu.id}: svID {st.sv_id} already published by {sv_ids[st.sv_id]}")
            sv_ids[st.sv_id] = mu.id
            m = c.mac(st.dst, f"{mu.id}/{st.sv_id}")
            if m is not None and not m.is_sv_multicast():
                err(f"{mu.id}/{st.sv_id}: destination {st.dst} is not an SV multicast address")
            if st.sign not in (1, -1):
                err(f"{mu.id}/{st.sv_id}: sign must be +1 or -1")
            if not 0 <= st.appid <= 0xFFFF:
                err(f"{mu.id}/{st.sv_id}: APPID out of range")

    go_ids = {}

    def goose(g, owner):
        if g.go_id in go_ids:
            err(f"{owner}: goID {g.go_id} already published by {go_ids[g.go_id]}")
        go_ids[g.go_id] = owner
        m = c.mac(g.dst, owner)
        if m is not None and not m.is_goose_multicast():
            err(f"{owner}: destination {g.dst} is not a GOOSE multicast address")
        if not 0 <= g.appid <= 0xFFFF:
            err(f"{owner}: APPID out of range")

    def subscriptions(subs, owner, need):
        for sv in subs:
            if sv not in sv_ids:
                err(f"{owner}: subscribes to undeclared svID {sv}")
        if need is not None and len(subs) != need:
            err(f"{owner}: function needs exactly {need} SV stream(s), got {len(subs)}")

    need = {"oc": 1, "diff": 2}
    for p in s.pieds:
        host(p.id, p.mac, "PIED")
        c.port(p.sv_port, p.id)
        c.port(p.goose_port, p.id)
        goose(p.goose, p.id)
        if p.function not in FUNCTIONS:
            err(f"{p.id}: unknown protection function {p.function!r}")
        subscriptions(p.sv_subscriptions, p.id, need.get(p.function))
        if p.weight < 0:
            err(f"{p.id}: weight must be >= 0")
    cied = s.cied
    host(cied.id, cied.mac, "CIED")
    c.port(cied.sv_port, cied.id)
    for fn, spec in cied.functions.items():
        owner = f"{cied.id}/{fn}"
        if fn not in FUNCTIONS:
            err(f"{owner}: unknown protection function")
        c.port(spec.port, owner)
        goose(spec.goose, owner)
        subscriptions(spec.sv_subscriptions, owner, need.get(fn))
    for p in s.pieds:
        if p.function not in cied.functions:
            err(f"{p.id}: CIED has no {p.function} function to take over")

    for cb in s.breakers:
        host(cb.id, cb.mac, "breaker")
        c.port(cb.port, cb.id)
        for g in cb.subscriptions:
            if g not in go_ids:
                err(f"{cb.id}: subscribes to undeclared goID {g}")

    host(s.ids.id, s.ids.mac, "IDS")
    for ref in s.ids.ports:
        c.port(ref, s.ids.id)
    for r in s.ids.rules:
        if r not in RULE_ORDER:
            err(f"IDS: unknown rule {r}")

    attackers = {}
    for a in s.attackers:
        host(a.id, a.mac, "attacker")
        attackers[a.id] = a
        for ref in a.ports:
            c.port(ref, a.id)

    for sw_name, rules in s.flows.items():
        if sw_name not in c.ports:
            err(f"flows: unknown switch {sw_name}")
            continue
        cookies = set()
        for i, r in enumerate(rules):
            try:
                rule = FlowRule.from_dict(r)
            except (KeyError, TypeError, ValueError) as exc:
                err(f"flows.{sw_name}[{i}]: {exc}")
                continue
            if rule.cookie in cookies:
                err(f"flows.{sw_name}[{i}]: duplicate cookie {rule.cookie}")
            cookies.add(rule.cookie)
            a = rule.action
            for p in a.ports + ((a.mirror,) if a.mirror is not None else ()):
                if p not in c.ports[sw_name]:
                    err(f"flows.{sw_name}[{i}]: port {p} does not exist")

    w = s.waveform
    if w.frequency <= 0:
        err("waveform frequency must be positive")
    if not w.current_rms or w.current_rms[0][0] != 0:
        err("waveform current schedule must start at t=0")
    for f in w.faults:
        if f.stream not in sv_ids:
            err(f"fault on undeclared stream {f.stream}")
        if f.end <= f.start or f.multiplier < 0 or f.polarity not in (1, -1):
            err(f"fault on {f.stream}: bad interval, multiplier or polarity")
    pr = s.protection
    if min(pr.oc_pickup, pr.oc_delay, pr.diff_min_operate, pr.diff_slope) <= 0 or pr.diff_slope > 1:
        err("protection settings must be positive with diff_slope <= 1")

    for i, atk in enumerate(s.attacks):
        owner = f"attack {i} ({atk.kind})"
        for p in atk.problems():
            err(f"{owner}: {p}")
        if atk.attacker not in attackers:
            err(f"{owner}: unknown attacker {atk.attacker}")
        elif atk.port is not None and not any(PortId.parse(r).switch == atk.port
                                              for r in attackers[atk.attacker].ports if ":" in r):
            err(f"{owner}: attacker has no port on {atk.port}")
        if atk.start >= s.duration:
            err(f"{owner}: starts after the scenario ends")
        if atk.kind == "sv_inject" and atk.target not in sv_ids:
            err(f"{owner}: unknown target svID {atk.target}")
        if atk.kind in ("goose_spoof", "replay") and atk.target not in go_ids:
            err(f"{owner}: unknown target goID {atk.target}")
    return c.problems
