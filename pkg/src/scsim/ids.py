"""Rule-based network IDS for mirrored GOOSE and SV traffic.

The posture is whitelist first: every legitimate publisher is declared in the
scenario, so unknown (name, source) pairs are flagged before any counter or
rate heuristics run.  Rules are evaluated in a fixed order and the first hit
wins; baseline counters only advance on frames that raised nothing.

GOOSE rules
    G3 unknown (goID, src MAC, APPID, dst MAC) publisher
    G1 stNum rollback, or sqNum discontinuity without a stNum change
    G2 stNum jump larger than ``goose_max_jump``
    G4 more than ``goose_max_changes_per_s`` state changes within one second
    G5 frame arrived after the previous frame's timeAllowedToLive expired
SV rules
    S2 known svID from an unexpected source (or an unknown svID)
    S1 smpCnt gap or duplicate
    S3 sample magnitude beyond ``sv_bound_factor`` x nominal peak
    S4 frame rate off by more than ``sv_rate_tolerance`` over a window
Either protocol
    M1 malformed or truncated frame
"""

from __future__ import annotations

import collections
from dataclasses import asdict, dataclass, field

from scsim import codec
from scsim.codec import GooseApdu, MacAddress, SvApdu
from scsim.errors import DecodeError
from scsim.fabric import ALERT, MS, SECOND, Host

RULE_ORDER = ("M1", "G3", "G1", "G2", "G4", "G5", "S2", "S1", "S3", "S4")
SQRT2 = 2 ** 0.5


@dataclass(frozen=True)
class IdsConfig:
    rules: dict = field(default_factory=lambda: {r: True for r in RULE_ORDER})
    goose_max_jump: int = 10
    goose_max_changes_per_s: int = 10
    sv_bound_factor: float = 40.0
    sv_rate_tolerance: float = 0.05
    sv_rate_window_ms: int = 100
    suppression_ms: int = 100
    nominal_current: float = 1000.0
    nominal_voltage: float = 7967.0
    sample_rate: int = codec.SAMPLES_PER_SECOND

    def __post_init__(self):
        rules = {r: True for r in RULE_ORDER}
        unknown = set(self.rules) - set(RULE_ORDER)
        if unknown:
            raise ValueError(f"unknown IDS rules: {sorted(unknown)}")
        rules.update({k: bool(v) for k, v in self.rules.items()})
        object.__setattr__(self, "rules", rules)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class PublisherSpec:
    name: str
    src: MacAddress
    appid: int
    dst: MacAddress

    def __post_init__(self):
        object.__setattr__(self, "src", MacAddress(self.src))
        object.__setattr__(self, "dst", MacAddress(self.dst))

    @property
    def key(self):
        return (self.name, str(self.src), self.appid, str(self.dst))


@dataclass
class _SvState:
    last_cnt: int | None = None
    window_start: int | None = None
    window_count: int = 0


@dataclass
class _GooseState:
    st_num: int | None = None
    sq_num: int | None = None
    last_time: int | None = None
    tal_ms: int | None = None
    changes: collections.deque = field(default_factory=collections.deque)


class Baseline:
    """Per-publisher expectations and counters, keyed by svID / goID."""

    def __init__(self, sv_publishers=(), goose_publishers=()):
        self.sv_publishers = {p.name: p for p in sv_publishers}
        self.goose_publishers = {p.name: p for p in goose_publishers}
        self.sv = {name: _SvState() for name in self.sv_publishers}
        self.goose = {name: _GooseState() for name in self.goose_publishers}


@dataclass(frozen=True)
class Alert:
    time: int
    protocol: str
    rule: str
    key: tuple
    suspected_ingress: object
    target_pied: str | None
    evidence: dict
    reason: str = ""
    severity: str = "high"

    def to_dict(self):
        return {"time": self.time, "protocol": self.protocol, "rule": self.rule,
                "key": list(self.key), "suspected_ingress": str(self.suspected_ingress),
                "target_pied": self.target_pied, "evidence": self.evidence,
                "reason": self.reason, "severity": self.severity}


def _frame_key(name, header):
    return (name, str(header.src), header.appid, str(header.dst))


def _check_sv(now, header, sv, baseline, cfg):
    rules = cfg.rules
    spec = baseline.sv_publishers.get(sv.sv_id)
    if rules["S2"]:
        if spec is None:
            return "S2", "unknown svID"
        if (header.src, header.appid, header.dst) != (spec.src, spec.appid, spec.dst):
            return "S2", "known svID from unexpected source"
    if spec is None:
        return None
    st = baseline.sv[sv.sv_id]
    rate = cfg.sample_rate
    if rules["S1"] and st.last_cnt is not None and sv.smp_cnt != (st.last_cnt + 1) % rate:
        return "S1", "duplicate smpCnt" if sv.smp_cnt == st.last_cnt else "smpCnt gap"
    if rules["S3"]:
        i_bound = cfg.sv_bound_factor * cfg.nominal_current * SQRT2 * 1000.0
        v_bound = cfg.sv_bound_factor * cfg.nominal_voltage * SQRT2 * 100.0
        vals = sv.values
        if max(abs(v) for v in vals[:4]) > i_bound or max(abs(v) for v in vals[4:]) > v_bound:
            return "S3", "sample magnitude beyond physical bound"
    window_ns = cfg.sv_rate_window_ms * MS
    if st.window_start is not None and now - st.window_start >= window_ns:
        expected = rate * cfg.sv_rate_window_ms / 1000.0
        deviation = abs(st.window_count - expected) / expected
        st.window_start, st.window_count = now, 0
        if rules["S4"] and deviation > cfg.sv_rate_tolerance:
            return "S4", f"rate deviates {deviation:.1%} from nominal"
    st.last_cnt = sv.smp_cnt
    if st.window_start is None:
        st.window_start = now
    st.window_count += 1
    return None


def _check_goose(now, header, g, baseline, cfg):
    rules = cfg.rules
    spec = baseline.goose_publishers.get(g.go_id)
    if rules["G3"]:
        if spec is None:
            return "G3", "unknown goID"
        if (header.src, header.appid, header.dst) != (spec.src, spec.appid, spec.dst):
            return "G3", "goID from unexpected source"
    if spec is None:
        return None
    st = baseline.goose[g.go_id]
    if st.st_num is not None:
        if rules["G1"]:
            if g.st_num < st.st_num:
                return "G1", "stNum rollback"
            if g.st_num == st.st_num and g.sq_num != st.sq_num + 1:
                return "G1", "sqNum discontinuity without stNum change"
        if rules["G2"] and g.st_num - st.st_num > cfg.goose_max_jump:
            return "G2", f"stNum jumped by {g.st_num - st.st_num}"
        changed = g.st_num > st.st_num
        if changed:
            while st.changes and now - st.changes[0] >= SECOND:
                st.changes.popleft()
            if rules["G4"] and len(st.changes) + 1 > cfg.goose_max_changes_per_s:
                return "G4", "state-change rate above threshold"
        if rules["G5"] and now - st.last_time > st.tal_ms * MS:
            return "G5", "timeAllowedToLive expired before refresh"
        if changed:
            st.changes.append(now)
    st.st_num, st.sq_num = g.st_num, g.sq_num
    st.last_time, st.tal_ms = now, g.time_allowed_to_live
    return None


def inspect(now, data, decoded, baseline, cfg):
    """First rule hit for one frame as ``(rule, protocol, key, reason)``, or None.

    ``decoded`` is the ``(header, pdu)`` pair or the DecodeError for ``data``.
    """
    ethertype = (data[12] << 8) | data[13] if len(data) >= 14 else None
    if ethertype not in codec.IEC61850_ETHERTYPES:
        return None
    protocol = "GOOSE" if ethertype == codec.ETHERTYPE_GOOSE else "SV"
    if isinstance(decoded, DecodeError):
        if not cfg.rules["M1"]:
            return None
        src = str(MacAddress(data[6:12]))
        dst = str(MacAddress(data[0:6]))
        appid = (data[14] << 8) | data[15] if len(data) >= 16 else 0
        return "M1", protocol, (None, src, appid, dst), f"malformed frame: {decoded}"
    header, pdu = decoded
    if isinstance(pdu, SvApdu):
        hit = _check_sv(now, header, pdu, baseline, cfg)
        name = pdu.sv_id
    elif isinstance(pdu, GooseApdu):
        hit = _check_goose(now, header, pdu, baseline, cfg)
        name = pdu.go_id
    else:
        return None
    if hit is None:
        return None
    return hit[0], protocol, _frame_key(name, header), hit[1]


@dataclass(frozen=True)
class TargetMap:
    """Stream-to-PIED mapping derived from scenario subscriptions."""

    sv_subscribers: dict = field(default_factory=dict)  # svID -> PIED ids in registry order
    goose_owners: dict = field(default_factory=dict)    # goID -> owning PIED id


def classify_target(alert_protocol, key, targets):
    name = key[0]
    if name is None:
        return None
    if alert_protocol == "SV":
        subs = targets.sv_subscribers.get(name)
        return subs[0] if subs else None
    return targets.goose_owners.get(name)


class IntrusionDetector(Host):
    role = "IDS"

    def __init__(self, host_id, mac, baseline, targets, config=None, enabled=True):
        super().__init__(host_id, mac)
        self.baseline = baseline
        self.targets = targets
        self.config = config or IdsConfig()
        self.enabled = enabled
        self.alerts = []
        self.suppressed = 0
        self.listeners = []
        self.mirrored_by_origin = collections.Counter()
        self._last_alert = {}

    def receive_mirror(self, pkt, ingress, capture_ref):
        self.mirrored_by_origin[pkt.origin] += 1
        if not self.enabled:
            return
        alert = self.inspect(pkt, ingress, capture_ref)
        if alert is not None:
            for fn in self.listeners:
                fn(alert)

    def inspect(self, pkt, ingress, capture_ref):
        now = self.sim.now
        hit = inspect(now, pkt.data, pkt.decoded(), self.baseline, self.config)
        if hit is None:
            return None
        rule, protocol, key, reason = hit
        last = self._last_alert.get((rule, key))
        if last is not None and now - last < self.config.suppression_ms * MS:
            self.suppressed += 1
            return None
        self._last_alert[(rule, key)] = now
        target = classify_target(protocol, key, self.targets)
        alert = Alert(
            time=now, protocol=protocol, rule=rule, key=key, suspected_ingress=ingress,
            target_pied=target,
            evidence={"uid": pkt.uid, "switch": capture_ref[0], "capture_index": capture_ref[1],
                      "origin_frame_index": self.mirrored_by_origin[pkt.origin]},
            reason=reason, severity="high" if target else "low")
        self.alerts.append(alert)
        self.sim.record(ALERT, source="ids", **alert.to_dict())
        return alert
