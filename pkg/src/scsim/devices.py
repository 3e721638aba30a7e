"""Merging unit, protection IEDs, concurrent IED and circuit breakers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from scsim import codec, kernels
from scsim.codec import GooseApdu, MacAddress, SvApdu
from scsim.fabric import DEVICE_ACTION, MS, SECOND, Host

SQRT2 = math.sqrt(2.0)
INT32_MIN, INT32_MAX = -(1 << 31), (1 << 31) - 1
PHASE_SHIFTS = (0.0, -2.0 * math.pi / 3.0, 2.0 * math.pi / 3.0)

BURST_INTERVALS_MS = (2, 4, 8, 16)
HEARTBEAT_MS = 1000

NORMAL, COMPROMISED, ISOLATED = "normal", "compromised", "isolated"


@dataclass(frozen=True)
class ProtectionSettings:
    oc_pickup: float = 2000.0       # A RMS
    oc_delay: float = 100.0         # ms, definite time
    diff_min_operate: float = 200.0  # A
    diff_slope: float = 0.3

    def __post_init__(self):
        if min(self.oc_pickup, self.oc_delay, self.diff_min_operate, self.diff_slope) <= 0:
            raise ValueError("protection settings must be positive")
        if self.diff_slope > 1:
            raise ValueError("diff_slope must lie in (0, 1]")


@dataclass(frozen=True)
class FaultSegment:
    start: float
    end: float
    multiplier: float
    stream: str
    polarity: int = 1

    def __post_init__(self):
        if self.multiplier < 0:
            raise ValueError("fault multiplier must be >= 0")
        if self.end <= self.start:
            raise ValueError("fault segment must end after it starts")
        if self.polarity not in (1, -1):
            raise ValueError("polarity must be +1 or -1")


@dataclass(frozen=True)
class Waveform:
    """Piecewise-constant RMS current schedule plus per-stream fault segments.

    ``current_rms`` is a sequence of ``(start_seconds, amperes)`` steps whose
    first step starts at 0.
    """

    frequency: float = 60.0
    current_rms: tuple = ((0.0, 1000.0),)
    voltage_rms: float = 7967.0
    faults: tuple = ()

    def __post_init__(self):
        steps = tuple((float(t), float(a)) for t, a in self.current_rms)
        if not steps or steps[0][0] != 0.0:
            raise ValueError("current schedule must start at t=0")
        if any(b[0] <= a[0] for a, b in zip(steps, steps[1:])):
            raise ValueError("current schedule times must increase")
        if any(a < 0 for _, a in steps):
            raise ValueError("current magnitudes must be >= 0")
        object.__setattr__(self, "current_rms", steps)
        object.__setattr__(self, "faults", tuple(self.faults))

    def current(self, t, stream):
        """``(rms_amperes, polarity)`` for ``stream`` at ``t`` seconds."""
        amps = self.current_rms[0][1]
        for start, a in self.current_rms:
            if start > t:
                break
            amps = a
        polarity = 1
        for f in self.faults:
            if f.stream == stream and f.start <= t < f.end:
                amps *= f.multiplier
                polarity *= f.polarity
        return amps, polarity


def _clip(v):
    return INT32_MIN if v < INT32_MIN else INT32_MAX if v > INT32_MAX else v


def sample_values(t, i_rms, v_rms, frequency, sign=1):
    """Instantaneous 9-2LE dataset at ``t`` seconds: currents in mA, voltages in 10 mV."""
    w = 2.0 * math.pi * frequency * t
    ipk = SQRT2 * i_rms * 1000.0 * sign
    vpk = SQRT2 * v_rms * 100.0
    ia, ib, ic = (_clip(round(ipk * math.sin(w + ph))) for ph in PHASE_SHIFTS)
    va, vb, vc = (_clip(round(vpk * math.sin(w + ph))) for ph in PHASE_SHIFTS)
    return (ia, ib, ic, _clip(ia + ib + ic), va, vb, vc, _clip(va + vb + vc))


def rms_estimate(window):
    """RMS of exactly one cycle of samples."""
    if len(window) != codec.SAMPLES_PER_CYCLE:
        raise ValueError(f"window must hold {codec.SAMPLES_PER_CYCLE} samples, got {len(window)}")
    return kernels.window_rms(window)


def sample_time_ns(k, rate=codec.SAMPLES_PER_SECOND):
    return k * SECOND // rate


@dataclass(frozen=True)
class SvStream:
    sv_id: str
    appid: int
    dst: MacAddress
    conf_rev: int = 1
    sign: int = 1

    def __post_init__(self):
        object.__setattr__(self, "dst", MacAddress(self.dst))


@dataclass(frozen=True)
class GooseConfig:
    gocb_ref: str
    go_id: str
    dat_set: str
    appid: int
    dst: MacAddress
    conf_rev: int = 1

    def __post_init__(self):
        object.__setattr__(self, "dst", MacAddress(self.dst))


class Device(Host):
    """A host with a health state; an isolated device transmits nothing."""

    def __init__(self, host_id, mac):
        super().__init__(host_id, mac)
        self.health = NORMAL

    def send(self, port_name, data):
        if self.health == ISOLATED:
            return None
        return super().send(port_name, data)

    def set_health(self, health, reason=""):
        if health != self.health:
            self.health = health
            self.sim.record(DEVICE_ACTION, device=self.id, action="health", health=health, reason=reason)


class MergingUnit(Device):
    role = "MU"

    def __init__(self, host_id, mac, streams, waveform, rate=codec.SAMPLES_PER_SECOND, port="pb"):
        super().__init__(host_id, mac)
        self.streams = tuple(streams)
        self.waveform = waveform
        self.rate = rate
        self.port_name = port
        self._src = bytes(self.mac)
        self._ids = [s.sv_id.encode("ascii") for s in self.streams]

    def frames(self, k):
        """SV frames for sample instant ``k`` (one per stream)."""
        t = k / self.rate
        cnt = k % self.rate
        quality = (0,) * 8
        out = []
        for s, raw_id in zip(self.streams, self._ids):
            amps, pol = self.waveform.current(t, s.sv_id)
            vals = sample_values(t, amps, self.waveform.voltage_rms, self.waveform.frequency, s.sign * pol)
            out.append(kernels.encode_sv_frame(bytes(s.dst), self._src, s.appid, raw_id, cnt,
                                               s.conf_rev, 2, vals, quality))
        return out

    def start(self):
        self.sim.schedule(0, self._tick, 0)

    def _tick(self, k):
        for data in self.frames(k):
            self.send(self.port_name, data)
        self.sim.schedule(sample_time_ns(k + 1, self.rate), self._tick, k + 1)


def mu_tick(mu, k):
    return mu.frames(k)


class _CycleWindows:
    """Three per-phase one-cycle windows fed by a contiguous smpCnt sequence.

    A repeated smpCnt overwrites the latest sample; any other discontinuity
    empties the windows.
    """

    def __init__(self, rate, n=3, size=codec.SAMPLES_PER_CYCLE):
        self.rate = rate
        self.windows = [kernels.RmsWindow(size) for _ in range(n)]
        self.last = None

    def ingest(self, cnt, samples):
        last = self.last
        if last is not None and cnt == last:
            for w, v in zip(self.windows, samples):
                w.replace_last(v)
            return "overwrite"
        status = "append"
        if last is not None and cnt != (last + 1) % self.rate:
            for w in self.windows:
                w.clear()
            status = "gap"
        for w, v in zip(self.windows, samples):
            w.push(v)
        self.last = cnt
        return status

    def reset(self):
        for w in self.windows:
            w.clear()
        self.last = None

    @property
    def full(self):
        return self.windows[0].full

    def rms(self):
        return [w.rms() / 1000.0 for w in self.windows]


class OvercurrentElement:
    """Definite-time phase overcurrent (ANSI 50/51)."""

    function = "oc"

    def __init__(self, settings, rate=codec.SAMPLES_PER_SECOND):
        self.settings = settings
        self.delay_ns = int(settings.oc_delay * MS)
        self.windows = _CycleWindows(rate)
        self.pickup_since = None
        self.operated = False

    def evaluate(self, now, sv):
        """Feed one sample; returns ``(decision, status)``.

        ``decision`` is True on operate, False on reset, None otherwise;
        ``status`` reports how the smpCnt sequence was handled.
        """
        status = self.windows.ingest(sv.smp_cnt, sv.values[:3])
        if status == "gap":
            self.pickup_since = None
        picked = self.windows.full and max(self.windows.rms()) >= self.settings.oc_pickup
        if not picked:
            self.pickup_since = None
            if self.operated:
                self.operated = False
                return False, status
            return None, status
        if self.pickup_since is None:
            self.pickup_since = now
        if not self.operated and now - self.pickup_since >= self.delay_ns:
            self.operated = True
            return True, status
        return None, status


class DifferentialElement:
    """Percentage-restrained current differential (ANSI 87) over two streams.

    Samples are aligned on smpCnt.  Per phase the operate quantity is the RMS
    of the per-sample sum of both currents, the restraint the mean of the two
    RMS values.
    """

    function = "diff"
    LOSS_LIMIT = 2 * codec.SAMPLES_PER_CYCLE

    def __init__(self, settings, streams, rate=codec.SAMPLES_PER_SECOND):
        if len(streams) != 2:
            raise ValueError("differential protection needs exactly two streams")
        self.settings = settings
        self.streams = tuple(streams)
        self.rate = rate
        self.pending = {s: {} for s in self.streams}
        self.op = _CycleWindows(rate)
        self.side_a = _CycleWindows(rate)
        self.side_b = _CycleWindows(rate)
        self.operated = False
        self.stream_lost = False

    def evaluate(self, now, sv):
        a_id, b_id = self.streams
        mine = self.pending[sv.sv_id]
        other = self.pending[b_id if sv.sv_id == a_id else a_id]
        cnt = sv.smp_cnt
        mine[cnt] = sv.values[:3]
        if cnt not in other:
            if len(mine) > self.LOSS_LIMIT:
                mine.clear()
                self.op.reset()
                self.side_a.reset()
                self.side_b.reset()
                self.stream_lost = True
                return None, "stream_loss"
            return None, "pending"
        self.stream_lost = False
        a = self.pending[a_id][cnt]
        b = self.pending[b_id][cnt]
        self.pending[a_id] = {cnt: a}
        self.pending[b_id] = {cnt: b}
        status = self.op.ingest(cnt, [x + y for x, y in zip(a, b)])
        self.side_a.ingest(cnt, a)
        self.side_b.ingest(cnt, b)
        return self.aligned(status)

    def aligned(self, status):
        trip = False
        if self.op.full:
            s = self.settings
            for i_op, ra, rb in zip(self.op.rms(), self.side_a.rms(), self.side_b.rms()):
                if i_op > max(s.diff_min_operate, s.diff_slope * (ra + rb) / 2.0):
                    trip = True
                    break
        if trip and not self.operated:
            self.operated = True
            return True, status
        if not trip and self.operated:
            self.operated = False
            return False, status
        return None, status


def diff_quantities(samples_a, samples_b):
    """``(I_op, I_res)`` for one aligned cycle of a single phase, in input units."""
    op = kernels.window_rms([x + y for x, y in zip(samples_a, samples_b)])
    res = (kernels.window_rms(samples_a) + kernels.window_rms(samples_b)) / 2.0
    return op, res


class GoosePublisher:
    """GOOSE control block: burst retransmission after each change, then heartbeats."""

    def __init__(self, device, port_name, config, n_entries=1, epoch_ns=0):
        self.device = device
        self.port_name = port_name
        self.config = config
        self.epoch_ns = epoch_ns
        self.dataset = (False,) * n_entries
        self.st_num = 0
        self.sq_num = 0
        self.t_change = 0
        self._gen = 0
        self.sent = []  # (time, st_num, sq_num, time_allowed_to_live)

    @property
    def sim(self):
        return self.device.sim

    def start(self):
        self.st_num = 1
        self.sq_num = 0
        self.t_change = self.sim.now
        self._emit(HEARTBEAT_MS)
        self.sim.schedule(self.sim.now + HEARTBEAT_MS * MS, self._retransmit, self._gen, len(BURST_INTERVALS_MS))

    def publish(self, dataset, reason):
        self.dataset = tuple(bool(v) for v in dataset)
        self.st_num += 1
        self.sq_num = 0
        self.t_change = self.sim.now
        self._gen += 1
        self.sim.record(DEVICE_ACTION, device=self.device.id, action="goose_state_change",
                        go_id=self.config.go_id, st_num=self.st_num, dataset=list(self.dataset),
                        reason=reason)
        self._emit(BURST_INTERVALS_MS[0])
        self.sim.schedule(self.sim.now + BURST_INTERVALS_MS[0] * MS, self._retransmit, self._gen, 1)

    def _retransmit(self, gen, step):
        if gen != self._gen:
            return
        self.sq_num += 1
        interval = BURST_INTERVALS_MS[step] if step < len(BURST_INTERVALS_MS) else HEARTBEAT_MS
        self._emit(interval)
        self.sim.schedule(self.sim.now + interval * MS, self._retransmit, gen, step + 1)

    def apdu(self, interval_ms):
        c = self.config
        return GooseApdu(
            gocb_ref=c.gocb_ref, time_allowed_to_live=2 * interval_ms, dat_set=c.dat_set,
            go_id=c.go_id, timestamp=codec.utc_time_quantize(self.epoch_ns + self.t_change),
            st_num=self.st_num, sq_num=self.sq_num, test=False, conf_rev=c.conf_rev,
            nds_com=False, num_dat_set_entries=len(self.dataset), all_data=self.dataset)

    def _emit(self, interval_ms):
        apdu = self.apdu(interval_ms)
        self.sent.append((self.sim.now, apdu.st_num, apdu.sq_num, apdu.time_allowed_to_live))
        self.device.send(self.port_name, codec.encode_goose(apdu, self.config.dst, self.device.mac,
                                                            self.config.appid))


class ProtectionIed(Device):
    """A PIED (``role`` PIED_OC or PIED_DIFF) or, with several functions, the CIED.

    ``functions`` maps a function name to ``(element, publisher)``.  SV
    arrives on the port named ``sv_port``.
    """

    def __init__(self, host_id, mac, role, sv_port="sv"):
        super().__init__(host_id, mac)
        self.role = role
        self.sv_port = sv_port
        self.functions = {}
        self._routes = {}
        self.decisions = []  # (time, function, operated)
        self.on_failure = None

    def add_function(self, name, element, publisher, sv_ids):
        self.functions[name] = (element, publisher)
        for sv_id in sv_ids:
            self._routes.setdefault(sv_id, []).append(name)

    @property
    def subscriptions(self):
        return tuple(self._routes)

    def start(self):
        for _, pub in self.functions.values():
            pub.start()

    def receive(self, pkt, port_name):
        if port_name != self.sv_port or pkt.ethertype != codec.ETHERTYPE_SV:
            return
        dec = pkt.decoded()
        if not isinstance(dec, tuple):
            return
        sv = dec[1]
        names = self._routes.get(sv.sv_id)
        if not names:
            return
        now = self.sim.now
        for name in names:
            element, pub = self.functions[name]
            decision, status = element.evaluate(now, sv)
            if status in ("gap", "stream_loss"):
                self.sim.record(DEVICE_ACTION, device=self.id, action="diagnostic", function=name,
                                detail=status, sv_id=sv.sv_id, smp_cnt=sv.smp_cnt)
            if decision is not None:
                self.decisions.append((now, name, decision))
                self.sim.record(DEVICE_ACTION, device=self.id, action="trip" if decision else "reset",
                                function=name)
                pub.publish((decision,), reason="protection_operate" if decision else "protection_reset")

    def report_failure(self, reason):
        """Self-reported failure; forwarded to the controller hook when wired."""
        self.sim.record(DEVICE_ACTION, device=self.id, action="self_report_failure", reason=reason)
        if self.on_failure is not None:
            self.on_failure(self.id, reason)


@dataclass(frozen=True)
class BreakerState:
    position: str = "closed"
    last_trip_time: int | None = None
    opened_by: str | None = None


def cb_on_goose(state, apdu, subscriptions, now):
    """Next breaker state after receiving ``apdu``; returns ``(state, verdict)``."""
    if apdu.go_id not in subscriptions:
        return state, "unsubscribed"
    if apdu.test:
        return state, "test"
    if not (apdu.all_data and apdu.all_data[0]):
        return state, "no_trip"
    if state.position == "open":
        return state, "already_open"
    return replace(state, position="open", last_trip_time=now, opened_by=apdu.go_id), "opened"


class Breaker(Device):
    role = "CB"

    def __init__(self, host_id, mac, subscriptions, port="goose"):
        super().__init__(host_id, mac)
        self.subscriptions = frozenset(subscriptions)
        self.port_name = port
        self.state = BreakerState()
        self.opened_by_src = None
        self._unknown = set()

    def receive(self, pkt, port_name):
        if pkt.ethertype != codec.ETHERTYPE_GOOSE:
            return
        dec = pkt.decoded()
        if not isinstance(dec, tuple):
            return
        header, apdu = dec
        self.state, verdict = cb_on_goose(self.state, apdu, self.subscriptions, self.sim.now)
        if verdict == "opened":
            self.opened_by_src = str(header.src)
            self.sim.record(DEVICE_ACTION, device=self.id, action="cb_open", go_id=apdu.go_id,
                            src=str(header.src), uid=pkt.uid, st_num=apdu.st_num)
        elif verdict == "unsubscribed" and apdu.go_id not in self._unknown:
            self._unknown.add(apdu.go_id)
            self.sim.record(DEVICE_ACTION, device=self.id, action="diagnostic",
                            detail="unsubscribed_goid", go_id=apdu.go_id)
        elif verdict == "test" and apdu.all_data and apdu.all_data[0]:
            self.sim.record(DEVICE_ACTION, device=self.id, action="diagnostic",
                            detail="test_trip_ignored", go_id=apdu.go_id)

    def reset(self):
        self.state = BreakerState()
        self.sim.record(DEVICE_ACTION, device=self.id, action="cb_reset")
