"""Attacker hosts that forge, replay or mangle SV and GOOSE traffic."""

from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass

from scsim import codec, kernels
from scsim.codec import GooseApdu
from scsim.devices import sample_time_ns, sample_values
from scsim.fabric import DEVICE_ACTION, SECOND, US, Host

ATTACK_KINDS = ("sv_inject", "goose_spoof", "replay", "malformed")
STRATEGIES = ("increment", "rollback", "jump")
JUMP_SIZE = 1000
SPOOF_TAL_MS = 2000
CAPTURE_LIMIT = 64


@dataclass(frozen=True)
class AttackSpec:
    """One attack campaign.  Times are virtual seconds.

    ``target`` is the victim svID (sv_inject) or goID (goose_spoof, replay);
    for ``malformed`` it only selects the frame template.  ``rate`` is in
    frames per second and is ignored by sv_inject, which follows the sample
    clock.
    """

    kind: str
    attacker: str
    start: float = 2.0
    target: str | None = None
    end: float | None = None
    port: str | None = None
    magnitude: float = 10.0
    strategy: str = "increment"
    rate: float = 50.0
    stealth: bool = False
    offset_us: float = 100.0
    protocol: str = "GOOSE"

    def problems(self):
        out = []
        if self.kind not in ATTACK_KINDS:
            out.append(f"unknown attack kind {self.kind!r}")
        if self.strategy not in STRATEGIES:
            out.append(f"unknown stNum strategy {self.strategy!r}")
        if self.start < 0:
            out.append("attack start must be >= 0")
        if self.end is not None and self.end <= self.start:
            out.append("attack end must be after start")
        if self.rate <= 0:
            out.append("attack rate must be positive")
        if self.magnitude < 0:
            out.append("attack magnitude must be >= 0")
        if self.protocol not in ("GOOSE", "SV"):
            out.append("malformed protocol must be GOOSE or SV")
        if self.kind != "malformed" and not self.target:
            out.append(f"{self.kind} needs a target")
        return out

    @property
    def protocol_of(self):
        if self.kind == "sv_inject":
            return "SV"
        if self.kind == "malformed":
            return self.protocol
        return "GOOSE"

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Victims:
    """What an attacker knows about legitimate publishers.

    ``sv`` maps svID to ``(SvStream, publisher MAC)``; ``goose`` maps goID
    to ``(GooseConfig, publisher MAC)``.
    """

    sv: dict
    goose: dict
    nominal_current: float = 1000.0
    nominal_voltage: float = 7967.0
    frequency: float = 60.0
    epoch_ns: int = 0
    sample_rate: int = codec.SAMPLES_PER_SECOND


class Attacker(Host):
    """A rogue host.  It sniffs every GOOSE frame flooded to it."""

    role = "attacker"

    def __init__(self, host_id, mac):
        super().__init__(host_id, mac)
        self.goose_seen = {}      # goID -> (st_num, sq_num, num_entries)
        self.captured = {}        # goID -> raw frames, oldest first
        self.sent = []            # (time, uid, kind)
        self.capturing = True

    def receive(self, pkt, port_name):
        if pkt.ethertype != codec.ETHERTYPE_GOOSE:
            return
        dec = pkt.decoded()
        if not isinstance(dec, tuple):
            return
        g = dec[1]
        self.goose_seen[g.go_id] = (g.st_num, g.sq_num, g.num_dat_set_entries)
        if self.capturing:
            frames = self.captured.setdefault(g.go_id, [])
            frames.append(pkt.data)
            del frames[:-CAPTURE_LIMIT]

    def emit(self, port_name, data, kind):
        pkt = self.send(port_name, data)
        self.sent.append((self.sim.now, pkt.uid, kind))
        return pkt


def _default_port(spec, attacker):
    if spec.port:
        return spec.port
    want = "PB" if spec.protocol_of == "SV" else "SB"
    if want in attacker.ports:
        return want
    return next(iter(attacker.ports))


class AttackRun:
    """Schedules the frames of one :class:`AttackSpec` on the attacker."""

    def __init__(self, spec, attacker, victims, seed=0):
        self.spec = spec
        self.attacker = attacker
        self.victims = victims
        self.port = _default_port(spec, attacker)
        self.rng = random.Random(f"{seed}:{spec.kind}:{spec.attacker}:{spec.start}")
        self.count = 0
        self._own_st = None
        self.start_ns = round(spec.start * SECOND)
        self.end_ns = None if spec.end is None else round(spec.end * SECOND)

    @property
    def sim(self):
        return self.attacker.sim

    def _done(self):
        return self.end_ns is not None and self.sim.now >= self.end_ns

    def schedule(self):
        kind = self.spec.kind
        if kind == "sv_inject":
            rate = self.victims.sample_rate
            k = math.ceil(self.spec.start * rate)
            self.sim.schedule(self._sv_time(k), self._sv_tick, k)
        else:
            # replay stops sniffing once it starts so it re-sends stale frames only
            step = {"goose_spoof": self._spoof_tick, "replay": self._replay_tick,
                    "malformed": self._malformed_tick}[kind]
            self.sim.schedule(self.start_ns, step, 0)

    def _periodic(self, fn, n):
        self.sim.schedule(self.start_ns + round((n + 1) * SECOND / self.spec.rate), fn, n + 1)

    # -- sv_inject -------------------------------------------------------------
    def _sv_time(self, k):
        return sample_time_ns(k, self.victims.sample_rate) + round(self.spec.offset_us * US)

    def _sv_tick(self, k):
        if self._done():
            return
        v = self.victims
        stream, pub_mac = v.sv[self.spec.target]
        t = k / v.sample_rate
        vals = sample_values(t, self.spec.magnitude * v.nominal_current, v.nominal_voltage,
                             v.frequency, stream.sign)
        src = pub_mac if self.spec.stealth else self.attacker.mac
        data = kernels.encode_sv_frame(bytes(stream.dst), bytes(src), stream.appid,
                                       stream.sv_id.encode("ascii"), k % v.sample_rate,
                                       stream.conf_rev, 2, vals, (0,) * 8)
        self.attacker.emit(self.port, data, "sv_inject")
        self.count += 1
        self.sim.schedule(self._sv_time(k + 1), self._sv_tick, k + 1)

    # -- goose_spoof -----------------------------------------------------------
    def next_st_num(self):
        seen = self.attacker.goose_seen.get(self.spec.target)
        base = seen[0] if seen else 1
        strategy = self.spec.strategy
        if strategy == "rollback":
            return max(0, base - 1)
        if self._own_st is None:
            st = base + (JUMP_SIZE if strategy == "jump" else 1)
        else:
            st = max(base, self._own_st) + 1
        self._own_st = st
        return st

    def _spoof_tick(self, n):
        if self._done():
            return
        v = self.victims
        cfg, pub_mac = v.goose[self.spec.target]
        seen = self.attacker.goose_seen.get(self.spec.target)
        entries = seen[2] if seen else 1
        apdu = GooseApdu(
            gocb_ref=cfg.gocb_ref, time_allowed_to_live=SPOOF_TAL_MS, dat_set=cfg.dat_set,
            go_id=cfg.go_id, timestamp=codec.utc_time_quantize(v.epoch_ns + self.sim.now),
            st_num=self.next_st_num(), sq_num=0, test=False, conf_rev=cfg.conf_rev,
            nds_com=False, num_dat_set_entries=entries, all_data=(True,) * entries)
        src = pub_mac if self.spec.stealth else self.attacker.mac
        self.attacker.emit(self.port, codec.encode_goose(apdu, cfg.dst, src, cfg.appid), "goose_spoof")
        self.count += 1
        self._periodic(self._spoof_tick, n)

    # -- replay ----------------------------------------------------------------
    def _replay_tick(self, n):
        if self._done():
            return
        self.attacker.capturing = False
        frames = self.attacker.captured.get(self.spec.target)
        if frames:
            self.attacker.emit(self.port, frames[self.count % len(frames)], "replay")
            self.count += 1
        elif n == 0:
            self.sim.record(DEVICE_ACTION, device=self.attacker.id, action="diagnostic",
                            detail="replay_nothing_captured", go_id=self.spec.target)
        self._periodic(self._replay_tick, n)

    # -- malformed -------------------------------------------------------------
    def template(self):
        v = self.victims
        src = self.attacker.mac
        if self.spec.protocol == "SV":
            if self.spec.target in v.sv:
                stream, _ = v.sv[self.spec.target]
                dst, appid, sv_id = stream.dst, stream.appid, stream.sv_id
            else:
                dst, appid, sv_id = codec.MacAddress.parse("01:0c:cd:04:00:ff"), 0x4FFF, "MALFORMED"
            return codec.encode_sv(codec.SvApdu(sv_id, 0, 1, 2, (0,) * 8, (0,) * 8), dst, src, appid)
        if self.spec.target in v.goose:
            cfg, _ = v.goose[self.spec.target]
            ref, dat_set, go_id, dst, appid = cfg.gocb_ref, cfg.dat_set, cfg.go_id, cfg.dst, cfg.appid
        else:
            ref, dat_set, go_id = "X/LLN0$GO$gcb", "X/LLN0$ds", "MALFORMED"
            dst, appid = codec.MacAddress.parse("01:0c:cd:01:00:ff"), 0x3FFF
        apdu = GooseApdu(ref, SPOOF_TAL_MS, dat_set, go_id, 0, 1, 0, False, 1, False, 1, (True,))
        return codec.encode_goose(apdu, dst, src, appid)

    def malformed_frame(self):
        """A frame whose APDU is cut short inside its TLV structure.

        Even frames keep the original Length field (header overrun); odd
        ones shrink it so the TLV walk itself runs off the end.
        """
        full = self.template()
        cut = self.rng.randint(24, len(full) - 1)
        frame = bytearray(full[:cut])
        if self.count % 2:
            frame[16:18] = (cut - 14).to_bytes(2, "big")
        return bytes(frame)

    def _malformed_tick(self, n):
        if self._done():
            return
        self.attacker.emit(self.port, self.malformed_frame(), "malformed")
        self.count += 1
        self._periodic(self._malformed_tick, n)


def run_attack(spec, attacker, victims, seed=0):
    """Schedule ``spec`` on ``attacker`` and return the running campaign."""
    problems = spec.problems()
    if spec.kind == "sv_inject" and spec.target not in victims.sv:
        problems.append(f"unknown svID {spec.target!r}")
    if spec.kind in ("goose_spoof", "replay") and spec.target not in victims.goose:
        problems.append(f"unknown goID {spec.target!r}")
    if problems:
        raise ValueError("; ".join(problems))
    run = AttackRun(spec, attacker, victims, seed)
    run.schedule()
    return run
