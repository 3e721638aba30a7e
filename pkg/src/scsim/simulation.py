"""Build a simulation from a :class:`~scsim.scenario.Scenario`, run it, write outputs."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from scsim import codec, pcap
from scsim.apc import BANNERS, AdaptivePortController, CiedEntry, PiedEntry
from scsim.attacks import Attacker, Victims, run_attack
from scsim.devices import (
    Breaker, DifferentialElement, FaultSegment, GooseConfig, GoosePublisher, MergingUnit,
    OvercurrentElement, ProtectionIed, ProtectionSettings, SvStream, Waveform,
)
from scsim.fabric import SECOND, Fabric, FlowRule, PortId, Simulator
from scsim.ids import Baseline, IdsConfig, IntrusionDetector, PublisherSpec, TargetMap

log = logging.getLogger(__name__)

OUTPUT_FILES = ("events.jsonl", "summary.json", "capture_merged.pcap")


def _goose_config(g):
    return GooseConfig(g.gocb_ref, g.go_id, g.dat_set, g.appid, g.dst, g.conf_rev)


def _element(function, settings, subs):
    if function == "oc":
        return OvercurrentElement(settings)
    return DifferentialElement(settings, subs)


@dataclass(frozen=True)
class AssertionResult:
    name: str
    ok: bool
    expected: object
    actual: object

    def to_dict(self):
        return {"name": self.name, "ok": self.ok, "expected": self.expected, "actual": self.actual}


class Simulation:
    """One independent simulator instance for one scenario.

    ``ids_enabled=False`` keeps the IDS attached (it still counts mirrored
    frames) but stops it from inspecting, so no mitigation ever happens.
    """

    def __init__(self, scenario, ids_enabled=None, console=None):
        self.scenario = s = scenario
        self.sim = Simulator(s.seed, s.trace)
        lo, hi = s.topology.latency_us
        self.fabric = Fabric(self.sim, (lo, hi))
        self.console = console
        self.devices = {}
        self.runs = []
        self.finished = False
        self._build(ids_enabled if ids_enabled is not None else s.ids.enabled)

    # -- construction ------------------------------------------------------
    def _build(self, ids_enabled):
        s, fabric = self.scenario, self.fabric
        for sw in s.topology.switches:
            fabric.add_switch(sw.name, sw.ports, sw.disabled)
        for a, b in s.topology.links:
            fabric.link(PortId.parse(a), PortId.parse(b))

        w = s.waveform
        self.waveform = Waveform(
            w.frequency, w.current_rms, w.voltage_rms,
            tuple(FaultSegment(f.start, f.end, f.multiplier, f.stream, f.polarity) for f in w.faults))
        settings = ProtectionSettings(s.protection.oc_pickup, s.protection.oc_delay,
                                      s.protection.diff_min_operate, s.protection.diff_slope)

        sv_victims, goose_victims = {}, {}
        sv_specs, goose_specs = [], []
        for m in s.merging_units:
            streams = tuple(SvStream(st.sv_id, st.appid, st.dst, st.conf_rev, st.sign) for st in m.streams)
            mu = MergingUnit(m.id, m.mac, streams, self.waveform)
            fabric.attach(mu, "pb", PortId.parse(m.port))
            self.devices[m.id] = mu
            for st in streams:
                sv_victims[st.sv_id] = (st, mu.mac)
                sv_specs.append(PublisherSpec(st.sv_id, mu.mac, st.appid, st.dst))

        self.pieds = {}
        registry = []
        for p in s.pieds:
            dev = ProtectionIed(p.id, p.mac, f"PIED_{p.function.upper()}")
            sv_port, goose_port = PortId.parse(p.sv_port), PortId.parse(p.goose_port)
            fabric.attach(dev, "sv", sv_port)
            fabric.attach(dev, "goose", goose_port)
            cfg = _goose_config(p.goose)
            pub = GoosePublisher(dev, "goose", cfg, 1, s.epoch_ns)
            dev.add_function(p.function, _element(p.function, settings, p.sv_subscriptions), pub,
                             p.sv_subscriptions)
            self.pieds[p.id] = self.devices[p.id] = dev
            goose_victims[cfg.go_id] = (cfg, dev.mac)
            goose_specs.append(PublisherSpec(cfg.go_id, dev.mac, cfg.appid, cfg.dst))
            registry.append(PiedEntry(p.id, p.weight, p.function, (sv_port, goose_port), cfg.go_id,
                                      p.disableable))

        c = s.cied
        self.cied = cied = ProtectionIed(c.id, c.mac, "CIED")
        fabric.attach(cied, "sv", PortId.parse(c.sv_port))
        cied_ports = {}
        for fn, spec in c.functions.items():
            cied_ports[fn] = PortId.parse(spec.port)
            fabric.attach(cied, fn, cied_ports[fn])
            cfg = _goose_config(spec.goose)
            pub = GoosePublisher(cied, fn, cfg, 1, s.epoch_ns)
            cied.add_function(fn, _element(fn, settings, spec.sv_subscriptions), pub, spec.sv_subscriptions)
            goose_victims[cfg.go_id] = (cfg, cied.mac)
            goose_specs.append(PublisherSpec(cfg.go_id, cied.mac, cfg.appid, cfg.dst))
        self.devices[c.id] = cied

        self.breakers = {}
        for b in s.breakers:
            cb = Breaker(b.id, b.mac, b.subscriptions)
            fabric.attach(cb, "goose", PortId.parse(b.port))
            self.breakers[b.id] = self.devices[b.id] = cb

        redirect = {}
        for fn, spec in c.functions.items():
            port = cied_ports[fn]
            redirect[fn] = tuple(
                PortId.parse(b.port).index for b in s.breakers
                if spec.goose.go_id in b.subscriptions and PortId.parse(b.port).switch == port.switch)

        i = s.ids
        cfg = IdsConfig(rules=dict(i.rules), goose_max_jump=i.goose_max_jump,
                        goose_max_changes_per_s=i.goose_max_changes_per_s,
                        sv_bound_factor=i.sv_bound_factor, sv_rate_tolerance=i.sv_rate_tolerance,
                        sv_rate_window_ms=i.sv_rate_window_ms, suppression_ms=i.suppression_ms,
                        nominal_current=w.current_rms[0][1], nominal_voltage=w.voltage_rms)
        sv_subs = {}
        for p in s.pieds:
            for sv in p.sv_subscriptions:
                sv_subs.setdefault(sv, []).append(p.id)
        targets = TargetMap({k: tuple(v) for k, v in sv_subs.items()},
                            {p.goose.go_id: p.id for p in s.pieds})
        self.ids = IntrusionDetector(i.id, i.mac, Baseline(sv_specs, goose_specs), targets, cfg, ids_enabled)
        monitor = {}
        for ref in i.ports:
            pid = PortId.parse(ref)
            fabric.attach(self.ids, pid.switch, pid, monitor=True)
            monitor[pid.switch] = pid.index

        self.attackers = {}
        for a in s.attackers:
            host = Attacker(a.id, a.mac)
            for ref in a.ports:
                pid = PortId.parse(ref)
                fabric.attach(host, pid.switch, pid)
            fabric.watch(a.id)
            self.attackers[a.id] = host

        self.apc = AdaptivePortController(
            fabric, registry, CiedEntry(c.id, cied_ports, redirect), s.gamma, monitor, dict(self.pieds),
            console=self.console)
        self.ids.listeners.append(self.apc.on_alert)
        for dev in self.pieds.values():
            dev.on_failure = self.apc.on_device_fault

        for sw_name, rules in s.flows.items():
            for r in rules:
                fabric.install_rule(sw_name, FlowRule.from_dict(r))

        self.victims = Victims(sv_victims, goose_victims, w.current_rms[0][1], w.voltage_rms,
                               w.frequency, s.epoch_ns)

    # -- execution ---------------------------------------------------------
    def run(self):
        if self.finished:
            raise RuntimeError("simulation already ran")
        s = self.scenario
        self.apc.start()
        for dev in self.devices.values():
            dev.start()
        for spec in s.attacks:
            self.runs.append(run_attack(spec, self.attackers[spec.attacker], self.victims, s.seed))
        self.sim.run(round(s.duration * SECOND))
        self.finished = True
        return self

    # -- results -------------------------------------------------------------
    def merged_capture(self):
        frames = []
        for sw in self.fabric.switches.values():
            frames.extend(sw.capture)
        frames.sort(key=lambda f: f[0])
        return frames

    def cied_goose_frames(self):
        mac = bytes(self.cied.mac)
        return [(t, d) for t, d in self.merged_capture()
                if len(d) >= 14 and d[6:12] == mac and (d[12] << 8 | d[13]) == codec.ETHERTYPE_GOOSE]

    def mitigation_time(self, attacker):
        """Virtual time at which a drop rule for ``attacker``'s MAC took effect."""
        mac = self.attackers[attacker].mac
        macs = {mac} | {v[1] for v in self.victims.sv.values()} | {v[1] for v in self.victims.goose.values()}
        ingress = set(self.attackers[attacker].ports.values())
        for t, plan in self.apc.applied:
            for act in plan.actions:
                if act.op != "install_rule" or act.rule.action.kind != "drop":
                    continue
                m = act.rule.match
                if m.src_mac in macs and PortId(act.switch, m.ingress_port) in ingress:
                    return t
        return None

    def post_mitigation_deliveries(self, attacker):
        """Attacker frames sent after mitigation that still reached a protection device.

        Returns ``(sent_after, in_flight)``: frames transmitted at or after the
        drop rule took effect, and frames already inside the switch when it did.
        """
        t_mit = self.mitigation_time(attacker)
        if t_mit is None:
            return None, None
        sent = {uid: t for t, uid, _ in self.attackers[attacker].sent}
        protected = set(self.pieds) | {self.cied.id} | set(self.breakers)
        after, in_flight = [], []
        for t, host, port, mirror, uid in self.fabric.watch_log:
            if mirror or host not in protected or t < t_mit:
                continue
            (after if sent.get(uid, -1) >= t_mit else in_flight).append((t, host, str(port), uid))
        return after, in_flight

    def check_assertions(self):
        a = self.scenario.assertions
        out = []

        def check(name, expected, actual, ok=None):
            if expected is None:
                return
            out.append(AssertionResult(name, expected == actual if ok is None else ok, expected, actual))

        alerts = len(self.ids.alerts)
        check("objective", a.objective, self.apc.objective)
        if a.max_alerts is not None:
            check("max_alerts", a.max_alerts, alerts, alerts <= a.max_alerts)
        if a.min_alerts is not None:
            check("min_alerts", a.min_alerts, alerts, alerts >= a.min_alerts)
        if a.banners is not None:
            got = sorted({k for k, v in BANNERS.items() if v in self.apc.banners})
            check("banners", sorted(a.banners), got)
        if a.failed_over is not None:
            got = sorted(k for k, v in self.apc.failover_state.items() if v == "failed_over")
            check("failed_over", sorted(a.failed_over), got)
        if a.breakers is not None:
            got = {k: self.breakers[k].state.position for k in a.breakers}
            check("breakers", dict(a.breakers), got)
        if a.ports_disabled is not None:
            got = [r for r in a.ports_disabled if not self.fabric.port_enabled(PortId.parse(r))]
            check("ports_disabled", list(a.ports_disabled), got)
        if a.ports_enabled is not None:
            got = [r for r in a.ports_enabled if self.fabric.port_enabled(PortId.parse(r))]
            check("ports_enabled", list(a.ports_enabled), got)
        if a.attacker_drop_rule is not None:
            got = all(self.mitigation_time(x) is not None for x in self.attackers)
            check("attacker_drop_rule", a.attacker_drop_rule, got)
        if a.attacker_isolated is not None:
            leaks = 0
            for x in self.attackers:
                after, _ = self.post_mitigation_deliveries(x)
                leaks += len(after) if after is not None else 1
            check("attacker_isolated", a.attacker_isolated, leaks == 0)
        if a.cied_goose_in_pcap is not None:
            check("cied_goose_in_pcap", a.cied_goose_in_pcap, bool(self.cied_goose_frames()))
        return out

    def summary(self):
        s = self.scenario
        ids = self.ids
        results = self.check_assertions()
        attackers = {}
        for x, host in self.attackers.items():
            after, in_flight = self.post_mitigation_deliveries(x)
            attackers[x] = {
                "frames_sent": len(host.sent),
                "mitigated_at": self.mitigation_time(x),
                "delivered_after_mitigation": None if after is None else len(after),
                "in_flight_at_mitigation": None if in_flight is None else len(in_flight),
            }
        return {
            "scenario": s.name,
            "seed": s.seed,
            "duration": s.duration,
            "ids_enabled": ids.enabled,
            "objective": self.apc.objective,
            "pssa_solutions": [{"time": t, "attacks": list(a), **sol.as_dict()}
                               for t, a, sol in self.apc.solutions],
            "alerts": [al.to_dict() for al in ids.alerts],
            "alerts_suppressed": ids.suppressed,
            "banners": list(self.apc.banners),
            "mitigation_plans": [{"time": t, **p.to_dict()} for t, p in self.apc.applied],
            "failover_state": dict(self.apc.failover_state),
            "breakers": {k: {"position": cb.state.position, "opened_at": cb.state.last_trip_time,
                             "opened_by": cb.state.opened_by, "opened_by_src": cb.opened_by_src}
                         for k, cb in self.breakers.items()},
            "device_health": {k: d.health for k, d in self.devices.items()},
            "trips": {k: [[t, fn, op] for t, fn, op in d.decisions]
                      for k, d in list(self.pieds.items()) + [(self.cied.id, self.cied)]},
            "installed_cookies": sorted(self.apc.installed_cookies),
            "attackers": attackers,
            "cied_goose_frames": len(self.cied_goose_frames()),
            "frames_captured": {k: len(sw.capture) for k, sw in self.fabric.switches.items()},
            "assertions": [r.to_dict() for r in results],
            "passed": all(r.ok for r in results),
        }

    def write_outputs(self, out_dir):
        """Write event log, pcaps and summary; returns the summary dict."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "events.jsonl", "w", encoding="utf-8") as fh:
            for rec in self.sim.records:
                fh.write(rec.to_json())
                fh.write("\n")
        epoch = self.scenario.epoch_ns
        for name, sw in self.fabric.switches.items():
            pcap.write_pcap(out / f"capture_{name}.pcap", sw.capture, epoch)
        pcap.write_pcap(out / "capture_merged.pcap", self.merged_capture(), epoch)
        summary = self.summary()
        with open(out / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return summary


def run_scenario(scenario, out_dir=None, ids_enabled=None, console=None):
    """Convenience wrapper: build, run and (optionally) write outputs."""
    sim = Simulation(scenario, ids_enabled=ids_enabled, console=console).run()
    if out_dir is not None:
        sim.write_outputs(out_dir)
    return sim
