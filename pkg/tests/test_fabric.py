import json

import pytest

from scsim.codec import ETHERTYPE_GOOSE, ETHERTYPE_SV
from scsim.fabric import (
    US, Action, EventRecord, Fabric, FlowRule, FlowTable, Host, Match, Packet, PortId, Simulator,
)

GOOSE_DST = bytes.fromhex("010ccd010001")
SV_DST = bytes.fromhex("010ccd040001")


def frame(dst, src, ethertype, appid=1, payload=b""):
    body = appid.to_bytes(2, "big") + (8 + len(payload)).to_bytes(2, "big") + bytes(4) + payload
    return dst + src + ethertype.to_bytes(2, "big") + body


class Sink(Host):
    def __init__(self, host_id, mac):
        super().__init__(host_id, mac)
        self.got = []
        self.mirrored = []

    def receive(self, pkt, port_name):
        self.got.append((self.sim.now, pkt.uid, port_name))

    def receive_mirror(self, pkt, ingress, capture_ref):
        self.mirrored.append((pkt.uid, ingress, capture_ref))


def net(n=4, seed=1, latency=(20, 80)):
    sim = Simulator(seed)
    fab = Fabric(sim, latency)
    fab.add_switch("S", range(1, n + 1))
    hosts = []
    for i in range(1, n + 1):
        h = Sink(f"H{i}", bytes((0, 0, 0, 0, 0, i)))
        fab.attach(h, "p", PortId("S", i))
        hosts.append(h)
    return sim, fab, hosts


class TestSimulator:
    def test_events_run_in_time_then_insertion_order(self):
        sim = Simulator()
        order = []
        sim.schedule(5, order.append, "b")
        sim.schedule(1, order.append, "a")
        sim.schedule(5, order.append, "c")
        sim.run(10)
        assert order == ["a", "b", "c"] and sim.now == 10

    def test_run_stops_at_horizon(self):
        sim = Simulator()
        hit = []
        sim.schedule(11, hit.append, 1)
        sim.run(10)
        assert hit == []
        sim.run(11)
        assert hit == [1]

    def test_cannot_schedule_in_the_past(self):
        sim = Simulator()
        sim.run(5)
        with pytest.raises(ValueError):
            sim.schedule(4, print)

    def test_record_json_fields(self):
        rec = EventRecord(7, 0, "alert", {"rule": "S2"})
        assert json.loads(rec.to_json()) == {"t": 7, "seq": 0, "kind": "alert", "rule": "S2"}


class TestFlowTable:
    def test_priority_then_cookie(self):
        t = FlowTable([FlowRule(5, 10, Match(), Action("drop")),
                       FlowRule(2, 10, Match(), Action("flood")),
                       FlowRule(9, 50, Match(ethertype=ETHERTYPE_SV), Action("drop"))])
        assert [r.cookie for r in t.rules] == [9, 2, 5]
        pkt = Packet(0, frame(GOOSE_DST, bytes(6), ETHERTYPE_GOOSE), None)
        assert t.match(1, pkt).cookie == 2

    def test_duplicate_cookie_rejected(self):
        t = FlowTable([FlowRule(1, 1)])
        with pytest.raises(KeyError):
            t.install(FlowRule(1, 2))

    def test_remove(self):
        t = FlowTable([FlowRule(1, 1), FlowRule(2, 1)])
        assert t.remove(1).cookie == 1
        assert t.remove(1) is None
        assert len(t) == 1

    def test_wildcards_and_fields(self):
        src = bytes.fromhex("020000000066")
        pkt = Packet(0, frame(SV_DST, src, ETHERTYPE_SV, appid=0x4001), None)
        assert Match(ingress_port=3, src_mac=src, appid=0x4001).matches(3, pkt)
        assert not Match(ingress_port=2).matches(3, pkt)
        assert not Match(dst_mac=GOOSE_DST).matches(3, pkt)
        assert Match().matches(3, pkt)

    def test_rule_dict_round_trip(self):
        rule = FlowRule(7, 100, Match(ingress_port=5, src_mac="02:00:00:00:00:66"), Action("drop", mirror=6))
        assert FlowRule.from_dict(json.loads(json.dumps(rule.to_dict()))) == rule

    @pytest.mark.parametrize("kw", [dict(priority=-1), dict(priority=1 << 16), dict(cookie=1 << 64)])
    def test_rule_ranges(self, kw):
        args = dict(cookie=1, priority=1)
        args.update(kw)
        with pytest.raises(ValueError):
            FlowRule(**args)

    def test_unknown_action(self):
        with pytest.raises(ValueError):
            Action("teleport")


class TestForwarding:
    def test_default_flood_excludes_ingress(self):
        sim, fab, hosts = net()
        hosts[0].send("p", frame(GOOSE_DST, bytes(hosts[0].mac), ETHERTYPE_GOOSE))
        sim.run(1000 * US)
        assert [len(h.got) for h in hosts] == [0, 1, 1, 1]

    def test_latency_within_bounds_and_shared_by_copies(self):
        sim, fab, hosts = net(seed=3)
        for _ in range(50):
            hosts[0].send("p", frame(GOOSE_DST, bytes(6), ETHERTYPE_GOOSE))
        sim.run(10_000 * US)
        for a, b, c in zip(hosts[1].got, hosts[2].got, hosts[3].got):
            assert a[0] == b[0] == c[0]
            assert 20 * US <= a[0] <= 80 * US

    def test_forward_and_mirror(self):
        sim, fab, hosts = net()
        fab.install_rule("S", FlowRule(1, 10, Match(ethertype=ETHERTYPE_SV), Action("forward", (2,), mirror=4)))
        pkt = hosts[0].send("p", frame(SV_DST, bytes(6), ETHERTYPE_SV))
        sim.run(1000 * US)
        assert [len(h.got) for h in hosts] == [0, 1, 0, 0]
        assert hosts[3].mirrored == [(pkt.uid, PortId("S", 1), ("S", 0))]

    def test_drop_with_mirror(self):
        sim, fab, hosts = net()
        fab.install_rule("S", FlowRule(1, 10, Match(), Action("drop", mirror=4)))
        hosts[0].send("p", frame(SV_DST, bytes(6), ETHERTYPE_SV))
        sim.run(1000 * US)
        assert [len(h.got) for h in hosts] == [0, 0, 0, 0]
        assert len(hosts[3].mirrored) == 1
        assert sim.records_of("frame_rx", disposition="rule_drop")

    def test_monitor_port_not_flooded(self):
        sim = Simulator()
        fab = Fabric(sim)
        fab.add_switch("S", [1, 2, 3])
        a, b, mon = Sink("A", b"\x00" * 5 + b"\x01"), Sink("B", b"\x00" * 5 + b"\x02"), Sink("M", b"\x00" * 5 + b"\x03")
        fab.attach(a, "p", ("S", 1))
        fab.attach(b, "p", ("S", 2))
        fab.attach(mon, "p", ("S", 3), monitor=True)
        a.send("p", frame(GOOSE_DST, bytes(6), ETHERTYPE_GOOSE))
        sim.run(1000 * US)
        assert len(b.got) == 1 and mon.got == []

    def test_disabled_ports(self):
        sim, fab, hosts = net()
        fab.set_port_state(("S", 2), False)
        hosts[0].send("p", frame(GOOSE_DST, bytes(6), ETHERTYPE_GOOSE))
        hosts[1].send("p", frame(GOOSE_DST, bytes(6), ETHERTYPE_GOOSE))
        sim.run(1000 * US)
        assert hosts[1].got == []
        assert len(hosts[2].got) == 1  # only H1's frame; H2's died at ingress
        drops = sim.records_of("frame_rx", disposition="dropped_admin_down")
        assert {r.detail["port"] for r in drops} == {2}

    def test_port_disabled_while_in_flight(self):
        sim, fab, hosts = net(latency=(50, 50))
        hosts[0].send("p", frame(GOOSE_DST, bytes(6), ETHERTYPE_GOOSE))
        sim.schedule(10 * US, fab.set_port_state, ("S", 3), False)
        sim.run(1000 * US)
        assert hosts[2].got == [] and len(hosts[1].got) == 1

    def test_trunk_between_switches(self):
        sim = Simulator()
        fab = Fabric(sim)
        fab.add_switch("A", [1, 9])
        fab.add_switch("B", [1, 9])
        fab.link(("A", 9), ("B", 9))
        x, y = Sink("X", b"\x00" * 5 + b"\x01"), Sink("Y", b"\x00" * 5 + b"\x02")
        fab.attach(x, "p", ("A", 1))
        fab.attach(y, "p", ("B", 1))
        x.send("p", frame(GOOSE_DST, bytes(6), ETHERTYPE_GOOSE))
        sim.run(1000 * US)
        assert len(y.got) == 1
        assert 40 * US <= y.got[0][0] <= 160 * US
        assert len(fab.switches["A"].capture) == len(fab.switches["B"].capture) == 1

    def test_egress_cache_invalidated_on_rule_change(self):
        sim, fab, hosts = net()
        hosts[0].send("p", frame(GOOSE_DST, bytes(6), ETHERTYPE_GOOSE))
        sim.run(200 * US)
        fab.install_rule("S", FlowRule(1, 10, Match(ingress_port=1), Action("drop")))
        hosts[0].send("p", frame(GOOSE_DST, bytes(6), ETHERTYPE_GOOSE))
        sim.run(400 * US)
        fab.remove_rule("S", 1)
        hosts[0].send("p", frame(GOOSE_DST, bytes(6), ETHERTYPE_GOOSE))
        sim.run(600 * US)
        assert len(hosts[1].got) == 2


class TestControlPlane:
    def test_duplicate_and_unknown_cookie_are_logged(self):
        sim, fab, _ = net()
        assert fab.install_rule("S", FlowRule(1, 1)) == 1
        assert fab.install_rule("S", FlowRule(1, 2)) is None
        fab.remove_rule("S", 99)
        statuses = [r.detail["status"] for r in sim.records_of("rule_update")]
        assert statuses == ["ok", "duplicate_cookie", "unknown_cookie"]

    def test_port_change_records(self):
        sim, fab, _ = net()
        fab.set_port_state(("S", 1), False)
        fab.set_port_state(("S", 1), False)
        changed = [r.detail["changed"] for r in sim.records_of("port_change")]
        assert changed == [True, False]
        assert not fab.port_enabled(PortId("S", 1))

    def test_topology_errors(self):
        sim, fab, hosts = net()
        with pytest.raises(ValueError):
            fab.attach(Sink("Z", bytes(6)), "p", ("S", 1))
        with pytest.raises(KeyError):
            fab.port(("S", 99))
        with pytest.raises(ValueError):
            fab.add_switch("S", [1])
        with pytest.raises(ValueError):
            Fabric(sim, (80, 20))

    def test_port_id_parse(self):
        assert PortId.parse("PB:12") == PortId("PB", 12)
        assert str(PortId("SB", 3)) == "SB:3"
        with pytest.raises(ValueError):
            PortId.parse("PB")


class TestWatch:
    def test_watched_deliveries_are_logged(self):
        sim, fab, hosts = net()
        fab.watch("H1")
        fab.install_rule("S", FlowRule(1, 1, Match(), Action("flood", mirror=4)))
        pkt = hosts[0].send("p", frame(GOOSE_DST, bytes(6), ETHERTYPE_GOOSE))
        sim.run(1000 * US)
        log = fab.watch_log
        assert {(h, m) for _, h, _, m, _ in log} == {("H2", False), ("H3", False), ("H4", True)}
        assert all(uid == pkt.uid for *_, uid in log)


def test_same_seed_same_timings():
    def timings(seed):
        sim, fab, hosts = net(seed=seed)
        for k in range(20):
            sim.schedule(k * 100 * US, hosts[0].send, "p", frame(GOOSE_DST, bytes(6), ETHERTYPE_GOOSE))
        sim.run(10_000 * US)
        return [t for t, _, _ in hosts[1].got]

    assert timings(5) == timings(5)
    assert timings(5) != timings(6)
