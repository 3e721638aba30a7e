"""Whole-log invariants checked over complete simulation runs."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scsim import codec, presets
from scsim.fabric import US, Fabric, Host, PortId, Simulator
from scsim.simulation import Simulation


@pytest.fixture(scope="module")
def traced_runs():
    runs = {}
    for name in ("sv_attack", "goose_attack"):
        s = presets.bundled_scenario(name, duration=2.6).replace(trace="all")
        runs[name] = Simulation(s).run()
        runs[name + ":undefended"] = Simulation(s, ids_enabled=False).run()
    return runs


def test_breakers_only_open_on_subscribed_trip_goose(traced_runs):
    opened = 0
    for sim in traced_runs.values():
        recs = sim.sim.records
        tx = {r.detail["uid"]: r for r in recs if r.kind == "frame_tx"}
        for r in recs:
            if r.kind != "device_action" or r.detail.get("action") != "cb_open":
                continue
            opened += 1
            sent = tx[r.detail["uid"]]
            assert sent.detail["ethertype"] == codec.ETHERTYPE_GOOSE
            assert (sent.time, sent.seq) < (r.time, r.seq)
            assert r.detail["go_id"] in sim.breakers[r.detail["device"]].subscriptions
    assert opened >= 2  # the undefended runs must exercise the path


def test_no_attacker_frame_delivered_after_drop_rule(traced_runs):
    for name in ("sv_attack", "goose_attack"):
        sim = traced_runs[name]
        mac = str(sim.attackers["ATTACKER"].mac)
        recs = sim.sim.records
        installs = [r.time for r in recs if r.kind == "rule_update" and r.detail["status"] == "ok"
                    and r.detail["rule"]["match"].get("src_mac", "").lower() == mac.lower()]
        assert installs
        t_drop = min(installs)
        tx_time = {r.detail["uid"]: r.time for r in recs if r.kind == "frame_tx" and r.detail["host"] == "ATTACKER"}
        delivered = [r for r in recs if r.kind == "frame_rx" and r.detail.get("disposition") == "delivered"
                     and r.detail["uid"] in tx_time]
        assert any(tx_time[r.detail["uid"]] < t_drop for r in delivered)  # the check is not vacuous
        assert [r for r in delivered if tx_time[r.detail["uid"]] >= t_drop] == []


def test_disabled_pied_gets_no_samples_after_failover(traced_runs):
    sim = traced_runs["sv_attack"]
    t_fail = sim.apc.applied[0][0]
    delivered = [r for r in sim.sim.records if r.kind == "frame_rx" and r.time > t_fail
                 and r.detail.get("host") == "PIED_OC" and r.detail.get("disposition") == "delivered"]
    assert delivered == []


class Counter(Host):
    def __init__(self, host_id, mac):
        super().__init__(host_id, mac)
        self.n = 0

    def receive(self, pkt, port_name):
        self.n += 1


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12).flatmap(lambda n: st.tuples(
    st.just(n), st.integers(1, n), st.sets(st.integers(1, n)), st.integers(0, 1000))))
def test_flood_reaches_every_enabled_port_once(case):
    n, ingress, disabled, seed = case
    sim = Simulator(seed)
    fab = Fabric(sim)
    fab.add_switch("S", range(1, n + 1))
    hosts = {}
    for i in range(1, n + 1):
        hosts[i] = Counter(f"H{i}", bytes((2, 0, 0, 0, 0, i)))
        fab.attach(hosts[i], "p", PortId("S", i))
    for i in disabled - {ingress}:
        fab.set_port_state(("S", i), False)
    frame = bytes.fromhex("010ccd010001") + bytes(hosts[ingress].mac) + b"\x88\xb8" + bytes(8)
    hosts[ingress].send("p", frame)
    sim.run(1000 * US)
    for i, h in hosts.items():
        assert h.n == (0 if i == ingress or i in disabled else 1)
