import collections

import pytest

from scsim import codec, presets
from scsim.attacks import JUMP_SIZE, AttackRun, Attacker, AttackSpec, run_attack
from scsim.errors import DecodeError
from scsim.simulation import Simulation

ATTACKER = presets.ATTACKER_MAC


class TestSpec:
    @pytest.mark.parametrize("kw,needle", [
        (dict(kind="nuke"), "unknown attack kind"),
        (dict(strategy="sideways"), "strategy"),
        (dict(start=-1), "start"),
        (dict(start=3, end=2), "end"),
        (dict(rate=0), "rate"),
        (dict(magnitude=-1), "magnitude"),
        (dict(target=None), "needs a target"),
        (dict(kind="malformed", protocol="MMS"), "protocol"),
    ])
    def test_problems(self, kw, needle):
        args = dict(kind="goose_spoof", attacker="ATTACKER", target="PIED_DIFF")
        args.update(kw)
        problems = AttackSpec(**args).problems()
        assert any(needle in p for p in problems)

    def test_valid_spec(self):
        assert AttackSpec("malformed", "ATTACKER").problems() == []

    @pytest.mark.parametrize("kind,proto", [("sv_inject", "SV"), ("goose_spoof", "GOOSE"), ("replay", "GOOSE")])
    def test_protocol(self, kind, proto):
        assert AttackSpec(kind, "ATTACKER", target="x").protocol_of == proto


class TestStNumStrategies:
    def run_for(self, strategy, seen=7):
        host = Attacker("ATTACKER", ATTACKER)
        host.goose_seen["PIED_DIFF"] = (seen, 3, 1)
        spec = AttackSpec("goose_spoof", "ATTACKER", target="PIED_DIFF", strategy=strategy, port="SB")
        return host, AttackRun(spec, host, None)

    def test_increment_stays_ahead(self):
        host, run = self.run_for("increment")
        assert [run.next_st_num() for _ in range(3)] == [8, 9, 10]
        host.goose_seen["PIED_DIFF"] = (20, 0, 1)
        assert run.next_st_num() == 21

    def test_jump(self):
        _, run = self.run_for("jump")
        assert run.next_st_num() == 7 + JUMP_SIZE

    def test_rollback(self):
        _, run = self.run_for("rollback")
        assert run.next_st_num() == 6


def short(name, duration=3.0, **kw):
    return presets.bundled_scenario(name, duration=duration).replace(**kw)


@pytest.fixture(scope="module")
def undefended():
    """Every bundled attack with inspection turned off."""
    out = {}
    for name in ("sv_attack", "goose_attack", "replay_attack", "malformed_attack"):
        out[name] = Simulation(short(name), ids_enabled=False).run()
    return out


class TestUndefended:
    def test_sv_injection_causes_false_trip(self, undefended):
        sim = undefended["sv_attack"]
        assert [fn for _, fn, op in sim.pieds["PIED_OC"].decisions if op] == ["oc"]
        assert sim.breakers["CB_FDR"].state.position == "open"
        assert sim.ids.alerts == [] and sim.apc.objective == 0

    def test_goose_spoof_opens_breaker(self, undefended):
        sim = undefended["goose_attack"]
        cb = sim.breakers["CB_XF"]
        assert cb.state.position == "open" and cb.opened_by_src == ATTACKER.lower()
        assert sim.pieds["PIED_DIFF"].decisions == []

    def test_replay_reuses_captured_bytes(self, undefended):
        sim = undefended["replay_attack"]
        host = sim.attackers["ATTACKER"]
        assert host.sent and not host.capturing
        # legitimate retransmissions always differ (sqNum, timestamp); replays are byte-identical
        counts = collections.Counter(d for _, d in sim.fabric.switches["SB"].capture)
        victim = bytes(sim.pieds["PIED_OC"].mac)
        dupes = [d for d, n in counts.items() if n > 1]
        assert dupes and all(d[6:12] == victim for d in dupes)

    def test_malformed_frames_never_decode(self, undefended):
        sim = undefended["malformed_attack"]
        mac = bytes(sim.attackers["ATTACKER"].mac)
        bad = [d for _, d in sim.merged_capture() if d[6:12] == mac]
        assert bad
        for d in bad:
            with pytest.raises(DecodeError):
                codec.decode(d)

    def test_attack_frames_are_well_formed(self, undefended):
        for name in ("sv_attack", "goose_attack"):
            sim = undefended[name]
            mac = bytes(sim.attackers["ATTACKER"].mac)
            forged = [d for _, d in sim.merged_capture() if d[6:12] == mac]
            assert forged
            for d in forged[:50]:
                codec.decode(d)


def test_run_attack_rejects_unknown_target():
    sim = Simulation(short("no_attack", 0.1))
    with pytest.raises(ValueError, match="unknown svID"):
        run_attack(AttackSpec("sv_inject", "ATTACKER", target="NOPE"), sim.attackers["ATTACKER"], sim.victims)


def test_attack_window_end():
    spec = AttackSpec("goose_spoof", "ATTACKER", start=0.5, end=1.0, target="PIED_DIFF", rate=10)
    sim = Simulation(short("no_attack", 2.0, attacks=(spec,)), ids_enabled=False).run()
    times = [t for t, _, _ in sim.attackers["ATTACKER"].sent]
    assert len(times) == 5
    assert min(times) == 500_000_000 and max(times) < 1_000_000_000


def test_replay_with_nothing_captured_logs_diagnostic():
    spec = AttackSpec("replay", "ATTACKER", start=0.0, target="PIED_DIFF")
    sim = Simulation(short("no_attack", 0.1, attacks=(spec,)), ids_enabled=False).run()
    diags = sim.sim.records_of("device_action", action="diagnostic", device="ATTACKER")
    assert diags and diags[0].detail["detail"] == "replay_nothing_captured"
