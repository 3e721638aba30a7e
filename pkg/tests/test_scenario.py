import dataclasses
import json

import pytest

from scsim import pcap, presets
from scsim import scenario as sc
from scsim.errors import ScenarioError


def as_dict(name="no_attack"):
    return json.loads(sc.dumps(presets.bundled_scenario(name)))


def problems_of(data):
    with pytest.raises(ScenarioError) as exc:
        sc.from_dict(data)
    return exc.value.problems


class TestRoundTrip:
    @pytest.mark.parametrize("name", presets.BUNDLED)
    def test_dump_load_identity(self, name):
        s = presets.bundled_scenario(name)
        assert sc.loads(sc.dumps(s)) == s

    @pytest.mark.parametrize("name", presets.BUNDLED)
    def test_shipped_files_match_builder(self, name):
        assert presets.load_bundled(name) == presets.bundled_scenario(name)

    def test_file_round_trip(self, tmp_path):
        s = presets.bundled_scenario("sv_attack")
        sc.dump(s, tmp_path / "s.json")
        assert sc.load(tmp_path / "s.json") == s

    def test_replace_keeps_other_fields(self):
        s = presets.bundled_scenario("no_attack")
        t = s.replace(seed=7)
        assert t.seed == 7 and dataclasses.replace(t, seed=s.seed) == s


class TestSchemaErrors:
    def test_bad_json(self):
        with pytest.raises(ScenarioError, match="invalid JSON"):
            sc.loads("{")

    def test_unknown_field(self):
        d = as_dict()
        d["colour"] = "blue"
        assert any("colour" in p for p in problems_of(d))

    def test_missing_field(self):
        d = as_dict()
        del d["topology"]
        assert any("topology" in p for p in problems_of(d))

    def test_nested_wrong_type(self):
        d = as_dict()
        d["pieds"][0]["weight"] = "heavy"
        assert any("weight" in p for p in problems_of(d))

    def test_all_problems_reported_together(self):
        d = as_dict()
        d["colour"] = 1
        d["seed"] = "x"
        assert len(problems_of(d)) >= 2


class TestReferenceChecks:
    @pytest.mark.parametrize("edit,needle", [
        (lambda d: d["pieds"][0].update(sv_port="PB:99"), "does not exist"),
        (lambda d: d["pieds"][0].update(sv_port="PB:1"), "already used"),
        (lambda d: d["pieds"][1].update(mac=d["pieds"][0]["mac"]), "already used"),
        (lambda d: d["pieds"][0].update(mac="01:00:00:00:00:01"), "unicast"),
        (lambda d: d["pieds"][0]["goose"].update(dst="01:0c:cd:04:00:01"), "GOOSE multicast"),
        (lambda d: d["merging_units"][0]["streams"][0].update(dst="01:0c:cd:01:00:09"), "SV multicast"),
        (lambda d: d["pieds"][0].update(sv_subscriptions=["NOPE"]), "undeclared svID"),
        (lambda d: d["breakers"][0].update(subscriptions=["NOPE"]), "undeclared goID"),
        (lambda d: d["cied"]["functions"].pop("diff"), "no diff function"),
        (lambda d: d.update(duration=0), "duration"),
        (lambda d: d.update(trace="verbose"), "trace"),
        (lambda d: d["flows"].update(XX=[]), "unknown switch"),
        (lambda d: d["ids"]["rules"].update(Z9=True), "unknown rule"),
    ])
    def test_diagnostics(self, edit, needle):
        d = as_dict()
        edit(d)
        assert any(needle in p for p in problems_of(d)), problems_of(d)

    def test_bundled_are_valid(self):
        for name in presets.BUNDLED:
            assert sc.validate(presets.bundled_scenario(name)) == []

    def test_attack_problems_surface(self):
        d = as_dict("sv_attack")
        d["attacks"][0]["kind"] = "nuke"
        assert any("nuke" in p for p in problems_of(d))


class TestPresets:
    def test_default_topology(self):
        s = presets.default_scenario()
        names = {sw.name: sw for sw in s.topology.switches}
        assert set(names) == {"PB", "SB"}
        assert names["SB"].disabled == (3, 4)
        assert s.gamma == 5 and [p.weight for p in s.pieds] == [10, 15]

    @pytest.mark.parametrize("name,objective", [("no_attack", 0), ("sv_attack", 16), ("goose_attack", 21)])
    def test_expected_objectives(self, name, objective):
        assert presets.bundled_scenario(name).assertions.objective == objective

    def test_unknown_bundled(self):
        with pytest.raises(KeyError):
            presets.bundled_scenario("nope")


class TestPcap:
    def test_empty_capture_is_header_only(self, tmp_path):
        path = tmp_path / "e.pcap"
        pcap.write_pcap(path, [])
        raw = path.read_bytes()
        assert len(raw) == 24
        assert raw[:4] == bytes.fromhex("d4c3b2a1")
        assert pcap.read_pcap(path) == ((0xA1B2C3D4, 2, 4, 0, 0, 65535, 1), [])

    def test_records(self, tmp_path):
        path = tmp_path / "r.pcap"
        pcap.write_pcap(path, [(1_500, b"ab"), (2_000_000_999, b"cde")], epoch_ns=10**9)
        _, pkts = pcap.read_pcap(path)
        assert pkts == [(1_000_001, b"ab"), (3_000_000, b"cde")]
        assert len(path.read_bytes()) == 24 + 16 + 2 + 16 + 3

    def test_rejects_other_formats(self, tmp_path):
        path = tmp_path / "x.pcap"
        path.write_bytes(b"\x00" * 24)
        with pytest.raises(ValueError):
            pcap.read_pcap(path)
