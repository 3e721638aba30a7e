"""The reference two-bus substation and its bundled scenarios.

Process bus PB carries SV from the merging unit to the protection IEDs;
station bus SB carries GOOSE trips to the breakers.  The concurrent IED's
GOOSE ports start administratively down and are only enabled on failover.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from scsim import scenario as sc
from scsim.attacks import AttackSpec
from scsim.codec import ETHERTYPE_SV
from scsim.scenario import (
    Assertions, AttackerSpec, BreakerSpec, CiedFunctionSpec, CiedSpec, GooseSpec, IdsSpec,
    MergingUnitSpec, PiedSpec, Scenario, StreamSpec, SwitchSpec, Topology,
)

BUNDLED = ("no_attack", "sv_attack", "goose_attack", "replay_attack", "malformed_attack")
DEFAULT_SEED = 61850
DEFAULT_DURATION = 10.0
ATTACK_START = 2.0

ATTACKER_MAC = "02:00:00:00:00:66"
SV_DST = {"MU1/FDR": "01:0c:cd:04:00:01", "MU1/XF_HV": "01:0c:cd:04:00:02",
          "MU1/XF_LV": "01:0c:cd:04:00:03"}


def _goose(ied, ld, go_id, n):
    return GooseSpec(gocb_ref=f"{ied}{ld}/LLN0$GO$gcbTrip", go_id=go_id, dat_set=f"{ied}{ld}/LLN0$Trip",
                     appid=0x3000 + n, dst=f"01:0c:cd:01:00:{n:02x}")


def default_scenario(name="no_attack", duration=DEFAULT_DURATION, seed=DEFAULT_SEED, attacks=(),
                     assertions=Assertions(), description=""):
    oc_goose = _goose("PIED_OC", "PROT", "PIED_OC", 1)
    diff_goose = _goose("PIED_DIFF", "PROT", "PIED_DIFF", 2)
    cied_oc = _goose("CIED", "OC", "CIED/OC", 3)
    cied_diff = _goose("CIED", "DIFF", "CIED/DIFF", 4)
    return Scenario(
        name=name,
        description=description,
        duration=duration,
        seed=seed,
        topology=Topology(
            switches=(SwitchSpec("PB", tuple(range(1, 9))),
                      SwitchSpec("SB", tuple(range(1, 11)), disabled=(3, 4))),
            links=(("PB:8", "SB:10"),),
        ),
        merging_units=(MergingUnitSpec("MU1", "00:30:a7:00:00:01", "PB:1", (
            StreamSpec("MU1/FDR", 0x4001, SV_DST["MU1/FDR"]),
            StreamSpec("MU1/XF_HV", 0x4002, SV_DST["MU1/XF_HV"]),
            StreamSpec("MU1/XF_LV", 0x4003, SV_DST["MU1/XF_LV"], sign=-1),
        )),),
        pieds=(
            PiedSpec("PIED_OC", "00:30:a7:00:00:11", "oc", "PB:2", "SB:1", oc_goose,
                     ("MU1/FDR",), weight=10.0),
            PiedSpec("PIED_DIFF", "00:30:a7:00:00:12", "diff", "PB:3", "SB:2", diff_goose,
                     ("MU1/XF_HV", "MU1/XF_LV"), weight=15.0),
        ),
        cied=CiedSpec("CIED", "00:30:a7:00:00:20", "PB:4", {
            "oc": CiedFunctionSpec("SB:3", cied_oc, ("MU1/FDR",)),
            "diff": CiedFunctionSpec("SB:4", cied_diff, ("MU1/XF_HV", "MU1/XF_LV")),
        }),
        breakers=(
            BreakerSpec("CB_FDR", "00:30:a7:00:00:31", "SB:5", ("PIED_OC", "CIED/OC")),
            BreakerSpec("CB_XF", "00:30:a7:00:00:32", "SB:6", ("PIED_DIFF", "CIED/DIFF")),
        ),
        ids=IdsSpec("IDS", "02:00:00:00:00:fe", ("PB:6", "SB:8")),
        attackers=(AttackerSpec("ATTACKER", ATTACKER_MAC, ("PB:5", "SB:7")),),
        flows={
            "PB": (
                {"cookie": 1, "priority": 10, "match": {"ethertype": ETHERTYPE_SV, "dst_mac": SV_DST["MU1/FDR"]},
                 "action": {"type": "forward", "ports": [2, 4], "mirror": 6}},
                {"cookie": 2, "priority": 10, "match": {"ethertype": ETHERTYPE_SV, "dst_mac": SV_DST["MU1/XF_HV"]},
                 "action": {"type": "forward", "ports": [3, 4], "mirror": 6}},
                {"cookie": 3, "priority": 10, "match": {"ethertype": ETHERTYPE_SV, "dst_mac": SV_DST["MU1/XF_LV"]},
                 "action": {"type": "forward", "ports": [3, 4], "mirror": 6}},
                {"cookie": 4, "priority": 5, "match": {"ingress_port": 8}, "action": {"type": "flood"}},
                {"cookie": 5, "priority": 1, "match": {}, "action": {"type": "flood", "mirror": 6}},
            ),
            "SB": (
                {"cookie": 1, "priority": 5, "match": {"ingress_port": 10}, "action": {"type": "flood"}},
                {"cookie": 2, "priority": 1, "match": {}, "action": {"type": "flood", "mirror": 8}},
            ),
        },
        attacks=tuple(attacks),
        assertions=assertions,
    )


def bundled_scenario(name, duration=DEFAULT_DURATION, seed=DEFAULT_SEED):
    """Build one of :data:`BUNDLED` from code (the JSON files are generated from this)."""
    attacker = "ATTACKER"
    if name == "no_attack":
        return default_scenario(
            name, duration, seed,
            description="Normal load, no attacker traffic. The CIED stays dormant.",
            assertions=Assertions(objective=0.0, max_alerts=0, banners=(), failed_over=(),
                                  breakers={"CB_FDR": "closed", "CB_XF": "closed"},
                                  ports_enabled=("PB:2", "SB:1", "PB:3", "SB:2"),
                                  ports_disabled=("SB:3", "SB:4"), cied_goose_in_pcap=False))
    if name == "sv_attack":
        return default_scenario(
            name, duration, seed,
            attacks=(AttackSpec("sv_inject", attacker, ATTACK_START, "MU1/FDR"),),
            description="Forged feeder SV at 10x nominal current against the overcurrent PIED.",
            assertions=Assertions(objective=16.0, min_alerts=1, banners=("SV",), failed_over=("PIED_OC",),
                                  breakers={"CB_FDR": "closed", "CB_XF": "closed"},
                                  ports_disabled=("PB:2", "SB:1"), ports_enabled=("SB:3", "PB:3", "SB:2"),
                                  attacker_drop_rule=True, attacker_isolated=True,
                                  cied_goose_in_pcap=True))
    if name == "goose_attack":
        return default_scenario(
            name, duration, seed,
            attacks=(AttackSpec("goose_spoof", attacker, ATTACK_START, "PIED_DIFF"),),
            description="Spoofed differential trip GOOSE with incrementing stNum.",
            assertions=Assertions(objective=21.0, min_alerts=1, banners=("GOOSE",), failed_over=("PIED_DIFF",),
                                  breakers={"CB_FDR": "closed"},
                                  ports_disabled=("PB:3", "SB:2"), ports_enabled=("SB:4", "PB:2", "SB:1"),
                                  attacker_drop_rule=True, attacker_isolated=True,
                                  cied_goose_in_pcap=True))
    if name == "replay_attack":
        return default_scenario(
            name, duration, seed,
            attacks=(AttackSpec("replay", attacker, ATTACK_START, "PIED_OC", rate=20.0),),
            description="Replay of captured overcurrent PIED GOOSE frames.",
            assertions=Assertions(objective=16.0, min_alerts=1, banners=("GOOSE",), failed_over=("PIED_OC",),
                                  breakers={"CB_FDR": "closed", "CB_XF": "closed"},
                                  attacker_drop_rule=True, attacker_isolated=True))
    if name == "malformed_attack":
        return default_scenario(
            name, duration, seed,
            attacks=(AttackSpec("malformed", attacker, ATTACK_START, None, rate=20.0),),
            description="Truncated GOOSE frames; detected but no protection IED is affected.",
            assertions=Assertions(objective=0.0, min_alerts=1, banners=(), failed_over=(),
                                  breakers={"CB_FDR": "closed", "CB_XF": "closed"},
                                  attacker_drop_rule=True, cied_goose_in_pcap=False))
    raise KeyError(f"unknown bundled scenario {name!r}; choose from {', '.join(BUNDLED)}")


def bundled_path(name):
    return resources.files("scsim") / "data" / "scenarios" / f"{name}.json"


def load_bundled(name):
    return sc.loads(bundled_path(name).read_text(encoding="utf-8"))


def write_bundled(directory):
    """Regenerate the packaged JSON files into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in BUNDLED:
        sc.dump(bundled_scenario(name), directory / f"{name}.json")
