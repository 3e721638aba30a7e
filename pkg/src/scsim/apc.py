"""Adaptive port controller: turns IDS alerts into mitigation and failover.

Every alert (or self-reported PIED failure) is converted into a PSSA
instance, solved, and expanded into an ordered plan that is applied to the
switches as one control-plane event ``control_latency`` after the trigger.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

from scsim import pssa
from scsim.devices import COMPROMISED, ISOLATED
from scsim.fabric import ALERT, DEVICE_ACTION, US, Action, FlowRule, Match, PortId

log = logging.getLogger(__name__)

BANNERS = {
    "SV": "****** HIGH ALERT: SV Cyber-Attack Detected! Switching to CIED *****",
    "GOOSE": "****** HIGH ALERT: GOOSE Cyber-Attack Detected! Switching to CIED ******",
}

DROP_PRIORITY = 1000
REDIRECT_PRIORITY = 200
FIRST_COOKIE = 0x1000

ACTIVE, PENDING, FAILED_OVER = "active", "pending", "failed_over"


def emit_banner(protocol):
    """The console line for a detected attack, or None for other protocols."""
    return BANNERS.get(protocol)


@dataclass(frozen=True)
class PiedEntry:
    id: str
    weight: float
    function: str
    ports: tuple
    go_id: str
    disableable: bool = True


@dataclass(frozen=True)
class CiedEntry:
    id: str
    ports: dict              # function -> PortId
    redirect_ports: dict = field(default_factory=dict)  # function -> egress indices on that switch


@dataclass(frozen=True)
class PlanAction:
    op: str
    port: PortId | None = None
    switch: str | None = None
    rule: FlowRule | None = None
    cookie: int | None = None
    text: str | None = None

    def to_dict(self):
        out = {"op": self.op}
        if self.port is not None:
            out["port"] = str(self.port)
        if self.switch is not None:
            out["switch"] = self.switch
        if self.rule is not None:
            out["rule"] = self.rule.to_dict()
        if self.cookie is not None:
            out["cookie"] = self.cookie
        if self.text is not None:
            out["text"] = self.text
        return out


@dataclass
class MitigationPlan:
    trigger: str
    actions: list = field(default_factory=list)
    attacks: tuple = ()
    solution: pssa.PssaSolution | None = None
    failover: tuple = ()
    reason: str = ""

    def __bool__(self):
        return bool(self.actions)

    def to_dict(self):
        return {"trigger": self.trigger, "reason": self.reason, "attacks": list(self.attacks),
                "solution": self.solution.as_dict() if self.solution else None,
                "failover": list(self.failover),
                "actions": [a.to_dict() for a in self.actions]}


class AdaptivePortController:
    def __init__(self, fabric, registry, cied, gamma, monitor_ports=None, devices=None,
                 control_latency_us=200, console=None):
        self.fabric = fabric
        self.registry = list(registry)
        self.cied = cied
        self.gamma = gamma
        self.monitor_ports = dict(monitor_ports or {})
        self.devices = devices or {}
        self.control_latency_ns = int(control_latency_us * US)
        self.console = console
        self.failover_state = {p.id: ACTIVE for p in self.registry}
        self.installed_cookies = set()
        self.plans = []
        self.solutions = []
        self.banners = []
        self.applied = []  # (time, plan)
        self._drop_rules = {}
        self._cookies = itertools.count(FIRST_COOKIE)
        self._index = {p.id: i for i, p in enumerate(self.registry)}

    @property
    def sim(self):
        return self.fabric.sim

    def instance(self, attacks):
        return pssa.PssaInstance(
            weights=tuple(p.weight for p in self.registry), gamma=self.gamma, attacks=tuple(attacks),
            disableable=tuple(int(p.disableable) for p in self.registry))

    def attack_vector(self, extra=None):
        return tuple(int(self.failover_state[p.id] != ACTIVE or p.id == extra) for p in self.registry)

    def start(self):
        """Solve the attack-free instance so the initial objective is on record."""
        attacks = self.attack_vector()
        sol = pssa.solve(self.instance(attacks))
        self.solutions.append((self.sim.now, attacks, sol))
        self.sim.record(DEVICE_ACTION, device="APC", action="pssa_solution", attacks=list(attacks),
                        **sol.as_dict())

    @property
    def objective(self):
        return self.solutions[-1][2].objective if self.solutions else None

    # -- plan construction -------------------------------------------------
    def _drop_action(self, src_mac, ingress):
        key = (ingress.switch, src_mac, ingress.index)
        if key in self._drop_rules:
            return None
        cookie = next(self._cookies)
        self._drop_rules[key] = cookie
        rule = FlowRule(cookie, DROP_PRIORITY, Match(ingress_port=ingress.index, src_mac=src_mac),
                        Action("drop", mirror=self.monitor_ports.get(ingress.switch)))
        return PlanAction("install_rule", switch=ingress.switch, rule=rule)

    def _failover_actions(self, attacks, sol):
        actions = []
        for entry, d in zip(self.registry, sol.disable):
            if d and self.failover_state[entry.id] == ACTIVE:
                actions.extend(PlanAction("disable_port", port=p) for p in entry.ports)
        fresh = [e for e, f in zip(self.registry, sol.redirect) if f and self.failover_state[e.id] == ACTIVE]
        if sol.cied:
            for entry in fresh:
                port = self.cied.ports[entry.function]
                actions.append(PlanAction("enable_port", port=port))
        for entry in fresh:
            port = self.cied.ports[entry.function]
            egress = self.cied.redirect_ports.get(entry.function, ())
            rule = FlowRule(next(self._cookies), REDIRECT_PRIORITY, Match(ingress_port=port.index),
                            Action("forward", egress, mirror=self.monitor_ports.get(port.switch)))
            actions.append(PlanAction("install_rule", switch=port.switch, rule=rule))
        return actions, tuple(e.id for e in fresh)

    def on_alert(self, alert):
        """Build (and schedule) the plan answering one IDS alert."""
        src = alert.key[1]
        drop = self._drop_action(src, alert.suspected_ingress)
        target = alert.target_pied
        if target is None or target not in self._index:
            plan = MitigationPlan("alert", [drop] if drop else [], reason="no protection device affected")
            return self._schedule(plan)
        if self.failover_state[target] != ACTIVE:
            plan = MitigationPlan("alert", [drop] if drop else [], reason=f"{target} already failed over")
            return self._schedule(plan)
        dev = self.devices.get(target)
        if dev is not None and dev.health != ISOLATED:
            dev.set_health(COMPROMISED, reason=f"IDS rule {alert.rule}")
        plan = self._failover_plan("alert", target, alert.protocol)
        if drop:
            plan.actions.insert(0, drop)
        return self._schedule(plan)

    def on_device_fault(self, pied_id, diagnostic=""):
        """Fail over a PIED that reported its own failure (non-cyber path)."""
        if pied_id not in self._index:
            raise KeyError(f"unknown PIED {pied_id}")
        if self.failover_state[pied_id] != ACTIVE:
            return self._schedule(MitigationPlan("device_fault", reason=f"{pied_id} already failed over"))
        plan = self._failover_plan("device_fault", pied_id, None)
        plan.reason = diagnostic
        return self._schedule(plan)

    def _failover_plan(self, trigger, target, protocol):
        attacks = self.attack_vector(extra=target)
        sol = pssa.solve(self.instance(attacks))
        actions, fresh = self._failover_actions(attacks, sol)
        for pid in fresh:
            self.failover_state[pid] = PENDING
        self.solutions.append((self.sim.now, attacks, sol))
        self.sim.record(DEVICE_ACTION, device="APC", action="pssa_solution", attacks=list(attacks),
                        **sol.as_dict())
        banner = emit_banner(protocol) if protocol else None
        if banner is not None:
            actions.append(PlanAction("banner", text=banner))
        return MitigationPlan(trigger, actions, attacks, sol, fresh, reason=f"target {target}")

    def _schedule(self, plan):
        self.plans.append(plan)
        self.sim.record(DEVICE_ACTION, device="APC", action="mitigation_plan", **plan.to_dict())
        if plan:
            self.sim.schedule(self.sim.now + self.control_latency_ns, self.apply, plan)
        return plan

    # -- plan execution ------------------------------------------------------
    def apply(self, plan):
        """Execute every action of ``plan`` within the current event."""
        fabric = self.fabric
        self.applied.append((self.sim.now, plan))
        for act in plan.actions:
            if act.op == "install_rule":
                if fabric.install_rule(act.switch, act.rule) is not None:
                    self.installed_cookies.add(act.rule.cookie)
            elif act.op == "remove_rule":
                fabric.remove_rule(act.switch, act.cookie)
                self.installed_cookies.discard(act.cookie)
            elif act.op == "disable_port":
                fabric.set_port_state(act.port, False)
            elif act.op == "enable_port":
                fabric.set_port_state(act.port, True)
            elif act.op == "banner":
                self.banners.append(act.text)
                self.sim.record(ALERT, source="apc", banner=act.text)
                if self.console is not None:
                    self.console(act.text)
                log.info("%s", act.text)
        if plan.solution is not None:
            for entry, d in zip(self.registry, plan.solution.disable):
                dev = self.devices.get(entry.id)
                if d and dev is not None:
                    dev.set_health(ISOLATED, reason="ports disabled by APC")
        for pid in plan.failover:
            self.failover_state[pid] = FAILED_OVER
            self.sim.record(DEVICE_ACTION, device="APC", action="failover", pied=pid, cied=self.cied.id)

    def fail_back(self, pied_id):
        """Manual restoration of a cleaned PIED: re-enable it and park the CIED function."""
        entry = self.registry[self._index[pied_id]]
        for p in entry.ports:
            self.fabric.set_port_state(p, True)
        self.fabric.set_port_state(self.cied.ports[entry.function], False)
        dev = self.devices.get(pied_id)
        if dev is not None:
            dev.set_health("normal", reason="manual fail-back")
        self.failover_state[pied_id] = ACTIVE
        self.sim.record(DEVICE_ACTION, device="APC", action="fail_back", pied=pied_id)
        self.start()
