"""Scripted defenders: noop, semi-random, playbook, and DBN-expert policies."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import NetworkConfig
from .engine import StepResult
from .ids import SOURCE_INVESTIGATION
from .netmodel import COMPROMISE_STATES, DeviceKind, NodeKind, PlcStatus
from .orchestrator import DefenderAction

IC_STATE_INDICES = [
    i for i, f in enumerate(COMPROMISE_STATES) if f.initial_compromise
]


@dataclass(frozen=True)
class NodeView:
    id: int
    kind: NodeKind
    level: int
    vlan_id: int
    quarantined: bool
    online: bool
    ip: str


@dataclass(frozen=True)
class DeviceView:
    ip: str
    kind: DeviceKind
    level: int
    vlan_id: int | None


@dataclass
class PolicyView:
    """Defender-observable context: topology, PLC statuses, beliefs."""
    clock: int
    nodes: list[NodeView]
    devices: list[DeviceView]
    plc_status: dict[int, PlcStatus]
    beliefs: np.ndarray | None


Action = tuple[DefenderAction, int | None]


class Policy:
    requires_beliefs = False

    def reset(self) -> None:
        pass

    def act(self, obs: StepResult | None, view: PolicyView) -> list[Action]:
        raise NotImplementedError


class NoopPolicy(Policy):
    def act(self, obs, view):
        return []


class RandomPolicy(Policy):
    """Independent analysts/users: Poisson(k) actions per hour, action type
    from a static categorical, target uniform over valid nodes of the kind."""

    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        self.cfg = config.policies.random
        self.rng = rng
        dist = self.cfg.type_distribution
        self.types = sorted(dist)
        weights = np.array([dist[t] for t in self.types], dtype=float)
        self.weights = weights / weights.sum()

    def act(self, obs, view):
        actions: list[Action] = []
        online = [n for n in view.nodes if n.online]
        if online:
            n_draws = int(self.rng.poisson(self.cfg.rate))
            picks = self.rng.choice(len(self.types), size=n_draws, p=self.weights)
            for pick in picks:
                name = self.types[int(pick)]
                if name == "noop":
                    continue
                action = DefenderAction(name)
                if action == DefenderAction.QUARANTINE:
                    pool = [n for n in online if n.kind.is_workstation_kind]
                else:
                    pool = online
                if not pool:
                    continue
                target = pool[int(self.rng.integers(len(pool)))]
                actions.append((action, target.id))
        for plc_id in sorted(view.plc_status):
            status = view.plc_status[plc_id]
            if status == PlcStatus.NOMINAL:
                continue
            if self.rng.random() < self.cfg.plc_repair_rate:
                fix = (
                    DefenderAction.RESET_PLC
                    if status == PlcStatus.DISRUPTED
                    else DefenderAction.REPLACE_PLC
                )
                actions.append((fix, plc_id))
        return actions


@dataclass
class CoaState:
    """Per-node course-of-action ladder position."""
    phase: str = "idle"          # idle | scan_wait | mitigate_wait
    rung: int = 0                # next mitigation index in the ladder
    alerts_pending: int = 0      # alerts for this node since the COA step began
    pending: Action | None = None


class PlaybookPolicy(Policy):
    """Alert-triggered courses of action.

    A course of action alternates scans with ladder mitigations and ends when
    a scan comes back clean with no further alerts for the node. Severity-3
    alerts enter the ladder at the configured mitigation rung directly, and
    repeated alerts escalate the ladder without waiting for a detection. Any
    alert also sweeps the implicated VLAN(s) with scans so lateral movement
    is caught early; alerts attributed to a networking device implicate the
    device's VLAN (switch) or its level (router/firewall).
    """

    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        self.cfg = config.policies.playbook
        self.rng = rng
        self.coas: dict[int, CoaState] = {}

    def reset(self) -> None:
        self.coas = {}

    def _coa(self, node_id: int) -> CoaState:
        return self.coas.setdefault(node_id, CoaState())

    def _ladder(self, node: NodeView) -> list[DefenderAction]:
        names = self.cfg.server_ladder if node.kind.is_server else self.cfg.host_ladder
        return [DefenderAction(n) for n in names]

    def _entry_rung(self, node: NodeView, severity: int) -> int:
        if severity >= 3:
            return min(self.cfg.severity3_entry, len(self._ladder(node)) - 1)
        return 0

    def _issue_scan(self, coa: CoaState, node: NodeView, actions: list[Action]) -> None:
        coa.phase = "scan_wait"
        coa.alerts_pending = 0
        coa.pending = (DefenderAction(self.cfg.scan_action), node.id)
        actions.append(coa.pending)

    def _issue_mitigation(self, coa: CoaState, node: NodeView, actions: list[Action]) -> None:
        ladder = self._ladder(node)
        coa.rung = min(coa.rung, len(ladder) - 1)
        coa.phase = "mitigate_wait"
        coa.alerts_pending = 0
        coa.pending = (ladder[coa.rung], node.id)
        actions.append(coa.pending)

    def _on_alert(self, node: NodeView, severity: int, actions: list[Action]) -> None:
        coa = self._coa(node.id)
        if coa.phase == "idle":
            if not node.online:
                return
            coa.rung = self._entry_rung(node, severity)
            if severity >= 3:
                # high severity: mitigate first, verify after
                self._issue_mitigation(coa, node, actions)
            else:
                self._issue_scan(coa, node, actions)
        else:
            coa.alerts_pending += 1
            coa.rung = max(coa.rung, self._entry_rung(node, severity))

    def _sweep(self, node: NodeView, actions: list[Action]) -> None:
        coa = self._coa(node.id)
        if coa.phase == "idle" and node.online:
            coa.rung = 0
            coa.phase = "scan_wait"
            coa.alerts_pending = 0
            coa.pending = (DefenderAction(self.cfg.sweep_action), node.id)
            actions.append(coa.pending)

    def _vlans_for_alert(self, ip: str, view: PolicyView) -> list[int]:
        for n in view.nodes:
            if n.ip == ip:
                return [n.vlan_id]
        for d in view.devices:
            if d.ip == ip:
                if d.kind == DeviceKind.SWITCH and d.vlan_id is not None:
                    return [d.vlan_id]
                return sorted({
                    n.vlan_id for n in view.nodes if n.level == d.level and not n.quarantined
                })
        return []

    def act(self, obs, view):
        actions: list[Action] = []
        nodes_by_ip = {n.ip: n for n in view.nodes}
        nodes_by_id = {n.id: n for n in view.nodes}

        if obs is None:
            return actions

        # completions advance ladders
        for inst in obs.completed:
            if inst.target not in nodes_by_id:
                continue
            node = nodes_by_id[inst.target]
            coa = self._coa(node.id)
            if inst.is_investigation and coa.phase == "scan_wait":
                if inst.detected:
                    self._issue_mitigation(coa, node, actions)
                elif coa.alerts_pending > 0:
                    self._issue_scan(coa, node, actions)
                else:
                    coa.phase = "idle"
                    coa.pending = None
            elif not inst.is_investigation and coa.phase == "mitigate_wait":
                if inst.action == DefenderAction.REIMAGE:
                    # re-image guarantees a clean node
                    self.coas[node.id] = CoaState()
                elif coa.alerts_pending > 0:
                    # the node kept alerting through the mitigation: escalate
                    coa.rung += 1
                    self._issue_mitigation(coa, node, actions)
                else:
                    coa.rung += 1
                    self._issue_scan(coa, node, actions)

        # rejected submissions are retried
        for action, target, _reason in obs.rejected:
            if target in nodes_by_id:
                coa = self._coa(target)
                if coa.pending == (action, target):
                    actions.append(coa.pending)

        for alert in obs.alerts:
            if alert.source_kind == SOURCE_INVESTIGATION:
                continue
            node = nodes_by_ip.get(alert.ip)
            if node is not None:
                self._on_alert(node, alert.severity, actions)
            if self.cfg.sweep_vlan:
                for vlan in self._vlans_for_alert(alert.ip, view):
                    for peer in view.nodes:
                        if peer.vlan_id == vlan and (node is None or peer.id != node.id):
                            if node is None and alert.severity >= 3:
                                # device-attributed high-severity traffic:
                                # treat every segment node as implicated
                                self._on_alert(peer, alert.severity, actions)
                            else:
                                self._sweep(peer, actions)
        return actions


class DbnExpertPolicy(Policy):
    """Mitigations stochastically conditioned on the belief state: the MAP
    compromised state picks the countermeasure the node cannot block."""

    requires_beliefs = True

    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        self.cfg = config.policies.expert
        self.rng = rng

    def act(self, obs, view):
        actions: list[Action] = []
        beliefs = view.beliefs
        if beliefs is None:
            raise ValueError("expert policy needs beliefs")
        for node in view.nodes:
            if not node.online:
                continue
            b = beliefs[node.id]
            p_comp = float(b[IC_STATE_INDICES].sum())
            if p_comp > self.cfg.theta:
                if self.rng.random() < p_comp:
                    map_idx = IC_STATE_INDICES[int(np.argmax(b[IC_STATE_INDICES]))]
                    flags = COMPROMISE_STATES[map_idx]
                    if not flags.reboot_persistence:
                        action = DefenderAction.REBOOT
                    elif not flags.credential_persistence:
                        action = DefenderAction.RESET_PASSWORD
                    else:
                        action = DefenderAction.REIMAGE
                    actions.append((action, node.id))
            elif p_comp > self.cfg.theta_investigate:
                if self.rng.random() < p_comp:
                    actions.append((DefenderAction(self.cfg.investigate_action), node.id))
        for plc_id in sorted(view.plc_status):
            status = view.plc_status[plc_id]
            if status == PlcStatus.DISRUPTED:
                actions.append((DefenderAction.RESET_PLC, plc_id))
            elif status == PlcStatus.DESTROYED:
                actions.append((DefenderAction.REPLACE_PLC, plc_id))
        return actions


POLICY_NAMES = ("noop", "random", "playbook", "expert")


def make_policy(name: str, config: NetworkConfig, rng: np.random.Generator) -> Policy:
    if name == "noop":
        return NoopPolicy()
    if name == "random":
        return RandomPolicy(config, rng)
    if name == "playbook":
        return PlaybookPolicy(config, rng)
    if name == "expert":
        return DbnExpertPolicy(config, rng)
    raise ValueError(f"unknown policy {name!r}")
