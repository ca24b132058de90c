"""APT action catalog with stochastic outcomes and the FSM attack policy."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .config import AptConfig
from .netmodel import CompromiseFlags, NodeKind, PlcStatus


class AptAction(str, Enum):
    SCAN = "scan"
    COMPROMISE = "compromise"
    REBOOT_PERSIST = "reboot_persist"
    ESCALATE_PRIVILEGE = "escalate_privilege"
    CREDENTIAL_PERSIST = "credential_persist"
    CLEANUP = "cleanup"
    DISCOVER_VLAN = "discover_vlan"
    DISCOVER_SERVER = "discover_server"
    ANALYZE_HISTORIAN = "analyze_historian"
    DISCOVER_PLC = "discover_plc"
    FLASH_FIRMWARE = "flash_firmware"
    DISRUPT_PLC = "disrupt_plc"
    DESTROY_PLC = "destroy_plc"


@dataclass(frozen=True)
class AptActionSpec:
    action: AptAction
    success_prob: float
    duration: tuple[int, float]  # Binomial (n, p)
    alert_rate: float
    local: bool  # single-node action: one alert draw, no device path


# Values match the attacker action table exactly.
APT_ACTIONS: dict[AptAction, AptActionSpec] = {
    spec.action: spec
    for spec in [
        AptActionSpec(AptAction.SCAN, 1.0, (60, 0.9), 0.01, local=False),
        AptActionSpec(AptAction.COMPROMISE, 0.9, (60, 0.8), 0.05, local=False),
        AptActionSpec(AptAction.REBOOT_PERSIST, 1.0, (4, 0.9), 0.05, local=True),
        AptActionSpec(AptAction.ESCALATE_PRIVILEGE, 1.0, (22, 0.9), 0.05, local=True),
        AptActionSpec(AptAction.CREDENTIAL_PERSIST, 1.0, (4, 0.9), 0.05, local=True),
        AptActionSpec(AptAction.CLEANUP, 1.0, (4, 0.9), 0.05, local=True),
        AptActionSpec(AptAction.DISCOVER_VLAN, 1.0, (60, 0.9), 0.05, local=False),
        AptActionSpec(AptAction.DISCOVER_SERVER, 1.0, (60, 0.9), 0.01, local=False),
        AptActionSpec(AptAction.ANALYZE_HISTORIAN, 1.0, (600, 0.9), 0.0, local=True),
        AptActionSpec(AptAction.DISCOVER_PLC, 1.0, (24, 0.875), 0.03, local=False),
        AptActionSpec(AptAction.FLASH_FIRMWARE, 1.0, (1, 1.0), 0.5, local=False),
        AptActionSpec(AptAction.DISRUPT_PLC, 1.0, (8, 0.9), 0.9, local=False),
        AptActionSpec(AptAction.DESTROY_PLC, 1.0, (1, 1.0), 1.0, local=False),
    ]
}

PERSISTENCE_CHAIN = (
    AptAction.REBOOT_PERSIST,
    AptAction.ESCALATE_PRIVILEGE,
    AptAction.CREDENTIAL_PERSIST,
    AptAction.CLEANUP,
)


@dataclass
class AptParams:
    objective: str  # disrupt | destroy
    vector: str     # opc_server | level1_hmi
    lateral_threshold: int
    plc_threshold: int
    labor_budget: float
    cleanup_effectiveness: float


_PRESETS = {
    "apt1": {"lateral": 3, "plc": {"destroy": 15, "disrupt": 25}, "budget": 2.0, "e": 0.5},
    "apt2": {"lateral": 1, "plc": {"destroy": 5, "disrupt": 10}, "budget": 2.0, "e": 0.5},
}


def preset_params(name: str, objective: str = "destroy", vector: str = "opc_server") -> AptParams:
    try:
        p = _PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown APT preset {name!r}") from None
    return AptParams(
        objective=objective,
        vector=vector,
        lateral_threshold=p["lateral"],
        plc_threshold=p["plc"][objective],
        labor_budget=p["budget"],
        cleanup_effectiveness=p["e"],
    )


def resolve_params(cfg: AptConfig, objective: str, vector: str) -> AptParams:
    params = preset_params(cfg.preset, objective=objective, vector=vector)
    if cfg.lateral_threshold is not None:
        params.lateral_threshold = cfg.lateral_threshold
    if objective == "destroy" and cfg.plc_threshold_destroy is not None:
        params.plc_threshold = cfg.plc_threshold_destroy
    if objective == "disrupt" and cfg.plc_threshold_disrupt is not None:
        params.plc_threshold = cfg.plc_threshold_disrupt
    if cfg.labor_budget is not None:
        params.labor_budget = cfg.labor_budget
    params.cleanup_effectiveness = cfg.cleanup_effectiveness
    return params


class MachineState(str, Enum):
    LATERAL_MOVEMENT = "lateral_movement"
    VERTICAL_MOVEMENT = "vertical_movement"
    PROCESS_DISCOVERY = "process_discovery"
    ATTACK_EXECUTION = "attack_execution"
    DONE = "done"


@dataclass(frozen=True)
class ControlledNode:
    id: int
    kind: NodeKind
    level: int
    vlan_id: int
    flags: CompromiseFlags


@dataclass
class AptView:
    """What the attacker can see: full state of usable controlled nodes, plus
    the statuses of PLCs it has discovered."""
    clock: int
    controlled: dict[int, ControlledNode]
    plc_status: dict[int, PlcStatus]


@dataclass(frozen=True)
class AptProposal:
    action: AptAction
    source: int | None  # controlled node id; None means external origin
    node: int | None = None
    vlan: int | None = None
    plc: int | None = None

    def key(self) -> tuple:
        return (self.action.value, self.node, self.vlan, self.plc)


@dataclass
class AptOutcome:
    """Completion feedback: what the attacker learns from a finished action."""
    action: AptAction
    source: int | None
    node: int | None = None
    vlan: int | None = None
    plc: int | None = None
    success: bool = False
    prereq_failed: bool = False
    unreachable: bool = False
    revealed_nodes: list[tuple[int, int]] = field(default_factory=list)  # (node, vlan)
    revealed_vlans: dict[int, int] = field(default_factory=dict)         # vlan -> level
    revealed_servers: dict[int, str] = field(default_factory=dict)       # node -> kind
    revealed_plcs: list[int] = field(default_factory=list)
    plc_vlan: int | None = None


class AptFsm:
    """Stochastic finite-state attack policy.

    The machine state is recomputed every hour as the earliest phase whose
    exit criteria are unmet, which implements reversion for free. Knowledge
    comes only from action outcomes; quarantine moves surface as failures.
    """

    def __init__(self, params: AptParams):
        self.params = params
        self.machine_state = MachineState.LATERAL_MOVEMENT
        self.known_node_vlan: dict[int, int] = {}
        self.believed_scanned: set[int] = set()
        self.known_vlans: dict[int, int] = {}      # vlan -> level
        self.server_roles: dict[int, str] = {}     # node -> kind value
        self.roles_scanned_vlans: set[int] = set()
        self.plc_vlan: int | None = None
        self.discovered_plcs: set[int] = set()
        self.destroyed_once: set[int] = set()
        self.flashed_plcs: set[int] = set()
        self.historian_analyzed = False
        # analysis progress accrues while the historian stays controlled;
        # exfiltrated data persists across evictions
        self.analyze_required: int | None = None
        self.analyze_progress: int = 0
        self.in_flight: set[tuple] = set()

    # -- engine feedback ---------------------------------------------------

    def bootstrap(self, beachhead: int, vlan: int, level: int) -> None:
        self.known_vlans[vlan] = level
        self.known_node_vlan[beachhead] = vlan
        self.believed_scanned.add(beachhead)

    def notify_admitted(self, proposals: list[AptProposal]) -> None:
        for p in proposals:
            self.in_flight.add(p.key())

    def observe_outcomes(self, outcomes: list[AptOutcome]) -> None:
        for o in outcomes:
            self.in_flight.discard(
                (o.action.value, o.node, o.vlan, o.plc)
            )
            if o.success:
                for node, vlan in o.revealed_nodes:
                    self.believed_scanned.add(node)
                    self.known_node_vlan[node] = vlan
                self.known_vlans.update(o.revealed_vlans)
                if o.revealed_servers:
                    self.server_roles.update(o.revealed_servers)
                if o.action == AptAction.DISCOVER_SERVER and o.vlan is not None:
                    self.roles_scanned_vlans.add(o.vlan)
                self.discovered_plcs.update(o.revealed_plcs)
                if o.plc_vlan is not None:
                    self.plc_vlan = o.plc_vlan
                if o.action == AptAction.ANALYZE_HISTORIAN:
                    self.historian_analyzed = True
                if o.action == AptAction.FLASH_FIRMWARE and o.plc is not None:
                    self.flashed_plcs.add(o.plc)
                if o.action == AptAction.DESTROY_PLC and o.plc is not None:
                    self.destroyed_once.add(o.plc)
            else:
                if o.action == AptAction.COMPROMISE and o.node is not None:
                    if o.prereq_failed or o.unreachable:
                        # stale knowledge: target moved or was cleaned
                        self.believed_scanned.discard(o.node)
                        if o.unreachable:
                            self.known_node_vlan.pop(o.node, None)
                if o.action == AptAction.DESTROY_PLC and o.prereq_failed and o.plc is not None:
                    # firmware was restored by the defender; flash again
                    self.flashed_plcs.discard(o.plc)

    # -- phase criteria ------------------------------------------------------

    def _usable_l2(self, view: AptView) -> list[ControlledNode]:
        return [c for c in view.controlled.values() if c.level == 2]

    def _controlled_of_kind(self, view: AptView, *kinds: NodeKind) -> list[ControlledNode]:
        return sorted(
            (c for c in view.controlled.values() if c.kind in kinds),
            key=lambda c: c.id,
        )

    def _lateral_met(self, view: AptView) -> bool:
        return len(self._usable_l2(view)) >= self.params.lateral_threshold

    def _vertical_met(self, view: AptView) -> bool:
        if self.params.vector == "opc_server":
            opc = self._controlled_of_kind(view, NodeKind.OPC_SERVER)
            hist = self._controlled_of_kind(view, NodeKind.HISTORIAN_SERVER)
            return bool(opc) and (bool(hist) or self.historian_analyzed)
        return bool(self._controlled_of_kind(view, NodeKind.HMI_WORKSTATION))

    def _discovery_met(self, view: AptView) -> bool:
        return (
            self.historian_analyzed
            and len(self.discovered_plcs) >= self.params.plc_threshold
        )

    def _attack_done(self, view: AptView) -> bool:
        if not self.discovered_plcs:
            return False
        if self.params.objective == "destroy":
            return self.discovered_plcs <= self.destroyed_once
        return all(
            view.plc_status.get(p, PlcStatus.NOMINAL) != PlcStatus.NOMINAL
            for p in self.discovered_plcs
        )

    def evaluate_state(self, view: AptView) -> MachineState:
        if not self._lateral_met(view):
            return MachineState.LATERAL_MOVEMENT
        if not self._vertical_met(view):
            return MachineState.VERTICAL_MOVEMENT
        if not self._discovery_met(view):
            return MachineState.PROCESS_DISCOVERY
        if not self._attack_done(view):
            return MachineState.ATTACK_EXECUTION
        return MachineState.DONE

    # -- proposal generation -------------------------------------------------

    def step(self, view: AptView) -> tuple[MachineState, list[AptProposal]]:
        self.machine_state = self.evaluate_state(view)
        proposals = self._persistence_proposals(view)
        if self.machine_state == MachineState.LATERAL_MOVEMENT:
            proposals += self._lateral_proposals(view)
        elif self.machine_state == MachineState.VERTICAL_MOVEMENT:
            proposals += self._vertical_proposals(view)
        elif self.machine_state == MachineState.PROCESS_DISCOVERY:
            proposals += self._discovery_proposals(view)
        elif self.machine_state == MachineState.ATTACK_EXECUTION:
            proposals += self._attack_proposals(view)
        return self.machine_state, [p for p in proposals if p.key() not in self.in_flight]

    def _persistence_proposals(self, view: AptView) -> list[AptProposal]:
        out = []
        for c in sorted(view.controlled.values(), key=lambda c: c.id):
            nxt = None
            if not c.flags.reboot_persistence:
                nxt = AptAction.REBOOT_PERSIST
            elif not c.flags.admin_access:
                nxt = AptAction.ESCALATE_PRIVILEGE
            elif not c.flags.credential_persistence:
                nxt = AptAction.CREDENTIAL_PERSIST
            elif not c.flags.malware_cleaned:
                nxt = AptAction.CLEANUP
            if nxt is not None:
                out.append(AptProposal(nxt, source=c.id, node=c.id))
        return out

    def _pick_source(self, view: AptView, target_vlan: int | None) -> int | None:
        candidates = sorted(view.controlled.values(), key=lambda c: c.id)
        if not candidates:
            return None
        if target_vlan is not None:
            same_vlan = [c for c in candidates if c.vlan_id == target_vlan]
            if same_vlan:
                return same_vlan[0].id
            level = self.known_vlans.get(target_vlan)
            same_level = [c for c in candidates if c.level == level]
            if same_level:
                return same_level[0].id
        return candidates[0].id

    def _scan_targets(self, view: AptView, level: int) -> list[int]:
        return sorted(
            v for v, lvl in self.known_vlans.items() if lvl == level
        )

    def _lateral_proposals(self, view: AptView) -> list[AptProposal]:
        out = []
        targets = sorted(
            n for n in self.believed_scanned
            if n not in view.controlled
            and self.known_vlans.get(self.known_node_vlan.get(n, -1)) == 2
        )
        for n in targets:
            src = self._pick_source(view, self.known_node_vlan[n])
            if src is not None:
                out.append(AptProposal(AptAction.COMPROMISE, source=src, node=n))
        if not targets:
            for vlan in self._scan_targets(view, level=2):
                src = self._pick_source(view, vlan)
                if src is not None:
                    out.append(AptProposal(AptAction.SCAN, source=src, vlan=vlan))
        return out

    def _server_proposals(self, view: AptView, roles: tuple[str, ...]) -> list[AptProposal]:
        out = []
        l2_vlans = self._scan_targets(view, level=2)
        unscanned = [v for v in l2_vlans if v not in self.roles_scanned_vlans]
        for vlan in unscanned:
            src = self._pick_source(view, vlan)
            if src is not None:
                out.append(AptProposal(AptAction.DISCOVER_SERVER, source=src, vlan=vlan))
        for node, kind in sorted(self.server_roles.items()):
            if kind in roles and node not in view.controlled:
                if node in self.believed_scanned:
                    src = self._pick_source(view, self.known_node_vlan.get(node))
                    if src is not None:
                        out.append(AptProposal(AptAction.COMPROMISE, source=src, node=node))
                else:
                    vlan = self.known_node_vlan.get(node)
                    if vlan is not None:
                        src = self._pick_source(view, vlan)
                        if src is not None:
                            out.append(AptProposal(AptAction.SCAN, source=src, vlan=vlan))
        return out

    def _vertical_proposals(self, view: AptView) -> list[AptProposal]:
        if self.params.vector == "opc_server":
            roles = [NodeKind.OPC_SERVER.value]
            if not self.historian_analyzed:
                roles.append(NodeKind.HISTORIAN_SERVER.value)
            return self._server_proposals(view, tuple(roles))
        out = []
        l1_vlans = self._scan_targets(view, level=1)
        if not l1_vlans:
            src = self._pick_source(view, None)
            if src is not None:
                out.append(AptProposal(AptAction.DISCOVER_VLAN, source=src))
            return out
        targets = sorted(
            n for n in self.believed_scanned
            if n not in view.controlled
            and self.known_vlans.get(self.known_node_vlan.get(n, -1)) == 1
        )
        for n in targets:
            src = self._pick_source(view, self.known_node_vlan[n])
            if src is not None:
                out.append(AptProposal(AptAction.COMPROMISE, source=src, node=n))
        if not targets:
            for vlan in l1_vlans:
                src = self._pick_source(view, vlan)
                if src is not None:
                    out.append(AptProposal(AptAction.SCAN, source=src, vlan=vlan))
        return out

    def _attack_source(self, view: AptView) -> int | None:
        if self.params.vector == "opc_server":
            nodes = self._controlled_of_kind(view, NodeKind.OPC_SERVER)
        else:
            nodes = self._controlled_of_kind(view, NodeKind.HMI_WORKSTATION)
        return nodes[0].id if nodes else None

    def _discovery_proposals(self, view: AptView) -> list[AptProposal]:
        out = []
        if not self.historian_analyzed:
            hist = self._controlled_of_kind(view, NodeKind.HISTORIAN_SERVER)
            if hist:
                out.append(AptProposal(
                    AptAction.ANALYZE_HISTORIAN, source=hist[0].id, node=hist[0].id,
                ))
            else:
                out += self._server_proposals(view, (NodeKind.HISTORIAN_SERVER.value,))
        if len(self.discovered_plcs) < self.params.plc_threshold:
            if self.plc_vlan is None:
                src = self._pick_source(view, None)
                if src is not None:
                    out.append(AptProposal(AptAction.DISCOVER_VLAN, source=src))
            else:
                src = self._attack_source(view)
                if src is not None:
                    out.append(AptProposal(AptAction.DISCOVER_PLC, source=src, vlan=self.plc_vlan))
        return out

    def _attack_proposals(self, view: AptView) -> list[AptProposal]:
        src = self._attack_source(view)
        if src is None:
            return []
        out = []
        for plc in sorted(self.discovered_plcs):
            status = view.plc_status.get(plc, PlcStatus.NOMINAL)
            if self.params.objective == "destroy":
                if plc in self.destroyed_once or status == PlcStatus.DESTROYED:
                    continue
                if plc in self.flashed_plcs:
                    out.append(AptProposal(AptAction.DESTROY_PLC, source=src, plc=plc))
                else:
                    out.append(AptProposal(AptAction.FLASH_FIRMWARE, source=src, plc=plc))
            else:
                if status == PlcStatus.NOMINAL:
                    out.append(AptProposal(AptAction.DISRUPT_PLC, source=src, plc=plc))
        return out
