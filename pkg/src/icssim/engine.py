"""Event-driven simulation kernel: integer-hour clock, event queue, action
scheduling for both agents, APT labor admission, and the hourly step loop."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace

import numpy as np

from . import ids as ids_mod
from .apt import (
    APT_ACTIONS,
    AptAction,
    AptFsm,
    AptOutcome,
    AptParams,
    AptProposal,
    AptView,
    ControlledNode,
    MachineState,
    resolve_params,
)
from .config import NetworkConfig
from .ids import Alert, SOURCE_INVESTIGATION
from .netmodel import (
    EXTERNAL,
    NetworkState,
    NodeKind,
    PlcStatus,
    UnreachableError,
    build_network,
)
from .orchestrator import (
    DefenderAction,
    INVESTIGATIONS,
    action_cost,
    action_duration,
    apply_mitigation,
    investigation_detect_prob,
    validate_target,
)
from .reward import RewardBreakdown, shaping_reward, step_reward


class EpisodeDoneError(RuntimeError):
    """step_hour called on a finished episode."""


def sample_duration(n: int, p: float, rng: np.random.Generator) -> int:
    """Binomial(n, p) completion time, clamped to at least one hour."""
    return max(1, int(rng.binomial(n, p)))


@dataclass
class DefenderInstance:
    action: DefenderAction
    target: int | None
    start: int
    end: int
    cost: float
    is_investigation: bool
    detect_hour: int | None = None
    detected: bool = False
    finished: bool = False
    effective: bool = True  # False when a mitigation was blocked / had no effect


@dataclass
class AptInstance:
    proposal: AptProposal
    start: int
    end: int
    success_draw: bool
    alert: Alert | None
    labor_rate: float = 1.0
    external: bool = False
    finished: bool = False


@dataclass
class NodeObservation:
    investigation_outcome: int  # 0 not_run, 1 ran_no_detect, 2 detected
    max_alert_severity: int     # 0..3

    @property
    def symbol(self) -> int:
        return self.investigation_outcome * 4 + self.max_alert_severity


@dataclass
class StepResult:
    t: int
    alerts: list[Alert]
    node_obs: dict[int, NodeObservation]
    completed: list[DefenderInstance]
    rejected: list[tuple[DefenderAction, int | None, str]]
    reward: RewardBreakdown
    done: bool
    plc_status: list[int]


@dataclass
class EpisodeState:
    config: NetworkConfig
    net: NetworkState
    apt_params: AptParams | None
    fsm: AptFsm | None
    clock: int = 0
    rng: np.random.Generator = None
    done: bool = False
    queue: list = field(default_factory=list)
    _seq: int = 0
    # per-family target exclusivity: one investigation and one mitigation
    # may be in flight per target, never two of the same family
    inv_in_flight: dict[int, DefenderInstance] = field(default_factory=dict)
    mit_in_flight: dict[tuple[str, int], DefenderInstance] = field(default_factory=dict)
    apt_in_flight: list[AptInstance] = field(default_factory=list)
    pending_apt_outcomes: list[AptOutcome] = field(default_factory=list)
    completed_this_hour: list[DefenderInstance] = field(default_factory=list)

    def push_event(self, time: int, kind: str, payload) -> None:
        heapq.heappush(self.queue, (time, self._seq, kind, payload))
        self._seq += 1

    @property
    def t_max(self) -> int:
        return self.config.reward.t_max

    def apt_labor_in_flight(self) -> float:
        return sum(inst.labor_rate for inst in self.apt_in_flight if not inst.finished)


def compromised_split(net: NetworkState) -> tuple[int, int]:
    """(workstation-kind, server-kind) nodes with initial compromise."""
    w = s = 0
    for n in net.computing_nodes:
        if n.flags.initial_compromise:
            if n.kind.is_server:
                s += 1
            else:
                w += 1
    return w, s


def reset(config: NetworkConfig, seed: int) -> tuple[EpisodeState, StepResult]:
    """Build the network, inject the beachhead, and initialize the APT FSM.

    RNG draw order (documented for reproducibility): beachhead node,
    objective, vector.
    """
    net = build_network(config)
    rng = np.random.default_rng(seed)
    apt_params = None
    fsm = None
    if config.apt.enabled:
        l2_workstations = [
            n for n in net.computing_nodes
            if n.level == 2 and n.kind == NodeKind.WORKSTATION
        ]
        beachhead = l2_workstations[int(rng.integers(len(l2_workstations)))]
        beachhead.flags = beachhead.flags.with_flag("scanned").with_flag("initial_compromise")

        objective = config.apt.objective
        if objective == "random":
            objective = ("disrupt", "destroy")[int(rng.integers(2))]
        vector = config.apt.vector
        has_opc = any(n.kind == NodeKind.OPC_SERVER for n in net.computing_nodes)
        has_hmi = any(n.kind == NodeKind.HMI_WORKSTATION for n in net.computing_nodes)
        if vector == "random":
            options = [v for v, ok in (("opc_server", has_opc), ("level1_hmi", has_hmi)) if ok]
            vector = options[int(rng.integers(len(options)))] if options else "level1_hmi"
        elif vector == "opc_server" and not has_opc:
            vector = "level1_hmi"

        apt_params = resolve_params(config.apt, objective, vector)
        fsm = AptFsm(apt_params)
        fsm.bootstrap(beachhead.id, beachhead.vlan_id, beachhead.level)

    state = EpisodeState(config=config, net=net, apt_params=apt_params, fsm=fsm, rng=rng)
    initial = StepResult(
        t=0, alerts=[], node_obs={}, completed=[], rejected=[],
        reward=step_reward(0, 0, 0.0, 0, config.reward),
        done=False,
        plc_status=[int(net.plcs[i].status) for i in sorted(net.plcs)],
    )
    return state, initial


# -- defender admission ------------------------------------------------------


def _admit_defender(
    state: EpisodeState,
    actions: list[tuple[DefenderAction, int | None]],
) -> list[tuple[DefenderAction, int | None, str]]:
    rejected = []
    cfg = state.config.defender
    net = state.net
    for action, target in actions:
        if action == DefenderAction.NOOP:
            continue
        validate_target(net, action, target)
        is_inv = action in INVESTIGATIONS
        is_plc = action in (DefenderAction.RESET_PLC, DefenderAction.REPLACE_PLC)
        if is_inv:
            if target in state.inv_in_flight:
                rejected.append((action, target, "busy"))
                continue
        else:
            key = ("plc", target) if is_plc else ("node", target)
            if key in state.mit_in_flight:
                rejected.append((action, target, "busy"))
                continue
        is_server = False
        if not is_plc:
            node = net.node(target)
            if not node.online(state.clock):
                rejected.append((action, target, "offline"))
                continue
            is_server = node.kind.is_server
        inst = DefenderInstance(
            action=action, target=target,
            start=state.clock, end=state.clock + action_duration(action, cfg),
            cost=action_cost(action, is_server, cfg),
            is_investigation=is_inv,
        )
        if is_inv and action != DefenderAction.ADVANCED_SCAN:
            p = investigation_detect_prob(
                action, net.node(target), state.config.apt.cleanup_effectiveness, cfg
            )
            if p > 0 and state.rng.random() < p:
                inst.detect_hour = inst.end
                inst.detected = True
        if action == DefenderAction.REIMAGE:
            net.node(target).offline_until = inst.end
        if is_inv:
            state.inv_in_flight[target] = inst
        else:
            state.mit_in_flight[("plc", target) if is_plc else ("node", target)] = inst
        state.push_event(inst.end, "def", inst)
    return rejected


def _complete_defender(state: EpisodeState, inst: DefenderInstance) -> list[Alert]:
    alerts = []
    net = state.net
    if inst.is_investigation:
        state.inv_in_flight.pop(inst.target, None)
        if inst.detected and inst.detect_hour == state.clock:
            node = net.node(inst.target)
            alerts.append(Alert(
                time=state.clock, ip=node.ip,
                severity=ids_mod.severity_for_node(node.flags),
                source_kind=SOURCE_INVESTIGATION,
            ))
    else:
        is_plc = inst.action in (DefenderAction.RESET_PLC, DefenderAction.REPLACE_PLC)
        state.mit_in_flight.pop(("plc", inst.target) if is_plc else ("node", inst.target), None)
        if inst.action == DefenderAction.REIMAGE:
            net.node(inst.target).offline_until = None
        inst.effective = apply_mitigation(net, inst.action, inst.target)
    inst.finished = True
    state.completed_this_hour.append(inst)
    return alerts


# -- APT execution ------------------------------------------------------------


def _apt_path(state: EpisodeState, proposal: AptProposal, external: bool = False):
    """Message path for a networked action, or None for local actions."""
    spec = APT_ACTIONS[proposal.action]
    if spec.local:
        return None
    net = state.net
    src = EXTERNAL if external else net.node(proposal.source)
    if proposal.node is not None:
        dst = net.node(proposal.node)
    elif proposal.plc is not None:
        dst = net.plc(proposal.plc)
    elif proposal.vlan is not None:
        dst = ("vlan", proposal.vlan)
    else:
        # network-wide probe: traffic reaches the far router
        levels = sorted(net.level_router)
        src_level = 2 if external else net.node(proposal.source).level
        far = [lv for lv in levels if lv != src_level]
        dst = ("router", far[0] if far else src_level)
    return net.message_path(src, dst)


def _admit_apt(state: EpisodeState, proposal: AptProposal, external: bool = False) -> AptInstance | None:
    """Admission-time checks and draws; returns None when the action fails
    immediately (unreachable endpoints: the attacker sees the connection
    fail and no traffic flows)."""
    spec = APT_ACTIONS[proposal.action]
    net = state.net
    rng = state.rng
    if not external and not _source_usable(state, proposal.source):
        state.pending_apt_outcomes.append(AptOutcome(
            action=proposal.action, source=proposal.source,
            node=proposal.node, vlan=proposal.vlan, plc=proposal.plc,
            success=False, prereq_failed=True,
        ))
        return None
    try:
        path = _apt_path(state, proposal, external=external)
    except UnreachableError:
        state.pending_apt_outcomes.append(AptOutcome(
            action=proposal.action, source=proposal.source,
            node=proposal.node, vlan=proposal.vlan, plc=proposal.plc,
            success=False, unreachable=True,
        ))
        return None
    if proposal.action == AptAction.ANALYZE_HISTORIAN:
        fsm = state.fsm
        if fsm.analyze_required is None:
            fsm.analyze_required = sample_duration(spec.duration[0], spec.duration[1], rng)
        duration = max(1, fsm.analyze_required - fsm.analyze_progress)
    else:
        duration = sample_duration(spec.duration[0], spec.duration[1], rng)
    success = bool(rng.random() < spec.success_prob)
    if external:
        severity = ids_mod.action_severity(proposal.action.value, None)
        local_ip = None
    else:
        src_node = net.node(proposal.source)
        severity = ids_mod.action_severity(proposal.action.value, src_node.flags)
        local_ip = src_node.ip
    alert = ids_mod.action_alert(
        spec.alert_rate, path or [], severity, 0, local_ip, state.config.ids, rng,
    )
    inst = AptInstance(
        proposal=proposal, start=state.clock, end=state.clock + duration,
        success_draw=success, alert=alert, external=external,
    )
    state.apt_in_flight.append(inst)
    state.push_event(inst.end, "apt", inst)
    return inst


def _source_usable(state: EpisodeState, node_id: int) -> bool:
    node = state.net.node(node_id)
    return (
        node.flags.initial_compromise
        and node.online(state.clock)
        and not node.quarantined
    )


def _complete_apt(state: EpisodeState, inst: AptInstance) -> tuple[AptOutcome, Alert | None]:
    """Authoritative prerequisite re-check and effect application."""
    p = inst.proposal
    net = state.net
    cfg = state.config
    outcome = AptOutcome(action=p.action, source=p.source, node=p.node, vlan=p.vlan, plc=p.plc)
    inst.finished = True

    alert = None
    if inst.alert is not None:
        alert = replace(inst.alert, time=state.clock)

    # source usability and reachability were validated at launch; a running
    # task completes on its own, but the target must still be eligible
    if not inst.success_draw:
        return outcome, alert

    act = p.action
    if act == AptAction.SCAN:
        members = net.nodes_in_vlan(p.vlan)
        for node in members:
            if not node.flags.scanned:
                node.flags = node.flags.with_flag("scanned")
        outcome.revealed_nodes = [(n.id, n.vlan_id) for n in members]
        outcome.success = True
    elif act == AptAction.COMPROMISE:
        target = net.node(p.node) if not inst.external else net.node(p.node)
        if inst.external:
            if target.online(state.clock) and not target.quarantined:
                target.flags = target.flags.with_flag("scanned").with_flag("initial_compromise")
                outcome.success = True
            else:
                outcome.prereq_failed = True
        elif target.flags.scanned and target.online(state.clock):
            target.flags = target.flags.with_flag("initial_compromise")
            outcome.success = True
            if target.kind == NodeKind.OPC_SERVER and cfg.plcs.count > 0:
                outcome.plc_vlan = cfg.plcs.vlan
        else:
            outcome.prereq_failed = True
    elif act in (AptAction.REBOOT_PERSIST, AptAction.ESCALATE_PRIVILEGE,
                 AptAction.CREDENTIAL_PERSIST, AptAction.CLEANUP):
        node = net.node(p.node)
        flag_by_action = {
            AptAction.REBOOT_PERSIST: ("reboot_persistence", "initial_compromise"),
            AptAction.ESCALATE_PRIVILEGE: ("admin_access", "initial_compromise"),
            AptAction.CREDENTIAL_PERSIST: ("credential_persistence", "admin_access"),
            AptAction.CLEANUP: ("malware_cleaned", "admin_access"),
        }
        flag, prereq = flag_by_action[act]
        if getattr(node.flags, prereq):
            node.flags = node.flags.with_flag(flag)
            outcome.success = True
        else:
            outcome.prereq_failed = True
    elif act == AptAction.DISCOVER_VLAN:
        revealed = {
            v: lvl for v, lvl in net.vlan_level.items()
            if not net.is_quarantine_vlan(v)
        }
        outcome.revealed_vlans = revealed
        if cfg.plcs.count > 0:
            outcome.plc_vlan = cfg.plcs.vlan
        outcome.success = True
    elif act == AptAction.DISCOVER_SERVER:
        outcome.revealed_servers = {
            n.id: n.kind.value for n in net.nodes_in_vlan(p.vlan) if n.kind.is_server
        }
        outcome.revealed_nodes = [(n.id, n.vlan_id) for n in net.nodes_in_vlan(p.vlan) if n.kind.is_server]
        outcome.success = True
    elif act == AptAction.ANALYZE_HISTORIAN:
        fsm = state.fsm
        if fsm.analyze_required is not None and fsm.analyze_progress >= fsm.analyze_required:
            outcome.success = True
        else:
            outcome.prereq_failed = True  # control lost mid-analysis; progress kept
    elif act == AptAction.DISCOVER_PLC:
        undiscovered = [
            net.plcs[i] for i in sorted(net.plcs)
            if net.plcs[i].vlan_id == p.vlan and not net.plcs[i].discovered_by_apt
        ]
        batch = undiscovered[: cfg.apt.plcs_per_discovery]
        for plc in batch:
            plc.discovered_by_apt = True
        outcome.revealed_plcs = [plc.id for plc in batch]
        outcome.success = True
    elif act == AptAction.FLASH_FIRMWARE:
        plc = net.plc(p.plc)
        if plc.discovered_by_apt and plc.status != PlcStatus.DESTROYED:
            plc.firmware_flashed = True
            outcome.success = True
        else:
            outcome.prereq_failed = True
    elif act == AptAction.DISRUPT_PLC:
        plc = net.plc(p.plc)
        if plc.discovered_by_apt and plc.status == PlcStatus.NOMINAL:
            plc.status = PlcStatus.DISRUPTED
            outcome.success = True
        else:
            outcome.prereq_failed = True
    elif act == AptAction.DESTROY_PLC:
        plc = net.plc(p.plc)
        if plc.discovered_by_apt and plc.firmware_flashed and plc.status != PlcStatus.DESTROYED:
            plc.status = PlcStatus.DESTROYED
            outcome.success = True
        else:
            outcome.prereq_failed = True
    return outcome, alert


def _build_view(state: EpisodeState) -> AptView:
    controlled = {}
    for node in state.net.computing_nodes:
        if (
            node.flags.initial_compromise
            and node.online(state.clock)
            and not node.quarantined
        ):
            controlled[node.id] = ControlledNode(
                id=node.id, kind=node.kind, level=node.level,
                vlan_id=node.vlan_id, flags=node.flags,
            )
    plc_status = {
        pid: state.net.plcs[pid].status
        for pid in sorted(state.fsm.discovered_plcs)
        if pid in state.net.plcs
    } if state.fsm else {}
    return AptView(clock=state.clock, controlled=controlled, plc_status=plc_status)


def admit_apt_actions(state: EpisodeState, proposals: list[AptProposal]) -> list[AptProposal]:
    """Greedy admission in FSM priority order under the labor budget."""
    admitted = []
    budget = state.apt_params.labor_budget
    for proposal in proposals:
        if state.apt_labor_in_flight() + 1.0 > budget:
            break
        if _admit_apt(state, proposal) is not None:
            admitted.append(proposal)
    return admitted


def _maybe_reentry(state: EpisodeState) -> None:
    cfg = state.config.apt
    if not cfg.reentry.enabled or cfg.reentry.mean_hours <= 0:
        return
    if any(n.flags.initial_compromise for n in state.net.computing_nodes):
        return
    if any(inst.external and not inst.finished for inst in state.apt_in_flight):
        return
    if state.apt_labor_in_flight() + 1.0 > state.apt_params.labor_budget:
        return
    if state.rng.random() >= 1.0 / cfg.reentry.mean_hours:
        return
    targets = [
        n for n in state.net.computing_nodes
        if n.level == 2 and n.kind == NodeKind.WORKSTATION
        and not n.quarantined and n.online(state.clock)
    ]
    if not targets:
        return
    target = targets[int(state.rng.integers(len(targets)))]
    _admit_apt(
        state,
        AptProposal(AptAction.COMPROMISE, source=None, node=target.id),
        external=True,
    )


# -- the hourly step ----------------------------------------------------------


def step_hour(
    state: EpisodeState,
    defender_actions: list[tuple[DefenderAction, int | None]],
) -> StepResult:
    if state.done:
        raise EpisodeDoneError("episode is finished")
    net = state.net
    cfg = state.config
    state.completed_this_hour = []
    pre_counts = compromised_split(net)

    rejected = _admit_defender(state, defender_actions)
    state.clock += 1
    clock = state.clock
    alerts: list[Alert] = []
    apt_outcomes: list[AptOutcome] = list(state.pending_apt_outcomes)
    state.pending_apt_outcomes = []

    # cumulative historian-analysis progress for the elapsed hour; counted
    # before completions so an uninterrupted run finishes exactly on time
    if state.fsm is not None:
        for inst in state.apt_in_flight:
            if inst.finished or inst.proposal.action != AptAction.ANALYZE_HISTORIAN:
                continue
            node = net.node(inst.proposal.node)
            if node.flags.initial_compromise and node.online(clock):
                state.fsm.analyze_progress += 1

    # process everything scheduled up to this hour, in stable FIFO order
    while state.queue and state.queue[0][0] <= clock:
        _, _, kind, inst = heapq.heappop(state.queue)
        if inst.finished:
            continue
        if kind == "apt":
            outcome, alert = _complete_apt(state, inst)
            apt_outcomes.append(outcome)
            if alert is not None:
                alerts.append(alert)
        else:
            alerts.extend(_complete_defender(state, inst))

    # hourly draws for in-flight advanced scans (post-completion state)
    e = cfg.apt.cleanup_effectiveness
    for node_id in sorted(state.inv_in_flight):
        inst = state.inv_in_flight[node_id]
        if inst.action != DefenderAction.ADVANCED_SCAN or inst.finished:
            continue
        node = net.node(node_id)
        p = investigation_detect_prob(inst.action, node, e, cfg.defender)
        if p > 0 and state.rng.random() < p:
            inst.detected = True
            inst.detect_hour = clock
            inst.end = clock
            del state.inv_in_flight[node_id]
            alerts.append(Alert(
                time=clock, ip=node.ip,
                severity=ids_mod.severity_for_node(node.flags),
                source_kind=SOURCE_INVESTIGATION,
            ))
            inst.finished = True
            state.completed_this_hour.append(inst)

    # APT turn
    if state.fsm is not None:
        state.fsm.observe_outcomes(apt_outcomes)
        _, proposals = state.fsm.step(_build_view(state))
        admitted = admit_apt_actions(state, proposals)
        state.fsm.notify_admitted(admitted)
        _maybe_reentry(state)
    state.apt_in_flight = [i for i in state.apt_in_flight if not i.finished]

    # ambient IDS activity
    alerts.extend(ids_mod.passive_alerts(net, clock, e, state.rng))
    alerts.extend(ids_mod.false_alerts(net, clock, state.rng))

    # per-node observation symbols
    node_obs: dict[int, NodeObservation] = {}
    ip_to_node = {n.ip: n.id for n in net.computing_nodes}
    for inst in state.completed_this_hour:
        if inst.is_investigation:
            node_obs[inst.target] = NodeObservation(
                investigation_outcome=2 if inst.detected else 1,
                max_alert_severity=0,
            )
    for alert in alerts:
        if alert.source_kind == SOURCE_INVESTIGATION:
            continue
        node_id = ip_to_node.get(alert.ip)
        if node_id is None:
            continue
        obs = node_obs.setdefault(node_id, NodeObservation(0, 0))
        obs.max_alert_severity = max(obs.max_alert_severity, alert.severity)

    # reward
    n_disrupted = sum(1 for p in net.plcs.values() if p.status == PlcStatus.DISRUPTED)
    n_destroyed = sum(1 for p in net.plcs.values() if p.status == PlcStatus.DESTROYED)
    completed_cost = sum(i.cost for i in state.completed_this_hour)
    post_counts = compromised_split(net)
    r_shape = shaping_reward(pre_counts, post_counts, cfg.reward)
    reward = step_reward(n_disrupted, n_destroyed, completed_cost, clock, cfg.reward, r_shape)

    done = clock >= state.t_max
    if cfg.sim.end_on_all_plcs_destroyed and net.plcs and n_destroyed == len(net.plcs):
        done = True
    state.done = done

    return StepResult(
        t=clock,
        alerts=alerts,
        node_obs=node_obs,
        completed=list(state.completed_this_hour),
        rejected=rejected,
        reward=reward,
        done=done,
        plc_status=[int(net.plcs[i].status) for i in sorted(net.plcs)],
    )
