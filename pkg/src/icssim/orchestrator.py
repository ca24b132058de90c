"""Defender action catalog: validation, effects, cost accounting, canonical indexing."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import DefenderConfig
from .netmodel import (
    CLEAN,
    InvalidTargetError,
    NetworkState,
    Node,
    Plc,
    PlcStatus,
)


class DefenderAction(str, Enum):
    NOOP = "noop"
    SIMPLE_SCAN = "simple_scan"
    ADVANCED_SCAN = "advanced_scan"
    HUMAN_ANALYSIS = "human_analysis"
    REBOOT = "reboot"
    RESET_PASSWORD = "reset_password"
    REIMAGE = "reimage"
    QUARANTINE = "quarantine"
    RESET_PLC = "reset_plc"
    REPLACE_PLC = "replace_plc"


INVESTIGATIONS = (
    DefenderAction.SIMPLE_SCAN,
    DefenderAction.ADVANCED_SCAN,
    DefenderAction.HUMAN_ANALYSIS,
)
NODE_MITIGATIONS = (
    DefenderAction.REBOOT,
    DefenderAction.RESET_PASSWORD,
    DefenderAction.REIMAGE,
)
PLC_ACTIONS = (DefenderAction.RESET_PLC, DefenderAction.REPLACE_PLC)
# per-node block in the canonical action index
NODE_ACTIONS = INVESTIGATIONS + NODE_MITIGATIONS


def action_cost(action: DefenderAction, target_kind_is_server: bool, cfg: DefenderConfig) -> float:
    ws, srv = cfg.costs[action.value]
    return srv if target_kind_is_server else ws


def action_duration(action: DefenderAction, cfg: DefenderConfig) -> int:
    return cfg.durations[action.value]


@dataclass
class ActionIndex:
    """Bijection between integer indices and (action, target) pairs.

    Layout: index 0 is NoOp; then 6 node actions per computing node in id
    order (simple_scan, advanced_scan, human_analysis, reboot,
    reset_password, reimage); then one quarantine index per workstation-kind
    node in id order; then (reset_plc, replace_plc) per PLC in id order.
    """

    entries: list[tuple[DefenderAction, int | None]]
    index_of: dict[tuple[str, int | None], int]

    @property
    def size(self) -> int:
        return len(self.entries)

    def decode(self, index: int) -> tuple[DefenderAction, int | None]:
        if not 0 <= index < len(self.entries):
            raise IndexError(f"action index {index} out of range 0..{len(self.entries) - 1}")
        return self.entries[index]

    def encode(self, action: DefenderAction, target: int | None) -> int:
        return self.index_of[(action.value, target)]


def action_space(net: NetworkState) -> ActionIndex:
    entries: list[tuple[DefenderAction, int | None]] = [(DefenderAction.NOOP, None)]
    for node in net.computing_nodes:
        for act in NODE_ACTIONS:
            entries.append((act, node.id))
    for node in net.computing_nodes:
        if node.kind.is_workstation_kind:
            entries.append((DefenderAction.QUARANTINE, node.id))
    for plc_id in sorted(net.plcs):
        entries.append((DefenderAction.RESET_PLC, plc_id))
        entries.append((DefenderAction.REPLACE_PLC, plc_id))
    index_of = {(a.value, t): i for i, (a, t) in enumerate(entries)}
    return ActionIndex(entries=entries, index_of=index_of)


def investigation_detect_prob(
    action: DefenderAction,
    node: Node,
    effectiveness: float,
    cfg: DefenderConfig,
) -> float:
    """Per-draw detection probability; zero on nodes without malware
    (investigations never false-alarm)."""
    if action not in INVESTIGATIONS:
        raise InvalidTargetError(f"{action.value} is not an investigation")
    if not node.flags.initial_compromise:
        return 0.0
    p = cfg.detect_probs[action.value]
    if node.flags.malware_cleaned:
        p *= 1.0 - effectiveness
    return p


def resolve_investigation(
    action: DefenderAction,
    node: Node,
    effectiveness: float,
    cfg: DefenderConfig,
    rng: np.random.Generator,
) -> int | None:
    """Detection delay in hours for single-draw investigations (simple scan,
    human analysis): a Bernoulli at issue time, alert delivered at completion.
    Advanced scans draw hourly in the engine instead."""
    if action == DefenderAction.ADVANCED_SCAN:
        raise InvalidTargetError("advanced_scan detection is drawn hourly by the engine")
    p = investigation_detect_prob(action, node, effectiveness, cfg)
    if p > 0 and rng.random() < p:
        return action_duration(action, cfg)
    return None


def apply_mitigation(net: NetworkState, action: DefenderAction, target_id: int) -> bool:
    """Apply a mitigation; returns True if it changed the target.

    Reboot and password reset clear every flag unless the matching
    persistence flag blocks them entirely; re-image always cleans.
    """
    if action in (DefenderAction.REBOOT, DefenderAction.RESET_PASSWORD, DefenderAction.REIMAGE):
        node = net.node(target_id)
        if action == DefenderAction.REBOOT and node.flags.reboot_persistence:
            return False
        if action == DefenderAction.RESET_PASSWORD and node.flags.credential_persistence:
            return False
        changed = not node.flags.clean
        node.flags = CLEAN
        return changed
    if action == DefenderAction.QUARANTINE:
        net.quarantine_toggle(target_id)
        return True
    if action == DefenderAction.RESET_PLC:
        plc = net.plc(target_id)
        if plc.status == PlcStatus.DESTROYED:
            return False  # destroyed equipment cannot be reset
        changed = plc.status == PlcStatus.DISRUPTED or plc.firmware_flashed
        plc.status = PlcStatus.NOMINAL
        plc.firmware_flashed = False
        return changed
    if action == DefenderAction.REPLACE_PLC:
        plc = net.plc(target_id)
        changed = plc.status != PlcStatus.NOMINAL or plc.firmware_flashed
        plc.status = PlcStatus.NOMINAL
        plc.firmware_flashed = False
        return changed
    raise InvalidTargetError(f"{action.value} is not a mitigation")


def validate_target(net: NetworkState, action: DefenderAction, target_id: int | None) -> None:
    """Raise InvalidTargetError when the (action, target) pair is malformed."""
    if action == DefenderAction.NOOP:
        return
    if action in PLC_ACTIONS:
        net.plc(target_id)
        return
    node = net.node(target_id)
    if action == DefenderAction.QUARANTINE and not node.kind.is_workstation_kind:
        raise InvalidTargetError(f"cannot quarantine {node.kind.value} node {target_id}")


def is_plc_target(plc: Plc, action: DefenderAction) -> bool:
    if action == DefenderAction.RESET_PLC:
        return plc.status == PlcStatus.DISRUPTED
    if action == DefenderAction.REPLACE_PLC:
        return plc.status == PlcStatus.DESTROYED
    return False
