"""Stochastic IDS: action alerts with device multipliers, passive alerts, false alarms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import IdsConfig
from .netmodel import CompromiseFlags, Device, NetworkState, Node

PLC_ATTACK_ACTIONS = frozenset({"flash_firmware", "disrupt_plc", "destroy_plc"})

SOURCE_ACTION = "action"
SOURCE_PASSIVE = "passive"
SOURCE_FALSE = "false"
SOURCE_INVESTIGATION = "investigation"


@dataclass(frozen=True)
class Alert:
    time: int
    ip: str
    severity: int
    source_kind: str


def severity_for_node(flags: CompromiseFlags) -> int:
    """Deterministic severity from node state: credential persistence is the
    loudest indicator, admin access intermediate, anything else minimal."""
    if flags.credential_persistence:
        return 3
    if flags.admin_access:
        return 2
    return 1


def action_severity(action: str, source_flags: CompromiseFlags | None) -> int:
    if action in PLC_ATTACK_ACTIONS:
        return 3
    if source_flags is None:
        return 1  # external origin: no node state to grade
    return severity_for_node(source_flags)


def action_alert(
    alert_rate: float,
    path: list[Device],
    severity: int,
    time: int,
    local_ip: str | None,
    params: IdsConfig,
    rng: np.random.Generator,
) -> Alert | None:
    """One attacker-action alert draw.

    Local actions (empty path) take a single Bernoulli(alert_rate) draw and
    the alert carries the node's IP. Networked actions draw independently per
    device at min(1, factor*rate); the first firing device supplies the IP.
    """
    if not path:
        if alert_rate > 0 and rng.random() < alert_rate:
            return Alert(time=time, ip=local_ip, severity=severity, source_kind=SOURCE_ACTION)
        return None
    for device in path:
        p = min(1.0, params.device_factors[device.kind.value] * alert_rate)
        if p > 0 and rng.random() < p:
            return Alert(time=time, ip=device.ip, severity=severity, source_kind=SOURCE_ACTION)
    return None


def passive_alerts(
    net: NetworkState,
    clock: int,
    effectiveness: float,
    rng: np.random.Generator,
) -> list[Alert]:
    """Per-hour Bernoulli(0.1*m) on each online compromised node, where the
    cleanup multiplier m = (1-e) applies once malware has been cleaned."""
    out = []
    base = net.config.ids.passive_alert_rate
    for node in net.computing_nodes:
        if not node.flags.initial_compromise or not node.online(clock):
            continue
        rate = base * ((1.0 - effectiveness) if node.flags.malware_cleaned else 1.0)
        if rate > 0 and rng.random() < rate:
            out.append(Alert(
                time=clock, ip=node.ip,
                severity=severity_for_node(node.flags),
                source_kind=SOURCE_PASSIVE,
            ))
    return out


def false_alerts(net: NetworkState, clock: int, rng: np.random.Generator) -> list[Alert]:
    """Per level and severity, one Bernoulli draw per hour; the alert IP is
    sampled uniformly from that level's computing nodes."""
    out = []
    by_level: dict[int, list[Node]] = {}
    for node in net.computing_nodes:
        by_level.setdefault(node.level, []).append(node)
    for level in sorted(by_level):
        pool = by_level[level]
        for severity in sorted(net.config.ids.false_alert_rates):
            rate = net.config.ids.false_alert_rates[severity]
            if rate > 0 and rng.random() < rate:
                node = pool[rng.integers(len(pool))]
                out.append(Alert(
                    time=clock, ip=node.ip, severity=severity,
                    source_kind=SOURCE_FALSE,
                ))
    return out
