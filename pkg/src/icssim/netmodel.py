"""Network topology, node compromise lattice, devices, PLCs, and construction."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .config import (
    ConfigError,
    NetworkConfig,
    SERVER_KINDS,
    WORKSTATION_KINDS,
)


class NodeKind(str, Enum):
    WORKSTATION = "workstation"
    HMI_WORKSTATION = "hmi_workstation"
    OPC_SERVER = "opc_server"
    HISTORIAN_SERVER = "historian_server"
    DOMAIN_CONTROLLER = "domain_controller"

    @property
    def is_server(self) -> bool:
        return self.value in SERVER_KINDS

    @property
    def is_workstation_kind(self) -> bool:
        return self.value in WORKSTATION_KINDS


class DeviceKind(str, Enum):
    SWITCH = "switch"
    ROUTER = "router"
    FIREWALL = "firewall"


class PlcStatus(int, Enum):
    NOMINAL = 0
    DISRUPTED = 1
    DESTROYED = 2


# Flag order is canonical: it defines the bit positions used by state indexing.
FLAG_NAMES = (
    "scanned",
    "initial_compromise",
    "reboot_persistence",
    "admin_access",
    "credential_persistence",
    "malware_cleaned",
)


@dataclass(frozen=True)
class CompromiseFlags:
    scanned: bool = False
    initial_compromise: bool = False
    reboot_persistence: bool = False
    admin_access: bool = False
    credential_persistence: bool = False
    malware_cleaned: bool = False

    def is_valid(self) -> bool:
        """Prerequisite chain from the node-condition table."""
        if self.initial_compromise and not self.scanned:
            return False
        if self.reboot_persistence and not self.initial_compromise:
            return False
        if self.admin_access and not self.initial_compromise:
            return False
        if self.credential_persistence and not self.admin_access:
            return False
        if self.malware_cleaned and not self.admin_access:
            return False
        return True

    def with_flag(self, name: str, value: bool = True) -> "CompromiseFlags":
        return replace(self, **{name: value})

    def as_bits(self) -> int:
        return sum(int(getattr(self, name)) << i for i, name in enumerate(FLAG_NAMES))

    @property
    def clean(self) -> bool:
        return self.as_bits() == 0


CLEAN = CompromiseFlags()


def enumerate_compromise_states() -> list[CompromiseFlags]:
    """All flag combinations satisfying the prerequisite chain, ordered by bit value.

    Index 0 is the clean state. The bit value uses FLAG_NAMES positions
    (scanned = LSB), so the ordering is canonical and documented.
    """
    out = []
    for bits in range(1 << len(FLAG_NAMES)):
        flags = CompromiseFlags(**{name: bool(bits >> i & 1) for i, name in enumerate(FLAG_NAMES)})
        if flags.is_valid():
            out.append(flags)
    return out


COMPROMISE_STATES = enumerate_compromise_states()
N_STATES = len(COMPROMISE_STATES)
_STATE_INDEX = {f.as_bits(): i for i, f in enumerate(COMPROMISE_STATES)}


def state_index(flags: CompromiseFlags) -> int:
    return _STATE_INDEX[flags.as_bits()]


@dataclass
class Node:
    id: int
    kind: NodeKind
    level: int
    vlan_id: int
    home_vlan_id: int
    ip: str
    flags: CompromiseFlags = CLEAN
    quarantined: bool = False
    offline_until: int | None = None

    def online(self, clock: int) -> bool:
        return self.offline_until is None or clock >= self.offline_until


@dataclass
class Device:
    id: int
    kind: DeviceKind
    level: int
    ip: str
    vlan_id: int | None = None  # set for switches


@dataclass
class Plc:
    id: int
    vlan_id: int
    status: PlcStatus = PlcStatus.NOMINAL
    firmware_flashed: bool = False
    discovered_by_apt: bool = False


class LookupError_(KeyError):
    """Unknown node/PLC/VLAN id."""


class UnreachableError(RuntimeError):
    """Endpoints separated by the quarantine-VLAN isolation rule."""


EXTERNAL = "external"


@dataclass
class NetworkState:
    """Topology plus mutable per-node/PLC state. Owned by one episode."""

    config: NetworkConfig
    nodes: dict[int, Node]
    plcs: dict[int, Plc]
    devices: dict[int, Device]
    vlan_switch: dict[int, int]              # vlan id -> switch device id
    level_router: dict[int, int]             # level -> router device id
    level_firewall: dict[int, int]           # level -> external firewall device id
    inter_firewalls: dict[tuple[int, int], int]  # (low level, high level) -> firewall id
    quarantine_vlans: dict[int, int]         # level -> quarantine vlan id
    vlan_level: dict[int, int]               # vlan id -> level
    _adj: dict[int, list[int]] = field(default_factory=dict)

    # -- construction ----------------------------------------------------

    @property
    def computing_nodes(self) -> list[Node]:
        return [self.nodes[i] for i in sorted(self.nodes)]

    def nodes_of_kind(self, *kinds: NodeKind) -> list[Node]:
        return [n for n in self.computing_nodes if n.kind in kinds]

    def nodes_in_vlan(self, vlan_id: int) -> list[Node]:
        return [n for n in self.computing_nodes if n.vlan_id == vlan_id]

    def node(self, node_id: int) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise LookupError_(f"unknown node id {node_id}") from None

    def plc(self, plc_id: int) -> Plc:
        try:
            return self.plcs[plc_id]
        except KeyError:
            raise LookupError_(f"unknown PLC id {plc_id}") from None

    def is_quarantine_vlan(self, vlan_id: int) -> bool:
        return vlan_id in self.quarantine_vlans.values()

    # -- paths -----------------------------------------------------------

    def _endpoint_attachment(self, endpoint) -> tuple[int, int | None]:
        """Return (device id the endpoint attaches to, its vlan or None)."""
        if endpoint == EXTERNAL:
            level = max(self.level_firewall)
            return self.level_firewall[level], None
        if isinstance(endpoint, Node):
            return self.vlan_switch[endpoint.vlan_id], endpoint.vlan_id
        if isinstance(endpoint, Plc):
            return self.vlan_switch[endpoint.vlan_id], endpoint.vlan_id
        if isinstance(endpoint, int):
            return self._endpoint_attachment(self.node(endpoint))
        if isinstance(endpoint, tuple) and len(endpoint) == 2:
            kind, ident = endpoint
            if kind == "vlan":
                if ident not in self.vlan_switch:
                    raise LookupError_(f"unknown vlan id {ident}")
                return self.vlan_switch[ident], ident
            if kind == "router":
                if ident not in self.level_router:
                    raise LookupError_(f"unknown level {ident}")
                return self.level_router[ident], None
        raise LookupError_(f"unresolvable endpoint {endpoint!r}")

    def message_path(self, src, dst, apt_traffic: bool = True) -> list[Device]:
        """Ordered devices a message traverses from src to dst.

        Same-VLAN traffic traverses the VLAN's switch only. With apt_traffic,
        the quarantine isolation rule applies: a quarantine VLAN exchanges
        traffic only within itself.
        """
        src_dev, src_vlan = self._endpoint_attachment(src)
        dst_dev, dst_vlan = self._endpoint_attachment(dst)
        if src_dev == dst_dev and src_vlan == dst_vlan and src_vlan is not None:
            return [self.devices[src_dev]]
        if apt_traffic:
            src_q = src_vlan is not None and self.is_quarantine_vlan(src_vlan)
            dst_q = dst_vlan is not None and self.is_quarantine_vlan(dst_vlan)
            if src_q or dst_q:
                raise UnreachableError(
                    f"quarantine isolation blocks traffic between {src_vlan} and {dst_vlan}"
                )
        path_ids = self._shortest_path(src_dev, dst_dev)
        return [self.devices[d] for d in path_ids]

    def reachable(self, src, dst) -> bool:
        try:
            self.message_path(src, dst)
            return True
        except UnreachableError:
            return False

    def _shortest_path(self, a: int, b: int) -> list[int]:
        if a == b:
            return [a]
        prev: dict[int, int] = {a: a}
        frontier = [a]
        while frontier:
            nxt = []
            for u in frontier:
                for v in self._adj[u]:
                    if v not in prev:
                        prev[v] = u
                        if v == b:
                            path = [v]
                            while path[-1] != a:
                                path.append(prev[path[-1]])
                            return path[::-1]
                        nxt.append(v)
            frontier = nxt
        raise LookupError_(f"no device path between {a} and {b}")

    # -- quarantine ------------------------------------------------------

    def quarantine_toggle(self, node_id: int) -> Node:
        """Swap a workstation-kind node between its home VLAN and its level's
        quarantine VLAN; a second call restores it."""
        node = self.node(node_id)
        if not node.kind.is_workstation_kind:
            raise InvalidTargetError(
                f"node {node_id} ({node.kind.value}) cannot be quarantined"
            )
        if node.quarantined:
            node.vlan_id = node.home_vlan_id
            node.quarantined = False
        else:
            node.vlan_id = self.quarantine_vlans[node.level]
            node.quarantined = True
        return node


class InvalidTargetError(ValueError):
    """Action targeted a node/PLC of an invalid kind or status."""


def build_network(config: NetworkConfig) -> NetworkState:
    """Construct the device graph and all nodes/PLCs from a validated config.

    All nodes start uncompromised (the beachhead is injected at episode
    reset); IPs are deterministic from (level, vlan, index).
    """
    config.validate()
    nodes: dict[int, Node] = {}
    devices: dict[int, Device] = {}
    vlan_switch: dict[int, int] = {}
    level_router: dict[int, int] = {}
    level_firewall: dict[int, int] = {}
    quarantine_vlans: dict[int, int] = {}
    vlan_level: dict[int, int] = {}
    adj: dict[int, list[int]] = {}

    def add_device(kind: DeviceKind, level: int, vlan_id: int | None = None) -> int:
        did = len(devices)
        devices[did] = Device(
            id=did, kind=kind, level=level,
            ip=f"172.16.{level}.{did + 1}", vlan_id=vlan_id,
        )
        adj[did] = []
        return did

    def connect(a: int, b: int) -> None:
        adj[a].append(b)
        adj[b].append(a)

    node_id = 0
    for lc in sorted(config.levels, key=lambda c: -c.level):
        router = add_device(DeviceKind.ROUTER, lc.level)
        level_router[lc.level] = router
        fw = add_device(DeviceKind.FIREWALL, lc.level)
        level_firewall[lc.level] = fw
        connect(router, fw)
        quarantine_vlans[lc.level] = lc.quarantine_vlan
        vlans = [v.id for v in lc.vlans] + [lc.quarantine_vlan]
        if config.plcs.count > 0 and lc.level == 1:
            vlans.insert(len(lc.vlans), config.plcs.vlan)
        for vid in vlans:
            sw = add_device(DeviceKind.SWITCH, lc.level, vlan_id=vid)
            vlan_switch[vid] = sw
            vlan_level[vid] = lc.level
            connect(sw, router)
        for v in lc.vlans:
            idx = 1
            for group in v.nodes:
                for _ in range(group.count):
                    nodes[node_id] = Node(
                        id=node_id,
                        kind=NodeKind(group.kind),
                        level=lc.level,
                        vlan_id=v.id,
                        home_vlan_id=v.id,
                        ip=f"10.{lc.level}.{v.id}.{idx}",
                    )
                    node_id += 1
                    idx += 1

    # routers of adjacent levels connect through a dedicated firewall
    levels_sorted = sorted(level_router)
    inter_firewalls: dict[tuple[int, int], int] = {}
    for low, high in zip(levels_sorted, levels_sorted[1:]):
        fw = add_device(DeviceKind.FIREWALL, high)
        inter_firewalls[(low, high)] = fw
        connect(level_router[high], fw)
        connect(fw, level_router[low])

    plcs = {
        i: Plc(id=i, vlan_id=config.plcs.vlan) for i in range(config.plcs.count)
    }

    ips = [n.ip for n in nodes.values()] + [d.ip for d in devices.values()]
    if len(ips) != len(set(ips)):
        raise ConfigError("ip assignment produced duplicates")

    return NetworkState(
        config=config,
        nodes=nodes,
        plcs=plcs,
        devices=devices,
        vlan_switch=vlan_switch,
        level_router=level_router,
        level_firewall=level_firewall,
        inter_firewalls=inter_firewalls,
        quarantine_vlans=quarantine_vlans,
        vlan_level=vlan_level,
        _adj=adj,
    )
