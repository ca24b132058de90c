"""Simulation configuration: dataclasses, JSON loading, and shipped presets."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path


class ConfigError(ValueError):
    """Malformed configuration; message names the offending field."""


@dataclass
class NodeGroup:
    kind: str
    count: int


@dataclass
class VlanConfig:
    id: int
    nodes: list[NodeGroup]


@dataclass
class LevelConfig:
    level: int
    vlans: list[VlanConfig]
    quarantine_vlan: int


@dataclass
class PlcConfig:
    count: int
    vlan: int


@dataclass
class IdsConfig:
    passive_alert_rate: float = 0.1
    # false alert probability per level per hour, keyed by severity
    false_alert_rates: dict[int, float] = field(
        default_factory=lambda: {1: 5e-2, 2: 5e-3, 3: 2.5e-3}
    )
    device_factors: dict[str, float] = field(
        default_factory=lambda: {"switch": 1.0, "router": 2.0, "firewall": 5.0}
    )


@dataclass
class ReentryConfig:
    enabled: bool = True
    mean_hours: float = 168.0


@dataclass
class AptConfig:
    enabled: bool = True
    preset: str = "apt1"
    objective: str = "random"  # disrupt | destroy | random
    vector: str = "random"     # opc_server | level1_hmi | random
    cleanup_effectiveness: float = 0.5
    labor_budget: float | None = None       # None -> preset value
    lateral_threshold: int | None = None
    plc_threshold_destroy: int | None = None
    plc_threshold_disrupt: int | None = None
    plcs_per_discovery: int = 5
    reentry: ReentryConfig = field(default_factory=ReentryConfig)


@dataclass
class ShapingConfig:
    a: float = 1.0
    b: float = 2.0
    weight: float = 1000.0
    form: str = "potential"  # potential | literal


@dataclass
class RewardConfig:
    lam: float = 0.1
    gamma: float = 0.9995
    t_max: int = 5000
    shaping: ShapingConfig = field(default_factory=ShapingConfig)


@dataclass
class DefenderConfig:
    """Cost and duration tables; (workstation, server) costs where split."""

    costs: dict[str, tuple[float, float]] = field(default_factory=lambda: {
        "simple_scan": (0.01, 0.01),
        "advanced_scan": (0.03, 0.03),
        "human_analysis": (0.05, 0.05),
        "reboot": (0.01, 0.03),
        "reset_password": (0.03, 0.05),
        "reimage": (0.05, 0.10),
        "quarantine": (0.03, 0.03),
        "reset_plc": (0.02, 0.02),
        "replace_plc": (0.04, 0.04),
        "noop": (0.0, 0.0),
    })
    durations: dict[str, int] = field(default_factory=lambda: {
        "simple_scan": 2,
        "advanced_scan": 8,
        "human_analysis": 8,
        "reboot": 1,
        "reset_password": 1,
        "reimage": 8,
        "quarantine": 1,
        "reset_plc": 1,
        "replace_plc": 24,
        "noop": 0,
    })
    detect_probs: dict[str, float] = field(default_factory=lambda: {
        "simple_scan": 0.03,
        "advanced_scan": 0.05,
        "human_analysis": 0.5,
    })


@dataclass
class RandomPolicyConfig:
    # Poisson mean actions/hour, calibrated so avg IT cost lands near 0.6
    rate: float = 30.0
    type_distribution: dict[str, float] = field(default_factory=lambda: {
        "simple_scan": 0.20,
        "advanced_scan": 0.10,
        "human_analysis": 0.05,
        "reboot": 0.04,
        "reset_password": 0.01,
        "reimage": 0.005,
        "quarantine": 0.545,
        "noop": 0.05,
    })
    plc_repair_rate: float = 0.05


@dataclass
class PlaybookPolicyConfig:
    host_ladder: list[str] = field(
        default_factory=lambda: ["reboot", "reset_password", "reimage"]
    )
    server_ladder: list[str] = field(default_factory=lambda: ["reboot", "reimage"])
    severity3_entry: int = 1   # ladder rung index for severity-3 alerts
    scan_action: str = "advanced_scan"     # triage scan opening a COA
    verify_action: str = "human_analysis"  # verification after a mitigation
    sweep_vlan: bool = True    # scan the implicated VLAN's other nodes on any alert
    sweep_action: str = "advanced_scan"
    sweep_on_detection: bool = True


@dataclass
class ExpertPolicyConfig:
    theta: float = 0.5
    theta_investigate: float = 0.1
    investigate_action: str = "human_analysis"


@dataclass
class PoliciesConfig:
    random: RandomPolicyConfig = field(default_factory=RandomPolicyConfig)
    playbook: PlaybookPolicyConfig = field(default_factory=PlaybookPolicyConfig)
    expert: ExpertPolicyConfig = field(default_factory=ExpertPolicyConfig)


@dataclass
class SimConfig:
    end_on_all_plcs_destroyed: bool = False


@dataclass
class NetworkConfig:
    levels: list[LevelConfig]
    plcs: PlcConfig
    ids: IdsConfig = field(default_factory=IdsConfig)
    apt: AptConfig = field(default_factory=AptConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    defender: DefenderConfig = field(default_factory=DefenderConfig)
    policies: PoliciesConfig = field(default_factory=PoliciesConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    def validate(self) -> None:
        if not self.levels:
            raise ConfigError("levels: at least one level required")
        seen_vlans: set[int] = set()
        levels = {lc.level for lc in self.levels}
        for lc in self.levels:
            if lc.level not in (1, 2):
                raise ConfigError(f"levels[].level: unsupported level {lc.level}")
            if lc.quarantine_vlan is None:
                raise ConfigError(f"levels[{lc.level}].quarantine_vlan: missing")
            for v in lc.vlans + [VlanConfig(lc.quarantine_vlan, [])]:
                if v.id in seen_vlans:
                    raise ConfigError(f"vlans: duplicate VLAN id {v.id}")
                seen_vlans.add(v.id)
            for v in lc.vlans:
                for g in v.nodes:
                    if g.count < 0:
                        raise ConfigError(f"vlan {v.id} kind {g.kind}: negative count")
                    if g.kind not in NODE_KINDS:
                        raise ConfigError(f"vlan {v.id}: unknown node kind {g.kind!r}")
                    if g.kind == "hmi_workstation" and lc.level != 1:
                        raise ConfigError("hmi_workstation only allowed on level 1")
                    if g.kind in SERVER_KINDS and lc.level != 2:
                        raise ConfigError(f"{g.kind} only allowed on level 2")
        if self.plcs.count < 0:
            raise ConfigError("plcs.count: negative")
        if self.plcs.count > 0:
            if 1 not in levels:
                raise ConfigError("plcs: level 1 required when plcs.count > 0")
            if self.plcs.vlan in seen_vlans:
                raise ConfigError(f"plcs.vlan: duplicate VLAN id {self.plcs.vlan}")
        for sev, rate in self.ids.false_alert_rates.items():
            if not 0.0 <= rate <= 1.0:
                raise ConfigError(f"ids.false_alert_rates[{sev}]: out of [0,1]")
        if not 0.0 <= self.ids.passive_alert_rate <= 1.0:
            raise ConfigError("ids.passive_alert_rate: out of [0,1]")
        if not 0.0 <= self.apt.cleanup_effectiveness <= 1.0:
            raise ConfigError("apt.cleanup_effectiveness: out of [0,1]")
        if not 0.0 < self.reward.gamma < 1.0:
            raise ConfigError("reward.gamma: must be in (0,1)")


NODE_KINDS = (
    "workstation",
    "hmi_workstation",
    "opc_server",
    "historian_server",
    "domain_controller",
)
SERVER_KINDS = ("opc_server", "historian_server", "domain_controller")
WORKSTATION_KINDS = ("workstation", "hmi_workstation")


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def config_from_dict(raw: dict) -> NetworkConfig:
    try:
        levels = [
            LevelConfig(
                level=int(lc["level"]),
                vlans=[
                    VlanConfig(
                        id=int(v["id"]),
                        nodes=[NodeGroup(str(g["kind"]), int(g["count"])) for g in v["nodes"]],
                    )
                    for v in lc["vlans"]
                ],
                quarantine_vlan=int(lc["quarantine_vlan"]),
            )
            for lc in raw["levels"]
        ]
        plcs = PlcConfig(count=int(raw["plcs"]["count"]), vlan=int(raw["plcs"]["vlan"]))
    except KeyError as exc:
        raise ConfigError(f"missing required field: {exc.args[0]}") from exc

    cfg = NetworkConfig(levels=levels, plcs=plcs)

    ids = raw.get("ids", {})
    if "passive_alert_rate" in ids:
        cfg.ids.passive_alert_rate = float(ids["passive_alert_rate"])
    if "false_alert_rates" in ids:
        cfg.ids.false_alert_rates = {int(k): float(v) for k, v in ids["false_alert_rates"].items()}
    if "device_factors" in ids:
        cfg.ids.device_factors.update({k: float(v) for k, v in ids["device_factors"].items()})

    apt = raw.get("apt", {})
    for key in ("enabled", "preset", "objective", "vector", "plcs_per_discovery"):
        if key in apt:
            setattr(cfg.apt, key, apt[key])
    for key in ("cleanup_effectiveness", "labor_budget"):
        if key in apt and apt[key] is not None:
            setattr(cfg.apt, key, float(apt[key]))
    for key in ("lateral_threshold", "plc_threshold_destroy", "plc_threshold_disrupt"):
        if key in apt and apt[key] is not None:
            setattr(cfg.apt, key, int(apt[key]))
    if "reentry" in apt:
        cfg.apt.reentry = ReentryConfig(
            enabled=bool(apt["reentry"].get("enabled", True)),
            mean_hours=float(apt["reentry"].get("mean_hours", 168.0)),
        )

    rew = raw.get("reward", {})
    if "lambda" in rew:
        cfg.reward.lam = float(rew["lambda"])
    for key in ("gamma", "t_max"):
        if key in rew:
            setattr(cfg.reward, key, type(getattr(cfg.reward, key))(rew[key]))
    if "shaping" in rew:
        sh = rew["shaping"]
        cfg.reward.shaping = ShapingConfig(
            a=float(sh.get("a", 1.0)),
            b=float(sh.get("b", 2.0)),
            weight=float(sh.get("weight", 1000.0)),
            form=str(sh.get("form", "potential")),
        )

    dfn = raw.get("defender", {})
    if "costs" in dfn:
        for k, v in dfn["costs"].items():
            cfg.defender.costs[k] = (float(v[0]), float(v[1])) if isinstance(v, (list, tuple)) else (float(v), float(v))
    if "durations" in dfn:
        cfg.defender.durations.update({k: int(v) for k, v in dfn["durations"].items()})
    if "detect_probs" in dfn:
        cfg.defender.detect_probs.update({k: float(v) for k, v in dfn["detect_probs"].items()})

    pol = raw.get("policies", {})
    if "random" in pol:
        rp = pol["random"]
        if "rate" in rp:
            cfg.policies.random.rate = float(rp["rate"])
        if "type_distribution" in rp:
            cfg.policies.random.type_distribution = {k: float(v) for k, v in rp["type_distribution"].items()}
        if "plc_repair_rate" in rp:
            cfg.policies.random.plc_repair_rate = float(rp["plc_repair_rate"])
    if "playbook" in pol:
        pb = pol["playbook"]
        for key in ("host_ladder", "server_ladder", "severity3_entry", "scan_action", "sweep_vlan", "sweep_action"):
            if key in pb:
                setattr(cfg.policies.playbook, key, pb[key])
    if "expert" in pol:
        ex = pol["expert"]
        for key in ("theta", "theta_investigate"):
            if key in ex:
                setattr(cfg.policies.expert, key, float(ex[key]))
        if "investigate_action" in ex:
            cfg.policies.expert.investigate_action = str(ex["investigate_action"])

    sim = raw.get("sim", {})
    if "end_on_all_plcs_destroyed" in sim:
        cfg.sim.end_on_all_plcs_destroyed = bool(sim["end_on_all_plcs_destroyed"])

    cfg.validate()
    return cfg


def load_config(source: str | Path | dict | NetworkConfig | None = None) -> NetworkConfig:
    """Load a config from a preset name, a JSON file path, an inline dict, or None (default)."""
    if source is None:
        source = "default"
    if isinstance(source, NetworkConfig):
        return source
    if isinstance(source, dict):
        return config_from_dict(source)
    name = str(source)
    if name in list_presets():
        text = resources.files("icssim.data").joinpath(f"{name}.json").read_text()
        return config_from_dict(json.loads(text))
    path = Path(name)
    if not path.exists():
        raise ConfigError(f"config source not found: {name}")
    return config_from_dict(json.loads(path.read_text()))


def list_presets() -> list[str]:
    out = []
    for entry in resources.files("icssim.data").iterdir():
        if entry.name.endswith(".json"):
            out.append(entry.name[: -len(".json")])
    return sorted(out)
