"""Episode/experiment runner: metrics, perturbation sweeps, DBN episode logs,
and CSV persistence."""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import dbn as dbn_mod
from .config import NetworkConfig, load_config
from .dbn import ACTION_CLASSES, BeliefFilter, Cpts, EpisodeLog
from .engine import EpisodeState, StepResult, compromised_split, reset, step_hour
from .netmodel import PlcStatus, state_index
from .policies import DeviceView, NodeView, Policy, PolicyView, make_policy

logger = logging.getLogger(__name__)

METRICS_COLUMNS = (
    "policy", "episodes",
    "return_mean", "return_se",
    "plcs_offline_mean", "plcs_offline_se",
    "it_cost_mean", "it_cost_se",
    "compromised_mean", "compromised_se",
)


@dataclass
class EpisodeMetrics:
    discounted_return: float
    final_plcs_offline: int
    avg_it_cost: float
    avg_nodes_compromised: float


@dataclass
class ExperimentResult:
    policy: str
    episodes: int
    return_mean: float
    return_se: float
    plcs_offline_mean: float
    plcs_offline_se: float
    it_cost_mean: float
    it_cost_se: float
    compromised_mean: float
    compromised_se: float

    def row(self) -> dict:
        return asdict(self)


def _mean_se(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return mean, se


def build_view(state: EpisodeState, beliefs: np.ndarray | None) -> PolicyView:
    net = state.net
    return PolicyView(
        clock=state.clock,
        nodes=[
            NodeView(
                id=n.id, kind=n.kind, level=n.level, vlan_id=n.vlan_id,
                quarantined=n.quarantined, online=n.online(state.clock), ip=n.ip,
            )
            for n in net.computing_nodes
        ],
        devices=[
            DeviceView(ip=d.ip, kind=d.kind, level=d.level, vlan_id=d.vlan_id)
            for d in net.devices.values()
        ],
        plc_status={pid: net.plcs[pid].status for pid in sorted(net.plcs)},
        beliefs=beliefs,
    )


def observation_arrays(state: EpisodeState, result: StepResult) -> tuple[np.ndarray, np.ndarray]:
    """(action_classes, obs_symbols) per node for DBN consumption."""
    n = len(state.net.nodes)
    classes = np.zeros(n, dtype=np.int16)
    symbols = np.zeros(n, dtype=np.int16)
    for inst in result.completed:
        if inst.action in ACTION_CLASSES and isinstance(inst.target, int):
            if inst.target < n and inst.action.value not in ("reset_plc", "replace_plc"):
                classes[inst.target] = ACTION_CLASSES[inst.action]
    for node_id, obs in result.node_obs.items():
        symbols[node_id] = obs.symbol
    return classes, symbols


def run_episode(
    policy: str | Policy,
    config: NetworkConfig | str | dict | None,
    seed: int,
    cpts: Cpts | None = None,
    collect_log: bool = False,
) -> tuple[EpisodeMetrics, EpisodeLog | None]:
    """One full episode. Metrics use the task reward only; the optional log
    holds the per-hour records the DBN learns from."""
    config = load_config(config)
    state, _ = reset(config, seed)
    if isinstance(policy, str):
        policy_obj = make_policy(policy, config, np.random.default_rng([seed, 1000003]))
    else:
        policy_obj = policy
    policy_obj.reset()

    filt = None
    if policy_obj.requires_beliefs:
        filt = BeliefFilter(cpts if cpts is not None else dbn_mod.load_default_cpts(),
                            len(state.net.nodes))

    t_max = config.reward.t_max
    n_nodes = len(state.net.nodes)
    log = None
    if collect_log:
        log = EpisodeLog(
            states=np.zeros((t_max + 1, n_nodes), dtype=np.int16),
            action_classes=np.zeros((t_max + 1, n_nodes), dtype=np.int16),
            obs=np.zeros((t_max + 1, n_nodes), dtype=np.int16),
            mu=np.zeros(t_max + 1, dtype=np.int16),
        )
        for node in state.net.computing_nodes:
            log.states[0, node.id] = state_index(node.flags)
        w, s = compromised_split(state.net)
        log.mu[0] = dbn_mod.mu_bin(w + s)

    gamma = config.reward.gamma
    discounted_return = 0.0
    it_costs = []
    compromised_counts = []
    result: StepResult | None = None
    t = 0
    while not state.done:
        view = build_view(state, filt.beliefs if filt is not None else None)
        actions = policy_obj.act(result, view)
        result = step_hour(state, actions)
        t = result.t
        discounted_return += gamma ** (t - 1) * result.reward.total_task
        it_costs.append(1.0 - result.reward.r_it)
        w, s = compromised_split(state.net)
        compromised_counts.append(w + s)
        classes = symbols = None
        if filt is not None or log is not None:
            classes, symbols = observation_arrays(state, result)
        if filt is not None:
            filt.update(classes, symbols)
        if log is not None:
            for node in state.net.computing_nodes:
                log.states[t, node.id] = state_index(node.flags)
            log.action_classes[t] = classes
            log.obs[t] = symbols
            log.mu[t] = dbn_mod.mu_bin(w + s)

    if log is not None and t < t_max:
        log.states = log.states[: t + 1]
        log.action_classes = log.action_classes[: t + 1]
        log.obs = log.obs[: t + 1]
        log.mu = log.mu[: t + 1]

    offline = sum(
        1 for p in state.net.plcs.values() if p.status != PlcStatus.NOMINAL
    )
    metrics = EpisodeMetrics(
        discounted_return=discounted_return,
        final_plcs_offline=offline,
        avg_it_cost=float(np.mean(it_costs)) if it_costs else 0.0,
        avg_nodes_compromised=float(np.mean(compromised_counts)) if compromised_counts else 0.0,
    )
    return metrics, log


def _episode_task(args) -> tuple[int, EpisodeMetrics, EpisodeLog | None]:
    policy, config, seed, cpts, collect_log, log_dir = args
    metrics, log = run_episode(policy, config, seed, cpts=cpts, collect_log=collect_log)
    if log is not None and log_dir is not None:
        Path(log_dir).mkdir(parents=True, exist_ok=True)
        log.to_jsonl(Path(log_dir) / f"episode_{seed}.jsonl.gz")
        log = None
    return seed, metrics, log


def run_episodes(
    policy: str,
    config: NetworkConfig | str | dict | None,
    n: int,
    seed0: int,
    cpts: Cpts | None = None,
    collect_logs: bool = False,
    log_dir: str | Path | None = None,
    workers: int | None = None,
) -> tuple[list[EpisodeMetrics], list[EpisodeLog]]:
    """n episodes at seeds seed0..seed0+n-1, optionally in parallel; results
    are gathered in seed order so aggregation is order-independent."""
    config = load_config(config)
    if cpts is None and make_policy(policy, config, np.random.default_rng(0)).requires_beliefs:
        cpts = dbn_mod.load_default_cpts()
    tasks = [
        (policy, config, seed0 + i, cpts, collect_logs, log_dir) for i in range(n)
    ]
    if workers is None:
        workers = min(n, os.cpu_count() or 1)
    results: dict[int, tuple[EpisodeMetrics, EpisodeLog | None]] = {}
    if workers <= 1 or n == 1:
        for task in tasks:
            seed, metrics, log = _episode_task(task)
            results[seed] = (metrics, log)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for seed, metrics, log in pool.map(_episode_task, tasks):
                results[seed] = (metrics, log)
    ordered = [results[seed0 + i] for i in range(n)]
    metrics = [m for m, _ in ordered]
    logs = [lg for _, lg in ordered if lg is not None]
    return metrics, logs


def aggregate(policy: str, metrics: list[EpisodeMetrics]) -> ExperimentResult:
    ret = _mean_se([m.discounted_return for m in metrics])
    plc = _mean_se([float(m.final_plcs_offline) for m in metrics])
    cost = _mean_se([m.avg_it_cost for m in metrics])
    comp = _mean_se([m.avg_nodes_compromised for m in metrics])
    return ExperimentResult(
        policy=policy, episodes=len(metrics),
        return_mean=ret[0], return_se=ret[1],
        plcs_offline_mean=plc[0], plcs_offline_se=plc[1],
        it_cost_mean=cost[0], it_cost_se=cost[1],
        compromised_mean=comp[0], compromised_se=comp[1],
    )


def run_experiment(
    policy: str,
    config: NetworkConfig | str | dict | None,
    n: int,
    seed0: int,
    cpts: Cpts | None = None,
    log_dir: str | Path | None = None,
    workers: int | None = None,
) -> ExperimentResult:
    metrics, _ = run_episodes(
        policy, config, n, seed0, cpts=cpts,
        collect_logs=log_dir is not None, log_dir=log_dir, workers=workers,
    )
    result = aggregate(policy, metrics)
    logger.info("experiment %s x%d: return %.2f±%.2f it_cost %.3f",
                policy, n, result.return_mean, result.return_se, result.it_cost_mean)
    return result


def write_metrics_csv(path: str | Path, results: list[ExperimentResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_COLUMNS)
        writer.writeheader()
        for res in results:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in res.row().items()})


SWEEP_PARAMS = ("cleanup_effectiveness", "apt_preset")


def sweep(
    param: str,
    values: list,
    policies: list[str],
    config: NetworkConfig | str | dict | None,
    n: int,
    seed0: int,
    cpts: Cpts | None = None,
    workers: int | None = None,
) -> list[dict]:
    """Grid of experiments in long format (one row per (value, policy))."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")
    base = load_config(config)
    rows = []
    for value in values:
        cfg = load_config(config)  # fresh copy per cell
        if param == "cleanup_effectiveness":
            cfg.apt.cleanup_effectiveness = float(value)
        else:
            cfg.apt.preset = str(value)
        for policy in policies:
            result = run_experiment(policy, cfg, n, seed0, cpts=cpts, workers=workers)
            row = {"param": param, "value": value, **result.row()}
            rows.append(row)
    del base
    return rows


def write_sweep_csv(path: str | Path, rows: list[dict]) -> None:
    fieldnames = ["param", "value", *METRICS_COLUMNS]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in row.items()})


def learn_from_log_dir(log_dir: str | Path, alpha: float = 1.0) -> Cpts:
    paths = sorted(Path(log_dir).glob("episode_*.jsonl*"))
    if not paths:
        raise ValueError(f"no episode logs found in {log_dir}")
    return dbn_mod.learn_tables((EpisodeLog.from_jsonl(p) for p in paths), alpha=alpha)


def validate_from_log_dir(log_dir: str | Path, cpts: Cpts) -> dbn_mod.KlReport:
    paths = sorted(Path(log_dir).glob("episode_*.jsonl*"))
    if not paths:
        raise ValueError(f"no episode logs found in {log_dir}")
    return dbn_mod.validate_kl((EpisodeLog.from_jsonl(p) for p in paths), cpts)
