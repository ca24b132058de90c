"""Dynamic-Bayes-network belief filter: table learning from episode logs and
the recursive per-node update with summary-statistic conditioning."""

from __future__ import annotations

import gzip
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .netmodel import COMPROMISE_STATES, N_STATES
from .orchestrator import DefenderAction

# observation symbol = investigation_outcome * 4 + max_alert_severity
N_OBS = 12
OUTCOME_NOT_RUN, OUTCOME_NO_DETECT, OUTCOME_DETECTED = 0, 1, 2

# combined defender action classes, one per log record
ACTION_CLASSES = {
    None: 0,
    DefenderAction.NOOP: 0,
    DefenderAction.SIMPLE_SCAN: 1,
    DefenderAction.ADVANCED_SCAN: 2,
    DefenderAction.HUMAN_ANALYSIS: 3,
    DefenderAction.REBOOT: 4,
    DefenderAction.RESET_PASSWORD: 5,
    DefenderAction.REIMAGE: 6,
    DefenderAction.QUARANTINE: 7,
    DefenderAction.RESET_PLC: 0,
    DefenderAction.REPLACE_PLC: 0,
}
N_ACTION_CLASSES = 8
# projections: transitions condition on the mitigation part, observations on
# the investigation part
MIT_PROJECTION = np.array([0, 0, 0, 0, 1, 2, 3, 4])
INV_PROJECTION = np.array([0, 1, 2, 3, 0, 0, 0, 0])
N_MIT, N_INV = 5, 4

MU_EDGES = (0.5, 2.5, 5.5)
N_MU = 4

# belief mass counted as "compromised": states with initial_compromise
IC_MASK = np.array([f.initial_compromise for f in COMPROMISE_STATES])


def mu_bin(expected_compromised: float) -> int:
    for i, edge in enumerate(MU_EDGES):
        if expected_compromised < edge:
            return i
    return len(MU_EDGES)


@dataclass
class Cpts:
    """Learned conditional probability tables plus the marginal state prior.

    transition: P(s' | s, mu, a_mit), shape (S, N_MU, N_MIT, S)
    observation: P(o | s', a_inv), shape (S, N_INV, O)
    """

    transition: np.ndarray
    observation: np.ndarray
    prior: np.ndarray
    version: int = 1

    def __post_init__(self):
        t, o = self.transition, self.observation
        if t.shape != (t.shape[0], N_MU, N_MIT, t.shape[0]):
            raise ValueError(f"bad transition shape {t.shape}")
        if o.shape[0] != t.shape[0] or o.ndim != 3:
            raise ValueError(f"bad observation shape {o.shape}")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    def save(self, path: str | Path) -> None:
        np.savez(
            path,
            transition=self.transition,
            observation=self.observation,
            prior=self.prior,
            version=np.array([self.version]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "Cpts":
        with np.load(path) as data:
            return cls(
                transition=data["transition"],
                observation=data["observation"],
                prior=data["prior"],
                version=int(data["version"][0]),
            )

    @classmethod
    def uninformed(cls, n_states: int = N_STATES, n_obs: int = N_OBS) -> "Cpts":
        """Flat tables: identity-leaning transition, uniform observations."""
        transition = np.full((n_states, N_MU, N_MIT, n_states), 1.0 / n_states)
        observation = np.full((n_states, N_INV, n_obs), 1.0 / n_obs)
        prior = np.full(n_states, 1.0 / n_states)
        return cls(transition=transition, observation=observation, prior=prior)


@dataclass
class EpisodeLog:
    """Per-hour, per-node records of one episode, as parallel arrays.

    Row t holds the state after step t (row 0 is the reset state), the
    defender action class completing at t, the observation symbol at t, and
    the mu bin of the true compromised count at t.
    """

    states: np.ndarray          # (T+1, N) int
    action_classes: np.ndarray  # (T+1, N) int
    obs: np.ndarray             # (T+1, N) int
    mu: np.ndarray              # (T+1,) int

    def to_jsonl(self, path: str | Path) -> None:
        opener = gzip.open if str(path).endswith(".gz") else open
        with opener(path, "wt") as fh:
            t_len, n = self.states.shape
            for t in range(t_len):
                for node in range(n):
                    fh.write(json.dumps({
                        "t": int(t),
                        "node": int(node),
                        "state": int(self.states[t, node]),
                        "action_class": int(self.action_classes[t, node]),
                        "obs": int(self.obs[t, node]),
                        "mu": int(self.mu[t]),
                    }) + "\n")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "EpisodeLog":
        opener = gzip.open if str(path).endswith(".gz") else open
        rows = []
        with opener(path, "rt") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rows.append(json.loads(line))
        if not rows:
            raise ValueError(f"empty episode log {path}")
        t_len = max(r["t"] for r in rows) + 1
        n = max(r["node"] for r in rows) + 1
        states = np.zeros((t_len, n), dtype=np.int16)
        action_classes = np.zeros((t_len, n), dtype=np.int16)
        obs = np.zeros((t_len, n), dtype=np.int16)
        mu = np.zeros(t_len, dtype=np.int16)
        for r in rows:
            t, node = r["t"], r["node"]
            states[t, node] = r["state"]
            action_classes[t, node] = r["action_class"]
            obs[t, node] = r["obs"]
            mu[t] = r["mu"]
        return cls(states=states, action_classes=action_classes, obs=obs, mu=mu)


def learn_tables(
    logs,
    n_states: int = N_STATES,
    n_obs: int = N_OBS,
    alpha: float = 1.0,
) -> Cpts:
    """Maximum-likelihood tables with Laplace smoothing from episode logs.

    Transition counts pair consecutive hours per node, conditioning on the
    source hour's mu bin and the mitigation class completing at the target
    hour. Observation counts use the same hour's state and investigation
    class; row 0 (the reset state) seeds transitions only.
    """
    trans_counts = np.zeros((n_states, N_MU, N_MIT, n_states))
    obs_counts = np.zeros((n_states, N_INV, n_obs))
    prior_counts = np.zeros(n_states)
    n_logs = 0
    for log in logs:
        n_logs += 1
        s, a, o, mu = log.states, log.action_classes, log.obs, log.mu
        s_src = s[:-1].ravel()
        s_dst = s[1:].ravel()
        mu_src = np.repeat(mu[:-1], s.shape[1])
        a_mit = MIT_PROJECTION[a[1:].ravel()]
        np.add.at(trans_counts, (s_src, mu_src, a_mit, s_dst), 1)
        s_now = s[1:].ravel()
        a_inv = INV_PROJECTION[a[1:].ravel()]
        o_now = o[1:].ravel()
        np.add.at(obs_counts, (s_now, a_inv, o_now), 1)
        np.add.at(prior_counts, s.ravel(), 1)
    if n_logs == 0:
        raise ValueError("empty log stream")
    transition = (trans_counts + alpha) / (trans_counts + alpha).sum(axis=-1, keepdims=True)
    observation = (obs_counts + alpha) / (obs_counts + alpha).sum(axis=-1, keepdims=True)
    prior = (prior_counts + alpha) / (prior_counts + alpha).sum()
    return Cpts(transition=transition, observation=observation, prior=prior)


def belief_update(
    belief: np.ndarray,
    action_class: int,
    obs_symbol: int,
    mu: int,
    cpts: Cpts,
) -> tuple[np.ndarray, bool]:
    """One recursive Bayes update; returns (posterior, degenerate) where
    degenerate marks an all-zero likelihood handled by prediction only."""
    a_mit = int(MIT_PROJECTION[action_class])
    a_inv = int(INV_PROJECTION[action_class])
    predicted = belief @ cpts.transition[:, mu, a_mit, :]
    likelihood = cpts.observation[:, a_inv, obs_symbol]
    posterior = predicted * likelihood
    total = posterior.sum()
    if total <= 0.0:
        pred_total = predicted.sum()
        return predicted / pred_total if pred_total > 0 else belief.copy(), True
    return posterior / total, False


def summary(beliefs: np.ndarray) -> int:
    """mu bin of the expected number of compromised nodes under beliefs."""
    mask = IC_MASK if beliefs.shape[1] == N_STATES else np.arange(beliefs.shape[1]) > 0
    return mu_bin(float(beliefs[:, mask].sum()))


class BeliefFilter:
    """Per-node beliefs for one episode; cpts are immutable and shareable."""

    def __init__(self, cpts: Cpts, n_nodes: int):
        self.cpts = cpts
        self.n_nodes = n_nodes
        self.beliefs = np.zeros((n_nodes, cpts.n_states))
        self.beliefs[:, 0] = 1.0
        self.degenerate_updates = 0

    def update(self, action_classes: np.ndarray, obs_symbols: np.ndarray) -> np.ndarray:
        mu = summary(self.beliefs)
        t = self.cpts.transition[:, mu, :, :]
        a_mit = MIT_PROJECTION[action_classes]
        a_inv = INV_PROJECTION[action_classes]
        predicted = np.einsum("ns,nst->nt", self.beliefs, t[:, a_mit, :].transpose(1, 0, 2))
        likelihood = self.cpts.observation[:, a_inv, obs_symbols].T
        posterior = predicted * likelihood
        totals = posterior.sum(axis=1, keepdims=True)
        degenerate = totals[:, 0] <= 0.0
        if degenerate.any():
            self.degenerate_updates += int(degenerate.sum())
            pred_totals = predicted.sum(axis=1, keepdims=True)
            posterior[degenerate] = predicted[degenerate]
            totals = np.where(degenerate[:, None], pred_totals, totals)
        self.beliefs = posterior / totals
        return self.beliefs


@dataclass
class KlReport:
    dbn_mean: float
    dbn_max: float
    static_mean: float
    static_max: float
    node_hours: int


def validate_kl(held_out_logs, cpts: Cpts) -> KlReport:
    """Mean/max KL(point-mass truth || belief) per node-hour, for the learned
    filter and for a static-prior baseline using the training marginal."""
    dbn_kl: list[np.ndarray] = []
    static_kl: list[np.ndarray] = []
    log_prior = -np.log(np.maximum(cpts.prior, 1e-300))
    for log in held_out_logs:
        filt = BeliefFilter(cpts, log.states.shape[1])
        for t in range(1, log.states.shape[0]):
            beliefs = filt.update(log.action_classes[t], log.obs[t])
            truth = log.states[t]
            picked = beliefs[np.arange(len(truth)), truth]
            dbn_kl.append(-np.log(np.maximum(picked, 1e-300)))
            static_kl.append(log_prior[truth])
    dbn = np.concatenate(dbn_kl)
    static = np.concatenate(static_kl)
    return KlReport(
        dbn_mean=float(dbn.mean()),
        dbn_max=float(dbn.max()),
        static_mean=float(static.mean()),
        static_max=float(static.max()),
        node_hours=int(dbn.size),
    )


def load_default_cpts() -> Cpts:
    """Shipped tables learned from random-policy episodes on the default net."""
    from importlib import resources

    ref = resources.files("icssim.data").joinpath("cpts.npz")
    with resources.as_file(ref) as path:
        if not Path(path).exists():
            raise FileNotFoundError(
                "packaged cpts.npz missing; run `icssim learn-dbn` to create one"
            )
        return Cpts.load(path)
