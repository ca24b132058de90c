"""Task reward, potential-based shaping, and closed-form return bounds."""

from __future__ import annotations

from dataclasses import dataclass

from .config import RewardConfig


@dataclass(frozen=True)
class RewardBreakdown:
    r_plc: float
    r_it: float
    r_term: float
    r_shape: float
    shaping_weight: float

    @property
    def total_task(self) -> float:
        return self.r_plc + self.lam * self.r_it + self.r_term

    # lam is carried alongside so the breakdown is self-contained
    lam: float = 0.1

    @property
    def total_train(self) -> float:
        return self.total_task + self.shaping_weight * self.r_shape


def step_reward(
    n_disrupted: int,
    n_destroyed: int,
    completed_cost: float,
    t: int,
    cfg: RewardConfig,
    r_shape: float = 0.0,
) -> RewardBreakdown:
    """Per-step reward: PLC health, IT disruption from actions completing at
    t, and the terminal bonus at the episode time limit."""
    r_plc = 1.0 - 0.05 * n_disrupted - 0.1 * n_destroyed
    r_it = 1.0 - completed_cost
    r_term = (1.0 / (1.0 - cfg.gamma)) if t >= cfg.t_max else 0.0
    return RewardBreakdown(
        r_plc=r_plc, r_it=r_it, r_term=r_term, r_shape=r_shape,
        shaping_weight=cfg.shaping.weight, lam=cfg.lam,
    )


def potential(compromised_workstations: int, compromised_servers: int, a: float, b: float) -> float:
    return -(a * compromised_workstations + b * compromised_servers)


def shaping_reward(
    before: tuple[int, int],
    after: tuple[int, int],
    cfg: RewardConfig,
) -> float:
    """Shaping between consecutive states given (workstations, servers)
    compromised counts. The default potential form gamma*phi(s')-phi(s) is
    unbiased and telescopes exactly; the literal form gamma*(A*dW + B*dS)
    is available behind the config switch."""
    a, b = cfg.shaping.a, cfg.shaping.b
    if cfg.shaping.form == "literal":
        d_w = before[0] - after[0]
        d_s = before[1] - after[1]
        return cfg.gamma * (a * d_w + b * d_s)
    phi_before = potential(before[0], before[1], a, b)
    phi_after = potential(after[0], after[1], a, b)
    return cfg.gamma * phi_after - phi_before


def max_return(cfg: RewardConfig) -> float:
    """Discounted return of the never-attacked, never-acting trace.

    Rewards are indexed from t=0 (first step discounted by gamma^0); the
    terminal bonus arrives with the final step's reward, so it is discounted
    by gamma^(t_max-1).
    """
    g = cfg.gamma
    n = cfg.t_max
    per_step = 1.0 + cfg.lam
    geometric = (1.0 - g**n) / (1.0 - g)
    return per_step * geometric + g ** (n - 1) * (1.0 / (1.0 - g))
