"""Q(lambda) next-hop learning.

The table is indexed by (packet holder, next hop); the holder's continuous
state only enters through the reward and the adaptive learning parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

DEFAULT_WEIGHTS = tuple(w / 31 for w in (16, 8, 4, 2, 1))


@dataclass(frozen=True)
class StateSnapshot:
    energy: float  # normalised residual energy
    prs_l2: float
    prs_l3: float
    p_cov: float
    p_coll: float


@dataclass(frozen=True)
class Constraints:
    e_th: float = 100.0
    p_cov_th: float = 0.1
    p_coll_th: float = 0.9
    r_min: float = 1.0


@dataclass(frozen=True)
class Candidate:
    """Everything the selector needs to know about one possible next hop."""

    node: int
    q: float
    divergence: float  # angle between holder->node and holder->base-station, radians
    residual_j: float
    p_cov: float
    p_coll: float
    distance: float


@dataclass(frozen=True)
class Choice:
    node: int
    greedy: bool


FRAGMENTED = None


def compute_reward(s: StateSnapshot, n_candidates: int, w: Sequence[float] = DEFAULT_WEIGHTS) -> float:
    if n_candidates <= 0:
        return 0.0
    return (w[0] * (1.0 - s.p_coll) + w[1] * s.prs_l3 + w[2] * s.prs_l2
            + w[3] * s.p_cov + w[4] * s.energy)


def adaptive_learning_rate(p_cov: float, mode: str = "exp-decay", beta_min: float = 0.01,
                           beta_max: float = 1.0, fixed: float = 0.5) -> float:
    if mode == "fixed":
        return fixed
    if mode == "paper-literal":
        denom = 1.0 - math.exp(-p_cov)
        if denom <= 0.0:
            return beta_max
        beta = (beta_max - beta_min) / denom + beta_min
        return min(max(beta, beta_min), beta_max)
    if mode == "exp-decay":
        return (beta_max - beta_min) * math.exp(-p_cov) + beta_min
    raise ValueError(f"unknown beta mode {mode!r}")


def adaptive_discount_factor(n_candidates: int, M: int, gamma_min: float = 0.1,
                             gamma_max: float = 0.9) -> float:
    return n_candidates * (gamma_max - gamma_min) / M + gamma_min


def q_update(q_old: float, reward: float, max_q_next: float, beta: float, gamma: float,
             trace_e: float) -> float:
    return q_old + beta * (reward + gamma * max_q_next - q_old) * trace_e


def update_eligibility(traces: dict, visited, action_was_greedy: bool, beta: float,
                       lam: float) -> dict:
    """Accumulating traces with a Watkins cut on exploratory steps."""
    if action_was_greedy:
        decay = beta * lam
        out = {k: v * decay for k, v in traces.items()}
        out[visited] = out.get(visited, 0.0) + 1.0
    else:
        out = {visited: 1.0}
    return out


def apply_td(qtables: dict, traces: dict, reward: float, max_q_next: float, beta: float,
             gamma: float) -> None:
    """Apply the temporal-difference update to every entry with a nonzero trace.

    ``qtables`` maps node -> {action: Q}.
    """
    for (node, action), e in traces.items():
        if e == 0.0:
            continue
        table = qtables[node]
        table[action] = q_update(table.get(action, 0.0), reward, max_q_next, beta, gamma, e)


def feasible(c: Candidate, cons: Constraints) -> bool:
    return (c.residual_j >= cons.e_th and c.p_cov >= cons.p_cov_th
            and c.p_coll <= cons.p_coll_th and c.distance >= cons.r_min)


def greedy_order(c: Candidate):
    return (-c.q, c.divergence, c.node)


def select_next_hop(candidates: Iterable[Candidate], epsilon: float, rng, constraints: Constraints,
                    visited: Iterable[int] = (), prefiltered: bool = False) -> Choice | None:
    """Epsilon-greedy choice over the feasible candidates.

    Ties on Q go to the candidate closest to the holder-to-base-station axis,
    then to the lowest id.  Returns FRAGMENTED (None) when nothing is feasible.
    """
    seen = set(visited)
    pool = [c for c in candidates
            if c.node not in seen and (prefiltered or feasible(c, constraints))]
    if not pool:
        return FRAGMENTED
    best_q = max(c.q for c in pool)
    if epsilon > 0.0 and rng.random() < epsilon:
        pick = pool[int(rng.integers(len(pool)))]
        return Choice(pick.node, pick.q == best_q)
    pick = min(pool, key=greedy_order)
    return Choice(pick.node, True)
