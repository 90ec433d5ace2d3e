"""Brute-force one-step Q-learning used to replay the engine's learning.

Kept free of package imports other than what drives the world: it sees only
the (holder, next hop, reward, next holder) stream and keeps its own tables.
"""


class OneStepQ:
    def __init__(self, beta=0.5, gamma=0.9):
        self.beta = beta
        self.gamma = gamma
        self.q = {}

    def observe(self, node, action, reward, next_node):
        row = self.q.setdefault(node, {})
        if next_node is None:
            best = 0.0
        else:
            best = max(self.q.get(next_node, {}).values(), default=0.0)
        old = row.get(action, 0.0)
        row[action] = old + self.beta * (reward + self.gamma * best - old) * 1.0


def line_config(episodes=1000, seed=5):
    from iqmr.config import SimConfig, resolve
    cfg = SimConfig()
    for key, value in (("sim.num_uavs", 5), ("sim.seed", seed), ("sim.episodes", episodes),
                       ("sim.baseline", "plain-q"), ("mobility.static", True),
                       ("channel.deterministic", True), ("channel.interferers", "transmitting"),
                       ("discovery.sector_half_angle_rad", 1.5707963267948966),
                       ("energy.mass_kg", 0.1)):
        cfg = cfg.replace(key, value)
    return resolve(cfg)


LINE = [(120.0 * (k + 1), 0.0, 100.0) for k in range(5)]
