"""Air-to-air channel: power-law path loss, Nakagami-m fading, SIR and coverage.

All links transmit at the same power, so received power is gain x path loss.
The receiver's SIR is the desired power over the summed power from every
other active transmitter.  Coverage is the probability that this ratio
clears the threshold, estimated by Monte Carlo over fading draws.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .mobility import Position3


class InvalidGeometry(ValueError):
    """Transmitter and receiver coincide, so path loss is undefined."""


class NoInterferers(ValueError):
    """SIR requested with an empty interferer set."""


def nakagami_m(rician_k: float) -> float:
    return 2.0 * (rician_k + 1.0) / (2.0 * rician_k + 1.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    zeta: float
    m: float
    sir_threshold: float  # linear
    samples: int = 200
    noise_floor: float = 0.0
    deterministic: bool = False

    @classmethod
    def from_config(cls, cfg) -> "ChannelParams":
        c = cfg.channel
        return cls(
            zeta=c.zeta,
            m=nakagami_m(c.rician_k),
            sir_threshold=db_to_linear(c.sir_threshold_db),
            samples=c.coverage_samples,
            noise_floor=cfg.noise_floor,
            deterministic=c.deterministic,
        )


@dataclass(frozen=True)
class LinkSample:
    tx: int
    rx: int
    sir: float
    tick: int = 0


def path_loss(r: float, h: float, zeta: float) -> float:
    """Attenuation (r^2 + h^2)^(-zeta/2) for horizontal range r and tx altitude h."""
    d2 = r * r + h * h
    if d2 == 0.0:
        raise InvalidGeometry("co-located transmitter and receiver")
    return d2 ** (-0.5 * zeta)


def sample_fading_gain(m: float, rng: np.random.Generator, size=None):
    """Power gain drawn from Gamma(shape=m, scale=1/m) (unit mean)."""
    return rng.gamma(m, 1.0 / m, size)


def _link_loss(tx: Position3, rx: Position3, zeta: float) -> float:
    return path_loss(math.hypot(tx.x - rx.x, tx.y - rx.y), tx.h, zeta)


def compute_sir(rx: int, tx: int, positions: Mapping[int, Position3], gains: Mapping[int, float],
                params: ChannelParams, tick: int = 0) -> LinkSample:
    """SIR at ``rx`` for the link from ``tx``; every other entry of
    ``positions`` interferes.  ``positions`` must include the receiver."""
    if tx == rx:
        raise InvalidGeometry("transmitter equals receiver")
    rx_pos = positions[rx]
    signal = gains[tx] * _link_loss(positions[tx], rx_pos, params.zeta)
    interference = 0.0
    n = 0
    for u, pos in positions.items():
        if u == tx or u == rx:
            continue
        interference += gains[u] * _link_loss(pos, rx_pos, params.zeta)
        n += 1
    if n == 0:
        raise NoInterferers("interference-limited SIR needs at least one interferer")
    return LinkSample(tx, rx, signal / interference, tick)


def loss_matrix(tx_xyz: np.ndarray, rx_xyz: np.ndarray, zeta: float) -> np.ndarray:
    """Path loss from every transmitter (rows) to every receiver (columns)."""
    dx = tx_xyz[:, None, 0] - rx_xyz[None, :, 0]
    dy = tx_xyz[:, None, 1] - rx_xyz[None, :, 1]
    d2 = dx * dx + dy * dy + (tx_xyz[:, 2] ** 2)[:, None]
    if np.any(d2 == 0.0):
        raise InvalidGeometry("co-located transmitter and receiver")
    return d2 ** (-0.5 * zeta)


def sir_samples(tx: int, tx_xyz: np.ndarray, rx_xyz: np.ndarray, rx_self, params: ChannelParams,
                rng: np.random.Generator | None, samples: int) -> np.ndarray:
    """SIR draws, shape (samples, receivers), for one transmitter and many receivers.

    ``tx_xyz`` holds every active transmitter; ``tx`` indexes the desired one.
    ``rx_self[j]`` is receiver j's own row in ``tx_xyz`` (or -1) so that a
    node never interferes with itself.  All receivers share one fading draw
    per transmitter, which keeps threshold sweeps on common random numbers.
    With an empty interferer set the configured noise floor stands in.
    """
    L = loss_matrix(tx_xyz, rx_xyz, params.zeta)
    signal_loss = L[tx].copy()
    L[tx, :] = 0.0
    for j, own in enumerate(rx_self):
        if own >= 0:
            L[own, j] = 0.0
    if params.deterministic or rng is None:
        G = np.ones((1, tx_xyz.shape[0]))
    else:
        G = sample_fading_gain(params.m, rng, (samples, tx_xyz.shape[0]))
    signal = G[:, tx, None] * signal_loss[None, :]
    interference = G @ L
    interference[interference == 0.0] = params.noise_floor
    if np.any(interference <= 0.0):
        raise NoInterferers("no interferers and no noise floor")
    return signal / interference


def coverage_many(tx: int, tx_xyz: np.ndarray, rx_xyz: np.ndarray, rx_self, params: ChannelParams,
                  rng: np.random.Generator | None) -> np.ndarray:
    """Coverage probability for each receiver column (see sir_samples)."""
    sir = sir_samples(tx, tx_xyz, rx_xyz, rx_self, params, rng, params.samples)
    return np.mean(sir >= params.sir_threshold, axis=0)


def coverage_probability(rx: int, tx: int, positions: Mapping[int, Position3], params: ChannelParams,
                         rng: np.random.Generator | None) -> float:
    """Monte Carlo estimate of P[SIR >= threshold] on the tx -> rx link."""
    ids = [u for u in positions if u != rx]
    xyz = np.array([[positions[u].x, positions[u].y, positions[u].h] for u in ids], dtype=float)
    r = positions[rx]
    rx_xyz = np.array([[r.x, r.y, r.h]])
    return float(coverage_many(ids.index(tx), xyz, rx_xyz, [-1], params, rng)[0])
