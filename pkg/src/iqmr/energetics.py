"""Battery accounting: radio energy per transmission, flight drain, charging."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class EnergyParams:
    eps_elec: float = 50e-9  # J/bit
    eps_amp_fs: float = 41e-6  # J/bit/m^2
    eps_amp_mp: float = 100e-12  # J/bit/m^4
    r0: float = 100.0  # m
    payload_w_per_kg: float = 217.0
    mass_kg: float = 2.0
    initial_j: float = 207792.0
    threshold_j: float = 100.0
    charge_rate: float = 2000.0  # J/s

    @classmethod
    def from_config(cls, cfg) -> "EnergyParams":
        e = cfg.energy
        return cls(e.eps_elec, e.eps_amp_fs, e.eps_amp_mp, e.r0_m, e.payload_kw_per_kg * 1000.0,
                   e.mass_kg, e.initial_j, e.threshold_j, e.charge_rate_j_per_s)


@dataclass(frozen=True)
class Battery:
    residual: float
    capacity: float

    @property
    def normalized(self) -> float:
        return self.residual / self.capacity

    @property
    def full(self) -> bool:
        return self.residual >= self.capacity


def transmission_energy(k: float, r: float, params: EnergyParams) -> float:
    """Joules to send k bits over r metres (free-space below r0, multipath above)."""
    if r <= params.r0:
        return params.eps_elec * k + params.eps_amp_fs * k * r * r
    return params.eps_elec * k + params.eps_amp_mp * k * r ** 4


def flight_drain(dt: float, params: EnergyParams) -> float:
    return params.payload_w_per_kg * params.mass_kg * dt


def debit(battery: Battery, amount: float) -> Battery:
    return Battery(max(0.0, battery.residual - amount), battery.capacity)


def charge_step(battery: Battery, dt: float, params: EnergyParams) -> Battery:
    return Battery(min(battery.capacity, battery.residual + params.charge_rate * dt), battery.capacity)
