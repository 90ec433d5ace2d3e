import pytest
from hypothesis import given, strategies as st

from iqmr.energetics import Battery, EnergyParams, charge_step, debit, flight_drain, transmission_energy

P = EnergyParams()


def test_tx_energy_oracle(oracles):
    o = oracles["tx_energy"]
    assert transmission_energy(o["k"], o["r"], P) == pytest.approx(o["expected"], rel=1e-9)


def test_tx_energy_zero_bits():
    assert transmission_energy(0, 50.0, P) == 0.0


def test_branch_selection_at_r0():
    # the two branches do not meet at r0 with the default constants
    k = 1000
    at = transmission_energy(k, P.r0, P)
    above = transmission_energy(k, P.r0 * (1 + 1e-12), P)
    assert at == pytest.approx(P.eps_elec * k + P.eps_amp_fs * k * P.r0 ** 2)
    assert above == pytest.approx(P.eps_elec * k + P.eps_amp_mp * k * P.r0 ** 4, rel=1e-9)
    assert abs(at - above) > 1.0


def test_flight_drain_oracle(oracles):
    for o in oracles["flight_drain"]:
        p = EnergyParams(mass_kg=o["mass"])
        assert flight_drain(o["dt"], p) == pytest.approx(o["expected"], rel=1e-9)


def test_debit_and_charge_oracles(oracles):
    o = oracles["debit"]
    b = debit(Battery(o["residual"], P.initial_j), o["amount"])
    assert b.residual == pytest.approx(o["expected"], rel=1e-9)
    o = oracles["charge"]
    p = EnergyParams(charge_rate=o["rate"])
    assert charge_step(Battery(o["residual"], P.initial_j), o["dt"], p).residual == pytest.approx(o["expected"])


def test_from_config_units():
    from iqmr.config import SimConfig
    p = EnergyParams.from_config(SimConfig())
    assert p.payload_w_per_kg == pytest.approx(217.0)
    assert p.initial_j == 207792.0


@given(res=st.floats(0, 207792), amount=st.floats(0, 1e6))
def test_debit_non_increasing_and_floored(res, amount):
    b = debit(Battery(res, 207792.0), amount)
    assert 0.0 <= b.residual <= res


@given(res=st.floats(0, 207792), dt=st.floats(0, 1000))
def test_charge_non_decreasing_and_capped(res, dt):
    b = charge_step(Battery(res, 207792.0), dt, P)
    assert res <= b.residual <= 207792.0


@given(k=st.integers(0, 10_000), r1=st.floats(0, 100), r2=st.floats(0, 100))
def test_free_space_monotone(k, r1, r2):
    lo, hi = sorted((r1, r2))
    assert transmission_energy(k, lo, P) <= transmission_energy(k, hi, P)
