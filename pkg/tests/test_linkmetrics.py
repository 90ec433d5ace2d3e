import math

import pytest
from hypothesis import assume, given, strategies as st

from iqmr.linkmetrics import (EQUIDISTANT, CollisionParams, Relation, classify_relative_motion,
                              collision_probability, denormalize, link_sustenance_time, normalize,
                              relative_distance)
from iqmr.mobility import Kinematics, Position3

coord = st.floats(-1e4, 1e4)
point = st.builds(Position3, coord, coord, coord)


def test_distance_oracle(oracles):
    o = oracles["distance"]
    assert relative_distance(Position3(*o["a"]), Position3(*o["b"])) == pytest.approx(o["expected"], rel=1e-9)


def test_lst_oracles(oracles):
    o = oracles["lst_receding"]
    r = link_sustenance_time(o["D"], o["s_i"], o["s_j"], Relation.RECEDING, o["R_t"], 1.0)
    assert r.seconds == pytest.approx(o["expected"], rel=1e-9)
    o = oracles["lst_approaching"]
    r = link_sustenance_time(o["D"], o["s_i"], o["s_j"], Relation.APPROACHING, 250.0, o["r_min"])
    assert r.seconds == pytest.approx(o["expected"], rel=1e-9)


def test_lst_equidistant():
    assert link_sustenance_time(100, 10, 10, Relation.EQUIDISTANT, 250, 1).equidistant
    assert link_sustenance_time(100, 10, 10, Relation.APPROACHING, 250, 1) is EQUIDISTANT


def test_collision_oracle(oracles):
    o = oracles["collision"]
    p = collision_probability(o["r"], CollisionParams(o["xi"], o["xi"]))
    assert p == pytest.approx(o["expected"], rel=1e-9)
    assert collision_probability(0.0, CollisionParams()) == 0.0


def test_normalize_oracle(oracles):
    o = oracles["normalize"]
    assert normalize(o["x"], o["lo"], o["hi"]) == pytest.approx(o["expected"], rel=1e-9)
    with pytest.raises(ValueError):
        normalize(1.0, 2.0, 2.0)


def test_classify_relative_motion():
    a = Position3(0, 0, 100)
    b = Position3(100, 0, 100)
    still = Kinematics(0.0, 0.0, 0.0)
    assert classify_relative_motion(a, still, b, Kinematics(10, 0.0, 0.0)) == Relation.RECEDING
    assert classify_relative_motion(a, still, b, Kinematics(10, math.pi, 0.0)) == Relation.APPROACHING
    assert classify_relative_motion(a, Kinematics(10, 0.3, 0), b, Kinematics(10, 0.3, 0)) == Relation.EQUIDISTANT


@given(r1=st.floats(0, 50), dr=st.floats(1e-3, 50), xi=st.floats(0.5, 10))
def test_collision_range_and_monotone(r1, dr, xi):
    # past an exponent of ~36 the result rounds to exactly 1.0 in double precision
    assume((r1 + dr) ** 2 / (2 * xi * xi) < 30)
    p = CollisionParams(xi, xi)
    a, b = collision_probability(r1, p), collision_probability(r1 + dr, p)
    assert 0.0 <= a < b < 1.0


@given(d1=st.floats(1, 500), dd=st.floats(1e-3, 500), si=st.floats(0.1, 30), sj=st.floats(0.1, 30))
def test_lst_monotone_in_distance(d1, dd, si, sj):
    rec1 = link_sustenance_time(d1, si, sj, Relation.RECEDING, 250, 1).seconds
    rec2 = link_sustenance_time(d1 + dd, si, sj, Relation.RECEDING, 250, 1).seconds
    assert rec2 <= rec1
    assume(si != sj)
    app1 = link_sustenance_time(d1, si, sj, Relation.APPROACHING, 250, 1).seconds
    app2 = link_sustenance_time(d1 + dd, si, sj, Relation.APPROACHING, 250, 1).seconds
    assert app2 >= app1


@given(a=point, b=point, c=point)
def test_triangle_inequality(a, b, c):
    assert relative_distance(a, c) <= relative_distance(a, b) + relative_distance(b, c) + 1e-9 * (
        1 + relative_distance(a, c))


@given(u=st.floats(0, 1), lo=st.floats(-1e3, 1e3), span=st.floats(1e-3, 1e3))
def test_normalize_denormalize_identity(u, lo, span):
    hi = lo + span
    x = denormalize(u, lo, hi)
    assert normalize(x, lo, hi) == pytest.approx(u, abs=1e-9)
