import math

import numpy as np
import pytest

from carate.randomize import Scheme, assign, imbalance
from carate.rngstat import stream


def strata(n, labels=("1", "2"), seed=0):
    return np.random.default_rng(seed).choice(labels, n)


def test_sbr_exact_counts():
    s = np.array(["1"] * 7 + ["2"] * 10)
    asg = assign(s, Scheme("sbr", pi=0.5), stream(0, 0, "assignment"))
    assert asg.a[s == "1"].sum() == 3
    assert asg.a[s == "2"].sum() == 5


def test_sbr_per_stratum_pi():
    s = np.array(["1"] * 10 + ["2"] * 10)
    asg = assign(s, Scheme("sbr", pi={"1": 0.3, "2": 0.7}), stream(0, 0, "assignment"))
    assert asg.a[s == "1"].sum() == 3 and asg.a[s == "2"].sum() == 7
    assert asg.imbalance == {"1": 0.0, "2": 0.0}


def test_sbr_floor_guard():
    s = np.array(["1"] * 10)
    asg = assign(s, Scheme("sbr", pi=0.7), stream(1, 0, "assignment"))
    assert asg.a.sum() == 7


def test_unknown_stratum_label():
    with pytest.raises(KeyError):
        assign(np.array(["9"]), Scheme("srs", pi={"1": 0.5}), stream(0, 0, "assignment"))


def test_bad_scheme_arguments():
    with pytest.raises(ValueError):
        Scheme("coin")
    with pytest.raises(ValueError):
        Scheme("bcd", lam=0.5)


def test_srs_rate():
    s = strata(20_000)
    asg = assign(s, Scheme("srs", pi=0.3), stream(2, 0, "assignment"))
    assert abs(asg.a.mean() - 0.3) < 4 * math.sqrt(0.21 / 20_000)


def test_bcd_lambda_one_is_deterministic_pairs():
    s = np.array(["1"] * 11)
    asg = assign(s, Scheme("bcd", lam=1.0), stream(3, 0, "assignment"))
    assert all(abs(v) <= 0.5 for v in asg.b_stat.values())
    for i in range(0, 10, 2):
        assert asg.a[i] + asg.a[i + 1] == 1


def test_strong_balance_bcd_and_sbr_vs_srs():
    s = strata(4000)
    spread = {}
    for kind in ("srs", "bcd", "wei", "sbr"):
        vals = []
        for r in range(40):
            asg = assign(s, Scheme(kind), stream(4, r, "assignment"))
            vals.extend(abs(v) for v in asg.imbalance.values())
        spread[kind] = np.mean(vals)
    assert spread["bcd"] < 3 and spread["sbr"] <= 0.5
    assert spread["srs"] > 5 * spread["bcd"]
    assert spread["wei"] < spread["srs"]


def test_wei_first_unit_uses_f_at_zero():
    calls = []

    def f(x):
        calls.append(x)
        return 1.0 if x == 0 else 0.0

    asg = assign(np.array(["1", "2", "1"]), Scheme("wei", f=f), stream(5, 0, "assignment"))
    assert calls[:2] == [0.0, 0.0]
    assert asg.a[0] == 1 and asg.a[1] == 1
    # second unit in stratum "1" sees 2B/n = 1
    assert calls[2] == 1.0 and asg.a[2] == 0


def test_imbalance_definition():
    d = imbalance([1, 1, 0, 1], ["1", "1", "1", "2"], {"1": 0.5, "2": 0.25})
    assert d == {"1": 0.5, "2": 0.75}


def test_determinism():
    s = strata(500)
    for kind in ("srs", "wei", "bcd", "sbr"):
        a1 = assign(s, Scheme(kind), stream(6, 1, "assignment")).a
        a2 = assign(s, Scheme(kind), stream(6, 1, "assignment")).a
        assert np.array_equal(a1, a2)
