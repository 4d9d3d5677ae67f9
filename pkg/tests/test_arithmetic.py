import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from qpembed.arithmetic import (beta_estimate, cfrac_expand, cfrac_from_quotients, diophantine_check,
                                named_constant, parse_alpha)


def fibonacci(n):
    out = [1, 1]
    while len(out) < n:
        out.append(out[-1] + out[-2])
    return out[:n]


def test_golden_mean_quotients_and_fibonacci():
    cf = cfrac_expand("golden", 10)
    assert cf.a == (1,) * 10
    assert list(cf.q) == fibonacci(11)
    assert list(cf.q[:10]) == [1, 1, 2, 3, 5, 8, 13, 21, 34, 55]


def test_sqrt2_minus_one_has_twos():
    assert cfrac_expand("sqrt2m1", 5).a == (2,) * 5


def test_rational_input_terminates():
    cf = cfrac_expand("0.3", 3)
    assert cf.a == (3, 3)
    assert cf.terminated
    assert cf.value() == Fraction(3, 10)


def test_float_rational_is_detected():
    cf = cfrac_expand(0.25, 10)
    assert cf.terminated and cf.a == (4,)


def test_near_rational_mpf_terminates():
    with mpmath.workprec(256):
        x = mpmath.mpf(1) / 3 + mpmath.mpf(2) ** -300
    cf = cfrac_expand(x, 10)
    assert cf.terminated and cf.a == (3,)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2, 1.5])
def test_alpha_outside_unit_interval(alpha):
    with pytest.raises(ValueError):
        cfrac_expand(alpha, 3)


def test_depth_must_be_positive():
    with pytest.raises(ValueError):
        cfrac_expand("golden", 0)


def test_parse_alpha_forms():
    assert parse_alpha("0.125") == Fraction(1, 8)
    assert isinstance(parse_alpha("golden"), mpmath.mpf)
    with pytest.raises(ValueError):
        parse_alpha("pi-ish")
    with pytest.raises(ValueError):
        named_constant("e")


def test_precision_budget_is_flagged():
    cf = cfrac_expand("golden", 500, prec=64)
    assert cf.precision_capped and cf.depth < 500


def test_big_integers_do_not_overflow():
    cf = cfrac_expand("golden", 120, prec=512)
    assert cf.q[-1] > 2**64
    assert cf.q[-1] == fibonacci(cf.depth + 1)[-1]


@given(st.lists(st.integers(1, 50), min_size=1, max_size=14), st.integers(2, 50))
def test_recurrence_and_reconstruction(head, last):
    a = head + [last]  # canonical expansions end in a quotient >= 2
    cf = cfrac_from_quotients(a)
    assert cf.a == tuple(a)
    for k in range(2, cf.depth + 1):
        assert cf.p[k] == cf.a[k - 1] * cf.p[k - 1] + cf.p[k - 2]
        assert cf.q[k] == cf.a[k - 1] * cf.q[k - 1] + cf.q[k - 2]
    assert cf.evaluate() == cf.value() == cf.alpha


@given(st.floats(1e-3, 1 - 1e-3))
def test_reconstruction_within_q_squared(alpha):
    cf = cfrac_expand(alpha, 12)
    err = abs(Fraction(alpha) - cf.evaluate())
    assert err <= Fraction(1, cf.q[-1] ** 2)


@pytest.mark.parametrize("name", ["golden", "sqrt2m1"])
def test_approximation_errors_decrease_and_q_bound(name):
    alpha = named_constant(name)
    cf = cfrac_expand(name, 40)
    with mpmath.workprec(256):
        errs = [abs(q * alpha - p) for p, q in zip(cf.p, cf.q)]
        assert all(e1 < e0 for e0, e1 in zip(errs, errs[1:]))
        for n in range(len(cf.q) - 1):
            assert errs[n] <= mpmath.mpf(1) / cf.q[n + 1]
    assert all(q1 > q0 for q0, q1 in zip(cf.q[1:], cf.q[2:]))


def test_best_approximation_brute_force():
    alpha = float(named_constant("sqrt2m1"))
    cf = cfrac_expand("sqrt2m1", 12)
    ks = np.arange(1, 10_001)
    dist = np.abs(ks * alpha - np.round(ks * alpha))
    for n in range(2, len(cf.q)):
        qn, qprev = cf.q[n], cf.q[n - 1]
        if qn > 10_000:
            break
        d_prev = abs(qprev * alpha - round(qprev * alpha))
        assert np.all(dist[: qn - 1] >= d_prev - 1e-15)


def test_beta_golden_decays():
    cf = cfrac_expand("golden", 20)
    b = beta_estimate(cf)
    assert b.beta_hat >= 0
    phi = (1 + math.sqrt(5)) / 2
    # ln(q_{n+1})/q_n <= ln(phi)*(n+1)/q_n, which vanishes
    n = len(b.samples)
    assert b.samples[-1] <= math.log(phi) * (n + 2) / cf.q[n]
    assert b.beta_hat < b.beta_sup
    tails = [b.tail_sup(s) for s in range(1, n + 1)]
    assert all(t1 <= t0 for t0, t1 in zip(tails, tails[1:]))


def test_beta_depth_two_single_sample():
    cf = cfrac_from_quotients([3, 7])
    b = beta_estimate(cf)
    assert b.samples == (math.log(cf.q[2]) / cf.q[1],)


def test_beta_liouville_construction():
    # a_{n+1} = ceil(e^{q_n}/q_n) makes ln q_{n+1} ~ q_n
    a, q = [1], [1, 1]
    for _ in range(3):
        qn = q[-1]
        with mpmath.workprec(200):
            a.append(int(mpmath.ceil(mpmath.exp(qn) / qn)))
        q.append(a[-1] * q[-1] + q[-2])
    cf = cfrac_from_quotients(a, prec=2048)
    assert list(cf.q) == q
    b = beta_estimate(cf)
    assert abs(b.beta_hat - 1) <= 0.1


def test_diophantine_resonant_rho_fails_at_one():
    alpha = float(named_constant("golden"))
    res = diophantine_check(alpha, 0.01, 1.0, alpha / 2, 10)
    assert not res.passed and abs(res.witness) == 1 and res.distance < 1e-15


def test_diophantine_against_brute_force():
    alpha = float(named_constant("golden"))
    res = diophantine_check(alpha, 0.05, 2.0, 0.25, 100)
    best = min((abs(k * alpha - 0.5 - round(k * alpha - 0.5)) * abs(k) ** 2 / 0.05, k)
               for k in range(-100, 101) if k)
    assert math.isclose(res.margin, best[0], rel_tol=1e-12)
    assert res.passed == (best[0] >= 1)


def test_diophantine_single_inequality():
    res = diophantine_check(0.3, 0.1, 1.0, 0.0, 1)
    assert res.passed == (0.3 >= 0.1) and abs(res.witness) == 1
    with pytest.raises(ValueError):
        diophantine_check(0.3, 0.0, 1.0, 0.0, 1)
