import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad_vec

from qpembed.algebra import H, J, N as NIL
from qpembed.embedding import (EmbedError, EmbedOptions, ResonantSeries, apply_T, elliptic_constant,
                               embed_local, embed_uh_diagonal, extend_conjugacy_to_flow,
                               hyperbolic_constant, invert_L_elliptic, invert_L_hyperbolic, invert_T,
                               invert_T_bound, lift_conjugacy_to_flow, mu_norm, phase_residual,
                               roundtrip_defect, site, weighted_norm)
from qpembed.flows import QPSystem, integrate_batch, poincare_map
from qpembed.fourier import MatSeries, TrigSeries, expm_sl2, norm_h
from qpembed.instances import gen_instance, random_sl2_series
from qpembed.io import matseries_from_json

GOLDEN = (math.sqrt(5) - 1) / 2
MU = np.array([GOLDEN])
seeds = st.integers(0, 2**32 - 1)


def decaying(seed, dim=1, box=4, real=False):
    r = np.random.default_rng(seed)
    shape = (2 * box + 1,) * dim
    c = r.standard_normal(shape) + 1j * r.standard_normal(shape)
    kabs = np.abs(np.indices(shape) - box).sum(axis=0)
    f = TrigSeries(c * np.exp(-2 * kabs))
    return f.realify() if real else f


# ---------------------------------------------------------------------------
# sites

def test_site_examples():
    assert site(np.array([0]), MU, 0.0) == 0
    assert site(np.array([1]), MU, 0.0) == 1
    assert site(np.array([0]), MU, 0.25) == 0  # exactly 1/2, the smaller integer
    assert site(np.array([0]), MU, 0.75) == 1  # exactly 3/2
    assert site(np.array([0]), MU, -0.25) == -1


@given(st.integers(-50, 50), st.floats(-0.5, 0.5))
def test_phase_residual_bounded(k, rho):
    x = phase_residual(np.array([k]), MU, rho)
    assert -0.5 < x <= 0.5 + 1e-12
    assert x == pytest.approx(k * GOLDEN + 2 * rho - site(np.array([k]), MU, rho))


def test_weighted_norm_examples():
    c = np.zeros(3, dtype=complex)
    c[2] = 1.0
    f = ResonantSeries(MU, 0.1, c)
    h = 0.3
    assert weighted_norm(f, h) == pytest.approx(math.exp(2 * math.pi * (1 + GOLDEN) * h))
    assert weighted_norm(ResonantSeries(MU, 0.1, np.zeros(5)), h) == 0.0
    with pytest.raises(ValueError):
        weighted_norm(f, -1.0)


@given(seeds, st.floats(-0.375, 0.375), st.floats(0.0, 1.0))
def test_norm_sandwich(seed, rho, h):
    # the lower bound needs |rho| <= 3/8
    c = decaying(seed, 1, 6).coeffs
    f = ResonantSeries(MU, rho, c)
    w = weighted_norm(f, h)
    full = norm_h(f.to_trig(), h)
    assert math.exp(-2 * math.pi * h * (2 - 2 * abs(rho))) * w <= full * (1 + 1e-12)
    assert full <= math.exp(2 * math.pi * h * (2 * abs(rho) + 1)) * w * (1 + 1e-12)


def test_to_trig_support_is_on_sites():
    f = ResonantSeries(MU, 0.2, decaying(1, 1, 3).coeffs)
    g = f.to_trig()
    ks, _ = g.modes()
    for k1, k in ks:
        assert k1 == -site(np.array([k]), MU, 0.2)


# ---------------------------------------------------------------------------
# T and its inverse, checked against adaptive quadrature of the defining integral

def T_quadrature(lam, rho, f, mu, theta):
    def integrand(t):
        pts = np.concatenate([np.full((len(theta), 1), t), theta + t * mu], axis=1)
        return f(pts) * np.exp(4 * math.pi * (lam + 1j * rho) * t)

    return quad_vec(integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)[0]


@settings(max_examples=10)
@given(seeds, st.floats(-0.4, 0.4), st.floats(-0.5, 0.5))
def test_apply_T_matches_quadrature(seed, lam, rho):
    f = decaying(seed, 2, 3)
    theta = np.random.default_rng(seed).random((7, 1))
    ref = T_quadrature(lam, rho, f, MU, theta)
    assert np.max(np.abs(apply_T(lam, rho, f, MU)(theta) - ref)) <= 1e-10 * norm_h(f, 0)


def test_apply_T_examples():
    c = TrigSeries.constant(2.5, 2)
    assert apply_T(0.0, 0.0, c, MU).coeff(0) == pytest.approx(2.5)
    # a resonant mode passes with factor exactly 1
    f = TrigSeries.from_modes({(-1, 1): 3.0})
    rho = (1 - GOLDEN) / 2
    assert apply_T(0.0, rho, f, MU).coeff(1) == pytest.approx(3.0, abs=1e-14)
    with pytest.raises(ValueError):
        apply_T(0.0, 0.0, TrigSeries.constant(1.0, 1), MU)


@given(seeds, st.sampled_from(["1", "2", "3"]))
def test_invert_T_roundtrip_and_bound(seed, case):
    r = np.random.default_rng(seed)
    phi = decaying(seed, 1, 4)
    if case == "1":
        lam, rho = float(r.uniform(0.01, 0.5)) * r.choice([-1, 1]), float(r.uniform(-0.5, 0.5))
    elif case == "2":
        lam, rho = 0.0, float(r.uniform(-0.5, 0.5))
    else:
        lam, rho = 0.0, (int(r.integers(-1, 2)) - int(r.integers(-4, 5)) * GOLDEN) / 2
    f = invert_T(lam, rho, phi, MU)
    assert f.case == case or (case == "2" and f.case == "3")
    back = apply_T(lam, rho, f.to_trig(), MU)
    assert norm_h(back - phi, 0) <= 1e-13 * norm_h(phi, 0)
    h = 0.4
    assert f.weighted_norm(h / (1 + mu_norm(MU))) <= invert_T_bound(lam) * norm_h(phi, h) * (1 + 1e-12)


def test_invert_T_examples():
    f = invert_T(0.0, 0.0, TrigSeries.constant(1.5), MU)
    assert np.allclose(f.to_trig().coeffs, [[1.5]])
    # a single mode with lam = 0, rho = 0.2: one site carrying the Case-2 factor
    rho = 0.2
    f = invert_T(0.0, rho, TrigSeries.from_modes({(1,): 1.0}), MU)
    x = GOLDEN + 2 * rho - site(np.array([1]), MU, rho)
    z = 2j * math.pi * x
    assert f.coeffs[2] == pytest.approx(z / complex(np.expm1(z)))
    assert np.count_nonzero(f.coeffs) == 1
    # resonant: copied verbatim
    rho = (1 - GOLDEN) / 2
    f = invert_T(0.0, rho, TrigSeries.from_modes({(1,): 2.0}), MU)
    assert f.case == "3" and f.coeffs[2] == pytest.approx(2.0)


def test_invert_T_real_in_real_out():
    phi = decaying(3, 1, 4, real=True)
    g = invert_T(0.0, 0.0, phi, MU).to_trig()
    pts = np.random.default_rng(0).random((10, 2))
    assert np.max(np.abs(g(pts).imag)) <= 1e-14


def test_lambda_zero_factor_at_most_half_pi():
    assert invert_T_bound(0.0) == pytest.approx(math.pi / 2)
    xs = np.linspace(-0.5, 0.5, 1001)
    z = 2j * math.pi * xs
    with np.errstate(invalid="ignore", divide="ignore"):
        fac = np.where(xs == 0, 1.0, np.abs(z / np.expm1(z)))
    assert fac.max() == pytest.approx(math.pi / 2)


# ---------------------------------------------------------------------------
# the L operators

def L_quadrature(A, F, mu, theta):
    A = np.asarray(A, dtype=float)

    def integrand(s):
        pts = np.concatenate([np.full((len(theta), 1), s), theta + s * mu], axis=1)
        return expm_sl2(-s * A) @ np.real_if_close(F(pts)) @ expm_sl2(s * A)

    return quad_vec(integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)[0]


@settings(max_examples=8)
@given(seeds, st.floats(-0.45, 0.45))
def test_invert_L_elliptic_against_quadrature(seed, rho):
    r = np.random.default_rng(seed)
    G = random_sl2_series(r, 1, 4, 3, include_zero=True)
    G = G * (1.0 / G.su11_norm(0.5))
    F = invert_L_elliptic(rho, G, MU)
    assert F.tag == "sl2R"
    theta = r.random((9, 1))
    LF = L_quadrature(2 * math.pi * rho * J, F, MU, theta)
    assert np.max(np.abs(LF - G(theta))) <= 1e-10
    for h in (0.1, 0.5):
        bound = elliptic_constant(rho, h, MU) * G.su11_norm(h)
        assert F.su11_norm(h / (1 + GOLDEN)) <= bound


def test_invert_L_elliptic_constant_diagonal():
    t = 0.7
    G = MatSeries.constant(np.diag([1j * t, -1j * t]), 1, tag="su11")
    F = invert_L_elliptic(0.15, G, MU)
    assert F.tag == "su11"
    assert np.allclose(F.constant_term(), np.diag([1j * t, -1j * t]))
    assert np.count_nonzero(np.abs(F.coeffs) > 1e-15) == 2


@settings(max_examples=8)
@given(seeds, st.floats(0.05, 0.5), st.sampled_from([-1, 1]))
def test_invert_L_hyperbolic_against_quadrature(seed, lam, sign):
    lam *= sign
    r = np.random.default_rng(seed)
    G = random_sl2_series(r, 1, 4, 3, include_zero=True)
    F = invert_L_hyperbolic(lam, G, MU)
    theta = r.random((9, 1))
    LF = L_quadrature(2 * math.pi * lam * H, F, MU, theta)
    assert np.max(np.abs(LF - G(theta))) <= 1e-10 * max(1.0, G.sl2_entry_norm(0))
    for h in (0.1, 0.5):
        bound = hyperbolic_constant(lam, h, MU) * G.sl2_entry_norm(h)
        assert F.sl2_entry_norm(h / (1 + GOLDEN)) <= bound


def test_invert_L_hyperbolic_examples():
    G = MatSeries.constant(np.diag([0.3, -0.3]), 1, tag="sl2R")
    F = invert_L_hyperbolic(0.2, G, MU)
    assert np.allclose(F.constant_term(), np.diag([0.3, -0.3]))
    with pytest.raises(ValueError):
        invert_L_hyperbolic(0.0, G, MU)


# ---------------------------------------------------------------------------
# embed_local

def instance(seed, A, amplitude, h=0.5, modes=3, norm="su11"):
    cfg = gen_instance(seed, {"modes": modes, "amplitude": amplitude, "h": h,
                              "A": np.asarray(A).tolist(), "norm": norm})
    return matseries_from_json(cfg["G"]), np.asarray(cfg["mu"])


def test_embed_zero_perturbation():
    A = 2 * math.pi * 0.15 * J
    G = MatSeries.constant(np.zeros((2, 2)), 1, tag="sl2R")
    rep = embed_local(A, G, MU, 0.5)
    assert rep.iterations == 0 and rep.converged
    assert np.array_equal(rep.A_tilde, A)
    assert np.max(np.abs(rep.F.coeffs)) == 0.0


@pytest.mark.parametrize("A, norm", [(2 * math.pi * 0.15 * J, "su11"),
                                     (2 * math.pi * 0.2 * H, "entries"),
                                     (np.array([[0.3, 1.2], [-0.9, -0.3]]), "su11")])
def test_embed_round_trip(A, norm):
    G, mu = instance(11, A, 1e-4, norm=norm)
    rep = embed_local(A, G, mu, 0.5, tol=1e-9)
    assert rep.converged
    assert np.array_equal(rep.A_tilde, A) or np.allclose(rep.A_tilde, A, atol=1e-14)
    assert roundtrip_defect(rep, grid=32)[0] <= 1e-9
    assert rep.certificates["bound_ok"]
    hist = rep.residual_history
    assert all(b < a for a, b in zip(hist, hist[1:]))


def test_embed_with_two_frequencies():
    A = 2 * math.pi * 0.1 * J
    mu = [GOLDEN, math.sqrt(2) - 1]
    cfg = gen_instance(5, {"modes": 3, "amplitude": 1e-4, "h": 0.5, "mu": mu, "max_freq": 1})
    G = matseries_from_json(cfg["G"])
    rep = embed_local(A, G, mu, 0.5, tol=1e-9)
    assert rep.converged and roundtrip_defect(rep, grid=8)[0] <= 1e-9


def test_embed_parabolic_returns_zero_generator():
    G, mu = instance(7, NIL, 1e-5, h=0.25)
    rep = embed_local(NIL, G, mu, 0.25, tol=1e-10)
    assert rep.kind == "parabolic"
    assert np.max(np.abs(rep.A_tilde)) == 0.0
    assert roundtrip_defect(rep, grid=32)[0] <= 1e-10


def test_embed_threshold_error():
    A = 2 * math.pi * 0.15 * J
    G, mu = instance(1, A, 0.1)
    with pytest.raises(EmbedError) as err:
        embed_local(A, G, mu, 0.5)
    assert err.value.kind == "threshold"
    assert err.value.diagnostics["normG"] == pytest.approx(0.1)


def test_embed_divergence_error():
    A = 2 * math.pi * 0.15 * J
    G, mu = instance(1, A, 1.0, h=0.0)
    with pytest.raises(EmbedError) as err:
        embed_local(A, G, mu, 0.0, options=EmbedOptions(force=True))
    assert err.value.kind == "divergence"
    assert len(err.value.diagnostics["residuals"]) >= 4


def test_embed_rejects_bad_inputs():
    G = MatSeries.constant(np.zeros((2, 2)), 1, tag="general")
    with pytest.raises(ValueError):
        embed_local(2 * math.pi * 0.1 * J, G, MU, 0.5)
    with pytest.raises(ValueError):
        embed_local(2 * math.pi * 0.1 * J, G.retag("sl2R"), [GOLDEN, 0.3], 0.5)


# ---------------------------------------------------------------------------
# diagonal embedding and flow constructions

def test_embed_uh_diagonal_constant():
    sys = embed_uh_diagonal(TrigSeries.constant(0.4), MU)
    P = poincare_map(sys, 6).values
    assert np.allclose(P, np.diag([math.exp(0.4), math.exp(-0.4)]), atol=1e-12)


def test_embed_uh_diagonal_single_mode():
    phi = TrigSeries.from_modes({(0,): 0.2, (1,): 0.3 - 0.1j}, real=True)
    sys = embed_uh_diagonal(phi, MU)
    f = sys.F.entry(0, 0)
    assert norm_h(apply_T(0.0, 0.0, f, MU) - phi, 0) <= 1e-13
    sample = poincare_map(sys, 16)
    th = sample.theta.reshape(-1, 1)
    vals = sample.values.reshape(-1, 2, 2)
    assert np.allclose(vals[:, 0, 0], np.exp(phi(th).real), atol=1e-10, rtol=0)
    assert np.allclose(vals[:, 1, 1], np.exp(-phi(th).real), atol=1e-10, rtol=0)
    assert np.max(np.abs(vals[:, 0, 1])) <= 1e-12


def small_system(seed, amp=0.05):
    F = random_sl2_series(np.random.default_rng(seed), 2, 3, 2)
    return QPSystem(MU, 2 * math.pi * 0.2 * J, F * (amp / F.su11_norm(0.0)), 0.5)


def test_extension_with_identity_reproduces_flow():
    sys = small_system(2)
    ext = extend_conjugacy_to_flow(MatSeries.constant(np.eye(2), 1, tag="SL2R_valued"), sys)
    r = np.random.default_rng(0)
    th, t = r.random((6, 2)), r.uniform(0, 2, 6)
    assert np.allclose(ext.phi(t, th), integrate_batch(sys, th, t).Phi, atol=1e-11)


def test_lift_with_identity_is_identity():
    sys = small_system(3)
    lift = lift_conjugacy_to_flow(MatSeries.constant(np.eye(2), 1, tag="SL2R_valued"), sys, sys,
                                  grid=8)
    th = np.random.default_rng(1).random((5, 2)) * [2.0, 1.0]
    assert np.allclose(lift(th), np.eye(2), atol=1e-11)


def test_lift_rejects_non_conjugacy():
    a, b = small_system(3), small_system(4)
    with pytest.raises(ValueError):
        lift_conjugacy_to_flow(MatSeries.constant(np.eye(2), 1, tag="SL2R_valued"), a, b, grid=8)
