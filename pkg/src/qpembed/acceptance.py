"""The ten acceptance checks, shared by the test suite and ``qpembed selftest``.

Each check returns a :class:`Criterion` with a pass flag and the measured
numbers it was judged on.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .algebra import J, N as NIL
from .arithmetic import cfrac_expand, named_constant
from .cocycles import (Cocycle, Conjugacy, ExpPair, almost_mathieu_potential, conjugate,
                       rotation_number_cocycle, scan_energy)
from .embedding import (apply_T, conjugated_system, elliptic_constant, embed_local,
                        extend_conjugacy_to_flow, invert_L_elliptic, invert_T, invert_T_bound,
                        lift_conjugacy_to_flow, mu_norm, roundtrip_defect)
from .flows import DEFAULT_TOL, DET_MONITOR, QPSystem, integrate_batch
from .fourier import MatSeries, TrigSeries, expm_sl2, inv_sl2, norm_h, to_sl2, to_su11, torus_grid
from .instances import gen_instance, random_sl2_series
from .io import matseries_from_json

GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass
class Criterion:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in self.detail.items())
        return f"criterion {self.number:2d} {status}  {self.name} ({self.seconds:.1f}s) {shown}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    return str(v)


def _op(X):
    return np.linalg.norm(X, ord=2, axis=(-2, -1))


def rotation_series(period: int = 1) -> MatSeries:
    """theta -> R_{theta / period} as a series on a torus of that period."""
    c = np.zeros((2, 2, 3), dtype=complex)
    c[0, 0, 0] = c[0, 0, 2] = c[1, 1, 0] = c[1, 1, 2] = 0.5
    c[1, 0, 2], c[1, 0, 0] = -0.5j, 0.5j
    c[0, 1, 2], c[0, 1, 0] = 0.5j, -0.5j
    return MatSeries(c, (period,), "SL2R_valued")


def apply_L_quadrature(A, F: MatSeries, mu, theta, nodes: int = 48) -> np.ndarray:
    """int_0^1 e^{-sA} F(s, theta + s mu) e^{sA} ds by Gauss-Legendre, shape (n, 2, 2)."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    s, w = (x + 1) / 2, w / 2
    theta = np.asarray(theta, dtype=float).reshape(-1, len(mu))
    pts = np.concatenate([np.broadcast_to(s[:, None, None], (nodes, len(theta), 1)),
                          theta[None] + s[:, None, None] * np.asarray(mu)], axis=-1)
    vals = np.real_if_close(F(pts))
    E = expm_sl2(-s[:, None, None] * np.asarray(A, dtype=float))
    Einv = inv_sl2(E)
    return np.einsum("s,sij,snjk,skl->nil", w, E, vals, Einv)


# ---------------------------------------------------------------------------

def criterion_1(seed: int = 2024) -> Criterion:
    cfg = gen_instance(seed, {"modes": 5, "amplitude": 1e-3, "h": 0.5, "mu": "golden", "rho": 0.15})
    G = matseries_from_json(cfg["G"])
    A = np.asarray(cfg["A"])
    rep = embed_local(A, G, cfg["mu"], 0.5, tol=1e-8)
    defect, _ = roundtrip_defect(rep, grid=64)
    rho = 0.15
    C = elliptic_constant(rho, 0.5, cfg["mu"])
    normF = rep.certificates["normF"]
    normG = G.su11_norm(0.5)
    ok = rep.iterations <= 15 and defect <= 1e-8 and normF <= 1.1 * C * normG
    return Criterion(1, "elliptic embedding round trip", ok,
                     {"iterations": rep.iterations, "defect": defect, "normF": normF,
                      "bound": 1.1 * C * normG})


def criterion_2(seed: int = 7) -> Criterion:
    norms, tildes = [], []
    for eps in (1e-4, 1e-6):
        cfg = gen_instance(seed, {"modes": 3, "amplitude": eps, "h": 0.25, "A": NIL.tolist()})
        rep = embed_local(NIL, matseries_from_json(cfg["G"]), cfg["mu"], 0.25, tol=1e-10)
        norms.append(rep.certificates["normF"])
        tildes.append(float(np.max(np.abs(rep.A_tilde))))
    ratio = norms[0] / norms[1]
    ok = max(tildes) == 0.0 and 5 <= ratio <= 20
    return Criterion(2, "parabolic scaling", ok, {"ratio": ratio, "max|A_tilde|": max(tildes)})


def _random_phi(rng, dim: int, box: int) -> TrigSeries:
    c = rng.standard_normal((2 * box + 1,) * dim) + 1j * rng.standard_normal((2 * box + 1,) * dim)
    kabs = np.abs(np.indices(c.shape) - box).sum(axis=0)
    return TrigSeries(c * np.exp(-2 * math.pi * kabs))


def criterion_3(seed: int = 3, count: int = 200) -> Criterion:
    rng = np.random.default_rng(seed)
    mu = np.array([GOLDEN])
    worst_rt, worst_bound, cases = 0.0, 0.0, {"1": 0, "2": 0, "3": 0}
    h = 0.5
    for i in range(count):
        which = i % 3
        phi = _random_phi(rng, 1, 4)
        if which == 0:
            lam = float(rng.uniform(-0.5, 0.5)) or 0.1
            rho = float(rng.uniform(-0.5, 0.5))
        elif which == 1:
            lam, rho = 0.0, float(rng.uniform(-0.5, 0.5))
        else:
            k = int(rng.integers(-4, 5))
            lam, rho = 0.0, (int(rng.integers(-1, 2)) - k * GOLDEN) / 2
        f = invert_T(lam, rho, phi, mu)
        cases[f.case] += 1
        back = apply_T(lam, rho, f.to_trig(), mu)
        n_phi = norm_h(phi, 0.0)
        worst_rt = max(worst_rt, norm_h(back - phi, 0.0) / n_phi)
        ratio = f.weighted_norm(h / (1 + mu_norm(mu))) / (invert_T_bound(lam) * norm_h(phi, h))
        worst_bound = max(worst_bound, ratio)
    ok = worst_rt <= 1e-12 and worst_bound <= 1.0 and all(cases.values())
    return Criterion(3, "T operator identities", ok,
                     {"roundtrip": worst_rt, "bound_ratio": worst_bound, "cases": cases})


def criterion_4(seed: int = 4, count: int = 100) -> Criterion:
    rng = np.random.default_rng(seed)
    mu = np.array([GOLDEN])
    theta = torus_grid((64,)).reshape(-1, 1)
    worst_rt, worst_bound = 0.0, 0.0
    for i in range(count):
        rho = float(rng.uniform(0.0, 0.45))
        h = (0.1, 0.5)[i % 2]
        G = to_su11(random_sl2_series(rng, 1, 4, 3, include_zero=True))
        G = G * (1.0 / G.su11_norm(h))
        F = invert_L_elliptic(rho, G, mu)
        A = 2 * math.pi * rho * J
        LF = apply_L_quadrature(A, to_sl2(F), mu, theta)
        worst_rt = max(worst_rt, float(np.max(_op(LF - to_sl2(G)(theta)))))
        bound = elliptic_constant(rho, h, mu) * G.su11_norm(h)
        worst_bound = max(worst_bound, F.su11_norm(h / (1 + mu_norm(mu))) / bound)
    ok = worst_rt <= 1e-10 and worst_bound <= 1.0
    return Criterion(4, "elliptic L inverse bound", ok, {"roundtrip": worst_rt, "bound_ratio": worst_bound})


def criterion_5(seed: int = 5, count: int = 50, eps: float = 1e-3) -> Criterion:
    """||F||_0 = eps, which dominates sup |F| on the real torus."""
    rng = np.random.default_rng(seed)
    pts = np.concatenate([np.zeros((32, 1)), torus_grid((32,))], axis=1)
    worst = 0.0
    for i in range(count):
        rho = float(rng.uniform(0.0, 0.5))
        F = random_sl2_series(rng, 2, 4, 2, include_zero=True)
        sys = QPSystem([GOLDEN], 2 * math.pi * rho * J, F * (eps / F.su11_norm(0.0)), 0.5)
        Phi = integrate_batch(sys, pts, np.ones(len(pts))).Phi
        worst = max(worst, float(np.max(_op(expm_sl2(-sys.A) @ Phi - np.eye(2)))))
    return Criterion(5, "Poincare Gronwall estimate", worst <= 2 * eps, {"sup": worst, "bound": 2 * eps})


def criterion_6(N: int = 100_000, seed: int = 6) -> Criterion:
    rng = np.random.default_rng(seed)
    mu = np.array([GOLDEN])
    G = random_sl2_series(rng, 1, 2, 2)
    G = G * (0.02 / G.su11_norm(0.0))
    c = Cocycle(mu, ExpPair(2 * math.pi * 0.1 * J, G))
    base = rotation_number_cocycle(c, N).value
    out = {}
    for period, shift in ((1, GOLDEN), (2, GOLDEN / 2)):
        conj = Conjugacy(rotation_series(period))
        val = rotation_number_cocycle(conjugate(c, conj), N).value
        out[f"period{period}"] = abs((val - base - shift * conj.degree[0] + 0.5) % 1.0 - 0.5)
    ok = all(v <= 1e-4 for v in out.values())
    return Criterion(6, "rotation number conjugacy law", ok, out)


def criterion_7(depth: int = 30) -> Criterion:
    cf = cfrac_expand("golden", depth + 1)
    fib = [1, 1]
    while len(fib) < len(cf.q):
        fib.append(fib[-1] + fib[-2])
    exact = list(cf.q[: depth + 1]) == fib[: depth + 1]
    alpha = named_constant("golden")
    worst = 0.0
    with mpmath.workprec(256):
        for qn, qn1 in zip(cf.q[:-1], cf.q[1:]):
            dist = abs(qn * alpha - mpmath.nint(qn * alpha))
            worst = max(worst, float(dist * qn1))
    return Criterion(7, "continued fractions", exact and worst <= 1.0,
                     {"fibonacci": exact, "max q_{n+1}||q_n a||": worst})


def criterion_8(seed: int = 8, tol: float = DEFAULT_TOL) -> Criterion:
    rng = np.random.default_rng(seed)
    DET_MONITOR.reset()
    worst_cocycle = 0.0
    systems = []
    for kind_A in (2 * math.pi * 0.2 * J, np.diag([0.3, -0.3]), NIL):
        F = random_sl2_series(rng, 2, 4, 2, include_zero=True)
        systems.append(QPSystem([GOLDEN], kind_A, F * (0.5 / F.su11_norm(0.0)), 0.5))
    for sys in systems:
        th = rng.random((16, 2))
        t, s = rng.uniform(0, 3, 16), rng.uniform(0, 3, 16)
        Pts = integrate_batch(sys, th, t + s, tol).Phi
        Ps = integrate_batch(sys, th, s, tol).Phi
        Pt = integrate_batch(sys, (th + s[:, None] * sys.omega) % 1.0, t, tol).Phi
        scale = np.maximum(1.0, _op(Pts))
        worst_cocycle = max(worst_cocycle, float(np.max(_op(Pts - Pt @ Ps) / scale)))
    det = DET_MONITOR.max_err
    return Criterion(8, "flow structure", det <= 1e-12 and worst_cocycle <= 10 * tol,
                     {"det": det, "cocycle": worst_cocycle})


def _plateaus(rot, thresh):
    flat = np.abs(np.diff(rot)) < thresh
    runs, i = [], 0
    while i < len(flat):
        if flat[i]:
            j = i
            while j < len(flat) and flat[j]:
                j += 1
            if j - i >= 2:
                runs.append((i, j))
            i = j
        else:
            i += 1
    return runs


def criterion_9(N: int = 20_000) -> Criterion:
    mu = np.array([GOLDEN])
    E = np.linspace(-1.9, 1.9, 381)
    free = scan_energy(TrigSeries.constant(0.0), mu, E, N)
    free_err = float(np.max(np.abs(free.rot - np.arccos(-E / 2) / (2 * math.pi))))
    E = np.linspace(-4, 4, 801)
    amo = scan_energy(almost_mathieu_potential(0.25), mu, E, N)
    ks = np.arange(-20, 21)
    worst, labels = 0.0, []
    for i, j in _plateaus(amo.rot, 2e-4):
        v = float(np.median(amo.rot[i:j + 1]))
        dist = np.abs((2 * v - ks * GOLDEN + 0.5) % 1.0 - 0.5) / 2
        labels.append(int(ks[np.argmin(dist)]))
        worst = max(worst, float(dist.min()))
    found = {-1, 1} <= set(labels)
    ok = free_err <= 1e-4 and worst <= 1e-3 and found
    return Criterion(9, "spectral diagnostics", ok,
                     {"free": free_err, "plateau": worst, "labels": sorted(set(labels))})


def criterion_10(seed: int = 10, tol: float = DEFAULT_TOL) -> Criterion:
    rng = np.random.default_rng(seed)
    mu = np.array([GOLDEN])
    F = random_sl2_series(rng, 2, 3, 2)
    sys_bar = QPSystem(mu, 2 * math.pi * 0.2 * J, F * (0.05 / F.su11_norm(0.0)), 0.5)
    B = rotation_series(2)
    out = {}
    # extension: Poincare cocycle B(.+mu)^{-1} A~ B, flow property, periodicity
    ext = extend_conjugacy_to_flow(B, sys_bar, tol)
    th = np.c_[rng.random(8), 2 * rng.random(8)]
    t, s = rng.uniform(0, 2, 8), rng.uniform(0, 2, 8)
    lhs = ext.phi(t + s, th)
    rhs = ext.phi(t, th + s[:, None] * np.r_[1.0, mu]) @ ext.phi(s, th)
    out["ext_flow"] = float(np.max(_op(lhs - rhs)))
    sec = np.c_[np.zeros(8), th[:, 1]]
    y = th[:, 1:]
    target = inv_sl2(B(y + mu)) @ sys_bar.phi(np.ones(8), sec) @ B(y)
    out["ext_intertwine"] = float(np.max(_op(ext.phi(np.ones(8), sec) - target)))
    base = ext.phi(t, th)
    out["ext_periodic"] = max(float(np.max(_op(ext.phi(t, th + shift) - base)))
                              for shift in ([1.0, 0.0], [0.0, 2.0]))
    # lift: B_bar for a system conjugated by B
    S = conjugated_system(B, sys_bar)
    lift = lift_conjugacy_to_flow(B, S, sys_bar)
    Bb = lift(th)
    moved = th + t[:, None] * np.r_[1.0, mu]
    res = lift(moved) @ sys_bar.phi(t, th) - S.phi(t, th) @ Bb
    out["lift_intertwine"] = float(np.max(_op(res)))
    out["lift_periodic"] = max(float(np.max(_op(lift(th + shift) - Bb)))
                               for shift in ([2.0, 0.0], [0.0, 2.0]))
    out["lift_section"] = float(np.max(_op(lift(sec) - B(y))))
    ok = all(v <= 10 * tol for v in out.values())
    return Criterion(10, "conjugacy extension", ok, out)


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10)


def run(number: int) -> Criterion:
    t0 = time.perf_counter()
    res = CRITERIA[number - 1]()
    res.seconds = time.perf_counter() - t0
    return res


def run_all(numbers=None, echo=None) -> list[Criterion]:
    out = []
    for n in numbers or range(1, len(CRITERIA) + 1):
        res = run(n)
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
