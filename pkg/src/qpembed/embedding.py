"""Embedding cocycles into quasi-periodic linear flows.

The averaging operator

    T_{lam + i rho} f(theta~) = int_0^1 f(t, theta~ + t mu) exp(4 pi (lam + i rho) t) dt

maps a series on T^d to one on T^{d-1}: the mode (k1, k) lands on k with
factor (e^z - 1)/z, z = 4 pi lam + 2 pi i x, x = k1 + <k, mu> + 2 rho.  Its
inverse puts the mass of every k on a single "resonance site" (-kt(k), k),
kt(k) the integer nearest <k, mu> + 2 rho, so that |x| <= 1/2 and the
inverse factor z/(e^z - 1) stays bounded.

``embed_local`` solves Phi^1(0, theta~) = exp(A) exp(G(theta~)) for a flow
generator A_tilde + F by a quasi-Newton iteration whose linear part is the
inverse of L F = int_0^1 e^{-As} F(s, theta~ + s mu) e^{As} ds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import classify
from .flows import DEFAULT_TOL, QPSystem, integrate_batch, section_grid
from .fourier import (
    MatSeries,
    TrigSeries,
    expm_sl2,
    inv_sl2,
    logm_sl2,
    project_matrix,
    to_sl2,
    to_su11,
    torus_grid,
)

TWO_PI = 2 * math.pi
RESONANCE_TOL = 1e-12


def mu_norm(mu) -> float:
    """|mu| as the sup norm, so that |<k, mu>| <= |k|_1 |mu|."""
    return float(np.max(np.abs(np.atleast_1d(mu)))) if np.size(mu) else 0.0


# ---------------------------------------------------------------------------
# resonance sites

def site(k, mu, rho: float):
    """Integer nearest <k, mu> + 2 rho, exact ties going to the smaller one."""
    k = np.asarray(k)
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    v = k @ mu + 2.0 * rho if k.ndim else k * mu[0] + 2.0 * rho
    kt = np.ceil(v - 0.5).astype(int)
    return int(kt) if np.ndim(kt) == 0 else kt


def _lattice(box) -> np.ndarray:
    grids = np.meshgrid(*[np.arange(-n, n + 1) for n in box], indexing="ij")
    return np.stack(grids, axis=-1)


def phase_residual(k, mu, rho: float):
    """x(k) = -kt(k) + <k, mu> + 2 rho at the stored site, |x| <= 1/2."""
    k = np.asarray(k)
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    return k @ mu + 2.0 * rho - site(k, mu, rho)


@dataclass(frozen=True, eq=False)
class ResonantSeries:
    """Series on T^d supported on the sites (-kt(k), k), k in a box of Z^{d-1}."""

    mu: np.ndarray
    rho: float
    coeffs: np.ndarray
    case: str = ""

    def __post_init__(self):
        object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, dtype=float)))
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim != len(self.mu):
            raise ValueError("coefficient box must live on Z^{d-1}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def box(self) -> tuple[int, ...]:
        return tuple((s - 1) // 2 for s in self.coeffs.shape)

    def sites(self) -> np.ndarray:
        return site(_lattice(self.box), self.mu, self.rho)

    def weighted_norm(self, h: float) -> float:
        return weighted_norm(self, h)

    def to_trig(self) -> TrigSeries:
        """The same function as a dense TrigSeries on T^d."""
        kt = self.sites()
        n1 = int(np.max(np.abs(kt))) if kt.size else 0
        arr = np.zeros((2 * n1 + 1,) + self.coeffs.shape, dtype=complex)
        idx = np.indices(self.coeffs.shape)
        arr[(n1 - kt,) + tuple(idx)] = self.coeffs
        return TrigSeries(arr)


def weighted_norm(f: ResonantSeries, h: float) -> float:
    """sum_k |c_k| exp(2 pi |k| (1 + |mu|) h)."""
    if h < 0:
        raise ValueError("h must be >= 0")
    kabs = np.abs(_lattice(f.box)).sum(axis=-1)
    return float(np.sum(np.abs(f.coeffs) * np.exp(TWO_PI * kabs * (1 + mu_norm(f.mu)) * h)))


# ---------------------------------------------------------------------------
# T and its inverse

def _expm1_over(z):
    """(e^z - 1)/z with the value 1 at z = 0."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-5
    zs = np.where(small, 1.0, z)
    out = np.expm1(zs) / zs
    ser = 1 + z / 2 + z**2 / 6 + z**3 / 24
    return np.where(small, ser, out)


def _over_expm1(z):
    """z/(e^z - 1) with the value 1 at z = 0."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-5
    zs = np.where(small, 1.0, z)
    out = zs / np.expm1(zs)
    ser = 1 - z / 2 + z**2 / 12 - z**4 / 720
    return np.where(small, ser, out)


def apply_T(lam: float, rho: float, f: TrigSeries, mu) -> TrigSeries:
    """Coefficientwise image of a T^d series; k1 modes fold onto k."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if f.dim != len(mu) + 1:
        raise ValueError("f must live on T^d with d = len(mu) + 1")
    if any(p != 1 for p in f.periods):
        raise ValueError("T is defined for period-1 series")
    n1 = f.box[0]
    k1 = np.arange(-n1, n1 + 1).reshape((-1,) + (1,) * len(mu))
    kmu = _lattice(f.box[1:]) @ mu
    x = k1 + kmu[None] + 2 * rho
    factor = _expm1_over(4 * math.pi * lam + 2j * math.pi * x)
    return TrigSeries((f.coeffs * factor).sum(axis=0), real=f.real and rho == 0)


def invert_T(lam: float, rho: float, phi: TrigSeries, mu, resonance_tol: float = RESONANCE_TOL) -> ResonantSeries:
    """Unique site-supported preimage of ``phi`` under T_{lam + i rho}."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if phi.dim != len(mu):
        raise ValueError("phi must live on T^{d-1}")
    x = phase_residual(_lattice(phi.box), mu, rho)
    if lam != 0:
        factor = _over_expm1(4 * math.pi * lam + 2j * math.pi * x)
        case = "1"
    else:
        resonant = np.abs(x) < resonance_tol
        factor = np.where(resonant, 1.0, _over_expm1(2j * math.pi * x))
        case = "3" if np.any(resonant & (phi.coeffs != 0)) else "2"
    return ResonantSeries(mu, rho, phi.coeffs * factor, case)


def invert_T_bound(lam: float) -> float:
    """Sup of |z/(e^z - 1)| over the sites: pi/2 for lam = 0."""
    if lam == 0:
        return math.pi / 2
    return math.pi * math.sqrt(16 * lam * lam + 1) / abs(math.expm1(4 * math.pi * lam))


# ---------------------------------------------------------------------------
# the linearised operators

def elliptic_constant(rho: float, h: float, mu) -> float:
    """C(rho, h, |mu|) = (pi/2) exp(2 pi h (2|rho| + 1)/(1 + |mu|))."""
    return math.pi / 2 * math.exp(TWO_PI * h * (2 * abs(rho) + 1) / (1 + mu_norm(mu)))


def hyperbolic_constant(lam: float, h: float, mu) -> float:
    """Bound for the inverse of L at A = 2 pi lam H in the entry-sum norm.

    The contracting entry meets the factor 1/(1 - e^{-4 pi |lam|}), which
    dominates the expanding one and the diagonal.
    """
    lam = abs(lam)
    return (math.pi * math.sqrt(16 * lam * lam + 1) / -math.expm1(-4 * math.pi * lam)
            * math.exp(TWO_PI * h / (1 + mu_norm(mu))))


def hyperbolic_constant_stated(lam: float, h: float, mu) -> float:
    """pi sqrt(16 lam^2 + 1)/(e^{4 pi lam} - 1) e^{2 pi h/(1 + |mu|)}; too small, kept for comparison."""
    return invert_T_bound(abs(lam)) * math.exp(TWO_PI * h / (1 + mu_norm(mu)))


def invert_L_elliptic(rho: float, G: MatSeries, mu) -> MatSeries:
    """F with L_{2 pi rho J} F = G.

    An su11-tagged ``G`` gives an su11-tagged result, an sl2R one an sl2R
    result.  In su(1,1) coordinates G = {g1, g2} the solution is
    f1 = T_0^{-1} g1 (real) and f2 = T_{-i rho}^{-1} g2.
    """
    Gs = G if G.tag == "su11" else to_su11(G)
    g1 = TrigSeries(-1j * Gs.coeffs[0, 0], Gs.periods).realify()
    g2 = TrigSeries(Gs.coeffs[0, 1], Gs.periods)
    f1 = invert_T(0.0, 0.0, g1, mu).to_trig().realify()
    f2 = invert_T(0.0, -rho, g2, mu).to_trig()
    Fs = MatSeries.from_entries([[1j * f1, f2], [f2.conj(), -1j * f1]], tag="su11")
    return Fs if G.tag == "su11" else to_sl2(Fs)


def invert_L_hyperbolic(lam: float, G: MatSeries, mu) -> MatSeries:
    """F with L_{2 pi lam H} F = G; the off-diagonal entries see T_{-lam} and T_{lam}."""
    if lam == 0:
        raise ValueError("hyperbolic inverse needs lam != 0")
    f11 = invert_T(0.0, 0.0, G.entry(0, 0), mu).to_trig().realify()
    f12 = invert_T(-lam, 0.0, G.entry(0, 1), mu).to_trig().realify()
    f21 = invert_T(lam, 0.0, G.entry(1, 0), mu).to_trig().realify()
    return MatSeries.from_entries([[f11, f12], [f21, -f11]], tag="sl2R")


# ---------------------------------------------------------------------------
# nonlinear local embedding

class EmbedError(RuntimeError):
    def __init__(self, kind: str, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.kind = kind
        self.diagnostics = diagnostics or {}


@dataclass
class EmbedReport:
    A: np.ndarray
    G: MatSeries
    mu: np.ndarray
    h: float
    tol: float
    kind: str
    A_tilde: np.ndarray
    F: MatSeries
    residual_history: list = field(default_factory=list)
    verify_residual: float = float("nan")
    iterations: int = 0
    converged: bool = False
    certificates: dict = field(default_factory=dict)
    frame: np.ndarray = field(default_factory=lambda: np.eye(2))
    F_normal: MatSeries | None = None

    def system(self) -> QPSystem:
        return QPSystem(self.mu, self.A_tilde, self.F, self.h / (1 + mu_norm(self.mu)))


@dataclass(frozen=True)
class EmbedOptions:
    box: int | None = None
    grid: int | None = None
    max_iter: int = 40
    stall: int = 3
    flow_tol: float = 1e-12
    coef_floor: float = 1e-14
    force: bool = False


def target_samples(A, G: MatSeries, theta) -> np.ndarray:
    """exp(A) exp(G(theta)) pointwise."""
    return expm_sl2(np.asarray(A, dtype=float)) @ expm_sl2(G(theta))


def _op_norm(X):
    return np.linalg.norm(X, ord=2, axis=(-2, -1))


def _embed_grid(G: MatSeries, opts: EmbedOptions):
    d1 = G.dim
    n_out = opts.box if opts.box is not None else max(6 * max(G.box), 8)
    m = opts.grid if opts.grid is not None else 4 * (2 * n_out + 1)
    return (n_out,) * d1, (m,) * d1


def poincare_defect(sys: QPSystem, A, G: MatSeries, theta, tol: float = DEFAULT_TOL):
    """sup over ``theta`` (points of T^{d-1}) of ||Phi^1(0, theta) - e^A e^{G(theta)}||."""
    theta = np.asarray(theta, dtype=float).reshape(-1, G.dim)
    pts = np.concatenate([np.zeros((len(theta), 1)), theta], axis=1)
    Phi = integrate_batch(sys, pts, np.ones(len(pts)), tol).Phi
    X = target_samples(A, G, theta)
    return float(np.max(_op_norm(Phi - X))), Phi


def embed_local(A, G: MatSeries, mu, h: float, tol: float = 1e-8,
                options: EmbedOptions | None = None) -> EmbedReport:
    """Generator A_tilde + F whose Poincare map is theta~ -> e^A e^{G(theta~)}."""
    opts = options or EmbedOptions()
    A = np.asarray(A, dtype=float)
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if G.tag != "sl2R":
        raise ValueError("G must be an sl2R-tagged MatSeries")
    if G.dim != len(mu):
        raise ValueError("G must live on T^{d-1}")
    cls = classify(A)
    box, grid = _embed_grid(G, opts)
    hp = h / (1 + mu_norm(mu))

    # normal frame: quantities are Q (.) Q^{-1}
    Q = cls.P
    A_n = cls.normal_form
    G_n = G.conjugated(cls.P, cls.P_inv)
    kind = cls.kind
    scale = None
    if kind == "parabolic":
        eps = G_n.su11_norm(h)
        if eps == 0.0:
            F = MatSeries.constant(A, len(mu) + 1, tag="sl2R")
            return EmbedReport(A, G, mu, h, tol, kind, np.zeros((2, 2)), F, [0.0], 0.0, 0, True,
                               {"C": float("nan"), "normF": F.su11_norm(hp), "normG": 0.0,
                                "norm": "su11", "eps": 0.0}, Q, F)
        scale = np.diag([eps**0.25, eps**-0.25])
        Q = scale @ cls.P
        G_lin = G_n.conjugated(scale) + MatSeries.constant(scale @ A_n @ np.linalg.inv(scale), len(mu), tag="sl2R")
        A_n = np.zeros((2, 2))
    else:
        G_lin = G_n

    if kind == "hyperbolic":
        C = hyperbolic_constant(cls.lam, h, mu)
        normG = G_n.sl2_entry_norm(h)
        norm_name = "entries"
        solve = lambda D: invert_L_hyperbolic(cls.lam, D, mu)  # noqa: E731
        norm_F = lambda F: F.sl2_entry_norm(hp)  # noqa: E731
    else:
        rho = cls.rho if kind == "elliptic" else 0.0
        C = elliptic_constant(rho, h, mu)
        normG = G_lin.su11_norm(h)
        norm_name = "su11"
        solve = lambda D: invert_L_elliptic(rho, D, mu)  # noqa: E731
        norm_F = lambda F: F.su11_norm(hp)  # noqa: E731

    certificates = {"C": C, "normG": normG, "norm": norm_name, "threshold": 1.0 / C**2}
    if kind == "parabolic":
        certificates["eps"] = G_n.su11_norm(h)
    if normG >= 1.0 / C**2 and not opts.force:
        raise EmbedError("threshold", f"||G||_h = {normG:.3g} exceeds 1/C^2 = {1 / C**2:.3g}",
                         {"normG": normG, "C": C, "threshold": 1.0 / C**2, "kind": kind})

    Qinv = np.linalg.inv(Q)
    theta = torus_grid(grid)
    flat = theta.reshape(-1, len(mu))
    pts = np.concatenate([np.zeros((len(flat), 1)), flat], axis=1)
    X = target_samples(A, G, flat)
    X_n = Q @ X @ Qinv
    X_n_inv = inv_sl2(X_n)

    F_n = MatSeries.constant(np.zeros((2, 2)), len(mu) + 1, tag="sl2R")
    history: list[float] = []
    it = 0
    while True:
        sys = QPSystem(mu, A_n, F_n, hp)
        Phi_n = integrate_batch(sys, pts, np.ones(len(pts)), opts.flow_tol).Phi
        res = float(np.max(_op_norm(Qinv @ Phi_n @ Q - X)))
        history.append(res)
        if res <= tol / 10 or it >= opts.max_iter:
            break
        if len(history) > opts.stall and all(
                history[-j] >= history[-j - 1] for j in range(1, opts.stall + 1)):
            if res <= tol:
                break
            raise EmbedError("divergence", f"residual stalled at {res:.3g}",
                             {"residuals": history, "kind": kind})
        D = logm_sl2(X_n_inv @ Phi_n).reshape(grid + (2, 2))
        D_ser = project_matrix(D, box, tag="sl2R")
        # round-off in high modes would dominate the weighted norms
        D_ser = MatSeries(np.where(np.abs(D_ser.coeffs) < opts.coef_floor, 0, D_ser.coeffs),
                          D_ser.periods, "sl2R")
        F_n = F_n - solve(D_ser)
        it += 1

    A_tilde = Qinv @ A_n @ Q
    F = F_n.conjugated(Qinv, Q).retag("sl2R")
    # verification on a grid shifted by half a spacing
    shifted = (flat + 0.5 / np.asarray(grid)) % 1.0
    sys_n = QPSystem(mu, A_n, F_n, hp)
    Phi_chk = integrate_batch(sys_n, np.concatenate([np.zeros((len(shifted), 1)), shifted], 1),
                              np.ones(len(shifted)), opts.flow_tol).Phi
    ver = float(np.max(_op_norm(Qinv @ Phi_chk @ Q - target_samples(A, G, shifted))))
    certificates["normF"] = norm_F(F_n)
    certificates["bound_ok"] = certificates["normF"] <= 1.1 * C * normG
    return EmbedReport(A=A, G=G, mu=mu, h=h, tol=tol, kind=kind, A_tilde=A_tilde, F=F,
                       residual_history=history, verify_residual=ver, iterations=it,
                       converged=bool(ver <= tol), certificates=certificates, frame=Q, F_normal=F_n)


def roundtrip_defect(report: EmbedReport, grid: int = 64, tol: float = DEFAULT_TOL) -> tuple[float, np.ndarray]:
    """Re-integrate the reported system and compare with e^A e^G on a grid."""
    theta = torus_grid((grid,) * len(report.mu)).reshape(-1, len(report.mu))
    sys = report.system()
    pts = np.concatenate([np.zeros((len(theta), 1)), theta], axis=1)
    Phi = integrate_batch(sys, pts, np.ones(len(pts)), tol).Phi
    defect = _op_norm(Phi - target_samples(report.A, report.G, theta))
    return float(np.max(defect)), defect.reshape((grid,) * len(report.mu))


# ---------------------------------------------------------------------------
# uniformly hyperbolic diagonal cocycles

def embed_uh_diagonal(phi: TrigSeries, mu) -> QPSystem:
    """Generator diag(f, -f) with T_0 f = phi; its Poincare map is diag(e^phi, e^-phi)."""
    if not phi.real:
        raise ValueError("phi must be real")
    f = invert_T(0.0, 0.0, phi, mu).to_trig().realify()
    F = MatSeries.from_entries([[f, 0.0], [0.0, -f]], tag="sl2R")
    return QPSystem(mu, np.zeros((2, 2)), F)


# ---------------------------------------------------------------------------
# flows built from conjugacies

@dataclass(frozen=True, eq=False)
class ExtendedFlow:
    """Phi^t(x1, x~) = P(x1 + t, y) P(x1, y)^{-1}, y = x~ - x1 mu, with
    P(s, y) = B(y + s mu)^{-1} Phi~^s(0, y) B(y).

    The Poincare map is B(y + mu)^{-1} A~(y) B(y) and the family is
    1-periodic in x1 and periodic in x~ with the period of B.
    """

    B: MatSeries
    flow_tilde: QPSystem
    tol: float = DEFAULT_TOL

    @property
    def mu(self):
        return self.flow_tilde.mu

    def _P(self, s, y):
        pts = np.concatenate([np.zeros((len(y), 1)), y], axis=1)
        Phi = integrate_batch(self.flow_tilde, pts, s, self.tol).Phi
        return inv_sl2(self.B(y + s[:, None] * self.mu)) @ Phi @ self.B(y)

    def phi(self, t, theta) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), theta.shape[:1])
        x1 = theta[:, 0]
        y = theta[:, 1:] - x1[:, None] * self.mu
        return self._P(x1 + t, y) @ inv_sl2(self._P(x1, y))


def extend_conjugacy_to_flow(B, flow_tilde: QPSystem, tol: float = DEFAULT_TOL) -> ExtendedFlow:
    """Flow whose Poincare cocycle is B(.+mu)^{-1} A~ B, A~ the Poincare map of ``flow_tilde``."""
    B = getattr(B, "B", B)
    return ExtendedFlow(B, flow_tilde, tol)


@dataclass(frozen=True, eq=False)
class LiftedConjugacy:
    """B_bar(x1, x~) = Phi^{x1}(0, y) B_n(y) Phi_bar^{x1}(0, y)^{-1}, y = x~ - x1 mu."""

    B_n: MatSeries
    flow: object
    flow_bar: object

    @property
    def mu(self):
        return self.flow.mu

    def __call__(self, theta) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        x1 = theta[:, 0]
        y = theta[:, 1:] - x1[:, None] * self.mu
        base = np.concatenate([np.zeros((len(y), 1)), y], axis=1)
        Phi = self.flow.phi(x1, base)
        Phi_bar = self.flow_bar.phi(x1, base)
        return Phi @ self.B_n(y) @ inv_sl2(Phi_bar)


def lift_conjugacy_to_flow(B_n, flow, flow_bar, grid: int = 32, check_tol: float = 1e-8) -> LiftedConjugacy:
    """Extend a conjugacy of the Poincare cocycles to the flows.

    Requires A(theta) = B_n(theta + mu) A_bar(theta) B_n(theta)^{-1} on a
    probe grid, A and A_bar the Poincare maps of ``flow`` and ``flow_bar``.
    """
    B_n = getattr(B_n, "B", B_n)
    mu = np.atleast_1d(flow.mu)
    pts = section_grid(grid, len(mu)).reshape(-1, len(mu) + 1)
    y = pts[:, 1:] * np.asarray(B_n.periods, dtype=float)
    pts = np.concatenate([pts[:, :1], y], axis=1)
    ones = np.ones(len(pts))
    A = flow.phi(ones, pts)
    A_bar = flow_bar.phi(ones, pts)
    err = float(np.max(_op_norm(B_n(y + mu) @ A_bar @ inv_sl2(B_n(y)) - A)))
    if err > check_tol:
        raise ValueError(f"B_n does not conjugate the Poincare maps (defect {err:.3g})")
    return LiftedConjugacy(B_n, flow, flow_bar)


def conjugated_system(C: MatSeries, sys: QPSystem) -> QPSystem:
    """Generator C (A + F) C^{-1} + (d_omega C) C^{-1}, C given on T^{d-1}.

    Its flow is C(theta + t omega) Phi^t(theta) C(theta)^{-1}; the result is
    an exact series computation.
    """
    mu = sys.mu
    d = sys.dim
    Cd = MatSeries(C.coeffs[:, :, None], (1,) + C.periods, "general")
    Cinv = MatSeries.from_entries(
        [[Cd.entry(1, 1), -Cd.entry(0, 1)], [-Cd.entry(1, 0), Cd.entry(0, 0)]], "general")
    gen = MatSeries.constant(sys.A, d, (1,) + C.periods, "general")
    if sys.F is not None:
        gen = gen + sys.F.with_periods((1,) + C.periods).retag("general")
    # d_omega C: the mode k of C picks up 2 pi i <k/period, mu>
    ks = _lattice(C.box) / np.asarray(C.periods, dtype=float)
    dC = MatSeries(Cd.coeffs * (2j * np.pi * (ks @ mu))[None, None, None], Cd.periods, "general")
    total = Cd.matmul(gen).matmul(Cinv) + dC.matmul(Cinv)
    c = total.coeffs
    c = (c + np.conj(c[(slice(None), slice(None)) + (slice(None, None, -1),) * d])) / 2
    return QPSystem(mu, np.zeros((2, 2)), MatSeries(c, total.periods, "sl2R"), sys.h)

