"""Discrete quasi-periodic SL(2,R) cocycles (theta, v) -> (theta + mu, A(theta) v).

Angles are tracked in radians internally and reported in turns.  The
fibered rotation number uses the factorisation A = R_psi U with U upper
triangular (positive diagonal): U moves any direction by less than half a
turn, so the angle increment of x under A is psi(theta) plus a principal
value, where psi is a continuous lift of the angle of A(theta) e_1.  Such a
lift exists exactly when the cocycle has degree zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fourier import MatSeries, TrigSeries, expm_sl2, inv_sl2, project_matrix, torus_grid
from .flows import RotationEstimate

TWO_PI = 2 * math.pi


class DegreeError(ValueError):
    """Rotation-number operations need a degree-zero fiber."""


class GridInsufficient(ValueError):
    """Probe grid too coarse to track an angle unambiguously."""


def _wrap(a):
    """Principal value in [-pi, pi)."""
    return (a + np.pi) % TWO_PI - np.pi


@dataclass(frozen=True, eq=False)
class ExpPair:
    """theta -> exp(A) exp(G(theta)) without projection."""

    A: np.ndarray
    G: MatSeries

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        object.__setattr__(self, "_eA", expm_sl2(self.A))

    @property
    def periods(self):
        return self.G.periods

    def __call__(self, theta):
        return self._eA @ expm_sl2(self.G(theta))


@dataclass(frozen=True, eq=False)
class ConjugatedFiber:
    """theta -> B(theta + mu) A(theta) B(theta)^{-1}, evaluated pointwise."""

    fiber: object
    B: MatSeries
    mu: np.ndarray

    @property
    def periods(self):
        return tuple(max(a, b) for a, b in zip(self.fiber.periods, self.B.periods))

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.B(theta + self.mu) @ self.fiber(theta) @ inv_sl2(self.B(theta))


@dataclass(frozen=True, eq=False)
class Cocycle:
    mu: np.ndarray
    fiber: object
    homotopy_degree: tuple = None

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "mu", mu)
        if self.homotopy_degree is None:
            object.__setattr__(self, "homotopy_degree", (0,) * len(mu))
        probe = torus_grid((64,) if len(mu) == 1 else (8,) * len(mu), self.periods)
        det = np.linalg.det(self(probe))
        if np.max(np.abs(det - 1)) > 1e-12 * max(1.0, float(np.max(np.abs(self(probe))))) ** 2:
            raise ValueError("fiber is not SL(2,R)-valued on the probe grid")

    @property
    def periods(self):
        return tuple(getattr(self.fiber, "periods", (1,) * len(self.mu)))

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        if len(self.mu) == 1 and (theta.ndim == 0 or theta.shape[-1] != 1):
            theta = theta[..., None]
        vals = self.fiber(theta)
        return vals.real if np.iscomplexobj(vals) else vals

    def orbit(self, theta, n: int) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        return theta + np.arange(n)[:, None] * self.mu


def iterate(c: Cocycle, theta, n: int) -> np.ndarray:
    """A_n(theta) = A(theta + (n-1) mu) ... A(theta)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    out = np.eye(2)
    if n == 0:
        return out
    mats = c(c.orbit(theta, n))
    for m in mats:
        out = m @ out
    return out


# ---------------------------------------------------------------------------
# continuous lift of the first-column angle

def _unwrap_nd(a: np.ndarray) -> np.ndarray:
    if a.ndim == 1:
        return np.unwrap(a)
    out = a.copy()
    out[0] = _unwrap_nd(a[0])
    return np.unwrap(out, axis=0)


@dataclass(frozen=True, eq=False)
class AngleLift:
    """Continuous psi with psi = angle of A(theta) e_1 mod 2 pi."""

    shape: tuple
    periods: tuple
    values: np.ndarray

    def __call__(self, theta, psi):
        """Branch of the principal angles ``psi`` nearest the grid lift."""
        theta = np.asarray(theta, dtype=float)
        idx = tuple(
            np.rint((theta[..., i] % p) / p * m).astype(int) % m
            for i, (m, p) in enumerate(zip(self.shape, self.periods)))
        ref = self.values[idx]
        return ref + _wrap(psi - ref)


def angle_lift(c: Cocycle, grid: int | None = None) -> AngleLift:
    dim = len(c.mu)
    m = grid or (512 if dim == 1 else 64)
    shape = (m,) * dim
    pts = torus_grid(shape, c.periods)
    A = c(pts)
    psi = np.arctan2(A[..., 1, 0], A[..., 0, 0])
    lifted = _unwrap_nd(psi)
    for ax in range(dim):
        step = np.abs(np.diff(lifted, axis=ax))
        if step.size and step.max() >= np.pi / 2:
            raise GridInsufficient("first-column angle jumps by >= 1/4 turn between grid points")
        closure = lifted.take([0], axis=ax) - lifted.take([-1], axis=ax)
        if np.max(np.abs(closure)) >= np.pi:
            raise DegreeError("first column winds around an axis; degree is nonzero")
    return AngleLift(shape=shape, periods=c.periods, values=lifted)


def _angle_run(c: Cocycle, theta0, n: int, x0, lift: AngleLift, record_at=()):
    """Iterate one orbit; returns (total angle, log growth, angles at record_at)."""
    pts = c.orbit(theta0, n)
    x = np.asarray(x0, dtype=float).reshape(2)
    nrm = math.hypot(*x)
    if nrm == 0:
        raise ValueError("x0 must be nonzero")
    x0_, x1_ = x / nrm
    ang = math.atan2(x1_, x0_)
    total = 0.0
    logs = 0.0
    marks = {}
    want = set(int(k) for k in record_at)
    chunk = 4096
    for start in range(0, n, chunk):
        sl = slice(start, min(n, start + chunk))
        mats = c(pts[sl])
        psi = np.arctan2(mats[:, 1, 0], mats[:, 0, 0])
        psi_hat = lift(pts[sl], psi)
        a, b, cc, d = (mats[:, 0, 0].tolist(), mats[:, 0, 1].tolist(),
                       mats[:, 1, 0].tolist(), mats[:, 1, 1].tolist())
        ps, ph = psi.tolist(), psi_hat.tolist()
        for j in range(len(a)):
            y0 = a[j] * x0_ + b[j] * x1_
            y1 = cc[j] * x0_ + d[j] * x1_
            new = math.atan2(y1, y0)
            r = new - ps[j] - ang
            r = (r + math.pi) % TWO_PI - math.pi
            total += ph[j] + r
            ang = new
            m = math.hypot(y0, y1)
            logs += math.log(m)
            x0_, x1_ = y0 / m, y1 / m
            if start + j + 1 in want:
                marks[start + j + 1] = total
    return total, logs, marks


def _qn_list(mu, n):
    from .flows import _qn_times

    return _qn_times(mu, n)


def rotation_number_cocycle(c: Cocycle, N: int, theta0=None, x0=(1.0, 0.0),
                            lift_grid: int | None = None) -> RotationEstimate:
    """Fibered rotation number in turns, reported in [0, 1)."""
    if any(k != 0 for k in c.homotopy_degree):
        raise DegreeError("rotation number needs a degree-zero cocycle")
    if N < 1:
        raise ValueError("N must be >= 1")
    theta0 = np.zeros(len(c.mu)) if theta0 is None else np.asarray(theta0, dtype=float)
    lift = angle_lift(c, lift_grid)
    qn = _qn_list(c.mu, N)
    total, _, marks = _angle_run(c, theta0, N, x0, lift, record_at=qn)
    value = total / (TWO_PI * N)
    acc = acc_t = None
    err = 1.0 / N
    if qn:
        q = qn[-1]
        acc, acc_t = marks[q] / (TWO_PI * q), float(q)
        err = max(err, abs(acc - value))
        acc = acc % 1.0
    return RotationEstimate(value=value % 1.0, err=err, accelerated=acc, accelerated_time=acc_t)


def lyapunov_cocycle(c: Cocycle, N: int, n_theta: int = 32, seed: int = 0) -> float:
    """(1/N) ln ||A_N(theta)|| averaged over seeded random theta."""
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = np.random.default_rng(seed)
    periods = np.asarray(c.periods, dtype=float)
    thetas = rng.random((n_theta, len(c.mu))) * periods
    P = np.broadcast_to(np.eye(2), (n_theta, 2, 2)).copy()
    logs = np.zeros(n_theta)
    chunk = 2048
    for start in range(0, N, chunk):
        k = np.arange(start, min(N, start + chunk))
        pts = thetas[None, :, :] + k[:, None, None] * c.mu
        mats = c(pts)
        for m in mats:
            P = m @ P
            nrm = np.linalg.norm(P, ord=2, axis=(1, 2))
            logs += np.log(nrm)
            P /= nrm[:, None, None]
    return float(np.mean(logs) / N)


# ---------------------------------------------------------------------------
# conjugacies and degree

def degree(B, grid: int = 512) -> int:
    """Winding of the direction of B(theta) e_1 over one period (1-frequency)."""
    periods = tuple(B.periods)
    if len(periods) != 1:
        raise ValueError("degree is computed for one frequency only")
    p = periods[0]
    theta = np.arange(grid + 1) * (p / grid)
    col = B(theta[:, None])[:, :, 0]
    ang = np.arctan2(col[:, 1].real, col[:, 0].real)
    inc = _wrap(np.diff(ang))
    if np.max(np.abs(inc)) >= np.pi / 2:
        raise GridInsufficient("increment of at least 1/4 turn; refine the grid")
    return int(round(inc.sum() / TWO_PI))


@dataclass(frozen=True, eq=False)
class Conjugacy:
    B: MatSeries
    degree: tuple = None

    def __post_init__(self):
        periods = self.B.periods
        probe = torus_grid((64,) * len(periods) if len(periods) == 1 else (8,) * len(periods), periods)
        det = np.linalg.det(self.B(probe))
        if np.max(np.abs(det - 1)) > 1e-10:
            raise ValueError("conjugacy is not SL(2,R)-valued on the probe grid")
        if self.degree is None:
            deg = (degree(self.B),) if len(periods) == 1 else (0,) * len(periods)
            object.__setattr__(self, "degree", deg)
        elif len(periods) == 1 and degree(self.B) != self.degree[0]:
            raise ValueError("declared degree does not match the winding of B e_1")

    @property
    def half_period(self) -> bool:
        return any(p == 2 for p in self.B.periods)


def conjugate(c: Cocycle, conj: Conjugacy, box=None, grid=None) -> Cocycle:
    """Fiber B(theta + mu) A(theta) B(theta)^{-1}.

    Without ``box`` the fiber is composed pointwise; with ``box`` it is
    sampled on ``grid`` and projected (periods follow B).
    """
    fiber = ConjugatedFiber(c.fiber, conj.B, c.mu)
    if box is not None:
        box = (int(box),) * len(c.mu) if np.isscalar(box) else tuple(box)
        grid = grid or tuple(2 * (2 * n + 1) for n in box)
        grid = (int(grid),) * len(c.mu) if np.isscalar(grid) else tuple(grid)
        pts = torus_grid(grid, fiber.periods)
        fiber = project_matrix(fiber(pts), box, fiber.periods, "SL2R_valued")
    return Cocycle(c.mu, fiber, c.homotopy_degree)


# ---------------------------------------------------------------------------
# uniform hyperbolicity (finite-scale heuristic)

@dataclass(frozen=True)
class UHResult:
    status: str  # "certified_UH" | "certified_not_UH" | "inconclusive"
    min_gap: float
    max_direction_jump: float  # turns of the projective line
    witness: tuple | None = None
    rigorous: bool = False


def uh_certificate(c: Cocycle, N: int, grid: int = 64, margin: float = 0.1) -> UHResult:
    """Singular-value gap and expanding-direction continuity of A_N on a grid.

    Not a proof: a positive answer says the finite-scale cone picture is
    consistent, a negative one exhibits a grid point with no gap.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    dim = len(c.mu)
    shape = (grid,) * dim
    pts = torus_grid(shape, c.periods).reshape(-1, dim)
    P = np.broadcast_to(np.eye(2), (len(pts), 2, 2)).copy()
    logs = np.zeros(len(pts))
    for k in range(N):
        P = c(pts + k * c.mu) @ P
        nrm = np.linalg.norm(P, axis=(1, 2))
        logs += np.log(nrm)
        P /= nrm[:, None, None]
    U, s, Vt = np.linalg.svd(P)
    # s1/s2 = s1^2 for det 1, in log form to avoid overflow
    log_s1 = logs + np.log(s[:, 0])
    log_gap = 2 * log_s1
    i = int(np.argmin(log_gap))
    min_gap = float(np.exp(min(log_gap[i], 700.0)))
    if log_gap[i] < math.log1p(margin):
        return UHResult("certified_not_UH", min_gap, float("nan"), witness=tuple(pts[i]))
    ang = np.arctan2(Vt[:, 0, 1], Vt[:, 0, 0]).reshape(shape)
    jump = 0.0
    for ax in range(dim):
        diff = np.diff(ang, axis=ax, append=ang.take([0], axis=ax))
        wrapped = (diff + np.pi / 2) % np.pi - np.pi / 2
        jump = max(jump, float(np.max(np.abs(wrapped))) / np.pi)
    if log_gap[i] >= 2 * math.log1p(margin) and jump < 0.25:
        return UHResult("certified_UH", min_gap, jump)
    return UHResult("inconclusive", min_gap, jump)


# ---------------------------------------------------------------------------
# Schroedinger cocycles

def almost_mathieu_potential(coupling: float) -> TrigSeries:
    """V(theta) = 2 lambda cos(2 pi theta)."""
    return TrigSeries.from_modes({(1,): coupling, (-1,): coupling}, real=True)


def schrodinger_cocycle(V: TrigSeries, E: float, mu) -> Cocycle:
    """Fiber [[V - E, -1], [1, 0]]."""
    if not V.real:
        raise ValueError("potential must be real")
    fiber = MatSeries.from_entries([[V - E, -1.0], [1.0, 0.0]], tag="SL2R_valued")
    return Cocycle(mu, fiber)


@dataclass(frozen=True)
class ScanResult:
    E: np.ndarray
    rot: np.ndarray
    lyap: np.ndarray
    rot_err: np.ndarray
    monotone_violations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def scan_energy(V: TrigSeries, mu, energies, N: int, theta0=0.0) -> ScanResult:
    """Rotation number and Lyapunov exponent of S_E^V for every E on one orbit.

    The angle lift uses psi = arg(V - E + i) in (0, pi), the canonical lift
    for Schroedinger fibers, so rot takes values in [0, 1/2] and increases
    with E.
    """
    E = np.asarray(energies, dtype=float)
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    qn = _qn_list(mu, N)
    q_mark = qn[-1] if qn else None
    x0 = np.ones_like(E)
    x1 = np.zeros_like(E)
    ang = np.zeros_like(E)
    total = np.zeros_like(E)
    logs = np.zeros_like(E)
    at_q = None
    chunk = 4096
    for start in range(0, N, chunk):
        k = np.arange(start, min(N, start + chunk))
        v = V(theta0 + k[:, None] * mu).real
        for j, vk in enumerate(v):
            w = vk - E
            y0 = w * x0 - x1
            y1 = x0
            psi = np.arctan2(1.0, w)
            new = np.arctan2(y1, y0)
            total += psi + _wrap(new - psi - ang)
            ang = new
            m = np.hypot(y0, y1)
            logs += np.log(m)
            x0, x1 = y0 / m, y1 / m
            if q_mark is not None and start + j + 1 == q_mark:
                at_q = total.copy()
    rot = total / (TWO_PI * N)
    err = np.full_like(E, 1.0 / N)
    if at_q is not None:
        err = np.maximum(err, np.abs(at_q / (TWO_PI * q_mark) - rot))
    drop = rot[:-1] - rot[1:] - (err[:-1] + err[1:])
    return ScanResult(E=E, rot=rot, lyap=logs / N, rot_err=err,
                      monotone_violations=np.nonzero(drop > 0)[0])
