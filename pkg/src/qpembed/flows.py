"""Quasi-periodic linear flows on SL(2,R).

The system is x' = (A + F(theta)) x with theta' = omega = (1, mu) on T^d.
Propagators are built from Magnus steps: every step multiplies by the
exponential of a trace-free matrix, so det Phi = 1 up to round-off no
matter how coarse the step.  Step control is by step doubling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fourier import MatSeries, commutator, expm_sl2

SQRT15 = math.sqrt(15.0)
SQRT3 = math.sqrt(3.0)

DEFAULT_TOL = 1e-12
MAX_STEP = 0.05
MIN_STEP = 1e-10


class StepUnderflow(RuntimeError):
    """Adaptive step fell below the floor; generator too rough for tol."""


def _omega(mu) -> np.ndarray:
    return np.concatenate([[1.0], np.atleast_1d(np.asarray(mu, dtype=float))])


@dataclass(frozen=True, eq=False)
class QPSystem:
    """x' = (A_tilde + F(theta)) x, theta' = (1, mu)."""

    mu: np.ndarray
    A: np.ndarray
    F: MatSeries | None = None
    h: float = 0.5
    _freq: np.ndarray = field(init=False, repr=False)
    _coef: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        A = np.asarray(self.A, dtype=float)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "A", A)
        if abs(np.trace(A)) > 1e-12 * max(1.0, np.linalg.norm(A)):
            raise ValueError("A_tilde must be trace-free")
        d = len(mu) + 1
        if self.F is None:
            freq, coef = np.zeros((0, d)), np.zeros((0, 4), dtype=complex)
        else:
            if self.F.dim != d:
                raise ValueError(f"F lives on T^{self.F.dim}, expected T^{d}")
            grids = np.meshgrid(*[np.arange(-n, n + 1) for n in self.F.box], indexing="ij")
            ks = np.stack([g.ravel() for g in grids], axis=-1)
            flat = self.F.coeffs.reshape(4, -1).T
            keep = np.any(flat != 0, axis=1)
            freq = ks[keep] / np.asarray(self.F.periods, dtype=float)
            coef = flat[keep]
            if np.max(np.abs(coef[:, 0] + coef[:, 3]), initial=0.0) > 1e-12 * max(1.0, np.abs(coef).sum()):
                raise ValueError("F must be trace-free")
        object.__setattr__(self, "_freq", freq)
        object.__setattr__(self, "_coef", coef)

    @property
    def dim(self) -> int:
        return len(self.mu) + 1

    @property
    def omega(self) -> np.ndarray:
        return _omega(self.mu)

    def generator(self, theta) -> np.ndarray:
        """A_tilde + F(theta) for theta of shape (..., d)."""
        theta = np.asarray(theta, dtype=float)
        out = np.broadcast_to(self.A, theta.shape[:-1] + (2, 2)).copy()
        if len(self._coef):
            phase = np.exp(2j * np.pi * (theta @ self._freq.T))
            out += (phase @ self._coef).real.reshape(theta.shape[:-1] + (2, 2))
        return out

    def phi(self, t, theta, tol: float = DEFAULT_TOL) -> np.ndarray:
        """Batched propagator Phi^t(theta); ``theta`` has shape (B, d)."""
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), theta.shape[:1])
        return integrate_batch(self, theta, t, tol).Phi


@dataclass(frozen=True)
class FlowSegment:
    theta0: np.ndarray
    t: float
    Phi: np.ndarray
    err_est: float
    steps: int = 0

    @property
    def det_err(self) -> float:
        return float(np.max(np.abs(np.linalg.det(self.Phi) - 1.0)))


# ---------------------------------------------------------------------------
# Magnus steps.  ``gen(s)`` returns the scaled generator T_b * G(theta_b + s T_b omega)
# for all batch members, shape (B, 2, 2).

def _magnus6(gen, s, H):
    c = SQRT15 / 10
    A1, A2, A3 = gen(s + (0.5 - c) * H), gen(s + 0.5 * H), gen(s + (0.5 + c) * H)
    a1 = H * A2
    a2 = (SQRT15 * H / 3) * (A3 - A1)
    a3 = (10 * H / 3) * (A3 - 2 * A2 + A1)
    C1 = commutator(a1, a2)
    C2 = -commutator(a1, 2 * a3 + C1) / 60
    return a1 + a3 / 12 + commutator(-20 * a1 - a3 + C1, a2 + C2) / 240


def _magnus4(gen, s, H):
    c = SQRT3 / 6
    A1, A2 = gen(s + (0.5 - c) * H), gen(s + (0.5 + c) * H)
    return (H / 2) * (A1 + A2) + (SQRT3 * H * H / 12) * commutator(A2, A1)


_SCHEMES = {4: (_magnus4, 5), 6: (_magnus6, 7)}


def march(sys: QPSystem, theta0, T, tol: float = DEFAULT_TOL, state=None,
          on_step=None, stops=(), order: int = 6):
    """Advance ``state`` (B, 2, k) from normalized time 0 to 1.

    Member b follows Phi^{s T_b}(theta0_b).  ``on_step(s, state)`` is called
    after every accepted step and may return a replacement state (used for
    renormalisation).  ``stops`` are normalized times the stepper lands on
    exactly.  Returns (state, error_estimate, steps).
    """
    theta0 = np.atleast_2d(np.asarray(theta0, dtype=float))
    B = theta0.shape[0]
    T = np.broadcast_to(np.asarray(T, dtype=float), (B,)).copy()
    if state is None:
        state = np.broadcast_to(np.eye(2), (B, 2, 2)).copy()
    omega = sys.omega
    Tmax = float(np.max(np.abs(T))) if B else 0.0
    if Tmax == 0.0:
        return state, 0.0, 0
    scheme, expo = _SCHEMES[order]

    def gen(s):
        pts = theta0 + (s * T)[:, None] * omega
        return T[:, None, None] * sys.generator(pts)

    cap = min(MAX_STEP, sys.h / 4 if sys.h > 0 else MAX_STEP) / Tmax
    targets = sorted({float(x) for x in stops if 0 < x < 1} | {1.0})
    s, H, err_total, steps = 0.0, cap, 0.0, 0
    for target in targets:
        while s < target - 1e-15:
            H = min(H, cap)
            last = s + H >= target - 1e-15
            Hs = target - s if last else H
            E_full = expm_sl2(scheme(gen, s, Hs))
            E_a = expm_sl2(scheme(gen, s, Hs / 2))
            E_b = expm_sl2(scheme(gen, s + Hs / 2, Hs / 2))
            E_two = E_b @ E_a
            err = float(np.max(np.abs(E_two - E_full))) if B else 0.0
            if err <= tol or Hs <= MIN_STEP:
                if err > tol and Hs <= MIN_STEP:
                    raise StepUnderflow(f"step {Hs:.3g} below floor with error {err:.3g} > tol {tol:.3g}")
                state = E_two @ state
                s = target if last else s + Hs
                steps += 1
                err_total += err
                if on_step is not None:
                    new = on_step(s, state)
                    if new is not None:
                        state = new
            fac = 2.0 if err == 0 else min(2.0, max(0.2, 0.9 * (tol / err) ** (1.0 / expo)))
            if err <= tol:
                H = max(H, Hs * fac) if last else Hs * fac
            else:
                H = Hs * min(fac, 0.5)
            if H < MIN_STEP:
                raise StepUnderflow(f"step {H:.3g} below floor")
    return state, err_total, steps


class DetMonitor:
    """Largest |det Phi - 1| over all ``integrate_batch`` calls since ``reset``."""

    def __init__(self):
        self.reset()

    def reset(self):
        self.max_err = 0.0
        self.calls = 0

    def record(self, Phi):
        if len(Phi):
            self.max_err = max(self.max_err, float(np.max(np.abs(np.linalg.det(Phi) - 1.0))))
        self.calls += 1


DET_MONITOR = DetMonitor()


def integrate_batch(sys: QPSystem, theta0, t, tol: float = DEFAULT_TOL, order: int = 6):
    """Propagators for many (theta0, t) pairs at once."""
    theta0 = np.atleast_2d(np.asarray(theta0, dtype=float))
    if tol <= 0:
        raise ValueError("tol must be positive")
    Phi, err, steps = march(sys, theta0, t, tol, order=order)
    DET_MONITOR.record(Phi)
    return FlowSegment(theta0=theta0, t=np.asarray(t, dtype=float), Phi=Phi, err_est=err, steps=steps)


def integrate(sys: QPSystem, theta0, t: float, tol: float = DEFAULT_TOL, order: int = 6) -> FlowSegment:
    """Phi^t(theta0) for a single base point."""
    theta0 = np.asarray(theta0, dtype=float).reshape(1, sys.dim)
    seg = integrate_batch(sys, theta0, np.array([t]), tol, order)
    return FlowSegment(theta0=theta0[0], t=float(t), Phi=seg.Phi[0], err_est=seg.err_est, steps=seg.steps)


def section_grid(shape, mu_dim: int) -> np.ndarray:
    """Points (0, theta~) for a regular grid over T^{d-1}; shape (*shape, d)."""
    from .fourier import torus_grid

    shape = (int(shape),) * mu_dim if np.isscalar(shape) else tuple(shape)
    g = torus_grid(shape)
    return np.concatenate([np.zeros(g.shape[:-1] + (1,)), g], axis=-1)


@dataclass(frozen=True)
class PoincareSample:
    theta: np.ndarray  # (*grid, d-1)
    values: np.ndarray  # (*grid, 2, 2)
    err_est: float

    @property
    def det_err(self) -> float:
        return float(np.max(np.abs(np.linalg.det(self.values) - 1.0)))


def poincare_map(flow, grid, tol: float = DEFAULT_TOL, box=None):
    """Phi^1(0, theta~) on a regular grid; a MatSeries if ``box`` is given."""
    from .fourier import project_matrix

    mu_dim = len(flow.mu)
    pts = section_grid(grid, mu_dim)
    shape = pts.shape[:-1]
    flat = pts.reshape(-1, mu_dim + 1)
    if isinstance(flow, QPSystem):
        seg = integrate_batch(flow, flat, np.ones(len(flat)), tol)
        vals, err = seg.Phi, seg.err_est
    else:
        vals, err = flow.phi(np.ones(len(flat)), flat), 0.0
    sample = PoincareSample(theta=pts[..., 1:], values=vals.reshape(shape + (2, 2)), err_est=err)
    if box is None:
        return sample
    return project_matrix(sample.values, box, tag="SL2R_valued")


# ---------------------------------------------------------------------------
# rotation number and Lyapunov exponent

@dataclass(frozen=True)
class RotationEstimate:
    value: float
    err: float
    accelerated: float | None = None
    accelerated_time: float | None = None


def _unit(x0):
    x0 = np.asarray(x0, dtype=float).reshape(2)
    nrm = np.linalg.norm(x0)
    if nrm == 0:
        raise ValueError("x0 must be nonzero")
    return x0 / nrm


def _qn_times(mu, T_max):
    from .arithmetic import cfrac_expand

    if len(mu) != 1:
        return []
    frac = float(mu[0]) % 1.0
    if frac == 0.0:
        return []
    cf = cfrac_expand(frac, 60, prec=128)
    return [q for q in cf.q if 1 <= q <= T_max]


def rotation_number_flow(sys: QPSystem, T_max: float, theta0=None, x0=(1.0, 0.0),
                         tol: float = 1e-10) -> RotationEstimate:
    """Average winding of Phi^t(theta0) x0 in turns per unit time."""
    if T_max < 1:
        raise ValueError("T_max must be >= 1")
    x = _unit(x0)
    theta0 = np.zeros(sys.dim) if theta0 is None else np.asarray(theta0, dtype=float)
    qn = _qn_times(sys.mu, T_max)
    stops = [q / T_max for q in qn]
    record = {"angle": 0.0, "prev": math.atan2(x[1], x[0]), "times": [], "angles": []}

    def on_step(s, state):
        v = state[0, :, 0]
        a = math.atan2(v[1], v[0])
        d = (a - record["prev"] + math.pi) % (2 * math.pi) - math.pi
        record["angle"] += d
        record["prev"] = a
        record["times"].append(s * T_max)
        record["angles"].append(record["angle"])
        return state / np.linalg.norm(v)

    march(sys, theta0[None, :], T_max, tol, state=x.reshape(1, 2, 1), on_step=on_step, stops=stops)
    times = np.array(record["times"])
    turns = np.array(record["angles"]) / (2 * np.pi)
    value = turns[-1] / T_max
    tail = times >= T_max / 10
    partial = turns[tail] / times[tail]
    err = max(float(np.ptp(partial)), 0.5 / T_max)
    acc = acc_t = None
    if qn:
        q = qn[-1]
        i = int(np.argmin(np.abs(times - q)))
        acc, acc_t = float(turns[i] / q), float(q)
    return RotationEstimate(value=float(value), err=err, accelerated=acc, accelerated_time=acc_t)


def lyapunov_flow(sys: QPSystem, T_max: float, tol: float = 1e-10, theta0=None) -> float:
    """(1/T) ln ||Phi^T(theta0)||, renormalising the propagated frame every step."""
    if T_max < 1:
        raise ValueError("T_max must be >= 1")
    theta0 = np.zeros(sys.dim) if theta0 is None else np.asarray(theta0, dtype=float)
    acc = [0.0]

    def on_step(s, state):
        n = np.linalg.norm(state[0], 2)
        acc[0] += math.log(n)
        return state / n

    march(sys, theta0[None, :], T_max, tol, on_step=on_step)
    return acc[0] / T_max
