"""Truncated Fourier series on tori, matrix-valued series and 2x2 exp/log.

A :class:`TrigSeries` stores a dense box of complex coefficients indexed by
k in [-N_1, N_1] x ... x [-N_d, N_d].  Axis i has period 1 or 2; on a
period-2 axis the stored integer k stands for the physical frequency k/2,
so a mode reads exp(2 pi i k theta / period).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

TWO_PI = 2.0 * math.pi

# Below this |delta| the 2x2 exponential switches to its Taylor series.
SERIES_SWITCH = 1e-8


class AliasingError(ValueError):
    """Sampling grid too coarse for the requested support box."""


def min_grid(n: int) -> int:
    """Smallest admissible grid for a box of half-width ``n``."""
    return 2 * (2 * n + 1)


def torus_grid(shape, periods=None) -> np.ndarray:
    """Regular grid points theta_j = j * period / M, shape (*shape, d)."""
    shape = tuple(int(m) for m in shape)
    periods = (1,) * len(shape) if periods is None else tuple(periods)
    axes = [np.arange(m) * (p / m) for m, p in zip(shape, periods)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _box_of(arr: np.ndarray, lead: int = 0) -> tuple[int, ...]:
    return tuple((s - 1) // 2 for s in arr.shape[lead:])


def _place(coeffs: np.ndarray, grid, lead: int = 0) -> np.ndarray:
    """Scatter a centered coefficient box into FFT (wrap-around) order."""
    box = _box_of(coeffs, lead)
    out = np.zeros(coeffs.shape[:lead] + tuple(grid), dtype=complex)
    idx = tuple(np.arange(-n, n + 1) % m for n, m in zip(box, grid))
    out[(Ellipsis,) + np.ix_(*idx)] = coeffs
    return out


def _gather(spec: np.ndarray, box, lead: int = 0) -> np.ndarray:
    grid = spec.shape[lead:]
    idx = tuple(np.arange(-n, n + 1) % m for n, m in zip(box, grid))
    return spec[(Ellipsis,) + np.ix_(*idx)]


def _check_grid(grid, box):
    for m, n in zip(grid, box):
        if m < min_grid(n):
            raise AliasingError(
                f"grid {m} too small for support half-width {n} (need >= {min_grid(n)})")


def _weights(box, periods, h: float) -> np.ndarray:
    """exp(2 pi h |k|) on the box, |k| the l1 norm of physical frequencies."""
    w = np.zeros(tuple(2 * n + 1 for n in box))
    for i, (n, p) in enumerate(zip(box, periods)):
        k = np.abs(np.arange(-n, n + 1)) / p
        shape = [1] * len(box)
        shape[i] = 2 * n + 1
        w = w + k.reshape(shape)
    return np.exp(TWO_PI * h * w)


def _to_periods(coeffs: np.ndarray, old, new, lead: int = 0) -> np.ndarray:
    """Re-index a coefficient box from periods ``old`` to ``new`` (1 -> 2 only)."""
    for i, (p, q) in enumerate(zip(old, new)):
        if p == q:
            continue
        if (p, q) != (1, 2):
            raise ValueError("only period 1 -> 2 conversion is exact")
        ax = lead + i
        n = (coeffs.shape[ax] - 1) // 2
        shape = list(coeffs.shape)
        shape[ax] = 4 * n + 1
        out = np.zeros(shape, dtype=complex)
        idx = [slice(None)] * len(shape)
        idx[ax] = slice(0, 4 * n + 1, 2)
        out[tuple(idx)] = coeffs
        coeffs = out
    return coeffs


def _resize(coeffs: np.ndarray, box, lead: int = 0) -> np.ndarray:
    """Zero-pad or truncate a centered box to half-widths ``box``."""
    old = _box_of(coeffs, lead)
    out = np.zeros(coeffs.shape[:lead] + tuple(2 * n + 1 for n in box), dtype=complex)
    src, dst = [], []
    for o, n in zip(old, box):
        m = min(o, n)
        src.append(slice(o - m, o + m + 1))
        dst.append(slice(n - m, n + m + 1))
    out[(Ellipsis,) + tuple(dst)] = coeffs[(Ellipsis,) + tuple(src)]
    return out


@dataclass(frozen=True, eq=False)
class TrigSeries:
    coeffs: np.ndarray
    periods: tuple[int, ...] = field(default=None)
    real: bool = False

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim == 0:
            c = c.reshape(1)
        if any(s % 2 == 0 for s in c.shape):
            raise ValueError("coefficient box must have odd extent on every axis")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        periods = (1,) * c.ndim if self.periods is None else tuple(int(p) for p in self.periods)
        if len(periods) != c.ndim or any(p not in (1, 2) for p in periods):
            raise ValueError(f"periods must be 1 or 2 per axis, got {periods}")
        object.__setattr__(self, "periods", periods)

    # -- construction -------------------------------------------------
    @classmethod
    def zeros(cls, box, periods=None, real=True) -> "TrigSeries":
        return cls(np.zeros(tuple(2 * n + 1 for n in box), dtype=complex), periods, real)

    @classmethod
    def constant(cls, c, dim: int = 1, periods=None) -> "TrigSeries":
        arr = np.full((1,) * dim, complex(c))
        return cls(arr, periods, real=complex(c).imag == 0)

    @classmethod
    def from_modes(cls, modes: dict, dim: int | None = None, periods=None, real=False) -> "TrigSeries":
        """Build from {k_tuple: coeff}; ``real`` also adds conjugate partners."""
        keys = [tuple(np.atleast_1d(k).astype(int)) for k in modes]
        if dim is None:
            dim = len(keys[0]) if keys else 1
        box = [0] * dim
        for k in keys:
            box = [max(b, abs(x)) for b, x in zip(box, k)]
        arr = np.zeros(tuple(2 * n + 1 for n in box), dtype=complex)
        for k, c in zip(keys, modes.values()):
            arr[tuple(x + n for x, n in zip(k, box))] += c
        f = cls(arr, periods)
        return f.realify() if real else f

    # -- shape --------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.coeffs.ndim

    @property
    def box(self) -> tuple[int, ...]:
        return _box_of(self.coeffs)

    def coeff(self, k) -> complex:
        k = tuple(np.atleast_1d(k).astype(int))
        if any(abs(x) > n for x, n in zip(k, self.box)):
            return 0j
        return complex(self.coeffs[tuple(x + n for x, n in zip(k, self.box))])

    def modes(self, drop_zero: bool = True):
        """Lattice points (n, d) and coefficients (n,) of stored modes."""
        grids = np.meshgrid(*[np.arange(-n, n + 1) for n in self.box], indexing="ij")
        ks = np.stack([g.ravel() for g in grids], axis=-1)
        c = self.coeffs.ravel()
        if drop_zero:
            keep = c != 0
            ks, c = ks[keep], c[keep]
        return ks, c

    def resized(self, box) -> "TrigSeries":
        return TrigSeries(_resize(self.coeffs, box), self.periods, self.real)

    def with_periods(self, periods) -> "TrigSeries":
        """Same function viewed on a torus with doubled periods."""
        periods = tuple(periods)
        return TrigSeries(_to_periods(self.coeffs, self.periods, periods), periods, self.real)

    def _aligned(self, other: "TrigSeries"):
        if self.dim != other.dim or self.periods != other.periods:
            raise ValueError("series live on different tori")
        box = tuple(max(a, b) for a, b in zip(self.box, other.box))
        return _resize(self.coeffs, box), _resize(other.coeffs, box)

    # -- algebra ------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, TrigSeries):
            a, b = self._aligned(other)
            return TrigSeries(a + b, self.periods, self.real and other.real)
        return self + TrigSeries.constant(other, self.dim, self.periods)

    __radd__ = __add__

    def __neg__(self):
        return TrigSeries(-self.coeffs, self.periods, self.real)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, TrigSeries):
            return pointwise_product(self, other)
        c = complex(other)
        return TrigSeries(self.coeffs * c, self.periods, self.real and c.imag == 0)

    __rmul__ = __mul__

    def conj(self) -> "TrigSeries":
        """The series of theta -> conj(f(theta)), i.e. c'_k = conj(c_{-k})."""
        flipped = np.conj(self.coeffs[(slice(None, None, -1),) * self.dim])
        return TrigSeries(flipped, self.periods, self.real)

    def realify(self) -> "TrigSeries":
        """Hermitian-symmetric part (f + conj f) / 2, flagged real."""
        g = self.conj()
        return TrigSeries((self.coeffs + g.coeffs) / 2, self.periods, True)

    # -- evaluation ---------------------------------------------------
    def __call__(self, theta) -> np.ndarray:
        return eval_series(self, theta)

    def sample(self, grid) -> np.ndarray:
        grid = tuple(grid)
        if len(grid) != self.dim:
            raise ValueError("grid dimension mismatch")
        if any(m < 2 * n + 1 for m, n in zip(grid, self.box)):
            raise AliasingError("grid cannot represent the stored support")
        vals = np.fft.ifftn(_place(self.coeffs, grid)) * np.prod(grid)
        return vals.real if self.real else vals

    def norm_h(self, h: float) -> float:
        return norm_h(self, h)


def eval_series(f: TrigSeries, theta) -> np.ndarray:
    """Direct finite sum at points ``theta`` of shape (..., d)."""
    theta = np.asarray(theta, dtype=float)
    if f.dim == 1 and (theta.ndim == 0 or theta.shape[-1] != 1):
        theta = theta[..., None]
    if theta.shape[-1] != f.dim:
        raise ValueError(f"expected points of dimension {f.dim}, got {theta.shape[-1]}")
    ks, c = f.modes()
    freq = ks / np.asarray(f.periods, dtype=float)
    if len(c) == 0:
        return np.zeros(theta.shape[:-1], dtype=complex)
    phase = np.exp(1j * TWO_PI * (theta @ freq.T))
    return phase @ c


def project(samples, box, periods=None, real: bool | None = None) -> TrigSeries:
    """DFT of regular-grid samples truncated to the half-width ``box``."""
    samples = np.asarray(samples)
    grid = samples.shape
    box = tuple(box)
    _check_grid(grid, box)
    spec = np.fft.fftn(samples) / np.prod(grid)
    if real is None:
        real = not np.iscomplexobj(samples)
    f = TrigSeries(_gather(spec, box), periods, False)
    return f.realify() if real else f


def norm_h(f: TrigSeries, h: float) -> float:
    """Weighted l1 norm sum_k |c_k| exp(2 pi |k| h)."""
    if h < 0:
        raise ValueError("h must be >= 0")
    return float(np.sum(np.abs(f.coeffs) * _weights(f.box, f.periods, h)))


def pointwise_product(f: TrigSeries, g: TrigSeries) -> TrigSeries:
    """Exact product: coefficient convolution on the grown box."""
    if f.dim != g.dim or f.periods != g.periods:
        raise ValueError("series live on different tori")
    c = signal.convolve(f.coeffs, g.coeffs, method="direct")
    return TrigSeries(c, f.periods, f.real and g.real)


# ---------------------------------------------------------------------------
# 2x2 closed forms (batched over leading axes)

def det2(X):
    return X[..., 0, 0] * X[..., 1, 1] - X[..., 0, 1] * X[..., 1, 0]


def inv_sl2(X):
    """Inverse of a determinant-one matrix (adjugate)."""
    out = np.empty_like(X)
    out[..., 0, 0] = X[..., 1, 1]
    out[..., 1, 1] = X[..., 0, 0]
    out[..., 0, 1] = -X[..., 0, 1]
    out[..., 1, 0] = -X[..., 1, 0]
    return out


def commutator(A, B):
    return A @ B - B @ A


def _cosh_sinhc(delta):
    """cosh(sqrt(delta)) and sinh(sqrt(delta))/sqrt(delta), even in the root."""
    delta = np.asarray(delta)
    s = np.sqrt(delta.astype(complex))
    small = np.abs(delta) < SERIES_SWITCH
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.cosh(s)
        sc = np.where(small, 1.0, np.sinh(s) / np.where(small, 1.0, s))
    if np.any(small):
        d = delta[small]
        # six Taylor terms each
        c_ser = 1 + d / 2 + d**2 / 24 + d**3 / 720 + d**4 / 40320 + d**5 / 3628800
        s_ser = 1 + d / 6 + d**2 / 120 + d**3 / 5040 + d**4 / 362880 + d**5 / 39916800
        c = np.array(c, copy=True)
        sc = np.array(sc, copy=True)
        c[small] = c_ser
        sc[small] = s_ser
    return c, sc


def expm_sl2(B):
    """exp of trace-free 2x2 matrices via cosh(r) I + sinh(r)/r B, r^2 = -det B."""
    B = np.asarray(B)
    delta = -det2(B)
    c, sc = _cosh_sinhc(delta)
    out = sc[..., None, None] * B.astype(complex)
    out[..., 0, 0] += c
    out[..., 1, 1] += c
    if not np.iscomplexobj(B):
        return out.real
    return out


def logm_sl2(X):
    """Principal log of determinant-one 2x2 matrices near the identity."""
    X = np.asarray(X)
    half_tr = (X[..., 0, 0] + X[..., 1, 1]) / 2
    s = np.arccosh(half_tr.astype(complex))
    small = np.abs(s) < 1e-4
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(small, 1.0, s / np.sinh(np.where(small, 1.0, s)))
    s2 = s[small] ** 2
    ratio = np.array(ratio, dtype=complex, copy=True)
    ratio[small] = 1 - s2 / 6 + 7 * s2**2 / 360
    traceless = X.astype(complex)
    traceless[..., 0, 0] -= half_tr
    traceless[..., 1, 1] -= half_tr
    out = ratio[..., None, None] * traceless
    if not np.iscomplexobj(X):
        return out.real
    return out


# ---------------------------------------------------------------------------

ALGEBRA_TAGS = ("sl2R", "su11", "SL2R_valued", "general")

_M = np.array([[1, -1j], [1, 1j]])
_MINV = np.linalg.inv(_M)


@dataclass(frozen=True, eq=False)
class MatSeries:
    """2x2 matrix of series sharing one coefficient box, shape (2, 2, *box)."""

    coeffs: np.ndarray
    periods: tuple[int, ...] = None
    tag: str = "general"

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.shape[:2] != (2, 2):
            raise ValueError("MatSeries coefficients must have shape (2, 2, ...)")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        periods = (1,) * (c.ndim - 2) if self.periods is None else tuple(int(p) for p in self.periods)
        object.__setattr__(self, "periods", periods)
        if self.tag not in ALGEBRA_TAGS:
            raise ValueError(f"unknown algebra tag {self.tag!r}")

    @classmethod
    def from_entries(cls, entries, tag="general") -> "MatSeries":
        """From a nested 2x2 list of TrigSeries or scalars."""
        flat = [entries[i][j] for i in range(2) for j in range(2)]
        proto = next((e for e in flat if isinstance(e, TrigSeries)), None)
        if proto is None:
            raise ValueError("need at least one TrigSeries entry")
        dim, periods = proto.dim, proto.periods
        series = [e if isinstance(e, TrigSeries) else TrigSeries.constant(e, dim, periods) for e in flat]
        box = tuple(max(s.box[i] for s in series) for i in range(dim))
        arr = np.stack([_resize(s.coeffs, box) for s in series]).reshape((2, 2) + tuple(2 * n + 1 for n in box))
        return cls(arr, periods, tag)

    @classmethod
    def constant(cls, A, dim: int = 1, periods=None, tag="general") -> "MatSeries":
        A = np.asarray(A, dtype=complex)
        return cls(A.reshape((2, 2) + (1,) * dim), periods, tag)

    @property
    def dim(self) -> int:
        return self.coeffs.ndim - 2

    @property
    def box(self) -> tuple[int, ...]:
        return _box_of(self.coeffs, 2)

    @property
    def real(self) -> bool:
        return self.tag in ("sl2R", "SL2R_valued")

    def entry(self, i: int, j: int) -> TrigSeries:
        return TrigSeries(self.coeffs[i, j], self.periods, self.real)

    def constant_term(self) -> np.ndarray:
        c = self.coeffs[(slice(None), slice(None)) + tuple(self.box)]
        return c.real if self.real else c

    def resized(self, box) -> "MatSeries":
        return MatSeries(_resize(self.coeffs, box, 2), self.periods, self.tag)

    def with_periods(self, periods) -> "MatSeries":
        periods = tuple(periods)
        return MatSeries(_to_periods(self.coeffs, self.periods, periods, 2), periods, self.tag)

    def retag(self, tag: str) -> "MatSeries":
        return MatSeries(self.coeffs, self.periods, tag)

    def _aligned(self, other: "MatSeries"):
        if self.dim != other.dim or self.periods != other.periods:
            raise ValueError("series live on different tori")
        box = tuple(max(a, b) for a, b in zip(self.box, other.box))
        return _resize(self.coeffs, box, 2), _resize(other.coeffs, box, 2)

    def __add__(self, other: "MatSeries") -> "MatSeries":
        a, b = self._aligned(other)
        tag = self.tag if self.tag == other.tag else "general"
        return MatSeries(a + b, self.periods, tag)

    def __neg__(self):
        return MatSeries(-self.coeffs, self.periods, self.tag)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        return MatSeries(self.coeffs * c, self.periods, self.tag)

    __rmul__ = __mul__

    def matmul(self, other: "MatSeries") -> "MatSeries":
        """Pointwise matrix product as an exact series."""
        out = [[None, None], [None, None]]
        for i in range(2):
            for j in range(2):
                out[i][j] = (pointwise_product(self.entry(i, 0), other.entry(0, j))
                             + pointwise_product(self.entry(i, 1), other.entry(1, j)))
        tag = "SL2R_valued" if self.tag == other.tag == "SL2R_valued" else "general"
        return MatSeries.from_entries(out, tag)

    def conjugated(self, P, Pinv=None) -> "MatSeries":
        """Constant conjugation P F P^{-1}."""
        P = np.asarray(P)
        Pinv = np.linalg.inv(P) if Pinv is None else np.asarray(Pinv)
        c = np.einsum("ij,jk...,kl->il...", P, self.coeffs, Pinv)
        return MatSeries(c, self.periods, self.tag)

    def trace(self) -> TrigSeries:
        return TrigSeries(self.coeffs[0, 0] + self.coeffs[1, 1], self.periods, self.real)

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.dim == 1 and (theta.ndim == 0 or theta.shape[-1] != 1):
            theta = theta[..., None]
        ks, _ = TrigSeries(self.coeffs[0, 0], self.periods).modes(drop_zero=False)
        flat = self.coeffs.reshape(4, -1).T
        keep = np.any(flat != 0, axis=1)
        freq = ks[keep] / np.asarray(self.periods, dtype=float)
        phase = np.exp(1j * TWO_PI * (theta @ freq.T))
        vals = (phase @ flat[keep]).reshape(theta.shape[:-1] + (2, 2))
        return vals.real if self.real else vals

    def sample(self, grid) -> np.ndarray:
        """Values on a regular grid, shape (*grid, 2, 2)."""
        grid = tuple(grid)
        if any(m < 2 * n + 1 for m, n in zip(grid, self.box)):
            raise AliasingError("grid cannot represent the stored support")
        axes = tuple(range(2, 2 + self.dim))
        vals = np.fft.ifftn(_place(self.coeffs, grid, 2), axes=axes) * np.prod(grid)
        vals = np.moveaxis(vals, (0, 1), (-2, -1))
        return vals.real if self.real else vals

    def norm_h(self, h: float) -> float:
        """sum of the weighted norms of the four entries."""
        w = _weights(self.box, self.periods, h)
        return float(np.sum(np.abs(self.coeffs) * w))

    def su11_coordinates(self) -> tuple[TrigSeries, TrigSeries]:
        """(t, nu) with M F M^{-1} = [[i t, nu], [conj nu, -i t]]."""
        g = self if self.tag == "su11" else to_su11(self)
        t = TrigSeries(-1j * g.coeffs[0, 0], self.periods)
        nu = TrigSeries(g.coeffs[0, 1], self.periods)
        return t, nu

    def su11_norm(self, h: float) -> float:
        """||t||_h + ||nu||_h, which dominates sup |F|_op on the strip."""
        t, nu = self.su11_coordinates()
        return norm_h(t, h) + norm_h(nu, h)

    def sl2_entry_norm(self, h: float) -> float:
        """||f11||_h + ||f12||_h + ||f21||_h for trace-free matrices."""
        return sum(norm_h(self.entry(i, j), h) for i, j in ((0, 0), (0, 1), (1, 0)))


def project_matrix(samples, box, periods=None, tag="general") -> MatSeries:
    """Project (*grid, 2, 2) samples entrywise onto a coefficient box."""
    samples = np.asarray(samples)
    grid = samples.shape[:-2]
    box = tuple(box)
    _check_grid(grid, box)
    vals = np.moveaxis(samples, (-2, -1), (0, 1))
    axes = tuple(range(2, 2 + len(grid)))
    spec = np.fft.fftn(vals, axes=axes) / np.prod(grid)
    c = _gather(spec, box, 2)
    if tag in ("sl2R", "SL2R_valued"):
        c = (c + np.conj(c[(slice(None), slice(None)) + (slice(None, None, -1),) * len(grid)])) / 2
    return MatSeries(c, periods, tag)


def to_su11(B):
    """B -> M B M^{-1} with M = [[1, -i], [1, i]]; arrays or MatSeries."""
    if isinstance(B, MatSeries):
        c = np.einsum("ij,jk...,kl->il...", _M, B.coeffs, _MINV)
        return MatSeries(c, B.periods, "su11" if B.tag == "sl2R" else "general")
    return _M @ np.asarray(B) @ _MINV


def to_sl2(B):
    """Inverse of :func:`to_su11`."""
    if isinstance(B, MatSeries):
        c = np.einsum("ij,jk...,kl->il...", _MINV, B.coeffs, _M)
        if B.tag == "su11":
            # su(1,1) preimages are real; drop round-off imaginary parts
            herm = (c + np.conj(c[(slice(None), slice(None)) + (slice(None, None, -1),) * B.dim])) / 2
            return MatSeries(herm, B.periods, "sl2R")
        return MatSeries(c, B.periods, "general")
    out = _MINV @ np.asarray(B) @ _M
    return out


def mat_exp_pointwise(G: MatSeries, grid, support=None) -> MatSeries:
    """theta -> exp(G(theta)) sampled on ``grid`` and projected back.

    ``support`` defaults to the largest box the grid resolves without
    aliasing.
    """
    if G.tag not in ("sl2R", "su11"):
        raise ValueError("exponential needs an sl2R or su11 tagged series")
    grid = (int(grid),) * G.dim if np.isscalar(grid) else tuple(grid)
    if support is None:
        support = tuple((m // 2 - 1) // 2 for m in grid)
    support = (int(support),) * G.dim if np.isscalar(support) else tuple(support)
    _check_grid(grid, support)
    vals = expm_sl2(G.sample(grid))
    tag = "SL2R_valued" if G.tag == "sl2R" else "general"
    return project_matrix(vals, support, G.periods, tag)
