"""Continued fractions, best approximations and Diophantine diagnostics.

Denominators and numerators are Python integers (unbounded).  Irrational
inputs are expanded in mpmath floating point at a configurable precision;
decimal strings and :class:`fractions.Fraction` are expanded exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

DEFAULT_PREC = 256

NAMED_CONSTANTS = ("golden", "sqrt2m1")


def named_constant(name: str, prec: int = DEFAULT_PREC) -> mpmath.mpf:
    with mpmath.workprec(prec):
        if name == "golden":
            return (mpmath.sqrt(5) - 1) / 2
        if name == "sqrt2m1":
            return mpmath.sqrt(2) - 1
    raise ValueError(f"unknown constant {name!r}; expected one of {NAMED_CONSTANTS}")


def parse_alpha(value, prec: int = DEFAULT_PREC):
    """Turn user input into an exact Fraction or an mpf.

    Decimal strings become exact fractions so that e.g. "0.3" terminates,
    and Python floats are expanded as the dyadic rationals they are.
    """
    if isinstance(value, (Fraction, int, float)):
        return Fraction(value)
    if isinstance(value, str):
        s = value.strip()
        if s in NAMED_CONSTANTS:
            return named_constant(s, prec)
        try:
            return Fraction(s)
        except ValueError as exc:
            raise ValueError(f"cannot parse alpha {value!r}") from exc
    with mpmath.workprec(prec):
        return mpmath.mpf(value)


@dataclass(frozen=True)
class ContinuedFraction:
    alpha: object
    a: tuple[int, ...]
    p: tuple[int, ...]
    q: tuple[int, ...]
    terminated: bool = False
    precision_capped: bool = False
    prec: int = DEFAULT_PREC

    @property
    def depth(self) -> int:
        return len(self.a)

    def value(self) -> Fraction:
        """The last convergent p_depth / q_depth."""
        return Fraction(self.p[-1], self.q[-1])

    def evaluate(self) -> Fraction:
        """[0; a_1, ..., a_depth] folded from the tail, independent of p, q."""
        x = Fraction(0)
        for ak in reversed(self.a):
            x = 1 / (ak + x)
        return x


def cfrac_expand(alpha, depth: int, prec: int = DEFAULT_PREC) -> ContinuedFraction:
    """Partial quotients and convergents of ``alpha`` in (0, 1).

    Seeds follow p_0 = 0, p_1 = 1, q_0 = 1, q_1 = a_1, so ``q`` holds
    q_0 ... q_depth.  Expansion stops early with ``terminated`` set when the
    input is rational (exactly, or to within 10 ulp of the working
    precision), and with ``precision_capped`` set when q_k**2 exceeds the
    square root of the working precision, i.e. once the residual has lost
    half of its significant bits.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    x = parse_alpha(alpha, prec)
    if not 0 < x < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {x}")

    exact = isinstance(x, Fraction)
    a: list[int] = []
    p = [0, 1]
    q = [1]
    terminated = capped = False
    with mpmath.workprec(prec):
        resid = x
        for k in range(1, depth + 1):
            if exact:
                ak = resid.denominator // resid.numerator
                resid = 1 / resid - ak
            else:
                inv = 1 / resid
                ak = int(mpmath.floor(inv))
                resid = inv - ak
            a.append(ak)
            if k == 1:
                q.append(ak)
            else:
                p.append(ak * p[-1] + p[-2])
                q.append(ak * q[-1] + q[-2])
            if resid == 0 or (not exact and resid < 10 * mpmath.eps):
                terminated = True
                break
            if not exact and k < depth and q[-1] ** 2 >= 2 ** (prec // 2):
                capped = True
                break
    return ContinuedFraction(
        alpha=x,
        a=tuple(a),
        p=tuple(p[: len(a) + 1]),
        q=tuple(q[: len(a) + 1]),
        terminated=terminated,
        precision_capped=capped,
        prec=prec,
    )


def distance_to_integers(x):
    """||x||_{R/Z} for floats or arrays."""
    return np.abs(x - np.round(x))


def cfrac_from_quotients(a, prec: int = DEFAULT_PREC) -> ContinuedFraction:
    """Build the (rational) number [0; a_1, ..., a_n] and its expansion."""
    x = Fraction(0)
    for ak in reversed(list(a)):
        x = 1 / (int(ak) + x)
    return cfrac_expand(x, len(a), prec)


@dataclass(frozen=True)
class BetaEstimate:
    samples: tuple[float, ...]
    beta_hat: float
    beta_sup: float
    depth: int
    tail_start: int = 1

    def tail_sup(self, start: int) -> float:
        """sup of ln(q_{n+1})/q_n over n >= start (n counted from 1)."""
        tail = self.samples[start - 1:]
        return max(tail) if tail else 0.0


def _log_int(n: int) -> float:
    # math.log accepts arbitrarily large ints
    return math.log(n)


def beta_estimate(cf: ContinuedFraction) -> BetaEstimate:
    """Finite-depth estimate of limsup ln(q_{n+1}) / q_n.

    ``beta_hat`` is the supremum over the tail n >= depth/2, ``beta_sup``
    over all samples.
    """
    if cf.depth < 2:
        raise ValueError("beta estimate needs depth >= 2")
    q = cf.q
    samples = tuple(_log_int(q[n + 1]) / q[n] for n in range(1, cf.depth))
    start = max(1, cf.depth // 2)
    return BetaEstimate(samples=samples, beta_hat=max(samples[start - 1:]),
                        beta_sup=max(samples), depth=cf.depth, tail_start=start)


@dataclass(frozen=True)
class DiophantineResult:
    passed: bool
    witness: int
    margin: float  # min over k of ||k alpha - 2 rho|| * |k|^tau / gamma
    distance: float


def diophantine_check(alpha, gamma: float, tau: float, rho: float, K: int) -> DiophantineResult:
    """Finite-cutoff check of ||k alpha - 2 rho|| >= gamma / |k|^tau, 0 < |k| <= K.

    Passing is a certificate up to K only.  The witness is the k attaining the
    smallest ratio of the two sides.
    """
    if gamma <= 0 or tau <= 0 or K < 1:
        raise ValueError("need gamma > 0, tau > 0, K >= 1")
    alpha = float(alpha)
    k = np.concatenate([np.arange(-K, 0), np.arange(1, K + 1)])
    dist = distance_to_integers(k * alpha - 2.0 * rho)
    ratio = dist * np.abs(k) ** tau / gamma
    i = int(np.argmin(ratio))
    return DiophantineResult(passed=bool(ratio[i] >= 1.0), witness=int(k[i]),
                             margin=float(ratio[i]), distance=float(dist[i]))
