"""Constant 2x2 matrices: sl(2,R) classification, normal forms, su(1,1).

Reference matrices follow the usual conventions::

    H = [[1, 0], [0, -1]]    J = [[0, 1], [-1, 0]]    N = [[0, 1], [0, 0]]
    M = [[1, -i], [1, i]]    R_phi = [[cos 2 pi phi, -sin 2 pi phi],
                                      [sin 2 pi phi,  cos 2 pi phi]]

so that exp(2 pi rho J) = R_{-rho}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fourier import _M as M, _MINV as M_INV, to_sl2, to_su11  # noqa: F401

H = np.array([[1.0, 0.0], [0.0, -1.0]])
J = np.array([[0.0, 1.0], [-1.0, 0.0]])
N = np.array([[0.0, 1.0], [0.0, 0.0]])
I2 = np.eye(2)

TRACE_TOL = 1e-12
DET_TOL = 1e-10

KINDS = ("elliptic", "hyperbolic", "parabolic", "zero")


def rotation_matrix(phi):
    """R_phi for scalar or array ``phi`` (turns); shape (..., 2, 2)."""
    a = 2 * np.pi * np.asarray(phi, dtype=float)
    c, s = np.cos(a), np.sin(a)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


@dataclass(frozen=True, eq=False)
class Sl2Class:
    """Classification of A with P A P^{-1} equal to ``normal_form``.

    ``param`` is rho (elliptic, signed), lambda > 0 (hyperbolic), the sign
    sigma of the nilpotent normal form sigma*N (parabolic), or 0 (zero).
    """

    kind: str
    param: float
    P: np.ndarray
    P_inv: np.ndarray

    @property
    def normal_form(self) -> np.ndarray:
        if self.kind == "elliptic":
            return 2 * np.pi * self.param * J
        if self.kind == "hyperbolic":
            return 2 * np.pi * self.param * H
        if self.kind == "parabolic":
            return self.param * N
        return np.zeros((2, 2))

    @property
    def rho(self) -> float:
        return self.param if self.kind == "elliptic" else 0.0

    @property
    def lam(self) -> float:
        return self.param if self.kind == "hyperbolic" else 0.0


def _adj(P):
    return np.array([[P[1, 1], -P[0, 1]], [-P[1, 0], P[0, 0]]])


def classify(A, tol_det: float = DET_TOL) -> Sl2Class:
    """Kind, parameter and a real det-1 conjugator of a trace-free 2x2 A.

    |det A| < tol_det * ||A||_F^2 is treated as parabolic (or zero).
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (2, 2):
        raise ValueError("A must be 2x2")
    scale = float(np.linalg.norm(A))
    if abs(A[0, 0] + A[1, 1]) > TRACE_TOL * max(scale, 1.0):
        raise ValueError("A is not trace-free")
    if scale == 0.0:
        return Sl2Class("zero", 0.0, I2.copy(), I2.copy())
    a, b, c = A[0, 0], A[0, 1], A[1, 0]
    det = -a * a - b * c

    if abs(det) < tol_det * scale**2:
        # kernel vector x, then y ⟂ x with A y = sigma x, det[x, y] = 1
        x = np.array([b, -a]) if abs(b) + abs(a) >= abs(a) + abs(c) else np.array([-a, -c])
        x = x / np.linalg.norm(x)
        y = np.array([-x[1], x[0]])
        s = float(x @ (A @ y))
        sigma = 1.0 if s > 0 else -1.0
        root = math.sqrt(abs(s))
        Pinv = np.column_stack([x * root, y / root])
        if np.trace(Pinv) < 0:
            Pinv = -Pinv
        return Sl2Class("parabolic", sigma, _adj(Pinv), Pinv)

    if det > 0:
        omega = math.copysign(math.sqrt(det), b)
        p = math.sqrt(-c / omega)
        q = a / (omega * p)
        P = np.array([[p, q], [0.0, 1.0 / p]])
        return Sl2Class("elliptic", omega / (2 * np.pi), P, _adj(P))

    nu = math.sqrt(-det)
    # columns of P^{-1} are eigenvectors for +nu and -nu
    vp = max((np.array([b, nu - a]), np.array([nu + a, c])), key=np.linalg.norm)
    vm = max((np.array([b, -nu - a]), np.array([-nu + a, c])), key=np.linalg.norm)
    Pinv = np.column_stack([vp, vm])
    d = np.linalg.det(Pinv)
    if d < 0:
        Pinv[:, 1] *= -1
        d = -d
    Pinv /= math.sqrt(d)
    P = _adj(Pinv)
    # diag(s, 1/s) commutes with H; pick s to minimise ||P||_F
    s = math.sqrt(np.linalg.norm(P[1]) / np.linalg.norm(P[0]))
    P = np.diag([s, 1 / s]) @ P
    return Sl2Class("hyperbolic", nu / (2 * np.pi), P, _adj(P))
