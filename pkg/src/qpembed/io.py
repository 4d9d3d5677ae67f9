"""JSON and CSV interchange.

Scalar series use ``{dim, periods, coeffs: [[k..., re, im], ...], real}``;
matrix series add an entry index in front of ``k`` (``[i, j, k..., re, im]``)
and carry their algebra ``tag``.  Only nonzero coefficients are listed, the
coefficient box is kept explicitly so that round trips are exact.  Floats are
written with ``repr`` which is the shortest string that reads back to the
same double.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .arithmetic import NAMED_CONSTANTS, named_constant
from .cocycles import Cocycle, ExpPair, UHResult, almost_mathieu_potential, schrodinger_cocycle
from .embedding import EmbedReport
from .flows import QPSystem
from .fourier import MatSeries, TrigSeries

SCHEMA = "qpembed/1"
CSV_HEADER = "E,rot,lyap,rot_err"


class ConfigError(ValueError):
    """Malformed or unexpected configuration content."""


def _float(x) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ConfigError(f"non-finite number {x!r}")
    return x


def check_keys(obj: dict, allowed, required=(), where: str = "config") -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    extra = sorted(set(obj) - set(allowed) - {"schema"})
    if extra:
        raise ConfigError(f"unknown keys in {where}: {', '.join(extra)}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise ConfigError(f"missing keys in {where}: {', '.join(missing)}")
    schema = obj.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigError(f"unsupported schema {schema!r}")
    return obj


# ---------------------------------------------------------------------------
# series

def _nonzero(coeffs: np.ndarray, box):
    idx = np.argwhere(coeffs != 0)
    return [(tuple(int(v) for v in i), complex(coeffs[tuple(i)])) for i in idx]


def series_to_json(f: TrigSeries) -> dict:
    box = f.box
    rows = [[*(i - n for i, n in zip(idx, box)), c.real, c.imag] for idx, c in _nonzero(f.coeffs, box)]
    return {"dim": f.dim, "periods": list(f.periods), "box": list(box), "real": bool(f.real), "coeffs": rows}


def _box_and_periods(obj, where):
    dim = int(obj["dim"])
    periods = tuple(int(p) for p in obj.get("periods", [1] * dim))
    if len(periods) != dim:
        raise ConfigError(f"{where}: periods must have length dim")
    rows = obj.get("coeffs", [])
    box = obj.get("box")
    if box is None:
        box = [0] * dim
        for r in rows:
            ks = r[-2 - dim:-2]
            box = [max(b, abs(int(k))) for b, k in zip(box, ks)]
    box = tuple(int(b) for b in box)
    if len(box) != dim:
        raise ConfigError(f"{where}: box must have length dim")
    return dim, periods, box, rows


def series_from_json(obj: dict) -> TrigSeries:
    check_keys(obj, ("dim", "periods", "coeffs", "real", "box"), ("dim",), "series")
    dim, periods, box, rows = _box_and_periods(obj, "series")
    arr = np.zeros(tuple(2 * n + 1 for n in box), dtype=complex)
    for r in rows:
        if len(r) != dim + 2:
            raise ConfigError("series rows are [k..., re, im]")
        k = tuple(int(x) + n for x, n in zip(r[:dim], box))
        if any(not 0 <= x < 2 * n + 1 for x, n in zip(k, box)):
            raise ConfigError("series coefficient outside the declared box")
        arr[k] += complex(_float(r[dim]), _float(r[dim + 1]))
    return TrigSeries(arr, periods, bool(obj.get("real", False)))


def matseries_to_json(F: MatSeries) -> dict:
    box = F.box
    rows = [[idx[0], idx[1], *(i - n for i, n in zip(idx[2:], box)), c.real, c.imag]
            for idx, c in _nonzero(F.coeffs, box)]
    return {"dim": F.dim, "periods": list(F.periods), "box": list(box), "tag": F.tag, "coeffs": rows}


def matseries_from_json(obj: dict) -> MatSeries:
    check_keys(obj, ("dim", "periods", "coeffs", "tag", "box"), ("dim",), "matrix series")
    dim, periods, box, rows = _box_and_periods(obj, "matrix series")
    arr = np.zeros((2, 2) + tuple(2 * n + 1 for n in box), dtype=complex)
    for r in rows:
        if len(r) != dim + 4:
            raise ConfigError("matrix series rows are [i, j, k..., re, im]")
        i, j = int(r[0]), int(r[1])
        if i not in (0, 1) or j not in (0, 1):
            raise ConfigError("matrix entry index must be 0 or 1")
        k = tuple(int(x) + n for x, n in zip(r[2:2 + dim], box))
        if any(not 0 <= x < 2 * n + 1 for x, n in zip(k, box)):
            raise ConfigError("matrix series coefficient outside the declared box")
        arr[(i, j) + k] += complex(_float(r[dim + 2]), _float(r[dim + 3]))
    try:
        return MatSeries(arr, periods, obj.get("tag", "general"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def matrix_from_json(obj) -> np.ndarray:
    A = np.array([[_float(x) for x in row] for row in obj])
    if A.shape != (2, 2):
        raise ConfigError("expected a 2x2 matrix")
    return A


def resolve_mu(mu) -> list[float]:
    """A list of floats, or a named constant such as "golden"."""
    if isinstance(mu, str):
        if mu not in NAMED_CONSTANTS:
            raise ConfigError(f"unknown named constant {mu!r}")
        return [float(named_constant(mu))]
    return [_float(x) for x in np.atleast_1d(mu)]


def _mu(obj) -> np.ndarray:
    mu = np.array(resolve_mu(obj))
    if mu.size == 0:
        raise ConfigError("mu must be nonempty")
    return mu


# ---------------------------------------------------------------------------
# systems, cocycles, reports

def system_to_json(sys: QPSystem) -> dict:
    out = {"schema": SCHEMA, "mu": sys.mu.tolist(), "A": np.asarray(sys.A).tolist(), "h": sys.h}
    if sys.F is not None:
        out["F"] = matseries_to_json(sys.F)
    return out


def system_from_json(obj: dict) -> QPSystem:
    check_keys(obj, ("mu", "A", "F", "h"), ("mu", "A"), "system")
    F = matseries_from_json(obj["F"]) if obj.get("F") is not None else None
    try:
        return QPSystem(_mu(obj["mu"]), matrix_from_json(obj["A"]), F, _float(obj.get("h", 0.5)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def potential_from_json(obj: dict) -> TrigSeries:
    """``{"coupling": lam}`` for 2 lam cos(2 pi theta) or a real series."""
    if isinstance(obj, dict) and "coupling" in obj:
        check_keys(obj, ("coupling",), where="potential")
        return almost_mathieu_potential(_float(obj["coupling"]))
    V = series_from_json(obj)
    if not V.real:
        raise ConfigError("potential must be a real series")
    return V


def cocycle_from_json(obj: dict, energy: float | None = None) -> Cocycle:
    """Cocycle config.

    ``{"mu": [...], "fiber": {...}}`` where the fiber is one of
    ``{"type": "schrodinger", "V": <potential>, "E": e}``,
    ``{"type": "exp_pair", "A": [[...]], "G": <matrix series>}`` or
    ``{"type": "matrix", "B": <matrix series>}``.
    """
    check_keys(obj, ("mu", "fiber", "homotopy_degree"), ("mu", "fiber"), "cocycle")
    mu = _mu(obj["mu"])
    fib = obj["fiber"]
    kind = fib.get("type") if isinstance(fib, dict) else None
    deg = obj.get("homotopy_degree")
    deg = tuple(int(x) for x in deg) if deg is not None else None
    try:
        if kind == "schrodinger":
            check_keys(fib, ("type", "V", "E"), ("type", "V"), "fiber")
            E = energy if energy is not None else _float(fib.get("E", 0.0))
            return schrodinger_cocycle(potential_from_json(fib["V"]), E, mu)
        if kind == "exp_pair":
            check_keys(fib, ("type", "A", "G"), ("type", "A", "G"), "fiber")
            return Cocycle(mu, ExpPair(matrix_from_json(fib["A"]), matseries_from_json(fib["G"])), deg)
        if kind == "matrix":
            check_keys(fib, ("type", "B"), ("type", "B"), "fiber")
            return Cocycle(mu, matseries_from_json(fib["B"]), deg)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError("fiber.type must be one of schrodinger, exp_pair, matrix")


def report_to_json(rep: EmbedReport) -> dict:
    cert = {k: (v if isinstance(v, str) else bool(v) if isinstance(v, (bool, np.bool_)) else float(v))
            for k, v in rep.certificates.items()}
    return {
        "schema": SCHEMA,
        "kind": rep.kind,
        "mu": rep.mu.tolist(),
        "h": rep.h,
        "tol": rep.tol,
        "A": np.asarray(rep.A).tolist(),
        "G": matseries_to_json(rep.G),
        "A_tilde": np.asarray(rep.A_tilde).tolist(),
        "F": matseries_to_json(rep.F),
        "residuals": [float(r) for r in rep.residual_history],
        "verify_residual": rep.verify_residual,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "certificates": cert,
    }


def report_from_json(obj: dict) -> EmbedReport:
    check_keys(obj, ("kind", "mu", "h", "tol", "A", "G", "A_tilde", "F", "residuals",
                     "verify_residual", "iterations", "converged", "certificates"),
               ("mu", "h", "A", "G", "A_tilde", "F"), "report")
    return EmbedReport(
        A=matrix_from_json(obj["A"]), G=matseries_from_json(obj["G"]), mu=_mu(obj["mu"]),
        h=_float(obj["h"]), tol=_float(obj.get("tol", 1e-8)), kind=obj.get("kind", "unknown"),
        A_tilde=matrix_from_json(obj["A_tilde"]), F=matseries_from_json(obj["F"]),
        residual_history=list(obj.get("residuals", [])),
        verify_residual=float(obj.get("verify_residual", float("nan"))),
        iterations=int(obj.get("iterations", 0)), converged=bool(obj.get("converged", False)),
        certificates=dict(obj.get("certificates", {})))


def uh_to_json(res: UHResult) -> dict:
    return {"schema": SCHEMA, "status": res.status, "min_gap": res.min_gap,
            "max_direction_jump": res.max_direction_jump,
            "witness": list(res.witness) if res.witness is not None else None,
            "rigorous": res.rigorous}


def error_json(kind: str, message: str, diagnostics: dict | None = None) -> dict:
    return {"schema": SCHEMA, "error": kind, "message": message, "diagnostics": _plain(diagnostics or {})}


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, round-trippable floats)."""
    return json.dumps(_plain(obj), sort_keys=True, indent=1) + "\n"


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def write_scan_csv(fh, result) -> None:
    fh.write(CSV_HEADER + "\n")
    for row in zip(result.E, result.rot, result.lyap, result.rot_err):
        fh.write(",".join(f"{float(v):.17g}" for v in row) + "\n")


def read_scan_csv(fh) -> np.ndarray:
    header = fh.readline().strip()
    if header != CSV_HEADER:
        raise ConfigError(f"unexpected CSV header {header!r}")
    return np.loadtxt(fh, delimiter=",", ndmin=2)
