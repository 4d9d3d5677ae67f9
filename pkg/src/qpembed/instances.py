"""Seeded random instances for demos and tests."""

from __future__ import annotations

import numpy as np

from .algebra import J
from .fourier import MatSeries, TrigSeries
from .io import SCHEMA, ConfigError, check_keys, matseries_to_json, resolve_mu

PARAM_KEYS = ("kind", "modes", "amplitude", "h", "mu", "A", "rho", "max_freq", "tol", "norm")
DEFAULT_RHO = 0.15


def random_sl2_series(rng: np.random.Generator, dim: int, modes: int, max_freq: int,
                      include_zero: bool = False) -> MatSeries:
    """Real-analytic trace-free series supported on ``modes`` random frequencies."""
    axes = [np.arange(-max_freq, max_freq + 1)] * dim
    lattice = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    if not include_zero:
        lattice = lattice[np.any(lattice != 0, axis=1)]
    if modes > len(lattice):
        raise ConfigError(f"only {len(lattice)} frequencies available for {modes} modes")
    picks = lattice[np.sort(rng.choice(len(lattice), size=modes, replace=False))]
    vals = rng.standard_normal((modes, 3)) + 1j * rng.standard_normal((modes, 3))
    ent = []
    for col in range(3):
        ent.append(TrigSeries.from_modes({tuple(k): v for k, v in zip(picks, vals[:, col])},
                                         dim, real=True))
    a, b, c = ent
    return MatSeries.from_entries([[a, b], [c, -1.0 * a]], tag="sl2R")


def _norm(G: MatSeries, h: float, which: str) -> float:
    if which == "su11":
        return G.su11_norm(h)
    if which == "entries":
        return G.sl2_entry_norm(h)
    raise ConfigError("norm must be 'su11' or 'entries'")


def gen_instance(seed: int, params: dict) -> dict:
    """Reproducible embed config (``kind`` "embed") or QPSystem (``kind`` "system").

    The random perturbation is rescaled so its weighted norm at ``h`` equals
    ``amplitude``.  For "embed" the perturbation lives on T^{d-1}; for
    "system" it lives on T^d and is added to 2 pi rho J.
    """
    check_keys(params, PARAM_KEYS, ("amplitude",), "instance parameters")
    amplitude = float(params["amplitude"])
    if not amplitude > 0:
        raise ConfigError("amplitude must be positive")
    kind = params.get("kind", "embed")
    h = float(params.get("h", 0.5))
    mu = resolve_mu(params.get("mu", "golden"))
    rho = float(params.get("rho", DEFAULT_RHO))
    A = np.asarray(params["A"], dtype=float) if "A" in params else 2 * np.pi * rho * J
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) % 2**64))
    modes = int(params.get("modes", 5))
    max_freq = int(params.get("max_freq", 3))
    which = params.get("norm", "su11")
    if kind == "embed":
        G = random_sl2_series(rng, len(mu), modes, max_freq)
        G = G * (amplitude / _norm(G, h, which))
        return {"schema": SCHEMA, "A": A.tolist(), "G": matseries_to_json(G), "mu": mu, "h": h,
                "tol": float(params.get("tol", 1e-8))}
    if kind == "system":
        F = random_sl2_series(rng, len(mu) + 1, modes, max_freq)
        F = F * (amplitude / _norm(F, h, which))
        return {"schema": SCHEMA, "mu": mu, "A": A.tolist(), "F": matseries_to_json(F), "h": h}
    raise ConfigError("instance kind must be 'embed' or 'system'")
