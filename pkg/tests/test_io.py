import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qpembed.cocycles import ScanResult
from qpembed.embedding import embed_local
from qpembed.flows import QPSystem
from qpembed.fourier import TrigSeries
from qpembed.instances import gen_instance, random_sl2_series
from qpembed.io import (CSV_HEADER, SCHEMA, ConfigError, cocycle_from_json, dumps, matseries_from_json,
                        matseries_to_json, read_scan_csv, report_from_json, report_to_json,
                        resolve_mu, series_from_json, series_to_json, system_from_json, system_to_json,
                        write_scan_csv)

GOLDEN = (math.sqrt(5) - 1) / 2
seeds = st.integers(0, 2**32 - 1)


def through_text(obj):
    return json.loads(dumps(obj))


@given(seeds, st.booleans())
def test_series_roundtrip_is_exact(seed, real):
    r = np.random.default_rng(seed)
    f = TrigSeries(r.standard_normal((5, 3)) + 1j * r.standard_normal((5, 3)), (1, 2))
    f = f.realify() if real else f
    g = series_from_json(through_text(series_to_json(f)))
    assert np.array_equal(g.coeffs, f.coeffs)
    assert g.periods == f.periods and g.real == f.real


@given(seeds)
def test_matseries_roundtrip_is_exact(seed):
    F = random_sl2_series(np.random.default_rng(seed), 2, 4, 2)
    back = matseries_from_json(through_text(matseries_to_json(F)))
    assert np.array_equal(back.coeffs, F.coeffs) and back.tag == F.tag


def test_series_rejects_bad_rows():
    with pytest.raises(ConfigError):
        series_from_json({"dim": 1, "box": [1], "coeffs": [[2, 1.0, 0.0]]})
    with pytest.raises(ConfigError):
        series_from_json({"dim": 1, "coeffs": [[0, 1.0]]})
    with pytest.raises(ConfigError):
        series_from_json({"dim": 1, "coeffs": [], "bogus": 1})
    with pytest.raises(ConfigError):
        matseries_from_json({"dim": 1, "coeffs": [[2, 0, 0, 1.0, 0.0]]})
    with pytest.raises(ConfigError):
        series_from_json({"dim": 1, "coeffs": [[0, float("nan"), 0.0]]})


def test_system_roundtrip():
    F = random_sl2_series(np.random.default_rng(0), 2, 3, 2)
    sys = QPSystem([GOLDEN], np.array([[0.0, 1.0], [-1.0, 0.0]]), F, 0.3)
    back = system_from_json(through_text(system_to_json(sys)))
    pts = np.random.default_rng(1).random((5, 2))
    assert np.array_equal(back.generator(pts), sys.generator(pts))
    assert back.h == 0.3


def test_unknown_keys_and_schema_rejected():
    with pytest.raises(ConfigError):
        system_from_json({"mu": [0.5], "A": [[0, 1], [-1, 0]], "extra": 1})
    with pytest.raises(ConfigError):
        system_from_json({"mu": [0.5], "A": [[0, 1], [-1, 0]], "schema": "qpembed/0"})
    with pytest.raises(ConfigError):
        system_from_json({"mu": [0.5], "A": [[1, 0], [0, 1]]})


def test_named_mu():
    assert resolve_mu("golden") == [pytest.approx(GOLDEN, abs=1e-16)]
    assert resolve_mu([0.1, 0.2]) == [0.1, 0.2]
    with pytest.raises(ConfigError):
        resolve_mu("tau")


def test_cocycle_configs():
    c = cocycle_from_json({"mu": "golden", "fiber": {"type": "schrodinger", "V": {"coupling": 2.0}, "E": 0.5}})
    assert np.allclose(c(0.0), [[3.5, -1.0], [1.0, 0.0]])
    F = random_sl2_series(np.random.default_rng(2), 1, 2, 2) * 0.01
    obj = {"mu": [GOLDEN], "fiber": {"type": "exp_pair", "A": [[0, 0.5], [-0.5, 0]], "G": matseries_to_json(F)}}
    assert abs(np.linalg.det(cocycle_from_json(obj)(0.3)) - 1) <= 1e-14
    with pytest.raises(ConfigError):
        cocycle_from_json({"mu": [GOLDEN], "fiber": {"type": "mystery"}})
    with pytest.raises(ConfigError):
        cocycle_from_json({"mu": [GOLDEN], "fiber": {"type": "schrodinger", "V": {"dim": 1, "coeffs": [[1, 1.0, 0.0]]}}})


def test_report_roundtrip():
    cfg = gen_instance(3, {"modes": 2, "amplitude": 1e-4})
    rep = embed_local(np.asarray(cfg["A"]), matseries_from_json(cfg["G"]), cfg["mu"], 0.5)
    obj = through_text(report_to_json(rep))
    assert obj["schema"] == SCHEMA and obj["certificates"]["norm"] == "su11"
    back = report_from_json(obj)
    assert np.array_equal(back.F.coeffs, rep.F.coeffs)
    assert np.array_equal(back.A_tilde, rep.A_tilde)
    assert back.residual_history == rep.residual_history


def test_dumps_is_deterministic_and_round_trips_floats():
    obj = {"b": [0.1, 1 / 3, np.float64(2.0) ** -60], "a": np.arange(3), "c": float("inf")}
    text = dumps(obj)
    assert text == dumps(dict(reversed(list(obj.items()))))
    back = json.loads(text)
    assert back["b"] == [0.1, 1 / 3, 2.0**-60] and back["a"] == [0, 1, 2] and back["c"] == "inf"


def test_scan_csv_roundtrip():
    res = ScanResult(E=np.array([-1.0, 1 / 3]), rot=np.array([0.1, math.pi / 10]),
                     lyap=np.array([0.0, 1e-300]), rot_err=np.array([1e-5, 2e-5]))
    fh = io.StringIO()
    write_scan_csv(fh, res)
    text = fh.getvalue()
    assert text.splitlines()[0] == CSV_HEADER
    data = read_scan_csv(io.StringIO(text))
    assert np.array_equal(data, np.c_[res.E, res.rot, res.lyap, res.rot_err])
    with pytest.raises(ConfigError):
        read_scan_csv(io.StringIO("x,y\n1,2\n"))


# ---------------------------------------------------------------------------
# random instances

def test_gen_instance_is_deterministic():
    params = {"modes": 4, "amplitude": 1e-3, "h": 0.5}
    assert dumps(gen_instance(42, params)) == dumps(gen_instance(42, params))
    assert dumps(gen_instance(42, params)) != dumps(gen_instance(43, params))


@given(st.integers(0, 2**63), st.floats(1e-8, 10.0), st.floats(0.0, 1.0), st.sampled_from(["su11", "entries"]))
def test_gen_instance_amplitude_exact(seed, amplitude, h, norm):
    cfg = gen_instance(seed, {"modes": 5, "amplitude": amplitude, "h": h, "norm": norm})
    G = matseries_from_json(cfg["G"])
    got = G.su11_norm(h) if norm == "su11" else G.sl2_entry_norm(h)
    assert abs(got - amplitude) <= 1e-14 * amplitude
    assert G.tag == "sl2R" and G.real


def test_gen_system_instance():
    cfg = gen_instance(1, {"kind": "system", "amplitude": 0.1, "mu": [0.3, 0.7]})
    sys = system_from_json(cfg)
    assert sys.dim == 3 and sys.F.su11_norm(0.5) == pytest.approx(0.1)


def test_gen_instance_errors():
    with pytest.raises(ConfigError):
        gen_instance(0, {"amplitude": 0.0})
    with pytest.raises(ConfigError):
        gen_instance(0, {"amplitude": 1.0, "color": "red"})
    with pytest.raises(ConfigError):
        gen_instance(0, {"amplitude": 1.0, "kind": "other"})
    with pytest.raises(ConfigError):
        gen_instance(0, {"amplitude": 1.0, "modes": 100, "max_freq": 1})
