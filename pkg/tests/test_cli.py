import json
import shutil
import subprocess

import numpy as np
import pytest

from qpembed.cli import main
from qpembed.io import CSV_HEADER, dumps, read_scan_csv

AMO = {"mu": "golden", "fiber": {"type": "schrodinger", "V": {"coupling": 3.0}, "E": 0.0}}


def write(path, obj):
    path.write_text(dumps(obj))
    return str(path)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_cfrac_json(capsys):
    code, out, _ = run(capsys, "cfrac", "--alpha", "golden", "--depth", "10", "--json")
    assert code == 0
    obj = json.loads(out)
    assert obj["q"][:10] == [1, 1, 2, 3, 5, 8, 13, 21, 34, 55]
    assert obj["a"] == [1] * 10


def test_cfrac_text_and_bad_alpha(capsys):
    code, out, _ = run(capsys, "cfrac", "--alpha", "0.3", "--depth", "5")
    assert code == 0 and "a = [3, 3]" in out
    code, _, err = run(capsys, "cfrac", "--alpha", "1.5")
    assert code == 2 and json.loads(err)["error"] == "validation"


@pytest.fixture
def embed_config(tmp_path, capsys):
    path = tmp_path / "demo.json"
    code, _, _ = run(capsys, "gen", "--seed", "3", "--params", '{"modes": 3, "amplitude": 1e-4}', "--out", path)
    assert code == 0
    return path


def test_embed_then_roundtrip(tmp_path, capsys, embed_config):
    rep = tmp_path / "rep.json"
    code, _, _ = run(capsys, "embed", "--config", embed_config, "--out", rep, "--plot", "--grid", "16")
    assert code == 0
    obj = json.loads(rep.read_text())
    assert set(obj["certificates"]) >= {"C", "normF", "normG"}
    assert obj["converged"] and len(obj["residuals"]) >= 1
    assert rep.with_suffix(".png").stat().st_size > 0
    code, out, _ = run(capsys, "roundtrip", "--report", rep, "--grid", "32")
    res = json.loads(out)
    assert code == 0 and res["ok"] and res["sup_defect"] <= obj["tol"]


def test_roundtrip_failure_exit_code(tmp_path, capsys, embed_config):
    rep = tmp_path / "rep.json"
    run(capsys, "embed", "--config", embed_config, "--out", rep)
    code, _, err = run(capsys, "roundtrip", "--report", rep, "--tol", "1e-30", "--grid", "8")
    assert code == 3 and json.loads(err)["error"] == "roundtrip"


def test_embed_threshold_exit_code(tmp_path, capsys):
    cfg = tmp_path / "big.json"
    run(capsys, "gen", "--seed", "1", "--amplitude", "0.5", "--out", cfg)
    code, out, err = run(capsys, "embed", "--config", cfg)
    assert code == 3 and out == ""
    obj = json.loads(err)
    assert obj["error"] == "threshold" and obj["diagnostics"]["normG"] == pytest.approx(0.5)


def test_embed_rejects_unknown_key(tmp_path, capsys, embed_config):
    cfg = json.loads(embed_config.read_text())
    cfg["colour"] = "blue"
    code, _, err = run(capsys, "embed", "--config", write(tmp_path / "bad.json", cfg))
    assert code == 2 and "colour" in json.loads(err)["message"]
    cfg.pop("colour")
    cfg["options"] = {"max_iters": 3}
    code, _, _ = run(capsys, "embed", "--config", write(tmp_path / "bad2.json", cfg))
    assert code == 2


def test_missing_file_is_validation_error(capsys):
    code, _, err = run(capsys, "rotnum", "--config", "/nonexistent/cfg.json")
    assert code == 2 and json.loads(err)["error"] == "validation"


def test_scan_csv(tmp_path, capsys):
    cfg = write(tmp_path / "amo.json", {"mu": "golden", "fiber": {"type": "schrodinger", "V": {"coupling": 0.25}}})
    out = tmp_path / "amo.csv"
    code, _, _ = run(capsys, "scan", "--config", cfg, "--emin", "-4", "--emax", "4", "--steps", "161",
                     "--iters", "4000", "--out", out, "--plot")
    assert code == 0
    assert out.read_text().splitlines()[0] == CSV_HEADER
    with open(out) as fh:
        data = read_scan_csv(fh)
    E, rot, lyap, err = data.T
    assert len(E) == 161 and E[0] == -4.0 and E[-1] == 4.0
    assert np.all(np.diff(rot) >= -(err[1:] + err[:-1]))
    assert out.with_suffix(".png").stat().st_size > 0


def test_scan_is_byte_deterministic(tmp_path, capsys):
    cfg = write(tmp_path / "amo.json", AMO)
    texts = []
    for name in ("a.csv", "b.csv"):
        run(capsys, "scan", "--config", cfg, "--steps", "21", "--iters", "2000", "--out", tmp_path / name)
        texts.append((tmp_path / name).read_bytes())
    assert texts[0] == texts[1]


def test_scan_needs_schrodinger(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", {"mu": [0.3], "fiber": {"type": "matrix", "B": {"dim": 1, "tag": "SL2R_valued",
                                                                                       "coeffs": [[0, 0, 0, 1.0, 0.0], [1, 1, 0, 1.0, 0.0]]}}})
    code, _, _ = run(capsys, "scan", "--config", cfg)
    assert code == 2


def test_rotnum_lyap_uhcert(tmp_path, capsys):
    cfg = write(tmp_path / "amo.json", AMO)
    code, out, _ = run(capsys, "rotnum", "--config", cfg, "--iters", "5000")
    assert code == 0 and 0 <= json.loads(out)["value"] < 1
    code, out, _ = run(capsys, "lyap", "--config", cfg, "--iters", "4000", "--samples", "4")
    assert code == 0 and json.loads(out)["lyapunov"] >= np.log(3.0) - 1e-2
    far = write(tmp_path / "far.json", dict(AMO, fiber=dict(AMO["fiber"], E=12.0)))
    code, out, _ = run(capsys, "uhcert", "--config", far, "--iters", "30", "--grid", "16")
    res = json.loads(out)
    assert code == 0 and res["status"] == "certified_UH" and res["rigorous"] is False


def test_rotnum_degree_error(tmp_path, capsys):
    B = {"dim": 1, "tag": "SL2R_valued", "coeffs": [[0, 0, 0, 1.0, 0.0], [1, 1, 0, 1.0, 0.0]]}
    cfg = write(tmp_path / "deg.json", {"mu": [0.3], "homotopy_degree": [1], "fiber": {"type": "matrix", "B": B}})
    code, _, err = run(capsys, "rotnum", "--config", cfg, "--iters", "10")
    assert code == 3 and json.loads(err)["error"] == "DegreeError"


def test_flow_subcommands(tmp_path, capsys):
    cfg = tmp_path / "sys.json"
    run(capsys, "gen", "--seed", "2", "--params", '{"kind": "system", "amplitude": 0.05, "rho": 0.2}', "--out", cfg)
    csv = tmp_path / "p.csv"
    code, _, _ = run(capsys, "poincare", "--config", cfg, "--grid", "8", "--out", csv, "--plot")
    assert code == 0
    lines = csv.read_text().splitlines()
    assert lines[0] == "theta_1,a11,a12,a21,a22" and len(lines) == 9
    a = np.array([float(x) for x in lines[1].split(",")[1:]])
    assert abs(a[0] * a[3] - a[1] * a[2] - 1) <= 1e-12
    assert csv.with_suffix(".png").exists()
    code, out, _ = run(capsys, "poincare", "--config", cfg, "--grid", "4", "--format", "json")
    assert code == 0 and json.loads(out)["det_err"] <= 1e-12
    code, out, _ = run(capsys, "rotnum-flow", "--config", cfg, "--time", "50")
    assert code == 0 and abs(json.loads(out)["value"] + 0.2) <= 0.05
    code, out, _ = run(capsys, "lyap-flow", "--config", cfg, "--time", "50")
    assert code == 0 and abs(json.loads(out)["lyapunov"]) <= 0.1


def test_plot_needs_out(tmp_path, capsys):
    cfg = write(tmp_path / "amo.json", AMO)
    code, _, _ = run(capsys, "scan", "--config", cfg, "--steps", "3", "--iters", "10", "--plot")
    assert code == 2


def test_gen_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        run(capsys, "gen", "--seed", "9", "--amplitude", "1e-3", "--out", p)
    assert a.read_bytes() == b.read_bytes()


def test_thread_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("QPEMBED_THREADS", "1")
    code, _, _ = run(capsys, "cfrac", "--alpha", "golden", "--depth", "3")
    assert code == 0
    monkeypatch.setenv("QPEMBED_THREADS", "zero")
    code, _, _ = run(capsys, "cfrac", "--alpha", "golden", "--depth", "3")
    assert code == 2


def test_selftest_subset(capsys):
    code, out, _ = run(capsys, "selftest", "--criteria", "3", "7")
    assert code == 0
    assert "PASS" in out and "2/2 criteria passed" in out


@pytest.mark.skipif(shutil.which("qpembed") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["qpembed", "cfrac", "--alpha", "sqrt2m1", "--depth", "4", "--json"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["a"] == [2, 2, 2, 2]
