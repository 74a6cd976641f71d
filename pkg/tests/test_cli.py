import hashlib
import json
import os
import subprocess
import sys

import pytest

from hcexpand.cli import main

SQ = {
    "problem": "pressure",
    "geometry": {"outer": {"type": "rectangle", "bounds": [0, 0, 1, 1]},
                 "inclusions": [{"type": "disk", "center": [0.5, 0.5], "radius": 0.2}], "target_h": 0.0625},
    "contrasts": [10, 100],
    "source": 1,
    "jmax": 6,
}


def write(tmp_path, cfg, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def digests(d):
    return {f: hashlib.sha256((d / f).read_bytes()).hexdigest() for f in sorted(os.listdir(d)) if f.endswith(".csv")}


@pytest.mark.parametrize(
    "command, expected",
    [
        (["expand", "pressure"], {"term_00.csv", "term_06.csv", "constants.csv"}),
        (["report", "error"], {"errors.csv", "slopes.csv"}),
        (["report", "terms-needed"], {"terms_needed.csv"}),
        (["report", "energy"], {"energy.csv", "energy_coefficients.csv"}),
        (["solve", "direct"], {"direct_eta10.csv", "direct_eta100.csv"}),
        (["sweep", "delta"], {"sweep.csv"}),
        (["mesh", "gen"], {"mesh.json", "mesh_quality.csv"}),
        (["mesh", "refine"], {"mesh.json", "mesh_quality.csv"}),
        (["mesh", "check"], {"mesh_quality.csv"}),
    ],
)
def test_commands_write_artifacts(tmp_path, command, expected):
    out = tmp_path / "out"
    assert main([*command, "--config", write(tmp_path, SQ), "--out", str(out)]) == 0
    files = set(os.listdir(out))
    assert expected <= files
    man = json.loads((out / "manifest.json").read_text())
    assert {a["name"] for a in man["artifacts"]} == files - {"manifest.json"}
    assert all(a["config_hash"] == man["config_hash"] for a in man["artifacts"])
    assert set(man["versions"]) >= {"python", "numpy", "scipy", "numba"}


def test_csv_format(tmp_path):
    out = tmp_path / "o"
    main(["report", "error", "--config", write(tmp_path, SQ), "--out", str(out)])
    raw = (out / "errors.csv").read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "J,eta,rel_err_H1"
    assert len(lines) == 1 + 2 * 7
    float(lines[1].split(",")[2])


def test_sweep_has_one_row_per_delta(tmp_path):
    out = tmp_path / "o"
    main(["sweep", "delta", "--config", write(tmp_path, SQ), "--out", str(out)])
    assert len((out / "sweep.csv").read_text().splitlines()) == 12


def test_flags_override_config(tmp_path):
    out = tmp_path / "o"
    main(["expand", "pressure", "--config", write(tmp_path, SQ), "--out", str(out), "--jmax", "2"])
    assert not (out / "term_03.csv").exists() and (out / "term_02.csv").exists()
    out2 = tmp_path / "o2"
    main(["report", "terms-needed", "--config", write(tmp_path, SQ), "--out", str(out2), "--tol", "1e-3"])
    assert ",0.001," in (out2 / "terms_needed.csv").read_text()


def test_config_error_exit_code_and_cleanup(tmp_path, capsys):
    out = tmp_path / "o"
    bad = {**SQ, "contrasts": [0.5]}
    assert main(["expand", "pressure", "--config", write(tmp_path, bad), "--out", str(out)]) == 2
    assert "/contrasts/0" in capsys.readouterr().err
    assert not out.exists()
    assert main(["expand", "pressure", "--out", str(out)]) == 2


def test_validation_error_exit_code(tmp_path):
    mesh_file = tmp_path / "m.json"
    mesh_file.write_text(json.dumps({"nodes": [[0, 0]], "triangles": [[0, 0, 0, 0]], "boundary_edges": [],
                                     "num_inclusions": 0}))
    out = tmp_path / "o"
    assert main(["mesh", "check", "--mesh", str(mesh_file), "--out", str(out)]) == 4
    assert not out.exists()
    overlap = {**SQ, "geometry": {**SQ["geometry"], "inclusions": [
        {"type": "disk", "center": [0.4, 0.5], "radius": 0.15}, {"type": "disk", "center": [0.6, 0.5], "radius": 0.15}]}}
    assert main(["mesh", "gen", "--config", write(tmp_path, overlap), "--out", str(out)]) == 4


def test_precondition_failure_removes_partial_output(tmp_path):
    out = tmp_path / "o"
    cfg = {**SQ, "boundary": "x1"}  # energy needs g = 0
    assert main(["report", "energy", "--config", write(tmp_path, cfg), "--out", str(out)]) == 2
    assert not out.exists()


def test_solver_error_exit_code(tmp_path, monkeypatch):
    from hcexpand import cli
    from hcexpand.errors import SolverError

    def boom(ctx, action):
        ctx.writer.csv("partial.csv", ("a",), [(1,)])
        raise SolverError("factorization failed")

    monkeypatch.setitem(cli.HANDLERS, "solve", boom)
    out = tmp_path / "o"
    out.mkdir()
    (out / "keep.txt").write_text("user file")
    assert main(["solve", "direct", "--config", write(tmp_path, SQ), "--out", str(out)]) == 3
    assert sorted(os.listdir(out)) == ["keep.txt"]


def test_elastic_commands(tmp_path):
    cfg = {**SQ, "problem": "elastic", "source": [0, -1], "jmax": 4}
    out = tmp_path / "e"
    assert main(["report", "error", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    head = (out / "errors.csv").read_text().splitlines()
    assert head[0] == "J,contrast,rel_err_H1,mode" and head[1].endswith(",stiff")
    soft = {**cfg, "mode": "soft", "contrasts": [0.1]}
    out2 = tmp_path / "s"
    assert main(["expand", "elastic", "--config", write(tmp_path, soft), "--out", str(out2)]) == 0
    assert (out2 / "term_m1.csv").exists()
    assert (out2 / "term_00.csv").read_text().startswith("node_id,x,y,ux,uy\n")


def test_1d_example_terms(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "1d-example", "--out", str(out), "--jmax", "3"]) == 0
    rows = (out / "pieces_1d.csv").read_text().splitlines()
    assert "0,0,-2,-1,2,4" in rows and "1,1,-1,1,2,0" in rows and "2,2,1,2,2,-4" in rows
    consts = (out / "constants_1d.csv").read_text().splitlines()
    assert consts[1:] == ["0,2", "1,0", "2,0", "3,0"]
    errs = (out / "errors_1d.csv").read_text().splitlines()
    for eta in ("2", "10", "100"):
        ratios = [r.split(",")[3] for r in errs[1:] if r.startswith(eta + ",")][1:]
        assert ratios == [f"1/{eta}"] * 3


def test_expand_on_1d_config(tmp_path):
    out = tmp_path / "o"
    cfg = {"problem": "1d", "interval": {"a": -2, "b": 2, "p": -1, "q": 1, "u_a": 0, "u_b": 4}, "contrasts": [10]}
    assert main(["expand", "pressure", "--config", write(tmp_path, cfg), "--out", str(out), "--jmax", "2"]) == 0
    assert (out / "terms_1d.csv").exists()


def test_cache_dir_reuse_gives_identical_csv(tmp_path):
    cfg = {**SQ, "cache_dir": str(tmp_path / "cache")}
    a, b = tmp_path / "a", tmp_path / "b"
    main(["expand", "pressure", "--config", write(tmp_path, cfg), "--out", str(a)])
    assert any(f.startswith("basis-scalar") for f in os.listdir(tmp_path / "cache"))
    main(["expand", "pressure", "--config", write(tmp_path, cfg), "--out", str(b)])
    assert digests(a) == digests(b)


def test_rerun_is_byte_identical_across_threads(tmp_path):
    cfg = write(tmp_path, SQ)
    a, b = tmp_path / "a", tmp_path / "b"
    main(["report", "error", "--config", cfg, "--out", str(a), "--threads", "1"])
    main(["report", "error", "--config", cfg, "--out", str(b), "--threads", str(os.cpu_count() or 2)])
    assert digests(a) == digests(b)


def test_console_script_entry(tmp_path):
    r = subprocess.run([sys.executable, "-m", "hcexpand.cli", "run", "1d-example", "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
