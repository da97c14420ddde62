import csv
import io
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from wfsd import cli

FAST = ["--batches", "2", "--paths", "5"]


def run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def data_rows(text):
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def manifest(text):
    return dict(ln[2:].split(": ", 1) for ln in text.splitlines() if ln.startswith("# ") and ": " in ln)


def test_convergence_row_count_and_columns(capsys):
    code, out, _ = run(["convergence", "--preset", "set-i", "--schemes", "sd,biss,hyb",
                        "--reference", "hyb", "--seed", "7", *FAST], capsys)
    assert code == 0
    rows = data_rows(out)
    assert len(rows) == 30
    assert list(rows[0]) == cli.CSV_COLUMNS
    assert {r["scheme"] for r in rows} == {"sd", "biss", "hyb"}
    assert {r["param_set"] for r in rows} == {"set-i"}
    m = manifest(out)
    assert m["seed"] == "7" and m["reference"] == "hyb" and "timestamp" in m and m["tool_version"]
    assert any(k.startswith("runtime[") for k in m)
    # shortest round-trip floats
    for r in rows:
        assert repr(float(r["error"])) == r["error"]


def test_convergence_reproducible_byte_for_byte(tmp_path, capsys):
    args = ["convergence", "--preset", "set-i", "--schemes", "sd,biss", "--reference", "sd",
            "--seed", "99", "--exps", "3-6", "--ref-exp", "8", *FAST]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(args + ["--out", str(a)]) == 0
    seed = manifest(a.read_text())["seed"]
    assert cli.main(args[:-8] + ["--seed", seed, "--exps", "3-6", "--ref-exp", "8", *FAST,
                                 "--workers", "2", "--out", str(b)]) == 0
    strip = lambda p: [ln for ln in p.read_text().splitlines() if not ln.startswith("#")]
    assert strip(a) == strip(b)


def test_hyb_rejected_on_set_ii(capsys):
    code, _, err = run(["convergence", "--preset", "set-ii", "--schemes", "sd,hyb",
                        "--reference", "sd-alt", "--seed", "1", *FAST], capsys)
    assert code == 2 and "A/(A+B)" in err


def test_three_state_rows(capsys):
    code, out, _ = run(["convergence", "--preset", "set-iii", "--schemes", "sd3,biss3", "--reference", "em3",
                        "--reject-exits", "--seed", "3", "--ref-exp", "12", *FAST], capsys)
    assert code == 0
    rows = data_rows(out)
    assert len(rows) == 20
    for r in rows:
        assert int(r["paths_used"]) + int(r["paths_rejected"]) == 10


def test_seed_required(capsys):
    code, _, err = run(["convergence", "--preset", "set-i", "--schemes", "sd", "--reference", "sd"], capsys)
    assert code == 2 and "seed" in err


def test_unknown_scheme_and_preset(capsys):
    assert run(["convergence", "--preset", "set-i", "--schemes", "rk4", "--reference", "sd",
                "--seed", "1"], capsys)[0] == 2
    with pytest.raises(SystemExit) as ei:
        cli.main(["classify", "--preset", "set-x"])
    assert ei.value.code == 2


def test_step_violation_exit_code(capsys):
    code, _, err = run(["convergence", "--k1", "7", "--k2", "7.01", "--k3", "0.5", "--x0", "0.999",
                        "--schemes", "sd", "--reference", "sd-alt", "--seed", "1", "--exps", "3",
                        "--ref-exp", "5", *FAST], capsys)
    assert code == 3 and "drift update" in err


def test_all_rejected_exit_code(capsys):
    code, _, _ = run(["convergence", "--k1", "5", "--k2", "1", "--k3", "0.1", "--x0", "1",
                      "--schemes", "em", "--reference", "em", "--reject-exits", "--seed", "1",
                      "--exps", "2-4", "--ref-exp", "4", *FAST], capsys)
    assert code == 4


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# coarse smoke run\npreset = set-i\nschemes = sd\nreference = sd\nseed = 5\n"
        "exps = 3-5\nref-exp = 7\nbatches = 3\npaths = 4  # trailing comment\n"
    )
    code, out, _ = run(["convergence", "--config", str(cfg), "--paths", "6"], capsys)
    assert code == 0
    m = manifest(out)
    assert m["paths"] == "6" and m["batches"] == "3" and m["ref_exp"] == "7"
    assert all(r["paths_used"] == "18" for r in data_rows(out))


def test_config_file_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert run(["convergence", "--config", str(bad)], capsys)[0] == 2
    bad.write_text("batches = many\n")
    assert run(["convergence", "--config", str(bad)], capsys)[0] == 2
    bad.write_text("just words\n")
    assert run(["convergence", "--config", str(bad)], capsys)[0] == 2
    assert run(["convergence", "--config", str(tmp_path / "missing.cfg")], capsys)[0] == 2


def test_parse_exps():
    assert cli.parse_exps("3-5,10") == (3, 4, 5, 10)
    with pytest.raises(ValueError):
        cli.parse_exps(",")


# --- simulate --------------------------------------------------------------

def test_simulate_sd_set_i(capsys):
    code, out, _ = run(["simulate", "--preset", "set-i", "--scheme", "sd", "--k", "5", "--seed", "4"], capsys)
    assert code == 0
    rows = data_rows(out)
    assert len(rows) == 33
    y = np.array([float(r["y"]) for r in rows])
    assert np.all((y > 0) & (y < 1))
    assert rows[-1]["t"] == "1.0"


def test_simulate_em_set_ii_truncates_at_exit(capsys):
    for seed in range(200):
        code, out, _ = run(["simulate", "--preset", "set-ii", "--scheme", "em", "--k", "5",
                            "--seed", str(seed)], capsys)
        rows = data_rows(out)
        if rows[-1]["exited"] == "1":
            break
    else:
        pytest.fail("no exiting Euler path among 200 seeds")
    assert code == 0 and len(rows) < 33
    assert not (0 <= float(rows[-1]["y"]) <= 1)
    assert all(r["exited"] == "0" for r in rows[:-1])


def test_simulate_three_state(capsys):
    code, out, _ = run(["simulate", "--preset", "set-iii", "--scheme", "sd3", "--k", "5", "--seed", "2"], capsys)
    assert code == 0
    for r in data_rows(out):
        s = float(r["Y1"]) + float(r["Y2"]) + float(r["Y3"])
        assert abs(s - 1) <= 2e-16


def test_simulate_coarse_path_is_coarsened_fine_path(capsys):
    _, a, _ = run(["simulate", "--preset", "set-i", "--scheme", "em", "--k", "3", "--seed", "8"], capsys)
    _, b, _ = run(["simulate", "--preset", "set-i", "--scheme", "em", "--k", "3", "--seed", "8",
                   "--fine-exp", "3"], capsys)
    assert data_rows(a) != data_rows(b)  # different fine grids give different coarse increments
    _, c, _ = run(["simulate", "--preset", "set-i", "--scheme", "em", "--k", "3", "--seed", "8"], capsys)
    assert data_rows(a) == data_rows(c)


def test_simulate_errors(capsys):
    code, _, err = run(["simulate", "--k1", "7", "--k2", "7.01", "--k3", "0.5", "--x0", "0.99999",
                        "--scheme", "sd", "--k", "3", "--seed", "1"], capsys)
    assert code == 3 and "node 0" in err
    assert run(["simulate", "--preset", "set-iii", "--scheme", "sd", "--k", "3", "--seed", "1"], capsys)[0] == 2


# --- classify / presets ----------------------------------------------------

def test_classify(capsys):
    code, out, _ = run(["classify", "--preset", "set-i"], capsys)
    assert code == 0 and out.count("-> unattainable") == 2 and "probe agrees: yes" in out
    code, out, _ = run(["classify", "--k1", "0.1", "--k2", "0.2", "--k3", "1"], capsys)
    assert out.count("-> attainable") == 2
    code, out, _ = run(["classify", "--k1", "0.5", "--k2", "1", "--k3", "1"], capsys)
    assert "left (0): exponent 1 -> unattainable" in out
    assert run(["classify", "--k1", "-1", "--k2", "1", "--k3", "1"], capsys)[0] == 2
    assert run(["classify", "--k1", "1"], capsys)[0] == 2


def test_presets(capsys):
    code, out, _ = run(["presets"], capsys)
    assert code == 0
    assert "set-i:" in out and "set-ii:" in out and "set-iii:" in out
    assert "0.143765" in out or "0.143764" in out
    assert "X1=0.368083 X2=0.202569" in out


# --- plot ------------------------------------------------------------------

def _set_i_csv(path):
    rows = ["# param_set: set-i", "# reference: sd", ",".join(cli.CSV_COLUMNS)]
    sd = [0.009030, 0.004210, 0.002054, 0.000999, 0.000498, 0.000243, 0.000120, 0.000057, 0.000026, 0.000011]
    biss = [0.020507, 0.011952, 0.007588, 0.004791, 0.003123, 0.002069, 0.001410, 0.000967, 0.000668, 0.000467]
    hyb = [0.009693, 0.004857, 0.002536, 0.001266, 0.000634, 0.000321, 0.000161, 0.000083, 0.000043, 0.000023]
    for name, col in (("sd", sd), ("biss", biss), ("hyb", hyb)):
        for k, e in zip(range(3, 13), col):
            rows.append(f"{name},set-i,{k},{2.0**-k!r},{e!r},{0.9 * e!r},{1.1 * e!r},10000,0")
    path.write_text("\n".join(rows) + "\n")


def test_plot_set_i_shape(tmp_path, capsys):
    src = tmp_path / "t2.csv"
    _set_i_csv(src)
    code, out, _ = run(["plot", str(src), "--out", str(tmp_path / "t2.svg")], capsys)
    assert code == 0
    slopes = dict(ln.split(": slope ") for ln in out.strip().splitlines())
    assert set(slopes) == {"sd", "biss", "hyb"}
    assert float(slopes["sd"]) == pytest.approx(1.0, abs=0.1)
    svg = (tmp_path / "t2.svg").read_text()
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    assert "reference: sd" in svg and "slope 1" in svg
    for s in ("sd (slope", "biss (slope", "hyb (slope"):
        assert s in svg


def test_plot_round_trip_from_convergence(tmp_path, capsys):
    c = tmp_path / "c.csv"
    assert cli.main(["convergence", "--preset", "set-i", "--schemes", "sd", "--reference", "sd",
                     "--seed", "2", "--exps", "3-6", "--ref-exp", "8", *FAST, "--out", str(c)]) == 0
    man, rows = cli.read_convergence_csv(c)
    text = c.read_text()
    assert [r["error"] for r in rows] == [float(r["error"]) for r in data_rows(text)]
    assert man["seed"] == "2"
    assert cli.main(["plot", str(c)]) == 0
    assert (tmp_path / "c.svg").exists()


def test_plot_single_row(tmp_path, capsys):
    src = tmp_path / "one.csv"
    src.write_text(",".join(cli.CSV_COLUMNS) + "\nsd,set-i,3,0.125,0.009,0.008,0.01,100,0\n")
    code, out, _ = run(["plot", str(src), "--out", str(tmp_path / "one.svg")], capsys)
    assert code == 0 and "insufficient data" in out
    assert "insufficient data" in (tmp_path / "one.svg").read_text()


def test_plot_bad_inputs(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run(["plot", str(empty)], capsys)[0] == 2
    header_only = tmp_path / "h.csv"
    header_only.write_text(",".join(cli.CSV_COLUMNS) + "\n")
    assert run(["plot", str(header_only)], capsys)[0] == 2
    bad = tmp_path / "bad.csv"
    bad.write_text(",".join(cli.CSV_COLUMNS) + "\nsd,set-i,three,0.125,x,0,0,1,0\n")
    assert run(["plot", str(bad)], capsys)[0] == 2
    wrong = tmp_path / "wrong.csv"
    wrong.write_text("a,b\n1,2\n")
    assert run(["plot", str(wrong)], capsys)[0] == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "wfsd", "presets"], capture_output=True, text=True)
    assert r.returncode == 0 and "set-iii" in r.stdout
