import csv
import io
import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from parflow import pft
from parflow.bench import (
    BACKENDS,
    CSV_COLUMNS,
    REPORT_SCHEMA,
    BenchConfig,
    ConfigError,
    bench,
    generate_inputs,
    make_rng,
    splitmix64,
    verify,
)
from parflow.cli import EXIT_CONFIG, EXIT_INPUT, EXIT_OK, EXIT_TOLERANCE, main
from parflow.tensor import rel_frobenius

DATA = Path(__file__).parent / "data"
GOLDEN = {name: DATA / f"golden_seed1_L2_R1_d2_{name}.pft" for name in ("A", "A_tilde", "B", "S0")}


def test_splitmix64_reference_stream():
    # published first outputs for state 0
    state, outs = 0, []
    for _ in range(3):
        state, z = splitmix64(state)
        outs.append(z)
    assert outs == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_generator_deterministic_bytes():
    a, s0a = generate_inputs(7, 5, 2, 3)
    b, s0b = generate_inputs(7, 5, 2, 3)
    for x, y in zip((a.A, a.A_tilde, a.B, s0a), (b.A, b.A_tilde, b.B, s0b)):
        assert pft.dumps(x) == pft.dumps(y)
    c, _ = generate_inputs(8, 5, 2, 3)
    assert not np.array_equal(a.A, c.A)


def test_generator_streams_are_distinct_per_seed():
    assert make_rng(0).standard_normal() != make_rng(1).standard_normal()


def test_generator_scale_zero():
    inp, S0 = generate_inputs(3, 4, 2, 3, scale=0.0)
    assert not inp.A.any() and not inp.A_tilde.any() and not inp.B.any()
    np.testing.assert_array_equal(S0, np.eye(3))


def test_generator_golden_files():
    inp, S0 = generate_inputs(1, 2, 1, 2)
    for name, arr in (("A", inp.A), ("A_tilde", inp.A_tilde), ("B", inp.B), ("S0", S0)):
        assert pft.dumps(arr) == GOLDEN[name].read_bytes(), name


def test_generator_golden_values():
    # the same values as literals, in case the files are regenerated by mistake
    inp, S0 = generate_inputs(1, 2, 1, 2)
    np.testing.assert_allclose(inp.A.ravel(), [0.38208407, -0.09294934, -0.01208041, -0.68063326], atol=5e-9)
    np.testing.assert_allclose(S0.ravel(), [1.12980307, 0.00402103, 0.15877602, 1.35258579], atol=5e-9)


def test_config_validation():
    with pytest.raises(ConfigError):
        BenchConfig(R=0)
    with pytest.raises(ConfigError):
        BenchConfig(tolerance=0.0)
    with pytest.raises(ConfigError):
        BenchConfig(repeats=0)
    with pytest.raises(ConfigError):
        BenchConfig(backends=["fast"])
    with pytest.raises(ConfigError):
        BenchConfig.from_dict({"L": 4, "colour": "red"})
    BenchConfig(L=0)


def test_verify_reports_all_backends():
    ok, rows = verify(BenchConfig(L=20, R=2, d=4, chunk_len=6))
    assert ok
    assert [r["backend"] for r in rows] == list(BACKENDS)
    assert all(r["max_rel_err"] <= 1e-9 for r in rows)
    # unchunked seq is the oracle itself
    _, rows = verify(BenchConfig(L=20, R=2, d=4, backends=["seq"]))
    assert rows[0]["max_rel_err"] == 0.0


def test_verify_adds_seq():
    ok, rows = verify(BenchConfig(L=5, R=1, d=3, backends=["sigdelta"]))
    assert ok and [r["backend"] for r in rows] == ["seq", "sigdelta"]


def test_bench_without_seq_has_no_error_column():
    rows = bench(BenchConfig(L=8, R=1, d=2, backends=["tensorinv"]))
    assert rows[0]["max_rel_err"] is None


def test_bench_tensorinv_peak_covers_system():
    for L in (8, 32):
        (row,) = bench(BenchConfig(L=L, R=2, d=4, backends=["tensorinv"]))
        assert row["peak_scalars"] >= L * L * 2 * 2


def test_bench_counters_deterministic():
    cfg = BenchConfig(L=24, R=2, d=4, chunk_len=5, repeats=2, sweep=[8, 24])
    volatile = ("time_min_ns", "time_median_ns")
    a = [{k: v for k, v in r.items() if k not in volatile} for r in bench(cfg)]
    b = [{k: v for k, v in r.items() if k not in volatile} for r in bench(cfg)]
    assert a == b and len(a) == 2 * len(BACKENDS)


# ---------------------------------------------------------------- CLI


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_verify_default_exits_zero(capsys):
    code, out, _ = run_cli(capsys, "verify")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert {r["backend"] for r in rows} == set(BACKENDS)


def test_cli_verify_tolerance_breach(capsys):
    code, _, err = run_cli(capsys, "verify", "--tolerance", "1e-18", "--L", "32", "--d", "8")
    assert code == EXIT_TOLERANCE
    assert "exceeded" in err


def test_cli_verify_empty_sequence(capsys):
    code, out, _ = run_cli(capsys, "verify", "--L", "0", "--format", "json")
    assert code == EXIT_OK
    assert all(r["max_rel_err"] == 0.0 for r in json.loads(out)["rows"])


@pytest.mark.parametrize(
    "argv",
    [["verify", "--R", "0"], ["verify", "--backend", "gpu"], ["bench", "--tolerance", "-1"], ["frobnicate"],
     ["run", "--L", "3"]],
)
def test_cli_config_errors(capsys, argv):
    code, _, err = run_cli(capsys, *argv)
    assert code == EXIT_CONFIG
    assert "config error" in err


def test_cli_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"L": 6, "R": 1, "d": 3, "backends": ["sigdelta"], "format": "json"}))
    code, out, _ = run_cli(capsys, "bench", "--config", str(cfg), "--L", "9")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["config"]["L"] == 9 and doc["rows"][0]["backend"] == "sigdelta"
    cfg.write_text(json.dumps({"L": 6, "nonsense": 1}))
    assert run_cli(capsys, "bench", "--config", str(cfg))[0] == EXIT_CONFIG


def test_json_report_validates(capsys, tmp_path):
    out = tmp_path / "report.json"
    assert run_cli(capsys, "verify", "--L", "10", "--d", "3", "--format", "json", "--out", str(out))[0] == EXIT_OK
    jsonschema.validate(json.loads(out.read_text()), REPORT_SCHEMA)
    assert run_cli(capsys, "bench", "--sweep", "4,8", "--d", "3", "--format", "json", "--out", str(out))[0] == 0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, REPORT_SCHEMA)
    assert [r["L"] for r in doc["rows"]] == [4] * 4 + [8] * 4


def test_cli_run_seq_vs_tensorinv(tmp_path, capsys):
    a, b = tmp_path / "seq.pft", tmp_path / "ti.pft"
    common = ["--L", "40", "--R", "2", "--d", "6", "--seed", "11"]
    assert run_cli(capsys, "run", *common, "--backend", "seq", "--out", str(a))[0] == EXIT_OK
    assert run_cli(capsys, "run", *common, "--backend", "tensorinv", "--chunk-len", "16", "--out", str(b))[0] == EXIT_OK
    assert rel_frobenius(pft.read(b), pft.read(a)) <= 1e-9


def test_cli_run_file_inputs_and_trajectory(tmp_path, capsys):
    out, traj = tmp_path / "S.pft", tmp_path / "traj.pft"
    paths = [str(GOLDEN[k]) for k in ("A", "A_tilde", "B")]
    code, _, _ = run_cli(capsys, "run", "--backend", "sigdelta", "--chunk-len", "1", "--inputs", *paths,
                         "--s0", str(GOLDEN["S0"]), "--out", str(out), "--trajectory", str(traj))
    assert code == EXIT_OK
    inp, S0 = generate_inputs(1, 2, 1, 2)
    S = S0
    for k in range(2):
        S = S + (S @ inp.A[k].T + inp.A_tilde[k].T) @ inp.B[k]
    np.testing.assert_allclose(pft.read(out), S, rtol=1e-13)
    states = pft.read(traj)
    assert states.shape == (3, 2, 2)
    np.testing.assert_array_equal(states[0], S0)


def test_cli_run_missing_file_names_path(tmp_path, capsys):
    missing = tmp_path / "nope_A.pft"
    out = tmp_path / "S.pft"
    code, _, err = run_cli(capsys, "run", "--inputs", str(missing), str(GOLDEN["A_tilde"]), str(GOLDEN["B"]),
                           "--out", str(out))
    assert code == EXIT_INPUT
    assert str(missing) in err
    assert not out.exists()


def test_cli_run_bad_magic_leaves_no_output(tmp_path, capsys):
    bad = tmp_path / "bad.pft"
    bad.write_bytes(b"XXXX" + GOLDEN["A"].read_bytes()[4:])
    out = tmp_path / "S.pft"
    code, _, err = run_cli(capsys, "run", "--inputs", str(bad), str(GOLDEN["A_tilde"]), str(GOLDEN["B"]),
                           "--out", str(out))
    assert code == EXIT_INPUT
    assert "parse error" in err
    assert not out.exists()
    assert list(tmp_path.iterdir()) == [bad]


def test_cli_run_inconsistent_shapes(tmp_path, capsys):
    other = tmp_path / "B3.pft"
    pft.write(other, np.zeros((3, 1, 2)))
    out = tmp_path / "S.pft"
    code, _, _ = run_cli(capsys, "run", "--inputs", str(GOLDEN["A"]), str(GOLDEN["A_tilde"]), str(other),
                         "--out", str(out))
    assert code == EXIT_INPUT and not out.exists()
