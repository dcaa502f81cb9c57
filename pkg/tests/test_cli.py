import json

import pytest

from fdrkit import cli, core


@pytest.fixture
def csvfile(tmp_path):
    def make(text, name="in.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return make


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_apply_bh(csvfile, capsys):
    code, out, _ = run(["apply", csvfile("p\n0.11\n0.12\n"), "--procedure", "bh", "--alpha", "0.2"], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["schema"] == 1
    assert report["rejected"] == [1, 2] and report["k_star"] == 2
    assert report["threshold"] == pytest.approx(0.2)
    assert report["simes"] == pytest.approx(0.12)
    assert [d["index"] for d in report["decisions"]] == [1, 2]


def test_apply_by_and_ebh(csvfile, capsys):
    code, out, _ = run(["apply", csvfile("p\n0.001\n0.2\n0.9\n"), "--procedure", "by", "--alpha", "0.1"], capsys)
    report = json.loads(out)
    assert code == 0 and report["rejected"] == [1]
    assert report["effective_alpha"] == pytest.approx(0.1 / core.harmonic_number(3))
    code, out, _ = run(["apply", csvfile("e\n6\n3\n1\ninf\n"), "--procedure", "ebh", "--alpha", "0.5"], capsys)
    report = json.loads(out)
    assert code == 0 and report["rejected"] == [1, 2, 4]  # k=3: 3 * 3 * 0.5 >= 4
    assert "simes" not in report
    assert report["decisions"][3]["value"] == "inf"


def test_apply_csv_output_preserves_order(csvfile, capsys, tmp_path):
    dest = tmp_path / "out.csv"
    code, _, _ = run(
        ["apply", csvfile("p\n0.5\n0.01\n0.3\n"), "--alpha", "0.1", "--format", "csv", "--output", str(dest)],
        capsys,
    )
    assert code == 0
    lines = dest.read_text().splitlines()
    assert lines == ["index,p,rejected", "1,0.5,false", "2,0.01,true", "3,0.3,false"]


@pytest.mark.parametrize(
    "text, message",
    [
        ("", "no values"),
        ("p\n", "no values"),
        ("p\n1.5\n", "line 2"),
        ("p\n0.2\nabc\n", "line 3"),
        ("q\n0.2\n", "line 1"),
        ("p\n0.2,0.3\n", "line 2"),
    ],
)
def test_apply_validation_errors(csvfile, capsys, text, message):
    code, out, err = run(["apply", csvfile(text), "--alpha", "0.1"], capsys)
    assert code == 2 and out == ""
    assert message in err


def test_apply_negative_evalue(csvfile, capsys):
    code, _, err = run(["apply", csvfile("e\n1\n-2\n"), "--procedure", "ebh", "--alpha", "0.1"], capsys)
    assert code == 2 and "line 3" in err


def test_apply_missing_file(tmp_path, capsys):
    code, _, err = run(["apply", str(tmp_path / "missing.csv"), "--alpha", "0.1"], capsys)
    assert code == 1 and "I/O" in err


def test_bad_alpha_exits_2(csvfile, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["apply", csvfile("p\n0.1\n"), "--alpha", "1.5"])
    assert exc.value.code == 2


def test_calibrate_values(csvfile, capsys):
    code, out, _ = run(["calibrate", csvfile("p\n0\n0.5\n0.01\n"), "--alpha", "0.1"], capsys)
    report = json.loads(out)
    assert code == 0
    K, ap = 3, report["alpha_prime"]
    assert ap == pytest.approx(0.1 * core.harmonic_number(3))
    assert report["e_values"][0] == pytest.approx(K / ap)
    assert report["e_values"][1] == 0.0
    assert "note" in report


def test_calibrate_round_trip(csvfile, capsys, tmp_path):
    pvals = "p\n0.04\n0.10\n0.30\n0.50\n0.012\n0.02\n"
    src = csvfile(pvals)
    alpha = "0.1"
    code, out, _ = run(["calibrate", src, "--alpha", alpha], capsys)
    alpha_prime = json.loads(out)["alpha_prime"]
    ecsv = tmp_path / "e.csv"
    assert run(["calibrate", src, "--alpha", alpha, "--format", "csv", "-o", str(ecsv)], capsys)[0] == 0
    _, out_e, _ = run(["apply", str(ecsv), "--procedure", "ebh", "--alpha", repr(alpha_prime)], capsys)
    _, out_p, _ = run(["apply", src, "--procedure", "bh", "--alpha", alpha], capsys)
    assert json.loads(out_e)["rejected"] == json.loads(out_p)["rejected"] == [1, 5, 6]


SIM = ["simulate", "--model", "independent-uniform", "--K", "10", "--K0", "10",
       "--procedure", "bh", "--alpha", "0.1", "--seed", "7"]


def test_simulate_report(capsys):
    code, out, _ = run(SIM + ["--reps", "20000"], capsys)
    report = json.loads(out)
    assert code == 0
    for key in ("mean_fdp", "std_error", "mean_power", "bound", "bound_satisfied", "schema"):
        assert key in report
    assert report["bound"] == pytest.approx(0.1)
    assert report["bound_satisfied"] is True


def test_simulate_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(SIM + ["--reps", "20000", "-o", str(a)]) == 0
    assert cli.main(SIM + ["--reps", "20000", "--workers", "2", "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_invalid(capsys):
    assert run(SIM + ["--reps", "0"], capsys)[0] == 2
    bad_model = ["simulate", "--model", "gaussian-one-factor", "--K", "5", "--K0", "9", "--alpha", "0.1"]
    assert run(bad_model, capsys)[0] == 2
    wrong_proc = ["simulate", "--model", "comonotone-evalue", "--K", "5", "--K0", "5", "--alpha", "0.1"]
    assert run(wrong_proc, capsys)[0] == 2


def test_simulate_adversarial_defaults(capsys):
    argv = ["simulate", "--model", "discrete-adversarial-p", "--K", "10", "--K0", "10",
            "--procedure", "by", "--alpha", "0.2", "--reps", "5000", "--format", "csv"]
    code, out, _ = run(argv, capsys)
    header, row = out.strip().splitlines()
    assert code == 0 and header.startswith("model,K,K0,procedure")
    assert row.startswith("discrete-adversarial-p,10,10,by")


def test_verify_command(capsys):
    code, out, _ = run(["verify", "--trials", "50", "--seed", "1"], capsys)
    report = json.loads(out)
    assert code == 0 and report["passed"]
    assert {c["check_name"] for c in report["checks"]} >= {"reciprocal_duality", "simes_bh_link"}
    assert run(["verify", "--trials", "0"], capsys)[0] == 2
