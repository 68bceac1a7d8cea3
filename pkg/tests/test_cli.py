import csv
import io
import json
import subprocess
import sys

import pytest

from fockline.cli import main

H2 = "h2_sto3g.fcidump"


def read_csv(text):
    lines = text.splitlines()
    assert lines[0].startswith("# manifest: ")
    manifest = json.loads(lines[0][len("# manifest: "):])
    rows = list(csv.reader(line for line in lines if not line.startswith("#")))
    return manifest, rows[0], rows[1:]


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestDmrg:
    def test_h2_json_and_trace(self, data_dir, references, tmp_path, capsys):
        out = tmp_path / "h2.json"
        code, _, _ = run(["dmrg", "--fcidump", str(data_dir / H2), "--rank", "4", "--out", str(out)], capsys)
        assert code == 0
        res = json.loads(out.read_text())
        assert res["energy"] == pytest.approx(references["h2_sto3g"]["e_fci"], abs=1e-8)
        man = res["manifest"]
        assert man["subcommand"] == "dmrg" and man["seed"] == 0
        assert man["config"]["max_rank"] == 4
        assert man["version"].startswith("0.1.0")
        _, header, rows = read_csv((tmp_path / "h2.trace.csv").read_text())
        assert header == ["sweep", "half", "site", "energy"]
        assert rows and all(len(r) == 4 for r in rows)

    def test_stdout_and_stdin(self, data_dir, references, monkeypatch, capsys):
        monkeypatch.setattr(sys, "stdin", io.StringIO((data_dir / H2).read_text()))
        code, out, _ = run(["dmrg", "--fcidump", "-", "--rank", "2"], capsys)
        assert code == 0
        assert json.loads(out)["energy"] == pytest.approx(references["h2_sto3g"]["e_fci"], abs=1e-8)

    def test_explicit_trace_path(self, data_dir, tmp_path, capsys):
        trace = tmp_path / "t.csv"
        code, out, _ = run(["dmrg", "--fcidump", str(data_dir / H2), "--rank", "2", "--trace-out", str(trace)],
                           capsys)
        assert code == 0 and trace.exists()
        json.loads(out)

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(["dmrg", "--fcidump", str(tmp_path / "nope")], capsys)
        assert code == 2 and "error" in err

    def test_bad_rank(self, data_dir, capsys):
        assert run(["dmrg", "--fcidump", str(data_dir / H2), "--rank", "0"], capsys)[0] == 2

    def test_malformed_file(self, tmp_path, capsys):
        p = tmp_path / "bad.fcidump"
        p.write_text("&FCI NORB=1,NELEC=1,&END\n1.0 5 1 0 0\n")
        code, _, err = run(["dmrg", "--fcidump", str(p)], capsys)
        assert code == 2 and "line 2" in err

    def test_too_many_sites(self, tmp_path, capsys):
        p = tmp_path / "big.fcidump"
        p.write_text("&FCI NORB=13,NELEC=2,&END\n-1.0 1 1 0 0\n")
        assert run(["dmrg", "--fcidump", str(p)], capsys)[0] == 3


class TestRankStudy:
    def test_rows(self, data_dir, capsys):
        code, out, _ = run(["rank-study", "--fcidump", str(data_dir / H2), "--ranks", "1..3"], capsys)
        assert code == 0
        man, header, rows = read_csv(out)
        assert header == ["rank", "energy", "seconds"]
        assert [int(r[0]) for r in rows] == [1, 2, 3]
        e = [float(r[1]) for r in rows]
        assert all(b <= a + 1e-9 for a, b in zip(e, e[1:]))
        assert man["config"]["max_rank"] == [1, 2, 3]

    @pytest.mark.parametrize("ranks", ["2,4", "1-2"])
    def test_rank_syntax(self, data_dir, capsys, ranks):
        code, out, _ = run(["rank-study", "--fcidump", str(data_dir / H2), "--ranks", ranks], capsys)
        assert code == 0 and len(read_csv(out)[2]) == 2

    def test_bad_ranks(self, data_dir, capsys):
        assert run(["rank-study", "--fcidump", str(data_dir / H2), "--ranks", "3..1"], capsys)[0] == 2


class TestExactDiag:
    def test_h2(self, data_dir, references, capsys):
        code, out, _ = run(["exactdiag", "--fcidump", str(data_dir / H2)], capsys)
        res = json.loads(out)
        assert code == 0
        assert res["energy"] == pytest.approx(references["h2_sto3g"]["e_fci"], abs=1e-10)
        assert res["sector_dimension"] == 6 and res["d"] == 4

    def test_empty_sector(self, data_dir, capsys):
        res = json.loads(run(["exactdiag", "--fcidump", str(data_dir / H2), "--nelec", "0"], capsys)[1])
        assert res["energy"] == res["e_core"]

    def test_bad_nelec(self, data_dir, capsys):
        assert run(["exactdiag", "--fcidump", str(data_dir / H2), "--nelec", "5"], capsys)[0] == 2

    def test_over_cap(self, data_dir, capsys):
        assert run(["exactdiag", "--fcidump", str(data_dir / "lih_631g.fcidump")], capsys)[0] == 3


class TestSimplexNet:
    SMALL = ["--hidden", "8", "--batch", "40"]

    def test_zero_steps(self, capsys, tmp_path):
        summary = tmp_path / "s.json"
        code, out, _ = run(["simplexnet", "--steps", "0", "--out", str(summary), *self.SMALL], capsys)
        assert code == 0
        _, header, rows = read_csv(out)
        assert header == ["step", "energy", "l2_error", "norm"]
        assert len(rows) == 1
        assert json.loads(summary.read_text())["seeds"] == [0]

    def test_repeat(self, capsys):
        code, out, _ = run(["simplexnet", "--steps", "2", "--repeat", "2", "--seed", "3",
                            "--hidden", "4,4", "--batch", "30"], capsys)
        assert code == 0
        _, header, rows = read_csv(out)
        assert "energy_std" in header and "energy_seed4" in header
        assert len(rows) == 3

    def test_divergence_exit_code(self, capsys):
        code, _, err = run(["simplexnet", "--steps", "5", "--divergence", "1", *self.SMALL], capsys)
        assert code == 4 and "numerical" in err

    @pytest.mark.parametrize("bad", [["--hidden", "0"], ["--hidden", "a"], ["--lr", "-1"], ["--steps", "-2"]])
    def test_usage_errors(self, capsys, bad):
        assert run(["simplexnet", *bad], capsys)[0] == 2


def test_no_subcommand(capsys):
    assert main([]) == 2


def test_module_entry_point(data_dir):
    proc = subprocess.run([sys.executable, "-m", "fockline", "exactdiag", "--fcidump", str(data_dir / H2)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "energy" in json.loads(proc.stdout)
