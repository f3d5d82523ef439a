import csv
import io

from spatialtac import codegen
from spatialtac.cli import main


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


def test_list():
    code, text = run("list")
    assert code == 0 and len(text.splitlines()) == 10


def test_compile_sddmm(tmp_path):
    code, _ = run("compile", "sddmm", "--out", str(tmp_path), "--dump-ir", "--dump-memory-plan")
    assert code == 0
    text = (tmp_path / "sddmm.spatial.txt").read_text()
    assert codegen.structural_check(text, codegen.sddmm_expectations()).passed
    assert (tmp_path / "sddmm.ir.json").exists() and (tmp_path / "sddmm.plan.json").exists()


def test_compile_dump_cin(tmp_path):
    code, text = run("compile", "spmv", "--out", str(tmp_path), "--dump-cin")
    assert code == 0
    assert "-- to_cin" in text and "-- precompute(" in text and "-- accelerate(" in text


def test_unknown_kernel(capsys):
    code, _ = run("compile", "unknown")
    assert code == 2 and "unknown kernel" in capsys.readouterr().err


def test_verify_driver_file(tmp_path, capsys):
    f = tmp_path / "vecadd.tac"
    f.write_text("format a: C\nformat b: C\nformat c: C\na(i) = b(i) + c(i)\n")
    code, text = run("verify", str(f), "--dims", "256", "--density", "0.2")
    assert code == 0 and text.startswith("vecadd: PASS")
    assert run("verify", str(tmp_path / "missing.tac"))[0] == 2
    assert "cannot read" in capsys.readouterr().err


def test_usage_errors(capsys):
    assert run()[0] == 2
    assert run("verify", "spmv", "--density", "2")[0] == 2
    assert run("verify", "spmv", "--dims", "axb")[0] == 2
    assert run("frobnicate")[0] == 2


def test_verify_ttv():
    code, text = run("verify", "ttv", "--dims", "12x12x12", "--density", "0.5")
    assert code == 0 and "PASS" in text and "scan_words_processed" in text


def test_verify_stats_json():
    code, text = run("verify", "spmv", "--dims", "16", "--density", "0.2", "--stats")
    assert code == 0 and '"dram_loads"' in text


def test_verify_matrix_market(tmp_path):
    f = tmp_path / "m.mtx"
    f.write_text("%%MatrixMarket matrix coordinate real general\n5 7 3\n1 1 2.0\n3 5 1.5\n"
                 "5 7 4\n")
    code, text = run("verify", "spmv", "--mm", str(f))
    assert code == 0, text


def test_verify_bad_dataset(tmp_path, capsys):
    f = tmp_path / "bad.mtx"
    f.write_text("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 q 2\n")
    assert run("verify", "spmv", "--mm", str(f))[0] == 1
    assert "line 3" in capsys.readouterr().err


def test_verify_host_reference():
    code, text = run("verify", "sddmm", "--host", "--dims", "8")
    assert code == 0 and "host reference" in text


def test_bench_csv():
    code, text = run("bench", "--density", "0.1", "--dims", "10")
    rows = list(csv.DictReader(io.StringIO(text)))
    assert code == 0 and len(rows) == 10
    assert all(r["passed"] == "True" for r in rows)


def test_bench_word_size():
    def words(w):
        _, text = run("bench", "plus2", "--dims", "64", "--density", "0.1", "--word-size", w)
        return int(next(csv.DictReader(io.StringIO(text)))["scan_words_processed"])
    assert words("16") == 2 * words("32")
