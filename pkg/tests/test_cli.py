import csv
import io
import json
import subprocess
import sys

import jsonschema
import pytest

from mellin_aer.cli import main
from mellin_aer.video import SceneObject, SyntheticSpec, read_cube


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture()
def cubes(tmp_path, capsys):
    """A query and a twice-slower reference written through ``gen``."""
    q, r = tmp_path / "q.mtvc", tmp_path / "r.mtvc"
    assert run(capsys, "gen", "--seed", 5, "--out", q)[0] == 0
    assert run(capsys, "gen", "--seed", 5, "--speed", 2, "--out", r)[0] == 0
    return q, r


@pytest.fixture()
def blob_spec(tmp_path):
    spec = SyntheticSpec(
        width=12, height=10, num_frames=40, noise_sigma=0.05,
        objects=(SceneObject(kind="blob", size=2.0, start=(4.0, 5.0), velocity=(0.3, 0.1)),),
    )
    path = tmp_path / "blob.json"
    path.write_text(json.dumps(spec.to_dict()))
    return path


class TestGen:
    def test_from_spec(self, tmp_path, capsys, blob_spec, schemas):
        code, out, _ = run(capsys, "gen", "--spec", blob_spec, "--seed", 7, "--out", tmp_path / "q.mtvc")
        assert code == 0
        doc = json.loads(out)
        jsonschema.validate(doc, schemas["gen"])
        assert doc["spec"]["seed"] == 7
        assert read_cube(tmp_path / "q.mtvc").shape == (40, 10, 12)

    def test_seed_reproducible(self, tmp_path, capsys, blob_spec):
        for name in ("a.mtvc", "b.mtvc"):
            run(capsys, "gen", "--spec", blob_spec, "--seed", 7, "--out", tmp_path / name)
        run(capsys, "gen", "--spec", blob_spec, "--seed", 8, "--out", tmp_path / "c.mtvc")
        a, b, c = ((tmp_path / n).read_bytes() for n in ("a.mtvc", "b.mtvc", "c.mtvc"))
        assert a == b and a != c

    def test_pgm(self, tmp_path, capsys):
        code, _, _ = run(capsys, "gen", "--seed", 1, "--pgm", "--out", tmp_path / "seq")
        assert code == 0
        assert read_cube(tmp_path / "seq").num_frames == 300

    def test_missing_spec(self, tmp_path, capsys):
        code, _, err = run(capsys, "gen", "--spec", tmp_path / "nope.json", "--out", tmp_path / "q.mtvc")
        assert code == 1 and "nope.json" in err


class TestMatching:
    def test_tsm(self, cubes, capsys, schemas):
        q, r = cubes
        code, out, _ = run(capsys, "tsm", "--query", q, "--ref", r, "--method", "peak", "--threshold", 0.6)
        assert code == 0
        doc = json.loads(out)
        jsonschema.validate(doc, schemas["match_result"])
        assert doc["matched"] and abs(doc["alpha"] - 2) < 0.05

    def test_no_match_exits_zero(self, cubes, capsys, schemas):
        q, _ = cubes
        other = q.parent / "o.mtvc"
        run(capsys, "gen", "--seed", 77, "--out", other)
        code, out, _ = run(capsys, "tsm", "--query", q, "--ref", other, "--threshold", 1.0)
        doc = json.loads(out)
        jsonschema.validate(doc, schemas["match_result"])
        assert code == 0 and doc["matched"] is False

    def test_missing_reference(self, cubes, capsys):
        q, _ = cubes
        code, out, err = run(capsys, "tsm", "--query", q, "--ref", q.parent / "missing.mtvc")
        assert code == 1 and out == ""
        assert "missing.mtvc" in err

    def test_estimate(self, cubes, capsys, schemas, tmp_path):
        q, r = cubes
        dest = tmp_path / "est.json"
        assert run(capsys, "estimate", "--query", q, "--ref", r, "--out", dest)[0] == 0
        doc = json.loads(dest.read_text())
        jsonschema.validate(doc, schemas["scale_estimate"])
        code, out, _ = run(capsys, "estimate", "--query", q, "--ref", r, "--csv")
        row = next(csv.DictReader(io.StringIO(out)))
        assert float(row["alpha"]) == pytest.approx(doc["alpha"])

    def test_xcorr(self, cubes, capsys, schemas):
        q, r = cubes
        for domain in ("tau", "frame"):
            code, out, _ = run(capsys, "xcorr", "--query", q, "--ref", r, "--domain", domain, "--n-tau", 128)
            assert code == 0
            jsonschema.validate(json.loads(out), schemas["xcorr"])
        code, out, _ = run(capsys, "xcorr", "--query", q, "--ref", r, "--csv", "--n-tau", 64)
        rows = list(csv.DictReader(io.StringIO(out)))
        assert len(rows) == 127

    def test_mt(self, cubes, capsys, schemas):
        q, _ = cubes
        code, out, _ = run(capsys, "mt", "--query", q, "--pixel", "3,4", "--n-tau", 64)
        doc = json.loads(out)
        jsonschema.validate(doc, schemas["mt"])
        assert doc["pixel"] == [3, 4] and len(doc["values"]) == 64
        code, out, _ = run(capsys, "mt", "--query", q, "--pixel", "3,4", "--csv")
        assert out.splitlines()[0] == "tau,omega,value" and len(out.splitlines()) == 513
        code, _, err = run(capsys, "mt", "--query", q, "--pixel", "99,0")
        assert code == 1 and "outside" in err

    def test_search(self, cubes, capsys, schemas):
        q, r = cubes
        code, out, _ = run(capsys, "search", "--query", q, "--db", r, "--t2", 400, "--t1", 100)
        doc = json.loads(out)
        jsonschema.validate(doc, schemas["search"])
        assert code == 0
        assert doc["plan"]["segments"] == [[0, 400], [300, 600]]

    def test_calibrate(self, tmp_path, capsys, schemas):
        scores = tmp_path / "scores.json"
        scores.write_text(json.dumps({"matched": [0.9, 0.8], "unmatched": [0.1, 0.85]}))
        code, out, _ = run(capsys, "calibrate", "--scores", scores, "--policy", "min-fn")
        doc = json.loads(out)
        jsonschema.validate(doc, schemas["calibrate"])
        assert doc["threshold"] == 0.8 and doc["false_positive_rate"] == 50.0
        bad = tmp_path / "bad.json"
        bad.write_text("[1, 2]")
        assert run(capsys, "calibrate", "--scores", bad)[0] == 1


class TestBench:
    def test_sweep(self, capsys, schemas, tmp_path):
        code, out, _ = run(capsys, "bench-sweep", "--clips", 2, "--frames", 80, "--speeds", "0.5,2", "--seed", 3)
        assert code == 0
        doc = json.loads(out)
        jsonschema.validate(doc, schemas["bench_report"])
        assert doc["kind"] == "sweep" and len(doc["records"]) == 8
        code, out2, _ = run(capsys, "bench-sweep", "--clips", 2, "--frames", 80, "--speeds", "0.5,2", "--seed", 3)
        assert out2 == out

    def test_detect_csv(self, capsys, schemas, tmp_path):
        code, _, _ = run(
            capsys, "bench-detect", "--clips", 2, "--frames", 60, "--speeds", "1,2", "--csv", "--out", tmp_path / "d"
        )
        assert code == 0
        jsonschema.validate(json.loads((tmp_path / "d" / "detection.json").read_text()), schemas["bench_report"])
        rows = list(csv.DictReader(open(tmp_path / "d" / "score_distributions.csv")))
        assert len(rows) == 2 * 4 * 2

    def test_detect_report_feeds_calibrate(self, capsys, schemas, tmp_path):
        report = tmp_path / "det.json"
        run(capsys, "bench-detect", "--clips", 2, "--frames", 60, "--speeds", "1", "--out", report)
        code, out, _ = run(capsys, "calibrate", "--scores", report)
        assert code == 0
        jsonschema.validate(json.loads(out), schemas["calibrate"])

    def test_localize(self, capsys, schemas):
        code, out, _ = run(
            capsys, "bench-localize", "--clips", 1, "--frames", 60, "--speeds", "1,2",
            "--placements", 2, "--total-frames", 300,
        )
        doc = json.loads(out)
        jsonschema.validate(doc, schemas["bench_report"])
        assert code == 0 and doc["metrics"]["trials"] == 4


class TestUsage:
    @pytest.mark.parametrize(
        "argv,flag",
        [
            (["tsm", "--query", "q.mtvc", "--ref", "r.mtvc", "--bogus"], "--bogus"),
            (["tsm", "--query", "q.mtvc", "--ref", "r.mtvc", "--method", "mean"], "--method"),
            (["tsm", "--query", "q.mtvc", "--ref", "r.mtvc", "--threshold", "2"], "--threshold"),
            (["tsm", "--query", "q.mtvc"], "--ref"),
            (["mt", "--query", "q.mtvc", "--pixel", "a,b"], "--pixel"),
            (["bench-sweep", "--speeds", "0,1"], "--speeds"),
            (["calibrate", "--scores", "s.json", "--policy", "median"], "--policy"),
        ],
    )
    def test_usage_errors(self, capsys, argv, flag):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2
        assert flag in capsys.readouterr().err

    def test_console_script(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "mellin_aer.cli", "tsm", "--query", str(tmp_path / "x.mtvc"), "--ref", "y"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 1 and "x.mtvc" in proc.stderr
