import csv
import hashlib
import json

import pytest

from fracplap.cli import main
from fracplap.config import ConfigError, RunConfig, parse_config

BASE = """
[domain]
N = {N}

[problem]
s = {s}
p = {p}
f = "-t^3"
g = "{g}"

[continuation]
max_steps = {steps}

[run]
samples = 40
"""


def write_config(tmp_path, name="run.ini", N=32, s="0.5", p=2, g="psi(t, 2)*(2 + 28*t^2/(1 + t^2))", steps=20, extra=""):
    path = tmp_path / name
    path.write_text(BASE.format(N=N, s=s, p=p, g=g, steps=steps) + extra)
    return str(path)


def run_cli(tmp_path, command, cfg, *flags, out="out"):
    out_dir = tmp_path / out
    code = main([command, "--config", cfg, "--out", str(out_dir), *flags])
    return code, out_dir


def manifest(out_dir):
    return json.loads((out_dir / "manifest.json").read_text())


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg == RunConfig()

    def test_full(self):
        cfg = parse_config(
            """
            [domain]
            a = -1   ; inline comment
            b = 2
            N = 48
            [problem]
            s = 0.3, 0.5, 1.0
            p = 3
            K = auto
            h = "1 + x^2"
            [solver]
            grad_tol = 1e-10
            [continuation]
            ds = 0.1
            direction = -1
            [run]
            seed = 9
            """
        )
        assert (cfg.a, cfg.b, cfg.N, cfg.s, cfg.p, cfg.K) == (-1.0, 2.0, 48, (0.3, 0.5, 1.0), 3.0, None)
        assert cfg.h == "1 + x^2"
        assert cfg.solver.grad_tol == 1e-10
        assert cfg.continuation.ds == 0.1 and cfg.direction == -1
        assert cfg.seed == 9

    @pytest.mark.parametrize(
        "text",
        [
            "[domain]\nN = 1\n",
            "[domain]\na = 2\nb = 1\n",
            "[problem]\ns = 0\n",
            "[problem]\ns = 1.5\n",
            "[problem]\np = 1\n",
            "[problem]\nK = -1\n",
            "[problem]\nf = \"2*t - \"\n",
            "[problem]\nbogus = 1\n",
            "[nowhere]\nx = 1\n",
            "[solver]\nmax_iter = lots\n",
            "[continuation]\ndirection = 0\n",
            "no section header",
        ],
    )
    def test_rejections(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_expression_position_reported(self):
        with pytest.raises(ConfigError, match="position 7"):
            parse_config('[problem]\nf = "2*t - "\n')

    def test_echo_is_json(self):
        json.dumps(RunConfig().echo(), default=str)


class TestCommands:
    @pytest.mark.parametrize("command", ["assemble", "dirichlet", "eigen", "sweep-s", "branch", "apply", "check"])
    def test_success_with_verify(self, tmp_path, command):
        cfg = write_config(tmp_path, s="0.75")
        code, out = run_cli(tmp_path, command, cfg, "--verify")
        assert code == 0
        m = manifest(out)
        assert m["exit_code"] == 0 and m["command"] == command
        assert m["outputs"]
        for entry in m["outputs"]:
            data = (out / entry["file"]).read_bytes()
            assert hashlib.sha256(data).hexdigest() == entry["sha256"]
            assert len(data) == entry["bytes"]

    def test_eigen_csv_contents(self, tmp_path):
        cfg = write_config(tmp_path)
        code, out = run_cli(tmp_path, "eigen", cfg, "--verify", "--full-spectrum")
        assert code == 0
        with open(out / "eigen.csv") as fh:
            row = next(csv.DictReader(fh))
        assert float(row["oracle_rel_error"]) <= 1e-8
        assert row["positive"] == "1"
        with open(out / "spectrum.csv") as fh:
            lams = [float(r["lambda"]) for r in csv.DictReader(fh)]
        assert lams == sorted(lams) and len(lams) == 10

    def test_branch_csv(self, tmp_path):
        cfg = write_config(tmp_path, steps=10)
        code, out = run_cli(tmp_path, "branch", cfg)
        assert code == 0
        with open(out / "branch.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == ["step", "lambda", "amplitude", "residual", "sign_class"]
        assert len(rows) == 11
        with open(out / "branch_u.csv") as fh:
            assert len(list(csv.reader(fh))) == 12

    def test_malformed_expression(self, tmp_path):
        cfg = tmp_path / "bad.ini"
        cfg.write_text('[problem]\nf = "2*t - "\n')
        assert main(["branch", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_missing_config(self, tmp_path):
        assert main(["eigen", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "o")]) == 2

    def test_crossing_rejected(self, tmp_path):
        cfg = write_config(tmp_path, g="psi(t, 2)*(2 + 3*t^2/(1 + t^2))")
        code, out = run_cli(tmp_path, "apply", cfg)
        assert code == 2
        assert "A2" in manifest(out)["message"] or "not above" in manifest(out)["message"]

    def test_full_spectrum_needs_p2(self, tmp_path):
        cfg = write_config(tmp_path, p=3)
        code, _ = run_cli(tmp_path, "eigen", cfg, "--full-spectrum")
        assert code == 2

    def test_solver_failure(self, tmp_path):
        cfg = write_config(tmp_path, p=3, extra="\n[solver]\neig_max_iter = 1\n")
        code, out = run_cli(tmp_path, "eigen", cfg)
        assert code == 3
        assert manifest(out)["exit_code"] == 3

    def test_injected_normalisation_caught(self, tmp_path):
        cfg = write_config(tmp_path)
        code, out = run_cli(tmp_path, "check", cfg, "--inject-bbm-scale", "2")
        assert code == 4
        with open(out / "check.csv") as fh:
            failed = {r["property"] for r in csv.DictReader(fh) if r["pass"] == "0"}
        assert "bbm_consistency_s=0.999" in failed

    def test_manifest_strict_json(self, tmp_path):
        cfg = write_config(tmp_path)
        _, out = run_cli(tmp_path, "branch", cfg)
        text = (out / "manifest.json").read_text()
        json.loads(text, parse_constant=lambda c: pytest.fail(f"non-strict constant {c}"))


class TestDeterminism:
    @pytest.mark.parametrize("command", ["eigen", "branch", "sweep-s"])
    def test_threads(self, tmp_path, command):
        cfg = write_config(tmp_path, s="0.3, 0.6", p=2)
        outs = []
        for k, threads in enumerate(("1", "4", "1")):
            code, out = run_cli(tmp_path, command, cfg, "--threads", threads, out=f"o{k}")
            assert code == 0
            outs.append(out)
        for name in sorted(p.name for p in outs[0].glob("*.csv")):
            data = [(o / name).read_bytes() for o in outs]
            assert data[0] == data[1] == data[2], name
