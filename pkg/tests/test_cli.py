import json
import math
import os

import pytest

from logvlasov.cli import OUTPUT_ENV, check_manifest, execute, main, run_id
from logvlasov.config import RunConfig, parse_config, render_config
from logvlasov.errors import ConfigError


class TestConfig:
    def test_empty_is_default(self):
        cfg = parse_config("")
        assert cfg == RunConfig()
        assert cfg.a == pytest.approx(math.exp(0.125))
        assert cfg.params.big_a == 8 and cfg.t0 == 32.0 and cfg.delta == 0.5 and cfg.seed == 0

    def test_base_too_small(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("[potential]\na = 1.5\n")
        assert exc.value.key == "potential.a" and "2" in str(exc.value)

    def test_t0_too_small(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("[diagnostics]\nt0 = 16\n")
        assert exc.value.key == "diagnostics.t0"

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("[run]\nseeds = 3\n")
        assert exc.value.key == "run.seeds"
        with pytest.raises(ConfigError) as exc:
            parse_config("[output]\nx = 1\n")
        assert exc.value.key == "output"

    def test_type_mismatch_named(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("[run]\nn_particles = many\n")
        assert exc.value.key == "run.n_particles"

    def test_a_and_ln_a(self):
        assert parse_config("[potential]\na = 1.1\n").ln_a == pytest.approx(math.log(1.1))
        with pytest.raises(ConfigError):
            parse_config("[potential]\na = 1.1\nln_a = 0.1\n")

    def test_round_trip(self):
        cfg = RunConfig(experiment="decay", seed=12345678901234, ln_a=0.1, t0=48.0, theta=0.1, n_x3=10)
        assert parse_config(render_config(cfg)) == cfg

    def test_thread_count_not_in_run_id(self):
        assert run_id(RunConfig(threads=1)) == run_id(RunConfig(threads=32))
        assert run_id(RunConfig(seed=1)) != run_id(RunConfig(seed=2))


def write_cfg(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    d = tmp_path / "out"
    monkeypatch.setenv(OUTPUT_ENV, str(d))
    return d


class TestRun:
    def test_flow_smoke(self, tmp_path, outdir):
        assert main(["run", write_cfg(tmp_path, "[run]\nexperiment = flow\n")]) == 0
        man = [f for f in os.listdir(outdir) if f.startswith("manifest_")]
        assert len(man) == 1
        m = json.loads((outdir / man[0]).read_text())
        assert m["pass"] and all(m["verdicts"].values())
        assert any(o["file"].startswith("flow_flow_check_") for o in m["outputs"])
        for o in m["outputs"]:
            assert m["run_id"] in o["file"]
            assert (outdir / o["file"]).read_text().splitlines()[0].count(",") >= 1

    def test_byte_identical_rerun(self, tmp_path):
        cfg = parse_config("[run]\nexperiment = survival\n[diagnostics]\nn_chains = 20000\n")
        a = execute(cfg, str(tmp_path / "a"))
        b = execute(cfg, str(tmp_path / "b"))
        for oa, ob in zip(a["outputs"], b["outputs"]):
            assert (tmp_path / "a" / oa["file"]).read_bytes() == (tmp_path / "b" / ob["file"]).read_bytes()

    def test_replay_and_check(self, tmp_path, outdir):
        assert main(["run", write_cfg(tmp_path, "[run]\nexperiment = flow\nseed = 4\n")]) == 0
        man = str(outdir / next(f for f in os.listdir(outdir) if f.startswith("manifest_")))
        assert main(["check", man]) == 0
        assert main(["replay", man]) == 0
        m = json.loads(open(man).read())
        with open(outdir / m["outputs"][0]["file"], "a") as fh:
            fh.write("tampered\n")
        assert main(["check", man]) == 1
        assert check_manifest(man)[0].endswith("checksum mismatch")

    def test_env_overrides_out(self, tmp_path, outdir):
        other = tmp_path / "ignored"
        assert main(["run", write_cfg(tmp_path, ""), "--out", str(other)]) == 0
        assert outdir.exists() and not other.exists()

    def test_out_flag(self, tmp_path, monkeypatch):
        monkeypatch.delenv(OUTPUT_ENV, raising=False)
        target = tmp_path / "flag"
        assert main(["run", write_cfg(tmp_path, ""), "--out", str(target)]) == 0
        assert any(f.startswith("manifest_") for f in os.listdir(target))

    def test_failing_verdict_exits_one(self, tmp_path, outdir):
        # a tiny decay run cannot resolve the decay, so its verdicts fail
        text = "[run]\nexperiment = decay\nn_particles = 2000\n[diagnostics]\nn_boot = 4\n"
        assert main(["run", write_cfg(tmp_path, text)]) == 1
        man = next(f for f in os.listdir(outdir) if f.startswith("manifest_"))
        m = json.loads((outdir / man).read_text())
        norms = next(o["file"] for o in m["outputs"] if o["file"].startswith("decay_norms_"))
        lines = (outdir / norms).read_text().splitlines()
        assert lines[0] == "t,l1,l1_se,moment_theta,moment_se" and len(lines) - 1 >= 6
        fit = next(o["file"] for o in m["outputs"] if o["file"].startswith("decay_fit_"))
        assert len((outdir / fit).read_text().splitlines()) >= 2

    def test_usage_errors(self, tmp_path, outdir, capsys):
        assert main(["run", str(tmp_path / "missing.ini")]) == 2
        assert main(["run", write_cfg(tmp_path, "[potential]\na = 1.5\n")]) == 2
        assert "potential.a" in capsys.readouterr().err
        assert main(["check", write_cfg(tmp_path, "{not json", "bad.json")]) == 2
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2
