import re
from pathlib import Path

import pytest

from byzest.cli import build_parser, main
from byzest.configfile import SCHEMA, load_config, parse_document, schema_help
from byzest.errors import ConfigError

CONFIGS = Path(__file__).parent.parent / "configs"


def write_config(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


MINIMAL = """
[model]
dim = 3
n_good = 4

[run]
rounds = 12
b = 1
seed = 5
fault_ids = [4]

[observation]
n_rows = 2
multiplicity = 2

[adversary]
strategy = "extreme_coordinate"
"""


class TestConfigSchema:
    def test_help_documents_every_key(self):
        text = schema_help()
        for section, fields in SCHEMA.items():
            assert f"[{section}]" in text
            for key in fields:
                assert re.search(rf"^\s+{re.escape(key)}:", text, re.M), key

    def test_parser_help_carries_schema(self, capsys):
        parser = build_parser()
        assert "configuration file keys" in parser.format_help()

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_document({"model": {"dim": 3, "n_good": 2, "fancy": 1}})

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_document({"modelling": {}})

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="missing required key"):
            parse_document({"model": {"dim": 3}})

    def test_type_errors(self):
        doc = {
            "model": {"dim": "three", "n_good": 2},
            "run": {"rounds": 5, "b": 0},
            "observation": {"n_rows": 1, "multiplicity": 1},
        }
        with pytest.raises(ConfigError, match="must be an integer"):
            parse_document(doc)

    def test_load_example_configs(self):
        for name in ("complete_small.toml", "flagship_sweep.toml", "ring_noiseless.toml"):
            config, sweep = load_config(CONFIGS / name)
            assert config.rounds >= 1


class TestSimulate:
    def test_basic_run(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINIMAL)
        out = tmp_path / "out"
        code = main(["simulate", "--config", cfg, "--out", str(out)])
        assert code == 0
        csvs = list(out.glob("*.csv"))
        assert len(csvs) == 1
        lines = csvs[0].read_text().strip().split("\n")
        assert len(lines) == 1 + 12 + 1  # header + rounds 0..12
        assert (out / "errors.png").exists()
        assert "seed5" in capsys.readouterr().out

    def test_fault_budget_exceeded_exit_2(self, tmp_path, capsys):
        bad = MINIMAL.replace("fault_ids = [4]", "fault_ids = [4, 5]")
        cfg = write_config(tmp_path, bad)
        code = main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
        assert code == 2
        assert "fault budget exceeded" in capsys.readouterr().err

    def test_seed_override_and_determinism(self, tmp_path):
        cfg = write_config(tmp_path, MINIMAL)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", cfg, "--seed", "9", "--out", str(out1), "--no-plot"]) == 0
        assert main(["simulate", "--config", cfg, "--seed", "9", "--out", str(out2), "--no-plot"]) == 0
        f1 = next(out1.glob("*.csv")).read_bytes()
        f2 = next(out2.glob("*.csv")).read_bytes()
        assert f1 == f2

    def test_refuses_nonempty_dir(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINIMAL)
        out = tmp_path / "out"
        out.mkdir()
        (out / "existing.txt").write_text("data")
        code = main(["simulate", "--config", cfg, "--out", str(out), "--no-plot"])
        assert code == 2
        assert "--force" in capsys.readouterr().err
        code = main(["simulate", "--config", cfg, "--out", str(out), "--no-plot", "--force"])
        assert code == 0


class TestAnalyze:
    def test_flagship_rates(self, capsys):
        code = main(["analyze", "--config", str(CONFIGS / "flagship_sweep.toml")])
        assert code == 0
        out = capsys.readouterr().out
        rho = float(re.search(r"^rho = (.*)$", out, re.M).group(1))
        assert rho == pytest.approx(23.0 / 24.0, abs=1e-12)
        assert "complete_observability_ok = true" in out
        assert re.search(r"^xi = \d+$", out, re.M)

    def test_violating_config_reports_false(self, tmp_path, capsys):
        weak = MINIMAL.replace("multiplicity = 2", "multiplicity = 1")
        cfg = write_config(tmp_path, weak)
        assert main(["analyze", "--config", cfg]) == 0
        out = capsys.readouterr().out
        assert "complete_observability_ok = false" in out


class TestCheckTopology:
    def test_complete_k4(self, tmp_path, capsys):
        graph = tmp_path / "g.txt"
        graph.write_text("complete 4\n")
        assert main(["check-topology", "--graph", str(graph), "--b", "1"]) == 0
        out = capsys.readouterr().out
        assert "consensus_achievable = true" in out
        assert "node_connectivity = 3" in out
        assert "relay_gate_ok = true" in out

    def test_two_cliques(self, tmp_path, capsys):
        lines = ["n 6"]
        for block in (range(3), range(3, 6)):
            for s in block:
                for d in block:
                    if s != d:
                        lines.append(f"{s} {d}")
        graph = tmp_path / "g.txt"
        graph.write_text("\n".join(lines) + "\n")
        assert main(["check-topology", "--graph", str(graph), "--b", "0"]) == 0
        out = capsys.readouterr().out
        assert "consensus_achievable = false" in out

    def test_path_graph_relay_gate(self, tmp_path, capsys):
        graph = tmp_path / "g.txt"
        graph.write_text("n 3\n0 1\n1 0\n1 2\n2 1\n")
        assert main(["check-topology", "--graph", str(graph), "--b", "1"]) == 0
        out = capsys.readouterr().out
        assert "node_connectivity = 1" in out
        assert "relay_gate_ok = false" in out

    def test_census_on_small_graph(self, tmp_path, capsys):
        graph = tmp_path / "g.txt"
        graph.write_text("complete 3\n")
        assert main(["check-topology", "--graph", str(graph), "--b", "1"]) == 0
        out = capsys.readouterr().out
        assert "census fault_set={}" in out

    def test_missing_graph_file_exit_1(self, tmp_path, capsys):
        code = main(["check-topology", "--graph", str(tmp_path / "nope.txt"), "--b", "1"])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestFigureSweep:
    def test_tiny_sweep_outputs(self, tmp_path, capsys):
        out = tmp_path / "fig"
        code = main(
            ["figure1", "--out", str(out), "--seeds", "1", "--rounds", "25", "--jobs", "2"]
        )
        assert code == 0
        csvs = list(out.glob("A*_seed*.csv"))
        assert len(csvs) == 7
        dat = (out / "mean_curves.dat").read_text().strip().split("\n")
        assert dat[0].split() == ["round", "A4", "A5", "A6", "A7", "A8", "A9", "A10"]
        assert len(dat) == 1 + 26
        assert (out / "plot.gp").exists()
        assert (out / "figure1.png").exists()

    def test_refuses_overwrite(self, tmp_path, capsys):
        out = tmp_path / "fig"
        out.mkdir()
        (out / "old.csv").write_text("x")
        code = main(["figure1", "--out", str(out), "--seeds", "1", "--rounds", "5"])
        assert code == 2
