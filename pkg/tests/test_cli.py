import json
import re

import pytest

from physarum.cli import main
from physarum.fileio import parse_flow_instance


def read_json(path):
    return json.loads(path.read_text())


def strip_wall_time(text):
    return re.sub(r'"wall_time_seconds": [^,]*,', "", text)


class TestGen:
    def test_random_writes_parseable_instance(self, tmp_path):
        out = tmp_path / "g.dimacs"
        assert main(["gen", "--kind", "random", "--seed", "3", "--n", "20", "--out", str(out)]) == 0
        inst = parse_flow_instance(out.read_text())
        assert inst.graph.node_count == 20

    def test_threepath(self, tmp_path):
        out = tmp_path / "three.dimacs"
        assert main(["gen", "--kind", "threepath", "--out", str(out), "--seed", "0"]) == 0
        inst = parse_flow_instance(out.read_text())
        assert inst.graph.arc_count == 6

    def test_hearn_writes_network_and_demands(self, tmp_path):
        out = tmp_path / "hearn.net"
        assert main(["gen", "--kind", "hearn", "--out", str(out), "--seed", "0"]) == 0
        assert out.exists()
        assert (tmp_path / "hearn.net.demands").exists()

    def test_grid(self, tmp_path):
        out = tmp_path / "grid.dimacs"
        code = main(["gen", "--kind", "grid", "--width", "2", "--depth", "2",
                     "--seed", "1", "--out", str(out)])
        assert code == 0
        assert parse_flow_instance(out.read_text()).graph.node_count == 8


class TestMaxflow:
    def test_gen_run_with_oracle(self, tmp_path):
        out = tmp_path / "mf.json"
        code = main(["maxflow", "--gen", "n=20,seed=5,p=0.7", "--oracle", "--out", str(out)])
        assert code == 0
        report = read_json(out)
        assert report["kind"] == "maxflow"
        assert report["results"]["gap"] < 0.5
        assert report["results"]["converged"] is True
        assert (tmp_path / "mf.json.trace.csv").exists()
        assert (tmp_path / "mf.json.summary.csv").exists()

    def test_input_file_run(self, tmp_path):
        inst = tmp_path / "tiny.dimacs"
        inst.write_text("p max 2 1\nn 1 s\nn 2 t\na 1 2 5\n")
        out = tmp_path / "r.json"
        assert main(["maxflow", "--input", str(inst), "--out", str(out)]) == 0
        assert read_json(out)["results"]["max_flow_rounded"] == 5

    def test_deterministic_reports(self, tmp_path):
        dir_a, dir_b = tmp_path / "a", tmp_path / "b"
        dir_a.mkdir(), dir_b.mkdir()
        a, b = dir_a / "r.json", dir_b / "r.json"
        argv = ["maxflow", "--gen", "n=20,seed=5,p=0.7", "--oracle"]
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        assert strip_wall_time(a.read_text()) == strip_wall_time(b.read_text())
        assert (dir_a / "r.json.trace.csv").read_text() == (
            dir_b / "r.json.trace.csv"
        ).read_text()

    def test_parse_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.dimacs"
        bad.write_text("a 1 2 5\n")
        assert main(["maxflow", "--input", str(bad)]) == 2

    def test_missing_instance_flags(self):
        assert main(["maxflow"]) == 2

    def test_not_converged_exit_code(self, tmp_path):
        out = tmp_path / "nc.json"
        code = main(["maxflow", "--gen", "n=20,seed=5,p=0.7", "--k", "1.0",
                     "--max-iters", "300", "--out", str(out)])
        assert code == 3
        assert out.exists()  # report still written
        assert read_json(out)["results"]["converged"] is False


class TestMcmf:
    def test_single_run(self, tmp_path):
        out = tmp_path / "m.json"
        code = main(["mcmf", "--gen", "n=16,seed=11,p=0.6", "--oracle",
                     "--epsilon", "1e-6", "--out", str(out)])
        assert code == 0
        report = read_json(out)
        assert report["results"]["gap"] == 0 or report["results"]["gap"] < 0.5
        assert report["results"]["min_cost_error"] <= 1.0

    def test_epsilon_sweep(self, tmp_path):
        out = tmp_path / "sweep.json"
        code = main(["mcmf", "--gen", "n=16,seed=11,p=0.6", "--oracle",
                     "--epsilon-sweep", "5e-3,1e-4", "--out", str(out)])
        assert code == 0
        rows = read_json(out)["results"]["sweep"]
        assert [row["epsilon"] for row in rows] == [5e-3, 1e-4]
        assert all("min_cost_error" in row for row in rows)


class TestCtap:
    def test_hearn_short_run_writes_links(self, tmp_path):
        net_out = tmp_path / "hearn.net"
        main(["gen", "--kind", "hearn", "--out", str(net_out), "--seed", "0"])
        out = tmp_path / "ctap.json"
        code = main([
            "ctap", "--network", str(net_out), "--demands", str(net_out) + ".demands",
            "--max-iters", "60", "--out", str(out),
        ])
        assert code == 3  # not converged in 60 iterations
        report = read_json(out)
        links = report["results"]["links"]
        assert len(links) == 18
        assert {"link", "capacity", "flow", "rel_excess"} <= set(links[0])
        assert (tmp_path / "ctap.json.trace.csv").read_text().startswith(
            "iteration,l1_change,max_rel_excess,rgap"
        )

    def test_uncapacitated_flag(self, tmp_path):
        net_out = tmp_path / "hearn.net"
        main(["gen", "--kind", "hearn", "--out", str(net_out), "--seed", "0"])
        out = tmp_path / "u.json"
        code = main([
            "ctap", "--network", str(net_out), "--demands", str(net_out) + ".demands",
            "--uncapacitated", "--out", str(out),
        ])
        assert code == 0
        report = read_json(out)
        assert report["config"]["capacitated"] is False
        assert report["results"]["rgap"] <= 1e-4
        assert report["violations"]["max_rel_excess"] >= 0.10


class TestBench:
    def test_mf_suite_persists_instances(self, tmp_path):
        out_dir = tmp_path / "bench"
        code = main(["bench", "--suite", "mf", "--sizes", "12,16", "--repeats", "2",
                     "--seed", "4", "--out", str(out_dir)])
        assert code == 0
        summary = read_json(out_dir / "summary.json")
        assert len(summary["rows"]) == 2
        for row in summary["rows"]:
            assert (out_dir / row["instance"]).exists()
            assert row["gap"] < 0.5
        assert (out_dir / "summary.csv").exists()
