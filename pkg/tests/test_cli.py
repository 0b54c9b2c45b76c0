import json
import math

import numpy as np
import pytest

from obstra.cli import build_parser, main
from obstra.detector import build_obstacle
from obstra.geo import GroundTruthRegion, export_geojson, save_truth
from obstra.model import SubTrajectory

ORIGIN = (1.3, 103.8)


def corpus_csv(path, tracks=3, points=20, prefix="trk"):
    lines = ["track_id,timestamp,lat,lon"]
    for i in range(tracks):
        lat = 1.30 + 0.002 * i
        for j in range(points):
            lines.append(f"{prefix}{i},{j * 60},"
                         f"{lat + 0.0001 * math.sin(j + i)},"
                         f"{103.8 + 0.001 * j}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def outputs(capsys):
    captured = capsys.readouterr()
    parsed = {}
    for line in captured.out.splitlines():
        key, _, rest = line.partition(" ")
        parsed[key] = rest
    return parsed, captured.err


class TestSynth:
    def test_deterministic_bytes(self, tmp_path, capsys):
        args = ["synth", "--n-reference", "10", "--n-query", "10",
                "--seed", "5"]
        assert main(args + ["-o", str(tmp_path / "a")]) == 0
        assert main(args + ["-o", str(tmp_path / "b")]) == 0
        for name in ("ref.csv", "query.csv", "truth.geojson",
                     "scenario.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                   (tmp_path / "b" / name).read_bytes()
        out, _ = outputs(capsys)
        assert out["reference"] == "10"
        assert out["query"] == "10"
        assert out["truth_vertices"] == "32"
        assert out["scenario_file"].endswith("scenario.json")

    def test_bad_geometry_exit_2(self, tmp_path, capsys):
        code = main(["synth", "-o", str(tmp_path), "--n-reference", "3"])
        assert code == 2
        assert "error:" in capsys.readouterr().err


class TestIndex:
    def test_reports_counts_and_writes_file(self, tmp_path, capsys):
        csv_path = corpus_csv(tmp_path / "ref.csv")
        idx = tmp_path / "ref.idx"
        assert main(["index", csv_path, "-o", str(idx)]) == 0
        out, err = outputs(capsys)
        assert out["params"] == "w=6 s=1 k=8"
        assert out["trajectories"] == "3"
        assert out["windows"] == "45"  # 3 tracks x (20 - 6 + 1)
        assert out["index"] == str(idx)
        assert "build_time_s" in err
        assert idx.stat().st_size > 0

    def test_missing_csv_exit_2(self, tmp_path, capsys):
        code = main(["index", str(tmp_path / "nope.csv"),
                     "-o", str(tmp_path / "x.idx")])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_window_flag_changes_partitioning(self, tmp_path, capsys):
        csv_path = corpus_csv(tmp_path / "ref.csv")
        assert main(["index", csv_path, "-o", str(tmp_path / "w4.idx"),
                     "--window", "4"]) == 0
        out, _ = outputs(capsys)
        assert out["params"].startswith("w=4")
        assert out["windows"] == "51"


class TestConfig:
    def test_config_file_sets_defaults(self, tmp_path, capsys):
        csv_path = corpus_csv(tmp_path / "ref.csv")
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"window": 8}), encoding="utf-8")
        assert main(["index", csv_path, "-o", str(tmp_path / "a.idx"),
                     "--config", str(cfg)]) == 0
        out, _ = outputs(capsys)
        assert out["params"].startswith("w=8")
        assert out["windows"] == "39"

    def test_flag_beats_config(self, tmp_path, capsys):
        csv_path = corpus_csv(tmp_path / "ref.csv")
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"window": 8}), encoding="utf-8")
        assert main(["index", csv_path, "-o", str(tmp_path / "a.idx"),
                     "--config", str(cfg), "--window", "4"]) == 0
        out, _ = outputs(capsys)
        assert out["params"].startswith("w=4")
        assert out["windows"] == "51"

    def test_non_object_config_exit_2(self, tmp_path, capsys):
        csv_path = corpus_csv(tmp_path / "ref.csv")
        cfg = tmp_path / "cfg.json"
        cfg.write_text("[1,2]", encoding="utf-8")
        assert main(["index", csv_path, "-o", str(tmp_path / "a.idx"),
                     "--config", str(cfg)]) == 2
        assert "config must be a JSON object" in capsys.readouterr().err

    def test_malformed_json_config_exit_2(self, tmp_path, capsys):
        csv_path = corpus_csv(tmp_path / "ref.csv")
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{nope", encoding="utf-8")
        assert main(["index", csv_path, "-o", str(tmp_path / "a.idx"),
                     "--config", str(cfg)]) == 2


class TestDetect:
    def test_identical_corpora_find_nothing(self, tmp_path, capsys):
        ref_csv = corpus_csv(tmp_path / "ref.csv")
        alt_csv = tmp_path / "alt.csv"
        alt_csv.write_text(
            (tmp_path / "ref.csv").read_text().replace("trk", "alt"),
            encoding="utf-8")
        idx = str(tmp_path / "ref.idx")
        assert main(["index", ref_csv, "-o", idx]) == 0
        capsys.readouterr()
        assert main(["detect", idx, str(alt_csv)]) == 0
        out, err = outputs(capsys)
        assert out["obstacles"] == "0"
        assert out["candidates"] == "0"
        assert "query_time_s" in err

    def test_corrupt_index_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.idx"
        bad.write_bytes(b"not an index")
        csv_path = corpus_csv(tmp_path / "q.csv")
        assert main(["detect", str(bad), csv_path]) == 2
        assert "error:" in capsys.readouterr().err

    def test_planted_flow_end_to_end(self, tmp_path, planted_dir, capsys):
        det = str(tmp_path / "det.geojson")
        assert main(["detect", planted_dir["index"], planted_dir["query"],
                     "-o", det]) == 0
        out, _ = outputs(capsys)
        assert out["obstacles"] == "1"
        assert int(out["candidates"]) > 0
        assert out["detections"] == det
        assert main(["eval", det, planted_dir["truth"]]) == 0
        out, _ = outputs(capsys)
        assert out["precision"] == "100.0"
        assert out["recall"] == "100.0"
        assert out["f1"] == "100.0"


def fake_detections(path):
    def window(tid, x, y, heading):
        first = (x - heading[0], y - heading[1])
        return SubTrajectory(tid, 0, 0, np.array([first, (x, y)], float))

    inside = build_obstacle([window("a", 40.0, 0.0, (-1.0, 0.0))])
    far = build_obstacle([window("b", 5000.0, 5000.0, (1.0, 0.0))])
    from types import SimpleNamespace
    export_geojson(SimpleNamespace(obstacles=[inside, far]), path, ORIGIN)


class TestEval:
    def test_partial_match_formatting(self, tmp_path, capsys):
        ang = 2 * math.pi * np.arange(16) / 16
        truth = GroundTruthRegion(
            [(50 * math.cos(a), 50 * math.sin(a)) for a in ang])
        truth_path = tmp_path / "truth.geojson"
        save_truth([truth], truth_path, ORIGIN)
        det_path = tmp_path / "det.geojson"
        fake_detections(det_path)
        assert main(["eval", str(det_path), str(truth_path)]) == 0
        out, _ = outputs(capsys)
        assert out["precision"] == "50.0"
        assert out["recall"] == "100.0"
        assert out["f1"] == "66.7"

    def test_missing_truth_exit_2(self, tmp_path, capsys):
        det_path = tmp_path / "det.geojson"
        fake_detections(det_path)
        assert main(["eval", str(det_path),
                     str(tmp_path / "missing.geojson")]) == 2


class TestSweep:
    def test_grid_rows_in_order(self, tmp_path, planted_dir, capsys):
        out_csv = tmp_path / "sweep.csv"
        assert main(["sweep", planted_dir["index"], planted_dir["query"],
                     planted_dir["truth"], "--tau-grid", "1.282,1.645",
                     "--delta-grid", "1.0,2.0", "-o", str(out_csv)]) == 0
        lines = out_csv.read_text().splitlines()
        assert lines[0] == "delta,tau,precision,recall,f1,query_time_s"
        rows = [line.split(",") for line in lines[1:]]
        assert [(r[0], r[1]) for r in rows] == \
               [("1", "1.282"), ("1", "1.645"), ("2", "1.282"),
                ("2", "1.645")]
        for r in rows:
            assert len(r) == 6
            float(r[2]), float(r[3]), float(r[4]), float(r[5])

    def test_stdout_when_no_output_given(self, tmp_path, planted_dir,
                                          capsys):
        assert main(["sweep", planted_dir["index"], planted_dir["query"],
                     planted_dir["truth"], "--tau-grid", "2.576",
                     "--delta-grid", "4.0"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "delta,tau,precision,recall,f1,query_time_s"
        assert len(out) == 2

    def test_bad_grid_exit_2(self, planted_dir, capsys):
        assert main(["sweep", planted_dir["index"], planted_dir["query"],
                     planted_dir["truth"], "--tau-grid", "abc"]) == 2
        assert "bad grid" in capsys.readouterr().err


class TestParser:
    def test_subcommand_required(self, capsys):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_all_subcommands_present(self):
        parser = build_parser()
        subactions = [a for a in parser._actions
                      if isinstance(a, type(parser._subparsers
                                            ._group_actions[0]))]
        names = set(subactions[0].choices)
        assert names == {"index", "detect", "eval", "synth", "sweep"}
