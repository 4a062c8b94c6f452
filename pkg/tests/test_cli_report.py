from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from importlib.resources import files

import jsonschema
import pytest

from ergo.cli import main
from ergo.errors import ValidationError
from ergo.experiments import descent_plot, kendall_tau, ranking
from ergo.report import RunManifest, canonical_json, config_hash, file_digest, write_json
from ergo.svg import HLine, LinePlot, Series


def schema(name: str) -> dict:
    return json.loads((files("ergo") / "schemas" / f"{name}.json").read_text())


def check(path, name: str) -> dict:
    doc = json.loads(path.read_text())
    jsonschema.validate(doc, schema(name))
    return doc


def svg_ok(path) -> ET.Element:
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")
    return root


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert main(["gen", "--demo", "--samples", "4", "--out", str(d)]) == 0
    return d


def run(corpus_dir, out, *argv) -> int:
    return main([*argv, "--corpus", str(corpus_dir), "--event-cap", "50", "--out", str(out)])


# ---------------------------------------------------------------- gen

def test_gen_outputs_and_schema(corpus_dir):
    idx = check(corpus_dir / "corpus.json", "corpus")
    assert len(idx["windows"]) == 4 and (corpus_dir / idx["events"]).exists()
    m = check(corpus_dir / "manifest.json", "manifest")
    assert m["command"] == "gen" and m["seeds"]["scene"] == 0


def test_gen_rerun_is_byte_identical(tmp_path, corpus_dir):
    main(["gen", "--demo", "--samples", "4", "--out", str(tmp_path)])
    for name in ("corpus.json", "events.evb"):
        assert (tmp_path / name).read_bytes() == (corpus_dir / name).read_bytes()


def test_gen_csv_and_custom_scene(tmp_path):
    rc = main(["gen", "--pattern", "translating-edge", "--width", "8", "--height", "2",
               "--duration", "1", "--speed", "8", "--samples", "2", "--format", "csv",
               "--out", str(tmp_path)])
    assert rc == 0 and (tmp_path / "events.csv").exists()


@pytest.mark.parametrize("argv", [["--samples", "0"], ["--width", "0"], ["--pattern", "spiral"]])
def test_gen_invalid(tmp_path, argv):
    assert main(["gen", *argv, "--out", str(tmp_path)]) == 1


# ---------------------------------------------------------------- gwd

def test_gwd_report(tmp_path, corpus_dir, capsys):
    assert run(corpus_dir, tmp_path, "gwd", "--repr", "voxel12") == 0
    doc = check(tmp_path / "gwd_report.json", "gwd_report")
    assert doc["n"] == 4 and len(doc["per_sample"]) == 4
    assert doc["mean"] == pytest.approx(sum(s["gwd"] for s in doc["per_sample"]) / 4)
    m = check(tmp_path / "manifest.json", "manifest")
    assert m["outputs"] == ["gwd_report.json"]
    assert m["inputs"]["events_sha256"] == file_digest(corpus_dir / "events.evb")
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["n"] == 4


def test_gwd_spec_file_matches_preset(tmp_path, corpus_dir):
    # one whole-sample polarity-sum channel is the single-bin voxel grid
    from ergo.representations import ChannelSpec, RepresentationSpec, WindowSpec
    spec = tmp_path / "spec.json"
    spec.write_text(RepresentationSpec((ChannelSpec(WindowSpec("count", 0.0, 1.0), "p", "sum"),)).to_json())
    assert run(corpus_dir, tmp_path / "a", "gwd", "--repr", "voxel1") == 0
    assert run(corpus_dir, tmp_path / "b", "gwd", "--repr", str(spec)) == 0
    a = json.loads((tmp_path / "a" / "gwd_report.json").read_text())
    b = json.loads((tmp_path / "b" / "gwd_report.json").read_text())
    assert a["per_sample"] == b["per_sample"]


@pytest.mark.parametrize("argv", [
    ["gwd", "--repr", "voxel12", "--n", "0"],
    ["gwd", "--repr", "voxel12", "--n", "5"],
    ["gwd", "--repr", "nonsense"],
    ["gwd", "--repr", "voxel12", "--jobs", "0"],
    ["gwd", "--repr", "voxel12", "--epsilon", "-1"],
    ["bogus"],
])
def test_gwd_invalid(tmp_path, corpus_dir, argv):
    assert run(corpus_dir, tmp_path, *argv) == 1


def test_missing_corpus(tmp_path):
    assert main(["gwd", "--repr", "voxel1", "--corpus", str(tmp_path / "none"),
                 "--out", str(tmp_path)]) in (1, 2)


def test_solver_config_file(tmp_path, corpus_dir):
    cfgf = tmp_path / "solver.json"
    cfgf.write_text(json.dumps({"epsilon": 0.01}))
    assert run(corpus_dir, tmp_path / "o", "gwd", "--repr", "voxel1", "--solver-config", str(cfgf)) == 0
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["inputs"]["solver"]["epsilon"] == 0.01
    cfgf.write_text(json.dumps({"epsilonn": 0.01}))
    assert run(corpus_dir, tmp_path / "p", "gwd", "--repr", "voxel1", "--solver-config", str(cfgf)) == 1


# ---------------------------------------------------------------- sweeps

def test_sweep_channels_single_point(tmp_path, corpus_dir):
    assert run(corpus_dir, tmp_path, "sweep-channels", "--family", "mdes", "--channels", "4") == 0
    doc = check(tmp_path / "sweep_channels_mdes.json", "sweep")
    assert [p["value"] for p in doc["points"]] == [4.0]
    svg_ok(tmp_path / "sweep_channels_mdes.svg")


def test_sweep_channels_invalid(tmp_path, corpus_dir):
    assert run(corpus_dir, tmp_path, "sweep-channels", "--channels", "0,2") == 1
    assert run(corpus_dir, tmp_path, "sweep-channels", "--channels", "a") == 1


def test_sweep_blur_zero_equals_gwd(tmp_path, corpus_dir):
    assert run(corpus_dir, tmp_path / "b", "sweep-blur", "--repr", "voxel2", "--sigmas", "0") == 0
    assert run(corpus_dir, tmp_path / "g", "gwd", "--repr", "voxel2") == 0
    blur = check(tmp_path / "b" / "sweep_blur.json", "sweep")
    gwd = json.loads((tmp_path / "g" / "gwd_report.json").read_text())
    assert blur["points"][0]["mean"] == gwd["mean"]
    svg_ok(tmp_path / "b" / "sweep_blur.svg")


def test_sweep_blur_negative_sigma(tmp_path, corpus_dir):
    assert run(corpus_dir, tmp_path, "sweep-blur", "--sigmas=0,-1") == 1


def test_sweep_samples(tmp_path, corpus_dir):
    assert run(corpus_dir, tmp_path, "sweep-samples", "--reprs", "voxel1", "--ns", "2,4") == 0
    doc = check(tmp_path / "sweep_samples.json", "sweep_samples")
    assert [r["kendall_tau"] for r in doc["ranking"]] == [1.0, 1.0]
    svg_ok(tmp_path / "sweep_samples.svg")
    assert run(corpus_dir, tmp_path, "sweep-samples", "--ns", "2,5") == 1


# ---------------------------------------------------------------- search / invariance

def test_search_cli_single_channel(tmp_path, corpus_dir):
    rc = main(["search", "--channels", "1", "--baselines", "voxel1,hist2", "--n", "2",
               "--corpus", str(corpus_dir), "--event-cap", "30", "--out", str(tmp_path)])
    assert rc == 0
    log = check(tmp_path / "search_log.json", "search_log")
    rep = check(tmp_path / "search_report.json", "search_report")
    check(tmp_path / "spec.json", "spec")
    cands = log["stages"][0]["candidates"]
    assert len(cands) == 196
    assert rep["final_score"] == min(c["score"] for c in cands if c["score"] is not None)
    assert rep["beats_all_baselines"] == all(rep["final_score"] <= v for v in rep["baselines"].values())
    svg_ok(tmp_path / "search_descent.svg")
    m = check(tmp_path / "manifest.json", "manifest")
    assert set(m["outputs"]) == {"spec.json", "search_log.json", "search_report.json", "search_descent.svg"}


@pytest.mark.parametrize("argv", [["--strategy", "gryffin"], ["--baselines", "nope"],
                                  ["--channels", "0"], ["--strategy", "random_k", "--k", "0"]])
def test_search_invalid(tmp_path, corpus_dir, argv):
    assert run(corpus_dir, tmp_path, "search", *argv) == 1


def test_invariance_rerun_identical(tmp_path):
    argv = ["invariance", "--sets", "2", "--affine-a", "2,-0.5", "--affine-b", "0,3"]
    assert main([*argv, "--out", str(tmp_path / "a")]) == 0
    assert main([*argv, "--out", str(tmp_path / "b")]) == 0
    a = check(tmp_path / "a" / "invariance_report.json", "invariance_report")
    assert (tmp_path / "a" / "invariance_report.json").read_bytes() == \
        (tmp_path / "b" / "invariance_report.json").read_bytes()
    assert {s["suite"] for s in a["suites"]} == {"affine", "concat_constant", "duplicate"}
    assert a["passed"]


@pytest.mark.parametrize("argv", [["--affine-a", "0"], ["--sets", "0"]])
def test_invariance_invalid(tmp_path, argv):
    assert main(["invariance", *argv, "--out", str(tmp_path)]) == 1


# ---------------------------------------------------------------- report helpers

def test_canonical_json_sorted_and_strict(tmp_path):
    assert canonical_json({"b": 1, "a": [1.5]}) == '{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'
    with pytest.raises(ValueError):
        canonical_json({"x": math.nan})
    p = write_json(tmp_path / "sub" / "x.json", {"k": 1})
    assert json.loads(p.read_text()) == {"k": 1}


def test_config_hash_order_independent():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_manifest(tmp_path):
    m = RunManifest("gwd", {"repr": "voxel1"}, {"seed": 0}, ["b.json", "a.json"])
    m.finish()
    jsonschema.validate(m.to_dict(), schema("manifest"))
    assert m.to_dict()["outputs"] == ["a.json", "b.json"]
    assert m.save(tmp_path).name == "manifest.json"


def test_kendall_tau():
    assert kendall_tau(["a", "b", "c"], ["a", "b", "c"]) == 1.0
    assert kendall_tau(["a", "b", "c"], ["c", "b", "a"]) == -1.0
    assert kendall_tau(["a", "b", "c"], ["b", "a", "c"]) == pytest.approx(1 / 3)
    assert kendall_tau(["a"], ["a"]) == 1.0
    with pytest.raises(ValidationError):
        kendall_tau(["a", "b"], ["a", "c"])


def test_ranking_ties_keep_order():
    assert ranking(["x", "y", "z"], [0.2, 0.1, 0.2]) == ["y", "x", "z"]


def test_svg_render_handles_degenerate_data(tmp_path):
    plot = LinePlot("t <&>", "x", "y", [Series("one", [1.0], [2.0]),
                                         Series("nan", [1.0, 2.0], [math.nan, 1.0])],
                    [HLine("ref", 2.0)])
    plot.save(tmp_path / "p.svg")
    root = svg_ok(tmp_path / "p.svg")
    assert "t <&>" in "".join(root.itertext())
    svg_ok_text = descent_plot([0.3, 0.2], {"hist2": 0.25, "bad": math.inf}).render()
    assert ET.fromstring(svg_ok_text).tag.endswith("svg")
