import csv
import json
import math

import numpy as np
import pytest

from heatlab.cli import EXIT_OK, EXIT_USAGE, RunConfig, UsageError, main, parse_space
from heatlab.io import cached_decompose, load_space, save_space
from heatlab.kernels import kernel_circle
from heatlab.spaces import SpaceDescriptor, make_model_sample
from heatlab.verifiers.registry import SUITES


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parse_space_grammar():
    desc, n, path = parse_space("euclidean:N=2")
    assert desc == SpaceDescriptor.euclidean(2) and n is None and path is None
    desc, n, _ = parse_space("circle:L=6.2831853,n=128")
    assert desc.L == pytest.approx(6.2831853) and n == 128
    assert parse_space("hyperbolic3:R=3")[0] == SpaceDescriptor.hyperbolic3(3.0)
    assert parse_space("sampled:path=somewhere") == (None, None, "somewhere")


@pytest.mark.parametrize("text", ["bogus", "circle:Q=1", "circle:L", "euclidean:N=x", "hyperbolic3:K=0",
                                  "sampled", "circle:path=x"])
def test_parse_space_rejects(text):
    with pytest.raises(UsageError):
        parse_space(text)


@pytest.mark.parametrize("argv", [["run"], ["run", "--space", "bogus"], ["run", "--space", "circle", "--suite", "nope"],
                                  ["run", "--space", "circle", "--tolerance", "-1"], ["frobnicate"]])
def test_usage_errors_exit_2(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)] if argv[0] == "run" else argv) == EXIT_USAGE


def test_list_suites(capsys):
    assert main(["list-suites"]) == EXIT_OK
    names = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
    assert names == list(SUITES)


def test_run_gaussian_bounds(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--space", "euclidean:N=2", "--suite", "gaussian_bounds", "--out", str(out), "--jobs", "1"]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert set(report) >= {"version", "tool_version", "config", "results", "timings", "environment"}
    (res,) = report["results"]
    assert res["status"] == "pass"
    assert res["constants"]["upper_C1@eps=0.5"] == pytest.approx(0.25, rel=1e-12)
    assert res["constants"]["lower_C1@eps=0.5"] == pytest.approx(4.0, rel=1e-12)
    assert _read(out / res["table"])


def test_run_circle_large_time_is_not_a_failure(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--space", "circle:L=6.2831853", "--suite", "large_time", "--out", str(out)]) == EXIT_OK
    (res,) = json.loads((out / "report.json").read_text())["results"]
    assert res["status"] == "hypothesis_not_met"


def test_config_file_round_trip(tmp_path):
    out = tmp_path / "a"
    main(["run", "--space", "euclidean:N=1", "--suite", "li_yau", "--out", str(out), "--seed", "7"])
    cfg = RunConfig.from_dict(json.loads((out / "report.json").read_text())["config"])
    assert cfg.spaces == ["euclidean:N=1"] and cfg.suites == ["li_yau"] and cfg.seed == 7
    again = tmp_path / "b"
    assert main(["run", "--config", str(out / "config.toml"), "--out", str(again)]) == EXIT_OK
    a = json.loads((out / "report.json").read_text())["results"]
    b = json.loads((again / "report.json").read_text())["results"]
    assert [r["constants"] for r in a] == [r["constants"] for r in b]


def test_tables_identical_across_jobs(tmp_path):
    args = ["run", "--space", "euclidean:N=2", "--space", "circle", "--suite", "gaussian_bounds", "--suite", "li_yau"]
    main(args + ["--out", str(tmp_path / "one"), "--jobs", "1"])
    main(args + ["--out", str(tmp_path / "two"), "--jobs", "2"])
    one = sorted(p.name for p in (tmp_path / "one").glob("*.csv"))
    assert one == sorted(p.name for p in (tmp_path / "two").glob("*.csv")) and one
    for name in one:
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_dump_kernel_values(tmp_path):
    path = tmp_path / "k.csv"
    assert main(["dump-kernel", "--space", "euclidean:N=1", "--t", repr(1 / (4 * math.pi)), "--d", "0", "--out", str(path)]) == 0
    assert float(_read(path)[0]["p"]) == pytest.approx(1.0, rel=1e-14)
    main(["dump-kernel", "--space", "hyperbolic3", "--t", "1", "--d", "0", "--out", str(path)])
    assert float(_read(path)[0]["p"]) == pytest.approx((4 * math.pi) ** -1.5 * math.exp(-1), rel=1e-14)
    main(["dump-kernel", "--space", "circle", "--t", "1,2", "--d", "0,3.14159", "--out", str(path)])
    rows = _read(path)
    assert len(rows) == 4
    for r in rows:
        assert float(r["p"]) == pytest.approx(kernel_circle(2 * math.pi, float(r["t"]), float(r["d"])), rel=1e-14)


def test_space_files_and_spectrum_cache(tmp_path):
    s = make_model_sample(SpaceDescriptor.circle(2 * math.pi), 96)
    back = load_space(save_space(s, tmp_path / "space"))
    np.testing.assert_array_equal(back.D, s.D)
    np.testing.assert_array_equal(back.weights, s.weights)
    assert back.descriptor == s.descriptor
    first = cached_decompose(back, tmp_path / "cache")
    assert (tmp_path / "cache" / "spectrum.bin").exists()
    second = cached_decompose(back, tmp_path / "cache")
    np.testing.assert_array_equal(first.values, second.values)
    np.testing.assert_array_equal(first.vectors, second.vectors)


def test_sample_space_verb_and_sampled_run(tmp_path):
    space = tmp_path / "c"
    assert main(["sample-space", "--space", "circle:n=128", "--out", str(space)]) == EXIT_OK
    out = tmp_path / "o"
    assert main(["run", "--space", f"sampled:path={space}", "--suite", "semigroup_axioms", "--out", str(out)]) == EXIT_OK
    (res,) = json.loads((out / "report.json").read_text())["results"]
    assert res["status"] == "pass"
