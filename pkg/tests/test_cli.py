import json

import numpy as np
import pytest

from pgikit.cli import main
from pgikit.io import read_feature_map, read_pgi, read_points


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen", "sphere", "--n", "200", "--seed", "1", "--out", str(d / "s.xyz")]) == 0
    args = ["flatten", str(d / "s.xyz"), "--ng", "4", "--nc", "8", "--k", "3", "--steps", "3"]
    assert main(args + ["--out", str(d / "a.pgi"), "--png", str(d / "a.png")]) == 0
    assert main(args + ["--out", str(d / "b.pgi")]) == 0
    return d


def test_flatten_is_deterministic(workdir):
    assert (workdir / "a.pgi").read_bytes() == (workdir / "b.pgi").read_bytes()
    assert read_pgi(workdir / "a.pgi").m == 12
    assert (workdir / "a.png").exists() and (workdir / "a.png.txt").exists()


def test_reconstruct_dedupe_is_subset(workdir):
    out = workdir / "r.ply"
    assert main(["reconstruct", str(workdir / "a.pgi"), "--out", str(out), "--dedupe"]) == 0
    src = {tuple(p) for p in read_points(workdir / "s.xyz").points}
    assert {tuple(p) for p in read_points(out).points} <= src


def test_metrics_json(workdir, capsys):
    capsys.readouterr()
    code = main(["metrics", str(workdir / "a.pgi"), "--against", str(workdir / "s.xyz"),
                 "--consistency", "2,4", "--json"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert 0 < report["fidelity"] <= 1
    assert report["redundancy"] == pytest.approx(144 / 200 - 1)
    assert 0 <= report["consistency_value"] <= 1


def test_embed_and_upsample(workdir):
    ck = workdir / "p.ckpt"
    assert main(["init-params", "--seed", "0", "--out", str(ck)]) == 0
    assert main(["embed", str(workdir / "a.pgi"), "--params", str(ck),
                 "--out", str(workdir / "f.bin")]) == 0
    assert read_feature_map(workdir / "f.bin").shape[1:] == (4, 4)
    assert main(["upsample", str(workdir / "a.pgi"), "--out", str(workdir / "u.pgi")]) == 0
    assert read_pgi(workdir / "u.pgi").m == 24


def test_usage_errors(workdir):
    src = str(workdir / "s.xyz")
    out = str(workdir / "x.pgi")
    assert main(["flatten", src, "--out", out, "--nc", "30", "--k", "5"]) == 1
    assert main(["flatten", src, "--out", out, "--nc", "8"]) == 1
    assert main(["flatten", src, "--out", out, "--preset", "1024", "--k", "5"]) == 1
    assert main(["flatten", src, "--out", out, "--ng", "16"]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["metrics", str(workdir / "a.pgi"), "--against", src, "--consistency", "x"]) == 1


def test_data_errors(workdir):
    bad = workdir / "bad.xyz"
    bad.write_text("0 0 0\n1 2\n")
    assert main(["flatten", str(bad), "--out", str(workdir / "x.pgi")]) == 2
    trunc = workdir / "t.pgi"
    trunc.write_bytes((workdir / "a.pgi").read_bytes()[:-3])
    assert main(["reconstruct", str(trunc), "--out", str(workdir / "x.xyz")]) == 2
