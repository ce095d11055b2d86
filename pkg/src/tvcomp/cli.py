"""tvc command line: inspect, compress, pack, merge, compose, sweep, bench."""

from __future__ import annotations

import json
import subprocess
import sys
import tempfile

import click
import numpy as np

from . import bench as bench_mod
from . import codec, compose as compose_mod, core, decompose, merge as merge_mod, sweep as sweep_mod
from . import tensor_store, ternary_ops
from .errors import SweepRequired, TvcError


@click.group()
def main():
    """Sparse ternary task-vector compression toolkit."""


def _fail(e: Exception):
    raise click.ClickException(f"{type(e).__name__}: {e}")


@main.command()
@click.argument("path", type=click.Path(exists=True))
def inspect(path):
    """Print the manifest of a dense container."""
    try:
        metas = tensor_store.read_manifest(path)
    except TvcError as e:
        _fail(e)
    click.echo(f"{'name':<32} {'shape':<20} {'dtype':<6} {'offset':>12} {'elems':>12}")
    for m in metas:
        shape = "x".join(map(str, m.shape)) or "scalar"
        click.echo(f"{m.name:<32} {shape:<20} {m.dtype:<6} {m.offset_bytes:>12} {m.length_elems:>12}")


@main.command()
@click.argument("ft", type=click.Path(exists=True))
@click.argument("init", type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path())
def diff(ft, init, output):
    """Write the task vector FT - INIT."""
    try:
        tau = decompose.task_vector(tensor_store.load_container(ft), tensor_store.load_container(init))
        tensor_store.save_container(tau, output)
    except TvcError as e:
        _fail(e)
    click.echo(f"wrote {output} ({tau.total_dim} params)")


@main.command()
@click.argument("tau", type=click.Path(exists=True))
def stats(tau):
    """Print per-group and pooled distribution statistics."""
    try:
        per_group, pooled = decompose.stats(tensor_store.load_container(tau))
    except TvcError as e:
        _fail(e)
    click.echo(f"{'group':<32} {'n':>10} {'mean':>12} {'std':>12} {'max':>12} {'min':>12}")
    for name, s in per_group.items():
        click.echo(f"{name:<32} {s.n:>10} {s.mean:>12.5g} {s.std:>12.5g} {s.max:>12.5g} {s.min:>12.5g}")
    s = pooled
    click.echo(f"{'(pooled)':<32} {s.n:>10} {s.mean:>12.5g} {s.std:>12.5g} {s.max:>12.5g} {s.min:>12.5g}")


@main.command(name="compress")
@click.argument("tau", type=click.Path(exists=True))
@click.option("-k", "k_percent", type=float, required=True, help="density in percent, (0, 100]")
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--pooled-sigma", is_flag=True, help="use one pooled std instead of per-group")
@click.option("-o", "--output", required=True, type=click.Path())
def compress_cmd(tau, k_percent, alpha, pooled_sigma, output):
    """Compress a task vector to a sparse ternary artifact."""
    try:
        tv = tensor_store.load_container(tau)
        ca = core.compress(tv, k_percent, alpha, pooled_sigma=pooled_sigma)
        codec.save_artifact(ca, output)
    except TvcError as e:
        _fail(e)
    click.echo(
        f"wrote {output}: {ca.total_nnz}/{ca.total_dim} nonzeros "
        f"(density {100 * ca.total_nnz / ca.total_dim:.3f}%)"
    )


@main.command()
@click.argument("artifact", type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path())
def decompress(artifact, output):
    """Reconstruct a dense task vector from an artifact."""
    try:
        ca = codec.load_artifact(artifact)
        tensor_store.save_container(core.reconstruct(ca), output)
    except TvcError as e:
        _fail(e)
    click.echo(f"wrote {output}")


@main.command()
@click.argument("artifact", type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice([codec.FORMAT_GOLOMB, codec.FORMAT_BITMASK]),
              default=codec.FORMAT_GOLOMB, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path())
def pack(artifact, fmt, output):
    """Serialize an artifact into a golomb or bitmask blob."""
    try:
        ca = codec.load_artifact(artifact)
        blob = codec.encode_artifact(ca, fmt)
        codec.write_blob(blob, output)
    except TvcError as e:
        _fail(e)
    click.echo(f"wrote {output}: {codec.measured_size_bits(blob)} payload bits ({fmt})")


@main.command()
@click.argument("blob", type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path())
def unpack(blob, output):
    """Convert a blob back into an artifact file.

    Blobs carry no sweep metadata: the stored density is the realized one
    and alpha is recorded as 1.0.
    """
    try:
        b = codec.read_blob(blob)
        tensors = codec.decode_tensors(b)
        total_dim = sum(t.dim for t in tensors)
        total_nnz = sum(t.nnz for t in tensors)
        k = max(100.0 * total_nnz / total_dim, 1e-12) if total_dim else 100.0
        ca = core.CompressedArtifact(tensors, min(k, 100.0), 1.0)
        codec.save_artifact(ca, output)
    except TvcError as e:
        _fail(e)
    click.echo(f"wrote {output}")


@main.command()
@click.argument("blob", type=click.Path(exists=True))
def size(blob):
    """Payload bits, entropy bound, and ratio versus a 16-bit dense vector."""
    try:
        b = codec.read_blob(blob)
    except TvcError as e:
        _fail(e)
    payload = codec.measured_size_bits(b)
    accounted = codec.accounted_size_bits(b)
    d = b.total_dim
    nnz = sum(h.nnz for h in b.headers)
    density = nnz / d if d else 0.0
    click.echo(f"format          : {b.format}")
    click.echo(f"tensors         : {len(b.headers)}")
    click.echo(f"dim             : {d}")
    click.echo(f"density         : {density:.6f}")
    click.echo(f"payload bits    : {payload}")
    click.echo(f"payload + 16/tn : {accounted}")
    if 0 < density <= 1:
        click.echo(f"entropy bound   : {codec.entropy_bits(density, d):.0f} bits")
    click.echo(f"dense 16-bit    : {16 * d} bits")
    if accounted:
        click.echo(f"ratio vs 16*d   : {16 * d / accounted:.2f}x")


@main.command()
@click.argument("blob1", type=click.Path(exists=True))
@click.argument("blob2", type=click.Path(exists=True))
def similarity(blob1, blob2):
    """Bitwise dot product, sign distance, and L2 distance of two blobs."""
    try:
        ts1 = codec.decode_tensors(codec.read_blob(blob1))
        ts2 = codec.decode_tensors(codec.read_blob(blob2))
        if [t.name for t in ts1] != [t.name for t in ts2]:
            raise click.ClickException("blobs hold different tensor sets")
        total_dot = 0.0
        total_signdist = 0
        total_sq = 0.0
        for t1, t2 in zip(ts1, ts2):
            a = ternary_ops.from_ternary(t1)
            b = ternary_ops.from_ternary(t2)
            total_dot += ternary_ops.dot(a, b)
            total_signdist += ternary_ops.sign_distance(a, b)
            total_sq += ternary_ops.scaled_l2_distance(a, b) ** 2
    except TvcError as e:
        _fail(e)
    click.echo(f"dot           : {total_dot:.6g}")
    click.echo(f"sign distance : {total_signdist}")
    click.echo(f"l2 distance   : {total_sq ** 0.5:.6g}")


@main.command(name="merge")
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--method", type=click.Choice(merge_mod.METHODS), default="average", show_default=True)
@click.option("--lambda", "lam", type=float, default=1.0, show_default=True)
@click.option("--trim", "trim_density", type=float, default=20.0, show_default=True,
              help="ties trim density in percent")
@click.option("-o", "--output", required=True, type=click.Path())
def merge_cmd(inputs, method, lam, trim_density, output):
    """Merge dense task-vector containers into one."""
    try:
        taus = [tensor_store.load_container(p) for p in inputs]
        spec = merge_mod.MergeSpec(method, lam, trim_density)
        tensor_store.save_container(merge_mod.merge_dense(taus, spec), output)
    except TvcError as e:
        _fail(e)
    click.echo(f"wrote {output} ({method}, {len(inputs)} inputs)")


def _load_module(path) -> compose_mod.LowRankModule:
    if path.endswith(".cpa"):
        tv = core.reconstruct(codec.load_artifact(path))
    else:
        tv = tensor_store.load_container(path)
    return compose_mod.module_from_task_vector(tv)


def _save_module(mod: compose_mod.LowRankModule, path) -> None:
    groups = {}
    for key, (a, b) in mod.layers.items():
        groups[key + compose_mod.A_SUFFIX] = a.astype(np.float32)
        groups[key + compose_mod.B_SUFFIX] = b.astype(np.float32)
    tensor_store.save_container(tensor_store.TaskVector(groups), path)


@main.command(name="compose")
@click.argument("mods", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--weights", "weights_path", required=True, type=click.Path(exists=True),
              help="JSON list of weights, one per module")
@click.option("-o", "--output", required=True, type=click.Path())
def compose_cmd(mods, weights_path, output):
    """Weighted composition of low-rank modules (groups named <layer>.A/.B)."""
    with open(weights_path) as f:
        w = json.load(f)
    try:
        modules = [_load_module(p) for p in mods]
        out = compose_mod.compose_modules(modules, compose_mod.ComposeWeights(np.asarray(w)))
        _save_module(out, output)
    except TvcError as e:
        _fail(e)
    click.echo(f"wrote {output}")


@main.command(name="compose-opt")
@click.argument("mods", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--budget", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--loss-cmd", required=True,
              help="command reading a JSON weight list on stdin and printing a loss")
@click.option("-o", "--output", required=True, type=click.Path())
@click.option("--weights-out", type=click.Path(), help="also write the best weights as JSON")
def compose_opt(mods, budget, seed, loss_cmd, output, weights_out):
    """Search composition weights with an external black-box loss."""
    try:
        modules = [_load_module(p) for p in mods]

        def loss(cw: compose_mod.ComposeWeights) -> float:
            payload = json.dumps(list(map(float, cw.w)))
            proc = subprocess.run(
                loss_cmd, shell=True, input=payload.encode(),
                stdout=subprocess.PIPE, check=True,
            )
            return float(proc.stdout.strip())

        best = compose_mod.optimize_weights(len(modules), loss, budget, seed=seed)
        out = compose_mod.compose_modules(modules, best)
        _save_module(out, output)
    except TvcError as e:
        _fail(e)
    if weights_out:
        with open(weights_out, "w") as f:
            json.dump(list(map(float, best.w)), f)
    click.echo(f"wrote {output}; weights {np.round(best.w, 4).tolist()}")


@main.command(name="sweep")
@click.argument("tau", type=click.Path(exists=True))
@click.option("--scorer-cmd", required=True,
              help="command invoked with a packed golomb blob path; prints a score")
@click.option("--k", "k_values", type=float, multiple=True)
@click.option("--alpha", "alpha_values", type=float, multiple=True)
@click.option("-o", "--output", required=True, type=click.Path(), help="CSV output")
def sweep_cmd(tau, scorer_cmd, k_values, alpha_values, output):
    """Grid search (k, alpha) against an external scorer."""
    import csv

    try:
        tv = tensor_store.load_container(tau)
        grid = sweep_mod.SweepGrid(
            k_values or sweep_mod.DEFAULT_K_VALUES,
            alpha_values or sweep_mod.DEFAULT_ALPHA_VALUES,
        )

        def scorer(ca: core.CompressedArtifact) -> float:
            blob = codec.encode_artifact(ca, codec.FORMAT_GOLOMB)
            with tempfile.NamedTemporaryFile(suffix=".cpt") as tmp:
                codec.write_blob(blob, tmp.name)
                proc = subprocess.run(
                    f"{scorer_cmd} {tmp.name}", shell=True,
                    stdout=subprocess.PIPE, check=True,
                )
            return float(proc.stdout.strip())

        result = sweep_mod.run_sweep(tv, grid, scorer)
    except TvcError as e:
        _fail(e)
    with open(output, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["k", "alpha", "score", "size_bits"])
        for row in result.rows:
            writer.writerow([row.k, row.alpha, row.score, row.size_bits_golomb])
    best = result.best
    click.echo(f"wrote {output}; best k={best.k} alpha={best.alpha} score={best.score:.6g}")


@main.command(name="recommend-alpha")
@click.argument("model_params", type=int)
@click.argument("k", type=float)
def recommend_alpha_cmd(model_params, k):
    """Default scale multiplier, if the model size / density regime has one."""
    try:
        click.echo(str(sweep_mod.recommend_alpha(model_params, k)))
    except SweepRequired as e:
        click.echo(f"sweep required: {e}")
        sys.exit(2)


@main.command(name="bench")
@click.argument("path", type=click.Path(exists=True))
@click.option("--trials", type=int, default=10, show_default=True)
@click.option("--read-only", is_flag=True, help="measure raw I/O without decoding")
@click.option("--drop-caches", is_flag=True, help="advise the kernel to evict the file between trials")
def bench_cmd(path, trials, read_only, drop_caches):
    """Time loading (and decoding) a container, artifact, or blob."""
    try:
        report = bench_mod.bench_load(path, trials, read_only=read_only, drop_caches=drop_caches)
    except TvcError as e:
        _fail(e)
    click.echo(
        f"{path}: {report.size_bits} bits, {report.trials} trials, "
        f"{report.mean_sec * 1e3:.3f} ms mean ({report.std_sec * 1e3:.3f} ms std)"
    )


if __name__ == "__main__":
    main()
