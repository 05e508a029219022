"""Command-line entry point: ``pgikit <command> ...``.

Exit codes: 0 on success, 1 on usage errors, 2 on data or format errors.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .csconv import CsconvParams, regional_embedding
from .errors import InvalidArgumentError, PgiError
from .geom import Lattice, PlanarEmbedding
from .io import (export_pgi_png, read_pgi, read_points, write_feature_map, write_pgi,
                 write_points)
from .metrics import geometry_fidelity, neighborhood_consistency
from .nn import read_checkpoint, write_checkpoint
from .pipeline import PRESETS, PipelineConfig, flatten_point_cloud
from .resample import pgi_to_points
from .shapes import SHAPES, gen_shape
from .upscale import upscaled_pgi

EXIT_USAGE = 1
EXIT_DATA = 2

_FORMATS = click.Choice(["xyz", "ply-ascii"])


def _emit(report: dict, as_json: bool) -> None:
    if as_json:
        click.echo(json.dumps(report, sort_keys=True))
    else:
        for key, value in report.items():
            click.echo(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")


def _pair(text: str) -> tuple[int, int]:
    try:
        j, jbar = (int(v) for v in text.split(","))
    except ValueError:
        raise click.BadParameter("expected two integers as J,Jbar") from None
    return j, jbar


@click.group()
@click.version_option(package_name="pgikit")
def cli():
    """Convert point clouds to point geometry images (PGIs) and back."""


@cli.command()
@click.argument("src", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None,
              help="N_C/k preset keyed by point count.")
@click.option("--nc", "n_c", type=int, default=None, help="Context points per patch.")
@click.option("--k", "k", type=int, default=None, help="Side of each PGI block.")
@click.option("--ng", "n_g", type=int, default=16, show_default=True,
              help="Guidance lattice side.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--steps", type=int, default=None, help="Override the step count of every stage.")
@click.option("--png", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Also export a 16-bit PNG preview.")
@click.option("--format", "fmt", type=_FORMATS, default=None)
def flatten(src, out, preset, n_c, k, n_g, seed, steps, png, fmt):
    """Run the full pipeline on a point file and write a .pgi file."""
    if preset is not None and (n_c is not None or k is not None):
        raise click.UsageError("--preset cannot be combined with --nc/--k")
    if preset is None and (n_c is None) != (k is None):
        raise click.UsageError("--nc and --k must be given together")
    if preset is not None:
        cfg = PipelineConfig.from_preset(preset, n_g=n_g, seed=seed)
    elif n_c is not None:
        cfg = PipelineConfig(n_g=n_g, n_c=n_c, k=k, seed=seed)
    else:
        cfg = PipelineConfig(n_g=n_g, seed=seed)
    if steps is not None:
        cfg = cfg.with_steps(steps)
    pc = read_points(src, fmt)
    if cfg.n_g ** 2 > len(pc):
        raise InvalidArgumentError(f"n_G^2 = {cfg.n_g ** 2} exceeds the {len(pc)} input points")
    result = flatten_point_cloud(pc, cfg)
    write_pgi(out, result.pgi)
    if png is not None:
        export_pgi_png(result.pgi, png)
    click.echo(f"wrote {out} (m={result.pgi.m}, n_g={cfg.n_g}, k={cfg.k})")


@cli.command()
@click.argument("pgi_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--dedupe", is_flag=True, help="Keep one copy of each source point.")
@click.option("--format", "fmt", type=_FORMATS, default=None)
def reconstruct(pgi_path, out, dedupe, fmt):
    """Turn a PGI back into a point file."""
    pc = pgi_to_points(read_pgi(pgi_path), dedupe=dedupe)
    write_points(out, pc, fmt)
    click.echo(f"wrote {len(pc)} points to {out}")


@cli.command()
@click.argument("pgi_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--against", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="The point file the PGI was built from.")
@click.option("--consistency", "pair", default=None, help="J,Jbar for neighborhood consistency.")
@click.option("--json", "as_json", is_flag=True, help="Print one JSON object instead of key=value lines.")
@click.option("--format", "fmt", type=_FORMATS, default=None)
def metrics(pgi_path, against, pair, as_json, fmt):
    """Report geometry fidelity and redundancy, plus neighborhood consistency on request."""
    jj = _pair(pair) if pair is not None else None
    pgi = read_pgi(pgi_path)
    pc = read_points(against, fmt)
    report = geometry_fidelity(pc, pgi).as_dict()
    if jj is not None:
        if pgi.block_of is None:
            raise InvalidArgumentError("PGI carries no guidance map; consistency is unavailable")
        # guidance points are embedded at the lattice cell of their block
        index_of = {int(s): i for i, s in enumerate(pc.source_ids)}
        ids = pgi.block_of.reshape(-1)
        missing = [int(s) for s in ids if int(s) not in index_of]
        if missing:
            raise InvalidArgumentError(f"guidance id {missing[0]} is not in the point file")
        p_g = pc.subset([index_of[int(s)] for s in ids])
        f_g = PlanarEmbedding(Lattice.square(pgi.n_g).coords, p_g.source_ids)
        cons = neighborhood_consistency(p_g, f_g, *jj)
        report.update({f"consistency_{k}": v for k, v in cons.as_dict().items()})
    _emit(report, as_json)


@cli.command()
@click.argument("pgi_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--params", "ckpt", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="CSConv parameter checkpoint (see init-params).")
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
def embed(pgi_path, ckpt, out):
    """Compute the CSConv regional feature map of a PGI."""
    params = CsconvParams.from_stacks(read_checkpoint(ckpt))
    fmap = regional_embedding(params, read_pgi(pgi_path))
    write_feature_map(out, fmap)
    click.echo(f"wrote {fmap.shape[0]}x{fmap.shape[1]}x{fmap.shape[2]} feature map to {out}")


@cli.command("init-params")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
def init_params(seed, out):
    """Write freshly initialized CSConv parameters to a checkpoint."""
    write_checkpoint(out, CsconvParams.init(seed).stacks())
    click.echo(f"wrote {out}")


@cli.command()
@click.argument("pgi_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
def upsample(pgi_path, out):
    """Bicubic 2x enlargement of a PGI (4x the points, no learned refinement)."""
    pgi = upscaled_pgi(read_pgi(pgi_path), 2)
    write_pgi(out, pgi)
    click.echo(f"wrote {out} (m={pgi.m})")


@cli.command()
@click.argument("kind", type=click.Choice(SHAPES))
@click.option("--n", "n", type=click.IntRange(min=1), default=1024, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--format", "fmt", type=_FORMATS, default=None)
def gen(kind, n, seed, out, fmt):
    """Sample a synthetic shape into a point file."""
    write_points(out, gen_shape(kind, n, seed), fmt)
    click.echo(f"wrote {n} points to {out}")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, prog_name="pgikit", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except (click.UsageError, click.Abort) as exc:
        if isinstance(exc, click.UsageError):
            exc.show()
        return EXIT_USAGE
    except InvalidArgumentError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    except (PgiError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
