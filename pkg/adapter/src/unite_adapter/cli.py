"""Command-line wrapper around the export functions."""

from __future__ import annotations

import sys

import click

from .export import AdapterConfig, export_all, export_embeddings, export_projection, export_vocab_df


def common_options(fn):
    fn = click.option("--model", required=True, help="Checkpoint path or hub id.")(fn)
    fn = click.option("--pooling", default="mean", type=click.Choice(["mean", "last-token"]))(fn)
    fn = click.option("--batch-size", default=8, type=int)(fn)
    fn = click.option("--max-seq-len", default=256, type=int)(fn)
    fn = click.option("--output-dir", default=".", type=str)(fn)
    fn = click.option("--name", default="model", help="Basename for .emb/.prj files.")(fn)
    return fn


def build_config(model, pooling, batch_size, max_seq_len, output_dir) -> AdapterConfig:
    return AdapterConfig(
        model=model, pooling=pooling, batch_size=batch_size,
        max_seq_len=max_seq_len, output_dir=output_dir,
    )


@click.group()
def cli():
    """Export model state files for the sampling core."""


@cli.command("export-embeddings")
@click.option("--corpus", required=True)
@common_options
def embeddings_cmd(corpus, name, **kw):
    path = export_embeddings(build_config(**kw), corpus, name)
    click.echo(f"wrote {path}")


@cli.command("export-projection")
@common_options
def projection_cmd(name, **kw):
    path = export_projection(build_config(**kw), name)
    click.echo(f"wrote {path}")


@cli.command("export-vocab-df")
@click.option("--corpus", required=True)
@common_options
def vocab_df_cmd(corpus, name, **kw):
    path = export_vocab_df(build_config(**kw), corpus)
    click.echo(f"wrote {path}")


@cli.command("export-all")
@click.option("--corpus", required=True)
@common_options
def export_all_cmd(corpus, name, **kw):
    for path in export_all(build_config(**kw), corpus, name):
        click.echo(f"wrote {path}")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"model load failed: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
