"""Command line entry point: report <runs-root> --out <dir>."""
import os
import sys

import click

from .index import ReportError, RunIndex
from .render import render_run, write_summary


@click.command()
@click.argument("runs_root", type=click.Path())
@click.option("--out", "out_dir", default="report-out", show_default=True, help="output directory")
def main(runs_root, out_dir):
    """Render figures and a Markdown summary for every run under RUNS_ROOT."""
    try:
        index = RunIndex.discover(runs_root)
    except ReportError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    os.makedirs(out_dir, exist_ok=True)
    summaries = []
    for run in index.runs:
        try:
            summaries.append(render_run(run, out_dir))
        except ReportError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
    path = write_summary(out_dir, summaries)
    click.echo(path)


if __name__ == "__main__":
    main()
