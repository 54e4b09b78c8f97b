"""Command-line entry points.

Exit codes: 0 success, 2 standing-assumption violation (H1-H3 or invalid
configuration), 3 numerical failure (solver blow-up, degenerate kernel,
failed self-test).
"""
from __future__ import annotations

import os
import sys

import click

from . import config as config_mod
from . import harness
from .reflections import AssumptionViolation

EXIT_ASSUMPTION = 2
EXIT_NUMERICAL = 3

# CLI subcommand name -> config mode
SUBCOMMANDS = {
    "simulate": "simulate",
    "fokker-planck": "fokker_planck",
    "verify": "verify_identities",
    "sweep-de1": "sweep_de1",
    "sweep-small-de": "sweep_small_de",
    "compare-fields": "compare_fields",
    "kernels-selftest": "kernels_selftest",
}


@click.group()
def main():
    """Brownian suspension laboratory: simulation, limits, diagnostics."""


def _run(mode, config_path, out, seed, threads):
    if threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(threads))
    try:
        if config_path is None:
            cfg = config_mod.validate({"mode": mode})
        else:
            cfg = config_mod.load(config_path)
        if cfg["mode"] != mode:
            raise config_mod.ConfigError(
                f"config mode {cfg['mode']!r} does not match subcommand ({mode})"
            )
        run_dir = harness.execute(cfg, out, seed=seed, threads=threads or 1)
    except (config_mod.ConfigError, AssumptionViolation) as exc:
        click.echo(f"assumption/config violation: {exc}", err=True)
        sys.exit(EXIT_ASSUMPTION)
    except harness.NumericalFailure as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)
    click.echo(run_dir)


def _make_command(name, mode):
    @main.command(name=name)
    @click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                  help="JSON run configuration.")
    @click.option("--out", type=click.Path(), default="out", show_default=True,
                  help="Output root; the run writes out/<run-id>/.")
    @click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
                  help="Override the config seed.")
    @click.option("--threads", type=click.IntRange(1, 1024), default=None,
                  help="Worker/BLAS thread cap.")
    def cmd(config_path, out, seed, threads):
        _run(mode, config_path, out, seed, threads)

    cmd.__doc__ = f"Run the {mode} mode."
    return cmd


for _name, _mode in SUBCOMMANDS.items():
    _make_command(_name, _mode)


if __name__ == "__main__":
    main()
