"""Command line entry points.

One subcommand per study plus ``sweep``::

    thermolim <study> --config <file> [--out <dir>] [--workers <n>] [--seed <u64>]
    thermolim sweep --config <file> [...]

``--emit wigner-bin`` switches the averaged Wigner artifact to the
binary grid format.  The exit status is nonzero iff a convergence flag
was raised (or, for sweeps, a point failed).
"""

from __future__ import annotations

import click

from .errors import ThermolimError
from .harness import (
    STUDY_NAMES,
    ScenarioConfig,
    load_config,
    run_scenario,
    run_sweep,
)

_CONTEXT = {"help_option_names": ["-h", "--help"]}


@click.group(context_settings=_CONTEXT)
def main() -> None:
    """Thermodynamic-limit study driver."""


def _common_options(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(exists=True, dir_okay=False),
                      help="Flat key = value config file (JSON-typed values).")(fn)
    fn = click.option("--out", "out_dir", default=None,
                      help="Output directory (default from config).")(fn)
    fn = click.option("--workers", default=None, type=int,
                      help="Concurrent sweep points.")(fn)
    fn = click.option("--seed", default=None, type=int,
                      help="Base RNG seed (u64).")(fn)
    fn = click.option("--emit", "emit", multiple=True,
                      type=click.Choice(["wigner-bin"]),
                      help="Extra artifact formats.")(fn)
    return fn


def _build_config(config_path, out_dir, workers, seed, emit, study=None):
    try:
        raw = load_config(config_path)
        return ScenarioConfig.from_mapping(
            raw, study=study, out_dir=out_dir, workers=workers, seed=seed,
            emit_wigner_bin=True if "wigner-bin" in emit else None)
    except ThermolimError as exc:
        raise click.ClickException(str(exc)) from exc


def _report(record) -> None:
    click.echo(f"{record.config.study}: {len(record.rows)} rows -> "
               f"{record.out_dir} ({', '.join(sorted(record.manifest))})")
    for flag in record.convergence_flags:
        click.echo(f"flag: {flag}")


def _make_study_command(study: str):
    @_common_options
    def command(config_path, out_dir, workers, seed, emit):
        config = _build_config(config_path, out_dir, workers, seed, emit,
                               study=study)
        try:
            record = run_scenario(config)
        except ThermolimError as exc:
            raise click.ClickException(str(exc)) from exc
        _report(record)
        if record.convergence_flags:
            raise SystemExit(1)

    command.__name__ = study.replace("-", "_")
    command.__doc__ = f"Run the {study} study pipeline."
    return main.command(name=study)(command)


for _study in STUDY_NAMES:
    _make_study_command(_study)


@main.command(name="sweep")
@_common_options
def sweep(config_path, out_dir, workers, seed, emit):
    """Run the sweep declared in the config (study + axis + values)."""
    config = _build_config(config_path, out_dir, workers, seed, emit)
    try:
        records, aggregate = run_sweep(config)
    except ThermolimError as exc:
        raise click.ClickException(str(exc)) from exc
    for record in records:
        if record is not None:
            _report(record)
    for entry in aggregate["points"]:
        if "error" in entry:
            click.echo(f"point {entry['value']}: {entry['error']}")
    for key, value in sorted(aggregate["aggregates"].items()):
        click.echo(f"{key}: {value}")
    flagged = any(rec is not None and rec.convergence_flags for rec in records)
    if aggregate["partial"] or flagged:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
