"""Command-line entry point wiring all modules.

Subcommands: build-network, generate, evaluate, switch-profile, fit,
export-paths. Every randomized command is seeded (default 0, never
wall-clock) and rerunning with identical inputs yields byte-identical
outputs. On failure the last stderr line is a machine-readable JSON error
record; exit codes: 0 ok, 2 usage, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import corpus, cues, evaluate, fit as fit_mod, network, search
from .corpus import CategoryCoding
from .errors import DataError, FluencyError, NumericError

logger = logging.getLogger(__name__)

SEARCH_KINDS = ("greedy", "beam", "sample", "walk")


def _emit_error(kind: str, code: int, message: str) -> None:
    line = json.dumps(
        {"error": kind, "exit_code": code, "message": message}, sort_keys=True
    )
    click.echo(line, err=True)


class UsageFailure(FluencyError):
    exit_code = 2
    kind = "usage"


def _read_config(ctx: click.Context, param: click.Parameter, value: str | None):
    """Load key=value defaults from a plain-text config file."""
    if not value:
        return value
    defaults = {}
    try:
        for lineno, raw in enumerate(Path(value).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{value}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            defaults[key.strip().replace("-", "_")] = val.strip()
    except OSError as exc:
        raise DataError(f"cannot read config file: {exc}") from None
    ctx.default_map = {**defaults, **(ctx.default_map or {})}
    return value


def _config_option(fn):
    return click.option(
        "--config",
        type=click.Path(exists=True, dir_okay=False),
        callback=_read_config,
        is_eager=True,
        expose_value=False,
        help="Plain-text key=value defaults, overridden by flags.",
    )(fn)


def _parse_betas(text: str) -> cues.CueWeights:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise UsageFailure(f"--betas expects three comma-separated values, got {text!r}")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise UsageFailure(f"--betas values must be numeric, got {text!r}") from None
    return cues.CueWeights(*values)


def _coding(name: str) -> CategoryCoding:
    return CategoryCoding(name)


CODING_CHOICES = click.Choice([c.value for c in CategoryCoding])


@click.group()
def cli():
    """Category fluency models over semantic networks: build, generate,
    evaluate, and analyze."""


@cli.command("build-network")
@_config_option
@click.option("--embeddings", type=click.Path(exists=True, dir_okay=False),
              help="Whitespace-separated word vector file.")
@click.option("--norms", type=click.Path(exists=True, dir_okay=False),
              help="Association norms CSV (cue,target,strength).")
@click.option("--runs", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Run bank supplying the lexicon (and gold frequencies).")
@click.option("--epsilon", type=float, default=network.DEFAULT_EPSILON,
              show_default=True, help="Prune similarity edges below this.")
@click.option("--global-source", type=click.Choice(["gold", "file", "none"]),
              default="gold", show_default=True,
              help="Frequency distribution attached as the global node.")
@click.option("--frequency", type=click.Path(exists=True, dir_okay=False),
              help="Raw count CSV (exemplar,count) for --global-source file.")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
def cmd_build_network(embeddings, norms, runs, epsilon, global_source, frequency, output):
    """Build a semantic network snapshot from vectors or association norms."""
    if (embeddings is None) == (norms is None):
        raise UsageFailure("exactly one of --embeddings or --norms is required")
    bank = corpus.load_runs(runs)
    if embeddings is not None:
        vocab = {w for s in bank.lexicon for w in s.split(" ")}
        table = network.load_embeddings(embeddings, vocab=vocab)
        net = network.build_similarity_network(table, bank.lexicon, epsilon)
    else:
        net = network.build_association_network(network.load_norms(norms), bank.lexicon)
    if global_source == "gold":
        net = network.attach_global(net, corpus.gold_frequencies(bank))
    elif global_source == "file":
        if frequency is None:
            raise UsageFailure("--global-source file requires --frequency")
        net = network.attach_global(net, corpus.load_frequencies(frequency))
    network.save_network(net, output)
    click.echo(f"wrote network snapshot with {net.n_nodes} nodes to {output}")


def _generation_model(net_path, external, runs_bank, scheme, betas, coding):
    """Resolve the provider for generate/switch-profile commands."""
    if external is not None:
        dists = cues.load_external(external)
        global_freq = None
        if betas.beta_global > 0:
            if net_path is not None:
                snapshot = network.load_network(net_path)
                if snapshot.global_freq is None:
                    raise DataError("network snapshot has no global node")
                global_freq = snapshot.global_freq
            elif runs_bank is not None:
                global_freq = corpus.gold_frequencies(runs_bank)
            else:
                raise UsageFailure(
                    "reweighting external distributions needs --network or --runs"
                )
        if betas.beta_subcat != 0:
            raise UsageFailure("external distributions take betas l,g with c = 0")
        return cues.ExternalModel(
            dists, global_freq, betas.beta_local, betas.beta_global
        )
    if net_path is None:
        raise UsageFailure("either --network or --external is required")
    net = network.load_network(net_path)
    transitions = None
    if betas.beta_subcat > 0:
        if scheme is None or runs_bank is None:
            raise UsageFailure("beta_subcat > 0 requires --scheme and --runs")
        transitions = corpus.category_transitions(runs_bank, scheme, coding)
    return cues.CueModel(net, betas, transitions, scheme, coding)


@cli.command("generate")
@_config_option
@click.option("--network", "net_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--external", type=click.Path(exists=True, dir_okay=False),
              help="Externally supplied next-exemplar distribution JSONL.")
@click.option("--runs", type=click.Path(exists=True, dir_okay=False),
              help="Human bank for empirical lengths (and gold frequencies).")
@click.option("--scheme", "scheme_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--search", "search_kind", required=True,
              type=click.Choice(SEARCH_KINDS))
@click.option("--betas", default="1,1,0", show_default=True,
              help="Cue exponents beta_local,beta_global,beta_subcat.")
@click.option("--tau", type=float, default=None,
              help="Sampling temperature (sample search only; inf for uniform).")
@click.option("--beam-width", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n", type=int, default=1000, show_default=True)
@click.option("--length", type=int, default=None,
              help="Fixed target length (default: empirical from --runs).")
@click.option("--include-repeats", is_flag=True, default=False)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--coding", "coding_name", type=CODING_CHOICES, default="chained",
              show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
def cmd_generate(net_path, external, runs, scheme_path, search_kind, betas, tau,
                 beam_width, seed, n, length, include_repeats, jobs, coding_name,
                 output):
    """Generate fluency sequences and write them as a runs file."""
    if tau is not None and search_kind != "sample":
        raise UsageFailure("--tau applies only to --search sample")
    if beam_width is not None and search_kind != "beam":
        raise UsageFailure("--beam-width applies only to --search beam")
    if n < 1:
        raise UsageFailure("--n must be >= 1")
    betas_w = _parse_betas(betas)
    coding = _coding(coding_name)
    bank = corpus.load_runs(runs) if runs else None
    scheme = corpus.load_scheme(scheme_path) if scheme_path else None

    if length is not None:
        policy: search.LengthPolicy = search.FixedLength(length)
    elif bank is not None:
        policy = search.EmpiricalLength.from_bank(bank)
    else:
        raise UsageFailure("provide --length or --runs for the length policy")
    config = search.GenerationConfig(
        length_policy=policy,
        seed=seed,
        temperature=tau if tau is not None else 1.0,
        beam_width=beam_width if beam_width is not None else 5,
        exclude_repeats=not include_repeats,
    )

    if search_kind == "walk":
        if external is not None:
            raise UsageFailure("--search walk requires a network, not --external")
        if net_path is None:
            raise UsageFailure("--search walk requires --network")
        net = network.load_network(net_path)
        generator = lambda cfg, i: search.generate_walk(net, cfg, i)
    else:
        model = _generation_model(net_path, external, bank, scheme, betas_w, coding)
        generator = {
            "greedy": lambda cfg, i: search.generate_greedy(model, cfg, i),
            "beam": lambda cfg, i: search.generate_beam(model, cfg, i),
            "sample": lambda cfg, i: search.generate_sampled(model, cfg, i),
        }[search_kind]

    sequences = search.generate_bank(generator, config, n, jobs=jobs)
    generated = [
        corpus.FluencyRun(participant=f"gen-{i}", items=seq)
        for i, seq in enumerate(sequences)
    ]
    corpus.save_runs(generated, output)
    click.echo(f"wrote {len(generated)} generated runs to {output}")


@cli.command("evaluate")
@_config_option
@click.option("--gens", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--refs", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--scheme", "scheme_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--leave-one-out", is_flag=True, default=False,
              help="Score each generation against the bank minus its own row.")
@click.option("--coding", "coding_name", type=CODING_CHOICES, default="chained",
              show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False))
def cmd_evaluate(gens, refs, scheme_path, leave_one_out, coding_name, output):
    """Score generations against a reference bank; emit a scorecard JSON."""
    gen_bank = corpus.load_runs(gens)
    ref_bank = corpus.load_runs(refs)
    scheme = corpus.load_scheme(scheme_path)
    scorecard = evaluate.corpus_eval(
        gen_bank.sequences(),
        ref_bank,
        scheme,
        coding=_coding(coding_name),
        leave_one_out=leave_one_out,
    )
    text = json.dumps(scorecard, sort_keys=True, indent=2)
    if output:
        Path(output).write_text(text + "\n")
    click.echo(text)


@cli.command("switch-profile")
@_config_option
@click.option("--refs", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--scheme", "scheme_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--signal", type=click.Choice(["prob_ratio", "entropy"]),
              default="prob_ratio", show_default=True)
@click.option("--network", "net_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--external", type=click.Path(exists=True, dir_okay=False))
@click.option("--betas", default=None,
              help="Cue exponents (default 1,1,0 for networks; 1,0,0 external).")
@click.option("--window", type=int, default=2, show_default=True)
@click.option("--include-repeats", is_flag=True, default=False)
@click.option("--coding", "coding_name", type=CODING_CHOICES, default="chained",
              show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
def cmd_switch_profile(refs, scheme_path, signal, net_path, external, betas,
                       window, include_repeats, coding_name, output):
    """Align a model signal around human category switches; write CSV."""
    bank = corpus.load_runs(refs)
    scheme = corpus.load_scheme(scheme_path)
    coding = _coding(coding_name)
    if betas is None:
        betas = "1,0,0" if external is not None else "1,1,0"
    model = _generation_model(net_path, external, bank, scheme, _parse_betas(betas), coding)
    profile = evaluate.switch_profile(
        model,
        bank,
        scheme,
        window=window,
        signal=signal,
        exclude_repeats=not include_repeats,
    )
    profile.to_csv(output)
    click.echo(f"wrote {signal} profile over offsets ±{window} to {output}")


@cli.command("fit")
@_config_option
@click.option("--network", "net_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--runs", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--scheme", "scheme_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--family", type=click.Choice(fit_mod.FAMILIES),
              default="local_global", show_default=True)
@click.option("--grid", default=None,
              help="Comma-separated exponent axis (default "
                   f"{','.join(str(v) for v in fit_mod.DEFAULT_GRID)}).")
@click.option("--coding", "coding_name", type=CODING_CHOICES, default="chained",
              show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
def cmd_fit(net_path, runs, scheme_path, family, grid, coding_name, output):
    """Fit cue exponents to a run bank by grid-searched likelihood."""
    net = network.load_network(net_path)
    bank = corpus.load_runs(runs)
    coding = _coding(coding_name)
    scheme = corpus.load_scheme(scheme_path) if scheme_path else None
    transitions = None
    if family == "local_global_subcat":
        if scheme is None:
            raise UsageFailure("--family local_global_subcat requires --scheme")
        transitions = corpus.category_transitions(bank, scheme, coding)
    axis = None
    if grid is not None:
        try:
            axis = [float(v) for v in grid.split(",") if v.strip()]
        except ValueError:
            raise UsageFailure(f"--grid values must be numeric: {grid!r}") from None
    result = fit_mod.fit_betas(
        family, net, transitions, scheme, bank, grid_spec=axis, coding=coding
    )
    result.to_json(output)
    click.echo(
        f"best betas ({family}): l={result.weights.beta_local} "
        f"g={result.weights.beta_global} c={result.weights.beta_subcat} "
        f"loglik={result.loglik:.4f}"
    )


@cli.command("export-paths")
@_config_option
@click.option("--gens", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--scheme", "scheme_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--coding", "coding_name", type=CODING_CHOICES, default="chained",
              show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
def cmd_export_paths(gens, scheme_path, coding_name, output):
    """Export (step, exemplar, category) rows per run for external plotting."""
    bank = corpus.load_runs(gens)
    scheme = corpus.load_scheme(scheme_path)
    coding = _coding(coding_name)
    with open(output, "w") as fh:
        fh.write("participant,step,exemplar,category\n")
        for run in bank.runs:
            coded = corpus.code_sequence(run.items, scheme, coding)
            for step, (item, code) in enumerate(zip(run.items, coded), start=1):
                name = (
                    scheme.categories[code]
                    if isinstance(code, int)
                    else f"unmapped:{code[1]}"
                )
                fh.write(f"{run.participant},{step},{item},{name}\n")
    click.echo(f"wrote coded paths for {len(bank.runs)} runs to {output}")


def main(argv=None):
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        _emit_error("usage", 2, exc.format_message())
        sys.exit(2)
    except click.ClickException as exc:
        _emit_error("usage", 2, exc.format_message())
        sys.exit(2)
    except FluencyError as exc:
        _emit_error(exc.kind, exc.exit_code, str(exc))
        sys.exit(exc.exit_code)


if __name__ == "__main__":
    main()
