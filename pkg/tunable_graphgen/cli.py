"""
Command-line front end: sample, train, generate and evaluate.

Exit codes: 0 success (also partial generation, with a warning), 1 usage or
configuration error, 2 data error, 3 training divergence.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

from pydantic import ValidationError

from . import __version__
from .config import RunConfig, dump_run_config, load_run_config
from .dataset import (
    build_manifest,
    load_edge_list,
    load_manifest,
    sample_induced_subgraphs,
    save_manifest,
    synthetic_graphs,
)
from .errors import ConfigError, DivergenceError, EmptyDatasetError, TunableGraphError
from .evaluation import (
    comparison_frame,
    evaluate,
    generate,
    kde,
    plot_kde,
    write_evaluation,
    write_report,
)
from .graph import FEATURE_FUNCTIONS
from .model import load_checkpoint, save_checkpoint
from .training import configure_for_manifest, train_alternate
from .utils import configure_logging, format_condition, list_graph_files

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGENCE = 3

Condition = Union[float, Dict[str, float]]


class UsageError(Exception):
    """Raised by the argument parser instead of exiting."""


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def parse_condition(text: str) -> Condition:
    """
    Parse '3.0' or 'aspl=3.0,clustering=0.2'.

    Raises:
        argparse.ArgumentTypeError: On malformed input
    """
    try:
        if "=" not in text:
            return float(text)
        values = {}
        for item in text.split(","):
            name, value = item.split("=", 1)
            values[name.strip()] = float(value)
        return values
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid condition {text!r}")


def _with_overrides(config: RunConfig, overrides: Mapping[str, Mapping[str, Any]],
                    seed: Optional[int] = None) -> RunConfig:
    data = config.model_dump(mode="json")
    for section, values in overrides.items():
        data[section].update({k: v for k, v in values.items() if v is not None})
    if seed is not None:
        data["seed"] = seed
        data["train"]["seed"] = seed
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid option: {e}")


def cmd_sample(args: argparse.Namespace) -> int:
    """Build a training manifest from a corpus or the synthetic mixture."""
    config = _with_overrides(
        load_run_config(args.config),
        {"dataset": {
            "corpus": args.corpus,
            "source": "synthetic" if args.synthetic else ("corpus" if args.corpus else None),
            "size_min": args.size_min,
            "size_max": args.size_max,
        }},
        seed=args.seed,
    )
    if args.count is not None:
        if args.count < 1:
            raise EmptyDatasetError(f"count must be at least 1, got {args.count}")
        config.dataset.count = args.count
    dataset = config.dataset
    if dataset.source == "synthetic":
        graphs = synthetic_graphs(
            dataset.count, dataset.size_min, dataset.size_max, config.seed,
            aspl_bounds=dataset.aspl_bounds,
        )
    else:
        if dataset.corpus is None:
            raise ConfigError("no corpus given; pass --corpus or --synthetic")
        corpus = load_edge_list(dataset.corpus)
        graphs = sample_induced_subgraphs(
            corpus, dataset.count, dataset.size_min, dataset.size_max, config.seed,
            max_retries=dataset.max_retries,
        )
    manifest = build_manifest(graphs, config.feature_order, headroom=dataset.headroom)
    path = save_manifest(manifest, args.out)
    dump_run_config(config, path.parent)
    logger.info("wrote %d records to %s", len(manifest), path)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    """Run alternate training, checkpointing at every phase boundary."""
    config = _with_overrides(
        load_run_config(args.config),
        {"train": {"feature_loss_weight": args.feature_loss_weight}},
        seed=args.seed,
    )
    manifest = load_manifest(args.manifest)
    if list(manifest.feature_order) != config.feature_order:
        raise ConfigError(
            f"manifest features {list(manifest.feature_order)} differ from "
            f"configured {config.feature_order}"
        )
    resume = load_checkpoint(args.resume) if args.resume else None
    mconfig = resume.model.config if resume else configure_for_manifest(config.model, manifest)
    config.model = mconfig
    scaler = resume.scaler if resume else manifest.scaler()

    out = Path(args.out)
    checkpoints = out / "checkpoints"
    dump_run_config(config, out)

    def on_phase_end(iteration, phase, model, training_state):
        save_checkpoint(
            checkpoints / f"iter-{iteration}-{phase}.pt", model, manifest.feature_order,
            scaler, training_state,
        )

    try:
        model, trace = train_alternate(
            manifest, mconfig, config.train, on_phase_end=on_phase_end, resume=resume
        )
    except DivergenceError as e:
        if e.trace is not None:
            e.trace.write_csv(out)
        raise
    trace.write_csv(out)
    save_checkpoint(checkpoints / "final.pt", model, manifest.feature_order, scaler)
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    """Generate graphs for each condition value and write their reports."""
    config = _with_overrides(
        load_run_config(args.config),
        {"generation": {
            "count": args.count,
            "temperature": args.temperature,
            "argmax": True if args.argmax else None,
        }},
        seed=args.seed,
    )
    checkpoint = load_checkpoint(args.checkpoint)
    conditions: Sequence[Condition] = args.conditions or config.generation.conditions
    config.generation.conditions = list(conditions)
    generation = config.generation
    out = Path(args.out)
    dump_run_config(config, out)

    kde_files = {}
    for condition in conditions:
        graphs, report = generate(
            checkpoint.model, checkpoint.scaler, condition, generation.count, config.seed,
            temperature=generation.temperature, argmax=generation.argmax,
            retry_factor=generation.retry_factor, batch_size=generation.batch_size,
        )
        label = format_condition(condition)
        directory = write_report(report, graphs, out / label)
        kde_files[label] = directory / "kde.csv"
    if args.plot:
        _plot(kde_files, out / "kde.png")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Evaluate graph directories and optionally compare them against targets."""
    config = load_run_config(args.config)
    feature_order = args.features or config.feature_order
    unknown = [name for name in feature_order if name not in FEATURE_FUNCTIONS]
    if unknown:
        raise ConfigError(f"unknown features {unknown}; choose from {sorted(FEATURE_FUNCTIONS)}")
    labels = args.labels or [Path(d).name for d in args.directories]
    if len(labels) != len(args.directories):
        raise ConfigError(f"{len(labels)} labels for {len(args.directories)} directories")
    targets: List[Optional[Condition]] = list(args.targets or [])
    if len(targets) == 1:
        targets = targets * len(args.directories)
    elif not targets:
        targets = [None] * len(args.directories)
    elif len(targets) != len(args.directories):
        raise ConfigError(f"{len(targets)} targets for {len(args.directories)} directories")

    out = Path(args.out)
    rows = []
    kde_files = {}
    for directory, label, target in zip(args.directories, labels, targets):
        files = list_graph_files(directory)
        graphs = [load_edge_list(f) for f in files]
        summary = evaluate(graphs, feature_order, target)
        grids = {name: kde([f[name] for f in summary.features]) for name in feature_order}
        write_evaluation(summary, grids, out / label)
        kde_files[label] = out / label / "kde.csv"
        rows.append((label, summary))
        logger.info("evaluated %d graphs in %s", len(summary.features), directory)
    if any(t is not None for t in targets):
        comparison_frame(rows).to_csv(out / "comparison.csv", index=False)
    if args.plot:
        _plot(kde_files, out / "kde.png")
    return EXIT_OK


def _plot(kde_files: Mapping[str, Path], out_path: Path) -> None:
    try:
        plot_kde(kde_files, out_path)
    except ImportError:
        raise ConfigError("--plot needs matplotlib; install the 'plot' extra")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="tunable-graphgen",
        description="Train and sample a graph generator tunable to target feature values",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    sample = commands.add_parser("sample", help="Build a training manifest")
    source = sample.add_mutually_exclusive_group()
    source.add_argument("--corpus", help="Edge-list file of the source network")
    source.add_argument("--synthetic", action="store_true",
                        help="Draw the synthetic path/cycle/small-world/random mixture")
    sample.add_argument("--count", type=int, help="Number of graphs")
    sample.add_argument("--size-min", type=int, help="Minimum nodes per graph")
    sample.add_argument("--size-max", type=int, help="Maximum nodes per graph")
    sample.add_argument("--seed", type=int)
    sample.add_argument("--config", help="Run configuration YAML")
    sample.add_argument("--out", required=True, help="Manifest file to write")
    sample.set_defaults(handler=cmd_sample)

    train = commands.add_parser("train", help="Alternate training")
    train.add_argument("--manifest", required=True)
    train.add_argument("--config", help="Run configuration YAML")
    train.add_argument("--out", required=True, help="Output directory")
    train.add_argument("--seed", type=int)
    train.add_argument("--feature-loss-weight", type=float,
                       help="Weight of the estimator feedback; 0 trains the baseline")
    train.add_argument("--resume", help="Phase checkpoint to continue from")
    train.set_defaults(handler=cmd_train)

    gen = commands.add_parser("generate", help="Generate graphs for condition values")
    gen.add_argument("--checkpoint", required=True)
    gen.add_argument("--conditions", nargs="+", type=parse_condition,
                     help="Values such as 3.0, or aspl=3.0,clustering=0.2")
    gen.add_argument("--count", type=int, help="Graphs per condition")
    gen.add_argument("--seed", type=int)
    decoding = gen.add_mutually_exclusive_group()
    decoding.add_argument("--temperature", type=float)
    decoding.add_argument("--argmax", action="store_true")
    gen.add_argument("--config", help="Run configuration YAML")
    gen.add_argument("--plot", action="store_true", help="Also render kde.png")
    gen.add_argument("--out", required=True, help="Output directory")
    gen.set_defaults(handler=cmd_generate)

    ev = commands.add_parser("evaluate", help="Score graph directories")
    ev.add_argument("directories", nargs="+")
    ev.add_argument("--labels", nargs="+")
    ev.add_argument("--targets", nargs="+", type=parse_condition,
                    help="One target for all directories or one per directory")
    ev.add_argument("--features", nargs="+", help="Features to score (default: config)")
    ev.add_argument("--config", help="Run configuration YAML")
    ev.add_argument("--plot", action="store_true", help="Also render kde.png")
    ev.add_argument("--out", required=True, help="Output directory")
    ev.set_defaults(handler=cmd_evaluate)
    return parser


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one subcommand.

    Args:
        argv: Arguments without the program name; sys.argv when None

    Returns:
        Process exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        return _fail(EXIT_USAGE, str(e))
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except ConfigError as e:
        return _fail(EXIT_USAGE, str(e))
    except DivergenceError as e:
        return _fail(EXIT_DIVERGENCE, str(e))
    except (TunableGraphError, FileNotFoundError) as e:
        return _fail(EXIT_DATA, str(e))


def start():
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    start()
