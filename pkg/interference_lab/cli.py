"""The ``interference-lab`` console script."""

import argparse
import json
import logging
import sys
from typing import List, Optional

import numpy as np

from interference_lab import set_file_logger, set_stream_logger
from interference_lab.api import Client
from interference_lab.errors import ConfigurationError, InterferenceLabError
from interference_lab.models.estimates import Estimand
from interference_lab.models.experiments import ExperimentConfig, RunMode
from interference_lab.models.graphs import GraphFamily
from interference_lab.signature import SeedStreams

logger = logging.getLogger("interference_lab.cli")


def _parameter(text: str):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="interference-lab",
                                     description="Randomized experiments under network interference.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeatable)")
    parser.add_argument("--log-file", help="also write log records to this file")
    parser.add_argument("--enumeration-cap", type=int, default=None)
    parser.add_argument("--mc-samples", type=int, default=None)
    commands = parser.add_subparsers(dest="command", required=True)

    for name, help in (("run", "evaluate every strategy of an experiment"),
                       ("exact", "evaluate every strategy by exact enumeration")):
        command = commands.add_parser(name, help=help)
        command.add_argument("--config", required=True)
        command.add_argument("--output", required=True)
        command.add_argument("--format", choices=("csv", "json"), default="csv")
        command.add_argument("--workers", type=int, default=None)

    command = commands.add_parser("propensity", help="write a strategy's propensity table")
    command.add_argument("--config", required=True)
    command.add_argument("--strategy", required=True, help="strategy id from the configuration")
    command.add_argument("--method", default="auto", choices=("auto", "analytic", "enumerated", "monte_carlo"))
    command.add_argument("--output", required=True)

    command = commands.add_parser("analytic", help="closed-form bias and variance next to the exact oracle")
    command.add_argument("--config", required=True)
    command.add_argument("--strategy", required=True)
    command.add_argument("--report", required=True,
                         choices=("naive-bias", "cell-bias", "linear-bias", "linear-variance", "shrinkage"))

    command = commands.add_parser("graph", help="draw a random graph and write its edge list")
    command.add_argument("--family", required=True, choices=[f.code for f in GraphFamily])
    command.add_argument("--n", type=int, required=True)
    command.add_argument("--param", type=_parameter, action="append", default=[], help="family parameter key=value")
    command.add_argument("--seed", type=int, default=0)
    command.add_argument("--output", required=True)

    command = commands.add_parser("plot", help="render bias, variance and MSE from a results file")
    command.add_argument("--results", required=True)
    command.add_argument("--output", required=True)
    command.add_argument("--title", default=None)
    return parser


def _configure_logging(args):
    level = (logging.WARNING, logging.INFO)[args.verbose] if args.verbose < 2 else logging.DEBUG
    set_stream_logger("interference_lab", level)
    if args.log_file:
        set_file_logger("interference_lab", args.log_file, level)


def _client(args) -> Client:
    settings = {}
    if args.enumeration_cap is not None:
        settings["enumeration_cap"] = args.enumeration_cap
    if args.mc_samples is not None:
        settings["mc_samples"] = args.mc_samples
    return Client(**settings)


def _load(args) -> ExperimentConfig:
    config = ExperimentConfig.from_yaml(args.config)
    if getattr(args, "workers", None):
        config = config.replace(workers=args.workers)
    return config


def _strategy_inputs(client: Client, config: ExperimentConfig, strategy_id: str):
    strategies = {s.id: s for s in config.strategies}
    if strategy_id not in strategies:
        raise ConfigurationError(f"no strategy {strategy_id!r}; known: {', '.join(strategies)}")
    harness = client.harness
    g = harness.build_graph(config)
    t = harness.build_outcomes(config, g)
    d = harness.build_design(strategies[strategy_id].design, g, config.exposure_model, SeedStreams(config.seed))
    return g, t, d


def _experiment(client: Client, args, mode: Optional[RunMode] = None) -> None:
    config = _load(args)
    if mode is not None:
        config = config.with_mode(mode)
    client.run(config, output=args.output, format=args.format)


def _propensity(client: Client, args) -> None:
    config = ExperimentConfig.from_yaml(args.config)
    g, _, d = _strategy_inputs(client, config, args.strategy)
    model = config.exposure_model
    table = client.propensity.propensities(d, g, model, method=args.method, samples=config.propensity_samples,
                                           seed=SeedStreams(config.seed).generator(f"propensity|{args.strategy}"))
    client.propensity.write_propensities(table, args.output, client.exposures.level_counts(model, g))


def _analytic(client: Client, args) -> dict:
    config = ExperimentConfig.from_yaml(args.config)
    g, t, d = _strategy_inputs(client, config, args.strategy)
    model, level = config.exposure_model, config.exposed_level
    estimand = Estimand.DTE if config.estimand.is_marginal else config.estimand.estimand
    analytic = client.analytic
    if args.report == "naive-bias":
        return analytic.bias_naive_general(t, d, g, model, estimand, level).to_dict()
    if args.report == "cell-bias":
        return analytic.expected_cell_dim(t, d, g, model, estimand, level).to_dict()
    if args.report == "shrinkage":
        return analytic.ht_shrinkage(d, g, model, t, estimand, level).to_dict()
    gamma = float(np.nanmax(t.B[:, 1])) if t.B.shape[1] > 1 else 0.0
    if args.report == "linear-bias":
        return {"bias": analytic.bias_linear(d, g, gamma), "gamma": gamma}
    n_t = getattr(d, "n_t", None)
    if n_t is None:
        raise ConfigurationError("linear-variance needs a completely randomized design")
    return {"variance": analytic.var_naive_linear_crd(g, n_t, gamma, 0.0),
            "exact_variance": analytic.var_naive_linear_crd_exact(g, n_t, gamma, 0.0), "gamma": gamma}


def _graph(client: Client, args) -> None:
    model = dict(args.param, family=args.family)
    g = client.graphs.generate_graph(model, args.n, seed=args.seed)
    client.graphs.write_edge_list(g, args.output)
    logger.info(f"wrote {g.edge_count} edges on {g.n} units to {args.output}")


def _plot(client: Client, args) -> None:
    from interference_lab.plotting import plot_results

    plot_results(client.harness.read_results(args.results), args.output, title=args.title)


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    _configure_logging(args)
    try:
        client = _client(args)
        if args.command == "run":
            _experiment(client, args)
        elif args.command == "exact":
            _experiment(client, args, RunMode.EXACT)
        elif args.command == "propensity":
            _propensity(client, args)
        elif args.command == "analytic":
            print(json.dumps(_analytic(client, args), indent=2, sort_keys=True, default=float))
        elif args.command == "graph":
            _graph(client, args)
        else:
            _plot(client, args)
    except InterferenceLabError as e:
        logger.error(str(e))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
