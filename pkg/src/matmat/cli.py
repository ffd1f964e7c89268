"""Command-line interface: train, eval, sweep, and footprint subcommands.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 training divergence (train command only).
"""

from __future__ import annotations

import argparse
import os
import sys

from . import dataset
from .errors import ConfigError, DataError, DivergenceError, MetricError
from .factorization import (
    ClassicModel,
    MatMatModel,
    TrainConfig,
    load_model,
    save_model,
    train_classic,
    train_matmat,
)
from .harness import (
    ALGORITHMS,
    DEFAULT_GRID,
    ExperimentConfig,
    emit_charts,
    emit_csv,
    evaluate,
    footprint_command,
    matmat_block_spec,
    run_experiment,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="matmat", description="Matrix factorization with matrix-valued targets.")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one model and save it")
    train.add_argument("--data", required=True, help="ratings CSV path")
    train.add_argument("--algo", required=True, choices=ALGORITHMS)
    train.add_argument("--lr", type=float, default=0.01, help="SGD learning rate")
    train.add_argument("--epochs", type=int, default=30)
    train.add_argument("--d", type=int, default=2, help="latent dimension")
    train.add_argument("--t", type=int, default=2, help="block side length (matmat)")
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--test-fraction", type=float, default=0.1,
                       help="held-out fraction excluded from training")
    train.add_argument("--l2", type=float, default=0.0)
    train.add_argument("--init-std", type=float, default=0.1)
    train.add_argument("--out", required=True, help="model output path")

    evl = sub.add_parser("eval", help="evaluate a saved model on the held-out split")
    evl.add_argument("--data", required=True)
    evl.add_argument("--model", required=True)
    evl.add_argument("--test-fraction", type=float, default=0.1)
    evl.add_argument("--seed", type=int, default=0)
    evl.add_argument("--k", type=int, default=10, help="list length for the Matthew degree")

    sweep = sub.add_parser("sweep", help="learning-rate sweep with CSV and charts")
    sweep.add_argument("--data", required=True)
    sweep.add_argument("--grid", default=",".join(str(x) for x in DEFAULT_GRID),
                       help="comma-separated learning rates")
    sweep.add_argument("--algos", default=",".join(ALGORITHMS),
                       help="comma-separated algorithm names")
    sweep.add_argument("--epochs", type=int, default=30)
    sweep.add_argument("--d", type=int, default=2)
    sweep.add_argument("--t", type=int, default=2)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--test-fraction", type=float, default=0.1)
    sweep.add_argument("--k", type=int, default=10)
    sweep.add_argument("--l2", type=float, default=0.0)
    sweep.add_argument("--init-std", type=float, default=0.1)
    sweep.add_argument("--out-dir", required=True)

    foot = sub.add_parser("footprint", help="tensor vs factor storage comparison")
    foot.add_argument("--users", type=int, required=True)
    foot.add_argument("--items", type=int, required=True)
    foot.add_argument("--t", type=int, default=2)
    foot.add_argument("--d", type=int, default=2)
    foot.add_argument("--bytes", type=int, default=8, help="bytes per stored value")

    return parser


def _cmd_train(args) -> int:
    records = dataset.load_ratings(args.data)
    table = dataset.build_interactions(records)
    split = dataset.split(table, args.test_fraction, args.seed)
    config = TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, d=args.d, seed=args.seed,
        init_std=args.init_std, l2=args.l2,
    )
    if args.algo == "matmat":
        pop = dataset.compute_popularity(table)
        model, trace = train_matmat(table, pop, matmat_block_spec(args.t), split, config)
    else:
        model, trace = train_classic(table, split, config)
    save_model(model, args.out)
    print(f"trained {args.algo} on {len(split.train)} ratings "
          f"({table.n_users} users, {table.n_items} items)")
    print(f"final training loss: {trace.per_epoch[-1]:.6f}")
    print(f"model written to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    model = load_model(args.model)
    records = dataset.load_ratings(args.data)
    table = dataset.build_interactions(records)
    n_users = model.U.shape[0] if isinstance(model, MatMatModel) else model.P.shape[0]
    n_items = model.V.shape[0] if isinstance(model, MatMatModel) else model.Q.shape[0]
    if (n_users, n_items) != (table.n_users, table.n_items):
        raise DataError(
            f"model was trained on {n_users} users x {n_items} items, "
            f"but {args.data} has {table.n_users} x {table.n_items}"
        )
    split = dataset.split(table, args.test_fraction, args.seed)
    algorithm = "matmat" if isinstance(model, MatMatModel) else "classic"
    report = evaluate(model, table, split, args.k, algorithm, float("nan"), args.seed)
    print(f"algorithm={report.algorithm}")
    print(f"mae={report.mae:.6f}")
    print(f"rmse={report.rmse:.6f}")
    print(f"matthew_degree={report.matthew_degree:.6f}")
    print(f"n_test={report.n_test}")
    print(f"n_cold={report.n_cold}")
    return 0


def _cmd_sweep(args) -> int:
    try:
        grid = tuple(float(x) for x in args.grid.split(",") if x.strip())
        algos = tuple(x.strip() for x in args.algos.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"bad grid value: {exc}") from exc
    config = ExperimentConfig(
        data_path=args.data, algorithms=algos, grid=grid, epochs=args.epochs,
        d=args.d, t=args.t, seed=args.seed, test_fraction=args.test_fraction,
        k=args.k, init_std=args.init_std, l2=args.l2, out_dir=args.out_dir,
    )
    result = run_experiment(config)
    os.makedirs(args.out_dir, exist_ok=True)
    csv_path = emit_csv(result, os.path.join(args.out_dir, "sweep.csv"))
    chart_paths = emit_charts(result, args.out_dir)
    for path in [csv_path, *chart_paths]:
        print(f"wrote {path}")
    return 0


def _cmd_footprint(args) -> int:
    footprint_command(args.users, args.items, args.t, args.d, args.bytes)
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "footprint": _cmd_footprint,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, MetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
