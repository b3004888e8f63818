"""Command-line front end.

Four subcommands cover the full loop:

* ``generate`` draws ancestral samples from a graph file into a dataset CSV;
* ``train`` fits a graph's trainable blocks to a dataset and writes the
  likelihood trajectory, learned graphs, and optional extras;
* ``eval`` scores a dataset under a graph without touching its parameters;
* ``experiment`` runs one of the built-in studies end to end.

Every handled error exits nonzero with a single categorized line on stderr.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .graph import GraphError, graph_digest, load_graph, save_graph
from .learning import ALGORITHMS, TrainConfig, em_train
from .propagation import ContradictoryEvidence, Propagator, aggregated_log_likelihood
from .synthgen import ancestral_sample
from . import experiments as exp

__all__ = ["main", "build_parser"]


def _algorithms(value: str) -> tuple[str, ...]:
    if value == "all":
        return ALGORITHMS
    if value in ALGORITHMS:
        return (value,)
    raise argparse.ArgumentTypeError(f"unknown algorithm {value!r}")


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--algo", type=_algorithms, default=None, metavar="NAME",
                        help="ml, kl, vit, var, or all")
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--nit", type=int, default=3,
                        help="per-epoch update count for the iterative rules")
    parser.add_argument("--delta", type=float, default=1e-6,
                        help="pseudocount floor for the batch rules")
    parser.add_argument("--split", type=float, default=1.0,
                        help="leading fraction of samples used for training")
    parser.add_argument("--tol", type=float, default=None,
                        help="stop early once the train loglik moves less than this")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--dump-coefficients", action="store_true",
                        help="also write per-epoch parameter snapshots")
    parser.add_argument("--emit-plot", action="store_true",
                        help="also write a gnuplot script next to the results")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="normalgraph",
        description="Belief propagation and local parameter learning on "
                    "discrete normal-form factor graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="sample a dataset from a graph")
    p_gen.add_argument("--graph", required=True)
    p_gen.add_argument("--n", type=int, default=400, help="number of samples")
    p_gen.add_argument("--seed", type=int, default=1)
    p_gen.add_argument("--out", required=True, help="dataset CSV path")
    p_gen.set_defaults(func=cmd_generate)

    p_train = sub.add_parser("train", help="fit a graph's trainable blocks to a dataset")
    p_train.add_argument("--graph", required=True)
    p_train.add_argument("--data", required=True, help="dataset CSV path")
    p_train.add_argument("--out", required=True, help="results CSV path")
    _add_train_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="score a dataset under a graph as-is")
    p_eval.add_argument("--graph", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--split", type=float, default=1.0)
    p_eval.add_argument("--out", default=None, help="optional one-row CSV")
    p_eval.set_defaults(func=cmd_eval)

    p_exp = sub.add_parser("experiment", help="run a built-in study")
    p_exp.add_argument("name", choices=["single-block", "tree", "deep", "nit-sweep"])
    p_exp.add_argument("--out", required=True, help="output directory")
    p_exp.add_argument("--n", type=int, default=None, help="sample count override")
    p_exp.add_argument("--ms-override", type=int, default=None, metavar="M",
                       help="latent alphabet size for the learned star")
    p_exp.add_argument("--iterations", type=int, default=100,
                       help="single-block update count")
    p_exp.add_argument("--sharp-in", type=float, default=1.0,
                       help="single-block input sharpening exponent")
    p_exp.add_argument("--sharp-out", type=float, default=1.0,
                       help="single-block output sharpening exponent")
    _add_train_flags(p_exp)
    p_exp.set_defaults(func=cmd_experiment)

    return parser


def _load_evidence(graph, data_path):
    columns, meta = exp.load_samples(data_path)
    terminals = set(graph.terminals())
    unknown = sorted(set(columns) - terminals)
    if unknown:
        raise ValueError(
            f"{data_path}: columns {unknown} are not terminals of the graph "
            f"(terminals: {sorted(terminals)})"
        )
    sizes = graph.sizes
    for name, values in columns.items():
        if values.size and int(values.max()) >= sizes[name]:
            raise ValueError(
                f"{data_path}: column {name} holds symbol {int(values.max()) + 1} "
                f"but the variable has {sizes[name]} states"
            )
    return columns, meta


def cmd_generate(args) -> int:
    graph = load_graph(args.graph)
    samples = ancestral_sample(graph, args.n, seed=args.seed)
    exp.save_samples(samples, args.out, graph=graph)
    print(f"wrote {args.n} samples of {','.join(samples.columns)} to {args.out}")
    return 0


def cmd_train(args) -> int:
    graph = load_graph(args.graph)
    evidence, _ = _load_evidence(graph, args.data)
    n = len(next(iter(evidence.values())))
    mask = exp.split_mask(n, args.split)
    out = Path(args.out)
    stem = out.parent / out.stem
    algorithms = args.algo if args.algo is not None else ALGORITHMS
    epochs = args.epochs if args.epochs is not None else 60

    reports = {}
    for algorithm in algorithms:
        cfg = TrainConfig(
            algorithm=algorithm,
            epochs=epochs,
            nit=args.nit,
            delta=args.delta,
            seed=args.seed,
            tol=args.tol,
            record_coefficients=args.dump_coefficients,
        )
        try:
            report = em_train(graph, evidence, cfg, mask)
        except ContradictoryEvidence as error:
            raise ContradictoryEvidence(
                f"{error} (the {algorithm} rule can assign zero probability to "
                f"symbols absent from the training split; use vit or var, or "
                f"train on the full data)"
            ) from None
        reports[algorithm] = report
        save_graph(report.graph, f"{stem}.{algorithm}.learned.json")

    meta = {"seed": args.seed, "graph": graph_digest(graph), "split": args.split}
    exp.write_training_rows(reports, out, include_test=args.split < 1.0, meta=meta)
    if args.dump_coefficients:
        exp.write_coefficient_rows(reports, f"{stem}.coefficients.csv", meta=meta)
    if args.emit_plot:
        y_columns = ("train_loglik", "test_loglik") if args.split < 1.0 else ("train_loglik",)
        exp.write_plot_script(f"{stem}.gp", out.name, "epoch", y_columns,
                              title="training trajectory")
    for algorithm, report in reports.items():
        print(f"{algorithm}: final train loglik {report.final_train_loglik:.6f}")
    return 0


def cmd_eval(args) -> int:
    graph = load_graph(args.graph)
    evidence, _ = _load_evidence(graph, args.data)
    n = len(next(iter(evidence.values())))
    mask = exp.split_mask(n, args.split)
    state = Propagator(graph).run(evidence, n_samples=n)
    terminals = tuple(evidence)
    train = aggregated_log_likelihood(state, terminals, mask > 0)
    line = f"train_loglik={exp.format_float(train)}"
    test = None
    if args.split < 1.0:
        test = aggregated_log_likelihood(state, terminals, mask <= 0)
        line += f" test_loglik={exp.format_float(test)}"
    print(line)
    if args.out:
        header = ["train_loglik"] + (["test_loglik"] if test is not None else [])
        values = [exp.format_float(train)] + ([exp.format_float(test)] if test is not None else [])
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n" + ",".join(values) + "\n")
    return 0


def _experiment_config(args, n_default: int, epochs_default: int) -> exp.GraphExperimentConfig:
    return exp.GraphExperimentConfig(
        n_samples=args.n if args.n is not None else n_default,
        epochs=args.epochs if args.epochs is not None else epochs_default,
        nit=args.nit,
        delta=args.delta,
        split=args.split,
        seed=args.seed,
        tol=args.tol,
        algorithms=args.algo if args.algo is not None else ALGORITHMS,
        record_coefficients=args.dump_coefficients,
    )


def cmd_experiment(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.name == "single-block":
        cfg = exp.SingleBlockConfig(
            n_samples=args.n if args.n is not None else 400,
            sharp_in=args.sharp_in,
            sharp_out=args.sharp_out,
            iterations=args.iterations,
            delta=args.delta,
            seed=args.seed,
        )
        rows = exp.run_single_block(cfg)
        results = out_dir / "single_block.csv"
        exp.write_block_rows(rows, results, meta={"seed": cfg.seed})
        if args.emit_plot:
            exp.write_plot_script(out_dir / "single_block.gp", results.name,
                                  "iteration", ("loglik",), title="single block")
        finals = {a: ll for a, _, ll in rows}
        for algorithm in (*ALGORITHMS, "ref"):
            print(f"{algorithm}: final loglik {finals[algorithm]:.6f}")
        return 0

    if args.name == "nit-sweep":
        cfg = _experiment_config(args, n_default=400, epochs_default=60)
        if args.algo is None:
            cfg = replace(cfg, algorithms=("ml",))
        if args.ms_override is not None:
            cfg = replace(cfg, m_latent=args.ms_override)
        rows = exp.run_nit_sweep(cfg)
        results = out_dir / "nit_sweep.csv"
        with open(results, "w", encoding="utf-8") as fh:
            fh.write(f"# seed: {cfg.seed}\n")
            fh.write("nit,repetition,algorithm,final_train_loglik\n")
            for nit, rep, algorithm, loglik in rows:
                fh.write(f"{nit},{rep},{algorithm},{exp.format_float(loglik)}\n")
        print(f"wrote {len(rows)} sweep rows to {results}")
        return 0

    if args.name == "tree":
        cfg = _experiment_config(args, n_default=400, epochs_default=60)
        if args.ms_override is not None:
            cfg = replace(cfg, m_latent=args.ms_override)
        reports = exp.run_tree_experiment(cfg)
        results = out_dir / "tree.csv"
    else:
        cfg = _experiment_config(args, n_default=100, epochs_default=600)
        reports = exp.run_deep_experiment(cfg)
        results = out_dir / "deep.csv"

    meta = {"seed": cfg.seed, "split": cfg.split, "m_latent": cfg.m_latent}
    exp.write_training_rows(reports, results, include_test=cfg.split < 1.0, meta=meta)
    for algorithm, report in reports.items():
        save_graph(report.graph, out_dir / f"{results.stem}.{algorithm}.learned.json")
    if args.dump_coefficients:
        exp.write_coefficient_rows(reports, out_dir / f"{results.stem}.coefficients.csv",
                                   meta=meta)
    if args.emit_plot:
        y_columns = ("train_loglik", "test_loglik") if cfg.split < 1.0 else ("train_loglik",)
        exp.write_plot_script(out_dir / f"{results.stem}.gp", results.name,
                              "epoch", y_columns, title=f"{args.name} training")
    for algorithm, report in reports.items():
        print(f"{algorithm}: final train loglik {report.final_train_loglik:.6f}")
    return 0


# Order matters: the most specific exception types come first.
_ERROR_CATEGORIES = (
    (ContradictoryEvidence, "evidence"),
    (GraphError, "graph"),
    (OSError, "io"),
    (ValueError, "data"),
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except tuple(t for t, _ in _ERROR_CATEGORIES) as error:
        category = next(c for t, c in _ERROR_CATEGORIES if isinstance(error, t))
        print(f"error: {category}: {error}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
