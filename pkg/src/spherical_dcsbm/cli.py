"""Command-line interface.

Subcommands read and write the CSV/JSON formats of :mod:`spherical_dcsbm.export`.
``m`` (``--dim-m``) always counts angle columns; Cartesian embeddings carry
``m + 1`` columns.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import export
from .evaluate import adjusted_rand_index, ks_gaussian_score, mardia_tests, paired_sign_test
from .graph import MODES, load_edge_list
from .mixture import bic, fit_constrained_em, select_model
from .pipeline import EXPERIMENTS, UsageError, embed_graph, run_algorithm1, run_experiment
from .simulate import PROTOCOLS, BlockModelSpec, protocol_spec, sample
from .spherical import transform_embedding

logger = logging.getLogger("spherical_dcsbm")


def _global_options(suppress=False):
    # subcommands repeat the global flags with suppressed defaults so a value
    # given before the subcommand is not reset by it
    def default(value):
        return argparse.SUPPRESS if suppress else value

    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=default(0))
    p.add_argument("--threads", type=int, default=default(1),
                   help="parallel workers for grid cells")
    p.add_argument("--out-dir", type=Path, default=default(Path(".")))
    p.add_argument("--config", type=Path, default=default(None),
                   help="JSON file whose keys override command-line flags")
    p.add_argument("-v", "--verbose", action="store_true", default=default(False))
    return p


def _dimension_options(p):
    p.add_argument("--dim-m", type=int, help="number of angle columns m (embedding has m + 1)")
    p.add_argument("--elbow", type=int, default=3, help="scree elbow used when --dim-m is absent")
    p.add_argument("--n-spectrum", type=int, default=25)


def _fit_options(p):
    p.add_argument("--kmax", type=int, default=6)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spherical-dcsbm", parents=[_global_options()],
                                     description="Spectral clustering of degree-corrected "
                                                 "blockmodels on spherical coordinates.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _global_options(suppress=True)

    p = sub.add_parser("embed", parents=[common], help="spectral embedding of an edge list")
    p.add_argument("graph", type=Path)
    p.add_argument("--mode", choices=MODES, default="undirected")
    _dimension_options(p)

    p = sub.add_parser("transform", parents=[common], help="embedding CSV to angles CSV")
    p.add_argument("embedding", type=Path)
    p.add_argument("--atol", type=float, default=1e-10)

    p = sub.add_parser("fit", parents=[common], help="one constrained EM fit")
    p.add_argument("angles", type=Path)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--noise-mean", type=float, default=float(np.pi))
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)

    p = sub.add_parser("select", parents=[common], help="BIC grid search and labels")
    p.add_argument("input", type=Path, help="angles CSV, or an edge list with --graph")
    p.add_argument("--graph", action="store_true", help="treat input as an edge list and run "
                                                        "the whole pipeline")
    p.add_argument("--mode", choices=MODES, default="undirected")
    _dimension_options(p)
    _fit_options(p)

    p = sub.add_parser("simulate", parents=[common], help="sample a graph with ground truth")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--spec", type=Path, help="JSON block-model spec")
    group.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--name", default="graph")

    p = sub.add_parser("experiment", parents=[common], help="run a replication study")
    p.add_argument("name", help=f"one of: {', '.join(EXPERIMENTS)}")
    p.add_argument("--N", type=int, default=10)
    p.add_argument("--param", action="append", default=[], metavar="KEY=JSON",
                   help="study parameter, e.g. --param m=10 --param 'n_values=[100,200]'")

    p = sub.add_parser("evaluate", parents=[common], help="clustering and normality diagnostics")
    ev = p.add_subparsers(dest="metric", required=True)
    q = ev.add_parser("ari", help="adjusted Rand index of two labelings")
    q.add_argument("labels", type=Path)
    q.add_argument("truth", type=Path, help="labels CSV or simulation truth JSON")
    q = ev.add_parser("mardia", help="Mardia tests per label group")
    q.add_argument("data", type=Path)
    q.add_argument("--labels", type=Path)
    q.add_argument("--columns", type=int, help="use only the first columns")
    q = ev.add_parser("ks", help="Gaussian KS score per column")
    q.add_argument("data", type=Path)
    q = ev.add_parser("sign", help="sign test on a one-column CSV of differences")
    q.add_argument("data", type=Path)
    q.add_argument("--alternative", choices=("greater", "less", "two-sided"), default="greater")
    return parser


def apply_config(args: argparse.Namespace) -> argparse.Namespace:
    """Overwrite parsed flags with the keys of ``--config`` (dashes or underscores)."""
    if args.config is None:
        return args
    cfg = json.loads(Path(args.config).read_text())
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise UsageError(f"config key {key!r} is not an option of {args.command!r}")
        if isinstance(getattr(args, dest), Path) and value is not None:
            value = Path(value)
        setattr(args, dest, value)
    return args


def _emit(obj):
    print(json.dumps(obj, indent=2, default=str))


def cmd_embed(args):
    g = load_edge_list(args.graph, args.mode)
    m, _, parts = embed_graph(g, args.dim_m, args.elbow, args.n_spectrum, args.seed)
    out = []
    for e in parts:
        labels = g.col_labels if e.side == "right" and g.mode == "bipartite" else g.row_labels
        name = "embedding.csv" if e.side == "single" else f"embedding_{e.side}.csv"
        out.append(str(export.write_embedding(e, args.out_dir / name, labels)))
    _emit({"m": m, "embedding_columns": m + 1, "files": out})


def cmd_transform(args):
    e = export.read_embedding(args.embedding)
    theta = transform_embedding(e, atol=args.atol)
    path = export.write_angles(theta, args.out_dir / f"{args.embedding.stem}_angles.csv")
    _emit({"file": str(path), "n_kept": theta.n, "n_excluded": int(theta.excluded.size)})


def cmd_fit(args):
    theta = export.read_angles(args.angles)
    fit = fit_constrained_em(theta, args.d, args.K, max_iter=args.max_iter, tol=args.tol,
                             seed=args.seed, noise_mean=args.noise_mean)
    out = {"log_likelihood": fit.log_likelihood, "bic": bic(theta, fit, args.d, args.K),
           "n_iter": fit.n_iter, "converged": fit.converged, "params": fit.params.to_dict()}
    path = args.out_dir / "fit.json"
    path.write_text(json.dumps(out, indent=2))
    _emit({"file": str(path), "log_likelihood": fit.log_likelihood, "bic": out["bic"]})


def cmd_select(args):
    written = {}
    if args.graph:
        g = load_edge_list(args.input, args.mode)
        res = run_algorithm1(g, m=args.dim_m, K_star=args.kmax, restarts=args.restarts,
                             seed=args.seed, elbow=args.elbow, n_spectrum=args.n_spectrum,
                             max_iter=args.max_iter, tol=args.tol, n_jobs=args.threads)
        sides = [res] if g.mode == "undirected" else list(res)
        for s in sides:
            labels = g.col_labels if s.side == "right" and g.mode == "bipartite" else g.row_labels
            stem = "selection" if s.side == "single" else f"selection_{s.side}"
            export.write_selection(s.selection, args.out_dir / f"{stem}.json",
                                   args.out_dir / f"{stem}_labels.csv", labels)
            written[s.side] = {"m": s.m, "d_hat": s.selection.d_hat, "K_hat": s.selection.K_hat}
    else:
        theta = export.read_angles(args.input)
        sel = select_model(theta, args.kmax, restarts=args.restarts, seed=args.seed,
                           max_iter=args.max_iter, tol=args.tol, n_jobs=args.threads)
        export.write_selection(sel, args.out_dir / "selection.json",
                               args.out_dir / "selection_labels.csv")
        written["single"] = {"d_hat": sel.d_hat, "K_hat": sel.K_hat}
    _emit(written)


def cmd_simulate(args):
    rng = np.random.default_rng(args.seed)
    if args.spec is not None:
        spec = BlockModelSpec.from_dict(json.loads(args.spec.read_text()))
    else:
        spec = protocol_spec(args.protocol, rng)
    g, truth = sample(spec, seed=rng if args.spec is None else args.seed)
    path = export.write_simulation(g, truth, spec, args.out_dir / f"{args.name}.tsv")
    _emit({"file": str(path), "truth": str(export.sidecar(path)), "n_edges": g.n_edges,
           "mode": g.mode})


def _parse_params(items):
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        out[key] = tuple(parsed) if isinstance(parsed, list) else parsed
    return out


def cmd_experiment(args):
    params = _parse_params(args.param) if isinstance(args.param, list) else dict(args.param)
    report = run_experiment(args.name, args.N, seed=args.seed, out_dir=args.out_dir, **params)
    _emit({"csv": str(args.out_dir / f"{args.name}.csv"),
           "json": str(args.out_dir / f"{args.name}.json"), "n_rows": len(report.rows)})


def cmd_evaluate(args):
    if args.metric == "ari":
        _emit({"ari": adjusted_rand_index(export.read_labels(args.labels),
                                          export.read_labels(args.truth))})
    elif args.metric == "mardia":
        x = export.read_matrix(args.data)
        if args.columns:
            x = x[:, :args.columns]
        groups = np.zeros(len(x), dtype=np.int64)
        if args.labels is not None:
            groups = export.read_labels(args.labels)
            if groups.size != len(x):
                raise UsageError("labels and data have different lengths")
        out = []
        for k in np.unique(groups[groups >= 0]):
            skew, kurt = mardia_tests(x[groups == k])
            out.append({"group": int(k), "skewness": skew.to_dict(), "kurtosis": kurt.to_dict()})
        _emit(out)
    elif args.metric == "ks":
        x = export.read_matrix(args.data)
        _emit([{"column": j + 1, "ks": ks_gaussian_score(x[:, j])} for j in range(x.shape[1])])
    else:
        delta = np.loadtxt(args.data, delimiter=",", ndmin=1, comments="#")
        _emit(paired_sign_test(delta, alternative=args.alternative).to_dict())


COMMANDS = {"embed": cmd_embed, "transform": cmd_transform, "fit": cmd_fit,
            "select": cmd_select, "simulate": cmd_simulate, "experiment": cmd_experiment,
            "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = apply_config(args)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.out_dir.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        stage = getattr(exc, "stage", None)
        prefix = f"[{stage}] " if stage else ""
        print(f"error: {prefix}{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
