"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
import sys

from .checkpoint import load_checkpoint, save_checkpoint
from .complexity import analytic_report, measured_report
from .data import SplitSpec, horizon_steps, load_adjacency, load_series, save_adjacency, save_series, synth_generate
from .errors import GPSTGNError, NumericError
from .evaluation import (
    emit_report,
    fnn_forecast_train,
    historical_average_forecast,
    metrics,
    metrics_table,
    score_model,
    series_rows,
    write_train_report,
)
from .model import STGCN, ModelConfig
from .pipeline import checkpoint_kept, fit_stgcn, prepare
from .pruning import PruneConfig, apply_node_mask, correlation_adjacency, prune
from .graph import WeightedGraph
from .training import TrainConfig
from .transfer import TransferConfig, fine_tune, write_transfer_reports

log = logging.getLogger("gpstgn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _add_data_flags(p, horizon_nargs=None):
    p.add_argument("--series", required=True, help="series CSV")
    p.add_argument("--adj", required=True, help="adjacency CSV")
    p.add_argument("--interval", type=float, default=None, help="sampling interval in minutes (overrides file)")
    if horizon_nargs:
        p.add_argument("--horizon-min", type=float, nargs=horizon_nargs, default=[15.0])
    else:
        p.add_argument("--horizon-min", type=float, default=None)
    p.add_argument("--split", type=_floats, default=(0.7, 0.15, 0.15), help="train,val,test fractions")
    p.add_argument("--norm", choices=["global", "per_node"], default="global")
    p.add_argument("--laplacian", choices=["power_iteration", "fixed_two"], default="power_iteration")
    p.add_argument("--prune", action="store_true", help="apply graph pruning before training")
    p.add_argument("--keep", type=float, default=0.9, help="fraction of nodes kept when pruning")
    p.add_argument("--tau", type=float, default=0.1, help="edge weight threshold when pruning")
    p.add_argument("--alpha", type=float, default=0.7, help="degree weight in the node score")
    p.add_argument("--bins", type=int, default=16, help="histogram bins for node entropy")


def _add_train_flags(p):
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--weight-decay", type=float, default=0.0005)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gpstgn", description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=None, help="key=value file; explicit flags take precedence")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic graph and series")
    p.add_argument("--nodes", type=int, default=20)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--interval", type=float, default=5.0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("prune", help="score and prune a sensor graph")
    p.add_argument("--series", required=True)
    p.add_argument("--adj", required=True)
    p.add_argument("--interval", type=float, default=None)
    p.add_argument("--keep", type=float, default=0.9)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--bins", type=int, default=16)
    p.add_argument("--correlation", action="store_true", help="score on the correlation adjacency")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train an STGCN and write a checkpoint")
    _add_data_flags(p)
    p.add_argument("--his", type=int, default=12)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--channels", type=_ints, default=(32, 16, 32), help="C_t1,C_s,C_t2 per block")
    p.add_argument("--kt", type=int, default=3)
    p.add_argument("--ks", type=int, default=3)
    p.add_argument("--activation", choices=["glu", "relu"], default="glu")
    p.add_argument("--tag", default="", help="dataset tag stored in the checkpoint")
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--report", default=None, help="per-epoch loss CSV (default: <out>.report.csv)")

    p = sub.add_parser("eval", help="score a checkpoint and baselines on the test split")
    _add_data_flags(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--baselines", default="ha,fnn", help="comma list from {ha,fnn} or 'none'")
    p.add_argument("--fnn-hidden", type=int, default=64)
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="metrics CSV")
    p.add_argument("--series-out", default=None, help="truth/prediction CSV for one sensor")
    p.add_argument("--sensor", type=int, default=0)

    p = sub.add_parser("transfer", help="fine-tune a source checkpoint on target data")
    _add_data_flags(p, horizon_nargs="+")
    p.add_argument("--source", required=True, help="source checkpoint")
    p.add_argument("--fraction", type=float, nargs="+", default=[0.25])
    p.add_argument("--no-scratch", action="store_true", help="skip the from-scratch baseline")
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="transfer report CSV")
    p.add_argument("--ckpt-out", default=None, help="fine-tuned checkpoint path (suffixed when several)")

    p = sub.add_parser("complexity", help="Rademacher complexity bounds")
    p.add_argument("--cin", type=int, default=16)
    p.add_argument("--cout", type=int, default=32)
    p.add_argument("--kt", type=int, default=3)
    p.add_argument("--m", type=int, default=10000)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--ckpt", default=None, help="measure norms from this checkpoint instead")
    p.add_argument("--out", default=None, help="also write the report here")
    return parser


def _read_config(path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def parse_args(argv) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = _Parser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    command = next((tok for tok in argv if tok in COMMANDS), None)
    if known.config is not None and command is not None:
        overrides = _read_config(known.config)
        sub = parser._subparsers._group_actions[0].choices[command]
        actions = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, raw in overrides.items():
            if key not in actions or key == "help":
                raise UsageError(f"unknown config key {key!r} for {command}")
            action = actions[key]
            if isinstance(action, argparse._StoreTrueAction):
                defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            elif action.nargs in ("+", "*"):
                defaults[key] = [action.type(v) if action.type else v for v in raw.split()]
            else:
                defaults[key] = action.type(raw) if action.type else raw
            # the file satisfies required flags; explicit flags still win
            action.required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _print_config(args) -> None:
    for key in sorted(vars(args)):
        value = getattr(args, key)
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        print(f"config.{key}={value}")
    sys.stdout.flush()


def _prune_cfg(args) -> PruneConfig | None:
    if not args.prune:
        return None
    return PruneConfig(edge_threshold=args.tau, keep_fraction=args.keep, alpha=args.alpha, entropy_bins=args.bins)


def _train_cfg(args) -> TrainConfig:
    return TrainConfig(lr=args.lr, batch_size=args.batch_size, max_epochs=args.epochs,
                       weight_decay=args.weight_decay, seed=args.seed, patience=args.patience)


def _load_inputs(args):
    series = load_series(args.series, args.interval)
    graph = load_adjacency(args.adj)
    return series, graph


def cmd_synth(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graph, series = synth_generate(args.nodes, args.steps, args.seed, noise=args.noise,
                                   interval_minutes=args.interval)
    save_adjacency(out / "adjacency.csv", graph)
    save_series(out / "series.csv", series)
    print(f"wrote {out / 'adjacency.csv'} and {out / 'series.csv'}")


def cmd_prune(args) -> None:
    series, graph = _load_inputs(args)
    if args.correlation:
        graph = WeightedGraph(correlation_adjacency(series), series.sensor_ids)
    cfg = PruneConfig(edge_threshold=args.tau, keep_fraction=args.keep, alpha=args.alpha, entropy_bins=args.bins)
    result = prune(graph, series, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_adjacency(out / "adjacency.csv", result.pruned_graph)
    save_series(out / "series.csv", apply_node_mask(series, result.kept))
    lines = ["index,sensor,weighted_degree,entropy,combined,kept"]
    kept = set(result.kept)
    for s in result.scores:
        lines.append(f"{s.index},{series.sensor_ids[s.index]},{s.weighted_degree!r},{s.entropy!r},"
                     f"{s.combined!r},{int(s.index in kept)}")
    (out / "scores.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"kept {len(result.kept)} of {graph.n} nodes")


def cmd_train(args) -> None:
    series, graph = _load_inputs(args)
    minutes = args.horizon_min if args.horizon_min is not None else 15.0
    pred = horizon_steps(minutes, series.interval_minutes)
    model_cfg = ModelConfig(num_blocks=args.blocks, channels=(tuple(args.channels),), kt=args.kt, ks=args.ks,
                            his=args.his, activation=args.activation)
    prep = prepare(series, graph, args.his, pred, split_spec=SplitSpec(*args.split), prune_cfg=_prune_cfg(args),
                   norm_mode=args.norm, ks=args.ks, laplacian_mode=args.laplacian)
    meta = {"source_tag": args.tag or Path(args.series).stem, "horizon_minutes": repr(minutes)}
    if args.prune:
        meta["edge_threshold"] = repr(args.tau)
    ckpt, report, _ = fit_stgcn(prep, model_cfg, _train_cfg(args), metadata=meta)
    save_checkpoint(args.out, ckpt)
    write_train_report(args.report or f"{args.out}.report.csv", report)
    print(f"best_epoch={report.best_epoch}")
    print(f"best_val_loss={report.best_val_loss!r}")
    print(f"stop_reason={report.stop_reason}")


def cmd_eval(args) -> None:
    series, graph = _load_inputs(args)
    ckpt = load_checkpoint(args.ckpt)
    if args.horizon_min is not None:
        minutes = args.horizon_min
        pred = horizon_steps(minutes, series.interval_minutes)
    else:
        pred = int(ckpt.metadata.get("pred_steps", "3"))
        minutes = pred * series.interval_minutes
    kept = checkpoint_kept(ckpt)
    prune_cfg = _prune_cfg(args)
    if kept is not None and prune_cfg is None and "edge_threshold" in ckpt.metadata:
        prune_cfg = PruneConfig(edge_threshold=float(ckpt.metadata["edge_threshold"]))
    prep = prepare(series, graph, ckpt.config.his, pred, split_spec=SplitSpec(*args.split), prune_cfg=prune_cfg,
                   kept=kept, stats=ckpt.norm, ks=ckpt.config.ks, laplacian_mode=args.laplacian)
    model = STGCN(ckpt.config, prep.basis)
    horizon = f"{minutes:g}min"
    rep, pred_values = score_model(model.forward, ckpt.tensors(), prep.test, prep.raw_test, prep.stats)
    entries = [("stgcn", horizon, rep)]
    wanted = [] if args.baselines == "none" else [b.strip() for b in args.baselines.split(",") if b.strip()]
    for name in wanted:
        if name == "ha":
            entries.append(("ha", horizon, metrics(historical_average_forecast(prep.raw_test.x), prep.raw_test.y)))
        elif name == "fnn":
            fnn, params, _ = fnn_forecast_train(prep.train, prep.val, args.fnn_hidden, _train_cfg(args))
            fnn_rep, _ = score_model(fnn.forward, params, prep.test, prep.raw_test, prep.stats)
            entries.append(("fnn", horizon, fnn_rep))
        else:
            raise UsageError(f"unknown baseline {name!r}")
    emit_report(entries, args.out, "metrics_csv")
    if args.series_out:
        if not 0 <= args.sensor < prep.graph.n:
            raise UsageError(f"--sensor must be in [0, {prep.graph.n})")
        emit_report(series_rows(prep.raw_test.y, pred_values, args.sensor), args.series_out, "series_csv")
    print(metrics_table(entries))


def cmd_transfer(args) -> None:
    series, graph = _load_inputs(args)
    source = load_checkpoint(args.source)
    reports = []
    combos = [(f, h) for f in args.fraction for h in args.horizon_min]
    for f, h in combos:
        cfg = TransferConfig(fraction=f, train=_train_cfg(args), scratch_baseline=not args.no_scratch)
        ckpt, rep = fine_tune(source, series, graph, h, cfg, prune_cfg=_prune_cfg(args),
                              split_spec=SplitSpec(*args.split), norm_mode=args.norm,
                              laplacian_mode=args.laplacian)
        reports.append(rep)
        row = rep.rows[0]
        scratch = "" if row.scratch is None else f" scratch_mae={row.scratch.mae:.4f}"
        print(f"f={f:g} horizon={h:g}min mae={row.metrics.mae:.4f}{scratch}")
        if args.ckpt_out:
            path = args.ckpt_out if len(combos) == 1 else f"{args.ckpt_out}.f{f:g}.h{h:g}"
            save_checkpoint(path, ckpt)
    write_transfer_reports(args.out, reports)


def cmd_complexity(args) -> None:
    if args.ckpt:
        ckpt = load_checkpoint(args.ckpt)
        report = measured_report(ckpt.params, args.m, ckpt.config.num_blocks)
    else:
        report = analytic_report(args.cin, args.cout, args.kt, args.m, args.blocks)
    text = report.to_text()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")


COMMANDS = {
    "synth": cmd_synth,
    "prune": cmd_prune,
    "train": cmd_train,
    "eval": cmd_eval,
    "transfer": cmd_transfer,
    "complexity": cmd_complexity,
}


def run(argv=None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _print_config(args)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (GPSTGNError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())
