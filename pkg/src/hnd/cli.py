"""Command-line entry point: generate, train, score, dismantle, evaluate, bench.

Outputs go to ``--out`` (default ``$HND_OUTPUT_DIR``, else ``./hnd_out``).
Every output carries a reproducibility header (seed, config hash, version).
Exit codes: 0 success, 2 usage, 3 data/format, 4 numeric.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dismantle import SCORERS, dismantle, make_scorer
from .errors import FormatError, HNDError, UsageError
from .experiments import anc_table, heldout_suite, layer_sweep, loglog_slope, time_scaling
from .generator import SynthBatchSpec, write_batch
from .io import FORMATS, ingest, read_hypernetwork, save_manifest, write_csv
from .model import config_hash, init_params, load_checkpoint, save_checkpoint
from .training import TrainConfig, exact_betweenness, train

log = logging.getLogger("hnd")

OUTPUT_ENV = "HND_OUTPUT_DIR"


def _pair(kind):
    def parse(text):
        parts = text.replace("..", ",").split(",")
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
        try:
            return kind(parts[0]), kind(parts[1])
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def int_list(text: str) -> list[int]:
    """``"4"``, ``"1,2,5"`` or an inclusive range ``"1..6"``."""
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split(".."))
            if lo > hi:
                raise ValueError(f"empty range {text!r}")
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def header(args, config: dict) -> dict:
    return {"seed": args.seed, "config_hash": config_hash(config), "version": __version__, "command": args.command}


def out_dir(args) -> Path:
    path = Path(args.out or os.environ.get(OUTPUT_ENV) or "hnd_out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def train_config(args) -> TrainConfig:
    return TrainConfig(
        networks=args.networks, n_range=args.n_range, p_range=args.p_range, q_range=args.q_range,
        pairs_ratio=args.pairs_ratio, iterations=args.iterations, val_networks=args.val_networks,
        patience=args.patience, layers=args.layers if isinstance(args.layers, int) else 4, dim=args.dim,
        lr=args.lr, seed=args.seed, shuffle=args.shuffle, readout=args.readout,
        clip_norm=None if args.clip_norm <= 0 else args.clip_norm,
    )


def load_params(path):
    if path is None:
        return None
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc.strerror}") from exc
    return load_checkpoint(data)[0]


def scorer_from(args):
    if args.scorer != "hnd" and args.checkpoint:
        raise UsageError(f"--checkpoint only applies to the hnd scorer, not {args.scorer}")
    return make_scorer(args.scorer, load_params(args.checkpoint), args.ci_k, args.ci_ball)


def cmd_generate(args):
    spec = SynthBatchSpec(args.networks, args.n_range, args.p_range, args.q_range, args.seed)
    dest = out_dir(args)
    manifest = write_batch(spec, dest, header(args, {"spec": spec.__dict__}))
    print(manifest)


def cmd_train(args):
    cfg = train_config(args)
    hdr = header(args, cfg.to_dict())

    def progress(row):
        log.info("iter %d train %.4f val %.4f acc %.4f", row.iteration, row.train_loss, row.val_loss, row.val_accuracy)

    params, tlog = train(cfg, progress=progress)
    dest = out_dir(args)
    ckpt = Path(args.checkpoint) if args.checkpoint else dest / "model.ckpt"
    ckpt.write_bytes(save_checkpoint(params, {**hdr, "config": cfg.to_dict(), "best_iteration": tlog.best_iteration}))
    rows = [(r.iteration, r.train_loss, r.val_loss, r.val_accuracy, r.wall_clock) for r in tlog.rows]
    write_csv(dest / "train_log.csv", ["iteration", "train_loss", "val_loss", "val_accuracy", "wall_clock"], rows,
              {**hdr, "best_iteration": tlog.best_iteration, "stopped_early": tlog.stopped_early,
               "discarded_networks": tlog.discarded_networks})
    print(f"{ckpt} best_iteration={tlog.best_iteration} val_loss={tlog.best_val_loss:.6f}")


def cmd_score(args):
    g = read_hypernetwork(args.input, args.format)
    cols, names = [], []
    if args.scorer:
        cols.append(scorer_from(args)(g))
        names.append(args.scorer)
    if args.exact or not cols:
        cols.append(exact_betweenness(g))
        names.append("exact_betweenness")
    dest = out_dir(args)
    path = dest / f"{Path(args.input).stem}_scores.csv"
    rows = [(v, g.label(v), *(float(c[v]) for c in cols)) for v in range(g.num_nodes)]
    write_csv(path, ["node", "label", *names], rows, header(args, {"input": str(args.input), "scorers": names}))
    print(path)


def cmd_dismantle(args):
    g, manifest = ingest(args.input, args.format)
    scorer = scorer_from(args)
    res = dismantle(g, scorer, args.batch_fraction, args.threshold, args.literal_denominator)
    hdr = header(args, {"input": str(args.input), **res.config})
    dest = out_dir(args)
    stem = f"{manifest.name}_{scorer.name}"
    res.save(dest / f"{stem}_result.json", g.node_labels, hdr)
    res.save_curve(dest / f"{stem}_curve.txt", hdr)
    save_manifest(manifest, dest / f"{manifest.name}_manifest.json")
    print(f"anc={res.anc!r} removed={len(res.sequence)}")


def cmd_evaluate(args):
    scorers = args.scorers.split(",")
    bad = [s for s in scorers if s not in SCORERS]
    if bad:
        raise UsageError(f"unknown scorers {bad}; expected a subset of {SCORERS}")
    if args.inputs and args.synthetic:
        raise UsageError("give dataset files or --synthetic, not both")
    if args.inputs:
        loaded = [ingest(p, args.format) for p in args.inputs]
        names, nets = [m.name for _, m in loaded], [g for g, _ in loaded]
    else:
        nets = heldout_suite(args.seed, args.synthetic or 20, args.test_n, args.p_range, args.q_range)
        names = [f"synthetic_{i:03d}" for i in range(len(nets))]
    params = load_params(args.checkpoint)
    if "hnd" in scorers and params is None:
        raise UsageError("the hnd scorer needs --checkpoint")
    table = anc_table(nets, scorers, params, args.batch_fraction, args.threshold, args.ci_k)
    rows = [(s, *table[s], float(np.mean(table[s]))) for s in scorers]
    dest = out_dir(args)
    cfg = {"scorers": scorers, "datasets": names, "batch_fraction": args.batch_fraction, "threshold": args.threshold}
    write_csv(dest / "anc_table.csv", ["scorer", *names, "mean"], rows, header(args, cfg))
    for s, *vals in rows:
        print(f"{s:12s} mean_anc={vals[-1]:.5f}")


def cmd_bench(args):
    dest = out_dir(args)
    if args.layers is not None:
        if args.checkpoint:
            raise UsageError("--layers trains fresh models; it cannot be combined with --checkpoint")
        cfg = train_config(args)
        nets = heldout_suite(args.seed, args.test_networks, args.test_n, args.p_range, args.q_range)
        rows = layer_sweep(args.layers, cfg, nets, args.batch_fraction, args.threshold,
                           progress=lambda L, a: log.info("L=%d mean ANC %.5f", L, a))
        hdr = header(args, {**cfg.to_dict(), "sweep": args.layers, "test_networks": args.test_networks,
                            "test_n": args.test_n, "batch_fraction": args.batch_fraction})
        write_csv(dest / "layer_sweep.csv", ["layers", "mean_anc", "best_iteration"], rows, hdr)
        for L, a, _ in rows:
            print(f"L={L} mean_anc={a:.5f}")
        return
    params = load_params(args.checkpoint) or init_params(4, args.dim, args.seed, args.readout)
    rows = time_scaling(args.scales, params, args.seed, repeats=args.repeats)
    cfg = {"scales": args.scales, "repeats": args.repeats, "layers": params.num_layers, "dim": params.dim}
    write_csv(dest / "bench_timing.csv", ["method", "num_nodes", "seconds"], rows, header(args, cfg))
    for method in ("hnd", "betweenness"):
        pts = [(n, s) for m, n, s in rows if m == method]
        for n, s in pts:
            print(f"{method:12s} N={n:6d} {s:.4f}s")
        if len(pts) > 1:
            print(f"{method:12s} log-log slope {loglog_slope(*zip(*pts)):.3f}")


def build_parser() -> argparse.ArgumentParser:
    env_default = os.environ.get(OUTPUT_ENV)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help=f"output directory (default ${OUTPUT_ENV} or ./hnd_out)"
                        + (f"; currently {env_default}" if env_default else ""))
    common.add_argument("-v", "--verbose", action="store_true")

    synth = argparse.ArgumentParser(add_help=False)
    synth.add_argument("--networks", type=int, default=1000)
    synth.add_argument("--n-range", type=_pair(int), default=(100, 150))
    synth.add_argument("--p-range", type=_pair(float), default=(0.1, 0.4))
    synth.add_argument("--q-range", type=_pair(float), default=(0.1, 0.4))

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--val-networks", type=int, default=50)
    training.add_argument("--pairs-ratio", type=float, default=0.9)
    training.add_argument("--iterations", type=int, default=1000)
    training.add_argument("--patience", type=int, default=100)
    training.add_argument("--dim", type=int, default=32)
    training.add_argument("--lr", type=float, default=0.005)
    training.add_argument("--clip-norm", type=float, default=1.0, help="global gradient norm cap; <= 0 disables")
    training.add_argument("--readout", choices=("identity", "relu"), default="identity")
    training.add_argument("--shuffle", action="store_true")

    scoring = argparse.ArgumentParser(add_help=False)
    scoring.add_argument("--format", choices=FORMATS, default="hyperedge-list")
    scoring.add_argument("--checkpoint", default=None)
    scoring.add_argument("--ci-k", type=int, default=2)
    scoring.add_argument("--ci-ball", action="store_true", help="CI over distances 1..k instead of exactly k")

    removal = argparse.ArgumentParser(add_help=False)
    removal.add_argument("--batch-fraction", type=float, default=0.01)
    removal.add_argument("--threshold", type=float, default=0.0)

    p = argparse.ArgumentParser(prog="hnd", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hnd {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common, synth], help="write a batch of synthetic hypernetworks")

    t = sub.add_parser("train", parents=[common, synth, training], help="fit the betweenness regressor")
    t.add_argument("--layers", type=int, default=4)
    t.add_argument("--checkpoint", default=None, help="checkpoint path (default OUT/model.ckpt)")

    s = sub.add_parser("score", parents=[common, scoring], help="per-node scores for one hypernetwork")
    s.add_argument("input")
    s.add_argument("--scorer", choices=SCORERS, default=None)
    s.add_argument("--exact", action="store_true", help="also emit exact betweenness")

    d = sub.add_parser("dismantle", parents=[common, scoring, removal], help="adaptive dismantling of one dataset")
    d.add_argument("input")
    d.add_argument("--scorer", choices=SCORERS, default="hnd")
    d.add_argument("--literal-denominator", action="store_true")

    e = sub.add_parser("evaluate", parents=[common, scoring, removal], help="ANC table over scorers and datasets")
    e.add_argument("inputs", nargs="*")
    e.add_argument("--scorers", default="hnd,hda,hhda,ci,betweenness")
    e.add_argument("--synthetic", type=int, default=0, help="score this many held-out synthetic networks instead")
    e.add_argument("--test-n", type=int, default=200)
    e.add_argument("--p-range", type=_pair(float), default=(0.1, 0.4))
    e.add_argument("--q-range", type=_pair(float), default=(0.1, 0.4))

    b = sub.add_parser("bench", parents=[common, synth, training, removal],
                       help="inference timing across scales, or an ANC-vs-depth sweep with --layers")
    b.add_argument("--scales", type=int_list, default=[1000, 2000, 4000, 8000])
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--checkpoint", default=None, help="model to time (default: untrained L=4)")
    b.add_argument("--layers", type=int_list, default=None, help="depths to sweep, e.g. 1..6")
    b.add_argument("--test-networks", type=int, default=20)
    b.add_argument("--test-n", type=int, default=200)
    return p


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "score": cmd_score, "dismantle": cmd_dismantle,
            "evaluate": cmd_evaluate, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except HNDError as exc:
        print(f"hnd: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"hnd: error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
