"""Command-line surface. Every subcommand is a thin shell over the
library; the resolved configuration is echoed as JSON to stderr so runs
are self-describing. Exit codes: 0 ok, 1 usage, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import active, experiments, kernels, metrics, modelio, ssad_dual, ssad_primal, svdd, svdd_neg, synth
from .errors import ConfigError, DataError, InfeasibleError, NumericalError
from .features import NGramConfig, Payload, embed, load_dataset, save_dataset
from .kernels import KernelSpec
from .ssad_primal import HuberLoss


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _echo_config(args: argparse.Namespace):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    sys.stderr.write(json.dumps(cfg, sort_keys=True, default=str) + "\n")


def _ngram_cfg(args) -> NGramConfig:
    return NGramConfig(n=args.n, binary=not args.count_weights,
                       normalize=not args.no_normalize)


def _add_ngram_flags(p):
    p.add_argument("--n", type=int, default=3, help="n-gram length (<= 8)")
    p.add_argument("--count-weights", action="store_true",
                   help="occurrence counts instead of binary weights")
    p.add_argument("--no-normalize", action="store_true",
                   help="skip unit normalization")


def _kernel_from_args(args) -> KernelSpec:
    return KernelSpec(family=args.kernel, sigma=args.sigma)


def cmd_embed(args):
    cfg = _ngram_cfg(args)
    ts = load_dataset(args.data, cfg)
    with open(args.out, "w", encoding="utf-8") as fh:
        for i, pid in enumerate(ts.ids):
            vec = ts.points[i]
            rec = {"id": pid, "label": int(ts.labels[i]), "v": vec.to_dict()}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    print(f"embedded {len(ts)} payloads -> {args.out}")
    return 0


def _resolve_eta_u(args, n: int) -> float:
    if args.nu is not None:
        if args.eta_u is not None:
            raise ConfigError("--nu and --eta-u are mutually exclusive")
        if args.nu <= 0:
            raise ConfigError("--nu must be positive")
        return 1.0 / (args.nu * n)
    return args.eta_u if args.eta_u is not None else 1.0


def cmd_train(args):
    ts = load_dataset(args.data, _ngram_cfg(args))
    kernel = _kernel_from_args(args)
    n = len(ts)
    eta_u = _resolve_eta_u(args, n)
    labels = ts.labels
    if args.method == "svdd":
        model = svdd.train_svdd(ts.points, eta_u, kernel, point_ids=ts.ids)
    elif args.method == "ocsvm":
        y = np.where(labels == 0, 1, labels)
        model = svdd.train_ocsvm_dual(ts.points, y, eta_u, kernel, point_ids=ts.ids)
    elif args.method == "svddneg":
        y = np.where(labels == 0, 1, labels)
        model = svdd_neg.train_svddneg_dual(ts.points, y, eta_u, kernel, point_ids=ts.ids)
    elif args.method == "ssad-dual":
        model = ssad_dual.train_ssad_dual(ts.points, labels, args.kappa, eta_u,
                                          args.eta_l, kernel, point_ids=ts.ids)
    elif args.method == "ssad-primal":
        loss = HuberLoss(args.delta_huber, args.epsilon)
        model = ssad_primal.train_ssad_primal(
            ts.points, labels, args.kappa, eta_u, args.eta_l, kernel, loss=loss,
            restarts=args.restarts, seed=args.seed, point_ids=ts.ids)
    else:
        raise ConfigError(f"unknown method {args.method!r}")
    modelio.save_model(model, args.out)
    print(f"trained {args.method} on {n} points -> {args.out}")
    return 0


def cmd_score(args):
    train = load_dataset(args.train_data, _ngram_cfg(args))
    data = load_dataset(args.data, _ngram_cfg(args))
    model = modelio.load_model(args.model, train)
    scores = modelio.score_model(model, data.points)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "score"])
        for pid, s in zip(data.ids, scores):
            w.writerow([pid, f"{s:.10g}"])
    print(f"scored {len(data)} points -> {args.out}")
    return 0


def cmd_eval(args):
    truth_ts = load_dataset(args.truth, _ngram_cfg(args))
    truth_by_id = {pid: int(l) for pid, l in zip(truth_ts.ids, truth_ts.labels)}
    ids, scores = [], []
    with open(args.scores, "r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            ids.append(row["id"])
            scores.append(float(row["score"]))
    missing = [i for i in ids if i not in truth_by_id]
    if missing:
        raise DataError(f"truth file lacks id {missing[0]!r}")
    truth = np.array([truth_by_id[i] for i in ids])
    if np.any(truth == 0):
        raise DataError("truth labels must be +1/-1 for every scored point")
    value = metrics.auc001(np.asarray(scores), truth)
    print(f"{value:.10g}")
    return 0


def cmd_query(args):
    train = load_dataset(args.train_data, _ngram_cfg(args))
    model = modelio.load_model(args.model, train)
    km = kernels.gram(model.kernel, train.points)
    scores = modelio.score_model(model, train.points)
    k = min(args.k, len(train) - 1)
    graph = active.build_knn_graph(km.values, k)
    delta = {"margin": 1.0, "cluster": 0.0, "combined": args.delta}[args.strategy]
    picks = active.combined_batch(scores, graph, train.labels, delta, args.batch)
    for p in picks:
        print(f"{train.ids[p.index]},{p.combined:.6g},{p.margin_term:.6g},{p.cluster_term:.6g}")
    return 0


def cmd_adapt_threshold(args):
    train = load_dataset(args.train_data, _ngram_cfg(args))
    model = modelio.load_model(args.model, train)
    labeled_ts = load_dataset(args.labeled, _ngram_cfg(args))
    mask = labeled_ts.labels != 0
    idx = [i for i in range(len(labeled_ts)) if mask[i]]
    sub = labeled_ts.subset(idx)
    if isinstance(model, svdd.SphereModel):
        d = np.sqrt(np.maximum(svdd.center_distances_sq(model, sub.points), 0.0))
        r = float(np.sqrt(max(model.r_squared, 0.0)))
    elif isinstance(model, svdd_neg.SvddNegModel):
        d = np.sqrt(np.maximum(svdd_neg.center_distances_sq(model, sub.points), 0.0))
        r = float(np.sqrt(max(model.r_squared, 0.0)))
    else:
        raise ConfigError("threshold adaptation needs a hypersphere model")
    r_hat = active.adapt_threshold(r, d, sub.labels)
    print(f"{r_hat:.10g}")
    return 0


def cmd_loop(args):
    data = load_dataset(args.data, _ngram_cfg(args))
    if np.any(data.labels == 0):
        raise DataError("loop needs a fully labeled dataset as the simulated oracle")
    trainer = active.TrainerConfig(
        method=args.method, kernel=_kernel_from_args(args),
        eta_u=args.eta_u if args.eta_u is not None else 1.0,
        eta_l=args.eta_l, kappa=args.kappa, nu=args.nu)
    strategy = active.StrategyConfig(strategy=args.strategy, delta=args.delta,
                                     k=args.k, batch=args.batch)
    train, truth, holdout, holdout_truth = active.split_session_data(
        data, args.holdout_frac, args.seed)
    oracle_map = {pid: int(l) for pid, l in zip(data.ids, data.labels)}
    records = active.run_loop(train, truth, holdout, holdout_truth, trainer, strategy,
                              lambda pid: oracle_map[pid], args.budget,
                              seed=args.seed, log_path=args.out)
    print(f"{len(records)} rounds -> {args.out}")
    return 0


def cmd_synth(args):
    if args.scene:
        scene = synth.load_scene(args.scene)
    elif args.preset == "two-cluster":
        scene = synth.SyntheticScene(seed=args.seed)
    elif args.preset == "payload":
        scene = synth.PayloadScene(seed=args.seed)
    else:
        raise ConfigError("provide --scene JSON or --preset")
    if isinstance(scene, synth.SyntheticScene):
        train, val, test = synth.generate_scene(scene)
    else:
        train, val, test = synth.generate_payload_scene(scene)
    import os

    os.makedirs(args.out, exist_ok=True)
    for name, ts in (("train", train), ("val", val), ("test", test)):
        save_dataset(ts, os.path.join(args.out, f"{name}.jsonl"))
    with open(os.path.join(args.out, "scene.json"), "w") as fh:
        json.dump(scene.to_json(), fh, sort_keys=True, indent=2)
    print(f"wrote train/val/test + scene.json -> {args.out}")
    return 0


def cmd_bench_fig6(args):
    import os

    os.makedirs(args.out, exist_ok=True)
    cfg = experiments.Fig6Config(seed=args.seed, reps=args.reps, jobs=args.jobs)
    if args.fractions:
        cfg.fractions = tuple(float(f) for f in args.fractions.split(","))
    experiments.figure6_experiment(
        cfg, out_csv=os.path.join(args.out, "fig6_raw.csv"),
        agg_csv=os.path.join(args.out, "fig6_agg.csv"))
    with open(os.path.join(args.out, "fig6_config.json"), "w") as fh:
        json.dump(cfg.to_json(), fh, sort_keys=True, indent=2)
    print(f"fig6 sweep -> {args.out}")
    return 0


def cmd_bench_payload(args):
    import os

    os.makedirs(args.out, exist_ok=True)
    cfg = experiments.PayloadConfig(seed=args.seed, reps=args.reps, jobs=args.jobs)
    experiments.payload_experiment(
        cfg, auc_csv=os.path.join(args.out, "payload_auc.csv"),
        discovery_csv=os.path.join(args.out, "payload_discovery.csv"))
    with open(os.path.join(args.out, "payload_config.json"), "w") as fh:
        json.dump(cfg.to_json(), fh, sort_keys=True, indent=2)
    print(f"payload experiment -> {args.out}")
    return 0


def cmd_bench_threshold(args):
    import os

    os.makedirs(args.out, exist_ok=True)
    cfg = experiments.ThresholdConfig(seed=args.seed, reps=args.reps)
    experiments.threshold_experiment(cfg, out_csv=os.path.join(args.out, "threshold.csv"))
    with open(os.path.join(args.out, "threshold_config.json"), "w") as fh:
        json.dump(cfg.to_json(), fh, sort_keys=True, indent=2)
    print(f"threshold experiment -> {args.out}")
    return 0


def cmd_gap_experiment(args):
    fractions = tuple(float(f) for f in args.fractions.split(","))
    rows = svdd_neg.gap_experiment(
        fractions=fractions, seeds=range(args.seeds), eta=args.eta,
        out_csv=args.out)
    print(f"{len(rows)} rows -> {args.out}")
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    app = create_app(data_dir=args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="ssad", description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("embed", help="payload JSONL -> n-gram vector JSONL")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    _add_ngram_flags(sp)
    sp.set_defaults(func=cmd_embed)

    sp = sub.add_parser("train", help="fit a model on a dataset")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--method", default="ssad-dual",
                    choices=["svdd", "ssad-primal", "ssad-dual", "svddneg", "ocsvm"])
    sp.add_argument("--kernel", default="rbf", choices=["linear", "rbf"])
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--eta-u", type=float, default=None,
                    help="unlabeled slack trade-off (exclusive with --nu)")
    sp.add_argument("--nu", type=float, default=None,
                    help="nu parameterization: eta_u = 1/(nu*n); nu=1 is centroid mode")
    sp.add_argument("--eta-l", type=float, default=1.0)
    sp.add_argument("--kappa", type=float, default=1.0)
    sp.add_argument("--epsilon", type=float, default=0.5, help="huber width")
    sp.add_argument("--delta-huber", type=float, default=0.0, help="huber center")
    sp.add_argument("--restarts", type=int, default=5)
    _add_ngram_flags(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("score", help="score a dataset under a saved model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--train-data", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    _add_ngram_flags(sp)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("eval", help="auc001 of a score CSV against truth labels")
    sp.add_argument("--scores", required=True)
    sp.add_argument("--truth", required=True)
    _add_ngram_flags(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("query", help="rank unlabeled points for labeling")
    sp.add_argument("--model", required=True)
    sp.add_argument("--train-data", required=True)
    sp.add_argument("--strategy", default="combined",
                    choices=["margin", "cluster", "combined"])
    sp.add_argument("--delta", type=float, default=0.5)
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--batch", type=int, default=10)
    _add_ngram_flags(sp)
    sp.set_defaults(func=cmd_query)

    sp = sub.add_parser("adapt-threshold", help="radius from labeled distances")
    sp.add_argument("--model", required=True)
    sp.add_argument("--train-data", required=True)
    sp.add_argument("--labeled", required=True,
                    help="dataset whose labeled records form the sample")
    _add_ngram_flags(sp)
    sp.set_defaults(func=cmd_adapt_threshold)

    sp = sub.add_parser("loop", help="simulated-oracle active learning")
    sp.add_argument("--data", required=True, help="fully labeled dataset (oracle)")
    sp.add_argument("--out", required=True, help="JSONL round log")
    sp.add_argument("--budget", type=int, default=50)
    sp.add_argument("--batch", type=int, default=10)
    sp.add_argument("--strategy", default="combined",
                    choices=["margin", "cluster", "combined", "random"])
    sp.add_argument("--delta", type=float, default=0.5)
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--holdout-frac", type=float, default=0.2)
    sp.add_argument("--method", default="ssad-dual",
                    choices=["svdd", "ssad-primal", "ssad-dual", "svddneg", "ocsvm"])
    sp.add_argument("--kernel", default="linear", choices=["linear", "rbf"])
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--eta-u", type=float, default=0.05)
    sp.add_argument("--nu", type=float, default=None)
    sp.add_argument("--eta-l", type=float, default=1.0)
    sp.add_argument("--kappa", type=float, default=1.0)
    _add_ngram_flags(sp)
    sp.set_defaults(func=cmd_loop)

    sp = sub.add_parser("synth", help="scene JSON -> train/val/test datasets")
    sp.add_argument("--scene", default=None)
    sp.add_argument("--preset", default=None, choices=["two-cluster", "payload"])
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("bench-fig6", help="label-fraction sweep experiment")
    sp.add_argument("--out", required=True)
    sp.add_argument("--reps", type=int, default=25)
    sp.add_argument("--fractions", default=None)
    sp.set_defaults(func=cmd_bench_fig6)

    sp = sub.add_parser("bench-payload", help="cloaked payload experiment")
    sp.add_argument("--out", required=True)
    sp.add_argument("--reps", type=int, default=10)
    sp.set_defaults(func=cmd_bench_payload)

    sp = sub.add_parser("bench-threshold", help="threshold adaptation experiment")
    sp.add_argument("--out", required=True)
    sp.add_argument("--reps", type=int, default=10)
    sp.set_defaults(func=cmd_bench_threshold)

    sp = sub.add_parser("gap-experiment", help="duality gap vs negative fraction")
    sp.add_argument("--out", required=True)
    sp.add_argument("--eta", type=float, default=100.0)
    sp.add_argument("--fractions", default="0,0.05,0.1,0.15,0.2,0.3,0.4,0.5")
    sp.add_argument("--seeds", type=int, default=20)
    sp.set_defaults(func=cmd_gap_experiment)

    sp = sub.add_parser("serve", help="labeling service")
    sp.add_argument("--port", type=int, default=8000)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--data-dir", default="./sessions")
    sp.set_defaults(func=cmd_serve)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    _echo_config(args)
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except DataError as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return 2
    except (NumericalError, InfeasibleError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
