"""Experiment runners: label-fraction sweeps on the planted-cluster scene,
payload detection with cloaking under random and active labeling, and
threshold adaptation. All emit CSV; plotting is left to the consumer.

Runtime notes: the train Gram and the train-to-holdout kernel blocks are
computed once per repetition and shared across the hyperparameter grid;
grid sweeps are warm-started from the previous solution. Repetitions can
run in worker processes; rows are sorted before writing, so output files
are byte-identical for any job count.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from . import kernels, metrics, ssad_dual, ssad_primal, svdd, svdd_neg
from .active import LoopState, StrategyConfig, TrainerConfig
from .features import TrainingSet
from .kernels import KernelSpec
from .metrics import partial_auc, roc
from .solvers import spectral_norm
from .synth import (
    GaussCluster,
    PayloadScene,
    SyntheticScene,
    generate_payload_scene,
    generate_scene,
)

GRID = np.logspace(-2.0, 2.0, 9)


def _fmt(x) -> str:
    return f"{x:.10g}"


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in r])


def _val_key(scores, truth):
    curve = roc(scores, truth)
    return (curve.auc001, partial_auc(curve.fpr, curve.tpr, 1.0))


class _RepData:
    """Cached geometry for one repetition: Gram, cross blocks, diagonals."""

    def __init__(self, spec: KernelSpec, train: TrainingSet, val: TrainingSet,
                 test: TrainingSet):
        self.spec = spec
        self.train = train
        self.val = val
        self.test = test
        self.gram = kernels.gram(spec, train.points)
        self.k_norm = spectral_norm(self.gram.values)
        self.cross_val = kernels.cross(spec, train.points, val.points)
        self.cross_test = kernels.cross(spec, train.points, test.points)
        if spec.family == "rbf":
            self.diag_val = np.ones(len(val))
            self.diag_test = np.ones(len(test))
        else:
            self.diag_val = kernels.self_dots(val.points)
            self.diag_test = kernels.self_dots(test.points)

    def score_block(self, model, kind: str, which: str) -> np.ndarray:
        cross = self.cross_val if which == "val" else self.cross_test
        diag = self.diag_val if which == "val" else self.diag_test
        if kind in ("svdd", "svddneg", "ssad-primal"):
            beta = model.alpha if kind == "svdd" else model.beta
            beta = np.asarray(beta, dtype=np.float64)
            return diag - 2.0 * (beta @ cross) + model.quad - model.r_squared
        if kind == "ssad-dual":
            return model.rho - (model.alpha * model.ybar) @ cross
        raise ValueError(kind)


@dataclass
class Fig6Config:
    scene: SyntheticScene = field(default_factory=lambda: SyntheticScene(
        nominal=[GaussCluster((-1.5, 0.0), 0.5, 150), GaussCluster((1.5, 0.0), 0.5, 150)],
        train_anomaly=[GaussCluster((0.0, 2.8), 0.35, 30)],
        test_anomaly=[GaussCluster((-2.5, 2.5), 0.25, 25), GaussCluster((2.5, -2.5), 0.25, 25)],
    ))
    sigma: float = 1.0
    fractions: tuple = tuple(round(0.05 * i, 2) for i in range(11))
    reps: int = 25
    kappa: float = 1.0
    primal_restarts: int = 1
    seed: int = 0
    jobs: int = 1

    def to_json(self) -> dict:
        d = asdict(self)
        d["scene"] = self.scene.to_json()
        return d


def _sweep_svdd(rep: _RepData, eta_grid) -> tuple:
    best = None
    warm = None
    n = len(rep.train)
    for eta in eta_grid:
        if eta * n < 1.0:
            continue
        m = svdd.train_svdd(rep.train.points, float(eta), rep.spec, gram=rep.gram,
                            k_norm=rep.k_norm, warm=warm)
        warm = m.alpha
        key = _val_key(rep.score_block(m, "svdd", "val"), rep.val.labels)
        if best is None or key > best[0]:
            best = (key, m)
    return best


def _sweep_svddneg(rep: _RepData, labels, eta_grid):
    y = np.where(labels == 0, 1, labels)
    best = None
    warm = None
    for eta in eta_grid:
        if eta * np.sum(y > 0) < 1.0:
            continue
        try:
            m = svdd_neg.train_svddneg_dual(rep.train.points, y, float(eta), rep.spec,
                                            gram=rep.gram, k_norm=rep.k_norm, warm=warm)
        except Exception:
            continue
        warm = m.alpha
        key = _val_key(rep.score_block(m, "svddneg", "val"), rep.val.labels)
        if best is None or key > best[0]:
            best = (key, m)
    return best


def _sweep_ssad_dual(rep: _RepData, labels, kappa, eta_grid):
    kap = kappa if np.any(labels != 0) else 0.0
    best = None
    warm = None
    for eu in eta_grid:
        try:
            m = ssad_dual.train_ssad_dual(rep.train.points, labels, kap, float(eu), 1.0,
                                          rep.spec, gram=rep.gram, k_norm=rep.k_norm,
                                          warm=warm)
        except Exception:
            continue
        warm = m.alpha
        key = _val_key(rep.score_block(m, "ssad-dual", "val"), rep.val.labels)
        if best is None or key > best[0]:
            best = (key, float(eu), 1.0, m)
    if best is None:
        return None
    warm = best[3].alpha
    for el in eta_grid:
        if el == 1.0:
            continue
        try:
            m = ssad_dual.train_ssad_dual(rep.train.points, labels, kap, best[1], float(el),
                                          rep.spec, gram=rep.gram, k_norm=rep.k_norm,
                                          warm=warm)
        except Exception:
            continue
        warm = m.alpha
        key = _val_key(rep.score_block(m, "ssad-dual", "val"), rep.val.labels)
        if key > best[0]:
            best = (key, best[1], float(el), m)
    return best


def _mask_inplace(labels_truth: np.ndarray, fraction: float, rng) -> np.ndarray:
    n = len(labels_truth)
    keep = int(np.floor(fraction * n))
    out = np.zeros(n, dtype=np.int64)
    if keep:
        chosen = rng.choice(n, size=keep, replace=False)
        out[chosen] = labels_truth[chosen]
    return out


def _fig6_rep(cfg_json: dict, rep: int) -> list:
    cfg = Fig6Config(**{**cfg_json, "scene": SyntheticScene.from_json(cfg_json["scene"])})
    scene = SyntheticScene.from_json(cfg_json["scene"])
    scene.seed = int(np.random.SeedSequence([cfg.seed, rep, 17]).generate_state(1)[0])
    train, val, test = generate_scene(scene)
    spec = KernelSpec("rbf", cfg.sigma)
    rd = _RepData(spec, train, val, test)
    truth = train.labels.copy()
    rows = []

    best_svdd = _sweep_svdd(rd, GRID)
    auc_svdd = metrics.auc001(rd.score_block(best_svdd[1], "svdd", "test"), test.labels)

    mask_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, rep, 23]))
    for frac in cfg.fractions:
        labels = _mask_inplace(truth, frac, mask_rng)
        rows.append(("svdd", frac, rep, float(auc_svdd)))
        bn = _sweep_svddneg(rd, labels, GRID)
        if bn is not None:
            rows.append(("svddneg", frac, rep,
                         float(metrics.auc001(rd.score_block(bn[1], "svddneg", "test"),
                                              test.labels))))
        bd = _sweep_ssad_dual(rd, labels, cfg.kappa, GRID)
        if bd is not None:
            rows.append(("ssad-dual", frac, rep,
                         float(metrics.auc001(rd.score_block(bd[3], "ssad-dual", "test"),
                                              test.labels))))
            mp = ssad_primal.train_ssad_primal(
                rd.train.points, labels, cfg.kappa if np.any(labels != 0) else 0.0,
                bd[1], bd[2], spec, restarts=cfg.primal_restarts,
                seed=rep, gram=rd.gram)
            rows.append(("ssad-primal", frac, rep,
                         float(metrics.auc001(rd.score_block(mp, "ssad-primal", "test"),
                                              test.labels))))
    return rows


def figure6_experiment(cfg: Fig6Config, out_csv=None, agg_csv=None):
    """Label-fraction sweep on the planted-cluster scene.

    Returns raw rows (method, fraction, rep, auc001); optionally writes
    them plus a mean/stderr aggregate per (method, fraction).
    """
    cfg_json = cfg.to_json()
    rows = []
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futs = [pool.submit(_fig6_rep, cfg_json, rep) for rep in range(cfg.reps)]
            for f in futs:
                rows.extend(f.result())
    else:
        for rep in range(cfg.reps):
            rows.extend(_fig6_rep(cfg_json, rep))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    if out_csv is not None:
        write_csv(out_csv, ["method", "fraction", "rep", "auc001"], rows)
    if agg_csv is not None:
        write_csv(agg_csv, ["method", "fraction", "mean_auc001", "stderr", "reps"],
                  aggregate_rows(rows))
    return rows


def aggregate_rows(rows):
    from collections import defaultdict

    groups = defaultdict(list)
    for method, frac, _rep, auc in rows:
        groups[(method, float(frac))].append(float(auc))
    out = []
    for (method, frac) in sorted(groups):
        vals = np.asarray(groups[(method, frac)])
        se = float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
        out.append((method, frac, float(np.mean(vals)), se, len(vals)))
    return out


# -- payload experiment -------------------------------------------------------


@dataclass
class PayloadConfig:
    scene: PayloadScene = field(default_factory=PayloadScene)
    fractions: tuple = (0.0, 0.02, 0.05, 0.1, 0.15, 0.25, 0.4, 0.5)
    budget_fraction: float = 0.2
    reps: int = 10
    eta_u: float = 0.05
    eta_l: float = 2.0
    kappa: float = 1.0
    delta: float = 0.5
    knn: int = 6
    batch: int = 10
    seed: int = 0
    jobs: int = 1

    def to_json(self) -> dict:
        d = asdict(self)
        d["scene"] = self.scene.to_json()
        return d


def _payload_rep(cfg_json: dict, rep: int) -> tuple[list, list]:
    cfg = PayloadConfig(**{**cfg_json, "scene": PayloadScene.from_json(cfg_json["scene"])})
    scene = PayloadScene.from_json(cfg_json["scene"])
    scene.seed = int(np.random.SeedSequence([cfg.seed, rep, 31]).generate_state(1)[0])
    train, val, test = generate_payload_scene(scene)
    spec = KernelSpec("linear")
    rd = _RepData(spec, train, val, test)
    truth = train.labels.copy()
    n = len(train)
    auc_rows = []
    disc_rows = []

    # scenario (b): random labeling at each fraction
    mask_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, rep, 37]))
    for frac in cfg.fractions:
        labels = _mask_inplace(truth, frac, mask_rng)
        m0 = svdd.train_svdd(rd.train.points, cfg.eta_u, spec, gram=rd.gram,
                             k_norm=rd.k_norm)
        auc_rows.append(("random", "svdd", frac, rep,
                         float(metrics.auc001(rd.score_block(m0, "svdd", "test"),
                                              test.labels))))
        y = np.where(labels == 0, 1, labels)
        mn = svdd_neg.train_svddneg_dual(rd.train.points, y, cfg.eta_u, spec,
                                         gram=rd.gram, k_norm=rd.k_norm)
        auc_rows.append(("random", "svddneg", frac, rep,
                         float(metrics.auc001(rd.score_block(mn, "svddneg", "test"),
                                              test.labels))))
        kap = cfg.kappa if np.any(labels != 0) else 0.0
        md = ssad_dual.train_ssad_dual(rd.train.points, labels, kap, cfg.eta_u,
                                       cfg.eta_l, spec, gram=rd.gram, k_norm=rd.k_norm)
        auc_rows.append(("random", "ssad", frac, rep,
                         float(metrics.auc001(rd.score_block(md, "ssad-dual", "test"),
                                              test.labels))))

    # scenario (c): one active-learning run per strategy; auc001 checkpoints
    # per round double as the discovery curve
    trainer = TrainerConfig(method="ssad-dual", kernel=spec, eta_u=cfg.eta_u,
                            eta_l=cfg.eta_l, kappa=cfg.kappa)
    budget = int(round(cfg.budget_fraction * n))
    unlabeled = train.with_labels(np.zeros(n, dtype=np.int64))
    tr_truth = {pid: int(lab) for pid, lab in zip(train.ids, truth)}
    for strat_id, strat in enumerate(("combined", "margin", "random")):
        st = StrategyConfig(strategy=strat, delta=cfg.delta,
                            k=min(cfg.knn, n - 1), batch=cfg.batch)
        state = LoopState(unlabeled, truth, test, test.labels, trainer, st,
                          seed=int(np.random.SeedSequence(
                              [cfg.seed, rep, 41, strat_id]).generate_state(1)[0]))
        state.initial_fit()
        spent = 0
        disc_rows.append((strat, rep, 0, 0))
        auc_rows.append(("active-" + strat, "ssad", 0.0, rep,
                         float(state.records[0]["auc001"])))
        while spent < budget and len(state.unlabeled_indices) > 0:
            cands = state.candidates(min(cfg.batch, budget - spent))
            if not cands:
                break
            for c in cands:
                state.apply_label(c.index, tr_truth[state.train.ids[c.index]])
            spent += len(cands)
            recd = state.finish_round()
            disc_rows.append((strat, rep, spent, recd["n_labeled_neg"]))
            auc_rows.append(("active-" + strat, "ssad", round(spent / n, 6), rep,
                             float(recd["auc001"])))
    return auc_rows, disc_rows


def payload_experiment(cfg: PayloadConfig, auc_csv=None, discovery_csv=None):
    """Cloaked-payload detection: random labeling per fraction plus
    active-learning runs with per-round checkpoints and discovery counts."""
    cfg_json = cfg.to_json()
    auc_rows, disc_rows = [], []
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futs = [pool.submit(_payload_rep, cfg_json, rep) for rep in range(cfg.reps)]
            for f in futs:
                a, d = f.result()
                auc_rows.extend(a)
                disc_rows.extend(d)
    else:
        for rep in range(cfg.reps):
            a, d = _payload_rep(cfg_json, rep)
            auc_rows.extend(a)
            disc_rows.extend(d)
    auc_rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    disc_rows.sort(key=lambda r: (r[0], r[1], r[2]))
    if auc_csv is not None:
        write_csv(auc_csv, ["scenario", "method", "fraction", "rep", "auc001"], auc_rows)
    if discovery_csv is not None:
        write_csv(discovery_csv, ["strategy", "rep", "queries", "anomalies_found"],
                  disc_rows)
    return auc_rows, disc_rows


# -- threshold adaptation -----------------------------------------------------


@dataclass
class ThresholdConfig:
    scene: PayloadScene = field(default_factory=lambda: PayloadScene(
        n_benign_train=480, n_attack_train=20, n_benign_test=400, n_attack_test=14))
    label_fraction: float = 0.05
    reps: int = 10
    delta: float = 0.5
    knn: int = 10
    seed: int = 0

    def to_json(self) -> dict:
        d = asdict(self)
        d["scene"] = self.scene.to_json()
        return d


def threshold_experiment(cfg: ThresholdConfig, out_csv=None):
    """Radius adaptation on the centroid-mode sphere (nu = 1).

    Compares the unadapted radius against the adapted one under random
    and active (combined-strategy) selection of the labeled sample;
    reports the test (fpr, tpr) of each threshold.
    """
    from .active import adapt_threshold, build_knn_graph, combined_batch

    rows = []
    for rep in range(cfg.reps):
        scene = PayloadScene.from_json(cfg.scene.to_json())
        scene.seed = int(np.random.SeedSequence([cfg.seed, rep, 53]).generate_state(1)[0])
        train, _val, test = generate_payload_scene(scene)
        spec = KernelSpec("linear")
        rd = _RepData(spec, train, _val, test)
        n = len(train)
        eta_u = 1.0 / n  # nu = 1: centroid mode
        model = svdd.train_svdd(train.points, eta_u, spec, gram=rd.gram, k_norm=rd.k_norm)
        d_train = np.sqrt(np.maximum(
            svdd.score_train(model, rd.gram.values) + model.r_squared, 0.0))
        d_test = np.sqrt(np.maximum(
            rd.score_block(model, "svdd", "test") + model.r_squared, 0.0))
        r_vanilla = float(np.sqrt(max(model.r_squared, 0.0)))
        n_label = int(np.floor(cfg.label_fraction * n))
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, rep, 59]))

        rand_idx = rng.choice(n, size=n_label, replace=False)
        r_random = adapt_threshold(r_vanilla, d_train[rand_idx],
                                   train.labels[rand_idx])

        graph = build_knn_graph(rd.gram.values, min(cfg.knn, n - 1))
        scores = svdd.score_train(model, rd.gram.values)
        ybar = np.zeros(n, dtype=np.int64)
        picked = []
        while len(picked) < n_label:
            batch = combined_batch(scores, graph, ybar, cfg.delta,
                                   min(10, n_label - len(picked)))
            for c in batch:
                ybar[c.index] = train.labels[c.index]
                picked.append(c.index)
        picked = np.asarray(picked)
        r_active = adapt_threshold(r_vanilla, d_train[picked], train.labels[picked])

        truth_anom = test.labels == -1
        for name, r_hat in (("vanilla", r_vanilla), ("random", r_random),
                            ("active", r_active)):
            flagged = d_test > r_hat
            tpr = float(np.mean(flagged[truth_anom]))
            fpr = float(np.mean(flagged[~truth_anom]))
            rows.append((name, rep, float(r_hat), fpr, tpr))
    rows.sort(key=lambda r: (r[0], r[1]))
    if out_csv is not None:
        write_csv(out_csv, ["method", "rep", "r_hat", "fpr", "tpr"], rows)
    return rows
