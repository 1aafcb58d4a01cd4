"""Query strategies and the label-acquisition loop.

The margin strategy queries the unlabeled point with the smallest
normalized |score|; the cluster strategy the point whose k-nearest
neighborhood is least dominated by nominal labels (pseudo-label 0 for
unlabeled); the combined rule mixes both with weight delta. Ties always
break toward the lowest point index.

LoopState drives query -> label -> retrain rounds and writes one JSON
record per round; the CLI loop and the labeling service share it, so a
scripted client and the simulated loop produce identical logs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels, metrics, ssad_dual, ssad_primal, svdd, svdd_neg
from .errors import ConfigError, DataError
from .features import TrainingSet
from .kernels import KernelSpec


@dataclass
class QueryResult:
    index: int
    margin_term: float
    cluster_term: float
    combined: float


def build_knn_graph(gram: np.ndarray, k: int) -> np.ndarray:
    """Row i holds the k nearest neighbors of i under the kernel distance
    d2(i, j) = k_ii - 2 k_ij + k_jj; ties break toward lower index."""
    n = gram.shape[0]
    if k < 1:
        raise ConfigError("k must be >= 1")
    if k > n - 1:
        raise ConfigError(f"k = {k} needs at least k+1 = {k + 1} points, got {n}")
    diag = np.diag(gram)
    d2 = diag[:, None] + diag[None, :] - 2.0 * gram
    np.fill_diagonal(d2, np.inf)
    idx = np.arange(n)
    rows = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        order = np.lexsort((idx, d2[i]))
        rows[i] = order[:k]
    return rows


def cluster_terms(graph_rows: np.ndarray, ybar: np.ndarray, transpose: bool = False) -> np.ndarray:
    """(1/2k) sum over neighborhood of (ybar_j + 1); in [0, 1].

    Row convention sums over the neighbors of the candidate; the
    transposed reading sums over points that list the candidate as a
    neighbor (normalized by the same 2k).
    """
    n, k = graph_rows.shape
    ybar = np.asarray(ybar, dtype=np.float64)
    if not transpose:
        return np.sum(ybar[graph_rows] + 1.0, axis=1) / (2.0 * k)
    out = np.zeros(n)
    contrib = ybar + 1.0
    for j in range(n):
        out[graph_rows[j]] += contrib[j]
    return out / (2.0 * k)


def _argmin_with_ties(values: np.ndarray, candidates: np.ndarray) -> int:
    """Index (into the full array) of the smallest value among candidates,
    lowest index on ties."""
    sub = values[candidates]
    best = candidates[np.argmin(sub)]  # np.argmin returns first minimum
    return int(best)


def margin_terms(scores: np.ndarray, unlabeled: np.ndarray) -> np.ndarray:
    """|f| / max over unlabeled |f|; zeros when all unlabeled scores are 0."""
    mag = np.abs(np.asarray(scores, dtype=np.float64))
    c = float(np.max(mag[unlabeled])) if np.any(unlabeled) else 0.0
    if c <= 0.0:
        return np.zeros_like(mag)
    return mag / c


def query_margin(scores: np.ndarray, unlabeled: Optional[np.ndarray] = None) -> int:
    scores = np.asarray(scores, dtype=np.float64)
    if unlabeled is None:
        unlabeled = np.ones(len(scores), dtype=bool)
    cand = np.flatnonzero(unlabeled)
    if len(cand) == 0:
        raise DataError("no unlabeled points to query")
    return _argmin_with_ties(np.abs(scores), cand)


def query_cluster(graph_rows: np.ndarray, ybar: np.ndarray, transpose: bool = False) -> int:
    ybar = np.asarray(ybar)
    cand = np.flatnonzero(ybar == 0)
    if len(cand) == 0:
        raise DataError("no unlabeled points to query")
    return _argmin_with_ties(cluster_terms(graph_rows, ybar, transpose), cand)


def query_combined(
    scores: np.ndarray,
    graph_rows: np.ndarray,
    ybar: np.ndarray,
    delta: float,
    transpose: bool = False,
) -> QueryResult:
    if not 0.0 <= delta <= 1.0:
        raise ConfigError(f"delta must be in [0, 1], got {delta}")
    ybar = np.asarray(ybar)
    unlabeled = ybar == 0
    cand = np.flatnonzero(unlabeled)
    if len(cand) == 0:
        raise DataError("no unlabeled points to query")
    mt = margin_terms(scores, unlabeled)
    ct = cluster_terms(graph_rows, ybar, transpose)
    comb = delta * mt + (1.0 - delta) * ct
    best = _argmin_with_ties(comb, cand)
    return QueryResult(
        index=best,
        margin_term=float(mt[best]),
        cluster_term=float(ct[best]),
        combined=float(comb[best]),
    )


def combined_batch(
    scores: np.ndarray,
    graph_rows: np.ndarray,
    ybar: np.ndarray,
    delta: float,
    batch: int,
    transpose: bool = False,
) -> list[QueryResult]:
    """The ``batch`` lowest combined values without re-scoring in between."""
    ybar = np.asarray(ybar)
    unlabeled = ybar == 0
    cand = np.flatnonzero(unlabeled)
    if len(cand) == 0:
        raise DataError("no unlabeled points to query")
    mt = margin_terms(scores, unlabeled)
    ct = cluster_terms(graph_rows, ybar, transpose)
    comb = delta * mt + (1.0 - delta) * ct
    order = cand[np.lexsort((cand, comb[cand]))][: max(batch, 0)]
    return [
        QueryResult(int(i), float(mt[i]), float(ct[i]), float(comb[i])) for i in order
    ]


def adapt_threshold(model_r: float, distances, labels) -> float:
    """Four-case threshold from labeled root distances.

    No labels -> the model radius; only nominal labels -> their max
    distance; only anomaly labels -> their min distance; both -> the mean
    over all labeled distances.
    """
    d = np.asarray(distances, dtype=np.float64)
    y = np.asarray(labels)
    if d.shape != y.shape:
        raise DataError("distances and labels must have equal length")
    pos = d[y == 1]
    neg = d[y == -1]
    if len(pos) == 0 and len(neg) == 0:
        return float(model_r)
    if len(neg) == 0:
        return float(np.max(pos))
    if len(pos) == 0:
        return float(np.min(neg))
    return float((np.sum(pos) + np.sum(neg)) / (len(pos) + len(neg)))


@dataclass(frozen=True)
class TrainerConfig:
    method: str = "ssad-dual"  # svdd | ssad-dual | ssad-primal | svddneg | ocsvm
    kernel: KernelSpec = KernelSpec(family="rbf", sigma=1.0)
    eta_u: float = 1.0
    eta_l: float = 1.0
    kappa: float = 1.0
    nu: Optional[float] = None  # when set, eta_u = 1 / (nu * n)
    huber_epsilon: float = 0.5
    huber_delta: float = 0.0
    restarts: int = 5

    def resolved_eta_u(self, n: int) -> float:
        if self.nu is not None:
            if self.nu <= 0:
                raise ConfigError("nu must be positive")
            return 1.0 / (self.nu * n)
        return self.eta_u


@dataclass(frozen=True)
class StrategyConfig:
    strategy: str = "combined"  # margin | cluster | combined | random
    delta: float = 0.5
    k: int = 10
    batch: int = 10
    transpose_adjacency: bool = False


class LoopState:
    """Mutable state of one labeling session over a fixed training set.

    Caches the train Gram matrix, the holdout kernel block and the
    adjacency graph (point geometry never changes). Labels revealed
    through ``apply_label`` feed both the trainer and the cluster term of
    subsequent queries. ``finish_round`` retrains and appends one log
    record.
    """

    def __init__(
        self,
        train: TrainingSet,
        truth: np.ndarray,
        holdout: TrainingSet,
        holdout_truth: np.ndarray,
        trainer: TrainerConfig,
        strategy: StrategyConfig,
        seed: int = 0,
    ):
        self.train = train
        self.truth = np.asarray(truth, dtype=np.int64)
        self.holdout = holdout
        self.holdout_truth = np.asarray(holdout_truth, dtype=np.int64)
        self.trainer = trainer
        self.strategy = strategy
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.labels = train.labels.copy()
        self.round = 0
        self.records: list[dict] = []
        self.model = None
        self.model_kind = ""
        self._pending: list[tuple[int, int]] = []
        self._queried: list[int] = []
        self.gram = kernels.gram(trainer.kernel, train.points)
        self._scores_train: Optional[np.ndarray] = None
        k = min(strategy.k, len(train) - 1)
        self.graph = build_knn_graph(self.gram.values, max(k, 1))
        self._cross = kernels.cross(trainer.kernel, train.points, holdout.points)
        if trainer.kernel.family == "rbf":
            self._holdout_diag = np.ones(len(holdout))
        else:
            self._holdout_diag = kernels.self_dots(holdout.points)

    # -- training ---------------------------------------------------------

    def _fit(self):
        cfg = self.trainer
        pts = self.train.points
        labels = self.labels
        n_total = len(pts)
        eta_u = cfg.resolved_eta_u(n_total)
        if cfg.method == "svdd":
            self.model = svdd.train_svdd(pts, eta_u, cfg.kernel, gram=self.gram,
                                         point_ids=self.train.ids)
        elif cfg.method == "svddneg":
            y = np.where(labels == 0, 1, labels)
            self.model = svdd_neg.train_svddneg_dual(pts, y, eta_u, cfg.kernel,
                                                     gram=self.gram, point_ids=self.train.ids)
        elif cfg.method == "ssad-dual":
            kap = cfg.kappa if np.any(labels != 0) else 0.0
            self.model = ssad_dual.train_ssad_dual(
                pts, labels, kap, eta_u, cfg.eta_l, cfg.kernel, gram=self.gram,
                point_ids=self.train.ids)
        elif cfg.method == "ssad-primal":
            loss = ssad_primal.HuberLoss(cfg.huber_delta, cfg.huber_epsilon)
            self.model = ssad_primal.train_ssad_primal(
                pts, labels, cfg.kappa, eta_u, cfg.eta_l, cfg.kernel, loss=loss,
                restarts=cfg.restarts, seed=self.seed, gram=self.gram,
                point_ids=self.train.ids)
        elif cfg.method == "ocsvm":
            y = np.where(labels == 0, 1, labels)
            self.model = svdd.train_ocsvm_dual(pts, y, eta_u, cfg.kernel,
                                               gram=self.gram, point_ids=self.train.ids)
        else:
            raise ConfigError(f"unknown trainer method {cfg.method!r}")
        self.model_kind = cfg.method
        self._scores_train = self._score_cached_train()

    def _score_cached_train(self) -> np.ndarray:
        g = self.gram.values
        if self.model_kind == "svdd":
            return svdd.score_train(self.model, g)
        if self.model_kind == "svddneg":
            return svdd_neg.score_train(self.model, g)
        if self.model_kind == "ssad-dual":
            return ssad_dual.score_convex_train(self.model, g)
        if self.model_kind == "ssad-primal":
            return ssad_primal.score_train(self.model, g)
        if self.model_kind == "ocsvm":
            return self.model.rho - (self.model.alpha * self.model.labels) @ g
        raise ConfigError(self.model_kind)

    def _score_holdout(self) -> np.ndarray:
        m = self.model
        kx = self._cross
        if self.model_kind in ("svdd", "svddneg", "ssad-primal"):
            beta = m.alpha if self.model_kind == "svdd" else m.beta
            return self._holdout_diag - 2.0 * (np.asarray(beta, dtype=np.float64) @ kx) + m.quad - m.r_squared
        if self.model_kind == "ssad-dual":
            return m.rho - (m.alpha * m.ybar) @ kx
        if self.model_kind == "ocsvm":
            return m.rho - (m.alpha * m.labels) @ kx
        raise ConfigError(self.model_kind)

    # -- loop surface -----------------------------------------------------

    @property
    def ybar(self) -> np.ndarray:
        return self.labels

    @property
    def unlabeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 0)

    def initial_fit(self) -> dict:
        """Round 0: unsupervised fit plus its metrics record."""
        self._fit()
        return self._record([], [])

    def candidates(self, batch: Optional[int] = None) -> list[QueryResult]:
        if self.model is None:
            raise ConfigError("call initial_fit first")
        b = batch if batch is not None else self.strategy.batch
        n_unlab = len(self.unlabeled_indices)
        if n_unlab == 0:
            return []
        b = min(b, n_unlab)
        st = self.strategy
        if st.strategy == "random":
            perm = self.rng.permutation(self.unlabeled_indices)[:b]
            return [QueryResult(int(i), 0.0, 0.0, 0.0) for i in perm]
        if st.strategy == "margin":
            delta = 1.0
        elif st.strategy == "cluster":
            delta = 0.0
        elif st.strategy == "combined":
            delta = st.delta
        else:
            raise ConfigError(f"unknown strategy {st.strategy!r}")
        return combined_batch(
            self._scores_train, self.graph, self.labels, delta, b,
            transpose=st.transpose_adjacency,
        )

    def apply_label(self, index: int, label: int):
        if label not in (-1, 1):
            raise DataError(f"label must be +1 or -1, got {label}")
        if self.labels[index] != 0:
            raise DataError(f"point {self.train.ids[index]} already labeled")
        self.labels[index] = label
        self._pending.append((index, label))
        self._queried.append(index)

    def finish_round(self) -> dict:
        """Retrain on the current labels and log the round. On failure the
        previous model, round counter and pending labels are kept."""
        queried = [i for i, _ in self._pending]
        given = [int(l) for _, l in self._pending]
        self._fit()
        self._pending = []
        self.round += 1
        return self._record(queried, given)

    def _record(self, queried: list[int], given: list[int]) -> dict:
        hscores = self._score_holdout()
        try:
            auc = metrics.auc001(hscores, self.holdout_truth)
        except DataError:
            auc = float("nan")
        rec = {
            "round": self.round,
            "queried_ids": [self.train.ids[i] for i in queried],
            "labels": given,
            "auc001": auc,
            "n_labeled_pos": int(np.sum(self.labels == 1)),
            "n_labeled_neg": int(np.sum(self.labels == -1)),
            "anomaly_clusters_hit": self._clusters_hit(),
        }
        self.records.append(rec)
        return rec

    def _clusters_hit(self) -> list[str]:
        hit = set()
        for i in self._queried:
            if self.truth[i] == -1:
                hit.add(self.train.ids[i].rsplit("-", 1)[0])
        return sorted(hit)

    def threshold_estimate(self) -> float:
        """Adapted radius from the current labeled sample (root distances).

        Hyperplane models are read as spheres through the constant
        self-similarity s: d^2 = s - 2 w'phi + ||w||^2, with the model
        radius at the score-zero boundary.
        """
        if self.model is None:
            return float("nan")
        m = self.model
        if hasattr(m, "r_squared"):
            r2 = m.r_squared
            d2 = self._scores_train + r2
        else:
            s = self.gram.self_similarity
            if s is None:
                return float("nan")
            w_phi = m.rho - self._scores_train
            if self.model_kind == "ssad-dual":
                coeff = m.alpha * m.ybar
            else:
                coeff = m.alpha * m.labels
            w_sq = float(coeff @ (self.gram.values @ coeff))
            d2 = s - 2.0 * w_phi + w_sq
            r2 = s - 2.0 * m.rho + w_sq
        d = np.sqrt(np.maximum(d2, 0.0))
        labeled = self.labels != 0
        return adapt_threshold(
            float(np.sqrt(max(r2, 0.0))), d[labeled], self.labels[labeled]
        )


def split_session_data(data: TrainingSet, holdout_frac: float, seed: int):
    """Deterministic holdout split shared by the loop CLI and the labeling
    service: the same dataset and seed always produce the same split. The
    training side starts fully unlabeled; ground truth is returned
    separately for the oracle and the metrics."""
    n = len(data)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 8020]))
    n_hold = int(round(holdout_frac * n))
    perm = rng.permutation(n)
    hold_idx = sorted(perm[:n_hold].tolist())
    train_idx = sorted(perm[n_hold:].tolist())
    truth_all = data.labels.copy()
    train = data.subset(train_idx).with_labels(np.zeros(len(train_idx), dtype=np.int64))
    holdout = data.subset(hold_idx)
    truth = truth_all[np.asarray(train_idx, dtype=np.int64)]
    holdout_truth = truth_all[np.asarray(hold_idx, dtype=np.int64)]
    return train, truth, holdout, holdout_truth


def run_loop(
    train: TrainingSet,
    truth: np.ndarray,
    holdout: TrainingSet,
    holdout_truth: np.ndarray,
    trainer: TrainerConfig,
    strategy: StrategyConfig,
    oracle: Callable[[str], int],
    budget: int,
    seed: int = 0,
    log_path=None,
) -> list[dict]:
    """Alternates query-batch, oracle labeling and retraining until the
    budget is exhausted; returns (and optionally writes) the round log."""
    state = LoopState(train, truth, holdout, holdout_truth, trainer, strategy, seed=seed)
    state.initial_fit()
    spent = 0
    while spent < budget and len(state.unlabeled_indices) > 0:
        batch = min(strategy.batch, budget - spent)
        cands = state.candidates(batch)
        if not cands:
            break
        for c in cands:
            state.apply_label(c.index, oracle(state.train.ids[c.index]))
        spent += len(cands)
        state.finish_round()
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            for rec in state.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return state.records
