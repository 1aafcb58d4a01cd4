"""REST backend for human-in-the-loop labeling sessions.

Endpoints (JSON bodies, errors as {"error", "code"}):

    POST /api/sessions                     create from a dataset file
    GET  /api/sessions/{id}                full state (rounds, ROC, threshold)
    GET  /api/sessions/{id}/queries?n=     top query candidates
    POST /api/sessions/{id}/labels         label one point (+1/-1)
    POST /api/sessions/{id}/retrain        retrain, advance the round

The loop engine is the same LoopState the CLI `loop` command drives, so a
scripted client reproduces the CLI's session log exactly. Mutations per
session are serialized behind a lock and every mutation persists a JSON
snapshot; on restart the session is replayed from it.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .active import LoopState, StrategyConfig, TrainerConfig, split_session_data
from .errors import ConfigError, DataError, NumericalError
from .features import NGramConfig, load_dataset
from .kernels import KernelSpec

PREVIEW_CAP = 4096


class SessionConfig(BaseModel):
    method: str = "ssad-dual"
    kernel: str = "linear"
    sigma: float = 1.0
    eta_u: float = 0.05
    eta_l: float = 1.0
    kappa: float = 1.0
    delta: float = 0.5
    k: int = 10
    batch: int = 10
    seed: int = 0
    holdout_fraction: float = 0.2
    ngram_n: int = 3


class CreateSessionRequest(BaseModel):
    dataset_path: str
    config: SessionConfig = SessionConfig()


class LabelRequest(BaseModel):
    point_id: str
    label: int


def _printable(data: bytes) -> str:
    return "".join(chr(b) if 32 <= b < 127 else "." for b in data)


def _preview(data: bytes) -> dict:
    truncated = len(data) > PREVIEW_CAP
    head = data[:PREVIEW_CAP]
    return {
        "hex": head.hex(),
        "printable": _printable(head),
        "truncated": truncated,
        "length": len(data),
    }


class Session:
    def __init__(self, session_id: str, dataset_path: str, cfg: SessionConfig,
                 store_dir: Optional[str]):
        self.id = session_id
        self.dataset_path = dataset_path
        self.cfg = cfg
        self.store_dir = store_dir
        self.lock = threading.Lock()
        self.completed_rounds: list[list[tuple[str, int]]] = []
        self.pending: list[tuple[str, int]] = []
        data = load_dataset(dataset_path, NGramConfig(n=cfg.ngram_n))
        if np.any(data.labels == 0):
            raise DataError(
                "session datasets carry ground truth in the label field; "
                "found unlabeled records"
            )
        train, truth, holdout, holdout_truth = split_session_data(
            data, cfg.holdout_fraction, cfg.seed)
        trainer = TrainerConfig(method=cfg.method,
                                kernel=KernelSpec(cfg.kernel, cfg.sigma),
                                eta_u=cfg.eta_u, eta_l=cfg.eta_l, kappa=cfg.kappa)
        strategy = StrategyConfig(strategy="combined", delta=cfg.delta,
                                  k=min(cfg.k, len(train) - 1), batch=cfg.batch)
        self.state = LoopState(train, truth, holdout, holdout_truth, trainer,
                               strategy, seed=cfg.seed)
        self.index_of = {pid: i for i, pid in enumerate(train.ids)}
        self.model_version = 0

    # -- engine ------------------------------------------------------------

    def start(self):
        self.state.initial_fit()
        self.model_version = 1
        self._persist()

    def label(self, point_id: str, label: int):
        if point_id not in self.index_of:
            raise KeyError(point_id)
        self.state.apply_label(self.index_of[point_id], label)
        self.pending.append((point_id, int(label)))
        self._persist()

    def retrain(self) -> dict:
        rec = self.state.finish_round()
        self.completed_rounds.append(self.pending)
        self.pending = []
        self.model_version += 1
        self._persist()
        return rec

    def queries(self, n: int) -> list[dict]:
        cands = self.state.candidates(n)
        out = []
        rows = self.state.graph
        labels = self.state.labels
        for c in cands:
            neigh = rows[c.index]
            summary = {
                "pos": int(np.sum(labels[neigh] == 1)),
                "neg": int(np.sum(labels[neigh] == -1)),
                "unlabeled": int(np.sum(labels[neigh] == 0)),
            }
            pid = self.state.train.ids[c.index]
            if self.state.train.payloads is not None:
                preview = _preview(self.state.train.payloads[c.index])
            else:
                vec = self.state.train.points[c.index]
                preview = {"vector": [float(v) for v in np.asarray(vec)]}
            out.append({
                "point_id": pid,
                "score": float(self.state._scores_train[c.index]),
                "margin_term": c.margin_term,
                "cluster_term": c.cluster_term,
                "combined": c.combined,
                "neighbor_labels": summary,
                "preview": preview,
            })
        return out

    def snapshot_state(self) -> dict:
        st = self.state
        roc_points = []
        try:
            from . import metrics

            curve = metrics.roc(st._score_holdout(), st.holdout_truth)
            roc_points = curve.to_points()
        except Exception:
            pass
        return {
            "session_id": self.id,
            "dataset_path": self.dataset_path,
            "config": self.cfg.model_dump(),
            "round": st.round,
            "model_version": self.model_version,
            "model_kind": st.model_kind,
            "n_points": len(st.train),
            "n_unlabeled": int(len(st.unlabeled_indices)),
            "n_labeled_pos": int(np.sum(st.labels == 1)),
            "n_labeled_neg": int(np.sum(st.labels == -1)),
            "pending_labels": len(self.pending),
            "records": st.records,
            "roc_points": roc_points,
            "threshold_estimate": st.threshold_estimate(),
        }

    # -- persistence ---------------------------------------------------------

    def _persist(self):
        if self.store_dir is None:
            return
        os.makedirs(self.store_dir, exist_ok=True)
        snap = {
            "session_id": self.id,
            "dataset_path": self.dataset_path,
            "config": self.cfg.model_dump(),
            "completed_rounds": [
                [[pid, lab] for pid, lab in rnd] for rnd in self.completed_rounds
            ],
            "pending": [[pid, lab] for pid, lab in self.pending],
        }
        path = os.path.join(self.store_dir, f"{self.id}.json")
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(snap, fh, sort_keys=True)
        os.replace(tmp, path)

    @classmethod
    def restore(cls, path: str, store_dir: Optional[str]) -> "Session":
        with open(path, "r", encoding="utf-8") as fh:
            snap = json.load(fh)
        cfg = SessionConfig(**snap["config"])
        sess = cls(snap["session_id"], snap["dataset_path"], cfg, store_dir)
        sess.state.initial_fit()
        sess.model_version = 1
        for rnd in snap["completed_rounds"]:
            for pid, lab in rnd:
                sess.state.apply_label(sess.index_of[pid], int(lab))
                sess.pending.append((pid, int(lab)))
            sess.retrain()
        for pid, lab in snap["pending"]:
            sess.state.apply_label(sess.index_of[pid], int(lab))
            sess.pending.append((pid, int(lab)))
        return sess


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": message, "code": status})


def create_app(data_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="labeling service")
    sessions: dict[str, Session] = {}
    app.state.sessions = sessions

    if data_dir is not None and os.path.isdir(data_dir):
        for name in sorted(os.listdir(data_dir)):
            if name.endswith(".json"):
                try:
                    sess = Session.restore(os.path.join(data_dir, name), data_dir)
                    sessions[sess.id] = sess
                except Exception:
                    continue  # stale or unreadable snapshot

    @app.exception_handler(Exception)
    async def unhandled(request: Request, exc: Exception):
        return _error(500, f"internal error: {exc}")

    @app.post("/api/sessions")
    def create_session(req: CreateSessionRequest):
        try:
            sid = uuid.uuid4().hex[:12]
            sess = Session(sid, req.dataset_path, req.config, data_dir)
        except (DataError, FileNotFoundError, OSError) as exc:
            return _error(422, f"dataset not usable: {exc}")
        except ConfigError as exc:
            return _error(400, f"bad config: {exc}")
        try:
            sess.start()
        except NumericalError as exc:
            return _error(400, f"initial training failed: {exc}")
        sessions[sid] = sess
        return {"session_id": sid, "metrics": sess.state.records[0]}

    @app.get("/api/sessions/{sid}")
    def get_state(sid: str):
        sess = sessions.get(sid)
        if sess is None:
            return _error(404, f"no session {sid}")
        with sess.lock:
            return sess.snapshot_state()

    @app.get("/api/sessions/{sid}/queries")
    def get_queries(sid: str, n: int = 10):
        sess = sessions.get(sid)
        if sess is None:
            return _error(404, f"no session {sid}")
        with sess.lock:
            if len(sess.state.unlabeled_indices) == 0:
                return _error(409, "all points are labeled")
            return {"candidates": sess.queries(n)}

    @app.post("/api/sessions/{sid}/labels")
    def post_label(sid: str, req: LabelRequest):
        sess = sessions.get(sid)
        if sess is None:
            return _error(404, f"no session {sid}")
        if req.label not in (-1, 1):
            return _error(400, f"label must be +1 or -1, got {req.label}")
        with sess.lock:
            try:
                sess.label(req.point_id, req.label)
            except KeyError:
                return _error(404, f"no point {req.point_id!r}")
            except DataError as exc:
                return _error(409, str(exc))
            return {"ok": True, "round": sess.state.round,
                    "pending_labels": len(sess.pending)}

    @app.post("/api/sessions/{sid}/retrain")
    def retrain(sid: str):
        sess = sessions.get(sid)
        if sess is None:
            return _error(404, f"no session {sid}")
        with sess.lock:
            try:
                rec = sess.retrain()
            except Exception as exc:
                return _error(500, f"retraining failed, previous model kept: {exc}")
            return {"metrics": rec, "model_version": sess.model_version}

    return app
