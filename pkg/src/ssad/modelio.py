"""Model JSON serialization.

Saved models carry coefficients, offsets and the training point ids, but
not the training vectors; scoring a saved model therefore needs the
original training dataset (matched by id) next to it.
"""

from __future__ import annotations

import json

import numpy as np

from . import ssad_dual, ssad_primal, svdd, svdd_neg
from .errors import DataError
from .features import TrainingSet
from .kernels import KernelSpec
from .ssad_primal import HuberLoss


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_json(), fh, sort_keys=True)
        fh.write("\n")


def load_model(path, train: TrainingSet):
    """Rebuild a trained model against its training set.

    The dataset must contain every point id the model references, in any
    order; vectors are realigned by id.
    """
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    kind = d.get("kind")
    if kind is None:
        raise DataError(f"{path}: missing model kind")
    ids = d.get("point_ids", [])
    pos = {pid: i for i, pid in enumerate(train.ids)}
    missing = [pid for pid in ids if pid not in pos]
    if missing:
        raise DataError(
            f"{path}: training set lacks {len(missing)} referenced points "
            f"(first: {missing[0]!r})"
        )
    order = [pos[pid] for pid in ids]
    points = train.points.take(order)
    kernel = KernelSpec.from_json(d["kernel"])
    alpha = np.asarray(d["alpha"], dtype=np.float64)
    gram = None

    if kind == "svdd":
        from . import kernels as K

        gram = K.gram(kernel, points)
        quad = float(alpha @ (gram.values @ alpha))
        return svdd.SphereModel(
            alpha=alpha, r_squared=float(d["r2"]), eta_u=float(d["eta_u"]),
            kernel=kernel, train_points=points, quad=quad, point_ids=list(ids))
    if kind == "svddneg":
        from . import kernels as K

        labels = np.asarray(d["labels"], dtype=np.int64)
        gram = K.gram(kernel, points)
        beta = alpha * labels
        quad = float(beta @ (gram.values @ beta))
        return svdd_neg.SvddNegModel(
            alpha=alpha, labels=labels, eta=float(d["eta"]), kernel=kernel,
            r_squared=float(d["r2"]), train_points=points, quad=quad,
            dual_obj=0.0, point_ids=list(ids))
    if kind == "ssad-primal":
        from . import kernels as K

        labels = np.asarray(d["labels"], dtype=np.int64)
        loss = HuberLoss(float(d["loss"]["delta"]), float(d["loss"]["epsilon"]))
        model = ssad_primal.SsadModel(
            alpha=alpha, r_squared=float(d["r2"]), gamma=float(d["gamma"]),
            kappa=float(d["kappa"]), eta_u=float(d["eta_u"]), eta_l=float(d["eta_l"]),
            kernel=kernel, loss=loss, labels=labels, train_points=points,
            objective=0.0, point_ids=list(ids))
        gram = K.gram(kernel, points)
        beta = model.beta
        model.quad = float(beta @ (gram.values @ beta))
        return model
    if kind == "ssad-dual":
        labels = np.asarray(d["labels"], dtype=np.int64)
        return ssad_dual.ConvexSsadModel(
            alpha=alpha, rho=float(d["rho"]), gamma=float(d["gamma"]),
            kappa=float(d["kappa"]), eta_u=float(d["eta_u"]), eta_l=float(d["eta_l"]),
            kernel=kernel, labels=labels, train_points=points,
            dual_obj=float(d.get("dual_obj", 0.0)),
            primal_obj=float(d.get("primal_obj", 0.0)),
            point_ids=list(ids))
    if kind == "ocsvm":
        labels = np.asarray(d["labels"], dtype=np.int64)
        return svdd.OcsvmModel(
            alpha=alpha, labels=labels, rho=float(d["rho"]), eta=float(d["eta"]),
            kernel=kernel, train_points=points, point_ids=list(ids))
    raise DataError(f"{path}: unknown model kind {kind!r}")


def score_model(model, points) -> np.ndarray:
    """Anomaly scores of ``points`` under any model kind."""
    if isinstance(model, svdd.SphereModel):
        return svdd.score(model, points)
    if isinstance(model, svdd.OcsvmModel):
        return svdd.ocsvm_scores(model, points)
    if isinstance(model, svdd_neg.SvddNegModel):
        return svdd_neg.score(model, points)
    if isinstance(model, ssad_primal.SsadModel):
        return ssad_primal.score(model, points)
    if isinstance(model, ssad_dual.ConvexSsadModel):
        return ssad_dual.score_convex(model, points)
    raise DataError(f"cannot score model of type {type(model).__name__}")
