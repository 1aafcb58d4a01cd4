"""Synthetic scenes: planted Gaussian clusters in the plane and an
HTTP-flavored payload generator with cloaking.

The Gaussian scene plants nominal clusters plus anomaly clusters, some of
which appear only in the test split (novel at test time). The payload
scene emits templated benign requests and per-class high-entropy attack
bodies; cloaking prepends a full benign request to the attack body,
dragging it toward normal in n-gram space. Attack classes are split
disjointly between train and test. Ids encode the originating cluster
("nom0-...", "atk3-...") so discovery curves can attribute queries.

Ground truth is written into the label field (+1 nominal, -1 anomaly);
experiments mask it down to the semi-supervised subset they reveal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .features import DensePoints, NGramConfig, Payload, SparsePoints, TrainingSet, embed


@dataclass(frozen=True)
class GaussCluster:
    mean: tuple[float, ...]
    scale: float
    count: int


@dataclass
class SyntheticScene:
    nominal: list[GaussCluster] = field(
        default_factory=lambda: [
            GaussCluster((-2.0, 0.0), 0.5, 200),
            GaussCluster((2.0, 0.0), 0.5, 200),
        ]
    )
    train_anomaly: list[GaussCluster] = field(
        default_factory=lambda: [GaussCluster((0.0, 2.2), 0.25, 20)]
    )
    test_anomaly: list[GaussCluster] = field(
        default_factory=lambda: [
            GaussCluster((-2.5, 2.8), 0.25, 20),
            GaussCluster((3.0, -2.6), 0.25, 20),
        ]
    )
    test_scale: float = 2.0  # test split scales nominal/train-anomaly counts
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "type": "gauss2d",
            "nominal": [asdict(c) for c in self.nominal],
            "train_anomaly": [asdict(c) for c in self.train_anomaly],
            "test_anomaly": [asdict(c) for c in self.test_anomaly],
            "test_scale": self.test_scale,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SyntheticScene":
        def clusters(lst):
            return [GaussCluster(tuple(c["mean"]), float(c["scale"]), int(c["count"])) for c in lst]

        return cls(
            nominal=clusters(d["nominal"]),
            train_anomaly=clusters(d["train_anomaly"]),
            test_anomaly=clusters(d["test_anomaly"]),
            test_scale=float(d.get("test_scale", 2.0)),
            seed=int(d.get("seed", 0)),
        )


def _sample_cluster(rng, c: GaussCluster, count: int) -> np.ndarray:
    return np.asarray(c.mean, dtype=np.float64) + c.scale * rng.normal(size=(count, len(c.mean)))


def _make_split(rng, scene: SyntheticScene, tag: str, with_novel: bool, scale: float = 1.0):
    ids, rows, labels = [], [], []
    for ci, c in enumerate(scene.nominal):
        cnt = max(int(round(c.count * scale)), 1)
        for k, x in enumerate(_sample_cluster(rng, c, cnt)):
            ids.append(f"nom{ci}-{tag}-{k:05d}")
            rows.append(x)
            labels.append(1)
    for ci, c in enumerate(scene.train_anomaly):
        cnt = max(int(round(c.count * scale)), 1)
        for k, x in enumerate(_sample_cluster(rng, c, cnt)):
            ids.append(f"anom{ci}-{tag}-{k:05d}")
            rows.append(x)
            labels.append(-1)
    if with_novel:
        base = len(scene.train_anomaly)
        for ci, c in enumerate(scene.test_anomaly):
            for k, x in enumerate(_sample_cluster(rng, c, c.count)):
                ids.append(f"anom{base + ci}-{tag}-{k:05d}")
                rows.append(x)
                labels.append(-1)
    return TrainingSet(ids, np.array(labels), DensePoints(np.array(rows)))


def generate_scene(scene: SyntheticScene):
    """(train, validation, test) with ground-truth labels; the test split
    contains the novel anomaly clusters, train/validation never do."""
    ss = np.random.SeedSequence(scene.seed)
    r_train, r_val, r_test = [np.random.default_rng(s) for s in ss.spawn(3)]
    train = _make_split(r_train, scene, "tr", with_novel=False)
    val = _make_split(r_val, scene, "va", with_novel=False)
    test = _make_split(r_test, scene, "te", with_novel=True, scale=scene.test_scale)
    return train, val, test


def mask_labels(ts: TrainingSet, fraction: float, seed: int) -> TrainingSet:
    """Keep ground-truth labels on floor(fraction * N) uniformly chosen
    points; zero the rest."""
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"fraction must be in [0, 1], got {fraction}")
    n = len(ts)
    keep = int(np.floor(fraction * n))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(n, size=keep, replace=False) if keep else np.empty(0, dtype=np.int64)
    labels = np.zeros(n, dtype=np.int64)
    labels[chosen] = ts.labels[chosen]
    return ts.with_labels(labels)


# -- payload scene ----------------------------------------------------------

_METHODS = ["GET", "GET", "GET", "POST"]
_PATHS = [
    "/index.html", "/api/v1/users", "/api/v1/orders", "/static/js/app.js",
    "/static/css/site.css", "/images/logo.png", "/login", "/search",
    "/api/v1/items", "/health", "/docs/manual.html", "/favicon.ico",
]
_HOSTS = ["shop.example.com", "www.example.com", "api.example.com", "intranet.local"]
_AGENTS = [
    "Mozilla/5.0 (X11; Linux x86_64) Gecko/20100101 Firefox/115.0",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) Chrome/120.0",
    "curl/8.4.0",
    "python-requests/2.31",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 13_5) Safari/605.1.15",
]
_ACCEPTS = ["*/*", "text/html,application/xhtml+xml", "application/json"]


_B64 = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"

# structural idioms shared across attack classes (NOP sleds, format-string
# and traversal fragments, injection snippets); the transferable signal
# that labeled attacks carry about novel ones
_ATTACK_MOTIFS = [
    b"\x90\x90\x90\x90\x90\x90\x90\x90",
    b"%u9090%u6858%ucbd3",
    b"/bin/sh\x00-c\x00",
    b"AAAAAAAAAAAAAAAA",
    b"\xff\xbf\xff\xbf\xff\xbf",
    b"../../../../etc/passwd",
    b"<script>alert(1)</script>",
    b"' OR 1=1 --",
    b"\xcc\xcc\xcc\xcc\xcc\xcc",
    b"cmd.exe /c ",
    b"\x31\xc0\x50\x68//sh",
    b"%n%n%n%n%n",
]


def _token_pool() -> list[bytes]:
    # fixed corpus vocabulary for POST bodies; bodies differ in token mix,
    # not in raw alphabet, so labeled uploads generalize to unseen ones
    rng = np.random.default_rng(20240809)
    pool = []
    for _ in range(400):
        size = int(rng.integers(6, 13))
        pool.append(bytes(rng.choice(list(_B64), size=size)))
    return pool


_TOKENS = _token_pool()


def _hex_chars(rng: np.random.Generator, count: int) -> str:
    return bytes(rng.choice(list(b"0123456789abcdef"), size=count)).decode()


def benign_request(rng: np.random.Generator, body_prob: float = 0.25,
                   body_tokens_max: int = 40, upload_prob: float = 0.05) -> bytes:
    """Templated request. A fraction are POSTs carrying a token-pool body;
    a smaller fraction are bulk uploads whose body dominates the payload.
    Both tails are structured (shared vocabulary), so labels on a few of
    them generalize to the rest."""
    r = rng.random()
    upload = r < upload_prob
    with_body = upload or r < upload_prob + body_prob
    method = "POST" if with_body else _METHODS[rng.integers(len(_METHODS))]
    path = _PATHS[rng.integers(len(_PATHS))]
    if rng.random() < 0.3:
        path += "?q=" + bytes(rng.integers(97, 123, size=6)).decode()
    host = _HOSTS[rng.integers(len(_HOSTS))]
    agent = _AGENTS[rng.integers(len(_AGENTS))]
    accept = _ACCEPTS[rng.integers(len(_ACCEPTS))]
    sid = _hex_chars(rng, 16)
    body = b""
    if with_body:
        if upload:
            n_tok = int(rng.integers(80, 151))
        else:
            n_tok = int(rng.integers(8, body_tokens_max + 1))
        toks = [_TOKENS[int(rng.integers(len(_TOKENS)))] for _ in range(n_tok)]
        body = b"data=" + b"&t=".join(toks)
    req = (
        f"{method} {path} HTTP/1.1\r\n"
        f"Host: {host}\r\n"
        f"User-Agent: {agent}\r\n"
        f"Accept: {accept}\r\n"
        f"Cookie: sid={sid}\r\n"
        "Connection: keep-alive\r\n\r\n"
    )
    return req.encode() + body


def attack_body(rng_class: np.random.Generator, rng_var: np.random.Generator,
                length: int = 80, mutations: int = 6) -> bytes:
    """Class-specific high-entropy filler interleaved with shared exploit
    motifs, plus a few per-variant byte mutations. The variant length is
    drawn around ``length`` so attack sizes overlap benign POST bodies."""
    length = int(rng_var.integers(max(length // 2, 24), length * 2 + 1))
    base = bytearray(rng_class.integers(0, 256, size=length * 2, dtype=np.uint8).tobytes()[:length])
    n_motifs = 5 + int(rng_class.integers(0, 4))
    for m in range(n_motifs):
        motif = _ATTACK_MOTIFS[int(rng_class.integers(0, len(_ATTACK_MOTIFS)))]
        pos = int(rng_class.integers(0, max(length - len(motif), 1)))
        base[pos : pos + len(motif)] = motif[: max(length - pos, 0)]
    for _ in range(mutations):
        pos = int(rng_var.integers(0, length))
        base[pos] = int(rng_var.integers(0, 256))
    return bytes(base)


@dataclass
class PayloadScene:
    n_benign_train: int = 480
    n_benign_test: int = 400
    n_attack_train: int = 36
    n_attack_test: int = 14
    n_classes_train: int = 6
    n_classes_test: int = 3
    cloak: bool = True
    body_length: int = 50
    n_stealth_classes: int = 2
    benign_tokens_max: int = 40
    benign_body_prob: float = 0.3
    benign_upload_prob: float = 0.12
    ngram: NGramConfig = field(default_factory=NGramConfig)
    seed: int = 0

    def to_json(self) -> dict:
        d = asdict(self)
        d["type"] = "payload"
        d["ngram"] = {"n": self.ngram.n, "binary": self.ngram.binary,
                      "normalize": self.ngram.normalize}
        return d

    @classmethod
    def from_json(cls, d: dict) -> "PayloadScene":
        ng = d.get("ngram", {})
        return cls(
            n_benign_train=int(d.get("n_benign_train", 480)),
            n_benign_test=int(d.get("n_benign_test", 400)),
            n_attack_train=int(d.get("n_attack_train", 36)),
            n_attack_test=int(d.get("n_attack_test", 14)),
            n_classes_train=int(d.get("n_classes_train", 6)),
            n_classes_test=int(d.get("n_classes_test", 3)),
            cloak=bool(d.get("cloak", True)),
            body_length=int(d.get("body_length", 50)),
            n_stealth_classes=int(d.get("n_stealth_classes", 2)),
            benign_tokens_max=int(d.get("benign_tokens_max", 40)),
            benign_body_prob=float(d.get("benign_body_prob", 0.3)),
            benign_upload_prob=float(d.get("benign_upload_prob", 0.12)),
            ngram=NGramConfig(n=int(ng.get("n", 3)), binary=bool(ng.get("binary", True)),
                              normalize=bool(ng.get("normalize", True))),
            seed=int(d.get("seed", 0)),
        )


def _attack_payload(rng_var, class_seed: int, scene: PayloadScene,
                    stealth: bool = False) -> bytes:
    rng_class = np.random.default_rng([987, class_seed])
    if stealth and scene.cloak:
        # fully blended variant: benign header plus a class-shared token
        # body and a short motif-free exploit body. Scores like an ordinary
        # POST, so boundary-driven queries never surface it; only the tight
        # mutual cluster of its variants gives it away.
        toks = [_TOKENS[int(rng_class.integers(len(_TOKENS)))] for _ in range(70)]
        blend = b"data=" + b"&t=".join(toks)
        body = bytearray(rng_class.integers(0, 256, size=30, dtype=np.uint8).tobytes())
        for _ in range(3):
            body[int(rng_var.integers(0, 30))] = int(rng_var.integers(0, 256))
        return benign_request(rng_var, body_prob=0.0) + blend + bytes(body)
    body = attack_body(rng_class, rng_var, scene.body_length)
    if scene.cloak:
        return benign_request(rng_var, body_prob=0.0) + body
    return body


def _payload_split(rng, scene: PayloadScene, tag: str, n_benign: int, n_attack: int,
                   class_ids: Sequence[int], stealth_ids=()) -> TrainingSet:
    ids, payloads, labels = [], [], []
    for k in range(n_benign):
        ids.append(f"benign-{tag}-{k:05d}")
        payloads.append(benign_request(rng, body_prob=scene.benign_body_prob,
                                       body_tokens_max=scene.benign_tokens_max,
                                       upload_prob=scene.benign_upload_prob))
        labels.append(1)
    for k in range(n_attack):
        cls = class_ids[k % len(class_ids)]
        ids.append(f"atk{cls}-{tag}-{k:05d}")
        payloads.append(_attack_payload(rng, cls, scene, stealth=cls in stealth_ids))
        labels.append(-1)
    vecs = [embed(Payload(i, p), scene.ngram) for i, p in zip(ids, payloads)]
    return TrainingSet(ids, np.array(labels), SparsePoints(vecs),
                       payloads=payloads, cfg=scene.ngram)


def generate_payload_scene(scene: PayloadScene):
    """(train, validation, test); attack classes are disjoint between the
    train/validation side and the test side."""
    ss = np.random.SeedSequence([scene.seed, 1311])
    r_train, r_val, r_test = [np.random.default_rng(s) for s in ss.spawn(3)]
    train_classes = list(range(scene.n_classes_train))
    test_classes = list(range(scene.n_classes_train,
                              scene.n_classes_train + scene.n_classes_test))
    n_stealth = max(0, min(scene.n_stealth_classes, scene.n_classes_train - 1))
    stealth_ids = set(train_classes[len(train_classes) - n_stealth:]) if n_stealth else set()
    train = _payload_split(r_train, scene, "tr", scene.n_benign_train,
                           scene.n_attack_train, train_classes, stealth_ids)
    val = _payload_split(r_val, scene, "va", scene.n_benign_train,
                         scene.n_attack_train, train_classes, stealth_ids)
    test = _payload_split(r_test, scene, "te", scene.n_benign_test,
                          scene.n_attack_test, test_classes)
    return train, val, test


def load_scene(path):
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    kind = d.get("type")
    if kind == "gauss2d":
        return SyntheticScene.from_json(d)
    if kind == "payload":
        return PayloadScene.from_json(d)
    raise DataError(f"unknown scene type {kind!r}")
