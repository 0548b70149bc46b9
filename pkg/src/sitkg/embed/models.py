"""Scoring functions, parameter tables and candidate ranking.

Complex-valued models (ComplEx, RotatE and ComplEx with literals) store
entity vectors as 2*dim reals with real and imaginary parts interleaved.
RotatE relations are stored as phases, so every relation entry
``exp(i * phase)`` has unit modulus by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from ..kg_core import SIGNATURES, NodeKind, RelationKind
from .literal import literal_features, literal_gate

MODELS = ("transe", "transr", "distmult", "complex", "rotate", "distmult-lit", "complex-lit")
RELATIONS: tuple[RelationKind, ...] = tuple(RelationKind)

EntityKey = tuple[NodeKind, str]


class UnknownEntity(KeyError):
    pass


@dataclass
class EmbeddingConfig:
    model: str = "transe"
    dim: int = 64
    epochs: int = 200
    lr: float = 0.01
    batch_size: int = 128
    negatives: int = 4
    margin: float = 1.0
    loss: str = ""  # empty: margin for translational models, softplus otherwise
    seed: int = 0
    reg: float = 1e-5
    literal_dim: int = 256
    beta1: float = 0.9
    beta2: float = 0.999
    workers: int = 1

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if not self.loss:
            self.loss = "margin" if self.model in ("transe", "transr", "rotate") else "softplus"
        if self.loss not in ("margin", "softplus"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.dim < 1 or self.negatives < 1 or self.batch_size < 1 or self.literal_dim < 1:
            raise ValueError("dim, negatives, batch_size and literal_dim must be >= 1")
        if self.margin <= 0 or self.lr < 0 or self.reg < 0 or self.epochs < 0:
            raise ValueError("margin must be positive; lr, reg and epochs non-negative")

    @property
    def base(self) -> str:
        return self.model.removesuffix("-lit")

    @property
    def uses_literals(self) -> bool:
        return self.model.endswith("-lit")

    @property
    def entity_width(self) -> int:
        return 2 * self.dim if self.base in ("complex", "rotate") else self.dim

    @classmethod
    def from_mapping(cls, values: dict) -> "EmbeddingConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name in values and values[f.name] is not None:
                kwargs[f.name] = type(f.default)(values[f.name])
        return cls(**kwargs)


@dataclass
class ModelParams:
    config: EmbeddingConfig
    entities: list[EntityKey]
    arrays: dict[str, np.ndarray]
    loss_trace: list[float] = field(default_factory=list)
    _index: dict[EntityKey, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._index = {k: i for i, k in enumerate(self.entities)}

    def index(self, key: EntityKey) -> int | None:
        return self._index.get(key)

    def literal_matrix(self) -> np.ndarray:
        f = self.config.literal_dim
        return np.array([literal_features(label, f) for _, label in self.entities]).reshape(len(self.entities), f)

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, list(self.entities), {k: v.copy() for k, v in self.arrays.items()}, list(self.loss_trace))

    def relation_modulus(self) -> np.ndarray:
        """Moduli of RotatE relation entries (all ones by construction)."""
        ph = self.arrays["relation"]
        return np.abs(np.cos(ph) + 1j * np.sin(ph))


def init_params(config: EmbeddingConfig, entities: Sequence[EntityKey]) -> ModelParams:
    rng = np.random.default_rng(config.seed)
    d, D = config.dim, config.entity_width
    bound = 0.5 / math.sqrt(d)
    n_e, n_r = len(entities), len(RELATIONS)
    arrays = {"entity": rng.uniform(-bound, bound, size=(n_e, D))}
    if config.base == "rotate":
        arrays["relation"] = rng.uniform(-math.pi, math.pi, size=(n_r, d))
    else:
        arrays["relation"] = rng.uniform(-bound, bound, size=(n_r, D))
    if config.base == "transr":
        arrays["projection"] = np.repeat(np.eye(d)[None], n_r, axis=0)
    if config.uses_literals:
        f = config.literal_dim
        gb = 0.5 / math.sqrt(D + f)
        arrays["W_g"] = rng.uniform(-gb, gb, size=(D, D + f))
        arrays["W_z"] = rng.uniform(-gb, gb, size=(D, D + f))
        arrays["b_g"] = np.zeros(D)
    return ModelParams(config, list(entities), arrays)


# --- batched scoring with analytic gradients -------------------------------
# Every forward takes head/relation/tail rows (B, width) and returns (B,)
# scores; every backward takes dL/dscore (B,) and returns row gradients.


def _safe_unit(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = np.linalg.norm(v, axis=-1)
    safe = np.where(n > 0, n, 1.0)
    return n, v / safe[..., None]


def transe_forward(h, r, t):
    return -np.linalg.norm(h + r - t, axis=-1)


def transe_backward(h, r, t, gs):
    _, u = _safe_unit(h + r - t)
    g = -gs[:, None] * u
    return g, g, -g


def _matvec(M, x):
    return np.matmul(M, x[..., None])[..., 0]


def transr_forward(h, r, t, M):
    v = _matvec(M, h) + r - _matvec(M, t)
    return -np.linalg.norm(v, axis=-1)


def transr_backward(h, r, t, M, gs):
    diff = h - t
    v = _matvec(M, diff) + r
    _, u = _safe_unit(v)
    gv = -gs[:, None] * u
    gd = _matvec(np.swapaxes(M, 1, 2), gv)
    gM = gv[:, :, None] * diff[:, None, :]
    return gd, gv, -gd, gM


def distmult_forward(h, r, t):
    # r * (h * t) keeps score(h, r, t) == score(t, r, h) bit for bit
    return np.sum(r * (h * t), axis=-1)


def distmult_backward(h, r, t, gs):
    g = gs[:, None]
    return g * r * t, g * h * t, g * h * r


def _split(x):
    return x[..., 0::2], x[..., 1::2]


def _join(re, im):
    out = np.empty(re.shape[:-1] + (2 * re.shape[-1],))
    out[..., 0::2] = re
    out[..., 1::2] = im
    return out


def complex_forward(h, r, t):
    hr, hi = _split(h)
    rr, ri = _split(r)
    tr, ti = _split(t)
    # same grouping as DistMult, so zero imaginary parts reproduce it exactly
    return np.sum(rr * (hr * tr + hi * ti) + ri * (hr * ti - hi * tr), axis=-1)


def complex_backward(h, r, t, gs):
    hr, hi = _split(h)
    rr, ri = _split(r)
    tr, ti = _split(t)
    g = gs[:, None]
    gh = _join(g * (rr * tr + ri * ti), g * (rr * ti - ri * tr))
    gr = _join(g * (hr * tr + hi * ti), g * (hr * ti - hi * tr))
    gt = _join(g * (hr * rr - hi * ri), g * (hi * rr + hr * ri))
    return gh, gr, gt


def _rotate_residual(h, phase, t):
    hr, hi = _split(h)
    tr, ti = _split(t)
    c, s = np.cos(phase), np.sin(phase)
    return hr * c - hi * s - tr, hr * s + hi * c - ti, c, s


def rotate_forward(h, phase, t):
    vr, vi, _, _ = _rotate_residual(h, phase, t)
    return -np.sqrt(np.sum(vr * vr + vi * vi, axis=-1))


def rotate_backward(h, phase, t, gs):
    hr, hi = _split(h)
    vr, vi, c, s = _rotate_residual(h, phase, t)
    n = np.sqrt(np.sum(vr * vr + vi * vi, axis=-1))
    safe = np.where(n > 0, n, 1.0)
    gvr = -(gs / safe)[:, None] * vr
    gvi = -(gs / safe)[:, None] * vi
    gh = _join(gvr * c + gvi * s, -gvr * s + gvi * c)
    gt = _join(-gvr, -gvi)
    gphase = gvr * (-hr * s - hi * c) + gvi * (hr * c - hi * s)
    return gh, gphase, gt


def raw_scores(base: str, h, r, t, M=None) -> np.ndarray:
    if base == "transe":
        return transe_forward(h, r, t)
    if base == "transr":
        return transr_forward(h, r, t, M)
    if base == "distmult":
        return distmult_forward(h, r, t)
    if base == "complex":
        return complex_forward(h, r, t)
    if base == "rotate":
        return rotate_forward(h, r, t)
    raise ValueError(base)


def raw_backward(base: str, h, r, t, gs, M=None):
    """Returns (gh, gr, gt, gM) with gM None except for TransR."""
    if base == "transr":
        return transr_backward(h, r, t, M, gs)
    fn = {
        "transe": transe_backward,
        "distmult": distmult_backward,
        "complex": complex_backward,
        "rotate": rotate_backward,
    }[base]
    gh, gr, gt = fn(h, r, t, gs)
    return gh, gr, gt, None


# --- label-level scoring and ranking ---------------------------------------


def entity_vectors(model: ModelParams, keys: Sequence[EntityKey]) -> np.ndarray:
    """Final entity rows, after the literal gate for literal models.

    Literal models embed labels missing from the entity table as a zero
    vector passed through the gate, so any label can be scored.
    """
    cfg = model.config
    E = model.arrays["entity"]
    rows = np.zeros((len(keys), cfg.entity_width))
    for i, key in enumerate(keys):
        idx = model.index(key)
        if idx is None:
            if not cfg.uses_literals:
                raise UnknownEntity(f"{key[0].value}:{key[1]}")
        else:
            rows[i] = E[idx]
    if cfg.uses_literals:
        lit = np.array([literal_features(label, cfg.literal_dim) for _, label in keys]).reshape(len(keys), -1)
        rows, _ = literal_gate(rows, lit, model.arrays["W_g"], model.arrays["W_z"], model.arrays["b_g"])
    return rows


def score_many(model: ModelParams, triples: Sequence[tuple[str, RelationKind, str]]) -> np.ndarray:
    if not triples:
        return np.zeros(0)
    heads = [(SIGNATURES[r][0], h) for h, r, _ in triples]
    tails = [(SIGNATURES[r][1], t) for _, r, t in triples]
    vecs = entity_vectors(model, heads + tails)
    n = len(triples)
    ridx = np.array([RELATIONS.index(r) for _, r, _ in triples])
    R = model.arrays["relation"][ridx]
    M = model.arrays["projection"][ridx] if "projection" in model.arrays else None
    return raw_scores(model.config.base, vecs[:n], R, vecs[n:], M)


def score(model: ModelParams, h: str, r: RelationKind, t: str) -> float:
    """Plausibility of the label triple (higher is more plausible)."""
    return float(score_many(model, [(h, r, t)])[0])


Pattern = tuple[str | None, RelationKind, str | None]


def rank_candidates(model: ModelParams, patterns: Sequence[Pattern], candidates: Sequence[str]) -> list[str]:
    """Order candidates by summed score over all patterns.

    Each pattern has exactly one None slot that the candidate fills. Ties
    fall back to lexicographic order.
    """
    if not candidates:
        raise ValueError("no candidates")
    if not patterns:
        return sorted(candidates)
    triples = []
    for cand in candidates:
        for h, r, t in patterns:
            if (h is None) == (t is None):
                raise ValueError(f"pattern {h, r, t} must leave exactly one open slot")
            triples.append((cand if h is None else h, r, cand if t is None else t))
    scores = score_many(model, triples).reshape(len(candidates), len(patterns)).sum(axis=1)
    order = sorted(range(len(candidates)), key=lambda i: (-scores[i], candidates[i]))
    return [candidates[i] for i in order]
