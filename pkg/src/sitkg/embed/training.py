"""Loss, optimizer and training loop for label-level embedding models."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..kg_core import DEFAULT_VOCABULARY, SIGNATURES, LabelProjection, NodeKind, Vocabulary
from .literal import literal_gate, literal_gate_backward, sigmoid
from .models import RELATIONS, EmbeddingConfig, EntityKey, ModelParams, init_params, raw_backward, raw_scores
from .sampling import Corruptor

logger = logging.getLogger(__name__)


class NonFiniteLoss(FloatingPointError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}")
        self.epoch = epoch


def loss_and_grad(
    arrays: dict[str, np.ndarray],
    config: EmbeddingConfig,
    pos: np.ndarray,
    neg: np.ndarray,
    literals: np.ndarray | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean batch loss and its gradient.

    ``pos`` holds (B, 3) index triples (head, relation, tail); ``neg`` holds
    (B, k, 3) corruptions aligned with ``pos``. The L2 penalty covers entity
    rows and, except for RotatE phases, relation rows.
    """
    B, k = neg.shape[0], neg.shape[1]
    trip = np.concatenate([pos, neg.reshape(-1, 3)])
    hi, ri, ti = trip[:, 0], trip[:, 1], trip[:, 2]
    E, Rt = arrays["entity"], arrays["relation"]
    base = config.base
    if config.uses_literals:
        # gate each distinct entity once, then gather
        Wg, Wz, bg = arrays["W_g"], arrays["W_z"], arrays["b_g"]
        uniq, inv = np.unique(np.concatenate([hi, ti]), return_inverse=True)
        G, gcache = literal_gate(E[uniq], literals[uniq], Wg, Wz, bg)
        H, T = G[inv[: len(hi)]], G[inv[len(hi) :]]
    else:
        H, T = E[hi], E[ti]
    R = Rt[ri]
    M = arrays["projection"][ri] if "projection" in arrays else None
    s = raw_scores(base, H, R, T, M)
    sp, sn = s[:B], s[B:].reshape(B, k)

    if config.loss == "margin":
        viol = config.margin - sp[:, None] + sn
        active = (viol > 0).astype(float)
        loss = float(np.sum(viol * active) / (B * k))
        gsn = active / (B * k)
        gsp = -active.sum(axis=1) / (B * k)
    else:
        loss = float((np.logaddexp(0.0, -sp).sum() + np.logaddexp(0.0, sn).sum() / k) / B)
        gsp = -sigmoid(-sp) / B
        gsn = sigmoid(sn) / (B * k)
    gs = np.concatenate([gsp, gsn.ravel()])
    gh, gr, gt, gM = raw_backward(base, H, R, T, gs, M)

    grads = {name: np.zeros_like(a) for name, a in arrays.items()}
    if config.uses_literals:
        gG = np.zeros_like(G)
        np.add.at(gG, inv[: len(hi)], gh)
        np.add.at(gG, inv[len(hi) :], gt)
        de, dWg, dWz, db = literal_gate_backward(gG, gcache, Wg, Wz)
        grads["W_g"] += dWg
        grads["W_z"] += dWz
        grads["b_g"] += db
        grads["entity"][uniq] += de
    else:
        np.add.at(grads["entity"], hi, gh)
        np.add.at(grads["entity"], ti, gt)
    np.add.at(grads["relation"], ri, gr)
    if gM is not None:
        for r in np.unique(ri):
            grads["projection"][r] += gM[ri == r].sum(axis=0)

    if config.reg > 0:
        loss += config.reg * float(np.sum(E * E))
        grads["entity"] += 2 * config.reg * E
        if base != "rotate":
            loss += config.reg * float(np.sum(Rt * Rt))
            grads["relation"] += 2 * config.reg * Rt
    return loss, grads


class Adam:
    """Per-parameter adaptive moments (bias-corrected)."""

    def __init__(self, arrays: dict[str, np.ndarray], lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.t = 0

    def step(self, arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for name, g in grads.items():
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            arrays[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def clone(self) -> "Adam":
        other = Adam({}, self.lr, self.beta1, self.beta2, self.eps)
        other.m = {k: v.copy() for k, v in self.m.items()}
        other.v = {k: v.copy() for k, v in self.v.items()}
        other.t = self.t
        return other


def model_entities(projection: LabelProjection, vocab: Vocabulary | None = DEFAULT_VOCABULARY) -> list[EntityKey]:
    """Every projection label by kind, plus the closed action vocabularies."""
    keys = {(k, label) for k in NodeKind for label in projection.labels_of(k)}
    if vocab is not None:
        keys |= {(NodeKind.PARENT_ACTION, p) for p in vocab.parent_actions}
        keys |= {(NodeKind.SUB_ACTION, s) for s in vocab.sub_actions}
    return sorted(keys, key=lambda kl: (kl[0].value, kl[1]))


@dataclass
class _Data:
    pos: np.ndarray  # (P, 3) entity/relation indices
    weights: np.ndarray
    labels: list
    corruptor: Corruptor
    index: dict


def _prepare(projection: LabelProjection, model: ModelParams) -> _Data:
    labels, rows, counts = [], [], []
    index = {key: i for i, key in enumerate(model.entities)}
    corruptor = Corruptor(projection)
    skipped = 0
    for h, r, t, c in projection.label_triples():
        # positives without any filtered corruption cannot be contrasted
        if corruptor.options((h, r, t)) == ([], []):
            skipped += 1
            continue
        hk, tk = SIGNATURES[r]
        labels.append((h, r, t))
        rows.append((index[(hk, h)], RELATIONS.index(r), index[(tk, t)]))
        counts.append(c)
    if skipped:
        logger.info("%d positives have no valid corruption and are not trained on", skipped)
    if not rows:
        raise ValueError("no trainable positives: every triple is uncorruptible")
    w = np.asarray(counts, dtype=float)
    return _Data(np.asarray(rows, dtype=np.int64), w / w.sum(), labels, corruptor, index)


def _draw_batch(data: _Data, cfg: EmbeddingConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    picks = rng.choice(len(data.pos), size=cfg.batch_size, p=data.weights)
    neg = np.empty((cfg.batch_size, cfg.negatives, 3), dtype=np.int64)
    for b, p in enumerate(picks):
        triple = data.labels[p]
        hk, tk = SIGNATURES[triple[1]]
        for j, (h, r, t) in enumerate(data.corruptor.sample(triple, cfg.negatives, rng)):
            neg[b, j] = (data.index[(hk, h)], data.pos[p, 1], data.index[(tk, t)])
    return data.pos[picks], neg


def _run(arrays, opt: Adam, batches, cfg, literals) -> list[float]:
    losses = []
    for pos, neg in batches:
        loss, grads = loss_and_grad(arrays, cfg, pos, neg, literals)
        losses.append(loss)
        if not math.isfinite(loss):
            break
        opt.step(arrays, grads)
    return losses


def train(
    projection: LabelProjection,
    config: EmbeddingConfig,
    vocab: Vocabulary | None = DEFAULT_VOCABULARY,
) -> ModelParams:
    """Fit embeddings on the label projection.

    Positives are drawn with probability proportional to their label-pair
    counts; each epoch runs ceil(distinct positives / batch size) steps.
    With ``config.workers > 1`` the steps of an epoch are sharded across
    threads that each start from the epoch's parameters; their parameters
    and optimizer moments are averaged at the end of the epoch.
    """
    if not projection:
        raise ValueError("empty projection")
    model = init_params(config, model_entities(projection, vocab))
    data = _prepare(projection, model)
    literals = model.literal_matrix() if config.uses_literals else None
    rng = np.random.default_rng([config.seed, 1])
    opt = Adam(model.arrays, config.lr, config.beta1, config.beta2)
    steps = math.ceil(len(data.pos) / config.batch_size)

    for epoch in range(config.epochs):
        batches = [_draw_batch(data, config, rng) for _ in range(steps)]
        if config.workers <= 1:
            losses = _run(model.arrays, opt, batches, config, literals)
        else:
            losses = _sharded_epoch(model, opt, batches, config, literals)
        mean = float(np.mean(losses))
        if not math.isfinite(mean) or not all(np.isfinite(a).all() for a in model.arrays.values()):
            raise NonFiniteLoss(epoch, mean)
        model.loss_trace.append(mean)
        if epoch % 50 == 0 or epoch == config.epochs - 1:
            logger.debug("epoch %d loss %.6f", epoch, mean)
    return model


def _sharded_epoch(model: ModelParams, opt: Adam, batches, config, literals) -> list[float]:
    n = min(config.workers, len(batches))
    shards = [batches[i::n] for i in range(n)]
    states = [({k: v.copy() for k, v in model.arrays.items()}, opt.clone()) for _ in range(n)]
    with ThreadPoolExecutor(max_workers=n) as pool:
        results = list(pool.map(lambda i: _run(states[i][0], states[i][1], shards[i], config, literals), range(n)))
    for name in model.arrays:
        model.arrays[name][...] = np.mean([s[0][name] for s in states], axis=0)
        opt.m[name] = np.mean([s[1].m[name] for s in states], axis=0)
        opt.v[name] = np.mean([s[1].v[name] for s in states], axis=0)
    opt.t = max(s[1].t for s in states)
    return [loss for r in results for loss in r]


# --- numerical gradient check ----------------------------------------------


@dataclass
class GradPoint:
    config: EmbeddingConfig
    arrays: dict[str, np.ndarray]
    pos: np.ndarray
    neg: np.ndarray
    literals: np.ndarray | None = None

    def loss(self, arrays=None) -> float:
        return loss_and_grad(arrays or self.arrays, self.config, self.pos, self.neg, self.literals)[0]


def random_point(model: str, seed: int = 0, n_entities: int = 6, dim: int = 4, batch: int = 3, k: int = 2,
                 loss: str = "", scale: float = 1.0) -> GradPoint:
    """A random parameter point with a random batch, for gradient checks."""
    rng = np.random.default_rng(seed)
    cfg = EmbeddingConfig(model=model, dim=dim, negatives=k, batch_size=batch, loss=loss, literal_dim=8, reg=1e-3)
    params = init_params(replace(cfg, seed=seed), [(NodeKind.OBJECT, f"e{i}") for i in range(n_entities)])
    arrays = {name: a + scale * rng.normal(size=a.shape) for name, a in params.arrays.items()}
    pos = np.stack([rng.integers(n_entities, size=batch), rng.integers(len(RELATIONS), size=batch),
                    rng.integers(n_entities, size=batch)], axis=1)
    neg = np.stack([rng.integers(n_entities, size=(batch, k)), np.repeat(pos[:, 1:2], k, axis=1),
                    rng.integers(n_entities, size=(batch, k))], axis=2)
    literals = params.literal_matrix() if cfg.uses_literals else None
    return GradPoint(cfg, arrays, pos, neg, literals)


def random_direction(point: GradPoint, seed: int = 1) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    return {name: rng.normal(size=a.shape) for name, a in point.arrays.items()}


def gradient_check(point: GradPoint, direction: dict[str, np.ndarray], step: float = 1e-5) -> float:
    """Relative error between the analytic and central-difference directional derivatives."""
    if not 1e-6 <= step <= 1e-3:
        raise ValueError("step must lie in [1e-6, 1e-3]")
    if all(not np.any(d) for d in direction.values()):
        return 0.0
    _, grads = loss_and_grad(point.arrays, point.config, point.pos, point.neg, point.literals)
    analytic = sum(float(np.sum(grads[k] * direction[k])) for k in direction)
    plus = {k: a + step * direction.get(k, 0.0) for k, a in point.arrays.items()}
    minus = {k: a - step * direction.get(k, 0.0) for k, a in point.arrays.items()}
    numeric = (point.loss(plus) - point.loss(minus)) / (2 * step)
    denom = max(abs(analytic), abs(numeric))
    return 0.0 if denom == 0 else abs(analytic - numeric) / denom
