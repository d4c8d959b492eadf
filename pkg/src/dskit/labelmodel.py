"""Vote aggregation: a generative reliability model over LF votes trained
jointly with a linear feature model under a KL agreement penalty.

The graphical side scores class ``k`` for a token by summing, over the LFs
that voted, ``theta[j, k]`` when LF ``j`` voted ``k`` and
``-theta[j, k] / (K - 1)`` when it voted something else; abstentions
contribute nothing to the posterior.  The same potentials, normalized per LF
over the five possible vote outcomes (four classes plus abstain), define a
proper generative likelihood whose marginal over the latent class is
maximized on unlabeled rows.  The feature side is a softmax-linear
classifier over a fixed 71-dimensional token feature map.

The joint objective, averaged over rows, is

    CE(graphical posterior, gold) + CE(feature posterior, gold)   [gold rows]
    + marginal negative log-likelihood of the votes                [unlabeled]
    + kl_weight * KL(graphical posterior || feature posterior)     [unlabeled]

optimized with AdamW (decoupled weight decay) using separate learning rates
for the two parameter blocks.  All gradients are analytic; see
``loss_and_gradients``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .docmodel import ClassLabel, Document, Token
from .lfkit import ABSTAIN, LFSet, LabelMatrix, apply_lf

N_CLASSES = 4
HASH_BUCKETS = 64
FEATURE_DIM = 7 + HASH_BUCKETS


class DimensionMismatch(ValueError):
    pass


class EmptyMatrix(ValueError):
    pass


class NonFiniteLoss(RuntimeError):
    """Training diverged; the message carries the epoch index."""


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int = 32
    lr_feature: float = 5e-5
    lr_graphical: float = 0.01
    epochs: int = 10
    kl_weight: float = 1.0
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr_feature <= 0 or self.lr_graphical <= 0:
            raise ValueError("learning rates must be > 0")
        if self.kl_weight < 0:
            raise ValueError("kl_weight must be >= 0")


@dataclass
class GraphicalParams:
    theta: np.ndarray        # (m, K) per-LF per-class reliability potentials
    class_prior: np.ndarray  # (K,) prior logits

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.class_prior = np.asarray(self.class_prior, dtype=np.float64)
        if self.theta.ndim != 2 or self.class_prior.ndim != 1:
            raise DimensionMismatch("theta must be (m, K), class_prior (K,)")
        if self.theta.shape[1] != self.class_prior.shape[0]:
            raise DimensionMismatch("theta and class_prior disagree on K")
        if not (np.isfinite(self.theta).all() and np.isfinite(self.class_prior).all()):
            raise ValueError("graphical parameters must be finite")


@dataclass
class FeatureParams:
    weights: np.ndarray  # (K, d)
    bias: np.ndarray     # (K,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise DimensionMismatch("weights must be (K, d), bias (K,)")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ValueError("feature parameters must be finite")


@dataclass
class LabelModelParams:
    graphical: GraphicalParams
    feature: FeatureParams
    config: TrainingConfig
    loss_trace: list[float] = field(default_factory=list)


# --- feature map -------------------------------------------------------------

def _hash_bucket(text: str) -> int:
    digest = hashlib.blake2b(text.lower().encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % HASH_BUCKETS


def featurize(token: Token, doc: Document) -> np.ndarray:
    """Fixed 71-dim feature vector: box center, shape flags, length, and a
    64-bucket hash of the lowercased text (one-hot)."""
    if not (0 <= token.token_id < len(doc.tokens)
            and doc.tokens[token.token_id] == token):
        raise ValueError("token does not belong to doc")
    x = np.zeros(FEATURE_DIM, dtype=np.float64)
    cx, cy = token.bbox.center
    text = token.text
    x[0] = cx
    x[1] = cy
    x[2] = 1.0 if text.isupper() else 0.0
    x[3] = 1.0 if text.isdigit() else 0.0
    x[4] = 1.0 if any(ch.isdigit() for ch in text) else 0.0
    x[5] = min(len(text) / 20.0, 1.0)
    x[6] = 1.0 if text[0].isupper() else 0.0
    x[7 + _hash_bucket(text)] = 1.0
    return x


def featurize_document(doc: Document) -> np.ndarray:
    """(n_tokens, 71) feature matrix in token order."""
    return np.stack([featurize(t, doc) for t in doc.tokens], axis=0)


# --- posteriors --------------------------------------------------------------

def _softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _vote_activations(theta: np.ndarray, votes: np.ndarray) -> np.ndarray:
    """(n, K) summed potentials: +theta[j,k] per agreeing vote,
    -theta[j,k]/(K-1) per disagreeing vote, abstentions skipped."""
    m, K = theta.shape
    votes = np.atleast_2d(votes)
    if votes.shape[1] != m:
        raise DimensionMismatch(f"expected {m} votes per row, got {votes.shape[1]}")
    active = (votes != ABSTAIN).astype(np.float64)
    S = np.empty((votes.shape[0], K), dtype=np.float64)
    for k in range(K):
        match = (votes == k).astype(np.float64)
        S[:, k] = match @ theta[:, k] * (K / (K - 1)) - (active @ theta[:, k]) / (K - 1)
    return S


def graphical_posterior(g: GraphicalParams, votes: np.ndarray) -> np.ndarray:
    """Class posterior for one vote row (or a batch of rows).

    Softmax over classes of prior logits plus the summed vote potentials.
    With no non-abstain votes this reduces to the softmax of the prior.
    """
    votes = np.asarray(votes)
    single = votes.ndim == 1
    S = _vote_activations(g.theta, votes)
    post = _softmax(g.class_prior[None, :] + S, axis=1)
    return post[0] if single else post


def feature_posterior(f: FeatureParams, x: np.ndarray) -> np.ndarray:
    """Softmax-linear class posterior for one feature vector (or a batch)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != f.weights.shape[1]:
        raise DimensionMismatch(
            f"expected {f.weights.shape[1]}-dim features, got {x2.shape[1]}")
    post = _softmax(x2 @ f.weights.T + f.bias[None, :], axis=1)
    return post[0] if single else post


# --- joint objective ----------------------------------------------------------

def _log_vote_normalizers(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-LF per-class log normalizer over the vote outcome space, and its
    derivative in theta.  Outcomes: abstain (potential 0), the matching class
    (theta), or one of K-1 other classes (-theta/(K-1))."""
    K = theta.shape[1]
    e_pos = np.exp(theta)
    e_neg = np.exp(-theta / (K - 1))
    Z = 1.0 + e_pos + (K - 1) * e_neg
    return np.log(Z), (e_pos - e_neg) / Z


def loss_and_gradients(g: GraphicalParams, f: FeatureParams,
                       votes: np.ndarray, features: np.ndarray,
                       gold: np.ndarray, kl_weight: float):
    """Mean per-row joint loss and its analytic gradients.

    Returns ``(loss, {"theta": ..., "class_prior": ..., "weights": ...,
    "bias": ...})`` where each gradient matches the corresponding parameter's
    shape.  ``gold`` uses -1 for unlabeled rows.
    """
    theta, b = g.theta, g.class_prior
    W, c = f.weights, f.bias
    m, K = theta.shape
    votes = np.asarray(votes)
    X = np.asarray(features, dtype=np.float64)
    gold = np.asarray(gold)
    n = votes.shape[0]
    if n == 0:
        raise EmptyMatrix("no rows")
    if X.shape != (n, W.shape[1]):
        raise DimensionMismatch("features misaligned with vote rows")

    active = (votes != ABSTAIN).astype(np.float64)
    S = _vote_activations(theta, votes)
    U = b[None, :] + S
    logP = U - _logsumexp(U)
    P = np.exp(logP)
    Z = X @ W.T + c[None, :]
    logQ = Z - _logsumexp(Z)
    Q = np.exp(logQ)

    is_gold = gold >= 0
    is_unl = ~is_gold
    loss = 0.0
    grad_U = np.zeros((n, K))   # backprop into prior + theta via the posterior
    grad_Z = np.zeros((n, K))

    if is_gold.any():
        idx = np.flatnonzero(is_gold)
        y = gold[idx].astype(int)
        onehot = np.zeros((idx.size, K))
        onehot[np.arange(idx.size), y] = 1.0
        loss += -(logP[idx, y].sum() + logQ[idx, y].sum())
        grad_U[idx] += P[idx] - onehot
        grad_Z[idx] += Q[idx] - onehot

    grad_theta = np.zeros_like(theta)
    grad_b = np.zeros_like(b)

    if is_unl.any():
        u = np.flatnonzero(is_unl)
        logZv, dlogZv = _log_vote_normalizers(theta)
        # log-likelihood of the observed votes given each latent class
        logR = S[u] - active[u] @ logZv
        log_pi = b - _logsumexp(b[None, :])[0, 0]
        joint = log_pi[None, :] + logR
        lse = _logsumexp(joint)
        loss += -(lse.sum())
        resp = np.exp(joint - lse)
        pi = np.exp(log_pi)
        grad_b += (pi[None, :] - resp).sum(axis=0)
        for k in range(K):
            match_u = (votes[u] == k).astype(np.float64)
            t1 = match_u.T @ resp[:, k]
            t2 = active[u].T @ resp[:, k]
            grad_theta[:, k] += (-(K / (K - 1)) * t1 + t2 / (K - 1)
                                 + dlogZv[:, k] * t2)
        if kl_weight > 0:
            diff = logP[u] - logQ[u]
            kl = (P[u] * diff).sum(axis=1)
            loss += kl_weight * kl.sum()
            grad_U[u] += kl_weight * P[u] * (diff - kl[:, None])
            grad_Z[u] += kl_weight * (Q[u] - P[u])

    # posterior-logit gradients flow into the prior and the potentials
    grad_b += grad_U.sum(axis=0)
    for k in range(K):
        match = (votes == k).astype(np.float64)
        grad_theta[:, k] += ((K / (K - 1)) * (match.T @ grad_U[:, k])
                             - (active.T @ grad_U[:, k]) / (K - 1))
    grad_W = grad_Z.T @ X
    grad_c = grad_Z.sum(axis=0)

    inv = 1.0 / n
    grads = {"theta": grad_theta * inv, "class_prior": grad_b * inv,
             "weights": grad_W * inv, "bias": grad_c * inv}
    return loss * inv, grads


def _logsumexp(a: np.ndarray) -> np.ndarray:
    mx = a.max(axis=1, keepdims=True)
    return mx + np.log(np.exp(a - mx).sum(axis=1, keepdims=True))


# --- optimizer ----------------------------------------------------------------

class _AdamW:
    """Decoupled-weight-decay Adam on a dict of named arrays."""

    def __init__(self, params: dict[str, np.ndarray], lrs: dict[str, float],
                 weight_decay: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.lrs = lrs
        self.wd = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, p in self.params.items():
            gr = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * gr
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * gr * gr
            mhat = self.m[name] / (1 - self.beta1 ** self.t)
            vhat = self.v[name] / (1 - self.beta2 ** self.t)
            lr = self.lrs[name]
            p -= lr * (mhat / (np.sqrt(vhat) + self.eps) + self.wd * p)


# --- training and inference ---------------------------------------------------

def train(matrix: LabelMatrix, features: np.ndarray,
          cfg: TrainingConfig | None = None) -> LabelModelParams:
    """Jointly fit the reliability potentials and the feature model.

    ``features`` must hold one row per matrix row.  Mini-batches are drawn
    with a seed-derived shuffle each epoch (last partial batch kept), and the
    recorded loss trace holds the full-dataset loss at the end of each epoch.
    Deterministic given ``cfg.seed``.
    """
    cfg = cfg or TrainingConfig()
    n, m = matrix.n_rows, matrix.n_lfs
    if n == 0:
        raise EmptyMatrix("cannot train on an empty matrix")
    X = np.asarray(features, dtype=np.float64)
    if X.shape[0] != n:
        raise DimensionMismatch("features misaligned with matrix rows")
    d = X.shape[1]

    rng = np.random.default_rng(cfg.seed)
    params = {
        "theta": np.zeros((m, N_CLASSES)),
        "class_prior": np.zeros(N_CLASSES),
        "weights": rng.uniform(-0.01, 0.01, size=(N_CLASSES, d)),
        "bias": np.zeros(N_CLASSES),
    }
    lrs = {"theta": cfg.lr_graphical, "class_prior": cfg.lr_graphical,
           "weights": cfg.lr_feature, "bias": cfg.lr_feature}
    opt = _AdamW(params, lrs, cfg.weight_decay)

    votes = matrix.votes.astype(np.int64)
    gold = matrix.gold.astype(np.int64)

    def snapshot():
        return (GraphicalParams(params["theta"].copy(), params["class_prior"].copy()),
                FeatureParams(params["weights"].copy(), params["bias"].copy()))

    trace: list[float] = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo: lo + cfg.batch_size]
            gp, fp = snapshot()
            loss, grads = loss_and_gradients(gp, fp, votes[idx], X[idx],
                                             gold[idx], cfg.kl_weight)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}")
            opt.step(grads)
        gp, fp = snapshot()
        epoch_loss, _ = loss_and_gradients(gp, fp, votes, X, gold, cfg.kl_weight)
        if not np.isfinite(epoch_loss):
            raise NonFiniteLoss(f"non-finite loss at epoch {epoch}")
        trace.append(float(epoch_loss))

    gp, fp = snapshot()
    return LabelModelParams(graphical=gp, feature=fp, config=cfg, loss_trace=trace)


def predict_rows(params: LabelModelParams, votes: np.ndarray,
                 features: np.ndarray) -> np.ndarray:
    """Argmax labels for pre-built vote rows and features.

    Rows with at least one vote take the graphical posterior; rows where
    every LF abstained fall back to the feature posterior.  Exact ties break
    toward OTHER.
    """
    votes = np.atleast_2d(np.asarray(votes))
    P = graphical_posterior(params.graphical, votes)
    Q = feature_posterior(params.feature, np.atleast_2d(features))
    fired = (votes != ABSTAIN).any(axis=1)
    post = np.where(fired[:, None], P, Q)
    labels = post.argmax(axis=1)
    other = int(ClassLabel.OTHER)
    ties = post[:, other] >= post.max(axis=1)
    labels[ties] = other
    return labels


def predict(params: LabelModelParams, doc: Document, lfs: LFSet) -> list[ClassLabel]:
    """Per-token class labels for one document under a trained model."""
    if len(lfs) != params.graphical.theta.shape[0]:
        raise DimensionMismatch(
            f"model was trained with {params.graphical.theta.shape[0]} LFs, "
            f"got {len(lfs)}")
    votes = np.stack([apply_lf(lf, doc) for lf in lfs], axis=1) if len(lfs) \
        else np.empty((len(doc.tokens), 0), dtype=np.int8)
    feats = featurize_document(doc)
    labels = predict_rows(params, votes, feats)
    return [ClassLabel(int(v)) for v in labels]


# --- checkpoints ---------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(params: LabelModelParams, path: str | Path) -> None:
    """Write a JSON checkpoint; float lists round-trip exactly."""
    blob = {
        "format_version": CHECKPOINT_VERSION,
        "graphical": {"theta": params.graphical.theta.tolist(),
                      "class_prior": params.graphical.class_prior.tolist()},
        "feature": {"weights": params.feature.weights.tolist(),
                    "bias": params.feature.bias.tolist()},
        "config": asdict(params.config),
        "loss_trace": params.loss_trace,
    }
    Path(path).write_text(json.dumps(blob, sort_keys=True), encoding="utf-8")


def load_checkpoint(path: str | Path) -> LabelModelParams:
    blob = json.loads(Path(path).read_text(encoding="utf-8"))
    if blob.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('format_version')}")
    return LabelModelParams(
        graphical=GraphicalParams(np.array(blob["graphical"]["theta"]),
                                  np.array(blob["graphical"]["class_prior"])),
        feature=FeatureParams(np.array(blob["feature"]["weights"]),
                              np.array(blob["feature"]["bias"])),
        config=TrainingConfig(**blob["config"]),
        loss_trace=list(blob["loss_trace"]),
    )
