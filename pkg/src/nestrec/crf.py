"""Linear-chain CRF over per-token labels (entity type at head positions, O
elsewhere): feature extraction, L2-regularized maximum-likelihood training,
Viterbi decoding, and forward-backward marginals.

All sequence arithmetic is done in log space. Training minimizes the negative
penalized conditional log-likelihood with L-BFGS, which is deterministic:
identical data and config reproduce an identical model byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Collection, Iterable, Optional, Sequence

import numpy as np
from scipy import optimize, sparse
from scipy.special import logsumexp

from nestrec.corpus import ENTITY_TYPES, Sentence, descendant_counts

LABELS: tuple[str, ...] = ("O",) + ENTITY_TYPES
LABEL_INDEX: dict[str, int] = {label: i for i, label in enumerate(LABELS)}
N_LABELS = len(LABELS)

BOS = "__BOS__"
EOS = "__EOS__"
ROOT = "__ROOT__"

_DESC_BINS = ((1, "1"), (2, "2"), (3, "3"), (5, "4-5"), (10, "6-10"))
_SENTLEN_BINS = ((5, "1-5"), (10, "6-10"), (20, "11-20"), (40, "21-40"))


def _bin(value: int, bins: tuple[tuple[int, str], ...], top: str) -> str:
    for upper, name in bins:
        if value <= upper:
            return name
    return top


@dataclass(frozen=True)
class TrainConfig:
    l2: float = 1.0
    max_iters: int = 200
    tol: float = 1e-5  # relative objective change
    seed: int = 0

    def __post_init__(self) -> None:
        if self.l2 < 0:
            raise ValueError("l2 must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


def extract_features(
    sentence: Sentence, i: int, desc_counts: dict[int, int]
) -> frozenset[str]:
    """Feature strings for token ``i`` (1-based).

    ``desc_counts`` is the subtree-size table from
    :func:`nestrec.corpus.descendant_counts`.
    """
    tok = sentence.token(i)
    n = len(sentence)
    form = tok.form
    feats = {"bias", f"pos={tok.upos}", f"dep={tok.deprel}"}
    if len(form) >= 2:
        feats.add(f"pref2={form[:2]}")
        feats.add(f"suf2={form[-2:]}")
    if len(form) >= 3:
        feats.add(f"pref3={form[:3]}")
        feats.add(f"suf3={form[-3:]}")
    if tok.head == 0:
        feats.add(f"parent_lemma={ROOT}")
        feats.add(f"parent_pos={ROOT}")
    else:
        parent = sentence.token(tok.head)
        feats.add(f"parent_lemma={parent.lemma}")
        feats.add(f"parent_pos={parent.upos}")
    feats.add(f"desc_bin={_bin(desc_counts[i], _DESC_BINS, '11+')}")
    feats.add(f"pos_pct_bin={min(9, (10 * i) // n)}")
    feats.add(f"sentlen_bin={_bin(n, _SENTLEN_BINS, '41+')}")
    if i > 1:
        prev = sentence.token(i - 1)
        feats.add(f"prev_form={prev.form}")
        feats.add(f"prev_pos={prev.upos}")
        feats.add(f"prev_dep={prev.deprel}")
    else:
        feats.update({f"prev_form={BOS}", f"prev_pos={BOS}", f"prev_dep={BOS}"})
    if i < n:
        nxt = sentence.token(i + 1)
        feats.add(f"next_form={nxt.form}")
        feats.add(f"next_pos={nxt.upos}")
        feats.add(f"next_dep={nxt.deprel}")
    else:
        feats.update({f"next_form={EOS}", f"next_pos={EOS}", f"next_dep={EOS}"})
    return frozenset(feats)


def sentence_features(sentence: Sentence) -> list[frozenset[str]]:
    counts = descendant_counts(sentence)
    return [
        extract_features(sentence, i, counts)
        for i in range(1, len(sentence) + 1)
    ]


def gold_labels(sentence: Sentence) -> list[str]:
    """Per-token label: the entity type of the span headed here (the
    outermost span when several share the head), O elsewhere."""
    labels = ["O"] * len(sentence)
    by_head: dict[int, list] = {}
    for span in sentence.entities:
        by_head.setdefault(span.head, []).append(span)
    for head, spans in by_head.items():
        outer = sorted(spans, key=lambda s: (-s.length, s.start, s.etype))[0]
        if 1 <= head <= len(sentence):
            labels[head - 1] = outer.etype
    return labels


class CRFModel:
    """Feature-emission and transition weights over the 11-label space."""

    def __init__(
        self,
        feature_index: dict[str, int],
        feature_weights: np.ndarray,
        transition_weights: np.ndarray,
        config: Optional[TrainConfig] = None,
    ) -> None:
        if feature_weights.shape != (len(feature_index), N_LABELS):
            raise ValueError("feature weight shape mismatch")
        if transition_weights.shape != (N_LABELS, N_LABELS):
            raise ValueError("transition weight shape mismatch")
        if not (
            np.all(np.isfinite(feature_weights))
            and np.all(np.isfinite(transition_weights))
        ):
            raise ValueError("weights must be finite")
        self.feature_index = feature_index
        self.feature_weights = feature_weights
        self.transition_weights = transition_weights
        self.config = config
        self.train_log: list[tuple[int, float]] = []
        self.n_iters: int = 0
        self.converged: bool = False

    @property
    def labels(self) -> tuple[str, ...]:
        return LABELS

    def feature_weight(self, feature: str, label: str) -> float:
        idx = self.feature_index.get(feature)
        if idx is None:
            return 0.0
        return float(self.feature_weights[idx, LABEL_INDEX[label]])

    def _feature_ids(self, feats: Collection[str]) -> np.ndarray:
        idx = self.feature_index
        ids = [idx[f] for f in feats if f in idx]
        return np.asarray(sorted(ids), dtype=np.int64)

    def emissions(self, token_features: Sequence[Collection[str]]) -> np.ndarray:
        """(n, 11) emission score matrix; unknown features contribute 0."""
        e = np.zeros((len(token_features), N_LABELS))
        for t, feats in enumerate(token_features):
            ids = self._feature_ids(feats)
            if ids.size:
                e[t] = self.feature_weights[ids].sum(axis=0)
        return e

    def decode_scores(self, emissions: np.ndarray) -> list[str]:
        """Viterbi over precomputed emissions; argmax ties resolve to the
        lower label index at every backtrack step."""
        n = emissions.shape[0]
        if n == 0:
            return []
        T = self.transition_weights
        delta = emissions[0].copy()
        back = np.zeros((n, N_LABELS), dtype=np.int64)
        for t in range(1, n):
            scores = delta[:, None] + T
            back[t] = np.argmax(scores, axis=0)
            delta = scores[back[t], np.arange(N_LABELS)] + emissions[t]
        best = int(np.argmax(delta))
        path = [best]
        for t in range(n - 1, 0, -1):
            best = int(back[t, best])
            path.append(best)
        path.reverse()
        return [LABELS[i] for i in path]

    def decode(self, sentence: Sentence) -> list[str]:
        return self.decode_scores(self.emissions(sentence_features(sentence)))

    def marginal_scores(self, emissions: np.ndarray) -> np.ndarray:
        """(n, 11) forward-backward posteriors; rows sum to 1."""
        n = emissions.shape[0]
        if n == 0:
            return np.zeros((0, N_LABELS))
        e = emissions[None, :, :]  # batch of one
        T = self.transition_weights
        alphas = _forward(e, T)
        betas = _backward(e, T)
        log_z = logsumexp(alphas[-1], axis=-1)
        return np.exp(alphas[:, 0, :] + betas[:, 0, :] - log_z[0])

    def marginals(self, sentence: Sentence) -> np.ndarray:
        return self.marginal_scores(self.emissions(sentence_features(sentence)))

    # -- serialization: versioned UTF-8 text, load∘save = identity --------

    FORMAT_HEADER = "nestrec-crf v1"

    def dumps(self) -> str:
        lines = [self.FORMAT_HEADER]
        T = self.transition_weights
        for p in range(N_LABELS):
            for c in range(N_LABELS):
                if T[p, c] != 0.0:
                    lines.append(f"T {LABELS[p]} {LABELS[c]} {T[p, c]:.17g}")
        for feat in sorted(self.feature_index):
            row = self.feature_weights[self.feature_index[feat]]
            for l in range(N_LABELS):
                if row[l] != 0.0:
                    lines.append(f"F {LABELS[l]} {row[l]:.17g} {feat}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        from nestrec.util import atomic_write_text

        atomic_write_text(path, self.dumps())

    @classmethod
    def loads(cls, text: str) -> "CRFModel":
        lines = text.splitlines()
        if not lines or lines[0] != cls.FORMAT_HEADER:
            raise ValueError(
                f"bad model header: expected {cls.FORMAT_HEADER!r}"
            )
        transitions = np.zeros((N_LABELS, N_LABELS))
        weights: dict[str, np.ndarray] = {}
        for line_no, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            kind, rest = line[0], line[2:]
            if kind == "T":
                prev, curr, w = rest.split(" ")
                transitions[LABEL_INDEX[prev], LABEL_INDEX[curr]] = float(w)
            elif kind == "F":
                label, w, feat = rest.split(" ", 2)
                row = weights.setdefault(feat, np.zeros(N_LABELS))
                row[LABEL_INDEX[label]] = float(w)
            else:
                raise ValueError(f"line {line_no}: unknown record {kind!r}")
        index = {feat: i for i, feat in enumerate(sorted(weights))}
        matrix = np.zeros((len(index), N_LABELS))
        for feat, row in weights.items():
            matrix[index[feat]] = row
        return cls(index, matrix, transitions)

    @classmethod
    def load(cls, path) -> "CRFModel":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


def zero_model(features: Iterable[str] = ()) -> CRFModel:
    """All-zero model over the given feature vocabulary."""
    index = {feat: i for i, feat in enumerate(sorted(set(features)))}
    return CRFModel(
        index,
        np.zeros((len(index), N_LABELS)),
        np.zeros((N_LABELS, N_LABELS)),
    )


# --- forward-backward core (batched over same-length sequences) ------------


def _forward(e: np.ndarray, T: np.ndarray) -> np.ndarray:
    """log-alpha, shape (n, B, L), for emission scores e of shape (B, n, L)."""
    B, n, L = e.shape
    alphas = np.empty((n, B, L))
    alphas[0] = e[:, 0]
    for t in range(1, n):
        alphas[t] = (
            logsumexp(alphas[t - 1][:, :, None] + T[None, :, :], axis=1)
            + e[:, t]
        )
    return alphas


def _backward(e: np.ndarray, T: np.ndarray) -> np.ndarray:
    """log-beta, shape (n, B, L)."""
    B, n, L = e.shape
    betas = np.empty((n, B, L))
    betas[n - 1] = 0.0
    for t in range(n - 2, -1, -1):
        betas[t] = logsumexp(
            T[None, :, :] + (e[:, t + 1] + betas[t + 1])[:, None, :], axis=2
        )
    return betas


@dataclass
class _Bucket:
    n: int
    size: int
    row_start: int
    labels: np.ndarray  # (size, n)


@dataclass
class _Compiled:
    X: sparse.csr_matrix  # (total_tokens, n_features) 0/1 occurrence matrix
    XT: sparse.csr_matrix
    buckets: list[_Bucket]
    total_tokens: int


def _compile(
    instances: Sequence[tuple[Sequence[Collection[str]], Sequence[int]]],
    feature_index: dict[str, int],
) -> _Compiled:
    """Group instances by length and build the token×feature matrix, rows in
    bucket-major, then sentence-major, then token order."""
    by_len: dict[int, list[tuple[Sequence[Collection[str]], Sequence[int]]]] = {}
    for inst in instances:
        if len(inst[0]) != len(inst[1]):
            raise ValueError("feature/label sequence length mismatch")
        if len(inst[0]) == 0:
            continue
        by_len.setdefault(len(inst[0]), []).append(inst)
    buckets: list[_Bucket] = []
    rows: list[int] = []
    cols: list[int] = []
    row = 0
    for n in sorted(by_len):
        group = by_len[n]
        labels = np.empty((len(group), n), dtype=np.int64)
        start = row
        for b, (feats, ys) in enumerate(group):
            labels[b] = ys
            for token_feats in feats:
                ids = sorted(
                    feature_index[f] for f in token_feats if f in feature_index
                )
                rows.extend([row] * len(ids))
                cols.extend(ids)
                row += 1
        buckets.append(_Bucket(n=n, size=len(group), row_start=start, labels=labels))
    X = sparse.csr_matrix(
        (np.ones(len(rows)), (rows, cols)),
        shape=(row, len(feature_index)),
    )
    return _Compiled(X=X, XT=X.T.tocsr(), buckets=buckets, total_tokens=row)


def _objective(
    w_flat: np.ndarray, compiled: _Compiled, l2: float
) -> tuple[float, np.ndarray]:
    """Negative penalized log-likelihood and its gradient."""
    F = compiled.X.shape[1]
    W = w_flat[: F * N_LABELS].reshape(F, N_LABELS)
    T = w_flat[F * N_LABELS :].reshape(N_LABELS, N_LABELS)
    e_all = compiled.X @ W
    d_all = np.empty_like(e_all)  # expected - empirical per token/label
    g_trans = np.zeros((N_LABELS, N_LABELS))
    ll = 0.0
    for bucket in compiled.buckets:
        B, n = bucket.size, bucket.n
        rs = bucket.row_start
        e = e_all[rs : rs + B * n].reshape(B, n, N_LABELS)
        ys = bucket.labels
        alphas = _forward(e, T)
        betas = _backward(e, T)
        log_z = logsumexp(alphas[-1], axis=-1)  # (B,)
        path = np.take_along_axis(e, ys[:, :, None], axis=2).sum()
        if n > 1:
            path += T[ys[:, :-1], ys[:, 1:]].sum()
        ll += path - log_z.sum()
        post = np.exp(
            alphas + betas - log_z[None, :, None]
        )  # (n, B, L)
        d = post.transpose(1, 0, 2).reshape(B * n, N_LABELS)
        flat_rows = np.arange(B * n)
        d[flat_rows, ys.reshape(-1)] -= 1.0
        d_all[rs : rs + B * n] = d
        if n > 1:
            for t in range(1, n):
                xi = (
                    alphas[t - 1][:, :, None]
                    + T[None, :, :]
                    + (e[:, t] + betas[t])[:, None, :]
                    - log_z[:, None, None]
                )
                g_trans += np.exp(xi).sum(axis=0)
            emp = np.bincount(
                (ys[:, :-1] * N_LABELS + ys[:, 1:]).reshape(-1),
                minlength=N_LABELS * N_LABELS,
            ).reshape(N_LABELS, N_LABELS)
            g_trans -= emp
    g_w = compiled.XT @ d_all
    grad = np.concatenate([g_w.reshape(-1), g_trans.reshape(-1)])
    value = -(ll - 0.5 * l2 * float(w_flat @ w_flat))
    grad += l2 * w_flat
    if not (math.isfinite(value) and np.all(np.isfinite(grad))):
        raise FloatingPointError("non-finite CRF objective")
    return value, grad


def log_likelihood_and_gradient(
    model: CRFModel,
    batch: Sequence[tuple[Sequence[Collection[str]], Sequence[str]]],
    l2: float = 0.0,
) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Penalized conditional log-likelihood of the batch and its gradient
    with respect to (feature_weights, transition_weights).

    Features absent from the model's vocabulary contribute nothing.
    """
    instances = [
        (feats, [LABEL_INDEX[y] for y in ys]) for feats, ys in batch
    ]
    compiled = _compile(instances, model.feature_index)
    w_flat = np.concatenate(
        [model.feature_weights.reshape(-1), model.transition_weights.reshape(-1)]
    )
    neg_value, neg_grad = _objective(w_flat, compiled, l2)
    F = len(model.feature_index)
    g_w = -neg_grad[: F * N_LABELS].reshape(F, N_LABELS)
    g_t = -neg_grad[F * N_LABELS :].reshape(N_LABELS, N_LABELS)
    return -neg_value, (g_w, g_t)


def train(
    data: Sequence[Sentence], cfg: TrainConfig = TrainConfig()
) -> CRFModel:
    """Fit a CRF on gold-labeled sentences.

    The objective history is kept on ``model.train_log`` as
    (iteration, negative penalized log-likelihood) pairs; it is
    non-increasing across accepted L-BFGS steps.
    """
    data = list(data)
    if not data:
        raise ValueError("empty training data")
    featurized = [(sentence_features(s), gold_labels(s)) for s in data]
    vocab = sorted({f for feats, _ in featurized for fs in feats for f in fs})
    feature_index = {f: i for i, f in enumerate(vocab)}
    instances = [
        (feats, [LABEL_INDEX[y] for y in ys]) for feats, ys in featurized
    ]
    compiled = _compile(instances, feature_index)
    n_params = len(feature_index) * N_LABELS + N_LABELS * N_LABELS
    x0 = np.zeros(n_params)

    history: list[tuple[int, float]] = []
    last_value = [math.nan]

    def fun(w: np.ndarray) -> tuple[float, np.ndarray]:
        value, grad = _objective(w, compiled, cfg.l2)
        last_value[0] = value
        return value, grad

    def callback(_w: np.ndarray) -> None:
        history.append((len(history) + 1, last_value[0]))

    result = optimize.minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=callback,
        options={
            "maxiter": cfg.max_iters,
            "ftol": cfg.tol,
            "maxfun": cfg.max_iters * 40,
            "maxls": 50,
        },
    )
    F = len(feature_index)
    model = CRFModel(
        feature_index,
        result.x[: F * N_LABELS].reshape(F, N_LABELS).copy(),
        result.x[F * N_LABELS :].reshape(N_LABELS, N_LABELS).copy(),
        config=cfg,
    )
    model.train_log = history
    model.n_iters = int(result.nit)
    model.converged = bool(result.success)
    return model


def decode(model: CRFModel, sentence: Sentence) -> list[str]:
    return model.decode(sentence)


def marginals(model: CRFModel, sentence: Sentence) -> np.ndarray:
    return model.marginals(sentence)
