"""Bidirectional LSTM tagger with a bias-transformation output head.

Everything is plain numpy in float64. A sentence is encoded left-to-right and
right-to-left; the two hidden states feed a softmax over the gold tagset.
Projected supervision is scored through a second softmax over ``o_t @ A``,
so rows of ``A`` index gold tags and columns index projected tags.

Gradients are derived by hand and checked against central finite
differences in :mod:`debias_tagger.gradcheck`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

LOG_FLOOR = 1e-12
INIT_RANGE = 0.08


class NumericError(ArithmeticError):
    """Raised when a loss or gradient stops being finite."""


@dataclass
class LSTMDirectionParams:
    """One recurrent direction; gate blocks are stacked as input, forget, output, candidate."""

    W: np.ndarray  # (4H, D)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    @property
    def hidden_dim(self) -> int:
        return self.U.shape[1]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    def copy(self) -> "LSTMDirectionParams":
        return LSTMDirectionParams(self.W.copy(), self.U.copy(), self.b.copy())


@dataclass
class ModelParams:
    E: np.ndarray      # (V, D) embeddings
    fwd: LSTMDirectionParams
    bwd: LSTMDirectionParams
    W_fwd: np.ndarray  # (K_gold, H)
    W_bwd: np.ndarray  # (K_gold, H)
    b: np.ndarray      # (K_gold,)
    A: np.ndarray      # (K_gold, K_proj)

    @property
    def vocab_size(self) -> int:
        return self.E.shape[0]

    @property
    def emb_dim(self) -> int:
        return self.E.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.fwd.hidden_dim

    @property
    def k_gold(self) -> int:
        return self.b.shape[0]

    @property
    def k_proj(self) -> int:
        return self.A.shape[1]

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        yield "E", self.E
        for prefix, d in (("fwd", self.fwd), ("bwd", self.bwd)):
            yield f"{prefix}.W", d.W
            yield f"{prefix}.U", d.U
            yield f"{prefix}.b", d.b
        yield "W_fwd", self.W_fwd
        yield "W_bwd", self.W_bwd
        yield "b", self.b
        yield "A", self.A

    @classmethod
    def from_arrays(cls, arrays: dict) -> "ModelParams":
        return cls(
            E=arrays["E"],
            fwd=LSTMDirectionParams(arrays["fwd.W"], arrays["fwd.U"], arrays["fwd.b"]),
            bwd=LSTMDirectionParams(arrays["bwd.W"], arrays["bwd.U"], arrays["bwd.b"]),
            W_fwd=arrays["W_fwd"], W_bwd=arrays["W_bwd"], b=arrays["b"], A=arrays["A"],
        )

    def copy(self) -> "ModelParams":
        return ModelParams.from_arrays({k: v.copy() for k, v in self.named_arrays()})

    def check_shapes(self) -> None:
        V, D = self.E.shape
        H = self.hidden_dim
        K = self.k_gold
        expected = {
            "E": (V, D),
            "fwd.W": (4 * H, D), "fwd.U": (4 * H, H), "fwd.b": (4 * H,),
            "bwd.W": (4 * H, D), "bwd.U": (4 * H, H), "bwd.b": (4 * H,),
            "W_fwd": (K, H), "W_bwd": (K, H), "b": (K,), "A": (K, self.k_proj),
        }
        for name, arr in self.named_arrays():
            if arr.shape != expected[name]:
                raise ValueError(f"{name} has shape {arr.shape}, expected {expected[name]}")


@dataclass
class Gradients:
    """Gradients shaped like :class:`ModelParams`.

    The embedding gradient is kept sparse: ``emb_rows`` lists the distinct
    vocabulary ids touched by the batch and ``emb_grad`` their gradient rows.
    """

    arrays: dict          # dense gradients for every field except E
    emb_rows: np.ndarray
    emb_grad: np.ndarray
    vocab_size: int

    def dense(self, name: str) -> np.ndarray:
        if name != "E":
            return self.arrays[name]
        out = np.zeros((self.vocab_size, self.emb_grad.shape[1]))
        out[self.emb_rows] = self.emb_grad
        return out

    def named_dense(self) -> Iterator[tuple[str, np.ndarray]]:
        yield "E", self.dense("E")
        yield from self.arrays.items()

    def global_norm(self) -> float:
        sq = float(np.sum(self.emb_grad ** 2))
        for g in self.arrays.values():
            sq += float(np.sum(g * g))
        return float(np.sqrt(sq))

    def all_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.emb_grad))) and all(
            np.all(np.isfinite(g)) for g in self.arrays.values())


def sigmoid(x):
    # tanh form cannot overflow for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(z: np.ndarray) -> np.ndarray:
    """Softmax over the last axis with max subtraction."""
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def safe_log(p):
    return np.log(np.maximum(p, LOG_FLOOR))


def init_params(emb_dim: int, hidden_dim: int, vocab_size: int, k_gold: int,
                k_proj: int | None = None, seed: int = 0,
                init_range: float = INIT_RANGE, bias_scale: float = 1.0) -> ModelParams:
    """Random uniform weights; ``A`` starts as ``bias_scale`` on the shared diagonal."""
    if min(emb_dim, hidden_dim, vocab_size, k_gold) <= 0:
        raise ValueError("all dimensions must be positive")
    k_proj = k_gold if k_proj is None else k_proj
    if k_proj <= 0:
        raise ValueError("all dimensions must be positive")
    rng = np.random.default_rng(seed)
    H, D = hidden_dim, emb_dim

    def u(*shape):
        return rng.uniform(-init_range, init_range, size=shape)

    E = u(vocab_size, D)
    fwd = LSTMDirectionParams(u(4 * H, D), u(4 * H, H), u(4 * H))
    bwd = LSTMDirectionParams(u(4 * H, D), u(4 * H, H), u(4 * H))
    params = ModelParams(E, fwd, bwd, u(k_gold, H), u(k_gold, H), u(k_gold),
                         np.zeros((k_gold, k_proj)))
    m = min(k_gold, k_proj)
    params.A[np.arange(m), np.arange(m)] = bias_scale
    return params


# ---------------------------------------------------------------- forward

def lstm_step(p: LSTMDirectionParams, x, h_prev, c_prev):
    """One cell update; returns ``(h, c)``."""
    x, h_prev, c_prev = (np.asarray(v, dtype=float) for v in (x, h_prev, c_prev))
    H = p.hidden_dim
    if x.shape != (p.input_dim,) or h_prev.shape != (H,) or c_prev.shape != (H,):
        raise ValueError("lstm_step: input or state has the wrong dimension")
    z = p.W @ x + p.U @ h_prev + p.b
    i = sigmoid(z[:H])
    f = sigmoid(z[H:2 * H])
    o = sigmoid(z[2 * H:3 * H])
    g = np.tanh(z[3 * H:])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def _run_direction(p: LSTMDirectionParams, X: np.ndarray, cache: bool):
    T = X.shape[0]
    H = p.hidden_dim
    Z_in = X @ p.W.T + p.b
    Hs = np.zeros((T + 1, H))  # row 0 is the initial state
    Cs = np.zeros((T + 1, H))
    gates = np.empty((T, 4 * H)) if cache else None
    U = p.U
    for t in range(T):
        z = Z_in[t] + U @ Hs[t]
        ifo = 0.5 * (1.0 + np.tanh(0.5 * z[:3 * H]))
        g = np.tanh(z[3 * H:])
        c = ifo[H:2 * H] * Cs[t] + ifo[:H] * g
        Cs[t + 1] = c
        Hs[t + 1] = ifo[2 * H:] * np.tanh(c)
        if cache:
            gates[t, :3 * H] = ifo
            gates[t, 3 * H:] = g
    return Hs, Cs, gates


def _backprop_direction(p: LSTMDirectionParams, X, Hs, Cs, gates, dH):
    """Backpropagate ``dH`` (gradient w.r.t. each output state) through one direction."""
    T = X.shape[0]
    H = p.hidden_dim
    dZ = np.empty((T, 4 * H))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    UT = p.U.T
    for t in range(T - 1, -1, -1):
        i = gates[t, :H]
        f = gates[t, H:2 * H]
        o = gates[t, 2 * H:3 * H]
        g = gates[t, 3 * H:]
        tc = np.tanh(Cs[t + 1])
        dh = dH[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dZ[t, :H] = dc * g * i * (1.0 - i)
        dZ[t, H:2 * H] = dc * Cs[t] * f * (1.0 - f)
        dZ[t, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        dZ[t, 3 * H:] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = UT @ dZ[t]
    dW = dZ.T @ X
    dU = dZ.T @ Hs[:T]
    db = dZ.sum(axis=0)
    dX = dZ @ p.W
    return dW, dU, db, dX


def _as_ids(params: ModelParams, token_ids) -> np.ndarray:
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("sentence must contain at least one token")
    if ids.min() < 0 or ids.max() >= params.vocab_size:
        raise ValueError("token id out of vocabulary range")
    return ids


def encode(params: ModelParams, token_ids) -> tuple[np.ndarray, np.ndarray]:
    """Return forward and backward hidden states, each ``(T, H)``."""
    ids = _as_ids(params, token_ids)
    X = params.E[ids]
    Hf, _, _ = _run_direction(params.fwd, X, cache=False)
    Hb, _, _ = _run_direction(params.bwd, X[::-1], cache=False)
    return Hf[1:], Hb[1:][::-1]


def output_logits(params: ModelParams, h_fwd, h_bwd) -> np.ndarray:
    return h_fwd @ params.W_fwd.T + h_bwd @ params.W_bwd.T + params.b


def output_dist(params: ModelParams, h_fwd, h_bwd) -> np.ndarray:
    """Gold-tag distribution ``o_t``; works on single states or ``(T, H)`` stacks."""
    return softmax(output_logits(params, h_fwd, h_bwd))


def bias_dist(A: np.ndarray, o: np.ndarray) -> np.ndarray:
    """Projected-tag distribution: softmax over ``sum_i A[i, j] * o[i]``."""
    A = np.asarray(A, dtype=float)
    o = np.asarray(o, dtype=float)
    if o.shape[-1] != A.shape[0]:
        raise ValueError(f"o has {o.shape[-1]} entries but A has {A.shape[0]} rows")
    return softmax(o @ A)


def tag_distributions(params: ModelParams, token_ids) -> np.ndarray:
    hf, hb = encode(params, token_ids)
    return output_dist(params, hf, hb)


def predict(params: ModelParams, token_ids) -> list[int]:
    """Most probable gold tag per token; ``np.argmax`` resolves ties to the lowest index."""
    return np.argmax(tag_distributions(params, token_ids), axis=1).tolist()


# ---------------------------------------------------------------- losses

def _gold_targets(sentence, k: int) -> np.ndarray:
    tags = np.asarray(sentence.tags, dtype=np.int64)
    Y = np.zeros((tags.size, k))
    Y[np.arange(tags.size), tags] = 1.0
    return Y


def gold_nll(params: ModelParams, sentence, vocab=None) -> tuple[float, int]:
    """Summed ``-log o_t[y_t]`` over the sentence and its token count."""
    ids = _sentence_ids(sentence, vocab)
    O = tag_distributions(params, ids)
    Y = _gold_targets(sentence, params.k_gold)
    return float(-np.sum(Y * safe_log(O))), len(ids)


def projected_nll(params: ModelParams, sentence, vocab=None) -> tuple[float, int]:
    """Summed cross-entropy of projected labels against the bias-transformed distribution."""
    ids = _sentence_ids(sentence, vocab)
    O = tag_distributions(params, ids)
    Yt = sentence.targets(params.k_proj)
    return float(-np.sum(Yt * safe_log(bias_dist(params.A, O)))), len(ids)


def _sentence_ids(sentence, vocab):
    if vocab is not None:
        return vocab.encode(sentence.tokens)
    ids = getattr(sentence, "ids", None)
    if ids is None:
        raise ValueError("sentence carries no token ids; pass a vocabulary")
    return ids


@dataclass(frozen=True)
class Example:
    """A sentence ready for the network: token ids plus a target distribution per token.

    ``head`` is ``"gold"`` when targets are over the gold tagset and scored on
    ``o_t`` directly, or ``"bias"`` when they are over the projected tagset
    and scored through ``A``.
    """

    ids: np.ndarray
    targets: np.ndarray
    head: str

    def __len__(self):
        return len(self.ids)


def make_gold_examples(corpus, vocab) -> list[Example]:
    k = corpus.tagset.size
    return [Example(np.asarray(vocab.encode(s.tokens), dtype=np.int64), _gold_targets(s, k), "gold")
            for s in corpus]


def make_projected_examples(corpus, vocab, head: str = "bias") -> list[Example]:
    """Projected sentences as examples.

    With ``head="gold"`` the projected labels are used as if they were gold
    targets (the naive projected-only baseline); this requires the two
    tagsets to have the same size.
    """
    k = corpus.tagset.size
    return [Example(np.asarray(vocab.encode(s.tokens), dtype=np.int64), s.targets(k), head)
            for s in corpus]


def _forward_backward(params: ModelParams, ex: Example, scale: float, grads: dict, emb: dict):
    """Loss of one example (unscaled sum over tokens); accumulate ``scale``-weighted gradients."""
    X = params.E[ex.ids]
    Hf, Cf, Gf = _run_direction(params.fwd, X, cache=True)
    Xr = X[::-1]
    Hb, Cb, Gb = _run_direction(params.bwd, Xr, cache=True)
    hf = Hf[1:]
    hb = Hb[1:][::-1]
    O = softmax(output_logits(params, hf, hb))
    Y = ex.targets
    if ex.head == "gold":
        if Y.shape[1] != params.k_gold:
            raise ValueError("gold-head targets must cover the gold tagset")
        loss = -np.sum(Y * safe_log(O))
        dlogits = (O * Y.sum(axis=1, keepdims=True) - Y) * scale
    elif ex.head == "bias":
        if Y.shape[1] != params.k_proj:
            raise ValueError("bias-head targets must cover the projected tagset")
        Ot = softmax(O @ params.A)
        loss = -np.sum(Y * safe_log(Ot))
        dz = (Ot * Y.sum(axis=1, keepdims=True) - Y) * scale
        grads["A"] += O.T @ dz
        dO = dz @ params.A.T
        dlogits = O * (dO - np.sum(O * dO, axis=1, keepdims=True))
    else:
        raise ValueError(f"unknown head {ex.head!r}")

    grads["W_fwd"] += dlogits.T @ hf
    grads["W_bwd"] += dlogits.T @ hb
    grads["b"] += dlogits.sum(axis=0)
    dHf = dlogits @ params.W_fwd
    dHb = (dlogits @ params.W_bwd)[::-1]

    for prefix, p, Xd, Hs, Cs, G, dH in (("fwd", params.fwd, X, Hf, Cf, Gf, dHf),
                                         ("bwd", params.bwd, Xr, Hb, Cb, Gb, dHb)):
        dW, dU, db, dX = _backprop_direction(p, Xd, Hs, Cs, G, dH)
        grads[f"{prefix}.W"] += dW
        grads[f"{prefix}.U"] += dU
        grads[f"{prefix}.b"] += db
        if prefix == "bwd":
            dX = dX[::-1]
        for tok, row in zip(ex.ids.tolist(), dX):
            if tok in emb:
                emb[tok] += row
            else:
                emb[tok] = row.copy()
    return float(loss)


def _split(batch: Sequence[Example]):
    gold = [ex for ex in batch if ex.head == "gold"]
    bias = [ex for ex in batch if ex.head == "bias"]
    return gold, bias


def _check_batches(gold_batch, proj_batch):
    n_gold = sum(len(ex) for ex in gold_batch)
    n_proj = sum(len(ex) for ex in proj_batch)
    if n_gold == 0 and n_proj == 0:
        raise ValueError("joint loss needs at least one non-empty batch")
    return n_gold, n_proj


def joint_loss(params: ModelParams, gold_batch: Sequence[Example],
               proj_batch: Sequence[Example]) -> float:
    """Mean per-token projected term plus mean per-token gold term.

    Examples in ``proj_batch`` are scored through their own ``head``, so a
    projected batch built with ``head="gold"`` trains the naive baseline.
    An empty batch contributes nothing.
    """
    n_gold, n_proj = _check_batches(gold_batch, proj_batch)
    total = 0.0
    for batch, n in ((proj_batch, n_proj), (gold_batch, n_gold)):
        if not n:
            continue
        s = 0.0
        for ex in batch:
            O = tag_distributions(params, ex.ids)
            P = O if ex.head == "gold" else bias_dist(params.A, O)
            s += -np.sum(ex.targets * safe_log(P))
        total += s / n
    return float(total)


def loss_and_gradients(params: ModelParams, gold_batch: Sequence[Example],
                       proj_batch: Sequence[Example]) -> tuple[float, Gradients]:
    n_gold, n_proj = _check_batches(gold_batch, proj_batch)
    grads = {name: np.zeros_like(arr) for name, arr in params.named_arrays() if name != "E"}
    emb = {}
    total = 0.0
    for batch, n in ((proj_batch, n_proj), (gold_batch, n_gold)):
        if not n:
            continue
        s = 0.0
        for ex in batch:
            s += _forward_backward(params, ex, 1.0 / n, grads, emb)
        total += s / n
    rows = np.array(sorted(emb), dtype=np.int64)
    emb_grad = np.array([emb[r] for r in rows.tolist()]).reshape(len(rows), params.emb_dim)
    return float(total), Gradients(grads, rows, emb_grad, params.vocab_size)


def gradients(params: ModelParams, gold_batch: Sequence[Example],
              proj_batch: Sequence[Example]) -> Gradients:
    """Exact gradient of :func:`joint_loss` with respect to every parameter."""
    return loss_and_gradients(params, gold_batch, proj_batch)[1]
