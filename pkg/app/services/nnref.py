# app/services/nnref.py
import logging
from typing import Optional, Tuple

import numpy as np

from app.core.errors import ShapeMismatchError
from app.schemas.bias import BiasList
from app.schemas.model import ForwardConfig, HiddenStates, ModelParams
from app.schemas.posterior import PosteriorMatrix

logger = logging.getLogger(__name__)


def init_params(
    d: int, d_k: int, h: int, vocab_size: int, d_ff: Optional[int] = None, seed: int = 0
) -> ModelParams:
    """Deterministic Gaussian initialisation scaled by 1/sqrt(fan_in)."""
    d_ff = d_ff or 2 * d
    rng = np.random.default_rng(seed)

    def weight(*shape):
        return rng.standard_normal(shape) / np.sqrt(shape[-1])

    def bias(size):
        return 0.1 * rng.standard_normal(size)

    return ModelParams(
        d=d, d_k=d_k, h=h, vocab_size=vocab_size, d_ff=d_ff,
        mha_q=weight(h, d_k, d), mha_k=weight(h, d_k, d), mha_v=weight(h, d_k, d),
        mha_o=weight(d, h * d_k),
        self_q=weight(h, d_k, d), self_k=weight(h, d_k, d), self_v=weight(h, d_k, d),
        self_o=weight(d, h * d_k),
        ff_w1=weight(d_ff, d), ff_b1=bias(d_ff), ff_w2=weight(d, d_ff), ff_b2=bias(d),
        ca_w=weight(d, d), ca_b=bias(d),
        ctc_w=weight(vocab_size, d), ctc_b=bias(vocab_size),
        out_q=weight(h, d_k, d), out_k=weight(h, d_k, d),
        embedding=rng.standard_normal((d, vocab_size)),
        ctx_w=weight(d, d), ctx_b=bias(d),
    )


def _check_rows(name: str, matrix: np.ndarray, rows: int) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != rows:
        raise ShapeMismatchError(f"{name} has shape {matrix.shape}, expected ({rows}, *)")


def _softmax(logits: np.ndarray, axis: int) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


def multi_head_attention(
    query: np.ndarray,
    memory: np.ndarray,
    w_q: np.ndarray,
    w_k: np.ndarray,
    w_v: np.ndarray,
    w_o: np.ndarray,
) -> np.ndarray:
    """Scaled dot-product attention per head; heads concatenated then projected."""
    h, d_k, _ = w_q.shape
    frames = query.shape[1]
    if memory.shape[1] == 0:
        return np.zeros((w_o.shape[0], frames))

    q = np.einsum("hkd,dt->hkt", w_q, query)
    k = np.einsum("hkd,dn->hkn", w_k, memory)
    v = np.einsum("hkd,dn->hkn", w_v, memory)
    scores = np.einsum("hkt,hkn->htn", q, k) / np.sqrt(d_k)
    weights = _softmax(scores, axis=-1)
    heads = np.einsum("hkn,htn->hkt", v, weights)
    return w_o @ heads.reshape(h * d_k, frames)


def transformer_block(x: np.ndarray, p: ModelParams) -> np.ndarray:
    """Self-attention and feed-forward, each with a residual, no positional encoding."""
    z = x + multi_head_attention(x, x, p.self_q, p.self_k, p.self_v, p.self_o)
    hidden = np.maximum(p.ff_w1 @ z + p.ff_b1[:, None], 0.0)
    return z + p.ff_w2 @ hidden + p.ff_b2[:, None]


# ==================== FORWARD PASS ====================

def context_encode(bias_list: BiasList, p: ModelParams, context_mixing: bool = True) -> np.ndarray:
    """
    Toy context encoder: embedding lookup, one context-mixing step and one
    feed-forward layer; the first position is kept as the phrase embedding.

    The mixing step adds the mean embedding of the remaining subwords to the
    first position, so a single-subword phrase encodes as tanh(W emb(a) + b).
    """
    E = np.zeros((p.d, bias_list.n))
    for i, phrase in enumerate(bias_list.phrases):
        if max(phrase.subwords) >= p.vocab_size:
            raise ShapeMismatchError(f"phrase {i} uses subword ids beyond V={p.vocab_size}")
        embedded = p.embedding[:, phrase.subwords]
        first = embedded[:, 0].copy()
        if context_mixing and phrase.k > 1:
            first += embedded[:, 1:].mean(axis=1)
        E[:, i] = np.tanh(p.ctx_w @ first + p.ctx_b)
    return E


def bias_aware_forward(
    H: np.ndarray, E: np.ndarray, p: ModelParams
) -> Tuple[np.ndarray, np.ndarray]:
    _check_rows("H", H, p.d)
    _check_rows("E", E, p.d)

    attended = multi_head_attention(H, E, p.mha_q, p.mha_k, p.mha_v, p.mha_o)
    H_CA = transformer_block(H + attended, p)
    H_CA_proj = p.ca_w @ H_CA + p.ca_b[:, None]
    return H_CA, H_CA_proj


def output_layer(
    H: np.ndarray, H_CA: np.ndarray, H_CA_proj: np.ndarray, E: np.ndarray, p: ModelParams
) -> Tuple[np.ndarray, np.ndarray]:
    for name, matrix in (("H", H), ("H_CA", H_CA), ("H'_CA", H_CA_proj), ("E", E)):
        _check_rows(name, matrix, p.d)
    if not H.shape == H_CA.shape == H_CA_proj.shape:
        raise ShapeMismatchError(
            f"frame counts differ: H {H.shape}, H_CA {H_CA.shape}, H'_CA {H_CA_proj.shape}"
        )

    H_v = p.ctc_w @ (H + H_CA_proj) + p.ctc_b[:, None]

    queries = np.einsum("hkd,dt->hkt", p.out_q, H_CA)
    keys = np.einsum("hkd,dn->hkn", p.out_k, E)
    scores = np.einsum("hkn,hkt->hnt", keys, queries) / np.sqrt(p.d_k)
    H_dv = scores.mean(axis=0)
    return H_v, H_dv


def dynamic_softmax(H_v: np.ndarray, H_dv: np.ndarray) -> PosteriorMatrix:
    """Softmax over the concatenated (V+n) logits of every frame."""
    if H_v.ndim != 2 or H_dv.ndim != 2 or H_v.shape[1] != H_dv.shape[1]:
        raise ShapeMismatchError(f"column counts differ: H_v {H_v.shape}, H_dv {H_dv.shape}")
    logits = np.concatenate([H_v, H_dv], axis=0).T
    return PosteriorMatrix(
        values=_softmax(logits, axis=1), vocab_size=H_v.shape[0], n=H_dv.shape[0]
    )


def forward(
    H: np.ndarray,
    bias_list: BiasList,
    p: ModelParams,
    cfg: Optional[ForwardConfig] = None,
) -> Tuple[HiddenStates, PosteriorMatrix]:
    cfg = cfg or ForwardConfig()
    H = np.asarray(H, dtype=np.float64)
    _check_rows("H", H, p.d)

    E = context_encode(bias_list, p, context_mixing=cfg.context_mixing)
    if cfg.bias_aware_enabled:
        H_CA, H_CA_proj = bias_aware_forward(H, E, p)
    else:
        H_CA, H_CA_proj = H.copy(), np.zeros_like(H)
    H_v, H_dv = output_layer(H, H_CA, H_CA_proj, E, p)
    posteriors = dynamic_softmax(H_v, H_dv)

    logger.debug("forward: T=%d n=%d bias_aware=%s", H.shape[1], bias_list.n, cfg.bias_aware_enabled)
    states = HiddenStates(H=H, E=E, H_CA=H_CA, H_CA_proj=H_CA_proj, H_v=H_v, H_dv=H_dv)
    return states, posteriors
