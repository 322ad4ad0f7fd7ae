# app/schemas/model.py
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Dict, Tuple

import numpy as np

from app.core.config import settings


def _frozen_array(v) -> np.ndarray:
    array = np.array(v, dtype=np.float64)
    array.setflags(write=False)
    return array


class ModelParams(BaseModel):
    """
    Weights of the bias module at desk scale.

    Matrices act on column vectors: hidden sequences are d x T, embeddings d x n.
    Per-head projections are stacked as (h, d_k, d).
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    d: int = Field(..., ge=1)
    d_k: int = Field(..., ge=1)
    h: int = Field(..., ge=1)
    vocab_size: int = Field(..., ge=1)
    d_ff: int = Field(..., ge=1)

    # cross attention, audio queries over bias embeddings
    mha_q: np.ndarray
    mha_k: np.ndarray
    mha_v: np.ndarray
    mha_o: np.ndarray

    # one self-attention + feed-forward block
    self_q: np.ndarray
    self_k: np.ndarray
    self_v: np.ndarray
    self_o: np.ndarray
    ff_w1: np.ndarray
    ff_b1: np.ndarray
    ff_w2: np.ndarray
    ff_b2: np.ndarray

    # projection feeding the CTC branch
    ca_w: np.ndarray
    ca_b: np.ndarray

    # CTC output over the base vocabulary
    ctc_w: np.ndarray
    ctc_b: np.ndarray

    # bias-token scores, averaged over heads
    out_q: np.ndarray
    out_k: np.ndarray

    # Toy context encoder
    embedding: np.ndarray
    ctx_w: np.ndarray
    ctx_b: np.ndarray

    @field_validator(
        "mha_q", "mha_k", "mha_v", "mha_o",
        "self_q", "self_k", "self_v", "self_o",
        "ff_w1", "ff_b1", "ff_w2", "ff_b2",
        "ca_w", "ca_b", "ctc_w", "ctc_b",
        "out_q", "out_k", "embedding", "ctx_w", "ctx_b",
        mode="before",
    )
    def freeze(cls, v):
        return _frozen_array(v)

    @model_validator(mode="after")
    def validate_shapes(self):
        for name, shape in self.expected_shapes().items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise ValueError(f"{name} has shape {actual}, expected {shape}")
        return self

    def expected_shapes(self) -> Dict[str, Tuple[int, ...]]:
        d, d_k, h, V, d_ff = self.d, self.d_k, self.h, self.vocab_size, self.d_ff
        head = (h, d_k, d)
        return {
            "mha_q": head, "mha_k": head, "mha_v": head, "mha_o": (d, h * d_k),
            "self_q": head, "self_k": head, "self_v": head, "self_o": (d, h * d_k),
            "ff_w1": (d_ff, d), "ff_b1": (d_ff,), "ff_w2": (d, d_ff), "ff_b2": (d,),
            "ca_w": (d, d), "ca_b": (d,),
            "ctc_w": (V, d), "ctc_b": (V,),
            "out_q": head, "out_k": head,
            "embedding": (d, V), "ctx_w": (d, d), "ctx_b": (d,),
        }


class ForwardConfig(BaseModel):
    """Architecture switches used for ablations."""

    bias_aware_enabled: bool = True
    context_mixing: bool = True


class HiddenStates(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    H: np.ndarray
    E: np.ndarray
    H_CA: np.ndarray
    H_CA_proj: np.ndarray
    H_v: np.ndarray
    H_dv: np.ndarray


class LossConfig(BaseModel):
    ctc_weight: float = Field(default_factory=lambda: settings.CTC_WEIGHT, ge=0)
    bias_weight: float = Field(default_factory=lambda: settings.BIAS_WEIGHT, ge=0)
    bias_loss_enabled: bool = True


class LossResult(BaseModel):
    """Scalar loss and its gradient w.r.t. the T x (V+n) log-posterior inputs."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    loss: float
    gradient: np.ndarray
