"""Desk-scale preference-alignment toolkit on a tiny trainable LM.

Monolithic preference tuning (NLL plus a gated odds-ratio penalty, no
reference model) next to its baselines (SFT only, a probability-ratio
variant, and a reference-anchored DPO-style loss), with a pairwise reward
model for win-rate evaluation and standalone diagnostics.
"""

from .kernels import BACKEND
from .lm import LMConfig, SeqScore, TinyLM, Vocab, build_vocab, tokenize
from .objectives import HyperParams, LossReport
from .trainer import TrainConfig, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "LMConfig", "SeqScore", "TinyLM", "Vocab", "build_vocab",
    "tokenize", "HyperParams", "LossReport", "TrainConfig", "TrainResult",
    "train", "__version__",
]
