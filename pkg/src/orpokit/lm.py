"""Tiny trainable causal language model.

A fixed-window neural LM: embedding lookup, window concatenation, tanh
hidden layer, softmax over the vocabulary. Small enough for exact
closed-form backprop without an autodiff dependency, yet expressive enough
to learn the style contrasts the training objectives are exercised on.

Everything is float64. Forward log-probabilities are exact log-softmax
values; gradients are accumulated into a GradBlock and validated against
finite differences in the test suite.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels

UNK_TOKEN = "<unk>"
PAD_TOKEN = "<pad>"
EOS_TOKEN = "<eos>"

CHECKPOINT_MAGIC = b"ORPK"
CHECKPOINT_VERSION = 1

# TinyLM parameter tensors, in checkpoint serialization order.
PARAM_FIELDS = ("embedding", "hidden_weights", "hidden_bias",
                "output_weights", "output_bias")


@dataclass(frozen=True)
class Vocab:
    """Token-string to dense-id mapping with unk/pad/eos specials."""

    tokens: tuple[str, ...]
    unk_id: int
    pad_id: int
    eos_id: int
    _index: dict = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_index",
                           {tok: i for i, tok in enumerate(self.tokens)})

    def __len__(self):
        return len(self.tokens)

    def lookup(self, token: str) -> int:
        """Id of a token string, falling back to unk for unknowns."""
        return self._index.get(token, self.unk_id)


def build_vocab(corpus: list[str], min_count: int = 1) -> Vocab:
    """Whitespace vocabulary over a corpus, specials appended at the end.

    Tokens are kept in first-occurrence order when they reach min_count
    total occurrences; <unk>, <pad>, <eos> always get the last three ids.
    """
    if not corpus:
        raise ValueError("empty corpus")
    counts: dict[str, int] = {}
    order: list[str] = []
    for text in corpus:
        for tok in text.split():
            if tok not in counts:
                order.append(tok)
                counts[tok] = 0
            counts[tok] += 1
    kept = [tok for tok in order if counts[tok] >= min_count]
    tokens = tuple(kept) + (UNK_TOKEN, PAD_TOKEN, EOS_TOKEN)
    n = len(tokens)
    return Vocab(tokens=tokens, unk_id=n - 3, pad_id=n - 2, eos_id=n - 1)


def tokenize(vocab: Vocab, text: str, append_eos: bool = False) -> np.ndarray:
    """Whitespace-split token ids, optionally eos-terminated."""
    ids = [vocab.lookup(tok) for tok in text.split()]
    if append_eos:
        ids.append(vocab.eos_id)
    return np.asarray(ids, dtype=np.int64)


@dataclass(frozen=True)
class LMConfig:
    vocab_size: int
    embed_dim: int
    hidden_dim: int
    context_window: int
    seed: int

    def __post_init__(self):
        for name in ("vocab_size", "embed_dim", "hidden_dim", "context_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def param_count(self) -> int:
        w = self.context_window * self.embed_dim
        return (self.vocab_size * self.embed_dim
                + w * self.hidden_dim + self.hidden_dim
                + self.hidden_dim * self.vocab_size + self.vocab_size)


class TinyLM:
    """The policy model: parameters plus forward/backward machinery.

    Embeddings and hidden weights are drawn uniform(-0.08, 0.08) from the
    config seed; the output layer starts at zero so an untrained model
    predicts the exact uniform distribution (giving closed-form values for
    step-0 tests). Biases start at zero.
    """

    def __init__(self, config: LMConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        win = config.context_window * config.embed_dim
        self.embedding = rng.uniform(-0.08, 0.08,
                                     (config.vocab_size, config.embed_dim))
        self.hidden_weights = rng.uniform(-0.08, 0.08, (win, config.hidden_dim))
        self.hidden_bias = np.zeros(config.hidden_dim)
        self.output_weights = np.zeros((config.hidden_dim, config.vocab_size))
        self.output_bias = np.zeros(config.vocab_size)

    def params(self) -> dict[str, np.ndarray]:
        """Named parameter tensors, live views (mutating them updates the model)."""
        return {name: getattr(self, name) for name in PARAM_FIELDS}

    def copy(self) -> "TinyLM":
        other = TinyLM.__new__(TinyLM)
        other.config = self.config
        for name in PARAM_FIELDS:
            setattr(other, name, getattr(self, name).copy())
        return other


class GradBlock:
    """Zero-initialized gradient accumulators shaped like a parameter dict."""

    def __init__(self, params: dict[str, np.ndarray]):
        self.arrays = {name: np.zeros_like(arr) for name, arr in params.items()}

    def zero(self):
        for arr in self.arrays.values():
            arr[...] = 0.0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __setitem__(self, name: str, value: np.ndarray):
        self.arrays[name] = value

    def items(self):
        return self.arrays.items()


@dataclass(frozen=True)
class SeqScore:
    """Length-normalized sequence likelihood under teacher forcing."""

    avg_logp: float
    sum_logp: float
    length: int

    @property
    def prob(self) -> float:
        """Geometric-mean per-token probability, in (0, 1]."""
        return math.exp(self.avg_logp)


def _check_ids(ids: np.ndarray, vocab_size: int):
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        raise ValueError("token out of range")


def context_windows(x: np.ndarray, y: np.ndarray, window: int,
                    pad_id: int) -> np.ndarray:
    """Context matrix [len(y), window] for teacher-forcing y after prefix x.

    Row t holds the window of ids preceding y[t], left-padded with pad_id.
    """
    stream = np.concatenate([
        np.full(window, pad_id, dtype=np.int64),
        np.asarray(x, dtype=np.int64),
        np.asarray(y[:-1], dtype=np.int64),
    ])
    view = np.lib.stride_tricks.sliding_window_view(stream, window)
    return np.ascontiguousarray(view[len(x):len(x) + len(y)])


def next_token_logprobs(model: TinyLM, context: np.ndarray) -> np.ndarray:
    """Log-softmax over the vocabulary for the next position.

    Only the trailing context_window ids are used; shorter contexts are
    left-padded with pad_id (pad embeddings are ordinary rows, so an empty
    context is still well-defined).
    """
    cfg = model.config
    ctx = np.asarray(context, dtype=np.int64)
    _check_ids(ctx, cfg.vocab_size)
    w = cfg.context_window
    row = np.full(w, cfg.vocab_size - 2, dtype=np.int64)  # pad_id slot
    tail = ctx[-w:] if ctx.size else ctx
    if tail.size:
        row[w - tail.size:] = tail
    logits = kernels.position_logits(model.embedding, model.hidden_weights,
                                     model.hidden_bias, model.output_weights,
                                     model.output_bias, row)
    zmax = logits.max()
    lse = zmax + math.log(np.exp(logits - zmax).sum())
    return logits - lse


def seq_score(model: TinyLM, x: np.ndarray, y: np.ndarray) -> SeqScore:
    """Average and summed log-likelihood of y given prefix x."""
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValueError("empty target")
    cfg = model.config
    _check_ids(x, cfg.vocab_size)
    _check_ids(y, cfg.vocab_size)
    ctx = context_windows(x, y, cfg.context_window, cfg.vocab_size - 2)
    logps = kernels.seq_logprobs(model.embedding, model.hidden_weights,
                                 model.hidden_bias, model.output_weights,
                                 model.output_bias, ctx, y)
    total = float(logps.sum())
    return SeqScore(avg_logp=total / y.size, sum_logp=total, length=int(y.size))


def backward_seq_logp(model: TinyLM, x: np.ndarray, y: np.ndarray,
                      upstream_scale: float, grads: GradBlock):
    """Accumulate upstream_scale * d(avg_logp)/d(params) into grads."""
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValueError("empty target")
    cfg = model.config
    _check_ids(x, cfg.vocab_size)
    _check_ids(y, cfg.vocab_size)
    for name in PARAM_FIELDS:
        if grads[name].shape != getattr(model, name).shape:
            raise ValueError(f"gradient shape mismatch on {name}")
    ctx = context_windows(x, y, cfg.context_window, cfg.vocab_size - 2)
    kernels.seq_logprob_backward(
        model.embedding, model.hidden_weights, model.hidden_bias,
        model.output_weights, model.output_bias, ctx, y, float(upstream_scale),
        grads["embedding"], grads["hidden_weights"], grads["hidden_bias"],
        grads["output_weights"], grads["output_bias"])


def generate(model: TinyLM, prompt: np.ndarray, temperature: float,
             max_len: int, rng_seed, eos_id: int | None = None) -> np.ndarray:
    """Sample a continuation; stops after eos or max_len tokens.

    Sampling is Gumbel-max over temperature-scaled logits, which draws
    exactly from the softmax distribution. Because the noise attaches to
    token ids, two models sampled under the same seed stay coupled: a model
    that only shifts log-probabilities away from some token can lose that
    token's argmax but never gain it, so paired comparisons are free of
    inverse-CDF boundary artifacts. Tiny temperatures approach greedy
    decoding. Returns only the sampled tokens (eos included when it
    terminates the sequence).
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    cfg = model.config
    if eos_id is None:
        eos_id = cfg.vocab_size - 1
    ctx = [int(t) for t in np.asarray(prompt, dtype=np.int64)]
    _check_ids(np.asarray(ctx, dtype=np.int64), cfg.vocab_size)
    rng = np.random.default_rng(rng_seed)
    out = []
    w = cfg.context_window
    pad_id = cfg.vocab_size - 2
    for _ in range(max_len):
        row = np.full(w, pad_id, dtype=np.int64)
        tail = ctx[-w:]
        if tail:
            row[w - len(tail):] = tail
        logits = kernels.position_logits(
            model.embedding, model.hidden_weights, model.hidden_bias,
            model.output_weights, model.output_bias, row)
        u = np.maximum(rng.random(cfg.vocab_size), 1e-300)
        tok = int(np.argmax(logits / temperature - np.log(-np.log(u))))
        out.append(tok)
        ctx.append(tok)
        if tok == eos_id:
            break
    return np.asarray(out, dtype=np.int64)


def save_checkpoint(model: TinyLM, path):
    """Binary checkpoint: magic, version, config as u32 LE, tensors as f64 LE."""
    cfg = model.config
    if not (0 <= cfg.seed < 2 ** 32):
        raise ValueError("seed must fit an unsigned 32-bit field")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<5I", cfg.vocab_size, cfg.embed_dim,
                            cfg.hidden_dim, cfg.context_window, cfg.seed))
        for name in PARAM_FIELDS:
            arr = np.ascontiguousarray(getattr(model, name), dtype="<f8")
            f.write(arr.tobytes())


def save_vocab(vocab: Vocab, path):
    """JSON sidecar next to a checkpoint: token list plus special ids."""
    payload = {
        "tokens": list(vocab.tokens),
        "unk_id": vocab.unk_id,
        "pad_id": vocab.pad_id,
        "eos_id": vocab.eos_id,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, sort_keys=True)
        f.write("\n")


def load_vocab(path) -> Vocab:
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    return Vocab(tokens=tuple(payload["tokens"]), unk_id=payload["unk_id"],
                 pad_id=payload["pad_id"], eos_id=payload["eos_id"])


def load_checkpoint(path) -> TinyLM:
    """Inverse of save_checkpoint; bit-exact round trip."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a model checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    v, e, h, w, seed = struct.unpack_from("<5I", blob, 8)
    cfg = LMConfig(vocab_size=v, embed_dim=e, hidden_dim=h,
                   context_window=w, seed=seed)
    model = TinyLM.__new__(TinyLM)
    model.config = cfg
    shapes = {
        "embedding": (v, e),
        "hidden_weights": (w * e, h),
        "hidden_bias": (h,),
        "output_weights": (h, v),
        "output_bias": (v,),
    }
    offset = 28
    for name in PARAM_FIELDS:
        shape = shapes[name]
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        setattr(model, name, arr.reshape(shape).astype(np.float64))
        offset += count * 8
    if offset != len(blob):
        raise ValueError("checkpoint size mismatch")
    return model
