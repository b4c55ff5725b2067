"""Standalone diagnostics: ratio-contrast Monte Carlo and diversity metrics.

The Monte Carlo study compares the spread of the two candidate contrasts
(probability ratio vs odds ratio) on identical uniform probability draws.
The diversity metrics embed sampled responses with the model's own hidden
layer and average pairwise cosines within and across prompts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .lm import TinyLM, context_windows, generate

_CHUNK = 8192
_HIST_BINS = 200


@dataclass(frozen=True)
class SeriesStats:
    mean: float
    std: float
    min: float
    max: float
    bin_edges: list
    counts: list

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "min": self.min,
                "max": self.max, "bin_edges": self.bin_edges,
                "counts": self.counts}


@dataclass(frozen=True)
class RatioStudyReport:
    n_samples: int
    beta: float
    log_pr: SeriesStats
    log_or: SeriesStats

    def as_dict(self) -> dict:
        return {"n_samples": self.n_samples, "beta": self.beta,
                "log_pr": self.log_pr.as_dict(),
                "log_or": self.log_or.as_dict()}


def _series_stats(values: np.ndarray) -> SeriesStats:
    counts, edges = np.histogram(values, bins=_HIST_BINS,
                                 range=(values.min(), values.max()))
    return SeriesStats(mean=float(values.mean()),
                       std=float(values.std()),
                       min=float(values.min()), max=float(values.max()),
                       bin_edges=[float(e) for e in edges],
                       counts=[int(c) for c in counts])


def _open_uniform(rng, size: int) -> np.ndarray:
    """Uniform draws guaranteed inside (0, 1); exact zeros are redrawn."""
    x = rng.random(size)
    while True:
        mask = x == 0.0
        if not mask.any():
            return x
        x[mask] = rng.random(int(mask.sum()))


def sample_ratio_distributions(n: int, beta: float,
                               seed: int) -> RatioStudyReport:
    """Monte Carlo over probability pairs (X1, X2) ~ Unif(0,1) iid.

    Both series are built from the SAME draws: the probability-ratio
    contrast beta*(log X1 - log X2) and the odds contrast
    logit(X1) - logit(X2). Sampling is chunked with per-chunk derived
    seeds, so results are independent of the chunk size constant only if
    it never changes; it is a module constant for that reason.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    log_pr = np.empty(n)
    log_or = np.empty(n)
    pos = 0
    chunk_idx = 0
    while pos < n:
        m = min(_CHUNK, n - pos)
        rng = np.random.default_rng([seed, chunk_idx])
        x1 = _open_uniform(rng, m)
        x2 = _open_uniform(rng, m)
        log_pr[pos:pos + m] = beta * (np.log(x1) - np.log(x2))
        logit1 = np.log(x1) - np.log1p(-x1)
        logit2 = np.log(x2) - np.log1p(-x2)
        log_or[pos:pos + m] = logit1 - logit2
        pos += m
        chunk_idx += 1
    return RatioStudyReport(n_samples=n, beta=beta,
                            log_pr=_series_stats(log_pr),
                            log_or=_series_stats(log_or))


@dataclass(frozen=True)
class DiversityScore:
    """Two readings of the same pairwise-cosine sum.

    literal halves the sum and divides by N(N-1), so N identical vectors
    score exactly 0.25; mean_cosine divides by the pair count N(N-1)/2,
    so identical vectors score 1. literal is the primary output and is
    always mean_cosine / 4.
    """

    literal: float
    mean_cosine: float

    def as_dict(self) -> dict:
        return {"literal": self.literal, "mean_cosine": self.mean_cosine}


def embed_response(model: TinyLM, response) -> np.ndarray:
    """Mean hidden activation over the response positions, L2-normalized."""
    y = np.asarray(response, dtype=np.int64)
    if y.size == 0:
        raise ValueError("empty response")
    cfg = model.config
    ctx = context_windows(np.empty(0, dtype=np.int64), y,
                          cfg.context_window, cfg.vocab_size - 2)
    h = kernels.hidden_states(model.embedding, model.hidden_weights,
                              model.hidden_bias, ctx).mean(axis=0)
    norm = float(np.linalg.norm(h))
    if norm == 0.0:
        raise ValueError("zero embedding norm")
    return h / norm


def diversity_d(embeddings: list) -> DiversityScore:
    """Average pairwise cosine similarity of N unit vectors, both readings."""
    if len(embeddings) < 2:
        raise ValueError("need at least 2 embeddings")
    e = np.asarray(embeddings, dtype=np.float64)
    norms = np.linalg.norm(e, axis=1)
    if np.abs(norms - 1.0).max() > 1e-9:
        raise ValueError("embeddings must be unit vectors")
    n = e.shape[0]
    gram = e @ e.T
    pair_sum = float((gram.sum() - np.trace(gram)) / 2.0)
    literal = 0.5 * pair_sum / (n * (n - 1))
    mean_cosine = pair_sum / (n * (n - 1) / 2)
    assert -0.25 - 1e-9 <= literal <= 0.25 + 1e-9
    return DiversityScore(literal=literal, mean_cosine=mean_cosine)


def _prompt_seed(seed: int, prompt, k: int) -> list:
    # Keyed by prompt content, not position, so metrics are invariant
    # under reordering of the prompt list.
    toks = [int(t) for t in np.asarray(prompt, dtype=np.int64)]
    return [seed, len(toks)] + toks + [k]


def _sample_embedding(model: TinyLM, prompt, temperature: float, seed: int,
                      k: int, gen_max_len: int) -> np.ndarray:
    y = generate(model, prompt, temperature, gen_max_len,
                 _prompt_seed(seed, prompt, k))
    return embed_response(model, y)


def per_input_diversity(model: TinyLM, prompts: list, k: int = 5,
                        temperature: float = 1.0, seed: int = 0,
                        gen_max_len: int = 24) -> DiversityScore:
    """Mean over prompts of the diversity of that prompt's k samples."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if not prompts:
        raise ValueError("prompts must be non-empty")
    literals = []
    cosines = []
    for prompt in prompts:
        embs = [_sample_embedding(model, prompt, temperature, seed, j,
                                  gen_max_len) for j in range(k)]
        d = diversity_d(embs)
        literals.append(d.literal)
        cosines.append(d.mean_cosine)
    return DiversityScore(literal=float(np.mean(literals)),
                          mean_cosine=float(np.mean(cosines)))


def across_input_diversity(model: TinyLM, prompts: list,
                           temperature: float = 1.0, seed: int = 0,
                           gen_max_len: int = 24) -> DiversityScore:
    """Diversity of the set holding each prompt's first sample (k = 0)."""
    if len(prompts) < 2:
        raise ValueError("need at least 2 prompts")
    embs = [_sample_embedding(model, prompt, temperature, seed, 0,
                              gen_max_len) for prompt in prompts]
    return diversity_d(embs)
