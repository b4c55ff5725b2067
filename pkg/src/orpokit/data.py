"""Preference-corpus ingestion: JSONL loading, filtering, splits, batches.

The filtering rules mirror the usual pairwise-preference hygiene: drop rows
whose two responses are identical, rows with an empty response, and rows
whose prompt exceeds the prompt cap. Everything downstream is deterministic
in the seeds it is handed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .lm import Vocab, tokenize

log = logging.getLogger(__name__)

# Desk-scale caps; the cap on prompts is a filter, the response cap truncates.
DEFAULT_PROMPT_CAP = 128
DEFAULT_MAX_LEN = 64


@dataclass(frozen=True)
class RawTriple:
    prompt: str
    chosen: str
    rejected: str


@dataclass(frozen=True)
class PreferenceTriple:
    """Tokenized triple; responses are eos-terminated and never identical."""

    x: np.ndarray
    y_w: np.ndarray
    y_l: np.ndarray


@dataclass
class DropStats:
    identical: int = 0
    empty: int = 0
    too_long: int = 0
    kept: int = 0

    def as_dict(self) -> dict:
        return {"identical": self.identical, "empty": self.empty,
                "too_long": self.too_long, "kept": self.kept}


@dataclass(frozen=True)
class DatasetSplit:
    train: list
    eval: list
    test: list
    seed: int
    stats: DropStats = field(default_factory=DropStats)


def load_jsonl(path) -> tuple[list[RawTriple], list[str]]:
    """Read one JSON object per line; skip and report malformed lines.

    Returns (rows, error records); each record carries its line number.
    A file that yields no rows at all is only a warning, not an error.
    """
    rows: list[RawTriple] = []
    errors: list[str] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                errors.append(f"line {lineno}: invalid JSON ({exc.msg})")
                continue
            if not isinstance(obj, dict):
                errors.append(f"line {lineno}: not a JSON object")
                continue
            try:
                prompt, chosen, rejected = (obj["prompt"], obj["chosen"],
                                            obj["rejected"])
            except KeyError as exc:
                errors.append(f"line {lineno}: missing field {exc.args[0]}")
                continue
            if not all(isinstance(v, str) for v in (prompt, chosen, rejected)):
                errors.append(f"line {lineno}: non-string field")
                continue
            rows.append(RawTriple(prompt=prompt, chosen=chosen,
                                  rejected=rejected))
    if not rows:
        log.warning("no usable rows in %s", path)
    return rows, errors


def filter_and_tokenize(rows: list[RawTriple], vocab: Vocab,
                        prompt_cap: int = DEFAULT_PROMPT_CAP,
                        max_len: int = DEFAULT_MAX_LEN,
                        ) -> tuple[list[PreferenceTriple], DropStats]:
    """Apply the drop rules, then tokenize and truncate what survives.

    Responses are truncated from the right to max_len tokens including the
    terminating eos. Rows whose responses collapse to identical token
    sequences (unk folding) count as identical, keeping the y_w != y_l
    invariant true at the token level too.
    """
    stats = DropStats()
    kept: list[PreferenceTriple] = []
    for row in rows:
        if row.chosen == row.rejected:
            stats.identical += 1
            continue
        y_w = tokenize(vocab, row.chosen)
        y_l = tokenize(vocab, row.rejected)
        if y_w.size == 0 or y_l.size == 0:
            stats.empty += 1
            continue
        x = tokenize(vocab, row.prompt)
        if x.size > prompt_cap:
            stats.too_long += 1
            continue
        y_w = np.append(y_w[:max_len - 1], vocab.eos_id)
        y_l = np.append(y_l[:max_len - 1], vocab.eos_id)
        if y_w.size == y_l.size and np.array_equal(y_w, y_l):
            stats.identical += 1
            continue
        kept.append(PreferenceTriple(x=x, y_w=y_w, y_l=y_l))
    stats.kept = len(kept)
    return kept, stats


def split(dataset: list, fractions: tuple[float, float, float], seed: int,
          stats: DropStats | None = None) -> DatasetSplit:
    """Seeded shuffle, then a contiguous train/eval/test cut."""
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError("fractions must be three positive numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    n = len(dataset)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(fractions[0] * n)
    n_eval = int(fractions[1] * n)
    cuts = (order[:n_train], order[n_train:n_train + n_eval],
            order[n_train + n_eval:])
    parts = [[dataset[i] for i in idx] for idx in cuts]
    if any(len(p) == 0 for p in parts):
        raise ValueError("a split is empty at these sizes")
    return DatasetSplit(train=parts[0], eval=parts[1], test=parts[2],
                        seed=seed, stats=stats or DropStats())


def make_batches(triples: list, batch_size: int, seed: int,
                 epoch: int) -> list[list]:
    """Per-epoch reshuffle keyed by (seed, epoch); the short tail batch stays."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.random.default_rng([seed, epoch]).permutation(len(triples))
    return [[triples[i] for i in order[lo:lo + batch_size]]
            for lo in range(0, len(triples), batch_size)]


# Synthetic-corpus word pools. Chosen and rejected responses in a row share
# the SAME content clause and diverge only in a short closing, so the bulk
# of the rejected sequence sits in contexts that chosen-only training also
# lifts (the miscalibration effect the telemetry tests look for), while the
# closing tokens stay perfectly separable for the ranking losses and the
# reward model. Closings come from small pools rather than a single fixed
# phrase so no single next-token gets sharpened into a near-deterministic
# winner at the divergence point. The quality word is a fixed function of
# (topic, aspect) rather than a third random draw: with content fully
# determined by the prompt, sampled generations from two coupled models
# agree on content and diverge mostly at the style decision, which keeps
# reward-model comparisons about style instead of content-lottery noise.
_TOPICS = ("rivers", "stars", "bread", "engines", "gardens", "storms",
           "glaciers", "spiders", "violins", "lanterns", "harbors", "comets")
_QUALITIES = ("quiet", "bright", "heavy", "ancient", "swift", "fragile",
              "warm", "hollow")
_ASPECTS = ("story", "shape", "sound", "history")
_POLITE_CLOSINGS = ("thank you kindly", "cheers good friend",
                    "please smile warmly")
_RUDE_CLOSINGS = ("ugh go away", "bah stop asking", "meh quit bugging")

_CONTENT_TEMPLATE = "the {t} {a} is {q} ."
_PROMPT_TEMPLATE = "tell me about the {a} of {t}"


def make_synthetic_corpus(n: int, seed: int) -> list[RawTriple]:
    """Style-contrast preference corpus, deterministic in (n, seed)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng([seed, len(_TOPICS)])
    rows = []
    for _ in range(n):
        ti = int(rng.integers(len(_TOPICS)))
        ai = int(rng.integers(len(_ASPECTS)))
        t, a = _TOPICS[ti], _ASPECTS[ai]
        q = _QUALITIES[(ti * 3 + ai * 5) % len(_QUALITIES)]
        content = _CONTENT_TEMPLATE.format(t=t, a=a, q=q)
        polite = _POLITE_CLOSINGS[rng.integers(len(_POLITE_CLOSINGS))]
        rude = _RUDE_CLOSINGS[rng.integers(len(_RUDE_CLOSINGS))]
        rows.append(RawTriple(
            prompt=_PROMPT_TEMPLATE.format(a=a, t=t),
            chosen=f"{content} {polite}",
            rejected=f"{content} {rude}"))
    return rows


def write_jsonl(rows: list[RawTriple], path) -> None:
    """One JSON object per line; the inverse of load_jsonl for clean data."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(json.dumps({"prompt": row.prompt, "chosen": row.chosen,
                                "rejected": row.rejected},
                               ensure_ascii=False, sort_keys=True) + "\n")


def corpus_texts(rows: list[RawTriple]) -> list[str]:
    """All text fields, for vocabulary building."""
    out = []
    for row in rows:
        out.extend((row.prompt, row.chosen, row.rejected))
    return out
