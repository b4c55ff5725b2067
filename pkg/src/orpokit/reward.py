"""Pairwise reward model and the generation-based evaluation protocol.

The reward model is a TinyLM backbone with a scalar head over the mean
hidden state of the response positions. It trains on preference triples
with the pairwise logistic loss and is then used to score sampled
generations: win rates between two policies and reward distributions for
one policy.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import DatasetSplit, make_batches
from .lm import GradBlock, LMConfig, TinyLM, context_windows, generate
from .objectives import penalty_gate, softplus
from .trainer import OptimizerState, optimizer_step

REWARD_MAGIC = b"ORPR"
REWARD_VERSION = 1


class RewardModel:
    """Backbone LM plus value head; reward = head . mean(hidden) + bias."""

    def __init__(self, config: LMConfig):
        self.backbone = TinyLM(config)
        self.value_head = np.zeros(config.hidden_dim)
        self.value_bias = np.zeros(1)

    @property
    def bias(self) -> float:
        return float(self.value_bias[0])

    def params(self) -> dict:
        """Trainable tensors. The backbone's output layer is not part of
        the reward path, so it is left out on purpose."""
        return {
            "embedding": self.backbone.embedding,
            "hidden_weights": self.backbone.hidden_weights,
            "hidden_bias": self.backbone.hidden_bias,
            "value_head": self.value_head,
            "value_bias": self.value_bias,
        }


@dataclass(frozen=True)
class RewardConfig:
    lm: LMConfig
    lr: float = 5e-3
    epochs: int = 1
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class RewardTrainResult:
    model: RewardModel
    holdout_accuracy: float
    final_train_loss: float


@dataclass(frozen=True)
class WinRateReport:
    wins_a: float
    wins_b: float
    ties: int
    win_rate_a: float
    std_across_rounds: float
    mean_reward_a: float
    mean_reward_b: float
    rounds: int
    per_round_rates: list

    def as_dict(self) -> dict:
        return {"wins_a": self.wins_a, "wins_b": self.wins_b,
                "ties": self.ties, "win_rate_a": self.win_rate_a,
                "std_across_rounds": self.std_across_rounds,
                "mean_reward_a": self.mean_reward_a,
                "mean_reward_b": self.mean_reward_b, "rounds": self.rounds,
                "per_round_rates": self.per_round_rates}


def _mean_hidden(rm: RewardModel, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Mean hidden state over response positions plus the context rows."""
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValueError("empty response")
    bb = rm.backbone
    cfg = bb.config
    ctx = context_windows(np.asarray(x, dtype=np.int64), y,
                          cfg.context_window, cfg.vocab_size - 2)
    h = kernels.hidden_states(bb.embedding, bb.hidden_weights,
                              bb.hidden_bias, ctx)
    return h.mean(axis=0), ctx


def reward_forward(rm: RewardModel, x, y) -> float:
    """Scalar reward for response y to prompt x."""
    mean_h, _ = _mean_hidden(rm, x, y)
    return float(rm.value_head @ mean_h + rm.value_bias[0])


def rm_pair_loss(rm: RewardModel, triple) -> float:
    """-log sigmoid(r_w - r_l) in the stable softplus form."""
    r_w = reward_forward(rm, triple.x, triple.y_w)
    r_l = reward_forward(rm, triple.x, triple.y_l)
    return softplus(-(r_w - r_l))


def _accumulate_pair_grad(rm: RewardModel, triple, grads: GradBlock,
                          inv: float) -> float:
    """Backprop one triple's pair loss (scaled by inv) into grads."""
    bb = rm.backbone
    mh_w, ctx_w = _mean_hidden(rm, triple.x, triple.y_w)
    mh_l, ctx_l = _mean_hidden(rm, triple.x, triple.y_l)
    r_w = float(rm.value_head @ mh_w + rm.value_bias[0])
    r_l = float(rm.value_head @ mh_l + rm.value_bias[0])
    margin = r_w - r_l
    gate = penalty_gate(margin)  # -dL/d margin
    for sign, mh, ctx in ((-1.0, mh_w, ctx_w), (1.0, mh_l, ctx_l)):
        d_r = sign * gate * inv
        grads["value_head"] += d_r * mh
        grads["value_bias"] += d_r
        dh = np.tile(rm.value_head * (d_r / ctx.shape[0]), (ctx.shape[0], 1))
        kernels.hidden_backward(bb.embedding, bb.hidden_weights,
                                bb.hidden_bias, ctx, dh, grads["embedding"],
                                grads["hidden_weights"], grads["hidden_bias"])
    return softplus(-margin)


def pairwise_accuracy(rm: RewardModel, triples: list) -> float:
    """Fraction of triples ranked correctly; exact reward ties count half."""
    if not triples:
        raise ValueError("no triples to score")
    score = 0.0
    for t in triples:
        r_w = reward_forward(rm, t.x, t.y_w)
        r_l = reward_forward(rm, t.x, t.y_l)
        if r_w > r_l:
            score += 1.0
        elif r_w == r_l:
            score += 0.5
    return score / len(triples)


def train_reward(split_data: DatasetSplit, cfg: RewardConfig) -> RewardTrainResult:
    """Train backbone and head on the train split; accuracy on eval split."""
    if not split_data.train:
        raise ValueError("train split is empty")
    rm = RewardModel(cfg.lm)
    params = rm.params()
    grads = GradBlock(params)
    opt_state = OptimizerState.for_params(params)
    last_loss = math.nan
    for epoch in range(cfg.epochs):
        for batch in make_batches(split_data.train, cfg.batch_size,
                                  cfg.seed, epoch):
            inv = 1.0 / len(batch)
            total = 0.0
            for triple in batch:
                total += _accumulate_pair_grad(rm, triple, grads, inv)
            last_loss = total * inv
            if not math.isfinite(last_loss):
                raise ValueError(f"non-finite reward loss in epoch {epoch}")
            optimizer_step(params, grads, opt_state, cfg.lr)
    acc = pairwise_accuracy(rm, split_data.eval) if split_data.eval else math.nan
    return RewardTrainResult(model=rm, holdout_accuracy=acc,
                             final_train_loss=last_loss)


def win_rate(model_a: TinyLM, model_b: TinyLM, prompts: list, rm: RewardModel,
             temperature: float = 1.0, rounds: int = 3, seed: int = 0,
             gen_max_len: int = 24) -> WinRateReport:
    """Head-to-head comparison by sampled generation and reward scoring.

    Both models decode each (round, prompt) cell from the same derived
    seed, so two identical models produce identical samples and tie on
    every comparison, pinning the rate at exactly 50%.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if not prompts:
        raise ValueError("prompts must be non-empty")
    wins_a = wins_b = 0.0
    ties = 0
    sum_a = sum_b = 0.0
    per_round = []
    for rnd in range(rounds):
        round_score = 0.0
        for i, prompt in enumerate(prompts):
            cell_seed = [seed, rnd, i]
            y_a = generate(model_a, prompt, temperature, gen_max_len,
                           cell_seed)
            y_b = generate(model_b, prompt, temperature, gen_max_len,
                           cell_seed)
            r_a = reward_forward(rm, prompt, y_a)
            r_b = reward_forward(rm, prompt, y_b)
            sum_a += r_a
            sum_b += r_b
            if r_a > r_b:
                wins_a += 1.0
                round_score += 1.0
            elif r_b > r_a:
                wins_b += 1.0
            else:
                ties += 1
                wins_a += 0.5
                wins_b += 0.5
                round_score += 0.5
        per_round.append(100.0 * round_score / len(prompts))
    total = rounds * len(prompts)
    rates = np.asarray(per_round)
    return WinRateReport(
        wins_a=wins_a, wins_b=wins_b, ties=ties,
        win_rate_a=100.0 * wins_a / total,
        std_across_rounds=float(rates.std()),
        mean_reward_a=sum_a / total, mean_reward_b=sum_b / total,
        rounds=rounds, per_round_rates=per_round)


@dataclass(frozen=True)
class RewardDistribution:
    mean: float
    std: float
    deciles: list
    scores: list

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "deciles": self.deciles,
                "scores": self.scores}


def reward_distribution(model: TinyLM, prompts: list, rm: RewardModel,
                        temperature: float = 1.0, seed: int = 0,
                        gen_max_len: int = 24) -> RewardDistribution:
    """Rewards of one sampled generation per prompt."""
    if not prompts:
        raise ValueError("prompts must be non-empty")
    scores = []
    for i, prompt in enumerate(prompts):
        y = generate(model, prompt, temperature, gen_max_len, [seed, i])
        scores.append(reward_forward(rm, prompt, y))
    arr = np.asarray(scores)
    deciles = [float(v) for v in np.percentile(arr, range(0, 101, 10))]
    return RewardDistribution(mean=float(arr.mean()), std=float(arr.std()),
                              deciles=deciles, scores=scores)


def save_reward(rm: RewardModel, path) -> None:
    """Binary reward checkpoint: backbone config+tensors, then the head."""
    cfg = rm.backbone.config
    if not (0 <= cfg.seed < 2 ** 32):
        raise ValueError("seed must fit an unsigned 32-bit field")
    with open(path, "wb") as f:
        f.write(REWARD_MAGIC)
        f.write(struct.pack("<I", REWARD_VERSION))
        f.write(struct.pack("<5I", cfg.vocab_size, cfg.embed_dim,
                            cfg.hidden_dim, cfg.context_window, cfg.seed))
        for name in ("embedding", "hidden_weights", "hidden_bias",
                     "output_weights", "output_bias"):
            arr = np.ascontiguousarray(getattr(rm.backbone, name), dtype="<f8")
            f.write(arr.tobytes())
        f.write(np.ascontiguousarray(rm.value_head, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(rm.value_bias, dtype="<f8").tobytes())


def load_reward(path) -> RewardModel:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != REWARD_MAGIC:
        raise ValueError("not a reward checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != REWARD_VERSION:
        raise ValueError(f"unsupported reward checkpoint version {version}")
    v, e, h, w, seed = struct.unpack_from("<5I", blob, 8)
    cfg = LMConfig(vocab_size=v, embed_dim=e, hidden_dim=h,
                   context_window=w, seed=seed)
    rm = RewardModel.__new__(RewardModel)
    rm.backbone = TinyLM.__new__(TinyLM)
    rm.backbone.config = cfg
    shapes = (("embedding", (v, e)), ("hidden_weights", (w * e, h)),
              ("hidden_bias", (h,)), ("output_weights", (h, v)),
              ("output_bias", (v,)))
    offset = 28
    for name, shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        setattr(rm.backbone, name, arr.reshape(shape).astype(np.float64))
        offset += count * 8
    rm.value_head = np.frombuffer(blob, dtype="<f8", count=h,
                                  offset=offset).astype(np.float64)
    offset += h * 8
    rm.value_bias = np.frombuffer(blob, dtype="<f8", count=1,
                                  offset=offset).astype(np.float64)
    offset += 8
    if offset != len(blob):
        raise ValueError("reward checkpoint size mismatch")
    return rm


__all__ = [
    "RewardModel", "RewardConfig", "RewardTrainResult", "WinRateReport",
    "RewardDistribution", "reward_forward", "rm_pair_loss", "train_reward",
    "pairwise_accuracy", "win_rate", "reward_distribution", "save_reward",
    "load_reward",
]
