"""Training loop for the four loss kinds, with telemetry and checkpoints.

The loop is deterministic: batch order comes from (seed, epoch), the
optimizer is plain AdamW in float64, and telemetry rows are pure functions
of the per-batch scores. An sft run is literally the orpo path with the
penalty weight forced to zero, which is what makes the two produce
bit-identical trajectories at matched seeds.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import objectives
from .data import DatasetSplit, make_batches
from .lm import GradBlock, TinyLM, save_checkpoint, seq_score, backward_seq_logp
from .objectives import HyperParams

LOSS_KINDS = ("sft", "orpo", "orpo_pr", "dpo")

TELEMETRY_HEADER = ("step,epoch,l_sft,l_or,l_total,avg_logp_chosen,"
                    "avg_logp_rejected,log_odds_ratio,lr")


class TrainAbort(RuntimeError):
    """Raised when training hits a non-finite loss; carries step and batch."""


@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = "orpo"
    hp: HyperParams = field(default_factory=HyperParams)
    lr_max: float = 1e-3
    epochs: int = 10
    batch_size: int = 32
    warmup_frac: float = 0.1
    seed: int = 0
    eval_every: int = 50

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.lr_max <= 0:
            raise ValueError("lr_max must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.warmup_frac <= 1.0:
            raise ValueError("warmup_frac must be in [0, 1]")
        if self.eval_every < 0:
            raise ValueError("eval_every must be >= 0")


@dataclass(frozen=True)
class TelemetryRow:
    step: int
    epoch: int
    l_sft: float
    l_or: float
    l_total: float
    avg_logp_chosen: float
    avg_logp_rejected: float
    log_odds_ratio: float
    lr: float


@dataclass
class OptimizerState:
    """AdamW moment accumulators keyed like the parameter dict."""

    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def for_params(cls, params: dict) -> "OptimizerState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


@dataclass
class TrainResult:
    model: TinyLM
    telemetry: list
    checkpoints: list
    best_step: int
    best_eval_loss: float
    best_model: TinyLM | None
    eval_history: list
    forward_passes: int


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Linear warmup to lr_max, then cosine decay to exactly zero."""
    if not 0 <= step <= total_steps:
        raise ValueError("step out of range")
    if total_steps == 0:
        return 0.0
    warmup_steps = cfg.warmup_frac * total_steps
    if step < warmup_steps:
        return cfg.lr_max * step / warmup_steps
    if total_steps == warmup_steps:
        return cfg.lr_max
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return cfg.lr_max * 0.5 * (1.0 + math.cos(math.pi * progress))


def optimizer_step(params: dict, grads, opt_state: OptimizerState,
                   lr: float) -> None:
    """One AdamW update with decoupled weight decay; zeros grads afterwards."""
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise ValueError(f"non-finite gradient in {name}")
    opt_state.step += 1
    t = opt_state.step
    b1, b2 = opt_state.beta1, opt_state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        m = opt_state.m[name]
        v = opt_state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + opt_state.eps)
        if opt_state.weight_decay != 0.0:
            update = update + opt_state.weight_decay * p
        p -= lr * update
        g[...] = 0.0


def _row_log_odds_ratio(avg_w: float, avg_l: float, clamp: float) -> float:
    return (objectives.log_odds(min(avg_w, clamp), clamp)
            - objectives.log_odds(min(avg_l, clamp), clamp))


def _triple_contribution(model, triple, cfg, hp, ref_model, grads, inv):
    """Score one triple, accumulate its gradient, return telemetry pieces.

    Returns (l_sft, l_or, l_total, avg_w, avg_l, forwards) where l_* already
    carry the per-triple (not batch-reduced) values.
    """
    sw = seq_score(model, triple.x, triple.y_w)
    sl = seq_score(model, triple.x, triple.y_l)
    if cfg.loss_kind == "dpo":
        rw = seq_score(ref_model, triple.x, triple.y_w)
        rl = seq_score(ref_model, triple.x, triple.y_l)
        loss = objectives.dpo_loss(sw, sl, rw, rl, hp)
        dw, dl = objectives.dpo_partials(sw, sl, rw, rl, hp)
        if grads is not None:
            backward_seq_logp(model, triple.x, triple.y_w, dw * inv, grads)
            backward_seq_logp(model, triple.x, triple.y_l, dl * inv, grads)
        return (objectives.sft_nll(sw), loss, loss,
                sw.avg_logp, sl.avg_logp, 4)
    loss_fn = (objectives.pr_variant_loss if cfg.loss_kind == "orpo_pr"
               else objectives.orpo_loss)
    rep = loss_fn(sw, sl, hp)
    if grads is not None:
        scale_w = (-1.0 + hp.lam * rep.dl_or_dlogp_w) * inv
        scale_l = (hp.lam * rep.dl_or_dlogp_l) * inv
        backward_seq_logp(model, triple.x, triple.y_w, scale_w, grads)
        if scale_l != 0.0:
            backward_seq_logp(model, triple.x, triple.y_l, scale_l, grads)
    return rep.l_sft, rep.l_or, rep.l_total, sw.avg_logp, sl.avg_logp, 2


def evaluate(model: TinyLM, triples: list, cfg: TrainConfig,
             ref_model: TinyLM | None = None) -> dict:
    """Mean loss components over a fixed triple list; no mutation."""
    if cfg.loss_kind == "dpo" and ref_model is None:
        raise ValueError("dpo evaluation requires the reference model")
    hp = _effective_hp(cfg)
    sums = np.zeros(5)
    forwards = 0
    for triple in triples:
        parts = _triple_contribution(model, triple, cfg, hp, ref_model,
                                     grads=None, inv=0.0)
        sums += parts[:5]
        forwards += parts[5]
    means = sums / max(len(triples), 1)
    return {"l_sft": means[0], "l_or": means[1], "l_total": means[2],
            "avg_logp_chosen": means[3], "avg_logp_rejected": means[4],
            "margin": means[3] - means[4], "forward_passes": forwards}


def _effective_hp(cfg: TrainConfig) -> HyperParams:
    # sft is orpo with the penalty weight pinned to zero; one code path
    # is what guarantees trajectory-level equivalence.
    if cfg.loss_kind == "sft":
        return replace(cfg.hp, lam=0.0)
    return cfg.hp


def train(model_init: TinyLM, split_data: DatasetSplit, cfg: TrainConfig,
          out_dir=None) -> TrainResult:
    """Run the configured loss over the train split; the input model is
    left untouched and a trained copy is returned.

    For dpo the reference is a frozen copy of the model taken before the
    first step, rescored fresh every batch. Telemetry is one row per step
    with batch-mean components. Non-finite losses abort with step context.
    """
    if not split_data.train:
        raise ValueError("train split is empty")
    model = model_init.copy()
    hp = _effective_hp(cfg)
    ref_model = model.copy() if cfg.loss_kind == "dpo" else None
    params = model.params()
    opt_state = OptimizerState.for_params(params)
    grads = GradBlock(params)
    n_batches = math.ceil(len(split_data.train) / cfg.batch_size)
    total_steps = cfg.epochs * n_batches
    checkpoints = []
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        path0 = os.path.join(out_dir, "ckpt_0.orpk")
        save_checkpoint(model, path0)
        checkpoints.append(path0)
    telemetry = []
    eval_history = []
    best_loss = math.inf
    best_step = -1
    best_model = None
    forward_passes = 0
    step = 0
    for epoch in range(cfg.epochs):
        batches = make_batches(split_data.train, cfg.batch_size,
                               cfg.seed, epoch)
        for batch_idx, batch in enumerate(batches):
            lr = lr_at(step, total_steps, cfg)
            inv = 1.0 / len(batch)
            sums = np.zeros(5)
            for triple in batch:
                parts = _triple_contribution(model, triple, cfg, hp,
                                             ref_model, grads, inv)
                sums += parts[:5]
                forward_passes += parts[5]
            means = sums * inv
            if not np.isfinite(means).all():
                raise TrainAbort(f"non-finite loss at step {step} "
                                 f"(epoch {epoch}, batch {batch_idx})")
            optimizer_step(params, grads, opt_state, lr)
            telemetry.append(TelemetryRow(
                step=step, epoch=epoch,
                l_sft=float(means[0]), l_or=float(means[1]),
                l_total=float(means[2]),
                avg_logp_chosen=float(means[3]),
                avg_logp_rejected=float(means[4]),
                log_odds_ratio=_row_log_odds_ratio(
                    float(means[3]), float(means[4]), hp.logp_clamp),
                lr=lr))
            step += 1
            if (cfg.eval_every and split_data.eval
                    and step % cfg.eval_every == 0):
                ev = evaluate(model, split_data.eval, cfg, ref_model)
                forward_passes += ev["forward_passes"]
                eval_history.append((step, ev["l_total"]))
                if ev["l_total"] < best_loss:
                    best_loss = ev["l_total"]
                    best_step = step
                    best_model = model.copy()
    if split_data.eval and total_steps > 0:
        ev = evaluate(model, split_data.eval, cfg, ref_model)
        forward_passes += ev["forward_passes"]
        if not eval_history or eval_history[-1][0] != step:
            eval_history.append((step, ev["l_total"]))
            if ev["l_total"] < best_loss:
                best_loss = ev["l_total"]
                best_step = step
                best_model = model.copy()
    if out_dir is not None and total_steps > 0:
        path_final = os.path.join(out_dir, f"ckpt_{step}.orpk")
        save_checkpoint(model, path_final)
        checkpoints.append(path_final)
    return TrainResult(model=model, telemetry=telemetry,
                       checkpoints=checkpoints, best_step=best_step,
                       best_eval_loss=best_loss, best_model=best_model,
                       eval_history=eval_history,
                       forward_passes=forward_passes)


@dataclass
class LambdaSweepResult:
    lambdas: list
    margins: list
    telemetries: dict
    results: dict


def lambda_sweep(model_init: TinyLM, split_data: DatasetSplit,
                 lambdas: list, cfg: TrainConfig) -> LambdaSweepResult:
    """Train from identical init at each penalty weight; report the final
    held-out margin (mean chosen minus rejected avg log-prob) per weight."""
    if not lambdas:
        raise ValueError("lambdas must be non-empty")
    margins = []
    telemetries = {}
    results = {}
    for lam in lambdas:
        run_cfg = replace(cfg, loss_kind="orpo",
                          hp=replace(cfg.hp, lam=float(lam)))
        res = train(model_init, split_data, run_cfg)
        ev = evaluate(res.model, split_data.eval, run_cfg)
        margins.append(ev["margin"])
        telemetries[float(lam)] = res.telemetry
        results[float(lam)] = res
    return LambdaSweepResult(lambdas=[float(v) for v in lambdas],
                             margins=margins, telemetries=telemetries,
                             results=results)


def _fmt(x: float) -> str:
    return "%.9g" % x


def write_telemetry(path, rows: list) -> None:
    """CSV with the fixed header, LF endings, 9 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(TELEMETRY_HEADER + "\n")
        for r in rows:
            f.write(",".join([
                str(r.step), str(r.epoch), _fmt(r.l_sft), _fmt(r.l_or),
                _fmt(r.l_total), _fmt(r.avg_logp_chosen),
                _fmt(r.avg_logp_rejected), _fmt(r.log_odds_ratio),
                _fmt(r.lr)]) + "\n")


def read_telemetry(path) -> list:
    """Strict inverse of write_telemetry; rejects any header deviation."""
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if header != TELEMETRY_HEADER:
            raise ValueError("telemetry header mismatch")
        rows = []
        for line in f:
            parts = line.rstrip("\n").split(",")
            if len(parts) != 9:
                raise ValueError("telemetry row width mismatch")
            rows.append(TelemetryRow(
                step=int(parts[0]), epoch=int(parts[1]),
                l_sft=float(parts[2]), l_or=float(parts[3]),
                l_total=float(parts[4]), avg_logp_chosen=float(parts[5]),
                avg_logp_rejected=float(parts[6]),
                log_odds_ratio=float(parts[7]), lr=float(parts[8])))
    return rows
