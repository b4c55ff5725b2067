"""Scalar training objectives and their analytic derivatives.

All losses here live at the sequence-score level: they map the average (or
summed) log-likelihoods produced by the lm module to scalar losses and to
partial derivatives with respect to those log-likelihoods. Chaining into
parameter space happens in the trainer via backward_seq_logp, with these
partials as upstream scales.

Sign convention: every function returns a loss to MINIMIZE, and every
derivative is of that minimized loss. Numerically sensitive pieces use the
stable forms log(1-P) = log(-expm1(avg_logp)) and -log sigmoid(z) =
softplus(-z); finite-difference tests pin both the values and the signs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lm import SeqScore

# Upper clamp on avg_logp before odds computation; odds diverge as P -> 1.
DEFAULT_LOGP_CLAMP = -1e-6


@dataclass(frozen=True)
class HyperParams:
    """Loss-mixing knobs shared by the trainer and the CLI.

    lam weights the ranking penalty against the NLL term. dpo_beta and
    pr_beta scale the contrast inside the DPO and probability-ratio
    sigmoids. logp_clamp bounds avg_logp away from zero so odds stay finite.
    """

    lam: float = 0.1
    dpo_beta: float = 0.1
    pr_beta: float = 1.0
    logp_clamp: float = DEFAULT_LOGP_CLAMP

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.dpo_beta <= 0:
            raise ValueError("dpo_beta must be > 0")
        if self.pr_beta <= 0:
            raise ValueError("pr_beta must be > 0")
        if self.logp_clamp >= 0:
            raise ValueError("logp_clamp must be < 0")


@dataclass(frozen=True)
class LossReport:
    """Per-triple loss breakdown.

    log_odds_ratio holds the contrast that actually sits inside the
    sigmoid (the true log odds ratio for the odds objective, the scaled
    log-probability difference for the probability-ratio variant), so
    gate == sigmoid(-log_odds_ratio) always holds. The two partials are
    derivatives of l_or with respect to the chosen/rejected avg_logp.
    """

    l_sft: float
    l_or: float
    l_total: float
    log_odds_w: float
    log_odds_l: float
    log_odds_ratio: float
    gate: float
    dl_or_dlogp_w: float
    dl_or_dlogp_l: float


def softplus(x: float) -> float:
    """log(1 + e^x) without overflow for large |x|."""
    return float(np.logaddexp(0.0, x))


def penalty_gate(z: float) -> float:
    """sigmoid(-z): the factor that shrinks the ranking gradient to zero
    as the chosen response pulls ahead (z is the contrast inside the loss).

    Branch-stable so that gate(z) + gate(-z) = 1 exactly.
    """
    if z >= 0:
        e = math.exp(-z)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(z))


def one_minus_prob(avg_logp: float) -> float:
    """1 - exp(avg_logp), accurate for avg_logp near zero."""
    return -math.expm1(avg_logp)


def sft_nll(score_w: SeqScore) -> float:
    """Per-token negative log-likelihood of the chosen sequence."""
    return -score_w.avg_logp


def log_odds(avg_logp: float, clamp: float = DEFAULT_LOGP_CLAMP) -> float:
    """log[P / (1 - P)] for P = exp(avg_logp), in cancellation-free form."""
    if avg_logp > clamp:
        raise ValueError("probability saturated")
    return avg_logp - math.log(one_minus_prob(avg_logp))


def odds_ratio_loss(score_w: SeqScore, score_l: SeqScore) -> tuple[float, float]:
    """Ranking penalty -log sigmoid(z) for z = log_odds(w) - log_odds(l).

    Returns (loss, z). Zero contrast gives exactly ln 2.
    """
    z = log_odds(score_w.avg_logp) - log_odds(score_l.avg_logp)
    return softplus(-z), z


def or_partials(score_w: SeqScore, score_l: SeqScore,
                clamp: float = DEFAULT_LOGP_CLAMP) -> tuple[float, float]:
    """d(odds-ratio loss)/d avg_logp for (chosen, rejected).

    The chosen partial is always negative and the rejected always positive:
    minimizing the loss raises the chosen likelihood and lowers the
    rejected one, each amplified by 1/(1 - P).
    """
    z = log_odds(score_w.avg_logp, clamp) - log_odds(score_l.avg_logp, clamp)
    gate = penalty_gate(z)
    dw = -gate / one_minus_prob(score_w.avg_logp)
    dl = gate / one_minus_prob(score_l.avg_logp)
    return dw, dl


def _contrast_report(score_w: SeqScore, score_l: SeqScore, hp: HyperParams,
                     z: float, dz_dlogp_w: float, dz_dlogp_l: float,
                     log_odds_w: float, log_odds_l: float) -> LossReport:
    """Assemble a LossReport for any loss of the form sft + lam*softplus(-z)."""
    l_sft = sft_nll(score_w)
    l_or = softplus(-z)
    gate = penalty_gate(z)
    return LossReport(
        l_sft=l_sft,
        l_or=l_or,
        l_total=l_sft + hp.lam * l_or,
        log_odds_w=log_odds_w,
        log_odds_l=log_odds_l,
        log_odds_ratio=z,
        gate=gate,
        dl_or_dlogp_w=-gate * dz_dlogp_w,
        dl_or_dlogp_l=-gate * dz_dlogp_l,
    )


def orpo_loss(score_w: SeqScore, score_l: SeqScore,
              hp: HyperParams) -> LossReport:
    """NLL on the chosen response plus lam times the odds-ratio penalty."""
    aw = min(score_w.avg_logp, hp.logp_clamp)
    al = min(score_l.avg_logp, hp.logp_clamp)
    low = log_odds(aw, hp.logp_clamp)
    lol = log_odds(al, hp.logp_clamp)
    return _contrast_report(
        score_w, score_l, hp,
        z=low - lol,
        dz_dlogp_w=1.0 / one_minus_prob(aw),
        dz_dlogp_l=-1.0 / one_minus_prob(al),
        log_odds_w=low, log_odds_l=lol)


def pr_variant_loss(score_w: SeqScore, score_l: SeqScore,
                    hp: HyperParams) -> LossReport:
    """Same shape as orpo_loss with the odds contrast replaced by
    pr_beta * (avg_logp_w - avg_logp_l), the probability-ratio form."""
    aw = min(score_w.avg_logp, hp.logp_clamp)
    al = min(score_l.avg_logp, hp.logp_clamp)
    return _contrast_report(
        score_w, score_l, hp,
        z=hp.pr_beta * (aw - al),
        dz_dlogp_w=hp.pr_beta,
        dz_dlogp_l=-hp.pr_beta,
        log_odds_w=log_odds(aw, hp.logp_clamp),
        log_odds_l=log_odds(al, hp.logp_clamp))


def dpo_loss(policy_w: SeqScore, policy_l: SeqScore, ref_w: SeqScore,
             ref_l: SeqScore, hp: HyperParams) -> float:
    """Reference-anchored pairwise loss on SUMMED log-likelihoods.

    -log sigmoid(beta * [(sum_w - ref_sum_w) - (sum_l - ref_sum_l)]);
    the caller guarantees the reference scores come from a frozen model.
    """
    margin = ((policy_w.sum_logp - ref_w.sum_logp)
              - (policy_l.sum_logp - ref_l.sum_logp))
    return softplus(-hp.dpo_beta * margin)


def dpo_partials(policy_w: SeqScore, policy_l: SeqScore, ref_w: SeqScore,
                 ref_l: SeqScore, hp: HyperParams) -> tuple[float, float]:
    """d(dpo_loss)/d avg_logp of the policy (chosen, rejected).

    sum_logp = avg_logp * length, so the sequence lengths enter the chain.
    """
    margin = ((policy_w.sum_logp - ref_w.sum_logp)
              - (policy_l.sum_logp - ref_l.sum_logp))
    gate = penalty_gate(hp.dpo_beta * margin)
    dw = -gate * hp.dpo_beta * policy_w.length
    dl = gate * hp.dpo_beta * policy_l.length
    return dw, dl
