"""Command-line surface.

Subcommands: train, gradcheck, sample-ratios, winrate, reward-train,
diversity, lambda-sweep, plot. Every run that writes artifacts puts them
under --out with a manifest.json written first; identical manifests
reproduce identical bytes. Exit codes: 0 success, 1 check failure,
2 usage or config error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from types import SimpleNamespace

import numpy as np

from . import analysis, objectives, reward, svgplot, trainer
from .data import (corpus_texts, filter_and_tokenize, load_jsonl, split)
from .lm import (LMConfig, SeqScore, TinyLM, build_vocab, load_checkpoint,
                 load_vocab, save_checkpoint, save_vocab, seq_score,
                 backward_seq_logp, GradBlock)
from .objectives import HyperParams
from .trainer import TrainAbort, TrainConfig

SEED_ENV = "ORPO_KIT_SEED"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_ABORT = 3


class ConfigError(ValueError):
    """Field-level configuration problem; maps to exit code 2."""


# Flat config key set for train-like commands: (type, default).
TRAIN_KEYS = {
    "dataset": (str, None),
    "loss": (str, "orpo"),
    "lam": (float, 0.1),
    "dpo_beta": (float, 0.1),
    "pr_beta": (float, 1.0),
    "logp_clamp": (float, objectives.DEFAULT_LOGP_CLAMP),
    "lr_max": (float, 1e-3),
    "epochs": (int, 10),
    "batch_size": (int, 32),
    "warmup_frac": (float, 0.1),
    "eval_every": (int, 50),
    "seed": (int, None),
    "embed_dim": (int, 16),
    "hidden_dim": (int, 48),
    "context_window": (int, 8),
    "min_count": (int, 1),
    "prompt_cap": (int, 128),
    "max_len": (int, 64),
    "frac_train": (float, 0.8),
    "frac_eval": (float, 0.1),
    "frac_test": (float, 0.1),
    "lambdas": (list, [0.1, 0.5, 1.0]),
    "rm_lr": (float, 5e-3),
    "rm_epochs": (int, 1),
}


def _coerce(key: str, value, kind):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key '{key}' must be a number")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key '{key}' must be an integer")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"config key '{key}' must be a string")
        return value
    if kind is list:
        if (not isinstance(value, list) or not value
                or not all(isinstance(v, (int, float)) for v in value)):
            raise ConfigError(f"config key '{key}' must be a list of numbers")
        return [float(v) for v in value]
    raise ConfigError(f"config key '{key}' has unsupported type")


def resolve_config(config_path, overrides: dict) -> dict:
    """defaults < config file < CLI flags; seed falls back to ORPO_KIT_SEED."""
    cfg = {k: d for k, (_, d) in TRAIN_KEYS.items()}
    if config_path is not None:
        try:
            with open(config_path, encoding="utf-8") as f:
                raw = json.load(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        for key, value in raw.items():
            if key not in TRAIN_KEYS:
                raise ConfigError(f"unknown config key '{key}'")
            cfg[key] = _coerce(key, value, TRAIN_KEYS[key][0])
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in TRAIN_KEYS:
            raise ConfigError(f"unknown override key '{key}'")
        cfg[key] = _coerce(key, value, TRAIN_KEYS[key][0])
    if cfg["seed"] is None:
        env = os.environ.get(SEED_ENV)
        if env is not None:
            try:
                cfg["seed"] = int(env)
            except ValueError:
                raise ConfigError(f"{SEED_ENV} must be an integer") from None
        else:
            cfg["seed"] = 0
    if cfg["seed"] < 0:
        raise ConfigError("config key 'seed' must be >= 0")
    return cfg


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(_canonical_json(obj))


def write_manifest(out_dir, command: str, config_path, cfg: dict) -> dict:
    """Manifest goes down before any artifact; the run id hashes the
    resolved config bytes together with the seed."""
    os.makedirs(out_dir, exist_ok=True)
    config_bytes = json.dumps(cfg, sort_keys=True).encode("utf-8")
    run_id = hashlib.sha256(
        config_bytes + b":" + str(cfg.get("seed", 0)).encode("ascii")
    ).hexdigest()
    manifest = {
        "command": command,
        "config_path": str(config_path) if config_path else None,
        "config": cfg,
        "run_id": run_id,
        "output_dir": str(out_dir),
    }
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def _load_dataset(cfg: dict, vocab=None):
    """JSONL -> vocab (unless given) -> filtered triples -> split."""
    path = cfg["dataset"]
    if not path:
        raise ConfigError("config key 'dataset' is required")
    if not os.path.exists(path):
        raise ConfigError(f"dataset file not found: {path}")
    rows, errors = load_jsonl(path)
    if not rows:
        raise ConfigError(f"dataset has no usable rows: {path}")
    if vocab is None:
        vocab = build_vocab(corpus_texts(rows), min_count=cfg["min_count"])
    triples, stats = filter_and_tokenize(rows, vocab,
                                         prompt_cap=cfg["prompt_cap"],
                                         max_len=cfg["max_len"])
    fractions = (cfg["frac_train"], cfg["frac_eval"], cfg["frac_test"])
    try:
        split_data = split(triples, fractions, cfg["seed"], stats)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return vocab, split_data, errors


def _hyperparams(cfg: dict) -> HyperParams:
    try:
        return HyperParams(lam=cfg["lam"], dpo_beta=cfg["dpo_beta"],
                           pr_beta=cfg["pr_beta"],
                           logp_clamp=cfg["logp_clamp"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _train_config(cfg: dict) -> TrainConfig:
    try:
        return TrainConfig(loss_kind=cfg["loss"], hp=_hyperparams(cfg),
                           lr_max=cfg["lr_max"], epochs=cfg["epochs"],
                           batch_size=cfg["batch_size"],
                           warmup_frac=cfg["warmup_frac"], seed=cfg["seed"],
                           eval_every=cfg["eval_every"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _model_config(cfg: dict, vocab_size: int) -> LMConfig:
    try:
        return LMConfig(vocab_size=vocab_size, embed_dim=cfg["embed_dim"],
                        hidden_dim=cfg["hidden_dim"],
                        context_window=cfg["context_window"],
                        seed=cfg["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_train(args) -> int:
    cfg = resolve_config(args.config, {
        "dataset": args.dataset, "loss": args.loss, "lam": args.lam,
        "epochs": args.epochs, "seed": args.seed, "lr_max": args.lr_max,
        "batch_size": args.batch_size})
    vocab, split_data, load_errors = _load_dataset(cfg)
    train_cfg = _train_config(cfg)
    model = TinyLM(_model_config(cfg, len(vocab)))
    write_manifest(args.out, "train", args.config, cfg)
    try:
        result = trainer.train(model, split_data, train_cfg, out_dir=args.out)
    except TrainAbort as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    trainer.write_telemetry(os.path.join(args.out, "telemetry.csv"),
                            result.telemetry)
    save_checkpoint(result.model, os.path.join(args.out, "model.orpk"))
    save_vocab(vocab, os.path.join(args.out, "vocab.json"))
    # The dpo reference is the untrained init, reconstructible from config.
    final_eval = trainer.evaluate(
        result.model, split_data.eval, train_cfg,
        ref_model=TinyLM(_model_config(cfg, len(vocab)))
        if cfg["loss"] == "dpo" else None)
    write_json(os.path.join(args.out, "metrics.json"), {
        "final_eval": {k: v for k, v in final_eval.items()
                       if k != "forward_passes"},
        "best_step": result.best_step,
        "best_eval_loss": result.best_eval_loss,
        "steps": len(result.telemetry),
        "forward_passes": result.forward_passes,
        "drop_stats": split_data.stats.as_dict(),
        "load_errors": load_errors,
        "checkpoints": [os.path.basename(p) for p in result.checkpoints],
    })
    return EXIT_OK


def _fd_scalar(fn, x0: float, h: float = 1e-7) -> float:
    return (fn(x0 + h) - fn(x0 - h)) / (2.0 * h)


def _rel_err(analytic: float, numeric: float) -> float:
    denom = max(abs(analytic), abs(numeric), 1e-12)
    return abs(analytic - numeric) / denom


def _score_at(avg_logp: float, length: int = 10) -> SeqScore:
    return SeqScore(avg_logp=avg_logp, sum_logp=avg_logp * length,
                    length=length)


def _suite_or_partials(rng, trials: int) -> dict:
    worst = {"rel_err": 0.0}
    for _ in range(trials):
        aw, al = rng.uniform(-6.0, -0.01, 2)
        sw, sl = _score_at(aw), _score_at(al)
        dw, dl = objectives.or_partials(sw, sl)
        fd_w = _fd_scalar(
            lambda v: objectives.odds_ratio_loss(_score_at(v), sl)[0], aw)
        fd_l = _fd_scalar(
            lambda v: objectives.odds_ratio_loss(sw, _score_at(v))[0], al)
        for name, a, f in (("chosen", dw, fd_w), ("rejected", dl, fd_l)):
            err = _rel_err(a, f)
            if err > worst["rel_err"]:
                worst = {"rel_err": err, "side": name,
                         "avg_logp_w": aw, "avg_logp_l": al}
    return worst


def _suite_dpo_partials(rng, trials: int) -> dict:
    hp = HyperParams(dpo_beta=0.1)
    worst = {"rel_err": 0.0}
    for _ in range(trials):
        aw, al, rw, rl = rng.uniform(-6.0, -0.01, 4)
        lw, ll = int(rng.integers(3, 20)), int(rng.integers(3, 20))
        pw, pl = _score_at(aw, lw), _score_at(al, ll)
        ref_w, ref_l = _score_at(rw, lw), _score_at(rl, ll)
        dw, dl = objectives.dpo_partials(pw, pl, ref_w, ref_l, hp)
        fd_w = _fd_scalar(lambda v: objectives.dpo_loss(
            _score_at(v, lw), pl, ref_w, ref_l, hp), aw)
        fd_l = _fd_scalar(lambda v: objectives.dpo_loss(
            pw, _score_at(v, ll), ref_w, ref_l, hp), al)
        for name, a, f in (("chosen", dw, fd_w), ("rejected", dl, fd_l)):
            err = _rel_err(a, f)
            if err > worst["rel_err"]:
                worst = {"rel_err": err, "side": name,
                         "avg_logp_w": aw, "avg_logp_l": al}
    return worst


def _tiny_setup(seed: int):
    """A deliberately small model and one triple for through-network checks."""
    cfg = LMConfig(vocab_size=17, embed_dim=4, hidden_dim=6,
                   context_window=3, seed=seed)
    model = TinyLM(cfg)
    # Break the zero output layer so its gradients are exercised too.
    rng = np.random.default_rng([seed, 1])
    model.output_weights += rng.uniform(-0.05, 0.05,
                                        model.output_weights.shape)
    model.output_bias += rng.uniform(-0.05, 0.05, model.output_bias.shape)
    x = rng.integers(0, 14, 4)
    y_w = rng.integers(0, 14, 6)
    y_l = rng.integers(0, 14, 6)
    return model, x, y_w, y_l


def _orpo_network_loss(model, x, y_w, y_l, hp) -> float:
    rep = objectives.orpo_loss(seq_score(model, x, y_w),
                               seq_score(model, x, y_l), hp)
    return rep.l_total


def _suite_orpo_network(seed: int, n_coords: int) -> dict:
    hp = HyperParams(lam=0.5)
    model, x, y_w, y_l = _tiny_setup(seed)
    grads = GradBlock(model.params())
    rep = objectives.orpo_loss(seq_score(model, x, y_w),
                               seq_score(model, x, y_l), hp)
    backward_seq_logp(model, x, y_w,
                      -1.0 + hp.lam * rep.dl_or_dlogp_w, grads)
    backward_seq_logp(model, x, y_l, hp.lam * rep.dl_or_dlogp_l, grads)
    rng = np.random.default_rng([seed, 2])
    worst = {"rel_err": 0.0}
    names = list(model.params().keys())
    h = 1e-5
    for _ in range(n_coords):
        name = names[rng.integers(len(names))]
        tensor = model.params()[name]
        idx = tuple(int(rng.integers(s)) for s in tensor.shape)
        keep = tensor[idx]
        tensor[idx] = keep + h
        up = _orpo_network_loss(model, x, y_w, y_l, hp)
        tensor[idx] = keep - h
        down = _orpo_network_loss(model, x, y_w, y_l, hp)
        tensor[idx] = keep
        fd = (up - down) / (2.0 * h)
        err = _rel_err(grads[name][idx], fd)
        if err > worst["rel_err"]:
            worst = {"rel_err": err, "tensor": name,
                     "index": list(idx)}
    return worst


def _suite_reward(seed: int, n_coords: int) -> dict:
    cfg = LMConfig(vocab_size=17, embed_dim=4, hidden_dim=6,
                   context_window=3, seed=seed)
    rm = reward.RewardModel(cfg)
    rng = np.random.default_rng([seed, 3])
    rm.value_head += rng.uniform(-0.5, 0.5, rm.value_head.shape)
    rm.value_bias += rng.uniform(-0.5, 0.5, rm.value_bias.shape)
    triple = SimpleNamespace(x=rng.integers(0, 14, 4),
                             y_w=rng.integers(0, 14, 6),
                             y_l=rng.integers(0, 14, 5))
    params = rm.params()
    grads = GradBlock(params)
    reward._accumulate_pair_grad(rm, triple, grads, 1.0)
    worst = {"rel_err": 0.0}
    names = list(params.keys())
    for _ in range(n_coords):
        name = names[rng.integers(len(names))]
        tensor = params[name]
        idx = tuple(int(rng.integers(s)) for s in tensor.shape)
        h = 1e-6 if name in ("value_head", "value_bias") else 1e-5
        keep = tensor[idx]
        tensor[idx] = keep + h
        up = reward.rm_pair_loss(rm, triple)
        tensor[idx] = keep - h
        down = reward.rm_pair_loss(rm, triple)
        tensor[idx] = keep
        fd = (up - down) / (2.0 * h)
        err = _rel_err(grads[name][idx], fd)
        if err > worst["rel_err"]:
            worst = {"rel_err": err, "tensor": name, "index": list(idx)}
    return worst


def run_gradcheck(seed: int, trials: int) -> dict:
    """All four analytic-vs-finite-difference suites; pure given (seed, trials)."""
    tol_scalar = 1e-6
    tol_network = 1e-4
    n_coords = max(40, min(200, trials))
    suites = {
        "or_partials": (_suite_or_partials(
            np.random.default_rng([seed, 10]), trials), tol_scalar),
        "dpo_partials": (_suite_dpo_partials(
            np.random.default_rng([seed, 11]), trials), tol_scalar),
        "orpo_network": (_suite_orpo_network(seed, n_coords), tol_network),
        "reward": (_suite_reward(seed, n_coords), tol_network),
    }
    report = {"seed": seed, "trials": trials, "suites": {}}
    all_pass = True
    for name, (worst, tol) in suites.items():
        ok = bool(worst["rel_err"] < tol)
        all_pass = all_pass and ok
        entry = {"max_rel_err": float(worst["rel_err"]), "tolerance": tol,
                 "pass": ok}
        if not ok:
            entry["worst_case"] = {
                k: float(v) if isinstance(v, (int, float, np.floating)) else v
                for k, v in worst.items() if k != "rel_err"}
        report["suites"][name] = entry
    report["all_pass"] = all_pass
    return report


def cmd_gradcheck(args) -> int:
    if args.trials < 1:
        print("gradcheck: trials must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    report = run_gradcheck(args.seed, args.trials)
    text = _canonical_json(report)
    sys.stdout.write(text)
    if args.out:
        write_manifest(args.out, "gradcheck", None,
                       {"seed": args.seed, "trials": args.trials})
        with open(os.path.join(args.out, "gradcheck.json"), "w",
                  encoding="utf-8", newline="\n") as f:
            f.write(text)
    return EXIT_OK if report["all_pass"] else EXIT_CHECK_FAILED


def cmd_sample_ratios(args) -> int:
    if args.n < 2:
        print("sample-ratios: n must be >= 2", file=sys.stderr)
        return EXIT_USAGE
    write_manifest(args.out, "sample-ratios", None,
                   {"n": args.n, "seed": args.seed})
    rep_b1 = analysis.sample_ratio_distributions(args.n, 1.0, args.seed)
    rep_b02 = analysis.sample_ratio_distributions(args.n, 0.2, args.seed)
    stds = {"or": rep_b1.log_or.std, "pr_beta1": rep_b1.log_pr.std,
            "pr_beta02": rep_b02.log_pr.std}
    summary = {
        "n": args.n, "seed": args.seed,
        "or": rep_b1.log_or.as_dict(),
        "pr_beta1": rep_b1.log_pr.as_dict(),
        "pr_beta02": rep_b02.log_pr.as_dict(),
        "std_ordering_ok": stds["or"] > stds["pr_beta1"] > stds["pr_beta02"],
    }
    write_json(os.path.join(args.out, "ratio_study.json"), summary)
    with open(os.path.join(args.out, "ratio_hist.csv"), "w",
              encoding="utf-8", newline="\n") as f:
        f.write("series,bin_left,bin_right,count\n")
        for name, stats in (("or", rep_b1.log_or),
                            ("pr_beta1", rep_b1.log_pr),
                            ("pr_beta02", rep_b02.log_pr)):
            for j, c in enumerate(stats.counts):
                f.write(f"{name},{stats.bin_edges[j]:.9g},"
                        f"{stats.bin_edges[j + 1]:.9g},{c}\n")
    svgplot.histogram_plot(
        os.path.join(args.out, "ratio_hist.svg"),
        "Contrast distributions on shared uniform draws", "contrast value",
        [("log odds ratio", rep_b1.log_or.bin_edges, rep_b1.log_or.counts),
         ("log prob ratio (b=1)", rep_b1.log_pr.bin_edges,
          rep_b1.log_pr.counts),
         ("log prob ratio (b=0.2)", rep_b02.log_pr.bin_edges,
          rep_b02.log_pr.counts)])
    return EXIT_OK


def _load_model_and_vocab(model_path, vocab_path):
    if not os.path.exists(model_path):
        raise ConfigError(f"model file not found: {model_path}")
    if vocab_path is None:
        vocab_path = os.path.join(os.path.dirname(model_path), "vocab.json")
    if not os.path.exists(vocab_path):
        raise ConfigError(f"vocab file not found: {vocab_path}")
    return load_checkpoint(model_path), load_vocab(vocab_path)


def _prompts_from_dataset(dataset_path, vocab, cfg: dict,
                          max_prompts: int) -> list:
    _, split_data, _ = _load_dataset({**cfg, "dataset": dataset_path}, vocab)
    prompts = [t.x for t in split_data.test]
    return prompts[:max_prompts] if max_prompts else prompts


def cmd_winrate(args) -> int:
    if args.rounds < 1:
        raise ConfigError("rounds must be >= 1")
    cfg = resolve_config(None, {"seed": args.seed})
    model_a, vocab = _load_model_and_vocab(args.model_a, args.vocab)
    model_b, _ = _load_model_and_vocab(args.model_b, args.vocab)
    if not os.path.exists(args.rm):
        raise ConfigError(f"reward model file not found: {args.rm}")
    rm = reward.load_reward(args.rm)
    prompts = _prompts_from_dataset(args.dataset, vocab, cfg,
                                    args.max_prompts)
    if not prompts:
        raise ConfigError("no prompts available after filtering")
    write_manifest(args.out, "winrate", None, {
        "model_a": str(args.model_a), "model_b": str(args.model_b),
        "rm": str(args.rm), "dataset": str(args.dataset),
        "rounds": args.rounds, "temperature": args.temperature,
        "seed": cfg["seed"], "max_prompts": args.max_prompts})
    report = reward.win_rate(model_a, model_b, prompts, rm,
                             temperature=args.temperature,
                             rounds=args.rounds, seed=cfg["seed"])
    write_json(os.path.join(args.out, "winrate.json"), report.as_dict())
    dist_a = reward.reward_distribution(model_a, prompts, rm,
                                        args.temperature, cfg["seed"])
    dist_b = reward.reward_distribution(model_b, prompts, rm,
                                        args.temperature, cfg["seed"])
    with open(os.path.join(args.out, "rewards.csv"), "w",
              encoding="utf-8", newline="\n") as f:
        f.write("prompt_id,round,model,reward\n")
        for name, dist in (("a", dist_a), ("b", dist_b)):
            for i, s in enumerate(dist.scores):
                f.write(f"{i},0,{name},{s:.9g}\n")
    return EXIT_OK


def cmd_reward_train(args) -> int:
    cfg = resolve_config(args.config, {
        "dataset": args.dataset, "seed": args.seed,
        "rm_epochs": args.epochs, "rm_lr": args.lr})
    vocab, split_data, _ = _load_dataset(cfg)
    try:
        rm_cfg = reward.RewardConfig(lm=_model_config(cfg, len(vocab)),
                                     lr=cfg["rm_lr"], epochs=cfg["rm_epochs"],
                                     batch_size=cfg["batch_size"],
                                     seed=cfg["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    write_manifest(args.out, "reward-train", args.config, cfg)
    result = reward.train_reward(split_data, rm_cfg)
    reward.save_reward(result.model, os.path.join(args.out, "rm.orpr"))
    save_vocab(vocab, os.path.join(args.out, "vocab.json"))
    write_json(os.path.join(args.out, "reward_metrics.json"), {
        "holdout_accuracy": result.holdout_accuracy,
        "final_train_loss": result.final_train_loss,
        "train_size": len(split_data.train),
        "eval_size": len(split_data.eval)})
    return EXIT_OK


def cmd_diversity(args) -> int:
    if args.k < 2:
        raise ConfigError("k must be >= 2")
    cfg = resolve_config(None, {"seed": args.seed})
    model, vocab = _load_model_and_vocab(args.model, args.vocab)
    prompts = _prompts_from_dataset(args.dataset, vocab, cfg,
                                    args.max_prompts)
    if len(prompts) < 2:
        raise ConfigError("need at least 2 prompts after filtering")
    write_manifest(args.out, "diversity", None, {
        "model": str(args.model), "dataset": str(args.dataset),
        "k": args.k, "temperature": args.temperature, "seed": cfg["seed"],
        "max_prompts": args.max_prompts})
    pid = analysis.per_input_diversity(model, prompts, k=args.k,
                                       temperature=args.temperature,
                                       seed=cfg["seed"])
    aid = analysis.across_input_diversity(model, prompts,
                                          temperature=args.temperature,
                                          seed=cfg["seed"])
    write_json(os.path.join(args.out, "diversity.json"), {
        "per_input": pid.as_dict(), "across_input": aid.as_dict(),
        "k": args.k, "n_prompts": len(prompts),
        "embedder": "model mean hidden state (local substitute)"})
    return EXIT_OK


def cmd_lambda_sweep(args) -> int:
    cfg = resolve_config(args.config, {
        "dataset": args.dataset, "seed": args.seed, "epochs": args.epochs})
    if args.lambdas:
        try:
            cfg["lambdas"] = [float(v) for v in args.lambdas.split(",")]
        except ValueError:
            raise ConfigError("--lambdas must be comma-separated numbers"
                              ) from None
    vocab, split_data, _ = _load_dataset(cfg)
    train_cfg = _train_config(cfg)
    model = TinyLM(_model_config(cfg, len(vocab)))
    write_manifest(args.out, "lambda-sweep", args.config, cfg)
    try:
        sweep = trainer.lambda_sweep(model, split_data, cfg["lambdas"],
                                     train_cfg)
    except TrainAbort as exc:
        print(f"sweep aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    for lam, rows in sweep.telemetries.items():
        trainer.write_telemetry(
            os.path.join(args.out, f"telemetry_lam{lam:g}.csv"), rows)
    increasing = all(b > a for a, b in zip(sweep.margins, sweep.margins[1:]))
    write_json(os.path.join(args.out, "lambda_sweep.json"), {
        "lambdas": sweep.lambdas, "margins": sweep.margins,
        "strictly_increasing": increasing})
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        rows = trainer.read_telemetry(args.telemetry)
    except OSError as exc:
        print(f"plot: cannot read telemetry: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"plot: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not rows:
        print("plot: telemetry has no rows", file=sys.stderr)
        return EXIT_USAGE
    write_manifest(args.out, "plot", None,
                   {"telemetry": str(args.telemetry)})
    steps = [r.step for r in rows]
    svgplot.line_plot(
        os.path.join(args.out, "telemetry_logprobs.svg"),
        "Response log-probabilities per step", "step", "avg log-prob",
        [("chosen", steps, [r.avg_logp_chosen for r in rows]),
         ("rejected", steps, [r.avg_logp_rejected for r in rows])])
    svgplot.line_plot(
        os.path.join(args.out, "telemetry_log_odds_ratio.svg"),
        "Log odds ratio per step", "step", "log odds ratio",
        [("log odds ratio", steps, [r.log_odds_ratio for r in rows])])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orpokit",
        description="Reference-free preference alignment toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a training job")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--loss", default=None,
                   choices=list(trainer.LOSS_KINDS))
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lr-max", dest="lr_max", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="analytic vs finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sample-ratios", help="contrast Monte Carlo study")
    p.add_argument("--n", type=int, default=50000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample_ratios)

    p = sub.add_parser("winrate", help="head-to-head win rate")
    p.add_argument("--model-a", dest="model_a", required=True)
    p.add_argument("--model-b", dest="model_b", required=True)
    p.add_argument("--rm", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--vocab", default=None)
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-prompts", dest="max_prompts", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_winrate)

    p = sub.add_parser("reward-train", help="train the pairwise reward model")
    p.add_argument("--config", default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reward_train)

    p = sub.add_parser("diversity", help="per- and across-input diversity")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--vocab", default=None)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-prompts", dest="max_prompts", type=int, default=32)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diversity)

    p = sub.add_parser("lambda-sweep", help="margin vs penalty weight")
    p.add_argument("--config", default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--lambdas", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lambda_sweep)

    p = sub.add_parser("plot", help="render telemetry curves to SVG")
    p.add_argument("--telemetry", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainAbort as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
