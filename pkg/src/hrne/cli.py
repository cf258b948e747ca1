"""Command-line entry point: ``hrne <command> [options]``.

Commands: synth, train, generate, evaluate, analyze, gradcheck. Settings come
from an optional ``--config`` file of ``key = value`` lines (``#`` starts a
comment) and from flags; a flag wins over the file. Exit status is 0 on
success, 1 on a runtime failure and 2 on a usage or configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from dataclasses import dataclass
from pathlib import Path

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (DEFAULT_MAX_FRAMES, build_vocab, group_references, load_dataset, load_features,
                   pad_truncate, synth_generate, write_dataset)
from .decoder import DecoderConfig
from .encoder import VARIANTS, EncoderConfig, path_length
from .errors import ConfigError, HrneError
from .metrics import corpus_bleu, mean_token_accuracy
from .model import CaptionModel
from .numerics import make_rng


class UsageError(ConfigError):
    pass


def _int(raw: str) -> int:
    return int(raw.strip())


def _float(raw: str) -> float:
    return float(raw.strip())


def _str(raw: str) -> str:
    return raw.strip()


def _opt_float(raw: str):
    raw = raw.strip().lower()
    return None if raw in ("none", "off", "0") else float(raw)


def _opt_int(raw: str):
    raw = raw.strip().lower()
    return None if raw in ("none", "off") else int(raw)


def _variant(raw: str) -> str:
    raw = raw.strip()
    if raw not in VARIANTS:
        raise ValueError(f"expected one of {', '.join(VARIANTS)}")
    return raw


def _attention(raw: str) -> tuple[bool, bool, bool]:
    """``none`` or a comma list of positions from 1..3, e.g. ``1,3``."""
    raw = raw.strip().lower()
    if raw in ("", "none", "off"):
        return (False, False, False)
    positions = {int(p) for p in raw.split(",")}
    if not positions <= {1, 2, 3}:
        raise ValueError("attention positions must be among 1, 2, 3")
    return tuple(p in positions for p in (1, 2, 3))


def _metric(raw: str) -> str:
    raw = raw.strip()
    if raw not in ("bleu4", "token_accuracy"):
        raise ValueError("expected bleu4 or token_accuracy")
    return raw


@dataclass(frozen=True)
class Key:
    parse: object
    default: object
    help: str


# Every recognised setting. Defaults are full-size settings for real video features.
KEYS: dict[str, Key] = {
    # model
    "variant": Key(_variant, "hrne", "encoder: hrne, stacked or meanpool"),
    "hidden": Key(_int, 1024, "LSTM units in every layer"),
    "embed": Key(_int, 512, "frame and word embedding size"),
    "out_dim": Key(_int, 512, "width of the maxout output layer"),
    "chunk_len": Key(_int, 8, "frames per chunk (n)"),
    "stride": Key(_int, 8, "offset between chunk starts (s)"),
    "attention": Key(_attention, (False, False, False), "attention positions, e.g. 1,2,3 or none"),
    "max_len": Key(_int, 30, "longest generated caption"),
    "init_scale": Key(_float, 0.08, "uniform init half-width"),
    "forget_bias": Key(_float, 1.0, "initial forget-gate bias"),
    # training
    "batch_size": Key(_int, 128, "mini-batch size"),
    "max_epochs": Key(_int, 200, "epoch limit"),
    "dropout": Key(_float, 0.5, "dropout rate at LSTM inputs/outputs"),
    "patience": Key(_opt_int, 10, "epochs without improvement before stopping (none = never)"),
    "lr": Key(_float, 2e-4, "Adam learning rate"),
    "beta1": Key(_float, 0.9, "Adam beta1"),
    "beta2": Key(_float, 0.999, "Adam beta2"),
    "eps": Key(_float, 1e-8, "Adam epsilon"),
    "clip_norm": Key(_opt_float, 5.0, "global gradient-norm clip (none = off)"),
    "metric": Key(_metric, "bleu4", "validation metric: bleu4 or token_accuracy"),
    "seed": Key(_int, 0, "random seed"),
    # data
    "max_frames": Key(_int, DEFAULT_MAX_FRAMES, "pad/truncate clips to this many frames (0 = keep as is)"),
    "min_count": Key(_int, 1, "vocabulary frequency cutoff"),
    "val_manifest": Key(_str, None, "optional validation manifest (same data dir)"),
    # paths
    "data": Key(_str, None, "directory of <id>.feat files"),
    "manifest": Key(_str, None, "id<TAB>caption manifest"),
    "out": Key(_str, None, "output path"),
    "ckpt": Key(_str, None, "checkpoint path"),
    "features": Key(_str, None, "feature file"),
    # synth
    "num": Key(_int, None, "number of synthetic clips"),
    "segments": Key(_int, 4, "segments per synthetic clip"),
    "segment_len": Key(_int, 8, "frames per synthetic segment"),
    "dim": Key(_int, 16, "synthetic feature dimension"),
    "prototypes": Key(_int, 8, "number of synthetic prototypes"),
    "noise": Key(_float, 0.1, "per-frame Gaussian noise"),
    # analyze
    "T": Key(_int, None, "sequence length"),
    "n": Key(_int, None, "chunk length"),
}

COMMAND_KEYS = {
    "synth": (["out", "num", "segments", "segment_len", "dim", "prototypes", "noise", "seed"], ["out", "num"]),
    "train": ([k for k in KEYS if k not in ("ckpt", "features", "num", "segments", "segment_len", "dim",
                                            "prototypes", "noise", "T", "n")],
              ["data", "manifest", "out"]),
    "generate": (["ckpt", "features", "max_frames", "max_len"], ["ckpt", "features"]),
    "evaluate": (["ckpt", "data", "manifest", "max_frames", "max_len"], ["ckpt", "data", "manifest"]),
    "analyze": (["T", "n"], ["T", "n"]),
    "gradcheck": (["seed"], []),
}


def parse_value(key: str, raw: str):
    if key not in KEYS:
        raise UsageError(f"unknown config key {key!r}")
    try:
        return KEYS[key].parse(raw)
    except ValueError as exc:
        raise UsageError(f"cannot parse value {raw.strip()!r} for key {key!r}: {exc}") from None


def read_config_file(path) -> dict[str, str]:
    """Raw ``key -> value`` strings from a config file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        if key not in KEYS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = value
    return out


def parse_config(command: str, file_values: dict[str, str], flag_values: dict[str, str]) -> dict:
    """Merge defaults, file values and flags for ``command``; validate presence."""
    allowed, required = COMMAND_KEYS[command]
    cfg = {k: KEYS[k].default for k in allowed}
    for source in (file_values, flag_values):
        for key, raw in source.items():
            if key not in allowed:
                raise UsageError(f"key {key!r} does not apply to the {command} command")
            cfg[key] = parse_value(key, raw)
    missing = [k for k in required if cfg.get(k) is None]
    if missing:
        raise UsageError(f"missing required key(s) for {command}: {', '.join(missing)}")
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hrne", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    helps = {
        "synth": "write a synthetic order-sensitive captioning dataset",
        "train": "train a captioning model and save the best checkpoint",
        "generate": "caption one feature file with a checkpoint",
        "evaluate": "BLEU@1-4 and token accuracy of a checkpoint on a manifest",
        "analyze": "input-to-output path lengths for HRNE vs a stacked LSTM",
        "gradcheck": "finite-difference check of every gradient on a small model",
    }
    for command, (allowed, _) in COMMAND_KEYS.items():
        p = sub.add_parser(command, help=helps[command], description=helps[command])
        p.add_argument("--config", help="file of 'key = value' lines")
        p.add_argument("--report", help="write 'key: value' results to this path")
        for key in allowed:
            flag = "--" + key if len(key) == 1 else "--" + key.replace("_", "-")
            p.add_argument(flag, dest=key, default=argparse.SUPPRESS, metavar="VALUE", help=KEYS[key].help)
    return parser


# --------------------------------------------------------------------------
# commands


def _model_from(cfg, vocab, input_dim) -> CaptionModel:
    H = cfg["hidden"]
    enc = EncoderConfig(input_dim=input_dim, embed_dim=cfg["embed"], hidden1=H, hidden2=H,
                        chunk_len=cfg["chunk_len"], stride=cfg["stride"], attention=cfg["attention"],
                        variant=cfg["variant"])
    dec = DecoderConfig(vocab_size=len(vocab), embed_dim=cfg["embed"], hidden=H, out_dim=cfg["out_dim"],
                        max_len=cfg["max_len"])
    return CaptionModel.create(enc, dec, vocab, seed=cfg["seed"], scale=cfg["init_scale"],
                               forget_bias=cfg["forget_bias"])


def _max_frames(value):
    return None if not value else value


def cmd_synth(cfg, out):
    task = synth_generate(make_rng(cfg["seed"]), cfg["num"], cfg["segments"], cfg["segment_len"],
                          cfg["dim"], cfg["prototypes"], cfg["noise"])
    manifest = write_dataset(cfg["out"], task.examples)
    out["clips"] = len(task.examples)
    out["frames"] = cfg["segments"] * cfg["segment_len"]
    out["dim"] = cfg["dim"]
    out["manifest"] = str(manifest)
    print(f"wrote {len(task.examples)} clips to {cfg['out']} (manifest {manifest})")


def cmd_train(cfg, out):
    from .training import TrainConfig, train

    max_frames = _max_frames(cfg["max_frames"])
    data = load_dataset(cfg["data"], cfg["manifest"], max_frames)
    val = None
    if cfg["val_manifest"]:
        val = load_dataset(cfg["data"], cfg["val_manifest"], max_frames)
    vocab = build_vocab([ex.tokens for ex in data], cfg["min_count"])
    model = _model_from(cfg, vocab, data[0].features.shape[1] if data else 1)
    tcfg = TrainConfig(batch_size=cfg["batch_size"], max_epochs=cfg["max_epochs"], dropout=cfg["dropout"],
                       patience=cfg["patience"], seed=cfg["seed"], lr=cfg["lr"], beta1=cfg["beta1"],
                       beta2=cfg["beta2"], eps=cfg["eps"], clip_norm=cfg["clip_norm"], metric=cfg["metric"])
    result = train(model, data, tcfg, val_set=val)
    for rec in result.history:
        val_txt = "" if rec.val_metric is None else f" val_{cfg['metric']} {rec.val_metric:.4f}"
        print(f"epoch {rec.epoch} loss {rec.train_loss:.6f} updates {rec.updates}{val_txt}")
    ckpt = result.best_checkpoint
    ckpt.config["data.max_frames"] = str(cfg["max_frames"])
    save_checkpoint(cfg["out"], ckpt)
    blob = Path(cfg["out"]).read_bytes()
    print(f"saved epoch {result.best_epoch} checkpoint to {cfg['out']}")
    out["examples"] = len(data)
    out["vocab_size"] = len(vocab)
    out["epochs"] = len(result.history)
    out["updates"] = result.updates
    out["best_epoch"] = result.best_epoch
    out["stopped_early"] = result.stopped_early
    out["final_loss"] = repr(result.history[-1].train_loss)
    out["loss_curve"] = ",".join(repr(x) for x in result.batch_losses)
    out["checkpoint"] = cfg["out"]
    out["checkpoint_sha256"] = hashlib.sha256(blob).hexdigest()


def _load_model(cfg):
    ckpt: Checkpoint = load_checkpoint(cfg["ckpt"])
    model = ckpt.to_model()
    stored = ckpt.config.get("data.max_frames")
    return model, stored


def _frames_setting(cfg, stored, given):
    if "max_frames" in given or stored is None:
        return _max_frames(cfg["max_frames"])
    return _max_frames(int(stored))


def cmd_generate(cfg, out, given):
    model, stored = _load_model(cfg)
    feats = load_features(cfg["features"])
    limit = _frames_setting(cfg, stored, given)
    if limit is not None:
        feats = pad_truncate(feats, limit)
    max_len = cfg["max_len"] if "max_len" in given else None
    caption = model.generate([feats], max_len=max_len)[0]
    text = " ".join(caption)
    print(text)
    out["caption"] = text
    out["tokens"] = len(caption)


def cmd_evaluate(cfg, out, given):
    model, stored = _load_model(cfg)
    data = load_dataset(cfg["data"], cfg["manifest"], _frames_setting(cfg, stored, given))
    refs = group_references(data)
    clips = {}
    for ex in data:
        clips.setdefault(ex.clip_id, ex)
    max_len = cfg["max_len"] if "max_len" in given else None
    hyps = []
    ordered = list(clips.values())
    for i in range(0, len(ordered), 128):
        hyps += model.generate([ex.features for ex in ordered[i:i + 128]], max_len=max_len)
    report = corpus_bleu([(h, refs[ex.clip_id]) for h, ex in zip(hyps, ordered)], 4)
    acc = mean_token_accuracy(hyps, [refs[ex.clip_id][0] for ex in ordered])
    for n in range(1, 5):
        out[f"bleu{n}"] = report.score(n)
    out["brevity_penalty"] = report.brevity_penalty
    out["token_accuracy"] = acc
    out["clips"] = len(ordered)
    print(" ".join(f"BLEU@{n}={report.score(n):.4f}" for n in range(1, 5)) + f" token_accuracy={acc:.4f}")


def cmd_analyze(cfg, out):
    hrne, stacked = path_length(cfg["T"], cfg["n"])
    out["hrne"] = hrne
    out["stacked"] = stacked
    print(f"hrne={hrne} stacked={stacked}")


def cmd_gradcheck(cfg, out):
    from .gradcheck import TOLERANCE, run_gradcheck

    rep = run_gradcheck(cfg["seed"])
    verdict = "pass" if rep.passed else "FAIL"
    print(f"max relative error {rep.max_error:.3e} ({rep.worst}) over {rep.num_scalars} parameters: "
          f"{verdict} at tolerance {TOLERANCE:g}")
    out["max_relative_error"] = repr(rep.max_error)
    out["worst_tensor"] = rep.worst
    out["parameters"] = rep.num_scalars
    out["passed"] = rep.passed
    return 0 if rep.passed else 1


def write_report(path, values: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in values.items():
            fh.write(f"{k}: {v}\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("hrne: error: a command is required", file=sys.stderr)
        return 2
    given = {k: v for k, v in vars(args).items() if k in KEYS}
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = parse_config(args.command, file_values, given)
    except ConfigError as exc:
        print(f"hrne {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    results: dict = {"command": args.command}
    try:
        if args.command == "generate":
            status = cmd_generate(cfg, results, given)
        elif args.command == "evaluate":
            status = cmd_evaluate(cfg, results, given)
        else:
            status = globals()[f"cmd_{args.command}"](cfg, results)
    except ConfigError as exc:
        print(f"hrne {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except (HrneError, OSError) as exc:
        print(f"hrne {args.command}: error: {exc}", file=sys.stderr)
        return 1
    if args.report:
        write_report(args.report, results)
    return status or 0


if __name__ == "__main__":
    sys.exit(main())
