"""Command-line surface: dataset synthesis, training, evaluation, ablation,
spectrum/attention export, identity verification, and parameter counting.

Exit codes: 0 success, 2 user/config/data error, 3 runtime or numeric
failure. Every command accepts --json for machine-readable output and is
idempotent given identical inputs and seed (byte-identical outputs except
wall-time fields).
"""

import argparse
import copy
import hashlib
import json
import os
import statistics
import sys

import numpy as np

from . import textenc, train_eval, verify
from .data import (HORIZON_SETS, ConfigError, DataError, SynthSpec,
                   compute_global_stats, load_csv, make_windows, save_csv,
                   split, synth_generate)
from .model import ModelConfig, SpecTFModel, count_parameters, load_model, save_model
from .train_eval import TrainConfig, TrainingError, ablation_run, evaluate, train

DEFAULT_CONFIG = {
    "seed": 0,
    "data": {
        "series": None,
        "texts": None,
        "embeddings": None,
        "frequency": "none",
        "text_encoder": "toy",     # toy | file | none
        "encoder_seed": 0,
        "d_lm": 32,
        "normalization": "instance",
        "split": [0.7, 0.1, 0.2],
        "stride": 1,
    },
    "model": {
        "seq_len": 24,
        "horizon": 12,
        "d": 16,
        "d_k": 8,
        "dropout": 0.1,
        "prior_weight": 0.5,
        "pool_type": "avg",
        "act_embed": True,
        "act_attention": True,
        "act_forecaster": False,
        "act_projection": False,
    },
    "train": {
        "batch_size": 32,
        "train_epochs": 50,
        "patience": 20,
        "learning_rate": 1e-4,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "grad_clip": 5.0,
    },
}

LEDGER_COLUMNS = ["run_id", "dataset", "mode", "seed", "horizon", "mse_norm",
                  "mae_norm", "mse_raw", "mae_raw", "params", "wall_ms"]


# ---- config handling --------------------------------------------------------


def _merge_strict(defaults, override, path=""):
    if not isinstance(override, dict):
        raise ConfigError(f"config: {path or '<root>'}: expected an object")
    merged = copy.deepcopy(defaults)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"config: {where}: unknown key")
        if isinstance(defaults[key], dict):
            merged[key] = _merge_strict(defaults[key], value, where)
        else:
            merged[key] = value
    return merged


def resolve_config(raw, seed_override=None):
    """Merge a raw config dict over the defaults, rejecting unknown keys,
    and validate the enumerated fields."""
    cfg = _merge_strict(DEFAULT_CONFIG, raw)
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    data = cfg["data"]
    if data["frequency"] not in ("monthly", "weekly", "daily", "none"):
        raise ConfigError(f"config: data.frequency: bad value {data['frequency']!r}")
    if data["text_encoder"] not in ("toy", "file", "none"):
        raise ConfigError(f"config: data.text_encoder: bad value {data['text_encoder']!r}")
    if data["normalization"] not in ("instance", "global"):
        raise ConfigError(f"config: data.normalization: bad value {data['normalization']!r}")
    if cfg["model"]["pool_type"] != "avg":
        raise ConfigError(
            f"config: model.pool_type: only 'avg' is supported, "
            f"got {cfg['model']['pool_type']!r}")
    return cfg


def load_config_file(path, seed_override=None):
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path}: invalid JSON: {exc}") from exc
    return resolve_config(raw, seed_override)


def model_config_from(cfg, horizon=None):
    m = cfg["model"]
    try:
        return ModelConfig(
            lookback=m["seq_len"],
            horizon=horizon if horizon is not None else m["horizon"],
            d=m["d"],
            d_k=m["d_k"],
            d_lm=cfg["data"]["d_lm"],
            dropout=m["dropout"],
            prior_weight=m["prior_weight"],
            act_embed=m["act_embed"],
            act_attention=m["act_attention"],
            act_forecaster=m["act_forecaster"],
            act_projection=m["act_projection"],
            seed=cfg["seed"],
        )
    except ValueError as exc:
        raise ConfigError(f"config: model: {exc}") from exc


def train_config_from(cfg):
    t = cfg["train"]
    try:
        return TrainConfig(
            batch_size=t["batch_size"],
            epochs=t["train_epochs"],
            patience=t["patience"],
            learning_rate=t["learning_rate"],
            beta1=t["beta1"],
            beta2=t["beta2"],
            eps=t["eps"],
            grad_clip=t["grad_clip"],
            seed=cfg["seed"],
        )
    except ValueError as exc:
        raise ConfigError(f"config: train: {exc}") from exc


def run_id_of(cfg):
    blob = json.dumps(cfg, sort_keys=True).encode("utf-8")
    return hashlib.sha1(blob).hexdigest()[:12]


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def append_ledger(path, row):
    exists = os.path.exists(path)
    with open(path, "a", encoding="utf-8") as f:
        if not exists:
            f.write(",".join(LEDGER_COLUMNS) + "\n")
        f.write(",".join(str(row[c]) for c in LEDGER_COLUMNS) + "\n")


# ---- dataset assembly ----------------------------------------------------------


def load_text_records(cfg):
    data = cfg["data"]
    mode = data["text_encoder"]
    if mode == "none":
        return []
    if mode == "toy":
        if not data["texts"]:
            return []
        texts = textenc.load_text_jsonl(data["texts"])
        return textenc.encode_text_records(texts, data["d_lm"], data["encoder_seed"])
    if not data["embeddings"]:
        raise ConfigError("config: data.embeddings: required when text_encoder is 'file'")
    records, d_lm = textenc.load_embeddings(data["embeddings"])
    if d_lm != data["d_lm"]:
        raise ConfigError(
            f"config: data.d_lm: {data['d_lm']} does not match embedding "
            f"file dimension {d_lm}")
    return records


def build_windows(cfg, horizon=None):
    """Load the series and texts, split chronologically, and windowize each
    segment; returns {train, val, test} window lists."""
    data = cfg["data"]
    if not data["series"]:
        raise ConfigError("config: data.series: required")
    table = load_csv(data["series"], data["frequency"])
    records = load_text_records(cfg)
    lookback = cfg["model"]["seq_len"]
    horizon = horizon if horizon is not None else cfg["model"]["horizon"]
    segments = split(table, data["split"], min_rows=lookback + horizon)
    global_stats = None
    if data["normalization"] == "global":
        global_stats = compute_global_stats(segments[0])
    out = {}
    for name, segment in zip(("train", "val", "test"), segments):
        out[name] = make_windows(
            segment, records, lookback, horizon, data["d_lm"],
            stride=data["stride"], norm_mode=data["normalization"],
            global_stats=global_stats)
    return out


# ---- commands -------------------------------------------------------------------


def cmd_synth(args):
    try:
        with open(args.spec, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"synth: spec file not found: {args.spec}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"synth: {args.spec}: invalid JSON: {exc}") from exc
    spec = SynthSpec.from_json(raw)
    seed = args.seed if args.seed is not None else 0
    table, texts = synth_generate(spec, seed=seed)
    out_dir = args.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    series_path = os.path.join(out_dir, "series.csv")
    texts_path = os.path.join(out_dir, "texts.jsonl")
    save_csv(table, series_path)
    with open(texts_path, "w", encoding="utf-8") as f:
        for ts, text in texts:
            f.write(json.dumps({"ts": ts, "text": text}, sort_keys=True) + "\n")
    resolved = {"spec": raw, "seed": seed, "rows": table.n_rows,
                "channels": list(table.channels), "texts": len(texts)}
    write_json(resolved, os.path.join(out_dir, "synth.resolved.json"))
    if args.json:
        print(json.dumps(resolved, sort_keys=True))
    else:
        print(f"wrote {series_path} ({table.n_rows} rows, "
              f"{len(table.channels)} channels) and {texts_path} "
              f"({len(texts)} texts)")
    return 0


def _train_one(cfg, out_dir, horizon=None):
    windows = build_windows(cfg, horizon=horizon)
    model_cfg = model_config_from(cfg, horizon=horizon)
    train_cfg = train_config_from(cfg)
    model = SpecTFModel(model_cfg)
    report = train(model, windows["train"], windows["val"], train_cfg,
                   test_windows=windows["test"])
    os.makedirs(out_dir, exist_ok=True)
    save_model(model, os.path.join(out_dir, "checkpoint"),
               norm_mode=cfg["data"]["normalization"])
    write_json(cfg, os.path.join(out_dir, "config.resolved.json"))
    write_json(report.to_dict(), os.path.join(out_dir, "report.json"))
    return model_cfg, report


def _ledger_row(cfg, model_cfg, report, dataset):
    return {
        "run_id": run_id_of(cfg),
        "dataset": dataset,
        "mode": report.variant,
        "seed": report.seed,
        "horizon": model_cfg.horizon,
        "mse_norm": report.test_mse_norm,
        "mae_norm": report.test_mae_norm,
        "mse_raw": report.test_mse_raw,
        "mae_raw": report.test_mae_raw,
        "params": report.parameter_count,
        "wall_ms": round(report.wall_ms, 3),
    }


def cmd_train(args):
    cfg = load_config_file(args.config, args.seed)
    out_dir = args.out_dir or "run"
    dataset = os.path.basename(cfg["data"]["series"] or "?")
    if args.all_horizons:
        freq = cfg["data"]["frequency"]
        if freq not in HORIZON_SETS:
            raise ConfigError(
                f"train: --all-horizons needs a monthly/weekly/daily "
                f"frequency tag, got {freq!r}")
        horizons = HORIZON_SETS[freq]
    else:
        horizons = [None]
    summary = []
    for horizon in horizons:
        sub_dir = out_dir if horizon is None else os.path.join(out_dir, f"h{horizon}")
        model_cfg, report = _train_one(cfg, sub_dir, horizon=horizon)
        append_ledger(os.path.join(out_dir, "metrics.csv"),
                      _ledger_row(cfg, model_cfg, report, dataset))
        summary.append({
            "out_dir": sub_dir, "horizon": model_cfg.horizon,
            "best_epoch": report.best_epoch, "epochs_run": report.epochs_run,
            "test_mse_norm": report.test_mse_norm,
            "test_mae_norm": report.test_mae_norm,
            "test_mse_raw": report.test_mse_raw,
            "test_mae_raw": report.test_mae_raw,
            "params": report.parameter_count,
        })
    if args.json:
        print(json.dumps({"runs": summary}, sort_keys=True))
    else:
        for row in summary:
            print(f"h={row['horizon']}: test mse_norm={row['test_mse_norm']:.6f} "
                  f"mae_norm={row['test_mae_norm']:.6f} "
                  f"(best epoch {row['best_epoch']}, {row['params']} params) "
                  f"-> {row['out_dir']}")
    return 0


def _load_run(args, dtype=np.float32):
    """Checkpoint prefix + the run's resolved config (explicit flags win).

    Evaluation uses float32 (training precision, so metrics reproduce run
    reports exactly); the spectrum dump loads in float64 so its contents can
    be recomputed independently to tight tolerance.
    """
    prefix = args.checkpoint
    if prefix.endswith(".sptf"):
        prefix = prefix[:-5]
    config_path = args.config or os.path.join(os.path.dirname(prefix) or ".",
                                              "config.resolved.json")
    cfg = load_config_file(config_path, None)
    if getattr(args, "series", None):
        cfg["data"]["series"] = args.series
    if getattr(args, "texts", None):
        cfg["data"]["texts"] = args.texts
    model, norm_mode = load_model(prefix, dtype=dtype)
    cfg["data"]["normalization"] = norm_mode
    if model.config.d_lm != cfg["data"]["d_lm"]:
        raise ConfigError(
            f"eval: checkpoint d_lm {model.config.d_lm} does not match "
            f"config data.d_lm {cfg['data']['d_lm']}")
    if model.config.lookback != cfg["model"]["seq_len"]:
        raise ConfigError(
            f"eval: checkpoint seq_len {model.config.lookback} does not "
            f"match config model.seq_len {cfg['model']['seq_len']}")
    return model, cfg


def cmd_eval(args):
    model, cfg = _load_run(args)
    windows = build_windows(cfg, horizon=model.config.horizon)[args.split]
    metrics = evaluate(model, windows)
    out = {"split": args.split, "windows": len(windows), **metrics}
    if args.baseline:
        out["baseline"] = train_eval.mean_baseline_metrics(windows)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        write_json(out, os.path.join(args.out_dir, f"eval_{args.split}.json"))
    if args.json:
        print(json.dumps(out, sort_keys=True))
    else:
        print(f"{args.split}: mse_norm={metrics['mse_norm']:.6f} "
              f"mae_norm={metrics['mae_norm']:.6f} "
              f"mse_raw={metrics['mse_raw']:.6f} mae_raw={metrics['mae_raw']:.6f}")
        if args.baseline:
            b = out["baseline"]
            print(f"mean-baseline: mse_norm={b['mse_norm']:.6f} "
                  f"mae_norm={b['mae_norm']:.6f}")
    return 0


def cmd_spectrum(args):
    from . import spectral

    model, cfg = _load_run(args, dtype=np.float64)
    windows = build_windows(cfg, horizon=model.config.horizon)[args.split]
    if not 0 <= args.window_index < len(windows):
        raise ConfigError(
            f"spectrum: window index {args.window_index} out of range "
            f"(split {args.split!r} has {len(windows)} windows)")
    window = windows[args.window_index]
    res = model.forward(window)
    target_norm = window.target_norm
    dump = {
        "split": args.split,
        "window_index": args.window_index,
        "channel": window.channel,
        "input_amplitude": np.abs(res.input_bins).tolist(),
        "embed_before_magnitude": np.abs(res.embed_before).tolist(),
        "embed_after_magnitude": np.abs(res.embed_after).tolist(),
        "predicted_amplitude": np.abs(res.predicted_bins).tolist(),
        "target_amplitude": spectral.rfft(target_norm).amplitudes.tolist(),
        "attention": None if res.attention is None else res.attention.tolist(),
    }
    write_json(dump, args.out)
    if args.json:
        print(json.dumps({"out": args.out, "window_index": args.window_index},
                         sort_keys=True))
    else:
        print(f"wrote spectrum dump to {args.out}")
    return 0


def cmd_ablate(args):
    cfg = load_config_file(args.config, args.seed)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for mode in modes:
        if mode not in ("full", "no_text", "no_attention", "no_mulfusion"):
            raise ConfigError(f"ablate: unknown mode {mode!r}")
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not seeds:
        raise ConfigError("ablate: at least one seed required")
    out_dir = args.out_dir or "ablation"
    os.makedirs(out_dir, exist_ok=True)
    dataset = os.path.basename(cfg["data"]["series"] or "?")

    rows = []
    for seed in seeds:
        run_cfg = copy.deepcopy(cfg)
        run_cfg["seed"] = seed
        windows = build_windows(run_cfg)
        bundle = (windows["train"], windows["val"], windows["test"])
        reports = ablation_run(bundle, model_config_from(run_cfg),
                               train_config_from(run_cfg), modes=modes)
        for mode in modes:
            row = _ledger_row(run_cfg, model_config_from(run_cfg),
                              reports[mode], dataset)
            rows.append(row)
            append_ledger(os.path.join(out_dir, "metrics.csv"), row)

    medians = {}
    for mode in modes:
        mode_rows = [r for r in rows if r["mode"] == mode]
        medians[mode] = {
            key: statistics.median(r[key] for r in mode_rows)
            for key in ("mse_norm", "mae_norm", "mse_raw", "mae_raw")
        }
    result = {"dataset": dataset, "modes": modes, "seeds": seeds,
              "rows": rows, "medians": medians}
    write_json(result, os.path.join(out_dir, "ablation.json"))
    if args.json:
        print(json.dumps(result, sort_keys=True))
    else:
        for mode in modes:
            print(f"{mode}: median test mse_norm={medians[mode]['mse_norm']:.6f} "
                  f"mae_norm={medians[mode]['mae_norm']:.6f}")
    return 0


def cmd_verify(args):
    seed = args.seed if args.seed is not None else 0
    results = verify.run_all(seed=seed)
    if args.json:
        print(json.dumps([r.to_dict() for r in results], sort_keys=True))
    else:
        for r in results:
            status = "PASS" if r.passed else "FAIL"
            print(f"{r.name:22s} max_error={r.max_error:.3e} "
                  f"tolerance={r.tolerance:.0e} cases={r.cases:<6d} {status}")
    return 0 if all(r.passed for r in results) else 3


def cmd_count_params(args):
    cfg = load_config_file(args.config, args.seed)
    count = count_parameters(model_config_from(cfg))
    if args.json:
        print(json.dumps({"parameters": count}))
    else:
        print(count)
    return 0


# ---- entry point -------------------------------------------------------------------


def _add_common(parser, config_required=False):
    parser.add_argument("--config", required=config_required,
                        help="run configuration JSON")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--json", action="store_true",
                        help="machine-readable output")
    parser.add_argument("--out-dir", default=None, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spectf",
        description="Frequency-domain fusion of text and time-series spectra")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--spec", required=True, help="SynthSpec JSON file")
    _add_common(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    _add_common(p, config_required=True)
    p.add_argument("--all-horizons", action="store_true",
                   help="train once per horizon in the frequency's set")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint prefix")
    p.add_argument("--series", help="override series CSV")
    p.add_argument("--texts", help="override texts JSONL")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--baseline", action="store_true",
                   help="also report the window-mean predictor")
    _add_common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("spectrum", help="dump spectra and attention for one window")
    p.add_argument("--checkpoint", required=True, help="checkpoint prefix")
    p.add_argument("--series", help="override series CSV")
    p.add_argument("--texts", help="override texts JSONL")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--window-index", type=int, required=True)
    p.add_argument("--out", required=True, help="output JSON path")
    _add_common(p)
    p.set_defaults(fn=cmd_spectrum)

    p = sub.add_parser("ablate", help="run ablation variants over seeds")
    _add_common(p, config_required=True)
    p.add_argument("--modes", default="full,no_text,no_attention,no_mulfusion")
    p.add_argument("--seeds", default="0,1,2")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("verify", help="run the identity and gradient checks")
    _add_common(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("count-params", help="trainable scalar count for a config")
    _add_common(p, config_required=True)
    p.set_defaults(fn=cmd_count_params)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
