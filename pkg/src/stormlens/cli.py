"""Command-line front end: synth, train, evaluate, explain-global,
explain-local, correlate.

Every command is a pure function of (config file, flags, input files):
re-running with the same inputs reproduces every artifact byte-for-byte.
Each run writes a ``run_manifest_<command>.json`` with the resolved
config, input digests, and artifact list.

Exit codes: 0 success, 1 internal/numeric failure, 2 user/input error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import re
import sys
from dataclasses import dataclass

import numpy as np

from . import analysis, data, lime, model as model_mod, plot, shapley
from .errors import InputError, StormlensError
from .features import FEATURE_NAMES

METHODS = ("exact", "kernel", "gradient")


@dataclass
class RunConfig:
    """Resolved run configuration (defaults < config file < CLI flags)."""

    data: str | None = None
    out: str = "out"
    model: str | None = None
    seed: int = 42
    threads: int = 1
    # data / training
    window: int = 10
    train_fraction: float = 0.8
    hidden: int = 32
    epochs: int = 30
    batch: int = 32
    lr: float = 1e-3
    threshold: float = 0.5
    horizon_hours: int = 24
    # explainers
    method: str = "gradient"
    background: int = 100
    n_coalitions: int = 2048
    n_steps: int = 16
    lime_n: int = 5000
    lime_k: int = 12
    lime_width: float | None = None
    lime_lambda: float = 1.0
    sample_id: str | None = None
    # synthetic generator
    n_ars: int = 200
    samples_per_ar: int = 14
    dominant: str = "TOTPOT"
    correlate: str = "SAVNCPP"
    rho: float = 0.95
    label_noise: float = 0.01

    def validate(self) -> None:
        if self.seed < 0:
            raise InputError("seed must be nonnegative")
        if self.window < 1:
            raise InputError("window length must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise InputError("train fraction must be in (0, 1)")
        if self.method not in METHODS:
            raise InputError(f"method must be one of {', '.join(METHODS)}")
        if self.background < 1:
            raise InputError("background size must be >= 1")
        if self.n_steps < 1:
            raise InputError("n_steps must be >= 1")
        if self.lime_n < 10:
            raise InputError("lime_n must be >= 10")
        if not 1 <= self.lime_k <= len(FEATURE_NAMES):
            raise InputError(f"lime_k must be in 1..{len(FEATURE_NAMES)}")
        if self.lime_width is not None and not self.lime_width > 0:
            raise InputError("lime_width must be positive")
        if self.lime_lambda < 0:
            raise InputError("lime_lambda must be nonnegative")
        if self.threads < 1:
            raise InputError("threads must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise InputError("threshold must be in (0, 1)")
        self.plant()  # validates rho / label_noise / feature names

    def plant(self) -> data.PlantSpec:
        spec = data.PlantSpec(
            dominant=self.dominant,
            correlate=self.correlate,
            rho=self.rho,
            label_noise=self.label_noise,
            trend_window=self.window,
        )
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_OPTIONAL_FLOATS = {"lime_width"}
_OPTIONAL_STRS = {"data", "model", "sample_id"}


def _coerce(key: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    if key not in fields:
        raise InputError(f"unknown config key {key!r}")
    raw = raw.strip()
    if key in _OPTIONAL_FLOATS and raw.lower() in ("", "auto", "none"):
        return None
    if key in _OPTIONAL_STRS:
        return raw or None
    default = fields[key].default
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or key in _OPTIONAL_FLOATS:
            return float(raw)
    except ValueError:
        raise InputError(f"config key {key!r}: cannot parse value {raw!r}") from None
    return raw


def load_config_file(path) -> dict:
    """Parse a flat KEY=VALUE config file ('#' starts a comment)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc}") from None
    values: dict = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise InputError(f"{path} line {ln}: expected KEY=VALUE")
        key, raw = stripped.split("=", 1)
        key = key.strip().lower()
        values[key] = _coerce(key, raw)
    return values


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stormlens",
        description="solar-storm prediction with global and local explanations",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("synth", "generate a synthetic dataset with planted ground truth"),
        ("train", "train the classifier and report held-out skill"),
        ("evaluate", "evaluate a checkpoint on the held-out split"),
        ("explain-global", "attribution over the test set plus beeswarm/bar/decision plots"),
        ("explain-local", "local surrogate explanation for one test sample"),
        ("correlate", "correlation matrix and dependence plots"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", help="flat KEY=VALUE config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="artifact output directory")
        sp.add_argument("--data", help="dataset CSV path")
        sp.add_argument("--model", help="model checkpoint path")
        sp.add_argument("--threads", type=int)
        sp.add_argument("--window", type=int)
        sp.add_argument("--train-fraction", dest="train_fraction", type=float)
        sp.add_argument("--hidden", type=int)
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--batch", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--threshold", type=float)
        sp.add_argument("--method", choices=METHODS)
        sp.add_argument("--background", type=int)
        sp.add_argument("--n-coalitions", dest="n_coalitions", type=int)
        sp.add_argument("--n-steps", dest="n_steps", type=int)
        sp.add_argument("--lime-n", dest="lime_n", type=int)
        sp.add_argument("--lime-k", dest="lime_k", type=int)
        sp.add_argument("--lime-width", dest="lime_width", type=float)
        sp.add_argument("--lime-lambda", dest="lime_lambda", type=float)
        sp.add_argument("--sample-id", dest="sample_id")
        sp.add_argument("--n-ars", dest="n_ars", type=int)
        sp.add_argument("--samples-per-ar", dest="samples_per_ar", type=int)
        sp.add_argument("--dominant")
        sp.add_argument("--correlate", dest="correlate")
        sp.add_argument("--rho", type=float)
        sp.add_argument("--label-noise", dest="label_noise", type=float)
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        for key, value in load_config_file(args.config).items():
            setattr(cfg, key, value)
    for f in dataclasses.fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# shared plumbing


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_manifest(cfg: RunConfig, command: str, inputs: list[str], artifacts: list[str]) -> None:
    doc = {
        "command": command,
        "config": cfg.to_dict(),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "artifacts": sorted(artifacts),
    }
    _write_json(os.path.join(cfg.out, f"run_manifest_{command.replace('-', '_')}.json"), doc)


def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) is None:
            raise InputError(f"--{name.replace('_', '-')} is required for this command")


def _sanitize(identifier: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "-", identifier)


def _load_model(cfg: RunConfig) -> tuple[model_mod.LstmModel, dict]:
    _require(cfg, "model")
    net, extra = model_mod.load_checkpoint(cfg.model)
    stored = extra.get("feature_names")
    if stored is not None and tuple(stored) != FEATURE_NAMES:
        raise InputError(
            "checkpoint/dataset mismatch in feature order: checkpoint has "
            + ",".join(stored)
        )
    return net, extra


def _prepare_windows(cfg: RunConfig, extra: dict):
    """Rebuild the exact train/test windows a checkpoint was trained with."""
    _require(cfg, "data")
    samples = data.load_csv(cfg.data)
    window = int(extra.get("window_length", cfg.window))
    fraction = float(extra.get("train_fraction", cfg.train_fraction))
    split_seed = int(extra.get("split_seed", cfg.seed))
    train_s, test_s = data.split(samples, fraction, split_seed)
    stats = data.NormStats.from_dict(extra["norm_stats"]) if "norm_stats" in extra \
        else data.fit_norm_stats(train_s)
    train_w = data.windowize(data.normalize_samples(train_s, stats), window)
    test_w = data.windowize(data.normalize_samples(test_s, stats), window)
    if len(train_w) == 0 or len(test_w) == 0:
        raise InputError(
            f"windowing with T={window} left an empty split "
            f"({len(train_w)} train / {len(test_w)} test windows)"
        )
    return samples, train_s, test_s, stats, train_w, test_w


def _explain_test_set(cfg: RunConfig, net, train_w, test_w):
    background = shapley.sample_background(train_w.values, cfg.background, cfg.seed)
    explanations = shapley.explain_set(
        net,
        test_w.values,
        background,
        method=cfg.method,
        seed=cfg.seed,
        sample_ids=test_w.sample_ids,
        n_coalitions=cfg.n_coalitions,
        n_steps=cfg.n_steps,
        threads=cfg.threads,
    )
    return background, explanations


# ---------------------------------------------------------------------------
# commands


def cmd_synth(cfg: RunConfig) -> list[str]:
    plant = cfg.plant()
    samples = data.synth_generate(cfg.n_ars, cfg.samples_per_ar, cfg.seed, plant)
    os.makedirs(cfg.out, exist_ok=True)
    csv_path = cfg.data or os.path.join(cfg.out, "data.csv")
    data.write_csv(csv_path, samples)
    n_pos = sum(1 for s in samples if s.label == "P")
    manifest = {
        "seed": cfg.seed,
        "plant": plant.to_dict(),
        "n_ars": cfg.n_ars,
        "samples_per_ar": cfg.samples_per_ar,
        "n_samples": len(samples),
        "class_counts": {"P": n_pos, "N": len(samples) - n_pos},
        "csv": str(csv_path),
    }
    _write_json(os.path.join(cfg.out, "data_manifest.json"), manifest)
    artifacts = [os.path.basename(csv_path), "data_manifest.json"]
    _write_manifest(cfg, "synth", [], artifacts)
    return artifacts


def cmd_train(cfg: RunConfig) -> list[str]:
    _require(cfg, "data")
    os.makedirs(cfg.out, exist_ok=True)
    samples = data.load_csv(cfg.data)
    train_s, test_s = data.split(samples, cfg.train_fraction, cfg.seed)
    stats = data.fit_norm_stats(train_s)
    train_w = data.windowize(data.normalize_samples(train_s, stats), cfg.window)
    test_w = data.windowize(data.normalize_samples(test_s, stats), cfg.window)
    if len(train_w) == 0 or len(test_w) == 0:
        raise InputError(
            f"windowing with T={cfg.window} left an empty split "
            f"({len(train_w)} train / {len(test_w)} test windows)"
        )

    tc = model_mod.TrainConfig(
        hidden=cfg.hidden, epochs=cfg.epochs, batch=cfg.batch,
        learning_rate=cfg.lr, seed=cfg.seed,
    )
    net, history = model_mod.train(train_w, tc)
    result = model_mod.evaluate(net, test_w, cfg.threshold)

    extra = {
        "window_length": cfg.window,
        "train_fraction": cfg.train_fraction,
        "split_seed": cfg.seed,
        "norm_stats": stats.to_dict(),
        "feature_names": list(FEATURE_NAMES),
        "horizon_hours": cfg.horizon_hours,
        "untrained": cfg.epochs == 0,
    }
    model_path = os.path.join(cfg.out, "model.json")
    model_mod.save_checkpoint(model_path, net, extra)

    metrics = {
        "loss_history": history,
        "evaluation": result.to_dict(),
        "threshold": cfg.threshold,
        "n_train_windows": len(train_w),
        "n_test_windows": len(test_w),
        "n_dropped_train": train_w.n_dropped,
        "n_dropped_test": test_w.n_dropped,
        "train_base_value": shapley.base_value(net, train_w.values),
        "horizon_hours": cfg.horizon_hours,
        "untrained": cfg.epochs == 0,
    }
    _write_json(os.path.join(cfg.out, "metrics.json"), metrics)
    artifacts = ["model.json", "metrics.json"]
    _write_manifest(cfg, "train", [cfg.data], artifacts)
    return artifacts


def cmd_evaluate(cfg: RunConfig) -> list[str]:
    net, extra = _load_model(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    _, _, _, _, train_w, test_w = _prepare_windows(cfg, extra)
    result = model_mod.evaluate(net, test_w, cfg.threshold)
    metrics = {
        "evaluation": result.to_dict(),
        "threshold": cfg.threshold,
        "n_test_windows": len(test_w),
        "train_base_value": shapley.base_value(net, train_w.values),
        "horizon_hours": extra.get("horizon_hours", cfg.horizon_hours),
        "untrained": extra.get("untrained", False),
    }
    _write_json(os.path.join(cfg.out, "metrics.json"), metrics)
    artifacts = ["metrics.json"]
    _write_manifest(cfg, "evaluate", [cfg.data, cfg.model], artifacts)
    return artifacts


def cmd_explain_global(cfg: RunConfig) -> list[str]:
    net, extra = _load_model(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    _, _, _, _, train_w, test_w = _prepare_windows(cfg, extra)
    _, explanations = _explain_test_set(cfg, net, train_w, test_w)

    _write_json(
        os.path.join(cfg.out, "shap.json"), [e.to_dict() for e in explanations]
    )
    artifacts = ["shap.json"]

    importance = shapley.global_importance(explanations)
    final_values = test_w.values[:, -1, :]
    artifacts += plot.write_pair(
        cfg.out,
        "beeswarm",
        plot.spec_beeswarm(explanations, final_values, importance, FEATURE_NAMES),
    )
    artifacts += plot.write_pair(cfg.out, "bar", plot.spec_bar(importance, FEATURE_NAMES))
    base = explanations[0].base
    paths, bottom_up = shapley.decision_path(explanations, importance, base)
    artifacts += plot.write_pair(
        cfg.out,
        "decision",
        plot.spec_decision(paths, bottom_up, base, [e.fx for e in explanations], FEATURE_NAMES),
    )
    _write_manifest(cfg, "explain-global", [cfg.data, cfg.model], artifacts)
    return artifacts


def cmd_explain_local(cfg: RunConfig) -> list[str]:
    _require(cfg, "sample_id")
    net, extra = _load_model(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    _, _, _, _, train_w, test_w = _prepare_windows(cfg, extra)

    ids = test_w.sample_ids
    if cfg.sample_id in ids:
        index = ids.index(cfg.sample_id)
    elif cfg.sample_id.isdigit() and int(cfg.sample_id) < len(ids):
        index = int(cfg.sample_id)
    else:
        raise InputError(
            f"unknown sample-id {cfg.sample_id!r}; expected a test window id "
            f"such as {ids[0]!r} or an index below {len(ids)}"
        )

    window = test_w.values[index]
    disc = lime.discretizer_fit(train_w.values[:, -1, :])

    def predict_rows(rows: np.ndarray) -> np.ndarray:
        batch = np.repeat(window[None, :, :], rows.shape[0], axis=0)
        batch[:, -1, :] = rows
        return net.predict_proba(batch)

    explanation = lime.explain_local(
        predict_rows,
        window[-1],
        disc,
        n=cfg.lime_n,
        k=cfg.lime_k,
        seed=shapley.subseed(cfg.seed, index),
        ridge_lambda=cfg.lime_lambda,
        kernel_width=cfg.lime_width,
        sample_id=ids[index],
    )
    stem = f"lime_{_sanitize(ids[index])}"
    _write_json(os.path.join(cfg.out, f"{stem}.json"), explanation.to_dict())
    artifacts = [f"{stem}.json"]
    artifacts += plot.write_pair(cfg.out, f"{stem}_plot", plot.spec_lime(explanation))
    _write_manifest(cfg, "explain-local", [cfg.data, cfg.model], artifacts)
    return artifacts


def cmd_correlate(cfg: RunConfig) -> list[str]:
    net, extra = _load_model(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    _, train_s, _, _, train_w, test_w = _prepare_windows(cfg, extra)

    matrix = analysis.correlation_matrix(data.features_matrix(train_s))
    with open(os.path.join(cfg.out, "corr.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(matrix.to_csv())
    _write_json(os.path.join(cfg.out, "corr.json"), matrix.to_dict())
    artifacts = ["corr.csv", "corr.json"]

    _, explanations = _explain_test_set(cfg, net, train_w, test_w)
    importance = shapley.global_importance(explanations)
    top = FEATURE_NAMES[importance.order[0]]
    bottom = FEATURE_NAMES[importance.order[-1]]
    for stem, feature in (("dependence_top", top), ("dependence_bottom", bottom)):
        dep = analysis.dependence_data(feature, explanations, test_w.values, matrix)
        artifacts += plot.write_pair(cfg.out, stem, plot.spec_dependence(dep))
    _write_manifest(cfg, "correlate", [cfg.data, cfg.model], artifacts)
    return artifacts


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "explain-global": cmd_explain_global,
    "explain-local": cmd_explain_local,
    "correlate": cmd_correlate,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        _COMMANDS[args.command](cfg)
        return 0
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StormlensError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
