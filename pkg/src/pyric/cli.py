"""Command-line entry point: ``pyric synth|train|eval|diff|gradcheck``.

Exit codes: 0 ok, 1 I/O failure, 2 usage error, 3 degenerate data (EDI
undefined), 4 mismatch (grids, date ranges, or a failed gradient check).

Every subcommand accepts ``--config FILE`` (JSON object keyed by option
name, e.g. ``{"learning_rate": 5.0}``); explicit flags override the file,
and the merged settings are written to ``config.json`` in the output
directory.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

from .data.grid import GridDefinition, GridMismatchError
from .data.io import read_dataset, write_dataset
from .data.ops import parse_range, range_indices
from .data.synthetic import SCENARIOS, generate_synthetic
from .evaluation import diff_report, evaluate_region, render, training_threshold
from .loss import UndefinedScoreError
from .params import ParameterSet
from .trainer import TrainConfig, TrainingDiverged, train

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_DEGENERATE, EXIT_MISMATCH = 0, 1, 2, 3, 4

DEFAULTS = {
    "synth": {"grid": "16x16", "days": 1096, "seed": 0, "scenario": "parameter-shift", "start": "2010-01-01",
              "resolution": 0.25, "lat0": 35.0, "lon0": -120.0},
    "train": {"data": None, "ledger": None, "train_range": None, "learn": None, "learning_rate": 1e-3,
              "max_epochs": 50, "batch": None, "clip_limit": 10.0, "quantile_q": 0.5, "beta": 10.0,
              "beta_final": None, "patience": 10, "validation_days": 365, "seed": 0},
    "eval": {"data": None, "ledger": None, "train_range": None, "test_range": None, "quantile_q": 0.5,
             "fuzzy_radius": 1},
    "diff": {"data": None, "trained": None, "untrained": None, "train_range": None, "test_range": None,
             "quantile_q": 0.5, "fuzzy_radius": 1},
    "gradcheck": {"ledger": None, "points": 20, "seed": 0, "step": 1e-5, "tolerance": 1e-4},
}


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--config", help="JSON file of option values")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads (default: $PYRIC_THREADS or CPU count)")
    common.add_argument("--seed", type=int)

    p = argparse.ArgumentParser(prog="pyric", description="Differentiable ignition component calibration.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], argument_default=S, help="write a synthetic dataset")
    s.add_argument("--grid", help="ROWSxCOLS, e.g. 16x16")
    s.add_argument("--days", type=int)
    s.add_argument("--scenario", choices=SCENARIOS)
    s.add_argument("--start", help="first date, YYYY-MM-DD")
    s.add_argument("--resolution", type=float)
    s.add_argument("--lat0", type=float)
    s.add_argument("--lon0", type=float)

    def data_opts(q):
        q.add_argument("--data", help="dataset manifest or directory")
        q.add_argument("--train-range", dest="train_range", help="START:END of the training period")

    def eval_opts(q):
        q.add_argument("--test-range", dest="test_range", help="START:END of the test period")
        q.add_argument("--quantile", dest="quantile_q", type=float)
        q.add_argument("--fuzzy-radius", dest="fuzzy_radius", type=int)

    t = sub.add_parser("train", parents=[common], argument_default=S, help="calibrate parameters")
    data_opts(t)
    t.add_argument("--ledger", help="starting parameter ledger (default: built-in)")
    t.add_argument("--learn", help="comma-separated parameters to learn; all others frozen")
    t.add_argument("--lr", dest="learning_rate", type=float)
    t.add_argument("--epochs", dest="max_epochs", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--clip-limit", dest="clip_limit", type=float)
    t.add_argument("--quantile", dest="quantile_q", type=float)
    t.add_argument("--beta", type=float)
    t.add_argument("--beta-final", dest="beta_final", type=float)
    t.add_argument("--patience", type=int)
    t.add_argument("--validation-days", dest="validation_days", type=int)

    e = sub.add_parser("eval", parents=[common], argument_default=S, help="test-period skill map")
    data_opts(e)
    eval_opts(e)
    e.add_argument("--ledger")

    d = sub.add_parser("diff", parents=[common], argument_default=S, help="trained minus untrained skill")
    data_opts(d)
    eval_opts(d)
    d.add_argument("--trained", help="trained ledger")
    d.add_argument("--untrained", help="baseline ledger (default: built-in)")

    g = sub.add_parser("gradcheck", parents=[common], argument_default=S, help="finite-difference check")
    g.add_argument("--ledger")
    g.add_argument("--points", type=int)
    g.add_argument("--step", type=float)
    g.add_argument("--tolerance", type=float)
    return p


def effective_config(command: str, flags: dict) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS[command])
    cfg["out"] = None
    if "config" in flags:
        try:
            doc = json.loads(Path(flags["config"]).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{flags['config']}: not valid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise UsageError(f"{flags['config']}: expected a JSON object")
        unknown = set(doc) - set(cfg) - {"threads"}
        if unknown:
            raise UsageError(f"{flags['config']}: unknown options {sorted(unknown)}")
        cfg.update(doc)
    cfg.update({k: v for k, v in flags.items() if k not in ("command", "config")})
    cfg["threads"] = resolve_threads(cfg.get("threads"))
    return cfg


def resolve_threads(value) -> int:
    if value is None:
        env = os.environ.get("PYRIC_THREADS")
        if env:
            try:
                value = int(env)
            except ValueError as exc:
                raise UsageError(f"PYRIC_THREADS must be an integer, got {env!r}") from exc
        else:
            value = os.cpu_count() or 1
    if int(value) < 1:
        raise UsageError("threads must be at least 1")
    return int(value)


def _require(cfg: dict, *names: str) -> None:
    missing = [n for n in names if cfg.get(n) in (None, "")]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")


def _out_dir(cfg: dict) -> Path:
    _require(cfg, "out")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo(cfg: dict, out: Path) -> None:
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def _ledger(path) -> ParameterSet:
    return ParameterSet.default() if path in (None, "", "default") else ParameterSet.load(path)


def _range(text: str, what: str):
    try:
        return parse_range(text)
    except ValueError as exc:
        raise UsageError(f"{what}: {exc}") from exc


def _slice(dataset, text: str, what: str):
    span = _range(text, what)
    i, j = range_indices(dataset.dates, span)
    return dataset.day_slice(i, j)


def cmd_synth(cfg: dict) -> int:
    try:
        rows, cols = (int(x) for x in str(cfg["grid"]).lower().split("x"))
    except ValueError as exc:
        raise UsageError(f"--grid must look like 16x16, got {cfg['grid']!r}") from exc
    if cfg["scenario"] not in SCENARIOS:
        raise UsageError(f"unknown scenario {cfg['scenario']!r}")
    if rows < 1 or cols < 1 or int(cfg["days"]) < 1:
        raise UsageError("grid and days must be positive")
    grid = GridDefinition.regular(rows, cols, cfg["lat0"], cfg["lon0"], cfg["resolution"])
    data = generate_synthetic(grid, int(cfg["days"]), int(cfg["seed"]), cfg["scenario"], cfg["start"])
    out = _out_dir(cfg)
    write_dataset(data, out)
    _echo(cfg, out)
    a = data.stack.attrs
    n_fire = int(data.fire.fire.sum())
    print(f"wrote {out / 'manifest.json'}: {rows}x{cols} cells, {cfg['days']} days, "
          f"{n_fire} fire cell-days (base rate {a['fire_base_rate']:.4%})")
    if "perturbed_parameter" in a:
        print(f"generating change: {a['perturbed_parameter']} = {a['true_value']:g} (default {a['default_value']:g})")
    return EXIT_OK


def cmd_train(cfg: dict) -> int:
    _require(cfg, "data")
    out = _out_dir(cfg)
    data = read_dataset(cfg["data"])
    if cfg.get("train_range"):
        data = _slice(data, cfg["train_range"], "--train-range")
    params = _ledger(cfg.get("ledger"))
    if cfg.get("learn"):
        names = cfg["learn"] if isinstance(cfg["learn"], list) else str(cfg["learn"]).split(",")
        try:
            params = params.only_learn([n.strip() for n in names if n.strip()])
        except KeyError as exc:
            raise UsageError(str(exc)) from exc
    keys = ("learning_rate", "max_epochs", "batch", "clip_limit", "quantile_q", "beta", "beta_final",
            "patience", "validation_days", "seed", "threads")
    try:
        tc = TrainConfig(**{k: cfg[k] for k in keys})
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    _echo(cfg, out)

    def progress(r):
        print(f"epoch {r.epoch:3d}  loss {r.loss:.6f}  validation EDI {r.validation_edi:.6f}", flush=True)

    try:
        fitted, history = train(data, params, tc, progress=progress)
    except TrainingDiverged as exc:
        if exc.checkpoint is not None:
            exc.checkpoint.params.save(out / "ledger.json")
            exc.checkpoint.save(out / "checkpoint.json")
        raise
    fitted.save(out / "ledger.json")
    history.best.save(out / "checkpoint.json")
    history.to_csv(out / "history.csv")
    print(f"best epoch {history.best_epoch}: validation EDI {history.best.validation_edi:.6f}; "
          f"wrote {out / 'ledger.json'}")
    return EXIT_OK


def _skill(cfg: dict, data, params: ParameterSet):
    train_part = _slice(data, cfg["train_range"], "--train-range")
    test_part = _slice(data, cfg["test_range"], "--test-range")
    tr, te = _range(cfg["train_range"], "--train-range"), _range(cfg["test_range"], "--test-range")
    if tr[0] <= te[1] and te[0] <= tr[1]:
        raise UsageError("training and test ranges overlap")
    thr = training_threshold(train_part, params, float(cfg["quantile_q"]))
    meta = {"threshold_source": {"train_range": cfg["train_range"], "quantile_q": float(cfg["quantile_q"])}}
    return evaluate_region(test_part, params, thr, int(cfg["fuzzy_radius"]), metadata=meta)


def cmd_eval(cfg: dict) -> int:
    _require(cfg, "data", "train_range", "test_range")
    out = _out_dir(cfg)
    data = read_dataset(cfg["data"])
    report = _skill(cfg, data, _ledger(cfg.get("ledger")))
    _echo(cfg, out)
    render(report, out)
    print(f"aggregate EDI {report.aggregate.value:.6f} over {int((~report.degenerate).sum())} scored cells; "
          f"wrote {out}")
    return EXIT_OK


def cmd_diff(cfg: dict) -> int:
    _require(cfg, "data", "trained", "train_range", "test_range")
    out = _out_dir(cfg)
    data = read_dataset(cfg["data"])
    trained = _skill(cfg, data, _ledger(cfg["trained"]))
    untrained = _skill(cfg, data, _ledger(cfg.get("untrained")))
    diff = diff_report(trained, untrained)
    _echo(cfg, out)
    render(diff, out)
    print(f"aggregate EDI change {diff.aggregate_delta:+.6f} "
          f"({untrained.aggregate.value:.6f} -> {trained.aggregate.value:.6f}); wrote {out}")
    return EXIT_OK


def cmd_gradcheck(cfg: dict) -> int:
    from .gradcheck import BoundaryWarning, check_edi_loss, check_ic_graph

    params = _ledger(cfg.get("ledger"))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BoundaryWarning)
        ic = check_ic_graph(params, int(cfg["points"]), int(cfg["seed"]), float(cfg["step"]),
                            float(cfg["tolerance"]))
        loss = check_edi_loss(int(cfg["points"]), int(cfg["seed"]), tolerance=float(cfg["tolerance"]))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    result = {}
    for s in (ic, loss):
        worst = s.worst()
        status = "PASS" if s.passed else "FAIL"
        print(f"{status} {s.graph}: {len(s.reports)} points, {s.excluded} excluded, "
              f"max relative error {s.max_rel_error:.3e} (worst input {worst.worst_input})")
        result[s.graph] = {"passed": s.passed, "points": len(s.reports), "excluded": s.excluded,
                           "max_rel_error": s.max_rel_error, "worst_input": str(worst.worst_input)}
    if cfg.get("out"):
        out = _out_dir(cfg)
        _echo(cfg, out)
        (out / "summary.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if ic.passed and loss.passed else EXIT_MISMATCH


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "diff": cmd_diff,
            "gradcheck": cmd_gradcheck}


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = vars(args)
    command = flags["command"]
    try:
        cfg = effective_config(command, flags)
        return COMMANDS[command](cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"pyric {command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UndefinedScoreError as exc:
        print(f"pyric {command}: degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except GridMismatchError as exc:
        print(f"pyric {command}: mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except TrainingDiverged as exc:
        print(f"pyric {command}: {exc}; last good checkpoint saved", file=sys.stderr)
        return EXIT_DEGENERATE
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"pyric {command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # malformed inputs on disk (bad manifest, wrong sizes) are I/O problems
        print(f"pyric {command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
