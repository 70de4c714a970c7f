"""Command-line front end.

Subcommands:
  run          one experiment from a config file
  sweep        the same experiment across one axis of values
  interpolate  loss along the line between two checkpoints
  svcca        per-layer similarity between two checkpoints
  report       render figures from a results directory

Every run produces delimited outputs (metrics.jsonl, summary.csv and friends);
`report` turns any directory of them into PNG figures. Validation and IO
problems exit with code 2, runtime failures with 1; either way the last stderr
line is a single JSON record with the error class and message.
"""

import argparse
import json
import os
import re
import sys

import numpy as np

from .config import ConfigError, config_to_dict, load_config
from .data import load_csv
from .nn import NumericalError, load_checkpoint
from .orchestrator import (
    _TAG_EVAL,
    ClientError,
    build_experiment,
    default_interpolation_grid,
    derived_seed,
    loss_sweep,
    run_experiment,
)
from .reporting import (
    METRICS_NAME,
    render_comparison_figure,
    render_interpolation_figure,
    render_run_figures,
    render_svcca_figure,
    write_table,
    write_yaml,
)
from .svcca import layer_activations, svcca_score

OUT_ROOT_ENV = "FEDATSIM_OUT"


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedatsim",
        description="Desk-scale federated adversarial training simulator.",
        epilog=f"Default output root: --out, else ${OUT_ROOT_ENV}, else ./runs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p, required=True):
        p.add_argument("--config", required=required, metavar="PATH", help="YAML experiment config")
        p.add_argument(
            "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
            help="override one config field (dotted key); repeatable",
        )
        p.add_argument("--seed", type=int, default=None, help="override run.seed")

    def add_out(p):
        p.add_argument("--out", metavar="DIR", help="output directory")

    p = sub.add_parser("run", help="run one experiment")
    add_config(p)
    add_out(p)
    p.add_argument("--workers", type=int, default=None, help="client worker threads")

    p = sub.add_parser("sweep", help="run one experiment per value of a config axis")
    add_config(p)
    add_out(p)
    p.add_argument("--workers", type=int, default=None, help="client worker threads")
    p.add_argument("--axis", required=True, metavar="KEY", help="dotted config key to sweep")
    p.add_argument("--values", required=True, metavar="V1,V2,...", help="comma-separated values")

    p = sub.add_parser("interpolate", help="loss along the line between two checkpoints")
    p.add_argument("ckpt1")
    p.add_argument("ckpt2")
    add_config(p)
    add_out(p)
    p.add_argument("--grid", type=int, default=29, help="number of mixing weights over [-0.2, 1.2]")

    p = sub.add_parser("svcca", help="per-layer similarity between two checkpoints")
    p.add_argument("ckpt1")
    p.add_argument("ckpt2")
    add_config(p, required=False)
    add_out(p)
    p.add_argument("--probe", metavar="CSV", help="probe inputs (same CSV layout as data files)")
    p.add_argument("--rescale", action="store_true", help="min-max rescale probe features")
    p.add_argument("--variance-keep", type=float, default=0.99, help="truncation threshold")

    p = sub.add_parser("report", help="render figures from a results directory")
    p.add_argument("--run", required=True, metavar="DIR", help="directory holding run outputs")
    add_out(p)
    return parser


def _resolve_out(arg: str | None, default_name: str) -> str:
    if arg:
        return arg
    return os.path.join(os.environ.get(OUT_ROOT_ENV, "runs"), default_name)


def _safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=+-]", "-", text)


def _config_stem(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0] or "run"


def _final_accuracies(reports):
    for report in reversed(reports):
        if report.nat_acc is not None:
            return report.nat_acc, report.adv_acc
    return None, None


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.overrides, args.seed)
    out = _resolve_out(args.out, _config_stem(args.config))
    os.makedirs(out, exist_ok=True)
    write_yaml(os.path.join(out, "config.yaml"), config_to_dict(cfg))
    reports, _, _ = run_experiment(cfg, out_dir=out, workers=args.workers)
    nat, adv = _final_accuracies(reports)
    print(f"run: {len(reports)} rounds, nat_acc={_fmt(nat)}, adv_acc={_fmt(adv)}, out={out}")
    return 0


def cmd_sweep(args) -> int:
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError(["--values: empty value list"])
    # Fails before any compute when the base config or the axis key is invalid.
    load_config(args.config, [*args.overrides, f"{args.axis}={values[0]}"], args.seed)
    out = _resolve_out(args.out, f"{_config_stem(args.config)}-sweep")
    os.makedirs(out, exist_ok=True)
    leaf = args.axis.rsplit(".", 1)[-1]
    rows = []
    failed = False
    for text in values:
        subdir = os.path.join(out, _safe_name(f"{leaf}={text}"))
        row = {"axis": args.axis, "value": text, "nat_acc": None, "adv_acc": None, "error": None}
        try:
            cfg = load_config(args.config, [*args.overrides, f"{args.axis}={text}"], args.seed)
            os.makedirs(subdir, exist_ok=True)
            write_yaml(os.path.join(subdir, "config.yaml"), config_to_dict(cfg))
            reports, _, _ = run_experiment(cfg, out_dir=subdir, workers=args.workers)
            row["nat_acc"], row["adv_acc"] = _final_accuracies(reports)
        except Exception as exc:  # noqa: BLE001 - record and keep sweeping
            row["error"] = f"{type(exc).__name__}: {exc}"
            failed = True
        rows.append(row)
        print(f"sweep {args.axis}={text}: " + (row["error"] or f"nat_acc={_fmt(row['nat_acc'])}, adv_acc={_fmt(row['adv_acc'])}"))
    write_table(os.path.join(out, "comparison.csv"), rows, ["axis", "value", "nat_acc", "adv_acc", "error"])
    print(f"sweep: {len(values)} runs, out={out}")
    return 1 if failed else 0


def _load_matching_checkpoints(path1: str, path2: str):
    params1, spec1 = load_checkpoint(path1)
    params2, spec2 = load_checkpoint(path2)
    if (spec1.layer_sizes, spec1.activation) != (spec2.layer_sizes, spec2.activation):
        raise ValueError(
            f"checkpoint specs differ: {spec1.layer_sizes}/{spec1.activation} vs "
            f"{spec2.layer_sizes}/{spec2.activation}"
        )
    return params1, params2, spec1


def cmd_interpolate(args) -> int:
    params1, params2, spec = _load_matching_checkpoints(args.ckpt1, args.ckpt2)
    cfg = load_config(args.config, args.overrides, args.seed)
    ex = build_experiment(cfg)
    if ex.train.inputs.shape[1] != spec.input_dim or ex.train.class_count != spec.n_classes:
        raise ValueError(
            f"checkpoint expects {spec.input_dim} features / {spec.n_classes} classes, "
            f"config data has {ex.train.inputs.shape[1]} / {ex.train.class_count}"
        )
    if args.grid < 2:
        raise ValueError("--grid must be at least 2")
    rng = None
    if ex.attack.random_start:
        rng = np.random.default_rng(derived_seed(cfg.run.seed, _TAG_EVAL))
    rows = loss_sweep(
        params1, params2, spec, ex.train, ex.attack,
        default_interpolation_grid(args.grid), rng=rng,
    )
    out = _resolve_out(args.out, "interpolate")
    os.makedirs(out, exist_ok=True)
    write_table(os.path.join(out, "interpolation.csv"), rows, ["w", "nat_loss", "adv_loss"])
    print(f"interpolate: {len(rows)} grid points, out={out}")
    return 0


def cmd_svcca(args) -> int:
    params1, params2, spec = _load_matching_checkpoints(args.ckpt1, args.ckpt2)
    if spec.n_hidden == 0:
        raise ValueError("checkpoints have no hidden layers to compare")
    if args.probe:
        probe = load_csv(args.probe, rescale=args.rescale).batch()
    elif args.config:
        probe = build_experiment(load_config(args.config, args.overrides, args.seed)).test.batch()
    else:
        raise ConfigError(["svcca needs --probe or --config for the probe inputs"])
    if probe.inputs.shape[1] != spec.input_dim:
        raise ValueError(
            f"probe has {probe.inputs.shape[1]} features, checkpoint expects {spec.input_dim}"
        )
    rows = []
    for layer in range(1, spec.n_hidden + 1):
        result = svcca_score(
            layer_activations(params1, spec, probe, layer, model_id=args.ckpt1),
            layer_activations(params2, spec, probe, layer, model_id=args.ckpt2),
            args.variance_keep,
        )
        rows.append({
            "layer": layer,
            "score": result.score,
            "retained_a": result.retained[0],
            "retained_b": result.retained[1],
        })
    out = _resolve_out(args.out, "svcca")
    os.makedirs(out, exist_ok=True)
    write_table(os.path.join(out, "svcca.csv"), rows, ["layer", "score", "retained_a", "retained_b"])
    print(f"svcca: {len(rows)} layers, out={out}")
    return 0


def cmd_report(args) -> int:
    run_dir = args.run
    if not os.path.isdir(run_dir):
        raise ValueError(f"not a directory: {run_dir}")
    out = args.out or run_dir
    written: list[str] = []
    if os.path.isfile(os.path.join(run_dir, METRICS_NAME)):
        written.extend(render_run_figures(run_dir, out))
    for name, renderer in (
        ("comparison.csv", render_comparison_figure),
        ("interpolation.csv", render_interpolation_figure),
        ("svcca.csv", render_svcca_figure),
    ):
        path = os.path.join(run_dir, name)
        if os.path.isfile(path):
            written.append(renderer(path, out))
    if not written:
        raise ValueError(
            f"{run_dir}: nothing to render (looked for {METRICS_NAME}, "
            "comparison.csv, interpolation.csv, svcca.csv)"
        )
    for path in written:
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "interpolate": cmd_interpolate,
    "svcca": cmd_svcca,
    "report": cmd_report,
}


def _fail(code: int, exc: BaseException) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        return _fail(2, exc)
    except (OSError, ValueError) as exc:
        return _fail(2, exc)
    except (NumericalError, ClientError) as exc:
        return _fail(1, exc)
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
