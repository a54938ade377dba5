"""seedplan command line.

Subcommands: phantom, plan, evaluate, report, ttest, render, export-golden,
config init. Exit codes: 0 success, 2 validation error, 3 runtime/limit
error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import sys
from pathlib import Path

import numpy as np

from .annealing import (
    CostWeights,
    SAConfig,
    cost as plan_cost,
    default_cost_weights,
    default_sa_config,
    write_trace,
)
from .core import (
    CalibrationError,
    InitError,
    TemplateGrid,
    UndefinedMetricError,
    ValidationError,
)
from .dosimetry import (
    PRESCRIBED_GY,
    default_source_model,
    load_source_model,
    plan_metrics,
)
from .fileio import read_case, read_plan, write_golden, write_plan
from .losses import (
    adj_seed_loss,
    adversarial_loss,
    l1_loss,
    load_loss_config,
    total_objective,
)
from .dosimetry import MetricsRow
from .phantom import build_dataset
from .pipeline import MODES, run_pipeline
from .stats import format_report, paired_t_test, read_metrics_csv, write_metrics_csv


def _load_config(path):
    """Returns (sa, cost_weights, model, prescribed, strength)."""
    if path is None:
        return default_sa_config(), default_cost_weights(), \
            default_source_model(), PRESCRIBED_GY, 0.6
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise ValidationError(f"{path}: unreadable config ({exc})") from None
    if doc.get("magic") != "SPCONFIG1":
        raise ValidationError(f"{path}: bad magic, expected SPCONFIG1")

    def resolve(value, loader, default):
        if value is None:
            return default()
        if isinstance(value, str):
            return loader(path.parent / value)
        return value

    from .annealing import load_cost_weights, load_sa_config

    sa = resolve(doc.get("sa"), load_sa_config, default_sa_config)
    if isinstance(sa, dict):
        sa = SAConfig.from_dict(sa)
    cw = resolve(doc.get("cost_weights"), load_cost_weights, default_cost_weights)
    if isinstance(cw, dict):
        cw = CostWeights.from_dict(cw)
    model = resolve(doc.get("source_model"), load_source_model, default_source_model)
    prescribed = float(doc.get("prescribed_Gy", PRESCRIBED_GY))
    strength = float(doc.get("source_strength_U", 0.6))
    return sa, cw, model, prescribed, strength


def _append_metrics(path, row):
    path = Path(path)
    if path.exists():
        lines = path.read_text().rstrip("\n").splitlines()
        if not lines or lines[0] != MetricsRow.CSV_HEADER:
            raise ValidationError(f"{path}: existing file is not a metrics CSV")
        lines.append(row.csv_row())
        path.write_text("\n".join(lines) + "\n")
    else:
        write_metrics_csv(path, [row])


def cmd_phantom(args, ctx):
    sa, cw, model, prescribed, strength = ctx
    fractions = tuple(float(v) for v in args.splits.split(","))
    lo, hi = (float(v) for v in args.volumes.split(","))
    manifest = build_dataset(args.cases, fractions, args.out,
                             master_seed=args.seed if args.seed is not None else 0,
                             sa_config=sa, cost_weights=cw, model=model,
                             volume_range=(lo, hi), source_strength=strength)
    print(manifest)
    return 0


def _run_chain(payload):
    (case, mode, model, needles, prob, seeds, sa, cw, use_sa, run_uni,
     strength, prescribed, zero_time) = payload
    result = run_pipeline(case, mode, model, needles=needles, prob=prob,
                          seeds=seeds, sa_config=sa, cost_weights=cw,
                          use_sa=use_sa, run_uniformize=run_uni,
                          source_strength=strength, prescribed=prescribed,
                          zero_time=zero_time)
    value = plan_cost(result.plan, case, model, cw, prescribed)
    return value, result


def cmd_plan(args, ctx):
    sa, cw, model, prescribed, strength = ctx
    case = read_case(args.case)
    needles = prob = seeds = None
    if args.needles:
        needles = read_plan(args.needles).needles
        if needles is None:
            raise ValidationError(f"{args.needles}: no needle list present")
    if args.plan_file:
        payload = read_plan(args.plan_file)
        prob, seeds = payload.prob, payload.seeds
        if needles is None:
            needles = payload.needles
    if args.seed is not None:
        sa = SAConfig.from_dict({**sa.to_dict(), "rng_seed": args.seed})

    use_sa = not args.no_sa and args.mode.endswith("+sa")
    jobs = max(1, args.jobs)
    chains = []
    for k in range(jobs if use_sa else 1):
        sa_k = SAConfig.from_dict({**sa.to_dict(), "rng_seed": sa.rng_seed + k})
        chains.append((case, args.mode, model, needles, prob, seeds, sa_k, cw,
                       use_sa, not args.no_uniformize, strength, prescribed,
                       args.zero_time))
    if len(chains) == 1:
        outcomes = [_run_chain(chains[0])]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_chain, chains))
    best_value, best = min(outcomes, key=lambda vr: vr[0])

    if best.truncated:
        print("warning: wall-time limit hit; best-so-far plan returned",
              file=sys.stderr)
    if args.out_plan:
        write_plan(args.out_plan, seeds=best.plan, needles=best.needles,
                   case_id=case.case_id)
    if args.trace_out and best.trace is not None:
        write_trace(args.trace_out, best.trace)
    if args.metrics_out:
        _append_metrics(args.metrics_out, best.metrics)
    print(f"mode={args.mode} cost={best_value:.6g} "
          f"ptv_v100={best.metrics.ptv_v100:.2f} seeds={best.metrics.seeds} "
          f"needles={best.metrics.needles} time_s={best.metrics.plan_time:.3f}")
    return 3 if best.truncated else 0


def cmd_evaluate(args, ctx):
    _, _, model, prescribed, _ = ctx
    case = read_case(args.case)
    payload = read_plan(args.plan)
    if payload.seeds is None:
        raise ValidationError(f"{args.plan}: no binary seed plan to evaluate")
    row = plan_metrics(payload.seeds, case, model, prescribed)
    if args.metrics_out:
        _append_metrics(args.metrics_out, row)
    print(row.csv_row())
    return 0


def cmd_report(args, ctx):
    labelled = [(Path(f).stem, read_metrics_csv(f)) for f in args.files]
    csv_text, aligned = format_report(labelled)
    if args.out:
        Path(args.out).write_text(csv_text)
    print(aligned, end="")
    return 0


def cmd_ttest(args, ctx):
    rows_a = read_metrics_csv(args.a)
    rows_b = read_metrics_csv(args.b)
    from .stats import _column_values

    t, p = paired_t_test(_column_values(rows_a, args.column),
                         _column_values(rows_b, args.column))
    p_text = "<1e-12" if p < 1e-12 else f"{p:.6g}"
    print(f"column={args.column} t={t:.6g} p={p_text}")
    return 0


def cmd_render(args, ctx):
    _, _, model, prescribed, _ = ctx
    from .render import render_plan

    case = read_case(args.case)
    payload = read_plan(args.plan)
    if payload.seeds is None:
        raise ValidationError(f"{args.plan}: no binary seed plan to render")
    out = render_plan(payload.seeds, case, args.plane, args.out, model, prescribed)
    print(out)
    return 0


def cmd_export_golden(args, ctx):
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    kernel, weights = load_loss_config()
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    grid = TemplateGrid()
    shape = (grid.n_eff_rows, grid.cols, grid.num_planes)
    for k in range(args.count):
        pred = rng.random(shape)
        target = (rng.random(shape) < 0.08).astype(np.float64)
        d_real = float(rng.uniform(0.05, 0.95))
        d_fake = float(rng.uniform(0.05, 0.95))
        adj, grad = adj_seed_loss(pred, weights, kernel)
        l1, _ = l1_loss(pred, target)
        adv = adversarial_loss(d_real, d_fake)
        expected = {
            "adj": adj, "l1": l1, "adv": adv,
            "total": total_objective(adv, l1, adj, weights),
        }
        write_golden(out_dir / f"golden_{k:04d}.json", pred, target, weights,
                     d_real, d_fake, expected, expected_grad_adj=grad)
    print(out_dir)
    return 0


def cmd_config_init(args, ctx):
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sa_config.json").write_text(
        json.dumps(default_sa_config().to_dict(), indent=1) + "\n")
    (out_dir / "cost_weights.json").write_text(
        json.dumps(default_cost_weights().to_dict(), indent=1) + "\n")
    from importlib import resources

    src = (resources.files("seedplan.data") / "i125_default.json").read_text()
    (out_dir / "source_model.json").write_text(src)
    config = {
        "magic": "SPCONFIG1",
        "sa": "sa_config.json",
        "cost_weights": "cost_weights.json",
        "source_model": "source_model.json",
        "prescribed_Gy": PRESCRIBED_GY,
        "source_strength_U": 0.6,
    }
    (out_dir / "config.json").write_text(json.dumps(config, indent=1) + "\n")
    print(out_dir / "config.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seedplan")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the configured rng seed")
    parser.add_argument("--config", default=None, help="SPCONFIG1 file")
    parser.add_argument("--jobs", type=int, default=1,
                        help="annealing chains run in parallel (min cost wins)")
    parser.add_argument("--no-uniformize", action="store_true")
    parser.add_argument("--no-sa", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic dataset")
    p.add_argument("--cases", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--splits", default="0.7,0.1,0.2")
    p.add_argument("--volumes", default="20,70",
                   help="uniform CTV volume range in cc, e.g. 35,50")
    p.set_defaults(fn=cmd_phantom)

    p = sub.add_parser("plan", help="run a planning pipeline on one case")
    p.add_argument("--case", required=True)
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--needles")
    p.add_argument("--plan-file")
    p.add_argument("--out-plan")
    p.add_argument("--trace-out")
    p.add_argument("--metrics-out")
    p.add_argument("--zero-time", action="store_true",
                   help="write plan_time_s as 0 for reproducible CSVs")
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("evaluate", help="metrics for an existing plan")
    p.add_argument("--case", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--metrics-out")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("report", help="mean +- std summary of metrics CSVs")
    p.add_argument("files", nargs="+")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("ttest", help="paired t-test between two metrics CSVs")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--column", default="PTV_V100")
    p.set_defaults(fn=cmd_ttest)

    p = sub.add_parser("render", help="SVG render of one axial plane")
    p.add_argument("--case", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--plane", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("export-golden", help="write loss-parity fixtures")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=100)
    p.set_defaults(fn=cmd_export_golden)

    p = sub.add_parser("config", help="configuration files")
    config_sub = p.add_subparsers(dest="config_command", required=True)
    pi = config_sub.add_parser("init", help="emit default config documents")
    pi.add_argument("--out", required=True)
    pi.set_defaults(fn=cmd_config_init)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ctx = _load_config(args.config)
        return args.fn(args, ctx)
    except (ValidationError, UndefinedMetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CalibrationError, InitError, MemoryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
