"""seedgan command line: train, predict, parity."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path


def cmd_train(args) -> int:
    from .training import TrainConfig, train

    config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                         lr=args.lr, seed=args.seed,
                         adjacency_enabled=not args.no_adjacency_loss,
                         loss_config=args.loss_config)
    result = train(args.manifest, config, args.out)
    print(f"best epoch {result.best_epoch} "
          f"(val objective {result.best_val_total:.6g}) -> "
          f"{result.checkpoint_path}")
    print(f"log: {result.log_path}")
    return 0


def cmd_predict(args) -> int:
    from .predict import predict_case

    out = predict_case(args.weights, args.case, args.needles, args.out)
    print(out)
    return 0


def cmd_parity(args) -> int:
    from .formats import find_engine_loss_config
    from .parity import loss_parity

    golden = sorted(Path(args.golden_dir).glob("golden_*.json"))
    if not golden:
        print(f"error: no golden_*.json files in {args.golden_dir}",
              file=sys.stderr)
        return 2
    loss_config = args.loss_config or find_engine_loss_config()
    report = loss_parity(golden, loss_config, tolerance=args.tolerance)
    print(f"fixtures: {report.count}")
    for key, dev in report.max_dev.items():
        print(f"max |dev| {key}: {dev:.3e}")
    print(f"max grad rel dev: {report.max_grad_rel_dev:.3e}")
    if report.failures:
        print(f"FAILED fixtures ({len(report.failures)}):")
        for f in report.failures:
            print(f"  {f}")
        return 1
    print("parity OK")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seedgan")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on an engine dataset manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-adjacency-loss", action="store_true")
    p.add_argument("--loss-config", default=None,
                   help="engine SPLOSS1 file (defaults to the installed engine's)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="write a probability plan for one case")
    p.add_argument("--weights", required=True)
    p.add_argument("--case", required=True)
    p.add_argument("--needles", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("parity", help="recompute golden loss fixtures")
    p.add_argument("--golden-dir", required=True)
    p.add_argument("--loss-config", default=None)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(fn=cmd_parity)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
