"""Command-line entry point.

Subcommands: synth, scribble, train, eval, infer, bench.  Exit codes:
0 success, 1 contract/config error, 2 I/O error.  The LFSAMBA_PRECISION
environment variable (f32|f64, default f64) selects the build precision.
"""

import argparse
import sys

from .config import RunConfig
from .data import add_scribbles, synth_dataset
from .errors import ContractError, DataError, LfsambaError, ShapeError
from .runs import bench_run, evaluate_run, infer_run, train_loop


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lfsamba",
        description="Light-field focal-stack salient object detection (desk scale)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic focal-stack dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=3, help="slices per sample")
    p.add_argument("--image-size", type=int, default=64)

    p = sub.add_parser("scribble", help="synthesize scribble annotations for a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--dataset", default=None)

    p = sub.add_parser("eval", help="evaluate a checkpoint over a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("infer", help="run inference on one sample directory")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--sample", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-features", action="store_true")
    p.add_argument("--config", default=None)

    p = sub.add_parser("bench", help="fusion-cost report (params + wall time)")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    return parser


def _dispatch(args) -> None:
    if args.command == "synth":
        records = synth_dataset(args.out, n=args.n, seed=args.seed,
                                size=args.image_size, k_slices=args.k)
        print(f"wrote {len(records)} samples to {args.out}")
    elif args.command == "scribble":
        count = add_scribbles(args.dataset, seed=args.seed)
        print(f"scribbled {count} samples in {args.dataset}")
    elif args.command == "train":
        cfg = RunConfig.from_file(args.config)
        summary = train_loop(cfg, dataset=args.dataset, out=args.out)
        print(f"final loss {summary['final_loss']:.6f} "
              f"checkpoint {summary['checkpoint']}")
    elif args.command == "eval":
        cfg = RunConfig.from_file(args.config)
        evaluate_run(cfg, args.ckpt, dataset=args.dataset, out=args.out)
    elif args.command == "infer":
        cfg = RunConfig.from_file(args.config) if args.config else None
        path = infer_run(args.ckpt, args.sample, args.out,
                         dump_features=args.dump_features, cfg=cfg)
        print(f"wrote {path}")
    elif args.command == "bench":
        cfg = RunConfig.from_file(args.config)
        bench_run(cfg, out=args.out)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ContractError, ShapeError, LfsambaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
