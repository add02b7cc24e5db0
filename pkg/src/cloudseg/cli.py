"""Command-line interface.

Heavy imports happen inside main() so that --threads can pin the BLAS
thread pools through environment variables before numpy loads; --threads 1
gives strictly deterministic runs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 partial failure
(some scenes were skipped).
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PARTIAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we reserve that
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _dims(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3 or any(p < 1 for p in parts):
        raise argparse.ArgumentTypeError("dims must be one or three positive integers")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cloudseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON config file with sections labeler/voxelizer/augment/net/train")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--threads", type=int, default=None, help="BLAS threads; 1 = strict determinism")
        p.add_argument("--out", help="output directory or file")
        p.add_argument("--format", choices=("ascii", "binary"), default="binary", help="PLY encoding")
        return p

    p = common(sub.add_parser("synth", help="generate synthetic datasets"))
    p.add_argument("--scenes", type=int, default=10)
    p.add_argument("--variants", type=int, default=4, help="number of appearance variants (1-4)")
    p.add_argument("--scale", type=float, default=1.0, help="point-count scale factor")

    p = common(sub.add_parser("bootstrap", help="label a dataset from its annotation"))
    p.add_argument("dataset_dir")
    p.add_argument("--annotation", help="annotation JSON (default <dataset>/annotation.json)")
    p.add_argument("--dims", type=_dims, default=(80, 80, 80))
    p.add_argument("--camera", default="", help="free-text camera tag recorded in the manifest")

    p = common(sub.add_parser("train", help="train the network on bootstrapped manifests"))
    p.add_argument("--manifest", action="append", default=[], help="manifest path (repeatable)")
    p.add_argument("--epochs", type=int)

    p = common(sub.add_parser("infer", help="segment one raw cloud and report stage timings"))
    p.add_argument("checkpoint")
    p.add_argument("cloud")
    p.add_argument("--annotation", help="annotation or transform JSON; omitted = identity, no crop")
    p.add_argument("--dims", type=_dims, default=(80, 80, 80))
    p.add_argument("--timing-reps", type=int, default=30)

    p = common(sub.add_parser("eval", help="score a checkpoint against held-out labeled scenes"))
    p.add_argument("checkpoint")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--dims", type=_dims, default=(80, 80, 80))
    p.add_argument("--oracle", action="store_true", help="pass truth labels through (harness check)")

    p = common(sub.add_parser("crossval", help="leave-one-dataset-out cross-validation"))
    p.add_argument("manifests", nargs="+")
    p.add_argument("--k", type=int, default=4)

    p = common(sub.add_parser("serve", help="start the annotation HTTP service"))
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-root", required=True)
    p.add_argument("--preview-workers", type=int, default=2)
    p.add_argument("--ui-dir", help="static directory with the browser UI build")

    return parser


def _apply_threads(threads: int | None) -> None:
    if threads is None:
        return
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        os.environ[var] = str(threads)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_threads(getattr(args, "threads", None))

    from . import pipeline  # deferred so the thread env vars precede numpy
    from .errors import CloudsegError

    encoding = "ascii" if args.format == "ascii" else "binary-le"
    try:
        if args.command == "synth":
            from . import synth
            out = args.out or "synth_data"
            variants = synth.default_variants()[: max(1, min(args.variants, 4))]
            made = synth.generate_datasets(out, n_scenes=args.scenes,
                                           seed=args.seed if args.seed is not None else 7,
                                           variants=variants, scale=args.scale)
            for path in made:
                print(f"dataset: {path}")
            return EXIT_OK

        if args.command == "bootstrap":
            annotation = args.annotation or os.path.join(args.dataset_dir, "annotation.json")
            out = args.out or os.path.join(args.dataset_dir, "bootstrap")
            summary = pipeline.run_bootstrap(args.dataset_dir, annotation, out,
                                             dims=args.dims, encoding=encoding, camera=args.camera)
            print(f"manifest: {summary.manifest_path}")
            print(f"labeled scenes: {summary.processed}, skipped: {len(summary.skipped)}")
            for raw, reason in summary.skipped:
                print(f"  skipped {raw}: {reason}")
            if summary.processed == 0:
                return EXIT_DATA
            return EXIT_PARTIAL if summary.skipped else EXIT_OK

        if args.command == "train":
            if not args.config:
                raise CloudsegError("train requires --config")
            overrides = {}
            if args.seed is not None:
                overrides["seed"] = args.seed
            if args.out:
                overrides["out_dir"] = args.out
            if args.manifest:
                overrides["manifests"] = tuple(args.manifest)
            if args.epochs is not None:
                overrides["epochs"] = args.epochs
            result = pipeline.run_train(pipeline.load_train_config(args.config, **overrides))
            print(f"final checkpoint: {result['final_checkpoint']}")
            print(f"best checkpoint: {result['best_checkpoint']}")
            print(f"loss log: {result['loss_log']}")
            print(f"final mean loss: {result['final_mean_loss']}")
            return EXIT_OK

        if args.command == "infer":
            result = pipeline.run_infer(args.checkpoint, args.cloud,
                                        annotation_or_transform=args.annotation,
                                        out_path=args.out, dims=args.dims,
                                        timing_reps=args.timing_reps, encoding=encoding)
            print(f"labeled cloud: {result['labeled_path']}")
            print(f"timing over {result['timing_reps']} runs:")
            for line in result["timing_report"]:
                print(f"  {line}")
            return EXIT_OK

        if args.command == "eval":
            result = pipeline.run_eval(args.checkpoint, args.manifests, args.out or "eval_out",
                                       dims=args.dims, oracle=args.oracle)
            pooled = result["aggregate"]["pooled"]
            print(f"per-scene metrics: {result['per_scene_csv']}")
            print(f"summary: {result['summary_csv']}")
            print(f"pooled: P={pooled['P']:.4f} R={pooled['R']:.4f} "
                  f"F1={pooled['F1']:.4f} IoU={pooled['IoU']:.4f}")
            return EXIT_OK

        if args.command == "crossval":
            if not args.config:
                raise CloudsegError("crossval requires --config")
            base = pipeline.load_train_config(args.config, manifests=tuple(args.manifests),
                                              **({"seed": args.seed} if args.seed is not None else {}))
            result = pipeline.run_crossval(args.manifests, args.k, base, args.out or "crossval_out")
            for row in result["folds"]:
                print(f"fold {row['fold']}: test={'+'.join(row['test'])} "
                      f"P={row['P']:.4f} R={row['R']:.4f} F1={row['F1']:.4f} IoU={row['IoU']:.4f}")
            mean = result["mean"]
            print(f"mean: P={mean['P']:.4f} R={mean['R']:.4f} F1={mean['F1']:.4f} IoU={mean['IoU']:.4f}")
            print(f"table: {result['table']}")
            return EXIT_OK

        if args.command == "serve":
            import uvicorn

            from .service import create_app
            app = create_app(args.data_root, preview_workers=args.preview_workers,
                             ui_dir=args.ui_dir)
            uvicorn.run(app, host=args.host, port=args.port)
            return EXIT_OK

    except CloudsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
