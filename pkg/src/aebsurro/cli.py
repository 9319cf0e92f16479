"""``aebsurro`` command-line driver.

Failures print one JSON line on stderr, ``{"error": <type>, "exit_code": <n>,
"message": <text>}``, and exit with the code of the error class: 2 config,
3 missing prerequisite, 4 data or alignment, 5 invariant failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from aebsurro import __version__, pipeline
from aebsurro.config import SEED_ENV, load_config
from aebsurro.errors import AebSurroError

COMMANDS = ("generate", "train", "ensemble", "evaluate", "bench", "run-all", "import-expert")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON (packaged defaults when omitted)")
    common.add_argument("--seed", type=int, help=f"override the config seed (beats ${SEED_ENV})")
    common.add_argument("--out", help="output directory (overrides config output_dir)")
    common.add_argument("--dataset", help="dataset file (default: <out>/dataset.jsonl)")
    common.add_argument("--jobs", type=int, help="worker threads for forest fitting")
    common.add_argument("-q", "--quiet", action="store_true", help="only print errors")

    parser = argparse.ArgumentParser(prog="aebsurro", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="sample parameters and simulate the dataset")
    sub.add_parser("train", parents=[common], help="tune and fit every expert, write prediction cubes")
    sub.add_parser("ensemble", parents=[common], help="build Hybrid 1, Hybrid 2 and the aggregated model")
    sub.add_parser("evaluate", parents=[common], help="write the report tables and figures")
    bench = sub.add_parser("bench", parents=[common], help="one-by-one prediction throughput")
    bench.add_argument("--model", action="append", dest="models",
                       help="expert or ensemble name (repeatable; default from config)")
    bench.add_argument("-n", type=int, help="number of predictions (default from config)")
    sub.add_parser("run-all", parents=[common], help="generate, train, ensemble, bench and evaluate")
    imp = sub.add_parser("import-expert", parents=[common], help="register an external prediction file")
    imp.add_argument("path", help="prediction file (JSON lines)")
    imp.add_argument("--name", help="expert name (default: the file header's expert_name)")
    return parser


def _run(args):
    cfg = load_config(args.config, seed=args.seed, out=args.out, jobs=args.jobs)
    if args.command == "generate":
        print(pipeline.cmd_generate(cfg, args.dataset))
    elif args.command == "train":
        print(" ".join(pipeline.cmd_train(cfg, args.dataset)))
    elif args.command == "ensemble":
        pipeline.cmd_ensemble(cfg, args.dataset)
        print(pipeline.Layout(cfg.output_dir).ensemble)
    elif args.command == "evaluate":
        pipeline.cmd_evaluate(cfg, args.dataset)
        print(pipeline.Layout(cfg.output_dir).report)
    elif args.command == "bench":
        for r in pipeline.cmd_bench(cfg, args.models, args.n, args.dataset):
            print(f"{r['model']}: {r['n_predictions']} predictions in {r['seconds']:.2f} s "
                  f"({r['predictions_per_second']:.1f}/s)")
    elif args.command == "run-all":
        pipeline.cmd_run_all(cfg, args.dataset)
        print(pipeline.Layout(cfg.output_dir).report)
    elif args.command == "import-expert":
        print(pipeline.cmd_import_expert(cfg, args.path, args.name, args.dataset))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        _run(args)
    except AebSurroError as exc:
        print(json.dumps({"error": type(exc).__name__, "exit_code": exc.exit_code,
                          "message": " ".join(str(exc).split())}), file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
