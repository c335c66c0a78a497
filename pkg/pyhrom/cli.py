"""
Command-line front end::

    pyhrom generate --config dataset.json --out ks512.hrom
    pyhrom run --config experiment.json --out results/ --workers 4 --seed-offset 0
    pyhrom report results/
    pyhrom inspect results/checkpoints/LearnableWeightedHybrid-r40-s0.hrom

Exit status: 0 on success, 2 for an invalid configuration, 1 for a failure while running.
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from pyhrom import __version__
from pyhrom.container import read_manifest
from pyhrom.exceptions import HromConfigError, HromError
from pyhrom.experiment import DatasetSpec, ExperimentConfig, run_experiment
from pyhrom.results import report_directory

WORKERS_ENV = 'HYBRID_ROM_WORKERS'

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2


def _workers(value: Optional[int]) -> int:
    if value is not None:
        workers = value
    else:
        try:
            workers = int(os.environ.get(WORKERS_ENV, '1'))
        except ValueError:
            raise HromConfigError(f"{WORKERS_ENV} must be an integer", field=WORKERS_ENV)
    if workers < 1:
        raise HromConfigError("the worker count must be at least 1", field='workers')
    return workers


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise HromConfigError(f"{path}: not valid JSON ({e})")


def cmd_generate(args) -> int:
    document = _read_json(args.config)
    spec = DatasetSpec.from_dict(document.get('dataset', document) if isinstance(document, dict) else document)
    data = spec.build()
    data.save(args.out)
    print(f"{args.out}: M={data.M} N={data.N} Q={data.Q} seed={data.meta.get('seed', '-')} "
          f"train={data.train_idx.size} test={data.test_idx.size}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = ExperimentConfig.from_file(args.config).with_seed_offset(args.seed_offset)
    out = args.out or config.out
    if out is None:
        raise HromConfigError("no output directory: pass --out or set 'out'", field='out')
    tables = run_experiment(config, out, _workers(args.workers), __version__)
    for table in tables:
        print(f"{os.path.join(out, table.kind + '.csv')}: {len(table.rows)} rows")
    return EXIT_OK


def cmd_report(args) -> int:
    summaries, skipped = report_directory(args.results, args.out)
    for name, frame in summaries.items():
        print(f"{name}: {len(frame)} rows")
    for path in skipped:
        print(f"skipped {path}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    with open(args.path, 'rb') as f:
        manifest = read_manifest(f.read())
    print(f"kind: {manifest.kind}")
    print(f"version: {manifest.version}")
    for key in sorted(manifest.meta):
        print(f"meta.{key}: {manifest.meta[key]}")
    for name, shape, tag in manifest.tensors:
        print(f"tensor {name}: shape={tuple(shape)} group={tag}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='pyhrom', description="Hybrid reduced-order modeling experiments.")
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('-v', '--verbose', action='count', default=0, help="-v for info, -vv for debug output")
    commands = parser.add_subparsers(dest='command', required=True)

    generate = commands.add_parser('generate', help="generate a snapshot dataset file")
    generate.add_argument('--config', required=True, metavar='PATH', help="dataset spec or experiment config")
    generate.add_argument('--out', required=True, metavar='PATH', help="dataset file to write")
    generate.set_defaults(handler=cmd_generate)

    run = commands.add_parser('run', help="run an experiment")
    run.add_argument('--config', required=True, metavar='PATH')
    run.add_argument('--out', metavar='DIR')
    run.add_argument('--workers', type=int, metavar='N', help=f"worker processes (default: ${WORKERS_ENV} or 1)")
    run.add_argument('--seed-offset', type=int, default=0, metavar='K', help="added to every seed")
    run.set_defaults(handler=cmd_run)

    report = commands.add_parser('report', help="aggregate the result tables of a directory")
    report.add_argument('results', metavar='DIR')
    report.add_argument('--out', metavar='DIR', help="summary directory (default: DIR/summary)")
    report.set_defaults(handler=cmd_report)

    inspect = commands.add_parser('inspect', help="print the header of a checkpoint or dataset file")
    inspect.add_argument('path', metavar='PATH')
    inspect.set_defaults(handler=cmd_inspect)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    try:
        return args.handler(args)
    except HromConfigError as e:
        where = f" [{e.field}]" if e.field else ""
        print(f"invalid configuration{where}: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (HromError, OSError) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE
