"""
Command-line entry point: configuration, run orchestration and export
"""

import argparse
import json
import logging
import os
import sys

from artifacts import (
    RunArtifacts,
    RunLogWriter,
    load_checkpoint,
    load_config,
    save_checkpoint,
    save_config_snapshot,
    write_dot_bundle,
    write_genotype,
)
from assembly import TensorShape, count_parameters, flatten, infer_shapes, to_dot
from config import DEFAULT_OUT_DIR, FITNESS_BACKENDS
from document_generator import create_run_report
from exceptions import DegenerateArchitecture, InvalidGenotype, ParseError, SearchError
from fitness import make_evaluator
from genotype import decode, from_document, validate
from search import Controller, SearchConfig

logger = logging.getLogger(__name__)

DEFAULT_INSPECT_SIZE = 8
EXIT_INTERRUPTED = 130


def _add_search_flags(parser):
    parser.add_argument("--config", help="Configuration document (JSON)")
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument("--workers", type=int, help="Number of evaluation workers")
    parser.add_argument("--steps", type=int, help="Total evolution steps")
    parser.add_argument("--population", type=int, help="Initial population size")
    parser.add_argument("--fitness", choices=FITNESS_BACKENDS, help="Fitness back-end")
    parser.add_argument("--param-threshold", type=int, help="Largest permitted cell parameter count")


def build_parser():
    parser = argparse.ArgumentParser(prog="hiernas", description="Hierarchical architecture search")
    commands = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("search-evolve", "Run asynchronous evolution"),
                            ("search-random", "Run random search")):
        sub = commands.add_parser(name, help=help_text)
        _add_search_flags(sub)
        sub.add_argument("--out", default=DEFAULT_OUT_DIR, help="Run directory")
        sub.add_argument("--stop-after", type=int, help="Stop and checkpoint after this many steps")

    sub = commands.add_parser("eval", help="Score a genotype file")
    sub.add_argument("genotype", help="Genotype document")
    _add_search_flags(sub)

    sub = commands.add_parser("export-dot", help="Render a genotype file as DOT")
    sub.add_argument("genotype", help="Genotype document")
    sub.add_argument("--out", help="Directory for one DOT file per graph (default: print to stdout)")
    sub.add_argument("--flat", action="store_true", help="Render the flattened architecture instead")

    sub = commands.add_parser("inspect", help="Validate a genotype file and report shapes and parameters")
    sub.add_argument("genotype", help="Genotype document")
    sub.add_argument("--size", type=int, default=DEFAULT_INSPECT_SIZE, help="Input height and width")

    sub = commands.add_parser("resume", help="Continue a checkpointed run")
    sub.add_argument("checkpoint", help="Checkpoint file or run directory")
    sub.add_argument("--config", help="Configuration the checkpoint must be compatible with")
    sub.add_argument("--stop-after", type=int, help="Stop and checkpoint after this many steps")
    return parser


def _overrides(args):
    return {
        "seed": args.seed,
        "workers": args.workers,
        "total_steps": args.steps,
        "population_size": args.population,
        "fitness_backend": args.fitness,
        "param_threshold": args.param_threshold,
    }


def resolve_config(args):
    data = load_config(args.config) if args.config else {}
    return SearchConfig.from_dict(data, overrides=_overrides(args))


def _read_genotype(path):
    with open(path, "r", encoding="utf-8") as f:
        return decode(f.read())


def _emit(payload):
    print(json.dumps(payload, indent=2))


def _emit_error(e, message=None):
    sys.stderr.write(json.dumps({"error": type(e).__name__, "message": message or str(e)}) + "\n")


def _finish_run(controller, artifacts, stop_after):
    try:
        best = controller.run(stop_after)
    finally:
        save_checkpoint(controller.checkpoint_state(), artifacts.checkpoint)
    write_genotype(best.genotype, artifacts.best_genotype)
    write_dot_bundle(best.genotype, artifacts.dot_dir)
    records = controller.table.snapshot()
    if create_run_report(artifacts.report, controller.cfg, best, records) is None:
        logger.warning("Run report was not written")
    _emit({
        "best_genotype_id": best.genotype_id,
        "fitness": best.fitness,
        "param_count": best.param_count,
        "steps": len(records),
        "total_steps": controller.total,
        "complete": controller.complete,
        "out": artifacts.out_dir,
    })
    return 0


def cmd_search(args):
    cfg = resolve_config(args)
    artifacts = RunArtifacts(args.out).ensure()
    save_config_snapshot(cfg, artifacts.config)
    evaluator = make_evaluator(cfg)
    mode = "evolve" if args.command == "search-evolve" else "random"
    with RunLogWriter(artifacts.run_log) as writer:
        controller = Controller(cfg, evaluator, mode=mode, on_record=writer)
        return _finish_run(controller, artifacts, args.stop_after)


def cmd_resume(args):
    path = args.checkpoint
    if os.path.isdir(path):
        path = RunArtifacts(path).checkpoint
    state = load_checkpoint(path)
    expected = SearchConfig.from_dict(load_config(args.config)) if args.config else None
    artifacts = RunArtifacts(os.path.dirname(os.path.abspath(path))).ensure()

    # Build the evaluator from the saved configuration, not from --config
    saved_run = Controller.from_checkpoint(state, evaluator=None, cfg=expected)
    evaluator = make_evaluator(saved_run.cfg)
    if saved_run.complete:
        logger.info("Checkpointed run is already complete")
    with RunLogWriter(artifacts.run_log, records=saved_run.table.snapshot()) as writer:
        controller = Controller.from_checkpoint(state, evaluator, cfg=expected, on_record=writer)
        return _finish_run(controller, artifacts, args.stop_after)


def cmd_eval(args):
    cfg = resolve_config(args)
    g = _read_genotype(args.genotype)
    evaluation = make_evaluator(cfg).evaluate(g)
    _emit({
        "genotype_id": g.id,
        "fitness": evaluation.fitness,
        "param_count": evaluation.param_count,
        "runs": evaluation.runs,
    })
    return 0


def cmd_export_dot(args):
    g = _read_genotype(args.genotype)
    target = flatten(g) if args.flat else g
    if args.out:
        _emit({"files": write_dot_bundle(target, args.out)})
    else:
        sys.stdout.write(to_dot(target) + "\n")
    return 0


def inspect_genotype(g, size=DEFAULT_INSPECT_SIZE):
    """Validation, motif sizes, flattened sizes, parameters and shapes of a genotype"""
    report = validate(g)
    result = {
        "genotype_id": g.id,
        "valid": report.ok,
        "violations": [str(v) for v in report.violations],
        "motifs": [
            {"level": level, "motif": m, "nodes": motif.node_count, "edges": len(motif.edges)}
            for level, row in enumerate(g.motifs, start=2)
            for m, motif in enumerate(row, start=1)
        ],
    }
    if not report.ok:
        return result
    c = g.spec.channels
    try:
        arch = flatten(g)
    except DegenerateArchitecture as e:
        result.update({"degenerate": True, "message": str(e)})
        return result
    input_shape = TensorShape(1, c, size, size)
    shapes = infer_shapes(arch, input_shape, c)
    result.update({
        "degenerate": False,
        "flat": {"nodes": len(arch.nodes), "edges": len(arch.edges), "depth": arch.depth()},
        "parameters": count_parameters(arch, input_shape, c),
        "shapes": {str(node_id): list(shape.as_tuple()) for node_id, shape in shapes.items()},
    })
    return result


def cmd_inspect(args):
    with open(args.genotype, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"genotype document is not valid JSON: {str(e)}") from e
    try:
        g = from_document(data)
    except InvalidGenotype as e:
        _emit({"valid": False, "violations": [str(v) for v in e.report.violations]})
        raise
    _emit(inspect_genotype(g, args.size))
    return 0


COMMANDS = {
    "search-evolve": cmd_search,
    "search-random": cmd_search,
    "resume": cmd_resume,
    "eval": cmd_eval,
    "export-dot": cmd_export_dot,
    "inspect": cmd_inspect,
}


def main(argv=None):
    """
    Run one command.

    Returns:
        int: 0 on success, 2 on configuration, parse, validation or I/O errors,
        130 when interrupted (the run directory keeps a resumable checkpoint)
    """
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (SearchError, OSError) as e:
        logger.debug("Command failed", exc_info=True)
        _emit_error(e)
        return 2
    except KeyboardInterrupt as e:
        logger.warning("Interrupted; continue the run with the resume command")
        _emit_error(e, "interrupted")
        return EXIT_INTERRUPTED
