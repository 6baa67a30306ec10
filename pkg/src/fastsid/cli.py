"""``sid`` command line: identify, simulate, profile, bench, workflow."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench
from .dagflow import build_sid_workflow, emit_template, parse_template, validate_dag
from .errors import SidError
from .executor import SID_BODIES, identify_workflow, make_cluster, run_workflow
from .matstore import BlobKey, BlobStore
from .n4sid import SidConfig, identify
from .plantsim import ball_beam, gen_excitation, read_csv, simulate, write_csv


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_identify(args):
    rec = read_csv(args.input)
    cfg = SidConfig(args.N, args.j, order=args.order, order_tol=args.order_tol,
                    svd_block_width=args.block_width)
    if args.mpt:
        store = BlobStore()
        result, report = identify_workflow(rec, cfg, args.mpt, nodes=args.nodes, cpus=args.cpus,
                                           latency_ms=args.latency_ms, store=store)
        if args.debug_dump:
            store.dump(args.debug_dump, report.namespace)
    else:
        result = identify(rec, cfg)
    _emit(result.to_json(indent=2) + "\n", args.out)


def cmd_simulate(args):
    L = 2 * args.N + args.j - 1 if args.length is None else args.length
    rec = simulate(ball_beam(), gen_excitation(L, 1, args.seed))
    write_csv(rec, args.out)


def cmd_profile(args):
    cfg = bench.ExperimentConfig(scale_params=[(args.N, args.j)], repeats=args.repeats, seed=args.seed)
    print(bench.format_stage_table(bench.profile_stages(cfg)))


def cmd_bench(args):
    cfg = bench.ExperimentConfig.load(args.config) if args.config else bench.ExperimentConfig()
    report = bench.run_comparison(cfg)
    print(bench.format_comparison(report))
    if args.out:
        for kind, path in bench.write_report(report, args.out).items():
            print(f"wrote {kind}: {path}")


def cmd_workflow_emit(args):
    cfg = SidConfig(args.N, args.j) if args.N and args.j else None
    _emit(emit_template(build_sid_workflow(args.mpt, cfg, cpu_svd=args.cpu_svd, cpu_merge=args.cpu_svd)),
          args.out)


def cmd_workflow_validate(args):
    w = parse_template(Path(args.file).read_text())
    order = validate_dag(w)
    print(json.dumps({"valid": True, "tasks": w.task_count(), "tasks_with_ini": w.task_count(True),
                      "mpt": w.mpt, "order": order}, indent=2))


def cmd_workflow_run(args):
    w = parse_template(Path(args.template).read_text())
    params = dict(w.params)
    for name in ("N", "j"):
        if getattr(args, name) is not None:
            params[name] = getattr(args, name)
    if "N" not in params or "j" not in params:
        raise SidError("template has no N/j parameters; pass --N and --j")
    w = type(w)(w.tasks, params)
    N, j = params["N"], params["j"]
    rec = read_csv(args.input) if args.input else simulate(ball_beam(), gen_excitation(2 * N + j - 1, 1, args.seed))
    store = BlobStore()
    ns = "run"
    store.put(BlobKey(ns, "input.u"), rec.u)
    store.put(BlobKey(ns, "input.y"), rec.y)
    report = run_workflow(w, make_cluster(args.nodes, args.cpus), store, SID_BODIES, ns, args.latency_ms)
    if args.debug_dump:
        store.dump(args.debug_dump, ns)
    _emit(json.dumps(report.to_dict(), indent=2) + "\n", args.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sid", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("identify", help="identify a state-space model from a CSV record")
    q.add_argument("--input", required=True)
    q.add_argument("--N", type=int, required=True)
    q.add_argument("--j", type=int, required=True)
    q.add_argument("--order", type=int)
    q.add_argument("--order-tol", type=float, default=1e-6)
    q.add_argument("--block-width", type=int, help="column block width for the sequential SVD")
    q.add_argument("--mpt", type=int, help="run as a workflow with this SVD parallelism")
    q.add_argument("--nodes", type=int, default=4)
    q.add_argument("--cpus", type=float, default=16)
    q.add_argument("--latency-ms", type=float, default=0.0)
    q.add_argument("--debug-dump", help="directory for intermediate .sidm blobs (workflow mode)")
    q.add_argument("--out")
    q.set_defaults(func=cmd_identify)

    q = sub.add_parser("simulate", help="write a ball-beam excitation/response CSV")
    q.add_argument("--N", type=int, default=10)
    q.add_argument("--j", type=int, default=1000)
    q.add_argument("--length", type=int)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("profile", help="per-stage timing of sequential identification")
    q.add_argument("--N", type=int, required=True)
    q.add_argument("--j", type=int, required=True)
    q.add_argument("--repeats", type=int, default=20)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=cmd_profile)

    q = sub.add_parser("bench", help="baseline vs workflow comparison")
    q.add_argument("--config")
    q.add_argument("--out")
    q.set_defaults(func=cmd_bench)

    wf = sub.add_parser("workflow", help="emit, validate or run workflow templates")
    wsub = wf.add_subparsers(dest="action", required=True)
    q = wsub.add_parser("emit")
    q.add_argument("--mpt", type=int, required=True)
    q.add_argument("--N", type=int)
    q.add_argument("--j", type=int)
    q.add_argument("--cpu-svd", type=float, default=1.0)
    q.add_argument("--out")
    q.set_defaults(func=cmd_workflow_emit)
    q = wsub.add_parser("validate")
    q.add_argument("file")
    q.set_defaults(func=cmd_workflow_validate)
    q = wsub.add_parser("run")
    q.add_argument("template")
    q.add_argument("--nodes", type=int, default=4)
    q.add_argument("--cpus", type=float, default=16)
    q.add_argument("--latency-ms", type=float, default=0.0)
    q.add_argument("--input")
    q.add_argument("--N", type=int)
    q.add_argument("--j", type=int)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--debug-dump")
    q.add_argument("--out")
    q.set_defaults(func=cmd_workflow_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (SidError, OSError, ValueError) as exc:
        print(f"sid: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
