"""Command-line front end.

Every subcommand writes rows as CSV (preceded by a ``# sparsecomm/<command> schema=1``
comment line) or, when ``--out`` ends in ``.json``, as a JSON document with the same
fields. Exit codes: 0 success, 1 an invariant check failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import statistics
import sys
import time

import numpy as np

from . import costmodel
from .core import ConfigurationError, Density, LinkParams, Topology, k_from_density
from .datacache import DataCache, LevelTiming, LocalFileCache, SyntheticStore, identity_preprocess, run_epochs
from .hitopk import ALGORITHMS, AggregationConfig, aggregate
from .pto import LarsParams
from .simnet import WorkerGroup
from .topk import MSTopKParams, brackets_cut, exact_topk, mstopk
from .trainer import LeastSquares, linear_warmup, train

SCHEMA_VERSION = 1
SEED_ENV = "SPARSECOMM_SEED"
#: Above this many simulated elements bench-comm reports the model only.
MAX_SIMULATED_ELEMENTS = 50_000_000


class InvariantFailure(RuntimeError):
    pass


def emit(command: str, rows: list[dict], out: str | None) -> None:
    if out and out.endswith(".json"):
        doc = {"schema": SCHEMA_VERSION, "command": command, "rows": rows}
        text = json.dumps(doc, indent=2) + "\n"
    else:
        buf = io.StringIO()
        buf.write(f"# sparsecomm/{command} schema={SCHEMA_VERSION}\n")
        if rows:
            writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        text = buf.getvalue()
    if out and out != "-":
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _integer(text: str) -> int:
    """Parse ``1000`` as well as integral scientific notation such as ``25e6``."""
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not value.is_integer():
            raise argparse.ArgumentTypeError(f"expected an integer, got {text}") from None
        return int(value)


def positive_int(text: str) -> int:
    value = _integer(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def non_negative_int(text: str) -> int:
    value = _integer(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def non_negative_float(text: str) -> float:
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return value


def density_arg(text: str) -> float:
    try:
        return Density(float(text)).rho
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "0"))


def _add_link_flags(p: argparse.ArgumentParser) -> None:
    d = LinkParams.public_cloud()
    p.add_argument("--alpha-intra", type=non_negative_float, default=d.alpha_intra, help="seconds")
    p.add_argument("--beta-intra", type=non_negative_float, default=d.beta_intra, help="seconds per byte")
    p.add_argument("--alpha-inter", type=non_negative_float, default=d.alpha_inter, help="seconds")
    p.add_argument("--beta-inter", type=non_negative_float, default=d.beta_inter, help="seconds per byte")
    p.add_argument("--bytes", type=int, choices=(2, 4), default=4, help="bytes per gradient value")
    p.add_argument(
        "--select-ns",
        type=non_negative_float,
        default=costmodel.DEFAULT_SELECT_SECONDS_PER_ELEMENT * 1e9,
        help="modeled top-k selection cost per element, nanoseconds",
    )


def _link(args) -> LinkParams:
    return LinkParams(args.alpha_intra, args.beta_intra, args.alpha_inter, args.beta_inter, args.bytes)


def _timings(values: list[float], warmup: int) -> tuple[float, float]:
    measured = values[warmup:]
    return statistics.fmean(measured), (statistics.stdev(measured) if len(measured) > 1 else 0.0)


def cmd_bench_topk(args) -> int:
    x = np.random.default_rng(args.seed).standard_normal(args.d)
    k = k_from_density(args.d, args.density)
    params = MSTopKParams(args.trials, args.seed)
    exact_idx = exact_topk(x, k).indices
    rows = []

    times = []
    for _ in range(args.warmup + args.repeats):
        t0 = time.perf_counter()
        chunk = exact_topk(x, k)
        times.append(time.perf_counter() - t0)
        if len(chunk) != k:
            raise InvariantFailure(f"exact_topk returned {len(chunk)} != {k} elements")
    mean, std = _timings(times, args.warmup)
    rows.append(dict(selector="exact", d=args.d, k=k, trials="", warmup=args.warmup, repeats=args.repeats,
                     mean_s=mean, std_s=std, recall=1.0, same_index_set=True, thres1="", thres2=""))

    times = []
    for _ in range(args.warmup + args.repeats):
        t0 = time.perf_counter()
        chunk, state = mstopk(x, k, params, return_state=True)
        times.append(time.perf_counter() - t0)
        if len(chunk) != k:
            raise InvariantFailure(f"mstopk returned {len(chunk)} != {k} elements")
        if not brackets_cut(x, k, state):
            raise InvariantFailure(f"threshold bracket violated: {state}")
    mean, std = _timings(times, args.warmup)
    overlap = np.intersect1d(chunk.indices, exact_idx).size
    rows.append(dict(selector="mstopk", d=args.d, k=k, trials=args.trials, warmup=args.warmup,
                     repeats=args.repeats, mean_s=mean, std_s=std, recall=overlap / k,
                     same_index_set=overlap == k, thres1=state.thres1, thres2=state.thres2))
    emit("bench-topk", rows, args.out)
    return 0


def _checksum(vec: np.ndarray) -> str:
    return f"{float(np.sum(vec)):.10g}"


def cmd_bench_comm(args) -> int:
    m, n, d = args.m, args.n, args.d
    if d < m * n:
        raise ConfigurationError(f"--d {d} is smaller than the worker count {m * n}")
    link = _link(args)
    topo = Topology(m, n, link)
    select = args.select_ns * 1e-9
    algos = ALGORITHMS if args.algo == "all" else (AggregationConfig(algorithm=args.algo).algorithm,)
    simulate = not args.model_only and m * n * d <= MAX_SIMULATED_ELEMENTS
    if not simulate and not args.model_only:
        print(f"note: {m * n * d} elements exceed the simulation budget; reporting the model only",
              file=sys.stderr)

    group = None
    if simulate:
        vectors = [np.random.default_rng([args.seed, w]).standard_normal(d) for w in topo.workers()]
        group = WorkerGroup(topo, vectors)

    rows = []
    for algo in algos:
        config = AggregationConfig(
            density=Density(args.density), mstopk_params=MSTopKParams(args.trials, args.seed),
            algorithm=algo, select_seconds_per_element=select,
        )
        bd = costmodel.hitopk_cost(m, n, d, args.density, link, select)
        modeled = {
            "hitopk": bd.total,
            "naive_ag": costmodel.naiveag_cost(m * n, d, args.density, link),
            "dense_ring": costmodel.ring_allreduce_cost(m * n, d, link),
            "dense_2dtorus": sum(costmodel.torus2d_cost(m, n, d, link)),
        }[algo]
        comm = bd.communication if algo == "hitopk" else modeled
        row = dict(algo=algo, m=m, n=n, P=m * n, d=d, density=args.density, bytes=args.bytes,
                   simulated=simulate, wall_mean_s="", wall_std_s="", modeled_s=modeled,
                   modeled_comm_s=comm, t1="", t2="", t3="", t4="", checksum="")
        if algo == "hitopk":
            row.update(t1=bd.t1, t2=bd.t2, t3=bd.t3, t4=bd.t4)
        if simulate:
            times = []
            for _ in range(args.warmup + args.repeats):
                t0 = time.perf_counter()
                res = aggregate(group, config)
                times.append(time.perf_counter() - t0)
            outs = res.ordered()
            if not all(np.array_equal(outs[0], o) for o in outs):
                raise InvariantFailure(f"{algo}: workers disagree on the aggregated vector")
            if abs(res.modeled_time - modeled) > 1e-12 * max(1.0, modeled):
                raise InvariantFailure(f"{algo}: simulator time {res.modeled_time} != model {modeled}")
            row["wall_mean_s"], row["wall_std_s"] = _timings(times, args.warmup)
            row["checksum"] = _checksum(outs[0])
        rows.append(row)
    emit("bench-comm", rows, args.out)
    return 0


DENSITY_SWEEP = (0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1)
NODE_SWEEP = (1, 2, 4, 8, 16, 32, 64)


def cmd_cost(args) -> int:
    link = _link(args)
    select = args.select_ns * 1e-9
    points = [(args.m, args.density)]
    if args.sweep == "density":
        points = [(args.m, r) for r in DENSITY_SWEEP]
    elif args.sweep == "nodes":
        points = [(m, args.density) for m in NODE_SWEEP]
    rows = []
    for m, rho in points:
        P = m * args.n
        bd = costmodel.hitopk_cost(m, args.n, args.d, rho, link, select)
        rows.append(dict(
            m=m, n=args.n, P=P, d=args.d, density=rho, bytes=args.bytes,
            t1=bd.t1, t2=bd.t2, t3=bd.t3, t4=bd.t4, hitopk_total=bd.total,
            naive_ag=costmodel.naiveag_cost(P, args.d, rho, link),
            ring_allreduce=costmodel.ring_allreduce_cost(P, args.d, link),
            tree_allreduce=costmodel.tree_allreduce_cost(P, args.d, link),
            torus2d=sum(costmodel.torus2d_cost(m, args.n, args.d, link)),
        ))
    emit("cost", rows, args.out)
    return 0


def cmd_cache_bench(args) -> int:
    timings = {
        "nfs": LevelTiming(args.nfs_ms * 1e-3),
        "local_file": LevelTiming(args.file_ms * 1e-3),
        "memory": LevelTiming(args.mem_us * 1e-6),
    }
    store = SyntheticStore(args.samples, args.sample_bytes, args.seed)
    ids = list(range(args.samples))
    capacity = args.samples if args.capacity is None else args.capacity
    rows = []
    file_cache = LocalFileCache()
    for _ in range(args.prior_runs):
        run_epochs(DataCache(store, capacity=capacity, file_cache=file_cache, timings=timings),
                   ids, args.epochs, identity_preprocess)
    for mode, enabled in (("datacache", True), ("naive", False)):
        cache = DataCache(store, capacity=capacity, file_cache=file_cache, timings=timings, enabled=enabled)
        for epoch, stats in enumerate(run_epochs(cache, ids, args.epochs, identity_preprocess), 1):
            rows.append(dict(mode=mode, epoch=epoch, memory_hit_rate=stats.hit_rate("memory"), **stats.as_row()))
        rows.append(dict(mode=mode, epoch="all", memory_hit_rate=cache.total.hit_rate("memory"),
                         **cache.total.as_row()))
    emit("cache-bench", rows, args.out)
    return 0


def cmd_train(args) -> int:
    m, n = args.workers
    topo = Topology(m, n, LinkParams.public_cloud())
    model = LeastSquares.synthetic(args.samples, args.dim, args.noise, args.seed)
    config = AggregationConfig(density=Density(args.density), mstopk_params=MSTopKParams(args.trials, args.seed),
                               algorithm=args.aggregator)
    lars = LarsParams(trust=args.trust, lr=args.lr) if args.lars else None
    schedule = linear_warmup(args.lr, args.warmup)
    result = train(model, topo, config, args.steps, schedule, lars=lars, residuals=args.residuals,
                   average=args.average, batch_size=args.batch, seed=args.seed)
    if max(result.max_weight_gap) != 0.0:
        raise InvariantFailure("worker parameters diverged from each other")
    rows = [dict(step=i + 1, loss=loss, lr=schedule(i), max_weight_gap=gap)
            for i, (loss, gap) in enumerate(zip(result.losses, result.max_weight_gap))]
    emit("train", rows, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsecomm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench-topk", help="time exact top-k against MSTopK")
    p.add_argument("--d", type=positive_int, default=262144)
    p.add_argument("--density", type=density_arg, default=0.001)
    p.add_argument("--trials", type=positive_int, default=30)
    p.add_argument("--warmup", type=non_negative_int, default=5)
    p.add_argument("--repeats", type=positive_int, default=100)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench_topk)

    p = sub.add_parser("bench-comm", help="run one aggregation algorithm on the simulated cluster")
    p.add_argument("--m", type=positive_int, default=2)
    p.add_argument("--n", type=positive_int, default=2)
    p.add_argument("--d", type=positive_int, default=1 << 16)
    p.add_argument("--density", type=density_arg, default=0.01)
    p.add_argument("--algo", default="hitopk",
                   choices=ALGORITHMS + ("ring", "2dtorus", "all"))
    p.add_argument("--trials", type=positive_int, default=30)
    p.add_argument("--warmup", type=non_negative_int, default=0)
    p.add_argument("--repeats", type=positive_int, default=1)
    p.add_argument("--model-only", action="store_true", help="skip the simulation, report the cost model")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out")
    _add_link_flags(p)
    p.set_defaults(func=cmd_bench_comm)

    p = sub.add_parser("cost", help="evaluate the alpha-beta cost model")
    p.add_argument("--m", type=positive_int, default=16)
    p.add_argument("--n", type=positive_int, default=8)
    p.add_argument("--d", type=positive_int, default=25_000_000)
    p.add_argument("--density", type=density_arg, default=0.01)
    p.add_argument("--sweep", choices=("none", "density", "nodes"), default="none")
    p.add_argument("--out")
    _add_link_flags(p)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("cache-bench", help="model I/O time with and without the two-level cache")
    p.add_argument("--samples", type=positive_int, default=1000)
    p.add_argument("--epochs", type=positive_int, default=2)
    p.add_argument("--nfs-ms", type=non_negative_float, default=10.0)
    p.add_argument("--file-ms", type=non_negative_float, default=1.0)
    p.add_argument("--mem-us", type=non_negative_float, default=10.0)
    p.add_argument("--capacity", type=non_negative_int, default=None, help="memory entries (default: all)")
    p.add_argument("--sample-bytes", type=positive_int, default=64)
    p.add_argument("--prior-runs", type=non_negative_int, default=0,
                   help="earlier runs that leave the local file cache warm")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out")
    p.set_defaults(func=cmd_cache_bench)

    p = sub.add_parser("train", help="synchronous SGD on synthetic least squares")
    p.add_argument("--workers", nargs=2, type=positive_int, metavar=("M", "N"), default=[4, 2])
    p.add_argument("--aggregator", default="hitopk", choices=ALGORITHMS + ("ring", "2dtorus"))
    p.add_argument("--density", type=density_arg, default=0.01)
    p.add_argument("--steps", type=positive_int, default=2000)
    p.add_argument("--lr", type=float, default=0.2)
    p.add_argument("--warmup", type=non_negative_int, default=0)
    p.add_argument("--batch", type=positive_int, default=64)
    p.add_argument("--dim", type=positive_int, default=512)
    p.add_argument("--samples", type=positive_int, default=4096)
    p.add_argument("--noise", type=non_negative_float, default=0.1)
    p.add_argument("--trials", type=positive_int, default=30)
    p.add_argument("--lars", action="store_true")
    p.add_argument("--trust", type=float, default=0.001)
    p.add_argument("--residuals", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--average", action="store_true")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ValueError) as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (InvariantFailure, FloatingPointError) as exc:
        print(f"{parser.prog} {args.command}: check failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
