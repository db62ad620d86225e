"""Command-line interface: ``gffm``.

Configuration precedence: command-line flags > environment (GFFM_SEED,
GFFM_THREADS) > JSON config file (``--config``) > built-in defaults.

Exit codes: 0 success / all tests pass, 1 statistical failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import experiments, laws
from .fieldsim import GaussianField, fields_to_csv, sample_fields
from .fps import fps_laplace_estimate, fps_to_csv, metric_ball, nested_fps, sample_fps, ChainEngine, BRACKETS
from .metric import batch_local_times, batch_minima, batch_shortest, edges_to_csv, levy_pair_samples, metric_to_csv
from .network import (
    NetworkError,
    boundary_mean,
    effective_kernel,
    green_matrix,
    harmonic_extension,
    load_network_file,
    set_resistance,
    two_point_resistance,
)
from .stats import RandomStream

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

DEFAULTS = {"seed": 0, "replicates": 1000, "refinement": 32, "threads": 1, "out": None, "graph": None}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    graph: str | None
    seed: int
    replicates: int
    refinement: int
    out: str | None
    threads: int

    def __post_init__(self):
        if self.replicates < 1:
            raise UsageError("replicates must be >= 1")
        if self.refinement < 1:
            raise UsageError("refinement must be >= 1")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")


def resolve_config(args: argparse.Namespace, env: dict | None = None) -> RunConfig:
    env = os.environ if env is None else env
    file_cfg: dict = {}
    if getattr(args, "config", None):
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
    env_cfg: dict = {}
    try:
        if env.get("GFFM_SEED") not in (None, ""):
            env_cfg["seed"] = int(env["GFFM_SEED"])
        if env.get("GFFM_THREADS") not in (None, ""):
            env_cfg["threads"] = int(env["GFFM_THREADS"])
    except ValueError as exc:
        raise UsageError(f"bad environment value: {exc}") from exc

    def pick(key):
        flag = getattr(args, key, None)
        if flag is not None:
            return flag
        if key in env_cfg:
            return env_cfg[key]
        if key in file_cfg:
            return file_cfg[key]
        return DEFAULTS[key]

    try:
        return RunConfig(
            command=" ".join(x for x in (getattr(args, "cmd", None), getattr(args, "sub", None)) if x),
            graph=pick("graph"),
            seed=int(pick("seed")),
            replicates=int(pick("replicates")),
            refinement=int(pick("refinement")),
            out=pick("out"),
            threads=int(pick("threads")),
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def _grid(text: str) -> np.ndarray:
    """``start:stop:count`` or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError("grid must be start:stop:count")
        return np.linspace(float(parts[0]), float(parts[1]), int(parts[2]))
    return np.array(_floats(text))


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _graph(cfg: RunConfig):
    if not cfg.graph:
        raise UsageError("a graph file is required (-g)")
    return load_network_file(cfg.graph)


# --------------------------------------------------------------------------
# Commands


def cmd_net(args, cfg: RunConfig) -> int:
    net, bc = _graph(cfg)
    if args.sub == "reff":
        src = args.source.split(",")
        dst = args.target.split(",")
        r = two_point_resistance(net, src[0], dst[0]) if len(src) == len(dst) == 1 else set_resistance(net, src, dst)
        _emit(f"{r!r}\n", cfg.out)
    elif args.sub == "kernel":
        pts = args.set.split(",") if args.set else list(bc.boundary)
        _emit(effective_kernel(net, pts).to_csv(), cfg.out)
    elif args.sub == "green":
        _emit(green_matrix(net, bc).to_csv(), cfg.out)
    elif args.sub == "harmonic":
        h = harmonic_extension(net, bc)
        _emit("vertex,value\n" + "".join(f"{v},{x!r}\n" for v, x in h.items()), cfg.out)
    return EXIT_OK


def cmd_law(args, cfg: RunConfig) -> int:
    grid = _grid(args.grid)
    name = args.law
    if name == "local-time":
        vals = laws.local_time_survival(laws.BridgeSpec(args.w0, args.wT, args.T), grid)
    elif name == "bridge-min":
        vals = laws.bridge_min_survival(laws.BridgeSpec(args.w0, args.wT, args.T), grid)
    elif name == "last-visit":
        vals = laws.last_visit_cdf(laws.BridgeSpec(args.w0, args.wT, args.T), args.a, grid)
    elif name == "hitting":
        vals = laws.bm_hitting_cdf(args.m, args.a, grid)
    elif name == "fps-laplace":
        vals = laws.fps_laplace(args.C, args.m, args.h_check, args.a, grid)
    elif name == "two-set":
        net, bc = _graph(cfg)
        vals = laws.two_set_survival(laws.TwoSetLawSpec.from_network(net, bc), grid)
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(name)
    vals = np.broadcast_to(np.asarray(vals, dtype=float), grid.shape)
    _emit("x,value\n" + "".join(f"{x!r},{float(v)!r}\n" for x, v in zip(grid.tolist(), vals)), cfg.out)
    return EXIT_OK


def cmd_sample(args, cfg: RunConfig) -> int:
    net, bc = _graph(cfg)
    st = RandomStream(cfg.seed)
    reps = np.arange(cfg.replicates)
    if args.sub == "field":
        _emit(fields_to_csv(sample_fields(net, bc, st, reps)), cfg.out)
    elif args.sub == "metric":
        g = GaussianField(net, bc)
        f = g.sample(st, reps)
        L = batch_local_times(net, f, st, reps)
        src = [net.index[a] for a in bc.values]
        d = batch_shortest(net, L, src)
        header = ["replicate"] + [f"delta:{v}" for v in net.vertices]
        two = None
        if bc.has_partition:
            dh = batch_shortest(net, L, [net.index[x] for x in bc.hat])
            two = dh[:, [net.index[y] for y in bc.check]].min(axis=1)
            header.append("delta_hat_check")
        lines = [",".join(header)]
        for i, r in enumerate(reps):
            row = [str(int(r))] + [repr(float(x)) for x in d[i]]
            if two is not None:
                row.append(repr(float(two[i])))
            lines.append(",".join(row))
        _emit("\n".join(lines) + "\n", cfg.out)
        if args.edges:
            M = batch_minima(net, f, st, reps)
            _emit(edges_to_csv(net, reps, L, M), args.edges)
    elif args.sub == "levy":
        _emit(metric_to_csv(levy_pair_samples(net, bc, cfg.replicates, st)), cfg.out)
    return EXIT_OK


def cmd_fps(args, cfg: RunConfig) -> int:
    net, bc = _graph(cfg)
    st = RandomStream(cfg.seed)
    n = cfg.refinement
    if args.sub == "sample":
        eng = ChainEngine(net, bc, n)
        rows = {b: np.empty((cfg.replicates, 1)) for b in BRACKETS}
        r_total = None
        for r in range(cfg.replicates):
            _, obs = sample_fps(net, bc, args.level, n, st, r, x0=args.x0, engine=eng, variant=args.variant)
            for b in BRACKETS:
                rows[b][r, 0] = obs.r_eff_to_check[b]
        if args.x0:
            r_total = set_resistance(net, [args.x0], list(bc.values))
            drops = {b: r_total - rows[b] for b in BRACKETS}
            _emit(fps_to_csv(np.arange(cfg.replicates), [args.level], drops, "drop_at_x0", r_total), cfg.out)
        else:
            _emit(fps_to_csv(np.arange(cfg.replicates), [args.level], rows, "r_eff"), cfg.out)
    elif args.sub == "laplace":
        est = fps_laplace_estimate(net, bc, args.level, _floats(args.u), n, cfg.replicates, st, variant=args.variant)
        lines = ["u,closed_form,lower,lower_se,upper,upper_se"]
        for i, u in enumerate(est.u):
            lines.append(",".join(repr(float(x)) for x in (u, est.closed_form[i], est.estimate["lower"][i], est.se["lower"][i],
                                                           est.estimate["upper"][i], est.se["upper"][i])))
        _emit("\n".join(lines) + "\n", cfg.out)
    elif args.sub == "nested":
        if not args.x0:
            raise UsageError("--x0 is required")
        res = nested_fps(net, bc, _floats(args.levels), args.x0, n, st, cfg.replicates, variant=args.variant)
        _emit(fps_to_csv(res.replicates, res.levels, res.drops, "drop_at_x0", res.r_total), cfg.out)
    elif args.sub == "ball":
        if not args.x0:
            raise UsageError("--x0 is required")
        res = metric_ball(net, bc, _floats(args.ells), args.x0, n, st, cfg.replicates)
        _emit(fps_to_csv(res.replicates, res.ells, res.drops, "drop_at_x0", res.r_total), cfg.out)
    return EXIT_OK


def _write_reports(results, outdir: str | None, deterministic: bool) -> None:
    if not outdir:
        return
    d = Path(outdir)
    d.mkdir(parents=True, exist_ok=True)
    for res in results:
        seed = res.reports[0].seed if res.reports else None
        payload = []
        for r in res.reports:
            j = r.to_json()
            if deterministic:
                j["runtime_ms"] = 0.0
            payload.append(j)
        (d / f"{res.suite}-seed{seed}.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        for key, val in res.data.items():
            if isinstance(val, np.ndarray) and val.ndim == 1:
                (d / f"{res.suite}-seed{seed}-{key}.csv").write_text(
                    "replicate,value\n" + "".join(f"{i},{float(x)!r}\n" for i, x in enumerate(val)))


def cmd_verify(args, cfg: RunConfig) -> int:
    if args.suite not in experiments.SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(experiments.SUITES)}")
    seeds = [args.seed] if args.seed is not None else ([cfg.seed] if os.environ.get("GFFM_SEED") else list(experiments.DEFAULT_SEEDS))
    n = args.replicates
    ok, results = experiments.run_suite(args.suite, seeds, n, cfg.threads)
    for res in results:
        for r in res.reports:
            print(r.line())
    print(f"{args.suite}: {'PASS' if ok else 'FAIL'} ({sum(r.passed for r in results)}/{len(results)} seeds)")
    _write_reports(results, cfg.out, args.deterministic)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_lattice(args, cfg: RunConfig) -> int:
    rep = experiments.lattice_probe(args.rows, args.cols, cfg.replicates, cfg.seed, cfg.threads, args.periodic)
    print(rep.report.line())
    print(f"R_eff={rep.r_eff!r} extremal_distance={rep.extremal_distance!r} (diagnostic)")
    if cfg.out:
        j = rep.report.to_json()
        if args.deterministic:
            j["runtime_ms"] = 0.0
        _emit(json.dumps(j, indent=2, sort_keys=True) + "\n", cfg.out)
    return EXIT_OK if rep.report.passed else EXIT_FAIL


# --------------------------------------------------------------------------
# Parser


def _common(p: argparse.ArgumentParser, graph: bool = True) -> None:
    if graph:
        p.add_argument("-g", "--graph", help="graph JSON document")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-n", "--replicates", type=int, default=None)
    p.add_argument("-r", "--refinement", type=int, default=None, help="subdivisions per edge")
    p.add_argument("-o", "--out", default=None, help="output file (directory for verify)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON config file")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit with code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gffm", description="GFF on metric graphs: networks, laws, sampling, first passage sets.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    net = sub.add_parser("net", help="deterministic network quantities")
    ns = net.add_subparsers(dest="sub", required=True, parser_class=_Parser)
    q = ns.add_parser("reff", help="effective resistance between two vertices or vertex sets")
    _common(q)
    q.add_argument("--from", dest="source", required=True)
    q.add_argument("--to", dest="target", required=True)
    q = ns.add_parser("kernel", help="effective conductance matrix as CSV")
    _common(q)
    q.add_argument("--set", default=None, help="comma-separated vertices (default: the boundary)")
    for name in ("green", "harmonic"):
        _common(ns.add_parser(name))

    law_p = sub.add_parser("law", help="closed-form laws")
    ls_ = law_p.add_subparsers(dest="sub", required=True, parser_class=_Parser)
    law = ls_.add_parser("eval", help="evaluate a closed-form law on a grid")
    law.add_argument("law", choices=["local-time", "bridge-min", "last-visit", "hitting", "fps-laplace", "two-set"])
    _common(law)
    law.add_argument("--grid", required=True, help="start:stop:count or comma list")
    for name in ("w0", "wT", "m", "a", "C", "h-check"):
        law.add_argument(f"--{name}", type=float, default=0.0, dest=name.replace("-", "_"))
    law.add_argument("--T", type=float, default=1.0)

    smp = sub.add_parser("sample", help="Monte Carlo samples as CSV")
    ss = smp.add_subparsers(dest="sub", required=True, parser_class=_Parser)
    for name in ("field", "metric", "levy"):
        q = ss.add_parser(name)
        _common(q)
        if name == "metric":
            q.add_argument("--edges", default=None, help="also write per-edge local times and minima")

    fps = sub.add_parser("fps", help="first passage sets and metric balls")
    fs = fps.add_subparsers(dest="sub", required=True, parser_class=_Parser)
    for name in ("sample", "laplace", "nested", "ball"):
        q = fs.add_parser(name)
        _common(q)
        q.add_argument("--x0", default=None)
        q.add_argument("--variant", choices=["exact", "discrete"], default="exact")
        if name in ("sample", "laplace"):
            q.add_argument("--level", type=float, required=True)
        if name == "laplace":
            q.add_argument("--u", default="0.25,1,4")
        if name == "nested":
            q.add_argument("--levels", required=True)
        if name == "ball":
            q.add_argument("--ells", required=True)

    ver = sub.add_parser("verify", help="run a verification suite")
    ver.add_argument("suite")
    _common(ver, graph=False)
    ver.add_argument("--deterministic", action="store_true", help="zero runtimes in JSON so outputs are byte-identical")

    lat = sub.add_parser("lattice", help="grid probe of the two-set distance law")
    _common(lat, graph=False)
    lat.add_argument("--rows", type=int, default=80)
    lat.add_argument("--cols", type=int, default=40)
    lat.add_argument("--periodic", action="store_true")
    lat.add_argument("--deterministic", action="store_true")
    return p


HANDLERS = {"net": cmd_net, "law": cmd_law, "sample": cmd_sample, "fps": cmd_fps, "verify": cmd_verify, "lattice": cmd_lattice}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help (0) or a usage error (2)
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        return HANDLERS[args.cmd](args, cfg)
    except (UsageError, NetworkError, KeyError, ValueError) as exc:
        print(f"gffm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
