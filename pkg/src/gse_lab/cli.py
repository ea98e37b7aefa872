"""Command line entry point ``gse-lab``.

Every subcommand writes one JSON document to standard output.  Exit codes:
0 success, 1 usage error, 2 invalid input or domain error, 3 budget exceeded,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bounds as bd
from .core import (
    ProbabilityDistribution,
    ThresholdSpec,
    _jsonable,
    dumps,
    parse_graph,
    parse_matrix,
    parse_vector,
    serialize_graph,
)
from .cut import cut_distance_step, cut_norm_step
from .errors import GseLabError, ValidationError
from .experiments import (
    SCHEMA,
    ParameterSpec,
    blockdiag_report,
    hierarchy_experiment,
    sample_nodes,
    testability_experiment,
)
from .graph_energy import DEFAULT_BUDGET, gse_exhaustive, gse_local_search, ltgse_graph, mgse
from .graphon import graphon_from_graph, parse_graphon
from .graphon_energy import ORACLE_BUDGET, grid_oracle, minimize_energy

PROG = "gse-lab"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so main() owns the exit code."""

    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# ------------------------------------------------------------------- loading


def _read(path):
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None


def _load_graph(path):
    return parse_graph(_read(path))


def _load_matrix(path):
    return parse_matrix(_read(path))


def _load_step(path):
    """A graphon JSON document, or a graph file taken through its step embedding."""
    text = _read(path)
    if text.lstrip().startswith("{"):
        return parse_graphon(text)
    return graphon_from_graph(parse_graph(text))


def _graphon_arg(args):
    if args.graphon is not None:
        return parse_graphon(_read(args.graphon))
    return graphon_from_graph(_load_graph(args.graph))


def _vec(text):
    return parse_vector(text)


def _constraint(args, q):
    """ProbabilityDistribution, ThresholdSpec or None from --a/--c/--x/--upper."""
    given = [v is not None for v in (args.a, args.c, args.x)]
    if sum(given) > 1:
        raise ValidationError("give at most one of --a, --c, --x")
    direction = "upper" if args.upper else "lower"
    if args.a is not None:
        a = _vec(args.a)
        if a.size != q:
            raise ValidationError(f"--a has {a.size} entries, J has q={q}")
        return ProbabilityDistribution(a)
    if args.c is not None:
        return ThresholdSpec.upper(q, args.c) if args.upper else ThresholdSpec.lower(q, args.c)
    if args.x is not None:
        x = _vec(args.x)
        if x.size != q:
            raise ValidationError(f"--x has {x.size} entries, J has q={q}")
        return ThresholdSpec.general(tuple(x), direction=direction)
    return None


def _add_constraint_flags(p):
    p.add_argument("--a", help="class distribution, e.g. '0.5 0.5' or '1/3,2/3'")
    p.add_argument("--c", type=float, help="homogeneous threshold on every class mass")
    p.add_argument("--x", help="per-class threshold vector")
    p.add_argument("--upper", action="store_true", help="read --c/--x as upper bounds")


# ------------------------------------------------------------------ commands


def _emit(payload, out):
    if isinstance(payload, dict) and "schema" not in payload:
        payload = {"schema": SCHEMA, **payload}
    out.write(dumps(payload) + "\n")


def cmd_energy(args, out):
    G, J = _load_graph(args.graph), _load_matrix(args.J)
    budget = args.budget or DEFAULT_BUDGET
    if args.problem == "gse":
        if args.a is not None or args.c is not None or args.x is not None:
            raise ValidationError("gse takes no constraint; use mgse or ltgse")
        if args.mode == "exhaustive":
            res = gse_exhaustive(G, J, budget=budget)
        else:
            res = gse_local_search(G, J, restarts=args.restarts, seed=args.seed)
    elif args.problem == "mgse":
        con = _constraint(args, J.q)
        if not isinstance(con, ProbabilityDistribution):
            raise ValidationError("mgse needs --a")
        res = mgse(G, J, con, mode=args.mode, seed=args.seed, restarts=args.restarts, budget=budget)
    else:
        con = _constraint(args, J.q)
        if isinstance(con, ProbabilityDistribution):
            raise ValidationError("ltgse takes --c or --x, not --a")
        res = ltgse_graph(G, J, con, mode=args.mode, seed=args.seed, restarts=args.restarts, budget=budget)
    _emit(res.to_dict(), out)


def cmd_graphon_energy(args, out):
    W, J = _graphon_arg(args), _load_matrix(args.J)
    con = _constraint(args, J.q)
    if args.oracle:
        res = grid_oracle(W, J, con, m=args.oracle, budget=args.budget or ORACLE_BUDGET)
    else:
        res = minimize_energy(W, J, con, restarts=args.restarts, seed=args.seed, tol=args.tol)
    _emit(res.to_dict(), out)


def cmd_oracle(args, out):
    W, J = _graphon_arg(args), _load_matrix(args.J)
    con = _constraint(args, J.q)
    res = grid_oracle(W, J, con, m=args.m, slack=args.slack, budget=args.budget or ORACLE_BUDGET)
    _emit(res.to_dict(), out)


def cmd_cutnorm(args, out):
    W = _graphon_arg(args)
    _emit(cut_norm_step(W, seed=args.seed).to_dict(), out)


def cmd_cutdist(args, out):
    U, W = _load_step(args.left), _load_step(args.right)
    mode = "alternating" if args.mode == "alt" else args.mode
    res = cut_distance_step(U, W, mode=mode, seed=args.seed)
    _emit(res.to_dict(), out)


def cmd_blowup(args, out):
    J = _load_matrix(args.J)
    a = _vec(args.a)
    if a.size != J.q:
        raise ValidationError(f"--a has {a.size} entries, J has q={J.q}")
    _emit(bd.blow_up(a, args.qprime, J).to_dict(), out)


def cmd_bounds(args, out):
    J = _load_matrix(args.J)
    if args.check == "continuity":
        W = _graphon_arg(args)
        rep = bd.check_continuity(W, J, _vec(args.a), _vec(args.b), seed=args.seed, restarts=args.restarts,
                                  oracle_m=args.oracle)
    elif args.check == "graphgraphon":
        G = _load_graph(args.graph)
        if (args.a is None) == (args.c is None):
            raise ValidationError("graphgraphon needs exactly one of --a, --c")
        a = None if args.a is None else _vec(args.a)
        rep = bd.check_graph_graphon(G, J, a=a, c=args.c, seed=args.seed, restarts=args.restarts,
                                     budget=args.budget or DEFAULT_BUDGET)
    else:
        U, W = _load_step(args.left), _load_step(args.right)
        mode = "alternating" if args.mode == "alt" else args.mode
        rep = bd.check_cut_lipschitz(U, W, J, _vec(args.a), mode=mode, seed=args.seed, restarts=args.restarts,
                                     oracle_m=args.oracle)
    _emit(_jsonable(rep), out)


def cmd_sample(args, out):
    G = _load_graph(args.graph)
    if not G.simple_flag:
        raise ValidationError("sampling is defined for simple graphs")
    nodes = sample_nodes(G.n, args.k, args.seed)
    H = G.induced(nodes)
    _emit({"nodes": [int(v) + 1 for v in nodes], "graph": serialize_graph(H), "seed": args.seed}, out)


def _spec_from(args, J, J_id):
    con = _constraint(args, J.q)
    if isinstance(con, ProbabilityDistribution):
        raise ValidationError("a testable parameter takes --c or --x, not --a")
    return ParameterSpec(J, con, mode=args.mode, restarts=args.restarts, seed=args.seed, tol=args.tol,
                         budget=args.budget or DEFAULT_BUDGET, J_id=J_id)


def _write_csv(rep, path):
    if path:
        try:
            Path(path).write_text(rep.to_csv())
        except OSError as exc:
            raise ValidationError(f"cannot write {path}: {exc.strerror}") from None


def cmd_test(args, out):
    G, J = _load_graph(args.graph), _load_matrix(args.J)
    spec = _spec_from(args, J, Path(args.J).stem)
    ks = [int(v) for v in _vec(args.k)]
    rep = testability_experiment(G, spec, ks, args.m, args.epsilon, seed=args.seed)
    _write_csv(rep, args.csv)
    _emit(rep.to_dict(), out)


def cmd_experiment(args, out):
    if args.experiment == "hierarchy":
        qs = [int(v) for v in _vec(args.q)]
        rep = hierarchy_experiment(
            _vec(args.alphas).tolist(), args.h1, args.h2, q_menu=qs, seed=args.seed, restarts=args.restarts,
            oracle_m=args.oracle,
        )
    else:
        ks = [int(v) for v in _vec(args.k)]
        rep = blockdiag_report(args.alpha, args.beta1, args.beta2, args.h, args.q0, ks, restarts=args.restarts,
                               seed=args.seed)
    _write_csv(rep, args.csv)
    _emit(rep.to_dict(), out)


# -------------------------------------------------------------------- parser


def build_parser():
    common = _Parser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    g.add_argument("--restarts", type=int, default=50, help="multi-start count (default 50)")
    g.add_argument("--tol", type=float, default=1e-9, help="solver tolerance (default 1e-9)")
    g.add_argument("--budget", type=int, default=None, help="work budget for exhaustive searches")

    parser = _Parser(prog=PROG, description="Ground state energies of graphs and step graphons.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("energy", parents=[common], help="graph GSE, MGSE or threshold GSE")
    p.add_argument("problem", choices=["gse", "mgse", "ltgse"])
    p.add_argument("--graph", required=True)
    p.add_argument("--J", required=True)
    p.add_argument("--mode", choices=["exhaustive", "heuristic"], default="exhaustive")
    _add_constraint_flags(p)
    p.set_defaults(func=cmd_energy)

    def graphon_source(p):
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--graphon", help="graphon JSON document {lambda, B}")
        src.add_argument("--graph", help="graph file, used through its step embedding")

    p = sub.add_parser("graphon-energy", parents=[common], help="energy of a step graphon")
    graphon_source(p)
    p.add_argument("--J", required=True)
    p.add_argument("--oracle", type=int, metavar="M", help="use the grid oracle at resolution M")
    _add_constraint_flags(p)
    p.set_defaults(func=cmd_graphon_energy)

    p = sub.add_parser("oracle", parents=[common], help="grid oracle for a step graphon")
    graphon_source(p)
    p.add_argument("--J", required=True)
    p.add_argument("--m", type=int, default=20, help="grid resolution (default 20)")
    p.add_argument("--slack", type=float, default=None, help="constraint slack (default: exact, else 1/(2m))")
    _add_constraint_flags(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("cutnorm", parents=[common], help="cut norm of a step graphon")
    graphon_source(p)
    p.set_defaults(func=cmd_cutnorm)

    p = sub.add_parser("cutdist", parents=[common], help="cut distance between two step graphons")
    p.add_argument("--left", required=True, help="graphon JSON or graph file")
    p.add_argument("--right", required=True, help="graphon JSON or graph file")
    p.add_argument("--mode", choices=["exact", "alt", "alternating"], default="alt")
    p.set_defaults(func=cmd_cutdist)

    p = sub.add_parser("blowup", parents=[common], help="blow up J along a rational distribution")
    p.add_argument("--a", required=True)
    p.add_argument("--qprime", type=int, required=True)
    p.add_argument("--J", required=True)
    p.set_defaults(func=cmd_blowup)

    p = sub.add_parser("bounds", help="check one of the quantitative bounds")
    bsub = p.add_subparsers(dest="check", required=True, parser_class=_Parser)
    b = bsub.add_parser("continuity", parents=[common])
    graphon_source(b)
    b.add_argument("--J", required=True)
    b.add_argument("--a", required=True)
    b.add_argument("--b", required=True)
    b.add_argument("--oracle", type=int, metavar="M")
    b = bsub.add_parser("graphgraphon", parents=[common])
    b.add_argument("--graph", required=True)
    b.add_argument("--J", required=True)
    b.add_argument("--a")
    b.add_argument("--c", type=float)
    b = bsub.add_parser("lipschitz", parents=[common])
    b.add_argument("--left", required=True)
    b.add_argument("--right", required=True)
    b.add_argument("--J", required=True)
    b.add_argument("--a", required=True)
    b.add_argument("--mode", choices=["exact", "alt", "alternating"], default="alt")
    b.add_argument("--oracle", type=int, metavar="M")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("sample", parents=[common], help="random induced subgraph")
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("test", parents=[common], help="empirical testability experiment")
    p.add_argument("--graph", required=True)
    p.add_argument("--J", required=True)
    p.add_argument("--k", required=True, help="sample sizes, e.g. '20 40 60'")
    p.add_argument("--m", type=int, default=10, help="samples per size (default 10)")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--mode", choices=["exhaustive", "heuristic"], default="heuristic")
    p.add_argument("--csv", metavar="PATH")
    _add_constraint_flags(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("experiment", help="block-diagonal reports")
    esub = p.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    e = esub.add_parser("hierarchy", parents=[common])
    e.add_argument("--alphas", default="0.5 0.7 0.5 0.7 0.5 0.7")
    e.add_argument("--h1", type=float, default=0.2)
    e.add_argument("--h2", type=float, default=0.4)
    e.add_argument("--q", default="2 3 4 5 6", help="mincut sizes in the menu")
    e.add_argument("--oracle", type=int, metavar="M", help="bracket flagged values with the grid oracle")
    e.add_argument("--csv", metavar="PATH")
    e = esub.add_parser("blockdiag", parents=[common])
    e.add_argument("--alpha", type=float, required=True)
    e.add_argument("--beta1", type=float, required=True)
    e.add_argument("--beta2", type=float, required=True)
    e.add_argument("--h", type=float, default=0.2)
    e.add_argument("--q0", type=int, default=2)
    e.add_argument("--k", default="8 16 32 64 128 256", help="J_k schedule")
    e.add_argument("--csv", metavar="PATH")
    p.set_defaults(func=cmd_experiment)
    return parser


def cli_main(argv=None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        err.write(str(exc) + "\n")
        return 1
    except SystemExit as exc:
        # --help
        return 0 if exc.code in (0, None) else 1
    if getattr(args, "restarts", 1) is not None and getattr(args, "restarts", 1) < 1:
        err.write(f"{PROG}: error: --restarts must be at least 1\n")
        return 1
    try:
        args.func(args, out)
    except GseLabError as exc:
        err.write(f"{PROG}: {type(exc).__name__}: {exc}\n")
        return exc.exit_code
    except (ValueError, TypeError, np.linalg.LinAlgError, json.JSONDecodeError) as exc:
        err.write(f"{PROG}: invalid input: {exc}\n")
        return 2
    except Exception as exc:  # anything else is a defect, not bad input
        err.write(f"{PROG}: internal error: {type(exc).__name__}: {exc}\n")
        return 4
    return 0


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
