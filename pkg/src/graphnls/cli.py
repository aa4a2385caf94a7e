"""Command-line front end.

Exit status: 0 success, 2 configuration error, 3 numerical failure (the error
name and raising module are printed), 4 refusal of an out-of-regime mass
under ``--strict``.
"""

from __future__ import annotations

import argparse
import glob
import math
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import dat_file, envelope, read_json, write_json, write_text
from .bifurcation import bifurcation_verdict, branch_csv, sweep
from .cones import separation_delta
from .exceptions import GraphError, GraphNLSError, InadmissibleIndex, InvalidExponent, MissingArtifact
from .functional import ProblemParams, compute_thresholds, gn_estimate
from .graph import assemble
from .minmax import solve_ladder
from .spectrum import eigenpairs, spectral_gap_indices
from .validation import check_graph, check_indices, parse_indices

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_REGIME = 0, 2, 3, 4


def _exponent(text: str) -> float:
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not (math.isfinite(p) and p > 6):
        raise argparse.ArgumentTypeError(f"p must exceed 6, got {text}")
    return p


def _mass(text: str):
    if text == "auto":
        return "auto"
    try:
        mu = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"mass must be a positive number or 'auto', got {text!r}")
    if not (math.isfinite(mu) and mu > 0):
        raise argparse.ArgumentTypeError(f"mass must be positive, got {text}")
    return mu


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphnls", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"graphnls {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, graph=True):
        if graph:
            sp.add_argument("--graph", required=True, help="graph description (JSON)")
            sp.add_argument("--cells", type=_positive_int, default=64, help="cells per edge")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=0)

    def physics(sp):
        sp.add_argument("--p", type=_exponent, default=7.0)
        sp.add_argument("--k-samples", type=_positive_int, default=200,
                        help="samples for the Gagliardo-Nirenberg constant estimate")

    sp = sub.add_parser("spectrum", help="eigenvalue table")
    common(sp)
    sp.add_argument("-k", type=_positive_int, default=6)

    sp = sub.add_parser("thresholds", help="closed-form mass thresholds")
    common(sp)
    physics(sp)
    sp.add_argument("--mu", type=_mass, default="auto")
    sp.add_argument("--k", default="2", help="comma-separated gap indices")

    sp = sub.add_parser("solve", help="positive and sign-changing solutions")
    common(sp)
    physics(sp)
    sp.add_argument("--mu", type=_mass, default="auto")
    sp.add_argument("--k", default="2", help="comma-separated gap indices")
    sp.add_argument("--nu", type=float, default=None)
    sp.add_argument("--strict", action="store_true")

    sp = sub.add_parser("bifurcate", help="continue a branch toward zero mass")
    common(sp)
    physics(sp)
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--mu-start", type=_mass, default="auto")
    sp.add_argument("--points", type=_positive_int, default=8)
    sp.add_argument("--ratio", type=float, default=0.5)
    sp.add_argument("--tol", type=float, default=0.05)
    sp.add_argument("--strict", action="store_true")

    sp = sub.add_parser("lab", help="finite-dimensional invariance checks")
    common(sp, graph=False)
    sp.add_argument("--scenario", default="orthant",
                    choices=["orthant", "counterexample", "cone", "halfspace", "quarter", "rotating",
                             "patched"])
    sp.add_argument("--starts", type=_positive_int, default=100)

    sp = sub.add_parser("plots", help="gnuplot-ready data from earlier artifacts")
    sp.add_argument("--artifacts", default=".", help="directory holding earlier results")
    sp.add_argument("--out", default=None, help="output directory (defaults to --artifacts)")
    return parser


# -- shared setup -------------------------------------------------------------


class _Problem:
    def __init__(self, args, n_eigen: int):
        self.graph = check_graph(args.graph)
        self.disc = assemble(self.graph, args.cells)
        self.spec = eigenpairs(self.disc, min(n_eigen, self.disc.n_dofs - 1), seed=args.seed)


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("out", "graph", "artifacts")}
    if getattr(args, "graph", None) is not None:
        cfg["graph_hash"] = check_graph(args.graph).digest()
    return cfg


def _thresholds(prob, args, indices, mu):
    kest = gn_estimate(prob.disc, args.p, n_samples=args.k_samples, seed=args.seed)
    if mu == "auto":
        probe = compute_thresholds(ProblemParams(args.p, 1.0), kest, prob.spec, indices)
        mu = 0.5 * probe.mu_j
    return compute_thresholds(ProblemParams(args.p, mu), kest, prob.spec, indices), kest


# -- subcommands --------------------------------------------------------------


def cmd_spectrum(args) -> int:
    prob = _Problem(args, args.k)
    s = prob.spec
    print(f"{'i':>3} {'lambda_i':>22}")
    for i, lam in enumerate(s.values, start=1):
        print(f"{i:>3} {lam:>22.15g}")
    body = {**s.metadata(), "gap_indices": spectral_gap_indices(s) if s.k >= 2 else []}
    write_json(Path(args.out) / "spectrum.json", envelope("spectrum", _config(args), body))
    return EXIT_OK


def cmd_thresholds(args) -> int:
    indices = parse_indices(args.k)
    prob = _Problem(args, max(indices) + 4)
    check_indices(prob.spec, indices)
    rep, _ = _thresholds(prob, args, indices, args.mu)
    for key in ("K", "b", "rho_star", "M1", "M2", "mu1", "mu_tilde", "mu_j"):
        print(f"{key:>10} = {getattr(rep, key):.10g}")
    for k, e in rep.per_index.items():
        print(f"  k={k}: " + ", ".join(f"{n}={v:.6g}" for n, v in sorted(e.items())))
    write_json(Path(args.out) / "thresholds.json", envelope("thresholds", _config(args), rep.to_dict()))
    return EXIT_OK


def _regime_gate(args, rep, mu) -> int | None:
    if not args.strict:
        return None
    bad = rep.regime_violations(mu)
    if bad:
        for b in bad:
            print(f"out of regime: violated {b}", file=sys.stderr)
        return EXIT_REGIME
    return None


def cmd_solve(args) -> int:
    indices = parse_indices(args.k)
    prob = _Problem(args, max(indices) + 4)
    check_indices(prob.spec, indices)
    rep, _ = _thresholds(prob, args, indices, args.mu)
    gate = _regime_gate(args, rep, rep.mu)
    if gate is not None:
        return gate
    nu = args.nu
    if nu is None:
        nu = separation_delta(prob.spec, rep.mu, rep.rho_star, indices[0], seed=args.seed).default_nu()
    ladder = solve_ladder(prob.spec, rep, indices, args.p, nu, seed=args.seed)
    body = {"thresholds": rep.to_dict(), "nu": nu, **ladder.to_dict(),
            "mirror_energies": [m.energy for m in ladder.mirrors]}
    out = Path(args.out)
    write_json(out / "solutions.json", envelope("solve", _config(args), body))
    if ladder.positive.trajectory is not None:
        write_text(out / "trajectory.csv", ladder.positive.trajectory.to_csv())
    print(f"mu = {rep.mu:.6g}, nu = {nu:.6g}")
    print(f"positive: E = {ladder.positive.energy:.12g}, residual = {ladder.positive.residual:.2e}")
    for r in ladder.sign_changing:
        print(f"k={r.k}: E = {r.energy:.12g}, lambda = {r.pde_lambda:.10g}, "
              f"residual = {r.residual:.2e}, sign changes = {r.sign_changes}")
    return EXIT_OK


def cmd_bifurcate(args) -> int:
    prob = _Problem(args, args.k + 4)
    check_indices(prob.spec, [args.k])
    rep, _ = _thresholds(prob, args, [args.k], 1.0)
    cap = min(rep.mu1, rep.mu_check(args.k))
    mu0 = 0.5 * cap if args.mu_start == "auto" else args.mu_start
    if args.strict and not mu0 < cap:
        print(f"out of regime: violated mu_start < min(mu1, mu_check_{args.k}) "
              f"({mu0:.6g} >= {cap:.6g})", file=sys.stderr)
        return EXIT_REGIME
    if not 0 < args.ratio < 1:
        raise ValueError("--ratio must lie in (0, 1)")
    grid = mu0 * args.ratio ** np.arange(args.points)
    branch = sweep(prob.spec, args.k, grid, args.p, seed=args.seed)
    target = prob.spec.eigenvalue(args.k)
    verdict = bifurcation_verdict(branch, target, args.tol)
    out = Path(args.out)
    write_text(out / f"branch_k{args.k}.csv", branch_csv(branch))
    body = {"k": args.k, "target": target, "verdict": verdict.to_dict(),
            "points": [dict(zip(("mu", "pde_lambda", "energy_ratio", "kinetic_ratio",
                                 "p_norm_ratio", "h1_norm"), b.row())) for b in branch]}
    write_json(out / f"bifurcation_k{args.k}.json", envelope("bifurcate", _config(args), body))
    print(f"k={args.k}: target lambda_k = {target:.10g}, verdict {'PASS' if verdict.passed else 'FAIL'}")
    for b in branch:
        print(f"  mu={b.mu:.4e}  -lambda={-b.pde_lambda:.10g}  E/mu={b.energy_ratio:.10g}")
    return EXIT_OK


def cmd_lab(args) -> int:
    from . import lab

    makers = {
        "orthant": lab.orthant_scenario,
        "counterexample": lambda: lab.counterexample_scenario(seed=args.seed),
        "cone": lab.cone_neighborhood_scenario,
        "halfspace": lambda: lab.halfspace_scenario([[1, 0.2, 0, 0], [0, 1, -0.3, 0.1], [0.2, 0, 1, 0.5]]),
        "quarter": lab.quarter_circle_scenario,
        "rotating": lab.rotating_cap_scenario,
        "patched": lambda: lab.patched_scenario(lab.orthant_scenario()),
    }
    sc = makers[args.scenario]()
    if sc.section is not None:
        starts = [sc.section(None)]
    else:
        starts = sc.sample_starts(args.starts, seed=args.seed)
    table = lab.limit_check(sc, starts[0])
    body = {"scenario": sc.name, "digest": sc.digest(), "decay": table.to_dict()}
    if sc.section is None:
        body["invariance"] = lab.flow_invariance_check(sc, starts, richardson=args.scenario == "rotating").to_dict()
        body["oracles"] = lab.set_oracle_checks(sc, seed=args.seed)
    write_json(Path(args.out) / f"lab_{sc.name}.json", envelope("lab", _config(args), body))
    print(f"{sc.name}: limit check {'PASS' if table.passed else 'FAIL'} (last entry {table.values[-1]:.3e})")
    if "invariance" in body:
        print(f"  max violation {body['invariance']['max_violation']:.3e}")
    return EXIT_OK


def emit_plots(artifacts: Path, out: Path | None = None) -> list[Path]:
    """Turn earlier JSON/CSV results into two-column ``.dat`` files.

    Raises
    ------
    MissingArtifact
        Nothing usable was found in ``artifacts``.
    """
    artifacts = Path(artifacts)
    out = artifacts if out is None else Path(out)
    written = []
    for path in sorted(glob.glob(str(artifacts / "bifurcation_k*.json"))):
        res = read_json(path)["result"]
        rows = [(pt["mu"], -pt["pde_lambda"]) for pt in res["points"]]
        header = [f"target lambda_{res['k']} = {res['target']!r}", "mu  -lambda"]
        written.append(write_text(out / f"bifurcation_k{res['k']}.dat", dat_file(header, rows)))
    sol = artifacts / "solutions.json"
    if sol.exists():
        res = read_json(sol)["result"]
        rows = sorted((r["k"], r["energy"]) for r in res["sign_changing"])
        written.append(write_text(out / "ladder.dat", dat_file(["k  energy"], rows)))
    traj = artifacts / "trajectory.csv"
    if traj.exists():
        data = np.genfromtxt(traj, delimiter=",", names=True, dtype=None, encoding="utf-8")
        rows = list(zip(np.atleast_1d(data["t"]), np.atleast_1d(data["E"])))
        written.append(write_text(out / "trajectory.dat", dat_file(["t  E"], rows)))
    if not written:
        raise MissingArtifact(f"no artifacts found in {artifacts}")
    return written


def cmd_plots(args) -> int:
    for path in emit_plots(Path(args.artifacts), None if args.out is None else Path(args.out)):
        print(path)
    return EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "thresholds": cmd_thresholds,
    "solve": cmd_solve,
    "bifurcate": cmd_bifurcate,
    "lab": cmd_lab,
    "plots": cmd_plots,
}


def _raising_module(exc: BaseException) -> str:
    tb = exc.__traceback__
    name = "?"
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", name)
        tb = tb.tb_next
    return name


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (MissingArtifact, GraphError, InvalidExponent, InadmissibleIndex) as exc:
        print(f"configuration error: {exc.name}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GraphNLSError as exc:
        print(f"numerical failure in {_raising_module(exc)}: {exc.name}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"configuration error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # pragma: no cover - last resort
        traceback.print_exc()
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
