"""Command-line interface: curves, certification, simulation, and bounds.

Every subcommand is reproducible byte-for-byte given identical flags and
seed; numeric output is serialized with 12 significant digits.  Exit codes:
0 success (a negative verdict is still success), 2 invalid input,
3 computation unreliable.

The protocol cost is intentionally small: one fixed three-outcome device per
agent, i.e. the number of distinct measurement outcomes grows as 3N with the
number of agents N.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import multipartite, povm, qcore, sampler, witness
from ._optimize import OptimizerSettings

__all__ = ["main"]

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_UNRELIABLE = 3


class UnreliableComputation(RuntimeError):
    pass


def _fmt(value):
    """Round-trip floats at 12 significant digits for stable serialization."""
    if isinstance(value, float):
        return float(f"{value:.12g}")
    if isinstance(value, dict):
        return {k: _fmt(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_fmt(v) for v in value]
    return value


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_fmt(payload), indent=2, sort_keys=True) + "\n")


def _number(text: str) -> float:
    """Parse a float, accepting fractions like 2/3 for exact parameters."""
    try:
        if "/" in text:
            return float(Fraction(text))
        return float(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def _indices(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad index tuple: {text!r}") from exc


def _settings(args) -> OptimizerSettings:
    kw = {}
    if getattr(args, "restarts", None):
        kw["restarts"] = args.restarts
    if getattr(args, "threads", None):
        kw["threads"] = args.threads
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    return OptimizerSettings(**kw)


def _build_povms(args, parties: int) -> list[povm.Povm]:
    if getattr(args, "povm", None):
        return povm.povm_from_dict(qcore.load_json(args.povm))
    params = povm.ThreeOutcomeParams(x=args.x, theta=args.theta)
    return [povm.build_three_outcome(params) for _ in range(parties)]


def _operator_pair(args, parties: int = 2):
    povms = _build_povms(args, parties)
    l_op = povm.product_operator(povms, list(args.l_indices))
    c_op = povm.product_operator(povms, list(args.c_indices))
    return povms, l_op, c_op


def cmd_curve(args) -> int:
    settings = _settings(args)
    _, l_op, c_op = _operator_pair(args)
    report = povm.uew_admissibility_check(c_op, l_op)
    lo, hi = witness.attainable_constraint_range(c_op, settings)
    grid = np.linspace(lo, hi, args.grid)
    curve = witness.separability_curve(witness.TestOperator(l_op), c_op, grid, settings)
    sew = witness.sew_bound(witness.TestOperator(l_op), settings=settings)

    out_csv = Path(args.out)
    witness.curve_to_csv(curve, out_csv)
    summary = {
        "fingerprint": curve.operator_fingerprint,
        "reliable": curve.reliable,
        "g_s": sew.value,
        "sew_optimum_c": curve.peak.c,
        "c_range": [lo, hi],
        "grid_points": args.grid,
        "admissibility": {
            "commutes": report.commutes,
            "commutator_norm": report.commutator_norm,
        },
        "settings": settings.as_dict(),
    }
    if report.commutes:
        summary["warning"] = (
            "constraint and test operators commute: the pair cannot detect "
            "entanglement (the constrained separable bound equals the bound "
            "over all states)"
        )
    if abs(args.x - 2.0 / 3.0) < 1e-12 and tuple(args.c_indices) == (1, 1) and tuple(args.l_indices) == (2, 2):
        summary["entangled_max"] = [
            {"c": float(c), "value": witness.entangled_max(float(c))} for c in grid
        ]
    _write_json(out_csv.with_suffix(".json"), summary)
    print(f"curve: {len(curve.points)} points, g_s={sew.value:.12g}, reliable={curve.reliable}")
    if not curve.reliable:
        raise UnreliableComputation("curve has unconverged or non-concave points")
    return EXIT_OK


def cmd_certify(args) -> int:
    counts = sampler.load_counts(args.counts)
    curve_path = Path(args.curve)
    sidecar = curve_path.with_suffix(".json")
    fingerprint, reliable = "", None
    if sidecar.exists():
        meta = qcore.load_json(sidecar)
        fingerprint = meta.get("fingerprint", "")
        reliable = meta.get("reliable")
    curve = witness.curve_from_csv(curve_path, fingerprint=fingerprint, reliable=reliable)
    if not curve.reliable:
        raise UnreliableComputation("curve file is marked unreliable")
    est = sampler.estimate(counts, args.c_indices, args.l_indices)
    verdict = witness.detect(
        curve, est.c_hat, est.l_hat, est.sigma_c, est.sigma_l, k=args.sigma
    )
    payload = {
        "estimate": {
            "c_hat": est.c_hat,
            "l_hat": est.l_hat,
            "sigma_c": est.sigma_c,
            "sigma_l": est.sigma_l,
            "shots": est.shots,
        },
        "verdict": {
            "entangled": verdict.entangled,
            "margin": verdict.margin,
            "sigma_level": verdict.sigma_level,
            "branch": verdict.branch,
            "note": verdict.note,
        },
        "inputs": {
            "counts": str(args.counts),
            "curve": str(args.curve),
            "c_indices": list(args.c_indices),
            "l_indices": list(args.l_indices),
        },
    }
    _write_json(Path(args.out), payload)
    print(f"verdict: entangled={verdict.entangled} margin={verdict.margin}")
    return EXIT_OK


def _preset_state(args) -> qcore.DensityMatrix:
    if args.preset == "optimal-entangled":
        state = witness.optimal_entangled_state(args.theta, args.c)
        return qcore.pure_density(state)
    if args.preset == "maximally-mixed":
        n = 2**args.parties
        return qcore.DensityMatrix((2,) * args.parties, np.eye(n) / n)
    if args.preset == "bell":
        vec = np.zeros(4)
        vec[0] = vec[3] = 1.0 / np.sqrt(2.0)
        return qcore.pure_density(qcore.PureState((2, 2), vec))
    raise ValueError(f"unknown preset {args.preset!r}")


def cmd_simulate(args) -> int:
    if bool(args.state) == bool(args.preset):
        raise ValueError("give exactly one of --state or --preset")
    if args.state:
        payload = qcore.load_json(args.state)
        n = int(np.prod(payload.get("dims", [])))
        if len(payload.get("entries", [])) == n:
            rho = qcore.pure_density(qcore.state_from_dict(payload))
        else:
            op = qcore.operator_from_dict(payload)
            rho = qcore.DensityMatrix(op.dims, op.mat)
        parties = len(rho.dims)
    else:
        parties = args.parties
        rho = _preset_state(args)
    povms = _build_povms(args, parties)
    counts = sampler.simulate_counts(rho, povms, shots=args.shots, seed=args.seed)
    sampler.save_counts(args.out, counts)
    print(f"simulated {args.shots} shots over {parties} parties -> {args.out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    _, l_op, c_op = _operator_pair(args)
    pts = sampler.scatter(l_op, c_op, n=args.n, seed=args.seed)
    with open(args.out, "w") as fh:
        fh.write("c,l\n")
        for c, l in pts:
            fh.write(f"{c:.12g},{l:.12g}\n")
    print(f"sampled {args.n} product states -> {args.out}")
    return EXIT_OK


def cmd_multiparty(args) -> int:
    if not 2 <= args.agents <= 6:
        raise ValueError("the bounds table covers 2 <= N <= 6 agents")
    rows = [
        multipartite.closed_form_bound(args.x, args.agents, m)
        for m in range(1, args.agents + 1)
    ]
    with open(args.out, "w") as fh:
        fh.write("N,M_k,g\n")
        for r in rows:
            fh.write(f"{r.n_agents},{r.largest_block},{r.g:.12g}\n")
    print(f"bounds table for N={args.agents} -> {args.out}")
    if args.partition:
        part = multipartite.Partition.parse(args.partition)
        res = multipartite.numeric_partition_bound(
            args.x, args.agents, part, c=args.c, theta=args.theta, settings=_settings(args)
        )
        payload = {
            "partition": part.label,
            "normalized": multipartite.Partition.format_blocks(part.blocks),
            "c": args.c,
            "bound": res.value,
            "converged": res.converged,
        }
        print(json.dumps(_fmt(payload), sort_keys=True))
        if not res.converged:
            raise UnreliableComputation("partition bound did not converge")
    return EXIT_OK


def cmd_tighten(args) -> int:
    counts = sampler.load_counts(args.counts)
    povms = _build_povms(args, counts.n_parties)
    decomposition = []
    for term in args.decomposition.split(";"):
        beta, _, pair = term.partition(":")
        decomposition.append((_number(beta), _indices(pair)))
    result = witness.tighten(
        povms, decomposition, counts, args.constraint, settings=_settings(args)
    )
    payload = {
        "c": result.c,
        "g_of_c": result.g_of_c,
        "old_bound": result.old_bound,
        "improvement": result.improvement,
        "constraint": list(args.constraint),
    }
    _write_json(Path(args.out), payload)
    print(f"tighten: {result.old_bound:.12g} -> {result.g_of_c:.12g} (improvement {result.improvement:.12g})")
    return EXIT_OK


def cmd_bound(args) -> int:
    settings = _settings(args)
    if args.L or args.C:
        if not (args.L and args.C):
            raise ValueError("give both --L and --C operator files")
        l_op = qcore.operator_from_dict(qcore.load_json(args.L))
        c_op = qcore.operator_from_dict(qcore.load_json(args.C))
    else:
        _, l_op, c_op = _operator_pair(args)
    test = witness.TestOperator(l_op)
    if args.c is None:
        res = witness.sew_bound(test, direction=args.direction, settings=settings)
        kind = f"sew-{args.direction}"
    else:
        res = witness.constrained_bound(test, witness.ConstraintSpec(c_op, args.c), settings=settings)
        kind = f"constrained(c={args.c:.12g})"
    payload = {
        "kind": kind,
        "value": res.value,
        "feasibility_residual": res.feasibility_residual,
        "restarts_used": res.restarts_used,
        "converged": res.converged,
        "maximizer": [qcore.state_to_dict(f) for f in res.maximizer.factors],
        "settings": settings.as_dict(),
    }
    _write_json(Path(args.out), payload)
    print(f"{kind}: {res.value:.12g} (converged={res.converged})")
    if not res.converged:
        raise UnreliableComputation("bound optimization did not converge")
    return EXIT_OK


def _add_device_flags(p, parties_flag=False):
    p.add_argument("--x", type=_number, default=2.0 / 3.0, help="device parameter x in (0,1); fractions like 2/3 accepted")
    p.add_argument("--theta", type=_number, default=0.0, help="device phase theta")
    p.add_argument("--povm", help="POVM JSON file overriding --x/--theta")
    if parties_flag:
        p.add_argument("--parties", type=int, default=2, help="number of parties")


def _add_pair_flags(p):
    p.add_argument("--c-indices", type=_indices, default=(1, 1), help="constraint outcome pair, 1-based (default 1,1)")
    p.add_argument("--l-indices", type=_indices, default=(2, 2), help="test outcome pair, 1-based (default 2,2)")


def _add_opt_flags(p):
    p.add_argument("--restarts", type=int, default=None, help="multistart restarts override")
    p.add_argument("--threads", type=int, default=None, help="worker threads for restarts")
    p.add_argument("--seed", type=int, default=None, help="seed for optimizer restarts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uewkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curve", help="compute a separability curve")
    _add_device_flags(p)
    _add_pair_flags(p)
    _add_opt_flags(p)
    p.add_argument("--grid", type=int, default=201, help="number of grid points")
    p.add_argument("--out", default="curve.csv", help="output CSV (summary JSON alongside)")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("certify", help="entanglement verdict from measured counts")
    p.add_argument("--counts", required=True, help="counts JSON file")
    p.add_argument("--curve", required=True, help="curve CSV from the curve command")
    p.add_argument("--sigma", type=_number, default=3.0, help="error-bar level k (default 3)")
    _add_pair_flags(p)
    p.add_argument("--out", default="verdict.json")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("simulate", help="simulate measurement counts for a state")
    _add_device_flags(p, parties_flag=True)
    p.add_argument("--state", help="state JSON file (density matrix or pure state)")
    p.add_argument("--preset", choices=["optimal-entangled", "maximally-mixed", "bell"])
    p.add_argument("--c", type=_number, default=0.0, help="constraint value for the optimal-entangled preset")
    p.add_argument("--shots", type=lambda s: int(float(s)), default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="counts.json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sample", help="scatter of (c, l) over random product states")
    _add_device_flags(p)
    _add_pair_flags(p)
    p.add_argument("--n", type=lambda s: int(float(s)), default=10**5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="scatter.csv")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("multiparty", help="multipartite bounds table and partition bounds")
    _add_device_flags(p)
    _add_opt_flags(p)
    p.add_argument("--agents", type=int, required=True, help="number of agents N (2..6)")
    p.add_argument("--partition", help='partition like "1,2|3" for a numeric bound')
    p.add_argument("--c", type=_number, default=0.0, help="constraint value for the partition bound")
    p.add_argument("--out", default="bounds.csv")
    p.set_defaults(func=cmd_multiparty)

    p = sub.add_parser("tighten", help="tighten a witnessing bound from measured counts")
    _add_device_flags(p)
    _add_opt_flags(p)
    p.add_argument("--counts", required=True)
    p.add_argument("--decomposition", default="1:2,2", help='terms "beta:i,j" separated by ";"')
    p.add_argument("--constraint", type=_indices, default=(1, 1), help="constraint outcome pair")
    p.add_argument("--out", default="tighten.json")
    p.set_defaults(func=cmd_tighten)

    p = sub.add_parser("bound", help="single separable bound (unconstrained or at fixed c)")
    _add_device_flags(p)
    _add_pair_flags(p)
    _add_opt_flags(p)
    p.add_argument("--c", type=_number, default=None, help="constraint value; omit for the unconstrained bound")
    p.add_argument("--direction", choices=["sup", "inf"], default="sup")
    p.add_argument("--L", help="test operator JSON file")
    p.add_argument("--C", help="constraint operator JSON file")
    p.add_argument("--out", default="bound.json")
    p.set_defaults(func=cmd_bound)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UnreliableComputation as exc:
        print(f"unreliable: {exc}", file=sys.stderr)
        return EXIT_UNRELIABLE
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
