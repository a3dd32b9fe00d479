"""Command-line front end: run experiments, sweeps and instance inspection."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from importlib import metadata

import numpy as np

from . import fixtures
from .binary import alpha_min_binary
from .errors import PersuadeError
from .general import alpha_min_general, vertex_safe_scheme
from .geometry import delta_mu0, region_vertices, relevant_actions, safe_region, strict_interior_feasible
from .receiver import default_action, scheme_values
from .sim import ALGOS, ENV_TIE_TOL, aggregate, benchmark_value, default_grid, run_trials
from .types import BiasInterval, BinaryInstance, Instance, binary_as_general, load_instance

FIXTURES = {
    "binary": lambda: fixtures.binary_instance(),
    "fig2": lambda: fixtures.fig2_instance(),
    "example1": lambda: fixtures.example1_instance(),
}


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # running from a source tree
        return "0+unknown"


class UsageError(Exception):
    pass


def _parse_binary(text: str) -> BinaryInstance:
    try:
        mu0, q = (float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--binary expects mu0,q_hat (got {text!r})") from None
    return BinaryInstance(mu0, q)


def _load(args):
    """Returns (instance for the algorithm, general Instance, binary or None)."""
    if args.binary and args.instance:
        raise UsageError("give either --binary or --instance, not both")
    if args.binary:
        b = _parse_binary(args.binary)
        return b, binary_as_general(b), b
    if args.instance:
        if not os.path.exists(args.instance) and args.instance in FIXTURES:
            inst = FIXTURES[args.instance]()
        else:
            inst = load_instance(args.instance)
        return inst, inst, None
    raise UsageError("an instance is required (--binary mu0,q_hat or --instance path.json)")


def _check_algo(algo, binary):
    if algo in ("bs", "se", "sej") and binary is None:
        raise UsageError(f"--algo {algo} needs --binary")


def committed_value(series, inst: Instance, alpha: float) -> float:
    """Expected sender value of the trial's committed scheme at the true bias."""
    s = series.trace.committed
    if s is None:
        return float("nan")
    allowed = relevant_actions(BiasInterval(alpha, alpha), inst)
    return float(scheme_values(s.weights, s.posteriors, alpha, inst, allowed)[0][()])


def _write_csv(path, header, rows):
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{x:.10g}" if isinstance(x, float) else x for x in r])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _stem(path):
    return os.path.splitext(path)[0] if path not in (None, "-") else None


# ---------------------------------------------------------------------------
# run


def cmd_run(args) -> int:
    algo_inst, inst, binary = _load(args)
    _check_algo(args.algo, binary)
    T = int(args.horizon)
    if T < 0 or args.seeds < 1:
        raise UsageError("--horizon must be >= 0 and --seeds >= 1")
    grid = default_grid(T, args.points) if T else np.zeros(0, dtype=np.int64)
    series = run_trials(args.algo, T, algo_inst, args.alpha, args.seeds, master=args.master_seed,
                        regret_form=args.regret_form, grid=grid)
    rows = []
    if T:
        ag = aggregate(series, grid)
        rows = [(int(t), float(m), float(lo), float(hi)) for t, m, lo, hi in zip(ag.rounds, ag.mean, ag.ci_lo, ag.ci_hi)]
    _write_csv(args.out, ["round", "mean_regret", "ci_lo", "ci_hi"], rows)
    stem = _stem(args.out)
    if stem:
        first = series[0].trace
        meta = {
            "version": _version(),
            "algo": args.algo,
            "instance": inst.to_json() if binary is None else {"binary": {"mu0": binary.mu0, "q_hat": binary.q_hat}},
            "alpha": args.alpha,
            "horizon": T,
            "seeds": args.seeds,
            "master_seed": args.master_seed,
            "regret_form": args.regret_form,
            "opt": series[0].opt,
            "final_regret_mean": float(np.mean([s.final for s in series])),
            "committed_interval": first.flags.get("committed_interval"),
            "committed_param": first.committed_param,
            "receiver_tie_tol": ENV_TIE_TOL,
        }
        with open(stem + ".meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
        if first.committed is not None:
            with open(stem + ".scheme.json", "w") as fh:
                json.dump(first.committed.to_json(), fh, indent=2)
    return 0


# ---------------------------------------------------------------------------
# sweep


def _parse_sweep(text: str):
    """axis=lo:hi:step (step 'xK' multiplies) or axis=v1,v2,..."""
    if "=" not in text:
        raise UsageError(f"--sweep expects axis=lo:hi:step (got {text!r})")
    axis, spec = text.split("=", 1)
    if axis not in ("alpha", "horizon", "interval"):
        raise UsageError(f"sweep axis must be alpha, horizon or interval (got {axis!r})")
    try:
        if ":" in spec:
            lo, hi, step = spec.split(":")
            lo, hi = float(lo), float(hi)
            if step.startswith("x"):
                f = float(step[1:])
                if f <= 1:
                    raise ValueError
                n = int(math.floor(math.log(hi / lo) / math.log(f) + 1e-9)) + 1
                pts = [lo * f ** i for i in range(n)]
            else:
                st = float(step)
                if st <= 0:
                    raise ValueError
                n = int(math.floor((hi - lo) / st + 1e-9)) + 1
                pts = [round(lo + i * st, 12) for i in range(n)]
        else:
            pts = [float(x) for x in spec.split(",")]
    except ValueError:
        raise UsageError(f"bad sweep range {spec!r}") from None
    return axis, pts


def cmd_sweep(args) -> int:
    algo_inst, inst, binary = _load(args)
    axis, pts = _parse_sweep(args.sweep)
    header = ["point", "final_regret", "final_interval_lo", "final_interval_hi", "committed_value", "opt", "gap"]
    rows = []
    if axis == "interval":
        opt = benchmark_value(inst, args.alpha)
        for L in pts:
            lo, hi = max(1e-9, args.alpha - L / 2), min(1.0, args.alpha + L / 2)
            vs = vertex_safe_scheme(BiasInterval(lo, hi), inst)
            rows.append((L, "", lo, hi, vs.value, opt, opt - vs.value))
    else:
        _check_algo(args.algo, binary)
        for p in pts:
            alpha = p if axis == "alpha" else args.alpha
            T = int(round(p)) if axis == "horizon" else int(args.horizon)
            series = run_trials(args.algo, T, algo_inst, alpha, args.seeds, master=args.master_seed,
                                regret_form=args.regret_form)
            finals = [s.final for s in series]
            ivs = [s.trace.flags.get("committed_interval") or (float("nan"), float("nan")) for s in series]
            cv = float(np.mean([committed_value(s, inst, alpha) for s in series]))
            opt = series[0].opt
            rows.append((p, float(np.mean(finals)), float(np.mean([i[0] for i in ivs])),
                         float(np.mean([i[1] for i in ivs])), cv, opt, opt - cv))
    _write_csv(args.out, header, rows)
    return 0


# ---------------------------------------------------------------------------
# inspect


def _fmt(v) -> str:
    v = np.where(np.abs(np.asarray(v, dtype=float)) < 5e-7, 0.0, v)  # no "-0.000000"
    return "(" + ", ".join(f"{x:.6f}" for x in v) + ")"


def cmd_inspect(args) -> int:
    _, inst, binary = _load(args)
    out = []
    a0 = default_action(inst)
    out.append(f"states: {list(inst.states)}  actions: {list(inst.actions)}")
    out.append(f"prior: {_fmt(inst.prior)}")
    out.append(f"default action: {inst.actions[a0]} (index {a0})")
    if binary is not None:
        out.append(f"alpha_min = {alpha_min_binary(binary):.6f}")
    else:
        out.append(f"alpha_min = {alpha_min_general(inst):.6f}")
    out.append(f"delta_mu0 = {delta_mu0(inst):.6f}")
    for text in args.interval or []:
        try:
            lo, hi = (float(x) for x in text.split(","))
            J = BiasInterval(lo, hi)
        except ValueError:
            raise UsageError(f"--interval expects lo,hi (got {text!r})") from None
        rel = relevant_actions(J, inst)
        out.append(f"J = [{lo:.4f}, {hi:.4f}]: relevant actions {[inst.actions[a] for a in rel]}")
        for a in range(inst.n_actions):
            name = inst.actions[a]
            if not strict_interior_feasible(a, J, inst):
                out.append(f"  {name}: infeasible (no strictly safe posterior on J)")
                continue
            V = region_vertices(safe_region(a, J, inst))
            out.append(f"  {name}: feasible, {len(V)} vertices")
            for v in V:
                out.append(f"    {_fmt(v)}")
    print("\n".join(out))
    return 0


def cmd_fixture(args) -> int:
    inst = FIXTURES[args.name]()
    text = json.dumps(inst.to_json(), indent=2)
    if args.out in (None, "-"):
        print(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return 0


# ---------------------------------------------------------------------------


def _common(p, algo=True):
    p.add_argument("--binary", help="binary instance as mu0,q_hat")
    p.add_argument("--instance", help="instance JSON file (or a fixture name: binary, fig2, example1)")
    if algo:
        p.add_argument("--algo", choices=ALGOS, default="se")
        p.add_argument("--alpha", type=float, required=True, help="true receiver bias")
        p.add_argument("--horizon", type=float, default=1e5)
        p.add_argument("--seeds", type=int, default=1)
        p.add_argument("--master-seed", type=int, default=42)
        p.add_argument("--regret-form", choices=("expected", "realized"), default="expected")
        p.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="persuade", description="Learning a biased receiver's bias by safe exploration.")
    ap.add_argument("--version", action="version", version=_version())
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("run", help="run an algorithm over seeds and write the mean regret curve")
    _common(p)
    p.add_argument("--points", type=int, default=200, help="grid points of the regret curve")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", help="one summary row per grid point")
    _common(p)
    p.add_argument("--sweep", required=True, help="axis=lo:hi:step with axis in {alpha,horizon,interval}")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("inspect", help="print default action, alpha_min, delta_mu0 and regions")
    _common(p, algo=False)
    p.add_argument("--interval", action="append", help="bias interval lo,hi (repeatable)")
    p.set_defaults(func=cmd_inspect)
    p = sub.add_parser("fixture", help="write a built-in instance as JSON")
    p.add_argument("name", choices=sorted(FIXTURES))
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_fixture)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, PersuadeError, ValueError, OSError) as exc:
        print(f"persuade: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
