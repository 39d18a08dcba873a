"""Command-line entry point ``bdsep``.

Verbs: ``rates``, ``density``, ``exact``, ``correlations``, ``simulate``,
``dual`` and ``experiment``.  ``--seed``, ``--threads`` and ``--out`` are
accepted before or after the verb; when ``--out`` is missing, output goes to
``$BDSEP_OUT/<verb>`` (``./bdsep_out/<verb>`` if the variable is unset).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .core import DegreePreservingSpec, FlipBoundarySpec, ModelError, ModelSpec, load_spec
from .harness import ConfigError, ExperimentConfig, default_out_root, run_experiment


def _out_dir(args, verb) -> Path:
    out = Path(args.out) if args.out else default_out_root() / verb
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path, header, rows, comments=None):
    with open(path, "w", newline="") as fh:
        for k, v in (comments or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _stamp(spec: ModelSpec | None, seed):
    return {"spec_hash": spec.digest() if spec is not None else "none", "seed": seed,
            "version": __version__}


def _parse_number(x):
    if isinstance(x, str):
        return Fraction(x)
    return x


# --- verbs ----------------------------------------------------------------------------

def cmd_rates(args) -> int:
    from .rates import (DegreeViolation, NegativityError, classify_ergodicity, compose_spec,
                        decompose_rates, subset_coefficients)
    from .core import boundary_from_dict
    doc = json.loads(Path(args.file).read_text())
    if "table" in doc:
        raw = doc["table"]
        exact = any(isinstance(x, str) for row in raw for x in row)
        table = np.array([[_parse_number(x) for x in row] for row in raw],
                         dtype=object if exact else float)
    else:
        spec = boundary_from_dict(doc)
        if not isinstance(spec, DegreePreservingSpec):
            print(json.dumps({"error": "spec", "message": "not a degree-preserving spec"}))
            return 2
        table = compose_spec(spec)
    p = table.shape[0] - 1
    try:
        R = subset_coefficients(table)
        spec = decompose_rates(R)
    except DegreeViolation as exc:
        out = {"error": "degree", "violations": [
            {"site": int(j), "subset": [int(x) for x in A]} for j, A in exc.violations]}
        print(json.dumps(out, indent=2))
        return 1
    except NegativityError as exc:
        print(json.dumps({"error": "negativity", "message": str(exc)}, indent=2))
        return 1

    def show(arr):
        return [[str(v) for v in row] for row in arr] if np.ndim(arr) == 2 else [str(v) for v in arr]

    cls = classify_ergodicity(spec)
    out = {"p": p, "sites": list(range(-p, 1)), "r": show(spec.r), "alpha": show(spec.alpha),
           "c": show(spec.c), "a": show(spec.a), "ergodicity": cls.tag}
    print(json.dumps(out, indent=2))
    return 0


def cmd_density(args) -> int:
    from .density import solve_finite_one_point
    spec = load_spec(args.spec, args.N)
    if spec.kind != 1:
        print("density: the closed one-point system exists for the degree-preserving model only; "
              "use `exact` or `simulate` for other models", file=sys.stderr)
        return 2
    prof = solve_finite_one_point(spec.boundary, spec.N)
    out = Path(args.out) if args.out else default_out_root() / "density" / "profile.csv"
    if out.suffix != ".csv":
        out = out / "profile.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, ["site", "rho"], [[int(k), repr(float(v))] for k, v in zip(prof.sites, prof.values)],
               _stamp(spec, None))
    print(out)
    return 0


def cmd_exact(args) -> int:
    from .exact import observable_correlation, observable_density, solve_exact
    spec = load_spec(args.spec, args.N, args.ell)
    mu = solve_exact(spec)
    out = _out_dir(args, "exact")
    obs = [o.strip() for o in args.observables.split(",") if o.strip()]
    stamp = _stamp(spec, None)
    for o in obs:
        if o == "density":
            prof = observable_density(mu)
            _write_csv(out / "density.csv", ["site", "rho"],
                       [[int(k), repr(float(v))] for k, v in zip(prof.sites, prof.values)], stamp)
        elif o == "correlation":
            cor = observable_correlation(mu)
            rows = []
            for j in cor.sites:
                for k in cor.sites:
                    if k >= j:
                        for s in (1, -1):
                            rows.append([s, int(j), int(k), repr(cor.phi(s, int(j), int(k)))])
            _write_csv(out / "correlation.csv", ["sigma", "j", "k", "phi"], rows, stamp)
        else:
            print(f"exact: unknown observable {o!r}", file=sys.stderr)
            return 2
    print(json.dumps({"out": str(out), "residual": mu.residual, "states": len(mu.weights)}))
    return 0


def _model2_inputs(spec: ModelSpec, left: str):
    from .exact import PRACTICAL_SITES, observable_correlation, observable_density, solve_exact
    from .correlations import left_data_from_exact
    if spec.n_sites <= PRACTICAL_SITES:
        mu = solve_exact(spec)
        rho1 = observable_density(mu)[1]
        data = left_data_from_exact(observable_correlation(mu)) if left == "exact" else None
        return rho1, data
    from .dual import perfect_sample_alpha
    est = perfect_sample_alpha(spec.boundary, spec.N, 20000, 0)
    print(f"correlations: lattice too large for exact left data; rho(1) = {est.mean:.4f} "
          f"+/- {est.stderr:.4f} from the perfect sampler and zero boundary data", file=sys.stderr)
    return est.mean, None


def cmd_correlations(args) -> int:
    from .correlations import (assemble_system_model1, assemble_system_model2, mc_dual_walk,
                               solve_correlations)
    from .density import solve_finite_one_point
    spec = load_spec(args.spec, args.N)
    if spec.kind != args.model:
        print(f"correlations: --model {args.model} does not match the spec file (model {spec.kind})",
              file=sys.stderr)
        return 2
    if args.model == 1:
        rho = solve_finite_one_point(spec.boundary, spec.N).values
        system = assemble_system_model1(spec.boundary, spec.N, rho)
    else:
        rho1, data = _model2_inputs(spec, args.left_data)
        system = assemble_system_model2(spec.N, rho1, spec.beta, data)
    out = _out_dir(args, "correlations")
    stamp = _stamp(spec, args.seed)
    header = ["sigma", "j", "k", "phi", "stderr"]
    if args.mode in ("solve", "both"):
        field = solve_correlations(system)
        rows = [[s, j, k, repr(float(v)), 0.0] for (s, j, k), v in zip(system.states, field.values)]
        _write_csv(out / "correlations_solve.csv", header, rows, stamp)
    if args.mode in ("mc", "both"):
        n = len(system.states)
        picks = np.unique(np.linspace(0, n - 1, min(args.starts, n)).astype(int))
        seeds = np.random.SeedSequence(args.seed).spawn(len(picks))

        def one(i):
            s, j, k = system.states[picks[i]]
            est, err = mc_dual_walk(system, (s, j, k), args.samples, seeds[i])
            return [s, j, k, repr(est), repr(err)]

        with ThreadPoolExecutor(max(1, args.threads)) as pool:
            rows = list(pool.map(one, range(len(picks))))
        _write_csv(out / "correlations_mc.csv", header, rows, stamp)
    print(out)
    return 0


def cmd_simulate(args) -> int:
    from .kinetic import estimate_density, write_snapshots
    spec = load_spec(args.spec, args.N, args.ell)
    seeds = np.random.SeedSequence(args.seed).spawn(args.samples)

    def one(i):
        return estimate_density(spec, burn_in=args.burn_in, batches=args.batches,
                                batch_len=args.batch_len, seed=seeds[i], mode=args.mode)

    with ThreadPoolExecutor(max(1, args.threads)) as pool:
        ests = list(pool.map(one, range(args.samples)))
    means = np.array([e.mean for e in ests])
    if len(ests) > 1:
        mean = means.mean(axis=0)
        err = means.std(axis=0, ddof=1) / np.sqrt(len(ests))
    else:
        mean, err = ests[0].mean, ests[0].stderr
    out = _out_dir(args, "simulate")
    stamp = _stamp(spec, args.seed)
    _write_csv(out / "density.csv", ["site", "rho", "stderr"],
               [[int(k), repr(float(m)), repr(float(e))] for k, m, e in zip(spec.sites, mean, err)], stamp)
    if args.snapshots:
        write_snapshots(out / "snapshots.bin", [e.burn_in + e.batches * e.batch_len for e in ests],
                        [e.final for e in ests], spec.n_sites)
    summary = {**stamp, "replicas": len(ests), "burn_in": ests[0].burn_in,
               "batches": ests[0].batches, "batch_len": ests[0].batch_len, "mode": args.mode}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(out)
    return 0


def cmd_dual(args) -> int:
    from .dual import dual_statistics, perfect_sample_alpha, run_revealment, write_records
    spec = load_spec(args.spec, args.N)
    if not isinstance(spec.boundary, FlipBoundarySpec):
        print("dual: the revealment process is defined for the flip model", file=sys.stderr)
        return 2
    b = spec.boundary
    if not b.weak_dependence:
        print("dual: weak-dependence condition fails; runs are capped", file=sys.stderr)
    out = _out_dir(args, "dual")
    stamp = _stamp(spec, args.seed)
    s_alpha, s_stats, s_rec = np.random.SeedSequence(args.seed).spawn(3)
    est = perfect_sample_alpha(b, spec.N, args.samples, s_alpha)
    summary = {**stamp, "N": spec.N, "alpha_hat": est.mean, "stderr": est.stderr,
               "samples": est.n_samples, "capped": est.n_capped}
    if args.stats:
        ells = [l for l in (8, 16, 32, 64) if l <= spec.N - 1] or [spec.N - 1]
        st = dual_statistics(b, spec.N, args.samples, s_stats, ells=ells)
        summary["stats"] = st.as_dict()
        _write_csv(out / "survival.csv", ["t", "p_T_gt_t"],
                   [[repr(float(t)), repr(float(p))] for t, p in zip(st.t_grid, st.survival)], stamp)
        _write_csv(out / "range.csv", ["ell", "p_max_site_ge_ell", "stderr"],
                   [[int(l), repr(float(p)), repr(float(e))]
                    for l, p, e in zip(st.ells, st.range_tail, st.range_stderr)], stamp)
    if args.records:
        seeds = s_rec.spawn(args.records)
        recs = [run_revealment(b, spec.N, seeds[i], full_marks=True)[1] for i in range(args.records)]
        write_records(out / "records.bin", recs)
    (out / "dual.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps({k: summary[k] for k in ("N", "alpha_hat", "stderr", "samples")}))
    return 0


def cmd_experiment(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads:
        cfg.threads = args.threads
    rep = run_experiment(cfg, Path(args.out) if args.out else None)
    status = "PASS" if rep.passed else "FAIL"
    print(f"{status} {rep.kind}: " + ", ".join(str(f) for f in rep.files))
    return 0 if rep.passed else 1


# --- parser --------------------------------------------------------------------------------

def _common(p, top=False):
    d = None if top else argparse.SUPPRESS
    p.add_argument("--seed", type=int, default=d, help="master seed")
    p.add_argument("--threads", type=int, default=d, help="worker threads for replicas")
    p.add_argument("--out", default=d, help="output directory (file for `density`)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bdsep", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    _common(ap, top=True)
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("rates", help="subset-coefficient analysis of left rates")
    p.add_argument("action", choices=["decompose"])
    p.add_argument("file", help="JSON with a 'table' or a degree-preserving spec")
    _common(p)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("density", help="finite-N densities of the degree-preserving model")
    p.add_argument("--spec", required=True)
    p.add_argument("--N", type=int)
    _common(p)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("exact", help="brute-force stationary observables")
    p.add_argument("--spec", required=True)
    p.add_argument("--N", type=int)
    p.add_argument("--ell", type=float)
    p.add_argument("--observables", default="density")
    _common(p)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("correlations", help="two-point functions by sparse solve or absorbed walks")
    p.add_argument("--model", type=int, choices=[1, 2], required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--N", type=int)
    p.add_argument("--mode", choices=["solve", "mc", "both"], default="solve")
    p.add_argument("--samples", type=int, default=2000, help="walks per start (mc)")
    p.add_argument("--starts", type=int, default=20, help="number of start states (mc)")
    p.add_argument("--left-data", choices=["exact", "zero"], default="exact",
                   help="boundary column for the flip model")
    _common(p)
    p.set_defaults(func=cmd_correlations)

    p = sub.add_parser("simulate", help="forward Monte Carlo density estimates")
    p.add_argument("--spec", required=True)
    p.add_argument("--N", type=int)
    p.add_argument("--ell", type=float)
    p.add_argument("--samples", type=int, default=1, help="independent replicas")
    p.add_argument("--batches", type=int, default=50)
    p.add_argument("--batch-len", type=float)
    p.add_argument("--burn-in", type=float)
    p.add_argument("--mode", choices=["event", "graphical"], default="event")
    p.add_argument("--snapshots", action="store_true", help="write final configurations")
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dual", help="perfect sampling through the revealment process")
    p.add_argument("--spec", required=True)
    p.add_argument("--N", type=int)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--stats", action="store_true")
    p.add_argument("--records", type=int, default=0, help="persist this many full-mark records")
    _common(p)
    p.set_defaults(func=cmd_dual)

    p = sub.add_parser("experiment", help="run a JSON experiment config")
    p.add_argument("config")
    _common(p)
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is None:
        args.threads = 1
    try:
        return args.func(args)
    except (ModelError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
