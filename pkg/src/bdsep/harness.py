"""Experiment orchestration: JSON configs, sweeps, fits and report files.

A config is a JSON object::

    {"kind": "hydrostatic_m1", "N": [100, 200, 400, 800], "seed": 1,
     "spec": "spec.json", "out": "runs/m1"}

``spec`` is a path (relative to the config file) or an inline spec object;
without it a random spec of the right model is drawn from ``seed``.  Each run
writes ``<kind>.csv``, ``<kind>.json`` and ``<kind>.svg`` into the output
directory, every one stamped with the spec hash, seed and package version.
"""

from __future__ import annotations

import csv
import io
import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import (DegreePreservingSpec, FlipBoundarySpec, ModelError, ModelSpec,
                   SpeededBoundarySpec, boundary_from_dict, random_degree_preserving,
                   random_flip_spec, random_speeded_spec)
from .fitting import FitResult, fit_power_law

OUT_ENV = "BDSEP_OUT"
DEFAULT_OUT = "bdsep_out"

KINDS = {
    "hydrostatic_m1": {"model": 1, "sweep": "N"},
    "hydrostatic_m2": {"model": 2, "sweep": "N"},
    "hydrostatic_m3": {"model": 3, "sweep": "N"},
    "correlation_decay": {"model": 1, "sweep": "N"},
    "dual_bounds": {"model": 2, "sweep": "ell"},
    "speeded_scaling": {"model": 3, "sweep": "ell"},
    "rate_roundtrip": {"model": 1, "sweep": None},
}

DEFAULTS = {
    "hydrostatic_m1": {"N": [100, 200, 400, 800]},
    "hydrostatic_m2": {"N": [6, 8, 10], "samples": 10000},
    "hydrostatic_m3": {"N": [8, 16, 32, 64]},
    "correlation_decay": {"N": [50, 100, 200]},
    "dual_bounds": {"N": [129], "ell": [8, 16, 32, 64], "samples": 10000},
    "speeded_scaling": {"N": [8], "ell": [1, 4, 16, 64, 256]},
    "rate_roundtrip": {"samples": 100, "p": 2},
}

ALLOWED = {"kind", "spec", "N", "ell", "samples", "seed", "out", "p", "threads"}


def default_out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


class ConfigError(ValueError):
    pass


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


@dataclass
class ExperimentConfig:
    kind: str
    N: list = field(default_factory=list)
    ell: list = field(default_factory=list)
    samples: int = 0
    seed: int = 0
    out: Path | None = None
    spec: object = None
    p: int = 2
    threads: int = 1
    source: str = "<config>"

    @classmethod
    def from_text(cls, text: str, source: str = "<config>", base: Path | None = None
                  ) -> ExperimentConfig:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None

        def fail(key, msg):
            line = _line_of(text, key) if key else None
            where = f"{source}:{line}" if line else source
            raise ConfigError(f"{where}: {msg}")

        if not isinstance(raw, dict):
            fail(None, "config must be a JSON object")
        for key in raw:
            if key not in ALLOWED:
                fail(key, f"unknown field {key!r}")
        kind = raw.get("kind")
        if kind is None:
            fail(None, "missing field 'kind'")
        if kind not in KINDS:
            fail("kind", f"unknown experiment kind {kind!r}; expected one of {sorted(KINDS)}")
        vals = dict(DEFAULTS[kind])
        vals.update({k: v for k, v in raw.items() if k != "kind"})
        for key in ("N", "ell"):
            if key not in vals:
                continue
            seq = vals[key]
            if not isinstance(seq, list) or not seq:
                fail(key, f"{key!r} must be a nonempty list")
            if not all(isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0 for x in seq):
                fail(key, f"{key!r} entries must be positive numbers")
            if any(b <= a for a, b in zip(seq, seq[1:])):
                fail(key, f"{key!r} must be strictly increasing")
        for key in ("samples", "seed", "p", "threads"):
            if key in vals and (not isinstance(vals[key], int) or isinstance(vals[key], bool)
                                or vals[key] < (0 if key == "seed" else 1)):
                fail(key, f"{key!r} must be a {'non-negative' if key == 'seed' else 'positive'} integer")
        spec = vals.get("spec")
        if spec is not None:
            try:
                if isinstance(spec, str):
                    path = Path(spec)
                    if base is not None and not path.is_absolute():
                        path = base / path
                    spec = json.loads(path.read_text())
                spec = boundary_from_dict(spec)
            except (OSError, json.JSONDecodeError, ModelError, KeyError, TypeError, ValueError) as exc:
                fail("spec", f"invalid spec: {exc}")
            model = {DegreePreservingSpec: 1, FlipBoundarySpec: 2, SpeededBoundarySpec: 3}[type(spec)]
            if model != KINDS[kind]["model"]:
                fail("spec", f"{kind} needs a model-{KINDS[kind]['model']} spec, got model {model}")
        out = vals.get("out")
        if out is not None:
            out = Path(out)
            if base is not None and not out.is_absolute():
                out = base / out
        return cls(kind, [int(x) for x in vals.get("N", [])], [float(x) for x in vals.get("ell", [])],
                   int(vals.get("samples", 0)), int(vals.get("seed", 0)), out, spec,
                   int(vals.get("p", 2)), int(vals.get("threads", 1)), source)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        path = Path(path)
        return cls.from_text(path.read_text(), str(path), path.parent)

    def boundary(self):
        if self.spec is not None:
            return self.spec
        if self.kind == "rate_roundtrip":
            return None
        rng = np.random.default_rng(self.seed)
        model = KINDS[self.kind]["model"]
        if model == 1:
            return random_degree_preserving(rng, self.p)
        if model == 2:
            return random_flip_spec(rng, 3, 0.6, 0.4, 0.1)
        return random_speeded_spec(rng, self.p)


@dataclass
class Report:
    kind: str
    passed: bool
    summary: dict
    header: list
    rows: list
    files: list = field(default_factory=list)


# --- experiment kinds -----------------------------------------------------------------

def _hydrostatic_m1(cfg, spec):
    from .density import (interpolation_defect, macroscopic_profile, solve_finite_one_point,
                          solve_left_density)
    from .kinetic import profile_error
    rho0 = solve_left_density(spec)[0]
    ubar = macroscopic_profile(rho0, spec.beta)
    rows = []
    for N in cfg.N:
        prof = solve_finite_one_point(spec, N)
        err = abs(prof[0] - rho0)
        _, l1 = profile_error(prof, ubar, N=N)
        rows.append([N, prof[0], rho0, err, interpolation_defect(prof, spec.beta, N), l1])
    fit = fit_power_law([(r[0], r[3]) for r in rows])
    max_defect = max(r[4] for r in rows)
    passed = fit.slope <= -0.9 and fit.r2 >= 0.99 and max_defect <= 1e-12
    return (["N", "rho_N0", "rho0", "error", "interpolation_defect", "profile_l1"], rows,
            {"fit": fit.__dict__, "max_interpolation_defect": max_defect,
             "thresholds": {"slope": -0.9, "r2": 0.99, "interpolation": 1e-12}}, passed,
            ("N", "|rho_N(0) - rho(0)|", [r[0] for r in rows], [r[3] for r in rows], fit))


def _hydrostatic_m2(cfg, spec):
    from .dual import perfect_sample_alpha
    from .exact import PRACTICAL_SITES, observable_density, solve_exact
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(cfg.N))

    def point(i):
        N = cfg.N[i]
        est = perfect_sample_alpha(spec, N, cfg.samples, seeds[i])
        exact = float("nan")
        defect = float("nan")
        if N - 1 <= PRACTICAL_SITES:
            prof = observable_density(solve_exact(ModelSpec(spec, N)))
            exact = prof[1]
            k = np.arange(1, N)
            line = (N - k) / (N - 1) * exact + (k - 1) / (N - 1) * spec.beta
            defect = float(np.max(np.abs(prof.values - line)))
        z = (est.mean - exact) / est.stderr if np.isfinite(exact) else float("nan")
        return [N, est.mean, est.stderr, exact, z, defect]

    rows = _map(cfg, point, range(len(cfg.N)))
    zs = [abs(r[4]) for r in rows if np.isfinite(r[4])]
    passed = all(z <= 3 for z in zs) and all(r[5] <= 1e-10 for r in rows if np.isfinite(r[5]))
    return (["N", "alpha_hat", "stderr", "exact_rho1", "z", "interpolation_defect"], rows,
            {"max_abs_z": max(zs) if zs else None, "thresholds": {"z": 3.0, "interpolation": 1e-10}},
            passed, ("N", "alpha_hat", [r[0] for r in rows], [r[1] for r in rows], None))


def _speeded_error(spec: SpeededBoundarySpec, N: int, ell: float, seed):
    from .density import block_stationary_density
    from .exact import PRACTICAL_SITES, observable_density, solve_exact
    from .kinetic import estimate_density, profile_error
    from .density import macroscopic_profile
    rho0 = block_stationary_density(spec)[0]
    ms = ModelSpec(spec.with_ell(ell), N)
    if ms.n_sites <= PRACTICAL_SITES:
        prof = observable_density(solve_exact(ms))
        se = 0.0
    else:
        est = estimate_density(ms, seed=seed)
        prof = est.profile()
        se = est.err(0)
    _, l1 = profile_error(prof, macroscopic_profile(rho0, spec.beta), N=N)
    return prof[0], rho0, abs(prof[0] - rho0), se, l1


def _hydrostatic_m3(cfg, spec):
    ells = cfg.ell or [float(N) for N in cfg.N]
    if len(ells) != len(cfg.N):
        raise ConfigError(f"{cfg.source}: 'ell' must match 'N' in length for hydrostatic_m3")
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(cfg.N))

    def point(i):
        r = _speeded_error(spec, cfg.N[i], ells[i], seeds[i])
        return [cfg.N[i], ells[i], *r]

    rows = _map(cfg, point, range(len(cfg.N)))
    C = rows[0][4] * np.sqrt(rows[0][1])
    passed = all(r[4] <= C / np.sqrt(r[1]) + 3 * r[5] + 1e-12 for r in rows)
    return (["N", "ell", "rho_N0", "rho0", "error", "stderr", "profile_l1"], rows,
            {"C": C, "criterion": "error <= C/sqrt(ell) (+3 stderr for Monte Carlo points)"},
            passed, ("N", "profile L1 error", [r[0] for r in rows], [r[6] for r in rows], None))


def _speeded_scaling(cfg, spec):
    N = cfg.N[0]
    rows = [[ell, *_speeded_error(spec, N, ell, None)[:3]] for ell in cfg.ell]
    errs = np.array([r[3] for r in rows])
    ells = np.array(cfg.ell)
    C = errs[0] * np.sqrt(ells[0])
    within = bool(np.all(errs <= C / np.sqrt(ells) * (1 + 1e-9) + 1e-15))
    monotone = bool(np.all(np.diff(errs) <= 1e-15))
    fit = fit_power_law(zip(ells, errs)) if np.all(errs > 0) else None
    return (["ell", "rho_N0", "rho0", "error"], rows,
            {"N": N, "C": C, "within_bound": within, "non_increasing": monotone,
             "fit": fit.__dict__ if fit else None},
            within and monotone, ("ell", "|rho_N(0) - rho(0)|", list(ells), list(errs), fit))


def _correlation_decay(cfg, spec):
    from .correlations import assemble_system_model1, max_bulk_correlation, solve_correlations
    from .density import solve_finite_one_point
    if not np.asarray(spec.as_float().r).sum() > 0:
        raise ConfigError(f"{cfg.source}: correlation_decay needs a spec with reservoir rates")

    def point(N):
        rho = solve_finite_one_point(spec, N)
        fieldv = solve_correlations(assemble_system_model1(spec, N, rho.values))
        return [N, max_bulk_correlation(fieldv, N), fieldv.residual, fieldv.antisymmetry_defect()]

    rows = _map(cfg, point, cfg.N)
    vals = [r[1] for r in rows]
    decreasing = all(b < a for a, b in zip(vals, vals[1:]))
    ratio = vals[-1] / vals[0]
    fit = fit_power_law([(r[0], r[1]) for r in rows]) if len(rows) >= 3 else None
    return (["N", "max_bulk_phi", "residual", "antisymmetry_defect"], rows,
            {"strictly_decreasing": decreasing, "last_over_first": ratio,
             "fit": fit.__dict__ if fit else None, "thresholds": {"ratio": 0.4}},
            decreasing and ratio <= 0.4, ("N", "max |phi|", cfg.N, vals, fit))


def _dual_bounds(cfg, spec):
    from .dual import dual_statistics
    N = cfg.N[0]
    st = dual_statistics(spec, N, cfg.samples, cfg.seed, ells=[int(x) for x in cfg.ell])
    rows = [[int(l), t, s] for l, t, s in zip(st.ells, st.range_tail, st.range_stderr)]
    created_ok = st.created_mean <= st.bound + 3 * st.created_stderr
    slope_ok = st.range_slope is not None and st.range_slope <= -0.8
    fit = fit_power_law(zip(st.ells, st.range_tail)) if st.range_slope is not None else None
    return (["ell", "p_max_site_ge_ell", "stderr"], rows,
            {"N": N, "created_mean": st.created_mean, "created_stderr": st.created_stderr,
             "created_bound": st.bound, "range_slope": st.range_slope,
             "survival": {"t": st.t_grid.tolist(), "p": st.survival.tolist()},
             "thresholds": {"created": "mean <= bound + 3 stderr", "slope": -0.8}},
            created_ok and slope_ok, ("ell", "P[max site >= ell]", list(st.ells), list(st.range_tail), fit))


def _rate_roundtrip(cfg, spec):
    from .rates import roundtrip_audit
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for i in range(cfg.samples):
        rows.append([i, *roundtrip_audit(rng, cfg.p)])
    all_exact = all(r[1] for r in rows)
    all_consistent = all(r[2] for r in rows)
    from .rates import two_absorbing_check
    absorbing = two_absorbing_check(cfg.p)
    passed = all_exact and all_consistent and absorbing
    return (["index", "roundtrip_exact", "classification_consistent", "tag"], rows,
            {"roundtrip_exact": all_exact, "classification_consistent": all_consistent,
             "two_absorbing_is_all_ones_all_zeros": absorbing}, passed, None)


RUNNERS = {
    "hydrostatic_m1": _hydrostatic_m1,
    "hydrostatic_m2": _hydrostatic_m2,
    "hydrostatic_m3": _hydrostatic_m3,
    "correlation_decay": _correlation_decay,
    "dual_bounds": _dual_bounds,
    "speeded_scaling": _speeded_scaling,
    "rate_roundtrip": _rate_roundtrip,
}


def _map(cfg, fn, items):
    items = list(items)
    if cfg.threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(cfg.threads) as pool:
        return list(pool.map(fn, items))


# --- output ------------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _stamp(cfg, spec_hash):
    return {"spec_hash": spec_hash, "seed": cfg.seed, "version": __version__}


def csv_text(header, rows, stamp) -> str:
    buf = io.StringIO()
    for k, v in stamp.items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def svg_plot(xs, ys, xlabel, ylabel, title, stamp, fit: FitResult | None = None) -> str:
    """Log-log scatter with an optional fitted line as a standalone SVG."""
    W, H, m = 480, 360, 60
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    ok = (xs > 0) & (ys > 0)
    lx, ly = np.log10(xs[ok]), np.log10(ys[ok])
    if len(lx) == 0:
        lx, ly = np.array([0.0]), np.array([0.0])
    x0, x1 = lx.min(), lx.max() if lx.max() > lx.min() else lx.min() + 1
    y0, y1 = ly.min(), ly.max() if ly.max() > ly.min() else ly.min() + 1

    def px(v):
        return m + (v - x0) / (x1 - x0) * (W - 2 * m)

    def py(v):
        return H - m - (v - y0) / (y1 - y0) * (H - 2 * m)

    meta = " ".join(f"{k}={v}" for k, v in stamp.items())
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
           f"<!-- {meta} -->",
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<line x1="{m}" y1="{H - m}" x2="{W - m}" y2="{H - m}" stroke="black"/>',
           f'<line x1="{m}" y1="{m}" x2="{m}" y2="{H - m}" stroke="black"/>',
           f'<text x="{W / 2}" y="{m / 2}" text-anchor="middle" font-size="14">{title}</text>',
           f'<text x="{W / 2}" y="{H - 15}" text-anchor="middle" font-size="12">log10 {xlabel}</text>',
           f'<text x="15" y="{H / 2}" font-size="12" transform="rotate(-90 15 {H / 2})" '
           f'text-anchor="middle">log10 {ylabel}</text>']
    for v, lab in ((x0, f"{x0:.2f}"), (x1, f"{x1:.2f}")):
        out.append(f'<text x="{px(v):.1f}" y="{H - m + 16}" text-anchor="middle" font-size="10">{lab}</text>')
    for v, lab in ((y0, f"{y0:.2f}"), (y1, f"{y1:.2f}")):
        out.append(f'<text x="{m - 6}" y="{py(v):.1f}" text-anchor="end" font-size="10">{lab}</text>')
    pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(lx, ly))
    out.append(f'<polyline points="{pts}" fill="none" stroke="steelblue"/>')
    for a, b in zip(lx, ly):
        out.append(f'<circle cx="{px(a):.1f}" cy="{py(b):.1f}" r="3" fill="steelblue"/>')
    if fit is not None:
        fy = (fit.intercept + fit.slope * np.log(10 ** np.array([x0, x1]))) / np.log(10)
        out.append(f'<line x1="{px(x0):.1f}" y1="{py(fy[0]):.1f}" x2="{px(x1):.1f}" '
                   f'y2="{py(fy[1]):.1f}" stroke="firebrick" stroke-dasharray="4 3"/>')
        out.append(f'<text x="{W - m}" y="{m + 14}" text-anchor="end" font-size="11">'
                   f"slope {fit.slope:.3f}, R2 {fit.r2:.4f}</text>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if np.isfinite(f) else None
    return o


def run_experiment(cfg: ExperimentConfig, out: Path | None = None) -> Report:
    """Run one configured experiment and write its CSV, JSON and SVG files."""
    spec = cfg.boundary()
    spec_hash = ModelSpec(spec, max(cfg.N) if cfg.N else 8).digest() if spec is not None else "none"
    header, rows, summary, passed, plot = RUNNERS[cfg.kind](cfg, spec)
    out = Path(out or cfg.out or default_out_root() / cfg.kind)
    out.mkdir(parents=True, exist_ok=True)
    stamp = _stamp(cfg, spec_hash)
    files = []
    p = out / f"{cfg.kind}.csv"
    p.write_text(csv_text(header, rows, stamp))
    files.append(p)
    summary = {"kind": cfg.kind, "passed": bool(passed), **stamp, **summary}
    p = out / f"{cfg.kind}.json"
    p.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    files.append(p)
    if plot is not None:
        xlabel, ylabel, xs, ys, fit = plot
        p = out / f"{cfg.kind}.svg"
        p.write_text(svg_plot(xs, ys, xlabel, ylabel, cfg.kind, stamp, fit))
        files.append(p)
    return Report(cfg.kind, bool(passed), summary, header, rows, files)
