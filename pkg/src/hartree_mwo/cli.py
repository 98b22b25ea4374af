"""Command-line driver: JSON manifests, scenarios, sweeps and machine-readable outputs.

Exit codes: 0 all enabled checks passed, 1 a check failed, 2 invalid parameters,
3 integration failure (including a non-contracting Picard iteration).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import estimates as est
from .checkpoint import read_checkpoint, write_checkpoint
from .data import gaussian, random_band_limited
from .errors import ConfigurationError, DomainError, IntegrationError, ResolutionError
from .evolution import (
    SolverConfig, construct_mwo_pipeline, free_amplitude_solve, linearized_solve, measure_contraction,
    nonlinear_residual, picard_solve,
)
from .operators import HartreeParams
from .spectral import Field, GridSpec, sobolev_norm, to_fourier
from .transforms import fh_norm

log = logging.getLogger("hartree_mwo")

SCENARIOS = ("evolve", "construct-mwo", "verify-estimates", "verify-lemmas", "sweep")
VERBS = {"evolve": "evolve", "construct-mwo": "construct-mwo", "verify": "verify-estimates",
         "lemmas": "verify-lemmas", "sweep": "sweep"}
SWEEP_AXES = ("T", "t_min", "eta", "a0", "grid")
DATUM_KINDS = ("gaussian", "random_band_limited", "file")

# Amplitude profile v0 used by every scenario except construct-mwo.
DEFAULT_DATUM = {"kind": "gaussian", "width": 4.0, "amplitude": 0.46}
# construct-mwo takes the asymptotic state u0 on the dual grid; this one has conj(F u0) = DEFAULT_DATUM
# (in two dimensions a width-w Gaussian transforms to amplitude * w^2 at width 1/w).
DEFAULT_U0 = {"kind": "gaussian", "width": 1 / 4.0, "amplitude": 0.46 * 16.0}

HOLDER_TMIN_FACTOR = 10.0       # t_min refinement used by the Hoelder check
CONTINUITY_EPS = 0.05           # relative perturbation for the data-continuity check


@dataclass
class RunManifest:
    """Everything a run depends on. ``datum`` describes v0, or u0 for construct-mwo."""

    scenario: str = "evolve"
    config: SolverConfig = dc_field(default_factory=SolverConfig)
    datum: dict | None = None
    output_dir: str = "out"
    sweep_axis: str | None = None
    sweep_values: list | None = None
    refine: bool = True
    family_count: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}")
        given = dict(self.datum or {})
        kind = given.get("kind", "gaussian")
        if kind not in DATUM_KINDS:
            raise ConfigurationError(f"unknown datum kind {kind!r}")
        n = self.config.grid.dim
        if kind == "gaussian":
            datum = dict(DEFAULT_U0 if self.scenario == "construct-mwo" else DEFAULT_DATUM)
            datum.update(center=[0.0] * n, momentum=[0.0] * n)
        elif kind == "random_band_limited":
            datum = {"kind": kind, "seed": 0, "band": None, "envelope": 3.0,
                     "amplitude": DEFAULT_DATUM["amplitude"]}
        else:
            datum = {"kind": kind}
            if "path" not in given:
                raise ConfigurationError("a file datum needs a path")
        datum.update(given)
        self.datum = datum
        if self.scenario == "sweep":
            if self.sweep_axis not in SWEEP_AXES:
                raise ConfigurationError(f"sweep axis must be one of {SWEEP_AXES}")
            vals = [float(v) for v in (self.sweep_values or [])]
            if len(vals) < 3 or not all(math.isfinite(v) for v in vals):
                raise ConfigurationError("a sweep needs at least 3 finite axis values")
            self.sweep_values = vals
        if self.family_count < 2:
            raise ConfigurationError("family_count must be at least 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["config"] = self.config.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown manifest keys {sorted(unknown)}")
        cfg = SolverConfig.from_dict(d.pop("config", {}))
        return cls(config=cfg, **d)

    def canonical(self) -> str:
        """Sorted compact JSON of everything except output_dir, which cannot change results."""
        d = self.to_dict()
        d.pop("output_dir")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


# ---------------------------------------------------------------------------
# data

def build_datum(spec: dict, grid: GridSpec) -> Field:
    kind = spec["kind"]
    if kind == "gaussian":
        return gaussian(grid, float(spec["width"]), float(spec["amplitude"]), tuple(spec["center"]),
                        tuple(spec["momentum"]))
    if kind == "random_band_limited":
        rng = np.random.default_rng(int(spec["seed"]))
        band = tuple(spec["band"]) if spec.get("band") else None
        f = random_band_limited(grid, rng, band=band, envelope=spec.get("envelope"))
        return Field(grid, float(spec["amplitude"]) * f.values)
    path = Path(spec["path"])
    if path.suffix == ".npy":
        vals = np.load(path)
        if vals.shape != grid.shape:
            raise ConfigurationError(f"datum file shape {vals.shape} does not match the grid {grid.shape}")
        return Field(grid, vals)
    traj, _ = read_checkpoint(path)
    if traj.grid != grid:
        raise ConfigurationError("checkpoint grid differs from the configured grid")
    return traj.datum


# ---------------------------------------------------------------------------
# writers

def _cell(x):
    if isinstance(x, (bool, np.bool_, str)):
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path: Path, header: list, rows, manifest_hash: str):
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest_sha256={manifest_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(x) for x in row])


def write_json(path: Path, payload: dict, manifest_hash: str):
    payload = {"manifest_sha256": manifest_hash, **payload}
    path.write_text(json.dumps(est._jsonable(payload), indent=2, sort_keys=True) + "\n")


def _write_reports(out: Path, reports, mh: str) -> bool:
    est.write_reports_json(reports, out / "reports.json", {"manifest_sha256": mh})
    est.write_reports_csv(reports, out / "reports.csv", f"manifest_sha256={mh}")
    for r in reports:
        log.info("%-28s %s  constant=%.4g  refinement=%.4g", r.check_id, "PASS" if r.passed else "FAIL",
                 r.empirical_constant, r.refinement_ratio)
    return all(r.passed for r in reports)


# ---------------------------------------------------------------------------
# scenarios

def _logged(fn, *a, **kw):
    """Call fn with RuntimeWarnings routed to the logger (picard logs keep their own copy)."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        out = fn(*a, **kw)
    for w in caught:
        log.warning("%s", w.message)
    return out


def run_evolve(m: RunManifest, out: Path) -> bool:
    cfg = m.config
    v, plog = _logged(picard_solve, build_datum(m.datum, cfg.grid), cfg)
    write_checkpoint(v, out / "trajectory.bin", cfg, {"manifest_sha256": m.hash})
    rho = cfg.params.rho
    l2 = v.norms()
    hr = v.norms(rho)
    fh = [fh_norm(v.field(k), rho) for k in range(len(v))]
    drift = np.abs(l2 / l2[0] - 1) if l2[0] > 0 else np.zeros_like(l2)
    write_csv(out / "norms.csv", ["t", "l2", "h_rho", "fh_rho", "l2_rel_drift"],
              zip(v.times, l2, hr, fh, drift), m.hash)
    write_json(out / "picard.json", {"log": plog.to_dict(), "contraction_ratio": plog.contraction_ratio(),
                                     "nonlinear_residual": nonlinear_residual(v, cfg),
                                     "l2_max_rel_drift": float(drift.max())}, m.hash)
    return bool(plog.converged and drift.max() <= 1e-6)


def run_construct(m: RunManifest, out: Path) -> bool:
    cfg = m.config
    u0 = build_datum(m.datum, cfg.grid.dual())
    res = _logged(construct_mwo_pipeline, u0, cfg)
    write_checkpoint(res.v, out / "trajectory.bin", cfg, {"manifest_sha256": m.hash})
    s = res.series()
    cols = list(s)
    write_csv(out / "series.csv", cols, zip(*[s[c] for c in cols]), m.hash)
    monotone = bool(np.all(np.diff(res.vc_gap) <= 0))
    write_json(out / "picard.json", {"log": res.log.to_dict(), "gap_monotone": monotone}, m.hash)
    rep = est.check_growth_bound(res)
    # no refined rerun here: the growth ratio only has to be finite
    rep.passed = bool(np.isfinite(rep.empirical_constant))
    _write_reports(out, [rep], m.hash)
    return bool(res.log.converged and monotone and rep.passed)


def perturbed(v0: Field, eps: float) -> Field:
    """v0 (1 + eps e^{-|x|^2/8}): a smooth relative perturbation of size eps."""
    return Field(v0.grid, v0.values * (1 + eps * np.exp(-v0.grid.radius() ** 2 / 8)))


def trajectory_reports(m: RunManifest) -> list:
    """The trajectory-level checks at the manifest config; refinement reruns on a doubled grid."""
    cfg = m.config
    p = cfg.params
    v0 = build_datum(m.datum, cfg.grid)
    v, plog = _logged(picard_solve, v0, cfg)
    fine = cfg.with_(grid=cfg.grid.refined(2))
    vf = flog = None
    if m.refine:
        vf, flog = _logged(picard_solve, est.resample(v0, fine.grid), fine)
    tm = v.times
    reports = []

    sigma = min(p.rho, 1 + cfg.grid.dim / 4)
    reports.append(est.check_conservation_decomposition(v, p, tm[0], tm[-1], sigma, refined=vf))
    reports.append(est.check_gronwall(v, v, p, p.rho, refined=(vf, vf) if m.refine else None))

    if m.refine:
        v_tm, _ = _logged(picard_solve, v0, cfg.with_(t_min=cfg.t_min / HOLDER_TMIN_FACTOR))
        reports.append(est.check_holder_time(v_tm, p, p.rho, refined=v))
    else:
        reports.append(est.check_holder_time(v, p, p.rho))

    res = construct_mwo_pipeline(to_fourier(v0).conj(), cfg, (v, plog))
    res_f = None
    if m.refine:
        res_f = construct_mwo_pipeline(to_fourier(est.resample(v0, fine.grid)).conj(), fine, (vf, flog))
    reports.append(est.check_growth_bound(res, res_f))

    # contraction: two drivers with the same datum (free seed and fixed point) and their images
    seed = free_amplitude_solve(v.datum, cfg)
    w_seed = linearized_solve(seed, v.datum, cfg.t_min, cfg)
    ref_pair = None
    if m.refine:
        seed_f = free_amplitude_solve(vf.datum, fine)
        ref_pair = (seed_f, vf, linearized_solve(seed_f, vf.datum, fine.t_min, fine), vf)
    reports.append(est.check_contraction_bound(seed, v, w_seed, v, p, ref_pair))

    if p.rho > 0.75:
        reports.append(_logged(est.check_data_continuity, v0, perturbed(v0, CONTINUITY_EPS), p.rho - 0.5,
                               cfg, fine if m.refine else None))
    return reports


def commutator_tuples(n: int = 2) -> list:
    """Five admissible (tuple, P1, P2) choices; the first is the energy-estimate instance."""
    T = est.CommutatorTuple
    return [
        (T.energy_instance(0.8, dim=n), "id", "id"),
        (T(1.0, n / 2, 0.5, 0.5, 1.0, dim=n), "id", "id"),
        (T(1.5, 1.2, 0.6, 0.7, 0.5, dim=n), "id", "id"),
        (T(1.0, 1.2, 0.9, 0.9, 1.0, alpha2=1.0, dim=n), "id", ("grad", 0)),
        (T(0.5, 1.0, 0.5, 0.5, 1.0, alpha1=0.5, dim=n), "omega", "id"),
    ]


def inequality_reports(m: RunManifest) -> list:
    grid = m.config.grid
    rand = est.TestFunctionFamily("random_band_limited", count=m.family_count, seed=m.seed)
    gau = est.TestFunctionFamily("gaussian", count=m.family_count, seed=m.seed)
    bumps = est.TestFunctionFamily("multi_bump", count=m.family_count, seed=m.seed)
    r = m.refine
    out = [
        est.check_sobolev_interpolation(gau, 0.4, 0.8, 2, 2, 2, 0.5, grid, r),
        est.check_leibniz(rand, 0.8, 2, 4, 4, 4, 4, grid, r),
        est.check_product_estimate(rand, 0.6, 0.6, grid, r),
        est.check_phase_besov(gau, 0.8, 2, 2, grid, r),
    ]
    for i, (tup, P1, P2) in enumerate(commutator_tuples(grid.dim)):
        rep = est.check_commutator(bumps if i == 0 else rand, tup, P1, P2, grid, r)
        rep.check_id = f"{rep.check_id}_{i}"
        out.append(rep)
    return out


def run_verify(m: RunManifest, out: Path) -> bool:
    return _write_reports(out, trajectory_reports(m), m.hash)


def run_lemmas(m: RunManifest, out: Path) -> bool:
    return _write_reports(out, inequality_reports(m), m.hash)


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def stack_l2(vals: np.ndarray, grid: GridSpec) -> float:
    return float(np.sqrt(np.sum(np.abs(vals) ** 2) * grid.cell_volume))


def _sweep_point(m: RunManifest, val: float):
    cfg, spec = m.config, dict(m.datum)
    axis = m.sweep_axis
    if axis == "T":
        cfg = cfg.with_(T=val)
    elif axis == "t_min":
        cfg = cfg.with_(t_min=val)
    elif axis == "grid":
        cfg = cfg.with_(grid=GridSpec(cfg.grid.dim, int(val), cfg.grid.box_length))
    elif axis == "a0":
        spec["amplitude"] = val
    return cfg, spec


def run_sweep(m: RunManifest, out: Path) -> bool:
    axis, values = m.sweep_axis, m.sweep_values
    base = m.config
    rho = base.params.rho
    rows = []
    if axis == "eta":
        # fixed driver, regularized linear flow only: isolates the effect of eta
        driver, _ = _logged(picard_solve, build_datum(m.datum, base.grid), base.with_(eta=0.0))
        ref = linearized_solve(driver, driver.datum, base.t_min, base.with_(eta=0.0))
        for val in values:
            w = linearized_solve(driver, driver.datum, base.t_min, base.with_(eta=val))
            l2 = w.norms()
            rows.append([val, stack_l2(w.values[-1] - ref.values[-1], base.grid), abs(l2[-1] / l2[0] - 1)])
        header = ["eta", "l2_deviation", "l2_rel_drift"]
        slopes = {"l2_deviation_vs_eta": loglog_slope(values, [r[1] for r in rows])}
    elif axis == "a0":
        for val in values:
            cfg, spec = _sweep_point(m, val)
            v0 = build_datum(spec, cfg.grid)
            rows.append([val, sobolev_norm(v0, rho), measure_contraction(v0, cfg)])
        header = ["amplitude", "a0_h_rho", "contraction_ratio"]
        slopes = {"contraction_ratio_vs_a0": loglog_slope([r[1] for r in rows], [r[2] for r in rows])}
    else:
        for val in values:
            cfg, spec = _sweep_point(m, val)
            v, plog = _logged(picard_solve, build_datum(spec, cfg.grid), cfg, raise_on_noncontraction=False)
            l2 = v.norms()
            rows.append([val, plog.iterations, plog.contraction_ratio(), float(np.abs(l2 / l2[0] - 1).max()),
                         nonlinear_residual(v, cfg), est.holder_slope(v), plog.boundary_mass])
        header = [axis, "picard_iterations", "contraction_ratio", "l2_rel_drift", "nonlinear_residual",
                  "holder_slope", "boundary_mass"]
        slopes = {}
        if axis == "grid":
            slopes["residual_vs_points"] = loglog_slope(values, [r[4] for r in rows])
        elif axis == "T":
            slopes["contraction_ratio_vs_T"] = loglog_slope(values, [r[2] for r in rows])
    write_csv(out / "sweep.csv", header, rows, m.hash)
    write_json(out / "sweep_slopes.json", {"axis": axis, "slopes": slopes}, m.hash)
    return True


RUNNERS = {"evolve": run_evolve, "construct-mwo": run_construct, "verify-estimates": run_verify,
           "verify-lemmas": run_lemmas, "sweep": run_sweep}


def run(manifest: RunManifest) -> int:
    """Execute a manifest and return the process exit status."""
    out = Path(manifest.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / "manifest.sha256").write_text(manifest.hash + "\n")
    try:
        ok = RUNNERS[manifest.scenario](manifest, out)
    except IntegrationError as exc:
        log.error("integration failure: %s %s", exc, json.dumps(est._jsonable(exc.diagnostic)))
        return 3
    except (ConfigurationError, DomainError, ResolutionError) as exc:
        log.error("invalid parameters: %s", exc)
        return 2
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# argument parsing

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hartree-mwo", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    d = SolverConfig()
    for verb in VERBS:
        s = sub.add_parser(verb)
        s.add_argument("--manifest", type=Path, help="JSON manifest; when given, all other flags are ignored")
        s.add_argument("--out", default="out", help="output directory")
        g = s.add_argument_group("equation")
        g.add_argument("--gamma", type=float, default=d.params.gamma)
        g.add_argument("--kappa", type=float, default=d.params.kappa)
        g.add_argument("--rho", type=float, default=d.params.rho)
        g.add_argument("--dim", type=int, default=d.params.dim)
        g = s.add_argument_group("grid and solver")
        g.add_argument("--points", type=int, default=d.grid.points_per_axis)
        g.add_argument("--box", type=float, default=d.grid.box_length)
        g.add_argument("--t-min", type=float, default=d.t_min)
        g.add_argument("--T", type=float, default=d.T)
        g.add_argument("--steps-per-decade", type=int, default=d.steps_per_decade)
        g.add_argument("--eta", type=float, default=d.eta)
        g.add_argument("--picard-tol", type=float, default=d.picard_tol)
        g.add_argument("--picard-max", type=int, default=d.picard_max)
        g.add_argument("--no-dealias", action="store_true", help="skip the 2/3 projection of the datum")
        g = s.add_argument_group("datum (v0; u0 on the dual grid for construct-mwo)")
        g.add_argument("--datum", choices=DATUM_KINDS, default="gaussian")
        g.add_argument("--width", type=float)
        g.add_argument("--amplitude", type=float)
        g.add_argument("--center", type=float, nargs="+")
        g.add_argument("--datum-seed", type=int)
        g.add_argument("--band", type=float, nargs=2)
        g.add_argument("--path")
        g = s.add_argument_group("checks")
        g.add_argument("--no-refine", action="store_true", help="skip the refined reruns")
        g.add_argument("--family-count", type=int, default=32)
        g.add_argument("--seed", type=int, default=0, help="test-family seed")
        if verb == "sweep":
            s.add_argument("--axis", choices=SWEEP_AXES, required=True)
            s.add_argument("--values", type=float, nargs="+", required=True)
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def manifest_from_args(args) -> RunManifest:
    if args.manifest is not None:
        return RunManifest.from_dict(json.loads(Path(args.manifest).read_text()))
    params = HartreeParams(gamma=args.gamma, kappa=args.kappa, dim=args.dim, rho=args.rho)
    grid = GridSpec(args.dim, args.points, args.box)
    cfg = SolverConfig(params=params, grid=grid, t_min=args.t_min, T=args.T,
                       steps_per_decade=args.steps_per_decade, eta=args.eta, picard_tol=args.picard_tol,
                       picard_max=args.picard_max, dealias=not args.no_dealias)
    given = {"kind": args.datum, "width": args.width, "amplitude": args.amplitude, "center": args.center,
             "seed": args.datum_seed, "band": args.band, "path": args.path}
    datum = {k: v for k, v in given.items() if v is not None}
    return RunManifest(scenario=VERBS[args.verb], config=cfg, datum=datum, output_dir=args.out,
                       sweep_axis=getattr(args, "axis", None), sweep_values=getattr(args, "values", None),
                       refine=not args.no_refine, family_count=args.family_count, seed=args.seed)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        manifest = manifest_from_args(args)
    except (ValueError, TypeError, KeyError, OSError) as exc:
        log.error("invalid manifest or parameters: %s", exc)
        return 2
    return run(manifest)


if __name__ == "__main__":
    sys.exit(main())
