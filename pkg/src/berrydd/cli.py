"""Command-line front end: named experiments with CSV output and run manifests.

Subcommands map one-to-one onto the standard experiments:

* ``theta-sweep``  phase and coherence of the four sequences across the
  slant angle at fixed noise parameters.
* ``beta-sweep``   the same observables at fixed angle across the noise
  bandwidth beta (eta = 400*beta rule).
* ``filters``      filter-function tables F(z)/z^2 and the closed-form
  dephasing-vs-beta tables for the three standard switching patterns.
* ``single``       one ensemble from a JSON config; writes a result row
  plus a manifest that reproduces the run bit-identically.

All angles are radians; all rates are in B0-units.  Every CSV starts with
comment lines stating the units and the formula behind each theory column.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__, analytics, ensemble
from .ensemble import ExperimentConfig, run_ensemble, sweep_beta, sweep_theta
from .noise import NoiseModel

__all__ = ["main", "RunManifest", "write_results_csv", "rerun_manifest"]


_RESULT_COLUMNS = [
    "scheme", "theta_a", "theta_c", "beta", "eta", "kappa", "realizations",
    "seed", "gamma_mean", "gamma_theory", "gamma_stderr", "W", "W_theory",
    "W_stderr", "chi_theory", "lambda_theory",
    # extras beyond the canonical 16
    "gamma_theory_raw", "gamma_ref", "gamma_corrected", "gamma_sample_std",
    "w_sample_std", "chi_exact_theory", "W_exact_theory", "dt_divisor",
    "noise_axis",
]

_HEADER_NOTES = [
    "# units: angles in rad; beta = gamma3*T, eta = alpha3*gamma3*T^3 (dimensionless); kappa = B0/omega_B",
    "# gamma_theory: loop geometric phase difference, sum over segments of 2*pi*l_k*s_k*cos(theta_k),",
    "#   reduced to (-pi, pi]; gamma_theory_raw is the unreduced value",
    "# W_theory = exp(-chi_theory); chi_theory is the scheme's closed-form low-frequency dephasing exponent:",
    "#   fid:           (cos(t) - sin^2(t)/kappa)^2 * eta/(2*beta)",
    "#   se:            cos^2(t)*eta/12 + (sin^4(t)/kappa^2) * eta/(2*beta)",
    "#   cpmg:          cos^2(t)*eta/48 + (sin^4(t)/kappa^2) * eta/(2*beta)",
    "#   balanced echo: (cos(ta) - sin^2(ta)/kappa)^2 * eta/12 * {1 se, 1/4 cpmg}",
    "#   mirror:        cos^2(ta)*eta/48 + (sin^4(ta)/kappa^2) * eta/12",
    "#   (for beta > 0.1 the exact exponential-kernel form replaces the low-frequency limit)",
    "# chi_exact_theory: exact Gaussian linear-response exponent (piecewise-weight double integral",
    "#   of the exponential correlation kernel); W_exact_theory = exp(-chi_exact_theory)",
    "# lambda_theory: depolarization exponent alpha3*T*sin^2(t)*gamma3/(gamma3^2 + B0^2)",
    "# gamma_ref: zero-noise reference phase on the same grid; gamma_corrected subtracts the",
    "#   scheme-constant offset (gamma_ref - gamma_theory) from gamma_mean",
    "# gamma_stderr/W_stderr: bootstrap errors of the mean; *_sample_std: per-realization spread",
]


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _result_row(res: ensemble.EnsembleResult) -> list:
    cfg = res.config
    pred = res.prediction
    params = cfg.params()
    return [
        cfg.scheme,
        cfg.theta_a,
        params.theta_c if params.theta_c is not None else float("nan"),
        cfg.beta,
        cfg.eta,
        cfg.kappa,
        res.realizations_used,
        cfg.master_seed,
        res.gamma_mean,
        float(ensemble.wrap_angle(pred.gamma_expected)),
        res.gamma_stderr,
        res.w,
        pred.w,
        res.w_stderr,
        pred.chi,
        pred.lam,
        pred.gamma_expected,
        res.gamma_ref,
        res.gamma_corrected,
        res.gamma_sample_std,
        res.w_sample_std,
        res.chi_exact,
        math.exp(-res.chi_exact),
        cfg.dt_divisor,
        cfg.noise_axis,
    ]


def write_results_csv(results, path, notes=()) -> None:
    """Write one row per ensemble with units/provenance header comments."""
    lines = list(_HEADER_NOTES) + [f"# {n}" for n in notes]
    lines.append(",".join(_RESULT_COLUMNS))
    for res in results:
        lines.append(",".join(_fmt(x) for x in _result_row(res)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_view_csv(results, path, column: str, schemes) -> None:
    """Wide view: one row per theta/beta, one column per scheme plus theory."""
    by_scheme = {}
    for res in results:
        by_scheme.setdefault(res.config.scheme, []).append(res)
    xs = [r.config.theta_a for r in by_scheme[schemes[0]]] if column == "gamma" else None
    lines = list(_HEADER_NOTES)
    if column == "gamma":
        hdr = ["theta_a"]
        for s in schemes:
            hdr += [f"gamma_{s}", f"gamma_stderr_{s}"]
        hdr += ["gamma_theory_loop", "gamma_theory_balanced"]
        lines.append(",".join(hdr))
        for i, x in enumerate(xs):
            row = [x]
            for s in schemes:
                row += [by_scheme[s][i].gamma_mean, by_scheme[s][i].gamma_stderr]
            row.append(float(ensemble.wrap_angle(-4.0 * math.pi * math.cos(x))))
            bal = next((by_scheme[s][i] for s in schemes if "balanced" in s), None)
            row.append(
                float(ensemble.wrap_angle(bal.prediction.gamma_expected))
                if bal else float("nan")
            )
            lines.append(",".join(_fmt(v) for v in row))
    else:
        key = (lambda r: r.config.theta_a) if column == "W_vs_theta" else (
            lambda r: r.config.beta)
        xname = "theta_a" if column == "W_vs_theta" else "beta"
        xs = [key(r) for r in by_scheme[schemes[0]]]
        hdr = [xname]
        for s in schemes:
            hdr += [f"W_{s}", f"W_stderr_{s}", f"W_theory_{s}"]
        lines.append(",".join(hdr))
        for i, x in enumerate(xs):
            row = [x]
            for s in schemes:
                r = by_scheme[s][i]
                row += [r.w, r.w_stderr, r.prediction.w]
            lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass
class RunManifest:
    """Resolved config + provenance; rerunning it reproduces the CSVs."""

    tool_version: str
    created_utc: str
    command: str
    config: dict
    outputs: list
    notes: list

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2)

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as fh:
            return cls(**json.load(fh))


def _manifest_for(command, config: ExperimentConfig, outputs, notes):
    return RunManifest(
        tool_version=__version__,
        created_utc=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        command=command,
        config=asdict(config),
        outputs=[str(p) for p in outputs],
        notes=list(notes),
    )


# -- config validation ---------------------------------------------------------

_CONFIG_FIELDS = {
    "scheme": str, "theta_a": float, "beta": float, "eta": float,
    "kappa": float, "realizations": int, "master_seed": int,
    "dt_divisor": int, "noise_axis": str, "fid_windings": int,
    "workers": int, "stream_key": int, "adaptive": bool,
    "adaptive_target": float, "bootstrap_resamples": int,
}
_REQUIRED = ("scheme", "theta_a", "beta", "eta")


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a validated config; unknown or missing fields raise by name."""
    errors = []
    for name in _REQUIRED:
        if name not in data:
            errors.append(f"missing required field '{name}'")
    kwargs = {}
    for name, value in data.items():
        if name == "b0_hz":  # physical-unit annotation, not used internally
            continue
        if name not in _CONFIG_FIELDS:
            errors.append(f"unknown field '{name}'")
            continue
        want = _CONFIG_FIELDS[name]
        try:
            kwargs[name] = want(value)
        except (TypeError, ValueError):
            errors.append(f"field '{name}' must be {want.__name__}, got {value!r}")
    if errors:
        raise ValueError("invalid config: " + "; ".join(errors))
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise ValueError(f"invalid config: {exc}") from exc


def _check_config_warnings(cfg: ExperimentConfig) -> list:
    notes = []
    if cfg.kappa < 5:
        notes.append(
            f"kappa = {cfg.kappa} < 5: barely adiabatic; closed forms degrade"
        )
    if cfg.noise_axis == "transverse" and cfg.scheme == "mirror":
        notes.append(
            "mirror sequence does not suppress transverse geometric dephasing "
            "(its radial noise weights share one sign across the cones)"
        )
    for n in notes:
        print(f"warning: {n}", file=sys.stderr)
    return notes


# -- subcommands -----------------------------------------------------------------


def _cmd_theta_sweep(args) -> int:
    grid = np.linspace(math.pi / 12, 11 * math.pi / 12, args.theta_points)
    if args.theta_grid:
        grid = np.array([float(x) for x in args.theta_grid.split(",")])
    base = ExperimentConfig(
        scheme="cpmg", theta_a=float(grid[0]), beta=args.beta, eta=args.eta,
        kappa=args.kappa, realizations=args.realizations,
        master_seed=args.seed, dt_divisor=args.dt_divisor,
        noise_axis=args.noise_axis, workers=args.workers,
    )
    results = sweep_theta(base, grid)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "theta_sweep_results.csv", out / "theta_sweep_phase.csv",
             out / "theta_sweep_coherence.csv"]
    write_results_csv(results, paths[0])
    _write_view_csv(results, paths[1], "gamma", ensemble.THETA_SWEEP_SCHEMES)
    _write_view_csv(results, paths[2], "W_vs_theta", ensemble.THETA_SWEEP_SCHEMES)
    _manifest_for("theta-sweep", base, paths,
                  [f"theta_grid={list(map(float, grid))}"]).write(out / "theta_sweep_manifest.json")
    print(f"wrote {', '.join(str(p) for p in paths)}")
    return 0


def _cmd_beta_sweep(args) -> int:
    grid = np.geomspace(args.beta_min, args.beta_max, args.beta_points)
    if args.beta_grid:
        grid = np.array([float(x) for x in args.beta_grid.split(",")])
    base = ExperimentConfig(
        scheme="cpmg", theta_a=args.theta, beta=float(grid[0]),
        eta=400.0 * float(grid[0]), kappa=args.kappa,
        realizations=args.realizations, master_seed=args.seed,
        dt_divisor=args.dt_divisor, noise_axis=args.noise_axis,
        workers=args.workers,
    )
    results = sweep_beta(base, grid, eta_per_beta=args.eta_per_beta)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "beta_sweep_results.csv", out / "beta_sweep_coherence.csv"]
    notes = [f"eta scaling rule: eta = {args.eta_per_beta}*beta (fixed noise power alpha3)"]
    write_results_csv(results, paths[0], notes=notes)
    _write_view_csv(results, paths[1], "W_vs_beta", ensemble.THETA_SWEEP_SCHEMES)
    _manifest_for("beta-sweep", base, paths,
                  notes + [f"beta_grid={list(map(float, grid))}"]).write(
        out / "beta_sweep_manifest.json")
    print(f"wrote {', '.join(str(p) for p in paths)}")
    return 0


def _cmd_filters(args) -> int:
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    zs = np.linspace(1e-6, args.z_max, args.z_points)
    lines = [
        "# filter-function tables: F(z)/z^2 per switching pattern, z = omega*T",
        "# fid: 2 sin^2(z/2); se: 8 sin^4(z/4); cpmg2: 32 sin^4(z/8) sin^2(z/4)",
        "z,fid,se,cpmg2",
    ]
    for z in zs:
        vals = [analytics.filter_function(s, z) / z**2 for s in ("fid", "se", "cpmg2")]
        lines.append(",".join(_fmt(float(v)) for v in [z, *vals]))
    fpath = out / "filter_functions.csv"
    fpath.write_text("\n".join(lines) + "\n")

    betas = np.geomspace(args.chi_beta_min, args.chi_beta_max, args.chi_beta_points)
    lines = [
        "# closed-form dephasing vs beta in units of alpha*T^2/2 (exact exponential kernels),",
        "# i.e. 2*K(beta)/beta^2 with K the pattern kernel; the *_lowfreq columns are the",
        "# leading beta->0 factors {1, beta/6, beta/24}",
        "beta,fid,se,cpmg2,fid_lowfreq,se_lowfreq,cpmg2_lowfreq",
    ]
    for b in betas:
        model = NoiseModel(alpha=1.0, gamma=float(b))
        row = [float(b)]
        for s in ("fid", "se", "cpmg2"):
            # chi_closed = K(beta)/beta^2 here; normalize by alpha*T^2/2 = 1/2
            row.append(2.0 * analytics.chi_closed(s, model, 1.0))
        row += [1.0, float(b) / 6.0, float(b) / 24.0]
        lines.append(",".join(_fmt(v) for v in row))
    cpath = out / "chi_vs_beta.csv"
    cpath.write_text("\n".join(lines) + "\n")
    print(f"wrote {fpath}, {cpath}")
    return 0


def _cmd_single(args) -> int:
    if args.manifest:
        return rerun_manifest(args.manifest, args.out_dir)
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    else:
        data = {
            "scheme": args.scheme, "theta_a": args.theta,
            "beta": args.beta, "eta": args.eta, "kappa": args.kappa,
            "realizations": args.realizations, "master_seed": args.seed,
            "dt_divisor": args.dt_divisor, "noise_axis": args.noise_axis,
            "workers": args.workers,
        }
        data = {k: v for k, v in data.items() if v is not None}
    try:
        cfg = config_from_dict(data)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    notes = _check_config_warnings(cfg)
    res = run_ensemble(cfg)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "single_result.csv"
    write_results_csv([res], csv_path, notes=notes)
    _manifest_for("single", cfg, [csv_path], notes).write(out / "single_manifest.json")
    print(f"wrote {csv_path}")
    return 0


def rerun_manifest(manifest_path, out_dir) -> int:
    """Re-execute a manifest's config; outputs land in out_dir."""
    man = RunManifest.load(manifest_path)
    cfg = config_from_dict(man.config)
    res = run_ensemble(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "single_result.csv"
    write_results_csv([res], csv_path, notes=man.notes)
    print(f"wrote {csv_path}")
    return 0


def main(argv=None) -> int:
    import pathlib

    parser = argparse.ArgumentParser(
        prog="berrydd",
        description="Driven-qubit dephasing experiments under OU noise",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--kappa", type=float, default=12.0)
        p.add_argument("--realizations", type=int, default=400)
        p.add_argument("--seed", type=int, default=2024)
        p.add_argument("--dt-divisor", type=int, default=10)
        p.add_argument("--noise-axis", choices=["longitudinal", "transverse"],
                       default="longitudinal")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out-dir", type=pathlib.Path, default=pathlib.Path("out"))

    p = sub.add_parser("theta-sweep", help="phase/coherence across the slant angle")
    p.add_argument("--beta", type=float, default=0.001)
    p.add_argument("--eta", type=float, default=0.4)
    p.add_argument("--theta-points", type=int, default=13)
    p.add_argument("--theta-grid", type=str, default="",
                   help="comma-separated angles overriding the default grid")
    add_common(p)
    p.set_defaults(func=_cmd_theta_sweep)

    p = sub.add_parser("beta-sweep", help="phase/coherence across the noise bandwidth")
    p.add_argument("--theta", type=float, default=5 * math.pi / 12)
    p.add_argument("--beta-min", type=float, default=0.005)
    p.add_argument("--beta-max", type=float, default=5.0)
    p.add_argument("--beta-points", type=int, default=9)
    p.add_argument("--beta-grid", type=str, default="")
    p.add_argument("--eta-per-beta", type=float, default=400.0)
    add_common(p)
    p.set_defaults(func=_cmd_beta_sweep)

    p = sub.add_parser("filters", help="filter-function and dephasing tables")
    p.add_argument("--z-max", type=float, default=8 * math.pi)
    p.add_argument("--z-points", type=int, default=400)
    p.add_argument("--chi-beta-min", type=float, default=1e-3)
    p.add_argument("--chi-beta-max", type=float, default=10.0)
    p.add_argument("--chi-beta-points", type=int, default=40)
    p.add_argument("--out-dir", type=pathlib.Path, default=pathlib.Path("out"))
    p.set_defaults(func=_cmd_filters)

    p = sub.add_parser("single",
                       help="one ensemble from a JSON config or direct flags")
    p.add_argument("--config", type=str, help="path to the JSON config")
    p.add_argument("--manifest", type=str, default="",
                   help="rerun a previously written manifest instead")
    p.add_argument("--scheme", type=str, default=None)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    add_common(p)
    p.set_defaults(func=_cmd_single)

    args = parser.parse_args(argv)
    if args.command == "single" and not (args.config or args.manifest
                                         or args.scheme is not None):
        print("error: single needs --config, --manifest or --scheme/--theta/"
              "--beta/--eta flags", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
