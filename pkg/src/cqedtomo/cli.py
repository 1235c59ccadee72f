"""Command-line driver: ``cqedtomo <command> [options]``.

Commands write CSV/JSON data files plus ``manifest.json`` into the output
directory (``--out``, else ``$CQEDTOMO_OUT``, else ``./cqedtomo-out``).
``cqedtomo rerun MANIFEST`` replays a run and checks every output checksum.

Exit status: 0 when every acceptance flag of the command holds, 1 when one
fails, 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import (
    CalibrationInput,
    fit_mu,
    kolmogorov_bound,
    nu as nu_value,
    p_bar,
    sigma as sigma_value,
    sigma_s_vs_n_sweep,
    theoretical_cdf_m,
)
from .config import ExperimentConfig, load_config, phase_seed, preset
from .errors import NonpositiveInstrumentVariance, SizeError
from .fock import coherent_state
from .measurement import (
    ENUMERATION_CAP,
    InteractionParams,
    build_kraus,
    detection_probabilities,
    enumerate_integrated_probability,
    first_click_probability,
    gamma_value,
)
from .tomography import (
    convolution_cdf,
    convolve,
    deconvolve,
    density_from_samples,
    make_grid,
    on_grid,
    quadrature_pdf,
    tomogram_from_ensemble,
)
from .trajectory import RunConfig, probability_track_figure, run_ensemble

OUT_ENV = "CQEDTOMO_OUT"
COMMANDS = ("first-click", "trajectories", "calibrate", "tomogram", "sweep", "oracle-check")


class UsageError(Exception):
    pass


# -- output helpers -------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path: Path, header, columns) -> None:
    rows = zip(*columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path: Path, data) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Run:
    """Collects outputs, resolved values and flags of one command."""

    def __init__(self, out: Path):
        self.out = out
        self.files: list[str] = []
        self.resolved: dict = {}
        self.flags: dict = {}
        self.seeds: dict = {}
        self.calibration: dict | None = None

    def csv(self, name, header, columns):
        write_csv(self.out / name, header, columns)
        self.files.append(name)

    def json(self, name, data):
        write_json(self.out / name, data)
        self.files.append(name)


# -- commands -------------------------------------------------------------------

def _params(cfg: ExperimentConfig, phi: float, Phi: float = 0.0, dim: int | None = None) -> InteractionParams:
    return InteractionParams(cfg.lambda_tau, phi, Phi, dim or cfg.resolved_dim())


def _run_config(cfg: ExperimentConfig, seed: int, **kw) -> RunConfig:
    return RunConfig(n=cfg.n, N=cfg.N, master_seed=seed, workers=cfg.workers, chunk_size=cfg.chunk_size, **kw)


def _coherent_at_beta_max(cfg: ExperimentConfig):
    spec = cfg.state_spec
    if not spec.is_coherent or abs(spec.beta_abs - cfg.beta_max) > 1e-12:
        raise UsageError(f"calibration needs a coherent state with |beta| = beta_max = {cfg.beta_max}, got {cfg.state!r}")
    return spec


def cmd_first_click(cfg: ExperimentConfig, run: Run) -> None:
    phi = cfg.phases[0]
    dim = cfg.resolved_dim()
    betas = np.linspace(0.0, cfg.beta_max, cfg.beta_points)
    cols = [[], [], [], []]
    for d in cfg.phase_offsets:
        Phi = phi + d
        prm = _params(cfg, phi, Phi, dim)
        kp = build_kraus(prm)
        for b in betas:
            beta = b * complex(math.cos(Phi), math.sin(Phi))
            closed = first_click_probability(beta, prm, "series")
            matrix = detection_probabilities(coherent_state(beta, dim), kp)[1]
            for c, v in zip(cols, (b, d, closed, matrix)):
                c.append(v)
    run.csv("first_click.csv", ["beta_abs", "Phi_minus_phi", "p1_closed_form", "p1_matrix"], cols)
    gap = float(np.max(np.abs(np.array(cols[2]) - np.array(cols[3]))))
    run.resolved.update(max_closed_vs_matrix=gap, dim=dim, phi=phi)
    run.flags["closed_form_matches_matrix"] = gap < 2e-4


def cmd_trajectories(cfg: ExperimentConfig, run: Run) -> None:
    spec = cfg.state_spec
    dim = cfg.resolved_dim()
    state = spec.build(dim)
    if spec.is_coherent:
        settings = [(spec.Phi - d, d) for d in cfg.phase_offsets]
    else:
        settings = [(phi, None) for phi in cfg.phases]
    seeds = [cfg.master_seed + j for j in range(cfg.n_tracks)]
    cols = [[] for _ in range(7)]
    refs = {}
    for phi, offset in settings:
        kp = build_kraus(_params(cfg, phi, spec.Phi, dim))
        tracks = probability_track_figure(
            state, kp, cfg.n, seeds, mu=cfg.mu,
            beta_abs=spec.beta_abs if spec.is_coherent else None, gamma_mode=cfg.gamma_mode,
        )
        refs[_fmt(phi)] = tracks.p_bar
        for tid, k, p1 in zip(tracks.trajectory_id, tracks.k, tracks.p1):
            row = (offset, phi, tid, seeds[tid], k, p1, tracks.p_bar)
            for c, v in zip(cols, row):
                c.append(v)
    run.csv("trajectories.csv", ["Phi_minus_phi", "phi", "trajectory_id", "seed", "k", "p1", "p_bar"], cols)
    run.seeds["tracks"] = seeds
    run.resolved.update(dim=dim, p_bar_reference=refs)


def _calibration_input(cfg: ExperimentConfig, spec, n: int | None = None) -> CalibrationInput:
    return CalibrationInput(
        lambda_tau=cfg.lambda_tau, beta_max=cfg.beta_max, Phi=spec.Phi, phi=cfg.phases[0],
        n=n or cfg.n, N=cfg.N, alpha=cfg.alpha, gamma_mode=cfg.gamma_mode, mu_step=cfg.mu_step,
    )


def cmd_calibrate(cfg: ExperimentConfig, run: Run) -> None:
    spec = _coherent_at_beta_max(cfg)
    dim = cfg.resolved_dim()
    phi = cfg.phases[0]
    kp = build_kraus(_params(cfg, phi, spec.Phi, dim))
    ens = run_ensemble(spec.build(dim), kp, _run_config(cfg, cfg.master_seed))
    inp = _calibration_input(cfg, spec)
    res = fit_mu(ens.m, inp)

    run.csv("click_counts.csv", ["trajectory", "m"], [np.arange(ens.m.size), ens.m])
    x = np.arange(-1, cfg.n + 1)
    sample = np.searchsorted(np.sort(ens.m), x, side="right") / ens.m.size
    theory = theoretical_cdf_m(cfg.n, res.p_bar, x)
    run.csv(
        "calibration_cdf.csv", ["x", "sample_cdf", "theory_cdf", "abs_diff", "ks_bound"],
        [x, sample, theory, np.abs(sample - theory), np.full(x.size, res.ks_bound)],
    )
    summary = dict(res.to_dict(), phi=phi, Phi=spec.Phi, beta_max=cfg.beta_max, alpha=cfg.alpha,
                   gamma_mode=cfg.gamma_mode, dim=dim)
    run.json("calibration.json", summary)
    run.calibration = summary
    run.seeds["ensemble"] = cfg.master_seed
    run.resolved.update(mu=res.mu, nu=res.nu, sigma=res.sigma, sigma_s=res.sigma_s, p_bar=res.p_bar, dim=dim)
    run.flags["kolmogorov_accepted"] = res.accepted
    if not res.accepted:
        print(f"no acceptable mu: best mu={res.mu:.2f}, KS {res.ks_statistic:.5f} >= bound {res.ks_bound:.5f}",
              file=sys.stderr)


def resolve_calibration(cfg: ExperimentConfig, calibration: dict | None) -> dict:
    if calibration is not None:
        for key, want in (("n", cfg.n), ("lambda_tau", cfg.lambda_tau)):
            if key in calibration and calibration[key] != want:
                raise UsageError(f"calibration was made for {key}={calibration[key]}, config has {want}")
        return {k: calibration[k] for k in ("mu", "nu", "sigma", "sigma_s", "gamma") if k in calibration}
    if cfg.mu is None:
        raise UsageError("tomogram needs a calibration (--calibration FILE) or an explicit mu")
    g = gamma_value(cfg.beta_max, cfg.lambda_tau, cfg.gamma_mode)
    nv = nu_value(cfg.lambda_tau, cfg.mu, g)
    sg = sigma_value(cfg.n, nv)
    return dict(mu=cfg.mu, nu=nv, sigma=sg, sigma_s=sg - 0.5, gamma=g)


def cmd_tomogram(cfg: ExperimentConfig, run: Run) -> None:
    cal = resolve_calibration(cfg, run.calibration)
    run.calibration = cal
    nv, ss = cal["nu"], cal["sigma_s"]
    if ss <= 0:
        raise NonpositiveInstrumentVariance(f"sigma_s = {ss:.4g}; choose a smaller n or larger mu")
    spec = cfg.state_spec
    dim = cfg.resolved_dim()
    state = spec.build(dim)
    bound = kolmogorov_bound(cfg.alpha, cfg.N)
    lattice = 2.0 / (cfg.n * nv)
    summary = {"ks_bound": bound, "sigma_s": ss, "nu": nv, "mu": cal["mu"], "phases": []}
    run.seeds["phases"] = []
    for j, phi in enumerate(cfg.phases):
        seed = phase_seed(cfg.master_seed, j)
        run.seeds["phases"].append(seed)
        kp = build_kraus(_params(cfg, phi, spec.Phi, dim))
        ens = run_ensemble(state, kp, _run_config(cfg, seed))
        tomo = tomogram_from_ensemble(ens.m, cfg.n, nv, phi, cfg.state)
        chi = tomo.samples.chi_values

        half = cfg.grid_half_width or max(
            6.0, math.ceil(max(math.sqrt(2.0) * spec.max_amplitude() + 5.0, float(np.abs(chi).max()))
                           + 5.0 * math.sqrt(ss) + 1.0))
        grid = make_grid(-half, half, cfg.grid_h)
        theory = on_grid(lambda x: quadrature_pdf(state, phi, x), grid)
        blurred = convolve(theory, ss)
        cdf = convolution_cdf(blurred)
        ks = tomo.ks_distance(cdf)

        bandwidth = max(cfg.grid_h, lattice)
        sample_density = density_from_samples(chi, grid, bandwidth)
        restored = deconvolve(sample_density, ss + bandwidth**2, cfg.epsilon)

        run.csv(f"tomogram_{j}_samples.csv", ["trajectory", "m", "chi"], [np.arange(chi.size), ens.m, chi])
        run.csv(f"tomogram_{j}_cdf.csv", ["x", "sample_cdf", "theory_cdf", "ks_bound"],
                [grid, tomo.cdf(grid), cdf.values, np.full(grid.size, bound)])
        run.csv(f"tomogram_{j}_density.csv",
                ["chi", "theory_density", "theory_convolved", "sample_density", "deconvolved"],
                [grid, theory.values, blurred.values, sample_density.values, restored.values])
        summary["phases"].append(dict(phi=phi, seed=seed, ks_statistic=ks, passed=ks < bound,
                                      chi_mean=tomo.mean(), chi_variance=tomo.variance(),
                                      grid_half_width=half, smoothing_bandwidth=bandwidth))
        run.flags[f"phase_{j}_within_kolmogorov_band"] = ks < bound
    run.json("tomogram.json", summary)
    run.resolved.update(dim=dim, **{k: cal[k] for k in cal})


def cmd_sweep(cfg: ExperimentConfig, run: Run) -> None:
    spec = _coherent_at_beta_max(cfg)
    seeds = [cfg.master_seed + s for s in range(cfg.sweep_seeds)]
    table = sigma_s_vs_n_sweep(_calibration_input(cfg, spec), cfg.sweep_n, seeds,
                               dim=cfg.resolved_dim(), workers=cfg.workers)
    run.csv("sweep.csv", ["n", "seed", "mu", "sigma_s", "accepted", "flagged"],
            [table.n, table.seed, table.mu, table.sigma_s, table.accepted, table.flagged])
    ns, mu, ss = table.median_by_n()
    run.csv("sweep_median.csv", ["n", "mu", "sigma_s"], [ns, mu, ss])
    run.seeds["sweep"] = seeds
    run.resolved["flagged_rows"] = int(np.sum(table.flagged))


def cmd_oracle_check(cfg: ExperimentConfig, run: Run) -> None:
    if cfg.n > ENUMERATION_CAP:
        raise SizeError(f"oracle-check enumerates 2**n strings; n={cfg.n} exceeds cap {ENUMERATION_CAP}")
    spec = cfg.state_spec
    dim = cfg.dim or spec.needed_dim()
    state = spec.build(dim)
    phi = cfg.phases[0]
    kp = build_kraus(_params(cfg, phi, spec.Phi, dim))
    exact = enumerate_integrated_probability(state, kp, cfg.n)
    ens = run_ensemble(state, kp, _run_config(cfg, cfg.master_seed))
    freq = np.bincount(ens.m, minlength=cfg.n + 1) / cfg.N
    se = np.sqrt(exact * (1 - exact) / cfg.N)
    if cfg.mu is not None and spec.is_coherent:
        p = p_bar(spec.beta_abs, spec.Phi, phi, cfg.lambda_tau, cfg.mu, cfg.gamma_mode)
        p_source = "mean click probability from mu"
    else:
        p = float(np.dot(np.arange(cfg.n + 1), exact) / cfg.n)
        p_source = "exact mean click fraction"
    from scipy.stats import binom

    approx = binom.pmf(np.arange(cfg.n + 1), cfg.n, p)
    report = dict(
        n=cfg.n, N=cfg.N, state=cfg.state, phi=phi, dim=dim,
        enumeration=exact, monte_carlo=freq, standard_error=se, binomial=approx,
        binomial_p=p, binomial_p_source=p_source,
        enumeration_sum=float(math.fsum(exact)),
        max_mc_deviation=float(np.max(np.abs(freq - exact))),
        max_mc_deviation_in_se=float(np.max(np.abs(freq - exact) / np.where(se > 0, se, np.inf))),
        max_binomial_deviation=float(np.max(np.abs(approx - exact))),
    )
    run.json("oracle_check.json", report)
    run.seeds["ensemble"] = cfg.master_seed
    run.flags["enumeration_normalized"] = abs(report["enumeration_sum"] - 1.0) < 1e-9
    run.flags["monte_carlo_within_3se"] = bool(np.all(np.abs(freq - exact) <= 3 * se + 1e-12))


HANDLERS = {
    "first-click": cmd_first_click,
    "trajectories": cmd_trajectories,
    "calibrate": cmd_calibrate,
    "tomogram": cmd_tomogram,
    "sweep": cmd_sweep,
    "oracle-check": cmd_oracle_check,
}


def execute(command: str, cfg: ExperimentConfig, out: Path, calibration: dict | None = None) -> dict:
    """Run ``command`` into ``out`` and write its manifest; returns the manifest."""
    out.mkdir(parents=True, exist_ok=True)
    run = Run(out)
    run.calibration = calibration
    if cfg.coupling_product() >= 0.3:
        print(f"warning: beta_max*lambda_tau = {cfg.coupling_product():.3g} is not small; "
              "the linear click model will not hold", file=sys.stderr)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        HANDLERS[command](cfg, run)
    elapsed = time.perf_counter() - t0
    notes = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    for note in notes:
        print(f"warning: {note}", file=sys.stderr)
    manifest = {
        "tool": "cqedtomo",
        "version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "calibration": run.calibration if command in ("calibrate", "tomogram") else None,
        "resolved": dict(run.resolved, beta_max_lambda_tau=cfg.coupling_product()),
        "seeds": run.seeds,
        "flags": run.flags,
        "warnings": notes,
        "outputs": {name: sha256(out / name) for name in run.files},
        "timings": {"wall_seconds": elapsed},
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def rerun(manifest_path: Path, out: Path, workers: int | None = None) -> tuple[dict, dict]:
    """Replay a manifest into ``out``; returns (old manifest, new manifest)."""
    old = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    cfg = ExperimentConfig.from_dict(old["config"])
    if workers is not None:
        cfg = cfg.updated(workers=workers)
    new = execute(old["command"], cfg, out, old.get("calibration"))
    return old, new


# -- argument parsing -------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI-style config file")
    p.add_argument("--preset", help="start from a named parameter set (fig3..fig8, oracle)")
    p.add_argument("--seed", type=int, dest="master_seed", help="master seed (unsigned 64-bit)")
    p.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./cqedtomo-out)")
    p.add_argument("--phases", help="comma-separated quadrature phases, e.g. '-3*pi/4,0'")
    p.add_argument("--state", help="vacuum | coherent(ABS, PHASE) | fock(K) | mixed(W: SPEC; ...)")
    p.add_argument("--n", type=int, help="probes per run")
    p.add_argument("--N", type=int, help="runs per ensemble")
    p.add_argument("--lambda-tau", type=float, dest="lambda_tau")
    p.add_argument("--mu", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta-max", type=float, dest="beta_max")
    p.add_argument("--gamma-mode", choices=("series", "approx", "unity"), dest="gamma_mode")
    p.add_argument("--dim", type=int)
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cqedtomo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        _add_common(p)
        if name == "tomogram":
            p.add_argument("--calibration", type=Path,
                           help="calibration.json or manifest.json written by 'calibrate'")
    p = sub.add_parser("rerun", help="replay a manifest and verify output checksums")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--workers", type=int)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    from .config import parse_list

    cfg = preset(args.preset) if args.preset else ExperimentConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    overrides = {k: getattr(args, k) for k in ("master_seed", "state", "n", "N", "lambda_tau", "mu", "alpha",
                                              "beta_max", "gamma_mode", "dim", "workers")}
    if args.phases:
        overrides["phases"] = tuple(parse_list(args.phases))
    return cfg.updated(**overrides)


def _load_calibration(path: Path) -> dict:
    data = json.loads(path.read_text(encoding="utf-8"))
    if "command" in data and "calibration" in data:
        if data["command"] != "calibrate":
            raise UsageError(f"{path} is a {data['command']!r} manifest, not a calibration")
        data = data["calibration"]
    if not data or "nu" not in data:
        raise UsageError(f"{path} holds no calibration")
    return data


def _default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "cqedtomo-out"))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out or _default_out()
    try:
        if args.command == "rerun":
            old, new = rerun(args.manifest, out, args.workers)
            mismatched = sorted(k for k in old["outputs"] if old["outputs"][k] != new["outputs"].get(k))
            for name in sorted(old["outputs"]):
                print(f"{'MISMATCH' if name in mismatched else 'identical'}  {name}")
            return 1 if mismatched or set(old["outputs"]) != set(new["outputs"]) else 0
        cfg = _config_from_args(args)
        calibration = None
        if args.command == "tomogram" and args.calibration:
            calibration = _load_calibration(args.calibration)
        manifest = execute(args.command, cfg, out, calibration)
    except (UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for name, ok in manifest["flags"].items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"wrote {len(manifest['outputs'])} files to {out}")
    return 0 if all(manifest["flags"].values()) else 1


if __name__ == "__main__":
    sys.exit(main())
