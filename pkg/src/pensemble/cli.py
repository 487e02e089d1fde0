"""Command-line experiment runner.

Subcommands ``sample``, ``marginal``, ``landauer`` and ``theta`` run a JSON
experiment config and write a data CSV plus ``manifest.json`` into the output
directory.  ``compare`` checks a sampled histogram CSV against an analytic
one.  Exit codes: 0 success, 1 validation or input error, 2 numerical
diagnostic failure (including a failed comparison).
"""
import argparse
import csv
import hashlib
import json
import os
import sys
import time
import warnings

import numpy as np

from . import __version__, kernels
from .analytic import build_marginal
from .config import ConfigError, validate
from .errors import DiagnosticError, InvalidInputError, SolverError
from .landauer import erasure_sweep
from .models import (DEGENERATE_SPIN_BATH, build_degenerate_spin_bath,
                     build_truncated_oscillator_bath, gibbs_energy, p_ensemble_mean_energy,
                     solve_statistical_temperature, truncation_size)
from .sampler import (ChainConfig, LowAcceptanceWarning, chain_statistics, histogram_z,
                      run_chain, total_variation)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2
DEFAULT_FIDELITIES = [float(f) for f in np.round(np.linspace(0.5, 0.99, 50), 12)]

SAMPLE_COLUMNS = ["z_bin_center", "density", "stderr", "analytic_density"]
MARGINAL_COLUMNS = ["z_bin_center", "analytic_density", "bin_probability"]
MOMENT_COLUMNS = ["kT", "M", "beta_prime", "mean_z", "var_z"]
BELL_COLUMNS = ["fidelity", "M", "bound_kBTheta"]
ERASURE_COLUMNS = ["kT", "M", "beta_prime", "bound_kBTheta", "bound_kT", "delta_s_vn",
                   "log_term", "derivative_term"]
THETA_COLUMNS = ["kT", "M", "beta", "beta_prime", "solve_residual", "gibbs_energy",
                 "ensemble_energy"]


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_table(path, header, rows):
    """CSV with a header row; floats at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in header])


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def build_model(model_cfg, kt):
    """Model for one temperature; the oscillator size follows the truncation rule if unset."""
    if model_cfg["kind"] == DEGENERATE_SPIN_BATH:
        return build_degenerate_spin_bath(model_cfg["D"], model_cfg["E0"], model_cfg["lambda"],
                                          model_cfg["hbar_omega0"])
    M = model_cfg["M"] or truncation_size(1.0 / kt, model_cfg["hbar_omega"])
    return build_truncated_oscillator_bath(M, model_cfg["hbar_omega"], model_cfg["lambda"],
                                           model_cfg["hbar_omega0"])


def _context(cfg, model, kt):
    return solve_statistical_temperature(model, 1.0 / kt, cfg.thermal.get("beta_prime"))


def _run_info(kt, model, ctx):
    return {"kT": kt, "M": model.dims[1], "beta": ctx.beta, "beta_prime": ctx.beta_prime,
            "solve_residual": ctx.solve_residual, "vacuous": ctx.vacuous,
            "overridden": ctx.overridden}


def _with_kt(rows, kt, sweep):
    return [{"kT": kt, **r} for r in rows] if sweep else rows


def run_sample(cfg, out_dir):
    temps = cfg.temperatures
    sweep = len(temps) > 1
    ch = cfg.chain
    chain_cfg = ChainConfig(ch["samples"], ch["burn_in"], ch["thinning"], ch["seed"], ch["chains"])
    workers = min(ch["chains"], os.cpu_count() or 1)
    rows, runs, files = [], [], {}
    for i, kt in enumerate(temps):
        model = build_model(cfg.model, kt)
        ctx = _context(cfg, model, kt)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", LowAcceptanceWarning)
            samples = run_chain(model, ctx, chain_cfg, workers=workers)
        centers, dens, se, edges = histogram_z(samples, ch["bins"])
        width = np.diff(edges)
        marg = build_marginal(model, ctx)
        prob = marg.bin_probabilities(edges)
        stats = chain_statistics(samples)
        mean_a, var_a = marg.moments()
        info = _run_info(kt, model, ctx)
        info.update({"acceptance_rate": samples.acceptance_rate, "mean_z": stats["mean_z"],
                     "var_z": stats["var_z"], "se_var_z": stats["se_var"], "tau": stats["tau"],
                     "analytic_mean_z": mean_a, "analytic_var_z": var_a,
                     "tv_distance": total_variation(dens * width, prob),
                     "warnings": [str(w.message) for w in caught]})
        runs.append(info)
        block = [{"z_bin_center": c, "density": d, "stderr": s, "analytic_density": p / w}
                 for c, d, s, p, w in zip(centers, dens, se, prob, width)]
        rows.extend(_with_kt(block, kt, sweep))
        if cfg.output["raw_chain"]:
            name = f"chain_{i}.csv" if sweep else "chain.csv"
            samples.write_csv(os.path.join(out_dir, name))
            files[name] = None
    cols = (["kT"] if sweep else []) + SAMPLE_COLUMNS
    write_table(os.path.join(out_dir, "sample.csv"), cols, rows)
    files["sample.csv"] = None
    seeds = [ch["seed"] + k for k in range(ch["chains"])]
    return files, runs, seeds


def run_marginal(cfg, out_dir):
    temps = cfg.temperatures
    sweep = len(temps) > 1
    edges = np.linspace(-1.0, 1.0, cfg.chain["bins"] + 1)
    width = np.diff(edges)
    centers = 0.5 * (edges[1:] + edges[:-1])
    rows, moments, runs = [], [], []
    for kt in temps:
        model = build_model(cfg.model, kt)
        ctx = _context(cfg, model, kt)
        marg = build_marginal(model, ctx)
        prob = marg.bin_probabilities(edges)
        mean, var = marg.moments()
        block = [{"z_bin_center": c, "analytic_density": p / w, "bin_probability": p}
                 for c, p, w in zip(centers, prob, width)]
        rows.extend(_with_kt(block, kt, sweep))
        moments.append({"kT": kt, "M": model.dims[1], "beta_prime": ctx.beta_prime,
                        "mean_z": mean, "var_z": var})
        runs.append(_run_info(kt, model, ctx))
    write_table(os.path.join(out_dir, "marginal.csv"),
                (["kT"] if sweep else []) + MARGINAL_COLUMNS, rows)
    write_table(os.path.join(out_dir, "moments.csv"), MOMENT_COLUMNS, moments)
    return {"marginal.csv": None, "moments.csv": None}, runs, []


def run_landauer(cfg, out_dir):
    lan = cfg.landauer
    path = os.path.join(out_dir, "landauer.csv")
    if lan["scenario"] == "bell-fidelity":
        grid = lan["fidelities"] or DEFAULT_FIDELITIES
        rows = erasure_sweep("bell-fidelity", grid, sizes=lan["sizes"])
        write_table(path, BELL_COLUMNS, rows)
        return {"landauer.csv": None}, [], []
    template = build_model(cfg.model, cfg.temperatures[0]) if cfg.model else None
    rows = erasure_sweep("thermal-erasure", cfg.temperatures, template)
    write_table(path, ERASURE_COLUMNS, rows)
    runs = [{"kT": r["kT"], "M": r["M"], "beta_prime": r["beta_prime"]} for r in rows]
    return {"landauer.csv": None}, runs, []


def run_theta(cfg, out_dir):
    rows, runs = [], []
    for kt in cfg.temperatures:
        model = build_model(cfg.model, kt)
        ctx = _context(cfg, model, kt)
        spec = model.composite_spectrum()
        rows.append({"kT": kt, "M": model.dims[1], "beta": ctx.beta, "beta_prime": ctx.beta_prime,
                     "solve_residual": ctx.solve_residual,
                     "gibbs_energy": gibbs_energy(spec, ctx.beta),
                     "ensemble_energy": p_ensemble_mean_energy(spec, ctx.beta_prime)})
        runs.append(_run_info(kt, model, ctx))
    write_table(os.path.join(out_dir, "theta.csv"), THETA_COLUMNS, rows)
    return {"theta.csv": None}, runs, []


RUNNERS = {"sample": run_sample, "marginal": run_marginal, "landauer": run_landauer,
           "theta": run_theta}


def run_experiment(cfg):
    """Run a validated config, writing the data CSV(s) and ``manifest.json``.

    Returns:
        The manifest dict.
    """
    out_dir = cfg.output["dir"]
    os.makedirs(out_dir, exist_ok=True)
    start = time.perf_counter()
    files, runs, seeds = RUNNERS[cfg.experiment](cfg, out_dir)
    manifest = {
        "tool": "pensemble",
        "version": __version__,
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "runs": runs,
        "seeds": seeds,
        "backend": kernels.BACKEND,
        "wall_clock_s": time.perf_counter() - start,
        "outputs": {name: sha256(os.path.join(out_dir, name)) for name in sorted(files)},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _read_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")
    return rows


def _column(rows, names, path):
    for name in names:
        if name in rows[0]:
            return np.array([float(r[name]) for r in rows])
    raise InvalidInputError(f"{path}: missing column, expected one of {names}")


def _compare_block(z_s, p_s, z_a, p_a):
    if z_s.shape != z_a.shape or not np.allclose(z_s, z_a, rtol=0, atol=1e-12):
        raise InvalidInputError("grid mismatch between sampled and analytic tables")
    edges = np.concatenate([[-1.0], 0.5 * (z_s[1:] + z_s[:-1]), [1.0]])
    w = np.diff(edges)
    p, q = p_s * w, p_a * w
    if not p.sum() > 0 or not q.sum() > 0:
        raise InvalidInputError("a histogram has no mass")
    p, q = p / p.sum(), q / q.sum()
    var = [float(np.dot(x, z_s ** 2) - np.dot(x, z_s) ** 2) for x in (p, q)]
    if var[1] > 0:
        ratio = var[0] / var[1]
    else:
        ratio = 1.0 if var[0] <= 0 else np.inf
    return total_variation(p, q), ratio


def compare_report(sampled_path, analytic_path, tv_max=0.05, var_rtol=0.1):
    """TV distance and variance ratio between a sampled and an analytic histogram.

    The sampled table needs ``z_bin_center`` and ``density`` (or
    ``analytic_density``); the analytic
    table needs ``z_bin_center`` and ``analytic_density`` (or ``density``).
    Tables with a ``kT`` column are compared per temperature.

    Returns:
        dict with per-block ``tv_distance``, ``variance_ratio``, ``pass`` and
        an overall ``pass``.
    """
    rs, ra = _read_table(sampled_path), _read_table(analytic_path)
    key_s = _column(rs, ["kT"], sampled_path) if "kT" in rs[0] else np.zeros(len(rs))
    key_a = _column(ra, ["kT"], analytic_path) if "kT" in ra[0] else np.zeros(len(ra))
    z_s = _column(rs, ["z_bin_center"], sampled_path)
    p_s = _column(rs, ["density", "analytic_density"], sampled_path)
    z_a = _column(ra, ["z_bin_center"], analytic_path)
    p_a = _column(ra, ["analytic_density", "density"], analytic_path)
    keys = sorted(set(key_s.tolist()))
    if keys != sorted(set(key_a.tolist())):
        raise InvalidInputError("grid mismatch: temperature sets differ")
    blocks = []
    for k in keys:
        tv, ratio = _compare_block(z_s[key_s == k], p_s[key_s == k],
                                   z_a[key_a == k], p_a[key_a == k])
        ok = bool(tv < tv_max and abs(ratio - 1.0) <= var_rtol)
        blocks.append({"kT": k if len(keys) > 1 or "kT" in rs[0] else None,
                       "tv_distance": tv, "variance_ratio": ratio, "pass": ok})
    return {"tv_max": tv_max, "var_rtol": var_rtol, "blocks": blocks,
            "pass": all(b["pass"] for b in blocks)}


def _error_tag(exc):
    tag = "cli"
    tb = exc.__traceback__
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("pensemble."):
            tag = name.split(".", 1)[1]
        tb = tb.tb_next
    return tag


def _load_config(args):
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read config {args.config}: {exc.strerror}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"malformed JSON in {args.config}: {exc}"]) from None
    if isinstance(doc, dict) and "tool" in doc and isinstance(doc.get("config"), dict):
        doc = doc["config"]
    if not isinstance(doc, dict):
        raise ConfigError(["top level: must be an object"])
    doc["experiment"] = args.command
    for section, key, val in (("chain", "seed", args.seed), ("chain", "chains", args.chains),
                              ("output", "dir", args.out),
                              ("thermal", "beta_prime", args.override_beta_prime)):
        if val is not None:
            if not isinstance(doc.get(section, {}), dict):
                raise ConfigError([f"{section}: must be an object"])
            doc.setdefault(section, {})[key] = val
    return validate(doc)


def _parser():
    p = argparse.ArgumentParser(prog="pensemble", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        s = sub.add_parser(name, help=f"run a {name} experiment")
        s.add_argument("--config", required=True, metavar="PATH", help="JSON config or manifest")
        s.add_argument("--seed", type=int, metavar="U64", help="override chain.seed")
        s.add_argument("--out", metavar="DIR", help="override output.dir")
        s.add_argument("--chains", type=int, metavar="K", help="override chain.chains")
        s.add_argument("--override-beta-prime", type=float, metavar="X",
                       help="use this beta' (1/eV) instead of solving for it")
    c = sub.add_parser("compare", help="compare sampled and analytic histograms")
    c.add_argument("sampled", help="sample CSV (z_bin_center, density, ...)")
    c.add_argument("analytic", help="analytic CSV (z_bin_center, analytic_density, ...)")
    c.add_argument("--tv-max", type=float, default=0.05)
    c.add_argument("--var-rtol", type=float, default=0.1)
    c.add_argument("--out", metavar="PATH", help="also write the report as JSON")
    return p


def main(argv=None):
    """Entry point; returns the process exit code."""
    args = _parser().parse_args(argv)
    try:
        if args.command == "compare":
            report = compare_report(args.sampled, args.analytic, args.tv_max, args.var_rtol)
            text = json.dumps(report, indent=2, sort_keys=True)
            print(text)
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(text + "\n")
            return EXIT_OK if report["pass"] else EXIT_NUMERICAL
        cfg = _load_config(args)
        manifest = run_experiment(cfg)
        print(json.dumps({"outputs": manifest["outputs"], "dir": cfg.output["dir"]}, indent=2))
        return EXIT_OK
    except ConfigError as exc:
        for v in exc.violations:
            print(f"error [config]: {v}", file=sys.stderr)
        return EXIT_INVALID
    except InvalidInputError as exc:
        print(f"error [{_error_tag(exc)}]: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error [cli]: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, DiagnosticError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error [{_error_tag(exc)}]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
