"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or usage (or a failed acceptance
criterion), 2 numerical failure. Every run writes ``manifest.json`` with the
resolved configuration, the seed and a SHA-256 of every output file.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config, spec_from_config
from .correlation import constrained_eigen, correlation_matrix, eigen_decompose, fcl, mp_clip
from .errors import AlignmentError, CorrkitError, NumericalError, ParseError, ValidationError
from .io import sha256_file, write_json, write_matrix, write_table
from .market_data import (
    CriterionPanel,
    load_criteria,
    load_return_panel,
    simulate_market_detailed,
    write_return_panel,
)
from .rng import child_seed, stream

COMMANDS = ("simulate", "estimate", "maxvar", "epps", "horizon", "beta", "diffusion", "acceptance")


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment configuration")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides config)")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--threads", type=int, help="worker threads (recorded; runs are single-threaded)")
    p = _Parser(prog="corrkit", description="Correlation-matrix modeling toolkit.")
    p.add_argument("--version", action="version", version=f"corrkit {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common], help=f"run the {name} pipeline")
        if name == "acceptance":
            sp.add_argument("--criteria", help="comma-separated subset, e.g. 1,2,5")
            sp.add_argument("--no-replay", action="store_true", help="skip the determinism replay")
    return p


class Run:
    """Output bookkeeping for one command."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name):
        p = self.out / name
        self.files.append(p)
        return p

    def manifest(self, extra=None):
        outputs = {p.name: sha256_file(p) for p in self.files}
        doc = {"corrkit_version": __version__, "config": self.cfg.resolved(), "seed": self.cfg.seed,
               "outputs": outputs}
        if extra:
            doc.update(extra)
        write_json(self.out / "manifest.json", doc)


# ------------------------------------------------------------------- inputs

def _market(cfg):
    """Loaded panel (with optional index), or a simulated market."""
    inp = cfg.inputs
    if inp.get("returns"):
        panel = load_return_panel(inp["returns"], inp.get("missing_policy", "drop_asset"))
        index = None
        if inp.get("index"):
            index = _load_index(inp["index"], panel)
        return panel, index, None
    spec = spec_from_config(cfg.generator)
    mk = simulate_market_detailed(spec, child_seed(cfg.seed, "market"))
    return mk.panel, mk.index_returns, mk


def _load_index(path, panel):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        ts = np.array([int(r[0]) for r in rows[1:]], dtype=np.int64)
        x = np.array([float(r[1]) for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise ParseError(f"index file: {exc}") from exc
    if not np.array_equal(ts, panel.timestamps):
        raise AlignmentError("index timestamps do not match the return panel")
    return x


def _sectors(cfg, panel):
    path = cfg.inputs.get("sectors")
    if not path:
        return None
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    m = {r[0].strip(): r[1].strip() for r in rows[1:]}
    missing = [a for a in panel.assets if a not in m]
    if missing:
        raise ValidationError(f"no sector for assets {missing[:5]}")
    return np.array([m[a] for a in panel.assets])


def _criteria(cfg, panel, mk):
    paths = cfg.inputs.get("criteria") or []
    if paths:
        return [load_criteria(p) for p in paths]
    if mk is None:
        raise ValidationError("maxvar needs inputs.criteria when returns are loaded from a file")
    # synthetic criteria: style loadings observed with noise
    B = np.asarray(spec_from_config(cfg.generator).factor_loadings)
    rng = stream(cfg.seed, "criteria")
    out = []
    for k in range(1, B.shape[1]):
        v = B[:, k] + 0.3 * np.std(B[:, k]) * rng.standard_normal(B.shape[0])
        out.append(CriterionPanel(["synthetic"], panel.assets, v[None], name=f"style{k}"))
    if not out:
        raise ValidationError("generator has no style factor to derive a criterion from")
    return out


# ----------------------------------------------------------------- commands

def cmd_simulate(cfg, run, args):
    spec = spec_from_config(cfg.generator)
    mk = simulate_market_detailed(spec, child_seed(cfg.seed, "market"))
    write_return_panel(mk.panel, run.path("returns.csv"))
    ts = mk.panel.timestamps
    write_table(run.path("factors.csv"), ["timestamp", *[f"F{k}" for k in range(mk.factor_returns.shape[1])]],
                ([t, *row] for t, row in zip(ts, mk.factor_returns)))
    if mk.index_returns is not None:
        write_table(run.path("index.csv"), ["timestamp", "index"], zip(ts, mk.index_returns))
        write_table(run.path("true_betas.csv"), ["timestamp", *mk.panel.assets],
                    ([t, *row] for t, row in zip(ts, mk.true_betas)))
    return {"T": mk.panel.T, "N": mk.panel.N}


def cmd_estimate(cfg, run, args):
    panel, _, _ = _market(cfg)
    b = cfg.block("estimate")
    C = correlation_matrix(panel, b.get("estimator", "pearson"), float(b.get("halflife", 60.0)))
    es = eigen_decompose(C)
    write_matrix(run.path("correlation.csv"), C.matrix, panel.assets)
    write_table(run.path("eigenvalues.csv"), ["k", "eigenvalue"], zip(range(1, C.N + 1), es.eigenvalues))
    write_matrix(run.path("eigenvectors.csv"), es.eigenvectors, panel.assets)
    report = {"estimator": C.estimator, "halflife": C.halflife, "sample_T": C.sample_T,
              "period_seconds": C.period_seconds, "N": C.N, "top_eigenvalues": es.eigenvalues[:10]}
    if b.get("clip", True) and panel.T > panel.N:
        Cc = mp_clip(C, panel.T / panel.N)
        write_matrix(run.path("correlation_clipped.csv"), Cc.matrix, panel.assets)
        report["clipped_top_eigenvalues"] = eigen_decompose(Cc).eigenvalues[:10]
    write_json(run.path("correlation.json"), report)
    return report


def cmd_maxvar(cfg, run, args):
    from .maxvar import (MonotoneRankBasis, build_factor_set, factor_names, fama_french_weights,
                         maxvar_optimize, neutralize, ols_betas, rank_weights)
    panel, _, mk = _market(cfg)
    b = cfg.block("maxvar")
    basis = MonotoneRankBasis(int(b.get("n_knots", 5)))
    sectors = _sectors(cfg, panel)
    crits = _criteria(cfg, panel, mk)
    C = correlation_matrix(panel)
    betas = ols_betas(panel.returns, panel.returns.mean(axis=1))
    ports, summary = [], []
    for c in crits:
        p = maxvar_optimize(C, c.row(-1), betas, sectors, basis, c.name)
        ports.append(p.weights)
        fr = fcl(C, neutralize(rank_weights(c.row(-1)), betas, sectors))
        ff = fcl(C, neutralize(fama_french_weights(c.row(-1), float(b.get("quantile", 0.2))), betas, sectors))
        summary.append({"criterion": c.name, "fcl_maxvar": p.fcl_value, "fcl_rank_linear": fr,
                        "fcl_quintile": ff, "coefficients": p.coefficients,
                        "market_neutral": p.market_neutral, "beta_neutral": p.beta_neutral,
                        "sector_neutral": p.sector_neutral})
    write_table(run.path("portfolios.csv"), ["asset", *[c.name for c in crits]],
                ([a, *row] for a, row in zip(panel.assets, np.column_stack(ports))))
    F = build_factor_set(panel, crits, sectors, betas, C=C, basis=basis)
    names = factor_names(crits, sectors)
    red = constrained_eigen(C, F)
    write_table(run.path("factor_set.csv"), ["asset", *names], ([a, *row] for a, row in zip(panel.assets, F)))
    write_table(run.path("reduced_eigenvalues.csv"), ["k", "constrained_eigenvalue"],
                zip(range(1, red.K + 1), red.constrained_eigenvalues))
    report = {"portfolios": summary, "K": red.K, "factor_names": names}
    write_json(run.path("portfolios.json"), report)
    return {"K": red.K}


def _curve_outputs(run, curves, stem, unit):
    from .epps import fit_lag_law
    from .svg import line_plot
    rows = [(h, c.k, v, n) for c in curves for h, v, n in zip(c.horizons_seconds, c.values, c.n_samples)]
    write_table(run.path(f"{stem}_curves.csv"), ["horizon_seconds", "k", "lambda", "n_samples"], rows)
    fits = []
    for c in curves:
        if len(c.values) >= 4 and c.horizons_seconds[-1] >= 10 * c.horizons_seconds[0]:
            f = fit_lag_law(c)
            fits.append({"k": c.k, "lambda_inf": f.lambda_inf, "tau_c_seconds": f.tau_c_seconds,
                         "rms_relative_error": f.rms_relative_error, "at_lower_bound": f.at_lower_bound})
    line_plot(run.path(f"{stem}.svg"), {f"lambda_{c.k}": (c.horizons_seconds / unit, c.values) for c in curves},
              title="eigenvalues vs horizon", xlabel="horizon" + (" (days)" if unit > 1 else " (s)"),
              ylabel="eigenvalue", xlog=True)
    return fits


def cmd_epps(cfg, run, args):
    from .epps import eigenvalue_scale_curve
    panel, _, _ = _market(cfg)
    b = cfg.block("epps")
    hs = b.get("horizons_seconds")
    if not hs:
        hs = [panel.period_seconds * m for m in (1, 2, 3, 6, 12, 30, 60, 120, 180, 360)
              if panel.T // m >= 30]
    curves = eigenvalue_scale_curve(panel, hs, int(b.get("k_max", 3)))
    fits = _curve_outputs(run, curves, "epps", 1)
    write_json(run.path("epps_fit.json"), {"fits": fits})
    return {"fits": fits}


def cmd_horizon(cfg, run, args):
    from .longhorizon import autocorrelation_profile, horizon_eigen_curve
    panel, _, _ = _market(cfg)
    b = cfg.block("horizon")
    days = [h for h in b.get("horizons_days", [1, 2, 5, 10, 20]) if panel.T // max(1, int(h * 86400 // panel.period_seconds)) >= 30]
    curves = horizon_eigen_curve(panel, days, int(b.get("k_max", 3)))
    _curve_outputs(run, curves, "horizon", 86400)
    acf = autocorrelation_profile(panel, np.ones(panel.N) / panel.N, min(int(b.get("max_lag", 20)), panel.T // 10))
    write_table(run.path("acf.csv"), ["lag", "acf", "stderr"], zip(acf.lags, acf.acf, acf.stderr))
    report = {"horizons_days": days, "lambda_1": curves[0].values, "acf_1": acf.acf[1], "acf_1_se": acf.stderr[1]}
    write_json(run.path("horizon.json"), report)
    return report


def cmd_beta(cfg, run, args):
    from .beta import ReactiveParams, bias_test, estimate_beta, leverage_eigen_test
    panel, index, mk = _market(cfg)
    if index is None:
        index = panel.returns.mean(axis=1)
    b = cfg.block("beta")
    lev = (cfg.generator.get("leverage") or {}) if mk is not None else {}
    rp = ReactiveParams(
        float(b.get("systematic_leverage_slope", lev.get("systematic_slope", 0.0))),
        float(b.get("specific_leverage_slope", lev.get("specific_slope", 0.0))),
        float(b.get("elasticity_exponent", lev.get("elasticity", 0.0))),
        float(b.get("vol_halflife_periods", lev.get("vol_halflife", 120.0))),
        float(b.get("fast_vol_halflife_periods", lev.get("fast_vol_halflife", 20.0))),
        float(b.get("zscore_halflife_periods", lev.get("zscore_halflife", 20.0))),
    )
    W = min(int(b.get("window", 250)), panel.T)
    cols = {m: estimate_beta(panel, index, m, W, rp) for m in ("ols", "reactive", "trimean_quantile")}
    write_table(run.path("betas.csv"), ["asset", "ols", "reactive", "trimean_quantile"],
                ([a, *(cols[m][i].beta for m in cols)] for i, a in enumerate(panel.assets)))
    report = {"reactive_params": rp, "window": W}
    strategy = b.get("strategy", "momentum")
    if panel.T - W >= 30:
        report["bias"] = [bias_test(panel, index, strategy, m, W, rp, seed=child_seed(cfg.seed, "bias"),
                                    rebalance=int(b.get("rebalance", 1)))._asdict()
                          for m in ("ols", "reactive")]
    if panel.T >= 500:
        le = leverage_eigen_test(panel, index, min(3, panel.N), seed=child_seed(cfg.seed, "regimes"))
        report["leverage_eigen"] = {"ratios": [r._asdict() for r in le.ratios], "n_down": le.n_down, "n_up": le.n_up}
    write_json(run.path("beta.json"), report)
    return {"window": W}


def cmd_diffusion(cfg, run, args):
    from .acceptance import diffusion_setup
    from .diffusion import eigvec_overlap_decay, increment_spectrum, simulate_corr_diffusion
    from .ou import OuParams
    from .svg import histogram
    b = cfg.block("diffusion")
    K = int(b.get("n_factors", 24))
    if K < 3:
        raise ValidationError("diffusion needs n_factors >= 3")
    n_sectors = 10 if K >= 12 else 0
    base, R, H = diffusion_setup(child_seed(cfg.seed, "diffusion-setup"), n_criteria=K - 1 - n_sectors,
                                 n_sectors=n_sectors, N=max(240, 10 * K))
    ou = OuParams(float(b.get("relaxation", 60.0)), float(b.get("log_fcl_std", 0.3)))
    path = simulate_corr_diffusion(base, ou, R, int(b.get("n_steps", 5000)), child_seed(cfg.seed, "diffusion"), gram=H)
    taus = [int(t) for t in b.get("taus", [1, 5, 10, 20])]
    rows, first = [], None
    for t in taus:
        s = increment_spectrum(path, t)
        first = first or s
        rows.append((t, s.std, s.excess_kurtosis, s.ks_distance, float(np.max(np.abs(s.eigenvalues.sum(axis=1))))))
    write_table(run.path("increment_spectrum.csv"), ["tau", "std", "excess_kurtosis", "ks_semicircle", "max_trace"], rows)
    rad = 2.0 * first.std
    xs = np.linspace(-rad, rad, 201)
    dens = 2.0 / (np.pi * rad * rad) * np.sqrt(np.maximum(rad * rad - xs * xs, 0.0))
    histogram(run.path("increment_spectrum.svg"), first.pooled, title=f"increment eigenvalues, tau={first.tau}",
              xlabel="eigenvalue", overlay=(xs, dens))
    ov = eigvec_overlap_decay(path, [0] + taus, k_max=min(5, K))
    write_table(run.path("overlap.csv"), ["tau", "k", "overlap", "fcl_drift"],
                [(t, k + 1, ov.overlap[i, k], ov.fcl_drift[i, k]) for i, t in enumerate(ov.taus) for k in range(ov.overlap.shape[1])])
    write_json(run.path("diffusion.json"), {"K": K, "base_fcl": base, "spectra": [dict(zip(
        ("tau", "std", "excess_kurtosis", "ks_semicircle", "max_trace"), r)) for r in rows]})
    return {"K": K}


def cmd_acceptance(cfg, run, args):
    from .acceptance import CRITERIA, run_all
    nums = None
    if args.criteria:
        try:
            nums = [int(x) for x in args.criteria.split(",") if x.strip()]
        except ValueError:
            raise ValidationError("--criteria expects comma-separated integers") from None
        bad = [n for n in nums if n not in CRITERIA]
        if bad:
            raise ValidationError(f"unknown criteria {bad}")
    results = run_all(cfg.seed, nums, replay=not args.no_replay, echo=print)
    doc = {str(n): {"title": r.title, "passed": r.passed, "metrics": r.metrics} for n, r in results.items()}
    write_json(run.path("acceptance.json"), doc)
    failed = [n for n, r in results.items() if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return {"failed": failed}


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def run(argv=None):
    """Execute one command; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        cfg = load_config(args.config, args.command, args.seed, args.out, args.threads)
        r = Run(cfg)
        result = HANDLERS[args.command](cfg, r, args)
        r.manifest()
        if args.command == "acceptance" and result["failed"]:
            return 1
        return 0
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except (CorrkitError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except np.linalg.LinAlgError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
