"""YAML experiment configuration and generator-spec construction.

Schema (every key optional)::

    seed: 7
    out: results
    threads: 1
    inputs:
      returns: panel.csv          # timestamp,asset_1,...
      missing_policy: drop_asset  # or zero_fill
      index: index.csv            # timestamp,index (beta command)
      criteria: [book.csv]        # date,asset_1,... (maxvar command)
      sectors: sectors.csv        # asset,sector
    generator:                    # used when inputs.returns is absent
      n_assets: 50
      horizon_steps: 2000
      step_seconds: 86400
      vol: 0.01
      shares: [0.3, 0.05]         # market + style variance shares
      market_dispersion: 0.0
      structure_seed: 0
      lag_tau_seconds: 60         # optional, exclusive with trend/leverage
      trend: {relaxation_periods: 20, variance_share: 0.1, mode: factor}
      leverage: {systematic_slope: 0.25, specific_slope: 0.3, elasticity: 0.0,
                 vol_halflife: 120, fast_vol_halflife: 20, zscore_halflife: 20,
                 max_absorb: 0.9, idio_vol_of_vol: 0.0, idio_vol_relaxation: 20}
    estimate: {estimator: pearson, halflife: 60, clip: true}
    maxvar: {n_knots: 5, quantile: 0.2}
    epps: {horizons_seconds: [10, 30, 60, 300, 600, 1800, 3600], k_max: 3}
    horizon: {horizons_days: [1, 2, 5, 10, 20], k_max: 3, max_lag: 20}
    beta: {method: reactive, window: 250, strategy: momentum, rebalance: 1}
    diffusion: {n_factors: 24, n_steps: 5000, relaxation: 60, log_fcl_std: 0.3,
                taus: [1, 5, 10, 20], wishart_window: 20}
"""

import copy
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ParameterError, ValidationError
from .leverage import LeverageParams
from .market_data import LeverageSpec, TrendSpec, factor_market_spec, trend_for_share

DEFAULTS = {
    "seed": 0,
    "out": "corrkit-out",
    "threads": 1,
    "inputs": {"missing_policy": "drop_asset"},
    "generator": {
        "n_assets": 50,
        "horizon_steps": 2000,
        "step_seconds": 86400,
        "vol": 0.01,
        "shares": [0.3, 0.05],
        "market_dispersion": 0.0,
        "structure_seed": 0,
    },
    "estimate": {"estimator": "pearson", "halflife": 60.0, "clip": True},
    "maxvar": {"n_knots": 5, "quantile": 0.2},
    "epps": {"horizons_seconds": None, "k_max": 3},
    "horizon": {"horizons_days": [1, 2, 5, 10, 20], "k_max": 3, "max_lag": 20},
    "beta": {"method": "reactive", "window": 250, "strategy": "momentum", "rebalance": 1},
    "diffusion": {"n_factors": 24, "n_steps": 5000, "relaxation": 60.0, "log_fcl_std": 0.3,
                  "taus": [1, 5, 10, 20], "wishart_window": 20},
}

_LEVERAGE_KEYS = ("systematic_slope", "specific_slope", "elasticity", "vol_halflife",
                  "fast_vol_halflife", "zscore_halflife")


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    command: str
    seed: int
    out: str
    threads: int
    inputs: dict = field(default_factory=dict)
    generator: dict = field(default_factory=dict)
    blocks: dict = field(default_factory=dict)

    def block(self, name):
        return self.blocks.get(name, {})

    def resolved(self):
        """Full configuration as plain data, as echoed in the manifest."""
        return {"command": self.command, "seed": self.seed, "out": self.out,
                "threads": self.threads, "inputs": self.inputs, "generator": self.generator,
                **self.blocks}


def load_config(path=None, command="", seed=None, out=None, threads=None):
    raw = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ValidationError(f"config {path} is not valid YAML: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValidationError("config root must be a mapping")
    known = set(DEFAULTS)
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    cfg = _merge(DEFAULTS, raw)
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["out"] = out
    if threads is not None:
        cfg["threads"] = threads
    try:
        s = int(cfg["seed"])
    except (TypeError, ValueError):
        raise ValidationError("seed must be an integer") from None
    if not 0 <= s < 2 ** 64:
        raise ValidationError("seed must be an unsigned 64-bit integer")
    t = int(cfg["threads"])
    if t < 1:
        raise ValidationError("threads must be >= 1")
    blocks = {k: cfg[k] for k in ("estimate", "maxvar", "epps", "horizon", "beta", "diffusion")}
    return ExperimentConfig(command, s, str(cfg["out"]), t, cfg["inputs"], cfg["generator"], blocks)


def spec_from_config(g):
    """Build a :class:`SyntheticMarketSpec` from a ``generator`` block."""
    g = dict(g)
    allowed = {"n_assets", "horizon_steps", "step_seconds", "vol", "shares", "market_dispersion",
               "structure_seed", "lag_tau_seconds", "trend", "leverage"}
    unknown = set(g) - allowed
    if unknown:
        raise ValidationError(f"unknown generator keys: {sorted(unknown)}")
    kwargs = {}
    if g.get("lag_tau_seconds") is not None:
        kwargs["lag_tau_seconds"] = float(g["lag_tau_seconds"])
    if g.get("trend") is not None:
        t = dict(g["trend"])
        ou = trend_for_share(float(t.get("variance_share", 0.1)), float(t.get("relaxation_periods", 20)))
        kwargs["trend"] = TrendSpec((ou,), t.get("mode", "factor"))
    if g.get("leverage") is not None:
        lv = dict(g["leverage"])
        lp = LeverageParams(**{k: float(lv[k]) for k in _LEVERAGE_KEYS if k in lv})
        extra = {k: float(lv[k]) for k in ("max_absorb", "idio_vol_of_vol", "idio_vol_relaxation") if k in lv}
        bad = set(lv) - set(_LEVERAGE_KEYS) - set(extra)
        if bad:
            raise ValidationError(f"unknown leverage keys: {sorted(bad)}")
        kwargs["leverage"] = LeverageSpec(lp, **extra)
    try:
        return factor_market_spec(
            int(g["n_assets"]), list(g["shares"]), int(g["horizon_steps"]), int(g["step_seconds"]),
            vol=float(g["vol"]), market_dispersion=float(g.get("market_dispersion", 0.0)),
            structure_seed=int(g.get("structure_seed", 0)), **kwargs,
        )
    except (KeyError, TypeError) as exc:
        raise ParameterError(f"invalid generator block: {exc}") from exc
