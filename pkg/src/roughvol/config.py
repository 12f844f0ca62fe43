"""
Typed INI configuration for the command-line front end.

Every key has a default; a config file overrides defaults and command-line
flags override the file. Unknown sections or keys and unparsable values are
collected and reported together.
"""

from __future__ import annotations

import configparser
import io
from pathlib import Path
from typing import Any, Callable

from . import market, medvedev, montecarlo, scaling

__all__ = ["ConfigValidationError", "SCHEMA", "load_config", "dump_config", "parse_int_list", "parse_float_list"]


class ConfigValidationError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def parse_int_list(text: str) -> tuple[int, ...]:
    """``"1,5,10"`` or a range ``"1-20"``, or a mix of both."""
    out = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.replace(" ", "").split(",") if p)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(fn: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(text: str):
        return None if text.strip().lower() in ("", "none") else fn(text)
    return parse


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return str(value)


_M = montecarlo.RoughModel()
_C = montecarlo.McConfig()
_F = market.FilterConfig()

# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "model": {
        "hurst": (float, _M.hurst),
        "eta": (float, _M.eta),
        "sigma0": (float, _M.sigma0),
        "horizon_days": (int, _M.horizon_days),
        "days_per_year": (float, _M.days_per_year),
    },
    "mc": {
        "n_paths": (int, _C.n_paths),
        "taus": (parse_int_list, _C.taus),
        "variance_rule": (str, _C.variance_rule),
        "max_grid": (int, _C.max_grid),
    },
    "estimate": {
        "q_grid": (parse_float_list, scaling.DEFAULT_Q_GRID),
        "delta_min": (int, 1),
        "delta_max": (int, 40),
        "diagnostic_deltas": (parse_int_list, (1, 10)),
    },
    "filter": {
        "min_price": (float, _F.min_price),
        "min_days": (int, _F.min_days),
        "max_days": (int, _F.max_days),
        "drop_settlement": (_bool, _F.drop_settlement),
        "settlement_before": (int, _F.settlement_before),
        "settlement_after": (int, _F.settlement_after),
        "moneyness_band": (float, _F.moneyness_band),
        "outlier_mads": (_opt(float), _F.outlier_mads),
    },
    "medvedev": {
        "preset": (_opt(str), None),
        "beta_rho": (_opt(float), None),
        "rho": (_opt(float), None),
        "phi": (_opt(float), None),
        "lambda0_ejump": (_opt(float), None),
        "e_jump": (_opt(float), None),
        "psi": (_opt(float), None),
        "i1": (_opt(str), None),
        "i2": (_opt(str), None),
        "i1_dsigma": (_opt(str), None),
    },
    "bias": {
        "hurst": (float, 0.04),
        "nu": (float, 1.0),
        "tau": (float, 20.0),
        "delta_min": (int, 1),
        "delta_max": (int, 40),
        "theta_min": (float, 1e-2),
        "theta_max": (float, 1e2),
        "n_theta": (int, 200),
        "tol": (float, 1e-10),
    },
}

PRESETS = {"heston": medvedev.HESTON_PRESET, "general": medvedev.GENERAL_PRESET}


def defaults() -> dict[str, dict[str, Any]]:
    return {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}


def _read_ini(path: str | Path, errors: list[str], only: tuple[str, ...] | None = None) -> dict[str, dict[str, Any]]:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        errors.append(f"{path}: {exc}")
        return {}
    out: dict[str, dict[str, Any]] = {}
    for sec in cp.sections():
        if sec not in SCHEMA or (only is not None and sec not in only):
            errors.append(f"{path}: unknown section [{sec}]")
            continue
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                errors.append(f"{path}: unknown key {sec}.{key}")
                continue
            try:
                out.setdefault(sec, {})[key] = SCHEMA[sec][key][0](raw)
            except ValueError as exc:
                errors.append(f"{path}: {sec}.{key} = {raw!r}: {exc}")
    return out


def load_config(path: str | Path | None = None, overrides: dict[str, dict[str, Any]] | None = None,
                params_path: str | Path | None = None) -> dict[str, dict[str, Any]]:
    """Defaults, then ``path``, then ``params_path`` (``[medvedev]`` only), then ``overrides``."""
    cfg = defaults()
    errors: list[str] = []
    for file, only in ((path, None), (params_path, ("medvedev",))):
        if file is None:
            continue
        for sec, vals in _read_ini(file, errors, only).items():
            cfg[sec].update(vals)
    for sec, vals in (overrides or {}).items():
        cfg[sec].update({k: v for k, v in vals.items() if v is not None})
    if errors:
        raise ConfigValidationError(errors)
    return cfg


def dump_config(cfg: dict[str, dict[str, Any]]) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    for sec, vals in cfg.items():
        cp[sec] = {k: _fmt(v) for k, v in vals.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def jsonable(cfg: dict[str, dict[str, Any]]) -> dict:
    return {sec: {k: list(v) if isinstance(v, tuple) else v for k, v in vals.items()} for sec, vals in cfg.items()}


def build_model(cfg) -> montecarlo.RoughModel:
    return montecarlo.RoughModel(**cfg["model"])


def build_mc(cfg, seed: int, workers: int) -> montecarlo.McConfig:
    return montecarlo.McConfig(base_seed=seed, workers=workers, **cfg["mc"])


def build_filter(cfg) -> market.FilterConfig:
    return market.FilterConfig(**cfg["filter"])


def build_medvedev(cfg) -> tuple[medvedev.MsModelParams, medvedev.ExpansionTerms] | None:
    """``None`` when neither a preset nor ``beta_rho``/``rho`` are given."""
    sec = dict(cfg["medvedev"])
    preset = sec.pop("preset")
    fns = {k: sec.pop(k) for k in ("i1", "i2", "i1_dsigma")}
    given = {k: v for k, v in sec.items() if v is not None}
    if preset is None and not given:
        return None
    if preset is not None:
        if preset.lower() not in PRESETS:
            raise ConfigValidationError([f"medvedev.preset must be one of {sorted(PRESETS)}, got {preset!r}"])
        base = PRESETS[preset.lower()]
        fields = {k: getattr(base, k) for k in ("beta_rho", "rho", "phi", "lambda0_ejump", "e_jump", "psi")}
        fields.update(given)
    else:
        missing = [k for k in ("beta_rho", "rho") if k not in given]
        if missing:
            raise ConfigValidationError([f"medvedev.{k} is required without a preset" for k in missing])
        fields = given
    params = medvedev.MsModelParams(**fields)
    kw = {}
    for k, spec in fns.items():
        if spec is not None:
            try:
                kw[k] = medvedev.load_callable(spec)
            except (ImportError, AttributeError, TypeError, ValueError) as exc:
                raise ConfigValidationError([f"medvedev.{k}: {exc}"]) from exc
    return params, medvedev.ExpansionTerms(**kw)
