"""INI run configuration: schema, validation, flag overrides and the manifest.

Sections mirror the package modules.  Every value is typed by the schema and
unknown sections or keys are rejected.  Transmit SNR is written in dB in the
file and converted to linear here, and nowhere else.
"""
from __future__ import annotations

import configparser
import datetime as _dt
import math
from dataclasses import dataclass

import numpy as np

from .cfmath import QuadratureConfig
from .dlt import SearchConfig
from .geometry import DEFAULT_BS_ANGLES, CellTopology
from .policies import PolicyKind


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


def _floats(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _words(text):
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _fmt(value):
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_DEFAULT_ANGLES = tuple(float(a) for a in DEFAULT_BS_ANGLES)

# section -> key -> (parser, default)
SCHEMA = {
    "geometry": {
        "bs_distance": (_floats, (1000.0,) * 6),
        "bs_angle": (_floats, _DEFAULT_ANGLES),
        "pl0_db": (float, 37.0),
        "d0": (float, 1000.0),
        "alpha": (_floats, (3.0,)),
        "min_distance": (float, 1.0),
    },
    "channel": {
        "rho_db": (float, 43.0),
        "w0_mag2": (float, 1.0),
    },
    "cfmath": {
        "t_min": (float, 1e-10),
        "t_max_cap": (float, 1e6),
        "tail_epsilon": (float, 1e-12),
        "abs_tol": (float, 1e-8),
        "rel_tol": (float, 1e-8),
        "max_subdivisions": (int, 4000),
        "nodes_per_panel": (int, 16),
    },
    "dlt": {
        "n_max": (int, 4),
        "r_max": (float, 12.0),
        "step": (float, 0.1),
        "tol": (float, 1e-3),
    },
    "policies": {
        "policies": (_words, tuple(p.value for p in PolicyKind)),
        "delta": (int, 1),
    },
    "mac": {
        "t_c": (float, 1000.0),
        "pf_update": (str, "per_slot"),
    },
    "sim": {
        "users": (_ints, tuple(range(5, 55, 5))),
        "user_radii": (_floats, (150.0, 200.0, 250.0, 300.0, 400.0)),
        "horizon": (int, 200_000),
        "trials": (int, 20),
        "r": (_floats, (150.0, 250.0, 400.0)),
        "link_r": (float, 250.0),
        "theta": (float, math.pi / 2),
        "samples": (int, 100_000),
        "processes": (int, 100_000),
        "approx": (_words, ("ga", "ipla")),
        "n": (_ints, ()),
        "quantiles": (int, 99),
    },
}

RUN_KEYS = ("command", "seed", "created")


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, path):
        section, key = path.split(".")
        return self.values[section][key]

    @property
    def rho(self) -> float:
        return 10.0 ** (self["channel.rho_db"] / 10.0)

    def topology(self, alpha=None) -> CellTopology:
        dist = self["geometry.bs_distance"]
        ang = self["geometry.bs_angle"]
        if len(dist) != len(ang):
            raise ConfigError("geometry.bs_angle: needs one angle per entry of bs_distance")
        try:
            return CellTopology(
                bs_distance=(0.0,) + dist,
                bs_angle=(0.0,) + ang,
                pl0_db=self["geometry.pl0_db"],
                d0=self["geometry.d0"],
                alpha=self["geometry.alpha"][0] if alpha is None else alpha,
                min_distance=self["geometry.min_distance"],
            )
        except ValueError as exc:
            raise ConfigError(f"geometry: {exc}") from None

    @property
    def quadrature(self) -> QuadratureConfig:
        try:
            return QuadratureConfig(**self.values["cfmath"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"cfmath: {exc}") from None

    @property
    def search(self) -> SearchConfig:
        v = self.values["dlt"]
        try:
            return SearchConfig(r_max=v["r_max"], step=v["step"], tol=v["tol"])
        except ValueError as exc:
            raise ConfigError(f"dlt: {exc}") from None

    @property
    def policies(self):
        out = []
        for name in self["policies.policies"]:
            try:
                out.append(PolicyKind.parse(name))
            except ValueError as exc:
                raise ConfigError(f"policies.policies: {exc}") from None
        return tuple(out)

    def to_ini(self, command, seed, created=None) -> str:
        created = created or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        cp = configparser.ConfigParser(interpolation=None)
        cp["run"] = {"command": command, "seed": str(seed), "created": created}
        for section, keys in self.values.items():
            cp[section] = {k: _fmt(v) for k, v in keys.items()}
        lines = []
        for section in cp.sections():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in cp[section].items())
            lines.append("")
        return "\n".join(lines)


def defaults() -> dict:
    return {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}


def parse_value(section, key, text):
    try:
        parser, _ = SCHEMA[section][key]
    except KeyError:
        raise ConfigError(f"{section}.{key}: unknown key") from None
    try:
        return parser(text)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key}: cannot parse {text!r}") from None


def load(path=None, overrides=None):
    """Defaults, then the INI file, then ``overrides`` {"section.key": value}.

    Returns (RunConfig, seed or None from a manifest's [run] section).
    """
    values = defaults()
    seed = None
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"config: {exc}") from None
        for section in cp.sections():
            if section == "run":
                for key, text in cp[section].items():
                    if key not in RUN_KEYS:
                        raise ConfigError(f"run.{key}: unknown key")
                if "seed" in cp[section]:
                    seed = parse_value_int("run.seed", cp[section]["seed"])
                continue
            if section not in SCHEMA:
                raise ConfigError(f"{section}: unknown section")
            for key, text in cp[section].items():
                values[section][key] = parse_value(section, key, text)
    for path_key, value in (overrides or {}).items():
        section, key = path_key.split(".")
        if key not in SCHEMA.get(section, {}):
            raise ConfigError(f"{path_key}: unknown key")
        values[section][key] = parse_value(section, key, value) if isinstance(value, str) else value
    cfg = RunConfig(values)
    validate(cfg)
    return cfg, seed


def parse_value_int(path, text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{path}: cannot parse {text!r}") from None


def validate(cfg: RunConfig):
    def need(ok, path, msg):
        if not ok:
            raise ConfigError(f"{path}: {msg}")

    cfg.topology()
    for a in cfg["geometry.alpha"]:
        need(a > 0, "geometry.alpha", "must be positive")
    need(len(cfg["geometry.alpha"]) > 0, "geometry.alpha", "needs at least one value")
    need(np.isfinite(cfg["channel.rho_db"]), "channel.rho_db", "must be finite")
    need(cfg["channel.w0_mag2"] > 0, "channel.w0_mag2", "must be positive")
    cfg.quadrature
    cfg.search
    need(cfg["dlt.n_max"] >= 1, "dlt.n_max", "must be at least 1")
    cfg.policies
    need(cfg["policies.delta"] >= 1, "policies.delta", "must be at least 1")
    need(cfg["mac.t_c"] >= 1, "mac.t_c", "must be at least 1")
    need(cfg["mac.pf_update"] in ("per_slot", "per_process"), "mac.pf_update",
         "must be per_slot or per_process")
    need(len(cfg["sim.users"]) > 0, "sim.users", "needs at least one value")
    for n in cfg["sim.users"]:
        need(n == 1 or (n > 0 and n % len(cfg["sim.user_radii"]) == 0), "sim.users",
             f"each entry must be 1 or a multiple of {len(cfg['sim.user_radii'])}")
    need(all(r > 0 for r in cfg["sim.user_radii"]), "sim.user_radii", "must be positive")
    need(cfg["sim.horizon"] >= 1, "sim.horizon", "must be at least 1")
    need(cfg["sim.trials"] >= 1, "sim.trials", "must be at least 1")
    need(len(cfg["sim.r"]) > 0, "sim.r", "needs at least one value")
    need(all(r > 0 for r in cfg["sim.r"]), "sim.r", "distances must be positive")
    need(cfg["sim.link_r"] > 0, "sim.link_r", "distance must be positive")
    need(cfg["sim.samples"] >= 1000, "sim.samples", "must be at least 1000")
    need(cfg["sim.processes"] >= 2, "sim.processes", "must be at least 2")
    for a in cfg["sim.approx"]:
        need(a in ("ga", "ipla"), "sim.approx", f"unknown approximation {a!r}")
    for n in cfg["sim.n"]:
        need(1 <= n <= cfg["dlt.n_max"], "sim.n", "attempt counts must lie in 1..n_max")
    need(cfg["sim.quantiles"] >= 1, "sim.quantiles", "must be at least 1")
