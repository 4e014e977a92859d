"""Layered run configuration and run-directory manifests.

Settings come from an INI file with sections [geometry], [model], [run] and
[tension]; command-line flags override file values, which override defaults.
Invalid input raises ConfigError, which the CLI maps to exit code 2. The
FOGDRIP_THREADS environment variable caps worker parallelism everywhere.
"""

from __future__ import annotations

import configparser
import json
import os
import platform
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from .lattice import LatticeGeometry
from .measure import PhaseParams
from .wulff import (
    TENSION_MODELS,
    isotropic_tension,
    lattice_l1_tension,
    numeric_path_tension,
    wulff_construct,
)


class ConfigError(ValueError):
    """Invalid configuration; the CLI reports it and exits with code 2."""


@dataclass
class RunConfig:
    # [geometry]
    N: int = 8
    R: int = 1
    hmax: int = 4
    # [model]
    beta: float = 1.5
    pv: float = 0.2
    ps: float = 0.8
    f: float = 0.0
    delta: float = 0.0
    # [run]
    sweeps: int = 1000
    burnin: int | None = None
    thinning: int = 1
    seed: int = 0
    replicates: int = 1
    epsilon: float = 1.0
    eta: float = 0.25
    # [tension]
    tension_model: str = "isotropic"
    tension_beta: float | None = None   # None: reuse the model beta
    directions: int = 720

    def geometry(self) -> LatticeGeometry:
        try:
            return LatticeGeometry(N=self.N, R=self.R, hmax=self.hmax)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def params(self) -> PhaseParams:
        try:
            return PhaseParams.from_probabilities(self.pv, self.ps, self.f)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def tension(self):
        beta = self.beta if self.tension_beta is None else self.tension_beta
        try:
            if self.tension_model == "isotropic":
                return isotropic_tension(beta)
            if self.tension_model == "lattice-l1":
                return lattice_l1_tension(beta)
            if self.tension_model == "numeric-path":
                return numeric_path_tension(beta)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        raise ConfigError(f"unknown tension model {self.tension_model!r}; "
                          f"choose from {TENSION_MODELS}")

    def shape(self):
        return wulff_construct(self.tension(), directions=self.directions)

    def as_dict(self) -> dict:
        return asdict(self)


# section -> {ini key: (attribute, converter)}
_SCHEMA = {
    "geometry": {"n": ("N", int), "r": ("R", int), "hmax": ("hmax", int)},
    "model": {"beta": ("beta", float), "pv": ("pv", float),
              "ps": ("ps", float), "f": ("f", float),
              "delta": ("delta", float)},
    "run": {"sweeps": ("sweeps", int), "burnin": ("burnin", int),
            "thinning": ("thinning", int), "seed": ("seed", int),
            "replicates": ("replicates", int), "epsilon": ("epsilon", float),
            "eta": ("eta", float)},
    "tension": {"model": ("tension_model", str),
                "beta": ("tension_beta", float),
                "directions": ("directions", int)},
}


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the INI file at path, then non-None overrides."""
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        try:
            read = parser.read(path)
        except configparser.Error as e:
            raise ConfigError(f"cannot parse {path}: {e}") from e
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                attr, conv = _SCHEMA[section][key]
                try:
                    setattr(cfg, attr, conv(raw))
                except ValueError as e:
                    raise ConfigError(
                        f"bad value for [{section}] {key}: {raw!r}") from e
    for attr, value in (overrides or {}).items():
        if value is None:
            continue
        if not hasattr(cfg, attr):
            raise ConfigError(f"unknown setting {attr!r}")
        setattr(cfg, attr, value)
    return cfg


def thread_cap() -> int:
    """Worker cap from FOGDRIP_THREADS, defaulting to the CPU count."""
    raw = os.environ.get("FOGDRIP_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as e:
        raise ConfigError(f"FOGDRIP_THREADS={raw!r} is not an integer") from e
    if n < 1:
        raise ConfigError(f"FOGDRIP_THREADS must be >= 1, got {n}")
    return n


def _versions() -> dict:
    import numba
    import numpy
    import scipy
    try:
        from importlib.metadata import version
        own = version("fogdrip")
    except Exception:
        own = "unknown"
    return {"python": platform.python_version(), "fogdrip": own,
            "numpy": numpy.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__}


def write_manifest(run_dir, config: RunConfig, command: str,
                   extra: dict | None = None) -> Path:
    """Drop manifest.json capturing everything needed to reproduce the run."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config": config.as_dict(),
        "seed": config.seed,
        "threads": thread_cap(),
        "versions": _versions(),
    }
    if extra:
        manifest.update(extra)
    path = run_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path
