"""Workbench configuration: INI-style file with schema validation and defaults.

Every training-protocol constant (epochs, batch size, learning rate, early
stopping, split) appears here as a default so a config file only needs to
override what it changes.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, asdict
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class WorkbenchConfig:
    # mesh
    nx: int = 122
    ny: int = 14
    x0: float = -1.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 0.05
    nu: float = 0.1
    # parameter grid
    a_min: float = 1.0
    a_max: float = 1.0e4
    lam_min: float = 5.0
    lam_max: float = 25.0
    n_a: int = 12
    n_lam: int = 12
    # test point
    test_a: float = 7692.5384
    test_lam: float = 21.9230
    # domain decomposition
    n_sub_x: int = 2
    n_sub_y: int = 2
    # rom sizes
    n_omega: int = 6
    n_gamma: int = 3
    # autoencoder architecture
    hidden_width: int = 0        # 0 = auto: min(2N, 4096)
    band_width: int = 9
    band_sep: int = 0            # 0 = auto: ~sqrt(N)
    # training protocol
    epochs: int = 2000
    batch_size: int = 32
    learning_rate: float = 1e-3
    patience: int = 300
    plateau_factor: float = 0.5
    plateau_patience: int = 50
    min_learning_rate: float = 1e-6
    validation_fraction: float = 0.1
    # hyper-reduction
    n_hr_nodes: int = 100
    n_weak: int = 0              # 0 = auto: max(1, n_constraints // 2)
    strong_constraints: bool = False
    # solver
    kkt_tol: float = 1e-8
    max_sqp_iter: int = 80
    # reproducibility / artifacts
    seed: int = 0
    artifact_root: str = "artifacts"

    _SECTIONS = {
        "mesh": ["nx", "ny", "x0", "x1", "y0", "y1", "nu"],
        "parameters": ["a_min", "a_max", "lam_min", "lam_max", "n_a", "n_lam",
                       "test_a", "test_lam"],
        "dd": ["n_sub_x", "n_sub_y"],
        "rom": ["n_omega", "n_gamma"],
        "autoencoder": ["hidden_width", "band_width", "band_sep"],
        "training": ["epochs", "batch_size", "learning_rate", "patience",
                     "plateau_factor", "plateau_patience", "min_learning_rate",
                     "validation_fraction"],
        "hr": ["n_hr_nodes", "n_weak", "strong_constraints"],
        "solver": ["kkt_tol", "max_sqp_iter"],
        "workbench": ["seed", "artifact_root"],
    }

    def validate(self) -> None:
        if self.nx < 3 or self.ny < 3:
            raise ConfigError("mesh must have at least 3 points per direction")
        if self.a_max < self.a_min or self.lam_max < self.lam_min:
            raise ConfigError("empty parameter range")
        if self.n_a < 1 or self.n_lam < 1:
            raise ConfigError("parameter grid resolutions must be >= 1")
        if self.nu <= 0:
            raise ConfigError("viscosity must be positive")
        if self.n_sub_x < 1 or self.n_sub_y < 1:
            raise ConfigError("subdomain counts must be >= 1")
        if self.n_sub_x > self.nx - 2 or self.n_sub_y > self.ny - 2:
            raise ConfigError("more subdomains than interior nodes in a direction")
        if self.n_omega < 1 or self.n_gamma < 0:
            raise ConfigError("invalid ROM sizes")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation fraction must lie in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ConfigError("invalid training protocol constants")
        if self.n_hr_nodes < 1:
            raise ConfigError("need at least one HR node")
        if self.kkt_tol <= 0:
            raise ConfigError("solver tolerance must be positive")

    def content_hash(self) -> str:
        """Hash of everything that affects artifacts (excludes artifact_root)."""
        d = asdict(self)
        d.pop("artifact_root")
        blob = ";".join(f"{k}={d[k]!r}" for k in sorted(d))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def artifact_dir(self) -> Path:
        return Path(self.artifact_root) / f"run_{self.content_hash()}"

    def to_ini(self) -> str:
        lines = []
        for section, keys in self._SECTIONS.items():
            lines.append(f"[{section}]")
            for k in keys:
                lines.append(f"{k} = {getattr(self, k)}")
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_ini(cls, path) -> "WorkbenchConfig":
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path}")
        known = {k: sec for sec, keys in cls._SECTIONS.items() for k in keys}
        kwargs = {}
        for section in parser.sections():
            if section not in cls._SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser[section].items():
                if key not in known or known[key] != section:
                    raise ConfigError(f"unknown key '{key}' in section [{section}]")
                default = getattr(cls, key)
                if isinstance(default, bool):
                    kwargs[key] = raw.strip().lower() in ("1", "true", "yes", "on")
                elif isinstance(default, int):
                    kwargs[key] = int(raw)
                elif isinstance(default, float):
                    kwargs[key] = float(raw)
                else:
                    kwargs[key] = raw
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg
