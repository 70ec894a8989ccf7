"""Global configuration: TOML file, VCTRACE_* environment overrides,
then command-line flags (strongest). The effective config is echoed into
every output directory for reproducibility audits.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from vctrace.errors import ConfigError
from vctrace.ioutil import atomic_write

_PATH_KEYS = (
    "schema_file",
    "lexicon",
    "kg_nodes",
    "kg_edges",
    "documents",
    "de_ground_truth",
    "dti_table",
    "loc_table",
    "pheno_table",
    "templates_dir",
    "replay_cache",
)


@dataclass
class GlobalConfig:
    # paths (any may be unset; commands check what they need)
    schema_file: str | None = None
    lexicon: str | None = None
    kg_nodes: str | None = None
    kg_edges: str | None = None
    documents: str | None = None
    de_ground_truth: str | None = None
    dti_table: str | None = None
    loc_table: str | None = None
    pheno_table: str | None = None
    templates_dir: str | None = None
    replay_cache: str | None = None
    # thresholds
    tau: float = 0.5
    alpha: float = 0.05
    top_n: int = 25
    n_nonreg: int = 100
    k: int = 5
    max_neighbors: int = 100
    top_k_docs: int = 5
    test_fraction: float = 0.2
    n_test: int | None = None
    # run
    seed: int = 0
    provider: str = "stub"
    endpoint: str | None = None
    dti_endpoint: str | None = None
    jobs: int = 1

    def validate(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must lie in [0,1], got {self.tau}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0,1), got {self.alpha}")
        for name in ("top_n", "n_nonreg", "k", "max_neighbors", "top_k_docs", "jobs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in (0,1)")
        if self.provider not in ("stub", "replay", "live"):
            raise ConfigError(f"unknown provider mode {self.provider!r}")
        for key in _PATH_KEYS:
            value = getattr(self, key)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"configured path {key} does not exist: {value}")

    def to_record(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def echo(self, out_dir: str | Path) -> None:
        path = Path(out_dir) / "effective_config.json"
        with atomic_write(path) as fh:
            json.dump(self.to_record(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _coerce(name: str, value: str, target_type: type):
    try:
        if target_type is float:
            return float(value)
        if target_type is int:
            return int(value)
        return value
    except ValueError:
        raise ConfigError(f"bad value for {name}: {value!r}") from None


def load_config(path: str | Path | None = None, env: dict | None = None) -> GlobalConfig:
    """Config file (TOML sections flattened), then VCTRACE_* env overrides."""
    cfg = GlobalConfig()
    known = {f.name: f for f in fields(GlobalConfig)}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        flat: dict[str, object] = {}
        for key, value in data.items():
            if isinstance(value, dict):
                flat.update(value)
            else:
                flat[key] = value
        for key, value in flat.items():
            if key not in known:
                raise ConfigError(f"{path}: unknown config key {key!r}")
            setattr(cfg, key, value)
    env = os.environ if env is None else env
    for name, f in known.items():
        env_key = f"VCTRACE_{name.upper()}"
        if env_key in env:
            target = f.type
            base = float if "float" in str(target) else int if "int" in str(target) else str
            setattr(cfg, name, _coerce(name, env[env_key], base))
    return cfg
