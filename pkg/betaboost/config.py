"""
Configuration handling for betaboost.

Loads configuration from YAML files with sensible defaults.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import yaml

TABLE_PATH_ENV = "BETA_TABLE_PATH"


@dataclass
class McParams:
    """Monte Carlo integration parameters."""

    max_iterations: int = 5_000_000
    record_freq: int = 1000
    stop_check_freq: int = 10_000
    precision_percent: float = 10.0
    confidence: float = 0.95
    central_probability: float = 0.6826894921  # One-sigma mass
    batch_size: int = 4096


@dataclass
class Config:
    """Configuration for betaboost computations."""

    # Model
    eta: float = 0.01  # tau of the reference distribution
    kappa: float = 0.5  # penalty is kappa * log(N) per parameter
    d: int = 2  # in-degree bound and separating-set size
    collection: str = "all-subsets"  # or "parent-based"
    stratum_size: str = "stratum"  # N_s per stratum, or "global" N

    # Monte Carlo
    max_iterations: int = 5_000_000
    record_freq: int = 1000
    stop_check_freq: int = 10_000
    precision_percent: float = 10.0
    confidence: float = 0.95
    central_probability: float = 0.6826894921
    batch_size: int = 4096

    # Table
    exact_cutoff: int = 200  # exact CDFs up to this N
    exact_ceiling: int = 300  # refuse exact requests above this N
    table_path: Optional[str] = None
    kl_stepsize: float = 0.1
    kl_level_ratio: float = 2.0
    kl_num_levels: int = 4
    upper_points: int = 10

    # Bounds
    exp_w: bool = True  # 1/(12 exp W(x/8)) reading of F-tilde

    # Run
    seed: int = 0
    parallel: int = 1

    # Logging
    log_level: str = "INFO"
    log_file: Optional[str] = None

    def mc_params(self) -> McParams:
        """Return the Monte Carlo parameter bundle."""
        return McParams(
            max_iterations=self.max_iterations,
            record_freq=self.record_freq,
            stop_check_freq=self.stop_check_freq,
            precision_percent=self.precision_percent,
            confidence=self.confidence,
            central_probability=self.central_probability,
            batch_size=self.batch_size,
        )


def load_config(path: Optional[str] = None) -> Config:
    """
    Load configuration from YAML file.

    Searches for config in order:
    1. Explicit path argument
    2. ./betaboost.yaml
    3. ~/.betaboost.yaml
    4. ~/.config/betaboost/config.yaml

    If no file found, returns default configuration.

    Args:
        path: Explicit path to config file

    Returns:
        Config object
    """
    search_paths = []

    if path:
        search_paths.append(Path(path))
    else:
        search_paths.extend(
            [
                Path("betaboost.yaml"),
                Path.home() / ".betaboost.yaml",
                Path.home() / ".config" / "betaboost" / "config.yaml",
            ]
        )

    for config_path in search_paths:
        if config_path.exists():
            return _load_yaml_config(config_path)

    return Config()


def _load_yaml_config(path: Path) -> Config:
    """Load config from a YAML file."""
    with open(path) as f:
        data = yaml.safe_load(f) or {}

    # Flatten nested structure
    model = data.get("model", {})
    mc = data.get("monte_carlo", {})
    table = data.get("table", {})
    bounds = data.get("bounds", {})
    run = data.get("run", {})
    logging_section = data.get("logging", {})

    return Config(
        # Model
        eta=float(model.get("eta", 0.01)),
        kappa=float(model.get("kappa", 0.5)),
        d=int(model.get("d", 2)),
        collection=model.get("collection", "all-subsets"),
        stratum_size=model.get("stratum_size", "stratum"),
        # Monte Carlo
        max_iterations=int(mc.get("max_iterations", 5_000_000)),
        record_freq=int(mc.get("record_freq", 1000)),
        stop_check_freq=int(mc.get("stop_check_freq", 10_000)),
        precision_percent=float(mc.get("precision_percent", 10.0)),
        confidence=float(mc.get("confidence", 0.95)),
        central_probability=float(mc.get("central_probability", 0.6826894921)),
        batch_size=int(mc.get("batch_size", 4096)),
        # Table
        exact_cutoff=int(table.get("exact_cutoff", 200)),
        exact_ceiling=int(table.get("exact_ceiling", 300)),
        table_path=table.get("path"),
        kl_stepsize=float(table.get("kl_stepsize", 0.1)),
        kl_level_ratio=float(table.get("kl_level_ratio", 2.0)),
        kl_num_levels=int(table.get("kl_num_levels", 4)),
        upper_points=int(table.get("upper_points", 10)),
        # Bounds
        exp_w=bool(bounds.get("exp_w", True)),
        # Run
        seed=int(run.get("seed", 0)),
        parallel=int(run.get("parallel", 1)),
        # Logging
        log_level=logging_section.get("level", "INFO"),
        log_file=logging_section.get("file"),
    )


def resolve_table_path(config: Config) -> Optional[str]:
    """Get the table path, falling back to $BETA_TABLE_PATH."""
    if config.table_path:
        return config.table_path
    return os.environ.get(TABLE_PATH_ENV)


def setup_logging(config: Config) -> logging.Logger:
    """
    Configure the package logger from the config.

    Args:
        config: Configuration with log_level and log_file

    Returns:
        The configured "betaboost" logger
    """
    logger = logging.getLogger("betaboost")
    logger.setLevel(config.log_level.upper())
    for old in list(logger.handlers):
        logger.removeHandler(old)
        old.close()

    handler: logging.Handler
    if config.log_file:
        handler = logging.FileHandler(config.log_file)
    else:
        handler = logging.StreamHandler()
    handler.setFormatter(
        logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
    )
    logger.addHandler(handler)
    return logger
