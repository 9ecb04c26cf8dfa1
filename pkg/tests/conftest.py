"""Shared fixtures: calibrated default configuration and an in-process CLI runner."""

from __future__ import annotations

import math

import pytest

from floquet_rings import LatticeParams, default_config_path, load_config
from floquet_rings.cli import main as cli_main

THETA_A = math.asin(math.sqrt(0.98))


@pytest.fixture(scope="session")
def default_cfg():
    """The shipped calibrated configuration."""
    return load_config(default_config_path())


@pytest.fixture(scope="session")
def lattice_params():
    """Strong-coupling lattice at the shipped geometry."""
    return LatticeParams(theta=THETA_A)


@pytest.fixture()
def run_cli(tmp_path):
    """Invoke the command-line tool in-process; returns (exit_code, out_dir)."""

    def _run(command, *extra, config=None, seed=None, out=None):
        out_dir = out if out is not None else tmp_path / f"run_{command}"
        argv = [command, "--out", str(out_dir)]
        if config is not None:
            argv += ["--config", str(config)]
        if seed is not None:
            argv += ["--seed", str(seed)]
        argv += [str(a) for a in extra]
        return cli_main(argv), out_dir

    return _run
