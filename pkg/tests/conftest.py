"""Pytest configuration and fixtures."""

import json
import logging
import math

import numpy as np
import pytest

from holonomy_lab.main import main
from holonomy_lab.services.finsler_metrics import (
    BryantShenMetric,
    EuclideanMetric,
    FunkMetric,
)


@pytest.fixture
def funk_plus():
    return FunkMetric(1)


@pytest.fixture
def funk_minus():
    return FunkMetric(-1)


@pytest.fixture
def euclid():
    return EuclideanMetric()


@pytest.fixture
def bryant():
    """Bryant-Shen sphere with alpha = pi/4 (c = 1 at the origin)."""
    return BryantShenMetric(math.pi / 4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def run_cli(capsys):
    """Run the command line; returns (exit code, parsed JSON report or None)."""

    def _run(*argv: str):
        code = main(list(argv))
        out = capsys.readouterr().out
        if "--json" in argv and out.strip():
            return code, json.loads(out)
        return code, None

    yield _run
    package_logger = logging.getLogger("holonomy_lab")
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)
