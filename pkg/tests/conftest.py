"""Shared, session-cached pipeline artifacts for the four-bus case study."""

from __future__ import annotations

import sys
import warnings

import numpy as np
import pytest

from certsynth.bisim import optimize_certificate
from certsynth.feedback import build_library, initial_centers
from certsynth.powergrid.scenarios import build_fourbus
from certsynth.synth import SynthesisProblem, robust_formula, synthesize


@pytest.fixture(scope="session")
def fourbus():
    return build_fourbus()


@pytest.fixture(scope="session")
def fourbus_cert(fourbus):
    return optimize_certificate(fourbus.system, fourbus.synthesis_schedule(), fourbus.formula(),
                                fourbus.cert_options)


@pytest.fixture(scope="session")
def fourbus_problem(fourbus, fourbus_cert):
    rf = robust_formula(fourbus.formula(), fourbus_cert)
    return SynthesisProblem(fourbus.system, fourbus.synthesis_schedule(), rf, 0.01,
                            weights=fourbus.weights, certificate=fourbus_cert)


@pytest.fixture(scope="session")
def fourbus_synth(fourbus_problem):
    return synthesize(fourbus_problem)


@pytest.fixture(scope="session")
def fourbus_library(fourbus, fourbus_cert, fourbus_problem):
    centers = initial_centers(fourbus_cert, fourbus.system.n, 5, "support")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_library(fourbus_problem, centers, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            terminalreporter.write_line(results[num])
