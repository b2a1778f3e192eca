from __future__ import annotations

import pytest

from pondc.addressing import derive_address_plan
from pondc.routing import compute_forwarding_tables
from pondc.topo import build_cell, build_prior_testbed, build_reference_testbed

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ref8():
    return build_reference_testbed()


@pytest.fixture(scope="session")
def prior5():
    return build_prior_testbed()


@pytest.fixture(scope="session")
def cell3():
    return build_cell("C", ["R1", "R2", "R3"])


@pytest.fixture(scope="session")
def cell3_plan(cell3):
    return derive_address_plan(cell3)


@pytest.fixture(scope="session")
def cell3_tables(cell3, cell3_plan):
    return compute_forwarding_tables(cell3, cell3_plan)
