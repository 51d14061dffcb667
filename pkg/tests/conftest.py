import pytest

from cdt_lab import world
from cdt_lab.ecosim import AdEcosystem
from cdt_lab.scheduler import RunConfig, default_devices, execute_run, preset

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def personas():
    return {p.id: p for p in world.shipped_personas()}


@pytest.fixture(scope="session")
def filters():
    return world.load_filters()


@pytest.fixture(scope="session")
def category_db():
    return world.load_category_db()


@pytest.fixture(scope="session")
def sim_config():
    return world.load_sim_config()


@pytest.fixture(scope="session")
def small_run(personas, filters, sim_config):
    """One short stateful run of persona 1 (N=3)."""
    pre = preset("1a")
    cfg = RunConfig(N=3, runs=1, persona_id=1, setup_code="1a")
    eco = AdEcosystem(sim_config, run_seed=11)
    rec = execute_run(cfg, default_devices(), eco, filters, personas[1], pre.control, seed=11)
    return rec, eco
