import pytest

from ami_lte.lte_phy import default_tbs_table

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def report(request):
    """Record one acceptance line; printed in the terminal summary."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def _report(label, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
        lines.append(line)
        print(line)
        return passed

    return _report


@pytest.fixture(scope="session")
def tbs():
    return default_tbs_table()
