import time

import pytest

from btfuzz import fuzzing, library

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    detail = dict(item.user_properties).get("detail", "")
    _CRITERIA.setdefault(mark.args[0], []).append((rep.passed, item.name, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        for passed, name, detail in _CRITERIA[n]:
            terminalreporter.write_line(
                f"criterion {n}: {'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip())


# --------------------------------------------------------------------------
# shared campaigns (expensive; computed once per session)

CAMPAIGN_BUDGET = 500
CAMPAIGN_SEEDS = (0, 1, 2, 3, 4)


@pytest.fixture(scope="session")
def example1():
    return library.construction_cut_in()


@pytest.fixture(scope="session")
def example2():
    return library.cut_in()


@pytest.fixture(scope="session")
def bo_campaigns(example1):
    """Default-config campaigns on the construction cut-in, one per seed, with wall time."""
    out = {}
    for seed in CAMPAIGN_SEEDS:
        t0 = time.perf_counter()
        ledger = fuzzing.run_campaign(example1, fuzzing.CampaignConfig(budget=CAMPAIGN_BUDGET, seed=seed))
        out[seed] = (ledger, time.perf_counter() - t0)
    return out


@pytest.fixture(scope="session")
def grid_campaign(example1):
    t0 = time.perf_counter()
    ledger = fuzzing.grid_campaign(example1, steps=5)
    return ledger, time.perf_counter() - t0


@pytest.fixture(scope="session")
def seed0_ledger_file(bo_campaigns, tmp_path_factory):
    path = tmp_path_factory.mktemp("ledger") / "ledger.ndjson"
    bo_campaigns[0][0].save(path)
    return str(path)


@pytest.fixture(scope="session")
def example1_file(example1, tmp_path_factory):
    from btfuzz import files
    path = tmp_path_factory.mktemp("scenario") / "example1.json"
    files.save_scenario(path, example1)
    return str(path)


@pytest.fixture
def cli():
    """Run the command line in-process; returns the exit code."""
    from btfuzz.cli import main

    def call(*argv):
        return main([str(a) for a in argv])
    return call
