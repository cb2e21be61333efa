import pytest

from returnguard import datagen, pipeline

from helpers import SMALL_GEN, small_config

_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def small_dataset():
    return datagen.generate(datagen.GenConfig(seed=3, **SMALL_GEN))


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    """A complete pipeline directory on a scaled-down dataset."""
    root = tmp_path_factory.mktemp("small_run")
    pipeline.run_all(root, 7, small_config())
    return root


def pytest_configure(config):
    config.stash[_CRITERIA] = {}
    config.addinivalue_line("markers", "criterion(number, title): an acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    results = item.config.stash[_CRITERIA]
    if number not in results or rep.failed:
        results[number] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_CRITERIA, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, passed, detail = results[number]
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title}"
        terminalreporter.write_line(f"{line} ({detail})" if detail else line)
