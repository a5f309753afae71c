import pytest
from hypothesis import HealthCheck, settings

# property tests run heavy numpy kernels; wall-clock deadlines just flake
settings.register_profile(
    "toolkit",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("toolkit")


def pytest_configure(config):
    config._acceptance_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    criterion = marker.kwargs.get("criterion") or marker.args[0]
    title = marker.kwargs.get("title") or marker.args[1]
    results = item.config._acceptance_results
    if report.when == "call":
        results[criterion] = (title, report.passed)
    elif report.failed:
        # setup/teardown crash counts as a failed criterion
        results[criterion] = (title, False)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance_results", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(results):
        title, passed = results[criterion]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {criterion}: {status} - {title}")
