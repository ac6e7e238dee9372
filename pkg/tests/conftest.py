import numpy as np
import pytest

from volmix.ingest import PriceSeries

T0 = 1_600_000_000


@pytest.fixture
def two_sessions():
    """Session A at minutes 0..6, session B at minutes 100..104."""
    minutes = np.r_[np.arange(7), 100 + np.arange(5)]
    ts = T0 + 60 * minutes
    prices = 100.0 + np.arange(12, dtype=float)
    return PriceSeries(ts, prices, np.array([7]))


def minute_series(returns, start=T0, p0=100.0):
    r = np.asarray(returns, dtype=float)
    prices = p0 * np.exp(np.concatenate([[0.0], np.cumsum(r)]))
    return PriceSeries(start + 60 * np.arange(r.size + 1), prices)


# -- acceptance bookkeeping: one line per criterion in the terminal summary --

ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    number, title = marker.args
    entry = ACCEPTANCE.setdefault(number, {"title": title, "ok": True, "details": []})
    entry["ok"] = entry["ok"] and rep.passed
    entry["details"] += [str(v) for k, v in item.user_properties if k == "detail"]
    if not rep.passed:
        entry["details"].append(f"{item.name} failed")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE):
        e = ACCEPTANCE[number]
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {number} [{status}] {e['title']}: " + "; ".join(e["details"]))
