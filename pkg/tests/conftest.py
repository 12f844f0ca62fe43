import sys
from collections import OrderedDict
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: "OrderedDict[str, dict]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title): acceptance criterion covered by the test")


def pytest_runtest_setup(item):
    m = item.get_closest_marker("criterion")
    if m is not None:
        item.user_properties.append(("criterion", (str(m.args[0]), m.args[1])))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    cid, title = props["criterion"]
    entry = _CRITERIA.setdefault(cid, {"title": title, "tests": OrderedDict()})
    name = report.nodeid.split("::")[-1]
    prev = entry["tests"].get(name, "passed")
    if report.failed:
        entry["tests"][name] = "failed"
    elif report.skipped:
        entry["tests"][name] = "skipped" if prev == "passed" else prev
    elif report.when == "call":
        entry["tests"].setdefault(name, "passed")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(_CRITERIA, key=lambda c: int(c)):
        entry = _CRITERIA[cid]
        tests = entry["tests"]
        failed = [n for n, s in tests.items() if s == "failed"]
        skipped = [n for n, s in tests.items() if s == "skipped"]
        verdict = "FAIL" if failed else ("SKIP" if skipped and len(skipped) == len(tests) else "PASS")
        line = f"criterion {cid:>2} {verdict}: {entry['title']} ({len(tests) - len(failed)}/{len(tests)} checks)"
        if failed:
            line += "; failing: " + ", ".join(failed)
        tr.write_line(line, red=bool(failed), green=not failed)


@pytest.fixture(scope="session")
def tmp_out(tmp_path_factory):
    return tmp_path_factory.mktemp("out")
