from pathlib import Path

import pytest

from navlab.env import load_map_file

MAPS_DIR = Path(__file__).resolve().parent.parent / "maps"

ACCEPTANCE_TITLES = {
    1: "reward identities over random rollouts",
    2: "exact-value reward checks",
    3: "analytic gradients vs finite differences",
    4: "SR/SPL against brute force",
    5: "geodesic Dijkstra vs Bellman-Ford",
    6: "wandering-penalty training ablation",
    7: "planner hierarchy training ablation",
    8: "annotation validator on seeded corpus",
    9: "latency amortization bench",
    10: "byte-identical reruns",
}


@pytest.fixture(scope="session")
def maps_dir() -> Path:
    return MAPS_DIR


@pytest.fixture(scope="session")
def open12():
    return load_map_file(MAPS_DIR / "open12.txt")


@pytest.fixture(scope="session")
def tworoom():
    return load_map_file(MAPS_DIR / "tworoom20.txt")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One verdict line per numbered acceptance check."""
    lines = {}
    for status in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            tail = nodeid.split("test_criterion_")[1]
            num = int(tail.split("_")[0])
            verdict = {"passed": "PASSED", "failed": "FAILED",
                       "error": "FAILED", "skipped": "SKIPPED"}[status]
            if lines.get(num) != "FAILED":
                lines[num] = verdict
    if not lines:
        return
    terminalreporter.section("acceptance checks")
    for num in sorted(lines):
        title = ACCEPTANCE_TITLES.get(num, "")
        terminalreporter.write_line(f"ACCEPTANCE #{num} {title}: {lines[num]}")
