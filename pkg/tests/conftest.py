import numpy as np
import pytest

from fogbalance.topology import Link, Node, Role, Topology
from fogbalance.workload import AppSpec, Category


def make_topology(roles: dict[int, tuple[str, float]], links, ref_bytes=1000.0) -> Topology:
    """``roles`` maps id -> (role, ipt); ``links`` are (u, v, bw, pr) tuples."""
    nodes = [Node(i, Role(r), ipt) for i, (r, ipt) in roles.items()]
    return Topology(nodes, [Link(*l) for l in links], ref_bytes=ref_bytes)


def light_app(app_id=0, fog_instr=1000.0, req_bytes=0.0, p_cloud=0.0) -> AppSpec:
    return AppSpec(app_id, Category.LIGHT, fog_instr, 2000.0, req_bytes, 0.0, 0.0, 0.0,
                   p_cloud=p_cloud)


@pytest.fixture
def single_fog():
    """IoT cluster 0 -- Fog 1 (ipt 100) -- Cloud 2, zero-delay links."""
    return make_topology({0: ("iot", 0.0), 1: ("fog", 100.0), 2: ("cloud", 1000.0)},
                         [(0, 1, 1e12, 0.0), (1, 2, 1e12, 0.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def report():
    """Record one PASS/FAIL line per acceptance criterion (printed at the end of the run)."""
    def emit(criterion: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
