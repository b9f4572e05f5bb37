import numpy as np
import pytest

from simsafe.domain import VehicleObservation
from simsafe.nested import CellDataset


def make_obs(vehicle_id="F", position=0.0, speed=20.0, accel=0.0, length=4.5, **kw):
    kw.setdefault("event_id", "E1")
    kw.setdefault("replication", 0)
    kw.setdefault("time", 0.0)
    kw.setdefault("lane", 1)
    return VehicleObservation(vehicle_id=vehicle_id, position=position, speed=speed, accel=accel,
                              length=length, **kw)


def pair(gap, v_follower, v_leader, a_follower=0.0, a_leader=0.0, length=4.5, **kw):
    """Follower at 0 and leader placed so the bumper gap equals ``gap``."""
    f = make_obs("F", 0.0, v_follower, a_follower, leader_id="L", **kw)
    lead = make_obs("L", gap + length, v_leader, a_leader, length)
    return f, lead


def random_cells(n_cells, seed, mean_members=4):
    """Small CellDataset with random features that respect the sign conventions."""
    rng = np.random.default_rng(seed)
    sizes = 1 + rng.poisson(mean_members - 1, n_cells)
    cell = np.repeat(np.arange(n_cells), sizes)
    m = cell.size
    avail = rng.random((m, 3)) < 0.6
    raw = rng.normal(0, 1, (m, 9))
    f = np.zeros((m, 9))
    f[:, 0], f[:, 1] = np.maximum(raw[:, 0], 0), np.minimum(raw[:, 0], 0)
    f[:, 2] = raw[:, 1]
    f[:, 3], f[:, 4] = np.maximum(5 * raw[:, 2], 0), np.minimum(5 * raw[:, 2], 0)
    f[:, 5], f[:, 6] = np.maximum(5 * raw[:, 3], 0), np.minimum(5 * raw[:, 3], 0)
    f[:, 7], f[:, 8] = np.maximum(0.3 * raw[:, 4], 0), np.minimum(0.3 * raw[:, 4], 0)
    # labels drawn among the outcomes some member of the cell can have
    possible = np.ones((n_cells, 4), bool)
    possible[:, 1:] = np.logical_or.reduceat(avail, np.r_[0, np.cumsum(sizes)[:-1]], axis=0)
    labels = np.array([rng.choice(np.flatnonzero(row)) for row in possible])
    return CellDataset(f, avail, cell, labels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def report(criterion: int, name: str, passed: bool, detail: str = "") -> bool:
    """Record one acceptance line; printed again in the terminal summary."""
    line = f"acceptance {criterion:2d} {'PASS' if passed else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
