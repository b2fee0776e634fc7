import pytest

from trustnet.config import build_config
from trustnet.sim import Simulation


def flood_config(kind: str = "syn_flood", seed: int = 1, **extra):
    data = {"seed": seed, "attacks": [{"kind": kind, "attacker": "plug1", "start": 600, "duration": 600}]}
    data.update(extra)
    return build_config(data)


@pytest.fixture(scope="session")
def syn_sim() -> Simulation:
    """Default fleet, plug1 floods from 600 s to 1200 s; the run log is on ``.log``."""
    sim = Simulation(flood_config())
    sim.run()
    return sim


@pytest.fixture(scope="session")
def benign_sim() -> Simulation:
    sim = Simulation(build_config({"seed": 1}))
    sim.run()
    return sim
