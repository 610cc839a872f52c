import pytest

from putview.data import DOMAINS, RIDESHARING, TRAJECTORIES
from putview.parser import parse_program
from putview.storage import load_dir


@pytest.fixture(scope="session")
def peer1_program():
    return parse_program((RIDESHARING / "peer1.ust").read_text())


@pytest.fixture(scope="session")
def peer2_program():
    return parse_program((RIDESHARING / "peer2.ust").read_text())


@pytest.fixture(scope="session")
def integrator_program():
    return parse_program((RIDESHARING / "integrator.ust").read_text())


@pytest.fixture(scope="session")
def integrator3_program():
    return parse_program((RIDESHARING / "integrator3.ust").read_text())


@pytest.fixture()
def peer1_db():
    db, views = load_dir(RIDESHARING / "db_peer1")
    return db, views["peer1_public"]


@pytest.fixture()
def peer2_db():
    db, views = load_dir(RIDESHARING / "db_peer2")
    return db, views["peer2_public"]


@pytest.fixture()
def mediator_db():
    db, views = load_dir(RIDESHARING / "db_mediator")
    return db, views["all_vehicles"]


@pytest.fixture()
def trajectories_db():
    db, _ = load_dir(TRAJECTORIES)
    return db


@pytest.fixture(scope="session")
def paths():
    return {"ridesharing": RIDESHARING, "trajectories": TRAJECTORIES, "domains": DOMAINS}
