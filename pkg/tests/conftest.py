import pytest

from intertie.network import Bus, Generator, Network, QuadraticCost, Tieline


def two_area_network(limit=50.0, c1b=30.0):
    """Cheap exporter A, expensive importer B, one tieline."""
    return Network(
        areas=("A", "B"),
        buses=(Bus("A1", "A", 100.0), Bus("B1", "B", 100.0)),
        generators=(
            Generator("gA", "A1", QuadraticCost(0.05, 10.0, 0.0), 0.0, 300.0),
            Generator("gB", "B1", QuadraticCost(0.08, c1b, 0.0), 0.0, 300.0),
        ),
        internal_lines=(),
        tielines=(Tieline("T1", "A", "A1", "B", "B1", 0.1, limit),),
    )


@pytest.fixture
def two_area():
    return two_area_network()


@pytest.fixture
def two_area_slack():
    # wide limit: the tieline never binds
    return two_area_network(limit=500.0, c1b=16.0)


@pytest.fixture(scope="session")
def rts():
    from intertie.caseio import rts_three_area

    return rts_three_area()
