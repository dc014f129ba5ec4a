import pytest

from pxrec.corpus import InteractionRecord


def record(user="u1", item="i1", rating=4.0,
           explanation="the gym area had excellent facilities",
           features=("gym",)):
    return InteractionRecord(user, item, rating, tuple(explanation.split()),
                             frozenset(features))


@pytest.fixture
def sample_records():
    return [
        record("u1", "i1", 4.0, "the gym area had excellent facilities", ("gym",)),
        record("u2", "i2", 2.5, "the pool was cold and small", ("pool",)),
        record("u1", "i2", 3.0, "a small pool but a nice bar", ("pool", "bar")),
        record("u3", "i1", 5.0, "excellent gym with new machines", ("gym",)),
        record("u2", "i3", 1.0, "the bar was closed all week", ("bar",)),
    ]
