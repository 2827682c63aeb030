import pytest

from bouquetmc.model import Dtmc


@pytest.fixture
def t1():
    """Branching chain: 0 -> {1,2} evenly, 1 and 2 absorbing; 0:a, 1:b."""
    return Dtmc.from_rows(
        3, 0,
        [[(1, 0.5), (2, 0.5)], [(1, 1.0)], [(2, 1.0)]],
        ["a", "b"],
        [{0}, {1}, set()],
    )


@pytest.fixture
def t2():
    """Self-loop chain: 0 stays with 0.5, exits to b-state 1 (0.3) or dead
    state 2 (0.2); exact until probability at 0 is 0.3/(1-0.5) = 0.6."""
    return Dtmc.from_rows(
        3, 0,
        [[(0, 0.5), (1, 0.3), (2, 0.2)], [(1, 1.0)], [(2, 1.0)]],
        ["a", "b"],
        [{0}, {1}, set()],
    )


@pytest.fixture
def l10():
    """Line chain 0 -> 1 -> ... -> 9 with 9 absorbing; 0..8:a, 9:b."""
    rows = [[(i + 1, 1.0)] for i in range(9)] + [[(9, 1.0)]]
    return Dtmc.from_rows(10, 0, rows, ["a", "b"], [{0}] * 9 + [{1}])
