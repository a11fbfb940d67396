import random

import pytest
from hypothesis import strategies as st

from ppfs.partition import split_horizontal, split_vertical
from ppfs.rough import AttributeSet, DecisionTable, walk_table


@pytest.fixture
def walk():
    return walk_table()


@pytest.fixture
def walk_hp(walk):
    return split_horizontal(walk, [4, 3])


@pytest.fixture
def walk_vp(walk):
    return split_vertical(walk, [AttributeSet((0,)), AttributeSet((1,))])


def make_table(rng: random.Random, n_objects: int, n_attrs: int, n_values: int = 3, n_classes: int = 2) -> DecisionTable:
    rows = [[f"v{rng.randrange(n_values)}" for _ in range(n_attrs)] for _ in range(n_objects)]
    dec = [f"c{rng.randrange(n_classes)}" for _ in range(n_objects)]
    return DecisionTable.from_rows([f"a{j}" for j in range(n_attrs)], rows, dec)


@st.composite
def tables(draw, max_objects=30, max_attrs=8, max_values=4, max_classes=3):
    m = draw(st.integers(1, max_attrs))
    n = draw(st.integers(1, max_objects))
    k = draw(st.integers(1, max_values))
    c = draw(st.integers(2, max_classes))
    rows = draw(st.lists(st.lists(st.integers(0, k - 1), min_size=m, max_size=m), min_size=n, max_size=n))
    dec = draw(st.lists(st.integers(0, c - 1), min_size=n, max_size=n))
    return DecisionTable.from_rows(
        [f"a{j}" for j in range(m)], [[f"v{x}" for x in r] for r in rows], [f"c{d}" for d in dec]
    )


@st.composite
def table_and_subset(draw, **kw):
    t = draw(tables(**kw))
    idx = draw(st.sets(st.integers(0, len(t.attributes) - 1)))
    return t, AttributeSet.of(idx)
