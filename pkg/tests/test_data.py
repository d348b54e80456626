import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hyperhawkes.data import (Dataset, DataError, Event, Sequence, dumps_dataset, load_dataset, loads_dataset,
                              save_dataset, split_dataset, validate_sequence)


def test_parse_line_and_infer_K():
    ds = loads_dataset('{"t_end": 100.0, "events": [[1.5, 0], [3.2, 2]]}\n')
    assert len(ds) == 1 and len(ds[0]) == 2 and ds.num_marks >= 3
    assert ds[0].events == [Event(1.5, 0), Event(3.2, 2)]


def test_header_wins_over_inferred_K():
    ds = loads_dataset('{"num_marks": 5}\n{"t_end": 10, "events": [[1.0, 1]]}\n')
    assert ds.num_marks == 5
    with pytest.raises(DataError, match="mark out of range"):
        loads_dataset('{"num_marks": 2}\n{"t_end": 10, "events": [[1.0, 3]]}\n')


def test_load_errors():
    with pytest.raises(DataError, match="non-increasing times"):
        loads_dataset('{"t_end": 10, "events": [[3.2, 0], [1.5, 1]]}')
    with pytest.raises(DataError, match="empty dataset"):
        loads_dataset("")
    with pytest.raises(DataError, match="line 2: parse error"):
        loads_dataset('{"t_end": 10, "events": []}\n{not json\n')
    with pytest.raises(DataError, match="sequence 1"):
        loads_dataset('{"t_end": 10, "events": [[1, 0]]}\n{"t_end": 1, "events": [[2, 0]]}\n')


def test_validate_sequence():
    assert validate_sequence(Sequence([1.0, 2.0, 3.0], [0, 1, 0], 5.0), 2) == []
    dup = validate_sequence(Sequence([1.0, 1.0], [0, 0], 5.0), 1)
    assert any("t_{i-1} < t_i required" in p for p in dup)
    assert validate_sequence(Sequence([6.0], [0], 5.0), 1)
    assert validate_sequence(Sequence([0.0], [0], 5.0), 1)
    assert validate_sequence(Sequence([], [], 0.0), 1)
    assert validate_sequence(Sequence([], [], 3.0), 1) == []  # empty sequences allowed


def test_split_sizes_and_determinism():
    ds = Dataset([Sequence([float(i + 1)], [0], 100.0) for i in range(10)], 1)
    tr, va, te = split_dataset(ds, (0.7, 0.15, 0.15), seed=0)
    assert (len(tr), len(va), len(te)) == (7, 1, 2)
    again = split_dataset(ds, (0.7, 0.15, 0.15), seed=0)
    assert [s.times[0] for s in tr] == [s.times[0] for s in again[0]]
    all_in, _, _ = split_dataset(ds, (1.0, 0.0, 0.0), seed=3)
    assert len(all_in) == 10
    with pytest.raises(DataError):
        split_dataset(ds, (0.5, 0.2, 0.2))


@given(st.integers(0, 60), st.integers(0, 10**6), st.tuples(st.floats(0, 1), st.floats(0, 1)))
def test_split_is_a_partition(n, seed, ab):
    a, b = ab
    if a + b > 1:
        a, b = a / (a + b), b / (a + b)
    ds = Dataset([Sequence([float(i + 1)], [0], 1e3) for i in range(n)], 1)
    parts = split_dataset(ds, (a, b, max(0.0, 1 - a - b)), seed=seed)
    keys = sorted(s.times[0] for p in parts for s in p)
    assert keys == [float(i + 1) for i in range(n)]


@st.composite
def datasets(draw):
    K = draw(st.integers(1, 4))
    seqs = []
    for _ in range(draw(st.integers(1, 5))):
        gaps = draw(st.lists(st.floats(1e-3, 10, allow_nan=False), max_size=8))
        times = np.cumsum(gaps)
        marks = draw(st.lists(st.integers(0, K - 1), min_size=len(gaps), max_size=len(gaps)))
        t_end = float(times[-1] + draw(st.floats(0, 5))) if len(gaps) else draw(st.floats(0.1, 10))
        seqs.append(Sequence(times, marks, t_end))
    return Dataset(seqs, K)


@given(datasets())
def test_roundtrip(ds):
    back = loads_dataset(dumps_dataset(ds))
    assert back.num_marks == ds.num_marks
    assert all(a == b for a, b in zip(back, ds)) and len(back) == len(ds)


def test_file_roundtrip(tmp_path, rng):
    ds = Dataset([Sequence(np.sort(rng.uniform(0.1, 9, 5)), rng.integers(0, 3, 5), 10.0)], 3)
    p = tmp_path / "d.jsonl"
    save_dataset(ds, p)
    assert load_dataset(p)[0] == ds[0]
    assert p.read_text() == dumps_dataset(load_dataset(p))
