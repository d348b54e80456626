"""Marked event sequences, validation and JSON-lines I/O.

File format (UTF-8 JSON lines)::

    {"num_marks": 3}                                  # optional header
    {"t_end": 100.0, "events": [[1.5, 0], [3.2, 2]]}
    ...
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Event:
    t: float
    k: int


@dataclass
class Sequence:
    times: np.ndarray
    marks: np.ndarray
    t_end: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        self.marks = np.asarray(self.marks, dtype=np.int64).reshape(-1)
        self.t_end = float(self.t_end)
        if self.times.shape != self.marks.shape:
            raise DataError("times and marks differ in length")

    @classmethod
    def from_events(cls, events, t_end):
        events = list(events)
        times = [e.t if isinstance(e, Event) else e[0] for e in events]
        marks = [e.k if isinstance(e, Event) else e[1] for e in events]
        return cls(np.array(times, dtype=np.float64), np.array(marks, dtype=np.int64), t_end)

    def __len__(self):
        return len(self.times)

    @property
    def events(self) -> list[Event]:
        return [Event(float(t), int(k)) for t, k in zip(self.times, self.marks)]

    def gaps(self) -> np.ndarray:
        """Inter-event times, the first measured from t=0."""
        return np.diff(self.times, prepend=0.0)

    def __eq__(self, other):
        return (isinstance(other, Sequence) and self.t_end == other.t_end
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.marks, other.marks))


@dataclass
class Dataset:
    sequences: list[Sequence]
    num_marks: int
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    def __getitem__(self, i):
        return self.sequences[i]

    @property
    def n_events(self) -> int:
        return int(sum(len(s) for s in self.sequences))

    def subset(self, idx) -> "Dataset":
        return Dataset([self.sequences[i] for i in idx], self.num_marks, dict(self.meta))


def validate_sequence(seq: Sequence, K: int) -> list[str]:
    """Return a list of violated invariants (empty if the sequence is valid)."""
    problems = []
    if not (math.isfinite(seq.t_end) and seq.t_end > 0):
        problems.append(f"t_end must be finite and > 0, got {seq.t_end}")
    t, k = seq.times, seq.marks
    if not np.all(np.isfinite(t)):
        problems.append("non-finite event time")
    if len(t) and t[0] <= 0:
        problems.append(f"first event time must be > 0, got {t[0]}")
    bad = np.nonzero(np.diff(t) <= 0)[0]
    if bad.size:
        problems.append(f"t_{{i-1}} < t_i required (non-increasing times at index {int(bad[0]) + 1})")
    if len(t) and t[-1] > seq.t_end:
        problems.append(f"event time {t[-1]} beyond t_end {seq.t_end}")
    if len(k) and (k.min() < 0 or k.max() >= K):
        problems.append(f"mark out of range [0, {K})")
    return problems


def check_dataset(ds: Dataset) -> Dataset:
    if not ds.sequences:
        raise DataError("empty dataset")
    for i, s in enumerate(ds.sequences):
        problems = validate_sequence(s, ds.num_marks)
        if problems:
            raise DataError(f"sequence {i}: " + "; ".join(problems))
    return ds


def _parse_record(rec, lineno):
    if not isinstance(rec, dict) or "t_end" not in rec or "events" not in rec:
        raise DataError(f"line {lineno}: expected object with 't_end' and 'events'")
    try:
        events = [(float(e[0]), int(e[1])) for e in rec["events"]]
        for e in rec["events"]:
            if len(e) != 2 or float(e[1]) != int(e[1]):
                raise ValueError
        return Sequence.from_events(events, float(rec["t_end"]))
    except (TypeError, ValueError, IndexError) as e:
        raise DataError(f"line {lineno}: malformed events") from e


def loads_dataset(text: str, source="<string>") -> Dataset:
    seqs, declared = [], None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f"{source} line {lineno}: parse error: {e.msg}") from e
        if isinstance(rec, dict) and "num_marks" in rec and "events" not in rec:
            if seqs or declared is not None:
                raise DataError(f"{source} line {lineno}: header must be the first record")
            declared = int(rec["num_marks"])
            continue
        seq = _parse_record(rec, lineno)
        if len(seq.times) > 1 and np.any(np.diff(seq.times) <= 0):
            raise DataError(f"{source} line {lineno} (sequence {len(seqs)}): non-increasing times")
        seqs.append(seq)
    if not seqs:
        raise DataError(f"{source}: empty dataset")
    if declared is None:
        declared = 1 + max((int(s.marks.max()) for s in seqs if len(s)), default=0)
    return check_dataset(Dataset(seqs, declared))


def load_dataset(path) -> Dataset:
    path = Path(path)
    return loads_dataset(path.read_text(encoding="utf-8"), source=str(path))


def dumps_dataset(ds: Dataset, header: bool = True) -> str:
    lines = []
    if header:
        lines.append(json.dumps({"num_marks": int(ds.num_marks)}))
    for s in ds.sequences:
        ev = [[float(t), int(k)] for t, k in zip(s.times, s.marks)]
        lines.append(json.dumps({"t_end": float(s.t_end), "events": ev}))
    return "\n".join(lines) + "\n"


def save_dataset(ds: Dataset, path, header: bool = True):
    Path(path).write_text(dumps_dataset(ds, header), encoding="utf-8")


def split_dataset(ds: Dataset, fractions=(0.7, 0.15, 0.15), seed: int = 0):
    """Shuffle and partition into (train, val, test).

    Sizes are floor(n*f_train), floor(n*f_val) and the remainder.
    """
    fr = [float(f) for f in fractions]
    if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise DataError(f"split fractions must be non-negative and sum to 1, got {fractions}")
    n = len(ds)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(math.floor(n * fr[0] + 1e-9))
    n_val = int(math.floor(n * fr[1] + 1e-9))
    parts = perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]
    return tuple(ds.subset(sorted(p.tolist())) for p in parts)
