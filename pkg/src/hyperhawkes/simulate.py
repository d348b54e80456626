"""Ogata thinning for any model exposing a ``runner()``.

A runner reports intensities at offsets after its last observed event
(``intensity(s)``) and accepts new events (``observe(t, k)``). Runners with
an exact ``upper_bound(s0)`` (linear Hawkes, Poisson) use it over the rest
of the horizon; otherwise a bound is taken from a grid over a lookahead
window and checked at every candidate.
"""

from __future__ import annotations

import numpy as np

from .data import Sequence

GRID_POINTS = 64
MARGIN = 0.2
WINDOW_SCALE = 10.0


class BoundViolation(RuntimeError):
    pass


def _grid_bound(runner, s0: float, width: float) -> float:
    s = s0 + np.linspace(0.0, width, GRID_POINTS)
    return (1.0 + MARGIN) * float(runner.intensity(s).sum(axis=1).max())


def simulate(model, T: float, rng: np.random.Generator, max_events: int = 1_000_000) -> Sequence:
    runner = model.runner()
    exact = hasattr(runner, "upper_bound")
    times, marks = [], []
    t = 0.0
    lam0 = float(runner.intensity([0.0]).sum())
    window = T if lam0 <= 0 else min(WINDOW_SCALE / lam0, T)
    while t < T:
        s0 = t - runner.t_last
        if exact:
            window = T - t
            bound = runner.upper_bound(s0)
        else:
            window = min(window, T - t)
            bound = _grid_bound(runner, s0, window)
        if not bound > 0:
            break
        gap = rng.exponential(1.0 / bound)
        if gap > window:
            t += window
        else:
            t += gap
            if t >= T:
                break
            lam = runner.intensity([t - runner.t_last])[0]
            total = float(lam.sum())
            if total > bound * (1 + 1e-12):
                raise BoundViolation(f"intensity {total:.6g} exceeds thinning bound {bound:.6g} at t={t:.6g}")
            if rng.random() * bound < total:
                k = int(rng.choice(lam.size, p=lam / total))
                times.append(t)
                marks.append(k)
                runner.observe(t, k)
                if len(times) >= max_events:
                    raise RuntimeError(f"more than {max_events} events simulated; intensity may be explosive")
        if not exact:
            window = WINDOW_SCALE / bound
    return Sequence(np.array(times), np.array(marks, dtype=np.int64), T)


def simulate_dataset(model, T: float, n: int, seed: int = 0):
    from .data import Dataset
    from .synth import sequence_rng

    seqs = [simulate(model, T, sequence_rng(seed, i)) for i in range(n)]
    return Dataset(seqs, model.K, {"simulated": True, "T": T, "seed": seed})
