"""Allocation of a drug-interaction study when single-drug data already exist.

Outcomes are binomial "no effect" events. The combination arm estimates
``theta``; the single-drug arms are pooled with historical binomial studies
of sizes ``m1``, ``m2``. The design criterion is the large-sample variance
of ``log theta^ - log eta1^ - log eta2^``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .errors import InvalidSizes, NoReplicationNeeded, RangeError

TIE_TOL = 1e-15
NMIN_CAP = 1_000_000

# (eta1, eta2) -> [(m1, m2), ...] parameter rows of the published table
TABLE3_GRID: dict[tuple[float, float], list[tuple[int, int]]] = {
    (0.3, 0.3): [(10, 10), (20, 10), (30, 10)],
    (0.3, 0.5): [(10, 10), (20, 10), (30, 10), (10, 20), (10, 30)],
    (0.3, 0.7): [(10, 10), (10, 20), (10, 30), (20, 10), (30, 10)],
    (0.3, 0.9): [(10, 10), (10, 20), (10, 30), (20, 10), (30, 10)],
    (0.5, 0.7): [(10, 10), (10, 20), (10, 30), (20, 10), (30, 10)],
    (0.5, 0.9): [(10, 10), (10, 20), (10, 30), (20, 10), (30, 10)],
    (0.7, 0.7): [(10, 10), (20, 10), (30, 10)],
    (0.7, 0.9): [(10, 10), (20, 10), (30, 10), (10, 20), (10, 30)],
}


def table3_rows() -> list[tuple[int, int, float, float]]:
    return [(m1, m2, e1, e2) for (e1, e2), sizes in TABLE3_GRID.items() for m1, m2 in sizes]


@dataclass(frozen=True)
class BlissInstance:
    m1: int
    m2: int
    eta1_hat: float
    eta2_hat: float
    n: int | None = None

    def __post_init__(self):
        if int(self.m1) < 1 or int(self.m2) < 1:
            raise InvalidSizes("historical sizes must be at least 1", m1=self.m1, m2=self.m2)
        for name in ("eta1_hat", "eta2_hat"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise RangeError(f"{name} must lie strictly inside (0, 1)", **{name: v})
        if self.n is not None and int(self.n) < 1:
            raise InvalidSizes("budget must be at least 1", n=self.n)

    def with_budget(self, n: int) -> "BlissInstance":
        return BlissInstance(self.m1, self.m2, self.eta1_hat, self.eta2_hat, n)

    @property
    def theta_null(self) -> float:
        return self.eta1_hat * self.eta2_hat


@dataclass(frozen=True)
class Allocation:
    n12: int
    n1: int
    n2: int
    criterion: float = float("nan")

    @property
    def n(self) -> int:
        return self.n12 + self.n1 + self.n2

    def counts(self) -> tuple[int, int, int]:
        return (self.n12, self.n1, self.n2)


def _odds_rate(p: float, name: str) -> float:
    if not 0.0 < p < 1.0:
        raise RangeError(f"{name} must lie strictly inside (0, 1)", **{name: p})
    return (1.0 - p) / p


def bliss_variance(alloc: Allocation, inst: BlissInstance, theta: float | None = None) -> float:
    """Large-sample variance of the log Bliss contrast at the plug-in values."""
    if alloc.n12 < 1 or alloc.n1 < 0 or alloc.n2 < 0:
        raise RangeError("allocation needs n12 >= 1 and non-negative single arms",
                         alloc=list(alloc.counts()))
    theta = inst.theta_null if theta is None else theta
    return (_odds_rate(theta, "theta") / alloc.n12
            + _odds_rate(inst.eta1_hat, "eta1") / (alloc.n1 + inst.m1)
            + _odds_rate(inst.eta2_hat, "eta2") / (alloc.n2 + inst.m2))


def greedy_path(inst: BlissInstance, theta: float | None = None) -> Iterator[tuple[int, int, int]]:
    """Yield the greedy allocations for budgets 1, 2, 3, ...

    Each step adds one unit to the arm with the most negative change in the
    criterion, ``-rate / (c (c + 1))`` for an arm currently at ``c`` units
    (historical units included). Ties within ``TIE_TOL`` go to the
    combination arm, then arm 1, then arm 2.
    """
    theta = inst.theta_null if theta is None else theta
    rates = (_odds_rate(theta, "theta"), _odds_rate(inst.eta1_hat, "eta1"),
             _odds_rate(inst.eta2_hat, "eta2"))
    offsets = (0, inst.m1, inst.m2)
    counts = [1, 0, 0]
    yield tuple(counts)
    while True:
        deltas = [-r / ((c + o) * (c + o + 1.0)) for r, c, o in zip(rates, counts, offsets)]
        best = min(deltas)
        k = next(i for i, d in enumerate(deltas) if d - best <= TIE_TOL)
        counts[k] += 1
        yield tuple(counts)


def greedy_allocate(inst: BlissInstance, theta: float | None = None) -> Allocation:
    if inst.n is None:
        raise InvalidSizes("instance has no budget n")
    for step, counts in enumerate(greedy_path(inst, theta), start=1):
        if step == inst.n:
            alloc = Allocation(*counts)
            return Allocation(*counts, criterion=bliss_variance(alloc, inst, theta))
    raise AssertionError("unreachable")


def find_nmin(inst: BlissInstance, theta: float | None = None,
              cap: int = NMIN_CAP) -> tuple[int, Allocation]:
    """Smallest budget at which greedy allocation first replicates a historical arm.

    Walking the greedy path is the same as re-running the allocation for
    n = 1, 2, ... since each budget extends the previous allocation by one unit.
    """
    for n, counts in enumerate(greedy_path(inst, theta), start=1):
        if counts[1] + counts[2] >= 1:
            alloc = Allocation(*counts)
            return n, Allocation(*counts, criterion=bliss_variance(alloc, inst.with_budget(n), theta))
        if n >= cap:
            break
    raise NoReplicationNeeded("no replication of historical arms up to the cap", cap=cap)


def emit_table3(rows=None) -> list[dict]:
    rows = table3_rows() if rows is None else rows
    out = []
    for m1, m2, e1, e2 in rows:
        n_min, alloc = find_nmin(BlissInstance(m1, m2, e1, e2))
        out.append({
            "m1": int(m1), "m2": int(m2), "eta1": float(e1), "eta2": float(e2),
            "n_min": n_min, "n12": alloc.n12, "n1": alloc.n1, "n2": alloc.n2,
        })
    return out
