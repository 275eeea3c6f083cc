"""Two-way ANOVA with historical single-drug studies.

Cells are indexed ``(T1, T2)``: ``00`` neither drug, ``10`` drug 1 only,
``01`` drug 2 only, ``11`` both. The interaction ``theta`` is the target;
``eta = (eta0, eta1, eta2)`` are the baseline and main effects. Two
historical studies each compared a control arm with one drug. All
variances are scaled by the relevant total sample size.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import linalg as la
from .asymvar import ProblemSpec, fused_eta_variance
from .errors import BoundaryDesign, EmptyGrid, InvalidDesign, InvalidSizes, RangeError
from .fusion import Estimate
from .linalg import VarianceBlocks

# Sigma / sigma^2 for two balanced historical studies of equal size.
BALANCED_SIGMA = np.array([[2.0, -2.0, -2.0], [-2.0, 6.0, 2.0], [-2.0, 2.0, 6.0]])
ONES = np.ones(3)

TABLE1_SIZES = (100, 200, 500, 1000, 2000, 5000)
TABLE2_RHOS = (1 / 8, 1 / 4, 1 / 2, 1.0, 2.0, 4.0, 8.0)


@dataclass(frozen=True)
class AnovaHistorical:
    """Summary statistics of the two historical studies.

    ``ybar`` is ``(Y0(S1), Y1(S1), Y0(S2), Y2(S2))`` and ``m_groups`` the
    matching group sizes ``(m10, m11, m20, m22)``.
    """

    ybar: tuple[float, float, float, float]
    m_groups: tuple[int, int, int, int]
    sigma2: float

    def __post_init__(self):
        if len(self.ybar) != 4 or len(self.m_groups) != 4:
            raise InvalidSizes("need four group means and four group sizes")
        if any(int(m) < 1 for m in self.m_groups):
            raise InvalidSizes("group sizes must be at least 1", m_groups=list(self.m_groups))
        if not self.sigma2 > 0:
            raise InvalidSizes("sigma2 must be positive", sigma2=self.sigma2)

    @property
    def m(self) -> int:
        return int(sum(self.m_groups))

    @classmethod
    def balanced(cls, m: int, sigma2: float = 1.0, ybar=(0.0, 0.0, 0.0, 0.0)) -> "AnovaHistorical":
        if m % 4:
            raise InvalidSizes("balanced historical size must be divisible by 4", m=m)
        return cls(tuple(ybar), (m // 4,) * 4, sigma2)


def historical_sigma(m_groups, sigma2: float = 1.0) -> np.ndarray:
    """Scaled covariance ``m * Cov(eta^)`` of the aggregated historical estimate."""
    m10, m11, m20, m22 = (float(x) for x in m_groups)
    m = m10 + m11 + m20 + m22
    v0 = sigma2 / (m10 + m20)
    cov = np.array([
        [v0, -v0, -v0],
        [-v0, sigma2 / m11 + v0, v0],
        [-v0, v0, sigma2 / m22 + v0],
    ])
    return m * cov


def aggregate_historical(h: AnovaHistorical) -> Estimate:
    """Pool both studies' control arms and form ``(eta0, eta1, eta2)``."""
    y0s1, y1s1, y0s2, y2s2 = (float(y) for y in h.ybar)
    m10, _, m20, _ = h.m_groups
    eta0 = (m10 * y0s1 + m20 * y0s2) / (m10 + m20)
    value = np.array([eta0, y1s1 - eta0, y2s2 - eta0])
    return Estimate(value, historical_sigma(h.m_groups, h.sigma2), h.m)


@dataclass(frozen=True)
class DesignXi:
    xi00: float
    xi10: float
    xi01: float
    xi11: float

    def __post_init__(self):
        xs = self.as_tuple()
        if any(x < 0 for x in xs):
            raise InvalidDesign("design fractions must be non-negative", xi=list(xs))
        if abs(sum(xs) - 1.0) > 1e-9:
            raise InvalidDesign("design fractions must sum to one", xi=list(xs), total=sum(xs))
        if not self.xi11 > 0:
            raise InvalidDesign("the interaction cell needs a positive fraction", xi11=self.xi11)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.xi00, self.xi10, self.xi01, self.xi11)

    @property
    def interior(self) -> bool:
        return min(self.as_tuple()) > 0

    @classmethod
    def balanced(cls) -> "DesignXi":
        return cls(0.25, 0.25, 0.25, 0.25)


def upsilon_of_design(xi: DesignXi, sigma2: float = 1.0) -> VarianceBlocks:
    """Scaled variance of ``(theta~, eta0~, eta1~, eta2~)`` from the four cell means."""
    if not xi.interior:
        raise BoundaryDesign("every cell needs a positive fraction", xi=list(xi.as_tuple()))
    a, b, c, d = (1.0 / x for x in xi.as_tuple())
    tt = [[a + b + c + d]]
    te = [[a, -(a + b), -(a + c)]]
    ee = [[a, -a, -a], [-a, a + b, a], [-a, a, a + c]]
    return VarianceBlocks(sigma2 * np.array(tt), sigma2 * np.array(te), sigma2 * np.array(ee))


def problem_spec(rho: float, sigma2: float = 1.0, xi: DesignXi | None = None,
                 sigma: np.ndarray | None = None) -> ProblemSpec:
    """The interaction estimating function ``Y - eta0 - eta1 - eta2 - theta`` on cell 11.

    With a design, ``Sigma_psi`` is ``sigma2 / xi11`` so that variances stay
    scaled by the whole current sample.
    """
    sigma = sigma2 * BALANCED_SIGMA if sigma is None else sigma
    xi11 = 1.0 if xi is None else xi.xi11
    ups = None if xi is None else upsilon_of_design(xi, sigma2).ee
    return ProblemSpec(
        d_theta=[[-1.0]], d_eta=[[-1.0, -1.0, -1.0]], sigma_psi=[[sigma2 / xi11]],
        sigma=sigma, rho=rho, upsilon_ee=ups,
    )


def var_theta_A(rho: float, sigma2: float = 1.0) -> float:
    """Plug-in variance with every current unit on the combination cell."""
    if rho < 0:
        raise RangeError("rho must be non-negative", rho=rho)
    return sigma2 * (1.0 + 10.0 * rho)


def var_theta_B(xi: DesignXi, rho: float, sigma2: float = 1.0) -> float:
    ups = upsilon_of_design(xi, 1.0).ee
    f = fused_eta_variance(ups, BALANCED_SIGMA, rho)
    return sigma2 * (1.0 / xi.xi11 + float(ONES @ f @ ONES))


# E(Y1, Y2) = PAIR_MAP @ eta for the two single-drug cells.
PAIR_MAP = np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 1.0]])


def threearm_eta_variance(xi10: float, xi01: float, rho: float) -> np.ndarray:
    """Scaled variance (per unit sigma^2) of eta fused from the single-drug cells."""
    info = PAIR_MAP.T @ np.diag([xi10, xi01]) @ PAIR_MAP
    return la.invert(info + la.invert(rho * BALANCED_SIGMA))


def var_theta_D(xi01: float, xi10: float, xi11: float, rho: float, sigma2: float = 1.0) -> float:
    """Variance when the current study has no control cell."""
    if not (xi01 > 0 and xi10 > 0 and xi11 > 0):
        raise InvalidDesign("three-arm design needs positive fractions", xi=[xi10, xi01, xi11])
    if abs(xi01 + xi10 + xi11 - 1.0) > 1e-9:
        raise InvalidDesign("three-arm fractions must sum to one", total=xi01 + xi10 + xi11)
    if not rho > 0:
        raise RangeError("rho must be positive", rho=rho)
    g = threearm_eta_variance(xi10, xi01, rho)
    return sigma2 * (1.0 / xi11 + float(ONES @ g @ ONES))


def _grid_values(x10: np.ndarray, x11: np.ndarray, rho: float) -> np.ndarray:
    # Batched var_theta_B / sigma2 along the symmetric slice xi01 == xi10.
    x00 = 1.0 - 2.0 * x10 - x11
    a = 1.0 / x00
    b = 1.0 / x10
    k = x10.shape[0]
    u = np.empty((k, 3, 3))
    u[:, 0, 0] = a
    u[:, 0, 1] = u[:, 1, 0] = -a
    u[:, 0, 2] = u[:, 2, 0] = -a
    u[:, 1, 1] = a + b
    u[:, 2, 2] = a + b
    u[:, 1, 2] = u[:, 2, 1] = a
    v = rho * BALANCED_SIGMA
    w = v @ ONES
    # 1' F 1 with F = V - V (U + V)^-1 V
    sol = np.linalg.solve(u + v, np.broadcast_to(w, (k, 3))[..., None])[..., 0]
    return 1.0 / x11 + float(ONES @ w) - sol @ w


def optimal_design(rho: float, step: float = 0.001, xi00_floor: float = 0.02,
                   threads: int | None = 1) -> tuple[DesignXi, float]:
    """Grid search for the design minimising ``var_theta_B`` (sigma2 = 1).

    Searches ``xi10 = xi01 = i*step``, ``xi11 = j*step`` with
    ``xi00 = 1 - 2 xi10 - xi11 >= xi00_floor``. Exact ties go to the larger
    ``xi11``, then the larger ``xi00``.
    """
    if not rho > 0:
        raise RangeError("rho must be positive", rho=rho)
    if not 0 < step < 1:
        raise RangeError("step must lie in (0, 1)", step=step)
    slack = 1e-12
    n_i = int(math.floor((1.0 - xi00_floor) / (2.0 * step) + 1e-9))
    rows = [i for i in range(1, n_i + 1)]
    if not rows:
        raise EmptyGrid("no grid point satisfies the constraints", step=step, floor=xi00_floor)

    def scan(chunk):
        best = None
        for i in chunk:
            x10 = i * step
            n_j = int(math.floor((1.0 - 2.0 * x10 - xi00_floor) / step + 1e-9))
            if n_j < 1:
                continue
            j = np.arange(1, n_j + 1)
            x11 = j * step
            x00 = 1.0 - 2.0 * x10 - x11
            keep = x00 >= xi00_floor - slack
            if not keep.any():
                continue
            x11 = x11[keep]
            vals = _grid_values(np.full(x11.shape, x10), x11, rho)
            vmin = vals.min()
            idx = np.flatnonzero(vals == vmin)
            # largest xi11 on ties within the row
            cand = (float(vmin), float(x11[idx[-1]]), 1.0 - 2.0 * x10 - float(x11[idx[-1]]), x10)
            best = cand if best is None else _better(cand, best)
        return best

    threads = max(1, int(threads or 1))
    chunks = [rows[k::threads] for k in range(threads)]
    if threads == 1:
        results = [scan(rows)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(scan, chunks))
    results = [r for r in results if r is not None]
    if not results:
        raise EmptyGrid("no grid point satisfies the constraints", step=step, floor=xi00_floor)
    best = results[0]
    for r in results[1:]:
        best = _better(r, best)
    value, x11, x00, x10 = best
    xi = DesignXi(round(x00, 12), round(x10, 12), round(x10, 12), round(x11, 12))
    return xi, value


def _better(a, b):
    # (value, xi11, xi00, xi10): lower value, then larger xi11, then larger xi00
    if a[0] != b[0]:
        return a if a[0] < b[0] else b
    if a[1] != b[1]:
        return a if a[1] > b[1] else b
    return a if a[2] >= b[2] else b


def boundary_flags(xi: DesignXi, step: float = 0.001, xi00_floor: float = 0.02) -> dict:
    """Which grid constraints are active at ``xi``."""
    return {
        "xi00_at_floor": abs(xi.xi00 - xi00_floor) < 1e-9,
        "xi10_at_floor": abs(xi.xi10 - step) < 1e-9,
    }


def emit_table1(n_list=TABLE1_SIZES, m_list=TABLE1_SIZES, sigma2: float = 1.0) -> list[dict]:
    """Plug-in vs re-estimation (balanced design) variance for each ``(n, m)``."""
    rows = []
    bal = DesignXi.balanced()
    for n in n_list:
        for m in m_list:
            if n <= 0 or m <= 0:
                raise InvalidSizes("sizes must be positive", n=n, m=m)
            rho = n / m
            rows.append({
                "n": int(n),
                "m": int(m),
                "A_thetatheta": var_theta_A(rho, sigma2),
                "B_thetatheta": var_theta_B(bal, rho, sigma2),
            })
    return rows


def emit_table2(rhos=TABLE2_RHOS, step: float = 0.001, xi00_floor: float = 0.02,
                threads: int | None = 1) -> list[dict]:
    rows = []
    for rho in rhos:
        xi, value = optimal_design(rho, step, xi00_floor, threads)
        rows.append({
            "rho": float(rho),
            "B_min": value,
            "xi00": xi.xi00,
            "xi10": xi.xi10,
            "xi01": xi.xi01,
            "xi11": xi.xi11,
            **boundary_flags(xi, step, xi00_floor),
        })
    return rows
