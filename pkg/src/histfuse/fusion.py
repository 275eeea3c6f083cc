"""Fusing historical estimates of nuisance parameters with current ones.

The current study supplies ``(theta~, eta~)`` with scaled variance ``U``
(variance times ``n``); the K historical studies supply ``eta^_j`` with
scaled variances ``S_j`` (variance times ``m_j``). All sample-size limits
are instantiated at the finite sizes given: ``rho = n/m`` and
``gamma = n/(n+m)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg as la
from .errors import DimMismatch, GammaOutOfRange, InvalidSizes, RangeError
from .linalg import VarianceBlocks


@dataclass(frozen=True)
class Estimate:
    """Point estimate with its scaled asymptotic variance and sample size."""

    value: np.ndarray
    scaled_var: np.ndarray
    n: int

    def __post_init__(self):
        value = np.atleast_1d(np.asarray(self.value, dtype=float))
        var = la.as_symmetric(self.scaled_var)
        if var.shape[0] != value.shape[0]:
            raise DimMismatch("estimate and variance dimensions differ",
                              value=value.shape[0], var=var.shape[0])
        if int(self.n) < 1:
            raise InvalidSizes("sample size must be positive", n=self.n)
        la.cholesky(var)
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "scaled_var", var)
        object.__setattr__(self, "n", int(self.n))

    @property
    def dim(self) -> int:
        return self.value.shape[0]


@dataclass(frozen=True)
class JointEstimate:
    theta: np.ndarray
    eta: np.ndarray
    upsilon: VarianceBlocks
    n: int

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        ups = self.upsilon
        if not isinstance(ups, VarianceBlocks):
            ups = VarianceBlocks.from_full(ups, theta.shape[0])
        if ups.p != theta.shape[0] or ups.q != eta.shape[0]:
            raise DimMismatch("joint estimate blocks do not conform",
                              p=theta.shape[0], q=eta.shape[0], blocks=[ups.p, ups.q])
        if int(self.n) < 1:
            raise InvalidSizes("sample size must be positive", n=self.n)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "upsilon", ups)
        object.__setattr__(self, "n", int(self.n))

    def eta_estimate(self) -> Estimate:
        return Estimate(self.eta, self.upsilon.ee, self.n)


@dataclass(frozen=True)
class HistoricalSet:
    """Independent historical studies of distinct nuisance sub-vectors."""

    estimates: tuple[Estimate, ...] = field(default_factory=tuple)

    def __post_init__(self):
        ests = tuple(self.estimates)
        if not ests:
            raise InvalidSizes("historical set is empty")
        object.__setattr__(self, "estimates", ests)

    @property
    def total_m(self) -> int:
        return sum(e.n for e in self.estimates)

    @property
    def value(self) -> np.ndarray:
        return np.concatenate([e.value for e in self.estimates])

    def kappas(self) -> list[float]:
        m = self.total_m
        return [m / e.n for e in self.estimates]

    def sigma(self) -> np.ndarray:
        """``BlockDiag(kappa_1 S_1, ..., kappa_K S_K)``, scaled by total ``m``."""
        return la.block_diag(*[k * e.scaled_var for k, e in zip(self.kappas(), self.estimates)])

    def pooled(self) -> Estimate:
        return Estimate(self.value, self.sigma(), self.total_m)


def fusion_weights(upsilon_ee, sigma, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Matrix weights ``(W1, W2)`` on the current and historical estimates.

    ``W1 = (g U^-1 + (1-g) S^-1)^-1 g U^-1`` and ``W2`` likewise with
    ``(1-g) S^-1``; they sum to the identity.
    """
    if not 0.0 < gamma < 1.0:
        raise GammaOutOfRange("gamma must lie in (0, 1)", gamma=gamma)
    u_inv = la.invert(upsilon_ee)
    s_inv = la.invert(sigma)
    if u_inv.shape != s_inv.shape:
        raise DimMismatch("weight matrices do not conform",
                          upsilon=u_inv.shape[0], sigma=s_inv.shape[0])
    a = gamma * u_inv
    b = (1.0 - gamma) * s_inv
    total = a + b
    return la.solve(total, a), la.solve(total, b)


def combination_weights(current_var, n: int, historical_var, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Finite-sample weights so that ``eta_bar = Wc @ eta~ + Wh @ eta^``."""
    prec_cur = n * la.invert(current_var)
    prec_hist = m * la.invert(historical_var)
    total = prec_cur + prec_hist
    return la.solve(total, prec_cur), la.solve(total, prec_hist)


def _as_historical(historical) -> Estimate:
    if isinstance(historical, HistoricalSet):
        return historical.pooled()
    if isinstance(historical, Estimate):
        return historical
    return HistoricalSet(tuple(historical)).pooled()


def combine_eta(current: Estimate, historical) -> Estimate:
    """Precision-weighted combination of current and historical ``eta``.

    Returns ``(n U^-1 + m S^-1)^-1 (n U^-1 eta~ + m S^-1 eta^)`` carrying the
    scaled variance ``(U^-1 + (rho S)^-1)^-1`` with ``rho = n/m``.
    """
    hist = _as_historical(historical)
    if hist.dim != current.dim:
        raise DimMismatch("current and historical eta differ in dimension",
                          current=current.dim, historical=hist.dim)
    n, m = current.n, hist.n
    prec_cur = n * la.invert(current.scaled_var)
    prec_hist = m * la.invert(hist.scaled_var)
    total = prec_cur + prec_hist
    value = la.solve(total, prec_cur @ current.value + prec_hist @ hist.value)
    # scaled by n: n * total^-1
    var = la.invert(total / n)
    return Estimate(value, var, n)


def combine_theta_C(joint: JointEstimate, historical):
    """Summary-level fusion: adjust ``theta~`` by regression on ``eta~ - eta_bar``.

    Returns a :class:`JointEstimate` whose ``upsilon`` is the asymptotic
    variance of the fused pair.
    """
    from .asymvar import variance_C

    hist = _as_historical(historical)
    eta_bar = combine_eta(joint.eta_estimate(), hist)
    ups = joint.upsilon
    if not np.any(ups.te):
        theta = joint.theta
    else:
        # R (eta~ - eta_bar) with R = U_te U_ee^-1
        adj = ups.te @ la.solve(ups.ee, joint.eta - eta_bar.value)
        theta = joint.theta - adj
    rho = joint.n / hist.n
    C = variance_C(ups, hist.scaled_var, rho)
    return JointEstimate(theta, eta_bar.value, C, joint.n)


def scalar_efficiency(r: float, w2: float) -> float:
    """Asymptotic relative efficiency ``1 - w2 r^2`` of the fused scalar theta."""
    if not -1.0 <= r <= 1.0:
        raise RangeError("correlation must lie in [-1, 1]", r=r)
    if not 0.0 <= w2 <= 1.0:
        raise RangeError("historical weight must lie in [0, 1]", w2=w2)
    return 1.0 - w2 * r * r


def scalar_weights(n: int, upsilon_ee: float, m: int, sigma2: float) -> tuple[float, float]:
    """Finite-sample scalar weights ``(w1*, w2*)`` on ``eta~`` and ``eta^``."""
    a = n / upsilon_ee
    b = m / sigma2
    return a / (a + b), b / (a + b)
