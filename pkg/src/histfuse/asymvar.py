"""Asymptotic variances of plug-in, re-estimation and summary-fusion estimators.

Notation: ``D_t = E d psi/d theta`` (p x p), ``D_e = E d psi/d eta`` (p x q),
``S_psi = E psi psi^T``, ``S`` the pooled historical scaled variance and
``rho = n/m``. All variances are scaled by the current sample size ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg as la
from .errors import DimMismatch, MissingUpsilon, RangeError, SingularDTheta
from .fusion import fusion_weights
from .linalg import VarianceBlocks

__all__ = [
    "ProblemSpec",
    "VarianceBlocks",
    "HierarchyReport",
    "fused_eta_variance",
    "variance_A",
    "variance_B",
    "variance_C",
    "variance_C_product",
    "delta_variance",
    "compare_hierarchy",
    "theorem6_preconditions",
]


def _d_theta_inverse(d_theta: np.ndarray) -> np.ndarray:
    if np.linalg.cond(d_theta) >= la.MAX_COND:
        raise SingularDTheta("D_theta is singular or ill-conditioned")
    return np.linalg.inv(d_theta)


@dataclass(frozen=True)
class ProblemSpec:
    d_theta: np.ndarray
    d_eta: np.ndarray
    sigma_psi: np.ndarray
    sigma: np.ndarray
    rho: float
    upsilon_ee: np.ndarray | None = None

    def __post_init__(self):
        d_theta = la.as_matrix(self.d_theta)
        p = d_theta.shape[0]
        if d_theta.shape != (p, p):
            raise DimMismatch("D_theta must be square", shape=list(d_theta.shape))
        sigma = la.as_symmetric(self.sigma)
        q = sigma.shape[0]
        d_eta = np.asarray(self.d_eta, dtype=float).reshape(p, -1)
        if d_eta.shape != (p, q):
            raise DimMismatch("D_eta must be p x q", shape=list(d_eta.shape), p=p, q=q)
        sigma_psi = la.as_symmetric(self.sigma_psi)
        if sigma_psi.shape != (p, p):
            raise DimMismatch("Sigma_psi must be p x p", shape=list(sigma_psi.shape))
        _d_theta_inverse(d_theta)
        la.cholesky(sigma_psi)
        la.cholesky(sigma)
        ups = None
        if self.upsilon_ee is not None:
            ups = la.as_symmetric(self.upsilon_ee)
            if ups.shape != (q, q):
                raise DimMismatch("Upsilon_ee must be q x q", shape=list(ups.shape))
            la.cholesky(ups)
        if not self.rho >= 0:
            raise RangeError("rho must be non-negative", rho=self.rho)
        object.__setattr__(self, "d_theta", d_theta)
        object.__setattr__(self, "d_eta", d_eta)
        object.__setattr__(self, "sigma_psi", sigma_psi)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "upsilon_ee", ups)
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def p(self) -> int:
        return self.d_theta.shape[0]

    @property
    def q(self) -> int:
        return self.sigma.shape[0]


def fused_eta_variance(upsilon_ee, sigma, rho: float) -> np.ndarray:
    """``(U^-1 + (rho S)^-1)^-1``, evaluated as ``V - V (U + V)^-1 V`` with ``V = rho S``.

    The difference form stays finite as ``rho -> 0`` (and is exactly 0 there).
    """
    u = la.as_symmetric(upsilon_ee)
    v = rho * la.as_symmetric(sigma)
    if u.shape != v.shape:
        raise DimMismatch("Upsilon_ee and Sigma differ in dimension",
                          upsilon=u.shape[0], sigma=v.shape[0])
    if rho == 0.0:
        return np.zeros_like(v)
    f = v - v @ la.solve(u + v, v)
    return 0.5 * (f + f.T)


def _plugin_blocks(spec: ProblemSpec, eta_var: np.ndarray) -> VarianceBlocks:
    # Shared by A (eta_var = rho S) and B (eta_var = fused variance).
    dinv = _d_theta_inverse(spec.d_theta)
    tt = dinv @ (spec.sigma_psi + spec.d_eta @ eta_var @ spec.d_eta.T) @ dinv.T
    te = -dinv @ spec.d_eta @ eta_var
    return VarianceBlocks(0.5 * (tt + tt.T), te, eta_var)


def variance_A(spec: ProblemSpec) -> VarianceBlocks:
    """Plug-in estimator: historical eta fixed at its estimate."""
    return _plugin_blocks(spec, spec.rho * spec.sigma)


def variance_B(spec: ProblemSpec) -> VarianceBlocks:
    """Re-estimation: theta solved at the fused eta."""
    if spec.upsilon_ee is None:
        raise MissingUpsilon("variance_B needs Upsilon_ee")
    return _plugin_blocks(spec, fused_eta_variance(spec.upsilon_ee, spec.sigma, spec.rho))


def _check_c_inputs(upsilon, sigma, rho):
    if not isinstance(upsilon, VarianceBlocks):
        raise DimMismatch("upsilon must be given as VarianceBlocks")
    sigma = la.as_symmetric(sigma)
    if sigma.shape[0] != upsilon.q:
        raise DimMismatch("Sigma does not match the eta block", q=upsilon.q, sigma=sigma.shape[0])
    if not rho > 0:
        raise RangeError("rho must be positive for the summary-fusion variance", rho=rho)
    la.cholesky(upsilon.full())
    return sigma


def variance_C(upsilon: VarianceBlocks, sigma, rho: float) -> VarianceBlocks:
    """Summary-level fusion variance in closed form.

    ``C_tt = U_tt - U_te U_ee^-1 W2 U_te^T``, ``C_te = U_te W1^T``,
    ``C_ee = (U_ee^-1 + (rho S)^-1)^-1``.
    """
    sigma = _check_c_inputs(upsilon, sigma, rho)
    gamma = rho / (1.0 + rho)
    w1, w2 = fusion_weights(upsilon.ee, sigma, gamma)
    r = la.solve(upsilon.ee, upsilon.te.T).T
    tt = upsilon.tt - r @ w2 @ upsilon.te.T
    te = upsilon.te @ w1.T
    ee = fused_eta_variance(upsilon.ee, sigma, rho)
    return VarianceBlocks(0.5 * (tt + tt.T), te, ee)


def variance_C_product(upsilon: VarianceBlocks, sigma, rho: float) -> VarianceBlocks:
    """Summary-level fusion variance as ``M V M^T`` (verification route)."""
    sigma = _check_c_inputs(upsilon, sigma, rho)
    p, q = upsilon.p, upsilon.q
    gamma = rho / (1.0 + rho)
    w1, w2 = fusion_weights(upsilon.ee, sigma, gamma)
    r = la.solve(upsilon.ee, upsilon.te.T).T
    M = np.block([
        [np.eye(p), -r @ w2, r @ w2],
        [np.zeros((q, p)), w1, w2],
    ])
    V = la.block_diag(upsilon.full(), rho * sigma)
    C = M @ V @ M.T
    return VarianceBlocks.from_full(0.5 * (C + C.T), p)


def delta_variance(v, jacobian) -> np.ndarray:
    """``P V P^T`` for a functional with Jacobian ``P`` (r x (p+q))."""
    full = v.full() if isinstance(v, VarianceBlocks) else la.as_symmetric(v)
    P = la.as_matrix(jacobian)
    if P.shape[1] != full.shape[0]:
        raise DimMismatch("Jacobian does not conform", jacobian=list(P.shape), dim=full.shape[0])
    out = P @ full @ P.T
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class HierarchyReport:
    b_le_a: bool
    c_le_upsilon: bool
    b_le_c: bool
    margin_b_a: float
    margin_c_upsilon: float
    margin_b_c: float

    def to_dict(self) -> dict:
        return {
            "B_le_A": self.b_le_a,
            "C_le_Upsilon": self.c_le_upsilon,
            "B_le_C": self.b_le_c,
            "min_eig_A_minus_B": self.margin_b_a,
            "min_eig_Upsilon_minus_C": self.margin_c_upsilon,
            "min_eig_C_minus_B": self.margin_b_c,
        }


def _full(x) -> np.ndarray:
    return x.full() if isinstance(x, VarianceBlocks) else la.as_symmetric(x)


def compare_hierarchy(a, b, c, upsilon, tol: float = 1e-9) -> HierarchyReport:
    """Loewner comparisons B ⪯ A, C ⪯ Upsilon and B ⪯ C.

    The last one is only reported; it need not hold without extra conditions.
    """
    A, B, C, U = (_full(x) for x in (a, b, c, upsilon))
    if not A.shape == B.shape == C.shape == U.shape:
        raise DimMismatch("hierarchy matrices differ in dimension",
                          shapes=[list(x.shape) for x in (A, B, C, U)])
    return HierarchyReport(
        b_le_a=la.loewner_leq(B, A, tol),
        c_le_upsilon=la.loewner_leq(C, U, tol),
        b_le_c=la.loewner_leq(B, C, tol),
        margin_b_a=la.loewner_margin(B, A),
        margin_c_upsilon=la.loewner_margin(C, U),
        margin_b_c=la.loewner_margin(B, C),
    )


def theorem6_preconditions(d_theta_psi, d_eta_psi, d_theta_lam, d_eta_lam,
                           sandwich_psi, sandwich_lam, tol: float = 1e-9) -> tuple[bool, bool]:
    """Sufficient conditions under which re-estimation beats summary fusion.

    ``sandwich_*`` are the outer-product matrices ``E0(h h^T)`` of the two
    estimating functions; they are wrapped as ``D_t^-1 (.) D_t^-T`` here.

    Returns
    -------
    (sensitive, efficient)
        ``D_t(psi)^-1 D_e(psi) <= D_t(lam)^-1 D_e(lam)`` element-wise, and the
        psi sandwich ⪯ the lambda sandwich.
    """
    dtp = la.as_matrix(d_theta_psi)
    dtl = la.as_matrix(d_theta_lam)
    inv_p = _d_theta_inverse(dtp)
    inv_l = _d_theta_inverse(dtl)
    sens_p = inv_p @ np.asarray(d_eta_psi, dtype=float).reshape(dtp.shape[0], -1)
    sens_l = inv_l @ np.asarray(d_eta_lam, dtype=float).reshape(dtl.shape[0], -1)
    if sens_p.shape != sens_l.shape:
        raise DimMismatch("sensitivity matrices differ in shape",
                          psi=list(sens_p.shape), lam=list(sens_l.shape))
    sensitive = bool(np.all(sens_p <= sens_l + tol * max(1.0, float(np.max(np.abs(sens_l))))))
    sw_p = inv_p @ la.as_symmetric(sandwich_psi) @ inv_p.T
    sw_l = inv_l @ la.as_symmetric(sandwich_lam) @ inv_l.T
    efficient = la.loewner_leq(sw_p, sw_l, tol)
    return sensitive, efficient
