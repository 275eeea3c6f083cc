"""Monte Carlo checks of the asymptotic variance formulas.

Normal experiments are simulated through their sufficient statistics (cell
and group means), binomial ones through counts. Replications are split into
fixed-size blocks, each with its own child of the configuration seed, so the
output depends on the seed only and never on the thread count.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import anova, linalg as la
from .asymvar import variance_A, variance_B
from .bliss import Allocation, BlissInstance, bliss_variance
from .errors import ConfigError, HistfuseError
from .fusion import combination_weights

SCENARIOS = ("anova-typeI", "anova-typeII", "anova-threearm", "bliss")
BLOCK = 8192
MIN_REPS = 1000

DEFAULT_PARAMS = {
    "anova-typeI": {"theta": 0.5, "eta": [1.0, 0.3, -0.2]},
    "anova-typeII": {"theta": 0.5, "eta": [1.0, 0.3, -0.2]},
    "anova-threearm": {"theta": 0.5, "eta": [1.0, 0.3, -0.2]},
    "bliss": {"eta1": 0.7, "eta2": 0.8},
}


def default_threads() -> int:
    env = os.environ.get("HISTFUSE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


@dataclass
class SimConfig:
    """One simulation scenario.

    ``sizes`` holds ``n`` and ``m`` (or ``m_groups``) for the ANOVA scenarios
    and ``n12, n1, n2, m1, m2`` for ``bliss``. ``design`` is the cell-fraction
    tuple ``(xi00, xi10, xi01, xi11)``.
    """

    scenario: str
    true_params: dict = field(default_factory=dict)
    sizes: dict = field(default_factory=dict)
    design: tuple | None = None
    reps: int = 100_000
    seed: int = 0
    sigma2: float = 1.0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError("unknown scenario", scenario=self.scenario, allowed=list(SCENARIOS))
        if int(self.reps) < 1:
            raise ConfigError("reps must be positive", reps=self.reps)
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer", seed=self.seed)
        params = dict(DEFAULT_PARAMS[self.scenario])
        params.update(self.true_params or {})
        self.true_params = params
        self.reps = int(self.reps)
        self.seed = int(self.seed)
        if self.design is not None:
            self.design = tuple(float(x) for x in self.design)
        if not self.sigma2 > 0:
            raise ConfigError("sigma2 must be positive", sigma2=self.sigma2)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class McReport:
    scenario: str
    empirical_scaled_var: np.ndarray
    asymptotic: np.ndarray
    bias: np.ndarray
    rel_err: float
    mc_se: float
    reps_used: int
    rejection_rate: float = 0.0
    labels: tuple = ()
    extra: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    elapsed: float | None = None

    @property
    def empirical_theta(self) -> float:
        return float(self.empirical_scaled_var[0, 0])

    @property
    def asymptotic_theta(self) -> float:
        return float(self.asymptotic[0, 0])

    def to_dict(self, timing: bool = False) -> dict:
        out = {
            "scenario": self.scenario,
            "config": self.config,
            "labels": list(self.labels),
            "empirical_scaled_var": _matrix_json(self.empirical_scaled_var),
            "asymptotic": _matrix_json(self.asymptotic),
            "bias": [float(b) for b in self.bias],
            "rel_err": self.rel_err,
            "mc_se_thetatheta": self.mc_se,
            "reps_used": self.reps_used,
            "rejection_rate": self.rejection_rate,
            **self.extra,
        }
        if timing and self.elapsed is not None:
            out["elapsed"] = self.elapsed
        return out


def _matrix_json(m: np.ndarray) -> dict:
    m = np.atleast_2d(m)
    return {"dim": int(m.shape[0]), "rows": [[float(x) for x in row] for row in m]}


def relative_error(empirical: np.ndarray, asymptotic: np.ndarray) -> float:
    """Max entry-wise relative deviation, over entries not negligibly small."""
    emp = np.atleast_2d(empirical)
    asy = np.atleast_2d(asymptotic)
    scale = float(np.max(np.abs(asy)))
    mask = np.abs(asy) > 1e-12 * scale
    return float(np.max(np.abs(emp - asy)[mask] / np.abs(asy)[mask]))


def variance_mc_se(x: np.ndarray) -> float:
    """Standard error of the sample variance from the fourth central moment."""
    d = x - x.mean()
    m2 = float(np.mean(d * d))
    m4 = float(np.mean(d ** 4))
    return math.sqrt(max(m4 - m2 * m2, 0.0) / x.shape[0])


def _run_blocks(fn, reps: int, seed: int, threads: int | None):
    n_blocks = (reps + BLOCK - 1) // BLOCK
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    sizes = [min(BLOCK, reps - k * BLOCK) for k in range(n_blocks)]
    jobs = list(zip(children, sizes))
    threads = max(1, int(threads or default_threads()))

    def run(job):
        ss, size = job
        return fn(np.random.Generator(np.random.Philox(ss)), size)

    if threads == 1 or n_blocks == 1:
        parts = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, jobs))
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


# --- ANOVA -------------------------------------------------------------------

def _cell_means(eta, theta):
    e0, e1, e2 = eta
    # cells 00, 10, 01, 11
    return np.array([e0, e0 + e1, e0 + e2, e0 + e1 + e2 + theta])


def _hist_means(eta):
    e0, e1, e2 = eta
    # groups (control S1, drug 1 S1, control S2, drug 2 S2)
    return np.array([e0, e0 + e1, e0, e0 + e2])


def historical_eta(hist: np.ndarray, m_groups) -> np.ndarray:
    """Vectorised aggregation of historical group means (rows are replications)."""
    m10, _, m20, _ = (float(x) for x in m_groups)
    eta0 = (m10 * hist[:, 0] + m20 * hist[:, 2]) / (m10 + m20)
    return np.column_stack([eta0, hist[:, 1] - eta0, hist[:, 3] - eta0])


def current_contrasts(cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``theta~`` and ``eta~`` from cell means ordered 00, 10, 01, 11."""
    y00, y10, y01, y11 = cells.T
    theta = y11 - y10 - y01 + y00
    eta = np.column_stack([y00, y10 - y00, y01 - y00])
    return theta, eta


@dataclass(frozen=True)
class _AnovaSetup:
    n: int
    m: int
    m_groups: tuple
    xi: tuple
    sigma: np.ndarray  # scaled historical variance
    sigma2: float
    theta: float
    eta: np.ndarray


def _anova_setup(cfg: SimConfig) -> _AnovaSetup:
    sizes = cfg.sizes
    try:
        n = int(sizes.get("n", 2000))
        if "m_groups" in sizes:
            m_groups = tuple(int(x) for x in sizes["m_groups"])
        else:
            m = int(sizes.get("m", 2000))
            if m % 4:
                raise ConfigError("m must be divisible by 4 for balanced historical groups", m=m)
            m_groups = (m // 4,) * 4
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad sizes: {exc}") from exc
    if n < 1 or len(m_groups) != 4 or min(m_groups) < 1:
        raise ConfigError("sizes must be positive", n=n, m_groups=list(m_groups))
    if cfg.scenario == "anova-typeI":
        xi = (0.0, 0.0, 0.0, 1.0)
    elif cfg.design is not None:
        xi = cfg.design
    elif cfg.scenario == "anova-threearm":
        xi = (0.0, 0.0005, 0.0005, 0.999)
    else:
        xi = (0.25, 0.25, 0.25, 0.25)
    try:
        anova.DesignXi(*xi)
    except HistfuseError as exc:
        raise ConfigError(f"bad design: {exc.message}", xi=list(xi)) from exc
    if cfg.scenario == "anova-typeII" and min(xi) <= 0:
        raise ConfigError("type II scenario needs an interior design", xi=list(xi))
    if cfg.scenario == "anova-threearm" and (xi[0] != 0 or xi[1] <= 0 or xi[2] <= 0):
        raise ConfigError("three-arm scenario needs xi00 = 0 and positive single-drug cells",
                          xi=list(xi))
    eta = np.asarray(cfg.true_params["eta"], dtype=float)
    if eta.shape != (3,):
        raise ConfigError("eta must have three components")
    return _AnovaSetup(n, sum(m_groups), m_groups, tuple(xi),
                       anova.historical_sigma(m_groups, cfg.sigma2), cfg.sigma2,
                       float(cfg.true_params["theta"]), eta)


def _draw_anova(s: _AnovaSetup):
    cell_mu = _cell_means(s.eta, s.theta)
    cell_sd = np.array([math.sqrt(s.sigma2 / (s.n * x)) if x > 0 else 0.0 for x in s.xi])
    hist_mu = _hist_means(s.eta)
    hist_sd = np.sqrt(s.sigma2 / np.asarray(s.m_groups, dtype=float))

    def draw(rng, size):
        hist = hist_mu + hist_sd * rng.standard_normal((size, 4))
        cells = cell_mu + cell_sd * rng.standard_normal((size, 4))
        return {"hist": hist, "cells": cells}

    return draw


def _scaled_cov(x: np.ndarray, n: int) -> np.ndarray:
    return n * np.atleast_2d(np.cov(x, rowvar=False, ddof=1))


def simulate_anova(cfg: SimConfig, threads: int | None = None) -> McReport:
    """Simulate one ANOVA scenario and compare ``n * Cov`` with its asymptotic matrix."""
    if not cfg.scenario.startswith("anova"):
        raise ConfigError("not an ANOVA scenario", scenario=cfg.scenario)
    if cfg.reps < MIN_REPS:
        raise ConfigError("variance comparisons need at least 1000 replications", reps=cfg.reps)
    t0 = time.perf_counter()
    s = _anova_setup(cfg)
    draws = _run_blocks(_draw_anova(s), cfg.reps, cfg.seed, threads)
    eta_hat = historical_eta(draws["hist"], s.m_groups)
    y11 = draws["cells"][:, 3]
    rho = s.n / s.m
    extra = {}

    if cfg.scenario == "anova-typeI":
        theta_bar = y11 - eta_hat.sum(axis=1)
        est = np.column_stack([theta_bar, eta_hat])
        asym = variance_A(anova.problem_spec(rho, s.sigma2, sigma=s.sigma)).full()
        extra["exact_scaled_var_theta"] = s.n * s.sigma2 * (1.0 / s.n + float(
            np.ones(3) @ s.sigma @ np.ones(3)) / (s.sigma2 * s.m))
        labels = ("theta_A", "eta0", "eta1", "eta2")
    elif cfg.scenario == "anova-typeII":
        xi = anova.DesignXi(*s.xi)
        ups = anova.upsilon_of_design(xi, s.sigma2)
        theta_t, eta_t = current_contrasts(draws["cells"])
        wc, wh = combination_weights(ups.ee, s.n, s.sigma, s.m)
        eta_bar = eta_t @ wc.T + eta_hat @ wh.T
        theta_b = y11 - eta_bar.sum(axis=1)
        r = la.solve(ups.ee, ups.te.T).T
        theta_c = theta_t - (eta_t - eta_bar) @ r[0]
        est = np.column_stack([theta_b, eta_bar])
        asym = variance_B(anova.problem_spec(rho, s.sigma2, xi=xi, sigma=s.sigma)).full()
        extra["max_abs_theta_B_minus_C"] = float(np.max(np.abs(theta_b - theta_c)))
        labels = ("theta_B", "eta0", "eta1", "eta2")
    else:
        _, x10, x01, x11 = s.xi
        pair = draws["cells"][:, 1:3]
        info = anova.PAIR_MAP.T @ np.diag([x10, x01]) @ anova.PAIR_MAP / s.sigma2
        prec_hist = la.invert(s.sigma)
        total = s.n * info + s.m * prec_hist
        rhs = s.n * (pair * np.array([x10, x01]) / s.sigma2) @ anova.PAIR_MAP + s.m * eta_hat @ prec_hist
        eta_dag = la.solve(total, rhs.T).T
        theta_d = y11 - eta_dag.sum(axis=1)
        est = np.column_stack([theta_d, eta_dag])
        g = la.invert(info + la.invert(rho * s.sigma))
        ones = np.ones(3)
        asym = la.assemble([[s.sigma2 / x11 + ones @ g @ ones]], -(ones @ g), g)
        labels = ("theta_D", "eta0", "eta1", "eta2")

    truth = np.concatenate([[s.theta], s.eta])
    emp = _scaled_cov(est, s.n)
    report = McReport(
        scenario=cfg.scenario,
        empirical_scaled_var=emp,
        asymptotic=asym,
        bias=est.mean(axis=0) - truth,
        rel_err=relative_error(emp, asym),
        mc_se=s.n * variance_mc_se(est[:, 0]),
        reps_used=cfg.reps,
        labels=labels,
        extra=extra,
        config=cfg.to_dict(),
        elapsed=time.perf_counter() - t0,
    )
    report.extra["bias_se_theta"] = float(np.std(est[:, 0], ddof=1) / math.sqrt(cfg.reps))
    return report


def verify_coincidence(cfg: SimConfig, threads: int | None = None) -> float:
    """Max ``|theta_B - theta_C|`` over simulated type II replications."""
    if cfg.scenario != "anova-typeII":
        raise ConfigError("coincidence check needs the anova-typeII scenario", scenario=cfg.scenario)
    s = _anova_setup(cfg)
    draws = _run_blocks(_draw_anova(s), cfg.reps, cfg.seed, threads)
    xi = anova.DesignXi(*s.xi)
    ups = anova.upsilon_of_design(xi, s.sigma2)
    eta_hat = historical_eta(draws["hist"], s.m_groups)
    theta_t, eta_t = current_contrasts(draws["cells"])
    wc, wh = combination_weights(ups.ee, s.n, s.sigma, s.m)
    eta_bar = eta_t @ wc.T + eta_hat @ wh.T
    theta_b = draws["cells"][:, 3] - eta_bar.sum(axis=1)
    r = la.solve(ups.ee, ups.te.T).T
    theta_c = theta_t - (eta_t - eta_bar) @ r[0]
    return float(np.max(np.abs(theta_b - theta_c)))


# --- Bliss -------------------------------------------------------------------

def _bliss_setup(cfg: SimConfig):
    sz = cfg.sizes
    try:
        n12, n1, n2 = int(sz.get("n12", 55)), int(sz.get("n1", 0)), int(sz.get("n2", 0))
        m1, m2 = int(sz.get("m1", 30)), int(sz.get("m2", 50))
        e1 = float(cfg.true_params["eta1"])
        e2 = float(cfg.true_params["eta2"])
        theta = float(cfg.true_params.get("theta", e1 * e2))
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad bliss configuration: {exc}") from exc
    if n12 < 1 or n1 < 0 or n2 < 0 or m1 < 1 or m2 < 1:
        raise ConfigError("bliss arms need n12 >= 1, m1, m2 >= 1",
                          sizes={"n12": n12, "n1": n1, "n2": n2, "m1": m1, "m2": m2})
    for name, p in (("theta", theta), ("eta1", e1), ("eta2", e2)):
        if not 0 < p < 1:
            raise ConfigError(f"{name} must lie strictly inside (0, 1)", **{name: p})
    return n12, n1, n2, m1, m2, theta, e1, e2


def simulate_bliss(cfg: SimConfig, threads: int | None = None) -> McReport:
    """Empirical variance of the pooled log Bliss contrast vs the design criterion.

    Replications with a zero count in any pooled arm have an undefined log
    and are dropped; the dropped fraction is reported.
    """
    if cfg.scenario != "bliss":
        raise ConfigError("not the bliss scenario", scenario=cfg.scenario)
    if cfg.reps < MIN_REPS:
        raise ConfigError("variance comparisons need at least 1000 replications", reps=cfg.reps)
    t0 = time.perf_counter()
    n12, n1, n2, m1, m2, theta, e1, e2 = _bliss_setup(cfg)

    def draw(rng, size):
        x12 = rng.binomial(n12, theta, size)
        x1 = rng.binomial(n1, e1, size) + rng.binomial(m1, e1, size)
        x2 = rng.binomial(n2, e2, size) + rng.binomial(m2, e2, size)
        return {"x12": x12, "x1": x1, "x2": x2}

    d = _run_blocks(draw, cfg.reps, cfg.seed, threads)
    ok = (d["x12"] > 0) & (d["x1"] > 0) & (d["x2"] > 0)
    kept = int(ok.sum())
    if kept < 2:
        raise ConfigError("every replication hit a zero count", reps=cfg.reps)
    phi = (np.log(d["x12"][ok] / n12) - np.log(d["x1"][ok] / (n1 + m1))
           - np.log(d["x2"][ok] / (n2 + m2)))
    inst = BlissInstance(m1, m2, e1, e2)
    asym = bliss_variance(Allocation(n12, n1, n2), inst, theta)
    emp = float(np.var(phi, ddof=1))
    truth = math.log(theta) - math.log(e1) - math.log(e2)
    return McReport(
        scenario="bliss",
        empirical_scaled_var=np.array([[emp]]),
        asymptotic=np.array([[asym]]),
        bias=np.array([float(phi.mean()) - truth]),
        rel_err=abs(emp - asym) / asym,
        mc_se=variance_mc_se(phi),
        reps_used=kept,
        rejection_rate=1.0 - kept / cfg.reps,
        labels=("log_bliss",),
        config=cfg.to_dict(),
        elapsed=time.perf_counter() - t0,
    )


def simulate(cfg: SimConfig, threads: int | None = None) -> McReport:
    if cfg.scenario == "bliss":
        return simulate_bliss(cfg, threads)
    return simulate_anova(cfg, threads)
