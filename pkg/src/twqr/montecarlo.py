"""Monte Carlo engine for two-way arrays.

Implements the additive latent-factor data generating process, rejection
frequency experiments across the variance estimator families, a nested
simulation oracle for the variance components of the quantile score, and a
median-regression demonstration of the multiplicative interaction regime
whose limit is a product of normals.

Every replication is a pure function of (seed, replication index) through
counter-based RNG streams, so experiments parallelize without changing
results: stream ids partition row, column, and cell latents, error latents,
and regressor dimensions.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.stats import iqr, kstest, kurtosis, norm

from .crve import CrveKind, omega_variant, sandwich, t_test
from .errors import (
    DegenerateScale,
    ExcessiveFailureRate,
    InvalidConfig,
    NumericError,
)
from .jacobian import powell_jacobian, rule_of_thumb_bandwidth
from .panel import PanelArray
from .solver import fit_qr, score_matrix

__all__ = [
    "DgpWeights",
    "MonteCarloConfig",
    "RejectionReport",
    "VarianceOracle",
    "NonGaussianDemo",
    "NonGaussianSummary",
    "generate_dgp",
    "true_beta",
    "rejection_experiment",
    "oracle_variance_components",
    "direct_score_variance",
    "true_bread",
    "nongaussian_demo",
    "config_from_json",
    "config_to_json",
    "report_to_json",
    "report_rows",
]

NOMINAL_LEVEL = 0.05
FAILURE_TOLERANCE = 0.01   # more than this share of failed reps aborts a run

# Stream ids: 0-2 row/column/cell regressor latents (substream per slope),
# 3-5 row/column/cell error latents, 8+ oracle and reference draws.
_UX, _VX, _WX, _UE, _VE, _WE = 0, 1, 2, 3, 4, 5
_ORACLE_BASE = 8
_DIRECT_STREAM = 14

_REF_CALIBRATION_SIZE = 200_000


def _stream(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based stream keyed by (seed, *key)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class DgpWeights:
    """Loadings of the row (U), column (V), and cell (W) latents.

    The first three weight the slope regressors, the last three the error.
    """

    wUx: float = 0.0
    wVx: float = 0.0
    wWx: float = 1.0
    wUe: float = 0.0
    wVe: float = 0.0
    wWe: float = 1.0

    def __post_init__(self):
        for name in ("wUx", "wVx", "wWx", "wUe", "wVe", "wWe"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v >= 0.0):
                raise InvalidConfig(f"weight {name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, v)

    @property
    def sigma_e(self) -> float:
        """Error standard deviation (the three loads add in quadrature)."""
        return math.sqrt(self.wUe**2 + self.wVe**2 + self.wWe**2)

    @property
    def sigma_x2(self) -> float:
        """Variance of each slope regressor."""
        return self.wUx**2 + self.wVx**2 + self.wWx**2

    def as_dict(self) -> dict[str, float]:
        return {
            "wUx": self.wUx, "wVx": self.wVx, "wWx": self.wWx,
            "wUe": self.wUe, "wVe": self.wVe, "wWe": self.wWe,
        }


_ALL_KINDS = tuple(CrveKind)


@dataclass(frozen=True)
class MonteCarloConfig:
    """Design of one simulation run.

    ``d`` counts regressors including the constant column, so there are
    ``d - 1`` slopes. All slope coefficients are 1 and inference targets
    the last one.
    """

    G: int
    H: int
    d: int
    tau: float
    weights: DgpWeights
    reps: int
    seed: int
    methods: tuple[CrveKind, ...] = _ALL_KINDS
    null_value: float = 1.0

    def __post_init__(self):
        if self.reps < 1:
            raise InvalidConfig(f"reps must be >= 1, got {self.reps}")
        if self.G < 2 or self.H < 2:
            raise InvalidConfig(f"G and H must be >= 2, got ({self.G}, {self.H})")
        if self.d < 2:
            raise InvalidConfig(f"d must be >= 2 (constant plus a slope), got {self.d}")
        if not 0.0 < self.tau < 1.0:
            raise InvalidConfig(f"tau must lie in (0, 1), got {self.tau}")
        if not isinstance(self.weights, DgpWeights):
            object.__setattr__(self, "weights", DgpWeights(**dict(self.weights)))
        if not self.weights.wWx > 0.0:
            raise InvalidConfig("wWx must be > 0 so slope regressors are nondegenerate")
        try:
            methods = tuple(CrveKind(m) for m in self.methods)
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from None
        if not methods:
            raise InvalidConfig("at least one variance estimator is required")
        object.__setattr__(self, "methods", methods)


def generate_dgp(config: MonteCarloConfig, rep: int) -> PanelArray:
    """One replication of the additive latent-factor array.

    Column 0 of x is the constant. Slope j loads the row latent U_g,
    column latent V_h, and cell latent W_gh with the configured weights;
    the error is the analogous combination of its own latents. The
    response is y = 1 + sum of slopes + error, so every coefficient is 1
    at the median.
    """
    w = config.weights
    G, H, k = config.G, config.H, config.d - 1
    slopes = np.empty((G, H, k))
    for j in range(k):
        u = _stream(config.seed, rep, _UX, j).standard_normal(G)
        v = _stream(config.seed, rep, _VX, j).standard_normal(H)
        cell = _stream(config.seed, rep, _WX, j).standard_normal((G, H))
        slopes[:, :, j] = w.wUx * u[:, None] + w.wVx * v[None, :] + w.wWx * cell
    ue = _stream(config.seed, rep, _UE, 0).standard_normal(G)
    ve = _stream(config.seed, rep, _VE, 0).standard_normal(H)
    we = _stream(config.seed, rep, _WE, 0).standard_normal((G, H))
    err = w.wUe * ue[:, None] + w.wVe * ve[None, :] + w.wWe * we
    y = 1.0 + slopes.sum(axis=2) + err
    x = np.empty((G * H, k + 1))
    x[:, 0] = 1.0
    x[:, 1:] = slopes.reshape(G * H, k)
    return PanelArray(
        G=G, H=H,
        g_idx=np.repeat(np.arange(G), H),
        h_idx=np.tile(np.arange(H), G),
        y=y.reshape(-1), x=x,
    )


def true_beta(config: MonteCarloConfig, tau: float) -> np.ndarray:
    """Population coefficients at quantile tau: unit slopes, intercept
    shifted by the error's tau-quantile."""
    beta = np.ones(config.d)
    beta[0] = 1.0 + config.weights.sigma_e * float(norm.ppf(tau))
    return beta


# --- rejection-frequency experiment ---

@dataclass(frozen=True)
class RejectionReport:
    """Per-method rejection frequencies with Monte Carlo standard errors.

    Dictionaries are keyed by the estimator tag (CrveKind.value). Failed
    replications are excluded from the denominator and counted.
    """

    config: MonteCarloConfig
    frequencies: dict[str, float]
    mc_se: dict[str, float]
    reps_used: dict[str, int]
    failures: dict[str, int]


def _replication_outcome(config: MonteCarloConfig, rep: int) -> np.ndarray:
    """Outcome row for one replication: 1 reject, 0 accept, -1 failed."""
    out = np.full(len(config.methods), -1, dtype=np.int8)
    try:
        panel = generate_dgp(config, rep)
        fit = fit_qr(panel, config.tau)
        if not fit.solver.converged:
            return out
        bw = rule_of_thumb_bandwidth(panel, fit.residuals, config.tau)
        jac = powell_jacobian(panel, fit.residuals, bw.ell)
        scores = score_matrix(panel, fit.beta_hat, config.tau)
    except NumericError:
        return out
    target = config.d - 1
    for i, kind in enumerate(config.methods):
        try:
            omega = omega_variant(scores, kind)
            var = sandwich(jac, omega, kind)
            test = t_test(fit, var, target, config.null_value)
        except NumericError:
            continue
        out[i] = 1 if test.p_value < NOMINAL_LEVEL else 0
    return out


def rejection_experiment(config: MonteCarloConfig, n_jobs: int = 1) -> RejectionReport:
    """Size of the nominal-5% t-test of the last coefficient.

    Each replication is a pure function of (config, rep) and outcomes are
    reduced in replication order, so the report does not depend on
    ``n_jobs``. A method with more than FAILURE_TOLERANCE failed
    replications aborts the run rather than reporting a biased frequency.
    """
    reps = config.reps
    outcomes = np.empty((reps, len(config.methods)), dtype=np.int8)
    if n_jobs <= 1:
        for rep in range(reps):
            outcomes[rep] = _replication_outcome(config, rep)
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            rows = pool.map(lambda r: _replication_outcome(config, r), range(reps))
            for rep, row in enumerate(rows):
                outcomes[rep] = row
    freqs: dict[str, float] = {}
    ses: dict[str, float] = {}
    used: dict[str, int] = {}
    fails: dict[str, int] = {}
    for i, kind in enumerate(config.methods):
        col = outcomes[:, i]
        n_fail = int(np.sum(col < 0))
        if n_fail > FAILURE_TOLERANCE * reps:
            raise ExcessiveFailureRate(
                f"{n_fail} of {reps} replications failed for {kind.value}"
            )
        n_ok = reps - n_fail
        p = float(np.sum(col == 1)) / n_ok
        freqs[kind.value] = p
        ses[kind.value] = math.sqrt(p * (1.0 - p) / n_ok)
        used[kind.value] = n_ok
        fails[kind.value] = n_fail
    return RejectionReport(
        config=config, frequencies=freqs, mc_se=ses, reps_used=used, failures=fails
    )


# --- variance-component oracle ---

@dataclass(frozen=True)
class VarianceOracle:
    """Nested-simulation estimates of the score variance components.

    sigma_I2/II2 are the variances of the score's conditional mean given
    the row / column latents; III the interaction remainder given both;
    IV the within-cell residual. omega_GH combines them into the variance
    of the sample-average score:

        omega_GH = (H·sigma_I2 + G·sigma_II2 + sigma_III2 + sigma_IV2) / (G·H)

    r_GH is the implied convergence rate min(G/sigma_I2, H/sigma_II2, GH)
    evaluated at the leading diagonal entry. Each component is a sample
    covariance of an explicitly constructed projection, hence PSD.
    """

    sigma_I2: np.ndarray
    sigma_II2: np.ndarray
    sigma_III2: np.ndarray
    sigma_IV2: np.ndarray
    omega_GH: np.ndarray
    r_GH: float
    mc_inner: int
    mc_outer: int


def _psi_mean(w: DgpWeights, tau: float, q: float, slope_base: np.ndarray,
              err_base: float, gen: np.random.Generator, m: int, k: int,
              draw_row: bool, draw_col: bool, draw_cell: bool) -> np.ndarray:
    """Inner integral: mean score over fresh draws of the unconditioned latents.

    ``slope_base``/``err_base`` hold the contribution of the conditioned
    latents; the three flags select which latents to integrate out. Scores
    are evaluated at the true coefficients, where the indicator threshold
    is the error's tau-quantile.
    """
    slopes = np.broadcast_to(slope_base, (m, k)).copy()
    err = np.full(m, err_base)
    if draw_row:
        slopes += w.wUx * gen.standard_normal((m, k))
        err += w.wUe * gen.standard_normal(m)
    if draw_col:
        slopes += w.wVx * gen.standard_normal((m, k))
        err += w.wVe * gen.standard_normal(m)
    if draw_cell:
        slopes += w.wWx * gen.standard_normal((m, k))
        err += w.wWe * gen.standard_normal(m)
    weight = tau - (err <= q)
    out = np.empty(k + 1)
    out[0] = weight.mean()
    out[1:] = (slopes * weight[:, None]).mean(axis=0)
    return out


def oracle_variance_components(config: MonteCarloConfig, tau: float,
                               mc_inner: int, mc_outer: int = 2000,
                               seed: int | None = None) -> VarianceOracle:
    """Variance components of the score by nested Monte Carlo.

    Outer draws of the row and column latents; inner draws of whatever a
    component's conditional mean integrates out (cell latents, plus the
    other margin's latents for the one-way projections). Components are
    sample covariances of constructed projection samples, so each is PSD
    by construction and their near-additivity to the direct score variance
    stays a checkable fact rather than an identity.
    """
    if mc_inner < 10_000:
        raise InvalidConfig(f"mc_inner must be >= 10000, got {mc_inner}")
    if mc_outer < 2:
        raise InvalidConfig(f"mc_outer must be >= 2, got {mc_outer}")
    if seed is None:
        seed = config.seed
    w = config.weights
    k = config.d - 1
    q = w.sigma_e * float(norm.ppf(tau))
    m = mc_inner
    row_means = np.empty((mc_outer, k + 1))
    col_means = np.empty((mc_outer, k + 1))
    pair_means = np.empty((mc_outer, k + 1))
    cell_resid = np.empty((mc_outer, k + 1))
    for i in range(mc_outer):
        gen_u = _stream(seed, i, _ORACLE_BASE, 0)
        gen_v = _stream(seed, i, _ORACLE_BASE + 1, 0)
        ux = gen_u.standard_normal(k)
        ue = float(gen_u.standard_normal())
        vx = gen_v.standard_normal(k)
        ve = float(gen_v.standard_normal())
        row_base = w.wUx * ux
        col_base = w.wVx * vx
        row_means[i] = _psi_mean(
            w, tau, q, row_base, w.wUe * ue,
            _stream(seed, i, _ORACLE_BASE + 2, 0), m, k,
            draw_row=False, draw_col=True, draw_cell=True,
        )
        col_means[i] = _psi_mean(
            w, tau, q, col_base, w.wVe * ve,
            _stream(seed, i, _ORACLE_BASE + 3, 0), m, k,
            draw_row=True, draw_col=False, draw_cell=True,
        )
        pair_base = row_base + col_base
        pair_err = w.wUe * ue + w.wVe * ve
        pair_means[i] = _psi_mean(
            w, tau, q, pair_base, pair_err,
            _stream(seed, i, _ORACLE_BASE + 4, 0), m, k,
            draw_row=False, draw_col=False, draw_cell=True,
        )
        gen_cell = _stream(seed, i, _ORACLE_BASE + 5, 0)
        one_slope = pair_base + w.wWx * gen_cell.standard_normal(k)
        one_err = pair_err + w.wWe * float(gen_cell.standard_normal())
        weight = tau - (1.0 if one_err <= q else 0.0)
        psi = np.concatenate(([weight], one_slope * weight))
        cell_resid[i] = psi - pair_means[i]
    sigma_i = np.atleast_2d(np.cov(row_means, rowvar=False))
    sigma_ii = np.atleast_2d(np.cov(col_means, rowvar=False))
    sigma_iii = np.atleast_2d(np.cov(pair_means - row_means - col_means, rowvar=False))
    sigma_iv = np.atleast_2d(np.cov(cell_resid, rowvar=False))
    G, H = config.G, config.H
    omega = (H * sigma_i + G * sigma_ii + sigma_iii + sigma_iv) / (G * H)

    def rate(c: float, v: float) -> float:
        return c / v if v > 0.0 else math.inf

    r = min(rate(G, sigma_i[0, 0]), rate(H, sigma_ii[0, 0]), float(G * H))
    return VarianceOracle(
        sigma_I2=sigma_i, sigma_II2=sigma_ii, sigma_III2=sigma_iii,
        sigma_IV2=sigma_iv, omega_GH=omega, r_GH=r,
        mc_inner=mc_inner, mc_outer=mc_outer,
    )


def direct_score_variance(config: MonteCarloConfig, tau: float,
                          n_draws: int = 200_000,
                          seed: int | None = None) -> np.ndarray:
    """Unconditional covariance of the score from independent cell draws."""
    if seed is None:
        seed = config.seed
    w = config.weights
    k = config.d - 1
    q = w.sigma_e * float(norm.ppf(tau))
    gen = _stream(seed, 0, _DIRECT_STREAM, 0)
    slopes = (
        w.wUx * gen.standard_normal((n_draws, k))
        + w.wVx * gen.standard_normal((n_draws, k))
        + w.wWx * gen.standard_normal((n_draws, k))
    )
    err = (
        w.wUe * gen.standard_normal(n_draws)
        + w.wVe * gen.standard_normal(n_draws)
        + w.wWe * gen.standard_normal(n_draws)
    )
    weight = tau - (err <= q)
    psi = np.empty((n_draws, k + 1))
    psi[:, 0] = weight
    psi[:, 1:] = slopes * weight[:, None]
    return np.atleast_2d(np.cov(psi, rowvar=False))


def true_bread(config: MonteCarloConfig, tau: float) -> np.ndarray:
    """Population Jacobian f_e(q_tau) · E[xx'] for the additive design.

    The error density at its tau-quantile is recovered by 1-D numerical
    inversion of the characteristic function exp(-sigma_e^2 t^2 / 2),
    keeping this oracle independent of the closed-form normal density.
    E[xx'] is diagonal because latents are independent and centered.
    """
    s_e = config.weights.sigma_e
    if s_e <= 0.0:
        raise DegenerateScale("error scale is zero; the density does not exist")
    q = s_e * float(norm.ppf(tau))
    dens, _ = quad(lambda t: math.cos(t * q) * math.exp(-0.5 * (s_e * t) ** 2),
                   0.0, np.inf)
    dens /= math.pi
    diag = np.full(config.d, config.weights.sigma_x2)
    diag[0] = 1.0
    return dens * np.diag(diag)


# --- non-Gaussian interaction regime ---

@dataclass(frozen=True)
class NonGaussianSummary:
    kurtosis_empirical: float
    ks_vs_fitted_normal: float
    kappa: float
    failures: int


@dataclass(frozen=True)
class NonGaussianDemo:
    """Scaled estimation errors next to a calibrated product-normal sample."""

    empirical: np.ndarray
    reference: np.ndarray
    summary: NonGaussianSummary


def nongaussian_demo(G: int, H: int, c: float, reps: int,
                     seed: int) -> NonGaussianDemo:
    """Median regression where the interaction component dominates.

    The single regressor is the product U_g·V_h and the error a
    sign-times-magnitude product, so sqrt(GH)·(beta_hat - 1) converges to
    a product of normals kappa·Z_U·(Z_V + c) instead of a normal. The
    reference sample's scale kappa is calibrated by matching interquartile
    ranges against a large raw product-normal draw and reported alongside
    the samples.
    """
    if reps < 500:
        raise InvalidConfig(f"reps must be >= 500, got {reps}")
    if c < 0.0:
        raise InvalidConfig(f"c must be >= 0, got {c}")
    if G < 2 or H < 2:
        raise InvalidConfig(f"G and H must be >= 2, got ({G}, {H})")
    p_plus = 0.5 + c / (2.0 * math.sqrt(H))
    if p_plus > 1.0:
        raise InvalidConfig(f"c={c} too large for H={H}: sign probability exceeds 1")
    g_idx = np.repeat(np.arange(G), H)
    h_idx = np.tile(np.arange(H), G)
    vals = np.empty(reps)
    ok = np.zeros(reps, dtype=bool)
    scale = math.sqrt(G * H)
    for rep in range(reps):
        u = _stream(seed, rep, _UX, 0).standard_normal(G)
        v = _stream(seed, rep, _VX, 0).standard_normal(H) + 1.0
        ue = 2 * _stream(seed, rep, _UE, 0).integers(0, 2, G) - 1
        ve = 2 * (_stream(seed, rep, _VE, 0).random(H) < p_plus).astype(np.intp) - 1
        we = _stream(seed, rep, _WE, 0).uniform(-1.0, 1.0, (G, H))
        x = np.outer(u, v)
        e = ue[:, None] * ve[None, :] * np.abs(we)
        panel = PanelArray(G=G, H=H, g_idx=g_idx, h_idx=h_idx,
                           y=(x + e).reshape(-1), x=x.reshape(-1, 1))
        try:
            fit = fit_qr(panel, 0.5)
        except NumericError:
            continue
        if not fit.solver.converged:
            continue
        vals[rep] = scale * (float(fit.beta_hat[0]) - 1.0)
        ok[rep] = True
    failures = int(reps - ok.sum())
    if failures > FAILURE_TOLERANCE * reps:
        raise ExcessiveFailureRate(f"{failures} of {reps} replications failed")
    empirical = vals[ok]
    gen_ref = _stream(seed, 0, _ORACLE_BASE, 0)
    raw = (gen_ref.standard_normal(_REF_CALIBRATION_SIZE)
           * (gen_ref.standard_normal(_REF_CALIBRATION_SIZE) + c))
    kappa = float(iqr(empirical) / iqr(raw))
    reference = kappa * raw[:reps]
    kurt = float(kurtosis(empirical, fisher=False))
    ks = float(kstest(empirical, "norm",
                      args=(empirical.mean(), empirical.std(ddof=1))).statistic)
    return NonGaussianDemo(
        empirical=empirical,
        reference=reference,
        summary=NonGaussianSummary(
            kurtosis_empirical=kurt, ks_vs_fitted_normal=ks,
            kappa=kappa, failures=failures,
        ),
    )


# --- JSON / CSV plumbing ---

_CONFIG_KEYS = {"G", "H", "d", "tau", "weights", "reps", "seed",
                "methods", "null_value"}
_REQUIRED_KEYS = {"G", "H", "d", "tau", "weights", "reps", "seed"}


def config_from_json(obj: dict) -> MonteCarloConfig:
    """Build a config from a parsed JSON document; unknown keys are errors."""
    if not isinstance(obj, dict):
        raise InvalidConfig("config document must be a JSON object")
    unknown = set(obj) - _CONFIG_KEYS
    if unknown:
        raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
    missing = _REQUIRED_KEYS - set(obj)
    if missing:
        raise InvalidConfig(f"missing config keys: {sorted(missing)}")
    if not isinstance(obj["weights"], dict):
        raise InvalidConfig("weights must be an object of weight name -> value")
    try:
        weights = DgpWeights(**obj["weights"])
    except TypeError as exc:
        raise InvalidConfig(f"bad weights object: {exc}") from None
    try:
        kwargs = dict(
            G=int(obj["G"]), H=int(obj["H"]), d=int(obj["d"]),
            tau=float(obj["tau"]), weights=weights,
            reps=int(obj["reps"]), seed=int(obj["seed"]),
        )
        if "methods" in obj:
            kwargs["methods"] = tuple(CrveKind(m) for m in obj["methods"])
        if "null_value" in obj:
            kwargs["null_value"] = float(obj["null_value"])
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"bad config value: {exc}") from None
    return MonteCarloConfig(**kwargs)


def config_to_json(config: MonteCarloConfig) -> dict:
    return {
        "G": config.G, "H": config.H, "d": config.d, "tau": config.tau,
        "weights": config.weights.as_dict(),
        "reps": config.reps, "seed": config.seed,
        "methods": [kind.value for kind in config.methods],
        "null_value": config.null_value,
    }


def report_to_json(report: RejectionReport) -> dict:
    return {
        "config": config_to_json(report.config),
        "frequencies": dict(report.frequencies),
        "mc_se": dict(report.mc_se),
        "reps_used": dict(report.reps_used),
        "failures": dict(report.failures),
    }


REPORT_COLUMNS = (
    "G", "H", "d", "tau",
    "wUx", "wVx", "wWx", "wUe", "wVe", "wWe",
    "reps", "seed", "null_value",
    "method", "rejection_rate", "mc_se", "reps_used", "failures",
)


def report_rows(report: RejectionReport) -> list[dict]:
    """Flat plot-ready rows, one per method, columns REPORT_COLUMNS."""
    cfg = report.config
    base = {
        "G": cfg.G, "H": cfg.H, "d": cfg.d, "tau": cfg.tau,
        **cfg.weights.as_dict(),
        "reps": cfg.reps, "seed": cfg.seed, "null_value": cfg.null_value,
    }
    rows = []
    for kind in cfg.methods:
        tag = kind.value
        rows.append({
            **base, "method": tag,
            "rejection_rate": report.frequencies[tag],
            "mc_se": report.mc_se[tag],
            "reps_used": report.reps_used[tag],
            "failures": report.failures[tag],
        })
    return rows
