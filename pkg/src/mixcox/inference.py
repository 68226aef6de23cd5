"""Profile-likelihood inference and simultaneous confidence intervals.

Confidence intervals invert the profile likelihood-ratio statistic against
its chi-square(1) limit; the curvature of the profile log-likelihood is
approximated with one-sided second differences of profiled evaluations,
each obtained by rerunning the EM with the relevant coefficients held
fixed through offsets.  Simultaneous (equicoordinate) intervals for the
two subgroup effects scale the usual normal quantile up to the factor
that gives joint bivariate-normal coverage; adding the overall effect --
the log concordance odds, a smooth function of the coefficients and the
prevalence -- extends this to a trivariate rectangle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate, stats
from scipy.special import expit, logit, ndtri

from . import em
from .errors import ConditioningError, DegenerateDataError, SeparationError
from .model import Dataset, DiagnosticModel, EffectParams

__all__ = [
    "InferenceConfig",
    "Interval",
    "SimultaneousReport",
    "profile_loglik",
    "lr_test",
    "profile_ci",
    "fd_profile_information",
    "subgroup_cov",
    "bvn_rect_prob",
    "simultaneous_scale",
    "simultaneous_cis",
    "concordance_prob",
    "overall_concordance_report",
]

_PARAM_INDEX = {"beta1": 0, "beta2": 1, "gamma": 2}
_SOBOL_SEED = 271828182
_SOBOL_LOG2_POINTS = 22
_MAX_BRACKET_EXPANSIONS = 10


@dataclass(frozen=True)
class InferenceConfig:
    """Knobs for interval construction.

    ``fd_step`` is the perturbation used in the second-difference
    approximation of the profile information; ``ci_tol`` the bisection
    tolerance for interval endpoints on the parameter scale;
    ``bracket_expand`` the initial endpoint bracket half-width in
    profile-standard-error units (doubled on failure).
    """

    alpha: float = 0.05
    fd_step: float = 0.01
    ci_tol: float = 1e-4
    bracket_expand: float = 4.0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        for name in ("fd_step", "ci_tol", "bracket_expand"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Interval:
    """A confidence interval; an open flag marks an unbracketed endpoint."""

    low: float
    high: float
    open_low: bool = False
    open_high: bool = False

    def contains(self, value: float) -> bool:
        return self.low <= value <= self.high

    def width(self) -> float:
        return self.high - self.low


@dataclass
class SimultaneousReport:
    """Equicoordinate intervals for the subgroup effects (and optionally
    the overall log concordance odds)."""

    est_pos: float
    est_neg: float
    interval_pos: Interval
    interval_neg: Interval
    xi_alpha: float
    sigma: np.ndarray
    rho: float
    est_overall: float | None = None
    interval_overall: Interval | None = None


def _fit_or(data, diag, em_config, fit_result):
    if fit_result is None:
        return em.fit(data, diag, em_config)
    return fit_result


def _v_marginal_loglik(data: Dataset, diag: DiagnosticModel, pi: float) -> float:
    """Log-probability of the observed test results under prevalence pi."""
    se, sp = diag.sensitivity, diag.specificity
    n_pos = int(np.sum(data.test == 1))
    n_neg = int(np.sum(data.test == 0))
    return n_pos * math.log(pi * se + (1 - pi) * (1 - sp)) + n_neg * math.log(
        pi * (1 - se) + (1 - pi) * sp
    )


def profile_loglik(
    data: Dataset,
    diag: DiagnosticModel,
    fixed: Mapping[str, float],
    config: InferenceConfig = InferenceConfig(),
    *,
    em_config: em.EmConfig = em.EmConfig(),
    warm: em.FitResult | None = None,
) -> float:
    """Observed log-likelihood maximized with some parameters held fixed.

    ``fixed`` maps names among "beta1", "beta2", "gamma" (and "pi" when
    the prevalence is being estimated) to the values they are pinned at;
    everything else, including the baseline hazard, is profiled out by
    rerunning the EM with the fixed coefficients as offsets.  Values are
    on the scale of the full marginal likelihood, so they are directly
    comparable with the unconstrained ``FitResult.obs_loglik``.
    """
    fixed = dict(fixed)
    pi0 = fixed.pop("pi", None)
    if pi0 is None:
        res = em.fit(data, diag, em_config, fixed=fixed, warm=warm)
        return res.obs_loglik
    if diag.prevalence_known:
        raise ValueError("cannot profile over pi: the prevalence is already fixed")
    d_fixed = DiagnosticModel(
        diag.sensitivity, diag.specificity, pi0, prevalence_known=True
    )
    res = em.fit(data, d_fixed, em_config, fixed=fixed, warm=warm)
    # put the conditional-likelihood value back on the marginal scale
    return res.obs_loglik + _v_marginal_loglik(data, diag, pi0)


def lr_test(
    data: Dataset,
    diag: DiagnosticModel,
    param: str,
    null_value: float,
    config: InferenceConfig = InferenceConfig(),
    *,
    fit_result: em.FitResult | None = None,
    em_config: em.EmConfig = em.EmConfig(),
) -> tuple[float, float]:
    """Likelihood-ratio test of ``param == null_value``.

    Returns the statistic (twice the profile log-likelihood drop, clipped
    at zero) and its chi-square(1) p-value.
    """
    res = _fit_or(data, diag, em_config, fit_result)
    ll0 = profile_loglik(
        data, diag, {param: null_value}, config, em_config=em_config, warm=res
    )
    lam = max(2.0 * (res.obs_loglik - ll0), 0.0)
    return lam, float(stats.chi2.sf(lam, 1))


def _param_estimate(res: em.FitResult, param: str) -> float:
    if param == "pi":
        return res.pi_hat
    return float(res.theta_hat.as_array()[_PARAM_INDEX[param]])


def profile_ci(
    data: Dataset,
    diag: DiagnosticModel,
    param: str,
    config: InferenceConfig = InferenceConfig(),
    *,
    fit_result: em.FitResult | None = None,
    em_config: em.EmConfig = em.EmConfig(),
    se: float | None = None,
) -> Interval:
    """Profile likelihood-ratio confidence interval for one parameter.

    Each endpoint solves "LR statistic equals the chi-square(1) quantile"
    by expanding a bracket outward from the estimate (starting at
    ``bracket_expand`` profile standard errors, doubling up to 10 times)
    and then bisecting to ``ci_tol``.  An endpoint that cannot be
    bracketed -- or, for the prevalence, that runs into the admissible
    range -- is returned at the search boundary with its open flag set.
    """
    if param not in ("beta1", "beta2", "gamma", "pi"):
        raise ValueError(f"unknown parameter: {param}")
    res = _fit_or(data, diag, em_config, fit_result)
    mle = _param_estimate(res, param)
    target = float(stats.chi2.ppf(1.0 - config.alpha, 1))
    if se is None:
        if param == "pi":
            se = math.sqrt(max(mle * (1 - mle), 1e-4) / len(data))
        else:
            info = fd_profile_information(
                data, diag, res.theta_hat, ("beta1", "beta2", "gamma"), config,
                fit_result=res, em_config=em_config,
            )
            se = math.sqrt(np.linalg.inv(info)[_PARAM_INDEX[param],
                                               _PARAM_INDEX[param]])

    if param == "pi":
        lo_bound = em_config.prevalence_floor
        hi_bound = 1.0 - em_config.prevalence_floor
    else:
        lo_bound, hi_bound = -np.inf, np.inf

    def lam_at(value: float) -> float:
        try:
            ll = profile_loglik(
                data, diag, {param: value}, config, em_config=em_config, warm=res
            )
        except (SeparationError, DegenerateDataError):
            # the constrained fit degenerates this far out; certainly
            # outside the confidence region
            return math.inf
        return 2.0 * (res.obs_loglik - ll)

    def solve(direction: int) -> tuple[float, bool]:
        bound = hi_bound if direction > 0 else lo_bound
        inner = mle
        step = config.bracket_expand * se
        outer = None
        for _ in range(_MAX_BRACKET_EXPANSIONS):
            cand = mle + direction * step
            clipped = min(cand, bound) if direction > 0 else max(cand, bound)
            lam = lam_at(clipped)
            if lam >= target:
                outer = clipped
                break
            inner = clipped
            if clipped == bound:
                return bound, True  # open at the admissible boundary
            step *= 2.0
        if outer is None:
            return inner, True
        while abs(outer - inner) > config.ci_tol:
            mid = 0.5 * (inner + outer)
            if lam_at(mid) >= target:
                outer = mid
            else:
                inner = mid
        return 0.5 * (inner + outer), False

    high, open_high = solve(+1)
    low, open_low = solve(-1)
    return Interval(low, high, open_low=open_low, open_high=open_high)


def _fd_information(fun, k: int, h: float) -> np.ndarray:
    """One-sided second-difference curvature matrix of ``-fun``.

    ``fun`` maps a length-``k`` displacement vector (from the expansion
    point) to a scalar; exact for quadratics at any step size.
    """
    cache: dict[tuple, float] = {}

    def ev(*disp):
        key = tuple(disp)
        if key not in cache:
            vec = np.zeros(k)
            for idx, d in enumerate(disp):
                vec[idx] = d
            cache[key] = fun(vec)
        return cache[key]

    info = np.zeros((k, k))
    f0 = ev(*([0.0] * k))
    hh = h * h
    for a in range(k):
        d1 = [0.0] * k
        d1[a] = h
        d2 = [0.0] * k
        d2[a] = 2 * h
        info[a, a] = -(ev(*d2) - 2 * ev(*d1) + f0) / hh
        for b in range(a + 1, k):
            dab = [0.0] * k
            dab[a] = h
            dab[b] = h
            db = [0.0] * k
            db[b] = h
            info[a, b] = info[b, a] = -(ev(*dab) - ev(*db) - ev(*d1) + f0) / hh
    return 0.5 * (info + info.T)


def fd_profile_information(
    data: Dataset,
    diag: DiagnosticModel,
    theta_hat: EffectParams,
    params: Sequence[str],
    config: InferenceConfig = InferenceConfig(),
    *,
    fit_result: em.FitResult | None = None,
    em_config: em.EmConfig = em.EmConfig(),
) -> np.ndarray:
    """Profile information matrix over ``params`` by finite differences.

    Evaluates the profile log-likelihood on one-sided stencils around the
    maximum (step ``fd_step``), profiling out all remaining parameters and
    the baseline through the EM, and symmetrizes the result.

    Raises
    ------
    ConditioningError
        If the assembled matrix is not positive definite; try a different
        ``fd_step``.
    """
    params = tuple(params)
    for p in params:
        if p not in _PARAM_INDEX:
            raise ValueError(f"unknown parameter: {p}")
    res = _fit_or(data, diag, em_config, fit_result)
    center = res.theta_hat.as_array()

    def lp(disp: np.ndarray) -> float:
        if not np.any(disp):
            return res.obs_loglik
        fixed = {
            p: center[_PARAM_INDEX[p]] + disp[i] for i, p in enumerate(params)
        }
        return profile_loglik(
            data, diag, fixed, config, em_config=em_config, warm=res
        )

    info = _fd_information(lp, len(params), config.fd_step)
    _require_positive_definite(info)
    return info


def _require_positive_definite(info: np.ndarray) -> None:
    if np.any(np.linalg.eigvalsh(info) <= 0):
        raise ConditioningError(
            "finite-difference profile information is not positive definite; "
            "try a different fd_step"
        )


def subgroup_cov(information: np.ndarray) -> np.ndarray:
    """Covariance of (beta1 + gamma, beta1) from the (beta1, gamma)
    profile information, by the delta method."""
    a = np.array([[1.0, 1.0], [1.0, 0.0]])
    sigma = a @ np.linalg.inv(information) @ a.T
    return 0.5 * (sigma + sigma.T)


def bvn_rect_prob(xi: float, rho: float) -> float:
    """P(|X1| <= xi and |X2| <= xi) for standard bivariate normal with
    correlation rho, by one-dimensional adaptive quadrature of the
    conditional-normal representation (absolute error well below 1e-9)."""
    if not xi > 0:
        raise ValueError("xi must be positive")
    if not -1.0 <= rho <= 1.0:
        raise ValueError("rho must be in [-1, 1]")
    if abs(rho) >= 1.0 - 1e-12:
        return 2.0 * stats.norm.cdf(xi) - 1.0
    s = math.sqrt(1.0 - rho * rho)

    def integrand(u):
        return stats.norm.pdf(u) * (
            stats.norm.cdf((xi - rho * u) / s) - stats.norm.cdf((-xi - rho * u) / s)
        )

    val, _ = integrate.quad(integrand, -xi, xi, epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(val)


def simultaneous_scale(rho: float, alpha: float) -> float:
    """Equicoordinate scaling factor: the xi with joint bivariate-normal
    coverage 1 - alpha at correlation rho, found by bisection to 1e-6.

    Always lies between the univariate normal quantile (|rho| = 1) and the
    Sidak-corrected quantile (rho = 0).
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    target = 1.0 - alpha
    lo = float(stats.norm.ppf(1.0 - alpha / 2)) - 1e-9
    hi = float(stats.norm.ppf(0.5 * (1.0 + math.sqrt(target)))) + 1e-6
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if bvn_rect_prob(mid, rho) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def simultaneous_cis(
    theta_hat: EffectParams, sigma: np.ndarray, alpha: float = 0.05
) -> SimultaneousReport:
    """Equicoordinate intervals for the treatment effect in the
    biomarker-positive (beta1 + gamma) and -negative (beta1) groups."""
    sigma = np.asarray(sigma, dtype=float)
    sd_pos = math.sqrt(sigma[0, 0])
    sd_neg = math.sqrt(sigma[1, 1])
    rho = float(sigma[0, 1] / (sd_pos * sd_neg))
    xi = simultaneous_scale(rho, alpha)
    est_pos = theta_hat.beta1 + theta_hat.gamma
    est_neg = theta_hat.beta1
    return SimultaneousReport(
        est_pos=est_pos,
        est_neg=est_neg,
        interval_pos=Interval(est_pos - xi * sd_pos, est_pos + xi * sd_pos),
        interval_neg=Interval(est_neg - xi * sd_neg, est_neg + xi * sd_neg),
        xi_alpha=xi,
        sigma=sigma,
        rho=rho,
    )


def concordance_prob(theta: EffectParams, pi: float) -> float:
    """Probability that a random control subject outlives a random treated
    subject, mixing the four latent-status pairings by prevalence."""
    if not 0 < pi < 1:
        raise ValueError("pi must be in (0, 1)")
    b1, b2, g = theta.beta1, theta.beta2, theta.gamma
    return float(
        pi * pi * expit(b1 + g)
        + (1 - pi) * (1 - pi) * expit(b1)
        + pi * (1 - pi) * expit(b1 + b2 + g)
        + pi * (1 - pi) * expit(b1 - b2)
    )


def _log_concordance_odds(theta_arr: np.ndarray, pi: float) -> float:
    return float(logit(concordance_prob(EffectParams.from_array(theta_arr), pi)))


def _equicoordinate_scale_mvn(corr: np.ndarray, alpha: float) -> float:
    """Equicoordinate quantile for an m-variate standard normal with the
    given correlation matrix, from a scrambled low-discrepancy sample
    (deterministic for a fixed build).  Error is of order 1e-4 on the
    probability scale, ample for a scaling factor."""
    from scipy.stats import qmc

    k = corr.shape[0]
    try:
        chol = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        # near-singular correlation (e.g. a contrast is a near-exact linear
        # combination): clip tiny negative eigenvalues
        vals, vecs = np.linalg.eigh(corr)
        chol = vecs @ np.diag(np.sqrt(np.maximum(vals, 1e-12)))
    eng = qmc.Sobol(d=k, scramble=True, seed=_SOBOL_SEED)
    n_chunks = 8
    per_chunk = 2 ** (_SOBOL_LOG2_POINTS - 3)
    maxima = np.empty(n_chunks * per_chunk)
    for c in range(n_chunks):
        u = eng.random(per_chunk)
        z = ndtri(u) @ chol.T
        maxima[c * per_chunk:(c + 1) * per_chunk] = np.max(np.abs(z), axis=1)
    xi = float(np.quantile(maxima, 1.0 - alpha))
    return max(xi, float(stats.norm.ppf(1.0 - alpha / 2)))


def overall_concordance_report(
    data: Dataset,
    diag: DiagnosticModel,
    fit_result: em.FitResult,
    config: InferenceConfig = InferenceConfig(),
    *,
    em_config: em.EmConfig = em.EmConfig(),
    information: np.ndarray | None = None,
) -> SimultaneousReport:
    """Three-way simultaneous intervals: both subgroup effects plus the
    overall log concordance odds.

    The covariance of (beta1 + gamma, beta1, overall) comes from the
    3x3 profile information over the coefficients and the delta method,
    with the overall effect's derivatives taken by central differences
    (step ``fd_step``).  The prevalence is held at its estimate, so its
    sampling uncertainty is not propagated into the overall effect.
    ``information`` short-circuits the profile information when the
    caller already computed it.
    """
    info = information
    if info is None:
        info = fd_profile_information(
            data, diag, fit_result.theta_hat, ("beta1", "beta2", "gamma"), config,
            fit_result=fit_result, em_config=em_config,
        )
    cov_theta = np.linalg.inv(info)
    center = fit_result.theta_hat.as_array()
    pi = fit_result.pi_hat
    h = config.fd_step
    grad = np.zeros(3)
    for k in range(3):
        up = center.copy()
        dn = center.copy()
        up[k] += h
        dn[k] -= h
        grad[k] = (_log_concordance_odds(up, pi) - _log_concordance_odds(dn, pi)) / (2 * h)
    b = np.array([[1.0, 0.0, 1.0], [1.0, 0.0, 0.0], grad])
    sigma3 = b @ cov_theta @ b.T
    sigma3 = 0.5 * (sigma3 + sigma3.T)
    sds = np.sqrt(np.diag(sigma3))
    corr = sigma3 / np.outer(sds, sds)
    xi = _equicoordinate_scale_mvn(corr, config.alpha)
    est_pos = center[0] + center[2]
    est_neg = center[0]
    est_all = _log_concordance_odds(center, pi)
    return SimultaneousReport(
        est_pos=est_pos,
        est_neg=est_neg,
        interval_pos=Interval(est_pos - xi * sds[0], est_pos + xi * sds[0]),
        interval_neg=Interval(est_neg - xi * sds[1], est_neg + xi * sds[1]),
        xi_alpha=xi,
        sigma=sigma3[:2, :2],
        rho=float(corr[0, 1]),
        est_overall=est_all,
        interval_overall=Interval(est_all - xi * sds[2], est_all + xi * sds[2]),
    )
