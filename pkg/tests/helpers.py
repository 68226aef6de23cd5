"""Shared test utilities: an independent plain-Cox oracle and dataset
builders.

The oracle deliberately uses a different formulation from the package
(dense O(n^2) risk-set matrices and a quasi-Newton optimizer) so that
agreement is meaningful.
"""

import numpy as np
from scipy.optimize import minimize

from mixcox import Dataset, EffectParams, ScenarioConfig
from mixcox.simulate import RngStream, generate_trial


def oracle_cox(time, event, X):
    """Unweighted Cox PH fit with Breslow ties; returns (beta, loglik)."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    at_risk = time[None, :] >= time[:, None]  # row i: the risk set at t_i

    def negll(beta):
        eta = X @ beta
        r = np.exp(eta)
        s0 = at_risk @ r
        s1 = at_risk @ (r[:, None] * X)
        ll = float(np.sum(event * (eta - np.log(s0))))
        grad = (event[:, None] * (X - s1 / s0[:, None])).sum(axis=0)
        return -ll, -grad

    res = minimize(negll, np.zeros(X.shape[1]), jac=True, method="BFGS",
                   options={"gtol": 1e-11, "maxiter": 500})
    return res.x, -float(res.fun)


def oracle_breslow_cumhaz(time, event, X, beta):
    """Cumulative baseline hazard at each distinct event time (dict)."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(event)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    r = np.exp(X @ np.asarray(beta, dtype=float))
    out = {}
    cum = 0.0
    for tj in np.unique(time[event == 1]):
        dj = int(np.sum((time == tj) & (event == 1)))
        cum += dj / float(r[time >= tj].sum())
        out[float(tj)] = cum
    return out


def sim_dataset(seed, n_per_arm=100, theta=(-0.5, 0.1, 0.3), pi=0.3,
                sens=0.8, spec=0.8) -> Dataset:
    cfg = ScenarioConfig(
        theta_true=EffectParams(*theta), pi_true=pi, sens=sens, spec=spec,
        n_per_arm=n_per_arm, replications=1, base_seed=seed,
    )
    return generate_trial(cfg, RngStream(seed, 0))


def random_rows(rng, n=20, n_cov=3):
    """Random weighted rows with offsets for derivative checks."""
    from mixcox import RowData

    time = rng.uniform(0.5, 20.0, n)
    event = (rng.random(n) < 0.6).astype(int)
    if not event.any():
        event[0] = 1
    weight = rng.random(n)
    cov = rng.normal(0.0, 1.0, (n, n_cov))
    offset = rng.normal(0.0, 0.3, n)
    return RowData(time, event, weight, cov, offset)
