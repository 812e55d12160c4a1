"""Weighted survival estimation.

Breslow baseline, weighted Cox partial likelihood (Breslow ties, strata),
weighted Weibull proportional-hazards regression, survival curves with
log-transformed pointwise bands, and the k-sample log-rank test.

Weights enter every estimator as frequency weights. Observations with zero
weight are dropped before fitting.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

Z95 = stats.norm.ppf(0.975)


class SurvivalFitError(ValueError):
    pass


class NoEvents(SurvivalFitError):
    pass


class Singular(SurvivalFitError):
    pass


class NonConvergence(SurvivalFitError):
    pass


class DegenerateData(SurvivalFitError):
    pass


class MonotoneLikelihoodWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class WeightedObservation:
    time: float
    event: bool
    covariates: tuple[float, ...] = ()
    weight: float = 1.0
    stratum: int = 0


@dataclass(frozen=True)
class SurvivalData:
    """Column-oriented weighted survival sample."""

    time: np.ndarray
    event: np.ndarray
    weight: np.ndarray
    covariates: np.ndarray  # (n, p)
    strata: np.ndarray

    @classmethod
    def from_arrays(cls, time, event, weight=None, covariates=None, strata=None) -> "SurvivalData":
        time = np.asarray(time, dtype=float)
        n = time.shape[0]
        event = np.asarray(event, dtype=bool)
        weight = np.ones(n) if weight is None else np.asarray(weight, dtype=float)
        if covariates is None:
            covariates = np.zeros((n, 0))
        covariates = np.asarray(covariates, dtype=float).reshape(n, -1)
        strata = np.zeros(n, dtype=int) if strata is None else np.asarray(strata, dtype=int)
        if np.any(time < 0) or not np.all(np.isfinite(time)):
            raise ValueError("times must be finite and non-negative")
        if np.any(weight < 0):
            raise ValueError("weights must be non-negative")
        return cls(time, event, weight, covariates, strata)

    @classmethod
    def from_observations(cls, obs: Sequence[WeightedObservation]) -> "SurvivalData":
        p = len(obs[0].covariates) if obs else 0
        return cls.from_arrays(
            [o.time for o in obs],
            [o.event for o in obs],
            [o.weight for o in obs],
            np.array([o.covariates for o in obs], dtype=float).reshape(len(obs), p),
            [o.stratum for o in obs],
        )

    def __len__(self) -> int:
        return self.time.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    def subset(self, mask) -> "SurvivalData":
        return SurvivalData(self.time[mask], self.event[mask], self.weight[mask],
                            self.covariates[mask], self.strata[mask])

    def positive(self) -> "SurvivalData":
        return self.subset(self.weight > 0)


def as_data(obs) -> SurvivalData:
    if isinstance(obs, SurvivalData):
        return obs
    return SurvivalData.from_observations(list(obs))


@dataclass(frozen=True)
class PiecewiseBaseline:
    """Step cumulative hazard with jumps at the event times."""

    times: np.ndarray
    increments: np.ndarray
    # per event time: weighted events, weighted risk sum, weighted mean covariates at risk
    event_weight: np.ndarray = field(repr=False)
    risk_weight: np.ndarray = field(repr=False)
    zbar: np.ndarray = field(repr=False)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.increments)

    def cumhaz(self, t):
        """Baseline cumulative hazard, right-continuous, flat after the last event."""
        idx = np.searchsorted(self.times, t, side="right")
        cum = np.concatenate([[0.0], self.cumulative])
        return cum[idx]

    def survival(self, t):
        return np.exp(-self.cumhaz(t))


@dataclass(frozen=True)
class WeibullBaseline:
    shape: float
    scale: float

    def cumhaz(self, t):
        return (np.asarray(t, dtype=float) / self.scale) ** self.shape

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        return self.shape / self.scale * (t / self.scale) ** (self.shape - 1.0)

    def survival(self, t):
        return np.exp(-self.cumhaz(t))


@dataclass(frozen=True)
class SurvivalModel:
    """Fitted proportional-hazards model: coefficients plus per-stratum baselines.

    For Cox fits ``cov`` is the covariance of ``beta``. For Weibull fits it
    covers ``(log shape, log scale)`` for each stratum in sorted order followed
    by ``beta``.
    """

    kind: str
    beta: np.ndarray
    baselines: Mapping[int, PiecewiseBaseline | WeibullBaseline]
    cov: np.ndarray
    loglik: float
    loglik_null: float = float("nan")
    n_iter: int = 0
    converged: bool = True

    @property
    def se(self) -> np.ndarray:
        p = self.beta.shape[0]
        return np.sqrt(np.diag(self.cov)[-p:]) if p else np.zeros(0)

    @property
    def pvalues(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return 2.0 * stats.norm.sf(np.abs(self.beta / self.se))

    @property
    def strata(self) -> list[int]:
        return sorted(self.baselines)

    def linear_predictor(self, z) -> float:
        z = np.asarray(z, dtype=float).reshape(-1)
        if self.beta.shape[0] == 0:
            return 0.0
        return float(z @ self.beta)

    def cumhaz(self, t, z=(), stratum: int = 0):
        return self.baselines[stratum].cumhaz(t) * np.exp(self.linear_predictor(z))

    def survival(self, t, z=(), stratum: int = 0):
        return np.exp(-self.cumhaz(t, z, stratum))


def _require_events(data: SurvivalData) -> None:
    for s in np.unique(data.strata):
        m = data.strata == s
        if not np.any(data.event[m] & (data.weight[m] > 0)):
            raise NoEvents(f"no weighted events in stratum {s}")


def fit_breslow_baseline(obs, beta=None) -> dict[int, PiecewiseBaseline]:
    """Breslow cumulative hazard per stratum at fixed coefficients.

    The jump at each distinct event time is the weighted number of events
    divided by the weighted sum of ``exp(z @ beta)`` over the risk set
    ``{i : T_i >= t}``.
    """
    data = as_data(obs).positive()
    if len(data) == 0:
        raise NoEvents("no observations with positive weight")
    _require_events(data)
    p = data.n_covariates
    beta = np.zeros(p) if beta is None else np.asarray(beta, dtype=float)
    out = {}
    for s in np.unique(data.strata):
        d = data.subset(data.strata == s)
        eta = d.covariates @ beta if p else np.zeros(len(d))
        r = d.weight * np.exp(eta)
        uniq, inv = np.unique(d.time, return_inverse=True)
        s0 = np.bincount(inv, r, minlength=uniq.size)[::-1].cumsum()[::-1]
        s1 = np.stack([np.bincount(inv, r * d.covariates[:, k], minlength=uniq.size)[::-1].cumsum()[::-1]
                       for k in range(p)], axis=1) if p else np.zeros((uniq.size, 0))
        dw = np.bincount(inv, d.weight * d.event, minlength=uniq.size)
        keep = dw > 0
        out[int(s)] = PiecewiseBaseline(
            times=uniq[keep],
            increments=dw[keep] / s0[keep],
            event_weight=dw[keep],
            risk_weight=s0[keep],
            zbar=s1[keep] / s0[keep, None],
        )
    return out


def _cox_derivatives(data: SurvivalData, beta: np.ndarray):
    """Weighted Breslow log partial likelihood, score and Hessian."""
    p = beta.shape[0]
    ll, grad, hess = 0.0, np.zeros(p), np.zeros((p, p))
    for s in np.unique(data.strata):
        m = data.strata == s
        t, ev, w, Z = data.time[m], data.event[m], data.weight[m], data.covariates[m]
        eta = Z @ beta
        c = eta.max()
        r = w * np.exp(eta - c)
        uniq, inv = np.unique(t, return_inverse=True)
        k = uniq.size

        def rev(x):
            return x[::-1].cumsum(axis=0)[::-1]

        s0 = rev(np.bincount(inv, r, minlength=k))
        s1 = rev(np.stack([np.bincount(inv, r * Z[:, j], minlength=k) for j in range(p)], axis=1)) if p else np.zeros((k, 0))
        zz = np.einsum("ni,nj->nij", Z, Z) * r[:, None, None]
        s2 = np.zeros((k, p, p))
        np.add.at(s2, inv, zz)
        s2 = rev(s2)
        dw = np.bincount(inv, w * ev, minlength=k)
        keep = dw > 0
        s0, s1, s2, dw = s0[keep], s1[keep], s2[keep], dw[keep]
        zbar = s1 / s0[:, None]
        we = w * ev
        ll += float(we @ eta - dw @ (np.log(s0) + c))
        grad += we @ Z - dw @ zbar
        hess -= np.einsum("j,jab->ab", dw, s2 / s0[:, None, None] - np.einsum("ja,jb->jab", zbar, zbar))
    return ll, grad, hess


def cox_loglik(obs, beta) -> float:
    data = as_data(obs).positive()
    return _cox_derivatives(data, np.asarray(beta, dtype=float))[0]


def _check_design(data: SurvivalData) -> None:
    p = data.n_covariates
    if p == 0:
        return
    w = data.weight
    Z = data.covariates
    # within-stratum centering: a covariate constant inside every stratum is not identifiable
    Zc = Z.copy()
    for s in np.unique(data.strata):
        m = data.strata == s
        Zc[m] -= np.average(Z[m], axis=0, weights=w[m])
    gram = (Zc * w[:, None]).T @ Zc
    scale = np.maximum(np.diag(gram), 1e-300)
    if np.any(np.diag(gram) <= 1e-12 * w.sum()):
        bad = [j for j in range(p) if gram[j, j] <= 1e-12 * w.sum()]
        raise Singular(f"covariate column(s) {bad} have zero variance")
    corr = gram / np.sqrt(np.outer(scale, scale))
    if np.linalg.cond(corr) > 1e12:
        raise Singular("collinear covariates")


def fit_cox(obs, max_iter: int = 50, gtol: float = 1e-8, max_halvings: int = 20) -> SurvivalModel:
    """Weighted Cox regression by damped Newton-Raphson.

    Parameters
    ----------
    obs
        ``SurvivalData`` or a sequence of ``WeightedObservation``.
    max_iter
        Newton iterations before ``NonConvergence`` is raised.
    gtol
        Convergence threshold on the Euclidean norm of the score.

    Returns
    -------
    SurvivalModel
        ``kind="cox"`` with Breslow baselines evaluated at the estimate and
        Wald covariance from the inverse observed information.
    """
    data = as_data(obs).positive()
    if len(data) == 0:
        raise NoEvents("no observations with positive weight")
    _require_events(data)
    _check_design(data)
    p = data.n_covariates
    beta = np.zeros(p)
    ll, g, H = _cox_derivatives(data, beta)
    ll0 = ll
    it = 0
    converged = np.linalg.norm(g) <= gtol
    while not converged:
        if it >= max_iter:
            raise NonConvergence(f"Cox fit did not converge in {max_iter} iterations (|score|={np.linalg.norm(g):.3g})")
        it += 1
        try:
            step = np.linalg.solve(-H, g)
        except np.linalg.LinAlgError:
            raise Singular("singular information matrix") from None
        for _ in range(max_halvings + 1):
            cand = beta + step
            ll_c, g_c, H_c = _cox_derivatives(data, cand)
            if ll_c >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            step = step / 2
        else:
            if np.linalg.norm(g) <= 1e3 * gtol:
                break
            raise NonConvergence("step halving failed to increase the partial likelihood")
        beta, ll, g, H = cand, ll_c, g_c, H_c
        converged = np.linalg.norm(g) <= gtol
        if np.max(np.abs(beta)) > 30 and not converged:
            warnings.warn("coefficients diverging (monotone likelihood); returning last iterate",
                          MonotoneLikelihoodWarning, stacklevel=2)
            break
    try:
        cov = np.linalg.inv(-H) if p else np.zeros((0, 0))
    except np.linalg.LinAlgError:
        raise Singular("singular information matrix at the estimate") from None
    return SurvivalModel(
        kind="cox",
        beta=beta,
        baselines=fit_breslow_baseline(data, beta),
        cov=cov,
        loglik=ll,
        loglik_null=ll0,
        n_iter=it,
        converged=bool(converged),
    )


# -- Weibull -----------------------------------------------------------------


def _weibull_derivatives(data: SurvivalData, strata: list[int], theta: np.ndarray, shape=None):
    """Log-likelihood, gradient, Hessian in (log k_s, log rho_s)_s + beta.

    With ``shape`` fixed the log k entries are held constant and their
    gradient rows/columns are zeroed. Trial points far from the optimum may
    overflow; the caller rejects any non-finite log-likelihood.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _weibull_terms(data, strata, theta, shape)


def _weibull_terms(data, strata, theta, shape):
    S = len(strata)
    p = data.n_covariates
    n_par = 2 * S + p
    beta = theta[2 * S:]
    ll, g, H = 0.0, np.zeros(n_par), np.zeros((n_par, n_par))
    for si, s in enumerate(strata):
        m = (data.strata == s) & ((data.time > 0) | data.event)
        t, ev, w, Z = data.time[m], data.event[m].astype(float), data.weight[m], data.covariates[m]
        ls, a = theta[2 * si], theta[2 * si + 1]
        k = np.exp(ls)
        u = np.log(np.where(t > 0, t, 1.0))
        r = k * (u - a)
        eta = Z @ beta if p else np.zeros(t.size)
        Hi = np.where(t > 0, np.exp(r + eta), 0.0)
        ll += float(w @ (ev * (ls + (k - 1.0) * u - k * a + eta) - Hi))
        i_s, i_a = 2 * si, 2 * si + 1
        g[i_s] += w @ (ev * (1.0 + r) - Hi * r)
        g[i_a] += w @ (k * (Hi - ev))
        H[i_s, i_s] += w @ (ev * r - Hi * r * (1.0 + r))
        H[i_s, i_a] += w @ (-k * ev + k * Hi * (1.0 + r))
        H[i_a, i_a] += w @ (-k * k * Hi)
        if p:
            g[2 * S:] += (w * (ev - Hi)) @ Z
            H[i_s, 2 * S:] += (-w * Hi * r) @ Z
            H[i_a, 2 * S:] += (w * k * Hi) @ Z
            H[2 * S:, 2 * S:] -= (Z * (w * Hi)[:, None]).T @ Z
    iu = np.triu_indices(n_par, 1)
    H[(iu[1], iu[0])] = H[iu]
    if shape is not None:
        for si in range(S):
            g[2 * si] = 0.0
            H[2 * si, :] = 0.0
            H[:, 2 * si] = 0.0
            H[2 * si, 2 * si] = -1.0
    return ll, g, H


def weibull_loglik(obs, model: SurvivalModel) -> float:
    """Weighted log-likelihood of ``obs`` under a fitted Weibull model."""
    data = as_data(obs).positive()
    strata = model.strata
    theta = np.concatenate(
        [[np.log(model.baselines[s].shape), np.log(model.baselines[s].scale)] for s in strata]
        + [model.beta]
    )
    return _weibull_derivatives(data, strata, theta)[0]


def fit_weibull(obs, shape: float | None = None, max_iter: int = 200, gtol: float = 1e-8) -> SurvivalModel:
    """Weighted Weibull proportional-hazards fit.

    Maximizes ``sum w_i [d_i (log h(T_i) + z_i b) - H(T_i) exp(z_i b)]`` with
    baseline hazard ``h(t) = k/rho (t/rho)**(k-1)`` (one ``k, rho`` pair per
    stratum). Pass ``shape`` to hold ``k`` fixed, e.g. ``shape=1`` for the
    exponential model.
    """
    data = as_data(obs).positive()
    if len(data) == 0:
        raise NoEvents("no observations with positive weight")
    _require_events(data)
    _check_design(data)
    strata = [int(s) for s in np.unique(data.strata)]
    p = data.n_covariates
    theta = np.zeros(2 * len(strata) + p)
    for si, s in enumerate(strata):
        m = data.strata == s
        ev_t = data.time[m][data.event[m]]
        if shape is None and np.unique(ev_t).size < 2:
            raise DegenerateData(f"all events at a single time in stratum {s}")
        d = float(data.weight[m] @ data.event[m])
        theta[2 * si] = np.log(shape) if shape is not None else 0.0
        theta[2 * si + 1] = np.log(float(data.weight[m] @ data.time[m]) / d)
        if shape is not None and shape != 1.0:
            k = shape
            theta[2 * si + 1] = np.log((float(data.weight[m] @ data.time[m] ** k) / d) ** (1.0 / k))

    ll, g, H = _weibull_derivatives(data, strata, theta, shape)
    mu = 0.0
    it = 0
    while np.linalg.norm(g) > gtol:
        if it >= max_iter:
            raise NonConvergence(f"Weibull fit did not converge (|grad|={np.linalg.norm(g):.3g})")
        it += 1
        # Levenberg-damped Newton; plain Newton whenever -H is positive definite
        while True:
            A = -H + mu * np.eye(H.shape[0])
            try:
                np.linalg.cholesky(A)
                step = np.linalg.solve(A, g)
            except np.linalg.LinAlgError:
                mu = max(2 * mu, 1e-6 * max(1.0, np.abs(H).max()))
                continue
            cand = theta + step
            ll_c, g_c, H_c = _weibull_derivatives(data, strata, cand, shape)
            if np.isfinite(ll_c) and ll_c >= ll - 1e-12 * max(1.0, abs(ll)):
                theta, ll, g, H = cand, ll_c, g_c, H_c
                mu = mu / 10 if mu > 1e-12 else 0.0
                break
            mu = max(4 * mu, 1e-6 * max(1.0, np.abs(H).max()))
            if mu > 1e20:
                if np.linalg.norm(g) <= 1e3 * gtol:
                    break
                raise NonConvergence("Weibull fit: no ascent direction found")
        if mu > 1e20:
            break

    fisher = -H
    try:
        cov = np.linalg.inv(fisher)
    except np.linalg.LinAlgError:
        raise Singular("singular information matrix in Weibull fit") from None
    if shape is not None:
        for si in range(len(strata)):
            cov[2 * si, :] = 0.0
            cov[:, 2 * si] = 0.0
    baselines = {
        s: WeibullBaseline(shape=float(np.exp(theta[2 * si])), scale=float(np.exp(theta[2 * si + 1])))
        for si, s in enumerate(strata)
    }
    return SurvivalModel(
        kind="weibull",
        beta=theta[2 * len(strata):].copy(),
        baselines=baselines,
        cov=cov,
        loglik=ll,
        n_iter=it,
        converged=True,
    )


# -- curves ------------------------------------------------------------------


@dataclass(frozen=True)
class SurvivalCurve:
    """Right-continuous step (or gridded) survival estimate with 95% bands."""

    times: np.ndarray
    estimate: np.ndarray
    variance: np.ndarray  # of the cumulative hazard
    lower: np.ndarray
    upper: np.ndarray
    stratum: int = 0
    label: str = ""

    def at(self, t):
        idx = np.searchsorted(self.times, t, side="right") - 1
        idx = np.clip(idx, 0, None)
        return self.estimate[idx]

    def bounds_at(self, t):
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, None)
        return self.lower[idx], self.upper[idx]


def _log_bands(cumhaz: np.ndarray, var: np.ndarray):
    est = np.exp(-cumhaz)
    se = np.sqrt(np.maximum(var, 0.0))
    # a huge variance (last event with a tiny risk set) saturates the band to [0, 1]
    with np.errstate(over="ignore"):
        upper = np.minimum(1.0, np.exp(-cumhaz + Z95 * se))
    return est, np.exp(-cumhaz - Z95 * se), upper


def greenwood_terms(base: PiecewiseBaseline) -> np.ndarray:
    """Per-event-time variance contributions ``dL**2 / (d (1 - dL))``.

    With unit weights and no covariates this is the Greenwood term
    ``d / (R (R - d))``; a jump of 1 or more (the whole risk set fails)
    gives an infinite contribution.
    """
    inc = base.increments
    with np.errstate(divide="ignore"):
        return np.where(inc < 1.0, inc ** 2 / (base.event_weight * (1.0 - inc)), np.inf)


def survival_curve(
    model: SurvivalModel,
    covariates=None,
    stratum: int = 0,
    grid=None,
    label: str = "",
) -> SurvivalCurve:
    """``S(t | z) = exp(-Lambda(t) exp(z b))`` with 95% bands on the log scale.

    Piecewise baselines give a step curve at the event times; the variance is
    Greenwood-type term (see :func:`greenwood_terms`) plus the delta-method
    contribution of the coefficient covariance. Weibull baselines are evaluated on ``grid``
    (default: 0 to 100 years) with delta-method variance.
    """
    p = model.beta.shape[0]
    z = np.zeros(p) if covariates is None else np.asarray(covariates, dtype=float).reshape(p)
    lp = float(z @ model.beta) if p else 0.0
    base = model.baselines[stratum]
    if isinstance(base, PiecewiseBaseline):
        times = np.concatenate([[0.0], base.times])
        cum0 = np.concatenate([[0.0], base.cumulative])
        var = np.concatenate([[0.0], np.cumsum(greenwood_terms(base))])
        if p:
            qv = np.concatenate([np.zeros((1, p)),
                                 np.cumsum((base.zbar - z) * base.increments[:, None], axis=0)])
            var = var + np.einsum("ti,ij,tj->t", qv, model.cov, qv)
        cum = cum0 * np.exp(lp)
        var = var * np.exp(2 * lp)
    else:
        times = np.linspace(0.0, 100.0, 401) if grid is None else np.asarray(grid, dtype=float)
        cum = base.cumhaz(times) * np.exp(lp)
        strata = model.strata
        si = strata.index(stratum)
        k = base.shape
        n_par = model.cov.shape[0]
        with np.errstate(divide="ignore"):
            logt = np.log(times)
        grad = np.zeros((times.size, n_par))
        grad[:, 2 * si] = np.where(times > 0, k * (logt - np.log(base.scale)), 0.0)
        grad[:, 2 * si + 1] = -k
        if p:
            grad[:, 2 * len(strata):] = z
        var_log = np.einsum("ti,ij,tj->t", grad, model.cov, grad)
        var = cum ** 2 * var_log
    est, lo, hi = _log_bands(cum, var)
    return SurvivalCurve(times, est, var, lo, hi, stratum, label)


def nelson_aalen(obs) -> SurvivalCurve:
    """Unadjusted Nelson-Aalen curve (single stratum, weights honoured)."""
    data = as_data(obs)
    data = SurvivalData(data.time, data.event, data.weight, np.zeros((len(data), 0)),
                        np.zeros(len(data), dtype=int))
    model = SurvivalModel("cox", np.zeros(0), fit_breslow_baseline(data), np.zeros((0, 0)), float("nan"))
    return survival_curve(model)


def kaplan_meier(obs) -> SurvivalCurve:
    """Product-limit estimate with Greenwood variance (display only)."""
    data = as_data(obs).positive()
    uniq, inv = np.unique(data.time, return_inverse=True)
    at_risk = np.bincount(inv, data.weight, minlength=uniq.size)[::-1].cumsum()[::-1]
    d = np.bincount(inv, data.weight * data.event, minlength=uniq.size)
    keep = d > 0
    uniq, at_risk, d = uniq[keep], at_risk[keep], d[keep]
    est = np.cumprod(1.0 - d / at_risk)
    with np.errstate(divide="ignore", invalid="ignore"):
        gw = np.cumsum(np.where(at_risk > d, d / (at_risk * (at_risk - d)), np.inf))
    times = np.concatenate([[0.0], uniq])
    est = np.concatenate([[1.0], est])
    gw = np.concatenate([[0.0], gw])
    with np.errstate(divide="ignore", invalid="ignore"):
        cum = -np.log(est)
    se_log = np.sqrt(gw)
    lo = np.exp(-cum - Z95 * se_log)
    hi = np.minimum(1.0, np.exp(-cum + Z95 * se_log))
    return SurvivalCurve(times, est, gw, lo, hi)


# -- log-rank ----------------------------------------------------------------


@dataclass(frozen=True)
class LogRankResult:
    statistic: float
    df: int
    p_value: float
    observed: np.ndarray
    expected: np.ndarray

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "df": self.df,
            "p": self.p_value,
            "observed": self.observed.tolist(),
            "expected": self.expected.tolist(),
        }


def logrank_test(groups: Sequence) -> LogRankResult:
    """k-sample log-rank test on weighted risk sets.

    Each group is ``SurvivalData`` or a sequence of ``WeightedObservation``.
    The statistic ``U' V^- U`` over the first k-1 groups is referred to a
    chi-square with k-1 degrees of freedom.
    """
    if len(groups) < 2:
        raise ValueError("log-rank test needs at least two groups")
    datas = [as_data(g).positive() for g in groups]
    if any(len(d) == 0 for d in datas):
        raise ValueError("every group needs at least one positively weighted observation")
    k = len(datas)
    times = np.concatenate([d.time for d in datas])
    events = np.concatenate([d.event for d in datas])
    weights = np.concatenate([d.weight for d in datas])
    label = np.concatenate([np.full(len(d), g) for g, d in enumerate(datas)])
    if not np.any(events & (weights > 0)):
        raise NoEvents("no events in any group")
    uniq, inv = np.unique(times, return_inverse=True)
    m = uniq.size
    n_g = np.zeros((m, k))
    d_g = np.zeros((m, k))
    for g in range(k):
        sel = label == g
        n_g[:, g] = np.bincount(inv[sel], weights[sel], minlength=m)[::-1].cumsum()[::-1]
        d_g[:, g] = np.bincount(inv[sel], (weights * events)[sel], minlength=m)
    d = d_g.sum(axis=1)
    n = n_g.sum(axis=1)
    keep = d > 0
    n_g, d_g, d, n = n_g[keep], d_g[keep], d[keep], n[keep]
    frac = n_g / n[:, None]
    expected = (frac * d[:, None]).sum(axis=0)
    observed = d_g.sum(axis=0)
    U = observed - expected
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(n > 1, (n - d) / (n - 1), 0.0)
    V = -np.einsum("t,ti,tj->ij", d * corr, frac, frac)
    V[np.diag_indices(k)] += (d * corr) @ frac
    U1, V1 = U[:-1], V[:-1, :-1]
    stat = float(U1 @ np.linalg.pinv(V1) @ U1)
    stat = max(stat, 0.0)
    df = k - 1
    return LogRankResult(stat, df, float(stats.chi2.sf(stat, df)), observed, expected)


# JSON round trip. Floats go through repr, so a load reproduces the fit exactly.

def _baseline_to_dict(b) -> dict:
    if isinstance(b, WeibullBaseline):
        return {"type": "weibull", "shape": b.shape, "scale": b.scale}
    return {
        "type": "piecewise",
        "times": b.times.tolist(),
        "increments": b.increments.tolist(),
        "event_weight": b.event_weight.tolist(),
        "risk_weight": b.risk_weight.tolist(),
        "zbar": np.asarray(b.zbar).tolist(),
    }


def _baseline_from_dict(d: dict, p: int):
    if d["type"] == "weibull":
        return WeibullBaseline(float(d["shape"]), float(d["scale"]))
    times = np.asarray(d["times"], dtype=float)
    return PiecewiseBaseline(
        times,
        np.asarray(d["increments"], dtype=float),
        np.asarray(d["event_weight"], dtype=float),
        np.asarray(d["risk_weight"], dtype=float),
        np.asarray(d["zbar"], dtype=float).reshape(times.shape[0], p),
    )


def model_to_dict(model: SurvivalModel, covariate_names: Sequence[str] = (),
                  strata_labels: Mapping[int, str] | None = None) -> dict:
    p = model.beta.shape[0]
    names = list(covariate_names) or [f"x{j + 1}" for j in range(p)]
    return {
        "kind": model.kind,
        "covariates": names,
        "beta": model.beta.tolist(),
        "se": model.se.tolist(),
        "pvalues": model.pvalues.tolist(),
        "cov": np.asarray(model.cov).tolist(),
        "loglik": model.loglik,
        "loglik_null": model.loglik_null,
        "n_iter": model.n_iter,
        "converged": model.converged,
        "strata": {str(s): (strata_labels or {}).get(s, str(s)) for s in model.strata},
        "baselines": {str(s): _baseline_to_dict(b) for s, b in model.baselines.items()},
    }


def model_from_dict(d: Mapping) -> SurvivalModel:
    beta = np.asarray(d["beta"], dtype=float).reshape(-1)
    p = beta.shape[0]
    cov = np.asarray(d["cov"], dtype=float)
    return SurvivalModel(
        kind=d["kind"],
        beta=beta,
        baselines={int(s): _baseline_from_dict(b, p) for s, b in d["baselines"].items()},
        cov=cov.reshape(cov.shape if cov.ndim == 2 else (0, 0)),
        loglik=float(d["loglik"]),
        loglik_null=float(d.get("loglik_null", float("nan"))),
        n_iter=int(d.get("n_iter", 0)),
        converged=bool(d.get("converged", True)),
    )
