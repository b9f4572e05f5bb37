"""Maximum-likelihood estimation, prediction and reporting."""
from __future__ import annotations

import dataclasses
import logging
import math
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import optimize, stats

from .domain import (
    ACCIDENTS,
    MU_INDEX,
    N_PARAMS,
    PARAM_NAMES,
    CellKey,
    ModelParameters,
    Outcome,
    ValidationError,
)
from .nested import (
    CellDataset,
    SamplingWeights,
    ZeroProbabilityError,
    _loglik,
    cell_probabilities,
    sampling_weights,
)

log = logging.getLogger(__name__)


class EstimationError(ArithmeticError):
    pass


@dataclasses.dataclass(frozen=True)
class OptimizerConfig:
    max_iter: int = 1000
    gtol: float = 1e-6
    ftol_rel: float = 1e-9
    newton_steps: int = 50
    hessian_step: float = 1e-4
    robust: bool = False


@dataclasses.dataclass
class EstimationResult:
    params: ModelParameters
    std_errors: Optional[dict]
    t_stats: Optional[dict]
    p_values: Optional[dict]
    loglik_initial: float
    loglik_final: float
    rho2: float
    rho2_adjusted: float
    n_obs: int
    n_cells: int
    converged: bool
    iterations: int
    gradient_norm: float
    message: str = ""
    covariance: Optional[np.ndarray] = None
    weights: SamplingWeights = SamplingWeights()

    @property
    def n_free(self) -> int:
        return self.params.n_free


def fit_statistics(loglik_initial: float, loglik_final: float, n_params: int) -> tuple[float, float]:
    """Likelihood-ratio index and its parameter-adjusted variant."""
    rho2 = 1.0 - loglik_final / loglik_initial
    rho2_adj = 1.0 - (loglik_final - n_params) / loglik_initial
    return rho2, rho2_adj


def initial_parameters(free_mask=None, scaling=None) -> ModelParameters:
    """All coefficients zero and mu = 1."""
    kw = {}
    if free_mask is not None:
        kw["free_mask"] = tuple(free_mask)
    if scaling is not None:
        kw["scaling"] = scaling
    return ModelParameters(**kw)


class _Objective:
    """Negative log-likelihood over the free parameters, with cached evaluations."""

    def __init__(self, start: ModelParameters, data: CellDataset, weights):
        self.base = start.vector()
        self.mask = np.array(start.free_mask, bool)
        self.data = data
        self.weights = weights
        self.free = np.flatnonzero(self.mask)
        self.n_evals = 0

    def full(self, z) -> np.ndarray:
        theta = self.base.copy()
        theta[self.free] = z
        return theta

    def loglik(self, z, gradient=True, per_cell=False):
        self.n_evals += 1
        return _loglik(self.full(z), self.mask, self.data, self.weights, gradient, per_cell)

    def __call__(self, z):
        try:
            r = self.loglik(z)
        except ZeroProbabilityError:
            return np.inf, np.zeros_like(z)
        return -r.loglik, -r.gradient

    @property
    def mu_pos(self) -> Optional[int]:
        hit = np.flatnonzero(self.free == MU_INDEX)
        return int(hit[0]) if hit.size else None

    def projected(self, z, g) -> np.ndarray:
        """Ascent gradient with the component pushing mu below 1 removed."""
        g = g.copy()
        k = self.mu_pos
        if k is not None and z[k] <= 1.0 and g[k] < 0:
            g[k] = 0.0
        return g

    def hessian(self, z, rel_step: float) -> np.ndarray:
        """Central differences of the analytic gradient (one-sided at the mu bound)."""
        n = z.size
        h = np.empty((n, n))
        k = self.mu_pos
        for j in range(n):
            step = rel_step * max(abs(z[j]), 1.0)
            zp = z.copy()
            zp[j] += step
            gp = self.loglik(zp).gradient
            zm = z.copy()
            zm[j] -= step
            if j == k and zm[j] < 1.0:
                gm = self.loglik(z).gradient
                h[:, j] = (gp - gm) / step
            else:
                gm = self.loglik(zm).gradient
                h[:, j] = (gp - gm) / (2 * step)
        return 0.5 * (h + h.T)


def _newton_polish(obj: _Objective, z, cfg: OptimizerConfig):
    """Damped Newton ascent on the free parameters; returns (z, report, iterations, hessian, converged).

    The Hessian is reused between steps and only rebuilt when a step fails.
    Near the optimum the log-likelihood change drops below rounding noise,
    so a step is also accepted when it keeps the value within that noise and
    shrinks the gradient.
    """
    rep = obj.loglik(z)
    hess = obj.hessian(z, cfg.hessian_step)
    fresh = True
    k = obj.mu_pos
    converged = False
    it = 0
    while it < cfg.newton_steps:
        g = obj.projected(z, rep.gradient)
        gmax = np.max(np.abs(g))
        if gmax < cfg.gtol:
            converged = True
            break
        it += 1
        active = np.ones(z.size, bool)
        if k is not None and z[k] <= 1.0 and rep.gradient[k] < 0:
            active[k] = False
        step = np.zeros_like(z)
        sub = -hess[np.ix_(active, active)]
        w, vecs = np.linalg.eigh(sub)
        w = np.maximum(w, 1e-8 * max(w.max(), 1.0))
        step[active] = vecs @ ((vecs.T @ g[active]) / w)
        noise = 1e-11 * max(abs(rep.loglik), 1.0)
        t = 1.0
        accepted = None
        while t > 1e-10:
            zn = z + t * step
            if k is not None and zn[k] < 1.0:
                zn[k] = 1.0
            try:
                rn = obj.loglik(zn)
            except ZeroProbabilityError:
                t *= 0.5
                continue
            better = rn.loglik > rep.loglik
            if not better and rn.loglik >= rep.loglik - noise:
                better = np.max(np.abs(obj.projected(zn, rn.gradient))) < gmax
            if better:
                accepted = (zn, rn)
                break
            t *= 0.5
        if accepted is None:
            if fresh:
                break
            hess = obj.hessian(z, cfg.hessian_step)
            fresh = True
            continue
        z, rep = accepted
        fresh = False
    if not fresh:
        hess = obj.hessian(z, cfg.hessian_step)
    return z, rep, it, hess, converged


def estimate(data: CellDataset, weights: Optional[SamplingWeights] = None,
             start: Optional[ModelParameters] = None,
             config: OptimizerConfig = OptimizerConfig()) -> EstimationResult:
    """Maximise the WESML function.

    Starts from ``start`` (default: all coefficients zero, mu = 1, every
    parameter free).  A limited-memory BFGS run (mu bounded below by 1) is
    followed by damped Newton steps on the numerical Hessian until the
    projected gradient max-norm drops below ``config.gtol``.  Standard errors
    come from the inverse of the negative Hessian, or from the sandwich
    estimator when ``config.robust`` is set.
    """
    if start is None:
        start = initial_parameters(scaling=data.scaling)
    if start.scaling != data.scaling:
        raise ValidationError(f"model scaling {start.scaling} does not match data scaling {data.scaling}")
    obj = _Objective(start, data, weights)
    z0 = start.vector()[obj.free]

    zero = initial_parameters(start.free_mask, start.scaling)
    ll0 = _loglik(zero.vector(), np.array(start.free_mask), data, weights, gradient=False).loglik
    if not math.isfinite(ll0):
        raise EstimationError("initial log-likelihood is not finite")

    bounds = [(1.0, None) if i == MU_INDEX else (None, None) for i in obj.free]
    scale = max(abs(ll0), 1.0)
    res = optimize.minimize(
        lambda z: tuple(np.asarray(v) / scale for v in obj(z)), z0, jac=True, method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": config.max_iter, "maxcor": 30, "ftol": 1e-15, "gtol": config.gtol / scale},
    )
    z = res.x
    if z.size == 0:
        rep = obj.loglik(z)
        hess, converged, iters = np.zeros((0, 0)), True, 0
    else:
        z, rep, newton_iters, hess, converged = _newton_polish(obj, z, config)
        iters = int(res.nit) + newton_iters
    params = start.with_vector(obj.full(z))
    gnorm = float(np.max(np.abs(obj.projected(z, rep.gradient)))) if z.size else 0.0

    cov = _covariance(obj, z, hess, config.robust)
    names = params.free_names()
    se = t = pv = None
    if cov is not None:
        sd = np.sqrt(np.diag(cov))
        values = z
        se = dict(zip(names, sd.tolist()))
        tv = values / sd
        t = dict(zip(names, tv.tolist()))
        pv = dict(zip(names, (2 * stats.norm.sf(np.abs(tv))).tolist()))
    rho2, rho2_adj = fit_statistics(ll0, rep.loglik, params.n_free)
    msg = "converged" if converged else f"not converged (max |gradient| {gnorm:.3g})"
    if not converged:
        log.warning("estimation %s", msg)
    return EstimationResult(
        params=params, std_errors=se, t_stats=t, p_values=pv,
        loglik_initial=ll0, loglik_final=rep.loglik, rho2=rho2, rho2_adjusted=rho2_adj,
        n_obs=data.n_members, n_cells=data.n_cells, converged=converged, iterations=iters,
        gradient_norm=gnorm, message=msg, covariance=cov,
        weights=weights if weights is not None else SamplingWeights(),
    )


def _covariance(obj: _Objective, z, hess, robust: bool) -> Optional[np.ndarray]:
    if z.size == 0:
        return None
    neg = -hess
    try:
        w = np.linalg.eigvalsh(neg)
    except np.linalg.LinAlgError:
        w = np.array([0.0])
    if w.min() <= 1e-10 * max(w.max(), 1.0):
        log.warning("Hessian is singular or not negative definite; standard errors unavailable")
        return None
    inv = np.linalg.inv(neg)
    if not robust:
        return inv
    g = obj.loglik(z, per_cell=True).cell_gradients
    meat = g.T @ g
    return inv @ meat @ inv


@dataclasses.dataclass
class Prediction:
    keys: list
    probs: np.ndarray
    predicted: np.ndarray
    n_obs: np.ndarray
    labels: np.ndarray


def predict(data: CellDataset, params: ModelParameters) -> Prediction:
    """Cell probabilities and arg-max outcome.

    Ties resolve to the first outcome in (NA, RE, LC, ROR) order, so an exact
    NA/accident tie never raises an alarm.
    """
    if params.scaling != data.scaling:
        raise ValidationError(f"model scaling {params.scaling} does not match feature scaling {data.scaling}")
    probs = cell_probabilities(params.vector(), data, params.free_mask)
    predicted = np.argmax(probs, axis=1)
    return Prediction(list(data.keys), probs, predicted, data.counts.copy(), data.labels.copy())


@dataclasses.dataclass
class ConfusionReport:
    accuracy: dict
    total_accident_accuracy: float
    false_alarms: dict
    false_alarm_rate: float
    counts: dict

    def as_rows(self) -> list[tuple[str, float, float]]:
        rows = [(k.name, self.accuracy[k.name], self.false_alarms[k.name]) for k in ACCIDENTS]
        rows.append(("Total", self.total_accident_accuracy, self.false_alarm_rate))
        return rows


def _rate(num: int, den: int) -> float:
    return num / den if den else float("nan")


def confusion_metrics(predicted, truth) -> ConfusionReport:
    """Per-type accuracy, accident detection rate and false-alarm rates.

    Accuracy of type k is the share of true-k cells predicted as k.  Total
    accident accuracy is the share of true accident cells predicted as any
    accident.  The false-alarm rate of type k is the share of true NA cells
    predicted as k; the total is their sum.
    """
    pred = np.asarray(predicted, dtype=np.int64)
    true = np.asarray(truth, dtype=np.int64)
    if pred.shape != true.shape:
        raise ValueError("predictions and truth must be aligned")
    acc = {k.name: _rate(int(np.sum((true == k) & (pred == k))), int(np.sum(true == k))) for k in Outcome}
    is_acc = true > 0
    total = _rate(int(np.sum(is_acc & (pred > 0))), int(np.sum(is_acc)))
    na = true == 0
    n_na = int(na.sum())
    fa = {k.name: _rate(int(np.sum(na & (pred == k))), n_na) for k in ACCIDENTS}
    fa_total = _rate(int(np.sum(na & (pred > 0))), n_na)
    counts = {k.name: int(np.sum(true == k)) for k in Outcome}
    return ConfusionReport(acc, total, fa, fa_total, counts)


def probability_ratios(data: CellDataset, params: ModelParameters,
                       prediction: Optional[Prediction] = None) -> np.ndarray:
    """Mean P(k)/P(NA) per true outcome class.

    Returns a 3x3 array: rows are true classes (RE, LC, ROR), columns are
    accident types (RE, LC, ROR).  Rows for absent classes are NaN.
    """
    pr = prediction if prediction is not None else predict(data, params)
    p_na = pr.probs[:, 0]
    zero = np.flatnonzero(p_na <= 0)
    if zero.size:
        raise ZeroProbabilityError(f"P(NA) is zero in cell {tuple(pr.keys[int(zero[0])])}")
    ratios = pr.probs[:, 1:] / p_na[:, None]
    out = np.full((3, 3), np.nan)
    for row, k in enumerate(ACCIDENTS):
        sel = pr.labels == k
        if sel.any():
            out[row] = ratios[sel].mean(axis=0)
    return out


def stratified_halves(labels, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Random split of cell indices into two halves within each outcome class."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    first, second = [], []
    for k in Outcome:
        idx = np.flatnonzero(labels == k)
        if idx.size == 0:
            continue
        if idx.size < 2:
            raise ValidationError(f"outcome {k.name} has fewer than 2 cells; cannot split")
        idx = rng.permutation(idx)
        half = idx.size // 2
        first.append(idx[:half])
        second.append(idx[half:])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


class FoldResult(NamedTuple):
    train: ConfusionReport
    test: ConfusionReport
    estimate: EstimationResult


def crossvalidate(data: CellDataset, seed: int, population_counts=None,
                  start: Optional[ModelParameters] = None,
                  config: OptimizerConfig = OptimizerConfig()) -> tuple[FoldResult, FoldResult]:
    """Two-fold cross-validation on stratified random halves.

    Each half is used once for estimation and the other for testing.  With
    ``population_counts`` the estimation uses WESML weights for the training
    half; otherwise weights are unit.
    """
    a, b = stratified_halves(data.labels, seed)
    folds = []
    for train_idx, test_idx in ((a, b), (b, a)):
        train = data.subset(train_idx)
        test = data.subset(test_idx)
        w = None
        if population_counts is not None:
            w = sampling_weights(population_counts, train.outcome_counts())
        res = estimate(train, w, start, config)
        tr = predict(train, res.params)
        te = predict(test, res.params)
        folds.append(FoldResult(confusion_metrics(tr.predicted, tr.labels),
                                confusion_metrics(te.predicted, te.labels), res))
    return folds[0], folds[1]


def _fmt(x: Optional[float], spec: str) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "-"
    return format(x, spec)


def coefficient_table(result: EstimationResult) -> str:
    """Estimation results laid out as Value / st. dev. / t-stat / p-val plus the fit block."""
    p = result.params
    values = p.vector()
    lines = [f"{'Parameter':<12} {'Value':>10} {'st. dev.':>10} {'t-stat':>8} {'p-val':>8}"]
    for i, name in enumerate(PARAM_NAMES):
        if not p.free_mask[i]:
            lines.append(f"{name:<12} {values[i]:>10.4g} {'(fixed)':>10}")
            continue
        se = result.std_errors.get(name) if result.std_errors else None
        t = result.t_stats.get(name) if result.t_stats else None
        pv = result.p_values.get(name) if result.p_values else None
        pv_s = "<0.01" if pv is not None and pv < 0.01 else _fmt(pv, ".2f")
        lines.append(f"{name:<12} {values[i]:>10.4g} {_fmt(se, '.3f'):>10} {_fmt(t, '.2f'):>8} {pv_s:>8}")
    lines += [
        f"# of parameters:         {result.n_free}",
        f"Sample size:             {result.n_obs} ({result.n_cells} cells)",
        f"Initial log-likelihood:  {result.loglik_initial:.2f}",
        f"Final log-likelihood:    {result.loglik_final:.2f}",
        f"rho^2:                   {result.rho2:.3f}",
        f"adjusted rho^2:          {result.rho2_adjusted:.3f}",
        f"Converged:               {result.converged} ({result.iterations} iterations)",
    ]
    return "\n".join(lines)


def confusion_table(report: ConfusionReport) -> str:
    lines = [f"{'':<14}" + "".join(f"{k.name:>8}" for k in ACCIDENTS) + f"{'Total':>8}"]
    acc = [report.accuracy[k.name] for k in ACCIDENTS] + [report.total_accident_accuracy]
    fa = [report.false_alarms[k.name] for k in ACCIDENTS] + [report.false_alarm_rate]
    lines.append(f"{'Accuracy':<14}" + "".join(f"{_pct(x):>8}" for x in acc))
    lines.append(f"{'False alarms':<14}" + "".join(f"{_pct(x):>8}" for x in fa))
    return "\n".join(lines)


def _pct(x: float) -> str:
    return "-" if math.isnan(x) else f"{100 * x:.1f}%"


def ratio_table(ratios: np.ndarray) -> str:
    lines = [f"{'':<6}" + "".join(f"{'P(' + k.name + ')':>10}" for k in ACCIDENTS)]
    for row, k in enumerate(ACCIDENTS):
        lines.append(f"{k.name:<6}" + "".join(f"{_fmt(float(v), '.3f'):>10}" for v in ratios[row]))
    return "\n".join(lines)
