"""Data generation, censoring calibration, study runner, and population oracles.

Subjects follow the relative-risk model lambda(t|z) = lambda0(t) exp{beta(t) z}
with a piecewise-constant coefficient path beta(t). The baseline model can
play either of two roles:

* ``baseline_role='hazard'``: the model's hazard is lambda0 literally.
* ``baseline_role='marginal'``: the model is the *marginal* law of T, and
  lambda0 is calibrated implicitly so that E_Z[ exp(-Lambda(t|Z)) ] matches
  the model's survival at every t. With a constant beta this yields exactly
  the stated marginal (e.g. "T follows an exponential distribution"), which
  is the reading the reference tables require.

Sampling is exact in both roles: conditional on z, draw V ~ Exp(1), locate
the coefficient segment whose cumulative-hazard interval contains V, and
invert segment-wise (closed form for the hazard role; via the marginal
mixture g_k(M) = E_Z[exp(-H_k(Z) - M e^{b_k Z})] for the marginal role).
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .dataset import SurvivalDataset
from .errors import ConfigError, ConvergenceError, DataError, FitError
from .estimate import Constant, KaplanMeier, iterative_marginal_fit, solve_score
from .marginal import Exponential, PiecewiseExponential, Weibull

__all__ = [
    "BetaFunction",
    "Uniform01",
    "Bernoulli",
    "NoCensoring",
    "UniformCensoring",
    "ExponentialCensoring",
    "GeneratorSpec",
    "StudyConfig",
    "SimStudyResult",
    "draw_survival_time",
    "generate_dataset",
    "calibrate_censoring",
    "run_study",
    "expected_beta",
    "expected_beta_family",
    "beta_star_oracle",
    "beta_star_taylor",
    "load_study_config",
    "study_configs_from_dict",
    "results_to_json",
    "write_results_csv",
]

_BaselineModel = Union[Exponential, Weibull, PiecewiseExponential]

# fixed sub-stream indices that cannot collide with replication numbers
_CALIBRATION_STREAM = 1 << 32
_REFERENCE_STREAM = (1 << 32) + 1


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class BetaFunction:
    """Piecewise-constant, right-continuous coefficient path beta(t).

    ``values[k]`` applies on [changepoints[k-1], changepoints[k]); the
    constant case has no changepoints.
    """

    changepoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        cp = tuple(float(c) for c in self.changepoints)
        vals = tuple(float(v) for v in self.values)
        if len(vals) != len(cp) + 1:
            raise ConfigError("need exactly one more value than changepoints")
        if any(not np.isfinite(v) for v in vals):
            raise ConfigError("coefficient values must be finite")
        if any(c <= 0 for c in cp) or any(b <= a for a, b in zip(cp, cp[1:])):
            raise ConfigError("changepoints must be positive and strictly ascending")
        object.__setattr__(self, "changepoints", cp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value: float) -> "BetaFunction":
        return cls(changepoints=(), values=(float(value),))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(np.asarray(self.changepoints), t, side="right")
        out = np.asarray(self.values)[idx]
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class Uniform01:
    """Covariate Z ~ Uniform[0, 1]."""

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.random(n)

    def atoms(self):
        """Quadrature nodes and weights for integrals over the covariate law."""
        x, w = np.polynomial.legendre.leggauss(64)
        return (x + 1.0) / 2.0, w / 2.0


@dataclass(frozen=True)
class Bernoulli:
    """Covariate Z ~ Bernoulli(p)."""

    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ConfigError("Bernoulli p must be in (0, 1)")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return (rng.random(n) < self.p).astype(float)

    def atoms(self):
        return np.array([0.0, 1.0]), np.array([1.0 - self.p, self.p])


@dataclass(frozen=True)
class NoCensoring:
    pass


@dataclass(frozen=True)
class UniformCensoring:
    """C ~ Uniform(0, upper)."""

    upper: float

    def __post_init__(self):
        if not self.upper > 0:
            raise ConfigError("uniform censoring upper bound must be positive")


@dataclass(frozen=True)
class ExponentialCensoring:
    """C ~ Exponential(rate)."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ConfigError("exponential censoring rate must be positive")


_CensoringLaw = Union[NoCensoring, UniformCensoring, ExponentialCensoring]
_CovariateLaw = Union[Uniform01, Bernoulli]


@dataclass(frozen=True)
class GeneratorSpec:
    """Full description of the data-generating mechanism."""

    baseline: _BaselineModel
    beta: BetaFunction
    covariate: _CovariateLaw = Uniform01()
    censoring: _CensoringLaw = NoCensoring()
    baseline_role: str = "hazard"

    def __post_init__(self):
        if not isinstance(self.baseline, (Exponential, Weibull, PiecewiseExponential)):
            raise ConfigError(
                "baseline must be Exponential, Weibull, or PiecewiseExponential"
            )
        if not isinstance(self.beta, BetaFunction):
            raise ConfigError("beta must be a BetaFunction")
        if not isinstance(self.covariate, (Uniform01, Bernoulli)):
            raise ConfigError("covariate must be Uniform01 or Bernoulli")
        if not isinstance(
            self.censoring, (NoCensoring, UniformCensoring, ExponentialCensoring)
        ):
            raise ConfigError("unknown censoring law")
        if self.baseline_role not in ("hazard", "marginal"):
            raise ConfigError("baseline_role must be 'hazard' or 'marginal'")


@lru_cache(maxsize=64)
def _marginal_tables(baseline, beta: BetaFunction, covariate):
    """Segment tables for the marginal baseline role.

    Solves, segment by segment, for the implicit baseline cumulative-hazard
    increments that make E_Z[exp(-Lambda(t|Z))] equal the target marginal at
    each coefficient changepoint. Returns (bounds, bvals, Lam, zq, logwq, H)
    where H[k] holds the conditional cumulative hazard at the k-th segment
    start for each covariate node.
    """
    bounds = np.concatenate(([0.0], np.asarray(beta.changepoints, dtype=float)))
    bvals = np.asarray(beta.values, dtype=float)
    K = bvals.size
    zq, wq = covariate.atoms()
    logwq = np.log(wq)
    H = np.zeros((K, zq.size))
    Lam = np.zeros(K)
    for k in range(K - 1):
        target = float(baseline.survival(bounds[k + 1]))
        ez = np.exp(bvals[k] * zq)

        def gap(dL):
            return float(np.exp(logwq - H[k] - dL * ez).sum()) - target

        hi = 1.0
        for _ in range(200):
            if gap(hi) < 0.0:
                break
            hi *= 2.0
        else:
            raise FitError("could not bracket the marginal segment increment")
        dL = brentq(gap, 0.0, hi, xtol=1e-15, rtol=8.9e-16, maxiter=200)
        Lam[k + 1] = Lam[k] + dL
        H[k + 1] = H[k] + dL * ez
    return bounds, bvals, Lam, zq, logwq, H


def _draw_survival_times(
    spec: GeneratorSpec, z: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Exact inversion sampling of T given covariates z."""
    z = np.asarray(z, dtype=float)
    n = z.size
    V = rng.exponential(size=n)
    bvals = np.asarray(spec.beta.values, dtype=float)
    K = bvals.size
    if spec.baseline_role == "hazard":
        bounds = np.concatenate(
            ([0.0], np.asarray(spec.beta.changepoints, dtype=float))
        )
        Lam = np.asarray(spec.baseline.cumulative_hazard(bounds), dtype=float)
    else:
        bounds, bvals, Lam, zq, logwq, H = _marginal_tables(
            spec.baseline, spec.beta, spec.covariate
        )
    if K == 1:
        idx = np.zeros(n, dtype=int)
        thr_at = np.zeros(n)
    else:
        # conditional cumulative hazard at each segment start, per subject
        inc = np.diff(Lam)[None, :] * np.exp(np.outer(z, bvals[:-1]))
        thr = np.concatenate([np.zeros((n, 1)), np.cumsum(inc, axis=1)], axis=1)
        idx = (V[:, None] >= thr).sum(axis=1) - 1
        thr_at = thr[np.arange(n), idx]
    M = (V - thr_at) * np.exp(-bvals[idx] * z)
    if spec.baseline_role == "hazard":
        return np.asarray(
            spec.baseline.inverse_cumulative_hazard(Lam[idx] + M), dtype=float
        )
    T = np.empty(n)
    for k in np.unique(idx):
        m = idx == k
        expo = logwq[None, :] - H[k][None, :] - np.outer(M[m], np.exp(bvals[k] * zq))
        logg = logsumexp(expo, axis=1)
        T[m] = spec.baseline.inverse_cumulative_hazard(np.minimum(-logg, 1e12))
    return T


def draw_survival_time(spec: GeneratorSpec, z: float, rng) -> float:
    """One survival time T for a subject with covariate z."""
    if not np.isfinite(z):
        raise ConfigError("covariate value must be finite")
    return float(_draw_survival_times(spec, np.array([float(z)]), _as_rng(rng))[0])


def _draw_censoring_from_uniforms(law, u: np.ndarray) -> np.ndarray:
    if isinstance(law, UniformCensoring):
        return u * law.upper
    if isinstance(law, ExponentialCensoring):
        return -np.log1p(-u) / law.rate
    raise ConfigError("no censoring law to draw from")


def generate_dataset(spec: GeneratorSpec, n: int, rng) -> SurvivalDataset:
    """One replication: covariates, survival times, censoring, observed data.

    The uniforms driving censoring are drawn after (z, T), so datasets with
    different censoring settings but the same seed share their survival
    times (common random numbers across censoring levels).
    """
    if n < 2:
        raise ConfigError("need n >= 2")
    rng = _as_rng(rng)
    z = spec.covariate.draw(rng, n)
    t = _draw_survival_times(spec, z, rng)
    if isinstance(spec.censoring, NoCensoring):
        time, status = t, np.ones(n, dtype=int)
    else:
        c = _draw_censoring_from_uniforms(spec.censoring, rng.random(n))
        time = np.minimum(t, c)
        status = (t <= c).astype(int)
    return SurvivalDataset(time=time, status=status, covariates=z[:, None])


def calibrate_censoring(
    spec: GeneratorSpec,
    target_fraction: float,
    n_mc: int = 200_000,
    rng=None,
) -> float | None:
    """Censoring parameter achieving a target censored fraction.

    Bisects the family parameter of ``spec.censoring`` (upper bound for the
    uniform family, rate for the exponential) over a Monte Carlo estimate of
    P(censored) built from one shared draw of (z, T, u) — common random
    numbers, so the estimated fraction is exactly monotone in the parameter.
    A fresh validation draw must land within +-0.5% of the target.

    Returns None for a zero target (the no-censoring sentinel).
    """
    if target_fraction == 0.0:
        return None
    if not 0.0 < target_fraction < 1.0:
        raise ConfigError("target censoring fraction must be in [0, 1)")
    if isinstance(spec.censoring, NoCensoring):
        raise ConfigError("spec has no censoring family to calibrate")
    if n_mc < 100_000:
        raise ConfigError("calibration needs n_mc >= 100000")
    rng = _as_rng(rng)
    z = spec.covariate.draw(rng, n_mc)
    t = _draw_survival_times(spec, z, rng)
    u = rng.random(n_mc)
    uniform_family = isinstance(spec.censoring, UniformCensoring)

    def frac(param: float) -> float:
        law = (
            UniformCensoring(param) if uniform_family else ExponentialCensoring(param)
        )
        c = _draw_censoring_from_uniforms(law, u)
        return float(np.mean(t > c))

    # censored fraction decreases in the uniform upper bound and increases
    # in the exponential rate; bracket [lo, hi] with the target in between
    def excess(param: float) -> float:
        sign = 1.0 if uniform_family else -1.0
        return sign * (frac(param) - target_fraction)

    lo = hi = 1.0
    for _ in range(200):
        if excess(lo) > 0.0:
            break
        lo /= 2.0
    else:
        raise FitError("could not bracket the censoring parameter from below")
    for _ in range(200):
        if excess(hi) < 0.0:
            break
        hi *= 2.0
    else:
        raise FitError("could not bracket the censoring parameter from above")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10 * max(1.0, hi):
            break
    param = 0.5 * (lo + hi)

    z2 = spec.covariate.draw(rng, n_mc)
    t2 = _draw_survival_times(spec, z2, rng)
    law = UniformCensoring(param) if uniform_family else ExponentialCensoring(param)
    c2 = _draw_censoring_from_uniforms(law, rng.random(n_mc))
    achieved = float(np.mean(t2 > c2))
    if abs(achieved - target_fraction) > 0.005:
        raise FitError(
            f"calibration check failed: achieved {achieved:.4f} "
            f"for target {target_fraction:.4f}"
        )
    return param


@dataclass(frozen=True)
class StudyConfig:
    """One simulation design: generator, size, replication count, estimators."""

    spec: GeneratorSpec
    n: int
    reps: int
    seed: int
    target_censoring: float = 0.0
    families_to_fit: tuple[str, ...] = ()
    label: str = ""

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError("need n >= 2")
        if self.reps < 1:
            raise ConfigError("need reps >= 1")
        if not 0.0 <= self.target_censoring < 1.0:
            raise ConfigError("target_censoring must be in [0, 1)")
        fams = tuple(self.families_to_fit)
        if not fams:
            fams = (_default_family(self.spec.baseline),)
        for f in fams:
            _parse_family_id(f)
        object.__setattr__(self, "families_to_fit", fams)


@dataclass(frozen=True)
class SimStudyResult:
    """Aggregate of one study: per-estimator replication draws and moments."""

    estimates: dict
    means: dict
    sds: dict
    reference_family: float
    reference_mc: float
    censoring_param: float | None
    realized_censoring: float
    n_failed: int
    failures: tuple
    config: StudyConfig
    seed: int


def _default_family(baseline) -> str:
    if isinstance(baseline, Exponential):
        return "exponential"
    if isinstance(baseline, Weibull):
        return "weibull"
    cuts = ",".join(repr(c) for c in baseline.cuts)
    return f"pwexp:{cuts}"


def _parse_family_id(fid: str):
    """'exponential' | 'weibull' | 'pwexp:c1,c2,...' -> (family, cuts)."""
    if fid == "exponential" or fid == "weibull":
        return fid, ()
    if fid.startswith("pwexp:"):
        try:
            cuts = tuple(float(x) for x in fid[len("pwexp:") :].split(","))
        except ValueError:
            raise ConfigError(f"bad piecewise-exponential cuts in {fid!r}") from None
        if not cuts:
            raise ConfigError("pwexp family needs at least one cut")
        return "pwexp", cuts
    raise ConfigError(f"unknown parametric family id {fid!r}")


def _one_rep(spec: GeneratorSpec, families, seed: int, n: int, rep: int):
    rng = np.random.default_rng([seed, rep])
    data = generate_dataset(spec, n, rng)
    values = {}
    fails = []
    try:
        values["pl"] = float(solve_score(data, Constant()).beta[0])
    except (FitError, DataError) as exc:
        fails.append(("pl", str(exc)))
    try:
        values["km"] = float(solve_score(data, KaplanMeier()).beta[0])
    except (FitError, DataError) as exc:
        fails.append(("km", str(exc)))
    for fid in families:
        fam, cuts = _parse_family_id(fid)
        try:
            res = iterative_marginal_fit(data, fam, cuts=cuts)
            values[f"par:{fid}"] = float(res.beta[0])
        except (FitError, DataError) as exc:
            fails.append((f"par:{fid}", str(exc)))
    realized = 1.0 - float(np.mean(data.status))
    return rep, values, realized, fails


def _rep_block(payload):
    spec, families, seed, n, rep_indices = payload
    return [_one_rep(spec, families, seed, n, rep) for rep in rep_indices]


def run_study(config: StudyConfig, jobs: int | None = None) -> SimStudyResult:
    """Run all replications of one design and aggregate.

    Each replication uses the independent substream ``default_rng([seed,
    rep])``, so results are bitwise identical for any ``jobs`` value and any
    scheduling order (estimates are stored by replication index before
    aggregation). A replication in which any estimator fails is dropped from
    all aggregates; more than 1% failures aborts the study.
    """
    spec = config.spec
    if config.target_censoring > 0.0:
        if isinstance(spec.censoring, NoCensoring):
            raise ConfigError(
                "target_censoring > 0 requires a censoring family in the spec"
            )
        param = calibrate_censoring(
            spec,
            config.target_censoring,
            rng=np.random.default_rng([config.seed, _CALIBRATION_STREAM]),
        )
        if isinstance(spec.censoring, UniformCensoring):
            spec = replace(spec, censoring=UniformCensoring(param))
        else:
            spec = replace(spec, censoring=ExponentialCensoring(param))
    else:
        param = None
        spec = replace(spec, censoring=NoCensoring())

    names = ["pl", "km"] + [f"par:{fid}" for fid in config.families_to_fit]
    reps = config.reps
    est = {name: np.full(reps, np.nan) for name in names}
    realized = np.full(reps, np.nan)
    failures = []

    if jobs is None or jobs <= 1:
        rows = [
            _one_rep(spec, config.families_to_fit, config.seed, config.n, rep)
            for rep in range(reps)
        ]
    else:
        block = max(1, reps // (4 * jobs))
        payloads = [
            (spec, config.families_to_fit, config.seed, config.n,
             range(start, min(start + block, reps)))
            for start in range(0, reps, block)
        ]
        rows = []
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for out in pool.map(_rep_block, payloads):
                rows.extend(out)

    for rep, values, frac, fails in rows:
        realized[rep] = frac
        for name, v in values.items():
            est[name][rep] = v
        for name, msg in fails:
            failures.append((rep, name, msg))

    failed_reps = sorted({rep for rep, _, _ in failures})
    n_failed = len(failed_reps)
    if n_failed > 0.01 * reps:
        first = failures[0]
        raise FitError(
            f"{n_failed}/{reps} replications failed (> 1%): "
            f"rep {first[0]} [{first[1]}]: {first[2]}"
        )
    ok = np.ones(reps, dtype=bool)
    ok[failed_reps] = False

    means = {name: float(np.mean(est[name][ok])) for name in names}
    sds = {
        name: float(np.std(est[name][ok], ddof=1)) if ok.sum() > 1 else 0.0
        for name in names
    }
    ref_family = expected_beta_family(spec)
    ref_mc = expected_beta(
        spec, rng=np.random.default_rng([config.seed, _REFERENCE_STREAM])
    )
    return SimStudyResult(
        estimates={name: est[name] for name in names},
        means=means,
        sds=sds,
        reference_family=ref_family,
        reference_mc=ref_mc,
        censoring_param=param,
        realized_censoring=float(np.mean(realized[ok])),
        n_failed=n_failed,
        failures=tuple(failures),
        config=config,
        seed=config.seed,
    )


def expected_beta(spec: GeneratorSpec, n_mc: int = 200_000, rng=None) -> float:
    """Monte Carlo E[beta(T)] under the generator, censoring ignored."""
    if n_mc < 100_000:
        raise ConfigError("expected_beta needs n_mc >= 100000")
    rng = _as_rng(rng)
    uncensored = replace(spec, censoring=NoCensoring())
    z = spec.covariate.draw(rng, n_mc)
    t = _draw_survival_times(uncensored, z, rng)
    return float(np.mean(spec.beta(t)))


def expected_beta_family(spec: GeneratorSpec) -> float:
    """Closed-form E[beta(T)] treating the baseline model as the law of T.

    Exact for the marginal baseline role; for the hazard role it is the
    baseline-distribution average the reference tables print, which differs
    from the generator-faithful value whenever beta varies over time.
    """
    bounds = np.concatenate(
        (
            [0.0],
            np.asarray(spec.beta.changepoints, dtype=float),
            [np.inf],
        )
    )
    surv = np.array(
        [1.0]
        + [float(spec.baseline.survival(b)) for b in bounds[1:-1]]
        + [0.0]
    )
    vals = np.asarray(spec.beta.values, dtype=float)
    return float(np.sum(vals * (surv[:-1] - surv[1:])))


def _grid_indices(n: int, grid_size: int) -> np.ndarray:
    """Order-statistic positions of the (g + 0.5)/G quantiles."""
    probs = (np.arange(grid_size) + 0.5) / grid_size
    return np.minimum((probs * n).astype(int), n - 1)


def beta_star_oracle(
    spec: GeneratorSpec,
    n_mc: int = 1_000_000,
    grid_size: int = 200,
    rng=None,
    weighting: str = "failure",
) -> float:
    """Population target of the marginal-weighted estimators.

    ``weighting='failure'`` solves the censoring-free limiting equation

        integral { e(beta0(t), t) - e(beta, t) } dF(t) = 0

    with the tilted at-risk means e and the failure law F estimated from one
    large uncensored draw on a quantile grid; the root is found by bisection.

    ``weighting='risk'`` instead solves the expectation of the unweighted
    partial-likelihood score *including* the spec's censoring (the
    event-density-weighted equation), exposing the partial-likelihood drift
    under non-proportional hazards. Implemented as a single large solve of
    the score equation, so ``grid_size`` is not used.
    """
    if weighting not in ("failure", "risk"):
        raise ConfigError("weighting must be 'failure' or 'risk'")
    if n_mc < 100_000:
        raise ConfigError("beta_star_oracle needs n_mc >= 100000")
    rng = _as_rng(rng)
    if weighting == "risk":
        data = generate_dataset(spec, n_mc, rng)
        return float(solve_score(data, Constant(), variance="none").beta[0])

    uncensored = replace(spec, censoring=NoCensoring())
    z = spec.covariate.draw(rng, n_mc)
    t = _draw_survival_times(uncensored, z, rng)
    order = np.argsort(t, kind="stable")
    t, z = t[order], z[order]
    gidx = _grid_indices(n_mc, grid_size)
    bvals = spec.beta(t[gidx])

    def tilted_means(beta: float) -> np.ndarray:
        w = np.exp(beta * z)
        s0 = np.cumsum(w[::-1])[::-1]
        s1 = np.cumsum((w * z)[::-1])[::-1]
        return s1[gidx] / s0[gidx]

    target = np.empty(grid_size)
    for b in np.unique(bvals):
        m = bvals == b
        target[m] = tilted_means(float(b))[m]

    def h(beta: float) -> float:
        # decreasing in beta: the tilted at-risk mean rises with the tilt
        return float(np.mean(target - tilted_means(beta)))

    lo = float(min(spec.beta.values)) - 1.0
    hi = float(max(spec.beta.values)) + 1.0
    for _ in range(60):
        if h(lo) > 0.0:
            break
        lo -= 1.0
    for _ in range(60):
        if h(hi) < 0.0:
            break
        hi += 1.0
    if not (h(hi) < 0.0 < h(lo)):
        raise FitError("could not bracket the limiting-equation root")
    return float(brentq(h, lo, hi, xtol=1e-10, maxiter=200))


def beta_star_taylor(
    spec: GeneratorSpec, n_mc: int = 200_000, grid_size: int = 200, rng=None
) -> float:
    """First-order average-effect approximation sum v b / sum v.

    v(t) = Var[Z | T = t] is the exponentially tilted at-risk variance at
    beta0(t), estimated on the same quantile grid as the oracle; the
    averaging law is the failure distribution (equal grid mass).
    """
    if n_mc < 100_000:
        raise ConfigError("beta_star_taylor needs n_mc >= 100000")
    rng = _as_rng(rng)
    uncensored = replace(spec, censoring=NoCensoring())
    z = spec.covariate.draw(rng, n_mc)
    t = _draw_survival_times(uncensored, z, rng)
    order = np.argsort(t, kind="stable")
    t, z = t[order], z[order]
    gidx = _grid_indices(n_mc, grid_size)
    bvals = spec.beta(t[gidx])
    v = np.empty(grid_size)
    for b in np.unique(bvals):
        m = bvals == b
        w = np.exp(float(b) * z)
        s0 = np.cumsum(w[::-1])[::-1][gidx]
        s1 = np.cumsum((w * z)[::-1])[::-1][gidx]
        s2 = np.cumsum((w * z * z)[::-1])[::-1][gidx]
        e = s1 / s0
        v[m] = (s2 / s0 - e * e)[m]
    return float(np.sum(v * bvals) / np.sum(v))


# -- study configuration files ------------------------------------------------


def _baseline_from_dict(d: dict):
    fam = d.get("family")
    if fam == "exponential":
        return Exponential(rate=float(d["rate"]))
    if fam == "weibull":
        return Weibull(shape=float(d["shape"]), scale=float(d["scale"]))
    if fam == "pwexp":
        return PiecewiseExponential(
            cuts=tuple(float(c) for c in d["cuts"]),
            rates=tuple(float(r) for r in d["rates"]),
        )
    raise ConfigError(f"unknown baseline family {fam!r}")


def _baseline_to_dict(model, role: str) -> dict:
    if isinstance(model, Exponential):
        out = {"family": "exponential", "rate": model.rate}
    elif isinstance(model, Weibull):
        out = {"family": "weibull", "shape": model.shape, "scale": model.scale}
    else:
        out = {
            "family": "pwexp",
            "cuts": list(model.cuts),
            "rates": list(model.rates),
        }
    out["role"] = role
    return out


def _covariate_from_dict(d: dict):
    kind = d.get("kind", "uniform01")
    if kind == "uniform01":
        return Uniform01()
    if kind == "bernoulli":
        return Bernoulli(p=float(d["p"]))
    raise ConfigError(f"unknown covariate kind {kind!r}")


def study_configs_from_dict(doc: dict) -> list[StudyConfig]:
    """Expand one config document into per-censoring-level StudyConfigs.

    ``target_censoring`` may be a number or a list of numbers; each level
    becomes one study sharing the document's seed, so survival draws are
    common random numbers across levels.
    """
    try:
        baseline = _baseline_from_dict(doc["baseline"])
        role = doc["baseline"].get("role", "hazard")
        bd = doc["beta"]
        if "constant" in bd:
            beta = BetaFunction.constant(float(bd["constant"]))
        else:
            beta = BetaFunction(
                changepoints=tuple(float(c) for c in bd.get("changepoints", ())),
                values=tuple(float(v) for v in bd["values"]),
            )
        covariate = _covariate_from_dict(doc.get("covariate", {}))
        cfam = doc.get("censoring_family", "none")
        n = int(doc["n"])
        reps = int(doc["reps"])
        seed = int(doc["seed"])
        fams = tuple(doc.get("families_to_fit", ()))
        label = str(doc.get("label", ""))
        targets = doc.get("target_censoring", 0.0)
    except KeyError as exc:
        raise ConfigError(f"study config is missing key {exc.args[0]!r}") from None
    if isinstance(targets, (int, float)):
        targets = [targets]
    if cfam == "none":
        censoring = NoCensoring()
        if any(float(x) > 0 for x in targets):
            raise ConfigError("nonzero target_censoring with censoring_family 'none'")
    elif cfam == "uniform":
        censoring = UniformCensoring(1.0)
    elif cfam == "exponential":
        censoring = ExponentialCensoring(1.0)
    else:
        raise ConfigError(f"unknown censoring family {cfam!r}")
    spec = GeneratorSpec(
        baseline=baseline,
        beta=beta,
        covariate=covariate,
        censoring=censoring,
        baseline_role=role,
    )
    return [
        StudyConfig(
            spec=spec,
            n=n,
            reps=reps,
            seed=seed,
            target_censoring=float(x),
            families_to_fit=fams,
            label=label,
        )
        for x in targets
    ]


def load_study_config(path) -> list[StudyConfig]:
    """Read a study config JSON file.

    The file holds one design document or a list of them (e.g. the two
    coefficient settings of a reference table); each expands into one study
    per censoring level. See study_configs_from_dict.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    docs = doc if isinstance(doc, list) else [doc]
    configs: list[StudyConfig] = []
    for d in docs:
        if not isinstance(d, dict):
            raise ConfigError("study config entries must be JSON objects")
        configs.extend(study_configs_from_dict(d))
    return configs


def _config_echo(config: StudyConfig) -> dict:
    spec = config.spec
    if isinstance(spec.censoring, UniformCensoring):
        cfam = "uniform"
    elif isinstance(spec.censoring, ExponentialCensoring):
        cfam = "exponential"
    else:
        cfam = "none"
    cov = (
        {"kind": "uniform01"}
        if isinstance(spec.covariate, Uniform01)
        else {"kind": "bernoulli", "p": spec.covariate.p}
    )
    return {
        "baseline": _baseline_to_dict(spec.baseline, spec.baseline_role),
        "beta": {
            "changepoints": list(spec.beta.changepoints),
            "values": list(spec.beta.values),
        },
        "covariate": cov,
        "censoring_family": cfam,
        "target_censoring": config.target_censoring,
        "n": config.n,
        "reps": config.reps,
        "seed": config.seed,
        "families_to_fit": list(config.families_to_fit),
        "label": config.label,
    }


def results_to_json(results: list[SimStudyResult]) -> dict:
    """JSON sidecar document for a list of study results."""
    rows = []
    for r in results:
        rows.append(
            {
                "config": _config_echo(r.config),
                "censoring_param": r.censoring_param,
                "realized_censoring": r.realized_censoring,
                "n_failed": r.n_failed,
                "estimators": {
                    name: {"mean": r.means[name], "sd": r.sds[name]}
                    for name in r.means
                },
                "expected_beta_family": r.reference_family,
                "expected_beta_mc": r.reference_mc,
                "seed": r.seed,
            }
        )
    return {"schema": 1, "studies": rows}


def write_results_csv(results: list[SimStudyResult], path) -> None:
    """Wide CSV, one row per censoring level, mean/sd columns per estimator."""
    if not results:
        raise ConfigError("no results to write")
    names = list(results[0].means)
    header = ["label", "censoring_family", "target_censoring", "realized_censoring"]
    for name in names:
        header += [f"{name}_mean", f"{name}_sd"]
    header += ["expected_beta_family", "expected_beta_mc", "n", "reps", "seed"]
    lines = [",".join(header)]
    for r in results:
        echo = _config_echo(r.config)
        row = [
            r.config.label,
            echo["censoring_family"],
            repr(r.config.target_censoring),
            repr(r.realized_censoring),
        ]
        for name in names:
            row += [repr(r.means[name]), repr(r.sds[name])]
        row += [
            repr(r.reference_family),
            repr(r.reference_mc),
            str(r.config.n),
            str(r.config.reps),
            str(r.seed),
        ]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
