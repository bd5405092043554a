"""Resampling distributions for the estimators: random weights and bootstrap.

The random-weight scheme perturbs the estimating equation itself: one unit
exponential e_k per *distinct* failure time, normalized to e_k / sum e,
multiplies the score terms of the events at that time while the marginal
weights W stay fixed at their original-data values. The nonparametric
bootstrap instead resamples subjects and refits everything, including the
parametric marginal when the scheme carries one.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import SurvivalDataset
from .errors import ConfigError, DataError, FitError
from .estimate import (
    Constant,
    FitResult,
    KaplanMeier,
    Parametric,
    WeightScheme,
    solve_score,
)
from .marginal import (
    Exponential,
    PiecewiseExponential,
    Weibull,
    fit_exponential,
    fit_piecewise_exponential,
    fit_weibull,
)

__all__ = [
    "ResampleResult",
    "random_weight_fit",
    "resample_distribution",
    "bootstrap",
]


@dataclass(frozen=True)
class ResampleResult:
    """Draws of one resampling distribution plus the original fit."""

    method: str
    draws: np.ndarray
    se: np.ndarray
    point: FitResult
    n_failed: int
    failures: tuple
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "n_draws": int(self.draws.shape[0]),
            "n_failed": self.n_failed,
            "se": [float(s) for s in self.se],
            "point": self.point.to_dict(),
            "seed": self.seed,
        }

    def export_csv(self, path) -> None:
        """One column per coefficient, one row per successful draw."""
        d = self.draws.shape[1]
        header = ",".join(f"beta{j + 1}" for j in range(d))
        lines = [header]
        for row in self.draws:
            lines.append(",".join(repr(float(x)) for x in row))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def _event_multipliers(data: SurvivalDataset, e: np.ndarray) -> np.ndarray:
    """Per-subject score multipliers e_i / sum e, one per failure."""
    ev = data.status == 1
    if e.shape != (int(ev.sum()),):
        raise ConfigError(f"need one exponential draw per failure ({int(ev.sum())})")
    if np.any(e <= 0):
        raise ConfigError("resampling weights must be positive")
    mult = np.ones(data.n)
    if np.ptp(e) == 0.0:
        # equal weights normalize to exactly one: keep the unweighted score
        # bit-for-bit so a degenerate draw reproduces the point estimate
        return mult
    mult[ev] = e / e.sum()
    return mult


def random_weight_fit(
    data: SurvivalDataset,
    scheme: WeightScheme,
    rng,
    *,
    ties: str = "breslow",
) -> np.ndarray:
    """One perturbed solve: multiply the i-th event's score term by e_i / sum e.

    ``rng`` needs an ``exponential(size=n_t)`` method, n_t the number of
    failures; marginal weights are not re-estimated. Tied failures draw
    independent weights, so the Efron tie rule (which needs a shared
    multiplier within a tie group) is not available here.
    """
    data.require_events()
    if not hasattr(rng, "exponential"):
        rng = np.random.default_rng(rng)
    e = np.asarray(rng.exponential(size=data.n_events), dtype=float)
    mult = _event_multipliers(data, e)
    res = solve_score(
        data, scheme, ties=ties, variance="none", event_multipliers=mult
    )
    return res.beta


def _weight_draw(payload):
    data, scheme, ties, seed, indices = payload
    out = []
    for b in indices:
        rng = np.random.default_rng([seed, b])
        try:
            out.append((b, random_weight_fit(data, scheme, rng, ties=ties), None))
        except (FitError, DataError) as exc:
            out.append((b, None, str(exc)))
    return out


def _bootstrap_draw(payload):
    data, scheme, ties, seed, indices = payload
    out = []
    for b in indices:
        rng = np.random.default_rng([seed, b])
        idx = rng.integers(0, data.n, size=data.n)
        try:
            rep = SurvivalDataset(
                time=data.time[idx],
                status=data.status[idx],
                covariates=data.covariates[idx],
            )
            res = solve_score(
                data=rep,
                scheme=_replicate_scheme(scheme, rep),
                ties=ties,
                variance="none",
            )
            out.append((b, res.beta, None))
        except (FitError, DataError) as exc:
            out.append((b, None, str(exc)))
    return out


def _replicate_scheme(scheme: WeightScheme, data: SurvivalDataset) -> WeightScheme:
    """Per-replicate scheme: refit fitted marginals, keep external ones."""
    if not isinstance(scheme, Parametric):
        return scheme
    model = scheme.model
    if isinstance(model, Exponential):
        return Parametric(fit_exponential(data))
    if isinstance(model, Weibull):
        return Parametric(fit_weibull(data))
    if isinstance(model, PiecewiseExponential):
        return Parametric(fit_piecewise_exponential(data, model.cuts))
    return scheme  # externally supplied curves are inputs, not estimates


def _run_draws(worker, data, scheme, n_draws, seed, ties, jobs, method, abort_over):
    if n_draws < 2:
        raise ConfigError("need at least 2 draws")
    point = solve_score(data, scheme, ties=ties)
    if jobs is None or jobs <= 1:
        rows = worker((data, scheme, ties, seed, range(n_draws)))
    else:
        block = max(1, n_draws // (4 * jobs))
        payloads = [
            (data, scheme, ties, seed, range(s, min(s + block, n_draws)))
            for s in range(0, n_draws, block)
        ]
        rows = []
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for out in pool.map(worker, payloads):
                rows.extend(out)
    rows.sort(key=lambda r: r[0])
    draws = [beta for _, beta, err in rows if err is None]
    failures = tuple((b, err) for b, _, err in rows if err is not None)
    if abort_over is not None and len(failures) > abort_over * n_draws:
        raise FitError(
            f"{len(failures)}/{n_draws} resampling draws failed "
            f"(> {abort_over:.0%}): first: draw {failures[0][0]}: {failures[0][1]}"
        )
    if len(draws) < 2:
        raise FitError("fewer than 2 successful draws; cannot form an SE")
    mat = np.vstack(draws)
    return ResampleResult(
        method=method,
        draws=mat,
        se=mat.std(axis=0, ddof=1),
        point=point,
        n_failed=len(failures),
        failures=failures,
        seed=seed,
    )


def resample_distribution(
    data: SurvivalDataset,
    scheme: WeightScheme,
    n_draws: int = 1000,
    seed: int = 0,
    *,
    ties: str = "breslow",
    jobs: int | None = None,
) -> ResampleResult:
    """Random-weight resampling distribution with per-draw substreams.

    Draw b uses ``default_rng([seed, b])``, so results are independent of
    ``jobs`` and scheduling. More than 5% failed draws aborts.
    """
    return _run_draws(
        _weight_draw,
        data,
        scheme,
        n_draws,
        seed,
        ties,
        jobs,
        "random-weight",
        abort_over=0.05,
    )


def bootstrap(
    data: SurvivalDataset,
    scheme: WeightScheme,
    n_draws: int = 500,
    seed: int = 0,
    *,
    ties: str = "breslow",
    jobs: int | None = None,
) -> ResampleResult:
    """Nonparametric bootstrap: resample subjects, refit marginal and score.

    Replicates that cannot be fit (no events, degenerate risk sets) are
    skipped and recorded in ``failures`` rather than aborting, since heavy
    censoring can make occasional empty replicates expected behavior.
    """
    return _run_draws(
        _bootstrap_draw,
        data,
        scheme,
        n_draws,
        seed,
        ties,
        jobs,
        "bootstrap",
        abort_over=None,
    )
