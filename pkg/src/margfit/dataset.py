"""Right-censored survival data with covariates.

The central container is :class:`SurvivalDataset`: observed times
``X_i = min(T_i, C_i)``, event indicators ``delta_i = I(T_i <= C_i)`` and a
fixed covariate vector ``Z_i`` per subject, stored sorted by time. Risk-set
statistics ``S^(r)(beta, t)``, the at-risk covariate mean ``E(beta, t)`` and
variance ``V(beta, t)`` are computed here; they are the building blocks of
every estimator in :mod:`margfit.estimate`.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterator

import numpy as np

from .errors import DataError

__all__ = [
    "Subject",
    "SurvivalDataset",
    "RiskSetStats",
    "load_csv",
    "save_csv",
    "freireich",
    "risk_set_stats",
]


@dataclass(frozen=True)
class Subject:
    """One observation: follow-up time, event indicator and covariates."""

    time: float
    status: int
    covariates: tuple[float, ...]


@dataclass(frozen=True)
class SurvivalDataset:
    """A validated, time-sorted sample of right-censored observations.

    Parameters
    ----------
    time : ndarray, shape (n,)
        Observed times, nonnegative, sorted ascending (sorting is applied
        by the constructor; ties keep input order).
    status : ndarray, shape (n,)
        Event indicators, 1 = event ("died"), 0 = censored.
    covariates : ndarray, shape (n, d)
        Time-fixed covariate vectors. Time-varying covariates are out of
        scope for this package.
    """

    time: np.ndarray
    status: np.ndarray
    covariates: np.ndarray
    n: int = field(init=False)
    d: int = field(init=False)

    def __post_init__(self) -> None:
        time = np.asarray(self.time, dtype=float)
        status = np.asarray(self.status)
        z = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        if z.shape[0] == 1 and time.size > 1 and z.shape[1] == time.size:
            z = z.T
        if time.ndim != 1 or time.size == 0:
            raise DataError("time must be a nonempty 1-d array")
        if status.shape != time.shape:
            raise DataError("status and time must have the same length")
        if z.shape[0] != time.size:
            raise DataError(
                f"covariate rows ({z.shape[0]}) do not match subject count ({time.size})"
            )
        if not np.all(np.isfinite(time)) or np.any(time < 0):
            raise DataError("times must be finite and nonnegative")
        if not np.isin(status, (0, 1)).all():
            raise DataError("status values must be 0 or 1")
        if not np.all(np.isfinite(z)):
            raise DataError("covariates must be finite")
        if np.any((time == 0) & (status == 1)):
            raise DataError("zero-time events are not allowed (degenerate risk set)")
        order = np.argsort(time, kind="stable")
        object.__setattr__(self, "time", np.ascontiguousarray(time[order]))
        object.__setattr__(self, "status", np.ascontiguousarray(status[order].astype(np.int8)))
        object.__setattr__(self, "covariates", np.ascontiguousarray(z[order]))
        object.__setattr__(self, "n", int(time.size))
        object.__setattr__(self, "d", int(z.shape[1]))

    @property
    def n_events(self) -> int:
        return int(self.status.sum())

    @property
    def subjects(self) -> Iterator[Subject]:
        """Iterate subjects in time order."""
        for i in range(self.n):
            yield Subject(
                float(self.time[i]), int(self.status[i]), tuple(self.covariates[i])
            )

    def require_events(self) -> None:
        if self.n_events == 0:
            raise DataError("dataset has no events; fitting requires at least one")

    def at_risk_count(self, t: float) -> int:
        """Number of subjects with X_i >= t."""
        return self.n - int(np.searchsorted(self.time, t, side="left"))


@dataclass(frozen=True)
class RiskSetStats:
    """The moments S^(0), S^(1), S^(2) of the risk set at (beta, t).

    ``s0`` is the scalar (1/n) sum of exp(beta'Z) over subjects at risk,
    ``s1`` and ``s2`` the matching first and second covariate moments,
    ``e = s1/s0`` the tilted covariate mean, ``v = s2/s0 - e e'`` the
    tilted covariate variance.
    """

    s0: float
    s1: np.ndarray
    s2: np.ndarray
    e: np.ndarray
    v: np.ndarray
    n_at_risk: int


def risk_set_stats(data: SurvivalDataset, beta: np.ndarray, t: float) -> RiskSetStats:
    """Evaluate S^(r)(beta, t) for r = 0, 1, 2 and the derived E, V.

    Parameters
    ----------
    data : SurvivalDataset
    beta : array-like, shape (d,)
    t : float
        Time point; subjects with X_i >= t form the risk set.

    Raises
    ------
    DataError
        If the risk set at ``t`` is empty (t beyond the last observed
        time) or ``beta`` has the wrong length.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.shape != (data.d,):
        raise DataError(f"beta must have length {data.d}, got {beta.shape}")
    if t < 0:
        raise DataError("t must be nonnegative")
    start = int(np.searchsorted(data.time, t, side="left"))
    m = data.n - start
    if m == 0:
        raise DataError(f"empty risk set at t={t} (beyond last observed time)")
    z = data.covariates[start:]
    w = np.exp(z @ beta)
    s0 = float(w.sum()) / data.n
    s1 = (w @ z) / data.n
    s2 = np.einsum("j,jk,jl->kl", w, z, z) / data.n
    e = s1 / s0
    v = s2 / s0 - np.outer(e, e)
    v = 0.5 * (v + v.T)
    return RiskSetStats(s0=s0, s1=s1, s2=s2, e=e, v=v, n_at_risk=m)


def load_csv(path) -> SurvivalDataset:
    """Read a dataset from CSV with header ``time,status,z1,...,zd``.

    Errors report the offending line number. Decimal point is ``.``;
    no thousands separators.
    """
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    with fh:
        return _parse_csv(fh, str(path))


def _parse_csv(fh, name: str) -> SurvivalDataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{name}: empty file") from None
    header = [h.strip() for h in header]
    if len(header) < 3 or header[0] != "time" or header[1] != "status":
        raise DataError(
            f"{name}: header must be 'time,status,z1,...,zd', got {header!r}"
        )
    expected_z = [f"z{k}" for k in range(1, len(header) - 1)]
    if header[2:] != expected_z:
        raise DataError(
            f"{name}: covariate columns must be named {','.join(expected_z)}"
        )
    d = len(header) - 2
    times: list[float] = []
    status: list[int] = []
    covs: list[list[float]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != d + 2:
            raise DataError(
                f"{name}: line {lineno}: expected {d + 2} fields, got {len(row)}"
            )
        try:
            t = float(row[0])
            s = float(row[1])
            zrow = [float(x) for x in row[2:]]
        except ValueError as exc:
            raise DataError(f"{name}: line {lineno}: {exc}") from None
        if t < 0:
            raise DataError(f"{name}: negative time at line {lineno}")
        if s not in (0.0, 1.0):
            raise DataError(f"{name}: status outside {{0,1}} at line {lineno}")
        times.append(t)
        status.append(int(s))
        covs.append(zrow)
    if not times:
        raise DataError(f"{name}: no data rows")
    return SurvivalDataset(np.array(times), np.array(status), np.array(covs))


def save_csv(data: SurvivalDataset, path) -> None:
    """Write a dataset in the same CSV format ``load_csv`` reads."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "status"] + [f"z{k+1}" for k in range(data.d)])
        for i in range(data.n):
            writer.writerow(
                [repr(float(data.time[i])), int(data.status[i])]
                + [repr(float(v)) for v in data.covariates[i]]
            )


def freireich() -> SurvivalDataset:
    """The classic 42-subject leukemia remission trial.

    Remission durations in weeks for 6-MP versus placebo; ``z1 = 1``
    codes the placebo group, so a positive coefficient means a higher
    relapse hazard on placebo. 30 events, 12 censored.
    """
    text = resources.files("margfit.data").joinpath("freireich.csv").read_text()
    return _parse_csv(io.StringIO(text), "freireich.csv")
