"""Synthetic control estimation with nested donor- and predictor-weight fits.

The donor weights w live on the probability simplex and reproduce the treated
unit's predictor vector as closely as possible under predictor weights v
(inner problem). The predictor weights are themselves chosen to minimize the
mean squared prediction error of the synthetic outcome over the pre-treatment
years (outer problem), searched with Nelder-Mead on a softmax parameterization
of the simplex from multiple seeded restarts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import (
    DegeneratePredictors,
    DimensionMismatch,
    NoDonors,
    ScmError,
    UnknownVariable,
)
from .panel import SPLIT_ZONE, PanelDataset, _frozen_array
from .regions import AggregateSeries
from .simplex import simplex_least_squares

PRE_PERIOD_MEAN = "pre_period_mean"


@dataclass(frozen=True)
class PredictorSpec:
    """Which predictors enter the fit and how they are summarized and scaled.

    outcome_lag_years: pre-treatment years whose outcome values act as
        predictors (must lie inside the pre period).
    covariate_names: covariates added as predictors.
    covariate_summary: either ``"pre_period_mean"`` or an integer year at
        which time-variant covariates are read.
    normalization: ``"zscore"`` scales each predictor across treated plus
        donors so units of measurement do not drive the fit; ``"none"``
        leaves raw values.
    """

    outcome_lag_years: tuple[int, ...] = (2016, 2018, 2020)
    covariate_names: tuple[str, ...] = (
        "avg_radiation",
        "radiation_variation",
        "disposable_income",
        "small_house_share",
        "unemployment",
    )
    covariate_summary: str | int = PRE_PERIOD_MEAN
    normalization: str = "zscore"

    def __post_init__(self):
        object.__setattr__(self, "outcome_lag_years", tuple(self.outcome_lag_years))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        if self.normalization not in ("zscore", "none"):
            raise ScmError(f"normalization must be 'zscore' or 'none', got {self.normalization!r}")
        if not isinstance(self.covariate_summary, int) and self.covariate_summary != PRE_PERIOD_MEAN:
            raise ScmError(
                "covariate_summary must be 'pre_period_mean' or an integer year, "
                f"got {self.covariate_summary!r}"
            )
        if not self.outcome_lag_years and not self.covariate_names:
            raise ScmError("predictor spec selects no predictors at all")


@dataclass(frozen=True)
class ScmOptions:
    """Solver effort knobs; defaults favor fit quality over speed.

    The outer search runs ``n_restarts`` random softmax starts plus the
    uniform start, each capped at ``nm_maxfev`` objective evaluations
    (``None`` picks 40 per predictor plus 80). Results are deterministic
    given ``seed``.
    """

    n_restarts: int = 20
    nm_maxfev: int | None = None
    seed: int = 0
    inner_max_iter: int = 10_000
    inner_improvement_tol: float = 1e-10

    def resolved_maxfev(self, n_predictors: int) -> int:
        if self.nm_maxfev is not None:
            return self.nm_maxfev
        return 40 * n_predictors + 80


@dataclass(frozen=True)
class ScmFit:
    """Everything a fitted synthetic control reports."""

    treated_label: str
    donor_ids: tuple[str, ...]
    w: np.ndarray
    v: np.ndarray
    predictor_names: tuple[str, ...]
    years: tuple[int, ...]
    treated_path: np.ndarray
    synthetic_path: np.ndarray
    gaps: np.ndarray
    pre_period: tuple[int, int]
    post_period: tuple[int, int]
    rmspe_pre: float
    rmspe_post: float
    treated_predictors: np.ndarray
    synthetic_predictors: np.ndarray
    pre_mspe: float
    inner_objective: float
    n_effective_donors: int
    seed: int

    def __post_init__(self):
        for name in (
            "w",
            "v",
            "treated_path",
            "synthetic_path",
            "gaps",
            "treated_predictors",
            "synthetic_predictors",
        ):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))

    @property
    def rmspe_ratio(self) -> float:
        if self.rmspe_pre == 0.0:
            return float("inf")
        return self.rmspe_post / self.rmspe_pre

    def gap_at(self, year: int) -> float:
        return float(self.gaps[year - self.years[0]])

    def nonzero_weights(self, threshold: float = 0.01) -> dict[str, float]:
        return {
            uid: float(wj)
            for uid, wj in zip(self.donor_ids, self.w)
            if wj > threshold
        }

    def to_json_dict(self) -> dict:
        return {
            "treated_label": self.treated_label,
            "donor_ids": list(self.donor_ids),
            "w": [float(x) for x in self.w],
            "v": [float(x) for x in self.v],
            "predictor_names": list(self.predictor_names),
            "years": list(self.years),
            "treated_path": [float(x) for x in self.treated_path],
            "synthetic_path": [float(x) for x in self.synthetic_path],
            "gaps": [float(x) for x in self.gaps],
            "pre_period": list(self.pre_period),
            "post_period": list(self.post_period),
            "rmspe": {"pre": self.rmspe_pre, "post": self.rmspe_post},
            "balance": [
                {"predictor": name, "treated": float(t), "synthetic": float(s)}
                for name, t, s in zip(
                    self.predictor_names, self.treated_predictors, self.synthetic_predictors
                )
            ],
            "pre_mspe": self.pre_mspe,
            "inner_objective": self.inner_objective,
            "n_effective_donors": self.n_effective_donors,
            "seed": self.seed,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")


def inner_weights(
    X1: np.ndarray,
    X0: np.ndarray,
    v: np.ndarray,
    max_iter: int = 10_000,
    improvement_tol: float = 1e-10,
) -> np.ndarray:
    """Donor weights minimizing the v-weighted predictor discrepancy.

    Returns argmin over the simplex of sum_k v_k (X1_k - (X0 w)_k)^2.
    """
    X1 = np.asarray(X1, dtype=np.float64)
    X0 = np.asarray(X0, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if X0.ndim != 2:
        raise DimensionMismatch(f"X0 must be 2-d, got shape {X0.shape}")
    if X0.shape[1] == 0:
        raise NoDonors("empty donor pool")
    if X1.shape != (X0.shape[0],):
        raise DimensionMismatch(
            f"X1 has shape {X1.shape}, expected ({X0.shape[0]},) to match X0 rows"
        )
    if v.shape != X1.shape:
        raise DimensionMismatch(f"v has shape {v.shape}, expected {X1.shape}")
    if np.any(v < 0) or not np.isclose(v.sum(), 1.0, atol=1e-6):
        raise ScmError("v must be a probability vector")
    root = np.sqrt(v / v.sum())
    result = simplex_least_squares(
        root[:, None] * X0,
        root * X1,
        max_iter=max_iter,
        improvement_tol=improvement_tol,
    )
    return result.weights


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def _predictor_rows(
    spec: PredictorSpec,
    years: tuple[int, ...],
    pre: tuple[int, int],
    outcome: np.ndarray,
    covariates: Mapping[str, np.ndarray],
) -> np.ndarray:
    """Stack predictor values for one unit or a batch (last axis = years)."""
    y0 = years[0]
    pre_cols = slice(pre[0] - y0, pre[1] - y0 + 1)
    rows = [outcome[..., y - y0] for y in spec.outcome_lag_years]
    for name in spec.covariate_names:
        mat = covariates[name]
        if spec.covariate_summary == PRE_PERIOD_MEAN:
            rows.append(mat[..., pre_cols].mean(axis=-1))
        else:
            rows.append(mat[..., int(spec.covariate_summary) - y0])
    return np.stack(rows, axis=0)


def predictor_names(spec: PredictorSpec) -> tuple[str, ...]:
    lag_names = tuple(f"capacity_{y}" for y in spec.outcome_lag_years)
    return lag_names + spec.covariate_names


def fit_scm(
    panel: PanelDataset,
    treated: AggregateSeries,
    donors: Sequence[str],
    spec: PredictorSpec = PredictorSpec(),
    pre_period: tuple[int, int] = (2016, 2020),
    post_period: tuple[int, int] = (2021, 2022),
    options: ScmOptions = ScmOptions(),
) -> ScmFit:
    """Fit a synthetic control for ``treated`` against donors drawn from ``panel``.

    The pre and post periods must be contiguous and disjoint; donors may not
    include treated members or SPLIT units. The reported synthetic path is
    the w-weighted average of donor outcomes over the full panel range.
    """
    if tuple(treated.years) != tuple(panel.years):
        raise DimensionMismatch(
            f"treated series years {treated.years[0]}-{treated.years[-1]} do not "
            f"match panel years {panel.years[0]}-{panel.years[-1]}"
        )
    y_first, y_last = panel.years[0], panel.years[-1]
    pre_period = (int(pre_period[0]), int(pre_period[1]))
    post_period = (int(post_period[0]), int(post_period[1]))
    if not (y_first <= pre_period[0] <= pre_period[1]):
        raise ScmError(f"invalid pre period {pre_period}")
    if not (post_period[0] <= post_period[1] <= y_last):
        raise ScmError(f"invalid post period {post_period}")
    if post_period[0] != pre_period[1] + 1:
        raise ScmError(
            f"pre {pre_period} and post {post_period} must be contiguous and disjoint"
        )
    for y in spec.outcome_lag_years:
        if not pre_period[0] <= y <= pre_period[1]:
            raise ScmError(f"outcome lag year {y} outside pre period {pre_period}")
    if isinstance(spec.covariate_summary, int):
        if not y_first <= spec.covariate_summary <= pre_period[1]:
            raise ScmError(
                f"covariate summary year {spec.covariate_summary} outside pre-treatment data"
            )
    for name in spec.covariate_names:
        if name not in panel.covariates:
            raise UnknownVariable(f"panel lacks covariate {name!r}")
        if name not in treated.covariates:
            raise UnknownVariable(f"treated series lacks covariate {name!r}")

    donor_ids = tuple(sorted(set(donors)))
    if not donor_ids:
        raise NoDonors("empty donor set")
    split = [d for d in donor_ids if panel.zone_of(d) == SPLIT_ZONE]
    if split:
        raise ScmError(f"SPLIT units may not be donors: {split[:5]}")
    overlap = sorted(set(donor_ids) & treated.members)
    if overlap:
        raise ScmError(f"donors overlap treated members: {overlap[:5]}")

    rows = [panel.index(d) for d in donor_ids]
    X1_raw = _predictor_rows(spec, panel.years, pre_period, treated.outcome, treated.covariates)
    X0_raw = _predictor_rows(
        spec,
        panel.years,
        pre_period,
        panel.outcome[rows],
        {k: m[rows] for k, m in panel.covariates.items() if k in spec.covariate_names},
    )
    X0_raw = np.ascontiguousarray(X0_raw.reshape(X1_raw.size, len(donor_ids)))
    names = predictor_names(spec)

    combined = np.column_stack([X1_raw, X0_raw])
    spread = combined.max(axis=1) - combined.min(axis=1)
    degenerate = [names[k] for k in np.flatnonzero(spread == 0.0)]
    if degenerate:
        raise DegeneratePredictors(
            f"constant across treated and all donors: {', '.join(degenerate)}"
        )
    if spec.normalization == "zscore":
        mu = combined.mean(axis=1, keepdims=True)
        sd = combined.std(axis=1, keepdims=True)
        X1 = ((X1_raw[:, None] - mu) / sd).ravel()
        X0 = (X0_raw - mu) / sd
    else:
        X1 = X1_raw.copy()
        X0 = X0_raw.copy()

    pre_cols = slice(pre_period[0] - y_first, pre_period[1] - y_first + 1)
    Y0 = panel.outcome[rows]
    Y0_pre = np.ascontiguousarray(Y0[:, pre_cols])
    y1_pre = treated.outcome[pre_cols]

    v, w = _optimize_predictor_weights(X1, X0, y1_pre, Y0_pre, options)

    synthetic_path = w @ Y0
    gaps = treated.outcome - synthetic_path
    post_cols = slice(post_period[0] - y_first, post_period[1] - y_first + 1)
    rmspe_pre = float(np.sqrt(np.mean(gaps[pre_cols] ** 2)))
    rmspe_post = float(np.sqrt(np.mean(gaps[post_cols] ** 2)))
    resid = X1 - X0 @ w
    return ScmFit(
        treated_label=treated.label,
        donor_ids=donor_ids,
        w=w,
        v=v,
        predictor_names=names,
        years=panel.years,
        treated_path=treated.outcome,
        synthetic_path=synthetic_path,
        gaps=gaps,
        pre_period=pre_period,
        post_period=post_period,
        rmspe_pre=rmspe_pre,
        rmspe_post=rmspe_post,
        treated_predictors=X1_raw,
        synthetic_predictors=X0_raw @ w,
        pre_mspe=float(np.mean((y1_pre - w @ Y0_pre) ** 2)),
        inner_objective=float(v @ (resid**2)),
        n_effective_donors=int(np.sum(w > 0.01)),
        seed=options.seed,
    )


def _optimize_predictor_weights(
    X1: np.ndarray,
    X0: np.ndarray,
    y1_pre: np.ndarray,
    Y0_pre: np.ndarray,
    options: ScmOptions,
) -> tuple[np.ndarray, np.ndarray]:
    """Outer Nelder-Mead search for v, inner simplex solve for w."""
    k = X1.size
    warm: dict[str, object] = {"support": None, "weights": None}

    def solve_inner(v: np.ndarray) -> np.ndarray:
        root = np.sqrt(v)
        result = simplex_least_squares(
            root[:, None] * X0,
            root * X1,
            max_iter=options.inner_max_iter,
            improvement_tol=options.inner_improvement_tol,
            init_support=warm["support"],
            init_weights=warm["weights"],
        )
        support = np.flatnonzero(result.weights)
        warm["support"] = support
        warm["weights"] = result.weights[support]
        return result.weights

    def pre_mspe(w: np.ndarray) -> float:
        diff = y1_pre - w @ Y0_pre
        return float(diff @ diff) / y1_pre.size

    uniform = np.full(k, 1.0 / k)
    w_uniform = solve_inner(uniform)
    best = (pre_mspe(w_uniform), uniform, w_uniform)
    if k == 1 or best[0] == 0.0:
        return best[1], best[2]

    def objective(z: np.ndarray) -> float:
        w = solve_inner(_softmax(z))
        return pre_mspe(w)

    rng = np.random.default_rng(options.seed)
    starts = [np.zeros(k)] + [rng.normal(0.0, 1.5, k) for _ in range(options.n_restarts)]
    maxfev = options.resolved_maxfev(k)
    for z0 in starts:
        warm["support"] = None
        warm["weights"] = None
        initial_simplex = np.vstack([z0, z0 + np.eye(k)])
        res = minimize(
            objective,
            z0,
            method="Nelder-Mead",
            options={
                "maxfev": maxfev,
                "xatol": 1e-4,
                "fatol": 0.0,
                "initial_simplex": initial_simplex,
            },
        )
        v_cand = _softmax(res.x)
        warm["support"] = None
        warm["weights"] = None
        w_cand = solve_inner(v_cand)
        f_cand = pre_mspe(w_cand)
        if f_cand < best[0]:
            best = (f_cand, v_cand, w_cand)

    _, v, w = best
    v = np.clip(v, 0.0, None)
    v /= v.sum()
    return v, w


@dataclass(frozen=True)
class EffectTable:
    """Per-year absolute gaps and relative effects of a fit."""

    years: tuple[int, ...]
    absolute: np.ndarray
    relative_pct: np.ndarray
    zero_synthetic_years: tuple[int, ...]
    pre_period: tuple[int, int]
    post_period: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "absolute", _frozen_array(self.absolute))
        object.__setattr__(self, "relative_pct", _frozen_array(self.relative_pct))

    def row(self, year: int) -> tuple[float, float]:
        i = self.years.index(year)
        return float(self.absolute[i]), float(self.relative_pct[i])


def effect_table(fit: ScmFit) -> EffectTable:
    """Absolute (kW) and relative (%) treatment effects per year.

    Pre-period rows are included as fit diagnostics. The relative effect is
    undefined in a year whose synthetic outcome is zero; such years carry NaN
    and are listed in ``zero_synthetic_years``.
    """
    if fit.post_period[0] > fit.post_period[1]:
        raise ScmError("fit has an empty post period")
    synthetic = fit.synthetic_path
    zero = synthetic == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        relative = np.where(zero, np.nan, 100.0 * fit.gaps / synthetic)
    return EffectTable(
        years=fit.years,
        absolute=fit.gaps,
        relative_pct=relative,
        zero_synthetic_years=tuple(int(y) for y, z in zip(fit.years, zero) if z),
        pre_period=fit.pre_period,
        post_period=fit.post_period,
    )


@dataclass(frozen=True)
class BalanceRow:
    predictor: str
    treated: float
    synthetic: float
    difference: float
    relative_pct: float


def predictor_balance(fit: ScmFit) -> tuple[BalanceRow, ...]:
    """Treated versus synthetic predictor values on the raw scale.

    ``difference`` is treated minus synthetic; ``relative_pct`` expresses it
    as a percentage of the treated value (NaN when the treated value is 0).
    """
    rows = []
    for name, t, s in zip(fit.predictor_names, fit.treated_predictors, fit.synthetic_predictors):
        diff = float(t - s)
        rel = float("nan") if t == 0 else 100.0 * diff / float(t)
        rows.append(BalanceRow(name, float(t), float(s), diff, rel))
    return tuple(rows)
