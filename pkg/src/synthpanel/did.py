"""Difference-in-differences comparator with robust errors and diagnostics.

Estimates the outcome on a low-tariff-side dummy, time controls and their
interaction over municipality-level observations from two border regions.
With year fixed effects enabled the post-period main effect is collinear and
is dropped explicitly (and reported as such). Companion diagnostics: an
arithmetic 2x2 oracle, a linear parallel-trends test on the pre period, and
an in-time placebo on a truncated panel.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg as sla
from scipy import stats

from .errors import DidError, EmptyGroup, InsufficientPrePeriod, RankDeficientDesign
from .panel import PanelDataset, _frozen_array

SE_TYPES = ("HC1", "cluster_by_unit")


@dataclass(frozen=True)
class DidSpec:
    """Regions, timing and error structure of one DiD estimation."""

    treated_region: frozenset[str]
    control_region: frozenset[str]
    post_year: int = 2020
    controls: tuple[str, ...] = ()
    year_fixed_effects: bool = True
    se_type: str = "HC1"
    small_sample_t: bool = False

    def __post_init__(self):
        object.__setattr__(self, "treated_region", frozenset(self.treated_region))
        object.__setattr__(self, "control_region", frozenset(self.control_region))
        object.__setattr__(self, "controls", tuple(self.controls))
        overlap = self.treated_region & self.control_region
        if overlap:
            raise DidError(f"regions overlap: {sorted(overlap)[:5]}")
        if self.se_type not in SE_TYPES:
            raise DidError(f"se_type must be one of {SE_TYPES}, got {self.se_type!r}")


@dataclass(frozen=True)
class DidFit:
    """OLS coefficients with robust errors; atet is the interaction estimate."""

    terms: tuple[str, ...]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    p_values: np.ndarray
    atet: float
    n_obs: int
    r_squared: float
    se_type: str
    dropped: tuple[str, ...]
    df_resid: int
    year_fixed_effects: bool

    def __post_init__(self):
        for name in ("coefficients", "standard_errors", "p_values"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))

    def coefficient(self, term: str) -> float:
        return float(self.coefficients[self.terms.index(term)])

    def se(self, term: str) -> float:
        return float(self.standard_errors[self.terms.index(term)])

    def p_value(self, term: str) -> float:
        return float(self.p_values[self.terms.index(term)])

    def t_value(self, term: str) -> float:
        return self.coefficient(term) / self.se(term)

    def to_json_dict(self) -> dict:
        return {
            "terms": list(self.terms),
            "coefficients": [float(x) for x in self.coefficients],
            "standard_errors": [float(x) for x in self.standard_errors],
            "p_values": [float(x) for x in self.p_values],
            "atet": self.atet,
            "n_obs": self.n_obs,
            "r_squared": self.r_squared,
            "se_type": self.se_type,
            "dropped": list(self.dropped),
            "year_fixed_effects": self.year_fixed_effects,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")

    def format_table(self) -> str:
        """Aligned text table: coefficient with stars, SE in parentheses."""
        display = [("ATET", "north_post")]
        pretty = {
            "disposable_income": "Income",
            "small_house_share": "Housing",
            "unemployment": "Unemployment",
        }
        for term in self.terms:
            if term in pretty:
                display.append((pretty[term], term))
        display.append(("Constant", "const"))
        lines = []
        for label, term in display:
            coef = self.coefficient(term)
            stars = _stars(self.p_value(term))
            lines.append(f"{label:<14}{coef:>12.3f}{stars}")
            lines.append(f"{'':<14}{'(' + format(self.se(term), '.3f') + ')':>12}")
        lines.append(f"{'Year FE':<14}{'Yes' if self.year_fixed_effects else 'No':>12}")
        if self.dropped:
            lines.append(f"{'Dropped':<14}{', '.join(self.dropped):>12}")
        lines.append(f"{'N':<14}{self.n_obs:>12}")
        lines.append(f"{'R-squared':<14}{self.r_squared:>12.3f}")
        lines.append("Robust standard errors in parentheses")
        lines.append("*** p<0.01, ** p<0.05, * p<0.1")
        return "\n".join(lines)


def _stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def _check_rank(X: np.ndarray, names: Sequence[str]) -> None:
    _, r, pivots = sla.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(X.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        culprits = sorted(names[i] for i in pivots[rank:])
        raise RankDeficientDesign(culprits)


def _ols_robust(
    X: np.ndarray,
    y: np.ndarray,
    names: Sequence[str],
    se_type: str,
    cluster_ids: np.ndarray | None,
    small_sample_t: bool,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float, int]:
    """OLS with HC1 or cluster-robust covariance; returns beta, se, p, cov, R2, df."""
    n, k = X.shape
    if n <= k:
        raise DidError(f"{n} observations cannot identify {k} coefficients")
    _check_rank(X, names)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    xtx_inv = np.linalg.inv(X.T @ X)
    if se_type == "HC1":
        meat = (X * resid[:, None] ** 2).T @ X
        cov = xtx_inv @ meat @ xtx_inv * (n / (n - k))
    else:
        if cluster_ids is None:
            raise DidError("cluster_by_unit errors need unit ids per row")
        groups = np.unique(cluster_ids)
        g = len(groups)
        if g < 2:
            raise DidError("cluster-robust errors need at least two clusters")
        meat = np.zeros((k, k))
        for group in groups:
            mask = cluster_ids == group
            s = X[mask].T @ resid[mask]
            meat += np.outer(s, s)
        correction = (g / (g - 1)) * ((n - 1) / (n - k))
        cov = xtx_inv @ meat @ xtx_inv * correction
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.inf * np.sign(beta))
    if small_sample_t:
        p = 2.0 * stats.t.sf(np.abs(t), df=n - k)
    else:
        p = np.array([math.erfc(abs(ti) / math.sqrt(2.0)) for ti in t])
    p = np.where(se > 0, p, np.where(beta == 0.0, 1.0, 0.0))
    sst = float(np.sum((y - y.mean()) ** 2))
    ssr = float(resid @ resid)
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    return beta, se, p, cov, r2, n - k


def _region_rows(panel: PanelDataset, spec: DidSpec) -> tuple[list[str], np.ndarray]:
    if not spec.treated_region or not spec.control_region:
        raise EmptyGroup("treated and control regions must both be non-empty")
    units = sorted(spec.treated_region) + sorted(spec.control_region)
    for uid in units:
        panel.index(uid)
    north = np.array([1.0 if u in spec.treated_region else 0.0 for u in units])
    return units, north


def _did_design(
    panel: PanelDataset,
    spec: DidSpec,
    years: Sequence[int],
    post_year: int,
) -> tuple[np.ndarray, np.ndarray, list[str], np.ndarray, tuple[str, ...]]:
    units, north_flag = _region_rows(panel, spec)
    years = tuple(years)
    rows_per_unit = len(years)
    n = len(units) * rows_per_unit

    y = np.empty(n)
    north = np.empty(n)
    post = np.empty(n)
    unit_ids = np.empty(n, dtype=object)
    controls = {name: np.empty(n) for name in spec.controls}
    year_of = np.empty(n, dtype=int)
    for i, uid in enumerate(units):
        r = panel.index(uid)
        sl = slice(i * rows_per_unit, (i + 1) * rows_per_unit)
        cols = [panel.year_index(t) for t in years]
        y[sl] = panel.outcome[r, cols]
        north[sl] = north_flag[i]
        post[sl] = [1.0 if t >= post_year else 0.0 for t in years]
        unit_ids[sl] = uid
        year_of[sl] = years
        for name in spec.controls:
            controls[name][sl] = panel.covariates[name][r, cols]

    columns = [np.ones(n), north]
    names = ["const", "north"]
    dropped: tuple[str, ...] = ()
    if spec.year_fixed_effects:
        # Post is a sum of year dummies; drop it so the interaction stays identified.
        dropped = ("post",)
        for t in years[1:]:
            columns.append((year_of == t).astype(float))
            names.append(f"year_{t}")
    else:
        columns.append(post)
        names.append("post")
    columns.append(north * post)
    names.append("north_post")
    for name in spec.controls:
        columns.append(controls[name])
        names.append(name)
    X = np.column_stack(columns)
    return X, y, names, unit_ids, dropped


def fit_did(panel: PanelDataset, spec: DidSpec) -> DidFit:
    """OLS difference-in-differences on municipality-level observations.

    The ATET is the coefficient on the north x post interaction. Standard
    errors follow ``spec.se_type``; p-values use the normal approximation
    unless ``spec.small_sample_t`` is set.
    """
    if not panel.years[0] <= spec.post_year <= panel.years[-1]:
        raise DidError(
            f"post year {spec.post_year} outside panel range "
            f"{panel.years[0]}-{panel.years[-1]}"
        )
    return _fit_window(panel, spec, panel.years, spec.post_year)


def _fit_window(
    panel: PanelDataset, spec: DidSpec, years: Sequence[int], post_year: int
) -> DidFit:
    X, y, names, unit_ids, dropped = _did_design(panel, spec, years, post_year)
    beta, se, p, _cov, r2, df = _ols_robust(
        X,
        y,
        names,
        spec.se_type,
        unit_ids if spec.se_type == "cluster_by_unit" else None,
        spec.small_sample_t,
    )
    return DidFit(
        terms=tuple(names),
        coefficients=beta,
        standard_errors=se,
        p_values=p,
        atet=float(beta[names.index("north_post")]),
        n_obs=len(y),
        r_squared=r2,
        se_type=spec.se_type,
        dropped=dropped,
        df_resid=df,
        year_fixed_effects=spec.year_fixed_effects,
    )


def did_2x2_oracle(panel: PanelDataset, spec: DidSpec) -> float:
    """Raw-means 2x2 estimate: (treated post - pre) - (control post - pre).

    Independent arithmetic check for :func:`fit_did`; equals its ATET exactly
    when no controls and no year fixed effects are used.
    """
    units, north_flag = _region_rows(panel, spec)
    post_mask = np.array([t >= spec.post_year for t in panel.years])
    if not post_mask.any() or post_mask.all():
        raise EmptyGroup(
            f"post year {spec.post_year} leaves an empty pre or post period"
        )
    rows = [panel.index(u) for u in units]
    block = panel.outcome[rows]
    treated = north_flag == 1.0
    t_post = block[treated][:, post_mask].mean()
    t_pre = block[treated][:, ~post_mask].mean()
    c_post = block[~treated][:, post_mask].mean()
    c_pre = block[~treated][:, ~post_mask].mean()
    return float((t_post - t_pre) - (c_post - c_pre))


@dataclass(frozen=True)
class TrendsTest:
    """Pre-period linear-trend comparison between the two regions.

    The treated (north) side is the reference category, so its rows are
    reported as omitted with coefficient zero; the interaction of interest is
    ``south_x_year``.
    """

    terms: tuple[str, ...]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    p_values: np.ndarray
    omitted: tuple[str, ...]
    n_obs: int

    def __post_init__(self):
        for name in ("coefficients", "standard_errors", "p_values"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))

    @property
    def interaction(self) -> float:
        return float(self.coefficients[self.terms.index("south_x_year")])

    @property
    def interaction_se(self) -> float:
        return float(self.standard_errors[self.terms.index("south_x_year")])

    @property
    def interaction_p(self) -> float:
        return float(self.p_values[self.terms.index("south_x_year")])

    def to_json_dict(self) -> dict:
        return {
            "terms": list(self.terms),
            "coefficients": [float(x) for x in self.coefficients],
            "standard_errors": [None if np.isnan(x) else float(x) for x in self.standard_errors],
            "p_values": [None if np.isnan(x) else float(x) for x in self.p_values],
            "omitted": list(self.omitted),
            "n_obs": self.n_obs,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")

    def format_table(self) -> str:
        lines = []
        for i, term in enumerate(self.terms):
            label = {
                "north": "North",
                "south": "South",
                "year": "Year",
                "north_x_year": "North x Year",
                "south_x_year": "South x Year",
                "const": "Constant",
            }[term]
            if term in self.omitted:
                lines.append(f"{label:<14}{0.0:>12.3f}")
                lines.append(f"{'':<14}{'(omitted)':>12}")
            else:
                coef = float(self.coefficients[i])
                stars = _stars(float(self.p_values[i]))
                lines.append(f"{label:<14}{coef:>12.3f}{stars}")
                lines.append(f"{'':<14}{'(' + format(float(self.standard_errors[i]), '.3f') + ')':>12}")
        lines.append("Robust standard errors in parentheses")
        lines.append("*** p<0.01, ** p<0.05, * p<0.1")
        return "\n".join(lines)


def parallel_trends_test(panel: PanelDataset, spec: DidSpec) -> TrendsTest:
    """Regress pre-period outcomes on group, linear year and their interaction.

    A flat, insignificant south x year interaction supports the common-trends
    assumption. Internally the year variable is shifted to start at zero for
    conditioning; reported coefficients are translated back to calendar-year
    parameterization.
    """
    pre_years = tuple(t for t in panel.years if t < spec.post_year)
    if len(pre_years) < 3:
        raise InsufficientPrePeriod(
            f"parallel-trends test needs at least 3 pre years, found {len(pre_years)}"
        )
    units, north_flag = _region_rows(panel, spec)
    rows = [panel.index(u) for u in units]
    cols = [panel.year_index(t) for t in pre_years]
    y = panel.outcome[np.ix_(rows, cols)].ravel()
    south = np.repeat(1.0 - north_flag, len(pre_years))
    year0 = pre_years[0]
    year_shift = np.tile(np.array(pre_years, dtype=float) - year0, len(units))
    unit_ids = np.repeat(np.array(units, dtype=object), len(pre_years))

    names = ["const", "south", "year", "south_x_year"]
    X = np.column_stack([np.ones(y.size), south, year_shift, south * year_shift])
    beta, se, p, cov, _r2, _df = _ols_robust(
        X,
        y,
        names,
        spec.se_type,
        unit_ids if spec.se_type == "cluster_by_unit" else None,
        spec.small_sample_t,
    )
    # Translate intercept and south back to raw calendar years; slopes and the
    # interaction are unchanged by the shift.
    const_raw = beta[0] - year0 * beta[2]
    south_raw = beta[1] - year0 * beta[3]
    var_const = cov[0, 0] + year0**2 * cov[2, 2] - 2 * year0 * cov[0, 2]
    var_south = cov[1, 1] + year0**2 * cov[3, 3] - 2 * year0 * cov[1, 3]
    se_const = math.sqrt(max(var_const, 0.0))
    se_south = math.sqrt(max(var_south, 0.0))

    def p_of(est: float, stderr: float) -> float:
        if stderr == 0:
            return 1.0 if est == 0 else 0.0
        t = abs(est / stderr)
        if spec.small_sample_t:
            return float(2.0 * stats.t.sf(t, df=y.size - X.shape[1]))
        return math.erfc(t / math.sqrt(2.0))

    terms = ("north", "south", "year", "north_x_year", "south_x_year", "const")
    coefficients = np.array([0.0, south_raw, beta[2], 0.0, beta[3], const_raw])
    ses = np.array([np.nan, se_south, se[2], np.nan, se[3], se_const])
    ps = np.array(
        [np.nan, p_of(south_raw, se_south), p[2], np.nan, p[3], p_of(const_raw, se_const)]
    )
    return TrendsTest(
        terms=terms,
        coefficients=coefficients,
        standard_errors=ses,
        p_values=ps,
        omitted=("north", "north_x_year"),
        n_obs=y.size,
    )


def did_placebo(
    panel: PanelDataset, spec: DidSpec, placebo_post_year: int = 2018
) -> DidFit:
    """Re-estimate with a fake treatment start, excluding the true post period.

    A significant placebo ATET signals that something other than the real
    treatment moves the two regions apart.
    """
    if placebo_post_year >= spec.post_year:
        raise DidError(
            f"placebo post year {placebo_post_year} must precede the true post year "
            f"{spec.post_year}"
        )
    years = tuple(t for t in panel.years if t < spec.post_year)
    if placebo_post_year <= years[0]:
        raise DidError(
            f"placebo post year {placebo_post_year} leaves no pre-period observations"
        )
    return _fit_window(panel, spec, years, placebo_post_year)
