"""Validity checks for synthetic control fits.

Three tools: the permutation envelope (donor-pool outcome extremes per year,
with containment checks for the border aggregates), in-time placebo refits
with an earlier fake treatment year, and the post/pre RMSPE ratio ranked
against placebo fits run on every donor.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InsufficientPrePeriod, NoDonors
from .panel import PanelDataset, _frozen_array
from .regions import AggregateSeries, aggregate_region
from .scm import PredictorSpec, ScmFit, ScmOptions, fit_scm


@dataclass(frozen=True)
class PermutationEnvelope:
    """Per-year outcome extremes over the donor pool, with attaining units."""

    years: tuple[int, ...]
    minimum: np.ndarray
    maximum: np.ndarray
    unit_at_min: tuple[str, ...]
    unit_at_max: tuple[str, ...]
    overlays: Mapping[str, np.ndarray]
    containment: Mapping[str, np.ndarray]

    def __post_init__(self):
        object.__setattr__(self, "minimum", _frozen_array(self.minimum))
        object.__setattr__(self, "maximum", _frozen_array(self.maximum))
        object.__setattr__(self, "overlays", {k: _frozen_array(v) for k, v in self.overlays.items()})
        object.__setattr__(
            self,
            "containment",
            {k: np.asarray(v, dtype=bool) for k, v in self.containment.items()},
        )

    def fully_contained(self, label: str) -> bool:
        return bool(np.all(self.containment[label]))

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("year", "min", "max", "unit_at_min", "unit_at_max"))
            for i, year in enumerate(self.years):
                writer.writerow(
                    (
                        year,
                        f"{self.minimum[i]:.6g}",
                        f"{self.maximum[i]:.6g}",
                        self.unit_at_min[i],
                        self.unit_at_max[i],
                    )
                )


def permutation_envelope(
    panel: PanelDataset,
    donor_ids: Sequence[str],
    aggregates: Sequence[AggregateSeries] = (),
) -> PermutationEnvelope:
    """Donor-pool outcome extremes per year, plus envelope containment flags.

    Ties on the extremes resolve to the lowest unit id so output is
    deterministic. Each aggregate in ``aggregates`` gets a per-year boolean
    vector marking whether its outcome lies inside [min, max].
    """
    donors = tuple(sorted(set(donor_ids)))
    if not donors:
        raise NoDonors("empty donor pool")
    rows = [panel.index(d) for d in donors]
    block = panel.outcome[rows]
    lo_idx = block.argmin(axis=0)
    hi_idx = block.argmax(axis=0)
    minimum = block.min(axis=0)
    maximum = block.max(axis=0)
    overlays = {}
    containment = {}
    for agg in aggregates:
        overlays[agg.label] = np.array(agg.outcome)
        containment[agg.label] = (agg.outcome >= minimum) & (agg.outcome <= maximum)
    return PermutationEnvelope(
        years=panel.years,
        minimum=minimum,
        maximum=maximum,
        unit_at_min=tuple(donors[i] for i in lo_idx),
        unit_at_max=tuple(donors[i] for i in hi_idx),
        overlays=overlays,
        containment=containment,
    )


@dataclass(frozen=True)
class PlaceboFit:
    """A synthetic control refit under a fake earlier treatment year.

    ``window_years`` are the true pre-treatment years after the placebo year;
    ``max_abs_gap`` summarizes the largest absolute gap inside that window
    (0.0 when the window is empty, i.e. the placebo year equals the true
    last pre-treatment year).
    """

    fit: ScmFit
    placebo_year: int
    window_years: tuple[int, ...]
    max_abs_gap: float

    def to_json_dict(self) -> dict:
        payload = self.fit.to_json_dict()
        payload["placebo_year"] = self.placebo_year
        payload["window_years"] = list(self.window_years)
        payload["max_abs_gap"] = self.max_abs_gap
        return payload

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")


def in_time_placebo(
    panel: PanelDataset,
    treated: AggregateSeries,
    donors: Sequence[str],
    spec: PredictorSpec = PredictorSpec(),
    pre_period: tuple[int, int] = (2016, 2020),
    post_period: tuple[int, int] = (2021, 2022),
    placebo_year: int = 2018,
    options: ScmOptions = ScmOptions(),
) -> PlaceboFit:
    """Refit pretending treatment started right after ``placebo_year``.

    The placebo pre period runs from the true pre start through
    ``placebo_year`` and outcome-lag predictors are restricted to years at or
    before it. With ``placebo_year`` equal to the true last pre-treatment
    year this reproduces the ordinary fit exactly.
    """
    if placebo_year < pre_period[0] + 1:
        raise InsufficientPrePeriod(
            f"placebo year {placebo_year} leaves fewer than two pre-treatment years"
        )
    if placebo_year > pre_period[1]:
        raise InsufficientPrePeriod(
            f"placebo year {placebo_year} is not inside the true pre period {pre_period}"
        )
    lag_years = tuple(y for y in spec.outcome_lag_years if y <= placebo_year)
    if not lag_years and spec.outcome_lag_years:
        raise InsufficientPrePeriod(
            f"no outcome-lag predictors at or before placebo year {placebo_year}"
        )
    placebo_spec = PredictorSpec(
        outcome_lag_years=lag_years,
        covariate_names=spec.covariate_names,
        covariate_summary=spec.covariate_summary,
        normalization=spec.normalization,
    )
    fit = fit_scm(
        panel,
        treated,
        donors,
        placebo_spec,
        pre_period=(pre_period[0], placebo_year),
        post_period=(placebo_year + 1, post_period[1]),
        options=options,
    )
    window = tuple(range(placebo_year + 1, pre_period[1] + 1))
    if window:
        gaps = np.array([fit.gap_at(y) for y in window])
        max_abs = float(np.max(np.abs(gaps)))
    else:
        max_abs = 0.0
    return PlaceboFit(fit=fit, placebo_year=placebo_year, window_years=window, max_abs_gap=max_abs)


def donor_pool_placebos(
    panel: PanelDataset,
    donors: Sequence[str],
    spec: PredictorSpec = PredictorSpec(),
    pre_period: tuple[int, int] = (2016, 2020),
    post_period: tuple[int, int] = (2021, 2022),
    options: ScmOptions = ScmOptions(),
) -> tuple[ScmFit, ...]:
    """Fit each donor as if it were treated, against the remaining donors.

    Fits are returned ordered by donor id, so downstream ranking is
    deterministic no matter how callers parallelize.
    """
    donor_ids = tuple(sorted(set(donors)))
    if len(donor_ids) < 2:
        raise NoDonors("donor placebo fits need at least two donors")
    fits = []
    for uid in donor_ids:
        pseudo_treated = aggregate_region(panel, {uid}, label=uid)
        rest = tuple(d for d in donor_ids if d != uid)
        fits.append(
            fit_scm(panel, pseudo_treated, rest, spec, pre_period, post_period, options)
        )
    return tuple(fits)


@dataclass(frozen=True)
class RatioTest:
    """Post/pre RMSPE ratio of the treated fit ranked among donor placebo ratios."""

    ratio: float
    pseudo_p: float
    rank: int
    donor_labels: tuple[str, ...]
    donor_ratios: tuple[float, ...]
    dropped_donors: tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "pseudo_p": self.pseudo_p,
            "rank": self.rank,
            "donors": [
                {"label": u, "ratio": r} for u, r in zip(self.donor_labels, self.donor_ratios)
            ],
            "dropped_donors": list(self.dropped_donors),
        }


def rmspe_ratio_test(
    fit: ScmFit,
    placebo_fits: Sequence[ScmFit],
    max_pre_rmspe_ratio: float | None = None,
) -> RatioTest:
    """Rank the treated RMSPE ratio against donor placebo ratios.

    The pseudo p-value is rank / (number of placebo fits + 1), where rank 1
    means the treated ratio is the most extreme. A zero pre-period RMSPE
    yields an infinite ratio, which sorts above every finite ratio; ties
    count against the treated unit. ``max_pre_rmspe_ratio`` optionally drops
    donors whose pre-period fit is worse than that multiple of the treated
    fit's (a poorly fitted donor says little about effect sizes).
    """
    kept = list(placebo_fits)
    dropped: list[str] = []
    if max_pre_rmspe_ratio is not None and fit.rmspe_pre > 0:
        cutoff = max_pre_rmspe_ratio * fit.rmspe_pre
        dropped = [p.treated_label for p in kept if p.rmspe_pre > cutoff]
        kept = [p for p in kept if p.rmspe_pre <= cutoff]
    if not kept:
        raise NoDonors("no donor placebo fits left to rank against")
    ratio = fit.rmspe_ratio
    donor_ratios = np.array([p.rmspe_ratio for p in kept])
    rank = 1 + int(np.sum(donor_ratios >= ratio))
    return RatioTest(
        ratio=float(ratio),
        pseudo_p=rank / (len(kept) + 1),
        rank=rank,
        donor_labels=tuple(p.treated_label for p in kept),
        donor_ratios=tuple(float(r) for r in donor_ratios),
        dropped_donors=tuple(dropped),
    )
