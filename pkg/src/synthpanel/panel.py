"""Balanced municipality-year panel: data model, CSV ingestion, derived variables.

The central object is :class:`PanelDataset`, an immutable unit-by-year grid of
one outcome (installed PV capacity per capita, kW) and named covariates.
Ingestion reads long-form CSV files, enforces balance, and applies the
standard transformations: per-capita conversion, percent-to-fraction
conversion, regional broadcast, and backward lagging of time-variant
controls.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateRow,
    InsufficientHistory,
    MissingCell,
    NonContiguousYears,
    PanelError,
    UnknownUnit,
    UnknownVariable,
    UnknownZoneLabel,
    YearOutOfRange,
    ZeroMinimumMonth,
)

ZONES = ("SE1", "SE2", "SE3", "SE4")
SPLIT_ZONE = "SPLIT"
VALID_ZONES = ZONES + (SPLIT_ZONE,)

OUTCOME = "outcome"

# Covariates measured yearly are lagged one year at ingestion so that controls
# predate the outcome they explain; radiation summaries are fixed per unit.
TIME_VARIANT_COVARIATES = ("disposable_income", "unemployment", "small_house_share")
TIME_FIXED_COVARIATES = ("avg_radiation", "radiation_variation")
STANDARD_COVARIATES = TIME_VARIANT_COVARIATES + TIME_FIXED_COVARIATES


@dataclass(frozen=True)
class UnitMeta:
    """Identity and bidding-zone assignment of one municipality."""

    unit_id: str
    name: str
    zone: str

    def __post_init__(self):
        if self.zone not in VALID_ZONES:
            raise UnknownZoneLabel(
                f"unknown zone {self.zone!r} for unit {self.unit_id!r}; "
                f"expected one of {', '.join(VALID_ZONES)}"
            )


@dataclass(frozen=True)
class IngestConfig:
    """Options controlling CSV ingestion.

    percent_columns: covariates stored as percent in the files, divided by
        100 at load so all shares live in [0, 1].
    lag_years: backward lag applied to time-variant covariates; the source
        files must extend that many years before the first outcome year.
    population_file: optional unit,year,value CSV; when given the outcome
        file is read as raw capacity and divided by same-year population.
    radiation_window: inclusive year range of the daily-radiation reference
        period used by :func:`radiation_stats`.
    """

    percent_columns: tuple[str, ...] = ()
    lag_years: int = 0
    population_file: str | None = None
    radiation_window: tuple[int, int] = (2010, 2015)


def load_ingest_config(path: str | Path) -> IngestConfig:
    """Read an :class:`IngestConfig` from a JSON file."""
    raw = json.loads(Path(path).read_text())
    known = {"percent_columns", "lag_years", "population_file", "radiation_window"}
    unknown = set(raw) - known
    if unknown:
        raise PanelError(f"unknown ingest config keys: {sorted(unknown)}")
    return IngestConfig(
        percent_columns=tuple(raw.get("percent_columns", ())),
        lag_years=int(raw.get("lag_years", 0)),
        population_file=raw.get("population_file"),
        radiation_window=tuple(raw.get("radiation_window", (2010, 2015))),
    )


def _frozen_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PanelDataset:
    """Immutable balanced panel of outcome and covariates.

    ``outcome`` and each covariate are (n_units, n_years) float arrays whose
    rows follow ``units`` and columns follow ``years``. Arrays are marked
    read-only; all transformations return new datasets.
    """

    units: tuple[UnitMeta, ...]
    years: tuple[int, ...]
    outcome: np.ndarray
    covariates: Mapping[str, np.ndarray]
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))
        object.__setattr__(self, "outcome", _frozen_array(self.outcome))
        object.__setattr__(
            self, "covariates", {k: _frozen_array(v) for k, v in self.covariates.items()}
        )
        object.__setattr__(self, "provenance", tuple(self.provenance))
        object.__setattr__(
            self, "_index", {u.unit_id: i for i, u in enumerate(self.units)}
        )
        self._validate()

    # -- validation ----------------------------------------------------------

    def _validate(self) -> None:
        if len(self._index) != len(self.units):
            seen, dups = set(), set()
            for u in self.units:
                (dups if u.unit_id in seen else seen).add(u.unit_id)
            raise DuplicateRow(f"duplicate unit ids: {sorted(dups)}")
        if not self.years:
            raise PanelError("panel must cover at least one year")
        expected = tuple(range(self.years[0], self.years[0] + len(self.years)))
        if self.years != expected:
            raise NonContiguousYears(f"years {self.years} are not a contiguous range")
        shape = (len(self.units), len(self.years))
        if self.outcome.shape != shape:
            raise PanelError(f"outcome shape {self.outcome.shape} != units x years {shape}")
        if not np.all(np.isfinite(self.outcome)):
            cells = self._nan_cells(self.outcome, OUTCOME)
            raise MissingCell(cells)
        if np.any(self.outcome < 0):
            u, t = np.argwhere(self.outcome < 0)[0]
            raise PanelError(
                f"negative outcome {self.outcome[u, t]} at "
                f"({self.units[u].unit_id}, {self.years[t]})"
            )
        for name, mat in self.covariates.items():
            if mat.shape != shape:
                raise PanelError(f"covariate {name!r} shape {mat.shape} != {shape}")
            if not np.all(np.isfinite(mat)):
                raise MissingCell(self._nan_cells(mat, name))
        for name in TIME_FIXED_COVARIATES:
            mat = self.covariates.get(name)
            if mat is None:
                continue
            if not np.all(mat == mat[:, :1]):
                bad = int(np.argwhere(np.any(mat != mat[:, :1], axis=1))[0][0])
                raise PanelError(
                    f"{name} varies over years for unit {self.units[bad].unit_id}"
                )
        variation = self.covariates.get("radiation_variation")
        if variation is not None and np.any(variation < 1.0):
            bad = int(np.argwhere(np.any(variation < 1.0, axis=1))[0][0])
            raise PanelError(
                f"radiation_variation < 1 for unit {self.units[bad].unit_id}"
            )

    def _nan_cells(self, mat: np.ndarray, name: str):
        return [
            (self.units[u].unit_id, self.years[t], name)
            for u, t in np.argwhere(~np.isfinite(mat))
        ]

    # -- lookups ---------------------------------------------------------------

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_years(self) -> int:
        return len(self.years)

    @property
    def unit_ids(self) -> tuple[str, ...]:
        return tuple(u.unit_id for u in self.units)

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return tuple(self.covariates)

    def index(self, unit_id: str) -> int:
        try:
            return self._index[unit_id]
        except KeyError:
            raise UnknownUnit(f"unknown unit {unit_id!r}") from None

    def year_index(self, year: int) -> int:
        if year not in self.years:
            raise YearOutOfRange(f"year {year} outside panel range {self.years[0]}-{self.years[-1]}")
        return year - self.years[0]

    def zone_of(self, unit_id: str) -> str:
        return self.units[self.index(unit_id)].zone

    def units_in_zones(self, zones: Iterable[str]) -> tuple[str, ...]:
        wanted = set(zones)
        return tuple(u.unit_id for u in self.units if u.zone in wanted)

    @property
    def split_units(self) -> tuple[str, ...]:
        return self.units_in_zones((SPLIT_ZONE,))

    def variable(self, name: str) -> np.ndarray:
        if name == OUTCOME:
            return self.outcome
        try:
            return self.covariates[name]
        except KeyError:
            raise UnknownVariable(f"unknown variable {name!r}") from None

    def series(self, name: str, unit_id: str) -> np.ndarray:
        return self.variable(name)[self.index(unit_id)]

    def equal_values(self, other: "PanelDataset") -> bool:
        """Bit-exact equality of units, years and every numeric cell."""
        return (
            self.units == other.units
            and self.years == other.years
            and np.array_equal(self.outcome, other.outcome)
            and set(self.covariates) == set(other.covariates)
            and all(np.array_equal(m, other.covariates[k]) for k, m in self.covariates.items())
        )


# --- ingestion ---------------------------------------------------------------


def _read_rows(path: str | Path, columns: Sequence[str]):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if list(header) != list(columns):
            raise PanelError(
                f"{path}: expected header {','.join(columns)}, got {','.join(header)}"
            )
        for row in reader:
            yield row


def _read_unit_year_values(path: str | Path, what: str) -> dict[tuple[str, int], float]:
    values: dict[tuple[str, int], float] = {}
    for row in _read_rows(path, ("unit_id", "year", "value")):
        key = (row["unit_id"], int(row["year"]))
        if key in values:
            raise DuplicateRow(f"{what}: duplicate row for ({key[0]}, {key[1]})")
        values[key] = float(row["value"])
    return values


def load_meta(path: str | Path) -> tuple[UnitMeta, ...]:
    units: list[UnitMeta] = []
    seen: set[str] = set()
    for row in _read_rows(path, ("unit_id", "name", "zone")):
        if row["unit_id"] in seen:
            raise DuplicateRow(f"meta: duplicate unit {row['unit_id']!r}")
        seen.add(row["unit_id"])
        units.append(UnitMeta(row["unit_id"], row["name"], row["zone"]))
    return tuple(units)


def load_region_map(path: str | Path) -> dict[str, tuple[str, ...]]:
    """Read a region_id,unit_id CSV into region -> member units."""
    members: dict[str, list[str]] = {}
    seen: set[tuple[str, str]] = set()
    for row in _read_rows(path, ("region_id", "unit_id")):
        key = (row["region_id"], row["unit_id"])
        if key in seen:
            raise DuplicateRow(f"region map: duplicate row {key}")
        seen.add(key)
        members.setdefault(row["region_id"], []).append(row["unit_id"])
    return {k: tuple(v) for k, v in members.items()}


def load_panel(
    outcome_file: str | Path,
    covariate_files: Sequence[str | Path],
    meta_file: str | Path,
    config: IngestConfig = IngestConfig(),
    region_map_file: str | Path | None = None,
) -> PanelDataset:
    """Assemble and validate a balanced panel from long-form CSV files.

    The year range of the panel is taken from the outcome file. Time-variant
    covariates at year t are filled from source year t - lag_years; the
    covariate files must therefore reach back accordingly. Covariate rows
    keyed by a region id from ``region_map_file`` are broadcast to all member
    units (regional unemployment, for instance).
    """
    units = load_meta(meta_file)
    unit_ids = [u.unit_id for u in units]
    unit_set = set(unit_ids)

    outcome_cells = _read_unit_year_values(outcome_file, OUTCOME)
    for uid, _year in outcome_cells:
        if uid not in unit_set:
            raise UnknownUnit(f"outcome file: unit {uid!r} not in meta file")
    years_present = sorted({y for _, y in outcome_cells})
    if not years_present:
        raise PanelError("outcome file contains no rows")
    years = tuple(range(years_present[0], years_present[-1] + 1))
    if list(years) != years_present:
        missing = sorted(set(years) - set(years_present))
        raise NonContiguousYears(f"outcome years skip {missing}")

    if config.population_file is not None:
        population = _read_unit_year_values(config.population_file, "population")
        divided: dict[tuple[str, int], float] = {}
        missing_pop = [
            (uid, year, "population")
            for (uid, year) in outcome_cells
            if (uid, year) not in population
        ]
        if missing_pop:
            raise MissingCell(sorted(missing_pop))
        for key, capacity in outcome_cells.items():
            divided[key] = capacity / population[key]
        outcome_cells = divided

    region_map = load_region_map(region_map_file) if region_map_file else {}

    covariate_cells: dict[str, dict[tuple[str, int], float]] = {}
    for path in covariate_files:
        for row in _read_rows(path, ("unit_id", "year", "variable", "value")):
            name = row["variable"]
            year = int(row["year"])
            value = float(row["value"])
            per_var = covariate_cells.setdefault(name, {})
            if row["unit_id"] in region_map:
                targets = region_map[row["unit_id"]]
            else:
                targets = (row["unit_id"],)
            for uid in targets:
                if uid not in unit_set:
                    raise UnknownUnit(f"{path}: unit {uid!r} not in meta file")
                if (uid, year) in per_var:
                    raise DuplicateRow(
                        f"covariate {name!r}: duplicate value for ({uid}, {year})"
                    )
                per_var[(uid, year)] = value

    outcome = np.full((len(units), len(years)), np.nan)
    missing: list[tuple[str, int, str]] = []
    for i, uid in enumerate(unit_ids):
        for j, year in enumerate(years):
            cell = outcome_cells.get((uid, year))
            if cell is None:
                missing.append((uid, year, OUTCOME))
            else:
                outcome[i, j] = cell

    covariates: dict[str, np.ndarray] = {}
    for name, cells in sorted(covariate_cells.items()):
        lag = config.lag_years if name in TIME_VARIANT_COVARIATES else 0
        mat = np.full((len(units), len(years)), np.nan)
        scale = 0.01 if name in config.percent_columns else 1.0
        for i, uid in enumerate(unit_ids):
            for j, year in enumerate(years):
                cell = cells.get((uid, year - lag))
                if cell is None:
                    missing.append((uid, year - lag, name))
                else:
                    mat[i, j] = cell * scale
        covariates[name] = mat

    if missing:
        raise MissingCell(sorted(missing, key=lambda c: (c[2], c[0], c[1])))

    provenance = []
    if config.lag_years:
        provenance.append(f"time-variant covariates lagged by {config.lag_years} year(s) at load")
    if config.population_file:
        provenance.append("outcome converted to per-capita using same-year population")
    return PanelDataset(units, years, outcome, covariates, tuple(provenance))


def save_panel(panel: PanelDataset, directory: str | Path) -> dict[str, Path]:
    """Write meta/outcome/covariate CSV files that round-trip bit-identically.

    Values are serialized with ``repr`` so every float survives a reload
    exactly. Covariates are written as already lagged, so the files reload
    with ``lag_years = 0``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "meta": directory / "meta.csv",
        "outcome": directory / "outcome.csv",
        "covariates": directory / "covariates.csv",
    }
    with paths["meta"].open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("unit_id", "name", "zone"))
        for u in panel.units:
            writer.writerow((u.unit_id, u.name, u.zone))
    with paths["outcome"].open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("unit_id", "year", "value"))
        for i, uid in enumerate(panel.unit_ids):
            for j, year in enumerate(panel.years):
                writer.writerow((uid, year, repr(float(panel.outcome[i, j]))))
    with paths["covariates"].open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("unit_id", "year", "variable", "value"))
        for name in panel.covariate_names:
            mat = panel.covariates[name]
            for i, uid in enumerate(panel.unit_ids):
                for j, year in enumerate(panel.years):
                    writer.writerow((uid, year, name, repr(float(mat[i, j]))))
    return paths


# --- derived variables --------------------------------------------------------


def lag_covariates(
    panel: PanelDataset,
    lag: int = 1,
    time_variant: Sequence[str] | None = None,
) -> PanelDataset:
    """Shift time-variant covariates backward by ``lag`` years.

    The output panel drops the ``lag`` earliest years (or latest, for a
    negative lag): covariate values at year t come from source year t - lag,
    while the outcome and time-fixed covariates keep their own years.
    """
    if lag == 0:
        return panel
    if abs(lag) >= panel.n_years:
        raise InsufficientHistory(
            f"cannot lag by {lag} with only {panel.n_years} year(s) of data"
        )
    if time_variant is None:
        names = tuple(n for n in TIME_VARIANT_COVARIATES if n in panel.covariates)
    else:
        for n in time_variant:
            if n not in panel.covariates:
                raise UnknownVariable(f"unknown covariate {n!r}")
        names = tuple(time_variant)

    n = panel.n_years
    if lag > 0:
        keep = slice(lag, n)
        source = slice(0, n - lag)
    else:
        keep = slice(0, n + lag)
        source = slice(-lag, n)
    years = panel.years[keep]
    covariates = {}
    for name, mat in panel.covariates.items():
        covariates[name] = mat[:, source] if name in names else mat[:, keep]
    return PanelDataset(
        panel.units,
        years,
        panel.outcome[:, keep],
        covariates,
        panel.provenance + (f"lag_covariates(lag={lag})",),
    )


@dataclass(frozen=True)
class DailyRadiationSeries:
    """Daily global radiation observations for one unit."""

    unit_id: str
    dates: tuple[dt.date, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "values", _frozen_array(self.values))
        if len(self.dates) != self.values.size:
            raise PanelError("dates and values differ in length")
        if np.any(self.values < 0):
            raise PanelError(f"negative radiation value for unit {self.unit_id}")


def radiation_stats(
    series: DailyRadiationSeries,
    window: tuple[int, int] = (2010, 2015),
) -> tuple[float, float]:
    """Summarize a daily radiation series into (average, seasonal variation).

    The average is the mean of all daily values inside the reference window.
    Variation is computed from twelve calendar-month averages: daily values
    are first averaged within each (year, month), each calendar month is then
    averaged across years, and the largest monthly average is divided by the
    smallest. A constant series therefore yields a variation of exactly 1.
    """
    lo, hi = window
    mask = np.array([lo <= d.year <= hi for d in series.dates], dtype=bool)
    if not mask.any():
        raise PanelError(
            f"unit {series.unit_id}: no radiation observations in window {lo}-{hi}"
        )
    values = series.values[mask]
    dates = [d for d, m in zip(series.dates, mask) if m]

    by_year_month: dict[tuple[int, int], list[float]] = {}
    for d, v in zip(dates, values):
        by_year_month.setdefault((d.year, d.month), []).append(float(v))
    by_month: dict[int, list[float]] = {}
    for (year, month), vals in by_year_month.items():
        by_month.setdefault(month, []).append(float(np.mean(vals)))
    absent = sorted(set(range(1, 13)) - set(by_month))
    if absent:
        raise PanelError(
            f"unit {series.unit_id}: no observations for month(s) {absent} in window"
        )
    monthly = np.array([np.mean(by_month[m]) for m in range(1, 13)])
    low = float(monthly.min())
    if low == 0.0:
        raise ZeroMinimumMonth(
            f"unit {series.unit_id}: minimum monthly radiation average is zero"
        )
    return float(values.mean()), float(monthly.max() / low)


def impute_carry_forward(
    panel: PanelDataset,
    variable: str,
    unit_or_region: str | Iterable[str],
    from_year: int,
    value: float,
) -> PanelDataset:
    """Hold ``variable`` constant at ``value`` for all years after ``from_year``.

    ``unit_or_region`` is a single unit id or an iterable of them (for a
    region, pass its member units). The imputation is recorded in the panel
    provenance; reapplying identical arguments is a no-op.
    """
    if isinstance(unit_or_region, str):
        unit_ids: tuple[str, ...] = (unit_or_region,)
    else:
        unit_ids = tuple(unit_or_region)
    mat = panel.variable(variable)  # raises UnknownVariable
    j0 = panel.year_index(from_year)  # raises YearOutOfRange
    rows = [panel.index(uid) for uid in unit_ids]

    note = (
        f"impute_carry_forward({variable}, {','.join(unit_ids)}, "
        f"from_year={from_year}, value={value!r})"
    )
    new = np.array(mat)
    new[rows, j0 + 1 :] = value
    provenance = panel.provenance if note in panel.provenance else panel.provenance + (note,)
    if variable == OUTCOME:
        return replace(panel, outcome=new, provenance=provenance)
    covariates = dict(panel.covariates)
    covariates[variable] = new
    return replace(panel, covariates=covariates, provenance=provenance)


@dataclass(frozen=True)
class VariableStats:
    variable: str
    count: int
    mean: float
    std: float
    minimum: float
    maximum: float


def descriptive_stats(panel: PanelDataset) -> dict[str, VariableStats]:
    """Per-variable count/mean/std/min/max over all (unit, year) cells.

    The standard deviation uses the sample (n-1) convention and is reported
    as 0 when only a single cell exists; the count column flags that case.
    """
    out: dict[str, VariableStats] = {}
    for name in (OUTCOME,) + panel.covariate_names:
        mat = panel.variable(name)
        flat = mat.ravel()
        std = float(flat.std(ddof=1)) if flat.size > 1 else 0.0
        out[name] = VariableStats(
            variable=name,
            count=int(flat.size),
            mean=float(flat.mean()),
            std=std,
            minimum=float(flat.min()),
            maximum=float(flat.max()),
        )
    return out
