"""Calibrated synthetic panels with known ground truth.

The generator lays municipalities out on a grid or a random planar map, bands
them into bidding zones from north to south with SPLIT units straddling the
boundary, draws covariates with a mild latitude gradient, and grows per-unit
outcomes exponentially so the national aggregate rises roughly seventeenfold
over seven years. Planted treatment effects are additive shifts on the
northern border units from a chosen post year, recorded verbatim in a truth
file so estimator-recovery tests have an exact oracle.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import InvalidSpec
from .panel import PanelDataset, UnitMeta
from .regions import AdjacencyGraph, border_sets_from_zones, save_adjacency

GRID = "grid"
RANDOM_PLANAR = "random_planar"
EXPONENTIAL = "exponential"
ADDITIVE = "additive"


def _default_zone_counts() -> dict[str, int]:
    # Sweden-shaped: 234 high-tariff donor municipalities, 49 northern, 7 split.
    return {"SE1": 20, "SE2": 29, "SE3": 160, "SE4": 74}


def _default_planted() -> dict[int, float]:
    return {2021: -0.04, 2022: -0.09}


@dataclass(frozen=True)
class GeneratorSpec:
    """Layout, outcome model and treatment plan for one synthetic panel."""

    zone_counts: Mapping[str, int] = field(default_factory=_default_zone_counts)
    split_count: int = 7
    years: tuple[int, int] = (2016, 2022)
    topology: str = GRID
    growth_model: str = EXPONENTIAL
    growth_rate: float = 17.0 ** (1.0 / 6.0)
    outcome_mean: float = 0.105
    intercept_sigma: float = 0.45
    noise_sigma: float = 0.0105
    radiation_mean: float = 1240.0
    radiation_sigma: float = 70.0
    radiation_gradient: float = 110.0
    income_mean: float = 210_002.0
    income_sigma: float = 22_000.0
    income_trend: float = 1_500.0
    radiation_loading: float = 0.25
    income_loading: float = 0.10
    house_loading: float = 0.15
    planted_effects: Mapping[int, float] = field(default_factory=_default_planted)
    post_year: int = 2021
    treated_depth: int = 1
    boundary: tuple[str, str] = ("SE2", "SE3")
    seed: int = 20230915

    def __post_init__(self):
        object.__setattr__(self, "zone_counts", dict(self.zone_counts))
        object.__setattr__(
            self, "planted_effects", {int(k): float(v) for k, v in self.planted_effects.items()}
        )
        object.__setattr__(self, "years", (int(self.years[0]), int(self.years[1])))
        object.__setattr__(self, "boundary", tuple(self.boundary))
        if any(c < 0 for c in self.zone_counts.values()) or self.split_count < 0:
            raise InvalidSpec("zone counts must be non-negative")
        if self.n_units < 1:
            raise InvalidSpec("spec produces no units")
        if self.years[0] > self.years[1]:
            raise InvalidSpec(f"invalid year range {self.years}")
        if self.topology not in (GRID, RANDOM_PLANAR):
            raise InvalidSpec(f"unknown topology {self.topology!r}")
        if self.growth_model not in (EXPONENTIAL, ADDITIVE):
            raise InvalidSpec(f"unknown growth model {self.growth_model!r}")
        if self.noise_sigma < 0 or self.intercept_sigma < 0:
            raise InvalidSpec("noise and intercept spreads must be non-negative")
        if self.growth_rate <= 0:
            raise InvalidSpec("growth rate must be positive")
        for year, effect in self.planted_effects.items():
            if year < self.post_year:
                raise InvalidSpec(
                    f"planted effect in {year} precedes post year {self.post_year}"
                )
            if not self.years[0] <= year <= self.years[1]:
                raise InvalidSpec(f"planted effect year {year} outside panel range")

    @property
    def n_units(self) -> int:
        return sum(self.zone_counts.values()) + self.split_count

    @property
    def n_years(self) -> int:
        return self.years[1] - self.years[0] + 1

    def to_json_dict(self) -> dict:
        return {
            "zone_counts": dict(self.zone_counts),
            "split_count": self.split_count,
            "years": list(self.years),
            "topology": self.topology,
            "growth_model": self.growth_model,
            "growth_rate": self.growth_rate,
            "outcome_mean": self.outcome_mean,
            "intercept_sigma": self.intercept_sigma,
            "noise_sigma": self.noise_sigma,
            "radiation_mean": self.radiation_mean,
            "radiation_sigma": self.radiation_sigma,
            "radiation_gradient": self.radiation_gradient,
            "income_mean": self.income_mean,
            "income_sigma": self.income_sigma,
            "income_trend": self.income_trend,
            "radiation_loading": self.radiation_loading,
            "income_loading": self.income_loading,
            "house_loading": self.house_loading,
            "planted_effects": {str(k): v for k, v in sorted(self.planted_effects.items())},
            "post_year": self.post_year,
            "treated_depth": self.treated_depth,
            "boundary": list(self.boundary),
            "seed": self.seed,
        }


def spec_from_json_dict(raw: Mapping) -> GeneratorSpec:
    kwargs = dict(raw)
    if "planted_effects" in kwargs:
        kwargs["planted_effects"] = {int(k): float(v) for k, v in kwargs["planted_effects"].items()}
    for key in ("years", "boundary"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    known = set(GeneratorSpec.__dataclass_fields__)
    unknown = set(kwargs) - known
    if unknown:
        raise InvalidSpec(f"unknown generator spec keys: {sorted(unknown)}")
    return GeneratorSpec(**kwargs)


@dataclass(frozen=True)
class TruthRecord:
    """Planted treatment effects, unit by unit and year by year."""

    post_year: int
    treated_units: tuple[str, ...]
    effects: Mapping[int, float]

    def __post_init__(self):
        object.__setattr__(self, "treated_units", tuple(self.treated_units))
        object.__setattr__(self, "effects", dict(self.effects))

    def effect_at(self, year: int) -> float:
        return self.effects.get(year, 0.0)

    @property
    def unit_effects(self) -> dict[str, dict[int, float]]:
        return {u: dict(self.effects) for u in self.treated_units}

    def to_json_dict(self) -> dict:
        return {
            "post_year": self.post_year,
            "treated_units": list(self.treated_units),
            "effects": {str(k): v for k, v in sorted(self.effects.items())},
            "unit_effects": {
                u: {str(k): v for k, v in sorted(eff.items())}
                for u, eff in self.unit_effects.items()
            },
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class GeneratedData:
    """Generated panel, graph and truth, plus the unlagged covariate sources.

    ``raw_covariates`` keep the time-variant covariates over ``raw_years``
    (one year before the panel starts) so :func:`write_dataset` can emit
    files that reload with a one-year lag.
    """

    panel: PanelDataset
    graph: AdjacencyGraph
    truth: TruthRecord
    raw_covariates: Mapping[str, np.ndarray] = field(default_factory=dict)
    raw_years: tuple[int, ...] = ()

    def __iter__(self):
        return iter((self.panel, self.graph, self.truth))


def _zone_sequence(spec: GeneratorSpec) -> list[str]:
    seq: list[str] = []
    seq += ["SE1"] * spec.zone_counts.get("SE1", 0)
    seq += ["SE2"] * spec.zone_counts.get("SE2", 0)
    seq += ["SPLIT"] * spec.split_count
    seq += ["SE3"] * spec.zone_counts.get("SE3", 0)
    seq += ["SE4"] * spec.zone_counts.get("SE4", 0)
    return seq


def _grid_layout(n: int) -> tuple[list[tuple[str, str]], np.ndarray, list[str]]:
    width = max(3, len(str(n)))
    ids = [f"M{i + 1:0{width}d}" for i in range(n)]
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    edges = []
    for i in range(n):
        r, c = divmod(i, cols)
        if c + 1 < cols and i + 1 < n:
            edges.append((ids[i], ids[i + 1]))
        if i + cols < n:
            edges.append((ids[i], ids[i + cols]))
    lat = np.array([divmod(i, cols)[0] for i in range(n)], dtype=float)
    lat /= max(rows - 1, 1)
    return edges, lat, ids


def _planar_layout(n: int, rng: np.random.Generator):
    from scipy.spatial import Delaunay

    if n < 4:
        raise InvalidSpec("random_planar topology needs at least 4 units")
    width = max(3, len(str(n)))
    ids = [f"M{i + 1:0{width}d}" for i in range(n)]
    points = rng.random((n, 2))
    order = np.argsort(-points[:, 1], kind="stable")  # north (high y) first
    points = points[order]
    tri = Delaunay(points)
    edge_set = set()
    for simplex in tri.simplices:
        for a in range(3):
            for b in range(a + 1, 3):
                i, j = int(simplex[a]), int(simplex[b])
                edge_set.add((min(i, j), max(i, j)))
    edges = [(ids[i], ids[j]) for i, j in sorted(edge_set)]
    lat = 1.0 - points[:, 1]
    lat = (lat - lat.min()) / max(lat.max() - lat.min(), 1e-12)
    return edges, lat, ids


def _zscore(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    return (x - x.mean()) / sd if sd > 0 else np.zeros_like(x)


def generate(spec: GeneratorSpec = GeneratorSpec()) -> GeneratedData:
    """Draw one synthetic panel, its adjacency graph and the planted truth.

    Deterministic given ``spec.seed``: the same spec reproduces every byte.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_units
    t_count = spec.n_years
    years = tuple(range(spec.years[0], spec.years[1] + 1))
    zones_seq = _zone_sequence(spec)

    if spec.topology == GRID:
        edges, lat, ids = _grid_layout(n)
    else:
        edges, lat, ids = _planar_layout(n, rng)
    zones = dict(zip(ids, zones_seq))
    units = tuple(UnitMeta(uid, f"Municipality-{uid[1:]}", zones[uid]) for uid in ids)
    graph = AdjacencyGraph(tuple(ids), tuple(edges))

    # unit-level covariate bases (radiation fixed, others drift by year)
    radiation = spec.radiation_mean + spec.radiation_gradient * (lat - lat.mean())
    radiation = radiation + rng.normal(0.0, spec.radiation_sigma, n)
    radiation = np.clip(radiation, 931.0, 1437.0)
    variation = 15.0 + rng.lognormal(math.log(14.0), 0.45, n) * (1.0 + 1.8 * (1.0 - lat))

    raw_years = (spec.years[0] - 1,) + years  # one back year so ingestion can lag
    n_raw = len(raw_years)
    k_mean = (n_raw - 1) / 2.0
    income_base = rng.normal(spec.income_mean - spec.income_trend * k_mean, spec.income_sigma, n)
    income_raw = (
        income_base[:, None]
        + spec.income_trend * np.arange(n_raw)[None, :]
        + rng.normal(0.0, 2_000.0, (n, n_raw))
    )
    income_raw = np.clip(income_raw, 150_000.0, None)

    unemp_base = rng.normal(0.07, 0.013, n) + 0.008 * (1.0 - lat)
    unemp_raw = np.clip(unemp_base[:, None] + rng.normal(0.0, 0.004, (n, n_raw)), 0.035, 0.125)

    house_base = np.clip(rng.normal(0.62, 0.15, n), 0.05, 0.92)
    house_raw = np.clip(house_base[:, None] + rng.normal(0.0, 0.004, (n, n_raw)), 0.01, 0.95)

    # planted effects land on the northern border units
    if spec.planted_effects:
        regions = border_sets_from_zones(
            graph.neighbors(), zones, spec.boundary, max_depth=spec.treated_depth
        )
        treated_units = tuple(sorted(regions.north[spec.treated_depth - 1]))
    else:
        treated_units = ()
    planted = np.zeros((n, t_count))
    index = {uid: i for i, uid in enumerate(ids)}
    for uid in treated_units:
        for year, effect in spec.planted_effects.items():
            planted[index[uid], year - spec.years[0]] += effect
    planted_mean = planted.sum() / (n * t_count)

    log_a = (
        spec.radiation_loading * _zscore(radiation)
        + spec.income_loading * _zscore(income_base)
        + spec.house_loading * _zscore(house_base)
        + rng.normal(0.0, spec.intercept_sigma, n)
    )
    a = np.exp(log_a)
    if spec.growth_model == EXPONENTIAL:
        factors = spec.growth_rate ** np.arange(t_count)
        target_a_mean = (spec.outcome_mean - planted_mean) / factors.mean()
        a *= target_a_mean / a.mean()
        base = a[:, None] * factors[None, :]
    else:
        slope = spec.outcome_mean / max(t_count - 1, 1)
        trend = slope * np.arange(t_count)
        target_a_mean = spec.outcome_mean - trend.mean() - planted_mean
        a *= target_a_mean / a.mean()
        base = a[:, None] + trend[None, :]

    noise = rng.normal(0.0, spec.noise_sigma, (n, t_count)) if spec.noise_sigma > 0 else 0.0
    outcome = np.clip(base + planted + noise, 0.0, None)

    covariates = {
        "avg_radiation": np.repeat(radiation[:, None], t_count, axis=1),
        "radiation_variation": np.repeat(variation[:, None], t_count, axis=1),
        # panel covariates hold last year's values: column k maps to raw year k
        "disposable_income": income_raw[:, :t_count],
        "unemployment": unemp_raw[:, :t_count],
        "small_house_share": house_raw[:, :t_count],
    }
    panel = PanelDataset(
        units,
        years,
        outcome,
        covariates,
        provenance=(f"generated: seed={spec.seed}",),
    )
    truth = TruthRecord(
        post_year=spec.post_year,
        treated_units=treated_units,
        effects=dict(spec.planted_effects),
    )
    return GeneratedData(
        panel=panel,
        graph=graph,
        truth=truth,
        raw_covariates={
            "disposable_income": income_raw,
            "unemployment": unemp_raw,
            "small_house_share": house_raw,
        },
        raw_years=raw_years,
    )


def write_dataset(data: GeneratedData, directory: str | Path, spec: GeneratorSpec) -> dict[str, Path]:
    """Write ingestion-ready CSV files plus the truth record.

    Time-variant covariates are written for one extra back year so the files
    load with ``lag_years = 1``; a matching ingest_config.json is included.
    Reloading reproduces the generated panel bit for bit.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    panel = data.panel
    paths = {
        "meta": directory / "meta.csv",
        "outcome": directory / "outcome.csv",
        "covariates": directory / "covariates.csv",
        "adjacency": directory / "adjacency.csv",
        "truth": directory / "truth.json",
        "ingest_config": directory / "ingest_config.json",
        "generator_spec": directory / "generator_spec.json",
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

    raw_covs = data.raw_covariates
    raw_years = data.raw_years
    with paths["covariates"].open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("unit_id", "year", "variable", "value"))
        for name in ("avg_radiation", "radiation_variation"):
            mat = panel.covariates[name]
            for i, uid in enumerate(panel.unit_ids):
                for j, year in enumerate(panel.years):
                    writer.writerow((uid, year, name, repr(float(mat[i, j]))))
        for name in ("disposable_income", "small_house_share", "unemployment"):
            mat = raw_covs[name]
            for i, uid in enumerate(panel.unit_ids):
                for j, year in enumerate(raw_years):
                    writer.writerow((uid, year, name, repr(float(mat[i, j]))))
    save_adjacency(data.graph, paths["adjacency"])
    data.truth.write_json(paths["truth"])
    paths["ingest_config"].write_text(
        json.dumps(
            {"percent_columns": [], "lag_years": 1, "radiation_window": [2010, 2015]},
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    paths["generator_spec"].write_text(
        json.dumps(spec.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )
    return paths


def simulate_to_directory(spec: GeneratorSpec, directory: str | Path) -> GeneratedData:
    data = generate(spec)
    write_dataset(data, directory, spec)
    return data
