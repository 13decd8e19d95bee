"""Nested border regions on a municipality adjacency graph, and region averaging.

A border region of depth d collects the municipalities within d adjacency
steps of the boundary between a low-tariff and a high-tariff bidding zone,
separately for the northern (low-tariff) and southern (high-tariff) side.
Municipalities straddling the boundary (zone SPLIT) seed the frontier but are
excluded from every region.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DuplicateRow, EmptyBorder, EmptyMemberSet, RegionError, UnknownUnit
from .panel import SPLIT_ZONE, ZONES, PanelDataset, _frozen_array


@dataclass(frozen=True)
class AdjacencyGraph:
    """Simple undirected graph over unit ids (edges are shared land borders)."""

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        known = set(self.nodes)
        canonical: list[tuple[str, str]] = []
        seen: set[tuple[str, str]] = set()
        for a, b in self.edges:
            if a == b:
                raise RegionError(f"self-loop on unit {a!r}")
            if a not in known or b not in known:
                missing = a if a not in known else b
                raise UnknownUnit(f"edge endpoint {missing!r} is not a graph node")
            edge = (a, b) if a < b else (b, a)
            if edge in seen:
                raise DuplicateRow(f"duplicate edge {edge}")
            seen.add(edge)
            canonical.append(edge)
        object.__setattr__(self, "edges", tuple(sorted(canonical)))

    def neighbors(self) -> dict[str, frozenset[str]]:
        table: dict[str, set[str]] = {n: set() for n in self.nodes}
        for a, b in self.edges:
            table[a].add(b)
            table[b].add(a)
        return {n: frozenset(v) for n, v in table.items()}


def load_adjacency(path: str | Path) -> AdjacencyGraph:
    """Read a unit_a,unit_b edge list CSV into an AdjacencyGraph."""
    path = Path(path)
    edges: list[tuple[str, str]] = []
    nodes: set[str] = set()
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if list(reader.fieldnames or []) != ["unit_a", "unit_b"]:
            raise RegionError(f"{path}: expected header unit_a,unit_b")
        for row in reader:
            edges.append((row["unit_a"], row["unit_b"]))
            nodes.update((row["unit_a"], row["unit_b"]))
    return AdjacencyGraph(tuple(sorted(nodes)), tuple(edges))


def save_adjacency(graph: AdjacencyGraph, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("unit_a", "unit_b"))
        for a, b in graph.edges:
            writer.writerow((a, b))


@dataclass(frozen=True)
class RegionSet:
    """Nested border regions per side, index 0 holding depth 1."""

    boundary: tuple[str, str]
    north: tuple[frozenset[str], ...]
    south: tuple[frozenset[str], ...]
    excluded: frozenset[str]

    @property
    def max_depth(self) -> int:
        return len(self.north)

    def members(self, side: str, depth: int) -> frozenset[str]:
        if side not in ("north", "south"):
            raise RegionError(f"side must be 'north' or 'south', got {side!r}")
        if not 1 <= depth <= self.max_depth:
            raise RegionError(f"depth {depth} outside 1-{self.max_depth}")
        return (self.north if side == "north" else self.south)[depth - 1]

    def to_json_records(self) -> list[dict]:
        records = []
        for side in ("north", "south"):
            for depth in range(1, self.max_depth + 1):
                records.append(
                    {
                        "depth": depth,
                        "side": side,
                        "members": sorted(self.members(side, depth)),
                        "excluded": sorted(self.excluded),
                    }
                )
        return records

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_records(), indent=2) + "\n")


def zone_sides(boundary: tuple[str, str]) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Split the zone ladder into (northern zones, southern zones) at a boundary."""
    if boundary[0] not in ZONES or boundary[1] not in ZONES:
        raise RegionError(f"boundary zones must be among {ZONES}, got {boundary}")
    i, j = ZONES.index(boundary[0]), ZONES.index(boundary[1])
    if j != i + 1:
        raise RegionError(f"boundary {boundary} must name two adjacent zones")
    return ZONES[: i + 1], ZONES[j:]


def border_sets_from_zones(
    neighbors: Mapping[str, frozenset[str]],
    zones: Mapping[str, str],
    boundary: tuple[str, str] = ("SE2", "SE3"),
    max_depth: int = 3,
) -> RegionSet:
    """Core frontier expansion over an explicit unit -> zone mapping.

    Depth 1 on each side holds the units adjacent to the opposite side or to
    a SPLIT unit sitting on this boundary; each further depth adds same-side
    neighbors of the previous depth. A SPLIT unit counts as sitting on the
    boundary when it touches both sides.
    """
    if max_depth < 1:
        raise RegionError("max_depth must be at least 1")
    north_zones, south_zones = zone_sides(boundary)
    north_all = {u for u, z in zones.items() if z in north_zones}
    south_all = {u for u, z in zones.items() if z in south_zones}
    splits = {u for u, z in zones.items() if z == SPLIT_ZONE}

    boundary_splits = {
        s
        for s in splits
        if any(v in north_all for v in neighbors.get(s, ()))
        and any(v in south_all for v in neighbors.get(s, ()))
    }

    def frontier(side: set[str], opposite: set[str]) -> set[str]:
        seeds = opposite | boundary_splits
        return {u for u in side if any(v in seeds for v in neighbors.get(u, ()))}

    north1 = frontier(north_all, south_all)
    south1 = frontier(south_all, north_all)
    if not north1 or not south1:
        raise EmptyBorder(
            f"no adjacency across the {boundary[0]}|{boundary[1]} boundary"
        )

    def expand(first: set[str], side: set[str]) -> list[frozenset[str]]:
        levels = [frozenset(first)]
        current = set(first)
        for _ in range(max_depth - 1):
            grown = current | {
                u for u in side if any(v in current for v in neighbors.get(u, ()))
            }
            levels.append(frozenset(grown))
            current = grown
        return levels

    return RegionSet(
        boundary=tuple(boundary),
        north=tuple(expand(north1, north_all)),
        south=tuple(expand(south1, south_all)),
        excluded=frozenset(boundary_splits),
    )


def build_border_regions(
    graph: AdjacencyGraph,
    panel: PanelDataset,
    boundary: tuple[str, str] = ("SE2", "SE3"),
    max_depth: int = 3,
) -> RegionSet:
    """Build nested border regions for a panel from its adjacency graph.

    The graph must cover exactly the panel's units. Results depend only on
    the edge set, not on edge ordering.
    """
    panel_units = set(panel.unit_ids)
    graph_units = set(graph.nodes)
    if graph_units - panel_units:
        raise UnknownUnit(
            f"graph nodes not in panel: {sorted(graph_units - panel_units)[:5]}"
        )
    if panel_units - graph_units:
        raise UnknownUnit(
            f"panel units missing from graph: {sorted(panel_units - graph_units)[:5]}"
        )
    zones = {u.unit_id: u.zone for u in panel.units}
    return border_sets_from_zones(graph.neighbors(), zones, boundary, max_depth)


@dataclass(frozen=True)
class AggregateSeries:
    """One region treated as a single unit: per-year means of all variables."""

    label: str
    years: tuple[int, ...]
    outcome: np.ndarray
    covariates: Mapping[str, np.ndarray]
    members: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))
        object.__setattr__(self, "outcome", _frozen_array(self.outcome))
        object.__setattr__(
            self, "covariates", {k: _frozen_array(v) for k, v in self.covariates.items()}
        )
        object.__setattr__(self, "members", frozenset(self.members))

    def year_index(self, year: int) -> int:
        if year not in self.years:
            raise RegionError(f"year {year} outside aggregate range")
        return year - self.years[0]


def aggregate_region(
    panel: PanelDataset, members: Iterable[str], label: str
) -> AggregateSeries:
    """Average outcome and covariates over ``members``, year by year."""
    member_ids = sorted(set(members))
    if not member_ids:
        raise EmptyMemberSet(f"region {label!r} has no members")
    rows = [panel.index(uid) for uid in member_ids]
    outcome = panel.outcome[rows].mean(axis=0)
    covariates = {
        name: mat[rows].mean(axis=0) for name, mat in panel.covariates.items()
    }
    return AggregateSeries(label, panel.years, outcome, covariates, frozenset(member_ids))
