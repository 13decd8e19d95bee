"""Access to the bundled demo dataset.

The package ships one calibrated synthetic dataset (290 municipalities,
2016-2022, planted effects on the northern border from 2021) produced by
:func:`synthpanel.simulate.generate` with default settings. It exists so the
pipeline, examples and tests run out of the box; regenerate it any time with
``synthpanel simulate --out DIR``.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .panel import IngestConfig, PanelDataset, load_ingest_config, load_panel
from .regions import AdjacencyGraph, load_adjacency
from .simulate import TruthRecord


def demo_dataset_dir() -> Path:
    """Directory holding the bundled demo CSV files."""
    return Path(resources.files("synthpanel") / "data" / "demo")


def load_demo_panel() -> PanelDataset:
    root = demo_dataset_dir()
    config = load_ingest_config(root / "ingest_config.json")
    return load_panel(
        root / "outcome.csv",
        [root / "covariates.csv"],
        root / "meta.csv",
        config,
    )


def load_demo_graph() -> AdjacencyGraph:
    return load_adjacency(demo_dataset_dir() / "adjacency.csv")


def load_demo_truth() -> TruthRecord:
    raw = json.loads((demo_dataset_dir() / "truth.json").read_text())
    return TruthRecord(
        post_year=int(raw["post_year"]),
        treated_units=tuple(raw["treated_units"]),
        effects={int(k): float(v) for k, v in raw["effects"].items()},
    )


def demo_run_config(out_dir: str | Path) -> dict:
    """A ready-to-write run configuration dict pointing at the demo files."""
    root = demo_dataset_dir()
    return {
        "inputs": {
            "outcome": str(root / "outcome.csv"),
            "covariates": [str(root / "covariates.csv")],
            "meta": str(root / "meta.csv"),
            "adjacency": str(root / "adjacency.csv"),
        },
        "ingest": {"percent_columns": [], "lag_years": 1, "radiation_window": [2010, 2015]},
        "boundary": ["SE2", "SE3"],
        "max_depth": 3,
        "pre_period": [2016, 2020],
        "post_period": [2021, 2022],
        "scm_placebo_year": 2018,
        "did": {
            "post_year": 2020,
            "controls": [],
            "year_fixed_effects": True,
            "se_type": "HC1",
            "placebo_post_year": 2018,
        },
        "seed": 20230915,
        "out": str(out_dir),
    }


__all__ = [
    "demo_dataset_dir",
    "demo_run_config",
    "load_demo_graph",
    "load_demo_panel",
    "load_demo_truth",
]
