"""Plot-ready CSV and JSON emission for fits, tables and envelopes.

Tabular outputs use fixed column orders and 6 significant digits; JSON files
carry full precision. No images are produced; every series file is directly
consumable by external plotting tools.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable

from .did import DidFit, TrendsTest
from .inference import PermutationEnvelope, RatioTest
from .scm import EffectTable, ScmFit, predictor_balance


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def write_path_csv(fit: ScmFit, path: str | Path) -> None:
    """Outcome paths per year: the treated unit and its synthetic control."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("year", "treated", "synthetic"))
        for i, year in enumerate(fit.years):
            writer.writerow((year, _fmt(fit.treated_path[i]), _fmt(fit.synthetic_path[i])))


def write_effect_csv(table: EffectTable, path: str | Path) -> None:
    """Effect rows from the last pre-treatment year onward, absolute then relative."""
    years = [y for y in table.years if y >= table.pre_period[1]]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("measure", "year", "value"))
        for year in years:
            absolute, _ = table.row(year)
            writer.writerow(("absolute_kw", year, _fmt(absolute)))
        for year in years:
            _, relative = table.row(year)
            writer.writerow(("relative_pct", year, _fmt(relative)))


def write_balance_csv(fit: ScmFit, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("predictor", "treated", "synthetic", "difference", "relative_pct"))
        for row in predictor_balance(fit):
            writer.writerow(
                (
                    row.predictor,
                    _fmt(row.treated),
                    _fmt(row.synthetic),
                    _fmt(row.difference),
                    _fmt(row.relative_pct),
                )
            )


def write_envelope_containment(env: PermutationEnvelope, path: str | Path) -> None:
    payload = {
        label: {
            "per_year": [bool(b) for b in flags],
            "fully_contained": env.fully_contained(label),
        }
        for label, flags in env.containment.items()
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_ratio_test(result: RatioTest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(result.to_json_dict(), indent=2) + "\n")


def write_did_outputs(fit: DidFit, json_path: str | Path, text_path: str | Path) -> None:
    fit.write_json(json_path)
    Path(text_path).write_text(fit.format_table() + "\n")


def write_trends_outputs(test: TrendsTest, json_path: str | Path, text_path: str | Path) -> None:
    test.write_json(json_path)
    Path(text_path).write_text(test.format_table() + "\n")


def config_hash(semantic: dict) -> str:
    """Stable hash over the semantic run configuration (output paths excluded)."""
    canonical = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def write_manifest(
    path: str | Path, semantic: dict, seed: int, files: Iterable[str], version: str
) -> None:
    payload = {
        "config_hash": config_hash(semantic),
        "seed": seed,
        "package_version": version,
        "files": sorted(files),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
