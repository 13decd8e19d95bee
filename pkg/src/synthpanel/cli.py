"""Command-line pipeline: validate inputs, build regions, fit, test, report.

Subcommands: validate, regions, fit-scm, placebo, permute, fit-did,
trends-test, run, simulate. Every run is reproducible from the config file,
the input files and the seed; the emitted manifest records a hash over the
semantic configuration.

Exit codes: 0 success, 2 validation or estimation failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__, reports
from .did import DidSpec, did_placebo, fit_did, parallel_trends_test
from .errors import SynthPanelError
from .inference import (
    in_time_placebo,
    permutation_envelope,
    rmspe_ratio_test,
)
from .panel import IngestConfig, PanelDataset, load_panel
from .regions import (
    AdjacencyGraph,
    RegionSet,
    aggregate_region,
    build_border_regions,
    load_adjacency,
    zone_sides,
)
from .scm import PredictorSpec, ScmOptions, effect_table, fit_scm
from .simulate import GeneratorSpec, simulate_to_directory, spec_from_json_dict

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run configuration; reproducible from file + overrides."""

    outcome: Path
    covariates: tuple[Path, ...]
    meta: Path
    adjacency: Path
    region_map: Path | None
    ingest: IngestConfig
    boundary: tuple[str, str]
    max_depth: int
    predictors: PredictorSpec
    pre_period: tuple[int, int]
    post_period: tuple[int, int]
    scm_placebo_year: int
    did_post_year: int
    did_controls: tuple[str, ...]
    did_year_fixed_effects: bool
    did_se_type: str
    did_placebo_post_year: int
    exclude_border_donors: bool
    ratio_max_pre_rmspe: float | None
    scm_options: ScmOptions
    sweep_options: ScmOptions
    seed: int
    out: Path
    semantic: dict = field(repr=False, default_factory=dict)


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_run_config(
    path: str | Path,
    seed_override: int | None = None,
    out_override: str | None = None,
) -> RunConfig:
    path = Path(path)
    raw = json.loads(path.read_text())
    base = path.parent

    inputs = raw.get("inputs", {})
    for required in ("outcome", "covariates", "meta", "adjacency"):
        if required not in inputs:
            raise SynthPanelError(f"config inputs section lacks {required!r}")
    ingest_raw = raw.get("ingest", {})
    ingest = IngestConfig(
        percent_columns=tuple(ingest_raw.get("percent_columns", ())),
        lag_years=int(ingest_raw.get("lag_years", 0)),
        population_file=(
            str(_resolve(base, ingest_raw["population_file"]))
            if ingest_raw.get("population_file")
            else None
        ),
        radiation_window=tuple(ingest_raw.get("radiation_window", (2010, 2015))),
    )
    pred_raw = raw.get("predictors", {})
    predictors = PredictorSpec(
        outcome_lag_years=tuple(pred_raw.get("outcome_lag_years", (2016, 2018, 2020))),
        covariate_names=tuple(
            pred_raw.get(
                "covariate_names",
                (
                    "avg_radiation",
                    "radiation_variation",
                    "disposable_income",
                    "small_house_share",
                    "unemployment",
                ),
            )
        ),
        covariate_summary=pred_raw.get("covariate_summary", "pre_period_mean"),
        normalization=pred_raw.get("normalization", "zscore"),
    )
    did_raw = raw.get("did", {})
    seed = int(raw.get("seed", 0))
    if seed_override is not None:
        seed = seed_override
    scm_raw = dict(raw.get("scm_options", {}))
    sweep_raw = dict(raw.get("sweep_options", {"n_restarts": 4}))
    scm_options = ScmOptions(
        n_restarts=int(scm_raw.get("n_restarts", 20)),
        nm_maxfev=scm_raw.get("nm_maxfev"),
        seed=seed,
    )
    sweep_options = ScmOptions(
        n_restarts=int(sweep_raw.get("n_restarts", 4)),
        nm_maxfev=sweep_raw.get("nm_maxfev"),
        seed=seed,
    )
    out = Path(out_override) if out_override else _resolve(base, raw.get("out", "outputs"))

    semantic = {k: v for k, v in raw.items() if k != "out"}
    semantic["seed"] = seed

    return RunConfig(
        outcome=_resolve(base, inputs["outcome"]),
        covariates=tuple(_resolve(base, c) for c in inputs["covariates"]),
        meta=_resolve(base, inputs["meta"]),
        adjacency=_resolve(base, inputs["adjacency"]),
        region_map=_resolve(base, inputs["region_map"]) if inputs.get("region_map") else None,
        ingest=ingest,
        boundary=tuple(raw.get("boundary", ("SE2", "SE3"))),
        max_depth=int(raw.get("max_depth", 3)),
        predictors=predictors,
        pre_period=tuple(raw.get("pre_period", (2016, 2020))),
        post_period=tuple(raw.get("post_period", (2021, 2022))),
        scm_placebo_year=int(raw.get("scm_placebo_year", 2018)),
        did_post_year=int(did_raw.get("post_year", 2020)),
        did_controls=tuple(did_raw.get("controls", ())),
        did_year_fixed_effects=bool(did_raw.get("year_fixed_effects", True)),
        did_se_type=did_raw.get("se_type", "HC1"),
        did_placebo_post_year=int(did_raw.get("placebo_post_year", 2018)),
        exclude_border_donors=bool(raw.get("exclude_border_donors", False)),
        ratio_max_pre_rmspe=raw.get("ratio_max_pre_rmspe"),
        scm_options=scm_options,
        sweep_options=sweep_options,
        seed=seed,
        out=out,
        semantic=semantic,
    )


def _load_inputs(config: RunConfig) -> tuple[PanelDataset, AdjacencyGraph]:
    panel = load_panel(
        config.outcome,
        config.covariates,
        config.meta,
        config.ingest,
        region_map_file=config.region_map,
    )
    graph = load_adjacency(config.adjacency)
    return panel, graph


def _donor_pool(panel: PanelDataset, config: RunConfig, regions: RegionSet) -> tuple[str, ...]:
    _, south_zones = zone_sides(config.boundary)
    donors = set(panel.units_in_zones(south_zones))
    if config.exclude_border_donors:
        donors -= regions.south[0]
    return tuple(sorted(donors))


def _did_spec(config: RunConfig, regions: RegionSet, depth: int) -> DidSpec:
    return DidSpec(
        treated_region=regions.members("north", depth),
        control_region=regions.members("south", depth),
        post_year=config.did_post_year,
        controls=config.did_controls,
        year_fixed_effects=config.did_year_fixed_effects,
        se_type=config.did_se_type,
    )


# --- subcommands ----------------------------------------------------------


def cmd_validate(config: RunConfig) -> int:
    problems: list[str] = []
    panel = None
    try:
        panel = load_panel(
            config.outcome,
            config.covariates,
            config.meta,
            config.ingest,
            region_map_file=config.region_map,
        )
    except SynthPanelError as exc:
        problems.append(f"{exc.module}: {exc}")
    graph = None
    try:
        graph = load_adjacency(config.adjacency)
    except SynthPanelError as exc:
        problems.append(f"{exc.module}: {exc}")
    if panel is not None and graph is not None:
        try:
            build_border_regions(graph, panel, config.boundary, config.max_depth)
        except SynthPanelError as exc:
            problems.append(f"{exc.module}: {exc}")
    if panel is not None:
        print(f"units: {panel.n_units}")
        print(f"years: {panel.years[0]}-{panel.years[-1]}")
        print(f"balanced: {panel.n_units * panel.n_years} cells")
        print(f"covariates: {', '.join(panel.covariate_names)}")
    if graph is not None:
        print(f"adjacency: {len(graph.nodes)} nodes, {len(graph.edges)} edges")
    if problems:
        for problem in problems:
            print(problem, file=sys.stderr)
        return EXIT_VALIDATION
    print("ok")
    return EXIT_OK


def cmd_regions(config: RunConfig) -> int:
    panel, graph = _load_inputs(config)
    regions = build_border_regions(graph, panel, config.boundary, config.max_depth)
    config.out.mkdir(parents=True, exist_ok=True)
    regions.write_json(config.out / "regions.json")
    for side in ("north", "south"):
        for depth in range(1, regions.max_depth + 1):
            print(f"{side} depth {depth}: {len(regions.members(side, depth))} units")
    print(f"excluded: {len(regions.excluded)} SPLIT units")
    print(f"wrote {config.out / 'regions.json'}")
    return EXIT_OK


def _fit_one_depth(panel, regions, donors, config: RunConfig, depth: int):
    treated = aggregate_region(
        panel, regions.members("north", depth), f"border{depth}_north"
    )
    return fit_scm(
        panel,
        treated,
        donors,
        config.predictors,
        config.pre_period,
        config.post_period,
        config.scm_options,
    )


def cmd_fit_scm(config: RunConfig, depth: int) -> int:
    panel, graph = _load_inputs(config)
    regions = build_border_regions(graph, panel, config.boundary, config.max_depth)
    donors = _donor_pool(panel, config, regions)
    fit = _fit_one_depth(panel, regions, donors, config, depth)
    outdir = config.out / f"depth{depth}"
    outdir.mkdir(parents=True, exist_ok=True)
    fit.write_json(outdir / "scm_fit.json")
    reports.write_path_csv(fit, outdir / "scm_path.csv")
    reports.write_effect_csv(effect_table(fit), outdir / "effects.csv")
    reports.write_balance_csv(fit, outdir / "balance.csv")
    print(f"depth {depth}: rmspe pre={fit.rmspe_pre:.6g} post={fit.rmspe_post:.6g}")
    for uid, weight in sorted(fit.nonzero_weights().items(), key=lambda kv: -kv[1]):
        print(f"  {uid}: {weight:.3f}")
    print(f"wrote {outdir}")
    return EXIT_OK


def cmd_placebo(config: RunConfig, depth: int, placebo_year: int | None) -> int:
    panel, graph = _load_inputs(config)
    regions = build_border_regions(graph, panel, config.boundary, config.max_depth)
    donors = _donor_pool(panel, config, regions)
    treated = aggregate_region(
        panel, regions.members("north", depth), f"border{depth}_north"
    )
    year = placebo_year if placebo_year is not None else config.scm_placebo_year
    placebo = in_time_placebo(
        panel,
        treated,
        donors,
        config.predictors,
        config.pre_period,
        config.post_period,
        year,
        config.scm_options,
    )
    outdir = config.out / f"depth{depth}"
    outdir.mkdir(parents=True, exist_ok=True)
    placebo.write_json(outdir / "placebo_fit.json")
    reports.write_path_csv(placebo.fit, outdir / "placebo_path.csv")
    print(
        f"placebo {year} depth {depth}: max |gap| over {placebo.window_years} "
        f"= {placebo.max_abs_gap:.6g}"
    )
    print(f"wrote {outdir}")
    return EXIT_OK


def cmd_permute(config: RunConfig) -> int:
    panel, graph = _load_inputs(config)
    regions = build_border_regions(graph, panel, config.boundary, config.max_depth)
    donors = _donor_pool(panel, config, regions)
    aggregates = [
        aggregate_region(panel, regions.members(side, depth), f"border{depth}_{side}")
        for side in ("north", "south")
        for depth in range(1, regions.max_depth + 1)
    ]
    env = permutation_envelope(panel, donors, aggregates)
    config.out.mkdir(parents=True, exist_ok=True)
    env.write_csv(config.out / "envelope.csv")
    reports.write_envelope_containment(env, config.out / "envelope_containment.json")
    for label in sorted(env.containment):
        print(f"{label}: {'inside' if env.fully_contained(label) else 'OUTSIDE'} envelope")
    print(f"wrote {config.out / 'envelope.csv'}")
    return EXIT_OK


def cmd_fit_did(config: RunConfig, depth: int) -> int:
    panel, graph = _load_inputs(config)
    regions = build_border_regions(graph, panel, config.boundary, config.max_depth)
    fit = fit_did(panel, _did_spec(config, regions, depth))
    outdir = config.out / f"depth{depth}"
    outdir.mkdir(parents=True, exist_ok=True)
    reports.write_did_outputs(fit, outdir / "did.json", outdir / "did.txt")
    print(fit.format_table())
    print(f"wrote {outdir}")
    return EXIT_OK


def cmd_trends_test(config: RunConfig, depth: int) -> int:
    panel, graph = _load_inputs(config)
    regions = build_border_regions(graph, panel, config.boundary, config.max_depth)
    test = parallel_trends_test(panel, _did_spec(config, regions, depth))
    outdir = config.out / f"depth{depth}"
    outdir.mkdir(parents=True, exist_ok=True)
    reports.write_trends_outputs(test, outdir / "did_trends.json", outdir / "did_trends.txt")
    print(test.format_table())
    print(f"wrote {outdir}")
    return EXIT_OK


def cmd_run(config: RunConfig, threads: int = 1) -> int:
    panel, graph = _load_inputs(config)
    regions = build_border_regions(graph, panel, config.boundary, config.max_depth)
    donors = _donor_pool(panel, config, regions)
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    files: list[str] = []

    regions.write_json(out / "regions.json")
    files.append("regions.json")

    aggregates = [
        aggregate_region(panel, regions.members(side, depth), f"border{depth}_{side}")
        for side in ("north", "south")
        for depth in range(1, regions.max_depth + 1)
    ]
    env = permutation_envelope(panel, donors, aggregates)
    env.write_csv(out / "envelope.csv")
    reports.write_envelope_containment(env, out / "envelope_containment.json")
    files += ["envelope.csv", "envelope_containment.json"]

    # Donor placebo fits do not involve the treated aggregate, so one sweep
    # serves the ratio test at every depth.
    def sweep_fit(uid: str):
        pseudo_treated = aggregate_region(panel, {uid}, label=uid)
        rest = tuple(d for d in donors if d != uid)
        return fit_scm(
            panel,
            pseudo_treated,
            rest,
            config.predictors,
            config.pre_period,
            config.post_period,
            config.sweep_options,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sweep_fits = tuple(pool.map(sweep_fit, donors))
    else:
        sweep_fits = tuple(sweep_fit(uid) for uid in donors)

    for depth in range(1, regions.max_depth + 1):
        outdir = out / f"depth{depth}"
        outdir.mkdir(parents=True, exist_ok=True)
        rel = f"depth{depth}"

        fit = _fit_one_depth(panel, regions, donors, config, depth)
        fit.write_json(outdir / "scm_fit.json")
        reports.write_path_csv(fit, outdir / "scm_path.csv")
        reports.write_effect_csv(effect_table(fit), outdir / "effects.csv")
        reports.write_balance_csv(fit, outdir / "balance.csv")
        files += [
            f"{rel}/scm_fit.json",
            f"{rel}/scm_path.csv",
            f"{rel}/effects.csv",
            f"{rel}/balance.csv",
        ]

        treated = aggregate_region(
            panel, regions.members("north", depth), f"border{depth}_north"
        )
        placebo = in_time_placebo(
            panel,
            treated,
            donors,
            config.predictors,
            config.pre_period,
            config.post_period,
            config.scm_placebo_year,
            config.scm_options,
        )
        placebo.write_json(outdir / "placebo_fit.json")
        reports.write_path_csv(placebo.fit, outdir / "placebo_path.csv")
        files += [f"{rel}/placebo_fit.json", f"{rel}/placebo_path.csv"]

        ratio = rmspe_ratio_test(fit, sweep_fits, config.ratio_max_pre_rmspe)
        reports.write_ratio_test(ratio, outdir / "ratio_test.json")
        files.append(f"{rel}/ratio_test.json")

        spec = _did_spec(config, regions, depth)
        did_fit = fit_did(panel, spec)
        reports.write_did_outputs(did_fit, outdir / "did.json", outdir / "did.txt")
        trends = parallel_trends_test(panel, spec)
        reports.write_trends_outputs(
            trends, outdir / "did_trends.json", outdir / "did_trends.txt"
        )
        did_pl = did_placebo(panel, spec, config.did_placebo_post_year)
        reports.write_did_outputs(did_pl, outdir / "did_placebo.json", outdir / "did_placebo.txt")
        files += [
            f"{rel}/did.json",
            f"{rel}/did.txt",
            f"{rel}/did_trends.json",
            f"{rel}/did_trends.txt",
            f"{rel}/did_placebo.json",
            f"{rel}/did_placebo.txt",
        ]

        print(
            f"depth {depth}: gap[{config.post_period[1]}]="
            f"{fit.gap_at(config.post_period[1]):+.4f} "
            f"rmspe_ratio={ratio.ratio:.2f} pseudo_p={ratio.pseudo_p:.3f} "
            f"did_atet={did_fit.atet:+.4f}"
        )

    reports.write_manifest(
        out / "manifest.json", config.semantic, config.seed, files + ["manifest.json"], __version__
    )
    print(f"wrote {out}")
    return EXIT_OK


def cmd_simulate(spec_file: str | None, out: str, seed: int | None) -> int:
    if spec_file:
        raw = json.loads(Path(spec_file).read_text())
    else:
        raw = {}
    if seed is not None:
        raw["seed"] = seed
    spec = spec_from_json_dict(raw)
    data = simulate_to_directory(spec, out)
    panel = data.panel
    print(f"units: {panel.n_units}")
    print(f"years: {panel.years[0]}-{panel.years[-1]}")
    print(f"treated units: {len(data.truth.treated_units)}")
    print(f"wrote {out}")
    return EXIT_OK


# --- argument parsing -------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synthpanel",
        description="Bidding-zone border synthetic control pipeline",
    )
    parser.add_argument("--version", action="version", version=f"synthpanel {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration JSON")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="override the output directory")
    common.add_argument("--threads", type=int, default=1, help="parallel fits where supported")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="validate inputs and report shape")
    sub.add_parser("regions", parents=[common], help="build and export border regions")

    p = sub.add_parser("fit-scm", parents=[common], help="fit one border depth")
    p.add_argument("--depth", type=int, default=1)

    p = sub.add_parser("placebo", parents=[common], help="in-time placebo refit")
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--placebo-year", type=int, default=None)

    sub.add_parser("permute", parents=[common], help="donor-pool outcome envelope")

    p = sub.add_parser("fit-did", parents=[common], help="difference-in-differences fit")
    p.add_argument("--depth", type=int, default=1)

    p = sub.add_parser("trends-test", parents=[common], help="parallel-trends diagnostic")
    p.add_argument("--depth", type=int, default=1)

    sub.add_parser("run", parents=[common], help="full pipeline over all depths")

    p = sub.add_parser("simulate", help="generate a synthetic dataset directory")
    p.add_argument("--spec", default=None, help="generator spec JSON (defaults used if omitted)")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.add_argument("--out", required=True, help="dataset output directory")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.spec, args.out, args.seed)
        config = load_run_config(args.config, args.seed, args.out)
        if args.command == "validate":
            return cmd_validate(config)
        if args.command == "regions":
            return cmd_regions(config)
        if args.command == "fit-scm":
            return cmd_fit_scm(config, args.depth)
        if args.command == "placebo":
            return cmd_placebo(config, args.depth, args.placebo_year)
        if args.command == "permute":
            return cmd_permute(config)
        if args.command == "fit-did":
            return cmd_fit_did(config, args.depth)
        if args.command == "trends-test":
            return cmd_trends_test(config, args.depth)
        if args.command == "run":
            return cmd_run(config, threads=args.threads)
        parser.error(f"unknown command {args.command!r}")
    except FileNotFoundError as exc:
        print(f"io: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"config: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SynthPanelError as exc:
        print(f"{exc.module}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"io: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
