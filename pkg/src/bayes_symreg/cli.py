"""Command-line entry point.

Subcommands cover free-form evolution on user or built-in data plus the
canned study setups (polynomial order sweep, the two Galileo tasks, the
sine noise sweep) and posterior prediction from saved artifacts.  Every
run echoes its fully resolved configuration into the output directory and
writes delimited data files; figures rendered from those same files are
written alongside unless ``--no-figures`` is given.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import datasets as ds
from . import figures
from .evolution import (
    MODE_BAYESIAN,
    MODE_CONVENTIONAL,
    EvolutionConfig,
    EvolutionResult,
    evolve,
)
from .expressions import EquationGenome, Op, evaluate_batch, polynomial_genome, render
from .fitting import fit_constants
from .inference import FBFConfig, ensemble_from_samples, posterior_summaries, smc_sample
from .prediction import predict_bands
from .variation import VariationConfig

_OPERATOR_NAMES = {
    "add": Op.ADD,
    "sub": Op.SUBTRACT,
    "mul": Op.MULTIPLY,
    "div": Op.DIVIDE,
    "pow": Op.POWER,
    "sqrt": Op.SQRT,
}

_BUILTIN_DATASETS = ("sine", "galileo-shelf", "galileo-no-shelf", "no-shelf-synthetic")


class ConfigError(ValueError):
    """Invalid run configuration (reported before any output is written)."""


# ----------------------------------------------------------------- helpers


def _parse_operators(spec: str) -> tuple[Op, ...]:
    names = [s.strip().lower() for s in str(spec).split(",") if s.strip()]
    unknown = [n for n in names if n not in _OPERATOR_NAMES]
    if unknown:
        raise ConfigError(f"unknown operators: {unknown}; choose from {sorted(_OPERATOR_NAMES)}")
    if not names:
        raise ConfigError("operator list is empty")
    return tuple(_OPERATOR_NAMES[n] for n in names)


def _parse_float_list(spec) -> list[float]:
    if isinstance(spec, (list, tuple)):
        return [float(v) for v in spec]
    return [float(s) for s in str(spec).split(",") if s.strip()]


def _parse_int_list(spec) -> list[int]:
    if isinstance(spec, (list, tuple)):
        return [int(v) for v in spec]
    return [int(s) for s in str(spec).split(",") if s.strip()]


def _load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return payload


def _merge_settings(defaults: dict, args: argparse.Namespace) -> dict:
    merged = dict(defaults)
    if getattr(args, "config", None):
        file_values = _load_config_file(args.config)
        unknown = set(file_values) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_values)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON-serializable: {value!r}")


def _write_resolved_config(outdir: Path, subcommand: str, settings: dict) -> None:
    payload = {"subcommand": subcommand, **settings}
    with open(outdir / "resolved-config.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _jsonable_float(v):
    if v is None:
        return None
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return 1e308 if v > 0 else -1e308
    return v


def _write_generations_jsonl(path: Path, logs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in logs:
            row = rec.to_dict()
            for key in ("best_train_rmse", "best_test_rmse", "best_q"):
                row[key] = _jsonable_float(row[key])
            fh.write(json.dumps(row) + "\n")


def _write_final_population(path: Path, result: EvolutionResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["render", "complexity", "rmse", "log_q"])
        for genome, rec in zip(result.population, result.records):
            writer.writerow([render(genome), genome.complexity, repr(rec.rmse), repr(rec.log_q)])


def _write_posterior_csv(path: Path, ensemble: ParticleEnsemble) -> None:
    p = ensemble.param_count
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"theta_{k}" for k in range(p)] + ["sigma", "weight"])
        weights = ensemble.weights
        for i in range(ensemble.particle_count):
            row = [repr(float(v)) for v in ensemble.thetas[i]]
            writer.writerow(row + [repr(float(ensemble.sigmas[i])), repr(float(weights[i]))])


def _write_kde_json(path: Path, marginals) -> None:
    payload = {
        name: {"grid": grid.tolist(), "density": density.tolist()}
        for name, (grid, density) in marginals.items()
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def _write_bands_csv(path: Path, band) -> None:
    grid = band.grid if band.grid.ndim == 1 else band.grid[:, 0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "map", "cred_lo", "cred_hi", "pred_lo", "pred_hi"])
        for i in range(len(grid)):
            writer.writerow([
                repr(float(grid[i])),
                repr(float(band.map_curve[i])),
                repr(float(band.credible_lo[i])),
                repr(float(band.credible_hi[i])),
                repr(float(band.predictive_lo[i])),
                repr(float(band.predictive_hi[i])),
            ])


def _write_genome_json(path: Path, genome: EquationGenome) -> None:
    payload = {
        "commands": genome.commands.tolist(),
        "output": genome.output,
        "render": render(genome),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def _load_genome_json(path) -> EquationGenome:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return EquationGenome(np.asarray(payload["commands"], dtype=np.int64),
                          output=payload.get("output"))


def _load_posterior_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(c) for c in row] for row in reader if row]
    if header[-2:] != ["sigma", "weight"]:
        raise ConfigError(f"{path}: expected posterior columns theta_*.., sigma, weight")
    arr = np.asarray(rows, dtype=np.float64)
    return arr[:, :-2], arr[:, -2], arr[:, -1]


def _prediction_grid(data: ds.Dataset, points: int = 200, margin: float = 0.25) -> np.ndarray:
    if data.d != 1:
        return np.array(sorted(map(tuple, data.x)))
    lo, hi = float(data.x.min()), float(data.x.max())
    span = hi - lo if hi > lo else max(abs(hi), 1.0)
    return np.linspace(lo - margin * span, hi + margin * span, points)


def _resolve_dataset(settings: dict) -> tuple[ds.Dataset, ds.Dataset | None]:
    if settings.get("data"):
        train = ds.load_csv(settings["data"])
    else:
        name = settings.get("dataset") or "sine"
        if name not in _BUILTIN_DATASETS:
            raise ConfigError(f"unknown dataset {name!r}; choose from {_BUILTIN_DATASETS}")
        if name == "sine":
            train = ds.generate_sine(settings["n"], settings["sigma"], seed=settings["data_seed"])
        elif name == "galileo-shelf":
            train = ds.galileo_shelf()
        elif name == "galileo-no-shelf":
            train = ds.galileo_no_shelf()
        else:
            train = ds.generate_no_shelf_synthetic(seed=settings["data_seed"])
    test = None
    if settings.get("test_data"):
        test = ds.load_csv(settings["test_data"])
    elif settings.get("test_size"):
        if settings.get("dataset", "sine") != "sine" or settings.get("data"):
            raise ConfigError("--test-size only applies to the built-in sine dataset")
        test = ds.generate_sine(settings["test_size"], settings["sigma"],
                                seed=settings["test_seed"])
    return train, test


def _evolution_config(settings: dict) -> EvolutionConfig:
    try:
        variation = VariationConfig(
            max_commands=int(settings["max_commands"]),
            operator_set=_parse_operators(settings["operators"]),
            crossover_prob=float(settings["crossover_prob"]),
            mutation_prob=float(settings["mutation_prob"]),
            terminal_bias=float(settings["terminal_bias"]),
        )
        fbf = FBFConfig(
            gamma=None if settings["gamma"] is None else float(settings["gamma"]),
            particle_count=int(settings["particles"]),
            ess_threshold=float(settings["ess_threshold"]),
            mcmc_steps_per_temper=int(settings["mcmc_steps"]),
            multistarts=int(settings["multistarts"]),
        )
        return EvolutionConfig(
            population_size=int(settings["population"]),
            generations=int(settings["generations"]),
            mode=str(settings["mode"]),
            variation=variation,
            fbf=fbf,
            seed=int(settings["seed"]),
            fit_starts=int(settings["fit_starts"]),
            workers=int(settings["workers"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _apply_paper_scale(settings: dict) -> dict:
    if settings.get("paper_scale"):
        settings = dict(settings)
        settings.update(population=120, generations=1000, particles=600)
    return settings


_EVOLVE_DEFAULTS = {
    "data": None,
    "dataset": "sine",
    "n": 20,
    "sigma": 0.5,
    "data_seed": 0,
    "test_data": None,
    "test_size": 0,
    "test_seed": 10_000,
    "mode": MODE_BAYESIAN,
    "population": 60,
    "generations": 200,
    "max_commands": 64,
    "operators": "add,sub,mul",
    "crossover_prob": 0.4,
    "mutation_prob": 0.4,
    "terminal_bias": 0.2,
    "particles": 400,
    "gamma": None,
    "ess_threshold": 0.75,
    "mcmc_steps": 5,
    "multistarts": 8,
    "fit_starts": 4,
    "seed": 0,
    "workers": 1,
    "paper_scale": False,
    "figures": True,
}


def _posterior_artifacts(genome, train, fbf, rng, outdir, prefix="best", make_figures=True,
                         title=""):
    """Fit + SMC on one genome; write posterior, KDE, and band artifacts."""
    ms = fit_constants(genome, train, starts=fbf.multistarts, rng=rng)
    if not ms.any_converged:
        return None
    ensemble, _ = smc_sample(genome, train, ms, fbf, rng)
    if ensemble.degenerate:
        return None
    _write_posterior_csv(outdir / f"{prefix}_posterior.csv", ensemble)
    summary = posterior_summaries(ensemble)
    _write_kde_json(outdir / f"{prefix}_kde.json", summary.marginals)
    band = predict_bands(genome, ensemble, _prediction_grid(train), rng=rng)
    _write_bands_csv(outdir / "bands.csv", band)
    if make_figures:
        figures.band_figure(band, train.x, train.y, outdir / "fit.png", title=title)
        figures.posterior_figure(summary.marginals, outdir / "posterior.png")
    return ensemble


def run_evolve(settings: dict, subcommand: str = "evolve") -> int:
    settings = _apply_paper_scale(settings)
    config = _evolution_config(settings)
    train, test = _resolve_dataset(settings)

    outdir = Path(settings["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    _write_resolved_config(outdir, subcommand, settings)
    ds.save_csv(train, outdir / "data.csv")

    def progress(log):
        if settings.get("verbose"):
            print(f"gen {log.generation:4d}  rmse {log.best_train_rmse:.4g}  "
                  f"complexity {log.mean_complexity:.1f}", flush=True)

    result = evolve(config, train, test, progress=progress)
    _write_generations_jsonl(outdir / "generations.jsonl", result.logs)
    _write_final_population(outdir / "final_population.csv", result)

    best = result.best_index(config.mode)
    best_genome = result.population[best]
    _write_genome_json(outdir / "best_genome.json", best_genome)
    rng = np.random.default_rng(config.seed + 2_000_003)
    ensemble = _posterior_artifacts(
        best_genome, train, config.fbf, rng, outdir,
        make_figures=settings["figures"], title=render(best_genome),
    )
    if ensemble is None:
        print("warning: best genome has no usable posterior; skipped bands", file=sys.stderr)
    if settings["figures"]:
        logs = [rec.to_dict() for rec in result.logs]
        figures.evolution_figure(logs, outdir / "evolution.png")
    print(f"wrote {outdir}/generations.jsonl ({len(result.logs)} generations), "
          f"best: {render(best_genome)}")
    return 0


_DEMO_DEFAULTS = {
    "n": 20,
    "sigma": 0.5,
    "data_seed": 0,
    "max_order": 6,
    "particles": 400,
    "multistarts": 8,
    "gamma": None,
    "seed": 0,
    "figures": True,
}


def run_demo_polynomial(settings: dict) -> int:
    if settings["max_order"] < 0:
        raise ConfigError("max_order must be >= 0")
    try:
        fbf = FBFConfig(
            gamma=None if settings["gamma"] is None else float(settings["gamma"]),
            particle_count=int(settings["particles"]),
            multistarts=int(settings["multistarts"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    train = ds.generate_sine(settings["n"], settings["sigma"], seed=settings["data_seed"])

    outdir = Path(settings["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    _write_resolved_config(outdir, "demo-polynomial", settings)
    ds.save_csv(train, outdir / "data.csv")

    rng = np.random.default_rng(settings["seed"])
    orders = list(range(settings["max_order"] + 1))
    rows = []
    grid = _prediction_grid(train)
    for order in orders:
        genome = polynomial_genome(order)
        ms = fit_constants(genome, train, starts=fbf.multistarts, rng=rng)
        ensemble, _ = smc_sample(genome, train, ms, fbf, rng)
        rmse = ms.best_fit.rmse
        rmse_norm = rmse / settings["sigma"] if settings["sigma"] > 0 else rmse
        rows.append({"order": order, "rmse_norm": rmse_norm, "log_q": ensemble.log_q})
        band = predict_bands(genome, ensemble, grid, rng=rng)
        _write_bands_csv(outdir / f"bands_order_{order}.csv", band)
        if settings["figures"] and order in (3, min(6, settings["max_order"])):
            figures.band_figure(band, train.x, train.y, outdir / f"fit_order_{order}.png",
                                title=f"polynomial order {order}")

    with open(outdir / "polynomial_fitness.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["order", "rmse_norm", "log_q"])
        for row in rows:
            writer.writerow([row["order"], repr(row["rmse_norm"]), repr(row["log_q"])])
    if settings["figures"]:
        figures.polynomial_fitness_figure(
            orders, [r["rmse_norm"] for r in rows], [r["log_q"] for r in rows],
            outdir / "polynomial_fitness.png",
        )
    best_order = max(rows, key=lambda r: r["log_q"])["order"]
    print(f"wrote {outdir}/polynomial_fitness.csv; evidence peaks at order {best_order}")
    return 0


_SWEEP_DEFAULTS = {
    "sigmas": "0.25,0.5,1.0",
    "seeds": "0,1,2,3,4",
    "n": 20,
    "test_size": 1000,
    "test_seed": 10_000,
    "population": 60,
    "generations": 200,
    "max_commands": 64,
    "operators": "add,sub,mul",
    "crossover_prob": 0.4,
    "mutation_prob": 0.4,
    "terminal_bias": 0.2,
    "particles": 400,
    "gamma": None,
    "ess_threshold": 0.75,
    "mcmc_steps": 5,
    "multistarts": 8,
    "fit_starts": 4,
    "seed": 0,
    "workers": 1,
    "paper_scale": False,
    "figures": True,
}


def run_sine_sweep(settings: dict) -> int:
    settings = _apply_paper_scale(settings)
    sigmas = _parse_float_list(settings["sigmas"])
    seeds = _parse_int_list(settings["seeds"])
    if not sigmas or not seeds:
        raise ConfigError("sigmas and seeds must be non-empty")
    if any(s < 0 for s in sigmas):
        raise ConfigError("sigmas must be non-negative")
    base = {**settings, "mode": MODE_BAYESIAN, "seed": 0}
    _evolution_config(base)  # validate shared knobs up-front

    outdir = Path(settings["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    _write_resolved_config(outdir, "sine-sweep", settings)

    rows = []
    for sigma in sigmas:
        test = ds.generate_sine(settings["test_size"], sigma, seed=settings["test_seed"])
        for seed in seeds:
            train = ds.generate_sine(settings["n"], sigma, seed=seed)
            for mode in (MODE_CONVENTIONAL, MODE_BAYESIAN):
                config = _evolution_config({**settings, "mode": mode, "seed": seed})
                result = evolve(config, train, test)
                final = result.logs[-1]
                rows.append({
                    "sigma": sigma,
                    "seed": seed,
                    "mode": mode,
                    "final_train_rmse": final.best_train_rmse,
                    "final_test_rmse": final.best_test_rmse,
                    "mean_complexity": final.mean_complexity,
                    "mean_param_count": final.mean_param_count,
                })
                if settings.get("verbose"):
                    print(f"sigma={sigma} seed={seed} {mode}: "
                          f"test rmse {final.best_test_rmse:.4g}", flush=True)

    with open(outdir / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sigma", "seed", "mode", "final_train_rmse", "final_test_rmse",
                         "mean_complexity", "mean_param_count"])
        for row in rows:
            writer.writerow([row["sigma"], row["seed"], row["mode"],
                             repr(row["final_train_rmse"]), repr(row["final_test_rmse"]),
                             repr(row["mean_complexity"]), repr(row["mean_param_count"])])
    if settings["figures"]:
        figures.sweep_figure(rows, outdir / "sweep.png")
    print(f"wrote {outdir}/sweep.csv ({len(rows)} rows)")
    return 0


_PREDICT_DEFAULTS = {
    "genome": None,
    "posterior": None,
    "data": None,
    "dataset": None,
    "n": 20,
    "sigma": 0.5,
    "data_seed": 0,
    "grid": None,
    "level": 0.95,
    "draws": 50,
    "seed": 0,
    "figures": True,
}


def run_predict(settings: dict) -> int:
    if not settings.get("genome") or not settings.get("posterior"):
        raise ConfigError("predict requires --genome and --posterior")
    if not settings.get("data") and not settings.get("dataset"):
        raise ConfigError("predict requires --data or --dataset (for the MAP particle)")
    if not 0.0 < float(settings["level"]) < 1.0:
        raise ConfigError("level must be in (0, 1)")
    genome = _load_genome_json(settings["genome"])
    thetas, sigmas, weights = _load_posterior_csv(settings["posterior"])
    if thetas.shape[1] != genome.param_count:
        raise ConfigError(
            f"posterior has {thetas.shape[1]} parameters, genome uses {genome.param_count}"
        )
    train, _ = _resolve_dataset(settings)
    ensemble = ensemble_from_samples(genome, train, thetas, sigmas, weights)
    if settings.get("grid"):
        lo, hi, count = str(settings["grid"]).split(":")
        grid = np.linspace(float(lo), float(hi), int(count))
    else:
        grid = _prediction_grid(train)

    outdir = Path(settings["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    _write_resolved_config(outdir, "predict", settings)
    rng = np.random.default_rng(settings["seed"])
    band = predict_bands(genome, ensemble, grid, level=float(settings["level"]),
                         draws=int(settings["draws"]), rng=rng)
    _write_bands_csv(outdir / "bands.csv", band)
    if settings["figures"]:
        figures.band_figure(band, train.x, train.y, outdir / "prediction.png",
                            title=render(genome))
    print(f"wrote {outdir}/bands.csv over {len(grid)} grid points")
    return 0


# ----------------------------------------------------------------- parser


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--seed", type=int, help="master random seed")
    parser.add_argument("--figures", action=argparse.BooleanOptionalAction, default=None,
                        help="render PNG figures beside the data files (default: on)")
    parser.add_argument("--verbose", action="store_true")


def _add_evolution_knobs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mode", choices=(MODE_CONVENTIONAL, MODE_BAYESIAN))
    parser.add_argument("--population", type=int)
    parser.add_argument("--generations", type=int)
    parser.add_argument("--max-commands", type=int, dest="max_commands")
    parser.add_argument("--operators", help="comma list from add,sub,mul,div,pow,sqrt")
    parser.add_argument("--crossover-prob", type=float, dest="crossover_prob")
    parser.add_argument("--mutation-prob", type=float, dest="mutation_prob")
    parser.add_argument("--terminal-bias", type=float, dest="terminal_bias")
    parser.add_argument("--particles", type=int)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--ess-threshold", type=float, dest="ess_threshold")
    parser.add_argument("--mcmc-steps", type=int, dest="mcmc_steps")
    parser.add_argument("--multistarts", type=int)
    parser.add_argument("--fit-starts", type=int, dest="fit_starts")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--paper-scale", action="store_true", default=None,
                        dest="paper_scale",
                        help="population 120, 1000 generations, 600 particles")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bayes-symreg",
        description="Symbolic regression with evidence-driven (fractional Bayes factor) "
                    "selection and a conventional RMSE baseline.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("evolve", help="run one evolution on a dataset")
    _add_common(p)
    _add_evolution_knobs(p)
    p.add_argument("--data", help="training CSV (header x0,..,y)")
    p.add_argument("--dataset", choices=_BUILTIN_DATASETS)
    p.add_argument("--n", type=int, help="points for the sine dataset")
    p.add_argument("--sigma", type=float, help="noise for the sine dataset")
    p.add_argument("--data-seed", type=int, dest="data_seed")
    p.add_argument("--test-data", dest="test_data", help="test CSV (observational only)")
    p.add_argument("--test-size", type=int, dest="test_size")
    p.add_argument("--test-seed", type=int, dest="test_seed")

    p = sub.add_parser("demo-polynomial", help="polynomial order sweep: evidence vs RMSE")
    _add_common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--data-seed", type=int, dest="data_seed")
    p.add_argument("--max-order", type=int, dest="max_order")
    p.add_argument("--particles", type=int)
    p.add_argument("--multistarts", type=int)
    p.add_argument("--gamma", type=float)

    for name, help_text in (
        ("galileo-shelf", "recover D = k sqrt(H) from the shelf data"),
        ("galileo-no-shelf", "evolve on the no-shelf data"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        _add_evolution_knobs(p)

    p = sub.add_parser("sine-sweep", help="noise sweep comparing both modes")
    _add_common(p)
    _add_evolution_knobs(p)
    p.add_argument("--sigmas", help="comma list of noise levels")
    p.add_argument("--seeds", help="comma list of seeds")
    p.add_argument("--n", type=int)
    p.add_argument("--test-size", type=int, dest="test_size")
    p.add_argument("--test-seed", type=int, dest="test_seed")

    p = sub.add_parser("predict", help="bands from a saved genome + posterior")
    _add_common(p)
    p.add_argument("--genome", help="best_genome.json from an evolve run")
    p.add_argument("--posterior", help="best_posterior.csv from an evolve run")
    p.add_argument("--data", help="dataset CSV the posterior was fit on")
    p.add_argument("--dataset", choices=_BUILTIN_DATASETS)
    p.add_argument("--n", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--data-seed", type=int, dest="data_seed")
    p.add_argument("--grid", help="prediction grid as lo:hi:count")
    p.add_argument("--level", type=float)
    p.add_argument("--draws", type=int)
    return parser


_GALILEO_OVERRIDES = {
    "galileo-shelf": {"dataset": "galileo-shelf", "operators": "add,sub,mul,div,pow,sqrt"},
    "galileo-no-shelf": {"dataset": "galileo-no-shelf", "operators": "add,sub,mul,div,pow,sqrt"},
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.subcommand == "evolve":
            settings = _merge_settings(_EVOLVE_DEFAULTS, args)
            settings.update(out=args.out, verbose=args.verbose)
            return run_evolve(settings)
        if args.subcommand in _GALILEO_OVERRIDES:
            defaults = {**_EVOLVE_DEFAULTS, **_GALILEO_OVERRIDES[args.subcommand],
                        "test_size": 0}
            settings = _merge_settings(defaults, args)
            settings.update(out=args.out, verbose=args.verbose)
            return run_evolve(settings, subcommand=args.subcommand)
        if args.subcommand == "demo-polynomial":
            settings = _merge_settings(_DEMO_DEFAULTS, args)
            settings.update(out=args.out, verbose=args.verbose)
            return run_demo_polynomial(settings)
        if args.subcommand == "sine-sweep":
            settings = _merge_settings(_SWEEP_DEFAULTS, args)
            settings.update(out=args.out, verbose=args.verbose)
            return run_sine_sweep(settings)
        if args.subcommand == "predict":
            settings = _merge_settings(_PREDICT_DEFAULTS, args)
            settings.update(out=args.out, verbose=args.verbose)
            return run_predict(settings)
        parser.error(f"unknown subcommand {args.subcommand}")
    except (ConfigError, ds.DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
