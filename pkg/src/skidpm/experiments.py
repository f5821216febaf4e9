"""Experiment harness: idle-period datasets, predictions, experts and the combiner.

A config (TOML) names a dataset, one or more power-state systems, prediction
sources and algorithm families. Every repeat draws its own dataset, noise
and combiner randomness from a seed sequence; all prediction-noise levels of
one repeat share the same standard-normal draws.
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .baselines import (adjkr_array, adjkr_lambda, deterministic_array, ftp_array,
                        psk_array, psk_lambda)
from .combiner import run_combiner
from .datasets import DatasetError, IdleDataset, load_jsonl, trace_dataset
from .distribution import DistArray
from .dpm import (IBM_HDD, TWO_STATE, PolicyArray, PowerStateSystem, SystemError_,
                  offline_opt_costs, ours_builder, prune_states)
from .predictors import noisy_prediction, share_predictions
from .skirental import RHO_MAX, build_unit_array

FAMILIES = ("ours", "psk", "adjkr", "ftp", "classic", "det2")
RANDOMIZED = {"ours", "psk", "classic"}
SYSTEMS = {"two_state": TWO_STATE, "ibm": IBM_HDD}
PREDICTORS = ("noise", "share", "share-bad")


class ConfigError(ValueError):
    pass


def parse_rho(value) -> float:
    if isinstance(value, str):
        if value.replace(" ", "") in {"e/(e-1)", "rho_max"}:
            return RHO_MAX
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"cannot read rho value {value!r}")
    return float(value)


@dataclass(frozen=True)
class Expert:
    family: str
    rho: Optional[float] = None

    @property
    def label(self) -> str:
        return self.family if self.rho is None else f"{self.family}:{self.rho:.6g}"

    def builder(self) -> Callable[[np.ndarray], DistArray]:
        f, rho = self.family, self.rho
        if f == "ours":
            return ours_builder(rho)
        if f == "psk":
            # consistency 1 forces lambda -> 0, which is blind trust in the prediction
            if rho <= 1.0:
                return ftp_array
            lam = psk_lambda(rho)
            return lambda taus: psk_array(taus, lam)
        if f == "adjkr":
            lam = adjkr_lambda(rho)
            return lambda taus: adjkr_array(taus, lam)
        if f == "ftp":
            return ftp_array
        if f == "classic":
            return lambda taus: build_unit_array(RHO_MAX, 0.0, taus)
        if f == "det2":
            return lambda taus: deterministic_array(np.ones(len(taus)))
        raise ConfigError(f"unknown algorithm family {f!r}")

    @property
    def randomized(self) -> bool:
        return self.family in RANDOMIZED


@dataclass(frozen=True)
class AlgorithmSpec:
    """A named set of experts, reported one by one (``fixed``) and/or combined."""

    name: str
    experts: tuple[Expert, ...]
    fixed: bool = True
    combined: bool = False


def parse_expert(text: str) -> Expert:
    """``family`` or ``family:rho``, e.g. ``ours:1.1`` or ``psk:e/(e-1)``."""
    family, _, rho = str(text).partition(":")
    if family not in FAMILIES:
        raise ConfigError(f"unknown algorithm family {family!r}; known: {FAMILIES}")
    return Expert(family, parse_rho(rho) if rho else None)


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    n: int = 10_000
    hi: float = 4.0
    path: Optional[str] = None
    delimiter: Optional[str] = ","
    column: int = 0
    unit: Optional[str] = None
    target_mean: float = 2.0
    skip_rows: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    dataset: DatasetSpec
    systems: tuple[tuple[str, PowerStateSystem], ...]
    algorithms: tuple[AlgorithmSpec, ...]
    predictors: tuple[str, ...] = ("noise",)
    sigmas: tuple[float, ...] = (0.0,)
    repeats: int = 10
    seed: int = 0
    eps1: float = 0.1
    eps_bound: float = 1.0
    share_rate: float = 0.0
    prudent: tuple[bool, ...] = (True,)
    share_scale: float = 2.0
    digest: str = field(default="", compare=False)


def _system(entry) -> tuple[str, PowerStateSystem]:
    if isinstance(entry, str):
        if entry not in SYSTEMS:
            raise ConfigError(f"unknown system {entry!r}; known: {sorted(SYSTEMS)}")
        return entry, SYSTEMS[entry]
    try:
        sys_ = PowerStateSystem(tuple(entry["alphas"]), tuple(entry["betas"]))
        return str(entry.get("name", "custom")), prune_states(sys_)
    except (KeyError, TypeError, SystemError_) as exc:
        raise ConfigError(f"bad system entry {entry!r}: {exc}")


def _algorithm(entry: dict) -> AlgorithmSpec:
    if "experts" in entry:
        experts = tuple(parse_expert(e) for e in entry["experts"])
        default_name, fixed, combined = "+".join(e.family for e in experts), False, True
    else:
        family = entry.get("family")
        if family not in FAMILIES:
            raise ConfigError(f"unknown algorithm family {family!r}; known: {FAMILIES}")
        rhos = tuple(parse_rho(r) for r in entry.get("rhos", ()))
        experts = tuple(Expert(family, r) for r in rhos) or (Expert(family),)
        default_name, fixed, combined = family, True, False
    if not experts:
        raise ConfigError("algorithm entry lists no experts")
    for e in experts:
        if e.family in {"ours", "psk", "adjkr"} and e.rho is None:
            raise ConfigError(f"algorithm family {e.family!r} needs a consistency value rho")
        try:
            e.builder()
        except ValueError as exc:
            raise ConfigError(f"{e.label}: {exc}")
    return AlgorithmSpec(str(entry.get("name", default_name)), experts,
                         bool(entry.get("fixed", fixed)), bool(entry.get("combined", combined)))


def config_from_dict(raw: dict, digest: str = "") -> ExperimentConfig:
    try:
        ds = dict(raw["dataset"])
        dataset = DatasetSpec(**ds)
    except KeyError:
        raise ConfigError("config needs a [dataset] table")
    except TypeError as exc:
        raise ConfigError(f"bad [dataset] table: {exc}")
    if dataset.kind not in {"uniform", "trace", "jsonl"}:
        raise ConfigError(f"unknown dataset kind {dataset.kind!r}")
    if dataset.kind == "trace" and not dataset.unit:
        raise ConfigError("trace datasets need an explicit time unit")
    if dataset.kind in {"trace", "jsonl"} and not dataset.path:
        raise ConfigError(f"{dataset.kind} datasets need a path")
    predictors = tuple(raw.get("predictors", ["noise"]))
    for p in predictors:
        if p not in PREDICTORS:
            raise ConfigError(f"unknown predictor {p!r}; known: {PREDICTORS}")
    prudent = raw.get("prudent", True)
    prudent = tuple(bool(p) for p in (prudent if isinstance(prudent, list) else [prudent]))
    algorithms = tuple(_algorithm(a) for a in raw.get("algorithms", []))
    if not algorithms:
        raise ConfigError("config lists no algorithms")
    systems = tuple(_system(s) for s in raw.get("systems", ["two_state"]))
    cfg = ExperimentConfig(
        name=str(raw.get("name", "experiment")), dataset=dataset, systems=systems,
        algorithms=algorithms, predictors=predictors,
        sigmas=tuple(float(s) for s in raw.get("sigmas", [0.0])),
        repeats=int(raw.get("repeats", 10)), seed=int(raw.get("seed", 0)),
        eps1=float(raw.get("eps1", 0.1)), eps_bound=float(raw.get("eps_bound", 1.0)),
        share_rate=float(raw.get("share_rate", 0.0)), prudent=prudent,
        share_scale=float(raw.get("share_scale", 2.0)), digest=digest)
    if cfg.repeats < 1 or cfg.eps1 <= 0 or cfg.eps_bound <= 0 or any(s < 0 for s in cfg.sigmas):
        raise ConfigError("repeats must be >= 1, eps values positive and sigmas non-negative")
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    try:
        raw = tomllib.loads(data.decode())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}")
    if "dataset" in raw and raw["dataset"].get("path"):
        p = Path(raw["dataset"]["path"])
        if not p.is_absolute():
            raw["dataset"]["path"] = str(Path(path).parent / p)
    return config_from_dict(raw, hashlib.sha256(data).hexdigest())


# -- data ----------------------------------------------------------------------

def _streams(cfg: ExperimentConfig, repeat: int):
    """Independent generators for the dataset, the prediction noise and the combiner."""
    data, noise, comb = np.random.SeedSequence([cfg.seed, repeat]).spawn(3)
    return (np.random.default_rng(data), np.random.default_rng(noise), np.random.default_rng(comb))


def load_dataset(cfg: ExperimentConfig, data_rng: Optional[np.random.Generator] = None) -> IdleDataset:
    ds = cfg.dataset
    if ds.kind == "uniform":
        rng = data_rng or np.random.default_rng(cfg.seed)
        return IdleDataset(rng.uniform(0.0, ds.hi, ds.n),
                           source={"generator": "uniform", "hi": ds.hi, "n": ds.n})
    try:
        if ds.kind == "trace":
            return trace_dataset(ds.path, ds.delimiter, ds.column, ds.unit, ds.target_mean, ds.skip_rows)
        return load_jsonl(ds.path)
    except (OSError, DatasetError) as exc:
        raise ConfigError(f"dataset: {exc}")


def generate(cfg: ExperimentConfig, seed: Optional[int] = None, sigma: Optional[float] = None) -> IdleDataset:
    """The dataset of the first repeat, optionally with noisy predictions attached."""
    if seed is not None:
        cfg = _with_seed(cfg, seed)
    data_rng, noise_rng, _ = _streams(cfg, 0)
    ds = load_dataset(cfg, data_rng)
    ds.source = {**ds.source, "seed": cfg.seed}
    if sigma is not None:
        z = noise_rng.standard_normal(len(ds))
        ds.predictions = noisy_prediction(ds.lengths, sigma, z)
        ds.source["sigma"] = sigma
    return ds


def _with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    return replace(cfg, seed=seed)


# -- evaluation ----------------------------------------------------------------

def cost_bound(system: PowerStateSystem, eps: float, max_length: float) -> float:
    """Largest possible period cost of bounded-variant experts."""
    return system.betas[-1] * (4.0 + 1.0 / eps) + system.alphas[-1] * max_length


def expert_costs(system: PowerStateSystem, expert: Expert, predictions, lengths,
                 prudent: bool, cutoff: Optional[float] = None) -> np.ndarray:
    """Expected cost of ``expert`` in every period."""
    pol = PolicyArray.build(system, predictions, expert.builder(), cutoff)
    if prudent and expert.randomized and system.k > 1:
        return pol.prudent_costs(lengths)
    return pol.expected_costs(lengths)


@dataclass
class Row:
    dataset: str
    system: str
    algorithm: str
    rho: Optional[float]
    predictor: str
    sigma: Optional[float]
    prudent: bool
    seed: int
    ratio: float


def _prediction_sets(cfg, lengths, noise_rng):
    z = noise_rng.standard_normal(len(lengths))
    for p in cfg.predictors:
        if p == "noise":
            for s in cfg.sigmas:
                yield p, s, noisy_prediction(lengths, s, z)
        else:
            yield p, None, share_predictions(lengths, scale=cfg.share_scale, bad=(p == "share-bad"))


def run_unit(cfg: ExperimentConfig, system_name: str, repeat: int) -> list[Row]:
    """All rows of one (system, repeat) pair."""
    system = dict(cfg.systems)[system_name]
    data_rng, noise_rng, comb_rng = _streams(cfg, repeat)
    lengths = load_dataset(cfg, data_rng).lengths
    if len(lengths) == 0:
        raise ConfigError("dataset has no idle periods")
    us = comb_rng.random(len(lengths))
    opt = offline_opt_costs(system, lengths).sum()
    cutoff = 3.0 + 1.0 / cfg.eps_bound
    bound = cost_bound(system, cfg.eps_bound, float(lengths.max()))
    seed_label = cfg.seed * 1000 + repeat
    rows = []
    for predictor, sigma, taus in _prediction_sets(cfg, lengths, noise_rng):
        for prudent in cfg.prudent:
            cache: dict = {}

            def costs(expert: Expert, bounded: bool) -> np.ndarray:
                use_prudent = prudent and expert.randomized and system.k > 1
                key = (expert, bounded, use_prudent)
                if key not in cache:
                    cache[key] = expert_costs(system, expert, taus, lengths, use_prudent,
                                              cutoff if bounded else None)
                return cache[key]

            for alg in cfg.algorithms:
                experts = alg.experts
                # deterministic variants are unaffected by the prudence switch
                if not prudent and True in cfg.prudent and not any(e.randomized for e in experts):
                    continue
                base = dict(dataset=cfg.name, system=system_name, predictor=predictor,
                            sigma=sigma, prudent=prudent, seed=seed_label)
                if alg.fixed:
                    for e in experts:
                        rows.append(Row(algorithm=alg.name, rho=e.rho,
                                        ratio=float(costs(e, False).sum() / opt), **base))
                if alg.combined:
                    matrix = np.stack([costs(e, True) for e in experts], axis=1)
                    run = run_combiner(matrix, cfg.eps1, bound, us, cfg.share_rate)
                    rows.append(Row(algorithm=f"{alg.name}-combined", rho=None,
                                    ratio=float(run.total / opt), **base))
    return rows


def run_experiment(cfg: ExperimentConfig, parallel: int = 1) -> list[Row]:
    units = [(name, r) for name, _ in cfg.systems for r in range(cfg.repeats)]
    if parallel > 1:
        with ProcessPoolExecutor(parallel) as pool:
            parts = list(pool.map(run_unit, [cfg] * len(units), *zip(*units)))
    else:
        parts = [run_unit(cfg, name, r) for name, r in units]
    return [row for part in parts for row in part]


def cell_key(row: Row) -> tuple:
    return (row.dataset, row.system, row.algorithm, row.rho, row.predictor, row.sigma, row.prudent)


def summarize(rows: list[Row]) -> list[dict]:
    """Mean and standard deviation of the ratio over repeats, per cell, in first-seen order."""
    cells: dict = {}
    for row in rows:
        cells.setdefault(cell_key(row), []).append(row.ratio)
    out = []
    for key, ratios in cells.items():
        r = np.array(ratios)
        out.append(dict(zip(("dataset", "system", "algorithm", "rho", "predictor", "sigma", "prudent"), key),
                        mean_ratio=float(r.mean()), std_ratio=float(r.std(ddof=1)) if len(r) > 1 else 0.0,
                        repeats=len(r)))
    return out
