"""Two-step Poisson data generation and coverage experiments for beta1.

Each replicate draws person-years, true log rates and event counts, then
checks whether the WLS Wald interval and the r_P and rbar_P intervals cover
the true slope. Replicate ``i`` of a cell always uses the random stream
seeded by ``(seed, cell key, i)``, so results do not depend on how the
replicates are spread over worker processes.
"""
from __future__ import annotations

import csv
import itertools
import logging
import math
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from statistics import NormalDist

import numpy as np

from .data import Dataset, StudyCounts
from .estimation import DegenerateDesignError
from .optimize import OptimizerConfig
from .skovgaard import ProfileAnalysis, confint_beta1

log = logging.getLogger(__name__)

METHODS = ("wls", "r_p", "r_bar")
CSV_HEADER = ("scenario", "n", "tau", "sigma", "method", "coverage", "mc_se", "failures",
              "replicates")

COVERED, MISSED, FAILED = 1, 0, -1


@dataclass(frozen=True)
class Scenario:
    beta0: float
    beta1: float
    mu: float
    tau: float
    sigma: float = 1.0
    label: str = "custom"

    def __post_init__(self):
        if not (self.tau > 0 and self.sigma > 0):
            raise ValueError("tau and sigma must be positive")
        for v in (self.beta0, self.beta1, self.mu, self.tau, self.sigma):
            if not math.isfinite(v):
                raise ValueError("scenario parameters must be finite")


# (beta0, beta1, mu) of the four reference scenarios, by decreasing event rate
SCENARIOS = {
    1: (0.0, 1.0, 1.0),
    2: (-1.5, 1.0, -0.5),
    3: (-1.5, 1.0, -2.5),
    4: (-3.0, 1.0, -2.0),
}


def scenario(number: int, tau: float, sigma: float = 1.0) -> Scenario:
    try:
        b0, b1, mu = SCENARIOS[int(number)]
    except (KeyError, ValueError):
        raise ValueError(f"unknown scenario {number!r}; choose from {sorted(SCENARIOS)}") from None
    return Scenario(b0, b1, mu, tau, sigma, label=str(number))


@dataclass(frozen=True)
class SimulationConfig:
    scenario: Scenario
    n: int
    replicates: int = 1000
    level: float = 0.95
    seed: int = 0
    person_years_range: tuple = (100.0, 5000.0)
    parallelism: int = 1
    ci_mode: str = "test"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig.tight)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        low, high = self.person_years_range
        if not 0 < low < high:
            raise ValueError("person_years_range must satisfy 0 < low < high")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.ci_mode not in ("test", "interval"):
            raise ValueError("ci_mode must be 'test' or 'interval'")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    def cell_key(self) -> int:
        s = self.scenario
        text = f"{s.beta0!r},{s.beta1!r},{s.mu!r},{s.tau!r},{s.sigma!r},{self.n}"
        return zlib.crc32(text.encode())


@dataclass
class MethodCoverage:
    covered: int = 0
    missed: int = 0
    failed: int = 0

    @property
    def evaluated(self) -> int:
        return self.covered + self.missed

    @property
    def coverage(self) -> float:
        return self.covered / self.evaluated if self.evaluated else float("nan")

    @property
    def mc_se(self) -> float:
        m = self.evaluated
        if not m:
            return float("nan")
        c = self.coverage
        return math.sqrt(c * (1 - c) / m)


@dataclass
class CoverageResult:
    config: SimulationConfig
    methods: dict
    diagnostics: dict

    @property
    def replicates(self) -> int:
        return self.config.replicates

    def coverage(self, method: str) -> float:
        return self.methods[method].coverage

    def rows(self):
        s = self.config.scenario
        for name in METHODS:
            m = self.methods[name]
            yield (s.label, self.config.n, s.tau, s.sigma, name, m.coverage, m.mc_se, m.failed,
                   self.replicates)


def replicate_rng(seed: int, cell_key: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, cell_key, index])))


def simulate_dataset(scn: Scenario, n: int, rng: np.random.Generator,
                     person_years_range=(100.0, 5000.0)):
    """One meta-analysis of ``n`` studies; returns ``(Dataset, true beta1)``."""
    low, high = person_years_range
    py_treated = rng.uniform(low, high, n)
    py_control = rng.uniform(low, high, n)
    xi = rng.normal(scn.mu, scn.sigma, n)
    eta = scn.beta0 + scn.beta1 * xi + rng.normal(0.0, scn.tau, n)
    d_treated = rng.poisson(py_treated * np.exp(eta))
    d_control = rng.poisson(py_control * np.exp(xi))
    counts = [StudyCounts(float(a), float(b), float(c), float(d))
              for a, b, c, d in zip(d_treated, py_treated, d_control, py_control)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # small-n warning is expected here
        return Dataset.from_counts(counts), scn.beta1


def _replicate(config: SimulationConfig, z: float, index: int):
    rng = replicate_rng(config.seed, config.cell_key(), index)
    data, truth = simulate_dataset(config.scenario, config.n, rng, config.person_years_range)
    out = {"wls": FAILED, "r_p": FAILED, "r_bar": FAILED}
    flags = set()
    try:
        analysis = ProfileAnalysis(data, config.optimizer)
    except Exception as exc:  # a failed replicate is data, not an error
        flags.add(type(exc).__name__)
        try:
            wls = confint_beta1(data, config.level, "wald")
            out["wls"] = COVERED if wls.covers(truth) else MISSED
        except DegenerateDesignError:
            pass
        return out, flags

    wald = confint_beta1(data, config.level, "wald", analysis=analysis)
    if math.isfinite(wald.lower) and math.isfinite(wald.upper):
        out["wls"] = COVERED if wald.covers(truth) else MISSED
    if not analysis.mle.converged:
        flags.add("mle-not-converged")
    try:
        if config.ci_mode == "test":
            point = analysis.at(truth)
            flags |= point.flags
            for name, stat in (("r_p", point.r_p), ("r_bar", point.r_bar)):
                if math.isfinite(stat):
                    out[name] = COVERED if abs(stat) < z else MISSED
        else:
            for name in ("r_p", "r_bar"):
                ci = confint_beta1(data, config.level, name, analysis=analysis)
                flags |= ci.diagnostics
                out[name] = COVERED if ci.covers(truth) else MISSED
    except Exception as exc:
        flags.add(type(exc).__name__)
    return out, flags


def _run_chunk(config: SimulationConfig, indices):
    z = NormalDist().inv_cdf(0.5 + config.level / 2)
    return [_replicate(config, z, i) for i in indices]


def _chunks(total: int, size: int):
    return [range(a, min(a + size, total)) for a in range(0, total, size)]


def coverage_study(config: SimulationConfig) -> CoverageResult:
    """Empirical coverage of the nominal-``level`` intervals for beta1.

    In ``test`` mode an interval covers the truth exactly when the test of
    beta1 = truth does not reject, so only one constrained fit is needed per
    replicate; ``interval`` mode computes the intervals explicitly.
    """
    workers = min(config.parallelism, config.replicates)
    if workers == 1:
        results = _run_chunk(config, range(config.replicates))
    else:
        size = max(1, math.ceil(config.replicates / (4 * workers)))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_chunk, itertools.repeat(config),
                             _chunks(config.replicates, size))
            results = [r for part in parts for r in part]
    methods = {name: MethodCoverage() for name in METHODS}
    diagnostics: dict = {}
    for out, flags in results:
        for name, status in out.items():
            m = methods[name]
            if status == COVERED:
                m.covered += 1
            elif status == MISSED:
                m.missed += 1
            else:
                m.failed += 1
        for flag in flags:
            diagnostics[flag] = diagnostics.get(flag, 0) + 1
    return CoverageResult(config=config, methods=methods, diagnostics=diagnostics)


def grid_runner(scenarios, n_values, tau_grid=None, sigma_grid=None,
                base: SimulationConfig | None = None, **overrides):
    """Coverage over the Cartesian product of scenarios, study counts and grids.

    ``scenarios`` holds reference numbers (1-4) or :class:`Scenario` objects.
    ``tau_grid`` and ``sigma_grid`` replace the scenario's tau and sigma;
    an omitted grid keeps the scenario's value (tau 1.2 and sigma 1.0 for
    reference numbers). Other :class:`SimulationConfig` fields come from
    ``base`` or keyword overrides.
    """
    scenarios, n_values = list(scenarios), list(n_values)
    if not scenarios or not n_values:
        raise ValueError("scenario and n grids must be nonempty")
    if tau_grid is not None and not list(tau_grid) or sigma_grid is not None and not list(sigma_grid):
        raise ValueError("tau and sigma grids must be nonempty when given")
    results = []
    for scn, n, tau, sigma in itertools.product(
            scenarios, n_values, tau_grid or [None], sigma_grid or [None]):
        if not isinstance(scn, Scenario):
            scn = scenario(scn, tau=1.2)
        scn = replace(scn, tau=scn.tau if tau is None else float(tau),
                      sigma=scn.sigma if sigma is None else float(sigma))
        if base is None:
            cfg = SimulationConfig(scenario=scn, n=int(n), **overrides)
        else:
            cfg = replace(base, scenario=scn, n=int(n), **overrides)
        try:
            results.append(coverage_study(cfg))
        except Exception as exc:
            log.error("cell %s n=%s failed: %s", scn, n, exc)
            results.append(CoverageResult(
                config=cfg,
                methods={m: MethodCoverage(failed=cfg.replicates) for m in METHODS},
                diagnostics={type(exc).__name__: 1}))
    return results


def _fmt(value):
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.6g}"
    return str(value)


def write_coverage_csv(results, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for res in results:
        for row in res.rows():
            writer.writerow([_fmt(v) for v in row])
