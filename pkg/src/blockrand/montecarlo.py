"""Seeded Monte Carlo over the balanced block randomization law.

Replications are drawn in fixed-size batches. Batch ``b`` uses the Philox
stream keyed by ``(seed, b)``, so replication ``i`` depends only on the seed,
the batch size and ``i``. The report is identical for any number of workers,
and a shorter run is a prefix of a longer one.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import moments
from .design import Assignment, BlockDesign, make_rng, sample_labels_batch
from .errors import BlockRandError, VarianceUnestimableError
from .outcomes import ObservedStudy, PotentialOutcomeTable, check_treatment_pair, observe

DEFAULT_REPLICATIONS = 100_000
DEFAULT_BATCH = 4096
BUILTIN_STATISTICS = ("diff", "ht", "varhat_diff", "varhat_ht")


@dataclass(frozen=True)
class SimulationResult:
    statistic: str
    replications: int
    seed: int
    empirical_mean: float
    empirical_variance: float
    mc_standard_error: float  # of the mean: sqrt(variance / R)
    variance_standard_error: float  # delta-method SE of the empirical variance

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(name: str, values: np.ndarray, seed: int) -> SimulationResult:
    R = values.size
    mean = float(values.mean())
    if np.ptp(values) == 0:
        var = fourth = 0.0
    else:
        centered = values - mean
        var = float(centered.var(ddof=1))
        fourth = float(np.mean(centered**4))
    pop_var = var * (R - 1) / R
    var_se = math.sqrt(max(fourth - pop_var * pop_var, 0.0) / R)
    return SimulationResult(name, R, seed, mean, var, math.sqrt(var / R), var_se)


def _block_arrays(table: PotentialOutcomeTable) -> list[np.ndarray]:
    return [np.array([[float(v) for v in row] for row in block]) for block in table.blocks]


class _BlockDraw:
    """Per-arm sufficient statistics of one block over a batch of draws."""

    def __init__(self, y: np.ndarray, labels: np.ndarray, r: int):
        self.m = y.shape[0]
        self.r = r
        self.responses = y[np.arange(self.m), labels - 1]
        self.labels = labels
        self._cache: dict[int, tuple] = {}

    def arm(self, s: int):
        if s not in self._cache:
            mask = self.labels == s
            obs = np.where(mask, self.responses, 0.0)
            count = mask.sum(axis=1)
            total = obs.sum(axis=1)
            squares = (obs * obs).sum(axis=1)
            self._cache[s] = (mask, count, total, squares)
        return self._cache[s]

    def mu_samp(self, s: int) -> np.ndarray:
        _, count, total, _ = self.arm(s)
        return total / count

    def mu_ht(self, s: int) -> np.ndarray:
        return self.arm(s)[2] / (self.m / self.r)

    def s2_samp(self, s: int) -> np.ndarray:
        mask, count, total, _ = self.arm(s)
        mu = total / count
        dev = np.where(mask, self.responses - mu[:, None], 0.0)
        return ((self.m - 1) / self.m) * (dev * dev).sum(axis=1) / (count - 1)

    def s2_ht(self, s: int) -> np.ndarray:
        m, r = self.m, self.r
        z = m % r
        _, _, total, squares = self.arm(s)
        denom = m * m * (m - r) + m * z * (r - z)
        return ((m - 1) * r / (m * m)) * squares - ((m - 1) * r * r / denom) * (total * total - squares)

    def pair_sum(self, s: int) -> np.ndarray:
        _, _, total, squares = self.arm(s)
        return total * total - squares


def _evaluate_batch(blocks, design: BlockDesign, labels: list[np.ndarray], s, t, names):
    r, n = design.r, design.n
    draws = [_BlockDraw(y, lab, r) for y, lab in zip(blocks, labels)]
    out = {}
    for name in names:
        total = None
        for d in draws:
            m = d.m
            z = m % r
            if name == "diff":
                term = (m / n) * (d.mu_samp(s) - d.mu_samp(t))
            elif name == "ht":
                term = (m / n) * (d.mu_ht(s) - d.mu_ht(t))
            elif name == "varhat_diff":
                coef = r / (m - 1) + r * z * (r - z) / ((m - 1) * (m - z) * (m + r - z))
                term = (m * m / (n * n)) * coef * (d.s2_samp(s) + d.s2_samp(t))
            elif name == "varhat_ht":
                inner = (r / (m - 1)) * (d.s2_ht(s) + d.s2_ht(t))
                inner = inner + (r * r * z * (r - z) / (m**3 * (m - r) + m * m * z * (r - z))) * (
                    d.pair_sum(s) + d.pair_sum(t)
                )
                cross = d.arm(s)[2] * d.arm(t)[2]
                inner = inner + (2 * r * r * z * (r - z) / (m**4 * (r - 1) - m * m * z * (r - z))) * cross
                term = (m * m / (n * n)) * inner
            else:
                raise ValueError(name)
            total = term if total is None else total + term
        out[name] = total
    return out


def _evaluate_generic(table, labels, statistics):
    size = labels[0].shape[0]
    out = {stat.label: np.empty(size) for stat in statistics}
    for i in range(size):
        study = study_from_draw(table, labels, i)
        for stat in statistics:
            out[stat.label][i] = float(stat.evaluate(study))
    return out


def _draw_batch(design: BlockDesign, seed: int, batch: int, size: int) -> list[np.ndarray]:
    rng = make_rng(seed, batch)
    return [sample_labels_batch(m, design.r, size, rng) for m in design.block_sizes]


def simulate_values(
    table: PotentialOutcomeTable,
    s: int,
    t: int,
    statistics: Sequence = ("diff", "ht"),
    R: int = DEFAULT_REPLICATIONS,
    seed: int = 0,
    batch_size: int = DEFAULT_BATCH,
    workers: int = 1,
) -> dict[str, np.ndarray]:
    """Per-replication values of each statistic, in replication order."""
    if R < 2:
        raise BlockRandError(f"R must be at least 2 replications, got {R}")
    if batch_size < 1 or workers < 1:
        raise BlockRandError(f"batch_size and workers must be positive, got {batch_size} and {workers}")
    design = table.design
    check_treatment_pair(s, t, design.r)
    names = [x for x in statistics if isinstance(x, str)]
    custom = [x for x in statistics if not isinstance(x, str)]
    for name in names:
        if name not in BUILTIN_STATISTICS:
            raise BlockRandError(f"unknown statistic {name!r}; choose from {list(BUILTIN_STATISTICS)}")
        if name.startswith("varhat") and not design.supports_variance_estimation():
            raise VarianceUnestimableError(
                f"block sizes must be at least 2r = {2 * design.r} for {name}"
            )
    blocks = _block_arrays(table)
    sizes = [min(batch_size, R - start) for start in range(0, R, batch_size)]

    def run(batch: int):
        # full-size draw then truncate, so replication i never depends on R
        labels = [lab[: sizes[batch]] for lab in _draw_batch(design, seed, batch, batch_size)]
        result = _evaluate_batch(blocks, design, labels, s, t, names)
        if custom:
            result.update(_evaluate_generic(table, labels, custom))
        return result

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]
    labels = names + [stat.label for stat in custom]
    return {name: np.concatenate([p[name] for p in parts]) for name in labels}


def simulate(
    table: PotentialOutcomeTable,
    s: int,
    t: int,
    statistics: Sequence = ("diff", "ht"),
    R: int = DEFAULT_REPLICATIONS,
    seed: int = 0,
    batch_size: int = DEFAULT_BATCH,
    workers: int = 1,
) -> dict[str, SimulationResult]:
    """Empirical moments of SATE estimators over ``R`` seeded balanced block draws.

    ``statistics`` holds built-in names (``diff``, ``ht``, ``varhat_diff``,
    ``varhat_ht``) and/or :class:`~blockrand.oracle.Statistic` objects; the
    latter are evaluated one replication at a time.
    """
    values = simulate_values(table, s, t, statistics, R, seed, batch_size, workers)
    return {name: summarize(name, v, seed) for name, v in values.items()}


@dataclass(frozen=True)
class EstimatorComparison:
    s: int
    t: int
    diff: SimulationResult
    ht: SimulationResult
    variance_difference: float  # empirical Var(ht) - Var(diff)
    identical_per_draw: bool
    divisible: bool
    theoretical_var_diff: float
    theoretical_var_ht: float

    def to_dict(self) -> dict:
        out = asdict(self)
        out["diff"] = self.diff.to_dict()
        out["ht"] = self.ht.to_dict()
        return out


def compare_estimators(
    table: PotentialOutcomeTable,
    s: int,
    t: int,
    R: int = DEFAULT_REPLICATIONS,
    seed: int = 0,
    batch_size: int = DEFAULT_BATCH,
    workers: int = 1,
) -> EstimatorComparison:
    """Side-by-side empirical variances of the two SATE estimators (no ordering asserted)."""
    values = simulate_values(table, s, t, ("diff", "ht"), R, seed, batch_size, workers)
    diff = summarize("diff", values["diff"], seed)
    ht = summarize("ht", values["ht"], seed)
    return EstimatorComparison(
        s,
        t,
        diff,
        ht,
        ht.empirical_variance - diff.empirical_variance,
        bool(np.array_equal(values["diff"], values["ht"])),
        table.design.divisible(),
        float(moments.var_sate_diff(table, s, t)),
        float(moments.var_sate_ht(table, s, t)),
    )


def study_from_draw(table: PotentialOutcomeTable, labels: list[np.ndarray], i: int) -> ObservedStudy:
    """Rebuild replication ``i`` of a batch as an ObservedStudy (for cross-checks)."""
    return observe(table, Assignment(tuple(tuple(int(x) for x in lab[i]) for lab in labels)))
