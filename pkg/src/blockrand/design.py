"""Blocked designs, balanced assignments, enumeration and sampling.

Treatments are numbered ``1..r``. Units are addressed by ``(block, unit)``
with both indices zero-based internally; the file formats use one-based ids.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .errors import DesignError, EnumerationCapExceeded, ShapeError

DEFAULT_ENUMERATION_CAP = 10**7


@dataclass(frozen=True)
class BlockDesign:
    """``r`` treatments assigned within blocks of the given sizes."""

    num_treatments: int
    block_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "block_sizes", tuple(int(s) for s in self.block_sizes))
        r = self.num_treatments
        if not isinstance(r, (int, np.integer)) or isinstance(r, bool) or r < 2:
            raise DesignError(f"num_treatments must be an integer >= 2, got {r!r}")
        if len(self.block_sizes) == 0:
            raise DesignError("block_sizes must contain at least one block")
        for c, size in enumerate(self.block_sizes):
            if size < r:
                raise DesignError(
                    f"block_sizes[{c}] = {size} is smaller than the number of treatments r = {r}"
                )

    @property
    def r(self) -> int:
        return self.num_treatments

    @property
    def n(self) -> int:
        return sum(self.block_sizes)

    @property
    def num_blocks(self) -> int:
        return len(self.block_sizes)

    @property
    def t_star(self) -> int:
        """Smallest block size."""
        return min(self.block_sizes)

    @property
    def z(self) -> int:
        """Domain-level remainder ``n mod r``."""
        return self.n % self.r

    @property
    def block_remainders(self) -> tuple[int, ...]:
        return tuple(size % self.r for size in self.block_sizes)

    def divisible(self) -> bool:
        """True when ``r`` divides every block size."""
        return all(z == 0 for z in self.block_remainders)

    def supports_variance_estimation(self) -> bool:
        return all(size >= 2 * self.r for size in self.block_sizes)

    def as_complete(self) -> "BlockDesign":
        """The single-stratum design over all ``n`` units."""
        return BlockDesign(self.r, (self.n,))


@dataclass(frozen=True)
class Assignment:
    """One treatment label per unit, grouped by block."""

    labels: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "labels", tuple(tuple(int(x) for x in block) for block in self.labels)
        )

    @classmethod
    def from_flat(cls, flat: Sequence[int], block_sizes: Sequence[int]) -> "Assignment":
        if len(flat) != sum(block_sizes):
            raise ShapeError(f"expected {sum(block_sizes)} labels, got {len(flat)}")
        blocks, start = [], 0
        for size in block_sizes:
            blocks.append(tuple(flat[start:start + size]))
            start += size
        return cls(tuple(blocks))

    def flat(self) -> tuple[int, ...]:
        return tuple(itertools.chain.from_iterable(self.labels))

    def indicator(self, k: int, c: int, s: int) -> int:
        return int(self.labels[c][k] == s)


@dataclass(frozen=True)
class AssignmentCounts:
    per_block: tuple[tuple[int, ...], ...]  # per_block[c][s - 1] = #T_cs
    totals: tuple[int, ...]  # totals[s - 1] = #T_s


def count_balanced_assignments(n: int, r: int) -> int:
    """Number of balanced assignments of ``r`` treatments to ``n`` units."""
    if r < 1:
        raise DesignError(f"r must be positive, got {r}")
    if n < r:
        raise DesignError(f"n = {n} is smaller than r = {r}")
    q, z = divmod(n, r)
    total = math.comb(r, z)
    for i in range(z):
        total *= math.comb(n - i * (q + 1), q + 1)
    for i in range(r - z):
        total *= math.comb(n - z * (q + 1) - i * q, q)
    return total


def count_block_assignments(design: BlockDesign) -> int:
    return math.prod(count_balanced_assignments(size, design.r) for size in design.block_sizes)


def _labelings(n: int, r: int) -> Iterator[tuple[int, ...]]:
    # Lexicographic in (subset of treatments getting the extra unit, unit partition).
    q, z = divmod(n, r)
    labels = [0] * n

    def fill(s: int, remaining: tuple[int, ...], sizes: tuple[int, ...]):
        if s == r:
            yield tuple(labels)
            return
        for chosen in itertools.combinations(remaining, sizes[s]):
            for k in chosen:
                labels[k] = s + 1
            picked = set(chosen)
            rest = tuple(k for k in remaining if k not in picked)
            yield from fill(s + 1, rest, sizes)

    for extra in itertools.combinations(range(r), z):
        sizes = tuple(q + 1 if s in extra else q for s in range(r))
        yield from fill(0, tuple(range(n)), sizes)


def _check_cap(count: int, cap: int | None) -> None:
    if cap is not None and count > cap:
        raise EnumerationCapExceeded(
            f"enumeration would produce {count} assignments, above the cap of {cap}; "
            "use Monte Carlo simulation for designs this large"
        )


@lru_cache(maxsize=256)
def balanced_labelings(n: int, r: int) -> tuple[tuple[int, ...], ...]:
    """Cached tuple of every balanced labeling of ``n`` units (no cap check)."""
    count_balanced_assignments(n, r)
    return tuple(_labelings(n, r))


def enumerate_complete(
    n: int, r: int, cap: int | None = DEFAULT_ENUMERATION_CAP
) -> Iterator[Assignment]:
    """Yield every balanced assignment of ``n`` units, as a single block."""
    _check_cap(count_balanced_assignments(n, r), cap)
    for labels in _labelings(n, r):
        yield Assignment((labels,))


def enumerate_block(
    design: BlockDesign, cap: int | None = DEFAULT_ENUMERATION_CAP
) -> Iterator[Assignment]:
    """Yield every balanced block assignment: the product of per-block enumerations."""
    _check_cap(count_block_assignments(design), cap)
    per_block = [balanced_labelings(size, design.r) for size in design.block_sizes]
    for combo in itertools.product(*per_block):
        yield Assignment(combo)


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based Philox stream identified by ``seed`` and a tuple of integer keys."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def _as_generator(rng: np.random.Generator | int) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return make_rng(int(rng))


def _balanced_labels(n: int, r: int, rng: np.random.Generator) -> tuple[int, ...]:
    q, z = divmod(n, r)
    extra = set(rng.choice(r, size=z, replace=False).tolist()) if z else set()
    base = []
    for s in range(r):
        base.extend([s + 1] * (q + 1 if s in extra else q))
    return tuple(int(x) for x in rng.permutation(base))


def sample_complete(n: int, r: int, rng: np.random.Generator | int) -> Assignment:
    """Draw one balanced, completely randomized assignment of ``n`` units."""
    count_balanced_assignments(n, r)
    return Assignment((_balanced_labels(n, r, _as_generator(rng)),))


def sample_block(design: BlockDesign, rng: np.random.Generator | int) -> Assignment:
    """Draw one balanced block-randomized assignment, blocks in order."""
    gen = _as_generator(rng)
    return Assignment(tuple(_balanced_labels(size, design.r, gen) for size in design.block_sizes))


def sample_labels_batch(n: int, r: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` independent balanced labelings of ``n`` units as an int array.

    A uniformly random ordering of the treatments decides which ``n mod r`` of
    them get the extra unit, then the label multiset is shuffled per row.
    """
    q, z = divmod(n, r)
    order = np.argsort(rng.random((size, r)), axis=1)
    slots = np.repeat(np.arange(r), [q + 1 if j < z else q for j in range(r)])
    labels = np.take_along_axis(order, np.broadcast_to(slots, (size, n)), axis=1) + 1
    return rng.permuted(labels, axis=1)


def counts_of(assignment: Assignment, design: BlockDesign) -> AssignmentCounts:
    check_assignment_shape(assignment, design)
    per_block = tuple(
        tuple(block.count(s) for s in range(1, design.r + 1)) for block in assignment.labels
    )
    totals = tuple(sum(col) for col in zip(*per_block))
    return AssignmentCounts(per_block, totals)


def check_assignment_shape(assignment: Assignment, design: BlockDesign) -> None:
    if len(assignment.labels) != design.num_blocks:
        raise ShapeError(
            f"assignment has {len(assignment.labels)} blocks, design has {design.num_blocks}"
        )
    for c, (block, size) in enumerate(zip(assignment.labels, design.block_sizes)):
        if len(block) != size:
            raise ShapeError(f"block {c + 1} has {len(block)} labels, design expects {size}")
        for k, s in enumerate(block):
            if not 1 <= s <= design.r:
                raise ShapeError(
                    f"unit {k + 1} in block {c + 1} has treatment {s}, outside 1..{design.r}"
                )


def _balanced_counts(counts: Sequence[int], m: int, r: int) -> bool:
    q, z = divmod(m, r)
    return sorted(counts) == [q] * (r - z) + [q + 1] * z


def is_balanced(assignment: Assignment, design: BlockDesign, mode: str = "block") -> bool:
    counts = counts_of(assignment, design)
    if mode == "complete":
        return _balanced_counts(counts.totals, design.n, design.r)
    if mode != "block":
        raise ValueError(f"mode must be 'block' or 'complete', got {mode!r}")
    return all(
        _balanced_counts(row, size, design.r)
        for row, size in zip(counts.per_block, design.block_sizes)
    )
