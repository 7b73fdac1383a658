"""Potential outcomes, observed data and the fixed population parameters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .design import Assignment, BlockDesign, check_assignment_shape
from .errors import ShapeError
from .numeric import Number, convert, is_exact


@dataclass(frozen=True)
class PotentialOutcomeTable:
    """``blocks[c][k][s - 1]`` is the outcome of unit ``k`` in block ``c`` under ``s``.

    Values are all ``float`` or all ``Fraction``; use :meth:`from_nested`
    to build one from raw numbers.
    """

    blocks: tuple[tuple[tuple[Number, ...], ...], ...]

    def __post_init__(self) -> None:
        if not self.blocks:
            raise ShapeError("table must contain at least one block")
        widths = {len(row) for block in self.blocks for row in block}
        if any(len(block) == 0 for block in self.blocks):
            raise ShapeError("every block must contain at least one unit")
        if len(widths) != 1:
            raise ShapeError(f"every unit needs one outcome per treatment; row widths {sorted(widths)}")
        kinds = {is_exact(v) for block in self.blocks for row in block for v in row}
        if len(kinds) != 1:
            raise ShapeError("table mixes exact and floating-point values; use from_nested")

    @classmethod
    def from_nested(cls, blocks: Sequence[Sequence[Sequence]], exact: bool = False):
        return cls(
            tuple(
                tuple(tuple(convert(v, exact) for v in row) for row in block)
                for block in blocks
            )
        )

    @property
    def exact(self) -> bool:
        return is_exact(self.blocks[0][0][0])

    @property
    def r(self) -> int:
        return len(self.blocks[0][0])

    @property
    def design(self) -> BlockDesign:
        return BlockDesign(self.r, tuple(len(block) for block in self.blocks))

    def check_design(self, design: BlockDesign | None) -> BlockDesign:
        own = self.design
        if design is not None and design != own:
            raise ShapeError(
                f"table has r={own.r}, block_sizes={list(own.block_sizes)} but design has "
                f"r={design.r}, block_sizes={list(design.block_sizes)}"
            )
        return own

    def column(self, c: int, s: int) -> tuple[Number, ...]:
        """Outcomes under treatment ``s`` for the units of block ``c``."""
        return tuple(row[s - 1] for row in self.blocks[c])

    def domain_column(self, s: int) -> tuple[Number, ...]:
        return tuple(row[s - 1] for block in self.blocks for row in block)

    def to_exact(self) -> "PotentialOutcomeTable":
        if self.exact:
            return self
        return PotentialOutcomeTable.from_nested(self.blocks, exact=True)

    def restrict(self, c: int) -> "PotentialOutcomeTable":
        return PotentialOutcomeTable((self.blocks[c],))

    def as_complete(self) -> "PotentialOutcomeTable":
        """All units pooled into one block."""
        return PotentialOutcomeTable((tuple(row for block in self.blocks for row in block),))


@dataclass(frozen=True)
class ObservedStudy:
    """Realized data: one response per unit under its assigned treatment."""

    design: BlockDesign
    assignment: Assignment
    responses: tuple[tuple[Number, ...], ...]

    def __post_init__(self) -> None:
        check_assignment_shape(self.assignment, self.design)
        if tuple(len(block) for block in self.responses) != self.design.block_sizes:
            raise ShapeError("responses do not match the design's block sizes")

    @property
    def exact(self) -> bool:
        return is_exact(self.responses[0][0])


def observe(table: PotentialOutcomeTable, assignment: Assignment) -> ObservedStudy:
    """Reveal ``y[k, c, s(k, c)]`` for every unit."""
    design = table.design
    check_assignment_shape(assignment, design)
    responses = tuple(
        tuple(row[s - 1] for row, s in zip(block, labels))
        for block, labels in zip(table.blocks, assignment.labels)
    )
    return ObservedStudy(design, assignment, responses)


def mean(values: Sequence[Number]) -> Number:
    return sum(values[1:], values[0]) / len(values)


def covariance(xs: Sequence[Number], ys: Sequence[Number]) -> Number:
    """Centered population covariance with divisor ``len(xs)``."""
    mx, my = mean(xs), mean(ys)
    terms = [(x - mx) * (y - my) for x, y in zip(xs, ys)]
    return sum(terms[1:], terms[0]) / len(terms)


@dataclass(frozen=True)
class PopulationParams:
    mu: tuple[Number, ...]
    sigma2: tuple[Number, ...]
    gamma: tuple[tuple[Number, ...], ...]
    block_mu: tuple[tuple[Number, ...], ...]
    block_sigma2: tuple[tuple[Number, ...], ...]
    block_gamma: tuple[tuple[tuple[Number, ...], ...], ...]


def _moments(columns: Sequence[Sequence[Number]]):
    mu = tuple(mean(col) for col in columns)
    gamma = tuple(tuple(covariance(a, b) for b in columns) for a in columns)
    sigma2 = tuple(gamma[s][s] for s in range(len(columns)))
    return mu, sigma2, gamma


def population_params(
    table: PotentialOutcomeTable, design: BlockDesign | None = None
) -> PopulationParams:
    """Domain- and block-level means, variances and covariances (divisor n, not n - 1)."""
    design = table.check_design(design)
    treatments = range(1, design.r + 1)
    mu, sigma2, gamma = _moments([table.domain_column(s) for s in treatments])
    per_block = [
        _moments([table.column(c, s) for s in treatments]) for c in range(design.num_blocks)
    ]
    return PopulationParams(
        mu,
        sigma2,
        gamma,
        tuple(p[0] for p in per_block),
        tuple(p[1] for p in per_block),
        tuple(p[2] for p in per_block),
    )


def check_treatment_pair(s: int, t: int, r: int) -> None:
    if s == t:
        raise ShapeError(f"treatments must differ, got s = t = {s}")
    for name, v in (("s", s), ("t", t)):
        if not 1 <= v <= r:
            raise ShapeError(f"treatment {name} = {v} is outside 1..{r}")


def sate_true(
    table: PotentialOutcomeTable, s: int, t: int, design: BlockDesign | None = None
) -> Number:
    """Sample average treatment effect of ``s`` relative to ``t``."""
    design = table.check_design(design)
    check_treatment_pair(s, t, design.r)
    diffs = [row[s - 1] - row[t - 1] for block in table.blocks for row in block]
    return sum(diffs[1:], diffs[0]) / design.n


def is_constant_shift(table: PotentialOutcomeTable, s: int, t: int) -> bool:
    """True when ``y_s - y_t`` is constant within every block."""
    for block in table.blocks:
        diffs = {row[s - 1] - row[t - 1] for row in block}
        if len(diffs) > 1:
            return False
    return True
