"""Closed-form randomization moments computed from the full potential-outcome table.

Results live in the caller's field: exact ``Fraction`` tables give exact
answers, float tables give floats. Distinct-pair sums use

    sum_{i != j} a_i b_j = (sum a)(sum b) - sum a_i b_i

which is exact in both fields and O(m) instead of O(m^2).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Literal, Sequence

from .design import BlockDesign
from .errors import DesignError, ShapeError
from .numeric import Number
from .outcomes import (
    PotentialOutcomeTable,
    check_treatment_pair,
    covariance,
    sate_true,
)


def _exact(x) -> bool:
    return not isinstance(x, float)


def _q(num: int, den: int, exact: bool) -> Number:
    return Fraction(num, den) if exact else num / den


def _check_stratum(m: int, r: int) -> None:
    if r < 2:
        raise DesignError(f"r must be at least 2, got {r}")
    if m < r:
        raise DesignError(f"stratum size {m} is smaller than r = {r}")


def _total(values):
    return sum(values[1:], values[0])


def distinct_pair_sum(a: Sequence[Number], b: Sequence[Number]) -> Number:
    """``sum_{i != j} a_i b_j`` over ordered pairs of distinct units."""
    return _total(a) * _total(b) - _total([x * y for x, y in zip(a, b)])


def sample_mean_coefficient(m: int, r: int, exact: bool = True, lead: int | None = None) -> Number:
    """``(lead)/(m-1) + r z (r-z) / ((m-1)(m-z)(m+r-z))`` with ``lead`` defaulting to r - 1."""
    z = m % r
    lead = r - 1 if lead is None else lead
    return _q(lead, m - 1, exact) + _q(r * z * (r - z), (m - 1) * (m - z) * (m + r - z), exact)


def var_mu_samp(sigma2: Number, n: int, r: int) -> Number:
    """Variance of the sample mean of one arm under complete randomization."""
    _check_stratum(n, r)
    return sample_mean_coefficient(n, r, _exact(sigma2)) * sigma2


def cov_mu_samp(gamma: Number, n: int) -> Number:
    if n < 2:
        raise DesignError(f"stratum size must be at least 2, got {n}")
    return -gamma / (n - 1)


def var_mu_ht(values: Sequence[Number], r: int) -> Number:
    """Variance of the HT mean of one arm; ``values`` are that arm's outcomes in the stratum."""
    m = len(values)
    _check_stratum(m, r)
    exact = _exact(values[0])
    z = m % r
    sigma2 = covariance(values, values)
    return _q(r - 1, m - 1, exact) * sigma2 + _q(z * (r - z), m**3 * (m - 1), exact) * (
        distinct_pair_sum(values, values)
    )


def cov_mu_ht(ys: Sequence[Number], yt: Sequence[Number], r: int) -> Number:
    m = len(ys)
    if len(yt) != m:
        raise ShapeError("both arms must cover the same units")
    _check_stratum(m, r)
    exact = _exact(ys[0])
    z = m % r
    gamma = covariance(ys, yt)
    return -gamma / (m - 1) - _q(z * (r - z), (r - 1) * m**3 * (m - 1), exact) * (
        distinct_pair_sum(ys, yt)
    )


VarianceKind = Literal["diff", "ht"]


def _block_term(ys, yt, r: int, n: int, kind: str, star: bool) -> Number:
    m = len(ys)
    exact = _exact(ys[0])
    z = m % r
    s2 = covariance(ys, ys) + covariance(yt, yt)
    weight = _q(m * m, n * n, exact)
    if star:
        core = _q(r, m - 1, exact) * s2
    else:
        core = _q(r - 1, m - 1, exact) * s2 + 2 * covariance(ys, yt) / (m - 1)
    if kind == "diff":
        extra = _q(r * z * (r - z), (m - 1) * (m - z) * (m + r - z), exact) * s2
    elif kind == "ht":
        same = distinct_pair_sum(ys, ys) + distinct_pair_sum(yt, yt)
        extra = _q(z * (r - z), m**3 * (m - 1), exact) * same + _q(
            2 * z * (r - z), m**3 * (m - 1) * (r - 1), exact
        ) * distinct_pair_sum(ys, yt)
    else:
        raise ValueError(f"kind must be 'diff' or 'ht', got {kind!r}")
    return weight * (core + extra)


def sate_variance_terms(
    table: PotentialOutcomeTable,
    s: int,
    t: int,
    kind: VarianceKind,
    star: bool = False,
    design: BlockDesign | None = None,
) -> list[Number]:
    """Per-block contributions (already weighted by ``n_c^2 / n^2``) to a SATE variance.

    ``star=True`` gives the contributions to the conservative bound, where the
    unidentified covariance is replaced by its AM-GM upper bound.
    """
    design = table.check_design(design)
    check_treatment_pair(s, t, design.r)
    return [
        _block_term(table.column(c, s), table.column(c, t), design.r, design.n, kind, star)
        for c in range(design.num_blocks)
    ]


def var_sate_diff(table: PotentialOutcomeTable, s: int, t: int, design=None) -> Number:
    return _total(sate_variance_terms(table, s, t, "diff", design=design))


def var_sate_ht(table: PotentialOutcomeTable, s: int, t: int, design=None) -> Number:
    return _total(sate_variance_terms(table, s, t, "ht", design=design))


def var_star(table: PotentialOutcomeTable, s: int, t: int, kind: VarianceKind, design=None) -> Number:
    """Upper bound on the SATE variance; the expectation of the matching variance estimator."""
    return _total(sate_variance_terms(table, s, t, kind, star=True, design=design))


@dataclass(frozen=True)
class TheoreticalMoments:
    mean: Number
    variance: Number
    source: str
    per_block: tuple[Number, ...] = ()


def sate_moments(table: PotentialOutcomeTable, s: int, t: int, kind: VarianceKind) -> TheoreticalMoments:
    terms = sate_variance_terms(table, s, t, kind)
    return TheoreticalMoments(sate_true(table, s, t), _total(terms), f"closed-form:{kind}", tuple(terms))


def sate_bound(table: PotentialOutcomeTable, s: int, t: int, kind: VarianceKind) -> TheoreticalMoments:
    terms = sate_variance_terms(table, s, t, kind, star=True)
    return TheoreticalMoments(sate_true(table, s, t), _total(terms), f"bound:{kind}", tuple(terms))


@dataclass(frozen=True)
class IndicatorMoments:
    """Assignment-indicator expectations for one stratum of size ``m``.

    ``i != j`` are distinct units and ``s != t`` distinct treatments.
    """

    m: int
    r: int
    inv_count: Fraction  # E[1 / #T_s]
    count: Fraction  # E[#T_s]
    count_sq: Fraction  # E[(#T_s)^2]
    count_cross: Fraction  # E[#T_s #T_t]
    same_pair: Fraction  # E[T_is T_js]
    cross_pair: Fraction  # E[T_is T_jt]
    ratio_single: Fraction  # E[T_is / #T_s]
    ratio_single_sq: Fraction  # E[T_is / (#T_s)^2]
    ratio_same_pair: Fraction  # E[T_is T_js / (#T_s)^2]
    ratio_cross_pair: Fraction  # E[T_is T_jt / (#T_s #T_t)]

    def as_dict(self) -> dict[str, Fraction]:
        return {k: v for k, v in self.__dict__.items() if k not in ("m", "r")}


def indicator_moments(m: int, r: int) -> IndicatorMoments:
    _check_stratum(m, r)
    if m < 2:
        raise DesignError("pair moments need at least two units")
    z = m % r
    inv = Fraction(m * r + r * r - 2 * r * z, (m - z) * (m + r - z))
    return IndicatorMoments(
        m=m,
        r=r,
        inv_count=inv,
        count=Fraction(m, r),
        count_sq=Fraction(m, r) ** 2 + Fraction(z, r) * (1 - Fraction(z, r)),
        count_cross=Fraction(m * m * (r - 1) - z * (r - z), r * r * (r - 1)),
        same_pair=Fraction(m * (m - r) + z * (r - z), m * (m - 1) * r * r),
        cross_pair=Fraction(m * m * (r - 1) - z * (r - z), m * (m - 1) * r * r * (r - 1)),
        ratio_single=Fraction(1, m),
        ratio_single_sq=inv / m,
        ratio_same_pair=(1 - inv) / (m * (m - 1)),
        ratio_cross_pair=Fraction(1, m * (m - 1)),
    )
