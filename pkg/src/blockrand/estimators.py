"""Point and variance estimators computed from observed data only.

Every function takes an :class:`~blockrand.outcomes.ObservedStudy` and never
sees unobserved potential outcomes. ``block=None`` selects the whole domain
as the stratum, an integer selects that (zero-based) block.

Pair sums over distinct units run over ordered pairs, so
``sum_{i != j} y_i y_j = (sum y)^2 - sum y^2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

from .errors import ShapeError, UndefinedEstimatorError, VarianceUnestimableError
from .numeric import Number, zero_like
from .outcomes import ObservedStudy, check_treatment_pair


def _q(num: int, den: int, exact: bool) -> Number:
    return Fraction(num, den) if exact else num / den


def _sum(values, like):
    return sum(values, zero_like(like))


@dataclass(frozen=True)
class StratumView:
    """Responses and labels of one stratum: a single block or the whole domain."""

    block: int | None
    responses: tuple[Number, ...]
    labels: tuple[int, ...]
    r: int

    @property
    def m(self) -> int:
        return len(self.responses)

    @property
    def z(self) -> int:
        return self.m % self.r

    @property
    def exact(self) -> bool:
        return isinstance(self.responses[0], Fraction)

    def treated(self, s: int) -> list[Number]:
        return [y for y, label in zip(self.responses, self.labels) if label == s]


def stratum(study: ObservedStudy, block: int | None = None) -> StratumView:
    r = study.design.r
    if block is None:
        return StratumView(
            None,
            tuple(y for b in study.responses for y in b),
            study.assignment.flat(),
            r,
        )
    if not 0 <= block < study.design.num_blocks:
        raise ShapeError(f"block index {block} outside 0..{study.design.num_blocks - 1}")
    return StratumView(block, study.responses[block], study.assignment.labels[block], r)


def _where(view: StratumView) -> str:
    return "the domain" if view.block is None else f"block {view.block + 1}"


def _require_treatment(s: int, r: int) -> None:
    if not 1 <= s <= r:
        raise ShapeError(f"treatment {s} is outside 1..{r}")


def mu_hat_samp(study: ObservedStudy, s: int, block: int | None = None) -> Number:
    """Mean response among units assigned ``s``."""
    view = stratum(study, block)
    _require_treatment(s, view.r)
    ys = view.treated(s)
    if not ys:
        raise UndefinedEstimatorError(f"no unit in {_where(view)} received treatment {s}")
    return _sum(ys, ys[0]) / len(ys)


def mu_hat_ht(study: ObservedStudy, s: int, block: int | None = None) -> Number:
    """Horvitz-Thompson mean: treated responses divided by ``m / r``."""
    view = stratum(study, block)
    _require_treatment(s, view.r)
    ys = view.treated(s)
    return _sum(ys, view.responses[0]) / _q(view.m, view.r, view.exact)


def sigma2_hat_samp(study: ObservedStudy, s: int, block: int | None = None) -> Number:
    view = stratum(study, block)
    _require_treatment(s, view.r)
    ys = view.treated(s)
    if len(ys) < 2:
        raise UndefinedEstimatorError(
            f"sample variance needs at least two units with treatment {s} in {_where(view)}"
        )
    mu = _sum(ys, ys[0]) / len(ys)
    ss = _sum(((y - mu) ** 2 for y in ys), ys[0])
    return _q(view.m - 1, view.m, view.exact) * ss / (len(ys) - 1)


def _ht_variance(view: StratumView, s: int) -> Number:
    m, r, z, exact = view.m, view.r, view.z, view.exact
    denom = m * m * (m - r) + m * z * (r - z)
    if denom == 0:
        raise UndefinedEstimatorError(
            f"Horvitz-Thompson variance is undefined in {_where(view)}: stratum size {m} equals r"
        )
    ys = view.treated(s)
    like = view.responses[0]
    total = _sum(ys, like)
    squares = _sum((y * y for y in ys), like)
    pairs = total * total - squares
    return _q((m - 1) * r, m * m, exact) * squares - _q((m - 1) * r * r, denom, exact) * pairs


def sigma2_hat_ht(study: ObservedStudy, s: int, block: int | None = None) -> Number:
    view = stratum(study, block)
    _require_treatment(s, view.r)
    return _ht_variance(view, s)


def sate_hat_diff(study: ObservedStudy, s: int, t: int) -> Number:
    """Block-size weighted difference of within-block arm means."""
    design = study.design
    check_treatment_pair(s, t, design.r)
    terms = [
        _q(size, design.n, study.exact)
        * (mu_hat_samp(study, s, c) - mu_hat_samp(study, t, c))
        for c, size in enumerate(design.block_sizes)
    ]
    return sum(terms[1:], terms[0])


def sate_hat_ht(study: ObservedStudy, s: int, t: int) -> Number:
    design = study.design
    check_treatment_pair(s, t, design.r)
    terms = [
        _q(size, design.n, study.exact) * (mu_hat_ht(study, s, c) - mu_hat_ht(study, t, c))
        for c, size in enumerate(design.block_sizes)
    ]
    return sum(terms[1:], terms[0])


def _require_estimable(study: ObservedStudy, blocks=None) -> None:
    r = study.design.r
    sizes = study.design.block_sizes
    for c in range(len(sizes)) if blocks is None else blocks:
        if sizes[c] < 2 * r:
            raise VarianceUnestimableError(
                f"block sizes must be at least 2r = {2 * r} for variance estimation; "
                f"block {c + 1} has {sizes[c]} units"
            )


def _sampling_coefficient(m: int, r: int, exact: bool, lead: int) -> Number:
    z = m % r
    return _q(lead, m - 1, exact) + _q(r * z * (r - z), (m - 1) * (m - z) * (m + r - z), exact)


def varhat_mu_samp_block(study: ObservedStudy, c: int, s: int) -> Number:
    """Unbiased estimate of the variance of a block's sample mean for ``s``."""
    _require_estimable(study, [c])
    r = study.design.r
    m = study.design.block_sizes[c]
    return _sampling_coefficient(m, r, study.exact, r - 1) * sigma2_hat_samp(study, s, c)


def _same_arm_pair_coefficient(m: int, r: int, exact: bool) -> Number:
    z = m % r
    return _q(r * r * z * (r - z), m**3 * (m - r) + m * m * z * (r - z), exact)


def _treated_pair_sum(view: StratumView, s: int) -> Number:
    ys = view.treated(s)
    like = view.responses[0]
    total = _sum(ys, like)
    return total * total - _sum((y * y for y in ys), like)


def varhat_mu_ht_block(study: ObservedStudy, c: int, s: int) -> Number:
    _require_estimable(study, [c])
    view = stratum(study, c)
    m, r, exact = view.m, view.r, view.exact
    return _q(r - 1, m - 1, exact) * _ht_variance(view, s) + _same_arm_pair_coefficient(
        m, r, exact
    ) * _treated_pair_sum(view, s)


def ht_cross_sum_term(study: ObservedStudy, c: int, s: int, t: int) -> Number:
    """Cross-arm pair term of the HT variance estimator for block ``c`` (unweighted).

    Units cannot carry both labels, so the sum over distinct pairs is the
    product of the two arm totals.
    """
    check_treatment_pair(s, t, study.design.r)
    view = stratum(study, c)
    m, r, z = view.m, view.r, view.z
    like = view.responses[0]
    cross = _sum(view.treated(s), like) * _sum(view.treated(t), like)
    coef = _q(2 * r * r * z * (r - z), m**4 * (r - 1) - m * m * z * (r - z), view.exact)
    return coef * cross


def varhat_sate_diff(study: ObservedStudy, s: int, t: int) -> Number:
    """Conservative (in expectation) variance estimate for the difference-in-means SATE."""
    design = study.design
    check_treatment_pair(s, t, design.r)
    _require_estimable(study)
    r, n, exact = design.r, design.n, study.exact
    terms = []
    for c, m in enumerate(design.block_sizes):
        coef = _sampling_coefficient(m, r, exact, r)
        spread = sigma2_hat_samp(study, s, c) + sigma2_hat_samp(study, t, c)
        terms.append(_q(m * m, n * n, exact) * coef * spread)
    return sum(terms[1:], terms[0])


def varhat_sate_ht(study: ObservedStudy, s: int, t: int) -> Number:
    """Conservative (in expectation) variance estimate for the HT SATE; may be negative."""
    design = study.design
    check_treatment_pair(s, t, design.r)
    _require_estimable(study)
    r, n, exact = design.r, design.n, study.exact
    terms = []
    for c, m in enumerate(design.block_sizes):
        view = stratum(study, c)
        term = _q(r, m - 1, exact) * (_ht_variance(view, s) + _ht_variance(view, t))
        term += _same_arm_pair_coefficient(m, r, exact) * (
            _treated_pair_sum(view, s) + _treated_pair_sum(view, t)
        )
        term += ht_cross_sum_term(study, c, s, t)
        terms.append(_q(m * m, n * n, exact) * term)
    return sum(terms[1:], terms[0])


EstimatorKind = Literal["diff", "ht"]

POINT_ESTIMATORS = {"diff": sate_hat_diff, "ht": sate_hat_ht}
VARIANCE_ESTIMATORS = {"diff": varhat_sate_diff, "ht": varhat_sate_ht}


@dataclass(frozen=True)
class SateEstimate:
    estimator_kind: str
    s: int
    t: int
    point: Number
    variance_estimate: Number | None = None

    @property
    def negative_variance(self) -> bool:
        return self.variance_estimate is not None and self.variance_estimate < 0


def estimate_sate(
    study: ObservedStudy, s: int, t: int, kind: EstimatorKind = "diff", variance: bool = True
) -> SateEstimate:
    if kind not in POINT_ESTIMATORS:
        raise ValueError(f"estimator kind must be 'diff' or 'ht', got {kind!r}")
    point = POINT_ESTIMATORS[kind](study, s, t)
    var = VARIANCE_ESTIMATORS[kind](study, s, t) if variance else None
    return SateEstimate(kind, s, t, point, var)
