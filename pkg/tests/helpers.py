"""Shared generators for the test suite."""

import numpy as np

from bastion.identifiability import ComponentPenalties
from bastion.operators import OperatorKind, make_operator

SEASONAL_KINDS = (
    OperatorKind.SEASONAL_DIFFERENCE,
    OperatorKind.SEASONAL_RECURRENCE,
    OperatorKind.GIBBS_SEASONAL,
)


def random_configuration(rng, n_range=(60, 200), period_range=(3, 40), max_p=3):
    """Random penalty configuration drawing on every operator kind.

    Each seasonal component gets one seasonal-type operator and, half the
    time, a second difference on top. The trend carries a second difference or, now and
    then, the invertible initialized trend operator. Centering is switched on at random.
    """
    p = int(rng.integers(1, max_p + 1))
    periods = [int(k) for k in rng.integers(period_range[0], period_range[1] + 1, size=p)]
    n = int(rng.integers(max(n_range[0], sum(periods) + 3), n_range[1] + 1))
    trend_kind = OperatorKind.GIBBS_TREND if rng.random() < 0.15 else OperatorKind.SECOND_DIFFERENCE
    trend = [make_operator(trend_kind, n)]
    seasonal, kinds = [], []
    for k in periods:
        kind = SEASONAL_KINDS[int(rng.integers(len(SEASONAL_KINDS)))]
        extra = {}
        if kind is OperatorKind.SEASONAL_RECURRENCE:
            extra["full_windows"] = bool(rng.integers(2))
        ops = [make_operator(kind, n, k, **extra)]
        if rng.random() < 0.5:
            ops.append(make_operator(OperatorKind.SECOND_DIFFERENCE, n))
        seasonal.append(ops)
        kinds.append([op.kind.value for op in ops])
    constraints = [("center" if rng.random() < 0.3 else None) for _ in periods]
    lam = float(rng.choice([0.1, 1.0, 10.0]))
    return ComponentPenalties(trend, seasonal, constraints), periods, lam, kinds


def seasonal_only(n, periods, kind, full_windows=True, constraints=None):
    """Second-difference trend plus one operator of ``kind`` per period."""
    extra = {"full_windows": full_windows} if kind == "seasonal_recurrence" else {}
    return ComponentPenalties(
        [make_operator("second_difference", n)],
        [[make_operator(kind, n, k, **extra)] for k in periods],
        constraints,
    )
