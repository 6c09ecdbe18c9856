"""Augmented Dickey-Fuller unit-root test (constant, no trend)."""

from __future__ import annotations

import math

import numpy as np

# MacKinnon (2010) response-surface coefficients, constant-only case:
# tau(nobs) = b0 + b1/nobs + b2/nobs^2 + b3/nobs^3
_TAU_C = {
    0.01: (-3.43035, -6.5393, -16.786, -79.433),
    0.05: (-2.86154, -2.8903, -4.234, -40.040),
    0.10: (-2.56677, -1.5384, -2.809, 0.0),
}


class SingularRegressionError(ValueError):
    """The ADF regression design is rank deficient (e.g. a constant channel)."""


def schwert_lags(n: int) -> int:
    """Lag order ``floor(12 * (n / 100) ** 0.25)``."""
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def adf_critical_value(nobs: int, level: float = 0.05) -> float:
    b0, b1, b2, b3 = _TAU_C[level]
    return b0 + b1 / nobs + b2 / nobs**2 + b3 / nobs**3


def adf_test(channel, reg_lags: int | None = None, level: float = 0.05) -> tuple[float, bool]:
    """ADF t-statistic on the lagged level and the stationarity verdict.

    Regresses ``dy_t`` on a constant, ``y_{t-1}`` and ``reg_lags`` lagged
    differences. Stationary when the statistic falls below the MacKinnon
    critical value at ``level``.
    """
    y = np.asarray(channel, dtype=float).ravel()
    n = y.size
    p = schwert_lags(n) if reg_lags is None else int(reg_lags)
    if p < 0:
        raise ValueError("reg_lags must be non-negative")
    if n <= p + 10:
        raise ValueError(f"series of length {n} too short for {p} ADF lags")
    dy = np.diff(y)
    nobs = dy.size - p
    cols = [y[p : p + nobs]]  # y_{t-1}
    for i in range(1, p + 1):
        cols.append(dy[p - i : p - i + nobs])
    cols.append(np.ones(nobs))
    X = np.column_stack(cols)
    target = dy[p:]

    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag.min() <= 1e-10 * max(diag.max(), 1e-300):
        raise SingularRegressionError("ADF regression design is singular")
    beta = np.linalg.solve(R, Q.T @ target)
    resid = target - X @ beta
    dof = nobs - X.shape[1]
    if dof <= 0:
        raise ValueError("no residual degrees of freedom in ADF regression")
    sigma2 = resid @ resid / dof
    if sigma2 == 0.0:
        raise SingularRegressionError("ADF regression fits exactly; statistic undefined")
    Rinv = np.linalg.inv(R)
    var_gamma = sigma2 * (Rinv[0] @ Rinv[0])
    stat = float(beta[0] / math.sqrt(var_gamma))
    return stat, stat < adf_critical_value(nobs, level)
