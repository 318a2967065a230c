"""Robust seasonal-trend decomposition by LOESS, plus 3-sigma residual repair.

The decomposition follows the classic inner/outer loop design: the inner loop
alternates cycle-subseries smoothing, low-pass filtering and trend smoothing;
the outer loop recomputes bisquare robustness weights from the residual so
that outliers stop pulling the trend and seasonal fits.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, InputError

log = logging.getLogger(__name__)


def _odd(n: int) -> int:
    n = max(int(n), 3)
    return n if n % 2 else n + 1


# ---------------------------------------------------------------------------
# LOESS
# ---------------------------------------------------------------------------

def _neighborhoods(xs: np.ndarray, x0: np.ndarray, q: int) -> np.ndarray:
    """Start index of the ``q`` nearest sorted ``xs`` for each ``x0``."""
    n = len(xs)
    s = np.clip(np.searchsorted(xs, x0) - q // 2, 0, n - q)
    if q == n:
        return s
    for _ in range(n):
        right = (s < n - q)
        right[right] = (x0[right] - xs[s[right]]) > (xs[s[right] + q] - x0[right])
        s = s + right
        left = (s > 0)
        left[left] = (xs[s[left] + q - 1] - x0[left]) > (x0[left] - xs[s[left] - 1])
        s = s - left
        if not (right.any() or left.any()):
            break
    return s


def _loess(xs: np.ndarray, ys: np.ndarray, x0: np.ndarray, span: int, degree: int,
           rho: np.ndarray | None, fallbacks: list | None = None) -> np.ndarray:
    """LOESS on sorted ``xs`` for one or many response rows.

    ``ys`` and ``rho`` have shape (k, n); the result has shape (k, len(x0)).
    If ``span`` exceeds n, the bandwidth is widened by ``(span - n) / 2``
    beyond the farthest point (unit-spaced positions assumed).
    """
    n = xs.shape[0]
    q = min(span, n)
    start = _neighborhoods(xs, x0, q)
    idx = start[:, None] + np.arange(q)[None, :]
    u = xs[idx] - x0[:, None]
    dist = np.abs(u)
    h = dist.max(axis=1)
    if span > n:
        h = h + (span - n) / 2.0
    h = np.where(h > 0, h, 1.0)
    r = dist / h[:, None]
    w = np.where(r < 1.0, (1.0 - r ** 3) ** 3, 0.0)
    u = u / h[:, None]

    W = np.broadcast_to(w, (ys.shape[0],) + w.shape)
    if rho is not None:
        W = W * rho[:, idx]
    Y = ys[:, idx]
    s0 = W.sum(axis=2)
    empty = s0 <= 0
    if empty.any():
        if fallbacks is not None:
            fallbacks.extend(map(tuple, np.argwhere(empty).tolist()))
        log.debug("loess: %d neighborhoods with zero weight, using uniform weights", int(empty.sum()))
        W = np.where(empty[..., None], 1.0, W)
        s0 = W.sum(axis=2)

    t0 = (W * Y).sum(axis=2)
    fit = t0 / s0
    if degree == 0:
        return fit
    s1 = (W * u).sum(axis=2)
    s2 = (W * u * u).sum(axis=2)
    t1 = (W * u * Y).sum(axis=2)
    det = s0 * s2 - s1 * s1
    ok1 = det > 1e-10 * s0 * np.maximum(s2, 1e-300)
    lin = np.where(ok1, (s2 * t0 - s1 * t1) / np.where(ok1, det, 1.0), fit)
    if degree == 1:
        return lin
    s3 = (W * u ** 3).sum(axis=2)
    s4 = (W * u ** 4).sum(axis=2)
    t2 = (W * u * u * Y).sum(axis=2)
    A = np.stack([np.stack([s0, s1, s2], -1), np.stack([s1, s2, s3], -1), np.stack([s2, s3, s4], -1)], -2)
    b = np.stack([t0, t1, t2], -1)
    cond = np.linalg.cond(A)
    ok2 = np.isfinite(cond) & (cond < 1e12)
    A = np.where(ok2[..., None, None], A, np.eye(3))
    coef = np.linalg.solve(A, b[..., None])[..., 0, 0]
    return np.where(ok2, coef, lin)


def loess_smooth(xs, ys, eval_at=None, span: int = 7, degree: int = 1, robustness=None,
                 fallbacks: list | None = None) -> np.ndarray:
    """Locally weighted polynomial regression.

    Each evaluation point is fit by weighted least squares over the ``span``
    nearest samples, with tricube weights on distance (scaled by the distance
    to the farthest of those samples) times optional robustness weights.
    Neighborhoods whose combined weights are all zero fall back to a uniform
    fit; their indices are appended to ``fallbacks`` when given.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    x0 = xs if eval_at is None else np.asarray(eval_at, dtype=float)
    if degree not in (0, 1, 2):
        raise ConfigError(f"degree must be 0, 1 or 2, got {degree}")
    if span < degree + 1:
        raise ConfigError(f"span {span} too small for degree {degree}")
    if xs.ndim != 1 or xs.shape != ys.shape or len(xs) == 0:
        raise InputError("xs and ys must be equal-length non-empty 1-d arrays")
    if not np.all(np.isfinite(ys)):
        raise InputError("ys must be finite")
    order = np.argsort(xs, kind="stable")
    rho = None
    if robustness is not None:
        rho = np.asarray(robustness, dtype=float)[order][None, :]
    scalar = x0.ndim == 0
    hits: list = []
    out = _loess(xs[order], ys[order][None, :], np.atleast_1d(x0), span, degree, rho, hits)[0]
    if fallbacks is not None:
        fallbacks.extend(i for _, i in hits)
    return out[0] if scalar else out


# ---------------------------------------------------------------------------
# Robustness weights
# ---------------------------------------------------------------------------

@dataclass
class RobustnessWeights:
    delta: np.ndarray
    h: float


def bisquare(z: np.ndarray) -> np.ndarray:
    z = np.minimum(np.abs(z), 1.0)  # clipping also keeps huge ratios from overflowing
    return (1.0 - z * z) ** 2


def robustness_weights(residual) -> RobustnessWeights:
    """Bisquare weights of |R| scaled by six times the median absolute residual."""
    r = np.abs(np.asarray(residual, dtype=float))
    if r.size == 0 or not np.all(np.isfinite(r)):
        raise InputError("residual must be non-empty and finite")
    h = 6.0 * float(np.median(r))
    if h == 0.0:
        return RobustnessWeights(np.ones_like(r), 0.0)
    return RobustnessWeights(bisquare(r / h), h)


# ---------------------------------------------------------------------------
# Decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StlParams:
    period: int
    n_s: int = 15
    n_l: int = 10
    n_t: int = 20
    n_i: int = 15
    n_o: int = 3
    convergence_tol: float = 0.001
    loess_degree: int = 1
    lowpass_literal: bool = False

    def __post_init__(self):
        if self.period < 2:
            raise ConfigError("period must be >= 2")
        if min(self.n_s, self.n_l, self.n_t) < 1:
            raise ConfigError("LOESS spans must be positive")
        if self.n_i < 1 or self.n_o < 0:
            raise ConfigError("need n_i >= 1 and n_o >= 0")
        if not 0 < self.convergence_tol < 1:
            raise ConfigError("convergence_tol must lie in (0, 1)")
        if self.loess_degree not in (0, 1, 2):
            raise ConfigError("loess_degree must be 0, 1 or 2")
        if self.lowpass_literal and self.period < 3:
            raise ConfigError("literal low-pass needs period >= 3")

    @property
    def spans(self) -> tuple[int, int, int]:
        """(seasonal, low-pass, trend) spans forced odd and >= 3."""
        return _odd(self.n_s), _odd(self.n_l), _odd(self.n_t)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StlDecomposition:
    observed: np.ndarray
    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    params: StlParams
    inner_iterations_used: int = 0
    converged: bool = False
    weights: np.ndarray | None = None
    iterations_per_pass: list[int] = field(default_factory=list)

    def reconstruct(self) -> np.ndarray:
        return self.trend + self.seasonal + self.residual


def _moving_average(x: np.ndarray, k: int) -> np.ndarray:
    cs = np.concatenate(([0.0], np.cumsum(x)))
    return (cs[k:] - cs[:-k]) / k


def low_pass(series, period: int, n_l: int = 10, literal: bool = False) -> np.ndarray:
    """Low-pass filter of a series extended by one period at each end.

    Standard mode: moving averages of length ``period``, ``period`` and 3,
    then LOESS (degree 1, span ``n_l``). The output has
    ``len(series) - 2 * period`` values, aligned with the unextended range.
    ``literal`` swaps the averages for lengths 5 and 3 and crops the result
    to the same range.
    """
    c = np.asarray(series, dtype=float)
    n = len(c) - 2 * period
    if n < 1 or len(c) < 2 * period + 3:
        raise ConfigError(f"low_pass needs at least {2 * period + 3} values, got {len(c)}")
    if literal:
        m = _moving_average(_moving_average(c, 5), 3)
        off = period - 3
        m = m[off:off + n]
    else:
        m = _moving_average(_moving_average(_moving_average(c, period), period), 3)
    pos = np.arange(n, dtype=float)
    return _loess(pos, m[None, :], pos, _odd(n_l), 1, None)[0]


def _cycle_subseries(d: np.ndarray, period: int, span: int, degree: int, rho: np.ndarray) -> np.ndarray:
    """Smooth each cycle-subseries and extend it one period both ways.

    Returns an array covering time indices ``-period .. N + period - 1``.
    """
    n = len(d)
    out = np.empty(n + 2 * period)
    lengths = -(-(n - np.arange(period)) // period)
    for m in np.unique(lengths):
        js = np.flatnonzero(lengths == m)
        rows = js[:, None] + period * np.arange(m)[None, :]
        pos = np.arange(m, dtype=float)
        ev = np.arange(-1, m + 1, dtype=float)
        fit = _loess(pos, d[rows], ev, span, degree, rho[rows])
        tidx = js[:, None] + period * np.arange(-1, m + 1)[None, :]
        out[tidx + period] = fit
    return out


def stl_decompose(series, params: StlParams) -> StlDecomposition:
    """Additive robust decomposition ``series = trend + seasonal + residual``.

    Runs ``n_o + 1`` passes of up to ``n_i`` inner iterations each. An inner
    loop stops once the largest trend change falls below
    ``convergence_tol`` times the data range. Robustness weights computed
    after each pass (except the last) enter the seasonal and trend fits of
    the next pass. The residual is the exact remainder.
    """
    y = np.asarray(series, dtype=float)
    if y.ndim != 1:
        raise InputError("series must be one-dimensional")
    if not np.all(np.isfinite(y)):
        raise InputError("series contains non-finite values")
    p = params.period
    n = len(y)
    if n < 2 * p:
        raise ConfigError(f"series of length {n} is shorter than two periods ({2 * p})")
    ns, nl, nt = params.spans
    deg = params.loess_degree
    span_y = float(y.max() - y.min())
    scale = span_y if span_y > 0 else 1.0
    pos = np.arange(n, dtype=float)

    rho = np.ones(n)
    trend = np.zeros(n)
    seasonal = np.zeros(n)
    per_pass = []
    converged = False
    for outer in range(params.n_o + 1):
        converged = False
        used = 0
        for _ in range(params.n_i):
            c = _cycle_subseries(y - trend, p, ns, deg, rho)
            lp = low_pass(c, p, nl, literal=params.lowpass_literal)
            seasonal = c[p:p + n] - lp
            new_trend = _loess(pos, (y - seasonal)[None, :], pos, nt, deg, rho[None, :])[0]
            change = float(np.max(np.abs(new_trend - trend))) / scale
            trend = new_trend
            used += 1
            if change < params.convergence_tol:
                converged = True
                break
        per_pass.append(used)
        if outer < params.n_o:
            rho = robustness_weights(y - trend - seasonal).delta
    residual = y - trend - seasonal
    return StlDecomposition(y, trend, seasonal, residual, params, sum(per_pass), converged, rho, per_pass)


def null_decomposition(series, params: StlParams | None = None) -> StlDecomposition:
    """Degenerate decomposition: zero trend and seasonal, residual = series."""
    y = np.asarray(series, dtype=float)
    z = np.zeros_like(y)
    params = params or StlParams(period=2)
    return StlDecomposition(y, z, z.copy(), y.copy(), params, 0, True, np.ones_like(y), [])


# ---------------------------------------------------------------------------
# Outlier repair
# ---------------------------------------------------------------------------

def sigma3_repair(residual, samples_per_day: int) -> tuple[np.ndarray, list[int]]:
    """Replace residual outliers beyond three standard deviations.

    Mean and population standard deviation are computed once over the whole
    series. A flagged value takes the mean of the same intra-day slot on the
    previous and next day, skipping neighbors that are missing or flagged
    themselves; with no usable neighbor it takes the overall mean.
    """
    r = np.asarray(residual, dtype=float)
    n = len(r)
    if samples_per_day < 1 or n < 2 * samples_per_day:
        raise InputError("residual must cover at least two days")
    mu = float(r.mean())
    sigma = float(r.std())
    if sigma == 0.0:
        return r.copy(), []
    flagged = np.abs(r - mu) > 3.0 * sigma
    out = r.copy()
    idx = np.flatnonzero(flagged)
    for i in idx:
        vals = [r[j] for j in (i - samples_per_day, i + samples_per_day) if 0 <= j < n and not flagged[j]]
        out[i] = sum(vals) / len(vals) if vals else mu
    return out, idx.tolist()
