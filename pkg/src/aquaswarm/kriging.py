"""Ordinary kriging with an exponential variogram.

The temperature maps are interpolated with ordinary kriging: per query
point the (n+1) linear system with a Lagrange multiplier is solved, giving
weights that sum to 1, a best linear unbiased prediction, and a kriging
variance whose square root is reported as the error map.

The variogram model is exponential, gamma(h) = nugget + (sill - nugget) *
(1 - exp(-h / range)) for h > 0 and gamma(0) = 0, fitted to the empirical
semivariogram (15 lag bins up to half the maximum pairwise distance) by
least squares weighted with the per-bin pair counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit


class KrigingError(ValueError):
    pass


@dataclass(frozen=True)
class VariogramParams:
    nugget: float
    sill: float
    range_param: float

    def __post_init__(self):
        if not (self.sill >= self.nugget >= 0.0):
            raise KrigingError("variogram needs sill >= nugget >= 0")
        if self.range_param <= 0.0:
            raise KrigingError("variogram range must be positive")

    def __call__(self, h):
        h = np.asarray(h, dtype=float)
        psill = self.sill - self.nugget
        gamma = self.nugget + psill * (1.0 - np.exp(-h / self.range_param))
        return np.where(h > 0.0, gamma, 0.0)


@dataclass
class KrigingModel:
    """Fitted variogram plus the (deduplicated) sample set it interpolates."""

    variogram: VariogramParams
    positions: np.ndarray  # (n, 2)
    values: np.ndarray  # (n,)

    @property
    def n_samples(self) -> int:
        return len(self.values)


def dedupe_samples(positions, values) -> tuple[np.ndarray, np.ndarray]:
    """Average values at exactly repeated positions (keeps first-seen order)."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    values = np.asarray(values, dtype=float).ravel()
    seen: dict[tuple[float, float], int] = {}
    out_pos: list[np.ndarray] = []
    sums: list[float] = []
    counts: list[int] = []
    for p, v in zip(positions, values):
        key = (float(p[0]), float(p[1]))
        if key in seen:
            k = seen[key]
            sums[k] += v
            counts[k] += 1
        else:
            seen[key] = len(out_pos)
            out_pos.append(p)
            sums.append(float(v))
            counts.append(1)
    return np.array(out_pos), np.array(sums) / np.array(counts)


def empirical_semivariogram(positions, values, n_bins: int = 15):
    """Binned semivariance: (lag centers, gamma, pair counts).

    Lags run up to half the maximum pairwise distance; empty bins are
    dropped.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    values = np.asarray(values, dtype=float).ravel()
    n = len(values)
    if n < 2:
        raise KrigingError("semivariogram needs at least 2 samples")
    iu = np.triu_indices(n, k=1)
    diff = positions[iu[0]] - positions[iu[1]]
    h = np.hypot(diff[:, 0], diff[:, 1])
    sq = 0.5 * (values[iu[0]] - values[iu[1]]) ** 2
    h_max = h.max() / 2.0
    if h_max <= 0.0:
        raise KrigingError("all sample positions are identical")
    edges = np.linspace(0.0, h_max, n_bins + 1)
    which = np.digitize(h, edges[1:-1])
    keep = h <= h_max
    lags, gammas, counts = [], [], []
    for b in range(n_bins):
        sel = keep & (which == b)
        if not sel.any():
            continue
        lags.append(h[sel].mean())
        gammas.append(sq[sel].mean())
        counts.append(int(sel.sum()))
    return np.array(lags), np.array(gammas), np.array(counts)


def fit_variogram(positions, values, n_bins: int = 15) -> KrigingModel:
    """Weighted least-squares fit of the exponential variogram.

    Needs at least 5 samples at non-identical positions.  Returns a model
    carrying the deduplicated samples, ready for :func:`krige`.
    """
    positions, values = dedupe_samples(positions, values)
    if len(values) < 5:
        raise KrigingError("variogram fit needs at least 5 distinct sample positions")
    lags, gammas, counts = empirical_semivariogram(positions, values, n_bins)

    var = float(values.var())
    if var <= 1e-15 or len(lags) < 3:
        # constant field (or too few usable bins): flat variogram
        rng0 = max(float(lags.max()), 1e-6) if len(lags) else 1.0
        return KrigingModel(VariogramParams(0.0, max(var, 0.0), rng0), positions, values)

    def model(h, nugget, psill, rng):
        return nugget + psill * (1.0 - np.exp(-h / rng))

    # bounds keep the fit identifiable: a range far beyond the observed
    # lags (or a sill far above the sample variance) is unsupported by data
    h_max = float(lags.max())
    p0 = (0.0, var, max(h_max / 3.0, 1e-3))
    bounds = ([0.0, 0.0, 1e-6], [4.0 * var, 10.0 * var, 4.0 * h_max])
    sigma = 1.0 / np.sqrt(counts)  # weight bins by their pair counts
    try:
        popt, _ = curve_fit(model, lags, gammas, p0=p0, bounds=bounds,
                            sigma=sigma, maxfev=20000)
    except RuntimeError as exc:
        raise KrigingError(f"variogram fit did not converge: {exc}") from exc
    nugget, psill, rng_param = (float(x) for x in popt)
    return KrigingModel(VariogramParams(nugget, nugget + psill, rng_param),
                        positions, values)


@dataclass(frozen=True)
class GridSpec:
    """Regular query grid; cell (i, j) center is origin + (i+.5, j+.5)*cell."""

    origin: tuple[float, float]
    cell_size: float
    nx: int
    ny: int

    def cell_centers(self) -> np.ndarray:
        cx = self.origin[0] + (np.arange(self.nx) + 0.5) * self.cell_size
        cy = self.origin[1] + (np.arange(self.ny) + 0.5) * self.cell_size
        return np.stack(np.meshgrid(cx, cy, indexing="ij"), axis=-1).reshape(-1, 2)

    @staticmethod
    def covering(bbox, cell_size: float) -> "GridSpec":
        xmin, ymin, xmax, ymax = bbox
        nx = max(1, math.ceil((xmax - xmin) / cell_size))
        ny = max(1, math.ceil((ymax - ymin) / cell_size))
        return GridSpec((xmin, ymin), cell_size, nx, ny)


def krige_point(model: KrigingModel, query, n_neighbors: int | None = None):
    """Ordinary kriging at one point: (prediction, variance, weights, indices).

    ``n_neighbors`` limits the system to the nearest samples; None uses
    all of them.  The returned weights always sum to 1.
    """
    query = np.asarray(query, dtype=float).ravel()
    pos = model.positions
    d0 = np.hypot(pos[:, 0] - query[0], pos[:, 1] - query[1])
    if n_neighbors is not None and n_neighbors < len(pos):
        idx = np.argpartition(d0, n_neighbors)[:n_neighbors]
        idx = idx[np.argsort(d0[idx], kind="stable")]
    else:
        idx = np.arange(len(pos))
    sub = pos[idx]
    n = len(idx)
    diff = sub[:, None, :] - sub[None, :, :]
    gamma_ij = model.variogram(np.hypot(diff[:, :, 0], diff[:, :, 1]))
    a = np.empty((n + 1, n + 1))
    a[:n, :n] = gamma_ij
    a[n, :] = 1.0
    a[:, n] = 1.0
    a[n, n] = 0.0
    b = np.empty(n + 1)
    b[:n] = model.variogram(d0[idx])
    b[n] = 1.0
    try:
        sol = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(a, b, rcond=None)[0]
    weights = sol[:n]
    mu = sol[n]
    prediction = float(weights @ model.values[idx])
    variance = float(weights @ b[:n] + mu)
    return prediction, max(variance, 0.0), weights, idx


def krige(model: KrigingModel, grid: GridSpec,
          n_neighbors: int | None = 32) -> tuple[np.ndarray, np.ndarray]:
    """Prediction and error-std maps over a grid, each shaped (nx, ny)."""
    if model.n_samples < 1:
        raise KrigingError("kriging needs at least one sample")
    centers = grid.cell_centers()
    pred = np.empty(len(centers))
    std = np.empty(len(centers))
    if model.n_samples == 1:
        # the unbiasedness constraint forces weight 1 on the lone sample
        pred[:] = model.values[0]
        d = np.hypot(centers[:, 0] - model.positions[0, 0],
                     centers[:, 1] - model.positions[0, 1])
        std[:] = np.sqrt(2.0 * model.variogram(d))
        return pred.reshape(grid.nx, grid.ny), std.reshape(grid.nx, grid.ny)
    for k, center in enumerate(centers):
        p, v, _, _ = krige_point(model, center, n_neighbors)
        pred[k] = p
        std[k] = math.sqrt(v)
    return pred.reshape(grid.nx, grid.ny), std.reshape(grid.nx, grid.ny)
