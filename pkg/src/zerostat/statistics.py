"""Point-process statistics of zero sets.

Rescaled pair distances follow the kernel normalization: a pair (z, w) is
moved by an SU(2) motion taking z to the chart origin and the image of w is
scaled by sqrt(N), i.e. ``r = sqrt(N) |w - z| / |1 + conj(z) w|``. At the
origin this is exactly ``|u - u'|`` with ``u = sqrt(N) z``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import partial
from math import factorial
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .ensembles import EnsembleSpec, trial_rng
from .kernel import JetCovariance, fock_jet_covariance
from .polytopes import LatticePolytope, Region, classify_region, moment_map
from .trials import check_budget, chunks, map_zero_sets, parallel_map
from .zeros import ZeroSet

LOW_CONFIDENCE_PAIRS = 100
MIN_KACRICE_R = 1e-3


class KacRiceError(ValueError):
    pass


# geometry on CP^1 ------------------------------------------------------------


def homogeneous(z: np.ndarray) -> np.ndarray:
    """Unit representatives (Z0, Z1) of chart points of CP^1."""
    z = np.asarray(z, dtype=complex).reshape(-1)
    s = np.sqrt(1.0 + np.abs(z) ** 2)
    return np.stack([1.0 / s, z / s], axis=1)


INFINITY = np.array([[0.0 + 0j, 1.0 + 0j]])


def zero_points(zs: ZeroSet) -> np.ndarray:
    """Homogeneous coordinates of all zeros of an m=1 ZeroSet, multiplicity expanded."""
    pts = np.repeat(zs.points[:, 0], zs.multiplicity)
    H = homogeneous(pts)
    if zs.at_infinity:
        H = np.vstack([H, np.repeat(INFINITY, zs.at_infinity, axis=0)])
    return H


def tan_distance(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """tan of the angular distance between rows of P and rows of Q (matrix)."""
    wedge = np.abs(P[:, None, 0] * Q[None, :, 1] - P[:, None, 1] * Q[None, :, 0])
    inner = np.abs(P[:, None, 0] * np.conj(Q[None, :, 0]) + P[:, None, 1] * np.conj(Q[None, :, 1]))
    with np.errstate(divide="ignore"):
        return wedge / inner


def angle(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    wedge = np.abs(P[:, None, 0] * Q[None, :, 1] - P[:, None, 1] * Q[None, :, 0])
    inner = np.abs(P[:, None, 0] * np.conj(Q[None, :, 0]) + P[:, None, 1] * np.conj(Q[None, :, 1]))
    return np.arctan2(wedge, inner)


def pair_mass(r, N: float):
    """Fubini-Study probability mass of {w : rescaled distance to z <= r}."""
    r = np.asarray(r, dtype=float)
    return r**2 / (N + r**2)


# pair correlation ------------------------------------------------------------


@dataclass(frozen=True)
class PairCorrelationCurve:
    bin_edges: np.ndarray
    kappa_hat: np.ndarray
    stderr: np.ndarray
    pair_count: np.ndarray  # ordered pairs per bin
    normalization: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.bin_edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")

    @property
    def r_mid(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def low_confidence(self) -> np.ndarray:
        return self.pair_count < LOW_CONFIDENCE_PAIRS

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r_mid", "kappa_hat", "stderr", "pair_count", "flag"])
        for r, k, s, c, f in zip(self.r_mid, self.kappa_hat, self.stderr, self.pair_count, self.low_confidence):
            w.writerow([repr(float(r)), repr(float(k)), repr(float(s)), int(c), "low-confidence" if f else "ok"])
        return buf.getvalue()


@dataclass(frozen=True)
class _PairTally:
    """Per-trial sufficient statistics of the pair-correlation estimator."""

    pairs: np.ndarray  # (trials, bins) ordered pair counts
    refs: np.ndarray  # (trials,) reference points
    window: np.ndarray  # (trials,) points in the partner window


def _window_angles(N: float, rmax: float, cutoff: float | None):
    if cutoff is None:
        return None, None
    theta_w = math.atan(cutoff / math.sqrt(N))
    theta_ref = theta_w - math.atan(rmax / math.sqrt(N))
    if theta_ref <= 0:
        raise ValueError("cutoff must exceed rmax")
    return theta_w, theta_ref


def _tally(configs: Sequence[np.ndarray], N: float, base: np.ndarray, edges: np.ndarray, cutoff: float | None) -> _PairTally:
    rmax = edges[-1]
    theta_w, theta_ref = _window_angles(N, rmax, cutoff)
    nb = edges.shape[0] - 1
    pairs = np.zeros((len(configs), nb), dtype=np.int64)
    refs = np.zeros(len(configs), dtype=np.int64)
    window = np.zeros(len(configs), dtype=np.int64)
    sqN = math.sqrt(N)
    for t, H in enumerate(configs):
        if H.shape[0] == 0:
            continue
        if theta_w is None:
            part = H
            ref_mask = np.ones(H.shape[0], dtype=bool)
        else:
            a = angle(base, H)[0]
            part = H[a <= theta_w]
            ref_mask = a[a <= theta_w] <= theta_ref
        window[t] = part.shape[0]
        refs[t] = int(ref_mask.sum())
        if part.shape[0] < 2 or not ref_mask.any():
            continue
        D = sqN * tan_distance(part[ref_mask], part)
        # drop self pairs
        idx = np.nonzero(ref_mask)[0]
        D[np.arange(idx.shape[0]), idx] = np.inf
        d = D[D < rmax]
        pairs[t] = np.histogram(d, bins=edges)[0]
    return _PairTally(pairs, refs, window)


def _window_mass(N: float, rmax: float, cutoff: float | None):
    if cutoff is None:
        return 1.0, 1.0
    theta_w, theta_ref = _window_angles(N, rmax, cutoff)
    return math.sin(theta_w) ** 2, math.sin(theta_ref) ** 2


def _kappa_from_tally(tally: _PairTally, N: float, edges: np.ndarray, cutoff, batches: int, normalization: dict):
    mass_w, _ = _window_mass(N, edges[-1], cutoff)
    dF = np.diff(pair_mass(edges, N))

    def estimate(sl):
        pairs = tally.pairs[sl].sum(axis=0)
        n_trials = tally.pairs[sl].shape[0]
        rho = tally.window[sl].sum() / (n_trials * mass_w)  # points per unit FS mass
        expected = tally.refs[sl].sum() * rho * dF
        with np.errstate(invalid="ignore", divide="ignore"):
            return pairs / expected

    T = tally.pairs.shape[0]
    kappa = estimate(slice(0, T))
    B = max(2, min(batches, T))
    bounds = np.linspace(0, T, B + 1).astype(int)
    per = np.array([estimate(slice(bounds[i], bounds[i + 1])) for i in range(B)])
    stderr = per.std(axis=0, ddof=1) / math.sqrt(B)
    norm = dict(normalization)
    norm.update(
        N=N,
        trials=int(T),
        mean_window_count=float(tally.window.mean()),
        window_fs_mass=mass_w,
        batches=int(B),
        cutoff=cutoff,
    )
    return PairCorrelationCurve(edges, kappa, stderr, tally.pairs.sum(axis=0), norm)


def _edges(rmax: float, bins) -> np.ndarray:
    if np.ndim(bins) == 0:
        return np.linspace(0.0, rmax, int(bins) + 1)
    return np.asarray(bins, dtype=float)


def pair_correlation_from_points(
    configs: Sequence[np.ndarray],
    N: float,
    rmax: float = 5.0,
    bins=50,
    z0: complex = 0j,
    cutoff: float | None = None,
    batches: int = 20,
) -> PairCorrelationCurve:
    """Self-normalized pair-correlation estimate from homogeneous point configurations.

    The Poisson reference uses the intensity measured from the same
    configurations (points per unit Fubini-Study mass of the window). With
    ``cutoff`` set, reference points are restricted to the cap of rescaled
    radius ``cutoff - rmax`` around ``z0`` so every partner disk stays inside
    the window.
    """
    edges = _edges(rmax, bins)
    base = homogeneous(np.array([z0]))
    tally = _tally(configs, N, base, edges, cutoff)
    return _kappa_from_tally(tally, N, edges, cutoff, batches, {"source": "points"})


def _pair_reducer(N, base, edges, cutoff, rng_range, zsets):
    configs, failures = [], 0
    for zs in zsets:
        if isinstance(zs, Exception):
            failures += 1
            continue
        configs.append(zero_points(zs))
    return _tally(configs, N, base, edges, cutoff), failures


def pair_correlation_empirical(
    spec: EnsembleSpec,
    trials: int,
    z0: complex = 0j,
    rmax: float = 5.0,
    bins=50,
    master_seed: int = 0,
    cutoff: float | None = None,
    batches: int = 20,
    workers: int = 1,
) -> PairCorrelationCurve:
    """Rescaled pair correlation of zeros of an m=1 ensemble.

    ``cutoff=None`` uses every zero on CP^1 as a reference point; by SU(2)
    invariance of the full ensemble this estimates the same curve as the
    window around ``z0`` with far more pairs.
    """
    if spec.m != 1:
        raise ValueError("the sampling path supports m = 1 only")
    if not 0 < rmax <= 5:
        raise ValueError("rmax must lie in (0, 5]")
    edges = _edges(rmax, bins)
    base = homogeneous(np.array([z0]))
    N = spec.N
    results = map_zero_sets(spec, trials, master_seed, partial(_pair_reducer, N, base, edges, cutoff), workers)
    failures = sum(f for _, f in results)
    tally = _PairTally(
        np.concatenate([t.pairs for t, _ in results]),
        np.concatenate([t.refs for t, _ in results]),
        np.concatenate([t.window for t, _ in results]),
    )
    curve = _kappa_from_tally(tally, N, edges, cutoff, batches, {"source": "zeros", "failures": failures, "z0": str(z0)})
    check_budget(failures, trials, curve)
    return curve


def poisson_configurations(intensity: float, trials: int, master_seed: int = 0) -> list[np.ndarray]:
    """Poisson(intensity) points per trial, uniform for the Fubini-Study measure of CP^1."""
    out = []
    for t in range(trials):
        rng = trial_rng(master_seed, t)
        n = rng.poisson(intensity)
        g = rng.standard_normal((n, 4))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        out.append(np.stack([g[:, 0] + 1j * g[:, 1], g[:, 2] + 1j * g[:, 3]], axis=1))
    return out


def poisson_selftest(intensity: float = 100.0, trials: int = 2000, rmax: float = 5.0, bins=25, master_seed: int = 0, batches: int = 20):
    """Pair-correlation estimator applied to a process with no interaction."""
    configs = poisson_configurations(intensity, trials, master_seed)
    return pair_correlation_from_points(configs, intensity, rmax=rmax, bins=bins, batches=batches)


# analytic pair correlation ------------------------------------------------------


@dataclass(frozen=True)
class KappaEstimate:
    value: float
    stderr: float
    samples: int = 0  # 0 for closed-form evaluation


def kappa_asymptote(m: int, r):
    """Small-distance law (m+1)/4 * r^(4-2m)."""
    return (m + 1) / 4.0 * np.asarray(r, dtype=float) ** (4 - 2 * m)


def _conditioned(J: JetCovariance):
    """Value covariance A and gradient covariance conditioned on all values vanishing."""
    C = J.matrix
    vi, gi = J.value_indices(), J.gradient_indices()
    A = C[np.ix_(vi, vi)]
    X = C[np.ix_(gi, vi)]
    G = C[np.ix_(gi, gi)] - X @ np.linalg.solve(A, X.conj().T)
    return A, 0.5 * (G + G.conj().T)


def one_point_intensity(J: JetCovariance, j: int) -> float:
    """Kac-Rice density m! det(Gamma_1) / (pi^m K^m) of simultaneous zeros of m i.i.d. copies."""
    b = J.block
    m = b - 1
    C = J.matrix[j * b : (j + 1) * b, j * b : (j + 1) * b]
    K = C[0, 0].real
    G = C[1:, 1:] - np.outer(C[1:, 0], C[0, 1:]) / K
    return factorial(m) * np.linalg.det(G).real / (math.pi**m * K**m)


def _sqrt_psd(G: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(G)
    return V * np.sqrt(np.clip(w, 0.0, None))[None, :]


def kappa_kacrice(m: int, r: float, mc_samples: int = 10**6, seed: int = 0, chunk: int = 1 << 16) -> KappaEstimate:
    """Universal two-point function of the limiting field (kernel exp(<u, v>)).

    Conditions the gradient jets at u1 = 0 and u2 = (r, 0, ...) on the field
    vanishing at both points. For m = 1 the conditional moment
    E|a|^2|b|^2 = G11 G22 + |G12|^2 is exact; for m >= 2 the product of squared
    Jacobian determinants is averaged by Monte Carlo over ``mc_samples``
    draws of the m independent gradient rows.
    """
    if m not in (1, 2, 3):
        raise ValueError("m must be 1, 2 or 3")
    if r < MIN_KACRICE_R:
        raise KacRiceError(f"r = {r} is below {MIN_KACRICE_R}: the conditioning is singular there")
    pts = np.zeros((2, m), dtype=complex)
    pts[1, 0] = r
    J = fock_jet_covariance(pts)
    A, G = _conditioned(J)
    rho1 = one_point_intensity(J, 0) * one_point_intensity(J, 1)
    norm = math.pi ** (2 * m) * np.linalg.det(A).real ** m * rho1
    if m == 1:
        val = (G[0, 0].real * G[1, 1].real + abs(G[0, 1]) ** 2) / norm
        return KappaEstimate(float(val), 0.0, 0)
    L = _sqrt_psd(G)
    rng = np.random.default_rng(np.random.SeedSequence([seed, m, int(round(r * 1e9))]))
    total, total_sq, done = 0.0, 0.0, 0
    while done < mc_samples:
        n = min(chunk, mc_samples - done)
        g = (rng.standard_normal((n, m, 2 * m)) + 1j * rng.standard_normal((n, m, 2 * m))) / math.sqrt(2.0)
        X = g @ L.T
        q = np.abs(np.linalg.det(X[:, :, :m])) ** 2 * np.abs(np.linalg.det(X[:, :, m:])) ** 2
        total += q.sum()
        total_sq += (q * q).sum()
        done += n
    mean = total / done
    var = max(total_sq / done - mean * mean, 0.0)
    return KappaEstimate(float(mean / norm), float(math.sqrt(var / done) / norm), done)


# curve comparison ------------------------------------------------------------


@dataclass(frozen=True)
class CurveComparison:
    r_mid: np.ndarray
    observed: np.ndarray
    reference: np.ndarray
    rel_deviation: np.ndarray
    z_scores: np.ndarray
    flagged: np.ndarray

    @property
    def max_rel_deviation(self) -> float:
        return float(np.max(np.abs(self.rel_deviation))) if self.rel_deviation.size else 0.0


def _value(x) -> tuple[float, float]:
    if isinstance(x, KappaEstimate):
        return x.value, x.stderr
    return float(x), 0.0


def compare_curves(a: PairCorrelationCurve, b, band: tuple[float, float], nodes: int = 8) -> CurveComparison:
    """Compare an estimated curve to another curve or to an analytic function on ``band``.

    Analytic references are averaged over each bin with the Poisson pair
    weight d/dr [r^2 / (N + r^2)], matching what the histogram estimates.
    Bins deviating by more than three combined standard errors are flagged.
    """
    lo, hi = band
    e = a.bin_edges
    sel = (e[:-1] >= lo - 1e-12) & (e[1:] <= hi + 1e-12)
    if not sel.any():
        raise ValueError("curve support and comparison band do not overlap")
    if isinstance(b, PairCorrelationCurve):
        if not np.allclose(b.bin_edges, a.bin_edges):
            raise ValueError("curves must share bin edges")
        ref, ref_se = b.kappa_hat[sel], b.stderr[sel]
    else:
        N = a.normalization.get("N")
        x, w = np.polynomial.legendre.leggauss(nodes)
        ref, ref_se = [], []
        for r0, r1 in zip(e[:-1][sel], e[1:][sel]):
            rs = 0.5 * (r1 - r0) * x + 0.5 * (r1 + r0)
            wt = w * (2 * rs * N / (N + rs**2) ** 2 if N else 2 * rs)
            vals = [_value(b(r)) for r in rs]
            ref.append(sum(wi * v for wi, (v, _) in zip(wt, vals)) / wt.sum())
            ref_se.append(max(s for _, s in vals))
        ref, ref_se = np.array(ref), np.array(ref_se)
    obs, se = a.kappa_hat[sel], a.stderr[sel]
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = (obs - ref) / ref
        comb = np.sqrt(se**2 + ref_se**2)
        z = np.where(comb > 0, (obs - ref) / comb, np.where(obs == ref, 0.0, np.inf))
    return CurveComparison(a.r_mid[sel], obs, ref, rel, z, np.abs(z) > 3)


# zero densities ------------------------------------------------------------------


class Grid:
    """Cells in a chart; ``measure`` is Lebesgue area or Fubini-Study mass."""

    reference = "lebesgue"

    def cell_index(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def measure(self) -> np.ndarray:
        raise NotImplementedError

    def fs_mass(self) -> np.ndarray:
        raise NotImplementedError

    def centers(self) -> np.ndarray:
        """(cells, 2) real coordinates used in CSV output."""
        raise NotImplementedError

    def sample_point(self, k: int):
        """A chart point representative of cell k (for region labels)."""
        raise NotImplementedError


@dataclass(frozen=True)
class RadialGrid(Grid):
    """Annuli r_k < |z| < r_{k+1} in the m=1 chart."""

    edges: tuple

    def __post_init__(self):
        if np.any(np.diff(self.edges) <= 0) or self.edges[0] < 0:
            raise ValueError("radial edges must be increasing and non-negative")

    @classmethod
    def from_moment(cls, mu_edges) -> "RadialGrid":
        mu = np.asarray(mu_edges, dtype=float)
        with np.errstate(divide="ignore"):
            r = np.sqrt(mu / (1.0 - mu))
        return cls(tuple(r))

    def cell_index(self, points):
        r = np.abs(points[:, 0])
        k = np.searchsorted(np.asarray(self.edges), r, side="right") - 1
        return np.where((k >= 0) & (k < len(self.edges) - 1), k, -1)

    def measure(self):
        e = np.asarray(self.edges, dtype=float)
        return math.pi * (e[1:] ** 2 - e[:-1] ** 2)

    def fs_mass(self):
        e = np.asarray(self.edges, dtype=float)
        with np.errstate(invalid="ignore"):
            mu = np.where(np.isinf(e), 1.0, e**2 / (1 + e**2))
        return np.diff(mu)

    def centers(self):
        e = np.asarray(self.edges, dtype=float)
        mid = np.where(np.isinf(e[1:]), e[:-1], 0.5 * (e[1:] + e[:-1]))
        return np.stack([mid, np.zeros_like(mid)], axis=1)

    def sample_point(self, k):
        return complex(self.centers()[k, 0])


@dataclass(frozen=True)
class RectGrid(Grid):
    """Rectangles in the m=1 chart (x = Re z, y = Im z)."""

    x_edges: tuple
    y_edges: tuple

    def cell_index(self, points):
        z = points[:, 0]
        i = np.searchsorted(np.asarray(self.x_edges), z.real, side="right") - 1
        j = np.searchsorted(np.asarray(self.y_edges), z.imag, side="right") - 1
        nx, ny = len(self.x_edges) - 1, len(self.y_edges) - 1
        ok = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
        return np.where(ok, i * ny + j, -1)

    def measure(self):
        dx, dy = np.diff(self.x_edges), np.diff(self.y_edges)
        return np.outer(dx, dy).ravel()

    def fs_mass(self):
        # midpoint rule per cell; adequate for fine grids only
        c = self.centers()
        z = c[:, 0] + 1j * c[:, 1]
        return self.measure() / (math.pi * (1 + np.abs(z) ** 2) ** 2)

    def centers(self):
        xm = 0.5 * (np.asarray(self.x_edges[1:]) + np.asarray(self.x_edges[:-1]))
        ym = 0.5 * (np.asarray(self.y_edges[1:]) + np.asarray(self.y_edges[:-1]))
        X, Y = np.meshgrid(xm, ym, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=1)

    def sample_point(self, k):
        c = self.centers()[k]
        return complex(c[0], c[1])


@dataclass(frozen=True)
class MomentGrid(Grid):
    """Cells in moment-map coordinates, measured by Fubini-Study mass (m=1 or 2).

    The moment map pushes omega_FS^m (total mass 1) forward to m! times
    Lebesgue measure on the simplex.
    """

    edges: tuple  # one tuple of mu-edges per axis
    reference = "fubini-study"

    @property
    def m(self) -> int:
        return len(self.edges)

    def cell_index(self, points):
        mu = moment_map(points)
        idx = np.zeros(points.shape[0], dtype=np.int64)
        ok = np.ones(points.shape[0], dtype=bool)
        for j, e in enumerate(self.edges):
            k = np.searchsorted(np.asarray(e), mu[:, j], side="right") - 1
            ok &= (k >= 0) & (k < len(e) - 1)
            idx = idx * (len(e) - 1) + np.clip(k, 0, len(e) - 2)
        return np.where(ok, idx, -1)

    def _cell_boxes(self):
        grids = np.meshgrid(*[np.arange(len(e) - 1) for e in self.edges], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def fs_mass(self):
        boxes = self._cell_boxes()
        out = np.empty(boxes.shape[0])
        for c, b in enumerate(boxes):
            lo = [self.edges[j][b[j]] for j in range(self.m)]
            hi = [self.edges[j][b[j] + 1] for j in range(self.m)]
            out[c] = factorial(self.m) * _box_simplex_area(lo, hi)
        return out

    def measure(self):
        return self.fs_mass()

    def centers(self):
        boxes = self._cell_boxes()
        cols = [0.5 * (np.asarray(self.edges[j])[boxes[:, j]] + np.asarray(self.edges[j])[boxes[:, j] + 1]) for j in range(self.m)]
        if self.m == 1:
            cols.append(np.zeros_like(cols[0]))
        return np.stack(cols, axis=1)

    def sample_point(self, k):
        mu = self.centers()[k][: self.m]
        rest = 1.0 - mu.sum()
        z = np.sqrt(np.clip(mu, 0, None) / max(rest, 1e-300))
        return complex(z[0]) if self.m == 1 else z.astype(complex)


def _box_simplex_area(lo, hi) -> float:
    """Lebesgue measure of box [lo, hi] intersected with the open unit simplex."""
    if len(lo) == 1:
        return max(0.0, min(hi[0], 1.0) - max(lo[0], 0.0))
    # 2D: area of the box under the line x + y < 1
    x0, x1 = max(lo[0], 0.0), min(hi[0], 1.0)
    y0, y1 = max(lo[1], 0.0), min(hi[1], 1.0)
    if x1 <= x0 or y1 <= y0:
        return 0.0

    # integrate the column height clip(1 - t - y0, 0, y1 - y0) over t in [x0, x1]
    return quad(lambda t: min(max(1 - t - y0, 0.0), y1 - y0), x0, x1, points=[1 - y1, 1 - y0], limit=50)[0]


@dataclass(frozen=True)
class DensityMap:
    grid: Grid
    counts: np.ndarray  # multiplicity-weighted zeros per cell summed over trials
    trials: int
    normalization: dict

    @property
    def mean_counts(self) -> np.ndarray:
        return self.counts / self.trials

    @property
    def density(self) -> np.ndarray:
        """Mean zeros per unit cell measure, divided by degree^m."""
        meas = self.grid.measure()
        with np.errstate(divide="ignore", invalid="ignore"):
            d = self.mean_counts / meas / self.normalization["scale"]
        return np.where(np.isfinite(meas) & (meas > 0), d, 0.0)

    def normalized_fraction(self, mask=None) -> float:
        """Normalized mean count over the selected cells divided by their FS mass.

        Equals 1 where zeros follow omega_FS^m and 0 where they are absent.
        """
        sel = np.ones(self.counts.shape[0], dtype=bool) if mask is None else np.asarray(mask)
        return float(self.mean_counts[sel].sum() / self.normalization["scale"] / self.grid.fs_mass()[sel].sum())

    def to_csv(self, labels: Sequence[str] | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "density", "region_label"])
        c = self.grid.centers()
        labels = labels if labels is not None else self.normalization.get("labels", ["allowed"] * c.shape[0])
        for (x, y), d, lab in zip(c, self.density, labels):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(d)), lab])
        return buf.getvalue()


def region_labels(spec: EnsembleSpec, grid: Grid) -> list[str]:
    P = spec.constraint if spec.constraint is not None else LatticePolytope.simplex(spec.m, spec.N)
    out = []
    for k in range(grid.centers().shape[0]):
        z = grid.sample_point(k)
        out.append(classify_region(P, spec.N, z).region.value)
    return out


def _density_reducer(grid, n_cells, rng_range, zsets):
    counts = np.zeros(n_cells)
    failures = 0
    for zs in zsets:
        if isinstance(zs, Exception):
            failures += 1
            continue
        if zs.points.shape[0] == 0:
            continue
        keep = np.all(zs.points != 0, axis=1)  # (C^*)^m only
        k = grid.cell_index(zs.points[keep])
        ok = k >= 0
        np.add.at(counts, k[ok], zs.multiplicity[keep][ok])
    return counts, failures


def empirical_density(spec: EnsembleSpec, trials: int, grid: Grid, master_seed: int = 0, workers: int = 1) -> DensityMap:
    """Monte Carlo density of zeros in (C^*)^m, normalized by degree^m.

    Zeros with a vanishing coordinate and zeros at infinity are not counted.
    Failed trials are excluded; more than 1% failures raises SolverBudgetError.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    n_cells = grid.centers().shape[0]
    results = map_zero_sets(spec, trials, master_seed, partial(_density_reducer, grid, n_cells), workers)
    counts = np.sum([c for c, _ in results], axis=0)
    failures = int(sum(f for _, f in results))
    good = trials - failures
    dm = DensityMap(
        grid,
        counts,
        max(good, 1),
        {
            "scale": float(spec.N) ** spec.m,
            "degree": spec.N,
            "m": spec.m,
            "measure": grid.reference,
            "failures": failures,
            "labels": region_labels(spec, grid),
        },
    )
    check_budget(failures, trials, dm)
    return dm
