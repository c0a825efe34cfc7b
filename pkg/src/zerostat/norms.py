"""L^p and sup norms of random sections of O(N) over CP^1.

Norms use the hermitian magnitude ``|s|_h = |s(z)| / (1+|z|^2)^(N/2)`` against
the Fubini-Study probability measure. In polar coordinates
``z = tan(theta/2) e^{i phi}`` the section reads

    s_h(theta, phi) = sum_k c_k cos(theta/2)^(N-k) sin(theta/2)^k e^{i k phi}

so each ring of constant theta is a trigonometric polynomial evaluated by FFT,
and dV = d(cos theta) d(phi) / (4 pi).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import partial
from typing import Sequence

import numpy as np

from .ensembles import EnsembleSpec, SectionSample, sample_section, trial_rng
from .trials import parallel_map


class ResolutionError(RuntimeError):
    """Quadrature did not converge under grid doubling."""


@dataclass(frozen=True)
class Quadrature:
    n_theta: int  # Gauss-Legendre nodes in cos(theta)
    n_phi: int  # equispaced nodes in phi


@dataclass(frozen=True)
class NormSeries:
    degrees: tuple
    p: float
    means: np.ndarray
    stderrs: np.ndarray
    trials: int

    def __post_init__(self):
        if np.any(np.diff(self.degrees) <= 0):
            raise ValueError("degrees must be strictly increasing")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "p", "mean", "stderr", "trials"])
        for N, mu, se in zip(self.degrees, self.means, self.stderrs):
            w.writerow([int(N), "inf" if math.isinf(self.p) else repr(float(self.p)), repr(float(mu)), repr(float(se)), self.trials])
        return buf.getvalue()


def _coefficients(sample: SectionSample) -> tuple[np.ndarray, np.ndarray]:
    spec = sample.spec
    if spec.m != 1:
        raise ValueError("norms are implemented on CP^1 (m = 1)")
    return spec.exponents[:, 0].astype(np.int64), sample.chart_coeffs()


def _ring_values(k: np.ndarray, c: np.ndarray, N: int, t: np.ndarray, n_phi: int) -> np.ndarray:
    """s_h on rings cos(theta) = t at phi_j = 2 pi j / n_phi; shape (len(t), n_phi)."""
    half_c = np.sqrt(np.clip((1 + t) / 2, 0, 1))
    half_s = np.sqrt(np.clip((1 - t) / 2, 0, 1))
    a = c[None, :] * np.power(half_c[:, None], (N - k)[None, :]) * np.power(half_s[:, None], k[None, :])
    folded = np.zeros((t.shape[0], n_phi), dtype=complex)
    np.add.at(folded, (slice(None), k % n_phi), a)
    return np.fft.ifft(folded, axis=1) * n_phi


def default_quadrature(N: int, p: float) -> Quadrature:
    """Exact for even integer p: |s|_h^p is a polynomial of degree pN/2 in cos(theta)
    and a trigonometric polynomial of degree pN/2 in phi."""
    q = 2.0 if math.isinf(p) else max(p, 2.0)
    deg = int(math.ceil(q * N / 2))
    return Quadrature(deg // 2 + 2, deg + 2)


def _exact_for(p: float, N: int, quad: Quadrature) -> bool:
    if math.isinf(p) or p != int(p) or int(p) % 2:
        return False
    deg = int(p) * N // 2
    return 2 * quad.n_theta - 1 >= deg and quad.n_phi > deg


def _integrate(sample: SectionSample, quad: Quadrature, powers: Sequence[float]) -> list[float]:
    k, c = _coefficients(sample)
    t, w = np.polynomial.legendre.leggauss(quad.n_theta)
    mag = np.abs(_ring_values(k, c, sample.spec.N, t, quad.n_phi))
    weights = (w / 2.0)[:, None] / quad.n_phi
    return [float(np.sum(weights * mag**q)) for q in powers]


def l2_norm(sample: SectionSample, quad: Quadrature | None = None) -> float:
    quad = quad or default_quadrature(sample.spec.N, 2)
    return math.sqrt(_integrate(sample, quad, [2])[0])


def lp_norm(sample: SectionSample, p: float, quad: Quadrature | None = None) -> float:
    """L^p norm of the L^2-normalized section (p = inf gives the sup norm).

    Non-even p (or a quadrature too coarse to be exact) is checked by grid
    doubling and raises ResolutionError when the value moves by more than 1e-3.
    """
    if p < 2:
        raise ValueError("p must be at least 2")
    if math.isinf(p):
        return sup_norm(sample)
    N = sample.spec.N
    quad = quad or default_quadrature(N, p)
    s2, sp = _integrate(sample, quad, [2, p])
    if not (_exact_for(p, N, quad) and _exact_for(2, N, quad)):
        fine = Quadrature(2 * quad.n_theta, 2 * quad.n_phi)
        f2, fp = _integrate(sample, fine, [2, p])
        coarse_val = (sp / s2 ** (p / 2)) ** (1 / p)
        fine_val = (fp / f2 ** (p / 2)) ** (1 / p)
        if abs(fine_val - coarse_val) > 1e-3 * fine_val:
            raise ResolutionError(f"L^{p} quadrature changed by {abs(fine_val - coarse_val) / fine_val:.2e} under doubling")
        return float(fine_val)
    return float((sp / s2 ** (p / 2)) ** (1 / p))


# sup norm -----------------------------------------------------------------------


def _eval_polar(k, c, N, theta, phi) -> complex:
    return complex(np.sum(c * np.cos(theta / 2) ** (N - k) * np.sin(theta / 2) ** k * np.exp(1j * k * phi)))


def _log_mag2(k, c, N, x) -> float:
    v = abs(_eval_polar(k, c, N, x[0], x[1])) ** 2
    return math.log(v) if v > 0 else -np.inf


def _newton_ascent(f, x0: np.ndarray, h: float, iterations: int = 20) -> tuple[np.ndarray, float]:
    """Maximize f from x0 with finite-difference Newton steps and backtracking."""
    x, fx = x0.astype(float), f(x0)
    for _ in range(iterations):
        e = np.eye(2) * h
        g = np.array([(f(x + e[i]) - f(x - e[i])) / (2 * h) for i in range(2)])
        H = np.empty((2, 2))
        for i in range(2):
            H[i, i] = (f(x + e[i]) - 2 * fx + f(x - e[i])) / h**2
        H[0, 1] = H[1, 0] = (f(x + e[0] + e[1]) - f(x + e[0] - e[1]) - f(x - e[0] + e[1]) + f(x - e[0] - e[1])) / (4 * h * h)
        if not np.all(np.isfinite(g)):
            break
        try:
            step = -np.linalg.solve(H, g) if np.all(np.linalg.eigvalsh(H) < 0) else g * h
        except np.linalg.LinAlgError:
            step = g * h
        lam = 1.0
        while lam > 1e-6:
            y = x + lam * step
            fy = f(y)
            if fy > fx:
                break
            lam *= 0.5
        else:
            break
        if np.max(np.abs(y - x)) < 1e-12:
            x, fx = y, fy
            break
        x, fx = y, fy
    return x, fx


def sup_grid_side(N: int) -> int:
    return max(512, int(math.ceil(8 * math.sqrt(N))))


def sup_norm(sample: SectionSample, top: int = 10) -> float:
    """max |s|_h over CP^1 for the L^2-normalized section.

    A Fubini-Study-uniform grid (uniform in cos(theta) and phi) locates the
    candidates; Newton ascent from the ``top`` best cells refines them.
    """
    N = sample.spec.N
    k, c = _coefficients(sample)
    G = sup_grid_side(N)
    t = -1.0 + (np.arange(G) + 0.5) * (2.0 / G)
    mag = np.abs(_ring_values(k, c, N, t, G))
    flat = np.argsort(mag, axis=None)[::-1][:top]
    best = float(mag.max())
    f = partial(_log_mag2, k, c, N)
    h = 1e-3 / math.sqrt(max(N, 1))
    for idx in flat:
        i, j = np.unravel_index(idx, mag.shape)
        x0 = np.array([math.acos(t[i]), 2 * math.pi * j / G])
        _, fx = _newton_ascent(f, x0, h)
        if np.isfinite(fx):
            best = max(best, math.exp(0.5 * fx))
    return best / l2_norm(sample)


# caps and invariance ---------------------------------------------------------------


def _unitary_to(center: complex) -> np.ndarray:
    """U in SU(2) mapping the north pole [1:0] to [1:center]."""
    s = math.sqrt(1 + abs(center) ** 2)
    a, b = 1 / s, center / s
    return np.array([[a, -np.conj(b)], [b, np.conj(a)]])


def cap_lp_norm(sample: SectionSample, p: float, center: complex, radius: float, n_theta: int = 64, n_phi: int = 128) -> float:
    """(average of |s|_h^p over a geodesic cap)^(1/p) for the L^2-normalized section.

    ``radius`` is the polar angle of the cap (theta in [0, pi])."""
    k, c = _coefficients(sample)
    N = sample.spec.N
    x, w = np.polynomial.legendre.leggauss(n_theta)
    t0 = math.cos(radius)
    t = 0.5 * (1 - t0) * x + 0.5 * (1 + t0)
    wt = 0.5 * (1 - t0) * w
    phi = 2 * math.pi * np.arange(n_phi) / n_phi
    Z0 = np.sqrt((1 + t) / 2)[:, None] * np.ones_like(phi)[None, :]
    Z1 = np.sqrt((1 - t) / 2)[:, None] * np.exp(1j * phi)[None, :]
    U = _unitary_to(center)
    W0 = U[0, 0] * Z0 + U[0, 1] * Z1
    W1 = U[1, 0] * Z0 + U[1, 1] * Z1
    vals = np.zeros_like(W0)
    for kk, cc in zip(k, c):
        vals += cc * W0 ** (N - kk) * W1**kk
    mag = np.abs(vals) / l2_norm(sample)
    if math.isinf(p):
        return float(mag.max())
    avg = np.sum(wt[:, None] * mag**p) / (n_phi * wt.sum())
    return float(avg ** (1 / p))


def _norm_job(N: int, p: float, master_seed: int, template: EnsembleSpec | None, rng_range: range) -> list[float]:
    spec = EnsembleSpec(1, N, template.constraint if template is not None else None)
    return [lp_norm(sample_section(spec, trial_rng(master_seed, t, stream=N)), p) for t in rng_range]


def growth_series(
    degrees: Sequence[int],
    trials: int,
    p: float,
    master_seed: int = 0,
    template: EnsembleSpec | None = None,
    workers: int = 1,
    chunk: int = 50,
) -> NormSeries:
    """Mean normalized L^p norm per degree with its standard error."""
    degrees = tuple(int(N) for N in degrees)
    if any(N < 16 or N > 1024 for N in degrees):
        raise ValueError("degrees must lie in [16, 1024]")
    means, errs = [], []
    for N in degrees:
        parts = parallel_map(
            partial(_norm_job, N, p, master_seed, template),
            [range(s, min(s + chunk, trials)) for s in range(0, trials, chunk)],
            workers,
        )
        vals = np.concatenate([np.asarray(v, dtype=float) for v in parts])
        means.append(vals.mean())
        errs.append(vals.std(ddof=1) / math.sqrt(vals.size) if vals.size > 1 else 0.0)
    return NormSeries(degrees, p, np.array(means), np.array(errs), trials)
