"""Bergman-Szego kernels of (possibly polytope-restricted) ensembles, their
sqrt(N)-rescaled Heisenberg limit, expected zero densities and jet
covariances for Kac-Rice computations.

Chart kernels are covariances of the chart polynomial:
``Pi(z, w) = E[s(z) conj(s(w))] = sum_a z^a conj(w)^a / ||z^a||^2``.
For the full ensemble this is ``binom(N+m, m) * (1 + <z, w>)^N``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from math import comb, factorial

import numpy as np
from scipy.special import logsumexp

from .ensembles import EnsembleSpec, as_points
from .polytopes import LatticePolytope, dilate


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelValue:
    value: complex  # may be inf when the kernel overflows a double
    N: int
    m: int
    log_abs: float  # log |value|, always finite unless value == 0


@dataclass(frozen=True)
class JetCovariance:
    """Covariance of (s(z^j), grad s(z^j))_j, ordered point by point.

    ``matrix[i, k] = E[X_i conj(X_k)]`` for the stacked jet vector X.
    """

    points: np.ndarray
    matrix: np.ndarray
    near_singular: bool = False

    @property
    def block(self) -> int:
        return self.points.shape[1] + 1

    def value_indices(self) -> np.ndarray:
        return np.arange(self.points.shape[0]) * self.block

    def gradient_indices(self) -> np.ndarray:
        b = self.block
        return np.array([j * b + 1 + k for j in range(self.points.shape[0]) for k in range(b - 1)])


def _fsum_complex(terms: np.ndarray) -> complex:
    return complex(math.fsum(terms.real.tolist()), math.fsum(terms.imag.tolist()))


def _log_terms(exponents: np.ndarray, log_norms: np.ndarray, z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Complex logs of z^a conj(w)^a / ||z^a||^2 (-inf real part for vanishing terms)."""
    zw = z * np.conj(w)
    out = -2.0 * log_norms.astype(complex)
    with np.errstate(divide="ignore"):
        logzw = np.log(zw.astype(complex))
    for j in range(exponents.shape[1]):
        e = exponents[:, j]
        if zw[j] == 0:
            out = np.where(e > 0, -np.inf + 0j, out)
        else:
            out = out + e * logzw[j]
    return out


def kernel_basis(spec: EnsembleSpec, z, w) -> KernelValue:
    """Kernel of an arbitrary monomial ensemble by log-scaled compensated summation."""
    zp, _ = as_points(z, spec.m)
    wp, _ = as_points(w, spec.m)
    logs = _log_terms(spec.exponents, spec.log_norms, zp[0], wp[0])
    finite = np.isfinite(logs.real)
    if not finite.any():
        return KernelValue(0j, spec.N, spec.m, -np.inf)
    shift = logs.real[finite].max()
    mant = _fsum_complex(np.exp(logs[finite] - shift))
    log_abs = shift + math.log(abs(mant)) if mant != 0 else -np.inf
    with np.errstate(over="ignore"):
        value = complex(mant * np.exp(shift)) if shift < 700 else complex(np.inf)
    return KernelValue(value, spec.N, spec.m, log_abs)


def kernel_full(m: int, N: int, z, w) -> KernelValue:
    """binom(N+m, m) (1 + z.conj(w))^N, evaluated in log form."""
    if not 1 <= m <= 3:
        raise KernelError("kernel_full supports 1 <= m <= 3")
    zp, _ = as_points(z, m)
    wp, _ = as_points(w, m)
    # real arithmetic keeps <z, w> and <w, z> exact conjugates (numpy may fuse multiply-adds)
    re = 1.0 + math.fsum(float(a.real) * float(b.real) + float(a.imag) * float(b.imag) for a, b in zip(zp[0], wp[0]))
    im = math.fsum(float(a.imag) * float(b.real) - float(a.real) * float(b.imag) for a, b in zip(zp[0], wp[0]))
    inner = complex(re, im)
    if inner == 0:
        return KernelValue(0j if N > 0 else complex(comb(N + m, m)), N, m, -np.inf if N > 0 else math.log(comb(N + m, m)))
    log_abs = math.log(comb(N + m, m)) + N * math.log(abs(inner))
    value = comb(N + m, m) * _ipow(inner, N) if log_abs < 700 else complex(np.inf)
    return KernelValue(complex(value), N, m, log_abs)


def _ipow(x: complex, n: int) -> complex:
    """x**n by repeated squaring; conjugation-symmetric bit for bit, and real for real x."""
    out, base = 1.0 + 0j, complex(x)
    while n:
        if n & 1:
            out *= base
        base *= base
        n >>= 1
    return out


def conditional_spec(P: LatticePolytope, N: int, p: int | None = None) -> EnsembleSpec:
    """Ensemble spanned by the lattice points of NP inside the degree p*N simplex.

    ``p`` defaults to the smallest simplex degree containing P.
    """
    p = P.max_degree() if p is None else p
    return EnsembleSpec(P.m, p * N, dilate(P, N))


def kernel_conditional(P: LatticePolytope, N: int, z, w, p: int | None = None) -> KernelValue:
    spec = conditional_spec(P, N, p)
    if any(sum(a) > spec.N for a in spec.constraint.lattice_points()):
        raise KernelError("dilated polytope leaves the degree simplex")
    return kernel_basis(spec, z, w)


def log_kernel_diagonal(spec: EnsembleSpec, points: np.ndarray) -> np.ndarray:
    """log Pi(z, z) for a stack of chart points (n, m)."""
    a = np.abs(points) ** 2
    with np.errstate(divide="ignore"):
        loga = np.log(a)
    terms = -2.0 * spec.log_norms[None, :]
    for j in range(spec.m):
        e = spec.exponents[:, j][None, :]
        contrib = np.where(e > 0, e * loga[:, j][:, None], 0.0)
        terms = terms + contrib
    return logsumexp(terms, axis=1)


# Heisenberg limit -----------------------------------------------------------


def heisenberg_kernel(u, v) -> complex:
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    v = np.atleast_1d(np.asarray(v, dtype=complex))
    return complex(np.exp(np.sum(u * np.conj(v)) - 0.5 * (np.sum(np.abs(u) ** 2) + np.sum(np.abs(v) ** 2))))


def scaled_kernel(m: int, N: int, u, v) -> complex:
    """pi^m N^-m Pi_N(u/sqrt(N), v/sqrt(N)) in normal coordinates at the origin.

    Pi_N here is the kernel of the L^2 space for the volume form omega^m/m!
    with omega = (i/2) ddbar log(1+|z|^2) (Euclidean at the origin), lifted
    with the hermitian frame factors (1+|z|^2)^(-N/2); that volume form has
    total mass pi^m/m!, hence the factor m!/pi^m on the probability kernel.
    """
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    v = np.atleast_1d(np.asarray(v, dtype=complex))
    if u.shape[0] != m or v.shape[0] != m:
        raise KernelError("u and v must have m coordinates")
    z, w = u / math.sqrt(N), v / math.sqrt(N)
    log_prob_kernel = math.log(comb(N + m, m)) + N * np.log(1.0 + np.sum(z * np.conj(w)))
    log_frames = -0.5 * N * (math.log1p(float(np.sum(np.abs(z) ** 2))) + math.log1p(float(np.sum(np.abs(w) ** 2))))
    log_val = log_prob_kernel + log_frames + math.log(factorial(m)) - m * math.log(N)
    return complex(np.exp(log_val))


def scaled_kernel_error(m: int, N: int, u, v) -> float:
    return abs(scaled_kernel(m, N, u, v) - heisenberg_kernel(u, v))


# expected zero density ----------------------------------------------------------


def _complex_hessian(f, z: np.ndarray, h: float) -> np.ndarray:
    """H[j, k] = d^2 f / dz_j dzbar_k by central differences with step h."""
    m = z.shape[0]
    H = np.zeros((m, m), dtype=complex)
    f0 = f(z)

    def shift(*moves):
        p = z.copy()
        for j, d in moves:
            p[j] += d
        return p

    for j in range(m):
        ex, ey = h, 1j * h
        lap = (f(shift((j, ex))) + f(shift((j, -ex))) + f(shift((j, ey))) + f(shift((j, -ey))) - 4 * f0) / h**2
        H[j, j] = lap / 4.0
        for k in range(j + 1, m):
            def d2(a, b):
                return (
                    f(shift((j, a), (k, b))) - f(shift((j, a), (k, -b))) - f(shift((j, -a), (k, b))) + f(shift((j, -a), (k, -b)))
                ) / (4 * h * h)

            fxx = d2(h, h)
            fyy = d2(1j * h, 1j * h)
            fxy = d2(h, 1j * h)  # d/dx_j d/dy_k
            fyx = d2(1j * h, h)  # d/dy_j d/dx_k
            H[j, k] = 0.25 * (fxx + fyy) + 0.25j * (fxy - fyx)
            H[k, j] = np.conj(H[j, k])
    return H


def log_kernel_hessian(spec: EnsembleSpec, z, h: float = 1e-3) -> np.ndarray:
    """ddbar log Pi(z, z) with Richardson extrapolation over steps h and h/2."""
    pts, _ = as_points(z, spec.m)
    z0 = pts[0].copy()

    def f(p):
        val = float(log_kernel_diagonal(spec, p[None, :])[0])
        if not np.isfinite(val):
            raise KernelError(f"log kernel is not finite at z={p} (kernel underflow or all basis monomials vanish)")
        return val

    H1 = _complex_hessian(f, z0, h)
    H2 = _complex_hessian(f, z0, h / 2)
    return (4 * H2 - H1) / 3


def expected_density(spec: EnsembleSpec, z, h: float = 1e-3, form: str = "points") -> float:
    """Density (against chart Lebesgue measure) of the expected zero current.

    ``form="points"``: simultaneous zeros of m independent sections, the top
    power ((i/2pi) ddbar log Pi)^m, i.e. m! det(H) / pi^m. ``form="hypersurface"``
    is the trace density (1/pi) tr(H) of a single zero hypersurface. Both agree
    for m=1, where the value is Laplacian(log Pi) / (4 pi).
    """
    if not 1e-5 <= h <= 1e-2:
        raise KernelError("finite-difference step must lie in [1e-5, 1e-2]")
    H = log_kernel_hessian(spec, z, h)
    if form == "points":
        val = factorial(spec.m) * np.linalg.det(H).real / math.pi**spec.m
    elif form == "hypersurface":
        val = np.trace(H).real / math.pi
    else:
        raise KernelError(f"unknown density form {form!r}")
    return max(float(val), 0.0)


def expected_zeros_in_disk(spec: EnsembleSpec, r: float) -> float:
    """Expected number of zeros (with multiplicity) in |z| < r for m = 1.

    Integrating the density over the disk gives r/2 d/dr log Pi(r, r), the mean
    exponent under weights exp(2 log r k - 2 log ||z^k||). Zeros forced at the
    origin by the lowest exponent are included.
    """
    if spec.m != 1:
        raise KernelError("disk counts are defined for m = 1")
    if r <= 0:
        return 0.0
    if math.isinf(r):
        return float(spec.exponents[:, 0].max())
    k = spec.exponents[:, 0].astype(float)
    logw = 2.0 * k * math.log(r) - 2.0 * spec.log_norms
    w = np.exp(logw - logsumexp(logw))
    return float(np.sum(w * k))


def fubini_study_density(m: int, z) -> np.ndarray:
    """Density of omega_FS^m (total mass 1) against chart Lebesgue measure."""
    pts, single = as_points(z, m)
    val = factorial(m) / (math.pi**m * (1.0 + np.sum(np.abs(pts) ** 2, axis=1)) ** (m + 1))
    return float(val[0]) if single else val


# jet covariances ------------------------------------------------------------


def jet_rows(spec: EnsembleSpec, point: np.ndarray) -> np.ndarray:
    """Rows expressing (s(z), ds/dz_1, ..., ds/dz_m) as linear forms in the coefficients lam."""
    e = spec.exponents
    rows = np.empty((spec.m + 1, spec.dim), dtype=complex)
    rows[0] = _log_monomials(e, spec.log_norms, point)
    for j in range(spec.m):
        d = e.copy()
        d[:, j] -= 1
        ok = d[:, j] >= 0
        vals = np.zeros(spec.dim, dtype=complex)
        vals[ok] = e[ok, j] * _log_monomials(d[ok], spec.log_norms[ok], point)
        rows[j + 1] = vals
    return rows


def _log_monomials(e: np.ndarray, log_norms: np.ndarray, point: np.ndarray) -> np.ndarray:
    """z^e / ||z^alpha|| through logs, so huge norms and tiny powers never meet in a double."""
    logs = -log_norms.astype(complex)
    for j in range(point.shape[0]):
        if point[j] == 0:
            logs = np.where(e[:, j] > 0, -np.inf + 0j, logs)
        else:
            logs = logs + e[:, j] * np.log(complex(point[j]))
    return np.where(np.isfinite(logs.real), np.exp(logs), 0.0)


def _singular_flag(points: np.ndarray, matrix: np.ndarray) -> bool:
    n = points.shape[0]
    for i in range(n):
        for k in range(i + 1, n):
            if np.linalg.norm(points[i] - points[k]) < 1e-8:
                return True
    ev = np.linalg.eigvalsh(matrix)
    return bool(ev[0] < 1e-12 * max(ev[-1], 1e-300))


def jet_covariance(spec: EnsembleSpec, points) -> JetCovariance:
    pts, _ = as_points(points, spec.m)
    V = np.vstack([jet_rows(spec, p) for p in pts])
    C = V @ V.conj().T
    C = 0.5 * (C + C.conj().T)
    flag = _singular_flag(pts, C)
    if flag:
        warnings.warn("jet covariance is near singular (coincident or degenerate points)", RuntimeWarning, stacklevel=2)
    return JetCovariance(pts, C, flag)


def fock_jet_covariance(points) -> JetCovariance:
    """Jet covariance of the limiting Gaussian field with kernel exp(<u, v>).

    This is the holomorphic field whose normalized covariance is the
    Heisenberg kernel; both have the same zeros.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=complex))
    n, m = pts.shape
    b = m + 1
    C = np.empty((n * b, n * b), dtype=complex)
    for i in range(n):
        for k in range(n):
            u, v = pts[i], pts[k]
            K = np.exp(np.sum(u * np.conj(v)))
            blk = np.empty((b, b), dtype=complex)
            blk[0, 0] = K
            blk[0, 1:] = u * K  # E[s(u) conj(ds/dz_l(v))]
            blk[1:, 0] = np.conj(v) * K  # E[ds/dz_j(u) conj(s(v))]
            blk[1:, 1:] = (np.eye(m) + np.outer(np.conj(v), u)) * K
            C[i * b : (i + 1) * b, k * b : (k + 1) * b] = blk
    C = 0.5 * (C + C.conj().T)
    return JetCovariance(pts, C, _singular_flag(pts, C))
