"""Certified zeros of random sections.

m = 1: companion-matrix eigenvalues, then simultaneous (Aberth) polishing in
whichever chart keeps the root bounded; residuals are chart-independent
backward errors ``|p(z)| / sum_k |a_k| |z|^k``.

m = 2: the Sylvester resultant in y, interpolated from its values on the unit
circle, is solved for x; y is recovered from the univariate restrictions and
each pair is refined by Newton's method on the system.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import mpmath
import numpy as np

from .ensembles import SectionSample

CERT_TOL = 1e-8
MERGE_TOL = 1e-9
DEGREE_CAP_2D = 12


class ZeroSolverError(RuntimeError):
    """Root finding could not certify every zero."""


class ZeroSectionError(ValueError):
    """The section vanishes identically."""


class DegeneracyError(ZeroSolverError):
    """Non-generic system (shared component, resultant identically zero)."""


@dataclass(frozen=True)
class ZeroSet:
    points: np.ndarray  # (n, m) chart coordinates of distinct finite zeros
    residuals: np.ndarray  # backward error per zero
    multiplicity: np.ndarray
    at_infinity: int
    target_count: int
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def m(self) -> int:
        return self.points.shape[1]

    @property
    def chart_zeros(self) -> list[tuple[np.ndarray, float]]:
        return [(p, float(r)) for p, r in zip(self.points, self.residuals)]

    @property
    def chart_count(self) -> int:
        return int(self.multiplicity.sum())

    @property
    def total_count(self) -> int:
        return self.chart_count + self.at_infinity

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.m == 1:
            w.writerow(["re", "im", "residual", "multiplicity"])
            for p, r, k in zip(self.points[:, 0], self.residuals, self.multiplicity):
                w.writerow([repr(float(p.real)), repr(float(p.imag)), repr(float(r)), int(k)])
        else:
            header = []
            for j in range(self.m):
                header += [f"re{j + 1}", f"im{j + 1}"]
            w.writerow(header + ["residual", "multiplicity"])
            for p, r, k in zip(self.points, self.residuals, self.multiplicity):
                row = []
                for c in p:
                    row += [repr(float(c.real)), repr(float(c.imag))]
                w.writerow(row + [repr(float(r)), int(k)])
        return buf.getvalue()


# region predicates (vectorized over an (n, m) array of chart points) -----------


def whole_chart(points: np.ndarray) -> np.ndarray:
    return np.ones(points.shape[0], dtype=bool)


def torus(points: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Points of (C^*)^m: no coordinate vanishes."""
    return np.all(np.abs(points) > tol, axis=1)


def annulus(r0: float, r1: float) -> Callable[[np.ndarray], np.ndarray]:
    def pred(points):
        r = np.abs(points[:, 0])
        return (r > r0) & (r < r1)

    return pred


def count_in(zeros: ZeroSet, region: Callable[[np.ndarray], np.ndarray]) -> int:
    """Multiplicity-weighted number of chart zeros satisfying ``region``."""
    if zeros.points.shape[0] == 0:
        return 0
    mask = np.asarray(region(zeros.points), dtype=bool)
    return int(zeros.multiplicity[mask].sum())


# univariate machinery -------------------------------------------------------


def _horner(coeffs: np.ndarray, z: np.ndarray):
    """p, p' and sum |a_k||z|^k for ascending coeffs (..., d+1) at roots (..., r)."""
    d = coeffs.shape[-1] - 1
    p = np.broadcast_to(coeffs[..., d : d + 1], z.shape).astype(complex)
    dp = np.zeros_like(p)
    s = np.broadcast_to(np.abs(coeffs[..., d : d + 1]), z.shape).astype(float)
    az = np.abs(z)
    for k in range(d - 1, -1, -1):
        dp = dp * z + p
        p = p * z + coeffs[..., k : k + 1]
        s = s * az + np.abs(coeffs[..., k : k + 1])
    return p, dp, s


def _newton_ratio(coeffs: np.ndarray, z: np.ndarray):
    """Newton correction p/p' and backward error, evaluated in the chart where |root| <= 1."""
    d = coeffs.shape[-1] - 1
    with np.errstate(all="ignore"):
        p, dp, s = _horner(coeffs, z)
        ratio_in = p / dp
        err_in = np.abs(p) / s
        w = 1.0 / z
        q, dq, t = _horner(coeffs[..., ::-1], w)
        ratio_out = z * q / (d * q - w * dq)
        err_out = np.abs(q) / t
    outer = np.abs(z) > 1.0
    ratio = np.where(outer, ratio_out, ratio_in)
    err = np.where(outer, err_out, err_in)
    err = np.where(np.isfinite(err), err, np.inf)
    return ratio, err


def aberth_polish(coeffs: np.ndarray, roots: np.ndarray, iterations: int = 6, tol: float = 1e-15):
    """Simultaneous Aberth-Ehrlich refinement of all roots; a root update is kept
    only when it does not increase that root's backward error."""
    z = roots.astype(complex).copy()
    n = z.shape[-1]
    _, err = _newton_ratio(coeffs, z)
    eye = np.eye(n, dtype=bool)
    for _ in range(iterations):
        ratio, _ = _newton_ratio(coeffs, z)
        with np.errstate(all="ignore"):
            diff = z[..., :, None] - z[..., None, :]
            diff = np.where(eye, 1.0, diff)
            inv = np.where(eye, 0.0, 1.0 / diff)
            step = ratio / (1.0 - ratio * inv.sum(axis=-1))
        cand = z - step
        _, cand_err = _newton_ratio(coeffs, cand)
        take = np.isfinite(cand) & (cand_err <= err)
        z = np.where(take, cand, z)
        err = np.where(take, cand_err, err)
        rel = np.abs(step) / np.maximum(np.abs(z), 1.0)
        if np.all(~take | (rel < tol)):
            break
    return z, err


def companion_roots(coeffs: np.ndarray) -> np.ndarray:
    """Eigenvalues of the companion matrices of a stack of ascending coefficient rows."""
    coeffs = np.atleast_2d(coeffs)
    d = coeffs.shape[1] - 1
    C = np.zeros((coeffs.shape[0], d, d), dtype=complex)
    C[:, 0, :] = -coeffs[:, d - 1 :: -1] / coeffs[:, d : d + 1]
    idx = np.arange(d - 1)
    C[:, idx + 1, idx] = 1.0
    return np.linalg.eigvals(C)


def aberth_roots(coeffs: np.ndarray, iterations: int = 500, tol: float = 1e-14) -> np.ndarray:
    """Independent all-roots solver: Aberth-Ehrlich iteration from points on a circle.

    Used as a cross-check of the companion path; does not call ``eigvals``.
    """
    a = np.asarray(coeffs, dtype=complex)
    d = a.shape[0] - 1
    # Fujiwara-style radius bound gives the starting circle
    r = 2.0 * max(abs(a[k] / a[d]) ** (1.0 / (d - k)) for k in range(d)) if d > 0 else 1.0
    r = min(max(r, 1e-3), 1e3)
    z = r * np.exp(2j * np.pi * (np.arange(d) + 0.25) / d)
    eye = np.eye(d, dtype=bool)
    for _ in range(iterations):
        ratio, _ = _newton_ratio(a, z)
        diff = np.where(eye, 1.0, z[:, None] - z[None, :])
        inv = np.where(eye, 0.0, 1.0 / diff)
        step = ratio / (1.0 - ratio * inv.sum(axis=1))
        step = np.where(np.isfinite(step), step, 0.0)
        z = z - step
        if np.max(np.abs(step) / np.maximum(np.abs(z), 1.0)) < tol:
            break
    return z


def _chordal(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a - b) / np.sqrt((1 + np.abs(a) ** 2) * (1 + np.abs(b) ** 2))


def _merge_clusters(roots: np.ndarray, errs: np.ndarray, tol: float = MERGE_TOL):
    """Merge roots closer than ``tol`` (chordal) into one zero with multiplicity."""
    n = roots.shape[0]
    if n < 2:
        return roots, errs, np.ones(n, dtype=np.int64)
    D = _chordal(roots[:, None], roots[None, :])
    np.fill_diagonal(D, np.inf)
    if D.min() >= tol:
        return roots, errs, np.ones(n, dtype=np.int64)
    label = -np.ones(n, dtype=np.int64)
    for i in range(n):
        if label[i] < 0:
            stack, label[i] = [i], i
            while stack:
                k = stack.pop()
                for j in np.nonzero((D[k] < tol) & (label < 0))[0]:
                    label[j] = i
                    stack.append(j)
    keys = np.unique(label)
    pts = np.array([roots[label == k].mean() for k in keys])
    res = np.array([errs[label == k].max() for k in keys])
    mult = np.array([(label == k).sum() for k in keys], dtype=np.int64)
    return pts, res, mult


@dataclass(frozen=True)
class _Structure:
    low: int  # exact zeros at the origin
    high: int  # index of top nonzero coefficient


def _structure(a: np.ndarray) -> _Structure:
    nz = np.nonzero(a)[0]
    if nz.size == 0:
        raise ZeroSectionError("section is identically zero")
    return _Structure(int(nz[0]), int(nz[-1]))


def _assemble(N: int, st: _Structure, core_roots, core_err, tol: float) -> ZeroSet:
    if core_roots.size and not np.all(core_err <= tol):
        bad = int(np.sum(~(core_err <= tol)))
        raise ZeroSolverError(f"{bad} of {core_roots.size} roots failed certification (max residual {np.max(core_err):.3e})")
    pts, res, mult = _merge_clusters(core_roots, core_err)
    if st.low:
        pts = np.concatenate([[0j], pts])
        res = np.concatenate([[0.0], res])
        mult = np.concatenate([[st.low], mult])
    zs = ZeroSet(pts.reshape(-1, 1), res, mult.astype(np.int64), N - st.high, N)
    if zs.total_count != N:
        raise ZeroSolverError(f"zero count {zs.total_count} != degree {N}")
    return zs


def solve_univariate(coeffs, N: int | None = None, tol: float = CERT_TOL, cross_check: bool = False) -> ZeroSet:
    """All zeros on CP^1 of the degree-N section with ascending chart coefficients."""
    a = np.asarray(coeffs, dtype=complex)
    N = a.shape[0] - 1 if N is None else N
    st = _structure(a)
    core = a[st.low : st.high + 1]
    if core.shape[0] == 1:
        return _assemble(N, st, np.zeros(0, complex), np.zeros(0), tol)
    roots = companion_roots(core)[0]
    roots, err = aberth_polish(core, roots)
    zs = _assemble(N, st, roots, err, tol)
    if cross_check:
        _cross_check(core, roots)
    return zs


def _cross_check(core: np.ndarray, roots: np.ndarray, tol: float = 1e-6):
    other, err = aberth_polish(core, aberth_roots(core))
    D = _chordal(roots[:, None], other[None, :])
    if D.min(axis=1).max() > tol or D.min(axis=0).max() > tol:
        raise ZeroSolverError("companion and Aberth root sets disagree")


def roots_cp1(sample: SectionSample, tol: float = CERT_TOL, cross_check: bool = False) -> ZeroSet:
    if sample.spec.m != 1:
        raise ValueError("roots_cp1 needs an m = 1 section")
    N = sample.spec.N
    a = np.zeros(N + 1, dtype=complex)
    a[sample.spec.exponents[:, 0]] = sample.chart_coeffs()
    return solve_univariate(a, N, tol=tol, cross_check=cross_check)


def solve_cp1_batch(coeffs: np.ndarray, tol: float = CERT_TOL) -> list:
    """Zeros of many degree-N sections given as ascending chart coefficient rows.

    Returns one entry per row: a ZeroSet, or the exception that row raised.
    Rows sharing the same exact-zero pattern go through one batched eigensolve.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    N = coeffs.shape[1] - 1
    out: list = [None] * coeffs.shape[0]
    groups: dict[tuple[int, int], list[int]] = {}
    for i, row in enumerate(coeffs):
        try:
            st = _structure(row)
        except ZeroSectionError as exc:
            out[i] = exc
            continue
        groups.setdefault((st.low, st.high), []).append(i)
    for (lo, hi), rows in groups.items():
        st = _Structure(lo, hi)
        core = coeffs[rows, lo : hi + 1]
        if hi == lo:
            for i in rows:
                out[i] = _assemble(N, st, np.zeros(0, complex), np.zeros(0), tol)
            continue
        roots = companion_roots(core)
        roots, err = aberth_polish(core, roots)
        for k, i in enumerate(rows):
            try:
                out[i] = _assemble(N, st, roots[k], err[k], tol)
            except ZeroSolverError as exc:
                out[i] = exc
    return out


# bivariate systems ---------------------------------------------------------------


def dense_coefficients(sample: SectionSample) -> np.ndarray:
    """C[i, j] = chart coefficient of x^i y^j for an m = 2 section."""
    if sample.spec.m != 2:
        raise ValueError("need an m = 2 section")
    e = sample.spec.exponents
    C = np.zeros((e[:, 0].max() + 1, e[:, 1].max() + 1), dtype=complex)
    C[e[:, 0], e[:, 1]] = sample.chart_coeffs()
    return _trim2d(C)


def _trim2d(C: np.ndarray) -> np.ndarray:
    nz = np.argwhere(C != 0)
    if nz.size == 0:
        raise ZeroSectionError("section is identically zero")
    return C[: nz[:, 0].max() + 1, : nz[:, 1].max() + 1]


def total_degree(C: np.ndarray) -> int:
    nz = np.argwhere(C != 0)
    return int(nz.sum(axis=1).max())


def _sylvester_stack(F: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Sylvester matrices in y for each column of evaluated y-coefficients.

    F, G: (K, dy+1) ascending y-coefficients at K values of x.
    """
    K, df, dg = F.shape[0], F.shape[1] - 1, G.shape[1] - 1
    n = df + dg
    S = np.zeros((K, n, n), dtype=complex)
    for i in range(dg):
        S[:, i, i : i + df + 1] = F[:, ::-1]
    for i in range(df):
        S[:, dg + i, i : i + dg + 1] = G[:, ::-1]
    return S


def resultant_coefficients(Cf: np.ndarray, Cg: np.ndarray, cond_limit: float = 1e10):
    """Ascending coefficients (in x) of Res_y(f, g), plus a record of how they were computed."""
    df, dg = Cf.shape[1] - 1, Cg.shape[1] - 1
    bound = dg * (Cf.shape[0] - 1) + df * (Cg.shape[0] - 1)
    K = 1
    while K < bound + 1:
        K *= 2
    x = np.exp(2j * np.pi * np.arange(K) / K)
    F = np.stack([np.polynomial.polynomial.polyval(x, Cf[:, j]) for j in range(df + 1)], axis=1)
    G = np.stack([np.polynomial.polynomial.polyval(x, Cg[:, j]) for j in range(dg + 1)], axis=1)
    scale = np.sum(np.abs(Cf)) ** dg * np.sum(np.abs(Cg)) ** df
    if df + dg == 0:
        return np.array([1.0 + 0j]), {"extended_precision": False, "scale": scale}
    S = _sylvester_stack(F, G)
    cond = np.linalg.cond(S)
    extended = bool(np.nanmax(np.where(np.isfinite(cond), cond, np.inf)) > cond_limit)
    if extended:
        with mpmath.workdps(40):
            vals = np.array([complex(mpmath.det(mpmath.matrix(s.tolist()))) for s in S])
    else:
        vals = np.linalg.det(S)
    if np.max(np.abs(vals)) < 1e-10 * scale:
        raise DegeneracyError("resultant vanishes identically (shared component)")
    coeffs = np.fft.fft(vals) / K
    return coeffs[: bound + 1], {"extended_precision": extended, "scale": scale, "max_condition": float(np.nanmax(cond))}


def _eval2d(C: np.ndarray, x: complex, y: complex):
    P = np.polynomial.polynomial
    v = P.polyval2d(x, y, C)
    vx = P.polyval2d(x, y, P.polyder(C, axis=0)) if C.shape[0] > 1 else 0j
    vy = P.polyval2d(x, y, P.polyder(C, axis=1)) if C.shape[1] > 1 else 0j
    s = P.polyval2d(abs(x), abs(y), np.abs(C))
    return v, vx, vy, s


def _system_residual(Cf, Cg, x, y) -> float:
    f, _, _, sf = _eval2d(Cf, x, y)
    g, _, _, sg = _eval2d(Cg, x, y)
    return max(abs(f) / sf, abs(g) / sg)


def _newton2d(Cf, Cg, x, y, iterations: int = 30):
    best = (x, y, _system_residual(Cf, Cg, x, y))
    for _ in range(iterations):
        f, fx, fy, _ = _eval2d(Cf, x, y)
        g, gx, gy, _ = _eval2d(Cg, x, y)
        J = np.array([[fx, fy], [gx, gy]])
        try:
            dx, dy = np.linalg.solve(J, [f, g])
        except np.linalg.LinAlgError:
            break
        x, y = x - dx, y - dy
        if not (np.isfinite(x) and np.isfinite(y)):
            break
        r = _system_residual(Cf, Cg, x, y)
        if r < best[2]:
            best = (x, y, r)
        if abs(dx) + abs(dy) < 1e-15 * (1 + abs(x) + abs(y)):
            break
    return best


def _cluster_values(vals: np.ndarray, tol: float):
    centers, counts = [], []
    for v in vals:
        for k, c in enumerate(centers):
            if abs(v - c) <= tol * max(1.0, abs(c)):
                counts[k] += 1
                break
        else:
            centers.append(v)
            counts.append(1)
    return centers, counts


def solve_system_2d(f: SectionSample, g: SectionSample, degree_cap: int = DEGREE_CAP_2D, tol: float = CERT_TOL) -> ZeroSet:
    """All common zeros in C^2 of two m = 2 sections.

    ``target_count`` is the Bezout number of the total degrees; whatever is not
    found in the chart is at infinity. Use ``count_in(zs, torus)`` for the
    (C^*)^2 tally.
    """
    Cf, Cg = dense_coefficients(f), dense_coefficients(g)
    df_tot, dg_tot = total_degree(Cf), total_degree(Cg)
    if max(df_tot, dg_tot) > degree_cap:
        raise ValueError(f"effective degrees ({df_tot}, {dg_tot}) exceed the cap {degree_cap}")
    target = df_tot * dg_tot
    dyf, dyg = Cf.shape[1] - 1, Cg.shape[1] - 1
    if dyf == 0 and dyg == 0:
        # both independent of y: generic pair has no common x root
        rf = np.polynomial.polynomial.polyroots(Cf[:, 0]) if Cf.shape[0] > 1 else np.zeros(0)
        rg = np.polynomial.polynomial.polyroots(Cg[:, 0]) if Cg.shape[0] > 1 else np.zeros(0)
        if rf.size and rg.size and np.min(np.abs(rf[:, None] - rg[None, :])) < 1e-8:
            raise DegeneracyError("sections share a factor in x alone")
        return ZeroSet(np.zeros((0, 2), complex), np.zeros(0), np.zeros(0, np.int64), target, target)

    res, info = resultant_coefficients(Cf, Cg)
    mag = np.abs(res)
    keep = mag > 1e-11 * mag.max()
    hi = int(np.nonzero(keep)[0].max())
    lo = int(np.nonzero(keep)[0].min())
    xs: list[complex] = [0j] * lo
    if hi > lo:
        xr = companion_roots(res[lo : hi + 1])[0]
        xr, _ = aberth_polish(res[lo : hi + 1], xr)
        xs += list(xr)

    centers, counts = _cluster_values(np.array(xs), 1e-6)
    sols, resid = [], []
    for xc, mu in zip(centers, counts):
        Fy = np.polynomial.polynomial.polyval(xc, Cf)  # ascending in y
        Gy = np.polynomial.polynomial.polyval(xc, Cg)
        use, other = (Fy, Gy) if (dyf > 0 and (dyf <= dyg or dyg == 0)) else (Gy, Fy)
        use = np.trim_zeros(use, "b")
        if use.shape[0] < 2:
            raise ZeroSolverError("no finite y-roots for a resultant root")
        cands = np.polynomial.polynomial.polyroots(use)
        oth = np.abs(np.polynomial.polynomial.polyval(cands, other)) / np.maximum(
            np.polynomial.polynomial.polyval(np.abs(cands), np.abs(other)), 1e-300
        )
        order = np.argsort(oth)[:mu]
        if order.size < mu:
            raise ZeroSolverError("too few y candidates for a multiple resultant root")
        for k in order:
            x1, y1, r = _newton2d(Cf, Cg, complex(xc), complex(cands[k]))
            sols.append((x1, y1))
            resid.append(r)

    pts = np.array(sols, dtype=complex).reshape(-1, 2)
    resid = np.array(resid)
    if pts.shape[0] and not np.all(resid <= tol):
        raise ZeroSolverError(f"{int(np.sum(resid > tol))} system zeros failed certification")
    if pts.shape[0] > 1:
        D = np.max(np.abs(pts[:, None, :] - pts[None, :, :]), axis=2) / (1 + np.max(np.abs(pts), axis=1))[:, None]
        np.fill_diagonal(D, np.inf)
        if D.min() < 1e-7:
            raise ZeroSolverError("refinement collapsed distinct resultant roots onto one zero")
    at_inf = target - pts.shape[0]
    if at_inf < 0:
        raise ZeroSolverError("more finite zeros than the Bezout bound")
    return ZeroSet(pts, resid, np.ones(pts.shape[0], dtype=np.int64), at_inf, target, meta=info)
