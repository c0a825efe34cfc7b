"""Gaussian ensembles of holomorphic sections of O(N) over CP^m.

A section is stored by its coefficients ``lam`` in the orthonormal monomial
basis ``z**alpha / ||z**alpha||_FS``; in the affine chart it is the
polynomial ``sum(lam[a] * z**alpha[a] / norm[a])``.

The Fubini-Study norms are taken against Haar measure of total mass 1 on
S^{2m+1}, for which the homogenization ``Z_0^(N-|alpha|) Z^alpha`` satisfies
``||.||^2 = m! beta! / (N+m)!`` with ``beta = (N-|alpha|, alpha)``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from math import comb, lgamma
from typing import Iterable, Mapping

import numpy as np

from .polytopes import LatticePolytope, graded_lex_key, lattice_points, parse_polytope

MAX_DIMENSION = 3


class EnsembleError(ValueError):
    pass


def trial_rng(master_seed: int, trial: int, stream: int | None = None) -> np.random.Generator:
    """Independent stream for one Monte Carlo trial.

    Keyed on ``(master_seed, trial)`` through ``SeedSequence`` so results never
    depend on how trials are split across workers.
    """
    key = [int(master_seed) & (2**64 - 1), int(trial)]
    if stream is not None:
        key.append(int(stream))
    return np.random.default_rng(np.random.SeedSequence(key))


def log_monomial_norm(m: int, N: int, alpha) -> float:
    """log ||z^alpha||_FS for the degree-N homogenization."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != m:
        raise EnsembleError(f"index {alpha} does not have {m} entries")
    if any(a < 0 for a in alpha):
        raise EnsembleError(f"negative exponent in {alpha}")
    if sum(alpha) > N:
        raise EnsembleError(f"|alpha| = {sum(alpha)} exceeds degree {N}")
    beta = (N - sum(alpha),) + alpha
    return 0.5 * (lgamma(m + 1) + sum(lgamma(b + 1) for b in beta) - lgamma(N + m + 1))


def monomial_norm(m: int, N: int, alpha) -> float:
    return float(np.exp(log_monomial_norm(m, N, alpha)))


def simplex_indices(m: int, N: int) -> list[tuple[int, ...]]:
    pts = [a for a in itertools.product(range(N + 1), repeat=m) if sum(a) <= N]
    return sorted(pts, key=graded_lex_key)


@dataclass(frozen=True)
class EnsembleSpec:
    """Gaussian measure on sections of O(N) over CP^m, optionally restricted to
    monomials whose exponents lie in ``constraint``."""

    m: int
    N: int
    constraint: LatticePolytope | None = None

    def __post_init__(self):
        if not 1 <= self.m <= MAX_DIMENSION:
            raise EnsembleError(f"dimension m={self.m} outside 1..{MAX_DIMENSION}")
        if self.N < 0:
            raise EnsembleError("degree must be non-negative")
        if self.constraint is not None and self.constraint.m != self.m:
            raise EnsembleError("constraint polytope dimension does not match m")

    @cached_property
    def basis(self) -> tuple[tuple[int, ...], ...]:
        return tuple(basis_indices(self))

    @cached_property
    def exponents(self) -> np.ndarray:
        """(dim, m) integer array of the basis exponents."""
        arr = np.array(self.basis, dtype=np.int64).reshape(len(self.basis), self.m)
        arr.setflags(write=False)
        return arr

    @cached_property
    def log_norms(self) -> np.ndarray:
        arr = np.array([log_monomial_norm(self.m, self.N, a) for a in self.basis])
        arr.setflags(write=False)
        return arr

    @property
    def basis_norms(self) -> dict[tuple[int, ...], float]:
        return dict(zip(self.basis, np.exp(self.log_norms)))

    @property
    def dim(self) -> int:
        return len(self.basis)

    def index_of(self, alpha) -> int:
        return self._positions[tuple(alpha)]

    @cached_property
    def _positions(self) -> dict:
        return {a: i for i, a in enumerate(self.basis)}


def basis_indices(spec: EnsembleSpec) -> list[tuple[int, ...]]:
    if spec.constraint is None:
        return simplex_indices(spec.m, spec.N)
    pts = [a for a in lattice_points(spec.constraint) if sum(a) <= spec.N]
    if not pts:
        raise EnsembleError("constraint polytope has no lattice points in the degree simplex")
    return sorted(pts, key=graded_lex_key)


def full_dimension(m: int, N: int) -> int:
    return comb(N + m, m)


@dataclass(frozen=True)
class SectionSample:
    spec: EnsembleSpec
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex).reshape(-1)
        if c.shape[0] != self.spec.dim:
            raise EnsembleError(f"expected {self.spec.dim} coefficients, got {c.shape[0]}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def as_dict(self) -> dict[tuple[int, ...], complex]:
        return dict(zip(self.spec.basis, self.coeffs))

    @classmethod
    def from_dict(cls, spec: EnsembleSpec, coeffs: Mapping) -> "SectionSample":
        c = np.zeros(spec.dim, dtype=complex)
        for alpha, v in coeffs.items():
            c[spec.index_of(alpha)] = v
        return cls(spec, c)

    @classmethod
    def from_chart(cls, spec: EnsembleSpec, chart_coeffs: Mapping) -> "SectionSample":
        """Build the sample whose chart polynomial has the given monomial coefficients."""
        lam = {a: complex(v) * np.exp(spec.log_norms[spec.index_of(a)]) for a, v in chart_coeffs.items()}
        return cls.from_dict(spec, lam)

    def chart_coeffs(self) -> np.ndarray:
        """Monomial coefficients lam / ||z^alpha|| aligned with the basis."""
        return self.coeffs * np.exp(-self.spec.log_norms)

    def __add__(self, other: "SectionSample") -> "SectionSample":
        if other.spec != self.spec:
            raise EnsembleError("cannot add samples from different ensembles")
        return SectionSample(self.spec, self.coeffs + other.coeffs)

    def scaled(self, factor: complex) -> "SectionSample":
        return SectionSample(self.spec, self.coeffs * factor)

    # serialization --------------------------------------------------------

    def to_json(self) -> str:
        doc = {"m": self.spec.m, "N": self.spec.N}
        if self.spec.constraint is not None:
            doc["constraint"] = json.loads(self.spec.constraint.to_literal())
        doc["coeffs"] = [[list(a), float(c.real), float(c.imag)] for a, c in zip(self.spec.basis, self.coeffs)]
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "SectionSample":
        doc = json.loads(text)
        constraint = parse_polytope(doc["constraint"]) if doc.get("constraint") is not None else None
        spec = EnsembleSpec(int(doc["m"]), int(doc["N"]), constraint)
        entries = {tuple(e[0]): complex(e[1], e[2]) for e in doc["coeffs"]}
        if set(entries) != set(spec.basis):
            raise EnsembleError("serialized coefficient keys do not match the ensemble basis")
        return cls.from_dict(spec, entries)


def sample_coefficients(n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. standard complex Gaussians (E|c|^2 = 1)."""
    x = rng.standard_normal((n, 2))
    return (x[:, 0] + 1j * x[:, 1]) / np.sqrt(2.0)


def sample_section(spec: EnsembleSpec, rng: np.random.Generator) -> SectionSample:
    return SectionSample(spec, sample_coefficients(spec.dim, rng))


# evaluation ---------------------------------------------------------------


def as_points(z, m: int) -> tuple[np.ndarray, bool]:
    """Normalize chart input to an (n, m) complex array; flag scalar-like input."""
    arr = np.asarray(z, dtype=complex)
    if m == 1 and arr.ndim <= 1:
        # m=1: a scalar is one point, a 1-D array is a batch
        return arr.reshape(-1, 1), arr.ndim == 0
    if arr.ndim == 1:
        if arr.shape[0] != m:
            raise EnsembleError(f"chart point must have {m} coordinates")
        return arr.reshape(1, m), True
    if arr.shape[-1] != m:
        raise EnsembleError(f"chart points must have {m} coordinates")
    return arr.reshape(-1, m), False


def _homogeneous(points: np.ndarray):
    """Unit-sphere representative (Z0, Z) of chart points and the scale sqrt(1+|z|^2)."""
    a = np.abs(points)
    big = np.maximum(1.0, a.max(axis=1, initial=0.0))
    # scaled by the largest coordinate so |z|^2 never overflows
    scale = big * np.sqrt((1.0 / big) ** 2 + np.sum((a / big[:, None]) ** 2, axis=1))
    return 1.0 / scale, points / scale[:, None], scale


def _monomials(exponents: np.ndarray, N: int, Z0: np.ndarray, Z: np.ndarray, drop: int | None = None):
    """Matrix M[i, a] = Z0_i^(N - |alpha_a|) * prod_j Z_ij^alpha_aj, or with alpha - e_drop in the Z part."""
    e = exponents.copy()
    if drop is not None:
        e[:, drop] -= 1
    # the derivative monomial has degree |alpha| - 1, homogenized at degree N - 1
    deg0 = N - exponents.sum(axis=1)
    out = np.power(Z0[:, None], deg0[None, :]).astype(complex)
    for j in range(Z.shape[1]):
        ej = np.maximum(e[:, j], 0)
        out *= np.power(Z[:, j][:, None], ej[None, :])
    if drop is not None:
        out[:, e[:, drop] < 0] = 0.0
    return out


def evaluate_section(sample: SectionSample, z):
    """Chart value s(z) = sum lam_a z^a / ||z^a||.

    Evaluated through the unit-sphere representative and rescaled by
    (1+|z|^2)^(N/2) at the end, so intermediate powers never overflow.
    """
    spec = sample.spec
    pts, single = as_points(z, spec.m)
    Z0, Z, scale = _homogeneous(pts)
    c = sample.chart_coeffs()
    with np.errstate(over="ignore"):
        vals = (_monomials(spec.exponents, spec.N, Z0, Z) @ c) * scale**spec.N
    return complex(vals[0]) if single else vals


def hermitian_magnitude(sample: SectionSample, z):
    """Pointwise |s(z)|_h = |s(z)| / (1+|z|^2)^(N/2)."""
    spec = sample.spec
    pts, single = as_points(z, spec.m)
    Z0, Z, _ = _homogeneous(pts)
    vals = np.abs(_monomials(spec.exponents, spec.N, Z0, Z) @ sample.chart_coeffs())
    return float(vals[0]) if single else vals


def evaluate_gradient(sample: SectionSample, z):
    """Chart partial derivatives (ds/dz_1, ..., ds/dz_m); shape (m,) or (n, m)."""
    spec = sample.spec
    pts, single = as_points(z, spec.m)
    Z0, Z, scale = _homogeneous(pts)
    c = sample.chart_coeffs()
    grads = np.empty((pts.shape[0], spec.m), dtype=complex)
    with np.errstate(over="ignore"):
        for j in range(spec.m):
            w = c * spec.exponents[:, j]
            grads[:, j] = (_monomials(spec.exponents, spec.N, Z0, Z, drop=j) @ w) * scale ** (spec.N - 1)
    if single:
        return grads[0, 0] if spec.m == 1 and np.ndim(z) == 0 else grads[0]
    return grads


def sample_many(spec: EnsembleSpec, master_seed: int, trials: Iterable[int]) -> np.ndarray:
    """Stack of coefficient vectors, one per trial index, using per-trial streams."""
    return np.array([sample_coefficients(spec.dim, trial_rng(master_seed, t)) for t in trials])
