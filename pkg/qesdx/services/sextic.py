"""The radial sextic oscillator and its analytic sector.

``V0(x) = a**2 x**6 - 2a(2M + 2s + 1) x**2 + 4(s - 1/4)(s - 3/4) / x**2``

Substituting ``exp(-a x**4/4) x**(2s - 1/2) sum_n c_n t**n`` into the
Schrodinger equation gives the three-term closure

``4(n+1)(n+2s) c[n+1] + E c[n] + 4a(M-n+1) c[n-1] = 0``

so the analytic energies are the eigenvalues of an (M+1)x(M+1)
tridiagonal matrix with zero diagonal.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh_tridiagonal, eigvals, null_space

from qesdx.config import settings
from qesdx.exceptions import ConsistencyError, DomainError, NumericalError
from qesdx.services import oracle
from qesdx.services.qpoly import (
    ROUNDING_FLOOR,
    PolyC,
    QuasiWave,
    RationalPotential,
    RationalT,
    poly_roots,
    roots_to_poly,
)

__all__ = [
    "SexticModel",
    "SpectralEntry",
    "Spectrum",
    "RationalPotential",
    "build_model",
    "qes_spectrum",
    "covariant_model",
    "complex_solutions",
    "bethe_roots",
    "verify_bethe_identity",
    "bethe_convention_report",
    "node_count",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SexticModel:
    """Sextic oscillator with parameters (a, s, M).

    Attributes:
        a: Stiffness (positive)
        s: Origin parameter; may be non-positive for covariant images
        M: Degree of the sector polynomials
    """

    a: float
    s: float
    M: int

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError(f"a must be positive, got {self.a}")
        if self.M < 0 or int(self.M) != self.M:
            raise DomainError(f"M must be a nonnegative integer: {self.M}")

    @property
    def sigma(self) -> float:
        """Origin exponent 2s - 1/2 of the analytic states."""
        return 2.0 * self.s - 0.5

    @property
    def centrifugal(self) -> float:
        return 4.0 * (self.s - 0.25) * (self.s - 0.75)

    @property
    def physical(self) -> bool:
        return self.s > 0

    @cached_property
    def V0(self) -> RationalPotential:
        a, s, M = self.a, self.s, self.M
        linear = -2.0 * a * (2 * M + 2 * s + 1)
        num = PolyC([self.centrifugal, 0.0, linear, 0.0, a * a])
        return RationalPotential(RationalT(num, [0j]))

    def closure_matrix(self) -> np.ndarray:
        """Matrix A with E c = A c for the sector coefficients c."""
        a, s, M = self.a, self.s, self.M
        n = np.arange(M)
        A = np.zeros((M + 1, M + 1))
        A[n, n + 1] = -4.0 * (n + 1) * (n + 2 * s)
        A[n + 1, n] = -4.0 * a * (M - n)
        return A


@dataclass(frozen=True)
class SpectralEntry:
    """An eigenpair of a Hamiltonian in the closed family.

    Attributes:
        energy: Eigenvalue (complex in general)
        wave: Eigenfunction
        index: Position in the energy-sorted list
        physical: Real energy and normalizable wave
        poly: Sector polynomial for analytic-sector states
        residual: Normalized exact residual
        label: Display name
    """

    energy: complex
    wave: QuasiWave
    index: int
    physical: bool
    poly: Optional[PolyC] = None
    residual: float = 0.0
    label: str = ""


class Spectrum(List[SpectralEntry]):
    """List of spectral entries with attached diagnostics."""

    def __init__(self, entries=(), diagnostics: Optional[Dict] = None):
        super().__init__(entries)
        self.diagnostics: Dict[str, Any] = diagnostics or {}


def build_model(a: float, s: float, M: int) -> SexticModel:
    model = SexticModel(float(a), float(s), int(M))
    logger.info(f"built sextic model a={a}, s={s}, M={M}")
    return model


def _energy_key(E: complex) -> Tuple[float, float]:
    return (round(E.real, 9), E.imag)


def _closure_eigenvalues(A: np.ndarray) -> np.ndarray:
    upper, lower = np.diag(A, 1), np.diag(A, -1)
    products = upper * lower
    if products.size and np.all(products > 0):
        return eigh_tridiagonal(
            np.zeros(A.shape[0]), np.sqrt(products), eigvals_only=True
        ).astype(complex)
    if A.shape[0] == 1:
        return np.array([complex(A[0, 0])])
    return eigvals(A)


def _cluster(
    values: np.ndarray, tol: float
) -> List[Tuple[complex, int]]:
    """Group eigenvalues closer than tol; returns (mean, multiplicity)."""
    groups: List[List[complex]] = []
    for v in sorted(values.tolist(), key=_energy_key):
        for g in groups:
            if abs(g[0] - v) <= tol:
                g.append(v)
                break
        else:
            groups.append([v])
    return [(complex(np.mean(g)), len(g)) for g in groups]


def _echelon_monic(basis: np.ndarray, tol: float) -> List[np.ndarray]:
    """Reduce null-space columns so that each vector has a distinct top
    index whose entry is 1."""
    vectors = [basis[:, j].astype(complex) for j in range(basis.shape[1])]
    out = []
    for row in range(basis.shape[0] - 1, -1, -1):
        if not vectors:
            break
        mags = [abs(v[row]) for v in vectors]
        j = int(np.argmax(mags))
        if mags[j] <= tol * max(np.max(np.abs(v)) for v in vectors):
            continue
        pivot = vectors.pop(j)
        pivot = pivot / pivot[row]
        pivot[row + 1:] = 0.0
        vectors = [v - v[row] * pivot for v in vectors]
        out.append(pivot)
    return out


def _clean_energy(E: complex) -> complex:
    if abs(E.imag) < settings.REALNESS_TOL * (1.0 + abs(E)):
        return complex(E.real, 0.0)
    if abs(E.real) < settings.REALNESS_TOL * (1.0 + abs(E)):
        return complex(0.0, E.imag)
    return E


def _make_entry(
    m: SexticModel, E: complex, coeffs: np.ndarray, index: int
) -> SpectralEntry:
    if E.imag == 0.0:
        coeffs = coeffs.real
    # t-scale of the quartic Gaussian exp(-a t**2 / 4)
    radius = 2.0 / np.sqrt(m.a)
    poly = PolyC(coeffs).cleaned(ROUNDING_FLOOR, radius)
    wave = QuasiWave(1.0, m.a, 1, m.sigma, RationalT(poly))
    report = oracle.residual(m.V0, E, wave)
    if not report.passed:
        raise ConsistencyError(
            f"sector state at E={E} fails its residual check "
            f"({report.max_norm_coeff:.3e})"
        )
    real = abs(E.imag) < settings.REALNESS_TOL * (1.0 + abs(E))
    physical = real and oracle.normalizable(wave)
    return SpectralEntry(
        energy=E,
        wave=wave,
        index=index,
        physical=physical,
        poly=poly,
        residual=report.max_norm_coeff,
        label=f"psi{index}",
    )


def qes_spectrum(m: SexticModel) -> Spectrum:
    """All eigenpairs of the closure system, sorted by (Re E, Im E).

    Each polynomial is monic in its top coefficient. A defective
    eigenvalue contributes only its genuine eigenvectors; the deficiency is
    recorded in ``diagnostics["jordan_deficiency"]``.

    Raises:
        NumericalError: If an eigenvalue has an empty null space.
        ConsistencyError: If a state fails its residual check.
    """
    A = m.closure_matrix()
    norm = float(np.max(np.abs(A), initial=0.0))
    raw = _closure_eigenvalues(A)
    diagnostics: Dict[str, Any] = {"jordan_deficiency": {}}
    trace = complex(np.sum(raw))
    if abs(trace) > 1e-8 * (1.0 + norm) * A.shape[0]:
        logger.warning(f"closure trace check drifted: sum(E) = {trace}")
    diagnostics["trace"] = trace
    found: List[Tuple[complex, np.ndarray]] = []
    for E, mult in _cluster(raw, settings.EIGEN_CLUSTER_TOL * (1.0 + norm)):
        E = _clean_energy(E)
        shifted = A.astype(complex) - E * np.eye(A.shape[0])
        basis = null_space(shifted, rcond=settings.RANK_TOL)
        logger.debug(
            f"E={E}: multiplicity {mult}, null space {basis.shape[1]}"
        )
        if basis.shape[1] == 0:
            raise NumericalError(
                f"empty null space at eigenvalue {E}",
                {"energy": E, "multiplicity": mult, "matrix": A.tolist()},
            )
        if basis.shape[1] < mult:
            logger.warning(
                f"defective eigenvalue E={E}: multiplicity {mult}, "
                f"{basis.shape[1]} eigenvector(s)"
            )
            diagnostics["jordan_deficiency"][E] = mult - basis.shape[1]
        for vec in _echelon_monic(basis, settings.RANK_TOL):
            found.append((E, vec))
    found.sort(key=lambda item: _energy_key(item[0]))
    entries = [
        _make_entry(m, E, vec, index) for index, (E, vec) in enumerate(found)
    ]
    logger.info(f"analytic sector of {m}: {len(entries)} states")
    return Spectrum(entries, diagnostics)


def covariant_model(m: SexticModel) -> SexticModel:
    """The image under s -> 1 - s, M -> M + 2s - 1 (same potential).

    Raises:
        DomainError: If M + 2s - 1 is not a nonnegative integer.
    """
    target = m.M + 2.0 * m.s - 1.0
    M_new = int(round(target))
    if abs(target - M_new) > 1e-9:
        raise DomainError(f"M + 2s - 1 = {target} is not an integer")
    if M_new < 0:
        raise DomainError(f"covariant sector size {M_new} is negative")
    return SexticModel(m.a, 1.0 - m.s, M_new)


def complex_solutions(
    m: SexticModel,
) -> List[Tuple[SpectralEntry, SpectralEntry]]:
    """Complex-energy solutions of V0 obtained through the covariant model,
    grouped into conjugate pairs (lower imaginary part first)."""
    cov = covariant_model(m)
    complex_entries = []
    for entry in qes_spectrum(cov):
        if entry.energy.imag == 0:
            continue
        report = oracle.residual(m.V0, entry.energy, entry.wave)
        if not report.passed:
            raise ConsistencyError(
                f"covariant state at E={entry.energy} does not solve V0"
            )
        complex_entries.append(entry)
    pairs = []
    used = set()
    for i, first in enumerate(complex_entries):
        if i in used or first.energy.imag > 0:
            continue
        for j, second in enumerate(complex_entries):
            if j in used or j == i:
                continue
            gap = abs(second.energy - np.conj(first.energy))
            if gap <= settings.EIGEN_CLUSTER_TOL * (1.0 + abs(first.energy)):
                used.update((i, j))
                n = len(pairs)
                pairs.append(
                    (
                        _relabel(first, 2 * n, f"cpx{n}-"),
                        _relabel(second, 2 * n + 1, f"cpx{n}+"),
                    )
                )
                break
    logger.info(f"{len(pairs)} conjugate pair(s) for {m}")
    return pairs


def _relabel(entry: SpectralEntry, index: int, label: str) -> SpectralEntry:
    return SpectralEntry(
        energy=entry.energy,
        wave=entry.wave,
        index=index,
        physical=False,
        poly=entry.poly,
        residual=entry.residual,
        label=label,
    )


def bethe_roots(e: SpectralEntry) -> List[complex]:
    """Roots of the sector polynomial (empty for degree 0)."""
    poly = e.poly if e.poly is not None else e.wave.num
    if poly.degree < 1:
        return []
    roots = poly_roots(poly)
    if not roots_to_poly(roots).allclose(poly.monic(), 1e-8):
        logger.warning(f"root reconstruction drifted for {e.label}")
    return roots


def _sample_points(roots: Sequence[complex], count: int = 10) -> np.ndarray:
    x = 0.37 + 0.23 * np.arange(count)
    for i in range(count):
        while any(abs(x[i] ** 2 - r) < 1e-3 for r in roots):
            x[i] += 0.0137
    return x


def verify_bethe_identity(
    m: SexticModel,
    E: complex,
    roots: Sequence[complex],
    convention: str = "ordered",
) -> float:
    """Largest magnitude of the Bethe-root identity at 10 sample points.

    ``sum_k (4a t**2 - 8s)/(t - r_k) - sum_{k != l} 4t/((t - r_k)(t - r_l))
    - 4aMt - E``; ``convention`` selects whether the double sum runs over
    ordered pairs or unordered pairs.
    """
    if len(roots) != m.M:
        raise DomainError(f"expected {m.M} roots, got {len(roots)}")
    if convention not in ("ordered", "unordered"):
        raise DomainError(f"unknown pair convention {convention!r}")
    a, s, M = m.a, m.s, m.M
    worst = 0.0
    for x in _sample_points(roots):
        t = x * x
        single = sum((4 * a * t * t - 8 * s) / (t - r) for r in roots)
        double = 0.0
        for k, rk in enumerate(roots):
            for l, rl in enumerate(roots):
                if k == l or (convention == "unordered" and l < k):
                    continue
                double += 4 * t / ((t - rk) * (t - rl))
        value = single - double - 4 * a * M * t - E
        worst = max(worst, abs(value))
    return worst


@dataclass(frozen=True)
class BetheConventionReport:
    ordered: float
    unordered: float
    vanishing: List[str] = field(default_factory=list)


def bethe_convention_report(
    m: SexticModel, entry: SpectralEntry, tol: float = 1e-7
) -> BetheConventionReport:
    """Evaluate the Bethe identity under both pair conventions."""
    roots = bethe_roots(entry)
    ordered = verify_bethe_identity(m, entry.energy, roots, "ordered")
    unordered = verify_bethe_identity(m, entry.energy, roots, "unordered")
    vanishing = [
        name
        for name, value in (("ordered", ordered), ("unordered", unordered))
        if value < tol
    ]
    logger.info(
        f"Bethe identity for {entry.label}: ordered={ordered:.3e}, "
        f"unordered={unordered:.3e}"
    )
    return BetheConventionReport(ordered, unordered, vanishing)


def node_count(entry: SpectralEntry) -> int:
    """Number of sector-polynomial roots on t > 0 (nodes on x > 0)."""
    return sum(
        1
        for r in bethe_roots(entry)
        if r.real > settings.POLE_TOL
        and abs(r.imag) < settings.POLE_TOL * (1.0 + abs(r))
    )
