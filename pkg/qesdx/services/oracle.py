"""Independent verification of constructed potentials and states.

Exact checks run in the closed quasi-polynomial algebra and compare
numerators over a common denominator. The numerical check is a Numerov
shooting solver that counts nodes to bracket every level in an energy
window.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.integrate import quad

from qesdx.config import settings
from qesdx.exceptions import DomainError, PoleError
from qesdx.models.jobs import NumerovConfig
from qesdx.services.qpoly import (
    PolyC,
    QuasiWave,
    RationalPotential,
    RationalT,
    Superpotential,
    common_numerators,
    poly_roots,
    qw_derivative,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResidualReport:
    """Outcome of an exact identity check.

    Attributes:
        max_norm_coeff: Largest numerator coefficient of the difference,
            normalized by the largest coefficient of the reference term
        tolerance: Threshold used for the verdict
    """

    max_norm_coeff: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_norm_coeff < self.tolerance


@dataclass(frozen=True)
class NumerovLevel:
    nodes: int
    energy: float


@dataclass(frozen=True)
class Normalizability:
    """Normalizability diagnostics of a closed-family function.

    Attributes:
        normalizable: Square integrable on (0, inf)
        weakly: Integrable but singular at the origin
            (-1/2 < sigma <= 1/2)
        poles: Positive real poles in t
        quadrature: Integral of |f|**2 from x_min to where the quartic
            Gaussian has decayed, when regular
        consistent: Whether the quadrature cross-check agrees with the
            analytic verdict
    """

    normalizable: bool
    weakly: bool = False
    poles: List[float] = field(default_factory=list)
    quadrature: Optional[float] = None
    consistent: bool = True


@dataclass(frozen=True)
class DeletionReport:
    """Levels removed and added between two numerical spectra."""

    spectrum_in: List[float]
    spectrum_out: List[float]
    deleted: List[float]
    added: List[float]


def _aligned_numerators(waves: Sequence[QuasiWave]) -> List[np.ndarray]:
    """Raw numerators of ``waves`` written over a common x-power and a
    common denominator.

    All waves must share a and k, and their sigmas must differ by even
    integers.
    """
    live = [w for w in waves if not w.is_zero]
    if not live:
        return [np.zeros(1) for _ in waves]
    base = min(w.sigma for w in live)
    ratios = []
    for w in waves:
        if w.is_zero:
            ratios.append(RationalT())
            continue
        if w.k != live[0].k:
            raise DomainError("cannot compare waves with different k")
        half = (w.sigma - base) / 2.0
        steps = round(half)
        if abs(half - steps) > 1e-9:
            raise DomainError("sigmas differ by a non-even amount")
        ratios.append(w.ratio.times_t(steps) * w.scale)
    _, raws = common_numerators(ratios)
    return raws


def _normalized_gap(diff: np.ndarray, ref: np.ndarray) -> float:
    scale = float(np.max(np.abs(ref), initial=0.0))
    top = float(np.max(np.abs(diff), initial=0.0))
    if scale == 0.0:
        return top
    return top / scale


def hamiltonian(V: RationalPotential, f: QuasiWave) -> QuasiWave:
    """``-f'' + V f`` in closed form."""
    second = qw_derivative(qw_derivative(f))
    return f.times_rational(V.rat) - second


def residual(
    V: RationalPotential,
    E: complex,
    f: QuasiWave,
    tol: Optional[float] = None,
) -> ResidualReport:
    """Exact residual of ``(-d^2/dx^2 + V - E) f``.

    The three terms are written over a common denominator and the largest
    coefficient of the combined numerator is normalized by the largest
    coefficient of the ``V f`` numerator.
    """
    tol = settings.RESIDUAL_TOL if tol is None else tol
    if f.is_zero:
        raise DomainError("residual of the zero function")
    second = qw_derivative(qw_derivative(f))
    vf = f.times_rational(V.rat)
    n_second, n_vf, n_f = _aligned_numerators([second, vf, f])
    diff = n_vf - n_second - complex(E) * n_f
    gap = _normalized_gap(diff, n_vf if np.any(n_vf) else n_second)
    report = ResidualReport(gap, tol)
    if not report.passed:
        logger.debug(f"residual {gap:.3e} at E={E}")
    return report


def sampled_residual(
    V: RationalPotential, E: complex, f: QuasiWave, x: np.ndarray
) -> float:
    """Pointwise ``|-f'' + V f - E f| / max(1, |V f|)``, maximized over x."""
    x = np.asarray(x, dtype=complex)
    second = qw_derivative(qw_derivative(f)).evaluate(x)
    vf = V.evaluate(x) * f.evaluate(x)
    res = -second + vf - complex(E) * f.evaluate(x)
    return float(np.max(np.abs(res) / np.maximum(1.0, np.abs(vf))))


def intertwine_check(
    op,
    V_in: RationalPotential,
    V_out: RationalPotential,
    f: QuasiWave,
    tol: Optional[float] = None,
) -> ResidualReport:
    """Check ``L(H_in f) = H_out(L f)`` exactly.

    ``op`` is any transformation operator exposing ``apply(f)``.
    """
    tol = settings.RESIDUAL_TOL if tol is None else tol
    lhs = op.apply(hamiltonian(V_in, f))
    rhs = hamiltonian(V_out, op.apply(f))
    if lhs.is_zero and rhs.is_zero:
        return ResidualReport(0.0, tol)
    n_lhs, n_rhs = _aligned_numerators([lhs, rhs])
    ref = n_lhs if np.any(n_lhs) else n_rhs
    return ResidualReport(_normalized_gap(n_lhs - n_rhs, ref), tol)


def rational_gap(lhs: RationalT, rhs: RationalT) -> float:
    """Normalized coefficient gap between two rational functions."""
    n_lhs, n_rhs = common_numerators([lhs, rhs])[1]
    ref = n_lhs if np.any(n_lhs) else n_rhs
    return _normalized_gap(n_lhs - n_rhs, ref)


def factorization_check(
    op,
    V0: RationalPotential,
    V1: RationalPotential,
    tol: Optional[float] = None,
) -> ResidualReport:
    """Check ``V0 = W**2 - W' + alpha`` and ``V1 = W**2 + W' + alpha``.

    ``op`` exposes the superpotential ``W`` and the constant ``alpha``.
    """
    tol = settings.RESIDUAL_TOL if tol is None else tol
    square, prime = op.W.square(), op.W.prime()
    gap0 = rational_gap(V0.rat, square - prime + op.alpha)
    gap1 = rational_gap(V1.rat, square + prime + op.alpha)
    return ResidualReport(max(gap0, gap1), tol)


def factorization_on_grid(
    W: Superpotential,
    alpha: complex,
    V0: RationalPotential,
    V1: RationalPotential,
    x: np.ndarray,
) -> float:
    """Largest ``|V -/+ (W**2 -/+ W' + alpha)| / (1 + |V|)`` on the grid."""
    x = np.asarray(x, dtype=complex)
    w = W.evaluate(x)
    wp = W.prime().evaluate(x * x)
    v0, v1 = V0.evaluate(x), V1.evaluate(x)
    err0 = np.abs(v0 - (w * w - wp + alpha)) / (1.0 + np.abs(v0))
    err1 = np.abs(v1 - (w * w + wp + alpha)) / (1.0 + np.abs(v1))
    return float(max(np.max(err0), np.max(err1)))


PoleSource = Union[RationalT, RationalPotential, QuasiWave, PolyC]


def pole_scan(r: PoleSource, tol: Optional[float] = None) -> List[float]:
    """Distinct positive real poles ``t* > tol`` of a rational object.

    A polynomial argument is read as a denominator.
    """
    tol = settings.POLE_TOL if tol is None else tol
    if isinstance(r, RationalPotential):
        r = r.rat
    if isinstance(r, QuasiWave):
        r = r.ratio
    if isinstance(r, PolyC):
        roots = poly_roots(r) if r.degree >= 1 else []
    else:
        roots = list(r.den_roots)
    poles: List[float] = []
    for z in roots:
        if z.real > tol and abs(z.imag) < tol * (1.0 + abs(z)):
            if not any(abs(z.real - p) <= tol * (1.0 + p) for p in poles):
                poles.append(z.real)
    return sorted(poles)


def _is_real_poly(p: PolyC, tol: float) -> bool:
    c = p.coeffs
    return bool(np.all(np.abs(c.imag) < tol * (1.0 + np.abs(c))))


def realness_check(
    r: Union[RationalPotential, RationalT], tol: Optional[float] = None
) -> bool:
    """True iff every canonical coefficient is real within tolerance."""
    tol = settings.REALNESS_TOL if tol is None else tol
    rat = r.rat if isinstance(r, RationalPotential) else r
    return _is_real_poly(rat.num, tol) and _is_real_poly(rat.den, tol)


def is_purely_imaginary(f: QuasiWave, tol: Optional[float] = None) -> bool:
    """True iff f is i times a real function on x > 0."""
    tol = settings.REALNESS_TOL if tol is None else tol
    if f.is_zero:
        return True
    if abs(f.scale.real) > tol * abs(f.scale):
        return False
    return realness_check(f.ratio, tol)


def _norm_segment(f: QuasiWave, lo: float, hi: float) -> float:
    value, _ = quad(
        lambda x: float(np.abs(f.evaluate(x)) ** 2), lo, hi, limit=200
    )
    return value


def _shrinks(inner: float, outer: float) -> Optional[bool]:
    """Whether successive decade integrals shrink; None when the ratio
    is too close to 1 to tell."""
    if not (math.isfinite(inner) and math.isfinite(outer)):
        return False
    if outer == 0.0:
        return True
    ratio = inner / outer
    if abs(ratio - 1.0) <= 1e-6:
        return None
    return ratio < 1.0


def normalizability(
    f: QuasiWave, x_min: Optional[float] = None
) -> Normalizability:
    """Square integrability of f on (0, inf).

    The origin side needs sigma > -1/2; the far side is integrable for
    k >= 1, otherwise the overall power of x must fall below -1/2.

    The verdict is cross-checked by quadrature: ``|f|**2`` integrated over
    successive decades toward the origin (and toward infinity when k = 0)
    must shrink exactly when the analytic verdict says it converges.
    Disagreement is logged and reported through ``consistent``.
    """
    if f.is_zero:
        return Normalizability(False)
    poles = pole_scan(f.ratio)
    if poles:
        return Normalizability(False, poles=poles)
    origin_ok = f.sigma > -0.5
    if f.k >= 1:
        tail_ok = True
    else:
        power = f.sigma + 2 * (f.num.degree - f.den.degree)
        tail_ok = power < -0.5
    ok = origin_ok and tail_ok
    weakly = ok and f.sigma <= 0.5

    x_min = settings.NUMEROV_X_MIN if x_min is None else x_min
    x_far = (
        4.0 * settings.NUMEROV_DECAY_EXPONENT / (max(f.k, 1) * f.a)
    ) ** 0.25
    value = _norm_segment(f, x_min, x_far)
    checks = [
        (
            origin_ok,
            _shrinks(
                _norm_segment(f, x_min / 100.0, x_min / 10.0),
                _norm_segment(f, x_min / 10.0, x_min),
            ),
        )
    ]
    if f.k == 0:
        checks.append(
            (
                tail_ok,
                _shrinks(
                    _norm_segment(f, 10.0 * x_far, 100.0 * x_far),
                    _norm_segment(f, x_far, 10.0 * x_far),
                ),
            )
        )
    consistent = math.isfinite(value) and all(
        seen is None or seen == expected for expected, seen in checks
    )
    if not consistent:
        logger.warning(
            f"normalizability verdict {ok} disagrees with quadrature "
            f"(integral {value:.6g}) for {f!r}"
        )
    return Normalizability(
        ok, weakly=weakly, quadrature=value, consistent=consistent
    )


def normalizable(f: QuasiWave) -> bool:
    return normalizability(f).normalizable


class _NumerovGrid:
    """Outward Numerov integration of ``y'' = (V - E) y`` on a fixed box.

    The node count of the outward solution at energy E equals the number
    of box levels below E, which drives bisection.

    There is no inward integration and no matching at a turning point:
    the wall at ``x_max`` stands in for the decaying boundary condition,
    so the levels found are those of the box with ``y(x_max) = 0``. They
    differ from the true levels by roughly the Gaussian factor
    ``exp(-a x_max**4 / 4)`` of the wall, far below the step error.
    """

    def __init__(self, V: RationalPotential, cfg: NumerovConfig):
        if not realness_check(V):
            raise DomainError("numerical spectrum needs a real potential")
        poles = pole_scan(V)
        inside = [
            t for t in poles if cfg.x_min**2 <= t <= cfg.x_max**2
        ]
        if inside:
            where = ", ".join(f"x={math.sqrt(t):.6g}" for t in inside)
            raise PoleError(f"potential has poles at {where}", inside[0])
        if V.rat.pole_order_at_zero() > 1:
            raise DomainError("potential is too singular at the origin")
        c = V.centrifugal.real
        if c < -0.25:
            raise DomainError(f"centrifugal coefficient {c} below -1/4")
        self.sigma = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * c))
        n = int(round((cfg.x_max - cfg.x_min) / cfg.step)) + 1
        self.x = cfg.x_min + cfg.step * np.arange(n)
        self.v = V.evaluate(self.x).real
        self.h12 = cfg.step * cfg.step / 12.0
        self.y0 = self.x[0] ** self.sigma
        self.y1 = self.x[1] ** self.sigma

    def nodes(self, E: float) -> int:
        f = (1.0 + self.h12 * (E - self.v)).tolist()
        prev, cur = self.y0, self.y1
        count = 0
        for i in range(1, len(f) - 1):
            nxt = ((12.0 - 10.0 * f[i]) * cur - f[i - 1] * prev) / f[i + 1]
            if (nxt < 0.0) != (cur < 0.0):
                count += 1
            if abs(nxt) > 1e100:
                nxt *= 1e-100
                cur *= 1e-100
            prev, cur = cur, nxt
        return count


def numerov_levels(
    V: RationalPotential, cfg: NumerovConfig
) -> List[NumerovLevel]:
    """Bound levels of V inside ``[cfg.e_lo, cfg.e_hi]``.

    Raises:
        PoleError: If V has a pole inside the integration box.
        DomainError: If V is complex or too singular at the origin.
    """
    grid = _NumerovGrid(V, cfg)
    n_lo, n_hi = grid.nodes(cfg.e_lo), grid.nodes(cfg.e_hi)
    levels: List[NumerovLevel] = []
    lo = cfg.e_lo
    for n in range(n_lo, n_hi):
        hi = cfg.e_hi
        while hi - lo > cfg.bisection_tol:
            mid = 0.5 * (lo + hi)
            if grid.nodes(mid) > n:
                hi = mid
            else:
                lo = mid
        energy = 0.5 * (lo + hi)
        logger.debug(f"level {n} at E={energy:.10f}")
        levels.append(NumerovLevel(nodes=n, energy=energy))
    logger.info(
        f"numerov: {len(levels)} levels in [{cfg.e_lo}, {cfg.e_hi}]"
    )
    return levels


def numerov_spectrum(
    V: RationalPotential, cfg: NumerovConfig
) -> List[float]:
    return [level.energy for level in numerov_levels(V, cfg)]


def isospectral_deletion(
    V_in: RationalPotential,
    V_out: RationalPotential,
    cfg: NumerovConfig,
    tol: Optional[float] = None,
) -> DeletionReport:
    """Compare numerical spectra of two potentials on the same window."""
    tol = settings.NUMEROV_ACCEPT_TOL if tol is None else tol
    spec_in = numerov_spectrum(V_in, cfg)
    spec_out = numerov_spectrum(V_out, cfg)
    unmatched_out = list(spec_out)
    deleted = []
    for e in spec_in:
        hit = [i for i, o in enumerate(unmatched_out) if abs(o - e) <= tol]
        if hit:
            unmatched_out.pop(hit[0])
        else:
            deleted.append(e)
    return DeletionReport(spec_in, spec_out, deleted, unmatched_out)
