"""Closed-family algebra in the variable t = x**2.

The module provides three value types and the operations of the
quasi-polynomial family used by the Darboux engine:

* ``PolyC`` - dense complex polynomial in t.
* ``RationalT`` - rational function in t; the denominator is stored as its
  monic root multiset, which keeps products and derivatives factored.
* ``QuasiWave`` - ``scale * exp(-k*a*x**4/4) * x**sigma * num(t)/den(t)``.

``Superpotential`` (``W(x) = x*g(t)``) and ``RationalPotential``
(``V(x) = R(x**2)``) are thin wrappers over ``RationalT``.

All values are immutable; every operation returns a new canonical value.
Sums, products and divisions cut cancellation dust against the magnitude
of the terms that produced each coefficient; ``PolyC.cleaned`` applies a
domain-weighted cut to final values.
"""

import logging
import math
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from qesdx.config import settings
from qesdx.exceptions import DomainError, PoleError

logger = logging.getLogger(__name__)

Scalar = Union[int, float, complex]

DTYPE = np.dtype(settings.COMPLEX_DTYPE)


def _frozen(c: np.ndarray) -> np.ndarray:
    c.setflags(write=False)
    return c


Ref = Union[float, np.ndarray]

# Remainders below this multiple of the evaluation scale are rounding noise.
ROUNDING_FLOOR = 1e4 * float(np.finfo(float).eps)


def _canonical(
    c: np.ndarray, tol: Optional[float] = None, ref: Optional[Ref] = None
) -> np.ndarray:
    """Zero out cancellation dust and trim high-order zeros.

    Without ``ref`` only exact zeros are trimmed. ``ref`` is either one
    magnitude for every coefficient or an array holding, per coefficient,
    the magnitude of the terms that produced it; a real or imaginary
    component is dust when it is below ``tol * ref``.
    """
    if c.size == 0:
        return _frozen(np.zeros(0, dtype=DTYPE))
    if not np.all(np.isfinite(c)):
        raise DomainError(f"non-finite polynomial coefficients: {c}")
    if ref is not None:
        tol = settings.ZERO_TOL if tol is None else tol
        cut = tol * np.broadcast_to(np.asarray(ref, dtype=float), c.shape)
        re = np.where(np.abs(c.real) < cut, 0.0, c.real)
        im = np.where(np.abs(c.imag) < cut, 0.0, c.imag)
        c = (re + 1j * im).astype(DTYPE)
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return _frozen(np.zeros(0, dtype=DTYPE))
    return _frozen(c[: nz[-1] + 1].copy())


class PolyC:
    """Dense polynomial in t with complex coefficients.

    ``coeffs[n]`` holds the coefficient of ``t**n``. The zero polynomial is
    the empty coefficient array.
    """

    __slots__ = ("_c",)

    def __init__(
        self,
        coeffs: Iterable[Scalar] = (),
        *,
        tol: Optional[float] = None,
        ref: Optional[Ref] = None,
    ):
        if isinstance(coeffs, np.ndarray):
            raw = coeffs.astype(DTYPE, copy=True).ravel()
        else:
            raw = np.array(list(coeffs), dtype=DTYPE)
        self._c = _canonical(raw, tol, ref)

    @classmethod
    def constant(cls, value: Scalar) -> "PolyC":
        return cls([value])

    @classmethod
    def monomial(cls, n: int, value: Scalar = 1.0) -> "PolyC":
        c = np.zeros(n + 1, dtype=DTYPE)
        c[n] = value
        return cls(c)

    @property
    def coeffs(self) -> np.ndarray:
        return self._c

    @property
    def degree(self) -> int:
        """Degree of the polynomial, -1 for the zero polynomial."""
        return self._c.size - 1

    @property
    def is_zero(self) -> bool:
        return self._c.size == 0

    @property
    def lead(self) -> complex:
        return complex(self._c[-1]) if self._c.size else 0j

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self._c))) if self._c.size else 0.0

    def trailing_zeros(self) -> int:
        """Multiplicity of the root at t = 0."""
        nz = np.flatnonzero(self._c)
        return int(nz[0]) if nz.size else 0

    def _binary(self, other: "PolyC", sign: float) -> "PolyC":
        n = max(self._c.size, other._c.size)
        out = np.zeros(n, dtype=DTYPE)
        ref = np.zeros(n)
        out[: self._c.size] += self._c
        out[: other._c.size] += sign * other._c
        ref[: self._c.size] += np.abs(self._c)
        ref[: other._c.size] += np.abs(other._c)
        return PolyC(out, ref=ref)

    def __add__(self, other: Union["PolyC", Scalar]) -> "PolyC":
        if not isinstance(other, PolyC):
            other = PolyC.constant(other)
        return self._binary(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other: Union["PolyC", Scalar]) -> "PolyC":
        if not isinstance(other, PolyC):
            other = PolyC.constant(other)
        return self._binary(other, -1.0)

    def __rsub__(self, other: Scalar) -> "PolyC":
        return PolyC.constant(other) - self

    def __neg__(self) -> "PolyC":
        return PolyC(-self._c)

    def __mul__(self, other: Union["PolyC", Scalar]) -> "PolyC":
        if isinstance(other, PolyC):
            if self.is_zero or other.is_zero:
                return PolyC()
            return PolyC(
                np.convolve(self._c, other._c),
                ref=np.convolve(np.abs(self._c), np.abs(other._c)),
            )
        return PolyC(self._c * complex(other))

    __rmul__ = __mul__

    def __truediv__(self, value: Scalar) -> "PolyC":
        return PolyC(self._c / complex(value))

    def __call__(self, t):
        if self.is_zero:
            return np.zeros_like(np.asarray(t, dtype=DTYPE))[()]
        return np.polyval(self._c[::-1], t)

    def deriv(self) -> "PolyC":
        """d/dt of the polynomial."""
        if self._c.size <= 1:
            return PolyC()
        return PolyC(self._c[1:] * np.arange(1, self._c.size))

    def shift(self, m: int) -> "PolyC":
        """Multiply by ``t**m`` (m >= 0) or divide by ``t**(-m)``.

        Division requires the low-order coefficients to be exact zeros.
        """
        if m == 0 or self.is_zero:
            return self
        if m > 0:
            return PolyC(np.concatenate([np.zeros(m, dtype=DTYPE), self._c]))
        if self.trailing_zeros() < -m:
            raise DomainError(f"{self} is not divisible by t^{-m}")
        return PolyC(self._c[-m:])

    def monic(self) -> "PolyC":
        if self.is_zero:
            raise DomainError("the zero polynomial has no monic form")
        return PolyC(self._c / self._c[-1])

    def conj(self) -> "PolyC":
        return PolyC(np.conj(self._c))

    def cleaned(
        self, tol: Optional[float] = None, radius: float = 1.0
    ) -> "PolyC":
        """Final-value form: drop coefficients whose contribution on
        ``|t| <= radius`` is below ``tol`` times the largest one."""
        if radius <= 0.0:
            raise DomainError(f"radius must be positive, got {radius}")
        if self.is_zero:
            return self
        weights = radius ** np.arange(self._c.size, dtype=float)
        scale = float(np.max(np.abs(self._c) * weights))
        return PolyC(self._c, tol=tol, ref=scale / weights)

    def divide_linear(self, r: complex) -> Tuple["PolyC", complex]:
        """Synthetic division by ``(t - r)``: quotient and remainder."""
        c = self._c
        n = c.size - 1
        if n < 1:
            raise DomainError(f"cannot divide a constant by (t - {r})")
        q = np.zeros(n, dtype=DTYPE)
        ref = np.zeros(n)
        q[n - 1] = c[n]
        ref[n - 1] = abs(c[n])
        for i in range(n - 1, 0, -1):
            q[i - 1] = c[i] + r * q[i]
            ref[i - 1] = abs(c[i]) + abs(r) * ref[i]
        return PolyC(q, ref=ref), complex(c[0] + r * q[0])

    def divmod(self, other: "PolyC") -> Tuple["PolyC", "PolyC"]:
        if other.is_zero:
            raise DomainError("polynomial division by zero")
        if self.degree < other.degree:
            return PolyC(), self
        q, r = np.polydiv(self._c[::-1], other._c[::-1])
        return (
            PolyC(np.asarray(q)[::-1], ref=self.max_abs),
            PolyC(np.asarray(r)[::-1], ref=self.max_abs),
        )

    def roots(self) -> List[complex]:
        return poly_roots(self)

    def allclose(self, other: "PolyC", rtol: float = 1e-9) -> bool:
        n = max(self._c.size, other._c.size)
        a = np.zeros(n, dtype=DTYPE)
        b = np.zeros(n, dtype=DTYPE)
        a[: self._c.size] = self._c
        b[: other._c.size] = other._c
        ref = max(self.max_abs, other.max_abs, 1e-300)
        return bool(np.max(np.abs(a - b), initial=0.0) <= rtol * ref)

    def __repr__(self) -> str:
        if self.is_zero:
            return "PolyC(0)"
        terms = [
            f"({c.real:.6g}{c.imag:+.6g}j)*t^{n}"
            for n, c in enumerate(self._c)
            if c != 0
        ]
        return "PolyC(" + " + ".join(terms) + ")"


def _root_key(z: complex) -> Tuple[float, float]:
    return (round(z.real, 10), z.imag)


def _companion_eigvals(core: np.ndarray) -> List[complex]:
    n = core.size - 1
    monic = core / core[-1]
    if n == 1:
        return [complex(-monic[0])]
    if np.all(monic.imag == 0.0):
        monic = monic.real
    companion = np.zeros((n, n), dtype=monic.dtype)
    rng = np.arange(n - 1)
    companion[rng + 1, rng] = 1.0
    companion[:, -1] = -monic[:n]
    return [complex(z) for z in np.linalg.eigvals(companion)]


def poly_roots(p: PolyC) -> List[complex]:
    """All roots of p with multiplicity, sorted by (real, imaginary).

    Roots at t = 0 are read off the exact low-order zeros; the rest come
    from the eigenvalues of the companion matrix.

    Raises:
        DomainError: If p is zero or constant.
    """
    if p.degree < 1:
        raise DomainError(f"cannot root a polynomial of degree {p.degree}")
    m = p.trailing_zeros()
    roots = [0j] * m
    core = p.coeffs[m:]
    if core.size > 1:
        roots.extend(_companion_eigvals(np.asarray(core)))
    return sorted(roots, key=_root_key)


def roots_to_poly(roots: Sequence[complex]) -> PolyC:
    """Monic polynomial with the given roots (the empty product is 1)."""
    c = np.ones(1, dtype=DTYPE)
    ref = np.ones(1)
    for r in roots:
        c = np.convolve(c, np.array([-r, 1.0], dtype=DTYPE))
        ref = np.convolve(ref, np.array([abs(r), 1.0]))
    return PolyC(c, ref=ref)


def _find_root(pool: Sequence[complex], r: complex, tol: float) -> int:
    for i, q in enumerate(pool):
        if abs(q - r) <= tol:
            return i
    return -1


def group_roots(
    roots: Sequence[complex], tol: Optional[float] = None
) -> List[Tuple[complex, int]]:
    """Cluster roots closer than ``tol``; returns (mean, multiplicity)."""
    tol = settings.ROOT_MATCH_TOL if tol is None else tol
    groups: List[List[complex]] = []
    for r in sorted(roots, key=_root_key):
        for g in groups:
            if abs(g[0] - r) <= tol:
                g.append(r)
                break
        else:
            groups.append([r])
    return [(complex(np.mean(g)), len(g)) for g in groups]


def _multiset_diff(
    big: Sequence[complex], small: Sequence[complex], tol: float
) -> List[complex]:
    pool = list(big)
    for r in small:
        j = _find_root(pool, r, tol)
        if j < 0:
            raise DomainError(f"root {r} missing from denominator {big}")
        pool.pop(j)
    return pool


def _multiset_union(
    a: Sequence[complex], b: Sequence[complex], tol: float
) -> List[complex]:
    pool = list(a)
    extra = []
    for r in b:
        j = _find_root(pool, r, tol)
        if j < 0:
            extra.append(r)
        else:
            pool.pop(j)
    return list(a) + extra


def _taylor(
    num: PolyC, r: complex, order: int
) -> Tuple[List[complex], List[float], List[PolyC]]:
    """Taylor coefficients of num about r up to ``order``, their rounding
    scales, and the quotients ``num / (t - r)**k``."""
    p, mag = num, PolyC(np.abs(num.coeffs))
    coeffs, scales, quotients = [], [], [num]
    for _ in range(order):
        p, rem = p.divide_linear(r)
        mag, mag_rem = mag.divide_linear(abs(r))
        coeffs.append(rem)
        scales.append(abs(mag_rem))
        quotients.append(p)
    coeffs.append(complex(p(r)))
    scales.append(float(abs(mag(abs(r)))))
    return coeffs, scales, quotients


def _cancellable(
    num: PolyC, r: complex, mult: int, tol: float
) -> Tuple[int, PolyC]:
    """Largest m <= mult such that num has m roots clustered at r.

    With d_k the Taylor coefficients about r, m roots lie within rho of r
    when every ``|d_k| <= C(m, k) rho**(m - k) |d_m|`` (k < m); rho is
    ``(tol * (1 + |r|))**(1/m)``. Coefficients at rounding level always
    pass. At r = 0 only exact low-order zeros cancel.
    """
    if r == 0:
        m = min(mult, num.trailing_zeros())
        return m, num.shift(-m)
    order = min(mult, num.degree)
    if order < 1:
        return 0, num
    d, scale, quotients = _taylor(num, r, order)
    best = 0
    for m in range(1, order + 1):
        rho = (tol * (1.0 + abs(r))) ** (1.0 / m)
        if all(
            abs(d[k]) <= ROUNDING_FLOOR * scale[k]
            or abs(d[k]) <= math.comb(m, k) * rho ** (m - k) * abs(d[m])
            for k in range(m)
        ):
            best = m
    return best, quotients[best]


class RationalT:
    """Rational function ``num(t) / prod(t - r)`` in t = x**2.

    The denominator is monic and stored as its root multiset. On
    construction, every denominator root that is also a root of the
    numerator (within the root-matching tolerance) is cancelled by
    synthetic division.
    """

    __slots__ = ("_num", "_roots")

    def __init__(
        self,
        num: Union[PolyC, Iterable[Scalar]] = (),
        den_roots: Sequence[complex] = (),
        *,
        tol: Optional[float] = None,
    ):
        if not isinstance(num, PolyC):
            num = PolyC(num)
        tol = settings.ROOT_MATCH_TOL if tol is None else tol
        if num.is_zero:
            self._num, self._roots = num, ()
            return
        remaining: List[complex] = []
        for r, mult in group_roots(den_roots, tol):
            if abs(r) <= tol:
                r = 0j
            cancelled, num = _cancellable(num, r, mult, tol)
            if cancelled:
                logger.debug(f"cancelled {cancelled}x root {r:.6g}")
            remaining.extend([r] * (mult - cancelled))
        self._num = num
        self._roots = tuple(sorted(remaining, key=_root_key))

    @classmethod
    def from_polys(cls, num: PolyC, den: PolyC) -> "RationalT":
        if den.is_zero:
            raise DomainError("rational function with zero denominator")
        roots = poly_roots(den) if den.degree >= 1 else []
        return cls(num / den.lead, roots)

    @classmethod
    def constant(cls, value: Scalar) -> "RationalT":
        return cls(PolyC.constant(value))

    @classmethod
    def inverse_t_power(cls, m: int, value: Scalar = 1.0) -> "RationalT":
        """``value / t**m``."""
        return cls(PolyC.constant(value), [0j] * m)

    @property
    def num(self) -> PolyC:
        return self._num

    @property
    def den_roots(self) -> Tuple[complex, ...]:
        return self._roots

    @property
    def den(self) -> PolyC:
        return roots_to_poly(self._roots)

    @property
    def is_zero(self) -> bool:
        return self._num.is_zero

    def _merge(self, other: "RationalT"):
        tol = settings.ROOT_MATCH_TOL
        lcm = _multiset_union(self._roots, other._roots, tol)
        cof_self = roots_to_poly(_multiset_diff(lcm, self._roots, tol))
        cof_other = roots_to_poly(_multiset_diff(lcm, other._roots, tol))
        return lcm, self._num * cof_self, other._num * cof_other

    def __add__(self, other: Union["RationalT", PolyC, Scalar]):
        other = as_rational(other)
        if other.is_zero:
            return self
        if self.is_zero:
            return other
        lcm, a, b = self._merge(other)
        return RationalT(a + b, lcm)

    __radd__ = __add__

    def __sub__(self, other: Union["RationalT", PolyC, Scalar]):
        return self + (-as_rational(other))

    def __rsub__(self, other: Union[PolyC, Scalar]):
        return as_rational(other) - self

    def __neg__(self) -> "RationalT":
        return RationalT(-self._num, self._roots)

    def __mul__(self, other: Union["RationalT", PolyC, Scalar]):
        if isinstance(other, RationalT):
            if self.is_zero or other.is_zero:
                return RationalT()
            return RationalT(
                self._num * other._num, self._roots + other._roots
            )
        if isinstance(other, PolyC):
            return RationalT(self._num * other, self._roots)
        return RationalT(self._num * other, self._roots)

    __rmul__ = __mul__

    def __truediv__(self, other: Union["RationalT", PolyC, Scalar]):
        if not isinstance(other, (RationalT, PolyC)):
            return RationalT(self._num / complex(other), self._roots)
        other = as_rational(other)
        if other.is_zero:
            raise DomainError("division by the zero rational function")
        if self.is_zero:
            return self
        onum = other._num
        roots = poly_roots(onum) if onum.degree >= 1 else []
        num = self._num * roots_to_poly(other._roots) / onum.lead
        return RationalT(num, list(self._roots) + roots)

    def times_t(self, m: int = 1) -> "RationalT":
        """Multiply by ``t**m``; negative m divides."""
        if m >= 0:
            return RationalT(self._num.shift(m), self._roots)
        return RationalT(self._num, list(self._roots) + [0j] * (-m))

    def deriv(self) -> "RationalT":
        """d/dt, keeping the denominator factored: a root of multiplicity
        m becomes a root of multiplicity m + 1."""
        if self.is_zero:
            return self
        groups = group_roots(self._roots)
        if not groups:
            return RationalT(self._num.deriv())
        distinct = [r for r, _ in groups]
        q = roots_to_poly(distinct)
        s = PolyC()
        for i, (_, mult) in enumerate(groups):
            s = s + mult * roots_to_poly(distinct[:i] + distinct[i + 1:])
        num = self._num.deriv() * q - self._num * s
        return RationalT(num, list(self._roots) + distinct)

    def conj(self) -> "RationalT":
        return RationalT(
            self._num.conj(), [complex(np.conj(r)) for r in self._roots]
        )

    def evaluate(self, t):
        """Vectorized evaluation; poles give inf or nan."""
        t = np.asarray(t, dtype=DTYPE)
        den = np.ones_like(t)
        for r in self._roots:
            den = den * (t - r)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self._num(t) / den

    def __call__(self, t: complex) -> complex:
        for r in self._roots:
            if abs(t - r) <= settings.ROOT_MATCH_TOL * (1.0 + abs(r)):
                raise PoleError(f"pole of rational function at t={r}", r)
        return complex(self.evaluate(t))

    def pole_order_at_zero(self) -> int:
        return sum(1 for r in self._roots if r == 0)

    def residue_at_zero(self) -> complex:
        """Coefficient of 1/t for a simple pole at t = 0 (0 if regular)."""
        order = self.pole_order_at_zero()
        if order == 0:
            return 0j
        if order > 1:
            raise DomainError(f"pole of order {order} at t = 0")
        rest = [r for r in self._roots if r != 0]
        return complex(self._num(0.0) / roots_to_poly(rest)(0.0))

    def decompose(self) -> Tuple[PolyC, complex, "RationalT"]:
        """Split into polynomial part, 1/t coefficient and a proper
        remainder whose denominator excludes t = 0."""
        quotient, rem = self._num.divmod(self.den)
        c = self.residue_at_zero() if self.pole_order_at_zero() == 1 else 0j
        proper = RationalT(rem, self._roots)
        if c != 0:
            proper = proper - RationalT.inverse_t_power(1, c)
        return quotient, c, proper

    def allclose(self, other: "RationalT", rtol: float = 1e-9) -> bool:
        return self._num.allclose(other._num, rtol) and self.den.allclose(
            other.den, rtol
        )

    def __repr__(self) -> str:
        return f"RationalT(num={self._num!r}, den_roots={self._roots})"


def as_rational(value: Union[RationalT, PolyC, Scalar]) -> RationalT:
    if isinstance(value, RationalT):
        return value
    if isinstance(value, PolyC):
        return RationalT(value)
    return RationalT.constant(value)


def common_numerators(
    items: Sequence[RationalT],
) -> Tuple[List[complex], List[np.ndarray]]:
    """Raw numerators of ``items`` over their least common denominator.

    No dust is removed from the returned arrays, so they can be used to
    measure cancellation.
    """
    tol = settings.ROOT_MATCH_TOL
    lcm: List[complex] = []
    for item in items:
        lcm = _multiset_union(lcm, item.den_roots, tol)
    width = 1
    raws = []
    for item in items:
        cof = roots_to_poly(_multiset_diff(lcm, item.den_roots, tol))
        raw = (
            np.convolve(item.num.coeffs, cof.coeffs)
            if not item.is_zero
            else np.zeros(1, dtype=DTYPE)
        )
        raws.append(raw)
        width = max(width, raw.size)
    padded = []
    for raw in raws:
        out = np.zeros(width, dtype=DTYPE)
        out[: raw.size] = raw
        padded.append(out)
    return lcm, padded


def rat_simplify(r: RationalT) -> RationalT:
    """Re-run root-matching cancellation on r (idempotent on canonical
    values)."""
    return RationalT(r.num, r.den_roots)


def rat_eval(r: RationalT, t: complex) -> complex:
    return r(t)


class RationalPotential:
    """Potential ``V(x) = rat(x**2)`` on the half line."""

    __slots__ = ("rat",)

    def __init__(self, rat: RationalT):
        self.rat = rat

    def __call__(self, x: complex) -> complex:
        return self.rat(x * x)

    def evaluate(self, x):
        x = np.asarray(x, dtype=DTYPE)
        return self.rat.evaluate(x * x)

    @property
    def centrifugal(self) -> complex:
        """The 1/x**2 coefficient."""
        return self.rat.residue_at_zero()

    @property
    def leading(self) -> complex:
        """Coefficient of the leading power of the polynomial part."""
        quotient, _ = self.rat.num.divmod(self.rat.den)
        return quotient.lead

    def conj(self) -> "RationalPotential":
        return RationalPotential(self.rat.conj())

    def allclose(self, other: "RationalPotential", rtol=1e-9) -> bool:
        return self.rat.allclose(other.rat, rtol)

    def __add__(self, other: Union[RationalT, "RationalPotential"]):
        if isinstance(other, RationalPotential):
            other = other.rat
        return RationalPotential(self.rat + other)

    def __sub__(self, other: Union[RationalT, "RationalPotential"]):
        if isinstance(other, RationalPotential):
            other = other.rat
        return RationalPotential(self.rat - other)

    def __repr__(self) -> str:
        return f"RationalPotential({self.rat!r})"


class QuasiWave:
    """``scale * exp(-k*a*x**4/4) * x**sigma * num(t) / den(t)``.

    Canonical form: num and den monic, num(0) != 0 and den(0) != 0 (powers
    of x at the origin live in sigma), the constant lives in scale. The
    zero function has scale 0 and a zero numerator.
    """

    __slots__ = ("scale", "a", "k", "sigma", "ratio")

    def __init__(
        self,
        scale: Scalar,
        a: float,
        k: int,
        sigma: float,
        ratio: Union[RationalT, PolyC, Scalar] = 1.0,
    ):
        if not a > 0:
            raise DomainError(f"stiffness must be positive, got {a}")
        if k < 0:
            raise DomainError(f"exponential multiplicity must be >= 0: {k}")
        ratio = as_rational(ratio)
        self.a = float(a)
        self.k = int(k)
        scale = complex(scale)
        sigma = float(sigma)
        if ratio.is_zero or scale == 0:
            self.scale, self.sigma, self.ratio = 0j, sigma, RationalT()
            return
        num = ratio.num
        m = num.trailing_zeros()
        if m:
            num = num.shift(-m)
            sigma += 2 * m
        roots = [r for r in ratio.den_roots if r != 0]
        sigma -= 2 * (len(ratio.den_roots) - len(roots))
        lead = num.lead
        self.scale = scale * lead
        self.sigma = sigma
        self.ratio = RationalT(num / lead, roots)

    @property
    def num(self) -> PolyC:
        return self.ratio.num

    @property
    def den(self) -> PolyC:
        return self.ratio.den

    @property
    def is_zero(self) -> bool:
        return self.scale == 0

    def _check_stiffness(self, other: "QuasiWave") -> None:
        if abs(self.a - other.a) > 1e-12 * max(self.a, other.a):
            raise DomainError(
                f"mismatched stiffness a: {self.a} vs {other.a}"
            )

    def evaluate(self, x):
        """Vectorized value at x (real or complex); poles give inf/nan."""
        x = np.asarray(x, dtype=DTYPE)
        t = x * x
        with np.errstate(divide="ignore", invalid="ignore"):
            return (
                self.scale
                * np.exp(-self.k * self.a * t * t / 4.0)
                * np.power(x, self.sigma)
                * self.ratio.evaluate(t)
            )

    def __call__(self, x: complex) -> complex:
        if x == 0 and self.sigma < 0:
            raise PoleError("x**sigma is singular at the origin", 0.0)
        t = x * x
        for r in self.ratio.den_roots:
            if abs(t - r) <= settings.ROOT_MATCH_TOL * (1.0 + abs(r)):
                raise PoleError(f"pole at x^2={r}", complex(np.sqrt(r)))
        return complex(self.evaluate(x))

    def scaled(self, c: Scalar) -> "QuasiWave":
        return QuasiWave(
            self.scale * complex(c), self.a, self.k, self.sigma, self.ratio
        )

    def __neg__(self) -> "QuasiWave":
        return self.scaled(-1.0)

    def times_rational(self, r: RationalT, dsigma: float = 0.0):
        """Multiply by ``x**dsigma * r(t)``."""
        return QuasiWave(
            self.scale, self.a, self.k, self.sigma + dsigma, self.ratio * r
        )

    def __mul__(self, other: "QuasiWave") -> "QuasiWave":
        self._check_stiffness(other)
        return QuasiWave(
            self.scale * other.scale,
            self.a,
            self.k + other.k,
            self.sigma + other.sigma,
            self.ratio * other.ratio,
        )

    def __truediv__(self, other: "QuasiWave") -> "QuasiWave":
        self._check_stiffness(other)
        if other.is_zero:
            raise DomainError("division by the zero function")
        if self.k < other.k:
            raise DomainError("quotient leaves the quasi-polynomial family")
        return QuasiWave(
            self.scale / other.scale,
            self.a,
            self.k - other.k,
            self.sigma - other.sigma,
            self.ratio / other.ratio,
        )

    def __add__(self, other: "QuasiWave") -> "QuasiWave":
        self._check_stiffness(other)
        if other.is_zero:
            return self
        if self.is_zero:
            return other
        if self.k != other.k:
            raise DomainError("sum leaves the quasi-polynomial family")
        half = (other.sigma - self.sigma) / 2.0
        steps = round(half)
        if abs(half - steps) > 1e-9:
            raise DomainError(
                f"sigmas {self.sigma} and {other.sigma} differ by a "
                "non-even amount"
            )
        lo, hi = (self, other) if steps >= 0 else (other, self)
        ratio = lo.ratio * lo.scale + hi.ratio.times_t(abs(steps)) * hi.scale
        return QuasiWave(1.0, self.a, self.k, lo.sigma, ratio)

    def __sub__(self, other: "QuasiWave") -> "QuasiWave":
        return self + (-other)

    def conj(self) -> "QuasiWave":
        return QuasiWave(
            complex(np.conj(self.scale)),
            self.a,
            self.k,
            self.sigma,
            self.ratio.conj(),
        )

    def same_shape(self, other: "QuasiWave", rtol: float = 1e-9) -> bool:
        """Equality up to the scale factor, coefficient-wise."""
        if self.is_zero or other.is_zero:
            return self.is_zero and other.is_zero
        return (
            abs(self.a - other.a) <= 1e-12 * self.a
            and self.k == other.k
            and abs(self.sigma - other.sigma) <= 1e-9
            and self.ratio.allclose(other.ratio, rtol)
        )

    def __repr__(self) -> str:
        return (
            f"QuasiWave(scale={self.scale:.6g}, a={self.a}, k={self.k}, "
            f"sigma={self.sigma}, num={self.num!r}, "
            f"den_roots={self.ratio.den_roots})"
        )


def zero_wave(a: float, k: int, sigma: float) -> QuasiWave:
    return QuasiWave(0.0, a, k, sigma, RationalT())


def polynomial_wave(p: PolyC, a: float) -> QuasiWave:
    """``p(x**2)`` as a member of the family (k = 0, sigma = 0)."""
    return QuasiWave(1.0, a, 0, 0.0, RationalT(p))


class Superpotential:
    """``W(x) = x * g(x**2)`` with g rational in t."""

    __slots__ = ("g",)

    def __init__(self, g: RationalT):
        self.g = g

    def __call__(self, x: complex) -> complex:
        return x * self.g(x * x)

    def evaluate(self, x):
        x = np.asarray(x, dtype=DTYPE)
        return x * self.g.evaluate(x * x)

    def prime(self) -> RationalT:
        """W'(x) = g + 2 t g'(t), rational in t."""
        return self.g + self.g.deriv().times_t(1) * 2.0

    def square(self) -> RationalT:
        """W(x)**2 = t g(t)**2."""
        return (self.g * self.g).times_t(1)

    def __neg__(self) -> "Superpotential":
        return Superpotential(-self.g)

    def __add__(self, other: "Superpotential") -> "Superpotential":
        return Superpotential(self.g + other.g)

    def __sub__(self, other: "Superpotential") -> "Superpotential":
        return Superpotential(self.g - other.g)

    def act(self, f: QuasiWave) -> QuasiWave:
        """Pointwise product W*f."""
        return f.times_rational(self.g, 1.0)

    def allclose(self, other: "Superpotential", rtol=1e-9) -> bool:
        return self.g.allclose(other.g, rtol)

    def __repr__(self) -> str:
        return f"Superpotential(g={self.g!r})"


def qw_derivative(f: QuasiWave) -> QuasiWave:
    """Exact d/dx of f.

    With f = e * x**sigma * R(t):
    f' = e * x**(sigma-1) * [(sigma - k*a*t**2) R + 2 t R'(t)].
    """
    if f.is_zero:
        return zero_wave(f.a, f.k, f.sigma - 1)
    factor = PolyC([f.sigma, 0.0, -f.k * f.a])
    ratio = f.ratio * factor + f.ratio.deriv().times_t(1) * 2.0
    return QuasiWave(f.scale, f.a, f.k, f.sigma - 1, ratio)


def qw_wronskian2(f: QuasiWave, g: QuasiWave) -> QuasiWave:
    """Exact Wronskian f g' - g f'.

    With F, G the rational parts:
    W = e_f e_g x**(sf+sg-1) [((sg-sf) - (kg-kf) a t**2) F G
        + 2 t (F G' - F' G)].

    Raises:
        DomainError: If the stiffness parameters differ.
    """
    f._check_stiffness(g)
    k = f.k + g.k
    sigma = f.sigma + g.sigma - 1
    if f.is_zero or g.is_zero:
        return zero_wave(f.a, k, sigma)
    F, G = f.ratio, g.ratio
    mult = PolyC([g.sigma - f.sigma, 0.0, -(g.k - f.k) * f.a])
    cross = F * G.deriv() - F.deriv() * G
    ratio = (F * G) * mult + cross.times_t(1) * 2.0
    return QuasiWave(f.scale * g.scale, f.a, k, sigma, ratio)


def qw_wronskian3(f: QuasiWave, g: QuasiWave, h: QuasiWave) -> QuasiWave:
    """Exact 3x3 Wronskian through W(f,g,h) = W(W(f,g), W(f,h)) / f."""
    f._check_stiffness(g)
    f._check_stiffness(h)
    k = f.k + g.k + h.k
    sigma = f.sigma + g.sigma + h.sigma - 3
    if f.is_zero:
        return zero_wave(f.a, k, sigma)
    outer = qw_wronskian2(qw_wronskian2(f, g), qw_wronskian2(f, h))
    if outer.is_zero:
        return zero_wave(f.a, k, sigma)
    return outer / f


def qw_log_derivative(f: QuasiWave) -> Superpotential:
    """``W = -f'/f`` as ``x * g(t)`` with
    ``g = k a t - sigma/t - 2 N'/N + 2 D'/D``.

    Raises:
        DomainError: If f is the zero function.
    """
    if f.is_zero:
        raise DomainError("logarithmic derivative of the zero function")
    g = RationalT(PolyC([0.0, f.k * f.a]))
    if f.sigma != 0:
        g = g + RationalT.inverse_t_power(1, -f.sigma)
    num = f.num
    if num.degree >= 1:
        g = g - RationalT(num.deriv() * 2.0, poly_roots(num))
    if f.ratio.den_roots:
        g = g + RationalT(f.den.deriv() * 2.0, f.ratio.den_roots)
    return Superpotential(g)


def qw_eval(f: QuasiWave, x: complex) -> complex:
    return f(x)
