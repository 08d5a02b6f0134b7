"""First- and second-order Darboux transformations and chain
classification.

A first-order operator ``L = d/dx + W`` is built from a transformation
function psi with ``W = -(ln psi)'``; it maps ``V0`` to ``V1 = V0 + 2W'``.
A second-order operator built from two solutions psi_a, psi_b acts as
``f -> W(psi_a, psi_b, f) / W(psi_a, psi_b)`` and maps ``V0`` to
``V2 = V0 - 2 (ln W(psi_a, psi_b))''``.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from qesdx.config import settings
from qesdx.exceptions import (
    DegeneratePairError,
    DomainError,
    TransformationFunctionError,
)
from qesdx.services import oracle
from qesdx.services.qpoly import (
    PolyC,
    QuasiWave,
    RationalPotential,
    RationalT,
    Superpotential,
    qw_derivative,
    qw_log_derivative,
    qw_wronskian2,
    qw_wronskian3,
)
from qesdx.services.sextic import (
    SexticModel,
    SpectralEntry,
    qes_spectrum,
)

logger = logging.getLogger(__name__)

PotentialLike = Union[SexticModel, RationalPotential]


class ChainKind(str, Enum):
    """Classification of a two-step transformation chain."""

    REDUCIBLE = "Reducible"
    IRREDUCIBLE_TYPE1 = "IrreducibleType1"
    IRREDUCIBLE_TYPE2 = "IrreducibleType2"
    INVALID = "Invalid"


def _potential(V: PotentialLike) -> RationalPotential:
    return V.V0 if isinstance(V, SexticModel) else V


@dataclass(frozen=True)
class FirstOrderOp:
    """``L = d/dx + W`` with ``H_in = L^+ L + alpha``.

    Attributes:
        W: Superpotential, the negative log derivative of the source
        alpha: Factorization constant (energy of the source)
        source: Transformation function
    """

    W: Superpotential
    alpha: complex
    source: QuasiWave

    def apply(self, f: QuasiWave) -> QuasiWave:
        return apply_first_order(self, f)

    def adjoint(self, g: QuasiWave) -> QuasiWave:
        return apply_adjoint(self, g)


@dataclass(frozen=True)
class SecondOrderOp:
    """``f -> W(wa, wb, f) / W(wa, wb)``.

    Attributes:
        wa: First transformation function
        wb: Second transformation function
        wron: Wronskian W(wa, wb)
        V2: Transformed potential
        energies: Energies (E_a, E_b) of the transformation functions
    """

    wa: QuasiWave
    wb: QuasiWave
    wron: QuasiWave
    V2: RationalPotential
    energies: Tuple[Optional[complex], Optional[complex]] = (None, None)

    def apply(self, f: QuasiWave) -> QuasiWave:
        return apply_second_order(self, f)


@dataclass(frozen=True)
class FirstOrderChain:
    """One transformation step with every mapped state.

    Attributes:
        op: The first-order operator
        V1: Transformed potential
        mapped: Images of the input states (the source itself is dropped)
        poles: Positive-t poles of V1
        real: Whether V1 is real
    """

    op: FirstOrderOp
    V1: RationalPotential
    mapped: List[SpectralEntry]
    poles: List[float]
    real: bool


@dataclass(frozen=True)
class ReducibleChain:
    """Two ground-state steps and their single second-order equivalent.

    Attributes:
        op0: First step, built on the ground state of H0
        V1: Intermediate potential
        op1: Second step, built on the ground state of H1
        V2: Final potential from the two steps
        states: Mapped states per stage ("psi", "phi", "chi")
        second: The equivalent second-order operator
        composition_gap: Largest mismatch between the two routes
    """

    op0: FirstOrderOp
    V1: RationalPotential
    op1: FirstOrderOp
    V2: RationalPotential
    states: Dict[str, List[SpectralEntry]]
    second: SecondOrderOp
    composition_gap: float


@dataclass(frozen=True)
class ChainReport:
    """Classification of a second-order chain.

    Attributes:
        kind: Chain classification
        V1: Reported intermediate potential
        V1_poles_on_domain: Positive-t poles of V1 and of the polynomial
            part of its transformation function
        V1_real: Whether V1 is real
        V2: Final potential
        V2_poles_on_domain: Positive-t poles of V2
        mapped: Images of the requested states under the operator
        op: The second-order operator
        first: The first factor of the chain
        notes: Findings worth reporting
    """

    kind: ChainKind
    V1: Optional[RationalPotential]
    V1_poles_on_domain: List[float]
    V1_real: bool
    V2: RationalPotential
    V2_poles_on_domain: List[float]
    mapped: List[SpectralEntry]
    op: SecondOrderOp
    first: Optional[FirstOrderOp] = None
    notes: List[str] = field(default_factory=list)


def first_order(
    V0: PotentialLike,
    psi: QuasiWave,
    alpha: complex,
    tol: Optional[float] = None,
) -> Tuple[FirstOrderOp, RationalPotential]:
    """Build ``L = d/dx + W`` from psi and the transformed potential.

    Raises:
        TransformationFunctionError: If psi does not solve
            ``(H0 - alpha) psi = 0``.
    """
    V0 = _potential(V0)
    report = oracle.residual(V0, alpha, psi, tol)
    if not report.passed:
        raise TransformationFunctionError(
            f"not a transformation function at alpha={alpha}: residual "
            f"{report.max_norm_coeff:.3e}"
        )
    W = qw_log_derivative(psi)
    V1 = V0 + W.prime() * 2.0
    return FirstOrderOp(W, complex(alpha), psi), V1


def apply_first_order(op: FirstOrderOp, f: QuasiWave) -> QuasiWave:
    """``f' + W f``."""
    if f.is_zero:
        return f
    return qw_derivative(f) + op.W.act(f)


def apply_adjoint(op: FirstOrderOp, g: QuasiWave) -> QuasiWave:
    """``-g' + W g``."""
    if g.is_zero:
        return g
    return op.W.act(g) - qw_derivative(g)


def _wave_and_energy(
    item: Union[SpectralEntry, QuasiWave]
) -> Tuple[QuasiWave, Optional[complex]]:
    if isinstance(item, SpectralEntry):
        return item.wave, item.energy
    return item, None


def second_order(
    V0: PotentialLike,
    psi_a: Union[SpectralEntry, QuasiWave],
    psi_b: Union[SpectralEntry, QuasiWave],
    tol: Optional[float] = None,
) -> SecondOrderOp:
    """Second-order operator on the pair (psi_a, psi_b).

    Spectral entries are checked against V0 before use.

    Raises:
        TransformationFunctionError: If an entry does not solve V0.
        DegeneratePairError: If the inputs are proportional.
    """
    V0 = _potential(V0)
    wa, Ea = _wave_and_energy(psi_a)
    wb, Eb = _wave_and_energy(psi_b)
    for wave, energy in ((wa, Ea), (wb, Eb)):
        if energy is None:
            continue
        report = oracle.residual(V0, energy, wave, tol)
        if not report.passed:
            raise TransformationFunctionError(
                f"input at E={energy} does not solve the initial potential"
            )
    wron = qw_wronskian2(wa, wb)
    if wron.is_zero:
        raise DegeneratePairError("transformation functions are proportional")
    V2 = V0 + qw_log_derivative(wron).prime() * 2.0
    return SecondOrderOp(wa, wb, wron, V2, (Ea, Eb))


def apply_second_order(op: SecondOrderOp, f: QuasiWave) -> QuasiWave:
    """``W(wa, wb, f) / W(wa, wb)``; annihilates wa and wb."""
    triple = qw_wronskian3(op.wa, op.wb, f)
    if triple.is_zero:
        return triple
    return triple / op.wron


def _map_state(
    V: RationalPotential,
    entry: SpectralEntry,
    wave: QuasiWave,
    label: str,
    tol: Optional[float],
) -> SpectralEntry:
    report = oracle.residual(V, entry.energy, wave, tol)
    if not report.passed:
        logger.warning(
            f"{label} fails its residual check ({report.max_norm_coeff:.3e})"
        )
    real = abs(entry.energy.imag) < settings.REALNESS_TOL * (
        1.0 + abs(entry.energy)
    )
    return SpectralEntry(
        energy=entry.energy,
        wave=wave,
        index=entry.index,
        physical=real and oracle.normalizable(wave),
        residual=report.max_norm_coeff,
        label=label,
    )


def first_order_chain(
    V0: PotentialLike,
    source: SpectralEntry,
    states: Sequence[SpectralEntry] = (),
    prefix: str = "phi",
    tol: Optional[float] = None,
) -> FirstOrderChain:
    """One step on ``source`` with every other state mapped through it."""
    op, V1 = first_order(V0, source.wave, source.energy, tol)
    mapped = []
    for entry in states:
        if entry is source:
            continue
        wave = apply_first_order(op, entry.wave)
        if wave.is_zero:
            continue
        mapped.append(
            _map_state(V1, entry, wave, f"{prefix}{entry.index}", tol)
        )
    poles = oracle.pole_scan(V1)
    real = oracle.realness_check(V1)
    logger.info(
        f"first-order step at alpha={op.alpha}: {len(mapped)} mapped, "
        f"poles={poles}, real={real}"
    )
    return FirstOrderChain(op, V1, mapped, poles, real)


def reverse_map(
    op: FirstOrderOp, states: Sequence[SpectralEntry]
) -> List[QuasiWave]:
    """Apply the reverse operator ``-d/dx + W`` to every state."""
    return [apply_adjoint(op, entry.wave) for entry in states]


def chain_superpotential(
    e0: SpectralEntry, e1: SpectralEntry, W0: Superpotential
) -> Superpotential:
    """Second-step superpotential from sector data.

    ``W1 = -W0 + (E1 - E0) P0 P1 / W(P0(x^2), P1(x^2))``, where the
    polynomial Wronskian is ``2x (P0 P1' - P1 P0')`` in t.
    """
    if e0.poly is None or e1.poly is None:
        raise DomainError("sector polynomials are required")
    P0, P1 = e0.poly, e1.poly
    cross = P0 * P1.deriv() - P1 * P0.deriv()
    term = RationalT.from_polys(P0 * P1, cross.shift(1) * 2.0)
    return Superpotential(-W0.g + term * (e1.energy - e0.energy))


def bracket_state(
    m: SexticModel, e0: SpectralEntry, e1: SpectralEntry, eN: SpectralEntry
) -> QuasiWave:
    """Final reducible-chain state from polynomial Wronskians.

    ``exp(-a x^4/4) x^(2s-1/2)
    [-E0 P0 W1N + E1 P1 W0N - EN PN W01] / W01``
    """

    def cross(p: PolyC, q: PolyC) -> PolyC:
        return p * q.deriv() - q * p.deriv()

    P0, P1, PN = e0.poly, e1.poly, eN.poly
    if P0 is None or P1 is None or PN is None:
        raise DomainError("sector polynomials are required")
    bracket = (
        P0 * cross(P1, PN) * (-e0.energy)
        + P1 * cross(P0, PN) * e1.energy
        - PN * cross(P0, P1) * eN.energy
    )
    ratio = RationalT.from_polys(bracket, cross(P0, P1))
    return QuasiWave(1.0, m.a, 1, m.sigma, ratio)


def _shape_gap(f: QuasiWave, g: QuasiWave) -> float:
    """Gap between two waves up to their scale factors, compared as
    functions so that uncancelled common factors do not matter."""
    if f.k != g.k or abs(f.sigma - g.sigma) > 1e-9:
        return 1.0
    return oracle.rational_gap(f.ratio, g.ratio)


def reducible_chain(
    m: SexticModel, tol: Optional[float] = None
) -> ReducibleChain:
    """Two first-order steps on successive ground states.

    Raises:
        DomainError: If M = 0 (no first excited state).
    """
    if m.M < 1:
        raise DomainError("the reducible chain needs M >= 1")
    psi = list(qes_spectrum(m))
    step0 = first_order_chain(m, psi[0], psi, "phi", tol)
    phi = step0.mapped
    step1 = first_order_chain(step0.V1, phi[0], phi, "chi", tol)
    chi = step1.mapped
    second = second_order(m, psi[0], psi[1], tol)
    gap = oracle.rational_gap(step1.V1.rat, second.V2.rat)
    for entry, target in zip(psi[2:], chi):
        direct = apply_second_order(second, entry.wave)
        state_gap = _shape_gap(direct, target.wave)
        if state_gap > 1e-8:
            logger.warning(
                f"composition mismatch on {target.label} ({state_gap:.3e})"
            )
        gap = max(gap, state_gap)
    logger.info(
        f"reducible chain on {m}: {len(psi)} -> {len(phi)} -> {len(chi)} "
        f"states, composition gap {gap:.3e}"
    )
    return ReducibleChain(
        op0=step0.op,
        V1=step0.V1,
        op1=step1.op,
        V2=step1.V1,
        states={"psi": psi, "phi": phi, "chi": chi},
        second=second,
        composition_gap=gap,
    )


def _is_conjugate_pair(a: QuasiWave, b: QuasiWave) -> bool:
    return b.same_shape(a.conj(), 1e-8)


def _merge_poles(*groups: Sequence[float]) -> List[float]:
    merged: List[float] = []
    for t in sorted(t for group in groups for t in group):
        if not merged or abs(t - merged[-1]) > settings.POLE_TOL * (1 + t):
            merged.append(t)
    return merged


@dataclass(frozen=True)
class _Intermediate:
    op: FirstOrderOp
    V1: RationalPotential
    poles: List[float]
    real: bool

    @property
    def regular(self) -> bool:
        return self.real and not self.poles


def _intermediate(
    V0: RationalPotential, entry: SpectralEntry, tol: Optional[float]
) -> _Intermediate:
    op, V1 = first_order(V0, entry.wave, entry.energy, tol)
    poles = _merge_poles(
        oracle.pole_scan(V1), oracle.pole_scan(entry.wave.num)
    )
    return _Intermediate(op, V1, poles, oracle.realness_check(V1))


def classify_chain(
    V0: PotentialLike,
    psi_a: SpectralEntry,
    psi_b: SpectralEntry,
    states: Sequence[SpectralEntry] = (),
    tol: Optional[float] = None,
) -> ChainReport:
    """Classify the chain built on (psi_a, psi_b) and map ``states``.

    Both factor orders are tried. The chain is reducible when either
    order gives a real intermediate potential without poles on t > 0.
    Otherwise the reported intermediate is the one built on psi_b:
    type 1 when it is real with poles, type 2 for a conjugate pair with
    complex intermediates. A final potential with poles on t > 0 or with
    complex coefficients makes the chain invalid.
    """
    V0 = _potential(V0)
    op = second_order(V0, psi_a, psi_b, tol)
    on_a = _intermediate(V0, psi_a, tol)
    on_b = _intermediate(V0, psi_b, tol)
    v2_poles = oracle.pole_scan(op.V2)
    v2_real = oracle.realness_check(op.V2)
    conjugate = _is_conjugate_pair(psi_a.wave, psi_b.wave)
    notes = [
        f"intermediate on {psi_a.label}: poles {on_a.poles}, "
        f"real={on_a.real}",
        f"intermediate on {psi_b.label}: poles {on_b.poles}, "
        f"real={on_b.real}",
    ]
    chosen = on_b
    if v2_poles or not v2_real:
        kind = ChainKind.INVALID
        notes.append(f"final potential poles {v2_poles}, real={v2_real}")
    elif on_a.regular or on_b.regular:
        kind = ChainKind.REDUCIBLE
        chosen = on_a if on_a.regular else on_b
    elif conjugate and not on_b.real:
        kind = ChainKind.IRREDUCIBLE_TYPE2
    elif on_b.real:
        kind = ChainKind.IRREDUCIBLE_TYPE1
    else:
        kind = ChainKind.INVALID
        notes.append("complex intermediate potential without a conjugate pair")
    mapped = []
    for entry in states:
        if entry is psi_a or entry is psi_b:
            continue
        wave = apply_second_order(op, entry.wave)
        if wave.is_zero:
            continue
        mapped.append(
            _map_state(op.V2, entry, wave, f"chi{entry.index}", tol)
        )
    logger.info(
        f"chain classified {kind.value}: V1 poles {chosen.poles}, "
        f"V1 real={chosen.real}, V2 poles {v2_poles}"
    )
    return ChainReport(
        kind=kind,
        V1=chosen.V1,
        V1_poles_on_domain=chosen.poles,
        V1_real=chosen.real,
        V2=op.V2,
        V2_poles_on_domain=v2_poles,
        mapped=mapped,
        op=op,
        first=chosen.op,
        notes=notes,
    )


def indicial_gap(V: RationalPotential, f: QuasiWave) -> float:
    """``|sigma (sigma - 1) - c|`` for the centrifugal coefficient c of V."""
    return float(abs(f.sigma * (f.sigma - 1.0) - V.centrifugal))


def random_test_wave(
    a: float, rng: np.random.Generator, degree: int = 3
) -> QuasiWave:
    """A closed-family function with random real polynomial part."""
    coeffs = rng.uniform(-2.0, 2.0, degree + 1)
    coeffs[-1] = 1.0
    return QuasiWave(1.0, a, 1, 1.5, RationalT(PolyC(coeffs)))
