import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path to import from qesdx
sys.path.insert(0, str(Path(__file__).parent.parent))

from qesdx.exceptions import DegeneratePairError, TransformationFunctionError
from qesdx.services import oracle
from qesdx.services.darboux import (
    ChainKind,
    apply_adjoint,
    apply_first_order,
    apply_second_order,
    bracket_state,
    chain_superpotential,
    classify_chain,
    first_order,
    first_order_chain,
    indicial_gap,
    reducible_chain,
    reverse_map,
    second_order,
)
from qesdx.services.qpoly import (
    PolyC,
    QuasiWave,
    RationalPotential,
    RationalT,
    poly_roots,
)
from qesdx.services.sextic import (
    build_model,
    complex_solutions,
    qes_spectrum,
)


@pytest.fixture(scope="module")
def model():
    return build_model(0.5, 2, 2)


@pytest.fixture(scope="module")
def spectrum(model):
    return qes_spectrum(model)


def test_ground_state_step_of_single_state_model():
    """M = 0: V1 = a**2 x**6 - 4a(s-1) x**2 + (4s**2 - 1/4)/x**2."""
    a, s = 1.0, 2.0
    m = build_model(a, s, 0)
    psi = qes_spectrum(m)[0]
    op, V1 = first_order(m, psi.wave, psi.energy)
    expected = RationalT([4 * s * s - 0.25, 0, -4 * a * (s - 1), 0, a * a])
    expected = expected.times_t(-1)
    assert oracle.rational_gap(V1.rat, expected) < 1e-12
    assert op.alpha == 0


def test_first_order_rejects_non_solutions(model, spectrum):
    psi0 = spectrum[0]
    with pytest.raises(TransformationFunctionError):
        first_order(model, psi0.wave, psi0.energy + 1.0)


def test_first_order_maps_sector_states(model, spectrum):
    """psi0 is annihilated; psi1 and psi2 map to the V1 eigenfunctions."""
    op, V1 = first_order(model, spectrum[0].wave, spectrum[0].energy)
    assert apply_first_order(op, spectrum[0].wave).is_zero
    den = [-2.0, -4.0]
    phi1 = QuasiWave(1.0, 0.5, 1, 4.5, RationalT([10, 6, 1], den))
    phi2 = QuasiWave(1.0, 0.5, 1, 4.5, RationalT([-8, 0, 1], den))
    assert apply_first_order(op, spectrum[1].wave).same_shape(phi1, 1e-9)
    assert apply_first_order(op, spectrum[2].wave).same_shape(phi2, 1e-9)


def test_adjoint_returns_shifted_energy(model, spectrum):
    """L+ L psi_N = (E_N - E_0) psi_N."""
    op, _ = first_order(model, spectrum[0].wave, spectrum[0].energy)
    for N, factor in ((1, 12.0), (2, 24.0)):
        psi = spectrum[N].wave
        back = apply_adjoint(op, apply_first_order(op, psi))
        assert back.same_shape(psi, 1e-9)
        assert back.scale / psi.scale == pytest.approx(factor)
    assert apply_adjoint(op, QuasiWave(0.0, 0.5, 1, 0.0)).is_zero
    step = first_order_chain(model, spectrum[0], spectrum)
    images = reverse_map(step.op, step.mapped)
    for image, psi in zip(images, spectrum[1:]):
        assert image.same_shape(psi.wave, 1e-9)


def test_reducible_chain_matches_closed_forms(model):
    """V1, phi1, phi2 and chi2 of the two ground-state steps at s = 2."""
    chain = reducible_chain(model)
    V1 = (
        RationalT(PolyC([0, -6, 0, 0.25]))
        + RationalT.inverse_t_power(1, 15.75)
        + RationalT([16], [-2.0])
        + RationalT([-8], [-4.0])
        + RationalT([-16], [-2.0, -2.0])
        + RationalT([-32], [-4.0, -4.0])
        + RationalT([-24], [-2.0, -4.0])
    )
    assert oracle.rational_gap(chain.V1.rat, V1) < 1e-9

    phi = {e.label: e for e in chain.states["phi"]}
    den = [-2.0, -4.0]
    assert phi["phi1"].wave.same_shape(
        QuasiWave(1.0, 0.5, 1, 4.5, RationalT([10, 6, 1], den)), 1e-9
    )
    assert phi["phi2"].wave.same_shape(
        QuasiWave(1.0, 0.5, 1, 4.5, RationalT([-8, 0, 1], den)), 1e-9
    )

    [chi2] = chain.states["chi"]
    assert chi2.energy == pytest.approx(12.0)
    expected = QuasiWave(1.0, 0.5, 1, 5.5, RationalT([1], [-3 + 1j, -3 - 1j]))
    assert chi2.wave.same_shape(expected, 1e-9)
    assert chi2.physical
    assert chain.composition_gap < 1e-9
    assert [len(chain.states[k]) for k in ("psi", "phi", "chi")] == [3, 2, 1]


def test_second_step_superpotential_from_sector_data(model, spectrum):
    """W1 = -W0 + (E1 - E0) P0 P1 / W(P0, P1) equals the step on phi1."""
    chain = reducible_chain(model)
    W1 = chain_superpotential(spectrum[0], spectrum[1], chain.op0.W)
    assert oracle.rational_gap(W1.g, chain.op1.W.g) < 1e-9


def test_bracket_state_agrees_with_second_order(model, spectrum):
    chain = reducible_chain(model)
    chi2 = bracket_state(model, spectrum[0], spectrum[1], spectrum[2])
    assert chi2.same_shape(chain.states["chi"][0].wave, 1e-8)


def test_second_order_on_sector_pair(model, spectrum):
    op = second_order(model, spectrum[0], spectrum[1])
    assert apply_second_order(op, spectrum[0].wave).is_zero
    assert apply_second_order(op, spectrum[1].wave).is_zero
    roots = sorted(
        (r for r in op.V2.rat.den_roots if r != 0), key=lambda z: z.imag
    )
    assert np.allclose(roots, [-3 - 1j, -3 - 1j, -3 + 1j, -3 + 1j])
    with pytest.raises(DegeneratePairError):
        second_order(model, spectrum[0].wave, spectrum[0].wave.scaled(2.0))


@pytest.mark.parametrize("s", [0.25, 0.75])
def test_final_potentials_match_printed_forms(s):
    """Reducible V2 and its sign-flipped type-1 analogue on a 40-point
    grid."""
    r = math.sqrt(4 * s + 1)
    m = build_model(0.5, s, 2)
    spectrum = qes_spectrum(m)
    x = np.linspace(0.2, 3.0, 40)
    t = x * x
    for sign, pair in ((1.0, (0, 1)), (-1.0, (1, 2))):
        op = second_order(m, spectrum[pair[0]], spectrum[pair[1]])
        q = t * t + 2 * sign * r * t + 4 * s + 2
        printed = (
            t**3 / 4
            - (2 * s - 1) * t
            + 8 * s / t
            + 8 * (t - sign * r) / q
            - 32 * t / q**2
        )
        assert np.allclose(op.V2.evaluate(x).real, printed, rtol=1e-9)


def test_final_centrifugal_term_follows_indicial_equation(model, spectrum):
    """At s = 2 the 1/x**2 coefficient is sigma (sigma - 1) for
    sigma = 2s + 3/2, not 8s."""
    op = second_order(model, spectrum[0], spectrum[1])
    assert op.V2.centrifugal.real == pytest.approx(24.75)
    assert op.V2.centrifugal.real != pytest.approx(16.0)
    chi2 = apply_second_order(op, spectrum[2].wave)
    assert chi2.sigma == pytest.approx(5.5)
    assert indicial_gap(op.V2, chi2) < 1e-9


def test_classify_reducible_pair(model, spectrum):
    report = classify_chain(model, spectrum[0], spectrum[1], spectrum)
    assert report.kind is ChainKind.REDUCIBLE
    assert report.V1_poles_on_domain == []
    assert report.V1_real
    assert [e.label for e in report.mapped] == ["chi2"]


def test_classify_first_type(model, spectrum):
    """(psi1, psi2) at s = 2: intermediate poles at t = 2, 4; final V2
    regular with chi0 as its only analytic state."""
    report = classify_chain(model, spectrum[1], spectrum[2], spectrum)
    assert report.kind is ChainKind.IRREDUCIBLE_TYPE1
    assert np.allclose(report.V1_poles_on_domain, [2.0, 4.0], atol=1e-8)
    assert report.V2_poles_on_domain == []
    assert oracle.realness_check(report.V2)
    [chi0] = report.mapped
    assert chi0.energy == pytest.approx(-12.0)
    expected = QuasiWave(1.0, 0.5, 1, 5.5, RationalT([1], [3 + 1j, 3 - 1j]))
    assert chi0.wave.same_shape(expected, 1e-9)


def test_intermediate_of_first_type_matches_printed_form(model, spectrum):
    report = classify_chain(model, spectrum[1], spectrum[2])
    V1 = (
        RationalT(PolyC([0, -6, 0, 0.25]))
        + RationalT.inverse_t_power(1, 15.75)
        + RationalT([16], [2.0])
        + RationalT([-8], [4.0])
        + RationalT([16], [2.0, 2.0])
        + RationalT([32], [4.0, 4.0])
        + RationalT([24], [2.0, 4.0])
    )
    assert oracle.rational_gap(report.V1.rat, V1) < 1e-9


def test_classify_non_adjacent_pair_is_invalid(model, spectrum):
    """W(psi0, psi2) vanishes at t = sqrt(8)."""
    report = classify_chain(model, spectrum[0], spectrum[2])
    assert report.kind is ChainKind.INVALID
    assert np.allclose(report.V2_poles_on_domain, [math.sqrt(8)])


def test_classify_second_type():
    """The conjugate pair of (1/2, 2, 0) gives a real regular final
    potential through a complex intermediate one."""
    m = build_model(0.5, 2, 0)
    low, high = complex_solutions(m)[0]
    states = qes_spectrum(m)
    report = classify_chain(m, low, high, states)
    assert report.kind is ChainKind.IRREDUCIBLE_TYPE2
    assert not report.V1_real
    assert report.V2_poles_on_domain == []
    assert oracle.realness_check(report.V2)
    assert oracle.is_purely_imaginary(report.op.wron)

    quartic = poly_roots(PolyC([20, 0, 4, 0, 1]))
    nu2 = (
        RationalT(PolyC([0, 1, 0, 0.25]))
        + RationalT.inverse_t_power(1, 0.75)
        + RationalT(PolyC([0, -96, 0, 16]), quartic)
        + RationalT(PolyC([0, 0, 0, -2048]), quartic + quartic)
    )
    assert oracle.rational_gap(report.V2.rat, nu2) < 1e-9

    [image] = report.mapped
    assert image.energy == 0
    expected = QuasiWave(1.0, 0.5, 1, 1.5, RationalT([6, 0, 1], quartic))
    assert image.wave.same_shape(expected, 1e-9)
    assert image.physical


def test_first_order_chain_on_complex_state_is_complex():
    m = build_model(0.5, 2, 0)
    low, _ = complex_solutions(m)[0]
    step = first_order_chain(m, low)
    assert not step.real
    assert not oracle.realness_check(step.V1)


def test_potential_is_unchanged_by_source_scale(model, spectrum):
    psi = spectrum[0]
    _, V1 = first_order(model, psi.wave, psi.energy)
    _, V1_scaled = first_order(model, psi.wave.scaled(3 - 2j), psi.energy)
    assert isinstance(V1_scaled, RationalPotential)
    assert oracle.rational_gap(V1.rat, V1_scaled.rat) < 1e-12


def test_transformed_potentials_keep_the_sextic_term(model, spectrum):
    """Every step changes V by a rational term that vanishes at large x,
    so the x**6 coefficient stays a**2."""
    chain = reducible_chain(model)
    first = classify_chain(model, spectrum[1], spectrum[2])
    m = build_model(0.5, 2, 0)
    low, high = complex_solutions(m)[0]
    second = classify_chain(m, low, high)
    for V in (chain.V1, chain.V2, first.V1, first.V2, second.V1, second.V2):
        assert V.leading == pytest.approx(0.25, rel=1e-9)


@pytest.mark.parametrize("s, M", [(2, 4), (2, 5), (2, 6), (0.25, 4), (1, 5)])
def test_reducible_chain_on_larger_sectors(s, M):
    m = build_model(0.5, s, M)
    chain = reducible_chain(m)
    assert chain.composition_gap < 1e-8
    assert [len(chain.states[k]) for k in ("psi", "phi", "chi")] == [
        M + 1,
        M,
        M - 1,
    ]
    for entry in chain.states["phi"]:
        assert oracle.residual(chain.V1, entry.energy, entry.wave).passed
    for entry in chain.states["chi"]:
        assert oracle.residual(chain.V2, entry.energy, entry.wave).passed
        assert entry.physical
    psi = chain.states["psi"]
    report = classify_chain(m, psi[0], psi[1])
    assert report.kind is ChainKind.REDUCIBLE
    assert oracle.rational_gap(report.V2.rat, chain.V2.rat) < 1e-8
