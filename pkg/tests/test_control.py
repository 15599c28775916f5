import dataclasses
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from beamdelay.control import (
    Actuation,
    FeedbackGain,
    SynthesisError,
    ackermann,
    closed_loop,
    is_hurwitz,
    place_poles,
    spectral_abscissa_margin,
)
from beamdelay.model import assemble
from beamdelay.spectral import BeamParams

from .conftest import PRINTED_K_LEFT, TARGET_POLES


def residue_gain(a, b, poles):
    """Gain for diagonal ``A`` from the partial-fraction form of ``det(sI - A - b k)``."""
    p = np.poly(poles)
    k = np.empty(len(a))
    for i, ai in enumerate(a):
        others = np.prod([ai - aj for j, aj in enumerate(a) if j != i])
        k[i] = -np.polyval(p, ai).real / (b[i] * others)
    return k


def sorted_eigs(F):
    return np.sort_complex(np.linalg.eigvals(F))


def test_left_gain_reproduces_printed_row(gain_left):
    assert np.abs(gain_left.K - PRINTED_K_LEFT).max() < 0.01
    assert np.all(gain_left.K[1] == 0)


def test_right_gain_is_mirror_of_left(sec6_model, gain_left):
    right = place_poles(sec6_model, "right", TARGET_POLES)
    n = np.repeat(np.arange(1, 3), 2)
    mirror = -((-1.0) ** n)
    assert np.allclose(right.K[1], gain_left.K[0] * mirror, rtol=1e-8, atol=1e-10)
    assert np.all(right.K[0] == 0)


@pytest.mark.parametrize("actuation", ["left", "right", "both"])
def test_spectrum_contract(sec6_model, actuation):
    gain = place_poles(sec6_model, actuation, TARGET_POLES)
    eig = sorted_eigs(closed_loop(sec6_model, gain))
    assert np.abs(eig - np.array([-8, -7, -6, -5])).max() < 1e-6


def test_ackermann_matches_residue_oracle(sec6_model):
    a = np.diag(sec6_model.A)
    b = sec6_model.B[:, 0]
    assert np.allclose(ackermann(sec6_model.A, b, TARGET_POLES), residue_gain(a, b, TARGET_POLES), rtol=1e-9)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-60, 5), min_size=2, max_size=6, unique=True),
    st.lists(st.floats(0.2, 3.0), min_size=6, max_size=6),
    st.lists(st.floats(-20, -0.5), min_size=6, max_size=6, unique=True),
)
def test_ackermann_property(a, b, poles):
    n = len(a)
    a = np.array(a)
    assume(np.min(np.abs(a[:, None] - a[None, :]) + np.eye(n) * 1e9) > 0.5)
    b = np.array(b[:n])
    poles = np.array(poles[:n])
    k = ackermann(np.diag(a), b, poles)
    ref = residue_gain(a, b, poles)
    # targets may coincide with open-loop eigenvalues, making entries exactly zero
    assert np.allclose(k, ref, rtol=1e-6, atol=1e-8 * max(1.0, np.abs(ref).max()))


@settings(max_examples=25, deadline=None)
@given(
    st.builds(BeamParams, alpha=st.floats(1.1, 4.0), beta0=st.floats(0.0, 300.0), gamma=st.floats(1.0, 100.0)),
    st.lists(st.floats(-12.0, -1.0), min_size=4, max_size=4, unique=True),
)
def test_two_input_placement_property(p, poles):
    poles = np.sort(poles)
    assume(np.min(np.diff(poles)) > 0.2)
    m = assemble(p, 2)
    gain = place_poles(m, Actuation.BOTH, poles)
    eig = np.sort(np.linalg.eigvals(closed_loop(m, gain)).real)
    assert np.abs(eig - poles).max() < 1e-6 * max(1.0, np.abs(poles).max())


def test_complex_conjugate_targets(sec6_model):
    poles = [-5 + 1j, -5 - 1j, -7.0, -8.0]
    gain = place_poles(sec6_model, "left", poles)
    assert np.isrealobj(gain.K)
    assert np.abs(sorted_eigs(closed_loop(sec6_model, gain)) - np.sort_complex(np.array(poles))).max() < 1e-6


def test_ill_conditioned_placement_falls_back_to_charpoly(sec6):
    m = assemble(sec6, 3)
    poles = [-5.0, -6.0, -7.0, -8.0, -9.0, -10.0]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        gain = place_poles(m, "left", poles)
    assert np.allclose(np.poly(closed_loop(m, gain)), np.poly(poles), rtol=1e-7)
    assert np.allclose(gain.K[0], residue_gain(np.diag(m.A), m.B[:, 0], poles), rtol=1e-8)
    assert all(issubclass(w.category, RuntimeWarning) for w in caught)


@pytest.mark.parametrize(
    "poles,match",
    [([-1.0, -2.0, -3.0], "expected 4"), ([-1.0, -2.0, -3.0, 0.0], "negative"), ([-1 + 1j, -2.0, -3.0, -4.0], "conjugation")],
)
def test_pole_validation(sec6_model, poles, match):
    with pytest.raises(ValueError, match=match):
        place_poles(sec6_model, "both", poles)


def test_uncontrollable_raises(sec6_model):
    broken = dataclasses.replace(sec6_model, B=np.column_stack([np.zeros(4), sec6_model.B[:, 1]]))
    with pytest.raises(SynthesisError):
        place_poles(broken, "left", TARGET_POLES)
    place_poles(broken, "right", TARGET_POLES)


def test_feedback_gain_validation():
    with pytest.raises(ValueError):
        FeedbackGain(np.ones((2, 4)), Actuation.LEFT, np.array(TARGET_POLES))
    with pytest.raises(ValueError):
        FeedbackGain(np.ones(4), Actuation.BOTH, np.array(TARGET_POLES))


def test_closed_loop_helpers(sec6_model, gain_both):
    F = closed_loop(sec6_model, gain_both)
    assert spectral_abscissa_margin(F) == pytest.approx(5.0, abs=1e-6)
    assert is_hurwitz(F) and not is_hurwitz(sec6_model.A)
    with pytest.raises(ValueError):
        closed_loop(sec6_model, np.zeros((2, 6)))


def test_open_loop_spectrum_gives_zero_gain():
    # beta below pi^4 keeps every mode stable, so A's own spectrum is an admissible target
    m = assemble(BeamParams(1.5, 5.0, 5.0), 2)
    for actuation in ("left", "right"):
        gain = place_poles(m, actuation, np.diag(m.A))
        assert np.abs(gain.K).max() < 1e-8


@pytest.mark.parametrize("actuation", ["left", "both"])
def test_placement_is_idempotent(sec6_model, actuation):
    gain = place_poles(sec6_model, actuation, TARGET_POLES)
    shifted = dataclasses.replace(sec6_model, A=closed_loop(sec6_model, gain))
    again = place_poles(shifted, actuation, np.linalg.eigvals(shifted.A).real)
    assert np.abs(again.K).max() < 1e-8 * max(1.0, np.abs(gain.K).max())
