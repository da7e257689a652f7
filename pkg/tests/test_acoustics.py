from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spotformer.acoustics import (SOUND_SPEED, RoomBox, free_field_rtf, isotropic_covariance,
                                  simulate_rir, transfer_vector)

FS = 16000
coord = st.floats(-5, 5, allow_nan=False)


def test_rtf_unit_distance_dc():
    v = free_field_rtf([0, 0, 0], [1, 0, 0], 0.0)
    assert v == pytest.approx(0.0795775, abs=1e-7)
    assert v.imag == 0


@pytest.mark.parametrize("omega", [0.0, 100.0, 2 * np.pi * 1000, 2 * np.pi * 7999])
def test_rtf_two_metres(omega):
    v = free_field_rtf([1, 1, 1], [1, 1, 3], omega)
    assert abs(v) == pytest.approx(1 / (8 * np.pi), rel=1e-14)
    dphi = np.angle(v * np.exp(2j * omega / SOUND_SPEED))
    assert abs(dphi) < 1e-9


@given(a=st.tuples(coord, coord, coord), b=st.tuples(coord, coord, coord),
       omega=st.floats(0, 6e4))
def test_rtf_reciprocal_and_decay(a, b, omega):
    dist = np.linalg.norm(np.subtract(a, b))
    if dist < 1e-3:
        return
    v = free_field_rtf(a, b, omega)
    assert v == free_field_rtf(b, a, omega)
    assert abs(v) == pytest.approx(1 / (4 * np.pi * dist), rel=1e-12)


def test_rtf_phase_slope():
    om = np.array([1000.0, 1000.0 + 1e-3])
    v = free_field_rtf([0, 0, 0], [0.7, 0.2, 0.1], om)
    slope = np.angle(v[1] / v[0]) / 1e-3
    assert slope == pytest.approx(-np.linalg.norm([0.7, 0.2, 0.1]) / SOUND_SPEED, rel=1e-6)


def test_rtf_coincident_points():
    with pytest.raises(ValueError):
        free_field_rtf([1, 1, 1], [1, 1, 1], 10.0)


def test_transfer_vector_cases():
    x = np.array([0.0, 0.0, 0.0])
    one = transfer_vector(x, [[1, 2, 3]], 500.0)
    assert one.shape == (1,) and one[0] == free_field_rtf(x, [1, 2, 3], 500.0)
    sym = transfer_vector(x, [[1, 0, 0], [0, -1, 0]], 700.0)
    assert abs(sym[0]) == pytest.approx(abs(sym[1]))
    dc = transfer_vector(x, np.random.default_rng(0).uniform(1, 2, (4, 3)), 0.0)
    assert np.all(dc.imag == 0) and np.all(dc.real > 0)
    assert transfer_vector(x, [[1, 0, 0], [0, 1, 0]], np.array([1.0, 2.0, 3.0])).shape == (3, 2)


def test_isotropic_covariance_properties(rng):
    pos = rng.uniform(0, 3, (5, 3))
    C = isotropic_covariance(pos, 2 * np.pi * 1000)
    np.testing.assert_array_equal(np.diag(C), 1.0)
    np.testing.assert_array_equal(C, C.T)
    assert np.isrealobj(C)
    assert np.linalg.eigvalsh(C).min() >= -1e-10
    np.testing.assert_allclose(isotropic_covariance(pos, 1e-12), 1.0, atol=1e-12)
    d = np.linalg.norm(pos[0] - pos[1])
    x = 2 * np.pi * 1000 * d / SOUND_SPEED
    assert C[0, 1] == pytest.approx(np.sin(x) / x, rel=1e-12)


ROOM = RoomBox((6.0, 5.0, 3.0), t60=0.22)


def test_room_validation():
    with pytest.raises(ValueError):
        RoomBox((1.0, -1.0, 2.0))
    with pytest.raises(ValueError):
        RoomBox((6.0, 5.0, 3.0), t60=-1)
    with pytest.raises(ValueError):
        # absorption above 1 for such a short T60
        RoomBox((6.0, 5.0, 3.0), t60=0.01).reflection_coefficient()
    assert RoomBox((6.0, 5.0, 3.0)).reflection_coefficient() == 0.0


def test_anechoic_rir_direct_path():
    room = RoomBox((6.0, 5.0, 3.0))
    src, rcv = np.array([1.0, 1.0, 1.0]), np.array([3.3, 2.1, 1.4])
    d = np.linalg.norm(src - rcv)
    h = simulate_rir(room, src, rcv, FS).taps
    peak = int(np.argmax(np.abs(h)))
    assert abs(peak - round(FS * d / SOUND_SPEED)) <= 1
    assert h[peak] == pytest.approx(1 / (4 * np.pi * d), rel=0.4)
    # the fractional-delay kernel preserves the DC gain
    assert h.sum() == pytest.approx(1 / (4 * np.pi * d), rel=1e-3)


def test_arrival_difference_one_metre():
    room = RoomBox((6.0, 5.0, 3.0))
    src = np.array([1.0, 2.0, 1.5])
    h1 = simulate_rir(room, src, src + [1, 0, 0], FS).taps
    h2 = simulate_rir(room, src, src + [2, 0, 0], FS).taps
    assert int(np.argmax(np.abs(h2))) - int(np.argmax(np.abs(h1))) == round(FS / SOUND_SPEED)


def schroeder_t60(h, fs, lo=-5.0, hi=-25.0):
    """T60 extrapolated from a T20 line fit of the backward-integrated decay."""
    h = np.trim_zeros(h, "b")
    edc = np.cumsum(h[::-1] ** 2)[::-1]
    edc_db = 10 * np.log10(edc / edc[0])
    idx = np.flatnonzero((edc_db <= lo) & (edc_db >= hi))
    slope, _ = np.polyfit(idx / fs, edc_db[idx], 1)
    return -60.0 / slope


def test_reverberant_rir_t60():
    h = simulate_rir(ROOM, [1.5, 1.2, 1.3], [4.1, 3.3, 1.6], FS).taps
    assert schroeder_t60(h, FS) == pytest.approx(0.22, rel=0.2)


def test_rir_reciprocity():
    a, b = np.array([1.5, 1.2, 1.3]), np.array([4.1, 3.3, 1.6])
    h_ab = simulate_rir(ROOM, a, b, FS).taps
    h_ba = simulate_rir(ROOM, b, a, FS).taps
    np.testing.assert_allclose(h_ab, h_ba, atol=1e-9)


def test_rir_rejects_points_outside():
    with pytest.raises(ValueError):
        simulate_rir(ROOM, [7, 1, 1], [1, 1, 1], FS)
