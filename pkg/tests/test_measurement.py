import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phaseless_sr.measurement import (
    RANDOM,
    THEOREM2_MASKS,
    HermitianBand,
    MeasurementSet,
    band_from_masks,
    random_measurements,
    theorem2_masks,
)


def random_vector(m, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(m) + 1j * rng.standard_normal(m)


def band_of(X):
    Q = np.outer(X, X.conj())
    return np.real(np.diag(Q)), np.diag(Q, 1)


# ---- mask family


def test_masks_on_all_ones():
    ms = theorem2_masks(np.ones(3))
    np.testing.assert_allclose(ms.magnitudes, [1, 1, 1, 2, 2, np.sqrt(2), np.sqrt(2)], atol=1e-15)
    assert ms.q == 7 and ms.kind == THEOREM2_MASKS


def test_masks_on_one_i():
    # |1 + i| = sqrt 2, |1 - i * i| = 2
    np.testing.assert_allclose(theorem2_masks([1, 1j]).magnitudes, [1, 1, np.sqrt(2), 2], atol=1e-15)


@given(st.integers(2, 40), st.integers(0, 1000))
def test_mask_count_is_3m_minus_2(m, seed):
    assert theorem2_masks(random_vector(m, seed)).q == 3 * m - 2


def test_masks_need_two_frequencies():
    with pytest.raises(ValueError):
        theorem2_masks([1.0])


def test_mask_vectors_reproduce_magnitudes():
    X = random_vector(6, 2)
    ms = theorem2_masks(X)
    expect = np.r_[np.abs(X), np.abs(X[:-1] + X[1:]), np.abs(X[:-1] - 1j * X[1:])]
    np.testing.assert_allclose(ms.magnitudes, expect, atol=1e-13)
    np.testing.assert_allclose(ms.measure(X), ms.magnitudes, atol=1e-13)


# ---- random family


def test_random_on_zero_signal():
    ms = random_measurements(np.zeros(8), 20, 0)
    assert ms.kind == RANDOM and ms.q == 20
    np.testing.assert_array_equal(ms.magnitudes, 0.0)


@given(st.floats(0, 2 * np.pi), st.integers(0, 1000))
def test_magnitudes_invariant_under_global_phase(theta, seed):
    X = random_vector(8, seed)
    rot = np.exp(1j * theta) * X
    np.testing.assert_allclose(random_measurements(rot, 12, seed).magnitudes,
                               random_measurements(X, 12, seed).magnitudes, atol=1e-12)
    np.testing.assert_allclose(theorem2_masks(rot).magnitudes, theorem2_masks(X).magnitudes, atol=1e-12)


def test_random_self_consistent():
    X = random_vector(10, 4)
    ms = random_measurements(X, 30, 7)
    direct = [abs(sum(np.conj(a[f]) * X[f] for f in range(10))) for a in ms.vectors]
    np.testing.assert_allclose(ms.magnitudes, direct, atol=1e-12)


def test_random_is_deterministic_and_gaussian_scaled():
    X = random_vector(16, 0)
    a, b = random_measurements(X, 2000, 3), random_measurements(X, 2000, 3)
    np.testing.assert_array_equal(a.vectors, b.vectors)
    # standard complex normal: E|a_f|^2 = 1
    assert abs(np.mean(np.abs(a.vectors) ** 2) - 1) < 0.02


def test_random_rejects_q_zero():
    with pytest.raises(ValueError):
        random_measurements(np.ones(4), 0, 0)


# ---- band recovery


def test_band_of_one_i():
    band = band_from_masks(theorem2_masks([1, 1j]))
    np.testing.assert_allclose(band.diag, [1, 1], atol=1e-14)
    np.testing.assert_allclose(band.superdiag, [-1j], atol=1e-14)


def test_band_of_all_ones():
    band = band_from_masks(theorem2_masks(np.ones(5)))
    np.testing.assert_allclose(band.diag, 1, atol=1e-14)
    np.testing.assert_allclose(band.superdiag, 1, atol=1e-14)


@given(st.integers(2, 24), st.integers(0, 10_000))
def test_band_equals_gram_band(m, seed):
    X = random_vector(m, seed)
    band = band_from_masks(theorem2_masks(X))
    d, s = band_of(X)
    np.testing.assert_allclose(band.diag, d, atol=1e-10 * max(1, d.max()))
    np.testing.assert_allclose(band.superdiag, s, atol=1e-10 * max(1, d.max()))


def test_band_closed_form_identities():
    X = random_vector(8, 1)
    ms = theorem2_masks(X)
    m = 8
    b2 = ms.magnitudes**2
    d = b2[:m]
    re = (b2[m : 2 * m - 1] - d[:-1] - d[1:]) / 2
    im = (d[:-1] + d[1:] - b2[2 * m - 1 :]) / 2
    band = band_from_masks(ms)
    np.testing.assert_allclose(band.superdiag, re + 1j * im, atol=1e-12)


def test_band_rejects_random_measurements():
    with pytest.raises(ValueError):
        band_from_masks(random_measurements(np.ones(4), 10, 0))


def test_band_rejects_inconsistent_magnitudes():
    ms = theorem2_masks(np.ones(3))
    bad = MeasurementSet(ms.vectors, np.r_[ms.magnitudes[:3], 5.0, 2.0, 0.0, 0.0], THEOREM2_MASKS)
    with pytest.raises(ValueError):
        band_from_masks(bad)


def test_band_rejects_underdetermined_masks():
    ms = theorem2_masks(np.ones(3))
    partial = MeasurementSet(ms.vectors[:5], ms.magnitudes[:5], THEOREM2_MASKS)
    with pytest.raises(ValueError):
        band_from_masks(partial)


def test_hermitian_band_invariants():
    with pytest.raises(ValueError):
        HermitianBand([1, -1], [0])
    with pytest.raises(ValueError):
        HermitianBand([1, 1], [2])
    with pytest.raises(ValueError):
        HermitianBand([1, 1, 1], [0])
    HermitianBand([1, 1], [1 + 1e-12])  # within the Cauchy-Schwarz slack


# ---- type invariants and serialization


def test_measurement_set_invariants():
    with pytest.raises(ValueError):
        MeasurementSet(np.ones((3, 2)), [1, 1], RANDOM)
    with pytest.raises(ValueError):
        MeasurementSet(np.ones((2, 2)), [1, -1], RANDOM)
    with pytest.raises(ValueError):
        MeasurementSet(np.ones((2, 2)), [1, 1], "other")


def test_measurement_json_round_trip():
    ms = random_measurements(random_vector(5, 0), 4, 1)
    d = json.loads(json.dumps(ms.to_dict()))
    assert set(d) == {"kind", "m", "vectors", "magnitudes"}
    back = MeasurementSet.from_dict(d)
    np.testing.assert_array_equal(back.vectors, ms.vectors)
    np.testing.assert_array_equal(back.magnitudes, ms.magnitudes)
    assert back.kind == ms.kind
