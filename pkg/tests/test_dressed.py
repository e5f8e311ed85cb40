import numpy as np
import pytest
from hypothesis import given, strategies as st

from phaselimit.dressed import (
    AmbiguousMatchError, DressedFamily, NonHermitianError, diagonalize, jacobi_eigh, match_eigenstates,
)
from phaselimit.fixtures import lambda_scheme, two_level

from oracles import mp_eigvals


def random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (a + a.conj().T) / 2


def test_two_level_textbook_matrix():
    fam = DressedFamily.from_scheme(two_level(3.0, 4.0))
    h = fam.hamiltonian().matrix
    assert np.allclose(h, [[0, 2], [2, 3]], atol=1e-12)
    ds = fam.at()
    assert np.allclose(ds.energies, [-1, 4], atol=1e-12)
    assert np.allclose(np.abs(ds.vectors[:, 0]) ** 2, [0.8, 0.2])


def test_lambda_dark_state():
    fam = DressedFamily.from_scheme(lambda_scheme(), anchor="1")
    ds = fam.at()
    assert np.allclose(ds.energies, [-1, 0, 1], atol=1e-12)
    dark = ds.vectors[:, 1]
    assert abs(dark[ds.levels.index("2")]) < 1e-14
    assert np.allclose(np.abs(dark) ** 2, [0.5, 0, 0.5], atol=1e-14)


def test_degenerate_zero_coupling_limit():
    ds = diagonalize(np.diag([0.0, 0.0, 1.0]))
    assert np.allclose(ds.energies, [0, 0, 1])
    assert len(ds.clusters()) == 2


def test_random_hermitian_unitarity_and_residual():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(1, 13))
        h = random_hermitian(rng, n)
        ds = diagonalize(h)
        v = ds.vectors
        scale = max(np.linalg.norm(h, 2), 1.0)
        assert np.max(np.abs(v.conj().T @ v - np.eye(n))) < 1e-12
        assert np.max(np.abs(h @ v - v * ds.energies)) < 1e-12 * scale
        assert abs(np.sum(ds.energies) - np.trace(h).real) < 1e-12 * n * scale
        assert np.all(np.diff(ds.energies) >= 0)


def test_eigenvalues_against_extended_precision():
    rng = np.random.default_rng(8)
    for _ in range(30):
        n = int(rng.integers(2, 7))
        h = random_hermitian(rng, n)
        ref = np.array([float(x) for x in mp_eigvals(h)])
        assert np.allclose(diagonalize(h).energies, ref, rtol=0, atol=1e-12 * np.abs(ref).max())


def test_permutation_invariance():
    rng = np.random.default_rng(9)
    for _ in range(50):
        n = int(rng.integers(2, 9))
        h = random_hermitian(rng, n)
        p = rng.permutation(n)
        assert np.allclose(diagonalize(h).energies, diagonalize(h[np.ix_(p, p)]).energies, atol=1e-12)


@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_jacobi_matches_lapack(n, seed):
    h = random_hermitian(np.random.default_rng(seed), n)
    w, v = jacobi_eigh(h)
    assert np.allclose(w, np.linalg.eigvalsh(h), atol=1e-12 * max(1.0, np.abs(w).max()))
    assert np.allclose(v.conj().T @ v, np.eye(n), atol=1e-12)
    assert np.allclose(h @ v, v * w, atol=1e-11 * max(1.0, np.abs(w).max()))


def test_gauge_first_component_real_positive():
    rng = np.random.default_rng(10)
    ds = diagonalize(random_hermitian(rng, 5))
    for m in range(5):
        first = ds.vectors[np.argmax(np.abs(ds.vectors[:, m]) > 1e-12), m]
        assert abs(first.imag) < 1e-14 and first.real > 0


def test_non_hermitian_rejected():
    with pytest.raises(NonHermitianError):
        diagonalize(np.array([[0, 1], [0, 0]], complex))


def test_matching_tracks_states_across_photon_step():
    fam = DressedFamily.from_scheme(lambda_scheme(), anchor="1")
    a, b = fam.at(), fam.at(fam.mean_photons + [1, 0])
    m = match_eigenstates(a, b)
    assert list(m.perm) == [0, 1, 2]
    assert np.all(m.overlaps > 1 - 1e-6)


def test_matching_reorders_permuted_system():
    rng = np.random.default_rng(11)
    h = random_hermitian(rng, 4)
    a = diagonalize(h)
    b = diagonalize(h + 1e-9 * random_hermitian(rng, 4))
    m = match_eigenstates(a, b)
    assert list(m.perm) == [0, 1, 2, 3]


def test_matching_refuses_unrelated_systems():
    a = diagonalize(np.array([[0, 0], [0, 1.0]]))
    b = diagonalize(np.array([[0.5, 0.5], [0.5, 0.5]]))
    with pytest.raises(AmbiguousMatchError):
        match_eigenstates(a, b)


def test_family_caches_and_rejects_bragg():
    from phaselimit.fixtures import bragg_two_level
    fam = DressedFamily.from_scheme(two_level())
    assert fam.at() is fam.at()
    with pytest.raises(ValueError, match="Bragg"):
        DressedFamily.from_scheme(bragg_two_level())
