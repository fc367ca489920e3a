import numpy as np
import pytest

from dddflow import elasticity as EL
from dddflow.errors import NearSingularError


def lame_components(lam, mu):
    d = np.eye(3)
    return (
        lam * np.einsum("ij,kl->ijkl", d, d)
        + mu * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d))
    )


def test_isotropic_entries():
    C = EL.make_isotropic(1.0, 1.0)
    assert C.c[0, 0, 0, 0] == pytest.approx(3.0)
    assert C.c[0, 0, 1, 1] == pytest.approx(1.0)
    assert C.c[0, 1, 0, 1] == pytest.approx(1.0)
    assert EL.validate_symmetries(C)
    C0 = EL.make_isotropic(0.0, 1.0)
    assert C0.c[0, 0, 1, 1] == 0.0


def test_isotropic_preconditions():
    with pytest.raises(ValueError):
        EL.make_isotropic(1.0, 0.0)
    with pytest.raises(ValueError):
        EL.make_isotropic(-3.0, 1.0)  # lambda + 2 mu <= 0


def test_symmetry_validation_catches_single_entry():
    arr = lame_components(1.0, 1.0)
    arr[0, 0, 0, 1] = 0.1
    assert not EL.validate_symmetries(EL.ElasticityTensor(arr))
    zero = EL.ElasticityTensor(np.zeros((3, 3, 3, 3)))
    assert EL.validate_symmetries(zero)
    assert zero.lh_constant == 0.0


def test_lh_estimate_isotropic():
    C = EL.make_isotropic(1.0, 1.0)
    # infimum is mu = 1, attained at v perpendicular to k
    vals = [EL.estimate_lh_constant(C, n) for n in (64, 512, 4096)]
    for v in vals:
        assert 1.0 <= v <= 1.05
    assert vals[0] >= vals[1] >= vals[2]


def test_lh_estimate_detects_violation():
    # lambda = -3, mu = 1 violates lambda + 2 mu > 0 at v parallel to k
    bad = EL.ElasticityTensor(lame_components(-3.0, 1.0))
    assert EL.estimate_lh_constant(bad, 4096) < 0.0


def test_acoustic_tensor_isotropic_axis():
    lam, mu = 2.0, 0.5
    C = EL.make_isotropic(lam, mu)
    D = EL.acoustic_tensor(C, np.array([1.0, 0.0, 0.0]))
    assert np.allclose(D.matrix, np.diag([lam + 2 * mu, mu, mu]))
    with pytest.raises(ValueError):
        EL.acoustic_tensor(C, np.zeros(3))


def test_acoustic_tensor_two_homogeneous(rng):
    C = EL.make_isotropic(1.3, 0.7)
    k = rng.normal(size=3)
    D1 = EL.acoustic_tensor(C, k).matrix
    D2 = EL.acoustic_tensor(C, 2 * k).matrix
    assert np.allclose(D2, 4 * D1, rtol=1e-13)


def test_acoustic_eigenvalues_rotation_invariant():
    C = EL.make_isotropic(1.0, 1.0)
    D = EL.acoustic_tensor(C, np.array([1.0, 1.0, 0.0]) / np.sqrt(2))
    assert np.allclose(np.sort(np.linalg.eigvalsh(D.matrix)), [1.0, 1.0, 3.0])


def test_acoustic_inverse_diagonal():
    D = EL.AcousticTensor(np.diag([3.0, 1.0, 1.0]), np.array([1.0, 0, 0]))
    assert np.allclose(EL.acoustic_inverse(D), np.diag([1 / 3, 1.0, 1.0]))


def test_acoustic_inverse_closed_form(rng):
    lam, mu = 1.7, 0.6
    C = EL.make_isotropic(lam, mu)
    for _ in range(1000):
        z = rng.normal(size=3)
        z /= np.linalg.norm(z)
        got = EL.acoustic_inverse(EL.acoustic_tensor(C, z))
        want = EL.isotropic_acoustic_inverse(lam, mu, z)
        assert np.abs(got - want).max() < 1e-12


def test_acoustic_inverse_near_singular():
    bad = EL.ElasticityTensor(lame_components(-3.0, 1.0))
    # v parallel to k direction makes D indefinite
    with pytest.raises(NearSingularError):
        EL.acoustic_inverse(EL.acoustic_tensor(bad, np.array([1.0, 0.0, 0.0])))


def test_acoustic_inverse_many_directions(rng):
    C = EL.make_isotropic(0.8, 1.2)
    assert EL.validate_symmetries(C) and C.lh_constant > 0
    z = rng.normal(size=(10000, 3))
    z /= np.linalg.norm(z, axis=1)[:, None]
    for zi in z:
        EL.acoustic_inverse(EL.acoustic_tensor(C, zi))


def test_inverse_minus_one_homogeneity(rng):
    C = EL.make_isotropic(1.0, 2.0)
    for s in (-2.0, 0.5, 10.0):
        k = rng.normal(size=3)
        a = EL.acoustic_inverse(EL.acoustic_tensor(C, s * k)) * (s * k)[None, :]
        b = EL.acoustic_inverse(EL.acoustic_tensor(C, k)) * k[None, :] / s
        assert np.abs(a - b).max() <= 1e-10 * np.abs(b).max()


def test_from_components_roundtrip():
    vals = lame_components(1.0, 1.0).ravel()
    C = EL.from_components(vals.tolist())
    assert EL.validate_symmetries(C)
    with pytest.raises(ValueError):
        EL.from_components([1.0] * 80)
