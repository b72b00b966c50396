import numpy as np
import pytest

from mlpsd import model
from mlpsd.linalg import crandn

from conftest import random_psd

# frozen oracle values, evaluated at 30 decimal digits from the closed formulas
RDTF_ENTRY_1 = -0.58704401405694272 - 0.80955501700620202j
RDTF_ENTRY_2 = -0.31075865111982409 + 0.95048885356651472j
SINC_2K_6CM = 0.36828105127377910  # sin(x)/x at x = 2*pi*2000*0.06/343


class TestRdtfUla:
    def test_broadside_gives_all_ones(self):
        g = model.rdtf_ula(1234.0, 0.08, 0.0, 5)
        assert np.array_equal(g, np.ones(5, dtype=complex))

    def test_endfire_matches_direct_evaluation(self):
        g = model.rdtf_ula(2000.0, 0.06, np.pi / 2, 3)
        assert g[0] == 1.0 + 0.0j
        assert g[1] == pytest.approx(RDTF_ENTRY_1, abs=1e-14)
        assert g[2] == pytest.approx(RDTF_ENTRY_2, abs=1e-14)

    def test_unit_modulus(self):
        g = model.rdtf_ula(3100.0, 0.05, np.pi / 6, 4)
        np.testing.assert_allclose(np.abs(g), 1.0, atol=1e-14)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            model.rdtf_ula(np.nan, 0.06, 0.0, 4)
        with pytest.raises(ValueError):
            model.rdtf_ula(1000.0, 0.06, 0.0, 2)
        with pytest.raises(ValueError):
            model.rdtf_ula(1000.0, 0.06, 0.0, 4, sound_speed=0.0)


class TestDiffuseCoherence:
    def test_unit_diagonal(self, rng):
        geom = model.ArrayGeometry.ula(6, 0.04)
        gamma = model.diffuse_coherence(5000.0, geom)
        np.testing.assert_allclose(np.diag(gamma), 1.0, atol=1e-15)

    def test_adjacent_value_at_2khz(self):
        geom = model.ArrayGeometry.ula(3, 0.06, sound_speed=343.0)
        gamma = model.diffuse_coherence(2000.0, geom, loading=0.0)
        assert gamma[0, 1] == pytest.approx(SINC_2K_6CM, abs=1e-14)
        loaded = model.diffuse_coherence(2000.0, geom)
        assert loaded[0, 1] == pytest.approx(SINC_2K_6CM, rel=1e-5)

    def test_zero_frequency_all_ones(self):
        geom = model.ArrayGeometry.ula(4, 0.1)
        gamma = model.diffuse_coherence(0.0, geom, loading=0.0)
        np.testing.assert_allclose(gamma, np.ones((4, 4)), atol=1e-15)

    def test_symmetric_and_loaded(self, rng):
        geom = model.ArrayGeometry.ula(8, 0.06)
        for f in (100.0, 900.0, 4300.0):
            gamma = model.diffuse_coherence(f, geom)
            np.testing.assert_allclose(gamma, gamma.T, atol=1e-15)
            assert np.linalg.eigvalsh(gamma).min() >= 0.9e-6

    def test_duplicate_positions_warn(self):
        pos = np.zeros((3, 3))
        pos[1, 0] = 0.05  # mic 2 duplicates mic 0
        geom = model.ArrayGeometry(pos)
        with pytest.warns(UserWarning, match="duplicate"):
            gamma = model.diffuse_coherence(1000.0, geom)
        assert np.isfinite(gamma).all()

    def test_negative_frequency_rejected(self):
        geom = model.ArrayGeometry.ula(3, 0.05)
        with pytest.raises(ValueError):
            model.diffuse_coherence(-1.0, geom)


class TestNoiseSubspace:
    def test_rank_one_recovers_direction(self, rng):
        a = crandn(rng, 6)
        sub = model.noise_subspace(np.outer(a, a.conj()), rank=1)
        v = sub.basis[:, 0]
        a_unit = a / np.linalg.norm(a)
        # equal up to the fixed phase convention
        assert abs(abs(v.conj() @ a_unit) - 1.0) < 1e-12
        idx = np.argmax(np.abs(v))
        assert v[idx].imag == pytest.approx(0.0, abs=1e-14)
        assert v[idx].real > 0

    def test_orthonormal_columns(self, rng):
        cov = random_psd(rng, 7)
        sub = model.noise_subspace(cov, rank=3)
        np.testing.assert_allclose(sub.basis.conj().T @ sub.basis, np.eye(3),
                                   atol=1e-12)

    def test_identity_input_is_deterministic_and_warns(self):
        with pytest.warns(UserWarning, match="not unique"):
            first = model.noise_subspace(np.eye(5), rank=2)
        with pytest.warns(UserWarning, match="not unique"):
            second = model.noise_subspace(np.eye(5), rank=2)
        np.testing.assert_array_equal(first.basis, second.basis)

    def test_idempotent_on_own_output(self, rng):
        cov = random_psd(rng, 6)
        sub = model.noise_subspace(cov, rank=3)
        rebuilt = (sub.basis * sub.eigenvalues) @ sub.basis.conj().T
        again = model.noise_subspace(rebuilt, rank=3)
        # same subspace, same basis thanks to the phase convention
        np.testing.assert_allclose(again.basis, sub.basis, atol=1e-8)

    def test_rank_cap(self):
        with pytest.raises(ValueError):
            model.noise_subspace(np.eye(5), rank=4)

    def test_auto_rank_energy_rule(self, rng):
        v = np.linalg.qr(crandn(rng, 8, 2))[0]
        cov = v @ np.diag([4.0, 1.0]) @ v.conj().T
        sub = model.noise_subspace(cov)
        assert sub.rank == 2

    def test_auto_rank_flat_spectrum_warns(self):
        with pytest.warns(UserWarning, match="low-rank"):
            sub = model.noise_subspace(np.eye(8))
        assert sub.rank == 6


class TestBlockingMatrix:
    def test_first_basis_vector(self):
        g = np.zeros(4, dtype=complex)
        g[0] = 1.0
        b = model.blocking_matrix(g)
        # nullspace of e1^H is spanned by e2..eN (up to sign convention)
        np.testing.assert_allclose(np.abs(b), np.abs(np.eye(4)[:, 1:]), atol=1e-14)

    def test_blocks_and_is_orthonormal(self, rng):
        for _ in range(20):
            g = crandn(rng, 5)
            b = model.blocking_matrix(g)
            assert np.abs(b.conj().T @ g).max() <= 1e-12 * np.linalg.norm(g)
            np.testing.assert_allclose(b.conj().T @ b, np.eye(4), atol=1e-12)

    def test_stacked_full_rank(self, rng):
        g = crandn(rng, 6)
        b = model.blocking_matrix(g)
        stacked = np.concatenate([g[:, None], b], axis=1)
        assert np.linalg.matrix_rank(stacked) == 6

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            model.blocking_matrix(np.zeros(4))


class TestSteeringVector:
    def test_matches_ula_formula(self):
        geom = model.ArrayGeometry.ula(5, 0.07)
        for f, doa in ((500.0, 0.3), (3200.0, -0.9), (7900.0, 1.2)):
            via_positions = model.steering_vector(f, geom, doa)
            via_formula = model.rdtf_ula(f, 0.07, doa, 5)
            np.testing.assert_allclose(via_positions, via_formula, atol=1e-12)

    def test_reference_entry_is_one(self):
        pos = np.array([[0.0, 0.0, 0.0], [0.03, 0.05, 0.0], [0.1, 0.02, 0.01]])
        g = model.steering_vector(1500.0, model.ArrayGeometry(pos), 0.4)
        assert g[0] == 1.0 + 0.0j


class TestGeometry:
    def test_ula_distances(self):
        geom = model.ArrayGeometry.ula(4, 0.06)
        dist = geom.pairwise_distances()
        assert dist[0, 3] == pytest.approx(0.18)
        assert np.all(np.diag(dist) == 0)

    def test_too_few_mics(self):
        with pytest.raises(ValueError):
            model.ArrayGeometry.ula(2, 0.06)

    def test_degenerate_check(self, rng):
        v = np.linalg.qr(crandn(rng, 5, 2))[0]
        g = v[:, 0] * 2.0
        sub = model.NoiseSubspace(basis=v)
        with pytest.raises(model.DegenerateGeometryError):
            model.ensure_degenerate_free(g, sub)
