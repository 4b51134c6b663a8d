import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tfim_entanglement.hamiltonian import (
    HamiltonianError,
    HamiltonianOperator,
    apply,
    dense_matrix,
    diagonal_energy,
    pack,
    parity_projector,
    popcounts,
    read_state,
    unpack,
    write_state,
)
from tfim_entanglement.lattice import LatticeSpec, build_lattice

from conftest import basis_state, ring


def test_single_spin_in_field():
    H = HamiltonianOperator(3.0, [], 1)
    assert np.array_equal(apply(H, basis_state(1, 0)), [-1.0, 0.0])


def test_two_site_open_chain():
    # -lambda X0 X1 - Z0 - Z1 on |00>: -2|00> - |11>
    H = HamiltonianOperator(1.0, build_lattice(LatticeSpec((2,), boundary="open")), 2)
    np.testing.assert_array_equal(apply(H, basis_state(2, 0)), [-2.0, 0.0, 0.0, -1.0])


def test_zero_vector():
    H = ring(5, 0.8)
    assert not np.any(apply(H, np.zeros(32)))


@pytest.mark.parametrize("b,n,expected", [(0, 5, -5.0), (0b11111, 5, 5.0), (0b101, 3, 1.0)])
def test_diagonal_energy(b, n, expected):
    assert diagonal_energy(b, n) == expected


def test_diagonal_energy_range():
    with pytest.raises(HamiltonianError):
        diagonal_energy(8, 3)


def test_parity_projector_examples():
    s = 3 ** -0.5
    np.testing.assert_array_equal(parity_projector(basis_state(2, 0), "even-parity"), basis_state(2, 0))
    assert not np.any(parity_projector(basis_state(2, 1), "even-parity"))
    v = np.array([s, s, 0.0, s])  # (|00> + |01> + |11>)/sqrt(3); bit 0 is site 0
    np.testing.assert_array_equal(parity_projector(v, "even-parity"), [s, 0.0, 0.0, s])


@pytest.mark.parametrize("n", range(1, 11))
def test_matrix_free_matches_dense(n, rng):
    for spec in (LatticeSpec((n,)), LatticeSpec((n,), boundary="open")):
        H = HamiltonianOperator(0.73, build_lattice(spec), n)
        v = rng.standard_normal(H.dim)
        np.testing.assert_allclose(apply(H, v), dense_matrix(H) @ v, rtol=0, atol=1e-12)


def test_matrix_free_matches_dense_2d_doubled_bonds(rng):
    spec = LatticeSpec((2, 2), bond_convention="per-direction")
    H = HamiltonianOperator(0.4, build_lattice(spec), 4)
    v = rng.standard_normal(16)
    np.testing.assert_allclose(apply(H, v), dense_matrix(H) @ v, atol=1e-12)


def test_symmetry_random_pairs(rng):
    for k in range(100):
        n = 2 + k % 11
        H = ring(n, rng.uniform(0, 3))
        u, v = rng.standard_normal((2, H.dim))
        lhs, rhs = u @ apply(H, v), apply(H, u) @ v
        assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(u) * np.linalg.norm(v)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 9), st.floats(0, 5), st.integers(0, 2**31 - 1))
def test_parity_is_conserved(n, lam, seed):
    H = ring(n, lam)
    v = np.random.default_rng(seed).standard_normal(H.dim)
    for sector, other in (("even-parity", "odd-parity"), ("odd-parity", "even-parity")):
        hv = apply(H, parity_projector(v, sector))
        assert not np.any(parity_projector(hv, other))


@pytest.mark.parametrize("n", [1, 3, 6])
def test_product_states_are_eigenvectors_at_zero_coupling(n):
    H = ring(n, 0.0)
    for b in range(1 << n):
        np.testing.assert_array_equal(apply(H, basis_state(n, b)), diagonal_energy(b, n) * basis_state(n, b))


@pytest.mark.parametrize("n", [1, 2, 5, 8])
@pytest.mark.parametrize("sector", ["even-parity", "odd-parity"])
def test_packed_apply_matches_full(n, sector, rng):
    H = ring(n, 1.1, sector)
    v = parity_projector(rng.standard_normal(1 << n), sector)
    packed = H.apply_packed(pack(v, sector))
    np.testing.assert_allclose(unpack(packed, sector), apply(H, v), atol=1e-12)


def test_pack_round_trip(rng):
    v = parity_projector(rng.standard_normal(64), "odd-parity")
    np.testing.assert_array_equal(unpack(pack(v, "odd-parity"), "odd-parity"), v)


def test_sector_violation_rejected():
    H = ring(3, 1.0, "even-parity")
    with pytest.raises(HamiltonianError):
        apply(H, basis_state(3, 1))


def test_dimension_mismatch_rejected():
    with pytest.raises(HamiltonianError):
        apply(ring(3, 1.0), np.zeros(4))


def test_invalid_operator():
    with pytest.raises(HamiltonianError):
        HamiltonianOperator(-1.0, [], 2)
    with pytest.raises(HamiltonianError):
        HamiltonianOperator(1.0, [(0, 2)], 2)
    with pytest.raises(HamiltonianError):
        HamiltonianOperator(1.0, [], 2, "chiral")


def test_popcounts():
    assert popcounts(3).tolist() == [0, 1, 1, 2, 1, 2, 2, 3]


def test_state_file_round_trip(tmp_path, rng):
    v = rng.standard_normal(32)
    path = tmp_path / "gs.state"
    write_state(path, v, 0.37, "abcdef0123456789")
    raw = path.read_bytes()
    assert raw[:8] == b"TFIMSV01"
    assert len(raw) == 8 + 4 + 8 + 16 + 8 * 32
    back, lam, tag = read_state(path)
    np.testing.assert_array_equal(back, v)
    assert lam == 0.37 and tag == "abcdef0123456789"
