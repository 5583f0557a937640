"""Pauli algebra against dense-matrix and finite-difference oracles."""

import numpy as np
import pytest

from sbnd.paulis import (
    BasisTransform,
    PauliString,
    PauliSum,
    RotationGate,
    conjugate_gate,
    conjugate_transform,
    d_conjugate_transform,
    dense_matrix,
    merge_and_prune,
    pack_bits,
    ry_matrix,
    rx_matrix,
    rzz_matrix,
    string_apply,
    unpack_bits,
)

LETTERS = "IXYZ"


def random_sum(rng, n, n_terms=4):
    entries = []
    for _ in range(n_terms):
        ops = "".join(rng.choice(list(LETTERS)) for _ in range(n))
        entries.append((float(rng.normal()), ops))
    return PauliSum.from_ops(n, entries).merged(tol=0.0)


def random_transform(rng, n, n_gates=3):
    gates = []
    for _ in range(n_gates):
        kind = rng.choice(["RY", "RX", "RZZ"])
        if kind == "RZZ" and n >= 2:
            sites = tuple(int(s) for s in rng.choice(n, 2, replace=False))
        else:
            kind = rng.choice(["RY", "RX"])
            sites = (int(rng.integers(n)),)
        gates.append(RotationGate(kind, sites, float(rng.normal())))
    return BasisTransform(n, tuple(gates))


class TestStringApply:
    def test_z_eigenstate(self):
        y, amp = string_apply(PauliString.from_ops(1.0, "Z"), 0)
        assert y == 0 and amp == 1.0

    def test_x_flips(self):
        y, amp = string_apply(PauliString.from_ops(1.0, "X"), 0)
        assert y == 1 and amp == 1.0

    def test_y_phase(self):
        y, amp = string_apply(PauliString.from_ops(1.0, "Y"), 0)
        assert y == 1 and amp == 1.0j

    def test_flips_exactly_xy_sites(self):
        p = PauliString.from_ops(0.7, "XYZI")
        x = pack_bits([0, 1, 1, 0])
        y, amp = string_apply(p, x)
        assert unpack_bits(y, 4).tolist() == [1, 0, 1, 0]
        assert abs(abs(amp) - 0.7) < 1e-15

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            string_apply(PauliString.from_ops(1.0, "Z"), 2)

    def test_matches_dense_action(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            n = int(rng.integers(1, 5))
            ops = "".join(rng.choice(list(LETTERS)) for _ in range(n))
            p = PauliString.from_ops(complex(rng.normal(), rng.normal()), ops)
            x = int(rng.integers(1 << n))
            y, amp = p.apply(x)
            col = p.dense()[:, x]
            assert abs(col[y] - amp) < 1e-14
            col[y] = 0.0
            assert np.abs(col).max() < 1e-15


class TestGateMatrices:
    """The literal rotation matrices anchor the angle-sign convention."""

    def test_ry_literal(self):
        a = 0.83
        expected = np.array(
            [[np.cos(a / 2), -np.sin(a / 2)], [np.sin(a / 2), np.cos(a / 2)]]
        )
        assert np.allclose(ry_matrix(a), expected)
        assert np.allclose(RotationGate("RY", (0,), a).dense(1), expected)

    def test_rx_literal(self):
        a = -1.2
        c, s = np.cos(a / 2), np.sin(a / 2)
        expected = np.array([[c, -1j * s], [-1j * s, c]])
        assert np.allclose(rx_matrix(a), expected)
        assert np.allclose(RotationGate("RX", (0,), a).dense(1), expected)

    def test_rzz_literal(self):
        a = 0.4
        p = np.exp(-0.5j * a)
        expected = np.diag([p, p.conjugate(), p.conjugate(), p])
        assert np.allclose(rzz_matrix(a), expected)
        assert np.allclose(RotationGate("RZZ", (0, 1), a).dense(2), expected)

    def test_rzz_rejects_repeated_site(self):
        with pytest.raises(ValueError):
            RotationGate("RZZ", (1, 1), 0.2)


class TestConjugateGate:
    def test_zero_angle_is_identity(self):
        rng = np.random.default_rng(0)
        obs = random_sum(rng, 3)
        out = conjugate_gate(obs, RotationGate("RY", (1,), 0.0))
        assert np.allclose(dense_matrix(out), dense_matrix(obs))

    def test_ry_half_pi_maps_x_to_z(self):
        obs = PauliSum.from_ops(1, [(-2.0, "X")])
        out = conjugate_gate(obs, RotationGate("RY", (0,), np.pi / 2))
        (term,) = out.terms
        assert term.ops == "Z"
        assert abs(term.coeff + 2.0) < 1e-12

    def test_rzz_on_single_x(self):
        gamma = 0.37
        obs = PauliSum.from_ops(2, [(1.0, "XI")])
        out = conjugate_gate(obs, RotationGate("RZZ", (0, 1), gamma))
        by_ops = {t.ops: t.coeff for t in out.terms}
        assert abs(by_ops["XI"] - np.cos(gamma)) < 1e-12
        assert abs(by_ops["YZ"] + np.sin(gamma)) < 1e-12

    def test_commuting_string_passes_through(self):
        obs = PauliSum.from_ops(2, [(0.9, "ZZ")])
        out = conjugate_gate(obs, RotationGate("RZZ", (0, 1), 1.1))
        (term,) = out.terms
        assert term.ops == "ZZ" and abs(term.coeff - 0.9) < 1e-15


class TestConjugateTransform:
    def test_empty_transform(self):
        rng = np.random.default_rng(1)
        obs = random_sum(rng, 3)
        out = conjugate_transform(obs, BasisTransform(3, ()))
        assert np.allclose(dense_matrix(out), dense_matrix(obs))

    def test_all_ry_pi_preserves_zz_chain(self):
        obs = PauliSum.from_ops(3, [(-1.0, "ZZI"), (-1.0, "IZZ"), (-1.0, "ZIZ")])
        t = BasisTransform(3, tuple(RotationGate("RY", (i,), np.pi) for i in range(3)))
        out = conjugate_transform(obs, t)
        assert np.allclose(dense_matrix(out), dense_matrix(obs), atol=1e-12)

    def test_random_two_gate_matches_dense(self):
        rng = np.random.default_rng(2)
        obs = random_sum(rng, 3)
        t = random_transform(rng, 3, 2)
        u = t.dense()
        lhs = dense_matrix(conjugate_transform(obs, t))
        rhs = u.conj().T @ dense_matrix(obs) @ u
        assert np.abs(lhs - rhs).max() < 1e-12

    def test_conjugation_oracle_batch(self):
        rng = np.random.default_rng(3)
        for _ in range(60):
            n = int(rng.integers(1, 5))
            obs = random_sum(rng, n)
            t = random_transform(rng, n, int(rng.integers(1, 5)))
            u = t.dense()
            lhs = dense_matrix(conjugate_transform(obs, t))
            rhs = u.conj().T @ dense_matrix(obs) @ u
            assert np.abs(lhs - rhs).max() < 1e-12
            lhs_eigs = np.sort(np.linalg.eigvalsh(lhs))
            ref_eigs = np.sort(np.linalg.eigvalsh(dense_matrix(obs)))
            assert np.abs(lhs_eigs - ref_eigs).max() < 1e-10

    def test_involution(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            n = int(rng.integers(2, 5))
            obs = random_sum(rng, n)
            t = random_transform(rng, n, 4)
            back = conjugate_transform(conjugate_transform(obs, t), t.inverse())
            assert np.abs(dense_matrix(back) - dense_matrix(obs)).max() < 1e-12

    def test_hermiticity_preserved(self):
        rng = np.random.default_rng(6)
        obs = random_sum(rng, 4)
        t = random_transform(rng, 4, 5)
        out = conjugate_transform(obs, t)
        m = dense_matrix(out)
        assert np.abs(m - m.conj().T).max() < 1e-12
        assert all(abs(term.coeff.imag) < 1e-12 for term in out.terms)


class TestDerivative:
    def test_ry_derivative_of_z_at_zero(self):
        obs = PauliSum.from_ops(1, [(1.0, "Z")])
        t = BasisTransform(1, (RotationGate("RY", (0,), 0.0),))
        out = d_conjugate_transform(obs, t, 0)
        (term,) = out.terms
        assert term.ops == "X" and abs(term.coeff + 1.0) < 1e-12

    def test_commuting_gate_gives_empty_sum(self):
        obs = PauliSum.from_ops(2, [(1.0, "ZZ"), (0.5, "IZ")])
        t = BasisTransform(2, (RotationGate("RZZ", (0, 1), 0.8),))
        assert len(d_conjugate_transform(obs, t, 0)) == 0

    def test_unknown_index_rejected(self):
        obs = PauliSum.from_ops(1, [(1.0, "Z")])
        t = BasisTransform(1, (RotationGate("RY", (0,), 0.1),))
        with pytest.raises(IndexError):
            d_conjugate_transform(obs, t, 1)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        eps = 1e-5
        for _ in range(12):
            n = 3
            obs = random_sum(rng, n)
            t = random_transform(rng, n, 3)
            i = int(rng.integers(3))
            angles = t.angles()
            up, dn = angles.copy(), angles.copy()
            up[i] += eps
            dn[i] -= eps
            fd = (
                dense_matrix(conjugate_transform(obs, t.with_angles(up)))
                - dense_matrix(conjugate_transform(obs, t.with_angles(dn)))
            ) / (2 * eps)
            an = dense_matrix(d_conjugate_transform(obs, t, i))
            scale = max(np.abs(fd).max(), 1e-12)
            assert np.abs(an - fd).max() / scale < 1e-6


class TestMergeAndPrune:
    def test_combines_identical_strings(self):
        obs = PauliSum.from_ops(1, [(0.5, "X"), (0.5, "X")])
        out = merge_and_prune(obs, 1e-12)
        (term,) = out.terms
        assert term.ops == "X" and abs(term.coeff - 1.0) < 1e-15

    def test_cancellation_empties(self):
        obs = PauliSum.from_ops(1, [(1.0, "Z"), (-1.0, "Z")])
        assert len(merge_and_prune(obs, 1e-12)) == 0

    def test_prunes_below_tolerance(self):
        obs = PauliSum.from_ops(1, [(1.0, "Z"), (1e-15, "X")])
        out = merge_and_prune(obs, 1e-12)
        assert [t.ops for t in out.terms] == ["Z"]

    def test_negative_tolerance_rejected(self):
        with pytest.raises(ValueError):
            merge_and_prune(PauliSum.from_ops(1, [(1.0, "Z")]), -1.0)


class TestDenseMatrix:
    def test_single_z(self):
        m = dense_matrix(PauliSum.from_ops(1, [(1.0, "Z")]))
        assert np.allclose(m, np.diag([1.0, -1.0]))

    def test_xx_antidiagonal(self):
        m = dense_matrix(PauliSum.from_ops(2, [(1.0, "XX")]))
        assert np.allclose(m, np.fliplr(np.eye(4)))

    def test_two_site_chain_hand_sum(self):
        # single deduplicated bond plus two field terms
        from sbnd.ising import LatticeSpec, build_hamiltonian

        h = 0.3
        obs = build_hamiltonian(LatticeSpec("chain_periodic", (2,), h))
        z = np.diag([1.0, -1.0])
        x = np.array([[0.0, 1.0], [1.0, 0.0]])
        eye = np.eye(2)
        expected = -np.kron(z, z) - h * (np.kron(x, eye) + np.kron(eye, x))
        assert np.allclose(dense_matrix(obs), expected)

    def test_site_limit(self):
        with pytest.raises(ValueError):
            dense_matrix(PauliSum.from_ops(13, [(1.0, "Z" * 13)]))


class TestRoundTrips:
    def test_pack_unpack(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            n = int(rng.integers(1, 17))
            bits = rng.integers(0, 2, n)
            x = pack_bits(bits)
            assert unpack_bits(x, n).tolist() == bits.tolist()

    def test_ops_coeff_roundtrip(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            n = int(rng.integers(1, 6))
            ops = "".join(rng.choice(list(LETTERS)) for _ in range(n))
            c = complex(rng.normal(), rng.normal())
            p = PauliString.from_ops(c, ops)
            assert p.ops == ops
            assert abs(p.coeff - c) < 1e-15
