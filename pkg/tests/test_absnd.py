"""Adaptive-basis gradients, training variants, and the Von Mises sampler."""

import numpy as np
import pytest

from sbnd.absnd import (
    TransformSpec,
    VonMisesNet,
    absnd_gradient,
    hf_angle_gradient,
    optimize_rotations,
    sample_angles,
    train_absnd,
    vonmises_gradients,
)
from sbnd.ising import LatticeSpec, build_hamiltonian, exact_diag
from sbnd.paulis import BasisTransform, PauliSum, RotationGate, unpack_rows
from sbnd.sampler import ArModel, TrainConfig
from sbnd.subspace import ConfigSet, full_basis, sbd_energy


class TestTransformSpec:
    def test_single_spin_angle_count(self):
        ts = TransformSpec("single_spin_ry", 5)
        assert ts.n_angles == 5
        t = ts.build(np.arange(5.0))
        assert [g.kind for g in t.gates] == ["RY"] * 5
        assert [g.angle for g in t.gates] == [0.0, 1.0, 2.0, 3.0, 4.0]

    def test_pairwise_pattern(self):
        ts = TransformSpec("pairwise_blocks", 6)
        assert ts.n_angles == 6 + 3 + 6
        kinds = [k for k, _ in ts.gate_pattern]
        assert kinds == ["RY"] * 6 + ["RZZ"] * 3 + ["RX"] * 6
        pairs = [s for k, s in ts.gate_pattern if k == "RZZ"]
        assert pairs == [(0, 1), (2, 3), (4, 5)]

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError):
            TransformSpec("brickwork", 4)

    def test_wrong_angle_count_rejected(self):
        with pytest.raises(ValueError):
            TransformSpec("single_spin_ry", 4).build(np.zeros(5))


class TestHfAngleGradient:
    def test_commuting_gate_component_vanishes(self):
        obs = PauliSum.from_ops(2, [(1.0, "XI")])
        t = BasisTransform(2, (RotationGate("RX", (0,), 0.7), RotationGate("RY", (1,), 0.4)))
        cs = ConfigSet(2, [0, 1, 2, 3])
        res = sbd_energy(obs, t, cs)
        grad = hf_angle_gradient(obs, t, cs, res.vector)
        assert grad[0] == 0.0  # RX commutes with every term

    def test_single_site_closed_form(self):
        h = 0.6
        obs = PauliSum.from_ops(1, [(-h, "X")])
        for theta in (0.2, 1.1, -0.9):
            t = BasisTransform(1, (RotationGate("RY", (0,), theta),))
            cs = ConfigSet(1, [0])
            res = sbd_energy(obs, t, cs)
            grad = hf_angle_gradient(obs, t, cs, res.vector)
            # E(theta) = -h sin(theta) so dE/dtheta = -h cos(theta)
            assert abs(grad[0] + h * np.cos(theta)) < 1e-12

    def test_full_basis_gradient_is_zero(self):
        rng = np.random.default_rng(0)
        obs = build_hamiltonian(LatticeSpec("chain_periodic", (3,), 0.8))
        ts = TransformSpec("single_spin_ry", 3)
        t = ts.build(rng.normal(size=3))
        res = sbd_energy(obs, t, full_basis(3))
        grad = hf_angle_gradient(obs, t, full_basis(3), res.vector)
        assert np.abs(grad).max() < 1e-9

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        eps = 1e-6
        for _ in range(8):
            n = int(rng.integers(2, 5))
            obs = build_hamiltonian(LatticeSpec("chain_periodic", (n,), float(rng.uniform(0.2, 2.0))))
            family = "pairwise_blocks" if rng.random() < 0.5 else "single_spin_ry"
            ts = TransformSpec(family, n)
            theta = rng.normal(0, 0.6, ts.n_angles)
            size = int(rng.integers(2, (1 << n) + 1))
            cs = ConfigSet(n, rng.choice(1 << n, size, replace=False))
            t = ts.build(theta)
            res = sbd_energy(obs, t, cs)
            grad = hf_angle_gradient(obs, t, cs, res.vector)
            for i in rng.choice(ts.n_angles, min(3, ts.n_angles), replace=False):
                up, dn = theta.copy(), theta.copy()
                up[i] += eps
                dn[i] -= eps
                fd = (
                    sbd_energy(obs, ts.build(up), cs).energy
                    - sbd_energy(obs, ts.build(dn), cs).energy
                ) / (2 * eps)
                # 1e-8 absolute floor covers central-difference roundoff noise
                assert abs(fd - grad[i]) <= 1e-6 * max(abs(fd), abs(grad[i])) + 1e-8

    def test_dimension_mismatch_rejected(self):
        obs = build_hamiltonian(LatticeSpec("chain_periodic", (3,), 0.5))
        t = TransformSpec("single_spin_ry", 3).build(np.zeros(3))
        cs = ConfigSet(3, [0, 1])
        with pytest.raises(ValueError):
            hf_angle_gradient(obs, t, cs, np.ones(3))

    def test_adjoint_sweep_matches_term_expansion(self):
        from sbnd.absnd import PauliBasisEngine
        from sbnd.subspace import lowest_eigenpair

        rng = np.random.default_rng(30)
        for family in ("single_spin_ry", "pairwise_blocks"):
            for n in (3, 5):
                obs = build_hamiltonian(
                    LatticeSpec("chain_periodic", (n,), float(rng.uniform(0.3, 2.0)))
                )
                ts = TransformSpec(family, n)
                engine = PauliBasisEngine(obs, ts)
                theta = rng.normal(0, 0.6, ts.n_angles)
                cs = ConfigSet(n, rng.choice(1 << n, min(1 << n, 12), replace=False))
                ctx = engine.prepare(theta)
                _, psi = lowest_eigenpair(engine.matrix(ctx, cs))
                fast = engine.hf_gradient(ctx, cs, psi)
                ref = hf_angle_gradient(obs, ctx["transform"], cs, psi)
                assert np.abs(fast - ref).max() < 1e-12


class TestAbsndGradient:
    def test_zeroed_encoder_reduces_to_mean_hf(self):
        rng = np.random.default_rng(2)
        obs = build_hamiltonian(LatticeSpec("chain_periodic", (3,), 0.9))
        ts = TransformSpec("single_spin_ry", 3)
        theta = rng.normal(0, 0.4, 3)
        t = ts.build(theta)
        model = ArModel.create(3, 3, rng, dtype="float64")
        model.params["prefix_w"][:] = 0.0
        model.params["prefix_b"][:] = 0.0
        batches, energies, eigvecs = [], [], []
        for _ in range(3):
            cs = ConfigSet(3, rng.choice(8, 4, replace=False))
            res = sbd_energy(obs, t, cs)
            batches.append(cs)
            energies.append(res.energy)
            eigvecs.append(res.vector)
        _, grad_theta = absnd_gradient(obs, model, t, batches, energies, eigvecs)
        hf = np.zeros(3)
        for cs, psi in zip(batches, eigvecs):
            hf += hf_angle_gradient(obs, t, cs, psi)
        assert np.allclose(grad_theta, hf / 3, atol=1e-12)

    def test_estimator_expectation_on_enumerable_toy(self):
        """K=2, one string per batch, N=2: over the 16 outcomes the expected
        angle gradient equals HF-mean plus half the exact score part (the
        1/2 again from the self-inclusive baseline at K=2)."""
        rng = np.random.default_rng(3)
        obs = build_hamiltonian(LatticeSpec("chain_periodic", (2,), 0.8))
        ts = TransformSpec("single_spin_ry", 2)
        theta = np.array([0.3, -0.5])
        t = ts.build(theta)
        model = ArModel.create(2, 2, rng, dtype="float64")
        model.params["head_w"] += rng.normal(0, 0.4, model.params["head_w"].shape)

        probs = np.exp(model.log_probs(np.arange(4), angles=theta))
        results = [sbd_energy(obs, t, ConfigSet(2, [x])) for x in range(4)]
        energies = np.array([r.energy for r in results])

        expected = np.zeros(2)
        for x1 in range(4):
            for x2 in range(4):
                batches = [ConfigSet(2, [x1]), ConfigSet(2, [x2])]
                _, gt = absnd_gradient(
                    obs, model, t, batches,
                    [energies[x1], energies[x2]],
                    [results[x1].vector, results[x2].vector],
                )
                expected += probs[x1] * probs[x2] * gt

        # exact pieces: score part d/dtheta of sum_x P(x|theta) E(x, theta)
        # through sampling, and the HF part through the operator
        score = np.zeros(2)
        for x in range(4):
            rows = unpack_rows(np.array([x]), 2)
            _, dfeats = model.score_backward(
                rows, np.array([probs[x] * energies[x]]), angles=theta
            )
            score += dfeats[0, :, 0] * (-np.sin(theta)) + dfeats[0, :, 1] * np.cos(theta)
        hf_mean = np.zeros(2)
        for x in range(4):
            hf_mean += probs[x] * hf_angle_gradient(obs, t, ConfigSet(2, [x]), results[x].vector)

        assert np.abs(expected - (0.5 * score + hf_mean)).max() < 1e-8

        # cross-check the score+HF decomposition against finite differences
        # of the true loss L(theta) = sum_x P(x|theta) E(x, theta)
        eps = 1e-6

        def loss(th):
            tt = ts.build(th)
            ps = np.exp(model.log_probs(np.arange(4), angles=th))
            es = np.array([sbd_energy(obs, tt, ConfigSet(2, [x])).energy for x in range(4)])
            return float((ps * es).sum())

        for i in range(2):
            up, dn = theta.copy(), theta.copy()
            up[i] += eps
            dn[i] -= eps
            fd = (loss(up) - loss(dn)) / (2 * eps)
            assert abs(fd - (score[i] + hf_mean[i])) < 1e-6


class TestOptimizeRotations:
    def test_stationary_at_convergence(self):
        obs = PauliSum.from_ops(1, [(-0.7, "X")])
        ts = TransformSpec("single_spin_ry", 1)
        theta, energies = optimize_rotations(obs, ts, ConfigSet(1, [0]), steps=500)
        res = sbd_energy(obs, ts.build(theta), ConfigSet(1, [0]))
        grad = hf_angle_gradient(obs, ts.build(theta), ConfigSet(1, [0]), res.vector)
        assert np.abs(grad).max() < 1e-4
        assert abs(energies[-1] + 0.7) < 1e-6

    def test_single_config_matches_direct_minimization(self):
        obs = build_hamiltonian(LatticeSpec("chain_periodic", (2,), 2.0))
        ts = TransformSpec("single_spin_ry", 2)
        cs = ConfigSet(2, [0])
        theta, energies = optimize_rotations(obs, ts, cs, steps=500)
        grid = np.linspace(-np.pi, np.pi, 81)
        direct = min(
            sbd_energy(obs, ts.build(np.array([a, b])), cs).energy
            for a in grid
            for b in grid
        )
        assert energies[-1] <= direct + 1e-4


class TestBasisChangeExactness:
    def test_full_basis_energy_invariant_for_any_angles(self):
        rng = np.random.default_rng(4)
        obs = build_hamiltonian(LatticeSpec("chain_periodic", (3,), 1.1))
        e0 = exact_diag(obs, want_vector=False).energy
        ts = TransformSpec("pairwise_blocks", 3)
        for _ in range(5):
            theta = rng.normal(0, 1.0, ts.n_angles)
            res = sbd_energy(obs, ts.build(theta), full_basis(3))
            assert abs(res.energy - e0) < 1e-9


class TestVonMises:
    def test_concentration_limit(self):
        net = VonMisesNet.create(3, np.random.default_rng(5))
        # softplus(1e6) == 1e6 in double precision
        net.params["head_b"][:] = [1.0, 0.0, 1e6]
        net.params["head_w"][:] = 0.0
        rng = np.random.default_rng(6)
        theta = sample_angles(net, rng)
        mu, kappa = net.distribution_params(theta)
        assert kappa.min() > 1e5
        assert np.abs(theta - 0.0).max() < 1e-2  # locations are all zero

    def test_low_concentration_is_nearly_uniform(self):
        rng = np.random.default_rng(7)
        draws = rng.vonmises(0.0, 0.01, size=100_000)
        resultant = np.hypot(np.cos(draws).mean(), np.sin(draws).mean())
        assert resultant < 0.02

    def test_seed_determinism(self):
        net = VonMisesNet.create(4, np.random.default_rng(8))
        a = sample_angles(net, np.random.default_rng(9))
        b = sample_angles(net, np.random.default_rng(9))
        assert np.array_equal(a, b)

    def test_log_prob_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        net = VonMisesNet.create(3, rng)
        net.params["head_w"] += rng.normal(0, 0.3, net.params["head_w"].shape)
        thetas = rng.uniform(-np.pi, np.pi, (2, 3))
        weights = rng.normal(0, 1, 2)
        grads = net.score_backward(thetas, weights)

        def total():
            return float((net.log_prob(thetas) * weights).sum())

        eps = 1e-6
        for name in ("head_w", "head_b", "prefix_w", "l0.w1", "l1.wq", "lnf_g"):
            flat = net.params[name].reshape(-1)
            for ix in np.random.default_rng(11).choice(flat.size, 3, replace=False):
                old = flat[ix]
                flat[ix] = old + eps
                up = total()
                flat[ix] = old - eps
                dn = total()
                flat[ix] = old
                fd = (up - dn) / (2 * eps)
                an = grads[name].reshape(-1)[ix]
                assert abs(fd - an) <= 1e-5 * max(abs(fd), abs(an), 1e-3)

    def test_equal_energies_zero_gradients(self):
        rng = np.random.default_rng(12)
        net = VonMisesNet.create(2, rng)
        model = ArModel.create(2, 2, rng, dtype="float64")
        thetas = rng.uniform(-1, 1, (2, 2))
        batches = [ConfigSet(2, [0, 1]), ConfigSet(2, [2, 3])]
        grads_nu, grads_w = vonmises_gradients(net, model, thetas, batches, [1.5, 1.5])
        assert all(np.abs(g).max() == 0.0 for g in grads_nu.values())
        assert all(np.abs(g).max() == 0.0 for g in grads_w.values())

    def test_angle_gradient_expectation_matches_quadrature(self):
        """Single angle, one string per batch, K=2: the expected angle-net
        gradient is half the quadrature value of dL/dnu (the 1/2 from the
        self-inclusive baseline), checked on a few head parameters."""
        rng = np.random.default_rng(13)
        net = VonMisesNet.create(1, rng)
        net.params["head_b"][:] = [1.0, 0.2, 0.5]
        obs = PauliSum.from_ops(1, [(-1.0, "X"), (-0.3, "Z")])
        ts = TransformSpec("single_spin_ry", 1)

        nodes = np.linspace(-np.pi, np.pi, 2001)[:-1] + np.pi / 2000.0
        width = 2.0 * np.pi / 2000.0

        def conditional_energy(theta):
            # uniform sampler: E(theta) = mean over x of <x|U^dag H U|x>
            t = ts.build(np.array([theta]))
            return 0.5 * sum(
                sbd_energy(obs, t, ConfigSet(1, [x])).energy for x in (0, 1)
            )

        cond = np.array([conditional_energy(th) for th in nodes])
        dens = np.exp(net.log_prob(nodes[:, None]))

        # expected estimator: E[(1/2)(s(t1)-s(t2))(E1-E2)/2] = (1/2) E[s E]
        score_weighted = None
        for th, p, e in zip(nodes, dens, cond):
            g = net.score_backward(np.array([[th]]), np.array([p * e * width]))
            if score_weighted is None:
                score_weighted = g
            else:
                for k, v in g.items():
                    score_weighted[k] += v

        def loss():
            d = np.exp(net.log_prob(nodes[:, None]))
            return float((d * cond).sum() * width)

        eps = 1e-5
        for name in ("head_b",):
            flat = net.params[name].reshape(-1)
            for ix in range(flat.size):
                old = flat[ix]
                flat[ix] = old + eps
                up = loss()
                flat[ix] = old - eps
                dn = loss()
                flat[ix] = old
                fd = (up - dn) / (2 * eps)
                an = score_weighted[name].reshape(-1)[ix]
                assert abs(fd - an) < 1e-4


class TestTrainAbsnd:
    def test_hf_variant_rotates_toward_x_basis(self):
        obs = build_hamiltonian(LatticeSpec("chain_periodic", (4,), 8.0))
        e0 = exact_diag(obs, want_vector=False).energy
        cfg = TrainConfig(
            k_batches=4, batch_size=24, steps=180, seed=1, theta_learning_rate=3e-2
        )
        model, theta, trace = train_absnd(obs, cfg, TransformSpec("single_spin_ry", 4))
        assert np.abs(np.abs(theta) - np.pi / 2).max() < 0.35
        assert trace[-1].energy_mean < trace[0].energy_mean
        res = sbd_energy(obs, TransformSpec("single_spin_ry", 4).build(theta), full_basis(4))
        assert abs(res.energy - e0) < 1e-9

    def test_vonmises_variant_improves(self):
        obs = build_hamiltonian(LatticeSpec("chain_periodic", (4,), 1.0))
        cfg = TrainConfig(k_batches=4, batch_size=16, steps=120, seed=2)
        model, theta, trace = train_absnd(
            obs, cfg, TransformSpec("single_spin_ry", 4), variant="vonmises"
        )
        first = np.mean([t.energy_mean for t in trace[:10]])
        last = np.mean([t.energy_mean for t in trace[-10:]])
        assert last < first
        assert theta.shape == (4,)

    def test_unknown_variant_rejected(self):
        obs = build_hamiltonian(LatticeSpec("chain_periodic", (3,), 0.5))
        with pytest.raises(ValueError):
            train_absnd(obs, TrainConfig(steps=1), TransformSpec("single_spin_ry", 3), variant="x")
