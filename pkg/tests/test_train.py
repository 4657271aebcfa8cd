"""Trainer contracts: costates, Hamiltonian updates, layer Grams,
Nystrom sketching, and the shared run loop."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctt.basis import affine, feature_matrix, kron_rows, quadratic
from ctt.model import CTTLayer, CTTModel, Lift, loss_and_residual, retraction_first
from ctt.train import (
    GramData,
    TrainConfig,
    _draw_batch,
    _layer_factors,
    _layer_gradients,
    _msa_update_dense,
    _ridge_solve,
    _tikhonov_solve,
    _z_matrix,
    adam_run,
    adam_step,
    assemble_gram,
    compute_costates,
    draw_sketch_vectors,
    gram_diagnostics,
    init_layers,
    msa_run,
    ngd_run,
    ngd_step,
    nystrom_solve,
    sketch_gram,
    train_run,
)
from ctt.tt import tt_interior_ranks, tt_svd


def toy_problem(d=3, n_layers=2, B=48, seed=0, c=2.0):
    """Identity-lifted model with first-slot readout on a smooth target."""
    basis = affine()
    layers = init_layers(d, n_layers, basis, c=c, seed=seed)
    model = CTTModel(Lift.identity(d), layers, retraction_first(d))
    rng = np.random.default_rng(seed + 100)
    X = rng.uniform(0.0, 1.0, (B, d))
    Y = (X[:, 0] * X[:, 1] - X[:, -1]) ** 2
    return model, X, Y


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.algorithm == "ngd"
        assert cfg.alpha == 0.7
        assert cfg.lam == 1e-12
        assert cfg.R == 0.1
        assert cfg.gamma == 4.0
        assert cfg.sketch == "full"
        assert cfg.max_iters == 100
        assert cfg.msa_mode == "natural"
        assert cfg.batch_size is None

    @pytest.mark.parametrize(
        "field,value",
        [
            ("algorithm", "sgd"),
            ("alpha", 0.0),
            ("alpha", -0.5),
            ("lam", -1e-8),
            ("R", 0.0),
            ("gamma", -0.1),
            ("sketch", 0),
            ("msa_mode", "euclidean"),
            ("max_iters", -1),
        ],
    )
    def test_rejects_bad_values(self, field, value):
        with pytest.raises(ValueError):
            TrainConfig(**{field: value})

    def test_sketch_accepts_full_or_positive_int(self):
        assert TrainConfig(sketch="full").sketch == "full"
        assert TrainConfig(sketch=16).sketch == 16

    def test_replace_revalidates(self):
        cfg = TrainConfig()
        with pytest.raises(ValueError):
            dataclasses.replace(cfg, R=-1.0)


class TestInitLayers:
    def test_shapes_and_determinism(self):
        a = init_layers(3, 2, affine(), seed=7)
        b = init_layers(3, 2, affine(), seed=7)
        assert len(a) == 2
        for la, lb in zip(a, b):
            assert la.matrix.shape == (3, 2**3)
            np.testing.assert_array_equal(la.matrix, lb.matrix)

    def test_zero_scale_gives_zero_layers(self):
        for layer in init_layers(3, 2, affine(), c=0.0):
            np.testing.assert_array_equal(layer.matrix, 0.0)

    def test_entry_std_matches_variance_rule(self):
        """Entries are N(0, c / (L n^p)); the empirical std over a few
        thousand draws should sit within a few percent of the target."""
        c, L, width = 2.0, 6, 4
        basis = quadratic()
        layers = init_layers(width, L, basis, c=c, seed=3)
        entries = np.concatenate([l.matrix.ravel() for l in layers])
        target = np.sqrt(c / (L * basis.size**width))
        assert entries.size == L * width * basis.size**width
        assert abs(entries.std() / target - 1.0) < 0.1

    def test_needs_at_least_one_layer(self):
        with pytest.raises(ValueError):
            init_layers(3, 0, affine())


class TestCostates:
    def test_terminal_costate_closed_form(self):
        model, X, Y = toy_problem()
        traj = model.trajectory(X)
        cs = compute_costates(model, traj, Y, R=0.1)
        expected = 2.0 * (traj[-1] @ model.retraction.T - Y[:, None]) @ model.retraction
        np.testing.assert_allclose(cs.terminal, expected, rtol=0, atol=1e-14)
        assert cs.terminal is cs.lambdas[-1]
        assert cs.initial is cs.lambdas[0]

    @pytest.mark.parametrize("mode", ["natural", "frobenius"])
    def test_initial_costate_matches_finite_differences(self, mode):
        """lambda_0 is the gradient of the per-sample total cost (terminal
        squared error plus, in natural mode, the running control cost) with
        respect to the initial state."""
        R = 0.3
        model, X, Y = toy_problem(d=3, B=12, seed=2)
        Ymat = Y[:, None]

        def total_cost(H0):
            H = H0
            c = 0.0
            for layer in model.layers:
                v = layer.eval(H)
                if mode == "natural":
                    c = c + 0.5 * R * np.sum(v**2, axis=1)
                H = H + v
            out = H @ model.retraction.T
            return c + np.sum((out - Ymat) ** 2, axis=1)

        traj = model.trajectory(X)
        lam0 = compute_costates(model, traj, Y, R, mode).initial
        h = 1e-6
        fd = np.zeros_like(lam0)
        for t in range(X.shape[1]):
            e = np.zeros(X.shape[1])
            e[t] = h
            fd[:, t] = (total_cost(X + e) - total_cost(X - e)) / (2 * h)
        err = np.abs(lam0 - fd).max() / max(np.abs(fd).max(), 1e-12)
        assert err < 1e-4

    def test_costate_count_matches_trajectory(self):
        model, X, Y = toy_problem(n_layers=3)
        traj = model.trajectory(X)
        cs = compute_costates(model, traj, Y, R=0.1)
        assert len(cs.lambdas) == len(traj) == model.n_layers + 1


class TestRidgeSolve:
    def test_well_posed_system_is_unflagged(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(5, 5))
        K = A @ A.T + np.eye(5)
        rhs = rng.normal(size=(5, 2))
        v, flagged = _ridge_solve(K, rhs)
        assert not flagged
        np.testing.assert_allclose(K @ v, rhs, atol=1e-10)

    def test_singular_system_is_flagged(self):
        K = np.diag([1.0, 0.0])
        v, flagged = _ridge_solve(K, np.array([[1.0], [1.0]]))
        assert flagged
        assert np.all(np.isfinite(v))


class TestMsaUpdates:
    def test_frobenius_gamma_zero_equals_plain_gradient_descent(self):
        """With gamma = 0 the Frobenius-mode Hamiltonian minimizer reduces
        to one explicit gradient step psi - (1/R) E[dH/dpsi] per layer,
        with dH/dpsi = R psi + mean costate-weighted feature rows."""
        model, X, Y = toy_problem(seed=3)
        R = 0.25
        cfg = TrainConfig(
            algorithm="msa", msa_mode="frobenius", gamma=0.0, R=R, max_iters=1
        )
        trained, _ = msa_run(model, (X, Y), cfg)
        traj = model.trajectory(X)
        cs = compute_costates(model, traj, Y, R, "frobenius")
        B = X.shape[0]
        for k, (old, new) in enumerate(zip(model.layers, trained.layers)):
            K = kron_rows(feature_matrix(old.basis, traj[k]))
            bbar = cs.lambdas[k + 1].T @ K / B
            expected = old.matrix - (1.0 / R) * (R * old.matrix + bbar)
            np.testing.assert_allclose(new.matrix, expected, rtol=1e-9, atol=1e-12)

    @pytest.mark.parametrize("gamma", [0.0, 4.0])
    def test_natural_update_satisfies_stationarity(self, gamma):
        """The natural-mode minimizer solves
        Kbar ((R + gamma) psi_new - gamma psi_old)^T = -bbar^T."""
        model, X, Y = toy_problem(seed=4)
        R = 0.1
        traj = model.trajectory(X)
        cs = compute_costates(model, traj, Y, R, "natural")
        layer = model.layers[0]
        new, Kbar, _ = _msa_update_dense(layer, traj[0], cs.lambdas[1], R, gamma, "natural")
        K = kron_rows(feature_matrix(layer.basis, traj[0]))
        B = X.shape[0]
        bbar = cs.lambdas[1].T @ K / B
        lhs = Kbar @ ((R + gamma) * new.matrix - gamma * layer.matrix).T
        np.testing.assert_allclose(lhs, -bbar.T, rtol=0, atol=1e-8)

    def test_als_update_matches_dense_at_full_rank(self):
        """The TT least-squares path reproduces the dense natural update
        when the solve ranks cover the exact solution."""
        model, X, Y = toy_problem(d=3, B=64, seed=5)
        cfg = dict(R=0.1, gamma=4.0, max_iters=1, algorithm="msa", msa_mode="natural")
        dense_model, _ = msa_run(model, (X, Y), TrainConfig(**cfg))
        als_model, _ = msa_run(
            model, (X, Y), TrainConfig(msa_als=True, als_ranks=4, **cfg)
        )
        for ld, la in zip(dense_model.layers, als_model.layers):
            a, b = ld.dense_coeffs(), la.dense_coeffs()
            assert np.abs(a - b).max() / np.abs(a).max() < 1e-5

    def test_msa_natural_run_reduces_loss(self):
        model, X, Y = toy_problem(d=3, B=128, seed=6)
        cfg = TrainConfig(algorithm="msa", R=0.1, gamma=4.0, max_iters=30)
        loss0, _ = loss_and_residual(model, X, Y)
        _, history = msa_run(model, (X, Y), cfg)
        assert history[-1]["train_loss"] < loss0
        assert all(np.isfinite(row["train_loss"]) for row in history)


class TestGramAssembly:
    def test_z_rows_match_finite_difference_jacobian(self):
        """Rows of the layer parameter Jacobian, assembled from the chain
        and feature factors, agree with central finite differences of the
        model output through all later layers."""
        model, X, _ = toy_problem(d=2, B=5, seed=7)
        for ell in range(model.n_layers):
            _, chains, feats = _layer_factors(model, X)
            Z = _z_matrix(chains[ell], feats[ell])
            m = Z.shape[1]
            base = model.layers[ell].matrix
            h = 1e-6
            fd = np.zeros((X.shape[0], m))
            for j in range(m):
                for sign in (1.0, -1.0):
                    trial = model.copy()
                    pert = base.copy().ravel()
                    pert[j] += sign * h
                    trial.layers[ell] = CTTLayer(
                        trial.layers[ell].basis, pert.reshape(base.shape)
                    )
                    fd[:, j] += sign * trial.forward(X)[:, 0] / (2 * h)
            scale = max(np.abs(fd).max(), 1e-12)
            assert np.abs(Z.reshape(X.shape[0], m) - fd).max() / scale < 1e-4

    def test_cp_form_reconstructs_dense_gram(self):
        model, X, _ = toy_problem(d=2, B=6, seed=8)
        gd = assemble_gram(model, X, 0, "dense")
        gc = assemble_gram(model, X, 0, "cp")
        K = kron_rows(gc.F)
        m = gd.G.shape[0]
        G = np.einsum("bst,bk,bl->sktl", gc.C0, K, K).reshape(m, m) / X.shape[0]
        np.testing.assert_allclose(gd.G, G, rtol=0, atol=1e-12)

    def test_gram_rank_bounded_by_batch_size(self):
        """The Monte-Carlo Gram is a sum of B d_o rank-one terms."""
        model, X, _ = toy_problem(d=3, B=3, seed=9)
        gd = assemble_gram(model, X, 0, "dense")
        _, rank, _ = gram_diagnostics(gd)
        assert gd.G.shape[0] > 3
        assert rank <= 3 * model.retraction.shape[0]

    def test_validation(self):
        model, X, _ = toy_problem()
        with pytest.raises(ValueError):
            assemble_gram(model, X[:0], 0)
        with pytest.raises(ValueError):
            assemble_gram(model, X, model.n_layers)
        with pytest.raises(ValueError):
            assemble_gram(model, X, 0, "sparse")


class TestTikhonovSolve:
    def test_zero_rhs_short_circuits(self):
        w, lam, rel, esc = _tikhonov_solve(np.eye(4), np.zeros(4), 1e-12)
        np.testing.assert_array_equal(w, 0.0)
        assert (rel, esc) == (0.0, 0)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_spd_solve_is_exact(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(6, 6))
        G = A @ A.T + 0.1 * np.eye(6)
        rhs = rng.normal(size=6)
        lam = 1e-10
        w, lam_used, rel, esc = _tikhonov_solve(G, rhs, lam)
        assert lam_used == lam and esc == 0
        assert rel <= 1e-6
        np.testing.assert_allclose((G + lam * np.eye(6)) @ w, rhs, rtol=1e-8)

    def test_singular_gram_escalates_lambda(self):
        G = np.diag([1.0, 0.0])
        w, lam_used, rel, esc = _tikhonov_solve(G, np.array([1.0, 1.0]), 0.0)
        assert esc >= 1
        assert lam_used > 0
        assert rel <= 1e-6

    def test_nonfinite_gram_raises_after_escalations(self):
        with pytest.raises(RuntimeError, match="escalations"):
            _tikhonov_solve(np.full((2, 2), np.nan), np.ones(2), 0.0)


class TestSketch:
    def test_vector_shapes(self):
        S0, Sk = draw_sketch_vectors(5, 3, 2, np.random.default_rng(0))
        assert S0.shape == (5, 3)
        assert Sk.shape == (5, 3, 2)

    def test_images_match_dense_gram_action(self):
        """Sketch images are G S_j computed without forming G, with the
        tensor-structured vectors scaled by 1/sqrt(s)."""
        model, X, _ = toy_problem(d=2, B=6, seed=10)
        p, n = model.width, model.layers[0].basis.size
        s = 3
        vec = draw_sketch_vectors(s, p, n, np.random.default_rng(1))
        gd = sketch_gram(assemble_gram(model, X, 0, "cp"), s, vectors=vec)
        G = assemble_gram(model, X, 0, "dense").G
        S0, Sk = vec
        Sfull = np.empty((G.shape[0], s))
        for j in range(s):
            v = S0[j]
            for k in range(p):
                v = np.kron(v, Sk[j, k])
            Sfull[:, j] = v / np.sqrt(s)
        np.testing.assert_allclose(gd.images, G @ Sfull, rtol=1e-10, atol=1e-13)

    def test_full_size_sketch_reproduces_gram(self):
        """With s sketch vectors spanning the whole parameter space the
        stabilized factorization recovers G up to the eigenvalue clip."""
        model, X, _ = toy_problem(d=2, B=32, seed=11)
        G = assemble_gram(model, X, 0, "dense").G
        m = G.shape[0]
        gd = sketch_gram(
            assemble_gram(model, X, 0, "cp"), m, rng=np.random.default_rng(2)
        )
        Ghat = gd.U @ np.diag(gd.spectrum) @ gd.U.T
        assert np.linalg.norm(Ghat - G) / np.linalg.norm(G) < 1e-6

    def test_nystrom_solve_formula_and_span(self):
        rng = np.random.default_rng(3)
        U, _ = np.linalg.qr(rng.normal(size=(8, 3)))
        spec = np.array([4.0, 1.0, 0.25])
        gd = GramData(0, "nystrom", U=U, spectrum=spec)
        rhs = rng.normal(size=8)
        lam = 1e-3
        w = nystrom_solve(gd, rhs, lam)
        np.testing.assert_allclose(w, U @ ((U.T @ rhs) / (spec + lam)))
        np.testing.assert_allclose(U @ (U.T @ w), w, atol=1e-12)

    def test_zero_gram_sketch_is_rank_deficient(self):
        model, X, _ = toy_problem(d=2, B=4, seed=12)
        gc = assemble_gram(model, X, 0, "cp")
        gc.C0 = np.zeros_like(gc.C0)
        gd = sketch_gram(gc, 3, rng=np.random.default_rng(4))
        assert gd.rank_deficient
        assert gd.U.shape[1] == 0
        np.testing.assert_array_equal(nystrom_solve(gd, np.ones(gd.images.shape[0]), 1e-6), 0.0)

    def test_input_validation(self):
        model, X, _ = toy_problem(d=2, B=4)
        dense = assemble_gram(model, X, 0, "dense")
        with pytest.raises(ValueError):
            sketch_gram(dense, 3, rng=np.random.default_rng(0))
        cp = assemble_gram(model, X, 0, "cp")
        with pytest.raises(ValueError):
            sketch_gram(cp, 0, rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            sketch_gram(cp, 3)
        with pytest.raises(ValueError):
            nystrom_solve(dense, np.zeros(1), 0.0)


class TestGramDiagnostics:
    def test_zero_gram(self):
        kappa, rank, _ = gram_diagnostics(np.zeros((4, 4)))
        assert (kappa, rank) == (1.0, 0)

    def test_known_spectrum(self):
        kappa, rank, spec = gram_diagnostics(np.diag([4.0, 1.0]))
        assert kappa == pytest.approx(4.0)
        assert rank == 2
        np.testing.assert_allclose(spec, [4.0, 1.0])

    def test_nystrom_uses_stored_spectrum(self):
        gd = GramData(0, "nystrom", U=np.eye(2), spectrum=np.array([1.0, 9.0]))
        kappa, rank, spec = gram_diagnostics(gd)
        assert kappa == pytest.approx(9.0)
        assert rank == 2
        np.testing.assert_allclose(spec, [9.0, 1.0])

    def test_clip_drops_tiny_eigenvalues(self):
        kappa, rank, _ = gram_diagnostics(np.diag([1.0, 1e-20]))
        assert rank == 1
        assert kappa == pytest.approx(1.0)


class TestNgdStep:
    def test_one_step_solves_single_layer_least_squares(self):
        """A one-layer model is linear in its coefficients, so a full
        Gauss-Newton step lands on the least-squares solution: the
        residual gradient afterwards is zero."""
        d = 3
        layers = init_layers(d, 1, affine(), seed=1)
        model = CTTModel(Lift.identity(d), layers, retraction_first(d))
        rng = np.random.default_rng(2)
        X = rng.uniform(0.0, 1.0, (200, d))
        Y = rng.normal(size=200)
        cfg = TrainConfig(alpha=1.0, lam=1e-12, max_iters=1)
        stepped, diag = ngd_step(model, (X, Y), cfg)
        grads, _ = _layer_gradients(stepped, X, Y)
        assert np.abs(grads[0]).max() <= 1e-8
        assert diag[0]["residual"] <= 1e-6

    def test_zero_residual_leaves_model_fixed(self):
        model, X, _ = toy_problem(seed=13)
        Y = model.forward(X)[:, 0]
        stepped, _ = ngd_step(model, (X, Y), TrainConfig())
        for old, new in zip(model.layers, stepped.layers):
            np.testing.assert_array_equal(old.matrix, new.matrix)

    def test_full_sketch_matches_dense_solve(self):
        """A sketch as large as the parameter count reproduces the dense
        Tikhonov direction."""
        model, X, Y = toy_problem(d=2, B=64, seed=14)
        m = model.width * affine().size ** model.width
        dense, _ = ngd_step(model, (X, Y), TrainConfig(lam=1e-10))
        sketched, _ = ngd_step(
            model, (X, Y), TrainConfig(lam=1e-10, sketch=m), np.random.default_rng(5)
        )
        for ld, ls in zip(dense.layers, sketched.layers):
            scale = np.abs(ld.matrix).max()
            assert np.abs(ld.matrix - ls.matrix).max() / scale < 1e-5

    def test_tt_layers_stay_tt_with_capped_ranks(self):
        d = 3
        basis = affine()
        rng = np.random.default_rng(6)
        layers = []
        for _ in range(2):
            dense = rng.normal(size=(d,) + (basis.size,) * d) * 0.1
            layers.append(CTTLayer(basis, tt_svd(dense, out_dim=d, max_ranks=2)))
        model = CTTModel(Lift.identity(d), layers, retraction_first(d))
        X = rng.uniform(0.0, 1.0, (32, d))
        Y = rng.normal(size=32)
        stepped, _ = ngd_step(model, (X, Y), TrainConfig(max_rank=2))
        for layer in stepped.layers:
            assert layer.is_tt
            assert max(tt_interior_ranks(layer.tt)) <= 2

    def test_per_layer_diagnostics_schema(self):
        model, X, Y = toy_problem()
        _, diag = ngd_step(model, (X, Y), TrainConfig())
        assert [d["layer"] for d in diag] == list(range(model.n_layers))
        for row in diag:
            assert set(row) == {"layer", "lam", "residual", "kappa", "gram_rank", "flagged"}


class TestAdam:
    def test_first_step_matches_bias_corrected_formula(self):
        model, X, Y = toy_problem(seed=15)
        cfg = TrainConfig(algorithm="adam", alpha=0.05)
        grads, _ = _layer_gradients(model, X, Y)
        stepped, state = adam_step(model, (X, Y), cfg)
        assert state["t"] == 1
        for layer, g, new in zip(model.layers, grads, stepped.layers):
            step = cfg.alpha * g / (np.sqrt(g**2) + 1e-8)
            expected = layer.matrix - step.reshape(layer.matrix.shape)
            np.testing.assert_allclose(new.matrix, expected, rtol=1e-12)

    def test_run_reduces_loss(self):
        model, X, Y = toy_problem(d=3, B=128, seed=16)
        cfg = TrainConfig(algorithm="adam", alpha=0.05, max_iters=50)
        loss0, _ = loss_and_residual(model, X, Y)
        _, history = adam_run(model, (X, Y), cfg)
        assert history[-1]["train_loss"] < loss0


class TestRunLoop:
    def test_ngd_converges_on_toy_recovery(self):
        model, X, Y = toy_problem(d=3, B=256, seed=17)
        val = (X[:64], Y[:64])
        cfg = TrainConfig(alpha=0.7, lam=1e-12, max_iters=80)
        _, history = ngd_run(model, (X, Y), cfg, val=val)
        assert history[-1]["val_rel_error"] < 1e-3

    def test_history_schema_all_algorithms(self):
        model, X, Y = toy_problem(B=32, seed=18)
        val = (X[:8], Y[:8])
        keys = {
            "iteration", "wall_time", "train_loss", "val_rel_error",
            "kappas", "gram_ranks", "residuals", "flagged",
        }
        for algo in ("ngd", "msa", "adam"):
            cfg = TrainConfig(algorithm=algo, max_iters=3)
            _, history = train_run(model, (X, Y), cfg, val=val)
            assert len(history) == 3
            assert [row["iteration"] for row in history] == [0, 1, 2]
            for row in history:
                assert set(row) == keys
                assert np.isfinite(row["val_rel_error"])
            times = [row["wall_time"] for row in history]
            assert all(b >= a for a, b in zip(times, times[1:]))

    def test_val_error_is_nan_without_validation_set(self):
        model, X, Y = toy_problem(B=16, seed=19)
        _, history = train_run(model, (X, Y), TrainConfig(max_iters=1))
        assert np.isnan(history[0]["val_rel_error"])

    def test_runs_are_deterministic(self):
        model, X, Y = toy_problem(B=64, seed=20)
        cfg = TrainConfig(sketch=8, max_iters=5, batch_size=32, seed=9)
        m1, h1 = ngd_run(model, (X, Y), cfg)
        m2, h2 = ngd_run(model, (X, Y), cfg)
        assert [r["train_loss"] for r in h1] == [r["train_loss"] for r in h2]
        for a, b in zip(m1.layers, m2.layers):
            np.testing.assert_array_equal(a.matrix, b.matrix)

    def test_frozen_sketch_differs_from_redrawn(self):
        """Freezing reuses the first sketch draw; redrawing changes the
        directions from the second iteration on."""
        model, X, Y = toy_problem(B=64, seed=21)
        kw = dict(sketch=6, max_iters=6, seed=9)
        _, frozen = ngd_run(model, (X, Y), TrainConfig(freeze_sketch=True, **kw))
        _, moving = ngd_run(model, (X, Y), TrainConfig(**kw))
        f = [r["train_loss"] for r in frozen]
        m = [r["train_loss"] for r in moving]
        assert f[0] == pytest.approx(m[0], rel=1e-12)
        assert f[1:] != m[1:]

    def test_line_search_run_reduces_loss(self):
        model, X, Y = toy_problem(B=96, seed=22)
        cfg = TrainConfig(line_search=True, max_iters=5)
        loss0, _ = loss_and_residual(model, X, Y)
        _, history = ngd_run(model, (X, Y), cfg)
        assert history[-1]["train_loss"] < loss0

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_draw_batch_subsets_without_replacement(self, seed):
        rng = np.random.default_rng(seed)
        X = np.arange(20.0).reshape(10, 2)
        Y = np.arange(10.0)
        Xb, Yb = _draw_batch(X, Y, 4, rng)
        assert Xb.shape == (4, 2)
        idx = (Xb[:, 0] / 2).astype(int)
        assert len(set(idx.tolist())) == 4
        np.testing.assert_array_equal(Yb, Y[idx])

    def test_draw_batch_full_passthrough(self):
        X, Y = np.ones((5, 2)), np.ones(5)
        rng = np.random.default_rng(0)
        assert _draw_batch(X, Y, None, rng)[0] is X
        assert _draw_batch(X, Y, 9, rng)[0] is X
