"""Headline guarantees, one test per guarantee.

Each test checks a user-facing promise end to end: format accuracy, encoder
exactness with rank and layer budgets, first-order flow convergence, rank
prediction for Markov densities, the optimizer identities, the regression
benchmarks with their seed quotas, and budgeted compression.  Tolerances
and sample counts are part of the promises and are not tuning knobs.
"""

import time

import numpy as np

from ctt.basis import affine, feature_matrix, kron_rows
from ctt.bench import (
    ExperimentConfig,
    build_recovery_model,
    condition_trace,
    gen_recovery_dataset,
    rank_sweep,
    sketch_sweep,
)
from ctt.compress import compress
from ctt.encode import (
    DNNSpec,
    SparsePolynomial,
    build_gaussian_flow,
    build_markov_density,
    concat_ct,
    dnn_forward,
    encode_affine,
    encode_dnn,
    encode_sparse_poly,
    encode_univariate_poly,
    odd_even_permutation,
    permute_density,
    predicted_permuted_markov_ranks,
    quadratic_form_tt,
    sparse_poly_layer_bound,
    vectorize_activation,
)
from ctt.model import CTTLayer, CTTModel, Lift, relative_l2_error, retraction_first
from ctt.train import (
    TrainConfig,
    _layer_factors,
    _layer_gradients,
    _tikhonov_solve,
    _z_matrix,
    adam_run,
    assemble_gram,
    compute_costates,
    init_layers,
    msa_run,
    ngd_run,
    ngd_step,
    nystrom_solve,
    sketch_gram,
)
from ctt.tt import CPTensor, cp_to_tt, measured_ranks, tt_interior_ranks, tt_round, tt_svd


def _spd(rng, d):
    Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    return Q @ np.diag(rng.uniform(0.5, 1.5, d)) @ Q.T


def _spearman(x, y):
    rx = np.argsort(np.argsort(x)).astype(float)
    ry = np.argsort(np.argsort(y)).astype(float)
    rx -= rx.mean()
    ry -= ry.mean()
    return float((rx @ ry) / np.sqrt((rx @ rx) * (ry @ ry)))


def test_format_core_guarantees():
    """500 random tensors (orders 3-4, modes <= 4) meet the relative
    truncation bound at 1e-2, 1e-6, and 1e-10; rounding an already-minimal
    train at 1e-12 is a no-op; CP conversion is exact; all under a minute."""
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    for trial in range(500):
        order = int(rng.integers(3, 5))
        shape = tuple(int(m) for m in rng.integers(2, 5, order))
        T = rng.normal(size=shape)
        nrm = np.linalg.norm(T)
        for eps in (1e-2, 1e-6, 1e-10):
            tt = tt_svd(T, rel_tol=eps)
            assert np.linalg.norm(tt.to_dense() - T) <= eps * nrm * (1 + 1e-12)
        if trial % 10 == 0:
            tt = tt_svd(T, rel_tol=1e-6)
            rounded = tt_round(tt, rel_tol=1e-12)
            assert rounded.ranks == tt.ranks
            assert np.linalg.norm(rounded.to_dense() - tt.to_dense()) <= 1e-11 * nrm
            R = int(rng.integers(1, 4))
            cp = CPTensor([rng.normal(size=(R, m)) for m in shape])
            dense = cp.to_dense()
            err = np.linalg.norm(cp_to_tt(cp).to_dense() - dense)
            assert err <= 1e-12 * np.linalg.norm(dense)
    assert time.perf_counter() - t0 < 60.0


def test_encoder_exactness_and_bounds():
    """Every exact encoder matches its reference to max-abs 1e-9 on 500
    points, and the advertised rank and layer budgets hold."""
    rng = np.random.default_rng(1)

    p = 4
    A, b = rng.normal(size=(p, p)), rng.normal(size=p)
    layer = encode_affine(A, b)
    H = rng.uniform(-1, 1, (500, p))
    assert np.abs(H + layer.eval(H) - (H @ A.T + b)).max() <= 1e-9
    assert max(tt_interior_ranks(layer.tt)) <= p

    D = 6
    coeffs = rng.normal(size=D + 1)
    horner = encode_univariate_poly(coeffs)
    x = rng.uniform(-1, 1, (500, 1))
    ref = np.polynomial.polynomial.polyval(x[:, 0], coeffs)
    assert np.abs(horner.forward(x)[:, 0] - ref).max() <= 1e-9
    assert horner.n_layers <= D + 1

    P = SparsePolynomial(rng.integers(0, 6, size=(3, 4)), rng.normal(size=3))
    sparse = encode_sparse_poly(P, q=2)
    X4 = rng.uniform(-1, 1, (500, 4))
    assert np.abs(sparse.forward(X4)[:, 0] - P.evaluate(X4)).max() <= 1e-9
    for lyr in sparse.layers:
        assert max(tt_interior_ranks(lyr.tt)) <= 2
    assert sparse.n_layers <= sparse_poly_layer_bound(P, q=2)

    f = encode_univariate_poly(rng.normal(size=4))
    g = encode_univariate_poly(rng.normal(size=3))
    both = concat_ct(f, g)
    out = both.forward(x)
    assert np.abs(out[:, :1] - f.forward(x)).max() <= 1e-9
    assert np.abs(out[:, 1:] - g.forward(x)).max() <= 1e-9

    sigma = encode_univariate_poly(rng.normal(size=4))
    vec = vectorize_activation(sigma, 3)
    X3 = rng.uniform(-1, 1, (500, 3))
    expected = np.stack(
        [sigma.forward(X3[:, k:k + 1])[:, 0] for k in range(3)], axis=1
    )
    assert np.abs(vec.forward(X3) - expected).max() <= 1e-9

    depth, hidden = 3, 4
    widths = [2] + [hidden] * (depth - 1) + [2]
    W = [0.7 * rng.normal(size=(widths[i + 1], widths[i])) for i in range(depth)]
    bs = [0.7 * rng.normal(size=widths[i + 1]) for i in range(depth)]
    spec = DNNSpec(W, bs, "relu")
    net = encode_dnn(spec)
    X2 = rng.uniform(-1, 1, (500, 2))
    assert np.abs(net.forward(X2) - dnn_forward(spec, X2)).max() <= 1e-9
    assert net.n_layers <= 2 * depth - 1
    for lyr in net.layers:
        assert max(tt_interior_ranks(lyr.tt)) <= hidden


def test_gaussian_flow_first_order_and_quadform_ranks():
    """Doubling the layer count halves the flow's error (ratio in
    [1.7, 2.3]); the quadratic-form update decomposes with interior ranks
    at most ceil(v/2)+1 for v state slots."""
    for d, seed in ((2, 2), (3, 3)):
        rng = np.random.default_rng(seed)
        Gamma = _spd(rng, d)
        X = rng.uniform(-1, 1, (500, d))
        exact = np.exp(-0.5 * np.einsum("bi,ij,bj->b", X, Gamma, X))
        errs = {}
        for N in (32, 64, 128):
            flow = build_gaussian_flow(Gamma, N)
            errs[N] = np.abs(flow.forward(X)[:, 0] - exact).max()
        for N in (32, 64):
            ratio = errs[N] / errs[2 * N]
            assert 1.7 <= ratio <= 2.3

        form = quadratic_form_tt(Gamma)
        p = d + 1
        audited = tt_svd(form.to_dense(), out_dim=p, rel_tol=1e-10)
        assert max(tt_interior_ranks(audited)) <= (p + 1) // 2 + 1


def test_markov_rank_prediction():
    """Predicted ranks of the odd/even-permuted chain density equal the
    decomposition-measured ranks exactly (four variables, grid 3,
    pairwise rank 2)."""
    rng = np.random.default_rng(21)
    ms = [2, 2, 2]
    P = build_markov_density(ms, 3, rng)
    Q = permute_density(P, odd_even_permutation(4))
    predicted = predicted_permuted_markov_ranks(ms, grid=3)
    assert predicted == (2, 6, 2)
    assert measured_ranks(Q) == predicted


def test_msa_equals_gradient_descent():
    """With Frobenius regularization and no proximity term, one
    successive-approximation update per layer equals the explicit step
    psi - (1/R) E[dH/dpsi], across 20 random configurations."""
    rng = np.random.default_rng(5)
    for _ in range(20):
        d = int(rng.integers(2, 5))
        L = int(rng.integers(1, 4))
        B = int(rng.integers(16, 64))
        R = float(rng.uniform(0.05, 2.0))
        layers = init_layers(d, L, affine(), seed=int(rng.integers(10**6)))
        model = CTTModel(Lift.identity(d), layers, retraction_first(d))
        X = rng.uniform(0.0, 1.0, (B, d))
        Y = rng.normal(size=B)
        cfg = TrainConfig(
            algorithm="msa", msa_mode="frobenius", gamma=0.0, R=R, max_iters=1
        )
        trained, _ = msa_run(model, (X, Y), cfg)
        traj = model.trajectory(X)
        cs = compute_costates(model, traj, Y, R, "frobenius")
        for k, (old, new) in enumerate(zip(model.layers, trained.layers)):
            K = kron_rows(feature_matrix(old.basis, traj[k]))
            bbar = cs.lambdas[k + 1].T @ K / B
            expected = old.matrix - (R * old.matrix + bbar) / R
            assert np.abs(new.matrix - expected).max() <= 1e-8


def test_ngd_solver_correctness():
    """Gauss-Newton one-step exactness on a linear-in-parameters model,
    parameter Jacobians against central differences, and agreement of the
    full-dimension Nystrom solve with the dense Tikhonov solve."""
    d = 3
    layers = init_layers(d, 1, affine(), seed=1)
    model = CTTModel(Lift.identity(d), layers, retraction_first(d))
    rng = np.random.default_rng(2)
    X = rng.uniform(0.0, 1.0, (200, d))
    Y = rng.normal(size=200)
    stepped, _ = ngd_step(model, (X, Y), TrainConfig(alpha=1.0, lam=1e-12))
    grads, _ = _layer_gradients(stepped, X, Y)
    assert np.abs(grads[0]).max() <= 1e-8

    model2 = CTTModel(
        Lift.identity(3), init_layers(3, 2, affine(), seed=3), retraction_first(3)
    )
    Xs = rng.uniform(0.0, 1.0, (6, 3))
    _, chains, feats = _layer_factors(model2, Xs)
    h = 1e-6
    for ell in range(2):
        Z = _z_matrix(chains[ell], feats[ell])
        base = model2.layers[ell].matrix
        fd = np.zeros((6, Z.shape[1]))
        for j in range(Z.shape[1]):
            for sign in (1.0, -1.0):
                trial = model2.copy()
                pert = base.copy().ravel()
                pert[j] += sign * h
                trial.layers[ell] = CTTLayer(
                    trial.layers[ell].basis, pert.reshape(base.shape)
                )
                fd[:, j] += sign * trial.forward(Xs)[:, 0] / (2 * h)
        rel = np.abs(Z.reshape(6, -1) - fd).max() / np.abs(fd).max()
        assert rel <= 1e-4

    for seed in range(5):
        (Xt, Yt), _ = gen_recovery_dataset(4, 1024, 64, seed)
        rec = build_recovery_model(ExperimentConfig(d=4, seed=seed))
        traj, chains, feats = _layer_factors(rec, Xt)
        res = traj[-1] @ rec.retraction.T - Yt[:, None]
        ell = rec.n_layers - 1
        Z = _z_matrix(chains[ell], feats[ell])
        rhs = Z.T @ res.ravel() / Xt.shape[0]
        G = assemble_gram(rec, Xt, ell, "dense").G
        w_dense, *_ = _tikhonov_solve(G, rhs, 1e-12)
        gc = assemble_gram(rec, Xt, ell, "cp")
        for draw in range(2):
            gs = sketch_gram(gc, G.shape[0], rng=np.random.default_rng([seed, draw]))
            w_sk = nystrom_solve(gs, rhs, 1e-12)
            rel = np.linalg.norm(w_sk - w_dense) / np.linalg.norm(w_dense)
            assert rel <= 1e-6


def test_recovery_convergence_and_adam_comparison():
    """Four-dimensional product-form recovery, 25 seeds: natural gradient
    reaches relative error 1e-3 within 300 iterations on at least 20 seeds
    and beats the adaptive-moment baseline at iteration 200 on at least
    20; the whole sweep stays under ten minutes."""
    t0 = time.perf_counter()
    reached = beat = 0
    for seed in range(25):
        train, val = gen_recovery_dataset(4, 2048, 512, seed)
        model = build_recovery_model(ExperimentConfig(d=4, seed=seed))
        _, h_ngd = ngd_run(
            model, train,
            TrainConfig(alpha=0.7, lam=1e-12, max_iters=300, seed=seed),
            val=val,
        )
        _, h_adam = adam_run(
            model, train,
            TrainConfig(algorithm="adam", alpha=0.05, max_iters=200, seed=seed),
            val=val,
        )
        errs = [row["val_rel_error"] for row in h_ngd]
        reached += min(errs) < 1e-3
        beat += errs[199] < h_adam[199]["val_rel_error"]
    assert reached >= 20
    assert beat >= 20
    assert time.perf_counter() - t0 < 600.0


def test_rank_sweep_error_decay():
    """Mean recovery error over 25 seeds: near one at rank 1, below 1e-2
    at rank 9, and strongly monotone in between."""
    rows = rank_sweep(d=4, ranks=range(1, 10), repeats=25)
    means = [row["mean_error"] for row in rows]
    assert 0.6 <= means[0] <= 1.0
    assert means[-1] <= 1e-2
    assert _spearman(np.arange(1, 10), np.array(means)) < -0.9


def test_sketch_size_thresholds():
    """Median final error over 25 seeds: sketch sizes 30 and 40 reach 1e-2
    within 400 iterations, size 20 does not."""
    summaries, _ = sketch_sweep(d=4, sizes=(20, 30, 40), repeats=25, max_iters=400)
    med = {row["size"]: row["median_final_error"] for row in summaries}
    assert med[30] < 1e-2
    assert med[40] < 1e-2
    assert med[20] >= 1e-2


def test_condition_trace_levels_and_rank_decay():
    """Layer Gram condition numbers pass 1e6 during the run but never
    approach 1e15, and the median numerical rank shrinks from iteration
    10 to iteration 100."""
    rows = condition_trace(d=4, repeats=25, max_iters=120)
    assert max(row["kappa_median"] for row in rows) > 1e6
    assert max(row["kappa_q3"] for row in rows) < 1e15
    by_layer_it = {(row["layer"], row["iteration"]): row for row in rows}
    layers = sorted({row["layer"] for row in rows})
    for k in layers:
        assert by_layer_it[(k, 100)]["rank_median"] <= by_layer_it[(k, 10)]["rank_median"]


def test_compression_error_budget_and_idempotence():
    """Compressing the 16-layer Gaussian flow at eps keeps the Monte-Carlo
    relative error within 1.5 eps on ten thousand fresh samples, and a
    second pass at the same budget changes nothing."""
    rng = np.random.default_rng(11)
    Gamma = _spd(rng, 4)
    model = build_gaussian_flow(Gamma, 16)
    Xc = rng.uniform(-1, 1, (2048, 4))
    Xf = rng.uniform(-1, 1, (10_000, 4))
    ref = model.forward(Xf)
    for eps in (1e-1, 1e-2):
        small, report = compress(model, eps, Xc)
        assert relative_l2_error(small.forward(Xf), ref) <= 1.5 * eps
        again, _ = compress(small, eps, Xc)
        assert relative_l2_error(again.forward(Xf), small.forward(Xf)) <= 1e-9
        for la, lb in zip(small.layers, again.layers):
            assert tt_interior_ranks(la.tt) == tt_interior_ranks(lb.tt)
