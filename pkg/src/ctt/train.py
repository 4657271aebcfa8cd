"""Training engines for compositional models.

Three optimizers share the forward/adjoint machinery:

* msa_run: successive approximation from the optimal-control viewpoint.
  Each iteration propagates states forward, costates backward, then solves
  one linear tensor equation per layer to minimize the augmented Hamiltonian.
* ngd_run: layerwise natural gradient.  Each layer's update direction solves
  a Tikhonov-regularized normal equation with the layer Gram matrix, either
  dense or through a tensor-structured Nystrom sketch.
* adam_run: per-parameter adaptive baseline on the flattened layer tensors.

All randomness flows from config seeds, so runs are bit-reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .als import CPOperator, als_solve
from .basis import feature_matrix, kron_rows
from .model import CTTLayer, CTTModel, loss_and_residual, relative_l2_error
from .tt import CPTensor, cp_to_tt, tt_add, tt_round, tt_svd

_SOLVE_RTOL = 1e-6  # normal-equation residual gate before escalating lambda
_MAX_ESCALATIONS = 3
_CLIP = 1e-12  # relative eigenvalue clip for Nystrom cores and diagnostics


@dataclass
class TrainConfig:
    """Hyperparameters shared by the trainers; unused fields are ignored."""

    algorithm: str = "ngd"  # msa | ngd | adam
    alpha: float = 0.7  # step size
    lam: float = 1e-12  # Tikhonov weight (ngd)
    R: float = 0.1  # running-cost weight (msa)
    gamma: float = 4.0  # proximal weight of the augmented Hamiltonian (msa)
    batch_size: int | None = None  # None: full dataset every iteration
    sketch: int | str = "full"  # Gram sketch size, or "full" for dense solves
    max_iters: int = 100
    seed: int = 0
    max_rank: int | None = None  # TT layers are re-rounded to this rank
    msa_mode: str = "natural"  # natural | frobenius running cost
    msa_als: bool = False  # solve MSA updates by ALS instead of densely
    als_ranks: int = 4
    line_search: bool = False  # strong-Wolfe search instead of constant alpha
    freeze_sketch: bool = False  # keep the first sketch draw for all iterations

    def __post_init__(self):
        if self.algorithm not in ("msa", "ngd", "adam"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.R <= 0:
            raise ValueError("R must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.sketch != "full" and int(self.sketch) < 1:
            raise ValueError("sketch size must be >= 1 or 'full'")
        if self.msa_mode not in ("natural", "frobenius"):
            raise ValueError(f"unknown msa_mode {self.msa_mode!r}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")


def init_layers(
    width: int, n_layers: int, basis, c: float = 2.0, seed: int = 0
) -> list[CTTLayer]:
    """Dense layers with i.i.d. N(0, c / (L n^p)) entries.

    The variance scaling keeps the state variance bounded as depth and
    feature count grow.  Fixed seed gives bit-identical tensors.
    """
    if n_layers < 1:
        raise ValueError("need at least one layer")
    rng = np.random.default_rng(seed)
    n = basis.size
    std = np.sqrt(c / (n_layers * n**width)) if c > 0 else 0.0
    return [
        CTTLayer(basis, rng.normal(0.0, 1.0, (width, n**width)) * std)
        for _ in range(n_layers)
    ]


# ---------------------------------------------------------------------------
# costates


@dataclass
class CostateSet:
    """Per-sample adjoint states lambda_k, k = 0..L, each of shape (B, p)."""

    lambdas: list

    @property
    def terminal(self) -> np.ndarray:
        return self.lambdas[-1]

    @property
    def initial(self) -> np.ndarray:
        return self.lambdas[0]


def compute_costates(
    model: CTTModel, traj: list, Y: np.ndarray, R: float, mode: str = "natural"
) -> CostateSet:
    """Backward adjoint recursion for the regularized control problem.

    lambda_L = 2 Rmat^T (Rmat X_L - y) (the terminal cost is the unhalved
    squared norm), then lambda_k = dL/dX_k + (I + Dpsi_{k+1}(X_k))^T
    lambda_{k+1}.  The running-cost term dL/dX_k is R Dpsi^T psi for the
    natural mode and zero for the Frobenius mode.
    """
    Rmat = model.retraction
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    L = model.n_layers
    lambdas = [None] * (L + 1)
    lambdas[L] = 2.0 * (traj[L] @ Rmat.T - Y) @ Rmat
    for k in range(L - 1, -1, -1):
        layer = model.layers[k]  # psi_{k+1} acting on X_k
        J = layer.jacobian(traj[k])
        lam = lambdas[k + 1] + np.einsum("bst,bs->bt", J, lambdas[k + 1])
        if mode == "natural":
            lam = lam + R * np.einsum("bst,bs->bt", J, layer.eval(traj[k]))
        lambdas[k] = lam
    return CostateSet(lambdas)


# ---------------------------------------------------------------------------
# MSA


def _ridge_solve(K: np.ndarray, rhs: np.ndarray):
    """Solve K v = rhs columnwise; on a singular system retry with a ridge.

    Returns (v, flagged).  rhs may hold several stacked right-hand sides.
    """
    scale = max(float(np.trace(K)) / K.shape[0], 1e-30)
    ok = False
    try:
        v = np.linalg.solve(K, rhs)
        tol = 1e-8 * scale * max(1.0, float(np.abs(rhs).max()))
        ok = bool(np.allclose(K @ v, rhs, atol=tol))
    except np.linalg.LinAlgError:
        pass
    if ok:
        return v, False
    Kr = K + 1e-12 * scale * np.eye(K.shape[0])
    return np.linalg.solve(Kr, rhs), True


def _msa_update_dense(layer, H, lam_rows, R, gamma, mode):
    """Minimize the batch augmented Hamiltonian over one dense layer.

    Natural mode solves K ((R+gamma) psi_new - gamma psi_old) = -b row by
    row, with K the mean feature Gram and b the costate-weighted feature
    mean; the Frobenius mode puts the identity in front of R instead.
    """
    K_rows = kron_rows(feature_matrix(layer.basis, H))  # (B, n^p)
    B = K_rows.shape[0]
    Kbar = K_rows.T @ K_rows / B
    bbar = lam_rows.T @ K_rows / B  # row n: (1/B) sum_j lambda_{j,n} K_j
    old = layer.matrix
    if mode == "natural":
        v, flagged = _ridge_solve(Kbar, -bbar.T)
        new = (v.T + gamma * old) / (R + gamma)
    else:
        A = R * np.eye(Kbar.shape[0]) + gamma * Kbar
        v, flagged = _ridge_solve(A, (gamma * (old @ Kbar) - bbar).T)
        new = v.T
    return CTTLayer(layer.basis, new), Kbar, flagged


def _msa_update_als(layer, H, lam_rows, R, gamma, ranks, rng):
    """ALS variant of the natural-mode update, solving in TT format."""
    F = feature_matrix(layer.basis, H)
    B, p, n = F.shape
    terms = [[np.outer(F[i, k], F[i, k]) for k in range(p)] for i in range(B)]
    op = CPOperator(terms, weights=np.full(B, 1.0 / B))
    rhs = CPTensor([-lam_rows / B] + [F[:, k, :] for k in range(p)], np.ones(B))
    b_tt = tt_round(cp_to_tt(rhs, out_mode=True), rel_tol=1e-13)
    v_tt, _ = als_solve(op, b_tt, ranks, rng=rng)
    if layer.is_tt:
        new = tt_round(
            tt_add(v_tt, layer.tt, 1.0 / (R + gamma), gamma / (R + gamma)),
            max_ranks=ranks,
        )
        new_layer = CTTLayer(layer.basis, new)
    else:
        dense = (v_tt.to_dense().reshape(p, -1) + gamma * layer.matrix) / (R + gamma)
        new_layer = CTTLayer(layer.basis, dense)
    K_rows = kron_rows(F)  # dense Gram only for the history diagnostics
    return new_layer, K_rows.T @ K_rows / B, False


def msa_run(model: CTTModel, train, cfg: TrainConfig, val=None):
    """Successive approximation: states forward, costates backward, then one
    augmented-Hamiltonian minimization per layer and iteration.

    train is (X, Y); val an optional (X, Y) pair for the history's relative
    error column.  Returns (model, history) with one dict per iteration.
    The Frobenius mode always uses the dense solver (it exists to expose the
    plain-gradient-descent identity); the ALS flag covers the natural mode.
    """
    X, Y = train
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    history = []
    t0 = time.perf_counter()
    for it in range(cfg.max_iters):
        Xb, Yb = _draw_batch(X, Y, cfg.batch_size, rng)
        traj = model.trajectory(Xb)
        costates = compute_costates(model, traj, Yb, cfg.R, cfg.msa_mode)
        kappas, ranks, flags = [], [], []
        new_layers = []
        for k, layer in enumerate(model.layers):
            lam_rows = costates.lambdas[k + 1]
            if cfg.msa_als and cfg.msa_mode == "natural":
                new_layer, Kbar, flagged = _msa_update_als(
                    layer, traj[k], lam_rows, cfg.R, cfg.gamma, cfg.als_ranks, rng
                )
            else:
                new_layer, Kbar, flagged = _msa_update_dense(
                    layer, traj[k], lam_rows, cfg.R, cfg.gamma, cfg.msa_mode
                )
            kap, rk, _ = gram_diagnostics(Kbar)
            kappas.append(kap)
            ranks.append(rk)
            flags.append(flagged)
            new_layers.append(new_layer)
        model.layers = new_layers
        history.append(
            _history_row(
                it, t0, model, X, Y, val,
                kappas=kappas, gram_ranks=ranks,
                residuals=[0.0] * model.n_layers,
                flagged=any(flags),
            )
        )
    return model, history


# ---------------------------------------------------------------------------
# layerwise natural gradient


@dataclass
class GramData:
    """One layer's Gram operator in one of three concrete forms.

    kind == "dense": G is the (m, m) matrix, m = p n^p.
    kind == "cp": per-sample factors; C0 (B, p, p) output-Jacobian blocks,
    F (B, p, n) feature rows.  This is the input form for sketching.
    kind == "nystrom": factors of the stabilized rank-limited approximation
    G ~ U diag(spectrum) U^T, plus the raw sketch images and core.
    """

    layer: int
    kind: str
    lam: float = 0.0
    G: np.ndarray | None = None
    C0: np.ndarray | None = None
    F: np.ndarray | None = None
    images: np.ndarray | None = None
    core: np.ndarray | None = None
    U: np.ndarray | None = None
    spectrum: np.ndarray | None = None
    rank_deficient: bool = False


def _layer_factors(model: CTTModel, X: np.ndarray):
    """Shared forward/backward pass for Gram assembly.

    Returns (traj, chains, feats): chains[l] is the Jacobian of the output
    w.r.t. the state update of layer l (retraction composed with all later
    layers), shape (B, d_o, p); feats[l] the layer's feature rows at its
    input state.
    """
    traj = model.trajectory(X)
    L = model.n_layers
    B = X.shape[0]
    chains = [None] * L
    M = np.broadcast_to(model.retraction, (B,) + model.retraction.shape).copy()
    for k in range(L - 1, -1, -1):
        chains[k] = M
        if k > 0:
            J = model.layers[k].jacobian(traj[k])
            M = M + np.einsum("bos,bst->bot", M, J)
    feats = [feature_matrix(model.layers[k].basis, traj[k]) for k in range(L)]
    return traj, chains, feats


def _z_matrix(chain: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Per-sample parameter Jacobian rows: (B d_o, p n^p)."""
    B, d_o, p = chain.shape
    K = kron_rows(F)  # (B, n^p)
    Z = np.einsum("bos,bk->bosk", chain, K)
    return Z.reshape(B * d_o, p * K.shape[1])


def assemble_gram(model: CTTModel, X: np.ndarray, ell: int, kind: str = "dense") -> GramData:
    """Monte-Carlo layer Gram: batch mean of (du/du_ell)^T (du/du_ell)
    tensored with the rank-one feature outer products."""
    if X.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    if not 0 <= ell < model.n_layers:
        raise ValueError(f"layer index {ell} out of range")
    _, chains, feats = _layer_factors(model, X)
    if kind == "cp":
        C0 = np.einsum("bos,bot->bst", chains[ell], chains[ell])
        return GramData(ell, "cp", C0=C0, F=feats[ell])
    if kind != "dense":
        raise ValueError(f"unknown Gram form {kind!r}")
    Z = _z_matrix(chains[ell], feats[ell])
    G = Z.T @ Z / X.shape[0]
    return GramData(ell, "dense", G=0.5 * (G + G.T))


def _tikhonov_solve(G: np.ndarray, rhs: np.ndarray, lam: float):
    """(G + lam I) w = rhs with residual-gated lambda escalation.

    Escalates lambda tenfold (up to three retries, seeding from the spectral
    scale when lam = 0) whenever the residual exceeds 1e-6 ||rhs||, then
    raises.  Returns (w, lam_used, rel_residual, n_escalations).
    """
    m = G.shape[0]
    nrhs = float(np.linalg.norm(rhs))
    if nrhs == 0.0:
        return np.zeros(m), lam, 0.0, 0
    scale = max(float(np.trace(G)) / m, 1e-30)
    lam_eff = lam
    for attempt in range(_MAX_ESCALATIONS + 1):
        A = G + lam_eff * np.eye(m)
        try:
            w = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            w = np.linalg.lstsq(A, rhs, rcond=None)[0]
        rel = float(np.linalg.norm(A @ w - rhs)) / nrhs
        if rel <= _SOLVE_RTOL:
            return w, lam_eff, rel, attempt
        lam_eff = lam_eff * 10.0 if lam_eff > 0 else _CLIP * scale
    raise RuntimeError(
        f"normal equation failed after {_MAX_ESCALATIONS} lambda escalations "
        f"(relative residual {rel:.2e})"
    )


def draw_sketch_vectors(s: int, p: int, n: int, rng):
    """Standard normal factors of s tensor-structured sketch vectors."""
    return rng.normal(size=(s, p)), rng.normal(size=(s, p, n))


def sketch_gram(gram: GramData, s: int, rng=None, vectors=None) -> GramData:
    """Tensor-structured Nystrom sketch of a layer Gram given in cp form.

    Sketch vectors S_j = (1/sqrt(s)) s_{j,0} x ... x s_{j,p} have standard
    normal factors (drawn from rng unless passed in).  Images G S_j are
    accumulated sample by sample without forming G; the core S^T G S is
    eigenvalue-clipped at 1e-12 of its largest eigenvalue, and the surviving
    subspace yields the stabilized factorization G ~ U diag(spectrum) U^T
    with span(U) = span{G S_j}.
    """
    if gram.kind != "cp":
        raise ValueError("sketching needs the per-sample cp form")
    if s < 1:
        raise ValueError("sketch size must be >= 1")
    C0, F = gram.C0, gram.F
    B, p, n = F.shape
    m = p * n**p
    if vectors is None:
        if rng is None:
            raise ValueError("need an rng when no sketch vectors are given")
        vectors = draw_sketch_vectors(s, p, n, rng)
    S0, Sk = vectors
    K = kron_rows(F)  # (B, n^p)

    # per-mode contractions: coeff[b, j] = prod_k <phi_k(b), s_{j,k}>
    dots = np.matmul(F.transpose(1, 0, 2), Sk.transpose(1, 2, 0))  # (p, B, s)
    coeff = dots.prod(axis=0)
    W0 = np.matmul(C0, S0.T)  # (B, p, s): output-block action of each probe
    # images[j, (slot, k)] = sum_b W0[b,slot,j] coeff[b,j] K[b,k], one GEMM
    weighted = (W0 * coeff[:, None, :]).transpose(0, 2, 1).reshape(B, s * p)
    images = (weighted.T @ K).reshape(s, m).T / (B * np.sqrt(s))

    # dense sketch vectors only enter the (m, s) core contraction
    V = S0
    for k in range(p):
        V = (V[:, :, None] * Sk[:, k, None, :]).reshape(s, -1)
    Sfull = V.T / np.sqrt(s)
    core = Sfull.T @ images
    core = 0.5 * (core + core.T)

    evals, evecs = np.linalg.eigh(core)
    top = float(evals.max(initial=0.0))
    keep = evals > _CLIP * top if top > 0 else np.zeros_like(evals, dtype=bool)
    deficient = int(keep.sum()) < s
    if not keep.any():
        return GramData(
            gram.layer, "nystrom", images=images, core=core,
            U=np.zeros((m, 0)), spectrum=np.zeros(0), rank_deficient=True,
        )
    Chalf = evecs[:, keep] / np.sqrt(evals[keep])
    F2 = images @ Chalf  # G ~ F2 F2^T
    U, sig, _ = np.linalg.svd(F2, full_matrices=False)
    return GramData(
        gram.layer, "nystrom", images=images, core=core,
        U=U, spectrum=sig**2, rank_deficient=deficient,
    )


def nystrom_solve(gd: GramData, rhs: np.ndarray, lam: float) -> np.ndarray:
    """Regularized solve restricted to the sketch range span{G S_j}."""
    if gd.kind != "nystrom":
        raise ValueError("need Nystrom factors")
    if gd.U.shape[1] == 0:
        return np.zeros(rhs.shape[0])
    c = gd.U.T @ rhs
    return gd.U @ (c / (gd.spectrum + lam))


def gram_diagnostics(gram) -> tuple[float, int, np.ndarray]:
    """(effective condition number, numerical rank, descending spectrum).

    kappa = sigma_max / sigma_min over the part of the spectrum above
    1e-12 sigma_max; an all-zero Gram reports kappa 1 and rank 0.
    """
    if isinstance(gram, GramData):
        if gram.kind == "nystrom":
            spec = np.sort(gram.spectrum)[::-1] if gram.spectrum.size else np.zeros(1)
        elif gram.kind == "dense":
            spec = np.sort(np.abs(np.linalg.eigvalsh(gram.G)))[::-1]
        else:
            raise ValueError("diagnostics need a dense or Nystrom form")
    else:
        spec = np.sort(np.abs(np.linalg.eigvalsh(np.asarray(gram))))[::-1]
    top = float(spec[0]) if spec.size else 0.0
    if top <= 0.0:
        return 1.0, 0, spec
    kept = spec[spec > _CLIP * top]
    return float(top / kept[-1]), int(kept.size), spec


def _layer_gradients(model: CTTModel, X: np.ndarray, Y: np.ndarray):
    """Euclidean gradient of the half-mean-square loss per layer, flattened."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    traj, chains, feats = _layer_factors(model, X)
    res = traj[-1] @ model.retraction.T - Y
    B = X.shape[0]
    grads = []
    for ell in range(model.n_layers):
        Z = _z_matrix(chains[ell], feats[ell])
        grads.append(Z.T @ res.ravel() / B)
    return grads, res


def ngd_step(model: CTTModel, batch, cfg: TrainConfig, rng=None, sketch_vectors=None):
    """One frozen-parameter natural-gradient iteration.

    All layer directions w_l are solved from the same forward pass before
    any update is applied.  Dense path: (G_l + lam I) w = E[J^T res] with
    residual-gated lambda escalation.  Sketch path: Nystrom solve in the
    sketch range (its residual column reports the in-range defect).  Dense
    layers step psi <- psi - alpha w; TT layers densify, step, and re-round.
    Returns (model, diagnostics).
    """
    X, Y = batch
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    traj, chains, feats = _layer_factors(model, X)
    res = traj[-1] @ model.retraction.T - Y
    B = X.shape[0]

    ws, diag = [], []
    for ell in range(model.n_layers):
        Z = _z_matrix(chains[ell], feats[ell])
        rhs = Z.T @ res.ravel() / B
        if cfg.sketch == "full":
            G = Z.T @ Z / B
            G = 0.5 * (G + G.T)
            w, lam_used, rel, esc = _tikhonov_solve(G, rhs, cfg.lam)
            kap, rank, _ = gram_diagnostics(G)
            flagged = esc > 0
        else:
            C0 = np.einsum("bos,bot->bst", chains[ell], chains[ell])
            vec = sketch_vectors[ell] if sketch_vectors is not None else None
            gd = sketch_gram(
                GramData(ell, "cp", C0=C0, F=feats[ell]), int(cfg.sketch), rng, vec
            )
            w = nystrom_solve(gd, rhs, cfg.lam)
            lam_used = cfg.lam
            c = gd.U.T @ rhs if gd.U.shape[1] else np.zeros(0)
            rel = float(
                np.linalg.norm((gd.spectrum + cfg.lam) * (gd.U.T @ w) - c)
            ) / max(float(np.linalg.norm(rhs)), 1e-300)
            kap, rank, _ = gram_diagnostics(gd)
            flagged = gd.rank_deficient
        ws.append(w)
        diag.append(
            {
                "layer": ell, "lam": lam_used, "residual": rel,
                "kappa": kap, "gram_rank": rank, "flagged": flagged,
            }
        )

    alpha = cfg.alpha
    if cfg.line_search:
        alpha = _strong_wolfe(model, X, Y, ws, cfg.alpha)
    out = _apply_direction(model, ws, alpha, cfg.max_rank)
    return out, diag


def _apply_direction(model: CTTModel, ws, alpha: float, max_rank=None) -> CTTModel:
    p = model.width
    new_layers = []
    for layer, w in zip(model.layers, ws):
        if layer.is_tt:
            dense = layer.dense_coeffs()
            dense = dense - alpha * w.reshape(dense.shape)
            r = max_rank if max_rank is not None else max(layer.tt.ranks)
            new_layers.append(
                CTTLayer(layer.basis, tt_svd(dense, out_dim=p, max_ranks=r))
            )
        else:
            new_layers.append(
                CTTLayer(layer.basis, layer.matrix - alpha * w.reshape(p, -1))
            )
    return CTTModel(model.lift, new_layers, model.retraction)


def _strong_wolfe(model, X, Y, ws, alpha0, c1=1e-4, c2=0.9):
    """Line search along -w meeting the strong Wolfe conditions.

    phi(a) = loss(theta - a w) with exact slopes from the layer gradients;
    standard bracket-then-bisect.  Falls back to the last Armijo point (or
    alpha0 when the directions fail to descend) if the budget runs out.
    """

    def phi(a):
        trial = _apply_direction(model, ws, a) if a > 0 else model
        loss, _ = loss_and_residual(trial, X, Y)
        grads, _ = _layer_gradients(trial, X, Y)
        slope = -sum(float(g @ w) for g, w in zip(grads, ws))
        return loss, slope

    f0, g0 = phi(0.0)
    if g0 >= 0:
        return alpha0

    def zoom(lo, hi, f_lo):
        for _ in range(15):
            a = 0.5 * (lo + hi)
            fa, ga = phi(a)
            if fa > f0 + c1 * a * g0 or fa >= f_lo:
                hi = a
            else:
                if abs(ga) <= -c2 * g0:
                    return a
                if ga * (hi - lo) >= 0:
                    hi = lo
                lo, f_lo = a, fa
            if abs(hi - lo) < 1e-12:
                break
        return lo if lo > 0 else a

    a_prev, f_prev = 0.0, f0
    a = alpha0
    for i in range(10):
        fa, ga = phi(a)
        if fa > f0 + c1 * a * g0 or (i > 0 and fa >= f_prev):
            return zoom(a_prev, a, f_prev)
        if abs(ga) <= -c2 * g0:
            return a
        if ga >= 0:
            return zoom(a, a_prev, fa)
        a_prev, f_prev = a, fa
        a *= 2.0
    return a_prev


def ngd_run(model: CTTModel, train, cfg: TrainConfig, val=None):
    """Iterate ngd_step, recording loss, validation error, and per-layer
    Gram diagnostics.  Sketch vectors are redrawn every iteration unless
    cfg.freeze_sketch is set, in which case the first draw persists."""
    X, Y = train
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    sketch_rng = np.random.default_rng([cfg.seed, 77])
    frozen = None
    if cfg.sketch != "full" and cfg.freeze_sketch:
        n = model.layers[0].basis.size
        frozen = [
            draw_sketch_vectors(int(cfg.sketch), model.width, n, sketch_rng)
            for _ in range(model.n_layers)
        ]
    history = []
    t0 = time.perf_counter()
    for it in range(cfg.max_iters):
        Xb, Yb = _draw_batch(X, Y, cfg.batch_size, rng)
        model, diag = ngd_step(model, (Xb, Yb), cfg, sketch_rng, frozen)
        history.append(
            _history_row(
                it, t0, model, X, Y, val,
                kappas=[d["kappa"] for d in diag],
                gram_ranks=[d["gram_rank"] for d in diag],
                residuals=[d["residual"] for d in diag],
                flagged=any(d["flagged"] for d in diag),
            )
        )
    return model, history


# ---------------------------------------------------------------------------
# Adam baseline


def adam_step(
    model: CTTModel, batch, cfg: TrainConfig, state=None, betas=(0.9, 0.999), eps=1e-8
):
    """Adaptive-moment step on the flattened layer tensors.

    TT layers are densified for this baseline.  Returns (model, state).
    """
    X, Y = batch
    grads, _ = _layer_gradients(model, X, Y)
    p = model.width
    if state is None:
        state = {
            "t": 0,
            "m": [np.zeros_like(g) for g in grads],
            "v": [np.zeros_like(g) for g in grads],
        }
    b1, b2 = betas
    state["t"] += 1
    t = state["t"]
    new_layers = []
    for k, (layer, g) in enumerate(zip(model.layers, grads)):
        state["m"][k] = b1 * state["m"][k] + (1 - b1) * g
        state["v"][k] = b2 * state["v"][k] + (1 - b2) * g**2
        mhat = state["m"][k] / (1 - b1**t)
        vhat = state["v"][k] / (1 - b2**t)
        step = (cfg.alpha * mhat / (np.sqrt(vhat) + eps)).reshape(p, -1)
        dense = layer.dense_coeffs().reshape(p, -1) - step
        new_layers.append(CTTLayer(layer.basis, dense))
    return CTTModel(model.lift, new_layers, model.retraction), state


def adam_run(model: CTTModel, train, cfg: TrainConfig, val=None):
    X, Y = train
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    state = None
    history = []
    t0 = time.perf_counter()
    for it in range(cfg.max_iters):
        Xb, Yb = _draw_batch(X, Y, cfg.batch_size, rng)
        model, state = adam_step(model, (Xb, Yb), cfg, state)
        history.append(_history_row(it, t0, model, X, Y, val))
    return model, history


# ---------------------------------------------------------------------------
# shared plumbing


def _draw_batch(X, Y, batch_size, rng):
    if batch_size is None or batch_size >= X.shape[0]:
        return X, Y
    idx = rng.choice(X.shape[0], size=batch_size, replace=False)
    return X[idx], Y[idx]


def _history_row(
    it, t0, model, X, Y, val,
    kappas=None, gram_ranks=None, residuals=None, flagged=False,
):
    loss, _ = loss_and_residual(model, X, Y)
    row = {
        "iteration": it,
        "wall_time": time.perf_counter() - t0,
        "train_loss": loss,
        "val_rel_error": np.nan,
        "kappas": kappas or [],
        "gram_ranks": gram_ranks or [],
        "residuals": residuals or [],
        "flagged": flagged,
    }
    if val is not None:
        Xv, Yv = val
        row["val_rel_error"] = relative_l2_error(model.forward(Xv), Yv)
    return row


def train_run(model: CTTModel, train, cfg: TrainConfig, val=None):
    """Dispatch to the configured algorithm; returns (model, history)."""
    if cfg.algorithm == "msa":
        return msa_run(model, train, cfg, val)
    if cfg.algorithm == "ngd":
        return ngd_run(model, train, cfg, val)
    return adam_run(model, train, cfg, val)
