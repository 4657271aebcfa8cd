"""Alternating least squares in TT format.

Two solvers share the sweep machinery idea but serve different equations:

* als_solve treats A u = b where A is a sum of Kronecker-factored terms
  (a CP operator, e.g. an empirical feature Gram (1/B) sum_b G_{b,1} x ...
  x G_{b,d}) and u, b are TT.  Galerkin projection onto the fixed-rank TT
  manifold, one core at a time; for symmetric positive definite A each local
  solve minimizes the energy J(u) = <u, Au>/2 - <u, b>, so J never increases
  across core updates.

* tt_regression fits a TT coefficient tensor to sampled data by linear least
  squares on tensor-product feature rows.
"""

from __future__ import annotations

import numpy as np

from .dense import require_finite
from .tt import TTTensor, tt_dot, tt_rand


class CPOperator:
    """A = sum_t w_t M_1^(t) x ... x M_d^(t), each M_k^(t) square of size n_k."""

    def __init__(self, terms: list[list[np.ndarray]], weights=None):
        if not terms:
            raise ValueError("need at least one term")
        d = len(terms[0])
        mats = []
        for term in terms:
            if len(term) != d:
                raise ValueError("all terms must have one matrix per mode")
            row = []
            for M in term:
                M = require_finite(np.asarray(M, dtype=float), "operator factor")
                if M.ndim != 2 or M.shape[0] != M.shape[1]:
                    raise ValueError("operator factors must be square")
                row.append(M)
            mats.append(row)
        for k in range(d):
            sizes = {row[k].shape[0] for row in mats}
            if len(sizes) != 1:
                raise ValueError(f"mode {k} sizes differ across terms")
        self.terms = mats
        if weights is None:
            weights = np.ones(len(mats))
        self.weights = require_finite(np.asarray(weights, dtype=float), "weights")
        if self.weights.shape != (len(mats),):
            raise ValueError("one weight per term")

    @property
    def order(self) -> int:
        return len(self.terms[0])

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return tuple(M.shape[0] for M in self.terms[0])

    def to_dense(self) -> np.ndarray:
        """Full matrix of size prod(n) x prod(n); for small oracles only."""
        out = None
        for w, term in zip(self.weights, self.terms):
            M = np.array([[w]])
            for f in term:
                M = np.kron(M, f)
            out = M if out is None else out + M
        return out

    def apply_tt(self, u: TTTensor) -> TTTensor:
        """A u without rounding; interior ranks multiply by the term count."""
        if u.shape != self.mode_sizes:
            raise ValueError("mode size mismatch")
        T = len(self.terms)
        d = u.order
        cores = []
        for k in range(d):
            c = u.cores[k]
            r0, n, r1 = c.shape
            stacked = np.stack(
                [np.einsum("ij,ajb->aib", term[k], c) for term in self.terms], axis=0
            )
            if d == 1:
                cores.append(np.einsum("t,taib->aib", self.weights, stacked))
            elif k == 0:
                first = np.einsum("t,taib->aibt", self.weights, stacked)
                cores.append(first.reshape(r0, n, r1 * T))
            elif k == d - 1:
                cores.append(stacked.transpose(1, 0, 2, 3).reshape(r0 * T, n, r1))
            else:
                blk = np.zeros((T, r0, n, T, r1))
                idx = np.arange(T)
                blk[idx, :, :, idx, :] = stacked
                cores.append(blk.transpose(1, 0, 2, 4, 3).reshape(r0 * T, n, r1 * T))
        return TTTensor(cores)


def _left_orthogonalize_step(cores, k):
    """QR-split core k, absorbing the triangular factor into core k+1."""
    r0, n, r1 = cores[k].shape
    Q, R = np.linalg.qr(cores[k].reshape(r0 * n, r1))
    cores[k] = Q.reshape(r0, n, Q.shape[1])
    cores[k + 1] = np.einsum("ab,bnc->anc", R, cores[k + 1])


def _right_orthogonalize_step(cores, k):
    r0, n, r1 = cores[k].shape
    Q, R = np.linalg.qr(cores[k].reshape(r0, n * r1).T)
    cores[k] = Q.T.reshape(Q.shape[1], n, r1)
    cores[k - 1] = np.einsum("anb,bc->anc", cores[k - 1], R.T)


def _op_env_step(L, core, M):
    return np.einsum("ab,aic,ij,bjd->cd", L, core, M, core, optimize=True)


def _op_env_step_right(R, core, M):
    return np.einsum("cd,aic,ij,bjd->ab", R, core, M, core, optimize=True)


def _rhs_env_step(L, ucore, bcore):
    return np.einsum("ab,aic,bid->cd", L, ucore, bcore, optimize=True)


def _rhs_env_step_right(R, ucore, bcore):
    return np.einsum("cd,aic,bid->ab", R, ucore, bcore, optimize=True)


def als_solve(
    op: CPOperator,
    b: TTTensor,
    ranks,
    rng=None,
    sweeps: int = 10,
    ridge: float = 1e-12,
    tol: float = 1e-12,
    init: TTTensor | None = None,
):
    """Galerkin ALS for A u = b over TT of fixed interior ranks.

    Returns (u, objectives) where objectives holds J(u) = <u,Au>/2 - <u,b>
    after every core update.  A must be symmetric positive semidefinite for
    the energy interpretation (and the monotone decrease) to hold; ridge
    regularizes each local system.
    """
    if b.shape != op.mode_sizes:
        raise ValueError("rhs mode sizes do not match the operator")
    d = b.order
    if init is not None:
        u = init.copy()
        if u.shape != b.shape or u.out_dim != b.out_dim:
            raise ValueError("init does not match rhs")
    else:
        if rng is None:
            rng = np.random.default_rng(0)
        u = tt_rand(b.shape, ranks, rng, out_dim=b.out_dim)
    cores = u.cores
    for k in range(d - 1, 0, -1):
        _right_orthogonalize_step(cores, k)

    T = len(op.terms)
    w = op.weights

    def objective():
        uu = TTTensor(cores)
        return 0.5 * tt_dot(uu, op.apply_tt(uu)) - tt_dot(uu, b)

    def local_solve(k, Lops, Rops, Lb, Rb):
        r0, n, r1 = cores[k].shape
        m = r0 * n * r1
        A = np.zeros((m, m))
        for t in range(T):
            A += w[t] * np.einsum(
                "ab,ij,cd->aicbjd", Lops[t], op.terms[t][k], Rops[t]
            ).reshape(m, m)
        rhs = np.einsum("ab,bic,dc->aid", Lb, b.cores[k], Rb).reshape(m)
        A[np.diag_indices_from(A)] += ridge
        sol = np.linalg.solve(A, rhs)
        cores[k] = sol.reshape(r0, n, r1)

    objs = []
    prev = np.inf
    for _ in range(sweeps):
        # left-to-right: build right envs once, grow left envs as we go
        Rops = [[None] * (d + 1) for _ in range(T)]
        Rb = [None] * (d + 1)
        for t in range(T):
            Rops[t][d] = np.ones((1, 1))
        Rb[d] = np.ones((1, 1))
        for k in range(d - 1, 0, -1):
            for t in range(T):
                Rops[t][k] = _op_env_step_right(Rops[t][k + 1], cores[k], op.terms[t][k])
            Rb[k] = _rhs_env_step_right(Rb[k + 1], cores[k], b.cores[k])
        Lops = [np.eye(b.out_dim) for _ in range(T)]
        Lb = np.eye(b.out_dim)
        for k in range(d):
            local_solve(k, Lops, [Rops[t][k + 1] for t in range(T)], Lb, Rb[k + 1])
            objs.append(objective())
            if k < d - 1:
                _left_orthogonalize_step(cores, k)
                for t in range(T):
                    Lops[t] = _op_env_step(Lops[t], cores[k], op.terms[t][k])
                Lb = _rhs_env_step(Lb, cores[k], b.cores[k])
        # right-to-left
        Lops_all = [[None] * d for _ in range(T)]
        Lb_all = [None] * d
        for t in range(T):
            Lops_all[t][0] = np.eye(b.out_dim)
        Lb_all[0] = np.eye(b.out_dim)
        for k in range(d - 1):
            for t in range(T):
                Lops_all[t][k + 1] = _op_env_step(Lops_all[t][k], cores[k], op.terms[t][k])
            Lb_all[k + 1] = _rhs_env_step(Lb_all[k], cores[k], b.cores[k])
        Rops_cur = [np.ones((1, 1)) for _ in range(T)]
        Rb_cur = np.ones((1, 1))
        for k in range(d - 1, -1, -1):
            local_solve(k, [Lops_all[t][k] for t in range(T)], Rops_cur, Lb_all[k], Rb_cur)
            objs.append(objective())
            if k > 0:
                _right_orthogonalize_step(cores, k)
                for t in range(T):
                    Rops_cur[t] = _op_env_step_right(Rops_cur[t], cores[k], op.terms[t][k])
                Rb_cur = _rhs_env_step_right(Rb_cur, cores[k], b.cores[k])
        if abs(prev - objs[-1]) <= tol * max(abs(objs[-1]), 1.0):
            break
        prev = objs[-1]
    return TTTensor(cores), objs


def tt_regression(
    F: np.ndarray,
    y: np.ndarray,
    ranks,
    rng,
    sweeps: int = 30,
    ridge: float = 1e-10,
    tol: float = 1e-12,
):
    """Fit a scalar TT f so that <f, Phi(x_b)> ~= y_b in least squares.

    F holds per-sample per-mode feature rows, shape (B, d, n); the model value
    at sample b is the TT contracted against F[b, 0], ..., F[b, d-1].  One
    core is refit at a time by ridge-regularized normal equations while the
    rest of the chain stays orthogonal.  Returns (tt, history) with the mean
    squared error after every half sweep.
    """
    F = require_finite(np.asarray(F, dtype=float), "features")
    y = require_finite(np.asarray(y, dtype=float), "targets").ravel()
    B, d, n = F.shape
    if y.shape[0] != B:
        raise ValueError("feature/target batch mismatch")

    u = tt_rand((n,) * d, ranks, rng)
    cores = u.cores
    for k in range(d - 1, 0, -1):
        _right_orthogonalize_step(cores, k)

    def right_interfaces():
        R = [None] * (d + 1)
        R[d] = np.ones((B, 1))
        for k in range(d - 1, 0, -1):
            R[k] = np.einsum("anb,Bn,Bb->Ba", cores[k], F[:, k, :], R[k + 1])
        return R

    def left_interfaces():
        L = [None] * d
        L[0] = np.ones((B, 1))
        for k in range(d - 1):
            L[k + 1] = np.einsum("Ba,Bn,anb->Bb", L[k], F[:, k, :], cores[k])
        return L

    def solve_core(k, Lk, Rk):
        r0, _, r1 = cores[k].shape
        D = np.einsum("Ba,Bn,Bb->Banb", Lk, F[:, k, :], Rk).reshape(B, r0 * n * r1)
        G = D.T @ D
        G[np.diag_indices_from(G)] += ridge
        sol = np.linalg.solve(G, D.T @ y)
        cores[k] = sol.reshape(r0, n, r1)
        return D @ sol

    history = []
    prev = np.inf
    for _ in range(sweeps):
        R = right_interfaces()
        Lk = np.ones((B, 1))
        pred = None
        for k in range(d):
            pred = solve_core(k, Lk, R[k + 1])
            if k < d - 1:
                _left_orthogonalize_step(cores, k)
                Lk = np.einsum("Ba,Bn,anb->Bb", Lk, F[:, k, :], cores[k])
        history.append(float(np.mean((pred - y) ** 2)))
        L = left_interfaces()
        Rk = np.ones((B, 1))
        for k in range(d - 1, -1, -1):
            pred = solve_core(k, L[k], Rk)
            if k > 0:
                _right_orthogonalize_step(cores, k)
                Rk = np.einsum("anb,Bn,Bb->Ba", cores[k], F[:, k, :], Rk)
        history.append(float(np.mean((pred - y) ** 2)))
        if abs(prev - history[-1]) <= tol * max(history[-1], 1.0):
            break
        prev = history[-1]
    return TTTensor(cores), history


def tt_predict(tt: TTTensor, F: np.ndarray) -> np.ndarray:
    """Evaluate a scalar TT on feature rows F of shape (B, d, n)."""
    B = F.shape[0]
    v = np.ones((B, 1))
    for k in range(tt.order):
        v = np.einsum("Ba,anb,Bn->Bb", v, tt.cores[k], F[:, k, :])
    return v[:, 0]
