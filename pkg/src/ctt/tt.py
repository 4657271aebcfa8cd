"""Tensor-train format with an optional free output dimension.

A TTTensor is a chain of order-3 cores, cores[k] of shape (r_{k-1}, n_k, r_k)
with r_d = 1.  The leading rank r_0 is the output dimension of a vector-valued
coefficient tensor: entry (j, i_1, ..., i_d) is the j-th component of the
matrix chain U_1(i_1) ... U_d(i_d).  Scalar tensors simply have r_0 = 1.
Dense reconstructions therefore have shape (r_0, n_1, ..., n_d) when r_0 > 1
and (n_1, ..., n_d) otherwise.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .dense import require_finite, truncated_svd, numerical_rank


class TTTensor:
    def __init__(self, cores: list[np.ndarray]):
        if not cores:
            raise ValueError("need at least one core")
        cores = [require_finite(np.asarray(c, dtype=float), "core") for c in cores]
        for k, c in enumerate(cores):
            if c.ndim != 3:
                raise ValueError(f"core {k} must be order 3, got shape {c.shape}")
        for k in range(len(cores) - 1):
            if cores[k].shape[2] != cores[k + 1].shape[0]:
                raise ValueError(
                    f"rank mismatch between cores {k} and {k + 1}: "
                    f"{cores[k].shape[2]} vs {cores[k + 1].shape[0]}"
                )
        if cores[-1].shape[2] != 1:
            raise ValueError("last core must have right rank 1")
        self.cores = cores

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def out_dim(self) -> int:
        return int(self.cores[0].shape[0])

    @property
    def ranks(self) -> tuple[int, ...]:
        """Full rank tuple (r_0, r_1, ..., r_d); r_0 is the output dimension."""
        return (self.out_dim,) + tuple(c.shape[2] for c in self.cores)

    @property
    def dense_shape(self) -> tuple[int, ...]:
        if self.out_dim > 1:
            return (self.out_dim,) + self.shape
        return self.shape

    def n_params(self) -> int:
        return int(sum(c.size for c in self.cores))

    def copy(self) -> "TTTensor":
        return TTTensor([c.copy() for c in self.cores])

    def to_dense(self) -> np.ndarray:
        M = self.cores[0].reshape(self.out_dim * self.shape[0], -1)
        for c in self.cores[1:]:
            r = c.shape[0]
            M = M @ c.reshape(r, -1)
            M = M.reshape(-1, c.shape[2])
        return M.reshape(self.dense_shape)

    def entry(self, indices) -> float | np.ndarray:
        """Evaluate a single multi-index; vector of length out_dim if > 1."""
        indices = tuple(int(i) for i in indices)
        if len(indices) != self.order:
            raise ValueError(f"expected {self.order} indices, got {len(indices)}")
        v = self.cores[0][:, indices[0], :]
        for k in range(1, self.order):
            v = v @ self.cores[k][:, indices[k], :]
        v = v[:, 0]
        return float(v[0]) if self.out_dim == 1 else v

    def norm(self) -> float:
        return tt_norm(self)

    def __repr__(self) -> str:  # pragma: no cover
        return f"TTTensor(shape={self.shape}, ranks={self.ranks})"


def tt_svd(
    T: np.ndarray,
    out_dim: int = 1,
    max_ranks=None,
    rel_tol: float | None = None,
    abs_tol: float | None = None,
) -> TTTensor:
    """Sequential SVD decomposition of a dense tensor.

    When out_dim > 1 the leading axis of T is the output dimension and is
    fused into the first core.  A relative tolerance eps guarantees
    ||T - TT(T)||_F <= eps ||T||_F by giving each of the d-1 internal cuts
    an absolute budget of eps ||T||_F / sqrt(d-1); truncations at distinct
    cuts act on mutually orthogonal complements, so the committed errors add
    in square.
    """
    T = require_finite(T)
    if out_dim < 1:
        raise ValueError("out_dim must be >= 1")
    if out_dim > 1:
        if T.ndim < 2 or T.shape[0] != out_dim:
            raise ValueError(f"leading axis {T.shape[0]} does not match out_dim {out_dim}")
        modes = T.shape[1:]
    else:
        modes = T.shape
    d = len(modes)
    if d < 1:
        raise ValueError("tensor must have at least one mode")

    budget = None
    if rel_tol is not None and abs_tol is not None:
        raise ValueError("give rel_tol or abs_tol, not both")
    if rel_tol is not None:
        if rel_tol < 0:
            raise ValueError("rel_tol must be nonnegative")
        budget = rel_tol * float(np.linalg.norm(T.ravel()))
    elif abs_tol is not None:
        budget = float(abs_tol)
    per_cut = None if budget is None else budget / max(np.sqrt(d - 1), 1.0)

    if max_ranks is not None:
        if np.isscalar(max_ranks):
            max_ranks = [int(max_ranks)] * (d - 1)
        max_ranks = list(max_ranks)
        if len(max_ranks) != d - 1:
            raise ValueError(f"need {d - 1} interior rank caps, got {len(max_ranks)}")

    cores = []
    M = T.reshape(out_dim * modes[0], -1)
    r_prev = out_dim
    for k in range(d - 1):
        cap = None if max_ranks is None else max_ranks[k]
        res = truncated_svd(M, max_rank=cap, tol=per_cut)
        r = res.rank
        cores.append(res.U.reshape(r_prev, modes[k], r))
        M = (res.s[:, None] * res.V.T).reshape(r * modes[k + 1], -1)
        r_prev = r
    cores.append(M.reshape(r_prev, modes[d - 1], 1))
    return TTTensor(cores)


def tt_rand(shape, ranks, rng, out_dim: int = 1, scale: float = 1.0) -> TTTensor:
    """Random TT with given interior ranks (chain-compatibility enforced)."""
    d = len(shape)
    if np.isscalar(ranks):
        ranks = [int(ranks)] * (d - 1)
    rs = [out_dim] + [int(r) for r in ranks] + [1]
    # cap ranks at what the chain can support
    for k in range(1, d):
        rs[k] = min(rs[k], rs[k - 1] * shape[k - 1])
    for k in range(d - 1, 0, -1):
        rs[k] = min(rs[k], rs[k + 1] * shape[k])
    cores = [rng.normal(0.0, scale, (rs[k], shape[k], rs[k + 1])) for k in range(d)]
    return TTTensor(cores)


def _right_orthogonalize(cores: list[np.ndarray]) -> list[np.ndarray]:
    """Make cores 1..d-1 right-orthogonal, absorbing factors into core 0."""
    cores = [c.copy() for c in cores]
    for k in range(len(cores) - 1, 0, -1):
        r0, n, r1 = cores[k].shape
        Q, R = np.linalg.qr(cores[k].reshape(r0, n * r1).T)
        rnew = Q.shape[1]
        cores[k] = Q.T.reshape(rnew, n, r1)
        cores[k - 1] = np.einsum("anb,bc->anc", cores[k - 1], R.T)
    return cores


def tt_round(
    A: TTTensor,
    max_ranks=None,
    rel_tol: float | None = None,
    abs_tol: float | None = None,
) -> TTTensor:
    """Rank/tolerance re-truncation of a TT in the standard two-pass scheme.

    Right-to-left QR sweep brings the tensor into right-orthogonal gauge
    (so the whole Frobenius norm sits in core 0), then a left-to-right
    truncated-SVD sweep cuts each interface under the same square-additive
    budget split as tt_svd.
    """
    d = A.order
    cores = _right_orthogonalize(A.cores)
    norm = float(np.linalg.norm(cores[0].ravel()))

    budget = None
    if rel_tol is not None and abs_tol is not None:
        raise ValueError("give rel_tol or abs_tol, not both")
    if rel_tol is not None:
        budget = rel_tol * norm
    elif abs_tol is not None:
        budget = float(abs_tol)
    per_cut = None if budget is None else budget / max(np.sqrt(d - 1), 1.0)

    if max_ranks is not None:
        if np.isscalar(max_ranks):
            max_ranks = [int(max_ranks)] * (d - 1)
        max_ranks = list(max_ranks)
        if len(max_ranks) != d - 1:
            raise ValueError(f"need {d - 1} interior rank caps, got {len(max_ranks)}")

    for k in range(d - 1):
        r0, n, r1 = cores[k].shape
        cap = None if max_ranks is None else max_ranks[k]
        res = truncated_svd(cores[k].reshape(r0 * n, r1), max_rank=cap, tol=per_cut)
        r = res.rank
        cores[k] = res.U.reshape(r0, n, r)
        step = res.s[:, None] * res.V.T
        cores[k + 1] = np.einsum("ab,bnc->anc", step, cores[k + 1])
    return TTTensor(cores)


def tt_scale(A: TTTensor, alpha: float) -> TTTensor:
    cores = [c.copy() for c in A.cores]
    cores[0] = cores[0] * float(alpha)
    return TTTensor(cores)


def tt_add(A: TTTensor, B: TTTensor, alpha: float = 1.0, beta: float = 1.0) -> TTTensor:
    """alpha*A + beta*B by block-diagonal core concatenation (no rounding)."""
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    if A.out_dim != B.out_dim:
        raise ValueError(f"output dimension mismatch {A.out_dim} vs {B.out_dim}")
    d = A.order
    if d == 1:
        return TTTensor([alpha * A.cores[0] + beta * B.cores[0]])
    cores = []
    for k in range(d):
        a, b = A.cores[k], B.cores[k]
        if k == 0:
            c = np.concatenate([alpha * a, beta * b], axis=2)
        elif k == d - 1:
            c = np.concatenate([a, b], axis=0)
        else:
            ra0, n, ra1 = a.shape
            rb0, _, rb1 = b.shape
            c = np.zeros((ra0 + rb0, n, ra1 + rb1))
            c[:ra0, :, :ra1] = a
            c[ra0:, :, ra1:] = b
        cores.append(c)
    return TTTensor(cores)


def tt_dot(A: TTTensor, B: TTTensor) -> float:
    """Frobenius inner product; the output dimension is summed like a mode."""
    if A.shape != B.shape or A.out_dim != B.out_dim:
        raise ValueError("incompatible tensors")
    M = np.einsum("jna,jnb->ab", A.cores[0], B.cores[0])
    for k in range(1, A.order):
        M = np.einsum("ab,anc,bnd->cd", M, A.cores[k], B.cores[k])
    return float(M[0, 0])


def tt_norm(A: TTTensor) -> float:
    """Frobenius norm via orthogonalization (stable against cancellation)."""
    cores = _right_orthogonalize(A.cores)
    return float(np.linalg.norm(cores[0].ravel()))


def tt_interior_ranks(A: TTTensor) -> tuple[int, ...]:
    return tuple(c.shape[2] for c in A.cores[:-1])


def measured_ranks(T: np.ndarray, out_dim: int = 1) -> tuple[int, ...]:
    """Numerical TT ranks of a dense tensor (exact tt_svd, tiny values zeroed)."""
    T = require_finite(T)
    modes = T.shape[1:] if out_dim > 1 else T.shape
    d = len(modes)
    M = T.reshape(out_dim * modes[0], -1)
    ranks = []
    for k in range(d - 1):
        _, sv, Vt = np.linalg.svd(M, full_matrices=False)
        r = max(numerical_rank(sv), 1)
        ranks.append(r)
        M = (sv[:r, None] * Vt[:r]).reshape(r * modes[k + 1], -1)
    return tuple(ranks)


class CPTensor:
    """Canonical polyadic form: sum_t w_t * f_1[t] x ... x f_d[t]."""

    def __init__(self, factors: list[np.ndarray], weights: np.ndarray | None = None):
        if not factors:
            raise ValueError("need at least one factor")
        factors = [require_finite(np.asarray(f, dtype=float), "factor") for f in factors]
        R = factors[0].shape[0]
        for f in factors:
            if f.ndim != 2 or f.shape[0] != R:
                raise ValueError("factors must share the CP rank as first axis")
        self.factors = factors
        if weights is None:
            weights = np.ones(R)
        self.weights = require_finite(np.asarray(weights, dtype=float), "weights")
        if self.weights.shape != (R,):
            raise ValueError("weights must have one entry per CP term")

    @property
    def rank(self) -> int:
        return int(self.factors[0].shape[0])

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.shape[1] for f in self.factors)

    def to_dense(self) -> np.ndarray:
        R = self.rank
        out = np.zeros(self.shape)
        for t in range(R):
            term = self.weights[t] * self.factors[0][t]
            for f in self.factors[1:]:
                term = np.multiply.outer(term, f[t])
            out += term
        return out


def cp_to_tt(C: CPTensor, out_mode: bool = False) -> TTTensor:
    """Exact CP -> TT conversion with all interior ranks equal to the CP rank.

    With out_mode=True the first CP factor indexes the output dimension: the
    result is a vector-valued TT over the remaining modes with r_0 equal to
    that factor's width.
    """
    R = C.rank
    fs = C.factors
    w = C.weights
    if out_mode:
        if len(fs) < 2:
            raise ValueError("out_mode needs an output factor plus at least one mode")
        p = fs[0].shape[1]
        modes = fs[1:]
        d = len(modes)
        if d == 1:
            core = np.einsum("t,tj,ti->ji", w, fs[0], modes[0])[:, :, None]
            return TTTensor([core])
        first = np.einsum("t,tj,ti->jit", w, fs[0], modes[0])
        cores = [first]
    else:
        modes = fs
        d = len(modes)
        if d == 1:
            core = np.einsum("t,ti->i", w, modes[0])[None, :, None]
            return TTTensor([core])
        cores = [np.einsum("t,ti->it", w, modes[0])[None, :, :].reshape(1, -1, R)]
    for k in range(1, d - 1):
        n = modes[k].shape[1]
        c = np.zeros((R, n, R))
        idx = np.arange(R)
        c[idx, :, idx] = modes[k]
        cores.append(c)
    cores.append(modes[d - 1][:, :, None])
    return TTTensor(cores)


_MAGIC = b"TTC1"


def tt_dump(A: TTTensor) -> bytes:
    """Serialize to a self-describing little-endian byte string."""
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<II", A.order, A.out_dim))
    buf.write(struct.pack(f"<{A.order}I", *A.shape))
    buf.write(struct.pack(f"<{A.order + 1}I", *A.ranks))
    for c in A.cores:
        buf.write(np.ascontiguousarray(c, dtype="<f8").tobytes())
    return buf.getvalue()


def tt_parse(data: bytes) -> TTTensor:
    buf = io.BytesIO(data)
    magic = buf.read(4)
    if magic != _MAGIC:
        raise ValueError("not a TT container")
    order, out_dim = struct.unpack("<II", buf.read(8))
    shape = struct.unpack(f"<{order}I", buf.read(4 * order))
    ranks = struct.unpack(f"<{order + 1}I", buf.read(4 * (order + 1)))
    if ranks[0] != out_dim:
        raise ValueError("corrupt header: r_0 does not match out_dim")
    cores = []
    for k in range(order):
        cnt = ranks[k] * shape[k] * ranks[k + 1]
        raw = buf.read(8 * cnt)
        if len(raw) != 8 * cnt:
            raise ValueError("truncated core data")
        cores.append(np.frombuffer(raw, dtype="<f8").astype(float).reshape(ranks[k], shape[k], ranks[k + 1]))
    if buf.read(1):
        raise ValueError("trailing bytes after cores")
    return TTTensor(cores)


def tt_save(A: TTTensor, path) -> None:
    with open(path, "wb") as fh:
        fh.write(tt_dump(A))


def tt_load(path) -> TTTensor:
    with open(path, "rb") as fh:
        return tt_parse(fh.read())
