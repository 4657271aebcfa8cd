"""Constructive exact encoders.

Affine maps, univariate Horner polynomials, sparse multivariate polynomials
with workspace-slot exponentiation, concatenation of two models, activation
vectorization, DNN encoding, Euler flows for Gaussian densities, and TT-rank
prediction for permuted Markov densities.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np

from .basis import Basis, affine, quadratic, relu_abs
from .dense import require_finite
from .model import CTTLayer, CTTModel, Lift, retraction_slots
from .tt import CPTensor, TTTensor, cp_to_tt, tt_add, tt_round, tt_scale, tt_svd

# Tolerance for exact constructions: tight enough to keep encoder outputs
# well inside the 1e-9 exactness contract, loose enough to shed the
# float-noise singular values that would otherwise inflate TT ranks.
_EXACT_TOL = 1e-13


def _require_affine_pair(basis: Basis, who: str) -> None:
    if not basis.has_affine_pair:
        raise ValueError(f"{who} needs a basis with phi_0 = 1 and phi_1 = x")


def _require_constant(basis: Basis, who: str) -> None:
    if not basis.has_constant:
        raise ValueError(f"{who} needs a basis with phi_0 = 1")


# ---------------------------------------------------------------------------
# affine maps


def _affine_cores(M: np.ndarray, b: np.ndarray, n: int, read_slots) -> list[np.ndarray]:
    """Explicit TT cores of psi(h) = M h[read_slots] + b on a width-p state.

    One pending channel per read slot, consumed by the linear feature when the
    chain walks past that slot.  When slot 0 is read its channel merges with
    the constant channel, so the interior ranks equal len(read_slots).
    """
    p = b.shape[0]
    read_slots = [int(s) for s in read_slots]
    if sorted(set(read_slots)) != read_slots:
        raise ValueError("read slots must be strictly increasing")
    m = len(read_slots)
    if M.shape != (p, m):
        raise ValueError(f"matrix must be {(p, m)}, got {M.shape}")

    if p == 1:
        core = np.zeros((1, n, 1))
        core[0, 0, 0] = b[0]
        if read_slots:
            core[0, 1, 0] += M[0, 0]
        return [core]

    merge = bool(read_slots) and read_slots[0] == 0
    r = m if merge else m + 1  # channel 0 = constant/done
    consume_at = {}  # state position -> channel
    for t, s in enumerate(read_slots):
        ch = t if merge else t + 1
        if ch > 0:
            consume_at[s] = ch

    first = np.zeros((p, n, r))
    first[:, 0, 0] = b
    if merge:
        first[:, 1, 0] += M[:, 0]
        for t in range(1, m):
            first[:, 0, t] = M[:, t]
    else:
        for t in range(m):
            first[:, 0, t + 1] = M[:, t]
    cores = [first]

    for k in range(1, p - 1):
        c = np.zeros((r, n, r))
        c[0, 0, 0] = 1.0
        for t, s in enumerate(read_slots):
            ch = t if merge else t + 1
            if ch == 0:
                continue
            if s == k:
                c[ch, 1, 0] = 1.0
            elif s > k:
                c[ch, 0, ch] = 1.0
        cores.append(c)

    last = np.zeros((r, n, 1))
    last[0, 0, 0] = 1.0
    if read_slots and read_slots[-1] == p - 1:
        ch = m - 1 if merge else m
        last[ch, 1, 0] = 1.0
    cores.append(last)
    return cores


def encode_affine(A: np.ndarray, b: np.ndarray, basis: Basis | None = None) -> CTTLayer:
    """Layer with (Id + psi)(h) = A h + b, interior TT ranks <= p."""
    basis = affine() if basis is None else basis
    _require_affine_pair(basis, "affine encoding")
    A = require_finite(np.asarray(A, dtype=float), "matrix")
    b = require_finite(np.asarray(b, dtype=float), "offset")
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    p = A.shape[0]
    if b.shape != (p,):
        raise ValueError(f"offset must have shape ({p},)")
    M = A - np.eye(p)
    cores = _affine_cores(M, b, basis.size, range(p))
    return CTTLayer(basis, TTTensor(cores))


# ---------------------------------------------------------------------------
# univariate polynomials (Horner scheme)


def encode_univariate_poly(coeffs, basis: Basis | None = None) -> CTTModel:
    """Model computing sum_k a_k x^k on the width-2 state (accumulator, x).

    One layer per Horner step: the accumulator v is replaced by
    a_{D-k+1} + x v, which the residual update realizes as the bilinear
    increment a + v(x - 1).  Degree D costs exactly D + 1 layers.
    """
    a = require_finite(np.asarray(coeffs, dtype=float), "coefficients")
    if a.ndim != 1 or a.size == 0:
        raise ValueError("need a non-empty 1-d coefficient array")
    basis = affine() if basis is None else basis
    _require_affine_pair(basis, "polynomial encoding")
    n = basis.size
    D = a.size - 1

    layers = []
    T = np.zeros((2, n, n))
    T[0, 0, 0] = a[D]
    layers.append(CTTLayer(basis, tt_svd(T, out_dim=2, rel_tol=_EXACT_TOL)))
    for k in range(2, D + 2):
        T = np.zeros((2, n, n))
        T[0, 0, 0] = a[D - k + 1]
        T[0, 1, 1] = 1.0
        T[0, 1, 0] = -1.0
        layers.append(CTTLayer(basis, tt_svd(T, out_dim=2, rel_tol=_EXACT_TOL)))

    lift = Lift(np.array([[0.0], [1.0]]), np.zeros(2))
    return CTTModel(lift, layers, retraction_slots(2, [0]))


# ---------------------------------------------------------------------------
# sparse multivariate polynomials


@dataclass
class SparsePolynomial:
    """P(x) = sum_alpha c_alpha x^alpha over a sparse multi-index set."""

    indices: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices)
        if idx.ndim != 2 or idx.shape[0] == 0 or idx.shape[1] == 0:
            raise ValueError("indices must be a non-empty (terms, variables) array")
        if not np.issubdtype(idx.dtype, np.integer) or np.any(idx < 0):
            raise ValueError("multi-indices must be nonnegative integers")
        c = require_finite(np.asarray(self.coeffs, dtype=float), "coefficients")
        if c.shape != (idx.shape[0],):
            raise ValueError("need one coefficient per multi-index")
        self.indices = idx.astype(int)
        self.coeffs = c

    @property
    def n_terms(self) -> int:
        return self.indices.shape[0]

    @property
    def n_vars(self) -> int:
        return self.indices.shape[1]

    @property
    def max_degrees(self) -> np.ndarray:
        """Per-variable maximum exponent N_j."""
        return self.indices.max(axis=0)

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[:-1])
        for alpha, c in zip(self.indices, self.coeffs):
            out += c * np.prod(X ** alpha, axis=-1)
        return out


# Layer vocabulary for the exponentiation planner.  Every op keeps the layer
# tensor at interior TT ranks <= 2:
#   write w_i <- mono     (mono = product of distinct slots, may include w_i)
#   pair  w_i, w_j <- mono  with mono in {w_i, w_j, w_i w_j, x w_i, x w_j};
#                         a shared pure-x write needs rank 3 and is excluded
#   mul   reg <- reg * mono (mono = product of x and/or live workspaces)
_PLAN_CAP = 32


def _mono_value(mono, ws) -> int:
    return sum(1 if t == "x" else ws[t] for t in mono)


def _transitions(ws, r, alpha, q):
    live = [i for i in range(q) if ws[i] is not None]
    tokens = ["x"] + live
    subsets = [
        combo
        for size in range(1, len(tokens) + 1)
        for combo in combinations(tokens, size)
    ]
    for mono in subsets:
        val = _mono_value(mono, ws)
        if r + val <= alpha:
            yield ("mul", mono), (ws, r + val)
    for i in range(q):
        for mono in subsets:
            val = _mono_value(mono, ws)
            if 0 < val <= alpha:
                nws = list(ws)
                nws[i] = val
                yield ("write", i, mono), (tuple(nws), r)
    for i in range(q):
        for j in range(i + 1, q):
            monos = [(i,), (j,), (i, j), ("x", i), ("x", j)]
            for mono in monos:
                if any(t != "x" and ws[t] is None for t in mono):
                    continue
                val = _mono_value(mono, ws)
                if 0 < val <= alpha:
                    nws = list(ws)
                    nws[i] = val
                    nws[j] = val
                    yield ("pair", i, j, mono), (tuple(nws), r)


def _doubling_plan(alpha: int) -> tuple:
    """Square-and-multiply fallback for exponents above the planner cap."""
    ops = [("write", 0, ("x",)), ("pair", 0, 1, (0,))]
    bits = bin(alpha)[2:][::-1]
    for k, bit in enumerate(bits):
        if bit == "1":
            ops.append(("mul", (0,)))
        if k < len(bits) - 1:
            ops.append(("pair", 0, 1, (0, 1)))
    return tuple(ops)


@lru_cache(maxsize=None)
def _power_plan(alpha: int, q: int) -> tuple:
    """Minimal layer sequence multiplying the register by x^alpha."""
    if alpha < 1:
        return ()
    if alpha > _PLAN_CAP:
        return _doubling_plan(alpha)
    start = ((None,) * q, 0)
    prev: dict = {start: None}
    goal = None
    dq = deque([start])
    while dq:
        state = dq.popleft()
        if state[1] == alpha:
            goal = state
            break
        for op, nxt in _transitions(state[0], state[1], alpha, q):
            if nxt not in prev:
                prev[nxt] = (state, op)
                dq.append(nxt)
    if goal is None:  # pragma: no cover - every alpha >= 1 is reachable
        raise RuntimeError(f"no plan found for exponent {alpha}")
    ops = []
    state = goal
    while prev[state] is not None:
        state, op = prev[state]
        ops.append(op)
    return tuple(reversed(ops))


def _cp_layer(basis: Basis, p: int, terms) -> CTTLayer:
    """Layer from a list of (weight, out_slot, [(slot, feature), ...]) terms."""
    n = basis.size
    R = len(terms)
    out = np.zeros((R, p))
    modes = [np.zeros((R, n)) for _ in range(p)]
    w = np.zeros(R)
    for t, (weight, out_slot, feats) in enumerate(terms):
        w[t] = weight
        out[t, out_slot] = 1.0
        chosen = dict(feats)
        for k in range(p):
            modes[k][t, chosen.get(k, 0)] = 1.0
    tt = cp_to_tt(CPTensor([out] + modes, w), out_mode=True)
    return CTTLayer(basis, tt_round(tt, rel_tol=_EXACT_TOL))


def _write_terms(slot: int, mono_slots, coeff: float = 1.0):
    return [
        (coeff, slot, [(s, 1) for s in mono_slots]),
        (-1.0, slot, [(slot, 1)]),
    ]


def sparse_poly_layer_bound(P: SparsePolynomial, q: int) -> int:
    """Closed-form layer budget |Lambda|(2+d) + sum floor(log_q(alpha_j+1))."""
    total = P.n_terms * (2 + P.n_vars)
    for alpha in P.indices:
        for a in alpha:
            v = int(a) + 1
            while v >= q:
                v //= q
                total += 1
    return total


def encode_sparse_poly(P: SparsePolynomial, q: int = 2, basis: Basis | None = None) -> CTTModel:
    """Exact model for a sparse polynomial on the width d+2+q state.

    State layout: accumulator, the d input copies, a register, and q
    workspace slots.  Each monomial costs one register write, a planned
    exponentiation run per active variable, and one accumulator add.  Every
    emitted layer keeps interior TT ranks <= 2.
    """
    if q < 2:
        raise ValueError("need at least two workspace slots")
    basis = affine() if basis is None else basis
    _require_affine_pair(basis, "sparse polynomial encoding")
    d = P.n_vars
    p = d + 2 + q
    acc, reg, ws0 = 0, d + 1, d + 2

    def slot_of(token, var_slot):
        return var_slot if token == "x" else ws0 + token

    layers = []
    for alpha, c in zip(P.indices, P.coeffs):
        layers.append(_cp_layer(basis, p, _write_terms(reg, [], c)))
        for j, a in enumerate(alpha):
            if a == 0:
                continue
            var = 1 + j
            for op in _power_plan(int(a), q):
                if op[0] == "write":
                    _, i, mono = op
                    terms = _write_terms(ws0 + i, [slot_of(t, var) for t in mono])
                elif op[0] == "pair":
                    _, i, jj, mono = op
                    mono_slots = [slot_of(t, var) for t in mono]
                    terms = _write_terms(ws0 + i, mono_slots) + _write_terms(
                        ws0 + jj, mono_slots
                    )
                else:
                    _, mono = op
                    terms = [
                        (1.0, reg, [(reg, 1)] + [(slot_of(t, var), 1) for t in mono]),
                        (-1.0, reg, [(reg, 1)]),
                    ]
                layers.append(_cp_layer(basis, p, terms))
        layers.append(_cp_layer(basis, p, [(1.0, acc, [(reg, 1)])]))

    A = np.zeros((p, d))
    A[1 : d + 1, :] = np.eye(d)
    return CTTModel(Lift(A, np.zeros(p)), layers, retraction_slots(p, [acc]))


# ---------------------------------------------------------------------------
# concatenation and vectorization


def _layer_tt(layer: CTTLayer) -> TTTensor:
    if layer.is_tt:
        return layer.tt
    return tt_svd(layer.dense_coeffs(), out_dim=layer.width, rel_tol=_EXACT_TOL)


def _e1_cores(count: int, n: int) -> list[np.ndarray]:
    core = np.zeros((1, n, 1))
    core[0, 0, 0] = 1.0
    return [core.copy() for _ in range(count)]


def _out_factor(tt: TTTensor):
    """Split core 0 across the output index: returns Q (p, rho) and the
    remaining (rho, n, r_1) core with Q @ unfold = original."""
    p, n, r1 = tt.cores[0].shape
    U, s, Vt = np.linalg.svd(tt.cores[0].reshape(p, n * r1), full_matrices=False)
    tol = max(s[0], 0.0) * 1e-14 if s.size else 0.0
    rho = max(int(np.sum(s > tol)), 1)
    Q = U[:, :rho]
    S = (s[:rho, None] * Vt[:rho]).reshape(rho, n, r1)
    return Q, S


def _routed_tt(tt: TTTensor, p_out: int, out_offset: int, left_pad: int, right_pad: int, n: int) -> TTTensor:
    """Embed a block layer into a wider state: constant cores around the
    block, output rows moved to out_offset.  Routing the output index across
    the left padding costs the rank of the block's output unfolding."""
    if left_pad == 0:
        first = np.zeros((p_out,) + tt.cores[0].shape[1:])
        first[out_offset : out_offset + tt.cores[0].shape[0]] = tt.cores[0]
        cores = [first] + [c.copy() for c in tt.cores[1:]]
    else:
        Q, S = _out_factor(tt)
        rho = Q.shape[1]
        first = np.zeros((p_out, n, rho))
        first[out_offset : out_offset + Q.shape[0], 0, :] = Q
        route = np.zeros((rho, n, rho))
        route[:, 0, :] = np.eye(rho)
        cores = [first] + [route.copy() for _ in range(left_pad - 1)] + [S]
        cores += [c.copy() for c in tt.cores[1:]]
    cores += _e1_cores(right_pad, n)
    return TTTensor(cores)


def _model_basis(model: CTTModel) -> Basis | None:
    if not model.layers:
        return None
    basis = model.layers[0].basis
    for layer in model.layers[1:]:
        if layer.basis.name != basis.name or layer.basis.size != basis.size:
            raise ValueError("model mixes bases")
    return basis


def concat_ct(f: CTTModel, g: CTTModel) -> CTTModel:
    """Model computing x -> (f(x), g(x)) on the stacked width p_f + p_g.

    Layers pair up one f-step with one g-step; the shorter model is padded
    with zero layers.  Each side acts on its own block through constant
    cores on the other block.
    """
    if f.d_in != g.d_in:
        raise ValueError("input dimensions differ")
    bf, bg = _model_basis(f), _model_basis(g)
    if bf is not None and bg is not None and (bf.name != bg.name or bf.size != bg.size):
        raise ValueError("bases differ")
    basis = bf if bf is not None else bg
    pf, pg = f.width, g.width
    p = pf + pg
    L = max(f.n_layers, g.n_layers)
    if L > 0 and basis is None:  # pragma: no cover - unreachable by construction
        raise ValueError("layered concatenation needs a basis")
    if basis is not None:
        _require_constant(basis, "concatenation")
        n = basis.size

    layers = []
    for k in range(L):
        parts = []
        if k < f.n_layers:
            parts.append(_routed_tt(_layer_tt(f.layers[k]), p, 0, 0, pg, n))
        if k < g.n_layers:
            parts.append(_routed_tt(_layer_tt(g.layers[k]), p, pf, pf, 0, n))
        tt = parts[0]
        if len(parts) == 2:
            tt = tt_round(tt_add(parts[0], parts[1]), rel_tol=_EXACT_TOL)
        layers.append(CTTLayer(basis, tt))

    A = np.vstack([f.lift.A, g.lift.A])
    b = np.concatenate([f.lift.b, g.lift.b])
    R = np.zeros((f.d_out + g.d_out, p))
    R[: f.d_out, :pf] = f.retraction
    R[f.d_out :, pf:] = g.retraction
    return CTTModel(Lift(A, b), layers, R)


def vectorize_activation(sigma: CTTModel, d: int) -> CTTModel:
    """Apply a scalar model slotwise: output_i = sigma(x_i), width d * p_sigma."""
    if sigma.d_in != 1 or sigma.d_out != 1:
        raise ValueError("activation model must map scalars to scalars")
    if d < 1:
        raise ValueError("need at least one slot")
    ps = sigma.width
    basis = _model_basis(sigma)
    if basis is not None:
        _require_constant(basis, "vectorization")
        n = basis.size
    p = d * ps

    layers = []
    for layer in sigma.layers:
        tt = _layer_tt(layer)
        total = _routed_tt(tt, p, 0, 0, (d - 1) * ps, n)
        for k in range(1, d):
            part = _routed_tt(tt, p, k * ps, k * ps, (d - 1 - k) * ps, n)
            total = tt_round(tt_add(total, part), rel_tol=_EXACT_TOL)
        layers.append(CTTLayer(basis, total))

    lift = Lift.blockwise(d, sigma.lift.A[:, 0], sigma.lift.b)
    R = np.zeros((d, p))
    for i in range(d):
        R[i, i * ps : (i + 1) * ps] = sigma.retraction[0]
    return CTTModel(lift, layers, R)


# ---------------------------------------------------------------------------
# deep network encoding


@dataclass
class DNNSpec:
    """Feed-forward network T_L o sigma o ... o sigma o T_1.

    activation "relu" uses the {1, x, |x|} basis (relu = x/2 + |x|/2);
    a coefficient array selects a polynomial activation handled through
    per-neuron Horner workspaces.
    """

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)
    activation: object = "relu"

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValueError("need matching non-empty weight and bias lists")
        self.weights = [require_finite(np.asarray(W, dtype=float), "weights") for W in self.weights]
        self.biases = [require_finite(np.asarray(bb, dtype=float), "biases") for bb in self.biases]
        for W, bb in zip(self.weights, self.biases):
            if W.ndim != 2 or bb.shape != (W.shape[0],):
                raise ValueError("each layer needs a matrix and a matching bias")
        for Wa, Wb in zip(self.weights, self.weights[1:]):
            if Wb.shape[1] != Wa.shape[0]:
                raise ValueError("layer dimensions do not chain")
        if self.depth >= 2:
            inner = [W.shape[0] for W in self.weights[:-1]]
            if len(set(inner)) != 1:
                raise ValueError("hidden widths must be constant")
            if self.hidden_width < max(self.d_in, self.d_out):
                raise ValueError("hidden width must cover input and output sizes")
        if not isinstance(self.activation, str):
            self.activation = require_finite(
                np.asarray(self.activation, dtype=float), "activation coefficients"
            )
            if self.activation.ndim != 1 or self.activation.size == 0:
                raise ValueError("polynomial activation needs 1-d coefficients")
        elif self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[1]

    @property
    def d_out(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def hidden_width(self) -> int:
        if self.depth == 1:
            return max(self.d_in, self.d_out)
        return self.weights[0].shape[0]

    def apply_activation(self, H: np.ndarray) -> np.ndarray:
        if isinstance(self.activation, str):
            return np.maximum(H, 0.0)
        return np.polynomial.polynomial.polyval(H, self.activation)


def dnn_forward(spec: DNNSpec, X: np.ndarray) -> np.ndarray:
    """Reference forward pass of the network."""
    H = np.asarray(X, dtype=float)
    for k, (W, b) in enumerate(zip(spec.weights, spec.biases)):
        H = H @ W.T + b
        if k < spec.depth - 1:
            H = spec.apply_activation(H)
    return H


def _padded_weight(W: np.ndarray, p: int) -> np.ndarray:
    out = np.zeros((p, p))
    out[: W.shape[0], : W.shape[1]] = W
    return out


def _encode_dnn_relu(spec: DNNSpec) -> CTTModel:
    basis = relu_abs()
    n = basis.size
    p = spec.hidden_width
    L = spec.depth

    layers = []
    for k, (W, b) in enumerate(zip(spec.weights, spec.biases)):
        M = _padded_weight(W, p) - np.eye(p)
        bp = np.zeros(p)
        bp[: b.shape[0]] = b
        layers.append(CTTLayer(basis, TTTensor(_affine_cores(M, bp, n, range(p)))))
        if k < L - 1:
            terms = []
            for s in range(p):
                terms.append((-0.5, s, [(s, 1)]))
                terms.append((0.5, s, [(s, 2)]))
            layers.append(_cp_layer(basis, p, terms))

    return CTTModel(Lift.zero_pad(spec.d_in, p), layers, retraction_slots(p, range(spec.d_out)))


def _encode_dnn_poly(spec: DNNSpec) -> CTTModel:
    """Polynomial activation through per-neuron (value, workspace) blocks.

    Affine layers read and write only block heads; each activation round
    starts with a combined layer moving the head into the workspace while
    seeding the Horner accumulator, so a degree-D activation costs exactly
    D + 1 layers per round.
    """
    basis = affine()
    n = basis.size
    a = spec.activation
    D = a.size - 1
    pf = spec.hidden_width
    p = 2 * pf
    L = spec.depth
    heads = [2 * i for i in range(pf)]

    layers = []
    for k, (W, b) in enumerate(zip(spec.weights, spec.biases)):
        Wp = _padded_weight(W, pf) - np.eye(pf)
        M = np.zeros((p, pf))
        M[heads, :] = Wp
        bp = np.zeros(p)
        bp[[2 * i for i in range(b.shape[0])]] = b
        layers.append(CTTLayer(basis, TTTensor(_affine_cores(M, bp, n, heads))))
        if k == L - 1:
            break
        terms = []
        for i in range(pf):
            h, w = 2 * i, 2 * i + 1
            terms += _write_terms(h, [], a[D]) + _write_terms(w, [h])
        layers.append(_cp_layer(basis, p, terms))
        for step in range(2, D + 2):
            terms = []
            for i in range(pf):
                h, w = 2 * i, 2 * i + 1
                terms += [
                    (a[D - step + 1], h, []),
                    (1.0, h, [(h, 1), (w, 1)]),
                    (-1.0, h, [(h, 1)]),
                ]
            layers.append(_cp_layer(basis, p, terms))

    A = np.zeros((p, spec.d_in))
    for i in range(spec.d_in):
        A[2 * i, i] = 1.0
    R = retraction_slots(p, [2 * i for i in range(spec.d_out)])
    return CTTModel(Lift(A, np.zeros(p)), layers, R)


def encode_dnn(spec: DNNSpec) -> CTTModel:
    """Exact model for the network, 2L-1 layers when the activation lies in
    the basis span (ReLU over {1, x, |x|}), L + (L-1)(D+1) layers for a
    degree-D polynomial activation."""
    if isinstance(spec.activation, str):
        return _encode_dnn_relu(spec)
    return _encode_dnn_poly(spec)


# ---------------------------------------------------------------------------
# Gaussian Euler flow


def quadratic_form_tt(Gamma: np.ndarray, basis: Basis | None = None) -> TTTensor:
    """TT of f(h) = (-(1/2) h_1 * h_rest^T Gamma h_rest, 0, ..., 0) over
    {1, x, x^2} features on the width d+1 state."""
    basis = quadratic() if basis is None else basis
    G = require_finite(np.asarray(Gamma, dtype=float), "quadratic form")
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError("Gamma must be square")
    d = G.shape[0]
    p = d + 1
    n = basis.size
    T = np.zeros((p,) + (n,) * p)
    for i in range(d):
        for j in range(d):
            idx = [0] * (p + 1)
            idx[1] = 1  # h_1 enters linearly
            if i == j:
                idx[2 + i] = 2
            else:
                idx[2 + i] = 1
                idx[2 + j] = 1
            T[tuple(idx)] += -0.5 * G[i, j]
    return tt_svd(T, out_dim=p, rel_tol=_EXACT_TOL)


def build_gaussian_flow(Gamma: np.ndarray, N: int, basis: Basis | None = None) -> CTTModel:
    """N identical Euler steps of the density flow; the retracted output
    approximates exp(-(1/2) x^T Gamma x) with O(1/N) error."""
    basis = quadratic() if basis is None else basis
    G = require_finite(np.asarray(Gamma, dtype=float), "quadratic form")
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError("Gamma must be square")
    if not np.allclose(G, G.T, atol=1e-12):
        raise ValueError("Gamma must be symmetric")
    w = np.linalg.eigvalsh(G)
    if w.size and w.min() < -1e-12 * max(abs(w).max(), 1.0):
        raise ValueError("Gamma must be positive semidefinite")
    if N < 1:
        raise ValueError("need at least one Euler step")
    d = G.shape[0]
    tt = tt_scale(quadratic_form_tt(G, basis), 1.0 / N)
    layers = [CTTLayer(basis, tt.copy()) for _ in range(N)]
    return CTTModel(Lift.pad_one(d), layers, retraction_slots(d + 1, [0]))


# ---------------------------------------------------------------------------
# permuted Markov densities


def odd_even_permutation(d: int) -> np.ndarray:
    """Variable order (1, 3, 5, ..., 2, 4, 6, ...) as 0-indexed positions."""
    if d < 1:
        raise ValueError("dimension must be positive")
    return np.array(list(range(0, d, 2)) + list(range(1, d, 2)), dtype=int)


def predicted_permuted_markov_ranks(ms, grid: int | None = None) -> tuple[int, ...]:
    """Interior TT ranks of a Markov density reordered odd-then-even.

    Cut k separates the first k reordered variables from the rest; every
    chain factor straddling the cut contributes its rank m_j to both
    endpoint variables, and a finite grid caps each variable's factor at the
    grid size.  Without a grid this reduces to the plain two-branch product
    over the straddling factors.
    """
    ms = np.asarray(ms, dtype=int)
    d = ms.size + 1
    if d < 3:
        raise ValueError("need at least three variables")
    if np.any(ms < 1):
        raise ValueError("chain ranks must be >= 1")
    cap = np.inf if grid is None else int(grid)
    perm = odd_even_permutation(d)

    ranks = []
    for k in range(1, d):
        left = set(perm[:k])
        straddle = [
            j
            for j in range(1, d)  # factor j couples variables j-1 and j
            if (j - 1 in left) != (j in left)
        ]
        best = np.inf
        for side in (left, set(range(d)) - left):
            prod = 1.0
            for v in side:
                touch = 1
                for j in straddle:
                    if v in (j - 1, j):
                        touch *= int(ms[j - 1])
                prod *= min(cap, touch)
            best = min(best, prod)
        ranks.append(int(best))
    return tuple(ranks)


def build_markov_density(ms, grid: int, rng) -> np.ndarray:
    """Tabular Markov density with per-factor conditional tables of exact
    rank m_j; returns the dense (grid, ..., grid) probability tensor."""
    ms = np.asarray(ms, dtype=int)
    d = ms.size + 1
    if np.any(ms < 1) or np.any(ms > grid):
        raise ValueError("chain ranks must lie in [1, grid]")
    first = rng.uniform(0.5, 1.5, grid)
    first /= first.sum()
    tables = []
    for m in ms:
        for _ in range(100):
            T = rng.uniform(0.5, 1.5, (grid, int(m))) @ rng.uniform(0.5, 1.5, (int(m), grid))
            if np.linalg.matrix_rank(T) == m:
                break
        else:  # pragma: no cover - positive random factors are full rank a.s.
            raise RuntimeError("could not draw a full-rank conditional table")
        tables.append(T / T.sum(axis=1, keepdims=True))

    P = first
    for T in tables:
        P = np.einsum("...i,ij->...ij", P, T)
    return P


def permute_density(P: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Reorder tensor axes so position k holds original variable perm[k]."""
    return np.transpose(P, axes=list(perm))
