"""Compositional models: lift, residual feature layers, linear retraction.

A model of width p maps x in R^d to u(x) = R h_L, where h_0 = A x + b and
h_{k+1} = h_k + psi_k(h_k).  Each layer psi_k acts slot-wise through the
feature tensor Phi(h) = phi(h_1) x ... x phi(h_p): component s of psi_k(h) is
the inner product of coefficient slice psi_{k,s} in R^{n^p} with Phi(h).
Coefficients live either as a dense (p, n^p) matrix (trainable) or as a
vector-valued TT with r_0 = p (encoded / compressed).
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from .basis import Basis, deriv_matrix, feature_matrix, get_basis, kron_rows
from .dense import require_finite
from .tt import TTTensor, tt_dump, tt_parse


@dataclass
class Lift:
    """Affine embedding h = A x + b of inputs into the state space."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.A = require_finite(np.asarray(self.A, dtype=float), "lift matrix")
        self.b = require_finite(np.asarray(self.b, dtype=float), "lift offset")
        if self.A.ndim != 2 or self.b.shape != (self.A.shape[0],):
            raise ValueError("lift needs A of shape (p, d) and b of shape (p,)")

    @property
    def d_in(self) -> int:
        return self.A.shape[1]

    @property
    def width(self) -> int:
        return self.A.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return X @ self.A.T + self.b

    @staticmethod
    def identity(d: int) -> "Lift":
        return Lift(np.eye(d), np.zeros(d))

    @staticmethod
    def pad_one(d: int) -> "Lift":
        """h = (1, x_1, ..., x_d); width d + 1."""
        A = np.zeros((d + 1, d))
        A[1:, :] = np.eye(d)
        b = np.zeros(d + 1)
        b[0] = 1.0
        return Lift(A, b)

    @staticmethod
    def zero_pad(d: int, p: int) -> "Lift":
        """h = (x_1, ..., x_d, 0, ..., 0); width p >= d."""
        if p < d:
            raise ValueError("width must be at least the input dimension")
        A = np.zeros((p, d))
        A[:d, :] = np.eye(d)
        return Lift(A, np.zeros(p))

    @staticmethod
    def blockwise(d: int, slot_coeffs: np.ndarray, slot_offsets: np.ndarray) -> "Lift":
        """Each input coordinate expands to a block of q slots c_j x_i + a_j."""
        c = np.asarray(slot_coeffs, dtype=float)
        a = np.asarray(slot_offsets, dtype=float)
        if c.ndim != 1 or c.shape != a.shape:
            raise ValueError("slot_coeffs and slot_offsets must be equal-length vectors")
        q = c.shape[0]
        A = np.zeros((d * q, d))
        for i in range(d):
            A[i * q : (i + 1) * q, i] = c
        return Lift(A, np.tile(a, d))


def retraction_slots(p: int, slots) -> np.ndarray:
    """Rows picking the given state slots as outputs."""
    slots = [int(s) for s in slots]
    R = np.zeros((len(slots), p))
    for row, s in enumerate(slots):
        R[row, s] = 1.0
    return R


def retraction_first(p: int) -> np.ndarray:
    return retraction_slots(p, [0])


def retraction_identity(p: int) -> np.ndarray:
    return np.eye(p)


def _tt_rows_eval(tt: TTTensor, slot_feats: list[np.ndarray]) -> np.ndarray:
    """Contract a vector-valued TT against per-slot feature rows: -> (B, r_0)."""
    M = np.einsum("jia,bi->bja", tt.cores[0], slot_feats[0])
    for k in range(1, tt.order):
        M = np.einsum("bja,aic,bi->bjc", M, tt.cores[k], slot_feats[k])
    return M[:, :, 0]


class CTTLayer:
    """One residual update h -> h + psi(h) with dense or TT coefficients."""

    def __init__(self, basis: Basis, coeffs):
        self.basis = basis
        n = basis.size
        if isinstance(coeffs, TTTensor):
            if any(m != n for m in coeffs.shape):
                raise ValueError("TT mode sizes must equal the basis size")
            if coeffs.order != coeffs.out_dim:
                raise ValueError("layer TT must have one mode per state slot")
            self.tt: TTTensor | None = coeffs
            self.matrix: np.ndarray | None = None
            self.width = coeffs.out_dim
        else:
            C = require_finite(np.asarray(coeffs, dtype=float), "coefficients")
            if C.ndim >= 2 and C.shape == (C.shape[0],) + (n,) * C.shape[0]:
                C = C.reshape(C.shape[0], -1)
            if C.ndim != 2 or C.shape[1] != n ** C.shape[0]:
                raise ValueError(
                    f"dense coefficients must be (p, {n}^p) or (p, {n}, ..., {n})"
                )
            self.tt = None
            self.matrix = C
            self.width = C.shape[0]

    @property
    def is_tt(self) -> bool:
        return self.tt is not None

    def dense_coeffs(self) -> np.ndarray:
        """Natural-shape coefficient tensor (p, n, ..., n)."""
        if self.is_tt:
            return self.tt.to_dense()
        p, n = self.width, self.basis.size
        return self.matrix.reshape((p,) + (n,) * p)

    def n_params(self) -> int:
        return self.tt.n_params() if self.is_tt else int(self.matrix.size)

    def eval(self, H: np.ndarray) -> np.ndarray:
        """psi(h) for a batch of states: (B, p) -> (B, p)."""
        F = feature_matrix(self.basis, H)
        if self.is_tt:
            return _tt_rows_eval(self.tt, [F[:, k, :] for k in range(self.width)])
        return kron_rows(F) @ self.matrix.T

    def jacobian(self, H: np.ndarray) -> np.ndarray:
        """D psi(h) batch: (B, p, p), entry [b, s, t] = d psi_s / d h_t."""
        F = feature_matrix(self.basis, H)
        D = deriv_matrix(self.basis, H)
        B, p = H.shape
        J = np.empty((B, p, p))
        for t in range(p):
            if self.is_tt:
                feats = [D[:, k, :] if k == t else F[:, k, :] for k in range(p)]
                J[:, :, t] = _tt_rows_eval(self.tt, feats)
            else:
                J[:, :, t] = kron_rows(F, slot=t, D=D) @ self.matrix.T
        return J

    def copy(self) -> "CTTLayer":
        return CTTLayer(self.basis, self.tt.copy() if self.is_tt else self.matrix.copy())


class CTTModel:
    def __init__(self, lift: Lift, layers: list[CTTLayer], retraction: np.ndarray):
        retraction = require_finite(np.asarray(retraction, dtype=float), "retraction")
        p = lift.width
        for k, layer in enumerate(layers):
            if layer.width != p:
                raise ValueError(f"layer {k} width {layer.width} != model width {p}")
        if retraction.ndim != 2 or retraction.shape[1] != p:
            raise ValueError("retraction must be (d_out, p)")
        self.lift = lift
        self.layers = layers
        self.retraction = retraction

    @property
    def width(self) -> int:
        return self.lift.width

    @property
    def d_in(self) -> int:
        return self.lift.d_in

    @property
    def d_out(self) -> int:
        return self.retraction.shape[0]

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def trajectory(self, X: np.ndarray) -> list[np.ndarray]:
        """States [h_0, ..., h_L] for a batch of inputs."""
        H = self.lift.apply(X)
        states = [H]
        for layer in self.layers:
            H = H + layer.eval(H)
            states.append(H)
        return states

    def forward(self, X: np.ndarray) -> np.ndarray:
        return self.trajectory(X)[-1] @ self.retraction.T

    def copy(self) -> "CTTModel":
        return CTTModel(
            Lift(self.lift.A.copy(), self.lift.b.copy()),
            [layer.copy() for layer in self.layers],
            self.retraction.copy(),
        )

    def max_interior_rank(self) -> int:
        r = 1
        for layer in self.layers:
            if layer.is_tt:
                r = max(r, max(layer.tt.ranks))
        return r


def loss_and_residual(model: CTTModel, X: np.ndarray, y: np.ndarray):
    """Half mean squared residual and the residual matrix (B, d_out)."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    res = model.forward(X) - y
    loss = 0.5 * float(np.mean(np.sum(res**2, axis=1)))
    return loss, res


def relative_l2_error(pred: np.ndarray, truth: np.ndarray) -> float:
    """sqrt(sum |pred - truth|^2 / sum |truth|^2) over a sample."""
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    denom = float(np.sum(truth**2))
    if denom == 0.0:
        raise ValueError("reference values are identically zero")
    return float(np.sqrt(np.sum((pred - truth) ** 2) / denom))


_MODEL_MAGIC = b"CTM1"


def model_dump(model: CTTModel) -> bytes:
    buf = io.BytesIO()
    buf.write(_MODEL_MAGIC)
    name = model.layers[0].basis.name.encode() if model.layers else b"affine"
    p, d = model.width, model.d_in
    buf.write(struct.pack("<IIIII", d, p, model.d_out, model.n_layers, len(name)))
    buf.write(name)
    buf.write(np.ascontiguousarray(model.lift.A, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(model.lift.b, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(model.retraction, dtype="<f8").tobytes())
    for layer in model.layers:
        if layer.is_tt:
            blob = tt_dump(layer.tt)
            buf.write(struct.pack("<BQ", 1, len(blob)))
            buf.write(blob)
        else:
            blob = np.ascontiguousarray(layer.matrix, dtype="<f8").tobytes()
            buf.write(struct.pack("<BQ", 0, len(blob)))
            buf.write(blob)
    return buf.getvalue()


def model_parse(data: bytes) -> CTTModel:
    buf = io.BytesIO(data)
    if buf.read(4) != _MODEL_MAGIC:
        raise ValueError("not a model container")
    d, p, d_out, L, name_len = struct.unpack("<IIIII", buf.read(20))
    basis = get_basis(buf.read(name_len).decode())
    A = np.frombuffer(buf.read(8 * p * d), dtype="<f8").astype(float).reshape(p, d)
    b = np.frombuffer(buf.read(8 * p), dtype="<f8").astype(float)
    R = np.frombuffer(buf.read(8 * d_out * p), dtype="<f8").astype(float).reshape(d_out, p)
    layers = []
    for _ in range(L):
        kind, size = struct.unpack("<BQ", buf.read(9))
        blob = buf.read(size)
        if len(blob) != size:
            raise ValueError("truncated layer payload")
        if kind == 1:
            layers.append(CTTLayer(basis, tt_parse(blob)))
        else:
            M = np.frombuffer(blob, dtype="<f8").astype(float).reshape(p, -1)
            layers.append(CTTLayer(basis, M))
    if buf.read(1):
        raise ValueError("trailing bytes after layers")
    return CTTModel(Lift(A, b), layers, R)


def model_save(model: CTTModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_dump(model))


def model_load(path) -> CTTModel:
    with open(path, "rb") as fh:
        return model_parse(fh.read())
