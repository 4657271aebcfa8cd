"""Univariate feature maps applied slot-wise, and their tensor-product rows.

A layer in this library acts on a state h in R^p through the feature tensor
Phi(h) = phi(h_1) x ... x phi(h_p), where phi: R -> R^n is a fixed univariate
basis.  Encoders assume the first two basis functions are the constant 1 and
the identity x; every built-in basis satisfies that.
"""

from __future__ import annotations

import numpy as np

from .dense import require_finite


class Basis:
    """Vectorized univariate basis phi with derivative phi'."""

    def __init__(self, name: str, size: int, values, derivs):
        self.name = name
        self.size = int(size)
        self._values = values
        self._derivs = derivs

    def values(self, x: np.ndarray) -> np.ndarray:
        """phi evaluated entrywise; output shape x.shape + (size,)."""
        x = np.asarray(x, dtype=float)
        return self._values(x)

    def derivs(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._derivs(x)

    @property
    def has_constant(self) -> bool:
        """True when phi_0 = 1 (checked at a few probe points)."""
        t = np.array([-1.5, -0.3, 0.0, 0.7, 2.0])
        return bool(np.allclose(self.values(t)[:, 0], 1.0, atol=1e-12))

    @property
    def has_affine_pair(self) -> bool:
        """True when phi_0 = 1 and phi_1 = x (checked at a few probe points)."""
        t = np.array([-1.5, -0.3, 0.0, 0.7, 2.0])
        V = self.values(t)
        if self.size < 2:
            return False
        return bool(
            np.allclose(V[:, 0], 1.0, atol=1e-12) and np.allclose(V[:, 1], t, atol=1e-12)
        )

    def __repr__(self) -> str:  # pragma: no cover
        return f"Basis({self.name!r}, size={self.size})"


def monomial(degree: int) -> Basis:
    """{1, x, x^2, ..., x^degree}."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    n = degree + 1

    def values(x):
        return np.stack([x**k for k in range(n)], axis=-1)

    def derivs(x):
        cols = [np.zeros_like(x)]
        for k in range(1, n):
            cols.append(k * x ** (k - 1))
        return np.stack(cols, axis=-1)

    return Basis(f"monomial{degree}", n, values, derivs)


def affine() -> Basis:
    b = monomial(1)
    b.name = "affine"
    return b


def quadratic() -> Basis:
    b = monomial(2)
    b.name = "quadratic"
    return b


def relu_abs() -> Basis:
    """{1, x, |x|}; the kink derivative at 0 is taken as 0."""

    def values(x):
        return np.stack([np.ones_like(x), x, np.abs(x)], axis=-1)

    def derivs(x):
        return np.stack([np.zeros_like(x), np.ones_like(x), np.sign(x)], axis=-1)

    return Basis("relu-abs", 3, values, derivs)


_NAMED = {
    "affine": affine,
    "quadratic": quadratic,
    "relu-abs": relu_abs,
}


def get_basis(name: str) -> Basis:
    """Look up a basis by name; 'monomial<D>' selects degrees beyond 2."""
    if name in _NAMED:
        return _NAMED[name]()
    if name.startswith("monomial"):
        try:
            return monomial(int(name[len("monomial"):]))
        except ValueError:
            pass
    raise KeyError(f"unknown basis {name!r}")


def feature_matrix(basis: Basis, H: np.ndarray) -> np.ndarray:
    """Slot-wise features of a batch of states: (B, p) -> (B, p, n)."""
    H = require_finite(np.asarray(H, dtype=float), "states")
    if H.ndim != 2:
        raise ValueError("expected a batch of states, shape (B, p)")
    return basis.values(H)


def deriv_matrix(basis: Basis, H: np.ndarray) -> np.ndarray:
    H = require_finite(np.asarray(H, dtype=float), "states")
    if H.ndim != 2:
        raise ValueError("expected a batch of states, shape (B, p)")
    return basis.derivs(H)


def kron_rows(F: np.ndarray, slot: int | None = None, D: np.ndarray | None = None) -> np.ndarray:
    """Row-wise Kronecker product over slots: (B, p, n) -> (B, n^p).

    The first slot varies slowest, matching C-order reshapes of coefficient
    arrays of shape (n, ..., n).  With slot/D given, that slot's features are
    replaced by the rows of D (used for derivative rows of the same product).
    """
    B, p, n = F.shape
    if (slot is None) != (D is None):
        raise ValueError("slot and D must be given together")

    def pick(k):
        return D[:, k, :] if slot == k else F[:, k, :]

    W = pick(0)
    for k in range(1, p):
        W = np.einsum("bi,bj->bij", W, pick(k)).reshape(B, -1)
    return W
