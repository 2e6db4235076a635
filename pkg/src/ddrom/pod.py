"""Proper orthogonal decomposition and the linear decoder it induces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PodBasis:
    """Leading left singular vectors of an (uncentered) snapshot matrix."""

    basis: np.ndarray       # (N, n), orthonormal columns
    singular_values: np.ndarray  # full nonincreasing spectrum

    @property
    def n_modes(self) -> int:
        return self.basis.shape[1]


def pod(snapshots: np.ndarray, n: int) -> PodBasis:
    """Thin SVD truncated to n modes.

    Uses an eigen-decomposition of the Gram matrix when there are fewer
    columns than rows.  Sign convention: the largest-magnitude entry of each
    basis column is positive.
    """
    X = np.asarray(snapshots, dtype=float)
    if X.ndim != 2:
        raise ValueError("snapshot matrix must be 2-dimensional")
    N, M = X.shape
    if not 1 <= n <= min(N, M):
        raise ValueError(f"requested {n} modes from a {N}x{M} matrix")

    if M <= N:
        G = X.T @ X
        w, V = np.linalg.eigh(G)
        w = np.maximum(w[::-1], 0.0)
        V = V[:, ::-1]
        sig = np.sqrt(w)
        # rank tolerance on the eigenvalue scale: roundoff in eigh is O(eps * w[0])
        rank = int(np.sum(w > w[0] * max(N, M) * np.finfo(float).eps))
        if n > rank:
            raise ValueError(f"requested {n} modes but numerical rank is {rank}")
        Phi = (X @ V[:, :n]) / sig[:n]
    else:
        Phi_full, sig, _ = np.linalg.svd(X, full_matrices=False)
        rank = int(np.sum(sig > sig[0] * max(N, M) * np.finfo(float).eps))
        if n > rank:
            raise ValueError(f"requested {n} modes but numerical rank is {rank}")
        Phi = Phi_full[:, :n]

    # deterministic signs
    peaks = np.argmax(np.abs(Phi), axis=0)
    signs = np.sign(Phi[peaks, np.arange(n)])
    signs[signs == 0] = 1.0
    Phi = Phi * signs
    return PodBasis(basis=np.ascontiguousarray(Phi), singular_values=sig)


class LinearDecoder:
    """POD basis as a decoder g(z) = Phi z with encoder h(x) = Phi^T x."""

    def __init__(self, basis: np.ndarray):
        self.basis = np.asarray(basis, dtype=float)
        self.output_dim, self.latent_dim = self.basis.shape

    @classmethod
    def from_pod(cls, pb: PodBasis) -> "LinearDecoder":
        return cls(pb.basis)

    def decode(self, z):
        return self.basis @ z

    def encode(self, x):
        return self.basis.T @ x

    def jacobian(self, z):
        return self.basis

    def restricted(self, rows) -> "LinearDecoder":
        """Decoder computing only the given output rows."""
        return LinearDecoder(self.basis[np.asarray(rows, dtype=np.intp)])

    def parameter_count(self) -> int:
        # encoder + decoder share the basis entries count twice
        return 2 * self.basis.size
