"""Shallow, wide, sparse autoencoders with masked layers and subnet extraction.

Architecture (latent size n, hidden width H, feature count N):

  encode:  x -> normalize -> W_enc (masked, H x N) + b_enc -> swish
             -> W_lat (n x H) + b_lat -> z
  decode:  z -> W_hid (H x n) + b_hid -> swish
             -> W_dec (masked, N x H) + b_dec -> de-normalize -> x_hat

The encoder input mask is the transpose of the decoder output mask, so the
network is symmetric across the latent layer.  Off-mask weights are exactly
zero at all times; the optimizer projects them back after every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from ddrom.io import save_matrix, load_matrix, save_manifest, load_manifest


def swish(t):
    return t * expit(t)


def swish_prime(t):
    s = expit(t)
    return s * (1.0 + t * (1.0 - s))


@dataclass(frozen=True)
class MaskParams:
    band_width: int = 9      # nonzeros per band
    band_sep: int = 0        # separation between band centers (0 = auto: ~sqrt(N))


def build_mask(N: int, H: int, band_width: int, band_sep: int) -> np.ndarray:
    """Tri-banded boolean decoder output mask of shape (N, H).

    Hidden unit j feeds three contiguous runs of ``band_width`` output rows
    centered at c_j - s, c_j, c_j + s, where the centers c_j are spread evenly
    over the output indices and s = ``band_sep``.  Runs are clipped at the
    edges.  Every output row is guaranteed at least one nonzero.
    """
    if N < 1 or H < 1:
        raise ValueError("mask dimensions must be positive")
    if band_width < 1:
        raise ValueError("band width must be >= 1")
    if band_sep < 0:
        raise ValueError("band separation must be >= 0")
    b = band_width
    if b > N:
        import warnings
        warnings.warn(f"band width {b} exceeds output size {N}; clipping")
        b = N
    centers = np.round(np.linspace(0, N - 1, H)).astype(int) if H > 1 else np.array([N // 2])
    mask = np.zeros((N, H), dtype=bool)
    half = (b - 1) // 2
    offs = np.arange(b)
    for shift in (-band_sep, 0, band_sep):
        # bands that would spill over an edge slide inward, keeping length b
        starts = np.clip(centers + shift - half, 0, N - b)
        rows = starts[None, :] + offs[:, None]  # (b, H)
        cols = np.broadcast_to(np.arange(H), rows.shape)
        mask[rows.ravel(), cols.ravel()] = True
    empty = ~mask.any(axis=1)
    if empty.any():
        nearest = np.argmin(np.abs(np.nonzero(empty)[0][:, None] - centers[None, :]), axis=1)
        mask[np.nonzero(empty)[0], nearest] = True
    return mask


@dataclass
class TrainConfig:
    epochs: int = 2000
    batch_size: int = 32
    learning_rate: float = 1e-3
    patience: int = 300
    plateau_factor: float = 0.5
    plateau_patience: int = 50
    min_learning_rate: float = 1e-6
    validation_fraction: float = 0.1
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class TrainReport:
    train_losses: list
    val_losses: list
    best_epoch: int
    stopped_epoch: int
    final_learning_rate: float


class SparseAutoencoder:
    """Masked shallow autoencoder; weights live in a plain dict of arrays."""

    _WEIGHT_KEYS = ("W_enc", "b_enc", "W_lat", "b_lat", "W_hid", "b_hid", "W_dec", "b_dec")

    def __init__(self, n_features: int, latent_dim: int, hidden_width: int,
                 mask: np.ndarray, seed: int = 0):
        if mask.shape != (n_features, hidden_width):
            raise ValueError("mask shape must be (n_features, hidden_width)")
        self.n_features = n_features
        self.latent_dim = latent_dim
        self.hidden_width = hidden_width
        self.mask = mask.astype(bool)
        self.shift = np.zeros(n_features)
        self.scale = np.ones(n_features)
        self._init_weights(seed)

    # decoder interface used by the ROM driver
    @property
    def output_dim(self):
        return self.n_features

    def _init_weights(self, seed):
        rng = np.random.default_rng(seed)
        N, H, n = self.n_features, self.hidden_width, self.latent_dim
        maskT = self.mask.T  # encoder mask (H x N)

        def glorot(shape, fan_in, fan_out):
            lim = np.sqrt(6.0 / np.maximum(fan_in + fan_out, 1))
            return rng.uniform(-1.0, 1.0, size=shape) * lim

        # masked fan counts per hidden unit / output row
        fan_in_enc = maskT.sum(axis=1)[:, None]
        fan_out_dec = self.mask.sum(axis=1)[:, None]
        self.params = {
            "W_enc": glorot((H, N), fan_in_enc, 1) * maskT,
            "b_enc": np.zeros(H),
            "W_lat": glorot((n, H), H, n),
            "b_lat": np.zeros(n),
            "W_hid": glorot((H, n), n, H),
            "b_hid": np.zeros(H),
            "W_dec": glorot((N, H), fan_out_dec, 1) * self.mask,
            "b_dec": np.zeros(N),
        }

    # -- normalization -----------------------------------------------------

    def fit_normalization(self, X: np.ndarray) -> None:
        """Per-feature min-max map onto [-1, 1]; constant features get unit scale."""
        lo, hi = X.min(axis=1), X.max(axis=1)
        self.shift = 0.5 * (lo + hi)
        self.scale = np.maximum(0.5 * (hi - lo), 1e-12 * np.maximum(np.abs(self.shift), 1.0))
        self.scale = np.where(self.scale == 0, 1.0, self.scale)

    def normalize(self, x):
        if x.ndim == 2:
            return (x - self.shift[:, None]) / self.scale[:, None]
        return (x - self.shift) / self.scale

    def denormalize(self, y):
        if y.ndim == 2:
            return y * self.scale[:, None] + self.shift[:, None]
        return y * self.scale + self.shift

    # -- forward maps ------------------------------------------------------

    def encode(self, x):
        p = self.params
        xn = self.normalize(np.asarray(x, dtype=float))
        h = swish(p["W_enc"] @ xn + (p["b_enc"][:, None] if xn.ndim == 2 else p["b_enc"]))
        return p["W_lat"] @ h + (p["b_lat"][:, None] if xn.ndim == 2 else p["b_lat"])

    def decode(self, z):
        p = self.params
        z = np.asarray(z, dtype=float)
        h = swish(p["W_hid"] @ z + (p["b_hid"][:, None] if z.ndim == 2 else p["b_hid"]))
        y = p["W_dec"] @ h + (p["b_dec"][:, None] if z.ndim == 2 else p["b_dec"])
        return self.denormalize(y)

    def forward(self, x):
        z = self.encode(x)
        return z, self.decode(z)

    def jacobian(self, z):
        """Analytic decoder Jacobian, shape (N, latent_dim)."""
        p = self.params
        z = np.asarray(z, dtype=float)
        a = p["W_hid"] @ z + p["b_hid"]
        return (self.scale[:, None]) * (p["W_dec"] * swish_prime(a)[None, :]) @ p["W_hid"]

    def set_weight(self, key: str, value: np.ndarray) -> None:
        """Weight setter; rejects writes to off-mask entries of masked layers."""
        value = np.asarray(value, dtype=float)
        if value.shape != self.params[key].shape:
            raise ValueError(f"{key}: shape mismatch")
        if key == "W_dec" and np.any(value[~self.mask] != 0):
            raise ValueError("W_dec: nonzero entries off the sparsity mask")
        if key == "W_enc" and np.any(value[~self.mask.T] != 0):
            raise ValueError("W_enc: nonzero entries off the sparsity mask")
        self.params[key] = value

    def parameter_count(self) -> int:
        """Trainable parameters: on-mask weights, biases, dense layers."""
        N, H, n = self.n_features, self.hidden_width, self.latent_dim
        nnz = int(self.mask.sum())
        return 2 * nnz + 2 * H + 2 * (n * H) + n + N

    def restricted(self, rows) -> "DecoderSubnet":
        return extract_subnet(self, rows)

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        save_manifest(path / "model.txt", {
            "format_version": 1,
            "n_features": self.n_features,
            "latent_dim": self.latent_dim,
            "hidden_width": self.hidden_width,
        })
        save_matrix(path / "mask.mat", self.mask.astype(float))
        save_matrix(path / "shift.mat", self.shift)
        save_matrix(path / "scale.mat", self.scale)
        for k in self._WEIGHT_KEYS:
            save_matrix(path / f"{k}.mat", self.params[k])

    @classmethod
    def load(cls, path) -> "SparseAutoencoder":
        path = Path(path)
        m = load_manifest(path / "model.txt")
        mask = load_matrix(path / "mask.mat").astype(bool)
        ae = cls(int(m["n_features"]), int(m["latent_dim"]), int(m["hidden_width"]), mask)
        ae.shift = load_matrix(path / "shift.mat").ravel()
        ae.scale = load_matrix(path / "scale.mat").ravel()
        for k in cls._WEIGHT_KEYS:
            w = load_matrix(path / f"{k}.mat")
            ae.params[k] = w.ravel() if ae.params[k].ndim == 1 else w
        return ae


@dataclass
class DecoderSubnet:
    """Decoder slice that computes only a sampled subset of output rows."""

    rows: np.ndarray          # sampled output rows, sorted
    hidden_keep: np.ndarray   # retained hidden units
    W_hid: np.ndarray
    b_hid: np.ndarray
    W_dec: np.ndarray
    b_dec: np.ndarray
    scale: np.ndarray
    shift: np.ndarray
    latent_dim: int

    @property
    def output_dim(self):
        return self.rows.shape[0]

    def decode(self, z):
        h = swish(self.W_hid @ z + (self.b_hid[:, None] if np.ndim(z) == 2 else self.b_hid))
        y = self.W_dec @ h + (self.b_dec[:, None] if np.ndim(z) == 2 else self.b_dec)
        return y * (self.scale[:, None] if np.ndim(z) == 2 else self.scale) + (
            self.shift[:, None] if np.ndim(z) == 2 else self.shift)

    def jacobian(self, z):
        a = self.W_hid @ z + self.b_hid
        return (self.scale[:, None]) * (self.W_dec * swish_prime(a)[None, :]) @ self.W_hid


def extract_subnet(ae: SparseAutoencoder, sampled_rows) -> DecoderSubnet:
    """Keep only hidden units with a mask connection into a sampled output row."""
    rows = np.unique(np.asarray(sampled_rows, dtype=np.intp))
    if rows.size == 0:
        raise ValueError("empty sample row set")
    if rows[0] < 0 or rows[-1] >= ae.n_features:
        raise ValueError("sampled rows out of range")
    keep = np.nonzero(ae.mask[rows].any(axis=0))[0]
    p = ae.params
    return DecoderSubnet(
        rows=rows,
        hidden_keep=keep,
        W_hid=p["W_hid"][keep],
        b_hid=p["b_hid"][keep],
        W_dec=p["W_dec"][np.ix_(rows, keep)],
        b_dec=p["b_dec"][rows],
        scale=ae.scale[rows],
        shift=ae.shift[rows],
        latent_dim=ae.latent_dim,
    )


class TrainingDivergedError(RuntimeError):
    pass


def train_autoencoder(snapshots: np.ndarray, latent_dim: int,
                      hidden_width: int | None = None,
                      mask_params: MaskParams = MaskParams(),
                      cfg: TrainConfig = TrainConfig()) -> tuple[SparseAutoencoder, TrainReport]:
    """Adam on the reconstruction MSE with early stopping and LR-on-plateau.

    ``snapshots`` is (N, M): one state per column.  The split, shuffling, and
    initialization all derive from ``cfg.seed``, so retraining is bit-identical.
    """
    X = np.asarray(snapshots, dtype=float)
    N, M = X.shape
    if M < 10:
        raise ValueError("need at least 10 snapshots for the 90-10 split")
    if hidden_width is None:
        hidden_width = min(2 * N, 4096)
    sep = mask_params.band_sep if mask_params.band_sep > 0 else max(1, int(round(np.sqrt(N))))
    mask = build_mask(N, hidden_width, mask_params.band_width, sep)

    rng = np.random.default_rng(cfg.seed)
    ae = SparseAutoencoder(N, latent_dim, hidden_width, mask, seed=cfg.seed + 1)

    perm = rng.permutation(M)
    n_val = max(1, int(round(cfg.validation_fraction * M)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    ae.fit_normalization(X[:, train_idx])
    Xtr, Xval = X[:, train_idx], X[:, val_idx]
    maskT = ae.mask.T

    p = ae.params
    m1 = {k: np.zeros_like(v) for k, v in p.items()}
    m2 = {k: np.zeros_like(v) for k, v in p.items()}
    lr = cfg.learning_rate
    step = 0

    def batch_loss_grad(Xb):
        B = Xb.shape[1]
        xn = (Xb - ae.shift[:, None]) / ae.scale[:, None]
        a1 = p["W_enc"] @ xn + p["b_enc"][:, None]
        h1 = swish(a1)
        z = p["W_lat"] @ h1 + p["b_lat"][:, None]
        a2 = p["W_hid"] @ z + p["b_hid"][:, None]
        h2 = swish(a2)
        y = p["W_dec"] @ h2 + p["b_dec"][:, None]
        xhat = y * ae.scale[:, None] + ae.shift[:, None]
        diff = xhat - Xb
        loss = float(np.sum(diff * diff)) / B

        dxhat = (2.0 / B) * diff
        dy = dxhat * ae.scale[:, None]
        g = {}
        g["W_dec"] = (dy @ h2.T) * ae.mask
        g["b_dec"] = dy.sum(axis=1)
        dh2 = p["W_dec"].T @ dy
        da2 = dh2 * swish_prime(a2)
        g["W_hid"] = da2 @ z.T
        g["b_hid"] = da2.sum(axis=1)
        dz = p["W_hid"].T @ da2
        g["W_lat"] = dz @ h1.T
        g["b_lat"] = dz.sum(axis=1)
        dh1 = p["W_lat"].T @ dz
        da1 = dh1 * swish_prime(a1)
        g["W_enc"] = (da1 @ xn.T) * maskT
        g["b_enc"] = da1.sum(axis=1)
        return loss, g

    def eval_loss(Xb):
        _, xhat = ae.forward(Xb)
        d = xhat - Xb
        return float(np.sum(d * d)) / Xb.shape[1]

    best_val = np.inf
    best_params = {k: v.copy() for k, v in p.items()}
    best_epoch = 0
    since_improve = 0
    since_plateau = 0
    train_losses, val_losses = [], []
    stopped = cfg.epochs

    for epoch in range(cfg.epochs):
        order = rng.permutation(train_idx.shape[0])
        ep_loss = 0.0
        for start in range(0, order.shape[0], cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, g = batch_loss_grad(Xtr[:, idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss became non-finite at epoch {epoch}")
            ep_loss += loss * idx.shape[0]
            step += 1
            b1c = 1.0 - cfg.adam_beta1 ** step
            b2c = 1.0 - cfg.adam_beta2 ** step
            for k in p:
                m1[k] = cfg.adam_beta1 * m1[k] + (1 - cfg.adam_beta1) * g[k]
                m2[k] = cfg.adam_beta2 * m2[k] + (1 - cfg.adam_beta2) * g[k] ** 2
                p[k] -= lr * (m1[k] / b1c) / (np.sqrt(m2[k] / b2c) + cfg.adam_eps)
            # mask projection: keep off-mask weights exactly zero
            p["W_dec"] *= ae.mask
            p["W_enc"] *= maskT
        train_losses.append(ep_loss / train_idx.shape[0])
        vl = eval_loss(Xval)
        val_losses.append(vl)

        if vl < best_val:
            best_val = vl
            best_params = {k: v.copy() for k, v in p.items()}
            best_epoch = epoch
            since_improve = 0
            since_plateau = 0
        else:
            since_improve += 1
            since_plateau += 1
        if since_plateau >= cfg.plateau_patience and lr > cfg.min_learning_rate:
            lr = max(lr * cfg.plateau_factor, cfg.min_learning_rate)
            since_plateau = 0
        if since_improve >= cfg.patience:
            stopped = epoch + 1
            break

    ae.params = best_params
    return ae, TrainReport(train_losses, val_losses, best_epoch, stopped, lr)
