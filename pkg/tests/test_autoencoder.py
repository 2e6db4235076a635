import numpy as np
import pytest

from ddrom import (SparseAutoencoder, TrainConfig, MaskParams, build_mask,
                   extract_subnet, train_autoencoder)
from conftest import fd_jacobian


def make_ae(N=20, n=3, H=10, seed=0):
    mask = build_mask(N, H, band_width=3, band_sep=5)
    return SparseAutoencoder(N, n, H, mask, seed=seed)


def training_data(N=20, M=40, seed=0):
    # smooth low-dimensional family so small networks can fit it
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, N)[:, None]
    c = rng.uniform(0.5, 2.0, size=(3, M))
    return (c[0] * np.tanh(5 * (t - 0.3 * c[1])) + 0.2 * c[2] * t)


# -- mask ---------------------------------------------------------------------

def test_mask_dense_when_band_covers_output():
    assert build_mask(6, 4, band_width=6, band_sep=0).all()


def test_mask_hand_enumeration_small():
    # N=10, H=2, b=1, s=3: centers 0 and 9, bands at {c-3, c, c+3} saturated
    # into range; remaining rows attach to their nearest center.
    m = build_mask(10, 2, band_width=1, band_sep=3)
    assert m[0, 0] and m[3, 0]
    assert m[6, 1] and m[9, 1]
    assert m.any(axis=1).all()


def test_mask_every_row_nonzero_at_scale():
    m = build_mask(2880, 128, band_width=9, band_sep=54)
    assert m.any(axis=1).all()


def test_mask_band_width_clipped_with_warning():
    with pytest.warns(UserWarning, match="band width"):
        m = build_mask(4, 2, band_width=9, band_sep=0)
    assert m.all()


def test_mask_deterministic():
    assert np.array_equal(build_mask(50, 7, 5, 9), build_mask(50, 7, 5, 9))


def test_mask_validation():
    with pytest.raises(ValueError):
        build_mask(0, 3, 1, 1)
    with pytest.raises(ValueError):
        build_mask(5, 3, 0, 1)
    with pytest.raises(ValueError):
        build_mask(5, 3, 1, -1)


# -- forward maps -------------------------------------------------------------

def test_zero_weights_decode_to_denormalized_bias():
    ae = make_ae()
    for k in ae.params:
        ae.params[k] = np.zeros_like(ae.params[k])
    ae.shift = np.arange(20.0)
    ae.scale = np.full(20, 2.0)
    out = ae.decode(np.zeros(3))
    assert np.array_equal(out, ae.shift)  # swish(0) = 0, bias 0, denorm -> shift


def test_off_mask_weights_are_zero_at_init():
    ae = make_ae()
    assert np.all(ae.params["W_dec"][~ae.mask] == 0)
    assert np.all(ae.params["W_enc"][~ae.mask.T] == 0)


def test_set_weight_rejects_off_mask_writes():
    ae = make_ae()
    bad = np.ones_like(ae.params["W_dec"])
    with pytest.raises(ValueError, match="mask"):
        ae.set_weight("W_dec", bad)
    ok = bad * ae.mask
    ae.set_weight("W_dec", ok)
    assert np.array_equal(ae.params["W_dec"], ok)


def test_decoder_jacobian_matches_finite_differences():
    ae = make_ae()
    ae.shift = np.linspace(-1, 1, 20)
    ae.scale = np.linspace(0.5, 2.0, 20)
    rng = np.random.default_rng(2)
    for _ in range(10):
        z = rng.standard_normal(3)
        J = ae.jacobian(z)
        assert J.shape == (20, 3)
        J_fd = fd_jacobian(ae.decode, z)
        assert np.abs(J - J_fd).max() <= 1e-5 * max(np.abs(J).max(), 1.0)


def test_forward_batch_matches_single():
    ae = make_ae()
    rng = np.random.default_rng(6)
    X = rng.standard_normal((20, 4))
    Z, Xhat = ae.forward(X)
    for j in range(4):
        z, xh = ae.forward(X[:, j])
        assert np.allclose(Z[:, j], z, atol=1e-14)
        assert np.allclose(Xhat[:, j], xh, atol=1e-14)


# -- subnet -------------------------------------------------------------------

def test_subnet_all_rows_is_full_decoder():
    ae = make_ae()
    sub = extract_subnet(ae, np.arange(20))
    z = np.random.default_rng(0).standard_normal(3)
    full = ae.decode(z)
    assert np.abs(sub.decode(z) - full).max() <= 1e-13 * max(np.abs(full).max(), 1.0)


def test_subnet_single_row_keeps_mask_support():
    ae = make_ae()
    sub = extract_subnet(ae, [7])
    assert np.array_equal(sub.hidden_keep, np.nonzero(ae.mask[7])[0])


def test_subnet_matches_restricted_decode_and_jacobian():
    ae = make_ae(N=60, n=4, H=30)
    rng = np.random.default_rng(1)
    rows = np.sort(rng.choice(60, size=6, replace=False))
    sub = ae.restricted(rows)
    for _ in range(5):
        z = rng.standard_normal(4)
        full = ae.decode(z)[rows]
        assert np.abs(sub.decode(z) - full).max() <= 1e-13 * max(np.abs(full).max(), 1.0)
        Jfull = ae.jacobian(z)[rows]
        assert np.abs(sub.jacobian(z) - Jfull).max() <= 1e-13 * max(np.abs(Jfull).max(), 1.0)


def test_subnet_rejects_bad_rows():
    ae = make_ae()
    with pytest.raises(ValueError):
        extract_subnet(ae, [])
    with pytest.raises(ValueError):
        extract_subnet(ae, [25])


# -- training -----------------------------------------------------------------

def test_parameter_count_formula():
    ae = make_ae(N=20, n=3, H=10)
    nnz = int(ae.mask.sum())
    assert ae.parameter_count() == 2 * nnz + 2 * 10 + 2 * 3 * 10 + 3 + 20


def test_training_reduces_loss_and_preserves_mask():
    X = training_data()
    cfg = TrainConfig(epochs=60, batch_size=8, seed=0)
    ae, report = train_autoencoder(X, 3, hidden_width=16,
                                   mask_params=MaskParams(band_width=3, band_sep=4),
                                   cfg=cfg)
    assert report.train_losses[-1] < report.train_losses[0]
    assert np.all(ae.params["W_dec"][~ae.mask] == 0)
    assert np.all(ae.params["W_enc"][~ae.mask.T] == 0)


def test_training_deterministic_under_fixed_seed():
    X = training_data()
    cfg = TrainConfig(epochs=15, batch_size=8, seed=7)
    mp = MaskParams(band_width=3, band_sep=4)
    ae1, rep1 = train_autoencoder(X, 2, hidden_width=12, mask_params=mp, cfg=cfg)
    ae2, rep2 = train_autoencoder(X, 2, hidden_width=12, mask_params=mp, cfg=cfg)
    assert rep1.train_losses == rep2.train_losses
    assert rep1.val_losses == rep2.val_losses
    for k in ae1.params:
        assert np.array_equal(ae1.params[k], ae2.params[k])


def test_training_on_repeated_snapshot_fits_it():
    col = np.sin(np.linspace(0, 3, 20))
    X = np.tile(col[:, None], (1, 30))
    cfg = TrainConfig(epochs=400, batch_size=8, seed=0)
    ae, report = train_autoencoder(X, 1, hidden_width=12,
                                   mask_params=MaskParams(band_width=3, band_sep=4),
                                   cfg=cfg)
    assert min(report.val_losses) <= 1e-6 * float(col @ col)


def test_training_requires_enough_snapshots():
    with pytest.raises(ValueError):
        train_autoencoder(np.zeros((10, 5)), 2)


def test_save_load_roundtrip(tmp_path):
    X = training_data()
    cfg = TrainConfig(epochs=5, batch_size=8, seed=3)
    ae, _ = train_autoencoder(X, 2, hidden_width=12,
                              mask_params=MaskParams(band_width=3, band_sep=4), cfg=cfg)
    ae.save(tmp_path / "model")
    out = SparseAutoencoder.load(tmp_path / "model")
    z = np.random.default_rng(0).standard_normal(2)
    assert np.array_equal(out.decode(z), ae.decode(z))
    assert np.array_equal(out.mask, ae.mask)
    for k in ae.params:
        assert np.array_equal(out.params[k], ae.params[k])
