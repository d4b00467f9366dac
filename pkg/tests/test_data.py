import gzip
import math
import struct

import mpmath
import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from expoloss.data import (Dataset, ParseError, gen_blobs, gen_gaussians, gen_outlier_gaussians,
                           inject_symmetric_noise, load_csv, load_idx, normalize_unit_ball,
                           read_idx, train_test_split)

# standard normal CDF at 2 to 50 digits, frozen
PHI_2 = float(mpmath.ncdf(2))


def test_phi_two_oracle():
    assert PHI_2 == pytest.approx(0.97725, abs=5e-6)


def test_gaussians_bayes_accuracy():
    assert gen_gaussians(5, 2, 0.0, 0).provenance["bayes_accuracy"] == 0.5
    assert gen_gaussians(5, 2, 4.0, 0).provenance["bayes_accuracy"] == pytest.approx(PHI_2, rel=1e-12)


def test_gaussians_empirical_bayes_rule_matches_cdf():
    ds = gen_gaussians(50_000, 2, 4.0, seed=0)
    acc = np.mean(np.where(ds.features[:, 0] >= 0, 1, -1) == ds.labels)
    assert abs(acc - PHI_2) < 4 * math.sqrt(PHI_2 * (1 - PHI_2) / ds.n)


def test_gaussians_shape_and_balance():
    ds = gen_gaussians(30, 4, 2.0, seed=1)
    assert ds.features.shape == (60, 4)
    assert (ds.labels == 1).sum() == 30 and ds.binary


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20)
def test_generators_seed_deterministic(seed):
    for make in (lambda: gen_gaussians(10, 3, 2.0, seed),
                 lambda: gen_outlier_gaussians(10, 3, 4.0, 0.1, 5.0, seed),
                 lambda: gen_blobs(5, 4, 3, 2.0, seed)):
        a, b = make(), make()
        assert a.features.tobytes() == b.features.tobytes()
        np.testing.assert_array_equal(a.labels, b.labels)


def test_gaussians_preconditions():
    with pytest.raises(ValueError):
        gen_gaussians(0, 2, 1.0, 0)
    with pytest.raises(ValueError):
        gen_gaussians(3, 1, 1.0, 0)


def test_outliers_zero_fraction_matches_base():
    a = gen_outlier_gaussians(40, 2, 4.0, 0.0, 5.0, seed=3)
    b = gen_gaussians(40, 2, 4.0, seed=3)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.provenance["outlier_indices"] == []


@pytest.mark.parametrize("frac", [0.05, 0.1, 0.25, 0.49])
def test_outlier_count(frac):
    ds = gen_outlier_gaussians(101, 2, 4.0, frac, 5.0, seed=0)
    assert len(ds.provenance["outlier_indices"]) == round(frac * ds.n)


def test_outliers_sit_on_wrong_side_and_removal_restores_base():
    base = gen_gaussians(200, 2, 4.0, seed=7)
    ds = gen_outlier_gaussians(200, 2, 4.0, 0.1, 5.0, seed=7)
    idx = np.array(ds.provenance["outlier_indices"])
    # flipped labels, far along e1 on the side opposite their new label
    np.testing.assert_array_equal(ds.labels[idx], -base.labels[idx])
    shift = ds.features[idx, 0] - base.features[idx, 0]
    np.testing.assert_allclose(shift, base.labels[idx] * 4.0 * 2.0)
    keep = np.setdiff1d(np.arange(ds.n), idx)
    np.testing.assert_array_equal(ds.features[keep], base.features[keep])
    np.testing.assert_array_equal(ds.labels[keep], base.labels[keep])
    assert ds.provenance["bayes_accuracy"] == pytest.approx(PHI_2, rel=1e-12)


def test_outlier_preconditions():
    with pytest.raises(ValueError):
        gen_outlier_gaussians(10, 2, 4.0, 0.5, 5.0, 0)
    with pytest.raises(ValueError):
        gen_outlier_gaussians(10, 2, 4.0, 0.1, 1.0, 0)


def test_blobs_labels():
    ds = gen_blobs(20, 5, 4, 3.0, seed=0)
    assert ds.n_classes == 4 and not ds.binary
    assert set(ds.labels.tolist()) == {0, 1, 2, 3}


def test_noise_rate_zero_unchanged():
    ds = gen_blobs(20, 4, 4, 1.0, seed=0)
    noisy = inject_symmetric_noise(ds, 0.0, seed=1)
    np.testing.assert_array_equal(noisy.labels, ds.labels)
    np.testing.assert_array_equal(noisy.clean_labels, ds.labels)


def test_noise_binary_fraction():
    ds = gen_gaussians(50_000, 2, 1.0, seed=0)
    noisy = inject_symmetric_noise(ds, 0.4, seed=5)
    frac = np.mean(noisy.labels != noisy.clean_labels)
    assert 0.394 <= frac <= 0.406
    assert set(np.unique(noisy.labels)) <= {-1, 1}


def test_noise_never_maps_to_same_class():
    ds = gen_blobs(1000, 10, 10, 1.0, seed=0)
    noisy = inject_symmetric_noise(ds, 0.6, K=10, seed=2)
    # identity flips would leave the changed fraction near 0.6 * 9/10 = 0.54, 12 sd away
    frac = np.mean(noisy.labels != ds.labels)
    assert abs(frac - 0.6) < 4 * math.sqrt(0.24 / ds.n)


def test_noise_targets_uniform_over_other_classes():
    ds = gen_blobs(5000, 5, 5, 1.0, seed=0)
    noisy = inject_symmetric_noise(ds, 0.5, seed=0)
    changed = noisy.labels != ds.labels
    offsets = (noisy.labels[changed] - ds.labels[changed]) % 5
    counts = np.bincount(offsets, minlength=5)
    assert counts[0] == 0
    n = changed.sum()
    sd = math.sqrt(n * 0.25 * 0.75)
    assert np.all(np.abs(counts[1:] - n / 4) < 4 * sd)


@pytest.mark.parametrize("rate,K", [(0.2, 2), (0.4, 10), (0.6, 10)])
def test_noise_mean_over_200_trials(rate, K):
    ds = gen_gaussians(250, 2, 1.0, 0) if K == 2 else gen_blobs(50, 10, 10, 1.0, 0)
    fracs = [np.mean(inject_symmetric_noise(ds, rate, seed=t).labels != ds.labels) for t in range(200)]
    sigma = math.sqrt(rate * (1 - rate) / (ds.n * 200))
    assert abs(np.mean(fracs) - rate) <= 4 * sigma


def test_noise_round_trip():
    ds = gen_blobs(30, 4, 3, 1.0, seed=0)
    back = inject_symmetric_noise(ds, 0.6, seed=9).restore_clean()
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.features, ds.features)
    assert back.clean_labels is None and back.provenance == ds.provenance


def test_noise_twice_corrupts_from_clean():
    ds = gen_gaussians(100, 2, 1.0, seed=0)
    once = inject_symmetric_noise(ds, 0.3, seed=1)
    twice = inject_symmetric_noise(once, 0.3, seed=1)
    np.testing.assert_array_equal(once.labels, twice.labels)
    np.testing.assert_array_equal(twice.clean_labels, ds.labels)


@pytest.mark.parametrize("rate", [1.0, 1.5, -0.1])
def test_noise_rate_domain(rate):
    with pytest.raises(ValueError):
        inject_symmetric_noise(gen_gaussians(5, 2, 1.0, 0), rate)


def test_normalize_inside_ball_unchanged():
    ds = Dataset(np.array([[0.3, 0.4], [0.0, -1.0]]), [1, -1], 2)
    out = normalize_unit_ball(ds)
    np.testing.assert_array_equal(out.features, ds.features)
    assert out.scale == 1.0 and out.norm_state == "unit-ball"


def test_normalize_scales_largest_row():
    ds = Dataset(np.array([[3.0, 4.0], [1.0, 0.0]]), [1, -1], 2)
    out = normalize_unit_ball(ds)
    assert np.linalg.norm(out.features[0]) == pytest.approx(1.0, abs=1e-15)
    assert out.scale == pytest.approx(0.2)


@given(st.integers(0, 10_000), st.floats(0.1, 100.0))
@example(1559, 46.647876005391744)
@settings(max_examples=50)
def test_normalize_invariant_and_idempotent(seed, spread):
    X = np.random.default_rng(seed).standard_normal((20, 3)) * spread
    once = normalize_unit_ball(Dataset(X, np.ones(20), 2))
    assert np.linalg.norm(once.features, axis=1).max() <= 1 + 1e-12
    twice = normalize_unit_ball(once)
    np.testing.assert_array_equal(once.features, twice.features)
    assert once.scale == twice.scale


def test_split_disjoint_and_complete():
    ds = gen_gaussians(50, 2, 1.0, seed=0)
    tr, te = train_test_split(ds, 30, seed=1)
    assert tr.n == 70 and te.n == 30
    rows = {tuple(r) for r in tr.features} | {tuple(r) for r in te.features}
    assert len(rows) == 100


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), [0, 3], 3)
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), [1], 2)
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 2)), [], 2)


def _idx_bytes(magic_type, dims, payload):
    head = bytes([0, 0, magic_type, len(dims)]) + b"".join(struct.pack(">I", d) for d in dims)
    return head + bytes(payload)


def test_idx_images_and_labels(tmp_path):
    img = tmp_path / "img.idx"
    lab = tmp_path / "lab.idx.gz"
    img.write_bytes(_idx_bytes(0x08, (2, 2, 2), [0, 255, 51, 102, 255, 0, 0, 0]))
    with gzip.open(lab, "wb") as f:
        f.write(_idx_bytes(0x08, (2,), [7, 3]))
    assert int.from_bytes(img.read_bytes()[:4], "big") == 0x00000803
    ds = load_idx(img, lab, n_classes=10)
    assert ds.features.shape == (2, 4)
    np.testing.assert_allclose(ds.features[0], [0.0, 1.0, 0.2, 0.4])
    np.testing.assert_array_equal(ds.labels, [7, 3])


def test_idx_truncated_reports_byte_counts(tmp_path):
    p = tmp_path / "t.idx"
    p.write_bytes(_idx_bytes(0x08, (2, 2, 2), [1] * 5))
    with pytest.raises(ParseError, match="expected 24 bytes.*got 21"):
        read_idx(p)


def test_idx_bad_magic(tmp_path):
    p = tmp_path / "m.idx"
    p.write_bytes(b"\x01\x00\x08\x01" + struct.pack(">I", 1) + b"\x00")
    with pytest.raises(ParseError, match="byte 0"):
        read_idx(p)


def test_idx_count_mismatch(tmp_path):
    img, lab = tmp_path / "i", tmp_path / "l"
    img.write_bytes(_idx_bytes(0x08, (2, 1, 1), [0, 0]))
    lab.write_bytes(_idx_bytes(0x08, (3,), [0, 1, 1]))
    with pytest.raises(ParseError):
        load_idx(img, lab)


def test_csv_example(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,label\n0.1,0.2,1\n")
    ds = load_csv(p)
    assert (ds.n, ds.d) == (1, 2)
    assert ds.labels.tolist() == [1]


def test_csv_binary_labels(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,y\n0.5,-1\n0.1,1\n")
    ds = load_csv(p)
    assert ds.binary


@pytest.mark.parametrize("body,line", [("a,label\n0.1,1\nfoo,2\n", 3), ("a,label\n0.1,1,2\n", 2),
                                       ("a,label\n0.1,1.5\n", 2)])
def test_csv_errors_name_line(tmp_path, body, line):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(ParseError, match=f"line {line}"):
        load_csv(p)
