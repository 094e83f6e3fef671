import csv

import numpy as np
import pytest
from scipy import stats as scistats

from gibbsnet.autodiff import make_rng
from gibbsnet.entropy import (EntropyReport, SingularCovarianceError,
                              conjugate, einstein_entropy, entropy_table_export,
                              intricates, multivariate_kurtosis, qq_export)


def test_one_dim_gaussian_formula():
    rng = make_rng(1)
    x = rng.standard_normal((50_000, 1))
    report = einstein_entropy(x, regularizer=0.0)
    z = (x[:, 0] - x.mean()) / x.std()
    want = 0.5 * z * z + 0.5 * np.log(2 * np.pi * x.var())
    assert np.max(np.abs(report.neg_log_lik - want)) < 1e-8
    # rank order equals |z| order
    assert np.array_equal(report.ranking, np.argsort(-np.abs(z), kind="stable"))


def test_duplicated_rows_share_entropy():
    rng = make_rng(2)
    x = rng.standard_normal((30, 4))
    x[17] = x[3]
    report = einstein_entropy(x)
    assert report.neg_log_lik[17] == pytest.approx(report.neg_log_lik[3], abs=1e-12)


def test_report_is_recomputable_from_fields():
    rng = make_rng(3)
    x = rng.standard_normal((40, 6))
    report = einstein_entropy(x)
    centered = x - report.mean_vector
    inv = np.linalg.inv(report.covariance)
    sign, logdet = np.linalg.slogdet(2 * np.pi * report.covariance)
    again = 0.5 * np.einsum("ij,jk,ik->i", centered, inv, centered) + 0.5 * logdet
    assert np.max(np.abs(again - report.neg_log_lik)) < 1e-8


def test_mahalanobis_equals_svd_diagonal():
    rng = make_rng(5)
    for trial in range(10):
        x = rng.standard_normal((50, 5))
        centered = x - x.mean(axis=0)
        report = einstein_entropy(x, regularizer=0.0)
        v = np.linalg.svd(centered, full_matrices=False)[0]
        mahal = 2.0 * report.neg_log_lik - np.linalg.slogdet(
            2 * np.pi * report.covariance)[1]
        assert np.max(np.abs(mahal - 50.0 * np.diag(v @ v.T))) < 1e-8


def test_svd_projection_invariance():
    rng = make_rng(7)
    x = rng.standard_normal((50, 5))
    centered = x - x.mean(axis=0)
    v = np.linalg.svd(centered, full_matrices=False)[0]
    assert np.max(np.abs(v @ v.T @ centered - centered)) < 1e-8


def test_ranking_invariant_under_linear_maps():
    rng = make_rng(9)
    x = rng.standard_normal((60, 5))
    base = einstein_entropy(x, regularizer=0.0).ranking
    for _ in range(5):
        while True:
            a = rng.standard_normal((5, 5))
            if abs(np.linalg.det(a)) > 0.1:
                break
        mapped = einstein_entropy(x @ a, regularizer=0.0).ranking
        assert np.array_equal(base, mapped)


def test_singular_covariance_advises_ridge():
    x = np.zeros((10, 3))
    x[:, 0] = np.arange(10.0)     # columns 1,2 constant: rank-deficient
    with pytest.raises(SingularCovarianceError, match="ridge"):
        einstein_entropy(x, regularizer=0.0)
    report = einstein_entropy(x)  # default ridge handles it
    assert np.all(np.isfinite(report.neg_log_lik))


# --------------------------------------------------------------------------
# conjugates
# --------------------------------------------------------------------------

def test_conjugate_identity_covariance():
    x = make_rng(11).standard_normal((4, 3))
    assert np.allclose(conjugate(x, np.eye(3), 2), x[2])


def test_conjugate_diagonal_case():
    got = conjugate(np.array([[2.0, 3.0]]), np.diag([4.0, 1.0]), 0)
    assert np.allclose(got, [0.5, 3.0])


def test_conjugate_reproduces_mahalanobis_half_norm():
    rng = make_rng(13)
    x = rng.standard_normal((30, 4))
    report = einstein_entropy(x, regularizer=0.0)
    centered = x - report.mean_vector
    logdet = np.linalg.slogdet(2 * np.pi * report.covariance)[1]
    for i in (0, 7, 29):
        check = conjugate(centered, report.covariance, i)
        half_norm = 0.5 * float(check @ centered[i])
        assert half_norm == pytest.approx(
            report.neg_log_lik[i] - 0.5 * logdet, abs=1e-10)


def test_conjugate_rejects_singular():
    with pytest.raises(SingularCovarianceError):
        conjugate(np.ones((2, 2)), np.zeros((2, 2)), 0)


# --------------------------------------------------------------------------
# intricates
# --------------------------------------------------------------------------

def _tiny_report(nll):
    nll = np.asarray(nll, dtype=np.float64)
    return EntropyReport(nll, np.argsort(-nll, kind="stable"), 0.0,
                         np.eye(1), np.zeros(1))


def test_intricates_whole_class_sorted():
    report = _tiny_report([3.0, 1.0, 2.0, 5.0])
    labels = np.array([0, 1, 0, 0])
    got = intricates(report, labels, 0, 3)
    assert list(got) == [3, 0, 2]   # descending neg-log-lik


def test_intricates_two_member_class():
    report = _tiny_report([1.0, 9.0, 4.0])
    labels = np.array([1, 1, 0])
    assert list(intricates(report, labels, 1, 2)) == [1, 0]


def test_intricates_rejects_empty_class():
    report = _tiny_report([1.0])
    with pytest.raises(ValueError, match="no members"):
        intricates(report, np.array([0]), 3, 1)


# --------------------------------------------------------------------------
# kurtosis
# --------------------------------------------------------------------------

def test_gaussian_kurtosis_matches_known_moment():
    rng = make_rng(17)
    x = rng.standard_normal((200_000, 2))
    got = multivariate_kurtosis(x, regularizer=0.0)
    assert got == pytest.approx(2 * (2 + 2), rel=0.05)


def test_degenerate_point_has_minimal_kurtosis():
    x = np.tile([0.7, -1.2], (50, 1))   # one repeated point; ridge keeps the solve alive
    assert multivariate_kurtosis(x, regularizer=1e-6) == pytest.approx(0.0, abs=1e-12)


def test_heavy_tails_raise_kurtosis():
    rng = make_rng(19)
    gauss = rng.standard_normal((100_000, 3))
    heavy = rng.standard_t(df=3, size=(100_000, 3))
    assert (multivariate_kurtosis(heavy, regularizer=0.0)
            > multivariate_kurtosis(gauss, regularizer=0.0))


# --------------------------------------------------------------------------
# Q-Q export
# --------------------------------------------------------------------------

def _read_qq(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["gaussian_quantile", "empirical_quantile"]
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return data[:, 0], data[:, 1]


def test_qq_gaussian_sample_sits_on_diagonal(tmp_path):
    values = make_rng(21).standard_normal(20_000)
    path = tmp_path / "qq.csv"
    qq_export(values, path)
    g, e = _read_qq(path)
    inner = np.abs(g) < 2.5
    assert np.max(np.abs(g[inner] - e[inner])) < 0.08


def test_qq_constant_vector_is_horizontal(tmp_path):
    path = tmp_path / "qq.csv"
    qq_export(np.full(64, 3.3), path)
    _, e = _read_qq(path)
    assert np.all(e == 0.0)


def test_qq_chi_square_departs_above_diagonal_in_right_tail(tmp_path):
    rng = make_rng(23)
    n = 20_000
    values = rng.chisquare(df=3, size=n)
    path = tmp_path / "qq.csv"
    qq_export(values, path)
    g, e = _read_qq(path)
    # analytic check of the direction: the standardized chi2 right-tail
    # quantile exceeds the Gaussian quantile
    p = (n - 0.5) / n
    analytic = (scistats.chi2.ppf(p, df=3) - 3) / np.sqrt(2 * 3)
    assert analytic > scistats.norm.ppf(p)
    assert e[-1] > g[-1] + 1.0


def test_qq_rejects_short_input(tmp_path):
    with pytest.raises(ValueError, match="10"):
        qq_export(np.arange(5.0), tmp_path / "no.csv")


def test_entropy_table_export(tmp_path):
    rng = make_rng(25)
    x = rng.standard_normal((12, 3))
    report = einstein_entropy(x)
    path = tmp_path / "entropy.csv"
    entropy_table_export(report, path, class_labels=np.arange(12) % 2)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["observation", "neg_log_lik", "entropy_rank", "label"]
    assert len(rows) == 13
    ranks = {int(r[2]) for r in rows[1:]}
    assert ranks == set(range(12))
