"""Observation-entropy analytics over a data matrix.

Given P observations of N observables, each row gets a negative Gaussian
log-likelihood under the empirical covariance,

    nll(x) = (x - mean) C^-1 (x - mean)^T / 2 + log det(2 pi C) / 2,

whose negation (plus any constant) ranks observations by entropy: the
*intricates* are the least likely, lowest-entropy rows.  The module also
computes conjugate rows x C^-1, the Mardia kurtosis scalar, and a Q-Q
table of the nll values against a Gaussian for non-Gaussianity checks.

The Mahalanobis part has an exact linear-algebra twin: with the thin SVD
of the mean-centered matrix X = V L W^T and C = X^T X / P, the quadratic
form equals P * diag(V V^T), which the tests exploit.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import ndtri


class SingularCovarianceError(np.linalg.LinAlgError):
    """Covariance is not invertible; pass a positive ridge regularizer."""


@dataclass(frozen=True)
class EntropyReport:
    neg_log_lik: np.ndarray     # per observation, recomputable from the rest
    ranking: np.ndarray         # permutation, ascending entropy
    kurtosis: float
    covariance: np.ndarray      # the (ridge-regularized) matrix actually inverted
    mean_vector: np.ndarray


def _covariance(X, regularizer):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need a [P x N] matrix with P >= 2")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / X.shape[0]
    if regularizer is None:
        regularizer = 1e-6 * np.trace(cov) / X.shape[1]
    if regularizer:
        cov = cov + regularizer * np.eye(X.shape[1])
    return mean, centered, cov


def _solve_spd(cov, rhs):
    try:
        factor = cho_factor(cov, lower=True)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError(
            "covariance is singular; rerun with a positive ridge regularizer")
    return cho_solve(factor, rhs.T).T


def einstein_entropy(X, regularizer=None):
    """Per-observation negative Gaussian log-likelihoods and their ranking.

    ``regularizer`` is a ridge added to the covariance diagonal; the default
    1e-6 * trace(C)/N keeps rank-deficient pixel covariances invertible.
    Pass 0 to insist on the raw covariance.  The log-det constant is
    included so values compare across datasets; the entropy is the negated
    nll, so the ranking sorts nll descending.
    """
    mean, centered, cov = _covariance(X, regularizer)
    solved = _solve_spd(cov, centered)
    mahal = np.einsum("ij,ij->i", centered, solved)
    sign, logdet = np.linalg.slogdet(2.0 * np.pi * cov)
    if sign <= 0:
        raise SingularCovarianceError(
            "covariance has non-positive determinant; increase the ridge")
    nll = 0.5 * mahal + 0.5 * logdet
    ranking = np.argsort(-nll, kind="stable")
    kurt = float(np.mean(mahal * mahal))
    return EntropyReport(nll, ranking, kurt, cov, mean)


def conjugate(X, cov, index):
    """The conjugate row x C^-1 of observation ``index``.

    Half the inner product with the original row reproduces the Mahalanobis
    half-norm when ``X`` holds centered rows and ``cov`` their covariance.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    row = X[index]
    try:
        return np.linalg.solve(np.asarray(cov, dtype=np.float64), row)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError("covariance is singular")


def multivariate_kurtosis(X, regularizer=None):
    """Mean squared Mahalanobis norm (Mardia's scalar); N(N+2) for Gaussians."""
    mean, centered, cov = _covariance(X, regularizer)
    solved = _solve_spd(cov, centered)
    mahal = np.einsum("ij,ij->i", centered, solved)
    return float(np.mean(mahal * mahal))


def intricates(report, class_labels, klass, count):
    """Indices of the ``count`` lowest-entropy members of a class, ascending.

    Lowest entropy means largest negative log-likelihood, so the first index
    is the least likely member.
    """
    class_labels = np.asarray(class_labels)
    members = np.flatnonzero(class_labels == klass)
    if members.size == 0:
        raise ValueError(f"class {klass!r} has no members")
    if count > members.size:
        raise ValueError(f"asked for {count} of {members.size} class members")
    order = members[np.argsort(-report.neg_log_lik[members], kind="stable")]
    return order[:count]


def qq_export(values, path):
    """Write a (gaussian_quantile, empirical_quantile) CSV for a Q-Q plot.

    Values are standardized, so Gaussian data sits on the diagonal; the
    probability grid is (i - 1/2)/n.  A constant vector exports a horizontal
    line at zero.  Plotting is left to external tools.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size < 10:
        raise ValueError("need at least 10 values for a quantile table")
    std = values.std()
    constant = std <= 1e-12 * max(1.0, float(np.abs(values).max()))
    standardized = np.zeros_like(values) if constant else (values - values.mean()) / std
    empirical = np.sort(standardized)
    grid = (np.arange(1, values.size + 1) - 0.5) / values.size
    gaussian = ndtri(grid)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gaussian_quantile", "empirical_quantile"])
        for g, e in zip(gaussian, empirical):
            writer.writerow([f"{g:.12g}", f"{e:.12g}"])
    return gaussian, empirical


def entropy_table_export(report, path, class_labels=None):
    """CSV table of (observation, neg_log_lik, entropy_rank[, label])."""
    rank_of = np.empty_like(report.ranking)
    rank_of[report.ranking] = np.arange(report.ranking.size)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["observation", "neg_log_lik", "entropy_rank"]
        if class_labels is not None:
            header.append("label")
        writer.writerow(header)
        for i, nll in enumerate(report.neg_log_lik):
            row = [i, f"{nll:.12g}", int(rank_of[i])]
            if class_labels is not None:
                row.append(int(class_labels[i]))
            writer.writerow(row)
