import csv

import numpy as np
import pytest

from gibbsnet.autodiff import make_rng
from gibbsnet.expfam import Gaussian, generative_error, standard_prior
from gibbsnet.nets import build_vae
from gibbsnet.varest import (cross_entropy_csv, estimate_dvar,
                             full_cross_entropy, model_log_rec,
                             model_posterior, sufficient_statistics)

from oracles import LinearGaussianFixture


def test_constant_reconstruction_gives_zero_dvar():
    posterior = Gaussian([0.3, -0.2], [0.8, 1.1])
    est = estimate_dvar(posterior, lambda z: np.full(len(z), -7.25),
                        sample_count=200, rng=make_rng(1))
    assert est.dvar == pytest.approx(0.0, abs=1e-12)
    assert np.max(np.abs(est.residuals)) < 1e-10


def test_affine_in_statistics_gives_zero_dvar():
    posterior = Gaussian([0.5], [1.3])

    def log_rec(z):
        return 3.0 - 0.2 * z[:, 0] + 0.7 * z[:, 0] ** 2

    est = estimate_dvar(posterior, log_rec, sample_count=300, rng=make_rng(2))
    assert abs(est.dvar) < 1e-10


def test_estimate_invariant_to_constant_shift():
    posterior = Gaussian([0.0, 0.4], [1.0, 0.7])
    rng_a, rng_b = make_rng(3), make_rng(3)

    def log_rec(z):
        return -np.sin(z).sum(axis=1) - 0.5 * (z ** 2).sum(axis=1)

    base = estimate_dvar(posterior, log_rec, 400, rng=rng_a)
    shifted = estimate_dvar(posterior, lambda z: log_rec(z) + 100.0, 400,
                            rng=rng_b)
    assert shifted.dvar == pytest.approx(base.dvar, abs=1e-10)
    assert shifted.intercept == pytest.approx(base.intercept + 100.0, abs=1e-8)


def test_dvar_nonnegative_always():
    rng = make_rng(5)
    for trial in range(20):
        posterior = Gaussian(rng.uniform(-1, 1, 2), rng.uniform(0.4, 1.5, 2))
        amp = rng.uniform(0.1, 2.0)

        def log_rec(z, amp=amp):
            return amp * np.cos(z).prod(axis=1)

        est = estimate_dvar(posterior, log_rec, 200, rng=rng)
        assert est.dvar >= 0.0


def test_gaussian_residual_method():
    posterior = Gaussian([0.0], [1.0])
    rng = make_rng(7)

    def log_rec(z):
        return np.cos(2 * z[:, 0])

    log_est = estimate_dvar(posterior, log_rec, 5000, "logmeanexp", make_rng(8))
    gauss_est = estimate_dvar(posterior, log_rec, 5000, "gaussian", make_rng(8))
    assert gauss_est.method == "gaussian"
    assert gauss_est.dvar == pytest.approx(gauss_est.residuals.var() / 2)
    # the two readings agree in order of magnitude on a mild fixture
    assert abs(gauss_est.dvar - log_est.dvar) < 0.5 * max(log_est.dvar, 0.01)


def test_estimator_rejects_tiny_sample_counts_and_missing_rng():
    posterior = Gaussian([0.0], [1.0])
    with pytest.raises(ValueError, match="50"):
        estimate_dvar(posterior, lambda z: z[:, 0], 10, rng=make_rng(0))
    with pytest.raises(ValueError, match="generator"):
        estimate_dvar(posterior, lambda z: z[:, 0], 100)


def test_statistics_shapes():
    from gibbsnet.expfam import Laplacian
    z = np.arange(6.0).reshape(3, 2)
    gauss = sufficient_statistics(Gaussian([0.0, 0.0], [1.0, 1.0]), z)
    assert gauss.shape == (3, 4)
    lap = sufficient_statistics(Laplacian([1.0, 1.0], [1.0, 1.0]), z)
    assert lap.shape == (3, 4)
    assert np.array_equal(lap[:, 2:], np.abs(z - 1.0))


# --------------------------------------------------------------------------
# conjugate fixture
# --------------------------------------------------------------------------

def test_one_dimensional_conjugate_case_is_exact_with_zero_error():
    fixture = LinearGaussianFixture(latent_dim=1, obs_dim=4, noise=1.0, seed=3)
    x = fixture.draw_observation(np.random.default_rng(4))
    mean, sigma = fixture.mean_field_params(x)
    posterior = Gaussian(mean, sigma)
    est = estimate_dvar(posterior, fixture.log_rec(x), 400, rng=make_rng(9))
    assert fixture.exact_dvar(x) == pytest.approx(0.0, abs=1e-12)
    assert est.dvar == pytest.approx(0.0, abs=1e-9)


def test_conjugate_fixture_estimates_exact_divergence():
    fixture = LinearGaussianFixture(latent_dim=2, obs_dim=6, noise=1.0, seed=11)
    x = fixture.draw_observation(np.random.default_rng(12))
    exact = fixture.exact_dvar(x)
    assert exact > 0.01
    mean, sigma = fixture.mean_field_params(x)
    posterior = Gaussian(mean, sigma)
    for seed in range(20):
        est = estimate_dvar(posterior, fixture.log_rec(x), 4000,
                            rng=make_rng(100 + seed))
        assert abs(est.dvar - exact) <= 3.0 * est.std_error, seed


def test_full_cross_entropy_matches_exact_marginal_on_fixture():
    fixture = LinearGaussianFixture(latent_dim=2, obs_dim=6, noise=1.0, seed=13)
    rng = np.random.default_rng(14)
    for _ in range(5):
        x = fixture.draw_observation(rng)
        mean, sigma = fixture.mean_field_params(x)
        posterior = Gaussian(mean, sigma)
        log_rec = fixture.log_rec(x)
        draw_rng = make_rng(15)
        z = posterior.sample(draw_rng, 4000)
        bound = (generative_error(posterior, standard_prior("gaussian", 2)).value
                 + float(np.mean(-log_rec(z))))
        est = estimate_dvar(posterior, log_rec, 4000, rng=draw_rng)
        neg_log_q = bound - est.dvar
        exact = fixture.exact_neg_log_marginal(x)
        # three combined standard errors: the reconstruction average and the
        # residual exponential both carry Monte-Carlo noise
        rec_se = float(np.std(-log_rec(z), ddof=1) / np.sqrt(len(z)))
        assert abs(neg_log_q - exact) <= 3.0 * (rec_se + est.std_error)


# --------------------------------------------------------------------------
# model-facing report
# --------------------------------------------------------------------------

def _toy_model():
    model = build_vae(n_obs=12, enc_hidden=[8], n_lat=2, dec_hidden=[6],
                      family="gaussian", seed=21)
    return model


def test_full_cross_entropy_table_and_jensen_direction(tmp_path):
    model = _toy_model()
    rng = make_rng(22)
    x = (rng.uniform(size=(4, 12)) < 0.4).astype(np.float64)
    rows = full_cross_entropy(model, x, sample_count=200, rng=make_rng(23))
    assert [row["observation"] for row in rows] == [0, 1, 2, 3]
    for row in rows:
        assert row["neg_log_q"] <= row["bound"] + 1e-12
        assert row["dvar"] >= 0.0
    path = tmp_path / "xent.csv"
    cross_entropy_csv(rows, path)
    with open(path) as fh:
        parsed = list(csv.reader(fh))
    assert parsed[0] == ["observation", "bound", "dvar", "neg_log_q"]
    assert len(parsed) == 5


def test_constant_decoder_model_report_equals_bound():
    model = _toy_model()
    for name, node in model.parameters().items():
        if name.startswith("dec0"):
            node.value = np.zeros_like(node.value)
    rng = make_rng(24)
    x = (rng.uniform(size=(2, 12)) < 0.5).astype(np.float64)
    rows = full_cross_entropy(model, x, sample_count=200, rng=make_rng(25))
    for row in rows:
        assert row["dvar"] == pytest.approx(0.0, abs=1e-10)
        assert row["neg_log_q"] == pytest.approx(row["bound"], abs=1e-10)


def test_model_posterior_and_log_rec_adapters():
    model = _toy_model()
    x_row = (make_rng(26).uniform(size=12) < 0.5).astype(np.float64)
    posterior = model_posterior(model, x_row)
    assert posterior.dimension == 2
    log_rec = model_log_rec(model, x_row)
    z = posterior.sample(make_rng(27), 64)
    vals = log_rec(z)
    assert vals.shape == (64,)
    assert np.all(vals <= 0.0)   # pixel Bernoulli log-likelihoods
