import numpy as np
import pytest
from scipy.special import expit

from conftest import central_difference, rel_err
from sgfs.harness import generate_synthetic
from sgfs.model import (
    Dataset,
    DimensionError,
    FactorizationError,
    GaussianPosterior,
    GaussianTarget,
    LinearRegressionModel,
    LogisticRegressionModel,
    conjugate_posterior,
    load_csv,
    remap_labels,
    save_csv,
)


def _logistic(X, y, lam=1.0):
    return LogisticRegressionModel(Dataset(X, y), lam)


class TestScore:
    def test_logistic_at_zero(self):
        rng = np.random.default_rng(0)
        m = _logistic(rng.standard_normal((4, 3)), [0, 1, 1, 0])
        x = np.array([0.5, -2.0, 3.0])
        for y in (0, 1):
            np.testing.assert_allclose(m.score(np.zeros(3), x, y), (y - 0.5) * x)

    @pytest.mark.parametrize("kind", ["linear", "logistic"])
    def test_zero_feature_gives_zero_score(self, kind):
        data, _ = generate_synthetic(kind, 10, 3, 0, 1.0 if kind == "linear" else None)
        m = (LinearRegressionModel(data, 1.0, 2.0) if kind == "linear"
             else LogisticRegressionModel(data))
        np.testing.assert_array_equal(m.score(np.array([1.0, -2.0, 0.3]), np.zeros(3), 1.0),
                                      np.zeros(3))

    def test_logistic_finite_difference(self):
        m = _logistic(np.ones((1, 2)), [1.0])
        theta = np.array([0.3, -0.7])
        x = np.array([1.0, 2.0])

        def loglik(th):
            return np.log(expit(th @ x))

        fd = central_difference(loglik, theta, h=1e-6)
        assert rel_err(m.score(theta, x, 1), fd) < 1e-5

    def test_linear_closed_form(self):
        m = LinearRegressionModel(Dataset(np.ones((1, 2)), [0.0]), 1.0, noise_variance=4.0)
        theta, x = np.array([1.0, 2.0]), np.array([0.5, -1.0])
        np.testing.assert_allclose(m.score(theta, x, 3.0), (3.0 - theta @ x) / 4.0 * x)

    def test_dimension_mismatch(self, logistic_model):
        with pytest.raises(DimensionError):
            logistic_model.score(np.zeros(3), np.zeros(2), 1)
        with pytest.raises(DimensionError):
            logistic_model.scores(np.zeros(4))


class TestGradLogPrior:
    def test_values(self):
        m = LinearRegressionModel(Dataset(np.ones((1, 2)), [0.0]), 1.0)
        np.testing.assert_allclose(m.grad_log_prior(np.array([2.0, -3.0])), [-2.0, 3.0])
        np.testing.assert_array_equal(m.grad_log_prior(np.zeros(2)), np.zeros(2))

    def test_finite_difference(self):
        rng = np.random.default_rng(3)
        m = LinearRegressionModel(Dataset(np.ones((1, 5)), [0.0]), 0.001)
        theta = rng.standard_normal(5)
        fd = central_difference(m.log_prior, theta)
        assert rel_err(m.grad_log_prior(theta), fd) < 1e-6

    def test_matrix_precision(self):
        lam = np.array([[2.0, 0.5], [0.5, 1.0]])
        m = LinearRegressionModel(Dataset(np.ones((1, 2)), [0.0]), lam)
        theta = np.array([1.0, -1.0])
        np.testing.assert_allclose(m.grad_log_prior(theta), -lam @ theta)


class TestMinibatchMeanScore:
    def test_singleton(self, linear_model):
        theta = np.full(5, 0.1)
        i = 17
        X, y = linear_model.dataset.X, linear_model.dataset.y
        np.testing.assert_allclose(linear_model.minibatch_mean_score(theta, [i]),
                                   linear_model.score(theta, X[i], y[i]))

    def test_whole_dataset(self, linear_model):
        theta = np.full(5, -0.2)
        full = linear_model.minibatch_mean_score(theta, np.arange(linear_model.N))
        G_N = linear_model.scores(theta).sum(axis=0)
        np.testing.assert_allclose(full, G_N / linear_model.N, rtol=1e-12)

    def test_brute_force_seven_rows(self, linear_model):
        rng = np.random.default_rng(7)
        theta = rng.standard_normal(5)
        idx = rng.choice(linear_model.N, 7, replace=False)
        X, y = linear_model.dataset.X, linear_model.dataset.y
        acc = np.zeros(5)
        for i in idx:
            r = y[i] - sum(theta[j] * X[i, j] for j in range(5))
            acc += r * X[i]
        np.testing.assert_allclose(linear_model.minibatch_mean_score(theta, idx), acc / 7,
                                   atol=1e-12)

    def test_empty_batch(self, linear_model):
        with pytest.raises(ValueError):
            linear_model.minibatch_mean_score(np.zeros(5), [])


class TestExactPosterior:
    def test_empty_dataset_gives_prior(self):
        post = conjugate_posterior(np.zeros((0, 3)), np.zeros(0), 2.0, 1.0)
        np.testing.assert_allclose(post.mean, np.zeros(3))
        np.testing.assert_allclose(post.covariance, np.eye(3) / 2.0)

    def test_one_datum(self):
        m = LinearRegressionModel(Dataset([[1.0]], [0.0]), 1.0, 1.0)
        post = m.exact_posterior()
        np.testing.assert_allclose(post.mean, [0.0])
        np.testing.assert_allclose(post.covariance, [[0.5]])

    def test_singular_precision(self):
        X = np.ones((3, 2))  # rank 1
        with pytest.raises(FactorizationError):
            conjugate_posterior(X, np.ones(3), np.zeros((2, 2)), 1.0)

    def test_grid_quadrature_d3(self):
        data, _ = generate_synthetic("linear", 50, 3, 11, 1.0)
        m = LinearRegressionModel(data, 1.0, 1.0)
        X, y = data.X, data.y
        # box from least squares, independent of the conjugate formula
        ols = np.linalg.lstsq(X, y, rcond=None)[0]
        sd = np.sqrt(np.diag(np.linalg.inv(X.T @ X)))
        axes = [np.linspace(c - 7 * s, c + 7 * s, 61) for c, s in zip(ols, sd)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        resid = y[None, :] - grid @ X.T
        logp = -0.5 * (resid**2).sum(axis=1) - 0.5 * (grid**2).sum(axis=1)
        w = np.exp(logp - logp.max())
        cell = np.prod([a[1] - a[0] for a in axes])
        density = w / (w.sum() * cell)
        oracle = np.exp(m.exact_posterior().logpdf(grid))
        mask = density > 1e-3 * density.max()
        assert rel_err(density[mask], oracle[mask]) < 1e-3


class TestLogUnnormalizedPosterior:
    @pytest.mark.parametrize("fixture", ["linear_model", "logistic_model"])
    def test_gradient_consistency(self, fixture, request):
        m = request.getfixturevalue(fixture)
        rng = np.random.default_rng(5)
        theta = 0.3 * rng.standard_normal(m.dim)
        fd = central_difference(m.log_unnormalized_posterior, theta, h=1e-5)
        expected = m.grad_log_prior(theta) + m.N * m.minibatch_mean_score(theta, np.arange(m.N))
        assert rel_err(expected, fd) < 1e-5
        np.testing.assert_allclose(m.grad_log_posterior(theta), expected, rtol=1e-10)

    def test_constant_offset_from_conjugate(self):
        data, _ = generate_synthetic("linear", 200, 3, 4, 0.5)
        m = LinearRegressionModel(data, 1.0, 0.5)
        post = m.exact_posterior()
        rng = np.random.default_rng(0)
        for _ in range(5):
            a, b = post.sample(rng), post.sample(rng)
            dd = (m.log_unnormalized_posterior(a) - m.log_unnormalized_posterior(b)
                  - post.logpdf(a) + post.logpdf(b))
            assert abs(dd) < 1e-8

    def test_duplicate_datum_is_additive(self):
        data, _ = generate_synthetic("logistic", 30, 2, 9)
        m = LogisticRegressionModel(data)
        X2 = np.vstack([data.X, data.X[:1]])
        y2 = np.append(data.y, data.y[0])
        m2 = LogisticRegressionModel(Dataset(X2, y2))
        theta = np.array([0.4, -1.1])
        added = m2.log_unnormalized_posterior(theta) - m.log_unnormalized_posterior(theta)
        assert added == pytest.approx(m.log_likelihood(theta, [0])[0], abs=1e-12)


@pytest.mark.parametrize("kind", ["linear", "logistic"])
def test_score_finite_difference_suite(kind):
    rng = np.random.default_rng(42)
    D = 4
    m = (LinearRegressionModel(Dataset(np.ones((1, D)), [0.0]), 1.0, 0.7) if kind == "linear"
         else _logistic(np.ones((1, D)), [1.0]))
    for _ in range(100):
        theta, x = rng.standard_normal(D), rng.standard_normal(D)
        y = rng.standard_normal() if kind == "linear" else float(rng.integers(2))
        probe = Dataset(x[None, :], [y])
        single = (LinearRegressionModel(probe, 1.0, 0.7) if kind == "linear"
                  else LogisticRegressionModel(probe))
        fd = central_difference(lambda th: single.log_likelihood(th)[0], theta)
        assert rel_err(m.score(theta, x, y), fd) < 1e-5


def test_mean_score_vanishes_at_truth():
    data, meta = generate_synthetic("linear", 100_000, 3, 8, 1.0)
    m = LinearRegressionModel(data, 1.0, 1.0)
    theta0 = np.asarray(meta["theta0"])
    g = m.minibatch_mean_score(theta0, np.arange(m.N))
    bound = 3 * np.sqrt(np.trace(m.fisher_information()) / m.N)
    assert np.linalg.norm(g) <= bound


def test_logistic_grid_close_to_laplace(logistic_model):
    data, _ = generate_synthetic("logistic", 3000, 2, 2)
    m = LogisticRegressionModel(data)
    grid = m.grid_posterior(points=201)
    lap = m.laplace_approximation()
    sd = np.sqrt(np.diag(lap.covariance))
    assert np.all(np.abs(grid.mean - lap.mean) < 0.2 * sd)
    np.testing.assert_allclose(np.diag(grid.covariance), np.diag(lap.covariance), rtol=0.1)
    assert grid.density.shape == (201, 201)


def test_dataset_is_immutable(linear_model):
    with pytest.raises(ValueError):
        linear_model.dataset.X[0, 0] = 1.0


def test_label_remap():
    np.testing.assert_array_equal(remap_labels([-1, 1, 1]), [0, 1, 1])
    with pytest.raises(ValueError):
        remap_labels([0, 2])
    with pytest.raises(ValueError):
        _logistic(np.ones((2, 1)), [-1, 1])


def test_csv_round_trip(tmp_path):
    data, meta = generate_synthetic("logistic", 20, 3, 0)
    ds = Dataset(data.X, 2 * data.y - 1)
    path = tmp_path / "d.csv"
    save_csv(ds, path, meta)
    back = load_csv(path, binary_labels=True)
    np.testing.assert_array_equal(back.X, data.X)
    np.testing.assert_array_equal(back.y, data.y)
    assert path.with_suffix(".json").exists()
    assert path.read_text().splitlines()[0] == "x0,x1,x2,y"


def test_gaussian_posterior_requires_pd():
    with pytest.raises(FactorizationError):
        GaussianPosterior([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


def test_gaussian_target_gradient():
    tgt = GaussianTarget([1.0, -1.0], [[2.0, 0.3], [0.3, 1.0]])
    theta = np.array([0.2, 0.5])
    fd = central_difference(tgt.log_unnormalized_posterior, theta)
    assert rel_err(tgt.grad_log_posterior(theta), fd) < 1e-6
