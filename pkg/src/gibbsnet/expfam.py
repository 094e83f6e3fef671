"""Exponential/Gibbs density families with closed-form divergences.

Three families are implemented:

* :class:`Gaussian` -- independent coordinates N(mean_j, sigma_j^2);
* :class:`Laplacian` -- independent coordinates Lap(mean_j, b_j).  The
  Laplacian is handled as a two-piece exponential family; its divergences
  and sampling use exact closed forms.  The standardized member has
  b = sqrt(0.5) (unit variance), and the posterior convention is
  b = sigma * sqrt(0.5) so that (mean, sigma) -> (0, 1) gives zero
  generative error;
* :class:`DiscreteNatural` -- a finite-state tabular family
  p(k) = base(k) exp(F - lam . stats(k)) over explicit sufficient
  statistics, used for the exact Legendre / projection checks.

The generative error of a posterior against the standardized prior of its
family is the KL divergence, returned per coordinate and summed.  The
natural-parameter machinery (free energy, macroscopic moments, Legendre
transform, moment-matching projection) lives in :class:`GaussianNatural`
and :class:`DiscreteNatural`; these solvers are verification tools, not
training-path code.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

SQRT_HALF = np.sqrt(0.5)


class UnsupportedPairError(ValueError):
    """Raised when a divergence is requested across families."""


def _vec(x):
    return np.atleast_1d(np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class Gaussian:
    """Independent Gaussian coordinates with mean and standard deviation."""
    mean: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _vec(self.mean))
        object.__setattr__(self, "sigma", np.broadcast_to(
            _vec(self.sigma), self.mean.shape).copy())
        if np.any(self.sigma <= 0):
            raise ValueError("Gaussian needs sigma > 0 in every coordinate")

    @property
    def dimension(self):
        return self.mean.size

    def log_density(self, z):
        z = _vec(z)
        if z.size != self.dimension:
            raise ValueError(f"dimension mismatch: {z.size} != {self.dimension}")
        u = (z - self.mean) / self.sigma
        return float(np.sum(-0.5 * u * u - np.log(self.sigma)
                            - 0.5 * np.log(2.0 * np.pi)))

    def sample_reparam(self, noise):
        noise = _vec(noise)
        _check_noise(noise, self.dimension)
        return self.mean + self.sigma * ndtri(noise)

    def sample(self, rng, count=None):
        u = rng.uniform(size=self.dimension if count is None
                        else (count, self.dimension))
        return self.mean + self.sigma * ndtri(u)


@dataclass(frozen=True)
class Laplacian:
    """Independent Laplacian coordinates Lap(mean, b), density exp(-|z-m|/b)/(2b)."""
    mean: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _vec(self.mean))
        object.__setattr__(self, "b", np.broadcast_to(
            _vec(self.b), self.mean.shape).copy())
        if np.any(self.b <= 0):
            raise ValueError("Laplacian needs b > 0 in every coordinate")

    @classmethod
    def from_unit_scale(cls, mean, sigma):
        """Posterior convention b = sigma * sqrt(0.5); sigma = 1 is standardized."""
        return cls(_vec(mean), _vec(sigma) * SQRT_HALF)

    @property
    def sigma(self):
        return self.b / SQRT_HALF

    @property
    def dimension(self):
        return self.mean.size

    def log_density(self, z):
        z = _vec(z)
        if z.size != self.dimension:
            raise ValueError(f"dimension mismatch: {z.size} != {self.dimension}")
        return float(np.sum(-np.abs(z - self.mean) / self.b
                            - np.log(2.0 * self.b)))

    def sample_reparam(self, noise):
        noise = _vec(noise)
        _check_noise(noise, self.dimension)
        w = noise - 0.5
        return self.mean - self.b * np.sign(w) * np.log1p(-2.0 * np.abs(w))

    def sample(self, rng, count=None):
        u = rng.uniform(size=self.dimension if count is None
                        else (count, self.dimension))
        w = u - 0.5
        return self.mean - self.b * np.sign(w) * np.log1p(-2.0 * np.abs(w))


def _check_noise(noise, dim):
    if noise.size != dim:
        raise ValueError(f"noise dimension {noise.size} != {dim}")
    if np.any(noise <= 0.0) or np.any(noise >= 1.0):
        raise ValueError("reparameterization noise must lie strictly in (0, 1)")


def standard_prior(family, dimension):
    """The standardized (zero generative error) member of a family."""
    zeros = np.zeros(dimension)
    if family == "gaussian":
        return Gaussian(zeros, np.ones(dimension))
    if family == "laplacian":
        return Laplacian(zeros, np.full(dimension, SQRT_HALF))
    raise ValueError(f"no standardized prior for family {family!r}")


@dataclass(frozen=True)
class GenerativeErrorResult:
    """Non-negative divergence in nats, total and per coordinate."""
    value: float
    per_coordinate: np.ndarray


def generative_error(posterior, prior):
    """Closed-form KL(posterior || prior) for same-family standardized priors.

    Gaussian: (mean^2 + sigma^2 - 1)/2 - log sigma per coordinate.
    Laplacian (prior b = sqrt(0.5), posterior b = sigma*sqrt(0.5)):
    -log sigma + |mean|/sqrt(0.5) + sigma*exp(-|mean|/(sigma*sqrt(0.5))) - 1.
    """
    if isinstance(posterior, Gaussian) and isinstance(prior, Gaussian):
        if posterior.dimension != prior.dimension:
            raise ValueError("dimension mismatch")
        if not (np.allclose(prior.mean, 0.0) and np.allclose(prior.sigma, 1.0)):
            raise ValueError("prior must be the standardized Gaussian(0, 1)")
        mu, s = posterior.mean, posterior.sigma
        per = 0.5 * (mu * mu + s * s - 1.0) - np.log(s)
    elif isinstance(posterior, Laplacian) and isinstance(prior, Laplacian):
        if posterior.dimension != prior.dimension:
            raise ValueError("dimension mismatch")
        if not (np.allclose(prior.mean, 0.0)
                and np.allclose(prior.b, SQRT_HALF)):
            raise ValueError("prior must be the standardized Laplacian(0, sqrt(0.5))")
        mu, s = posterior.mean, posterior.sigma
        per = (-np.log(s) + np.abs(mu) / SQRT_HALF
               + s * np.exp(-np.abs(mu) / (s * SQRT_HALF)) - 1.0)
    else:
        raise UnsupportedPairError(
            f"no closed form for {type(posterior).__name__} vs {type(prior).__name__}")
    per = np.maximum(per, 0.0)   # guard the exact-prior case against -0.0 roundoff
    return GenerativeErrorResult(float(per.sum()), per)


@dataclass(frozen=True)
class Mixture:
    """Finite mixture with weights summing to one."""
    weights: np.ndarray
    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "weights", _vec(self.weights))
        object.__setattr__(self, "components", tuple(self.components))
        if np.any(self.weights < 0):
            raise ValueError("mixture weights must be non-negative")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")
        if len(self.components) != self.weights.size:
            raise ValueError("one weight per component required")

    def log_density(self, z):
        logs = np.array([c.log_density(z) for c in self.components])
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        m = np.max(logw + logs)
        return float(m + np.log(np.sum(np.exp(logw + logs - m))))

    def sample(self, rng, count):
        picks = rng.choice(len(self.components), size=count, p=self.weights)
        out = np.empty((count, self.components[0].dimension))
        for s, c in enumerate(self.components):
            take = picks == s
            if take.any():
                out[take] = c.sample(rng, int(take.sum()))
        return out


def mixture_generative_error_bound(posterior, prior):
    """Log-sum-inequality upper bound on KL between equally weighted mixtures.

    Returns sum_s w_s * KL(posterior_s || prior_s), which dominates the true
    mixture divergence.
    """
    if np.max(np.abs(posterior.weights - prior.weights)) > 1e-12:
        raise ValueError("mixture bound requires identical weight vectors")
    total = 0.0
    for w, post, pri in zip(posterior.weights, posterior.components,
                            prior.components):
        total += float(w) * generative_error(post, pri).value
    return total


# ---------------------------------------------------------------------------
# natural-parameter machinery
# ---------------------------------------------------------------------------

class GaussianNatural:
    """One Gaussian coordinate over base N(0,1) with statistics (z, z^2).

    p_lam(z) = N(0,1)(z) * exp(F(lam) - lam1*z - lam2*z^2), normalizable for
    lam2 > -1/2.  Closed forms:

        sigma^2 = 1 / (1 + 2*lam2),   mean = -lam1 * sigma^2,
        F(lam)  = 0.5*log(1/sigma^2) - lam1^2 sigma^2 / 2,
        moments m = (mean, mean^2 + sigma^2).
    """

    n_stats = 2
    log_base_mass = 0.0

    def _params(self, lam):
        lam = np.asarray(lam, dtype=np.float64)
        denom = 1.0 + 2.0 * lam[1]
        if denom <= 0:
            raise ValueError("lam2 <= -1/2 is outside the normalizable domain")
        var = 1.0 / denom
        mean = -lam[0] * var
        return mean, var

    def free_energy(self, lam):
        mean, var = self._params(lam)
        # F = -log Z, Z = sigma_lam * exp(lam1^2 * var / 2)
        lam = np.asarray(lam, dtype=np.float64)
        return float(0.5 * np.log(1.0 / var) - 0.5 * lam[0] ** 2 * var)

    def moments(self, lam):
        mean, var = self._params(lam)
        return np.array([mean, mean * mean + var])

    def stat_covariance(self, lam):
        """Covariance of (z, z^2) under p_lam; the Hessian of -F."""
        mean, var = self._params(lam)
        c12 = 2.0 * mean * var
        c22 = 4.0 * mean * mean * var + 2.0 * var * var
        return np.array([[var, c12], [c12, c22]])

    def lam_from_moments(self, m):
        m = np.asarray(m, dtype=np.float64)
        var = m[1] - m[0] ** 2
        if var <= 0:
            raise ValueError("moments not attainable: m2 <= m1^2")
        return np.array([-m[0] / var, 0.5 * (1.0 / var - 1.0)])

    def generative_error_from_moments(self, m):
        m = np.asarray(m, dtype=np.float64)
        var = m[1] - m[0] ** 2
        if var <= 0:
            raise ValueError("moments not attainable: m2 <= m1^2")
        return float(0.5 * (m[0] ** 2 + var - 1.0) - 0.5 * np.log(var))


class DiscreteNatural:
    """Finite-state family p_lam(k) = base(k) exp(F - lam . stats[:, k]).

    ``base`` may be unnormalized (a counting measure works); the partition
    function absorbs its mass.  ``stats`` has one row per sufficient
    statistic.
    """

    def __init__(self, base, stats):
        self.base = _vec(base)
        self.stats = np.atleast_2d(np.asarray(stats, dtype=np.float64))
        if self.base.size != self.stats.shape[1]:
            raise ValueError("stats must have one column per state")
        if np.any(self.base <= 0):
            raise ValueError("base mass must be positive on every state")
        self.n_stats = self.stats.shape[0]
        self.log_base_mass = float(np.log(self.base.sum()))

    def probabilities(self, lam):
        lam = _vec(lam)
        logits = np.log(self.base) - lam @ self.stats
        logits -= logits.max()
        p = np.exp(logits)
        return p / p.sum()

    def free_energy(self, lam):
        lam = _vec(lam)
        logits = np.log(self.base) - lam @ self.stats
        m = logits.max()
        return float(-(m + np.log(np.exp(logits - m).sum())))

    def moments(self, lam):
        return self.stats @ self.probabilities(lam)

    def stat_covariance(self, lam):
        p = self.probabilities(lam)
        m = self.stats @ p
        centered = self.stats - m[:, None]
        return (centered * p) @ centered.T

    def generative_error_from_lam(self, lam):
        """KL(p_lam || base/|base|) by direct enumeration."""
        p = self.probabilities(lam)
        q = self.base / self.base.sum()
        mask = p > 0
        return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def dgen_lam_gradient(family, lam):
    """d/d(lam) of the generative error along m(lam): lam . Cov_lam(stats).

    The raw second-moment form only matches when the statistic means vanish;
    the finite-difference identity holds with the centered (covariance)
    matrix, which is what this returns.
    """
    return _vec(lam) @ family.stat_covariance(lam)


def legendre_check(family, m, tol=1e-10, max_iter=200):
    """Solve -D(m) = min over lam of {lam . m - F(lam)}.

    Damped Newton with backtracking on the convex objective; returns the
    optimizing natural parameters and the generative error D(m).  The
    optimum satisfies moments(lam*) = m, i.e. -dD/dm = lam*.
    """
    m = _vec(m)
    lam = np.zeros(family.n_stats)
    for _ in range(max_iter):
        grad = m - family.moments(lam)
        if np.linalg.norm(grad) < tol:
            break
        hess = family.stat_covariance(lam)
        try:
            step = np.linalg.solve(hess + 1e-12 * np.eye(len(lam)), -grad)
        except np.linalg.LinAlgError:
            step = -grad
        # backtrack on the objective lam.m - F(lam)
        obj = float(lam @ m - family.free_energy(lam))
        t = 1.0
        while t > 1e-12:
            cand = lam + t * step
            try:
                cand_obj = float(cand @ m - family.free_energy(cand))
            except ValueError:
                t *= 0.5
                continue
            if cand_obj < obj:
                lam = cand
                break
            t *= 0.5
        else:
            break
    grad = m - family.moments(lam)
    if np.linalg.norm(grad) > 1e-6:
        raise ValueError(
            f"no solution: moments not attainable by the family "
            f"(residual {np.linalg.norm(grad):.3e})")
    # the Legendre value is a divergence against the *normalized* base; an
    # unnormalized base shifts the free energy by -log(base mass)
    dgen = -(float(lam @ m - family.free_energy(lam))) + family.log_base_mass
    return lam, dgen


def exponential_projection(target, base, stats, tol=1e-12, max_iter=300):
    """Moment-matching projection of a discrete density onto span(stats).

    Finds lam with E_{p_lam}[stats] = E_target[stats] by minimizing the
    convex function lam . E_target[stats] - F(lam); returns (lam, p_lam).
    """
    family = DiscreteNatural(base, stats)
    target = _vec(target)
    want = family.stats @ target
    lam = np.zeros(family.n_stats)
    for _ in range(max_iter):
        grad = want - family.moments(lam)
        if np.linalg.norm(grad) < tol:
            break
        hess = family.stat_covariance(lam)
        step = np.linalg.solve(hess + 1e-13 * np.eye(len(lam)), -grad)
        obj = float(lam @ want - family.free_energy(lam))
        t = 1.0
        while t > 1e-14:
            cand = lam + t * step
            if float(cand @ want - family.free_energy(cand)) < obj:
                lam = cand
                break
            t *= 0.5
        else:
            break
    residual = np.linalg.norm(want - family.moments(lam))
    if residual > 1e-8:
        raise RuntimeError(f"projection solver stalled, moment residual {residual:.3e}")
    return lam, family.probabilities(lam)


def discrete_kl(p, q):
    p, q = _vec(p), _vec(q)
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def pythagorean_check(f, base, stats):
    """The three divergences of the variational Pythagorean identity.

    Projects ``f`` onto the exponential family over ``base`` spanned by
    ``stats`` and returns (D(f||p), D(f||p_lam), D(p_lam||p)); the first
    equals the sum of the other two at the moment-matched projection.
    """
    f = _vec(f)
    if f.size > 64:
        raise ValueError("pythagorean_check is an exact-enumeration tool; <= 64 states")
    p = _vec(base)
    p = p / p.sum()
    _, proj = exponential_projection(f, p, stats)
    return discrete_kl(f, p), discrete_kl(f, proj), discrete_kl(proj, p)
