"""Probabilistic model of the nominal task interaction wrench.

A mixture of Gaussians is fitted over extended samples [t, h1..h6] collected
from human-free task executions; regressing the wrench dimensions on time
then yields the expected task wrench at any instant, which the pipeline maps
through the end-effector Jacobian transpose to subtract from the residual.
Periodic tasks wrap time to the cycle phase before fitting and prediction.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .arm.kinematics import jacobian
from .errors import ConfigError
from .linalg import damped_pinv

COVARIANCE_FLOOR = 1e-6
KMEANS_MAX_RESTARTS = 10

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GmmModel:
    weights: np.ndarray        # (K,)
    means: np.ndarray          # (K, 7)
    covariances: np.ndarray    # (K, 7, 7)
    t_min: float
    t_max: float
    period: Optional[float] = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ConfigError("at least one mixture component required")
        if abs(w.sum() - 1.0) > 1e-12 or (w < 0.0).any():
            raise ConfigError("mixture weights must be a distribution")
        for cov in np.asarray(self.covariances, dtype=float):
            np.linalg.cholesky(cov)  # raises if not SPD

    @property
    def k(self):
        return len(self.weights)

    def phase(self, t):
        return float(t) % self.period if self.period else float(t)


@dataclass(frozen=True)
class Demonstration:
    """One human-free task execution: wrench samples over strictly
    increasing timestamps."""

    times: np.ndarray      # (N,)
    wrenches: np.ndarray   # (N, 6)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        wrenches = np.asarray(self.wrenches, dtype=float)
        if times.ndim != 1 or wrenches.shape != (times.size, 6):
            raise ConfigError("demonstration arrays have inconsistent shapes")
        if (np.diff(times) <= 0.0).any():
            raise ConfigError("demonstration timestamps must strictly increase")
        if not np.isfinite(wrenches).all():
            raise ConfigError("demonstration wrenches must be finite")

    def save_csv(self, path):
        header = "t,h1,h2,h3,h4,h5,h6"
        data = np.column_stack([self.times, self.wrenches])
        np.savetxt(path, data, delimiter=",", header=header, comments="")

    @staticmethod
    def load_csv(path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return Demonstration(data[:, 0], data[:, 1:7])


def demonstration_from_log(log, model):
    """Extract the nominal wrench stream from a recorded run.

    ``log`` maps 't' to (N,) timestamps, 'q' to (N, n) joint positions and
    'r' to (N, n) residuals; each wrench sample is the damped pseudo-inverse
    of the end-effector Jacobian transpose applied to the residual.
    """
    try:
        times = np.asarray(log["t"], dtype=float)
        q_hist = np.asarray(log["q"], dtype=float)
        residuals = np.asarray(log["r"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"log missing residual columns: {exc}") from exc
    if residuals.shape != (times.size, model.n):
        raise ConfigError("residual columns do not match the model size")
    ee = model.end_effector()
    wrenches = np.empty((times.size, 6))
    for i in range(times.size):
        jac_t = jacobian(model, q_hist[i], ee).T
        wrenches[i] = damped_pinv(jac_t) @ residuals[i]
    return Demonstration(times, wrenches)


def training_matrix(demos, period=None):
    """Stack demonstrations into extended samples [t, h]; wraps t to the
    cycle phase for periodic tasks."""
    blocks = []
    for demo in demos:
        t = np.asarray(demo.times, dtype=float)
        if period:
            t = t % period
        blocks.append(np.column_stack([t, demo.wrenches]))
    return np.vstack(blocks)


def _log_gaussian_rows(data, mean, cov):
    """Log density of N(mean, cov) at each row of data, via Cholesky."""
    from scipy.linalg import solve_triangular

    chol = np.linalg.cholesky(cov)
    white = solve_triangular(chol, (data - mean).T, lower=True)
    maha = np.sum(white * white, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (data.shape[1] * _LOG_2PI + logdet + maha)


def _component_log_densities(gmm, data):
    out = np.empty((data.shape[0], gmm.k))
    for k in range(gmm.k):
        out[:, k] = _log_gaussian_rows(data, gmm.means[k], gmm.covariances[k])
    return out


def log_likelihood(gmm, data):
    """Total log probability of the samples under the mixture (log-sum-exp)."""
    data = np.asarray(data, dtype=float)
    log_dens = _component_log_densities(gmm, data)
    total = float(np.sum(logsumexp(log_dens + np.log(gmm.weights), axis=1)))
    if not np.isfinite(total):
        raise ConfigError("non-finite likelihood (degenerate data)")
    return total


def kmeans_init(data, k, seed, period=None):
    """Seeded Lloyd clustering used to initialize the mixture.

    Covariances are the per-cluster sample covariances plus a small floor,
    weights the cluster fractions. Empty clusters trigger a reseeded restart.
    """
    data = np.asarray(data, dtype=float)
    n, dim = data.shape
    if n < k:
        raise ConfigError(f"need at least {k} samples, got {n}")
    rng = np.random.default_rng(seed)

    for _ in range(KMEANS_MAX_RESTARTS):
        centers = data[rng.choice(n, size=k, replace=False)].copy()
        labels = None
        for _ in range(300):
            d2 = ((data[:, None, :] - centers[None]) ** 2).sum(axis=2)
            new_labels = d2.argmin(axis=1)
            if labels is not None and (new_labels == labels).all():
                break
            labels = new_labels
            for j in range(k):
                sel = labels == j
                if sel.any():
                    centers[j] = data[sel].mean(axis=0)
        counts = np.bincount(labels, minlength=k)
        if (counts == 0).any():
            continue  # empty cluster: reseed
        weights = counts / n
        covs = np.empty((k, dim, dim))
        for j in range(k):
            diff = data[labels == j] - centers[j]
            covs[j] = diff.T @ diff / counts[j] + COVARIANCE_FLOOR * np.eye(dim)
        tcol = data[:, 0]
        return GmmModel(weights, centers, covs,
                        float(tcol.min()), float(tcol.max()), period)
    raise ConfigError(f"k-means produced an empty cluster in "
                      f"{KMEANS_MAX_RESTARTS} restarts")


def em_fit(data, k, init, max_iters=200, tol=1e-6):
    """Expectation-maximization refinement of an initial mixture.

    Stops once the log-likelihood gain drops below ``tol``; the covariance
    floor is re-applied every M step so noiseless synthetic data cannot
    collapse a component.
    """
    data = np.asarray(data, dtype=float)
    n, dim = data.shape
    weights = np.asarray(init.weights, dtype=float).copy()
    means = np.asarray(init.means, dtype=float).copy()
    covs = np.asarray(init.covariances, dtype=float).copy()
    model = GmmModel(weights, means, covs, init.t_min, init.t_max, init.period)

    prev_ll = log_likelihood(model, data)
    for _ in range(max_iters):
        log_dens = _component_log_densities(model, data) + np.log(model.weights)
        log_norm = logsumexp(log_dens, axis=1, keepdims=True)
        resp = np.exp(log_dens - log_norm)          # (N, K)

        mass = resp.sum(axis=0)                     # (K,)
        weights = mass / n
        means = (resp.T @ data) / mass[:, None]
        covs = np.empty((k, dim, dim))
        for j in range(k):
            diff = data - means[j]
            covs[j] = (resp[:, j, None] * diff).T @ diff / mass[j]
            covs[j] += COVARIANCE_FLOOR * np.eye(dim)
        model = GmmModel(weights / weights.sum(), means, covs,
                         model.t_min, model.t_max, model.period)

        ll = log_likelihood(model, data)
        if ll - prev_ll < tol:
            break
        prev_ll = ll
    return model


def fit_task_gmm(demos, k, seed, period=None, max_iters=200, tol=1e-6):
    """K-means initialization followed by EM, the full training recipe."""
    data = training_matrix(demos, period)
    init = kmeans_init(data, k, seed, period)
    return em_fit(data, k, init, max_iters=max_iters, tol=tol)


def gmr_predict(gmm, t):
    """Conditional mean and covariance of the wrench dimensions at time t.

    Responsibilities come from the component time-marginals evaluated in log
    space, so far outside the training span they saturate onto the dominant
    component instead of degenerating. Each component's conditional tilt is
    evaluated with the time deviation clamped to three standard deviations,
    keeping extrapolated output bounded by construction.
    """
    t = gmm.phase(t)
    mu_t = gmm.means[:, 0]
    mu_h = gmm.means[:, 1:]
    var_t = gmm.covariances[:, 0, 0]
    cov_ht = gmm.covariances[:, 1:, 0]
    cov_hh = gmm.covariances[:, 1:, 1:]

    log_w = (np.log(gmm.weights) - 0.5 * (_LOG_2PI + np.log(var_t))
             - 0.5 * (t - mu_t) ** 2 / var_t)
    w = np.exp(log_w - logsumexp(log_w))

    sd_t = np.sqrt(var_t)
    dev = np.clip(t - mu_t, -3.0 * sd_t, 3.0 * sd_t)
    cond_means = mu_h + cov_ht * (dev / var_t)[:, None]          # (K, 6)

    mean = w @ cond_means
    cov = np.zeros((6, 6))
    for j in range(gmm.k):
        cond_cov = cov_hh[j] - np.outer(cov_ht[j], cov_ht[j]) / var_t[j]
        spread = cond_means[j] - mean
        cov += w[j] * (cond_cov + np.outer(spread, spread))
    return mean, cov


def nominal_torque(model, q, wrench_vec):
    """Expected task torque: end-effector Jacobian transpose times the
    regressed wrench."""
    return jacobian(model, q, model.end_effector()).T @ np.asarray(
        wrench_vec, dtype=float)


def save_gmm(gmm, path):
    with open(path, "w") as fh:
        fh.write("# nominal-wrench mixture v1\n")
        fh.write(f"components {gmm.k}\n")
        fh.write("dim 7\n")
        fh.write(f"t_min {float(gmm.t_min)!r}\n")
        fh.write(f"t_max {float(gmm.t_max)!r}\n")
        period = None if gmm.period is None else float(gmm.period)
        fh.write(f"period {period!r}\n")
        for j in range(gmm.k):
            fh.write(f"component {j}\n")
            fh.write(f"weight {float(gmm.weights[j])!r}\n")
            fh.write("mean " + " ".join(repr(float(v)) for v in gmm.means[j])
                     + "\n")
            fh.write("cov " + " ".join(repr(float(v)) for v in
                                       gmm.covariances[j].ravel()) + "\n")


def load_gmm(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    try:
        fields = dict(ln.split(maxsplit=1) for ln in lines[:5])
        k = int(fields["components"])
        dim = int(fields["dim"])
        period = None if fields["period"] == "None" else float(fields["period"])
        weights, means, covs = [], [], []
        body = lines[5:]
        for j in range(k):
            block = body[4 * j: 4 * j + 4]
            weights.append(float(block[1].split()[1]))
            means.append([float(v) for v in block[2].split()[1:]])
            covs.append(np.array([float(v) for v in block[3].split()[1:]])
                        .reshape(dim, dim))
        return GmmModel(np.array(weights), np.array(means), np.array(covs),
                        float(fields["t_min"]), float(fields["t_max"]), period)
    except (KeyError, IndexError, ValueError) as exc:
        raise ConfigError(f"bad mixture file {path}: {exc}") from exc
