"""Gaussian-process regression with a squared-exponential ARD kernel.

Hyperparameters (length scales, signal and noise variance) are fitted by
maximising the log marginal likelihood with analytic gradients.  Targets
are standardised internally; predictions are returned in raw units.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.stats import norm

NOISE_FLOOR = 1e-6
LENGTH_BOUNDS = (1e-2, 1e1)
SIGNAL_BOUNDS = (1e-2, 1e2)
NOISE_BOUNDS = (NOISE_FLOOR, 1.0)


class GaussianProcess:
    def __init__(self, length_scales=None, signal_var=1.0, noise_var=1e-4):
        self.length_scales = None if length_scales is None else np.asarray(length_scales, float)
        self.signal_var = signal_var
        self.noise_var = max(noise_var, NOISE_FLOOR)
        self.X = None

    # kernel ---------------------------------------------------------------
    def kernel(self, A, B, ls=None, sf2=None):
        ls = self.length_scales if ls is None else ls
        sf2 = self.signal_var if sf2 is None else sf2
        A = np.asarray(A, float) / ls
        B = np.asarray(B, float) / ls
        d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
        return sf2 * np.exp(-0.5 * np.maximum(d2, 0.0))

    # likelihood -----------------------------------------------------------
    def _nll(self, theta, X, y):
        n_dim = X.shape[1]
        ls = np.exp(theta[:n_dim])
        sf2 = math.exp(theta[n_dim])
        sn2 = math.exp(theta[n_dim + 1])
        K0 = self.kernel(X, X, ls, sf2)
        K = K0 + sn2 * np.eye(len(X))
        try:
            L = np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            return 1e10, np.zeros_like(theta)
        alpha = cho_solve((L, True), y)
        nll = 0.5 * y @ alpha + np.log(np.diag(L)).sum() + 0.5 * len(X) * math.log(2 * math.pi)
        Kinv = cho_solve((L, True), np.eye(len(X)))
        W = np.outer(alpha, alpha) - Kinv  # d nll/dθ = -0.5 tr(W dK/dθ)
        grad = np.empty_like(theta)
        for j in range(n_dim):
            diff = X[:, j][:, None] - X[:, j][None, :]
            dK = K0 * (diff * diff) / ls[j] ** 2
            grad[j] = -0.5 * np.sum(W * dK)
        grad[n_dim] = -0.5 * np.sum(W * K0)
        grad[n_dim + 1] = -0.5 * sn2 * np.trace(W)
        return float(nll), grad

    def fit(self, X, y, optimize=True, restarts=1, rng=None):
        X = np.asarray(X, float)
        y = np.asarray(y, float)
        self.X = X
        self.y_mean = float(y.mean())
        self.y_std = float(y.std()) or 1.0
        ys = (y - self.y_mean) / self.y_std
        n_dim = X.shape[1]
        if self.length_scales is None:
            self.length_scales = np.full(n_dim, 0.3)
        if optimize:
            bounds = [tuple(np.log(LENGTH_BOUNDS))] * n_dim + [tuple(np.log(SIGNAL_BOUNDS)),
                                                                  tuple(np.log(NOISE_BOUNDS))]
            starts = [np.concatenate([np.log(self.length_scales),
                                      [math.log(self.signal_var), math.log(self.noise_var)]])]
            rng = rng or np.random.default_rng(0)
            for _ in range(restarts - 1):
                starts.append(np.array([rng.uniform(lo, hi) for lo, hi in bounds]))
            best = None
            for th0 in starts:
                th0 = np.clip(th0, [b[0] for b in bounds], [b[1] for b in bounds])
                res = minimize(self._nll, th0, args=(X, ys), jac=True, method="L-BFGS-B",
                               bounds=bounds, options={"maxiter": 100})
                if best is None or res.fun < best.fun:
                    best = res
            th = best.x
            self.length_scales = np.exp(th[:n_dim])
            self.signal_var = float(math.exp(th[n_dim]))
            self.noise_var = max(float(math.exp(th[n_dim + 1])), NOISE_FLOOR)
        K = self.kernel(X, X) + self.noise_var * np.eye(len(X))
        self._L = np.linalg.cholesky(K)
        self._alpha = cho_solve((self._L, True), ys)
        self._Linv = solve_triangular(self._L, np.eye(len(X)), lower=True)
        return self

    # prediction -----------------------------------------------------------
    def predict(self, Xs, return_grad=False):
        """Posterior mean and std (raw units) of the latent function at ``Xs``."""
        Xs = np.atleast_2d(np.asarray(Xs, float))
        k = self.kernel(Xs, self.X)  # (m, N)
        mu_s = k @ self._alpha
        v = k @ self._Linv.T  # (m, N)
        var_s = np.maximum(self.signal_var - (v * v).sum(1), 1e-12)
        sd_s = np.sqrt(var_s)
        mu = self.y_mean + self.y_std * mu_s
        sd = self.y_std * sd_s
        if not return_grad:
            return mu, sd
        ls2 = self.length_scales ** 2
        # dk/dx_j = -k * (x_j - X_j) / l_j^2
        diff = (Xs[:, None, :] - self.X[None, :, :]) / ls2  # (m, N, d)
        dk = -k[:, :, None] * diff
        dmu = self.y_std * np.einsum("mnd,n->md", dk, self._alpha)
        Kinv_k = v @ self._Linv  # (m, N) = K^-1 k
        dvar = -2.0 * np.einsum("mnd,mn->md", dk, Kinv_k)
        dsd = self.y_std * dvar / (2.0 * sd_s[:, None])
        return mu, sd, dmu, dsd


def expected_improvement(mu, sd, best, xi):
    imp = mu - best - xi
    z = imp / sd
    return np.maximum(imp * norm.cdf(z) + sd * norm.pdf(z), 0.0)


def expected_improvement_grad(mu, sd, dmu, dsd, best, xi):
    imp = mu - best - xi
    z = imp / sd
    ei = imp * norm.cdf(z) + sd * norm.pdf(z)
    grad = norm.cdf(z)[:, None] * dmu + norm.pdf(z)[:, None] * dsd
    return ei, grad


def maximize_ei(gp: GaussianProcess, best, xi, starts, maxiter=30):
    """Batched multi-start L-BFGS-B over the unit box; returns (x, ei)."""
    starts = np.asarray(starts, float)
    m, d = starts.shape

    def obj(flat):
        X = flat.reshape(m, d)
        mu, sd, dmu, dsd = gp.predict(X, return_grad=True)
        ei, g = expected_improvement_grad(mu, sd, dmu, dsd, best, xi)
        return -float(ei.sum()), -g.reshape(-1)

    res = minimize(obj, starts.reshape(-1), jac=True, method="L-BFGS-B",
                   bounds=[(0.0, 1.0)] * (m * d), options={"maxiter": maxiter})
    X = np.clip(res.x.reshape(m, d), 0.0, 1.0)
    mu, sd = gp.predict(X)
    ei = expected_improvement(mu, sd, best, xi)
    k = int(np.argmax(ei))
    return X[k], float(ei[k])
