"""Parametric conditional models: multinomial and proportional-odds logit.

Both models are fit by damped Newton iterations on a ridge-penalized
log-likelihood (penalty on slopes only, never on intercepts or
cutpoints) until the gradient norm drops below ``tol`` or ``max_iter``
is reached; a stalled line search also exits.  Categorical predictors
enter through dummy coding against level 1, giving sum(D_k - 1)
columns.

After fitting, ``draw_params`` returns a perturbed copy of the model
with parameters drawn from N(estimate, inverse observed information)
of the penalized objective, the normal approximation used to propagate
parameter uncertainty into imputations.  Proportional-odds cutpoints
are optimized and drawn in a monotone reparameterization (first
cutpoint plus log-gaps), so every draw keeps the cutpoints ordered.
"""

from __future__ import annotations

import copy
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import expit

from sklearn.base import BaseEstimator

from .base import check_levels, sample_rows_categorical

_MIN_PROB = 1e-300


def encode_predictors(
    levels: np.ndarray, cardinalities: Sequence[int]
) -> np.ndarray:
    """Dummy-code ordinal predictors against level 1.

    ``levels`` is a single row (1-d, length p) or a matrix (n x p);
    output has sum(D_k - 1) columns ordered by predictor then level
    (indicator of level 2, ..., indicator of level D_k).  Level 1 maps
    to all zeros in its block.
    """
    levels = np.asarray(levels)
    squeeze = levels.ndim == 1
    if squeeze:
        levels = levels[None, :]
    cards = [int(c) for c in cardinalities]
    if levels.shape[1] != len(cards):
        raise ValueError(
            f"levels has {levels.shape[1]} columns, {len(cards)} cardinalities given"
        )
    blocks = []
    for k, card in enumerate(cards):
        col = levels[:, k]
        if ((col < 1) | (col > card)).any():
            raise ValueError(f"predictor {k}: level outside 1..{card}")
        block = np.zeros((levels.shape[0], card - 1))
        for d in range(2, card + 1):
            block[:, d - 2] = col == d
        blocks.append(block)
    out = np.hstack(blocks) if blocks else np.zeros((levels.shape[0], 0))
    return out[0] if squeeze else out


def encoded_width(cardinalities: Sequence[int]) -> int:
    return int(sum(int(c) - 1 for c in cardinalities))


def _with_intercept(F: np.ndarray) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    if F.ndim != 2:
        raise ValueError("feature matrix must be 2-dimensional")
    return np.hstack([np.ones((F.shape[0], 1)), F])


def _chol_neg_hessian(H: np.ndarray):
    """Cholesky of -H with escalating diagonal jitter on failure."""
    A = -H
    jitter = 0.0
    for _ in range(6):
        try:
            return cho_factor(A + jitter * np.eye(A.shape[0]), lower=False)
        except np.linalg.LinAlgError:
            jitter = 1e-8 if jitter == 0.0 else jitter * 100.0
    raise np.linalg.LinAlgError("observed information is not positive definite")


class _NewtonMixin:
    """Damped Newton loop shared by both fitters."""

    def _newton(self, theta: np.ndarray) -> tuple[np.ndarray, list[float], bool, int]:
        loglik_path: list[float] = []
        converged = False
        it = 0
        ll, grad, hess = self._objective(theta)
        for it in range(1, self.max_iter + 1):
            loglik_path.append(ll)
            gnorm = float(np.linalg.norm(grad))
            if gnorm < self.tol:
                converged = True
                break
            c = _chol_neg_hessian(hess)
            step = cho_solve(c, grad)
            # Halve until the penalized log-likelihood does not decrease.
            scale, stalled = 1.0, False
            while True:
                cand = theta + scale * step
                ll_new, grad_new, hess_new = self._objective(cand)
                if ll_new >= ll - 1e-12 * max(1.0, abs(ll)):
                    break
                scale *= 0.5
                if scale < 1e-10:
                    stalled = True
                    break
            if stalled:
                break
            if abs(ll_new - ll) <= 1e-13 * max(1.0, abs(ll)):
                theta, ll, grad, hess = cand, ll_new, grad_new, hess_new
                break
            theta, ll, grad, hess = cand, ll_new, grad_new, hess_new
        loglik_path.append(ll)
        self._final_hessian = hess
        return theta, loglik_path, converged or float(np.linalg.norm(grad)) < self.tol, it


class MultinomialLogit(_NewtonMixin, BaseEstimator):
    """Baseline-category logit with level 1 as the reference class.

    Parameters are one intercept plus slope vector per non-reference
    class; ``ridge`` penalizes slopes only.
    """

    def __init__(self, ridge: float = 1e-4, tol: float = 1e-6, max_iter: int = 200):
        self.ridge = ridge
        self.tol = tol
        self.max_iter = max_iter

    # -- fitting ----------------------------------------------------------

    def fit(self, F: np.ndarray, y: np.ndarray, cardinality: int | None = None):
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        y = np.asarray(y)
        if cardinality is None:
            cardinality = int(y.max())
        y = check_levels(y, cardinality, "labels")
        if y.size == 0:
            raise ValueError("cannot fit on an empty response")
        X = _with_intercept(F)
        if X.shape[0] != y.size:
            raise ValueError("feature matrix and labels disagree on n")
        self.cardinality_ = int(cardinality)
        self._X = X
        self._Y = np.zeros((y.size, cardinality - 1))
        for d in range(2, cardinality + 1):
            self._Y[:, d - 2] = y == d
        m = X.shape[1]
        theta0 = np.zeros((cardinality - 1) * m)
        theta, path, converged, n_iter = self._newton(theta0)
        self.coef_ = theta.reshape(cardinality - 1, m)
        self.loglik_path_ = path
        self.converged_ = converged
        self.n_iter_ = n_iter
        self.chol_ = _chol_neg_hessian(self._final_hessian)
        del self._X, self._Y, self._final_hessian
        return self

    def _objective(self, theta: np.ndarray):
        X, Y = self._X, self._Y
        n, m = X.shape
        K = self.cardinality_ - 1
        B = theta.reshape(K, m)
        eta = X @ B.T  # n x K
        # log-sum-exp over (0, eta_2..eta_D)
        top = np.maximum(eta.max(axis=1, initial=0.0), 0.0)
        lse = top + np.log(np.exp(-top) + np.exp(eta - top[:, None]).sum(axis=1))
        ll = float((eta * Y).sum() - lse.sum())
        P = np.exp(eta - lse[:, None])  # n x K, probabilities of classes 2..D
        resid = Y - P
        grad = (X.T @ resid).T  # K x m
        pen = np.zeros_like(B)
        pen[:, 1:] = self.ridge * B[:, 1:]
        ll -= 0.5 * self.ridge * float((B[:, 1:] ** 2).sum())
        grad = grad - pen
        # Hessian: -sum_i x x^T (diag(P_i) - P_i P_i^T), blockwise over classes.
        W = np.einsum("ia,ib->iab", P, P)
        idx = np.arange(K)
        W[:, idx, idx] -= P
        H = np.einsum("im,iab,il->ambl", X, W, X, optimize=True).reshape(K * m, K * m)
        ridge_diag = np.zeros(K * m)
        ridge_diag.reshape(K, m)[:, 1:] = self.ridge
        H -= np.diag(ridge_diag)
        return ll, grad.ravel(), H

    # -- prediction -------------------------------------------------------

    def predict_proba(self, F: np.ndarray) -> np.ndarray:
        X = _with_intercept(F)
        eta = X @ self.coef_.T
        top = np.maximum(eta.max(axis=1, initial=0.0), 0.0)
        lse = top + np.log(np.exp(-top) + np.exp(eta - top[:, None]).sum(axis=1))
        out = np.empty((X.shape[0], self.cardinality_))
        out[:, 0] = np.exp(-lse)
        out[:, 1:] = np.exp(eta - lse[:, None])
        return out

    def sample(self, F: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return sample_rows_categorical(self.predict_proba(F), rng)

    def draw_params(self, rng: np.random.Generator) -> "MultinomialLogit":
        """Copy with parameters drawn from N(estimate, information inverse)."""
        z = rng.standard_normal(self.coef_.size)
        upper = self.chol_[0]
        draw = self.coef_.ravel() + solve_triangular(upper, z, lower=False)
        new = copy.copy(self)
        new.coef_ = draw.reshape(self.coef_.shape)
        return new


class ProportionalOdds(_NewtonMixin, BaseEstimator):
    """Cumulative logit model: P(Y <= d) = logistic(cutpoint_d - f beta).

    Cutpoints are strictly increasing; internally they are parameterized
    as (first cutpoint, log of successive gaps) so optimization and
    parameter draws stay in the valid region by construction.
    """

    def __init__(self, ridge: float = 1e-4, tol: float = 1e-6, max_iter: int = 200):
        self.ridge = ridge
        self.tol = tol
        self.max_iter = max_iter

    # -- parameter transforms ----------------------------------------------

    @staticmethod
    def _zeta_to_theta(zeta: np.ndarray) -> np.ndarray:
        theta = np.empty_like(zeta)
        theta[0] = zeta[0]
        if zeta.size > 1:
            theta[1:] = zeta[0] + np.cumsum(np.exp(zeta[1:]))
        return theta

    @staticmethod
    def _theta_to_zeta(theta: np.ndarray) -> np.ndarray:
        zeta = np.empty_like(theta)
        zeta[0] = theta[0]
        if theta.size > 1:
            gaps = np.diff(theta)
            zeta[1:] = np.log(np.maximum(gaps, 1e-8))
        return zeta

    # -- fitting ------------------------------------------------------------

    def fit(self, F: np.ndarray, y: np.ndarray, cardinality: int | None = None):
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        y = np.asarray(y)
        if cardinality is None:
            cardinality = int(y.max())
        if cardinality < 2:
            raise ValueError("need at least 2 levels")
        y = check_levels(y, cardinality, "labels")
        if y.size == 0:
            raise ValueError("cannot fit on an empty response")
        F = np.asarray(F, dtype=float)
        if F.ndim != 2 or F.shape[0] != y.size:
            raise ValueError("feature matrix and labels disagree on n")
        D = int(cardinality)
        self.cardinality_ = D
        self._F, self._y = F, y
        # Start at the empirical cumulative logits with zero slopes.
        n = y.size
        counts = np.bincount(y, minlength=D + 1)[1:]
        cum = np.clip(np.cumsum(counts)[:-1] / n, 1.0 / (n + 1.0), n / (n + 1.0))
        theta0 = np.log(cum / (1.0 - cum))
        theta0 = np.maximum.accumulate(theta0)
        theta0 += np.arange(D - 1) * 1e-6  # break exact ties in the start value
        zeta0 = self._theta_to_zeta(theta0)
        phi0 = np.concatenate([zeta0, np.zeros(F.shape[1])])
        phi, path, converged, n_iter = self._newton(phi0)
        self.zeta_ = phi[: D - 1].copy()
        self.cutpoints_ = self._zeta_to_theta(self.zeta_)
        self.coef_ = phi[D - 1 :].copy()
        self.loglik_path_ = path
        self.converged_ = converged
        self.n_iter_ = n_iter
        self.chol_ = _chol_neg_hessian(self._final_hessian)
        del self._F, self._y, self._final_hessian
        return self

    def _objective(self, phi: np.ndarray):
        F, y = self._F, self._y
        n, q = F.shape
        D = self.cardinality_
        ncut = D - 1
        zeta, beta = phi[:ncut], phi[ncut:]
        theta = self._zeta_to_theta(zeta)
        eta = F @ beta
        # Per-row upper/lower cumulative terms.  Level D has no upper
        # cutpoint (A = 1), level 1 no lower one (B = 0).
        has_u = y < D
        has_l = y > 1
        u = np.where(has_u, theta[np.minimum(y, D - 1) - 1] - eta, np.inf)
        v = np.where(has_l, theta[np.maximum(y - 1, 1) - 1] - eta, -np.inf)
        A = expit(u)
        B = expit(v)
        p = np.maximum(A - B, _MIN_PROB)
        ll = float(np.log(p).sum()) - 0.5 * self.ridge * float(beta @ beta)
        A1 = np.where(has_u, A * (1.0 - A), 0.0)
        B1 = np.where(has_l, B * (1.0 - B), 0.0)
        A2 = A1 * (1.0 - 2.0 * A)
        B2 = B1 * (1.0 - 2.0 * B)
        # First derivatives wrt the row scalars u and v.
        du = A1 / p
        dv = -B1 / p
        # Second derivatives.
        duu = A2 / p - du * du
        dvv = -B2 / p - dv * dv
        duv = A1 * B1 / (p * p)
        # Assemble the gradient in natural coordinates (theta, beta).
        g_theta = np.zeros(ncut)
        np.add.at(g_theta, np.minimum(y, D - 1) - 1, np.where(has_u, du, 0.0))
        np.add.at(g_theta, np.maximum(y - 1, 1) - 1, np.where(has_l, dv, 0.0))
        d_eta = -(du + dv)
        g_beta = F.T @ d_eta - self.ridge * beta
        # Hessian in natural coordinates.
        H_tt = np.zeros((ncut, ncut))
        iu = np.minimum(y, D - 1) - 1
        il = np.maximum(y - 1, 1) - 1
        np.add.at(H_tt, (iu, iu), np.where(has_u, duu, 0.0))
        np.add.at(H_tt, (il, il), np.where(has_l, dvv, 0.0))
        both = has_u & has_l
        np.add.at(H_tt, (iu, il), np.where(both, duv, 0.0))
        np.add.at(H_tt, (il, iu), np.where(both, duv, 0.0))
        H_tb = np.zeros((ncut, q))
        w_u = -np.where(has_u, duu + np.where(both, duv, 0.0), 0.0)
        w_l = -np.where(has_l, dvv + np.where(both, duv, 0.0), 0.0)
        np.add.at(H_tb, iu, w_u[:, None] * F * has_u[:, None])
        np.add.at(H_tb, il, w_l[:, None] * F * has_l[:, None])
        w_bb = duu + dvv + 2.0 * np.where(both, duv, 0.0)
        H_bb = F.T @ (w_bb[:, None] * F) - self.ridge * np.eye(q)
        # Chain rule into (zeta, beta).  theta = T(zeta) with Jacobian J.
        J = np.zeros((ncut, ncut))
        J[:, 0] = 1.0
        for e in range(1, ncut):
            J[e:, e] = np.exp(zeta[e])
        G_zeta = J.T @ g_theta
        H_zz = J.T @ H_tt @ J
        # Curvature of the transform: d2 theta_d / d zeta_e^2 = exp(zeta_e), e <= d.
        for e in range(1, ncut):
            H_zz[e, e] += g_theta[e:].sum() * np.exp(zeta[e])
        H_zb = J.T @ H_tb
        grad = np.concatenate([G_zeta, g_beta])
        H = np.block([[H_zz, H_zb], [H_zb.T, H_bb]])
        return ll, grad, H

    # -- prediction -----------------------------------------------------------

    def predict_proba(self, F: np.ndarray) -> np.ndarray:
        F = np.asarray(F, dtype=float)
        eta = F @ self.coef_
        cum = expit(self.cutpoints_[None, :] - eta[:, None])
        out = np.empty((F.shape[0], self.cardinality_))
        out[:, 0] = cum[:, 0]
        out[:, 1:-1] = np.diff(cum, axis=1)
        out[:, -1] = 1.0 - cum[:, -1]
        return np.maximum(out, 0.0)

    def sample(self, F: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return sample_rows_categorical(self.predict_proba(F), rng)

    def draw_params(self, rng: np.random.Generator) -> "ProportionalOdds":
        """Copy with (zeta, beta) drawn from the normal approximation.

        Draws live in the reparameterized space, so the implied
        cutpoints of every draw are strictly increasing.
        """
        dim = self.zeta_.size + self.coef_.size
        z = rng.standard_normal(dim)
        upper = self.chol_[0]
        draw = np.concatenate([self.zeta_, self.coef_]) + solve_triangular(
            upper, z, lower=False
        )
        new = copy.copy(self)
        new.zeta_ = draw[: self.zeta_.size]
        new.cutpoints_ = self._zeta_to_theta(new.zeta_)
        new.coef_ = draw[self.zeta_.size :]
        return new
