"""Mean-field theory lines for the overlap traces of the training simulator.

In the joint limit d -> infinity with n = alpha * d, the pre-activation
vector of one tagged training sample under full-batch gradient descent
closes into a p-dimensional stochastic process: a deterministic teacher
drive M^(t) h*, the tagged sample's own gradient (the term batch reuse
adds over fresh sampling), a memory term through response kernels, and a
Gaussian field whose covariance is the population gradient covariance.
dmft_integrate iterates that process with Monte Carlo replicas, closing
each step on kernels estimated from the ensemble, and returns the
deterministic overlap matrix M^(t) together with the kernels.
one_pass_effective integrates the memory-free specialization where every
step sees fresh data, so pre-activations stay jointly Gaussian and only
the second moments (C^(t), M^(t)) propagate.

Time is counted as in the simulator: index t = 0 is initialization and a
trace for `steps` gradient steps has steps + 1 entries.  p = 1 students
use the simulator's teacher-minus-zero residual convention, so theory
and simulation average the same object.  Links without a pointwise
second derivative (relu) force kernel_mode="finite_difference", where
response kernels come from central-difference replays of the process and
instantaneous kernels evaluate the distributional sigma'' term by
Gaussian kernel density; replayed kernel entries carry a Monte Carlo
variance warning when they are noise-dominated at the configured
replica count.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .hardness import Direction
from .targets import ScalarFunction, TargetFunction, stream_rng

KERNEL_MODES = ("pathwise", "finite_difference")
FORMULATIONS = ("single_process", "two_process")

# Same integer seed must never replay the gdsim streams (0xDA7A, 0x1217,
# 0x05DD) or the teacher stream (0x7EAC).
_DMFT_STREAM = 0xD3F7
_FD_STEP = 1e-4
_CHOLESKY_JITTER = 1e-10
# Relative Monte Carlo noise on a replayed kernel entry above which the
# integrator warns that the entry is unreliable at this replica count.
_KERNEL_NOISE_TOL = 0.05


class ConditioningError(RuntimeError):
    """Noise covariance could not be factorized even after jitter."""


@dataclass(frozen=True)
class DmftConfig:
    """Settings shared by the mean-field integrators.

    steps counts gradient steps; traces have steps + 1 entries with t = 0
    at initialization.  n_samples is the Monte Carlo replica count (at
    least 1000, below which the self-consistent kernel estimates are too
    noisy to close the loop).  (steps + 1) * p is capped by cost_ceiling:
    the noise Cholesky factor and the stored response kernels grow
    quadratically in it.
    """

    alpha: float
    eta: float
    lam: float
    p: int
    k: int
    steps: int
    n_samples: int = 100_000
    seed: int = 0
    kernel_mode: str = "pathwise"
    formulation: str = "single_process"
    cost_ceiling: int = 32

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta!r}")
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam!r}")
        if self.p < 1 or (self.p > 1 and self.p % 2):
            raise ValueError(f"p must be 1 or even, got {self.p}")
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if self.steps < 1:
            raise ValueError(f"steps must be at least 1, got {self.steps}")
        if self.n_samples < 1000:
            raise ValueError(f"need n_samples >= 1000, got {self.n_samples}")
        if (self.steps + 1) * self.p > self.cost_ceiling:
            raise ValueError(
                f"(steps + 1) * p = {(self.steps + 1) * self.p} exceeds the "
                f"cost ceiling {self.cost_ceiling}"
            )
        if self.kernel_mode not in KERNEL_MODES:
            raise ValueError(f"kernel_mode must be one of {KERNEL_MODES}")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"formulation must be one of {FORMULATIONS}")


def default_second_layer(p: int) -> np.ndarray:
    """Fixed +-1/sqrt(p) second layer of the paired init (all ones at p=1)."""
    if p == 1:
        return np.ones(1)
    half = np.full(p // 2, 1.0 / math.sqrt(p))
    return np.concatenate([half, -half[::-1]])


def loss_gradient(
    h: np.ndarray,
    h_star: np.ndarray,
    target: TargetFunction,
    sigma: ScalarFunction,
    a: np.ndarray,
    *,
    zero_output: bool = False,
) -> np.ndarray:
    """Per-replica gradient of the half squared loss in the pre-activations.

    h is (n, p), h_star (n, k); returns (n, p).  zero_output keeps the
    residual at the bare label (the p = 1 simulator convention).
    """
    y = target.evaluate(h_star)
    if zero_output:
        resid = y
    else:
        resid = y - np.asarray(sigma.f(h), dtype=float) @ a
    return -resid[:, None] * (a[None, :] * np.asarray(sigma.df(h), dtype=float))


def loss_hessian(
    h: np.ndarray,
    h_star: np.ndarray,
    target: TargetFunction,
    sigma: ScalarFunction,
    a: np.ndarray,
    *,
    zero_output: bool = False,
) -> np.ndarray:
    """Per-replica Hessian blocks (n, p, p); needs a pointwise sigma''."""
    if sigma.d2f is None:
        raise ValueError(
            f"{sigma.name} has no pointwise second derivative; kernel "
            "estimation must use finite differences"
        )
    n, p = h.shape
    y = target.evaluate(h_star)
    if zero_output:
        resid = y
        out = np.zeros((n, p, p))
    else:
        resid = y - np.asarray(sigma.f(h), dtype=float) @ a
        s1 = a[None, :] * np.asarray(sigma.df(h), dtype=float)
        out = s1[:, :, None] * s1[:, None, :]
    curv = -resid[:, None] * (a[None, :] * np.asarray(sigma.d2f(h), dtype=float))
    idx = np.arange(p)
    out[:, idx, idx] += curv
    return out


def _residual(h, h_star, target, sigma, a, zero_output):
    y = target.evaluate(h_star)
    if zero_output:
        return y
    return y - np.asarray(sigma.f(h), dtype=float) @ a


def _kde_weights(col: np.ndarray) -> np.ndarray:
    """Gaussian density weights standing in for delta(h_j) under the mean.

    Silverman bandwidth; the weighted mean is a consistent estimate of
    E[. delta(h_j)] for links whose sigma'' is distributional.
    """
    n = col.size
    b = 1.06 * max(float(col.std()), 1e-12) * n ** (-0.2)
    return np.exp(-0.5 * (col / b) ** 2) / (b * math.sqrt(2.0 * math.pi))


def _mean_hessian(h, resid, sigma, a, zero_output) -> np.ndarray:
    """E[d^2 loss / dh^2] over replicas, (p, p)."""
    n, p = h.shape
    if zero_output:
        out = np.zeros((p, p))
    else:
        s1 = a[None, :] * np.asarray(sigma.df(h), dtype=float)
        out = (s1.T @ s1) / n
    if sigma.d2f is not None:
        curv = np.mean(
            -resid[:, None] * (a[None, :] * np.asarray(sigma.d2f(h), dtype=float)),
            axis=0,
        )
    else:
        curv = np.array(
            [-a[j] * float(np.mean(resid * _kde_weights(h[:, j]))) for j in range(p)]
        )
    idx = np.arange(p)
    out[idx, idx] += curv
    return out


def _hess_apply(h, h_star, v, target, sigma, a, zero_output) -> np.ndarray:
    """Per-replica Hessian-vector products; v is (n, p, k), result too.

    For links without a pointwise sigma'' the diagonal term is applied
    through the kernel-density weights, which keeps the product's mean
    consistent while every other factor stays exact per replica.
    """
    if sigma.d2f is not None:
        hess = loss_hessian(h, h_star, target, sigma, a, zero_output=zero_output)
        return np.einsum("nij,njk->nik", hess, v)
    n, p = h.shape
    resid = _residual(h, h_star, target, sigma, a, zero_output)
    if zero_output:
        out = np.zeros_like(v)
    else:
        s1 = a[None, :] * np.asarray(sigma.df(h), dtype=float)
        out = s1[:, :, None] * np.einsum("np,npk->nk", s1, v)[:, None, :]
    for j in range(p):
        w = -resid * a[j] * _kde_weights(h[:, j])
        out[:, j, :] += w[:, None] * v[:, j, :]
    return out


def estimate_kernels(
    h: np.ndarray,
    h_star: np.ndarray,
    grads: Sequence[np.ndarray],
    target: TargetFunction,
    sigma: ScalarFunction,
    a: np.ndarray,
    alpha: float,
    *,
    zero_output: bool = False,
    responses: Sequence[np.ndarray] | None = None,
) -> dict[str, np.ndarray | None]:
    """Population kernels of one time slice from the replica ensemble.

    grads holds the gradient history as (n, p) arrays, newest last (the
    slice itself).  responses, when given, holds the per-replica kick
    responses D^(t,s) as (n, p, p) arrays for s = 0..t-1; the response
    row alpha E[hess . D] then needs a pointwise sigma'' and comes back
    None otherwise (the integrator fills it by replay instead).
    """
    n = h.shape[0]
    g_now = grads[-1]
    resid = _residual(h, h_star, target, sigma, a, zero_output)
    lam = alpha * _mean_hessian(h, resid, sigma, a, zero_output)
    g = alpha * (g_now.T @ h_star) / n
    s1 = a[None, :] * np.asarray(sigma.df(h), dtype=float)
    dgs = np.asarray(target.gradient(h_star), dtype=float)
    teacher_drive = -alpha * (s1.T @ dgs) / n
    c_loss_row = np.stack([alpha * (g_now.T @ gs) / n for gs in grads])
    if responses is None or sigma.d2f is None:
        r_row = None
    else:
        hess = loss_hessian(h, h_star, target, sigma, a, zero_output=zero_output)
        r_row = np.stack(
            [
                alpha * np.einsum("nij,njk->ik", hess, d) / n
                for d in responses
            ]
        )
    return {
        "lam": lam,
        "g": g,
        "teacher_drive": teacher_drive,
        "c_loss_row": c_loss_row,
        "r_ell_row": r_row,
    }


def step_preactivation(
    r: np.ndarray,
    grads: Sequence[np.ndarray],
    memory_kernels: Sequence[np.ndarray],
    noise: np.ndarray | None,
    m_next: np.ndarray,
    h_star: np.ndarray,
    eta: float,
    lam: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """One update of the effective process; returns (r_next, h_next).

    r and each grads entry are (..., p), newest gradient last; the
    gradient's own coefficient is exactly -eta (the tagged sample sits in
    its own batch).  memory_kernels[s] is the (p, p) kernel multiplying
    grads[s] for s < len(grads) - 1.  h_next = r_next + h_star @ m_next.T.
    """
    drive = np.array(grads[-1], dtype=float, copy=True)
    for kernel, g_s in zip(memory_kernels, grads):
        drive += g_s @ np.asarray(kernel, dtype=float).T
    if noise is not None:
        drive += noise
    r_next = (1.0 - eta * lam) * np.asarray(r, dtype=float) - eta * drive
    h_next = r_next + np.asarray(h_star, dtype=float) @ np.asarray(m_next, dtype=float).T
    return r_next, h_next


class _NoiseFactor:
    """Incremental block Cholesky of the stacked noise covariance."""

    def __init__(self, p: int, jitter: float = _CHOLESKY_JITTER):
        self.p = p
        self.jitter = jitter
        self.L = np.zeros((0, 0))

    def extend(self, row: np.ndarray) -> None:
        """Append one block row [C(t,0) ... C(t,t)] of shape (p, (t+1)p)."""
        m = self.L.shape[0]
        cross, diag = row[:, :m], row[:, m:]
        if m:
            off = solve_triangular(self.L, cross.T, lower=True).T
        else:
            off = np.zeros((self.p, 0))
        s = diag - off @ off.T
        s = 0.5 * (s + s.T)
        try:
            tail = np.linalg.cholesky(s + self.jitter * np.eye(self.p))
        except np.linalg.LinAlgError:
            eigs = np.linalg.eigvalsh(s)
            raise ConditioningError(
                "noise covariance block stays indefinite after jitter "
                f"{self.jitter:g}: conditional eigenvalues in "
                f"[{eigs.min():.3e}, {eigs.max():.3e}]"
            ) from None
        grown = np.zeros((m + self.p, m + self.p))
        grown[:m, :m] = self.L
        grown[m:, :m] = off
        grown[m:, m:] = tail
        self.L = grown

    def sample_newest(self, xi: np.ndarray) -> np.ndarray:
        """Newest block of the joint sample; xi is (n, dim) standard normal."""
        return xi @ self.L[-self.p :, :].T


def _resolve_mode(cfg: DmftConfig, sigma: ScalarFunction) -> str:
    if cfg.kernel_mode == "pathwise" and sigma.d2f is None:
        warnings.warn(
            f"{sigma.name} has no pointwise second derivative; response "
            "kernels fall back to finite-difference replay",
            RuntimeWarning,
            stacklevel=3,
        )
        return "finite_difference"
    return cfg.kernel_mode


def _check_inputs(cfg, target, a):
    if target.k != cfg.k:
        raise ValueError(f"target has k={target.k}, config has k={cfg.k}")
    if a is None:
        a = default_second_layer(cfg.p)
    a = np.asarray(a, dtype=float)
    if a.shape != (cfg.p,):
        raise ValueError(f"second layer must have shape ({cfg.p},), got {a.shape}")
    return a


@dataclass(frozen=True)
class DmftTrace:
    """Deterministic overlap prediction M^(t) plus the estimated kernels.

    m is (steps+1, p, k).  r_ell[t, s] is the response of the mean loss
    force at t to a unit kick entering the process after step s (zero at
    s >= t, equal to lam[t] at s = t - 1); r_theta[t, tau] the weight
    propagator with r_theta[t, t] = I.  c_loss blocks are
    alpha E[grad grad^T]; c_noise the same after residualizing on the
    teacher features, the covariance the sampled field actually used.
    Std errors are Monte Carlo spreads propagated linearly into m.
    """

    engine: str
    kernel_mode: str
    formulation: str
    n_samples: int
    steps: np.ndarray
    m: np.ndarray
    m_std_error: np.ndarray
    g: np.ndarray
    g_std_error: np.ndarray
    lam: np.ndarray
    teacher_drive: np.ndarray
    r_ell: np.ndarray
    r_theta: np.ndarray
    c_loss: np.ndarray
    c_noise: np.ndarray

    def overlap(self, direction: Direction) -> tuple[np.ndarray, np.ndarray]:
        """(||M u||, propagated std error) trajectories for one direction."""
        u = np.asarray(direction.coefficients, dtype=float)
        if u.size != self.m.shape[2]:
            raise ValueError(
                f"direction has k={u.size}, trace has k={self.m.shape[2]}"
            )
        value = np.linalg.norm(self.m @ u, axis=1)
        bound = np.linalg.norm(self.m_std_error @ np.abs(u), axis=1)
        return value, bound

    def write_csv(self, path, directions: Sequence[Direction]) -> None:
        """Same row schema as the simulator traces; loss column is empty."""
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["t", "schedule", "direction_name", "overlap_mean", "overlap_std", "loss_mean"]
            )
            columns = []
            for i, direction in enumerate(directions):
                name = direction.name or f"dir{i}"
                columns.append((name, *self.overlap(direction)))
            for i, t in enumerate(self.steps):
                for name, value, bound in columns:
                    writer.writerow(
                        [int(t), self.engine, name, repr(float(value[i])), repr(float(bound[i])), ""]
                    )

    def omega(self) -> np.ndarray:
        """Assembled covariance of the field including the teacher drive."""
        steps, p, _ = self.m.shape
        out = np.zeros((steps * p, steps * p))
        for t in range(steps):
            for s in range(steps):
                block = self.c_noise[t, s] + self.m[t] @ self.m[s].T
                out[t * p : (t + 1) * p, s * p : (s + 1) * p] = block
        return out

    def kernels_json(self) -> str:
        """Full kernel dump for side-channel inspection."""
        payload = {
            "engine": self.engine,
            "kernel_mode": self.kernel_mode,
            "formulation": self.formulation,
            "n_samples": self.n_samples,
            "m": self.m.tolist(),
            "m_std_error": self.m_std_error.tolist(),
            "g": self.g.tolist(),
            "lam": self.lam.tolist(),
            "teacher_drive": self.teacher_drive.tolist(),
            "r_ell": self.r_ell.tolist(),
            "r_theta": self.r_theta.tolist(),
            "c_loss": self.c_loss.tolist(),
            "c_noise": self.c_noise.tolist(),
            "omega": self.omega().tolist(),
        }
        return json.dumps(payload)


def _fd_kernel_row_entry(
    t, s, rs, grads, zetas, kernels_b, m_hist, h_star,
    target, sigma, a, eta, lam_reg, alpha, zero_output,
):
    """B^(t,s) by central-difference replay; also returns the entry spread.

    The replay re-runs the recursion from step s+1 with the stored noise
    and kernels but a kicked r^(s+1); common random numbers make the
    difference smooth except where a replica crosses a link kink.
    """
    n, p = rs[0].shape
    out = np.empty((p, p))
    spread = np.empty((p, p))
    crossers = 0
    for col in range(p):
        means = []
        deltas = None
        for sign in (1.0, -1.0):
            kick = np.zeros(p)
            kick[col] = sign * _FD_STEP
            r_cur = rs[s + 1] + kick
            perturbed = {}
            for u in range(s + 1, t):
                h_u = r_cur + h_star @ m_hist[u].T
                g_u = loss_gradient(h_u, h_star, target, sigma, a, zero_output=zero_output)
                perturbed[u] = g_u
                history = [perturbed.get(v, grads[v]) for v in range(u + 1)]
                kernels = [kernels_b[(u, v)] for v in range(u)]
                r_cur, _ = step_preactivation(
                    r_cur, history, kernels, zetas[u], m_hist[u + 1], h_star, eta, lam_reg
                )
            h_t = r_cur + h_star @ m_hist[t].T
            g_t = loss_gradient(h_t, h_star, target, sigma, a, zero_output=zero_output)
            if deltas is None:
                deltas = g_t
            else:
                deltas = (deltas - g_t) / (2.0 * _FD_STEP)
            means.append(g_t.mean(axis=0))
        out[:, col] = -eta * alpha * (means[0] - means[1]) / (2.0 * _FD_STEP)
        spread[:, col] = eta * alpha * deltas.std(axis=0) / math.sqrt(n)
        crossers += int(np.count_nonzero(np.any(deltas != 0.0, axis=1)))
    return out, spread, crossers


def dmft_integrate(
    cfg: DmftConfig,
    target: TargetFunction,
    sigma: ScalarFunction,
    a: np.ndarray | None = None,
) -> DmftTrace:
    """Integrate the batch-reuse effective process forward to cfg.steps.

    The two formulations share one replica ensemble and differ in the
    estimator of the teacher-overlap drive g^(t): single_process reads it
    off directly as alpha E[grad h*^T]; two_process integrates the
    per-replica teacher sensitivity through the response chain, so the
    two traces agreeing is a genuine cross-check of the kernel machinery.
    """
    a = _check_inputs(cfg, target, a)
    zero_output = cfg.p == 1
    mode = _resolve_mode(cfg, sigma)
    two_process = cfg.formulation == "two_process"
    n, p, k, big_t = cfg.n_samples, cfg.p, cfg.k, cfg.steps
    eta, lam_reg, alpha = cfg.eta, cfg.lam, cfg.alpha

    rng = stream_rng(cfg.seed, _DMFT_STREAM)
    h_star = rng.standard_normal((n, k))
    if p == 1:
        r = rng.standard_normal((n, 1))
    else:
        half = rng.standard_normal((n, p // 2))
        r = np.concatenate([half, half[:, ::-1]], axis=1)
    sig_star = (h_star.T @ h_star) / n

    m_hist = np.zeros((big_t + 1, p, k))
    se_m = np.zeros((big_t + 1, p, k))
    lam_t = np.zeros((big_t + 1, p, p))
    g_t = np.zeros((big_t + 1, p, k))
    se_g = np.zeros((big_t + 1, p, k))
    drive_t = np.zeros((big_t + 1, p, k))
    grads: list[np.ndarray] = []
    grads_res: list[np.ndarray] = []
    rs: list[np.ndarray] = []
    zetas: list[np.ndarray] = []
    kernels_b: dict[tuple[int, int], np.ndarray] = {}
    noise = _NoiseFactor(p)
    xi = np.zeros((n, 0))
    worst_fd = (0.0, None)

    if mode == "pathwise":
        d_resp: dict[tuple[int, int], np.ndarray] = {}
        hess_hist: list[np.ndarray] = []
    if two_process:
        dr_star = np.zeros((n, p, k))
        w_hist: list[np.ndarray] = []

    h = r
    for t in range(big_t + 1):
        if t > 0:
            row = np.concatenate(
                [alpha * (grads_res[t - 1].T @ gs) / n for gs in grads_res], axis=1
            )
            noise.extend(row)
            xi = np.concatenate([xi, rng.standard_normal((n, p))], axis=1)
            zeta = noise.sample_newest(xi)
            zetas.append(zeta)
            kernels = [kernels_b[(t - 1, s)] for s in range(t - 1)]
            r, h = step_preactivation(
                r, grads, kernels, zeta, m_hist[t], h_star, eta, lam_reg
            )
        rs.append(r)
        grad = loss_gradient(h, h_star, target, sigma, a, zero_output=zero_output)
        grads.append(grad)
        coef = np.linalg.solve(sig_star, (h_star.T @ grad) / n)
        grads_res.append(grad - h_star @ coef)
        responses = None
        if mode == "pathwise" and t:
            responses = [d_resp[(t, s)] for s in range(t)]
        est = estimate_kernels(
            h, h_star, grads, target, sigma, a, alpha,
            zero_output=zero_output, responses=responses,
        )
        lam_t[t] = est["lam"]
        drive_t[t] = est["teacher_drive"]
        if two_process:
            y_resp = dr_star + m_hist[t][None, :, :]
            s1 = a[None, :] * np.asarray(sigma.df(h), dtype=float)
            dgs = np.asarray(target.gradient(h_star), dtype=float)
            explicit = -s1[:, :, None] * dgs[:, None, :]
            w = _hess_apply(h, h_star, y_resp, target, sigma, a, zero_output) + explicit
            w_hist.append(w)
            g_t[t] = alpha * w.mean(axis=0)
            se_g[t] = alpha * w.std(axis=0) / math.sqrt(n)
        else:
            g_t[t] = est["g"]
            prod = grad[:, :, None] * h_star[:, None, :]
            se_g[t] = alpha * prod.std(axis=0) / math.sqrt(n)
        if t:
            kernels_b[(t, t - 1)] = -eta * lam_t[t]
            if mode == "pathwise":
                for s in range(t - 1):
                    kernels_b[(t, s)] = -eta * est["r_ell_row"][s]
            else:
                for s in range(t - 1):
                    entry, spread, crossers = _fd_kernel_row_entry(
                        t, s, rs, grads, zetas, kernels_b, m_hist, h_star,
                        target, sigma, a, eta, lam_reg, alpha, zero_output,
                    )
                    kernels_b[(t, s)] = entry
                    rel = spread / (eta * max(1.0, float(np.abs(entry).max()) / eta))
                    if sigma.d2f is None and crossers < 100:
                        # The kink response of a piecewise-linear link is
                        # carried entirely by the few replicas inside the
                        # difference window; too few of them means the
                        # entry's dominant term is undersampled regardless
                        # of how small the empirical spread looks.
                        rel = np.maximum(rel, 1.0 / math.sqrt(max(crossers, 1)))
                    if rel.max() > worst_fd[0]:
                        i, j = np.unravel_index(int(rel.argmax()), rel.shape)
                        worst_fd = (float(rel.max()), (t, s, int(i), int(j)))
        if mode == "pathwise" and t < big_t:
            hess = loss_hessian(h, h_star, target, sigma, a, zero_output=zero_output)
            hess_hist.append(hess)
            advanced = {}
            for s in range(t):
                cur = d_resp[(t, s)]
                upd = (1.0 - eta * lam_reg) * cur - eta * np.einsum(
                    "nij,njk->nik", hess, cur
                )
                for u in range(s + 1, t):
                    chain = np.einsum("nij,njk->nik", hess_hist[u], d_resp[(u, s)])
                    upd -= eta * np.einsum("ij,njk->nik", kernels_b[(t, u)], chain)
                advanced[(t + 1, s)] = upd
            eye = np.zeros((n, p, p))
            eye[:] = np.eye(p)
            advanced[(t + 1, t)] = eye
            d_resp.update(advanced)
        if two_process and t < big_t:
            acc = w_hist[t].copy()
            for s in range(t):
                acc += np.einsum("ij,njk->nik", kernels_b[(t, s)], w_hist[s])
            dr_star = (1.0 - eta * lam_reg) * dr_star - eta * acc
        if t < big_t:
            m_hist[t + 1] = (1.0 - eta * lam_reg) * m_hist[t] - eta * g_t[t]
            se_m[t + 1] = (1.0 - eta * lam_reg) * se_m[t] + eta * se_g[t]

    if worst_fd[1] is not None and worst_fd[0] > _KERNEL_NOISE_TOL:
        t, s, i, j = worst_fd[1]
        warnings.warn(
            f"replayed response kernel entry ({t},{s})[{i},{j}] has relative "
            f"Monte Carlo noise {worst_fd[0]:.2f}; raise n_samples or use a "
            "smooth link for quieter kernels",
            RuntimeWarning,
            stacklevel=2,
        )

    r_ell = np.zeros((big_t + 1, big_t + 1, p, p))
    for (t, s), block in kernels_b.items():
        r_ell[t, s] = -block / eta
    r_theta = np.zeros((big_t + 1, big_t + 1, p, p))
    for tau in range(big_t + 1):
        r_theta[tau, tau] = np.eye(p)
        for t in range(tau, big_t):
            acc = (1.0 - eta * lam_reg) * r_theta[t, tau]
            for s in range(tau, t):
                acc = acc - eta * (r_ell[t, s] @ r_theta[s, tau])
            r_theta[t + 1, tau] = acc
    c_loss = np.zeros((big_t + 1, big_t + 1, p, p))
    c_noise = np.zeros((big_t + 1, big_t + 1, p, p))
    for t in range(big_t + 1):
        for s in range(big_t + 1):
            c_loss[t, s] = alpha * (grads[t].T @ grads[s]) / n
            c_noise[t, s] = alpha * (grads_res[t].T @ grads_res[s]) / n

    return DmftTrace(
        engine=f"dmft_{cfg.formulation}",
        kernel_mode=mode,
        formulation=cfg.formulation,
        n_samples=n,
        steps=np.arange(big_t + 1),
        m=m_hist,
        m_std_error=se_m,
        g=g_t,
        g_std_error=se_g,
        lam=lam_t,
        teacher_drive=drive_t,
        r_ell=r_ell,
        r_theta=r_theta,
        c_loss=c_loss,
        c_noise=c_noise,
    )


def one_pass_effective(
    cfg: DmftConfig,
    target: TargetFunction,
    sigma: ScalarFunction,
    a: np.ndarray | None = None,
) -> DmftTrace:
    """Memory-free limit: every step sees fresh data.

    Pre-activations stay jointly Gaussian with the teacher features, so
    the state is just (C^(t), M^(t)); each step draws a fresh Gaussian
    ensemble at the current second moments, estimates the drive and the
    covariance update, and advances.  Response kernels vanish here;
    kernel_mode is accepted but has no replay to select.
    """
    a = _check_inputs(cfg, target, a)
    zero_output = cfg.p == 1
    n, p, k, big_t = cfg.n_samples, cfg.p, cfg.k, cfg.steps
    eta, lam_reg, alpha = cfg.eta, cfg.lam, cfg.alpha

    rng = stream_rng(cfg.seed, _DMFT_STREAM)
    cov = np.eye(p)
    if p > 1:
        cov = cov + np.eye(p)[::-1]
    m_hist = np.zeros((big_t + 1, p, k))
    se_m = np.zeros((big_t + 1, p, k))
    lam_t = np.zeros((big_t + 1, p, p))
    g_t = np.zeros((big_t + 1, p, k))
    se_g = np.zeros((big_t + 1, p, k))
    drive_t = np.zeros((big_t + 1, p, k))
    c_loss = np.zeros((big_t + 1, big_t + 1, p, p))
    c_noise = np.zeros((big_t + 1, big_t + 1, p, p))

    for t in range(big_t + 1):
        h_star = rng.standard_normal((n, k))
        x = rng.standard_normal((n, p))
        cond = cov - m_hist[t] @ m_hist[t].T
        cond = 0.5 * (cond + cond.T)
        try:
            factor = np.linalg.cholesky(cond + _CHOLESKY_JITTER * np.eye(p))
        except np.linalg.LinAlgError:
            eigs = np.linalg.eigvalsh(cond)
            raise ConditioningError(
                "pre-activation covariance stays indefinite after jitter: "
                f"eigenvalues in [{eigs.min():.3e}, {eigs.max():.3e}]"
            ) from None
        h = h_star @ m_hist[t].T + x @ factor.T
        grad = loss_gradient(h, h_star, target, sigma, a, zero_output=zero_output)
        est = estimate_kernels(
            h, h_star, [grad], target, sigma, a, alpha, zero_output=zero_output
        )
        lam_t[t] = est["lam"]
        drive_t[t] = est["teacher_drive"]
        g_t[t] = est["g"]
        prod = grad[:, :, None] * h_star[:, None, :]
        se_g[t] = alpha * prod.std(axis=0) / math.sqrt(n)
        c_loss[t, t] = alpha * (grad.T @ grad) / n
        sig_star = (h_star.T @ h_star) / n
        coef = np.linalg.solve(sig_star, (h_star.T @ grad) / n)
        grad_res = grad - h_star @ coef
        c_noise[t, t] = alpha * (grad_res.T @ grad_res) / n
        if t < big_t:
            phg = (h.T @ grad) / n
            pgg = (grad.T @ grad) / n
            ebar = lam_t[t] / alpha
            etil = drive_t[t] / alpha
            pgs = est["g"] / alpha
            x_mat = ebar @ phg + etil @ pgs.T
            decay = 1.0 - eta * lam_reg
            cov = (
                decay**2 * cov
                - eta * decay * alpha * (phg + phg.T)
                + eta**2 * (alpha * pgg + alpha**2 * 0.5 * (x_mat + x_mat.T))
            )
            m_hist[t + 1] = decay * m_hist[t] - eta * g_t[t]
            se_m[t + 1] = decay * se_m[t] + eta * se_g[t]

    r_theta = np.zeros((big_t + 1, big_t + 1, p, p))
    for t in range(big_t + 1):
        r_theta[t, t] = np.eye(p)
    return DmftTrace(
        engine="one_pass_effective",
        kernel_mode=cfg.kernel_mode,
        formulation=cfg.formulation,
        n_samples=n,
        steps=np.arange(big_t + 1),
        m=m_hist,
        m_std_error=se_m,
        g=g_t,
        g_std_error=se_g,
        lam=lam_t,
        teacher_drive=drive_t,
        r_ell=np.zeros((big_t + 1, big_t + 1, p, p)),
        r_theta=r_theta,
        c_loss=c_loss,
        c_noise=c_noise,
    )
