"""Gradient descent for a two-layer student on synthetic multi-index data.

A teacher y = g(W* z / sqrt(d)) labels Gaussian inputs; the student
f(z) = sum_j a_j sigma(<w_j, z> / sqrt(d)) trains its first layer by
full-batch or minibatch gradient steps on the summed squared loss
(1/2) sum_nu (y_nu - f(z_nu))^2, with optional ridge decay.  The object
of interest is never the loss but the overlap matrix M = W W*^T / d and
its projections on named feature-space directions, traced over steps and
averaged over independent runs.

Second-layer weights are frozen at +-1/sqrt(p) (or Gaussian) in
antisymmetric pairs with duplicated first-layer rows, so the network
output is exactly zero at initialization.  Single-neuron runs (p=1)
cannot pair; they instead train against the residual y - 0 throughout,
the zero-output convention, and their reported loss is the constant
(1/2) sum y^2.  The forward pass always reports the true network output.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .hardness import Direction, moment_functional
from .hermite import QuadratureRule
from .targets import ScalarFunction, TargetFunction, Teacher, get_scalar, stream_rng

# Distinct per-domain tags: an integer seed reused across teacher, data, init,
# and online sampling must never replay the same Gaussian stream (a shared
# stream makes the first sample exactly parallel to the first teacher row).
_DATASET_STREAM = 0xDA7A
_INIT_STREAM = 0x1217
_ONLINE_STREAM = 0x05DD

SCHEDULE_KINDS = (
    "full_batch_reuse",
    "fresh_one_pass",
    "cycle_epochs",
    "with_replacement",
    "sequential",
)
SECOND_LAYERS = ("plus_minus", "gaussian")
GRAD_NORMALIZATIONS = ("sum", "mean")


class DivergenceError(RuntimeError):
    """A gradient step produced non-finite weights."""


@dataclass(frozen=True)
class BatchSchedule:
    """Which samples each gradient step sees.

    size is the block count for cycle_epochs and the minibatch size for
    with_replacement and sequential; the two whole-dataset kinds carry
    none.  Blocks must tile the dataset exactly, checked against n when
    training starts.
    """

    kind: str
    size: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        sized = self.kind in ("cycle_epochs", "with_replacement", "sequential")
        if sized:
            if self.size is None or self.size < 1:
                raise ValueError(f"{self.kind} needs a positive size, got {self.size}")
        elif self.size is not None:
            raise ValueError(f"{self.kind} takes no size")

    @classmethod
    def full_batch_reuse(cls) -> BatchSchedule:
        return cls("full_batch_reuse")

    @classmethod
    def fresh_one_pass(cls) -> BatchSchedule:
        return cls("fresh_one_pass")

    @classmethod
    def cycle_epochs(cls, n_blocks: int) -> BatchSchedule:
        return cls("cycle_epochs", n_blocks)

    @classmethod
    def with_replacement(cls, n_batch: int) -> BatchSchedule:
        return cls("with_replacement", n_batch)

    @classmethod
    def sequential(cls, n_batch: int) -> BatchSchedule:
        return cls("sequential", n_batch)

    def describe(self) -> str:
        return self.kind if self.size is None else f"{self.kind}({self.size})"

    def validate_for(self, n: int) -> None:
        if self.kind == "cycle_epochs" and (self.size > n or n % self.size):
            raise ValueError(f"{self.size} blocks do not tile n={n}")
        if self.kind == "sequential" and (self.size > n or n % self.size):
            raise ValueError(f"minibatch size {self.size} does not divide n={n}")


@dataclass(frozen=True)
class TrainConfig:
    """One training protocol: sizes, step rule, schedule, and averaging.

    alpha fixes the dataset size n = round(alpha * d).  p must be even
    for the paired zero-output initialization; p=1 is the documented
    single-neuron exception.  steps is the number of gradient updates T;
    traces have T+1 rows including the initial state.
    """

    d: int
    alpha: float
    p: int
    eta: float
    lam: float
    steps: int
    schedule: BatchSchedule
    seed: int = 0
    runs: int = 1
    activation: str = "relu"
    second_layer: str = "plus_minus"
    grad_normalization: str = "sum"

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError(f"need d >= 1, got {self.d}")
        if not self.alpha > 0:
            raise ValueError(f"need alpha > 0, got {self.alpha}")
        if self.p < 1 or (self.p != 1 and self.p % 2):
            raise ValueError(f"p must be even (or the p=1 special case), got {self.p}")
        if not self.eta > 0:
            raise ValueError(f"need eta > 0, got {self.eta}")
        if self.lam < 0:
            raise ValueError(f"need lambda >= 0, got {self.lam}")
        if self.steps < 1:
            raise ValueError(f"need steps >= 1, got {self.steps}")
        if self.runs < 1:
            raise ValueError(f"need runs >= 1, got {self.runs}")
        if not isinstance(self.schedule, BatchSchedule):
            raise ValueError("schedule must be a BatchSchedule")
        if self.second_layer not in SECOND_LAYERS:
            raise ValueError(f"unknown second layer law {self.second_layer!r}")
        if self.grad_normalization not in GRAD_NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.grad_normalization!r}")
        get_scalar(self.activation)  # fail fast on unknown names


def dataset_size(cfg: TrainConfig) -> int:
    """n = round(alpha * d)."""
    return int(round(cfg.alpha * cfg.d))


@dataclass(frozen=True)
class Dataset:
    """Inputs z (n, d) with teacher labels y (n,)."""

    z: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        if self.z.ndim != 2 or self.y.shape != (self.z.shape[0],):
            raise ValueError(f"mismatched shapes {self.z.shape} vs {self.y.shape}")

    @property
    def n(self) -> int:
        return self.z.shape[0]

    def subset(self, idx) -> Dataset:
        return Dataset(self.z[idx], self.y[idx])


def generate_dataset(cfg, teacher: Teacher, target: TargetFunction, seed) -> Dataset:
    """n i.i.d. standard Gaussian inputs labeled through the teacher frame."""
    if teacher.d != cfg.d:
        raise ValueError(f"teacher dimension {teacher.d} != config d {cfg.d}")
    if target.k != teacher.k:
        raise ValueError(f"target expects k={target.k}, teacher has k={teacher.k}")
    rng = stream_rng(seed, _DATASET_STREAM)
    z = rng.standard_normal((dataset_size(cfg), cfg.d))
    return Dataset(z, target.evaluate(teacher.features(z)))


@dataclass(frozen=True)
class StudentState:
    """First-layer weights with a frozen second layer.

    paired states keep a exactly antisymmetric under index reversal
    (a_i = -a_{p-1-i}), which forward() exploits to evaluate the output
    as a difference of half-sums; with duplicated rows at init this makes
    the t=0 output exactly zero in floating point, not merely small.
    zero_output states (p=1 runs) train and report loss against
    residual y - 0 while forward() still returns the true output.
    """

    W: np.ndarray
    a: np.ndarray
    sigma: ScalarFunction
    paired: bool = False
    zero_output: bool = False

    def __post_init__(self) -> None:
        if self.W.ndim != 2 or self.a.shape != (self.W.shape[0],):
            raise ValueError(f"mismatched shapes {self.W.shape} vs {self.a.shape}")
        if self.paired and self.W.shape[0] % 2:
            raise ValueError("paired states need even p")

    @property
    def p(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    def preactivations(self, z: np.ndarray) -> np.ndarray:
        """h = W z / sqrt(d) for z of shape (..., d), returned (..., p)."""
        return z @ self.W.T / math.sqrt(self.d)

    def forward(self, z: np.ndarray) -> np.ndarray:
        return self._output(self.preactivations(z))

    def _output(self, h: np.ndarray) -> np.ndarray:
        phi = self.sigma.f(h)
        if self.paired:
            half = self.p // 2
            return (phi[..., :half] - phi[..., ::-1][..., :half]) @ self.a[:half]
        return phi @ self.a

    def residual(self, h: np.ndarray, y: np.ndarray) -> np.ndarray:
        return y if self.zero_output else y - self._output(h)


def init_student(cfg: TrainConfig, seed, second_layer: str = "plus_minus") -> StudentState:
    """Draw Gaussian rows in mirrored pairs; p=1 gets the zero-output convention."""
    if second_layer not in SECOND_LAYERS:
        raise ValueError(f"unknown second layer law {second_layer!r}")
    sigma = get_scalar(cfg.activation)
    rng = stream_rng(seed, _INIT_STREAM)
    if cfg.p == 1:
        w = rng.standard_normal((1, cfg.d))
        a = np.array([1.0]) if second_layer == "plus_minus" else rng.standard_normal(1)
        return StudentState(w, a, sigma, paired=False, zero_output=True)
    half = cfg.p // 2
    w_half = rng.standard_normal((half, cfg.d))
    if second_layer == "plus_minus":
        a_half = np.full(half, 1.0 / math.sqrt(cfg.p))
    else:
        a_half = rng.standard_normal(half) / math.sqrt(cfg.p)
    w = np.vstack([w_half, w_half[::-1]])
    a = np.concatenate([a_half, -a_half[::-1]])
    return StudentState(w, a, sigma, paired=True)


def empirical_loss(student: StudentState, dataset: Dataset) -> float:
    """(1/2) sum of squared residuals under the student's residual convention.

    Returns inf rather than raising when a drifting state overflows; the
    next gradient step is where divergence is diagnosed.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        r = student.residual(student.preactivations(dataset.z), dataset.y)
        return 0.5 * float(r @ r)


def gd_step(
    student: StudentState,
    batch: Dataset,
    eta: float,
    lam: float,
    *,
    normalization: str = "sum",
) -> StudentState:
    """One update w_i <- (1 - eta lam) w_i - eta grad_i, gradients summed.

    normalization="mean" divides the summed gradient by the batch size.
    """
    if batch.n == 0:
        raise ValueError("batch must be nonempty")
    if normalization not in GRAD_NORMALIZATIONS:
        raise ValueError(f"unknown normalization {normalization!r}")
    root_d = math.sqrt(student.d)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        h = batch.z @ student.W.T / root_d
        r = student.residual(h, batch.y)
        slope = student.sigma.df(h) * student.a
        grad = -(slope * r[:, None]).T @ batch.z / root_d
        if normalization == "mean":
            grad = grad / batch.n
        w_new = (1.0 - eta * lam) * student.W - eta * grad
    if not np.all(np.isfinite(w_new)):
        worst = float(np.nanmax(np.abs(grad))) if np.isfinite(grad).any() else math.inf
        raise DivergenceError(
            f"non-finite weights after a step with eta={eta}: the step size is "
            f"too large for this batch (max |grad| ~ {worst:.3g})"
        )
    return replace(student, W=w_new)


def _batch_indices(schedule: BatchSchedule, n: int, step: int, rng):
    """Sample indices for one step; fresh datasets are the caller's job."""
    if schedule.kind == "full_batch_reuse":
        return slice(None)
    if schedule.kind == "cycle_epochs":
        block = n // schedule.size
        j = step % schedule.size
        return slice(j * block, (j + 1) * block)
    if schedule.kind == "sequential":
        blocks = n // schedule.size
        j = step % blocks
        return slice(j * schedule.size, (j + 1) * schedule.size)
    if schedule.kind == "with_replacement":
        return rng.integers(0, n, schedule.size)
    raise RuntimeError(f"schedule {schedule.kind} does not index a fixed dataset")


@dataclass(frozen=True)
class OverlapTrace:
    """Run-averaged observables at t = 0..T (t counts gradient steps).

    overlap_mean holds the run average of the nonnegative projection
    norm ||M u|| per named direction (|<w, v*>/d| when p=1); m_mean is
    the signed run average of the full p x k overlap matrix, the object
    theory predicts.  Std errors are over runs (zero when runs=1).
    """

    schedule: str
    direction_names: tuple[str, ...]
    steps: np.ndarray
    overlap_mean: np.ndarray
    overlap_std_error: np.ndarray
    loss_mean: np.ndarray
    loss_std_error: np.ndarray
    m_mean: np.ndarray
    m_std_error: np.ndarray
    runs: int

    def overlap(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """(mean, std error) trajectories for one named direction."""
        if name not in self.direction_names:
            raise KeyError(f"no direction named {name!r}")
        j = self.direction_names.index(name)
        return self.overlap_mean[:, j], self.overlap_std_error[:, j]

    def write_csv(self, path) -> None:
        """One row per (t, direction): t, schedule, direction_name, overlap_mean, overlap_std, loss_mean."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["t", "schedule", "direction_name", "overlap_mean", "overlap_std", "loss_mean"]
            )
            for i, t in enumerate(self.steps):
                for j, name in enumerate(self.direction_names):
                    writer.writerow(
                        [
                            int(t),
                            self.schedule,
                            name,
                            repr(float(self.overlap_mean[i, j])),
                            repr(float(self.overlap_std_error[i, j])),
                            repr(float(self.loss_mean[i])),
                        ]
                    )


def _aggregate(
    schedule: str,
    names: tuple[str, ...],
    m_all: np.ndarray,
    proj_all: np.ndarray,
    loss_all: np.ndarray,
) -> OverlapTrace:
    runs = m_all.shape[0]
    scale = math.sqrt(runs)

    def std_error(arr: np.ndarray) -> np.ndarray:
        if runs == 1:
            return np.zeros(arr.shape[1:])
        return arr.std(axis=0, ddof=1) / scale

    return OverlapTrace(
        schedule=schedule,
        direction_names=names,
        steps=np.arange(m_all.shape[1]),
        overlap_mean=proj_all.mean(axis=0),
        overlap_std_error=std_error(proj_all),
        loss_mean=loss_all.mean(axis=0),
        loss_std_error=std_error(loss_all),
        m_mean=m_all.mean(axis=0),
        m_std_error=std_error(m_all),
        runs=runs,
    )


def train(
    cfg: TrainConfig,
    teacher: Teacher,
    target: TargetFunction,
    directions: list[Direction] | None = None,
) -> OverlapTrace:
    """Run cfg.runs independent trainings and average their traces.

    Each run draws its own init and data through a per-run seed chain, so
    the result is bit-identical for identical cfg regardless of how runs
    would be scheduled; aggregation is a plain associative reduction over
    runs.  Observables are recorded at t=0 (before any update) through
    t=T.  The loss at time t is evaluated on the batch the schedule
    assigns to step t, which for fresh_one_pass means a fresh holdout at
    the final time.
    """
    if teacher.d != cfg.d:
        raise ValueError(f"teacher dimension {teacher.d} != config d {cfg.d}")
    if target.k != teacher.k:
        raise ValueError(f"target expects k={target.k}, teacher has k={teacher.k}")
    n = dataset_size(cfg)
    cfg.schedule.validate_for(n)
    if directions is None:
        directions = [Direction.axis(target.k, i) for i in range(1, target.k + 1)]
    names = tuple(
        dr.name if dr.name else f"dir{j}" for j, dr in enumerate(directions)
    )
    u_stack = np.stack([dr.coefficients for dr in directions], axis=1)  # (k, ndir)

    fresh = cfg.schedule.kind == "fresh_one_pass"
    t_axis = cfg.steps + 1
    m_all = np.empty((cfg.runs, t_axis, cfg.p, target.k))
    proj_all = np.empty((cfg.runs, t_axis, len(directions)))
    loss_all = np.empty((cfg.runs, t_axis))

    for run, chain in enumerate(np.random.SeedSequence(cfg.seed).spawn(cfg.runs)):
        init_ss, data_ss, sched_ss = chain.spawn(3)
        student = init_student(cfg, init_ss, cfg.second_layer)
        rng_sched = np.random.default_rng(sched_ss)
        ds = None if fresh else generate_dataset(cfg, teacher, target, data_ss)
        for t in range(t_axis):
            if fresh:
                batch = generate_dataset(cfg, teacher, target, data_ss.spawn(1)[0])
            else:
                batch = ds.subset(_batch_indices(cfg.schedule, n, t, rng_sched))
            # recording must not warn on a state gd_step is about to diagnose
            with np.errstate(over="ignore", invalid="ignore"):
                m = student.W @ teacher.w.T / cfg.d
                m_all[run, t] = m
                proj_all[run, t] = np.linalg.norm(m @ u_stack, axis=0)
                loss_all[run, t] = empirical_loss(student, batch)
            if t < cfg.steps:
                student = gd_step(
                    student,
                    batch,
                    cfg.eta,
                    cfg.lam,
                    normalization=cfg.grad_normalization,
                )

    return _aggregate(cfg.schedule.describe(), names, m_all, proj_all, loss_all)


def online_sgd_continue(
    student: StudentState,
    teacher: Teacher,
    target: TargetFunction,
    eta2: float,
    steps: int,
    *,
    seed: int = 0,
    directions: list[Direction] | None = None,
) -> OverlapTrace:
    """Continue a trained student with one-fresh-sample-per-step SGD.

    Intended for the single-index matching-activation regime where a
    nonzero overlap grows to strong recovery over order-d steps.  The
    zero-output convention is dropped here: updates use the true residual
    y - f.  The input student is not modified.  The loss column holds the
    per-sample half squared residual, a noisy one-sample quantity.
    """
    if teacher.d != student.d:
        raise ValueError(f"teacher dimension {teacher.d} != student d {student.d}")
    if target.k != teacher.k:
        raise ValueError(f"target expects k={target.k}, teacher has k={teacher.k}")
    if steps < 0:
        raise ValueError(f"need steps >= 0, got {steps}")
    if directions is None:
        directions = [Direction.axis(target.k, i) for i in range(1, target.k + 1)]
    names = tuple(
        dr.name if dr.name else f"dir{j}" for j, dr in enumerate(directions)
    )
    u_stack = np.stack([dr.coefficients for dr in directions], axis=1)

    current = replace(student, zero_output=False)
    rng = stream_rng(seed, _ONLINE_STREAM)
    m_all = np.empty((1, steps + 1, student.p, target.k))
    proj_all = np.empty((1, steps + 1, len(directions)))
    loss_all = np.empty((1, steps + 1))
    for t in range(steps + 1):
        z = rng.standard_normal((1, student.d))
        sample = Dataset(z, target.evaluate(teacher.features(z)))
        with np.errstate(over="ignore", invalid="ignore"):
            m = current.W @ teacher.w.T / student.d
            m_all[0, t] = m
            proj_all[0, t] = np.linalg.norm(m @ u_stack, axis=0)
            loss_all[0, t] = empirical_loss(current, sample)
        if t < steps:
            current = gd_step(current, sample, eta2, 0.0)
    return _aggregate("online_sgd", names, m_all, proj_all, loss_all)


def c1_direction(target: TargetFunction, rule: QuadratureRule | None = None) -> Direction:
    """Unit direction of the target's linear component E[g(h) h].

    Raises when the linear component vanishes (even targets have no such
    direction to project on).
    """
    vec = np.array(
        [
            moment_functional(target, Direction.axis(target.k, i), 1, rule=rule).value
            for i in range(1, target.k + 1)
        ]
    )
    if np.linalg.norm(vec) <= 1e-10:
        raise ValueError("target has no linear component")
    return Direction.unit(vec, name="C1")


def c1_perp_direction(target: TargetFunction, rule: QuadratureRule | None = None) -> Direction:
    """The in-plane direction orthogonal to C1 for two-feature targets."""
    if target.k != 2:
        raise ValueError(f"perpendicular direction needs k=2, got k={target.k}")
    c = c1_direction(target, rule).coefficients
    return Direction.unit(np.array([-c[1], c[0]]), name="C1_perp")
