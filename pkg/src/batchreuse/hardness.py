"""Which feature-space directions a batch-reusing student can pick up.

A unit direction u in the k-dimensional feature space of a target g is
recoverable after finitely many full-batch steps exactly when some moment
E[g(h)^m <h, u>] (h standard k-dimensional normal, m >= 1) is nonzero;
reflection symmetries of g force every such moment to vanish and make the
direction invisible.  This module estimates the moments (tensor
quadrature for up to five features, Monte Carlo beyond), classifies
directions with explicit symmetry witnesses, and evaluates the
closed-form prediction for the overlap after two gradient steps.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .hermite import QuadratureRule, gauss_expectation, gauss_hermite_rule
from .targets import ScalarFunction, TargetFunction

QUADRATURE_DIMENSION_LIMIT = 5
DEFAULT_K_MAX = 8
DEFAULT_MC_SAMPLES = 100_000
DEFAULT_PHI_SAMPLES = 1_000_000
ZERO_FLOOR = 1e-8
DEFAULT_SYMMETRY_TRIALS = 64
SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class Direction:
    """Unit vector of coefficients in the feature basis of a target."""

    coefficients: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        u = np.asarray(self.coefficients, dtype=float)
        if u.ndim != 1 or u.size < 1:
            raise ValueError(f"direction must be a 1-d vector, got shape {u.shape}")
        norm = float(np.linalg.norm(u))
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"direction must be unit norm, got {norm!r}")
        u = u.copy()
        u.setflags(write=False)
        object.__setattr__(self, "coefficients", u)

    @property
    def k(self) -> int:
        return int(self.coefficients.size)

    @staticmethod
    def axis(k: int, index: int, name: str | None = None) -> "Direction":
        """Coordinate axis e_index (1-based) in a k-feature space."""
        if not 1 <= index <= k:
            raise ValueError(f"need 1 <= index <= {k}, got {index}")
        u = np.zeros(k)
        u[index - 1] = 1.0
        return Direction(u, name if name is not None else f"e{index}")

    @staticmethod
    def unit(vec, name: str = "") -> "Direction":
        """Normalize an arbitrary nonzero vector into a Direction."""
        v = np.asarray(vec, dtype=float)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return Direction(v / norm, name)

    def ambient(self, teacher) -> np.ndarray:
        """Lift to input space: W^T u rescaled to norm sqrt(d)."""
        if teacher.k != self.k:
            raise ValueError(f"teacher has k={teacher.k}, direction has k={self.k}")
        v = teacher.w.T @ self.coefficients
        return v * (math.sqrt(teacher.d) / float(np.linalg.norm(v)))


@dataclass(frozen=True)
class MomentEstimate:
    """Estimate of one moment: value, std error (0 for quadrature), scale.

    scale is the same integral with both factors in absolute value; it
    bounds the roundoff of a cancellation-driven zero, so classification
    floors are taken relative to it.
    """

    value: float
    std_error: float
    method: str
    scale: float = 1.0


@dataclass(frozen=True)
class OrthoWitness:
    """Invariance map certifying a direction is orthogonally even.

    matrix sends h to its image under (reflection of the direction
    component) composed with the named orthogonal map of the complement;
    the target is invariant under it at the tested points.
    """

    label: str
    matrix: np.ndarray


@dataclass(frozen=True)
class DirectionVerdict:
    direction: Direction
    status: str  # "FiniteTLearnable" | "HardUpToK"
    witness_k: int | None
    k_max: int
    moments: tuple[MomentEstimate, ...]
    even_symmetric: bool
    ortho_even_symmetric: bool | None
    symmetry_witness: str | None
    inconclusive: bool

    def to_json(self) -> str:
        """Serialize as the report schema.

        moments entries are [power, value, std_error]; symmetry.ortho_even
        is true only with a witness (pointwise map or a span certificate),
        null when the search was exhausted without one.
        """
        payload = {
            "direction": {
                "name": self.direction.name,
                "coefficients": [float(c) for c in self.direction.coefficients],
            },
            "status": self.status,
            "witness_k": self.witness_k,
            "k_max": self.k_max,
            "moments": [
                [i + 1, m.value, m.std_error] for i, m in enumerate(self.moments)
            ],
            "moment_method": self.moments[0].method if self.moments else None,
            "symmetry": {
                "even": self.even_symmetric,
                "ortho_even": self.ortho_even_symmetric,
                "witness": self.symmetry_witness,
            },
            "inconclusive": self.inconclusive,
        }
        return json.dumps(payload)


def _check_direction(t: TargetFunction, direction: Direction) -> np.ndarray:
    if direction.k != t.k:
        raise ValueError(f"target has k={t.k}, direction has k={direction.k}")
    return direction.coefficients


def _warn_if_noisy(what: str, value: float, std_error: float) -> None:
    # Leading digit of an order-one estimate unresolved: not worth trusting.
    if std_error > 0.1 * max(abs(value), 1.0):
        warnings.warn(
            f"{what}: std error {std_error:.3g} exceeds 10% of max(|{value:.3g}|, 1); "
            "increase the sample count",
            stacklevel=3,
        )


def moment_functional(
    t: TargetFunction,
    direction: Direction,
    power: int,
    *,
    method: str | None = None,
    n_samples: int = DEFAULT_MC_SAMPLES,
    rule: QuadratureRule | None = None,
    seed: int = 0,
) -> MomentEstimate:
    """E[g(h)^power <h, u>] for standard normal h.

    Tensor-product Gauss-Hermite quadrature when the target has at most
    five features (exact for polynomial targets at the default node
    count), Monte Carlo with a reported std error beyond that or when
    method="monte_carlo" is forced.
    """
    u = _check_direction(t, direction)
    if power < 1:
        raise ValueError(f"power must be >= 1, got {power}")
    if method is None:
        method = "quadrature" if t.k <= QUADRATURE_DIMENSION_LIMIT else "monte_carlo"
    if method == "quadrature":
        if t.k > QUADRATURE_DIMENSION_LIMIT:
            raise ValueError(f"quadrature supports k <= {QUADRATURE_DIMENSION_LIMIT}")
        qr = rule or gauss_hermite_rule(dimension=t.k)

        def value_fn(points: np.ndarray) -> np.ndarray:
            h = points if points.ndim > 1 else points[:, None]
            return t.evaluate(h) ** power * (h @ u)

        value = gauss_expectation(value_fn, qr)
        scale = gauss_expectation(lambda p: np.abs(value_fn(p)), qr)
        return MomentEstimate(float(value), 0.0, "quadrature", float(max(scale, 1.0)))
    if method != "monte_carlo":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((n_samples, t.k))
    vals = t.evaluate(h) ** power * (h @ u)
    value = float(vals.mean())
    std_error = float(vals.std(ddof=1) / math.sqrt(n_samples))
    scale = float(max(np.abs(vals).mean(), 1.0))
    _warn_if_noisy(f"moment power {power}", value, std_error)
    return MomentEstimate(value, std_error, "monte_carlo", scale)


def is_even_symmetric(
    t: TargetFunction,
    direction: Direction,
    trials: int = DEFAULT_SYMMETRY_TRIALS,
    tol: float = SYMMETRY_TOL,
    seed: int = 0,
) -> bool:
    """True when g is invariant under reflecting the u-component of h."""
    u = _check_direction(t, direction)
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((trials, t.k))
    reflected = h - 2.0 * np.outer(h @ u, u)
    f = t.evaluate(h)
    diff = np.abs(t.evaluate(reflected) - f)
    return bool(np.all(diff <= tol * np.maximum(1.0, np.abs(f))))


def _complement_basis(u: np.ndarray) -> tuple[np.ndarray, list[str]]:
    """Orthonormal basis of the complement of u with printable labels.

    When u is a (signed) coordinate axis the basis is the remaining axes
    in index order, labelled z2, z3, ... by their 1-based coordinate;
    otherwise a deterministic orthonormal completion labelled c1, c2, ...
    """
    k = u.size
    axis_hits = np.nonzero(np.abs(np.abs(u) - 1.0) < 1e-12)[0]
    if axis_hits.size == 1 and np.allclose(np.delete(u, axis_hits[0]), 0.0, atol=1e-12):
        others = [j for j in range(k) if j != axis_hits[0]]
        basis = np.zeros((k, k - 1))
        for col, j in enumerate(others):
            basis[j, col] = 1.0
        return basis, [f"z{j + 1}" for j in others]
    full = np.concatenate([u[:, None], np.eye(k)], axis=1)
    q, _ = np.linalg.qr(full)
    basis = q[:, 1:k]
    return basis, [f"c{m + 1}" for m in range(k - 1)]


def _signed_permutations(m: int):
    """Candidate orthogonal maps on m coordinates, deterministic order.

    Identity first, then sign flips by increasing flip count, then proper
    permutations crossed with all sign patterns.  Beyond m = 6 the
    factorial part is skipped and only sign flips are searched.
    """
    idx = tuple(range(m))
    yield idx, (1,) * m
    for flips in range(1, m + 1):
        for pos in itertools.combinations(range(m), flips):
            signs = tuple(-1 if j in pos else 1 for j in range(m))
            yield idx, signs
    if m > 6:
        return
    for perm in itertools.permutations(range(m)):
        if perm == idx:
            continue
        for signs in itertools.product((1, -1), repeat=m):
            yield perm, signs


def _candidate_label(perm, signs, labels: list[str]) -> str:
    parts = []
    for j, (p, s) in enumerate(zip(perm, signs)):
        if p == j and s == 1:
            continue
        parts.append(f"{labels[j]}->{'-' if s < 0 else ''}{labels[p]}")
    return ", ".join(parts) if parts else "identity"


def is_ortho_even_symmetric(
    t: TargetFunction,
    direction: Direction,
    candidate_transforms: list[np.ndarray] | None = None,
    trials: int = DEFAULT_SYMMETRY_TRIALS,
    tol: float = SYMMETRY_TOL,
    seed: int = 0,
) -> OrthoWitness | None:
    """Search for an orthogonal map of the complement undoing the reflection.

    Tests g((B O B^T - u u^T) h) = g(h) over candidate O: by default all
    signed permutations of the complement coordinates (identity first, so
    plainly even directions get the identity witness).  Returns the first
    witnessing map or None; None means the candidate set is exhausted,
    not that no continuous witness exists.
    """
    u = _check_direction(t, direction)
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((trials, t.k))
    f = t.evaluate(h)
    bound = tol * np.maximum(1.0, np.abs(f))
    basis, labels = _complement_basis(u)
    m = t.k - 1

    def witness_from(op: np.ndarray, label: str) -> OrthoWitness | None:
        full = basis @ op @ basis.T - np.outer(u, u)
        if np.all(np.abs(t.evaluate(h @ full.T) - f) <= bound):
            mat = full.copy()
            mat.setflags(write=False)
            return OrthoWitness(label, mat)
        return None

    if candidate_transforms is not None:
        for i, op in enumerate(candidate_transforms):
            op = np.asarray(op, dtype=float)
            if op.shape != (m, m):
                raise ValueError(f"candidate {i} must be {m}x{m}, got {op.shape}")
            hit = witness_from(op, f"candidate[{i}]")
            if hit is not None:
                return hit
        return None
    for perm, signs in _signed_permutations(m):
        op = np.zeros((m, m))
        for j, (p, s) in enumerate(zip(perm, signs)):
            op[p, j] = s
        hit = witness_from(op, _candidate_label(perm, signs, labels))
        if hit is not None:
            return hit
    return None


def classify_direction(
    t: TargetFunction,
    direction: Direction,
    k_max: int = DEFAULT_K_MAX,
    *,
    n_samples: int = DEFAULT_MC_SAMPLES,
    rule: QuadratureRule | None = None,
    seed: int = 0,
) -> DirectionVerdict:
    """Full verdict: first nonzero moment power, or hard up to k_max.

    A moment counts as nonzero above max(ZERO_FLOOR * scale, 5 * std
    error); the relative floor keeps roundoff from large cancelling sums
    below threshold.  The verdict is flagged inconclusive when a Monte
    Carlo moment lands between 3 and 5 of its std errors, close enough to
    the cut that the hard call could be a sampling accident.

    The symmetry fields report an even-reflection check and an orthogonal
    witness search.  A direction with no pointwise witness still gets
    ortho_even_symmetric=True when it lies in the span of coordinate axes
    that each have one: the moment functional is linear in the direction,
    so vanishing moments propagate to the span.
    """
    u = _check_direction(t, direction)
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    moments = tuple(
        moment_functional(
            t, direction, power, n_samples=n_samples, rule=rule, seed=seed + power
        )
        for power in range(1, k_max + 1)
    )
    witness_k = None
    inconclusive = False
    for power, m in enumerate(moments, start=1):
        threshold = max(ZERO_FLOOR * m.scale, 5.0 * m.std_error)
        if abs(m.value) > threshold:
            witness_k = power
            break
        if m.std_error > 0.0 and abs(m.value) > 3.0 * m.std_error:
            inconclusive = True
    if witness_k is not None:
        inconclusive = False

    even = is_even_symmetric(t, direction, seed=seed)
    ortho: bool | None
    witness_label: str | None
    hit = is_ortho_even_symmetric(t, direction, seed=seed)
    if hit is not None:
        ortho, witness_label = True, hit.label
    else:
        witnessed_axes = [
            i
            for i in range(1, t.k + 1)
            if abs(u[i - 1]) > 1e-10
            and is_ortho_even_symmetric(t, Direction.axis(t.k, i), seed=seed)
            is not None
        ]
        covered = set(witnessed_axes)
        spans = all(
            abs(u[i - 1]) <= 1e-10 or i in covered for i in range(1, t.k + 1)
        ) and len(covered) > 0
        if spans:
            ortho = True
            witness_label = "span(" + ", ".join(f"e{i}" for i in witnessed_axes) + ")"
        else:
            ortho, witness_label = None, None

    return DirectionVerdict(
        direction=direction,
        status="FiniteTLearnable" if witness_k is not None else "HardUpToK",
        witness_k=witness_k,
        k_max=k_max,
        moments=moments,
        even_symmetric=even,
        ortho_even_symmetric=ortho,
        symmetry_witness=witness_label,
        inconclusive=inconclusive,
    )


def phi_curve(
    t: TargetFunction,
    sigma: ScalarFunction,
    a_j: float,
    eta: float,
    *,
    direction: Direction | None = None,
    n_samples: int = DEFAULT_PHI_SAMPLES,
    seed: int = 0,
    method: str | None = None,
    rule: QuadratureRule | None = None,
) -> MomentEstimate:
    """Second-step response integral for one neuron of output weight a_j.

    phi(a_j) = E[g(h) sigma'(eta a_j g(h) sigma'(v) + a_j xi) <h, u>] with
    h the feature vector and v, xi independent standard normals standing
    in for the initial pre-activation and the accumulated batch noise at
    unit variance.  Quadrature over the k+2 integration dimensions when
    they fit and sigma is twice differentiable; Monte Carlo otherwise
    (sigma' with jumps makes the tensor rule converge slowly except where
    symmetry cancels it exactly).
    """
    if direction is None:
        if t.k != 1:
            raise ValueError("direction is required for a multi-feature target")
        direction = Direction.axis(1, 1, name="e1")
    u = _check_direction(t, direction)
    dims = t.k + 2

    def integrand(points: np.ndarray) -> np.ndarray:
        h = points[..., : t.k]
        v = points[..., t.k]
        xi = points[..., t.k + 1]
        g = t.evaluate(h)
        inner = eta * a_j * g * sigma.df(v) + a_j * xi
        return g * sigma.df(inner) * (h @ u)

    if method is None:
        smooth = sigma.d2f is not None
        method = (
            "quadrature"
            if dims <= QUADRATURE_DIMENSION_LIMIT and smooth
            else "monte_carlo"
        )
    if method == "quadrature":
        if dims > QUADRATURE_DIMENSION_LIMIT:
            raise ValueError(
                f"need k + 2 <= {QUADRATURE_DIMENSION_LIMIT} for quadrature, got {dims}"
            )
        qr = rule or gauss_hermite_rule(dimension=dims)
        value = gauss_expectation(integrand, qr)
        scale = gauss_expectation(lambda p: np.abs(integrand(p)), qr)
        return MomentEstimate(float(value), 0.0, "quadrature", float(max(scale, 1.0)))
    if method != "monte_carlo":
        raise ValueError(f"unknown method {method!r}")
    if n_samples < 10_000:
        raise ValueError(f"need n_samples >= 10000, got {n_samples}")
    rng = np.random.default_rng(seed)
    points = rng.standard_normal((n_samples, dims))
    vals = integrand(points)
    value = float(vals.mean())
    std_error = float(vals.std(ddof=1) / math.sqrt(n_samples))
    _warn_if_noisy("phi", value, std_error)
    return MomentEstimate(
        value, std_error, "monte_carlo", float(max(np.abs(vals).mean(), 1.0))
    )


def first_step_overlap(
    t: TargetFunction,
    sigma: ScalarFunction,
    a,
    eta: float,
    alpha: float,
    *,
    direction: Direction | None = None,
    rule: QuadratureRule | None = None,
) -> np.ndarray:
    """Closed-form overlap along a direction after one step from zero overlap.

    Per neuron: eta * alpha * a_j * E[sigma'(xi)] * E[g(h) <h, u>].
    """
    if direction is None:
        if t.k != 1:
            raise ValueError("direction is required for a multi-feature target")
        direction = Direction.axis(1, 1, name="e1")
    _check_direction(t, direction)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    line = gauss_hermite_rule()
    nu1_sigma = gauss_expectation(lambda x: np.asarray(sigma.df(x), dtype=float), line)
    c1 = moment_functional(t, direction, 1, rule=rule).value
    return eta * alpha * a * float(nu1_sigma) * c1


def predict_two_step_overlap(
    t: TargetFunction,
    sigma: ScalarFunction,
    a,
    eta: float,
    lam: float,
    alpha: float,
    *,
    direction: Direction | None = None,
    n_samples: int = DEFAULT_PHI_SAMPLES,
    seed: int = 0,
    method: str | None = None,
    rule: QuadratureRule | None = None,
) -> np.ndarray:
    """Predicted per-neuron overlap along a direction after two steps.

    (1 - eta lam) * M1_j + eta alpha a_j phi(a_j), with M1 the first-step
    closed form.  Exact in the wide limit when the ridge term resets the
    initial pre-activation (lam = 1/eta) and the noise scale is calibrated
    to a_j; elsewhere the dropped initial-state correlation makes it an
    approximation, vanishing identically for sigma' with jumps at odd
    targets even when the simulated overlap does not.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    m1 = first_step_overlap(t, sigma, a, eta, alpha, direction=direction, rule=rule)
    out = np.empty_like(m1)
    for j, a_j in enumerate(a):
        phi = phi_curve(
            t,
            sigma,
            float(a_j),
            eta,
            direction=direction,
            n_samples=n_samples,
            seed=seed + j,
            method=method,
            rule=rule,
        )
        out[j] = (1.0 - eta * lam) * m1[j] + eta * alpha * a_j * phi.value
    return out
