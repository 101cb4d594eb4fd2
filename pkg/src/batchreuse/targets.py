"""Multi-index teacher functions and exactly orthogonal teacher frames.

A target is a function f(z) = g(W z / sqrt(d)) of d-dimensional Gaussian
input that depends on z only through the k pre-activations h = W z /
sqrt(d), where the rows of W are orthogonal with norm sqrt(d).  This
module holds the low-dimensional part g: evaluation, gradients wrt h, and
the Hermite-coefficient and information-exponent machinery for
single-index targets, plus a parser for the small textual grammar used in
config files ("single:he3", "product:1,2,3", "staircase:3",
"committee:he2,k=2", "sum(product:1,2,3; single:he3@4)").
"""

from __future__ import annotations

import abc
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .hermite import (
    QuadratureRule,
    gauss_hermite_rule,
    hermite_coefficients,
    hermite_eval,
)

DEFAULT_IE_TOL = 1e-8


class DegenerateTargetError(ValueError):
    """No Hermite coefficient above tolerance up to the requested degree."""


@dataclass(frozen=True)
class ScalarFunction:
    """Scalar link function with first and (when smooth) second derivative.

    d2f is None for links with a distributional second derivative such as
    relu; downstream kernel estimators must then fall back to finite
    differences.
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    d2f: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.f(x)


def _hermite_scalar(degree: int) -> ScalarFunction:
    # He_n' = n He_{n-1}, He_n'' = n (n-1) He_{n-2}.
    def f(x, n=degree):
        return hermite_eval(n, x)

    def df(x, n=degree):
        return n * hermite_eval(n - 1, x) if n >= 1 else np.zeros_like(x)

    def d2f(x, n=degree):
        return n * (n - 1) * hermite_eval(n - 2, x) if n >= 2 else np.zeros_like(x)

    return ScalarFunction(f"he{degree}", f, df, d2f)


def _relu() -> ScalarFunction:
    # Subgradient convention relu'(0) = 0; no second derivative.
    return ScalarFunction(
        "relu",
        lambda x: np.maximum(x, 0.0),
        lambda x: (np.asarray(x) > 0).astype(float),
        None,
    )


def _tanh() -> ScalarFunction:
    return ScalarFunction(
        "tanh",
        np.tanh,
        lambda x: 1.0 - np.tanh(x) ** 2,
        lambda x: -2.0 * np.tanh(x) * (1.0 - np.tanh(x) ** 2),
    )


def _identity() -> ScalarFunction:
    return ScalarFunction(
        "id",
        lambda x: np.asarray(x, dtype=float),
        lambda x: np.ones_like(np.asarray(x, dtype=float)),
        lambda x: np.zeros_like(np.asarray(x, dtype=float)),
    )


def _softplus() -> ScalarFunction:
    # Analytic relu stand-in for settings that need a smooth derivative.
    from scipy.special import expit

    return ScalarFunction(
        "softplus",
        lambda x: np.logaddexp(0.0, x),
        expit,
        lambda x: expit(x) * (1.0 - expit(x)),
    )


_SCALARS: dict[str, ScalarFunction] = {
    "id": _identity(),
    "identity": _identity(),
    "tanh": _tanh(),
    "relu": _relu(),
    "softplus": _softplus(),
}


def get_scalar(name: str) -> ScalarFunction:
    """Look up a scalar link by name; heN is generated for any N >= 0."""
    key = name.strip().lower()
    if key in _SCALARS:
        return _SCALARS[key]
    m = re.fullmatch(r"he(\d+)", key)
    if m:
        return _hermite_scalar(int(m.group(1)))
    raise ValueError(f"unknown scalar function {name!r}")


class TargetFunction(abc.ABC):
    """Low-dimensional part g of a multi-index target.

    evaluate and gradient act on arrays of shape (..., k) and return shape
    (...) resp. (..., k).  declared_leap is user-supplied metadata and is
    never computed.
    """

    k: int
    declared_leap: int | None

    @abc.abstractmethod
    def evaluate(self, h: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def gradient(self, h: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def spec_string(self) -> str:
        """Round-trippable textual form in the target grammar."""


def _check_last_axis(h: np.ndarray, k: int) -> np.ndarray:
    arr = np.asarray(h, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != k:
        raise ValueError(f"expected trailing axis of length {k}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class SingleIndex(TargetFunction):
    g: ScalarFunction
    declared_leap: int | None = None
    k: int = field(init=False, default=1)

    def evaluate(self, h: np.ndarray) -> np.ndarray:
        arr = _check_last_axis(h, 1)
        return np.asarray(self.g.f(arr[..., 0]), dtype=float)

    def gradient(self, h: np.ndarray) -> np.ndarray:
        arr = _check_last_axis(h, 1)
        return np.asarray(self.g.df(arr[..., 0]), dtype=float)[..., None]

    def spec_string(self) -> str:
        return f"single:{self.g.name}"


@dataclass(frozen=True)
class Product(TargetFunction):
    """Product of the listed coordinates (1-based), e.g. h1*h2*h3."""

    indices: tuple[int, ...]
    declared_leap: int | None = None
    k: int = field(init=False)

    def __post_init__(self) -> None:
        idx = tuple(sorted(self.indices))
        if len(idx) == 0:
            raise ValueError("product needs at least one index")
        if min(idx) < 1 or len(set(idx)) != len(idx):
            raise ValueError(f"indices must be distinct and >= 1, got {self.indices}")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "k", max(idx))

    def evaluate(self, h: np.ndarray) -> np.ndarray:
        arr = _check_last_axis(h, self.k)
        out = arr[..., self.indices[0] - 1].copy()
        for i in self.indices[1:]:
            out = out * arr[..., i - 1]
        return out

    def gradient(self, h: np.ndarray) -> np.ndarray:
        arr = _check_last_axis(h, self.k)
        grad = np.zeros_like(arr)
        for i in self.indices:
            partial = np.ones(arr.shape[:-1])
            for j in self.indices:
                if j != i:
                    partial = partial * arr[..., j - 1]
            grad[..., i - 1] = partial
        return grad

    def spec_string(self) -> str:
        return "product:" + ",".join(str(i) for i in self.indices)


@dataclass(frozen=True)
class Staircase(TargetFunction):
    """h1 + h1*h2 + ... + h1*h2*...*h_depth."""

    depth: int
    declared_leap: int | None = None
    k: int = field(init=False)

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        object.__setattr__(self, "k", self.depth)

    def evaluate(self, h: np.ndarray) -> np.ndarray:
        arr = _check_last_axis(h, self.k)
        out = arr[..., 0].copy()
        partial = arr[..., 0].copy()
        for j in range(1, self.depth):
            partial = partial * arr[..., j]
            out = out + partial
        return out

    def gradient(self, h: np.ndarray) -> np.ndarray:
        arr = _check_last_axis(h, self.k)
        grad = np.zeros_like(arr)
        # d/dh_i of the j-th partial product (j >= i) is the product of
        # the other coordinates up to j; accumulate term by term.
        for j in range(self.depth):
            for i in range(j + 1):
                term = np.ones(arr.shape[:-1])
                for l in range(j + 1):
                    if l != i:
                        term = term * arr[..., l]
                grad[..., i] += term
        return grad

    def decompose(self) -> "Sum":
        """Equivalent sum of products over the shared leading coordinates."""
        terms = tuple(
            Product(tuple(range(1, j + 1))) for j in range(1, self.depth + 1)
        )
        blocks = tuple(tuple(range(1, j + 1)) for j in range(1, self.depth + 1))
        return Sum(terms, blocks, allow_overlap=True)

    def spec_string(self) -> str:
        return f"staircase:{self.depth}"


@dataclass(frozen=True)
class Committee(TargetFunction):
    """Sum of one scalar link applied to each of k coordinates."""

    sigma: ScalarFunction
    k_members: int
    declared_leap: int | None = None
    k: int = field(init=False)

    def __post_init__(self) -> None:
        if self.k_members < 1:
            raise ValueError(f"committee needs k >= 1, got {self.k_members}")
        object.__setattr__(self, "k", self.k_members)

    def evaluate(self, h: np.ndarray) -> np.ndarray:
        arr = _check_last_axis(h, self.k)
        return np.asarray(self.sigma.f(arr), dtype=float).sum(axis=-1)

    def gradient(self, h: np.ndarray) -> np.ndarray:
        arr = _check_last_axis(h, self.k)
        return np.asarray(self.sigma.df(arr), dtype=float)

    def spec_string(self) -> str:
        return f"committee:{self.sigma.name},k={self.k}"


@dataclass(frozen=True)
class Sum(TargetFunction):
    """Sum of component targets placed on blocks of parent coordinates.

    blocks[i] lists the 1-based parent coordinates seen by terms[i] (in
    order, length terms[i].k).  Blocks must be pairwise disjoint unless
    allow_overlap is set (used internally to express a staircase as a sum
    of products over shared coordinates).
    """

    terms: tuple[TargetFunction, ...]
    blocks: tuple[tuple[int, ...], ...]
    declared_leap: int | None = None
    allow_overlap: bool = False
    k: int = field(init=False)

    def __post_init__(self) -> None:
        if len(self.terms) == 0 or len(self.terms) != len(self.blocks):
            raise ValueError("need one coordinate block per term")
        seen: set[int] = set()
        for term, block in zip(self.terms, self.blocks):
            if len(block) != term.k:
                raise ValueError(
                    f"block {block} has {len(block)} coordinates, term needs {term.k}"
                )
            if any(b < 1 for b in block) or len(set(block)) != len(block):
                raise ValueError(f"block coordinates must be distinct and >= 1: {block}")
            if not self.allow_overlap and seen & set(block):
                raise ValueError(f"blocks must be disjoint, {block} overlaps")
            seen |= set(block)
        object.__setattr__(self, "k", max(seen))

    def evaluate(self, h: np.ndarray) -> np.ndarray:
        arr = _check_last_axis(h, self.k)
        out = np.zeros(arr.shape[:-1])
        for term, block in zip(self.terms, self.blocks):
            cols = [b - 1 for b in block]
            out = out + term.evaluate(arr[..., cols])
        return out

    def gradient(self, h: np.ndarray) -> np.ndarray:
        arr = _check_last_axis(h, self.k)
        grad = np.zeros_like(arr)
        for term, block in zip(self.terms, self.blocks):
            cols = [b - 1 for b in block]
            grad[..., cols] += term.gradient(arr[..., cols])
        return grad

    def spec_string(self) -> str:
        parts = []
        for term, block in zip(self.terms, self.blocks):
            start = min(block)
            suffix = f"@{start}" if start != 1 else ""
            parts.append(term.spec_string() + suffix)
        return "sum(" + "; ".join(parts) + ")"


@dataclass(frozen=True)
class Teacher:
    """Frame of k orthogonal rows of norm sqrt(d); h = W z / sqrt(d)."""

    w: np.ndarray
    d: int

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or w.shape[1] != self.d:
            raise ValueError(f"teacher matrix must be (k, d), got {w.shape}")
        norms = np.linalg.norm(w, axis=1)
        if not np.all(np.abs(norms - np.sqrt(self.d)) < 1e-8 * np.sqrt(self.d)):
            raise ValueError("teacher rows must have norm sqrt(d)")
        gram = w @ w.T
        off = gram - np.diag(np.diag(gram))
        if np.max(np.abs(off)) > 1e-8 * self.d:
            raise ValueError("teacher rows must be orthogonal")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def k(self) -> int:
        return int(self.w.shape[0])

    def features(self, z: np.ndarray) -> np.ndarray:
        """Pre-activations h = W z / sqrt(d) for z of shape (..., d)."""
        z = np.asarray(z, dtype=float)
        return z @ self.w.T / np.sqrt(self.d)


def stream_rng(seed, tag: int) -> np.random.Generator:
    """Generator for one sampling domain of a user-facing integer seed.

    Different domains (teacher frames, datasets, inits, online samples)
    tag the same integer differently, so passing equal seeds to two
    functions never replays one Gaussian stream as the other; an aligned
    teacher-and-input draw would otherwise produce labels far in the
    tail.  SeedSequence objects are used as given (already decorrelated
    via spawning).
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence((int(seed), tag)))


_TEACHER_STREAM = 0x7EAC


def make_teacher(d: int, k: int, seed: int = 0, canonical: bool = False) -> Teacher:
    """Draw a teacher frame with exactly orthogonal rows of norm sqrt(d).

    canonical=True returns rows sqrt(d) * e_1..e_k, the frame under which
    closed-form direction computations are exact.  Otherwise a Gaussian
    matrix is orthogonalized by QR (deterministic in seed, column signs
    fixed so the factorization is unique).
    """
    if k < 1 or k > d:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
    if canonical:
        w = np.zeros((k, d))
        w[np.arange(k), np.arange(k)] = np.sqrt(d)
        return Teacher(w, d)
    rng = stream_rng(seed, _TEACHER_STREAM)
    raw = rng.standard_normal((d, k))
    q, r = np.linalg.qr(raw)
    q = q * np.sign(np.diag(r))
    return Teacher(np.sqrt(d) * q.T, d)


def eval_target(t: TargetFunction, h_star) -> float | np.ndarray:
    """g(h) for a single pre-activation vector or a batch (..., k)."""
    arr = np.asarray(h_star, dtype=float)
    out = t.evaluate(arr)
    return float(out) if out.ndim == 0 else out


def eval_on_inputs(t: TargetFunction, teacher: Teacher, z: np.ndarray) -> np.ndarray:
    """f(z) = g(W z / sqrt(d)); teacher.k must equal t.k."""
    if teacher.k != t.k:
        raise ValueError(f"teacher has k={teacher.k}, target needs k={t.k}")
    return t.evaluate(teacher.features(z))


def information_exponent(
    t: TargetFunction,
    max_j: int = 10,
    tol: float = DEFAULT_IE_TOL,
    rule: QuadratureRule | None = None,
) -> int:
    """Smallest j >= 1 with E[g(xi) He_j(xi)] nonzero, single-index only.

    The tolerance is applied relative to the largest coefficient magnitude
    (floored at 1), which makes the result invariant under g -> c*g.
    Raises DegenerateTargetError when every coefficient up to max_j is
    below tolerance.
    """
    if not isinstance(t, SingleIndex):
        raise ValueError("information exponent is defined for single-index targets")
    if max_j < 1:
        raise ValueError(f"max_j must be >= 1, got {max_j}")
    nu = hermite_coefficients(t.g.f, max_j, rule or gauss_hermite_rule())
    threshold = tol * max(1.0, float(np.max(np.abs(nu))))
    for j in range(1, max_j + 1):
        if abs(nu[j]) > threshold:
            return j
    raise DegenerateTargetError(
        f"no Hermite coefficient above tolerance {tol} for j in 1..{max_j}"
    )


def parse_target(spec: str) -> TargetFunction:
    """Parse the textual target grammar.

    Forms: "single:NAME", "product:I,J,...", "staircase:DEPTH",
    "committee:NAME,k=K", and "sum(TERM; TERM; ...)" where each inner TERM
    uses one of the first four forms, optionally suffixed with "@S" to
    place its coordinate block starting at parent coordinate S.  Without a
    suffix the first term starts at coordinate 1 and later terms start
    right after the highest coordinate already used.
    """
    text = spec.strip()
    if text.lower().startswith("sum(") and text.endswith(")"):
        inner = text[4:-1]
        parts = [p.strip() for p in inner.split(";")]
        if any(not p for p in parts):
            raise ValueError(f"empty term in sum spec {spec!r}")
        terms: list[TargetFunction] = []
        blocks: list[tuple[int, ...]] = []
        next_start = 1
        for part in parts:
            at = part.rfind("@")
            if at >= 0:
                body, start_text = part[:at].strip(), part[at + 1 :].strip()
                try:
                    start = int(start_text)
                except ValueError:
                    raise ValueError(f"bad placement suffix in {part!r}") from None
            else:
                body, start = part, next_start
            term = _parse_simple(body)
            block = tuple(range(start, start + term.k))
            terms.append(term)
            blocks.append(block)
            next_start = max(next_start, start + term.k)
        return Sum(tuple(terms), tuple(blocks))
    return _parse_simple(text)


def _parse_simple(text: str) -> TargetFunction:
    head, sep, tail = text.partition(":")
    head = head.strip().lower()
    tail = tail.strip()
    if not sep:
        raise ValueError(f"cannot parse target spec {text!r}")
    if head == "single":
        return SingleIndex(get_scalar(tail))
    if head == "product":
        try:
            indices = tuple(int(p) for p in tail.split(","))
        except ValueError:
            raise ValueError(f"bad product indices in {text!r}") from None
        return Product(indices)
    if head == "staircase":
        try:
            return Staircase(int(tail))
        except ValueError:
            raise ValueError(f"bad staircase depth in {text!r}") from None
    if head == "committee":
        m = re.fullmatch(r"([a-z0-9_]+)\s*,\s*k\s*=\s*(\d+)", tail.lower())
        if not m:
            raise ValueError(f"committee spec must look like committee:he2,k=2: {text!r}")
        return Committee(get_scalar(m.group(1)), int(m.group(2)))
    raise ValueError(f"unknown target kind {head!r}")


def _with_leap(t: TargetFunction, leap: int) -> TargetFunction:
    # dataclasses are frozen; rebuild with the metadata attached
    import dataclasses

    return dataclasses.replace(t, declared_leap=leap)  # type: ignore[type-var]


def registry() -> dict[str, TargetFunction]:
    """Named targets used by the shipped experiment presets.

    Leap values are declared metadata taken at face value, not computed.
    """
    entries = {
        "tanh": ("single:tanh", 1),
        "he3": ("single:he3", 3),
        "he4": ("single:he4", 4),
        "staircase2": ("staircase:2", 1),
        "staircase3": ("staircase:3", 1),
        "linear_plus_he3": ("sum(single:id; single:he3@2)", 3),
        "committee_relu2": ("committee:relu,k=2", 1),
        "product123_plus_he3": ("sum(product:1,2,3; single:he3@4)", 3),
    }
    return {
        name: _with_leap(parse_target(spec), leap)
        for name, (spec, leap) in entries.items()
    }


def named_target(name: str) -> TargetFunction:
    """Fetch a registry target by name, or parse name as a grammar spec."""
    table = registry()
    key = name.strip().lower()
    if key in table:
        return table[key]
    return parse_target(name)
