"""Vector-field zoo, regularity metadata, feasible sets, and derivative oracles.

Every field evaluation broadcasts over a leading batch axis: ``theta`` may be a
single point of shape ``(p,)`` or a stack of points of shape ``(n, p)``; the
result has the same shape. Custom evaluation rules registered through
:func:`custom_field` must follow the same convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

Vector = np.ndarray


class DimensionMismatchError(ValueError):
    """Input dimension does not match the field or set it is applied to."""


def _frozen(a) -> Optional[np.ndarray]:
    if a is None:
        return None
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RegularityProfile:
    """Regularity constants of an operator; ``None`` means unknown.

    ``estimated`` marks constants obtained from sampled difference quotients
    rather than supplied or derived exactly.
    """

    lipschitz: Optional[float] = None
    cocoercivity: Optional[float] = None
    cohypomonotonicity: Optional[float] = None
    l0: Optional[float] = None
    l1: Optional[float] = None
    alpha: Optional[float] = None
    estimated: bool = False

    def __post_init__(self):
        for name in ("lipschitz", "cohypomonotonicity", "l0", "l1"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise ValueError(f"{name} must be nonnegative, got {val}")
        if self.cocoercivity is not None:
            if self.cocoercivity <= 0:
                raise ValueError("cocoercivity must be positive when known")
            if self.lipschitz is None:
                raise ValueError("a co-coercive profile must declare a Lipschitz constant")
            # A mu-co-coercive operator is 1/mu-Lipschitz, so L <= 1/mu.
            if self.lipschitz > 1.0 / self.cocoercivity * (1.0 + 1e-12):
                raise ValueError(
                    f"co-coercivity {self.cocoercivity} requires lipschitz <= "
                    f"{1.0 / self.cocoercivity}, got {self.lipschitz}"
                )
        if self.alpha is not None and not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")


POLYNOMIAL10 = "polynomial10"
ROTATIONAL_GAME = "rotational_game"
GAME_2D = "game2d"
AFFINE = "affine"
BILINEAR_GAME = "bilinear_game"
QUADRATIC = "quadratic"
CUSTOM = "custom"

FIELD_KINDS = (POLYNOMIAL10, ROTATIONAL_GAME, GAME_2D, AFFINE, BILINEAR_GAME, QUADRATIC, CUSTOM)


@dataclass(frozen=True)
class FieldSpec:
    """Declarative description of a vector field F together with its regularity profile.

    Payload fields are kind-specific: ``matrix``/``offset`` for affine maps and the
    linear part of the sinusoidal games, ``omega``/``sin_amplitude`` for the games,
    ``coupling`` for bilinear games (the first block of the state is the min
    variable, the second the max variable), ``rule`` for custom fields.
    """

    kind: str
    dimension: int
    profile: RegularityProfile = field(default_factory=RegularityProfile)
    matrix: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = None
    coupling: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None
    sin_amplitude: Optional[np.ndarray] = None
    rule: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        object.__setattr__(self, "offset", _frozen(self.offset))
        object.__setattr__(self, "coupling", _frozen(self.coupling))
        object.__setattr__(self, "omega", _frozen(self.omega))
        object.__setattr__(self, "sin_amplitude", _frozen(self.sin_amplitude))
        p = self.dimension
        if self.kind == POLYNOMIAL10 and p != 10:
            raise ValueError("polynomial10 is 10-dimensional")
        if self.kind == GAME_2D and p != 2:
            raise ValueError("game2d is 2-dimensional")
        if self.kind in (AFFINE, QUADRATIC):
            if self.matrix is None or self.matrix.shape != (p, p):
                raise DimensionMismatchError(f"{self.kind} needs a ({p}, {p}) matrix")
            if self.kind == QUADRATIC and not np.allclose(self.matrix, self.matrix.T):
                raise ValueError("quadratic field matrix must be symmetric")
            if self.offset is not None and self.offset.shape != (p,):
                raise DimensionMismatchError("offset length must equal the dimension")
        if self.kind in (ROTATIONAL_GAME, GAME_2D):
            if self.matrix is None or self.matrix.shape != (p, p):
                raise DimensionMismatchError("game needs its linear part as a (p, p) matrix")
            if self.omega is None or self.omega.shape != (p,):
                raise DimensionMismatchError("game needs per-coordinate frequencies")
            if self.sin_amplitude is None or self.sin_amplitude.shape != (p,):
                raise DimensionMismatchError("game needs per-coordinate sin amplitudes")
        if self.kind == BILINEAR_GAME:
            if self.coupling is None or self.coupling.ndim != 2:
                raise DimensionMismatchError("bilinear game needs a coupling matrix")
            if sum(self.coupling.shape) != p:
                raise DimensionMismatchError(
                    f"coupling shape {self.coupling.shape} does not split dimension {p}"
                )
        if self.kind == CUSTOM and self.rule is None:
            raise ValueError("custom field needs an evaluation rule")


def polynomial10(profile: Optional[RegularityProfile] = None) -> FieldSpec:
    """Componentwise conservative cubic field on R^10 with roots at 0, 0.2, and 1."""
    return FieldSpec(kind=POLYNOMIAL10, dimension=10, profile=profile or RegularityProfile())


def build_rotational_game(num_blocks: int = 10,
                          profile: Optional[RegularityProfile] = None) -> FieldSpec:
    """High-frequency rotational game on R^(2*num_blocks).

    The linear part is block diagonal with 2x2 rotation-plus-damping blocks
    [[0.1, beta_i], [-beta_i, 0.1]]; beta_i is linearly spaced on [2, 8] and the
    per-pair frequencies omega_i on [15, 45], both endpoints included (a single
    block degenerates to the lower endpoints). The sinusoidal perturbation has
    componentwise amplitude 0.005 * omega.
    """
    if num_blocks < 1:
        raise ValueError("num_blocks must be >= 1")
    p = 2 * num_blocks
    betas = np.linspace(2.0, 8.0, num_blocks)
    omega_pairs = np.linspace(15.0, 45.0, num_blocks)
    m = np.zeros((p, p))
    for i, beta in enumerate(betas):
        j = 2 * i
        m[j, j] = 0.1
        m[j + 1, j + 1] = 0.1
        m[j, j + 1] = beta
        m[j + 1, j] = -beta
    omega = np.repeat(omega_pairs, 2)
    return FieldSpec(
        kind=ROTATIONAL_GAME,
        dimension=p,
        profile=profile or RegularityProfile(),
        matrix=m,
        omega=omega,
        sin_amplitude=0.005 * omega,
    )


def game2d(omega: float = 25.0, profile: Optional[RegularityProfile] = None) -> FieldSpec:
    """2d rotational game: pure rotation plus 0.04*sin(omega*theta) componentwise."""
    m = np.array([[0.0, -1.0], [1.0, 0.0]])
    w = np.full(2, float(omega))
    return FieldSpec(
        kind=GAME_2D,
        dimension=2,
        profile=profile or RegularityProfile(),
        matrix=m,
        omega=w,
        sin_amplitude=np.full(2, 0.04),
    )


def affine_field(matrix, offset=None, profile: Optional[RegularityProfile] = None) -> FieldSpec:
    matrix = np.asarray(matrix, dtype=float)
    if profile is None:
        lip = float(np.linalg.norm(matrix, 2))
        profile = RegularityProfile(lipschitz=lip)
    return FieldSpec(kind=AFFINE, dimension=matrix.shape[0], profile=profile,
                     matrix=matrix, offset=offset)


def identity_field(dimension: int, profile: Optional[RegularityProfile] = None) -> FieldSpec:
    """F(theta) = theta; Lipschitz and co-coercive with L = mu = 1."""
    if profile is None:
        profile = RegularityProfile(lipschitz=1.0, cocoercivity=1.0)
    return affine_field(np.eye(dimension), profile=profile)


def quadratic_field(hessian, profile: Optional[RegularityProfile] = None) -> FieldSpec:
    hessian = np.asarray(hessian, dtype=float)
    if profile is None:
        profile = RegularityProfile(lipschitz=float(np.linalg.norm(hessian, 2)))
    return FieldSpec(kind=QUADRATIC, dimension=hessian.shape[0], profile=profile, matrix=hessian)


def bilinear_game(coupling, profile: Optional[RegularityProfile] = None) -> FieldSpec:
    """Monotone game field of f(x, z) = x' A z: F(x, z) = (A z, -A' x)."""
    coupling = np.atleast_2d(np.asarray(coupling, dtype=float))
    if profile is None:
        profile = RegularityProfile(lipschitz=float(np.linalg.norm(coupling, 2)))
    return FieldSpec(kind=BILINEAR_GAME, dimension=sum(coupling.shape),
                     profile=profile, coupling=coupling)


def custom_field(rule: Callable[[np.ndarray], np.ndarray], dimension: int,
                 profile: Optional[RegularityProfile] = None) -> FieldSpec:
    return FieldSpec(kind=CUSTOM, dimension=dimension,
                     profile=profile or RegularityProfile(), rule=rule)


def eval_field(spec: FieldSpec, theta) -> np.ndarray:
    """Evaluate F(theta) exactly per the field kind's closed form. Pure."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != spec.dimension:
        raise DimensionMismatchError(
            f"state dimension {theta.shape[-1]} != field dimension {spec.dimension}"
        )
    kind = spec.kind
    if kind == POLYNOMIAL10:
        return theta + 5.0 * theta**3 - 6.0 * theta**2
    if kind in (ROTATIONAL_GAME, GAME_2D):
        return theta @ spec.matrix.T + spec.sin_amplitude * np.sin(spec.omega * theta)
    if kind == AFFINE:
        out = theta @ spec.matrix.T
        if spec.offset is not None:
            out = out + spec.offset
        return out
    if kind == QUADRATIC:
        return theta @ spec.matrix.T
    if kind == BILINEAR_GAME:
        n, m = spec.coupling.shape
        x = theta[..., :n]
        z = theta[..., n:]
        return np.concatenate([z @ spec.coupling.T, -(x @ spec.coupling)], axis=-1)
    out = np.asarray(spec.rule(theta), dtype=float)
    if out.shape != theta.shape:
        raise DimensionMismatchError("custom rule returned a mismatched shape")
    return out


# -- feasible sets ------------------------------------------------------------

WHOLE_SPACE = "whole_space"
BOX = "box"
BALL = "ball"


@dataclass(frozen=True)
class FeasibleSet:
    kind: str
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "lower", _frozen(self.lower))
        object.__setattr__(self, "upper", _frozen(self.upper))
        object.__setattr__(self, "center", _frozen(self.center))
        if self.kind == BOX:
            if self.lower is None or self.upper is None:
                raise ValueError("box needs lower and upper bounds")
            if self.lower.shape != self.upper.shape:
                raise DimensionMismatchError("box bounds must have equal length")
            if np.any(self.lower > self.upper):
                raise ValueError("box bounds must satisfy lower <= upper componentwise")
        elif self.kind == BALL:
            if self.center is None or self.radius is None or self.radius <= 0:
                raise ValueError("ball needs a center and a positive radius")
        elif self.kind != WHOLE_SPACE:
            raise ValueError(f"unknown feasible set kind {self.kind!r}")


def whole_space() -> FeasibleSet:
    return FeasibleSet(kind=WHOLE_SPACE)


def box(lower, upper) -> FeasibleSet:
    return FeasibleSet(kind=BOX, lower=lower, upper=upper)


def ball(center, radius: float) -> FeasibleSet:
    return FeasibleSet(kind=BALL, center=center, radius=float(radius))


def project(fset: FeasibleSet, theta) -> np.ndarray:
    """Euclidean projection onto the feasible set; idempotent and nonexpansive."""
    theta = np.asarray(theta, dtype=float)
    if fset.kind == WHOLE_SPACE:
        return theta
    if fset.kind == BOX:
        if theta.shape[-1] != fset.lower.shape[0]:
            raise DimensionMismatchError("state and box dimensions differ")
        return np.clip(theta, fset.lower, fset.upper)
    if theta.shape[-1] != fset.center.shape[0]:
        raise DimensionMismatchError("state and ball dimensions differ")
    d = theta - fset.center
    norm = np.linalg.norm(d, axis=-1, keepdims=True)
    scale = np.ones_like(norm)
    outside = norm > fset.radius
    np.divide(fset.radius, norm, out=scale, where=outside)
    return fset.center + d * scale


def contains(fset: FeasibleSet, theta, tol: float = 1e-12) -> np.ndarray:
    """Set membership up to ``tol``; broadcasts like :func:`project`."""
    theta = np.asarray(theta, dtype=float)
    if fset.kind == WHOLE_SPACE:
        return np.ones(theta.shape[:-1], dtype=bool)
    if fset.kind == BOX:
        return np.all((theta >= fset.lower - tol) & (theta <= fset.upper + tol), axis=-1)
    return np.linalg.norm(theta - fset.center, axis=-1) <= fset.radius + tol


# -- stochastic first-order oracle --------------------------------------------

EXACT = "exact"
GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class NoiseModel:
    """Oracle noise; Gaussian noise is isotropic with per-coordinate variance
    sigma^2 / p so the total second moment equals sigma^2."""

    kind: str = EXACT
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in (EXACT, GAUSSIAN):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


def exact_noise() -> NoiseModel:
    return NoiseModel(kind=EXACT)


def gaussian_noise(sigma: float) -> NoiseModel:
    return NoiseModel(kind=GAUSSIAN, sigma=float(sigma))


def sfo_sample(spec: FieldSpec, noise: NoiseModel, theta, rng) -> np.ndarray:
    """One unbiased oracle draw F(theta) + xi; exact noise returns F(theta) bit-identically."""
    value = eval_field(spec, theta)
    if noise.kind == EXACT or noise.sigma == 0.0:
        return value
    scale = noise.sigma / np.sqrt(spec.dimension)
    return value + scale * rng.normal(value.shape)


# -- finite-difference derivative oracles -------------------------------------

def default_fd_step(theta) -> float:
    """Default central-difference step 1e-4 * (1 + ||theta||)."""
    return 1e-4 * (1.0 + float(np.linalg.norm(np.asarray(theta, dtype=float), axis=-1).max()))


def jacobian_action_fd(spec: FieldSpec, theta, v, h: Optional[float] = None) -> np.ndarray:
    """Directional derivative J(theta) v by central differences, O(h^2) accurate."""
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    if h is None:
        h = default_fd_step(theta)
    if h <= 0:
        raise ValueError("h must be positive")
    return (eval_field(spec, theta + h * v) - eval_field(spec, theta - h * v)) / (2.0 * h)


def hessian_quadratic_fd(spec: FieldSpec, theta, v, h: Optional[float] = None) -> np.ndarray:
    """Quadratic curvature form H(theta)[v, v] by second central differences."""
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    if h is None:
        h = default_fd_step(theta)
    if h <= 0:
        raise ValueError("h must be positive")
    return (eval_field(spec, theta + h * v) - 2.0 * eval_field(spec, theta)
            + eval_field(spec, theta - h * v)) / (h * h)


def estimate_profile(spec: FieldSpec, rng, samples: int = 512, radius: float = 2.0,
                     center=None) -> RegularityProfile:
    """Estimate a Lipschitz constant from sampled difference quotients.

    The result is flagged ``estimated`` and is a lower bound on the true local
    constant over the sampled ball; nonlinear zoo fields have no certified
    global constants.
    """
    p = spec.dimension
    c = np.zeros(p) if center is None else np.asarray(center, dtype=float)
    a = c + radius * (2.0 * rng.uniform((samples, p)) - 1.0)
    b = c + radius * (2.0 * rng.uniform((samples, p)) - 1.0)
    num = np.linalg.norm(eval_field(spec, a) - eval_field(spec, b), axis=-1)
    den = np.linalg.norm(a - b, axis=-1)
    keep = den > 1e-12
    lip = float(np.max(num[keep] / den[keep]))
    return RegularityProfile(lipschitz=lip, estimated=True)


# -- serialization -------------------------------------------------------------

def _array_out(a):
    return None if a is None else np.asarray(a).tolist()


def profile_to_dict(profile: RegularityProfile) -> dict:
    return {
        "lipschitz": profile.lipschitz,
        "cocoercivity": profile.cocoercivity,
        "cohypomonotonicity": profile.cohypomonotonicity,
        "l0": profile.l0,
        "l1": profile.l1,
        "alpha": profile.alpha,
        "estimated": profile.estimated,
    }


def profile_from_dict(d: dict) -> RegularityProfile:
    return RegularityProfile(**{k: d.get(k) for k in
                                ("lipschitz", "cocoercivity", "cohypomonotonicity",
                                 "l0", "l1", "alpha")},
                             estimated=bool(d.get("estimated", False)))


def field_to_dict(spec: FieldSpec) -> dict:
    """Serialize a field spec; matrices become row-major nested lists."""
    if spec.kind == CUSTOM:
        raise ValueError("custom fields carry an opaque rule and cannot be serialized")
    return {
        "kind": spec.kind,
        "dimension": spec.dimension,
        "profile": profile_to_dict(spec.profile),
        "matrix": _array_out(spec.matrix),
        "offset": _array_out(spec.offset),
        "coupling": _array_out(spec.coupling),
        "omega": _array_out(spec.omega),
        "sin_amplitude": _array_out(spec.sin_amplitude),
    }


def field_from_dict(d: dict) -> FieldSpec:
    return FieldSpec(
        kind=d["kind"],
        dimension=int(d["dimension"]),
        profile=profile_from_dict(d.get("profile") or {}),
        matrix=d.get("matrix"),
        offset=d.get("offset"),
        coupling=d.get("coupling"),
        omega=d.get("omega"),
        sin_amplitude=d.get("sin_amplitude"),
    )


def feasible_set_to_dict(fset: FeasibleSet) -> dict:
    return {
        "kind": fset.kind,
        "lower": _array_out(fset.lower),
        "upper": _array_out(fset.upper),
        "center": _array_out(fset.center),
        "radius": fset.radius,
    }


def feasible_set_from_dict(d: dict) -> FeasibleSet:
    return FeasibleSet(kind=d["kind"], lower=d.get("lower"), upper=d.get("upper"),
                       center=d.get("center"), radius=d.get("radius"))


def noise_to_dict(noise: NoiseModel) -> dict:
    return {"kind": noise.kind, "sigma": noise.sigma}


def noise_from_dict(d: dict) -> NoiseModel:
    return NoiseModel(kind=d.get("kind", EXACT), sigma=float(d.get("sigma", 0.0)))


def default_initial_point(spec: FieldSpec) -> np.ndarray:
    """Benchmark initialization: 0.4 for the polynomial field (between its
    roots at 0.2 and 1, where curvature stresses the midpoint evaluation),
    all-ones for the rotational games, all-ones otherwise."""
    if spec.kind == POLYNOMIAL10:
        return np.full(spec.dimension, 0.4)
    return np.ones(spec.dimension)
