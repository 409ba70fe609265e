import numpy as np
import pytest

from rampage import fields
from rampage.fields import (
    DimensionMismatchError,
    RegularityProfile,
    ball,
    box,
    build_rotational_game,
    contains,
    eval_field,
    gaussian_noise,
    exact_noise,
    hessian_quadratic_fd,
    jacobian_action_fd,
    project,
    sfo_sample,
    whole_space,
)
from rampage.sampling import RandomStream


def test_polynomial_roots_and_values():
    spec = fields.polynomial10()
    assert np.all(eval_field(spec, np.zeros(10)) == 0.0)
    assert np.all(eval_field(spec, np.ones(10)) == 0.0)
    # hand evaluation: 2 + 5*8 - 6*4 = 18
    assert np.allclose(eval_field(spec, np.full(10, 2.0)), 18.0, rtol=0, atol=0)


def test_polynomial_dimension_checked():
    spec = fields.polynomial10()
    with pytest.raises(DimensionMismatchError):
        eval_field(spec, np.zeros(9))


def test_eval_field_pure_and_deterministic():
    spec = fields.build_rotational_game()
    theta = np.linspace(-1, 1, 20)
    before = theta.copy()
    a = eval_field(spec, theta)
    b = eval_field(spec, theta)
    assert np.array_equal(a, b)
    assert np.array_equal(theta, before)


def test_rotational_game_layout():
    spec = build_rotational_game(10)
    assert spec.dimension == 20
    m = spec.matrix
    assert m[0, 1] == 2.0 and m[1, 0] == -2.0
    assert m[18, 19] == 8.0 and m[19, 18] == -8.0
    assert np.all(np.diag(m) == 0.1)
    assert spec.omega[0] == 15.0 and spec.omega[-1] == 45.0
    # per-pair frequency repeated across both coordinates of a block
    assert np.array_equal(spec.omega[::2], spec.omega[1::2])
    assert np.allclose(spec.sin_amplitude, 0.005 * spec.omega)
    assert np.all(eval_field(spec, np.zeros(20)) == 0.0)


def test_rotational_game_single_block_degenerates_to_lower_endpoints():
    spec = build_rotational_game(1)
    assert np.array_equal(spec.matrix, [[0.1, 2.0], [-2.0, 0.1]])
    assert np.all(spec.omega == 15.0)


def test_game2d_formula():
    spec = fields.game2d()
    assert np.all(eval_field(spec, np.zeros(2)) == 0.0)
    theta = np.array([0.3, -0.7])
    expect = np.array([-theta[1], theta[0]]) + 0.04 * np.sin(25.0 * theta)
    assert np.allclose(eval_field(spec, theta), expect, rtol=0, atol=0)


def test_bilinear_game_blocks():
    a = np.array([[1.0, 2.0], [0.0, 1.0]])
    spec = fields.bilinear_game(a)
    x = np.array([1.0, -1.0])
    z = np.array([0.5, 2.0])
    out = eval_field(spec, np.concatenate([x, z]))
    assert np.allclose(out[:2], a @ z)
    assert np.allclose(out[2:], -(a.T @ x))


def test_batch_evaluation_matches_rows():
    for spec in (fields.polynomial10(), fields.game2d(), fields.bilinear_game([[1.0]]),
                 fields.quadratic_field(np.diag([1.0, 2.0]))):
        rng = RandomStream(5)
        batch = rng.normal((7, spec.dimension))
        stacked = eval_field(spec, batch)
        for i in range(7):
            assert np.allclose(stacked[i], eval_field(spec, batch[i]), rtol=1e-14, atol=1e-14)


def test_profile_cocoercivity_requires_consistent_lipschitz():
    RegularityProfile(lipschitz=1.0, cocoercivity=1.0)  # boundary case is legal
    with pytest.raises(ValueError):
        RegularityProfile(lipschitz=3.0, cocoercivity=1.0)
    with pytest.raises(ValueError):
        RegularityProfile(cocoercivity=1.0)


def test_affine_profile_matches_power_iteration():
    rng = np.random.default_rng(11)
    a = rng.normal(size=(6, 6))
    spec = fields.affine_field(a)
    # independent oracle: power iteration on A^T A
    v = rng.normal(size=6)
    for _ in range(10_000):
        v = a.T @ (a @ v)
        v /= np.linalg.norm(v)
    sigma = np.linalg.norm(a @ v)
    assert abs(spec.profile.lipschitz - sigma) < 1e-6


def test_projection_examples():
    assert np.array_equal(project(whole_space(), np.array([3.0, -4.0])), [3.0, -4.0])
    got = project(ball(np.zeros(2), 1.0), np.array([2.0, 0.0]))
    assert np.allclose(got, [1.0, 0.0], rtol=0, atol=1e-15)
    got = project(box([-1.0, -1.0], [1.0, 1.0]), np.array([2.0, 0.5]))
    assert np.array_equal(got, [1.0, 0.5])


def test_projection_idempotent_and_nonexpansive():
    rng = np.random.default_rng(3)
    sets = [whole_space(), box(-np.ones(4), np.ones(4)), ball(np.zeros(4), 0.7)]
    for fset in sets:
        for _ in range(200):
            a = rng.normal(scale=3.0, size=4)
            b = rng.normal(scale=3.0, size=4)
            pa, pb = project(fset, a), project(fset, b)
            assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12
            assert np.allclose(project(fset, pa), pa, rtol=0, atol=1e-14)
            assert contains(fset, pa)


def test_box_bounds_validated():
    with pytest.raises(ValueError):
        box([1.0, 0.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        ball(np.zeros(2), 0.0)


def test_sfo_exact_is_bit_identical():
    spec = fields.game2d()
    theta = np.array([0.2, 0.9])
    rng = RandomStream(0)
    assert np.array_equal(sfo_sample(spec, exact_noise(), theta, rng),
                          eval_field(spec, theta))


def test_sfo_gaussian_moments():
    """Monte Carlo oracle: empirical mean within 4 SE, total variance sigma^2 +- 10%."""
    spec = fields.polynomial10()
    theta = np.full(10, 0.5)
    sigma = 0.1
    rng = RandomStream(123)
    n = 100_000
    draws = np.stack([sfo_sample(spec, gaussian_noise(sigma), theta, rng)
                      for _ in range(200)])
    # vectorized draw for the big sample: same construction as sfo_sample
    base = eval_field(spec, theta)
    noise = (sigma / np.sqrt(10)) * rng.normal((n, 10))
    big = base[None, :] + noise
    se = sigma / np.sqrt(10) / np.sqrt(n)
    assert np.all(np.abs(big.mean(axis=0) - base) < 4 * se)
    total_var = big.var(axis=0, ddof=1).sum()
    assert abs(total_var - sigma**2) < 0.1 * sigma**2
    assert np.all(np.abs(draws.mean(axis=0) - base) < 4 * sigma / np.sqrt(10 * 200))


def test_jacobian_action_affine_exact():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(5, 5))
    spec = fields.affine_field(a, offset=rng.normal(size=5))
    theta = rng.normal(size=5)
    v = rng.normal(size=5)
    for h in (1e-6, 1e-4, 1e-3):
        got = jacobian_action_fd(spec, theta, v, h)
        assert np.linalg.norm(got - a @ v) <= 1e-10 * np.linalg.norm(a @ v)


def test_jacobian_action_polynomial():
    # d/dt of the cubic is 1 + 15 t^2 - 12 t = 4 at t = 1
    spec = fields.polynomial10()
    e1 = np.eye(10)[0]
    got = jacobian_action_fd(spec, np.ones(10), e1)
    assert abs(got[0] - 4.0) < 1e-6
    assert np.all(got[1:] == 0.0)
    assert np.all(jacobian_action_fd(spec, np.ones(10), np.zeros(10)) == 0.0)


def test_hessian_quadratic_oracles():
    spec = fields.polynomial10()
    got = hessian_quadratic_fd(spec, np.zeros(10), np.ones(10))
    # second derivative of the cubic is 30 t - 12 = -12 at t = 0
    assert np.allclose(got, -12.0, atol=1e-5)
    affine = fields.affine_field(np.eye(3))
    assert np.allclose(hessian_quadratic_fd(affine, np.ones(3), np.ones(3)), 0.0, atol=1e-8)


def test_estimate_profile_flagged():
    spec = fields.game2d()
    prof = fields.estimate_profile(spec, RandomStream(1), samples=256)
    assert prof.estimated
    # analytic bound: |M| + 0.04 * 25 = 2
    assert 0.5 < prof.lipschitz <= 2.0 + 1e-9


def test_field_serialization_round_trip():
    for spec in (fields.polynomial10(), fields.build_rotational_game(3), fields.game2d(),
                 fields.affine_field(np.array([[1.0, 2.0], [3.0, 4.0]]), offset=[0.5, -1.0]),
                 fields.bilinear_game([[2.0]]),
                 fields.quadratic_field(np.diag([1.0, 3.0]))):
        back = fields.field_from_dict(fields.field_to_dict(spec))
        assert back.kind == spec.kind and back.dimension == spec.dimension
        theta = np.linspace(0.1, 0.9, spec.dimension)
        assert np.array_equal(eval_field(back, theta), eval_field(spec, theta))


def test_custom_field_not_serializable():
    spec = fields.custom_field(lambda t: t, 2)
    with pytest.raises(ValueError):
        fields.field_to_dict(spec)


def test_default_initial_points():
    assert np.all(fields.default_initial_point(fields.polynomial10()) == 0.4)
    assert np.all(fields.default_initial_point(fields.game2d()) == 1.0)
    assert np.all(fields.default_initial_point(fields.build_rotational_game()) == 1.0)
