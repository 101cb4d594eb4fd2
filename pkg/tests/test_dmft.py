"""Mean-field integrators: kernels, process updates, and simulator agreement."""

from __future__ import annotations

import csv
import json
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from batchreuse.dmft import (
    ConditioningError,
    DmftConfig,
    DmftTrace,
    FORMULATIONS,
    KERNEL_MODES,
    _NoiseFactor,
    default_second_layer,
    dmft_integrate,
    estimate_kernels,
    loss_gradient,
    loss_hessian,
    one_pass_effective,
    step_preactivation,
)
from batchreuse.gdsim import BatchSchedule, TrainConfig, train
from batchreuse.hardness import Direction
from batchreuse.targets import (
    SingleIndex,
    gauss_hermite_rule,
    get_scalar,
    make_teacher,
    named_target,
)


def theory_cfg(**overrides):
    base = dict(
        alpha=3.0,
        eta=0.1,
        lam=0.0,
        p=1,
        k=1,
        steps=2,
        n_samples=20_000,
        seed=0,
    )
    base.update(overrides)
    return DmftConfig(**base)


RELU = get_scalar("relu")
TANH = get_scalar("tanh")


# ---------------------------------------------------------------- config


def test_config_validation():
    with pytest.raises(ValueError):
        theory_cfg(alpha=0.0)
    with pytest.raises(ValueError):
        theory_cfg(eta=-0.1)
    with pytest.raises(ValueError):
        theory_cfg(lam=-1e-9)
    with pytest.raises(ValueError):
        theory_cfg(p=3)
    with pytest.raises(ValueError):
        theory_cfg(k=0)
    with pytest.raises(ValueError):
        theory_cfg(steps=0)
    with pytest.raises(ValueError):
        theory_cfg(n_samples=999)
    with pytest.raises(ValueError):
        theory_cfg(p=8, steps=6)  # (steps + 1) * p above the cost ceiling
    with pytest.raises(ValueError):
        theory_cfg(kernel_mode="autodiff")
    with pytest.raises(ValueError):
        theory_cfg(formulation="three_process")
    assert theory_cfg(p=8, steps=6, cost_ceiling=64).p == 8
    assert set(KERNEL_MODES) == {"pathwise", "finite_difference"}
    assert set(FORMULATIONS) == {"single_process", "two_process"}


def test_input_validation():
    cfg = theory_cfg()
    with pytest.raises(ValueError):
        dmft_integrate(cfg, named_target("linear_plus_he3"), TANH)  # k mismatch
    with pytest.raises(ValueError):
        one_pass_effective(cfg, named_target("tanh"), TANH, a=np.ones(3))


def test_default_second_layer():
    assert np.array_equal(default_second_layer(1), np.ones(1))
    assert np.array_equal(default_second_layer(4), np.array([0.5, 0.5, -0.5, -0.5]))
    a = default_second_layer(6)
    assert a.sum() == pytest.approx(0.0)
    assert np.linalg.norm(a) == pytest.approx(1.0)


# ---------------------------------------------------------------- loss derivatives


def test_loss_gradient_symmetric_init_form():
    # With mirrored pre-activations the student output cancels, so the
    # gradient is exactly -y * a * sigma'(h).
    rng = np.random.default_rng(0)
    half = rng.standard_normal((50, 2))
    h = np.concatenate([half, half[:, ::-1]], axis=1)
    h_star = rng.standard_normal((50, 1))
    a = default_second_layer(4)
    target = named_target("tanh")
    y = target.evaluate(h_star)
    got = loss_gradient(h, h_star, target, TANH, a)
    expected = -y[:, None] * (a[None, :] * np.tanh(h) * 0 + a[None, :] * (1 - np.tanh(h) ** 2))
    assert np.allclose(got, expected, atol=1e-12)


def test_loss_gradient_zero_output_ignores_student():
    rng = np.random.default_rng(1)
    h = rng.standard_normal((40, 1))
    h_star = rng.standard_normal((40, 1))
    target = named_target("he3")
    got = loss_gradient(h, h_star, target, RELU, np.ones(1), zero_output=True)
    expected = -target.evaluate(h_star)[:, None] * (h > 0)
    assert np.allclose(got, expected)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_loss_gradient_matches_numeric_derivative(seed):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((6, 2))
    h_star = rng.standard_normal((6, 1))
    a = default_second_layer(2)
    target = named_target("tanh")
    y = target.evaluate(h_star)

    def loss(hh):
        return 0.5 * (y - np.tanh(hh) @ a) ** 2

    grad = loss_gradient(h, h_star, target, TANH, a)
    eps = 1e-6
    for j in range(2):
        bump = np.zeros(2)
        bump[j] = eps
        numeric = (loss(h + bump) - loss(h - bump)) / (2 * eps)
        assert np.allclose(grad[:, j], numeric, atol=1e-6)


def test_loss_hessian_matches_gradient_differences():
    rng = np.random.default_rng(2)
    h = rng.standard_normal((5, 2))
    h_star = rng.standard_normal((5, 1))
    a = default_second_layer(2)
    target = named_target("he3")
    hess = loss_hessian(h, h_star, target, TANH, a)
    eps = 1e-6
    for j in range(2):
        bump = np.zeros(2)
        bump[j] = eps
        numeric = (
            loss_gradient(h + bump, h_star, target, TANH, a)
            - loss_gradient(h - bump, h_star, target, TANH, a)
        ) / (2 * eps)
        assert np.allclose(hess[:, :, j], numeric, atol=1e-5)


def test_loss_hessian_requires_pointwise_second_derivative():
    rng = np.random.default_rng(3)
    h = rng.standard_normal((4, 1))
    h_star = rng.standard_normal((4, 1))
    with pytest.raises(ValueError, match="second derivative"):
        loss_hessian(h, h_star, named_target("he3"), RELU, np.ones(1), zero_output=True)


# ---------------------------------------------------------------- process step


def test_step_preactivation_first_step_is_pure_gradient():
    # One step from init: the newest gradient enters with coefficient
    # exactly -eta and the teacher drive is added through m_next.
    rng = np.random.default_rng(4)
    r = rng.standard_normal((30, 2))
    g0 = rng.standard_normal((30, 2))
    h_star = rng.standard_normal((30, 1))
    m1 = np.array([[0.3], [-0.3]])
    r1, h1 = step_preactivation(r, [g0], [], None, m1, h_star, eta=0.1)
    assert np.allclose(r1, r - 0.1 * g0, atol=1e-15)
    assert np.allclose(h1, r1 + h_star @ m1.T, atol=1e-15)


def test_step_preactivation_memory_and_decay():
    rng = np.random.default_rng(5)
    r = rng.standard_normal((10, 2))
    g0, g1 = rng.standard_normal((2, 10, 2))
    zeta = rng.standard_normal((10, 2))
    kernel = rng.standard_normal((2, 2))
    m2 = np.zeros((2, 1))
    h_star = rng.standard_normal((10, 1))
    r2, _ = step_preactivation(r, [g0, g1], [kernel], zeta, m2, h_star, eta=0.2, lam=0.5)
    expected = (1 - 0.2 * 0.5) * r - 0.2 * (g1 + g0 @ kernel.T + zeta)
    assert np.allclose(r2, expected, atol=1e-14)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_step_preactivation_replicas_independent(seed):
    # Swapping two replicas everywhere swaps the outputs bit for bit:
    # nothing couples replicas inside the update.
    rng = np.random.default_rng(seed)
    r = rng.standard_normal((2, 3))
    g0, g1 = rng.standard_normal((2, 2, 3))
    zeta = rng.standard_normal((2, 3))
    kernel = rng.standard_normal((3, 3))
    m2 = rng.standard_normal((3, 2))
    h_star = rng.standard_normal((2, 2))
    flip = np.array([1, 0])
    r2, h2 = step_preactivation(r, [g0, g1], [kernel], zeta, m2, h_star, eta=0.3, lam=0.1)
    r2s, h2s = step_preactivation(
        r[flip], [g0[flip], g1[flip]], [kernel], zeta[flip], m2, h_star[flip], eta=0.3, lam=0.1
    )
    assert np.array_equal(r2s, r2[flip])
    assert np.array_equal(h2s, h2[flip])


# ---------------------------------------------------------------- noise factor


def test_noise_factor_matches_dense_cholesky():
    rng = np.random.default_rng(6)
    raw = rng.standard_normal((6, 6))
    cov = raw @ raw.T + 0.5 * np.eye(6)
    factor = _NoiseFactor(2, jitter=0.0)
    for t in range(3):
        factor.extend(cov[2 * t : 2 * t + 2, : 2 * t + 2])
    dense = np.linalg.cholesky(cov)
    assert np.allclose(factor.L, dense, atol=1e-10)


def test_noise_factor_jitter_rescues_singular_blocks():
    cov = np.ones((2, 2))  # rank one, exactly singular
    factor = _NoiseFactor(1)
    factor.extend(cov[:1, :1])
    factor.extend(cov[1:, :])
    assert factor.L.shape == (2, 2)


def test_noise_factor_conditioning_error():
    factor = _NoiseFactor(1)
    with pytest.raises(ConditioningError, match="eigenvalues"):
        factor.extend(np.array([[-0.5]]))


# ---------------------------------------------------------------- anchors


def test_first_step_overlap_anchor_all_engines():
    # relu student on a linear single-index target, eta=0.1, alpha=3:
    # the first step overlap is eta * alpha * E[sigma'] = 0.15 exactly.
    target = SingleIndex(get_scalar("identity"))
    cfg = theory_cfg(steps=1, n_samples=100_000, kernel_mode="finite_difference")
    for engine in (dmft_integrate, one_pass_effective):
        tr = engine(cfg, target, RELU)
        err = max(4 * tr.m_std_error[1, 0, 0], 1e-3)
        assert abs(tr.m[1, 0, 0] - 0.15) <= err, (engine.__name__, tr.m[1, 0, 0])
        assert tr.g[0, 0, 0] == pytest.approx(-1.5, abs=err / cfg.eta)
        assert tr.teacher_drive[0, 0, 0] == pytest.approx(-1.5, abs=err / cfg.eta)
    tr2 = dmft_integrate(
        theory_cfg(steps=1, n_samples=100_000, kernel_mode="finite_difference",
                   formulation="two_process"),
        target,
        RELU,
    )
    assert abs(tr2.m[1, 0, 0] - 0.15) <= max(4 * tr2.m_std_error[1, 0, 0], 1e-3)
    # At t=0 the teacher sensitivity is purely explicit, so the Stein
    # estimate must coincide with the explicit drive.
    assert np.allclose(tr2.g[0], tr2.teacher_drive[0], atol=1e-12)


def test_initial_curvature_kernel_tanh_pair():
    # Mirrored init with f = 0: Lambda^(0) = alpha * E[sech^4] * a a^T
    # entrywise, the curvature term dropping since y is independent of h.
    target = named_target("tanh")
    cfg = theory_cfg(p=2, steps=1, n_samples=100_000, seed=1)
    tr = dmft_integrate(cfg, target, TANH)
    rule = gauss_hermite_rule(240)
    sech4 = float(np.sum(rule.weights * (1 - np.tanh(rule.nodes) ** 2) ** 2))
    assert sech4 == pytest.approx(0.4644029024, abs=1e-9)
    a = default_second_layer(2)
    assert np.allclose(tr.lam[0], 3.0 * sech4 * np.outer(a, a), atol=0.02)


# ---------------------------------------------------------------- structure


def test_trace_structure_and_causality():
    target = named_target("he3")
    cfg = theory_cfg(p=2, steps=3, lam=0.5, seed=2)
    tr = dmft_integrate(cfg, target, TANH)
    assert np.array_equal(tr.m[0], np.zeros((2, 1)))
    for t in range(4):
        assert np.array_equal(tr.r_ell[t, t], np.zeros((2, 2)))
        assert np.array_equal(tr.r_theta[t, t], np.eye(2))
        for s in range(t + 1, 4):
            assert np.array_equal(tr.r_ell[t, s], np.zeros((2, 2)))
            assert np.array_equal(tr.r_theta[t, s], np.zeros((2, 2)))
    # adjacent propagator carries only the weight decay factor
    for t in range(3):
        assert np.allclose(tr.r_theta[t + 1, t], (1 - 0.1 * 0.5) * np.eye(2), atol=1e-14)
    # adjacent response kernel is the instantaneous curvature
    for t in range(1, 4):
        assert np.allclose(tr.r_ell[t, t - 1], tr.lam[t], atol=1e-12)


def test_update_identity_and_error_propagation():
    target = named_target("tanh")
    cfg = theory_cfg(steps=3, lam=0.3, seed=3)
    tr = dmft_integrate(cfg, target, RELU, a=np.ones(1))
    decay = 1 - cfg.eta * cfg.lam
    for t in range(3):
        assert np.allclose(tr.m[t + 1], decay * tr.m[t] - cfg.eta * tr.g[t], atol=1e-15)
        assert np.allclose(
            tr.m_std_error[t + 1],
            decay * tr.m_std_error[t] + cfg.eta * tr.g_std_error[t],
            atol=1e-15,
        )


def test_deterministic_in_seed():
    target = named_target("he3")
    cfg = theory_cfg(steps=2, seed=7)
    a = dmft_integrate(cfg, target, RELU)
    b = dmft_integrate(cfg, target, RELU)
    assert np.array_equal(a.m, b.m)
    assert np.array_equal(a.c_noise, b.c_noise)
    assert np.array_equal(a.r_ell, b.r_ell)
    c = dmft_integrate(theory_cfg(steps=2, seed=8), target, RELU)
    assert not np.array_equal(a.m, c.m)


def test_covariance_blocks_symmetric_and_psd():
    target = named_target("he3")
    cfg = theory_cfg(p=2, steps=3, seed=4, n_samples=30_000)
    tr = dmft_integrate(cfg, target, TANH)
    p, big_t = 2, 3
    for name, blocks in (("c_loss", tr.c_loss), ("c_noise", tr.c_noise)):
        stacked = np.zeros(((big_t + 1) * p, (big_t + 1) * p))
        for t in range(big_t + 1):
            for s in range(big_t + 1):
                assert np.allclose(blocks[t, s], blocks[s, t].T, atol=1e-12), name
                stacked[t * p : (t + 1) * p, s * p : (s + 1) * p] = blocks[t, s]
        min_eig = np.linalg.eigvalsh(0.5 * (stacked + stacked.T)).min()
        assert min_eig >= -1e-8, (name, min_eig)
    omega = tr.omega()
    assert np.linalg.eigvalsh(0.5 * (omega + omega.T)).min() >= -1e-8


# ---------------------------------------------------------------- parity nulls


def test_even_target_keeps_overlap_at_zero():
    target = named_target("he4")
    cfg = theory_cfg(steps=6, n_samples=100_000, kernel_mode="finite_difference", seed=2)
    with pytest.warns(RuntimeWarning):
        tr = dmft_integrate(cfg, target, RELU)
    assert np.all(np.abs(tr.m) <= 4 * tr.m_std_error + 1e-12)
    assert np.all(np.abs(tr.g) <= 4 * tr.g_std_error + 1e-12)


def test_one_pass_does_not_lift_high_information_exponent():
    target = named_target("he3")
    cfg = theory_cfg(steps=6, n_samples=100_000, seed=3)
    tr = one_pass_effective(cfg, target, RELU)
    assert np.all(np.abs(tr.m) <= 4 * tr.m_std_error + 1e-12)
    assert np.all(tr.r_ell == 0.0)


# ---------------------------------------------------------------- kernel modes


def test_relu_forces_finite_difference_with_warning():
    target = named_target("he3")
    cfg = theory_cfg(steps=2)
    with pytest.warns(RuntimeWarning, match="finite-difference"):
        tr = dmft_integrate(cfg, target, RELU)
    assert tr.kernel_mode == "finite_difference"


def test_noisy_replayed_kernel_warns_with_entry():
    target = named_target("he3")
    cfg = theory_cfg(steps=3, n_samples=2_000, kernel_mode="finite_difference", seed=5)
    with pytest.warns(RuntimeWarning, match=r"kernel entry \(\d+,\d+\)"):
        dmft_integrate(cfg, target, RELU)


def test_pathwise_and_replay_kernels_agree_for_smooth_link():
    target = named_target("he3")
    base = dict(p=2, k=1, steps=3, lam=0.05, n_samples=20_000, seed=0)
    tr_pw = dmft_integrate(theory_cfg(**base, kernel_mode="pathwise"), target, TANH)
    tr_fd = dmft_integrate(theory_cfg(**base, kernel_mode="finite_difference"), target, TANH)
    for t, s in [(2, 0), (3, 0), (3, 1)]:
        scale = np.abs(tr_pw.r_ell[t, s]).max()
        assert np.abs(tr_pw.r_ell[t, s] - tr_fd.r_ell[t, s]).max() <= 1e-2 * scale


def test_formulations_cross_validate():
    target = named_target("he3")
    base = dict(steps=3, n_samples=50_000, kernel_mode="finite_difference", seed=0)
    tr_s = dmft_integrate(theory_cfg(**base), target, RELU)
    tr_t = dmft_integrate(theory_cfg(**base, formulation="two_process"), target, RELU)
    tol = 4 * (tr_s.m_std_error + tr_t.m_std_error) + 1e-12
    assert np.all(np.abs(tr_s.m - tr_t.m) <= tol)
    assert tr_s.engine == "dmft_single_process"
    assert tr_t.engine == "dmft_two_process"


# ---------------------------------------------------------------- sim agreement


def _sim_trace(target, teacher_k, schedule, *, d=2000, p=1, steps=4, lam=0.0, seed=0):
    cfg = TrainConfig(
        d=d, alpha=3.0, p=p, eta=0.1, lam=lam, steps=steps,
        schedule=schedule, seed=seed, runs=16,
    )
    teacher = make_teacher(d, teacher_k, seed=seed)
    dirs = [Direction.axis(teacher_k, i + 1) for i in range(teacher_k)]
    return train(cfg, teacher, target, dirs)


def test_reuse_theory_tracks_simulation_he3():
    d = 2000
    target = named_target("he3")
    sim = _sim_trace(target, 1, BatchSchedule.full_batch_reuse(), d=d)
    cfg = theory_cfg(steps=4, n_samples=100_000, kernel_mode="finite_difference")
    theory = dmft_integrate(cfg, target, RELU)
    diff = np.abs(theory.m - sim.m_mean)
    tol = 4 * (theory.m_std_error + sim.m_std_error) + 0.5 / math.sqrt(d)
    assert np.all(diff <= tol), (diff.ravel(), tol.ravel())
    # the late-time signal is genuinely nonzero, so the match is informative
    assert abs(theory.m[4, 0, 0]) > 0.05


def test_reuse_theory_tracks_simulation_tanh():
    d = 2000
    target = named_target("tanh")
    sim = _sim_trace(target, 1, BatchSchedule.full_batch_reuse(), d=d)
    cfg = theory_cfg(steps=4, n_samples=100_000, kernel_mode="finite_difference")
    theory = dmft_integrate(cfg, target, RELU)
    diff = np.abs(theory.m - sim.m_mean)
    tol = 4 * (theory.m_std_error + sim.m_std_error) + 0.5 / math.sqrt(d)
    assert np.all(diff <= tol), (diff.ravel(), tol.ravel())
    assert theory.m[4, 0, 0] > 0.3


def test_one_pass_theory_tracks_fresh_simulation():
    d = 2000
    target = named_target("tanh")
    sim = _sim_trace(target, 1, BatchSchedule.fresh_one_pass(), d=d)
    cfg = theory_cfg(steps=4, n_samples=100_000)
    theory = one_pass_effective(cfg, target, RELU)
    diff = np.abs(theory.m - sim.m_mean)
    tol = 4 * (theory.m_std_error + sim.m_std_error) + 0.5 / math.sqrt(d)
    assert np.all(diff <= tol), (diff.ravel(), tol.ravel())


# ---------------------------------------------------------------- outputs


def test_overlap_projection_and_validation():
    target = named_target("staircase3")
    cfg = theory_cfg(p=2, k=3, steps=2, seed=1, kernel_mode="finite_difference")
    tr = dmft_integrate(cfg, target, RELU)
    u = Direction.axis(3, 1)
    value, bound = tr.overlap(u)
    assert value.shape == (3,)
    assert np.allclose(value, np.linalg.norm(tr.m @ u.coefficients, axis=1))
    assert np.all(bound >= 0)
    with pytest.raises(ValueError):
        tr.overlap(Direction.axis(2, 1))


def test_csv_schema_matches_simulator_with_empty_loss(tmp_path):
    target = named_target("tanh")
    cfg = theory_cfg(steps=2, n_samples=5_000)
    tr = dmft_integrate(cfg, target, RELU, a=np.ones(1))
    path = tmp_path / "theory.csv"
    tr.write_csv(path, [Direction.axis(1, 1)])
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "schedule", "direction_name", "overlap_mean", "overlap_std", "loss_mean"]
    assert len(rows) == 1 + 3
    value, bound = tr.overlap(Direction.axis(1, 1))
    for i, row in enumerate(rows[1:]):
        assert row[0] == str(i)
        assert row[1] == "dmft_single_process"
        assert row[2] == "e1"
        assert float(row[3]) == value[i]
        assert float(row[4]) == bound[i]
        assert row[5] == ""


def test_kernels_json_round_trip():
    target = named_target("tanh")
    cfg = theory_cfg(p=2, steps=2, n_samples=5_000, seed=6)
    tr = dmft_integrate(cfg, target, TANH)
    payload = json.loads(tr.kernels_json())
    assert payload["engine"] == "dmft_single_process"
    assert payload["kernel_mode"] == "pathwise"
    assert payload["n_samples"] == 5_000
    m = np.asarray(payload["m"])
    assert m.shape == (3, 2, 1)
    assert np.array_equal(m, tr.m)
    omega = np.asarray(payload["omega"])
    assert omega.shape == (6, 6)
    assert np.asarray(payload["r_ell"]).shape == (3, 3, 2, 2)


def test_estimate_kernels_standalone_slice():
    rng = np.random.default_rng(9)
    n = 40_000
    h = rng.standard_normal((n, 1))
    h_star = rng.standard_normal((n, 1))
    target = SingleIndex(get_scalar("identity"))
    grad = loss_gradient(h, h_star, target, TANH, np.ones(1), zero_output=True)
    est = estimate_kernels(h, h_star, [grad], target, TANH, np.ones(1), 3.0, zero_output=True)
    # g = -alpha E[y sigma'(h) h*] = -alpha E[h*^2] E[sigma'] with h independent
    rule = gauss_hermite_rule(200)
    mean_d = float(np.sum(rule.weights * (1 - np.tanh(rule.nodes) ** 2)))
    assert est["g"][0, 0] == pytest.approx(-3.0 * mean_d, abs=0.05)
    assert est["teacher_drive"][0, 0] == pytest.approx(-3.0 * mean_d, abs=0.05)
    assert est["c_loss_row"].shape == (1, 1, 1)
    assert est["r_ell_row"] is None


# ---------------------------------------------------------------- cost


def test_cost_stays_polynomial_in_steps():
    target = named_target("tanh")
    small = theory_cfg(steps=2, n_samples=5_000, seed=0)
    large = theory_cfg(steps=4, n_samples=5_000, seed=0)
    t0 = time.perf_counter()
    dmft_integrate(small, target, TANH)
    t_small = time.perf_counter() - t0
    t0 = time.perf_counter()
    dmft_integrate(large, target, TANH)
    t_large = time.perf_counter() - t0
    # doubling the horizon is at most ~T^4 work; generous wall-clock cap
    assert t_large <= 0.5 + 60 * max(t_small, 1e-3)
