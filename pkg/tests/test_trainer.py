import numpy as np
import pytest

from pdescl import bvp
from pdescl.errors import ConfigError, PdesclError, TrainingAborted
from pdescl.jets import MLP, ParamGradient
from pdescl.oracles import default_grid, exact_field, synthesize_observations
from pdescl.sampler import ProposalSpec, read_samples_csv, write_samples_csv
from pdescl.trainer import (
    Adam,
    Batch,
    ConstraintSpec,
    DualState,
    Observation,
    Problem,
    TrainConfig,
    draw_samples,
    dual_step,
    empirical_losses,
    pinn_baseline,
    predicted_operator_evals,
    primal_step,
    train,
)

SMALL = (12, 12)


def _conv_constraints(policy="mh", steps=40, keep=20, chains=4, tol=1e-3):
    pde = ConstraintSpec("pde", tolerance=tol, policy=policy, batch=30,
                         proposal=ProposalSpec((0.25, 0.01), steps, keep, chains) if policy == "mh" else None)
    return [ConstraintSpec("bc", role="objective"), pde]


def _small_problem(beta=5.0):
    return Problem.build(bvp.convection(beta), n_initial=32, n_face=10)


# -- dual and primal steps --------------------------------------------------------------


def test_dual_step_examples():
    d = DualState(("pde",), np.array([0.0]))
    assert dual_step(d, [1e-3], [1e-3], 1e-4).lambdas[0] == 0.0
    d = DualState(("pde",), np.array([0.5]))
    assert dual_step(d, [0.1], [0.0], 1e-4).lambdas[0] == pytest.approx(0.50001, abs=1e-15)
    d = DualState(("pde",), np.array([0.01]))
    assert dual_step(d, [0.0], [1000.0], 1e-4).lambdas[0] == 0.0


def test_primal_step_no_multipliers_no_objective_is_noop():
    m = MLP.glorot([2, 4, 1], seed=0)
    g = ParamGradient([np.ones_like(w) for w in m.weights], [np.ones_like(b) for b in m.biases])
    out = primal_step(m, DualState.zeros(["pde"]), [g], TrainConfig(), 0, Adam(m.n_params))
    np.testing.assert_array_equal(out.flat(), m.flat())


def test_adam_first_step_closed_form():
    g, lr, eps = 0.37, 1e-3, 1e-8
    theta = Adam(1, eps=eps).step(np.array([2.0]), np.array([g]), lr)
    assert theta[0] == pytest.approx(2.0 - lr * g / (abs(g) + eps), rel=1e-15)
    assert theta[0] - 2.0 == pytest.approx(-lr * np.sign(g) * (1 - eps / (abs(g) + eps)), rel=1e-12)


def test_learning_rate_decay_schedule():
    cfg = TrainConfig(lr_primal=1e-3)
    assert cfg.decayed(cfg.lr_primal, 4999) == 1e-3
    assert cfg.decayed(cfg.lr_primal, 5000) == pytest.approx(0.9e-3, rel=1e-15)
    assert cfg.decayed(cfg.lr_primal, 10000) == pytest.approx(0.81e-3, rel=1e-15)


# -- empirical losses -----------------------------------------------------------------------


def test_exact_solution_has_vanishing_losses():
    problem = _small_problem(30.0)
    cons = _conv_constraints()
    samples = draw_samples(exact_field(problem.bvp), problem, cons, seed=0)
    losses = empirical_losses(exact_field(problem.bvp), problem, cons, samples)
    assert np.all(losses < 1e-10)


def test_zero_model_initial_condition_loss():
    problem = Problem.build(bvp.convection(30.0), n_initial=256, n_face=0)
    assert problem.boundary.periodic_lo.shape[0] == 0
    zero = MLP([np.zeros((2, 4)), np.zeros((4, 1))], [np.zeros(4), np.zeros(1)])
    cons = [ConstraintSpec("bc")]
    loss = empirical_losses(zero, problem, cons, draw_samples(zero, problem, cons))[0]
    x = np.linspace(0, 2 * np.pi, 256)
    assert loss == pytest.approx(np.mean(np.sin(x) ** 2), rel=1e-12)
    assert loss == pytest.approx(0.5, abs=0.01)


def test_empty_batch_is_an_error():
    problem = _small_problem()
    m = MLP.glorot([2, 4, 1])
    with pytest.raises(PdesclError):
        empirical_losses(m, problem, [ConstraintSpec("pde", policy="uniform")], {"pde": Batch(np.zeros((0, 2)))})


def test_loss_replayed_from_sample_file_is_bitwise_equal(tmp_path):
    problem = _small_problem(30.0)
    cons = _conv_constraints()
    cfg = TrainConfig(epochs=3, hidden=SMALL, seed=4, dump_epochs=(0,))
    model0 = MLP.glorot([2, *SMALL, 1], seed=4)
    report = train(problem, cons, cfg)
    path = tmp_path / "samples.csv"
    write_samples_csv(path, report.sample_dumps[0]["pde"], ["x", "t"], epoch=0)
    _, _, values = read_samples_csv(path)
    replay = empirical_losses(model0, problem, [cons[1]], {"pde": Batch(values)})[0]
    assert replay == report.losses[0][report.names.index("pde")]


# -- train ----------------------------------------------------------------------------------


def test_zero_epoch_run():
    r = train(_small_problem(), _conv_constraints(), TrainConfig(epochs=0, hidden=SMALL, seed=1))
    assert r.operator_evals == 0 and r.epochs == 0
    assert r.losses.shape[0] == 0 and r.lambdas.shape[0] == 0
    np.testing.assert_array_equal(r.model.flat(), MLP.glorot([2, *SMALL, 1], seed=1).flat())


@pytest.mark.parametrize("policy", ["mh", "uniform", "fixed"])
def test_operator_counter_is_exact(policy):
    cons = _conv_constraints(policy)
    r = train(_small_problem(), cons, TrainConfig(epochs=7, hidden=SMALL))
    per_epoch = 40 if policy == "mh" else 30
    assert r.operator_evals == predicted_operator_evals(cons, 7) == 7 * per_epoch
    if policy == "mh":
        # actual loss evaluations: uniform starts, in-box proposals and the training batch
        assert 7 * (4 + 20) <= r.operator_evals_total <= 7 * (4 + 40 + 20)
    else:
        assert r.operator_evals_total == r.operator_evals


def test_coefficient_grid_counter():
    spec = bvp.convection((1.0, 30.0))
    grid = tuple((float(b),) for b in range(1, 31))
    pde = ConstraintSpec("pde", policy="uniform", batch=1000, coefficient_grid=grid)
    assert predicted_operator_evals([pde], 1) == 30_000
    mh = ConstraintSpec("pde", policy="mh", proposal=ProposalSpec((0.25, 0.01, 9.0), 5000, 2500))
    assert predicted_operator_evals([mh], 1) == 5000
    assert spec.parametric


def test_multipliers_stay_nonnegative_and_complementary_slackness():
    problem = _small_problem(2.0)
    cons = _conv_constraints("uniform", tol=2e-2)
    cfg = TrainConfig(epochs=600, hidden=SMALL, lr_primal=3e-3, lr_dual=5e-2, seed=2)
    r = train(problem, cons, cfg)
    assert np.all(r.lambdas >= 0)
    window = max(1, int(0.05 * r.epochs))
    checked = 0
    for j, name in enumerate(r.multiplier_names):
        i = r.names.index(name)
        tail = r.losses[-window:, i]
        tol = cons[i].tolerance
        if np.all(tail < tol):
            checked += 1
            assert np.all(np.diff(r.lambdas[-window:, j]) <= 0)
    assert checked >= 1


def test_training_is_deterministic():
    cfg = TrainConfig(epochs=5, hidden=SMALL, seed=9)
    a = train(_small_problem(), _conv_constraints(), cfg)
    b = train(_small_problem(), _conv_constraints(), cfg)
    np.testing.assert_array_equal(a.losses, b.losses)
    np.testing.assert_array_equal(a.lambdas, b.lambdas)
    np.testing.assert_array_equal(a.model.flat(), b.model.flat())


def test_feasibility_mode_starts_with_noop_primal_step():
    problem = _small_problem()
    cons = [ConstraintSpec("bc", tolerance=1e-4), ConstraintSpec("pde", tolerance=1e-4, policy="uniform", batch=20)]
    r = train(problem, cons, TrainConfig(epochs=1, hidden=SMALL, seed=3))
    np.testing.assert_array_equal(r.model.flat(), MLP.glorot([2, *SMALL, 1], seed=3).flat())
    assert np.all(r.lambdas[0] > 0)


def test_divergence_guard_aborts_with_diagnostics():
    cfg = TrainConfig(epochs=3, hidden=SMALL, divergence_threshold=1e-12)
    with pytest.raises(TrainingAborted) as info:
        train(_small_problem(), _conv_constraints(), cfg)
    assert info.value.diagnostics["epoch"] == 0
    assert set(info.value.diagnostics["losses"]) == {"bc", "pde"}


def test_invalid_configs_rejected():
    with pytest.raises(ConfigError):
        train(_small_problem(), _conv_constraints(), TrainConfig(lr_primal=-1.0))
    with pytest.raises(ConfigError):
        train(_small_problem(), [ConstraintSpec("bc", role="objective"), ConstraintSpec("pde", role="objective")],
              TrainConfig(epochs=1))
    with pytest.raises(ConfigError):
        train(_small_problem(), [ConstraintSpec("pde", tolerance=-1.0, policy="uniform")], TrainConfig(epochs=1))
    with pytest.raises(ConfigError):
        train(_small_problem(), [ConstraintSpec("pde", policy="mh", proposal=ProposalSpec((1.0,), 10, 5))],
              TrainConfig(epochs=1))


def test_parametric_and_invariance_terms_run():
    spec = bvp.convection((1.0, 30.0))
    problem = Problem.build(spec, n_initial=16, n_face=8)
    cons = [
        ConstraintSpec("bc", role="objective", coefficient_policy="mh", coefficient_variances=(9.0,), coefficient_steps=3),
        ConstraintSpec("pde", tolerance=1e-3, policy="mh", proposal=ProposalSpec((0.25, 0.01, 9.0), 40, 20, 4)),
        ConstraintSpec("invariance", tolerance=1e-3, policy="mh", proposal=ProposalSpec((0.5, 0.1, 9.0), 40, 20, 4)),
    ]
    r = train(problem, cons, TrainConfig(epochs=3, hidden=SMALL))
    assert r.names == ("bc", "pde", "invariance_0")
    assert r.multiplier_names == ("pde", "invariance_0")
    assert r.model.input_width == 3
    assert np.all(np.isfinite(r.losses))


def test_eikonal_structural_term_runs():
    problem = Problem.build(bvp.eikonal(), n_shape=50, n_outer=40)
    cons = [
        ConstraintSpec("bc", role="objective"),
        ConstraintSpec("pde", tolerance=0.5, policy="mh", proposal=ProposalSpec((0.04, 0.04), 40, 20, 4)),
        ConstraintSpec("structural", tolerance=1e-3),
    ]
    r = train(problem, cons, TrainConfig(epochs=2, hidden=SMALL))
    assert r.names[-1] == "structural" and r.losses[0, 2] >= 0


def test_observation_constraints():
    spec = bvp.convection((1.0, 30.0))
    grid = default_grid(spec, 16, 6)
    obs = [Observation(p, grid, f) for p, f in synthesize_observations(spec, [[2.0], [20.0]], grid)]
    problem = Problem.build(spec, observations=obs)
    cons = [ConstraintSpec("observation", tolerance=1e-3, policy="grid", dataset=j) for j in range(2)]
    r = train(problem, cons, TrainConfig(epochs=4, hidden=SMALL, lr_dual=1e-2))
    assert r.multiplier_names == ("observation_0", "observation_1")
    # all multipliers start at zero so the first primal step is a no-op
    assert r.operator_evals == 0


# -- weighted-sum baseline --------------------------------------------------------------------


def _moving_average(v, w):
    return np.convolve(v, np.ones(w) / w, mode="valid")


def test_baseline_without_pde_weight_descends_on_boundary_loss():
    problem = _small_problem(5.0)
    cons = [ConstraintSpec("bc"), ConstraintSpec("pde", policy="uniform", batch=20)]
    cfg = TrainConfig(epochs=600, hidden=SMALL, weights=(("pde", 0.0), ("bc", 100.0), ("ic", 100.0)), seed=0)
    r = pinn_baseline(problem, cons, cfg)
    smooth = _moving_average(r.losses[:, r.names.index("bc")], 100)
    assert np.all(np.diff(smooth) <= 0)


def test_baseline_is_deterministic_and_rejects_mh():
    cons = [ConstraintSpec("bc"), ConstraintSpec("pde", policy="uniform", batch=20)]
    cfg = TrainConfig(epochs=4, hidden=SMALL, weights=(("pde", 1.0), ("bc", 100.0), ("ic", 100.0)))
    a, b = pinn_baseline(_small_problem(), cons, cfg), pinn_baseline(_small_problem(), cons, cfg)
    np.testing.assert_array_equal(a.losses, b.losses)
    np.testing.assert_array_equal(a.model.flat(), b.model.flat())
    assert a.multiplier_names == ()
    with pytest.raises(ConfigError):
        pinn_baseline(_small_problem(), _conv_constraints("mh"), cfg)
