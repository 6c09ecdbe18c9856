import json
import math

import numpy as np
import pytest
from scipy.linalg import expm

from tsfbench.data import load_csv
from tsfbench.ode import (
    DIMS,
    SYSTEM_NAMES,
    IntegrationError,
    IntegratorConfig,
    OdeSystem,
    _rk4,
    channel_surrogate,
    eval_rhs,
    generate_benchmark,
    integrate,
    load_benchmark,
    make_system,
    perturbed_init,
    rk4_step,
)


def pendulum_matrix(g=9.81, l=1.0):
    k = g / l
    return np.array([[0, 0, 1, 0], [0, 0, 0, 1], [-2 * k, k, 0, 0], [2 * k, -2 * k, 0, 0]], float)


class TestRhs:
    def test_lorenz_origin_equilibrium(self):
        assert eval_rhs(make_system("Lorenz"), [0, 0, 0]).tolist() == [0, 0, 0]

    def test_lorenz_hand_value(self):
        d = eval_rhs(make_system("Lorenz"), [1, 1, 1])
        assert np.allclose(d, [0.0, 26.0, -5.0 / 3.0], rtol=0, atol=1e-15)

    def test_coupled_lorenz_reduces_to_two_copies(self):
        s = make_system("LorenzCoupled", eps=0.0)
        state = [1.0, 2.0, 3.0, -1.0, 0.5, 7.0]
        single = make_system("Lorenz")
        d = eval_rhs(s, state)
        assert np.allclose(d[:3], eval_rhs(single, state[:3]))
        assert np.allclose(d[3:], eval_rhs(single, state[3:]))

    def test_coupling_term(self):
        a = eval_rhs(make_system("LorenzCoupled", eps=0.3), [1, 0, 0, 3, 0, 0])
        b = eval_rhs(make_system("LorenzCoupled", eps=0.0), [1, 0, 0, 3, 0, 0])
        assert math.isclose(a[0] - b[0], 0.6) and math.isclose(a[3] - b[3], -0.6)

    def test_pendulum_zero_state(self):
        for lin in (0.0, 1.0):
            assert eval_rhs(make_system("DoublePendulum", linearized=lin), [0] * 4).tolist() == [0] * 4

    def test_pendulum_linearization_is_small_angle_limit(self):
        state = np.array([1e-6, -2e-6, 0.0, 0.0])
        nonlin = eval_rhs(make_system("DoublePendulum"), state)
        lin = pendulum_matrix() @ state
        assert np.allclose(nonlin, lin, rtol=1e-6, atol=1e-16)

    def test_cell_cycle_zero_state(self):
        s = make_system("CellCycle", time_scale=1.0)
        assert eval_rhs(s, [0] * 6)[0] == s.params["v_i1"]

    def test_cell_cycle_singular_denominator(self):
        s = make_system("CellCycle", K_d1=-0.5)
        with pytest.raises(IntegrationError, match="K_d1"):
            eval_rhs(s, [0.5, 0, 0.1, 0, 0, 0])

    def test_hopfield_weights_in_params(self):
        s = make_system("Hopfield", w00=0.0, w01=0.0, w02=0.0, w03=0.0, w04=0.0, w05=0.0)
        assert eval_rhs(s, [0.7, 0, 0, 0, 0, 0])[0] == pytest.approx(-0.7)

    def test_rotlet_clock_channel(self):
        s = make_system("BlinkingRotlet")
        d = eval_rhs(s, [0.0, 0.0, 0.0], t=0.0)
        assert d[2] == pytest.approx(s.params["omega"])

    def test_state_length_checked(self):
        with pytest.raises(ValueError):
            eval_rhs(make_system("Lorenz"), [0, 0])


class TestSystem:
    @pytest.mark.parametrize("name", SYSTEM_NAMES)
    def test_dims(self, name):
        s = make_system(name)
        assert s.dim == DIMS[name] == len(s.init)

    def test_dims_match_benchmark_channels(self):
        assert DIMS == {"Lorenz": 3, "LorenzCoupled": 6, "DoublePendulum": 4, "CellCycle": 6,
                        "Hopfield": 6, "BlinkingRotlet": 3}

    def test_init_override(self):
        assert make_system("Lorenz", init=(1, 2, 3)).init == (1.0, 2.0, 3.0)
        with pytest.raises(ValueError):
            make_system("Lorenz", init=(1, 2))

    def test_unknown_override(self):
        with pytest.raises(ValueError):
            make_system("Lorenz", gamma=1.0)

    def test_missing_params(self):
        with pytest.raises(ValueError, match="missing"):
            OdeSystem("Lorenz", 3, {"sigma": 10.0}, (1.0, 1.0, 1.0))

    def test_wrong_dim(self):
        with pytest.raises(ValueError):
            OdeSystem("Lorenz", 4, make_system("Lorenz").params, (1.0, 1.0, 1.0, 1.0))


class TestRk4:
    def test_decay_hand_value(self):
        y = _rk4(lambda s, t, p: [-s[0]], {}, [1.0], 0.0, 0.1)
        assert abs(y[0] - 0.90483750) < 1e-8

    def test_zero_rhs_unchanged(self):
        s = make_system("DoublePendulum", linearized=1.0)
        state = np.zeros(4)
        assert rk4_step(s, state, 0.0, 0.05).tolist() == [0.0] * 4

    def test_divergence_reported(self):
        s = make_system("Lorenz", sigma=1e308)
        with pytest.raises(IntegrationError):
            rk4_step(s, [1e10, -1e10, 0.0], 0.0, 0.05)

    def test_dt_positive(self):
        with pytest.raises(ValueError):
            rk4_step(make_system("Lorenz"), [1, 1, 1], 0.0, 0.0)

    def test_linear_pendulum_matches_matrix_exponential(self):
        # small-angle start: the regime the linear equations describe
        s = make_system("DoublePendulum", linearized=1.0, init=(0.02, 0.024, 0.0, 0.0))
        cfg = IntegratorConfig(dt=0.05, steps=201, transient_steps=0, perturbation=0.0)
        traj = integrate(s, cfg).values
        A = pendulum_matrix()
        y0 = np.array(s.init)
        exact = np.stack([expm(A * n * 0.05) @ y0 for n in range(201)], axis=1)
        assert np.max(np.abs(traj - exact)) < 1e-4

    def test_fourth_order_convergence(self):
        s = make_system("DoublePendulum", linearized=1.0)
        A, y0 = pendulum_matrix(), np.array(s.init)
        errs = []
        for dt in (0.04, 0.02):
            n = int(round(1.0 / dt))
            traj = integrate(s, IntegratorConfig(dt=dt, steps=n + 1, transient_steps=0,
                                                 perturbation=0.0)).values
            errs.append(np.max(np.abs(traj[:, -1] - expm(A) @ y0)))
        assert 12 < errs[0] / errs[1] < 20


class TestIntegrate:
    def test_default_shape(self):
        cfg = IntegratorConfig()
        assert (cfg.dt, cfg.steps, cfg.transient_steps) == (0.05, 60000, 1000)

    def test_short_run_shape_and_dt(self):
        ts = integrate(make_system("Lorenz"), IntegratorConfig(steps=10))
        assert ts.values.shape == (3, 10) and ts.dt == 0.05

    def test_deterministic(self):
        cfg = IntegratorConfig(steps=300)
        a = integrate(make_system("Hopfield"), cfg).values
        b = integrate(make_system("Hopfield"), cfg).values
        assert np.array_equal(a, b)

    def test_seed_changes_output(self):
        a = integrate(make_system("Lorenz"), IntegratorConfig(steps=50, seed=1)).values
        b = integrate(make_system("Lorenz"), IntegratorConfig(steps=50, seed=2)).values
        assert not np.array_equal(a, b)

    def test_perturbation_relative(self):
        s = make_system("Lorenz")
        init = np.array(perturbed_init(s, 7, 1e-3))
        rel = np.abs(init - s.init) / np.abs(s.init)
        assert np.all(rel <= 1e-3) and np.any(rel > 0)

    def test_transient_discarded(self):
        s = make_system("Lorenz")
        long = integrate(s, IntegratorConfig(steps=30, transient_steps=0)).values
        short = integrate(s, IntegratorConfig(steps=10, transient_steps=20)).values
        assert np.array_equal(long[:, 20:], short)

    def test_lorenz_bounded(self):
        v = integrate(make_system("Lorenz"), IntegratorConfig(steps=5000)).values
        assert np.all(np.abs(v[:2]) < 100) and np.all((v[2] > 0) & (v[2] < 100))

    def test_divergence_has_step_index(self):
        s = make_system("Lorenz", rho=1e6, sigma=1e6)
        with pytest.raises(IntegrationError, match="step"):
            integrate(s, IntegratorConfig(steps=2000, transient_steps=0))

    @pytest.mark.parametrize("name", ["CellCycle", "Hopfield", "BlinkingRotlet", "DoublePendulum"])
    def test_systems_stay_bounded(self, name):
        v = integrate(make_system(name), IntegratorConfig(steps=1500)).values
        assert np.all(np.isfinite(v)) and np.all(v.std(axis=1) > 1e-3)

    def test_surrogate_channels_come_from_their_seeds(self):
        s = make_system("Lorenz")
        cfg = IntegratorConfig(steps=20)
        sur = channel_surrogate(s, cfg, [5, 6, 7])
        for c, seed in enumerate([5, 6, 7]):
            run = integrate(s, IntegratorConfig(steps=20, seed=seed))
            assert np.array_equal(sur.values[c], run.values[c])


class TestBenchmark:
    def test_generate_round_trip(self, tmp_path):
        cfg = IntegratorConfig(steps=40, transient_steps=5)
        manifest = generate_benchmark(tmp_path, cfg)
        assert len(manifest["datasets"]) == 6
        on_disk = json.loads((tmp_path / "manifest.json").read_text())
        assert on_disk == manifest
        for entry in manifest["datasets"]:
            ts = load_csv(tmp_path / entry["file"], has_time_column=True)
            assert ts.n_channels == entry["dim"] and ts.n_steps == 40
            for key in ("name", "dim", "dt", "steps", "transient_steps", "seed", "params"):
                assert key in entry
        header = (tmp_path / "Lorenz.csv").read_text().splitlines()[0]
        assert header == "t,ch0,ch1,ch2"

    def test_csv_values_exact(self, tmp_path):
        s = make_system("Lorenz")
        cfg = IntegratorConfig(steps=25)
        generate_benchmark(tmp_path, cfg, [s])
        loaded = load_benchmark(tmp_path)["Lorenz"]
        assert np.array_equal(loaded.values, integrate(s, cfg).values)
        t = [float(r.split(",")[0]) for r in (tmp_path / "Lorenz.csv").read_text().splitlines()[1:]]
        assert t[3] == 3 * 0.05

    def test_seed_change_alters_every_file(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        generate_benchmark(a, IntegratorConfig(steps=30, seed=1))
        generate_benchmark(b, IntegratorConfig(steps=30, seed=2))
        for name in SYSTEM_NAMES:
            assert (a / f"{name}.csv").read_bytes() != (b / f"{name}.csv").read_bytes()
