import math

import numpy as np
import pytest

from quasicontact.hierarchy import (
    CorrelationGrid,
    InstabilityError,
    constant_initial,
    evolve_cauchy,
    fit_decay_rate,
    solve_stationary,
    zero_initial,
)
from quasicontact.hierarchy.cauchy import default_dt


class TestScalarRelaxation:
    def test_value_at_t2(self, gaussian_warmup_model):
        traj = evolve_cauchy(gaussian_warmup_model, zero_initial(gaussian_warmup_model, 1), 2.0,
                             dt=1e-3)
        # k1(t) = 1 - exp(-t/2); first-order integrator, error ~ dt kappa (1 - kappa) t / 2
        assert traj.final[0].values[0] == pytest.approx(1 - math.exp(-1), abs=5e-4)

    def test_first_order_convergence(self, gaussian_warmup_model):
        exact = 1 - math.exp(-1)
        errs = []
        for dt in (0.04, 0.02, 0.01):
            traj = evolve_cauchy(gaussian_warmup_model, zero_initial(gaussian_warmup_model, 1),
                                 2.0, dt=dt)
            errs.append(abs(traj.final[0].values[0] - exact))
        assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)
        assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.05)

    def test_norm_is_exponential(self, gaussian_warmup_model):
        traj = evolve_cauchy(gaussian_warmup_model, zero_initial(gaussian_warmup_model, 1), 10.0,
                             dt=1e-3)
        np.testing.assert_allclose(traj.norms[:, 0], np.exp(-0.5 * traj.times), rtol=2e-3)


class TestFixedPoint:
    def test_stationary_start_stays_put(self, marked_model):
        stat, _ = solve_stationary(marked_model, 3)
        traj = evolve_cauchy(marked_model, stat, 10.0, stationary=stat)
        assert traj.norms.max() < 1e-10

    def test_step_condition(self, marked_model):
        with pytest.raises(ValueError):
            evolve_cauchy(marked_model, zero_initial(marked_model, 2), 1.0, dt=1.0)


class TestConvergence:
    def test_pair_rate_with_stationary_k1(self, gaussian_warmup_model):
        m = gaussian_warmup_model
        stat, _ = solve_stationary(m, 2)
        k0 = [stat[0], constant_initial(m, 2, 0.0)[1]]
        traj = evolve_cauchy(m, k0, 12.0, dt=2e-3, stationary=stat)
        rate = traj.decay_rate(2, 5.0, 10.0)
        assert rate >= 2 * (1 - m.kappa) * 0.95

    def test_two_initial_states_meet(self, marked_model):
        stat, _ = solve_stationary(marked_model, 2)
        horizon = 30 / (1 - marked_model.kappa)
        a = evolve_cauchy(marked_model, zero_initial(marked_model, 2), horizon, stationary=stat)
        b = evolve_cauchy(marked_model, constant_initial(marked_model, 2, 5.0), horizon,
                          stationary=stat)
        for ka, kb in zip(a.final, b.final):
            assert np.max(np.abs(ka.values - kb.values)) < 1e-6

    def test_ordered_initial_data_stay_ordered(self, marked_model):
        lo = evolve_cauchy(marked_model, constant_initial(marked_model, 2, 0.5), 3.0,
                           record_every=10)
        hi = evolve_cauchy(marked_model, constant_initial(marked_model, 2, 3.0), 3.0,
                           record_every=10)
        assert lo.snapshots.keys() == hi.snapshots.keys()
        for t in lo.snapshots:
            for a, b in zip(lo.snapshots[t], hi.snapshots[t]):
                assert np.all(a.values <= b.values + 1e-12)


class TestDiagnostics:
    def test_blowup_guard(self, marked_model):
        with pytest.raises(InstabilityError) as info:
            evolve_cauchy(marked_model, constant_initial(marked_model, 2, 50.0), 1.0, blowup=1e-3)
        assert info.value.order >= 1 and info.value.time > 0

    def test_rejects_out_of_order_data(self, marked_model):
        k = CorrelationGrid(2, "marks", np.ones((2, 2)), 2)
        with pytest.raises(ValueError):
            evolve_cauchy(marked_model, [k], 1.0)

    def test_fit_decay_rate(self):
        t = np.linspace(0, 10, 101)
        assert fit_decay_rate(t, 3 * np.exp(-0.7 * t), 2, 8) == pytest.approx(0.7, rel=1e-12)
        with pytest.raises(ValueError):
            fit_decay_rate(t, np.zeros_like(t), 2, 8)

    def test_default_dt(self):
        assert default_dt(3, 0.5) == pytest.approx(0.1 / 4.5)
