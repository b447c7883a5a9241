import math

import numpy as np
import pytest
import scipy.linalg

from ringheat.dynamics import assemble_drift, quadratic_energy
from ringheat.model import DeltaPairCoupling, NonlinearitySpec, SystemParams
from ringheat.simulate import (
    CollocationGrid,
    CurrentEstimate,
    SimConfig,
    chain_generator,
    dump_trajectory,
    estimate_current,
    make_propagator,
    relaxation_time,
    step,
)
from ringheat.stationary import exact_current, stationary_covariance

SPEC = DeltaPairCoupling(c=0.5, x1=1.0)


def _system(M=4, eta=0.3, T1=2.0, T2=1.0):
    return assemble_drift(SystemParams(M=M, eta=eta, T1=T1, T2=T2), SPEC)


class TestSimConfig:
    def test_invariants(self):
        with pytest.raises(ValueError):
            SimConfig(dt=0.0)
        with pytest.raises(ValueError):
            SimConfig(batches=4)
        with pytest.raises(ValueError):
            SimConfig(sample_time=1.0, batches=8, dt=0.5)
        with pytest.raises(ValueError):
            SimConfig(scheme="euler")
        with pytest.raises(ValueError):
            SimConfig(chains=0)

    def test_exact_scheme_rejects_nonlinearity(self):
        ds = _system()
        cfg = SimConfig(dt=0.5, burn_in_time=1.0, sample_time=8.0, batches=8)
        with pytest.raises(ValueError, match="strangSplit"):
            estimate_current(ds, cfg, g=NonlinearitySpec.tanh())


class TestPropagator:
    def test_mean_map_is_matrix_exponential(self):
        ds = _system()
        prop = make_propagator(ds, 0.3)
        assert np.allclose(prop.P, scipy.linalg.expm(ds.A * 0.3), atol=1e-12)

    def test_noise_covariance_quadrature(self):
        """C_dt equals the integral int_0^dt e^{As} Q e^{A^T s} ds."""
        ds = _system(M=2)
        dt = 0.2
        prop = make_propagator(ds, dt)
        s = np.linspace(0, dt, 4001)
        acc = np.zeros_like(ds.Q)
        for si in s:
            E = scipy.linalg.expm(ds.A * si)
            acc += E @ ds.Q @ E.T
        acc *= dt / len(s)
        assert np.allclose(prop.C, acc, atol=1e-5)

    def test_factor_reproduces_covariance(self):
        ds = _system()
        prop = make_propagator(ds, 0.5)
        assert np.allclose(prop.L @ prop.L.T, prop.C, atol=1e-10)

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            make_propagator(_system(), 0.0)

    def test_one_step_increment_covariance_empirical(self):
        """Sample covariance of one-step increments from a fixed state
        matches C_dt (M = 2, 1e5 draws)."""
        ds = _system(M=2)
        prop = make_propagator(ds, 0.4)
        rng = chain_generator(99, 0)
        d = ds.layout.dim
        n = 100_000
        xi = rng.standard_normal((d, n))
        draws = prop.L @ xi
        emp = draws @ draws.T / n
        scale = float(np.trace(prop.C)) / d
        assert np.allclose(emp, prop.C, atol=6 * scale / math.sqrt(n) * 3)


class TestStep:
    def test_deterministic_at_zero_temperature(self):
        ds = assemble_drift(SystemParams(M=3, eta=0.4, T1=0.0, T2=0.0), SPEC)
        prop = make_propagator(ds, 0.25)
        rng = chain_generator(1, 0)
        u = np.zeros(ds.layout.dim)
        u[2] = 1.0
        u2 = step(prop, u, rng)
        assert np.allclose(u2, prop.P @ u)

    def test_energy_nonincreasing_without_noise(self):
        ds = assemble_drift(SystemParams(M=3, eta=0.4, T1=0.0, T2=0.0), SPEC)
        prop = make_propagator(ds, 0.1)
        rng = chain_generator(1, 0)
        u = chain_generator(5, 0).standard_normal(ds.layout.dim)
        energies = [quadratic_energy(ds, u)]
        for _ in range(200):
            u = step(prop, u, rng)
            energies.append(quadratic_energy(ds, u))
        diffs = np.diff(energies)
        assert np.all(diffs <= 1e-12)
        assert energies[-1] < energies[0]

    def test_batched_matches_single(self):
        ds = _system(M=2)
        prop = make_propagator(ds, 0.3)
        u0 = chain_generator(3, 0).standard_normal(ds.layout.dim)
        single = step(prop, u0.copy(), chain_generator(7, 0))
        # same stream drawn with matching shape gives the same column
        batch = step(prop, u0[:, None].copy(), chain_generator(7, 0))
        assert np.allclose(single, batch[:, 0])

    def test_nonlinear_kick_changes_momentum_only(self):
        ds = assemble_drift(SystemParams(M=3, eta=0.4, T1=0.0, T2=0.0), SPEC)
        prop = make_propagator(ds, 0.2)
        grid = CollocationGrid(3)
        g = NonlinearitySpec.tanh(1.0)
        u = np.zeros(ds.layout.dim)
        u[1] = 2.0  # a cos(x) field component
        lin = step(prop, u, chain_generator(0, 0))
        non = step(prop, u, chain_generator(0, 0), ds=ds, g=g, grid=grid)
        assert not np.allclose(lin, non)


class TestCollocation:
    def test_projection_inverts_evaluation(self):
        grid = CollocationGrid(4)
        rng = np.random.default_rng(0)
        coeff = rng.standard_normal(9)
        assert np.allclose(grid.project @ (grid.evaluate @ coeff), coeff, atol=1e-12)

    def test_pointwise_values(self):
        grid = CollocationGrid(2)
        coeff = np.zeros(5)
        coeff[0] = math.sqrt(2 * math.pi)  # constant field phi = 1
        assert np.allclose(grid.evaluate @ coeff, 1.0)


class TestRNG:
    def test_streams_are_distinct_and_deterministic(self):
        a0 = chain_generator(42, 0).standard_normal(8)
        a0_again = chain_generator(42, 0).standard_normal(8)
        a1 = chain_generator(42, 1).standard_normal(8)
        b0 = chain_generator(43, 0).standard_normal(8)
        assert np.array_equal(a0, a0_again)
        assert not np.array_equal(a0, a1)
        assert not np.array_equal(a0, b0)


class TestEstimate:
    def test_equilibrium_mean_near_zero(self):
        ds = _system(M=4, eta=0.5, T1=1.0, T2=1.0)
        cfg = SimConfig(dt=0.5, burn_in_time=100.0, sample_time=6000.0,
                        batches=12, seed=11, chains=4)
        est = estimate_current(ds, cfg)
        assert abs(est.mean) <= 3 * est.stderr

    def test_matches_lyapunov_oracle_loose(self):
        ds = _system(M=4, eta=0.5, T1=2.0, T2=1.0)
        J = exact_current(ds)
        cfg = SimConfig(dt=0.5, burn_in_time=200.0, sample_time=8000.0,
                        batches=16, seed=5, chains=8)
        est = estimate_current(ds, cfg)
        assert abs(est.mean - J) <= 4 * est.stderr

    def test_deterministic_reduction(self):
        ds = _system(M=3, eta=0.5)
        cfg = SimConfig(dt=0.5, burn_in_time=20.0, sample_time=400.0,
                        batches=8, seed=123, chains=3)
        a = estimate_current(ds, cfg)
        b = estimate_current(ds, cfg)
        assert a.mean == b.mean
        assert a.batch_means == b.batch_means

    def test_stderr_scaling_with_sample_time(self):
        """Doubling ladder of averaging times: stderr ~ T^(-1/2)."""
        ds = _system(M=3, eta=0.5)
        times = [1000.0, 2000.0, 4000.0, 8000.0]
        errs = []
        for T in times:
            cfg = SimConfig(dt=0.5, burn_in_time=50.0, sample_time=T,
                            batches=10, seed=2024, chains=4)
            errs.append(estimate_current(ds, cfg).stderr)
        slope = np.polyfit(np.log(times), np.log(errs), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.15)

    def test_decoupled_bath_variance(self):
        """With the field uncoupled (eta -> 0 limit taken by hand on the bath
        block), the OU bath reaches variance T_i / 2; checked by stepping the
        exact propagator of the bath-only subsystem."""
        ds = _system(M=1, eta=0.2, T1=2.0, T2=0.5)
        prop = make_propagator(ds, 0.5)
        # keep only the bath corner: it is exactly the OU pair when eta = 0
        ds0 = assemble_drift(SystemParams(M=1, eta=0.0, T1=2.0, T2=0.5), SPEC)
        prop0 = make_propagator(ds0, 0.5)
        rng = chain_generator(8, 0)
        n, d = 20000, ds0.layout.dim
        U = np.zeros((d, 64))
        for _ in range(n // 64):
            U = prop0.P @ U + prop0.L @ rng.standard_normal((d, 64))
        # after ~150 relaxation times the bath marginals are stationary
        r = U[-2:, :]
        v1, v2 = np.var(r[0]), np.var(r[1])
        assert v1 == pytest.approx(1.0, rel=0.5)
        assert v2 == pytest.approx(0.25, rel=0.5)

    def test_requires_positive_eta(self):
        ds = assemble_drift(SystemParams(M=2, eta=0.0, T1=1.0, T2=1.0), SPEC)
        with pytest.raises(ValueError):
            estimate_current(ds, SimConfig(dt=0.5, burn_in_time=1.0,
                                           sample_time=10.0, batches=8))

    def test_estimate_invariants(self):
        with pytest.raises(ValueError):
            CurrentEstimate(mean=0.0, stderr=0.0, batch_means=[0.0, 1.0],
                            effective_samples=1.0)
        with pytest.raises(ValueError):
            CurrentEstimate(mean=0.0, stderr=1.0, batch_means=[math.nan],
                            effective_samples=1.0)

    def test_json_payload(self):
        est = CurrentEstimate(mean=1.0, stderr=0.1, batch_means=[0.9, 1.1],
                              effective_samples=2.0)
        text = est.to_json()
        assert '"schema": 1' in text and '"mean": 1.0' in text


class TestNonlinearRuns:
    def test_equilibrium_current_vanishes_with_tanh(self):
        """An odd saturating restoring force leaves the equilibrium state
        current-free: the estimate is consistent with zero."""
        ds = assemble_drift(SystemParams(M=3, eta=0.5, T1=1.0, T2=1.0), SPEC)
        cfg = SimConfig(dt=0.1, burn_in_time=100.0, sample_time=3000.0,
                        batches=10, seed=31, chains=4, scheme="strangSplit")
        est = estimate_current(ds, cfg, g=NonlinearitySpec.tanh(0.5))
        assert abs(est.mean) <= 3 * est.stderr


def test_relaxation_time_scale():
    ds = _system(M=4, eta=0.5)
    tau = relaxation_time(ds)
    assert tau > 0 and math.isfinite(tau)
    slower = relaxation_time(_system(M=4, eta=0.25))
    assert slower == pytest.approx(4 * tau)


def test_dump_trajectory(tmp_path):
    ds = _system(M=2, eta=0.5)
    cfg = SimConfig(dt=0.5, burn_in_time=5.0, sample_time=50.0, batches=8, seed=3)
    path = dump_trajectory(str(tmp_path / "traj.csv"), ds, cfg, thin=5)
    lines = open(path).read().splitlines()
    assert lines[0] == "t,current,energy"
    assert len(lines) > 10
    t, j, e = (float(v) for v in lines[1].split(","))
    assert e >= 0 and math.isfinite(j)
