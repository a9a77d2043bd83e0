import math
import struct

import numpy as np
import pytest
from scipy import stats

from exitwalk.specfun import BesselIndex
from exitwalk.samplers import RngStream
from exitwalk.bessel_hitting import (
    MovingBoundary,
    SpectralSeriesCache,
    invert_cdf,
    moving_sphere_param_a,
    psi,
)
from exitwalk.walkers import (
    EXIT_MODES,
    BatchResult,
    ExitSample,
    SphereDomain,
    StepBudgetError,
    Tau1Table,
    WalkState,
    WosDeps,
    euler_batch,
    euler_run,
    precompute_table,
    read_table,
    woms_batch,
    woms_run,
    woms_step,
    wos_batch,
    wos_run,
    wos_step,
    write_table,
)

DISK = SphereDomain(radius=1.0, delta=2)


class TestSphereDomain:
    def test_distance(self):
        assert DISK.distance_to_boundary(np.array([0.6, 0.0])) == pytest.approx(0.4)

    def test_validation(self):
        with pytest.raises(ValueError):
            SphereDomain(radius=0.0, delta=2)
        with pytest.raises(ValueError):
            SphereDomain(radius=1.0, delta=1)


class TestWomsStep:
    def test_displacement_is_psi_of_elapsed_increment(self):
        state = WalkState(position=np.array([0.3, 0.1]))
        rng = RngStream(5, 1)
        new = woms_step(state, DISK, 0.99, rng)
        d = DISK.distance_to_boundary(state.position)
        a = moving_sphere_param_a(d, 0.99, DISK.index)
        r = new.elapsed - state.elapsed
        expected = psi(r, MovingBoundary(a, DISK.index))
        assert np.linalg.norm(new.position - state.position) == pytest.approx(expected, rel=1e-12)
        assert expected <= 0.99 * d
        assert new.steps == 1

    def test_dimension_two_reduction_replays_three_uniforms(self):
        state = WalkState(position=np.array([0.2, -0.4]))
        rng = RngStream(8, 3)
        new = woms_step(state, DISK, 0.9, rng)

        replay = RngStream(8, 3)
        u, v = replay.uniform_oc((1, 2))[0]
        w = replay.generator.random()
        d = DISK.distance_to_boundary(state.position)
        a = 0.9**2 * math.e / 2.0 * d * d
        r = a * u * v
        disp = math.sqrt(2.0 * r * math.log(a / r))
        expected = state.position + disp * np.array([math.cos(2 * math.pi * w), math.sin(2 * math.pi * w)])
        assert new.position == pytest.approx(expected, rel=1e-12)
        assert new.elapsed == pytest.approx(r, rel=1e-12)

    def test_small_gamma_caps_displacement(self):
        rng = RngStream(9)
        state = WalkState(position=np.array([0.5, 0.0]))
        for _ in range(200):
            new = woms_step(state, DISK, 0.01, rng)
            d = DISK.distance_to_boundary(state.position)
            assert np.linalg.norm(new.position - state.position) <= 0.01 * d + 1e-15

    def test_intermediate_positions_stay_strictly_inside(self):
        rng = RngStream(30)
        state = WalkState(position=np.array([0.5, 0.0]))
        while np.linalg.norm(state.position) < 1.0 - 1e-4:
            state = woms_step(state, DISK, 0.99, rng)
            assert np.linalg.norm(state.position) < 1.0


class TestWomsRun:
    def test_immediate_return_inside_shell(self):
        x0 = np.array([0.999999, 0.0])
        out = woms_run(x0, DISK, 1e-5, 0.99, RngStream(1))
        assert out.steps == 0
        assert out.exit_time == 0.0
        assert np.array_equal(out.exit_position, x0)
        assert np.linalg.norm(out.projected_position) == pytest.approx(1.0, abs=1e-14)

    def test_terminates_in_shell(self):
        out = woms_run(np.array([0.5, 0.0]), DISK, 1e-4, 0.99, RngStream(2))
        norm = np.linalg.norm(out.exit_position)
        assert 1.0 - 1e-4 <= norm < 1.0
        assert out.steps > 0
        assert out.exit_time > 0.0

    def test_mean_exit_time_small_sample(self):
        times = np.array(
            [woms_run(np.array([0.5, 0.0]), DISK, 1e-4, 0.99, RngStream(3, i)).exit_time
             for i in range(4000)]
        )
        tol = 3.0 * times.std(ddof=1) / math.sqrt(times.size)
        assert abs(times.mean() - 0.375) < tol

    def test_step_budget(self):
        with pytest.raises(StepBudgetError) as err:
            woms_run(np.array([0.5, 0.0]), DISK, 1e-12, 0.99, RngStream(4), max_steps=3)
        assert isinstance(err.value.state, WalkState)
        assert err.value.state.steps == 3

    def test_rejects_outside_start(self):
        with pytest.raises(ValueError):
            woms_run(np.array([1.5, 0.0]), DISK, 1e-4, 0.99, RngStream(5))


class TestWomsBatch:
    def test_matches_scalar_runner_statistically(self):
        batch = woms_batch(np.array([0.5, 0.0]), DISK, 1e-4, 0.99, RngStream(6), 50_000)
        scalar_times = np.array(
            [woms_run(np.array([0.5, 0.0]), DISK, 1e-4, 0.99, RngStream(7, i)).exit_time
             for i in range(4000)]
        )
        se = math.hypot(
            batch.exit_times.std(ddof=1) / math.sqrt(batch.exit_times.size),
            scalar_times.std(ddof=1) / math.sqrt(scalar_times.size),
        )
        assert abs(batch.exit_times.mean() - scalar_times.mean()) < 3.0 * se

    def test_exit_norms_in_shell(self):
        batch = woms_batch(np.array([0.5, 0.0]), DISK, 1e-4, 0.99, RngStream(8), 20_000)
        norms = np.linalg.norm(batch.exit_positions, axis=1)
        assert np.all(norms >= 1.0 - 1e-4)
        assert np.all(norms < 1.0)

    @pytest.mark.parametrize("delta", [3, 5])
    def test_higher_dimensions_mean_exit_time(self, delta):
        # from the center, the mean exit time of the unit sphere is 1/delta
        dom = SphereDomain(1.0, delta)
        batch = woms_batch(np.zeros(delta), dom, 1e-4, 0.99, RngStream(9, delta), 100_000)
        tol = 3.0 * batch.exit_times.std(ddof=1) / math.sqrt(batch.exit_times.size)
        assert abs(batch.exit_times.mean() - 1.0 / delta) < tol


class TestWosStep:
    def test_position_only_keeps_clock_at_zero(self):
        deps = WosDeps.for_mode("position_only", DISK)
        state = WalkState(position=np.array([0.2, 0.2]))
        for _ in range(5):
            state = wos_step(state, DISK, "position_only", deps, RngStream(10, state.steps))
        assert state.elapsed == 0.0
        assert state.steps == 5

    def test_jump_lands_on_inscribed_sphere(self):
        deps = WosDeps.for_mode("position_only", DISK)
        state = WalkState(position=np.array([0.3, -0.1]))
        r = DISK.distance_to_boundary(state.position)
        new = wos_step(state, DISK, "position_only", deps, RngStream(11))
        assert np.linalg.norm(new.position - state.position) == pytest.approx(r, rel=1e-14)
        assert np.linalg.norm(new.position) <= 1.0 + 1e-12

    def test_inversion_increment_is_r_squared_times_tau1(self):
        deps = WosDeps.for_mode("inversion", DISK)
        state = WalkState(position=np.array([0.5, 0.0]))
        rng = RngStream(12, 4)
        new = wos_step(state, DISK, "inversion", deps, rng)

        replay = RngStream(12, 4)
        replay.generator.random()  # direction angle draw
        u = float(np.clip(replay.generator.random(), 1e-300, np.nextafter(1.0, 0.0)))
        tau1 = invert_cdf(u, deps.cache)
        assert new.elapsed == pytest.approx(0.25 * tau1, rel=1e-12)

    def test_table_mode_without_table_errors(self):
        with pytest.raises(ValueError):
            WosDeps.for_mode("table", DISK)

    def test_table_dimension_mismatch(self):
        table = Tau1Table(delta=3, samples=np.array([0.5, 1.0]), provenance="inversion")
        with pytest.raises(ValueError):
            WosDeps.for_mode("table", DISK, table=table)

    def test_unknown_mode(self):
        deps = WosDeps.for_mode("position_only", DISK)
        with pytest.raises(ValueError):
            wos_step(WalkState(position=np.zeros(2)), DISK, "bogus", deps, RngStream(1))


class TestWosRun:
    def test_immediate_return(self):
        x0 = np.array([0.0, 1.0 - 1e-6])
        deps = WosDeps.for_mode("position_only", DISK)
        out = wos_run(x0, DISK, 1e-5, "position_only", deps, RngStream(13))
        assert out.steps == 0 and out.exit_time == 0.0

    def test_harmonic_identity_small_sample(self):
        # f(x, y) = x^2 - y^2 is harmonic: E f(exit) = f(x0)
        deps = WosDeps.for_mode("position_only", DISK)
        batch = wos_batch(np.array([0.3, 0.4]), DISK, 1e-5, "position_only", deps, RngStream(14), 100_000)
        proj = batch.projected_positions(1.0)
        f = proj[:, 0] ** 2 - proj[:, 1] ** 2
        tol = 3.0 * f.std(ddof=1) / math.sqrt(f.size)
        assert abs(f.mean() - (0.3**2 - 0.4**2)) < tol

    def test_exit_time_agrees_with_woms(self):
        deps = WosDeps.for_mode("inversion", DISK)
        wos = wos_batch(np.array([0.5, 0.0]), DISK, 1e-4, "inversion", deps, RngStream(15, 0), 50_000)
        woms = woms_batch(np.array([0.5, 0.0]), DISK, 1e-4, 0.99, RngStream(15, 1), 50_000)
        se = math.hypot(
            wos.exit_times.std(ddof=1) / math.sqrt(wos.exit_times.size),
            woms.exit_times.std(ddof=1) / math.sqrt(woms.exit_times.size),
        )
        assert abs(wos.exit_times.mean() - woms.exit_times.mean()) < 3.0 * se

    def test_inversion_mode_half_integer_dimension(self):
        # odd-dimension inversion draws exercise half-integer series orders;
        # from (0.4, 0, 0) the exact mean exit time is (1 - 0.16) / 3
        dom = SphereDomain(1.0, 3)
        deps = WosDeps.for_mode("inversion", dom)
        res = wos_batch(np.array([0.4, 0.0, 0.0]), dom, 1e-4, "inversion", deps, RngStream(2025), 50_000)
        want = (1.0 - 0.16) / 3.0
        tol = 3.0 * res.exit_times.std(ddof=1) / math.sqrt(res.exit_times.size)
        assert abs(res.exit_times.mean() - want) < tol


class TestRotationalUniformity:
    def test_exit_angles_uniform_from_center(self):
        deps = WosDeps.for_mode("position_only", DISK)
        batch = wos_batch(np.zeros(2), DISK, 1e-5, "position_only", deps, RngStream(16), 100_000)
        angles = np.arctan2(batch.exit_positions[:, 1], batch.exit_positions[:, 0])
        counts, _ = np.histogram(angles, bins=36, range=(-math.pi, math.pi))
        expected = batch.exit_positions.shape[0] / 36
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        assert stats.chi2.sf(chi2, 35) > 0.001

    def test_woms_exit_angles_uniform_from_center(self):
        batch = woms_batch(np.zeros(2), DISK, 1e-5, 0.99, RngStream(17), 100_000)
        angles = np.arctan2(batch.exit_positions[:, 1], batch.exit_positions[:, 0])
        counts, _ = np.histogram(angles, bins=36, range=(-math.pi, math.pi))
        expected = batch.exit_positions.shape[0] / 36
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        assert stats.chi2.sf(chi2, 35) > 0.001


class TestEuler:
    def test_immediate_return_outside(self):
        out = euler_run(np.array([1.2, 0.0]), DISK, 1e-3, RngStream(18))
        assert out.steps == 0 and out.exit_time == 0.0
        assert np.linalg.norm(out.exit_position) == pytest.approx(1.0, abs=1e-14)

    def test_exit_time_is_step_multiple(self):
        out = euler_run(np.array([0.5, 0.0]), DISK, 1e-3, RngStream(19))
        assert out.exit_time == pytest.approx(out.steps * 1e-3, rel=1e-12)
        assert np.linalg.norm(out.exit_position) == pytest.approx(1.0, abs=1e-12)

    def test_overestimates_and_converges(self):
        coarse = euler_batch(np.array([0.5, 0.0]), DISK, 1e-2, RngStream(20, 0), 100_000)
        fine = euler_batch(np.array([0.5, 0.0]), DISK, 1e-4, RngStream(20, 1), 100_000)
        assert coarse.exit_times.mean() > 0.375  # discrete monitoring bias
        assert abs(fine.exit_times.mean() - 0.375) < abs(coarse.exit_times.mean() - 0.375)

    def test_batch_times_are_h_times_steps(self):
        batch = euler_batch(np.array([0.5, 0.0]), DISK, 1e-2, RngStream(21), 2000)
        assert np.allclose(batch.exit_times, 1e-2 * batch.steps)

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            euler_run(np.array([0.5, 0.0]), DISK, 0.0, RngStream(22))


class TestTau1Table:
    def test_round_trip_bit_exact(self, tmp_path):
        samples = RngStream(23).generator.random(1000) + 0.01
        table = Tau1Table(delta=2, samples=samples, provenance="inversion")
        path = tmp_path / "tau.bin"
        write_table(table, path)
        loaded = read_table(path)
        assert loaded.delta == 2
        assert loaded.provenance == "inversion"
        assert np.array_equal(loaded.samples, table.samples)
        write_table(loaded, tmp_path / "tau2.bin")
        assert (tmp_path / "tau.bin").read_bytes() == (tmp_path / "tau2.bin").read_bytes()

    def test_file_layout(self, tmp_path):
        samples = np.array([0.25, 1.5])
        table = Tau1Table(delta=3, samples=samples, provenance="euler")
        path = tmp_path / "tau.bin"
        write_table(table, path)
        raw = path.read_bytes()
        assert raw[:8] == b"EXWTAU01"
        version, dim = struct.unpack_from("<II", raw, 8)
        assert (version, dim) == (1, 3)
        assert raw[16] == 1  # euler provenance tag
        assert raw[17:24] == b"\x00" * 7
        (count,) = struct.unpack_from("<Q", raw, 24)
        assert count == 2
        assert np.frombuffer(raw[32:], dtype="<f8").tolist() == [0.25, 1.5]

    def test_rejects_corrupt_files(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 24)
        with pytest.raises(ValueError):
            read_table(path)
        path.write_bytes(b"EXW")
        with pytest.raises(ValueError):
            read_table(path)

    def test_rejects_nonpositive_samples(self):
        with pytest.raises(ValueError):
            Tau1Table(delta=2, samples=np.array([0.5, 0.0]), provenance="euler")


class TestPrecomputeTable:
    def test_inversion_mean_is_half(self):
        table = precompute_table(100_000, 2, "inversion", RngStream(24))
        tol = 3.0 * table.samples.std(ddof=1) / math.sqrt(table.count)
        assert abs(table.samples.mean() - 0.5) < tol

    def test_euler_mean_coarse(self):
        table = precompute_table(20_000, 2, "euler", RngStream(25), h=1e-3)
        # discrete monitoring overestimates by O(sqrt(h)) ~ 0.02 here
        mean = table.samples.mean()
        assert 0.5 < mean < 0.56

    def test_table_mode_run_uses_samples(self):
        table = precompute_table(1000, 2, "inversion", RngStream(26))
        deps = WosDeps.for_mode("table", DISK, table=table)
        out = wos_run(np.array([0.5, 0.0]), DISK, 1e-3, "table", deps, RngStream(27))
        assert out.exit_time > 0.0

    def test_bad_method(self):
        with pytest.raises(ValueError):
            precompute_table(10, 2, "exact", RngStream(28))
