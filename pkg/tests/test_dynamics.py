"""Time steppers, full runs, diagnostics and checkpoints."""

import io
import warnings

import numpy as np
import pytest

from cahnlab.dynamics import (
    IntegrationError,
    SolverConfig,
    certify_dt,
    read_checkpoint,
    run,
    step_local,
    step_nonlocal,
    write_checkpoint,
)
from cahnlab.kernel import build_kernel, normalize_mollifier
from cahnlab.lab import fit_rate, initial_data
from cahnlab.potential import Potential
from cahnlab.torus import Field, TorusGrid, make_grid, norm_H1, norm_H1_dual, norm_L2

P = Potential()


class LinearOnly:
    """Stand-in potential with F' = 0, leaving only the linear part of the update."""

    kind = "none"
    B1 = 0.0

    def F(self, r):
        return np.zeros_like(r)

    def dF(self, r):
        return np.zeros_like(r)

    def params(self):
        return {}


def mode(g, m=1):
    x = g.coordinates()
    return np.cos(2 * np.pi * m * x[0])


class TestSolverConfig:
    @pytest.mark.parametrize(
        "kw,match",
        [
            (dict(dt=0.0), "dt"),
            (dict(dt=-1.0), "dt"),
            (dict(t_end=0.0), "t_end"),
            (dict(dt=0.1, t_end=0.05), "dt"),
            (dict(stabilization=-1.0), "stabilization"),
            (dict(record_every=0), "record_every"),
        ],
    )
    def test_invalid(self, kw, match):
        with pytest.raises(ValueError, match=match):
            SolverConfig(**kw)

    def test_default_stabilization_is_B1(self):
        assert SolverConfig().S(Potential(a=3.0)) == 3.0
        assert SolverConfig(stabilization=0.5).S(Potential(a=3.0)) == 0.5

    def test_n_steps(self):
        assert SolverConfig(dt=1e-5, t_end=0.01).n_steps == 1000


class TestSteppers:
    def setup_method(self):
        self.g = make_grid(1, 64)
        self.K = build_kernel(normalize_mollifier(1.0, 1), 0.1, self.g)

    @pytest.mark.parametrize("value", [0.0, 0.3, 1.0])
    def test_constant_is_fixed_point(self, value):
        u = Field(self.g, np.full(64, value))
        cfg = SolverConfig(dt=1e-3, t_end=1.0)
        for new in (step_local(u, P, cfg), step_nonlocal(u, self.K, P, cfg)):
            assert np.max(np.abs(new.values - value)) < 1e-15

    def test_mean_preserved(self):
        u = initial_data(self.g, "spinodal_noise", seed=3, amplitude=0.2)
        cfg = SolverConfig(dt=1e-4, t_end=1.0)
        m0 = np.mean(u.values)
        assert abs(np.mean(step_local(u, P, cfg).values) - m0) <= 1e-13
        assert abs(np.mean(step_nonlocal(u, self.K, P, cfg).values) - m0) <= 1e-13

    @pytest.mark.parametrize("S", [0.0, 1.0, 7.0])
    def test_linear_decay_local(self, S):
        dt, k = 1e-4, 2 * np.pi * 3
        u = Field(self.g, mode(self.g, 3))
        new = step_local(u, LinearOnly(), SolverConfig(dt=dt, t_end=1.0, stabilization=S))
        factor = (1 + dt * S * k**2) / (1 + dt * k**4 + dt * S * k**2)
        np.testing.assert_allclose(new.values, factor * u.values, atol=1e-14)

    def test_linear_decay_nonlocal(self):
        dt, k = 1e-4, 2 * np.pi * 3
        u = Field(self.g, mode(self.g, 3))
        new = step_nonlocal(u, self.K, LinearOnly(), SolverConfig(dt=dt, t_end=1.0, stabilization=0.0))
        factor = 1 / (1 + dt * k**2 * self.K.symbol[3])
        np.testing.assert_allclose(new.values, factor * u.values, atol=1e-14)

    def test_step_against_explicit_formula(self):
        # the update written out with a full complex FFT and pointwise F'
        u = initial_data(self.g, "spinodal_noise", seed=1, amplitude=0.1)
        dt, S = 1e-4, 1.0
        k = 2 * np.pi * np.fft.fftfreq(64, 1 / 64)
        uh = np.fft.fft(u.values)
        wh = np.fft.fft(P.dF(u.values))
        ref = np.fft.ifft((uh - dt * k**2 * (wh - S * uh)) / (1 + dt * k**4 + dt * S * k**2)).real
        new = step_local(u, P, SolverConfig(dt=dt, t_end=1.0, stabilization=S))
        # the Nyquist entry of k^4 is identical in both layouts
        np.testing.assert_allclose(new.values, ref, atol=1e-14)

    def test_nonlocal_step_tends_to_local(self):
        g = make_grid(1, 512)
        m = normalize_mollifier(1.0, 1)
        u = initial_data(g, "single_mode")
        cfg = SolverConfig(dt=1e-6, t_end=1e-3)
        loc = step_local(u, P, cfg)
        errs = [(e, norm_L2(step_nonlocal(u, build_kernel(m, e, g), P, cfg) - loc))
                for e in (0.2, 0.1, 0.05, 0.025)]
        vals = [v for _, v in errs]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        assert fit_rate(errs) >= 1.5

    def test_grid_mismatch(self):
        u = Field(make_grid(1, 32), np.zeros(32))
        with pytest.raises(ValueError):
            step_nonlocal(u, self.K, P, SolverConfig())

    def test_dealias_removes_high_modes_of_nonlinearity(self):
        u = Field(self.g, 0.5 + 0.4 * mode(self.g, 8))  # cubic term feeds mode 24 > 64/3
        cfg = SolverConfig(dt=1e-6, t_end=1.0, stabilization=0.0, dealias=True)
        new = step_local(u, P, cfg)
        assert np.all(np.isfinite(new.values))
        plain = step_local(u, P, SolverConfig(dt=1e-6, t_end=1.0, stabilization=0.0))
        assert not np.allclose(new.values, plain.values, atol=1e-15, rtol=0)


class TestRun:
    def test_pure_phase_stationary(self):
        g = make_grid(2, 16)
        K = build_kernel(normalize_mollifier(1.0, 2), 0.2, g)
        u0 = Field(g, np.ones(g.shape))
        cfg = SolverConfig(dt=1e-3, t_end=0.1)
        for scheme in ("local", K):
            rep = run(u0, scheme, P, cfg)
            assert np.max(np.abs(rep.final_state.values - 1.0)) <= 1e-12
            assert np.all(rep.energy_total == 0.0)

    def test_report_shapes_and_times(self):
        g = make_grid(1, 64)
        rep = run(initial_data(g), "local", P, SolverConfig(dt=1e-5, t_end=1e-3, record_every=7))
        n = len(rep.times)
        assert len(rep.mass) == len(rep.energy) == len(rep.dual_rate) == len(rep.dissipation) == n
        assert np.all(np.diff(rep.times) > 0)
        assert rep.times[0] == 0.0
        assert rep.times[-1] == pytest.approx(1e-3)
        assert n == 100 // 7 + 2  # step 0, every 7th step, final step
        assert rep.scheme == "local" and rep.eps is None

    def test_dual_rate_is_dual_norm_of_difference_quotient(self):
        g = make_grid(1, 64)
        u0 = initial_data(g, "spinodal_noise", amplitude=0.1)
        cfg = SolverConfig(dt=1e-5, t_end=1e-4, record_every=1)
        rep = run(u0, "local", P, cfg)
        u1 = step_local(u0, P, cfg)
        assert rep.dual_rate[0] == pytest.approx(norm_H1_dual((u1 - u0) * (1 / cfg.dt)), rel=1e-12)

    @pytest.mark.parametrize("dim,n", [(1, 128), (3, 16)])
    def test_spinodal_mass_and_energy(self, dim, n):
        g = TorusGrid(dim, n)
        K = build_kernel(normalize_mollifier(1.0, dim), 0.2, g)
        u0 = initial_data(g, "spinodal_noise", seed=2)
        cfg = SolverConfig(dt=1e-5, t_end=5e-3, record_every=25)
        for scheme in ("local", K):
            rep = run(u0, scheme, P, cfg)
            assert rep.max_mass_drift <= 1e-12
            assert np.max(np.abs(rep.mass - rep.mass[0])) <= 1e-12
            assert rep.max_energy_increase <= 1e-10
            assert rep.first_energy_violation is None
            assert np.all(np.diff(rep.step_energy) <= 1e-10)

    def test_energy_identity_defect_small_and_shrinking(self):
        g = make_grid(1, 64)
        u0 = initial_data(g, "spinodal_noise", seed=0, amplitude=0.1)
        defects = []
        for dt in (4e-6, 2e-6):
            rep = run(u0, "local", P, SolverConfig(dt=dt, t_end=2e-3, record_every=50))
            e = rep.energy_total
            assert rep.dissipation[-1] + e[-1] <= e[0] * 1.05
            defects.append(rep.energy_identity_defect)
        assert defects[0] >= 0 and defects[1] >= 0
        assert defects[1] < defects[0]

    def test_shared_code_path_bit_for_bit(self):
        g = make_grid(1, 64)
        u0 = initial_data(g, "tanh_interface")
        cfg = SolverConfig(dt=1e-5, t_end=1e-3)
        a = run(u0, "local", P, cfg)
        b = run(u0, np.array(g.k2), P, cfg)
        assert np.array_equal(a.final_state.values, b.final_state.values)
        assert np.array_equal(a.energy_total, b.energy_total)

    def test_self_convergence_under_refinement(self):
        # (n, dt) and (2n, dt/4) against a (4n, dt/16) reference, compared on the coarse nodes
        dt, T = 4e-4, 0.02
        finals = []
        for n, step in ((32, dt), (64, dt / 4), (128, dt / 16)):
            g = make_grid(1, n)
            rep = run(initial_data(g, "single_mode"), "local", P,
                      SolverConfig(dt=step, t_end=T, record_every=10**6))
            finals.append(rep.final_state.values)
        ref = finals[2][::4]
        coarse = make_grid(1, 32)
        e1 = norm_H1(Field(coarse, finals[0] - ref))
        e2 = norm_H1(Field(coarse, finals[1][::2] - ref))
        assert e1 / e2 >= 3.0

    def test_blowup_detected(self):
        g = make_grid(1, 32)
        u0 = initial_data(g, "spinodal_noise", amplitude=0.5)
        cfg = SolverConfig(dt=1.0, t_end=200.0, stabilization=0.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            with pytest.raises(IntegrationError) as info:
                run(u0, "local", Potential(a=1e4), cfg)
        assert info.value.kind == "blowup"
        assert info.value.step >= 1

    def test_log_domain_exit_reported(self):
        # a single spike on a low background undershoots zero after one step
        g = make_grid(1, 64)
        u = np.full(64, 0.01)
        u[32] = 0.9
        with pytest.raises(IntegrationError) as info:
            run(Field(g, u), "local", Potential("logarithmic"), SolverConfig(dt=1e-7, t_end=2e-6))
        assert info.value.kind == "domain"
        assert info.value.step == 1

    def test_log_domain_initial_data(self):
        g = make_grid(1, 32)
        with pytest.raises(IntegrationError) as info:
            run(initial_data(g, amplitude=0.6), "local", Potential("logarithmic"),
                SolverConfig(dt=1e-5, t_end=1e-4))
        assert info.value.kind == "domain"
        assert info.value.step == 0

    def test_strict_energy_raises_on_first_violation(self):
        g = make_grid(1, 64)
        u0 = initial_data(g, "spinodal_noise")
        loose = SolverConfig(dt=1.0, t_end=20.0, stabilization=0.0)
        rep = run(u0, "local", Potential(a=100.0), loose)
        assert rep.first_energy_violation is not None
        strict = SolverConfig(dt=1.0, t_end=20.0, stabilization=0.0, strict_energy=True)
        with pytest.raises(IntegrationError) as info:
            run(u0, "local", Potential(a=100.0), strict)
        assert info.value.kind == "energy"
        assert info.value.step == rep.first_energy_violation

    def test_certify_dt(self):
        g = make_grid(1, 64)
        u0 = initial_data(g, "spinodal_noise")
        p = Potential(a=100.0)
        cfg = SolverConfig(stabilization=0.0)
        dt = certify_dt(u0, "local", p, cfg, dt_hi=1e-2, iters=10, steps=40)
        assert 0 < dt < 1e-2
        rep = run(u0, "local", p, SolverConfig(dt=dt, t_end=40 * dt, stabilization=0.0))
        assert rep.first_energy_violation is None

    def test_csv_round_trip(self):
        g = make_grid(1, 32)
        rep = run(initial_data(g), "local", P, SolverConfig(dt=1e-5, t_end=1e-4, record_every=2))
        buf = io.StringIO()
        rep.write_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "t,mass,interaction,potential,energy,dual_rate,dissipation"
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        np.testing.assert_array_equal(data[:, 4], rep.energy_total)
        np.testing.assert_array_equal(data[:, 0], rep.times)


class TestCheckpoint:
    @pytest.mark.parametrize("dim,n", [(1, 32), (3, 8)])
    def test_round_trip(self, tmp_path, dim, n):
        g = TorusGrid(dim, n, 2.0)
        u = Field(g, np.random.default_rng(0).standard_normal(g.shape))
        path = tmp_path / "c.bin"
        write_checkpoint(path, u, 0.125, "nonlocal", 0.05, P)
        back, header = read_checkpoint(path)
        assert back.grid == g
        np.testing.assert_array_equal(back.values, u.values)
        assert float(header["t"]) == 0.125
        assert header["scheme"] == "nonlocal"
        assert float(header["eps"]) == 0.05
        assert header["potential"] == "shifted_quartic"

    def test_payload_is_little_endian_float64(self, tmp_path):
        g = make_grid(1, 8)
        u = Field(g, np.arange(8.0))
        path = tmp_path / "c.bin"
        write_checkpoint(path, u, 0.0)
        raw = path.read_bytes()
        payload = raw[raw.index(b"end_header\n") + len(b"end_header\n"):]
        np.testing.assert_array_equal(np.frombuffer(payload, "<f8"), np.arange(8.0))

    def test_resume_reproduces_single_run(self, tmp_path):
        g = make_grid(1, 64)
        u0 = initial_data(g, "spinodal_noise", seed=4)
        whole = run(u0, "local", P, SolverConfig(dt=1e-5, t_end=2e-3))
        half = run(u0, "local", P, SolverConfig(dt=1e-5, t_end=1e-3))
        write_checkpoint(tmp_path / "c.bin", half.final_state, half.times[-1])
        u_mid, header = read_checkpoint(tmp_path / "c.bin")
        rest = run(u_mid, "local", P, SolverConfig(dt=1e-5, t_end=2e-3), t0=float(header["t"]))
        assert rest.times[-1] == pytest.approx(2e-3)
        np.testing.assert_array_equal(rest.final_state.values, whole.final_state.values)

    def test_corrupt_files_rejected(self, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"not a checkpoint\n")
        with pytest.raises(ValueError):
            read_checkpoint(bad)
        g = make_grid(1, 8)
        write_checkpoint(tmp_path / "c.bin", Field(g, np.zeros(8)), 0.0)
        raw = (tmp_path / "c.bin").read_bytes()
        (tmp_path / "short.bin").write_bytes(raw[:-8])
        with pytest.raises(ValueError):
            read_checkpoint(tmp_path / "short.bin")
