"""Oscillator dynamics: fixed points, locking, Euler convergence.

Expected steady-state values come from an independent polynomial
root-finder, never from the integrator under test.
"""

from dataclasses import replace

import numpy as np
import pytest

from oscnet.dynamics import (
    HopfLayerConfig,
    OscillatorState,
    hopf_step_am,
    hopf_step_fm,
    hopf_step_resonator,
    init_state,
    initial_frequencies,
    initial_phases,
    reference_simulate,
    resonance_sweep,
    simulate,
    state_output,
)
from oscnet.errors import ConfigError, DivergenceError


def forced_equilibrium_radius(mu, beta, force):
    """Positive real root of mu*r + beta*r^3 + F = 0 (phase-locked
    steady state at zero detuning), via numpy's polynomial solver."""
    roots = np.roots([beta, 0.0, mu, force])
    real = roots[np.abs(roots.imag) < 1e-9].real
    pos = real[real > 0]
    assert pos.size == 1
    return float(pos[0])


def slow_config(**kw):
    """Low natural frequency so the Euler rotation bias stays tiny."""
    base = dict(width=1, mode="resonator", mu0=1.0, beta=-1.0,
                omega_init_range=(0.15, 0.15), dt=1e-3)
    base.update(kw)
    return HopfLayerConfig(**base)


# ---------------------------------------------------------------------------
# config validation
# ---------------------------------------------------------------------------

def test_config_rejects_bad_regime():
    with pytest.raises(ConfigError):
        HopfLayerConfig(width=1, beta=0.5)
    with pytest.raises(ConfigError):
        HopfLayerConfig(width=1, mu0=-0.1)


def test_config_rejects_coarse_dt():
    with pytest.raises(ConfigError) as exc:
        HopfLayerConfig(width=1, omega_init_range=(1.0, 10.0), dt=0.01)
    assert "dt" in str(exc.value)


def test_config_warns_marginal_dt():
    # dt*2*pi*f_hi = 0.31 rad: legal but coarse
    with pytest.warns(RuntimeWarning):
        HopfLayerConfig(width=1, omega_init_range=(1.0, 5.0), dt=0.01)


def test_config_am_positivity():
    with pytest.raises(ConfigError) as exc:
        HopfLayerConfig(width=1, mode="amplitude_mod", mu0=0.5, kappa=1.0,
                        omega_init_range=(1.0, 1.0), dt=1e-3,
                        input_range=(-1.0, 1.0))
    assert "mu0 + kappa" in str(exc.value)
    # declared non-negative inputs make the same settings legal
    HopfLayerConfig(width=1, mode="amplitude_mod", mu0=0.5, kappa=1.0,
                    omega_init_range=(1.0, 1.0), dt=1e-3,
                    input_range=(0.0, 1.0))


def test_config_reports_all_problems_at_once():
    with pytest.raises(ConfigError) as exc:
        HopfLayerConfig(width=-1, beta=1.0, r_init=0.0,
                        omega_init_range=(1.0, 1.0), dt=1e-3)
    assert len(exc.value.problems) == 3


def test_initial_draws_deterministic():
    c = slow_config(width=16, theta_init_seed=7)
    np.testing.assert_array_equal(initial_phases(c), initial_phases(c))
    np.testing.assert_array_equal(initial_frequencies(c),
                                  initial_frequencies(c))
    th = initial_phases(c)
    assert th.shape == (16,) and np.all((0 <= th) & (th < 2 * np.pi))


# ---------------------------------------------------------------------------
# step functions
# ---------------------------------------------------------------------------

def test_resonator_dt_zero_is_identity():
    c = slow_config()
    s = init_state(c)
    z_in = np.array([0.3 + 0.1j])
    s2 = hopf_step_resonator(s, z_in, c, dt=0.0)
    np.testing.assert_array_equal(s2.z, s.z)


def test_polar_dt_zero_is_identity():
    c = slow_config(mode="amplitude_mod", input_range=(0.0, 1.0))
    s = init_state(c)
    s2 = hopf_step_am(s, np.array([0.5]), c, dt=0.0)
    np.testing.assert_array_equal(s2.r, s.r)
    np.testing.assert_array_equal(s2.theta, s.theta)
    c2 = slow_config(mode="frequency_mod")
    s3 = hopf_step_fm(init_state(c2), np.array([0.5]), c2, dt=0.0)
    np.testing.assert_array_equal(s3.r, init_state(c2).r)


def test_resonator_divergence_names_oscillator_and_step():
    c = slow_config(width=2)
    s = init_state(c)
    s = OscillatorState(omega=s.omega, z=s.z, step=16)
    with pytest.raises(DivergenceError) as exc:
        hopf_step_resonator(s, np.array([0.0, np.nan]), c)
    assert "oscillator 1" in str(exc.value)
    assert "step 17" in str(exc.value)


def test_unforced_radius_reaches_limit_cycle():
    # r* = sqrt(mu/|beta|) = 1; slow rotation keeps the Euler radius
    # bias well under the 1e-3 tolerance at dt=1e-3
    for r0 in (0.1, 2.0):
        c = slow_config(r_init=r0)
        out = simulate(c, np.zeros((1, 20000)))
        assert abs(abs(out[0, -1]) - 1.0) < 1e-3


def test_forced_amplitude_matches_root_oracle():
    # natural frequency exactly 1 Hz, driven at 1 Hz (zero detuning)
    c = HopfLayerConfig(width=1, mode="resonator", mu0=1.0, beta=-100.0,
                        omega_init_range=(1.0, 1.0), dt=1e-3)
    t = np.arange(30000) * c.dt
    drive = 0.2 * np.exp(2j * np.pi * t)[None, :]
    out = simulate(c, drive)
    target = forced_equilibrium_radius(1.0, -100.0, 0.2)
    settled = np.abs(out[0, -3000:])
    assert abs(settled.mean() - target) < 2e-3
    assert np.ptp(settled) < 1e-4


def test_am_constant_input_fixed_point():
    # mu(t) = 1 + 0.5 = 1.5, fixed point r* = sqrt(1.5); the polar Euler
    # map shares the exact fixed point, so convergence is tight
    c = HopfLayerConfig(width=1, mode="amplitude_mod", mu0=1.0, beta=-1.0,
                        kappa=1.0, omega_init_range=(1.0, 1.0), dt=1e-3,
                        input_range=(0.0, 1.0))
    out = simulate(c, np.full((1, 20000), 0.5))
    assert abs(abs(out[0, -1]) - np.sqrt(1.5)) < 1e-9


def test_am_ignores_imaginary_input():
    c = HopfLayerConfig(width=2, mode="amplitude_mod", mu0=1.0, beta=-1.0,
                        omega_init_range=(0.5, 1.0), dt=1e-3,
                        input_range=(0.0, 0.0))
    zeros = np.zeros((2, 500))
    imag_only = 1j * np.random.default_rng(0).normal(size=(2, 500))
    np.testing.assert_array_equal(simulate(c, zeros), simulate(c, imag_only))


def test_am_theta_advances_at_omega():
    c = HopfLayerConfig(width=3, mode="amplitude_mod", mu0=1.0, beta=-1.0,
                        omega_init_range=(0.5, 1.5), dt=1e-3,
                        input_range=(0.0, 0.0))
    omega = initial_frequencies(c)
    theta0 = initial_phases(c)
    T = 1000
    out = simulate(c, np.zeros((3, T)))
    expect = np.exp(1j * (theta0 + T * c.dt * omega))
    np.testing.assert_allclose(out[:, -1] / np.abs(out[:, -1]), expect,
                               rtol=0, atol=1e-9)


def test_am_sinusoidal_input_modulates_radius():
    c = HopfLayerConfig(width=1, mode="amplitude_mod", mu0=1.0, beta=-1.0,
                        kappa=0.5, omega_init_range=(1.0, 1.0), dt=0.01,
                        input_range=(-1.0, 1.0))
    f_in = 1.0
    fn = lambda t: np.array([0.8 * np.sin(2 * np.pi * f_in * t)])
    n = 800
    out = simulate(c, fn, n_steps=n)
    r = np.abs(out[0, n // 2:])
    # radius rides around the unforced fixed point at the input frequency
    assert abs(r.mean() - 1.0) < 0.05
    spec = np.abs(np.fft.rfft(r - r.mean()))
    freqs = np.fft.rfftfreq(r.size, d=c.dt)
    assert abs(freqs[spec.argmax()] - f_in) < 0.15
    # and tracks a 100x finer integration closely
    ref = reference_simulate(c, fn, n)
    assert np.max(np.abs(out - ref)) < 5e-3


def test_fm_zero_input_equals_unforced():
    c_fm = HopfLayerConfig(width=2, mode="frequency_mod", mu0=1.0, beta=-1.0,
                           omega_init_range=(0.5, 1.0), dt=1e-3)
    c_am = replace(c_fm, mode="amplitude_mod", input_range=(0.0, 0.0))
    zeros = np.zeros((2, 2000))
    np.testing.assert_array_equal(simulate(c_fm, zeros), simulate(c_am, zeros))


def test_fm_constant_input_shifts_rate():
    c = HopfLayerConfig(width=1, mode="frequency_mod", mu0=1.0, beta=-1.0,
                        kappa=2.0, omega_init_range=(1.0, 1.0), dt=1e-3)
    omega = initial_frequencies(c)[0]
    theta0 = initial_phases(c)[0]
    cval = 0.3
    state = init_state(c)
    T = 500
    for _ in range(T):
        state = hopf_step_fm(state, np.array([cval]), c)
    expect = theta0 + T * c.dt * (omega + c.kappa * cval)
    assert abs(state.theta[0] - expect) < 1e-10


def test_fm_zero_mean_input_preserves_mean_rate():
    c = HopfLayerConfig(width=1, mode="frequency_mod", mu0=1.0, beta=-1.0,
                        kappa=3.0, omega_init_range=(1.0, 1.0), dt=1e-3)
    omega = initial_frequencies(c)[0]
    theta0 = initial_phases(c)[0]
    # two exact periods of a sampled sine sum to zero
    T = 2000
    fn = lambda t: np.array([np.sin(2 * np.pi * t / 1.0)])
    state = init_state(c)
    for k in range(T):
        state = hopf_step_fm(state, fn(k * c.dt), c)
    assert abs(state.theta[0] - (theta0 + T * c.dt * omega)) < 1e-8


def test_resonator_rotational_covariance():
    # rotating the initial state and the input by e^{i alpha} rotates the
    # whole trajectory by e^{i alpha}
    c = HopfLayerConfig(width=3, mode="resonator", mu0=1.0, beta=-1.0,
                        kappa=0.7, omega_init_range=(0.5, 1.5), dt=0.01)
    rng = np.random.default_rng(8)
    z0 = 0.2 * np.exp(1j * rng.uniform(0, 2 * np.pi, 3))
    inp = 0.5 * (rng.normal(size=(3, 40)) + 1j * rng.normal(size=(3, 40)))
    alpha = np.exp(1j * 1.234)
    omega = initial_frequencies(c)
    a = OscillatorState(omega=omega, z=z0.copy())
    b = OscillatorState(omega=omega, z=alpha * z0)
    for t in range(40):
        a = hopf_step_resonator(a, inp[:, t], c)
        b = hopf_step_resonator(b, alpha * inp[:, t], c)
        np.testing.assert_allclose(b.z, alpha * a.z, rtol=0, atol=1e-10)


# ---------------------------------------------------------------------------
# Euler convergence (first order) against a dt/100 reference
# ---------------------------------------------------------------------------

def _convergence_ratio(config, input_fn, duration):
    errs = []
    for cfg in (config, replace(config, dt=config.dt / 2)):
        n = int(round(duration / cfg.dt))
        sim = simulate(cfg, input_fn, n_steps=n)
        ref = reference_simulate(cfg, input_fn, n)
        errs.append(np.max(np.abs(sim - ref)))
    return errs[1] / errs[0]


@pytest.mark.parametrize("mode", ["resonator", "amplitude_mod",
                                  "frequency_mod"])
def test_euler_error_halves_with_dt(mode):
    kw = dict(width=2, mu0=1.0, beta=-1.0, kappa=0.4, dt=0.02,
              omega_init_range=(0.8, 1.2), theta_init_seed=3)
    if mode == "amplitude_mod":
        kw["input_range"] = (-1.0, 1.0)
    c = HopfLayerConfig(mode=mode, **kw)

    def fn(t):
        base = np.sin(2 * np.pi * 0.7 * t) + 0.3 * np.cos(2 * np.pi * 1.3 * t)
        return np.array([0.5 * base, -0.4 * base]) * (1.0 + 0.2j)

    ratio = _convergence_ratio(c, fn, duration=3.0)
    assert 0.4 <= ratio <= 0.6, "error ratio %.3f not first-order" % ratio


# ---------------------------------------------------------------------------
# resonance sweep
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def sweep():
    grid = np.linspace(-6.0, 6.0, 41)
    return resonance_sweep(mu0=1.0, beta=-100.0, force=0.2,
                           domega_grid=grid, dt=1e-3, n_steps=40000)


def test_sweep_peak_at_zero_detuning(sweep):
    center = np.argmin(np.abs(sweep["domega"]))
    assert sweep["amplitude"].argmax() == center
    target = forced_equilibrium_radius(1.0, -100.0, 0.2)
    assert abs(sweep["amplitude"][center] - target) < 2e-3


def test_sweep_locks_inside_band_slips_outside(sweep):
    center = np.argmin(np.abs(sweep["domega"]))
    assert sweep["locked"][center]
    assert not sweep["slipped"][center]
    for edge in (0, -1):  # Omega = +/- 6 rad/s
        assert sweep["slipped"][edge]
        assert not sweep["locked"][edge]
    assert not sweep["diverged"].any()


def test_sweep_amplitude_decays_to_unforced_radius(sweep):
    amp = sweep["amplitude"]
    center = np.argmin(np.abs(sweep["domega"]))
    locked = sweep["locked"]
    # monotone fall-off within the locked band on both sides of the peak
    idx = np.where(locked)[0]
    left = idx[idx <= center]
    right = idx[idx >= center]
    assert np.all(np.diff(amp[left]) >= -1e-6)
    assert np.all(np.diff(amp[right]) <= 1e-6)
    # far off resonance the oscillator keeps its own limit cycle
    assert abs(amp[0] - 0.1) < 0.01
    assert abs(amp[-1] - 0.1) < 0.01


def test_sweep_settles_inside_band(sweep):
    # near the band edges critical slowing keeps the amplitude drifting,
    # which is exactly what the settled flag is for; well inside the
    # band everything converges
    inner = np.abs(sweep["domega"]) <= 2.0
    assert sweep["settled"][inner].all()
    assert sweep["locked"][inner].all()


def test_sweep_flags_divergent_rows():
    # a numerically explosive configuration: huge dt forces divergence
    res = resonance_sweep(mu0=1.0, beta=-100.0, force=0.2,
                          domega_grid=[0.0, 400.0], dt=0.5, n_steps=200)
    assert res["diverged"].any()
    assert not res["locked"][res["diverged"]].any()


# ---------------------------------------------------------------------------
# rollout plumbing
# ---------------------------------------------------------------------------

def test_simulate_checks_width():
    c = slow_config(width=2)
    with pytest.raises(ConfigError):
        simulate(c, np.zeros((3, 10)))


def test_simulate_callable_needs_step_count():
    c = slow_config()
    with pytest.raises(ValueError):
        simulate(c, lambda t: np.zeros(1))


def test_state_output_polar():
    s = OscillatorState(omega=np.array([1.0]), r=np.array([2.0]),
                        theta=np.array([np.pi / 2]))
    np.testing.assert_allclose(state_output(s), [2.0j], atol=1e-12)
